//! Regenerates the synthetic fixture corpus.
//!
//! `cargo run -p hearsim --example make_fixture -- <lexicon> <output_dir>`

use std::path::PathBuf;

use anyhow::{Context, Result};
use hearsim::fixture::{write_fixture_corpus, FIXTURE_WORDS};
use hearsim_core::Lexicon;

fn main() -> Result<()> {
    let mut args = std::env::args_os().skip(1).map(PathBuf::from);
    let lexicon = args
        .next()
        .context("usage: make_fixture <lexicon> <output_dir>")?;
    let out = args
        .next()
        .context("usage: make_fixture <lexicon> <output_dir>")?;
    let lex = Lexicon::load(&lexicon)?;
    let manifest = write_fixture_corpus(&out, &FIXTURE_WORDS, &lex)?;
    println!(
        "wrote {} words to {}",
        FIXTURE_WORDS.len(),
        manifest.display()
    );
    Ok(())
}
