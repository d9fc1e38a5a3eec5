use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use hearsim_core::asr::{
    build_backend, output_pronunciation, TranscriptionRequest, CLEAN, NORMAL_HEARING,
};
use hearsim_core::confusion::{
    articulation_projection, matrix_of, ranked_projection, read_dataset, round1, symbol_str,
    write_dataset, write_matrix_csv, ArticulationClass, ArticulationMap, ConfusionMatrix,
    ConfusionRecord, EditKind, FrequencyRelevance, RelevanceMap,
};
use hearsim_core::corpus::{load_recordings, read_manifest as read_corpus};
use hearsim_core::curation::{
    annotate_relevance, curate, read_battery, relevance_distribution, write_battery, CandidatePair,
    DistractorSource, ERROR_KINDS,
};
use hearsim_core::diagnostics::{
    item_distances, pairwise_auc, read_item_diagnostics, roc_analysis, select_diagnostic,
    simulate_cohort, write_item_diagnostics, AssessSetup, CohortRun, Group, ItemDiagnostics,
    ResponseModel,
};
use hearsim_core::dsp::{
    design_hl_filter, prepare_stimulus, read_wav, rms_normalize, write_wav, AudioBuffer, Audiogram,
    FirFilter, CANONICAL_SAMPLE_RATE,
};
use hearsim_core::edit::{levenshtein, word_distance};
use hearsim_core::lexicon::clean_token;
use hearsim_core::phoneme::syllable_count;
use hearsim_core::seed::{derive, hash_str};
use hearsim_core::Lexicon;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{CohortModel, Reference, Resolved};
use crate::manifest::{digest_tree, require_upstream, write_manifest, StageManifest};

const TOP_N: usize = 20;
const HISTOGRAM_BIN_PP: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Degrade,
    Transcribe,
    Analyze,
    Curate,
    Assess,
    Simulate,
    Roc,
    Report,
    Serve,
}

impl Stage {
    /// Every stage that writes artifacts, in execution order.
    pub const PIPELINE: [Stage; 8] = [
        Stage::Degrade,
        Stage::Transcribe,
        Stage::Analyze,
        Stage::Curate,
        Stage::Assess,
        Stage::Simulate,
        Stage::Roc,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Degrade => "degrade",
            Stage::Transcribe => "transcribe",
            Stage::Analyze => "analyze",
            Stage::Curate => "curate",
            Stage::Assess => "assess",
            Stage::Simulate => "simulate",
            Stage::Roc => "roc",
            Stage::Report => "report",
            Stage::Serve => "serve",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::PIPELINE
            .into_iter()
            .chain([Stage::Serve])
            .find(|st| st.name() == s)
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub struct Pipeline {
    pub resolved: Resolved,
    pub force: bool,
}

/// Collects upstream hashes, warnings and skip counts while a stage runs.
struct StageRun<'a> {
    pipeline: &'a Pipeline,
    stage: Stage,
    dir: PathBuf,
    inputs: BTreeMap<String, String>,
    warnings: Vec<String>,
    total: usize,
    skipped: usize,
}

impl<'a> StageRun<'a> {
    fn start(pipeline: &'a Pipeline, stage: Stage) -> Result<Self> {
        let dir = pipeline.output_dir().join(stage.name());
        if dir.exists() {
            std::fs::remove_dir_all(&dir).with_context(|| format!("clearing {}", dir.display()))?;
        }
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            pipeline,
            stage,
            dir,
            inputs: BTreeMap::new(),
            warnings: Vec::new(),
            total: 0,
            skipped: 0,
        })
    }

    fn upstream(&mut self, stage: Stage) -> Result<PathBuf> {
        let (dir, m) = require_upstream(
            &self.pipeline.output_dir(),
            stage.name(),
            &self.pipeline.resolved.hash,
            self.pipeline.force,
        )?;
        self.inputs.insert(stage.name().to_string(), m.config_hash);
        Ok(dir)
    }

    fn warn(&mut self, message: String) {
        tracing::warn!(stage = self.stage.name(), "{message}");
        self.warnings.push(message);
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn finish(self) -> Result<StageManifest> {
        let manifest = StageManifest {
            stage: self.stage.name().to_string(),
            config_hash: self.pipeline.resolved.hash.clone(),
            seed: self.pipeline.seed(),
            inputs: self.inputs,
            files: digest_tree(&self.dir)?,
            total: self.total,
            skipped: self.skipped,
            warnings: self.warnings,
        };
        write_manifest(&self.dir, &manifest)?;
        Ok(manifest)
    }
}

impl Pipeline {
    pub fn new(resolved: Resolved, force: bool) -> Self {
        Self { resolved, force }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolved.config.output_dir.clone()
    }

    fn seed(&self) -> u64 {
        self.resolved.config.seed
    }

    fn lexicon(&self) -> Result<Arc<Lexicon>> {
        let path = &self.resolved.config.lexicon;
        Ok(Arc::new(Lexicon::load(path).with_context(|| {
            format!("loading lexicon {}", path.display())
        })?))
    }

    fn listener_filter(&self, audiogram: &Audiogram) -> Result<FirFilter<f64>> {
        Ok(design_hl_filter(
            audiogram,
            CANONICAL_SAMPLE_RATE,
            self.resolved.config.stimulus.num_taps,
        )?)
    }

    /// Runs one stage. `serve` blocks until interrupted and returns no manifest.
    pub fn run(&self, stage: Stage) -> Result<Option<StageManifest>> {
        tracing::info!("stage {stage}");
        let m = match stage {
            Stage::Degrade => self.degrade()?,
            Stage::Transcribe => self.transcribe()?,
            Stage::Analyze => self.analyze()?,
            Stage::Curate => self.curate()?,
            Stage::Assess => self.assess()?,
            Stage::Simulate => self.simulate()?,
            Stage::Roc => self.roc()?,
            Stage::Report => self.report()?,
            Stage::Serve => {
                self.serve()?;
                return Ok(None);
            }
        };
        Ok(Some(m))
    }

    pub fn run_all(&self) -> Result<Vec<StageManifest>> {
        Stage::PIPELINE
            .into_iter()
            .map(|s| {
                self.run(s)
                    .map(|m| m.expect("pipeline stages write manifests"))
            })
            .collect()
    }

    fn conditions(&self, audiograms: &[Audiogram]) -> Vec<Condition> {
        let mut out = vec![Condition {
            label: CLEAN.to_string(),
            snr_db: None,
            audiogram: None,
        }];
        for &snr in &self.resolved.config.snr_levels {
            out.push(Condition {
                label: format!("{NORMAL_HEARING}@{snr}dB"),
                snr_db: Some(snr),
                audiogram: None,
            });
            for (i, g) in audiograms.iter().enumerate() {
                out.push(Condition {
                    label: format!("HL-{}@{snr}dB", path_safe(g.name())),
                    snr_db: Some(snr),
                    audiogram: Some(i),
                });
            }
        }
        out
    }

    fn degrade(&self) -> Result<StageManifest> {
        let mut run = StageRun::start(self, Stage::Degrade)?;
        let cfg = &self.resolved.config;
        let lex = self.lexicon()?;
        let audiograms = self.resolved.audiograms()?;
        let filters: Vec<FirFilter<f64>> = audiograms
            .iter()
            .map(|g| self.listener_filter(g))
            .collect::<Result<_>>()?;
        let conditions = self.conditions(&audiograms);

        let entries = read_corpus(&cfg.corpus_manifest)
            .with_context(|| format!("reading corpus {}", cfg.corpus_manifest.display()))?;
        let mut words: BTreeSet<String> = BTreeSet::new();
        for e in &entries {
            words.insert(e.word.clone());
        }
        run.total = words.len();
        let (known, unknown): (Vec<_>, Vec<_>) =
            entries.into_iter().partition(|e| lex.contains(&e.word));
        for w in unknown.iter().map(|e| &e.word).collect::<BTreeSet<_>>() {
            run.warn(format!("{w:?} is not in the lexicon; skipped"));
            run.skipped += 1;
        }
        let recordings = load_recordings(&known)?;

        let audio_dir = run.path("audio");
        for c in &conditions {
            std::fs::create_dir_all(audio_dir.join(&c.label))?;
        }
        let rows: Vec<StimulusRow> = recordings
            .par_iter()
            .map(|(word, speech)| -> Result<Vec<StimulusRow>> {
                let mut rows = Vec::with_capacity(conditions.len());
                for c in &conditions {
                    let audio = match c.snr_db {
                        None => rms_normalize(speech, cfg.stimulus.level_dbfs)?,
                        Some(snr) => prepare_stimulus(
                            speech,
                            &cfg.stimulus.mix(snr),
                            cfg.stimulus.level_dbfs,
                            derive(self.seed(), &[hash_str(word), hash_str(&c.label)]),
                            c.audiogram.map(|i| &filters[i]),
                        )?,
                    };
                    let rel = format!("audio/{}/{word}.wav", c.label);
                    write_wav(&audio, &run.dir.join(&rel))?;
                    rows.push(StimulusRow {
                        word: word.clone(),
                        condition: c.label.clone(),
                        snr_db: c.snr_db,
                        audiogram: c
                            .audiogram
                            .map(|i| audiograms[i].name().to_string())
                            .unwrap_or_default(),
                        path: rel,
                    });
                }
                Ok(rows)
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .collect();
        write_csv(&run.path("stimuli.csv"), &rows)?;
        run.finish()
    }

    fn transcribe(&self) -> Result<StageManifest> {
        let mut run = StageRun::start(self, Stage::Transcribe)?;
        let degrade = run.upstream(Stage::Degrade)?;
        let lex = self.lexicon()?;
        let backend = build_backend(&self.resolved.config.backend, lex.clone())?;
        let stimuli: Vec<StimulusRow> = read_csv(&degrade.join("stimuli.csv"))?;

        let rows: Vec<TranscriptRow> = stimuli
            .par_iter()
            .map(|s| {
                let outcome = (|| -> Result<(String, String)> {
                    let audio: AudioBuffer<f64> =
                        read_wav(&degrade.join(&s.path), Some(CANONICAL_SAMPLE_RATE))?;
                    let raw = backend.transcribe(&TranscriptionRequest {
                        audio: &audio,
                        condition_label: &s.condition,
                        word: Some(&s.word),
                        seed: self.seed(),
                    })?;
                    let normalized = if clean_token(&raw).is_empty() {
                        String::new()
                    } else {
                        lex.lexical_normalize(&raw)?
                    };
                    Ok((raw, normalized))
                })();
                let (raw, normalized, status) = match outcome {
                    Ok((r, n)) => (r, n, "ok".to_string()),
                    Err(e) => (String::new(), String::new(), format!("error: {e:#}")),
                };
                TranscriptRow {
                    word: s.word.clone(),
                    condition: s.condition.clone(),
                    snr_db: s.snr_db,
                    audiogram: s.audiogram.clone(),
                    raw,
                    normalized,
                    status,
                }
            })
            .collect();
        run.total = rows.len();
        for r in rows.iter().filter(|r| r.status != "ok") {
            run.skipped += 1;
            let message = format!("{} under {}: {}", r.word, r.condition, r.status);
            run.warn(message);
        }
        write_csv(&run.path("transcripts.csv"), &rows)?;
        run.finish()
    }

    fn analyze(&self) -> Result<StageManifest> {
        let mut run = StageRun::start(self, Stage::Analyze)?;
        let transcribe = run.upstream(Stage::Transcribe)?;
        let lex = self.lexicon()?;
        let rows: Vec<TranscriptRow> = read_csv(&transcribe.join("transcripts.csv"))?;
        let reference = self.resolved.config.analysis.reference;

        let clean: HashMap<&str, &TranscriptRow> = rows
            .iter()
            .filter(|r| r.condition == CLEAN)
            .map(|r| (r.word.as_str(), r))
            .collect();
        let mut hl = Vec::new();
        let mut nh = Vec::new();
        let mut skipped_words = BTreeSet::new();
        for r in rows.iter().filter(|r| r.condition != CLEAN) {
            run.total += 1;
            let ref_word = match reference {
                Reference::GroundTruth => Some(r.word.clone()),
                Reference::CleanAsr => clean
                    .get(r.word.as_str())
                    .filter(|c| c.status == "ok" && !c.normalized.is_empty())
                    .map(|c| c.normalized.clone()),
            };
            let Some(ref_word) = ref_word else {
                run.skipped += 1;
                skipped_words.insert(r.word.clone());
                continue;
            };
            if r.status != "ok" {
                run.skipped += 1;
                continue;
            }
            let ref_pron = lex.require(&ref_word)?.clone();
            let hyp_pron = output_pronunciation(&r.raw, &lex)?;
            let record = ConfusionRecord::new(
                &r.word,
                &r.condition,
                ref_word,
                r.normalized.clone(),
                ref_pron,
                hyp_pron,
            );
            if r.audiogram.is_empty() {
                nh.push(record);
            } else {
                hl.push(record);
            }
        }
        for w in skipped_words {
            run.warn(format!(
                "no usable clean transcription for {w:?}; its conditions were skipped"
            ));
        }
        if hl.is_empty() {
            bail!("no hearing-loss transcriptions survived; check the transcribe stage output");
        }

        write_dataset(&run.path("dataset.csv"), &hl)?;
        write_dataset(&run.path("dataset_nh.csv"), &nh)?;
        let matrix = matrix_of(&hl, true);
        write_matrix_csv(&run.path("matrix.csv"), &matrix)?;
        write_json(
            &run.path("error_distribution.json"),
            &matrix.error_distribution(),
        )?;
        write_top_confusions(&run.path("top_confusions.csv"), &matrix)?;
        write_articulation(&run.path("articulation.csv"), &matrix)?;

        let mut by_condition: BTreeMap<&str, Vec<&ConfusionRecord>> = BTreeMap::new();
        for r in nh.iter().chain(&hl) {
            by_condition
                .entry(r.condition.as_str())
                .or_default()
                .push(r);
        }
        let mut w = csv::Writer::from_path(run.path("per_condition.csv"))?;
        w.write_record([
            "condition",
            "words",
            "substitutions",
            "deletions",
            "insertions",
            "reference_phonemes",
            "phoneme_error_rate",
            "word_accuracy",
        ])?;
        for (cond, recs) in by_condition {
            let owned: Vec<ConfusionRecord> = recs.iter().map(|r| (*r).clone()).collect();
            let m = matrix_of(&owned, true);
            let n_ref: usize = recs.iter().map(|r| r.clean_phonemes.len()).sum();
            let errors = m.total(EditKind::Substitution)
                + m.total(EditKind::Deletion)
                + m.total(EditKind::Insertion);
            let correct = recs.iter().filter(|r| r.hl_word == r.clean_word).count();
            w.write_record([
                cond.to_string(),
                recs.len().to_string(),
                m.total(EditKind::Substitution).to_string(),
                m.total(EditKind::Deletion).to_string(),
                m.total(EditKind::Insertion).to_string(),
                n_ref.to_string(),
                format!("{:.4}", errors as f64 / n_ref.max(1) as f64),
                format!("{:.4}", correct as f64 / recs.len() as f64),
            ])?;
        }
        w.flush()?;
        run.finish()
    }

    fn curate(&self) -> Result<StageManifest> {
        let mut run = StageRun::start(self, Stage::Curate)?;
        let analyze = run.upstream(Stage::Analyze)?;
        let lex = self.lexicon()?;
        let cfg = &self.resolved.config;
        let records = read_dataset(&analyze.join("dataset.csv"))?;
        let mut curation = curate(&records, &lex, &cfg.curation)?;
        if let Some(path) = &cfg.relevance_map {
            let map = RelevanceMap::load(path)?;
            annotate_relevance(&mut curation.pairs, &map)?;
        }
        run.total = cfg.curation.total_items;
        for w in curation.warnings.clone() {
            run.warn(w);
        }

        write_battery(&run.path("battery.csv"), &curation.pairs)?;
        let counts: BTreeMap<&str, usize> = ERROR_KINDS
            .iter()
            .map(|&k| (k.name(), curation.count(k)))
            .collect();
        let targets: BTreeMap<&str, usize> = curation
            .targets
            .iter()
            .map(|(k, &v)| (k.name(), v))
            .collect();
        let relevance: BTreeMap<&str, usize> = relevance_distribution(&curation.pairs)
            .into_iter()
            .map(|(k, v)| (k.name(), v))
            .collect();
        write_json(
            &run.path("curation.json"),
            &json!({
                "items": curation.pairs.len(),
                "targets": targets,
                "counts": counts,
                "phase1_quota": cfg.curation.phase1_quota(),
                "relevance": relevance,
                "sources": source_counts(&curation.pairs),
                "warnings": curation.warnings,
            }),
        )?;
        let mut w = csv::Writer::from_path(run.path("relevance.csv"))?;
        w.write_record(["FrequencyRelevance", "count"])?;
        for band in FrequencyRelevance::ALL {
            w.write_record([
                band.name(),
                &relevance.get(band.name()).copied().unwrap_or(0).to_string(),
            ])?;
        }
        w.flush()?;
        run.finish()
    }

    fn assess(&self) -> Result<StageManifest> {
        let mut run = StageRun::start(self, Stage::Assess)?;
        let curate_dir = run.upstream(Stage::Curate)?;
        let cfg = &self.resolved.config;
        let lex = self.lexicon()?;
        let battery = read_battery(&curate_dir.join("battery.csv"))?;
        if battery.is_empty() {
            bail!("the curated battery is empty; nothing to assess");
        }
        let entries = read_corpus(&cfg.corpus_manifest)?;
        let wanted: Vec<_> = entries
            .into_iter()
            .filter(|e| battery.iter().any(|p| p.target == e.word))
            .collect();
        let speech: HashMap<String, AudioBuffer<f64>> =
            load_recordings(&wanted)?.into_iter().collect();
        let listener = self
            .resolved
            .audiograms()?
            .into_iter()
            .next()
            .expect("validated non-empty");
        let filter = self.listener_filter(&listener)?;
        let backend = build_backend(&cfg.backend, lex.clone())?;

        let mut setup = AssessSetup::new(&speech, backend.as_ref(), &lex, &filter);
        setup.lead_in_s = cfg.stimulus.lead_in_s;
        setup.ramp_s = cfg.stimulus.ramp_s;
        setup.level_dbfs = cfg.stimulus.level_dbfs;
        setup.trials = cfg.assess.trials_per_condition;
        setup.choice = cfg.assess.choice;
        setup.seed = self.seed();
        let assessment =
            hearsim_core::diagnostics::assess_items(&battery, &cfg.snr_levels, &setup)?;

        run.total = battery.len();
        let failed: BTreeSet<(&str, &str)> = assessment
            .incomplete
            .iter()
            .map(|i| (i.target.as_str(), i.distractor.as_str()))
            .collect();
        run.skipped = failed.len();
        for i in &assessment.incomplete {
            let message = format!(
                "{}/{} at {} dB: {}",
                i.target, i.distractor, i.snr_db, i.reason
            );
            run.warn(message);
        }

        write_item_diagnostics(&run.path("item_diagnostics.csv"), &assessment.items)?;
        let selected = select_diagnostic(&assessment.items, cfg.assess.threshold_pp)?;
        write_item_diagnostics(&run.path("selected.csv"), &selected)?;
        write_csv(&run.path("incomplete.csv"), &assessment.incomplete)?;
        run.finish()
    }

    fn simulate(&self) -> Result<StageManifest> {
        let mut run = StageRun::start(self, Stage::Simulate)?;
        let curate_dir = run.upstream(Stage::Curate)?;
        let cfg = &self.resolved.config;
        let lex = self.lexicon()?;
        let mut battery = read_battery(&curate_dir.join("battery.csv"))?;
        let base_hi = self
            .resolved
            .audiograms()?
            .into_iter()
            .next()
            .expect("validated non-empty");

        let mut measured: Option<(Vec<f64>, Vec<f64>)> = None;
        if cfg.cohort.model == CohortModel::Asr {
            let assess = run.upstream(Stage::Assess)?;
            let items = read_item_diagnostics(&assess.join("item_diagnostics.csv"))?;
            let at_snr: HashMap<(&str, &str), &ItemDiagnostics> = items
                .iter()
                .filter(|d| d.snr_db == cfg.cohort.snr_db)
                .map(|d| ((d.target.as_str(), d.distractor.as_str()), d))
                .collect();
            if at_snr.is_empty() {
                bail!(
                    "no assess results at {} dB; add it to snr_levels or change cohort.snr_db",
                    cfg.cohort.snr_db
                );
            }
            let before = battery.len();
            battery.retain(|p| at_snr.contains_key(&(p.target.as_str(), p.distractor.as_str())));
            if battery.len() < before {
                let message = format!(
                    "{} items lack assess results and were left out",
                    before - battery.len()
                );
                run.warn(message);
            }
            let rates = battery
                .iter()
                .map(|p| {
                    let d = at_snr[&(p.target.as_str(), p.distractor.as_str())];
                    (d.nh_correct_pct / 100.0, d.hl_correct_pct / 100.0)
                })
                .unzip();
            measured = Some(rates);
        }
        let delta_d = item_distances(&battery, &lex)?;
        let model = match &measured {
            Some((nh, hl)) => ResponseModel::Measured { nh, hl },
            None => ResponseModel::Psychometric {
                delta_d: &delta_d,
                params: &cfg.psychometric,
            },
        };

        let mut ran = 0;
        for &n in &cfg.cohort.test_lengths {
            run.total += 1;
            if n > battery.len() {
                run.warn(format!(
                    "test length {n} exceeds the battery of {} items; skipped",
                    battery.len()
                ));
                continue;
            }
            let mut cohort_cfg = cfg.cohort.params.clone();
            cohort_cfg.subset_size = n;
            cohort_cfg.seed = derive(self.seed(), &[cfg.cohort.params.seed, n as u64]);
            let cohort: CohortRun<f64> = simulate_cohort(model, &base_hi, &cohort_cfg)?;
            std::fs::write(
                run.path(&format!("cohort_{n}.json")),
                cohort.to_json()? + "\n",
            )?;
            cohort.write_scores_csv(&run.path(&format!("scores_{n}.csv")))?;
            ran += 1;
        }
        if ran == 0 {
            bail!("no test length fits the battery of {} items", battery.len());
        }
        run.finish()
    }

    fn roc(&self) -> Result<StageManifest> {
        let mut run = StageRun::start(self, Stage::Roc)?;
        let simulate = run.upstream(Stage::Simulate)?;
        let lengths = cohort_lengths(&simulate)?;
        let mut summary = Vec::new();
        for n in lengths {
            run.total += 1;
            let cohort = read_cohort(&simulate, n)?;
            let (nh, hi) = (cohort.scores(Group::NH), cohort.scores(Group::HI));
            let roc = roc_analysis(&nh, &hi, cohort.config.fixed_threshold)?;
            let mut w = csv::Writer::from_path(run.path(&format!("roc_{n}.csv")))?;
            w.write_record(["fpr", "tpr", "threshold"])?;
            for p in &roc.points {
                w.write_record([
                    p.fpr.to_string(),
                    p.tpr.to_string(),
                    p.threshold.map(|t| t.to_string()).unwrap_or_default(),
                ])?;
            }
            w.flush()?;
            summary.push(json!({
                "test_length": n,
                "auc": roc.auc,
                "auc_pairwise": pairwise_auc(&nh, &hi),
                "youden_j": roc.youden_j,
                "youden": roc.youden,
                "fixed": roc.fixed,
                "nh_mean": cohort.nh_mean,
                "hi_mean": cohort.hi_mean,
                "separation_pp": cohort.nh_mean - cohort.hi_mean,
            }));
        }
        write_json(&run.path("summary.json"), &summary)?;
        run.finish()
    }

    fn report(&self) -> Result<StageManifest> {
        let mut run = StageRun::start(self, Stage::Report)?;
        let analyze = run.upstream(Stage::Analyze)?;
        let curate_dir = run.upstream(Stage::Curate)?;
        let assess = run.upstream(Stage::Assess)?;
        let simulate = run.upstream(Stage::Simulate)?;
        let roc_dir = run.upstream(Stage::Roc)?;
        let lex = self.lexicon()?;
        let mut index: BTreeMap<String, &str> = BTreeMap::new();

        let records = read_dataset(&analyze.join("dataset.csv"))?;
        let matrix = matrix_of(&records, true);
        write_top_confusions(&run.path("table1_top_confusions.csv"), &matrix)?;
        index.insert(
            "table1_top_confusions.csv".into(),
            "most frequent phoneme confusions under simulated hearing loss",
        );
        write_articulation(&run.path("table2_articulation.csv"), &matrix)?;
        index.insert(
            "table2_articulation.csv".into(),
            "substitutions re-binned by place of articulation, ranked",
        );
        std::fs::copy(
            assess.join("selected.csv"),
            run.path("table3_diagnostic_items.csv"),
        )?;
        index.insert(
            "table3_diagnostic_items.csv".into(),
            "diagnostic word pairs with NH and HL percent correct, by difference",
        );

        let battery = read_battery(&curate_dir.join("battery.csv"))?;
        let curation: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(curate_dir.join("curation.json"))?)?;
        let mut w = csv::Writer::from_path(run.path("error_types_curated.csv"))?;
        w.write_record(["error_type", "selected", "target"])?;
        for k in ERROR_KINDS {
            let target = curation["targets"][k.name()].as_u64().unwrap_or(0);
            let selected = battery.iter().filter(|p| p.key.kind == k).count();
            w.write_record([k.name(), &selected.to_string(), &target.to_string()])?;
        }
        w.flush()?;
        index.insert(
            "error_types_curated.csv".into(),
            "curated items per error type against apportioned targets",
        );

        let mut key_counts: BTreeMap<String, usize> = BTreeMap::new();
        for p in &battery {
            *key_counts.entry(p.key.label()).or_default() += 1;
        }
        let mut ranked: Vec<_> = key_counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1));
        let mut w = csv::Writer::from_path(run.path("top_selected_confusions.csv"))?;
        w.write_record(["confusion_key", "count"])?;
        for (k, c) in ranked.iter().take(TOP_N) {
            w.write_record([k.as_str(), &c.to_string()])?;
        }
        w.flush()?;
        index.insert(
            "top_selected_confusions.csv".into(),
            "most represented confusion keys in the battery",
        );

        let amap = ArticulationMap::default();
        let mut grid: BTreeMap<(ArticulationClass, ArticulationClass), usize> = BTreeMap::new();
        for p in battery
            .iter()
            .filter(|p| p.key.kind == EditKind::Substitution)
        {
            if let (Some(a), Some(b)) = (&p.key.clean, &p.key.hl) {
                *grid
                    .entry((amap.class_of(a)?, amap.class_of(b)?))
                    .or_default() += 1;
            }
        }
        let mut w = csv::Writer::from_path(run.path("articulation_curated.csv"))?;
        w.write_record(["clean_class", "hl_class", "count"])?;
        for a in ArticulationClass::ALL {
            for b in ArticulationClass::ALL {
                let c = grid.get(&(a, b)).copied().unwrap_or(0);
                w.write_record([a.name(), b.name(), &c.to_string()])?;
            }
        }
        w.flush()?;
        index.insert(
            "articulation_curated.csv".into(),
            "place-of-articulation grid of curated substitution items",
        );

        let mut w = csv::Writer::from_path(run.path("item_characteristics.csv"))?;
        w.write_record([
            "OriginalWord",
            "Distractor",
            "target_syllables",
            "distractor_syllables",
            "phoneme_distance",
            "word_distance",
        ])?;
        for p in &battery {
            let (a, b) = (lex.require(&p.target)?, lex.require(&p.distractor)?);
            w.write_record([
                p.target.clone(),
                p.distractor.clone(),
                syllable_count(a).to_string(),
                syllable_count(b).to_string(),
                levenshtein(a.tokens(), b.tokens()).to_string(),
                word_distance(&p.target, &p.distractor).to_string(),
            ])?;
        }
        w.flush()?;
        index.insert(
            "item_characteristics.csv".into(),
            "syllable counts and edit distances per curated item",
        );

        let rel = relevance_distribution(&battery);
        let mut w = csv::Writer::from_path(run.path("frequency_relevance.csv"))?;
        w.write_record(["FrequencyRelevance", "count", "percent"])?;
        for band in FrequencyRelevance::ALL {
            let c = rel.get(&band).copied().unwrap_or(0);
            w.write_record([
                band.name().to_string(),
                c.to_string(),
                pct(c, battery.len()),
            ])?;
        }
        w.flush()?;
        index.insert(
            "frequency_relevance.csv".into(),
            "curated items per frequency-relevance band",
        );

        let sources = source_counts(&battery);
        let mut w = csv::Writer::from_path(run.path("distractor_source.csv"))?;
        w.write_record(["DistractorSource", "count", "percent"])?;
        for (s, c) in &sources {
            w.write_record([s.to_string(), c.to_string(), pct(*c, battery.len())])?;
        }
        w.flush()?;
        index.insert(
            "distractor_source.csv".into(),
            "ASR-observed versus phonetically generated distractors",
        );

        let roc_summary: Vec<serde_json::Value> =
            serde_json::from_str(&std::fs::read_to_string(roc_dir.join("summary.json"))?)?;
        for n in cohort_lengths(&simulate)? {
            run.total += 1;
            let cohort = read_cohort(&simulate, n)?;
            let hist = format!("score_histogram_{n}.csv");
            let mut w = csv::Writer::from_path(run.path(&hist))?;
            w.write_record(["group", "bin_low", "bin_high", "count"])?;
            for g in [Group::NH, Group::HI] {
                for (lo, hi, c) in histogram(&cohort.scores(g)) {
                    w.write_record([
                        g.name().to_string(),
                        lo.to_string(),
                        hi.to_string(),
                        c.to_string(),
                    ])?;
                }
            }
            w.flush()?;
            index.insert(hist, "simulated percent-correct histogram per group");

            let boxplot = format!("score_boxplot_{n}.csv");
            let mut w = csv::Writer::from_path(run.path(&boxplot))?;
            w.write_record(["group", "min", "q1", "median", "q3", "max", "mean"])?;
            for g in [Group::NH, Group::HI] {
                let mut s = cohort.scores(g);
                s.sort_by(f64::total_cmp);
                let mean = s.iter().sum::<f64>() / s.len() as f64;
                w.write_record(
                    std::iter::once(g.name().to_string()).chain(
                        [0.0, 0.25, 0.5, 0.75, 1.0]
                            .iter()
                            .map(|&q| quantile(&s, q))
                            .chain([mean])
                            .map(|v| format!("{v:.4}")),
                    ),
                )?;
            }
            w.flush()?;
            index.insert(boxplot, "five-number summary of simulated scores per group");

            let curve = format!("roc_curve_{n}.csv");
            std::fs::copy(roc_dir.join(format!("roc_{n}.csv")), run.path(&curve))?;
            index.insert(
                curve,
                "ROC points with normal hearing as the positive class",
            );
        }
        write_json(&run.path("roc_summary.json"), &roc_summary)?;
        index.insert(
            "roc_summary.json".into(),
            "AUC, Youden and fixed-threshold operating points per test length",
        );
        write_json(&run.path("index.json"), &index)?;
        run.finish()
    }

    fn serve(&self) -> Result<()> {
        let out = self.output_dir();
        let cfg = &self.resolved.config;
        let (curate_dir, _) = require_upstream(&out, "curate", &self.resolved.hash, self.force)?;
        let (assess_dir, _) = require_upstream(&out, "assess", &self.resolved.hash, self.force)?;
        let service_cfg = hearsim_service::ServiceConfig::load(
            &curate_dir.join("battery.csv"),
            &assess_dir.join("item_diagnostics.csv"),
            &cfg.corpus_manifest,
            cfg.service.snr_db,
            Some(out.join("serve")),
            self.seed(),
        )?;
        let state = hearsim_service::AppState::new(service_cfg)?;
        let rt = tokio::runtime::Builder::new_multi_thread()
            .enable_all()
            .build()?;
        rt.block_on(hearsim_service::serve(state, cfg.service.port))?;
        Ok(())
    }
}

struct Condition {
    label: String,
    snr_db: Option<f64>,
    audiogram: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StimulusRow {
    word: String,
    condition: String,
    snr_db: Option<f64>,
    audiogram: String,
    path: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TranscriptRow {
    word: String,
    condition: String,
    snr_db: Option<f64>,
    audiogram: String,
    raw: String,
    normalized: String,
    status: String,
}

fn path_safe(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut rdr =
        csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    rdr.deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .with_context(|| format!("parsing {}", path.display()))
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")
        .with_context(|| format!("writing {}", path.display()))
}

fn write_top_confusions(path: &Path, matrix: &ConfusionMatrix) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["rank", "original", "transcribed", "count"])?;
    for (i, c) in matrix.top_confusions(TOP_N).iter().enumerate() {
        w.write_record([
            (i + 1).to_string(),
            symbol_str(&c.original).to_string(),
            symbol_str(&c.transcribed).to_string(),
            c.count.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_articulation(path: &Path, matrix: &ConfusionMatrix) -> Result<()> {
    let projection = articulation_projection(matrix, &ArticulationMap::default())?;
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["original_class", "transcribed_class", "count"])?;
    for (a, b, c) in ranked_projection(&projection) {
        w.write_record([a.name(), b.name(), &c.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn source_counts(pairs: &[CandidatePair]) -> BTreeMap<&'static str, usize> {
    [
        DistractorSource::AsrObserved,
        DistractorSource::PhoneticallyGenerated,
    ]
    .into_iter()
    .map(|s| (s.name(), pairs.iter().filter(|p| p.source == s).count()))
    .collect()
}

fn pct(count: usize, total: usize) -> String {
    if total == 0 {
        "0".into()
    } else {
        round1(100.0 * count as f64 / total as f64).to_string()
    }
}

/// Test lengths with a cohort file, read from the simulate manifest.
fn cohort_lengths(simulate: &Path) -> Result<Vec<usize>> {
    let m = crate::manifest::read_manifest(simulate)?.context("simulate manifest vanished")?;
    let mut lengths: Vec<usize> = m
        .files
        .keys()
        .filter_map(|f| {
            f.strip_prefix("cohort_")?
                .strip_suffix(".json")?
                .parse()
                .ok()
        })
        .collect();
    lengths.sort_unstable();
    Ok(lengths)
}

fn read_cohort(simulate: &Path, n: usize) -> Result<CohortRun<f64>> {
    let path = simulate.join(format!("cohort_{n}.json"));
    let text =
        std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Fixed-width bins over [0, 100]; the last bin includes 100.
fn histogram(scores: &[f64]) -> Vec<(f64, f64, usize)> {
    let bins = (100.0 / HISTOGRAM_BIN_PP) as usize;
    let mut counts = vec![0usize; bins];
    for &s in scores {
        let i = ((s / HISTOGRAM_BIN_PP) as usize).min(bins - 1);
        counts[i] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, c)| {
            (
                i as f64 * HISTOGRAM_BIN_PP,
                (i + 1) as f64 * HISTOGRAM_BIN_PP,
                c,
            )
        })
        .collect()
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_names_round_trip() {
        for s in Stage::PIPELINE.into_iter().chain([Stage::Serve]) {
            assert_eq!(Stage::from_name(s.name()), Some(s));
        }
        assert_eq!(Stage::from_name("all"), None);
    }

    #[test]
    fn histogram_and_quantiles() {
        let h = histogram(&[0.0, 4.9, 5.0, 100.0]);
        assert_eq!(h.len(), 20);
        assert_eq!(h[0].2, 2);
        assert_eq!(h[1].2, 1);
        assert_eq!(h[19].2, 1);
        let s = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&s, 0.5), 2.5);
        assert_eq!(quantile(&s, 0.0), 1.0);
        assert_eq!(quantile(&s, 1.0), 4.0);
    }

    #[test]
    fn labels_are_path_safe() {
        assert_eq!(path_safe("Moderate"), "Moderate");
        assert_eq!(path_safe("my profile/2"), "my_profile_2");
    }
}
