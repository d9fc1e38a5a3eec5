use std::io::Read;
use std::process::{Command, Stdio};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::mock::{mock_transcribe, MockChannelParams};
use crate::dsp::{wav_bytes, write_wav, AudioBuffer};
use crate::error::{Error, Result};
use crate::lexicon::Lexicon;
use crate::seed;

pub const DEFAULT_TIMEOUT_S: f64 = 30.0;

/// Condition label for undegraded speech.
pub const CLEAN: &str = "clean";
/// Condition label for noise without hearing-loss filtering.
pub const NORMAL_HEARING: &str = "NH";

pub struct TranscriptionRequest<'a> {
    pub audio: &'a AudioBuffer<f64>,
    pub condition_label: &'a str,
    /// Identity of the presented word, for error reports and the mock channel.
    pub word: Option<&'a str>,
    /// Per-request seed; only the mock backend uses it.
    pub seed: u64,
}

/// Channel parameters the mock applies per condition label: `clean`, labels
/// starting with `NH`, and `hl` for every other label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MockBackendConfig {
    pub clean: MockChannelParams,
    pub nh: MockChannelParams,
    pub hl: MockChannelParams,
}

impl Default for MockBackendConfig {
    fn default() -> Self {
        Self {
            clean: MockChannelParams::clean(),
            nh: MockChannelParams::normal_hearing(),
            hl: MockChannelParams::hl_calibrated(),
        }
    }
}

impl MockBackendConfig {
    pub fn params_for(&self, condition: &str) -> &MockChannelParams {
        if condition == CLEAN {
            &self.clean
        } else if condition.starts_with(NORMAL_HEARING) {
            &self.nh
        } else {
            &self.hl
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BackendConfig {
    Mock(MockBackendConfig),
    /// `<program> [args...] <wav-path>`; transcript on stdout, exit status 0.
    Command {
        program: String,
        #[serde(default)]
        args: Vec<String>,
        #[serde(default = "default_timeout")]
        timeout_s: f64,
    },
    /// `POST <url>` with WAV bytes; response `{"text": "..."}`.
    Http {
        url: String,
        #[serde(default = "default_timeout")]
        timeout_s: f64,
    },
}

fn default_timeout() -> f64 {
    DEFAULT_TIMEOUT_S
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig::Mock(MockBackendConfig::default())
    }
}

/// A recognizer reachable through text output only.
pub trait Transcriber: Send + Sync {
    fn transcribe(&self, req: &TranscriptionRequest<'_>) -> Result<String>;

    /// False when the output does not depend on the audio, letting callers skip
    /// stimulus synthesis.
    fn uses_audio(&self) -> bool {
        true
    }
}

pub struct MockBackend {
    config: MockBackendConfig,
    lexicon: Arc<Lexicon>,
}

impl MockBackend {
    pub fn new(config: MockBackendConfig, lexicon: Arc<Lexicon>) -> Self {
        Self { config, lexicon }
    }
}

impl Transcriber for MockBackend {
    fn transcribe(&self, req: &TranscriptionRequest<'_>) -> Result<String> {
        let word = req
            .word
            .ok_or_else(|| backend_err(req, "mock backend needs the word identity"))?;
        let pron = self
            .lexicon
            .primary(word)
            .ok_or_else(|| backend_err(req, "word not in lexicon"))?;
        let base = self.config.params_for(req.condition_label);
        let mut params = base.clone();
        params.seed = seed::derive(
            base.seed,
            &[
                req.seed,
                seed::hash_str(word),
                seed::hash_str(req.condition_label),
            ],
        );
        mock_transcribe(pron, &params, &self.lexicon)
    }

    fn uses_audio(&self) -> bool {
        false
    }
}

pub struct CommandBackend {
    program: String,
    args: Vec<String>,
    timeout: Duration,
}

impl CommandBackend {
    pub fn new(program: impl Into<String>, args: Vec<String>, timeout_s: f64) -> Self {
        Self {
            program: program.into(),
            args,
            timeout: Duration::from_secs_f64(timeout_s.max(0.001)),
        }
    }
}

impl Transcriber for CommandBackend {
    fn transcribe(&self, req: &TranscriptionRequest<'_>) -> Result<String> {
        let tmp = tempfile::Builder::new()
            .prefix("hearsim-")
            .suffix(".wav")
            .tempfile()
            .map_err(|e| backend_err(req, &format!("temp file: {e}")))?;
        write_wav(req.audio, tmp.path())?;

        let mut child = Command::new(&self.program)
            .args(&self.args)
            .arg(tmp.path())
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| backend_err(req, &format!("spawning {}: {e}", self.program)))?;

        // Drain stdout on a thread so a chatty child cannot block on a full pipe.
        let mut stdout = child.stdout.take().expect("piped stdout");
        let reader = std::thread::spawn(move || {
            let mut s = String::new();
            stdout.read_to_string(&mut s).map(|_| s)
        });

        let started = Instant::now();
        let status = loop {
            match child.try_wait() {
                Ok(Some(status)) => break status,
                Ok(None) if started.elapsed() >= self.timeout => {
                    let _ = child.kill();
                    let _ = child.wait();
                    return Err(backend_err(
                        req,
                        &format!("timed out after {:.1} s", self.timeout.as_secs_f64()),
                    ));
                }
                Ok(None) => std::thread::sleep(Duration::from_millis(5)),
                Err(e) => return Err(backend_err(req, &format!("waiting: {e}"))),
            }
        };
        let out = reader
            .join()
            .map_err(|_| backend_err(req, "stdout reader panicked"))?
            .map_err(|e| backend_err(req, &format!("reading stdout: {e}")))?;
        if !status.success() {
            let mut err = String::new();
            if let Some(mut s) = child.stderr.take() {
                let _ = s.read_to_string(&mut err);
            }
            return Err(backend_err(
                req,
                &format!("exited with {status}: {}", err.trim()),
            ));
        }
        Ok(out.trim().to_string())
    }
}

pub struct HttpBackend {
    url: String,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(url: impl Into<String>, timeout_s: f64) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_secs_f64(timeout_s.max(0.001)))
            .build();
        Self {
            url: url.into(),
            agent,
        }
    }
}

#[derive(Deserialize)]
struct TextBody {
    text: String,
}

impl Transcriber for HttpBackend {
    fn transcribe(&self, req: &TranscriptionRequest<'_>) -> Result<String> {
        let body = wav_bytes(req.audio)?;
        let resp = self
            .agent
            .post(&self.url)
            .set("Content-Type", "audio/wav")
            .send_bytes(&body)
            .map_err(|e| backend_err(req, &e.to_string()))?;
        let text = resp
            .into_string()
            .map_err(|e| backend_err(req, &format!("reading response: {e}")))?;
        let parsed: TextBody = serde_json::from_str(&text)
            .map_err(|e| backend_err(req, &format!("bad response body: {e}")))?;
        Ok(parsed.text.trim().to_string())
    }
}

fn backend_err(req: &TranscriptionRequest<'_>, message: &str) -> Error {
    Error::Backend {
        condition: req.condition_label.to_string(),
        word: req.word.map(str::to_string),
        message: message.to_string(),
    }
}

/// Builds the backend described by `config`. The lexicon is only used by the mock.
pub fn build_backend(
    config: &BackendConfig,
    lexicon: Arc<Lexicon>,
) -> Result<Box<dyn Transcriber>> {
    Ok(match config {
        BackendConfig::Mock(m) => {
            for p in [&m.clean, &m.nh, &m.hl] {
                p.validate()?;
            }
            Box::new(MockBackend::new(m.clone(), lexicon))
        }
        BackendConfig::Command {
            program,
            args,
            timeout_s,
        } => Box::new(CommandBackend::new(
            program.clone(),
            args.clone(),
            *timeout_s,
        )),
        BackendConfig::Http { url, timeout_s } => {
            Box::new(HttpBackend::new(url.clone(), *timeout_s))
        }
    })
}

/// One-shot transcription through a freshly built backend.
pub fn transcribe(
    req: &TranscriptionRequest<'_>,
    backend: &BackendConfig,
    lexicon: Arc<Lexicon>,
) -> Result<String> {
    build_backend(backend, lexicon)?.transcribe(req)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;
    use std::net::TcpListener;
    use std::path::Path;

    fn audio() -> AudioBuffer<f64> {
        AudioBuffer::new(vec![0.0, 0.1, -0.1, 0.0], 16_000).unwrap()
    }

    fn lex() -> Arc<Lexicon> {
        Arc::new(Lexicon::parse("SAT  S AE1 T\nFAT  F AE1 T\n", Path::new("t")).unwrap())
    }

    fn req<'a>(a: &'a AudioBuffer<f64>, word: &'a str) -> TranscriptionRequest<'a> {
        TranscriptionRequest {
            audio: a,
            condition_label: "HL",
            word: Some(word),
            seed: 1,
        }
    }

    #[test]
    fn mock_identity_channel() {
        let a = audio();
        let cfg = BackendConfig::Mock(MockBackendConfig {
            clean: MockChannelParams::identity(),
            nh: MockChannelParams::identity(),
            hl: MockChannelParams::identity(),
        });
        assert_eq!(transcribe(&req(&a, "sat"), &cfg, lex()).unwrap(), "sat");
    }

    #[test]
    fn command_backend_reads_stdout() {
        let a = audio();
        let cfg = BackendConfig::Command {
            program: "echo".into(),
            args: vec!["hello".into()],
            timeout_s: 5.0,
        };
        // echo prints its args, including the wav path; first token is the transcript
        let out = transcribe(&req(&a, "sat"), &cfg, lex()).unwrap();
        assert!(out.starts_with("hello "));
        let l = Lexicon::parse("HELLO  HH AH0 L OW1\n", Path::new("t")).unwrap();
        assert_eq!(l.lexical_normalize(&out).unwrap(), "hello");
    }

    #[test]
    fn command_failure_and_timeout_carry_context() {
        let a = audio();
        let fail = BackendConfig::Command {
            program: "false".into(),
            args: vec![],
            timeout_s: 5.0,
        };
        match transcribe(&req(&a, "sat"), &fail, lex()) {
            Err(Error::Backend {
                condition, word, ..
            }) => {
                assert_eq!(condition, "HL");
                assert_eq!(word.as_deref(), Some("sat"));
            }
            other => panic!("{other:?}"),
        }
        let slow = BackendConfig::Command {
            program: "sh".into(),
            args: vec!["-c".into(), "sleep 5".into(), "sh".into()],
            timeout_s: 0.2,
        };
        let t = Instant::now();
        let err = transcribe(&req(&a, "sat"), &slow, lex()).unwrap_err();
        assert!(err.to_string().contains("timed out"));
        assert!(t.elapsed() < Duration::from_secs(3));
    }

    /// Minimal one-request HTTP server answering with `status` and `body`.
    fn stub_server(status: &'static str, body: &'static str) -> String {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        std::thread::spawn(move || {
            let (mut stream, _) = listener.accept().unwrap();
            let mut buf = vec![0u8; 65_536];
            let mut seen = Vec::new();
            // read headers, then the declared body length
            loop {
                let n = std::io::Read::read(&mut stream, &mut buf).unwrap();
                seen.extend_from_slice(&buf[..n]);
                let text = String::from_utf8_lossy(&seen);
                if let Some(end) = text.find("\r\n\r\n") {
                    let len = text[..end]
                        .lines()
                        .find_map(|l| {
                            l.to_ascii_lowercase()
                                .strip_prefix("content-length:")
                                .map(|v| v.trim().parse::<usize>().unwrap())
                        })
                        .unwrap_or(0);
                    if seen.len() >= end + 4 + len {
                        break;
                    }
                }
                if n == 0 {
                    break;
                }
            }
            let resp = format!(
                "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
            stream.write_all(resp.as_bytes()).unwrap();
        });
        format!("http://{addr}/transcribe")
    }

    #[test]
    fn http_backend_reads_text_field() {
        let a = audio();
        let url = stub_server("200 OK", r#"{"text":"few"}"#);
        let cfg = BackendConfig::Http {
            url,
            timeout_s: 5.0,
        };
        assert_eq!(transcribe(&req(&a, "few"), &cfg, lex()).unwrap(), "few");
    }

    #[test]
    fn http_non_2xx_is_backend_error() {
        let a = audio();
        let url = stub_server("500 Internal Server Error", r#"{"error":"boom"}"#);
        let cfg = BackendConfig::Http {
            url,
            timeout_s: 5.0,
        };
        assert!(matches!(
            transcribe(&req(&a, "few"), &cfg, lex()),
            Err(Error::Backend { .. })
        ));
    }

    #[test]
    fn config_json_shape() {
        let cfg: BackendConfig =
            serde_json::from_str(r#"{"kind":"command","program":"whisper-cli"}"#).unwrap();
        assert_eq!(
            cfg,
            BackendConfig::Command {
                program: "whisper-cli".into(),
                args: vec![],
                timeout_s: 30.0
            }
        );
    }
}
