//! HTTP client for constituent models served elsewhere.
//!
//! Protocol: `POST <endpoint>` with body `{"texts": [...]}`; the response is
//! `{"probs": [[p_human, p_ai], ...]}` in request order.

use std::thread;
use std::time::Duration;

use log::warn;
use serde::{Deserialize, Serialize};
use ureq::Agent;

use super::{check_text, ProbVector, Scorer, ScorerError, INGEST_SUM_TOLERANCE};
use crate::corpus::Sample;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub max_batch: usize,
    pub timeout_ms: u64,
    pub max_attempts: u32,
    /// First retry delay; doubles on every further attempt.
    pub backoff_ms: u64,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            endpoint: String::new(),
            max_batch: 32,
            timeout_ms: 30_000,
            max_attempts: 3,
            backoff_ms: 200,
        }
    }
}

#[derive(Serialize)]
struct Request<'a> {
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct Response {
    probs: Vec<Vec<f64>>,
}

pub struct RemoteScorer {
    id: String,
    cfg: RemoteConfig,
    agent: Agent,
}

impl RemoteScorer {
    pub fn new(id: impl Into<String>, cfg: RemoteConfig) -> Result<Self, ScorerError> {
        if cfg.endpoint.is_empty() {
            return Err(ScorerError::InvalidConfig("remote endpoint is empty".into()));
        }
        if cfg.max_batch == 0 || cfg.max_attempts == 0 {
            return Err(ScorerError::InvalidConfig(
                "max_batch and max_attempts must be positive".into(),
            ));
        }
        let agent = Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(cfg.timeout_ms)))
            .build()
            .into();
        Ok(Self {
            id: id.into(),
            cfg,
            agent,
        })
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.cfg
    }

    /// Scores one batch of at most `max_batch` texts.
    ///
    /// Transport failures and 5xx statuses are retried with exponential
    /// backoff up to `max_attempts` in total; malformed responses are not.
    pub fn remote_score(&self, texts: &[&str]) -> Result<Vec<ProbVector>, ScorerError> {
        if texts.len() > self.cfg.max_batch {
            return Err(ScorerError::BatchTooLarge {
                size: texts.len(),
                max: self.cfg.max_batch,
            });
        }
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let mut delay = Duration::from_millis(self.cfg.backoff_ms);
        let mut attempt = 1;
        let response = loop {
            match self.post(texts) {
                Ok(r) => break r,
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(message)) => {
                    if attempt >= self.cfg.max_attempts {
                        return Err(ScorerError::Transport {
                            attempts: attempt,
                            message,
                        });
                    }
                    warn!(
                        "scorer '{}': attempt {attempt} failed ({message}); retrying in {delay:?}",
                        self.id
                    );
                    thread::sleep(delay);
                    delay *= 2;
                    attempt += 1;
                }
            }
        };
        validate_response(response, texts.len())
    }

    fn post(&self, texts: &[&str]) -> Result<Response, Attempt> {
        let mut resp = match self
            .agent
            .post(&self.cfg.endpoint)
            .send_json(Request { texts })
        {
            Ok(r) => r,
            Err(ureq::Error::StatusCode(code)) if code >= 500 => {
                return Err(Attempt::Retry(format!("http status {code}")))
            }
            Err(ureq::Error::StatusCode(code)) => {
                return Err(Attempt::Fatal(ScorerError::InvalidResponse(format!(
                    "http status {code}"
                ))))
            }
            Err(e) => return Err(Attempt::Retry(e.to_string())),
        };
        resp.body_mut()
            .read_json::<Response>()
            .map_err(|e| Attempt::Fatal(ScorerError::InvalidResponse(e.to_string())))
    }
}

enum Attempt {
    Retry(String),
    Fatal(ScorerError),
}

fn validate_response(response: Response, expected: usize) -> Result<Vec<ProbVector>, ScorerError> {
    if response.probs.len() != expected {
        return Err(ScorerError::LengthMismatch {
            expected,
            got: response.probs.len(),
        });
    }
    response
        .probs
        .into_iter()
        .enumerate()
        .map(|(i, row)| match row.as_slice() {
            &[h, a] => ProbVector::with_tolerance(h, a, INGEST_SUM_TOLERANCE)
                .map_err(|e| ScorerError::InvalidResponse(format!("row {i}: {e}"))),
            _ => Err(ScorerError::InvalidResponse(format!(
                "row {i} has {} entries, expected 2",
                row.len()
            ))),
        })
        .collect()
}

impl Scorer for RemoteScorer {
    fn id(&self) -> &str {
        &self.id
    }

    fn score(&self, text: &str) -> Result<ProbVector, ScorerError> {
        check_text(text)?;
        Ok(self.remote_score(&[text])?.remove(0))
    }

    fn score_samples(&self, samples: &[&Sample]) -> Result<Vec<ProbVector>, ScorerError> {
        let mut out = Vec::with_capacity(samples.len());
        for chunk in samples.chunks(self.cfg.max_batch) {
            let texts: Vec<&str> = chunk.iter().map(|s| s.text.as_str()).collect();
            out.extend(self.remote_score(&texts)?);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resp(probs: Vec<Vec<f64>>) -> Response {
        Response { probs }
    }

    #[test]
    fn accepts_valid_rows() {
        let out = validate_response(resp(vec![vec![0.5, 0.5]]), 1).unwrap();
        assert_eq!(out[0].to_array(), [0.5, 0.5]);
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(matches!(
            validate_response(resp(vec![vec![1.2, -0.2]]), 1),
            Err(ScorerError::InvalidResponse(_))
        ));
    }

    #[test]
    fn rejects_length_mismatch() {
        assert!(matches!(
            validate_response(resp(vec![vec![0.5, 0.5]]), 2),
            Err(ScorerError::LengthMismatch { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn rejects_wrong_arity() {
        assert!(validate_response(resp(vec![vec![1.0]]), 1).is_err());
    }

    #[test]
    fn oversized_batch_rejected_before_network() {
        let s = RemoteScorer::new(
            "r",
            RemoteConfig {
                endpoint: "http://127.0.0.1:9".into(),
                max_batch: 1,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(matches!(
            s.remote_score(&["a", "b"]),
            Err(ScorerError::BatchTooLarge { size: 2, max: 1 })
        ));
    }
}
