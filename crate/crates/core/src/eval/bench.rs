//! Runtime benchmark: wall-clock cost of `lm_score` per regime and
//! sentence length, exposing the pass-count asymmetry between the
//! one-pass regimes and n-pass pseudo-log-likelihood.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::model::Model;
use crate::repr::lm_score;
use crate::rng::Rng;
use crate::tokenizer::{EncodedSentence, END, START};

const WARMUP_CALLS: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub regime: &'static str,
    pub n: usize,
    pub mean_ms: f64,
    pub passes: usize,
}

pub const BENCH_CSV_HEADER: &str = "regime,n,mean_ms,passes\n";

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from(BENCH_CSV_HEADER);
    for row in rows {
        out.push_str(&format!(
            "{},{},{:.4},{}\n",
            row.regime, row.n, row.mean_ms, row.passes
        ));
    }
    out
}

/// A deterministic synthetic sentence of total length `n` (including
/// START/END) drawn from the model's vocabulary.
fn synthetic_sentence(n: usize, vocab_size: usize, rng: &mut Rng) -> EncodedSentence {
    assert!(n >= 3, "benchmark lengths must fit START, a token, and END");
    let mut ids = Vec::with_capacity(n);
    ids.push(START);
    for _ in 0..n - 2 {
        ids.push(5 + rng.next_below(vocab_size - 5));
    }
    ids.push(END);
    EncodedSentence { ids }
}

/// Time `lm_score` on one synthetic sentence per (model, length) cell:
/// two discarded warmup calls, then the mean of `trials` timed calls on
/// a monotonic clock.
pub fn runtime_bench(
    models: &[&Model],
    lengths: &[usize],
    trials: usize,
) -> Result<Vec<BenchRow>> {
    if trials < 5 {
        return Err(Error::Config(format!(
            "benchmark needs at least 5 trials, got {trials}"
        )));
    }
    if models.is_empty() || lengths.is_empty() {
        return Err(Error::Config("benchmark needs models and lengths".into()));
    }
    let mut rows = Vec::new();
    for model in models {
        for &n in lengths {
            if n > model.config.max_len {
                return Err(Error::TooLong { len: n, max_len: model.config.max_len });
            }
            let mut rng = Rng::new(n as u64);
            let sentence = synthetic_sentence(n, model.config.vocab_size, &mut rng);
            for _ in 0..WARMUP_CALLS {
                lm_score(model, &sentence)?;
            }
            let mut total_ms = 0.0f64;
            let mut passes = 0usize;
            for _ in 0..trials {
                let start = Instant::now();
                let score = lm_score(model, &sentence)?;
                total_ms += start.elapsed().as_secs_f64() * 1e3;
                passes = score.passes;
            }
            rows.push(BenchRow {
                regime: model.config.regime.as_str(),
                n,
                mean_ms: total_ms / trials as f64,
                passes,
            });
        }
    }
    Ok(rows)
}
