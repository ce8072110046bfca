//! Representation extraction at three levels (embedding, attention
//! context, final hidden) and language-model scoring, including the
//! n-pass pseudo-log-likelihood required by the random-MLM baseline.

use crate::error::{Error, Result};
use crate::model::{MaskRegime, Model};
use crate::nn::Tensor;
use crate::tokenizer::{EncodedSentence, END, MASK, PAD, START};

/// Which token vectors represent a sentence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReprLevel {
    /// Output of the embedding layer (token + position).
    Embed,
    /// Output of attention layer `k`, 1-based.
    Context(usize),
    /// Final hidden state before the vocabulary projection.
    Output,
}

impl ReprLevel {
    /// Parse `embed`, `context`, `context:k`, or `output`; a bare
    /// `context` means the last layer.
    pub fn parse(s: &str, num_layers: usize) -> Result<Self> {
        match s {
            "embed" => Ok(ReprLevel::Embed),
            "output" => Ok(ReprLevel::Output),
            "context" => Ok(ReprLevel::Context(num_layers)),
            other => {
                if let Some(k) = other.strip_prefix("context:") {
                    let k: usize = k.parse().map_err(|_| {
                        Error::Config(format!(
                            "bad level `{other}`; valid: embed, context, context:<k>, output"
                        ))
                    })?;
                    Ok(ReprLevel::Context(k))
                } else {
                    Err(Error::Config(format!(
                        "unknown level `{other}`; valid: embed, context, context:<k>, output"
                    )))
                }
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            ReprLevel::Embed => "embed".into(),
            ReprLevel::Context(k) => format!("context:{k}"),
            ReprLevel::Output => "output".into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SentenceVector {
    pub values: Vec<f32>,
    pub level: ReprLevel,
    pub pooling: &'static str,
}

/// Token vectors at the requested level: one inference forward pass for
/// every regime (representation extraction never corrupts the input).
pub fn token_representations(
    model: &Model,
    sentence: &EncodedSentence,
    level: ReprLevel,
) -> Result<Tensor> {
    let acts = model.forward(&sentence.ids)?;
    match level {
        ReprLevel::Embed => Ok(acts.embed_out),
        ReprLevel::Context(k) => {
            if k == 0 || k > model.config.num_layers {
                return Err(Error::Config(format!(
                    "context layer {k} out of range 1..={}",
                    model.config.num_layers
                )));
            }
            Ok(acts.context_out[k - 1].clone())
        }
        ReprLevel::Output => Ok(acts.final_hidden),
    }
}

/// Mean-pool token vectors over non-special positions.
pub fn pool_sentence(tokens: &Tensor, ids: &[usize], level: ReprLevel) -> Result<SentenceVector> {
    let (n, d) = tokens.dims2()?;
    debug_assert_eq!(n, ids.len());
    let mut acc = vec![0.0f64; d];
    let mut count = 0usize;
    for (i, &id) in ids.iter().enumerate() {
        // UNK rows stand in for real tokens and stay in the pool.
        if matches!(id, PAD | START | END | MASK) {
            continue;
        }
        for (a, &v) in acc.iter_mut().zip(tokens.row(i)) {
            *a += v as f64;
        }
        count += 1;
    }
    if count == 0 {
        return Err(Error::NothingToPool);
    }
    let values = acc.into_iter().map(|v| (v / count as f64) as f32).collect();
    Ok(SentenceVector { values, level, pooling: "mean" })
}

/// Extract and pool in one call.
pub fn sentence_vector(
    model: &Model,
    sentence: &EncodedSentence,
    level: ReprLevel,
) -> Result<SentenceVector> {
    let tokens = token_representations(model, sentence, level)?;
    pool_sentence(&tokens, &sentence.ids, level)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmScore {
    /// Sum of target-token log likelihoods (always <= 0).
    pub log_likelihood: f64,
    /// Forward passes performed: 1 for causal/window, n-2 for MLM
    /// pseudo-log-likelihood.
    pub passes: usize,
}

fn log_softmax_at(logits_row: &[f32], target: usize) -> f64 {
    let max = logits_row.iter().cloned().fold(f32::NEG_INFINITY, f32::max) as f64;
    let sum: f64 = logits_row.iter().map(|&x| ((x as f64) - max).exp()).sum();
    (logits_row[target] as f64) - max - sum.ln()
}

/// Sentence log-likelihood under the model's own objective.
///
/// - Causal: one pass, sum over positions predicting the next token;
/// - WindowDiagonal: one pass, each non-START position scored in place;
/// - RandomMlm: pseudo-log-likelihood, one pass per interior position
///   with that position replaced by MASK.
pub fn lm_score(model: &Model, sentence: &EncodedSentence) -> Result<LmScore> {
    let ids = &sentence.ids;
    let n = ids.len();
    match model.config.regime {
        MaskRegime::Causal => {
            let acts = model.forward(ids)?;
            let mut total = 0.0f64;
            for i in 0..n - 1 {
                total += log_softmax_at(acts.logits.row(i), ids[i + 1]);
            }
            Ok(LmScore { log_likelihood: total, passes: 1 })
        }
        MaskRegime::WindowDiagonal => {
            let acts = model.forward(ids)?;
            let mut total = 0.0f64;
            for i in 1..n {
                total += log_softmax_at(acts.logits.row(i), ids[i]);
            }
            Ok(LmScore { log_likelihood: total, passes: 1 })
        }
        MaskRegime::RandomMlm => {
            let mut total = 0.0f64;
            let mut passes = 0usize;
            for i in 1..n.saturating_sub(1) {
                let mut corrupted = ids.clone();
                corrupted[i] = MASK;
                let acts = model.forward(&corrupted)?;
                total += log_softmax_at(acts.logits.row(i), ids[i]);
                passes += 1;
            }
            Ok(LmScore { log_likelihood: total, passes })
        }
    }
}
