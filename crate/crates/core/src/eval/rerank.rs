//! N-best reranking: pick the candidate maximizing a convex combination
//! of the decoder score and the language-model score.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::data::NBestEntry;
use crate::model::Model;
use crate::repr::lm_score;
use crate::tokenizer::{encode, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RerankConfig {
    /// Weight on the language-model score; the decoder score gets 1-λ.
    pub lambda: f64,
}

impl Default for RerankConfig {
    fn default() -> Self {
        RerankConfig { lambda: 0.5 }
    }
}

impl RerankConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Config(format!(
                "lambda {} must be in [0, 1]",
                self.lambda
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub entry: usize,
    /// Index of the winning candidate within its beam.
    pub candidate: usize,
    pub text: String,
    pub s2s_score: f64,
    pub lm_score: f64,
    pub combined: f64,
    /// Forward passes spent scoring this entry's candidates.
    pub passes: usize,
}

/// Rerank each entry by `(1-λ)·s2s + λ·lm`; ties go to the lower
/// candidate index, preserving beam order.
pub fn rerank(
    model: &Model,
    vocab: &Vocabulary,
    entries: &[NBestEntry],
    cfg: RerankConfig,
) -> Result<Vec<Selection>> {
    cfg.validate()?;
    let max_len = model.config.max_len;
    let mut selections = Vec::with_capacity(entries.len());
    for (ei, entry) in entries.iter().enumerate() {
        if entry.candidates.is_empty() {
            return Err(Error::EmptyCandidates { entry: ei });
        }
        let mut best: Option<Selection> = None;
        let mut passes = 0usize;
        for (ci, cand) in entry.candidates.iter().enumerate() {
            let encoded = encode(vocab, &cand.text, max_len)?;
            let score = lm_score(model, &encoded)?;
            passes += score.passes;
            let combined = (1.0 - cfg.lambda) * cand.s2s_score
                + cfg.lambda * score.log_likelihood;
            let better = match &best {
                Some(b) => combined > b.combined,
                None => true,
            };
            if better {
                best = Some(Selection {
                    entry: ei,
                    candidate: ci,
                    text: cand.text.clone(),
                    s2s_score: cand.s2s_score,
                    lm_score: score.log_likelihood,
                    combined,
                    passes: 0,
                });
            }
        }
        let mut best = best.expect("candidates checked nonempty");
        best.passes = passes;
        selections.push(best);
    }
    Ok(selections)
}

/// CSV with header `entry,candidate,combined,s2s,lm,text`; text is
/// quoted with doubled inner quotes.
pub fn selections_csv(selections: &[Selection]) -> String {
    let mut out = String::from("entry,candidate,combined,s2s,lm,text\n");
    for s in selections {
        out.push_str(&format!(
            "{},{},{:.6},{:.6},{:.6},\"{}\"\n",
            s.entry,
            s.candidate,
            s.combined,
            s.s2s_score,
            s.lm_score,
            s.text.replace('"', "\"\"")
        ));
    }
    out
}
