//! Semantic-textual-similarity harness: cosine of pooled sentence
//! representations against gold scores, summarized with Pearson's r.

use crate::error::Result;
use crate::eval::data::ScoredPair;
use crate::eval::metrics::{cosine_similarity, pearson_r};
use crate::model::Model;
use crate::repr::{sentence_vector, ReprLevel};
use crate::tokenizer::{encode, Vocabulary};

#[derive(Debug, Clone, PartialEq)]
pub struct StsRow {
    /// Index of the pair in the input file.
    pub pair: usize,
    pub gold: f64,
    pub predicted: f64,
}

#[derive(Debug, Clone)]
pub struct StsReport {
    pub level: ReprLevel,
    pub pearson: f64,
    pub rows: Vec<StsRow>,
    /// Pairs dropped because a side failed to encode or pool.
    pub skipped: usize,
}

impl StsReport {
    /// Per-pair CSV with header `level,pair,gold,predicted`.
    pub fn pairs_csv(&self) -> String {
        let mut out = String::from("level,pair,gold,predicted\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}\n",
                self.level.label(),
                row.pair,
                row.gold,
                row.predicted
            ));
        }
        out
    }

    /// One summary row per report: `level,pearson,pairs,skipped`.
    pub fn summary_row(&self) -> String {
        format!(
            "{},{:.6},{},{}\n",
            self.level.label(),
            self.pearson,
            self.rows.len(),
            self.skipped
        )
    }
}

pub const STS_SUMMARY_HEADER: &str = "level,pearson,pairs,skipped\n";

/// Score every pair by the cosine of its pooled representations and
/// correlate against gold. Pairs that cannot be encoded or pooled are
/// skipped and counted; a degenerate score set (zero variance) is
/// surfaced as an error.
pub fn sts_eval(
    model: &Model,
    vocab: &Vocabulary,
    pairs: &[ScoredPair],
    level: ReprLevel,
) -> Result<StsReport> {
    let max_len = model.config.max_len;
    let mut rows = Vec::new();
    let mut skipped = 0usize;
    for (i, pair) in pairs.iter().enumerate() {
        let encoded = encode(vocab, &pair.sentence_a, max_len)
            .and_then(|a| encode(vocab, &pair.sentence_b, max_len).map(|b| (a, b)));
        let (a, b) = match encoded {
            Ok(pair) => pair,
            Err(_) => {
                skipped += 1;
                continue;
            }
        };
        let pooled = sentence_vector(model, &a, level)
            .and_then(|va| sentence_vector(model, &b, level).map(|vb| (va, vb)));
        let (va, vb) = match pooled {
            Ok(pair) => pair,
            Err(_) => {
                skipped += 1;
                continue;
            }
        };
        let predicted = cosine_similarity(&va.values, &vb.values)?;
        rows.push(StsRow { pair: i, gold: pair.gold, predicted });
    }
    let pred: Vec<f64> = rows.iter().map(|r| r.predicted).collect();
    let gold: Vec<f64> = rows.iter().map(|r| r.gold).collect();
    let pearson = pearson_r(&pred, &gold)?;
    Ok(StsReport { level, pearson, rows, skipped })
}
