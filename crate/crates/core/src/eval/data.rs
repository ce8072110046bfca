//! Evaluation record types and loaders: scored sentence pairs (TSV),
//! labeled messages (TSV), and n-best candidate lists (JSON lines).

use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A sentence pair with a gold similarity score.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPair {
    pub sentence_a: String,
    pub sentence_b: String,
    pub gold: f64,
}

/// A two-class labeled message; `spam` is the positive class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledMessage {
    pub spam: bool,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub text: String,
    pub s2s_score: f64,
}

/// One beam-search n-best list with its source and reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NBestEntry {
    pub source: String,
    pub reference: String,
    pub candidates: Vec<Candidate>,
}

/// Parse `gold<TAB>sentence_a<TAB>sentence_b` lines; blank lines are
/// skipped.
pub fn load_pairs_tsv(reader: impl BufRead) -> Result<Vec<ScoredPair>> {
    let mut pairs = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.splitn(3, '\t');
        let (gold, a, b) = match (fields.next(), fields.next(), fields.next()) {
            (Some(g), Some(a), Some(b)) => (g, a, b),
            _ => {
                return Err(Error::Parse(format!(
                    "line {}: expected gold<TAB>sentence_a<TAB>sentence_b",
                    lineno + 1
                )))
            }
        };
        let gold: f64 = gold.trim().parse().map_err(|_| {
            Error::Parse(format!("line {}: bad gold score `{gold}`", lineno + 1))
        })?;
        if !gold.is_finite() {
            return Err(Error::Parse(format!(
                "line {}: gold score must be finite",
                lineno + 1
            )));
        }
        pairs.push(ScoredPair {
            sentence_a: a.to_string(),
            sentence_b: b.to_string(),
            gold,
        });
    }
    if pairs.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Ok(pairs)
}

/// Parse `label<TAB>text` lines with labels literally `ham`/`spam`.
pub fn load_messages_tsv(reader: impl BufRead) -> Result<Vec<LabeledMessage>> {
    let mut messages = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.splitn(2, '\t');
        let (label, text) = match (fields.next(), fields.next()) {
            (Some(l), Some(t)) => (l, t),
            _ => {
                return Err(Error::Parse(format!(
                    "line {}: expected label<TAB>text",
                    lineno + 1
                )))
            }
        };
        let spam = match label {
            "ham" => false,
            "spam" => true,
            other => {
                return Err(Error::Parse(format!(
                    "line {}: label `{other}` is not ham/spam",
                    lineno + 1
                )))
            }
        };
        messages.push(LabeledMessage { spam, text: text.to_string() });
    }
    if messages.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Ok(messages)
}

/// Parse one JSON object per line into `NBestEntry` records.
pub fn load_nbest_jsonl(reader: impl BufRead) -> Result<Vec<NBestEntry>> {
    let mut entries = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: NBestEntry = serde_json::from_str(&line)
            .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?;
        entries.push(entry);
    }
    if entries.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Ok(entries)
}
