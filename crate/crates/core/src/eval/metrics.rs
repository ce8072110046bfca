//! Scalar evaluation metrics: cosine similarity, Pearson correlation,
//! corpus BLEU, and the binary confusion matrix.

use std::collections::HashMap;

use crate::error::{Error, Result};

pub fn cosine_similarity(u: &[f32], v: &[f32]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::ShapeMismatch {
            op: "cosine_similarity",
            left: vec![u.len()],
            right: vec![v.len()],
        });
    }
    let mut dot = 0.0f64;
    let mut nu = 0.0f64;
    let mut nv = 0.0f64;
    for (&a, &b) in u.iter().zip(v) {
        dot += a as f64 * b as f64;
        nu += a as f64 * a as f64;
        nv += b as f64 * b as f64;
    }
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok(dot / (nu.sqrt() * nv.sqrt()))
}

/// Sample Pearson correlation between predictions and gold scores.
pub fn pearson_r(pred: &[f64], gold: &[f64]) -> Result<f64> {
    if pred.len() != gold.len() || pred.len() < 2 {
        return Err(Error::ShapeMismatch {
            op: "pearson_r",
            left: vec![pred.len()],
            right: vec![gold.len()],
        });
    }
    let n = pred.len() as f64;
    let mean_p = pred.iter().sum::<f64>() / n;
    let mean_g = gold.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_p = 0.0;
    let mut var_g = 0.0;
    for (&p, &g) in pred.iter().zip(gold) {
        cov += (p - mean_p) * (g - mean_g);
        var_p += (p - mean_p) * (p - mean_p);
        var_g += (g - mean_g) * (g - mean_g);
    }
    if var_p == 0.0 {
        return Err(Error::ZeroVariance("predictions"));
    }
    if var_g == 0.0 {
        return Err(Error::ZeroVariance("gold scores"));
    }
    Ok(cov / (var_p.sqrt() * var_g.sqrt()))
}

const BLEU_MAX_ORDER: usize = 4;
const BLEU_EPS: f64 = 1e-9;

fn ngram_counts(tokens: &[&str], order: usize) -> HashMap<Vec<String>, u64> {
    let mut counts = HashMap::new();
    if tokens.len() >= order {
        for window in tokens.windows(order) {
            let key: Vec<String> = window.iter().map(|s| s.to_string()).collect();
            *counts.entry(key).or_insert(0) += 1;
        }
    }
    counts
}

/// Corpus-level BLEU-4 with uniform weights, clipped n-gram precision,
/// and brevity penalty; whitespace tokenization.
///
/// Zero counts for orders >= 2 are smoothed with an added epsilon so a
/// desk-scale corpus without any 4-gram match still gets a usable score;
/// zero unigram overlap yields exactly 0. Orders longer than every
/// candidate sentence are dropped from the geometric mean.
pub fn corpus_bleu(selected: &[String], references: &[String]) -> Result<f64> {
    if selected.is_empty() || selected.len() != references.len() {
        return Err(Error::ShapeMismatch {
            op: "corpus_bleu",
            left: vec![selected.len()],
            right: vec![references.len()],
        });
    }
    let mut clipped = [0u64; BLEU_MAX_ORDER];
    let mut totals = [0u64; BLEU_MAX_ORDER];
    let mut cand_len = 0u64;
    let mut ref_len = 0u64;
    for (cand, reference) in selected.iter().zip(references) {
        let ct: Vec<&str> = cand.split_whitespace().collect();
        let rt: Vec<&str> = reference.split_whitespace().collect();
        cand_len += ct.len() as u64;
        ref_len += rt.len() as u64;
        for order in 1..=BLEU_MAX_ORDER {
            let cc = ngram_counts(&ct, order);
            let rc = ngram_counts(&rt, order);
            for (gram, &count) in &cc {
                totals[order - 1] += count;
                let limit = rc.get(gram).copied().unwrap_or(0);
                clipped[order - 1] += count.min(limit);
            }
        }
    }
    if totals[0] == 0 {
        return Err(Error::Parse("BLEU on an empty candidate corpus".into()));
    }
    if clipped[0] == 0 {
        return Ok(0.0);
    }
    let mut log_sum = 0.0f64;
    let mut used = 0usize;
    for order in 0..BLEU_MAX_ORDER {
        if totals[order] == 0 {
            continue;
        }
        let numer = if clipped[order] == 0 { BLEU_EPS } else { clipped[order] as f64 };
        log_sum += (numer / totals[order] as f64).ln();
        used += 1;
    }
    let geo = (log_sum / used as f64).exp();
    let bp = if cand_len >= ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / cand_len as f64).exp()
    };
    Ok(bp * geo)
}

/// Binary confusion matrix with `ham` as the negative class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub true_ham: u64,
    pub false_spam: u64,
    pub false_ham: u64,
    pub true_spam: u64,
}

impl ConfusionMatrix {
    pub fn record(&mut self, actual_spam: bool, predicted_spam: bool) {
        match (actual_spam, predicted_spam) {
            (false, false) => self.true_ham += 1,
            (false, true) => self.false_spam += 1,
            (true, false) => self.false_ham += 1,
            (true, true) => self.true_spam += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.true_ham + self.false_spam + self.false_ham + self.true_spam
    }

    pub fn accuracy(&self) -> f64 {
        if self.total() == 0 {
            return 0.0;
        }
        (self.true_ham + self.true_spam) as f64 / self.total() as f64
    }

    pub fn actual_counts(&self) -> (u64, u64) {
        (self.true_ham + self.false_spam, self.false_ham + self.true_spam)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn cosine_of_self_is_one() {
        let v = [1.0f32, -2.0, 3.0];
        assert!((cosine_similarity(&v, &v).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cosine_of_orthogonal_is_zero() {
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
    }

    #[test]
    fn cosine_is_scale_invariant() {
        let r = cosine_similarity(&[1.0, 2.0], &[2.0, 4.0]).unwrap();
        assert!((r - 1.0).abs() < 1e-7);
    }

    #[test]
    fn cosine_zero_vector_is_an_error() {
        assert!(matches!(
            cosine_similarity(&[0.0, 0.0], &[1.0, 1.0]),
            Err(Error::ZeroVector)
        ));
    }

    #[test]
    fn pearson_perfect_positive() {
        let r = pearson_r(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap();
        assert!((r - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pearson_perfect_negative() {
        let r = pearson_r(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap();
        assert!((r + 1.0).abs() < 1e-12);
    }

    #[test]
    fn pearson_by_hand() {
        let r = pearson_r(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap();
        assert!((r - 0.5).abs() < 1e-12);
    }

    #[test]
    fn pearson_zero_variance_is_an_error() {
        assert!(matches!(
            pearson_r(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(Error::ZeroVariance(_))
        ));
    }

    #[test]
    fn bleu_identity_is_one() {
        let c = s(&["the cat sat on the mat", "a quick brown fox"]);
        assert!((corpus_bleu(&c, &c).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bleu_no_overlap_is_zero() {
        let c = s(&["aa bb cc"]);
        let r = s(&["dd ee ff"]);
        assert_eq!(corpus_bleu(&c, &r).unwrap(), 0.0);
    }

    #[test]
    fn bleu_clipping_by_hand() {
        // candidate "the the the" vs reference "the cat":
        // p1 clipped = min(3, 1)/3 = 1/3; candidate has no bigram match so
        // p2 = eps/2; orders 3 and 4 have totals 1 and 0 in the candidate.
        // len 3 > ref 2 so BP = 1.
        let c = s(&["the the the"]);
        let r = s(&["the cat"]);
        let got = corpus_bleu(&c, &r).unwrap();
        let p1 = 1.0f64 / 3.0;
        let p2 = 1e-9f64 / 2.0;
        let p3 = 1e-9f64 / 1.0;
        let want = ((p1.ln() + p2.ln() + p3.ln()) / 3.0).exp();
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }

    #[test]
    fn bleu_brevity_penalty_applies() {
        let c = s(&["the cat"]);
        let r = s(&["the cat sat on the mat"]);
        let got = corpus_bleu(&c, &r).unwrap();
        // p1 = 2/2, p2 = 1/1; orders 3-4 have no candidate n-grams.
        // BP = exp(1 - 6/2).
        let want = (1.0f64 - 3.0).exp();
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }

    #[test]
    fn confusion_counts_reconcile() {
        let mut cm = ConfusionMatrix::default();
        let cases = [(false, false), (false, true), (true, true), (true, true), (true, false)];
        for (a, p) in cases {
            cm.record(a, p);
        }
        assert_eq!(cm.total(), 5);
        let (ham, spam) = cm.actual_counts();
        assert_eq!(ham, 2);
        assert_eq!(spam, 3);
        assert!((cm.accuracy() - 3.0 / 5.0).abs() < 1e-12);
    }
}
