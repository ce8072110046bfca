//! Spam-classification probe: pooled sentence representations feed a
//! logistic regression over a seeded, stratified train/test split.

use crate::error::{Error, Result};
use crate::eval::data::LabeledMessage;
use crate::eval::logreg::logreg_train;
use crate::eval::metrics::ConfusionMatrix;
use crate::model::Model;
use crate::repr::{sentence_vector, ReprLevel};
use crate::rng::Rng;
use crate::tokenizer::{encode, Vocabulary};

#[derive(Debug, Clone)]
pub struct SmsReport {
    pub level: ReprLevel,
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
    pub train_size: usize,
    pub test_size: usize,
    /// Messages dropped because they failed to encode or pool.
    pub skipped: usize,
    pub split_seed: u64,
}

impl SmsReport {
    /// Summary CSV with a documented header and one data row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "level,accuracy,true_ham,false_spam,false_ham,true_spam,train,test,skipped,split_seed\n",
        );
        out.push_str(&format!(
            "{},{:.6},{},{},{},{},{},{},{},{}\n",
            self.level.label(),
            self.accuracy,
            self.confusion.true_ham,
            self.confusion.false_spam,
            self.confusion.false_ham,
            self.confusion.true_spam,
            self.train_size,
            self.test_size,
            self.skipped,
            self.split_seed
        ));
        out
    }
}

fn shuffled(len: usize, rng: &mut Rng) -> Vec<usize> {
    let mut order: Vec<usize> = (0..len).collect();
    for i in (1..len).rev() {
        let j = rng.next_below(i + 1);
        order.swap(i, j);
    }
    order
}

/// Stratified 80/20 split: within each class the seeded shuffle sends
/// the first fifth (at least one message) to the test split.
fn split_class(indices: &[usize], rng: &mut Rng) -> (Vec<usize>, Vec<usize>) {
    let order = shuffled(indices.len(), rng);
    let test_count = (indices.len() / 5).max(1);
    let mut test: Vec<usize> = order[..test_count].iter().map(|&i| indices[i]).collect();
    let mut train: Vec<usize> = order[test_count..].iter().map(|&i| indices[i]).collect();
    test.sort_unstable();
    train.sort_unstable();
    (train, test)
}

pub fn sms_eval(
    model: &Model,
    vocab: &Vocabulary,
    messages: &[LabeledMessage],
    level: ReprLevel,
    split_seed: u64,
) -> Result<SmsReport> {
    let max_len = model.config.max_len;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut skipped = 0usize;
    for msg in messages {
        let vector = encode(vocab, &msg.text, max_len)
            .and_then(|s| sentence_vector(model, &s, level));
        match vector {
            Ok(v) => {
                features.push(v.values);
                labels.push(msg.spam);
            }
            Err(_) => skipped += 1,
        }
    }
    let ham: Vec<usize> = (0..labels.len()).filter(|&i| !labels[i]).collect();
    let spam: Vec<usize> = (0..labels.len()).filter(|&i| labels[i]).collect();
    if ham.len() < 2 || spam.len() < 2 {
        return Err(Error::SingleClass);
    }
    let mut rng = Rng::new(split_seed);
    let (ham_train, ham_test) = split_class(&ham, &mut rng);
    let (spam_train, spam_test) = split_class(&spam, &mut rng);
    let mut train: Vec<usize> = ham_train;
    train.extend(spam_train);
    train.sort_unstable();
    let mut test: Vec<usize> = ham_test;
    test.extend(spam_test);
    test.sort_unstable();

    let train_x: Vec<Vec<f32>> = train.iter().map(|&i| features[i].clone()).collect();
    let train_y: Vec<bool> = train.iter().map(|&i| labels[i]).collect();
    let probe = logreg_train(&train_x, &train_y, 300, 0.5, split_seed)?;

    let mut confusion = ConfusionMatrix::default();
    for &i in &test {
        confusion.record(labels[i], probe.predict(&features[i]));
    }
    Ok(SmsReport {
        level,
        accuracy: confusion.accuracy(),
        confusion,
        train_size: train.len(),
        test_size: test.len(),
        skipped,
        split_seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{MaskRegime, Model, ModelConfig};
    use std::io::Cursor;

    fn setup() -> (Model, Vocabulary) {
        let corpus = "win cash prize now call free offer hello how are you see you at lunch today meeting";
        let vocab = Vocabulary::build(Cursor::new(corpus), 100, 1).unwrap();
        let cfg = ModelConfig {
            num_layers: 1,
            model_dim: 8,
            num_heads: 2,
            ffn_dim: 16,
            vocab_size: vocab.len(),
            max_len: 16,
            dropout_rate: 0.0,
            regime: MaskRegime::WindowDiagonal,
            mlm_prob: 0.15,
        };
        (Model::new(cfg, &mut Rng::new(5)).unwrap(), vocab)
    }

    fn corpus_messages() -> Vec<LabeledMessage> {
        let spam = ["win cash now", "free prize call", "call now win", "free cash offer"];
        let ham = ["hello how are you", "see you at lunch", "meeting today", "how are you today"];
        let mut messages = Vec::new();
        for _ in 0..3 {
            for s in spam {
                messages.push(LabeledMessage { spam: true, text: s.into() });
            }
            for h in ham {
                messages.push(LabeledMessage { spam: false, text: h.into() });
            }
        }
        messages
    }

    #[test]
    fn confusion_entries_sum_to_test_size() {
        let (model, vocab) = setup();
        let report =
            sms_eval(&model, &vocab, &corpus_messages(), ReprLevel::Output, 42).unwrap();
        assert_eq!(report.confusion.total() as usize, report.test_size);
        assert_eq!(report.train_size + report.test_size, corpus_messages().len());
        assert_eq!(report.skipped, 0);
    }

    #[test]
    fn split_is_stratified() {
        let (model, vocab) = setup();
        let report =
            sms_eval(&model, &vocab, &corpus_messages(), ReprLevel::Embed, 7).unwrap();
        // 12 per class: 2 test messages from each class (12 / 5 = 2).
        let (ham, spam) = report.confusion.actual_counts();
        assert_eq!(ham, 2);
        assert_eq!(spam, 2);
    }

    #[test]
    fn same_seed_reproduces_the_report() {
        let (model, vocab) = setup();
        let msgs = corpus_messages();
        let a = sms_eval(&model, &vocab, &msgs, ReprLevel::Output, 9).unwrap();
        let b = sms_eval(&model, &vocab, &msgs, ReprLevel::Output, 9).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
    }

    #[test]
    fn single_class_is_an_error() {
        let (model, vocab) = setup();
        let msgs: Vec<LabeledMessage> = (0..6)
            .map(|_| LabeledMessage { spam: true, text: "win cash now".into() })
            .collect();
        assert!(matches!(
            sms_eval(&model, &vocab, &msgs, ReprLevel::Output, 1),
            Err(Error::SingleClass)
        ));
    }
}
