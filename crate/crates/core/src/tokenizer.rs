//! Word-level tokenization, vocabulary construction, and sentence
//! encoding with the special markers training instances require.

use std::collections::HashMap;
use std::io::BufRead;

use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const START: usize = 2;
pub const END: usize = 3;
pub const MASK: usize = 4;

pub const SPECIAL_TOKENS: [&str; 5] = ["<pad>", "<unk>", "<start>", "<end>", "<mask>"];
const NUM_SPECIALS: usize = 5;

/// Lowercased whitespace-plus-punctuation tokenization: alphanumeric
/// runs become tokens, punctuation characters become single-character
/// tokens, whitespace separates. Whitespace-delimited chunks that spell
/// a special token (e.g. `<unk>` produced by `decode`) stay atomic so
/// that encode-decode-encode is idempotent.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for chunk in text.split_whitespace() {
        let lower: String = chunk.chars().flat_map(|c| c.to_lowercase()).collect();
        if SPECIAL_TOKENS.contains(&lower.as_str()) {
            tokens.push(lower);
            continue;
        }
        let mut current = String::new();
        for ch in lower.chars() {
            if ch.is_alphanumeric() || ch == '\'' {
                current.push(ch);
            } else {
                if !current.is_empty() {
                    tokens.push(std::mem::take(&mut current));
                }
                tokens.push(ch.to_string());
            }
        }
        if !current.is_empty() {
            tokens.push(current);
        }
    }
    tokens
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    token_to_id: HashMap<String, usize>,
    id_to_token: Vec<String>,
}

impl Vocabulary {
    /// Build a vocabulary from a line-oriented corpus. Tokens are ranked
    /// by frequency, ties broken lexicographically; the top
    /// `max_size - 5` tokens with frequency >= `min_freq` are kept.
    pub fn build(corpus: impl BufRead, max_size: usize, min_freq: u64) -> Result<Self> {
        if max_size <= NUM_SPECIALS {
            return Err(Error::Config(format!(
                "vocabulary max_size {max_size} must exceed {NUM_SPECIALS}"
            )));
        }
        let mut counts: HashMap<String, u64> = HashMap::new();
        let mut saw_any = false;
        for line in corpus.lines() {
            let line = line?;
            for tok in tokenize(&line) {
                saw_any = true;
                *counts.entry(tok).or_insert(0) += 1;
            }
        }
        if !saw_any {
            return Err(Error::EmptyCorpus);
        }
        let mut ranked: Vec<(String, u64)> =
            counts.into_iter().filter(|(_, c)| *c >= min_freq).collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(max_size - NUM_SPECIALS);

        let mut id_to_token: Vec<String> =
            SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
        id_to_token.extend(ranked.into_iter().map(|(t, _)| t));
        let token_to_id = id_to_token
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Ok(Vocabulary { token_to_id, id_to_token })
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        false // specials are always present
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.token_to_id.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.id_to_token.get(id).map(|s| s.as_str())
    }

    /// One token per line; the first five lines are the special tokens,
    /// so line number equals id.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for tok in &self.id_to_token {
            out.push_str(tok);
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let id_to_token: Vec<String> = text.lines().map(|l| l.to_string()).collect();
        if id_to_token.len() < NUM_SPECIALS {
            return Err(Error::Parse("vocabulary file shorter than the special header".into()));
        }
        for (i, want) in SPECIAL_TOKENS.iter().enumerate() {
            if id_to_token[i] != *want {
                return Err(Error::Parse(format!(
                    "vocabulary header line {i} is `{}`, expected `{want}`",
                    id_to_token[i]
                )));
            }
        }
        let token_to_id = id_to_token
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Ok(Vocabulary { token_to_id, id_to_token })
    }
}

/// A sentence encoded as token ids bracketed by START/END.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedSentence {
    pub ids: Vec<usize>,
}

impl EncodedSentence {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Encode text as START + mapped ids + END, truncated so the total
/// length never exceeds `max_len` with END kept last.
pub fn encode(vocab: &Vocabulary, text: &str, max_len: usize) -> Result<EncodedSentence> {
    let tokens = tokenize(text);
    if tokens.is_empty() {
        return Err(Error::EmptySentence);
    }
    let keep = tokens.len().min(max_len.saturating_sub(2));
    let mut ids = Vec::with_capacity(keep + 2);
    ids.push(START);
    for tok in &tokens[..keep] {
        // Structural specials never appear inside a span; any literal
        // occurrence in text degrades to UNK.
        let id = match vocab.id(tok) {
            Some(PAD) | Some(START) | Some(END) | Some(MASK) | None => UNK,
            Some(id) => id,
        };
        ids.push(id);
    }
    ids.push(END);
    Ok(EncodedSentence { ids })
}

/// Inverse of `encode` on in-vocabulary text modulo casing; special
/// tokens other than UNK are dropped.
pub fn decode(vocab: &Vocabulary, ids: &[usize]) -> Result<String> {
    let mut words = Vec::new();
    for &id in ids {
        let tok = vocab
            .token(id)
            .ok_or(Error::IdOutOfRange { id, vocab_size: vocab.len() })?;
        match id {
            PAD | START | END | MASK => {}
            UNK => words.push(SPECIAL_TOKENS[UNK]),
            _ => words.push(tok),
        }
    }
    Ok(words.join(" "))
}
