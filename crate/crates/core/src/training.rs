//! Batched training loops for all three regimes, loss logging, and
//! checkpoint persistence.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{MaskRegime, Model, ModelConfig};
use crate::nn::{adam_step, AdamConfig, Graph, Tensor};
use crate::rng::Rng;
use crate::tokenizer::{EncodedSentence, Vocabulary, MASK, PAD};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub steps: u64,
    pub lr: f32,
    pub seed: u64,
    pub regime: MaskRegime,
    pub log_every: u64,
}

impl TrainConfig {
    pub fn with_defaults(regime: MaskRegime, seed: u64) -> Self {
        TrainConfig { batch_size: 64, steps: 5000, lr: 1e-4, seed, regime, log_every: 10 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.steps == 0 {
            return Err(Error::Config("batch_size and steps must be >= 1".into()));
        }
        Ok(())
    }
}

/// One logged training step.
#[derive(Debug, Clone, PartialEq)]
pub struct LossLogRow {
    pub step: u64,
    pub regime: MaskRegime,
    /// Mean batch loss per gradient-carrying target.
    pub loss: f64,
    /// Number of positions that carried a gradient this step.
    pub targets: u64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Default)]
pub struct LossLog {
    pub rows: Vec<LossLogRow>,
}

impl LossLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,regime,loss,targets,ms\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{:.6},{},{:.3}\n",
                r.step,
                r.regime.as_str(),
                r.loss,
                r.targets,
                r.wall_ms
            ));
        }
        out
    }
}

/// A batch of right-padded id rows plus the validity mask (1 at real
/// positions, 0 at PAD).
#[derive(Debug, Clone)]
pub struct Batch {
    pub ids: Vec<Vec<usize>>,
    pub valid: Vec<Vec<f32>>,
}

impl Batch {
    pub fn width(&self) -> usize {
        self.ids.first().map(|r| r.len()).unwrap_or(0)
    }
}

/// Right-pad the given sentences to their common maximum length.
pub fn pad_batch(sentences: &[&EncodedSentence]) -> Result<Batch> {
    if sentences.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let width = sentences.iter().map(|s| s.len()).max().unwrap();
    let mut ids = Vec::with_capacity(sentences.len());
    let mut valid = Vec::with_capacity(sentences.len());
    for s in sentences {
        let mut row = s.ids.clone();
        let mut v = vec![1.0; row.len()];
        row.resize(width, PAD);
        v.resize(width, 0.0);
        ids.push(row);
        valid.push(v);
    }
    Ok(Batch { ids, valid })
}

/// Sample `batch_size` sentences uniformly with replacement and pad.
pub fn make_batch(
    sentences: &[EncodedSentence],
    batch_size: usize,
    rng: &mut Rng,
) -> Result<Batch> {
    if sentences.is_empty() || batch_size == 0 {
        return Err(Error::EmptyBatch);
    }
    let picked: Vec<&EncodedSentence> =
        (0..batch_size).map(|_| &sentences[rng.next_below(sentences.len())]).collect();
    pad_batch(&picked)
}

/// Replace each interior position of a sentence row by MASK with
/// probability `p`; returns the corrupted ids and the target weights
/// (1 exactly at replaced positions). If nothing was selected one
/// interior position is forced so the row always carries signal.
pub fn mlm_corrupt(ids: &[usize], p: f32, rng: &mut Rng) -> (Vec<usize>, Vec<f32>) {
    let real_len = ids.iter().filter(|&&id| id != PAD).count();
    let mut corrupted = ids.to_vec();
    let mut weights = vec![0.0f32; ids.len()];
    if real_len < 3 {
        return (corrupted, weights);
    }
    // Interior span: everything between START and END.
    let interior = 1..real_len - 1;
    let mut selected = Vec::new();
    for i in interior.clone() {
        if rng.bernoulli(p) {
            selected.push(i);
        }
    }
    if selected.is_empty() {
        let span = real_len - 2;
        selected.push(1 + rng.next_below(span));
    }
    for i in selected {
        corrupted[i] = MASK;
        weights[i] = 1.0;
    }
    (corrupted, weights)
}

/// Per-row training targets for one regime: (input ids, target ids,
/// weights).
fn prepare_row(
    ids: &[usize],
    regime: MaskRegime,
    mlm_prob: f32,
    rng: &mut Rng,
) -> (Vec<usize>, Vec<usize>, Vec<f32>) {
    let n = ids.len();
    let real_len = ids.iter().filter(|&&id| id != PAD).count();
    match regime {
        MaskRegime::Causal => {
            // Position i predicts token i+1, over the real span.
            let mut targets = vec![0usize; n];
            let mut weights = vec![0.0f32; n];
            for i in 0..real_len.saturating_sub(1) {
                targets[i] = ids[i + 1];
                weights[i] = 1.0;
            }
            (ids.to_vec(), targets, weights)
        }
        MaskRegime::WindowDiagonal => {
            // Every non-START real position predicts its own token.
            let mut targets = vec![0usize; n];
            let mut weights = vec![0.0f32; n];
            for i in 1..real_len {
                targets[i] = ids[i];
                weights[i] = 1.0;
            }
            (ids.to_vec(), targets, weights)
        }
        MaskRegime::RandomMlm => {
            let (corrupted, weights) = mlm_corrupt(ids, mlm_prob, rng);
            (corrupted, ids.to_vec(), weights)
        }
    }
}

/// One optimization step on a batch: forward, one backward, one Adam
/// update. Returns the mean loss per target and the gradient-carrying
/// target count.
pub fn train_step(
    model: &mut Model,
    batch: &Batch,
    adam: AdamConfig,
    rng: &mut Rng,
) -> Result<(f64, u64)> {
    let mut g = Graph::new();
    let bound = model.bind(&mut g);
    let mut sums = Vec::with_capacity(batch.ids.len());
    let mut total_w = 0.0f32;
    for row in &batch.ids {
        let (input, targets, weights) =
            prepare_row(row, model.config.regime, model.config.mlm_prob, rng);
        let acts = model.forward_bound(&mut g, &bound, &input, true, rng, None)?;
        let (sum, w) = g.cross_entropy_sum(acts.logits, &targets, &weights)?;
        sums.push(sum);
        total_w += w;
    }
    if total_w == 0.0 {
        return Err(Error::NoSignal);
    }
    let total = g.add_n(&sums);
    let loss = g.scale(total, 1.0 / total_w);
    let loss_value = g.value(loss).data[0] as f64;
    g.backward(loss)?;
    model.accumulate_grads(&g, &bound);
    adam_step(model.parameters_mut(), adam)?;
    Ok((loss_value, total_w as u64))
}

/// Train a fresh model on the corpus per the configs. Batches are
/// sampled uniformly with replacement by the seeded generator; a log row
/// is emitted every `log_every` steps (and at step 1).
pub fn train_loop(
    corpus: &[EncodedSentence],
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
) -> Result<(Model, LossLog)> {
    train_cfg.validate()?;
    if corpus.len() < train_cfg.batch_size {
        return Err(Error::Config(format!(
            "corpus of {} sentences is smaller than one batch of {}",
            corpus.len(),
            train_cfg.batch_size
        )));
    }
    for s in corpus {
        if s.len() > model_cfg.max_len {
            return Err(Error::TooLong { len: s.len(), max_len: model_cfg.max_len });
        }
    }
    let mut rng = Rng::new(train_cfg.seed);
    let mut init_rng = rng.split();
    let mut model = Model::new(model_cfg, &mut init_rng)?;
    let adam = AdamConfig { lr: train_cfg.lr, ..AdamConfig::default() };
    let mut log = LossLog::default();
    for step in 1..=train_cfg.steps {
        let start = Instant::now();
        let batch = make_batch(corpus, train_cfg.batch_size, &mut rng)?;
        let (loss, targets) = train_step(&mut model, &batch, adam, &mut rng)?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { step });
        }
        if step == 1 || step % train_cfg.log_every == 0 {
            log.rows.push(LossLogRow {
                step,
                regime: model.config.regime,
                loss,
                targets,
                wall_ms: start.elapsed().as_secs_f64() * 1e3,
            });
        }
    }
    Ok((model, log))
}

// --- Checkpoint format -------------------------------------------------
//
// Little-endian binary, magic "WLM1", version u32, then tagged sections
// (tag, u64 length, payload) in fixed order:
//   CFG\0  JSON of (ModelConfig, TrainConfig, completed_steps)
//   VOCB   u64 FNV-1a hash of the vocabulary text, then the text
//   PRMS   parameter blocks in `Model::parameters()` order
// and a trailing u64 FNV-1a checksum of everything before it.

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"WLM1";

#[derive(Serialize, Deserialize)]
struct ConfigSection {
    model: ModelConfig,
    train: TrainConfig,
    completed_steps: u64,
}

#[derive(Debug)]
pub struct Checkpoint {
    pub model: Model,
    pub vocab: Vocabulary,
    pub train: TrainConfig,
    pub completed_steps: u64,
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf29ce484222325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

fn push_section(out: &mut Vec<u8>, tag: &[u8; 4], payload: &[u8]) {
    out.extend_from_slice(tag);
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(payload);
}

fn tensor_bytes(out: &mut Vec<u8>, t: &Tensor) {
    for &v in &t.data {
        out.extend_from_slice(&v.to_bits().to_le_bytes());
    }
}

pub fn checkpoint_to_bytes(ckpt: &Checkpoint) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());

    let cfg = ConfigSection {
        model: ckpt.model.config.clone(),
        train: ckpt.train.clone(),
        completed_steps: ckpt.completed_steps,
    };
    push_section(&mut out, b"CFG\0", serde_json::to_string(&cfg).unwrap().as_bytes());

    let vocab_text = ckpt.vocab.to_text();
    let mut vocb = fnv1a64(vocab_text.as_bytes()).to_le_bytes().to_vec();
    vocb.extend_from_slice(vocab_text.as_bytes());
    push_section(&mut out, b"VOCB", &vocb);

    let mut prms = Vec::new();
    let params = ckpt.model.parameters();
    prms.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for p in params {
        let name = p.name.as_bytes();
        prms.extend_from_slice(&(name.len() as u16).to_le_bytes());
        prms.extend_from_slice(name);
        prms.extend_from_slice(&p.step_count.to_le_bytes());
        prms.push(p.value.shape.len() as u8);
        for &d in &p.value.shape {
            prms.extend_from_slice(&(d as u64).to_le_bytes());
        }
        tensor_bytes(&mut prms, &p.value);
        tensor_bytes(&mut prms, &p.adam_m);
        tensor_bytes(&mut prms, &p.adam_v);
    }
    push_section(&mut out, b"PRMS", &prms);

    let checksum = fnv1a64(&out);
    out.extend_from_slice(b"SUM\0");
    out.extend_from_slice(&checksum.to_le_bytes());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.offset + n > self.bytes.len() {
            return Err(Error::CheckpointCorrupt {
                offset: self.offset as u64,
                reason: format!("truncated while reading {what}"),
            });
        }
        let slice = &self.bytes[self.offset..self.offset + n];
        self.offset += n;
        Ok(slice)
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn section(&mut self, tag: &[u8; 4]) -> Result<&'a [u8]> {
        let offset = self.offset;
        let got = self.take(4, "section tag")?;
        if got != tag {
            return Err(Error::CheckpointCorrupt {
                offset: offset as u64,
                reason: format!("expected section {:?}, found {:?}", tag, got),
            });
        }
        let len = self.u64("section length")? as usize;
        self.take(len, "section payload")
    }
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { bytes, offset: 0 };
    let magic = r.take(4, "magic")?;
    if magic != MAGIC {
        return Err(Error::CheckpointCorrupt { offset: 0, reason: "bad magic bytes".into() });
    }
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::CheckpointVersion { found: version, expected: CHECKPOINT_VERSION });
    }

    // Verify the trailing checksum before trusting any payload.
    if bytes.len() < 12 {
        return Err(Error::CheckpointCorrupt {
            offset: bytes.len() as u64,
            reason: "file too short for checksum".into(),
        });
    }
    let body_end = bytes.len() - 12;
    if &bytes[body_end..body_end + 4] != b"SUM\0" {
        return Err(Error::CheckpointCorrupt {
            offset: body_end as u64,
            reason: "missing checksum trailer".into(),
        });
    }
    let stored = u64::from_le_bytes(bytes[body_end + 4..].try_into().unwrap());
    let computed = fnv1a64(&bytes[..body_end]);
    if stored != computed {
        return Err(Error::CheckpointCorrupt {
            offset: body_end as u64,
            reason: format!("checksum mismatch: stored {stored:#x}, computed {computed:#x}"),
        });
    }

    let cfg_payload = r.section(b"CFG\0")?;
    let cfg: ConfigSection = serde_json::from_slice(cfg_payload)
        .map_err(|e| Error::Parse(format!("checkpoint config: {e}")))?;

    let vocb = r.section(b"VOCB")?;
    if vocb.len() < 8 {
        return Err(Error::CheckpointCorrupt {
            offset: r.offset as u64,
            reason: "vocabulary section too short".into(),
        });
    }
    let vocab_hash = u64::from_le_bytes(vocb[..8].try_into().unwrap());
    let vocab_text = std::str::from_utf8(&vocb[8..])
        .map_err(|e| Error::Parse(format!("vocabulary not UTF-8: {e}")))?;
    if fnv1a64(vocab_text.as_bytes()) != vocab_hash {
        return Err(Error::CheckpointCorrupt {
            offset: r.offset as u64,
            reason: "vocabulary content hash mismatch".into(),
        });
    }
    let vocab = Vocabulary::from_text(vocab_text)?;

    let prms = r.section(b"PRMS")?;
    let mut pr = Reader { bytes: prms, offset: 0 };
    let count = pr.u64("parameter count")? as usize;
    let mut model = Model::new(cfg.model, &mut Rng::new(0))?;
    let params = model.parameters_mut();
    if params.len() != count {
        return Err(Error::CheckpointCorrupt {
            offset: 0,
            reason: format!("parameter count {} does not match model ({})", count, params.len()),
        });
    }
    for p in params {
        let name_len = u16::from_le_bytes(pr.take(2, "name length")?.try_into().unwrap()) as usize;
        let name = std::str::from_utf8(pr.take(name_len, "name")?)
            .map_err(|e| Error::Parse(format!("parameter name: {e}")))?;
        if name != p.name {
            return Err(Error::CheckpointCorrupt {
                offset: pr.offset as u64,
                reason: format!("parameter `{name}` does not match expected `{}`", p.name),
            });
        }
        p.step_count = pr.u64("step count")?;
        let ndim = pr.take(1, "ndim")?[0] as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(pr.u64("dim")? as usize);
        }
        if shape != p.value.shape {
            return Err(Error::CheckpointCorrupt {
                offset: pr.offset as u64,
                reason: format!("parameter `{name}` shape {shape:?} != {:?}", p.value.shape),
            });
        }
        for tensor in [&mut p.value, &mut p.adam_m, &mut p.adam_v] {
            let raw = pr.take(4 * tensor.numel(), "tensor data")?;
            for (i, chunk) in raw.chunks_exact(4).enumerate() {
                tensor.data[i] = f32::from_bits(u32::from_le_bytes(chunk.try_into().unwrap()));
            }
        }
    }

    Ok(Checkpoint { model, vocab, train: cfg.train, completed_steps: cfg.completed_steps })
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let bytes = checkpoint_to_bytes(ckpt);
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let bytes = std::fs::read(path)?;
    checkpoint_from_bytes(&bytes)
}
