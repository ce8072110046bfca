//! Shared transformer encoder with three pluggable masking regimes:
//! causal (GPT-style), random-MLM (BERT-style), and window masking with
//! shifted-residual prediction.
//!
//! Under `WindowDiagonal` the attention-score diagonal is masked so no
//! position attends to itself, and the prediction path for position i is
//! built entirely from other positions: the attention query and the
//! residual input for row i are both taken from row i-1 of the incoming
//! stream. With a single layer this makes the logits at position i
//! exactly independent of the input embedding at position i; with more
//! layers a partial flow through other positions' hidden states remains.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Graph, Parameter, Tensor, Var, MASK_NEG};
use crate::rng::Rng;
use crate::tokenizer::PAD;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MaskRegime {
    Causal,
    WindowDiagonal,
    RandomMlm,
}

impl MaskRegime {
    pub fn as_str(&self) -> &'static str {
        match self {
            MaskRegime::Causal => "causal",
            MaskRegime::WindowDiagonal => "window",
            MaskRegime::RandomMlm => "mlm",
        }
    }
}

impl std::str::FromStr for MaskRegime {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "causal" => Ok(MaskRegime::Causal),
            "window" => Ok(MaskRegime::WindowDiagonal),
            "mlm" => Ok(MaskRegime::RandomMlm),
            other => Err(Error::Config(format!(
                "unknown regime `{other}`; valid: causal, window, mlm"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub num_layers: usize,
    pub model_dim: usize,
    pub num_heads: usize,
    pub ffn_dim: usize,
    pub vocab_size: usize,
    pub max_len: usize,
    pub dropout_rate: f32,
    pub regime: MaskRegime,
    /// Corruption probability; used only by `RandomMlm`.
    pub mlm_prob: f32,
}

impl ModelConfig {
    pub fn with_defaults(vocab_size: usize, regime: MaskRegime) -> Self {
        ModelConfig {
            num_layers: 3,
            model_dim: 64,
            num_heads: 4,
            ffn_dim: 2048,
            vocab_size,
            max_len: 64,
            dropout_rate: 0.2,
            regime,
            mlm_prob: 0.15,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.model_dim % self.num_heads != 0 {
            return Err(Error::Config(format!(
                "model_dim {} not divisible by num_heads {}",
                self.model_dim, self.num_heads
            )));
        }
        if self.regime == MaskRegime::RandomMlm && !(self.mlm_prob > 0.0 && self.mlm_prob < 1.0) {
            return Err(Error::Config(format!(
                "mlm_prob {} must lie strictly between 0 and 1",
                self.mlm_prob
            )));
        }
        if self.num_layers == 0 || self.model_dim == 0 || self.vocab_size == 0 {
            return Err(Error::Config("zero-sized model dimension".into()));
        }
        Ok(())
    }
}

/// Additive n-by-n attention mask of {0, MASK_NEG} entries.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMask {
    pub n: usize,
    pub data: Vec<f32>,
}

impl AttentionMask {
    pub fn is_masked(&self, i: usize, j: usize) -> bool {
        self.data[i * self.n + j] <= MASK_NEG / 2.0
    }
}

/// Build the regime mask for a length-n sequence.
///
/// - `WindowDiagonal`: exactly the diagonal is masked;
/// - `Causal`: the strict upper triangle is masked;
/// - `RandomMlm`: all zeros (masking happens at input corruption).
pub fn build_mask(regime: MaskRegime, n: usize) -> Result<AttentionMask> {
    if n < 2 {
        return Err(Error::Config(format!("degenerate sequence of length {n}")));
    }
    let mut data = vec![0.0f32; n * n];
    match regime {
        MaskRegime::WindowDiagonal => {
            for i in 0..n {
                data[i * n + i] = MASK_NEG;
            }
        }
        MaskRegime::Causal => {
            for i in 0..n {
                for j in (i + 1)..n {
                    data[i * n + j] = MASK_NEG;
                }
            }
        }
        MaskRegime::RandomMlm => {}
    }
    Ok(AttentionMask { n, data })
}

/// Token vectors at each representation level of a single forward pass.
#[derive(Debug, Clone)]
pub struct LayerActivations {
    pub embed_out: Tensor,
    pub context_out: Vec<Tensor>,
    pub final_hidden: Tensor,
    pub logits: Tensor,
}

#[derive(Debug, Clone)]
pub struct LayerParams {
    pub wq: Parameter,
    pub bq: Parameter,
    pub wk: Parameter,
    pub bk: Parameter,
    pub wv: Parameter,
    pub bv: Parameter,
    pub wo: Parameter,
    pub bo: Parameter,
    /// 2d->d combine projection; present only under `WindowDiagonal`.
    pub combine_w: Option<Parameter>,
    pub combine_b: Option<Parameter>,
    pub ln1_gain: Parameter,
    pub ln1_bias: Parameter,
    pub ffn_w1: Parameter,
    pub ffn_b1: Parameter,
    pub ffn_w2: Parameter,
    pub ffn_b2: Parameter,
    pub ln2_gain: Parameter,
    pub ln2_bias: Parameter,
}

#[derive(Debug, Clone)]
pub struct ModelParams {
    pub tok_embed: Parameter,
    pub pos_embed: Parameter,
    pub layers: Vec<LayerParams>,
}

#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ModelParams,
}

pub const LN_EPS: f32 = 1e-5;

fn linear_init(name: String, rows: usize, cols: usize, rng: &mut Rng) -> Parameter {
    let std = 1.0 / (rows as f32).sqrt();
    Parameter::new(name, Tensor::randn(vec![rows, cols], std, rng))
}

impl Model {
    pub fn new(config: ModelConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let d = config.model_dim;
        let tok_embed = Parameter::new(
            "tok_embed",
            Tensor::randn(vec![config.vocab_size, d], 0.02, rng),
        );
        let pos_embed =
            Parameter::new("pos_embed", Tensor::randn(vec![config.max_len, d], 0.02, rng));
        let mut layers = Vec::with_capacity(config.num_layers);
        for l in 0..config.num_layers {
            let p = |s: &str| format!("layer{l}.{s}");
            let combine = config.regime == MaskRegime::WindowDiagonal;
            layers.push(LayerParams {
                wq: linear_init(p("wq"), d, d, rng),
                bq: Parameter::new(p("bq"), Tensor::zeros(vec![d])),
                wk: linear_init(p("wk"), d, d, rng),
                bk: Parameter::new(p("bk"), Tensor::zeros(vec![d])),
                wv: linear_init(p("wv"), d, d, rng),
                bv: Parameter::new(p("bv"), Tensor::zeros(vec![d])),
                wo: linear_init(p("wo"), d, d, rng),
                bo: Parameter::new(p("bo"), Tensor::zeros(vec![d])),
                combine_w: combine.then(|| linear_init(p("combine_w"), 2 * d, d, rng)),
                combine_b: combine.then(|| Parameter::new(p("combine_b"), Tensor::zeros(vec![d]))),
                ln1_gain: Parameter::new(p("ln1_gain"), Tensor::full(vec![d], 1.0)),
                ln1_bias: Parameter::new(p("ln1_bias"), Tensor::zeros(vec![d])),
                ffn_w1: linear_init(p("ffn_w1"), d, config.ffn_dim, rng),
                ffn_b1: Parameter::new(p("ffn_b1"), Tensor::zeros(vec![config.ffn_dim])),
                ffn_w2: linear_init(p("ffn_w2"), config.ffn_dim, d, rng),
                ffn_b2: Parameter::new(p("ffn_b2"), Tensor::zeros(vec![d])),
                ln2_gain: Parameter::new(p("ln2_gain"), Tensor::full(vec![d], 1.0)),
                ln2_bias: Parameter::new(p("ln2_bias"), Tensor::zeros(vec![d])),
            });
        }
        Ok(Model { config, params: ModelParams { tok_embed, pos_embed, layers } })
    }

    /// Parameters in a fixed traversal order (shared by the optimizer,
    /// the checkpoint format, and `BoundParams::flat`).
    pub fn parameters(&self) -> Vec<&Parameter> {
        let mut out = vec![&self.params.tok_embed, &self.params.pos_embed];
        for l in &self.params.layers {
            out.extend([&l.wq, &l.bq, &l.wk, &l.bk, &l.wv, &l.bv, &l.wo, &l.bo]);
            if let (Some(w), Some(b)) = (&l.combine_w, &l.combine_b) {
                out.extend([w, b]);
            }
            out.extend([
                &l.ln1_gain, &l.ln1_bias, &l.ffn_w1, &l.ffn_b1, &l.ffn_w2, &l.ffn_b2,
                &l.ln2_gain, &l.ln2_bias,
            ]);
        }
        out
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        let mut out = vec![&mut self.params.tok_embed, &mut self.params.pos_embed];
        for l in &mut self.params.layers {
            out.extend([
                &mut l.wq, &mut l.bq, &mut l.wk, &mut l.bk, &mut l.wv, &mut l.bv, &mut l.wo,
                &mut l.bo,
            ]);
            if let (Some(w), Some(b)) = (&mut l.combine_w, &mut l.combine_b) {
                out.extend([w, b]);
            }
            out.extend([
                &mut l.ln1_gain,
                &mut l.ln1_bias,
                &mut l.ffn_w1,
                &mut l.ffn_b1,
                &mut l.ffn_w2,
                &mut l.ffn_b2,
                &mut l.ln2_gain,
                &mut l.ln2_bias,
            ]);
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.parameters().iter().map(|p| p.value.numel()).sum()
    }

    /// Register every parameter on a fresh graph; returns the leaf vars
    /// in `parameters()` order.
    pub fn bind(&self, g: &mut Graph) -> BoundParams {
        let vars: Vec<Var> =
            self.parameters().into_iter().map(|p| g.leaf(p.value.clone())).collect();
        BoundParams { vars }
    }

    /// Copy the gradients computed on `g` back into the parameters.
    pub fn accumulate_grads(&mut self, g: &Graph, bound: &BoundParams) {
        let grads: Vec<Vec<f32>> = bound.vars.iter().map(|&v| g.grad(v)).collect();
        for (p, grad) in self.parameters_mut().into_iter().zip(grads) {
            p.accumulate_grad(&grad);
        }
    }

    /// Full forward pass on a bound graph. `perturb` optionally adds a
    /// delta to one row of the input embedding (the leakage oracle hook).
    pub fn forward_bound(
        &self,
        g: &mut Graph,
        bound: &BoundParams,
        ids: &[usize],
        training: bool,
        rng: &mut Rng,
        perturb: Option<(usize, &[f32])>,
    ) -> Result<ActivationVars> {
        let n = ids.len();
        let d = self.config.model_dim;
        if n > self.config.max_len {
            return Err(Error::TooLong { len: n, max_len: self.config.max_len });
        }
        let mask = self.sequence_mask(ids)?;
        let mut it = bound.vars.iter().copied();
        let mut next = || it.next().expect("bound params exhausted");
        let tok_embed = next();
        let pos_embed = next();

        let tok = g.gather(tok_embed, ids)?;
        let positions: Vec<usize> = (0..n).collect();
        let pos = g.gather(pos_embed, &positions)?;
        let mut x = g.add(tok, pos)?;
        if let Some((row, delta)) = perturb {
            let mut t = Tensor::zeros(vec![n, d]);
            t.data[row * d..(row + 1) * d].copy_from_slice(delta);
            let delta_var = g.leaf(t);
            x = g.add(x, delta_var)?;
        }
        let embed_out = x;
        x = g.dropout(x, self.config.dropout_rate, training, rng)?;

        let is_window = self.config.regime == MaskRegime::WindowDiagonal;
        let mut contexts = Vec::with_capacity(self.config.num_layers);
        for _ in 0..self.config.num_layers {
            let wq = next();
            let bq = next();
            let wk = next();
            let bk = next();
            let wv = next();
            let bv = next();
            let wo = next();
            let bo = next();
            let combine = if is_window { Some((next(), next())) } else { None };
            let ln1_gain = next();
            let ln1_bias = next();
            let ffn_w1 = next();
            let ffn_b1 = next();
            let ffn_w2 = next();
            let ffn_b2 = next();
            let ln2_gain = next();
            let ln2_bias = next();

            // Under window masking the query and residual for row i come
            // from row i-1 so the prediction path never sees token i.
            let q_input = if is_window { g.shift_rows_down(x)? } else { x };
            let attn_out = attention(
                g,
                q_input,
                x,
                &mask,
                self.config.num_heads,
                AttentionWeights { wq, bq, wk, bk, wv, bv, wo, bo },
            )?;
            let attn_out = g.dropout(attn_out, self.config.dropout_rate, training, rng)?;

            let r = match combine {
                Some((wc, bc)) => {
                    shifted_residual_combine(g, attn_out, x, wc, bc, ln1_gain, ln1_bias)?
                }
                None => {
                    let s = g.add(attn_out, x)?;
                    g.layer_norm(s, ln1_gain, ln1_bias, LN_EPS)?
                }
            };

            let h1 = g.matmul(r, ffn_w1)?;
            let h1 = g.add_bias(h1, ffn_b1)?;
            let h1 = g.relu(h1);
            let h1 = g.dropout(h1, self.config.dropout_rate, training, rng)?;
            let h2 = g.matmul(h1, ffn_w2)?;
            let h2 = g.add_bias(h2, ffn_b2)?;
            let h2 = g.dropout(h2, self.config.dropout_rate, training, rng)?;
            let s2 = g.add(r, h2)?;
            x = g.layer_norm(s2, ln2_gain, ln2_bias, LN_EPS)?;
            contexts.push(x);
        }

        // Tied softmax: output projection shares the embedding table.
        let logits = g.matmul_bt(x, tok_embed)?;
        Ok(ActivationVars { embed_out, contexts, final_hidden: x, logits })
    }

    /// Regime mask combined with the padding mask: PAD columns are
    /// unattendable from every position.
    fn sequence_mask(&self, ids: &[usize]) -> Result<AttentionMask> {
        let n = ids.len();
        let mut mask = build_mask(self.config.regime, n)?;
        for (j, &id) in ids.iter().enumerate() {
            if id == PAD {
                for i in 0..n {
                    mask.data[i * n + j] = MASK_NEG;
                }
            }
        }
        Ok(mask)
    }

    /// Inference forward pass: deterministic, dropout off.
    pub fn forward(&self, ids: &[usize]) -> Result<LayerActivations> {
        self.forward_perturbed(ids, None)
    }

    /// Inference forward pass with an optional additive perturbation of
    /// one input-embedding row, for leakage and causality oracles.
    pub fn forward_perturbed(
        &self,
        ids: &[usize],
        perturb: Option<(usize, &[f32])>,
    ) -> Result<LayerActivations> {
        let mut g = Graph::new();
        let bound = self.bind(&mut g);
        let mut rng = Rng::new(0);
        let acts = self.forward_bound(&mut g, &bound, ids, false, &mut rng, perturb)?;
        Ok(LayerActivations {
            embed_out: g.value(acts.embed_out).clone(),
            context_out: acts.contexts.iter().map(|&v| g.value(v).clone()).collect(),
            final_hidden: g.value(acts.final_hidden).clone(),
            logits: g.value(acts.logits).clone(),
        })
    }
}

pub struct BoundParams {
    vars: Vec<Var>,
}

pub struct ActivationVars {
    pub embed_out: Var,
    pub contexts: Vec<Var>,
    pub final_hidden: Var,
    pub logits: Var,
}

pub struct AttentionWeights {
    pub wq: Var,
    pub bq: Var,
    pub wk: Var,
    pub bk: Var,
    pub wv: Var,
    pub bv: Var,
    pub wo: Var,
    pub bo: Var,
}

/// Multi-head scaled dot-product attention. The mask is applied
/// identically in every head. Queries may come from a different stream
/// than keys/values (the window regime feeds the shifted residual).
pub fn attention(
    g: &mut Graph,
    x_q: Var,
    x_kv: Var,
    mask: &AttentionMask,
    num_heads: usize,
    w: AttentionWeights,
) -> Result<Var> {
    let d = g.value(x_kv).shape[1];
    let dh = d / num_heads;
    let q = g.matmul(x_q, w.wq)?;
    let q = g.add_bias(q, w.bq)?;
    let k = g.matmul(x_kv, w.wk)?;
    let k = g.add_bias(k, w.bk)?;
    let v = g.matmul(x_kv, w.wv)?;
    let v = g.add_bias(v, w.bv)?;
    let scale = 1.0 / (dh as f32).sqrt();
    let mut heads = Vec::with_capacity(num_heads);
    for h in 0..num_heads {
        let qh = g.slice_cols(q, h * dh, dh)?;
        let kh = g.slice_cols(k, h * dh, dh)?;
        let vh = g.slice_cols(v, h * dh, dh)?;
        let scores = g.matmul_bt(qh, kh)?;
        let scores = g.scale(scores, scale);
        let weights = g.softmax_rows(scores, &mask.data)?;
        heads.push(g.matmul(weights, vh)?);
    }
    let mut ctx = heads[0];
    for &h in &heads[1..] {
        ctx = g.concat_cols(ctx, h)?;
    }
    let out = g.matmul(ctx, w.wo)?;
    g.add_bias(out, w.bo)
}

/// Shifted residual combine: row i of the output is a learned 2d->d
/// projection of `concat(attn_out[i], resid_in[i-1])` followed by layer
/// norm; row 0 falls back to its own residual input.
pub fn shifted_residual_combine(
    g: &mut Graph,
    attn_out: Var,
    resid_in: Var,
    combine_w: Var,
    combine_b: Var,
    ln_gain: Var,
    ln_bias: Var,
) -> Result<Var> {
    let shifted = g.shift_rows_down(resid_in)?;
    let cat = g.concat_cols(attn_out, shifted)?;
    let proj = g.matmul(cat, combine_w)?;
    let proj = g.add_bias(proj, combine_b)?;
    g.layer_norm(proj, ln_gain, ln_bias, LN_EPS)
}
