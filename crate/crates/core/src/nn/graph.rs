//! Reverse-mode automatic differentiation on a flat tape.
//!
//! Every forward operation appends one node holding its output value and
//! enough context to replay the adjoint. `backward` walks the tape in
//! exact reverse recording order and accumulates gradients into the input
//! nodes. The op set is deliberately small: exactly what the transformer
//! needs.

use crate::error::{Error, Result};
use crate::nn::tensor::Tensor;
use crate::rng::Rng;

/// Additive mask sentinel. Large enough that exp underflows to exactly
/// zero after max-subtraction, small enough to stay finite in f32.
pub const MASK_NEG: f32 = -1e9;

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf,
    /// `[m,k] x [k,n]`
    Matmul { a: Var, b: Var },
    /// `[m,k] x [n,k]^T -> [m,n]`
    MatmulBt { a: Var, b: Var },
    Add { a: Var, b: Var },
    /// `[n,d] + [d]` broadcast over rows.
    AddBias { a: Var, bias: Var },
    Mul { a: Var, b: Var },
    Scale { a: Var, c: f32 },
    Relu { a: Var },
    /// Elementwise multiply by a fixed 0 / 1/(1-rate) mask.
    Dropout { a: Var, mask: Vec<f32> },
    /// Row softmax of (scores + additive mask); output stored in the node.
    SoftmaxRows { a: Var },
    LayerNorm {
        a: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<f32>,
        inv_std: Vec<f32>,
    },
    /// Row lookup into a `[rows, d]` table.
    Gather { table: Var, ids: Vec<usize> },
    /// out[0] = a[0]; out[i] = a[i-1] for i >= 1.
    ShiftRowsDown { a: Var },
    ConcatCols { a: Var, b: Var },
    SliceCols { a: Var, start: usize, width: usize },
    /// Scalar sum of weighted per-position negative log likelihoods.
    CrossEntropySum {
        logits: Var,
        targets: Vec<usize>,
        weights: Vec<f32>,
        probs: Vec<f32>,
    },
    /// Scalar sum of scalar inputs.
    AddN { parts: Vec<Var> },
    SumAll { a: Var },
}

struct Node {
    value: Tensor,
    grad: Option<Vec<f32>>,
    op: Op,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, grad: None, op });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Gradient of a node after `backward`; zeros if the node was not
    /// reached by the loss.
    pub fn grad(&self, v: Var) -> Vec<f32> {
        match &self.nodes[v.0].grad {
            Some(g) => g.clone(),
            None => vec![0.0; self.nodes[v.0].value.numel()],
        }
    }

    fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].value.shape
    }

    fn dims2(&self, v: Var, op: &'static str) -> Result<(usize, usize)> {
        match self.shape(v) {
            [r, c] => Ok((*r, *c)),
            other => Err(Error::ShapeMismatch { op, left: other.to_vec(), right: vec![0, 0] }),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims2(a, "matmul")?;
        let (k2, n) = self.dims2(b, "matmul")?;
        if k != k2 {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                left: self.shape(a).to_vec(),
                right: self.shape(b).to_vec(),
            });
        }
        let mut out = vec![0.0f32; m * n];
        matmul_nn(&self.nodes[a.0].value.data, &self.nodes[b.0].value.data, m, k, n, &mut out);
        Ok(self.push(Tensor::new(vec![m, n], out), Op::Matmul { a, b }))
    }

    /// `a x b^T` without materializing the transpose (used for tied
    /// output logits and attention scores).
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims2(a, "matmul_bt")?;
        let (n, k2) = self.dims2(b, "matmul_bt")?;
        if k != k2 {
            return Err(Error::ShapeMismatch {
                op: "matmul_bt",
                left: self.shape(a).to_vec(),
                right: self.shape(b).to_vec(),
            });
        }
        let mut out = vec![0.0f32; m * n];
        matmul_nt(&self.nodes[a.0].value.data, &self.nodes[b.0].value.data, m, k, n, &mut out);
        Ok(self.push(Tensor::new(vec![m, n], out), Op::MatmulBt { a, b }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::ShapeMismatch {
                op: "add",
                left: self.shape(a).to_vec(),
                right: self.shape(b).to_vec(),
            });
        }
        let data: Vec<f32> = self.nodes[a.0]
            .value
            .data
            .iter()
            .zip(&self.nodes[b.0].value.data)
            .map(|(x, y)| x + y)
            .collect();
        let shape = self.shape(a).to_vec();
        Ok(self.push(Tensor::new(shape, data), Op::Add { a, b }))
    }

    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (n, d) = self.dims2(a, "add_bias")?;
        if self.shape(bias) != [d] {
            return Err(Error::ShapeMismatch {
                op: "add_bias",
                left: self.shape(a).to_vec(),
                right: self.shape(bias).to_vec(),
            });
        }
        let bdata = &self.nodes[bias.0].value.data;
        let mut data = self.nodes[a.0].value.data.clone();
        for i in 0..n {
            for j in 0..d {
                data[i * d + j] += bdata[j];
            }
        }
        Ok(self.push(Tensor::new(vec![n, d], data), Op::AddBias { a, bias }))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::ShapeMismatch {
                op: "mul",
                left: self.shape(a).to_vec(),
                right: self.shape(b).to_vec(),
            });
        }
        let data: Vec<f32> = self.nodes[a.0]
            .value
            .data
            .iter()
            .zip(&self.nodes[b.0].value.data)
            .map(|(x, y)| x * y)
            .collect();
        let shape = self.shape(a).to_vec();
        Ok(self.push(Tensor::new(shape, data), Op::Mul { a, b }))
    }

    pub fn scale(&mut self, a: Var, c: f32) -> Var {
        let data: Vec<f32> = self.nodes[a.0].value.data.iter().map(|x| x * c).collect();
        let shape = self.shape(a).to_vec();
        self.push(Tensor::new(shape, data), Op::Scale { a, c })
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let data: Vec<f32> = self.nodes[a.0].value.data.iter().map(|x| x.max(0.0)).collect();
        let shape = self.shape(a).to_vec();
        self.push(Tensor::new(shape, data), Op::Relu { a })
    }

    /// Inverted dropout. Identity in inference mode or at rate 0.
    pub fn dropout(&mut self, a: Var, rate: f32, training: bool, rng: &mut Rng) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!("dropout rate {rate} must be in [0, 1)")));
        }
        if !training || rate == 0.0 {
            return Ok(a);
        }
        let keep_scale = 1.0 / (1.0 - rate);
        let mask: Vec<f32> = (0..self.nodes[a.0].value.numel())
            .map(|_| if rng.bernoulli(rate) { 0.0 } else { keep_scale })
            .collect();
        let data: Vec<f32> = self.nodes[a.0]
            .value
            .data
            .iter()
            .zip(&mask)
            .map(|(x, m)| x * m)
            .collect();
        let shape = self.shape(a).to_vec();
        Ok(self.push(Tensor::new(shape, data), Op::Dropout { a, mask }))
    }

    /// Row-wise softmax of `scores + mask`, with per-row max subtraction.
    /// `mask` is an additive matrix of 0 / MASK_NEG entries, flattened
    /// row-major to match `scores`.
    pub fn softmax_rows(&mut self, scores: Var, mask: &[f32]) -> Result<Var> {
        let (n, c) = self.dims2(scores, "softmax_rows")?;
        if mask.len() != n * c {
            return Err(Error::ShapeMismatch {
                op: "softmax_rows",
                left: vec![n, c],
                right: vec![mask.len()],
            });
        }
        for i in 0..n {
            if mask[i * c..(i + 1) * c].iter().all(|&m| m <= MASK_NEG / 2.0) {
                return Err(Error::DegenerateRow { row: i });
            }
        }
        let src = &self.nodes[scores.0].value.data;
        let mut out = vec![0.0f32; n * c];
        for i in 0..n {
            let row = &src[i * c..(i + 1) * c];
            let mrow = &mask[i * c..(i + 1) * c];
            let mut max = f32::NEG_INFINITY;
            for j in 0..c {
                max = max.max(row[j] + mrow[j]);
            }
            let mut sum = 0.0f32;
            for j in 0..c {
                let e = (row[j] + mrow[j] - max).exp();
                out[i * c + j] = e;
                sum += e;
            }
            let inv = 1.0 / sum;
            for j in 0..c {
                out[i * c + j] *= inv;
            }
        }
        Ok(self.push(Tensor::new(vec![n, c], out), Op::SoftmaxRows { a: scores }))
    }

    /// Row-wise layer normalization with learned gain and bias, using the
    /// population variance stabilized by `eps`.
    pub fn layer_norm(&mut self, a: Var, gain: Var, bias: Var, eps: f32) -> Result<Var> {
        let (n, d) = self.dims2(a, "layer_norm")?;
        if self.shape(gain) != [d] || self.shape(bias) != [d] {
            return Err(Error::ShapeMismatch {
                op: "layer_norm",
                left: vec![n, d],
                right: self.shape(gain).to_vec(),
            });
        }
        let src = &self.nodes[a.0].value.data;
        let g = &self.nodes[gain.0].value.data;
        let b = &self.nodes[bias.0].value.data;
        let mut out = vec![0.0f32; n * d];
        let mut xhat = vec![0.0f32; n * d];
        let mut inv_std = vec![0.0f32; n];
        for i in 0..n {
            let row = &src[i * d..(i + 1) * d];
            let mean = row.iter().sum::<f32>() / d as f32;
            let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f32>() / d as f32;
            let istd = 1.0 / (var + eps).sqrt();
            inv_std[i] = istd;
            for j in 0..d {
                let xh = (row[j] - mean) * istd;
                xhat[i * d + j] = xh;
                out[i * d + j] = g[j] * xh + b[j];
            }
        }
        Ok(self.push(
            Tensor::new(vec![n, d], out),
            Op::LayerNorm { a, gain, bias, xhat, inv_std },
        ))
    }

    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let (rows, d) = self.dims2(table, "gather")?;
        for &id in ids {
            if id >= rows {
                return Err(Error::IdOutOfRange { id, vocab_size: rows });
            }
        }
        let src = &self.nodes[table.0].value.data;
        let mut out = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            out.extend_from_slice(&src[id * d..(id + 1) * d]);
        }
        Ok(self.push(
            Tensor::new(vec![ids.len(), d], out),
            Op::Gather { table, ids: ids.to_vec() },
        ))
    }

    /// Shift rows down by one; row 0 keeps its own value in place of the
    /// missing predecessor.
    pub fn shift_rows_down(&mut self, a: Var) -> Result<Var> {
        let (n, d) = self.dims2(a, "shift_rows_down")?;
        let src = &self.nodes[a.0].value.data;
        let mut out = vec![0.0f32; n * d];
        out[..d].copy_from_slice(&src[..d]);
        for i in 1..n {
            out[i * d..(i + 1) * d].copy_from_slice(&src[(i - 1) * d..i * d]);
        }
        Ok(self.push(Tensor::new(vec![n, d], out), Op::ShiftRowsDown { a }))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (n, da) = self.dims2(a, "concat_cols")?;
        let (n2, db) = self.dims2(b, "concat_cols")?;
        if n != n2 {
            return Err(Error::ShapeMismatch {
                op: "concat_cols",
                left: vec![n, da],
                right: vec![n2, db],
            });
        }
        let sa = &self.nodes[a.0].value.data;
        let sb = &self.nodes[b.0].value.data;
        let mut out = Vec::with_capacity(n * (da + db));
        for i in 0..n {
            out.extend_from_slice(&sa[i * da..(i + 1) * da]);
            out.extend_from_slice(&sb[i * db..(i + 1) * db]);
        }
        Ok(self.push(Tensor::new(vec![n, da + db], out), Op::ConcatCols { a, b }))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, width: usize) -> Result<Var> {
        let (n, d) = self.dims2(a, "slice_cols")?;
        if start + width > d {
            return Err(Error::ShapeMismatch {
                op: "slice_cols",
                left: vec![n, d],
                right: vec![start, width],
            });
        }
        let src = &self.nodes[a.0].value.data;
        let mut out = Vec::with_capacity(n * width);
        for i in 0..n {
            out.extend_from_slice(&src[i * d + start..i * d + start + width]);
        }
        Ok(self.push(Tensor::new(vec![n, width], out), Op::SliceCols { a, start, width }))
    }

    /// Sum over weighted positions of `-log softmax(logits)[target]`.
    /// Returns the scalar sum node and the total weight; callers divide to
    /// get a mean (possibly across several sentences of a batch).
    pub fn cross_entropy_sum(
        &mut self,
        logits: Var,
        targets: &[usize],
        weights: &[f32],
    ) -> Result<(Var, f32)> {
        let (n, v) = self.dims2(logits, "cross_entropy")?;
        if targets.len() != n || weights.len() != n {
            return Err(Error::ShapeMismatch {
                op: "cross_entropy",
                left: vec![n, v],
                right: vec![targets.len(), weights.len()],
            });
        }
        for (i, (&t, &w)) in targets.iter().zip(weights).enumerate() {
            if w != 0.0 && t >= v {
                return Err(Error::IdOutOfRange { id: t, vocab_size: v });
            }
            let _ = i;
        }
        let src = &self.nodes[logits.0].value.data;
        let mut probs = vec![0.0f32; n * v];
        // Accumulate the loss in f64 to keep long sums stable.
        let mut total = 0.0f64;
        let mut total_w = 0.0f32;
        for i in 0..n {
            let row = &src[i * v..(i + 1) * v];
            let max = row.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
            let mut sum = 0.0f32;
            for j in 0..v {
                let e = (row[j] - max).exp();
                probs[i * v + j] = e;
                sum += e;
            }
            let inv = 1.0 / sum;
            for j in 0..v {
                probs[i * v + j] *= inv;
            }
            if weights[i] != 0.0 {
                let logp = (row[targets[i]] - max) as f64 - (sum as f64).ln();
                total -= weights[i] as f64 * logp;
                total_w += weights[i];
            }
        }
        let node = self.push(
            Tensor::scalar(total as f32),
            Op::CrossEntropySum {
                logits,
                targets: targets.to_vec(),
                weights: weights.to_vec(),
                probs,
            },
        );
        Ok((node, total_w))
    }

    /// Mean over weighted positions; errors when no position carries
    /// weight.
    pub fn cross_entropy_mean(
        &mut self,
        logits: Var,
        targets: &[usize],
        weights: &[f32],
    ) -> Result<Var> {
        let (sum, total_w) = self.cross_entropy_sum(logits, targets, weights)?;
        if total_w == 0.0 {
            return Err(Error::NoSignal);
        }
        Ok(self.scale(sum, 1.0 / total_w))
    }

    /// Sum of scalar nodes.
    pub fn add_n(&mut self, parts: &[Var]) -> Var {
        let total: f32 = parts.iter().map(|p| self.nodes[p.0].value.data[0]).sum();
        self.push(Tensor::scalar(total), Op::AddN { parts: parts.to_vec() })
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let total = self.nodes[a.0].value.data.iter().map(|&x| x as f64).sum::<f64>();
        self.push(Tensor::scalar(total as f32), Op::SumAll { a })
    }

    fn grad_buf(&mut self, v: Var) -> &mut Vec<f32> {
        let len = self.nodes[v.0].value.numel();
        self.nodes[v.0].grad.get_or_insert_with(|| vec![0.0; len])
    }

    /// Populate gradients of every node reachable from the scalar `loss`.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if !self.nodes[loss.0].value.is_scalar() {
            return Err(Error::NonScalarBackward {
                shape: self.nodes[loss.0].value.shape.clone(),
            });
        }
        self.grad_buf(loss)[0] = 1.0;
        for idx in (0..=loss.0).rev() {
            let go = match &self.nodes[idx].grad {
                Some(g) => g.clone(),
                None => continue,
            };
            self.backprop_node(idx, &go);
        }
        Ok(())
    }

    fn backprop_node(&mut self, idx: usize, go: &[f32]) {
        // Ops are matched by moving the minimum out of `self.nodes[idx]`;
        // shapes are re-read from the input nodes.
        match &self.nodes[idx].op {
            Op::Leaf => {}
            Op::Matmul { a, b } => {
                let (a, b) = (*a, *b);
                let (m, k) = (self.shape(a)[0], self.shape(a)[1]);
                let n = self.shape(b)[1];
                let bdata = self.nodes[b.0].value.data.clone();
                let adata = self.nodes[a.0].value.data.clone();
                {
                    let ga = self.grad_buf(a);
                    matmul_nt_acc(go, &bdata, m, n, k, ga);
                }
                {
                    let gb = self.grad_buf(b);
                    matmul_tn_acc(&adata, go, m, k, n, gb);
                }
            }
            Op::MatmulBt { a, b } => {
                let (a, b) = (*a, *b);
                let (m, k) = (self.shape(a)[0], self.shape(a)[1]);
                let n = self.shape(b)[0];
                let bdata = self.nodes[b.0].value.data.clone();
                let adata = self.nodes[a.0].value.data.clone();
                {
                    // dA += dC x B : [m,n] x [n,k]
                    let ga = self.grad_buf(a);
                    matmul_nn_acc(go, &bdata, m, n, k, ga);
                }
                {
                    // dB += dC^T x A : [n,m] x [m,k]
                    let gb = self.grad_buf(b);
                    matmul_tn_acc(go, &adata, m, n, k, gb);
                }
            }
            Op::Add { a, b } => {
                let (a, b) = (*a, *b);
                for (g, &d) in self.grad_buf(a).iter_mut().zip(go) {
                    *g += d;
                }
                for (g, &d) in self.grad_buf(b).iter_mut().zip(go) {
                    *g += d;
                }
            }
            Op::AddBias { a, bias } => {
                let (a, bias) = (*a, *bias);
                let d = self.shape(bias)[0];
                for (g, &dg) in self.grad_buf(a).iter_mut().zip(go) {
                    *g += dg;
                }
                let gb = self.grad_buf(bias);
                for (i, &dg) in go.iter().enumerate() {
                    gb[i % d] += dg;
                }
            }
            Op::Mul { a, b } => {
                let (a, b) = (*a, *b);
                let adata = self.nodes[a.0].value.data.clone();
                let bdata = self.nodes[b.0].value.data.clone();
                for ((g, &d), &other) in self.grad_buf(a).iter_mut().zip(go).zip(&bdata) {
                    *g += d * other;
                }
                for ((g, &d), &other) in self.grad_buf(b).iter_mut().zip(go).zip(&adata) {
                    *g += d * other;
                }
            }
            Op::Scale { a, c } => {
                let (a, c) = (*a, *c);
                for (g, &d) in self.grad_buf(a).iter_mut().zip(go) {
                    *g += d * c;
                }
            }
            Op::Relu { a } => {
                let a = *a;
                let adata = self.nodes[a.0].value.data.clone();
                for ((g, &d), &x) in self.grad_buf(a).iter_mut().zip(go).zip(&adata) {
                    if x > 0.0 {
                        *g += d;
                    }
                }
            }
            Op::Dropout { a, mask } => {
                let a = *a;
                let mask = mask.clone();
                for ((g, &d), &m) in self.grad_buf(a).iter_mut().zip(go).zip(&mask) {
                    *g += d * m;
                }
            }
            Op::SoftmaxRows { a } => {
                let a = *a;
                let y = self.nodes[idx].value.data.clone();
                let (n, c) = (self.shape(a)[0], self.shape(a)[1]);
                let ga = self.grad_buf(a);
                for i in 0..n {
                    let yr = &y[i * c..(i + 1) * c];
                    let gr = &go[i * c..(i + 1) * c];
                    let dot: f32 = yr.iter().zip(gr).map(|(y, g)| y * g).sum();
                    for j in 0..c {
                        ga[i * c + j] += yr[j] * (gr[j] - dot);
                    }
                }
            }
            Op::LayerNorm { a, gain, bias, xhat, inv_std } => {
                let (a, gain, bias) = (*a, *gain, *bias);
                let xhat = xhat.clone();
                let inv_std = inv_std.clone();
                let (n, d) = (self.shape(a)[0], self.shape(a)[1]);
                let g = self.nodes[gain.0].value.data.clone();
                {
                    let ga = self.grad_buf(a);
                    for i in 0..n {
                        let xr = &xhat[i * d..(i + 1) * d];
                        let gr = &go[i * d..(i + 1) * d];
                        let mut sum_dxhat = 0.0f32;
                        let mut sum_dxhat_xhat = 0.0f32;
                        for j in 0..d {
                            let dxh = gr[j] * g[j];
                            sum_dxhat += dxh;
                            sum_dxhat_xhat += dxh * xr[j];
                        }
                        let istd = inv_std[i];
                        let dn = d as f32;
                        for j in 0..d {
                            let dxh = gr[j] * g[j];
                            ga[i * d + j] +=
                                istd * (dxh - sum_dxhat / dn - xr[j] * sum_dxhat_xhat / dn);
                        }
                    }
                }
                {
                    let gg = self.grad_buf(gain);
                    for i in 0..n {
                        for j in 0..d {
                            gg[j] += go[i * d + j] * xhat[i * d + j];
                        }
                    }
                }
                {
                    let gb = self.grad_buf(bias);
                    for i in 0..n {
                        for j in 0..d {
                            gb[j] += go[i * d + j];
                        }
                    }
                }
            }
            Op::Gather { table, ids } => {
                let table = *table;
                let ids = ids.clone();
                let d = self.shape(table)[1];
                let gt = self.grad_buf(table);
                for (row, &id) in ids.iter().enumerate() {
                    for j in 0..d {
                        gt[id * d + j] += go[row * d + j];
                    }
                }
            }
            Op::ShiftRowsDown { a } => {
                let a = *a;
                let (n, d) = (self.shape(a)[0], self.shape(a)[1]);
                let ga = self.grad_buf(a);
                for j in 0..d {
                    ga[j] += go[j];
                }
                for i in 1..n {
                    for j in 0..d {
                        ga[(i - 1) * d + j] += go[i * d + j];
                    }
                }
            }
            Op::ConcatCols { a, b } => {
                let (a, b) = (*a, *b);
                let (n, da) = (self.shape(a)[0], self.shape(a)[1]);
                let db = self.shape(b)[1];
                {
                    let ga = self.grad_buf(a);
                    for i in 0..n {
                        for j in 0..da {
                            ga[i * da + j] += go[i * (da + db) + j];
                        }
                    }
                }
                {
                    let gb = self.grad_buf(b);
                    for i in 0..n {
                        for j in 0..db {
                            gb[i * db + j] += go[i * (da + db) + da + j];
                        }
                    }
                }
            }
            Op::SliceCols { a, start, width } => {
                let (a, start, width) = (*a, *start, *width);
                let (n, d) = (self.shape(a)[0], self.shape(a)[1]);
                let ga = self.grad_buf(a);
                for i in 0..n {
                    for j in 0..width {
                        ga[i * d + start + j] += go[i * width + j];
                    }
                }
            }
            Op::CrossEntropySum { logits, targets, weights, probs } => {
                let logits = *logits;
                let targets = targets.clone();
                let weights = weights.clone();
                let probs = probs.clone();
                let (n, v) = (self.shape(logits)[0], self.shape(logits)[1]);
                let up = go[0];
                let gl = self.grad_buf(logits);
                for i in 0..n {
                    let w = weights[i];
                    if w == 0.0 {
                        continue;
                    }
                    for j in 0..v {
                        let onehot = if j == targets[i] { 1.0 } else { 0.0 };
                        gl[i * v + j] += up * w * (probs[i * v + j] - onehot);
                    }
                }
            }
            Op::AddN { parts } => {
                let parts = parts.clone();
                for p in parts {
                    self.grad_buf(p)[0] += go[0];
                }
            }
            Op::SumAll { a } => {
                let a = *a;
                for g in self.grad_buf(a).iter_mut() {
                    *g += go[0];
                }
            }
        }
    }
}

// Cache-friendly matmul kernels. `_acc` variants accumulate into `out`.

fn matmul_nn(a: &[f32], b: &[f32], m: usize, k: usize, n: usize, out: &mut [f32]) {
    matmul_nn_acc(a, b, m, k, n, out);
}

/// out[m,n] += a[m,k] x b[k,n]
fn matmul_nn_acc(a: &[f32], b: &[f32], m: usize, k: usize, n: usize, out: &mut [f32]) {
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

fn matmul_nt(a: &[f32], b: &[f32], m: usize, k: usize, n: usize, out: &mut [f32]) {
    matmul_nt_acc(a, b, m, k, n, out);
}

/// out[m,n] += a[m,k] x b[n,k]^T
/// Dot product with eight parallel accumulators so the compiler can
/// vectorize despite f32's lack of reassociativity.
fn dot(x: &[f32], y: &[f32]) -> f32 {
    const LANES: usize = 8;
    let mut acc = [0.0f32; LANES];
    let chunks = x.len() / LANES;
    for c in 0..chunks {
        let xs = &x[c * LANES..(c + 1) * LANES];
        let ys = &y[c * LANES..(c + 1) * LANES];
        for l in 0..LANES {
            acc[l] += xs[l] * ys[l];
        }
    }
    let mut sum: f32 = acc.iter().sum();
    for i in chunks * LANES..x.len() {
        sum += x[i] * y[i];
    }
    sum
}

fn matmul_nt_acc(a: &[f32], b: &[f32], m: usize, k: usize, n: usize, out: &mut [f32]) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            out[i * n + j] += dot(arow, &b[j * k..(j + 1) * k]);
        }
    }
}

/// out[k,n] += a[m,k]^T x b[m,n]
fn matmul_tn_acc(a: &[f32], b: &[f32], m: usize, k: usize, n: usize, out: &mut [f32]) {
    for i in 0..m {
        let brow = &b[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}
