//! Tape-based reverse-mode automatic differentiation.
//!
//! A [`Tape`] records every operation of one forward pass into a flat node
//! list (a Wengert list) and replays it in reverse to accumulate adjoints.
//! The tape is rebuilt from scratch each forward pass; nothing persists
//! across iterations except the parameter tensors themselves.
//!
//! Shapes are rank-1 or rank-2; scalars use shape `[1]`. All storage is f64.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Probabilities below this are clamped before logarithms.
pub const PROB_CLAMP: f64 = 1e-12;

/// Row norms below this are rejected as degenerate by normalization.
pub const NORM_FLOOR: f64 = 1e-12;

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Constant,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    /// `[n, m] + [m]`, the bias broadcast over rows.
    AddBias(usize, usize),
    /// `[n, k] @ [k, m]`.
    MatMul(usize, usize),
    /// `[n, k] @ [m, k]^T  ->  [n, m]`.
    MatMulNT(usize, usize),
    Relu(usize),
    Exp(usize),
    /// `ln(max(x, PROB_CLAMP))` elementwise.
    LnClamped(usize),
    /// Each row divided by its L2 norm.
    L2NormalizeRows(usize),
    /// Row-wise softmax of `input / temperature`.
    SoftmaxT(usize, f64),
    /// Mean over rows of `-ln(clamp(probs[i, labels[i]]))`, optionally
    /// restricted by a mask (the divisor stays the full row count).
    CrossEntropy {
        probs: usize,
        labels: Vec<usize>,
        mask: Option<Vec<bool>>,
    },
    /// `[n, m] -> [n]`.
    RowSum(usize),
    SumAll(usize),
    MeanAll(usize),
    /// Stack two matrices with equal column counts, first on top.
    ConcatRows(usize, usize),
    /// `out[r] = input[r, cols[r]]`.
    GatherCols { input: usize, cols: Vec<usize> },
}

struct Node {
    values: Vec<f64>,
    shape: Vec<usize>,
    op: Op,
    requires_grad: bool,
}

/// One forward pass worth of recorded operations.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
    clamp_count: u64,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    /// Number of probability clamps applied by cross-entropy/log ops so far.
    pub fn clamp_count(&self) -> u64 {
        self.clamp_count
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].values
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    /// Copies a node's value out as a plain tensor.
    pub fn value_tensor(&self, v: Var) -> Tensor {
        Tensor::new(self.nodes[v.0].shape.clone(), self.nodes[v.0].values.clone())
            .expect("node shape/value lengths are consistent by construction")
    }

    /// Gradient of the last `backward` target with respect to `v`, if any
    /// reached it.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    fn push(&mut self, values: Vec<f64>, shape: Vec<usize>, op: Op, requires_grad: bool) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), values.len());
        self.nodes.push(Node {
            values,
            shape,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn dims2(&self, v: Var, what: &str) -> Result<(usize, usize)> {
        match self.nodes[v.0].shape.as_slice() {
            [r, c] => Ok((*r, *c)),
            other => Err(Error::contract(format!(
                "{what}: expected rank-2 shape, got {other:?}"
            ))),
        }
    }

    // ── Inputs ──────────────────────────────────────────────────────

    /// Registers a tensor as a leaf; gradient tracking follows the tensor's
    /// `requires_grad` flag.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        self.push(
            t.values().to_vec(),
            t.shape().to_vec(),
            Op::Leaf,
            t.requires_grad(),
        )
    }

    /// A constant node: identical values, but no gradient ever flows to it.
    pub fn constant(&mut self, t: &Tensor) -> Var {
        self.push(t.values().to_vec(), t.shape().to_vec(), Op::Constant, false)
    }

    pub fn constant_from(&mut self, shape: Vec<usize>, values: Vec<f64>) -> Result<Var> {
        let t = Tensor::new(shape, values)?;
        Ok(self.constant(&t))
    }

    // ── Elementwise and structural ops ──────────────────────────────

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.nodes[a.0].shape != self.nodes[b.0].shape {
            return Err(Error::contract(format!(
                "{what}: shape {:?} vs {:?}",
                self.nodes[a.0].shape, self.nodes[b.0].shape
            )));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let values = zip_map(&self.nodes[a.0].values, &self.nodes[b.0].values, |x, y| x + y);
        let shape = self.nodes[a.0].shape.clone();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(values, shape, Op::Add(a.0, b.0), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        let values = zip_map(&self.nodes[a.0].values, &self.nodes[b.0].values, |x, y| x - y);
        let shape = self.nodes[a.0].shape.clone();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(values, shape, Op::Sub(a.0, b.0), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let values = zip_map(&self.nodes[a.0].values, &self.nodes[b.0].values, |x, y| x * y);
        let shape = self.nodes[a.0].shape.clone();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(values, shape, Op::Mul(a.0, b.0), rg))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let values = self.nodes[a.0].values.iter().map(|x| x * factor).collect();
        let shape = self.nodes[a.0].shape.clone();
        let rg = self.rg(a);
        self.push(values, shape, Op::Scale(a.0, factor), rg)
    }

    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (n, m) = self.dims2(x, "add_bias")?;
        if self.nodes[bias.0].shape != [m] {
            return Err(Error::contract(format!(
                "add_bias: bias shape {:?} does not match {m} columns",
                self.nodes[bias.0].shape
            )));
        }
        let mut values = self.nodes[x.0].values.clone();
        let b = &self.nodes[bias.0].values;
        for i in 0..n {
            for j in 0..m {
                values[i * m + j] += b[j];
            }
        }
        let rg = self.rg(x) || self.rg(bias);
        Ok(self.push(values, vec![n, m], Op::AddBias(x.0, bias.0), rg))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (n, k) = self.dims2(a, "matmul lhs")?;
        let (k2, m) = self.dims2(b, "matmul rhs")?;
        if k != k2 {
            return Err(Error::contract(format!(
                "matmul: inner dims {k} vs {k2}"
            )));
        }
        let values = matmul_raw(&self.nodes[a.0].values, &self.nodes[b.0].values, n, k, m);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(values, vec![n, m], Op::MatMul(a.0, b.0), rg))
    }

    /// `a @ b^T`, with `a: [n, k]`, `b: [m, k]`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (n, k) = self.dims2(a, "matmul_nt lhs")?;
        let (m, k2) = self.dims2(b, "matmul_nt rhs")?;
        if k != k2 {
            return Err(Error::contract(format!(
                "matmul_nt: inner dims {k} vs {k2}"
            )));
        }
        let values = matmul_nt_raw(&self.nodes[a.0].values, &self.nodes[b.0].values, n, k, m);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(values, vec![n, m], Op::MatMulNT(a.0, b.0), rg))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let values = self.nodes[a.0].values.iter().map(|x| x.max(0.0)).collect();
        let shape = self.nodes[a.0].shape.clone();
        let rg = self.rg(a);
        self.push(values, shape, Op::Relu(a.0), rg)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let values = self.nodes[a.0].values.iter().map(|x| x.exp()).collect();
        let shape = self.nodes[a.0].shape.clone();
        let rg = self.rg(a);
        self.push(values, shape, Op::Exp(a.0), rg)
    }

    /// `ln(max(x, PROB_CLAMP))`; clamps count toward the tape's diagnostic.
    pub fn ln_clamped(&mut self, a: Var) -> Var {
        let mut clamped = 0u64;
        let values = self.nodes[a.0]
            .values
            .iter()
            .map(|&x| {
                if x < PROB_CLAMP {
                    clamped += 1;
                    PROB_CLAMP.ln()
                } else {
                    x.ln()
                }
            })
            .collect();
        self.clamp_count += clamped;
        let shape = self.nodes[a.0].shape.clone();
        let rg = self.rg(a);
        self.push(values, shape, Op::LnClamped(a.0), rg)
    }

    /// Divides each row of `[n, d]` by its L2 norm. Rows with norm below
    /// [`NORM_FLOOR`] are rejected rather than silently divided.
    pub fn l2_normalize_rows(&mut self, a: Var) -> Result<Var> {
        let (n, d) = self.dims2(a, "l2_normalize_rows")?;
        let src = &self.nodes[a.0].values;
        let mut values = vec![0.0; n * d];
        for i in 0..n {
            let row = &src[i * d..(i + 1) * d];
            let norm = l2_norm(row);
            if norm < NORM_FLOOR {
                return Err(Error::DegenerateInput(format!(
                    "l2_normalize: row {i} has norm {norm:.3e} (< {NORM_FLOOR:.0e})"
                )));
            }
            for j in 0..d {
                values[i * d + j] = row[j] / norm;
            }
        }
        let rg = self.rg(a);
        Ok(self.push(values, vec![n, d], Op::L2NormalizeRows(a.0), rg))
    }

    /// Row-wise `softmax(x / temperature)` with max-subtraction.
    pub fn softmax_t(&mut self, a: Var, temperature: f64) -> Result<Var> {
        if !(temperature > 0.0) {
            return Err(Error::InvalidHyperparameter(format!(
                "softmax temperature must be positive, got {temperature}"
            )));
        }
        let (n, k) = self.dims2(a, "softmax_t")?;
        let src = &self.nodes[a.0].values;
        let mut values = vec![0.0; n * k];
        for i in 0..n {
            let row = &src[i * k..(i + 1) * k];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max) / temperature;
            let mut sum = 0.0;
            for j in 0..k {
                let e = (row[j] / temperature - max).exp();
                values[i * k + j] = e;
                sum += e;
            }
            for j in 0..k {
                values[i * k + j] /= sum;
            }
        }
        let rg = self.rg(a);
        Ok(self.push(values, vec![n, k], Op::SoftmaxT(a.0, temperature), rg))
    }

    /// Mean over the batch of `-ln(probs[i, labels[i]])`, probabilities
    /// clamped at [`PROB_CLAMP`].
    pub fn cross_entropy(&mut self, probs: Var, labels: &[usize]) -> Result<Var> {
        self.cross_entropy_inner(probs, labels, None)
    }

    /// Cross-entropy where masked-out rows contribute exactly zero while the
    /// divisor stays the full batch size.
    pub fn masked_cross_entropy(
        &mut self,
        probs: Var,
        labels: &[usize],
        mask: &[bool],
    ) -> Result<Var> {
        if mask.len() != labels.len() {
            return Err(Error::contract(format!(
                "masked_cross_entropy: {} labels vs {} mask entries",
                labels.len(),
                mask.len()
            )));
        }
        self.cross_entropy_inner(probs, labels, Some(mask.to_vec()))
    }

    fn cross_entropy_inner(
        &mut self,
        probs: Var,
        labels: &[usize],
        mask: Option<Vec<bool>>,
    ) -> Result<Var> {
        let (n, k) = self.dims2(probs, "cross_entropy")?;
        if labels.len() != n {
            return Err(Error::contract(format!(
                "cross_entropy: {n} rows vs {} labels",
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::contract(format!(
                "cross_entropy: label {bad} out of range for {k} classes"
            )));
        }
        let src = &self.nodes[probs.0].values;
        let mut total = 0.0;
        let mut clamped = 0u64;
        for (i, &label) in labels.iter().enumerate() {
            if mask.as_ref().is_some_and(|m| !m[i]) {
                continue;
            }
            let mut p = src[i * k + label];
            if p < PROB_CLAMP {
                p = PROB_CLAMP;
                clamped += 1;
            }
            total -= p.ln();
        }
        self.clamp_count += clamped;
        let value = total / n as f64;
        let rg = self.rg(probs);
        Ok(self.push(
            vec![value],
            vec![1],
            Op::CrossEntropy {
                probs: probs.0,
                labels: labels.to_vec(),
                mask,
            },
            rg,
        ))
    }

    pub fn row_sum(&mut self, a: Var) -> Result<Var> {
        let (n, m) = self.dims2(a, "row_sum")?;
        let src = &self.nodes[a.0].values;
        let values = (0..n).map(|i| src[i * m..(i + 1) * m].iter().sum()).collect();
        let rg = self.rg(a);
        Ok(self.push(values, vec![n], Op::RowSum(a.0), rg))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let value = self.nodes[a.0].values.iter().sum();
        let rg = self.rg(a);
        self.push(vec![value], vec![1], Op::SumAll(a.0), rg)
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let n = self.nodes[a.0].values.len().max(1);
        let value = self.nodes[a.0].values.iter().sum::<f64>() / n as f64;
        let rg = self.rg(a);
        self.push(vec![value], vec![1], Op::MeanAll(a.0), rg)
    }

    pub fn concat_rows(&mut self, a: Var, b: Var) -> Result<Var> {
        let (n1, m1) = self.dims2(a, "concat_rows top")?;
        let (n2, m2) = self.dims2(b, "concat_rows bottom")?;
        if m1 != m2 {
            return Err(Error::contract(format!(
                "concat_rows: column counts {m1} vs {m2}"
            )));
        }
        let mut values = self.nodes[a.0].values.clone();
        values.extend_from_slice(&self.nodes[b.0].values);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(values, vec![n1 + n2, m1], Op::ConcatRows(a.0, b.0), rg))
    }

    /// `out[r] = a[r, cols[r]]`.
    pub fn gather_cols(&mut self, a: Var, cols: &[usize]) -> Result<Var> {
        let (n, m) = self.dims2(a, "gather_cols")?;
        if cols.len() != n {
            return Err(Error::contract(format!(
                "gather_cols: {n} rows vs {} indices",
                cols.len()
            )));
        }
        if let Some(&bad) = cols.iter().find(|&&c| c >= m) {
            return Err(Error::contract(format!(
                "gather_cols: column {bad} out of range for {m} columns"
            )));
        }
        let src = &self.nodes[a.0].values;
        let values = cols.iter().enumerate().map(|(r, &c)| src[r * m + c]).collect();
        let rg = self.rg(a);
        Ok(self.push(
            values,
            vec![n],
            Op::GatherCols {
                input: a.0,
                cols: cols.to_vec(),
            },
            rg,
        ))
    }

    // ── Backward ────────────────────────────────────────────────────

    /// Accumulates adjoints of every gradient-tracked node with respect to
    /// the scalar `loss`. Gradients are then readable via [`Tape::grad`].
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.nodes[loss.0].values.len() != 1 {
            return Err(Error::contract(format!(
                "backward target must be scalar, got shape {:?}",
                self.nodes[loss.0].shape
            )));
        }
        self.grads = (0..self.nodes.len()).map(|_| None).collect();
        self.grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            if self.grads[i].is_none() || !self.nodes[i].requires_grad {
                continue;
            }
            let g = self.grads[i].take().expect("checked above");
            self.propagate(i, &g);
            self.grads[i] = Some(g);
        }
        Ok(())
    }

    fn accumulate(&mut self, node: usize, delta: impl FnOnce(&mut [f64])) {
        if !self.nodes[node].requires_grad {
            return;
        }
        if self.grads[node].is_none() {
            self.grads[node] = Some(vec![0.0; self.nodes[node].values.len()]);
        }
        delta(self.grads[node].as_mut().expect("just initialized"));
    }

    fn propagate(&mut self, i: usize, g: &[f64]) {
        // Ops are cheap to clone here: the heavy payloads (labels, masks,
        // gather indices) only exist on loss nodes, which appear once.
        let op = self.nodes[i].op.clone();
        match op {
            Op::Leaf | Op::Constant => {}
            Op::Add(a, b) => {
                self.accumulate(a, |dst| add_into(dst, g, 1.0));
                self.accumulate(b, |dst| add_into(dst, g, 1.0));
            }
            Op::Sub(a, b) => {
                self.accumulate(a, |dst| add_into(dst, g, 1.0));
                self.accumulate(b, |dst| add_into(dst, g, -1.0));
            }
            Op::Mul(a, b) => {
                let av = self.nodes[a].values.clone();
                let bv = self.nodes[b].values.clone();
                self.accumulate(a, |dst| {
                    for ((d, gi), bi) in dst.iter_mut().zip(g).zip(&bv) {
                        *d += gi * bi;
                    }
                });
                self.accumulate(b, |dst| {
                    for ((d, gi), ai) in dst.iter_mut().zip(g).zip(&av) {
                        *d += gi * ai;
                    }
                });
            }
            Op::Scale(a, factor) => {
                self.accumulate(a, |dst| add_into(dst, g, factor));
            }
            Op::AddBias(x, bias) => {
                let m = self.nodes[bias].values.len();
                let n = g.len() / m;
                self.accumulate(x, |dst| add_into(dst, g, 1.0));
                self.accumulate(bias, |dst| {
                    for i in 0..n {
                        for j in 0..m {
                            dst[j] += g[i * m + j];
                        }
                    }
                });
            }
            Op::MatMul(a, b) => {
                let (n, k) = two(&self.nodes[a].shape);
                let m = self.nodes[b].shape[1];
                let av = self.nodes[a].values.clone();
                let bv = self.nodes[b].values.clone();
                // dA = G @ B^T, dB = A^T @ G
                self.accumulate(a, |dst| {
                    for i in 0..n {
                        for p in 0..k {
                            let mut s = 0.0;
                            for j in 0..m {
                                s += g[i * m + j] * bv[p * m + j];
                            }
                            dst[i * k + p] += s;
                        }
                    }
                });
                self.accumulate(b, |dst| {
                    for p in 0..k {
                        for j in 0..m {
                            let mut s = 0.0;
                            for i in 0..n {
                                s += av[i * k + p] * g[i * m + j];
                            }
                            dst[p * m + j] += s;
                        }
                    }
                });
            }
            Op::MatMulNT(a, b) => {
                let (n, k) = two(&self.nodes[a].shape);
                let m = self.nodes[b].shape[0];
                let av = self.nodes[a].values.clone();
                let bv = self.nodes[b].values.clone();
                // out = A @ B^T: dA = G @ B, dB = G^T @ A
                self.accumulate(a, |dst| {
                    for i in 0..n {
                        for p in 0..k {
                            let mut s = 0.0;
                            for j in 0..m {
                                s += g[i * m + j] * bv[j * k + p];
                            }
                            dst[i * k + p] += s;
                        }
                    }
                });
                self.accumulate(b, |dst| {
                    for j in 0..m {
                        for p in 0..k {
                            let mut s = 0.0;
                            for i in 0..n {
                                s += g[i * m + j] * av[i * k + p];
                            }
                            dst[j * k + p] += s;
                        }
                    }
                });
            }
            Op::Relu(a) => {
                let xs = self.nodes[a].values.clone();
                self.accumulate(a, |dst| {
                    for ((d, gi), x) in dst.iter_mut().zip(g).zip(&xs) {
                        if *x > 0.0 {
                            *d += gi;
                        }
                    }
                });
            }
            Op::Exp(a) => {
                let out = self.nodes[i].values.clone();
                self.accumulate(a, |dst| {
                    for ((d, gi), o) in dst.iter_mut().zip(g).zip(&out) {
                        *d += gi * o;
                    }
                });
            }
            Op::LnClamped(a) => {
                let xs = self.nodes[a].values.clone();
                self.accumulate(a, |dst| {
                    for ((d, gi), x) in dst.iter_mut().zip(g).zip(&xs) {
                        // Constant inside the clamp region.
                        if *x >= PROB_CLAMP {
                            *d += gi / x;
                        }
                    }
                });
            }
            Op::L2NormalizeRows(a) => {
                let (n, d) = two(&self.nodes[a].shape);
                let xs = self.nodes[a].values.clone();
                let zs = self.nodes[i].values.clone();
                self.accumulate(a, |dst| {
                    for r in 0..n {
                        let x = &xs[r * d..(r + 1) * d];
                        let z = &zs[r * d..(r + 1) * d];
                        let gr = &g[r * d..(r + 1) * d];
                        let norm = l2_norm(x);
                        let zg: f64 = z.iter().zip(gr).map(|(zi, gi)| zi * gi).sum();
                        for j in 0..d {
                            dst[r * d + j] += (gr[j] - z[j] * zg) / norm;
                        }
                    }
                });
            }
            Op::SoftmaxT(a, temperature) => {
                let (n, k) = two(&self.nodes[a].shape);
                let ps = self.nodes[i].values.clone();
                self.accumulate(a, |dst| {
                    for r in 0..n {
                        let p = &ps[r * k..(r + 1) * k];
                        let gr = &g[r * k..(r + 1) * k];
                        let dot: f64 = p.iter().zip(gr).map(|(pi, gi)| pi * gi).sum();
                        for j in 0..k {
                            dst[r * k + j] += p[j] * (gr[j] - dot) / temperature;
                        }
                    }
                });
            }
            Op::CrossEntropy { probs, labels, mask } => {
                let (n, k) = two(&self.nodes[probs].shape);
                let ps = self.nodes[probs].values.clone();
                let g0 = g[0];
                self.accumulate(probs, |dst| {
                    for (r, &label) in labels.iter().enumerate() {
                        if mask.as_ref().is_some_and(|m| !m[r]) {
                            continue;
                        }
                        let p = ps[r * k + label];
                        // Constant inside the clamp region.
                        if p >= PROB_CLAMP {
                            dst[r * k + label] -= g0 / (p * n as f64);
                        }
                    }
                });
            }
            Op::RowSum(a) => {
                let (n, m) = two(&self.nodes[a].shape);
                self.accumulate(a, |dst| {
                    for r in 0..n {
                        for j in 0..m {
                            dst[r * m + j] += g[r];
                        }
                    }
                });
            }
            Op::SumAll(a) => {
                let g0 = g[0];
                self.accumulate(a, |dst| {
                    for d in dst.iter_mut() {
                        *d += g0;
                    }
                });
            }
            Op::MeanAll(a) => {
                let n = self.nodes[a].values.len().max(1) as f64;
                let g0 = g[0] / n;
                self.accumulate(a, |dst| {
                    for d in dst.iter_mut() {
                        *d += g0;
                    }
                });
            }
            Op::ConcatRows(a, b) => {
                let top = self.nodes[a].values.len();
                self.accumulate(a, |dst| add_into(dst, &g[..top], 1.0));
                self.accumulate(b, |dst| add_into(dst, &g[top..], 1.0));
            }
            Op::GatherCols { input, cols } => {
                let m = self.nodes[input].shape[1];
                self.accumulate(input, |dst| {
                    for (r, &c) in cols.iter().enumerate() {
                        dst[r * m + c] += g[r];
                    }
                });
            }
        }
    }
}

fn two(shape: &[usize]) -> (usize, usize) {
    (shape[0], shape[1])
}

fn zip_map(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| f(*x, *y)).collect()
}

fn add_into(dst: &mut [f64], src: &[f64], factor: f64) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s * factor;
    }
}

fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `a[n,k] @ b[k,m]`, row-major.
pub(crate) fn matmul_raw(a: &[f64], b: &[f64], n: usize, k: usize, m: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * m..(p + 1) * m];
            let orow = &mut out[i * m..(i + 1) * m];
            for j in 0..m {
                orow[j] += av * brow[j];
            }
        }
    }
    out
}

/// `a[n,k] @ b[m,k]^T`, row-major.
pub(crate) fn matmul_nt_raw(a: &[f64], b: &[f64], n: usize, k: usize, m: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..m {
            let brow = &b[j * k..(j + 1) * k];
            out[i * m + j] = arow.iter().zip(brow).map(|(x, y)| x * y).sum();
        }
    }
    out
}
