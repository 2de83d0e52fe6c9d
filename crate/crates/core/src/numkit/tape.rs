//! Define-by-run tape for reverse-mode differentiation.
//!
//! Every operation appends a node holding its output value and enough
//! information to push an adjoint back to its inputs. Inputs always precede
//! outputs, so a single reverse sweep over the node list is a valid
//! topological order.

use super::tensor::{sigmoid, Tensor};
use super::NumError;

/// Handle to a node recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    /// `a[m×k] · b[k×n]`
    MatMul(usize, usize),
    /// `a[m×k] · b[n×k]ᵀ`
    MatMulT(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    /// `a[m×n] + bias[n]` broadcast over rows.
    AddRow(usize, usize),
    OneMinus(usize),
    Scale(usize, f64),
    Sigmoid(usize),
    Tanh(usize),
    ConcatCols(usize, usize),
    TimeStep { seq: usize, t: usize },
    StackTime(Vec<usize>),
    Sum(usize),
    SoftmaxXent { logits: usize, labels: Vec<usize>, probs: Vec<f64> },
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Recorded computation plus the persistent gradient of every node.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Accumulated gradient of `v`, if any backward pass reached it.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads[v.0].as_deref()
    }

    pub fn zero_grad(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = None);
    }

    /// Records a copy of `tensor` as a leaf. Its gradient buffer is not copied.
    pub fn leaf(&mut self, tensor: &Tensor) -> Var {
        self.push(
            Tensor::from_parts(tensor.shape().to_vec(), tensor.values().to_vec()),
            Op::Leaf,
        )
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn dims2(&self, op: &'static str, v: Var) -> Result<(usize, usize), NumError> {
        match *self.shape(v) {
            [r, c] => Ok((r, c)),
            ref other => Err(NumError::Rank {
                op,
                expected: 2,
                shape: other.to_vec(),
            }),
        }
    }

    fn mismatch(&self, op: &'static str, a: Var, b: Var) -> NumError {
        NumError::Shape {
            op,
            left: self.shape(a).to_vec(),
            right: self.shape(b).to_vec(),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumError> {
        let (m, k) = self.dims2("matmul", a)?;
        let (k2, n) = self.dims2("matmul", b)?;
        if k != k2 {
            return Err(self.mismatch("matmul", a, b));
        }
        let out = matmul_nn(self.value(a).values(), self.value(b).values(), m, k, n);
        Ok(self.push(Tensor::from_parts(vec![m, n], out), Op::MatMul(a.0, b.0)))
    }

    /// `a · bᵀ`, the layout used for `x · Wᵀ` with `W` stored as `out × in`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var, NumError> {
        let (m, k) = self.dims2("matmul_t", a)?;
        let (n, k2) = self.dims2("matmul_t", b)?;
        if k != k2 {
            return Err(self.mismatch("matmul_t", a, b));
        }
        let av = self.value(a).values();
        let bv = self.value(b).values();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let arow = &av[i * k..(i + 1) * k];
            for j in 0..n {
                let brow = &bv[j * k..(j + 1) * k];
                out[i * n + j] = arow.iter().zip(brow).map(|(x, y)| x * y).sum();
            }
        }
        Ok(self.push(Tensor::from_parts(vec![m, n], out), Op::MatMulT(a.0, b.0)))
    }

    fn zip_same(
        &mut self,
        op: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        record: Op,
    ) -> Result<Var, NumError> {
        if self.shape(a) != self.shape(b) {
            return Err(self.mismatch(op, a, b));
        }
        let out: Vec<f64> = self
            .value(a)
            .values()
            .iter()
            .zip(self.value(b).values())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let shape = self.shape(a).to_vec();
        Ok(self.push(Tensor::from_parts(shape, out), record))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumError> {
        self.zip_same("add", a, b, |x, y| x + y, Op::Add(a.0, b.0))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NumError> {
        self.zip_same("sub", a, b, |x, y| x - y, Op::Sub(a.0, b.0))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumError> {
        self.zip_same("mul", a, b, |x, y| x * y, Op::Mul(a.0, b.0))
    }

    /// Adds a length-`n` bias to every row of an `m × n` matrix.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var, NumError> {
        let (m, n) = self.dims2("add_row", a)?;
        if self.shape(bias) != [n] {
            return Err(self.mismatch("add_row", a, bias));
        }
        let av = self.value(a).values();
        let bv = self.value(bias).values();
        let mut out = Vec::with_capacity(m * n);
        for i in 0..m {
            out.extend(av[i * n..(i + 1) * n].iter().zip(bv).map(|(x, y)| x + y));
        }
        Ok(self.push(Tensor::from_parts(vec![m, n], out), Op::AddRow(a.0, bias.0)))
    }

    fn map_unary(&mut self, a: Var, f: impl Fn(f64) -> f64, record: Op) -> Var {
        let t = self.value(a);
        let out = t.values().iter().map(|&x| f(x)).collect();
        let shape = t.shape().to_vec();
        self.push(Tensor::from_parts(shape, out), record)
    }

    /// `1 − a`, the GRU carry factor.
    pub fn one_minus(&mut self, a: Var) -> Var {
        self.map_unary(a, |x| 1.0 - x, Op::OneMinus(a.0))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        self.map_unary(a, |x| x * factor, Op::Scale(a.0, factor))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map_unary(a, sigmoid, Op::Sigmoid(a.0))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map_unary(a, f64::tanh, Op::Tanh(a.0))
    }

    /// `[a | b]` along the column axis of two matrices with equal row counts.
    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var, NumError> {
        let (m, p) = self.dims2("concat_cols", a)?;
        let (m2, q) = self.dims2("concat_cols", b)?;
        if m != m2 {
            return Err(self.mismatch("concat_cols", a, b));
        }
        let av = self.value(a).values();
        let bv = self.value(b).values();
        let mut out = Vec::with_capacity(m * (p + q));
        for i in 0..m {
            out.extend_from_slice(&av[i * p..(i + 1) * p]);
            out.extend_from_slice(&bv[i * q..(i + 1) * q]);
        }
        Ok(self.push(
            Tensor::from_parts(vec![m, p + q], out),
            Op::ConcatCols(a.0, b.0),
        ))
    }

    /// Slice `seq[:, t, :]` out of a `batch × time × feature` tensor.
    pub fn time_step(&mut self, seq: Var, t: usize) -> Result<Var, NumError> {
        let (b, steps, f) = match *self.shape(seq) {
            [b, s, f] => (b, s, f),
            ref other => {
                return Err(NumError::Rank {
                    op: "time_step",
                    expected: 3,
                    shape: other.to_vec(),
                })
            }
        };
        if t >= steps {
            return Err(NumError::Index {
                op: "time_step",
                index: t,
                len: steps,
            });
        }
        let v = self.value(seq).values();
        let mut out = Vec::with_capacity(b * f);
        for i in 0..b {
            let start = (i * steps + t) * f;
            out.extend_from_slice(&v[start..start + f]);
        }
        Ok(self.push(
            Tensor::from_parts(vec![b, f], out),
            Op::TimeStep { seq: seq.0, t },
        ))
    }

    /// Stacks `T` matrices of shape `batch × f` into `batch × T × f`.
    pub fn stack_time(&mut self, steps: &[Var]) -> Result<Var, NumError> {
        let first = *steps.first().ok_or(NumError::Empty("stack_time"))?;
        let (b, f) = self.dims2("stack_time", first)?;
        for &s in steps {
            if self.shape(s) != [b, f] {
                return Err(self.mismatch("stack_time", first, s));
            }
        }
        let t_len = steps.len();
        let mut out = vec![0.0; b * t_len * f];
        for (t, &s) in steps.iter().enumerate() {
            let v = self.value(s).values();
            for i in 0..b {
                let dst = (i * t_len + t) * f;
                out[dst..dst + f].copy_from_slice(&v[i * f..(i + 1) * f]);
            }
        }
        let ids = steps.iter().map(|s| s.0).collect();
        Ok(self.push(
            Tensor::from_parts(vec![b, t_len, f], out),
            Op::StackTime(ids),
        ))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let total = self.value(a).values().iter().sum();
        self.push(Tensor::scalar(total), Op::Sum(a.0))
    }

    /// Mean negative log-likelihood of `labels` under row-wise softmax.
    pub fn softmax_cross_entropy(
        &mut self,
        logits: Var,
        labels: &[usize],
    ) -> Result<Var, NumError> {
        let (batch, classes) = self.dims2("softmax_cross_entropy", logits)?;
        if labels.len() != batch {
            return Err(NumError::LabelCount {
                batch,
                labels: labels.len(),
            });
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
            return Err(NumError::LabelOutOfRange { label, classes });
        }
        let lv = self.value(logits).values();
        let mut probs = Vec::with_capacity(batch * classes);
        let mut loss = 0.0;
        for (i, &label) in labels.iter().enumerate() {
            let row = &lv[i * classes..(i + 1) * classes];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let log_total = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            loss -= row[label] - max - log_total;
            probs.extend(row.iter().map(|v| (v - max - log_total).exp()));
        }
        loss /= batch as f64;
        Ok(self.push(
            Tensor::scalar(loss),
            Op::SoftmaxXent {
                logits: logits.0,
                labels: labels.to_vec(),
                probs,
            },
        ))
    }

    /// Reverse sweep from a scalar node. The resulting gradients are added to
    /// whatever earlier passes left behind.
    pub fn backward(&mut self, loss: Var) -> Result<(), NumError> {
        if !self.value(loss).is_scalar() {
            return Err(NumError::NonScalarLoss(self.shape(loss).to_vec()));
        }
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            self.propagate(i, &g, &mut adj);
            match self.grads[i].as_mut() {
                Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, d)| *a += d),
                None => self.grads[i] = Some(g),
            }
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[f64], adj: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let val = |j: usize| self.nodes[j].value.values();
        match &node.op {
            Op::Leaf => {}
            &Op::MatMul(a, b) => {
                let (m, k) = dims(&self.nodes[a].value);
                let n = self.nodes[b].value.shape()[1];
                // dA = dC · Bᵀ, dB = Aᵀ · dC
                let mut da = vec![0.0; m * k];
                let bv = val(b);
                for r in 0..m {
                    for c in 0..k {
                        let brow = &bv[c * n..(c + 1) * n];
                        da[r * k + c] = g[r * n..(r + 1) * n]
                            .iter()
                            .zip(brow)
                            .map(|(x, y)| x * y)
                            .sum();
                    }
                }
                let mut db = vec![0.0; k * n];
                let av = val(a);
                for r in 0..m {
                    for c in 0..k {
                        let s = av[r * k + c];
                        let grow = &g[r * n..(r + 1) * n];
                        for (d, gv) in db[c * n..(c + 1) * n].iter_mut().zip(grow) {
                            *d += s * gv;
                        }
                    }
                }
                accumulate(adj, a, da);
                accumulate(adj, b, db);
            }
            &Op::MatMulT(a, b) => {
                let (m, k) = dims(&self.nodes[a].value);
                let n = self.nodes[b].value.shape()[0];
                // C = A·Bᵀ: dA = dC · B, dB = dCᵀ · A
                let da = matmul_nn(g, val(b), m, n, k);
                let mut db = vec![0.0; n * k];
                let av = val(a);
                for r in 0..m {
                    for j in 0..n {
                        let s = g[r * n + j];
                        for (d, x) in db[j * k..(j + 1) * k].iter_mut().zip(&av[r * k..(r + 1) * k]) {
                            *d += s * x;
                        }
                    }
                }
                accumulate(adj, a, da);
                accumulate(adj, b, db);
            }
            &Op::Add(a, b) => {
                accumulate(adj, a, g.to_vec());
                accumulate(adj, b, g.to_vec());
            }
            &Op::Sub(a, b) => {
                accumulate(adj, a, g.to_vec());
                accumulate(adj, b, g.iter().map(|x| -x).collect());
            }
            &Op::Mul(a, b) => {
                let da = g.iter().zip(val(b)).map(|(x, y)| x * y).collect();
                let db = g.iter().zip(val(a)).map(|(x, y)| x * y).collect();
                accumulate(adj, a, da);
                accumulate(adj, b, db);
            }
            &Op::AddRow(a, bias) => {
                let n = self.nodes[bias].value.len();
                let mut db = vec![0.0; n];
                for row in g.chunks_exact(n) {
                    db.iter_mut().zip(row).for_each(|(d, x)| *d += x);
                }
                accumulate(adj, a, g.to_vec());
                accumulate(adj, bias, db);
            }
            &Op::OneMinus(a) => accumulate(adj, a, g.iter().map(|x| -x).collect()),
            &Op::Scale(a, f) => accumulate(adj, a, g.iter().map(|x| x * f).collect()),
            &Op::Sigmoid(a) => {
                let d = g
                    .iter()
                    .zip(node.value.values())
                    .map(|(x, s)| x * s * (1.0 - s))
                    .collect();
                accumulate(adj, a, d);
            }
            &Op::Tanh(a) => {
                let d = g
                    .iter()
                    .zip(node.value.values())
                    .map(|(x, y)| x * (1.0 - y * y))
                    .collect();
                accumulate(adj, a, d);
            }
            &Op::ConcatCols(a, b) => {
                let p = self.nodes[a].value.shape()[1];
                let q = self.nodes[b].value.shape()[1];
                let mut da = Vec::with_capacity(g.len() / (p + q) * p);
                let mut db = Vec::with_capacity(g.len() / (p + q) * q);
                for row in g.chunks_exact(p + q) {
                    da.extend_from_slice(&row[..p]);
                    db.extend_from_slice(&row[p..]);
                }
                accumulate(adj, a, da);
                accumulate(adj, b, db);
            }
            &Op::TimeStep { seq, t } => {
                let shape = self.nodes[seq].value.shape();
                let (b, steps, f) = (shape[0], shape[1], shape[2]);
                let mut d = vec![0.0; b * steps * f];
                for i in 0..b {
                    let dst = (i * steps + t) * f;
                    d[dst..dst + f].copy_from_slice(&g[i * f..(i + 1) * f]);
                }
                accumulate(adj, seq, d);
            }
            Op::StackTime(ids) => {
                let shape = node.value.shape();
                let (b, steps, f) = (shape[0], shape[1], shape[2]);
                for (t, &s) in ids.iter().enumerate() {
                    let mut d = Vec::with_capacity(b * f);
                    for i in 0..b {
                        let src = (i * steps + t) * f;
                        d.extend_from_slice(&g[src..src + f]);
                    }
                    accumulate(adj, s, d);
                }
            }
            &Op::Sum(a) => {
                let len = self.nodes[a].value.len();
                accumulate(adj, a, vec![g[0]; len]);
            }
            Op::SoftmaxXent {
                logits,
                labels,
                probs,
            } => {
                let classes = probs.len() / labels.len();
                let scale = g[0] / labels.len() as f64;
                let mut d: Vec<f64> = probs.iter().map(|p| p * scale).collect();
                for (i, &l) in labels.iter().enumerate() {
                    d[i * classes + l] -= scale;
                }
                accumulate(adj, *logits, d);
            }
        }
    }
}

fn dims(t: &Tensor) -> (usize, usize) {
    (t.shape()[0], t.shape()[1])
}

fn accumulate(adj: &mut [Option<Vec<f64>>], target: usize, delta: Vec<f64>) {
    match adj[target].as_mut() {
        Some(acc) => acc.iter_mut().zip(&delta).for_each(|(a, d)| *a += d),
        None => adj[target] = Some(delta),
    }
}

/// Plain `a[m×k] · b[k×n]` in i-k-j loop order.
pub(crate) fn matmul_nn(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let s = a[i * k + p];
            if s == 0.0 {
                continue;
            }
            for (o, bv) in orow.iter_mut().zip(&b[p * n..(p + 1) * n]) {
                *o += s * bv;
            }
        }
    }
    out
}
