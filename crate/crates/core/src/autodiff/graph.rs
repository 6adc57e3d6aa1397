use rand::Rng;

use super::{AutodiffError, Tensor};

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

/// Elementwise operation kinds accepted by [`Graph::elementwise`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ElementwiseKind {
    Add,
    Sub,
    Hadamard,
    Sigmoid,
    Tanh,
    Scale(ScaleFactor),
}

/// Constant multiplier for [`ElementwiseKind::Scale`], kept as raw bits so the
/// kind stays `Eq`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ScaleFactor(u64);

impl ScaleFactor {
    pub fn new(value: f64) -> Self {
        ScaleFactor(value.to_bits())
    }

    pub fn get(self) -> f64 {
        f64::from_bits(self.0)
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Hadamard(Var, Var),
    Scale(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    MatVec(Var, Var),
    Bilinear(Var, Var, Var),
    Softmax(Var),
    Dot(Var, Var),
    Concat(Vec<Var>),
    Sum(Vec<Var>),
    Mean(Vec<Var>),
    Row(Var, usize),
    Index(Var, usize),
    Mask(Var, Vec<f64>),
    StackUpdate { stack: Var, actions: Var, top: Var },
    Bce { prob: Var, target: f64, clamped: bool },
    LogitBce { logit: Var, target: f64 },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Probability clamp used by [`Graph::bce`].
pub const PROB_CLAMP: f64 = 1e-12;

/// A dynamically built computation graph (the tape).
///
/// Nodes are appended in evaluation order, so every input id precedes the
/// node consuming it and a single reverse sweep yields exact gradients.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients of a scalar loss with respect to every node on the tape.
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient for `var`, or `None` when `var` does not influence the loss.
    pub fn get(&self, var: Var) -> Option<&[f64]> {
        self.grads.get(var.0).and_then(|g| g.as_deref())
    }

    /// Gradient for `var`, zero-filled when `var` is off the loss path.
    pub fn wrt(&self, var: Var) -> Vec<f64> {
        match self.get(var) {
            Some(g) => g.to_vec(),
            None => vec![0.0; self.shapes[var.0].iter().product()],
        }
    }
}

fn check_finite(op: &'static str, data: &[f64]) -> Result<(), AutodiffError> {
    if data.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(AutodiffError::NonFinite(op))
    }
}

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

fn accumulate(slot: &mut Option<Vec<f64>>, len: usize, f: impl FnOnce(&mut [f64])) {
    let buf = slot.get_or_insert_with(|| vec![0.0; len]);
    f(buf);
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn shape(&self, var: Var) -> &[usize] {
        self.nodes[var.0].value.shape()
    }

    fn data(&self, var: Var) -> &[f64] {
        self.nodes[var.0].value.data()
    }

    fn needs(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    fn push(&mut self, op_name: &'static str, value: Tensor, op: Op, inputs: &[Var]) -> Result<Var, AutodiffError> {
        check_finite(op_name, value.data())?;
        let requires_grad = inputs.iter().any(|&v| self.needs(v));
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Records a trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records a leaf that never receives gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn zeros(&mut self, shape: &[usize]) -> Var {
        self.constant(Tensor::zeros(shape))
    }

    /// Unified entry point for the elementwise family. Binary kinds require
    /// `b`; unary kinds ignore it.
    pub fn elementwise(&mut self, kind: ElementwiseKind, a: Var, b: Option<Var>) -> Result<Var, AutodiffError> {
        let binary = |b: Option<Var>| b.ok_or(AutodiffError::MissingOperand);
        match kind {
            ElementwiseKind::Add => self.add(a, binary(b)?),
            ElementwiseKind::Sub => self.sub(a, binary(b)?),
            ElementwiseKind::Hadamard => self.hadamard(a, binary(b)?),
            ElementwiseKind::Sigmoid => self.sigmoid(a),
            ElementwiseKind::Tanh => self.tanh(a),
            ElementwiseKind::Scale(c) => self.scale(a, c.get()),
        }
    }

    fn broadcast_shape(&self, op: &'static str, a: Var, b: Var) -> Result<Vec<usize>, AutodiffError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa == sb || self.value(b).is_scalar() {
            Ok(sa.to_vec())
        } else if self.value(a).is_scalar() {
            Ok(sb.to_vec())
        } else {
            Err(AutodiffError::ShapeMismatch {
                op,
                left: sa.to_vec(),
                right: sb.to_vec(),
            })
        }
    }

    fn zip_broadcast(&self, a: Var, b: Var, len: usize, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        let (da, db) = (self.data(a), self.data(b));
        let pick = |d: &[f64], i: usize| if d.len() == 1 { d[0] } else { d[i] };
        (0..len).map(|i| f(pick(da, i), pick(db, i))).collect()
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let shape = self.broadcast_shape("add", a, b)?;
        let len = shape.iter().product();
        let data = self.zip_broadcast(a, b, len, |x, y| x + y);
        self.push("add", Tensor::from_parts(shape, data), Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let shape = self.broadcast_shape("sub", a, b)?;
        let len = shape.iter().product();
        let data = self.zip_broadcast(a, b, len, |x, y| x - y);
        self.push("sub", Tensor::from_parts(shape, data), Op::Sub(a, b), &[a, b])
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let shape = self.broadcast_shape("hadamard", a, b)?;
        let len = shape.iter().product();
        let data = self.zip_broadcast(a, b, len, |x, y| x * y);
        self.push("hadamard", Tensor::from_parts(shape, data), Op::Hadamard(a, b), &[a, b])
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var, AutodiffError> {
        let v = self.value(a);
        let data = v.data().iter().map(|x| x * factor).collect();
        let t = Tensor::from_parts(v.shape().to_vec(), data);
        self.push("scale", t, Op::Scale(a, factor), &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let v = self.value(a);
        let data = v.data().iter().map(|&x| sigmoid(x)).collect();
        let t = Tensor::from_parts(v.shape().to_vec(), data);
        self.push("sigmoid", t, Op::Sigmoid(a), &[a])
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let v = self.value(a);
        let data = v.data().iter().map(|x| x.tanh()).collect();
        let t = Tensor::from_parts(v.shape().to_vec(), data);
        self.push("tanh", t, Op::Tanh(a), &[a])
    }

    /// `W · x` for `W: [m, n]`, `x: [n]`.
    pub fn matvec(&mut self, w: Var, x: Var) -> Result<Var, AutodiffError> {
        let (ws, xs) = (self.shape(w), self.shape(x));
        if ws.len() != 2 || xs.len() != 1 || ws[1] != xs[0] {
            return Err(AutodiffError::ShapeMismatch {
                op: "matvec",
                left: ws.to_vec(),
                right: xs.to_vec(),
            });
        }
        let (m, n) = (ws[0], ws[1]);
        let (wd, xd) = (self.data(w), self.data(x));
        let data: Vec<f64> = (0..m)
            .map(|i| wd[i * n..(i + 1) * n].iter().zip(xd).map(|(a, b)| a * b).sum())
            .collect();
        self.push("matvec", Tensor::from_parts(vec![m], data), Op::MatVec(w, x), &[w, x])
    }

    /// Third-order contraction `out[l] = Σ_{i,k} W[l,i,k] z[i] x[k]`.
    pub fn bilinear_contract(&mut self, w: Var, z: Var, x: Var) -> Result<Var, AutodiffError> {
        let (ws, zs, xs) = (self.shape(w), self.shape(z), self.shape(x));
        if ws.len() != 3 || zs.len() != 1 || xs.len() != 1 || ws[1] != zs[0] || ws[2] != xs[0] {
            return Err(AutodiffError::ShapeMismatch {
                op: "bilinear_contract",
                left: ws.to_vec(),
                right: [zs, xs].concat(),
            });
        }
        let (out, n, d) = (ws[0], ws[1], ws[2]);
        let (wd, zd, xd) = (self.data(w), self.data(z), self.data(x));
        let mut data = vec![0.0; out];
        for (l, slot) in data.iter_mut().enumerate() {
            let mut acc = 0.0;
            for i in 0..n {
                if zd[i] == 0.0 {
                    continue;
                }
                let row = &wd[(l * n + i) * d..(l * n + i + 1) * d];
                let inner: f64 = row.iter().zip(xd).map(|(a, b)| a * b).sum();
                acc += zd[i] * inner;
            }
            *slot = acc;
        }
        self.push(
            "bilinear_contract",
            Tensor::from_parts(vec![out], data),
            Op::Bilinear(w, z, x),
            &[w, z, x],
        )
    }

    /// Max-shifted softmax over a vector with at least two entries.
    pub fn softmax(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let v = self.value(a);
        if v.rank() != 1 || v.len() < 2 {
            return Err(AutodiffError::BadShape(v.shape().to_vec()));
        }
        let max = v.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = v.data().iter().map(|x| (x - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        let data = exps.into_iter().map(|e| e / total).collect();
        let t = Tensor::from_parts(v.shape().to_vec(), data);
        self.push("softmax", t, Op::Softmax(a), &[a])
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        if self.shape(a) != self.shape(b) {
            return Err(AutodiffError::ShapeMismatch {
                op: "dot",
                left: self.shape(a).to_vec(),
                right: self.shape(b).to_vec(),
            });
        }
        let s = self.data(a).iter().zip(self.data(b)).map(|(x, y)| x * y).sum();
        self.push("dot", Tensor::scalar(s), Op::Dot(a, b), &[a, b])
    }

    /// Concatenates vectors end to end.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, AutodiffError> {
        if parts.is_empty() {
            return Err(AutodiffError::EmptyInput("concat"));
        }
        let mut data = Vec::new();
        for &p in parts {
            if self.value(p).rank() != 1 {
                return Err(AutodiffError::BadShape(self.shape(p).to_vec()));
            }
            data.extend_from_slice(self.data(p));
        }
        let n = data.len();
        self.push(
            "concat",
            Tensor::from_parts(vec![n], data),
            Op::Concat(parts.to_vec()),
            parts,
        )
    }

    /// Elementwise sum of equally shaped values.
    pub fn sum(&mut self, parts: &[Var]) -> Result<Var, AutodiffError> {
        let data = self.fold_same_shape("sum", parts)?;
        let shape = self.shape(parts[0]).to_vec();
        self.push("sum", Tensor::from_parts(shape, data), Op::Sum(parts.to_vec()), parts)
    }

    /// Elementwise mean of equally shaped values.
    pub fn mean(&mut self, parts: &[Var]) -> Result<Var, AutodiffError> {
        let mut data = self.fold_same_shape("mean", parts)?;
        let k = parts.len() as f64;
        data.iter_mut().for_each(|v| *v /= k);
        let shape = self.shape(parts[0]).to_vec();
        self.push("mean", Tensor::from_parts(shape, data), Op::Mean(parts.to_vec()), parts)
    }

    fn fold_same_shape(&self, op: &'static str, parts: &[Var]) -> Result<Vec<f64>, AutodiffError> {
        let first = *parts.first().ok_or(AutodiffError::EmptyInput(op))?;
        let mut acc = self.data(first).to_vec();
        for &p in &parts[1..] {
            if self.shape(p) != self.shape(first) {
                return Err(AutodiffError::ShapeMismatch {
                    op,
                    left: self.shape(first).to_vec(),
                    right: self.shape(p).to_vec(),
                });
            }
            acc.iter_mut().zip(self.data(p)).for_each(|(a, b)| *a += b);
        }
        Ok(acc)
    }

    /// Row `i` of a matrix, as a vector.
    pub fn row(&mut self, m: Var, i: usize) -> Result<Var, AutodiffError> {
        let s = self.shape(m);
        if s.len() != 2 || i >= s[0] {
            return Err(AutodiffError::BadShape(s.to_vec()));
        }
        let cols = s[1];
        let data = self.data(m)[i * cols..(i + 1) * cols].to_vec();
        self.push("row", Tensor::from_parts(vec![cols], data), Op::Row(m, i), &[m])
    }

    /// Entry `i` of a vector, as a scalar.
    pub fn index(&mut self, a: Var, i: usize) -> Result<Var, AutodiffError> {
        if i >= self.value(a).len() {
            return Err(AutodiffError::BadShape(self.shape(a).to_vec()));
        }
        let v = self.data(a)[i];
        self.push("index", Tensor::scalar(v), Op::Index(a, i), &[a])
    }

    /// Multiplies by a fixed mask (no gradient to the mask).
    pub fn mask(&mut self, a: Var, mask: Vec<f64>) -> Result<Var, AutodiffError> {
        if mask.len() != self.value(a).len() {
            return Err(AutodiffError::ShapeMismatch {
                op: "mask",
                left: self.shape(a).to_vec(),
                right: vec![mask.len()],
            });
        }
        let v = self.value(a);
        let data = v.data().iter().zip(&mask).map(|(x, m)| x * m).collect();
        let t = Tensor::from_parts(v.shape().to_vec(), data);
        self.push("mask", t, Op::Mask(a, mask), &[a])
    }

    /// Inverted dropout: zeroes each entry with probability `rate` and
    /// rescales survivors by `1 / (1 - rate)`. The sampled mask is stored on
    /// the tape so backward reuses it.
    pub fn dropout<R: Rng + ?Sized>(&mut self, a: Var, rate: f64, rng: &mut R) -> Result<Var, AutodiffError> {
        if rate <= 0.0 {
            return Ok(a);
        }
        let keep = 1.0 - rate;
        let mask = (0..self.value(a).len())
            .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        self.mask(a, mask)
    }

    /// Soft stack update for a `[p, n]` stack, a 3-way action distribution
    /// (push, pop, no-op) and a candidate `top` row of length `n`.
    ///
    /// `S'[0] = a_push·top + a_pop·S[1] + a_noop·S[0]` and for `i > 0`
    /// `S'[i] = a_push·S[i-1] + a_pop·S[i+1] + a_noop·S[i]`, with `S[p] = 0`.
    pub fn stack_update(&mut self, stack: Var, actions: Var, top: Var) -> Result<Var, AutodiffError> {
        let ss = self.shape(stack).to_vec();
        if ss.len() != 2 || self.value(actions).len() != 3 || self.shape(top) != [ss[1]] {
            return Err(AutodiffError::ShapeMismatch {
                op: "stack_update",
                left: ss,
                right: self.shape(top).to_vec(),
            });
        }
        let (p, n) = (ss[0], ss[1]);
        let s = self.data(stack);
        let a = self.data(actions);
        let t = self.data(top);
        let mut out = vec![0.0; p * n];
        for i in 0..p {
            for j in 0..n {
                let pushed = if i == 0 { t[j] } else { s[(i - 1) * n + j] };
                let popped = if i + 1 < p { s[(i + 1) * n + j] } else { 0.0 };
                out[i * n + j] = a[0] * pushed + a[1] * popped + a[2] * s[i * n + j];
            }
        }
        self.push(
            "stack_update",
            Tensor::from_parts(vec![p, n], out),
            Op::StackUpdate { stack, actions, top },
            &[stack, actions, top],
        )
    }

    /// Binary cross-entropy of a probability against a 0/1 target, with the
    /// probability clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]`.
    pub fn bce(&mut self, prob: Var, target: f64) -> Result<Var, AutodiffError> {
        if !self.value(prob).is_scalar() {
            return Err(AutodiffError::NotScalar(self.shape(prob).to_vec()));
        }
        let raw = self.data(prob)[0];
        let p = raw.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        let clamped = p != raw;
        let loss = -(target * p.ln() + (1.0 - target) * (1.0 - p).ln());
        self.push("bce", Tensor::scalar(loss), Op::Bce { prob, target, clamped }, &[prob])
    }

    /// Cross-entropy of `σ(logit)` against a 0/1 target. The value matches
    /// `bce(sigmoid(logit), target)` including the clamp, but the gradient is
    /// always `σ(logit) - target`, so saturated wrong predictions still learn.
    pub fn bce_with_logit(&mut self, logit: Var, target: f64) -> Result<Var, AutodiffError> {
        if !self.value(logit).is_scalar() {
            return Err(AutodiffError::NotScalar(self.shape(logit).to_vec()));
        }
        let p = sigmoid(self.data(logit)[0]).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        let loss = -(target * p.ln() + (1.0 - target) * (1.0 - p).ln());
        self.push(
            "bce_with_logit",
            Tensor::scalar(loss),
            Op::LogitBce { logit, target },
            &[logit],
        )
    }

    /// Reverse sweep from a scalar loss.
    pub fn backward(&self, loss: Var) -> Result<Gradients, AutodiffError> {
        if !self.value(loss).is_scalar() {
            return Err(AutodiffError::NotScalar(self.shape(loss).to_vec()));
        }
        let count = loss.0 + 1;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for id in (0..count).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            if node.requires_grad {
                self.backprop(&node.op, &node.value, &g, &mut grads);
            }
            grads[id] = Some(g);
        }
        let shapes = self.nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        Ok(Gradients { grads, shapes })
    }

    fn len_of(&self, v: Var) -> usize {
        self.value(v).len()
    }

    fn backprop(&self, op: &Op, out: &Tensor, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        // Broadcast-aware accumulation: a scalar input receives the sum.
        let acc_bcast = |grads: &mut [Option<Vec<f64>>], v: Var, contrib: &dyn Fn(usize) -> f64| {
            if !self.needs(v) {
                return;
            }
            let len = self.len_of(v);
            accumulate(&mut grads[v.0], len, |buf| {
                if len == 1 && g.len() > 1 {
                    buf[0] += (0..g.len()).map(contrib).sum::<f64>();
                } else {
                    for (i, b) in buf.iter_mut().enumerate() {
                        *b += contrib(i);
                    }
                }
            });
        };
        let at = |v: Var, i: usize| {
            let d = self.data(v);
            if d.len() == 1 {
                d[0]
            } else {
                d[i]
            }
        };
        match op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                acc_bcast(grads, *a, &|i| g[i]);
                acc_bcast(grads, *b, &|i| g[i]);
            }
            Op::Sub(a, b) => {
                acc_bcast(grads, *a, &|i| g[i]);
                acc_bcast(grads, *b, &|i| -g[i]);
            }
            Op::Hadamard(a, b) => {
                acc_bcast(grads, *a, &|i| g[i] * at(*b, i));
                acc_bcast(grads, *b, &|i| g[i] * at(*a, i));
            }
            Op::Scale(a, c) => acc_bcast(grads, *a, &|i| g[i] * c),
            Op::Sigmoid(a) => {
                let y = out.data();
                acc_bcast(grads, *a, &|i| g[i] * y[i] * (1.0 - y[i]));
            }
            Op::Tanh(a) => {
                let y = out.data();
                acc_bcast(grads, *a, &|i| g[i] * (1.0 - y[i] * y[i]));
            }
            Op::MatVec(w, x) => {
                let (m, n) = (self.shape(*w)[0], self.shape(*w)[1]);
                let (wd, xd) = (self.data(*w), self.data(*x));
                if self.needs(*w) {
                    accumulate(&mut grads[w.0], m * n, |buf| {
                        for i in 0..m {
                            for j in 0..n {
                                buf[i * n + j] += g[i] * xd[j];
                            }
                        }
                    });
                }
                if self.needs(*x) {
                    accumulate(&mut grads[x.0], n, |buf| {
                        for i in 0..m {
                            for j in 0..n {
                                buf[j] += wd[i * n + j] * g[i];
                            }
                        }
                    });
                }
            }
            Op::Bilinear(w, z, x) => {
                let s = self.shape(*w);
                let (out_dim, n, d) = (s[0], s[1], s[2]);
                let (wd, zd, xd) = (self.data(*w), self.data(*z), self.data(*x));
                if self.needs(*w) {
                    accumulate(&mut grads[w.0], out_dim * n * d, |buf| {
                        for l in 0..out_dim {
                            for i in 0..n {
                                let gz = g[l] * zd[i];
                                if gz == 0.0 {
                                    continue;
                                }
                                let base = (l * n + i) * d;
                                for k in 0..d {
                                    buf[base + k] += gz * xd[k];
                                }
                            }
                        }
                    });
                }
                if self.needs(*z) {
                    accumulate(&mut grads[z.0], n, |buf| {
                        for l in 0..out_dim {
                            for i in 0..n {
                                let base = (l * n + i) * d;
                                let inner: f64 = wd[base..base + d].iter().zip(xd).map(|(a, b)| a * b).sum();
                                buf[i] += g[l] * inner;
                            }
                        }
                    });
                }
                if self.needs(*x) {
                    accumulate(&mut grads[x.0], d, |buf| {
                        for l in 0..out_dim {
                            for i in 0..n {
                                let gz = g[l] * zd[i];
                                if gz == 0.0 {
                                    continue;
                                }
                                let base = (l * n + i) * d;
                                for k in 0..d {
                                    buf[k] += gz * wd[base + k];
                                }
                            }
                        }
                    });
                }
            }
            Op::Softmax(a) => {
                let y = out.data();
                let inner: f64 = g.iter().zip(y).map(|(gi, yi)| gi * yi).sum();
                acc_bcast(grads, *a, &|i| y[i] * (g[i] - inner));
            }
            Op::Dot(a, b) => {
                let gs = g[0];
                if self.needs(*a) {
                    let bd = self.data(*b);
                    accumulate(&mut grads[a.0], bd.len(), |buf| {
                        buf.iter_mut().zip(bd).for_each(|(o, v)| *o += gs * v)
                    });
                }
                if self.needs(*b) {
                    let ad = self.data(*a);
                    accumulate(&mut grads[b.0], ad.len(), |buf| {
                        buf.iter_mut().zip(ad).for_each(|(o, v)| *o += gs * v)
                    });
                }
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for p in parts {
                    let len = self.len_of(*p);
                    if self.needs(*p) {
                        let slice = &g[offset..offset + len];
                        accumulate(&mut grads[p.0], len, |buf| {
                            buf.iter_mut().zip(slice).for_each(|(o, v)| *o += v)
                        });
                    }
                    offset += len;
                }
            }
            Op::Sum(parts) | Op::Mean(parts) => {
                let k = if matches!(op, Op::Mean(_)) {
                    parts.len() as f64
                } else {
                    1.0
                };
                for p in parts {
                    if self.needs(*p) {
                        accumulate(&mut grads[p.0], g.len(), |buf| {
                            buf.iter_mut().zip(g).for_each(|(o, v)| *o += v / k)
                        });
                    }
                }
            }
            Op::Row(m, i) => {
                if self.needs(*m) {
                    let cols = self.shape(*m)[1];
                    let len = self.len_of(*m);
                    accumulate(&mut grads[m.0], len, |buf| {
                        buf[i * cols..(i + 1) * cols]
                            .iter_mut()
                            .zip(g)
                            .for_each(|(o, v)| *o += v)
                    });
                }
            }
            Op::Index(a, i) => {
                if self.needs(*a) {
                    let len = self.len_of(*a);
                    accumulate(&mut grads[a.0], len, |buf| buf[*i] += g[0]);
                }
            }
            Op::Mask(a, mask) => acc_bcast(grads, *a, &|i| g[i] * mask[i]),
            Op::StackUpdate { stack, actions, top } => {
                let ss = self.shape(*stack);
                let (p, n) = (ss[0], ss[1]);
                let s = self.data(*stack);
                let a = self.data(*actions);
                let t = self.data(*top);
                if self.needs(*actions) {
                    accumulate(&mut grads[actions.0], 3, |buf| {
                        for i in 0..p {
                            for j in 0..n {
                                let gij = g[i * n + j];
                                let pushed = if i == 0 { t[j] } else { s[(i - 1) * n + j] };
                                let popped = if i + 1 < p { s[(i + 1) * n + j] } else { 0.0 };
                                buf[0] += gij * pushed;
                                buf[1] += gij * popped;
                                buf[2] += gij * s[i * n + j];
                            }
                        }
                    });
                }
                if self.needs(*top) {
                    accumulate(&mut grads[top.0], n, |buf| {
                        for j in 0..n {
                            buf[j] += a[0] * g[j];
                        }
                    });
                }
                if self.needs(*stack) {
                    accumulate(&mut grads[stack.0], p * n, |buf| {
                        for k in 0..p {
                            for j in 0..n {
                                let mut acc = a[2] * g[k * n + j];
                                if k + 1 < p {
                                    acc += a[0] * g[(k + 1) * n + j];
                                }
                                if k >= 1 {
                                    acc += a[1] * g[(k - 1) * n + j];
                                }
                                buf[k * n + j] += acc;
                            }
                        }
                    });
                }
            }
            Op::Bce { prob, target, clamped } => {
                if !clamped {
                    let p = self.data(*prob)[0];
                    let d = -target / p + (1.0 - target) / (1.0 - p);
                    acc_bcast(grads, *prob, &|_| g[0] * d);
                }
            }
            Op::LogitBce { logit, target } => {
                let d = sigmoid(self.data(*logit)[0]) - target;
                acc_bcast(grads, *logit, &|_| g[0] * d);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vec_param(g: &mut Graph, v: &[f64]) -> Var {
        g.param(Tensor::vector(v.to_vec()))
    }

    #[test]
    fn sigmoid_of_zero_is_half() {
        let mut g = Graph::new();
        let x = vec_param(&mut g, &[0.0]);
        let y = g.sigmoid(x).unwrap();
        assert_eq!(g.value(y).data(), &[0.5]);
    }

    #[test]
    fn hadamard_matches_hand_values() {
        let mut g = Graph::new();
        let a = vec_param(&mut g, &[1.0, 2.0]);
        let b = vec_param(&mut g, &[3.0, 4.0]);
        let y = g.elementwise(ElementwiseKind::Hadamard, a, Some(b)).unwrap();
        assert_eq!(g.value(y).data(), &[3.0, 8.0]);
    }

    #[test]
    fn tanh_gradient_at_zero_is_one() {
        let mut g = Graph::new();
        let x = vec_param(&mut g, &[0.0]);
        let y = g.tanh(x).unwrap();
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.wrt(x), vec![1.0]);
    }

    #[test]
    fn shape_mismatch_names_both_shapes() {
        let mut g = Graph::new();
        let a = vec_param(&mut g, &[1.0, 2.0]);
        let b = vec_param(&mut g, &[1.0, 2.0, 3.0]);
        let err = g.add(a, b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2]") && msg.contains("[3]"), "{msg}");
    }

    #[test]
    fn scalar_broadcast_is_allowed() {
        let mut g = Graph::new();
        let a = vec_param(&mut g, &[1.0, 2.0]);
        let s = g.param(Tensor::scalar(3.0));
        let y = g.hadamard(a, s).unwrap();
        assert_eq!(g.value(y).data(), &[3.0, 6.0]);
        let l = g.dot(y, a).unwrap();
        let grads = g.backward(l).unwrap();
        // l = s * (a0^2 + a1^2)
        assert_eq!(grads.wrt(s), vec![5.0]);
        assert_eq!(grads.wrt(a), vec![6.0, 12.0]);
    }

    #[test]
    fn matvec_examples() {
        let mut g = Graph::new();
        let id = g.param(Tensor::identity(2));
        let x = vec_param(&mut g, &[3.0, 5.0]);
        let y = g.matvec(id, x).unwrap();
        assert_eq!(g.value(y).data(), &[3.0, 5.0]);

        let w = g.param(Tensor::matrix(2, 2, vec![1.0, 1.0, 0.0, 1.0]).unwrap());
        let x = vec_param(&mut g, &[2.0, 3.0]);
        let y = g.matvec(w, x).unwrap();
        assert_eq!(g.value(y).data(), &[5.0, 3.0]);

        let zero = g.param(Tensor::zeros(&[3, 2]));
        let y = g.matvec(zero, x).unwrap();
        assert_eq!(g.value(y).data(), &[0.0, 0.0, 0.0]);

        let bad = vec_param(&mut g, &[1.0, 2.0, 3.0]);
        assert!(g.matvec(w, bad).is_err());
    }

    #[test]
    fn bilinear_examples() {
        let mut g = Graph::new();
        let w = g.param(Tensor::new(vec![2, 2, 2], vec![1.0; 8]).unwrap());
        let z = vec_param(&mut g, &[1.0, 2.0]);
        let x = vec_param(&mut g, &[3.0, 4.0]);
        let y = g.bilinear_contract(w, z, x).unwrap();
        assert_eq!(g.value(y).data(), &[21.0, 21.0]);

        let w0 = g.param(Tensor::zeros(&[2, 2, 2]));
        let y = g.bilinear_contract(w0, z, x).unwrap();
        assert_eq!(g.value(y).data(), &[0.0, 0.0]);

        let bad = vec_param(&mut g, &[1.0, 2.0, 3.0]);
        assert!(g.bilinear_contract(w, z, bad).is_err());
    }

    #[test]
    fn bilinear_one_hot_selects_slice() {
        let (out, n, d) = (3, 2, 4);
        let data: Vec<f64> = (0..out * n * d).map(|v| v as f64 * 0.5 - 3.0).collect();
        for i1 in 0..n {
            for i2 in 0..d {
                let mut g = Graph::new();
                let w = g.param(Tensor::new(vec![out, n, d], data.clone()).unwrap());
                let z = g.constant(Tensor::one_hot(n, i1));
                let x = g.constant(Tensor::one_hot(d, i2));
                let y = g.bilinear_contract(w, z, x).unwrap();
                let expected: Vec<f64> = (0..out).map(|l| data[(l * n + i1) * d + i2]).collect();
                assert_eq!(g.value(y).data(), expected.as_slice());
            }
        }
    }

    #[test]
    fn softmax_examples() {
        let mut g = Graph::new();
        let a = vec_param(&mut g, &[0.0, 0.0]);
        let y = g.softmax(a).unwrap();
        assert_eq!(g.value(y).data(), &[0.5, 0.5]);

        let b = vec_param(&mut g, &[3f64.ln(), 0.0]);
        let y = g.softmax(b).unwrap();
        let d = g.value(y).data();
        assert!((d[0] - 0.75).abs() < 1e-15 && (d[1] - 0.25).abs() < 1e-15);

        let one = vec_param(&mut g, &[1.0]);
        assert!(g.softmax(one).is_err());
    }

    #[test]
    fn backward_examples() {
        let mut g = Graph::new();
        let x = vec_param(&mut g, &[1.0, 2.0]);
        let l = g.dot(x, x).unwrap();
        let grads = g.backward(l).unwrap();
        assert_eq!(grads.wrt(x), vec![2.0, 4.0]);

        let mut g = Graph::new();
        let x = vec_param(&mut g, &[0.0]);
        let t = g.tanh(x).unwrap();
        let s = g.sigmoid(t).unwrap();
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.wrt(x), vec![0.25]);
    }

    #[test]
    fn off_path_tensors_get_zero_gradient() {
        let mut g = Graph::new();
        let x = vec_param(&mut g, &[1.0, 2.0]);
        let unused = vec_param(&mut g, &[7.0, 7.0, 7.0]);
        let l = g.dot(x, x).unwrap();
        let grads = g.backward(l).unwrap();
        assert!(grads.get(unused).is_none());
        assert_eq!(grads.wrt(unused), vec![0.0; 3]);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut g = Graph::new();
        let x = vec_param(&mut g, &[1.0, 2.0]);
        assert!(matches!(g.backward(x), Err(AutodiffError::NotScalar(_))));
    }

    #[test]
    fn non_finite_results_are_reported() {
        let mut g = Graph::new();
        let x = vec_param(&mut g, &[1e300]);
        assert!(matches!(g.scale(x, 1e300), Err(AutodiffError::NonFinite("scale"))));
    }

    #[test]
    fn backward_is_bit_deterministic() {
        let mut g = Graph::new();
        let w = g.param(Tensor::new(vec![3, 2, 2], (0..12).map(|v| (v as f64).sin()).collect()).unwrap());
        let z = vec_param(&mut g, &[0.3, -0.7]);
        let x = vec_param(&mut g, &[1.1, 0.2]);
        let y = g.bilinear_contract(w, z, x).unwrap();
        let t = g.tanh(y).unwrap();
        let l = g.dot(t, t).unwrap();
        let a = g.backward(l).unwrap();
        let b = g.backward(l).unwrap();
        for v in [w, z, x] {
            let (ga, gb) = (a.wrt(v), b.wrt(v));
            assert!(ga.iter().zip(&gb).all(|(p, q)| p.to_bits() == q.to_bits()));
        }
    }

    #[test]
    fn bce_values() {
        let mut g = Graph::new();
        let p = g.param(Tensor::scalar(0.5));
        let l1 = g.bce(p, 1.0).unwrap();
        let l0 = g.bce(p, 0.0).unwrap();
        assert!((g.value(l1).item() - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((g.value(l0).item() - std::f64::consts::LN_2).abs() < 1e-15);

        let one = g.param(Tensor::scalar(1.0));
        let l = g.bce(one, 1.0).unwrap();
        assert!(g.value(l).item() < 1e-10);
    }

    #[test]
    fn logit_bce_keeps_gradient_when_saturated() {
        let mut g = Graph::new();
        let s = g.param(Tensor::scalar(0.0));
        let l = g.bce_with_logit(s, 1.0).unwrap();
        assert!((g.value(l).item() - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(g.backward(l).unwrap().wrt(s), vec![-0.5]);

        let s = g.param(Tensor::scalar(60.0));
        let wrong = g.bce_with_logit(s, 0.0).unwrap();
        assert!((g.value(wrong).item() + PROB_CLAMP.ln()).abs() < 1e-3);
        assert!((g.backward(wrong).unwrap().wrt(s)[0] - 1.0).abs() < 1e-12);
    }
}
