//! Tape-based reverse-mode differentiation over dense vectors and matrices.
//!
//! Every primitive appends a node holding its forward value and the indices
//! of its parents. Node values are never modified after creation. `backward`
//! walks the tape once in reverse order from the seeded roots, accumulating
//! adjoints (so a node feeding several consumers receives the sum of their
//! contributions), and finally adds parameter-leaf adjoints into a
//! [`Gradients`] buffer.

use std::collections::HashMap;
use std::f64::consts::PI;

use super::params::{BlockId, Gradients, ParamStore};
use super::special::{erf, erfc, log_erfc, norm_cdf, norm_pdf};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Unary {
    Exp,
    Log,
    Sqrt,
    Square,
    Erf,
    Erfc,
    LogErfc,
    Sigmoid,
    Tanh,
    Softplus,
    Gelu,
    Relu,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param(BlockId),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, f64),
    Offset(Var),
    MulScalar(Var, Var),
    Broadcast(Var),
    MatVec(Var, Var),
    Affine(Var, Var, Var),
    Concat(Vec<Var>),
    Slice(Var, usize),
    Sum(Var),
    Dot(Var, Var),
    WeightedSum(Vec<Var>, Vec<f64>),
    Unary(Unary, Var),
    Clamp(Var, f64, f64),
    Softmax(Var),
    LogSoftmax(Var),
    LogSumExp(Var),
    Expm1Ratio(Var, f64),
}

#[derive(Debug, Clone)]
struct Node {
    value: Vec<f64>,
    rows: usize,
    cols: usize,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<BlockId, Var>,
    clamp_hits: usize,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// expm1(a t) / a with its a -> 0 limit.
fn expm1_ratio(a: f64, t: f64) -> (f64, f64) {
    let at = a * t;
    if at.abs() < 1e-5 {
        // series: t + a t^2/2 + a^2 t^3/6 + a^3 t^4/24
        let v = t * (1.0 + at / 2.0 + at * at / 6.0 + at * at * at / 24.0);
        let d = t * t * (0.5 + at / 3.0 + at * at / 8.0);
        (v, d)
    } else {
        let em1 = at.exp_m1();
        let v = em1 / a;
        let d = (t * (em1 + 1.0) * a - em1) / (a * a);
        (v, d)
    }
}

impl Unary {
    fn apply(self, x: f64) -> f64 {
        match self {
            Unary::Exp => x.exp(),
            Unary::Log => x.ln(),
            Unary::Sqrt => x.sqrt(),
            Unary::Square => x * x,
            Unary::Erf => erf(x),
            Unary::Erfc => erfc(x),
            Unary::LogErfc => log_erfc(x),
            Unary::Sigmoid => sigmoid(x),
            Unary::Tanh => x.tanh(),
            Unary::Softplus => softplus(x),
            Unary::Gelu => x * norm_cdf(x),
            Unary::Relu => x.max(0.0),
        }
    }

    /// dy/dx given input and output.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Unary::Exp => y,
            Unary::Log => 1.0 / x,
            Unary::Sqrt => 0.5 / y,
            Unary::Square => 2.0 * x,
            Unary::Erf => 2.0 / PI.sqrt() * (-x * x).exp(),
            Unary::Erfc => -2.0 / PI.sqrt() * (-x * x).exp(),
            Unary::LogErfc => -2.0 / PI.sqrt() * (-x * x - y).exp(),
            Unary::Sigmoid => y * (1.0 - y),
            Unary::Tanh => 1.0 - y * y,
            Unary::Softplus => sigmoid(x),
            Unary::Gelu => norm_cdf(x) + x * norm_pdf(x),
            Unary::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

fn softmax_values(x: &[f64]) -> Vec<f64> {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn logsumexp_value(x: &[f64]) -> f64 {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + x.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
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

    /// Number of times a clamp primitive cut its input.
    pub fn clamp_hits(&self) -> usize {
        self.clamp_hits
    }

    fn push(&mut self, value: Vec<f64>, rows: usize, cols: usize, op: Op) -> Var {
        debug_assert_eq!(value.len(), rows * cols);
        self.nodes.push(Node {
            value,
            rows,
            cols,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn push_vec(&mut self, value: Vec<f64>, op: Op) -> Var {
        let n = value.len();
        self.push(value, n, 1, op)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    pub fn len_of(&self, v: Var) -> usize {
        self.nodes[v.0].value.len()
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let n = &self.nodes[v.0];
        (n.rows, n.cols)
    }

    pub fn constant(&mut self, value: Vec<f64>) -> Var {
        self.push_vec(value, Op::Leaf)
    }

    pub fn constant_scalar(&mut self, v: f64) -> Var {
        self.push_vec(vec![v], Op::Leaf)
    }

    /// Leaf for a parameter block; repeated calls return the same node.
    pub fn param(&mut self, store: &ParamStore, id: BlockId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let b = store.block(id);
        let v = self.push(b.values.clone(), b.rows, b.cols, Op::Param(id));
        self.params.insert(id, v);
        v
    }

    fn check_same_len(&self, op: &'static str, a: Var, b: Var) -> Result<usize> {
        let (la, lb) = (self.len_of(a), self.len_of(b));
        if la != lb {
            return Err(Error::ShapeMismatch {
                op,
                detail: format!("{la} vs {lb}"),
            });
        }
        Ok(la)
    }

    fn check_scalar(&self, op: &'static str, s: Var) -> Result<()> {
        if self.len_of(s) != 1 {
            return Err(Error::ShapeMismatch {
                op,
                detail: format!("expected scalar, got length {}", self.len_of(s)),
            });
        }
        Ok(())
    }

    fn zip_with(&mut self, op: Op, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Var {
        let (rows, cols) = self.shape(a);
        let value = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| f(*x, *y))
            .collect();
        self.push(value, rows, cols, op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same_len("add", a, b)?;
        Ok(self.zip_with(Op::Add(a, b), a, b, |x, y| x + y))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same_len("sub", a, b)?;
        Ok(self.zip_with(Op::Sub(a, b), a, b, |x, y| x - y))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same_len("mul", a, b)?;
        Ok(self.zip_with(Op::Mul(a, b), a, b, |x, y| x * y))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same_len("div", a, b)?;
        Ok(self.zip_with(Op::Div(a, b), a, b, |x, y| x / y))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let (rows, cols) = self.shape(a);
        let value = self.value(a).iter().map(|x| c * x).collect();
        self.push(value, rows, cols, Op::Scale(a, c))
    }

    /// Adds a constant to every entry.
    pub fn offset(&mut self, a: Var, c: f64) -> Var {
        let (rows, cols) = self.shape(a);
        let value = self.value(a).iter().map(|x| x + c).collect();
        self.push(value, rows, cols, Op::Offset(a))
    }

    /// Vector times a scalar node.
    pub fn mul_scalar(&mut self, a: Var, s: Var) -> Result<Var> {
        self.check_scalar("mul_scalar", s)?;
        let c = self.scalar(s);
        let (rows, cols) = self.shape(a);
        let value = self.value(a).iter().map(|x| c * x).collect();
        Ok(self.push(value, rows, cols, Op::MulScalar(a, s)))
    }

    /// Repeats a scalar node `n` times.
    pub fn broadcast(&mut self, s: Var, n: usize) -> Result<Var> {
        self.check_scalar("broadcast", s)?;
        let c = self.scalar(s);
        Ok(self.push_vec(vec![c; n], Op::Broadcast(s)))
    }

    fn matvec_values(&self, w: Var, x: Var, op: &'static str) -> Result<Vec<f64>> {
        let (rows, cols) = self.shape(w);
        if self.len_of(x) != cols {
            return Err(Error::ShapeMismatch {
                op,
                detail: format!(
                    "{rows}x{cols} matrix with vector of length {}",
                    self.len_of(x)
                ),
            });
        }
        let wv = self.value(w);
        let xv = self.value(x);
        Ok((0..rows)
            .map(|r| {
                wv[r * cols..(r + 1) * cols]
                    .iter()
                    .zip(xv)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect())
    }

    pub fn matvec(&mut self, w: Var, x: Var) -> Result<Var> {
        let value = self.matvec_values(w, x, "matvec")?;
        Ok(self.push_vec(value, Op::MatVec(w, x)))
    }

    /// `w x + b`.
    pub fn affine(&mut self, w: Var, x: Var, b: Var) -> Result<Var> {
        let mut value = self.matvec_values(w, x, "affine")?;
        if self.len_of(b) != value.len() {
            return Err(Error::ShapeMismatch {
                op: "affine",
                detail: format!("bias length {} for {} outputs", self.len_of(b), value.len()),
            });
        }
        for (v, bi) in value.iter_mut().zip(self.value(b)) {
            *v += bi;
        }
        Ok(self.push_vec(value, Op::Affine(w, x, b)))
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let value = parts
            .iter()
            .flat_map(|p| self.value(*p).iter().copied())
            .collect();
        self.push_vec(value, Op::Concat(parts.to_vec()))
    }

    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        if start + len > self.len_of(a) {
            return Err(Error::ShapeMismatch {
                op: "slice",
                detail: format!("[{start}, {}) of length {}", start + len, self.len_of(a)),
            });
        }
        let value = self.value(a)[start..start + len].to_vec();
        Ok(self.push_vec(value, Op::Slice(a, start)))
    }

    /// Single entry as a scalar node.
    pub fn pick(&mut self, a: Var, index: usize) -> Result<Var> {
        self.slice(a, index, 1)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).iter().sum();
        self.push_vec(vec![s], Op::Sum(a))
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same_len("dot", a, b)?;
        let s = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| x * y)
            .sum();
        Ok(self.push_vec(vec![s], Op::Dot(a, b)))
    }

    /// `Σ_j c_j x_j` over scalar nodes.
    pub fn weighted_sum(&mut self, terms: &[Var], weights: &[f64]) -> Result<Var> {
        if terms.len() != weights.len() {
            return Err(Error::ShapeMismatch {
                op: "weighted_sum",
                detail: format!("{} terms, {} weights", terms.len(), weights.len()),
            });
        }
        let mut s = 0.0;
        for (t, w) in terms.iter().zip(weights) {
            self.check_scalar("weighted_sum", *t)?;
            s += w * self.scalar(*t);
        }
        Ok(self.push_vec(vec![s], Op::WeightedSum(terms.to_vec(), weights.to_vec())))
    }

    pub fn unary(&mut self, kind: Unary, a: Var) -> Var {
        let (rows, cols) = self.shape(a);
        let value = self.value(a).iter().map(|x| kind.apply(*x)).collect();
        self.push(value, rows, cols, Op::Unary(kind, a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(Unary::Exp, a)
    }
    pub fn log(&mut self, a: Var) -> Var {
        self.unary(Unary::Log, a)
    }
    pub fn sqrt(&mut self, a: Var) -> Var {
        self.unary(Unary::Sqrt, a)
    }
    pub fn square(&mut self, a: Var) -> Var {
        self.unary(Unary::Square, a)
    }
    pub fn erf(&mut self, a: Var) -> Var {
        self.unary(Unary::Erf, a)
    }
    pub fn erfc(&mut self, a: Var) -> Var {
        self.unary(Unary::Erfc, a)
    }
    /// `ln erfc(x)`, finite far into the right tail.
    pub fn log_erfc(&mut self, a: Var) -> Var {
        self.unary(Unary::LogErfc, a)
    }
    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(Unary::Sigmoid, a)
    }
    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(Unary::Tanh, a)
    }
    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary(Unary::Softplus, a)
    }
    pub fn gelu(&mut self, a: Var) -> Var {
        self.unary(Unary::Gelu, a)
    }
    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(Unary::Relu, a)
    }

    /// Elementwise clamp to `[lo, hi]`; zero gradient where the clamp is active.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let (rows, cols) = self.shape(a);
        let mut hits = 0;
        let value = self
            .value(a)
            .iter()
            .map(|x| {
                if *x < lo || *x > hi {
                    hits += 1;
                }
                x.clamp(lo, hi)
            })
            .collect();
        self.clamp_hits += hits;
        self.push(value, rows, cols, Op::Clamp(a, lo, hi))
    }

    pub fn softmax(&mut self, a: Var) -> Var {
        let value = softmax_values(self.value(a));
        self.push_vec(value, Op::Softmax(a))
    }

    pub fn log_softmax(&mut self, a: Var) -> Var {
        let lse = logsumexp_value(self.value(a));
        let value = self.value(a).iter().map(|x| x - lse).collect();
        self.push_vec(value, Op::LogSoftmax(a))
    }

    pub fn logsumexp(&mut self, a: Var) -> Var {
        let v = logsumexp_value(self.value(a));
        self.push_vec(vec![v], Op::LogSumExp(a))
    }

    /// `expm1(a t) / a` for a scalar node `a`, continuous through `a = 0`.
    pub fn expm1_ratio(&mut self, a: Var, t: f64) -> Result<Var> {
        self.check_scalar("expm1_ratio", a)?;
        let (v, _) = expm1_ratio(self.scalar(a), t);
        Ok(self.push_vec(vec![v], Op::Expm1Ratio(a, t)))
    }

    /// Fails with the given label if any entry of `v` is NaN or infinite.
    pub fn ensure_finite(&self, v: Var, what: &str) -> Result<()> {
        if self.value(v).iter().all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFiniteValue(what.to_string()))
        }
    }

    /// Reverse pass from the weighted roots `Σ w_r · root_r`; parameter
    /// adjoints are added into `grads`.
    pub fn backward(&self, seeds: &[(Var, f64)], grads: &mut Gradients) -> Result<()> {
        let Some(top) = seeds.iter().map(|(v, _)| v.0).max() else {
            return Ok(());
        };
        let mut adj: Vec<Vec<f64>> = vec![Vec::new(); top + 1];
        for (v, w) in seeds {
            if self.len_of(*v) != 1 {
                return Err(Error::ShapeMismatch {
                    op: "backward",
                    detail: format!("root has length {}", self.len_of(*v)),
                });
            }
            accumulate(&mut adj[v.0], &[*w]);
        }
        for i in (0..=top).rev() {
            if adj[i].is_empty() {
                continue;
            }
            let g = std::mem::take(&mut adj[i]);
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => {
                    let slot = &mut grads.blocks[id.0];
                    for (s, gi) in slot.iter_mut().zip(&g) {
                        *s += gi;
                    }
                }
                Op::Add(a, b) => {
                    accumulate(&mut adj[a.0], &g);
                    accumulate(&mut adj[b.0], &g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut adj[a.0], &g);
                    let ng: Vec<f64> = g.iter().map(|x| -x).collect();
                    accumulate(&mut adj[b.0], &ng);
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let ga: Vec<f64> = g.iter().zip(bv).map(|(x, y)| x * y).collect();
                    let gb: Vec<f64> = g.iter().zip(av).map(|(x, y)| x * y).collect();
                    accumulate(&mut adj[a.0], &ga);
                    accumulate(&mut adj[b.0], &gb);
                }
                Op::Div(a, b) => {
                    let bv = self.value(*b);
                    let y = &node.value;
                    let ga: Vec<f64> = g.iter().zip(bv).map(|(x, d)| x / d).collect();
                    let gb: Vec<f64> = g
                        .iter()
                        .zip(bv.iter().zip(y))
                        .map(|(x, (d, q))| -x * q / d)
                        .collect();
                    accumulate(&mut adj[a.0], &ga);
                    accumulate(&mut adj[b.0], &gb);
                }
                Op::Scale(a, c) => {
                    let ga: Vec<f64> = g.iter().map(|x| c * x).collect();
                    accumulate(&mut adj[a.0], &ga);
                }
                Op::Offset(a) => accumulate(&mut adj[a.0], &g),
                Op::MulScalar(a, s) => {
                    let c = self.scalar(*s);
                    let av = self.value(*a);
                    let ga: Vec<f64> = g.iter().map(|x| c * x).collect();
                    let gs: f64 = g.iter().zip(av).map(|(x, y)| x * y).sum();
                    accumulate(&mut adj[a.0], &ga);
                    accumulate(&mut adj[s.0], &[gs]);
                }
                Op::Broadcast(s) => {
                    let gs: f64 = g.iter().sum();
                    accumulate(&mut adj[s.0], &[gs]);
                }
                Op::MatVec(w, x) | Op::Affine(w, x, _) => {
                    let (rows, cols) = self.shape(*w);
                    let wv = self.value(*w);
                    let xv = self.value(*x);
                    let mut gw = vec![0.0; rows * cols];
                    let mut gx = vec![0.0; cols];
                    for r in 0..rows {
                        let gr = g[r];
                        if gr == 0.0 {
                            continue;
                        }
                        let row = &wv[r * cols..(r + 1) * cols];
                        let grow = &mut gw[r * cols..(r + 1) * cols];
                        for c in 0..cols {
                            grow[c] += gr * xv[c];
                            gx[c] += gr * row[c];
                        }
                    }
                    accumulate(&mut adj[w.0], &gw);
                    accumulate(&mut adj[x.0], &gx);
                    if let Op::Affine(_, _, b) = &node.op {
                        accumulate(&mut adj[b.0], &g);
                    }
                }
                Op::Concat(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let n = self.len_of(*p);
                        accumulate(&mut adj[p.0], &g[off..off + n]);
                        off += n;
                    }
                }
                Op::Slice(a, start) => {
                    let n = self.len_of(*a);
                    let slot = &mut adj[a.0];
                    if slot.is_empty() {
                        *slot = vec![0.0; n];
                    }
                    for (k, gi) in g.iter().enumerate() {
                        slot[start + k] += gi;
                    }
                }
                Op::Sum(a) => {
                    let n = self.len_of(*a);
                    accumulate(&mut adj[a.0], &vec![g[0]; n]);
                }
                Op::Dot(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let ga: Vec<f64> = bv.iter().map(|y| g[0] * y).collect();
                    let gb: Vec<f64> = av.iter().map(|y| g[0] * y).collect();
                    accumulate(&mut adj[a.0], &ga);
                    accumulate(&mut adj[b.0], &gb);
                }
                Op::WeightedSum(terms, weights) => {
                    for (t, w) in terms.iter().zip(weights) {
                        accumulate(&mut adj[t.0], &[g[0] * w]);
                    }
                }
                Op::Unary(kind, a) => {
                    let av = self.value(*a);
                    let ga: Vec<f64> = g
                        .iter()
                        .zip(av.iter().zip(&node.value))
                        .map(|(gi, (x, y))| gi * kind.derivative(*x, *y))
                        .collect();
                    accumulate(&mut adj[a.0], &ga);
                }
                Op::Clamp(a, lo, hi) => {
                    let av = self.value(*a);
                    let ga: Vec<f64> = g
                        .iter()
                        .zip(av)
                        .map(|(gi, x)| if x < lo || x > hi { 0.0 } else { *gi })
                        .collect();
                    accumulate(&mut adj[a.0], &ga);
                }
                Op::Softmax(a) => {
                    let y = &node.value;
                    let gy: f64 = g.iter().zip(y).map(|(x, p)| x * p).sum();
                    let ga: Vec<f64> = g.iter().zip(y).map(|(x, p)| p * (x - gy)).collect();
                    accumulate(&mut adj[a.0], &ga);
                }
                Op::LogSoftmax(a) => {
                    let total: f64 = g.iter().sum();
                    let ga: Vec<f64> = g
                        .iter()
                        .zip(&node.value)
                        .map(|(x, ly)| x - ly.exp() * total)
                        .collect();
                    accumulate(&mut adj[a.0], &ga);
                }
                Op::LogSumExp(a) => {
                    let p = softmax_values(self.value(*a));
                    let ga: Vec<f64> = p.iter().map(|pi| pi * g[0]).collect();
                    accumulate(&mut adj[a.0], &ga);
                }
                Op::Expm1Ratio(a, t) => {
                    let (_, d) = expm1_ratio(self.scalar(*a), *t);
                    accumulate(&mut adj[a.0], &[g[0] * d]);
                }
            }
        }
        Ok(())
    }

    /// Gradients of a single scalar root, checked for finiteness.
    pub fn gradients(&self, root: Var, store: &ParamStore) -> Result<Gradients> {
        let mut grads = Gradients::zeros_like(store);
        self.backward(&[(root, 1.0)], &mut grads)?;
        if let Some(id) = grads.first_non_finite() {
            return Err(Error::NonFiniteGradient(store.block(id).name.clone()));
        }
        Ok(grads)
    }
}

fn accumulate(slot: &mut Vec<f64>, g: &[f64]) {
    if slot.is_empty() {
        slot.extend_from_slice(g);
    } else {
        for (s, x) in slot.iter_mut().zip(g) {
            *s += x;
        }
    }
}
