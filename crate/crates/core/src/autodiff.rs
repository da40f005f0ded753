//! A small reverse-mode automatic differentiation engine over dense tensors.
//!
//! Nodes are appended to an [`ExprGraph`] in topological order; forward
//! values are computed eagerly. Subgradient conventions: `relu'(0) = 0`,
//! `abs'(0) = 0`, and min/max reductions route the gradient to the lowest
//! index among tied arguments.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::Shape { op: "tensor", detail: format!("shape {shape:?} needs {numel} values, got {}", data.len()) });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel = shape.iter().product();
        Self { shape, data: vec![0.0; numel] }
    }

    pub fn scalar(x: f64) -> Self {
        Self { shape: vec![], data: vec![x] }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Self { shape: vec![data.len()], data }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(vec![n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    pub fn rows(&self) -> usize {
        self.shape.first().copied().unwrap_or(1)
    }

    pub fn cols(&self) -> usize {
        self.shape.get(1).copied().unwrap_or(1)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { shape: self.shape.clone(), data: self.data.iter().map(|&x| f(x)).collect() }
    }

    pub fn l1(&self) -> f64 {
        self.data.iter().map(|x| x.abs()).sum()
    }
}

pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixNorm {
    /// Largest singular value, by power iteration.
    Spectral,
    /// Maximum absolute column sum (operator norm on l1).
    L1,
    /// Maximum absolute row sum (operator norm on l-infinity).
    LInf,
    Frobenius,
}

impl MatrixNorm {
    pub fn name(self) -> &'static str {
        match self {
            MatrixNorm::Spectral => "spectral",
            MatrixNorm::L1 => "l1",
            MatrixNorm::LInf => "linf",
            MatrixNorm::Frobenius => "frobenius",
        }
    }
}

impl std::str::FromStr for MatrixNorm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spectral" => Ok(MatrixNorm::Spectral),
            "l1" => Ok(MatrixNorm::L1),
            "linf" => Ok(MatrixNorm::LInf),
            "frobenius" => Ok(MatrixNorm::Frobenius),
            other => Err(Error::Config(format!("unknown matrix norm `{other}`"))),
        }
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatVec(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    ScaleBy(NodeId, NodeId),
    AddConst(NodeId),
    Relu(NodeId),
    Abs(NodeId),
    Sum(NodeId),
    Select { args: Vec<NodeId>, choice: Vec<usize> },
    Concat(Vec<NodeId>),
    Index(NodeId, usize),
    L2Sq(NodeId),
    /// Gradient `u v^T` of the bilinear form with singular vectors frozen.
    Spectral { a: NodeId, u: Vec<f64>, v: Vec<f64> },
    Frobenius(NodeId),
    MaxAbsSum { a: NodeId, by_col: bool, which: usize },
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Tensor,
    grad: bool,
}

/// Recorded computation. Parameters are leaves created with [`ExprGraph::param`].
#[derive(Debug, Clone, Default)]
pub struct ExprGraph {
    nodes: Vec<Node>,
}

pub const POWER_ITERATIONS: usize = 100;

fn shape_err(op: &'static str, detail: String) -> Error {
    Error::Shape { op, detail }
}

impl ExprGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, value: Tensor, grad: bool) -> NodeId {
        self.nodes.push(Node { op, value, grad });
        self.nodes.len() - 1
    }

    fn needs(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|&i| self.nodes[i].grad)
    }

    pub fn param(&mut self, t: Tensor) -> NodeId {
        self.push(Op::Leaf, t, true)
    }

    pub fn constant(&mut self, t: Tensor) -> NodeId {
        self.push(Op::Leaf, t, false)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id].value
    }

    pub fn scalar_value(&self, id: NodeId) -> f64 {
        self.nodes[id].value.item()
    }

    /// For a min/max node, the index of the selected argument per element.
    pub fn choice(&self, id: NodeId) -> Option<&[usize]> {
        match &self.nodes[id].op {
            Op::Select { choice, .. } => Some(choice),
            _ => None,
        }
    }

    pub fn matvec(&mut self, a: NodeId, x: NodeId) -> Result<NodeId> {
        let (am, xv) = (&self.nodes[a].value, &self.nodes[x].value);
        if am.shape.len() != 2 || xv.shape.len() != 1 || am.shape[1] != xv.shape[0] {
            return Err(shape_err("matvec", format!("{:?} x {:?}", am.shape, xv.shape)));
        }
        let (m, n) = (am.shape[0], am.shape[1]);
        let out: Vec<f64> = (0..m)
            .map(|i| am.data[i * n..(i + 1) * n].iter().zip(&xv.data).map(|(p, q)| p * q).sum())
            .collect();
        let g = self.needs(&[a, x]);
        Ok(self.push(Op::MatVec(a, x), Tensor::vector(out), g))
    }

    fn zip(&mut self, a: NodeId, b: NodeId, name: &'static str, op: Op, f: fn(f64, f64) -> f64) -> Result<NodeId> {
        let (av, bv) = (&self.nodes[a].value, &self.nodes[b].value);
        if av.shape != bv.shape {
            return Err(shape_err(name, format!("{:?} vs {:?}", av.shape, bv.shape)));
        }
        let data = av.data.iter().zip(&bv.data).map(|(&p, &q)| f(p, q)).collect();
        let value = Tensor { shape: av.shape.clone(), data };
        let g = self.needs(&[a, b]);
        Ok(self.push(op, value, g))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.zip(a, b, "add", Op::Add(a, b), |p, q| p + q)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.zip(a, b, "sub", Op::Sub(a, b), |p, q| p - q)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.zip(a, b, "mul", Op::Mul(a, b), |p, q| p * q)
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let value = self.nodes[a].value.map(|x| c * x);
        let g = self.nodes[a].grad;
        self.push(Op::Scale(a, c), value, g)
    }

    /// Multiplies tensor `a` by the one-element node `s`.
    pub fn scale_by(&mut self, a: NodeId, s: NodeId) -> Result<NodeId> {
        if self.nodes[s].value.numel() != 1 {
            return Err(shape_err("scale_by", format!("factor has shape {:?}", self.nodes[s].value.shape)));
        }
        let c = self.nodes[s].value.item();
        let value = self.nodes[a].value.map(|x| c * x);
        let g = self.needs(&[a, s]);
        Ok(self.push(Op::ScaleBy(a, s), value, g))
    }

    pub fn add_const(&mut self, a: NodeId, c: f64) -> NodeId {
        let value = self.nodes[a].value.map(|x| x + c);
        let g = self.nodes[a].grad;
        self.push(Op::AddConst(a), value, g)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let value = self.nodes[a].value.map(|x| x.max(0.0));
        let g = self.nodes[a].grad;
        self.push(Op::Relu(a), value, g)
    }

    pub fn abs(&mut self, a: NodeId) -> NodeId {
        let value = self.nodes[a].value.map(f64::abs);
        let g = self.nodes[a].grad;
        self.push(Op::Abs(a), value, g)
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let value = Tensor::scalar(self.nodes[a].value.data.iter().sum());
        let g = self.nodes[a].grad;
        self.push(Op::Sum(a), value, g)
    }

    /// Sum of several same-shaped nodes.
    pub fn add_all(&mut self, ids: &[NodeId]) -> Result<NodeId> {
        let (&first, rest) = ids.split_first().ok_or_else(|| shape_err("add_all", "no arguments".into()))?;
        let mut acc = first;
        for &id in rest {
            acc = self.add(acc, id)?;
        }
        Ok(acc)
    }

    fn select(&mut self, args: &[NodeId], name: &'static str, better: fn(f64, f64) -> bool) -> Result<NodeId> {
        let first = *args.first().ok_or_else(|| shape_err(name, "empty argument set".into()))?;
        let shape = self.nodes[first].value.shape.clone();
        if let Some(&bad) = args.iter().find(|&&i| self.nodes[i].value.shape != shape) {
            return Err(shape_err(name, format!("{:?} vs {:?}", shape, self.nodes[bad].value.shape)));
        }
        let numel = self.nodes[first].value.numel();
        let mut data = self.nodes[first].value.data.clone();
        let mut choice = vec![0; numel];
        for (k, &id) in args.iter().enumerate().skip(1) {
            for (e, &x) in self.nodes[id].value.data.iter().enumerate() {
                if better(x, data[e]) {
                    data[e] = x;
                    choice[e] = k;
                }
            }
        }
        let g = self.needs(args);
        Ok(self.push(Op::Select { args: args.to_vec(), choice }, Tensor { shape, data }, g))
    }

    /// Elementwise minimum across same-shaped nodes; the argmin is recorded.
    pub fn reduce_min(&mut self, args: &[NodeId]) -> Result<NodeId> {
        self.select(args, "reduce_min", |x, best| x < best)
    }

    pub fn reduce_max(&mut self, args: &[NodeId]) -> Result<NodeId> {
        self.select(args, "reduce_max", |x, best| x > best)
    }

    /// Flattens and concatenates the arguments into one vector.
    pub fn concat(&mut self, args: &[NodeId]) -> NodeId {
        let data: Vec<f64> = args.iter().flat_map(|&i| self.nodes[i].value.data.iter().copied()).collect();
        let g = self.needs(args);
        self.push(Op::Concat(args.to_vec()), Tensor::vector(data), g)
    }

    pub fn index(&mut self, a: NodeId, i: usize) -> Result<NodeId> {
        let v = &self.nodes[a].value;
        if i >= v.numel() {
            return Err(shape_err("index", format!("index {i} into {:?}", v.shape)));
        }
        let value = Tensor::scalar(v.data[i]);
        let g = self.nodes[a].grad;
        Ok(self.push(Op::Index(a, i), value, g))
    }

    pub fn l1_norm(&mut self, a: NodeId) -> NodeId {
        let abs = self.abs(a);
        self.sum(abs)
    }

    pub fn l2_norm_sq(&mut self, a: NodeId) -> NodeId {
        let value = Tensor::scalar(self.nodes[a].value.data.iter().map(|x| x * x).sum());
        let g = self.nodes[a].grad;
        self.push(Op::L2Sq(a), value, g)
    }

    /// Operator norm of a matrix node.
    pub fn matrix_norm(&mut self, a: NodeId, kind: MatrixNorm) -> Result<NodeId> {
        let m = &self.nodes[a].value;
        if m.shape.len() != 2 {
            return Err(shape_err("matrix_norm", format!("expected a matrix, got {:?}", m.shape)));
        }
        let g = self.nodes[a].grad;
        Ok(match kind {
            MatrixNorm::Spectral => {
                let (sigma, u, v) = power_iteration(m, POWER_ITERATIONS);
                self.push(Op::Spectral { a, u, v }, Tensor::scalar(sigma), g)
            }
            MatrixNorm::Frobenius => {
                let value = m.data.iter().map(|x| x * x).sum::<f64>().sqrt();
                self.push(Op::Frobenius(a), Tensor::scalar(value), g)
            }
            MatrixNorm::L1 | MatrixNorm::LInf => {
                let by_col = kind == MatrixNorm::L1;
                let (which, value) = max_abs_sum(m, by_col);
                self.push(Op::MaxAbsSum { a, by_col, which }, Tensor::scalar(value), g)
            }
        })
    }

    /// Reverse-mode gradients of the scalar `root` with respect to every node.
    pub fn backward(&self, root: NodeId) -> Result<Gradients> {
        let rv = &self.nodes[root].value;
        if rv.numel() != 1 {
            return Err(Error::NonScalarRoot(rv.shape.clone()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; root + 1];
        grads[root] = Some(vec![1.0]);
        for id in (0..=root).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            if !node.grad {
                continue;
            }
            let mut acc = |target: NodeId, f: &dyn Fn(&mut [f64])| {
                if !self.nodes[target].grad {
                    return;
                }
                let slot = grads[target].get_or_insert_with(|| vec![0.0; self.nodes[target].value.numel()]);
                f(slot);
            };
            match &node.op {
                Op::Leaf => {
                    grads[id] = Some(g);
                    continue;
                }
                Op::MatVec(a, x) => {
                    let (am, xv) = (&self.nodes[*a].value, &self.nodes[*x].value);
                    let n = am.shape[1];
                    acc(*a, &|s| {
                        for (i, gi) in g.iter().enumerate() {
                            for (sj, xj) in s[i * n..(i + 1) * n].iter_mut().zip(&xv.data) {
                                *sj += gi * xj;
                            }
                        }
                    });
                    acc(*x, &|s| {
                        for (i, gi) in g.iter().enumerate() {
                            for (sj, aij) in s.iter_mut().zip(&am.data[i * n..(i + 1) * n]) {
                                *sj += gi * aij;
                            }
                        }
                    });
                }
                Op::Add(a, b) => {
                    acc(*a, &|s| add_into(s, &g, 1.0));
                    acc(*b, &|s| add_into(s, &g, 1.0));
                }
                Op::Sub(a, b) => {
                    acc(*a, &|s| add_into(s, &g, 1.0));
                    acc(*b, &|s| add_into(s, &g, -1.0));
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (&self.nodes[*a].value.data, &self.nodes[*b].value.data);
                    acc(*a, &|s| s.iter_mut().zip(&g).zip(bv).for_each(|((si, gi), bi)| *si += gi * bi));
                    acc(*b, &|s| s.iter_mut().zip(&g).zip(av).for_each(|((si, gi), ai)| *si += gi * ai));
                }
                Op::Scale(a, c) => acc(*a, &|s| add_into(s, &g, *c)),
                Op::ScaleBy(a, f) => {
                    let c = self.nodes[*f].value.item();
                    let av = &self.nodes[*a].value.data;
                    acc(*a, &|s| add_into(s, &g, c));
                    acc(*f, &|s| s[0] += g.iter().zip(av).map(|(gi, ai)| gi * ai).sum::<f64>());
                }
                Op::AddConst(a) => acc(*a, &|s| add_into(s, &g, 1.0)),
                Op::Relu(a) => {
                    let av = &self.nodes[*a].value.data;
                    acc(*a, &|s| {
                        for ((si, gi), ai) in s.iter_mut().zip(&g).zip(av) {
                            if *ai > 0.0 {
                                *si += gi;
                            }
                        }
                    });
                }
                Op::Abs(a) => {
                    let av = &self.nodes[*a].value.data;
                    acc(*a, &|s| {
                        for ((si, gi), ai) in s.iter_mut().zip(&g).zip(av) {
                            if *ai > 0.0 {
                                *si += gi;
                            } else if *ai < 0.0 {
                                *si -= gi;
                            }
                        }
                    });
                }
                Op::Sum(a) => acc(*a, &|s| s.iter_mut().for_each(|si| *si += g[0])),
                Op::Select { args, choice } => {
                    for (k, &arg) in args.iter().enumerate() {
                        acc(arg, &|s| {
                            for (e, &c) in choice.iter().enumerate() {
                                if c == k {
                                    s[e] += g[e];
                                }
                            }
                        });
                    }
                }
                Op::Concat(args) => {
                    let mut offset = 0;
                    for &arg in args {
                        let len = self.nodes[arg].value.numel();
                        acc(arg, &|s| add_into(s, &g[offset..offset + len], 1.0));
                        offset += len;
                    }
                }
                Op::Index(a, i) => acc(*a, &|s| s[*i] += g[0]),
                Op::L2Sq(a) => {
                    let av = &self.nodes[*a].value.data;
                    acc(*a, &|s| add_into(s, av, 2.0 * g[0]));
                }
                Op::Spectral { a, u, v } => {
                    let n = v.len();
                    acc(*a, &|s| {
                        for (i, ui) in u.iter().enumerate() {
                            for (j, vj) in v.iter().enumerate() {
                                s[i * n + j] += g[0] * ui * vj;
                            }
                        }
                    });
                }
                Op::Frobenius(a) => {
                    let norm = node.value.item();
                    let av = &self.nodes[*a].value.data;
                    if norm > 0.0 {
                        acc(*a, &|s| add_into(s, av, g[0] / norm));
                    }
                }
                Op::MaxAbsSum { a, by_col, which } => {
                    let m = &self.nodes[*a].value;
                    let (rows, cols) = (m.shape[0], m.shape[1]);
                    acc(*a, &|s| {
                        let cells: Vec<usize> = if *by_col {
                            (0..rows).map(|i| i * cols + which).collect()
                        } else {
                            (0..cols).map(|j| which * cols + j).collect()
                        };
                        for c in cells {
                            s[c] += g[0] * sign(m.data[c]);
                        }
                    });
                }
            }
        }
        Ok(Gradients { grads })
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn add_into(s: &mut [f64], g: &[f64], c: f64) {
    for (si, gi) in s.iter_mut().zip(g) {
        *si += c * gi;
    }
}

fn max_abs_sum(m: &Tensor, by_col: bool) -> (usize, f64) {
    let (rows, cols) = (m.shape[0], m.shape[1]);
    let (outer, inner) = if by_col { (cols, rows) } else { (rows, cols) };
    let at = |o: usize, i: usize| if by_col { m.data[i * cols + o] } else { m.data[o * cols + i] };
    let mut best = (0, f64::NEG_INFINITY);
    for o in 0..outer {
        let s: f64 = (0..inner).map(|i| at(o, i).abs()).sum();
        if s > best.1 {
            best = (o, s);
        }
    }
    if outer == 0 {
        best.1 = 0.0;
    }
    best
}

/// Largest singular value with left/right singular vectors, from a fixed
/// deterministic start vector.
pub fn power_iteration(m: &Tensor, steps: usize) -> (f64, Vec<f64>, Vec<f64>) {
    let (rows, cols) = (m.rows(), m.cols());
    let mut v: Vec<f64> = (0..cols).map(|j| 1.0 + 0.01 * j as f64).collect();
    normalize(&mut v);
    let mut u = vec![0.0; rows];
    let mut sigma = 0.0;
    for _ in 0..steps {
        for (i, ui) in u.iter_mut().enumerate() {
            *ui = (0..cols).map(|j| m.data[i * cols + j] * v[j]).sum();
        }
        sigma = normalize(&mut u);
        if sigma == 0.0 {
            break;
        }
        for (j, vj) in v.iter_mut().enumerate() {
            *vj = (0..rows).map(|i| m.data[i * cols + j] * u[i]).sum();
        }
        sigma = normalize(&mut v);
        if sigma == 0.0 {
            break;
        }
    }
    (sigma, u, v)
}

fn normalize(x: &mut [f64]) -> f64 {
    let n = x.iter().map(|a| a * a).sum::<f64>().sqrt();
    if n > 0.0 {
        x.iter_mut().for_each(|a| *a /= n);
    }
    n
}

/// Matrix operator norm without recording a graph.
pub fn matrix_norm_value(m: &Tensor, kind: MatrixNorm) -> f64 {
    match kind {
        MatrixNorm::Spectral => power_iteration(m, POWER_ITERATIONS).0,
        MatrixNorm::Frobenius => m.data.iter().map(|x| x * x).sum::<f64>().sqrt(),
        MatrixNorm::L1 => max_abs_sum(m, true).1,
        MatrixNorm::LInf => max_abs_sum(m, false).1,
    }
}

#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient for `id`, or zeros if the root does not depend on it.
    pub fn get(&self, graph: &ExprGraph, id: NodeId) -> Tensor {
        let shape = graph.nodes[id].value.shape.clone();
        match self.grads.get(id).and_then(|g| g.clone()) {
            Some(data) => Tensor { shape, data },
            None => Tensor::zeros(shape),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moment estimates, initialised to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &[Tensor]) -> Self {
        let zeros: Vec<Vec<f64>> = params.iter().map(|p| vec![0.0; p.numel()]).collect();
        Self { m: zeros.clone(), v: zeros, t: 0 }
    }
}

/// One bias-corrected Adam update in place.
pub fn adam_step(params: &mut [Tensor], grads: &[Tensor], state: &mut AdamState, cfg: &AdamConfig) {
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        for (i, (x, &gi)) in p.data.iter_mut().zip(&g.data).enumerate() {
            let m = &mut state.m[k][i];
            let v = &mut state.v[k][i];
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * gi;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * gi * gi;
            *x -= cfg.lr * (*m / c1) / ((*v / c2).sqrt() + cfg.eps);
        }
    }
}

/// Relative error with an absolute floor in the denominator.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Central-difference derivative of `f` along coordinate `i` of tensor `k`.
pub fn central_difference(f: &mut impl FnMut(&[Tensor]) -> f64, params: &[Tensor], k: usize, i: usize, h: f64) -> f64 {
    let mut p = params.to_vec();
    p[k].data[i] = params[k].data[i] + h;
    let up = f(&p);
    p[k].data[i] = params[k].data[i] - h;
    let down = f(&p);
    (up - down) / (2.0 * h)
}

/// Maximum relative error between `analytic` and central differences of `f`
/// over the listed `(tensor, index)` coordinates, or all coordinates when
/// `coords` is `None`.
pub fn finite_diff_check(
    mut f: impl FnMut(&[Tensor]) -> f64,
    params: &[Tensor],
    analytic: &[Tensor],
    h: f64,
    coords: Option<&[(usize, usize)]>,
) -> f64 {
    let all: Vec<(usize, usize)>;
    let coords = match coords {
        Some(c) => c,
        None => {
            all = params.iter().enumerate().flat_map(|(k, p)| (0..p.numel()).map(move |i| (k, i))).collect();
            &all
        }
    };
    coords
        .iter()
        .map(|&(k, i)| relative_error(analytic[k].data[i], central_difference(&mut f, params, k, i, h)))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn relu_values_and_grads() {
        let mut g = ExprGraph::new();
        let x = g.param(Tensor::vector(vec![-1.0, 2.0, 0.0]));
        let r = g.relu(x);
        assert_eq!(g.value(r).data(), &[0.0, 2.0, 0.0]);
        let s = g.sum(r);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(&g, x).data(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn reduce_min_tracks_argmin() {
        let mut g = ExprGraph::new();
        let xs: Vec<NodeId> = [3.0, 1.0, 2.0, 1.0].iter().map(|&v| g.param(Tensor::scalar(v))).collect();
        let m = g.reduce_min(&xs).unwrap();
        assert_eq!(g.scalar_value(m), 1.0);
        assert_eq!(g.choice(m).unwrap(), &[1]);
        let grads = g.backward(m).unwrap();
        let routed: Vec<f64> = xs.iter().map(|&x| grads.get(&g, x).item()).collect();
        assert_eq!(routed, vec![0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn min_against_constant() {
        for (x0, expect) in [(1.0, 1.0), (5.0, 0.0)] {
            let mut g = ExprGraph::new();
            let x = g.param(Tensor::scalar(x0));
            let c = g.constant(Tensor::scalar(3.0));
            let m = g.reduce_min(&[x, c]).unwrap();
            assert_eq!(g.backward(m).unwrap().get(&g, x).item(), expect);
        }
    }

    #[test]
    fn identity_matvec() {
        let mut g = ExprGraph::new();
        let a = g.constant(Tensor::identity(3));
        let x = g.param(Tensor::vector(vec![1.0, -2.0, 3.5]));
        let y = g.matvec(a, x).unwrap();
        assert_eq!(g.value(y).data(), &[1.0, -2.0, 3.5]);
        let bad = g.constant(Tensor::identity(2));
        assert!(matches!(g.matvec(bad, x), Err(Error::Shape { .. })));
    }

    #[test]
    fn non_scalar_root_is_rejected() {
        let mut g = ExprGraph::new();
        let x = g.param(Tensor::vector(vec![1.0, 2.0]));
        assert!(matches!(g.backward(x), Err(Error::NonScalarRoot(_))));
    }

    #[test]
    fn quadratic_and_l1_finite_differences() {
        let quad = |p: &[Tensor]| p[0].data()[0] * p[0].data()[0];
        let params = vec![Tensor::scalar(3.0)];
        assert!(finite_diff_check(quad, &params, &[Tensor::scalar(6.0)], 1e-5, None) < 1e-6);

        let x = Tensor::vector(vec![0.7, -1.3, 2.0]);
        let mut g = ExprGraph::new();
        let xi = g.param(x.clone());
        let l = g.l1_norm(xi);
        let grad = g.backward(l).unwrap().get(&g, xi);
        let err = finite_diff_check(|p: &[Tensor]| p[0].l1(), &[x], &[grad], 1e-5, None);
        assert!(err < 1e-6);
    }

    #[test]
    fn matrix_norms() {
        let mut t = Tensor::identity(3);
        t.data_mut().iter_mut().for_each(|x| *x *= 3.0);
        assert!((matrix_norm_value(&t, MatrixNorm::Spectral) - 3.0).abs() < 1e-12);
        let m = Tensor::matrix(2, 2, vec![1.0, -2.0, 3.0, 4.0]).unwrap();
        assert_eq!(matrix_norm_value(&m, MatrixNorm::L1), 6.0);
        assert_eq!(matrix_norm_value(&m, MatrixNorm::LInf), 7.0);
        let spectral = matrix_norm_value(&m, MatrixNorm::Spectral);
        assert!(spectral <= matrix_norm_value(&m, MatrixNorm::Frobenius) + 1e-12);
        // sigma_max of [[1,-2],[3,4]] is sqrt(15 + sqrt(125)).
        assert!((spectral - (15.0 + 125f64.sqrt()).sqrt()).abs() < 1e-9);
    }

    #[test]
    fn spectral_gradient_matches_finite_differences() {
        let m = Tensor::matrix(2, 3, vec![1.0, 0.5, -0.3, 0.2, 2.0, 0.7]).unwrap();
        let mut g = ExprGraph::new();
        let id = g.param(m.clone());
        let s = g.matrix_norm(id, MatrixNorm::Spectral).unwrap();
        let grad = g.backward(s).unwrap().get(&g, id);
        let f = |p: &[Tensor]| matrix_norm_value(&p[0], MatrixNorm::Spectral);
        assert!(finite_diff_check(f, &[m], &[grad], 1e-6, None) < 1e-6);
    }

    #[test]
    fn adam_first_step_and_zero_gradient() {
        let cfg = AdamConfig::default();
        let mut p = vec![Tensor::vector(vec![1.0, 1.0, 1.0])];
        let mut st = AdamState::new(&p);
        adam_step(&mut p, &[Tensor::vector(vec![0.5, -3.0, 0.0])], &mut st, &cfg);
        let d = p[0].data();
        assert!((d[0] - (1.0 - 1e-3)).abs() < 1e-9);
        assert!((d[1] - (1.0 + 1e-3)).abs() < 1e-9);
        assert_eq!(d[2], 1.0);
    }

    #[test]
    fn adam_minimises_quadratic() {
        let cfg = AdamConfig { lr: 0.01, ..Default::default() };
        let mut p = vec![Tensor::scalar(1.0)];
        let mut st = AdamState::new(&p);
        for _ in 0..1000 {
            let x = p[0].item();
            adam_step(&mut p, &[Tensor::scalar(2.0 * x)], &mut st, &cfg);
        }
        assert!(p[0].item().abs() < 1e-3, "x = {}", p[0].item());
    }

    fn expr(g: &mut ExprGraph, x: NodeId, w: NodeId, which: u8) -> NodeId {
        let y = g.matvec(w, x).unwrap();
        match which {
            0 => {
                let r = g.relu(y);
                g.sum(r)
            }
            1 => g.l2_norm_sq(y),
            _ => {
                let a = g.index(y, 0).unwrap();
                let b = g.index(y, 1).unwrap();
                let m = g.reduce_max(&[a, b]).unwrap();
                g.mul(m, m).unwrap()
            }
        }
    }

    proptest! {
        #[test]
        fn gradients_are_linear(
            xs in proptest::collection::vec(-2.0f64..2.0, 3),
            ws in proptest::collection::vec(-2.0f64..2.0, 6),
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
            which in 0u8..3,
        ) {
            let build = |coef: (f64, f64)| {
                let mut g = ExprGraph::new();
                let x = g.param(Tensor::vector(xs.clone()));
                let w = g.param(Tensor::matrix(2, 3, ws.clone()).unwrap());
                let f = expr(&mut g, x, w, which);
                let h = g.l1_norm(x);
                let fa = g.scale(f, coef.0);
                let hb = g.scale(h, coef.1);
                let root = g.add(fa, hb).unwrap();
                let grads = g.backward(root).unwrap();
                (grads.get(&g, x), grads.get(&g, w))
            };
            let (cx, cw) = build((a, b));
            let (fx, fw) = build((1.0, 0.0));
            let (hx, hw) = build((0.0, 1.0));
            for (c, (f, h)) in cx.data().iter().zip(fx.data().iter().zip(hx.data())) {
                prop_assert!((c - (a * f + b * h)).abs() < 1e-9);
            }
            for (c, (f, h)) in cw.data().iter().zip(fw.data().iter().zip(hw.data())) {
                prop_assert!((c - (a * f + b * h)).abs() < 1e-9);
            }
        }

        #[test]
        fn evaluation_is_deterministic(xs in proptest::collection::vec(-2.0f64..2.0, 3)) {
            let run = || {
                let mut g = ExprGraph::new();
                let x = g.param(Tensor::vector(xs.clone()));
                let c = g.concat(&[x, x]);
                let s = g.l2_norm_sq(c);
                let grads = g.backward(s).unwrap();
                (g.scalar_value(s).to_bits(), grads.get(&g, x).data().iter().map(|v| v.to_bits()).collect::<Vec<_>>())
            };
            prop_assert_eq!(run(), run());
        }
    }
}
