//! MPNN architectures: the min-aggregation Bellman-Ford network with global
//! layer indexing, and generic mean / normalized-sum / max / min networks.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::Rng;
use rayon::prelude::*;

use crate::autodiff::{ExprGraph, NodeId, Tensor};
use crate::error::{Error, Result};
use crate::graph::{Adjacency, BfInstance, WeightedGraph};

/// Activation layout of the Bellman-Ford network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FnnMode {
    /// ReLU after every layer.
    Theorem,
    /// The last layer of each update block is linear.
    Experiment,
}

impl FnnMode {
    pub fn name(self) -> &'static str {
        match self {
            FnnMode::Theorem => "theorem",
            FnnMode::Experiment => "experiment",
        }
    }
}

impl std::str::FromStr for FnnMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "theorem" => Ok(FnnMode::Theorem),
            "experiment" => Ok(FnnMode::Experiment),
            other => Err(Error::Config(format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Aggregation {
    Min,
    Max,
    Mean,
    NormalizedSum,
}

impl Aggregation {
    pub fn name(self) -> &'static str {
        match self {
            Aggregation::Min => "min",
            Aggregation::Max => "max",
            Aggregation::Mean => "mean",
            Aggregation::NormalizedSum => "normalized-sum",
        }
    }
}

impl std::str::FromStr for Aggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "min" => Ok(Aggregation::Min),
            "max" => Ok(Aggregation::Max),
            "mean" => Ok(Aggregation::Mean),
            "normalized-sum" | "sum" => Ok(Aggregation::NormalizedSum),
            other => Err(Error::Config(format!("unknown aggregation `{other}`"))),
        }
    }
}

/// How the source vertex is presented to the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SourceMode {
    /// Label 0 at the source and `beta` elsewhere.
    BfInit,
    /// Constant `beta` labels; the source is invisible.
    None,
}

impl SourceMode {
    pub fn name(self) -> &'static str {
        match self {
            SourceMode::BfInit => "bf-init",
            SourceMode::None => "none",
        }
    }
}

impl std::str::FromStr for SourceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bf-init" => Ok(SourceMode::BfInit),
            "none" => Ok(SourceMode::None),
            other => Err(Error::Config(format!("unknown source mode `{other}`"))),
        }
    }
}

/// Relabels `g` for source `s`.
pub fn mark_source(g: &BfInstance, s: usize, mode: SourceMode) -> Result<BfInstance> {
    if s >= g.n() {
        return Err(Error::VertexOutOfRange { index: s, n: g.n() });
    }
    let mut labels = vec![g.beta(); g.n()];
    if mode == SourceMode::BfInit {
        labels[s] = 0.0;
    }
    g.with_labels(labels)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub aggregation: Aggregation,
    pub k: usize,
    pub m: usize,
    pub hidden: usize,
    /// Output dimension of the aggregation block in each round.
    pub agg_dims: Vec<usize>,
    pub mode: FnnMode,
    pub source: SourceMode,
}

impl ModelConfig {
    /// Two rounds, two-layer blocks, width 64, aggregation widths 16 and 1.
    pub fn experiment() -> Self {
        Self {
            aggregation: Aggregation::Min,
            k: 2,
            m: 2,
            hidden: 64,
            agg_dims: vec![16, 1],
            mode: FnnMode::Experiment,
            source: SourceMode::BfInit,
        }
    }

    /// ReLU everywhere and scalar aggregation.
    pub fn theorem(m: usize, k: usize, hidden: usize) -> Self {
        Self {
            aggregation: Aggregation::Min,
            k,
            m,
            hidden,
            agg_dims: vec![1; k],
            mode: FnnMode::Theorem,
            source: SourceMode::BfInit,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.m == 0 || self.hidden == 0 {
            return Err(Error::Config("k, m and hidden must be positive".into()));
        }
        if self.agg_dims.len() != self.k || self.agg_dims.contains(&0) {
            return Err(Error::Config(format!("need {} positive aggregation dims, got {:?}", self.k, self.agg_dims)));
        }
        Ok(())
    }

    /// Layer widths `d_0 ..= d_J` of the Bellman-Ford network.
    pub fn dims(&self) -> Vec<usize> {
        let j_total = 2 * self.m * self.k;
        (0..=j_total)
            .map(|j| {
                if j == 0 || j == j_total {
                    1
                } else if j % (2 * self.m) == self.m {
                    self.agg_dims[j / (2 * self.m)]
                } else {
                    self.hidden
                }
            })
            .collect()
    }
}

/// Parameters `(W^j, C^k, b^j)` of the Bellman-Ford MPNN under global layer
/// indexing: round `k` owns aggregation layers `j_k ..= a_k` followed by
/// `m` update layers. All indices below are 1-based as in the math.
#[derive(Debug, Clone, PartialEq)]
pub struct BfParamSet {
    m: usize,
    k: usize,
    dims: Vec<usize>,
    mode: FnnMode,
    pub w: Vec<Tensor>,
    pub c: Vec<Tensor>,
    pub b: Vec<Tensor>,
}

impl BfParamSet {
    pub fn zeros(m: usize, k: usize, dims: Vec<usize>, mode: FnnMode) -> Result<Self> {
        let j_total = 2 * m * k;
        if m == 0 || k == 0 {
            return Err(Error::InvalidParameter("m and K must be positive".into()));
        }
        if dims.len() != j_total + 1 || dims[0] != 1 || dims[j_total] != 1 || dims.contains(&0) {
            return Err(Error::Shape { op: "BfParamSet", detail: format!("need {} positive dims with d_0 = d_J = 1, got {dims:?}", j_total + 1) });
        }
        let w = (1..=j_total).map(|j| Tensor::zeros(vec![dims[j], dims[j - 1]])).collect();
        let c = (1..=k).map(|r| Tensor::zeros(vec![dims[2 * m * (r - 1) + 1], 1])).collect();
        let b = (1..=j_total).map(|j| Tensor::zeros(vec![dims[j]])).collect();
        Ok(Self { m, k, dims, mode, w, c, b })
    }

    pub fn from_config(cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        Self::zeros(cfg.m, cfg.k, cfg.dims(), cfg.mode)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Total number of layers `J = 2mK`.
    pub fn num_layers(&self) -> usize {
        2 * self.m * self.k
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn mode(&self) -> FnnMode {
        self.mode
    }

    /// Edge-inserting layer `j_k`; `j_0 = 0`.
    pub fn edge_layer(&self, k: usize) -> usize {
        if k == 0 {
            0
        } else {
            2 * self.m * (k - 1) + 1
        }
    }

    /// Aggregation layer `a_k`, after which the minimum is taken.
    pub fn agg_layer(&self, k: usize) -> usize {
        self.edge_layer(k) + self.m - 1
    }

    pub fn relu_at(&self, j: usize) -> bool {
        self.mode == FnnMode::Theorem || j % (2 * self.m) != 0
    }

    pub fn w(&self, j: usize) -> &Tensor {
        &self.w[j - 1]
    }

    pub fn c(&self, k: usize) -> &Tensor {
        &self.c[k - 1]
    }

    pub fn b(&self, j: usize) -> &Tensor {
        &self.b[j - 1]
    }

    /// Flat parameter list in the order `W^1..W^J, C^1..C^K, b^1..b^J`.
    pub fn tensors(&self) -> Vec<Tensor> {
        self.w.iter().chain(&self.c).chain(&self.b).cloned().collect()
    }

    pub fn with_tensors(&self, ts: Vec<Tensor>) -> Result<Self> {
        let j = self.num_layers();
        if ts.len() != 2 * j + self.k {
            return Err(Error::Shape { op: "with_tensors", detail: format!("expected {} tensors, got {}", 2 * j + self.k, ts.len()) });
        }
        let mut out = self.clone();
        for (dst, src) in out.w.iter_mut().chain(out.c.iter_mut()).chain(out.b.iter_mut()).zip(ts) {
            if dst.shape() != src.shape() {
                return Err(Error::Shape { op: "with_tensors", detail: format!("{:?} vs {:?}", dst.shape(), src.shape()) });
            }
            *dst = src;
        }
        Ok(out)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64 + Copy) -> Self {
        let mut out = self.clone();
        for t in out.w.iter_mut().chain(out.c.iter_mut()).chain(out.b.iter_mut()) {
            *t = t.map(f);
        }
        out
    }

    /// `(W^+, C^+, 0)`: positive parts of weights, biases dropped.
    pub fn positive_part(&self) -> Self {
        let mut out = self.map(|x| x.max(0.0));
        for b in &mut out.b {
            *b = Tensor::zeros(b.shape().to_vec());
        }
        out
    }

    /// `(W^+, C^+, b^+)`.
    pub fn positive_part_with_biases(&self) -> Self {
        self.map(|x| x.max(0.0))
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(Tensor::numel).sum()
    }

    /// Uniform initialisation in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, where
    /// the edge column counts towards the fan-in of edge-inserting layers.
    pub fn random(cfg: &ModelConfig, rng: &mut impl Rng) -> Result<Self> {
        let mut p = Self::from_config(cfg)?;
        for j in 1..=p.num_layers() {
            let edge_round = (1..=p.k).find(|&r| p.edge_layer(r) == j);
            let fan_in = p.dims[j - 1] + usize::from(edge_round.is_some());
            let bound = 1.0 / (fan_in as f64).sqrt();
            let mut draw = |t: &mut Tensor| t.data_mut().iter_mut().for_each(|x| *x = rng.gen_range(-bound..bound));
            draw(&mut p.w[j - 1]);
            if let Some(r) = edge_round {
                draw(&mut p.c[r - 1]);
            }
            draw(&mut p.b[j - 1]);
        }
        Ok(p)
    }

    fn check_instance(&self, g: &BfInstance) -> Result<()> {
        if g.graph().attr_dim() != self.dims[0] {
            return Err(Error::Shape { op: "bf_mpnn_forward", detail: format!("labels have dim {}, expected {}", g.graph().attr_dim(), self.dims[0]) });
        }
        Ok(())
    }

    /// Eager evaluation; returns `h^{(K)}` per vertex.
    pub fn forward(&self, g: &BfInstance) -> Result<Vec<f64>> {
        Ok(self.forward_traced(g)?.0)
    }

    /// Eager evaluation that also records, for every round, vertex and
    /// aggregation coordinate, which incoming neighbor attained the minimum.
    pub fn forward_traced(&self, g: &BfInstance) -> Result<(Vec<f64>, Trace)> {
        self.check_instance(g)?;
        let adj = Adjacency::with_self_loops(g.graph());
        let n = g.n();
        let mut h: Vec<Vec<f64>> = g.labels().iter().map(|&a| vec![a]).collect();
        let mut trace = Vec::with_capacity(self.k);
        for r in 1..=self.k {
            let jk = self.edge_layer(r);
            let ak = self.agg_layer(r);
            let pre: Vec<Vec<f64>> = h.par_iter().map(|hu| affine(self.w(jk), self.b(jk), hu)).collect();
            let cvec = self.c(r).data();
            let agg: Vec<(Vec<f64>, Vec<usize>)> = (0..n)
                .into_par_iter()
                .map(|v| {
                    let mut best = vec![f64::INFINITY; self.dims[ak]];
                    let mut arg = vec![usize::MAX; self.dims[ak]];
                    for (u, w) in adj.incoming(v) {
                        let mut z: Vec<f64> = pre[u].iter().zip(cvec).map(|(p, c)| p + c * w).collect();
                        activate(&mut z, self.relu_at(jk));
                        for j in jk + 1..=ak {
                            z = affine(self.w(j), self.b(j), &z);
                            activate(&mut z, self.relu_at(j));
                        }
                        for (e, &x) in z.iter().enumerate() {
                            if x < best[e] {
                                best[e] = x;
                                arg[e] = u;
                            }
                        }
                    }
                    (best, arg)
                })
                .collect();
            let (vals, args): (Vec<_>, Vec<_>) = agg.into_iter().unzip();
            trace.push(args);
            h = vals
                .into_par_iter()
                .map(|mut z| {
                    for j in ak + 1..=ak + self.m {
                        z = affine(self.w(j), self.b(j), &z);
                        activate(&mut z, self.relu_at(j));
                    }
                    z
                })
                .collect();
        }
        Ok((h.into_iter().map(|x| x[0]).collect(), Trace { choices: trace }))
    }

    /// Registers every tensor as a trainable leaf.
    pub fn attach(&self, g: &mut ExprGraph) -> ParamNodes {
        ParamNodes {
            w: self.w.iter().map(|t| g.param(t.clone())).collect(),
            c: self.c.iter().map(|t| g.param(t.clone())).collect(),
            b: self.b.iter().map(|t| g.param(t.clone())).collect(),
        }
    }

    /// Differentiable forward pass; returns one scalar node per vertex.
    pub fn forward_tape(&self, g: &mut ExprGraph, p: &ParamNodes, inst: &BfInstance) -> Result<Vec<NodeId>> {
        self.check_instance(inst)?;
        let adj = Adjacency::with_self_loops(inst.graph());
        let n = inst.n();
        let mut h: Vec<NodeId> = inst.labels().iter().map(|&a| g.constant(Tensor::vector(vec![a]))).collect();
        let act = |g: &mut ExprGraph, x: NodeId, relu: bool| if relu { g.relu(x) } else { x };
        for r in 1..=self.k {
            let jk = self.edge_layer(r);
            let ak = self.agg_layer(r);
            let mut pre = Vec::with_capacity(n);
            for &hu in &h {
                let wx = g.matvec(p.w[jk - 1], hu)?;
                pre.push(g.add(wx, p.b[jk - 1])?);
            }
            // Messages depend only on (source, weight); zero-weight edges and
            // self-loops share one node.
            let mut cache: HashMap<(usize, u64), NodeId> = HashMap::new();
            let cflat = g.index_matrix_column(p.c[r - 1]);
            let mut next = Vec::with_capacity(n);
            for v in 0..n {
                let mut msgs = Vec::with_capacity(adj.degree(v));
                for (u, w) in adj.incoming(v) {
                    let key = (u, (w + 0.0).to_bits());
                    if let Some(&id) = cache.get(&key) {
                        msgs.push(id);
                        continue;
                    }
                    let mut z = if w == 0.0 {
                        pre[u]
                    } else {
                        let cw = g.scale(cflat, w);
                        g.add(pre[u], cw)?
                    };
                    z = act(g, z, self.relu_at(jk));
                    for j in jk + 1..=ak {
                        let wz = g.matvec(p.w[j - 1], z)?;
                        let a = g.add(wz, p.b[j - 1])?;
                        z = act(g, a, self.relu_at(j));
                    }
                    cache.insert(key, z);
                    msgs.push(z);
                }
                let mut z = g.reduce_min(&msgs)?;
                for j in ak + 1..=ak + self.m {
                    let wz = g.matvec(p.w[j - 1], z)?;
                    let a = g.add(wz, p.b[j - 1])?;
                    z = act(g, a, self.relu_at(j));
                }
                next.push(z);
            }
            h = next;
        }
        h.into_iter().map(|x| g.index(x, 0)).collect()
    }

    /// The walk-lifted FNN: the `J`-layer network evaluated on `z_0` with the
    /// edge term `C^k z_k` injected as an extra bias at layer `j_k`.
    pub fn walk_lifted(&self, z: &[f64]) -> Result<f64> {
        if z.len() != self.k + 1 {
            return Err(Error::Shape { op: "walk_lifted_fnn", detail: format!("walk vector of length {}, expected {}", z.len(), self.k + 1) });
        }
        if let Some(&bad) = z.iter().find(|x| !(**x >= 0.0)) {
            return Err(Error::InvalidWeight { weight: bad, reason: "walk weights must be non-negative" });
        }
        let mut h = vec![z[0]];
        for j in 1..=self.num_layers() {
            h = affine(self.w(j), self.b(j), &h);
            if let Some(r) = (1..=self.k).find(|&r| self.edge_layer(r) == j) {
                for (x, c) in h.iter_mut().zip(self.c(r).data()) {
                    *x += c * z[r];
                }
            }
            activate(&mut h, self.relu_at(j));
        }
        Ok(h[0])
    }
}

/// Selected incoming neighbor per `[round][vertex][aggregation coordinate]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub choices: Vec<Vec<Vec<usize>>>,
}

impl Trace {
    /// Follows scalar-aggregation choices back from `v`, returning the walk
    /// `v_0, .., v_K = v` of the selected computation path.
    pub fn selected_walk(&self, v: usize) -> Vec<usize> {
        let mut walk = vec![v];
        let mut cur = v;
        for round in self.choices.iter().rev() {
            cur = round[cur][0];
            walk.push(cur);
        }
        walk.reverse();
        walk
    }
}

/// Tape handles of a [`BfParamSet`], in the same layout.
#[derive(Debug, Clone)]
pub struct ParamNodes {
    pub w: Vec<NodeId>,
    pub c: Vec<NodeId>,
    pub b: Vec<NodeId>,
}

impl ParamNodes {
    pub fn all(&self) -> Vec<NodeId> {
        self.w.iter().chain(&self.c).chain(&self.b).copied().collect()
    }
}

impl ExprGraph {
    /// Views a `d x 1` column parameter as a length-`d` vector.
    fn index_matrix_column(&mut self, c: NodeId) -> NodeId {
        self.concat(&[c])
    }
}

fn affine(w: &Tensor, b: &Tensor, x: &[f64]) -> Vec<f64> {
    let cols = w.cols();
    w.data()
        .chunks_exact(cols)
        .zip(b.data())
        .map(|(row, bi)| row.iter().zip(x).map(|(a, c)| a * c).sum::<f64>() + bi)
        .collect()
}

fn activate(z: &mut [f64], relu: bool) {
    if relu {
        z.iter_mut().for_each(|x| *x = x.max(0.0));
    }
}

/// The configuration `psi`: a single 1 in the top-left corner of every
/// `W^j`, `C^k = e_1`, zero biases.
pub fn bf_parameter_config(m: usize, k: usize, dims: Vec<usize>, mode: FnnMode) -> Result<BfParamSet> {
    let mut p = BfParamSet::zeros(m, k, dims, mode)?;
    for t in p.w.iter_mut().chain(p.c.iter_mut()) {
        t.data_mut()[0] = 1.0;
    }
    Ok(p)
}

/// `psi` for the widths of `cfg`.
pub fn psi_for(cfg: &ModelConfig) -> Result<BfParamSet> {
    cfg.validate()?;
    bf_parameter_config(cfg.m, cfg.k, cfg.dims(), cfg.mode)
}

pub fn write_checkpoint(p: &BfParamSet) -> String {
    let mut out = format!("# mode {}\n", p.mode.name());
    let mut line = |name: String, t: &Tensor| {
        let _ = write!(out, "p {name}");
        for d in t.shape() {
            let _ = write!(out, " {d}");
        }
        out.push_str(" :");
        for x in t.data() {
            let _ = write!(out, " {x}");
        }
        out.push('\n');
    };
    for (j, t) in p.w.iter().enumerate() {
        line(format!("W{}", j + 1), t);
    }
    for (k, t) in p.c.iter().enumerate() {
        line(format!("C{}", k + 1), t);
    }
    for (j, t) in p.b.iter().enumerate() {
        line(format!("b{}", j + 1), t);
    }
    out
}

pub fn parse_checkpoint(text: &str) -> Result<BfParamSet> {
    let mut mode = FnnMode::Experiment;
    let mut named: HashMap<String, Tensor> = HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let raw = raw.trim();
        if raw.is_empty() {
            continue;
        }
        if let Some(rest) = raw.strip_prefix('#') {
            let mut tok = rest.split_whitespace();
            if tok.next() == Some("mode") {
                mode = tok.next().unwrap_or("").parse().map_err(|e: Error| Error::Parse { line, msg: e.to_string() })?;
            }
            continue;
        }
        let (head, values) = raw.split_once(':').ok_or_else(|| Error::Parse { line, msg: "missing `:`".into() })?;
        let mut tok = head.split_whitespace();
        if tok.next() != Some("p") {
            return Err(Error::Parse { line, msg: "expected `p` record".into() });
        }
        let name = tok.next().ok_or_else(|| Error::Parse { line, msg: "missing tensor name".into() })?.to_string();
        let shape = tok
            .map(|t| t.parse::<usize>().map_err(|_| Error::Parse { line, msg: format!("bad dimension `{t}`") }))
            .collect::<Result<Vec<_>>>()?;
        let data = values
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| Error::Parse { line, msg: format!("bad value `{t}`") }))
            .collect::<Result<Vec<_>>>()?;
        let t = Tensor::new(shape, data).map_err(|e| Error::Parse { line, msg: e.to_string() })?;
        named.insert(name, t);
    }
    let count = |prefix: char| (1..).take_while(|i| named.contains_key(&format!("{prefix}{i}"))).count();
    let (j_total, k) = (count('W'), count('C'));
    if k == 0 || j_total == 0 || j_total % (2 * k) != 0 || count('b') != j_total {
        return Err(Error::Parse { line: 0, msg: format!("inconsistent tensor set: {j_total} W, {k} C") });
    }
    let m = j_total / (2 * k);
    let mut dims = vec![named["W1"].cols()];
    dims.extend((1..=j_total).map(|j| named[&format!("W{j}")].rows()));
    let p = BfParamSet::zeros(m, k, dims, mode).map_err(|e| Error::Parse { line: 0, msg: e.to_string() })?;
    let mut ts = Vec::new();
    for (prefix, n) in [('W', j_total), ('C', k), ('b', j_total)] {
        for i in 1..=n {
            ts.push(named.remove(&format!("{prefix}{i}")).unwrap());
        }
    }
    p.with_tensors(ts).map_err(|e| Error::Parse { line: 0, msg: e.to_string() })
}

/// A dense layer `x -> act(W x + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub w: Tensor,
    pub b: Tensor,
    pub relu: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fnn {
    pub layers: Vec<Layer>,
}

impl Fnn {
    /// Random ReLU network with widths `widths[0] -> .. -> widths[last]`.
    pub fn random(widths: &[usize], last_relu: bool, rng: &mut impl Rng) -> Self {
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, d)| {
                let bound = 1.0 / (d[0] as f64).sqrt();
                let mut draw = |n: usize| (0..n).map(|_| rng.gen_range(-bound..bound)).collect::<Vec<_>>();
                Layer {
                    w: Tensor::matrix(d[1], d[0], draw(d[0] * d[1])).unwrap(),
                    b: Tensor::vector(draw(d[1])),
                    relu: last_relu || i + 2 < widths.len(),
                }
            })
            .collect();
        Self { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().w.rows()
    }

    fn apply(&self, g: &mut ExprGraph, mut x: NodeId) -> Result<NodeId> {
        for l in &self.layers {
            let w = g.constant(l.w.clone());
            let b = g.constant(l.b.clone());
            let wx = g.matvec(w, x)?;
            x = g.add(wx, b)?;
            if l.relu {
                x = g.relu(x);
            }
        }
        Ok(x)
    }
}

/// One round: the optional message map `M_t(h_v, w)` (used by min/max
/// aggregation) and the update `phi_t(h_u, aggregate)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Round {
    pub message: Option<Fnn>,
    pub update: Fnn,
}

/// Mean, normalized-sum, max or min aggregation MPNN.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralMpnn {
    pub aggregation: Aggregation,
    /// Whether `N(v)` includes `v` itself through a weight-0 self-loop.
    pub self_loops: bool,
    pub rounds: Vec<Round>,
}

impl GeneralMpnn {
    /// Random ReLU networks shaped by `cfg` for inputs of width `d0`.
    pub fn random(cfg: &ModelConfig, d0: usize, rng: &mut impl Rng) -> Result<Self> {
        cfg.validate()?;
        let mut rounds = Vec::with_capacity(cfg.k);
        let mut d_in = d0;
        for r in 0..cfg.k {
            let d_out = if r + 1 == cfg.k { 1 } else { cfg.hidden };
            let (message, d_agg) = match cfg.aggregation {
                Aggregation::Min | Aggregation::Max => {
                    let mut widths = vec![d_in + 1];
                    widths.extend(std::iter::repeat(cfg.hidden).take(cfg.m - 1));
                    widths.push(cfg.agg_dims[r]);
                    (Some(Fnn::random(&widths, true, rng)), cfg.agg_dims[r])
                }
                Aggregation::Mean | Aggregation::NormalizedSum => (None, d_in),
            };
            let mut widths = vec![d_in + d_agg];
            widths.extend(std::iter::repeat(cfg.hidden).take(cfg.m - 1));
            widths.push(d_out);
            let last_relu = cfg.mode == FnnMode::Theorem;
            rounds.push(Round { message, update: Fnn::random(&widths, last_relu, rng) });
            d_in = d_out;
        }
        Ok(Self { aggregation: cfg.aggregation, self_loops: false, rounds })
    }

    /// Mean aggregation with `phi_t(x, y) = (1 - xi) + xi y`: `K`-truncated
    /// weighted PageRank on scalar inputs initialised to 1.
    pub fn pagerank(xi: f64, k: usize) -> Self {
        let update = Fnn {
            layers: vec![Layer { w: Tensor::matrix(1, 2, vec![0.0, xi]).unwrap(), b: Tensor::vector(vec![1.0 - xi]), relu: false }],
        };
        Self { aggregation: Aggregation::Mean, self_loops: false, rounds: vec![Round { message: None, update }; k] }
    }

    /// Min aggregation over `N(v) + v` with `M_t(x, w) = x + w` and identity
    /// update: `K` Bellman-Ford steps.
    pub fn bellman_ford(k: usize) -> Self {
        let message = Fnn { layers: vec![Layer { w: Tensor::matrix(1, 2, vec![1.0, 1.0]).unwrap(), b: Tensor::vector(vec![0.0]), relu: false }] };
        let update = Fnn { layers: vec![Layer { w: Tensor::matrix(1, 2, vec![0.0, 1.0]).unwrap(), b: Tensor::vector(vec![0.0]), relu: false }] };
        Self { aggregation: Aggregation::Min, self_loops: true, rounds: vec![Round { message: Some(message), update }; k] }
    }

    /// Per-vertex outputs, taking the graph's attributes as input features.
    /// Messages flow along in-edges (both directions when undirected).
    pub fn forward(&self, graph: &WeightedGraph) -> Result<Vec<Vec<f64>>> {
        let n = graph.n();
        let adj = if self.self_loops { Adjacency::with_self_loops(graph) } else { Adjacency::without_self_loops(graph) };
        let mut tape = ExprGraph::new();
        let d0 = graph.attr_dim();
        let mut h: Vec<NodeId> = (0..n).map(|v| tape.constant(Tensor::vector(graph.attr(v).to_vec()))).collect();
        let mut dim = d0;
        for round in &self.rounds {
            if round.update.input_dim() < dim {
                return Err(Error::Shape { op: "mpnn_forward", detail: format!("update expects {} inputs, features have {dim}", round.update.input_dim()) });
            }
            let mut next = Vec::with_capacity(n);
            for v in 0..n {
                let agg = match self.aggregation {
                    Aggregation::Mean | Aggregation::NormalizedSum => {
                        let scale = match self.aggregation {
                            Aggregation::Mean => {
                                let deg: f64 = adj.incoming(v).map(|(_, w)| w).sum();
                                if !(deg > 0.0) {
                                    return Err(Error::ZeroDegree(v));
                                }
                                1.0 / deg
                            }
                            _ => 1.0 / n as f64,
                        };
                        let mut terms = Vec::new();
                        for (u, w) in adj.incoming(v) {
                            terms.push(tape.scale(h[u], w * scale));
                        }
                        if terms.is_empty() {
                            tape.constant(Tensor::zeros(vec![dim]))
                        } else {
                            tape.add_all(&terms)?
                        }
                    }
                    Aggregation::Min | Aggregation::Max => {
                        let msg = round.message.as_ref().ok_or_else(|| Error::Config("min/max rounds need a message map".into()))?;
                        let mut msgs = Vec::new();
                        for (u, w) in adj.incoming(v) {
                            let wn = tape.constant(Tensor::vector(vec![w]));
                            let input = tape.concat(&[h[u], wn]);
                            msgs.push(msg.apply(&mut tape, input)?);
                        }
                        if msgs.is_empty() {
                            tape.constant(Tensor::zeros(vec![msg.output_dim()]))
                        } else if self.aggregation == Aggregation::Min {
                            tape.reduce_min(&msgs)?
                        } else {
                            tape.reduce_max(&msgs)?
                        }
                    }
                };
                let input = tape.concat(&[h[v], agg]);
                next.push(round.update.apply(&mut tape, input)?);
            }
            h = next;
            dim = round.update.output_dim();
        }
        Ok(h.into_iter().map(|id| tape.value(id).data().to_vec()).collect())
    }
}

/// Convenience wrappers naming the aggregation explicitly.
pub fn mean_mpnn_forward(model: &GeneralMpnn, g: &WeightedGraph) -> Result<Vec<Vec<f64>>> {
    expect_aggregation(model, &[Aggregation::Mean])?;
    model.forward(g)
}

pub fn sum_mpnn_forward(model: &GeneralMpnn, g: &WeightedGraph) -> Result<Vec<Vec<f64>>> {
    expect_aggregation(model, &[Aggregation::NormalizedSum])?;
    model.forward(g)
}

pub fn max_mpnn_forward(model: &GeneralMpnn, g: &WeightedGraph) -> Result<Vec<Vec<f64>>> {
    expect_aggregation(model, &[Aggregation::Max, Aggregation::Min])?;
    model.forward(g)
}

fn expect_aggregation(model: &GeneralMpnn, allowed: &[Aggregation]) -> Result<()> {
    if !allowed.contains(&model.aggregation) {
        return Err(Error::Config(format!("model uses {} aggregation", model.aggregation.name())));
    }
    Ok(())
}
