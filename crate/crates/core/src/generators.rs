//! Training sets, random datasets and the explicit counterexample graphs.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{BfInstance, Edge, WeightedGraph, DEFAULT_BETA};
use crate::oracles::bf_k_step;

/// A BF instance together with supervised `(vertex, target)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub instance: BfInstance,
    pub targets: Vec<(usize, f64)>,
}

impl Sample {
    /// Supervises every vertex with its `k`-step Bellman-Ford distance.
    pub fn all_vertices(instance: BfInstance, k: usize) -> Self {
        let targets = bf_k_step(&instance, k).into_iter().enumerate().collect();
        Self { instance, targets }
    }
}

/// Path `v_0 .. v_K` with `label(v_0) = w[0]`, the rest `beta`, and edge
/// `(v_{i-1}, v_i)` of weight `w[i]`.
pub fn make_path_graph(w: &[f64], beta: f64) -> Result<BfInstance> {
    if w.is_empty() {
        return Err(Error::InvalidParameter("path weight vector is empty".into()));
    }
    if let Some(&bad) = w.iter().find(|x| !(**x >= 0.0)) {
        return Err(Error::InvalidWeight { weight: bad, reason: "path weights must be non-negative" });
    }
    let n = w.len();
    let edges = (1..n).map(|i| Edge { u: i - 1, v: i, w: w[i] }).collect();
    let graph = WeightedGraph::new(n, false, edges)?;
    let mut labels = vec![beta; n];
    labels[0] = w[0];
    BfInstance::new(graph, labels, beta)
}

/// Smallest admissible sentinel for a training set of `n` graphs at scale `x`.
pub fn beta_bound(x: f64, n: usize) -> f64 {
    2.0 * (n as f64 + x + 1.0)
}

/// The `K + 1` path graphs built from `x * e_k`, each supervised at `v_K`
/// with target `x`.
pub fn make_bf_training_set(x: f64, k: usize, beta: f64) -> Result<Vec<Sample>> {
    if k == 0 {
        return Err(Error::InvalidParameter("K must be positive".into()));
    }
    if !(x >= 0.0) {
        return Err(Error::InvalidParameter(format!("x must be non-negative, got {x}")));
    }
    let bound = beta_bound(x, k + 1);
    if beta < bound {
        return Err(Error::BetaBound { beta, bound });
    }
    (0..=k)
        .map(|i| {
            let mut w = vec![0.0; k + 1];
            w[i] = x;
            Ok(Sample { instance: make_path_graph(&w, beta)?, targets: vec![(k, x)] })
        })
        .collect()
}

/// Index of `p_{i,j}` in [`make_edge_case_graph`] (`1 <= i <= K`, `j < i`).
/// The backbone `v_{-1}, v_0, .., v_K` occupies indices `0 ..= K + 1`.
pub fn edge_case_bypass_index(k: usize, i: usize, j: usize) -> usize {
    debug_assert!(1 <= i && i <= k && j < i);
    k + 2 + i * (i - 1) / 2 + j
}

/// The edge case graph `G(x, K)`: every `v_i` can be reached from the root
/// `v_{-1}` through several routes of equal total weight `x`.
pub fn make_edge_case_graph(x: f64, k: usize, beta: f64) -> Result<BfInstance> {
    if k == 0 {
        return Err(Error::InvalidParameter("edge case graph needs K >= 1".into()));
    }
    if !(x > 0.0) {
        return Err(Error::InvalidParameter(format!("edge case graph needs x > 0, got {x}")));
    }
    let n = k + 2 + k * (k + 1) / 2;
    let mut edges = vec![Edge { u: 0, v: 1, w: x }];
    for i in 1..=k {
        edges.push(Edge { u: i, v: i + 1, w: 0.0 });
    }
    let mut labels = vec![beta; n];
    labels[0] = 0.0;
    labels[1] = x;
    for i in 1..=k {
        let mut prev = 0;
        for j in 0..i {
            let p = edge_case_bypass_index(k, i, j);
            edges.push(Edge { u: prev, v: p, w: 0.0 });
            prev = p;
        }
        edges.push(Edge { u: prev, v: i + 1, w: x });
        labels[edge_case_bypass_index(k, i, 0)] = 0.0;
    }
    BfInstance::new(WeightedGraph::new(n, false, edges)?, labels, beta)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DatasetKind {
    ErConstDeg,
    Er,
    Sbm,
    Star,
    Complete,
    Path,
    General,
}

impl DatasetKind {
    pub fn name(self) -> &'static str {
        match self {
            DatasetKind::ErConstDeg => "er-constdeg",
            DatasetKind::Er => "er",
            DatasetKind::Sbm => "sbm",
            DatasetKind::Star => "star",
            DatasetKind::Complete => "complete",
            DatasetKind::Path => "path",
            DatasetKind::General => "general",
        }
    }
}

impl std::str::FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "er-constdeg" => DatasetKind::ErConstDeg,
            "er" => DatasetKind::Er,
            "sbm" => DatasetKind::Sbm,
            "star" => DatasetKind::Star,
            "complete" => DatasetKind::Complete,
            "path" => DatasetKind::Path,
            "general" => DatasetKind::General,
            other => return Err(Error::Config(format!("unknown dataset kind `{other}`"))),
        })
    }
}

pub const ER_CONSTDEG_AVG_DEGREE: f64 = 6.4;
pub const ER_P: f64 = 0.1;
pub const SBM_BLOCKS: [[f64; 3]; 3] = [[0.7, 0.05, 0.02], [0.05, 0.6, 0.03], [0.02, 0.03, 0.4]];
pub const GENERAL_COUNT: usize = 50;
const ISOLATION_RETRIES: usize = 100;

/// Parameters of a random dataset.
///
/// `kind = path` yields the Bellman-Ford path training set for `k` and `x`
/// and ignores `n`, `count` and the weight bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub kind: DatasetKind,
    pub n: usize,
    pub p: Option<f64>,
    pub avg_degree: Option<f64>,
    pub blocks: Option<Vec<Vec<f64>>>,
    pub weight_low: f64,
    pub weight_high: f64,
    pub count: usize,
    pub seed: u64,
    pub beta: f64,
    pub k: usize,
    pub x: f64,
}

impl DatasetSpec {
    pub fn new(kind: DatasetKind, n: usize, count: usize, seed: u64) -> Self {
        Self {
            kind,
            n,
            p: None,
            avg_degree: None,
            blocks: None,
            weight_low: 1.0,
            weight_high: 100.0,
            count,
            seed,
            beta: DEFAULT_BETA,
            k: 2,
            x: 50.0,
        }
    }

    /// The mixed test set of [`GENERAL_COUNT`] graphs.
    pub fn general(n: usize, seed: u64) -> Self {
        Self::new(DatasetKind::General, n, GENERAL_COUNT, seed)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.weight_low >= 0.0 && self.weight_low <= self.weight_high) || !self.weight_high.is_finite() {
            return Err(Error::Config(format!(
                "weight bounds must satisfy 0 <= low <= high < inf, got [{}, {}]",
                self.weight_low, self.weight_high
            )));
        }
        let prob_ok = |p: f64| (0.0..=1.0).contains(&p);
        if let Some(p) = self.p {
            if !prob_ok(p) {
                return Err(Error::Config(format!("probability {p} outside [0, 1]")));
            }
        }
        if let Some(d) = self.avg_degree {
            if !(d >= 0.0) {
                return Err(Error::Config(format!("average degree {d} is negative")));
            }
        }
        if let Some(b) = &self.blocks {
            if b.is_empty() || b.iter().any(|row| row.len() != b.len()) {
                return Err(Error::Config("block matrix must be square and non-empty".into()));
            }
            for (i, row) in b.iter().enumerate() {
                for (j, &p) in row.iter().enumerate() {
                    if !prob_ok(p) || b[j][i] != p {
                        return Err(Error::Config("block matrix must be symmetric with entries in [0, 1]".into()));
                    }
                }
            }
        }
        if !(self.beta > 0.0) {
            return Err(Error::Config("beta must be positive".into()));
        }
        if self.kind != DatasetKind::Path && self.n < 2 {
            return Err(Error::Generation(format!("{} graphs need n >= 2 to avoid isolated vertices", self.kind.name())));
        }
        Ok(())
    }

    fn block_matrix(&self) -> Vec<Vec<f64>> {
        self.blocks.clone().unwrap_or_else(|| SBM_BLOCKS.iter().map(|r| r.to_vec()).collect())
    }
}

/// Generates the dataset described by `spec`; graph `i` draws from its own
/// ChaCha stream, so the output is deterministic and generation runs in
/// parallel.
pub fn gen_dataset(spec: &DatasetSpec) -> Result<Vec<BfInstance>> {
    spec.validate()?;
    match spec.kind {
        DatasetKind::Path => Ok(make_bf_training_set(spec.x, spec.k, spec.beta)?.into_iter().map(|s| s.instance).collect()),
        DatasetKind::General => (0..spec.count)
            .into_par_iter()
            .map(|i| {
                let mut rng = graph_rng(spec.seed, i);
                let family = i * 5 / spec.count.max(1);
                gen_general_member(spec, family, i, &mut rng)
            })
            .collect(),
        kind => (0..spec.count)
            .into_par_iter()
            .map(|i| {
                let mut rng = graph_rng(spec.seed, i);
                let g = gen_graph(kind, spec, spec.n, &mut rng)?;
                BfInstance::from_source(g, 0, spec.beta)
            })
            .collect(),
    }
}

fn graph_rng(seed: u64, stream: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

fn gen_general_member(spec: &DatasetSpec, family: usize, index: usize, rng: &mut ChaCha8Rng) -> Result<BfInstance> {
    let kind = [DatasetKind::Er, DatasetKind::Sbm, DatasetKind::Complete, DatasetKind::Star][..]
        .get(family)
        .copied();
    match kind {
        Some(kind) => {
            let sub = DatasetSpec { p: None, avg_degree: None, blocks: None, ..spec.clone() };
            let g = gen_graph(kind, &sub, spec.n, rng)?;
            BfInstance::from_source(g, 0, spec.beta)
        }
        // Last family alternates random paths and edge case graphs.
        None if index % 2 == 0 => {
            let g = random_path(spec.n, spec, rng)?;
            BfInstance::from_source(g, 0, spec.beta)
        }
        None => {
            let x = draw_weight(spec, rng).max(f64::MIN_POSITIVE);
            make_edge_case_graph(x, 2, spec.beta)
        }
    }
}

fn draw_weight(spec: &DatasetSpec, rng: &mut ChaCha8Rng) -> f64 {
    if spec.weight_low == spec.weight_high {
        spec.weight_low
    } else {
        rng.gen_range(spec.weight_low..spec.weight_high)
    }
}

fn gen_graph(kind: DatasetKind, spec: &DatasetSpec, n: usize, rng: &mut ChaCha8Rng) -> Result<WeightedGraph> {
    match kind {
        DatasetKind::ErConstDeg => {
            let d = spec.avg_degree.unwrap_or(ER_CONSTDEG_AVG_DEGREE);
            let p = (d / n as f64).min(1.0);
            sample_block_graph(n, &[n], &[vec![p]], spec, rng)
        }
        DatasetKind::Er => sample_block_graph(n, &[n], &[vec![spec.p.unwrap_or(ER_P)]], spec, rng),
        DatasetKind::Sbm => {
            let blocks = spec.block_matrix();
            let b = blocks.len();
            let mut sizes = vec![n / b; b];
            sizes[b - 1] += n % b;
            sample_block_graph(n, &sizes, &blocks, spec, rng)
        }
        DatasetKind::Star => {
            let edges = (1..n).map(|v| Edge { u: 0, v, w: draw_weight(spec, rng) }).collect();
            WeightedGraph::new(n, false, edges)
        }
        DatasetKind::Complete => {
            let mut edges = Vec::with_capacity(n * (n - 1) / 2);
            for u in 0..n {
                for v in u + 1..n {
                    edges.push(Edge { u, v, w: draw_weight(spec, rng) });
                }
            }
            WeightedGraph::new(n, false, edges)
        }
        DatasetKind::Path => random_path(n, spec, rng),
        DatasetKind::General => Err(Error::Generation("general is a mixture, not a family".into())),
    }
}

/// Path on a random vertex order, so the source vertex 0 sits anywhere.
fn random_path(n: usize, spec: &DatasetSpec, rng: &mut ChaCha8Rng) -> Result<WeightedGraph> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let edges = order.windows(2).map(|p| Edge { u: p[0], v: p[1], w: draw_weight(spec, rng) }).collect();
    WeightedGraph::new(n, false, edges)
}

/// Stochastic block model sampler (Erdos-Renyi is the one-block case).
/// Isolated vertices get their edges resampled, then a single random edge.
fn sample_block_graph(
    n: usize,
    sizes: &[usize],
    probs: &[Vec<f64>],
    spec: &DatasetSpec,
    rng: &mut ChaCha8Rng,
) -> Result<WeightedGraph> {
    let block: Vec<usize> = sizes.iter().enumerate().flat_map(|(b, &s)| std::iter::repeat(b).take(s)).collect();
    let p = |u: usize, v: usize| probs[block[u]][block[v]];
    let mut adj = vec![false; n * n];
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.gen_bool(p(u, v)) {
                adj[u * n + v] = true;
                adj[v * n + u] = true;
                edges.push(Edge { u, v, w: draw_weight(spec, rng) });
            }
        }
    }
    let mut degree = vec![0usize; n];
    for e in &edges {
        degree[e.u] += 1;
        degree[e.v] += 1;
    }
    for v in 0..n {
        if degree[v] > 0 {
            continue;
        }
        if (0..n).all(|u| u == v || p(u, v) == 0.0) {
            return Err(Error::Generation(format!("vertex {v} has zero edge probability and would stay isolated")));
        }
        let mut attached = false;
        for _ in 0..ISOLATION_RETRIES {
            for u in (0..n).filter(|&u| u != v) {
                if !adj[u * n + v] && rng.gen_bool(p(u, v)) {
                    adj[u * n + v] = true;
                    adj[v * n + u] = true;
                    edges.push(Edge { u, v, w: draw_weight(spec, rng) });
                    degree[u] += 1;
                    degree[v] += 1;
                    attached = true;
                }
            }
            if attached {
                break;
            }
        }
        if !attached {
            let mut u = rng.gen_range(0..n - 1);
            if u >= v {
                u += 1;
            }
            adj[u * n + v] = true;
            adj[v * n + u] = true;
            edges.push(Edge { u, v, w: draw_weight(spec, rng) });
            degree[u] += 1;
            degree[v] += 1;
        }
    }
    WeightedGraph::new(n, false, edges)
}

fn one_indexed(n: usize, triples: &[(usize, usize, f64)]) -> WeightedGraph {
    let shifted: Vec<_> = triples.iter().map(|&(u, v, w)| (u - 1, v - 1, w)).collect();
    WeightedGraph::from_triples(n, false, &shifted).expect("counterexample graphs are well formed")
}

fn sssp6_graph() -> WeightedGraph {
    one_indexed(
        6,
        &[(1, 2, 3.0), (1, 3, 1.0), (2, 3, 1.0), (3, 4, 5.0), (4, 5, 1.0), (4, 6, 1.0), (5, 6, 3.0)],
    )
}

/// Six vertices where `t1` and `t2` have identical unrolling trees but SSSP
/// costs 2 and 7 from `s`. Returns `(G, s, t1, t2)`; `G` is initialised at `s`.
pub fn counterexample_sssp6() -> (BfInstance, usize, usize, usize) {
    let g = BfInstance::from_source(sssp6_graph(), 0, DEFAULT_BETA).expect("valid source");
    (g, 0, 1, 4)
}

/// Two triangles joined by a bridge versus a six-cycle with a chord:
/// 1-WL equivalent, minimum spanning tree costs 9 and 7.
pub fn counterexample_mst6() -> (WeightedGraph, WeightedGraph) {
    let h = one_indexed(
        6,
        &[(1, 2, 3.0), (2, 4, 1.0), (4, 6, 1.0), (6, 5, 3.0), (5, 3, 1.0), (3, 1, 1.0), (3, 4, 5.0)],
    );
    (sssp6_graph(), h)
}

fn mst14_hubs(edges: &mut Vec<(usize, usize, f64)>) {
    edges.extend((1..=6).map(|i| (7, i, 10.0)));
    edges.extend((9..=14).map(|j| (8, j, 10.0)));
    edges.push((7, 8, 1.0));
}

/// Fourteen-vertex pair with minimum spanning tree costs 39 and 31.
/// Returns `(G, H, v, w)` with the roots `v = w = 0`.
pub fn counterexample_mst14() -> (WeightedGraph, WeightedGraph, usize, usize) {
    let mut g = vec![
        (1, 2, 1.0),
        (1, 3, 1.0),
        (2, 3, 1.0),
        (4, 5, 1.0),
        (4, 6, 1.0),
        (5, 6, 1.0),
        (3, 4, 5.0),
        (9, 10, 1.0),
        (9, 11, 1.0),
        (10, 11, 1.0),
        (12, 13, 1.0),
        (12, 14, 1.0),
        (13, 14, 1.0),
        (11, 12, 5.0),
    ];
    mst14_hubs(&mut g);
    let mut h = vec![
        (1, 2, 1.0),
        (2, 4, 1.0),
        (4, 6, 1.0),
        (6, 5, 1.0),
        (5, 3, 1.0),
        (3, 1, 1.0),
        (3, 4, 5.0),
        (9, 10, 1.0),
        (10, 12, 1.0),
        (12, 14, 1.0),
        (14, 13, 1.0),
        (13, 11, 1.0),
        (11, 9, 1.0),
        (11, 12, 5.0),
    ];
    mst14_hubs(&mut h);
    (one_indexed(14, &g), one_indexed(14, &h), 0, 0)
}
