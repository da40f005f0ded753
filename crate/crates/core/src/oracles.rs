//! Exact classical algorithms used as ground truth.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::graph::{Adjacency, BfInstance, Edge, WeightedGraph};

/// One Bellman-Ford relaxation sweep over raw labels.
fn relax(adj: &Adjacency, labels: &[f64]) -> Vec<f64> {
    (0..adj.n())
        .map(|v| adj.incoming(v).map(|(u, w)| labels[u] + w).fold(f64::INFINITY, f64::min))
        .collect()
}

/// The Bellman-Ford update `a'(v) = min_{u in N(v) + v} a(u) + w(u, v)`.
pub fn bf_update(g: &BfInstance) -> BfInstance {
    let labels = relax(&Adjacency::with_self_loops(g.graph()), g.labels());
    g.with_labels(labels).expect("relaxation keeps labels non-negative on non-negative graphs")
}

/// Labels after `k` Bellman-Ford updates. On negative-weight DAG instances
/// the returned distances may be negative.
pub fn bf_k_step(g: &BfInstance, k: usize) -> Vec<f64> {
    let adj = Adjacency::with_self_loops(g.graph());
    let mut labels = g.labels().to_vec();
    for _ in 0..k {
        labels = relax(&adj, &labels);
    }
    labels
}

#[derive(PartialEq)]
struct HeapItem(f64, usize);

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Dijkstra distances from `s`; unreachable vertices get `+inf`.
pub fn sssp_cost(g: &WeightedGraph, s: usize) -> Result<Vec<f64>> {
    if s >= g.n() {
        return Err(Error::VertexOutOfRange { index: s, n: g.n() });
    }
    if let Some(e) = g.edges().iter().find(|e| e.w < 0.0) {
        return Err(Error::InvalidWeight { weight: e.w, reason: "Dijkstra needs non-negative weights" });
    }
    let out = g.out_neighbors();
    let mut dist = vec![f64::INFINITY; g.n()];
    let mut heap = BinaryHeap::new();
    dist[s] = 0.0;
    heap.push(HeapItem(0.0, s));
    while let Some(HeapItem(d, u)) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        for &(v, w) in &out[u] {
            let nd = d + w;
            if nd < dist[v] {
                dist[v] = nd;
                heap.push(HeapItem(nd, v));
            }
        }
    }
    Ok(dist)
}

struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
    components: usize,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect(), rank: vec![0; n], components: n }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            Ordering::Less => self.parent[ra] = rb,
            Ordering::Greater => self.parent[rb] = ra,
            Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
        self.components -= 1;
        true
    }
}

fn sorted_edges(g: &WeightedGraph) -> Vec<Edge> {
    let mut edges: Vec<Edge> = g
        .edges()
        .iter()
        .map(|e| if e.u <= e.v { *e } else { Edge { u: e.v, v: e.u, w: e.w } })
        .collect();
    edges.sort_by(|a, b| a.w.total_cmp(&b.w).then(a.u.cmp(&b.u)).then(a.v.cmp(&b.v)));
    edges
}

/// Minimum spanning forest cost via Kruskal. Directed edges are treated as
/// undirected.
pub fn mst_cost(g: &WeightedGraph) -> f64 {
    let mut uf = UnionFind::new(g.n());
    sorted_edges(g).iter().filter(|e| uf.union(e.u, e.v)).map(|e| e.w).sum()
}

/// Distinct weights `w_1 < .. < w_m` and component counts `kappa_j` of the
/// subgraph with all edges lighter than `w_j`; `kappa[m]` counts the
/// components of the whole graph.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdCounts {
    pub weights: Vec<f64>,
    pub kappa: Vec<usize>,
}

pub fn threshold_component_counts(g: &WeightedGraph) -> ThresholdCounts {
    let edges = sorted_edges(g);
    let mut uf = UnionFind::new(g.n());
    let mut weights = Vec::new();
    let mut kappa = Vec::new();
    let mut i = 0;
    while i < edges.len() {
        let w = edges[i].w;
        weights.push(w);
        kappa.push(uf.components);
        while i < edges.len() && edges[i].w == w {
            uf.union(edges[i].u, edges[i].v);
            i += 1;
        }
    }
    kappa.push(uf.components);
    ThresholdCounts { weights, kappa }
}

/// Minimum spanning forest cost as `sum_j (kappa_j - kappa_{j+1}) w_j`.
pub fn msf_via_thresholds(g: &WeightedGraph) -> f64 {
    let t = threshold_component_counts(g);
    t.weights
        .iter()
        .enumerate()
        .map(|(j, w)| (t.kappa[j] - t.kappa[j + 1]) as f64 * w)
        .sum()
}

/// `K`-truncated weighted PageRank with damping `xi`, starting from all ones.
pub fn truncated_pagerank(g: &WeightedGraph, xi: f64, k: usize) -> Result<Vec<f64>> {
    if !(xi > 0.0 && xi < 1.0) {
        return Err(Error::InvalidParameter(format!("xi must lie in (0, 1), got {xi}")));
    }
    let adj = g.out_neighbors();
    let deg: Vec<f64> = adj.iter().map(|nb| nb.iter().map(|&(_, w)| w).sum()).collect();
    if let Some(v) = deg.iter().position(|&d| !(d > 0.0)) {
        return Err(Error::ZeroDegree(v));
    }
    let mut r = vec![1.0; g.n()];
    for _ in 0..k {
        r = adj
            .iter()
            .zip(&deg)
            .map(|(nb, d)| (1.0 - xi) + xi / d * nb.iter().map(|&(v, w)| w * r[v]).sum::<f64>())
            .collect();
    }
    Ok(r)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnapsackInstance {
    values: Vec<f64>,
    sizes: Vec<usize>,
    capacity: usize,
}

fn as_count(x: f64, what: &str) -> Result<usize> {
    if x.fract() != 0.0 || !(x >= 0.0) || x > u32::MAX as f64 {
        return Err(Error::InvalidParameter(format!("{what} must be a non-negative integer, got {x}")));
    }
    Ok(x as usize)
}

impl KnapsackInstance {
    /// Items as `(value, size)` pairs; sizes and capacity must be integral.
    pub fn new(items: &[(f64, f64)], capacity: f64) -> Result<Self> {
        let mut values = Vec::with_capacity(items.len());
        let mut sizes = Vec::with_capacity(items.len());
        for &(v, s) in items {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!("item value must be positive, got {v}")));
            }
            let s = as_count(s, "item size")?;
            if s == 0 {
                return Err(Error::InvalidParameter("item size must be at least 1".into()));
            }
            values.push(v);
            sizes.push(s);
        }
        Ok(Self { values, sizes, capacity: as_count(capacity, "capacity")? })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn items(&self) -> impl Iterator<Item = (f64, usize)> + '_ {
        self.values.iter().copied().zip(self.sizes.iter().copied())
    }
}

/// Optimal 0/1 knapsack value by dynamic programming over capacities.
pub fn knapsack_dp(inst: &KnapsackInstance) -> f64 {
    let mut best = vec![0.0f64; inst.capacity + 1];
    for (v, s) in inst.items() {
        for c in (s..=inst.capacity).rev() {
            best[c] = best[c].max(best[c - s] + v);
        }
    }
    best[inst.capacity]
}

/// Index of DAG vertex `(i, j)` for [`knapsack_to_dag`].
pub fn knapsack_vertex(inst: &KnapsackInstance, i: usize, j: usize) -> usize {
    i * (inst.capacity + 1) + j
}

/// Shortest-path reduction: vertex `(i, j)` means "items before `i`
/// decided, `j` capacity used". Returns `(instance, s, t)` where the
/// instance is labelled 0 at `s` and `+inf` elsewhere.
pub fn knapsack_to_dag(inst: &KnapsackInstance) -> Result<(BfInstance, usize, usize)> {
    let n = inst.len();
    let cols = inst.capacity + 1;
    let t = (n + 1) * cols;
    let mut edges = Vec::new();
    for (i, (v, s)) in inst.items().enumerate() {
        for j in 0..cols {
            let from = knapsack_vertex(inst, i, j);
            edges.push(Edge { u: from, v: knapsack_vertex(inst, i + 1, j), w: 0.0 });
            if j + s <= inst.capacity {
                edges.push(Edge { u: from, v: knapsack_vertex(inst, i + 1, j + s), w: -v });
            }
        }
    }
    for j in 0..cols {
        edges.push(Edge { u: knapsack_vertex(inst, n, j), v: t, w: 0.0 });
    }
    let graph = WeightedGraph::new(t + 1, true, edges)?;
    let mut labels = vec![f64::INFINITY; t + 1];
    labels[0] = 0.0;
    Ok((BfInstance::new_dag(graph, labels, f64::INFINITY)?, 0, t))
}

/// Shortest `s`-`t` distance in the knapsack DAG after `n + 1` BF steps.
pub fn knapsack_dag_distance(inst: &KnapsackInstance) -> Result<f64> {
    let (dag, _, t) = knapsack_to_dag(inst)?;
    Ok(bf_k_step(&dag, inst.len() + 1)[t])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{counterexample_mst14, counterexample_mst6, counterexample_sssp6, make_path_graph};
    use proptest::prelude::*;

    fn path2(w: f64, beta: f64) -> BfInstance {
        let g = WeightedGraph::from_triples(2, false, &[(0, 1, w)]).unwrap();
        BfInstance::new(g, vec![0.0, beta], beta).unwrap()
    }

    #[test]
    fn single_relaxation() {
        assert_eq!(bf_update(&path2(1.0, 100.0)).labels(), &[0.0, 1.0]);
    }

    #[test]
    fn fixed_point_is_unchanged() {
        let g = path2(1.0, 100.0).with_labels(vec![0.0, 1.0]).unwrap();
        assert_eq!(bf_update(&g), g);
        assert_eq!(bf_k_step(&g, 0), g.labels());
    }

    #[test]
    fn path_distance_is_l1_norm() {
        let w = [2.0, 3.0, 0.5, 4.0];
        let g = make_path_graph(&w, 1000.0).unwrap();
        assert_eq!(bf_k_step(&g, 3)[3], 9.5);
    }

    #[test]
    fn sssp_counterexample_costs() {
        let (g, s, t1, t2) = counterexample_sssp6();
        let d = sssp_cost(g.graph(), s).unwrap();
        assert_eq!((d[s], d[t1], d[t2]), (0.0, 2.0, 7.0));
        let neg = WeightedGraph::from_triples(2, false, &[(0, 1, -1.0)]).unwrap();
        assert!(sssp_cost(&neg, 0).is_err());
    }

    #[test]
    fn unreachable_is_infinite() {
        let g = WeightedGraph::from_triples(3, false, &[(0, 1, 1.0)]).unwrap();
        assert_eq!(sssp_cost(&g, 0).unwrap()[2], f64::INFINITY);
    }

    #[test]
    fn mst_counterexample_values() {
        let (g, h) = counterexample_mst6();
        assert_eq!((mst_cost(&g), mst_cost(&h)), (9.0, 7.0));
        assert_eq!((msf_via_thresholds(&g), msf_via_thresholds(&h)), (9.0, 7.0));
        let (g, h, _, _) = counterexample_mst14();
        assert_eq!((mst_cost(&g), mst_cost(&h)), (39.0, 31.0));
        assert_eq!((msf_via_thresholds(&g), msf_via_thresholds(&h)), (39.0, 31.0));
    }

    #[test]
    fn tree_mst_is_total_weight() {
        let g = WeightedGraph::from_triples(4, false, &[(0, 1, 2.0), (1, 2, 5.0), (1, 3, 1.5)]).unwrap();
        assert_eq!(mst_cost(&g), 8.5);
    }

    #[test]
    fn single_weight_threshold_counts() {
        let g = WeightedGraph::from_triples(5, false, &[(0, 1, 2.0), (2, 3, 2.0)]).unwrap();
        let t = threshold_component_counts(&g);
        assert_eq!(t.weights, vec![2.0]);
        assert_eq!(t.kappa, vec![5, 3]);
    }

    #[test]
    fn pagerank_regular_graph_stays_one() {
        let g = WeightedGraph::from_triples(3, false, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]).unwrap();
        assert_eq!(truncated_pagerank(&g, 0.85, 10).unwrap(), vec![1.0; 3]);
        assert!(truncated_pagerank(&g, 1.0, 10).is_err());
        let iso = WeightedGraph::from_triples(3, false, &[(0, 1, 1.0)]).unwrap();
        assert!(matches!(truncated_pagerank(&iso, 0.5, 1), Err(Error::ZeroDegree(2))));
    }

    #[test]
    fn small_knapsack() {
        let inst = KnapsackInstance::new(&[(2.0, 1.0), (3.0, 2.0)], 2.0).unwrap();
        assert_eq!(knapsack_dp(&inst), 3.0);
        assert_eq!(knapsack_dag_distance(&inst).unwrap(), -3.0);
        let empty = KnapsackInstance::new(&[(2.0, 1.0)], 0.0).unwrap();
        assert_eq!(knapsack_dp(&empty), 0.0);
        let (dag, _, _) = knapsack_to_dag(&empty).unwrap();
        assert_eq!(dag.n(), 3);
        assert!(KnapsackInstance::new(&[(2.0, 1.5)], 3.0).is_err());
    }

    proptest! {
        #[test]
        fn bf_labels_never_increase(seed in 0u64..1000, n in 2usize..12) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut edges = Vec::new();
            for u in 0..n {
                for v in u + 1..n {
                    if rng.gen_bool(0.3) {
                        edges.push(Edge { u, v, w: rng.gen_range(0.0..10.0) });
                    }
                }
            }
            let g = WeightedGraph::new(n, false, edges).unwrap();
            let mut inst = BfInstance::from_source(g.clone(), 0, 1e6).unwrap();
            for _ in 0..n {
                let next = bf_update(&inst);
                prop_assert!(next.labels().iter().zip(inst.labels()).all(|(a, b)| a <= b));
                inst = next;
            }
            let exact = sssp_cost(&g, 0).unwrap();
            for (a, d) in inst.labels().iter().zip(exact) {
                prop_assert_eq!(*a, if d.is_finite() { d } else { 1e6 });
            }
        }

        #[test]
        fn kruskal_matches_thresholds(seed in 0u64..1000) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n = rng.gen_range(1..10);
            let mut edges = Vec::new();
            for u in 0..n {
                for v in u + 1..n {
                    if rng.gen_bool(0.4) {
                        edges.push(Edge { u, v, w: rng.gen_range(1..5) as f64 });
                    }
                }
            }
            let g = WeightedGraph::new(n, false, edges).unwrap();
            prop_assert_eq!(mst_cost(&g), msf_via_thresholds(&g));
        }
    }
}
