//! Weighted, attributed graphs and Bellman-Ford instances.

use std::collections::HashSet;

use crate::error::{Error, Result};

/// Sentinel label for vertices not yet reached by Bellman-Ford.
pub const DEFAULT_BETA: f64 = 1000.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub w: f64,
}

/// A vertex-attributed, edge-weighted graph.
///
/// Undirected edges are stored once; `(u, v)` and `(v, u)` denote the same
/// edge. Attributes are stored row-major with `dim` values per vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    n: usize,
    directed: bool,
    edges: Vec<Edge>,
    dim: usize,
    attrs: Vec<f64>,
}

impl WeightedGraph {
    /// Builds a graph without vertex attributes.
    pub fn new(n: usize, directed: bool, edges: Vec<Edge>) -> Result<Self> {
        Self::with_attrs(n, directed, edges, 0, Vec::new())
    }

    pub fn with_attrs(
        n: usize,
        directed: bool,
        edges: Vec<Edge>,
        dim: usize,
        attrs: Vec<f64>,
    ) -> Result<Self> {
        if attrs.len() != n * dim {
            return Err(Error::AttributeMismatch { expected: n * dim, got: attrs.len() });
        }
        let mut seen = HashSet::with_capacity(edges.len());
        for e in &edges {
            for idx in [e.u, e.v] {
                if idx >= n {
                    return Err(Error::VertexOutOfRange { index: idx, n });
                }
            }
            if e.u == e.v {
                return Err(Error::SelfLoop(e.u));
            }
            if !e.w.is_finite() {
                return Err(Error::InvalidWeight { weight: e.w, reason: "weights must be finite" });
            }
            let key = if directed || e.u < e.v { (e.u, e.v) } else { (e.v, e.u) };
            if !seen.insert(key) {
                return Err(Error::DuplicateEdge { u: e.u, v: e.v });
            }
        }
        Ok(Self { n, directed, edges, dim, attrs })
    }

    /// Convenience constructor from `(u, v, w)` triples.
    pub fn from_triples(n: usize, directed: bool, triples: &[(usize, usize, f64)]) -> Result<Self> {
        let edges = triples.iter().map(|&(u, v, w)| Edge { u, v, w }).collect();
        Self::new(n, directed, edges)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn attr_dim(&self) -> usize {
        self.dim
    }

    pub fn attrs(&self) -> &[f64] {
        &self.attrs
    }

    pub fn attr(&self, v: usize) -> &[f64] {
        &self.attrs[v * self.dim..(v + 1) * self.dim]
    }

    /// Replaces all vertex attributes.
    pub fn set_attrs(&mut self, dim: usize, attrs: Vec<f64>) -> Result<()> {
        if attrs.len() != self.n * dim {
            return Err(Error::AttributeMismatch { expected: self.n * dim, got: attrs.len() });
        }
        self.dim = dim;
        self.attrs = attrs;
        Ok(())
    }

    pub fn min_weight(&self) -> Option<f64> {
        self.edges.iter().map(|e| e.w).reduce(f64::min)
    }

    /// Symmetric neighbor lists `(neighbor, weight)`; for directed graphs
    /// both in- and out-neighbors are listed.
    pub fn neighbors(&self) -> Vec<Vec<(usize, f64)>> {
        let mut adj = vec![Vec::new(); self.n];
        for e in &self.edges {
            adj[e.u].push((e.v, e.w));
            adj[e.v].push((e.u, e.w));
        }
        adj
    }

    /// Neighbors `u` from which messages flow into each vertex `v`.
    pub fn in_neighbors(&self) -> Vec<Vec<(usize, f64)>> {
        let mut adj = vec![Vec::new(); self.n];
        for e in &self.edges {
            adj[e.v].push((e.u, e.w));
            if !self.directed {
                adj[e.u].push((e.v, e.w));
            }
        }
        adj
    }

    /// Out-neighbors; equals [`Self::in_neighbors`] for undirected graphs.
    pub fn out_neighbors(&self) -> Vec<Vec<(usize, f64)>> {
        let mut adj = vec![Vec::new(); self.n];
        for e in &self.edges {
            adj[e.u].push((e.v, e.w));
            if !self.directed {
                adj[e.v].push((e.u, e.w));
            }
        }
        adj
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n];
        for e in &self.edges {
            deg[e.u] += 1;
            deg[e.v] += 1;
        }
        deg
    }

    pub fn has_isolated_vertex(&self) -> bool {
        self.degrees().iter().any(|&d| d == 0)
    }

    /// Relabels vertices: vertex `v` becomes `perm[v]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        check_permutation(perm, self.n)?;
        let edges = self
            .edges
            .iter()
            .map(|e| Edge { u: perm[e.u], v: perm[e.v], w: e.w })
            .collect();
        let mut attrs = vec![0.0; self.attrs.len()];
        for v in 0..self.n {
            let dst = perm[v];
            attrs[dst * self.dim..(dst + 1) * self.dim].copy_from_slice(self.attr(v));
        }
        Self::with_attrs(self.n, self.directed, edges, self.dim, attrs)
    }
}

fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    if perm.len() != n {
        return Err(Error::InvalidParameter(format!("permutation of length {} for {n} vertices", perm.len())));
    }
    for &p in perm {
        if p >= n || seen[p] {
            return Err(Error::InvalidParameter("not a permutation".into()));
        }
        seen[p] = true;
    }
    Ok(())
}

/// Disjoint union; the vertices of `h` are shifted by `g.n()`.
///
/// Both graphs must agree on directedness and attribute dimension.
pub fn disjoint_union(g: &WeightedGraph, h: &WeightedGraph) -> Result<WeightedGraph> {
    if g.directed != h.directed {
        return Err(Error::InvalidParameter("cannot unite directed and undirected graphs".into()));
    }
    if g.dim != h.dim {
        return Err(Error::AttributeMismatch { expected: g.dim, got: h.dim });
    }
    let shift = g.n;
    let mut edges = g.edges.clone();
    edges.extend(h.edges.iter().map(|e| Edge { u: e.u + shift, v: e.v + shift, w: e.w }));
    let mut attrs = g.attrs.clone();
    attrs.extend_from_slice(&h.attrs);
    WeightedGraph::with_attrs(g.n + h.n, g.directed, edges, g.dim, attrs)
}

/// Compressed incoming adjacency including the implicit zero-weight
/// self-loop as the first entry of every vertex.
#[derive(Debug, Clone)]
pub struct Adjacency {
    offsets: Vec<usize>,
    sources: Vec<usize>,
    weights: Vec<f64>,
}

impl Adjacency {
    pub fn with_self_loops(g: &WeightedGraph) -> Self {
        Self::build(g, true)
    }

    pub fn without_self_loops(g: &WeightedGraph) -> Self {
        Self::build(g, false)
    }

    fn build(g: &WeightedGraph, self_loops: bool) -> Self {
        let n = g.n();
        let mut count = vec![usize::from(self_loops); n];
        for e in g.edges() {
            count[e.v] += 1;
            if !g.is_directed() {
                count[e.u] += 1;
            }
        }
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for c in &count {
            offsets.push(offsets.last().unwrap() + c);
        }
        let total = *offsets.last().unwrap();
        let mut sources = vec![0; total];
        let mut weights = vec![0.0; total];
        let mut fill = offsets[..n].to_vec();
        if self_loops {
            for v in 0..n {
                sources[fill[v]] = v;
                fill[v] += 1;
            }
        }
        for e in g.edges() {
            sources[fill[e.v]] = e.u;
            weights[fill[e.v]] = e.w;
            fill[e.v] += 1;
            if !g.is_directed() {
                sources[fill[e.u]] = e.v;
                weights[fill[e.u]] = e.w;
                fill[e.u] += 1;
            }
        }
        Self { offsets, sources, weights }
    }

    pub fn n(&self) -> usize {
        self.offsets.len() - 1
    }

    /// `(source, weight)` pairs of messages arriving at `v`.
    pub fn incoming(&self, v: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.offsets[v]..self.offsets[v + 1];
        self.sources[range.clone()].iter().copied().zip(self.weights[range].iter().copied())
    }

    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    pub fn num_messages(&self) -> usize {
        self.sources.len()
    }
}

/// A graph whose scalar vertex labels are Bellman-Ford distance estimates.
///
/// The labels are stored as the graph's one-dimensional attributes.
#[derive(Debug, Clone, PartialEq)]
pub struct BfInstance {
    graph: WeightedGraph,
    beta: f64,
}

impl BfInstance {
    /// Validates non-negative labels and weights.
    pub fn new(graph: WeightedGraph, labels: Vec<f64>, beta: f64) -> Result<Self> {
        if let Some(e) = graph.edges().iter().find(|e| e.w < 0.0) {
            return Err(Error::InvalidWeight { weight: e.w, reason: "Bellman-Ford weights must be non-negative" });
        }
        Self::build(graph, labels, beta)
    }

    /// Instance over a directed acyclic graph that may carry negative
    /// weights (dynamic-programming reductions). Relaxation stays exact
    /// because the graph has no cycles.
    pub fn new_dag(graph: WeightedGraph, labels: Vec<f64>, beta: f64) -> Result<Self> {
        if !graph.is_directed() {
            return Err(Error::InvalidParameter("negative-weight instances must be directed".into()));
        }
        if !is_acyclic(&graph) {
            return Err(Error::InvalidParameter("graph has a directed cycle".into()));
        }
        Self::build(graph, labels, beta)
    }

    fn build(mut graph: WeightedGraph, labels: Vec<f64>, beta: f64) -> Result<Self> {
        if labels.len() != graph.n() {
            return Err(Error::AttributeMismatch { expected: graph.n(), got: labels.len() });
        }
        if let Some((vertex, &label)) = labels.iter().enumerate().find(|(_, l)| !(**l >= 0.0)) {
            return Err(Error::InvalidLabel { vertex, label });
        }
        if !(beta > 0.0) {
            return Err(Error::InvalidParameter(format!("beta must be positive, got {beta}")));
        }
        graph.set_attrs(1, labels)?;
        Ok(Self { graph, beta })
    }

    /// Source-initialised instance: label 0 at `source`, `beta` elsewhere.
    pub fn from_source(graph: WeightedGraph, source: usize, beta: f64) -> Result<Self> {
        if source >= graph.n() {
            return Err(Error::VertexOutOfRange { index: source, n: graph.n() });
        }
        let mut labels = vec![beta; graph.n()];
        labels[source] = 0.0;
        Self::new(graph, labels, beta)
    }

    pub fn graph(&self) -> &WeightedGraph {
        &self.graph
    }

    pub fn labels(&self) -> &[f64] {
        self.graph.attrs()
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }

    /// Same graph with new labels.
    pub fn with_labels(&self, labels: Vec<f64>) -> Result<Self> {
        Self::build(self.graph.clone(), labels, self.beta)
    }

    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        Ok(Self { graph: self.graph.permuted(perm)?, beta: self.beta })
    }
}

fn is_acyclic(g: &WeightedGraph) -> bool {
    let out = g.out_neighbors();
    let mut indeg = vec![0usize; g.n()];
    for e in g.edges() {
        indeg[e.v] += 1;
    }
    let mut stack: Vec<usize> = (0..g.n()).filter(|&v| indeg[v] == 0).collect();
    let mut seen = 0;
    while let Some(u) = stack.pop() {
        seen += 1;
        for &(v, _) in &out[u] {
            indeg[v] -= 1;
            if indeg[v] == 0 {
                stack.push(v);
            }
        }
    }
    seen == g.n()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle() -> WeightedGraph {
        WeightedGraph::from_triples(3, false, &[(0, 1, 1.0), (1, 2, 2.0), (0, 2, 3.0)]).unwrap()
    }

    #[test]
    fn rejects_bad_edges() {
        assert!(matches!(
            WeightedGraph::from_triples(2, false, &[(0, 2, 1.0)]),
            Err(Error::VertexOutOfRange { .. })
        ));
        assert!(matches!(
            WeightedGraph::from_triples(2, false, &[(0, 1, 1.0), (1, 0, 2.0)]),
            Err(Error::DuplicateEdge { .. })
        ));
        assert!(WeightedGraph::from_triples(2, true, &[(0, 1, 1.0), (1, 0, 2.0)]).is_ok());
        assert!(matches!(WeightedGraph::from_triples(2, false, &[(1, 1, 1.0)]), Err(Error::SelfLoop(1))));
        assert!(WeightedGraph::from_triples(2, false, &[(0, 1, f64::NAN)]).is_err());
    }

    #[test]
    fn union_of_triangles() {
        let u = disjoint_union(&triangle(), &triangle()).unwrap();
        assert_eq!(u.n(), 6);
        assert_eq!(u.edges().len(), 6);
        assert!(u.edges()[3..].iter().all(|e| e.u >= 3 && e.v >= 3));
    }

    #[test]
    fn union_with_edgeless_graph_keeps_edges() {
        let empty = WeightedGraph::new(4, false, vec![]).unwrap();
        let u = disjoint_union(&triangle(), &empty).unwrap();
        assert_eq!(u.n(), 7);
        assert_eq!(u.edges(), triangle().edges());
    }

    #[test]
    fn adjacency_lists_self_loop_first() {
        let adj = Adjacency::with_self_loops(&triangle());
        assert_eq!(adj.num_messages(), 9);
        let first: Vec<_> = adj.incoming(1).collect();
        assert_eq!(first[0], (1, 0.0));
        assert_eq!(adj.degree(1), 3);
        let directed = WeightedGraph::from_triples(2, true, &[(0, 1, 4.0)]).unwrap();
        let adj = Adjacency::without_self_loops(&directed);
        assert_eq!(adj.incoming(0).count(), 0);
        assert_eq!(adj.incoming(1).collect::<Vec<_>>(), vec![(0, 4.0)]);
    }

    #[test]
    fn bf_instance_validation() {
        let g = triangle();
        assert!(matches!(
            BfInstance::new(g.clone(), vec![0.0, -1.0, 2.0], 10.0),
            Err(Error::InvalidLabel { vertex: 1, .. })
        ));
        let neg = WeightedGraph::from_triples(2, false, &[(0, 1, -1.0)]).unwrap();
        assert!(BfInstance::new(neg, vec![0.0, 1.0], 10.0).is_err());
        let inst = BfInstance::from_source(g, 2, 10.0).unwrap();
        assert_eq!(inst.labels(), &[10.0, 10.0, 0.0]);
    }

    #[test]
    fn dag_instances_reject_cycles() {
        let cyc = WeightedGraph::from_triples(2, true, &[(0, 1, -1.0), (1, 0, -1.0)]).unwrap();
        assert!(BfInstance::new_dag(cyc, vec![0.0, 1.0], 10.0).is_err());
        let dag = WeightedGraph::from_triples(2, true, &[(0, 1, -1.0)]).unwrap();
        assert!(BfInstance::new_dag(dag, vec![0.0, 1.0], 10.0).is_ok());
    }

    #[test]
    fn permutation_moves_attributes() {
        let g = WeightedGraph::with_attrs(2, false, vec![Edge { u: 0, v: 1, w: 1.0 }], 1, vec![5.0, 7.0]).unwrap();
        let p = g.permuted(&[1, 0]).unwrap();
        assert_eq!(p.attrs(), &[7.0, 5.0]);
        assert!(g.permuted(&[0, 0]).is_err());
    }
}
