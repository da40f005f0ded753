//! Color refinement with edge weights: 1-WL, individualized 1-iWL, (1,1)-WL
//! and canonical codes of unrolling trees.

use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};
use crate::graph::WeightedGraph;

/// Vertex colors at stability plus the colors of every earlier round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Coloring {
    pub colors: Vec<usize>,
    pub history: Vec<Vec<usize>>,
    pub iterations: usize,
}

impl Coloring {
    pub fn num_classes(&self) -> usize {
        count_classes(&self.colors)
    }

    /// Colors after `t` rounds; rounds past stability repeat the final partition.
    pub fn at_round(&self, t: usize) -> &[usize] {
        &self.history[t.min(self.history.len() - 1)]
    }
}

pub fn histogram(colors: &[usize]) -> BTreeMap<usize, usize> {
    let mut h = BTreeMap::new();
    for &c in colors {
        *h.entry(c).or_insert(0) += 1;
    }
    h
}

fn count_classes(colors: &[usize]) -> usize {
    histogram(colors).len()
}

#[derive(Hash, PartialEq, Eq)]
enum Key {
    Init(u64),
    Refine(u32, Vec<(u32, u64)>),
}

/// Interns `(old color, multiset of (neighbor color, weight))` into ids.
/// Sharing one interner makes colors comparable across separate runs that
/// perform the same number of rounds.
#[derive(Default)]
struct Interner {
    ids: HashMap<Key, u32>,
}

impl Interner {
    fn id(&mut self, key: Key) -> u32 {
        let next = self.ids.len() as u32;
        *self.ids.entry(key).or_insert(next)
    }

    fn init(&mut self, labels: &[u64]) -> Vec<u32> {
        labels.iter().map(|&l| self.id(Key::Init(l))).collect()
    }

    fn round(&mut self, adj: &[Vec<(usize, f64)>], colors: &[u32]) -> Vec<u32> {
        adj.iter()
            .zip(colors)
            .map(|(nb, &c)| {
                let mut ms: Vec<(u32, u64)> = nb.iter().map(|&(u, w)| (colors[u], (w + 0.0).to_bits())).collect();
                ms.sort_unstable();
                self.id(Key::Refine(c, ms))
            })
            .collect()
    }
}

/// Runs rounds until the partition stops splitting, or exactly `rounds` rounds.
fn run(interner: &mut Interner, adj: &[Vec<(usize, f64)>], init: &[u64], rounds: Option<usize>) -> Vec<Vec<u32>> {
    let mut history = vec![interner.init(init)];
    loop {
        let cur = history.last().unwrap();
        if rounds.is_some_and(|r| history.len() > r) {
            break;
        }
        let next = interner.round(adj, cur);
        let split = count_classes_u32(&next) > count_classes_u32(cur);
        history.push(next);
        if rounds.is_none() && !split {
            break;
        }
    }
    history
}

fn count_classes_u32(c: &[u32]) -> usize {
    let mut v = c.to_vec();
    v.sort_unstable();
    v.dedup();
    v.len()
}

fn to_coloring(raw: Vec<Vec<u32>>) -> Coloring {
    // Dense ids per round, ordered by interned id so that vertices of one run
    // keep comparable colors.
    let history: Vec<Vec<usize>> = raw
        .iter()
        .map(|round| {
            let mut ids = round.clone();
            ids.sort_unstable();
            ids.dedup();
            round.iter().map(|c| ids.binary_search(c).unwrap()).collect()
        })
        .collect();
    let iterations = history.len() - 1;
    Coloring { colors: history.last().unwrap().clone(), history, iterations }
}

/// 1-WL color refinement from integer initial labels.
pub fn wl1_refine(g: &WeightedGraph, init: &[u64]) -> Result<Coloring> {
    if init.len() != g.n() {
        return Err(Error::AttributeMismatch { expected: g.n(), got: init.len() });
    }
    Ok(to_coloring(run(&mut Interner::default(), &g.neighbors(), init, None)))
}

/// Neighbor lists of the disjoint union of `g` and `h`.
fn union_adjacency(g: &WeightedGraph, h: &WeightedGraph) -> Vec<Vec<(usize, f64)>> {
    let shift = g.n();
    let mut adj = g.neighbors();
    adj.extend(h.neighbors().into_iter().map(|nb| nb.into_iter().map(|(u, w)| (u + shift, w)).collect()));
    adj
}

fn sorted(mut v: Vec<u32>) -> Vec<u32> {
    v.sort_unstable();
    v
}

fn union_final(g: &WeightedGraph, h: &WeightedGraph, init: &[u64]) -> Vec<u32> {
    let adj = union_adjacency(g, h);
    run(&mut Interner::default(), &adj, init, None).pop().unwrap()
}

/// Whether 1-WL with uniform initial colors tells `g` and `h` apart.
pub fn wl1_distinguish_graphs(g: &WeightedGraph, h: &WeightedGraph) -> bool {
    if g.n() != h.n() {
        return true;
    }
    let colors = union_final(g, h, &vec![0; g.n() + h.n()]);
    let (a, b) = colors.split_at(g.n());
    sorted(a.to_vec()) != sorted(b.to_vec())
}

pub fn wl1_distinguish_vertices(g: &WeightedGraph, u: usize, v: usize) -> Result<bool> {
    check_vertex(g, u)?;
    check_vertex(g, v)?;
    let c = wl1_refine(g, &vec![0; g.n()])?;
    Ok(c.colors[u] != c.colors[v])
}

fn check_vertex(g: &WeightedGraph, v: usize) -> Result<()> {
    if v >= g.n() {
        return Err(Error::VertexOutOfRange { index: v, n: g.n() });
    }
    Ok(())
}

const ROOT_LABEL: u64 = 1;

fn rooted_init(n: usize, roots: &[usize]) -> Vec<u64> {
    let mut init = vec![0; n];
    for &r in roots {
        init[r] = ROOT_LABEL;
    }
    init
}

/// 1-WL after giving the root `r` a reserved initial color.
pub fn iwl_refine(g: &WeightedGraph, r: usize) -> Result<Coloring> {
    check_vertex(g, r)?;
    wl1_refine(g, &rooted_init(g.n(), &[r]))
}

/// Compares the stable colors of `v` in `(g, r)` and `w` in `(h, s)`.
pub fn iwl_distinguish_tuple(
    g: &WeightedGraph,
    (r, v): (usize, usize),
    h: &WeightedGraph,
    (s, w): (usize, usize),
) -> Result<bool> {
    for (graph, x) in [(g, r), (g, v), (h, s), (h, w)] {
        check_vertex(graph, x)?;
    }
    let colors = union_final(g, h, &rooted_init(g.n() + h.n(), &[r, s + g.n()]));
    Ok(colors[v] != colors[w + g.n()])
}

/// Compares the stable color multisets of the rooted graphs `(g, r)` and `(h, s)`.
pub fn iwl_distinguish_rooted(g: &WeightedGraph, r: usize, h: &WeightedGraph, s: usize) -> Result<bool> {
    check_vertex(g, r)?;
    check_vertex(h, s)?;
    if g.n() != h.n() {
        return Ok(true);
    }
    let colors = union_final(g, h, &rooted_init(g.n() + h.n(), &[r, s + g.n()]));
    let (a, b) = colors.split_at(g.n());
    Ok(sorted(a.to_vec()) != sorted(b.to_vec()))
}

/// Stable color multiset of `g` individualized at every vertex, with colors
/// drawn from a shared interner after exactly `rounds` rounds.
fn rooted_signatures(interner: &mut Interner, g: &WeightedGraph, rounds: usize) -> Vec<Vec<u32>> {
    let adj = g.neighbors();
    let mut sigs: Vec<Vec<u32>> = (0..g.n())
        .map(|v| sorted(run(interner, &adj, &rooted_init(g.n(), &[v]), Some(rounds)).pop().unwrap()))
        .collect();
    sigs.sort_unstable();
    sigs
}

/// (1,1)-WL: individualize every vertex in turn and compare the multisets of
/// rooted signatures.
pub fn wl11_distinguish(g: &WeightedGraph, h: &WeightedGraph) -> bool {
    if g.n() != h.n() {
        return true;
    }
    let mut interner = Interner::default();
    let rounds = g.n();
    rooted_signatures(&mut interner, g, rounds) != rooted_signatures(&mut interner, h, rounds)
}

/// Canonical encoding of a rooted, labelled, edge-weighted tree.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TreeCode(pub String);

/// Canonical code of the depth-`depth` unrolling tree of `g` at `u`. Vertex
/// labels are uniform except for the optional individualized `root`.
pub fn unrolling_tree(g: &WeightedGraph, u: usize, depth: usize, root: Option<usize>) -> Result<TreeCode> {
    check_vertex(g, u)?;
    if let Some(r) = root {
        check_vertex(g, r)?;
    }
    let adj = g.neighbors();
    let label = |v: usize| if Some(v) == root { "*" } else { "o" };
    let mut level: Vec<String> = (0..g.n()).map(|v| format!("({})", label(v))).collect();
    for _ in 0..depth {
        level = (0..g.n())
            .map(|v| {
                let mut children: Vec<String> = adj[v].iter().map(|&(x, w)| format!("{}:{}", w + 0.0, level[x])).collect();
                children.sort_unstable();
                format!("({}{})", label(v), children.concat())
            })
            .collect();
    }
    Ok(TreeCode(level.swap_remove(u)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{counterexample_mst14, counterexample_mst6, counterexample_sssp6};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn k3() -> WeightedGraph {
        WeightedGraph::from_triples(3, false, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]).unwrap()
    }

    fn p3() -> WeightedGraph {
        WeightedGraph::from_triples(3, false, &[(0, 1, 1.0), (1, 2, 1.0)]).unwrap()
    }

    fn random_graph(rng: &mut impl Rng, n: usize, weights: &[f64]) -> WeightedGraph {
        let mut t = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                if rng.gen_bool(0.4) {
                    t.push((u, v, weights[rng.gen_range(0..weights.len())]));
                }
            }
        }
        WeightedGraph::from_triples(n, false, &t).unwrap()
    }

    #[test]
    fn simple_class_counts() {
        assert_eq!(wl1_refine(&k3(), &[0; 3]).unwrap().num_classes(), 1);
        let c = wl1_refine(&p3(), &[0; 3]).unwrap();
        assert_eq!(c.num_classes(), 2);
        assert_eq!(c.colors[0], c.colors[2]);
        assert!(wl1_distinguish_graphs(&k3(), &p3()));
        assert!(!wl1_distinguish_graphs(&k3(), &k3()));
    }

    #[test]
    fn root_gets_own_class() {
        let g = WeightedGraph::from_triples(2, false, &[(0, 1, 1.0)]).unwrap();
        let c = iwl_refine(&g, 0).unwrap();
        assert_ne!(c.colors[0], c.colors[1]);
        assert!(iwl_refine(&g, 5).is_err());
    }

    #[test]
    fn sssp_pair() {
        let (g, s, t1, t2) = counterexample_sssp6();
        let g = g.graph();
        assert!(!wl1_distinguish_vertices(g, t1, t2).unwrap());
        assert!(iwl_distinguish_tuple(g, (s, t1), g, (s, t2)).unwrap());
        assert_eq!(unrolling_tree(g, t1, 3, None).unwrap(), unrolling_tree(g, t2, 3, None).unwrap());
        assert_ne!(unrolling_tree(g, t1, 3, Some(s)).unwrap(), unrolling_tree(g, t2, 3, Some(s)).unwrap());
    }

    #[test]
    fn mst_pairs() {
        let (g, h) = counterexample_mst6();
        assert!(!wl1_distinguish_graphs(&g, &h));
        assert!(wl11_distinguish(&g, &h));
        let (g, h, _, _) = counterexample_mst14();
        assert!(!wl1_distinguish_graphs(&g, &h));
        assert!(wl11_distinguish(&g, &h));
    }

    #[test]
    fn mst14_hub_roots_are_not_separated() {
        let (g, h, _, _) = counterexample_mst14();
        assert!(!iwl_distinguish_rooted(&g, 6, &h, 6).unwrap());
        assert!(!iwl_distinguish_rooted(&g, 7, &h, 7).unwrap());
    }

    #[test]
    fn refinement_is_monotone_and_fast() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for _ in 0..30 {
            let n = rng.gen_range(1..12);
            let g = random_graph(&mut rng, n, &[1.0, 2.0]);
            let c = wl1_refine(&g, &vec![0; n]).unwrap();
            assert!(c.iterations <= n);
            for w in c.history.windows(2) {
                // Equal colors at t+1 imply equal colors at t.
                for a in 0..n {
                    for b in 0..n {
                        if w[1][a] == w[1][b] {
                            assert_eq!(w[0][a], w[0][b]);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn unrolling_codes_match_wl_rounds() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let n = rng.gen_range(2..=10);
            let g = random_graph(&mut rng, n, &[1.0, 2.0, 3.0]);
            let c = wl1_refine(&g, &vec![0; n]).unwrap();
            for depth in 0..=3 {
                let codes: Vec<TreeCode> = (0..n).map(|v| unrolling_tree(&g, v, depth, None).unwrap()).collect();
                let colors = c.at_round(depth);
                for a in 0..n {
                    for b in 0..n {
                        assert_eq!(codes[a] == codes[b], colors[a] == colors[b]);
                    }
                }
            }
        }
    }

    #[test]
    fn stable_colors_match_deep_unrolling() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(15);
        for _ in 0..20 {
            let n = rng.gen_range(2..=6);
            let g = random_graph(&mut rng, n, &[1.0, 2.0]);
            let c = wl1_refine(&g, &vec![0; n]).unwrap();
            let codes: Vec<TreeCode> = (0..n).map(|v| unrolling_tree(&g, v, n, None).unwrap()).collect();
            for a in 0..n {
                for b in 0..n {
                    assert_eq!(codes[a] == codes[b], c.colors[a] == c.colors[b]);
                }
            }
        }
    }

    #[test]
    fn depth_zero_code_is_label() {
        assert_eq!(unrolling_tree(&k3(), 0, 0, None).unwrap().0, "(o)");
        assert_eq!(unrolling_tree(&k3(), 0, 0, Some(0)).unwrap().0, "(*)");
    }

    proptest! {
        #[test]
        fn verdicts_are_permutation_invariant(seed in 0u64..500) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n = rng.gen_range(2..9);
            let g = random_graph(&mut rng, n, &[1.0, 2.0]);
            let h = random_graph(&mut rng, n, &[1.0, 2.0]);
            let mut perm: Vec<usize> = (0..n).collect();
            rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
            let gp = g.permuted(&perm).unwrap();
            prop_assert!(!wl1_distinguish_graphs(&g, &gp));
            prop_assert!(!wl11_distinguish(&g, &gp));
            prop_assert_eq!(wl1_distinguish_graphs(&g, &h), wl1_distinguish_graphs(&gp, &h));
            prop_assert_eq!(wl11_distinguish(&g, &h), wl11_distinguish(&gp, &h));
            prop_assert!(!iwl_distinguish_rooted(&g, 0, &gp, perm[0]).unwrap());
        }
    }
}
