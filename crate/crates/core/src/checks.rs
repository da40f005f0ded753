//! The invariant battery behind the `check` command. Every check is cheap
//! enough to run in a few seconds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analysis::{enumerate_walks, modified_loss, transform_params, walk_bound_gap, DEFAULT_WALK_CAP};
use crate::autodiff::{central_difference, relative_error, Tensor};
use crate::error::{Error, Result};
use crate::generators::{counterexample_mst14, counterexample_mst6, counterexample_sssp6, make_bf_training_set, Sample};
use crate::graph::{BfInstance, WeightedGraph};
use crate::mpnn::{mean_mpnn_forward, psi_for, BfParamSet, GeneralMpnn, ModelConfig};
use crate::oracles::{bf_k_step, knapsack_dag_distance, knapsack_dp, msf_via_thresholds, mst_cost, sssp_cost, truncated_pagerank, KnapsackInstance};
use crate::training::{loss_and_grad, loss_value, weighted_reg_value, LossConfig, LossVertices, RegKind};
use crate::wl::{iwl_distinguish_rooted, iwl_distinguish_tuple, wl11_distinguish, wl1_distinguish_graphs, wl1_distinguish_vertices};

pub const SUITES: [&str; 6] = ["oracles", "wl", "mpnn", "training", "analysis", "autodiff"];

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub suite: &'static str,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

type Check = (&'static str, &'static str, fn() -> Result<(bool, String)>);

const CHECKS: &[Check] = &[
    ("oracles", "msf-thresholds-equal-kruskal", msf_thresholds),
    ("oracles", "knapsack-dp-dag-bruteforce", knapsack_three_ways),
    ("oracles", "bf-n-steps-equals-dijkstra", bf_dijkstra),
    ("wl", "sssp-counterexample", wl_sssp),
    ("wl", "mst-counterexamples", wl_mst),
    ("mpnn", "psi-equals-bellman-ford", psi_bf),
    ("mpnn", "mean-mpnn-equals-pagerank", pagerank),
    ("training", "global-minimum-value", global_minimum),
    ("analysis", "walk-lifted-upper-bound", walk_bound),
    ("analysis", "min-walk-sum-equals-bf", walk_min),
    ("analysis", "modified-loss-at-psi", modified_at_psi),
    ("autodiff", "finite-differences-q1-loss", finite_differences),
];

/// Runs every check of `suite`, or all of them for `full`.
pub fn run_suite(suite: &str) -> Result<Vec<CheckResult>> {
    if suite != "full" && !SUITES.contains(&suite) {
        return Err(Error::Config(format!("unknown suite `{suite}`; expected full or one of {}", SUITES.join(", "))));
    }
    Ok(CHECKS
        .iter()
        .filter(|(s, _, _)| suite == "full" || *s == suite)
        .map(|&(suite, name, f)| match f() {
            Ok((passed, detail)) => CheckResult { suite, name, passed, detail },
            Err(e) => CheckResult { suite, name, passed: false, detail: format!("error: {e}") },
        })
        .collect())
}

pub fn format_table(results: &[CheckResult]) -> String {
    let mut out = format!("{:<10} {:<32} {:<6} detail\n", "suite", "check", "status");
    for r in results {
        out.push_str(&format!("{:<10} {:<32} {:<6} {}\n", r.suite, r.name, if r.passed { "PASS" } else { "FAIL" }, r.detail));
    }
    out
}

/// A connected-or-not undirected graph with `P(edge) = p` and weights in `[lo, hi)`.
pub fn random_graph(rng: &mut impl Rng, n: usize, p: f64, lo: f64, hi: f64) -> WeightedGraph {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.gen_bool(p) {
                edges.push((u, v, if lo < hi { rng.gen_range(lo..hi) } else { lo }));
            }
        }
    }
    WeightedGraph::from_triples(n, false, &edges).expect("generated edges are valid")
}

/// Random labels in `[0, beta]` with some vertices left at `beta`.
pub fn random_instance(rng: &mut impl Rng, n: usize) -> BfInstance {
    let g = random_graph(rng, n, 0.3, 0.0, 20.0);
    let beta = 100.0;
    let labels = (0..n).map(|_| if rng.gen_bool(0.5) { beta } else { rng.gen_range(0.0..beta) }).collect();
    BfInstance::new(g, labels, beta).expect("labels within beta")
}

fn msf_thresholds() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for i in 0..50 {
        // Integer weights force ties.
        let g = if i % 2 == 0 { random_graph(&mut rng, 12, 0.3, 1.0, 50.0) } else { int_weights(&mut rng, 12) };
        worst = worst.max((msf_via_thresholds(&g) - mst_cost(&g)).abs());
    }
    Ok((worst <= 1e-9, format!("max |diff| = {worst:.3e} over 50 graphs")))
}

fn int_weights(rng: &mut impl Rng, n: usize) -> WeightedGraph {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.gen_bool(0.4) {
                edges.push((u, v, rng.gen_range(1..5) as f64));
            }
        }
    }
    WeightedGraph::from_triples(n, false, &edges).expect("valid edges")
}

fn knapsack_brute(items: &[(f64, f64)], cap: f64) -> f64 {
    (0u32..1 << items.len())
        .filter_map(|mask| {
            let (v, s) = items.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).fold((0.0, 0.0), |(a, b), (_, &(v, s))| (a + v, b + s));
            (s <= cap).then_some(v)
        })
        .fold(0.0, f64::max)
}

fn knapsack_three_ways() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..30 {
        let n = rng.gen_range(1..=6);
        let items: Vec<(f64, f64)> = (0..n).map(|_| (rng.gen_range(1..30) as f64, rng.gen_range(1..8) as f64)).collect();
        let cap = rng.gen_range(0..=15) as f64;
        let inst = KnapsackInstance::new(&items, cap)?;
        let (dp, dag, brute) = (knapsack_dp(&inst), -knapsack_dag_distance(&inst)?, knapsack_brute(&items, cap));
        if dp != brute || dag != brute {
            return Ok((false, format!("dp {dp}, dag {dag}, brute force {brute} on {items:?}, S = {cap}")));
        }
    }
    Ok((true, "30 instances agree".into()))
}

fn bf_dijkstra() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..30 {
        let g = random_graph(&mut rng, 10, 0.3, 0.0, 10.0);
        let inst = BfInstance::from_source(g.clone(), 0, f64::INFINITY)?;
        if bf_k_step(&inst, g.n()) != sssp_cost(&g, 0)? {
            return Ok((false, "mismatch".into()));
        }
    }
    Ok((true, "30 graphs agree".into()))
}

fn wl_sssp() -> Result<(bool, String)> {
    let (g, s, t1, t2) = counterexample_sssp6();
    let g = g.graph();
    let wl = wl1_distinguish_vertices(g, t1, t2)?;
    let iwl = iwl_distinguish_tuple(g, (s, t1), g, (s, t2))?;
    let d = sssp_cost(g, s)?;
    Ok((!wl && iwl && d[t1] != d[t2], format!("1-WL separates: {wl}, 1-iWL separates: {iwl}, d = ({}, {})", d[t1], d[t2])))
}

fn wl_mst() -> Result<(bool, String)> {
    let (g6, h6) = counterexample_mst6();
    let (g14, h14, r, s) = counterexample_mst14();
    let values = [mst_cost(&g6), mst_cost(&h6), mst_cost(&g14), mst_cost(&h14)];
    let wl = wl1_distinguish_graphs(&g6, &h6);
    let wl11 = wl11_distinguish(&g6, &h6) && wl11_distinguish(&g14, &h14);
    let hub = iwl_distinguish_rooted(&g14, 7, &h14, 7)?;
    let rooted = iwl_distinguish_rooted(&g14, r, &h14, s)?;
    let ok = !wl && wl11 && !hub && values == [9.0, 7.0, 39.0, 31.0];
    Ok((ok, format!("MST {values:?}; 1-WL {wl}; (1,1)-WL {wl11}; hub roots {hub}; roots ({},{}) {rooted}", r + 1, s + 1)))
}

fn psi_bf() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for k in 1..=3 {
        let psi = psi_for(&if k == 2 { ModelConfig::experiment() } else { ModelConfig::theorem(2, k, 8) })?;
        for _ in 0..20 {
            let n = rng.gen_range(1..=24);
            let g = random_instance(&mut rng, n);
            if psi.forward(&g)? != bf_k_step(&g, k) {
                return Ok((false, format!("mismatch at K = {k}")));
            }
        }
    }
    Ok((true, "exact on 60 instances".into()))
}

fn pagerank() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let mut g = random_graph(&mut rng, 15, 0.4, 0.5, 3.0);
        if g.has_isolated_vertex() {
            continue;
        }
        g.set_attrs(1, vec![1.0; g.n()])?;
        for xi in [0.5, 0.85, 0.99] {
            let out = mean_mpnn_forward(&GeneralMpnn::pagerank(xi, 10), &g)?;
            let exact = truncated_pagerank(&g, xi, 10)?;
            worst = out.iter().zip(&exact).map(|(a, b)| (a[0] - b).abs()).fold(worst, f64::max);
        }
    }
    Ok((worst <= 1e-12, format!("max |diff| = {worst:.3e}")))
}

fn global_minimum() -> Result<(bool, String)> {
    let mut worst = 0.0f64;
    for (m, k) in [(1, 1), (2, 2)] {
        let psi = psi_for(&ModelConfig::theorem(m, k, 4))?;
        let set = make_bf_training_set(50.0, k, 1000.0)?;
        for eta in [0.1, 1.0] {
            let loss = LossConfig { reg: RegKind::WeightedL1, eta, vertices: LossVertices::TargetOnly };
            let l = (m * k * (k + 3)) as f64;
            worst = worst.max((loss_value(&psi, &set, &loss)? - eta * l).abs());
            worst = worst.max((weighted_reg_value(&psi) - l).abs());
        }
    }
    Ok((worst <= 1e-12, format!("max |L(psi) - eta L| = {worst:.3e}")))
}

fn walk_bound() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let mut worst = f64::NEG_INFINITY;
    for i in 0..30 {
        let k = 1 + i % 3;
        let theta = BfParamSet::random(&ModelConfig::theorem(1, k, 3), &mut rng)?;
        let n = rng.gen_range(1..=6);
        worst = worst.max(walk_bound_gap(&theta, &random_instance(&mut rng, n), DEFAULT_WALK_CAP)?);
    }
    Ok((worst <= 1e-9, format!("max h - H_wl = {worst:.3e}")))
}

fn walk_min() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..20 {
        let g = random_instance(&mut rng, 6);
        for k in 0..=3 {
            let x = bf_k_step(&g, k);
            for (v, xv) in x.iter().enumerate() {
                let best = enumerate_walks(&g, v, k, DEFAULT_WALK_CAP)?.iter().map(|z| z.iter().sum::<f64>()).fold(f64::INFINITY, f64::min);
                if (best - xv).abs() > 1e-9 {
                    return Ok((false, format!("vertex {v}, K = {k}: {best} vs {xv}")));
                }
            }
        }
    }
    Ok((true, "20 graphs, K <= 3".into()))
}

fn modified_at_psi() -> Result<(bool, String)> {
    let psi = psi_for(&ModelConfig::theorem(2, 2, 3))?;
    let ml = modified_loss(&transform_params(&psi)?, 50.0, 3, 0.1);
    Ok(((ml.total - 2.0).abs() < 1e-12 && ml.emp == 0.0, format!("L~(psi) = {}", ml.total)))
}

/// Worst relative error between autodiff and central differences on the
/// experiment loss, skipping coordinates where one-sided differences disagree
/// (a kink within `h`).
pub fn q1_gradient_error(theta: &BfParamSet, set: &[Sample], coords: &[(usize, usize)], h: f64) -> Result<f64> {
    let loss = LossConfig::experiment();
    let (_, grads) = loss_and_grad(theta, set, &loss)?;
    let params = theta.tensors();
    let mut f = |p: &[Tensor]| theta.with_tensors(p.to_vec()).and_then(|t| loss_value(&t, set, &loss)).unwrap_or(f64::NAN);
    let base = f(&params);
    let mut worst = 0.0f64;
    for &(k, i) in coords {
        let num = central_difference(&mut f, &params, k, i, h);
        let mut p = params.clone();
        p[k].data_mut()[i] += h;
        let fwd = (f(&p) - base) / h;
        p[k].data_mut()[i] -= 2.0 * h;
        let bwd = (base - f(&p)) / h;
        if relative_error(fwd, bwd) > 1e-3 {
            continue;
        }
        worst = worst.max(relative_error(grads[k].data()[i], num));
    }
    Ok(worst)
}

fn finite_differences() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let set: Vec<Sample> = make_bf_training_set(50.0, 2, 1000.0)?.into_iter().map(|s| Sample::all_vertices(s.instance, 2)).collect();
    let mut worst = 0.0f64;
    for _ in 0..3 {
        let theta = BfParamSet::random(&ModelConfig::experiment(), &mut rng)?;
        let coords: Vec<(usize, usize)> =
            theta.tensors().iter().enumerate().flat_map(|(k, t)| (0..t.numel()).step_by(37).map(move |i| (k, i))).collect();
        worst = worst.max(q1_gradient_error(&theta, &set, &coords, 1e-6)?);
    }
    Ok((worst < 1e-4, format!("max relative error = {worst:.3e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suites_filter_and_format() {
        let wl = run_suite("wl").unwrap();
        assert_eq!(wl.len(), 2);
        assert!(wl.iter().all(|r| r.suite == "wl"));
        assert!(run_suite("nope").is_err());
        let table = format_table(&wl);
        assert!(table.lines().count() == 3 && table.contains("sssp-counterexample"));
    }

    #[test]
    fn full_battery_passes() {
        let results = run_suite("full").unwrap();
        assert_eq!(results.len(), CHECKS.len());
        for r in &results {
            assert!(r.passed, "{} / {}: {}", r.suite, r.name, r.detail);
        }
    }
}
