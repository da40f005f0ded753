//! Losses, regularizers, the training loop and evaluation metrics.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::autodiff::{adam_step, matrix_norm_value, AdamConfig, AdamState, ExprGraph, MatrixNorm, NodeId, Tensor};
use crate::error::{Error, Result};
use crate::generators::Sample;
use crate::graph::BfInstance;
use crate::mpnn::{BfParamSet, ModelConfig, ParamNodes};
use crate::oracles::bf_k_step;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RegKind {
    /// The layer-weighted l1 penalty whose value at `psi` is `mK(K+3)`.
    WeightedL1,
    L1,
    L2,
    /// `ReLU(B_theta - B_target)` with `B_theta` a product of layer norms.
    Cert { target: f64, norm: MatrixNorm },
    None,
}

impl RegKind {
    pub fn name(&self) -> &'static str {
        match self {
            RegKind::WeightedL1 => "weighted-l1",
            RegKind::L1 => "l1",
            RegKind::L2 => "l2",
            RegKind::Cert { .. } => "cert",
            RegKind::None => "none",
        }
    }
}

/// Which vertices of each training graph carry a target.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossVertices {
    TargetOnly,
    AllVertices,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub reg: RegKind,
    pub eta: f64,
    pub vertices: LossVertices,
}

impl LossConfig {
    pub fn experiment() -> Self {
        Self { reg: RegKind::WeightedL1, eta: 0.1, vertices: LossVertices::AllVertices }
    }
}

/// Multiplicity of `W^j` in the weighted regularizer:
/// `1 + #{k in [K] : j_k < j}`.
pub fn layer_weight(theta: &BfParamSet, j: usize) -> f64 {
    1.0 + (1..=theta.k()).filter(|&r| theta.edge_layer(r) < j).count() as f64
}

/// `sum_{k=0}^{K} sum_{j > j_k} |W^j|_1 + sum_k |C^k|_1 + sum_j |b^j|_1`.
pub fn loss_reg_weighted(g: &mut ExprGraph, theta: &BfParamSet, p: &ParamNodes) -> Result<NodeId> {
    let mut terms = Vec::new();
    for (j, &w) in p.w.iter().enumerate() {
        let l1 = g.l1_norm(w);
        terms.push(g.scale(l1, layer_weight(theta, j + 1)));
    }
    for &id in p.c.iter().chain(&p.b) {
        terms.push(g.l1_norm(id));
    }
    g.add_all(&terms)
}

pub fn weighted_reg_value(theta: &BfParamSet) -> f64 {
    let w: f64 = theta.w.iter().enumerate().map(|(j, t)| layer_weight(theta, j + 1) * t.l1()).sum();
    w + theta.c.iter().chain(&theta.b).map(Tensor::l1).sum::<f64>()
}

pub fn loss_l1(g: &mut ExprGraph, p: &ParamNodes) -> Result<NodeId> {
    let terms: Vec<NodeId> = p.all().into_iter().map(|id| g.l1_norm(id)).collect();
    g.add_all(&terms)
}

pub fn l1_value(theta: &BfParamSet) -> f64 {
    theta.tensors().iter().map(Tensor::l1).sum()
}

pub fn loss_l2(g: &mut ExprGraph, p: &ParamNodes) -> Result<NodeId> {
    let terms: Vec<NodeId> = p.all().into_iter().map(|id| g.l2_norm_sq(id)).collect();
    g.add_all(&terms)
}

pub fn l2_value(theta: &BfParamSet) -> f64 {
    theta.tensors().iter().flat_map(|t| t.data().to_vec()).map(|x| x * x).sum()
}

/// `ReLU(prod_j |W^j| - b_target)` over the feature matrices. Spectral norms
/// are differentiated with their singular vectors held fixed.
pub fn cert_regularizer(g: &mut ExprGraph, p: &ParamNodes, b_target: f64, norm: MatrixNorm) -> Result<NodeId> {
    let mut prod: Option<NodeId> = None;
    for &w in &p.w {
        let n = g.matrix_norm(w, norm)?;
        prod = Some(match prod {
            Some(acc) => g.mul(acc, n)?,
            None => n,
        });
    }
    let prod = prod.ok_or_else(|| Error::InvalidParameter("no layers".into()))?;
    let shifted = g.add_const(prod, -b_target);
    Ok(g.relu(shifted))
}

pub fn cert_value(theta: &BfParamSet, b_target: f64, norm: MatrixNorm) -> f64 {
    (theta.w.iter().map(|w| matrix_norm_value(w, norm)).product::<f64>() - b_target).max(0.0)
}

pub fn reg_value(theta: &BfParamSet, reg: RegKind) -> f64 {
    match reg {
        RegKind::WeightedL1 => weighted_reg_value(theta),
        RegKind::L1 => l1_value(theta),
        RegKind::L2 => l2_value(theta),
        RegKind::Cert { target, norm } => cert_value(theta, target, norm),
        RegKind::None => 0.0,
    }
}

fn reg_node(g: &mut ExprGraph, theta: &BfParamSet, p: &ParamNodes, reg: RegKind) -> Result<Option<NodeId>> {
    Ok(match reg {
        RegKind::WeightedL1 => Some(loss_reg_weighted(g, theta, p)?),
        RegKind::L1 => Some(loss_l1(g, p)?),
        RegKind::L2 => Some(loss_l2(g, p)?),
        RegKind::Cert { target, norm } => Some(cert_regularizer(g, p, target, norm)?),
        RegKind::None => None,
    })
}

/// Mean absolute error over every `(graph, vertex)` target of `samples`.
pub fn loss_emp(g: &mut ExprGraph, theta: &BfParamSet, p: &ParamNodes, samples: &[Sample]) -> Result<NodeId> {
    let mut terms = Vec::new();
    for s in samples {
        let out = theta.forward_tape(g, p, &s.instance)?;
        for &(v, x) in &s.targets {
            let shifted = g.add_const(out[v], -x);
            terms.push(g.abs(shifted));
        }
    }
    if terms.is_empty() {
        return Err(Error::EmptySamples);
    }
    let total = g.add_all(&terms)?;
    Ok(g.scale(total, 1.0 / terms.len() as f64))
}

pub fn loss_emp_value(theta: &BfParamSet, samples: &[Sample]) -> Result<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for s in samples {
        let out = theta.forward(&s.instance)?;
        for &(v, x) in &s.targets {
            sum += (out[v] - x).abs();
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::EmptySamples);
    }
    Ok(sum / count as f64)
}

/// Builds `L_emp + eta * L_reg` on a fresh tape.
pub fn build_loss(theta: &BfParamSet, samples: &[Sample], loss: &LossConfig) -> Result<(ExprGraph, ParamNodes, NodeId)> {
    let mut g = ExprGraph::new();
    let p = theta.attach(&mut g);
    let emp = loss_emp(&mut g, theta, &p, samples)?;
    let root = match reg_node(&mut g, theta, &p, loss.reg)? {
        Some(r) => {
            let scaled = g.scale(r, loss.eta);
            g.add(emp, scaled)?
        }
        None => emp,
    };
    Ok((g, p, root))
}

/// Loss value and gradient in the [`BfParamSet::tensors`] layout.
pub fn loss_and_grad(theta: &BfParamSet, samples: &[Sample], loss: &LossConfig) -> Result<(f64, Vec<Tensor>)> {
    let (g, p, root) = build_loss(theta, samples, loss)?;
    let grads = g.backward(root)?;
    Ok((g.scalar_value(root), p.all().into_iter().map(|id| grads.get(&g, id)).collect()))
}

pub fn loss_value(theta: &BfParamSet, samples: &[Sample], loss: &LossConfig) -> Result<f64> {
    Ok(loss_emp_value(theta, samples)? + loss.eta * reg_value(theta, loss.reg))
}

/// Mean over all supervised vertices of `|h_v - x_v| / (x_v + 1)`.
pub fn test_score(theta: &BfParamSet, dataset: &[Sample]) -> Result<f64> {
    let parts: Vec<(f64, usize)> = dataset
        .par_iter()
        .map(|s| {
            let out = theta.forward(&s.instance)?;
            Ok((s.targets.iter().map(|&(v, x)| (out[v] - x).abs() / (x + 1.0)).sum(), s.targets.len()))
        })
        .collect::<Result<_>>()?;
    let (sum, count) = parts.iter().fold((0.0, 0), |(a, b), (s, c)| (a + s, b + c));
    if count == 0 {
        return Err(Error::EmptySamples);
    }
    Ok(sum / count as f64)
}

/// Whether `|h_v - x_v| <= eps (x_v + 1)` holds at every vertex, with
/// `x = bf_k_step(g, K)`.
pub fn bf_bound_check(theta: &BfParamSet, g: &BfInstance, eps: f64) -> Result<bool> {
    if !(eps > 0.0 && eps <= 0.5) {
        return Err(Error::InvalidParameter(format!("eps must lie in (0, 1/2], got {eps}")));
    }
    let out = theta.forward(g)?;
    let target = bf_k_step(g, theta.k());
    Ok(out.iter().zip(&target).all(|(h, x)| (h - x).abs() <= eps * (x + 1.0)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoremParams {
    /// `L = mK(K+3)`, the weighted regularizer at `psi`.
    pub l: f64,
    pub eta_min: f64,
    /// `4mKN eta_min`.
    pub x_min: f64,
}

pub fn theorem_params(m: usize, k: usize, n: usize) -> Result<TheoremParams> {
    if m == 0 || k == 0 || n == 0 {
        return Err(Error::InvalidParameter("m, K and N must be positive".into()));
    }
    let l = (m * k * (k + 3)) as f64;
    let eta_min = 2.0 * k as f64 * l.exp();
    if !eta_min.is_finite() {
        return Err(Error::Overflow(format!("exp({l}) overflows; use smaller m and K")));
    }
    Ok(TheoremParams { l, eta_min, x_min: 4.0 * (m * k * n) as f64 * eta_min })
}

/// Exponents `l_k = J - j_k + [k != 0]`; they sum to `mK(K+3)`.
pub fn walk_exponents(theta: &BfParamSet) -> Vec<usize> {
    let j = theta.num_layers();
    (0..=theta.k()).map(|k| j - theta.edge_layer(k) + usize::from(k != 0)).collect()
}

/// Cover radius `r = eps / (6 (1 + B))` and the strict upper bound on the
/// optimisation slack `eps'`.
pub fn cover_budget(eps: f64, b_fstar: f64, eta: f64, n_r: usize) -> (f64, f64) {
    let r = eps / (6.0 * (1.0 + b_fstar));
    (r, (eps / (3.0 * n_r as f64)).min(eps * eta / (6.0 * (1.0 + b_fstar))))
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub steps: usize,
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub seed: u64,
    pub model: ModelConfig,
    pub loss: LossConfig,
    pub train: Vec<Sample>,
    pub eval: Vec<(String, Vec<Sample>)>,
    pub log_every: usize,
    /// Evaluate on the eval sets at every log row, or only at the end.
    pub eval_every_log: bool,
    /// Reshuffle the training order every epoch instead of cycling.
    pub shuffle: bool,
    /// Starting point; random initialisation when absent.
    pub init: Option<BfParamSet>,
    /// Stop at the first step whose full training loss is at most this.
    pub stop_below: Option<f64>,
}

impl TrainConfig {
    pub fn new(model: ModelConfig, loss: LossConfig, train: Vec<Sample>) -> Self {
        Self {
            steps: 160_000,
            adam: AdamConfig::default(),
            batch_size: 1,
            seed: 0,
            model,
            loss,
            train,
            eval: Vec::new(),
            log_every: 100,
            eval_every_log: true,
            shuffle: false,
            init: None,
            stop_below: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub step: usize,
    pub loss_emp: f64,
    pub loss_reg: f64,
    pub loss_total: f64,
    pub scores: Vec<Option<f64>>,
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub theta: BfParamSet,
    pub history: Vec<MetricRow>,
    pub steps_run: usize,
    pub reached_target: bool,
}

fn metric_row(theta: &BfParamSet, cfg: &TrainConfig, step: usize, with_eval: bool) -> Result<MetricRow> {
    let loss_emp = loss_emp_value(theta, &cfg.train)?;
    let loss_reg = reg_value(theta, cfg.loss.reg);
    let scores = cfg
        .eval
        .iter()
        .map(|(_, ds)| if with_eval { test_score(theta, ds).map(Some) } else { Ok(None) })
        .collect::<Result<_>>()?;
    Ok(MetricRow { step, loss_emp, loss_reg, loss_total: loss_emp + cfg.loss.eta * loss_reg, scores })
}

/// Adam on `L_emp + eta L_reg`, one batch per step, cycling through the
/// training set in construction order.
pub fn train(cfg: &TrainConfig) -> Result<TrainResult> {
    if cfg.steps == 0 || cfg.batch_size == 0 || cfg.log_every == 0 {
        return Err(Error::Config("steps, batch size and log cadence must be positive".into()));
    }
    if cfg.train.is_empty() {
        return Err(Error::EmptySamples);
    }
    if !(cfg.loss.eta >= 0.0) {
        return Err(Error::Config("eta must be non-negative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut theta = match &cfg.init {
        Some(t) => t.clone(),
        None => BfParamSet::random(&cfg.model, &mut rng)?,
    };
    let mut params = theta.tensors();
    let mut state = AdamState::new(&params);
    let mut order: Vec<usize> = (0..cfg.train.len()).collect();
    let mut cursor = 0;
    let full_batch = cfg.batch_size >= cfg.train.len();
    let mut history = vec![metric_row(&theta, cfg, 0, cfg.eval_every_log)?];
    let mut reached = false;
    let mut steps_run = 0;
    for step in 1..=cfg.steps {
        let batch: Vec<Sample> = if full_batch {
            cfg.train.clone()
        } else {
            (0..cfg.batch_size)
                .map(|_| {
                    if cursor == order.len() {
                        cursor = 0;
                        if cfg.shuffle {
                            order.shuffle(&mut rng);
                        }
                    }
                    cursor += 1;
                    cfg.train[order[cursor - 1]].clone()
                })
                .collect()
        };
        let (loss, grads) = loss_and_grad(&theta, &batch, &cfg.loss)?;
        if !loss.is_finite() || grads.iter().any(|g| g.data().iter().any(|x| !x.is_finite())) {
            return Err(Error::Diverged { step, detail: format!("loss = {loss}") });
        }
        if full_batch && cfg.stop_below.is_some_and(|t| loss <= t) {
            reached = true;
            break;
        }
        adam_step(&mut params, &grads, &mut state, &cfg.adam);
        theta = theta.with_tensors(params.clone())?;
        steps_run = step;
        let log_now = step % cfg.log_every == 0 || step == cfg.steps;
        if log_now {
            let row = metric_row(&theta, cfg, step, cfg.eval_every_log)?;
            if !full_batch && cfg.stop_below.is_some_and(|t| row.loss_total <= t) {
                reached = true;
                history.push(row);
                break;
            }
            history.push(row);
        }
    }
    if !cfg.eval_every_log || reached {
        let last = history.last_mut().unwrap();
        let final_row = metric_row(&theta, cfg, steps_run, true)?;
        if last.step == steps_run {
            *last = final_row;
        } else {
            history.push(final_row);
        }
    }
    Ok(TrainResult { theta, history, steps_run, reached_target: reached })
}

/// Gaussian smoothing with a kernel truncated at `4 sigma` and renormalised
/// at the boundaries.
pub fn gaussian_smooth(values: &[f64], sigma: f64) -> Vec<f64> {
    if !(sigma > 0.0) {
        return values.to_vec();
    }
    let radius = (4.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius).map(|i| (-(i as f64).powi(2) / (2.0 * sigma * sigma)).exp()).collect();
    (0..values.len() as isize)
        .map(|i| {
            let (mut num, mut den) = (0.0, 0.0);
            for (o, kv) in (-radius..=radius).zip(&kernel) {
                let j = i + o;
                if j >= 0 && (j as usize) < values.len() {
                    num += kv * values[j as usize];
                    den += kv;
                }
            }
            num / den
        })
        .collect()
}

/// Metrics CSV; smoothing only touches the exported numbers.
pub fn metrics_csv(history: &[MetricRow], eval_names: &[String], smooth_sigma: Option<f64>) -> String {
    let mut out = String::from("step,loss_emp,loss_reg,loss_total");
    for name in eval_names {
        out.push_str(&format!(",score_{name}"));
    }
    out.push('\n');
    let col = |f: &dyn Fn(&MetricRow) -> f64| {
        let raw: Vec<f64> = history.iter().map(f).collect();
        match smooth_sigma {
            Some(s) => gaussian_smooth(&raw, s),
            None => raw,
        }
    };
    let emp = col(&|r| r.loss_emp);
    let reg = col(&|r| r.loss_reg);
    let total = col(&|r| r.loss_total);
    for (i, row) in history.iter().enumerate() {
        out.push_str(&format!("{},{},{},{}", row.step, emp[i], reg[i], total[i]));
        for s in &row.scores {
            match s {
                Some(v) => out.push_str(&format!(",{v}")),
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    out
}
