//! Quantities used to reason about trained Bellman-Ford networks: walks and
//! the walk-lifted FNN, transformed parameters, the modified loss and
//! Lipschitz certificates.

use rayon::prelude::*;

use crate::autodiff::{matrix_norm_value, MatrixNorm, Tensor};
use crate::error::{Error, Result};
use crate::generators::Sample;
use crate::graph::{Adjacency, BfInstance};
use crate::mpnn::BfParamSet;
use crate::training::{loss_emp_value, walk_exponents};

pub const DEFAULT_WALK_CAP: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct TransformedParams {
    pub gamma: Vec<f64>,
    pub b: f64,
    pub w_minus: f64,
    pub l: Vec<usize>,
    pub big_l: usize,
}

fn pos(t: &Tensor) -> Tensor {
    t.map(|x| x.max(0.0))
}

fn neg_mass(t: &Tensor) -> f64 {
    t.data().iter().map(|x| (-x).max(0.0)).sum()
}

/// Row vector times matrix.
fn row_times(row: &[f64], m: &Tensor) -> Result<Vec<f64>> {
    if row.len() != m.rows() {
        return Err(Error::Shape { op: "transform_params", detail: format!("row of length {} against {:?}", row.len(), m.shape()) });
    }
    Ok((0..m.cols()).map(|c| row.iter().enumerate().map(|(r, x)| x * m.data()[r * m.cols() + c]).sum()).collect())
}

/// `gamma_k = (W^J)^+ ... (W^{j_k+1})^+ (C^k)^+` with `C^0 = 1`, the bias mass
/// `B` and the negative weight mass `w^-`.
pub fn transform_params(theta: &BfParamSet) -> Result<TransformedParams> {
    let j_total = theta.num_layers();
    // suffix[j] = (W^J)^+ ... (W^{j+1})^+ as a row vector of length d_j.
    let mut suffix = vec![Vec::new(); j_total + 1];
    suffix[j_total] = vec![1.0];
    for j in (0..j_total).rev() {
        suffix[j] = row_times(&suffix[j + 1], &pos(theta.w(j + 1)))?;
    }
    let mut gamma = Vec::with_capacity(theta.k() + 1);
    for k in 0..=theta.k() {
        let row = &suffix[theta.edge_layer(k)];
        // d_0 = 1, so the k = 0 row is already the scalar gamma_0.
        gamma.push(if k == 0 { row[0] } else { row_times(row, &pos(theta.c(k)))?[0] });
    }
    let b = theta.b.iter().map(Tensor::l1).sum();
    let w_minus = theta.w.iter().chain(&theta.c).map(neg_mass).sum();
    let l = walk_exponents(theta);
    let big_l = l.iter().sum();
    Ok(TransformedParams { gamma, b, w_minus, l, big_l })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModifiedLoss {
    pub emp: f64,
    pub reg: f64,
    pub total: f64,
}

/// `L~_emp = (1/N) sum_k ReLU((1 - gamma_k) x - e^L B)` and
/// `L~_reg = B + sum_k l_k gamma_k^{1/l_k} + w^-`.
pub fn modified_loss(tp: &TransformedParams, x: f64, n: usize, eta: f64) -> ModifiedLoss {
    let shift = (tp.big_l as f64).exp() * tp.b;
    let emp = tp.gamma.iter().map(|g| ((1.0 - g) * x - shift).max(0.0)).sum::<f64>() / n as f64;
    let reg = tp.b + tp.gamma.iter().zip(&tp.l).map(|(g, &l)| l as f64 * g.powf(1.0 / l as f64)).sum::<f64>() + tp.w_minus;
    ModifiedLoss { emp, reg, total: emp + eta * reg }
}

/// Per-vertex walk weight vectors `z^p = (a(v_0), w(v_0, v_1), ..., w(v_{K-1}, v_K))`
/// for every walk of length `k` ending at `v`. Staying put is a step of
/// weight 0.
pub fn enumerate_walks(g: &BfInstance, v: usize, k: usize, cap: usize) -> Result<Vec<Vec<f64>>> {
    if v >= g.n() {
        return Err(Error::VertexOutOfRange { index: v, n: g.n() });
    }
    let adj = Adjacency::with_self_loops(g.graph());
    // counts[u] = number of walks of the current length ending at u.
    let mut counts = vec![1.0f64; g.n()];
    for _ in 0..k {
        counts = (0..g.n()).map(|u| adj.incoming(u).map(|(p, _)| counts[p]).sum()).collect();
    }
    if counts[v] > cap as f64 {
        return Err(Error::WalkLimit { cap });
    }
    let mut out = Vec::with_capacity(counts[v] as usize);
    let mut rev = Vec::with_capacity(k);
    collect_walks(g, &adj, v, k, &mut rev, &mut out);
    Ok(out)
}

fn collect_walks(g: &BfInstance, adj: &Adjacency, v: usize, left: usize, rev: &mut Vec<f64>, out: &mut Vec<Vec<f64>>) {
    if left == 0 {
        let mut z = vec![g.labels()[v]];
        z.extend(rev.iter().rev());
        out.push(z);
        return;
    }
    for (u, w) in adj.incoming(v) {
        rev.push(w);
        collect_walks(g, adj, u, left - 1, rev, out);
        rev.pop();
    }
}

pub fn enumerate_all_walks(g: &BfInstance, k: usize, cap: usize) -> Result<Vec<Vec<Vec<f64>>>> {
    (0..g.n()).into_par_iter().map(|v| enumerate_walks(g, v, k, cap)).collect()
}

pub fn walk_lifted_fnn(theta: &BfParamSet, z: &[f64]) -> Result<f64> {
    theta.walk_lifted(z)
}

/// Largest violation of `h_v <= H_wl(theta^+)(z^p)` over all vertices and
/// walks; non-positive means the bound holds.
pub fn walk_bound_gap(theta: &BfParamSet, g: &BfInstance, cap: usize) -> Result<f64> {
    let h = theta.forward(g)?;
    let plus = theta.positive_part_with_biases();
    let walks = enumerate_all_walks(g, theta.k(), cap)?;
    let mut gap = f64::NEG_INFINITY;
    for (v, zs) in walks.iter().enumerate() {
        for z in zs {
            gap = gap.max(h[v] - plus.walk_lifted(z)?);
        }
    }
    Ok(gap)
}

/// Product of the operator norms of the feature matrices `W^j`.
pub fn lipschitz_certificate(theta: &BfParamSet, norm: MatrixNorm) -> f64 {
    certificate_of(&theta.w, norm)
}

pub fn certificate_of(layers: &[Tensor], norm: MatrixNorm) -> f64 {
    layers.iter().map(|w| matrix_norm_value(w, norm)).product()
}

#[derive(Debug, Clone, PartialEq)]
pub struct NearOptimum {
    pub gamma_min: f64,
    pub gamma_floor: f64,
    pub loss_emp: f64,
    pub emp_ceiling: f64,
}

impl NearOptimum {
    pub fn holds(&self) -> bool {
        self.gamma_min >= self.gamma_floor && self.loss_emp <= self.emp_ceiling
    }
}

/// Evaluates `gamma_k >= 1 - eps / (eta J)` and `L_emp <= 2 eps`.
pub fn near_optimum_check(theta: &BfParamSet, train: &[Sample], eps: f64, eta: f64) -> Result<NearOptimum> {
    let tp = transform_params(theta)?;
    Ok(NearOptimum {
        gamma_min: tp.gamma.iter().copied().fold(f64::INFINITY, f64::min),
        gamma_floor: 1.0 - eps / (eta * theta.num_layers() as f64),
        loss_emp: loss_emp_value(theta, train)?,
        emp_ceiling: 2.0 * eps,
    })
}
