//! Flat `key = value` run configuration shared by the command-line tools.

use std::fmt::Display;
use std::str::FromStr;

use crate::autodiff::{AdamConfig, MatrixNorm};
use crate::error::{Error, Result};
use crate::generators::{DatasetKind, DatasetSpec};
use crate::mpnn::{Aggregation, FnnMode, ModelConfig, SourceMode};
use crate::training::{theorem_params, LossConfig, LossVertices, RegKind};

/// Every accepted key with its default and a one-line description.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("seed", "1", "RNG seed for initialisation and generation"),
    ("steps", "160000", "optimiser steps"),
    ("lr", "0.001", "Adam learning rate"),
    ("batch_size", "1", "training graphs per step"),
    ("log_every", "100", "metric row cadence in steps"),
    ("shuffle", "false", "reshuffle the training order every epoch"),
    ("reg", "weighted-l1", "weighted-l1 | l1 | l2 | cert | none"),
    ("eta", "0.1 (theorem mode: 2K exp(mK(K+3)))", "regularisation strength"),
    ("cert_target", "1", "B_target of the certificate regulariser"),
    ("cert_norm", "spectral", "spectral | l1 | linf | frobenius"),
    ("loss_vertices", "all-vertices", "all-vertices | target-only"),
    ("mode", "experiment", "experiment | theorem"),
    ("aggregation", "min", "aggregation of the trained model (min only)"),
    ("source", "bf-init", "bf-init | none (constant labels)"),
    ("m", "2", "layers per aggregation and update block"),
    ("k", "2", "message-passing rounds"),
    ("hidden", "64", "hidden width"),
    ("agg_dims", "16,1 (theorem mode: all 1)", "aggregation output widths"),
    ("x", "50", "edge weight of the path training set"),
    ("beta", "1000", "label of unreached vertices"),
    ("train_file", "", "dataset file used instead of the path training set"),
    ("init_checkpoint", "", "start from this checkpoint"),
    ("eval_sizes", "", "General test-set sizes evaluated during training"),
    ("eval_seed", "7", "seed of the generated test sets"),
    ("eval_files", "", "dataset files evaluated during training"),
    ("kind", "general", "dataset kind for gen"),
    ("n", "64", "vertices per generated graph"),
    ("count", "50", "generated graphs"),
    ("p", "", "edge probability (er)"),
    ("avg_degree", "", "expected degree (er-constdeg)"),
    ("weight_low", "1", "lower edge weight bound"),
    ("weight_high", "100", "upper edge weight bound"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegChoice {
    WeightedL1,
    L1,
    L2,
    Cert,
    None,
}

impl RegChoice {
    pub fn name(self) -> &'static str {
        match self {
            RegChoice::WeightedL1 => "weighted-l1",
            RegChoice::L1 => "l1",
            RegChoice::L2 => "l2",
            RegChoice::Cert => "cert",
            RegChoice::None => "none",
        }
    }
}

impl FromStr for RegChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "weighted-l1" => RegChoice::WeightedL1,
            "l1" => RegChoice::L1,
            "l2" => RegChoice::L2,
            "cert" => RegChoice::Cert,
            "none" => RegChoice::None,
            other => return Err(Error::Config(format!("unknown regulariser `{other}`"))),
        })
    }
}

fn vertices_name(v: LossVertices) -> &'static str {
    match v {
        LossVertices::AllVertices => "all-vertices",
        LossVertices::TargetOnly => "target-only",
    }
}

fn parse_vertices(s: &str) -> Result<LossVertices> {
    match s {
        "all-vertices" => Ok(LossVertices::AllVertices),
        "target-only" => Ok(LossVertices::TargetOnly),
        other => Err(Error::Config(format!("unknown loss vertex set `{other}`"))),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub steps: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub log_every: usize,
    pub shuffle: bool,
    pub reg: RegChoice,
    pub eta: Option<f64>,
    pub cert_target: f64,
    pub cert_norm: MatrixNorm,
    pub loss_vertices: LossVertices,
    pub mode: FnnMode,
    pub aggregation: Aggregation,
    pub source: SourceMode,
    pub m: usize,
    pub k: usize,
    pub hidden: usize,
    pub agg_dims: Option<Vec<usize>>,
    pub x: f64,
    pub beta: f64,
    pub train_file: Option<String>,
    pub init_checkpoint: Option<String>,
    pub eval_sizes: Vec<usize>,
    pub eval_seed: u64,
    pub eval_files: Vec<String>,
    pub kind: DatasetKind,
    pub n: usize,
    pub count: usize,
    pub p: Option<f64>,
    pub avg_degree: Option<f64>,
    pub weight_low: f64,
    pub weight_high: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            steps: 160_000,
            lr: 1e-3,
            batch_size: 1,
            log_every: 100,
            shuffle: false,
            reg: RegChoice::WeightedL1,
            eta: None,
            cert_target: 1.0,
            cert_norm: MatrixNorm::Spectral,
            loss_vertices: LossVertices::AllVertices,
            mode: FnnMode::Experiment,
            aggregation: Aggregation::Min,
            source: SourceMode::BfInit,
            m: 2,
            k: 2,
            hidden: 64,
            agg_dims: None,
            x: 50.0,
            beta: 1000.0,
            train_file: None,
            init_checkpoint: None,
            eval_sizes: Vec::new(),
            eval_seed: 7,
            eval_files: Vec::new(),
            kind: DatasetKind::General,
            n: 64,
            count: 50,
            p: None,
            avg_degree: None,
            weight_low: 1.0,
            weight_high: 100.0,
        }
    }
}

fn value<T: FromStr>(key: &str, raw: &str) -> Result<T> {
    raw.parse().map_err(|_| Error::Config(format!("invalid value `{raw}` for `{key}`")))
}

fn list<T: FromStr>(key: &str, raw: &str) -> Result<Vec<T>> {
    raw.split(',').map(str::trim).filter(|s| !s.is_empty()).map(|s| value(key, s)).collect()
}

fn join<T: Display>(xs: &[T]) -> String {
    xs.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = std::collections::HashSet::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, raw) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse { line: i + 1, msg: format!("expected `key = value`, got `{line}`") })?;
            let (key, raw) = (key.trim(), raw.trim());
            if !seen.insert(key.to_string()) {
                return Err(Error::Parse { line: i + 1, msg: format!("duplicate key `{key}`") });
            }
            cfg.set(key, raw).map_err(|e| Error::Parse { line: i + 1, msg: e.to_string() })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, raw: &str) -> Result<()> {
        let opt_string = |raw: &str| (!raw.is_empty()).then(|| raw.to_string());
        match key {
            "seed" => self.seed = value(key, raw)?,
            "steps" => self.steps = value(key, raw)?,
            "lr" => self.lr = value(key, raw)?,
            "batch_size" => self.batch_size = value(key, raw)?,
            "log_every" => self.log_every = value(key, raw)?,
            "shuffle" => self.shuffle = value(key, raw)?,
            "reg" => self.reg = raw.parse()?,
            "eta" => self.eta = Some(value(key, raw)?),
            "cert_target" => self.cert_target = value(key, raw)?,
            "cert_norm" => self.cert_norm = raw.parse()?,
            "loss_vertices" => self.loss_vertices = parse_vertices(raw)?,
            "mode" => self.mode = raw.parse()?,
            "aggregation" => self.aggregation = raw.parse()?,
            "source" => self.source = raw.parse()?,
            "m" => self.m = value(key, raw)?,
            "k" => self.k = value(key, raw)?,
            "hidden" => self.hidden = value(key, raw)?,
            "agg_dims" => self.agg_dims = Some(list(key, raw)?),
            "x" => self.x = value(key, raw)?,
            "beta" => self.beta = value(key, raw)?,
            "train_file" => self.train_file = opt_string(raw),
            "init_checkpoint" => self.init_checkpoint = opt_string(raw),
            "eval_sizes" => self.eval_sizes = list(key, raw)?,
            "eval_seed" => self.eval_seed = value(key, raw)?,
            "eval_files" => self.eval_files = list(key, raw)?,
            "kind" => self.kind = raw.parse()?,
            "n" => self.n = value(key, raw)?,
            "count" => self.count = value(key, raw)?,
            "p" => self.p = Some(value(key, raw)?),
            "avg_degree" => self.avg_degree = Some(value(key, raw)?),
            "weight_low" => self.weight_low = value(key, raw)?,
            "weight_high" => self.weight_high = value(key, raw)?,
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 || self.batch_size == 0 || self.log_every == 0 {
            return Err(Error::Config("steps, batch_size and log_every must be positive".into()));
        }
        if let Some(eta) = self.eta {
            if !(eta >= 0.0) {
                return Err(Error::Config(format!("eta must be non-negative, got {eta}")));
            }
        }
        if !(self.lr >= 0.0) {
            return Err(Error::Config(format!("lr must be non-negative, got {}", self.lr)));
        }
        self.model_config().validate()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| out.push_str(&format!("{k} = {v}\n"));
        put("seed", self.seed.to_string());
        put("steps", self.steps.to_string());
        put("lr", self.lr.to_string());
        put("batch_size", self.batch_size.to_string());
        put("log_every", self.log_every.to_string());
        put("shuffle", self.shuffle.to_string());
        put("reg", self.reg.name().into());
        if let Some(eta) = self.eta {
            put("eta", eta.to_string());
        }
        put("cert_target", self.cert_target.to_string());
        put("cert_norm", self.cert_norm.name().into());
        put("loss_vertices", vertices_name(self.loss_vertices).into());
        put("mode", self.mode.name().into());
        put("aggregation", self.aggregation.name().into());
        put("source", self.source.name().into());
        put("m", self.m.to_string());
        put("k", self.k.to_string());
        put("hidden", self.hidden.to_string());
        if let Some(d) = &self.agg_dims {
            put("agg_dims", join(d));
        }
        put("x", self.x.to_string());
        put("beta", self.beta.to_string());
        if let Some(f) = &self.train_file {
            put("train_file", f.clone());
        }
        if let Some(f) = &self.init_checkpoint {
            put("init_checkpoint", f.clone());
        }
        put("eval_sizes", join(&self.eval_sizes));
        put("eval_seed", self.eval_seed.to_string());
        put("eval_files", join(&self.eval_files));
        put("kind", self.kind.name().into());
        put("n", self.n.to_string());
        put("count", self.count.to_string());
        if let Some(p) = self.p {
            put("p", p.to_string());
        }
        if let Some(d) = self.avg_degree {
            put("avg_degree", d.to_string());
        }
        put("weight_low", self.weight_low.to_string());
        put("weight_high", self.weight_high.to_string());
        out
    }

    pub fn model_config(&self) -> ModelConfig {
        let mut cfg = match self.mode {
            FnnMode::Experiment => ModelConfig { m: self.m, k: self.k, hidden: self.hidden, ..ModelConfig::experiment() },
            FnnMode::Theorem => ModelConfig::theorem(self.m, self.k, self.hidden),
        };
        cfg.agg_dims = match (&self.agg_dims, self.mode) {
            (Some(d), _) => d.clone(),
            (None, FnnMode::Experiment) if self.k == 2 => vec![16, 1],
            (None, _) => vec![1; self.k],
        };
        cfg.aggregation = self.aggregation;
        cfg.source = self.source;
        cfg
    }

    /// `eta`, defaulting to 0.1 in experiment mode and to the smallest
    /// admissible value in theorem mode.
    pub fn eta(&self) -> Result<f64> {
        match (self.eta, self.mode) {
            (Some(eta), _) => Ok(eta),
            (None, FnnMode::Experiment) => Ok(0.1),
            (None, FnnMode::Theorem) => Ok(theorem_params(self.m, self.k, self.k + 1)?.eta_min),
        }
    }

    pub fn loss_config(&self) -> Result<LossConfig> {
        let reg = match self.reg {
            RegChoice::WeightedL1 => RegKind::WeightedL1,
            RegChoice::L1 => RegKind::L1,
            RegChoice::L2 => RegKind::L2,
            RegChoice::Cert => RegKind::Cert { target: self.cert_target, norm: self.cert_norm },
            RegChoice::None => RegKind::None,
        };
        Ok(LossConfig { reg, eta: self.eta()?, vertices: self.loss_vertices })
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig { lr: self.lr, ..AdamConfig::default() }
    }

    pub fn dataset_spec(&self) -> DatasetSpec {
        DatasetSpec {
            p: self.p,
            avg_degree: self.avg_degree,
            weight_low: self.weight_low,
            weight_high: self.weight_high,
            beta: self.beta,
            k: self.k,
            x: self.x,
            ..DatasetSpec::new(self.kind, self.n, self.count, self.seed)
        }
    }

    pub fn help_text() -> String {
        let mut out = String::from("config keys (key = value, `#` starts a comment):\n");
        for (k, d, h) in KEYS {
            let default = if d.is_empty() { "unset".to_string() } else { d.to_string() };
            out.push_str(&format!("  {k:<16} {h} [default: {default}]\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_key_table() {
        let text = RunConfig::default().to_text();
        for line in text.lines() {
            let key = line.split(" = ").next().unwrap();
            assert!(KEYS.iter().any(|(k, _, _)| *k == key), "{key}");
        }
        let parsed = RunConfig::parse(&text).unwrap();
        assert_eq!(parsed, RunConfig::default());
    }

    #[test]
    fn round_trip_with_every_field_set() {
        let cfg = RunConfig {
            seed: 9,
            steps: 123,
            lr: 0.0003,
            batch_size: 2,
            log_every: 7,
            shuffle: true,
            reg: RegChoice::Cert,
            eta: Some(109.19630006628847),
            cert_target: 1.5,
            cert_norm: MatrixNorm::L1,
            loss_vertices: LossVertices::TargetOnly,
            mode: FnnMode::Theorem,
            aggregation: Aggregation::Min,
            source: SourceMode::None,
            m: 1,
            k: 3,
            hidden: 5,
            agg_dims: Some(vec![1, 2, 1]),
            x: 873.5704005303078,
            beta: 2000.0,
            train_file: Some("train.txt".into()),
            init_checkpoint: Some("psi.ckpt".into()),
            eval_sizes: vec![64, 256],
            eval_seed: 3,
            eval_files: vec!["a.txt".into(), "b.txt".into()],
            kind: DatasetKind::Er,
            n: 32,
            count: 4,
            p: Some(0.25),
            avg_degree: Some(3.5),
            weight_low: 0.5,
            weight_high: 2.0,
        };
        assert_eq!(RunConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(RunConfig::parse("colour = red"), Err(Error::Parse { line: 1, .. })));
        assert!(RunConfig::parse("steps = 0").is_err());
        assert!(RunConfig::parse("steps = ten").is_err());
        assert!(RunConfig::parse("seed = 1\nseed = 2").is_err());
        assert!(RunConfig::parse("just words").is_err());
        assert!(RunConfig::parse("eta = -1").is_err());
    }

    #[test]
    fn comments_and_defaults() {
        let cfg = RunConfig::parse("# run\nsteps = 100 # short\n\nmode = theorem\nm = 1\nk = 1\n").unwrap();
        assert_eq!(cfg.steps, 100);
        assert_eq!(cfg.model_config().agg_dims, vec![1]);
        assert!((cfg.eta().unwrap() - 109.19630006628847).abs() < 1e-9);
        assert_eq!(RunConfig::default().eta().unwrap(), 0.1);
        assert_eq!(RunConfig::default().model_config(), ModelConfig::experiment());
    }
}
