//! Scripted reproduction runs: the Bellman-Ford network trained on the path
//! training set and scored on General test sets of growing size.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::generators::{gen_dataset, make_bf_training_set, DatasetSpec, Sample};
use crate::graph::DEFAULT_BETA;
use crate::mpnn::{ModelConfig, SourceMode};
use crate::training::{test_score, train, LossConfig, LossVertices, RegKind, TrainConfig, TrainResult};

pub const SEEDS: [u64; 3] = [1, 2, 3];
pub const TEST_SEED: u64 = 7;
pub const TRAIN_X: f64 = 50.0;
pub const FULL_SIZES: [usize; 5] = [64, 128, 256, 512, 1024];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Question {
    Q1,
    Q2,
    Q3,
}

impl std::str::FromStr for Question {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "q1" => Ok(Question::Q1),
            "q2" => Ok(Question::Q2),
            "q3" => Ok(Question::Q3),
            other => Err(Error::Config(format!("unknown question `{other}`, expected q1, q2 or q3"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    /// At most 40000 steps and graphs of at most 256 vertices.
    Small,
    Full,
}

impl std::str::FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "small" => Ok(Scale::Small),
            "full" => Ok(Scale::Full),
            other => Err(Error::Config(format!("unknown scale `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub steps: usize,
    pub sizes: Vec<usize>,
    pub seeds: Vec<u64>,
    pub test_seed: u64,
    pub log_every: usize,
}

impl Plan {
    pub fn new(scale: Scale) -> Self {
        let (steps, sizes) = match scale {
            Scale::Small => (40_000, FULL_SIZES.iter().copied().filter(|&n| n <= 256).collect()),
            Scale::Full => (160_000, FULL_SIZES.to_vec()),
        };
        Self { steps, sizes, seeds: SEEDS.to_vec(), test_seed: TEST_SEED, log_every: 100 }
    }
}

/// One training run of the reproduction grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub reg: RegKind,
    pub source: SourceMode,
    pub seed: u64,
}

impl RunSpec {
    pub fn label(&self) -> String {
        format!("{}-{}-seed{}", self.reg.name(), self.source.name(), self.seed)
    }
}

/// Replaces every label by `beta` when `source` is `None`; targets stay the
/// Bellman-Ford values of the original instance.
pub fn apply_source(sample: Sample, source: SourceMode) -> Result<Sample> {
    match source {
        SourceMode::BfInit => Ok(sample),
        SourceMode::None => {
            let beta = sample.instance.beta();
            let instance = sample.instance.with_labels(vec![beta; sample.instance.n()])?;
            Ok(Sample { instance, targets: sample.targets })
        }
    }
}

/// The path training set with targets at every vertex.
pub fn training_samples(x: f64, k: usize, beta: f64, source: SourceMode) -> Result<Vec<Sample>> {
    make_bf_training_set(x, k, beta)?
        .into_iter()
        .map(|s| apply_source(Sample::all_vertices(s.instance, k), source))
        .collect()
}

/// General test graphs of size `n`, source vertex 0, targets at all vertices.
pub fn test_samples(n: usize, seed: u64, k: usize, source: SourceMode) -> Result<Vec<Sample>> {
    gen_dataset(&DatasetSpec::general(n, seed))?
        .into_iter()
        .map(|g| apply_source(Sample::all_vertices(g, k), source))
        .collect()
}

#[derive(Debug, Clone)]
pub struct TestSets {
    sets: Vec<(SourceMode, usize, Vec<Sample>)>,
}

impl TestSets {
    pub fn build(plan: &Plan, k: usize, sources: &[SourceMode]) -> Result<Self> {
        let mut sets = Vec::new();
        for &n in &plan.sizes {
            let base = test_samples(n, plan.test_seed, k, SourceMode::BfInit)?;
            for &s in sources {
                let set = base.iter().cloned().map(|x| apply_source(x, s)).collect::<Result<_>>()?;
                sets.push((s, n, set));
            }
        }
        Ok(Self { sets })
    }

    pub fn get(&self, source: SourceMode, n: usize) -> Option<&[Sample]> {
        self.sets.iter().find(|(s, m, _)| *s == source && *m == n).map(|(_, _, v)| v.as_slice())
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub spec: RunSpec,
    pub result: TrainResult,
    pub scores: Vec<(usize, f64)>,
}

impl RunOutcome {
    pub fn final_loss(&self) -> f64 {
        self.result.history.last().map_or(f64::NAN, |r| r.loss_total)
    }

    pub fn score(&self, n: usize) -> Option<f64> {
        self.scores.iter().find(|(m, _)| *m == n).map(|(_, s)| *s)
    }
}

pub fn train_config(spec: &RunSpec, plan: &Plan) -> Result<TrainConfig> {
    let model = ModelConfig { source: spec.source, ..ModelConfig::experiment() };
    let loss = LossConfig { reg: spec.reg, eta: 0.1, vertices: LossVertices::AllVertices };
    let train_set = training_samples(TRAIN_X, model.k, DEFAULT_BETA, spec.source)?;
    let mut cfg = TrainConfig::new(model, loss, train_set);
    cfg.steps = plan.steps;
    cfg.seed = spec.seed;
    cfg.log_every = plan.log_every;
    cfg.eval_every_log = false;
    Ok(cfg)
}

pub fn run_one(spec: &RunSpec, plan: &Plan, tests: &TestSets) -> Result<RunOutcome> {
    let result = train(&train_config(spec, plan)?)?;
    let scores = plan
        .sizes
        .iter()
        .map(|&n| {
            let set = tests.get(spec.source, n).ok_or_else(|| Error::Config(format!("no test set for n = {n}")))?;
            Ok((n, test_score(&result.theta, set)?))
        })
        .collect::<Result<_>>()?;
    Ok(RunOutcome { spec: spec.clone(), result, scores })
}

/// Runs independent configurations in parallel on the current rayon pool.
pub fn run_all(specs: &[RunSpec], plan: &Plan, tests: &TestSets) -> Result<Vec<RunOutcome>> {
    specs.par_iter().map(|s| run_one(s, plan, tests)).collect()
}

/// The model variants compared in each question.
pub fn variants(q: Question) -> Vec<(&'static str, RegKind, SourceMode)> {
    match q {
        Question::Q1 => vec![("weighted-l1", RegKind::WeightedL1, SourceMode::BfInit)],
        Question::Q2 => vec![("1-WL", RegKind::WeightedL1, SourceMode::None), ("1-iWL", RegKind::WeightedL1, SourceMode::BfInit)],
        Question::Q3 => vec![
            ("weighted-l1", RegKind::WeightedL1, SourceMode::BfInit),
            ("l1", RegKind::L1, SourceMode::BfInit),
            ("l2", RegKind::L2, SourceMode::BfInit),
        ],
    }
}

pub fn question_specs(q: Question, seeds: &[u64]) -> Vec<RunSpec> {
    variants(q)
        .into_iter()
        .flat_map(|(_, reg, source)| seeds.iter().map(move |&seed| RunSpec { reg, source, seed }))
        .collect()
}

/// Mean and sample standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<(String, Vec<(f64, f64)>)>,
}

impl Table {
    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for (label, cells) in &self.rows {
            out.push_str(label);
            for (m, s) in cells {
                out.push_str(&format!(",{m:.4} ± {s:.4}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn cell(&self, row: &str, col: &str) -> Option<(f64, f64)> {
        let c = self.header.iter().position(|h| h == col)?.checked_sub(1)?;
        self.rows.iter().find(|(l, _)| l == row).and_then(|(_, cells)| cells.get(c).copied())
    }
}

/// Mean and std over seeds of the final training loss and the test score at
/// every size, one row per variant.
pub fn table(q: Question, outcomes: &[RunOutcome], plan: &Plan) -> Result<Table> {
    let mut header = vec!["model".to_string(), "train_loss".to_string()];
    header.extend(plan.sizes.iter().map(|n| format!("general-{n}")));
    let mut rows = Vec::new();
    for (label, reg, source) in variants(q) {
        let runs: Vec<&RunOutcome> = outcomes
            .iter()
            .filter(|o| o.spec.reg == reg && o.spec.source == source && plan.seeds.contains(&o.spec.seed))
            .collect();
        if runs.len() != plan.seeds.len() {
            return Err(Error::Config(format!("expected {} runs for {label}, found {}", plan.seeds.len(), runs.len())));
        }
        let mut cells = vec![mean_std(&runs.iter().map(|o| o.final_loss()).collect::<Vec<_>>())];
        for &n in &plan.sizes {
            let scores: Option<Vec<f64>> = runs.iter().map(|o| o.score(n)).collect();
            let scores = scores.ok_or_else(|| Error::Config(format!("missing score for n = {n}")))?;
            cells.push(mean_std(&scores));
        }
        rows.push((label.to_string(), cells));
    }
    let name = match q {
        Question::Q1 => "q1",
        Question::Q2 => "q2",
        Question::Q3 => "q3",
    };
    Ok(Table { name: name.into(), header, rows })
}

/// Trains every variant of `q` for every seed and tabulates the results.
pub fn reproduce(q: Question, plan: &Plan) -> Result<(Table, Vec<RunOutcome>)> {
    let specs = question_specs(q, &plan.seeds);
    let mut sources: Vec<SourceMode> = specs.iter().map(|s| s.source).collect();
    sources.dedup();
    let tests = TestSets::build(plan, ModelConfig::experiment().k, &sources)?;
    let outcomes = run_all(&specs, plan, &tests)?;
    Ok((table(q, &outcomes, plan)?, outcomes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mpnn::psi_for;

    fn tiny_plan() -> Plan {
        Plan { steps: 300, sizes: vec![16, 24], seeds: vec![1, 2], test_seed: 3, log_every: 100 }
    }

    #[test]
    fn plans() {
        let small = Plan::new(Scale::Small);
        assert_eq!((small.steps, small.sizes.clone()), (40_000, vec![64, 128, 256]));
        let full = Plan::new(Scale::Full);
        assert_eq!((full.steps, full.sizes.len(), full.seeds.clone()), (160_000, 5, vec![1, 2, 3]));
    }

    #[test]
    fn baseline_labels_are_constant_but_targets_are_not() {
        let set = training_samples(50.0, 2, 1000.0, SourceMode::None).unwrap();
        let reference = training_samples(50.0, 2, 1000.0, SourceMode::BfInit).unwrap();
        for (s, r) in set.iter().zip(&reference) {
            assert!(s.instance.labels().iter().all(|&l| l == 1000.0));
            assert_eq!(s.targets, r.targets);
        }
        assert_eq!(reference[0].targets, vec![(0, 50.0), (1, 50.0), (2, 50.0)]);
    }

    #[test]
    fn psi_scores_zero_on_test_sets() {
        let psi = psi_for(&ModelConfig::experiment()).unwrap();
        let set = test_samples(20, 5, 2, SourceMode::BfInit).unwrap();
        assert_eq!(set.len(), 50);
        assert_eq!(test_score(&psi, &set).unwrap(), 0.0);
    }

    #[test]
    fn mean_std_values() {
        assert_eq!(mean_std(&[2.0]), (2.0, 0.0));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!((m, s), (2.0, 1.0));
    }

    #[test]
    fn tiny_reproduction_is_deterministic() {
        let plan = tiny_plan();
        let (t1, outcomes) = reproduce(Question::Q2, &plan).unwrap();
        let (t2, _) = reproduce(Question::Q2, &plan).unwrap();
        assert_eq!(t1.to_csv(), t2.to_csv());
        assert_eq!(outcomes.len(), 4);
        assert_eq!(t1.header, vec!["model", "train_loss", "general-16", "general-24"]);
        assert_eq!(t1.rows.iter().map(|r| r.0.as_str()).collect::<Vec<_>>(), vec!["1-WL", "1-iWL"]);
        assert!(t1.cell("1-iWL", "general-24").is_some());
        assert!(t1.to_csv().lines().nth(1).unwrap().starts_with("1-WL,"));
    }
}
