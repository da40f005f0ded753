use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};

use nalab::checks::{format_table, run_suite};
use nalab::config::RunConfig;
use nalab::experiments::{apply_source, reproduce, test_samples, Plan, Question, Scale};
use nalab::generators::{gen_dataset, make_bf_training_set, Sample};
use nalab::io::{parse_dataset, write_samples, GraphRecord};
use nalab::mpnn::{parse_checkpoint, write_checkpoint, SourceMode};
use nalab::oracles::{bf_k_step, msf_via_thresholds, mst_cost, sssp_cost, truncated_pagerank};
use nalab::training::{metrics_csv, test_score, train, LossVertices, TrainConfig};
use nalab::wl::{histogram, iwl_distinguish_rooted, iwl_distinguish_tuple, wl11_distinguish, wl1_distinguish_graphs, wl1_distinguish_vertices, wl1_refine};
use nalab::{disjoint_union, BfInstance, Error, WeightedGraph};

#[derive(Parser)]
#[command(name = "nalab", version, about = "Bellman-Ford MPNNs: data generation, training, evaluation and checks")]
#[command(after_help = RunConfig::help_text())]
struct Cli {
    /// `key = value` run configuration
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the `seed` key; for reproduce, runs this seed only
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the `steps` key
    #[arg(long, global = true)]
    steps: Option<usize>,
    /// Extra `key=value` overrides applied after the config file
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output file (gen, eval, wl, oracle, check) or directory (train, reproduce)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// small caps graph sizes at 256 and steps at 40000
    #[arg(long, global = true, default_value = "full")]
    scale: String,
    /// Worker threads for independent runs and evaluation
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Gaussian smoothing of exported metric curves
    #[arg(long, global = true)]
    smooth_sigma: Option<f64>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a dataset with k-step Bellman-Ford targets
    Gen,
    /// Train a Bellman-Ford MPNN; writes checkpoint.txt, metrics.csv and config.txt
    Train,
    /// Test score of a checkpoint on dataset files
    Eval {
        checkpoint: PathBuf,
        #[arg(required = true)]
        datasets: Vec<PathBuf>,
    },
    /// Weisfeiler-Leman verdicts and color histograms
    Wl {
        /// File with one graph (vertex tests) or two graphs
        graphs: PathBuf,
        /// wl1 | iwl | wl11
        #[arg(long, default_value = "wl1")]
        mode: String,
        /// wl1 on one graph: u,v. iwl on two graphs: r,s. iwl on one graph: s,t1,t2
        #[arg(long, value_delimiter = ',')]
        roots: Vec<usize>,
    },
    /// Exact oracle values: bf | sssp | pagerank | mst | msf-thresholds
    Oracle {
        algo: String,
        graphs: PathBuf,
        #[arg(long, default_value_t = 0)]
        source: usize,
        /// Rounds for bf and pagerank (default: the `k` key)
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, default_value_t = 0.85)]
        xi: f64,
    },
    /// Run an invariant suite and print a pass/fail table
    Check {
        #[arg(default_value = "full")]
        suite: String,
    },
    /// Train every variant of q1, q2 or q3 over three seeds and tabulate
    Reproduce {
        question: String,
        /// Wall-clock budget in seconds; exceeding it only warns
        #[arg(long)]
        budget_secs: Option<f64>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(w) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(w).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            RunConfig::parse(&text).with_context(|| format!("in config {}", p.display()))?
        }
        None => RunConfig::default(),
    };
    for kv in &cli.set {
        let (k, v) = kv.split_once('=').ok_or_else(|| anyhow!("--set expects key=value, got `{kv}`"))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(s) = cli.steps {
        cfg.steps = s;
    }
    if cli.scale.parse::<Scale>()? == Scale::Small {
        let small = Plan::new(Scale::Small);
        let max_n = small.sizes.iter().copied().max().unwrap_or(0);
        cfg.steps = cfg.steps.min(small.steps);
        cfg.n = cfg.n.min(max_n);
        cfg.eval_sizes.retain(|&n| n <= max_n);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn read_records(path: &Path) -> Result<Vec<GraphRecord>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_dataset(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Samples of a dataset file; graphs without `t` lines are supervised at
/// every vertex with `k`-step targets.
fn load_samples(path: &Path, k: usize) -> Result<Vec<Sample>> {
    read_records(path)?
        .into_iter()
        .map(|r| {
            let s = r.into_sample()?;
            Ok(if s.targets.is_empty() { Sample::all_vertices(s.instance, k) } else { s })
        })
        .collect()
}

fn with_source(samples: Vec<Sample>, source: SourceMode) -> Result<Vec<Sample>> {
    samples.into_iter().map(|s| apply_source(s, source).map_err(Into::into)).collect()
}

fn run(cli: &Cli) -> Result<bool> {
    let out = cli.out.as_deref();
    match &cli.cmd {
        Cmd::Gen => {
            let cfg = load_config(cli)?;
            let samples: Vec<Sample> =
                gen_dataset(&cfg.dataset_spec())?.into_iter().map(|g| Sample::all_vertices(g, cfg.k)).collect();
            emit(out, &write_samples(&samples))?;
        }
        Cmd::Train => cmd_train(&load_config(cli)?, out.unwrap_or(Path::new("run")), cli.smooth_sigma)?,
        Cmd::Eval { checkpoint, datasets } => {
            let cfg = load_config(cli)?;
            let text = fs::read_to_string(checkpoint).with_context(|| format!("reading checkpoint {}", checkpoint.display()))?;
            let theta = parse_checkpoint(&text)?;
            let mut csv = String::from("dataset,graphs,score\n");
            for d in datasets {
                let set = load_samples(d, theta.k())?;
                let k_step = |s: &Sample| {
                    let bf = bf_k_step(&s.instance, theta.k());
                    s.targets.iter().all(|&(v, x)| bf[v] == x)
                };
                if !set.iter().all(k_step) {
                    eprintln!("warning: targets in {} are not {}-step Bellman-Ford values", d.display(), theta.k());
                }
                let set = with_source(set, cfg.source)?;
                writeln!(csv, "{},{},{}", d.display(), set.len(), test_score(&theta, &set)?)?;
            }
            emit(out, &csv)?;
        }
        Cmd::Wl { graphs, mode, roots } => emit(out, &cmd_wl(graphs, mode, roots)?)?,
        Cmd::Oracle { algo, graphs, source, k, xi } => {
            let cfg = load_config(cli)?;
            emit(out, &cmd_oracle(algo, graphs, *source, k.unwrap_or(cfg.k), *xi, cfg.beta)?)?;
        }
        Cmd::Check { suite } => {
            let results = run_suite(suite)?;
            emit(out, &format_table(&results))?;
            let failing: Vec<_> = results.iter().filter(|r| !r.passed).collect();
            for r in &failing {
                eprintln!("FAIL {}/{}: {}", r.suite, r.name, r.detail);
            }
            return Ok(failing.is_empty());
        }
        Cmd::Reproduce { question, budget_secs } => {
            let q: Question = question.parse()?;
            let scale: Scale = cli.scale.parse()?;
            let mut plan = Plan::new(scale);
            if let Some(s) = cli.seed {
                plan.seeds = vec![s];
            }
            if let Some(s) = cli.steps {
                plan.steps = s;
            }
            let dir = out.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(format!("reproduce-{question}")));
            fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
            let start = Instant::now();
            let (table, outcomes) = reproduce(q, &plan)?;
            let elapsed = start.elapsed().as_secs_f64();
            for o in &outcomes {
                let path = dir.join(format!("{}.csv", o.spec.label()));
                fs::write(&path, metrics_csv(&o.result.history, &[], cli.smooth_sigma))?;
            }
            let csv = table.to_csv();
            fs::write(dir.join(format!("{}.csv", table.name)), &csv)?;
            print!("{csv}");
            if let Some(b) = budget_secs {
                if elapsed > *b {
                    eprintln!("warning: reproduction took {elapsed:.0} s, over the {b:.0} s budget");
                }
            }
        }
    }
    Ok(true)
}

fn cmd_train(cfg: &RunConfig, dir: &Path, smooth_sigma: Option<f64>) -> Result<()> {
    let model = cfg.model_config();
    let k = model.k;
    let mut samples = match &cfg.train_file {
        Some(f) => {
            let path = Path::new(f);
            if !path.exists() {
                return Err(Error::Config(format!("train set `{f}` does not exist")).into());
            }
            load_samples(path, k)?
        }
        None => make_bf_training_set(cfg.x, k, cfg.beta)?,
    };
    if samples.is_empty() {
        return Err(Error::Config("train set is empty".into()).into());
    }
    if cfg.loss_vertices == LossVertices::AllVertices {
        samples = samples.into_iter().map(|s| Sample::all_vertices(s.instance, k)).collect();
    }
    let samples = with_source(samples, cfg.source)?;

    let mut eval = Vec::new();
    for &n in &cfg.eval_sizes {
        eval.push((format!("general-{n}"), test_samples(n, cfg.eval_seed, k, cfg.source)?));
    }
    for f in &cfg.eval_files {
        let path = Path::new(f);
        let name = path.file_stem().map_or_else(|| f.clone(), |s| s.to_string_lossy().into_owned());
        eval.push((name, with_source(load_samples(path, k)?, cfg.source)?));
    }
    let init = match &cfg.init_checkpoint {
        Some(f) => Some(parse_checkpoint(&fs::read_to_string(f).with_context(|| format!("reading checkpoint {f}"))?)?),
        None => None,
    };

    let mut tc = TrainConfig::new(model, cfg.loss_config()?, samples);
    tc.steps = cfg.steps;
    tc.adam = cfg.adam();
    tc.batch_size = cfg.batch_size;
    tc.seed = cfg.seed;
    tc.log_every = cfg.log_every;
    tc.shuffle = cfg.shuffle;
    tc.eval = eval;
    tc.init = init;
    let result = train(&tc)?;

    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let names: Vec<String> = tc.eval.iter().map(|(n, _)| n.clone()).collect();
    fs::write(dir.join("checkpoint.txt"), write_checkpoint(&result.theta))?;
    fs::write(dir.join("metrics.csv"), metrics_csv(&result.history, &names, smooth_sigma))?;
    fs::write(dir.join("config.txt"), cfg.to_text())?;
    let last = result.history.last().expect("train logs at least one row");
    let mut summary = format!("step {} loss_emp {} loss_reg {} loss_total {}", last.step, last.loss_emp, last.loss_reg, last.loss_total);
    for (name, s) in names.iter().zip(&last.scores) {
        if let Some(s) = s {
            write!(summary, " score_{name} {s}")?;
        }
    }
    println!("{summary}");
    Ok(())
}

fn cmd_wl(path: &Path, mode: &str, roots: &[usize]) -> Result<String> {
    let graphs: Vec<WeightedGraph> = read_records(path)?.into_iter().map(|r| r.graph).collect();
    let verdict = match (mode, graphs.as_slice(), roots) {
        ("wl1", [g, h], []) => wl1_distinguish_graphs(g, h),
        ("wl1", [g], &[u, v]) => wl1_distinguish_vertices(g, u, v)?,
        ("iwl", [g, h], &[r, s]) => iwl_distinguish_rooted(g, r, h, s)?,
        ("iwl", [g], &[s, t1, t2]) => iwl_distinguish_tuple(g, (s, t1), g, (s, t2))?,
        ("wl11", [g, h], []) => wl11_distinguish(g, h),
        _ => bail!(
            "unsupported combination: mode {mode} with {} graph(s) and {} root(s); \
             use wl1 (2 graphs, or 1 graph with --roots u,v), iwl (2 graphs with --roots r,s, \
             or 1 graph with --roots s,t1,t2) or wl11 (2 graphs)",
            graphs.len(),
            roots.len()
        ),
    };
    let (joint, offsets) = match graphs.as_slice() {
        [g] => (g.clone(), vec![0, g.n()]),
        [g, h] => (disjoint_union(g, h)?, vec![0, g.n(), g.n() + h.n()]),
        _ => unreachable!(),
    };
    let mut init = vec![0u64; joint.n()];
    if mode == "iwl" {
        let marked: Vec<usize> = if graphs.len() == 2 { vec![roots[0], offsets[1] + roots[1]] } else { vec![roots[0]] };
        for v in marked {
            init[v] = 1;
        }
    }
    let colors = wl1_refine(&joint, &init)?.colors;
    let mut out = format!("mode,verdict\n{mode},{}\n\ngraph,color,count\n", if verdict { "distinguished" } else { "not-distinguished" });
    for (i, w) in offsets.windows(2).enumerate() {
        for (c, n) in histogram(&colors[w[0]..w[1]]) {
            writeln!(out, "{i},{c},{n}")?;
        }
    }
    Ok(out)
}

fn cmd_oracle(algo: &str, path: &Path, source: usize, k: usize, xi: f64, beta: f64) -> Result<String> {
    let records = read_records(path)?;
    let multi = records.len() > 1;
    let scalar = matches!(algo, "mst" | "msf-thresholds");
    let mut out = match (scalar, multi) {
        (true, _) => "graph,value\n".to_string(),
        (false, false) => "vertex,value\n".to_string(),
        (false, true) => "graph,vertex,value\n".to_string(),
    };
    for (i, r) in records.into_iter().enumerate() {
        let g = r.graph.clone();
        let values = match algo {
            "bf" => {
                let inst = if g.attr_dim() == 1 { r.into_sample()?.instance } else { BfInstance::from_source(g, source, beta)? };
                bf_k_step(&inst, k)
            }
            "sssp" => sssp_cost(&g, source)?,
            "pagerank" => truncated_pagerank(&g, xi, k)?,
            "mst" => vec![mst_cost(&g)],
            "msf-thresholds" => vec![msf_via_thresholds(&g)],
            other => bail!("unknown oracle `{other}`; expected bf, sssp, pagerank, mst or msf-thresholds"),
        };
        for (v, x) in values.iter().enumerate() {
            match (scalar, multi) {
                (true, _) => writeln!(out, "{i},{x}")?,
                (false, false) => writeln!(out, "{v},{x}")?,
                (false, true) => writeln!(out, "{i},{v},{x}")?,
            }
        }
    }
    Ok(out)
}
