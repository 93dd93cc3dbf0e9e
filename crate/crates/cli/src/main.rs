use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use mbsel::ci::ci_test;
use mbsel::dataset::{write_dataset_csv, Dataset, Table, TargetKind};
use mbsel::harness::{
    envelope, fit_maps, ingest_timeseries, run_calibrate, run_ci_roc, run_experiment, ExperimentKind,
    ExperimentSpec, IngestConfig, RocScore,
};
use mbsel::knn::{fp_cmi, ksg_mi};
use mbsel::mapper::{HeadKind, MappingModel};
use mbsel::markov_blanket::{find_markov_blanket, oracle_markov_blanket, CiBackend, MbConfig};
use mbsel::synthetic::{gen_bullseye_2d, gen_bullseye_dag, BullseyeConfig, DagSpec, Rings};

/// Model-augmented k-NN CMI estimation and Markov blanket feature selection.
#[derive(Debug, Parser)]
#[command(name = "mbsel", version, propagate_version = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Seed of every random choice.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Experiment configuration JSON; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(flatten)]
    knobs: Knobs,
}

/// Numeric settings shared by the subcommands.
#[derive(Debug, Args)]
struct Knobs {
    /// Neighbor count: of the MI estimate for `estimate`, of the CI statistic elsewhere.
    #[arg(long, global = true)]
    k: Option<usize>,
    /// Number of permutations of the CI test.
    #[arg(long, global = true)]
    perms: Option<usize>,
    /// Neighborhood size of the local permutation.
    #[arg(long = "k-perm", global = true)]
    k_perm: Option<usize>,
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// Noise half-width of the synthetic data.
    #[arg(long, global = true)]
    epsilon: Option<f64>,
    /// Sample count of the synthetic data.
    #[arg(long, global = true)]
    n: Option<usize>,
    /// Largest conditioning set size.
    #[arg(long, global = true)]
    delta: Option<usize>,
    /// Regularizer weight of the map training.
    #[arg(long, global = true)]
    lambda: Option<f64>,
    /// Output width of every feature map.
    #[arg(long = "map-dim", global = true)]
    map_dim: Option<usize>,
    /// Training iterations.
    #[arg(long, global = true)]
    iterations: Option<usize>,
    #[arg(long = "batch-size", global = true)]
    batch_size: Option<usize>,
    /// Adam learning rate.
    #[arg(long = "learning-rate", global = true)]
    learning_rate: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw a synthetic dataset as CSV.
    Gen {
        #[arg(long, value_enum, default_value = "bullseye2d")]
        kind: GenKind,
        /// Graph JSON for `--kind dag`; the six-feature default when absent.
        #[arg(long)]
        dag: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "wide")]
        rings: RingsArg,
    },
    /// Fit feature maps on a CSV dataset and write the checkpoint JSON.
    TrainMaps {
        input: PathBuf,
        #[arg(long, default_value = "y")]
        target: String,
        /// Surrogate family; Bernoulli for a 0/1 target, Gaussian otherwise, when absent.
        #[arg(long, value_enum)]
        head: Option<HeadArg>,
    },
    /// Estimate I(X;Y) or I(X;Y|Z) on CSV columns.
    Estimate {
        input: PathBuf,
        /// Mutual information of `--x` and `--y`.
        #[arg(long, conflicts_with = "cmi")]
        mi: bool,
        /// Conditional mutual information given `--z`.
        #[arg(long, requires = "z")]
        cmi: bool,
        /// Columns of X: names or block prefixes, comma separated.
        #[arg(long)]
        x: String,
        #[arg(long)]
        y: String,
        #[arg(long)]
        z: Option<String>,
    },
    /// Run one conditional independence test on CSV columns.
    CiTest {
        input: PathBuf,
        #[arg(long)]
        x: String,
        #[arg(long)]
        y: String,
        #[arg(long)]
        z: Option<String>,
    },
    /// Score the relation suite of a graph and sweep ROC curves.
    Roc {
        #[arg(long)]
        dag: Option<PathBuf>,
        /// Backends to compare.
        #[arg(long, value_delimiter = ',', default_value = "mapped_knn,raw_knn")]
        backend: Vec<CiBackend>,
        #[arg(long, value_enum, default_value = "p-value")]
        score: ScoreArg,
        /// Where to write the JSON summary; standard output when absent.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Select the Markov blanket of the target of a CSV dataset.
    Select {
        /// Dataset CSV; not needed with the oracle backend.
        input: Option<PathBuf>,
        #[arg(long, default_value = "y")]
        target: String,
        #[arg(long, default_value = "mapped_knn")]
        backend: CiBackend,
        /// Mapping checkpoint for the mapped backend; maps are trained on the data when absent.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Graph JSON for the oracle backend.
        #[arg(long)]
        dag: Option<PathBuf>,
        /// Where to write the test log CSV.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Skip the final elimination pass.
        #[arg(long)]
        no_prune: bool,
    },
    /// Measure the false positive rate of the CI test on Gaussian chains.
    Calibrate {
        #[arg(long, default_value_t = 200)]
        trials: u64,
    },
    /// Flatten per-entity time series into a feature-block CSV.
    Ingest {
        input: PathBuf,
        #[arg(long, default_value_t = 10)]
        window: usize,
        #[arg(long, default_value_t = 1)]
        stride: usize,
        #[arg(long, default_value = "id")]
        id: String,
        #[arg(long, default_value = "t")]
        time: String,
        #[arg(long, default_value = "label")]
        label: String,
    },
    /// Run an experiment grid and write its JSON results.
    Experiment {
        #[arg(long, value_enum)]
        kind: Option<KindArg>,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long, value_delimiter = ',')]
        epsilons: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        ns: Option<Vec<usize>>,
        /// Skip the trained-map estimators in MI grids.
        #[arg(long)]
        no_maps: bool,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum GenKind {
    Bullseye2d,
    Dag,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum RingsArg {
    /// R in [1, 2] ∪ [3, 4].
    Wide,
    /// R in [0.25, 0.5] ∪ [0.75, 1].
    Quarter,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum HeadArg {
    Gaussian,
    Bernoulli,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ScoreArg {
    PValue,
    Statistic,
    Both,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum KindArg {
    MiVsEps,
    MiVsN,
    CiRoc,
    MbSelect,
    Calibrate,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() && !e.to_string().contains("Usage:") {
                eprintln!("\n{}", Cli::command().render_usage());
            }
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

/// Experiment spec from `--config`, with the command-line flags applied on top.
fn effective_spec(cli: &Cli) -> Result<ExperimentSpec> {
    let mut spec: ExperimentSpec = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => ExperimentSpec::default(),
    };
    let k = &cli.knobs;
    if let Some(seed) = cli.seed {
        spec.seeds = vec![seed];
        spec.ci.seed = seed;
        spec.train.seed = seed;
    }
    if let Some(v) = k.k {
        if matches!(cli.command, Command::Estimate { .. }) {
            spec.k = v;
        } else {
            spec.ci.k_cmi = v;
        }
    }
    if let Some(v) = k.perms {
        spec.ci.num_permutations = v;
    }
    if let Some(v) = k.k_perm {
        spec.ci.k_perm = v;
    }
    if let Some(v) = k.alpha {
        spec.ci.alpha = v;
    }
    if let Some(v) = k.epsilon {
        spec.epsilons = vec![v];
        if let Some(dag) = spec.dag.as_mut() {
            dag.epsilon = v;
        }
    }
    if let Some(v) = k.n {
        spec.ns = vec![v];
    }
    if let Some(v) = k.delta {
        spec.delta = v;
        spec.train.delta = v;
    }
    if let Some(v) = k.lambda {
        spec.train.lambda = v;
    }
    if let Some(v) = k.map_dim {
        spec.model.map_dim = v;
    }
    if let Some(v) = k.iterations {
        spec.train.iterations = v;
    }
    if let Some(v) = k.batch_size {
        spec.train.batch_size = v;
    }
    if let Some(v) = k.learning_rate {
        spec.train.optimizer.learning_rate = v;
    }
    Ok(spec)
}

fn seed_of(spec: &ExperimentSpec) -> u64 {
    spec.seeds.first().copied().unwrap_or(0)
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn emit_json(path: Option<&Path>, value: &Value) -> Result<()> {
    let mut w = open_output(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn read_table(path: &Path) -> Result<Table> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Table::read(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))
}

fn read_dag(path: &Path) -> Result<DagSpec> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing graph {}", path.display()))
}

fn run(cli: Cli) -> Result<()> {
    let mut spec = effective_spec(&cli)?;
    let out = cli.out.as_deref();
    match &cli.command {
        Command::Gen { kind, dag, rings } => {
            let n = spec.ns[0];
            let epsilon = cli.knobs.epsilon.unwrap_or(0.3);
            let w = open_output(out)?;
            match kind {
                GenKind::Bullseye2d => {
                    let cfg = BullseyeConfig {
                        rings: match rings {
                            RingsArg::Wide => Rings::WIDE,
                            RingsArg::Quarter => Rings::QUARTER,
                        },
                        ..BullseyeConfig::new(epsilon, n, seed_of(&spec))
                    };
                    let data = gen_bullseye_2d(&cfg)?;
                    let ds = Dataset::new(vec![data.x], data.y)?;
                    write_dataset_csv(&ds, &[("r", data.r.values())], w)?;
                }
                GenKind::Dag => {
                    let mut graph = match dag {
                        Some(path) => read_dag(path)?,
                        None => DagSpec::default_bullseye(epsilon),
                    };
                    if let Some(e) = cli.knobs.epsilon {
                        graph.epsilon = e;
                    }
                    let ds = gen_bullseye_dag(&graph, n, seed_of(&spec))?;
                    write_dataset_csv(&ds, &[], w)?;
                }
            }
        }
        Command::TrainMaps { input, target, head } => {
            let data = read_table(input)?.to_dataset(target)?;
            spec.model.head_kind = match head {
                Some(HeadArg::Gaussian) => HeadKind::Gaussian,
                Some(HeadArg::Bernoulli) => HeadKind::Bernoulli,
                None if data.target_kind == TargetKind::Binary => HeadKind::Bernoulli,
                None => spec.model.head_kind,
            };
            let train = mbsel::mapper::TrainConfig {
                delta: spec.delta,
                seed: seed_of(&spec),
                ..spec.train.clone()
            };
            let model = fit_maps(&data, &spec.model, &train)?;
            let mut w = open_output(out)?;
            w.write_all(model.to_json()?.as_bytes())?;
            writeln!(w)?;
            w.flush()?;
        }
        Command::Estimate { input, mi, cmi, x, y, z } => {
            let table = read_table(input)?;
            let (xs, ys) = (table.select(x)?, table.select(y)?);
            let knn = mbsel::knn::KnnConfig::with_k(spec.k);
            let (key, value) = match (z, cmi) {
                (Some(z), _) => ("cmi_nats", fp_cmi(&xs, &ys, &table.select(z)?, &knn)?),
                (None, true) => bail!("--cmi needs --z"),
                (None, false) => {
                    if !mi {
                        log::info!("no --mi or --cmi given; estimating mutual information");
                    }
                    ("mi_nats", ksg_mi(&xs, &ys, &knn)?)
                }
            };
            let echo = json!({"command": "estimate", "input": input, "x": x, "y": y, "z": z, "k": spec.k});
            let mut env = envelope(&echo, &json!({ key: value }))?;
            env[key] = json!(value);
            emit_json(out, &env)?;
        }
        Command::CiTest { input, x, y, z } => {
            let table = read_table(input)?;
            let zs = z.as_deref().map(|z| table.select(z)).transpose()?;
            let r = ci_test(&table.select(x)?, &table.select(y)?, zs.as_ref(), &spec.ci)?;
            let echo = json!({"command": "ci-test", "input": input, "x": x, "y": y, "z": z, "ci": spec.ci});
            emit_json(out, &envelope(&echo, &r)?)?;
        }
        Command::Roc { dag, backend, score, summary } => {
            spec.kind = ExperimentKind::CiRoc;
            if let Some(path) = dag {
                let mut graph = read_dag(path)?;
                if let Some(e) = cli.knobs.epsilon {
                    graph.epsilon = e;
                }
                spec.dag = Some(graph);
            }
            spec.backends = backend.clone();
            spec.scores = match score {
                ScoreArg::PValue => vec![RocScore::PValue],
                ScoreArg::Statistic => vec![RocScore::Statistic],
                ScoreArg::Both => vec![RocScore::PValue, RocScore::Statistic],
            };
            let results = run_ci_roc(&spec)?;
            let mut w = csv::WriterBuilder::new()
                .terminator(csv::Terminator::Any(b'\n'))
                .from_writer(open_output(out)?);
            w.write_record(["seed", "n", "backend", "score", "threshold", "tpr", "fpr"])?;
            let mut aucs = Vec::new();
            for r in &results {
                let backend = serde_json::to_value(r.backend)?.as_str().unwrap_or_default().to_string();
                for (name, table) in [("p_value", &r.roc_p_value), ("statistic", &r.roc_statistic)] {
                    let Some(table) = table else { continue };
                    aucs.push(json!({"seed": r.seed, "n": r.n, "backend": backend, "score": name, "auc": table.auc}));
                    for row in &table.rows {
                        w.write_record([
                            r.seed.to_string(),
                            r.n.to_string(),
                            backend.clone(),
                            name.to_string(),
                            row.threshold.to_string(),
                            row.true_positive_rate.to_string(),
                            row.false_positive_rate.to_string(),
                        ])?;
                    }
                }
            }
            w.flush()?;
            let env = envelope(&spec, &json!({"auc": aucs, "runs": results}))?;
            emit_json(summary.as_deref(), &env)?;
        }
        Command::Select { input, target, backend, model, dag, log, no_prune } => {
            let cfg = MbConfig {
                delta: spec.delta,
                backend: *backend,
                prune: !no_prune,
                ci: spec.ci,
            };
            let result = match backend {
                CiBackend::Oracle => {
                    let graph = match dag {
                        Some(path) => read_dag(path)?,
                        None => spec.dag(),
                    };
                    oracle_markov_blanket(&graph, cfg.delta, cfg.prune)?
                }
                _ => {
                    let Some(input) = input else {
                        bail!("the {backend:?} backend needs an input CSV");
                    };
                    let data = read_table(input)?.to_dataset(target)?;
                    let maps = match (backend, model) {
                        (CiBackend::MappedKnn, Some(path)) => {
                            let text = std::fs::read_to_string(path)
                                .with_context(|| format!("reading {}", path.display()))?;
                            Some(MappingModel::<f64>::from_json(&text)?)
                        }
                        (CiBackend::MappedKnn, None) => {
                            let mut model_cfg = spec.model.clone();
                            if data.target_kind == TargetKind::Binary {
                                model_cfg.head_kind = HeadKind::Bernoulli;
                            }
                            let train = mbsel::mapper::TrainConfig {
                                delta: spec.delta,
                                seed: seed_of(&spec),
                                ..spec.train.clone()
                            };
                            Some(fit_maps(&data, &model_cfg, &train)?)
                        }
                        _ => None,
                    };
                    find_markov_blanket(&data, &cfg, maps.as_ref())?
                }
            };
            if let Some(path) = log {
                let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
                result.write_log_csv(BufWriter::new(file))?;
            }
            let echo = json!({"command": "select", "input": input, "target": target, "mb": cfg});
            emit_json(out, &envelope(&echo, &result)?)?;
        }
        Command::Calibrate { trials } => {
            spec.kind = ExperimentKind::Calibrate;
            let first = seed_of(&spec);
            spec.seeds = (first..first + trials).collect();
            if cli.knobs.n.is_none() && cli.config.is_none() {
                spec.ns = vec![500];
            }
            let rows = run_calibrate(&spec)?;
            emit_json(out, &envelope(&spec, &rows)?)?;
        }
        Command::Ingest { input, window, stride, id, time, label } => {
            let cfg = IngestConfig {
                id_column: id.clone(),
                time_column: time.clone(),
                label_column: label.clone(),
                window: *window,
                stride: *stride,
            };
            let file = File::open(input).with_context(|| format!("opening {}", input.display()))?;
            let ingested = ingest_timeseries(BufReader::new(file), &cfg)?;
            if !ingested.dropped.is_empty() {
                eprintln!(
                    "dropped {} entities with too little history: {}",
                    ingested.dropped.len(),
                    ingested.dropped.join(", ")
                );
            }
            write_dataset_csv(&ingested.dataset, &[], open_output(out)?)?;
        }
        Command::Experiment { kind, seeds, epsilons, ns, no_maps } => {
            if let Some(kind) = kind {
                spec.kind = match kind {
                    KindArg::MiVsEps => ExperimentKind::MiVsEps,
                    KindArg::MiVsN => ExperimentKind::MiVsN,
                    KindArg::CiRoc => ExperimentKind::CiRoc,
                    KindArg::MbSelect => ExperimentKind::MbSelect,
                    KindArg::Calibrate => ExperimentKind::Calibrate,
                };
            }
            if let Some(v) = seeds {
                spec.seeds = v.clone();
            }
            if let Some(v) = epsilons {
                spec.epsilons = v.clone();
            }
            if let Some(v) = ns {
                spec.ns = v.clone();
            }
            if *no_maps {
                spec.mapped = false;
            }
            emit_json(out, &run_experiment(&spec)?)?;
        }
    }
    Ok(())
}
