//! `tatml` command-line tool: synthetic data, training, evaluation and
//! method comparison.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use tatml::evaluation::{accuracy, ExperimentReport};
use tatml::solver::{fit_with_observer, SolverConfig};
use tatml::{
    build_constraints, derive_params, gen_synthetic_dataset, hyperparameter_sweep, run_experiment,
    ExperimentConfig, LabeledDataset64, Method, MetricParams64, SweepReport, SynthConfig,
    ThresholdConfig,
};

use tatml_cli::files::{read_json, write_json, DatasetFile, ModelConfig, ModelFile, ModelMode};
use tatml_cli::CliError;

#[derive(Parser)]
#[command(name = "tatml", version, about = "Metric learning with auto-tuned distance thresholds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic covariance-descriptor dataset.
    GenSynth(GenSynthArgs),
    /// Learn a metric on a dataset and write a model file.
    Train(TrainArgs),
    /// k-NN accuracy of a stored model.
    Eval(EvalArgs),
    /// Repeated train/test comparison of the learned, fixed-threshold and
    /// Euclidean metrics.
    Compare(CompareArgs),
}

#[derive(Args)]
struct GenSynthArgs {
    #[arg(long, default_value_t = 3)]
    classes: usize,
    /// Dimension of the local feature vectors.
    #[arg(long, default_value_t = 10)]
    dim: usize,
    /// Uninformative dimensions; defaults to half of `--dim`.
    #[arg(long)]
    noise_dims: Option<usize>,
    /// Examples per class.
    #[arg(long, default_value_t = 40)]
    samples: usize,
    /// Local feature vectors per example.
    #[arg(long, default_value_t = 60)]
    vectors: usize,
    #[arg(long, default_value_t = 0.5)]
    separation: f64,
    /// Add a second descriptor built from every other vector.
    #[arg(long)]
    multiscale: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
enum MethodArg {
    Tatml,
    Maz,
    Euc,
}

#[derive(Args)]
struct SolverArgs {
    #[arg(long, default_value_t = 1000)]
    max_sweeps: usize,
    #[arg(long, default_value_t = 1e-7)]
    feas_tol: f64,
    #[arg(long, default_value_t = 1e-9)]
    stall_tol: f64,
    /// Visit constraints in order instead of at random.
    #[arg(long)]
    cyclic: bool,
}

impl SolverArgs {
    fn config(&self, seed: u64) -> SolverConfig {
        SolverConfig {
            max_sweeps: self.max_sweeps,
            feas_tol: self.feas_tol,
            stall_tol: self.stall_tol,
            seed,
            schedule: if self.cyclic {
                tatml::Schedule::Cyclic
            } else {
                tatml::Schedule::Random
            },
            ..SolverConfig::default()
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value_t = MethodArg::Tatml)]
    method: MethodArg,
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    #[arg(long, default_value_t = 1.0)]
    c0: f64,
    #[arg(long, default_value_t = 1.0)]
    mu0: f64,
    /// Upper bound on similar-pair distances (maz).
    #[arg(long)]
    b_ub: Option<f64>,
    /// Lower bound on dissimilar-pair distances (maz).
    #[arg(long)]
    b_lb: Option<f64>,
    #[arg(long, default_value_t = 5)]
    per_class_similar: usize,
    #[arg(long, default_value_t = 5)]
    per_class_dissimilar: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    solver: SolverArgs,
    /// Stream one JSON line per projection to stderr.
    #[arg(long)]
    trace: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    /// Reference examples searched for neighbours.
    #[arg(long)]
    train: PathBuf,
    /// Examples to classify; defaults to the reference set.
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    k: usize,
    /// Also write the result as a JSON report.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [MethodArg::Tatml, MethodArg::Maz, MethodArg::Euc])]
    methods: Vec<MethodArg>,
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [0.01, 0.1, 1.0, 10.0])]
    c_grid: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    c0: f64,
    #[arg(long, default_value_t = 1.0)]
    mu0: f64,
    /// Fixed thresholds for maz; without them `(b/2, 2b)` for
    /// `b ∈ {0.25, 0.5, 1, 2}` is searched by cross-validation.
    #[arg(long, requires = "b_lb")]
    b_ub: Option<f64>,
    #[arg(long, requires = "b_ub")]
    b_lb: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 200)]
    max_sweeps: usize,
    /// Append the 3 x 4 grid over c0 in {0.25, 0.5, 1} and mu0 in
    /// {0.25, 0.5, 1, 2}.
    #[arg(long)]
    sweep: bool,
    #[arg(long)]
    json: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(e.exit_code());
    }
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenSynth(a) => gen_synth(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Compare(a) => compare(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("TATML_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("TATML_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))
}

fn load_dataset(path: &Path) -> Result<LabeledDataset64, CliError> {
    read_json::<DatasetFile>(path)?.to_dataset()
}

fn gen_synth(a: GenSynthArgs) -> Result<(), CliError> {
    let cfg = SynthConfig {
        classes: a.classes,
        dim: a.dim,
        noise_dims: a.noise_dims.unwrap_or(a.dim / 2),
        samples_per_class: a.samples,
        vectors_per_example: a.vectors,
        separation: a.separation,
        multiscale: a.multiscale,
        seed: a.seed,
    };
    let data: LabeledDataset64 = gen_synthetic_dataset(&cfg)?;
    write_json(&a.out, &DatasetFile::from_dataset(&data))?;
    println!(
        "wrote {} examples ({} classes, M = {}, dims {:?}) to {}",
        data.len(),
        data.classes().len(),
        data.profile().len(),
        data.profile(),
        a.out.display()
    );
    Ok(())
}

fn train(a: TrainArgs) -> Result<(), CliError> {
    let data = load_dataset(&a.data)?;
    let mode = match a.method {
        MethodArg::Tatml => ModelMode::Tatml,
        MethodArg::Euc => ModelMode::Euc,
        MethodArg::Maz => match (a.b_ub, a.b_lb) {
            (Some(b_ub), Some(b_lb)) => ModelMode::Maz { b_ub, b_lb },
            _ => return Err(CliError::Config("--method maz needs --b-ub and --b-lb".into())),
        },
    };
    let config = ModelConfig {
        c: a.c,
        c0: a.c0,
        mu0: a.mu0,
        mode,
        seed: a.seed,
    };
    let Some(solver_mode) = mode.solver_mode() else {
        let w = MetricParams64::identity(data.profile());
        write_json(&a.out, &ModelFile::new(&w, None, Vec::new(), config, true))?;
        println!("identity metric written to {}", a.out.display());
        return Ok(());
    };

    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let cs = build_constraints(&data, a.per_class_similar, a.per_class_dissimilar, &mut rng)?;
    let td = derive_params(&ThresholdConfig::new(a.c, a.c0, a.mu0, cs.k_plus(), cs.k_minus()))?;
    let solver = SolverConfig {
        mode: solver_mode,
        ..a.solver.config(a.seed)
    };
    let w0 = MetricParams64::identity(data.profile());
    let stderr = std::io::stderr();
    let res = fit_with_observer(&cs, &td, &solver, &w0, |_, rec| {
        if a.trace {
            let _ = writeln!(stderr.lock(), "{}", rec.to_json_line());
        }
    })?;
    let diag = &res.diagnostics;
    let model = ModelFile::new(&res.w, res.b0, res.xi.iter().copied().collect(), config, diag.converged);
    write_json(&a.out, &model)?;
    println!(
        "feasibility residual {:e}, sweeps {}, iterations {}{}",
        diag.feasibility_residual,
        diag.sweeps,
        diag.iterations,
        res.b0.map(|b| format!(", b0 {b}")).unwrap_or_default()
    );
    if !diag.converged {
        warn!("model written to {} without convergence", a.out.display());
        return Err(CliError::NotConverged);
    }
    Ok(())
}

fn eval(a: EvalArgs) -> Result<(), CliError> {
    let model: ModelFile = read_json(&a.model)?;
    let w = model.metric()?;
    let train = load_dataset(&a.train)?;
    let test = match &a.test {
        Some(p) => load_dataset(p)?,
        None => train.clone(),
    };
    for (name, data) in [("reference", &train), ("test", &test)] {
        if !w.accepts(data.profile()) {
            return Err(CliError::Config(format!(
                "{name} set profile {:?} does not fit the model's metric dims {:?}",
                data.profile(),
                w.dims()
            )));
        }
    }
    let acc = accuracy(&train, &test, &w, a.k)?;
    println!("accuracy {acc} ({} test examples, k = {})", test.len(), a.k);
    if let Some(path) = &a.json {
        let cfg = ExperimentConfig {
            k_neighbors: a.k,
            c_grid: vec![model.config.c],
            c0: model.config.c0,
            mu0: model.config.mu0,
            repeats: 1,
            seed: model.config.seed,
            ..ExperimentConfig::default()
        };
        let method = match model.config.mode {
            ModelMode::Tatml => Method::Tatml,
            ModelMode::Maz { b_ub, b_lb } => Method::fixed(b_ub, b_lb),
            ModelMode::Euc => Method::Euc,
        };
        let mut report = ExperimentReport::from_accuracies(&method, vec![acc], &cfg);
        if model.config.mode != ModelMode::Euc {
            report.chosen_c = vec![model.config.c];
        }
        write_json(path, &report)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct CompareOutput {
    methods: Vec<ExperimentReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sweep: Option<SweepReport>,
}

fn compare(a: CompareArgs) -> Result<(), CliError> {
    let data = load_dataset(&a.data)?;
    let cfg = ExperimentConfig {
        k_neighbors: a.k,
        c_grid: a.c_grid.clone(),
        c0: a.c0,
        mu0: a.mu0,
        repeats: a.repeats,
        seed: a.seed,
        solver: SolverConfig {
            max_sweeps: a.max_sweeps,
            ..ExperimentConfig::default().solver
        },
        ..ExperimentConfig::default()
    };
    cfg.validate()?;
    let mut reports = Vec::new();
    for &m in &a.methods {
        let method = match m {
            MethodArg::Tatml => Method::Tatml,
            MethodArg::Euc => Method::Euc,
            MethodArg::Maz => match (a.b_ub, a.b_lb) {
                (Some(b_ub), Some(b_lb)) => Method::fixed(b_ub, b_lb),
                _ => Method::fixed_grid(&[0.25, 0.5, 1.0, 2.0]),
            },
        };
        reports.push(run_experiment(&data, &method, &cfg)?);
    }
    println!("{:<8} {:>8} {:>8}", "method", "mean", "std");
    for r in &reports {
        println!("{:<8} {:>8.4} {:>8.4}", r.method, r.mean, r.std);
    }
    let sweep = if a.sweep {
        let s = hyperparameter_sweep(&data, &cfg, &[0.25, 0.5, 1.0], &[0.25, 0.5, 1.0, 2.0])?;
        println!("c0 \\ mu0 {}", s.mu0_grid.iter().map(|m| format!("{m:>8}")).collect::<String>());
        for (c0, row) in s.c0_grid.iter().zip(&s.accuracy) {
            println!("{c0:<8} {}", row.iter().map(|x| format!("{x:>8.4}")).collect::<String>());
        }
        println!("spread {:.4}", s.spread);
        Some(s)
    } else {
        None
    };
    if let Some(path) = &a.json {
        write_json(path, &CompareOutput { methods: reports, sweep })?;
    }
    Ok(())
}
