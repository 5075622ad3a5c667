use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use noisyplr::experiments::{
    self, AreConfig, AreFit, BenchConfig, BenchEta, Correlation, Coupling, ErrorRule, SyntheticSpec,
    Table4Config,
};
use noisyplr::io::{self, Dataset, Manifest};
use noisyplr::labels::generate_dataset_counts;
use noisyplr::model::{adaptive_weights, fit_pilot_or_ridge, CoefficientMeta};
use noisyplr::solver::{make_partition, EtaMode, PartitionSpec};
use noisyplr::tuning::{lambda_path, Hbic, PathOptions, RefitHbic, Selector};
use noisyplr::{AdmmConfig, CountVector, DesignMatrix, NoiseModel};

/// Adaptive-LASSO logistic regression on aggregated expert votes.
#[derive(Parser, Debug)]
#[command(name = "noisyplr", version, about)]
struct Cli {
    /// Output directory for CSV/JSON artifacts and the run manifest.
    #[arg(long, global = true, env = "NOISYPLR_OUT", default_value = "noisyplr-out")]
    out: PathBuf,
    /// JSON file of flag values; flags given on the command line take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit at a fixed lambda or at the HBIC-selected point of a path.
    Fit(FitArgs),
    /// Draw expert counts for a dataset and write them out.
    Labels(LabelArgs),
    /// Compute the full regularization path and its scores.
    Tune(FitArgs),
    /// Simulated relative efficiency for one (m, alpha0, n) cell.
    Are(AreArgs),
    /// Timing and accuracy across worker counts.
    BenchParallel(BenchArgs),
    /// Relative-efficiency table over an (m, alpha0, n) grid.
    Table1(Table1Args),
    /// Relative efficiency on a real dataset over an (m, alpha0) grid.
    Table4(Table4Args),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
enum NoiseKind {
    Truth,
    Multinomial,
    Dm,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
enum EtaKind {
    Shared,
    Sum,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
enum FitKind {
    Alasso,
    Hbic,
    Mle,
    Oracle,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
enum SelectorArg {
    Hbic,
    RefitHbic,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
enum RuleArg {
    Threshold,
    Randomized,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
enum CouplingArg {
    Comonotone,
    Independent,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
enum CorrelationArg {
    Equi,
    Ar1,
}

impl From<CorrelationArg> for Correlation {
    fn from(c: CorrelationArg) -> Self {
        match c {
            CorrelationArg::Equi => Correlation::Equicorrelated,
            CorrelationArg::Ar1 => Correlation::Ar1,
        }
    }
}

/// Where the features come from.
#[derive(Args, Debug, Serialize)]
struct DataArgs {
    /// LIBSVM file. Without it a synthetic Gaussian design is generated.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Column count override for LIBSVM input.
    #[arg(long)]
    dims: Option<usize>,
    /// Rows of the synthetic design.
    #[arg(long, default_value_t = 2000)]
    n: usize,
    /// Pairwise correlation of the synthetic design.
    #[arg(long, default_value_t = 0.75)]
    rho: f64,
    #[arg(long, value_enum, default_value_t = CorrelationArg::Equi)]
    correlation: CorrelationArg,
    /// Append a constant column that is left unpenalized.
    #[arg(long)]
    intercept: bool,
}

#[derive(Args, Debug, Serialize)]
struct NoiseArgs {
    #[arg(long, value_enum, default_value_t = NoiseKind::Truth)]
    noise: NoiseKind,
    /// Number of experts.
    #[arg(long, default_value_t = 1)]
    m: u32,
    #[arg(long, default_value_t = 1.0)]
    alpha0: f64,
}

impl NoiseArgs {
    fn model(&self) -> Result<NoiseModel> {
        let model = match self.noise {
            NoiseKind::Truth => NoiseModel::Truth,
            NoiseKind::Multinomial => NoiseModel::Multinomial { m: self.m },
            NoiseKind::Dm => NoiseModel::DirichletMultinomial {
                m: self.m,
                alpha0: self.alpha0,
            },
        };
        model.validate()?;
        Ok(model)
    }
}

#[derive(Args, Debug, Serialize)]
struct SolverArgs {
    /// Augmentation parameter. Defaults to 0.01 per expert.
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long, default_value_t = 1e-2)]
    c0: f64,
    /// Linearization constant; estimated from the data when omitted.
    #[arg(long = "eta-const")]
    eta: Option<f64>,
    #[arg(long, default_value_t = 1e-6)]
    eps_abs: f64,
    #[arg(long, default_value_t = 1e-5)]
    eps_rel: f64,
    #[arg(long, default_value_t = 5000)]
    max_iter: usize,
}

impl SolverArgs {
    fn config(&self, m: u32) -> AdmmConfig {
        AdmmConfig {
            mu: self.mu.unwrap_or(0.01 * f64::from(m)),
            c0: self.c0,
            eta: self.eta,
            eps_abs: self.eps_abs,
            eps_rel: self.eps_rel,
            max_iter: self.max_iter,
            ..AdmmConfig::default()
        }
    }

    /// Per-expert settings for the simulation harnesses.
    fn harness(&self) -> AdmmConfig {
        AdmmConfig {
            mu: self.mu.unwrap_or(0.01),
            ..self.config(1)
        }
    }
}

#[derive(Args, Debug, Serialize)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    noise: NoiseArgs,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Fixed penalty level; skips the path search.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, default_value_t = 50)]
    grid_size: usize,
    #[arg(long, default_value_t = 1e-4)]
    min_ratio: f64,
    #[arg(long, value_enum, default_value_t = SelectorArg::Hbic)]
    selector: SelectorArg,
    /// Adaptive-weight exponent.
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long, default_value_t = 1e8)]
    weight_cap: f64,
    /// Worker threads for the final fit.
    #[arg(long = "G", alias = "shards", default_value_t = 1)]
    shards: usize,
    /// How the worker linearization constants are combined.
    #[arg(long = "eta", value_enum, default_value_t = EtaKind::Sum)]
    eta_mode: EtaKind,
}

#[derive(Args, Debug, Serialize)]
struct LabelArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    noise: NoiseArgs,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args, Debug, Serialize)]
struct AreArgs {
    #[arg(long, default_value_t = 5)]
    m: u32,
    #[arg(long, default_value_t = 1.0)]
    alpha0: f64,
    #[arg(long, default_value_t = 2000)]
    n: usize,
    #[arg(long, default_value_t = 100)]
    reps: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[command(flatten)]
    sim: SimArgs,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args, Debug, Serialize)]
struct SimArgs {
    #[arg(long, value_enum, default_value_t = FitKind::Alasso)]
    fit: FitKind,
    /// Penalty level for `--fit alasso`; defaults to n^(1/4).
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, value_enum, default_value_t = RuleArg::Threshold)]
    rule: RuleArg,
    #[arg(long, value_enum, default_value_t = CouplingArg::Comonotone)]
    coupling: CouplingArg,
    /// Rows of the shared evaluation design.
    #[arg(long, default_value_t = 100_000)]
    n_eval: usize,
    #[arg(long, default_value_t = 0.75)]
    rho: f64,
    #[arg(long, value_enum, default_value_t = CorrelationArg::Equi)]
    correlation: CorrelationArg,
}

impl SimArgs {
    fn fit(&self) -> AreFit {
        match self.fit {
            FitKind::Alasso => AreFit::Alasso { lambda: self.lambda },
            FitKind::Hbic => AreFit::AlassoHbic,
            FitKind::Mle => AreFit::Mle,
            FitKind::Oracle => AreFit::Oracle,
        }
    }

    fn rule(&self) -> ErrorRule {
        match self.rule {
            RuleArg::Threshold => ErrorRule::Threshold,
            RuleArg::Randomized => ErrorRule::Randomized,
        }
    }

    fn coupling(&self) -> Coupling {
        match self.coupling {
            CouplingArg::Comonotone => Coupling::Comonotone,
            CouplingArg::Independent => Coupling::Independent,
        }
    }

    fn are_config(&self, n: usize, m: u32, alpha0: f64, reps: usize, seed: u64, admm: AdmmConfig) -> AreConfig {
        AreConfig {
            rho: self.rho,
            correlation: self.correlation.into(),
            n_eval: self.n_eval,
            rule: self.rule(),
            coupling: self.coupling(),
            fit: self.fit(),
            admm,
            ..AreConfig::new(n, m, alpha0, reps, seed)
        }
    }
}

#[derive(Args, Debug, Serialize)]
struct BenchArgs {
    #[arg(long, default_value_t = 100_000)]
    n: usize,
    /// Comma-separated worker counts.
    #[arg(long = "G", value_delimiter = ',', default_value = "1,2,4")]
    shards: Vec<usize>,
    #[arg(long, default_value_t = 1)]
    reps: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long = "eta", value_enum, default_value_t = EtaKind::Shared)]
    eta_mode: EtaKind,
    /// Penalty level; defaults to n^(1/4).
    #[arg(long)]
    lambda: Option<f64>,
    #[command(flatten)]
    noise: NoiseArgs,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args, Debug, Serialize)]
struct Table1Args {
    #[arg(long, value_delimiter = ',', default_value = "5,10,50")]
    ms: Vec<u32>,
    #[arg(long, value_delimiter = ',', default_value = "1,10,100,1000")]
    alphas: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "500,1000,2000")]
    ns: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    reps: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Also write coefficient-versus-m curves and a gnuplot script.
    #[arg(long)]
    curves: bool,
    #[command(flatten)]
    sim: SimArgs,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args, Debug, Serialize)]
struct Table4Args {
    /// LIBSVM file, e.g. w8a.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    dims: Option<usize>,
    #[arg(long, default_value_t = 40_000)]
    n_train: usize,
    #[arg(long, value_delimiter = ',', default_value = "5,10")]
    ms: Vec<u32>,
    #[arg(long, value_delimiter = ',', default_value = "1,10")]
    alphas: Vec<f64>,
    #[arg(long, default_value_t = 20)]
    reps: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[command(flatten)]
    sim: SimArgs,
    #[command(flatten)]
    solver: SolverArgs,
}

/// Errors that should be reported with usage text and exit status 2.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// Insert `--key value` pairs from a JSON config for every key not already
/// present on the command line. Arrays become comma-separated lists and
/// `true` becomes a bare flag.
fn merge_config(argv: Vec<String>) -> Result<Vec<String>> {
    let Some(pos) = argv.iter().position(|a| a == "--config" || a.starts_with("--config=")) else {
        return Ok(argv);
    };
    let path = match argv[pos].split_once('=') {
        Some((_, p)) => p.to_string(),
        None => argv
            .get(pos + 1)
            .cloned()
            .ok_or_else(|| UsageError("--config needs a path".into()))?,
    };
    let text = fs::read_to_string(&path)
        .map_err(|e| UsageError(format!("cannot read config {path}: {e}")))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).with_context(|| format!("config {path} is not valid JSON"))?;
    let obj = value
        .as_object()
        .ok_or_else(|| UsageError(format!("config {path} must be a JSON object")))?;
    let present = |flag: &str| {
        argv.iter()
            .any(|a| a == flag || a.strip_prefix(flag).is_some_and(|rest| rest.starts_with('=')))
    };
    let mut extra = Vec::new();
    for (key, val) in obj {
        let flag = if key == "G" {
            "--G".to_string()
        } else {
            format!("--{}", key.replace('_', "-"))
        };
        if present(&flag) {
            continue;
        }
        match val {
            serde_json::Value::Bool(true) => extra.push(flag),
            serde_json::Value::Bool(false) | serde_json::Value::Null => {}
            serde_json::Value::Array(items) => {
                let joined: Vec<String> = items.iter().map(json_scalar).collect();
                extra.push(flag);
                extra.push(joined.join(","));
            }
            other => {
                extra.push(flag);
                extra.push(json_scalar(other));
            }
        }
    }
    let mut merged = argv;
    merged.extend(extra);
    Ok(merged)
}

fn json_scalar(v: &serde_json::Value) -> String {
    match v {
        serde_json::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn load_data(args: &DataArgs, seed: u64) -> Result<Dataset> {
    let mut data = match &args.data {
        Some(path) => {
            if !path.exists() {
                return Err(UsageError(format!("data file {} does not exist", path.display())).into());
            }
            io::read_libsvm_file(path, args.dims)
                .with_context(|| format!("reading {}", path.display()))?
        }
        None => {
            let spec = SyntheticSpec {
                rho: args.rho,
                correlation: args.correlation.into(),
                ..SyntheticSpec::new(args.n, seed)
            };
            let (x, y) = experiments::gen_synthetic(&spec)?;
            Dataset { x, y }
        }
    };
    if args.intercept {
        data.x = data.x.with_intercept();
    }
    Ok(data)
}

/// Counts for `data` under the requested noise model. Non-truth models draw
/// from the unpenalized fit of the observed labels.
fn make_counts(data: &Dataset, noise: &NoiseArgs, seed: u64) -> Result<CountVector> {
    let model = noise.model()?;
    if model == NoiseModel::Truth {
        return Ok(CountVector::from_labels(&data.y)?);
    }
    let beta_ref = experiments::estimate_beta_star(&data.x, &data.y)?;
    Ok(generate_dataset_counts(&data.x, &beta_ref, &model, seed, Some(&data.y))?)
}

fn selector(kind: SelectorArg) -> &'static dyn Selector {
    match kind {
        SelectorArg::Hbic => &Hbic,
        SelectorArg::RefitHbic => &RefitHbic,
    }
}

fn write_csv_file(path: &Path, write: impl FnOnce(fs::File) -> noisyplr::Result<()>) -> Result<()> {
    let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    write(file)?;
    Ok(())
}

fn finish(out: &Path, mut manifest: Manifest, outputs: &[&str]) -> Result<()> {
    manifest.outputs = outputs.iter().map(|s| s.to_string()).collect();
    manifest.write(out)?;
    for name in outputs {
        println!("{}", out.join(name).display());
    }
    Ok(())
}

fn run_fit(args: &FitArgs, out: &Path, manifest: Manifest, path_only: bool) -> Result<()> {
    let data = load_data(&args.data, args.seed)?;
    let s = make_counts(&data, &args.noise, args.seed)?;
    let x: &DesignMatrix = &data.x;
    let config = args.solver.config(s.m());

    let pilot = fit_pilot_or_ridge(x, &s)?;
    if let Some(ridge) = pilot.ridge {
        eprintln!("note: pilot fit needed a ridge penalty of {ridge:e}; the classes look separable");
    }
    let mut weights = adaptive_weights(&pilot.coefficients, args.gamma, args.weight_cap)?;
    if args.data.intercept {
        weights.set_unpenalized(x.ncols() - 1);
    }

    let mut outputs = Vec::new();
    let lambda = match args.lambda {
        Some(l) if !path_only => l,
        _ => {
            let opts = PathOptions {
                grid_size: args.grid_size,
                min_ratio: args.min_ratio,
                warm_start: true,
            };
            let tuning = lambda_path(x, &s, &weights, &config, &opts, selector(args.selector))?;
            write_csv_file(&out.join("tuning.csv"), |f| tuning.write_csv(f))?;
            outputs.push("tuning.csv");
            tuning.chosen_lambda()
        }
    };

    let partition = make_partition(x.nrows(), &PartitionSpec::Balanced(args.shards))?;
    let eta_mode = match args.eta_mode {
        EtaKind::Shared => EtaMode::Shared(noisyplr::solver::serial_eta(x, &config)?),
        EtaKind::Sum => EtaMode::SumShards,
    };
    let fit = if args.shards == 1 {
        noisyplr::solve(x, &s, lambda, &weights, &config, None)?
    } else {
        noisyplr::solve_parallel(x, &s, lambda, &weights, &config, &partition, eta_mode, None)?
    };
    if !fit.converged {
        eprintln!("warning: solver stopped after {} iterations without converging", fit.iterations);
    }
    let meta = CoefficientMeta {
        gamma: Some(args.gamma),
        lambda: Some(lambda),
    };
    fs::write(out.join("coefficients.json"), fit.coefficients.to_json(meta)? + "\n")?;
    outputs.push("coefficients.json");
    let shards = (args.shards > 1).then_some(args.shards);
    write_csv_file(&out.join("trace.csv"), |f| fit.trace.write_csv(f, shards))?;
    outputs.push("trace.csv");
    println!(
        "lambda {lambda:.6e}  support {:?}  iterations {}  converged {}",
        fit.coefficients.support(),
        fit.iterations,
        fit.converged
    );
    finish(out, manifest, &outputs)
}

fn run_labels(args: &LabelArgs, out: &Path, manifest: Manifest) -> Result<()> {
    let data = load_data(&args.data, args.seed)?;
    let s = make_counts(&data, &args.noise, args.seed)?;
    let file = fs::File::create(out.join("counts.txt"))?;
    s.write_to(std::io::BufWriter::new(file))?;
    if args.data.data.is_none() {
        let file = fs::File::create(out.join("data.libsvm"))?;
        io::write_libsvm(&data.x, &data.y, std::io::BufWriter::new(file))?;
        return finish(out, manifest, &["counts.txt", "data.libsvm"]);
    }
    finish(out, manifest, &["counts.txt"])
}

fn run_are(args: &AreArgs, out: &Path, manifest: Manifest) -> Result<()> {
    let cfg = args
        .sim
        .are_config(args.n, args.m, args.alpha0, args.reps, args.seed, args.solver.harness());
    let est = experiments::simulate_are(&cfg)?;
    if est.flagged {
        eprintln!("warning: the noisy fit's mean excess error is not positive; the ratio is not meaningful");
    }
    write_csv_file(&out.join("are.csv"), |f| experiments::write_are_csv(std::slice::from_ref(&est), f))?;
    println!(
        "m {} alpha0 {} n {}: simulated {:.3} (se {:.3}), theoretical {:.4}",
        est.m, est.alpha0, est.n, est.simulated, est.se, est.theoretical
    );
    finish(out, manifest, &["are.csv"])
}

fn run_bench(args: &BenchArgs, out: &Path, manifest: Manifest) -> Result<()> {
    let cfg = BenchConfig {
        eta: match args.eta_mode {
            EtaKind::Shared => BenchEta::Shared,
            EtaKind::Sum => BenchEta::SumShards,
        },
        lambda: args.lambda,
        noise: args.noise.model()?,
        admm: args.solver.harness(),
        ..BenchConfig::new(args.n, args.shards.clone(), args.reps, args.seed)
    };
    let (rows, _) = experiments::run_parallel_bench(&cfg)?;
    write_csv_file(&out.join("bench.csv"), |f| experiments::write_bench_csv(&rows, f))?;
    for row in &rows {
        let r = &row.report;
        println!(
            "G {:>3}  FP {:.2}  FN {:.2}  AE {:.4}  Ite {:.1}  time {:.3}s",
            row.shards, r.fp, r.fn_, r.ae, r.ite, r.wall_time
        );
    }
    finish(out, manifest, &["bench.csv"])
}

fn run_table1(args: &Table1Args, out: &Path, manifest: Manifest) -> Result<()> {
    let mut cells = Vec::new();
    for &m in &args.ms {
        for &a in &args.alphas {
            for &n in &args.ns {
                cells.push((m, a, n));
            }
        }
    }
    let base = args.sim.are_config(2000, 1, 1.0, args.reps, args.seed, args.solver.harness());
    let rows = experiments::run_table_are(&cells, &base)?;
    write_csv_file(&out.join("table1.csv"), |f| experiments::write_are_csv(&rows, f))?;
    let mut outputs = vec!["table1.csv"];
    if args.curves {
        let spec = SyntheticSpec {
            rho: args.sim.rho,
            correlation: args.sim.correlation.into(),
            ..SyntheticSpec::new(*args.ns.last().unwrap_or(&2000), args.seed)
        };
        let points = experiments::coefficient_curves(&spec, &args.ms, &args.alphas, args.reps.min(20), &args.solver.harness())?;
        write_csv_file(&out.join("curves.csv"), |f| experiments::write_curves_csv(&points, f))?;
        let support: Vec<usize> = (0..spec.beta_star.len())
            .filter(|&j| spec.beta_star[j] != 0.0)
            .map(|j| j + 1)
            .collect();
        fs::write(out.join("curves.gp"), experiments::gnuplot_script("curves.csv", &args.alphas, &support))?;
        outputs.extend(["curves.csv", "curves.gp"]);
    }
    finish(out, manifest, &outputs)
}

fn run_table4(args: &Table4Args, out: &Path, manifest: Manifest) -> Result<()> {
    if !args.data.exists() {
        return Err(UsageError(format!("data file {} does not exist", args.data.display())).into());
    }
    let data = io::read_libsvm_file(&args.data, args.dims)?;
    let mut cells = Vec::new();
    for &m in &args.ms {
        for &a in &args.alphas {
            cells.push((m, a));
        }
    }
    let cfg = Table4Config {
        n_train: args.n_train,
        cells,
        reps: args.reps,
        seed: args.seed,
        fit: args.sim.fit(),
        coupling: args.sim.coupling(),
        rule: args.sim.rule(),
        admm: args.solver.harness(),
    };
    let rows = experiments::run_table4(&data.x, &data.y, &cfg)?;
    write_csv_file(&out.join("table4.csv"), |f| experiments::write_are_csv(&rows, f))?;
    finish(out, manifest, &["table4.csv"])
}

fn run(argv: Vec<String>) -> Result<()> {
    let argv = merge_config(argv)?;
    let cli = Cli::try_parse_from(&argv)?;
    fs::create_dir_all(&cli.out)
        .with_context(|| format!("creating output directory {}", cli.out.display()))?;
    let out = cli.out.as_path();
    let manifest = |name: &str, config: serde_json::Value, seeds: Vec<u64>| {
        Manifest::new(name, argv.clone(), config, seeds)
    };
    match &cli.command {
        Command::Fit(a) => run_fit(a, out, manifest("fit", serde_json::to_value(a)?, vec![a.seed]), false),
        Command::Tune(a) => run_fit(a, out, manifest("tune", serde_json::to_value(a)?, vec![a.seed]), true),
        Command::Labels(a) => run_labels(a, out, manifest("labels", serde_json::to_value(a)?, vec![a.seed])),
        Command::Are(a) => run_are(a, out, manifest("are", serde_json::to_value(a)?, vec![a.seed])),
        Command::BenchParallel(a) => {
            run_bench(a, out, manifest("bench-parallel", serde_json::to_value(a)?, vec![a.seed]))
        }
        Command::Table1(a) => run_table1(a, out, manifest("table1", serde_json::to_value(a)?, vec![a.seed])),
        Command::Table4(a) => run_table4(a, out, manifest("table4", serde_json::to_value(a)?, vec![a.seed])),
    }
}

fn main() -> ExitCode {
    match run(std::env::args().collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            if let Some(clap_err) = err.downcast_ref::<clap::Error>() {
                let _ = clap_err.print();
                return ExitCode::from(clap_err.exit_code() as u8);
            }
            eprintln!("error: {err:#}");
            if err.downcast_ref::<UsageError>().is_some() {
                eprintln!("\nRun `noisyplr --help` for usage.");
                return ExitCode::from(2);
            }
            ExitCode::from(1)
        }
    }
}
