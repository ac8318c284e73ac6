use std::fs;
use std::io::BufRead;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mrkm_core::bench::{real_data_protocol, run_plan, BenchPlan, LambdaChoice, Method, RealDataConfig};
use mrkm_core::data::{load_csv, save_csv, TransformTarget};
use mrkm_core::machines::{
    default_lambda_grid, fit_cc, fit_dr, fit_wcc, select_lambda, weighted_risk_with, MachineKind,
};
use mrkm_core::outcome::{fit_classification_outcome, fit_regression_outcome};
use mrkm_core::propensity::fit_glm;
use mrkm_core::simulate::generate;
use mrkm_core::{
    BasisSpec, CsvSchema, Dataset, Error, KernelMachine, KernelSpec, Link, PropensityFit, SettingSpec,
};

#[derive(Parser)]
#[command(name = "mrkm", version, about = "Kernel machines for responses missing at random")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a sample from one of the simulation settings and write it as CSV
    Simulate(SimulateArgs),
    /// Fit a kernel machine and save it
    Fit(FitArgs),
    /// Evaluate a saved machine at the rows of a dataset
    Predict(PredictArgs),
    /// Report plain and inverse-probability-weighted risk of a saved machine
    Eval(EvalArgs),
    /// Run the Monte Carlo comparison and write risk tables
    Bench(BenchArgs),
    /// Repeated random-split evaluation on a CSV dataset
    Realdata(RealdataArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Setting id, 1 to 4
    #[arg(long)]
    setting: u32,
    /// Number of rows
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Also write the true observation probabilities as a `pi` column
    #[arg(long)]
    truth: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Cc,
    Wcc,
    Dr,
}

#[derive(Clone, Copy, ValueEnum)]
enum LinkArg {
    Logit,
    Probit,
}

impl From<LinkArg> for Link {
    fn from(l: LinkArg) -> Link {
        match l {
            LinkArg::Logit => Link::Logit,
            LinkArg::Probit => Link::Probit,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PropensityArg {
    /// GLM fitted to the indicator with the chosen link
    Glm,
    /// The dataset's `pi` column
    Known,
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    Regression,
    Classification,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum)]
    method: MethodArg,
    /// `rbf` (median-heuristic width), `rbf:<gamma>`, or `linear`
    #[arg(long, default_value = "rbf")]
    kernel: String,
    /// A positive value, or `cv` for 5-fold cross-validation over the default grid
    #[arg(long, default_value = "cv", allow_hyphen_values = true)]
    lambda: String,
    /// Propensity link
    #[arg(long, value_enum, default_value = "logit")]
    link: LinkArg,
    #[arg(long, value_enum, default_value = "glm")]
    propensity: PropensityArg,
    /// Outcome basis for dr: linear, setting1, setting2, setting3, setting4
    #[arg(long)]
    outcome_basis: Option<String>,
    #[arg(long, value_enum, default_value = "regression")]
    task: TaskArg,
    /// Link of the classification outcome model
    #[arg(long, value_enum, default_value = "logit")]
    outcome_link: LinkArg,
    /// Seed for the cross-validation folds
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    model_out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// CSV with one column `f`
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// CSV whose `pi` column gives the observation probabilities; defaults to
    /// the data's own `pi` column, else 1
    #[arg(long)]
    pi_from: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4")]
    settings: Vec<u32>,
    #[arg(long, value_delimiter = ',', default_value = "100,200,400,800")]
    ns: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    reps: usize,
    #[arg(long, default_value_t = 10_000)]
    test_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated subset of Reg,CC,WCC-M,WCC-C,DR-M,DR-MR,DR-MM,DRC
    #[arg(long, value_delimiter = ',', default_value = "Reg,CC,WCC-M,WCC-C,DR-M,DR-MR,DR-MM,DRC")]
    methods: Vec<String>,
    /// A positive value, or `cv`
    #[arg(long, default_value = "cv", allow_hyphen_values = true)]
    lambda: String,
    /// Worker threads; 0 uses every core
    #[arg(long, default_value_t = 0)]
    threads: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RealdataArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 100)]
    splits: usize,
    #[arg(long, default_value_t = 200)]
    test_n: usize,
    /// Columns to log-transform; the response column may be named
    #[arg(long, value_delimiter = ',')]
    log_cols: Vec<String>,
    /// Columns to standardize after any log transform
    #[arg(long, value_delimiter = ',')]
    std_cols: Vec<String>,
    /// Feature columns; defaults to every column except m, y and pi
    #[arg(long, value_delimiter = ',')]
    features: Vec<String>,
    #[arg(long, value_enum, default_value = "logit")]
    link: LinkArg,
    /// A positive value, or `cv`
    #[arg(long, default_value = "cv", allow_hyphen_values = true)]
    lambda: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

/// Usage problems exit with 1, data and model problems with 2.
enum Failure {
    Usage(String),
    Data(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e)
    }
}

type CliResult<T> = Result<T, Failure>;

fn usage<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(Failure::Usage(msg.into()))
}

fn parse_lambda(s: &str) -> CliResult<Option<f64>> {
    if s == "cv" {
        return Ok(None);
    }
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(Some(v)),
        _ => usage(format!("invalid value '{s}' for --lambda: expected a positive number or 'cv'")),
    }
}

fn parse_kernel(s: &str, x: &mrkm_core::Matrix) -> CliResult<KernelSpec> {
    if s == "rbf" {
        return Ok(KernelSpec::rbf_median(x)?);
    }
    s.parse().or_else(|_| usage(format!("invalid value '{s}' for --kernel: expected rbf, rbf:<gamma> or linear")))
}

fn write_file(path: &Path, body: &str) -> CliResult<()> {
    fs::write(path, body).map_err(|e| Failure::Data(Error::io(path, e)))
}

fn simulate(a: SimulateArgs) -> CliResult<()> {
    let mut spec = SettingSpec::new(a.setting, a.n, a.seed);
    if a.truth {
        spec = spec.with_truth();
    }
    let ds = generate(&spec)?;
    save_csv(&ds, &a.out)?;
    Ok(())
}

fn propensity(a: &FitArgs, ds: &Dataset) -> CliResult<PropensityFit> {
    Ok(match a.propensity {
        PropensityArg::Glm => fit_glm(ds.x(), ds.m(), a.link.into())?,
        PropensityArg::Known => PropensityFit::known(),
    })
}

fn fit(a: FitArgs) -> CliResult<()> {
    let basis = match (a.method, &a.outcome_basis) {
        (MethodArg::Dr, None) => return usage("--outcome-basis is required when --method is dr"),
        (_, Some(b)) => Some(b.parse::<BasisSpec>().or_else(|_| {
            usage(format!(
                "invalid value '{b}' for --outcome-basis: expected linear, setting1, setting2, setting3 or setting4"
            ))
        })?),
        _ => None,
    };
    let lambda = parse_lambda(&a.lambda)?;
    let ds = load_csv(&a.data, &CsvSchema::default())?;
    let kernel = parse_kernel(&a.kernel, ds.x())?;
    let grid = default_lambda_grid();
    let choose = |kind: MachineKind, pi: Option<&PropensityFit>, out| -> CliResult<f64> {
        match lambda {
            Some(l) => Ok(l),
            None => Ok(select_lambda(&ds, kernel, kind, pi, out, &grid, 5, a.seed)?),
        }
    };
    let machine = match a.method {
        MethodArg::Cc => fit_cc(&ds, kernel, choose(MachineKind::Cc, None, None)?)?,
        MethodArg::Wcc => {
            let pi = propensity(&a, &ds)?;
            fit_wcc(&ds, kernel, choose(MachineKind::Wcc, Some(&pi), None)?, &pi)?
        }
        MethodArg::Dr => {
            let pi = propensity(&a, &ds)?;
            let basis = basis.unwrap_or(BasisSpec::Linear);
            let out = match a.task {
                TaskArg::Regression => fit_regression_outcome(&ds, basis)?,
                TaskArg::Classification => fit_classification_outcome(&ds, basis, a.outcome_link.into())?,
            };
            fit_dr(&ds, kernel, choose(MachineKind::Dr, Some(&pi), Some(&out))?, &pi, &out)?
        }
    };
    machine.save(&a.model_out)?;
    Ok(())
}

fn predict(a: PredictArgs) -> CliResult<()> {
    let machine = KernelMachine::load(&a.model)?;
    let ds = load_csv(&a.data, &CsvSchema::default())?;
    let f = machine.predict(ds.x())?;
    let mut body = String::from("f\n");
    for v in f {
        body.push_str(&format!("{v}\n"));
    }
    write_file(&a.out, &body)
}

fn eval(a: EvalArgs) -> CliResult<()> {
    let machine = KernelMachine::load(&a.model)?;
    let ds = load_csv(&a.data, &CsvSchema::default())?;
    let pi: Vec<f64> = match &a.pi_from {
        Some(p) => {
            let schema = CsvSchema { pi: Some("pi".into()), ..CsvSchema::default() };
            let src = load_csv(p, &schema)?;
            let pi = src
                .true_pi()
                .ok_or_else(|| Error::MissingPropensity(format!("{} has no pi column", p.display())))?;
            if pi.len() != ds.n() {
                return Err(Error::DimensionMismatch { expected: ds.n(), found: pi.len() }.into());
            }
            pi.to_vec()
        }
        None => ds.true_pi().map_or_else(|| vec![1.0; ds.n()], <[f64]>::to_vec),
    };
    let f = machine.predict(ds.x())?;
    let observed = ds.observed_count();
    if observed == 0 {
        return Err(Error::NoCompleteCases.into());
    }
    let mse = ds
        .y()
        .iter()
        .zip(&f)
        .filter_map(|(y, f)| y.map(|y| (y - f).powi(2)))
        .sum::<f64>()
        / observed as f64;
    let weighted = weighted_risk_with(&ds, &f, &pi)?;
    println!("metric,value");
    println!("mse,{mse}");
    println!("weighted_mse,{weighted}");
    Ok(())
}

fn bench(a: BenchArgs) -> CliResult<()> {
    let methods = a
        .methods
        .iter()
        .map(|m| m.parse::<Method>().or_else(|_| usage(format!("invalid value '{m}' for --methods"))))
        .collect::<CliResult<Vec<_>>>()?;
    let lambda = match parse_lambda(&a.lambda)? {
        Some(l) => LambdaChoice::Fixed(l),
        None => LambdaChoice::default(),
    };
    let plan = BenchPlan {
        settings: a.settings,
        ns: a.ns,
        replications: a.reps,
        test_size: a.test_size,
        methods,
        seed: a.seed,
        lambda,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.threads)
        .build()
        .map_err(|e| Failure::Usage(format!("invalid value for --threads: {e}")))?;
    let table = pool.install(|| run_plan(&plan))?;
    table.write_dir(&a.out)?;
    Ok(())
}

fn header(path: &Path) -> CliResult<Vec<String>> {
    let file = fs::File::open(path).map_err(|e| Failure::Data(Error::io(path, e)))?;
    let mut line = String::new();
    std::io::BufReader::new(file)
        .read_line(&mut line)
        .map_err(|e| Failure::Data(Error::io(path, e)))?;
    Ok(line.trim_end().split(',').map(|s| s.trim().to_string()).collect())
}

fn realdata(a: RealdataArgs) -> CliResult<()> {
    let lambda = match parse_lambda(&a.lambda)? {
        Some(l) => LambdaChoice::Fixed(l),
        None => LambdaChoice::default(),
    };
    let features = if a.features.is_empty() {
        header(&a.data)?.into_iter().filter(|h| !["m", "y", "pi"].contains(&h.as_str())).collect()
    } else {
        a.features.clone()
    };
    let schema = CsvSchema { features: features.clone(), ..CsvSchema::default() };
    let ds = load_csv(&a.data, &schema)?;
    let target = |name: &String, flag: &str| -> CliResult<TransformTarget> {
        if name == "y" {
            return Ok(TransformTarget::Response);
        }
        match features.iter().position(|f| f == name) {
            Some(j) => Ok(TransformTarget::Feature(j)),
            None => usage(format!("invalid value '{name}' for {flag}: not a feature or 'y'")),
        }
    };
    let log_cols = a.log_cols.iter().map(|c| target(c, "--log-cols")).collect::<CliResult<_>>()?;
    let std_cols = a.std_cols.iter().map(|c| target(c, "--std-cols")).collect::<CliResult<_>>()?;
    let cfg = RealDataConfig {
        splits: a.splits,
        test_n: a.test_n,
        seed: a.seed,
        log_cols,
        std_cols,
        link: a.link.into(),
        lambda,
    };
    let report = real_data_protocol(&ds, &cfg)?;
    report.write_dir(&a.out)?;
    print!("{}", report.table_csv());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Fit(a) => fit(a),
        Command::Predict(a) => predict(a),
        Command::Eval(a) => eval(a),
        Command::Bench(a) => bench(a),
        Command::Realdata(a) => realdata(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {}: {e}", e.name());
            ExitCode::from(2)
        }
    }
}
