//! Monte Carlo replication harness and the repeated-split real-data protocol.
//!
//! Each replication draws its training sample from its own stream of a
//! per-cell seed, so a table is identical however the work is scheduled.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::{apply_transforms, ColumnTransform, Dataset, TransformTarget};
use crate::error::{Error, Result};
use crate::glm::Link;
use crate::kernels::{gram_sym, KernelSpec};
use crate::machines::{
    argmin_lambda, cv_scores, default_lambda_grid, fit_dr_with, fit_wcc_with, pseudo_response, sign,
    CvTarget, DEFAULT_FOLDS,
};
use crate::numerics::{dot, Cholesky, Matrix};
use crate::outcome::{fit_classification_outcome, fit_regression_outcome, mu_vector, BasisSpec, OutcomeFit};
use crate::propensity::{fit_glm, PropensityFit};
use crate::simulate::{generate, generate_test, is_classification, SettingSpec};

/// Estimators compared in the simulation study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    /// Least squares on complete cases, raw covariates.
    Reg,
    Cc,
    /// WCC with a probit (misspecified) propensity.
    WccM,
    /// WCC with a logit propensity.
    WccC,
    /// DR, probit propensity, linear outcome model.
    DrM,
    /// DR, logit propensity, linear outcome model.
    DrMr,
    /// DR, probit propensity, correct outcome model.
    DrMm,
    /// DR, logit propensity, correct outcome model.
    Drc,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Reg,
        Method::Cc,
        Method::WccM,
        Method::WccC,
        Method::DrM,
        Method::DrMr,
        Method::DrMm,
        Method::Drc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Reg => "Reg",
            Method::Cc => "CC",
            Method::WccM => "WCC-M",
            Method::WccC => "WCC-C",
            Method::DrM => "DR-M",
            Method::DrMr => "DR-MR",
            Method::DrMm => "DR-MM",
            Method::Drc => "DRC",
        }
    }

    fn propensity_link(self) -> Option<Link> {
        match self {
            Method::WccM | Method::DrM | Method::DrMm => Some(Link::Probit),
            Method::WccC | Method::DrMr | Method::Drc => Some(Link::Logit),
            Method::Reg | Method::Cc => None,
        }
    }

    /// `Some(true)` for the correct outcome basis, `Some(false)` for linear.
    fn correct_outcome(self) -> Option<bool> {
        match self {
            Method::DrM | Method::DrMr => Some(false),
            Method::DrMm | Method::Drc => Some(true),
            _ => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LambdaChoice {
    /// Cross-validate over `grid` with `folds` stratified folds.
    Cv { grid: Vec<f64>, folds: usize },
    Fixed(f64),
}

impl Default for LambdaChoice {
    fn default() -> Self {
        LambdaChoice::Cv { grid: default_lambda_grid(), folds: DEFAULT_FOLDS }
    }
}

pub const DEFAULT_TEST_SIZE: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchPlan {
    pub settings: Vec<u32>,
    pub ns: Vec<usize>,
    pub replications: usize,
    pub test_size: usize,
    pub methods: Vec<Method>,
    pub seed: u64,
    pub lambda: LambdaChoice,
}

impl BenchPlan {
    pub fn new(settings: Vec<u32>, ns: Vec<usize>, replications: usize, seed: u64) -> Self {
        BenchPlan {
            settings,
            ns,
            replications,
            test_size: DEFAULT_TEST_SIZE,
            methods: Method::ALL.to_vec(),
            seed,
            lambda: LambdaChoice::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::InvalidArgument("replications must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidArgument("method list is empty".into()));
        }
        if self.settings.is_empty() || self.ns.is_empty() {
            return Err(Error::InvalidArgument("no settings or sample sizes".into()));
        }
        if let Some(&bad) = self.settings.iter().find(|&&s| !(1..=4).contains(&s)) {
            return Err(Error::BadSettingId(bad));
        }
        if self.test_size == 0 || self.ns.contains(&0) {
            return Err(Error::BadSize("sample sizes must be positive".into()));
        }
        match &self.lambda {
            LambdaChoice::Fixed(l) if !(*l > 0.0 && l.is_finite()) => {
                Err(Error::BadGrid(format!("non-positive lambda {l}")))
            }
            LambdaChoice::Cv { grid, .. } if grid.is_empty() => Err(Error::BadGrid("empty grid".into())),
            _ => Ok(()),
        }
    }
}

/// Median, mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub count: usize,
    pub median: f64,
    pub mean: f64,
    pub std: f64,
}

pub fn summarize(values: &[f64]) -> Result<Summary> {
    if values.is_empty() {
        return Err(Error::Empty);
    }
    let k = values.len();
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = if k % 2 == 1 {
        sorted[k / 2]
    } else {
        0.5 * (sorted[k / 2 - 1] + sorted[k / 2])
    };
    let mean = values.iter().sum::<f64>() / k as f64;
    let std = if k == 1 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1) as f64).sqrt()
    };
    Ok(Summary { count: k, median, mean, std })
}

/// Statistics of one (setting, n, method) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub setting: u32,
    pub n: usize,
    pub method: Method,
    pub replications: usize,
    pub failures: usize,
    /// Quadratic test risk; `None` when every replication failed.
    pub risk: Option<Summary>,
    /// Test misclassification rate of `sign(f)`, classification settings only.
    pub misclassification: Option<Summary>,
    /// Per-replication risks in replication order, failures skipped.
    pub risks: Vec<f64>,
    /// First failure message, if any.
    pub first_error: Option<String>,
}

impl Cell {
    pub fn successes(&self) -> usize {
        self.replications - self.failures
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiskTable {
    pub cells: Vec<Cell>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl RiskTable {
    pub fn get(&self, setting: u32, n: usize, method: Method) -> Option<&Cell> {
        self.cells.iter().find(|c| c.setting == setting && c.n == n && c.method == method)
    }

    pub fn mean(&self, setting: u32, n: usize, method: Method) -> Option<f64> {
        self.get(setting, n, method).and_then(|c| c.risk).map(|s| s.mean)
    }

    fn keys(&self) -> Vec<(u32, usize)> {
        let mut keys: Vec<(u32, usize)> = Vec::new();
        for c in &self.cells {
            if !keys.contains(&(c.setting, c.n)) {
                keys.push((c.setting, c.n));
            }
        }
        keys
    }

    fn methods(&self) -> Vec<Method> {
        let mut ms: Vec<Method> = Vec::new();
        for c in &self.cells {
            if !ms.contains(&c.method) {
                ms.push(c.method);
            }
        }
        ms
    }

    /// Long form: `setting,n,method,stat,value`.
    pub fn long_csv(&self) -> String {
        let mut s = String::from("setting,n,method,stat,value\n");
        for c in &self.cells {
            let mut row = |stat: &str, v: String| {
                s.push_str(&format!("{},{},{},{},{}\n", c.setting, c.n, c.method, stat, v));
            };
            row("median", fmt_opt(c.risk.map(|r| r.median)));
            row("mean", fmt_opt(c.risk.map(|r| r.mean)));
            row("std", fmt_opt(c.risk.map(|r| r.std)));
            row("count", c.successes().to_string());
            if let Some(mc) = c.misclassification {
                row("misclass_median", mc.median.to_string());
                row("misclass_mean", mc.mean.to_string());
                row("misclass_std", mc.std.to_string());
            }
        }
        s
    }

    /// One row per (setting, n, statistic), one column per method.
    pub fn wide_csv(&self) -> String {
        let methods = self.methods();
        let mut s = String::from("setting,n,stat");
        for m in &methods {
            s.push(',');
            s.push_str(m.name());
        }
        s.push('\n');
        type Getter = fn(&Cell) -> Option<f64>;
        let stats: [(&str, Getter); 6] = [
            ("median", |c| c.risk.map(|r| r.median)),
            ("mean", |c| c.risk.map(|r| r.mean)),
            ("std", |c| c.risk.map(|r| r.std)),
            ("misclass_median", |c| c.misclassification.map(|r| r.median)),
            ("misclass_mean", |c| c.misclassification.map(|r| r.mean)),
            ("misclass_std", |c| c.misclassification.map(|r| r.std)),
        ];
        for (setting, n) in self.keys() {
            for (i, (stat, get)) in stats.iter().enumerate() {
                if i >= 3 && !is_classification(setting) {
                    continue;
                }
                s.push_str(&format!("{setting},{n},{stat}"));
                for &m in &methods {
                    s.push(',');
                    s.push_str(&fmt_opt(self.get(setting, n, m).and_then(get)));
                }
                s.push('\n');
            }
        }
        s
    }

    /// `setting,n,method,replications,successes,failures,first_error`.
    pub fn failures_csv(&self) -> String {
        let mut s = String::from("setting,n,method,replications,successes,failures,first_error\n");
        for c in &self.cells {
            let msg = c.first_error.as_deref().unwrap_or("").replace(['"', '\n'], " ");
            s.push_str(&format!(
                "{},{},{},{},{},{},\"{}\"\n",
                c.setting,
                c.n,
                c.method,
                c.replications,
                c.successes(),
                c.failures,
                msg
            ));
        }
        s
    }

    /// Writes `risk_long.csv`, `risk_wide.csv` and `failures.csv` into `dir`.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, body) in [
            ("risk_long.csv", self.long_csv()),
            ("risk_wide.csv", self.wide_csv()),
            ("failures.csv", self.failures_csv()),
        ] {
            let path = dir.join(name);
            fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent seed from `seed` and a label.
pub fn mix_seed(seed: u64, label: u64) -> u64 {
    splitmix64(seed ^ splitmix64(label))
}

/// Seed shared by the training streams and the test set of one (setting, n).
pub fn cell_seed(master: u64, setting: u32, n: usize) -> u64 {
    mix_seed(mix_seed(master, u64::from(setting)), n as u64)
}

type Outcome = std::result::Result<(f64, Option<f64>), String>;

/// Lazily fitted nuisance models shared by the methods of one replication.
struct Nuisance<'a> {
    ds: &'a Dataset,
    setting: u32,
    probit: Option<std::result::Result<PropensityFit, String>>,
    logit: Option<std::result::Result<PropensityFit, String>>,
    linear: Option<std::result::Result<OutcomeFit, String>>,
    correct: Option<std::result::Result<OutcomeFit, String>>,
}

impl<'a> Nuisance<'a> {
    fn new(ds: &'a Dataset, setting: u32) -> Self {
        Nuisance { ds, setting, probit: None, logit: None, linear: None, correct: None }
    }

    fn propensity(&mut self, link: Link) -> std::result::Result<PropensityFit, String> {
        let ds = self.ds;
        let slot = match link {
            Link::Probit => &mut self.probit,
            Link::Logit => &mut self.logit,
        };
        slot.get_or_insert_with(|| fit_glm(ds.x(), ds.m(), link).map_err(|e| e.to_string()))
            .clone()
    }

    fn outcome(&mut self, correct: bool) -> std::result::Result<OutcomeFit, String> {
        let (ds, setting) = (self.ds, self.setting);
        let slot = if correct { &mut self.correct } else { &mut self.linear };
        slot.get_or_insert_with(|| {
            let fit = if correct {
                BasisSpec::correct_for_setting(setting).and_then(|basis| {
                    if is_classification(setting) {
                        fit_classification_outcome(ds, basis, Link::Probit)
                    } else {
                        fit_regression_outcome(ds, basis)
                    }
                })
            } else if is_classification(setting) {
                fit_classification_outcome(ds, BasisSpec::Linear, Link::Logit)
            } else {
                fit_regression_outcome(ds, BasisSpec::Linear)
            };
            fit.map_err(|e| e.to_string())
        })
        .clone()
    }
}

/// CV targets for kernel methods; `Err` entries mark methods whose nuisance
/// models failed.
fn kernel_targets(
    ds: &Dataset,
    methods: &[Method],
    nuis: &mut Nuisance<'_>,
) -> Vec<(Method, std::result::Result<CvTarget, String>)> {
    methods
        .iter()
        .filter(|&&m| m != Method::Reg)
        .map(|&m| {
            let target = (|| {
                let Some(link) = m.propensity_link() else {
                    return Ok(CvTarget::Cc);
                };
                let pi = nuis.propensity(link)?.pi_for(ds).map_err(|e| e.to_string())?;
                match m.correct_outcome() {
                    None => Ok(CvTarget::Wcc { pi }),
                    Some(correct) => {
                        let out = nuis.outcome(correct)?;
                        let mu = mu_vector(&out, ds.x()).map_err(|e| e.to_string())?;
                        let pseudo = pseudo_response(ds, &pi, &mu);
                        Ok(CvTarget::Dr { pi, pseudo })
                    }
                }
            })();
            (m, target)
        })
        .collect()
}

/// Chooses λ for every available target in one CV pass.
fn choose_lambdas(
    ds: &Dataset,
    k: &Matrix,
    targets: &[(Method, std::result::Result<CvTarget, String>)],
    choice: &LambdaChoice,
    seed: u64,
) -> Vec<std::result::Result<f64, String>> {
    match choice {
        LambdaChoice::Fixed(l) => targets.iter().map(|(_, t)| t.as_ref().map(|_| *l).map_err(Clone::clone)).collect(),
        LambdaChoice::Cv { grid, folds } => {
            let ok: Vec<CvTarget> = targets.iter().filter_map(|(_, t)| t.as_ref().ok().cloned()).collect();
            let scores = if ok.is_empty() || grid.len() == 1 {
                Ok(vec![vec![0.0; grid.len()]; ok.len()])
            } else {
                cv_scores(ds, k, &ok, grid, *folds, seed).map_err(|e| e.to_string())
            };
            let mut next = 0;
            targets
                .iter()
                .map(|(_, t)| {
                    let _ = t.as_ref().map_err(Clone::clone)?;
                    let scores = scores.as_ref().map_err(Clone::clone)?;
                    let s = &scores[next];
                    next += 1;
                    argmin_lambda(grid, s).ok_or_else(|| "every grid value failed to fit".to_string())
                })
                .collect()
        }
    }
}

/// Coefficients over all training rows (CC machines are expanded with zeros).
fn fit_target(
    ds: &Dataset,
    kernel: KernelSpec,
    k: &Matrix,
    target: &CvTarget,
    lambda: f64,
) -> Result<Vec<f64>> {
    match target {
        CvTarget::Cc => {
            let obs = ds.complete_indices();
            if obs.is_empty() {
                return Err(Error::NoCompleteCases);
            }
            let mut a = k.select(&obs, &obs);
            a.add_diag(obs.len() as f64 * lambda);
            let y: Vec<f64> = ds.y().iter().flatten().copied().collect();
            let a_obs = Cholesky::factor(&a)?.solve(&y)?;
            let mut alpha = vec![0.0; ds.n()];
            for (&i, v) in obs.iter().zip(a_obs) {
                alpha[i] = v;
            }
            Ok(alpha)
        }
        CvTarget::Wcc { pi } => Ok(fit_wcc_with(ds, kernel, k, lambda, pi)?.alpha),
        CvTarget::Dr { pseudo, .. } => Ok(fit_dr_with(ds, kernel, k, lambda, pseudo)?.alpha),
    }
}

/// Fits the kernel methods and returns, per method, either its coefficient
/// vector over the training rows or a failure message.
fn fit_kernel_methods(
    ds: &Dataset,
    kernel: KernelSpec,
    methods: &[Method],
    nuis: &mut Nuisance<'_>,
    choice: &LambdaChoice,
    seed: u64,
) -> Vec<(Method, std::result::Result<Vec<f64>, String>)> {
    let k = gram_sym(&kernel, ds.x());
    let targets = kernel_targets(ds, methods, nuis);
    let lambdas = choose_lambdas(ds, &k, &targets, choice, seed);
    targets
        .into_iter()
        .zip(lambdas)
        .map(|((m, t), l)| {
            let alpha = t.and_then(|t| {
                let l = l?;
                fit_target(ds, kernel, &k, &t, l).map_err(|e| e.to_string())
            });
            (m, alpha)
        })
        .collect()
}

/// Test predictions of several coefficient vectors over the same support,
/// computing each kernel row once.
fn predict_many(kernel: &KernelSpec, support: &Matrix, alphas: &[&[f64]], x: &Matrix) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::with_capacity(x.rows()); alphas.len()];
    let mut row = vec![0.0; support.rows()];
    for q in x.row_iter() {
        for (r, s) in row.iter_mut().zip(support.row_iter()) {
            *r = kernel.eval_unchecked(s, q);
        }
        for (o, a) in out.iter_mut().zip(alphas) {
            o.push(dot(&row, a));
        }
    }
    out
}

fn test_scores(f: &[f64], y: &[f64], classification: bool) -> (f64, Option<f64>) {
    let k = y.len() as f64;
    let risk = f.iter().zip(y).map(|(a, b)| (b - a).powi(2)).sum::<f64>() / k;
    let mis = classification.then(|| f.iter().zip(y).filter(|(a, b)| sign(**a) != **b).count() as f64 / k);
    (risk, mis)
}

fn run_replication(plan: &BenchPlan, setting: u32, n: usize, rep: usize, test: &Dataset) -> Vec<(Method, Outcome)> {
    let seed = cell_seed(plan.seed, setting, n);
    let classification = is_classification(setting);
    let test_y: Vec<f64> = test.y().iter().flatten().copied().collect();
    let train = match generate(&SettingSpec::new(setting, n, seed).with_stream(rep as u64)) {
        Ok(ds) => ds,
        Err(e) => return plan.methods.iter().map(|&m| (m, Err(e.to_string()))).collect(),
    };
    let mut nuis = Nuisance::new(&train, setting);

    let mut results: Vec<(Method, Outcome)> = Vec::with_capacity(plan.methods.len());
    if plan.methods.contains(&Method::Reg) {
        let reg = fit_regression_outcome(&train, BasisSpec::Linear)
            .and_then(|fit| mu_vector(&fit, test.x()))
            .map(|f| test_scores(&f, &test_y, classification))
            .map_err(|e| e.to_string());
        results.push((Method::Reg, reg));
    }

    let kernel_methods: Vec<Method> = plan.methods.iter().copied().filter(|&m| m != Method::Reg).collect();
    if !kernel_methods.is_empty() {
        match KernelSpec::rbf_median(train.x()) {
            Err(e) => results.extend(kernel_methods.iter().map(|&m| (m, Err(e.to_string())))),
            Ok(kernel) => {
                let fits =
                    fit_kernel_methods(&train, kernel, &kernel_methods, &mut nuis, &plan.lambda, mix_seed(seed, rep as u64));
                let ok: Vec<&[f64]> = fits.iter().filter_map(|(_, a)| a.as_ref().ok().map(Vec::as_slice)).collect();
                let mut preds = predict_many(&kernel, train.x(), &ok, test.x()).into_iter();
                for (m, a) in fits {
                    let r = a.map(|_| test_scores(&preds.next().unwrap_or_default(), &test_y, classification));
                    results.push((m, r));
                }
            }
        }
    }
    plan.methods
        .iter()
        .map(|&m| {
            let r = results.iter().find(|(rm, _)| *rm == m).map(|(_, r)| r.clone());
            (m, r.unwrap_or_else(|| Err("method not run".into())))
        })
        .collect()
}

/// Runs every (setting, n, replication) of the plan on the current rayon
/// pool. The table does not depend on the number of threads.
pub fn run_plan(plan: &BenchPlan) -> Result<RiskTable> {
    plan.validate()?;
    let cells: Vec<(u32, usize)> =
        plan.settings.iter().flat_map(|&s| plan.ns.iter().map(move |&n| (s, n))).collect();
    let tests: Vec<Dataset> = cells
        .par_iter()
        .map(|&(s, n)| generate_test(&SettingSpec::new(s, n, cell_seed(plan.seed, s, n)), plan.test_size))
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, usize)> =
        (0..cells.len()).flat_map(|c| (0..plan.replications).map(move |r| (c, r))).collect();
    let outcomes: Vec<Vec<(Method, Outcome)>> = jobs
        .par_iter()
        .map(|&(c, r)| run_replication(plan, cells[c].0, cells[c].1, r, &tests[c]))
        .collect();

    let mut table = Vec::new();
    for (c, &(setting, n)) in cells.iter().enumerate() {
        let reps = &outcomes[c * plan.replications..(c + 1) * plan.replications];
        for (j, &method) in plan.methods.iter().enumerate() {
            let mut risks = Vec::new();
            let mut mis = Vec::new();
            let mut failures = 0;
            let mut first_error = None;
            for rep in reps {
                match &rep[j].1 {
                    Ok((r, mc)) => {
                        risks.push(*r);
                        mis.extend(mc);
                    }
                    Err(e) => {
                        failures += 1;
                        first_error.get_or_insert_with(|| e.clone());
                    }
                }
            }
            table.push(Cell {
                setting,
                n,
                method,
                replications: plan.replications,
                failures,
                risk: summarize(&risks).ok(),
                misclassification: summarize(&mis).ok(),
                risks,
                first_error,
            });
        }
    }
    Ok(RiskTable { cells: table })
}

/// Methods of the real-data comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RealMethod {
    Reg,
    Cc,
    Wcc,
    Dr,
}

impl RealMethod {
    pub const ALL: [RealMethod; 4] = [RealMethod::Reg, RealMethod::Cc, RealMethod::Wcc, RealMethod::Dr];

    pub fn name(self) -> &'static str {
        match self {
            RealMethod::Reg => "Reg",
            RealMethod::Cc => "CC",
            RealMethod::Wcc => "WCC",
            RealMethod::Dr => "DR",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RealDataConfig {
    pub splits: usize,
    pub test_n: usize,
    pub seed: u64,
    /// Columns log-transformed before standardization.
    pub log_cols: Vec<TransformTarget>,
    pub std_cols: Vec<TransformTarget>,
    pub link: Link,
    pub lambda: LambdaChoice,
}

impl Default for RealDataConfig {
    fn default() -> Self {
        RealDataConfig {
            splits: 100,
            test_n: 200,
            seed: 0,
            log_cols: Vec::new(),
            std_cols: Vec::new(),
            link: Link::Logit,
            lambda: LambdaChoice::default(),
        }
    }
}

/// Test MSE and inverse-probability-weighted test MSE.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RealScores {
    pub method: RealMethod,
    pub mse: f64,
    pub weighted_mse: f64,
}

/// Fits every method on `train` and scores it on the fully observed `test`.
///
/// The propensity is a GLM in the covariates; when every training response
/// is observed it is `π̂ ≡ 1`. The DR outcome model is linear least squares.
pub fn real_data_eval(train: &Dataset, test: &Dataset, cfg: &RealDataConfig) -> Result<Vec<RealScores>> {
    if test.observed_count() != test.n() {
        return Err(Error::InvalidArgument("test responses must all be observed".into()));
    }
    if test.d() != train.d() {
        return Err(Error::DimensionMismatch { expected: train.d(), found: test.d() });
    }
    let pi_fit = if train.observed_count() == train.n() {
        PropensityFit::constant(1.0)?
    } else {
        fit_glm(train.x(), train.m(), cfg.link)?
    };
    let pi_test = pi_fit.predict_pi(test.x())?;
    let y: Vec<f64> = test.y().iter().flatten().copied().collect();
    let outcome = fit_regression_outcome(train, BasisSpec::Linear)?;
    let kernel = KernelSpec::rbf_median(train.x())?;

    let pi = pi_fit.pi_for(train)?;
    let pseudo = pseudo_response(train, &pi, &mu_vector(&outcome, train.x())?);
    let targets = vec![
        (Method::Cc, Ok(CvTarget::Cc)),
        (Method::WccC, Ok(CvTarget::Wcc { pi: pi.clone() })),
        (Method::DrMr, Ok(CvTarget::Dr { pi, pseudo })),
    ];
    let k = gram_sym(&kernel, train.x());
    let lambdas = choose_lambdas(train, &k, &targets, &cfg.lambda, mix_seed(cfg.seed, 0x5EED));
    let mut alphas = Vec::new();
    for ((_, t), l) in targets.iter().zip(lambdas) {
        let t = t.as_ref().map_err(|e| Error::DegenerateData(e.clone()))?;
        let l = l.map_err(Error::BadGrid)?;
        alphas.push(fit_target(train, kernel, &k, t, l)?);
    }
    let refs: Vec<&[f64]> = alphas.iter().map(Vec::as_slice).collect();
    let mut preds = vec![mu_vector(&outcome, test.x())?];
    preds.extend(predict_many(&kernel, train.x(), &refs, test.x()));

    Ok(RealMethod::ALL
        .iter()
        .zip(preds)
        .map(|(&method, f)| {
            let k = y.len() as f64;
            let sq: Vec<f64> = f.iter().zip(&y).map(|(a, b)| (b - a).powi(2)).collect();
            RealScores {
                method,
                mse: sq.iter().sum::<f64>() / k,
                weighted_mse: sq.iter().zip(&pi_test).map(|(s, p)| s / p).sum::<f64>() / k,
            }
        })
        .collect())
}

/// Summaries over random splits, laid out like the published table.
#[derive(Debug, Clone, PartialEq)]
pub struct RealDataReport {
    pub methods: Vec<RealMethod>,
    pub mse: Vec<Summary>,
    pub weighted_mse: Vec<Summary>,
    pub splits: Vec<Vec<RealScores>>,
}

impl RealDataReport {
    /// Rows `stat,weighting`; one column per method.
    pub fn table_csv(&self) -> String {
        let mut s = String::from("stat,weighting");
        for m in &self.methods {
            s.push(',');
            s.push_str(m.name());
        }
        s.push('\n');
        type Getter = fn(&Summary) -> f64;
        let stats: [(&str, Getter); 3] = [("mean", |x| x.mean), ("median", |x| x.median), ("std", |x| x.std)];
        for (stat, get) in stats {
            for (label, col) in [("weighted", &self.weighted_mse), ("not weighted", &self.mse)] {
                s.push_str(&format!("{stat},{label}"));
                for v in col {
                    s.push_str(&format!(",{}", get(v)));
                }
                s.push('\n');
            }
        }
        s
    }

    /// `split,method,mse,weighted_mse`.
    pub fn splits_csv(&self) -> String {
        let mut s = String::from("split,method,mse,weighted_mse\n");
        for (i, row) in self.splits.iter().enumerate() {
            for r in row {
                s.push_str(&format!("{},{},{},{}\n", i, r.method.name(), r.mse, r.weighted_mse));
            }
        }
        s
    }

    /// Writes `realdata_table.csv` and `realdata_splits.csv` into `dir`.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, body) in [("realdata_table.csv", self.table_csv()), ("realdata_splits.csv", self.splits_csv())] {
            let path = dir.join(name);
            let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            f.write_all(body.as_bytes()).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

/// One random split: `test_n` complete cases are held out, the rest train.
fn real_split(ds: &Dataset, test_n: usize, seed: u64) -> Result<(Dataset, Dataset)> {
    let mut obs = ds.complete_indices();
    if test_n == 0 || test_n >= obs.len() {
        return Err(Error::BadSize(format!("test size {test_n} needs more than {} complete cases", obs.len())));
    }
    obs.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut test = obs[..test_n].to_vec();
    test.sort_unstable();
    let train: Vec<usize> = (0..ds.n()).filter(|i| test.binary_search(i).is_err()).collect();
    Ok((ds.subset(&train), ds.subset(&test)))
}

/// Repeated-split protocol. Transforms are fitted on each training part and
/// applied unchanged to its test part, and risks are on the transformed scale.
pub fn real_data_protocol(ds: &Dataset, cfg: &RealDataConfig) -> Result<RealDataReport> {
    if cfg.splits == 0 {
        return Err(Error::InvalidArgument("splits must be at least 1".into()));
    }
    let transforms: Vec<ColumnTransform> = cfg
        .log_cols
        .iter()
        .map(|&t| ColumnTransform::log(t))
        .chain(cfg.std_cols.iter().map(|&t| ColumnTransform::standardize(t)))
        .collect();
    let splits: Vec<Vec<RealScores>> = (0..cfg.splits)
        .into_par_iter()
        .map(|i| {
            let (train, test) = real_split(ds, cfg.test_n, mix_seed(cfg.seed, i as u64))?;
            let (train, fitted) = apply_transforms(&train, &transforms, true)?;
            let (test, _) = apply_transforms(&test, &fitted, false)?;
            let cfg = RealDataConfig { seed: mix_seed(cfg.seed, i as u64), ..cfg.clone() };
            real_data_eval(&train, &test, &cfg)
        })
        .collect::<Result<_>>()?;
    let methods = RealMethod::ALL.to_vec();
    let column = |j: usize, f: fn(&RealScores) -> f64| -> Result<Summary> {
        summarize(&splits.iter().map(|s| f(&s[j])).collect::<Vec<_>>())
    };
    Ok(RealDataReport {
        mse: (0..methods.len()).map(|j| column(j, |r| r.mse)).collect::<Result<_>>()?,
        weighted_mse: (0..methods.len()).map(|j| column(j, |r| r.weighted_mse)).collect::<Result<_>>()?,
        methods,
        splits,
    })
}
