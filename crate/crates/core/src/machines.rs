//! Quadratic-loss kernel machines for missing responses.
//!
//! All three estimators minimize `λ‖f‖² + (1/N) Σ loss_i` over functions
//! `f(x) = Σ α_i k(x_i, x)`, and each has a closed form for `α`:
//!
//! * complete case (CC): ordinary kernel ridge on the `n₁` complete rows,
//!   `(K₁ + n₁λI) α = y₁`;
//! * weighted complete case (WCC): with `W = diag(m_i / π̂_i)`,
//!   `(nλI + WK) α = W y`, so `α_i = 0` wherever `m_i = 0`;
//! * doubly robust (DR): with the pseudo-response
//!   `ỹ = W y + (I - W) μ̂`, `(K + nλI) α = ỹ`.
//!
//! Regularization is against the averaged loss, so a printed un-averaged
//! formula with penalty `λ'` corresponds to `λ = λ'/n` here.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernels::{gram, gram_sym, KernelSpec};
use crate::numerics::{dot, Cholesky, Lu, Matrix};
use crate::outcome::{mu_vector, OutcomeFit};
use crate::propensity::PropensityFit;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MachineKind {
    Cc,
    Wcc,
    Dr,
}

impl fmt::Display for MachineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MachineKind::Cc => "cc",
            MachineKind::Wcc => "wcc",
            MachineKind::Dr => "dr",
        })
    }
}

impl FromStr for MachineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cc" => Ok(MachineKind::Cc),
            "wcc" => Ok(MachineKind::Wcc),
            "dr" => Ok(MachineKind::Dr),
            _ => Err(Error::InvalidArgument(format!("unknown method '{s}'"))),
        }
    }
}

/// A fitted machine `f(x) = Σ alpha_i k(support_i, x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMachine {
    pub kind: MachineKind,
    pub kernel: KernelSpec,
    pub support: Matrix,
    pub alpha: Vec<f64>,
    pub lambda: f64,
}

impl KernelMachine {
    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        if x.cols() != self.support.cols() {
            return Err(Error::DimensionMismatch { expected: self.support.cols(), found: x.cols() });
        }
        Ok(x.row_iter()
            .map(|q| {
                self.support
                    .row_iter()
                    .zip(&self.alpha)
                    .filter(|(_, &a)| a != 0.0)
                    .map(|(s, &a)| a * self.kernel.eval_unchecked(s, q))
                    .sum()
            })
            .collect())
    }

    /// `sign(f(x))` with `sign(0) = +1`.
    pub fn classify(&self, x: &Matrix) -> Result<Vec<f64>> {
        Ok(self.predict(x)?.into_iter().map(sign).collect())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        text.parse()
    }

    /// Flat text form; every float is written with 17 significant digits.
    pub fn to_text(&self) -> String {
        use std::fmt::Write;
        let mut s = String::new();
        let _ = writeln!(s, "mrkm-model 1");
        let _ = writeln!(s, "kind {}", self.kind);
        match self.kernel {
            KernelSpec::Rbf { gamma } => {
                let _ = writeln!(s, "kernel rbf {gamma:.16e}");
            }
            KernelSpec::Linear => {
                let _ = writeln!(s, "kernel linear");
            }
        }
        let _ = writeln!(s, "lambda {:.16e}", self.lambda);
        let _ = writeln!(s, "support {} {}", self.support.rows(), self.support.cols());
        for r in self.support.row_iter() {
            let line: Vec<String> = r.iter().map(|v| format!("{v:.16e}")).collect();
            let _ = writeln!(s, "{}", line.join(" "));
        }
        let _ = writeln!(s, "alpha {}", self.alpha.len());
        for a in &self.alpha {
            let _ = writeln!(s, "{a:.16e}");
        }
        s
    }
}

impl FromStr for KernelMachine {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let bad = |msg: &str| Error::ModelFormat(msg.to_string());
        let num = |t: &str| t.parse::<f64>().map_err(|_| Error::ModelFormat(format!("bad number '{t}'")));
        let count = |t: &str| t.parse::<usize>().map_err(|_| Error::ModelFormat(format!("bad count '{t}'")));
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let mut next = |what: &str| lines.next().ok_or_else(|| Error::ModelFormat(format!("missing {what}")));

        if next("header")? != "mrkm-model 1" {
            return Err(bad("unrecognized header"));
        }
        let kind = next("kind")?
            .strip_prefix("kind ")
            .ok_or_else(|| bad("expected 'kind'"))?
            .parse::<MachineKind>()
            .map_err(|e| Error::ModelFormat(e.to_string()))?;
        let kline = next("kernel")?;
        let kparts: Vec<&str> = kline.split_whitespace().collect();
        let kernel = match kparts.as_slice() {
            ["kernel", "linear"] => KernelSpec::Linear,
            ["kernel", "rbf", g] => KernelSpec::rbf(num(g)?).map_err(|e| Error::ModelFormat(e.to_string()))?,
            _ => return Err(bad("expected 'kernel rbf <gamma>' or 'kernel linear'")),
        };
        let lambda = num(next("lambda")?.strip_prefix("lambda ").ok_or_else(|| bad("expected 'lambda'"))?)?;
        let sline = next("support")?;
        let sparts: Vec<&str> = sline.split_whitespace().collect();
        let (rows, cols) = match sparts.as_slice() {
            ["support", r, c] => (count(r)?, count(c)?),
            _ => return Err(bad("expected 'support <rows> <cols>'")),
        };
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let vals = next("support row")?.split_whitespace().map(num).collect::<Result<Vec<_>>>()?;
            if vals.len() != cols {
                return Err(bad("support row has wrong width"));
            }
            data.extend(vals);
        }
        let aline = next("alpha")?;
        let alen = count(aline.strip_prefix("alpha ").ok_or_else(|| bad("expected 'alpha <len>'"))?)?;
        if alen != rows {
            return Err(bad("alpha length differs from support rows"));
        }
        let alpha = (0..alen).map(|_| next("alpha value").and_then(num)).collect::<Result<Vec<_>>>()?;
        if next("end").is_ok() {
            return Err(bad("trailing content"));
        }
        Ok(KernelMachine {
            kind,
            kernel,
            support: Matrix::new(rows, cols, data)?,
            alpha,
            lambda,
        })
    }
}

pub fn sign(v: f64) -> f64 {
    if v >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("lambda must be positive, got {lambda}")))
    }
}

/// `m_i / π_i`.
fn ipw_weights(m: &[bool], pi: &[f64]) -> Vec<f64> {
    m.iter().zip(pi).map(|(&o, &p)| if o { 1.0 / p } else { 0.0 }).collect()
}

/// `W y + (I - W) μ`.
pub fn pseudo_response(ds: &Dataset, pi: &[f64], mu: &[f64]) -> Vec<f64> {
    let y = ds.y_zero_filled();
    ipw_weights(ds.m(), pi)
        .iter()
        .zip(y.iter().zip(mu))
        .map(|(&w, (&yi, &mi))| w * yi + (1.0 - w) * mi)
        .collect()
}

/// Kernel ridge `(K[S, S] + c I) α = b` over index set `s`.
fn ridge_on(k: &Matrix, s: &[usize], b: &[f64], c: f64) -> Result<Vec<f64>> {
    let mut a = k.select(s, s);
    a.add_diag(c);
    Cholesky::factor(&a)?.solve(b)
}

/// Solves the reduced WCC system on the observed set `obs`:
/// `(c I + diag(w_O) K[O, O]) α_O = w_O y_O`.
fn wcc_on(k: &Matrix, obs: &[usize], w_obs: &[f64], y_obs: &[f64], c: f64) -> Result<Vec<f64>> {
    let mut a = k.select(obs, obs);
    for (i, &wi) in w_obs.iter().enumerate() {
        a.row_mut(i).iter_mut().for_each(|v| *v *= wi);
    }
    a.add_diag(c);
    let b: Vec<f64> = w_obs.iter().zip(y_obs).map(|(w, y)| w * y).collect();
    Lu::factor(&a)?.solve(&b)
}

/// Complete-case kernel ridge.
pub fn fit_cc(ds: &Dataset, kernel: KernelSpec, lambda: f64) -> Result<KernelMachine> {
    check_lambda(lambda)?;
    let cc = ds.complete_indices();
    if cc.is_empty() {
        return Err(Error::NoCompleteCases);
    }
    let support = ds.x().select_rows(&cc);
    let k = gram_sym(&kernel, &support);
    let y: Vec<f64> = ds.y().iter().flatten().copied().collect();
    let all: Vec<usize> = (0..cc.len()).collect();
    let alpha = ridge_on(&k, &all, &y, cc.len() as f64 * lambda)?;
    Ok(KernelMachine { kind: MachineKind::Cc, kernel, support, alpha, lambda })
}

pub(crate) fn fit_wcc_with(
    ds: &Dataset,
    kernel: KernelSpec,
    k: &Matrix,
    lambda: f64,
    pi: &[f64],
) -> Result<KernelMachine> {
    check_lambda(lambda)?;
    let obs = ds.complete_indices();
    if obs.is_empty() {
        return Err(Error::NoCompleteCases);
    }
    let w: Vec<f64> = obs.iter().map(|&i| 1.0 / pi[i]).collect();
    let y: Vec<f64> = obs.iter().map(|&i| ds.y()[i].unwrap_or(0.0)).collect();
    let a_obs = wcc_on(k, &obs, &w, &y, ds.n() as f64 * lambda)?;
    let mut alpha = vec![0.0; ds.n()];
    for (&i, a) in obs.iter().zip(a_obs) {
        alpha[i] = a;
    }
    Ok(KernelMachine { kind: MachineKind::Wcc, kernel, support: ds.x().clone(), alpha, lambda })
}

/// Inverse-probability-weighted complete-case machine.
pub fn fit_wcc(ds: &Dataset, kernel: KernelSpec, lambda: f64, pi: &PropensityFit) -> Result<KernelMachine> {
    check_lambda(lambda)?;
    let pi = pi.pi_for(ds)?;
    if ds.observed_count() == 0 {
        return Err(Error::NoCompleteCases);
    }
    let k = gram_sym(&kernel, ds.x());
    fit_wcc_with(ds, kernel, &k, lambda, &pi)
}

pub(crate) fn fit_dr_with(
    ds: &Dataset,
    kernel: KernelSpec,
    k: &Matrix,
    lambda: f64,
    pseudo: &[f64],
) -> Result<KernelMachine> {
    check_lambda(lambda)?;
    let all: Vec<usize> = (0..ds.n()).collect();
    let alpha = ridge_on(k, &all, pseudo, ds.n() as f64 * lambda)?;
    Ok(KernelMachine { kind: MachineKind::Dr, kernel, support: ds.x().clone(), alpha, lambda })
}

/// Doubly-robust machine: kernel ridge on the augmented pseudo-response.
pub fn fit_dr(
    ds: &Dataset,
    kernel: KernelSpec,
    lambda: f64,
    pi: &PropensityFit,
    out: &OutcomeFit,
) -> Result<KernelMachine> {
    check_lambda(lambda)?;
    let pi = pi.pi_for(ds)?;
    let mu = mu_vector(out, ds.x())?;
    let pseudo = pseudo_response(ds, &pi, &mu);
    let k = gram_sym(&kernel, ds.x());
    fit_dr_with(ds, kernel, &k, lambda, &pseudo)
}

pub fn predict(machine: &KernelMachine, x: &Matrix) -> Result<Vec<f64>> {
    machine.predict(x)
}

fn check_len(ds: &Dataset, f_vals: &[f64]) -> Result<()> {
    if f_vals.len() == ds.n() {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected: ds.n(), found: f_vals.len() })
    }
}

/// `(1/n) Σ m_i (y_i - f_i)² / π_i` from raw probability values.
pub fn weighted_risk_with(ds: &Dataset, f_vals: &[f64], pi: &[f64]) -> Result<f64> {
    check_len(ds, f_vals)?;
    check_len(ds, pi)?;
    let total: f64 = ds
        .y()
        .iter()
        .zip(f_vals.iter().zip(pi))
        .filter_map(|(y, (f, p))| y.map(|y| (y - f).powi(2) / p))
        .sum();
    Ok(total / ds.n() as f64)
}

/// Inverse-probability-weighted empirical quadratic risk.
pub fn weighted_empirical_risk(ds: &Dataset, f_vals: &[f64], pi: &PropensityFit) -> Result<f64> {
    check_len(ds, f_vals)?;
    weighted_risk_with(ds, f_vals, &pi.pi_for(ds)?)
}

/// Augmented empirical risk
/// `(1/n) Σ [m_i L_i / π_i - (m_i - π_i)/π_i · Ĥ(x_i, f_i)]`; may be negative.
pub fn dr_empirical_risk(ds: &Dataset, f_vals: &[f64], pi: &PropensityFit, out: &OutcomeFit) -> Result<f64> {
    check_len(ds, f_vals)?;
    let pi = pi.pi_for(ds)?;
    let mut total = 0.0;
    for i in 0..ds.n() {
        let h = out.h_hat(ds.x().row(i), f_vals[i])?;
        let m = if ds.m()[i] { 1.0 } else { 0.0 };
        let ipw = ds.y()[i].map_or(0.0, |y| (y - f_vals[i]).powi(2) / pi[i]);
        total += ipw - (m - pi[i]) / pi[i] * h;
    }
    Ok(total / ds.n() as f64)
}

/// Ten points, geometric from 1e-6 to 1.
pub fn default_lambda_grid() -> Vec<f64> {
    (0..10).map(|i| 10f64.powf(-6.0 + 6.0 * f64::from(i) / 9.0)).collect()
}

pub const DEFAULT_FOLDS: usize = 5;

/// What a cross-validation run fits on each training fold.
#[derive(Debug, Clone)]
pub enum CvTarget {
    /// Complete-case ridge, scored by unweighted held-out squared error.
    Cc,
    /// WCC with these per-row probabilities (also used for scoring).
    Wcc { pi: Vec<f64> },
    /// DR with these probabilities and pseudo-responses.
    Dr { pi: Vec<f64>, pseudo: Vec<f64> },
}

/// Fold labels, stratified on the indicator.
fn stratified_folds(m: &[bool], folds: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut obs: Vec<usize> = (0..m.len()).filter(|&i| m[i]).collect();
    let mut mis: Vec<usize> = (0..m.len()).filter(|&i| !m[i]).collect();
    obs.shuffle(&mut rng);
    mis.shuffle(&mut rng);
    let mut label = vec![0; m.len()];
    for (pos, &i) in obs.iter().chain(&mis).enumerate() {
        label[i] = pos % folds;
    }
    label
}

fn validate_cv(ds: &Dataset, grid: &[f64], folds: usize) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::BadGrid("empty grid".into()));
    }
    if let Some(bad) = grid.iter().find(|&&l| !(l > 0.0 && l.is_finite())) {
        return Err(Error::BadGrid(format!("non-positive lambda {bad}")));
    }
    if folds < 2 {
        return Err(Error::BadGrid(format!("need at least 2 folds, got {folds}")));
    }
    let found = ds.observed_count();
    if folds > found {
        return Err(Error::TooFewCompleteCases { needed: folds, found });
    }
    Ok(())
}

/// Mean held-out score of every target at every grid value:
/// `scores[target][lambda]`. Failed solves score `+inf`.
///
/// DR targets share one factorization per (fold, λ). Folds run in parallel;
/// sums are taken in fold order so results do not depend on scheduling.
pub fn cv_scores(
    ds: &Dataset,
    k: &Matrix,
    targets: &[CvTarget],
    grid: &[f64],
    folds: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    validate_cv(ds, grid, folds)?;
    let labels = stratified_folds(ds.m(), folds, seed);
    let y = ds.y_zero_filled();
    let per_fold: Vec<Vec<Vec<f64>>> = (0..folds)
        .into_par_iter()
        .map(|fold| {
            let train: Vec<usize> = (0..ds.n()).filter(|&i| labels[i] != fold).collect();
            let held: Vec<usize> = (0..ds.n()).filter(|&i| labels[i] == fold).collect();
            fold_scores(ds, k, &y, targets, grid, &train, &held)
        })
        .collect();
    let mut scores = vec![vec![0.0; grid.len()]; targets.len()];
    for fold in &per_fold {
        for (t, row) in fold.iter().enumerate() {
            for (l, v) in row.iter().enumerate() {
                scores[t][l] += v / folds as f64;
            }
        }
    }
    Ok(scores)
}

fn fold_scores(
    ds: &Dataset,
    k: &Matrix,
    y: &[f64],
    targets: &[CvTarget],
    grid: &[f64],
    train: &[usize],
    held: &[usize],
) -> Vec<Vec<f64>> {
    let m = ds.m();
    let n_train = train.len() as f64;
    let obs_train: Vec<usize> = train.iter().copied().filter(|&i| m[i]).collect();
    let held_obs: Vec<usize> = held.iter().copied().filter(|&i| m[i]).collect();
    let k_ho_obs = k.select(&held_obs, &obs_train);
    let k_ho_train = k.select(&held_obs, train);
    let y_obs: Vec<f64> = obs_train.iter().map(|&i| y[i]).collect();

    let score = |f: &[f64], pi: Option<&[f64]>| -> f64 {
        let s: f64 = held_obs
            .iter()
            .zip(f)
            .map(|(&i, fi)| (y[i] - fi).powi(2) / pi.map_or(1.0, |p| p[i]))
            .sum();
        s / held.len() as f64
    };
    let predict = |kx: &Matrix, a: &[f64]| -> Vec<f64> { kx.row_iter().map(|r| dot(r, a)).collect() };

    let any_dr = targets.iter().any(|t| matches!(t, CvTarget::Dr { .. }));
    let mut out = vec![vec![f64::INFINITY; grid.len()]; targets.len()];
    for (l, &lambda) in grid.iter().enumerate() {
        let dr_chol = if any_dr {
            let mut a = k.select(train, train);
            a.add_diag(n_train * lambda);
            Cholesky::factor(&a).ok()
        } else {
            None
        };
        for (t, target) in targets.iter().enumerate() {
            let f = match target {
                CvTarget::Cc => {
                    let all: Vec<usize> = (0..obs_train.len()).collect();
                    let kk = k.select(&obs_train, &obs_train);
                    ridge_on(&kk, &all, &y_obs, obs_train.len() as f64 * lambda)
                        .map(|a| (predict(&k_ho_obs, &a), None))
                }
                CvTarget::Wcc { pi } => {
                    let w: Vec<f64> = obs_train.iter().map(|&i| 1.0 / pi[i]).collect();
                    wcc_on(k, &obs_train, &w, &y_obs, n_train * lambda)
                        .map(|a| (predict(&k_ho_obs, &a), Some(pi.as_slice())))
                }
                CvTarget::Dr { pi, pseudo } => match &dr_chol {
                    Some(ch) => {
                        let b: Vec<f64> = train.iter().map(|&i| pseudo[i]).collect();
                        ch.solve(&b).map(|a| (predict(&k_ho_train, &a), Some(pi.as_slice())))
                    }
                    None => Err(Error::NotPositiveDefinite { row: 0, pivot: 0.0 }),
                },
            };
            if let Ok((f, pi)) = f {
                let s = score(&f, pi);
                if s.is_finite() {
                    out[t][l] = s;
                }
            }
        }
    }
    out
}

/// Grid value with the smallest score; ties go to the larger λ.
pub fn argmin_lambda(grid: &[f64], scores: &[f64]) -> Option<f64> {
    let mut best: Option<(f64, f64)> = None;
    for (&l, &s) in grid.iter().zip(scores) {
        if !s.is_finite() {
            continue;
        }
        best = match best {
            Some((bl, bs)) if s > bs || (s == bs && l < bl) => Some((bl, bs)),
            _ => Some((l, s)),
        };
    }
    best.map(|(l, _)| l)
}

/// K-fold cross-validated choice of λ. Folds are stratified on the
/// indicator; held-out folds are scored by the inverse-probability-weighted
/// squared error using the full-data propensity fit (unweighted for CC).
#[allow(clippy::too_many_arguments)]
pub fn select_lambda(
    ds: &Dataset,
    kernel: KernelSpec,
    kind: MachineKind,
    pi: Option<&PropensityFit>,
    out: Option<&OutcomeFit>,
    grid: &[f64],
    folds: usize,
    seed: u64,
) -> Result<f64> {
    validate_cv(ds, grid, folds)?;
    if grid.len() == 1 {
        return Ok(grid[0]);
    }
    let need_pi = || pi.ok_or_else(|| Error::InvalidArgument(format!("{kind} needs a propensity fit")));
    let target = match kind {
        MachineKind::Cc => CvTarget::Cc,
        MachineKind::Wcc => CvTarget::Wcc { pi: need_pi()?.pi_for(ds)? },
        MachineKind::Dr => {
            let pi = need_pi()?.pi_for(ds)?;
            let out = out.ok_or_else(|| Error::InvalidArgument("dr needs an outcome fit".into()))?;
            let mu = mu_vector(out, ds.x())?;
            let pseudo = pseudo_response(ds, &pi, &mu);
            CvTarget::Dr { pi, pseudo }
        }
    };
    let k = gram_sym(&kernel, ds.x());
    let scores = cv_scores(ds, &k, &[target], grid, folds, seed)?;
    argmin_lambda(grid, &scores[0])
        .ok_or_else(|| Error::BadGrid("every grid value failed to fit".into()))
}

/// Cross-kernel between new points and a training design, for reuse across
/// several machines that share support rows.
pub fn cross_gram(kernel: &KernelSpec, x: &Matrix, support: &Matrix) -> Result<Matrix> {
    gram(kernel, x, support)
}
