//! Independent reference computations shared by integration tests.

#![allow(dead_code)]

use mrkm_core::kernels::gram_sym;
use mrkm_core::numerics::Matrix;
use mrkm_core::{Dataset, KernelSpec, OutcomeFit};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Minimizes a quadratic objective by nonlinear conjugate gradients
/// (Polak-Ribiere, restarted every `dim` steps) using central-difference
/// gradients and an exact three-point line search.
pub fn minimize_quadratic(obj: &dyn Fn(&[f64]) -> f64, x0: &[f64], max_iter: usize) -> Vec<f64> {
    let n = x0.len();
    let grad = |x: &[f64]| -> Vec<f64> {
        let h = 1e-3;
        let mut xp = x.to_vec();
        (0..n)
            .map(|i| {
                let orig = xp[i];
                xp[i] = orig + h;
                let fp = obj(&xp);
                xp[i] = orig - h;
                let fm = obj(&xp);
                xp[i] = orig;
                (fp - fm) / (2.0 * h)
            })
            .collect()
    };
    let mut x = x0.to_vec();
    let mut g = grad(&x);
    let mut d: Vec<f64> = g.iter().map(|v| -v).collect();
    for it in 0..max_iter {
        let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if gnorm < 1e-12 {
            break;
        }
        let dmax = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let s = 1.0 / dmax;
        let at = |t: f64| -> f64 {
            let p: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + t * b).collect();
            obj(&p)
        };
        let (f0, fp, fm) = (at(0.0), at(s), at(-s));
        let curv = fp - 2.0 * f0 + fm;
        if curv <= 0.0 {
            break;
        }
        let t = s * (fm - fp) / (2.0 * curv);
        for (a, b) in x.iter_mut().zip(&d) {
            *a += t * b;
        }
        let g_new = grad(&x);
        let beta = if (it + 1) % n == 0 {
            0.0
        } else {
            let num: f64 = g_new.iter().zip(&g).map(|(a, b)| a * (a - b)).sum();
            let den: f64 = g.iter().map(|v| v * v).sum();
            (num / den).max(0.0)
        };
        d = g_new.iter().zip(&d).map(|(gn, dv)| -gn + beta * dv).collect();
        g = g_new;
    }
    x
}

/// `λ αᵀKα` plus the inverse-weighted average of squared residuals.
pub fn wcc_objective(k: &Matrix, ds: &Dataset, pi: &[f64], lambda: f64, alpha: &[f64]) -> f64 {
    let n = ds.n();
    let f = k.mul_vec(alpha).unwrap();
    let mut risk = 0.0;
    for i in 0..n {
        if let Some(y) = ds.y()[i] {
            risk += (y - f[i]).powi(2) / pi[i];
        }
    }
    risk / n as f64 + lambda * alpha.iter().zip(&f).map(|(a, b)| a * b).sum::<f64>()
}

/// `λ αᵀKα` plus the augmented empirical risk written term by term.
pub fn dr_objective(k: &Matrix, ds: &Dataset, pi: &[f64], out: &OutcomeFit, lambda: f64, alpha: &[f64]) -> f64 {
    let n = ds.n();
    let f = k.mul_vec(alpha).unwrap();
    let mut risk = 0.0;
    for i in 0..n {
        let m = if ds.m()[i] { 1.0 } else { 0.0 };
        let ipw = ds.y()[i].map_or(0.0, |y| (y - f[i]).powi(2) / pi[i]);
        let h = out.h_hat(ds.x().row(i), f[i]).unwrap();
        risk += ipw - (m - pi[i]) / pi[i] * h;
    }
    risk / n as f64 + lambda * alpha.iter().zip(&f).map(|(a, b)| a * b).sum::<f64>()
}

/// A well-conditioned random instance: 30 points spread over a 10 x 10
/// square, unit-scale responses, probabilities in [0.2, 1].
pub struct OracleInstance {
    pub ds: Dataset,
    pub pi: Vec<f64>,
    pub kernel: KernelSpec,
    pub k: Matrix,
    pub lambda: f64,
    pub outcome: OutcomeFit,
}

pub fn oracle_instance(seed: u64) -> OracleInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 30;
    let rows: Vec<[f64; 2]> = (0..n).map(|_| [rng.random::<f64>() * 10.0, rng.random::<f64>() * 10.0]).collect();
    let x = Matrix::from_rows(&rows).unwrap();
    let m: Vec<bool> = (0..n).map(|i| i < 3 || rng.random::<f64>() < 0.6).collect();
    let y: Vec<Option<f64>> =
        m.iter().map(|&o| o.then(|| rng.random::<f64>() * 4.0 - 2.0)).collect();
    let pi: Vec<f64> = (0..n).map(|_| 0.2 + 0.8 * rng.random::<f64>()).collect();
    let ds = Dataset::new(x, y, m).unwrap().with_true_pi(pi.clone()).unwrap();
    let kernel = KernelSpec::rbf(1.0).unwrap();
    let k = gram_sym(&kernel, ds.x());
    let outcome = OutcomeFit {
        task: mrkm_core::Task::Regression,
        basis: mrkm_core::BasisSpec::Linear,
        beta: vec![rng.random::<f64>() - 0.5, 0.1 * rng.random::<f64>(), -0.1 * rng.random::<f64>()],
        sigma2: 0.5,
        converged: true,
    };
    OracleInstance { ds, pi, kernel, k, lambda: 0.05, outcome }
}
