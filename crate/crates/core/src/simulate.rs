//! The four simulation designs with missing-at-random responses.
//!
//! Every draw comes from a ChaCha8 stream keyed by `(seed, stream)`, so a
//! replication can be regenerated in isolation and in any order.
//!
//! | id | covariates fed to learners | response | observation model |
//! |----|----------------------------|----------|-------------------|
//! | 1  | `(x, u2..u5)`              | `exp(x) + Σu + ε` | piecewise logistic in `x` |
//! | 2  | `(x1, x2)`                 | `sign(x2 - 0.16 x1² - 1 + ε)` | logistic in `1.5 (x2 - x1)` |
//! | 3  | `(z, x1..x5)`              | `z + h5(x) + ε` | logistic in `mean(x)` |
//! | 4  | `(z, x1..x10)`             | `z + h10(x) + ε` | logistic in `mean(x)` |

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::glm::logistic;
use crate::numerics::Matrix;

/// Stream reserved for held-out test sets.
pub const TEST_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SettingSpec {
    pub id: u32,
    pub n: usize,
    pub seed: u64,
    /// Attach the exact observation probabilities as the dataset's `pi` column.
    pub include_truth: bool,
    /// Independent substream of `seed`; replications use their index.
    pub stream: u64,
}

impl SettingSpec {
    pub fn new(id: u32, n: usize, seed: u64) -> Self {
        SettingSpec { id, n, seed, include_truth: false, stream: 0 }
    }

    pub fn with_truth(mut self) -> Self {
        self.include_truth = true;
        self
    }

    pub fn with_stream(mut self, stream: u64) -> Self {
        self.stream = stream;
        self
    }
}

/// Number of learner-visible covariates in a setting.
pub fn feature_dim(id: u32) -> Result<usize> {
    match id {
        1 => Ok(5),
        2 => Ok(2),
        3 => Ok(6),
        4 => Ok(11),
        _ => Err(Error::BadSettingId(id)),
    }
}

/// Whether the setting has `{-1, 1}` labels.
pub fn is_classification(id: u32) -> bool {
    id == 2
}

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn beta_5_3(rng: &mut ChaCha8Rng) -> f64 {
    let a: f64 = Gamma::new(5.0, 1.0).expect("valid shape").sample(rng);
    let b: f64 = Gamma::new(3.0, 1.0).expect("valid shape").sample(rng);
    a / (a + b)
}

fn normal(rng: &mut ChaCha8Rng, sd: f64) -> f64 {
    let e: f64 = StandardNormal.sample(rng);
    sd * e
}

/// Signal term of settings 3 (`p = 5`) and 4 (`p = 10`); `x` is 1-based.
fn signal(x: &[f64], p: usize) -> f64 {
    let x = |j: usize| x[j - 1];
    let mut h = 10.0 * x(1).cos() - 15.0 * x(2).powi(2) + 10.0 * (-x(3)).exp() * x(4)
        - 8.0 * x(5).sin() * x(3).cos()
        + 20.0 * x(1) * x(5);
    if p == 10 {
        h += 9.0 * x(6) * x(7).sin() - 8.0 * x(6).cos() * x(7)
            + 20.0 * x(8) * x(9).sin() * x(10).sin()
            - 15.0 * x(8).powi(3)
            - 10.0 * x(8) * x(9)
            - x(10).exp() * x(10).cos();
    }
    h
}

/// Exact `P(m = 1 | x)` at a learner-visible covariate row.
pub fn true_pi(id: u32, x_row: &[f64]) -> Result<f64> {
    let d = feature_dim(id)?;
    if x_row.len() != d {
        return Err(Error::DimensionMismatch { expected: d, found: x_row.len() });
    }
    Ok(match id {
        1 => {
            let x = x_row[0];
            if x <= 2.0 {
                1.0 / (1.0 + (4.5 * (x - 2.0)).exp())
            } else {
                1.0 / (1.0 + (-(x - 4.0)).exp())
            }
        }
        2 => logistic(1.5 * (x_row[1] - x_row[0])),
        _ => {
            let xs = &x_row[1..];
            let mean = xs.iter().sum::<f64>() / xs.len() as f64;
            let l3 = 3f64.ln();
            logistic(-(4.0 / 3.0) * l3 + (2.0 / 3.0) * l3 * mean)
        }
    })
}

/// One draw of `(features, response)`.
fn draw_row(id: u32, rng: &mut ChaCha8Rng, row: &mut Vec<f64>) -> f64 {
    row.clear();
    match id {
        1 => {
            let x = 4.0 * beta_5_3(rng);
            row.push(x);
            let mut y = x.exp();
            for _ in 0..4 {
                let u = rng.random_range(0.0..4.0);
                row.push(u);
                y += u;
            }
            y + normal(rng, 1.0)
        }
        2 => {
            let x1 = rng.random_range(0.0..5.0);
            let x2 = rng.random_range(0.0..5.0);
            row.extend_from_slice(&[x1, x2]);
            let latent = x2 - (4.0 / 25.0) * x1 * x1 - 1.0 + normal(rng, 0.5);
            if latent >= 0.0 {
                1.0
            } else {
                -1.0
            }
        }
        _ => {
            let p = if id == 3 { 5 } else { 10 };
            let xs: Vec<f64> = (0..p).map(|_| rng.random::<f64>()).collect();
            let u: f64 = rng.random();
            let z = 3.0 * xs[0].cos() + 2.0 * u;
            row.push(z);
            row.extend_from_slice(&xs);
            z + signal(&xs, p) + normal(rng, 1.0)
        }
    }
}

fn generate_rows(spec: &SettingSpec, stream: u64) -> Result<(Matrix, Vec<f64>, Vec<bool>, Vec<f64>)> {
    let d = feature_dim(spec.id)?;
    if spec.n == 0 {
        return Err(Error::BadSize("n must be at least 1".into()));
    }
    let mut rng = stream_rng(spec.seed, stream);
    let mut data = Vec::with_capacity(spec.n * d);
    let mut y = Vec::with_capacity(spec.n);
    let mut m = Vec::with_capacity(spec.n);
    let mut pis = Vec::with_capacity(spec.n);
    let mut row = Vec::with_capacity(d);
    for _ in 0..spec.n {
        let yi = draw_row(spec.id, &mut rng, &mut row);
        let pi = true_pi(spec.id, &row)?;
        m.push(rng.random::<f64>() < pi);
        data.extend_from_slice(&row);
        y.push(yi);
        pis.push(pi);
    }
    Ok((Matrix::new(spec.n, d, data)?, y, m, pis))
}

/// Training sample: responses are visible only where `m = 1`; the full
/// response is kept as simulation truth.
pub fn generate(spec: &SettingSpec) -> Result<Dataset> {
    let (x, y, m, pis) = generate_rows(spec, spec.stream)?;
    let visible = y.iter().zip(&m).map(|(&v, &o)| o.then_some(v)).collect();
    let mut ds = Dataset::new(x, visible, m)?.with_full_response(y)?;
    if spec.include_truth {
        ds = ds.with_true_pi(pis)?;
    }
    Ok(ds)
}

/// Fully observed sample of size `n_test` from the same law, drawn from the
/// reserved test stream of `spec.seed`.
pub fn generate_test(spec: &SettingSpec, n_test: usize) -> Result<Dataset> {
    let test_spec = SettingSpec { n: n_test, ..*spec };
    let (x, y, _, pis) = generate_rows(&test_spec, TEST_STREAM)?;
    let mut ds = Dataset::complete(x, y.clone())?.with_full_response(y)?;
    if spec.include_truth {
        ds = ds.with_true_pi(pis)?;
    }
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn missing_rate(ds: &Dataset) -> f64 {
        1.0 - ds.observed_count() as f64 / ds.n() as f64
    }

    #[test]
    fn bad_setting() {
        assert!(matches!(generate(&SettingSpec::new(5, 10, 1)), Err(Error::BadSettingId(5))));
        assert!(matches!(true_pi(0, &[1.0]), Err(Error::BadSettingId(0))));
    }

    #[test]
    fn true_pi_examples() {
        assert_eq!(true_pi(1, &[2.0, 0.0, 0.0, 0.0, 0.0]).unwrap(), 0.5);
        assert_eq!(true_pi(2, &[3.3, 3.3]).unwrap(), 0.5);
        let mut row = vec![9.0];
        row.extend([2.0; 5]);
        assert!((true_pi(3, &row).unwrap() - 0.5).abs() < 1e-15);
        assert!(true_pi(3, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn deterministic_and_streams_differ() {
        let spec = SettingSpec::new(3, 50, 99).with_truth();
        assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
        let other = generate(&spec.with_stream(1)).unwrap();
        assert_ne!(generate(&spec).unwrap().x(), other.x());
        let test = generate_test(&spec, 50).unwrap();
        assert_ne!(test.x(), generate(&spec).unwrap().x());
        assert!(test.m().iter().all(|&b| b));
    }

    #[test]
    fn missing_rates_match_design() {
        for (id, target) in [(1, 0.64), (2, 0.50), (3, 0.75), (4, 0.75)] {
            let ds = generate(&SettingSpec::new(id, 100_000, 2024)).unwrap();
            let r = missing_rate(&ds);
            assert!((r - target).abs() <= 0.02, "setting {id}: {r}");
        }
    }

    #[test]
    fn setting2_label_conditional_missingness() {
        let ds = generate(&SettingSpec::new(2, 100_000, 7)).unwrap();
        let full = ds.full_response().unwrap();
        let rate = |label: f64| {
            let (mut miss, mut tot) = (0usize, 0usize);
            for (i, &y) in full.iter().enumerate() {
                if y == label {
                    tot += 1;
                    miss += usize::from(!ds.m()[i]);
                }
            }
            miss as f64 / tot as f64
        };
        assert!((rate(1.0) - 0.20).abs() <= 0.02, "{}", rate(1.0));
        assert!((rate(-1.0) - 0.84).abs() <= 0.02, "{}", rate(-1.0));
    }

    #[test]
    fn observation_is_missing_at_random_within_bins() {
        // Bin on the mechanism input and compare the observed fraction with
        // the bin-average true probability.
        let ds = generate(&SettingSpec::new(2, 100_000, 31).with_truth()).unwrap();
        let pi = ds.true_pi().unwrap();
        let bins = 20;
        let mut obs = vec![0.0; bins];
        let mut exp = vec![0.0; bins];
        let mut cnt = vec![0.0; bins];
        for i in 0..ds.n() {
            let b = ((pi[i] * bins as f64) as usize).min(bins - 1);
            obs[b] += f64::from(u8::from(ds.m()[i]));
            exp[b] += pi[i];
            cnt[b] += 1.0;
        }
        for b in 0..bins {
            if cnt[b] < 100.0 {
                continue;
            }
            let p = exp[b] / cnt[b];
            let se = (p * (1.0 - p) / cnt[b]).sqrt();
            assert!((obs[b] / cnt[b] - p).abs() <= 3.0 * se + 1e-12, "bin {b}");
        }
    }

    #[test]
    fn positivity() {
        // Settings 3-4 are bounded well away from zero; setting 2's
        // probability reaches logistic(-7.5) at the corner x1 = 5, x2 = 0.
        for id in [1, 2, 3, 4] {
            let ds = generate(&SettingSpec::new(id, 1_000_000, 3).with_truth()).unwrap();
            let pi = ds.true_pi().unwrap();
            let lo = pi.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = pi.iter().copied().fold(0.0, f64::max);
            assert!(lo > 0.0 && hi < 1.0);
            match id {
                1 => assert!(lo >= 1.0 / (1.0 + 2f64.exp()) - 1e-12),
                2 => assert!(lo >= logistic(-7.5)),
                _ => assert!(lo >= 0.01, "setting {id}: {lo}"),
            }
        }
    }

    #[test]
    fn setting1_test_mean_matches_monte_carlo_reference() {
        // E exp(4 B) with B ~ Beta(5, 3), by an independent 10^6-draw sample
        // using inverse-free order statistics: B is the 5th smallest of 7 uniforms.
        let mut rng = stream_rng(123, 0);
        let draws = 1_000_000;
        let mut acc = 0.0;
        let mut u = [0.0f64; 7];
        for _ in 0..draws {
            for v in u.iter_mut() {
                *v = rng.random();
            }
            u.sort_by(f64::total_cmp);
            acc += (4.0 * u[4]).exp();
        }
        let reference = acc / draws as f64 + 8.0;
        let test = generate_test(&SettingSpec::new(1, 1, 5), 200_000).unwrap();
        let ys = test.full_response().unwrap();
        let mean = ys.iter().sum::<f64>() / ys.len() as f64;
        let sd = (ys.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / ys.len() as f64).sqrt();
        assert!((mean - reference).abs() < 4.0 * sd / (ys.len() as f64).sqrt() + 0.02, "{mean} vs {reference}");
    }
}
