//! Model evaluation: normalized mean squared error, independent and
//! correlated predictive log likelihoods, training log marginal likelihood,
//! and the train/test split.
//!
//! The NMSE is on a 0-100 scale with the population variance in the
//! denominator, so predicting the data mean everywhere scores exactly 100 and
//! a perfect prediction scores 0. Predictive log likelihoods are computed
//! against noisy targets (the noise variance is part of the predictive
//! covariance); the correlated variant uses the full covariance and reduces
//! to the independent one when that covariance is diagonal.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Location;
use crate::gp::{GpModel, PredictTarget, PredictiveDistribution};

const LN_2PI: f64 = 1.8378770664093453;

/// Normalized mean squared error (percent).
pub fn nmse(y: &[f64], y_star: &[f64]) -> Result<f64> {
    if y.len() != y_star.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} observed vs {} predicted",
            y.len(),
            y_star.len()
        )));
    }
    if y.len() < 2 {
        return Err(Error::TooFewPoints { got: y.len(), min: 2 });
    }
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if var == 0.0 {
        return Err(Error::DegenerateData(
            "observed values have zero variance".into(),
        ));
    }
    let sse: f64 = y.iter().zip(y_star).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(100.0 * sse / (n * var))
}

/// Sum of per-point Gaussian log densities using only diagonal variances.
pub fn pll_independent(y: &[f64], pred: &PredictiveDistribution) -> Result<f64> {
    if y.len() != pred.mean.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} observed vs {} predicted",
            y.len(),
            pred.mean.len()
        )));
    }
    let mut total = 0.0;
    for (i, &obs) in y.iter().enumerate() {
        let var = pred.cov[(i, i)];
        if !(var > 0.0) {
            return Err(Error::NonpositiveVariance { index: i, value: var });
        }
        let r = obs - pred.mean[i];
        total += -0.5 * (LN_2PI + var.ln() + r * r / var);
    }
    Ok(total)
}

/// Log density of the observations under the full multivariate Gaussian
/// predictive, including covariance between test points.
pub fn pll_correlated(y: &[f64], pred: &PredictiveDistribution) -> Result<f64> {
    if y.len() != pred.mean.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} observed vs {} predicted",
            y.len(),
            pred.mean.len()
        )));
    }
    let n = y.len();
    let resid = DVector::from_iterator(n, y.iter().zip(pred.mean.iter()).map(|(a, b)| a - b));
    let chol = factorize_cov(&pred.cov)?;
    let alpha = chol.solve(&resid);
    let log_det: f64 = chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>() * 2.0;
    Ok(-0.5 * (resid.dot(&alpha) + log_det + n as f64 * LN_2PI))
}

fn factorize_cov(cov: &DMatrix<f64>) -> Result<Cholesky<f64, nalgebra::Dyn>> {
    let mut last = 0.0;
    for &jitter in &[0.0, 1e-12, 1e-10, 1e-8, 1e-6] {
        last = jitter;
        let mut m = cov.clone();
        if jitter > 0.0 {
            for i in 0..m.nrows() {
                m[(i, i)] += jitter;
            }
        }
        if let Some(c) = Cholesky::new(m) {
            return Ok(c);
        }
    }
    Err(Error::Factorization {
        context: "predictive covariance".into(),
        jitter: last,
    })
}

/// Training log marginal likelihood (the negated optimization objective).
pub fn training_lml(model: &GpModel) -> f64 {
    -model.nlml()
}

/// Seeded train/test split specification.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.75,
            seed: 0,
        }
    }
}

/// Disjoint, exhaustive, seed-deterministic index split. Returned index
/// lists are sorted.
pub fn split_indices(n: usize, spec: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 4 {
        return Err(Error::TooFewPoints { got: n, min: 4 });
    }
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train fraction must lie in (0, 1), got {}",
            spec.train_fraction
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    idx.shuffle(&mut rng);
    let n_train = ((n as f64 * spec.train_fraction).round() as usize).clamp(1, n - 1);
    let mut train = idx[..n_train].to_vec();
    let mut test = idx[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Evaluation summary for one fitted model on one split.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EvalReport {
    /// Training log marginal likelihood.
    pub lml: f64,
    /// Independent predictive log likelihood on the test set.
    pub pll_i: f64,
    /// Correlated predictive log likelihood on the test set.
    pub pll_c: f64,
    /// Normalized mean squared error on the test set (percent).
    pub nmse: f64,
    pub n_train: usize,
    pub n_test: usize,
}

impl EvalReport {
    pub const CSV_HEADER: &'static str = "lml,pll_i,pll_c,nmse,n_train,n_test";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.lml, self.pll_i, self.pll_c, self.nmse, self.n_train, self.n_test
        )
    }
}

/// Evaluates a fitted model on held-out points.
///
/// Models trained on log-space residuals are scored in amplitude units: the
/// predictive log likelihood uses the log-normal density (Gaussian density of
/// `ln y` minus the Jacobian term `sum ln y`), and the NMSE compares observed
/// amplitudes with the log-normal median, so scores are comparable across
/// strategies.
pub fn evaluate(model: &GpModel, x_test: &[Location], y_test: &[f64]) -> Result<EvalReport> {
    if x_test.len() != y_test.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} test inputs vs {} targets",
            x_test.len(),
            y_test.len()
        )));
    }
    let lml = training_lml(model);
    let (pll_i, pll_c, nmse_val) = if model.log_space() {
        for (i, &v) in y_test.iter().enumerate() {
            if !(v > 0.0) {
                return Err(Error::Domain(format!(
                    "log-space evaluation needs positive targets, got {v} at index {i}"
                )));
            }
        }
        let pred = model.predict_log_amplitude(x_test, PredictTarget::Noisy)?;
        let ln_y: Vec<f64> = y_test.iter().map(|v| v.ln()).collect();
        let jacobian: f64 = ln_y.iter().sum();
        let pll_i = pll_independent(&ln_y, &pred)? - jacobian;
        let pll_c = pll_correlated(&ln_y, &pred)? - jacobian;
        let median: Vec<f64> = pred.mean.iter().map(|m| m.exp()).collect();
        (pll_i, pll_c, nmse(y_test, &median)?)
    } else {
        let pred = model.predict(x_test, PredictTarget::Noisy)?;
        let pll_i = pll_independent(y_test, &pred)?;
        let pll_c = pll_correlated(y_test, &pred)?;
        let mean: Vec<f64> = pred.mean.iter().copied().collect();
        (pll_i, pll_c, nmse(y_test, &mean)?)
    };
    Ok(EvalReport {
        lml,
        pll_i,
        pll_c,
        nmse: nmse_val,
        n_train: model.train_inputs().len(),
        n_test: x_test.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn diag_pred(mean: &[f64], var: &[f64]) -> PredictiveDistribution {
        let n = mean.len();
        let mut cov = DMatrix::zeros(n, n);
        for i in 0..n {
            cov[(i, i)] = var[i];
        }
        PredictiveDistribution {
            mean: DVector::from_column_slice(mean),
            cov,
            noisy: true,
        }
    }

    #[test]
    fn nmse_identities() {
        let y = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(nmse(&y, &y).unwrap(), 0.0);
        let mean = [2.5; 4];
        assert_eq!(nmse(&y, &mean).unwrap(), 100.0);
        // hand-evaluated case: population variance of [0, 2] is 1
        assert_abs_diff_eq!(
            nmse(&[0.0, 2.0], &[1.0, 1.0]).unwrap(),
            100.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn nmse_degenerate() {
        assert!(matches!(
            nmse(&[3.0, 3.0, 3.0], &[1.0, 2.0, 3.0]),
            Err(Error::DegenerateData(_))
        ));
        assert!(nmse(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn pll_independent_scalar() {
        let pred = diag_pred(&[0.3], &[1.0]);
        let v = pll_independent(&[0.3], &pred).unwrap();
        assert_abs_diff_eq!(v, -0.9189385332046727, epsilon = 1e-12);
        // doubling the variance at a perfectly predicted point lowers the density
        let wide = diag_pred(&[0.3], &[2.0]);
        assert!(pll_independent(&[0.3], &wide).unwrap() < v);
    }

    #[test]
    fn pll_independent_additive() {
        let pred = diag_pred(&[0.0, 1.0, -0.5], &[0.5, 1.5, 2.0]);
        let y = [0.1, 0.8, 0.0];
        let total = pll_independent(&y, &pred).unwrap();
        let mut sum = 0.0;
        for i in 0..3 {
            let single = diag_pred(&[pred.mean[i]], &[pred.cov[(i, i)]]);
            sum += pll_independent(&y[i..=i], &single).unwrap();
        }
        assert_abs_diff_eq!(total, sum, epsilon = 1e-12);
    }

    #[test]
    fn pll_independent_rejects_bad_variance() {
        let pred = diag_pred(&[0.0], &[0.0]);
        assert!(matches!(
            pll_independent(&[0.0], &pred),
            Err(Error::NonpositiveVariance { .. })
        ));
    }

    #[test]
    fn pll_correlated_matches_independent_on_diagonal() {
        let pred = diag_pred(&[0.2, -0.4, 1.1, 0.0], &[0.3, 0.8, 1.2, 2.0]);
        let y = [0.25, -0.3, 1.0, 0.5];
        let a = pll_independent(&y, &pred).unwrap();
        let b = pll_correlated(&y, &pred).unwrap();
        assert_abs_diff_eq!(a, b, epsilon = 1e-10);
    }

    #[test]
    fn correlation_rewards_correlated_residuals() {
        // matched residuals under strong positive correlation are more likely
        let mut cov = DMatrix::zeros(2, 2);
        cov[(0, 0)] = 1.0;
        cov[(1, 1)] = 1.0;
        cov[(0, 1)] = 0.9;
        cov[(1, 0)] = 0.9;
        let pred = PredictiveDistribution {
            mean: DVector::from_column_slice(&[0.0, 0.0]),
            cov,
            noisy: true,
        };
        let y = [0.1, 0.1];
        let correlated = pll_correlated(&y, &pred).unwrap();
        let independent = pll_independent(&y, &pred).unwrap();
        assert!(correlated > independent);
    }

    #[test]
    fn pll_correlated_permutation_invariant() {
        let mut cov = DMatrix::zeros(3, 3);
        for i in 0..3 {
            cov[(i, i)] = 1.0 + i as f64 * 0.3;
        }
        cov[(0, 1)] = 0.4;
        cov[(1, 0)] = 0.4;
        cov[(1, 2)] = 0.2;
        cov[(2, 1)] = 0.2;
        let pred = PredictiveDistribution {
            mean: DVector::from_column_slice(&[0.1, 0.2, 0.3]),
            cov: cov.clone(),
            noisy: true,
        };
        let y = [0.0, 0.5, 0.1];
        let v1 = pll_correlated(&y, &pred).unwrap();
        // permute (2, 0, 1)
        let perm = [2usize, 0, 1];
        let mut cov_p = DMatrix::zeros(3, 3);
        for i in 0..3 {
            for j in 0..3 {
                cov_p[(i, j)] = cov[(perm[i], perm[j])];
            }
        }
        let pred_p = PredictiveDistribution {
            mean: DVector::from_column_slice(&[0.3, 0.1, 0.2]),
            cov: cov_p,
            noisy: true,
        };
        let y_p = [y[perm[0]], y[perm[1]], y[perm[2]]];
        let v2 = pll_correlated(&y_p, &pred_p).unwrap();
        assert_abs_diff_eq!(v1, v2, epsilon = 1e-8);
    }

    #[test]
    fn split_shapes_and_determinism() {
        let spec = SplitSpec {
            train_fraction: 0.75,
            seed: 42,
        };
        let (train, test) = split_indices(100, &spec).unwrap();
        assert_eq!(train.len(), 75);
        assert_eq!(test.len(), 25);
        let (train2, test2) = split_indices(100, &spec).unwrap();
        assert_eq!(train, train2);
        assert_eq!(test, test2);
        // disjoint and exhaustive
        let mut all: Vec<usize> = train.iter().chain(test.iter()).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        assert!(split_indices(3, &spec).is_err());
    }

    proptest! {
        #[test]
        fn nmse_scale_invariant(c in prop_oneof![-100.0..-0.01f64, 0.01..100.0f64]) {
            let y = [0.5, 1.5, -0.3, 2.2, 0.0];
            let p = [0.4, 1.7, -0.5, 2.0, 0.3];
            let base = nmse(&y, &p).unwrap();
            let yc: Vec<f64> = y.iter().map(|v| v * c).collect();
            let pc: Vec<f64> = p.iter().map(|v| v * c).collect();
            let scaled = nmse(&yc, &pc).unwrap();
            prop_assert!((base - scaled).abs() < 1e-10 * (1.0 + base.abs()));
        }

        #[test]
        fn split_fraction_respected(n in 8usize..200, seed in 0u64..1000) {
            let spec = SplitSpec { train_fraction: 0.75, seed };
            let (train, test) = split_indices(n, &spec).unwrap();
            prop_assert_eq!(train.len() + test.len(), n);
            let expect = ((n as f64 * 0.75).round() as usize).clamp(1, n - 1);
            prop_assert_eq!(train.len(), expect);
        }
    }
}
