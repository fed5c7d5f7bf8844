//! Gaussian-process core: target transforms, exact fitting, predictive
//! equations, marginal likelihood and prior sampling.
//!
//! A model is defined by a kernel, a mean-function choice and a noise
//! variance. Fitting factorizes `K_y = K(X, X) + sigma_n^2 I` by Cholesky,
//! escalating a diagonal jitter when the matrix is not numerically positive
//! definite, and stores `alpha = K_y^{-1} y_t` where `y_t` are the
//! (possibly transformed) targets.
//!
//! Models with an attenuation mean train on log-space residuals
//! `y_t = ln(y) - ln(rho^(-1/2)) - m(x)`; predictions can be mapped back to
//! amplitude units through the log-normal median.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::blr::BasisModel;
use crate::error::{Error, Result};
use crate::geometry::Location;
use crate::kernels::{Kernel, KernelSpec};

/// Jitter escalation ladder: try the raw matrix first, then powers of ten.
const JITTER_LADDER: [f64; 8] = [0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4];

/// Mean-function choice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeanFunctionSpec {
    /// Zero mean: the process models the targets directly.
    Zero,
    /// Parametric attenuation trend along the radius, used with log-space
    /// targets. `weights` are the free coefficients of the active basis
    /// columns (intercept, then decay rate).
    Attenuation {
        basis: BasisModel,
        weights: Vec<f64>,
    },
}

impl MeanFunctionSpec {
    /// Whether targets are transformed into log space.
    pub fn log_space(&self) -> bool {
        matches!(self, MeanFunctionSpec::Attenuation { .. })
    }

    pub fn validate(&self) -> Result<()> {
        if let MeanFunctionSpec::Attenuation { basis, weights } = self {
            if weights.len() != basis.n_weights() {
                return Err(Error::DimensionMismatch(format!(
                    "basis expects {} weights, got {}",
                    basis.n_weights(),
                    weights.len()
                )));
            }
            if weights.iter().any(|w| !w.is_finite()) {
                return Err(Error::Config("mean weights must be finite".into()));
            }
        }
        Ok(())
    }

    /// The weighted part of the trend `m(x)` (the spreading offset
    /// `ln(rho^(-1/2))` is handled separately by the target transform).
    pub fn trend(&self, loc: &Location) -> f64 {
        match self {
            MeanFunctionSpec::Zero => 0.0,
            MeanFunctionSpec::Attenuation { basis, weights } => {
                let (p1, p2, _) = basis.flags();
                let mut idx = 0;
                let mut m = 0.0;
                if p1 {
                    m += weights[idx];
                    idx += 1;
                }
                if p2 {
                    m -= weights[idx] * loc.rho();
                }
                m
            }
        }
    }

    /// Fixed spreading offset `ln(rho^(-1/2))` when the basis carries it.
    fn offset(&self, loc: &Location) -> f64 {
        match self {
            MeanFunctionSpec::Zero => 0.0,
            MeanFunctionSpec::Attenuation { basis, .. } => {
                let (_, _, p3) = basis.flags();
                if p3 {
                    -0.5 * loc.rho().ln()
                } else {
                    0.0
                }
            }
        }
    }

    /// Full deterministic log-space shift `m(x) + ln(rho^(-1/2))`.
    pub fn log_shift(&self, loc: &Location) -> f64 {
        self.trend(loc) + self.offset(loc)
    }
}

/// Residual targets after removing the mean function.
///
/// Zero mean passes targets through; the attenuation mean maps to
/// `ln(y) - ln(rho^(-1/2)) - m(x)` and requires positive targets and radii.
pub fn transform_targets(
    y: &[f64],
    mean: &MeanFunctionSpec,
    xs: &[Location],
) -> Result<DVector<f64>> {
    if y.len() != xs.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} targets vs {} inputs",
            y.len(),
            xs.len()
        )));
    }
    mean.validate()?;
    match mean {
        MeanFunctionSpec::Zero => Ok(DVector::from_column_slice(y)),
        MeanFunctionSpec::Attenuation { .. } => {
            let mut out = DVector::zeros(y.len());
            for (i, (&v, loc)) in y.iter().zip(xs).enumerate() {
                if !(v > 0.0) {
                    return Err(Error::Domain(format!(
                        "log-space targets must be > 0, got {v} at index {i}"
                    )));
                }
                if !(loc.rho() > 0.0) {
                    return Err(Error::Domain(format!(
                        "log-space transform needs rho > 0, got {} at index {i}",
                        loc.rho()
                    )));
                }
                out[i] = v.ln() - mean.log_shift(loc);
            }
            Ok(out)
        }
    }
}

/// Whether predictions are for the latent function or noisy targets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PredictTarget {
    Latent,
    Noisy,
}

/// Gaussian posterior over a set of test points.
#[derive(Clone, Debug)]
pub struct PredictiveDistribution {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    /// True when the noise variance is included in the covariance.
    pub noisy: bool,
}

impl PredictiveDistribution {
    /// Diagonal of the covariance.
    pub fn variances(&self) -> DVector<f64> {
        self.cov.diagonal()
    }
}

/// A fitted Gaussian process.
#[derive(Clone, Debug)]
pub struct GpModel {
    kernel_spec: KernelSpec,
    kernel: Kernel,
    mean: MeanFunctionSpec,
    noise_var: f64,
    rho_min: f64,
    x: Vec<Location>,
    y_raw: Vec<f64>,
    y_t: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    jitter: f64,
}

fn check_domain(kernel: &Kernel, mean: &MeanFunctionSpec, xs: &[Location], rho_min: f64) -> Result<()> {
    let needs_rho = kernel.requires_positive_rho() || mean.log_space();
    if !needs_rho {
        return Ok(());
    }
    for (i, loc) in xs.iter().enumerate() {
        let rho = loc.rho();
        if !(rho > 0.0) || rho < rho_min {
            return Err(Error::Domain(format!(
                "input {i} has rho = {rho}, below the minimum radius {rho_min}"
            )));
        }
    }
    Ok(())
}

/// Cholesky with jitter escalation. Returns the factor and the jitter used.
fn factorize(k: &DMatrix<f64>, context: &str) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let mut last = 0.0;
    for &jitter in &JITTER_LADDER {
        last = jitter;
        let mut m = k.clone();
        if jitter > 0.0 {
            for i in 0..m.nrows() {
                m[(i, i)] += jitter;
            }
        }
        if let Some(chol) = Cholesky::new(m) {
            return Ok((chol, jitter));
        }
    }
    Err(Error::Factorization {
        context: context.to_string(),
        jitter: last,
    })
}

/// Fits an exact GP. `rho_min` guards inputs for kernels and means that are
/// singular near the source; pass 0 when the kernel has no such restriction.
pub fn fit(
    kernel_spec: &KernelSpec,
    mean: MeanFunctionSpec,
    noise_var: f64,
    xs: &[Location],
    y: &[f64],
    rho_min: f64,
) -> Result<GpModel> {
    if xs.is_empty() {
        return Err(Error::TooFewPoints { got: 0, min: 1 });
    }
    if !(noise_var >= 0.0) || !noise_var.is_finite() {
        return Err(Error::Config(format!(
            "noise variance must be >= 0, got {noise_var}"
        )));
    }
    let kernel = kernel_spec.compile()?;
    check_domain(&kernel, &mean, xs, rho_min)?;
    let y_t = transform_targets(y, &mean, xs)?;

    let mut k = kernel.gram_square(xs, 0.0)?;
    for i in 0..k.nrows() {
        k[(i, i)] += noise_var;
    }
    let (chol, jitter) = factorize(&k, "training covariance")?;
    let alpha = chol.solve(&y_t);

    Ok(GpModel {
        kernel_spec: kernel_spec.clone(),
        kernel,
        mean,
        noise_var,
        rho_min,
        x: xs.to_vec(),
        y_raw: y.to_vec(),
        y_t,
        chol,
        alpha,
        jitter,
    })
}

impl GpModel {
    pub fn kernel_spec(&self) -> &KernelSpec {
        &self.kernel_spec
    }

    pub fn mean(&self) -> &MeanFunctionSpec {
        &self.mean
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    pub fn rho_min(&self) -> f64 {
        self.rho_min
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn train_inputs(&self) -> &[Location] {
        &self.x
    }

    pub fn train_targets_raw(&self) -> &[f64] {
        &self.y_raw
    }

    /// Transformed training targets (residuals the process actually models).
    pub fn train_targets(&self) -> &DVector<f64> {
        &self.y_t
    }

    pub fn log_space(&self) -> bool {
        self.mean.log_space()
    }

    /// Posterior over the residual process at `xs`.
    ///
    /// Latent predictions return `f*`; noisy ones add `sigma_n^2 I`. Tiny
    /// negative diagonal entries from round-off are clamped to zero; anything
    /// below `-1e-10` is reported as an error.
    pub fn predict(&self, xs: &[Location], target: PredictTarget) -> Result<PredictiveDistribution> {
        check_domain(&self.kernel, &self.mean, xs, self.rho_min)?;
        let k_star = self.kernel.gram_cross(xs, &self.x)?;
        let mean = &k_star * &self.alpha;
        let k_ss = self.kernel.gram_square(xs, 0.0)?;
        // V = K** - K* K_y^{-1} K*^T via the stored factorization
        let solved = self.chol.solve(&k_star.transpose());
        let mut cov = k_ss - &k_star * solved;
        let noisy = target == PredictTarget::Noisy;
        for i in 0..cov.nrows() {
            let v = cov[(i, i)];
            if v < -1e-10 {
                return Err(Error::NonpositiveVariance { index: i, value: v });
            }
            if v < 0.0 {
                cov[(i, i)] = 0.0;
            }
            if noisy {
                cov[(i, i)] += self.noise_var;
            }
        }
        Ok(PredictiveDistribution { mean, cov, noisy })
    }

    /// For log-space models: the posterior of `ln(h)` at `xs`, with the
    /// deterministic shift `m(x) + ln(rho^(-1/2))` added back to the mean.
    pub fn predict_log_amplitude(
        &self,
        xs: &[Location],
        target: PredictTarget,
    ) -> Result<PredictiveDistribution> {
        if !self.log_space() {
            return Err(Error::Config(
                "model trains on targets directly; log-amplitude posterior undefined".into(),
            ));
        }
        let mut pred = self.predict(xs, target)?;
        for (i, loc) in xs.iter().enumerate() {
            pred.mean[i] += self.mean.log_shift(loc);
        }
        Ok(pred)
    }

    /// Point predictions in feature (amplitude) units: `(value, variance)`.
    ///
    /// Direct models return the noisy posterior; log-space models return the
    /// log-normal median `exp(mu)` and the log-normal variance.
    pub fn predict_feature(&self, xs: &[Location]) -> Result<(DVector<f64>, DVector<f64>)> {
        if self.log_space() {
            let pred = self.predict_log_amplitude(xs, PredictTarget::Noisy)?;
            let n = xs.len();
            let mut median = DVector::zeros(n);
            let mut var = DVector::zeros(n);
            for i in 0..n {
                let mu = pred.mean[i];
                let s2 = pred.cov[(i, i)];
                median[i] = mu.exp();
                var[i] = (s2.exp() - 1.0) * (2.0 * mu + s2).exp();
            }
            Ok((median, var))
        } else {
            let pred = self.predict(xs, PredictTarget::Noisy)?;
            let var = pred.variances();
            Ok((pred.mean, var))
        }
    }

    /// Negative log marginal likelihood of the training data:
    /// `1/2 log|K_y| + 1/2 y_t^T K_y^{-1} y_t + (N/2) log(2 pi)`.
    pub fn nlml(&self) -> f64 {
        let n = self.y_t.len() as f64;
        let log_det: f64 = self.chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>() * 2.0;
        0.5 * self.y_t.dot(&self.alpha)
            + 0.5 * log_det
            + 0.5 * n * (2.0 * std::f64::consts::PI).ln()
    }
}

/// Negative log marginal likelihood without keeping the fitted model.
pub fn nlml(
    kernel: &KernelSpec,
    mean: MeanFunctionSpec,
    noise_var: f64,
    xs: &[Location],
    y: &[f64],
    rho_min: f64,
) -> Result<f64> {
    Ok(fit(kernel, mean, noise_var, xs, y, rho_min)?.nlml())
}

/// Draws `count` functions from the prior `N(m(X), K(X, X) + jitter I)`.
///
/// Returns an `xs.len() x count` matrix, deterministic per seed. For
/// log-space means the draws live in log space, shifted by
/// `m(x) + ln(rho^(-1/2))`.
pub fn sample_prior(
    kernel_spec: &KernelSpec,
    mean: &MeanFunctionSpec,
    xs: &[Location],
    count: usize,
    seed: u64,
) -> Result<DMatrix<f64>> {
    if count == 0 {
        return Err(Error::Config("sample count must be >= 1".into()));
    }
    mean.validate()?;
    let kernel = kernel_spec.compile()?;
    let k = kernel.gram_square(xs, 1e-8)?;
    let (chol, _) = factorize(&k, "prior covariance")?;
    let l = chol.l();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = xs.len();
    let mut out = DMatrix::zeros(n, count);
    let shift: Vec<f64> = xs.iter().map(|loc| mean.log_shift(loc)).collect();
    for c in 0..count {
        let z = DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(&mut rng)));
        let f = &l * z;
        for i in 0..n {
            out[(i, c)] = f[i] + shift[i];
        }
    }
    Ok(out)
}

/// Prior variance `k(x, x)` at each grid point.
pub fn prior_variance_field(kernel_spec: &KernelSpec, xs: &[Location]) -> Result<Vec<f64>> {
    let kernel = kernel_spec.compile()?;
    xs.iter().map(|loc| kernel.eval(loc, loc)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{CartesianPoint, PolarPoint};
    use crate::kernels::{Feature, HyperParams};
    use approx::assert_abs_diff_eq;

    fn cart(x: f64, y: f64) -> Location {
        Location::from_cartesian(CartesianPoint::new(x, y), CartesianPoint::new(0.0, 0.0))
    }

    fn polar(rho: f64, theta: f64) -> Location {
        Location::from_polar(
            PolarPoint::new(rho, theta).unwrap(),
            CartesianPoint::new(0.0, 0.0),
        )
    }

    fn sqe(l: f64, sigma_f2: f64) -> KernelSpec {
        KernelSpec::SquaredExponential {
            on: Feature::Cartesian,
            hyper: HyperParams::new().with("l", l).with("sigma_f2", sigma_f2),
        }
    }

    #[test]
    fn single_point_covariance() {
        let m = fit(&sqe(1.0, 1.0), MeanFunctionSpec::Zero, 1.0, &[cart(0.0, 0.0)], &[0.5], 0.0)
            .unwrap();
        // K_y = [2]; nlml with y != 0 uses it directly
        assert_eq!(m.jitter(), 0.0);
        let pred = m.predict(&[cart(0.0, 0.0)], PredictTarget::Latent).unwrap();
        assert_abs_diff_eq!(pred.mean[0], 0.5 / 2.0, epsilon = 1e-14);
    }

    #[test]
    fn scalar_closed_form() {
        let m = fit(&sqe(1.0, 1.0), MeanFunctionSpec::Zero, 0.1, &[cart(0.0, 0.0)], &[1.0], 0.0)
            .unwrap();
        let pred = m.predict(&[cart(0.0, 0.0)], PredictTarget::Latent).unwrap();
        assert_abs_diff_eq!(pred.mean[0], 1.0 / 1.1, epsilon = 1e-12);
        assert_abs_diff_eq!(pred.cov[(0, 0)], 1.0 - 1.0 / 1.1, epsilon = 1e-12);
    }

    #[test]
    fn refit_deterministic() {
        let xs: Vec<Location> = (0..20).map(|i| cart(f64::from(i) * 0.3, 0.0)).collect();
        let y: Vec<f64> = xs.iter().map(|p| (p.cart.x).sin()).collect();
        let m1 = fit(&sqe(1.0, 1.0), MeanFunctionSpec::Zero, 0.01, &xs, &y, 0.0).unwrap();
        let m2 = fit(&sqe(1.0, 1.0), MeanFunctionSpec::Zero, 0.01, &xs, &y, 0.0).unwrap();
        for i in 0..20 {
            assert_eq!(m1.alpha[i], m2.alpha[i]);
        }
    }

    #[test]
    fn reversion_to_prior_far_from_data() {
        let xs = [cart(0.0, 0.0), cart(1.0, 0.0)];
        let m = fit(&sqe(0.5, 2.0), MeanFunctionSpec::Zero, 0.1, &xs, &[1.0, -1.0], 0.0).unwrap();
        let far = [cart(500.0, 500.0)];
        let pred = m.predict(&far, PredictTarget::Latent).unwrap();
        assert_abs_diff_eq!(pred.mean[0], 0.0, epsilon = 1e-6);
        assert_abs_diff_eq!(pred.cov[(0, 0)], 2.0, epsilon = 1e-6);
    }

    #[test]
    fn nlml_scalar_case() {
        // N = 1, K_y = 1 (sigma_f2 = 0.9, sigma_n2 = 0.1), y = 0
        let m = fit(&sqe(1.0, 0.9), MeanFunctionSpec::Zero, 0.1, &[cart(0.0, 0.0)], &[0.0], 0.0)
            .unwrap();
        assert_abs_diff_eq!(m.nlml(), 0.9189385332046727, epsilon = 1e-12);
    }

    #[test]
    fn nlml_permutation_invariant() {
        let xs: Vec<Location> = (0..15).map(|i| cart(f64::from(i) * 0.4, 0.1)).collect();
        let y: Vec<f64> = xs.iter().map(|p| (0.8 * p.cart.x).cos()).collect();
        let v1 = nlml(&sqe(1.0, 1.0), MeanFunctionSpec::Zero, 0.05, &xs, &y, 0.0).unwrap();
        let mut perm_x: Vec<Location> = xs.clone();
        let mut perm_y = y.clone();
        perm_x.reverse();
        perm_y.reverse();
        let v2 = nlml(&sqe(1.0, 1.0), MeanFunctionSpec::Zero, 0.05, &perm_x, &perm_y, 0.0).unwrap();
        assert_abs_diff_eq!(v1, v2, epsilon = 1e-8);
    }

    #[test]
    fn transform_zero_mean_is_identity() {
        let xs = [polar(1.0, 0.0), polar(2.0, 1.0)];
        let t = transform_targets(&[0.4, -0.2], &MeanFunctionSpec::Zero, &xs).unwrap();
        assert_eq!(t.as_slice(), &[0.4, -0.2]);
    }

    #[test]
    fn transform_attenuation_exact_residuals() {
        let mean = MeanFunctionSpec::Attenuation {
            basis: BasisModel::Phi3,
            weights: vec![-2.0, 0.01],
        };
        let xs: Vec<Location> = (1..6).map(|i| polar(f64::from(i) * 10.0, 0.3)).collect();
        // y built exactly as exp(m(x)) * rho^{-1/2}
        let y: Vec<f64> = xs
            .iter()
            .map(|loc| ((-2.0 - 0.01 * loc.rho()).exp()) * loc.rho().powf(-0.5))
            .collect();
        let t = transform_targets(&y, &mean, &xs).unwrap();
        for v in t.iter() {
            assert_abs_diff_eq!(*v, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn transform_rejects_nonpositive_targets() {
        let mean = MeanFunctionSpec::Attenuation {
            basis: BasisModel::Phi3,
            weights: vec![0.0, 0.0],
        };
        let xs = [polar(1.0, 0.0)];
        assert!(transform_targets(&[0.0], &mean, &xs).is_err());
    }

    #[test]
    fn predictive_variance_bounded_by_prior() {
        let xs: Vec<Location> = (0..12).map(|i| cart(f64::from(i) * 0.5, 0.0)).collect();
        let y: Vec<f64> = xs.iter().map(|p| p.cart.x.sin()).collect();
        let m = fit(&sqe(1.0, 1.3), MeanFunctionSpec::Zero, 0.01, &xs, &y, 0.0).unwrap();
        let grid: Vec<Location> = (0..40).map(|i| cart(f64::from(i) * 0.17 - 1.0, 0.0)).collect();
        let pred = m.predict(&grid, PredictTarget::Latent).unwrap();
        for i in 0..grid.len() {
            assert!(pred.cov[(i, i)] <= 1.3 + 1e-8);
        }
    }

    #[test]
    fn more_data_never_increases_variance() {
        let xs: Vec<Location> = (0..10).map(|i| cart(f64::from(i) * 0.6, 0.0)).collect();
        let y: Vec<f64> = xs.iter().map(|p| p.cart.x.cos()).collect();
        let m_small = fit(&sqe(1.0, 1.0), MeanFunctionSpec::Zero, 0.05, &xs[..5], &y[..5], 0.0)
            .unwrap();
        let m_big = fit(&sqe(1.0, 1.0), MeanFunctionSpec::Zero, 0.05, &xs, &y, 0.0).unwrap();
        let test = [cart(1.25, 0.0), cart(4.3, 0.0)];
        let p_small = m_small.predict(&test, PredictTarget::Latent).unwrap();
        let p_big = m_big.predict(&test, PredictTarget::Latent).unwrap();
        for i in 0..test.len() {
            assert!(p_big.cov[(i, i)] <= p_small.cov[(i, i)] + 1e-8);
        }
    }

    #[test]
    fn sample_prior_deterministic_and_unbiased() {
        let xs = [cart(0.0, 0.0), cart(0.7, 0.0), cart(1.9, 0.0)];
        let a = sample_prior(&sqe(1.0, 1.0), &MeanFunctionSpec::Zero, &xs, 5, 77).unwrap();
        let b = sample_prior(&sqe(1.0, 1.0), &MeanFunctionSpec::Zero, &xs, 5, 77).unwrap();
        assert_eq!(a, b);
        // mean of many draws is near zero (within 3 standard errors)
        let big = sample_prior(&sqe(1.0, 1.0), &MeanFunctionSpec::Zero, &xs, 20000, 3).unwrap();
        for i in 0..3 {
            let mean: f64 = big.row(i).iter().sum::<f64>() / 20000.0;
            assert!(mean.abs() < 3.0 / (20000.0_f64).sqrt());
        }
    }

    #[test]
    fn prior_variance_field_constant_for_sqe() {
        let xs = [cart(0.0, 0.0), cart(5.0, 3.0)];
        let v = prior_variance_field(&sqe(1.0, 1.7), &xs).unwrap();
        for x in v {
            assert_abs_diff_eq!(x, 1.7, epsilon = 1e-15);
        }
    }

    #[test]
    fn rho_min_guard() {
        let spec = KernelSpec::RadialInformed {
            hyper: HyperParams::new().with("sigma_f_r2", 1.0).with("l2", 0.1),
        };
        let xs = [polar(2.0, 0.0), polar(6.0, 1.0)];
        let m = fit(&spec, MeanFunctionSpec::Zero, 0.01, &xs, &[1.0, 0.5], 1.0).unwrap();
        assert!(m.predict(&[polar(0.5, 0.0)], PredictTarget::Latent).is_err());
        assert!(fit(&spec, MeanFunctionSpec::Zero, 0.01, &[polar(0.5, 0.0)], &[1.0], 1.0).is_err());
    }
}
