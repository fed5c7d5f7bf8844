//! One-dimensional Bayesian linear regression of log-amplitude attenuation.
//!
//! The amplitude of a wave-packet decays with propagation distance through a
//! combination of material damping (`exp(-beta2 x)`) and geometric spreading
//! (`x^(-1/2)`). Taking logs gives a model that is linear in the parameters,
//! with three basis variants selected by switching flags. The conjugate
//! Normal-Inverse-Gamma update then yields the full posterior over weights
//! and noise variance in closed form.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Basis variant: which attenuation mechanisms are switched on.
///
/// `Phi1 = [1, 1, 0]` (damping only), `Phi2 = [1, 0, 1]` (spreading only),
/// `Phi3 = [1, 1, 1]` (both).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisModel {
    Phi1,
    Phi2,
    Phi3,
}

impl BasisModel {
    /// Switching flags `(phi1, phi2, phi3)`.
    pub fn flags(&self) -> (bool, bool, bool) {
        match self {
            BasisModel::Phi1 => (true, true, false),
            BasisModel::Phi2 => (true, false, true),
            BasisModel::Phi3 => (true, true, true),
        }
    }

    /// Number of free weights (columns of the design matrix).
    pub fn n_weights(&self) -> usize {
        let (p1, p2, _) = self.flags();
        usize::from(p1) + usize::from(p2)
    }
}

impl std::str::FromStr for BasisModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "phi1" => Ok(BasisModel::Phi1),
            "phi2" => Ok(BasisModel::Phi2),
            "phi3" => Ok(BasisModel::Phi3),
            other => Err(Error::Config(format!("unknown basis model `{other}`"))),
        }
    }
}

/// Design matrix plus the fixed offset carried by the spreading term.
///
/// The `ln(x^(-1/2))` column has no free weight, so it is returned separately
/// as an offset to subtract from the log-amplitude targets.
#[derive(Clone, Debug)]
pub struct Design {
    pub matrix: DMatrix<f64>,
    pub offset: DVector<f64>,
}

/// Builds the design matrix for propagation distances `x` under `basis`.
///
/// Active columns: an intercept for `phi1` and `-x` for `phi2` (the weight on
/// that column is the positive decay rate).
pub fn design_matrix(x: &[f64], basis: BasisModel) -> Result<Design> {
    for &v in x {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::Domain(format!(
                "propagation distances must be > 0, got {v}"
            )));
        }
    }
    let (p1, p2, p3) = basis.flags();
    let n = x.len();
    let mut cols: Vec<DVector<f64>> = Vec::new();
    if p1 {
        cols.push(DVector::from_element(n, 1.0));
    }
    if p2 {
        cols.push(DVector::from_iterator(n, x.iter().map(|&v| -v)));
    }
    let matrix = DMatrix::from_columns(&cols);
    let offset = if p3 {
        DVector::from_iterator(n, x.iter().map(|&v| -0.5 * v.ln()))
    } else {
        DVector::zeros(n)
    };
    Ok(Design { matrix, offset })
}

/// Prior over weights and noise variance.
#[derive(Clone, Debug)]
pub enum BlrPrior {
    /// Zellner's g-prior: `w0 = 0`, `V0 = g (X^T X)^{-1}`, which makes the
    /// posterior invariant to rescaling of the inputs.
    GPrior { g: f64, a0: f64, b0: f64 },
    /// Fully specified prior.
    Explicit {
        w0: DVector<f64>,
        v0: DMatrix<f64>,
        a0: f64,
        b0: f64,
    },
}

impl Default for BlrPrior {
    /// g-prior with `g = 1e3` and an uninformative variance prior.
    fn default() -> Self {
        BlrPrior::GPrior {
            g: 1e3,
            a0: 0.0,
            b0: 0.0,
        }
    }
}

/// Normal-Inverse-Gamma posterior over regression weights and noise variance.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NigPosterior {
    pub w_n: DVector<f64>,
    pub v_n: DMatrix<f64>,
    pub a_n: f64,
    pub b_n: f64,
    pub n: usize,
}

fn spd_inverse(m: &DMatrix<f64>, what: &str) -> Result<(Cholesky<f64, nalgebra::Dyn>, DMatrix<f64>)> {
    let chol = Cholesky::new(m.clone())
        .ok_or_else(|| Error::SingularMatrix(format!("{what} is not positive definite")))?;
    let inv = chol.inverse();
    Ok((chol, inv))
}

/// Conjugate Normal-Inverse-Gamma update.
pub fn fit_blr(x: &DMatrix<f64>, y: &DVector<f64>, prior: &BlrPrior) -> Result<NigPosterior> {
    let n = x.nrows();
    let d = x.ncols();
    if n != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "design has {n} rows but targets have {} entries",
            y.len()
        )));
    }
    if n < d {
        return Err(Error::TooFewPoints { got: n, min: d });
    }
    let xtx = x.transpose() * x;
    let (v0_inv, w0): (DMatrix<f64>, DVector<f64>) = match prior {
        BlrPrior::GPrior { g, .. } => {
            if !(*g > 0.0) {
                return Err(Error::Config(format!("g-prior strength must be > 0, got {g}")));
            }
            // V0 = g (X^T X)^{-1}, so V0^{-1} = X^T X / g; requires X^T X invertible.
            spd_inverse(&xtx, "X^T X")?;
            (&xtx / *g, DVector::zeros(d))
        }
        BlrPrior::Explicit { w0, v0, .. } => {
            if w0.len() != d || v0.nrows() != d || v0.ncols() != d {
                return Err(Error::DimensionMismatch(
                    "prior dimensions do not match the design".into(),
                ));
            }
            let (_, inv) = spd_inverse(v0, "prior covariance V0")?;
            (inv, w0.clone())
        }
    };
    let (a0, b0) = match prior {
        BlrPrior::GPrior { a0, b0, .. } | BlrPrior::Explicit { a0, b0, .. } => (*a0, *b0),
    };

    let precision = &v0_inv + &xtx;
    let (_, v_n) = spd_inverse(&precision, "posterior precision")?;
    // symmetrize against round-off
    let v_n = (&v_n + v_n.transpose()) * 0.5;
    let rhs = &v0_inv * &w0 + x.transpose() * y;
    let w_n = &v_n * &rhs;

    let a_n = a0 + n as f64 / 2.0;
    // w_n^T V_n^{-1} w_n = w_n . rhs since V_n rhs = w_n
    let b_n = b0 + 0.5 * (w0.dot(&(&v0_inv * &w0)) + y.dot(y) - w_n.dot(&rhs));

    Ok(NigPosterior {
        w_n,
        v_n,
        a_n,
        b_n,
        n,
    })
}

/// Predictive mean and scale at new design rows.
///
/// The predictive is Student-t with `dof = 2 a_n`, mean `X* w_n` and squared
/// scale `(b_n / a_n) (1 + x* V_n x*^T)` per point.
#[derive(Clone, Debug)]
pub struct BlrPredictive {
    pub mean: DVector<f64>,
    pub variance: DVector<f64>,
    pub dof: f64,
}

pub fn blr_predict(post: &NigPosterior, x_star: &DMatrix<f64>) -> Result<BlrPredictive> {
    if x_star.ncols() != post.w_n.len() {
        return Err(Error::DimensionMismatch(format!(
            "posterior has {} weights but design rows have {} columns",
            post.w_n.len(),
            x_star.ncols()
        )));
    }
    let mean = x_star * &post.w_n;
    let s2 = post.b_n / post.a_n;
    let variance = DVector::from_iterator(
        x_star.nrows(),
        x_star
            .row_iter()
            .map(|row| s2 * (1.0 + (row * &post.v_n * row.transpose())[(0, 0)])),
    );
    Ok(BlrPredictive {
        mean,
        variance,
        dof: 2.0 * post.a_n,
    })
}

/// Attenuation parameters recovered from posterior mean weights.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Betas {
    /// Source amplitude scale `beta1 = exp(w1)`.
    pub beta1: Option<f64>,
    /// Decay rate `beta2 = w2`; the design column already carries the minus
    /// sign, so the stored weight is the positive rate itself.
    pub beta2: Option<f64>,
}

pub fn recover_betas(w: &DVector<f64>, basis: BasisModel) -> Betas {
    let (p1, p2, _) = basis.flags();
    let mut idx = 0;
    let beta1 = if p1 {
        let v = w[idx].exp();
        idx += 1;
        Some(v)
    } else {
        None
    };
    let beta2 = if p2 { Some(w[idx]) } else { None };
    Betas { beta1, beta2 }
}

/// A fitted one-dimensional attenuation model.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AttenuationFit {
    pub basis: BasisModel,
    /// Switching flags `(phi1, phi2, phi3)`.
    pub flags: (bool, bool, bool),
    pub posterior: NigPosterior,
    pub betas: Betas,
}

/// Fits log-amplitudes over propagation distances: builds the design, takes
/// logs of `y`, subtracts the spreading offset, and runs the conjugate update.
pub fn fit_attenuation(
    x: &[f64],
    y: &[f64],
    basis: BasisModel,
    prior: &BlrPrior,
) -> Result<AttenuationFit> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} distances vs {} amplitudes",
            x.len(),
            y.len()
        )));
    }
    for &v in y {
        if !(v > 0.0) {
            return Err(Error::Domain(format!("amplitudes must be > 0, got {v}")));
        }
    }
    let design = design_matrix(x, basis)?;
    let targets = DVector::from_iterator(y.len(), y.iter().map(|&v| v.ln())) - &design.offset;
    let posterior = fit_blr(&design.matrix, &targets, prior)?;
    let betas = recover_betas(&posterior.w_n, basis);
    Ok(AttenuationFit {
        basis,
        flags: basis.flags(),
        posterior,
        betas,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn design_phi1() {
        let d = design_matrix(&[1.0, 2.0], BasisModel::Phi1).unwrap();
        assert_eq!(d.matrix.ncols(), 2);
        assert_eq!(d.matrix.column(0).as_slice(), &[1.0, 1.0]);
        assert_eq!(d.matrix.column(1).as_slice(), &[-1.0, -2.0]);
        assert_eq!(d.offset.as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn design_phi2() {
        let d = design_matrix(&[1.0, 4.0], BasisModel::Phi2).unwrap();
        assert_eq!(d.matrix.ncols(), 1);
        assert_eq!(d.matrix.column(0).as_slice(), &[1.0, 1.0]);
        assert_abs_diff_eq!(d.offset[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d.offset[1], -0.5 * 4.0_f64.ln(), epsilon = 1e-15);
    }

    #[test]
    fn design_rejects_nonpositive() {
        assert!(design_matrix(&[1.0, 0.0], BasisModel::Phi1).is_err());
        assert!(design_matrix(&[-2.0], BasisModel::Phi3).is_err());
    }

    #[test]
    fn slope_recovery_with_flat_prior() {
        // y = 2 x exactly, single slope column (x itself, not negated, to keep
        // the check direct)
        let x = DMatrix::from_column_slice(4, 1, &[1.0, 2.0, 3.0, 4.0]);
        let y = DVector::from_column_slice(&[2.0, 4.0, 6.0, 8.0]);
        let post = fit_blr(
            &x,
            &y,
            &BlrPrior::GPrior {
                g: 1e6,
                a0: 0.0,
                b0: 0.0,
            },
        )
        .unwrap();
        assert_abs_diff_eq!(post.w_n[0], 2.0, epsilon = 1e-4);
        assert_abs_diff_eq!(post.a_n, 2.0, epsilon = 0.0);
    }

    #[test]
    fn g_prior_scale_invariance() {
        let xs = [3.0, 5.0, 9.0, 14.0, 20.0];
        let ys = [0.9, 0.7, 0.5, 0.3, 0.2];
        let d = design_matrix(&xs, BasisModel::Phi1).unwrap();
        let y = DVector::from_iterator(5, ys.iter().map(|v: &f64| v.ln()));
        let prior = BlrPrior::GPrior {
            g: 10.0,
            a0: 0.0,
            b0: 0.0,
        };
        let base = fit_blr(&d.matrix, &y, &prior).unwrap();
        let c = 7.5;
        let scaled = fit_blr(&(&d.matrix * c), &(&y * c), &prior).unwrap();
        for i in 0..2 {
            // weights transform as w -> w (X and y scaled together)
            assert_abs_diff_eq!(base.w_n[i], scaled.w_n[i], epsilon = 1e-8);
        }
    }

    #[test]
    fn singular_design_detected() {
        // duplicate columns
        let x = DMatrix::from_column_slice(3, 2, &[1.0, 1.0, 1.0, 1.0, 1.0, 1.0]);
        let y = DVector::from_column_slice(&[1.0, 2.0, 3.0]);
        assert!(matches!(
            fit_blr(&x, &y, &BlrPrior::default()),
            Err(Error::SingularMatrix(_))
        ));
    }

    #[test]
    fn predict_reproduces_exact_fit() {
        let xs = [2.0, 4.0, 8.0, 16.0, 32.0];
        let truth = |x: f64| 0.8 * (-0.05 * x).exp();
        let ys: Vec<f64> = xs.iter().map(|&x| truth(x)).collect();
        let fit = fit_attenuation(
            &xs,
            &ys,
            BasisModel::Phi1,
            &BlrPrior::GPrior {
                g: 1e9,
                a0: 0.0,
                b0: 0.0,
            },
        )
        .unwrap();
        let d = design_matrix(&xs, BasisModel::Phi1).unwrap();
        let pred = blr_predict(&fit.posterior, &d.matrix).unwrap();
        for (i, &x) in xs.iter().enumerate() {
            assert_abs_diff_eq!(pred.mean[i], truth(x).ln(), epsilon = 1e-6);
            assert!(pred.variance[i] > 0.0);
        }
        // empty prediction set
        let empty = blr_predict(&fit.posterior, &DMatrix::zeros(0, 2)).unwrap();
        assert_eq!(empty.mean.len(), 0);
    }

    #[test]
    fn beta_recovery() {
        let w = DVector::from_column_slice(&[0.0, 0.3]);
        let b = recover_betas(&w, BasisModel::Phi1);
        assert_abs_diff_eq!(b.beta1.unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(b.beta2.unwrap(), 0.3, epsilon = 1e-15);

        let w = DVector::from_column_slice(&[0.005934_f64.ln()]);
        let b = recover_betas(&w, BasisModel::Phi2);
        assert_abs_diff_eq!(b.beta1.unwrap(), 0.005934, epsilon = 1e-12);
        assert!(b.beta2.is_none());
    }

    #[test]
    fn posterior_count_monotonicity() {
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let ys = [0.9, 0.8, 0.72, 0.65, 0.58, 0.52];
        let small = fit_attenuation(&xs[..4], &ys[..4], BasisModel::Phi1, &BlrPrior::default())
            .unwrap();
        let large = fit_attenuation(&xs, &ys, BasisModel::Phi1, &BlrPrior::default()).unwrap();
        assert!(large.posterior.a_n > small.posterior.a_n);
        assert_abs_diff_eq!(small.posterior.a_n, 2.0, epsilon = 0.0);
        assert_abs_diff_eq!(large.posterior.a_n, 3.0, epsilon = 0.0);
    }

    #[test]
    fn explicit_prior_shrinks_covariance() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let d = design_matrix(&xs, BasisModel::Phi1).unwrap();
        let y = DVector::from_column_slice(&[0.1, -0.1, 0.2, 0.0]);
        let v0 = DMatrix::identity(2, 2) * 4.0;
        let prior = BlrPrior::Explicit {
            w0: DVector::zeros(2),
            v0: v0.clone(),
            a0: 1.0,
            b0: 1.0,
        };
        let post = fit_blr(&d.matrix, &y, &prior).unwrap();
        // V_n <= V_0 in the PD ordering: V0 - Vn is PSD
        let diff = &v0 - &post.v_n;
        let eig = diff.symmetric_eigen();
        assert!(eig.eigenvalues.iter().all(|&e| e > -1e-12));
        assert!(post.b_n > 0.0);
    }
}
