//! Covariance function catalog: primitive kernels, physics-informed
//! compositions, and Gram-matrix construction.
//!
//! Kernels are described declaratively by [`KernelSpec`], which serializes to
//! JSON, and compiled into a [`Kernel`] for evaluation. Primitive kernels
//! consume either the Cartesian pair, the radius, or the angle of a
//! [`Location`]; the informed compositions combine an angular and a radial
//! part through products of `(1 + k)` factors so that each dimension and
//! their interaction contribute.
//!
//! Two catalog subtleties worth knowing:
//!
//! * The Wendland function is applied with its positive-part truncation, so
//!   it has compact support and is exactly zero once the angular distance
//!   reaches the cutoff.
//! * The squared-exponential applied to the geodesic angle distance is only
//!   positive semi-definite for small angular length scales (roughly
//!   `l1 <= 0.7`); larger values can produce indefinite Gram matrices, which
//!   surface as factorization failures upstream.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{chordal_distance, geodesic_distance, modified_geodesic_distance, Location};

/// Which component of a [`Location`] a kernel consumes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    /// The Cartesian `(x, y)` pair; distances are Euclidean.
    Cartesian,
    /// The radius; distances are absolute differences.
    Rho,
    /// The angle; distances are geodesic.
    Theta,
}

/// Angular distance choice for the Wendland kernel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceKind {
    Chordal,
    Geodesic,
    ModifiedGeodesic,
}

/// Named hyperparameter map.
///
/// Recognized names: `l`, `l1`, `l2` (length scales), `sigma_f2`,
/// `sigma_f_r2`, `sigma_f_a2`, `sigma_f_sqe2`, `sigma_f_sym2` (scales),
/// `alpha1`, `alpha2` (periodic offset and amplitude), `tau` (Wendland
/// steepening, at least 4), `sigma0_2` (polynomial offset, nonnegative),
/// `p` (polynomial power, any real), `n_sym` (symmetry count, integer >= 1).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HyperParams(BTreeMap<String, f64>);

const POSITIVE_NAMES: &[&str] = &[
    "l",
    "l1",
    "l2",
    "sigma_f2",
    "sigma_f_r2",
    "sigma_f_a2",
    "sigma_f_sqe2",
    "sigma_f_sym2",
    "alpha1",
    "alpha2",
];

impl HyperParams {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builder-style insertion.
    pub fn with(mut self, name: &str, value: f64) -> Self {
        self.0.insert(name.to_string(), value);
        self
    }

    pub fn insert(&mut self, name: &str, value: f64) {
        self.0.insert(name.to_string(), value);
    }

    pub fn get(&self, name: &str) -> Result<f64> {
        self.0
            .get(name)
            .copied()
            .ok_or_else(|| Error::MissingParameter(name.to_string()))
    }

    pub fn get_or(&self, name: &str, default: f64) -> f64 {
        self.0.get(name).copied().unwrap_or(default)
    }

    /// Integer symmetry count, at least 1.
    pub fn get_n_sym(&self) -> Result<u32> {
        let v = self.get("n_sym")?;
        if !v.is_finite() || v < 1.0 || v.fract() != 0.0 || v > u32::MAX as f64 {
            return Err(Error::InvalidHyper {
                name: "n_sym".into(),
                reason: format!("must be a positive integer, got {v}"),
            });
        }
        Ok(v as u32)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// Checks every present entry against its per-name constraint.
    pub fn validate(&self) -> Result<()> {
        for (name, &value) in &self.0 {
            if !value.is_finite() {
                return Err(Error::InvalidHyper {
                    name: name.clone(),
                    reason: format!("must be finite, got {value}"),
                });
            }
            match name.as_str() {
                n if POSITIVE_NAMES.contains(&n) => {
                    if value <= 0.0 {
                        return Err(Error::InvalidHyper {
                            name: name.clone(),
                            reason: format!("must be > 0, got {value}"),
                        });
                    }
                }
                "tau" => {
                    if value < 4.0 {
                        return Err(Error::InvalidHyper {
                            name: name.clone(),
                            reason: format!("must be >= 4, got {value}"),
                        });
                    }
                }
                "sigma0_2" => {
                    if value < 0.0 {
                        return Err(Error::InvalidHyper {
                            name: name.clone(),
                            reason: format!("must be >= 0, got {value}"),
                        });
                    }
                }
                "n_sym" => {
                    self.get_n_sym()?;
                }
                "p" => {}
                _ => {
                    return Err(Error::InvalidHyper {
                        name: name.clone(),
                        reason: "unrecognized hyperparameter name".into(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Declarative description of a kernel, including compositions.
///
/// Serializes as `{"kind": ..., "hyper": {...}}` with `children` for `sum`
/// and `product` nodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelSpec {
    /// `sigma_f2 * exp(-d^2 / (2 l^2))` with the distance set by `on`.
    SquaredExponential { on: Feature, hyper: HyperParams },
    /// Matern 5/2 with the distance set by `on`.
    Matern52 { on: Feature, hyper: HyperParams },
    /// `sigma_f2 * (rho rho' + sigma0_2)^p` on the radius.
    Polynomial { hyper: HyperParams },
    /// Compactly supported C2-Wendland function on the angle.
    WendlandC2 {
        distance: DistanceKind,
        hyper: HyperParams,
    },
    /// Separable exponential decay `sigma_f2 * exp(-rho l) exp(-rho' l)`.
    ExpDecay { hyper: HyperParams },
    /// `sigma_f2 * (alpha1 + alpha2 cos(2 n d2))` on the angle.
    StrictlyPeriodic { hyper: HyperParams },
    /// Additive blend of a squared-exponential and a periodic angular part.
    AngularInformed { hyper: HyperParams },
    /// Multiplicative blend of geometric spreading and exponential decay.
    RadialInformed { hyper: HyperParams },
    /// Generic polar ANOVA kernel: Matern on radius times Wendland on angle.
    GenericPolar { hyper: HyperParams },
    /// Informed polar kernel with the angular-informed angle part.
    InformedK3 { hyper: HyperParams },
    /// Informed polar kernel with a Wendland angle part on the folded angle.
    InformedK4 { hyper: HyperParams },
    Sum { children: Vec<KernelSpec> },
    Product { children: Vec<KernelSpec> },
}

impl KernelSpec {
    /// Validates hyperparameters and compiles into an evaluator.
    pub fn compile(&self) -> Result<Kernel> {
        match self {
            KernelSpec::SquaredExponential { on, hyper } => {
                hyper.validate()?;
                Ok(Kernel::Sqe {
                    on: *on,
                    l: hyper.get("l")?,
                    sigma_f2: hyper.get("sigma_f2")?,
                })
            }
            KernelSpec::Matern52 { on, hyper } => {
                hyper.validate()?;
                Ok(Kernel::Matern52 {
                    on: *on,
                    l: hyper.get("l")?,
                    sigma_f2: hyper.get("sigma_f2")?,
                })
            }
            KernelSpec::Polynomial { hyper } => {
                hyper.validate()?;
                Ok(Kernel::Polynomial {
                    p: hyper.get("p")?,
                    sigma_f2: hyper.get("sigma_f2")?,
                    sigma0_2: hyper.get_or("sigma0_2", 0.0),
                })
            }
            KernelSpec::WendlandC2 { distance, hyper } => {
                hyper.validate()?;
                let n_sym = if *distance == DistanceKind::ModifiedGeodesic {
                    hyper.get_n_sym()?
                } else {
                    1
                };
                Ok(Kernel::Wendland {
                    distance: *distance,
                    n_sym,
                    tau: hyper.get("tau")?,
                    sigma_f2: hyper.get("sigma_f2")?,
                })
            }
            KernelSpec::ExpDecay { hyper } => {
                hyper.validate()?;
                Ok(Kernel::ExpDecay {
                    l: hyper.get("l")?,
                    sigma_f2: hyper.get("sigma_f2")?,
                })
            }
            KernelSpec::StrictlyPeriodic { hyper } => {
                hyper.validate()?;
                Ok(Kernel::StrictlyPeriodic {
                    alpha1: hyper.get("alpha1")?,
                    alpha2: hyper.get("alpha2")?,
                    n_sym: hyper.get_n_sym()?,
                    sigma_f2: hyper.get("sigma_f2")?,
                })
            }
            KernelSpec::AngularInformed { hyper } => {
                hyper.validate()?;
                Ok(Kernel::AngularInformed {
                    l1: hyper.get("l1")?,
                    sigma_f_sqe2: hyper.get("sigma_f_sqe2")?,
                    sigma_f_sym2: hyper.get("sigma_f_sym2")?,
                    alpha1: hyper.get("alpha1")?,
                    alpha2: hyper.get("alpha2")?,
                    n_sym: hyper.get_n_sym()?,
                })
            }
            KernelSpec::RadialInformed { hyper } => {
                hyper.validate()?;
                Ok(Kernel::RadialInformed {
                    sigma_f_r2: hyper.get("sigma_f_r2")?,
                    l2: hyper.get("l2")?,
                    p: hyper.get_or("p", -0.5),
                })
            }
            KernelSpec::GenericPolar { hyper } => {
                hyper.validate()?;
                Ok(Kernel::GenericPolar {
                    sigma_f2: hyper.get("sigma_f2")?,
                    sigma_f_r2: hyper.get("sigma_f_r2")?,
                    sigma_f_a2: hyper.get("sigma_f_a2")?,
                    l: hyper.get("l")?,
                    tau: hyper.get("tau")?,
                })
            }
            KernelSpec::InformedK3 { hyper } => {
                hyper.validate()?;
                Ok(Kernel::InformedK3 {
                    angular: Box::new(Kernel::AngularInformed {
                        l1: hyper.get("l1")?,
                        sigma_f_sqe2: hyper.get("sigma_f_sqe2")?,
                        sigma_f_sym2: hyper.get("sigma_f_sym2")?,
                        alpha1: hyper.get("alpha1")?,
                        alpha2: hyper.get("alpha2")?,
                        n_sym: hyper.get_n_sym()?,
                    }),
                    radial: Box::new(Kernel::RadialInformed {
                        sigma_f_r2: hyper.get("sigma_f_r2")?,
                        l2: hyper.get("l2")?,
                        p: hyper.get_or("p", -0.5),
                    }),
                    sigma_f_a2: hyper.get("sigma_f_a2")?,
                    sigma_f_r2: hyper.get("sigma_f_r2")?,
                })
            }
            KernelSpec::InformedK4 { hyper } => {
                hyper.validate()?;
                Ok(Kernel::InformedK4 {
                    angular: Box::new(Kernel::Wendland {
                        distance: DistanceKind::ModifiedGeodesic,
                        n_sym: hyper.get_n_sym()?,
                        tau: hyper.get("tau")?,
                        sigma_f2: 1.0,
                    }),
                    radial: Box::new(Kernel::RadialInformed {
                        sigma_f_r2: hyper.get("sigma_f_r2")?,
                        l2: hyper.get("l2")?,
                        p: hyper.get_or("p", -0.5),
                    }),
                    sigma_f_a2: hyper.get("sigma_f_a2")?,
                    sigma_f_r2: hyper.get("sigma_f_r2")?,
                })
            }
            KernelSpec::Sum { children } => {
                if children.is_empty() {
                    return Err(Error::Config("sum kernel needs at least one child".into()));
                }
                Ok(Kernel::Sum(
                    children.iter().map(|c| c.compile()).collect::<Result<_>>()?,
                ))
            }
            KernelSpec::Product { children } => {
                if children.is_empty() {
                    return Err(Error::Config(
                        "product kernel needs at least one child".into(),
                    ));
                }
                Ok(Kernel::Product(
                    children.iter().map(|c| c.compile()).collect::<Result<_>>()?,
                ))
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.compile().map(|_| ())
    }
}

/// A compiled, validated kernel ready for evaluation.
#[derive(Clone, Debug)]
pub enum Kernel {
    Sqe {
        on: Feature,
        l: f64,
        sigma_f2: f64,
    },
    Matern52 {
        on: Feature,
        l: f64,
        sigma_f2: f64,
    },
    Polynomial {
        p: f64,
        sigma_f2: f64,
        sigma0_2: f64,
    },
    Wendland {
        distance: DistanceKind,
        n_sym: u32,
        tau: f64,
        sigma_f2: f64,
    },
    ExpDecay {
        l: f64,
        sigma_f2: f64,
    },
    StrictlyPeriodic {
        alpha1: f64,
        alpha2: f64,
        n_sym: u32,
        sigma_f2: f64,
    },
    AngularInformed {
        l1: f64,
        sigma_f_sqe2: f64,
        sigma_f_sym2: f64,
        alpha1: f64,
        alpha2: f64,
        n_sym: u32,
    },
    RadialInformed {
        sigma_f_r2: f64,
        l2: f64,
        p: f64,
    },
    GenericPolar {
        sigma_f2: f64,
        sigma_f_r2: f64,
        sigma_f_a2: f64,
        l: f64,
        tau: f64,
    },
    InformedK3 {
        angular: Box<Kernel>,
        radial: Box<Kernel>,
        sigma_f_a2: f64,
        sigma_f_r2: f64,
    },
    InformedK4 {
        angular: Box<Kernel>,
        radial: Box<Kernel>,
        sigma_f_a2: f64,
        sigma_f_r2: f64,
    },
    Sum(Vec<Kernel>),
    Product(Vec<Kernel>),
}

fn feature_distance(on: Feature, a: &Location, b: &Location) -> f64 {
    match on {
        Feature::Cartesian => {
            let dx = a.cart.x - b.cart.x;
            let dy = a.cart.y - b.cart.y;
            dx.hypot(dy)
        }
        Feature::Rho => (a.rho() - b.rho()).abs(),
        Feature::Theta => geodesic_distance(a.theta(), b.theta()),
    }
}

fn matern52_of(r: f64, l: f64) -> f64 {
    let s = 5.0_f64.sqrt() * r / l;
    (1.0 + s + 5.0 * r * r / (3.0 * l * l)) * (-s).exp()
}

/// Truncated Wendland shape `(1 + tau t/c) max(0, 1 - t/c)^tau`.
fn wendland_of(t: f64, c: f64, tau: f64) -> f64 {
    let base = (1.0 - t / c).max(0.0);
    (1.0 + tau * t / c) * base.powf(tau)
}

fn radial_informed_of(rho_a: f64, rho_b: f64, sigma_f_r2: f64, l2: f64, p: f64) -> Result<f64> {
    if rho_a <= 0.0 || rho_b <= 0.0 {
        return Err(Error::Domain(format!(
            "radial kernel requires rho > 0, got ({rho_a}, {rho_b})"
        )));
    }
    Ok(sigma_f_r2 * (rho_a * rho_b).powf(p) * (-(rho_a + rho_b) * l2).exp())
}

impl Kernel {
    /// Evaluates the covariance between two locations.
    pub fn eval(&self, a: &Location, b: &Location) -> Result<f64> {
        match self {
            Kernel::Sqe { on, l, sigma_f2 } => {
                let d = feature_distance(*on, a, b);
                Ok(sigma_f2 * (-d * d / (2.0 * l * l)).exp())
            }
            Kernel::Matern52 { on, l, sigma_f2 } => {
                let r = feature_distance(*on, a, b);
                Ok(sigma_f2 * matern52_of(r, *l))
            }
            Kernel::Polynomial { p, sigma_f2, sigma0_2 } => {
                let s = a.rho() * b.rho() + sigma0_2;
                if *p < 0.0 && s <= 0.0 {
                    return Err(Error::Domain(format!(
                        "polynomial kernel with p = {p} undefined at rho*rho' + sigma0_2 = {s}"
                    )));
                }
                Ok(sigma_f2 * s.powf(*p))
            }
            Kernel::Wendland {
                distance,
                n_sym,
                tau,
                sigma_f2,
            } => {
                let (t, c) = match distance {
                    DistanceKind::Chordal => (chordal_distance(a.theta(), b.theta()), 2.0),
                    DistanceKind::Geodesic => {
                        (geodesic_distance(a.theta(), b.theta()), std::f64::consts::PI)
                    }
                    DistanceKind::ModifiedGeodesic => (
                        modified_geodesic_distance(a.theta(), b.theta(), *n_sym)?,
                        std::f64::consts::PI,
                    ),
                };
                Ok(sigma_f2 * wendland_of(t, c, *tau))
            }
            Kernel::ExpDecay { l, sigma_f2 } => {
                Ok(sigma_f2 * (-(a.rho() + b.rho()) * l).exp())
            }
            Kernel::StrictlyPeriodic {
                alpha1,
                alpha2,
                n_sym,
                sigma_f2,
            } => {
                let d2 = geodesic_distance(a.theta(), b.theta());
                Ok(sigma_f2 * (alpha1 + alpha2 * (2.0 * f64::from(*n_sym) * d2).cos()))
            }
            Kernel::AngularInformed {
                l1,
                sigma_f_sqe2,
                sigma_f_sym2,
                alpha1,
                alpha2,
                n_sym,
            } => {
                let d2 = geodesic_distance(a.theta(), b.theta());
                Ok(sigma_f_sqe2 * (-d2 * d2 / (l1 * l1)).exp()
                    + sigma_f_sym2 * (alpha1 + alpha2 * (f64::from(*n_sym) * d2).cos()))
            }
            Kernel::RadialInformed { sigma_f_r2, l2, p } => {
                radial_informed_of(a.rho(), b.rho(), *sigma_f_r2, *l2, *p)
            }
            Kernel::GenericPolar {
                sigma_f2,
                sigma_f_r2,
                sigma_f_a2,
                l,
                tau,
            } => {
                let radial = matern52_of((a.rho() - b.rho()).abs(), *l);
                let angular = wendland_of(
                    geodesic_distance(a.theta(), b.theta()),
                    std::f64::consts::PI,
                    *tau,
                );
                Ok(sigma_f2 * (1.0 + sigma_f_r2 * radial) * (1.0 + sigma_f_a2 * angular))
            }
            Kernel::InformedK3 {
                angular,
                radial,
                sigma_f_a2,
                sigma_f_r2,
            }
            | Kernel::InformedK4 {
                angular,
                radial,
                sigma_f_a2,
                sigma_f_r2,
            } => {
                let ka = angular.eval(a, b)?;
                let kr = radial.eval(a, b)?;
                Ok((1.0 + sigma_f_a2 * ka) * (1.0 + sigma_f_r2 * kr))
            }
            Kernel::Sum(children) => {
                let mut acc = 0.0;
                for c in children {
                    acc += c.eval(a, b)?;
                }
                Ok(acc)
            }
            Kernel::Product(children) => {
                let mut acc = 1.0;
                for c in children {
                    acc *= c.eval(a, b)?;
                }
                Ok(acc)
            }
        }
    }

    /// True when the kernel is singular or undefined at `rho <= 0`, so inputs
    /// must keep a positive radius.
    pub fn requires_positive_rho(&self) -> bool {
        match self {
            Kernel::Polynomial { p, .. } => *p < 0.0,
            Kernel::RadialInformed { .. }
            | Kernel::InformedK3 { .. }
            | Kernel::InformedK4 { .. } => true,
            Kernel::Sum(children) | Kernel::Product(children) => {
                children.iter().any(|c| c.requires_positive_rho())
            }
            _ => false,
        }
    }

    /// Cross Gram matrix `K[i][j] = k(xs[i], ys[j])`.
    pub fn gram_cross(&self, xs: &[Location], ys: &[Location]) -> Result<DMatrix<f64>> {
        let mut m = DMatrix::zeros(xs.len(), ys.len());
        for (i, x) in xs.iter().enumerate() {
            for (j, y) in ys.iter().enumerate() {
                m[(i, j)] = self.eval(x, y).map_err(|e| Error::GramEntry {
                    i,
                    j,
                    source: Box::new(e),
                })?;
            }
        }
        Ok(m)
    }

    /// Self Gram matrix with `jitter` added on the diagonal. The upper
    /// triangle is computed and mirrored, so the result is exactly symmetric.
    pub fn gram_square(&self, xs: &[Location], jitter: f64) -> Result<DMatrix<f64>> {
        let n = xs.len();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = self.eval(&xs[i], &xs[j]).map_err(|e| Error::GramEntry {
                    i,
                    j,
                    source: Box::new(e),
                })?;
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
            m[(i, i)] += jitter;
        }
        Ok(m)
    }
}

/// A Gram matrix together with the jitter magnitude actually added to its
/// diagonal (zero for rectangular cross matrices).
#[derive(Clone, Debug)]
pub struct GramMatrix {
    pub matrix: DMatrix<f64>,
    pub jitter: f64,
}

fn same_points(xs: &[Location], ys: &[Location]) -> bool {
    xs.len() == ys.len() && xs.iter().zip(ys).all(|(a, b)| a == b)
}

/// Builds the pairwise covariance matrix of `xs` against `ys`.
///
/// Jitter is added to the diagonal only when the two point sets are
/// identical, i.e. when the result is a self-covariance.
pub fn gram(
    spec: &KernelSpec,
    xs: &[Location],
    ys: &[Location],
    jitter: f64,
) -> Result<GramMatrix> {
    let kernel = spec.compile()?;
    if same_points(xs, ys) {
        Ok(GramMatrix {
            matrix: kernel.gram_square(xs, jitter)?,
            jitter,
        })
    } else {
        Ok(GramMatrix {
            matrix: kernel.gram_cross(xs, ys)?,
            jitter: 0.0,
        })
    }
}
