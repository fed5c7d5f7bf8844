//! The six modelling strategies A-F: bindings of mean function, kernel and
//! input space, with default hyperparameter search spaces.
//!
//! | Strategy | Mean        | Kernel                       | Input space |
//! |----------|-------------|------------------------------|-------------|
//! | A        | zero        | squared exponential          | Cartesian   |
//! | B        | zero        | generic polar (ANOVA)        | polar       |
//! | C        | attenuation | generic polar (ANOVA)        | polar       |
//! | D        | attenuation | Wendland on the angle        | polar       |
//! | E        | zero        | informed k3                  | polar       |
//! | F        | zero        | informed k4                  | polar       |
//!
//! Strategies C and D carry a `Phi3` attenuation mean whose weights `w1`,
//! `w2` are part of the hyperparameter search vector; they train on
//! log-space residuals. Strategies A, B, E, F train on the feature values
//! directly.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::blr::BasisModel;
use crate::error::{Error, Result};
use crate::geometry::{CartesianPoint, Location};
use crate::gp::{self, GpModel, MeanFunctionSpec};
use crate::kernels::{DistanceKind, Feature, HyperParams, KernelSpec};
use crate::optimize::{ParamScale, ParamSpec, SearchSpace};
use crate::synth::FieldSample;

/// Input coordinate system a strategy consumes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputSpace {
    Cartesian,
    Polar,
}

/// One of the six standard model strategies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelStrategy {
    A,
    B,
    C,
    D,
    E,
    F,
}

impl std::str::FromStr for ModelStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(ModelStrategy::A),
            "B" => Ok(ModelStrategy::B),
            "C" => Ok(ModelStrategy::C),
            "D" => Ok(ModelStrategy::D),
            "E" => Ok(ModelStrategy::E),
            "F" => Ok(ModelStrategy::F),
            other => Err(Error::Config(format!(
                "unknown strategy `{other}`; expected one of A-F"
            ))),
        }
    }
}

impl std::fmt::Display for ModelStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let c = match self {
            ModelStrategy::A => 'A',
            ModelStrategy::B => 'B',
            ModelStrategy::C => 'C',
            ModelStrategy::D => 'D',
            ModelStrategy::E => 'E',
            ModelStrategy::F => 'F',
        };
        write!(f, "{c}")
    }
}

/// Structural options shared by the polar strategies.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct StrategyOptions {
    /// Number of symmetry axes for the periodic angular parts.
    pub n_sym: u32,
    /// Minimum admissible radius for kernels singular near the source (mm).
    pub rho_min: f64,
}

impl Default for StrategyOptions {
    fn default() -> Self {
        Self {
            n_sym: 2,
            rho_min: 5.0,
        }
    }
}

impl ModelStrategy {
    pub fn input_space(&self) -> InputSpace {
        match self {
            ModelStrategy::A => InputSpace::Cartesian,
            _ => InputSpace::Polar,
        }
    }

    /// Basis of the attenuation mean, when the strategy has one.
    pub fn mean_basis(&self) -> Option<BasisModel> {
        match self {
            ModelStrategy::C | ModelStrategy::D => Some(BasisModel::Phi3),
            _ => None,
        }
    }

    /// Names that must be present in a hyperparameter search space.
    pub fn required_params(&self) -> &'static [&'static str] {
        match self {
            ModelStrategy::A => &["l", "sigma_f2", "sigma_n2"],
            ModelStrategy::B => &["l", "sigma_f_r2", "sigma_f_a2", "tau", "sigma_n2"],
            ModelStrategy::C => &[
                "l",
                "sigma_f_r2",
                "sigma_f_a2",
                "tau",
                "sigma_n2",
                "w1",
                "w2",
            ],
            ModelStrategy::D => &["sigma_f2", "tau", "sigma_n2", "w1", "w2"],
            ModelStrategy::E => &[
                "l1",
                "alpha1",
                "alpha2",
                "sigma_f_sqe2",
                "sigma_f_sym2",
                "l2",
                "sigma_f_r2",
                "sigma_f_a2",
                "sigma_n2",
            ],
            ModelStrategy::F => &["tau", "l2", "sigma_f_r2", "sigma_f_a2", "sigma_n2"],
        }
    }

    /// Builds the kernel, mean and noise variance from named parameter
    /// values (e.g. a swarm position).
    pub fn build(
        &self,
        params: &BTreeMap<String, f64>,
        opts: &StrategyOptions,
    ) -> Result<(KernelSpec, MeanFunctionSpec, f64)> {
        let get = |name: &str| -> Result<f64> {
            params
                .get(name)
                .copied()
                .ok_or_else(|| Error::MissingParameter(name.to_string()))
        };
        let noise = get("sigma_n2")?;
        let mean = match self.mean_basis() {
            Some(basis) => MeanFunctionSpec::Attenuation {
                basis,
                weights: vec![get("w1")?, get("w2")?],
            },
            None => MeanFunctionSpec::Zero,
        };
        let kernel = match self {
            ModelStrategy::A => KernelSpec::SquaredExponential {
                on: Feature::Cartesian,
                hyper: HyperParams::new()
                    .with("l", get("l")?)
                    .with("sigma_f2", get("sigma_f2")?),
            },
            ModelStrategy::B | ModelStrategy::C => KernelSpec::GenericPolar {
                hyper: HyperParams::new()
                    .with("sigma_f2", 1.0)
                    .with("sigma_f_r2", get("sigma_f_r2")?)
                    .with("sigma_f_a2", get("sigma_f_a2")?)
                    .with("l", get("l")?)
                    .with("tau", get("tau")?),
            },
            ModelStrategy::D => KernelSpec::WendlandC2 {
                distance: DistanceKind::Geodesic,
                hyper: HyperParams::new()
                    .with("sigma_f2", get("sigma_f2")?)
                    .with("tau", get("tau")?),
            },
            ModelStrategy::E => KernelSpec::InformedK3 {
                hyper: HyperParams::new()
                    .with("l1", get("l1")?)
                    .with("alpha1", get("alpha1")?)
                    .with("alpha2", get("alpha2")?)
                    .with("sigma_f_sqe2", get("sigma_f_sqe2")?)
                    .with("sigma_f_sym2", get("sigma_f_sym2")?)
                    .with("l2", get("l2")?)
                    .with("sigma_f_r2", get("sigma_f_r2")?)
                    .with("sigma_f_a2", get("sigma_f_a2")?)
                    .with("n_sym", f64::from(opts.n_sym)),
            },
            ModelStrategy::F => KernelSpec::InformedK4 {
                hyper: HyperParams::new()
                    .with("tau", get("tau")?)
                    .with("l2", get("l2")?)
                    .with("sigma_f_r2", get("sigma_f_r2")?)
                    .with("sigma_f_a2", get("sigma_f_a2")?)
                    .with("n_sym", f64::from(opts.n_sym)),
            },
        };
        Ok((kernel, mean, noise))
    }

    /// Default search space, sized for plate coordinates in millimetres and
    /// feature values of order one or below.
    pub fn default_search_space(&self) -> SearchSpace {
        let log = |name: &str, lo: f64, hi: f64| ParamSpec {
            name: name.to_string(),
            lower: lo,
            upper: hi,
            scale: ParamScale::Log,
        };
        let lin = |name: &str, lo: f64, hi: f64| ParamSpec {
            name: name.to_string(),
            lower: lo,
            upper: hi,
            scale: ParamScale::Linear,
        };
        let noise = log("sigma_n2", 1e-10, 1.0);
        let params = match self {
            ModelStrategy::A => vec![log("l", 1.0, 300.0), log("sigma_f2", 1e-6, 10.0), noise],
            ModelStrategy::B => vec![
                log("l", 1.0, 300.0),
                log("sigma_f_r2", 1e-4, 100.0),
                log("sigma_f_a2", 1e-4, 100.0),
                log("tau", 4.0, 50.0),
                noise,
            ],
            ModelStrategy::C => vec![
                log("l", 1.0, 300.0),
                log("sigma_f_r2", 1e-4, 100.0),
                log("sigma_f_a2", 1e-4, 100.0),
                log("tau", 4.0, 50.0),
                noise,
                lin("w1", -12.0, 3.0),
                lin("w2", 0.0, 0.2),
            ],
            ModelStrategy::D => vec![
                log("sigma_f2", 1e-4, 100.0),
                log("tau", 4.0, 50.0),
                noise,
                lin("w1", -12.0, 3.0),
                lin("w2", 0.0, 0.2),
            ],
            // The angular length scale is capped at 1: larger values make the
            // squared exponential on the geodesic distance indefinite.
            ModelStrategy::E => vec![
                log("l1", 0.05, 1.0),
                log("alpha1", 1e-3, 10.0),
                log("alpha2", 1e-3, 10.0),
                log("sigma_f_sqe2", 1e-4, 100.0),
                log("sigma_f_sym2", 1e-4, 100.0),
                log("l2", 1e-5, 0.5),
                log("sigma_f_r2", 1e-4, 100.0),
                log("sigma_f_a2", 1e-4, 100.0),
                noise,
            ],
            ModelStrategy::F => vec![
                log("tau", 4.0, 50.0),
                log("l2", 1e-5, 0.5),
                log("sigma_f_r2", 1e-4, 100.0),
                log("sigma_f_a2", 1e-4, 100.0),
                noise,
            ],
        };
        SearchSpace { params }
    }

    pub fn all() -> [ModelStrategy; 6] {
        [
            ModelStrategy::A,
            ModelStrategy::B,
            ModelStrategy::C,
            ModelStrategy::D,
            ModelStrategy::E,
            ModelStrategy::F,
        ]
    }
}

/// Reference to the training data a model was fitted on. The rows live in a
/// sidecar CSV next to the model file; the digest pins them.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainRef {
    /// Sidecar CSV path, relative to the model file.
    pub csv: String,
    pub count: usize,
    pub sha256: String,
}

/// Serializable description of a fitted model. Together with the training
/// sidecar this is enough to rebuild the process deterministically.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelFile {
    pub strategy: Option<ModelStrategy>,
    pub kernel: KernelSpec,
    pub mean: MeanFunctionSpec,
    pub noise_var: f64,
    /// Diagonal jitter the fit actually needed.
    pub jitter: f64,
    pub rho_min: f64,
    pub n_sym: Option<u32>,
    /// Source location the polar coordinates are measured about (mm).
    pub origin: [f64; 2],
    pub train: TrainRef,
}

/// Hex SHA-256 of a byte slice, used to pin training sidecars.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let out = h.finalize();
    let mut s = String::with_capacity(64);
    for b in out {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

impl ModelFile {
    pub fn from_fit(
        model: &GpModel,
        strategy: Option<ModelStrategy>,
        n_sym: Option<u32>,
        origin: CartesianPoint,
        train: TrainRef,
    ) -> Self {
        Self {
            strategy,
            kernel: model.kernel_spec().clone(),
            mean: model.mean().clone(),
            noise_var: model.noise_var(),
            jitter: model.jitter(),
            rho_min: model.rho_min(),
            n_sym,
            origin: [origin.x, origin.y],
            train,
        }
    }

    pub fn origin_point(&self) -> CartesianPoint {
        CartesianPoint::new(self.origin[0], self.origin[1])
    }

    /// Rebuilds the fitted process from training rows (the factorization is
    /// deterministic, so this reproduces the saved model exactly).
    pub fn refit(&self, samples: &[FieldSample]) -> Result<GpModel> {
        if samples.len() != self.train.count {
            return Err(Error::Config(format!(
                "model expects {} training rows, sidecar has {}",
                self.train.count,
                samples.len()
            )));
        }
        let origin = self.origin_point();
        let xs: Vec<Location> = samples
            .iter()
            .map(|s| Location::from_cartesian(CartesianPoint::new(s.x_mm, s.y_mm), origin))
            .collect();
        let y: Vec<f64> = samples.iter().map(|s| s.h_m).collect();
        gp::fit(&self.kernel, self.mean.clone(), self.noise_var, &xs, &y, self.rho_min)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_display() {
        for s in ModelStrategy::all() {
            let text = s.to_string();
            let back: ModelStrategy = text.parse().unwrap();
            assert_eq!(s, back);
        }
        assert!("G".parse::<ModelStrategy>().is_err());
        assert_eq!("e".parse::<ModelStrategy>().unwrap(), ModelStrategy::E);
    }

    #[test]
    fn build_produces_valid_kernels() {
        for s in ModelStrategy::all() {
            let space = s.default_search_space();
            let mut params = BTreeMap::new();
            for p in &space.params {
                // geometric midpoint for log-scaled, arithmetic otherwise
                let v = match p.scale {
                    ParamScale::Log => (p.lower.ln() + 0.5 * (p.upper.ln() - p.lower.ln())).exp(),
                    ParamScale::Linear => 0.5 * (p.lower + p.upper),
                };
                params.insert(p.name.clone(), v);
            }
            let (kernel, mean, noise) = s.build(&params, &StrategyOptions::default()).unwrap();
            kernel.validate().unwrap();
            mean.validate().unwrap();
            assert!(noise > 0.0);
            assert_eq!(mean.log_space(), s.mean_basis().is_some());
        }
    }

    #[test]
    fn default_space_covers_required_params() {
        for s in ModelStrategy::all() {
            let space = s.default_search_space();
            for name in s.required_params() {
                assert!(
                    space.params.iter().any(|p| p.name == *name),
                    "strategy {s} default space missing {name}"
                );
            }
        }
    }

    #[test]
    fn missing_param_reported_by_name() {
        let err = ModelStrategy::A
            .build(&BTreeMap::new(), &StrategyOptions::default())
            .unwrap_err();
        assert!(matches!(err, Error::MissingParameter(_)));
    }

    #[test]
    fn input_spaces_per_table() {
        assert_eq!(ModelStrategy::A.input_space(), InputSpace::Cartesian);
        for s in [
            ModelStrategy::B,
            ModelStrategy::C,
            ModelStrategy::D,
            ModelStrategy::E,
            ModelStrategy::F,
        ] {
            assert_eq!(s.input_space(), InputSpace::Polar);
        }
        assert_eq!(ModelStrategy::C.mean_basis(), Some(BasisModel::Phi3));
        assert_eq!(ModelStrategy::D.mean_basis(), Some(BasisModel::Phi3));
        assert_eq!(ModelStrategy::E.mean_basis(), None);
    }
}
