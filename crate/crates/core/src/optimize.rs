//! Gradient-free hyperparameter estimation: a quantum-behaved particle swarm
//! minimizing the negative log marginal likelihood.
//!
//! The swarm uses the mean-best formulation: each coordinate moves to
//! `p +/- beta |mbest - x| ln(1/u)` where `p` interpolates the particle's own
//! best and the global best, `mbest` is the mean of all personal bests, and
//! the contraction-expansion coefficient `beta` anneals linearly over the
//! run. Positions are clamped to the search box; non-finite objective values
//! are treated as positive infinity so failures never abort the search.
//!
//! All randomness comes from a counter-based generator seeded from the
//! config, so runs are reproducible bit for bit.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Location;
use crate::gp::{self, GpModel};
use crate::strategy::{ModelStrategy, StrategyOptions};

/// Search scale for one parameter.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamScale {
    #[default]
    Linear,
    /// Search in natural log space; requires a positive lower bound.
    Log,
}

/// One boxed search dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    #[serde(default)]
    pub scale: ParamScale,
}

/// A named, boxed search space.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SearchSpace {
    pub params: Vec<ParamSpec>,
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        if self.params.is_empty() {
            return Err(Error::Config("search space is empty".into()));
        }
        for p in &self.params {
            if !(p.lower < p.upper) {
                return Err(Error::Config(format!(
                    "parameter `{}`: lower bound {} must be below upper bound {}",
                    p.name, p.lower, p.upper
                )));
            }
            if p.scale == ParamScale::Log && !(p.lower > 0.0) {
                return Err(Error::Config(format!(
                    "parameter `{}`: log scale requires a positive lower bound, got {}",
                    p.name, p.lower
                )));
            }
        }
        Ok(())
    }

    /// Errors with the first missing name, if any.
    pub fn require(&self, names: &[&str]) -> Result<()> {
        for name in names {
            if !self.params.iter().any(|p| p.name == *name) {
                return Err(Error::MissingParameter((*name).to_string()));
            }
        }
        Ok(())
    }

    fn internal_bounds(&self) -> Vec<(f64, f64)> {
        self.params
            .iter()
            .map(|p| match p.scale {
                ParamScale::Linear => (p.lower, p.upper),
                ParamScale::Log => (p.lower.ln(), p.upper.ln()),
            })
            .collect()
    }

    fn to_natural(&self, internal: &[f64]) -> Vec<f64> {
        self.params
            .iter()
            .zip(internal)
            .map(|(p, &v)| match p.scale {
                ParamScale::Linear => v,
                ParamScale::Log => v.exp(),
            })
            .collect()
    }

    pub fn named(&self, natural: &[f64]) -> BTreeMap<String, f64> {
        self.params
            .iter()
            .zip(natural)
            .map(|(p, &v)| (p.name.clone(), v))
            .collect()
    }
}

/// Swarm settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SwarmConfig {
    pub particles: usize,
    pub iterations: usize,
    /// Contraction-expansion coefficient at the first iteration.
    pub beta_start: f64,
    /// Coefficient at the last iteration.
    pub beta_end: f64,
    pub seed: u64,
    /// Stop when the best objective improves by less than this over
    /// `early_stop_patience` iterations.
    pub early_stop_tol: f64,
    pub early_stop_patience: usize,
}

impl Default for SwarmConfig {
    fn default() -> Self {
        Self {
            particles: 40,
            iterations: 300,
            beta_start: 1.0,
            beta_end: 0.5,
            seed: 0,
            early_stop_tol: 1e-6,
            early_stop_patience: 50,
        }
    }
}

impl SwarmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.particles < 2 {
            return Err(Error::Config(format!(
                "need at least 2 particles, got {}",
                self.particles
            )));
        }
        if self.iterations < 1 {
            return Err(Error::Config("need at least 1 iteration".into()));
        }
        for (name, b) in [("beta_start", self.beta_start), ("beta_end", self.beta_end)] {
            if !(b > 0.0 && b < 2.0) {
                return Err(Error::Config(format!(
                    "{name} must lie in (0, 2), got {b}"
                )));
            }
        }
        Ok(())
    }
}

/// Outcome of a swarm run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OptimResult {
    /// Best parameters in natural (de-logged) scale, in search-space order.
    pub best_params: Vec<f64>,
    /// Best parameters by name.
    pub best_named: BTreeMap<String, f64>,
    pub best_value: f64,
    /// Best objective seen after initialization and after each iteration;
    /// non-increasing by construction.
    pub trace: Vec<f64>,
    pub evaluations: usize,
}

fn sanitize(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        f64::INFINITY
    }
}

/// Minimizes `objective` over the boxed space. Deterministic per seed.
pub fn qpso_minimize<F>(
    mut objective: F,
    space: &SearchSpace,
    cfg: &SwarmConfig,
) -> Result<OptimResult>
where
    F: FnMut(&[f64]) -> f64,
{
    space.validate()?;
    cfg.validate()?;
    let bounds = space.internal_bounds();
    let dims = bounds.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut evaluations = 0usize;

    let eval = |internal: &[f64], objective: &mut F, evals: &mut usize| -> f64 {
        *evals += 1;
        sanitize(objective(&space.to_natural(internal)))
    };

    // init: uniform over the box
    let mut positions: Vec<Vec<f64>> = (0..cfg.particles)
        .map(|_| {
            bounds
                .iter()
                .map(|&(lo, hi)| rng.gen_range(lo..hi))
                .collect()
        })
        .collect();
    let mut pbest = positions.clone();
    let mut pbest_val: Vec<f64> = positions
        .iter()
        .map(|p| eval(p, &mut objective, &mut evaluations))
        .collect();

    let mut gbest_idx = 0;
    for i in 1..cfg.particles {
        if pbest_val[i] < pbest_val[gbest_idx] {
            gbest_idx = i;
        }
    }
    let mut gbest = pbest[gbest_idx].clone();
    let mut gbest_val = pbest_val[gbest_idx];
    let mut trace = vec![gbest_val];

    for it in 0..cfg.iterations {
        let frac = if cfg.iterations > 1 {
            it as f64 / (cfg.iterations - 1) as f64
        } else {
            0.0
        };
        let beta = cfg.beta_start + (cfg.beta_end - cfg.beta_start) * frac;

        let mut mbest = vec![0.0; dims];
        for p in &pbest {
            for d in 0..dims {
                mbest[d] += p[d];
            }
        }
        for m in &mut mbest {
            *m /= cfg.particles as f64;
        }

        // move every particle first, then evaluate, so the random stream is
        // independent of evaluation order
        for i in 0..cfg.particles {
            for d in 0..dims {
                let phi: f64 = rng.gen();
                let attractor = phi * pbest[i][d] + (1.0 - phi) * gbest[d];
                let u: f64 = 1.0 - rng.gen::<f64>(); // in (0, 1]
                let step = beta * (mbest[d] - positions[i][d]).abs() * (1.0 / u).ln();
                let sign = if rng.gen::<f64>() < 0.5 { 1.0 } else { -1.0 };
                positions[i][d] = (attractor + sign * step).clamp(bounds[d].0, bounds[d].1);
            }
        }
        for i in 0..cfg.particles {
            let val = eval(&positions[i], &mut objective, &mut evaluations);
            if val < pbest_val[i] {
                pbest_val[i] = val;
                pbest[i] = positions[i].clone();
            }
            if val < gbest_val {
                gbest_val = val;
                gbest = positions[i].clone();
            }
        }
        trace.push(gbest_val);

        let patience = cfg.early_stop_patience;
        if patience > 0 && trace.len() > patience {
            let before = trace[trace.len() - 1 - patience];
            if before - gbest_val < cfg.early_stop_tol && before.is_finite() {
                break;
            }
        }
    }

    let best_params = space.to_natural(&gbest);
    Ok(OptimResult {
        best_named: space.named(&best_params),
        best_params,
        best_value: gbest_val,
        trace,
        evaluations,
    })
}

/// Jointly estimates kernel hyperparameters (and mean weights, for the
/// strategies that have them) by minimizing the negative log marginal
/// likelihood, then refits the process at the best parameters.
///
/// During the search, configurations that fail (domain violations,
/// factorization failures) score positive infinity; only a failure at the
/// final refit is reported as an error.
pub fn fit_hyperparameters(
    strategy: ModelStrategy,
    xs: &[Location],
    y: &[f64],
    space: &SearchSpace,
    cfg: &SwarmConfig,
    opts: &StrategyOptions,
) -> Result<(GpModel, OptimResult)> {
    space.require(strategy.required_params())?;
    let objective = |natural: &[f64]| -> f64 {
        let params = space.named(natural);
        match strategy.build(&params, opts) {
            Ok((kernel, mean, noise)) => {
                gp::nlml(&kernel, mean, noise, xs, y, opts.rho_min).unwrap_or(f64::INFINITY)
            }
            Err(_) => f64::INFINITY,
        }
    };
    let result = qpso_minimize(objective, space, cfg)?;
    let (kernel, mean, noise) = strategy.build(&result.best_named, opts)?;
    let model = gp::fit(&kernel, mean, noise, xs, y, opts.rho_min)?;
    Ok((model, result))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_space(lo: f64, hi: f64) -> SearchSpace {
        SearchSpace {
            params: vec![ParamSpec {
                name: "x".into(),
                lower: lo,
                upper: hi,
                scale: ParamScale::Linear,
            }],
        }
    }

    #[test]
    fn recovers_quadratic_minimum() {
        let cfg = SwarmConfig {
            particles: 30,
            iterations: 100,
            seed: 7,
            ..SwarmConfig::default()
        };
        let res = qpso_minimize(|p| (p[0] - 3.0).powi(2), &scalar_space(0.0, 10.0), &cfg).unwrap();
        assert!((res.best_params[0] - 3.0).abs() < 1e-3, "got {:?}", res.best_params);
    }

    #[test]
    fn rosenbrock_2d() {
        let space = SearchSpace {
            params: vec![
                ParamSpec {
                    name: "x".into(),
                    lower: -2.0,
                    upper: 2.0,
                    scale: ParamScale::Linear,
                },
                ParamSpec {
                    name: "y".into(),
                    lower: -2.0,
                    upper: 2.0,
                    scale: ParamScale::Linear,
                },
            ],
        };
        let cfg = SwarmConfig {
            particles: 50,
            iterations: 200,
            seed: 11,
            early_stop_patience: 0,
            ..SwarmConfig::default()
        };
        let res = qpso_minimize(
            |p| (1.0 - p[0]).powi(2) + 100.0 * (p[1] - p[0] * p[0]).powi(2),
            &space,
            &cfg,
        )
        .unwrap();
        assert!(res.best_value < 1e-2, "best {}", res.best_value);
    }

    #[test]
    fn constant_objective_flat_trace() {
        let cfg = SwarmConfig {
            particles: 5,
            iterations: 10,
            seed: 1,
            ..SwarmConfig::default()
        };
        let res = qpso_minimize(|_| 4.2, &scalar_space(0.0, 1.0), &cfg).unwrap();
        assert!(res.trace.iter().all(|&v| v == 4.2));
    }

    #[test]
    fn trace_monotone_and_seed_deterministic() {
        let cfg = SwarmConfig {
            particles: 12,
            iterations: 40,
            seed: 99,
            ..SwarmConfig::default()
        };
        let noisy = |p: &[f64]| (p[0].sin() * 5.0) + p[0] * p[0] * 0.1;
        let a = qpso_minimize(noisy, &scalar_space(-8.0, 8.0), &cfg).unwrap();
        let b = qpso_minimize(noisy, &scalar_space(-8.0, 8.0), &cfg).unwrap();
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.best_params, b.best_params);
        for w in a.trace.windows(2) {
            assert!(w[1] <= w[0]);
        }
        assert_eq!(a.best_value, *a.trace.last().unwrap());
    }

    #[test]
    fn non_finite_objective_survives() {
        let cfg = SwarmConfig {
            particles: 8,
            iterations: 30,
            seed: 3,
            ..SwarmConfig::default()
        };
        let res = qpso_minimize(
            |p| {
                if p[0] < 0.5 {
                    f64::NAN
                } else {
                    (p[0] - 2.0).powi(2)
                }
            },
            &scalar_space(0.0, 4.0),
            &cfg,
        )
        .unwrap();
        assert!(res.best_value.is_finite());
        assert!((res.best_params[0] - 2.0).abs() < 0.1);
    }

    #[test]
    fn invalid_configs_rejected() {
        let cfg = SwarmConfig {
            particles: 1,
            ..SwarmConfig::default()
        };
        assert!(qpso_minimize(|_| 0.0, &scalar_space(0.0, 1.0), &cfg).is_err());
        let bad_space = scalar_space(1.0, 1.0);
        assert!(qpso_minimize(|_| 0.0, &bad_space, &SwarmConfig::default()).is_err());
        let log_space = SearchSpace {
            params: vec![ParamSpec {
                name: "x".into(),
                lower: -1.0,
                upper: 1.0,
                scale: ParamScale::Log,
            }],
        };
        assert!(qpso_minimize(|_| 0.0, &log_space, &SwarmConfig::default()).is_err());
    }

    #[test]
    fn log_scale_returns_natural_values() {
        let space = SearchSpace {
            params: vec![ParamSpec {
                name: "x".into(),
                lower: 1e-4,
                upper: 1e4,
                scale: ParamScale::Log,
            }],
        };
        let cfg = SwarmConfig {
            particles: 20,
            iterations: 80,
            seed: 5,
            ..SwarmConfig::default()
        };
        let res = qpso_minimize(|p| (p[0].ln() - 2.0_f64.ln()).powi(2), &space, &cfg).unwrap();
        assert!((res.best_params[0] - 2.0).abs() < 0.05);
        assert_eq!(res.best_named["x"], res.best_params[0]);
    }
}
