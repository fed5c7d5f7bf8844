// Scratch harness for tuning the synthetic comparison configuration.
use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wavefield::geometry::{CartesianPoint, Location};
use wavefield::metrics::{evaluate, split_indices, SplitSpec};
use wavefield::optimize::{fit_hyperparameters, SwarmConfig};
use wavefield::strategy::{ModelStrategy, StrategyOptions};
use wavefield::synth::{generate_field, FieldConfig};

fn subsample(n_total: usize, n_keep: usize, seed: u64) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut idx: Vec<usize> = (0..n_total).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    let mut keep = idx[..n_keep].to_vec();
    keep.sort_unstable();
    keep
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let field_seed: u64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(7);
    let pick_seed: u64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(123);
    let split_seed: u64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(99);
    let swarm_seed: u64 = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(70);
    let particles: usize = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(28);
    let iterations: usize = args.get(6).map(|s| s.parse().unwrap()).unwrap_or(250);
    let zeta_aniso: f64 = args.get(7).map(|s| s.parse().unwrap()).unwrap_or(0.06);
    let floor: f64 = args.get(8).map(|s| s.parse().unwrap()).unwrap_or(0.01);

    let cfg = FieldConfig {
        zeta0: 0.003,
        zeta_aniso,
        n_axes: 1,
        noise_sigma: 0.1,
        noise_floor: floor,
        rho_min_mm: 20.0,
        ..FieldConfig::default()
    };
    let data = generate_field(&cfg, field_seed).unwrap();
    let picked = subsample(data.samples.len(), 400, pick_seed);
    let origin = cfg.origin();
    let xs: Vec<Location> = picked
        .iter()
        .map(|&i| {
            let s = &data.samples[i];
            Location::from_cartesian(CartesianPoint::new(s.x_mm, s.y_mm), origin)
        })
        .collect();
    let y: Vec<f64> = picked.iter().map(|&i| data.samples[i].h_m).collect();
    let (tr, te) = split_indices(400, &SplitSpec { train_fraction: 0.75, seed: split_seed }).unwrap();
    let x_train: Vec<Location> = tr.iter().map(|&i| xs[i]).collect();
    let y_train: Vec<f64> = tr.iter().map(|&i| y[i]).collect();
    let x_test: Vec<Location> = te.iter().map(|&i| xs[i]).collect();
    let y_test: Vec<f64> = te.iter().map(|&i| y[i]).collect();
    let opts = StrategyOptions { n_sym: cfg.n_axes, rho_min: cfg.rho_min_mm };

    let mut reports = BTreeMap::new();
    let t0 = std::time::Instant::now();
    for s in [ModelStrategy::A, ModelStrategy::B, ModelStrategy::E, ModelStrategy::F] {
        let swarm = SwarmConfig {
            particles,
            iterations,
            seed: swarm_seed,
            early_stop_patience: 60,
            early_stop_tol: 1e-5,
            ..SwarmConfig::default()
        };
        let space = s.default_search_space();
        let (model, trace) = fit_hyperparameters(s, &x_train, &y_train, &space, &swarm, &opts).unwrap();
        let report = evaluate(&model, &x_test, &y_test).unwrap();
        println!(
            "strategy {s}: lml {:8.1} pll_i {:7.1} pll_c {:7.1} nmse {:7.3}  evals {}",
            report.lml, report.pll_i, report.pll_c, report.nmse, trace.evaluations
        );
        reports.insert(s.to_string(), report);
    }
    let flexible_worst = reports["A"].nmse.max(reports["B"].nmse);
    let informed_best = reports["E"].nmse.min(reports["F"].nmse);
    println!(
        "pll ok: {}   nmse flip: {} (flex worst {:.3} vs informed best {:.3})   elapsed {:?}",
        reports["E"].pll_c > reports["A"].pll_c,
        flexible_worst < informed_best,
        flexible_worst,
        informed_best,
        t0.elapsed()
    );
}
