//! Synthetic guided-wave feature fields and waveform feature extraction.
//!
//! The generator lays a Cartesian scan grid over a square plate, converts
//! each point to polar coordinates about the source, and evaluates a ground
//! truth combining geometric spreading with direction-dependent damping:
//!
//! ```text
//! h(rho, theta) = A0 * rho^(-1/2) * exp(-zeta(theta) * rho)
//! zeta(theta)   = zeta0 + zeta_aniso * (1 - cos(2 * n_axes * theta)) / 2
//! ```
//!
//! Measurement noise is multiplicative log-normal plus an additive amplitude
//! floor, mirroring the low signal-to-noise character of scanned wave fields.
//! Points closer to the source than `rho_min_mm` are dropped, as a real scan
//! would exclude the actuator footprint.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{cart_to_polar, CartesianPoint};

/// Ground-truth field and noise configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FieldConfig {
    /// Half the plate side length (mm); the plate spans `[0, 2 * half_width]`.
    pub half_width_mm: f64,
    pub source_x_mm: f64,
    pub source_y_mm: f64,
    /// Source amplitude `A0`.
    pub amplitude: f64,
    /// Baseline attenuation coefficient (1/mm).
    pub zeta0: f64,
    /// Anisotropy amplitude added to the attenuation coefficient (1/mm).
    pub zeta_aniso: f64,
    /// Number of fibre symmetry axes (2 orthogonal directions give a
    /// four-lobed field).
    pub n_axes: u32,
    /// Multiplicative log-normal noise scale.
    pub noise_sigma: f64,
    /// Additive amplitude floor scale.
    pub noise_floor: f64,
    /// Exclusion radius around the source (mm).
    pub rho_min_mm: f64,
    /// Scan grid resolution per axis.
    pub grid_n: usize,
}

impl Default for FieldConfig {
    fn default() -> Self {
        Self {
            half_width_mm: 150.0,
            source_x_mm: 150.0,
            source_y_mm: 150.0,
            amplitude: 1.0,
            zeta0: 0.003,
            zeta_aniso: 0.01,
            n_axes: 2,
            noise_sigma: 0.1,
            noise_floor: 0.0,
            rho_min_mm: 5.0,
            grid_n: 60,
        }
    }
}

impl FieldConfig {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            ("half_width_mm", self.half_width_mm > 0.0),
            ("amplitude", self.amplitude > 0.0),
            ("zeta0", self.zeta0 >= 0.0),
            ("zeta_aniso", self.zeta_aniso >= 0.0),
            ("n_axes", self.n_axes >= 1),
            ("noise_sigma", self.noise_sigma >= 0.0),
            ("noise_floor", self.noise_floor >= 0.0),
            ("rho_min_mm", self.rho_min_mm > 0.0),
            ("grid_n", self.grid_n >= 2),
        ];
        for (name, ok) in checks {
            if !ok {
                return Err(Error::Config(format!("invalid field config value for {name}")));
            }
        }
        for (name, v) in [
            ("half_width_mm", self.half_width_mm),
            ("source_x_mm", self.source_x_mm),
            ("source_y_mm", self.source_y_mm),
            ("amplitude", self.amplitude),
            ("zeta0", self.zeta0),
            ("zeta_aniso", self.zeta_aniso),
            ("noise_sigma", self.noise_sigma),
            ("noise_floor", self.noise_floor),
            ("rho_min_mm", self.rho_min_mm),
        ] {
            if !v.is_finite() {
                return Err(Error::Config(format!("{name} must be finite, got {v}")));
            }
        }
        Ok(())
    }

    pub fn origin(&self) -> CartesianPoint {
        CartesianPoint::new(self.source_x_mm, self.source_y_mm)
    }

    /// Direction-dependent attenuation coefficient.
    pub fn zeta(&self, theta: f64) -> f64 {
        self.zeta0
            + self.zeta_aniso * (1.0 - (2.0 * f64::from(self.n_axes) * theta).cos()) / 2.0
    }

    /// Noiseless field value at a polar location.
    pub fn analytic_value(&self, rho: f64, theta: f64) -> f64 {
        self.amplitude * rho.powf(-0.5) * (-self.zeta(theta) * rho).exp()
    }
}

/// One scan point with its feature value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldSample {
    pub x_mm: f64,
    pub y_mm: f64,
    pub rho_mm: f64,
    pub theta_rad: f64,
    pub h_m: f64,
}

/// A generated feature dataset with its provenance.
#[derive(Clone, Debug)]
pub struct FeatureDataset {
    pub samples: Vec<FieldSample>,
    pub config: FieldConfig,
    pub seed: u64,
}

/// Sidecar metadata written next to a dataset CSV.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub config: FieldConfig,
    pub seed: u64,
    pub n_samples: usize,
    pub notes: Vec<String>,
}

impl FeatureDataset {
    pub fn meta(&self) -> DatasetMeta {
        DatasetMeta {
            config: self.config.clone(),
            seed: self.seed,
            n_samples: self.samples.len(),
            notes: vec![
                "attenuation anisotropy magnitude is a synthetic choice, not a calibrated \
                 material property"
                    .to_string(),
            ],
        }
    }
}

/// Generates the scan-grid dataset. Deterministic per seed; with
/// `noise_sigma = 0` and `noise_floor = 0` the values equal the analytic
/// field exactly.
pub fn generate_field(cfg: &FieldConfig, seed: u64) -> Result<FeatureDataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let origin = cfg.origin();
    let side = 2.0 * cfg.half_width_mm;
    let step = side / cfg.grid_n as f64;
    let mut samples = Vec::with_capacity(cfg.grid_n * cfg.grid_n);
    for iy in 0..cfg.grid_n {
        // cell centres keep points off the plate edge and off the source
        let y = (iy as f64 + 0.5) * step;
        for ix in 0..cfg.grid_n {
            let x = (ix as f64 + 0.5) * step;
            let polar = cart_to_polar(CartesianPoint::new(x, y), origin);
            if polar.rho() < cfg.rho_min_mm {
                continue;
            }
            let clean = cfg.analytic_value(polar.rho(), polar.theta());
            let z1: f64 = StandardNormal.sample(&mut rng);
            let z2: f64 = StandardNormal.sample(&mut rng);
            let h_m = clean * (cfg.noise_sigma * z1).exp() + cfg.noise_floor * z2.abs();
            samples.push(FieldSample {
                x_mm: x,
                y_mm: y,
                rho_mm: polar.rho(),
                theta_rad: polar.theta(),
                h_m,
            });
        }
    }
    Ok(FeatureDataset {
        samples,
        config: cfg.clone(),
        seed,
    })
}

pub const DATASET_CSV_HEADER: &str = "x_mm,y_mm,rho_mm,theta_rad,h_m";

/// Writes samples as CSV with the standard header.
pub fn write_dataset_csv<W: std::io::Write>(samples: &[FieldSample], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(DATASET_CSV_HEADER.split(','))?;
    for s in samples {
        w.write_record(&[
            s.x_mm.to_string(),
            s.y_mm.to_string(),
            s.rho_mm.to_string(),
            s.theta_rad.to_string(),
            s.h_m.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a dataset CSV produced by [`write_dataset_csv`].
pub fn read_dataset_csv<R: std::io::Read>(input: R) -> Result<Vec<FieldSample>> {
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr.headers()?.clone();
    let expect: Vec<&str> = DATASET_CSV_HEADER.split(',').collect();
    let idx: Vec<usize> = expect
        .iter()
        .map(|name| {
            headers
                .iter()
                .position(|h| h == *name)
                .ok_or_else(|| Error::Config(format!("dataset CSV missing column `{name}`")))
        })
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let field = |i: usize| -> Result<f64> {
            record
                .get(idx[i])
                .ok_or_else(|| Error::Config("short CSV record".into()))?
                .parse::<f64>()
                .map_err(|e| Error::Config(format!("bad number in dataset CSV: {e}")))
        };
        out.push(FieldSample {
            x_mm: field(0)?,
            y_mm: field(1)?,
            rho_mm: field(2)?,
            theta_rad: field(3)?,
            h_m: field(4)?,
        });
    }
    Ok(out)
}

/// A sampled time signal.
#[derive(Clone, Debug, PartialEq)]
pub struct Waveform {
    pub sample_rate_hz: f64,
    pub samples: Vec<f64>,
}

/// Maximum of the Hilbert envelope: the peak magnitude of the analytic
/// signal, computed through the one-sided-spectrum method.
pub fn extract_hm(w: &Waveform) -> Result<f64> {
    let n = w.samples.len();
    if n < 2 {
        return Err(Error::EmptySignal);
    }
    if w.samples.iter().any(|s| !s.is_finite()) {
        return Err(Error::Domain("waveform contains non-finite samples".into()));
    }
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(n);
    let mut buf: Vec<Complex64> = w
        .samples
        .iter()
        .map(|&s| Complex64::new(s, 0.0))
        .collect();
    fft.process(&mut buf);
    // analytic-signal weights: keep DC (and Nyquist for even n), double the
    // positive frequencies, zero the negative ones
    let half = n / 2;
    for (k, v) in buf.iter_mut().enumerate() {
        if k == 0 || (n % 2 == 0 && k == half) {
            // unchanged
        } else if k < half || (n % 2 == 1 && k == half) {
            *v *= 2.0;
        } else {
            *v = Complex64::new(0.0, 0.0);
        }
    }
    let ifft = planner.plan_fft_inverse(n);
    ifft.process(&mut buf);
    let scale = 1.0 / n as f64;
    Ok(buf
        .iter()
        .map(|c| c.norm() * scale)
        .fold(0.0, f64::max))
}

/// Gaussian-windowed tone burst with optional additive white noise.
///
/// The window peaks at the centre of the record, where the carrier is at a
/// crest, so the envelope maximum of the clean burst equals `amplitude`.
pub fn synthesize_wavepacket(
    amplitude: f64,
    center_freq_hz: f64,
    envelope_width_s: f64,
    sample_rate_hz: f64,
    noise_sigma: f64,
    seed: u64,
) -> Result<Waveform> {
    if !(amplitude >= 0.0) {
        return Err(Error::Config(format!("amplitude must be >= 0, got {amplitude}")));
    }
    for (name, v) in [
        ("center_freq_hz", center_freq_hz),
        ("envelope_width_s", envelope_width_s),
        ("sample_rate_hz", sample_rate_hz),
    ] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::Config(format!("{name} must be > 0, got {v}")));
        }
    }
    if !(noise_sigma >= 0.0) {
        return Err(Error::Config(format!("noise_sigma must be >= 0, got {noise_sigma}")));
    }
    let duration = 8.0 * envelope_width_s;
    let n = ((duration * sample_rate_hz).ceil() as usize).max(2);
    let t0 = duration / 2.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 / sample_rate_hz - t0;
            let window = (-t * t / (2.0 * envelope_width_s * envelope_width_s)).exp();
            let carrier = (2.0 * std::f64::consts::PI * center_freq_hz * t).cos();
            let z: f64 = StandardNormal.sample(&mut rng);
            amplitude * window * carrier + noise_sigma * z
        })
        .collect();
    Ok(Waveform {
        sample_rate_hz,
        samples,
    })
}
