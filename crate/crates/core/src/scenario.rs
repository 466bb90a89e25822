//! Channel realizations.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::linalg::CVec;

/// One channel draw together with the sensing target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    /// Information-receiver channels, one length-N_t vector per user.
    pub h: Vec<CVec>,
    /// Energy-receiver channels, one length-N_t vector per ER.
    pub g: Vec<CVec>,
    /// Target angle in radians.
    pub theta: f64,
    /// Complex reflection coefficient of the target.
    pub alpha: Complex64,
    pub n_rx: usize,
    pub noise_comm: f64,
    pub noise_sense: f64,
}

impl Scenario {
    pub fn n_tx(&self) -> usize {
        self.h.first().map_or(0, Vec::len)
    }

    pub fn n_users(&self) -> usize {
        self.h.len()
    }

    pub fn n_ers(&self) -> usize {
        self.g.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_tx();
        if self.h.is_empty() || n == 0 || self.n_rx == 0 {
            return Err(Error::DimensionMismatch("scenario needs at least one user, transmit and receive antenna".into()));
        }
        for (name, set) in [("h", &self.h), ("g", &self.g)] {
            for (i, v) in set.iter().enumerate() {
                if v.len() != n {
                    return Err(Error::DimensionMismatch(format!("{name}[{i}] has length {}, expected {n}", v.len())));
                }
                if v.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                    return Err(Error::InvalidConfig(format!("{name}[{i}] has non-finite entries")));
                }
            }
        }
        if !(self.alpha.norm() > 0.0) {
            return Err(Error::InvalidConfig("reflection coefficient must be nonzero".into()));
        }
        if !(self.noise_comm > 0.0 && self.noise_sense > 0.0) {
            return Err(Error::InvalidConfig("noise variances must be positive".into()));
        }
        Ok(())
    }
}

/// Circularly-symmetric complex Gaussian sample with unit variance.
pub(crate) fn complex_normal<R: Rng>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub(crate) fn scenario_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draw an i.i.d. Rayleigh scenario. Deterministic in `(cfg.rng_seed, seed_offset)`.
pub fn generate_scenario(cfg: &SystemConfig, seed_offset: u64) -> Result<Scenario> {
    cfg.validate()?;
    let mut rng = scenario_rng(cfg.rng_seed, seed_offset);
    let mut draw = |n: usize, scale: f64| -> CVec { (0..n).map(|_| complex_normal(&mut rng) * scale).collect() };
    let h = (0..cfg.n_users).map(|_| draw(cfg.n_tx, 1.0)).collect();
    let g = (0..cfg.n_ers).map(|_| draw(cfg.n_tx, cfg.er_channel_gain)).collect();
    let (theta, alpha) = if cfg.randomize_target {
        let theta = rng.random_range(-std::f64::consts::FRAC_PI_3..std::f64::consts::FRAC_PI_3);
        let mut alpha = complex_normal(&mut rng);
        while alpha.norm() == 0.0 {
            alpha = complex_normal(&mut rng);
        }
        (theta, alpha)
    } else {
        (cfg.target_angle, cfg.reflection())
    };
    let s = Scenario {
        h,
        g,
        theta,
        alpha,
        n_rx: cfg.n_rx,
        noise_comm: cfg.noise_comm,
        noise_sense: cfg.noise_sense,
    };
    s.validate()?;
    Ok(s)
}
