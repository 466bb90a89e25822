//! Scenario and algorithm parameters.
//!
//! The on-disk format is flat TOML: one key per field, per-energy-receiver
//! quantities as arrays. An array of length one is broadcast to every ER.

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::energy::EhCircuit;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    pub n_tx: usize,
    pub n_rx: usize,
    pub n_users: usize,
    pub n_ers: usize,
    pub snr_db: f64,
    /// Explicit transmit power budget in watts. When absent the budget is
    /// derived from `snr_db` and `noise_comm`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub power_budget: Option<f64>,
    pub noise_comm: f64,
    pub noise_sense: f64,
    pub tradeoff: f64,
    /// Maximum DC output power M of each harvester, watts.
    pub eh_max_power: Vec<f64>,
    /// Logistic steepness of each harvester, 1/watt.
    pub eh_steepness: Vec<f64>,
    /// Logistic turning point of each harvester, watts.
    pub eh_turning_point: Vec<f64>,
    /// Minimum harvested power required at each ER, watts.
    pub eh_threshold: Vec<f64>,
    /// Amplitude scale applied to the energy-receiver channels.
    pub er_channel_gain: f64,
    pub target_angle: f64,
    pub reflection_re: f64,
    pub reflection_im: f64,
    /// Draw the target angle and reflection coefficient per scenario.
    pub randomize_target: bool,
    pub tol_outer: f64,
    pub tol_middle: f64,
    pub tol_inner: f64,
    /// Natural-residual threshold that must also hold before the inner loop stops.
    pub residual_tol: f64,
    pub step_init: f64,
    pub step_shrink: f64,
    pub psd_margin: f64,
    pub fim_det_tol: f64,
    pub max_outer: usize,
    pub max_middle: usize,
    pub max_inner: usize,
    /// Starting value for the ρ, μ, ω and η multipliers (β starts at 1/K).
    pub dual_init: f64,
    /// Carry primal-dual iterates and step size from one inner solve to the next.
    pub warm_start: bool,
    /// Keep per-iteration inner-loop traces in the run record.
    pub record_traces: bool,
    pub rng_seed: u64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig {
            n_tx: 4,
            n_rx: 4,
            n_users: 4,
            n_ers: 2,
            snr_db: 25.0,
            power_budget: None,
            noise_comm: 1.0,
            noise_sense: 1.0,
            tradeoff: 0.1,
            eh_max_power: vec![0.024],
            eh_steepness: vec![150.0],
            eh_turning_point: vec![0.014],
            eh_threshold: vec![0.006],
            er_channel_gain: DEFAULT_ER_CHANNEL_GAIN,
            target_angle: 0.0,
            reflection_re: 1.0,
            reflection_im: 0.0,
            randomize_target: false,
            tol_outer: 1e-3,
            tol_middle: 1e-3,
            tol_inner: 1e-3,
            residual_tol: 1e-3,
            step_init: 0.1,
            step_shrink: 0.9,
            psd_margin: 1e-8,
            fim_det_tol: 1e-12,
            max_outer: 50,
            max_middle: 50,
            max_inner: 5000,
            dual_init: 0.01,
            warm_start: true,
            record_traces: false,
            rng_seed: 0,
        }
    }
}

/// Amplitude scale on the ER channels. With unit-variance Rayleigh entries,
/// a 25 dB budget and the default harvester this puts a 6 mW requirement
/// within reach for nearly every channel draw.
pub const DEFAULT_ER_CHANNEL_GAIN: f64 = 7e-3;

/// Transmit power implied by an SNR in dB over noise variance `noise`.
pub fn power_from_snr(snr_db: f64, noise: f64) -> f64 {
    10f64.powf(snr_db / 10.0) * noise
}

impl SystemConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: SystemConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Transmit power budget P_t in watts.
    pub fn power_budget(&self) -> f64 {
        self.power_budget
            .unwrap_or_else(|| power_from_snr(self.snr_db, self.noise_comm))
    }

    pub fn reflection(&self) -> Complex64 {
        Complex64::new(self.reflection_re, self.reflection_im)
    }

    fn per_er(values: &[f64], l: usize) -> f64 {
        if values.len() == 1 {
            values[0]
        } else {
            values[l]
        }
    }

    pub fn circuit(&self, l: usize) -> EhCircuit {
        EhCircuit::new(
            Self::per_er(&self.eh_max_power, l),
            Self::per_er(&self.eh_steepness, l),
            Self::per_er(&self.eh_turning_point, l),
        )
    }

    pub fn circuits(&self) -> Vec<EhCircuit> {
        (0..self.n_ers).map(|l| self.circuit(l)).collect()
    }

    pub fn thresholds(&self) -> Vec<f64> {
        (0..self.n_ers)
            .map(|l| Self::per_er(&self.eh_threshold, l))
            .collect()
    }

    /// Set one field from its key and a TOML-syntax value (`snr_db=15`,
    /// `eh_threshold=[0.004, 0.006]`). Bare words are taken as strings.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let parsed: toml::Value = match toml::from_str::<toml::Table>(&format!("v = {value}")) {
            Ok(mut t) => t.remove("v").expect("key present"),
            Err(_) => toml::Value::String(value.to_string()),
        };
        let mut table = toml::Table::try_from(&*self).map_err(|e| Error::Parse(e.to_string()))?;
        // Integers are accepted for float fields.
        let parsed = match (table.get(key), parsed) {
            (Some(toml::Value::Float(_)), toml::Value::Integer(i)) => toml::Value::Float(i as f64),
            (Some(toml::Value::Array(_)), v @ (toml::Value::Float(_) | toml::Value::Integer(_))) => {
                toml::Value::Array(vec![v])
            }
            (None, toml::Value::Integer(i)) if key == "power_budget" => toml::Value::Float(i as f64),
            (_, v) => v,
        };
        let parsed = match parsed {
            toml::Value::Array(items) => toml::Value::Array(
                items
                    .into_iter()
                    .map(|v| match v {
                        toml::Value::Integer(i) => toml::Value::Float(i as f64),
                        v => v,
                    })
                    .collect(),
            ),
            v => v,
        };
        table.insert(key.to_string(), parsed);
        let next: SystemConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::InvalidConfig(format!("{key}: {}", e.message())))?;
        next.validate()?;
        *self = next;
        Ok(())
    }

    /// Apply a list of `key=value` overrides in order.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for item in overrides {
            let item = item.as_ref();
            let (key, value) = item
                .split_once('=')
                .ok_or_else(|| Error::InvalidConfig(format!("override `{item}` is not key=value")))?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n_users == 0 || self.n_tx == 0 || self.n_rx == 0 {
            return bad("n_users, n_tx and n_rx must be at least 1".into());
        }
        let reals = [
            ("snr_db", self.snr_db),
            ("noise_comm", self.noise_comm),
            ("noise_sense", self.noise_sense),
            ("tradeoff", self.tradeoff),
            ("er_channel_gain", self.er_channel_gain),
            ("target_angle", self.target_angle),
            ("reflection_re", self.reflection_re),
            ("reflection_im", self.reflection_im),
            ("dual_init", self.dual_init),
        ];
        for (name, v) in reals {
            if !v.is_finite() {
                return bad(format!("{name} must be finite"));
            }
        }
        if let Some(p) = self.power_budget {
            if !(p.is_finite() && p > 0.0) {
                return bad("power_budget must be positive".into());
            }
        }
        if self.noise_comm <= 0.0 || self.noise_sense <= 0.0 {
            return bad("noise variances must be positive".into());
        }
        if self.tradeoff < 0.0 {
            return bad("tradeoff must be nonnegative".into());
        }
        if self.er_channel_gain < 0.0 {
            return bad("er_channel_gain must be nonnegative".into());
        }
        if self.reflection().norm() == 0.0 && !self.randomize_target {
            return bad("reflection coefficient must be nonzero".into());
        }
        if !(self.step_shrink > 0.0 && self.step_shrink < 1.0) {
            return bad("step_shrink must lie in (0, 1)".into());
        }
        for (name, v) in [
            ("tol_outer", self.tol_outer),
            ("tol_middle", self.tol_middle),
            ("tol_inner", self.tol_inner),
            ("residual_tol", self.residual_tol),
            ("step_init", self.step_init),
            ("fim_det_tol", self.fim_det_tol),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive"));
            }
        }
        if !(self.psd_margin.is_finite() && self.psd_margin >= 0.0) {
            return bad("psd_margin must be nonnegative".into());
        }
        if self.dual_init < 0.0 {
            return bad("dual_init must be nonnegative".into());
        }
        if self.max_outer == 0 || self.max_middle == 0 || self.max_inner == 0 {
            return bad("iteration caps must be at least 1".into());
        }
        if self.n_ers > 0 {
            for (name, arr) in [
                ("eh_max_power", &self.eh_max_power),
                ("eh_steepness", &self.eh_steepness),
                ("eh_turning_point", &self.eh_turning_point),
                ("eh_threshold", &self.eh_threshold),
            ] {
                if arr.len() != 1 && arr.len() != self.n_ers {
                    return bad(format!(
                        "{name} has {} entries, expected 1 or n_ers = {}",
                        arr.len(),
                        self.n_ers
                    ));
                }
            }
            for l in 0..self.n_ers {
                let m = Self::per_er(&self.eh_max_power, l);
                let u = Self::per_er(&self.eh_steepness, l);
                let s = Self::per_er(&self.eh_turning_point, l);
                let e = Self::per_er(&self.eh_threshold, l);
                if !(m > 0.0 && u > 0.0 && s > 0.0) || !(m.is_finite() && u.is_finite() && s.is_finite()) {
                    return bad(format!("ER {l}: harvester constants must be positive"));
                }
                if !(e.is_finite() && e >= 0.0) {
                    return bad(format!("ER {l}: eh_threshold must be nonnegative"));
                }
                let c = EhCircuit::new(m, u, s);
                if (e + c.y()) * c.x() >= m {
                    return bad(format!("ER {l}: threshold {e} W is at or beyond saturation"));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        SystemConfig::default().validate().unwrap();
    }

    #[test]
    fn power_from_snr_values() {
        assert_eq!(power_from_snr(0.0, 1.0), 1.0);
        assert!((power_from_snr(15.0, 1.0) - 31.6228).abs() < 1e-4);
        assert!((power_from_snr(25.0, 1.0) - 316.228).abs() < 1e-3);
    }

    #[test]
    fn explicit_budget_overrides_snr() {
        let mut cfg = SystemConfig::default();
        cfg.set("power_budget", "2").unwrap();
        assert_eq!(cfg.power_budget(), 2.0);
    }

    #[test]
    fn toml_round_trip() {
        let cfg = SystemConfig { eh_threshold: vec![0.004, 0.008], ..SystemConfig::default() };
        let back = SystemConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn overrides_parse_numbers_arrays_and_bools() {
        let mut cfg = SystemConfig::default();
        cfg.apply_overrides(&["snr_db=15", "eh_threshold=[0.002, 0.004]", "warm_start=false", "n_tx=8"])
            .unwrap();
        assert_eq!(cfg.snr_db, 15.0);
        assert_eq!(cfg.eh_threshold, vec![0.002, 0.004]);
        assert!(!cfg.warm_start);
        assert_eq!(cfg.n_tx, 8);
        cfg.set("eh_threshold", "0.003").unwrap();
        assert_eq!(cfg.thresholds(), vec![0.003, 0.003]);
    }

    #[test]
    fn unknown_key_is_rejected() {
        let mut cfg = SystemConfig::default();
        assert!(matches!(cfg.set("n_antennas", "3"), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn invalid_values_are_rejected() {
        let mut cfg = SystemConfig::default();
        assert!(cfg.set("step_shrink", "1.0").is_err());
        assert!(cfg.set("n_users", "0").is_err());
        assert!(cfg.set("eh_threshold", "0.05").is_err());
        assert!(cfg.set("eh_threshold", "[0.001, 0.002, 0.003]").is_err());
        assert!(cfg.set("tradeoff", "-1").is_err());
        // failed overrides leave the config untouched
        assert_eq!(cfg, SystemConfig::default());
    }
}
