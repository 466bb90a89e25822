//! Nonlinear (logistic) energy-harvesting model and its linearized constraint.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::dot_h;
use crate::rsma::PrecoderState;
use crate::scenario::Scenario;

/// Logistic rectifier model of one energy receiver.
///
/// The normalization constants `x` and `y` are derived from the three circuit
/// parameters so that zero input power harvests exactly zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EhCircuit {
    m: f64,
    upsilon: f64,
    varsigma: f64,
    x: f64,
    y: f64,
}

impl EhCircuit {
    pub fn new(max_power: f64, steepness: f64, turning_point: f64) -> Self {
        let e = (-steepness * turning_point).exp();
        EhCircuit {
            m: max_power,
            upsilon: steepness,
            varsigma: turning_point,
            x: 1.0 / (1.0 + e),
            y: max_power * e,
        }
    }

    /// Saturation output power M.
    pub fn max_power(&self) -> f64 {
        self.m
    }
    pub fn steepness(&self) -> f64 {
        self.upsilon
    }
    pub fn turning_point(&self) -> f64 {
        self.varsigma
    }
    pub fn x(&self) -> f64 {
        self.x
    }
    pub fn y(&self) -> f64 {
        self.y
    }

    /// Harvested DC power for received RF power `q` (watts).
    pub fn harvested_power(&self, q: f64) -> f64 {
        self.m / (self.x * (1.0 + (-self.upsilon * (q - self.varsigma)).exp())) - self.y
    }

    /// Received RF power needed to harvest exactly `e_min`.
    pub fn invert_threshold(&self, e_min: f64) -> Result<f64> {
        let unreachable = Error::ThresholdUnreachable {
            e_min,
            max_power: self.m,
        };
        if !(e_min >= 0.0) || e_min >= self.m {
            return Err(unreachable);
        }
        let arg = self.m / ((e_min + self.y) * self.x) - 1.0;
        if !(arg > 0.0) || !arg.is_finite() {
            return Err(unreachable);
        }
        Ok(self.varsigma - arg.ln() / self.upsilon)
    }
}

pub fn harvested_power(circuit: &EhCircuit, q: f64) -> f64 {
    circuit.harvested_power(q)
}

pub fn invert_threshold(circuit: &EhCircuit, e_min: f64) -> Result<f64> {
    circuit.invert_threshold(e_min)
}

/// Total RF power `Σ_i |gᴴ p_i|²` collected by an ER from every stream.
pub fn received_power(g: &[Complex64], p: &PrecoderState) -> f64 {
    p.columns().map(|col| dot_h(g, col).norm_sqr()).sum()
}

/// First-order expansion of `|gᴴp|²` around `p_anchor`; a global minorant.
pub fn linearized_received_power(
    g: &[Complex64],
    p: &[Complex64],
    p_anchor: &[Complex64],
) -> Result<f64> {
    if g.len() != p.len() || g.len() != p_anchor.len() {
        return Err(Error::DimensionMismatch(format!(
            "channel {}, precoder {}, anchor {}",
            g.len(),
            p.len(),
            p_anchor.len()
        )));
    }
    Ok(linearized_unchecked(g, p, p_anchor))
}

#[inline]
pub(crate) fn linearized_unchecked(g: &[Complex64], p: &[Complex64], p_anchor: &[Complex64]) -> f64 {
    let a = dot_h(g, p_anchor);
    2.0 * (a.conj() * dot_h(g, p)).re - a.norm_sqr()
}

/// Linearized slack `Σ_i U(g_l, p_i, p_i⁽ᵗ⁾) − Ẽ_l` for precomputed targets Ẽ_l.
pub fn linearized_slack(
    p: &PrecoderState,
    anchor: &PrecoderState,
    ers: &[Vec<Complex64>],
    targets: &[f64],
) -> Vec<f64> {
    ers.iter()
        .zip(targets)
        .map(|(g, target)| {
            p.columns()
                .zip(anchor.columns())
                .map(|(col, anc)| linearized_unchecked(g, col, anc))
                .sum::<f64>()
                - target
        })
        .collect()
}

/// Linearized EH slack per ER; nonnegative entries guarantee the harvested
/// power reaches its threshold at `p`.
pub fn eh_constraint_slack(
    p: &PrecoderState,
    anchor: &PrecoderState,
    scenario: &Scenario,
    circuits: &[EhCircuit],
    thresholds: &[f64],
) -> Result<Vec<f64>> {
    if circuits.len() != scenario.g.len() || thresholds.len() != scenario.g.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} ER channels, {} circuits, {} thresholds",
            scenario.g.len(),
            circuits.len(),
            thresholds.len()
        )));
    }
    p.check_dims(scenario)?;
    anchor.check_dims(scenario)?;
    let targets = circuits
        .iter()
        .zip(thresholds)
        .map(|(c, &e)| c.invert_threshold(e))
        .collect::<Result<Vec<_>>>()?;
    Ok(linearized_slack(p, anchor, &scenario.g, &targets))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::norm_sqr;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn default_circuit() -> EhCircuit {
        EhCircuit::new(0.024, 150.0, 0.014)
    }

    fn cn(rng: &mut ChaCha8Rng, n: usize) -> Vec<Complex64> {
        (0..n)
            .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
            .collect()
    }

    #[test]
    fn derived_constants() {
        let c = default_circuit();
        assert!(c.x() > 0.5 && c.x() < 1.0);
        assert!(c.y() > 0.0);
    }

    #[test]
    fn zero_input_harvests_nothing() {
        let c = default_circuit();
        assert!(c.harvested_power(0.0).abs() < 1e-15);
    }

    #[test]
    fn midpoint_value() {
        let c = default_circuit();
        let e = (c.steepness() * c.turning_point()).exp();
        let expected = c.max_power() * (e - 1.0) / (2.0 * e);
        assert!((c.harvested_power(c.turning_point()) - expected).abs() < 1e-15);
    }

    #[test]
    fn saturates_at_max_power() {
        let c = default_circuit();
        assert!((c.harvested_power(10.0) - c.max_power()).abs() < 1e-12);
    }

    #[test]
    fn inversion_anchors() {
        let c = default_circuit();
        assert!(c.invert_threshold(0.0).unwrap().abs() < 1e-12);
        let mid = c.harvested_power(c.turning_point());
        assert!((c.invert_threshold(mid).unwrap() - c.turning_point()).abs() < 1e-12);
        let q = c.invert_threshold(0.006).unwrap();
        assert!((c.harvested_power(q) - 0.006).abs() < 1e-9 * c.max_power());
    }

    #[test]
    fn unreachable_thresholds() {
        let c = default_circuit();
        assert!(matches!(c.invert_threshold(0.024), Err(Error::ThresholdUnreachable { .. })));
        assert!(matches!(c.invert_threshold(1.0), Err(Error::ThresholdUnreachable { .. })));
        assert!(matches!(c.invert_threshold(-1e-3), Err(Error::ThresholdUnreachable { .. })));
        assert!(c.invert_threshold(f64::NAN).is_err());
    }

    #[test]
    fn linearization_is_tight_at_anchor_and_vanishes_for_zero_anchor() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = cn(&mut rng, 4);
        let p = cn(&mut rng, 4);
        let exact = dot_h(&g, &p).norm_sqr();
        assert!((linearized_received_power(&g, &p, &p).unwrap() - exact).abs() < 1e-14);
        let zero = vec![Complex64::new(0.0, 0.0); 4];
        assert_eq!(linearized_received_power(&g, &p, &zero).unwrap(), 0.0);
        assert!(linearized_received_power(&g, &p, &zero[..3]).is_err());
    }

    #[test]
    fn linearization_gradient_matches_finite_differences_at_anchor() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g = cn(&mut rng, 3);
        let anchor = cn(&mut rng, 3);
        let h = 1e-6;
        for i in 0..3 {
            for dir in [Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)] {
                let mut plus = anchor.clone();
                let mut minus = anchor.clone();
                plus[i] += dir * h;
                minus[i] -= dir * h;
                let exact = (dot_h(&g, &plus).norm_sqr() - dot_h(&g, &minus).norm_sqr()) / (2.0 * h);
                let lin = (linearized_unchecked(&g, &plus, &anchor) - linearized_unchecked(&g, &minus, &anchor))
                    / (2.0 * h);
                let scale = exact.abs().max(1e-3);
                assert!((exact - lin).abs() / scale < 1e-6, "{exact} vs {lin}");
            }
        }
    }

    proptest! {
        #[test]
        fn harvested_power_is_increasing_and_bounded(q1 in 0.0f64..0.08, dq in 1e-6f64..0.02) {
            let c = default_circuit();
            let a = c.harvested_power(q1);
            let b = c.harvested_power(q1 + dq);
            prop_assert!(b > a);
            prop_assert!(a >= -1e-15 && b < c.max_power());
            prop_assert!(c.harvested_power(1e3) <= c.max_power());
        }

        #[test]
        fn inversion_round_trips(q in 0.0f64..0.05) {
            let c = default_circuit();
            let e = c.harvested_power(q).max(0.0);
            let back = c.invert_threshold(e).unwrap();
            prop_assert!((c.harvested_power(back) - e).abs() <= 1e-9 * c.max_power());
        }

        #[test]
        fn linearization_is_affine_minorant(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = cn(&mut rng, 4);
            let p = cn(&mut rng, 4);
            let a = cn(&mut rng, 4);
            let u = linearized_unchecked(&g, &p, &a);
            prop_assert!(u <= dot_h(&g, &p).norm_sqr() + 1e-12 * (1.0 + norm_sqr(&p)));
        }
    }
}
