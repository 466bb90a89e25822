//! One-layer RSMA transmit model: SINRs, rates, the max-min objective and
//! constraint slacks.
//!
//! Rates used by the optimizer are in nats; [`RateReport`] carries bits.

use std::f64::consts::LN_2;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::linalg::{dot_h, norm_sqr, CVec, ZERO};
use crate::scenario::Scenario;
use crate::sensing;

/// Precoders for the common stream and the K private streams, together with
/// the common-rate split `c` (nats) and the max-min auxiliary `r` (nats).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecoderState {
    pub p_common: CVec,
    pub p_private: Vec<CVec>,
    pub c_alloc: Vec<f64>,
    pub mmf_aux: f64,
}

impl PrecoderState {
    pub fn zeros(n_tx: usize, n_users: usize) -> Self {
        PrecoderState {
            p_common: vec![ZERO; n_tx],
            p_private: vec![vec![ZERO; n_tx]; n_users],
            c_alloc: vec![0.0; n_users],
            mmf_aux: 0.0,
        }
    }

    pub fn n_tx(&self) -> usize {
        self.p_common.len()
    }

    pub fn n_users(&self) -> usize {
        self.p_private.len()
    }

    /// Precoder columns with the common stream first.
    pub fn columns(&self) -> impl Iterator<Item = &[Complex64]> + '_ {
        std::iter::once(self.p_common.as_slice()).chain(self.p_private.iter().map(Vec::as_slice))
    }

    pub fn columns_mut(&mut self) -> impl Iterator<Item = &mut CVec> + '_ {
        std::iter::once(&mut self.p_common).chain(self.p_private.iter_mut())
    }

    /// Column `i` of the stacked `[p_c, p_1, …, p_K]` matrix.
    pub fn column(&self, i: usize) -> &[Complex64] {
        if i == 0 {
            &self.p_common
        } else {
            &self.p_private[i - 1]
        }
    }

    pub fn check_dims(&self, s: &Scenario) -> Result<()> {
        let n = s.n_tx();
        if self.n_users() != s.n_users()
            || self.c_alloc.len() != s.n_users()
            || self.columns().any(|c| c.len() != n)
        {
            return Err(Error::DimensionMismatch(format!(
                "precoder with {} private columns of length {} against {} users and {} antennas",
                self.n_users(),
                self.n_tx(),
                s.n_users(),
                n
            )));
        }
        Ok(())
    }

    /// Scale every precoder column by `t`; `c` and `r` are untouched.
    pub fn scale(&mut self, t: f64) {
        for col in self.columns_mut() {
            for z in col.iter_mut() {
                *z *= t;
            }
        }
    }
}

/// `tr(PPᴴ)`: squared Frobenius norm of all K+1 columns.
pub fn total_power(p: &PrecoderState) -> f64 {
    p.columns().map(norm_sqr).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub sinr_common: Vec<f64>,
    pub sinr_private: Vec<f64>,
    /// Bits per channel use.
    pub rate_common: Vec<f64>,
    pub rate_private: Vec<f64>,
    pub common_capacity: f64,
    pub per_user_total: Vec<f64>,
    pub mmf_rate: f64,
}

/// `gains[k][i] = |h_kᴴ p_i|²` with the common column at `i = 0`.
pub(crate) fn stream_gains(p: &PrecoderState, s: &Scenario) -> Vec<Vec<f64>> {
    s.h.iter()
        .map(|hk| p.columns().map(|col| dot_h(hk, col).norm_sqr()).collect())
        .collect()
}

/// SINRs of the common and private streams at each user, from `|h_kᴴp_i|²`.
pub(crate) fn sinrs_from_gains(gains: &[Vec<f64>], noise: f64) -> (Vec<f64>, Vec<f64>) {
    gains
        .iter()
        .enumerate()
        .map(|(k, row)| {
            let private_sum: f64 = row[1..].iter().sum();
            let own = row[k + 1];
            (row[0] / (private_sum + noise), own / (private_sum - own + noise))
        })
        .unzip()
}

/// Common and private SINRs `(γ_c, γ_p)` at every user.
pub fn compute_sinrs(p: &PrecoderState, s: &Scenario) -> Result<(Vec<f64>, Vec<f64>)> {
    p.check_dims(s)?;
    Ok(sinrs_from_gains(&stream_gains(p, s), s.noise_comm))
}

impl RateReport {
    /// Fill in rates from SINRs; `c_alloc` is in nats as stored in [`PrecoderState`].
    pub fn from_sinrs(sinr_common: Vec<f64>, sinr_private: Vec<f64>, c_alloc: &[f64]) -> Self {
        let bits = |g: &f64| g.ln_1p() / LN_2;
        let rate_common: Vec<f64> = sinr_common.iter().map(bits).collect();
        let rate_private: Vec<f64> = sinr_private.iter().map(bits).collect();
        let common_capacity = rate_common.iter().cloned().fold(f64::INFINITY, f64::min);
        let per_user_total: Vec<f64> = rate_private.iter().zip(c_alloc).map(|(r, c)| c / LN_2 + r).collect();
        let mmf_rate = per_user_total.iter().cloned().fold(f64::INFINITY, f64::min);
        RateReport {
            sinr_common,
            sinr_private,
            rate_common,
            rate_private,
            common_capacity,
            per_user_total,
            mmf_rate,
        }
    }
}

pub fn compute_rates(p: &PrecoderState, s: &Scenario) -> Result<RateReport> {
    let (gc, gp) = compute_sinrs(p, s)?;
    Ok(RateReport::from_sinrs(gc, gp, &p.c_alloc))
}

/// Best max-min rate reachable by splitting a common budget `common` over users
/// with private rates `private`: the largest `t` with `Σ max(0, t − R_k) ≤ common`.
/// Returns `t` and the allocation `c_k = max(0, t − R_k)`.
pub fn water_fill(common: f64, private: &[f64]) -> (f64, Vec<f64>) {
    let mut sorted: Vec<f64> = private.to_vec();
    let level = water_level(common, &mut sorted);
    let alloc = private.iter().map(|r| (level - r).max(0.0)).collect();
    (level, alloc)
}

/// Water level only; sorts `private` in place.
pub(crate) fn water_level(common: f64, private: &mut [f64]) -> f64 {
    let common = common.max(0.0);
    private.sort_unstable_by(f64::total_cmp);
    let mut prefix = 0.0;
    for m in 1..=private.len() {
        prefix += private[m - 1];
        let t = (common + prefix) / m as f64;
        if m == private.len() || t <= private[m] {
            return t;
        }
    }
    0.0
}

/// Multiple-access scheme: RSMA uses the common stream, SDMA switches it off.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Rsma,
    Sdma,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Rsma => "rsma",
            Mode::Sdma => "sdma",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rsma" => Ok(Mode::Rsma),
            "sdma" => Ok(Mode::Sdma),
            other => Err(Error::Parse(format!("unknown mode '{other}' (expected rsma or sdma)"))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Max-min rate in nats with the best common-rate split for these precoders.
pub fn optimal_mmf(p: &PrecoderState, s: &Scenario, mode: Mode) -> Result<(f64, Vec<f64>)> {
    let (gc, gp) = compute_sinrs(p, s)?;
    Ok(mmf_from_sinrs(&gc, &gp, mode))
}

pub(crate) fn mmf_from_sinrs(gc: &[f64], gp: &[f64], mode: Mode) -> (f64, Vec<f64>) {
    let rp: Vec<f64> = gp.iter().map(|g| g.ln_1p()).collect();
    match mode {
        Mode::Sdma => (rp.iter().cloned().fold(f64::INFINITY, f64::min), vec![0.0; rp.len()]),
        Mode::Rsma => {
            let rc = gc.iter().map(|g| g.ln_1p()).fold(f64::INFINITY, f64::min);
            water_fill(rc, &rp)
        }
    }
}

/// `min_k (c_k + R_{p,k}) − λ·tr(F⁻¹)` with the stored allocation `c`, in nats.
pub fn objective(p: &PrecoderState, s: &Scenario, cfg: &SystemConfig) -> Result<f64> {
    let (_, gp) = compute_sinrs(p, s)?;
    let mmf = gp
        .iter()
        .zip(&p.c_alloc)
        .map(|(g, c)| c + g.ln_1p())
        .fold(f64::INFINITY, f64::min);
    Ok(mmf - cfg.tradeoff * crb(p, s, cfg.fim_det_tol)?)
}

/// Objective with the common split chosen optimally for the given precoders.
pub fn objective_with_optimal_split(p: &PrecoderState, s: &Scenario, tradeoff: f64, det_tol: f64, mode: Mode) -> Result<f64> {
    let (mmf, _) = optimal_mmf(p, s, mode)?;
    Ok(mmf - tradeoff * crb(p, s, det_tol)?)
}

fn crb(p: &PrecoderState, s: &Scenario, det_tol: f64) -> Result<f64> {
    sensing::crb_trace_with_tol(&sensing::fim(p, s)?, det_tol)
}

/// Signed constraint slacks; a point is feasible when every entry is ≥ −tol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    /// `min_k R_{c,k} − Σ c_k`, nats.
    pub common_rate: f64,
    /// `c_k`, nats.
    pub allocation: Vec<f64>,
    /// `(P_t − tr(PPᴴ)) / P_t`.
    pub power: f64,
    /// `(Γ_l − E_l) / M_l` for every ER.
    pub energy: Vec<f64>,
    /// Harvested DC power per ER, watts.
    pub harvested: Vec<f64>,
    pub tol: f64,
}

impl FeasibilityReport {
    pub fn min_slack(&self) -> f64 {
        std::iter::once(self.common_rate)
            .chain(self.allocation.iter().copied())
            .chain(std::iter::once(self.power))
            .chain(self.energy.iter().copied())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn is_feasible(&self) -> bool {
        self.min_slack() >= -self.tol
    }
}

pub fn check_feasibility(p: &PrecoderState, s: &Scenario, cfg: &SystemConfig, tol: f64) -> Result<FeasibilityReport> {
    let (gc, _) = compute_sinrs(p, s)?;
    let common = gc.iter().map(|g| g.ln_1p()).fold(f64::INFINITY, f64::min);
    let budget = cfg.power_budget();
    let circuits = cfg.circuits();
    if circuits.len() != s.n_ers() {
        return Err(Error::DimensionMismatch(format!("{} circuits for {} ERs", circuits.len(), s.n_ers())));
    }
    let harvested: Vec<f64> = s
        .g
        .iter()
        .zip(&circuits)
        .map(|(g, c)| c.harvested_power(crate::energy::received_power(g, p)))
        .collect();
    let energy = harvested
        .iter()
        .zip(cfg.thresholds())
        .zip(&circuits)
        .map(|((h, e), c)| (h - e) / c.max_power())
        .collect();
    Ok(FeasibilityReport {
        common_rate: common - p.c_alloc.iter().sum::<f64>(),
        allocation: p.c_alloc.clone(),
        power: (budget - total_power(p)) / budget,
        energy,
        harvested,
        tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::generate_scenario;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_state(rng: &mut ChaCha8Rng, n: usize, k: usize) -> PrecoderState {
        let mut cn = || Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
        PrecoderState {
            p_common: (0..n).map(|_| cn()).collect(),
            p_private: (0..k).map(|_| (0..n).map(|_| cn()).collect()).collect(),
            c_alloc: vec![0.0; k],
            mmf_aux: 0.0,
        }
    }

    fn one_user(h: f64, p: f64) -> (Scenario, PrecoderState) {
        let s = Scenario {
            h: vec![vec![Complex64::new(h, 0.0)]],
            g: vec![],
            theta: 0.0,
            alpha: Complex64::new(1.0, 0.0),
            n_rx: 1,
            noise_comm: 1.0,
            noise_sense: 1.0,
        };
        let mut st = PrecoderState::zeros(1, 1);
        st.p_private[0][0] = Complex64::new(p, 0.0);
        (s, st)
    }

    #[test]
    fn zero_precoder_gives_zero_sinr() {
        let s = generate_scenario(&SystemConfig::default(), 0).unwrap();
        let (gc, gp) = compute_sinrs(&PrecoderState::zeros(4, 4), &s).unwrap();
        assert!(gc.iter().chain(&gp).all(|&g| g == 0.0));
    }

    #[test]
    fn single_user_at_noise_level() {
        let (s, p) = one_user(2.0, 0.5);
        let (_, gp) = compute_sinrs(&p, &s).unwrap();
        assert_eq!(gp[0], 1.0);
    }

    #[test]
    fn rates_in_bits() {
        let r = RateReport::from_sinrs(vec![0.0, 1.0, 3.0], vec![0.0, 1.0, 3.0], &[0.0; 3]);
        assert_eq!(r.rate_common[0], 0.0);
        assert!((r.rate_common[1] - 1.0).abs() < 1e-15);
        assert!((r.rate_private[2] - 2.0).abs() < 1e-15);
        assert_eq!(r.common_capacity, 0.0);
    }

    #[test]
    fn report_invariants() {
        let s = generate_scenario(&SystemConfig::default(), 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut p = random_state(&mut rng, 4, 4);
        p.c_alloc = vec![0.1, 0.0, 0.2, 0.05];
        let r = compute_rates(&p, &s).unwrap();
        for k in 0..4 {
            assert!(r.common_capacity <= r.rate_common[k]);
            assert!((r.per_user_total[k] - (p.c_alloc[k] / LN_2 + r.rate_private[k])).abs() < 1e-15);
        }
    }

    #[test]
    fn dimension_mismatch() {
        let s = generate_scenario(&SystemConfig::default(), 0).unwrap();
        assert!(compute_sinrs(&PrecoderState::zeros(3, 4), &s).is_err());
        assert!(compute_sinrs(&PrecoderState::zeros(4, 3), &s).is_err());
    }

    #[test]
    fn power_examples() {
        assert_eq!(total_power(&PrecoderState::zeros(3, 2)), 0.0);
        let mut p = PrecoderState::zeros(3, 2);
        p.p_private[1][2] = Complex64::new(0.0, 1.0);
        assert_eq!(total_power(&p), 1.0);
    }

    #[test]
    fn water_fill_levels() {
        let (t, c) = water_fill(0.0, &[1.0, 2.0]);
        assert_eq!((t, c), (1.0, vec![0.0, 0.0]));
        let (t, c) = water_fill(1.0, &[1.0, 2.0]);
        assert!((t - 2.0).abs() < 1e-15 && (c[0] - 1.0).abs() < 1e-15 && c[1] == 0.0);
        let (t, c) = water_fill(3.0, &[1.0, 2.0]);
        assert!((t - 3.0).abs() < 1e-15);
        assert!((c.iter().sum::<f64>() - 3.0).abs() < 1e-15);
        let (t, _) = water_fill(-1.0, &[0.5]);
        assert_eq!(t, 0.5);
    }

    #[test]
    fn zero_tradeoff_objective_is_mmf() {
        let cfg = SystemConfig { tradeoff: 0.0, ..Default::default() };
        let s = generate_scenario(&cfg, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = random_state(&mut rng, 4, 4);
        let (_, gp) = compute_sinrs(&p, &s).unwrap();
        let mmf = gp.iter().map(|g| g.ln_1p()).fold(f64::INFINITY, f64::min);
        assert_eq!(objective(&p, &s, &cfg).unwrap(), mmf);
    }

    #[test]
    fn feasibility_of_zero_precoder() {
        let cfg = SystemConfig::default();
        let s = generate_scenario(&cfg, 0).unwrap();
        let f = check_feasibility(&PrecoderState::zeros(4, 4), &s, &cfg, 1e-3).unwrap();
        assert!(f.energy.iter().all(|&e| e < 0.0));
        assert!(f.common_rate >= 0.0 && f.power > 0.0);
        assert!(f.allocation.iter().all(|&c| c >= 0.0));
        assert!(!f.is_feasible());
    }

    #[test]
    fn full_power_has_zero_power_slack() {
        let cfg = SystemConfig { power_budget: Some(2.0), ..Default::default() };
        let s = generate_scenario(&cfg, 0).unwrap();
        let mut p = PrecoderState::zeros(4, 4);
        p.p_common[0] = Complex64::new(1.0, 1.0);
        assert_eq!(check_feasibility(&p, &s, &cfg, 1e-3).unwrap().power, 0.0);
    }

    proptest! {
        #[test]
        fn power_is_homogeneous(seed in 0u64..1000, t in 0.1f64..10.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = random_state(&mut rng, 3, 2);
            let mut q = p.clone();
            q.scale(t);
            prop_assert!((total_power(&q) - t * t * total_power(&p)).abs() <= 1e-12 * t * t * total_power(&p));
        }

        #[test]
        fn objective_is_phase_invariant(seed in 0u64..200, col in 0usize..5, phase in 0.0f64..std::f64::consts::TAU) {
            let cfg = SystemConfig::default();
            let s = generate_scenario(&cfg, seed).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = random_state(&mut rng, 4, 4);
            let mut q = p.clone();
            let rot = Complex64::from_polar(1.0, phase);
            let target = q.columns_mut().nth(col).unwrap();
            for z in target.iter_mut() { *z *= rot; }
            let a = objective(&p, &s, &cfg).unwrap();
            let b = objective(&q, &s, &cfg).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
        }

        #[test]
        fn water_fill_is_budget_tight(common in 0.0f64..5.0, rp in proptest::collection::vec(0.0f64..5.0, 1..6)) {
            let (t, c) = water_fill(common, &rp);
            prop_assert!((c.iter().sum::<f64>() - common).abs() < 1e-9);
            for (ck, r) in c.iter().zip(&rp) {
                prop_assert!(*ck >= 0.0 && ck + r >= t - 1e-12);
            }
        }

        #[test]
        fn single_user_without_common_has_no_interference(h in 0.1f64..3.0, p in 0.0f64..3.0) {
            let (s, st) = one_user(h, p);
            let (_, gp) = compute_sinrs(&st, &s).unwrap();
            prop_assert_eq!(gp[0], (h * p).powi(2));
        }
    }
}
