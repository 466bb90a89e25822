//! Fractional-programming surrogates of the log-SINR rates.
//!
//! For fixed auxiliaries `(ϑ, φ)` each surrogate
//! `g = ln(1+ϑ) − ϑ + 2√(1+ϑ)·Re{φ*·hᴴp} − |φ|²·T`
//! is concave in the precoders and never exceeds `ln(1+γ)`; it touches the
//! rate when `ϑ = γ` and `φ = √(1+ϑ)·hᴴp / T`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::linalg::dot_h;
use crate::rsma::{compute_sinrs, PrecoderState};
use crate::scenario::Scenario;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuxState {
    pub theta_c: Vec<f64>,
    pub theta_p: Vec<f64>,
    pub phi_c: Vec<Complex64>,
    pub phi_p: Vec<Complex64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Common,
    Private,
}

/// Per-user products `h_kᴴp_c`, `h_kᴴp_k` and the two denominators
/// `T_c = |h_kᴴp_c|² + Σ_j|h_kᴴp_j|² + σ²`, `T_p = T_c − |h_kᴴp_c|²`.
pub(crate) struct StreamTerms {
    pub common: Complex64,
    pub own: Complex64,
    pub t_c: f64,
    pub t_p: f64,
}

pub(crate) fn stream_terms(p: &PrecoderState, s: &Scenario, k: usize) -> StreamTerms {
    let hk = &s.h[k];
    let common = dot_h(hk, &p.p_common);
    let mut private_sum = 0.0;
    let mut own = Complex64::new(0.0, 0.0);
    for (j, pj) in p.p_private.iter().enumerate() {
        let v = dot_h(hk, pj);
        private_sum += v.norm_sqr();
        if j == k {
            own = v;
        }
    }
    let t_p = private_sum + s.noise_comm;
    StreamTerms {
        common,
        own,
        t_c: common.norm_sqr() + t_p,
        t_p,
    }
}

/// `ϑ ← γ` for both streams of every user.
pub fn update_theta(p: &PrecoderState, s: &Scenario) -> Result<(Vec<f64>, Vec<f64>)> {
    compute_sinrs(p, s)
}

/// `φ ← √(1+ϑ)·hᴴp / T` for both streams of every user.
pub fn update_phi(
    p: &PrecoderState,
    s: &Scenario,
    theta_c: &[f64],
    theta_p: &[f64],
) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
    p.check_dims(s)?;
    Ok((0..s.n_users())
        .map(|k| {
            let t = stream_terms(p, s, k);
            (
                t.common * ((1.0 + theta_c[k]).sqrt() / t.t_c),
                t.own * ((1.0 + theta_p[k]).sqrt() / t.t_p),
            )
        })
        .unzip())
}

impl AuxState {
    /// Auxiliaries at which every surrogate is tight for `p`.
    pub fn optimal(p: &PrecoderState, s: &Scenario) -> Result<Self> {
        let (theta_c, theta_p) = update_theta(p, s)?;
        let (phi_c, phi_p) = update_phi(p, s, &theta_c, &theta_p)?;
        Ok(AuxState { theta_c, theta_p, phi_c, phi_p })
    }

    pub fn zeros(k: usize) -> Self {
        AuxState {
            theta_c: vec![0.0; k],
            theta_p: vec![0.0; k],
            phi_c: vec![Complex64::new(0.0, 0.0); k],
            phi_p: vec![Complex64::new(0.0, 0.0); k],
        }
    }
}

#[inline]
pub(crate) fn surrogate_value(theta: f64, phi: Complex64, signal: Complex64, t: f64) -> f64 {
    theta.ln_1p() - theta + 2.0 * (1.0 + theta).sqrt() * (phi.conj() * signal).re - phi.norm_sqr() * t
}

/// Surrogate rate `g_{i,k}` in nats.
pub fn surrogate_g(p: &PrecoderState, s: &Scenario, aux: &AuxState, stream: Stream, k: usize) -> f64 {
    let t = stream_terms(p, s, k);
    match stream {
        Stream::Common => surrogate_value(aux.theta_c[k], aux.phi_c[k], t.common, t.t_c),
        Stream::Private => surrogate_value(aux.theta_p[k], aux.phi_p[k], t.own, t.t_p),
    }
}
