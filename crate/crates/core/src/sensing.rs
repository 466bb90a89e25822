//! Target sensing: ULA steering, Fisher information over `[θ, Re α, Im α]`,
//! the CRB trace and its linear surrogate around an anchor precoder.

use nalgebra::Matrix3;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{dot_h, hermitian_min_eigenvalue, hermitian_part, CMat, CVec, J};
use crate::rsma::PrecoderState;
use crate::scenario::Scenario;

/// Default singularity guard: `|det F| < tol·‖F‖³` is treated as singular.
pub const DEFAULT_FIM_DET_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SteeringPair {
    pub a_tx: CVec,
    pub a_rx: CVec,
    pub da_tx: CVec,
    pub da_rx: CVec,
}

fn ula(theta: f64, n: usize) -> (CVec, CVec) {
    let (s, c) = theta.sin_cos();
    let center = (n as f64 - 1.0) / 2.0;
    (0..n)
        .map(|i| {
            let m = i as f64 - center;
            let a = Complex64::from_polar(1.0, m * std::f64::consts::PI * s);
            (a, J * (m * std::f64::consts::PI * c) * a)
        })
        .unzip()
}

/// Symmetric-index ULA steering vectors and their θ-derivatives.
pub fn steering(theta: f64, n_tx: usize, n_rx: usize) -> SteeringPair {
    let (a_tx, da_tx) = ula(theta, n_tx);
    let (a_rx, da_rx) = ula(theta, n_rx);
    SteeringPair { a_tx, a_rx, da_tx, da_rx }
}

/// Response matrices `A = a_r a_tᴴ` and `Ȧ = ȧ_r a_tᴴ + a_r ȧ_tᴴ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    pub a_mat: CMat,
    pub da_mat: CMat,
}

impl Geometry {
    pub fn new(theta: f64, n_tx: usize, n_rx: usize) -> Self {
        let sp = steering(theta, n_tx, n_rx);
        let a_mat = CMat::from_fn(n_rx, n_tx, |r, t| sp.a_rx[r] * sp.a_tx[t].conj());
        let da_mat = CMat::from_fn(n_rx, n_tx, |r, t| {
            sp.da_rx[r] * sp.a_tx[t].conj() + sp.a_rx[r] * sp.da_tx[t].conj()
        });
        Geometry { a_mat, da_mat }
    }

    pub fn for_scenario(s: &Scenario) -> Self {
        Self::new(s.theta, s.n_tx(), s.n_rx)
    }

    /// FIM for `n_cols` precoder columns with entries `col(i, t)`, accumulated
    /// over streams. `buf` needs room for `2·N_r` values.
    pub(crate) fn fim_matrix(
        &self,
        n_cols: usize,
        col: impl Fn(usize, usize) -> Complex64,
        alpha: Complex64,
        kappa: f64,
        buf: &mut [Complex64],
    ) -> Matrix3<f64> {
        let n_rx = self.a_mat.nrows();
        let n_tx = self.a_mat.ncols();
        let (ap, dap) = buf[..2 * n_rx].split_at_mut(n_rx);
        let (mut t_dd, mut t_aa, mut u) = (0.0, 0.0, Complex64::new(0.0, 0.0));
        for i in 0..n_cols {
            ap.fill(Complex64::new(0.0, 0.0));
            dap.fill(Complex64::new(0.0, 0.0));
            for t in 0..n_tx {
                let p = col(i, t);
                for r in 0..n_rx {
                    ap[r] += self.a_mat[(r, t)] * p;
                    dap[r] += self.da_mat[(r, t)] * p;
                }
            }
            t_dd += dap.iter().map(|z| z.norm_sqr()).sum::<f64>();
            t_aa += ap.iter().map(|z| z.norm_sqr()).sum::<f64>();
            // tr(A p pᴴ Ȧᴴ) = (Ȧp)ᴴ(Ap)
            u += dot_h(dap, ap);
        }
        let u = alpha.conj() * u;
        let f11 = kappa * alpha.norm_sqr() * t_dd;
        let f12 = kappa * u.re;
        let f13 = -kappa * u.im;
        let f22 = kappa * t_aa;
        Matrix3::new(f11, f12, f13, f12, f22, 0.0, f13, 0.0, f22)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FimBundle {
    pub f: Matrix3<f64>,
    pub a_mat: CMat,
    pub da_mat: CMat,
    pub kappa: f64,
    pub r_x: CMat,
    pub alpha: Complex64,
}

/// Blockwise Fisher information for the echo `α A(θ) P s`.
pub fn fim(p: &PrecoderState, s: &Scenario) -> Result<FimBundle> {
    p.check_dims(s)?;
    let geom = Geometry::for_scenario(s);
    let kappa = 2.0 / s.noise_sense;
    let n = p.n_tx();
    let mut r_x = CMat::zeros(n, n);
    for col in p.columns() {
        for a in 0..n {
            for b in 0..n {
                r_x[(a, b)] += col[a] * col[b].conj();
            }
        }
    }
    let adag = geom.da_mat.adjoint();
    let t_dd = (&geom.da_mat * &r_x * &adag).trace().re;
    let t_aa = (&geom.a_mat * &r_x * geom.a_mat.adjoint()).trace().re;
    let u = s.alpha.conj() * (&geom.a_mat * &r_x * &adag).trace();
    let f11 = kappa * s.alpha.norm_sqr() * t_dd;
    let (f12, f13) = (kappa * u.re, kappa * (J * u).re);
    let f22 = kappa * t_aa;
    let f = Matrix3::new(f11, f12, f13, f12, f22, 0.0, f13, 0.0, f22);
    Ok(FimBundle {
        f,
        a_mat: geom.a_mat,
        da_mat: geom.da_mat,
        kappa,
        r_x,
        alpha: s.alpha,
    })
}

/// Inverse of a 3×3 matrix via its adjugate, guarded against singularity.
pub fn inverse3(f: &Matrix3<f64>, det_tol: f64) -> Result<Matrix3<f64>> {
    let m = |r: usize, c: usize| f[(r, c)];
    let cof = |r0: usize, r1: usize, c0: usize, c1: usize| m(r0, c0) * m(r1, c1) - m(r0, c1) * m(r1, c0);
    let adj = Matrix3::new(
        cof(1, 2, 1, 2),
        -cof(0, 2, 1, 2),
        cof(0, 1, 1, 2),
        -cof(1, 2, 0, 2),
        cof(0, 2, 0, 2),
        -cof(0, 1, 0, 2),
        cof(1, 2, 0, 1),
        -cof(0, 2, 0, 1),
        cof(0, 1, 0, 1),
    );
    let det = m(0, 0) * adj[(0, 0)] + m(0, 1) * adj[(1, 0)] + m(0, 2) * adj[(2, 0)];
    let threshold = det_tol * f.norm().powi(3);
    if !(det.abs() >= threshold) || det == 0.0 {
        return Err(Error::SingularFim { det, threshold });
    }
    Ok(adj / det)
}

/// `tr(F⁻¹)` with the default singularity guard.
pub fn crb_trace(bundle: &FimBundle) -> Result<f64> {
    crb_trace_with_tol(bundle, DEFAULT_FIM_DET_TOL)
}

pub fn crb_trace_with_tol(bundle: &FimBundle, det_tol: f64) -> Result<f64> {
    Ok(inverse3(&bundle.f, det_tol)?.trace())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateBundle {
    pub phi: Matrix3<f64>,
    pub b_mat: CMat,
    pub lambda_mat: CMat,
    pub zeta: f64,
}

/// Gradient matrix of `−tr(F⁻¹)` with respect to `R_x`, shifted to be PSD.
pub fn surrogate_matrices(bundle: &FimBundle, psd_margin: f64, det_tol: f64) -> Result<SurrogateBundle> {
    let inv = inverse3(&bundle.f, det_tol)?;
    let phi = inv * inv;
    let a = &bundle.a_mat;
    let da = &bundle.da_mat;
    let alpha = bundle.alpha;
    let c = |x: f64| Complex64::new(x, 0.0);
    let b_mat = (da.adjoint() * da) * c(phi[(0, 0)] * alpha.norm_sqr())
        + (da.adjoint() * a) * (Complex64::new(phi[(0, 1)], phi[(0, 2)]) * alpha.conj() * 2.0)
        + (a.adjoint() * a) * c(phi[(1, 1)] + phi[(2, 2)]);
    let b_mat = b_mat * c(bundle.kappa);
    let sym = hermitian_part(&b_mat);
    let zeta = (-hermitian_min_eigenvalue(&sym)).max(0.0) + psd_margin;
    let n = sym.nrows();
    let lambda_mat = sym + CMat::identity(n, n) * c(zeta);
    Ok(SurrogateBundle { phi, b_mat, lambda_mat, zeta })
}

/// `2·Re tr(P_anchor Pᴴ Λ)`, the linear sensing surrogate before scaling by λ.
pub fn surrogate_sensing_term(p: &PrecoderState, anchor: &PrecoderState, lambda_mat: &CMat) -> f64 {
    p.columns()
        .zip(anchor.columns())
        .map(|(col, anc)| {
            let q = crate::linalg::mat_vec(lambda_mat, anc);
            2.0 * dot_h(col, &q).re
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SystemConfig;
    use crate::scenario::generate_scenario;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_state(rng: &mut ChaCha8Rng, n: usize, k: usize) -> PrecoderState {
        let mut p = PrecoderState::zeros(n, k);
        for col in p.columns_mut() {
            for z in col.iter_mut() {
                *z = Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
            }
        }
        p
    }

    #[test]
    fn broadside_steering() {
        let sp = steering(0.0, 4, 3);
        assert!(sp.a_tx.iter().all(|z| (z - Complex64::new(1.0, 0.0)).norm() < 1e-15));
        for (i, d) in sp.da_tx.iter().enumerate() {
            let m = i as f64 - 1.5;
            assert!((d - J * (m * std::f64::consts::PI)).norm() < 1e-14);
        }
    }

    #[test]
    fn steering_derivative_matches_finite_difference() {
        let h = 1e-6;
        let sp = steering(0.3, 4, 4);
        let (plus, minus) = (steering(0.3 + h, 4, 4), steering(0.3 - h, 4, 4));
        for i in 0..4 {
            let fd = (plus.a_tx[i] - minus.a_tx[i]) / (2.0 * h);
            let scale = sp.da_tx[i].norm().max(1e-12);
            assert!((fd - sp.da_tx[i]).norm() / scale < 1e-6);
        }
    }

    #[test]
    fn zero_precoder_zero_fim() {
        let s = generate_scenario(&SystemConfig::default(), 0).unwrap();
        assert_eq!(fim(&PrecoderState::zeros(4, 4), &s).unwrap().f, Matrix3::zeros());
    }

    #[test]
    fn single_element_carries_no_angle_information() {
        let cfg = SystemConfig { n_tx: 1, n_rx: 1, n_users: 1, n_ers: 0, ..Default::default() };
        let s = generate_scenario(&cfg, 0).unwrap();
        let mut p = PrecoderState::zeros(1, 1);
        p.p_private[0][0] = Complex64::new(1.0, 0.0);
        let b = fim(&p, &s).unwrap();
        assert_eq!(b.f[(0, 0)], 0.0);
        assert!(matches!(crb_trace(&b), Err(Error::SingularFim { .. })));
    }

    #[test]
    fn crb_examples() {
        let mut b = fim(&PrecoderState::zeros(4, 4), &generate_scenario(&SystemConfig::default(), 0).unwrap()).unwrap();
        b.f = Matrix3::identity();
        assert!((crb_trace(&b).unwrap() - 3.0).abs() < 1e-15);
        b.f = Matrix3::from_diagonal(&nalgebra::Vector3::new(2.0, 4.0, 4.0));
        assert!((crb_trace(&b).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn scalar_fim_gives_scalar_phi() {
        let s = generate_scenario(&SystemConfig::default(), 0).unwrap();
        let mut b = fim(&random_state(&mut ChaCha8Rng::seed_from_u64(0), 4, 4), &s).unwrap();
        b.f = Matrix3::identity() * 2.0;
        let sb = surrogate_matrices(&b, 1e-8, DEFAULT_FIM_DET_TOL).unwrap();
        assert!((sb.phi - Matrix3::identity() * 0.25).norm() < 1e-15);
    }

    #[test]
    fn fast_fim_matches_bundle() {
        let s = generate_scenario(&SystemConfig { target_angle: 0.4, ..Default::default() }, 2).unwrap();
        let p = random_state(&mut ChaCha8Rng::seed_from_u64(4), 4, 4);
        let geom = Geometry::for_scenario(&s);
        let mut buf = vec![Complex64::new(0.0, 0.0); 2 * s.n_rx];
        let fast = geom.fim_matrix(5, |i, t| p.column(i)[t], s.alpha, 2.0 / s.noise_sense, &mut buf);
        let slow = fim(&p, &s).unwrap().f;
        assert!((fast - slow).norm() < 1e-10 * slow.norm());
    }

    #[test]
    fn surrogate_is_tight_at_anchor() {
        let s = generate_scenario(&SystemConfig::default(), 1).unwrap();
        let p = random_state(&mut ChaCha8Rng::seed_from_u64(8), 4, 4);
        let sb = surrogate_matrices(&fim(&p, &s).unwrap(), 1e-8, DEFAULT_FIM_DET_TOL).unwrap();
        let quad: f64 = p.columns().map(|c| dot_h(c, &crate::linalg::mat_vec(&sb.lambda_mat, c)).re).sum();
        let lin = surrogate_sensing_term(&p, &p, &sb.lambda_mat);
        assert!((lin - quad - quad).abs() < 1e-10 * quad.abs().max(1.0));
        assert!(lin >= 0.0);
        assert_eq!(surrogate_sensing_term(&PrecoderState::zeros(4, 4), &p, &sb.lambda_mat), 0.0);
    }

    proptest! {
        #[test]
        fn lambda_is_psd(seed in 0u64..500) {
            let cfg = SystemConfig { target_angle: 0.1 * (seed % 7) as f64, ..Default::default() };
            let s = generate_scenario(&cfg, seed).unwrap();
            let p = random_state(&mut ChaCha8Rng::seed_from_u64(seed), 4, 4);
            let sb = surrogate_matrices(&fim(&p, &s).unwrap(), 1e-8, DEFAULT_FIM_DET_TOL).unwrap();
            prop_assert!(hermitian_min_eigenvalue(&sb.lambda_mat) >= 1e-8 - 1e-10 * sb.zeta.max(1.0));
            let sym = (sb.phi - sb.phi.transpose()).norm();
            prop_assert!(sym <= 1e-12 * sb.phi.norm());
        }

        #[test]
        fn fim_is_symmetric_psd_and_linear(seed in 0u64..500) {
            let cfg = SystemConfig { target_angle: -0.5 + 0.1 * (seed % 11) as f64, ..Default::default() };
            let s = generate_scenario(&cfg, seed).unwrap();
            let p = random_state(&mut ChaCha8Rng::seed_from_u64(seed), 4, 4);
            let b = fim(&p, &s).unwrap();
            prop_assert_eq!(b.f, b.f.transpose());
            let eig = b.f.symmetric_eigen().eigenvalues;
            prop_assert!(eig.min() >= -1e-10 * b.f.norm());
            let mut q = p.clone();
            q.scale(std::f64::consts::SQRT_2);
            let c1 = crb_trace(&b).unwrap();
            let c2 = crb_trace(&fim(&q, &s).unwrap()).unwrap();
            prop_assert!(c1 > 0.0);
            prop_assert!((c2 - 0.5 * c1).abs() <= 1e-10 * c1);
        }
    }
}
