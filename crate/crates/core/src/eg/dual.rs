use std::cell::RefCell;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fp::AuxState;
use crate::linalg::{dot_h, mat_vec, CMat, CVec, ZERO};
use crate::rsma::{Mode, PrecoderState};
use crate::scenario::Scenario;

use super::solver::VariationalMap;

/// Multipliers of the subproblem constraints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualState {
    /// `r ≤ c_k + g_{p,k}`
    pub beta: Vec<f64>,
    /// `Σ_j c_j ≤ g_{c,k}`
    pub rho: Vec<f64>,
    /// `c_k ≥ 0`
    pub mu: Vec<f64>,
    /// `tr(PPᴴ) ≤ P_t`
    pub omega_dual: f64,
    /// linearized harvesting constraints
    pub eta: Vec<f64>,
}

impl DualState {
    /// β uniform at 1/K, every other multiplier at `init`; SDMA pins ρ and μ to zero.
    pub fn initial(n_users: usize, n_ers: usize, init: f64, mode: Mode) -> Self {
        let common = if mode == Mode::Sdma { 0.0 } else { init };
        DualState {
            beta: vec![1.0 / n_users as f64; n_users],
            rho: vec![common; n_users],
            mu: vec![common; n_users],
            omega_dual: init,
            eta: vec![init; n_ers],
        }
    }
}

/// Offsets of the stacked real vector
/// `[Re p_c, Im p_c, Re p_1..Re p_K, Im p_1..Im p_K, c, r, β, ρ, μ, ω, η]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub n_tx: usize,
    pub n_users: usize,
    pub n_ers: usize,
}

impl Layout {
    pub fn new(n_tx: usize, n_users: usize, n_ers: usize) -> Self {
        Layout { n_tx, n_users, n_ers }
    }

    /// Offsets of the real and imaginary parts of precoder column `i`
    /// (`0` is the common stream).
    #[inline]
    pub fn column(&self, i: usize) -> (usize, usize) {
        let n = self.n_tx;
        if i == 0 {
            (0, n)
        } else {
            let k = i - 1;
            (2 * n + k * n, 2 * n + (self.n_users + k) * n)
        }
    }

    pub fn primal_precoder_len(&self) -> usize {
        2 * self.n_tx * (self.n_users + 1)
    }
    pub fn c(&self) -> usize {
        self.primal_precoder_len()
    }
    pub fn r(&self) -> usize {
        self.c() + self.n_users
    }
    pub fn beta(&self) -> usize {
        self.r() + 1
    }
    pub fn rho(&self) -> usize {
        self.beta() + self.n_users
    }
    pub fn mu(&self) -> usize {
        self.rho() + self.n_users
    }
    pub fn omega(&self) -> usize {
        self.mu() + self.n_users
    }
    pub fn eta(&self) -> usize {
        self.omega() + 1
    }
    /// First dual coordinate; everything from here on is sign-constrained.
    pub fn dual_start(&self) -> usize {
        self.beta()
    }
    pub fn dim(&self) -> usize {
        self.eta() + self.n_ers
    }

    #[inline]
    pub(crate) fn col_value(&self, x: &[f64], i: usize, t: usize) -> Complex64 {
        let (re, im) = self.column(i);
        Complex64::new(x[re + t], x[im + t])
    }

    pub fn precoder(&self, x: &[f64]) -> PrecoderState {
        let col = |i: usize| (0..self.n_tx).map(|t| self.col_value(x, i, t)).collect::<CVec>();
        PrecoderState {
            p_common: col(0),
            p_private: (1..=self.n_users).map(col).collect(),
            c_alloc: x[self.c()..self.r()].to_vec(),
            mmf_aux: x[self.r()],
        }
    }

    pub fn write_precoder(&self, p: &PrecoderState, x: &mut [f64]) {
        for (i, col) in p.columns().enumerate() {
            let (re, im) = self.column(i);
            for (t, z) in col.iter().enumerate() {
                x[re + t] = z.re;
                x[im + t] = z.im;
            }
        }
        x[self.c()..self.r()].copy_from_slice(&p.c_alloc);
        x[self.r()] = p.mmf_aux;
    }

    pub fn dual(&self, x: &[f64]) -> DualState {
        DualState {
            beta: x[self.beta()..self.rho()].to_vec(),
            rho: x[self.rho()..self.mu()].to_vec(),
            mu: x[self.mu()..self.omega()].to_vec(),
            omega_dual: x[self.omega()],
            eta: x[self.eta()..self.dim()].to_vec(),
        }
    }

    pub fn write_dual(&self, d: &DualState, x: &mut [f64]) {
        x[self.beta()..self.rho()].copy_from_slice(&d.beta);
        x[self.rho()..self.mu()].copy_from_slice(&d.rho);
        x[self.mu()..self.omega()].copy_from_slice(&d.mu);
        x[self.omega()] = d.omega_dual;
        x[self.eta()..self.dim()].copy_from_slice(&d.eta);
    }
}

/// A primal-dual point of the subproblem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VIPoint {
    pub primal: PrecoderState,
    pub dual: DualState,
}

impl VIPoint {
    pub fn layout(&self) -> Layout {
        Layout::new(self.primal.n_tx(), self.primal.n_users(), self.dual.eta.len())
    }

    pub fn stack(&self) -> Vec<f64> {
        let layout = self.layout();
        let mut x = vec![0.0; layout.dim()];
        layout.write_precoder(&self.primal, &mut x);
        layout.write_dual(&self.dual, &mut x);
        x
    }

    pub fn unstack(layout: Layout, x: &[f64]) -> Result<Self> {
        if x.len() != layout.dim() {
            return Err(Error::DimensionMismatch(format!("stacked vector of length {} for layout of dimension {}", x.len(), layout.dim())));
        }
        Ok(VIPoint { primal: layout.precoder(x), dual: layout.dual(x) })
    }
}

/// Partial derivatives of the Lagrangian with respect to the real scalars.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarGrad {
    pub dc: Vec<f64>,
    pub dr: f64,
    pub dbeta: Vec<f64>,
    pub drho: Vec<f64>,
    pub dmu: Vec<f64>,
    pub domega: f64,
    pub deta: Vec<f64>,
}

/// Data frozen for one convex subproblem: channels, FP auxiliaries, the
/// linearization anchor and its derived quantities.
#[derive(Debug, Clone)]
pub struct SubproblemContext {
    layout: Layout,
    h: Vec<CVec>,
    g: Vec<CVec>,
    noise: f64,
    aux: AuxState,
    anchor: PrecoderState,
    /// `√(1+ϑ)·φ` for the common and private surrogates.
    lin_c: Vec<Complex64>,
    lin_p: Vec<Complex64>,
    /// `ln(1+θ) − θ` per user, common then private.
    off_c: Vec<f64>,
    off_p: Vec<f64>,
    /// Columns of `Λ P⁽ᵗ⁾`.
    q: Vec<CVec>,
    /// `g_lᴴ p_i⁽ᵗ⁾`, row per ER.
    ga: Vec<Vec<Complex64>>,
    targets: Vec<f64>,
    tradeoff: f64,
    power: f64,
    power_weight: f64,
    mode: Mode,
    scratch: RefCell<Scratch>,
}

/// Per-evaluation buffers, reused so the map allocates nothing.
#[derive(Debug, Clone)]
struct Scratch {
    /// `h_jᴴp_i` (rows `j < K`) followed by `g_lᴴp_i`, row-major over columns.
    prods: Vec<Complex64>,
    col: Vec<Complex64>,
    g_c: Vec<f64>,
    g_p: Vec<f64>,
    u: Vec<f64>,
}

impl SubproblemContext {
    /// `targets` are the received-power levels each ER must reach; `lambda_mat`
    /// is the PSD sensing surrogate matrix at `anchor`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        scenario: &Scenario,
        aux: AuxState,
        anchor: &PrecoderState,
        lambda_mat: &CMat,
        targets: Vec<f64>,
        tradeoff: f64,
        power: f64,
        mode: Mode,
    ) -> Result<Self> {
        anchor.check_dims(scenario)?;
        let k = scenario.n_users();
        if targets.len() != scenario.n_ers() {
            return Err(Error::DimensionMismatch(format!("{} targets for {} ERs", targets.len(), scenario.n_ers())));
        }
        if [&aux.theta_c, &aux.theta_p].iter().any(|v| v.len() != k) || aux.phi_c.len() != k || aux.phi_p.len() != k {
            return Err(Error::DimensionMismatch("auxiliary state does not match the user count".into()));
        }
        let n = scenario.n_tx();
        if lambda_mat.nrows() != n || lambda_mat.ncols() != n {
            return Err(Error::DimensionMismatch(format!("surrogate matrix is {}x{}, expected {n}x{n}", lambda_mat.nrows(), lambda_mat.ncols())));
        }
        let lin_c = aux.theta_c.iter().zip(&aux.phi_c).map(|(t, p)| p * (1.0 + t).sqrt()).collect();
        let lin_p = aux.theta_p.iter().zip(&aux.phi_p).map(|(t, p)| p * (1.0 + t).sqrt()).collect();
        let off = |th: &[f64]| th.iter().map(|t| t.ln_1p() - t).collect();
        let (off_c, off_p) = (off(&aux.theta_c), off(&aux.theta_p));
        let q = anchor.columns().map(|c| mat_vec(lambda_mat, c)).collect();
        let ga = scenario.g.iter().map(|g| anchor.columns().map(|c| dot_h(g, c)).collect()).collect();
        let layout = Layout::new(n, k, scenario.n_ers());
        Ok(SubproblemContext {
            layout,
            h: scenario.h.clone(),
            g: scenario.g.clone(),
            noise: scenario.noise_comm,
            aux,
            anchor: anchor.clone(),
            lin_c,
            lin_p,
            off_c,
            off_p,
            q,
            ga,
            targets,
            tradeoff,
            power,
            power_weight: 1.0,
            mode,
            scratch: RefCell::new(Scratch {
                prods: vec![ZERO; (k + scenario.n_ers()) * (k + 1)],
                col: vec![ZERO; n],
                g_c: vec![0.0; k],
                g_p: vec![0.0; k],
                u: vec![0.0; scenario.n_ers()],
            }),
        })
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn aux(&self) -> &AuxState {
        &self.aux
    }

    /// Linearization point of this subproblem.
    pub fn anchor(&self) -> &PrecoderState {
        &self.anchor
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn power_budget(&self) -> f64 {
        self.power
    }

    /// Scales the power constraint to `w·(tr(PPᴴ) − P_t)`, which reparametrizes
    /// its multiplier as `ω/w` without moving the saddle point.
    pub fn with_power_weight(mut self, w: f64) -> Self {
        self.power_weight = w;
        self
    }

    pub fn tradeoff(&self) -> f64 {
        self.tradeoff
    }

    pub fn power_weight(&self) -> f64 {
        self.power_weight
    }

    /// `vᴴ p_i` with `p_i` read from the stacked vector.
    #[inline]
    fn project_column(&self, v: &[Complex64], x: &[f64], i: usize) -> Complex64 {
        let (re, im) = self.layout.column(i);
        let mut acc = ZERO;
        for (t, vt) in v.iter().enumerate() {
            acc += vt.conj() * Complex64::new(x[re + t], x[im + t]);
        }
        acc
    }

    /// Fills `prods` with `h_jᴴp_i` (rows `j < K`) followed by `g_lᴴp_i`.
    fn products(&self, x: &[f64], prods: &mut [Complex64]) {
        let cols = self.layout.n_users + 1;
        for (j, v) in self.h.iter().chain(&self.g).enumerate() {
            for i in 0..cols {
                prods[j * cols + i] = self.project_column(v, x, i);
            }
        }
    }

    /// Fills the surrogate rates and linearized ER powers in `sc` from
    /// `sc.prods`; returns `tr(PPᴴ)`.
    fn terms(&self, x: &[f64], sc: &mut Scratch) -> f64 {
        let k = self.layout.n_users;
        let cols = k + 1;
        for j in 0..k {
            let row = &sc.prods[j * cols..(j + 1) * cols];
            let t_p = row[1..].iter().map(|z| z.norm_sqr()).sum::<f64>() + self.noise;
            let t_c = t_p + row[0].norm_sqr();
            sc.g_c[j] = self.off_c[j] + 2.0 * (self.lin_c[j].conj() * row[0]).re - self.aux.phi_c[j].norm_sqr() * t_c;
            sc.g_p[j] = self.off_p[j] + 2.0 * (self.lin_p[j].conj() * row[j + 1]).re - self.aux.phi_p[j].norm_sqr() * t_p;
        }
        for l in 0..self.layout.n_ers {
            let row = &sc.prods[(k + l) * cols..(k + l + 1) * cols];
            sc.u[l] = row
                .iter()
                .zip(&self.ga[l])
                .map(|(gp, a)| 2.0 * (a.conj() * gp).re - a.norm_sqr())
                .sum::<f64>();
        }
        x[..self.layout.primal_precoder_len()].iter().map(|v| v * v).sum()
    }

    fn evaluate_terms(&self, x: &[f64]) -> std::cell::RefMut<'_, Scratch> {
        let mut sc = self.scratch.borrow_mut();
        self.products(x, &mut sc.prods);
        self.terms(x, &mut sc);
        sc
    }

    /// Surrogate rates `(g_c, g_p)` in nats at the primal part of `x`.
    pub fn surrogate_rates(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let sc = self.evaluate_terms(x);
        (sc.g_c.clone(), sc.g_p.clone())
    }

    /// Linearized received power `Σ_i U(g_l, p_i, p_i⁽ᵗ⁾)` per ER.
    pub fn linearized_power(&self, x: &[f64]) -> Vec<f64> {
        self.evaluate_terms(x).u.clone()
    }

    /// `2·Σ_i Re{p_iᴴ q_i} = 2·Re tr(P⁽ᵗ⁾PᴴΛ)`.
    pub fn sensing_term(&self, x: &[f64]) -> f64 {
        (0..=self.layout.n_users).map(|i| 2.0 * self.project_column(&self.q[i], x, i).re).sum::<f64>()
    }

    #[allow(clippy::needless_range_loop)]
    pub fn lagrangian_value(&self, x: &[f64]) -> f64 {
        let lay = self.layout;
        let sc = self.evaluate_terms(x);
        let power = x[..lay.primal_precoder_len()].iter().map(|v| v * v).sum::<f64>();
        let c = &x[lay.c()..lay.r()];
        let r = x[lay.r()];
        let d = lay.dual(x);
        let c_sum: f64 = c.iter().sum();
        let mut val = r + self.tradeoff * self.sensing_term(x);
        for k in 0..lay.n_users {
            val -= d.beta[k] * (r - c[k] - sc.g_p[k]);
            val -= d.rho[k] * (c_sum - sc.g_c[k]);
            val += d.mu[k] * c[k];
        }
        val -= d.omega_dual * self.power_weight * (power - self.power);
        for l in 0..lay.n_ers {
            val += d.eta[l] * (sc.u[l] - self.targets[l]);
        }
        val
    }

    /// Wirtinger derivative `∂L/∂p_i*` of precoder column `i` (`0` is the common stream).
    pub fn grad_p(&self, x: &[f64], column: usize) -> CVec {
        let mut sc = self.scratch.borrow_mut();
        self.products(x, &mut sc.prods);
        let mut out = vec![ZERO; self.layout.n_tx];
        self.grad_column(x, &sc.prods, column, &mut out);
        out
    }

    #[allow(clippy::needless_range_loop)]
    fn grad_column(&self, x: &[f64], prods: &[Complex64], i: usize, out: &mut [Complex64]) {
        let lay = self.layout;
        let k_users = lay.n_users;
        let cols = k_users + 1;
        let beta = &x[lay.beta()..lay.rho()];
        let rho = &x[lay.rho()..lay.mu()];
        let omega = x[lay.omega()] * self.power_weight;
        let eta = &x[lay.eta()..lay.dim()];
        let (re, im) = lay.column(i);
        for (t, o) in out.iter_mut().enumerate() {
            *o = self.q[i][t] * self.tradeoff - Complex64::new(x[re + t], x[im + t]) * omega;
        }
        for l in 0..lay.n_ers {
            let coef = self.ga[l][i] * eta[l];
            for (o, g) in out.iter_mut().zip(&self.g[l]) {
                *o += g * coef;
            }
        }
        for j in 0..k_users {
            let hp = prods[j * cols + i];
            let coef = if i == 0 {
                (self.lin_c[j] - hp * self.aux.phi_c[j].norm_sqr()) * rho[j]
            } else {
                let w = beta[j] * self.aux.phi_p[j].norm_sqr() + rho[j] * self.aux.phi_c[j].norm_sqr();
                let own = if j == i - 1 { self.lin_p[j] * beta[j] } else { ZERO };
                own - hp * w
            };
            for (o, h) in out.iter_mut().zip(&self.h[j]) {
                *o += h * coef;
            }
        }
    }

    pub fn grad_scalars(&self, x: &[f64]) -> ScalarGrad {
        let lay = self.layout;
        let k = lay.n_users;
        let power = x[..lay.primal_precoder_len()].iter().map(|v| v * v).sum::<f64>();
        let sc = self.evaluate_terms(x);
        let mut out = vec![0.0; lay.dim()];
        self.write_scalar_grad(x, &sc, power, &mut out);
        let neg = |r: std::ops::Range<usize>| out[r].iter().map(|v| -v).collect::<Vec<f64>>();
        ScalarGrad {
            dc: neg(lay.c()..lay.c() + k),
            dr: -out[lay.r()],
            dbeta: out[lay.beta()..lay.rho()].to_vec(),
            drho: out[lay.rho()..lay.mu()].to_vec(),
            dmu: out[lay.mu()..lay.omega()].to_vec(),
            domega: out[lay.omega()],
            deta: out[lay.eta()..lay.dim()].to_vec(),
        }
    }

    /// Writes `−∂L/∂c`, `−∂L/∂r` and the dual partials into `out`, unmasked.
    fn write_scalar_grad(&self, x: &[f64], sc: &Scratch, power: f64, out: &mut [f64]) {
        let lay = self.layout;
        let k = lay.n_users;
        let c = &x[lay.c()..lay.r()];
        let r = x[lay.r()];
        let beta = &x[lay.beta()..lay.rho()];
        let rho = &x[lay.rho()..lay.mu()];
        let mu = &x[lay.mu()..lay.omega()];
        let rho_sum: f64 = rho.iter().sum();
        let c_sum: f64 = c.iter().sum();
        for j in 0..k {
            out[lay.c() + j] = -(beta[j] + mu[j] - rho_sum);
            out[lay.beta() + j] = -(r - c[j] - sc.g_p[j]);
            out[lay.rho() + j] = -(c_sum - sc.g_c[j]);
            out[lay.mu() + j] = c[j];
        }
        out[lay.r()] = -(1.0 - beta.iter().sum::<f64>());
        out[lay.omega()] = -self.power_weight * (power - self.power);
        for l in 0..lay.n_ers {
            out[lay.eta() + l] = sc.u[l] - self.targets[l];
        }
    }

    /// `h(x) = [−∂L/∂y, ∂L/∂z]` in the stacked layout.
    pub fn vi_map(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.layout.dim()];
        self.eval(x, &mut out);
        out
    }
}

impl VariationalMap for SubproblemContext {
    fn dim(&self) -> usize {
        self.layout.dim()
    }

    fn eval(&self, x: &[f64], out: &mut [f64]) {
        let lay = self.layout;
        let sdma = self.mode == Mode::Sdma;
        let mut guard = self.scratch.borrow_mut();
        let sc = &mut *guard;
        self.products(x, &mut sc.prods);
        for i in 0..=lay.n_users {
            let (re, im) = lay.column(i);
            if i == 0 && sdma {
                out[re..re + lay.n_tx].fill(0.0);
                out[im..im + lay.n_tx].fill(0.0);
                continue;
            }
            self.grad_column(x, &sc.prods, i, &mut sc.col);
            for (t, gv) in sc.col.iter().enumerate() {
                out[re + t] = -2.0 * gv.re;
                out[im + t] = -2.0 * gv.im;
            }
        }
        let power = self.terms(x, sc);
        self.write_scalar_grad(x, sc, power, out);
        if sdma {
            out[lay.c()..lay.r()].fill(0.0);
            out[lay.rho()..lay.omega()].fill(0.0);
        }
    }

    fn project(&self, x: &mut [f64]) {
        for v in &mut x[self.layout.dual_start()..] {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
    }
}
