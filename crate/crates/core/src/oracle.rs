//! Slow, independent re-implementations used to check the fast paths.
//!
//! Nothing here is tuned: loops are written out scalar by scalar, the FIM is
//! assembled from the derivative of the echo signal, and the subproblem
//! baseline is plain random search.
#![allow(clippy::needless_range_loop)] // index loops follow the summations literally

use nalgebra::Matrix3;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::eg::{Layout, SubproblemContext};
use crate::error::{Error, Result};
use crate::fp::AuxState;
use crate::linalg::{CMat, CVec};
use crate::rsma::{water_fill, Mode, PrecoderState};
use crate::scenario::{scenario_rng, Scenario};

/// Central finite-difference settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdSpec {
    pub step: f64,
    pub rel_tol: f64,
}

impl Default for FdSpec {
    fn default() -> Self {
        FdSpec { step: 1e-6, rel_tol: 1e-5 }
    }
}

impl FdSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.rel_tol > 0.0) {
            return Err(Error::InvalidConfig("finite-difference step and tolerance must be positive".into()));
        }
        Ok(())
    }
}

/// Central differences of `f` at `x`, one coordinate at a time.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], spec: &FdSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let mut probe = x.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        probe[i] = x[i] + spec.step;
        let up = f(&probe);
        probe[i] = x[i] - spec.step;
        let down = f(&probe);
        probe[i] = x[i];
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::NonFiniteEvaluation(i));
        }
        out.push((up - down) / (2.0 * spec.step));
    }
    Ok(out)
}

/// Relative error `|a − b| / max(|a|, |b|, floor)` used by the gradient checks.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

fn ula_response(theta: f64, n: usize) -> (CVec, CVec) {
    let mut a = Vec::with_capacity(n);
    let mut da = Vec::with_capacity(n);
    for i in 0..n {
        let m = i as f64 - (n as f64 - 1.0) / 2.0;
        let phase = std::f64::consts::PI * m * theta.sin();
        let v = Complex64::new(phase.cos(), phase.sin());
        a.push(v);
        da.push(v * Complex64::new(0.0, std::f64::consts::PI * m * theta.cos()));
    }
    (a, da)
}

/// Fisher information from its definition: `κ·Re Σ_i (∂y_i/∂ω_a)ᴴ(∂y_i/∂ω_b)`
/// for the echo `y_i = α·a_r a_tᴴ p_i` of each precoder column.
pub fn fim_by_definition(p: &PrecoderState, s: &Scenario) -> Matrix3<f64> {
    let n_tx = p.n_tx();
    let (at, dat) = ula_response(s.theta, n_tx);
    let (ar, dar) = ula_response(s.theta, s.n_rx);
    let kappa = 2.0 / s.noise_sense;
    let mut f = Matrix3::zeros();
    for col in p.columns() {
        // a_tᴴ p and ȧ_tᴴ p
        let mut beam = Complex64::new(0.0, 0.0);
        let mut dbeam = Complex64::new(0.0, 0.0);
        for t in 0..n_tx {
            beam += at[t].conj() * col[t];
            dbeam += dat[t].conj() * col[t];
        }
        let mut d: [Vec<Complex64>; 3] = Default::default();
        for r in 0..s.n_rx {
            let echo = ar[r] * beam;
            d[0].push(s.alpha * (dar[r] * beam + ar[r] * dbeam));
            d[1].push(echo);
            d[2].push(Complex64::new(0.0, 1.0) * echo);
        }
        for a in 0..3 {
            for b in 0..3 {
                let mut acc = Complex64::new(0.0, 0.0);
                for r in 0..s.n_rx {
                    acc += d[a][r].conj() * d[b][r];
                }
                f[(a, b)] += kappa * acc.re;
            }
        }
    }
    f
}

/// SINRs `(γ_c, γ_p)` with every sum written out.
pub fn sinrs_by_loops(p: &PrecoderState, s: &Scenario) -> (Vec<f64>, Vec<f64>) {
    let inner = |h: &[Complex64], v: &[Complex64]| {
        let mut acc = Complex64::new(0.0, 0.0);
        for t in 0..h.len() {
            acc += h[t].conj() * v[t];
        }
        acc.norm_sqr()
    };
    let mut gc = Vec::new();
    let mut gp = Vec::new();
    for k in 0..s.n_users() {
        let mut interference = 0.0;
        for j in 0..s.n_users() {
            if j != k {
                interference += inner(&s.h[k], &p.p_private[j]);
            }
        }
        let own = inner(&s.h[k], &p.p_private[k]);
        gc.push(inner(&s.h[k], &p.p_common) / (own + interference + s.noise_comm));
        gp.push(own / (interference + s.noise_comm));
    }
    (gc, gp)
}

/// Everything the subproblem Lagrangian depends on, spelled out.
#[derive(Debug, Clone)]
pub struct LagrangianInputs<'a> {
    pub scenario: &'a Scenario,
    pub aux: &'a AuxState,
    pub anchor: &'a PrecoderState,
    pub lambda_mat: &'a CMat,
    pub targets: &'a [f64],
    pub tradeoff: f64,
    pub power: f64,
    pub power_weight: f64,
}

/// The subproblem Lagrangian at stacked point `x`, evaluated term by term.
pub fn lagrangian_by_loops(inp: &LagrangianInputs<'_>, x: &[f64]) -> f64 {
    let s = inp.scenario;
    let k_users = s.n_users();
    let layout = Layout::new(s.n_tx(), k_users, s.n_ers());
    let p = layout.precoder(x);
    let d = layout.dual(x);
    let c = &p.c_alloc;
    let r = p.mmf_aux;
    let n = s.n_tx();
    let ip = |a: &[Complex64], b: &[Complex64]| {
        let mut acc = Complex64::new(0.0, 0.0);
        for t in 0..n {
            acc += a[t].conj() * b[t];
        }
        acc
    };
    let fp = |theta: f64, phi: Complex64, signal: Complex64, t: f64| {
        (1.0 + theta).ln() - theta + 2.0 * (1.0 + theta).sqrt() * (phi.conj() * signal).re - phi.norm_sqr() * t
    };
    let cols: Vec<&[Complex64]> = p.columns().collect();
    let anchor: Vec<&[Complex64]> = inp.anchor.columns().collect();

    let mut sensing = 0.0;
    for i in 0..cols.len() {
        for a in 0..n {
            for b in 0..n {
                // Re{conj(p_i[a])·Λ[a][b]·p_a,i[b]}
                sensing += 2.0 * (cols[i][a].conj() * inp.lambda_mat[(a, b)] * anchor[i][b]).re;
            }
        }
    }
    let mut val = r + inp.tradeoff * sensing;
    let c_sum: f64 = c.iter().sum();
    for k in 0..k_users {
        let hk = &s.h[k];
        let mut t_p = s.noise_comm;
        for j in 0..k_users {
            t_p += ip(hk, cols[j + 1]).norm_sqr();
        }
        let common = ip(hk, cols[0]);
        let t_c = t_p + common.norm_sqr();
        let g_c = fp(inp.aux.theta_c[k], inp.aux.phi_c[k], common, t_c);
        let g_p = fp(inp.aux.theta_p[k], inp.aux.phi_p[k], ip(hk, cols[k + 1]), t_p);
        val -= d.beta[k] * (r - c[k] - g_p);
        val -= d.rho[k] * (c_sum - g_c);
        val += d.mu[k] * c[k];
    }
    let mut power = 0.0;
    for col in &cols {
        for z in col.iter() {
            power += z.norm_sqr();
        }
    }
    val -= d.omega_dual * inp.power_weight * (power - inp.power);
    for l in 0..s.n_ers() {
        let mut u = 0.0;
        for i in 0..cols.len() {
            let ga = ip(&s.g[l], anchor[i]);
            let gp = ip(&s.g[l], cols[i]);
            u += 2.0 * (ga.conj() * gp).re - ga.norm_sqr();
        }
        val += d.eta[l] * (u - inp.targets[l]);
    }
    val
}

/// Subproblem objective `r + λ·2Re tr(P⁽ᵗ⁾PᴴΛ)` at the precoder part of `x`,
/// with `c` and `r` chosen optimally. `None` if the precoder violates the
/// power budget or a linearized harvesting target by more than `tol`, or if
/// no common split is feasible.
pub fn subproblem_value(ctx: &SubproblemContext, x: &[f64], tol: f64) -> Option<f64> {
    let layout = ctx.layout();
    let power: f64 = x[..layout.primal_precoder_len()].iter().map(|v| v * v).sum();
    if power > ctx.power_budget() * (1.0 + tol + 1e-12) {
        return None;
    }
    if ctx.linearized_power(x).iter().zip(ctx.targets()).any(|(u, e)| u < &(e - tol)) {
        return None;
    }
    let (g_c, g_p) = ctx.surrogate_rates(x);
    let r = match ctx.mode() {
        Mode::Sdma => g_p.iter().cloned().fold(f64::INFINITY, f64::min),
        Mode::Rsma => {
            let common = g_c.iter().cloned().fold(f64::INFINITY, f64::min);
            if common < -tol {
                return None;
            }
            water_fill(common, &g_p).0
        }
    };
    Some(r + ctx.tradeoff() * ctx.sensing_term(x))
}

/// Writes the optimal `c` and `r` for the precoder part of `x`.
fn fill_split(ctx: &SubproblemContext, x: &mut [f64]) {
    let layout = ctx.layout();
    let (g_c, g_p) = ctx.surrogate_rates(x);
    let (r, c) = match ctx.mode() {
        Mode::Sdma => (g_p.iter().cloned().fold(f64::INFINITY, f64::min), vec![0.0; g_p.len()]),
        Mode::Rsma => water_fill(g_c.iter().cloned().fold(f64::INFINITY, f64::min), &g_p),
    };
    x[layout.c()..layout.r()].copy_from_slice(&c);
    x[layout.r()] = r;
}

const SEARCH_STREAM: u64 = 0x5EA5C4;

fn precoder_norm(x: &[f64], n_prec: usize) -> f64 {
    x[..n_prec].iter().map(|v| v * v).sum()
}

/// Pulls the precoder part of `x` back inside the power ball.
fn retract(x: &mut [f64], n_prec: usize, power: f64) {
    let norm = precoder_norm(x, n_prec);
    if norm > power {
        let s = (power / norm).sqrt();
        x[..n_prec].iter_mut().for_each(|v| *v *= s);
    }
}

/// Random search for the subproblem optimum. Returns the stacked point with
/// its optimal split and the subproblem value.
///
/// Half of the `budget` draws are uniform directions on the power sphere and
/// half are perturbations of the anchor at log-uniform scales. The best
/// feasible draw is refined by a (1+1) random-direction search and then by
/// axis-aligned coordinate descent, both with radial retraction onto the
/// power ball.
pub fn subproblem_random_search(ctx: &SubproblemContext, budget: usize, seed: u64) -> Result<(Vec<f64>, f64)> {
    let layout = ctx.layout();
    let n_prec = layout.primal_precoder_len();
    let sdma = ctx.mode() == Mode::Sdma;
    let start = if sdma { 2 * layout.n_tx } else { 0 };
    let mut rng = scenario_rng(seed, SEARCH_STREAM);
    let power = ctx.power_budget();
    let radius = power.sqrt();
    let mut anchor = vec![0.0; layout.dim()];
    layout.write_precoder(ctx.anchor(), &mut anchor);

    let gaussian = |rng: &mut rand_chacha::ChaCha20Rng, x: &mut [f64]| {
        for v in &mut x[start..n_prec] {
            *v = rng.sample(StandardNormal);
        }
        let n = precoder_norm(x, n_prec).sqrt();
        x[start..n_prec].iter_mut().for_each(|v| *v /= n);
    };

    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut dir = vec![0.0; layout.dim()];
    for draw in 0..budget {
        let mut x = vec![0.0; layout.dim()];
        gaussian(&mut rng, &mut dir);
        if draw % 2 == 0 {
            let level = radius * rng.random_range(0.5..=1.0f64).sqrt();
            x[start..n_prec].iter_mut().zip(&dir[start..n_prec]).for_each(|(v, d)| *v = d * level);
        } else {
            let scale = radius * 10f64.powf(rng.random_range(-3.0..0.0));
            for i in start..n_prec {
                x[i] = anchor[i] + dir[i] * scale;
            }
            retract(&mut x, n_prec, power);
        }
        if let Some(v) = subproblem_value(ctx, &x, 0.0) {
            if best.as_ref().is_none_or(|b| v > b.1) {
                best = Some((x, v));
            }
        }
    }
    let (mut x, mut value) = best.ok_or(Error::NoFeasibleSample(budget))?;

    let floor = 1e-9 * radius;
    let mut step = 0.1 * radius;
    let mut trials = 0;
    while step > floor && trials < 50 * budget {
        trials += 1;
        gaussian(&mut rng, &mut dir);
        let mut cand = x.clone();
        cand[start..n_prec].iter_mut().zip(&dir[start..n_prec]).for_each(|(v, d)| *v += d * step);
        retract(&mut cand, n_prec, power);
        match subproblem_value(ctx, &cand, 0.0) {
            Some(v) if v > value => {
                x = cand;
                value = v;
                step *= 1.5;
            }
            _ => step *= 0.9,
        }
    }

    let mut step = 0.01 * radius;
    while step > floor {
        let mut improved = false;
        for i in start..n_prec {
            for sign in [1.0, -1.0] {
                let mut cand = x.clone();
                cand[i] += sign * step;
                retract(&mut cand, n_prec, power);
                if let Some(v) = subproblem_value(ctx, &cand, 0.0) {
                    if v > value {
                        x = cand;
                        value = v;
                        improved = true;
                        break;
                    }
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    fill_split(ctx, &mut x);
    Ok((x, value))
}

/// Outcome of one check of [`verification_suite`].
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    /// Worst observed error against the bound.
    pub worst: f64,
    pub bound: f64,
}

fn random_point(rng: &mut rand_chacha::ChaCha20Rng, layout: Layout, power: f64) -> Vec<f64> {
    use crate::scenario::complex_normal;
    let mut x = vec![0.0; layout.dim()];
    let n_prec = layout.primal_precoder_len();
    for v in &mut x[..n_prec] {
        *v = complex_normal(rng).re;
    }
    let norm: f64 = x[..n_prec].iter().map(|v| v * v).sum();
    let scale = (power * rng.random_range(0.5..1.0) / norm).sqrt();
    x[..n_prec].iter_mut().for_each(|v| *v *= scale);
    for v in &mut x[layout.c()..] {
        *v = rng.random_range(0.01..1.0);
    }
    x
}

fn random_precoder(rng: &mut rand_chacha::ChaCha20Rng, n_tx: usize, n_users: usize, power: f64) -> PrecoderState {
    use crate::scenario::complex_normal;
    let mut p = PrecoderState::zeros(n_tx, n_users);
    for col in p.columns_mut() {
        col.iter_mut().for_each(|z| *z = complex_normal(rng));
    }
    let now = crate::rsma::total_power(&p);
    p.scale((power / now).sqrt());
    p
}

/// Cross-checks of the fast evaluators against the routines in this module,
/// on random instances drawn from `seed`.
pub fn verification_suite(seed: u64) -> Result<Vec<Check>> {
    use crate::config::SystemConfig;
    use crate::fp::{surrogate_g, Stream};
    use crate::rsma::compute_sinrs;
    use crate::scenario::generate_scenario;
    use crate::sensing::{fim, surrogate_matrices};

    let mut rng = scenario_rng(seed, SEARCH_STREAM + 1);
    let mut checks = Vec::new();
    let mut record = |name, worst: f64, bound| checks.push(Check { name, passed: worst < bound, worst, bound });
    let cfg = SystemConfig::default();

    let mut worst = 0.0f64;
    for i in 0..100 {
        let s = generate_scenario(&cfg, seed.wrapping_add(i))?;
        let p = random_precoder(&mut rng, cfg.n_tx, cfg.n_users, cfg.power_budget());
        let aux = AuxState::optimal(&p, &s)?;
        let (gc, gp) = compute_sinrs(&p, &s)?;
        for k in 0..cfg.n_users {
            worst = worst.max((surrogate_g(&p, &s, &aux, Stream::Common, k) - gc[k].ln_1p()).abs());
            worst = worst.max((surrogate_g(&p, &s, &aux, Stream::Private, k) - gp[k].ln_1p()).abs());
        }
    }
    record("fp_tightness", worst, 1e-10);

    let mut worst = 0.0f64;
    for i in 0..100 {
        let s = generate_scenario(&cfg, seed.wrapping_add(i))?;
        let p = random_precoder(&mut rng, cfg.n_tx, cfg.n_users, cfg.power_budget());
        let (gc, gp) = compute_sinrs(&p, &s)?;
        let (lc, lp) = sinrs_by_loops(&p, &s);
        for k in 0..cfg.n_users {
            worst = worst.max(relative_error(gc[k], lc[k], 1e-300)).max(relative_error(gp[k], lp[k], 1e-300));
        }
    }
    record("sinr_loops", worst, 1e-12);

    let mut worst = 0.0f64;
    let small = SystemConfig { power_budget: Some(4.0), ..cfg.clone() };
    for i in 0..20 {
        let s = generate_scenario(&small, seed.wrapping_add(i))?;
        let anchor = random_precoder(&mut rng, small.n_tx, small.n_users, 4.0);
        let aux = AuxState::optimal(&anchor, &s)?;
        let lambda_mat = surrogate_matrices(&fim(&anchor, &s)?, small.psd_margin, small.fim_det_tol)?.lambda_mat;
        let targets: Vec<f64> = (0..small.n_ers).map(|_| rng.random_range(1e-3..1e-2)).collect();
        let weight = 0.25;
        let ctx = SubproblemContext::new(&s, aux.clone(), &anchor, &lambda_mat, targets.clone(), small.tradeoff, 4.0, Mode::Rsma)?
            .with_power_weight(weight);
        let inputs = LagrangianInputs {
            scenario: &s,
            aux: &aux,
            anchor: &anchor,
            lambda_mat: &lambda_mat,
            targets: &targets,
            tradeoff: small.tradeoff,
            power: 4.0,
            power_weight: weight,
        };
        let layout = ctx.layout();
        let x = random_point(&mut rng, layout, 4.0);
        let fd = fd_gradient(|y| lagrangian_by_loops(&inputs, y), &x, &FdSpec::default())?;
        let h = ctx.vi_map(&x);
        let scale = fd.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for j in 0..layout.dim() {
            let analytic = if j < layout.dual_start() { -h[j] } else { h[j] };
            worst = worst.max(relative_error(analytic, fd[j], 1e-3 * scale));
        }
    }
    record("lagrangian_gradient", worst, FdSpec::default().rel_tol);

    let mut worst = 0.0f64;
    for i in 0..100 {
        let mut c = cfg.clone();
        c.n_tx = rng.random_range(1..=4);
        c.n_rx = rng.random_range(1..=4);
        c.randomize_target = true;
        let s = generate_scenario(&c, seed.wrapping_add(i))?;
        let p = random_precoder(&mut rng, c.n_tx, c.n_users, c.power_budget());
        let fast = fim(&p, &s)?.f;
        let slow = fim_by_definition(&p, &s);
        worst = worst.max((fast - slow).norm() / slow.norm());
    }
    record("fim_definition", worst, 1e-9);

    let circuit = cfg.circuit(0);
    let mut worst = 0.0f64;
    for i in 0..100 {
        let e = circuit.max_power() * (i as f64 + 0.5) / 100.0;
        let q = circuit.invert_threshold(e)?;
        worst = worst.max((circuit.harvested_power(q) - e).abs() / circuit.max_power());
    }
    record("eh_round_trip", worst, 1e-9);
    Ok(checks)
}
