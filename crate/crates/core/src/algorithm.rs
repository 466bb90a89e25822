//! The three nested loops: FP auxiliaries (outer), linearization anchors
//! (middle) and the extragradient subproblem solver (inner).
//!
//! The optimizer works on a rescaled copy of the problem: each ER channel
//! absorbs its received-power target so every harvesting target becomes 1, and
//! the power constraint is divided by the budget. Rates, the CRB and the
//! feasible set are unchanged; only the multipliers are reparametrized.

use std::cell::RefCell;
use std::time::Instant;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::config::SystemConfig;
use crate::eg::{solve_subproblem, DualState, Layout, SolveOptions, StepParams, SubproblemContext, TraceRow};
use crate::error::{Error, Result};
use crate::fp::AuxState;
use crate::linalg::{norm_sqr, CVec, ZERO};
use crate::rsma::{
    check_feasibility, compute_rates, objective, optimal_mmf, total_power, water_fill,
    water_level, FeasibilityReport, Mode, PrecoderState, RateReport,
};
use crate::scenario::Scenario;
use crate::sensing::{fim, inverse3, surrogate_matrices, Geometry};

/// Scale all precoders onto the power sphere `tr(PPᴴ) = power`.
pub fn renormalize_power(p: &PrecoderState, power: f64) -> Result<PrecoderState> {
    let current = total_power(p);
    if !(current > 0.0) || !current.is_finite() {
        return Err(Error::ZeroPrecoder);
    }
    let mut out = p.clone();
    out.scale((power / current).sqrt());
    Ok(out)
}

fn unit_or_first_axis(v: &[Complex64]) -> CVec {
    let n = norm_sqr(v).sqrt();
    if n > 0.0 {
        v.iter().map(|z| z / n).collect()
    } else {
        let mut e = vec![ZERO; v.len()];
        e[0] = Complex64::new(1.0, 0.0);
        e
    }
}

fn init_with_power(s: &Scenario, power: f64, mode: Mode) -> PrecoderState {
    let k = s.n_users();
    let streams = if mode == Mode::Rsma { k + 1 } else { k };
    let amp = (power / streams as f64).sqrt();
    let mut p = PrecoderState::zeros(s.n_tx(), k);
    for (pk, hk) in p.p_private.iter_mut().zip(&s.h) {
        *pk = unit_or_first_axis(hk).into_iter().map(|z| z * amp).collect();
    }
    if mode == Mode::Rsma {
        let mut sum = vec![ZERO; s.n_tx()];
        for hk in &s.h {
            for (a, b) in sum.iter_mut().zip(hk) {
                *a += b;
            }
        }
        let dir = if norm_sqr(&sum) > 0.0 { unit_or_first_axis(&sum) } else { unit_or_first_axis(&s.h[0]) };
        p.p_common = dir.into_iter().map(|z| z * amp).collect();
    }
    p
}

/// Matched-filter start with equal power per active stream and full budget;
/// `c = 0`, `r = 0`.
pub fn init_precoder(s: &Scenario, cfg: &SystemConfig, mode: Mode) -> PrecoderState {
    init_with_power(s, cfg.power_budget(), mode)
}

/// Evaluates `obj(·)` into reusable buffers.
#[derive(Debug, Clone)]
struct ObjectiveEval {
    h: Vec<CVec>,
    noise: f64,
    geom: Geometry,
    alpha: Complex64,
    kappa: f64,
    tradeoff: f64,
    det_tol: f64,
    mode: Mode,
    scratch: RefCell<(Vec<f64>, Vec<Complex64>)>,
}

impl ObjectiveEval {
    fn eval_with(&self, n_cols: usize, col: impl Fn(usize, usize) -> Complex64) -> Result<(f64, f64, f64)> {
        let mut guard = self.scratch.borrow_mut();
        let (rp, buf) = &mut *guard;
        let mut rc = f64::INFINITY;
        for (k, hk) in self.h.iter().enumerate() {
            let gain = |i: usize| hk.iter().enumerate().fold(ZERO, |acc, (t, h)| acc + h.conj() * col(i, t)).norm_sqr();
            let mut private_sum = 0.0;
            let mut own = 0.0;
            for i in 1..n_cols {
                let g = gain(i);
                private_sum += g;
                if i == k + 1 {
                    own = g;
                }
            }
            rp[k] = (own / (private_sum - own + self.noise)).ln_1p();
            if self.mode == Mode::Rsma {
                rc = rc.min((gain(0) / (private_sum + self.noise)).ln_1p());
            }
        }
        let mmf = match self.mode {
            Mode::Sdma => rp.iter().cloned().fold(f64::INFINITY, f64::min),
            Mode::Rsma => water_level(rc, rp),
        };
        let f = self.geom.fim_matrix(n_cols, col, self.alpha, self.kappa, buf);
        let crb = inverse3(&f, self.det_tol)?.trace();
        Ok((mmf - self.tradeoff * crb, mmf, crb))
    }

    fn precoder(&self, p: &PrecoderState) -> Result<f64> {
        Ok(self.eval_with(p.n_users() + 1, |i, t| p.column(i)[t])?.0)
    }

    fn stacked(&self, layout: &Layout, x: &[f64]) -> f64 {
        self.eval_with(layout.n_users + 1, |i, t| layout.col_value(x, i, t)).map_or(f64::NAN, |v| v.0)
    }
}

/// The rescaled optimization instance for one scenario.
#[derive(Debug, Clone)]
pub struct Instance {
    pub scenario: Scenario,
    pub mode: Mode,
    /// Physical budget P_t.
    pub power_budget: f64,
    /// Indices of the ERs with a positive received-power target.
    pub active_ers: Vec<usize>,
    tradeoff: f64,
    psd_margin: f64,
    det_tol: f64,
    eval: ObjectiveEval,
}

impl Instance {
    pub fn new(s: &Scenario, cfg: &SystemConfig, mode: Mode) -> Result<Self> {
        cfg.validate()?;
        s.validate()?;
        if s.n_ers() != cfg.n_ers {
            return Err(Error::DimensionMismatch(format!("scenario has {} ERs, config {}", s.n_ers(), cfg.n_ers)));
        }
        let power = cfg.power_budget();
        let mut active = Vec::new();
        let mut g = Vec::new();
        for (l, (circuit, e)) in cfg.circuits().iter().zip(cfg.thresholds()).enumerate() {
            let target = circuit.invert_threshold(e)?;
            if target > 0.0 {
                active.push(l);
                let scale = target.sqrt().recip();
                g.push(s.g[l].iter().map(|z| z * scale).collect());
            }
        }
        let scenario = Scenario {
            h: s.h.clone(),
            g,
            theta: s.theta,
            alpha: s.alpha,
            n_rx: s.n_rx,
            noise_comm: s.noise_comm,
            noise_sense: s.noise_sense,
        };
        let eval = ObjectiveEval {
            h: scenario.h.clone(),
            noise: scenario.noise_comm,
            geom: Geometry::for_scenario(&scenario),
            alpha: scenario.alpha,
            kappa: 2.0 / scenario.noise_sense,
            tradeoff: cfg.tradeoff,
            det_tol: cfg.fim_det_tol,
            mode,
            scratch: RefCell::new((vec![0.0; s.n_users()], vec![ZERO; 2 * s.n_rx])),
        };
        Ok(Instance {
            scenario,
            mode,
            power_budget: power,
            active_ers: active,
            tradeoff: cfg.tradeoff,
            psd_margin: cfg.psd_margin,
            det_tol: cfg.fim_det_tol,
            eval,
        })
    }

    pub fn layout(&self) -> Layout {
        Layout::new(self.scenario.n_tx(), self.scenario.n_users(), self.scenario.n_ers())
    }

    /// Full-budget matched-filter start.
    pub fn initial_precoder(&self) -> PrecoderState {
        init_with_power(&self.scenario, self.power_budget, self.mode)
    }

    /// `obj(·)` of a precoder; ER rescaling does not enter it.
    pub fn objective(&self, p: &PrecoderState) -> Result<f64> {
        self.eval.precoder(p)
    }

    /// Objective of the primal part of a stacked point (NaN if the FIM is singular).
    pub fn stacked_objective(&self, x: &[f64]) -> f64 {
        self.eval.stacked(&self.layout(), x)
    }

    /// Freeze the subproblem around `anchor` with auxiliaries `aux`.
    pub fn context(&self, anchor: &PrecoderState, aux: AuxState) -> Result<SubproblemContext> {
        let bundle = fim(anchor, &self.scenario)?;
        let sur = surrogate_matrices(&bundle, self.psd_margin, self.det_tol)?;
        SubproblemContext::new(
            &self.scenario,
            aux,
            anchor,
            &sur.lambda_mat,
            vec![1.0; self.scenario.n_ers()],
            self.tradeoff,
            self.power_budget,
            self.mode,
        )
        .map(|c| c.with_power_weight(1.0 / self.power_budget))
    }

    /// Start point at `anchor`: best common split for the surrogate rates and
    /// the initial multipliers.
    pub fn fresh_start(&self, ctx: &SubproblemContext, anchor: &PrecoderState, dual_init: f64) -> Vec<f64> {
        let layout = ctx.layout();
        let mut x = vec![0.0; layout.dim()];
        layout.write_precoder(anchor, &mut x);
        let (g_c, g_p) = ctx.surrogate_rates(&x);
        let (t, c) = match self.mode {
            Mode::Rsma => water_fill(g_c.iter().cloned().fold(f64::INFINITY, f64::min), &g_p),
            Mode::Sdma => (g_p.iter().cloned().fold(f64::INFINITY, f64::min), vec![0.0; g_p.len()]),
        };
        x[layout.c()..layout.r()].copy_from_slice(&c);
        x[layout.r()] = t;
        let dual = DualState::initial(layout.n_users, layout.n_ers, dual_init, self.mode);
        layout.write_dual(&dual, &mut x);
        x
    }

}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IterationCounts {
    pub outer: usize,
    pub middle: usize,
    pub inner: usize,
    /// Inner iterations of each subproblem solve, in order.
    pub inner_per_solve: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CapHits {
    pub outer: bool,
    /// Outer iterations whose middle loop ran to its cap.
    pub middle: usize,
    /// Subproblem solves stopped by the inner cap.
    pub inner: usize,
}

/// Wall-clock seconds per phase.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub setup_s: f64,
    pub inner_s: f64,
    pub total_s: f64,
}

impl Timing {
    pub fn per_inner_iteration(&self, iterations: usize) -> f64 {
        if iterations == 0 {
            0.0
        } else {
            self.inner_s / iterations as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InnerTrace {
    pub outer: usize,
    pub middle: usize,
    pub rows: Vec<TraceRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub mode: Mode,
    /// Scenario stream offset, when the run came from a seeded draw.
    pub seed: Option<u64>,
    /// Final objective in nats, `min_k(c_k + R_{p,k}) − λ·tr(F⁻¹)`.
    pub objective: f64,
    /// Final max-min rate, bits per channel use.
    pub mmf_rate: f64,
    pub crb: f64,
    /// Set when the outer loop met its tolerance before its cap.
    pub converged: bool,
    /// Outer objective `f₁` before the first and after every outer iteration.
    pub outer_trace: Vec<f64>,
    /// Middle objective `f₂` per outer iteration, starting value first.
    pub middle_traces: Vec<Vec<f64>>,
    pub iterations: IterationCounts,
    pub cap_hits: CapHits,
    pub timing: Timing,
    pub precoder: PrecoderState,
    pub rates: RateReport,
    pub feasibility: FeasibilityReport,
    pub initial_feasibility: FeasibilityReport,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inner_traces: Vec<InnerTrace>,
}

/// Feasibility tolerance used for run records.
pub const FEASIBILITY_TOL: f64 = 1e-3;

/// Run the full optimizer on one scenario.
pub fn run(s: &Scenario, cfg: &SystemConfig, mode: Mode) -> Result<RunRecord> {
    let started = Instant::now();
    let inst = Instance::new(s, cfg, mode)?;
    let layout = inst.layout();
    let mut p = inst.initial_precoder();
    let initial_feasibility = check_feasibility(&p.clone(), s, cfg, FEASIBILITY_TOL)?;
    let opts = SolveOptions {
        tol: cfg.tol_inner,
        residual_tol: cfg.residual_tol,
        max_iters: cfg.max_inner,
        params: StepParams { sigma_cap: cfg.step_init, tau: cfg.step_shrink },
        record_trace: cfg.record_traces,
    };
    let mut f1 = inst.objective(&p)?;
    let mut outer_trace = vec![f1];
    let mut middle_traces = Vec::new();
    let mut counts = IterationCounts::default();
    let mut caps = CapHits::default();
    let mut inner_traces = Vec::new();
    let mut warm: Option<(Vec<f64>, f64)> = None;
    let mut inner_s = 0.0;
    let mut converged = false;
    let setup_s = started.elapsed().as_secs_f64();

    for outer in 0..cfg.max_outer {
        counts.outer += 1;
        let aux = AuxState::optimal(&p, &inst.scenario)?;
        let mut f2 = inst.objective(&p)?;
        let mut middle_trace = vec![f2];
        let mut middle_converged = false;
        for middle in 0..cfg.max_middle {
            counts.middle += 1;
            let ctx = inst.context(&p, aux.clone())?;
            let (x0, sigma0) = match warm.take() {
                Some((mut x, sigma)) if cfg.warm_start => {
                    let keep_c = x[layout.c()..layout.r()].to_vec();
                    let keep_r = x[layout.r()];
                    layout.write_precoder(&p, &mut x);
                    x[layout.c()..layout.r()].copy_from_slice(&keep_c);
                    x[layout.r()] = keep_r;
                    (x, sigma)
                }
                _ => (inst.fresh_start(&ctx, &p, cfg.dual_init), cfg.step_init),
            };
            let t0 = Instant::now();
            let outcome = solve_subproblem(&ctx, x0, sigma0, &opts, |x| inst.stacked_objective(x));
            inner_s += t0.elapsed().as_secs_f64();
            counts.inner += outcome.iterations;
            counts.inner_per_solve.push(outcome.iterations);
            caps.inner += (!outcome.converged) as usize;
            if cfg.record_traces {
                inner_traces.push(InnerTrace { outer, middle, rows: outcome.trace.clone() });
            }
            let mut next = layout.precoder(&outcome.x);
            next.c_alloc.fill(0.0);
            next.mmf_aux = 0.0;
            p = renormalize_power(&next, inst.power_budget)?;
            warm = Some((outcome.x, outcome.sigma_last));
            let f2n = inst.objective(&p)?;
            middle_trace.push(f2n);
            let settled = (f2n - f2).abs() < cfg.tol_middle;
            f2 = f2n;
            if settled {
                middle_converged = true;
                break;
            }
        }
        caps.middle += (!middle_converged) as usize;
        middle_traces.push(middle_trace);
        let f1n = inst.objective(&p)?;
        outer_trace.push(f1n);
        let settled = (f1n - f1).abs() < cfg.tol_outer;
        f1 = f1n;
        if settled {
            converged = true;
            break;
        }
    }
    caps.outer = !converged;

    let mut final_p = p.clone();
    let (mmf, alloc) = optimal_mmf(&final_p, s, mode)?;
    final_p.c_alloc = alloc;
    final_p.mmf_aux = mmf;
    let rates = compute_rates(&final_p, s)?;
    let crb = crate::sensing::crb_trace_with_tol(&fim(&final_p, s)?, cfg.fim_det_tol)?;
    let feasibility = check_feasibility(&final_p, s, cfg, FEASIBILITY_TOL)?;
    Ok(RunRecord {
        mode,
        seed: None,
        objective: objective(&final_p, s, cfg)?,
        mmf_rate: rates.mmf_rate,
        crb,
        converged,
        outer_trace,
        middle_traces,
        iterations: counts,
        cap_hits: caps,
        timing: Timing { setup_s, inner_s, total_s: started.elapsed().as_secs_f64() },
        precoder: final_p,
        rates,
        feasibility,
        initial_feasibility,
        inner_traces,
    })
}

/// Draw scenario `seed_offset` from `cfg` and run on it.
pub fn run_seeded(cfg: &SystemConfig, seed_offset: u64, mode: Mode) -> Result<RunRecord> {
    let s = crate::scenario::generate_scenario(cfg, seed_offset)?;
    let mut rec = run(&s, cfg, mode)?;
    rec.seed = Some(seed_offset);
    Ok(rec)
}
