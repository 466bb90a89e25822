use serde::{Deserialize, Serialize};

/// A monotone operator `h` on ℝⁿ with a closed convex feasible set `S`.
pub trait VariationalMap {
    fn dim(&self) -> usize;
    fn eval(&self, x: &[f64], out: &mut [f64]);
    /// Euclidean projection onto `S`, in place.
    fn project(&self, x: &mut [f64]);
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepParams {
    /// Upper bound σ on every step size.
    pub sigma_cap: f64,
    /// Shrink factor τ ∈ (0, 1) in the adaptive rule.
    pub tau: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub sigma_used: f64,
    /// `‖x⁺ − x‖`.
    pub residual: f64,
    /// Set when `‖h(x) − h(x̄)‖ = 0`; the step then falls back to the cap.
    pub degenerate: bool,
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn step_into<M: VariationalMap + ?Sized>(map: &M, x: &[f64], dir: &[f64], sigma: f64, out: &mut [f64]) {
    for ((o, xi), di) in out.iter_mut().zip(x).zip(dir) {
        *o = xi - sigma * di;
    }
    map.project(out);
}

/// `‖x − Π_S(x − h(x))‖`, zero exactly at solutions of the VI.
pub fn natural_residual<M: VariationalMap + ?Sized>(map: &M, x: &[f64], hx: &[f64], buf: &mut [f64]) -> f64 {
    step_into(map, x, hx, 1.0, buf);
    dist(x, buf)
}

/// Buffers for allocation-free extragradient iterations. `x` and `hx` hold
/// the current iterate and its map value.
#[derive(Debug, Clone)]
pub struct EgWorkspace {
    pub x: Vec<f64>,
    pub hx: Vec<f64>,
    x_bar: Vec<f64>,
    h_bar: Vec<f64>,
    x_next: Vec<f64>,
    h_next: Vec<f64>,
    pub sigma: f64,
}

impl EgWorkspace {
    pub fn new<M: VariationalMap + ?Sized>(map: &M, mut x0: Vec<f64>, sigma: f64) -> Self {
        let n = map.dim();
        assert_eq!(x0.len(), n, "start point has the wrong dimension");
        map.project(&mut x0);
        let mut hx = vec![0.0; n];
        map.eval(&x0, &mut hx);
        EgWorkspace {
            x: x0,
            hx,
            x_bar: vec![0.0; n],
            h_bar: vec![0.0; n],
            x_next: vec![0.0; n],
            h_next: vec![0.0; n],
            sigma,
        }
    }

    /// One prediction-correction step. The prediction uses the previous step
    /// size; the correction uses `min(τ‖x − x̄‖/‖h(x) − h(x̄)‖, σ)`.
    pub fn step<M: VariationalMap + ?Sized>(&mut self, map: &M, params: StepParams) -> StepInfo {
        step_into(map, &self.x, &self.hx, self.sigma, &mut self.x_bar);
        map.eval(&self.x_bar, &mut self.h_bar);
        let dx = dist(&self.x, &self.x_bar);
        let dh = dist(&self.hx, &self.h_bar);
        let degenerate = dh == 0.0;
        let sigma = if degenerate { params.sigma_cap } else { (params.tau * dx / dh).min(params.sigma_cap) };
        step_into(map, &self.x, &self.h_bar, sigma, &mut self.x_next);
        let residual = dist(&self.x, &self.x_next);
        map.eval(&self.x_next, &mut self.h_next);
        std::mem::swap(&mut self.x, &mut self.x_next);
        std::mem::swap(&mut self.hx, &mut self.h_next);
        self.sigma = sigma;
        StepInfo { sigma_used: sigma, residual, degenerate }
    }

    /// Natural residual at the current iterate.
    pub fn natural_residual<M: VariationalMap + ?Sized>(&mut self, map: &M) -> f64 {
        natural_residual(map, &self.x, &self.hx, &mut self.x_bar)
    }
}

/// Single extragradient step from `x` with prediction step `sigma_prev`.
pub fn eg_step<M: VariationalMap + ?Sized>(map: &M, x: &[f64], sigma_prev: f64, params: StepParams) -> (Vec<f64>, StepInfo) {
    let mut ws = EgWorkspace::new(map, x.to_vec(), sigma_prev);
    let info = ws.step(map, params);
    (ws.x, info)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Stop once the objective changes by less than this between iterations…
    pub tol: f64,
    /// …and the natural residual is below this.
    pub residual_tol: f64,
    pub max_iters: usize,
    pub params: StepParams,
    pub record_trace: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub objective: f64,
    pub residual: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubproblemOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// False when the iteration cap was reached first.
    pub converged: bool,
    pub natural_residual: f64,
    pub sigma_last: f64,
    pub degenerate_steps: usize,
    pub trace: Vec<TraceRow>,
}

/// Iterate extragradient steps from `x0` until the objective has settled and
/// the iterate solves the VI to `residual_tol`, or the cap is reached.
pub fn solve_subproblem<M, F>(map: &M, x0: Vec<f64>, sigma0: f64, opts: &SolveOptions, mut objective: F) -> SubproblemOutcome
where
    M: VariationalMap + ?Sized,
    F: FnMut(&[f64]) -> f64,
{
    let mut ws = EgWorkspace::new(map, x0, sigma0);
    let mut f_prev = objective(&ws.x);
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut degenerate_steps = 0;
    let mut nat = ws.natural_residual(map);
    while iterations < opts.max_iters {
        let info = ws.step(map, opts.params);
        iterations += 1;
        degenerate_steps += info.degenerate as usize;
        let f = objective(&ws.x);
        nat = ws.natural_residual(map);
        if opts.record_trace {
            trace.push(TraceRow { iteration: iterations, objective: f, residual: info.residual, sigma: info.sigma_used });
        }
        if (f - f_prev).abs() < opts.tol && nat < opts.residual_tol {
            converged = true;
            break;
        }
        f_prev = f;
    }
    SubproblemOutcome {
        x: ws.x,
        iterations,
        converged,
        natural_residual: nat,
        sigma_last: ws.sigma,
        degenerate_steps,
        trace,
    }
}
