#![allow(dead_code)]

use iscap::config::SystemConfig;
use iscap::eg::{DualState, Layout, SubproblemContext};
use iscap::fp::AuxState;
use iscap::linalg::CMat;
use iscap::oracle::LagrangianInputs;
use iscap::rsma::{Mode, PrecoderState};
use iscap::scenario::{generate_scenario, Scenario};
use iscap::sensing::{fim, surrogate_matrices};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn cn(rng: &mut impl Rng) -> Complex64 {
    Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
}

/// Random precoder with total power `power`.
pub fn random_precoder(rng: &mut impl Rng, n_tx: usize, n_users: usize, power: f64) -> PrecoderState {
    let mut p = PrecoderState::zeros(n_tx, n_users);
    for col in p.columns_mut() {
        for z in col.iter_mut() {
            *z = cn(rng);
        }
    }
    let now = iscap::rsma::total_power(&p);
    p.scale((power / now).sqrt());
    p
}

/// A subproblem frozen at a random anchor, with the inputs the scalar oracle needs.
pub struct Fixture {
    pub scenario: Scenario,
    pub aux: AuxState,
    pub anchor: PrecoderState,
    pub lambda_mat: CMat,
    pub targets: Vec<f64>,
    pub tradeoff: f64,
    pub power: f64,
    pub power_weight: f64,
    pub ctx: SubproblemContext,
}

impl Fixture {
    pub fn new(cfg: &SystemConfig, seed: u64, mode: Mode) -> Self {
        let mut r = rng(seed);
        let scenario = generate_scenario(cfg, seed).unwrap();
        let power = cfg.power_budget();
        let anchor = random_precoder(&mut r, cfg.n_tx, cfg.n_users, power);
        let aux = AuxState::optimal(&anchor, &scenario).unwrap();
        let bundle = fim(&anchor, &scenario).unwrap();
        let lambda_mat = surrogate_matrices(&bundle, cfg.psd_margin, cfg.fim_det_tol).unwrap().lambda_mat;
        let targets: Vec<f64> = (0..cfg.n_ers).map(|_| r.random_range(1e-3..1e-2)).collect();
        let power_weight = r.random_range(0.5..2.0) / power;
        let ctx = SubproblemContext::new(&scenario, aux.clone(), &anchor, &lambda_mat, targets.clone(), cfg.tradeoff, power, mode)
            .unwrap()
            .with_power_weight(power_weight);
        Fixture { scenario, aux, anchor, lambda_mat, targets, tradeoff: cfg.tradeoff, power, power_weight, ctx }
    }

    pub fn inputs(&self) -> LagrangianInputs<'_> {
        LagrangianInputs {
            scenario: &self.scenario,
            aux: &self.aux,
            anchor: &self.anchor,
            lambda_mat: &self.lambda_mat,
            targets: &self.targets,
            tradeoff: self.tradeoff,
            power: self.power,
            power_weight: self.power_weight,
        }
    }

    pub fn layout(&self) -> Layout {
        self.ctx.layout()
    }

    /// Random primal-dual point with positive multipliers.
    pub fn random_point(&self, seed: u64) -> Vec<f64> {
        let mut r = rng(seed ^ 0xABCD);
        let lay = self.layout();
        let mut x = vec![0.0; lay.dim()];
        let level = self.power * r.random_range(0.5..1.0);
        let p = random_precoder(&mut r, lay.n_tx, lay.n_users, level);
        lay.write_precoder(&p, &mut x);
        for v in &mut x[lay.c()..lay.dual_start()] {
            *v = r.random_range(0.0..2.0);
        }
        let d = DualState {
            beta: (0..lay.n_users).map(|_| r.random_range(0.01..1.0)).collect(),
            rho: (0..lay.n_users).map(|_| r.random_range(0.01..1.0)).collect(),
            mu: (0..lay.n_users).map(|_| r.random_range(0.01..1.0)).collect(),
            omega_dual: r.random_range(0.01..1.0),
            eta: (0..lay.n_ers).map(|_| r.random_range(0.01..1.0)).collect(),
        };
        lay.write_dual(&d, &mut x);
        x
    }
}

/// K=2, N_t=2, L=1 subproblem at the matched-filter start of seed `seed`,
/// with its fresh EG start point.
pub fn tiny_subproblem(seed: u64, mode: Mode) -> (SubproblemContext, Vec<f64>) {
    use iscap::algorithm::Instance;
    let cfg = SystemConfig { n_tx: 2, n_rx: 2, n_users: 2, n_ers: 1, eh_threshold: vec![0.001], ..SystemConfig::default() };
    let s = generate_scenario(&cfg, seed).unwrap();
    let inst = Instance::new(&s, &cfg, mode).unwrap();
    let anchor = inst.initial_precoder();
    let aux = AuxState::optimal(&anchor, &inst.scenario).unwrap();
    let ctx = inst.context(&anchor, aux).unwrap();
    let x0 = inst.fresh_start(&ctx, &anchor, cfg.dual_init);
    (ctx, x0)
}

/// Solve a subproblem tightly with the extragradient method.
pub fn solve_tight(ctx: &SubproblemContext, x0: Vec<f64>) -> iscap::eg::SubproblemOutcome {
    use iscap::eg::{solve_subproblem, SolveOptions, StepParams};
    let opts = SolveOptions {
        tol: 1e-9,
        residual_tol: 1e-7,
        max_iters: 200_000,
        params: StepParams { sigma_cap: 0.1, tau: 0.9 },
        record_trace: false,
    };
    solve_subproblem(ctx, x0, 0.1, &opts, |x| ctx.lagrangian_value(x))
}
