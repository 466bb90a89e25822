use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algorithm::run_seeded;
use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::rsma::Mode;

/// The swept parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    NTx,
    NUsers,
    SnrDb,
    EhThreshold,
}

impl Axis {
    pub fn as_str(self) -> &'static str {
        match self {
            Axis::NTx => "n_tx",
            Axis::NUsers => "n_users",
            Axis::SnrDb => "snr_db",
            Axis::EhThreshold => "eh_threshold",
        }
    }

    /// Axis title for plots. Thresholds are shown in mW.
    pub fn label(self) -> &'static str {
        match self {
            Axis::NTx => "transmit antennas N_t",
            Axis::NUsers => "information receivers K",
            Axis::SnrDb => "SNR (dB)",
            Axis::EhThreshold => "EH threshold (mW)",
        }
    }

    /// Value as drawn on the plot axis.
    pub fn display_value(self, v: f64) -> f64 {
        match self {
            Axis::EhThreshold => v * 1e3,
            _ => v,
        }
    }

    fn is_integral(self) -> bool {
        matches!(self, Axis::NTx | Axis::NUsers)
    }

    /// Set this parameter on `cfg`; thresholds apply to every ER.
    pub fn apply(self, cfg: &mut SystemConfig, value: f64) -> Result<()> {
        match self {
            Axis::NTx => cfg.n_tx = value as usize,
            Axis::NUsers => cfg.n_users = value as usize,
            Axis::SnrDb => cfg.snr_db = value,
            Axis::EhThreshold => cfg.eh_threshold = vec![value],
        }
        cfg.validate()
    }
}

impl std::str::FromStr for Axis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "n_tx" => Ok(Axis::NTx),
            "n_users" => Ok(Axis::NUsers),
            "snr_db" => Ok(Axis::SnrDb),
            "eh_threshold" => Ok(Axis::EhThreshold),
            other => Err(Error::Parse(format!("unknown sweep axis '{other}'"))),
        }
    }
}

fn default_seeds() -> usize {
    100
}

fn default_modes() -> Vec<Mode> {
    vec![Mode::Rsma, Mode::Sdma]
}

fn default_output() -> PathBuf {
    PathBuf::from("sweep_out")
}

/// A sweep definition, read from TOML:
///
/// ```toml
/// axis = "eh_threshold"
/// values = [0.002, 0.004, 0.006, 0.008]
/// n_seeds = 100
/// modes = ["rsma", "sdma"]
/// output_dir = "out/eh"
///
/// [fixed]
/// n_tx = 4
/// snr_db = 25.0
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub axis: Axis,
    pub values: Vec<f64>,
    #[serde(default = "default_seeds")]
    pub n_seeds: usize,
    /// Seeds are `seed_base + index`.
    #[serde(default)]
    pub seed_base: u64,
    #[serde(default = "default_modes")]
    pub modes: Vec<Mode>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    /// Also write one JSON run record per cell under `output_dir/runs`.
    #[serde(default)]
    pub write_records: bool,
    /// Config fields held fixed across the sweep.
    #[serde(default)]
    pub fixed: toml::Table,
}

impl SweepSpec {
    pub fn new(axis: Axis, values: Vec<f64>) -> Self {
        SweepSpec {
            axis,
            values,
            n_seeds: default_seeds(),
            seed_base: 0,
            modes: default_modes(),
            output_dir: default_output(),
            write_records: false,
            fixed: toml::Table::new(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: SweepSpec = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSweep(m));
        if self.values.is_empty() {
            return bad("values must not be empty".into());
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return bad("values must be finite".into());
        }
        if self.values.windows(2).any(|w| w[1] <= w[0]) {
            return bad("values must be strictly increasing".into());
        }
        if self.axis.is_integral() && self.values.iter().any(|v| v.fract() != 0.0 || *v < 1.0) {
            return bad(format!("{} takes positive integer values", self.axis.as_str()));
        }
        if self.n_seeds == 0 {
            return bad("n_seeds must be at least 1".into());
        }
        if self.fixed.contains_key(self.axis.as_str()) {
            return bad(format!("{} is both swept and fixed", self.axis.as_str()));
        }
        for v in &self.values {
            self.config_for(*v)?;
        }
        Ok(())
    }

    /// Defaults with the `[fixed]` table applied.
    pub fn base_config(&self) -> Result<SystemConfig> {
        let mut table = toml::Table::try_from(SystemConfig::default()).map_err(|e| Error::Parse(e.to_string()))?;
        for (k, v) in &self.fixed {
            let v = match (table.get(k), v) {
                (Some(toml::Value::Float(_)), toml::Value::Integer(i)) => toml::Value::Float(*i as f64),
                (Some(toml::Value::Array(_)), toml::Value::Array(items)) => toml::Value::Array(
                    items
                        .iter()
                        .map(|x| match x {
                            toml::Value::Integer(i) => toml::Value::Float(*i as f64),
                            x => x.clone(),
                        })
                        .collect(),
                ),
                _ => v.clone(),
            };
            table.insert(k.clone(), v);
        }
        let text = toml::to_string(&table).map_err(|e| Error::Parse(e.to_string()))?;
        SystemConfig::from_toml_str(&text)
    }

    pub fn config_for(&self, value: f64) -> Result<SystemConfig> {
        let mut cfg = self.base_config()?;
        self.axis.apply(&mut cfg, value)?;
        Ok(cfg)
    }

    pub fn seeds(&self) -> impl Iterator<Item = u64> + '_ {
        (0..self.n_seeds as u64).map(move |i| self.seed_base + i)
    }
}

/// Outcome of one `(value, seed, mode)` cell. Failed runs keep their error
/// tag and message and carry NaN metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRow {
    pub axis: Axis,
    pub value: f64,
    pub mode: Mode,
    pub seed: u64,
    /// `ok` or the error kind.
    pub status: String,
    pub message: String,
    pub objective: f64,
    /// Bits per channel use.
    pub mmf_rate: f64,
    pub crb: f64,
    pub converged: bool,
    pub feasible: bool,
    pub min_slack: f64,
    pub outer_iterations: usize,
    pub middle_iterations: usize,
    pub inner_iterations: usize,
    pub inner_cap_hits: usize,
    pub setup_s: f64,
    pub inner_s: f64,
    pub total_s: f64,
    /// Inner-loop seconds per extragradient iteration.
    pub inner_iter_s: f64,
}

impl SeedRow {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

/// Mean and standard error over the successful seeds of one `(value, mode)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub axis: Axis,
    pub value: f64,
    pub mode: Mode,
    pub n_runs: usize,
    pub n_failed: usize,
    pub n_converged: usize,
    pub n_feasible: usize,
    pub objective_mean: f64,
    pub objective_se: f64,
    pub mmf_rate_mean: f64,
    pub mmf_rate_se: f64,
    pub crb_mean: f64,
    pub crb_se: f64,
    pub inner_iterations_mean: f64,
    pub total_s_mean: f64,
    pub total_s_se: f64,
    pub inner_iter_s_median: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub axis: Axis,
    pub rows: Vec<SeedRow>,
    pub aggregates: Vec<AggregateRow>,
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Reduce per-seed rows to one aggregate per `(value, mode)`, in first-seen order.
pub fn aggregate(rows: &[SeedRow]) -> Vec<AggregateRow> {
    let mut keys: Vec<(u64, Mode)> = Vec::new();
    for r in rows {
        let key = (r.value.to_bits(), r.mode);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(bits, mode)| {
            let group: Vec<&SeedRow> = rows.iter().filter(|r| r.value.to_bits() == bits && r.mode == mode).collect();
            let ok: Vec<&SeedRow> = group.iter().copied().filter(|r| r.is_ok()).collect();
            let col = |f: fn(&SeedRow) -> f64| ok.iter().map(|r| f(r)).collect::<Vec<f64>>();
            let (objective_mean, objective_se) = mean_se(&col(|r| r.objective));
            let (mmf_rate_mean, mmf_rate_se) = mean_se(&col(|r| r.mmf_rate));
            let (crb_mean, crb_se) = mean_se(&col(|r| r.crb));
            let (inner_iterations_mean, _) = mean_se(&col(|r| r.inner_iterations as f64));
            let (total_s_mean, total_s_se) = mean_se(&col(|r| r.total_s));
            AggregateRow {
                axis: group[0].axis,
                value: f64::from_bits(bits),
                mode,
                n_runs: group.len(),
                n_failed: group.len() - ok.len(),
                n_converged: ok.iter().filter(|r| r.converged).count(),
                n_feasible: ok.iter().filter(|r| r.feasible).count(),
                objective_mean,
                objective_se,
                mmf_rate_mean,
                mmf_rate_se,
                crb_mean,
                crb_se,
                inner_iterations_mean,
                total_s_mean,
                total_s_se,
                inner_iter_s_median: median(&col(|r| r.inner_iter_s)),
            }
        })
        .collect()
}

fn run_cell(spec: &SweepSpec, value: f64, seed: u64, mode: Mode) -> SeedRow {
    let mut row = SeedRow {
        axis: spec.axis,
        value,
        mode,
        seed,
        status: "ok".into(),
        message: String::new(),
        objective: f64::NAN,
        mmf_rate: f64::NAN,
        crb: f64::NAN,
        converged: false,
        feasible: false,
        min_slack: f64::NAN,
        outer_iterations: 0,
        middle_iterations: 0,
        inner_iterations: 0,
        inner_cap_hits: 0,
        setup_s: 0.0,
        inner_s: 0.0,
        total_s: 0.0,
        inner_iter_s: f64::NAN,
    };
    let outcome = spec.config_for(value).and_then(|cfg| run_seeded(&cfg, seed, mode));
    match outcome {
        Ok(rec) => {
            if spec.write_records {
                let dir = spec.output_dir.join("runs");
                let name = format!("{}_{}_{}_{}.json", spec.axis.as_str(), value, mode, seed);
                let written = std::fs::create_dir_all(&dir)
                    .and_then(|_| std::fs::write(dir.join(&name), serde_json::to_vec_pretty(&rec).expect("record serializes")));
                if let Err(e) = written {
                    row.status = "io".into();
                    row.message = format!("{}: {e}", dir.join(name).display());
                }
            }
            row.objective = rec.objective;
            row.mmf_rate = rec.mmf_rate;
            row.crb = rec.crb;
            row.converged = rec.converged;
            row.feasible = rec.feasibility.is_feasible();
            row.min_slack = rec.feasibility.min_slack();
            row.outer_iterations = rec.iterations.outer;
            row.middle_iterations = rec.iterations.middle;
            row.inner_iterations = rec.iterations.inner;
            row.inner_cap_hits = rec.cap_hits.inner;
            row.setup_s = rec.timing.setup_s;
            row.inner_s = rec.timing.inner_s;
            row.total_s = rec.timing.total_s;
            row.inner_iter_s = rec.timing.per_inner_iteration(rec.iterations.inner);
        }
        Err(e) => {
            row.status = e.kind().into();
            row.message = e.to_string();
        }
    }
    row
}

/// Run every `(value, seed, mode)` cell on a pool of `jobs` threads (all
/// cores when `None`). Rows come back ordered by value, then seed, then mode.
pub fn run_sweep(spec: &SweepSpec, jobs: Option<usize>) -> Result<SweepResult> {
    spec.validate()?;
    let mut cells = Vec::new();
    for &value in &spec.values {
        for seed in spec.seeds() {
            for &mode in &spec.modes {
                cells.push((value, seed, mode));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::InvalidSweep(format!("cannot start worker pool: {e}")))?;
    let rows: Vec<SeedRow> = pool.install(|| cells.par_iter().map(|&(v, s, m)| run_cell(spec, v, s, m)).collect());
    let aggregates = aggregate(&rows);
    Ok(SweepResult { axis: spec.axis, rows, aggregates })
}
