use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use iscap::harness::{emit_csv, emit_plot, parse_csv, run_sweep, AggregateRow, PlotKind, SweepSpec};
use iscap::{algorithm::run_seeded, Error, Mode, Result, SystemConfig};

#[derive(Parser)]
#[command(name = "iscap", version, about = "RSMA-assisted ISCAP beamforming via extragradient")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize one seeded channel draw and print a summary.
    Run(RunArgs),
    /// Run a parameter sweep from a TOML spec; writes CSV tables and SVG plots.
    Sweep(SweepArgs),
    /// Cross-check the fast evaluators against the independent oracles.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Re-render plots from an aggregate CSV.
    Plot(PlotArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Rsma,
    Sdma,
    Both,
}

impl ModeArg {
    fn modes(self) -> Vec<Mode> {
        match self {
            ModeArg::Rsma => vec![Mode::Rsma],
            ModeArg::Sdma => vec![Mode::Sdma],
            ModeArg::Both => vec![Mode::Rsma, Mode::Sdma],
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = ModeArg::Rsma)]
    mode: ModeArg,
    /// System configuration (TOML); defaults otherwise.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config field, `key=value`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Write the full run record(s) as JSON to this file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Keep per-iteration inner traces in the record.
    #[arg(long)]
    trace: bool,
}

#[derive(Args)]
struct SweepArgs {
    spec: PathBuf,
    /// Output directory; overrides the spec's `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Override the spec's seed count.
    #[arg(long)]
    seeds: Option<usize>,
}

#[derive(Args)]
struct PlotArgs {
    csv: PathBuf,
    /// Directory for the SVG files (default: next to the CSV).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_parser = parse_kind)]
    kind: Option<PlotKind>,
}

fn parse_kind(s: &str) -> std::result::Result<PlotKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<SystemConfig> {
    let mut cfg = match path {
        Some(p) => SystemConfig::load(p)?,
        None => SystemConfig::default(),
    };
    cfg.apply_overrides(overrides)?;
    Ok(cfg)
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let mut cfg = load_config(args.config.as_deref(), &args.set)?;
    cfg.record_traces |= args.trace;
    let mut records = Vec::new();
    for mode in args.mode.modes() {
        let rec = run_seeded(&cfg, args.seed, mode)?;
        println!(
            "mode={} seed={} objective={:.6} mmf_rate_bits={:.6} crb={:.6e} converged={} feasible={} min_slack={:.3e} outer={} middle={} inner={} inner_caps={} time_s={:.3}",
            mode,
            args.seed,
            rec.objective,
            rec.mmf_rate,
            rec.crb,
            rec.converged,
            rec.feasibility.is_feasible(),
            rec.feasibility.min_slack(),
            rec.iterations.outer,
            rec.iterations.middle,
            rec.iterations.inner,
            rec.cap_hits.inner,
            rec.timing.total_s,
        );
        records.push(rec);
    }
    if let Some(path) = args.out {
        let json = if records.len() == 1 {
            serde_json::to_string_pretty(&records[0])
        } else {
            serde_json::to_string_pretty(&records)
        }
        .expect("run record serializes");
        std::fs::write(&path, json).map_err(|e| Error::Io { path, source: e })?;
    }
    Ok(())
}

fn plot_all(rows: &[AggregateRow], dir: &Path, kinds: &[PlotKind]) -> Result<()> {
    for &kind in kinds {
        let path = dir.join(format!("{}.svg", kind.as_str()));
        emit_plot(rows, kind, &path)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let mut spec = SweepSpec::load(&args.spec)?;
    if let Some(out) = args.out {
        spec.output_dir = out;
    }
    if let Some(n) = args.seeds {
        spec.n_seeds = n;
    }
    let result = run_sweep(&spec, args.jobs)?;
    let csv = spec.output_dir.join("summary.csv");
    emit_csv(&result, &csv)?;
    println!("wrote {}", csv.display());
    for a in &result.aggregates {
        println!(
            "{}={} mode={} runs={} failed={} converged={} feasible={} objective={:.6}±{:.2e} mmf_rate_bits={:.6}±{:.2e} crb={:.6e}±{:.2e}",
            a.axis.as_str(),
            a.value,
            a.mode,
            a.n_runs,
            a.n_failed,
            a.n_converged,
            a.n_feasible,
            a.objective_mean,
            a.objective_se,
            a.mmf_rate_mean,
            a.mmf_rate_se,
            a.crb_mean,
            a.crb_se,
        );
    }
    if !result.aggregates.is_empty() {
        plot_all(&result.aggregates, &spec.output_dir, &PlotKind::ALL)?;
    }
    Ok(())
}

fn cmd_verify(seed: u64) -> Result<bool> {
    let checks = iscap::oracle::verification_suite(seed)?;
    for c in &checks {
        println!("{} {} worst={:.3e} bound={:.1e}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.worst, c.bound);
    }
    Ok(checks.iter().all(|c| c.passed))
}

fn cmd_plot(args: PlotArgs) -> Result<()> {
    let rows = parse_csv(&args.csv)?;
    let dir = match args.out {
        Some(d) => d,
        None => args.csv.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    let kinds = args.kind.map_or(PlotKind::ALL.to_vec(), |k| vec![k]);
    plot_all(&rows, &dir, &kinds)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(a) => cmd_run(a).map(|_| true),
        Command::Sweep(a) => cmd_sweep(a).map(|_| true),
        Command::Verify { seed } => cmd_verify(seed),
        Command::Plot(a) => cmd_plot(a).map(|_| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error kind=verification_failed message=\"one or more checks failed\"");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error kind={} message={:?}", e.kind(), e.to_string());
            ExitCode::from(1)
        }
    }
}
