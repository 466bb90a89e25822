//! Monte Carlo sweeps over one system parameter, their CSV tables and SVG plots.

mod plot;
mod sweep;
mod table;

pub use plot::{emit_plot, PlotKind};
pub use sweep::{aggregate, run_sweep, AggregateRow, Axis, SeedRow, SweepResult, SweepSpec};
pub use table::{
    emit_csv, parse_csv, parse_seed_csv, seed_path, strip_timing, AGGREGATE_COLUMNS, SEED_COLUMNS, TIMING_COLUMNS,
};
