//! CSV tables: one aggregate row per `(value, mode)` and a per-seed detail file.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use super::sweep::{AggregateRow, Axis, SeedRow, SweepResult};
use crate::error::{Error, Result};
use crate::rsma::Mode;

pub const AGGREGATE_COLUMNS: &[&str] = &[
    "axis",
    "value",
    "mode",
    "n_runs",
    "n_failed",
    "n_converged",
    "n_feasible",
    "objective_mean",
    "objective_se",
    "mmf_rate_mean",
    "mmf_rate_se",
    "crb_mean",
    "crb_se",
    "inner_iterations_mean",
    "total_s_mean",
    "total_s_se",
    "inner_iter_s_median",
];

pub const SEED_COLUMNS: &[&str] = &[
    "axis",
    "value",
    "mode",
    "seed",
    "status",
    "message",
    "objective",
    "mmf_rate",
    "crb",
    "converged",
    "feasible",
    "min_slack",
    "outer_iterations",
    "middle_iterations",
    "inner_iterations",
    "inner_cap_hits",
    "setup_s",
    "inner_s",
    "total_s",
    "inner_iter_s",
];

/// Wall-clock columns; every other column is reproducible bit for bit.
pub const TIMING_COLUMNS: &[&str] =
    &["total_s_mean", "total_s_se", "inner_iter_s_median", "setup_s", "inner_s", "total_s", "inner_iter_s"];

/// Twelve significant digits.
fn num(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.11e}")
    }
}

/// Detail file next to an aggregate table: `summary.csv` → `summary_seeds.csv`.
pub fn seed_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("sweep");
    path.with_file_name(format!("{stem}_seeds.csv"))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse(format!("{}: {other:?}", path.display())),
    }
}

fn aggregate_record(a: &AggregateRow) -> Vec<String> {
    vec![
        a.axis.as_str().into(),
        num(a.value),
        a.mode.to_string(),
        a.n_runs.to_string(),
        a.n_failed.to_string(),
        a.n_converged.to_string(),
        a.n_feasible.to_string(),
        num(a.objective_mean),
        num(a.objective_se),
        num(a.mmf_rate_mean),
        num(a.mmf_rate_se),
        num(a.crb_mean),
        num(a.crb_se),
        num(a.inner_iterations_mean),
        num(a.total_s_mean),
        num(a.total_s_se),
        num(a.inner_iter_s_median),
    ]
}

fn seed_record(r: &SeedRow) -> Vec<String> {
    vec![
        r.axis.as_str().into(),
        num(r.value),
        r.mode.to_string(),
        r.seed.to_string(),
        r.status.clone(),
        r.message.clone(),
        num(r.objective),
        num(r.mmf_rate),
        num(r.crb),
        r.converged.to_string(),
        r.feasible.to_string(),
        num(r.min_slack),
        r.outer_iterations.to_string(),
        r.middle_iterations.to_string(),
        r.inner_iterations.to_string(),
        r.inner_cap_hits.to_string(),
        num(r.setup_s),
        num(r.inner_s),
        num(r.total_s),
        num(r.inner_iter_s),
    ]
}

fn write_table(path: &Path, header: &[&str], records: impl Iterator<Item = Vec<String>>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for rec in records {
        w.write_record(&rec).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Write the aggregate table to `path` and the per-seed rows to [`seed_path`].
pub fn emit_csv(result: &SweepResult, path: &Path) -> Result<()> {
    write_table(path, AGGREGATE_COLUMNS, result.aggregates.iter().map(aggregate_record))?;
    write_table(&seed_path(path), SEED_COLUMNS, result.rows.iter().map(seed_record))
}

struct Rows {
    path: PathBuf,
    index: HashMap<String, usize>,
    records: Vec<csv::StringRecord>,
}

impl Rows {
    fn read(path: &Path, expected: &[&str]) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
        let header = r.headers().map_err(|e| csv_err(path, e))?.clone();
        let index: HashMap<String, usize> = header.iter().enumerate().map(|(i, h)| (h.to_string(), i)).collect();
        if let Some(missing) = expected.iter().find(|c| !index.contains_key(**c)) {
            return Err(Error::Parse(format!("{}: missing column '{missing}'", path.display())));
        }
        let records = r.records().collect::<std::result::Result<Vec<_>, _>>().map_err(|e| csv_err(path, e))?;
        Ok(Rows { path: path.to_path_buf(), index, records })
    }

    fn get<'a>(&self, rec: &'a csv::StringRecord, col: &str) -> &'a str {
        rec.get(self.index[col]).unwrap_or("")
    }

    fn parse<T: std::str::FromStr>(&self, rec: &csv::StringRecord, col: &str) -> Result<T> {
        let raw = self.get(rec, col);
        raw.parse().map_err(|_| Error::Parse(format!("{}: bad {col} value '{raw}'", self.path.display())))
    }

    fn axis(&self, rec: &csv::StringRecord) -> Result<Axis> {
        self.get(rec, "axis").parse()
    }

    fn mode(&self, rec: &csv::StringRecord) -> Result<Mode> {
        self.get(rec, "mode").parse()
    }
}

/// Read an aggregate table written by [`emit_csv`].
pub fn parse_csv(path: &Path) -> Result<Vec<AggregateRow>> {
    let rows = Rows::read(path, AGGREGATE_COLUMNS)?;
    rows.records
        .iter()
        .map(|rec| {
            let f = |c: &str| rows.parse::<f64>(rec, c);
            let n = |c: &str| rows.parse::<usize>(rec, c);
            Ok(AggregateRow {
                axis: rows.axis(rec)?,
                value: f("value")?,
                mode: rows.mode(rec)?,
                n_runs: n("n_runs")?,
                n_failed: n("n_failed")?,
                n_converged: n("n_converged")?,
                n_feasible: n("n_feasible")?,
                objective_mean: f("objective_mean")?,
                objective_se: f("objective_se")?,
                mmf_rate_mean: f("mmf_rate_mean")?,
                mmf_rate_se: f("mmf_rate_se")?,
                crb_mean: f("crb_mean")?,
                crb_se: f("crb_se")?,
                inner_iterations_mean: f("inner_iterations_mean")?,
                total_s_mean: f("total_s_mean")?,
                total_s_se: f("total_s_se")?,
                inner_iter_s_median: f("inner_iter_s_median")?,
            })
        })
        .collect()
}

/// Read a per-seed table written by [`emit_csv`].
pub fn parse_seed_csv(path: &Path) -> Result<Vec<SeedRow>> {
    let rows = Rows::read(path, SEED_COLUMNS)?;
    rows.records
        .iter()
        .map(|rec| {
            let f = |c: &str| rows.parse::<f64>(rec, c);
            let n = |c: &str| rows.parse::<usize>(rec, c);
            let b = |c: &str| rows.parse::<bool>(rec, c);
            Ok(SeedRow {
                axis: rows.axis(rec)?,
                value: f("value")?,
                mode: rows.mode(rec)?,
                seed: rows.parse(rec, "seed")?,
                status: rows.get(rec, "status").to_string(),
                message: rows.get(rec, "message").to_string(),
                objective: f("objective")?,
                mmf_rate: f("mmf_rate")?,
                crb: f("crb")?,
                converged: b("converged")?,
                feasible: b("feasible")?,
                min_slack: f("min_slack")?,
                outer_iterations: n("outer_iterations")?,
                middle_iterations: n("middle_iterations")?,
                inner_iterations: n("inner_iterations")?,
                inner_cap_hits: n("inner_cap_hits")?,
                setup_s: f("setup_s")?,
                inner_s: f("inner_s")?,
                total_s: f("total_s")?,
                inner_iter_s: f("inner_iter_s")?,
            })
        })
        .collect()
}

/// CSV text with every [`TIMING_COLUMNS`] column removed.
pub fn strip_timing(text: &str) -> Result<String> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_reader(text.as_bytes());
    let mut out = csv::Writer::from_writer(Vec::new());
    let mut keep: Option<Vec<bool>> = None;
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
        let mask = keep.get_or_insert_with(|| rec.iter().map(|h| !TIMING_COLUMNS.contains(&h)).collect());
        let fields: Vec<&str> = rec.iter().zip(mask.iter()).filter(|(_, k)| **k).map(|(f, _)| f).collect();
        out.write_record(&fields).map_err(|e| Error::Parse(e.to_string()))?;
    }
    let bytes = out.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(num(1.0 / 3.0), "3.33333333333e-1");
        assert_eq!(num(-1234.5), "-1.23450000000e3");
        assert_eq!(num(f64::NAN), "nan");
        assert_eq!("3.33333333333e-1".parse::<f64>().unwrap(), 0.333333333333);
    }

    #[test]
    fn seed_file_name() {
        assert_eq!(seed_path(Path::new("out/summary.csv")), PathBuf::from("out/summary_seeds.csv"));
    }

    #[test]
    fn timing_columns_are_dropped() {
        let text = "a,total_s,b\n1,2,3\n";
        assert_eq!(strip_timing(text).unwrap(), "a,b\n1,3\n");
    }
}
