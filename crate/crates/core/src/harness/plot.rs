//! Self-contained SVG line plots with standard-error bars.

use std::fmt::Write as _;
use std::path::Path;

use super::sweep::{AggregateRow, Axis};
use crate::error::{Error, Result};
use crate::rsma::Mode;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    Objective,
    /// MMF rate on the left axis, CRB on the right.
    RateAndCrb,
    Time,
}

impl PlotKind {
    pub const ALL: [PlotKind; 3] = [PlotKind::Objective, PlotKind::RateAndCrb, PlotKind::Time];

    pub fn as_str(self) -> &'static str {
        match self {
            PlotKind::Objective => "objective",
            PlotKind::RateAndCrb => "rate_and_crb",
            PlotKind::Time => "time",
        }
    }
}

impl std::str::FromStr for PlotKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        PlotKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Parse(format!("unknown plot kind '{s}' (objective, rate_and_crb, time)")))
    }
}

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 90.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

struct Series {
    mode: Mode,
    metric: &'static str,
    points: Vec<(f64, f64, f64)>,
    right: bool,
}

fn color(mode: Mode) -> &'static str {
    match mode {
        Mode::Rsma => "#1f5fa8",
        Mode::Sdma => "#c0392b",
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[derive(Clone, Copy)]
struct Range {
    lo: f64,
    hi: f64,
}

impl Range {
    fn covering(vals: impl Iterator<Item = f64>, pad: f64) -> Range {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in vals.filter(|v| v.is_finite()) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            return Range { lo: 0.0, hi: 1.0 };
        }
        let span = hi - lo;
        let pad = if span > 0.0 { pad * span } else { 0.1 * lo.abs().max(1e-12) };
        Range { lo: lo - pad, hi: hi + pad }
    }

    fn ticks(&self) -> Vec<f64> {
        let raw = (self.hi - self.lo) / 5.0;
        let mag = 10f64.powf(raw.log10().floor());
        let step = [1.0, 2.0, 2.5, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
        let mut t = (self.lo / step).ceil() * step;
        let mut out = Vec::new();
        while t <= self.hi + 1e-9 * step {
            out.push(if t.abs() < 1e-12 * step { 0.0 } else { t });
            t += step;
        }
        out
    }
}

fn fmt_tick(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 {
        "0".into()
    } else if !(1e-2..1e4).contains(&a) {
        format!("{v:.2e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn series_for(rows: &[AggregateRow], metric: &'static str, right: bool, pick: fn(&AggregateRow) -> (f64, f64)) -> Vec<Series> {
    let mut modes: Vec<Mode> = Vec::new();
    for r in rows {
        if !modes.contains(&r.mode) {
            modes.push(r.mode);
        }
    }
    modes
        .into_iter()
        .map(|mode| {
            let mut points: Vec<(f64, f64, f64)> = rows
                .iter()
                .filter(|r| r.mode == mode)
                .map(|r| {
                    let (m, se) = pick(r);
                    (r.axis.display_value(r.value), m, se)
                })
                .filter(|p| p.1.is_finite())
                .collect();
            points.sort_by(|a, b| a.0.total_cmp(&b.0));
            Series { mode, metric, points, right }
        })
        .collect()
}

/// Render `rows` (one sweep) as an SVG plot of `kind` at `path`.
pub fn emit_plot(rows: &[AggregateRow], kind: PlotKind, path: &Path) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::InvalidSweep("no aggregate rows to plot".into()));
    }
    let axis: Axis = rows[0].axis;
    let (series, left_label, right_label) = match kind {
        PlotKind::Objective => {
            (series_for(rows, "objective", false, |r| (r.objective_mean, r.objective_se)), "objective (nats)", None)
        }
        PlotKind::RateAndCrb => {
            let mut s = series_for(rows, "mmf_rate", false, |r| (r.mmf_rate_mean, r.mmf_rate_se));
            s.extend(series_for(rows, "crb", true, |r| (r.crb_mean, r.crb_se)));
            (s, "MMF rate (bit/s/Hz)", Some("CRB trace (rad², unitless)"))
        }
        PlotKind::Time => (series_for(rows, "total_s", false, |r| (r.total_s_mean, r.total_s_se)), "wall-clock per run (s)", None),
    };
    let svg = render(axis, kind, &series, left_label, right_label);
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, svg).map_err(|e| Error::io(path, e))
}

fn render(axis: Axis, kind: PlotKind, series: &[Series], left_label: &str, right_label: Option<&str>) -> String {
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let xr = Range::covering(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)), 0.05);
    let yr = |right: bool| {
        Range::covering(
            series
                .iter()
                .filter(|s| s.right == right)
                .flat_map(|s| s.points.iter().flat_map(|p| [p.1 - p.2, p.1 + p.2])),
            0.08,
        )
    };
    let (yl, yrr) = (yr(false), yr(true));
    let sx = |x: f64| LEFT + (x - xr.lo) / (xr.hi - xr.lo) * pw;
    let sy = |y: f64, r: Range| TOP + ph - (y - r.lo) / (r.hi - r.lo) * ph;

    let mut o = String::new();
    let _ = writeln!(o, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(o, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(o, r#"<title>{} vs {}</title>"#, kind.as_str(), axis.as_str());
    let _ = writeln!(o, r##"<rect x="0" y="0" width="{W}" height="{H}" fill="#ffffff"/>"##);
    let _ = writeln!(o, r##"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="#333333"/>"##);

    let _ = writeln!(o, r#"<g class="axis x">"#);
    for t in xr.ticks() {
        let x = sx(t);
        let _ = writeln!(o, r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="#333333"/>"##, TOP + ph, TOP + ph + 5.0);
        let _ = writeln!(o, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, TOP + ph + 18.0, fmt_tick(t));
    }
    let _ = writeln!(o, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, H - 15.0, escape(axis.label()));
    let _ = writeln!(o, "</g>");

    let mut y_axis = |r: Range, right: bool, label: &str| {
        let (edge, dir, anchor) = if right { (LEFT + pw, 1.0, "start") } else { (LEFT, -1.0, "end") };
        let _ = writeln!(o, r#"<g class="axis {}">"#, if right { "y-right" } else { "y-left" });
        for t in r.ticks() {
            let y = sy(t, r);
            let _ = writeln!(o, r##"<line x1="{edge:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#333333"/>"##, edge + 5.0 * dir);
            let _ = writeln!(o, r#"<text x="{:.2}" y="{:.2}" text-anchor="{anchor}">{}</text>"#, edge + 8.0 * dir, y + 4.0, fmt_tick(t));
        }
        let lx = if right { W - 12.0 } else { 16.0 };
        let ly = TOP + ph / 2.0;
        let _ = writeln!(o, r#"<text x="{lx:.2}" y="{ly:.2}" text-anchor="middle" transform="rotate(-90 {lx:.2} {ly:.2})">{}</text>"#, escape(label));
        let _ = writeln!(o, "</g>");
    };
    y_axis(yl, false, left_label);
    if let Some(label) = right_label {
        y_axis(yrr, true, label);
    }

    for (i, s) in series.iter().enumerate() {
        let r = if s.right { yrr } else { yl };
        let c = color(s.mode);
        let dash = if s.right { r#" stroke-dasharray="6 4""# } else { "" };
        let _ = writeln!(o, r#"<g class="series" data-mode="{}" data-metric="{}" data-axis="{}">"#, s.mode, s.metric, if s.right { "right" } else { "left" });
        let pts: Vec<String> = s.points.iter().map(|p| format!("{:.2},{:.2}", sx(p.0), sy(p.1, r))).collect();
        let _ = writeln!(o, r#"<polyline points="{}" fill="none" stroke="{c}" stroke-width="1.8"{dash}/>"#, pts.join(" "));
        for &(x, m, se) in &s.points {
            let (px, lo, hi) = (sx(x), sy(m - se, r), sy(m + se, r));
            let _ = writeln!(o, r#"<line class="errorbar" x1="{px:.2}" y1="{lo:.2}" x2="{px:.2}" y2="{hi:.2}" stroke="{c}"/>"#);
            let _ = writeln!(o, r#"<line x1="{:.2}" y1="{lo:.2}" x2="{:.2}" y2="{lo:.2}" stroke="{c}"/>"#, px - 4.0, px + 4.0);
            let _ = writeln!(o, r#"<line x1="{:.2}" y1="{hi:.2}" x2="{:.2}" y2="{hi:.2}" stroke="{c}"/>"#, px - 4.0, px + 4.0);
            if s.right {
                let _ = writeln!(o, r##"<rect class="marker" x="{:.2}" y="{:.2}" width="7" height="7" fill="#ffffff" stroke="{c}"/>"##, px - 3.5, sy(m, r) - 3.5);
            } else {
                let _ = writeln!(o, r#"<circle class="marker" cx="{px:.2}" cy="{:.2}" r="3.5" fill="{c}"/>"#, sy(m, r));
            }
        }
        let ly = TOP + 14.0 + 16.0 * i as f64;
        let lx = LEFT + 10.0;
        let _ = writeln!(o, r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{c}" stroke-width="1.8"{dash}/>"#, lx + 22.0);
        let _ = writeln!(o, r#"<text x="{:.2}" y="{:.2}">{} {}</text>"#, lx + 28.0, ly + 4.0, s.mode.as_str().to_uppercase(), s.metric);
        let _ = writeln!(o, "</g>");
    }
    o.push_str("</svg>\n");
    o
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nice_ticks_cover_the_range() {
        let t = Range { lo: 0.13, hi: 0.97 }.ticks();
        assert_eq!(t.first().copied(), Some(0.2));
        assert!(t.len() >= 4 && t.len() <= 6);
        assert!(t.iter().all(|v| (0.13..=0.97).contains(v)));
    }

    #[test]
    fn kinds_round_trip() {
        for k in PlotKind::ALL {
            assert_eq!(k.as_str().parse::<PlotKind>().unwrap(), k);
        }
    }
}
