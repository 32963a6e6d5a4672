//! Result export: deterministic CSV tables and simple SVG line plots.
//!
//! Floating-point cells use Rust's shortest round-trip formatting, so two
//! runs that compute identical numbers write byte-identical files. Infinite
//! quantiles and thresholds are written as the literal `inf`.

use std::path::Path;

use crate::diagnostics::{CalibrationCurve, CoverageCurve, CumulativeDistribution, ThresholdDecision};
use crate::error::{Result, TriageError};
use crate::pipeline::{DepthRow, LabelRow};
use crate::ranking::QueryUnit;
use crate::simulate::SweepResult;

fn fmt_float(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        v.to_string()
    }
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path)
        .map_err(|e| TriageError::io(path.display().to_string(), e.into()))
}

fn write_row<W: std::io::Write>(
    w: &mut csv::Writer<W>,
    path: &Path,
    row: &[String],
) -> Result<()> {
    w.write_record(row)
        .map_err(|e| TriageError::io(path.display().to_string(), e.into()))
}

fn finish<W: std::io::Write>(mut w: csv::Writer<W>, path: &Path) -> Result<()> {
    w.flush()
        .map_err(|e| TriageError::io(path.display().to_string(), e))
}

/// Ranked query units with their 1-based rank.
pub fn write_ranking_csv(path: &Path, units: &[QueryUnit]) -> Result<()> {
    let mut w = writer(path)?;
    write_row(
        &mut w,
        path,
        &["profile_id", "horizon_index", "task", "strategy", "uncertainty", "rank"]
            .map(String::from),
    )?;
    for (i, u) in units.iter().enumerate() {
        write_row(
            &mut w,
            path,
            &[
                u.unit.profile_id.clone(),
                u.unit.horizon_index.to_string(),
                u.task.to_string(),
                u.strategy.to_string(),
                fmt_float(u.uncertainty),
                (i + 1).to_string(),
            ],
        )?;
    }
    finish(w, path)
}

/// Budget-sweep cells.
pub fn write_sweep_csv(path: &Path, result: &SweepResult) -> Result<()> {
    let mut w = writer(path)?;
    write_row(
        &mut w,
        path,
        &["task", "strategy", "budget", "metric", "mean", "std", "replications"]
            .map(String::from),
    )?;
    for c in &result.cells {
        write_row(
            &mut w,
            path,
            &[
                c.task.to_string(),
                c.strategy.to_string(),
                c.budget.to_string(),
                c.metric.to_string(),
                fmt_float(c.mean),
                fmt_float(c.std),
                c.replications.to_string(),
            ],
        )?;
    }
    finish(w, path)
}

/// Per-slot depth intervals.
pub fn write_depth_predictions_csv(path: &Path, rows: &[DepthRow]) -> Result<()> {
    let mut w = writer(path)?;
    write_row(
        &mut w,
        path,
        &[
            "profile_id", "horizon_index", "padding", "pred_depth", "residual", "lo", "hi",
            "width", "true_depth", "covered",
        ]
        .map(String::from),
    )?;
    for r in rows {
        write_row(
            &mut w,
            path,
            &[
                r.profile_id.clone(),
                r.horizon_index.to_string(),
                r.padding.to_string(),
                fmt_float(r.pred_depth),
                fmt_float(r.residual),
                fmt_float(r.interval.lo),
                fmt_float(r.interval.hi),
                fmt_float(r.interval.width()),
                fmt_float(r.true_depth),
                r.covered.to_string(),
            ],
        )?;
    }
    finish(w, path)
}

/// Per-layer label sets; members are `|`-joined 1-based labels.
pub fn write_label_predictions_csv(path: &Path, rows: &[LabelRow]) -> Result<()> {
    let mut w = writer(path)?;
    write_row(
        &mut w,
        path,
        &[
            "profile_id", "horizon_index", "pred_label", "confidence", "entropy", "set_size",
            "set_members", "true_label", "covered",
        ]
        .map(String::from),
    )?;
    for r in rows {
        let members = r
            .set
            .members
            .iter()
            .map(|m| m.to_string())
            .collect::<Vec<_>>()
            .join("|");
        write_row(
            &mut w,
            path,
            &[
                r.profile_id.clone(),
                r.horizon_index.to_string(),
                r.pred_label.to_string(),
                fmt_float(r.confidence),
                fmt_float(r.entropy),
                r.set.size().to_string(),
                members,
                r.true_label.to_string(),
                r.covered.to_string(),
            ],
        )?;
    }
    finish(w, path)
}

/// Reliability-diagram bins.
pub fn write_reliability_csv(path: &Path, curve: &CalibrationCurve) -> Result<()> {
    let mut w = writer(path)?;
    write_row(
        &mut w,
        path,
        &["bin_lo", "bin_hi", "mean_confidence", "accuracy", "count"].map(String::from),
    )?;
    for b in &curve.bins {
        write_row(
            &mut w,
            path,
            &[
                fmt_float(b.lo),
                fmt_float(b.hi),
                if b.count == 0 { String::new() } else { fmt_float(b.mean_confidence) },
                if b.count == 0 { String::new() } else { fmt_float(b.accuracy) },
                b.count.to_string(),
            ],
        )?;
    }
    finish(w, path)
}

/// Coverage-curve levels.
pub fn write_coverage_csv(path: &Path, curve: &CoverageCurve) -> Result<()> {
    let mut w = writer(path)?;
    write_row(&mut w, path, &["target", "quantile", "empirical"].map(String::from))?;
    for level in &curve.levels {
        write_row(
            &mut w,
            path,
            &[
                fmt_float(level.target),
                fmt_float(level.quantile),
                fmt_float(level.empirical),
            ],
        )?;
    }
    finish(w, path)
}

/// Calibration/test CDF points in one long table.
pub fn write_cdf_csv(path: &Path, dist: &CumulativeDistribution) -> Result<()> {
    let mut w = writer(path)?;
    write_row(&mut w, path, &["split", "value", "cumulative"].map(String::from))?;
    for (split, cdf) in [("calib", &dist.calib), ("test", &dist.test)] {
        for p in &cdf.points {
            write_row(
                &mut w,
                path,
                &[split.to_string(), fmt_float(p.value), fmt_float(p.cumulative)],
            )?;
        }
    }
    finish(w, path)
}

/// Inferred deferral thresholds, one row per (uncertainty kind, budget).
pub fn write_thresholds_csv(
    path: &Path,
    rows: &[(String, f64, ThresholdDecision)],
) -> Result<()> {
    let mut w = writer(path)?;
    write_row(
        &mut w,
        path,
        &["uncertainty", "budget", "threshold", "realized_fraction", "deferred", "total"]
            .map(String::from),
    )?;
    for (kind, budget, d) in rows {
        write_row(
            &mut w,
            path,
            &[
                kind.clone(),
                fmt_float(*budget),
                fmt_float(d.threshold),
                fmt_float(d.realized_fraction),
                d.deferred.to_string(),
                d.total.to_string(),
            ],
        )?;
    }
    finish(w, path)
}

/// Flat name/value summary table.
pub fn write_summary_csv(path: &Path, entries: &[(String, f64)]) -> Result<()> {
    let mut w = writer(path)?;
    write_row(&mut w, path, &["metric", "value"].map(String::from))?;
    for (name, value) in entries {
        write_row(&mut w, path, &[name.clone(), fmt_float(*value)])?;
    }
    finish(w, path)
}

// ───────────────────────── SVG plots ─────────────────────────

/// One plotted series.
#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

/// A minimal self-contained line plot.
#[derive(Debug, Clone)]
pub struct LinePlot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    /// Draw the y = x reference (calibration-style plots).
    pub diagonal: bool,
}

const PLOT_W: f64 = 640.0;
const PLOT_H: f64 = 440.0;
const MARGIN_L: f64 = 64.0;
const MARGIN_R: f64 = 24.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 48.0;
const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

fn fmt_tick(v: f64) -> String {
    let rounded = (v * 1000.0).round() / 1000.0;
    rounded.to_string()
}

impl LinePlot {
    pub fn render(&self) -> String {
        let mut xs: Vec<f64> = Vec::new();
        let mut ys: Vec<f64> = Vec::new();
        for s in &self.series {
            for &(x, y) in &s.points {
                xs.push(x);
                ys.push(y);
            }
        }
        let (mut x_min, mut x_max) = bounds(&xs);
        let (mut y_min, mut y_max) = bounds(&ys);
        if self.diagonal {
            x_min = x_min.min(y_min);
            y_min = x_min;
            x_max = x_max.max(y_max);
            y_max = x_max;
        }
        let map_x =
            |x: f64| MARGIN_L + (x - x_min) / (x_max - x_min) * (PLOT_W - MARGIN_L - MARGIN_R);
        let map_y =
            |y: f64| PLOT_H - MARGIN_B - (y - y_min) / (y_max - y_min) * (PLOT_H - MARGIN_T - MARGIN_B);

        let mut svg = String::new();
        svg.push_str(&format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{PLOT_W}\" height=\"{PLOT_H}\" \
             viewBox=\"0 0 {PLOT_W} {PLOT_H}\" font-family=\"sans-serif\" font-size=\"12\">\n"
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
            PLOT_W / 2.0,
            escape(&self.title)
        ));
        // Axes.
        svg.push_str(&format!(
            "<line x1=\"{MARGIN_L}\" y1=\"{0}\" x2=\"{1}\" y2=\"{0}\" stroke=\"black\"/>\n",
            PLOT_H - MARGIN_B,
            PLOT_W - MARGIN_R
        ));
        svg.push_str(&format!(
            "<line x1=\"{MARGIN_L}\" y1=\"{MARGIN_T}\" x2=\"{MARGIN_L}\" y2=\"{}\" stroke=\"black\"/>\n",
            PLOT_H - MARGIN_B
        ));
        // Ticks and labels.
        for i in 0..=4 {
            let fx = x_min + (x_max - x_min) * i as f64 / 4.0;
            let px = map_x(fx);
            svg.push_str(&format!(
                "<line x1=\"{px}\" y1=\"{0}\" x2=\"{px}\" y2=\"{1}\" stroke=\"black\"/>\n\
                 <text x=\"{px}\" y=\"{2}\" text-anchor=\"middle\">{3}</text>\n",
                PLOT_H - MARGIN_B,
                PLOT_H - MARGIN_B + 5.0,
                PLOT_H - MARGIN_B + 18.0,
                fmt_tick(fx)
            ));
            let fy = y_min + (y_max - y_min) * i as f64 / 4.0;
            let py = map_y(fy);
            svg.push_str(&format!(
                "<line x1=\"{0}\" y1=\"{py}\" x2=\"{MARGIN_L}\" y2=\"{py}\" stroke=\"black\"/>\n\
                 <text x=\"{1}\" y=\"{2}\" text-anchor=\"end\">{3}</text>\n",
                MARGIN_L - 5.0,
                MARGIN_L - 8.0,
                py + 4.0,
                fmt_tick(fy)
            ));
        }
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
            (MARGIN_L + PLOT_W - MARGIN_R) / 2.0,
            PLOT_H - 8.0,
            escape(&self.x_label)
        ));
        svg.push_str(&format!(
            "<text x=\"16\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {0})\">{1}</text>\n",
            (MARGIN_T + PLOT_H - MARGIN_B) / 2.0,
            escape(&self.y_label)
        ));
        if self.diagonal {
            svg.push_str(&format!(
                "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#999999\" stroke-dasharray=\"4 3\"/>\n",
                map_x(x_min),
                map_y(x_min),
                map_x(x_max),
                map_y(x_max)
            ));
        }
        for (i, s) in self.series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let path: Vec<String> = s
                .points
                .iter()
                .map(|&(x, y)| format!("{},{}", map_x(x), map_y(y)))
                .collect();
            svg.push_str(&format!(
                "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
                path.join(" ")
            ));
            let legend_y = MARGIN_T + 14.0 * i as f64;
            svg.push_str(&format!(
                "<line x1=\"{0}\" y1=\"{legend_y}\" x2=\"{1}\" y2=\"{legend_y}\" stroke=\"{color}\" stroke-width=\"2\"/>\n\
                 <text x=\"{2}\" y=\"{3}\">{4}</text>\n",
                PLOT_W - MARGIN_R - 150.0,
                PLOT_W - MARGIN_R - 130.0,
                PLOT_W - MARGIN_R - 124.0,
                legend_y + 4.0,
                escape(&s.label)
            ));
        }
        svg.push_str("</svg>\n");
        svg
    }
}

fn bounds(values: &[f64]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in values {
        if v.is_finite() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if lo == hi {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = (hi - lo) * 0.05;
    (lo - pad, hi + pad)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Renders and writes one plot.
pub fn write_svg(path: &Path, plot: &LinePlot) -> Result<()> {
    std::fs::write(path, plot.render()).map_err(|e| TriageError::io(path.display().to_string(), e))
}
