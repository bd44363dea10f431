//! Result persistence: CSV tables, run manifests and SVG rate plots.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::scenario::{AppliedDefault, KeyRateReport, ScenarioConfig, SWEEP_AXES};

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w)
}

/// Column names in order.
pub fn csv_header() -> Vec<String> {
    let mut buf = Vec::new();
    {
        let mut w = csv_writer(&mut buf);
        w.serialize(KeyRateReport::from_inputs(&ScenarioConfig::default())).expect("in-memory write");
        w.flush().expect("in-memory flush");
    }
    let text = String::from_utf8(buf).expect("utf8");
    text.lines().next().unwrap_or_default().split(',').map(str::to_string).collect()
}

/// Writes `reports` as CSV; an empty list yields the header alone.
pub fn write_csv_to<W: Write>(out: W, reports: &[KeyRateReport]) -> Result<()> {
    let mut w = csv_writer(out);
    if reports.is_empty() {
        w.write_record(csv_header())?;
    }
    for r in reports {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `reports` to `path`.
pub fn write_csv(path: &Path, reports: &[KeyRateReport]) -> Result<()> {
    write_csv_to(File::create(path)?, reports)
}

/// Parses a CSV produced by [`write_csv`].
pub fn read_csv(path: &Path) -> Result<Vec<KeyRateReport>> {
    read_csv_from(File::open(path)?)
}

/// Parses CSV text from a reader.
pub fn read_csv_from<R: std::io::Read>(input: R) -> Result<Vec<KeyRateReport>> {
    let mut r = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for rec in r.deserialize() {
        out.push(rec?);
    }
    Ok(out)
}

/// Appends rows in completion order, flushing after each one.
pub struct IncrementalCsv {
    inner: Mutex<csv::Writer<File>>,
}

impl IncrementalCsv {
    /// Creates `path` and writes the header.
    pub fn create(path: &Path) -> Result<Self> {
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(File::create(path)?);
        w.write_record(csv_header())?;
        w.flush()?;
        Ok(Self { inner: Mutex::new(w) })
    }

    /// Appends one row.
    pub fn append(&self, report: &KeyRateReport) -> Result<()> {
        let mut w = self.inner.lock().unwrap_or_else(|e| e.into_inner());
        w.serialize(report)?;
        w.flush()?;
        Ok(())
    }
}

/// Run manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    /// Program name.
    pub tool: String,
    /// Crate version.
    pub version: String,
    /// Subcommand.
    pub command: String,
    /// Config path, if any.
    pub config_path: Option<String>,
    /// Resolved configuration after overrides.
    pub resolved_config: ScenarioConfig,
    /// Keys that took default values.
    pub defaults_applied: Vec<AppliedDefault>,
    /// Command-line overrides as `key=value`.
    pub overrides: Vec<String>,
    /// Worker threads.
    pub threads: usize,
    /// Files written, relative to the output directory.
    pub artifacts: Vec<String>,
    /// Number of evaluated points.
    pub points: usize,
    /// Points per status.
    pub status_counts: BTreeMap<String, usize>,
}

impl Manifest {
    /// Writes pretty JSON to `path`.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = File::create(path)?;
        serde_json::to_writer_pretty(&mut f, self)?;
        f.write_all(b"\n")?;
        Ok(())
    }
}

/// Numeric value of a sweep axis column.
pub fn axis_value(r: &KeyRateReport, axis: &str) -> Option<f64> {
    match axis {
        "n_total" => Some(r.n_total),
        "distance_km" => Some(r.distance_km),
        "r_test" => Some(r.r_test),
        "t_factor" => Some(r.t_factor),
        "alpha" => Some(r.alpha),
        "delta_r" => Some(r.delta_r),
        _ => None,
    }
}

/// Sweep axes that take more than one value in `reports`.
pub fn varying_axes(reports: &[KeyRateReport]) -> Vec<&'static str> {
    SWEEP_AXES
        .iter()
        .copied()
        .filter(|a| {
            let mut vals: Vec<f64> = reports.iter().filter_map(|r| axis_value(r, a)).collect();
            vals.sort_by(f64::total_cmp);
            vals.dedup();
            vals.len() > 1
        })
        .collect()
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// SVG of `key_rate` against `axis` with a log-scale y axis. Points with a
/// non-positive rate are omitted; one polyline per combination of the other axes.
pub fn render_svg(reports: &[KeyRateReport], axis: &str) -> String {
    let (w, h, ml, mr, mt, mb) = (720.0, 480.0, 80.0, 170.0, 30.0, 60.0);
    let log_x = axis == "n_total";
    let others: Vec<&str> = varying_axes(reports).into_iter().filter(|a| *a != axis).collect();
    let mut series: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for r in reports {
        let (Some(x), y) = (axis_value(r, axis), r.key_rate) else { continue };
        if !(y > 0.0) || !x.is_finite() || (log_x && x <= 0.0) {
            continue;
        }
        let label: Vec<String> = others.iter().map(|a| format!("{a}={}", axis_value(r, a).unwrap_or(f64::NAN))).collect();
        series.entry(label.join(", ")).or_default().push((if log_x { x.log10() } else { x }, y.log10()));
    }
    let pts: Vec<(f64, f64)> = series.values().flatten().copied().collect();
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n"
    ));
    svg.push_str(&format!("<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"));
    let (pw, ph) = (w - ml - mr, h - mt - mb);
    svg.push_str(&format!(
        "<rect x=\"{ml}\" y=\"{mt}\" width=\"{pw}\" height=\"{ph}\" fill=\"none\" stroke=\"black\"/>\n"
    ));
    let xlabel = if log_x { format!("log10 {axis}") } else { axis.to_string() };
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"14\">{xlabel}</text>\n",
        ml + pw / 2.0,
        h - 15.0
    ));
    svg.push_str(&format!(
        "<text x=\"20\" y=\"{}\" text-anchor=\"middle\" font-size=\"14\" transform=\"rotate(-90 20 {})\">key rate (bits/round, log scale)</text>\n",
        mt + ph / 2.0,
        mt + ph / 2.0
    ));
    if pts.is_empty() {
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">no positive rates</text>\n</svg>\n",
            ml + pw / 2.0,
            mt + ph / 2.0
        ));
        return svg;
    }
    let (mut x0, mut x1) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.0), b.max(p.0)));
    let y0 = pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min).floor();
    let mut y1 = pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max).ceil();
    if x1 <= x0 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| ml + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| mt + ph - (y - y0) / (y1 - y0) * ph;
    for d in (y0 as i64)..=(y1 as i64) {
        let y = sy(d as f64);
        svg.push_str(&format!(
            "<line x1=\"{ml}\" y1=\"{y:.2}\" x2=\"{}\" y2=\"{y:.2}\" stroke=\"#ddd\"/>\n<text x=\"{}\" y=\"{:.2}\" text-anchor=\"end\" font-size=\"12\">1e{d}</text>\n",
            ml + pw,
            ml - 6.0,
            y + 4.0
        ));
    }
    for k in 0..=4 {
        let x = x0 + (x1 - x0) * k as f64 / 4.0;
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{}\" text-anchor=\"middle\" font-size=\"12\">{}</text>\n",
            sx(x),
            mt + ph + 18.0,
            format_tick(x)
        ));
    }
    for (i, (label, mut s)) in series.into_iter().enumerate() {
        s.sort_by(|a, b| a.0.total_cmp(&b.0));
        let colour = PALETTE[i % PALETTE.len()];
        let path: Vec<String> = s.iter().map(|p| format!("{:.2},{:.2}", sx(p.0), sy(p.1))).collect();
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{colour}\" stroke-width=\"2\" points=\"{}\"/>\n",
            path.join(" ")
        ));
        for p in &s {
            svg.push_str(&format!("<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{colour}\"/>\n", sx(p.0), sy(p.1)));
        }
        let ly = mt + 16.0 * (i as f64 + 1.0);
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{ly:.2}\" font-size=\"12\" fill=\"{colour}\">{}</text>\n",
            ml + pw + 8.0,
            if label.is_empty() { "rate".to_string() } else { label }
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

fn format_tick(x: f64) -> String {
    let s = format!("{x:.3}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// Writes one plot per varying sweep axis (or a single `axis` when given) to
/// `dir/rate_vs_<axis>.svg` and returns the paths.
pub fn write_plots(dir: &Path, reports: &[KeyRateReport], axis: Option<&str>) -> Result<Vec<PathBuf>> {
    let axes: Vec<String> = match axis {
        Some(a) => vec![a.to_string()],
        None => varying_axes(reports).into_iter().map(str::to_string).collect(),
    };
    let mut out = Vec::new();
    for a in axes {
        let path = dir.join(format!("rate_vs_{a}.svg"));
        std::fs::write(&path, render_svg(reports, &a))?;
        out.push(path);
    }
    Ok(out)
}
