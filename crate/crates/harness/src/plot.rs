//! SVG line charts of metrics files.
//!
//! Each chart overlays every run; runs get distinct colours and series within
//! a chart get distinct dash patterns. One `<polyline>` is drawn per
//! (run, series) with at least one point; empty cells are skipped. The
//! y-range always contains every plotted point.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{HarnessError, Result};
use crate::metrics::{read_metrics, MetricsRow};

pub const WIDTH: f64 = 720.0;
pub const HEIGHT: f64 = 440.0;
/// Plot area in pixels: left, top, right, bottom.
pub const PLOT_AREA: (f64, f64, f64, f64) = (70.0, 40.0, 540.0, 390.0);

const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];
const DASHES: [&str; 3] = ["", "6,4", "2,3"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scale {
    Raw,
    /// Each run's series divided by its own maximum absolute value.
    MaxNormalized,
}

struct ChartSpec {
    file: &'static str,
    title: &'static str,
    y_label: &'static str,
    series: &'static [(&'static str, &'static str)],
    scale: Scale,
    /// Range that is always shown (widened to fit the data).
    base_range: Option<(f64, f64)>,
}

const CHARTS: [ChartSpec; 4] = [
    ChartSpec {
        file: "accuracy.svg",
        title: "Accuracy",
        y_label: "accuracy",
        series: &[("train_acc", "train"), ("test_acc", "test")],
        scale: Scale::Raw,
        base_range: Some((0.0, 1.0)),
    },
    ChartSpec {
        file: "energy.svg",
        title: "Dirichlet energy",
        y_label: "energy",
        series: &[("dirichlet_energy", "energy")],
        scale: Scale::Raw,
        base_range: None,
    },
    ChartSpec {
        file: "energy_normalized.svg",
        title: "Dirichlet energy (normalized to max)",
        y_label: "energy / max",
        series: &[("dirichlet_energy", "energy")],
        scale: Scale::MaxNormalized,
        base_range: Some((0.0, 1.0)),
    },
    ChartSpec {
        file: "clean_vs_noisy.svg",
        title: "Clean vs noisy training samples",
        y_label: "accuracy",
        series: &[
            ("clean_train_acc", "clean"),
            ("noisy_acc_vs_assigned", "noisy vs assigned"),
            ("noisy_acc_vs_true", "noisy vs true"),
        ],
        scale: Scale::Raw,
        base_range: Some((0.0, 1.0)),
    },
];

/// Metrics of one run, labelled for the legend.
#[derive(Debug, Clone)]
pub struct RunSeries {
    pub label: String,
    pub rows: Vec<MetricsRow>,
}

impl RunSeries {
    /// Loads `<dir>/metrics.csv`; the legend label is the directory name.
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("metrics.csv");
        if !path.is_file() {
            return Err(HarnessError::Data(format!("{} not found", path.display())));
        }
        let (rows, skipped) = read_metrics(&path)?;
        if skipped > 0 {
            log::warn!("{}: skipped {skipped} malformed rows", path.display());
        }
        let label = dir
            .file_name()
            .map_or_else(|| dir.display().to_string(), |n| n.to_string_lossy().into_owned());
        Ok(Self { label, rows })
    }

    fn points(&self, column: &str, scale: Scale) -> Vec<(f64, f64)> {
        let raw: Vec<(f64, f64)> = self
            .rows
            .iter()
            .filter_map(|r| Some((r.get("epoch")?, r.get(column)?)))
            .collect();
        match scale {
            Scale::Raw => raw,
            Scale::MaxNormalized => {
                let max = raw.iter().map(|p| p.1.abs()).fold(0.0, f64::max);
                let div = if max > 0.0 { max } else { 1.0 };
                raw.into_iter().map(|(x, y)| (x, y / div)).collect()
            }
        }
    }
}

fn extent(values: impl Iterator<Item = f64>, base: Option<(f64, f64)>) -> (f64, f64) {
    let (mut lo, mut hi) = base.unwrap_or((f64::INFINITY, f64::NEG_INFINITY));
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo <= f64::EPSILON * hi.abs().max(1.0) {
        let pad = 0.5 * lo.abs().max(1.0);
        return (lo - pad, hi + pad);
    }
    (lo, hi)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn tick_label(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.2e}")
    } else {
        format!("{}", (v * 1000.0).round() / 1000.0)
    }
}

fn render(spec: &ChartSpec, runs: &[RunSeries]) -> String {
    let (left, top, right, bottom) = PLOT_AREA;
    let lines: Vec<(usize, usize, Vec<(f64, f64)>)> = runs
        .iter()
        .enumerate()
        .flat_map(|(ri, run)| {
            spec.series
                .iter()
                .enumerate()
                .map(move |(si, (col, _))| (ri, si, run.points(col, spec.scale)))
        })
        .filter(|(_, _, pts)| !pts.is_empty())
        .collect();
    let all = || lines.iter().flat_map(|(_, _, p)| p.iter());
    let (x0, x1) = extent(all().map(|p| p.0), None);
    let (y0, y1) = extent(all().map(|p| p.1), spec.base_range);
    let px = |x: f64| left + (x - x0) / (x1 - x0) * (right - left);
    let py = |y: f64| bottom - (y - y0) / (y1 - y0) * (bottom - top);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        (left + right) / 2.0,
        escape(spec.title)
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let (gx, gy) = (px(xv), py(yv));
        let _ = writeln!(
            s,
            r##"<line x1="{left}" y1="{gy:.2}" x2="{right}" y2="{gy:.2}" stroke="#e0e0e0"/><text x="{}" y="{:.2}" text-anchor="end">{}</text>"##,
            left - 6.0,
            gy + 4.0,
            tick_label(yv)
        );
        let _ = writeln!(
            s,
            r#"<text x="{gx:.2}" y="{}" text-anchor="middle">{}</text>"#,
            bottom + 18.0,
            tick_label(xv)
        );
    }
    let _ = writeln!(
        s,
        r#"<rect x="{left}" y="{top}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        right - left,
        bottom - top
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">epoch</text>"#,
        (left + right) / 2.0,
        bottom + 38.0
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{0}" text-anchor="middle" transform="rotate(-90 18 {0})">{1}</text>"#,
        (top + bottom) / 2.0,
        escape(spec.y_label)
    );
    for (ri, si, pts) in &lines {
        let coords: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        let dash = DASHES[si % DASHES.len()];
        let dash_attr = if dash.is_empty() {
            String::new()
        } else {
            format!(r#" stroke-dasharray="{dash}""#)
        };
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{}" stroke-width="1.5"{dash_attr} points="{}"/>"#,
            COLORS[ri % COLORS.len()],
            coords.join(" ")
        );
    }
    let mut ly = top + 6.0;
    for (ri, run) in runs.iter().enumerate() {
        for (si, (_, series_name)) in spec.series.iter().enumerate() {
            let label = if spec.series.len() == 1 {
                run.label.clone()
            } else {
                format!("{} {series_name}", run.label)
            };
            let dash = DASHES[si % DASHES.len()];
            let _ = writeln!(
                s,
                r#"<line class="legend" x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{}" stroke-width="1.5" stroke-dasharray="{}"/><text x="{}" y="{}">{}</text>"#,
                right + 12.0,
                right + 36.0,
                COLORS[ri % COLORS.len()],
                if dash.is_empty() { "none" } else { dash },
                right + 42.0,
                ly + 4.0,
                escape(&label)
            );
            ly += 16.0;
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Writes every chart for the given runs into `out_dir`, returning the paths.
pub fn plot_runs(runs: &[RunSeries], out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(HarnessError::io("creating", out_dir))?;
    CHARTS
        .iter()
        .map(|spec| {
            let path = out_dir.join(spec.file);
            std::fs::write(&path, render(spec, runs)).map_err(HarnessError::io("writing", &path))?;
            Ok(path)
        })
        .collect()
}

/// Loads each run directory and plots them together into `out_dir`.
pub fn plot(run_dirs: &[PathBuf], out_dir: &Path) -> Result<Vec<PathBuf>> {
    if run_dirs.is_empty() {
        return Err(HarnessError::Config("plot needs at least one run directory".into()));
    }
    let runs = run_dirs.iter().map(|d| RunSeries::load(d)).collect::<Result<Vec<_>>>()?;
    plot_runs(&runs, out_dir)
}
