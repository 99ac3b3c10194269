//! Line-plot emission as plain SVG text: three metrics × two predictor
//! modes, one polyline per algorithm, each plot min-max scaled to [0,1].
//! Output is deterministic byte-for-byte for a fixed record list, with the
//! plotted values embedded as a comment so the file doubles as a data table.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::features::Variate;
use crate::metrics::MetricRecord;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 160.0;
const MARGIN_TOP: f64 = 50.0;
const MARGIN_BOTTOM: f64 = 60.0;

/// Canonical drawing and legend order; unknown names sort after these.
const ALGORITHM_ORDER: [&str; 5] = ["random", "cmaes", "bayes", "pso", "ngopt"];

fn palette(algorithm: &str) -> &'static str {
    match algorithm {
        "random" => "#d62728",
        "cmaes" => "#1f77b4",
        "bayes" => "#2ca02c",
        "pso" => "#ff7f0e",
        "ngopt" => "#9467bd",
        _ => "#7f7f7f",
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotMetric {
    Mape,
    R2,
    Runtime,
}

impl PlotMetric {
    pub const ALL: [PlotMetric; 3] = [PlotMetric::Mape, PlotMetric::R2, PlotMetric::Runtime];

    pub fn as_str(&self) -> &'static str {
        match self {
            PlotMetric::Mape => "mape",
            PlotMetric::R2 => "r2",
            PlotMetric::Runtime => "runtime",
        }
    }

    pub fn extract(&self, record: &MetricRecord) -> f64 {
        match self {
            PlotMetric::Mape => record.mape,
            PlotMetric::R2 => record.r2,
            PlotMetric::Runtime => record.runtime_seconds,
        }
    }
}

pub(crate) fn algorithm_rank(name: &str) -> (usize, &str) {
    match ALGORITHM_ORDER.iter().position(|&a| a == name) {
        Some(i) => (i, name),
        None => (ALGORITHM_ORDER.len(), name),
    }
}

/// One algorithm's polyline: `(size, mean metric over repeats)` per size.
struct Series {
    algorithm: String,
    points: Vec<(usize, f64)>,
}

fn collect_series(records: &[MetricRecord], variate: Variate, metric: PlotMetric) -> Vec<Series> {
    let mut algorithms: Vec<String> = records
        .iter()
        .filter(|r| r.variate == variate)
        .map(|r| r.algorithm.clone())
        .collect();
    algorithms.sort_by(|a, b| algorithm_rank(a).cmp(&algorithm_rank(b)));
    algorithms.dedup();

    algorithms
        .into_iter()
        .map(|algorithm| {
            let mut sizes: Vec<usize> = records
                .iter()
                .filter(|r| r.variate == variate && r.algorithm == algorithm)
                .map(|r| r.sample_size)
                .collect();
            sizes.sort_unstable();
            sizes.dedup();
            let points = sizes
                .into_iter()
                .map(|size| {
                    let values: Vec<f64> = records
                        .iter()
                        .filter(|r| {
                            r.variate == variate
                                && r.algorithm == algorithm
                                && r.sample_size == size
                        })
                        .map(|r| metric.extract(r))
                        .collect();
                    (size, values.iter().sum::<f64>() / values.len() as f64)
                })
                .collect();
            Series { algorithm, points }
        })
        .collect()
}

/// Renders one plot to SVG text.
pub fn render_plot(records: &[MetricRecord], variate: Variate, metric: PlotMetric) -> Result<String> {
    let series = collect_series(records, variate, metric);
    if series.is_empty() {
        return Err(Error::Plot(format!(
            "no records for {} in {variate} mode",
            metric.as_str()
        )));
    }

    let mut sizes: Vec<usize> =
        series.iter().flat_map(|s| s.points.iter().map(|p| p.0)).collect();
    sizes.sort_unstable();
    sizes.dedup();
    let (size_lo, size_hi) = (sizes[0] as f64, *sizes.last().unwrap() as f64);
    let size_span = if size_hi > size_lo { size_hi - size_lo } else { 1.0 };

    let mut value_lo = f64::INFINITY;
    let mut value_hi = f64::NEG_INFINITY;
    for s in &series {
        for &(_, v) in &s.points {
            value_lo = value_lo.min(v);
            value_hi = value_hi.max(v);
        }
    }
    // Degenerate spread: everything plots at scaled value 0.
    let value_span = value_hi - value_lo;
    let scale01 = |v: f64| if value_span > 0.0 { (v - value_lo) / value_span } else { 0.0 };

    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let x_px = |size: f64| MARGIN_LEFT + (size - size_lo) / size_span * plot_w;
    let y_px = |v01: f64| MARGIN_TOP + (1.0 - v01) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(svg, "<!-- data: algorithm,sample_size,{}", metric.as_str());
    for s in &series {
        for &(size, v) in &s.points {
            let _ = writeln!(svg, "{},{},{v}", s.algorithm, size);
        }
    }
    let _ = writeln!(svg, "-->");
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);

    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="30" font-family="sans-serif" font-size="18" text-anchor="middle">{} — {}</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        metric.as_str(),
        variate
    );

    // Axes.
    let x0 = MARGIN_LEFT;
    let y0 = MARGIN_TOP + plot_h;
    let _ = writeln!(
        svg,
        r#"<line x1="{x0:.2}" y1="{y0:.2}" x2="{:.2}" y2="{y0:.2}" stroke="black"/>"#,
        x0 + plot_w
    );
    let _ = writeln!(
        svg,
        r#"<line x1="{x0:.2}" y1="{:.2}" x2="{x0:.2}" y2="{y0:.2}" stroke="black"/>"#,
        MARGIN_TOP
    );

    for &size in &sizes {
        let x = x_px(size as f64);
        let _ = writeln!(svg, r#"<line x1="{x:.2}" y1="{y0:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#, y0 + 5.0);
        let _ = writeln!(
            svg,
            r#"<text x="{x:.2}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="middle">{size}</text>"#,
            y0 + 20.0
        );
    }
    for tick in 0..=4 {
        let v01 = tick as f64 / 4.0;
        let y = y_px(v01);
        let _ = writeln!(svg, r#"<line x1="{:.2}" y1="{y:.2}" x2="{x0:.2}" y2="{y:.2}" stroke="black"/>"#, x0 - 5.0);
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="end">{v01:.2}</text>"#,
            x0 - 9.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="13" text-anchor="middle">sample size</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 15.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="20" y="{:.2}" font-family="sans-serif" font-size="13" text-anchor="middle" transform="rotate(-90 20 {:.2})">{} (min-max scaled)</text>"#,
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0,
        metric.as_str()
    );

    // Polylines and markers.
    for s in &series {
        let color = palette(&s.algorithm);
        let mut path = String::new();
        for &(size, v) in &s.points {
            let _ = write!(path, "{:.2},{:.2} ", x_px(size as f64), y_px(scale01(v)));
        }
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            path.trim_end()
        );
        for &(size, v) in &s.points {
            let _ = writeln!(
                svg,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3.5" fill="{color}"/>"#,
                x_px(size as f64),
                y_px(scale01(v))
            );
        }
    }

    // Legend.
    let legend_x = MARGIN_LEFT + plot_w + 20.0;
    for (row, s) in series.iter().enumerate() {
        let y = MARGIN_TOP + 10.0 + row as f64 * 22.0;
        let color = palette(&s.algorithm);
        let _ = writeln!(
            svg,
            r#"<line x1="{legend_x:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{color}" stroke-width="3"/>"#,
            legend_x + 24.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="13">{}</text>"#,
            legend_x + 30.0,
            y + 4.0,
            s.algorithm
        );
    }

    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Writes one SVG per (metric, variate) pair present in the records and
/// returns the written paths in emission order.
pub fn emit_plots(records: &[MetricRecord], out_dir: &Path) -> Result<Vec<PathBuf>> {
    if records.is_empty() {
        return Err(Error::Plot("no records to plot".into()));
    }
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    for &variate in &Variate::ALL {
        if !records.iter().any(|r| r.variate == variate) {
            continue;
        }
        for &metric in &PlotMetric::ALL {
            let svg = render_plot(records, variate, metric)?;
            let path = out_dir.join(format!("{}_{}.svg", metric.as_str(), variate.as_str()));
            std::fs::write(&path, svg)?;
            written.push(path);
        }
    }
    Ok(written)
}
