//! Minimal deterministic SVG charts with CSV sidecars.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PlotError {
    #[error("nothing to plot")]
    Empty,
    #[error("non-finite value in series {0}")]
    NonFinite(String),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad sidecar csv: {0}")]
    Sidecar(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    Line,
    Bar,
    /// Each series is one row; point `(x, v)` is the cell in column `x`.
    Heatmap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn new(name: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Self {
            name: name.into(),
            points,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotSpec {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub kind: PlotKind,
    pub series: Vec<Series>,
    /// Category labels for bar charts and heatmap columns, indexed by x.
    pub x_ticks: Vec<String>,
}

impl PlotSpec {
    pub fn new(kind: PlotKind, title: impl Into<String>, series: Vec<Series>) -> Self {
        Self {
            title: title.into(),
            x_label: String::new(),
            y_label: String::new(),
            kind,
            series,
            x_ticks: Vec::new(),
        }
    }

    pub fn labels(mut self, x: impl Into<String>, y: impl Into<String>) -> Self {
        self.x_label = x.into();
        self.y_label = y.into();
        self
    }

    pub fn ticks(mut self, ticks: Vec<String>) -> Self {
        self.x_ticks = ticks;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlotFiles {
    pub svg: PathBuf,
    pub csv: PathBuf,
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn validate(spec: &PlotSpec) -> Result<(), PlotError> {
    if spec.series.is_empty() || spec.series.iter().all(|s| s.points.is_empty()) {
        return Err(PlotError::Empty);
    }
    for s in &spec.series {
        if s.points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(PlotError::NonFinite(s.name.clone()));
        }
    }
    Ok(())
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

fn tick_label(spec: &PlotSpec, x: f64) -> String {
    let i = x.round();
    if (x - i).abs() < 1e-9 && i >= 0.0 {
        if let Some(t) = spec.x_ticks.get(i as usize) {
            return t.clone();
        }
    }
    format!("{x}")
}

/// Renders the chart as a standalone SVG 1.1 document.
pub fn render_svg(spec: &PlotSpec) -> Result<String, PlotError> {
    validate(spec)?;
    let mut svg = String::new();
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    writeln!(
        svg,
        r#"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">
<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>
<text x="{:.2}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        WIDTH / 2.0,
        escape(&spec.title)
    )
    .unwrap();

    match spec.kind {
        PlotKind::Line | PlotKind::Bar => {
            let all = spec.series.iter().flat_map(|s| s.points.iter());
            let (x_lo, x_hi) = bounds(all.clone().map(|p| p.0));
            let (mut y_lo, y_hi) = bounds(all.map(|p| p.1));
            if spec.kind == PlotKind::Bar {
                y_lo = y_lo.min(0.0);
            }
            let (x_lo, x_hi) = if spec.kind == PlotKind::Bar {
                (x_lo - 0.5, x_hi + 0.5)
            } else {
                (x_lo, x_hi)
            };
            let sx = |x: f64| LEFT + (x - x_lo) / (x_hi - x_lo) * plot_w;
            let sy = |y: f64| TOP + plot_h - (y - y_lo) / (y_hi - y_lo) * plot_h;

            writeln!(
                svg,
                r#"<line class="axis" x1="{LEFT}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black"/>
<line class="axis" x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{:.2}" stroke="black"/>"#,
                TOP + plot_h,
                LEFT + plot_w,
                TOP + plot_h,
                TOP + plot_h
            )
            .unwrap();
            for k in 0..=4 {
                let y = y_lo + (y_hi - y_lo) * k as f64 / 4.0;
                writeln!(
                    svg,
                    r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{:.3}</text>"#,
                    LEFT - 6.0,
                    sy(y) + 4.0,
                    y
                )
                .unwrap();
            }

            if spec.kind == PlotKind::Bar {
                let n_series = spec.series.len() as f64;
                let slot = plot_w / (x_hi - x_lo);
                let bar_w = slot * 0.8 / n_series;
                for (si, s) in spec.series.iter().enumerate() {
                    let color = PALETTE[si % PALETTE.len()];
                    for &(x, y) in &s.points {
                        let x0 = sx(x) - slot * 0.4 + bar_w * si as f64;
                        let (top, bottom) = (sy(y.max(0.0)), sy(y.min(0.0)));
                        writeln!(
                            svg,
                            r#"<rect class="bar" x="{x0:.2}" y="{top:.2}" width="{bar_w:.2}" height="{:.2}" fill="{color}"><title>{}: {y}</title></rect>"#,
                            bottom - top,
                            escape(&tick_label(spec, x))
                        )
                        .unwrap();
                    }
                }
                let xs: std::collections::BTreeSet<u64> = spec
                    .series
                    .iter()
                    .flat_map(|s| s.points.iter().map(|p| p.0.to_bits()))
                    .collect();
                for bits in xs {
                    let x = f64::from_bits(bits);
                    writeln!(
                        svg,
                        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                        sx(x),
                        TOP + plot_h + 16.0,
                        escape(&tick_label(spec, x))
                    )
                    .unwrap();
                }
            } else {
                for k in 0..=4 {
                    let x = x_lo + (x_hi - x_lo) * k as f64 / 4.0;
                    writeln!(
                        svg,
                        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{:.1}</text>"#,
                        sx(x),
                        TOP + plot_h + 16.0,
                        x
                    )
                    .unwrap();
                }
                for (si, s) in spec.series.iter().enumerate() {
                    let color = PALETTE[si % PALETTE.len()];
                    let coords: Vec<String> = s.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
                    writeln!(
                        svg,
                        r#"<polyline class="series" data-name="{}" fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
                        escape(&s.name),
                        coords.join(" ")
                    )
                    .unwrap();
                }
            }
            if spec.series.len() > 1 || spec.kind == PlotKind::Line {
                for (si, s) in spec.series.iter().enumerate() {
                    let y = TOP + 14.0 * si as f64;
                    writeln!(
                        svg,
                        r#"<rect x="{:.2}" y="{:.2}" width="10" height="10" fill="{}"/><text x="{:.2}" y="{:.2}">{}</text>"#,
                        LEFT + plot_w - 110.0,
                        y,
                        PALETTE[si % PALETTE.len()],
                        LEFT + plot_w - 95.0,
                        y + 9.0,
                        escape(&s.name)
                    )
                    .unwrap();
                }
            }
        }
        PlotKind::Heatmap => {
            let rows = spec.series.len();
            let cols = spec
                .series
                .iter()
                .flat_map(|s| s.points.iter().map(|p| p.0.max(0.0) as usize + 1))
                .max()
                .unwrap_or(1);
            let max = spec
                .series
                .iter()
                .flat_map(|s| s.points.iter().map(|p| p.1))
                .fold(0.0f64, f64::max);
            let cw = plot_w / cols as f64;
            let ch = plot_h / rows as f64;
            for (r, s) in spec.series.iter().enumerate() {
                writeln!(
                    svg,
                    r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
                    LEFT - 6.0,
                    TOP + ch * (r as f64 + 0.5) + 4.0,
                    escape(&s.name)
                )
                .unwrap();
                for &(x, v) in &s.points {
                    let t = if max > 0.0 { v / max } else { 0.0 };
                    let shade = |full: f64| (255.0 - t * (255.0 - full)).round() as u8;
                    let (cx, cy) = (LEFT + cw * x, TOP + ch * r as f64);
                    writeln!(
                        svg,
                        r##"<rect class="cell" x="{cx:.2}" y="{cy:.2}" width="{cw:.2}" height="{ch:.2}" fill="#{:02x}{:02x}{:02x}" stroke="white"/><text x="{:.2}" y="{:.2}" text-anchor="middle">{v}</text>"##,
                        shade(31.0),
                        shade(119.0),
                        shade(180.0),
                        cx + cw / 2.0,
                        cy + ch / 2.0 + 4.0
                    )
                    .unwrap();
                }
            }
            for c in 0..cols {
                writeln!(
                    svg,
                    r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                    LEFT + cw * (c as f64 + 0.5),
                    TOP + plot_h + 16.0,
                    escape(&tick_label(spec, c as f64))
                )
                .unwrap();
            }
        }
    }
    writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>
<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>
</svg>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 16.0,
        escape(&spec.x_label),
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0,
        escape(&spec.y_label)
    )
    .unwrap();
    Ok(svg)
}

/// The raw points as CSV `x,y,series`. Floats use the shortest
/// representation that parses back to the same value.
pub fn sidecar_csv(spec: &PlotSpec) -> Result<String, PlotError> {
    validate(spec)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let to_err = |e: csv::Error| PlotError::Sidecar(e.to_string());
    w.write_record(["x", "y", "series"]).map_err(to_err)?;
    for s in &spec.series {
        for (x, y) in &s.points {
            w.write_record([x.to_string(), y.to_string(), s.name.clone()]).map_err(to_err)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| PlotError::Sidecar(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv of utf-8 input"))
}

/// Parses a sidecar back into series, preserving first-appearance order.
pub fn parse_sidecar(text: &str) -> Result<Vec<Series>, PlotError> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| PlotError::Sidecar(e.to_string()))?;
    if header.iter().collect::<Vec<_>>() != ["x", "y", "series"] {
        return Err(PlotError::Sidecar("expected header x,y,series".into()));
    }
    let mut out: Vec<Series> = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| PlotError::Sidecar(e.to_string()))?;
        let parse = |i: usize| {
            row[i]
                .parse::<f64>()
                .map_err(|e| PlotError::Sidecar(format!("{}: {e}", &row[i])))
        };
        let point = (parse(0)?, parse(1)?);
        let name = &row[2];
        match out.iter_mut().find(|s| s.name == name) {
            Some(s) => s.points.push(point),
            None => out.push(Series::new(name, vec![point])),
        }
    }
    Ok(out)
}

/// Writes `path` (SVG) and a sibling `.csv` sidecar.
pub fn emit_plot(spec: &PlotSpec, path: &Path) -> Result<PlotFiles, PlotError> {
    let svg = render_svg(spec)?;
    let csv = sidecar_csv(spec)?;
    let svg_path = path.with_extension("svg");
    let csv_path = path.with_extension("csv");
    for (p, body) in [(&svg_path, &svg), (&csv_path, &csv)] {
        fs::write(p, body).map_err(|source| PlotError::Io {
            path: p.clone(),
            source,
        })?;
    }
    Ok(PlotFiles {
        svg: svg_path,
        csv: csv_path,
    })
}
