//! Downloadable renderings of a [`ChartSpec`]: CSV text, a tabular
//! structure for the UI, and a standalone SVG 1.1 image.
//!
//! Every emitter is a pure function of its input, so equal specs give
//! byte-identical output.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::chart::{ChartKind, ChartSpec};

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum ExportError {
    #[error("image size must be positive, got {width}x{height}")]
    NonPositiveSize { width: f64, height: f64 },
}

/// Decimal text with at most six fractional digits, trailing zeros
/// trimmed and `.` as separator. Never uses exponent notation.
pub fn format_number(x: f64) -> String {
    let mut s = format!("{x:.6}");
    if s.contains('.') {
        let trimmed = s.trim_end_matches('0').trim_end_matches('.').len();
        s.truncate(trimmed);
    }
    if s == "-0" {
        s.remove(0);
    }
    s
}

fn csv_field(out: &mut String, field: &str) {
    if field.contains([',', '"', '\n', '\r']) {
        out.push('"');
        out.push_str(&field.replace('"', "\"\""));
        out.push('"');
    } else {
        out.push_str(field);
    }
}

/// RFC 4180 text: a header of the x label and every series name, then one
/// row of absolute values per x category. Missing cells are empty.
pub fn to_csv(spec: &ChartSpec) -> String {
    let table = to_table(spec);
    let mut out = String::new();
    let mut row = |cells: &mut dyn Iterator<Item = String>| {
        for (i, c) in cells.enumerate() {
            if i > 0 {
                out.push(',');
            }
            csv_field(&mut out, &c);
        }
        out.push_str("\r\n");
    };
    row(&mut table.headers.iter().cloned());
    for r in &table.rows {
        row(&mut r.iter().map(Cell::text));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "snake_case")]
pub enum Cell {
    Label(String),
    Value(f64),
    /// Missing observation; distinct from zero.
    Empty,
}

impl Cell {
    /// The cell as it appears in CSV.
    pub fn text(&self) -> String {
        match self {
            Cell::Label(s) => s.clone(),
            Cell::Value(v) => format_number(*v),
            Cell::Empty => String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataTable {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

/// The CSV content as structured cells.
pub fn to_table(spec: &ChartSpec) -> DataTable {
    let mut headers = Vec::with_capacity(spec.series.len() + 1);
    headers.push(spec.x_label.clone());
    headers.extend(spec.series.iter().map(|s| s.name.clone()));
    let rows =
        if spec.series.is_empty() {
            Vec::new()
        } else {
            spec.x_categories
                .iter()
                .enumerate()
                .map(|(j, label)| {
                    let mut row = Vec::with_capacity(headers.len());
                    row.push(Cell::Label(label.clone()));
                    row.extend(spec.series.iter().map(
                        |s| match s.values.get(j).copied().flatten() {
                            Some(v) => Cell::Value(v),
                            None => Cell::Empty,
                        },
                    ));
                    row
                })
                .collect()
        };
    DataTable { headers, rows }
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];
const MARGIN_LEFT: f64 = 64.0;
const MARGIN_RIGHT: f64 = 16.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 48.0;

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

/// Coordinates rounded to two decimals.
fn coord(x: f64) -> String {
    format_number(libm::round(x * 100.0) / 100.0)
}

/// Round tick spacing covering `[lo, hi]` with about five steps.
fn nice_ticks(lo: f64, hi: f64) -> (f64, f64, f64) {
    let span = if hi > lo {
        hi - lo
    } else {
        libm::fabs(hi).max(1.0)
    };
    let raw = span / 5.0;
    let mag = libm::pow(10.0, libm::floor(libm::log10(raw)));
    let step = [1.0, 2.0, 5.0, 10.0]
        .into_iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let min = libm::floor(lo / step) * step;
    let mut max = libm::ceil(hi / step) * step;
    if max <= min {
        max = min + step;
    }
    (min, max, step)
}

struct Plot {
    left: f64,
    top: f64,
    width: f64,
    height: f64,
    min: f64,
    max: f64,
}

impl Plot {
    fn y(&self, v: f64) -> f64 {
        self.top + self.height - (v - self.min) / (self.max - self.min) * self.height
    }

    fn x(&self, v: f64) -> f64 {
        self.left + (v - self.min) / (self.max - self.min) * self.width
    }
}

/// Standalone SVG document with a title, axes (except pie) and one
/// `class="point"` shape per visible non-missing data point. Drilldown
/// columns render as plain columns.
pub fn to_svg(spec: &ChartSpec, width: f64, height: f64) -> Result<String, ExportError> {
    if !(width > 0.0 && height > 0.0) || !width.is_finite() || !height.is_finite() {
        return Err(ExportError::NonPositiveSize { width, height });
    }
    let mut out = String::new();
    let _ = write!(
        out,
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n\
         <svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\" font-size=\"11\">\n\
         <title>{t}</title>\n\
         <rect class=\"background\" x=\"0\" y=\"0\" width=\"{w}\" height=\"{h}\" fill=\"#ffffff\"/>\n\
         <text class=\"title\" x=\"{cx}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{t}</text>\n",
        w = coord(width),
        h = coord(height),
        cx = coord(width / 2.0),
        t = escape(&spec.title),
    );
    let plot_w = (width - MARGIN_LEFT - MARGIN_RIGHT).max(1.0);
    let plot_h = (height - MARGIN_TOP - MARGIN_BOTTOM).max(1.0);

    match spec.kind {
        ChartKind::Pie => pie(&mut out, spec, width, height),
        ChartKind::Bar => bars(&mut out, spec, plot_w, plot_h),
        ChartKind::Line => columns_or_lines(&mut out, spec, plot_w, plot_h, true),
        ChartKind::Column
        | ChartKind::ColumnDrilldown
        | ChartKind::StackedColumn
        | ChartKind::StackedPercentColumn => {
            columns_or_lines(&mut out, spec, plot_w, plot_h, false)
        }
    }
    legend(&mut out, spec, height);
    out.push_str("</svg>\n");
    Ok(out)
}

fn stacked(kind: ChartKind) -> bool {
    matches!(
        kind,
        ChartKind::StackedColumn | ChartKind::StackedPercentColumn
    )
}

/// Value range over plotted points, stacking where the kind stacks.
fn value_range(spec: &ChartSpec) -> (f64, f64) {
    let (mut lo, mut hi) = (0.0f64, 0.0f64);
    let visible = || spec.series.iter().filter(|s| s.visible);
    if stacked(spec.kind) {
        for j in 0..spec.x_ids.len() {
            let (mut neg, mut pos) = (0.0, 0.0);
            for v in visible().filter_map(|s| s.plotted.get(j).copied().flatten()) {
                if v < 0.0 {
                    neg += v;
                } else {
                    pos += v;
                }
            }
            lo = lo.min(neg);
            hi = hi.max(pos);
        }
    } else {
        for v in visible().flat_map(|s| s.plotted.iter().copied().flatten()) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    (lo, hi)
}

fn value_axis(out: &mut String, plot: &Plot, step: f64, vertical: bool, unit: Option<&str>) {
    let _ = writeln!(out, "<g class=\"axis value-axis\" stroke=\"#444444\">");
    let mut v = plot.min;
    let mut guard = 0;
    while v <= plot.max + step * 1e-9 && guard < 64 {
        let label = format_number(libm::round(v / step) * step);
        if vertical {
            let y = coord(plot.y(v));
            let _ = writeln!(
                out,
                "<line x1=\"{l}\" y1=\"{y}\" x2=\"{r}\" y2=\"{y}\" stroke=\"#dddddd\"/><text x=\"{tx}\" y=\"{y}\" text-anchor=\"end\" stroke=\"none\">{label}</text>",
                l = coord(plot.left),
                r = coord(plot.left + plot.width),
                tx = coord(plot.left - 4.0),
            );
        } else {
            let x = coord(plot.x(v));
            let _ = writeln!(
                out,
                "<line x1=\"{x}\" y1=\"{t}\" x2=\"{x}\" y2=\"{b}\" stroke=\"#dddddd\"/><text x=\"{x}\" y=\"{ty}\" text-anchor=\"middle\" stroke=\"none\">{label}</text>",
                t = coord(plot.top),
                b = coord(plot.top + plot.height),
                ty = coord(plot.top + plot.height + 14.0),
            );
        }
        v += step;
        guard += 1;
    }
    if let Some(u) = unit {
        let _ = writeln!(
            out,
            "<text class=\"unit\" x=\"4\" y=\"{y}\" stroke=\"none\">{u}</text>",
            y = coord(plot.top - 8.0),
            u = escape(u),
        );
    }
    let _ = writeln!(
        out,
        "<line x1=\"{l}\" y1=\"{t}\" x2=\"{l}\" y2=\"{b}\"/><line x1=\"{l}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\"/>\n</g>",
        l = coord(plot.left),
        r = coord(plot.left + plot.width),
        t = coord(plot.top),
        b = coord(plot.top + plot.height),
    );
}

fn columns_or_lines(out: &mut String, spec: &ChartSpec, plot_w: f64, plot_h: f64, line: bool) {
    let (lo, hi) = value_range(spec);
    let (min, max, step) = nice_ticks(lo, hi);
    let plot = Plot {
        left: MARGIN_LEFT,
        top: MARGIN_TOP,
        width: plot_w,
        height: plot_h,
        min,
        max,
    };
    value_axis(out, &plot, step, true, unit_label(spec).as_deref());

    let n = spec.x_ids.len().max(1) as f64;
    let band = plot_w / n;
    let _ = writeln!(out, "<g class=\"axis category-axis\">");
    for (j, label) in spec.x_categories.iter().enumerate() {
        let _ = writeln!(
            out,
            "<text x=\"{x}\" y=\"{y}\" text-anchor=\"middle\">{l}</text>",
            x = coord(plot.left + band * (j as f64 + 0.5)),
            y = coord(plot.top + plot.height + 16.0),
            l = escape(label),
        );
    }
    let _ = writeln!(
        out,
        "<text x=\"{x}\" y=\"{y}\" text-anchor=\"middle\">{l}</text>\n</g>",
        x = coord(plot.left + plot_w / 2.0),
        y = coord(plot.top + plot.height + 34.0),
        l = escape(&spec.x_label),
    );

    let visible: Vec<(usize, &crate::chart::ChartSeries)> = spec
        .series
        .iter()
        .enumerate()
        .filter(|(_, s)| s.visible)
        .collect();
    let is_stacked = stacked(spec.kind);
    let slots = if is_stacked {
        1.0
    } else {
        visible.len().max(1) as f64
    };
    let bar_w = band * 0.8 / slots;
    let mut pos_base = alloc::vec![0.0f64; spec.x_ids.len()];
    let mut neg_base = alloc::vec![0.0f64; spec.x_ids.len()];

    for (slot, (i, s)) in visible.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(
            out,
            "<g class=\"series\" data-series=\"{}\" fill=\"{color}\" stroke=\"{color}\">",
            escape(&s.name)
        );
        let mut path = Vec::new();
        for (j, v) in s.plotted.iter().enumerate() {
            let Some(v) = *v else { continue };
            let tip = tooltip(spec, *i, j, v);
            if line {
                let (x, y) = (plot.left + band * (j as f64 + 0.5), plot.y(v));
                path.push(format!("{},{}", coord(x), coord(y)));
                let _ = writeln!(
                    out,
                    "<circle class=\"point\" cx=\"{}\" cy=\"{}\" r=\"3\"><title>{tip}</title></circle>",
                    coord(x),
                    coord(y)
                );
                continue;
            }
            let (from, to) = if is_stacked {
                let base = if v < 0.0 {
                    &mut neg_base[j]
                } else {
                    &mut pos_base[j]
                };
                let from = *base;
                *base += v;
                (from, *base)
            } else {
                (0.0f64.clamp(plot.min, plot.max), v)
            };
            let x = plot.left
                + band * j as f64
                + band * 0.1
                + if is_stacked { 0.0 } else { bar_w * slot as f64 };
            let (y0, y1) = (plot.y(from), plot.y(to));
            let _ = writeln!(
                out,
                "<rect class=\"point\" x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\"><title>{tip}</title></rect>",
                coord(x),
                coord(y0.min(y1)),
                coord(bar_w),
                coord(libm::fabs(y1 - y0)),
            );
        }
        if line && path.len() > 1 {
            let _ = writeln!(
                out,
                "<polyline fill=\"none\" stroke-width=\"2\" points=\"{}\"/>",
                path.join(" ")
            );
        }
        out.push_str("</g>\n");
    }
}

fn bars(out: &mut String, spec: &ChartSpec, plot_w: f64, plot_h: f64) {
    let (lo, hi) = value_range(spec);
    let (min, max, step) = nice_ticks(lo, hi);
    let plot = Plot {
        left: MARGIN_LEFT,
        top: MARGIN_TOP,
        width: plot_w,
        height: plot_h,
        min,
        max,
    };
    value_axis(out, &plot, step, false, unit_label(spec).as_deref());

    let n = spec.x_ids.len().max(1) as f64;
    let band = plot_h / n;
    let _ = writeln!(out, "<g class=\"axis category-axis\">");
    for (j, label) in spec.x_categories.iter().enumerate() {
        let _ = writeln!(
            out,
            "<text x=\"{x}\" y=\"{y}\" text-anchor=\"end\">{l}</text>",
            x = coord(plot.left - 4.0),
            y = coord(plot.top + band * (j as f64 + 0.5)),
            l = escape(label),
        );
    }
    out.push_str("</g>\n");
    let visible: Vec<_> = spec
        .series
        .iter()
        .enumerate()
        .filter(|(_, s)| s.visible)
        .collect();
    let bar_h = band * 0.8 / visible.len().max(1) as f64;
    for (slot, (i, s)) in visible.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(
            out,
            "<g class=\"series\" data-series=\"{}\" fill=\"{color}\">",
            escape(&s.name)
        );
        for (j, v) in s.plotted.iter().enumerate() {
            let Some(v) = *v else { continue };
            let (x0, x1) = (plot.x(0.0f64.clamp(plot.min, plot.max)), plot.x(v));
            let _ = writeln!(
                out,
                "<rect class=\"point\" x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\"><title>{}</title></rect>",
                coord(x0.min(x1)),
                coord(plot.top + band * j as f64 + band * 0.1 + bar_h * slot as f64),
                coord(libm::fabs(x1 - x0)),
                coord(bar_h),
                tooltip(spec, *i, j, v),
            );
        }
        out.push_str("</g>\n");
    }
}

fn pie(out: &mut String, spec: &ChartSpec, width: f64, height: f64) {
    let cx = width / 2.0;
    let cy = MARGIN_TOP + (height - MARGIN_TOP - MARGIN_BOTTOM).max(1.0) / 2.0;
    let r = ((width.min(height - MARGIN_TOP - MARGIN_BOTTOM)) / 2.0 - 8.0).max(1.0);
    for (i, s) in spec.series.iter().enumerate().filter(|(_, s)| s.visible) {
        let _ = writeln!(
            out,
            "<g class=\"series\" data-series=\"{}\" stroke=\"#ffffff\">",
            escape(&s.name)
        );
        let total: f64 = s.plotted.iter().flatten().filter(|v| **v > 0.0).sum();
        let mut angle = -core::f64::consts::FRAC_PI_2;
        for (j, v) in s.plotted.iter().enumerate() {
            let Some(v) = *v else { continue };
            let frac = if total > 0.0 { v.max(0.0) / total } else { 0.0 };
            let sweep = frac * core::f64::consts::TAU;
            let color = PALETTE[j % PALETTE.len()];
            let tip = tooltip(spec, i, j, v);
            if frac >= 1.0 {
                let _ = writeln!(
                    out,
                    "<circle class=\"point\" cx=\"{}\" cy=\"{}\" r=\"{}\" fill=\"{color}\"><title>{tip}</title></circle>",
                    coord(cx),
                    coord(cy),
                    coord(r)
                );
            } else {
                let (x0, y0) = (cx + r * libm::cos(angle), cy + r * libm::sin(angle));
                let end = angle + sweep;
                let (x1, y1) = (cx + r * libm::cos(end), cy + r * libm::sin(end));
                let large = u8::from(sweep > core::f64::consts::PI);
                let _ = writeln!(
                    out,
                    "<path class=\"point\" d=\"M{},{} L{},{} A{r},{r} 0 {large} 1 {},{} Z\" fill=\"{color}\"><title>{tip}</title></path>",
                    coord(cx),
                    coord(cy),
                    coord(x0),
                    coord(y0),
                    coord(x1),
                    coord(y1),
                    r = coord(r),
                );
            }
            angle += sweep;
        }
        out.push_str("</g>\n");
    }
}

fn legend(out: &mut String, spec: &ChartSpec, height: f64) {
    let entries: Vec<(usize, &str)> = if spec.kind == ChartKind::Pie {
        spec.x_categories
            .iter()
            .map(String::as_str)
            .enumerate()
            .collect()
    } else {
        spec.series
            .iter()
            .enumerate()
            .filter(|(_, s)| s.visible)
            .map(|(i, s)| (i, s.name.as_str()))
            .collect()
    };
    let _ = writeln!(out, "<g class=\"legend\">");
    let y = height - 10.0;
    let mut x = MARGIN_LEFT;
    for (i, name) in entries {
        let _ = writeln!(
            out,
            "<rect x=\"{}\" y=\"{}\" width=\"10\" height=\"10\" fill=\"{}\"/><text x=\"{}\" y=\"{}\">{}</text>",
            coord(x),
            coord(y - 9.0),
            PALETTE[i % PALETTE.len()],
            coord(x + 14.0),
            coord(y),
            escape(name),
        );
        x += 24.0 + 6.5 * name.chars().count() as f64;
    }
    out.push_str("</g>\n");
}

fn unit_label(spec: &ChartSpec) -> Option<String> {
    if spec.kind == ChartKind::StackedPercentColumn {
        Some("%".to_string())
    } else {
        spec.unit.clone()
    }
}

fn tooltip(spec: &ChartSpec, series: usize, x: usize, plotted: f64) -> String {
    let s = &spec.series[series];
    let label = spec.x_categories.get(x).map(String::as_str).unwrap_or("");
    let entry = spec.tooltips.get(series).and_then(|t| t.get(x));
    let absolute = entry
        .and_then(|e| e.absolute)
        .or(s.values.get(x).copied().flatten())
        .unwrap_or(plotted);
    let mut text = format!("{}, {}: {}", s.name, label, format_number(absolute));
    if let Some(p) = entry.and_then(|e| e.percent) {
        let _ = write!(text, " ({}%)", format_number(libm::round(p * 10.0) / 10.0));
    }
    escape(&text)
}
