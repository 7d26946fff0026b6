//! Deterministic SVG charts and text tables from a [`ResultTable`].

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use super::{Cell, ResultTable};
use crate::store::StoreError;
use crate::time::Timestamp;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChartKind {
    TimeSeries,
    Bar,
    Pie,
    Table,
}

impl FromStr for ChartKind {
    type Err = StoreError;

    fn from_str(s: &str) -> Result<Self, StoreError> {
        Ok(match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "time_series" | "timeseries" | "series" | "line" => ChartKind::TimeSeries,
            "bar" => ChartKind::Bar,
            "pie" => ChartKind::Pie,
            "table" => ChartKind::Table,
            _ => return Err(StoreError::Invalid(format!("unknown chart kind '{s}'"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChartSpec {
    pub kind: ChartKind,
    pub title: Option<String>,
    /// Vertical axis caption, e.g. a unit.
    pub y_label: Option<String>,
    /// Columns to plot; all numeric columns when empty.
    pub series: Vec<String>,
}

impl ChartSpec {
    pub fn new(kind: ChartKind) -> Self {
        Self {
            kind,
            title: None,
            y_label: None,
            series: Vec::new(),
        }
    }
}

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 450.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 190.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 70.0;
const PALETTE: [&str; 10] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

fn mismatch(kind: &str, why: impl std::fmt::Display) -> StoreError {
    StoreError::Invalid(format!("{kind} chart does not fit this table: {why}"))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn num(x: f64) -> String {
    let s = format!("{x:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

fn tick(x: f64) -> String {
    let a = x.abs();
    if a != 0.0 && !(1e-3..1e5).contains(&a) {
        format!("{x:.3e}")
    } else {
        let s = format!("{x:.4}");
        let s = s.trim_end_matches('0').trim_end_matches('.');
        if s == "-0" { "0".into() } else { s.into() }
    }
}

/// Columns to plot: the requested ones, else every column holding only
/// numbers and undefined values (with at least one number).
fn value_columns(table: &ResultTable, spec: &ChartSpec, skip: usize) -> Result<Vec<usize>, String> {
    if !spec.series.is_empty() {
        return spec
            .series
            .iter()
            .map(|name| table.column(name).ok_or_else(|| format!("no column '{name}'")))
            .collect();
    }
    Ok((skip..table.columns.len())
        .filter(|&c| {
            table.rows.iter().all(|r| r[c].is_numeric() || r[c] == Cell::Null)
                && (table.rows.is_empty() || table.rows.iter().any(|r| r[c].is_numeric()))
        })
        .collect())
}

fn padded_range(lo: f64, hi: f64) -> (f64, f64) {
    if !(lo.is_finite() && hi.is_finite()) {
        return (0.0, 1.0);
    }
    if hi - lo <= f64::EPSILON * hi.abs().max(1.0) {
        let d = if lo == 0.0 { 1.0 } else { lo.abs() * 0.05 };
        return (lo - d, hi + d);
    }
    let pad = (hi - lo) * 0.05;
    (lo - pad, hi + pad)
}

struct Frame {
    svg: String,
}

impl Frame {
    fn new(spec: &ChartSpec, default_title: &str) -> Self {
        let mut svg = String::new();
        let _ = writeln!(svg, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#,
            w = WIDTH,
            h = HEIGHT
        );
        let title = escape(spec.title.as_deref().unwrap_or(default_title));
        let _ = writeln!(svg, "<title>{title}</title>");
        let _ = writeln!(svg, r##"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>"##);
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="24" text-anchor="middle" font-size="16">{title}</text>"#,
            num(WIDTH / 2.0)
        );
        Self { svg }
    }

    fn legend(&mut self, labels: &[String]) {
        for (k, label) in labels.iter().enumerate() {
            let y = TOP + 10.0 + 20.0 * k as f64;
            let x = WIDTH - RIGHT + 15.0;
            let _ = writeln!(
                self.svg,
                r#"<rect class="legend" x="{}" y="{}" width="12" height="12" fill="{}"/><text x="{}" y="{}">{}</text>"#,
                num(x),
                num(y - 10.0),
                PALETTE[k % PALETTE.len()],
                num(x + 18.0),
                num(y),
                escape(label)
            );
        }
    }

    fn y_axis(&mut self, lo: f64, hi: f64, label: Option<&str>) {
        let plot_h = HEIGHT - TOP - BOTTOM;
        let _ = writeln!(
            self.svg,
            r##"<line x1="{l}" y1="{t}" x2="{l}" y2="{b}" stroke="#000000"/>"##,
            l = num(LEFT),
            t = num(TOP),
            b = num(HEIGHT - BOTTOM)
        );
        for k in 0..=4 {
            let v = lo + (hi - lo) * k as f64 / 4.0;
            let y = HEIGHT - BOTTOM - plot_h * k as f64 / 4.0;
            let _ = writeln!(
                self.svg,
                r##"<line x1="{}" y1="{y}" x2="{}" y2="{y}" stroke="#dddddd"/><text x="{}" y="{}" text-anchor="end">{}</text>"##,
                num(LEFT),
                num(WIDTH - RIGHT),
                num(LEFT - 6.0),
                num(y + 4.0),
                tick(v),
                y = num(y)
            );
        }
        if let Some(label) = label {
            let _ = writeln!(
                self.svg,
                r#"<text x="16" y="{y}" transform="rotate(-90 16 {y})" text-anchor="middle">{}</text>"#,
                escape(label),
                y = num(TOP + plot_h / 2.0)
            );
        }
    }

    fn x_axis_line(&mut self) {
        let _ = writeln!(
            self.svg,
            r##"<line x1="{}" y1="{b}" x2="{}" y2="{b}" stroke="#000000"/>"##,
            num(LEFT),
            num(WIDTH - RIGHT),
            b = num(HEIGHT - BOTTOM)
        );
    }

    fn finish(mut self) -> Vec<u8> {
        self.svg.push_str("</svg>\n");
        self.svg.into_bytes()
    }
}

fn time_series(table: &ResultTable, spec: &ChartSpec) -> Result<Vec<u8>, StoreError> {
    let err = |w: String| mismatch("time_series", w);
    let times: Vec<Timestamp> = table
        .rows
        .iter()
        .map(|r| match r.first() {
            Some(Cell::Time(t)) => Ok(*t),
            _ => Err(err("first column is not a timestamp".into())),
        })
        .collect::<Result<_, _>>()?;
    if table.columns.first().map(String::as_str) != Some("timestamp") {
        return Err(err("the table is not time-indexed".into()));
    }
    let cols = value_columns(table, spec, 1).map_err(err)?;
    if cols.is_empty() {
        return Err(err("no numeric columns".into()));
    }
    let (t0, t1) = match (times.iter().min(), times.iter().max()) {
        (Some(a), Some(b)) if a < b => (a.nanos(), b.nanos()),
        (Some(a), _) => (a.nanos() - 1_000_000_000, a.nanos() + 1_000_000_000),
        _ => (0, 1),
    };
    let values = || cols.iter().flat_map(|&c| table.rows.iter().filter_map(move |r| r[c].as_f64()));
    let lo = values().fold(f64::INFINITY, f64::min);
    let hi = values().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = padded_range(lo, hi);

    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let x = |t: i64| LEFT + plot_w * (t - t0) as f64 / (t1 - t0) as f64;
    let y = |v: f64| HEIGHT - BOTTOM - plot_h * (v - lo) / (hi - lo);

    let mut f = Frame::new(spec, &table.provenance);
    f.y_axis(lo, hi, spec.y_label.as_deref());
    f.x_axis_line();
    for k in 0..=4 {
        let t = t0 + ((t1 - t0) as f64 * k as f64 / 4.0).round() as i64;
        let _ = writeln!(
            f.svg,
            r#"<text x="{}" y="{}" text-anchor="middle" font-size="10">{}</text>"#,
            num(x(t)),
            num(HEIGHT - BOTTOM + 16.0 + 12.0 * (k % 2) as f64),
            escape(&Timestamp(t).to_iso8601())
        );
    }
    if table.rows.is_empty() {
        let _ = writeln!(
            f.svg,
            r#"<text x="{}" y="{}" text-anchor="middle">no data in range</text>"#,
            num(LEFT + plot_w / 2.0),
            num(TOP + plot_h / 2.0)
        );
    }
    let labels: Vec<String> = cols.iter().map(|&c| table.columns[c].clone()).collect();
    for (k, &c) in cols.iter().enumerate() {
        // undefined values break the line
        let mut runs: Vec<Vec<String>> = vec![Vec::new()];
        for (row, t) in table.rows.iter().zip(&times) {
            match row[c].as_f64() {
                Some(v) => runs.last_mut().expect("non-empty").push(format!("{},{}", num(x(t.nanos())), num(y(v)))),
                None if runs.last().is_some_and(|r| !r.is_empty()) => runs.push(Vec::new()),
                None => {}
            }
        }
        let _ = writeln!(f.svg, r#"<g class="series" data-label="{}">"#, escape(&labels[k]));
        for run in runs.iter().filter(|r| !r.is_empty()) {
            let color = PALETTE[k % PALETTE.len()];
            if run.len() == 1 {
                let (px, py) = run[0].split_once(',').expect("x,y");
                let _ = writeln!(f.svg, r#"<circle cx="{px}" cy="{py}" r="2" fill="{color}"/>"#);
            } else {
                let _ = writeln!(
                    f.svg,
                    r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                    run.join(" ")
                );
            }
        }
        let _ = writeln!(f.svg, "</g>");
    }
    f.legend(&labels);
    Ok(f.finish())
}

fn row_label(table: &ResultTable, row: &[Cell], cols: &[usize], k: usize) -> String {
    let parts: Vec<String> = row
        .iter()
        .enumerate()
        .filter(|(c, _)| !cols.contains(c))
        .map(|(_, cell)| cell.to_string())
        .collect();
    if parts.is_empty() {
        if table.rows.len() == 1 { "all".into() } else { format!("row {}", k + 1) }
    } else {
        parts.join(" / ")
    }
}

fn bar(table: &ResultTable, spec: &ChartSpec) -> Result<Vec<u8>, StoreError> {
    let err = |w: String| mismatch("bar", w);
    let cols = value_columns(table, spec, 0).map_err(err)?;
    if cols.is_empty() {
        return Err(err("no numeric columns".into()));
    }
    if table.rows.is_empty() {
        return Err(err("no rows".into()));
    }
    let values = || cols.iter().flat_map(|&c| table.rows.iter().map(move |r| r[c].as_f64().unwrap_or(0.0)));
    let lo = values().fold(0.0, f64::min);
    let hi = values().fold(0.0, f64::max);
    let (lo, hi) = if hi > lo { (lo, hi + (hi - lo) * 0.05) } else { (0.0, 1.0) };

    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let y = |v: f64| HEIGHT - BOTTOM - plot_h * (v - lo) / (hi - lo);
    let group_w = plot_w / table.rows.len() as f64;
    let bar_w = group_w * 0.8 / cols.len() as f64;

    let mut f = Frame::new(spec, &table.provenance);
    f.y_axis(lo, hi, spec.y_label.as_deref());
    for (k, row) in table.rows.iter().enumerate() {
        let gx = LEFT + group_w * k as f64 + group_w * 0.1;
        for (s, &c) in cols.iter().enumerate() {
            let v = row[c].as_f64().unwrap_or(0.0);
            let (top, bottom) = if v >= 0.0 { (y(v), y(0.0)) } else { (y(0.0), y(v)) };
            let _ = writeln!(
                f.svg,
                r#"<rect class="bar" x="{}" y="{}" width="{}" height="{}" fill="{}"><title>{}: {}</title></rect>"#,
                num(gx + bar_w * s as f64),
                num(top),
                num(bar_w),
                num(bottom - top),
                PALETTE[s % PALETTE.len()],
                escape(&table.columns[c]),
                escape(&row[c].to_string())
            );
        }
        let _ = writeln!(
            f.svg,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            num(LEFT + group_w * (k as f64 + 0.5)),
            num(HEIGHT - BOTTOM + 18.0),
            escape(&row_label(table, row, &cols, k))
        );
    }
    let _ = writeln!(
        f.svg,
        r##"<line x1="{}" y1="{z}" x2="{}" y2="{z}" stroke="#000000"/>"##,
        num(LEFT),
        num(WIDTH - RIGHT),
        z = num(y(0.0))
    );
    let labels: Vec<String> = cols.iter().map(|&c| table.columns[c].clone()).collect();
    f.legend(&labels);
    Ok(f.finish())
}

fn pie(table: &ResultTable, spec: &ChartSpec) -> Result<Vec<u8>, StoreError> {
    let err = |w: String| mismatch("pie", w);
    let cols = value_columns(table, spec, 0).map_err(err)?;
    let [c] = cols[..] else {
        return Err(err(format!("needs exactly one measure column, found {}", cols.len())));
    };
    let values: Vec<f64> = table.rows.iter().map(|r| r[c].as_f64().unwrap_or(0.0)).collect();
    if values.iter().any(|v| *v < 0.0) {
        return Err(err("negative values".into()));
    }
    let total: f64 = values.iter().sum();
    if !(total > 0.0) {
        return Err(err("all values are zero".into()));
    }
    let (cx, cy, r) = (LEFT + (WIDTH - LEFT - RIGHT) / 2.0, TOP + (HEIGHT - TOP - BOTTOM) / 2.0 + 10.0, 150.0);
    let mut f = Frame::new(spec, &table.provenance);
    let mut angle = 0.0f64;
    let point = |a: f64| (cx + r * a.sin(), cy - r * a.cos());
    for (k, v) in values.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let sweep = std::f64::consts::TAU * v / total;
        if *v == total {
            let _ = writeln!(
                f.svg,
                r#"<circle class="slice" cx="{}" cy="{}" r="{}" fill="{color}"/>"#,
                num(cx),
                num(cy),
                num(r)
            );
        } else if *v > 0.0 {
            let (x1, y1) = point(angle);
            let (x2, y2) = point(angle + sweep);
            let large = u8::from(sweep > std::f64::consts::PI);
            let _ = writeln!(
                f.svg,
                r#"<path class="slice" d="M {} {} L {} {} A {r} {r} 0 {large} 1 {} {} Z" fill="{color}"/>"#,
                num(cx),
                num(cy),
                num(x1),
                num(y1),
                num(x2),
                num(y2),
                r = num(r)
            );
        }
        angle += sweep;
    }
    let labels: Vec<String> = table
        .rows
        .iter()
        .enumerate()
        .map(|(k, row)| format!("{} ({})", row_label(table, row, &cols, k), row[c]))
        .collect();
    f.legend(&labels);
    Ok(f.finish())
}

/// Renders `table` as `spec.kind`; identical inputs give identical bytes.
pub fn render_chart_bytes(table: &ResultTable, spec: &ChartSpec) -> Result<Vec<u8>, StoreError> {
    if !table.is_rectangular() {
        return Err(StoreError::Invalid("result table is not rectangular".into()));
    }
    match spec.kind {
        ChartKind::Table => Ok(table.to_text().into_bytes()),
        ChartKind::TimeSeries => time_series(table, spec),
        ChartKind::Bar => bar(table, spec),
        ChartKind::Pie => pie(table, spec),
    }
}

pub fn render_chart(table: &ResultTable, spec: &ChartSpec, out_path: &Path) -> Result<(), StoreError> {
    let bytes = render_chart_bytes(table, spec)?;
    if let Some(dir) = out_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(out_path, bytes)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pst_table() -> ResultTable {
        let mut t = ResultTable::new(
            ["timestamp", "pst_a", "pst_b", "pst_c"].map(String::from).to_vec(),
            "series",
        );
        for k in 0..12 {
            let v = 0.3 + 0.01 * k as f64;
            t.rows.push(vec![
                Cell::Time(Timestamp(600_000_000_000 * (k + 1))),
                Cell::Float(v),
                if k == 5 { Cell::Null } else { Cell::Float(v * 1.1) },
                Cell::Float(v * 0.9),
            ]);
        }
        t
    }

    fn sums() -> ResultTable {
        let mut t = ResultTable::new(
            ["sum(sag_count)", "sum(swell_count)", "sum(unbalance_count)", "sum(event_count)"]
                .map(String::from)
                .to_vec(),
            "events",
        );
        t.rows.push(vec![Cell::Int(3), Cell::Int(2), Cell::Int(1), Cell::Int(7)]);
        t
    }

    #[test]
    fn pst_series_has_three_labelled_lines() {
        let svg = String::from_utf8(render_chart_bytes(&pst_table(), &ChartSpec::new(ChartKind::TimeSeries)).unwrap())
            .unwrap();
        assert_eq!(svg.matches(r#"<g class="series""#).count(), 3);
        for p in ["pst_a", "pst_b", "pst_c"] {
            assert!(svg.contains(&format!(r#"data-label="{p}""#)));
        }
        // the undefined value splits phase b into two runs
        assert_eq!(svg.matches("<polyline").count(), 4);
        assert!(svg.starts_with("<?xml") && svg.ends_with("</svg>\n"));
    }

    #[test]
    fn single_group_sums_make_four_bars() {
        let svg = String::from_utf8(render_chart_bytes(&sums(), &ChartSpec::new(ChartKind::Bar)).unwrap()).unwrap();
        assert_eq!(svg.matches(r#"class="bar""#).count(), 4);
    }

    #[test]
    fn output_is_deterministic() {
        for kind in [ChartKind::TimeSeries, ChartKind::Table] {
            let spec = ChartSpec::new(kind);
            assert_eq!(
                render_chart_bytes(&pst_table(), &spec).unwrap(),
                render_chart_bytes(&pst_table(), &spec).unwrap()
            );
        }
    }

    #[test]
    fn shape_mismatches_are_named() {
        let e = render_chart_bytes(&sums(), &ChartSpec::new(ChartKind::TimeSeries)).unwrap_err();
        assert!(e.to_string().contains("time_series"));
        let e = render_chart_bytes(&sums(), &ChartSpec::new(ChartKind::Pie)).unwrap_err();
        assert!(e.to_string().contains("exactly one measure"));
        let mut one = sums();
        one.columns.truncate(1);
        one.rows[0].truncate(1);
        let svg = String::from_utf8(render_chart_bytes(&one, &ChartSpec::new(ChartKind::Pie)).unwrap()).unwrap();
        assert_eq!(svg.matches(r#"class="slice""#).count(), 1);
        let mut neg = one.clone();
        neg.rows[0][0] = Cell::Int(-1);
        assert!(render_chart_bytes(&neg, &ChartSpec::new(ChartKind::Pie)).is_err());
    }

    #[test]
    fn empty_table_renders_header_only() {
        let t = ResultTable::new(vec!["load_type".into(), "sum(sag_count)".into()], "");
        let text = String::from_utf8(render_chart_bytes(&t, &ChartSpec::new(ChartKind::Table)).unwrap()).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.starts_with("load_type"));
    }
}
