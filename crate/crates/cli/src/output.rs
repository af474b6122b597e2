//! Deterministic CSV, JSON and SVG writers. Every artifact carries the
//! tool version and the config hash.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use serde_json::{json, Value};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Shortest round-trip decimal form; non-finite values become `NaN`/`inf`.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:?}")
    } else if x.is_nan() {
        "NaN".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

pub fn header_line(config_hash: &str) -> String {
    format!("fibrot {VERSION} config-sha256={config_hash}")
}

/// CSV with a `#` header comment, a column row, LF line endings.
pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(config_hash: &str, columns: &[&str]) -> Self {
        let mut text = format!("# {}\n", header_line(config_hash));
        text.push_str(&columns.join(","));
        text.push('\n');
        Self { text }
    }

    pub fn row<S: AsRef<str>>(&mut self, cells: &[S]) {
        let line: Vec<&str> = cells.iter().map(AsRef::as_ref).collect();
        self.text.push_str(&line.join(","));
        self.text.push('\n');
    }

    pub fn into_string(self) -> String {
        self.text
    }
}

/// Wraps a report under `meta` and `report` keys.
pub fn json_report(config_hash: &str, report: Value) -> String {
    let doc = json!({
        "meta": { "tool": "fibrot", "version": VERSION, "config_sha256": config_hash },
        "report": report,
    });
    let mut s = serde_json::to_string_pretty(&doc).expect("report serializes");
    s.push('\n');
    s
}

pub fn write(dir: &Path, name: &str, contents: &str) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), contents)
}

/// A labelled shaded band on the energy axis.
pub struct Band {
    pub lower: f64,
    pub upper: f64,
    pub label: String,
}

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const MARGIN: f64 = 60.0;

/// Line plot of `ys` against `xs` on `[0, 1]` vertically, with bands.
pub fn svg_plot(config_hash: &str, title: &str, xs: &[f64], ys: &[f64], bands: &[Band]) -> String {
    let (x0, x1) = match (xs.first(), xs.last()) {
        (Some(&a), Some(&b)) if b > a => (a, b),
        (Some(&a), _) => (a - 1.0, a + 1.0),
        _ => (0.0, 1.0),
    };
    let px = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let py = |y: f64| HEIGHT - MARGIN - y.clamp(0.0, 1.0) * (HEIGHT - 2.0 * MARGIN);
    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(s, "<!-- {} -->", header_line(config_hash));
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#);
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    for band in bands {
        let (a, b) = (px(band.lower.max(x0)), px(band.upper.min(x1)));
        let _ = writeln!(
            s,
            r##"<rect x="{:.2}" y="{MARGIN}" width="{:.2}" height="{:.2}" fill="#9ecae1" fill-opacity="0.5"/>"##,
            a,
            (b - a).max(0.5),
            HEIGHT - 2.0 * MARGIN
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-size="10" text-anchor="middle">{}</text>"#,
            0.5 * (a + b),
            MARGIN - 6.0,
            band.label
        );
    }
    let axis = HEIGHT - MARGIN;
    let _ = writeln!(s, r#"<line x1="{MARGIN}" y1="{axis}" x2="{}" y2="{axis}" stroke="black"/>"#, WIDTH - MARGIN);
    let _ = writeln!(s, r#"<line x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" y2="{axis}" stroke="black"/>"#);
    for k in 0..=4 {
        let x = x0 + (x1 - x0) * k as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="middle">{:.3}</text>"#, px(x), axis + 18.0, x);
        let y = k as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="end">{:.2}</text>"#, MARGIN - 6.0, py(y) + 4.0, y);
    }
    let points: Vec<String> = xs.iter().zip(ys).map(|(&x, &y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
    let _ = writeln!(s, r#"<polyline fill="none" stroke="black" stroke-width="1" points="{}"/>"#, points.join(" "));
    let _ = writeln!(s, r#"<text x="{:.2}" y="20" font-size="14" text-anchor="middle">{title}</text>"#, WIDTH / 2.0);
    s.push_str("</svg>\n");
    s
}
