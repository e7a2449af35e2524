//! Static SVG plots: a grid of fixed-size panels holding scatter clouds and
//! polylines. No external assets, no scripts.

use std::fmt::Write;

pub const PANEL: f64 = 320.0;
const MARGIN: f64 = 44.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

pub fn color(k: usize) -> &'static str {
    PALETTE[k % PALETTE.len()]
}

#[derive(Clone, Debug)]
pub enum Mark {
    Points { color: String, radius: f64, pts: Vec<(f64, f64)> },
    Line { color: String, dashed: bool, pts: Vec<(f64, f64)> },
}

#[derive(Clone, Debug)]
pub struct Panel {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub marks: Vec<Mark>,
    pub legend: Vec<(String, String)>,
}

impl Panel {
    pub fn new(title: impl Into<String>, x_range: (f64, f64), y_range: (f64, f64)) -> Self {
        Self {
            title: title.into(),
            x_label: String::new(),
            y_label: String::new(),
            x_range,
            y_range,
            marks: Vec::new(),
            legend: Vec::new(),
        }
    }

    pub fn labels(mut self, x: &str, y: &str) -> Self {
        self.x_label = x.into();
        self.y_label = y.into();
        self
    }

    pub fn points(&mut self, color: &str, radius: f64, pts: Vec<(f64, f64)>) {
        self.marks.push(Mark::Points {
            color: color.into(),
            radius,
            pts,
        });
    }

    pub fn line(&mut self, color: &str, dashed: bool, pts: Vec<(f64, f64)>) {
        self.marks.push(Mark::Line {
            color: color.into(),
            dashed,
            pts,
        });
    }

    pub fn legend(&mut self, color: &str, label: impl Into<String>) {
        self.legend.push((color.into(), label.into()));
    }

    /// Range covering every finite coordinate of the marks, padded by 5%.
    pub fn fit_y(&mut self) {
        let ys = self.marks.iter().flat_map(|m| match m {
            Mark::Points { pts, .. } | Mark::Line { pts, .. } => pts.iter().map(|p| p.1),
        });
        let (lo, hi) = ys
            .filter(|y| y.is_finite())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), y| (a.min(y), b.max(y)));
        if lo.is_finite() && hi.is_finite() {
            let pad = ((hi - lo) * 0.05).max(1e-9);
            self.y_range = (lo - pad, hi + pad);
        }
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Renders `panels` row-major, `cols` per row.
pub fn render(panels: &[Panel], cols: usize) -> String {
    let cols = cols.max(1);
    let rows = panels.len().div_ceil(cols).max(1);
    let cell = PANEL + 2.0 * MARGIN;
    let (w, h) = (cell * cols as f64, cell * rows as f64);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    for (k, p) in panels.iter().enumerate() {
        let ox = (k % cols) as f64 * cell + MARGIN;
        let oy = (k / cols) as f64 * cell + MARGIN;
        panel(&mut s, p, ox, oy);
    }
    s.push_str("</svg>\n");
    s
}

fn panel(s: &mut String, p: &Panel, ox: f64, oy: f64) {
    let (x0, x1) = p.x_range;
    let (y0, y1) = p.y_range;
    let sx = |x: f64| ox + (x - x0) / (x1 - x0) * PANEL;
    let sy = |y: f64| oy + PANEL - (y - y0) / (y1 - y0) * PANEL;
    let inside = |x: f64, y: f64| x.is_finite() && y.is_finite() && x >= x0 && x <= x1 && y >= y0 && y <= y1;

    let _ = writeln!(
        s,
        r##"<rect x="{ox}" y="{oy}" width="{PANEL}" height="{PANEL}" fill="none" stroke="#444"/>"##
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="13">{}</text>"#,
        ox + PANEL / 2.0,
        oy - 10.0,
        esc(&p.title)
    );
    for (v, anchor) in [(x0, "start"), (x1, "end")] {
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="{anchor}">{}</text>"#,
            sx(v),
            oy + PANEL + 14.0,
            tick(v)
        );
    }
    for v in [y0, y1] {
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            ox - 4.0,
            sy(v) + 4.0,
            tick(v)
        );
    }
    if !p.x_label.is_empty() {
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            ox + PANEL / 2.0,
            oy + PANEL + 30.0,
            esc(&p.x_label)
        );
    }
    if !p.y_label.is_empty() {
        let (cx, cy) = (ox - 30.0, oy + PANEL / 2.0);
        let _ = writeln!(
            s,
            r#"<text x="{cx:.1}" y="{cy:.1}" text-anchor="middle" transform="rotate(-90 {cx:.1} {cy:.1})">{}</text>"#,
            esc(&p.y_label)
        );
    }
    for m in &p.marks {
        match m {
            Mark::Points { color, radius, pts } => {
                let _ = writeln!(s, r#"<g fill="{color}" fill-opacity="0.6">"#);
                for &(x, y) in pts.iter().filter(|&&(x, y)| inside(x, y)) {
                    let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="{radius}"/>"#, sx(x), sy(y));
                }
                s.push_str("</g>\n");
            }
            Mark::Line { color, dashed, pts } => {
                let path: Vec<String> = pts
                    .iter()
                    .filter(|&&(x, y)| x.is_finite() && y.is_finite())
                    .map(|&(x, y)| {
                        format!("{:.2},{:.2}", sx(x), sy(y.clamp(y0, y1)))
                    })
                    .collect();
                let dash = if *dashed { r#" stroke-dasharray="5,3""# } else { "" };
                let _ = writeln!(
                    s,
                    r#"<polyline fill="none" stroke="{color}" stroke-width="1.5"{dash} points="{}"/>"#,
                    path.join(" ")
                );
            }
        }
    }
    for (k, (color, label)) in p.legend.iter().enumerate() {
        let y = oy + 14.0 + 14.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{:.1}" y="{:.1}" width="10" height="10" fill="{color}"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            ox + 8.0,
            y - 9.0,
            ox + 22.0,
            y,
            esc(label)
        );
    }
}

fn tick(v: f64) -> String {
    if v == 0.0 || (v.abs() >= 1e-2 && v.abs() < 1e4) {
        format!("{}", (v * 100.0).round() / 100.0)
    } else {
        format!("{v:.1e}")
    }
}
