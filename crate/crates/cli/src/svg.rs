//! Minimal log-log line plots.

use std::fmt::Write;

const W: f64 = 820.0;
const H: f64 = 540.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 220.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;
const COLORS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"];

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    /// Fitted line `y = ½·C·x^{-ξ}` over `[x0, x1]` as `(x0, x1, C, ξ)`.
    pub fit: Option<(f64, f64, f64, f64)>,
    pub n_th: Option<f64>,
}

struct Axis {
    lo: f64,
    hi: f64,
}

impl Axis {
    fn new(vals: impl Iterator<Item = f64>) -> Option<Self> {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in vals.filter(|v| *v > 0.0 && v.is_finite()) {
            lo = lo.min(v.log10());
            hi = hi.max(v.log10());
        }
        if !lo.is_finite() {
            return None;
        }
        let (lo, hi) = (lo.floor(), hi.ceil().max(lo.floor() + 1.0));
        Some(Axis { lo, hi })
    }

    fn map(&self, v: f64, a: f64, b: f64) -> f64 {
        a + (v.log10() - self.lo) / (self.hi - self.lo) * (b - a)
    }
}

pub fn render(title: &str, series: &[Series]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let xa = Axis::new(series.iter().flat_map(|t| t.points.iter().map(|p| p.0)));
    let ya = Axis::new(series.iter().flat_map(|t| t.points.iter().map(|p| p.1)));
    let (Some(xa), Some(ya)) = (xa, ya) else {
        let _ = writeln!(s, r#"<text x="{}" y="{}">no positive data</text></svg>"#, W / 2.0, H / 2.0);
        return s;
    };
    let (x0, x1, y0, y1) = (LEFT, W - RIGHT, H - BOTTOM, TOP);
    let px = |v: f64| xa.map(v, x0, x1);
    let py = |v: f64| ya.map(v, y0, y1);
    let _ = writeln!(s, r#"<text x="{}" y="18" text-anchor="middle">{}</text>"#, (x0 + x1) / 2.0, escape(title));
    let _ = writeln!(
        s,
        r##"<rect x="{x0}" y="{y1}" width="{}" height="{}" fill="none" stroke="#000"/>"##,
        x1 - x0,
        y0 - y1
    );
    for e in xa.lo as i32..=xa.hi as i32 {
        let x = px(10f64.powi(e));
        let _ = writeln!(s, r##"<line x1="{x:.2}" y1="{y0}" x2="{x:.2}" y2="{y1}" stroke="#ddd"/>"##);
        let _ = writeln!(s, r#"<text x="{x:.2}" y="{}" text-anchor="middle">1e{e}</text>"#, y0 + 16.0);
    }
    for e in ya.lo as i32..=ya.hi as i32 {
        let y = py(10f64.powi(e));
        let _ = writeln!(s, r##"<line x1="{x0}" y1="{y:.2}" x2="{x1}" y2="{y:.2}" stroke="#ddd"/>"##);
        let _ = writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end">1e{e}</text>"#, x0 - 6.0, y + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">step n</text>"#, (x0 + x1) / 2.0, H - 20.0);
    let _ = writeln!(
        s,
        r#"<text x="18" y="{}" transform="rotate(-90 18 {})" text-anchor="middle">loss</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    );
    for (i, t) in series.iter().enumerate() {
        let c = COLORS[i % COLORS.len()];
        let pts: Vec<String> = t
            .points
            .iter()
            .filter(|(x, y)| *x > 0.0 && *y > 0.0 && y.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        if !pts.is_empty() {
            let _ =
                writeln!(s, r#"<polyline fill="none" stroke="{c}" stroke-width="1.5" points="{}"/>"#, pts.join(" "));
        }
        if let Some((a, b, cc, xi)) = t.fit {
            let f = |x: f64| 0.5 * cc * x.powf(-xi);
            let _ = writeln!(
                s,
                r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#000" stroke-dasharray="6 4"/>"##,
                px(a),
                py(f(a)),
                px(b),
                py(f(b))
            );
        }
        if let Some(n) = t.n_th.filter(|n| n.log10() >= xa.lo && n.log10() <= xa.hi) {
            let x = px(n);
            let _ = writeln!(
                s,
                r#"<line x1="{x:.2}" y1="{y0}" x2="{x:.2}" y2="{y1}" stroke="{c}" stroke-dasharray="2 3"/>"#
            );
        }
        let ly = TOP + 16.0 * (i as f64 + 1.0);
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{c}" stroke-width="2"/>"#,
            x1 + 12.0,
            x1 + 32.0
        );
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, x1 + 38.0, ly + 4.0, escape(&t.label));
    }
    s.push_str("</svg>\n");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
