//! Minimal SVG rendering of a functional boxplot panel.

use std::fmt::Write;

use cellshare_core::fboxplot::{Band, BoxplotOutcome};

const W: f64 = 760.0;
const H: f64 = 380.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 40.0;

struct Frame {
    n: usize,
    lo: f64,
    hi: f64,
}

impl Frame {
    fn x(&self, t: usize) -> f64 {
        LEFT + (W - LEFT - RIGHT) * t as f64 / (self.n.max(2) - 1) as f64
    }

    fn y(&self, v: f64) -> f64 {
        let span = if self.hi > self.lo { self.hi - self.lo } else { 1.0 };
        H - BOTTOM - (H - TOP - BOTTOM) * (v - self.lo) / span
    }

    fn path(&self, values: &[f64]) -> String {
        let mut s = String::new();
        for (t, v) in values.iter().enumerate() {
            let _ = write!(s, "{}{:.2},{:.2}", if t == 0 { "M" } else { " L" }, self.x(t), self.y(*v));
        }
        s
    }

    fn band(&self, b: &Band) -> String {
        let mut s = self.path(&b.upper);
        for t in (0..b.lower.len()).rev() {
            let _ = write!(s, " L{:.2},{:.2}", self.x(t), self.y(b.lower[t]));
        }
        s.push_str(" Z");
        s
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Draws one panel. `curves` pairs each id with its values; outliers are
/// looked up there.
pub fn boxplot_svg(title: &str, outcome: &BoxplotOutcome, curves: &[(String, Vec<f64>)]) -> String {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut take = |v: &[f64]| {
        for &x in v {
            lo = lo.min(x);
            hi = hi.max(x);
        }
    };
    for (_, c) in curves {
        take(c);
    }
    if let Some(b) = outcome.boxplot() {
        take(&b.fences.lower);
        take(&b.fences.upper);
    }
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    let n = curves.first().map_or(96, |c| c.1.len());
    let f = Frame { n, lo, hi };

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{LEFT}" y="24" font-family="sans-serif" font-size="14">{}</text>"#, escape(title));
    let _ = writeln!(
        s,
        r##"<rect x="{LEFT}" y="{TOP}" width="{}" height="{}" fill="none" stroke="#888"/>"##,
        W - LEFT - RIGHT,
        H - TOP - BOTTOM
    );
    for h in [0usize, 6, 12, 18, 24] {
        let t = (h * 4).min(n.saturating_sub(1));
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">{h:02}:00</text>"#,
            f.x(t),
            H - BOTTOM + 16.0
        );
    }
    for v in [lo, (lo + hi) / 2.0, hi] {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="end">{v:.0}</text>"#,
            LEFT - 6.0,
            f.y(v) + 4.0
        );
    }
    match outcome {
        BoxplotOutcome::Boxplot(b) => {
            let _ = writeln!(s, r##"<path class="region" d="{}" fill="#8e44ad" fill-opacity="0.35" stroke="none"/>"##, f.band(&b.central_region));
            for edge in [&b.fences.lower, &b.fences.upper] {
                let _ = writeln!(s, r##"<path class="fence" d="{}" fill="none" stroke="#1f4fd1" stroke-width="1.5"/>"##, f.path(edge));
            }
            for id in &b.outlier_ids {
                if let Some((_, c)) = curves.iter().find(|(i, _)| i == id) {
                    let _ = writeln!(s, r##"<path class="outlier" d="{}" fill="none" stroke="#d62728" stroke-width="1"/>"##, f.path(c));
                }
            }
            let _ = writeln!(s, r##"<path class="median" d="{}" fill="none" stroke="#000" stroke-width="2"/>"##, f.path(&b.median_curve));
        }
        BoxplotOutcome::TooSmall { .. } => {
            for (_, c) in curves {
                let _ = writeln!(s, r##"<path class="curve" d="{}" fill="none" stroke="#777" stroke-width="1"/>"##, f.path(c));
            }
        }
    }
    s.push_str("</svg>\n");
    s
}
