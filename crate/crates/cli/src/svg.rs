//! Self-contained log-log plots.

use std::fmt::Write;

pub struct Series<'a> {
    pub x: &'a [f64],
    pub y: &'a [f64],
    pub err: &'a [f64],
}

pub struct Plot<'a> {
    pub title: &'a str,
    pub xlabel: &'a str,
    pub ylabel: &'a str,
    pub data: Series<'a>,
    /// `(exponent, amplitude, window)` of `y = amplitude * x^exponent`.
    pub fit: Option<(f64, f64, (f64, f64))>,
    pub floor: Option<f64>,
    /// Embedded as a comment so the plot can be traced to its table.
    pub csv_sha256: &'a str,
}

const W: f64 = 640.0;
const H: f64 = 480.0;
const ML: f64 = 80.0;
const MR: f64 = 20.0;
const MT: f64 = 40.0;
const MB: f64 = 60.0;

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl Plot<'_> {
    pub fn render(&self) -> String {
        let pts: Vec<(f64, f64, f64)> = self
            .data
            .x
            .iter()
            .zip(self.data.y)
            .zip(self.data.err)
            .filter(|((x, y), _)| **x > 0.0 && **y > 0.0)
            .map(|((x, y), e)| (*x, *y, *e))
            .collect();
        let mut lx: Vec<f64> = pts.iter().map(|p| p.0.log10()).collect();
        let mut ly: Vec<f64> = pts.iter().map(|p| p.1.log10()).collect();
        if let Some(f) = self.floor.filter(|f| *f > 0.0) {
            ly.push(f.log10());
        }
        if lx.is_empty() {
            lx.push(0.0);
            ly.push(0.0);
        }
        let (x0, x1) = bounds(&lx);
        let (y0, y1) = bounds(&ly);
        let sx = |v: f64| ML + (v.log10() - x0) / (x1 - x0) * (W - ML - MR);
        let sy = |v: f64| H - MB - (v.log10() - y0) / (y1 - y0) * (H - MT - MB);

        let mut s = String::new();
        let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
        let _ = writeln!(s, "<!-- csv-sha256: {} -->", self.csv_sha256);
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<rect x="{ML}" y="{MT}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            W - ML - MR,
            H - MT - MB
        );
        for e in x0.ceil() as i32..=x1.floor() as i32 {
            let x = sx(10f64.powi(e));
            let _ = writeln!(
                s,
                r##"<line x1="{x:.2}" y1="{}" x2="{x:.2}" y2="{MT}" stroke="#ddd"/><text x="{x:.2}" y="{}" text-anchor="middle">1e{e}</text>"##,
                H - MB,
                H - MB + 16.0
            );
        }
        let ystep = ((y1 - y0) / 8.0).ceil().max(1.0) as i32;
        let mut e = y0.ceil() as i32;
        while e <= y1.floor() as i32 {
            let y = sy(10f64.powi(e));
            let _ = writeln!(
                s,
                r##"<line x1="{ML}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="#ddd"/><text x="{}" y="{:.2}" text-anchor="end">1e{e}</text>"##,
                W - MR,
                ML - 6.0,
                y + 4.0
            );
            e += ystep;
        }
        if let Some(f) = self.floor.filter(|f| *f > 0.0) {
            let y = sy(f);
            let _ = writeln!(
                s,
                r##"<line x1="{ML}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="#999" stroke-dasharray="6 4"/><text x="{}" y="{:.2}" fill="#666" text-anchor="end">noise floor</text>"##,
                W - MR,
                W - MR - 4.0,
                y - 4.0
            );
        }
        for &(x, y, err) in &pts {
            let (cx, cy) = (sx(x), sy(y));
            if err > 0.0 && y - err > 0.0 {
                let _ = writeln!(
                    s,
                    r##"<line x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}" stroke="#36c"/>"##,
                    sy(y + err),
                    sy(y - err)
                );
            }
            let _ = writeln!(s, r##"<circle cx="{cx:.2}" cy="{cy:.2}" r="2.5" fill="#36c"/>"##);
        }
        if let Some((p, a, (lo, hi))) = self.fit {
            let (ya, yb) = (a * lo.powf(p), a * hi.powf(p));
            if ya > 0.0 && yb > 0.0 {
                let _ = writeln!(
                    s,
                    r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#c33" stroke-width="2"/>"##,
                    sx(lo),
                    sy(ya),
                    sx(hi),
                    sy(yb)
                );
            }
            let _ = writeln!(
                s,
                r##"<text x="{}" y="{}" fill="#c33">slope {p:.3}</text>"##,
                ML + 10.0,
                MT + 18.0
            );
        }
        let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, esc(self.title));
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, (ML + W - MR) / 2.0, H - 16.0, esc(self.xlabel));
        let _ = writeln!(
            s,
            r#"<text x="20" y="{}" text-anchor="middle" transform="rotate(-90 20 {})">{}</text>"#,
            (MT + H - MB) / 2.0,
            (MT + H - MB) / 2.0,
            esc(self.ylabel)
        );
        s.push_str("</svg>\n");
        s
    }
}

fn bounds(v: &[f64]) -> (f64, f64) {
    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo < 1e-9 {
        (lo - 0.5, hi + 0.5)
    } else {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_with_digest_comment() {
        let x = [1.0, 2.0, 4.0];
        let y = [1.0, 0.25, 0.0625];
        let p = Plot {
            title: "S(k) <test>",
            xlabel: "k",
            ylabel: "S",
            data: Series {
                x: &x,
                y: &y,
                err: &[0.1, 0.01, 0.0],
            },
            fit: Some((-2.0, 1.0, (1.0, 4.0))),
            floor: Some(1e-3),
            csv_sha256: "abc123",
        };
        let svg = p.render();
        assert!(svg.contains("<!-- csv-sha256: abc123 -->"));
        assert!(svg.contains("&lt;test&gt;"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<circle").count(), 3);
    }
}
