//! Line-plus-band SVG charts written by hand.

use std::fmt::Write as _;

use statrs::distribution::{ContinuousCDF, StudentsT};

/// Two-sided 95% Student-t quantile for `n` samples.
pub fn t_quantile_95(n: usize) -> f64 {
    assert!(n >= 2, "t-interval needs at least two samples");
    StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.975)
}

/// Mean curve with an optional 95% t-band.
#[derive(Debug, Clone, PartialEq)]
pub struct Band {
    pub mean: Vec<f64>,
    /// `(lower, upper)` per point; `None` with a single series.
    pub bounds: Option<Vec<(f64, f64)>>,
}

/// Pointwise mean and t-interval over equally long series.
pub fn mean_band(series: &[Vec<f64>]) -> Band {
    let n = series.len();
    let len = series.iter().map(Vec::len).min().unwrap_or(0);
    let mean: Vec<f64> = (0..len).map(|k| series.iter().map(|s| s[k]).sum::<f64>() / n as f64).collect();
    if n < 2 {
        return Band { mean, bounds: None };
    }
    let t = t_quantile_95(n);
    let bounds = (0..len)
        .map(|k| {
            let m = mean[k];
            let var = series.iter().map(|s| (s[k] - m).powi(2)).sum::<f64>() / (n - 1) as f64;
            let half = t * (var / n as f64).sqrt();
            (m - half, m + half)
        })
        .collect();
    Band {
        mean,
        bounds: Some(bounds),
    }
}

pub struct Series {
    pub label: String,
    pub x: Vec<f64>,
    pub band: Band,
}

pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
    pub series: Vec<Series>,
}

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];
const W: f64 = 720.0;
const H: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 190.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64>, log: bool) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values.filter(|v| v.is_finite() && (!log || *v > 0.0)) {
            let v = if log { v.log10() } else { v };
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        if hi - lo < 1e-12 {
            lo -= 0.5;
            hi += 0.5;
        }
        Self { lo, hi, log }
    }

    /// Maps a data value to `[0, 1]`; non-positive values on a log axis
    /// sit at the bottom.
    fn unit(&self, v: f64) -> f64 {
        let v = if self.log {
            if v > 0.0 {
                v.log10()
            } else {
                self.lo
            }
        } else {
            v
        };
        ((v - self.lo) / (self.hi - self.lo)).clamp(0.0, 1.0)
    }

    fn ticks(&self) -> Vec<(f64, String)> {
        if self.log {
            let (a, b) = (self.lo.floor() as i32, self.hi.ceil() as i32);
            let step = ((b - a) / 8).max(1);
            (a..=b)
                .step_by(step as usize)
                .map(|e| e as f64)
                .filter(|e| *e >= self.lo - 1e-9 && *e <= self.hi + 1e-9)
                .map(|e| (10f64.powf(e), format!("1e{e}")))
                .collect()
        } else {
            let span = self.hi - self.lo;
            let raw = span / 5.0;
            let mag = 10f64.powf(raw.log10().floor());
            let step = [1.0, 2.0, 5.0, 10.0].iter().map(|s| s * mag).find(|s| *s >= raw).unwrap_or(raw);
            let mut v = (self.lo / step).ceil() * step;
            let mut out = Vec::new();
            while v <= self.hi + 1e-9 * span {
                out.push((v, format!("{}", (v / step).round() * step)));
                v += step;
            }
            out
        }
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl Chart {
    pub fn to_svg(&self) -> String {
        let xs = self.series.iter().flat_map(|s| s.x.iter().copied());
        let ys = self.series.iter().flat_map(|s| {
            let b = s.band.bounds.iter().flatten().flat_map(|(l, u)| [*l, *u]);
            s.band.mean.iter().copied().chain(b.collect::<Vec<_>>())
        });
        let (ax, ay) = (Axis::fit(xs, self.log_x), Axis::fit(ys, self.log_y));
        let pw = W - LEFT - RIGHT;
        let ph = H - TOP - BOTTOM;
        let px = |v: f64| LEFT + ax.unit(v) * pw;
        let py = |v: f64| TOP + (1.0 - ay.unit(v)) * ph;

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
            LEFT + pw / 2.0,
            escape(&self.title)
        );
        for (v, label) in ax.ticks() {
            let x = px(v);
            let _ = writeln!(s, r##"<line x1="{x:.2}" y1="{TOP}" x2="{x:.2}" y2="{:.2}" stroke="#eee"/>"##, TOP + ph);
            let _ = writeln!(s, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{label}</text>"#, TOP + ph + 16.0);
        }
        for (v, label) in ay.ticks() {
            let y = py(v);
            let _ = writeln!(s, r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#eee"/>"##, LEFT + pw);
            let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{label}</text>"#, LEFT - 6.0, y + 4.0);
        }
        let _ = writeln!(
            s,
            r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            LEFT + pw / 2.0,
            H - 10.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
            TOP + ph / 2.0,
            TOP + ph / 2.0,
            escape(&self.y_label)
        );

        for (i, series) in self.series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let n = series.x.len().min(series.band.mean.len());
            if let Some(bounds) = &series.band.bounds {
                let upper = (0..n).map(|k| format!("{:.2},{:.2}", px(series.x[k]), py(bounds[k].1)));
                let lower = (0..n).rev().map(|k| format!("{:.2},{:.2}", px(series.x[k]), py(bounds[k].0)));
                let pts: Vec<String> = upper.chain(lower).collect();
                let _ = writeln!(
                    s,
                    r#"<polygon points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
                    pts.join(" ")
                );
            }
            let pts: Vec<String> = (0..n)
                .map(|k| format!("{:.2},{:.2}", px(series.x[k]), py(series.band.mean[k])))
                .collect();
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.8"/>"#,
                pts.join(" ")
            );
            let ly = TOP + 10.0 + 18.0 * i as f64;
            let lx = W - RIGHT + 12.0;
            let _ = writeln!(
                s,
                r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="3"/>"#,
                lx + 20.0
            );
            let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, lx + 26.0, ly + 4.0, escape(&series.label));
        }
        s.push_str("</svg>\n");
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_series_have_zero_width() {
        let b = mean_band(&vec![vec![3.0, 2.0, 1.0]; 4]);
        assert_eq!(b.mean, vec![3.0, 2.0, 1.0]);
        for (m, (l, u)) in b.mean.iter().zip(b.bounds.unwrap()) {
            assert_eq!((l, u), (*m, *m));
        }
    }

    #[test]
    fn single_series_has_no_band() {
        assert!(mean_band(&[vec![1.0, 0.5]]).bounds.is_none());
    }

    #[test]
    fn svg_is_well_formed_enough() {
        let chart = Chart {
            title: "a < b".into(),
            x_label: "iteration".into(),
            y_label: "regret".into(),
            log_x: false,
            log_y: true,
            series: vec![Series {
                label: "gitbo".into(),
                x: vec![1.0, 2.0, 3.0],
                band: mean_band(&[vec![1.0, 0.1, 0.0], vec![2.0, 0.2, 0.01]]),
            }],
        };
        let svg = chart.to_svg();
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        assert!(svg.contains("a &lt; b"));
        assert!(svg.contains("<polygon") && svg.contains("<polyline"));
    }
}
