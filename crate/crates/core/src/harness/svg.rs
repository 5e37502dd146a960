//! Minimal SVG line charts.

use std::fmt::Write;

use super::sweep::SweepResult;
use super::train::MetricTrace;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 70.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Left,
    Right,
}

#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    pub axis: Axis,
    pub dashed: bool,
}

#[derive(Debug, Clone)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub y2_label: Option<String>,
    pub log_x: bool,
    pub series: Vec<Series>,
}

#[derive(Debug, Clone, Copy)]
struct Range {
    lo: f64,
    hi: f64,
}

impl Range {
    fn of(values: impl Iterator<Item = f64>) -> Self {
        let (lo, hi) = values
            .filter(|v| v.is_finite())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        if !lo.is_finite() {
            return Self { lo: 0.0, hi: 1.0 };
        }
        if hi - lo < 1e-12 {
            let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.1 };
            return Self {
                lo: lo - pad,
                hi: hi + pad,
            };
        }
        Self { lo, hi }
    }

    fn frac(&self, v: f64) -> f64 {
        (v - self.lo) / (self.hi - self.lo)
    }

    fn ticks(&self, n: usize) -> Vec<f64> {
        (0..=n)
            .map(|i| self.lo + (self.hi - self.lo) * i as f64 / n as f64)
            .collect()
    }
}

fn fmt_tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.1e}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl Chart {
    pub fn render(&self) -> String {
        let tx = |x: f64| if self.log_x { x.log10() } else { x };
        let xr = Range::of(self.series.iter().flat_map(|s| s.points.iter().map(|p| tx(p.0))));
        let yr = |axis: Axis| {
            Range::of(
                self.series
                    .iter()
                    .filter(|s| s.axis == axis)
                    .flat_map(|s| s.points.iter().map(|p| p.1)),
            )
        };
        let (yl, yr2) = (yr(Axis::Left), yr(Axis::Right));
        let pw = WIDTH - LEFT - RIGHT;
        let ph = HEIGHT - TOP - BOTTOM;
        let px = |x: f64| LEFT + xr.frac(tx(x)) * pw;
        let py = |y: f64, r: &Range| TOP + (1.0 - r.frac(y)) * ph;

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
            WIDTH / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            s,
            r##"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="#333"/>"##
        );
        for t in xr.ticks(5) {
            let x = LEFT + xr.frac(t) * pw;
            let label = if self.log_x { fmt_tick(10f64.powf(t)) } else { fmt_tick(t) };
            let _ = writeln!(
                s,
                r##"<line x1="{x:.2}" y1="{}" x2="{x:.2}" y2="{}" stroke="#333"/><text x="{x:.2}" y="{}" text-anchor="middle">{label}</text>"##,
                TOP + ph,
                TOP + ph + 5.0,
                TOP + ph + 18.0
            );
        }
        for t in yl.ticks(5) {
            let y = py(t, &yl);
            let _ = writeln!(
                s,
                r##"<line x1="{}" y1="{y:.2}" x2="{LEFT}" y2="{y:.2}" stroke="#333"/><text x="{}" y="{:.2}" text-anchor="end">{}</text>"##,
                LEFT - 5.0,
                LEFT - 8.0,
                y + 4.0,
                fmt_tick(t)
            );
        }
        let has_right = self.series.iter().any(|s| s.axis == Axis::Right);
        if has_right {
            for t in yr2.ticks(5) {
                let y = py(t, &yr2);
                let _ = writeln!(
                    s,
                    r##"<line x1="{}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="#333"/><text x="{}" y="{:.2}">{}</text>"##,
                    LEFT + pw,
                    LEFT + pw + 5.0,
                    LEFT + pw + 8.0,
                    y + 4.0,
                    fmt_tick(t)
                );
            }
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            LEFT + pw / 2.0,
            HEIGHT - 15.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="18" y="{0}" text-anchor="middle" transform="rotate(-90 18 {0})">{1}</text>"#,
            TOP + ph / 2.0,
            escape(&self.y_label)
        );
        if let (true, Some(label)) = (has_right, &self.y2_label) {
            let x = WIDTH - 15.0;
            let _ = writeln!(
                s,
                r#"<text x="{x}" y="{0}" text-anchor="middle" transform="rotate(90 {x} {0})">{1}</text>"#,
                TOP + ph / 2.0,
                escape(label)
            );
        }
        for (i, series) in self.series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let range = if series.axis == Axis::Left { &yl } else { &yr2 };
            let pts: Vec<String> = series
                .points
                .iter()
                .filter(|p| p.0.is_finite() && p.1.is_finite() && (!self.log_x || p.0 > 0.0))
                .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y, range)))
                .collect();
            let dash = if series.dashed { r#" stroke-dasharray="6 4""# } else { "" };
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.8"{dash} points="{}"/>"#,
                pts.join(" ")
            );
            let ly = TOP + 14.0 + 15.0 * i as f64;
            let _ = writeln!(
                s,
                r#"<line x1="{0}" y1="{ly}" x2="{1}" y2="{ly}" stroke="{color}" stroke-width="2"{dash}/><text x="{2}" y="{3}">{4}</text>"#,
                LEFT + 10.0,
                LEFT + 30.0,
                LEFT + 35.0,
                ly + 4.0,
                escape(&series.name)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

fn lambda_name(lambda: f64) -> String {
    format!("λ={lambda:.1e}")
}

/// Epoch OUI per run.
pub fn oui_vs_epoch(runs: &[(f64, &MetricTrace)]) -> String {
    Chart {
        title: "OUI vs epoch".into(),
        x_label: "epoch".into(),
        y_label: "OUI".into(),
        y2_label: None,
        log_x: false,
        series: runs
            .iter()
            .map(|(l, t)| Series {
                name: lambda_name(*l),
                points: t.epochs.iter().map(|e| (e.epoch as f64, e.oui)).collect(),
                axis: Axis::Left,
                dashed: false,
            })
            .collect(),
    }
    .render()
}

/// Training (solid) and validation (dashed) loss per run.
pub fn loss_curves(runs: &[(f64, &MetricTrace)]) -> String {
    let series = runs
        .iter()
        .flat_map(|(l, t)| {
            [
                Series {
                    name: format!("{} train", lambda_name(*l)),
                    points: t.epochs.iter().map(|e| (e.epoch as f64, e.train_loss)).collect(),
                    axis: Axis::Left,
                    dashed: false,
                },
                Series {
                    name: format!("{} val", lambda_name(*l)),
                    points: t.epochs.iter().map(|e| (e.epoch as f64, e.val_loss)).collect(),
                    axis: Axis::Left,
                    dashed: true,
                },
            ]
        })
        .collect();
    Chart {
        title: "Loss curves".into(),
        x_label: "epoch".into(),
        y_label: "cross-entropy".into(),
        y2_label: None,
        log_x: false,
        series,
    }
    .render()
}

/// MVA (left axis) and final OUI (right axis) against λ on a log axis.
pub fn mva_oui_vs_lambda(sweep: &SweepResult) -> String {
    Chart {
        title: "MVA and final OUI vs weight decay".into(),
        x_label: "weight decay λ".into(),
        y_label: "max validation accuracy".into(),
        y2_label: Some("final OUI".into()),
        log_x: true,
        series: vec![
            Series {
                name: "MVA".into(),
                points: sweep.runs.iter().map(|r| (r.lambda, r.mva)).collect(),
                axis: Axis::Left,
                dashed: false,
            },
            Series {
                name: "final OUI".into(),
                points: sweep.runs.iter().map(|r| (r.lambda, r.final_oui)).collect(),
                axis: Axis::Right,
                dashed: true,
            },
        ],
    }
    .render()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_polyline_per_series() {
        let c = Chart {
            title: "a < b".into(),
            x_label: "x".into(),
            y_label: "y".into(),
            y2_label: Some("z".into()),
            log_x: true,
            series: vec![
                Series {
                    name: "s1".into(),
                    points: vec![(1e-4, 0.5), (1e-3, 0.6), (1e-2, 0.55)],
                    axis: Axis::Left,
                    dashed: false,
                },
                Series {
                    name: "s2".into(),
                    points: vec![(1e-4, 0.9), (1e-2, 0.2)],
                    axis: Axis::Right,
                    dashed: true,
                },
            ],
        };
        let svg = c.render();
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("a &lt; b"));
    }

    #[test]
    fn constant_series_does_not_divide_by_zero() {
        let c = Chart {
            title: String::new(),
            x_label: String::new(),
            y_label: String::new(),
            y2_label: None,
            log_x: false,
            series: vec![Series {
                name: "flat".into(),
                points: vec![(1.0, 0.0), (1.0, 0.0)],
                axis: Axis::Left,
                dashed: false,
            }],
        };
        assert!(!c.render().contains("NaN"));
    }
}
