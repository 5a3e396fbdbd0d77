//! Deterministic SVG line charts of learning curves.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anoseqs::metrics::MetricsRow;

use crate::error::{HarnessError, Result};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const TICKS: usize = 5;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#7f7f7f", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub rows: Vec<MetricsRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    EpisodicReturn,
    EpisodicCostRate,
    TotalCostRate,
}

impl Metric {
    pub const ALL: [Metric; 3] = [
        Metric::EpisodicReturn,
        Metric::EpisodicCostRate,
        Metric::TotalCostRate,
    ];

    pub fn file_stem(&self) -> &'static str {
        match self {
            Metric::EpisodicReturn => "episodic_return",
            Metric::EpisodicCostRate => "episodic_cost_rate",
            Metric::TotalCostRate => "total_cost_rate",
        }
    }

    pub fn title(&self) -> &'static str {
        match self {
            Metric::EpisodicReturn => "Episodic return",
            Metric::EpisodicCostRate => "Episodic cost rate",
            Metric::TotalCostRate => "Total cost rate",
        }
    }

    pub fn value(&self, r: &MetricsRow) -> f64 {
        match self {
            Metric::EpisodicReturn => r.episodic_return_mean,
            Metric::EpisodicCostRate => r.episodic_cost_rate_mean,
            Metric::TotalCostRate => r.total_cost_rate,
        }
    }
}

/// Pointwise mean of runs that share a step column.
pub fn average_runs(runs: &[Vec<MetricsRow>]) -> Result<Vec<MetricsRow>> {
    let first = runs
        .first()
        .ok_or_else(|| HarnessError::Plot("no runs to average".into()))?;
    for r in runs {
        if r.len() != first.len() || r.iter().zip(first).any(|(a, b)| a.step != b.step) {
            return Err(HarnessError::Plot("runs do not share a step column".into()));
        }
    }
    let n = runs.len() as f64;
    Ok((0..first.len())
        .map(|i| {
            let mean = |f: fn(&MetricsRow) -> f64| runs.iter().map(|r| f(&r[i])).sum::<f64>() / n;
            MetricsRow {
                step: first[i].step,
                episodic_return_mean: mean(|r| r.episodic_return_mean),
                episodic_cost_rate_mean: mean(|r| r.episodic_cost_rate_mean),
                total_cost_rate: mean(|r| r.total_cost_rate),
            }
        })
        .collect())
}

/// Axis range covering `[lo, hi]`; a degenerate range is widened.
fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if hi > lo {
        (lo, hi)
    } else {
        let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.5 };
        (lo - pad, hi + pad)
    }
}

fn fmt_tick(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-3..1e5).contains(&a) {
        format!("{v:.2e}")
    } else if a >= 100.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Axis ranges `(x_min, x_max, y_min, y_max)` of a chart.
pub fn ranges(series: &[Series], metric: Metric) -> Result<(f64, f64, f64, f64)> {
    let points: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|s| s.rows.iter().map(move |r| (r.step as f64, metric.value(r))))
        .filter(|(_, y)| y.is_finite())
        .collect();
    if points.is_empty() {
        return Err(HarnessError::Plot("no data points to plot".into()));
    }
    let fold = |f: fn(f64, f64) -> f64, init: f64, pick: fn(&(f64, f64)) -> f64| {
        points.iter().map(pick).fold(init, f)
    };
    let (x0, x1) = padded(
        fold(f64::min, f64::INFINITY, |p| p.0),
        fold(f64::max, f64::NEG_INFINITY, |p| p.0),
    );
    let (y0, y1) = padded(
        fold(f64::min, f64::INFINITY, |p| p.1),
        fold(f64::max, f64::NEG_INFINITY, |p| p.1),
    );
    Ok((x0, x1, y0, y1))
}

pub fn render_svg(series: &[Series], metric: Metric) -> Result<String> {
    if series.is_empty() || series.iter().all(|s| s.rows.is_empty()) {
        return Err(HarnessError::Plot("empty input".into()));
    }
    let (x0, x1, y0, y1) = ranges(series, metric)?;
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + ph - (y - y0) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        metric.title()
    );
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for i in 0..=TICKS {
        let f = i as f64 / TICKS as f64;
        let xv = x0 + f * (x1 - x0);
        let yv = y0 + f * (y1 - y0);
        let (px, py) = (sx(xv), sy(yv));
        let _ = writeln!(
            s,
            r#"<line x1="{px:.2}" y1="{:.2}" x2="{px:.2}" y2="{:.2}" stroke="black"/><text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            TOP + ph,
            TOP + ph + 5.0,
            TOP + ph + 18.0,
            fmt_tick(xv)
        );
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{py:.2}" x2="{LEFT}" y2="{py:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 5.0,
            LEFT - 8.0,
            py + 4.0,
            fmt_tick(yv)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">environment steps</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 10.0
    );
    for (k, ser) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts: Vec<String> = ser
            .rows
            .iter()
            .filter(|r| metric.value(r).is_finite())
            .map(|r| format!("{:.2},{:.2}", sx(r.step as f64), sy(metric.value(r))))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            pts.join(" ")
        );
        let ly = TOP + 14.0 + 14.0 * k as f64;
        let lx = LEFT + pw - 150.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{ly:.2}">{}</text>"#,
            ly - 4.0,
            lx + 18.0,
            ly - 4.0,
            lx + 22.0,
            escape(&ser.label)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Writes `<metric>.svg` for each of the three metrics into `dir`.
pub fn write_metric_plots(series: &[Series], dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    Metric::ALL
        .iter()
        .map(|m| {
            let path = dir.join(format!("{}.svg", m.file_stem()));
            fs::write(&path, render_svg(series, *m)?)?;
            Ok(path)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(offset: f64) -> Vec<MetricsRow> {
        (1..=5)
            .map(|i| MetricsRow {
                step: i * 1000,
                episodic_return_mean: offset + i as f64,
                episodic_cost_rate_mean: 0.1 / i as f64,
                total_cost_rate: 0.02,
            })
            .collect()
    }

    fn two() -> Vec<Series> {
        vec![
            Series {
                label: "TD3".into(),
                rows: rows(0.0),
            },
            Series {
                label: "AnoSeqs".into(),
                rows: rows(-2.0),
            },
        ]
    }

    #[test]
    fn one_polyline_per_series() {
        for m in Metric::ALL {
            let svg = render_svg(&two(), m).unwrap();
            assert_eq!(svg.matches("<polyline").count(), 2);
        }
    }

    #[test]
    fn rendering_is_deterministic() {
        assert_eq!(
            render_svg(&two(), Metric::EpisodicReturn).unwrap(),
            render_svg(&two(), Metric::EpisodicReturn).unwrap()
        );
    }

    #[test]
    fn ranges_cover_data() {
        let (x0, x1, y0, y1) = ranges(&two(), Metric::EpisodicReturn).unwrap();
        assert!(x0 <= 1000.0 && x1 >= 5000.0);
        assert!(y0 <= -1.0 && y1 >= 5.0);
        let (_, _, y0, y1) = ranges(&two(), Metric::TotalCostRate).unwrap();
        assert!(y0 < 0.02 && y1 > 0.02);
    }

    #[test]
    fn empty_input_rejected() {
        assert!(render_svg(&[], Metric::EpisodicReturn).is_err());
        let empty = [Series {
            label: "x".into(),
            rows: vec![],
        }];
        assert!(render_svg(&empty, Metric::EpisodicReturn).is_err());
    }

    #[test]
    fn averaging_requires_shared_steps() {
        let avg = average_runs(&[rows(0.0), rows(2.0)]).unwrap();
        assert_eq!(avg[0].episodic_return_mean, 2.0);
        let mut other = rows(0.0);
        other[1].step = 1500;
        assert!(average_runs(&[rows(0.0), other]).is_err());
    }
}
