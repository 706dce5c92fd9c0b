//! Minimal SVG diagnostics: polylines on a framed plot area.

use std::fmt::Write;

use pe_consensus::{LogLogFit, SweepRow, Trajectory};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const MARGIN: f64 = 60.0;
/// Points per polyline before thinning kicks in.
const MAX_POINTS: usize = 2000;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2",
];

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn new(x: (f64, f64), y: (f64, f64)) -> Self {
        Frame {
            x: widen(x),
            y: widen(y),
        }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN - (y - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - 2.0 * MARGIN)
    }

    fn polyline(&self, out: &mut String, points: &[(f64, f64)], colour: &str, extra: &str) {
        let _ = write!(out, r#"<polyline fill="none" stroke="{colour}" stroke-width="1.2"{extra} points=""#);
        for &(x, y) in points {
            let _ = write!(out, "{:.2},{:.2} ", self.px(x), self.py(y));
        }
        out.push_str("\"/>\n");
    }
}

fn widen((lo, hi): (f64, f64)) -> (f64, f64) {
    if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

fn header(title: &str, frame: &Frame, xlabel: &str, ylabel: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{title}</text>"#, WIDTH / 2.0);
    let (l, r, t, b) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(s, r#"<rect x="{l}" y="{t}" width="{}" height="{}" fill="none" stroke="black"/>"#, r - l, b - t);
    for (v, anchor, x) in [(frame.x.0, "start", l), (frame.x.1, "end", r)] {
        let _ = writeln!(s, r#"<text x="{x}" y="{}" text-anchor="{anchor}">{}</text>"#, b + 18.0, fmt_tick(v));
    }
    for (v, y) in [(frame.y.0, b), (frame.y.1, t + 10.0)] {
        let _ = writeln!(s, r#"<text x="{}" y="{y}" text-anchor="end">{}</text>"#, l - 6.0, fmt_tick(v));
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{xlabel}</text>"#, WIDTH / 2.0, HEIGHT - 16.0);
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{ylabel}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    );
    s
}

fn fmt_tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

/// Agent positions against time for a one-dimensional trajectory.
pub fn trajectory(traj: &Trajectory) -> String {
    let samples = traj.samples();
    let stride = samples.len().div_ceil(MAX_POINTS).max(1);
    let mut picked: Vec<_> = samples.iter().step_by(stride).collect();
    if picked.last().map(|s| s.t()) != Some(traj.last().t()) {
        picked.push(traj.last());
    }
    let (lo, hi) = samples
        .iter()
        .flat_map(|s| s.coords().iter().copied())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let frame = Frame::new((0.0, traj.last().t()), (lo, hi));

    let mut out = header("agent positions", &frame, "t", "x");
    for agent in 0..traj.first().n() {
        let points: Vec<(f64, f64)> = picked.iter().map(|s| (s.t(), s.coords()[agent])).collect();
        frame.polyline(&mut out, &points, PALETTE[agent % PALETTE.len()], "");
    }
    out.push_str("</svg>\n");
    out
}

/// Mean consensus time against `mu` on log-log axes, with the fitted line.
pub fn loglog(rows: &[SweepRow], fit: Option<LogLogFit>) -> String {
    let points: Vec<(f64, f64)> = rows.iter().map(|r| (r.mu.ln(), r.mean_time.ln())).collect();
    let span = |f: fn(&(f64, f64)) -> f64| {
        points
            .iter()
            .map(f)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
    };
    let frame = Frame::new(span(|p| p.0), span(|p| p.1));

    let mut out = header("mean consensus time", &frame, "ln mu", "ln time");
    for &(x, y) in &points {
        let _ = writeln!(
            out,
            r##"<circle cx="{:.2}" cy="{:.2}" r="4" fill="#1f77b4"/>"##,
            frame.px(x),
            frame.py(y)
        );
    }
    if let Some(f) = fit {
        let line: Vec<(f64, f64)> = [frame.x.0, frame.x.1]
            .iter()
            .map(|&x| (x, f.intercept + f.slope * x))
            .collect();
        frame.polyline(&mut out, &line, "#d62728", r#" stroke-dasharray="6 4""#);
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}">slope {:.3}, r^2 {:.4}</text>"#,
            MARGIN + 8.0,
            MARGIN + 18.0,
            f.slope,
            f.r_squared
        );
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use pe_consensus::State;

    #[test]
    fn trajectory_plot_has_one_line_per_agent() {
        let samples = (0..5)
            .map(|k| State::from_scalars(k as f64, &[0.0, 1.0 - 0.1 * k as f64, 2.0]).unwrap())
            .collect();
        let svg = trajectory(&Trajectory::new(samples).unwrap());
        assert_eq!(svg.matches("<polyline").count(), 3);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn loglog_draws_fit_only_when_present() {
        let row = |mu: f64, t: f64| SweepRow {
            mu,
            mean_time: t,
            std: 0.0,
            min: t,
            max: t,
            n_unconverged: 0,
        };
        let rows = [row(1.0, 4.0), row(0.1, 40.0)];
        let fit = LogLogFit {
            slope: -1.0,
            intercept: 4f64.ln(),
            r_squared: 1.0,
        };
        assert_eq!(loglog(&rows, Some(fit)).matches("<polyline").count(), 1);
        assert_eq!(loglog(&rows[..1], None).matches("<polyline").count(), 0);
        assert_eq!(loglog(&rows, None).matches("<circle").count(), 2);
    }
}
