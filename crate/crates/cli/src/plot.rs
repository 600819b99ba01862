//! Static SVG overlays of recovered trajectories against the ground truth.
//! Every function here is a pure function of its inputs.

use std::fmt::Write as _;

use untangle::formats::ReportFile;
use untangle::geometry::ManifoldPoint;
use untangle::observation::{uniform_times, GroundTruth};
use untangle::Result;

const SAMPLES: usize = 101;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2"];
const TRUTH_COLOR: &str = "#888888";
const PANEL: f64 = 360.0;
const MARGIN: f64 = 40.0;

type Channel<'a> = (&'a str, Box<dyn Fn(&Track) -> Vec<f64> + 'a>);

struct Track {
    points: Vec<ManifoldPoint>,
    amps: Vec<f64>,
}

fn recovered_tracks(file: &ReportFile) -> Result<Vec<Track>> {
    let times = uniform_times(SAMPLES);
    file.report
        .final_state
        .atoms
        .iter()
        .map(|a| {
            let points = times.iter().map(|&t| a.curve.eval(t, file.metric, &file.integrator)).collect::<Result<Vec<_>>>()?;
            let amps = times.iter().map(|&t| a.mass * a.curve.amplitude_at(t).unwrap_or(1.0)).collect();
            Ok(Track { points, amps })
        })
        .collect()
}

fn truth_tracks(truth: &GroundTruth) -> Result<Vec<Track>> {
    let times = uniform_times(SAMPLES);
    (0..truth.curves.len())
        .map(|k| {
            let points = times.iter().map(|&t| truth.curves[k].point(t)).collect::<Result<Vec<_>>>()?;
            let amps = times.iter().map(|&t| truth.mass_at(k, t)).collect();
            Ok(Track { points, amps })
        })
        .collect()
}

/// A rectangular plotting area mapping data ranges to pixels.
struct Panel {
    x0: f64,
    y0: f64,
    w: f64,
    h: f64,
    xr: (f64, f64),
    yr: (f64, f64),
}

impl Panel {
    fn px(&self, x: f64) -> f64 {
        self.x0 + (x - self.xr.0) / (self.xr.1 - self.xr.0) * self.w
    }

    fn py(&self, y: f64) -> f64 {
        self.y0 + self.h - (y - self.yr.0) / (self.yr.1 - self.yr.0) * self.h
    }

    fn frame(&self, out: &mut String, title: &str) {
        let _ = writeln!(
            out,
            r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="#000" stroke-width="1"/>"##,
            self.x0, self.y0, self.w, self.h
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-size="13" font-family="sans-serif">{title}</text>"#,
            self.x0,
            self.y0 - 8.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-size="10" font-family="sans-serif">{:.3}</text>"#,
            self.x0 - 34.0,
            self.y0 + 10.0,
            self.yr.1
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-size="10" font-family="sans-serif">{:.3}</text>"#,
            self.x0 - 34.0,
            self.y0 + self.h,
            self.yr.0
        );
    }

    fn polyline(&self, out: &mut String, pts: impl Iterator<Item = (f64, f64)>, color: &str, dashed: bool) {
        let coords: Vec<String> = pts.map(|(x, y)| format!("{:.2},{:.2}", self.px(x), self.py(y))).collect();
        let dash = if dashed { r#" stroke-dasharray="6 4""# } else { "" };
        let _ = writeln!(out, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"{dash}/>"#, coords.join(" "));
    }

    fn dot(&self, out: &mut String, x: f64, y: f64, color: &str) {
        let _ = writeln!(out, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, self.px(x), self.py(y));
    }
}

fn header(w: f64, h: f64) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.0}\" height=\"{h:.0}\" viewBox=\"0 0 {w:.0} {h:.0}\">\n<rect width=\"100%\" height=\"100%\" fill=\"#fff\"/>\n"
    )
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    let pad = ((hi - lo) * 0.05).max(1e-6);
    (lo - pad, hi + pad)
}

/// Planar paths (truth dashed, start points dotted) on `[-1, 1]^2`, plus an
/// amplitude-vs-time panel when any curve carries an amplitude channel.
pub fn paths_svg(file: &ReportFile, truth: Option<&GroundTruth>) -> Result<String> {
    let rec = recovered_tracks(file)?;
    let tru = truth.map(truth_tracks).transpose()?.unwrap_or_default();
    let amp_panel = file.report.final_state.atoms.iter().any(|a| a.curve.amplitudes().is_some())
        || truth.is_some_and(|t| {
            t.curves.iter().any(|c| matches!(c, untangle::observation::Trajectory::Curve(c) if c.amplitudes().is_some()))
        });
    let width = if amp_panel { 3.0 * MARGIN + 2.0 * PANEL } else { 2.0 * MARGIN + PANEL };
    let mut out = header(width, 2.0 * MARGIN + PANEL);

    let plane = Panel { x0: MARGIN, y0: MARGIN, w: PANEL, h: PANEL, xr: (-1.0, 1.0), yr: (-1.0, 1.0) };
    plane.frame(&mut out, "paths");
    for t in &tru {
        plane.polyline(&mut out, t.points.iter().map(|p| (p.x, p.y)), TRUTH_COLOR, true);
    }
    for (k, r) in rec.iter().enumerate() {
        let c = PALETTE[k % PALETTE.len()];
        plane.polyline(&mut out, r.points.iter().map(|p| (p.x, p.y)), c, false);
        plane.dot(&mut out, r.points[0].x, r.points[0].y, c);
    }

    if amp_panel {
        let times = uniform_times(SAMPLES);
        let yr = range(rec.iter().chain(&tru).flat_map(|t| t.amps.iter().copied()).chain([0.0]));
        let p = Panel { x0: 2.0 * MARGIN + PANEL, y0: MARGIN, w: PANEL, h: PANEL, xr: (0.0, 1.0), yr };
        p.frame(&mut out, "amplitude vs time");
        for t in &tru {
            p.polyline(&mut out, times.iter().copied().zip(t.amps.iter().copied()), TRUTH_COLOR, true);
        }
        for (k, r) in rec.iter().enumerate() {
            p.polyline(&mut out, times.iter().copied().zip(r.amps.iter().copied()), PALETTE[k % PALETTE.len()], false);
        }
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// Per-coordinate time plots: `x(t)`, `y(t)` and the unwrapped `theta(t)`.
pub fn time_svg(file: &ReportFile, truth: Option<&GroundTruth>) -> Result<String> {
    let rec = recovered_tracks(file)?;
    let tru = truth.map(truth_tracks).transpose()?.unwrap_or_default();
    let times = uniform_times(SAMPLES);
    let unwrap = |pts: &[ManifoldPoint]| -> Vec<f64> {
        let mut out = Vec::with_capacity(pts.len());
        for p in pts {
            let th = match out.last() {
                Some(&prev) => prev + untangle::geometry::angle_diff(prev, p.theta()),
                None => p.theta(),
            };
            out.push(th);
        }
        out
    };
    let channels: [Channel; 3] = [
        ("x(t)", Box::new(|t: &Track| t.points.iter().map(|p| p.x).collect())),
        ("y(t)", Box::new(|t: &Track| t.points.iter().map(|p| p.y).collect())),
        ("theta(t)", Box::new(|t: &Track| unwrap(&t.points))),
    ];
    let height = PANEL * 0.5;
    let mut out = header(2.0 * MARGIN + PANEL * 1.5, MARGIN + 3.0 * (height + MARGIN));
    for (row, (title, f)) in channels.iter().enumerate() {
        let rec_v: Vec<Vec<f64>> = rec.iter().map(f).collect();
        let tru_v: Vec<Vec<f64>> = tru.iter().map(f).collect();
        let yr = range(rec_v.iter().chain(&tru_v).flatten().copied());
        let p = Panel { x0: MARGIN, y0: MARGIN + row as f64 * (height + MARGIN), w: PANEL * 1.5, h: height, xr: (0.0, 1.0), yr };
        p.frame(&mut out, title);
        for v in &tru_v {
            p.polyline(&mut out, times.iter().copied().zip(v.iter().copied()), TRUTH_COLOR, true);
        }
        for (k, v) in rec_v.iter().enumerate() {
            p.polyline(&mut out, times.iter().copied().zip(v.iter().copied()), PALETTE[k % PALETTE.len()], false);
        }
    }
    out.push_str("</svg>\n");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use untangle::curves::DiscreteCurve;
    use untangle::energy::{Atom, MeasureState};
    use untangle::geometry::{IntegratorConfig, MetricParams};
    use untangle::observation::{phantom_truth, PhantomId};
    use untangle::solver::{SolveReport, StopReason, WallTimes};

    fn file(amps: bool) -> ReportFile {
        let mut c = DiscreteCurve::bezier(vec![ManifoldPoint::new(-0.5, 0.0, 0.0), ManifoldPoint::new(0.5, 0.2, 0.1)]).unwrap();
        if amps {
            c = c.with_amplitudes(vec![1.0, 0.5]).unwrap();
        }
        ReportFile {
            report: SolveReport {
                final_state: MeasureState { atoms: vec![Atom { mass: 1.0, curve: c }] },
                energy_trace: vec![1.0],
                certificate_sup: vec![1.0],
                wall_times: WallTimes::default(),
                stop_reason: StopReason::CertificateBound,
            },
            metric: MetricParams::new(0.05, 1.0).unwrap(),
            integrator: IntegratorConfig::default(),
            n_times: 21,
        }
    }

    #[test]
    fn deterministic_and_well_formed() {
        let truth = phantom_truth(PhantomId::Crossing2, false).unwrap();
        let a = paths_svg(&file(false), Some(&truth)).unwrap();
        assert_eq!(a, paths_svg(&file(false), Some(&truth)).unwrap());
        assert!(a.starts_with("<svg") && a.trim_end().ends_with("</svg>"));
        assert_eq!(a.matches("<polyline").count(), 3);
        assert!(!a.contains("amplitude vs time"));
        let t = time_svg(&file(false), Some(&truth)).unwrap();
        assert_eq!(t.matches("<polyline").count(), 9);
    }

    #[test]
    fn amplitude_panel_for_unbalanced() {
        let s = paths_svg(&file(true), None).unwrap();
        assert!(s.contains("amplitude vs time"));
        let truth = phantom_truth(PhantomId::Crossing2, true).unwrap();
        assert!(paths_svg(&file(false), Some(&truth)).unwrap().contains("amplitude vs time"));
    }

    #[test]
    fn empty_report_plots() {
        let mut f = file(false);
        f.report.final_state.atoms.clear();
        let s = paths_svg(&f, None).unwrap();
        assert_eq!(s.matches("<polyline").count(), 0);
        time_svg(&f, None).unwrap();
    }
}
