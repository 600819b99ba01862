//! Finite-dimensional curve families over `M2`: polygonal lines, Bezier
//! curves and piecewise geodesics, plus the sampling map that turns a dense
//! curve into control points and the kinetic path energy.
//!
//! Polygonal and Bezier curves are linear in their control points once the
//! control angles are unwrapped onto a continuous branch, so both are exposed
//! through [`basis_weights`] for the solver's chain rule. Piecewise geodesics
//! carry one velocity per segment and are evaluated with the exponential map.

use crate::error::{Error, Result};
use crate::geometry::{
    angle_diff, exp_map, geodesic_flow, norm_sq_at, shoot_geodesic, IntegratorConfig, ManifoldPoint, MetricParams, TangentVector,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DiscretizationScheme {
    Polygonal,
    Bezier,
    PiecewiseGeodesic,
}

impl DiscretizationScheme {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Polygonal => "polygonal",
            Self::Bezier => "bezier",
            Self::PiecewiseGeodesic => "geodesic",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "polygonal" | "polygon" => Some(Self::Polygonal),
            "bezier" => Some(Self::Bezier),
            "geodesic" | "piecewise-geodesic" | "piecewise_geodesic" => Some(Self::PiecewiseGeodesic),
            _ => None,
        }
    }

    /// Whether evaluation is a fixed linear combination of (unwrapped) controls.
    pub fn is_linear(&self) -> bool {
        !matches!(self, Self::PiecewiseGeodesic)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteCurve {
    scheme: DiscretizationScheme,
    controls: Vec<ManifoldPoint>,
    velocities: Option<Vec<TangentVector>>,
    amplitudes: Option<Vec<f64>>,
}

impl DiscreteCurve {
    pub fn new(
        scheme: DiscretizationScheme,
        controls: Vec<ManifoldPoint>,
        velocities: Option<Vec<TangentVector>>,
        amplitudes: Option<Vec<f64>>,
    ) -> Result<Self> {
        if controls.len() < 2 {
            return Err(Error::InvalidParams(format!("a curve needs at least 2 controls, got {}", controls.len())));
        }
        if controls.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParams("non-finite control point".into()));
        }
        match (&scheme, &velocities) {
            (DiscretizationScheme::PiecewiseGeodesic, Some(v)) if v.len() + 1 == controls.len() => {
                if v.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidParams("non-finite segment velocity".into()));
                }
            }
            (DiscretizationScheme::PiecewiseGeodesic, Some(v)) => {
                return Err(Error::InvalidParams(format!(
                    "{} controls need {} velocities, got {}",
                    controls.len(),
                    controls.len() - 1,
                    v.len()
                )))
            }
            (DiscretizationScheme::PiecewiseGeodesic, None) => {
                return Err(Error::InvalidParams("piecewise-geodesic curves need segment velocities".into()))
            }
            (_, Some(_)) => return Err(Error::InvalidParams("only piecewise-geodesic curves carry velocities".into())),
            (_, None) => {}
        }
        if let Some(a) = &amplitudes {
            if a.len() != controls.len() {
                return Err(Error::InvalidParams(format!("{} amplitudes for {} controls", a.len(), controls.len())));
            }
            if a.iter().any(|a| !a.is_finite()) {
                return Err(Error::InvalidParams("non-finite amplitude".into()));
            }
        }
        Ok(Self { scheme, controls, velocities, amplitudes })
    }

    pub fn polygonal(controls: Vec<ManifoldPoint>) -> Result<Self> {
        Self::new(DiscretizationScheme::Polygonal, controls, None, None)
    }

    pub fn bezier(controls: Vec<ManifoldPoint>) -> Result<Self> {
        Self::new(DiscretizationScheme::Bezier, controls, None, None)
    }

    pub fn piecewise_geodesic(controls: Vec<ManifoldPoint>, velocities: Vec<TangentVector>) -> Result<Self> {
        Self::new(DiscretizationScheme::PiecewiseGeodesic, controls, Some(velocities), None)
    }

    pub fn with_amplitudes(self, amplitudes: Vec<f64>) -> Result<Self> {
        Self::new(self.scheme, self.controls, self.velocities, Some(amplitudes))
    }

    pub fn scheme(&self) -> DiscretizationScheme {
        self.scheme
    }

    pub fn controls(&self) -> &[ManifoldPoint] {
        &self.controls
    }

    pub fn velocities(&self) -> Option<&[TangentVector]> {
        self.velocities.as_deref()
    }

    pub fn amplitudes(&self) -> Option<&[f64]> {
        self.amplitudes.as_deref()
    }

    pub fn n_controls(&self) -> usize {
        self.controls.len()
    }

    pub fn n_segments(&self) -> usize {
        self.controls.len() - 1
    }

    /// Control angles lifted to a continuous branch: successive differences lie in `(-pi, pi]`.
    pub fn unwrapped_thetas(&self) -> Vec<f64> {
        unwrap_thetas(&self.controls)
    }

    /// Control coordinates `[x, y, theta_unwrapped]`.
    pub fn control_coords(&self) -> Vec<[f64; 3]> {
        self.controls.iter().zip(self.unwrapped_thetas()).map(|(c, th)| [c.x, c.y, th]).collect()
    }

    /// Same scheme and amplitudes, controls translated in the plane.
    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        let mut out = self.clone();
        for c in &mut out.controls {
            c.x += dx;
            c.y += dy;
        }
        out
    }

    /// Evaluation with the scheme's own rule. Piecewise geodesics use `params`
    /// and the given integrator.
    pub fn eval(&self, t: f64, params: MetricParams, integ: &IntegratorConfig) -> Result<ManifoldPoint> {
        match self.scheme {
            DiscretizationScheme::Polygonal => Ok(eval_polygonal(self, t)),
            DiscretizationScheme::Bezier => Ok(eval_bezier(self, t)),
            DiscretizationScheme::PiecewiseGeodesic => eval_piecewise_geodesic(self, t, params, integ),
        }
    }

    /// Amplitude at time `t`, blended like the positions (linearly on geodesic segments).
    pub fn amplitude_at(&self, t: f64) -> Option<f64> {
        let a = self.amplitudes.as_ref()?;
        let scheme = match self.scheme {
            DiscretizationScheme::Bezier => DiscretizationScheme::Bezier,
            _ => DiscretizationScheme::Polygonal,
        };
        let w = basis_weights(scheme, a.len(), t);
        Some(w.iter().zip(a).map(|(w, a)| w * a).sum())
    }
}

pub(crate) fn unwrap_thetas(controls: &[ManifoldPoint]) -> Vec<f64> {
    let mut out = Vec::with_capacity(controls.len());
    let mut prev = controls[0].theta();
    out.push(prev);
    for c in &controls[1..] {
        prev += angle_diff(prev, c.theta());
        out.push(prev);
    }
    out
}

/// Segment index and local parameter `s in [0, 1]` for `n_segments` uniform segments.
pub(crate) fn locate(t: f64, n_segments: usize) -> (usize, f64) {
    let t = t.clamp(0.0, 1.0);
    let u = t * n_segments as f64;
    let k = (u.floor() as usize).min(n_segments - 1);
    (k, u - k as f64)
}

pub fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Bernstein basis `B_{k,n}(t)` for `k = 0..=n`.
pub fn bernstein(n: usize, t: f64) -> Vec<f64> {
    (0..=n).map(|k| binomial(n, k) * t.powi(k as i32) * (1.0 - t).powi((n - k) as i32)).collect()
}

/// Weights `w_k(t)` with `curve(t) = sum_k w_k(t) c_k` for the linear schemes.
pub fn basis_weights(scheme: DiscretizationScheme, n_controls: usize, t: f64) -> Vec<f64> {
    match scheme {
        DiscretizationScheme::Bezier => bernstein(n_controls - 1, t),
        _ => {
            let mut w = vec![0.0; n_controls];
            let (k, s) = locate(t, n_controls - 1);
            w[k] = 1.0 - s;
            w[k + 1] = s;
            w
        }
    }
}

/// Weights of the time derivative, `curve'(t) = sum_k w'_k(t) c_k`.
pub fn basis_derivative_weights(scheme: DiscretizationScheme, n_controls: usize, t: f64) -> Vec<f64> {
    let n = n_controls - 1;
    match scheme {
        DiscretizationScheme::Bezier => {
            let lower = bernstein(n - 1, t);
            let mut w = vec![0.0; n_controls];
            for (k, b) in lower.iter().enumerate() {
                w[k] -= n as f64 * b;
                w[k + 1] += n as f64 * b;
            }
            w
        }
        _ => {
            let mut w = vec![0.0; n_controls];
            let (k, _) = locate(t, n);
            w[k] = -(n as f64);
            w[k + 1] = n as f64;
            w
        }
    }
}

fn combine(weights: &[f64], coords: &[[f64; 3]]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for (w, c) in weights.iter().zip(coords) {
        for i in 0..3 {
            out[i] += w * c[i];
        }
    }
    out
}

/// Linear interpolation on the active segment, angle along the shortest arc.
pub fn eval_polygonal(c: &DiscreteCurve, t: f64) -> ManifoldPoint {
    let (k, s) = locate(t, c.n_segments());
    let a = &c.controls[k];
    let d = a.delta_to(&c.controls[k + 1]);
    ManifoldPoint::new(a.x + s * d.dx, a.y + s * d.dy, a.theta() + s * d.dtheta)
}

/// De Casteljau evaluation on the unwrapped control coordinates.
pub fn de_casteljau(coords: &[[f64; 3]], t: f64) -> [f64; 3] {
    let mut work = coords.to_vec();
    for level in 1..work.len() {
        for i in 0..work.len() - level {
            for d in 0..3 {
                work[i][d] = (1.0 - t) * work[i][d] + t * work[i + 1][d];
            }
        }
    }
    work[0]
}

pub fn eval_bezier(c: &DiscreteCurve, t: f64) -> ManifoldPoint {
    de_casteljau(&c.control_coords(), t.clamp(0.0, 1.0)).into()
}

/// `Exp_{c_k}(s v_k)` on segment `k`, where `s` is the local segment parameter.
pub fn eval_piecewise_geodesic(
    c: &DiscreteCurve,
    t: f64,
    params: MetricParams,
    integ: &IntegratorConfig,
) -> Result<ManifoldPoint> {
    let v = c.velocities.as_ref().ok_or_else(|| Error::InvalidParams("curve has no segment velocities".into()))?;
    let (k, s) = locate(t, c.n_segments());
    if s == 0.0 {
        return Ok(c.controls[k]);
    }
    exp_map(&c.controls[k], &v[k].scale(s), params, integ)
}

/// Time derivative of the curve. At a knot the right-hand segment is used,
/// except at `t = 1`.
pub fn velocity(c: &DiscreteCurve, t: f64, params: MetricParams, integ: &IntegratorConfig) -> Result<TangentVector> {
    match c.scheme {
        DiscretizationScheme::PiecewiseGeodesic => {
            let v = c.velocities.as_ref().ok_or_else(|| Error::InvalidParams("curve has no segment velocities".into()))?;
            let (k, s) = locate(t, c.n_segments());
            let (_, vel) = geodesic_flow(&c.controls[k], &v[k], s, params, integ)?;
            Ok(vel.scale(c.n_segments() as f64))
        }
        scheme => Ok(combine(&basis_derivative_weights(scheme, c.n_controls(), t), &c.control_coords()).into()),
    }
}

/// Dense samples of a curve on `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledCurve {
    times: Vec<f64>,
    points: Vec<ManifoldPoint>,
    amps: Option<Vec<f64>>,
}

impl SampledCurve {
    pub fn new(times: Vec<f64>, points: Vec<ManifoldPoint>, amps: Option<Vec<f64>>) -> Result<Self> {
        if times.len() != points.len() || amps.as_ref().is_some_and(|a| a.len() != times.len()) {
            return Err(Error::InvalidParams("sample lengths disagree".into()));
        }
        if times.len() < 2 {
            return Err(Error::InsufficientSamples(times.len()));
        }
        if times[0] != 0.0 || *times.last().unwrap() != 1.0 || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParams("sample times must increase strictly from 0 to 1".into()));
        }
        Ok(Self { times, points, amps })
    }

    /// `n + 1` uniform samples of `f` (with optional amplitude) on `[0, 1]`.
    pub fn from_fn(n: usize, f: impl Fn(f64) -> (ManifoldPoint, Option<f64>)) -> Result<Self> {
        if n < 1 {
            return Err(Error::InsufficientSamples(n + 1));
        }
        let times: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
        let vals: Vec<_> = times.iter().map(|&t| f(t)).collect();
        let amps = if vals.iter().all(|v| v.1.is_some()) { Some(vals.iter().map(|v| v.1.unwrap()).collect()) } else { None };
        Self::new(times, vals.into_iter().map(|v| v.0).collect(), amps)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn points(&self) -> &[ManifoldPoint] {
        &self.points
    }

    pub fn amps(&self) -> Option<&[f64]> {
        self.amps.as_deref()
    }

    /// Linear interpolation between samples, angle along the shortest arc.
    pub fn interpolate(&self, t: f64) -> (ManifoldPoint, Option<f64>) {
        let t = t.clamp(0.0, 1.0);
        let i = match self.times.binary_search_by(|v| v.total_cmp(&t)) {
            Ok(i) => return (self.points[i], self.amps.as_ref().map(|a| a[i])),
            Err(i) => i.clamp(1, self.times.len() - 1),
        };
        let (t0, t1) = (self.times[i - 1], self.times[i]);
        let s = (t - t0) / (t1 - t0);
        let a = &self.points[i - 1];
        let d = a.delta_to(&self.points[i]);
        let p = ManifoldPoint::new(a.x + s * d.dx, a.y + s * d.dy, a.theta() + s * d.dtheta);
        (p, self.amps.as_ref().map(|am| am[i - 1] + s * (am[i] - am[i - 1])))
    }
}

/// The sampling map: controls are the curve values at the uniform knots
/// `k / (k_n - 1)`. Piecewise-geodesic velocities start as flat coordinate
/// differences; see [`chain_velocities`] to make the segments interpolate.
pub fn sample_map(samples: &SampledCurve, scheme: DiscretizationScheme, k_n: usize) -> Result<DiscreteCurve> {
    if samples.times.len() < 2 {
        return Err(Error::InsufficientSamples(samples.times.len()));
    }
    if k_n < 2 {
        return Err(Error::InvalidParams(format!("need at least 2 controls, got {k_n}")));
    }
    let vals: Vec<_> = (0..k_n).map(|k| samples.interpolate(k as f64 / (k_n - 1) as f64)).collect();
    let controls: Vec<ManifoldPoint> = vals.iter().map(|v| v.0).collect();
    let amps = samples.amps.as_ref().map(|_| vals.iter().map(|v| v.1.unwrap()).collect());
    let velocities = (scheme == DiscretizationScheme::PiecewiseGeodesic).then(|| flat_velocities(&controls));
    DiscreteCurve::new(scheme, controls, velocities, amps)
}

pub(crate) fn flat_velocities(controls: &[ManifoldPoint]) -> Vec<TangentVector> {
    controls.windows(2).map(|w| w[0].delta_to(&w[1])).collect()
}

/// Replaces every segment velocity by a shooting solution of
/// `Exp_{c_k}(v_k) = c_{k+1}`, started from the current velocity.
pub fn chain_velocities(c: &DiscreteCurve, params: MetricParams, integ: &IntegratorConfig, tol: f64) -> Result<DiscreteCurve> {
    let v = c.velocities.as_ref().ok_or_else(|| Error::InvalidParams("curve has no segment velocities".into()))?;
    let mut out = Vec::with_capacity(v.len());
    for (k, vk) in v.iter().enumerate() {
        out.push(shoot_geodesic(&c.controls[k], &c.controls[k + 1], *vk, params, integ, tol, 100)?);
    }
    DiscreteCurve::new(c.scheme, c.controls.clone(), Some(out), c.amplitudes.clone())
}

/// Largest chaining defect `||Exp_{c_k}(v_k) - c_{k+1}||` over the segments.
pub fn chaining_defect(c: &DiscreteCurve, params: MetricParams, integ: &IntegratorConfig) -> Result<f64> {
    let Some(v) = c.velocities.as_ref() else { return Ok(0.0) };
    let mut worst = 0.0f64;
    for (k, vk) in v.iter().enumerate() {
        let end = exp_map(&c.controls[k], vk, params, integ)?;
        worst = worst.max(end.coord_distance(&c.controls[k + 1]));
    }
    Ok(worst)
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pm) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureConfig {
    /// Gauss-Legendre nodes per inter-control segment.
    pub nodes_per_segment: usize,
    /// 2 integrates the squared metric norm, 1 the plain norm.
    pub energy_exponent: u8,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self { nodes_per_segment: 8, energy_exponent: 2 }
    }
}

/// Composite Gauss-Legendre rule on `[0, 1]` split into `panels` equal panels.
pub fn composite_rule(panels: usize, nodes: usize) -> Vec<(f64, f64)> {
    let (x, w) = gauss_legendre(nodes);
    let h = 1.0 / panels as f64;
    let mut out = Vec::with_capacity(panels * nodes);
    for p in 0..panels {
        let a = p as f64 * h;
        for (xi, wi) in x.iter().zip(&w) {
            out.push((a + 0.5 * h * (xi + 1.0), 0.5 * h * wi));
        }
    }
    out
}

fn integrand(n2: f64, exponent: u8) -> f64 {
    if exponent == 1 {
        n2.max(0.0).sqrt()
    } else {
        n2
    }
}

/// `int_0^1 ||curve'(t)||_g^p dt` with `p = energy_exponent`.
///
/// Piecewise geodesics have constant metric speed on every segment, so their
/// energy is read off the segment velocities at the segment start.
pub fn path_energy(c: &DiscreteCurve, params: MetricParams, quad: &QuadratureConfig) -> f64 {
    let segs = c.n_segments() as f64;
    match c.scheme {
        DiscretizationScheme::PiecewiseGeodesic => {
            let v = c.velocities.as_ref().expect("validated on construction");
            c.controls
                .iter()
                .zip(v)
                .map(|(p, v)| {
                    let n2 = norm_sq_at(p.theta(), v.to_array(), params);
                    if quad.energy_exponent == 1 {
                        n2.sqrt()
                    } else {
                        segs * n2
                    }
                })
                .sum()
        }
        scheme => {
            let coords = c.control_coords();
            let nodes = quad.nodes_per_segment.max(2);
            composite_rule(c.n_segments(), nodes)
                .into_iter()
                .map(|(t, w)| {
                    let pos = combine(&basis_weights(scheme, coords.len(), t), &coords);
                    let vel = combine(&basis_derivative_weights(scheme, coords.len(), t), &coords);
                    w * integrand(norm_sq_at(pos[2], vel, params), quad.energy_exponent)
                })
                .sum()
        }
    }
}

/// `int_0^1 ||f'(t)||_g^p dt` for an analytic curve `f(t) -> (point coords, velocity)`,
/// by composite Gauss-Legendre with `panels` panels of `nodes` nodes.
pub fn path_energy_analytic(
    f: impl Fn(f64) -> ([f64; 3], [f64; 3]),
    params: MetricParams,
    panels: usize,
    nodes: usize,
    exponent: u8,
) -> f64 {
    composite_rule(panels, nodes)
        .into_iter()
        .map(|(t, w)| {
            let (p, v) = f(t);
            w * integrand(norm_sq_at(p[2], v, params), exponent)
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    fn pt(x: f64, y: f64, th: f64) -> ManifoldPoint {
        ManifoldPoint::new(x, y, th)
    }

    #[test]
    fn polygonal_examples() {
        let c = DiscreteCurve::polygonal(vec![pt(0.0, 0.0, 0.0), pt(1.0, 0.0, 0.0)]).unwrap();
        assert_eq!(eval_polygonal(&c, 0.5), pt(0.5, 0.0, 0.0));
        assert_eq!(eval_polygonal(&c, 0.0), c.controls()[0]);
        assert_eq!(eval_polygonal(&c, 1.0), c.controls()[1]);
        let c = DiscreteCurve::polygonal(vec![pt(0.0, 0.0, 0.1), pt(0.0, 0.0, 6.2)]).unwrap();
        // the short arc runs backwards through 0
        let forward = 0.1 + 0.5 * (6.2 - 0.1);
        let backward = (0.1 + 0.5 * (6.2 - TAU - 0.1)).rem_euclid(TAU);
        let th = eval_polygonal(&c, 0.5).theta();
        assert!((th - backward).abs() < 1e-12 && (th - forward).abs() > 1.0);
        assert!((th - 0.0084).abs() < 1e-4);
    }

    #[test]
    fn bezier_examples() {
        let seg = DiscreteCurve::bezier(vec![pt(0.0, 0.0, 0.0), pt(1.0, 0.0, 0.0)]).unwrap();
        assert_eq!(eval_bezier(&seg, 0.5), pt(0.5, 0.0, 0.0));
        let c = DiscreteCurve::bezier(vec![pt(0.0, 0.0, 0.0), pt(1.0, 2.0, 0.0), pt(2.0, 0.0, 0.0)]).unwrap();
        let mid = eval_bezier(&c, 0.5);
        // Bernstein sum: 0.25 c0 + 0.5 c1 + 0.25 c2
        assert!((mid.x - 1.0).abs() < 1e-12 && (mid.y - 1.0).abs() < 1e-12);
        assert_eq!(eval_bezier(&c, 0.0), c.controls()[0]);
        assert!(eval_bezier(&c, 1.0).coord_distance(&c.controls()[2]) < 1e-15);
    }

    #[test]
    fn bezier_velocity_matches_difference_quotient() {
        let c = DiscreteCurve::bezier(vec![pt(0.0, 0.0, 0.0), pt(1.0, 2.0, 0.0), pt(2.0, 0.0, 0.0)]).unwrap();
        let prm = MetricParams::euclidean();
        let integ = IntegratorConfig::default();
        let v = velocity(&c, 0.5, prm, &integ).unwrap();
        let h = 1e-6;
        let fd = (eval_bezier(&c, 0.5 + h).x - eval_bezier(&c, 0.5 - h).x) / (2.0 * h);
        assert!((v.dx - 2.0).abs() < 1e-12 && (fd - 2.0).abs() < 1e-8 && v.dy.abs() < 1e-12);
        let v0 = velocity(&c, 0.0, prm, &integ).unwrap();
        assert!((v0.dx - 2.0).abs() < 1e-12 && (v0.dy - 4.0).abs() < 1e-12);
    }

    #[test]
    fn polygonal_velocity_is_segment_slope() {
        let c = DiscreteCurve::polygonal(vec![pt(0.0, 0.0, 0.0), pt(1.0, 0.0, 0.0)]).unwrap();
        for t in [0.0, 0.3, 1.0] {
            let v = velocity(&c, t, MetricParams::euclidean(), &IntegratorConfig::default()).unwrap();
            assert_eq!(v, TangentVector::new(1.0, 0.0, 0.0));
        }
    }

    #[test]
    fn piecewise_geodesic_knots_and_flat_case() {
        let controls = vec![pt(0.0, 0.0, 0.0), pt(0.5, 0.2, 0.4), pt(0.9, -0.1, 1.0)];
        let c = DiscreteCurve::piecewise_geodesic(controls.clone(), flat_velocities(&controls)).unwrap();
        let poly = DiscreteCurve::polygonal(controls.clone()).unwrap();
        let integ = IntegratorConfig::default();
        let flat = MetricParams::euclidean();
        assert_eq!(eval_piecewise_geodesic(&c, 0.5, MetricParams::new(0.2, 1.0).unwrap(), &integ).unwrap(), controls[1]);
        for t in [0.1, 0.25, 0.6, 0.99] {
            let a = eval_piecewise_geodesic(&c, t, flat, &integ).unwrap();
            assert!(a.coord_distance(&eval_polygonal(&poly, t)) < 1e-8);
        }
    }

    #[test]
    fn piecewise_geodesic_midpoint_refines() {
        let controls = vec![pt(0.0, 0.0, 0.0), pt(0.5, 0.1, 0.3)];
        let c = DiscreteCurve::piecewise_geodesic(controls.clone(), flat_velocities(&controls)).unwrap();
        let prm = MetricParams::new(0.5, 1.0).unwrap();
        let a = eval_piecewise_geodesic(&c, 0.5, prm, &IntegratorConfig::rk4(32)).unwrap();
        let b = eval_piecewise_geodesic(&c, 0.5, prm, &IntegratorConfig::rk4(320)).unwrap();
        assert!(a.coord_distance(&b) < 1e-6);
        let direct = exp_map(&controls[0], &c.velocities().unwrap()[0].scale(0.5), prm, &IntegratorConfig::rk4(32)).unwrap();
        assert_eq!(a, direct);
    }

    #[test]
    fn construction_invariants() {
        let two = vec![pt(0.0, 0.0, 0.0), pt(1.0, 0.0, 0.0)];
        assert!(DiscreteCurve::polygonal(vec![pt(0.0, 0.0, 0.0)]).is_err());
        assert!(DiscreteCurve::piecewise_geodesic(two.clone(), vec![]).is_err());
        assert!(DiscreteCurve::new(DiscretizationScheme::Bezier, two.clone(), Some(vec![TangentVector::ZERO]), None).is_err());
        assert!(DiscreteCurve::bezier(two.clone()).unwrap().with_amplitudes(vec![1.0]).is_err());
        assert!(DiscreteCurve::bezier(two).unwrap().with_amplitudes(vec![1.0, 0.5]).is_ok());
    }

    #[test]
    fn sample_map_examples() {
        let constant = SampledCurve::from_fn(10, |_| (pt(0.3, -0.2, 1.0), None)).unwrap();
        let c = sample_map(&constant, DiscretizationScheme::Bezier, 5).unwrap();
        assert!(c.controls().iter().all(|p| *p == pt(0.3, -0.2, 1.0)));
        assert!(matches!(SampledCurve::new(vec![0.0], vec![pt(0.0, 0.0, 0.0)], None), Err(Error::InsufficientSamples(1))));

        // sampling a polygonal curve at its own knots gives back its controls
        let poly =
            DiscreteCurve::polygonal(vec![pt(0.0, 0.0, 0.0), pt(0.4, 0.3, 0.5), pt(-0.2, 0.6, 1.5), pt(0.1, 0.1, 3.0)]).unwrap();
        let dense = SampledCurve::from_fn(300, |t| (eval_polygonal(&poly, t), None)).unwrap();
        let back = sample_map(&dense, DiscretizationScheme::Polygonal, 4).unwrap();
        for (a, b) in back.controls().iter().zip(poly.controls()) {
            assert!(a.coord_distance(b) < 1e-12);
        }
    }

    #[test]
    fn spiral_sampling_improves_with_more_controls() {
        let spiral = |t: f64| pt(0.5 * t * (6.0 * t).cos(), 0.5 * t * (6.0 * t).sin(), 6.0 * t);
        let dense = SampledCurve::from_fn(999, |t| (spiral(t), None)).unwrap();
        let sup = |k| {
            let c = sample_map(&dense, DiscretizationScheme::Polygonal, k).unwrap();
            (0..=2000).map(|i| i as f64 / 2000.0).map(|t| eval_polygonal(&c, t).planar_distance(&spiral(t))).fold(0.0, f64::max)
        };
        assert!(sup(16) <= sup(8));
    }

    #[test]
    fn path_energy_examples() {
        let q = QuadratureConfig::default();
        let seg = DiscreteCurve::polygonal(vec![pt(0.0, 0.0, 0.0), pt(1.0, 0.0, 0.0)]).unwrap();
        assert!((path_energy(&seg, MetricParams::euclidean(), &q) - 1.0).abs() < 1e-12);
        let side = DiscreteCurve::polygonal(vec![pt(0.0, 0.0, 0.0), pt(0.0, 1.0, 0.0)]).unwrap();
        assert!((path_energy(&side, MetricParams::new(0.05, 1.0).unwrap(), &q) - 400.0).abs() < 1e-9);

        let bez = DiscreteCurve::bezier(vec![pt(0.0, 0.0, 0.0), pt(1.0, 2.0, 0.0), pt(2.0, 0.0, 0.0)]).unwrap();
        // trapezoid oracle with 1e5 intervals on the analytic derivative (2, 4 - 8t)
        let n = 100_000;
        let f = |t: f64| 4.0 + (4.0 - 8.0 * t).powi(2);
        let trap: f64 = (0..=n)
            .map(|i| {
                let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                w * f(i as f64 / n as f64)
            })
            .sum::<f64>()
            / n as f64;
        let e = path_energy(&bez, MetricParams::euclidean(), &q);
        assert!((e - trap).abs() / trap < 1e-6, "{e} {trap}");
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(8);
        let s: f64 = w.iter().sum();
        assert!((s - 2.0).abs() < 1e-14);
        let i14: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(14)).sum();
        assert!((i14 - 2.0 / 15.0).abs() < 1e-14);
        let (x1, w1) = gauss_legendre(1);
        assert!(x1[0].abs() < 1e-15 && (w1[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn amplitude_channel_blends_with_scheme() {
        let c = DiscreteCurve::bezier(vec![pt(0.0, 0.0, 0.0), pt(1.0, 0.0, 0.0), pt(2.0, 0.0, 0.0)])
            .unwrap()
            .with_amplitudes(vec![1.0, 0.0, 1.0])
            .unwrap();
        assert!((c.amplitude_at(0.5).unwrap() - 0.5).abs() < 1e-15);
        assert!(DiscreteCurve::bezier(vec![pt(0.0, 0.0, 0.0), pt(1.0, 0.0, 0.0)]).unwrap().amplitude_at(0.5).is_none());
    }
}
