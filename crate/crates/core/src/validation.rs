//! Numerical property suites: closed-form connection vs a Koszul finite
//! difference construction, metric inverse, exponential map speed
//! conservation, discretization energy inequalities over a random corpus of
//! smooth curves, and forward/adjoint consistency of the observation model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::curves::{chain_velocities, path_energy, path_energy_analytic, DiscreteCurve, DiscretizationScheme, QuadratureConfig};
use crate::energy::{Atom, MeasureState};
use crate::geometry::{
    christoffel_at, exp_map, geodesic_trajectory, metric_at, metric_inverse_at, norm_sq_at, IntegratorConfig, ManifoldPoint,
    Mat3, MetricParams, TangentVector,
};
use crate::observation::{certificate_field, forward_stack, kernel_value, uniform_times, Frame, ObservationStack, SensorGrid};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Christoffel,
    Inverse,
    ExpMap,
    Gamma,
    Adjoint,
}

impl Suite {
    pub const ALL: [Suite; 5] = [Suite::Christoffel, Suite::Inverse, Suite::ExpMap, Suite::Gamma, Suite::Adjoint];

    pub fn name(&self) -> &'static str {
        match self {
            Suite::Christoffel => "christoffel",
            Suite::Inverse => "inverse",
            Suite::ExpMap => "expmap",
            Suite::Gamma => "gamma",
            Suite::Adjoint => "adjoint",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|x| x.name() == s.trim().to_ascii_lowercase())
    }
}

/// Outcome of one property check.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub cases: usize,
    pub max_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl CheckResult {
    fn new(name: impl Into<String>, cases: usize, max_error: f64, tolerance: f64) -> Self {
        Self { name: name.into(), cases, max_error, tolerance, passed: max_error <= tolerance }
    }
}

impl std::fmt::Display for CheckResult {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} {:<36} cases={:<4} max_error={:.3e} tol={:.1e}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.cases,
            self.max_error,
            self.tolerance
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationOptions {
    pub seed: u64,
    pub schemes: Vec<DiscretizationScheme>,
    /// Segment counts of the sampled discretizations, in refinement order.
    pub segment_counts: Vec<usize>,
    pub n_curves: usize,
    /// Metric used for the piecewise-geodesic corpus.
    pub geodesic_metric: MetricParams,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            schemes: vec![DiscretizationScheme::Polygonal, DiscretizationScheme::Bezier, DiscretizationScheme::PiecewiseGeodesic],
            segment_counts: vec![2, 4, 8, 16],
            n_curves: 50,
            geodesic_metric: MetricParams::new(0.5, 1.0).expect("valid"),
        }
    }
}

pub fn run_suite(suite: Suite, opts: &ValidationOptions) -> Result<Vec<CheckResult>> {
    Ok(match suite {
        Suite::Christoffel => christoffel_suite(100, opts.seed),
        Suite::Inverse => vec![inverse_suite(100, opts.seed)],
        Suite::ExpMap => exp_map_suite(50, opts.seed)?,
        Suite::Gamma => gamma_suite(opts)?,
        Suite::Adjoint => adjoint_suite(20, opts.seed)?,
    })
}

fn random_metric(rng: &mut ChaCha8Rng) -> MetricParams {
    MetricParams::new(rng.random_range(0.05..=1.0), rng.random_range(0.5..=100.0)).expect("in range")
}

fn max_abs_diff(a: &Mat3, b: &Mat3) -> f64 {
    a.iter().flatten().zip(b.iter().flatten()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn invert3(m: &Mat3) -> Mat3 {
    let cof = |r0: usize, r1: usize, c0: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
    let det = m[0][0] * cof(1, 2, 1, 2) - m[0][1] * cof(1, 2, 0, 2) + m[0][2] * cof(1, 2, 0, 1);
    let adj = [
        [cof(1, 2, 1, 2), -cof(0, 2, 1, 2), cof(0, 1, 1, 2)],
        [-cof(1, 2, 0, 2), cof(0, 2, 0, 2), -cof(0, 1, 0, 2)],
        [cof(1, 2, 0, 1), -cof(0, 2, 0, 1), cof(0, 1, 0, 1)],
    ];
    adj.map(|r| r.map(|v| v / det))
}

/// `d g / d theta` by Richardson-extrapolated central differences.
fn metric_derivative_fd(theta: f64, params: MetricParams, h: f64) -> Mat3 {
    let central = |h: f64| {
        let (a, b) = (metric_at(theta + h, params), metric_at(theta - h, params));
        let mut d = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                d[i][j] = (a[i][j] - b[i][j]) / (2.0 * h);
            }
        }
        d
    };
    let (d1, d2) = (central(h), central(h / 2.0));
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (4.0 * d2[i][j] - d1[i][j]) / 3.0;
        }
    }
    out
}

/// Connection coefficients `[k][i][j]` from the Koszul formula
/// `1/2 g^{kl} (d_i g_jl + d_j g_il - d_l g_ij)`, with metric derivatives by
/// finite differences and the inverse by cofactors. Only the orientation
/// coordinate enters the metric.
pub fn koszul_christoffel(theta: f64, params: MetricParams) -> [Mat3; 3] {
    let g = metric_at(theta, params);
    let ginv = invert3(&g);
    let dg_theta = metric_derivative_fd(theta, params, 1e-3);
    let dg = |l: usize, i: usize, j: usize| if l == 2 { dg_theta[i][j] } else { 0.0 };
    let mut out = [[[0.0; 3]; 3]; 3];
    for (k, gk) in out.iter_mut().enumerate() {
        for i in 0..3 {
            for j in 0..3 {
                gk[i][j] = 0.5 * (0..3).map(|l| ginv[k][l] * (dg(i, j, l) + dg(j, i, l) - dg(l, i, j))).sum::<f64>();
            }
        }
    }
    out
}

pub fn christoffel_suite(n_cases: usize, seed: u64) -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut worst_flat = 0.0f64;
    for _ in 0..n_cases {
        let theta = rng.random_range(0.0..std::f64::consts::TAU);
        let params = random_metric(&mut rng);
        let closed = christoffel_at(theta, params).gamma;
        let oracle = koszul_christoffel(theta, params);
        for k in 0..3 {
            worst = worst.max(max_abs_diff(&closed[k], &oracle[k]));
        }
        let flat = christoffel_at(theta, MetricParams::new(1.0, params.xi()).expect("valid")).gamma;
        worst_flat = worst_flat.max(flat.iter().flatten().flatten().fold(0.0, |m, v| m.max(v.abs())));
    }
    vec![
        CheckResult::new("christoffel_vs_koszul", n_cases, worst, 1e-6),
        CheckResult::new("christoffel_flat_zero", n_cases, worst_flat, 1e-12),
    ]
}

pub fn inverse_suite(n_cases: usize, seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x1);
    let mut worst = 0.0f64;
    for _ in 0..n_cases {
        let theta = rng.random_range(0.0..std::f64::consts::TAU);
        let params = random_metric(&mut rng);
        let (g, gi) = (metric_at(theta, params), metric_inverse_at(theta, params));
        for i in 0..3 {
            for j in 0..3 {
                let p: f64 = (0..3).map(|l| g[i][l] * gi[l][j]).sum();
                worst = worst.max((p - if i == j { 1.0 } else { 0.0 }).abs());
            }
        }
    }
    CheckResult::new("metric_inverse", n_cases, worst, 1e-10)
}

pub fn exp_map_suite(n_cases: usize, seed: u64) -> Result<Vec<CheckResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x2);
    let integ = IntegratorConfig::dp54(1e-11, 1e-12);
    let mut worst_speed = 0.0f64;
    let mut worst_line = 0.0f64;
    for _ in 0..n_cases {
        let params = random_metric(&mut rng);
        let p = ManifoldPoint::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(0.0..std::f64::consts::TAU),
        );
        let raw: [f64; 3] = [rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal)];
        // unit metric speed
        let s = norm_sq_at(p.theta(), raw, params).sqrt();
        let v = TangentVector::new(raw[0] / s, raw[1] / s, raw[2] / s);
        let v0 = norm_sq_at(p.theta(), v.to_array(), params).sqrt();
        for (_, q, w) in geodesic_trajectory(&p, &v, params, &integ)? {
            let speed = norm_sq_at(q.theta(), w.to_array(), params).sqrt();
            worst_speed = worst_speed.max((speed - v0).abs() / v0);
        }

        let flat = MetricParams::new(1.0, params.xi()).expect("valid");
        for t in [0.25, 0.5, 1.0] {
            let q = exp_map(&p, &v.scale(t), flat, &IntegratorConfig::default())?;
            let line = ManifoldPoint::new(p.x + t * v.dx, p.y + t * v.dy, p.theta() + t * v.dtheta);
            let dth = crate::geometry::angle_diff(line.theta(), q.theta()).abs();
            worst_line = worst_line.max((q.x - line.x).abs().max((q.y - line.y).abs()).max(dth));
        }
    }
    Ok(vec![
        CheckResult::new("expmap_speed_conservation", n_cases, worst_speed, 1e-5),
        CheckResult::new("expmap_flat_straight", n_cases, worst_line, 1e-8),
    ])
}

/// A smooth random curve `t -> (coords, velocity)` on `[0, 1]`: a chord plus
/// three sine modes per coordinate.
#[derive(Debug, Clone)]
pub struct SmoothCurve {
    start: [f64; 3],
    chord: [f64; 3],
    modes: [[(f64, f64); 3]; 3],
}

impl SmoothCurve {
    pub fn random(rng: &mut ChaCha8Rng) -> Self {
        let mut start = [0.0; 3];
        let mut chord = [0.0; 3];
        let mut modes = [[(0.0, 0.0); 3]; 3];
        for c in 0..3 {
            start[c] = rng.random_range(-0.5..0.5);
            chord[c] = rng.random_range(-0.6..0.6);
            for (m, mode) in modes[c].iter_mut().enumerate() {
                let amp = if c == 2 { 0.3 } else { 0.2 } / (m + 1) as f64;
                *mode = (rng.random_range(-amp..amp), rng.random_range(0.0..std::f64::consts::TAU));
            }
        }
        Self { start, chord, modes }
    }

    pub fn eval(&self, t: f64) -> ([f64; 3], [f64; 3]) {
        let mut p = [0.0; 3];
        let mut v = [0.0; 3];
        for c in 0..3 {
            p[c] = self.start[c] + self.chord[c] * t;
            v[c] = self.chord[c];
            for (m, (a, ph)) in self.modes[c].iter().enumerate() {
                let w = std::f64::consts::PI * (m + 1) as f64;
                p[c] += a * (w * t + ph).sin();
                v[c] += a * w * (w * t + ph).cos();
            }
        }
        (p, v)
    }

    pub fn dense_energy(&self, params: MetricParams) -> f64 {
        path_energy_analytic(|t| self.eval(t), params, 512, 8, 2)
    }

    /// Controls at the uniform knots of `segments` segments; geodesic
    /// segments are shot so that they interpolate consecutive knots.
    pub fn discretize(
        &self,
        scheme: DiscretizationScheme,
        segments: usize,
        params: MetricParams,
        integ: &IntegratorConfig,
    ) -> Result<DiscreteCurve> {
        let controls: Vec<ManifoldPoint> = (0..=segments)
            .map(|k| {
                let (p, _) = self.eval(k as f64 / segments as f64);
                ManifoldPoint::new(p[0], p[1], p[2])
            })
            .collect();
        match scheme {
            DiscretizationScheme::PiecewiseGeodesic => {
                // continuation in epsilon from the flat chords
                let v = controls.windows(2).map(|w| w[0].delta_to(&w[1])).collect();
                let mut c = DiscreteCurve::piecewise_geodesic(controls, v)?;
                let mut eps = 1.0f64;
                while eps > params.epsilon() {
                    eps = (eps * 0.7).max(params.epsilon());
                    let step = MetricParams::new(eps, params.xi())?;
                    c = chain_velocities(&c, step, integ, 1e-12)?;
                }
                Ok(c)
            }
            s => DiscreteCurve::new(s, controls, None, None),
        }
    }
}

/// Discretized energy never exceeds the dense energy, and the gap shrinks
/// along the refinement sequence. The linear schemes are checked under the
/// orientation-independent metric (`epsilon = 1`), the piecewise geodesics
/// under `opts.geodesic_metric`.
pub fn gamma_suite(opts: &ValidationOptions) -> Result<Vec<CheckResult>> {
    if opts.segment_counts.is_empty() || opts.segment_counts.contains(&0) {
        return Err(Error::InvalidParams("segment counts must be positive".into()));
    }
    let integ = IntegratorConfig::rk4(64);
    let quad = QuadratureConfig { nodes_per_segment: 16, energy_exponent: 2 };
    let mut out = Vec::new();
    for &scheme in &opts.schemes {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x3);
        let mut worst_excess = f64::NEG_INFINITY;
        let mut worst_increase = f64::NEG_INFINITY;
        for _ in 0..opts.n_curves {
            let curve = SmoothCurve::random(&mut rng);
            let params = match scheme {
                DiscretizationScheme::PiecewiseGeodesic => opts.geodesic_metric,
                _ => MetricParams::new(1.0, rng.random_range(0.5..2.0)).expect("valid"),
            };
            let dense = curve.dense_energy(params);
            let mut prev_gap = f64::INFINITY;
            for &n in &opts.segment_counts {
                let e = path_energy(&curve.discretize(scheme, n, params, &integ)?, params, &quad);
                let gap = dense - e;
                worst_excess = worst_excess.max(-gap);
                worst_increase = worst_increase.max(gap - prev_gap);
                prev_gap = gap;
            }
        }
        let counts = opts.segment_counts.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(",");
        out.push(CheckResult::new(
            format!("gamma_{}_bound[{counts}]", scheme.name()),
            opts.n_curves,
            worst_excess.max(0.0),
            1e-6,
        ));
        out.push(CheckResult::new(
            format!("gamma_{}_monotone[{counts}]", scheme.name()),
            opts.n_curves,
            worst_increase.max(0.0),
            1e-9,
        ));
    }
    Ok(out)
}

fn random_measure(rng: &mut ChaCha8Rng) -> Result<MeasureState> {
    let n = rng.random_range(1..=3);
    let atoms = (0..n)
        .map(|_| {
            let controls = (0..3)
                .map(|_| ManifoldPoint::new(rng.random_range(-0.8..0.8), rng.random_range(-0.8..0.8), rng.random_range(0.0..6.0)))
                .collect();
            let mut curve = DiscreteCurve::bezier(controls)?;
            if rng.random_bool(0.5) {
                curve = curve.with_amplitudes((0..3).map(|_| rng.random_range(0.0..2.0)).collect())?;
            }
            Ok(Atom { mass: rng.random_range(0.1..2.0), curve })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MeasureState { atoms })
}

fn random_stack(rng: &mut ChaCha8Rng, times: &[f64], grid: &SensorGrid) -> Result<ObservationStack> {
    let frames =
        times.iter().map(|_| Frame { values: (0..grid.n_nodes()).map(|_| rng.sample(StandardNormal)).collect() }).collect();
    ObservationStack::new(times.to_vec(), frames)
}

/// `<Phi m, q>` against `<m, Phi* q>`, both also against a brute-force double
/// sum over atoms and nodes; then linearity of the forward map.
pub fn adjoint_suite(n_cases: usize, seed: u64) -> Result<Vec<CheckResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x4);
    let grid = SensorGrid::new(16, 0.15)?;
    let times = uniform_times(5);
    let params = MetricParams::euclidean();
    let integ = IntegratorConfig::default();
    let mut worst_adj = 0.0f64;
    let mut worst_lin = 0.0f64;
    for _ in 0..n_cases {
        let m = random_measure(&mut rng)?;
        let q = random_stack(&mut rng, &times, &grid)?;
        let phi_m = forward_stack(&m, &times, &grid, params, &integ)?;
        let lhs = phi_m.dot(&q);

        let cert = certificate_field(q.clone(), &grid, 1.0)?;
        let mut rhs = 0.0;
        let mut brute = 0.0;
        for a in &m.atoms {
            for (i, &t) in times.iter().enumerate() {
                let p = a.curve.eval(t, params, &integ)?;
                let w = a.mass * a.curve.amplitude_at(t).unwrap_or(1.0);
                rhs += w * cert.eval(i, p.x, p.y);
                brute += w
                    * (0..grid.n_nodes())
                        .map(|j| q.frames()[i].values[j] * kernel_value(grid.node(j), (p.x, p.y), &grid))
                        .sum::<f64>();
            }
        }
        let scale = (phi_m.frobenius_norm() * q.frobenius_norm()).max(f64::MIN_POSITIVE);
        worst_adj = worst_adj.max((lhs - rhs).abs().max((lhs - brute).abs()) / scale);

        let m2 = random_measure(&mut rng)?;
        let (a, b) = (rng.random_range(0.1..3.0), rng.random_range(0.1..3.0));
        let mut sum = m.scaled(a);
        sum.atoms.extend(m2.scaled(b).atoms);
        let lhs = forward_stack(&sum, &times, &grid, params, &integ)?;
        let rhs1 = phi_m.scaled(a);
        let rhs2 = forward_stack(&m2, &times, &grid, params, &integ)?.scaled(b);
        let mut diff = 0.0f64;
        let mut norm = 0.0f64;
        for ((l, r1), r2) in lhs.frames().iter().zip(rhs1.frames()).zip(rhs2.frames()) {
            for ((l, r1), r2) in l.values.iter().zip(&r1.values).zip(&r2.values) {
                diff = diff.max((l - (r1 + r2)).abs());
                norm = norm.max(l.abs());
            }
        }
        worst_lin = worst_lin.max(diff / norm.max(f64::MIN_POSITIVE));
    }
    Ok(vec![
        CheckResult::new("adjoint_identity", n_cases, worst_adj, 1e-10),
        CheckResult::new("forward_linearity", n_cases, worst_lin, 1e-12),
    ])
}
