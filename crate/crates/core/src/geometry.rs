//! The roto-translation manifold `M2 = R^2 x S^1` equipped with the relaxed
//! Reeds-Shepp metric.
//!
//! In the moving frame `e_theta = (cos theta, sin theta)` the squared norm of a
//! velocity `(xdot, thetadot)` at `(x, theta)` is
//!
//! ```text
//! |xdot . e_theta|^2 + eps^-2 |xdot ^ e_theta|^2 + xi^2 |thetadot|^2
//! ```
//!
//! so motion along the heading costs 1, sideways motion costs `eps^-2` and
//! turning costs `xi^2`. Every coefficient depends on `theta` only, which makes
//! the Christoffel symbols cheap closed forms.

use std::f64::consts::{PI, TAU};

use crate::error::{Error, Result};

/// Wraps an angle into `[0, 2pi)`.
pub fn wrap_angle(theta: f64) -> f64 {
    let w = theta.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Shortest signed angular difference `to - from`, in `(-pi, pi]`.
pub fn angle_diff(from: f64, to: f64) -> f64 {
    let d = (to - from).rem_euclid(TAU);
    if d > PI {
        d - TAU
    } else {
        d
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManifoldPoint {
    pub x: f64,
    pub y: f64,
    theta: f64,
}

impl ManifoldPoint {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta: wrap_angle(theta) }
    }

    pub const fn origin() -> Self {
        Self { x: 0.0, y: 0.0, theta: 0.0 }
    }

    /// Orientation in `[0, 2pi)`.
    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn set_theta(&mut self, theta: f64) {
        self.theta = wrap_angle(theta);
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.theta]
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.theta.is_finite()
    }

    /// Coordinate difference `other - self` with the angular part taken along
    /// the shortest arc.
    pub fn delta_to(&self, other: &ManifoldPoint) -> TangentVector {
        TangentVector::new(other.x - self.x, other.y - self.y, angle_diff(self.theta, other.theta))
    }

    /// Euclidean distance in coordinates, angular part along the shortest arc.
    pub fn coord_distance(&self, other: &ManifoldPoint) -> f64 {
        self.delta_to(other).euclid_norm()
    }

    pub fn planar_distance(&self, other: &ManifoldPoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

impl From<[f64; 3]> for ManifoldPoint {
    fn from(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TangentVector {
    pub dx: f64,
    pub dy: f64,
    pub dtheta: f64,
}

impl TangentVector {
    pub const ZERO: TangentVector = TangentVector { dx: 0.0, dy: 0.0, dtheta: 0.0 };

    pub const fn new(dx: f64, dy: f64, dtheta: f64) -> Self {
        Self { dx, dy, dtheta }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.dx, self.dy, self.dtheta]
    }

    pub fn scale(self, s: f64) -> Self {
        Self::new(self.dx * s, self.dy * s, self.dtheta * s)
    }

    pub fn euclid_norm(self) -> f64 {
        (self.dx * self.dx + self.dy * self.dy + self.dtheta * self.dtheta).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.dx.is_finite() && self.dy.is_finite() && self.dtheta.is_finite()
    }
}

impl std::ops::Add for TangentVector {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self::new(self.dx + o.dx, self.dy + o.dy, self.dtheta + o.dtheta)
    }
}

impl From<[f64; 3]> for TangentVector {
    fn from(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }
}

/// Relaxation `epsilon` in `(0, 1]` and angular weight `xi > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricParams {
    epsilon: f64,
    xi_ang: f64,
}

impl MetricParams {
    pub fn new(epsilon: f64, xi_ang: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(Error::InvalidParams(format!("epsilon must lie in (0, 1], got {epsilon}")));
        }
        if !(xi_ang > 0.0 && xi_ang.is_finite()) {
            return Err(Error::InvalidParams(format!("xi must be positive, got {xi_ang}")));
        }
        Ok(Self { epsilon, xi_ang })
    }

    /// The flat metric `diag(1, 1, 1)`.
    pub fn euclidean() -> Self {
        Self { epsilon: 1.0, xi_ang: 1.0 }
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn xi(&self) -> f64 {
        self.xi_ang
    }

    pub fn is_flat(&self) -> bool {
        self.epsilon == 1.0
    }
}

pub type Mat3 = [[f64; 3]; 3];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricTensor {
    pub g: Mat3,
    pub at_theta: f64,
}

impl MetricTensor {
    pub fn apply(&self, v: [f64; 3]) -> [f64; 3] {
        mat_vec(&self.g, v)
    }

    pub fn quadratic_form(&self, v: [f64; 3]) -> f64 {
        dot3(v, self.apply(v))
    }
}

/// `gamma[k][i][j]` is the connection coefficient `Gamma^k_{ij}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChristoffelSymbols {
    pub gamma: [Mat3; 3],
}

impl ChristoffelSymbols {
    /// `-Gamma^k_{ij} v^i v^j` for each `k`.
    pub fn contract_neg(&self, v: [f64; 3]) -> [f64; 3] {
        let mut out = [0.0; 3];
        for (k, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    acc += self.gamma[k][i][j] * v[i] * v[j];
                }
            }
            *o = -acc;
        }
        out
    }
}

pub(crate) fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn mat_vec(m: &Mat3, v: [f64; 3]) -> [f64; 3] {
    [dot3(m[0], v), dot3(m[1], v), dot3(m[2], v)]
}

/// Covariant metric at orientation `theta`.
pub fn metric_at(theta: f64, params: MetricParams) -> Mat3 {
    let (s, c) = theta.sin_cos();
    let inv_e2 = 1.0 / (params.epsilon * params.epsilon);
    let off = (1.0 - inv_e2) * c * s;
    [[c * c + inv_e2 * s * s, off, 0.0], [off, s * s + inv_e2 * c * c, 0.0], [0.0, 0.0, params.xi_ang * params.xi_ang]]
}

/// Derivative of [`metric_at`] with respect to `theta`.
pub fn metric_dtheta(theta: f64, params: MetricParams) -> Mat3 {
    let (s2, c2) = (2.0 * theta).sin_cos();
    let a = 1.0 - 1.0 / (params.epsilon * params.epsilon);
    [[-a * s2, a * c2, 0.0], [a * c2, a * s2, 0.0], [0.0, 0.0, 0.0]]
}

pub fn metric_tensor(p: &ManifoldPoint, params: MetricParams) -> MetricTensor {
    MetricTensor { g: metric_at(p.theta, params), at_theta: p.theta }
}

pub fn metric_inverse_at(theta: f64, params: MetricParams) -> Mat3 {
    let (s, c) = theta.sin_cos();
    let e2 = params.epsilon * params.epsilon;
    let off = (1.0 - e2) * c * s;
    [[c * c + e2 * s * s, off, 0.0], [off, s * s + e2 * c * c, 0.0], [0.0, 0.0, 1.0 / (params.xi_ang * params.xi_ang)]]
}

pub fn metric_inverse(p: &ManifoldPoint, params: MetricParams) -> MetricTensor {
    MetricTensor { g: metric_inverse_at(p.theta, params), at_theta: p.theta }
}

/// Squared metric norm at orientation `theta`, evaluated in the moving frame.
pub fn norm_sq_at(theta: f64, v: [f64; 3], params: MetricParams) -> f64 {
    let (s, c) = theta.sin_cos();
    let along = v[0] * c + v[1] * s;
    let across = v[0] * s - v[1] * c;
    along * along + across * across / (params.epsilon * params.epsilon) + params.xi_ang * params.xi_ang * v[2] * v[2]
}

pub fn metric_norm_sq(p: &ManifoldPoint, v: &TangentVector, params: MetricParams) -> f64 {
    norm_sq_at(p.theta, v.to_array(), params)
}

/// Levi-Civita connection coefficients of the relaxed Reeds-Shepp metric.
pub fn christoffel_at(theta: f64, params: MetricParams) -> ChristoffelSymbols {
    let (s, c) = theta.sin_cos();
    let cs = c * s;
    let c2 = c * c;
    let e2 = params.epsilon * params.epsilon;
    let e4 = e2 * e2;
    let xi2 = params.xi_ang * params.xi_ang;

    let x_xt = -(e4 - 1.0) / (2.0 * e2) * cs;
    let x_yt = -(e4 - (e4 - 1.0) * c2 - e2) / (2.0 * e2);
    let y_xt = ((e4 - 1.0) * c2 - e2 + 1.0) / (2.0 * e2);
    let y_yt = (e4 - 1.0) / (2.0 * e2) * cs;
    let t_xx = (e2 - 1.0) / (e2 * xi2) * cs;
    let t_xy = -(2.0 * (e2 - 1.0) * c2 - e2 + 1.0) / (2.0 * e2 * xi2);
    let t_yy = -(e2 - 1.0) / (e2 * xi2) * cs;

    symbols_from(x_xt, x_yt, y_xt, y_yt, t_xx, t_xy, t_yy)
}

/// Derivative of every connection coefficient with respect to `theta`.
pub fn christoffel_dtheta(theta: f64, params: MetricParams) -> ChristoffelSymbols {
    let (s2, c2) = (2.0 * theta).sin_cos();
    let e2 = params.epsilon * params.epsilon;
    let e4 = e2 * e2;
    let xi2 = params.xi_ang * params.xi_ang;
    let k = (e4 - 1.0) / (2.0 * e2);
    let m = (e2 - 1.0) / (e2 * xi2);

    symbols_from(-k * c2, -k * s2, -k * s2, k * c2, m * c2, m * s2, -m * c2)
}

fn symbols_from(x_xt: f64, x_yt: f64, y_xt: f64, y_yt: f64, t_xx: f64, t_xy: f64, t_yy: f64) -> ChristoffelSymbols {
    let mut gamma = [[[0.0; 3]; 3]; 3];
    gamma[0][0][2] = x_xt;
    gamma[0][2][0] = x_xt;
    gamma[0][1][2] = x_yt;
    gamma[0][2][1] = x_yt;
    gamma[1][0][2] = y_xt;
    gamma[1][2][0] = y_xt;
    gamma[1][1][2] = y_yt;
    gamma[1][2][1] = y_yt;
    gamma[2][0][0] = t_xx;
    gamma[2][0][1] = t_xy;
    gamma[2][1][0] = t_xy;
    gamma[2][1][1] = t_yy;
    ChristoffelSymbols { gamma }
}

pub fn christoffel(p: &ManifoldPoint, params: MetricParams) -> ChristoffelSymbols {
    christoffel_at(p.theta, params)
}

/// `g^-1` applied to a Euclidean gradient (a covector).
pub fn riemannian_gradient(p: &ManifoldPoint, euclid_grad: &TangentVector, params: MetricParams) -> TangentVector {
    mat_vec(&metric_inverse_at(p.theta, params), euclid_grad.to_array()).into()
}

/// Right-hand side of the first-order geodesic system: `(gamma', -Gamma(gamma', gamma'))`.
pub fn geodesic_step(state: (&ManifoldPoint, &TangentVector), params: MetricParams) -> (TangentVector, TangentVector) {
    let (p, v) = state;
    let acc = christoffel_at(p.theta, params).contract_neg(v.to_array());
    (*v, acc.into())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IntegratorMethod {
    /// Classical fourth-order Runge-Kutta with a fixed number of steps per unit time.
    Rk4Fixed { steps: usize },
    /// Dormand-Prince 5(4) with embedded error control.
    Dp54Adaptive { rtol: f64, atol: f64, max_steps: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub method: IntegratorMethod,
    /// Integration fails once any state component exceeds this magnitude.
    pub divergence_bound: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self::rk4(32)
    }
}

impl IntegratorConfig {
    pub fn rk4(steps: usize) -> Self {
        Self { method: IntegratorMethod::Rk4Fixed { steps }, divergence_bound: 1e6 }
    }

    pub fn dp54(rtol: f64, atol: f64) -> Self {
        Self { method: IntegratorMethod::Dp54Adaptive { rtol, atol, max_steps: 100_000 }, divergence_bound: 1e6 }
    }

    pub fn validate(&self) -> Result<()> {
        match self.method {
            IntegratorMethod::Rk4Fixed { steps: 0 } => Err(Error::InvalidParams("RK4 needs at least one step".into())),
            IntegratorMethod::Dp54Adaptive { rtol, atol, .. } if !(rtol > 0.0 && atol > 0.0) => {
                Err(Error::InvalidParams("DP54 tolerances must be positive".into()))
            }
            _ => Ok(()),
        }
    }
}

fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for (coef, k) in terms {
        if *coef == 0.0 {
            continue;
        }
        for i in 0..N {
            out[i] += h * coef * k[i];
        }
    }
    out
}

fn check_bound<const N: usize>(y: &[f64; N], bound: f64) -> Result<()> {
    if y.iter().all(|v| v.is_finite() && v.abs() <= bound) {
        Ok(())
    } else {
        Err(Error::IntegrationDiverged { bound })
    }
}

/// Integrates the autonomous system `y' = f(y)` from 0 to `t_end`, calling
/// `observe(t, y)` at the initial state and after every accepted step.
pub(crate) fn integrate<const N: usize>(
    f: impl Fn(&[f64; N]) -> [f64; N],
    y0: [f64; N],
    t_end: f64,
    cfg: &IntegratorConfig,
    mut observe: impl FnMut(f64, &[f64; N]),
) -> Result<[f64; N]> {
    cfg.validate()?;
    let bound = cfg.divergence_bound;
    check_bound(&y0, bound)?;
    observe(0.0, &y0);
    if t_end == 0.0 {
        return Ok(y0);
    }
    match cfg.method {
        IntegratorMethod::Rk4Fixed { steps } => {
            // steps are per unit time; partial intervals keep at least one step
            let n = ((steps as f64) * t_end.abs()).ceil().max(1.0) as usize;
            let h = t_end / n as f64;
            let mut y = y0;
            for step in 0..n {
                let k1 = f(&y);
                let k2 = f(&axpy(&y, h, &[(0.5, &k1)]));
                let k3 = f(&axpy(&y, h, &[(0.5, &k2)]));
                let k4 = f(&axpy(&y, h, &[(1.0, &k3)]));
                y = axpy(&y, h, &[(1.0 / 6.0, &k1), (1.0 / 3.0, &k2), (1.0 / 3.0, &k3), (1.0 / 6.0, &k4)]);
                check_bound(&y, bound)?;
                observe(h * (step + 1) as f64, &y);
            }
            Ok(y)
        }
        IntegratorMethod::Dp54Adaptive { rtol, atol, max_steps } => dp54(f, y0, t_end, rtol, atol, max_steps, bound, observe),
    }
}

#[allow(clippy::too_many_arguments)]
fn dp54<const N: usize>(
    f: impl Fn(&[f64; N]) -> [f64; N],
    y0: [f64; N],
    t_end: f64,
    rtol: f64,
    atol: f64,
    max_steps: usize,
    bound: f64,
    mut observe: impl FnMut(f64, &[f64; N]),
) -> Result<[f64; N]> {
    const A2: [f64; 1] = [1.0 / 5.0];
    const A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
    const A4: [f64; 3] = [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0];
    const A5: [f64; 4] = [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0];
    const A6: [f64; 5] = [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0];
    const B: [f64; 6] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0];
    const E: [f64; 7] = [71.0 / 57600.0, 0.0, -71.0 / 16695.0, 71.0 / 1920.0, -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0];

    let dir = t_end.signum();
    let span = t_end.abs();
    let mut t = 0.0;
    let mut y = y0;
    let mut h = (span * 0.01).max(1e-6).min(span);
    let mut k1 = f(&y);
    let mut steps = 0;
    while t < span {
        if steps >= max_steps {
            return Err(Error::StepLimit(max_steps));
        }
        steps += 1;
        let last = t + h >= span;
        if last {
            h = span - t;
        }
        let hs = dir * h;
        let k2 = f(&axpy(&y, hs, &[(A2[0], &k1)]));
        let k3 = f(&axpy(&y, hs, &[(A3[0], &k1), (A3[1], &k2)]));
        let k4 = f(&axpy(&y, hs, &[(A4[0], &k1), (A4[1], &k2), (A4[2], &k3)]));
        let k5 = f(&axpy(&y, hs, &[(A5[0], &k1), (A5[1], &k2), (A5[2], &k3), (A5[3], &k4)]));
        let k6 = f(&axpy(&y, hs, &[(A6[0], &k1), (A6[1], &k2), (A6[2], &k3), (A6[3], &k4), (A6[4], &k5)]));
        let y_new = axpy(&y, hs, &[(B[0], &k1), (B[2], &k3), (B[3], &k4), (B[4], &k5), (B[5], &k6)]);
        let k7 = f(&y_new);

        let mut err_sq = 0.0;
        for i in 0..N {
            let e = hs * (E[0] * k1[i] + E[2] * k3[i] + E[3] * k4[i] + E[4] * k5[i] + E[5] * k6[i] + E[6] * k7[i]);
            let scale = atol + rtol * y[i].abs().max(y_new[i].abs());
            err_sq += (e / scale) * (e / scale);
        }
        let err = (err_sq / N as f64).sqrt();
        if !err.is_finite() {
            return Err(Error::IntegrationDiverged { bound });
        }
        if err <= 1.0 {
            t = if last { span } else { t + h };
            y = y_new;
            k1 = k7;
            check_bound(&y, bound)?;
            observe(dir * t, &y);
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h *= factor;
        if h < 1e-14 * span.max(1.0) {
            return Err(Error::IntegrationDiverged { bound });
        }
    }
    Ok(y)
}

fn geodesic_rhs(y: &[f64; 6], params: MetricParams) -> [f64; 6] {
    let v = [y[3], y[4], y[5]];
    let a = christoffel_at(y[2], params).contract_neg(v);
    [v[0], v[1], v[2], a[0], a[1], a[2]]
}

fn pack(p: &ManifoldPoint, v: &TangentVector) -> [f64; 6] {
    [p.x, p.y, p.theta, v.dx, v.dy, v.dtheta]
}

/// Follows the geodesic leaving `p` with velocity `v` for time `t`.
pub fn geodesic_flow(
    p: &ManifoldPoint,
    v: &TangentVector,
    t: f64,
    params: MetricParams,
    integ: &IntegratorConfig,
) -> Result<(ManifoldPoint, TangentVector)> {
    let y = integrate(|y| geodesic_rhs(y, params), pack(p, v), t, integ, |_, _| {})?;
    Ok((ManifoldPoint::new(y[0], y[1], y[2]), TangentVector::new(y[3], y[4], y[5])))
}

/// `Exp_p(v)`: the geodesic through `p` with initial velocity `v`, evaluated at time 1.
pub fn exp_map(p: &ManifoldPoint, v: &TangentVector, params: MetricParams, integ: &IntegratorConfig) -> Result<ManifoldPoint> {
    if *v == TangentVector::ZERO {
        return Ok(*p);
    }
    geodesic_flow(p, v, 1.0, params, integ).map(|(q, _)| q)
}

/// The geodesic states `(t, point, velocity)` at every integrator node on `[0, 1]`.
pub fn geodesic_trajectory(
    p: &ManifoldPoint,
    v: &TangentVector,
    params: MetricParams,
    integ: &IntegratorConfig,
) -> Result<Vec<(f64, ManifoldPoint, TangentVector)>> {
    let mut out = Vec::new();
    integrate(
        |y| geodesic_rhs(y, params),
        pack(p, v),
        1.0,
        integ,
        |t, y| {
            out.push((t, ManifoldPoint::new(y[0], y[1], y[2]), TangentVector::new(y[3], y[4], y[5])));
        },
    )?;
    Ok(out)
}

/// Endpoint of the geodesic flow for time `t`, with the angle left unwrapped,
/// and the Jacobian of that endpoint with respect to the initial
/// `(x, y, theta, dx, dy, dtheta)`.
///
/// The Jacobian comes from integrating the variational equation alongside
/// the state with the same scheme, so for RK4 it is the exact derivative of
/// the discrete map.
pub fn geodesic_flow_jacobian(
    p: &ManifoldPoint,
    v: &TangentVector,
    t: f64,
    params: MetricParams,
    integ: &IntegratorConfig,
) -> Result<([f64; 3], [[f64; 6]; 3])> {
    const N: usize = 6 + 36;
    let mut y0 = [0.0; N];
    y0[..6].copy_from_slice(&pack(p, v));
    for i in 0..6 {
        y0[6 + i * 6 + i] = 1.0;
    }
    let rhs = |y: &[f64; N]| -> [f64; N] {
        let mut out = [0.0; N];
        let vel = [y[3], y[4], y[5]];
        let gam = christoffel_at(y[2], params);
        let dgam = christoffel_dtheta(y[2], params);
        let acc = gam.contract_neg(vel);
        let dacc_dtheta = dgam.contract_neg(vel);
        out[..3].copy_from_slice(&vel);
        out[3..6].copy_from_slice(&acc);
        // A = df/dy, rows 0..3: [0 | I], rows 3..6: [0 0 da/dtheta | da/dv]
        let mut da_dv = [[0.0; 3]; 3];
        for k in 0..3 {
            for m in 0..3 {
                let mut s = 0.0;
                for j in 0..3 {
                    s += gam.gamma[k][m][j] * vel[j];
                }
                da_dv[k][m] = -2.0 * s;
            }
        }
        // J is row-major 6x6 at y[6..]; J' = A J
        for col in 0..6 {
            let jc = |r: usize| y[6 + r * 6 + col];
            for r in 0..3 {
                out[6 + r * 6 + col] = jc(3 + r);
            }
            for k in 0..3 {
                let mut s = dacc_dtheta[k] * jc(2);
                for m in 0..3 {
                    s += da_dv[k][m] * jc(3 + m);
                }
                out[6 + (3 + k) * 6 + col] = s;
            }
        }
        out
    };
    let y = integrate(rhs, y0, t, integ, |_, _| {})?;
    let mut jac = [[0.0; 6]; 3];
    for (r, row) in jac.iter_mut().enumerate() {
        for (c, e) in row.iter_mut().enumerate() {
            *e = y[6 + r * 6 + c];
        }
    }
    Ok(([y[0], y[1], y[2]], jac))
}

/// First-order surrogate for the exponential map: `p + v` with the angle wrapped.
pub fn retraction(p: &ManifoldPoint, v: &TangentVector, _params: MetricParams) -> ManifoldPoint {
    ManifoldPoint::new(p.x + v.dx, p.y + v.dy, p.theta + v.dtheta)
}

/// Closed-form logarithm, available only for the flat metric (`epsilon = 1`).
pub fn log_flat(p: &ManifoldPoint, q: &ManifoldPoint, params: MetricParams) -> Result<TangentVector> {
    if !params.is_flat() {
        return Err(Error::LogUnavailable);
    }
    Ok(p.delta_to(q))
}

/// Newton shooting for a velocity `v` with `Exp_p(v) = q`, started from `guess`.
///
/// This is a local solver: it converges to the geodesic nearest to the guess,
/// which need not be minimizing.
pub fn shoot_geodesic(
    p: &ManifoldPoint,
    q: &ManifoldPoint,
    guess: TangentVector,
    params: MetricParams,
    integ: &IntegratorConfig,
    tol: f64,
    max_iter: usize,
) -> Result<TangentVector> {
    let target = [q.x, q.y, p.theta + angle_diff(p.theta, q.theta)];
    let mut v = guess;
    let mut residual = f64::INFINITY;
    for _ in 0..max_iter {
        let (end, jac) = geodesic_flow_jacobian(p, &v, 1.0, params, integ)?;
        let mut r = [end[0] - target[0], end[1] - target[1], end[2] - target[2]];
        // the endpoint angle is unwrapped; compare modulo full turns
        r[2] = angle_diff(target[2], end[2]);
        residual = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
        if residual <= tol {
            return Ok(v);
        }
        let jv = [[jac[0][3], jac[0][4], jac[0][5]], [jac[1][3], jac[1][4], jac[1][5]], [jac[2][3], jac[2][4], jac[2][5]]];
        let Some(step) = solve3(&jv, r) else {
            break;
        };
        // damp large Newton steps
        let norm = (step[0] * step[0] + step[1] * step[1] + step[2] * step[2]).sqrt();
        let scale = if norm > 1.0 { 1.0 / norm } else { 1.0 };
        v = TangentVector::new(v.dx - scale * step[0], v.dy - scale * step[1], v.dtheta - scale * step[2]);
    }
    Err(Error::ShootingFailed { residual })
}

pub(crate) fn det3(m: &Mat3) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Cramer's rule; `None` for (numerically) singular systems.
pub(crate) fn solve3(m: &Mat3, b: [f64; 3]) -> Option<[f64; 3]> {
    let d = det3(m);
    let scale = m.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
    if d.abs() <= 1e-300 || d.abs() < 1e-14 * scale.powi(3) {
        return None;
    }
    let mut out = [0.0; 3];
    for (c, o) in out.iter_mut().enumerate() {
        let mut mc = *m;
        for r in 0..3 {
            mc[r][c] = b[r];
        }
        *o = det3(&mc) / d;
    }
    Some(out)
}
