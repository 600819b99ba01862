//! The objective on measures over curves: slice-wise data fidelity plus the
//! path regularizer `sum mass * (alpha + beta * E(curve))` and the amplitude
//! penalty, together with analytic gradients in a flat parameter layout.

use crate::curves::{
    basis_derivative_weights, basis_weights, composite_rule, DiscreteCurve, DiscretizationScheme, QuadratureConfig,
};
use crate::error::{Error, Result};
use crate::geometry::{
    geodesic_flow_jacobian, metric_at, metric_dtheta, IntegratorConfig, ManifoldPoint, MetricParams, TangentVector,
};
use crate::observation::{forward_stack, Frame, ObservationStack, SensorGrid};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyConfig {
    pub beta: f64,
    pub metric: MetricParams,
    pub zeta: f64,
    pub alpha_mass: f64,
    pub energy_exponent: u8,
    /// `1/2 ||r_i||^2` per slice when set, `||r_i||` otherwise.
    pub data_squared: bool,
    /// Reject negative masses in [`regularizer`].
    pub strict_mass: bool,
    pub nodes_per_segment: usize,
    pub integrator: IntegratorConfig,
}

impl EnergyConfig {
    pub fn new(beta: f64, metric: MetricParams) -> Self {
        Self {
            beta,
            metric,
            zeta: 0.0,
            alpha_mass: 0.0,
            energy_exponent: 2,
            data_squared: true,
            strict_mass: false,
            nodes_per_segment: 8,
            integrator: IntegratorConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidParams(format!("beta must be positive, got {}", self.beta)));
        }
        if !(self.zeta >= 0.0) {
            return Err(Error::InvalidParams(format!("zeta must be nonnegative, got {}", self.zeta)));
        }
        if !(self.alpha_mass >= 0.0) {
            return Err(Error::InvalidParams(format!("alpha_mass must be nonnegative, got {}", self.alpha_mass)));
        }
        if !matches!(self.energy_exponent, 1 | 2) {
            return Err(Error::InvalidParams(format!("energy exponent must be 1 or 2, got {}", self.energy_exponent)));
        }
        if self.nodes_per_segment < 2 {
            return Err(Error::InvalidParams("need at least 2 quadrature nodes per segment".into()));
        }
        self.integrator.validate()
    }

    pub fn quadrature(&self) -> QuadratureConfig {
        QuadratureConfig { nodes_per_segment: self.nodes_per_segment, energy_exponent: self.energy_exponent }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub mass: f64,
    pub curve: DiscreteCurve,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MeasureState {
    pub atoms: Vec<Atom>,
}

impl MeasureState {
    pub fn new(atoms: Vec<Atom>) -> Self {
        Self { atoms }
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { atoms: self.atoms.iter().map(|a| Atom { mass: a.mass * s, curve: a.curve.clone() }).collect() }
    }
}

/// `Phi m - y`, slice by slice.
pub fn data_residual(
    m: &MeasureState,
    data: &ObservationStack,
    grid: &SensorGrid,
    cfg: &EnergyConfig,
) -> Result<ObservationStack> {
    let model = forward_stack(m, data.times(), grid, cfg.metric, &cfg.integrator)?;
    Ok(model.sub(data))
}

fn rho(norm: f64, squared: bool) -> f64 {
    if squared {
        0.5 * norm * norm
    } else {
        norm
    }
}

fn data_term_from_residual(r: &ObservationStack, cfg: &EnergyConfig) -> f64 {
    r.frames().iter().map(|f| rho(f.norm_sq().sqrt(), cfg.data_squared)).sum()
}

pub fn data_term(m: &MeasureState, data: &ObservationStack, grid: &SensorGrid, cfg: &EnergyConfig) -> Result<f64> {
    Ok(data_term_from_residual(&data_residual(m, data, grid, cfg)?, cfg))
}

/// Gradient of the data term with respect to the model frames: the residual
/// itself for the squared fidelity, the normalized residual otherwise.
pub fn data_gradient_stack(residual: &ObservationStack, cfg: &EnergyConfig) -> ObservationStack {
    if cfg.data_squared {
        return residual.clone();
    }
    let frames = residual
        .frames()
        .iter()
        .map(|f| {
            let n = f.norm_sq().sqrt();
            let s = if n > 0.0 { 1.0 / n } else { 0.0 };
            Frame { values: f.values.iter().map(|v| v * s).collect() }
        })
        .collect();
    ObservationStack::new(residual.times().to_vec(), frames).expect("same layout as the residual")
}

/// The path energy `E(curve)` used by the regularizer.
pub fn curve_energy(curve: &DiscreteCurve, cfg: &EnergyConfig) -> f64 {
    crate::curves::path_energy(curve, cfg.metric, &cfg.quadrature())
}

/// `w(curve) = alpha + beta * E(curve)`.
pub fn curve_weight(curve: &DiscreteCurve, cfg: &EnergyConfig) -> f64 {
    cfg.alpha_mass + cfg.beta * curve_energy(curve, cfg)
}

/// `zeta * ||amplitude controls||^2`, zero for balanced curves.
pub fn amplitude_penalty(curve: &DiscreteCurve, cfg: &EnergyConfig) -> f64 {
    curve.amplitudes().map_or(0.0, |a| cfg.zeta * a.iter().map(|v| v * v).sum::<f64>())
}

pub fn regularizer(m: &MeasureState, cfg: &EnergyConfig) -> Result<f64> {
    let mut total = 0.0;
    for a in &m.atoms {
        if cfg.strict_mass && a.mass < 0.0 {
            return Err(Error::NegativeMass(a.mass));
        }
        total += a.mass * curve_weight(&a.curve, cfg) + amplitude_penalty(&a.curve, cfg);
    }
    Ok(total)
}

pub fn total_energy(m: &MeasureState, data: &ObservationStack, grid: &SensorGrid, cfg: &EnergyConfig) -> Result<f64> {
    Ok(data_term(m, data, grid, cfg)? + regularizer(m, cfg)?)
}

/// Curves with `w` above `||y||_F / (2 beta)` are excluded from the oracle.
pub fn fw_ball_bound(data: &ObservationStack, beta: f64) -> f64 {
    data.frobenius_norm() / (2.0 * beta)
}

// ---------------------------------------------------------------------------
// Flat parameter layout of a curve:
//   [x_k, y_k, theta_k] for every control (theta unwrapped for the linear schemes),
//   then [dx_k, dy_k, dtheta_k] for every segment velocity (piecewise geodesics),
//   then the amplitude controls when present.

pub fn curve_to_params(curve: &DiscreteCurve) -> Vec<f64> {
    let mut p = Vec::new();
    if curve.scheme().is_linear() {
        for c in curve.control_coords() {
            p.extend_from_slice(&c);
        }
    } else {
        for c in curve.controls() {
            p.extend_from_slice(&c.to_array());
        }
    }
    if let Some(v) = curve.velocities() {
        for v in v {
            p.extend_from_slice(&v.to_array());
        }
    }
    if let Some(a) = curve.amplitudes() {
        p.extend_from_slice(a);
    }
    p
}

pub fn curve_from_params(template: &DiscreteCurve, p: &[f64]) -> Result<DiscreteCurve> {
    let n = template.n_controls();
    let controls = (0..n).map(|k| ManifoldPoint::new(p[3 * k], p[3 * k + 1], p[3 * k + 2])).collect();
    let mut off = 3 * n;
    let velocities = template.velocities().map(|v| {
        let out = (0..v.len()).map(|k| TangentVector::new(p[off + 3 * k], p[off + 3 * k + 1], p[off + 3 * k + 2])).collect();
        off += 3 * v.len();
        out
    });
    let amps = template.amplitudes().map(|a| p[off..off + a.len()].to_vec());
    DiscreteCurve::new(template.scheme(), controls, velocities, amps)
}

fn amp_offset(curve: &DiscreteCurve) -> usize {
    3 * curve.n_controls() + curve.velocities().map_or(0, |v| 3 * v.len())
}

/// Planar position and amplitude of a curve at one time, with sparse
/// derivatives with respect to the flat parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SlicePoint {
    pub x: f64,
    pub y: f64,
    pub h: f64,
    pub dx: Vec<(usize, f64)>,
    pub dy: Vec<(usize, f64)>,
    pub dh: Vec<(usize, f64)>,
}

pub fn slice_points(
    curve: &DiscreteCurve,
    times: &[f64],
    params: MetricParams,
    integ: &IntegratorConfig,
) -> Result<Vec<SlicePoint>> {
    let n = curve.n_controls();
    let coords = curve.control_coords();
    let a_off = amp_offset(curve);
    times
        .iter()
        .map(|&t| {
            let (x, y, dx, dy) = match curve.scheme() {
                DiscretizationScheme::PiecewiseGeodesic => {
                    let v = curve.velocities().expect("validated on construction");
                    let (k, s) = crate::curves::locate(t, curve.n_segments());
                    let c = &curve.controls()[k];
                    let (end, jac) = geodesic_flow_jacobian(c, &v[k].scale(s), 1.0, params, integ)?;
                    let v_off = 3 * n + 3 * k;
                    let row = |r: usize| -> Vec<(usize, f64)> {
                        (0..3).map(|j| (3 * k + j, jac[r][j])).chain((0..3).map(|j| (v_off + j, s * jac[r][3 + j]))).collect()
                    };
                    (end[0], end[1], row(0), row(1))
                }
                scheme => {
                    let w = basis_weights(scheme, n, t);
                    let (mut x, mut y) = (0.0, 0.0);
                    let (mut dx, mut dy) = (Vec::new(), Vec::new());
                    for (k, wk) in w.iter().enumerate() {
                        if *wk != 0.0 {
                            x += wk * coords[k][0];
                            y += wk * coords[k][1];
                            dx.push((3 * k, *wk));
                            dy.push((3 * k + 1, *wk));
                        }
                    }
                    (x, y, dx, dy)
                }
            };
            let (h, dh) = match curve.amplitudes() {
                None => (1.0, Vec::new()),
                Some(a) => {
                    let scheme = match curve.scheme() {
                        DiscretizationScheme::Bezier => DiscretizationScheme::Bezier,
                        _ => DiscretizationScheme::Polygonal,
                    };
                    let w = basis_weights(scheme, a.len(), t);
                    let h = w.iter().zip(a).map(|(w, a)| w * a).sum();
                    (h, w.iter().enumerate().filter(|(_, w)| **w != 0.0).map(|(k, w)| (a_off + k, *w)).collect())
                }
            };
            Ok(SlicePoint { x, y, h, dx, dy, dh })
        })
        .collect()
}

/// `L(curve) = sum_i h(t_i) <D_i, phi(curve(t_i))>` and its gradient in the
/// flat parameter layout.
pub fn linear_score(
    curve: &DiscreteCurve,
    d: &ObservationStack,
    grid: &SensorGrid,
    params: MetricParams,
    integ: &IntegratorConfig,
) -> Result<(f64, Vec<f64>)> {
    let pts = slice_points(curve, d.times(), params, integ)?;
    let mut grad = vec![0.0; curve_to_params(curve).len()];
    let mut value = 0.0;
    for (sp, f) in pts.iter().zip(d.frames()) {
        let (c, g) = grid.profile(sp.x, sp.y).correlate(&f.values, grid.n_side());
        value += sp.h * c;
        for &(j, w) in &sp.dx {
            grad[j] += sp.h * g[0] * w;
        }
        for &(j, w) in &sp.dy {
            grad[j] += sp.h * g[1] * w;
        }
        for &(j, w) in &sp.dh {
            grad[j] += c * w;
        }
    }
    Ok((value, grad))
}

/// `E(curve)` and its gradient in the flat parameter layout.
pub fn curve_energy_gradient(curve: &DiscreteCurve, cfg: &EnergyConfig) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; curve_to_params(curve).len()];
    let params = cfg.metric;
    let p = cfg.energy_exponent;
    match curve.scheme() {
        DiscretizationScheme::PiecewiseGeodesic => {
            let n = curve.n_controls();
            let segs = curve.n_segments() as f64;
            let v = curve.velocities().expect("validated on construction");
            let mut e = 0.0;
            for (k, (c, vk)) in curve.controls().iter().zip(v).enumerate() {
                let g = metric_at(c.theta(), params);
                let dg = metric_dtheta(c.theta(), params);
                let va = vk.to_array();
                let gv = crate::geometry::mat_vec(&g, va);
                let n2 = crate::geometry::dot3(va, gv);
                let dn2_dth = crate::geometry::dot3(va, crate::geometry::mat_vec(&dg, va));
                let (val, scale) = if p == 1 {
                    let nr = n2.sqrt();
                    (nr, if nr > 0.0 { 0.5 / nr } else { 0.0 })
                } else {
                    (segs * n2, segs)
                };
                e += val;
                grad[3 * k + 2] += scale * dn2_dth;
                for j in 0..3 {
                    grad[3 * n + 3 * k + j] += scale * 2.0 * gv[j];
                }
            }
            (e, grad)
        }
        scheme => {
            let coords = curve.control_coords();
            let n = coords.len();
            let mut e = 0.0;
            for (t, w) in composite_rule(curve.n_segments(), cfg.nodes_per_segment) {
                let bw = basis_weights(scheme, n, t);
                let dw = basis_derivative_weights(scheme, n, t);
                let mut pos = [0.0; 3];
                let mut vel = [0.0; 3];
                for k in 0..n {
                    for i in 0..3 {
                        pos[i] += bw[k] * coords[k][i];
                        vel[i] += dw[k] * coords[k][i];
                    }
                }
                let g = metric_at(pos[2], params);
                let dg = metric_dtheta(pos[2], params);
                let gv = crate::geometry::mat_vec(&g, vel);
                let n2 = crate::geometry::dot3(vel, gv);
                let dn2_dth = crate::geometry::dot3(vel, crate::geometry::mat_vec(&dg, vel));
                let (val, scale) = if p == 1 {
                    let nr = n2.max(0.0).sqrt();
                    (nr, if nr > 1e-300 { 0.5 / nr } else { 0.0 })
                } else {
                    (n2, 1.0)
                };
                e += w * val;
                for k in 0..n {
                    for i in 0..3 {
                        grad[3 * k + i] += w * scale * 2.0 * dw[k] * gv[i];
                    }
                    grad[3 * k + 2] += w * scale * bw[k] * dn2_dth;
                }
            }
            (e, grad)
        }
    }
}

/// Gradient of [`amplitude_penalty`] in the flat layout.
pub fn amplitude_penalty_gradient(curve: &DiscreteCurve, cfg: &EnergyConfig) -> Vec<f64> {
    let mut grad = vec![0.0; curve_to_params(curve).len()];
    if let Some(a) = curve.amplitudes() {
        let off = amp_offset(curve);
        for (k, v) in a.iter().enumerate() {
            grad[off + k] = 2.0 * cfg.zeta * v;
        }
    }
    grad
}

/// Total energy with its gradient: one entry per mass and one flat parameter
/// vector per atom curve.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyGradient {
    pub value: f64,
    pub masses: Vec<f64>,
    pub curves: Vec<Vec<f64>>,
}

pub fn total_energy_gradient(
    m: &MeasureState,
    data: &ObservationStack,
    grid: &SensorGrid,
    cfg: &EnergyConfig,
) -> Result<EnergyGradient> {
    let residual = data_residual(m, data, grid, cfg)?;
    let d = data_gradient_stack(&residual, cfg);
    let mut value = data_term_from_residual(&residual, cfg);
    let mut masses = Vec::with_capacity(m.len());
    let mut curves = Vec::with_capacity(m.len());
    for a in &m.atoms {
        let (l, lg) = linear_score(&a.curve, &d, grid, cfg.metric, &cfg.integrator)?;
        let (e, eg) = curve_energy_gradient(&a.curve, cfg);
        let ag = amplitude_penalty_gradient(&a.curve, cfg);
        let w = cfg.alpha_mass + cfg.beta * e;
        value += a.mass * w + amplitude_penalty(&a.curve, cfg);
        masses.push(l + w);
        curves.push(lg.iter().zip(&eg).zip(&ag).map(|((l, e), z)| a.mass * (l + cfg.beta * e) + z).collect());
    }
    Ok(EnergyGradient { value, masses, curves })
}
