//! Insertion step: candidate curves from the certificate, then local descent
//! of the linearized objective.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{solve_dense, SolverConfig};
use crate::curves::{basis_weights, chain_velocities, flat_velocities, DiscreteCurve, DiscretizationScheme};
use crate::energy::{
    amplitude_penalty, amplitude_penalty_gradient, curve_energy_gradient, curve_from_params, curve_to_params, curve_weight,
    linear_score, EnergyConfig,
};
use crate::error::{Error, Result};
use crate::geometry::{angle_diff, exp_map, geodesic_flow_jacobian, metric_inverse_at, norm_sq_at, wrap_angle, ManifoldPoint};
use crate::observation::CertificateField;

/// Peaks kept per slice.
const MAX_PEAKS: usize = 6;
/// Peaks weaker than this fraction of the slice minimum are ignored.
const PEAK_FRACTION: f64 = 0.2;

/// `L(curve) + w(curve) + zeta ||a||^2` with `L = sum_i h(t_i) eta(t_i, curve(t_i))`:
/// the directional derivative of the objective when adding the curve with a
/// unit mass, for a certificate of weight 1.
pub fn linearized_score(curve: &DiscreteCurve, eta: &CertificateField, ecfg: &EnergyConfig) -> Result<f64> {
    let (l, _) = linear_score(curve, eta.residual(), eta.grid(), ecfg.metric, &ecfg.integrator)?;
    Ok(l / eta.weight() + curve_weight(curve, ecfg) + amplitude_penalty(curve, ecfg))
}

/// The piecewise-geodesic descent objective
/// `sum_i h eta(t_i, curve(t_i)) + beta sum_k dt ||v_k||^2 + lambda sum_k ||Exp(c_k, v_k) - c_{k+1}||^2`,
/// with the angle defect measured along the shortest arc.
pub fn sasaki_penalized_energy(
    curve: &DiscreteCurve,
    eta: &CertificateField,
    cfg: &SolverConfig,
    ecfg: &EnergyConfig,
) -> Result<f64> {
    Ok(sasaki_with_gradient(curve, eta, cfg, ecfg, false)?.0)
}

/// [`sasaki_penalized_energy`] with its gradient in the flat parameter layout.
pub fn sasaki_penalized_gradient(
    curve: &DiscreteCurve,
    eta: &CertificateField,
    cfg: &SolverConfig,
    ecfg: &EnergyConfig,
) -> Result<(f64, Vec<f64>)> {
    sasaki_with_gradient(curve, eta, cfg, ecfg, true)
}

fn sasaki_with_gradient(
    curve: &DiscreteCurve,
    eta: &CertificateField,
    cfg: &SolverConfig,
    ecfg: &EnergyConfig,
    want_grad: bool,
) -> Result<(f64, Vec<f64>)> {
    if curve.scheme() != DiscretizationScheme::PiecewiseGeodesic {
        return Err(Error::InvalidParams("the penalized energy is defined for piecewise-geodesic curves".into()));
    }
    if !(cfg.sasaki_lambda > 0.0) {
        return Err(Error::InvalidParams(format!("penalty weight must be positive, got {}", cfg.sasaki_lambda)));
    }
    let (l, lg) = linear_score(curve, eta.residual(), eta.grid(), ecfg.metric, &ecfg.integrator)?;
    let w = 1.0 / eta.weight();
    let mut value = w * l;
    let mut grad: Vec<f64> = lg.iter().map(|g| w * g).collect();
    penalty_terms(curve, cfg.sasaki_lambda, ecfg, want_grad, &mut value, &mut grad, true)?;
    Ok((value, grad))
}

/// Adds the kinetic term (when `kinetic`) and the chaining penalty.
pub(crate) fn penalty_terms(
    curve: &DiscreteCurve,
    lambda: f64,
    ecfg: &EnergyConfig,
    want_grad: bool,
    value: &mut f64,
    grad: &mut [f64],
    kinetic: bool,
) -> Result<()> {
    let n = curve.n_controls();
    let v = curve.velocities().expect("piecewise-geodesic curves carry velocities");
    let dt = 1.0 / curve.n_segments() as f64;
    let controls = curve.controls();
    for (k, vk) in v.iter().enumerate() {
        let c = &controls[k];
        if kinetic {
            *value += ecfg.beta * dt * norm_sq_at(c.theta(), vk.to_array(), ecfg.metric);
            if want_grad {
                let g = crate::geometry::metric_at(c.theta(), ecfg.metric);
                let dg = crate::geometry::metric_dtheta(c.theta(), ecfg.metric);
                let va = vk.to_array();
                let gv = crate::geometry::mat_vec(&g, va);
                grad[3 * k + 2] += ecfg.beta * dt * crate::geometry::dot3(va, crate::geometry::mat_vec(&dg, va));
                for j in 0..3 {
                    grad[3 * n + 3 * k + j] += ecfg.beta * dt * 2.0 * gv[j];
                }
            }
        }
        let next = &controls[k + 1];
        if want_grad {
            let (end, jac) = geodesic_flow_jacobian(c, vk, 1.0, ecfg.metric, &ecfg.integrator)?;
            let d = [end[0] - next.x, end[1] - next.y, angle_diff(next.theta(), end[2])];
            *value += lambda * (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
            for r in 0..3 {
                for j in 0..3 {
                    grad[3 * k + j] += 2.0 * lambda * d[r] * jac[r][j];
                    grad[3 * n + 3 * k + j] += 2.0 * lambda * d[r] * jac[r][3 + j];
                }
                grad[3 * (k + 1) + r] -= 2.0 * lambda * d[r];
            }
        } else {
            let end = exp_map(c, vk, ecfg.metric, &ecfg.integrator)?;
            let d = [end.x - next.x, end.y - next.y, angle_diff(next.theta(), end.theta())];
            *value += lambda * (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
        }
    }
    Ok(())
}

/// Local minima of `eta` on slice `i`, refined off the grid, strongest first.
pub fn slice_peaks(eta: &CertificateField, i: usize) -> Vec<(f64, (f64, f64))> {
    let grid = eta.grid();
    let n = grid.n_side();
    let map = eta.node_map(i);
    let lowest = map.iter().cloned().fold(0.0, f64::min);
    if lowest >= 0.0 {
        return Vec::new();
    }
    let mut peaks = Vec::new();
    for row in 0..n {
        for col in 0..n {
            let v = map[row * n + col];
            if v > PEAK_FRACTION * lowest {
                continue;
            }
            let mut is_min = true;
            'nb: for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    let (r, c) = (row as i64 + dr, col as i64 + dc);
                    if (dr, dc) == (0, 0) || r < 0 || c < 0 || r >= n as i64 || c >= n as i64 {
                        continue;
                    }
                    let u = map[r as usize * n + c as usize];
                    // ties go to the earlier node
                    let earlier = (dr, dc) < (0, 0);
                    if u < v || (u == v && earlier) {
                        is_min = false;
                        break 'nb;
                    }
                }
            }
            if is_min {
                peaks.push((v, grid.node(row * n + col)));
            }
        }
    }
    peaks.sort_by(|a, b| a.0.total_cmp(&b.0));
    peaks.truncate(MAX_PEAKS);
    peaks.into_iter().map(|(_, p)| refine_peak(eta, i, p)).collect()
}

/// Backtracking descent of `eta(t_i, .)` from a grid node.
fn refine_peak(eta: &CertificateField, i: usize, p: (f64, f64)) -> (f64, (f64, f64)) {
    let (mut x, mut y) = p;
    let (mut v, mut g) = eta.eval_with_grad(i, x, y);
    let mut step = 0.5 * eta.grid().sigma();
    for _ in 0..60 {
        let gn = g[0].hypot(g[1]);
        if gn == 0.0 || step < 1e-9 {
            break;
        }
        let (nx, ny) = (x - step * g[0] / gn, y - step * g[1] / gn);
        let (nv, ng) = eta.eval_with_grad(i, nx, ny);
        if nv < v {
            (x, y, v, g) = (nx, ny, nv, ng);
            step *= 1.5;
        } else {
            step *= 0.5;
        }
    }
    (v, (x, y))
}

/// Least-squares controls for samples `values[i]` at `times[i]` in the
/// scheme's basis (hat functions for the polygonal and geodesic schemes).
fn fit_channel(times: &[f64], values: &[f64], scheme: DiscretizationScheme, k_n: usize) -> Vec<f64> {
    let scheme = if scheme == DiscretizationScheme::Bezier { scheme } else { DiscretizationScheme::Polygonal };
    let mut a = vec![vec![0.0; k_n]; k_n];
    let mut b = vec![0.0; k_n];
    for (t, v) in times.iter().zip(values) {
        let w = basis_weights(scheme, k_n, *t);
        for i in 0..k_n {
            b[i] += w[i] * v;
            for j in 0..k_n {
                a[i][j] += w[i] * w[j];
            }
        }
    }
    let trace: f64 = (0..k_n).map(|i| a[i][i]).sum();
    for (i, row) in a.iter_mut().enumerate() {
        row[i] += 1e-10 * trace.max(1e-300);
    }
    solve_dense(a, b).unwrap_or_else(|| vec![values.iter().sum::<f64>() / values.len() as f64; k_n])
}

/// Projection onto `{a >= 0, sum a = n}`.
fn project_scaled_simplex(a: &mut [f64]) {
    let n = a.len() as f64;
    let mut s: Vec<f64> = a.to_vec();
    s.sort_by(|x, y| y.total_cmp(x));
    let mut cum = 0.0;
    let mut tau = 0.0;
    for (k, v) in s.iter().enumerate() {
        cum += v;
        let t = (cum - n) / (k + 1) as f64;
        if v - t > 0.0 {
            tau = t;
        }
    }
    for v in a.iter_mut() {
        *v = (*v - tau).max(0.0);
    }
}

/// A curve through the per-slice positions: headings from finite
/// differences, amplitudes from the per-slice matched magnitude.
pub fn curve_from_chain(
    times: &[f64],
    positions: &[(f64, f64)],
    magnitudes: Option<&[f64]>,
    cfg: &SolverConfig,
    ecfg: &EnergyConfig,
) -> Result<DiscreteCurve> {
    let t_n = positions.len();
    let mut headings = Vec::with_capacity(t_n);
    let mut prev = 0.0;
    for i in 0..t_n {
        let (a, b) = (positions[i.saturating_sub(1)], positions[(i + 1).min(t_n - 1)]);
        let (dx, dy) = (b.0 - a.0, b.1 - a.1);
        let raw = if dx == 0.0 && dy == 0.0 { prev } else { dy.atan2(dx) };
        let th = if i == 0 { raw } else { prev + angle_diff(prev, raw) };
        headings.push(th);
        prev = th;
    }
    let k_n = cfg.n_controls;
    let xs: Vec<f64> = positions.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = positions.iter().map(|p| p.1).collect();
    let cx = fit_channel(times, &xs, cfg.scheme, k_n);
    let cy = fit_channel(times, &ys, cfg.scheme, k_n);
    let ct = fit_channel(times, &headings, cfg.scheme, k_n);
    let controls: Vec<ManifoldPoint> = (0..k_n).map(|k| ManifoldPoint::new(cx[k], cy[k], wrap_angle(ct[k]))).collect();
    let amps = magnitudes.map(|m| {
        let mut a = fit_channel(times, m, cfg.scheme, k_n);
        if a.iter().all(|v| *v <= 0.0) {
            a = vec![1.0; k_n];
        }
        project_scaled_simplex(&mut a);
        a
    });
    match cfg.scheme {
        DiscretizationScheme::PiecewiseGeodesic => {
            let flat = DiscreteCurve::new(cfg.scheme, controls.clone(), Some(flat_velocities(&controls)), amps)?;
            Ok(chain_velocities(&flat, ecfg.metric, &ecfg.integrator, 1e-10).unwrap_or(flat))
        }
        scheme => DiscreteCurve::new(scheme, controls, None, amps),
    }
}

fn nearest(peaks: &[(f64, (f64, f64))], target: (f64, f64)) -> Option<(f64, f64)> {
    peaks.iter().map(|p| p.1).min_by(|a, b| {
        let da = (a.0 - target.0).powi(2) + (a.1 - target.1).powi(2);
        let db = (b.0 - target.0).powi(2) + (b.1 - target.1).powi(2);
        da.total_cmp(&db)
    })
}

/// Follows peaks from slice `start` in both time directions, predicting
/// each next position with constant velocity.
fn track(peaks: &[Vec<(f64, (f64, f64))>], start: usize, from: (f64, f64)) -> Vec<(f64, f64)> {
    let t_n = peaks.len();
    let mut pos = vec![from; t_n];
    let mut walk = |order: Vec<usize>| {
        let mut last: Option<(f64, f64)> = None;
        let mut cur = from;
        for i in order {
            let pred = match last {
                Some(l) => (2.0 * cur.0 - l.0, 2.0 * cur.1 - l.1),
                None => cur,
            };
            let next = nearest(&peaks[i], pred).unwrap_or(pred);
            pos[i] = next;
            last = Some(cur);
            cur = next;
        }
    };
    walk(((start + 1)..t_n).collect());
    walk((0..start).rev().collect());
    pos
}

/// Candidate curves: the chain of per-slice minimizers of `eta`, followed by
/// `multistart - 1` perturbed peak tracks seeded from random slices.
pub fn oracle_candidates(
    eta: &CertificateField,
    cfg: &SolverConfig,
    ecfg: &EnergyConfig,
    round: u64,
) -> Result<Vec<DiscreteCurve>> {
    let times = eta.times().to_vec();
    let peaks: Vec<Vec<(f64, (f64, f64))>> = (0..times.len()).map(|i| slice_peaks(eta, i)).collect();
    let Some(first) = peaks.iter().position(|p| !p.is_empty()) else {
        return Err(Error::NoDescentCandidate);
    };
    let magnitudes = |pos: &[(f64, f64)]| -> Option<Vec<f64>> {
        (!cfg.balanced).then(|| {
            pos.iter()
                .enumerate()
                .map(|(i, p)| {
                    let prof = eta.grid().profile(p.0, p.1);
                    (-eta.eval(i, p.0, p.1) * eta.weight() / prof.norm_sq().max(1e-300)).max(0.0)
                })
                .collect()
        })
    };

    // per-slice argmin, holding the last position across empty slices
    let mut chain = Vec::with_capacity(times.len());
    let mut hold = peaks[first][0].1;
    for p in &peaks {
        if let Some(best) = p.first() {
            hold = best.1;
        }
        chain.push(hold);
    }
    let mut out = vec![curve_from_chain(&times, &chain, magnitudes(&chain).as_deref(), cfg, ecfg)?];

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ round.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let jitter = Normal::new(0.0, 0.25 * eta.grid().spacing()).expect("positive spread");
    let occupied: Vec<usize> = (0..peaks.len()).filter(|&i| !peaks[i].is_empty()).collect();
    for _ in 1..cfg.multistart {
        let start = occupied[rng.random_range(0..occupied.len())];
        let from = peaks[start][rng.random_range(0..peaks[start].len())].1;
        let mut pos = track(&peaks, start, from);
        for p in &mut pos {
            p.0 += jitter.sample(&mut rng);
            p.1 += jitter.sample(&mut rng);
        }
        out.push(curve_from_chain(&times, &pos, magnitudes(&pos).as_deref(), cfg, ecfg)?);
    }
    Ok(out)
}

/// Index of the smallest score, first one on ties.
pub(crate) fn argmin(scores: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, s) in scores.iter().enumerate() {
        if s.is_finite() && best.is_none_or(|b| *s < scores[b]) {
            best = Some(i);
        }
    }
    best
}

/// The candidate with the lowest linearized score.
pub fn oracle_init(eta: &CertificateField, cfg: &SolverConfig, ecfg: &EnergyConfig, round: u64) -> Result<DiscreteCurve> {
    let cands = oracle_candidates(eta, cfg, ecfg, round)?;
    let scores = cands.iter().map(|c| linearized_score(c, eta, ecfg)).collect::<Result<Vec<_>>>()?;
    match argmin(&scores) {
        Some(i) if scores[i] < 0.0 => Ok(cands.into_iter().nth(i).expect("index in range")),
        _ => Err(Error::NoDescentCandidate),
    }
}

/// Barrier `(w - 0.9 B)^2 / (0.1 B)` above 90% of the bound and its derivative in `w`.
fn barrier(w: f64, bound: f64) -> (f64, f64) {
    let on = 0.9 * bound;
    if bound <= 0.0 || w <= on {
        return (0.0, 0.0);
    }
    let s = 0.1 * bound;
    ((w - on).powi(2) / s, 2.0 * (w - on) / s)
}

/// The descent objective and its gradient: the linearized score for the
/// linear schemes, the penalized energy for piecewise geodesics, plus the
/// feasibility barrier on `w`.
pub fn oracle_objective(
    curve: &DiscreteCurve,
    eta: &CertificateField,
    cfg: &SolverConfig,
    ecfg: &EnergyConfig,
    bound: f64,
) -> Result<(f64, Vec<f64>)> {
    let (e, eg) = curve_energy_gradient(curve, ecfg);
    let w = ecfg.alpha_mass + ecfg.beta * e;
    let (b, db) = barrier(w, bound);
    let zg = amplitude_penalty_gradient(curve, ecfg);
    let (mut value, mut grad) = if curve.scheme() == DiscretizationScheme::PiecewiseGeodesic {
        let (f, g) = sasaki_penalized_gradient(curve, eta, cfg, ecfg)?;
        (f + ecfg.alpha_mass, g)
    } else {
        let (l, lg) = linear_score(curve, eta.residual(), eta.grid(), ecfg.metric, &ecfg.integrator)?;
        let s = 1.0 / eta.weight();
        (s * l + w, lg.iter().zip(&eg).map(|(l, e)| s * l + ecfg.beta * e).collect())
    };
    value += amplitude_penalty(curve, ecfg) + b;
    for ((g, e), z) in grad.iter_mut().zip(&eg).zip(&zg) {
        *g += db * ecfg.beta * e + z;
    }
    Ok((value, grad))
}

/// Local descent of [`oracle_objective`] from `init`. The result never scores
/// worse than `init`.
pub fn oracle_descend(
    init: &DiscreteCurve,
    eta: &CertificateField,
    cfg: &SolverConfig,
    ecfg: &EnergyConfig,
    bound: f64,
) -> Result<DiscreteCurve> {
    let template = init.clone();
    let n_ctrl = init.n_controls();
    let amp_range = init.amplitudes().map(|a| {
        let len = curve_to_params(init).len();
        (len - a.len(), len)
    });
    let geodesic = init.scheme() == DiscretizationScheme::PiecewiseGeodesic;
    let metric = ecfg.metric;
    let value = |p: &[f64]| -> Result<f64> { Ok(oracle_objective(&curve_from_params(&template, p)?, eta, cfg, ecfg, bound)?.0) };
    let value_grad =
        |p: &[f64]| -> Result<(f64, Vec<f64>)> { oracle_objective(&curve_from_params(&template, p)?, eta, cfg, ecfg, bound) };
    let precondition = |p: &[f64], mut g: Vec<f64>| -> Vec<f64> {
        if geodesic {
            riemannian_controls(p, &mut g, n_ctrl, metric);
        }
        g
    };
    let project = |p: &mut [f64]| {
        if let Some((a, b)) = amp_range {
            project_scaled_simplex(&mut p[a..b]);
        }
    };
    let out = super::adam::monotone_adam(
        curve_to_params(init),
        cfg.adam_lr,
        cfg.inner_iters,
        value,
        value_grad,
        precondition,
        project,
    )?;
    let mut curve = curve_from_params(&template, &out.x)?;
    if geodesic {
        if let Ok(chained) = chain_velocities(&curve, ecfg.metric, &ecfg.integrator, 1e-10) {
            if value(&curve_to_params(&chained))? <= out.value + 1e-9 * out.value.abs().max(1.0) {
                curve = chained;
            }
        }
    }
    let w = curve_weight(&curve, ecfg);
    if bound > 0.0 && w > bound && curve_weight(init, ecfg) > bound {
        return Err(Error::BarrierViolation { bound });
    }
    Ok(curve)
}

/// Replaces the control-point blocks of a gradient by Riemannian gradients.
pub(crate) fn riemannian_controls(p: &[f64], g: &mut [f64], n_controls: usize, metric: crate::geometry::MetricParams) {
    for k in 0..n_controls {
        let inv = metric_inverse_at(p[3 * k + 2], metric);
        let e = [g[3 * k], g[3 * k + 1], g[3 * k + 2]];
        let r = crate::geometry::mat_vec(&inv, e);
        g[3 * k..3 * k + 3].copy_from_slice(&r);
    }
}
