//! Nonnegative mass fit for fixed curves.

use crate::curves::DiscreteCurve;
use crate::energy::{curve_weight, Atom, EnergyConfig, MeasureState};
use crate::error::Result;
use crate::observation::{forward_stack, ObservationStack, SensorGrid};

/// Minimizes `1/2 a^T Q a - b^T a` over `a >= 0` by cyclic coordinate
/// projection with the exact step on each coordinate. Stops once the KKT
/// residual `max_j |min(a_j, grad_j)|` is at most `tol`.
pub fn nnls_quadratic(q: &[Vec<f64>], b: &[f64], tol: f64, max_sweeps: usize) -> Vec<f64> {
    let n = b.len();
    let mut a = vec![0.0; n];
    let mut grad: Vec<f64> = b.iter().map(|v| -v).collect();
    for _ in 0..max_sweeps {
        for j in 0..n {
            if q[j][j] <= 0.0 {
                continue;
            }
            let new = (a[j] - grad[j] / q[j][j]).max(0.0);
            let d = new - a[j];
            if d != 0.0 {
                for (i, g) in grad.iter_mut().enumerate() {
                    *g += q[i][j] * d;
                }
                a[j] = new;
            }
        }
        let kkt = a.iter().zip(&grad).map(|(a, g)| a.min(*g).abs()).fold(0.0, f64::max);
        if kkt <= tol {
            break;
        }
    }
    a
}

/// Masses of the fixed curves minimizing `1/2 ||G a - y||^2 + sum_k w_k a_k`
/// over `a >= 0`, where column `k` of `G` is the unit-mass stack of curve `k`.
pub fn amplitude_step(
    curves: &[DiscreteCurve],
    data: &ObservationStack,
    grid: &SensorGrid,
    cfg: &EnergyConfig,
) -> Result<Vec<f64>> {
    let columns = curves
        .iter()
        .map(|c| {
            let m = MeasureState::new(vec![Atom { mass: 1.0, curve: c.clone() }]);
            forward_stack(&m, data.times(), grid, cfg.metric, &cfg.integrator)
        })
        .collect::<Result<Vec<_>>>()?;
    let n = curves.len();
    let mut q = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let v = columns[i].dot(&columns[j]);
            q[i][j] = v;
            q[j][i] = v;
        }
    }
    let b: Vec<f64> = curves.iter().zip(&columns).map(|(c, g)| g.dot(data) - curve_weight(c, cfg)).collect();
    Ok(nnls_quadratic(&q, &b, 1e-8, 100_000))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{ManifoldPoint, MetricParams};
    use crate::observation::uniform_times;

    fn setup() -> (SensorGrid, EnergyConfig, DiscreteCurve) {
        let g = SensorGrid::new(32, 0.08).unwrap();
        let c = EnergyConfig::new(1e-3, MetricParams::euclidean());
        let curve = DiscreteCurve::bezier(vec![ManifoldPoint::new(-0.4, 0.1, 0.0), ManifoldPoint::new(0.3, -0.2, -0.4)]).unwrap();
        (g, c, curve)
    }

    #[test]
    fn exact_generator_gets_unit_mass() {
        let (g, mut c, curve) = setup();
        let m = MeasureState::new(vec![Atom { mass: 1.0, curve: curve.clone() }]);
        let data = forward_stack(&m, &uniform_times(5), &g, c.metric, &c.integrator).unwrap();
        // beta -> 0 limit: zero path weight
        c.beta = 1e-300;
        let a = amplitude_step(std::slice::from_ref(&curve), &data, &g, &c).unwrap();
        assert!((a[0] - 1.0).abs() < 1e-10);
        // closed form <G, y> / ||G||^2 with the weight removed
        c.beta = 1e-3;
        let w = curve_weight(&curve, &c);
        let a = amplitude_step(&[curve], &data, &g, &c).unwrap();
        let gg = data.dot(&data);
        assert!((a[0] - (gg - w) / gg).abs() < 1e-10);
    }

    #[test]
    fn empty_data_gives_zero_masses() {
        let (g, c, curve) = setup();
        let a = amplitude_step(&[curve.clone(), curve.translated(0.2, 0.0)], &ObservationStack::zeros(4, &g), &g, &c).unwrap();
        assert_eq!(a, vec![0.0, 0.0]);
    }

    #[test]
    fn duplicates_share_the_mass() {
        let (g, c, curve) = setup();
        let m = MeasureState::new(vec![Atom { mass: 1.5, curve: curve.clone() }]);
        let data = forward_stack(&m, &uniform_times(5), &g, c.metric, &c.integrator).unwrap();
        let single = amplitude_step(std::slice::from_ref(&curve), &data, &g, &c).unwrap();
        let pair = amplitude_step(&[curve.clone(), curve], &data, &g, &c).unwrap();
        assert!((pair[0] + pair[1] - single[0]).abs() < 1e-8);
        assert!(pair.iter().all(|a| *a >= 0.0));
    }

    #[test]
    fn kkt_conditions_hold() {
        let q = vec![vec![4.0, 1.0, 0.5], vec![1.0, 3.0, 0.2], vec![0.5, 0.2, 2.0]];
        let b = vec![1.0, -2.0, 0.7];
        let a = nnls_quadratic(&q, &b, 1e-12, 10_000);
        for j in 0..3 {
            let g: f64 = (0..3).map(|i| q[j][i] * a[i]).sum::<f64>() - b[j];
            assert!(a[j] >= 0.0 && g >= -1e-10 && (a[j] * g).abs() < 1e-10);
        }
        assert_eq!(a[1], 0.0);
    }
}
