use untangle::curves::{chaining_defect, DiscreteCurve, DiscretizationScheme};
use untangle::energy::EnergyConfig;
use untangle::geometry::{ManifoldPoint, MetricParams};
use untangle::metrics::compute_metrics;
use untangle::observation::{uniform_times, GroundTruth, SensorGrid, Trajectory};
use untangle::solver::{solve, SolverConfig, StopReason};

fn moving_source() -> GroundTruth {
    let c = DiscreteCurve::bezier(vec![ManifoldPoint::new(-0.5, -0.1, 0.2), ManifoldPoint::new(0.5, 0.1, 0.2)]).unwrap();
    GroundTruth::new(vec![Trajectory::Curve(c)], vec![1.0]).unwrap()
}

fn run(scheme: DiscretizationScheme) -> (untangle::solver::SolveReport, EnergyConfig, GroundTruth, Vec<f64>) {
    let grid = SensorGrid::new(32, 0.08).unwrap();
    let truth = moving_source();
    let times = uniform_times(9);
    let data = truth.stack(&times, &grid).unwrap();
    let ecfg = EnergyConfig::new(1e-3, MetricParams::new(0.3, 1.0).unwrap());
    let cfg = SolverConfig { scheme, n_controls: 3, multistart: 2, max_outer_iters: 4, ..Default::default() };
    (solve(&data, &grid, &cfg, &ecfg).unwrap(), ecfg, truth, times)
}

#[test]
fn energy_trace_is_non_increasing() {
    for scheme in [DiscretizationScheme::Polygonal, DiscretizationScheme::Bezier, DiscretizationScheme::PiecewiseGeodesic] {
        let (report, ..) = run(scheme);
        assert!(!report.energy_trace.is_empty());
        for w in report.energy_trace.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12), "{}: {:?}", scheme.name(), report.energy_trace);
        }
    }
}

#[test]
fn geodesic_segments_chain_after_convergence() {
    let (report, ecfg, truth, times) = run(DiscretizationScheme::PiecewiseGeodesic);
    assert!(matches!(report.stop_reason, StopReason::CertificateBound | StopReason::MaxIters | StopReason::Stalled));
    assert!(!report.final_state.is_empty());
    for a in &report.final_state.atoms {
        let d = chaining_defect(&a.curve, ecfg.metric, &ecfg.integrator).unwrap();
        assert!(d <= 1e-2, "chaining defect {d}");
    }
    let m = compute_metrics(&report.final_state, &truth, &times, ecfg.metric, &ecfg.integrator).unwrap();
    assert!(m.matched_rmse <= 2e-2, "{m:?}");
}
