//! The unravelling Frank-Wolfe loop: certificate, curve insertion, mass fit,
//! joint sliding and pruning.

mod adam;
mod amplitude;
mod oracle;

use std::time::Instant;

use rayon::prelude::*;

pub use amplitude::{amplitude_step, nnls_quadratic};
pub use oracle::{
    curve_from_chain, linearized_score, oracle_candidates, oracle_descend, oracle_init, oracle_objective,
    sasaki_penalized_energy, sasaki_penalized_gradient, slice_peaks,
};

use crate::curves::{DiscreteCurve, DiscretizationScheme};
use crate::energy::{
    amplitude_penalty, curve_from_params, curve_to_params, curve_weight, data_gradient_stack, data_residual, fw_ball_bound,
    total_energy, total_energy_gradient, Atom, EnergyConfig, MeasureState,
};
use crate::error::{Error, Result};
use crate::observation::{certificate_field, ObservationStack, SensorGrid};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub max_outer_iters: usize,
    pub n_controls: usize,
    pub scheme: DiscretizationScheme,
    pub multistart: usize,
    pub adam_lr: f64,
    pub inner_iters: usize,
    /// Relative to the largest mass.
    pub prune_threshold: f64,
    pub sasaki_lambda: f64,
    pub seed: u64,
    pub balanced: bool,
    /// Relative slack of the certificate test.
    pub stop_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_outer_iters: 10,
            n_controls: 5,
            scheme: DiscretizationScheme::Bezier,
            multistart: 8,
            adam_lr: 1e-2,
            inner_iters: 500,
            prune_threshold: 1e-3,
            sasaki_lambda: 10.0,
            seed: 0,
            balanced: true,
            stop_tol: 1e-3,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_outer_iters == 0 || self.multistart == 0 || self.inner_iters == 0 {
            return Err(Error::InvalidParams("iteration and multistart counts must be at least 1".into()));
        }
        if self.n_controls < 2 {
            return Err(Error::InvalidParams(format!("need at least 2 controls, got {}", self.n_controls)));
        }
        if !(self.adam_lr > 0.0) {
            return Err(Error::InvalidParams(format!("learning rate must be positive, got {}", self.adam_lr)));
        }
        if !(self.sasaki_lambda > 0.0) {
            return Err(Error::InvalidParams(format!("penalty weight must be positive, got {}", self.sasaki_lambda)));
        }
        if !(self.prune_threshold >= 0.0 && self.stop_tol >= 0.0) {
            return Err(Error::InvalidParams("thresholds must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    CertificateBound,
    MaxIters,
    Stalled,
}

impl StopReason {
    pub fn name(&self) -> &'static str {
        match self {
            Self::CertificateBound => "CertificateBound",
            Self::MaxIters => "MaxIters",
            Self::Stalled => "Stalled",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "CertificateBound" => Some(Self::CertificateBound),
            "MaxIters" => Some(Self::MaxIters),
            "Stalled" => Some(Self::Stalled),
            _ => None,
        }
    }
}

/// Accumulated seconds per phase.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WallTimes {
    pub oracle: f64,
    pub amplitude: f64,
    pub sliding: f64,
    pub prune: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub final_state: MeasureState,
    /// Total energy at the end of every outer iteration.
    pub energy_trace: Vec<f64>,
    /// `-L(curve) / (w(curve) + zeta ||a||^2)` for the inserted curve of every
    /// iteration; at most `1 + stop_tol` certifies the current measure.
    pub certificate_sup: Vec<f64>,
    pub wall_times: WallTimes,
    pub stop_reason: StopReason,
}

/// Gaussian elimination with partial pivoting.
pub(crate) fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            if f != 0.0 {
                for c in col..n {
                    a[r][c] -= f * a[col][c];
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

fn state_from_params(m: &MeasureState, p: &[f64], offsets: &[usize]) -> Result<MeasureState> {
    let n = m.len();
    let atoms = m
        .atoms
        .iter()
        .enumerate()
        .map(|(k, a)| Ok(Atom { mass: p[k], curve: curve_from_params(&a.curve, &p[n + offsets[k]..n + offsets[k + 1]])? }))
        .collect::<Result<Vec<_>>>()?;
    Ok(MeasureState::new(atoms))
}

/// The sliding objective: total energy, plus the chaining penalty for
/// piecewise-geodesic atoms.
fn sliding_objective(
    m: &MeasureState,
    data: &ObservationStack,
    grid: &SensorGrid,
    cfg: &SolverConfig,
    ecfg: &EnergyConfig,
) -> Result<f64> {
    let mut v = total_energy(m, data, grid, ecfg)?;
    for a in &m.atoms {
        if a.curve.scheme() == DiscretizationScheme::PiecewiseGeodesic {
            let mut g = vec![0.0; curve_to_params(&a.curve).len()];
            oracle::penalty_terms(&a.curve, cfg.sasaki_lambda, ecfg, false, &mut v, &mut g, false)?;
        }
    }
    Ok(v)
}

/// Joint local descent over all masses and curve parameters. Only strictly
/// decreasing iterates are accepted, so the output never has a larger
/// sliding objective than the input.
pub fn sliding_step(
    m: &MeasureState,
    data: &ObservationStack,
    grid: &SensorGrid,
    cfg: &SolverConfig,
    ecfg: &EnergyConfig,
) -> Result<MeasureState> {
    if m.is_empty() {
        return Ok(m.clone());
    }
    let n = m.len();
    let mut offsets = vec![0];
    let mut x0: Vec<f64> = m.atoms.iter().map(|a| a.mass).collect();
    for a in &m.atoms {
        let p = curve_to_params(&a.curve);
        offsets.push(offsets.last().unwrap() + p.len());
        x0.extend(p);
    }
    // amplitude ranges and control counts for projection and preconditioning
    let mut amp_ranges = Vec::new();
    let mut geo_blocks = Vec::new();
    for (k, a) in m.atoms.iter().enumerate() {
        let start = n + offsets[k];
        if let Some(am) = a.curve.amplitudes() {
            let end = n + offsets[k + 1];
            amp_ranges.push((end - am.len(), end));
        }
        if a.curve.scheme() == DiscretizationScheme::PiecewiseGeodesic {
            geo_blocks.push((start, a.curve.n_controls()));
        }
    }
    let value = |p: &[f64]| sliding_objective(&state_from_params(m, p, &offsets)?, data, grid, cfg, ecfg);
    let value_grad = |p: &[f64]| -> Result<(f64, Vec<f64>)> {
        let s = state_from_params(m, p, &offsets)?;
        let eg = total_energy_gradient(&s, data, grid, ecfg)?;
        let mut grad = eg.masses;
        let mut v = eg.value;
        for (a, cg) in s.atoms.iter().zip(eg.curves) {
            let mut cg = cg;
            if a.curve.scheme() == DiscretizationScheme::PiecewiseGeodesic {
                oracle::penalty_terms(&a.curve, cfg.sasaki_lambda, ecfg, true, &mut v, &mut cg, false)?;
            }
            grad.extend(cg);
        }
        Ok((v, grad))
    };
    let metric = ecfg.metric;
    let precondition = |p: &[f64], mut g: Vec<f64>| {
        for &(start, nc) in &geo_blocks {
            let end = start + 3 * nc;
            oracle::riemannian_controls(&p[start..end], &mut g[start..end], nc, metric);
        }
        g
    };
    let project = |p: &mut [f64]| {
        for v in &mut p[..n] {
            *v = v.max(0.0);
        }
        for &(a, b) in &amp_ranges {
            for v in &mut p[a..b] {
                *v = v.max(0.0);
            }
        }
    };
    let out = adam::monotone_adam(x0, cfg.adam_lr, cfg.inner_iters, value, value_grad, precondition, project)?;
    state_from_params(m, &out.x, &offsets)
}

/// Drops atoms whose mass is not above `prune_threshold * max mass`, keeping
/// the order of the survivors.
pub fn prune(m: &MeasureState, cfg: &SolverConfig) -> MeasureState {
    let max = m.atoms.iter().map(|a| a.mass).fold(0.0, f64::max);
    let cut = cfg.prune_threshold * max;
    MeasureState::new(m.atoms.iter().filter(|a| a.mass > 0.0 && a.mass >= cut).cloned().collect())
}

fn with_masses(curves: &[DiscreteCurve], masses: &[f64]) -> MeasureState {
    MeasureState::new(curves.iter().zip(masses).map(|(c, m)| Atom { mass: *m, curve: c.clone() }).collect())
}

pub fn solve(data: &ObservationStack, grid: &SensorGrid, cfg: &SolverConfig, ecfg: &EnergyConfig) -> Result<SolveReport> {
    cfg.validate()?;
    ecfg.validate()?;
    let clock = Instant::now();
    let bound = fw_ball_bound(data, ecfg.beta);
    let mut times = WallTimes::default();
    let mut m = MeasureState::default();
    let mut energy = total_energy(&m, data, grid, ecfg)?;
    let mut energy_trace = Vec::new();
    let mut certificate_sup = Vec::new();
    let mut stop_reason = StopReason::MaxIters;

    for round in 0..cfg.max_outer_iters {
        let phase = Instant::now();
        let residual = data_residual(&m, data, grid, ecfg)?;
        let eta = certificate_field(data_gradient_stack(&residual, ecfg), grid, 1.0)?;
        let candidates = match oracle_candidates(&eta, cfg, ecfg, round as u64) {
            Ok(c) => c,
            Err(Error::NoDescentCandidate) => {
                stop_reason = StopReason::CertificateBound;
                break;
            }
            Err(e) => return Err(e),
        };
        let descended: Vec<Result<(DiscreteCurve, f64)>> = candidates
            .par_iter()
            .map(|c| {
                let d = oracle_descend(c, &eta, cfg, ecfg, bound)?;
                let s = linearized_score(&d, &eta, ecfg)?;
                Ok((d, s))
            })
            .collect();
        let mut pool = Vec::new();
        for r in descended {
            match r {
                Ok(v) => pool.push(v),
                Err(Error::BarrierViolation { .. } | Error::IntegrationDiverged { .. } | Error::StepLimit(_)) => {}
                Err(e) => return Err(e),
            }
        }
        times.oracle += phase.elapsed().as_secs_f64();
        let scores: Vec<f64> = pool.iter().map(|p| p.1).collect();
        let Some(best) = oracle::argmin(&scores) else {
            stop_reason = StopReason::Stalled;
            break;
        };
        let (curve, score) = pool.swap_remove(best);
        let size = curve_weight(&curve, ecfg) + amplitude_penalty(&curve, ecfg);
        let gain = -(score - size);
        certificate_sup.push(if size > 0.0 {
            gain / size
        } else if gain > 0.0 {
            f64::INFINITY
        } else {
            0.0
        });
        if score >= -cfg.stop_tol * size {
            stop_reason = StopReason::CertificateBound;
            break;
        }

        let phase = Instant::now();
        let mut curves: Vec<DiscreteCurve> = m.atoms.iter().map(|a| a.curve.clone()).collect();
        curves.push(curve);
        let masses = amplitude_step(&curves, data, grid, ecfg)?;
        let mut next = with_masses(&curves, &masses);
        times.amplitude += phase.elapsed().as_secs_f64();

        let phase = Instant::now();
        next = sliding_step(&next, data, grid, cfg, ecfg)?;
        times.sliding += phase.elapsed().as_secs_f64();

        let phase = Instant::now();
        let before = total_energy(&next, data, grid, ecfg)?;
        let pruned = prune(&next, cfg);
        if pruned.len() < next.len() {
            let curves: Vec<DiscreteCurve> = pruned.atoms.iter().map(|a| a.curve.clone()).collect();
            let refit = with_masses(&curves, &amplitude_step(&curves, data, grid, ecfg)?);
            let e = total_energy(&refit, data, grid, ecfg)?;
            if e <= energy.min(before) || pruned.is_empty() {
                next = refit;
            }
        }
        times.prune += phase.elapsed().as_secs_f64();

        let e = total_energy(&next, data, grid, ecfg)?;
        let stalled = e >= energy - 1e-12 * energy.abs();
        if e <= energy {
            m = next;
            energy = e;
        }
        energy_trace.push(energy);
        if stalled {
            stop_reason = StopReason::Stalled;
            break;
        }
    }
    m = prune(&m, cfg);
    times.total = clock.elapsed().as_secs_f64();
    Ok(SolveReport { final_state: m, energy_trace, certificate_sup, wall_times: times, stop_reason })
}
