//! Comparison of a recovered measure with a ground truth.

use crate::energy::MeasureState;
use crate::error::Result;
use crate::geometry::{IntegratorConfig, MetricParams};
use crate::observation::GroundTruth;

/// Samples per curve for the path-intersection test.
const DENSE: usize = 400;

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryMetrics {
    /// Root mean square planar distance over matched pairs and stack times.
    pub matched_rmse: f64,
    /// Largest planar distance at `t = 0` or `t = 1` over matched pairs.
    pub endpoint_error: f64,
    pub crossing_detected: bool,
    /// Largest relative error of the time-averaged mass over matched pairs.
    pub mass_relative_error: f64,
    pub n_recovered: usize,
    pub n_truth: usize,
    /// `assignment[k]` is the truth curve matched to recovered atom `k`.
    pub assignment: Vec<Option<usize>>,
    /// Time-averaged effective mass of every recovered atom.
    pub recovered_mean_masses: Vec<f64>,
    pub truth_mean_masses: Vec<f64>,
}

type Path = Vec<(f64, f64)>;

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).hypot(a.1 - b.1)
}

/// All injective maps from `0..k` into `0..n` (k <= n).
fn injections(k: usize, n: usize) -> Vec<Vec<usize>> {
    fn rec(k: usize, n: usize, cur: &mut Vec<usize>, used: &mut Vec<bool>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for j in 0..n {
            if !used[j] {
                used[j] = true;
                cur.push(j);
                rec(k, n, cur, used, out);
                cur.pop();
                used[j] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(k, n, &mut Vec::new(), &mut vec![false; n], &mut out);
    out
}

/// Pairs `(recovered, truth)` minimizing `cost`, first minimum in enumeration order.
fn best_matching(n_rec: usize, n_truth: usize, cost: impl Fn(usize, usize) -> f64) -> Vec<(usize, usize)> {
    let (k, n, flip) = if n_rec <= n_truth { (n_rec, n_truth, false) } else { (n_truth, n_rec, true) };
    let mut best: Option<(f64, Vec<(usize, usize)>)> = None;
    for inj in injections(k, n) {
        let pairs: Vec<(usize, usize)> = inj.iter().enumerate().map(|(i, &j)| if flip { (j, i) } else { (i, j) }).collect();
        let c: f64 = pairs.iter().map(|&(r, t)| cost(r, t)).sum();
        if best.as_ref().is_none_or(|b| c < b.0) {
            best = Some((c, pairs));
        }
    }
    best.map(|b| b.1).unwrap_or_default()
}

fn orient(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> f64 {
    (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)
}

fn on_segment(a: (f64, f64), b: (f64, f64), p: (f64, f64)) -> bool {
    p.0 >= a.0.min(b.0) - 1e-12 && p.0 <= a.0.max(b.0) + 1e-12 && p.1 >= a.1.min(b.1) - 1e-12 && p.1 <= a.1.max(b.1) + 1e-12
}

/// Closed-segment intersection test.
pub fn segments_intersect(p1: (f64, f64), p2: (f64, f64), q1: (f64, f64), q2: (f64, f64)) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && on_segment(q1, q2, p1))
        || (d2 == 0.0 && on_segment(q1, q2, p2))
        || (d3 == 0.0 && on_segment(p1, p2, q1))
        || (d4 == 0.0 && on_segment(p1, p2, q2))
}

/// Whether two sampled planar paths intersect as polylines.
pub fn paths_intersect(a: &[(f64, f64)], b: &[(f64, f64)]) -> bool {
    a.windows(2).any(|s| b.windows(2).any(|r| segments_intersect(s[0], s[1], r[0], r[1])))
}

fn sample_recovered(m: &MeasureState, times: &[f64], params: MetricParams, integ: &IntegratorConfig) -> Result<Vec<Path>> {
    m.atoms.iter().map(|a| times.iter().map(|&t| a.curve.eval(t, params, integ).map(|p| (p.x, p.y))).collect()).collect()
}

fn sample_truth(truth: &GroundTruth, times: &[f64]) -> Result<Vec<Path>> {
    truth.curves.iter().map(|c| times.iter().map(|&t| c.point(t).map(|p| (p.x, p.y))).collect()).collect()
}

fn dense_times() -> Vec<f64> {
    (0..DENSE).map(|i| i as f64 / (DENSE - 1) as f64).collect()
}

/// Smallest planar distance between two recovered atoms at the given times.
pub fn min_pairwise_distance(m: &MeasureState, times: &[f64], params: MetricParams, integ: &IntegratorConfig) -> Result<f64> {
    let paths = sample_recovered(m, times, params, integ)?;
    let mut best = f64::INFINITY;
    for a in 0..paths.len() {
        for b in a + 1..paths.len() {
            for i in 0..times.len() {
                best = best.min(dist(paths[a][i], paths[b][i]));
            }
        }
    }
    Ok(best)
}

/// Matches recovered atoms to truth curves and measures the fit.
///
/// A crossing is detected when some truth pair crosses, the matched
/// recovered pair's paths intersect, and matching by start points alone and
/// by end points alone both reproduce that pairing (so the recovered curves
/// swap sides rather than bounce off each other).
pub fn compute_metrics(
    recovered: &MeasureState,
    truth: &GroundTruth,
    stack_times: &[f64],
    params: MetricParams,
    integ: &IntegratorConfig,
) -> Result<TrajectoryMetrics> {
    let mean_mass = |f: &dyn Fn(f64) -> f64| stack_times.iter().map(|&t| f(t)).sum::<f64>() / stack_times.len().max(1) as f64;
    let recovered_mean_masses: Vec<f64> =
        recovered.atoms.iter().map(|a| mean_mass(&|t| a.mass * a.curve.amplitude_at(t).unwrap_or(1.0))).collect();
    let truth_mean_masses: Vec<f64> = (0..truth.curves.len()).map(|k| mean_mass(&|t| truth.mass_at(k, t))).collect();
    let mut out = TrajectoryMetrics {
        matched_rmse: f64::INFINITY,
        endpoint_error: f64::INFINITY,
        crossing_detected: false,
        mass_relative_error: f64::INFINITY,
        n_recovered: recovered.len(),
        n_truth: truth.curves.len(),
        assignment: vec![None; recovered.len()],
        recovered_mean_masses,
        truth_mean_masses,
    };
    if recovered.is_empty() || truth.curves.is_empty() {
        return Ok(out);
    }
    let rec = sample_recovered(recovered, stack_times, params, integ)?;
    let tru = sample_truth(truth, stack_times)?;
    let path_cost = |r: usize, t: usize| rec[r].iter().zip(&tru[t]).map(|(a, b)| dist(*a, *b)).sum::<f64>();
    let pairs = best_matching(rec.len(), tru.len(), path_cost);

    let mut sq = 0.0;
    let mut count = 0usize;
    let mut endpoint = 0.0f64;
    let mut mass_err = 0.0f64;
    let ends = [0.0, 1.0];
    let rec_ends = sample_recovered(recovered, &ends, params, integ)?;
    let tru_ends = sample_truth(truth, &ends)?;
    for &(r, t) in &pairs {
        out.assignment[r] = Some(t);
        for (a, b) in rec[r].iter().zip(&tru[t]) {
            sq += dist(*a, *b).powi(2);
            count += 1;
        }
        endpoint = endpoint.max(dist(rec_ends[r][0], tru_ends[t][0])).max(dist(rec_ends[r][1], tru_ends[t][1]));
        let tm = out.truth_mean_masses[t];
        mass_err = mass_err.max((out.recovered_mean_masses[r] - tm).abs() / tm);
    }
    out.matched_rmse = (sq / count as f64).sqrt();
    out.endpoint_error = endpoint;
    out.mass_relative_error = mass_err;

    let dense = dense_times();
    let rec_dense = sample_recovered(recovered, &dense, params, integ)?;
    let tru_dense = sample_truth(truth, &dense)?;
    for i in 0..pairs.len() {
        for j in i + 1..pairs.len() {
            let (ra, ta) = pairs[i];
            let (rb, tb) = pairs[j];
            if !paths_intersect(&tru_dense[ta], &tru_dense[tb]) || !paths_intersect(&rec_dense[ra], &rec_dense[rb]) {
                continue;
            }
            let by = |e: usize| {
                let keep = dist(rec_ends[ra][e], tru_ends[ta][e]) + dist(rec_ends[rb][e], tru_ends[tb][e]);
                let swap = dist(rec_ends[ra][e], tru_ends[tb][e]) + dist(rec_ends[rb][e], tru_ends[ta][e]);
                keep < swap
            };
            if by(0) && by(1) {
                out.crossing_detected = true;
            }
        }
    }
    Ok(out)
}
