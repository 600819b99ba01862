//! Forward model: Gaussian test functions centred on the nodes of an
//! `n x n` grid over `[-1, 1]^2`, applied frame by frame to the spatial
//! positions of the atoms. Also the adjoint (certificate) field, synthetic
//! phantoms and relative Gaussian noise.

use std::f64::consts::{FRAC_PI_2, TAU};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::curves::{DiscreteCurve, DiscretizationScheme};
use crate::energy::MeasureState;
use crate::error::{Error, Result};
use crate::geometry::{IntegratorConfig, ManifoldPoint, MetricParams};

/// Kernel values below `exp(-WINDOW_EXP)` are treated as exact zeros.
const WINDOW_EXP: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorGrid {
    n_side: usize,
    sigma_kernel: f64,
}

impl SensorGrid {
    pub fn new(n_side: usize, sigma_kernel: f64) -> Result<Self> {
        if n_side < 2 {
            return Err(Error::InvalidParams(format!("grid needs n_side >= 2, got {n_side}")));
        }
        if !(sigma_kernel > 0.0 && sigma_kernel.is_finite()) {
            return Err(Error::InvalidParams(format!("kernel spread must be positive, got {sigma_kernel}")));
        }
        Ok(Self { n_side, sigma_kernel })
    }

    pub fn n_side(&self) -> usize {
        self.n_side
    }

    pub fn sigma(&self) -> f64 {
        self.sigma_kernel
    }

    pub fn n_nodes(&self) -> usize {
        self.n_side * self.n_side
    }

    pub fn spacing(&self) -> f64 {
        2.0 / (self.n_side - 1) as f64
    }

    /// 1-D node coordinate for column (or row) `i`.
    pub fn coord(&self, i: usize) -> f64 {
        -1.0 + i as f64 * self.spacing()
    }

    /// Position of node `j`, stored row-major: row indexes `y`, column indexes `x`.
    pub fn node(&self, j: usize) -> (f64, f64) {
        (self.coord(j % self.n_side), self.coord(j / self.n_side))
    }

    /// Nearest node index to a planar position (clamped to the grid).
    pub fn nearest_node(&self, x: f64, y: f64) -> usize {
        let idx = |v: f64| (((v + 1.0) / self.spacing()).round().max(0.0) as usize).min(self.n_side - 1);
        idx(y) * self.n_side + idx(x)
    }

    fn axis_window(&self, v: f64) -> (usize, usize) {
        let r = self.sigma_kernel * (2.0 * WINDOW_EXP).sqrt();
        let h = self.spacing();
        let lo = ((v - r + 1.0) / h).ceil().max(0.0);
        let hi = ((v + r + 1.0) / h).floor().min((self.n_side - 1) as f64);
        if hi < lo || !lo.is_finite() || !hi.is_finite() {
            (0, 0)
        } else {
            (lo as usize, hi as usize + 1)
        }
    }

    fn axis_profile(&self, v: f64) -> AxisProfile {
        let (lo, hi) = self.axis_window(v);
        let s2 = self.sigma_kernel * self.sigma_kernel;
        let mut g = Vec::with_capacity(hi.saturating_sub(lo));
        let mut dg = Vec::with_capacity(hi.saturating_sub(lo));
        for i in lo..hi {
            let d = self.coord(i) - v;
            let e = (-d * d / (2.0 * s2)).exp();
            g.push(e);
            // derivative with respect to the atom coordinate
            dg.push(e * d / s2);
        }
        AxisProfile { start: lo, g, dg }
    }

    /// Separable kernel profile of a point atom at `(x, y)`.
    pub fn profile(&self, x: f64, y: f64) -> KernelProfile {
        KernelProfile { px: self.axis_profile(x), py: self.axis_profile(y) }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct AxisProfile {
    start: usize,
    g: Vec<f64>,
    dg: Vec<f64>,
}

/// The test-function response `phi(x)` of one atom restricted to the nodes
/// where it is numerically nonzero, factored as `g_x (col) * g_y (row)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelProfile {
    px: AxisProfile,
    py: AxisProfile,
}

impl KernelProfile {
    /// Adds `scale * phi(x)` to a frame.
    pub fn accumulate(&self, values: &mut [f64], n_side: usize, scale: f64) {
        for (r, gy) in self.py.g.iter().enumerate() {
            let row = (self.py.start + r) * n_side + self.px.start;
            let s = scale * gy;
            for (c, gx) in self.px.g.iter().enumerate() {
                values[row + c] += s * gx;
            }
        }
    }

    /// `<values, phi(x)>` and its gradient with respect to the atom position.
    pub fn correlate(&self, values: &[f64], n_side: usize) -> (f64, [f64; 2]) {
        let (mut v, mut dx, mut dy) = (0.0, 0.0, 0.0);
        for (r, (gy, dgy)) in self.py.g.iter().zip(&self.py.dg).enumerate() {
            let row = (self.py.start + r) * n_side + self.px.start;
            let (mut a, mut b) = (0.0, 0.0);
            for (c, (gx, dgx)) in self.px.g.iter().zip(&self.px.dg).enumerate() {
                let val = values[row + c];
                a += val * gx;
                b += val * dgx;
            }
            v += gy * a;
            dx += gy * b;
            dy += dgy * a;
        }
        (v, [dx, dy])
    }

    /// `<phi(x), phi(y)>` between two profiles.
    pub fn overlap(&self, other: &KernelProfile) -> f64 {
        axis_overlap(&self.px, &other.px) * axis_overlap(&self.py, &other.py)
    }

    /// `||phi(x)||^2`.
    pub fn norm_sq(&self) -> f64 {
        self.overlap(self)
    }
}

fn axis_overlap(a: &AxisProfile, b: &AxisProfile) -> f64 {
    let lo = a.start.max(b.start);
    let hi = (a.start + a.g.len()).min(b.start + b.g.len());
    (lo..hi).map(|i| a.g[i - a.start] * b.g[i - b.start]).sum()
}

/// `exp(-|x - node|^2 / (2 sigma^2))`, peak value 1.
pub fn kernel_value(grid_node: (f64, f64), x: (f64, f64), grid: &SensorGrid) -> f64 {
    let d2 = (x.0 - grid_node.0).powi(2) + (x.1 - grid_node.1).powi(2);
    (-d2 / (2.0 * grid.sigma_kernel * grid.sigma_kernel)).exp()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub values: Vec<f64>,
}

impl Frame {
    pub fn zeros(grid: &SensorGrid) -> Self {
        Self { values: vec![0.0; grid.n_nodes()] }
    }

    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn dot(&self, other: &Frame) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationStack {
    times: Vec<f64>,
    frames: Vec<Frame>,
}

impl ObservationStack {
    pub fn new(times: Vec<f64>, frames: Vec<Frame>) -> Result<Self> {
        if times.len() != frames.len() {
            return Err(Error::InvalidParams(format!("{} times for {} frames", times.len(), frames.len())));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParams("frame times must increase strictly".into()));
        }
        if let Some(f) = frames.first() {
            if frames.iter().any(|g| g.values.len() != f.values.len()) {
                return Err(Error::InvalidParams("frames disagree in size".into()));
            }
        }
        Ok(Self { times, frames })
    }

    /// An all-zero stack on `T` uniform times covering `[0, 1]`.
    pub fn zeros(n_times: usize, grid: &SensorGrid) -> Self {
        Self { times: uniform_times(n_times), frames: vec![Frame::zeros(grid); n_times] }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn frames_mut(&mut self) -> &mut [Frame] {
        &mut self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.frames.iter().map(Frame::norm_sq).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &ObservationStack) -> f64 {
        self.frames.iter().zip(&other.frames).map(|(a, b)| a.dot(b)).sum()
    }

    /// `self - other`, frame by frame.
    pub fn sub(&self, other: &ObservationStack) -> ObservationStack {
        let frames = self
            .frames
            .iter()
            .zip(&other.frames)
            .map(|(a, b)| Frame { values: a.values.iter().zip(&b.values).map(|(x, y)| x - y).collect() })
            .collect();
        ObservationStack { times: self.times.clone(), frames }
    }

    pub fn scaled(&self, s: f64) -> ObservationStack {
        let frames = self.frames.iter().map(|f| Frame { values: f.values.iter().map(|v| v * s).collect() }).collect();
        ObservationStack { times: self.times.clone(), frames }
    }
}

/// `T` uniform times from 0 to 1 (a single time sits at 0).
pub fn uniform_times(n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![0.0],
        _ => (0..n).map(|i| i as f64 / (n - 1) as f64).collect(),
    }
}

/// `sum_atoms mass * phi(point)` for point atoms `(mass, (x, y))`.
pub fn forward_frame(atoms: &[(f64, (f64, f64))], grid: &SensorGrid) -> Frame {
    let mut f = Frame::zeros(grid);
    for &(m, (x, y)) in atoms {
        grid.profile(x, y).accumulate(&mut f.values, grid.n_side, m);
    }
    f
}

/// Spatial point atoms `(mass, position)` of a measure on curves at time `t`:
/// the atom mass times the amplitude channel when present.
pub fn slice_atoms(m: &MeasureState, t: f64, params: MetricParams, integ: &IntegratorConfig) -> Result<Vec<(f64, (f64, f64))>> {
    m.atoms
        .iter()
        .map(|a| {
            let p = a.curve.eval(t, params, integ)?;
            let h = a.curve.amplitude_at(t).unwrap_or(1.0);
            Ok((a.mass * h, (p.x, p.y)))
        })
        .collect()
}

/// Frame `i` is the forward frame of the measure evaluated at `stack_times[i]`.
/// Orientation is not observed.
pub fn forward_stack(
    m: &MeasureState,
    stack_times: &[f64],
    grid: &SensorGrid,
    params: MetricParams,
    integ: &IntegratorConfig,
) -> Result<ObservationStack> {
    let frames =
        stack_times.iter().map(|&t| Ok(forward_frame(&slice_atoms(m, t, params, integ)?, grid))).collect::<Result<Vec<_>>>()?;
    ObservationStack::new(stack_times.to_vec(), frames)
}

/// `eta(t_i, x) = (1 / weight) <residual_i, phi(x)>`, defined on the stack
/// time slices only.
#[derive(Debug, Clone)]
pub struct CertificateField {
    residual: ObservationStack,
    grid: SensorGrid,
    weight: f64,
}

impl CertificateField {
    pub fn times(&self) -> &[f64] {
        self.residual.times()
    }

    pub fn grid(&self) -> &SensorGrid {
        &self.grid
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn residual(&self) -> &ObservationStack {
        &self.residual
    }

    pub fn eval(&self, slice: usize, x: f64, y: f64) -> f64 {
        self.eval_with_grad(slice, x, y).0
    }

    /// Value and planar gradient at one slice.
    pub fn eval_with_grad(&self, slice: usize, x: f64, y: f64) -> (f64, [f64; 2]) {
        let (v, g) = self.grid.profile(x, y).correlate(&self.residual.frames[slice].values, self.grid.n_side);
        (v / self.weight, [g[0] / self.weight, g[1] / self.weight])
    }

    /// The field at every grid node of one slice (separable convolution).
    pub fn node_map(&self, slice: usize) -> Vec<f64> {
        let n = self.grid.n_side;
        let kern: Vec<Vec<(usize, f64)>> = (0..n)
            .map(|i| {
                let p = self.grid.axis_profile(self.grid.coord(i));
                p.g.iter().enumerate().map(|(k, g)| (p.start + k, *g)).collect()
            })
            .collect();
        let r = &self.residual.frames[slice].values;
        // convolve along x, then along y
        let mut tmp = vec![0.0; n * n];
        for row in 0..n {
            for col in 0..n {
                tmp[row * n + col] = kern[col].iter().map(|&(k, g)| g * r[row * n + k]).sum();
            }
        }
        let mut out = vec![0.0; n * n];
        for row in 0..n {
            for col in 0..n {
                out[row * n + col] = kern[row].iter().map(|&(k, g)| g * tmp[k * n + col]).sum::<f64>() / self.weight;
            }
        }
        out
    }
}

pub fn certificate_field(residual: ObservationStack, grid: &SensorGrid, weight: f64) -> Result<CertificateField> {
    if !(weight > 0.0) {
        return Err(Error::InvalidParams(format!("certificate weight must be positive, got {weight}")));
    }
    Ok(CertificateField { residual, grid: *grid, weight })
}

/// A ground-truth trajectory.
#[derive(Debug, Clone, PartialEq)]
pub enum Trajectory {
    Curve(DiscreteCurve),
    /// One counter-clockwise revolution over `[0, 1]` starting at angle `phase`.
    Circle {
        center: (f64, f64),
        radius: f64,
        phase: f64,
    },
}

impl Trajectory {
    pub fn point(&self, t: f64) -> Result<ManifoldPoint> {
        match self {
            Trajectory::Curve(c) => c.eval(t, MetricParams::euclidean(), &IntegratorConfig::default()),
            Trajectory::Circle { center, radius, phase } => {
                let a = phase + TAU * t;
                Ok(ManifoldPoint::new(center.0 + radius * a.cos(), center.1 + radius * a.sin(), a + FRAC_PI_2))
            }
        }
    }

    pub fn amplitude(&self, t: f64) -> f64 {
        match self {
            Trajectory::Curve(c) => c.amplitude_at(t).unwrap_or(1.0),
            Trajectory::Circle { .. } => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub curves: Vec<Trajectory>,
    pub masses: Vec<f64>,
}

impl GroundTruth {
    pub fn new(curves: Vec<Trajectory>, masses: Vec<f64>) -> Result<Self> {
        if curves.len() != masses.len() {
            return Err(Error::InvalidParams("one mass per ground-truth curve".into()));
        }
        if masses.iter().any(|m| !(*m > 0.0)) {
            return Err(Error::InvalidParams("ground-truth masses must be positive".into()));
        }
        Ok(Self { curves, masses })
    }

    /// Effective mass `mass * amplitude(t)` of curve `k`.
    pub fn mass_at(&self, k: usize, t: f64) -> f64 {
        self.masses[k] * self.curves[k].amplitude(t)
    }

    pub fn stack(&self, times: &[f64], grid: &SensorGrid) -> Result<ObservationStack> {
        let frames = times
            .iter()
            .map(|&t| {
                let atoms = (0..self.curves.len())
                    .map(|k| {
                        let p = self.curves[k].point(t)?;
                        Ok((self.mass_at(k, t), (p.x, p.y)))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(forward_frame(&atoms, grid))
            })
            .collect::<Result<Vec<_>>>()?;
        ObservationStack::new(times.to_vec(), frames)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhantomId {
    /// Two straight trajectories crossing at the domain centre at `t = 0.5`.
    Crossing2,
    /// Three sources sharing one circular path with staggered phases.
    Triple3,
}

impl PhantomId {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "crossing2" => Some(Self::Crossing2),
            "triple3" => Some(Self::Triple3),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Crossing2 => "crossing2",
            Self::Triple3 => "triple3",
        }
    }
}

/// Straight segment as a Bezier curve with evenly spaced collinear controls
/// (uniform speed), heading aligned with the motion.
fn straight(from: (f64, f64), to: (f64, f64), n_controls: usize) -> Result<DiscreteCurve> {
    let heading = (to.1 - from.1).atan2(to.0 - from.0);
    let controls = (0..n_controls)
        .map(|k| {
            let s = k as f64 / (n_controls - 1) as f64;
            ManifoldPoint::new(from.0 + s * (to.0 - from.0), from.1 + s * (to.1 - from.1), heading)
        })
        .collect();
    DiscreteCurve::new(DiscretizationScheme::Bezier, controls, None, None)
}

pub fn phantom_truth(id: PhantomId, unbalanced: bool) -> Result<GroundTruth> {
    match id {
        PhantomId::Crossing2 => {
            let a = straight((-0.6, -0.5), (0.6, 0.5), 5)?;
            let b = straight((-0.6, 0.5), (0.6, -0.5), 5)?;
            let (a, b) = if unbalanced {
                // the second source fades out towards t = 1
                (a.with_amplitudes(vec![1.0, 1.1, 1.2, 1.1, 1.0])?, b.with_amplitudes(vec![1.0, 1.0, 0.8, 0.3, 0.0])?)
            } else {
                (a, b)
            };
            GroundTruth::new(vec![Trajectory::Curve(a), Trajectory::Curve(b)], vec![1.0, 1.0])
        }
        PhantomId::Triple3 => {
            let curves =
                (0..3).map(|k| Trajectory::Circle { center: (0.0, 0.0), radius: 0.5, phase: TAU * k as f64 / 3.0 }).collect();
            GroundTruth::new(curves, vec![1.0; 3])
        }
    }
}

/// Ground truth and its noiseless stack on `T` uniform times.
pub fn make_phantom(
    id: PhantomId,
    n_times: usize,
    unbalanced: bool,
    grid: &SensorGrid,
) -> Result<(GroundTruth, ObservationStack)> {
    if n_times < 2 {
        return Err(Error::InvalidParams(format!("a phantom needs T >= 2, got {n_times}")));
    }
    let truth = phantom_truth(id, unbalanced)?;
    let stack = truth.stack(&uniform_times(n_times), grid)?;
    Ok((truth, stack))
}

/// Adds i.i.d. Gaussian noise rescaled so that `||noise||_F = level * ||stack||_F`.
pub fn add_noise(stack: &ObservationStack, level: f64, seed: u64) -> Result<ObservationStack> {
    if !(level >= 0.0 && level.is_finite()) {
        return Err(Error::InvalidParams(format!("noise level must be nonnegative, got {level}")));
    }
    let norm = stack.frobenius_norm();
    if level == 0.0 || norm == 0.0 {
        return Ok(stack.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw: Vec<Vec<f64>> =
        stack.frames.iter().map(|f| f.values.iter().map(|_| StandardNormal.sample(&mut rng)).collect()).collect();
    let raw_norm = raw.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
    let scale = level * norm / raw_norm;
    let frames = stack
        .frames
        .iter()
        .zip(&raw)
        .map(|(f, n)| Frame { values: f.values.iter().zip(n).map(|(v, e)| v + scale * e).collect() })
        .collect();
    ObservationStack::new(stack.times.clone(), frames)
}
