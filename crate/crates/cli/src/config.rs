//! Run configuration: defaults, overlaid by a `key = value` file, overlaid by
//! command-line flags.

use std::path::PathBuf;

use untangle::curves::DiscretizationScheme;
use untangle::energy::EnergyConfig;
use untangle::formats::{parse_kv, KvSection};
use untangle::geometry::{IntegratorConfig, MetricParams};
use untangle::observation::{PhantomId, SensorGrid};
use untangle::solver::SolverConfig;
use untangle::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub phantom: PhantomId,
    pub n_times: usize,
    pub noise: f64,
    pub unbalanced: bool,
    pub n_side: usize,
    pub sigma: f64,

    pub beta: f64,
    pub epsilon: f64,
    pub xi: f64,
    /// `None` means `0.3 * beta` in unbalanced runs and 0 otherwise.
    pub zeta: Option<f64>,
    pub alpha_mass: f64,
    pub energy_exponent: u8,
    pub data_squared: bool,
    pub rk4_steps: usize,

    pub scheme: DiscretizationScheme,
    pub kn: usize,
    pub multistart: usize,
    pub max_outer_iters: usize,
    pub inner_iters: usize,
    pub adam_lr: f64,
    pub prune_threshold: f64,
    pub sasaki_lambda: f64,
    pub stop_tol: f64,

    pub seed: u64,
    pub out: PathBuf,
    pub plots: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let s = SolverConfig::default();
        Self {
            phantom: PhantomId::Crossing2,
            n_times: 21,
            noise: 0.0,
            unbalanced: false,
            n_side: 64,
            sigma: 0.05,
            beta: 1e-3,
            epsilon: 0.05,
            xi: 1.0,
            zeta: None,
            alpha_mass: 0.0,
            energy_exponent: 2,
            data_squared: true,
            rk4_steps: 32,
            scheme: s.scheme,
            kn: s.n_controls,
            multistart: s.multistart,
            max_outer_iters: s.max_outer_iters,
            inner_iters: s.inner_iters,
            adam_lr: s.adam_lr,
            prune_threshold: s.prune_threshold,
            sasaki_lambda: s.sasaki_lambda,
            stop_tol: s.stop_tol,
            seed: 0,
            out: PathBuf::from("."),
            plots: true,
        }
    }
}

fn parse_bool(sec: &KvSection, key: &str) -> Result<bool> {
    match sec.require(key)?.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected a boolean"))),
    }
}

impl RunConfig {
    /// Applies every key of a flat `key = value` document. Unknown keys and
    /// sections are errors.
    pub fn apply_kv(&mut self, text: &str) -> Result<()> {
        let doc = parse_kv(text)?;
        if doc.sections.len() > 1 {
            return Err(Error::Config("configuration files have no sections".into()));
        }
        let sec = doc.preamble();
        for (key, _) in &sec.entries {
            let k = key.as_str();
            match k {
                "phantom" | "id" => {
                    self.phantom =
                        PhantomId::parse(sec.require(k)?).ok_or_else(|| Error::Config(format!("{k}: unknown phantom")))?
                }
                "T" | "n_times" => self.n_times = sec.parse(k)?,
                "noise" => self.noise = sec.parse(k)?,
                "unbalanced" => self.unbalanced = parse_bool(sec, k)?,
                "n_side" => self.n_side = sec.parse(k)?,
                "sigma" => self.sigma = sec.parse(k)?,
                "beta" => self.beta = sec.parse(k)?,
                "epsilon" => self.epsilon = sec.parse(k)?,
                "xi" => self.xi = sec.parse(k)?,
                "zeta" => self.zeta = Some(sec.parse(k)?),
                "alpha_mass" => self.alpha_mass = sec.parse(k)?,
                "energy_exponent" => self.energy_exponent = sec.parse(k)?,
                "data_squared" => self.data_squared = parse_bool(sec, k)?,
                "rk4_steps" => self.rk4_steps = sec.parse(k)?,
                "scheme" => {
                    self.scheme = DiscretizationScheme::parse(sec.require(k)?)
                        .ok_or_else(|| Error::Config(format!("{k}: unknown scheme")))?
                }
                "kn" => self.kn = sec.parse(k)?,
                "multistart" => self.multistart = sec.parse(k)?,
                "max_outer_iters" => self.max_outer_iters = sec.parse(k)?,
                "inner_iters" => self.inner_iters = sec.parse(k)?,
                "adam_lr" => self.adam_lr = sec.parse(k)?,
                "prune_threshold" => self.prune_threshold = sec.parse(k)?,
                "sasaki_lambda" => self.sasaki_lambda = sec.parse(k)?,
                "stop_tol" => self.stop_tol = sec.parse(k)?,
                "seed" => self.seed = sec.parse(k)?,
                "out" => self.out = PathBuf::from(sec.require(k)?),
                "plots" => self.plots = parse_bool(sec, k)?,
                _ => return Err(Error::Config(format!("unknown key `{k}`"))),
            }
        }
        Ok(())
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let mut c = Self::default();
        c.apply_kv(text)?;
        Ok(c)
    }

    pub fn zeta(&self) -> f64 {
        self.zeta.unwrap_or(if self.unbalanced { 0.3 * self.beta } else { 0.0 })
    }

    pub fn grid(&self) -> Result<SensorGrid> {
        SensorGrid::new(self.n_side, self.sigma)
    }

    pub fn metric(&self) -> Result<MetricParams> {
        MetricParams::new(self.epsilon, self.xi)
    }

    pub fn energy(&self) -> Result<EnergyConfig> {
        let mut e = EnergyConfig::new(self.beta, self.metric()?);
        e.zeta = self.zeta();
        e.alpha_mass = self.alpha_mass;
        e.energy_exponent = self.energy_exponent;
        e.data_squared = self.data_squared;
        e.integrator = IntegratorConfig::rk4(self.rk4_steps);
        e.validate()?;
        Ok(e)
    }

    pub fn solver(&self) -> Result<SolverConfig> {
        let s = SolverConfig {
            max_outer_iters: self.max_outer_iters,
            n_controls: self.kn,
            scheme: self.scheme,
            multistart: self.multistart,
            adam_lr: self.adam_lr,
            inner_iters: self.inner_iters,
            prune_threshold: self.prune_threshold,
            sasaki_lambda: self.sasaki_lambda,
            seed: self.seed,
            balanced: !self.unbalanced,
            stop_tol: self.stop_tol,
        };
        s.validate()?;
        Ok(s)
    }

    /// Every derived configuration, so invalid combinations fail up front.
    pub fn validate(&self) -> Result<()> {
        let as_config = |e: Error| match e {
            Error::InvalidParams(m) => Error::Config(m),
            e => e,
        };
        self.grid().map_err(as_config)?;
        self.energy().map_err(as_config)?;
        self.solver().map_err(as_config)?;
        if self.n_times < 2 {
            return Err(Error::Config(format!("T must be at least 2, got {}", self.n_times)));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::Config(format!("noise must be nonnegative, got {}", self.noise)));
        }
        Ok(())
    }

    /// The flat text form accepted by [`RunConfig::from_kv`].
    pub fn to_kv(&self) -> String {
        let mut lines = vec![
            format!("phantom = {}", self.phantom.name()),
            format!("T = {}", self.n_times),
            format!("noise = {:?}", self.noise),
            format!("unbalanced = {}", self.unbalanced),
            format!("n_side = {}", self.n_side),
            format!("sigma = {:?}", self.sigma),
            format!("beta = {:?}", self.beta),
            format!("epsilon = {:?}", self.epsilon),
            format!("xi = {:?}", self.xi),
        ];
        if let Some(z) = self.zeta {
            lines.push(format!("zeta = {z:?}"));
        }
        lines.extend([
            format!("alpha_mass = {:?}", self.alpha_mass),
            format!("energy_exponent = {}", self.energy_exponent),
            format!("data_squared = {}", self.data_squared),
            format!("rk4_steps = {}", self.rk4_steps),
            format!("scheme = {}", self.scheme.name()),
            format!("kn = {}", self.kn),
            format!("multistart = {}", self.multistart),
            format!("max_outer_iters = {}", self.max_outer_iters),
            format!("inner_iters = {}", self.inner_iters),
            format!("adam_lr = {:?}", self.adam_lr),
            format!("prune_threshold = {:?}", self.prune_threshold),
            format!("sasaki_lambda = {:?}", self.sasaki_lambda),
            format!("stop_tol = {:?}", self.stop_tol),
            format!("seed = {}", self.seed),
            format!("out = {}", self.out.display()),
            format!("plots = {}", self.plots),
        ]);
        lines.join("\n") + "\n"
    }
}
