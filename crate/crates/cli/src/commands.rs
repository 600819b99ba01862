use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use untangle::curves::DiscretizationScheme;
use untangle::formats::{
    decode_report, decode_stack, decode_truth, encode_report, encode_stack, encode_truth, trajectory_csv, ReportFile,
};
use untangle::geometry::MetricParams;
use untangle::metrics::{compute_metrics, min_pairwise_distance, TrajectoryMetrics};
use untangle::observation::{add_noise, make_phantom, uniform_times, GroundTruth, PhantomId};
use untangle::solver::solve;
use untangle::validation::{run_suite, Suite, ValidationOptions};

use crate::config::RunConfig;
use crate::plot::{paths_svg, time_svg};

pub const STACK_FILE: &str = "stack.otg";
pub const TRUTH_FILE: &str = "truth.txt";
pub const REPORT_FILE: &str = "report.txt";
pub const CSV_FILE: &str = "trajectories.csv";
pub const METRICS_FILE: &str = "metrics.txt";
pub const PATHS_SVG: &str = "paths.svg";
pub const TIME_SVG: &str = "time.svg";

#[derive(Debug, Parser)]
#[command(name = "untangle", version, about = "Off-the-grid recovery of crossing trajectories from blurred frame stacks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Default)]
pub struct Shared {
    /// Flat `key = value` configuration file; flags override it.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct ModelFlags {
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub xi: Option<f64>,
    /// Amplitude regularizer weight (default 0.3 * beta when unbalanced).
    #[arg(long)]
    pub zeta: Option<f64>,
    #[arg(long)]
    pub alpha_mass: Option<f64>,
    #[arg(long, value_parser = parse_scheme)]
    pub scheme: Option<DiscretizationScheme>,
    /// Control points per curve.
    #[arg(long)]
    pub kn: Option<usize>,
    #[arg(long)]
    pub multistart: Option<usize>,
    #[arg(long)]
    pub unbalanced: bool,
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub energy_exponent: Option<u8>,
    #[arg(long)]
    pub max_outer_iters: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a phantom stack and its ground-truth sidecar.
    Phantom {
        #[command(flatten)]
        shared: Shared,
        #[arg(long, value_parser = parse_phantom)]
        id: Option<PhantomId>,
        #[arg(long = "T")]
        t: Option<usize>,
        /// Relative Frobenius noise level.
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long)]
        unbalanced: bool,
        #[arg(long)]
        n_side: Option<usize>,
        #[arg(long)]
        sigma: Option<f64>,
    },
    /// Reconstruct trajectories from a stack file.
    Solve {
        #[command(flatten)]
        shared: Shared,
        #[command(flatten)]
        model: ModelFlags,
        /// Stack file (default `<out>/stack.otg`).
        #[arg(long, value_name = "PATH")]
        stack: Option<PathBuf>,
        /// Ground-truth sidecar; when present a metrics file is written.
        #[arg(long, value_name = "PATH")]
        truth: Option<PathBuf>,
        #[arg(long)]
        no_plots: bool,
    },
    /// Run the numerical property suites; exits nonzero on any failure.
    Validate {
        #[arg(long, value_parser = parse_suite)]
        suite: Vec<Suite>,
        #[arg(long, value_parser = parse_scheme)]
        scheme: Vec<DiscretizationScheme>,
        /// Segment counts for the discretization suite, e.g. `2,4,8,16`.
        #[arg(long, value_delimiter = ',')]
        kn: Vec<usize>,
        /// Metric relaxation for the piecewise-geodesic corpus.
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        xi: Option<f64>,
        #[arg(long)]
        curves: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Compare a solve report with a ground-truth sidecar.
    Metrics {
        #[arg(long, value_name = "PATH")]
        report: PathBuf,
        #[arg(long, value_name = "PATH")]
        truth: PathBuf,
        /// Also write `metrics.txt` into this directory.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Regenerate CSV and SVG output from a stored report.
    Plot {
        #[arg(long, value_name = "PATH")]
        report: PathBuf,
        #[arg(long, value_name = "PATH")]
        truth: Option<PathBuf>,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
}

fn parse_scheme(s: &str) -> Result<DiscretizationScheme, String> {
    DiscretizationScheme::parse(s).ok_or_else(|| format!("unknown scheme `{s}` (polygonal, bezier, geodesic)"))
}

fn parse_phantom(s: &str) -> Result<PhantomId, String> {
    PhantomId::parse(s).ok_or_else(|| format!("unknown phantom `{s}` (crossing2, triple3)"))
}

fn parse_suite(s: &str) -> Result<Suite, String> {
    Suite::parse(s).ok_or_else(|| format!("unknown suite `{s}`"))
}

fn base_config(shared: &Shared) -> anyhow::Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &shared.config {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        cfg.apply_kv(&text).with_context(|| format!("in {}", path.display()))?;
    }
    if let Some(s) = shared.seed {
        cfg.seed = s;
    }
    if let Some(o) = &shared.out {
        cfg.out = o.clone();
    }
    Ok(cfg)
}

fn apply_model(cfg: &mut RunConfig, m: &ModelFlags) {
    macro_rules! set {
        ($($f:ident => $g:ident),*) => { $( if let Some(v) = m.$f { cfg.$g = v; } )* };
    }
    set!(beta => beta, epsilon => epsilon, xi => xi, alpha_mass => alpha_mass, scheme => scheme, kn => kn,
         multistart => multistart, energy_exponent => energy_exponent, max_outer_iters => max_outer_iters);
    if m.zeta.is_some() {
        cfg.zeta = m.zeta;
    }
    if m.unbalanced {
        cfg.unbalanced = true;
    }
}

fn write(dir: &Path, name: &str, contents: impl AsRef<[u8]>) -> anyhow::Result<PathBuf> {
    let p = dir.join(name);
    fs::write(&p, contents).with_context(|| format!("writing {}", p.display()))?;
    Ok(p)
}

fn ensure_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn read_truth(path: &Path) -> anyhow::Result<GroundTruth> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    decode_truth(&text).with_context(|| format!("parsing {}", path.display()))
}

fn read_report(path: &Path) -> anyhow::Result<ReportFile> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    decode_report(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn metrics_text(m: &TrajectoryMetrics, min_pairwise: f64) -> String {
    let join = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ");
    let assign = m.assignment.iter().map(|a| a.map_or("-".to_string(), |k| k.to_string())).collect::<Vec<_>>().join(" ");
    format!(
        "matched_rmse = {:?}\nendpoint_error = {:?}\ncrossing_detected = {}\nmass_relative_error = {:?}\n\
         n_recovered = {}\nn_truth = {}\nassignment = {assign}\nrecovered_mean_masses = {}\ntruth_mean_masses = {}\n\
         min_pairwise_distance = {:?}\n",
        m.matched_rmse,
        m.endpoint_error,
        m.crossing_detected,
        m.mass_relative_error,
        m.n_recovered,
        m.n_truth,
        join(&m.recovered_mean_masses),
        join(&m.truth_mean_masses),
        min_pairwise
    )
}

fn evaluate(file: &ReportFile, truth: &GroundTruth) -> anyhow::Result<String> {
    let integ = &file.integrator;
    let times = uniform_times(file.n_times);
    let state = &file.report.final_state;
    let m = compute_metrics(state, truth, &times, file.metric, integ)?;
    let d = min_pairwise_distance(state, &times, file.metric, integ)?;
    Ok(metrics_text(&m, d))
}

/// CSV on the stack times and, optionally, the two SVG overlays.
fn render(file: &ReportFile, truth: Option<&GroundTruth>, dir: &Path, plots: bool) -> anyhow::Result<()> {
    let integ = &file.integrator;
    let csv = trajectory_csv(&file.report.final_state, &uniform_times(file.n_times), file.metric, integ)?;
    write(dir, CSV_FILE, csv)?;
    if plots {
        write(dir, PATHS_SVG, paths_svg(file, truth)?)?;
        write(dir, TIME_SVG, time_svg(file, truth)?)?;
    }
    Ok(())
}

pub fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Phantom { shared, id, t, noise, unbalanced, n_side, sigma } => {
            let mut cfg = base_config(&shared)?;
            if let Some(v) = id {
                cfg.phantom = v;
            }
            if let Some(v) = t {
                cfg.n_times = v;
            }
            if let Some(v) = noise {
                cfg.noise = v;
            }
            if let Some(v) = n_side {
                cfg.n_side = v;
            }
            if let Some(v) = sigma {
                cfg.sigma = v;
            }
            cfg.unbalanced |= unbalanced;
            cfg.validate()?;
            let grid = cfg.grid()?;
            let (truth, clean) = make_phantom(cfg.phantom, cfg.n_times, cfg.unbalanced, &grid)?;
            let stack = add_noise(&clean, cfg.noise, cfg.seed)?;
            ensure_dir(&cfg.out)?;
            let sp = write(&cfg.out, STACK_FILE, encode_stack(&stack, &grid, cfg.noise, cfg.seed))?;
            write(&cfg.out, TRUTH_FILE, encode_truth(&truth))?;
            let peak = stack.frames().iter().flat_map(|f| &f.values).fold(0.0f64, |m, v| m.max(v.abs()));
            println!(
                "phantom {} T={} grid={}x{} sigma={}",
                cfg.phantom.name(),
                stack.len(),
                grid.n_side(),
                grid.n_side(),
                grid.sigma()
            );
            println!("noise level {} (seed {})", cfg.noise, cfg.seed);
            println!(
                "frobenius norm {:.6e} clean {:.6e} max |value| {:.6e}",
                stack.frobenius_norm(),
                clean.frobenius_norm(),
                peak
            );
            println!("wrote {}", sp.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Solve { shared, model, stack, truth, no_plots } => {
            let mut cfg = base_config(&shared)?;
            apply_model(&mut cfg, &model);
            if no_plots {
                cfg.plots = false;
            }
            let stack_path = stack.unwrap_or_else(|| cfg.out.join(STACK_FILE));
            let bytes = fs::read(&stack_path).with_context(|| format!("reading {}", stack_path.display()))?;
            let sf = decode_stack(&bytes).with_context(|| format!("parsing {}", stack_path.display()))?;
            cfg.n_side = sf.header.n_side;
            cfg.sigma = sf.header.sigma;
            cfg.n_times = sf.header.n_times.max(2);
            cfg.noise = sf.header.level;
            cfg.validate()?;
            let (grid, ecfg, scfg) = (sf.header.grid()?, cfg.energy()?, cfg.solver()?);
            let truth = truth.as_deref().map(read_truth).transpose()?;

            let report = solve(&sf.stack, &grid, &scfg, &ecfg)?;
            let file = ReportFile { report, metric: ecfg.metric, integrator: ecfg.integrator, n_times: sf.stack.len() };
            ensure_dir(&cfg.out)?;
            write(&cfg.out, REPORT_FILE, encode_report(&file))?;
            write(&cfg.out, "config.txt", cfg.to_kv())?;
            render(&file, truth.as_ref(), &cfg.out, cfg.plots)?;
            let r = &file.report;
            println!(
                "stop {} after {} iterations, {} atoms, energy {:.6e}, {:.2}s",
                r.stop_reason.name(),
                r.energy_trace.len(),
                r.final_state.len(),
                r.energy_trace.last().copied().unwrap_or(0.0),
                r.wall_times.total
            );
            if let Some(t) = &truth {
                let text = evaluate(&file, t)?;
                write(&cfg.out, METRICS_FILE, &text)?;
                print!("{text}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { suite, scheme, kn, epsilon, xi, curves, seed } => {
            let mut opts = ValidationOptions::default();
            if !scheme.is_empty() {
                opts.schemes = scheme;
            }
            if !kn.is_empty() {
                opts.segment_counts = kn;
            }
            if epsilon.is_some() || xi.is_some() {
                opts.geodesic_metric = MetricParams::new(
                    epsilon.unwrap_or(opts.geodesic_metric.epsilon()),
                    xi.unwrap_or(opts.geodesic_metric.xi()),
                )?;
            }
            if let Some(c) = curves {
                opts.n_curves = c;
            }
            if let Some(s) = seed {
                opts.seed = s;
            }
            let suites = if suite.is_empty() { Suite::ALL.to_vec() } else { suite };
            let mut ok = true;
            for s in suites {
                match run_suite(s, &opts) {
                    Ok(results) => {
                        for r in results {
                            ok &= r.passed;
                            println!("{r}");
                        }
                    }
                    Err(e) => {
                        ok = false;
                        println!("FAIL {:<36} error: {e}", s.name());
                    }
                }
            }
            println!("{}", if ok { "all suites passed" } else { "some suites failed" });
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::Metrics { report, truth, out } => {
            let file = read_report(&report)?;
            let truth = read_truth(&truth)?;
            let text = evaluate(&file, &truth)?;
            if let Some(dir) = out {
                ensure_dir(&dir)?;
                write(&dir, METRICS_FILE, &text)?;
            }
            print!("{text}");
            Ok(ExitCode::SUCCESS)
        }
        Command::Plot { report, truth, out } => {
            let file = read_report(&report)?;
            let truth = truth.as_deref().map(read_truth).transpose()?;
            if file.n_times == 0 && !file.report.final_state.is_empty() {
                bail!("report has no time slices");
            }
            ensure_dir(&out)?;
            render(&file, truth.as_ref(), &out, true)?;
            println!("wrote {}, {}, {}", CSV_FILE, PATHS_SVG, TIME_SVG);
            Ok(ExitCode::SUCCESS)
        }
    }
}
