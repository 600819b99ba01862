//! On-disk formats: the binary observation stack, key = value text documents
//! (ground-truth sidecar, solve report, run configuration) and trajectory CSV.

use std::fmt::Write as _;

use crate::curves::{DiscreteCurve, DiscretizationScheme};
use crate::energy::{Atom, MeasureState};
use crate::geometry::{IntegratorConfig, IntegratorMethod, ManifoldPoint, MetricParams, TangentVector};
use crate::observation::{uniform_times, Frame, GroundTruth, ObservationStack, SensorGrid, Trajectory};
use crate::solver::{SolveReport, StopReason, WallTimes};
use crate::{Error, Result};

pub const STACK_MAGIC: &str = "OTGSTACK";
pub const STACK_VERSION: &str = "v1";
const TRUTH_FORMAT: &str = "untangle-truth v1";
const REPORT_FORMAT: &str = "untangle-report v1";
/// Longest accepted stack header line, newline included.
const MAX_HEADER: usize = 512;

// ---------------------------------------------------------------------------
// stack files

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StackHeader {
    pub n_side: usize,
    pub n_times: usize,
    pub sigma: f64,
    pub level: f64,
    pub seed: u64,
}

impl StackHeader {
    pub fn grid(&self) -> Result<SensorGrid> {
        SensorGrid::new(self.n_side, self.sigma)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StackFile {
    pub header: StackHeader,
    pub stack: ObservationStack,
}

/// Header line followed by `T * n_side^2` little-endian f64 values, frame by frame.
pub fn encode_stack(stack: &ObservationStack, grid: &SensorGrid, level: f64, seed: u64) -> Vec<u8> {
    let header =
        format!("{STACK_MAGIC} {STACK_VERSION} {} {} {:?} {:?} {}\n", grid.n_side(), stack.len(), grid.sigma(), level, seed);
    let mut out = Vec::with_capacity(header.len() + 8 * stack.len() * grid.n_nodes());
    out.extend_from_slice(header.as_bytes());
    for f in stack.frames() {
        for v in &f.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn stack_err(msg: impl Into<String>) -> Error {
    Error::format("stack file", msg)
}

pub fn decode_stack(bytes: &[u8]) -> Result<StackFile> {
    let nl = bytes.iter().take(MAX_HEADER).position(|&b| b == b'\n').ok_or_else(|| stack_err("missing header line"))?;
    let line = std::str::from_utf8(&bytes[..nl]).map_err(|_| stack_err("header is not UTF-8"))?;
    let tok: Vec<&str> = line.split_ascii_whitespace().collect();
    if tok.len() != 7 {
        return Err(stack_err(format!("header needs 7 fields, got {}", tok.len())));
    }
    if tok[0] != STACK_MAGIC {
        return Err(stack_err("bad magic"));
    }
    if tok[1] != STACK_VERSION {
        return Err(stack_err(format!("unsupported version {}", tok[1])));
    }
    let n_side: usize = tok[2].parse().map_err(|_| stack_err("bad n_side"))?;
    let n_times: usize = tok[3].parse().map_err(|_| stack_err("bad T"))?;
    let sigma: f64 = tok[4].parse().map_err(|_| stack_err("bad sigma"))?;
    let level: f64 = tok[5].parse().map_err(|_| stack_err("bad noise level"))?;
    let seed: u64 = tok[6].parse().map_err(|_| stack_err("bad seed"))?;
    if !(level >= 0.0 && level.is_finite()) {
        return Err(stack_err("noise level must be finite and nonnegative"));
    }
    if n_times == 0 {
        return Err(stack_err("T must be at least 1"));
    }
    let header = StackHeader { n_side, n_times, sigma, level, seed };
    let grid = header.grid()?;
    let payload = &bytes[nl + 1..];
    let expected = n_side
        .checked_mul(n_side)
        .and_then(|n| n.checked_mul(n_times))
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| stack_err("declared size overflows"))?;
    if payload.len() != expected {
        return Err(stack_err(format!("payload has {} bytes, header implies {expected}", payload.len())));
    }
    let frames = payload
        .chunks_exact(8 * grid.n_nodes())
        .map(|chunk| {
            let values: Vec<f64> =
                chunk.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk"))).collect();
            if values.iter().any(|v| !v.is_finite()) {
                return Err(stack_err("non-finite sample"));
            }
            Ok(Frame { values })
        })
        .collect::<Result<Vec<_>>>()?;
    let stack = ObservationStack::new(uniform_times(n_times), frames)?;
    Ok(StackFile { header, stack })
}

// ---------------------------------------------------------------------------
// key = value documents

#[derive(Debug, Clone, PartialEq, Default)]
pub struct KvSection {
    pub name: String,
    pub entries: Vec<(String, String)>,
}

/// Flat `key = value` text with optional `[section]` headers. `#` starts a
/// comment line. The preamble before the first header is section `""`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct KvDocument {
    pub sections: Vec<KvSection>,
}

pub fn parse_kv(text: &str) -> Result<KvDocument> {
    let err = |n: usize, msg: &str| Error::format("key = value document", format!("line {}: {msg}", n + 1));
    let mut doc = KvDocument { sections: vec![KvSection::default()] };
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest.strip_suffix(']').ok_or_else(|| err(n, "unterminated section header"))?.trim();
            if name.is_empty() {
                return Err(err(n, "empty section name"));
            }
            if doc.sections.iter().any(|s| s.name == name) {
                return Err(err(n, "duplicate section"));
            }
            doc.sections.push(KvSection { name: name.to_string(), entries: Vec::new() });
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| err(n, "expected `key = value`"))?;
        let k = k.trim();
        if k.is_empty() || k.contains(char::is_whitespace) {
            return Err(err(n, "bad key"));
        }
        let sec = doc.sections.last_mut().expect("preamble section");
        if sec.entries.iter().any(|(e, _)| e == k) {
            return Err(err(n, &format!("duplicate key `{k}`")));
        }
        sec.entries.push((k.to_string(), v.trim().to_string()));
    }
    Ok(doc)
}

impl KvDocument {
    pub fn preamble(&self) -> &KvSection {
        &self.sections[0]
    }

    pub fn section(&self, name: &str) -> Option<&KvSection> {
        self.sections.iter().find(|s| s.name == name)
    }
}

impl KvSection {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    fn err(&self, key: &str, msg: &str) -> Error {
        let scope = if self.name.is_empty() { String::new() } else { format!("[{}] ", self.name) };
        Error::format("key = value document", format!("{scope}{key}: {msg}"))
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key).ok_or_else(|| self.err(key, "missing"))
    }

    pub fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.require(key)?.parse().map_err(|_| self.err(key, "unparsable value"))
    }

    pub fn parse_opt<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key).map(|v| v.parse().map_err(|_| self.err(key, "unparsable value"))).transpose()
    }

    pub fn floats(&self, key: &str) -> Result<Vec<f64>> {
        parse_floats(self.require(key)?).ok_or_else(|| self.err(key, "expected whitespace-separated numbers"))
    }

    /// `;`-separated triples.
    pub fn triples(&self, key: &str) -> Result<Vec<[f64; 3]>> {
        let v = self.require(key)?;
        if v.is_empty() {
            return Ok(Vec::new());
        }
        v.split(';')
            .map(|chunk| match parse_floats(chunk).as_deref() {
                Some(&[a, b, c]) => Ok([a, b, c]),
                _ => Err(self.err(key, "expected `;`-separated triples")),
            })
            .collect()
    }
}

fn parse_floats(s: &str) -> Option<Vec<f64>> {
    s.split_ascii_whitespace().map(|t| t.parse().ok()).collect()
}

/// Shortest round-trip formatting.
fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

fn fmt_floats(v: &[f64]) -> String {
    v.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(" ")
}

fn fmt_triples(v: impl IntoIterator<Item = [f64; 3]>) -> String {
    v.into_iter().map(|t| fmt_floats(&t)).collect::<Vec<_>>().join("; ")
}

fn write_curve(out: &mut String, c: &DiscreteCurve) {
    let _ = writeln!(out, "scheme = {}", c.scheme().name());
    let _ = writeln!(out, "controls = {}", fmt_triples(c.controls().iter().map(|p| p.to_array())));
    if let Some(v) = c.velocities() {
        let _ = writeln!(out, "velocities = {}", fmt_triples(v.iter().map(|v| v.to_array())));
    }
    if let Some(a) = c.amplitudes() {
        let _ = writeln!(out, "amplitudes = {}", fmt_floats(a));
    }
}

fn read_curve(sec: &KvSection) -> Result<DiscreteCurve> {
    let scheme_s = sec.require("scheme")?;
    let scheme = DiscretizationScheme::parse(scheme_s).ok_or_else(|| sec.err("scheme", "unknown scheme"))?;
    let controls = sec.triples("controls")?.into_iter().map(|[x, y, t]| ManifoldPoint::new(x, y, t)).collect();
    let velocities = match sec.get("velocities") {
        Some(_) => Some(sec.triples("velocities")?.into_iter().map(|[a, b, c]| TangentVector::new(a, b, c)).collect()),
        None => None,
    };
    let amplitudes = match sec.get("amplitudes") {
        Some(_) => Some(sec.floats("amplitudes")?),
        None => None,
    };
    DiscreteCurve::new(scheme, controls, velocities, amplitudes)
}

fn count_sections(doc: &KvDocument, prefix: &str, declared: usize) -> Result<()> {
    let found = doc.sections.iter().filter(|s| s.name.starts_with(prefix)).count();
    if found != declared {
        return Err(Error::format("key = value document", format!("declared {declared} `{prefix}` sections, found {found}")));
    }
    Ok(())
}

fn check_format(doc: &KvDocument, expected: &'static str) -> Result<()> {
    match doc.preamble().get("format") {
        Some(f) if f == expected => Ok(()),
        Some(f) => Err(Error::format(expected, format!("unexpected format tag `{f}`"))),
        None => Err(Error::format(expected, "missing format tag")),
    }
}

// ---------------------------------------------------------------------------
// ground-truth sidecar

pub fn encode_truth(truth: &GroundTruth) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "format = {TRUTH_FORMAT}");
    let _ = writeln!(out, "n_curves = {}", truth.curves.len());
    for (k, (c, m)) in truth.curves.iter().zip(&truth.masses).enumerate() {
        let _ = writeln!(out, "\n[curve {k}]");
        let _ = writeln!(out, "mass = {}", fmt_f64(*m));
        match c {
            Trajectory::Curve(c) => {
                let _ = writeln!(out, "kind = curve");
                write_curve(&mut out, c);
            }
            Trajectory::Circle { center, radius, phase } => {
                let _ = writeln!(out, "kind = circle");
                let _ = writeln!(out, "center = {}", fmt_floats(&[center.0, center.1]));
                let _ = writeln!(out, "radius = {}", fmt_f64(*radius));
                let _ = writeln!(out, "phase = {}", fmt_f64(*phase));
            }
        }
    }
    out
}

pub fn decode_truth(text: &str) -> Result<GroundTruth> {
    let doc = parse_kv(text)?;
    check_format(&doc, TRUTH_FORMAT)?;
    let n: usize = doc.preamble().parse("n_curves")?;
    count_sections(&doc, "curve ", n)?;
    let mut curves = Vec::with_capacity(n);
    let mut masses = Vec::with_capacity(n);
    for k in 0..n {
        let sec =
            doc.section(&format!("curve {k}")).ok_or_else(|| Error::format("ground truth", format!("missing [curve {k}]")))?;
        masses.push(sec.parse::<f64>("mass")?);
        let traj = match sec.require("kind")? {
            "curve" => Trajectory::Curve(read_curve(sec)?),
            "circle" => {
                let c = sec.floats("center")?;
                let &[cx, cy] = c.as_slice() else {
                    return Err(sec.err("center", "expected two numbers"));
                };
                let radius: f64 = sec.parse("radius")?;
                let phase: f64 = sec.parse("phase")?;
                if ![cx, cy, radius, phase].iter().all(|v| v.is_finite()) || radius < 0.0 {
                    return Err(sec.err("circle", "non-finite or negative parameters"));
                }
                Trajectory::Circle { center: (cx, cy), radius, phase }
            }
            _ => return Err(sec.err("kind", "expected `curve` or `circle`")),
        };
        curves.push(traj);
    }
    GroundTruth::new(curves, masses)
}

// ---------------------------------------------------------------------------
// solve report

/// A report plus what is needed to evaluate its curves without the data.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportFile {
    pub report: SolveReport,
    pub metric: MetricParams,
    pub integrator: IntegratorConfig,
    /// Number of observation slices the solve saw.
    pub n_times: usize,
}

fn fmt_integrator(i: &IntegratorConfig) -> String {
    match i.method {
        IntegratorMethod::Rk4Fixed { steps } => format!("rk4 {steps} {:?}", i.divergence_bound),
        IntegratorMethod::Dp54Adaptive { rtol, atol, max_steps } => {
            format!("dp54 {rtol:?} {atol:?} {max_steps} {:?}", i.divergence_bound)
        }
    }
}

fn parse_integrator(s: &str) -> Option<IntegratorConfig> {
    let t: Vec<&str> = s.split_ascii_whitespace().collect();
    let method = match t.as_slice() {
        ["rk4", steps, _] => IntegratorMethod::Rk4Fixed { steps: steps.parse().ok()? },
        ["dp54", rtol, atol, max_steps, _] => IntegratorMethod::Dp54Adaptive {
            rtol: rtol.parse().ok()?,
            atol: atol.parse().ok()?,
            max_steps: max_steps.parse().ok()?,
        },
        _ => return None,
    };
    let divergence_bound: f64 = t.last()?.parse().ok()?;
    let cfg = IntegratorConfig { method, divergence_bound };
    (divergence_bound > 0.0 && cfg.validate().is_ok()).then_some(cfg)
}

pub fn encode_report(file: &ReportFile) -> String {
    let r = &file.report;
    let w = &r.wall_times;
    let mut out = String::new();
    let _ = writeln!(out, "format = {REPORT_FORMAT}");
    let _ = writeln!(out, "stop_reason = {}", r.stop_reason.name());
    let _ = writeln!(out, "epsilon = {}", fmt_f64(file.metric.epsilon()));
    let _ = writeln!(out, "xi = {}", fmt_f64(file.metric.xi()));
    let _ = writeln!(out, "integrator = {}", fmt_integrator(&file.integrator));
    let _ = writeln!(out, "n_times = {}", file.n_times);
    let _ = writeln!(out, "energy_trace = {}", fmt_floats(&r.energy_trace));
    let _ = writeln!(out, "certificate_sup = {}", fmt_floats(&r.certificate_sup));
    for (k, v) in
        [("oracle", w.oracle), ("amplitude", w.amplitude), ("sliding", w.sliding), ("prune", w.prune), ("total", w.total)]
    {
        let _ = writeln!(out, "time_{k} = {}", fmt_f64(v));
    }
    let _ = writeln!(out, "n_atoms = {}", r.final_state.atoms.len());
    for (k, a) in r.final_state.atoms.iter().enumerate() {
        let _ = writeln!(out, "\n[atom {k}]");
        let _ = writeln!(out, "mass = {}", fmt_f64(a.mass));
        write_curve(&mut out, &a.curve);
    }
    out
}

pub fn decode_report(text: &str) -> Result<ReportFile> {
    let doc = parse_kv(text)?;
    check_format(&doc, REPORT_FORMAT)?;
    let pre = doc.preamble();
    let stop_s = pre.require("stop_reason")?;
    let stop_reason = StopReason::parse(stop_s).ok_or_else(|| pre.err("stop_reason", "unknown stop reason"))?;
    let metric = MetricParams::new(pre.parse("epsilon")?, pre.parse("xi")?)?;
    let integrator = parse_integrator(pre.require("integrator")?)
        .ok_or_else(|| pre.err("integrator", "expected `rk4 steps bound` or `dp54 rtol atol max_steps bound`"))?;
    let n_times: usize = pre.parse("n_times")?;
    let wall_times = WallTimes {
        oracle: pre.parse("time_oracle")?,
        amplitude: pre.parse("time_amplitude")?,
        sliding: pre.parse("time_sliding")?,
        prune: pre.parse("time_prune")?,
        total: pre.parse("time_total")?,
    };
    let n: usize = pre.parse("n_atoms")?;
    count_sections(&doc, "atom ", n)?;
    let atoms = (0..n)
        .map(|k| {
            let sec =
                doc.section(&format!("atom {k}")).ok_or_else(|| Error::format("solve report", format!("missing [atom {k}]")))?;
            let mass: f64 = sec.parse("mass")?;
            if !mass.is_finite() {
                return Err(sec.err("mass", "non-finite"));
            }
            Ok(Atom { mass, curve: read_curve(sec)? })
        })
        .collect::<Result<Vec<_>>>()?;
    let report = SolveReport {
        final_state: MeasureState { atoms },
        energy_trace: pre.floats("energy_trace")?,
        certificate_sup: pre.floats("certificate_sup")?,
        wall_times,
        stop_reason,
    };
    Ok(ReportFile { report, metric, integrator, n_times })
}

// ---------------------------------------------------------------------------
// trajectory CSV

/// Rows `atom_id,t,x,y,theta,amp` with `amp = mass * amplitude(t)`.
pub fn trajectory_csv(state: &MeasureState, times: &[f64], metric: MetricParams, integ: &IntegratorConfig) -> Result<String> {
    let mut out = String::from("atom_id,t,x,y,theta,amp\n");
    for (k, a) in state.atoms.iter().enumerate() {
        for &t in times {
            let p = a.curve.eval(t, metric, integ)?;
            let amp = a.mass * a.curve.amplitude_at(t).unwrap_or(1.0);
            let _ = writeln!(out, "{k},{},{},{},{},{}", fmt_f64(t), fmt_f64(p.x), fmt_f64(p.y), fmt_f64(p.theta()), fmt_f64(amp));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::observation::{add_noise, make_phantom, PhantomId};

    fn grid() -> SensorGrid {
        SensorGrid::new(8, 0.2).unwrap()
    }

    #[test]
    fn stack_roundtrip_is_bitwise() {
        let g = grid();
        let (_, s) = make_phantom(PhantomId::Crossing2, 4, false, &g).unwrap();
        let s = add_noise(&s, 0.3, 5).unwrap();
        let bytes = encode_stack(&s, &g, 0.3, 5);
        let f = decode_stack(&bytes).unwrap();
        assert_eq!(f.stack, s);
        assert_eq!(f.header, StackHeader { n_side: 8, n_times: 4, sigma: 0.2, level: 0.3, seed: 5 });
        assert_eq!(encode_stack(&f.stack, &f.header.grid().unwrap(), 0.3, 5), bytes);
    }

    #[test]
    fn stack_header_text() {
        let g = grid();
        let s = ObservationStack::zeros(2, &g);
        let bytes = encode_stack(&s, &g, 0.0, 0);
        assert!(bytes.starts_with(b"OTGSTACK v1 8 2 0.2 0.0 0\n"));
        assert_eq!(bytes.len(), "OTGSTACK v1 8 2 0.2 0.0 0\n".len() + 2 * 64 * 8);
    }

    #[test]
    fn stack_rejects_truncation_and_bad_headers() {
        let g = grid();
        let s = ObservationStack::zeros(2, &g);
        let bytes = encode_stack(&s, &g, 0.0, 0);
        assert!(decode_stack(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode_stack(&extra).is_err());
        for h in [
            "OTGSTAK v1 8 2 0.2 0 0\n",
            "OTGSTACK v2 8 2 0.2 0 0\n",
            "OTGSTACK v1 1 2 0.2 0 0\n",
            "OTGSTACK v1 8 0 0.2 0 0\n",
            "OTGSTACK v1 8 2 -1 0 0\n",
            "OTGSTACK v1 8 2 0.2 NaN 0\n",
            "OTGSTACK v1 8 2 0.2 0\n",
            "OTGSTACK v1 99999999999 99999999999 0.2 0 0\n",
        ] {
            assert!(decode_stack(h.as_bytes()).is_err(), "{h}");
        }
        assert!(decode_stack(b"").is_err());
    }

    #[test]
    fn stack_rejects_nonfinite_samples() {
        let g = SensorGrid::new(2, 0.5).unwrap();
        let mut bytes = b"OTGSTACK v1 2 1 0.5 0 0\n".to_vec();
        for v in [0.0, f64::NAN, 1.0, 2.0] {
            bytes.extend_from_slice(&f64::to_le_bytes(v));
        }
        assert!(decode_stack(&bytes).is_err());
        let _ = g;
    }

    #[test]
    fn kv_parsing() {
        let doc = parse_kv("# c\na = 1\n b=two words \n\n[s 1]\nx = 1 2 3; 4 5 6\nempty =\n").unwrap();
        assert_eq!(doc.preamble().get("a"), Some("1"));
        assert_eq!(doc.preamble().get("b"), Some("two words"));
        let s = doc.section("s 1").unwrap();
        assert_eq!(s.triples("x").unwrap(), vec![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]);
        assert_eq!(s.floats("empty").unwrap(), Vec::<f64>::new());
        assert!(s.parse::<f64>("missing").is_err());
        for bad in ["novalue", "a = 1\na = 2", "[x]\n[x]", "[open", "[]", " = 3", "two words = 1"] {
            assert!(parse_kv(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn truth_roundtrip() {
        for (id, unb) in [(PhantomId::Crossing2, false), (PhantomId::Crossing2, true), (PhantomId::Triple3, false)] {
            let (t, _) = make_phantom(id, 3, unb, &grid()).unwrap();
            let text = encode_truth(&t);
            let back = decode_truth(&text).unwrap();
            assert_eq!(back, t);
            assert_eq!(encode_truth(&back), text);
        }
    }

    fn sample_report() -> ReportFile {
        let c = DiscreteCurve::piecewise_geodesic(
            vec![ManifoldPoint::new(0.1, -0.2, 0.3), ManifoldPoint::new(0.4, 0.5, 6.0)],
            vec![TangentVector::new(0.28, 0.09, -0.1)],
        )
        .unwrap()
        .with_amplitudes(vec![0.5, 1e-17])
        .unwrap();
        let b = DiscreteCurve::bezier(vec![ManifoldPoint::new(0.0, 0.0, 0.0), ManifoldPoint::new(1.0, 1.0, 1.0)]).unwrap();
        ReportFile {
            report: SolveReport {
                final_state: MeasureState { atoms: vec![Atom { mass: 0.75, curve: c }, Atom { mass: 1.0 / 3.0, curve: b }] },
                energy_trace: vec![3.0, 2.5, 0.1 + 0.2],
                certificate_sup: vec![12.0, 1.0005],
                wall_times: WallTimes { oracle: 1.5, amplitude: 0.0, sliding: 0.25, prune: 1e-9, total: 2.0 },
                stop_reason: StopReason::CertificateBound,
            },
            metric: MetricParams::new(0.05, 1.0).unwrap(),
            integrator: IntegratorConfig::dp54(1e-9, 1e-10),
            n_times: 21,
        }
    }

    #[test]
    fn report_roundtrip() {
        let r = sample_report();
        let text = encode_report(&r);
        let back = decode_report(&text).unwrap();
        assert_eq!(back, r);
        assert_eq!(encode_report(&back), text);
    }

    #[test]
    fn empty_report_roundtrip() {
        let mut r = sample_report();
        r.report.final_state.atoms.clear();
        r.report.energy_trace.clear();
        r.report.certificate_sup.clear();
        assert_eq!(decode_report(&encode_report(&r)).unwrap(), r);
    }

    #[test]
    fn report_rejects_inconsistent_counts() {
        let text = encode_report(&sample_report()).replace("n_atoms = 2", "n_atoms = 3");
        assert!(decode_report(&text).is_err());
        let text = encode_report(&sample_report()).replace("untangle-report v1", "untangle-truth v1");
        assert!(decode_report(&text).is_err());
    }

    #[test]
    fn csv_rows() {
        let r = sample_report();
        let csv = trajectory_csv(&r.report.final_state, &[0.0, 1.0], r.metric, &r.integrator).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "atom_id,t,x,y,theta,amp");
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[1], "0,0.0,0.1,-0.2,0.3,0.375");
        assert!(lines[4].starts_with("1,1.0,1.0,1.0,1.0,"));
    }
}
