use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use untangle::formats::{decode_report, decode_stack, decode_truth};
use untangle::observation::{make_phantom, PhantomId, SensorGrid};

fn untangle(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_untangle")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = untangle(args);
    assert!(out.status.success(), "{args:?}\n{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL: [&str; 4] = ["--n-side", "24", "--sigma", "0.1"];
const FAST: [&str; 6] = ["--multistart", "2", "--max-outer-iters", "3", "--kn", "3"];

fn phantom(dir: &Path, extra: &[&str]) {
    let mut args = vec!["phantom", "--out", s(dir), "--T", "7"];
    args.extend(SMALL);
    args.extend(extra);
    ok(&args);
}

fn solve(dir: &Path, extra: &[&str]) -> String {
    let truth = dir.join("truth.txt");
    let mut args = vec!["solve", "--out", s(dir), "--truth", s(&truth)];
    args.extend(FAST);
    args.extend(extra);
    ok(&args)
}

#[test]
fn phantom_writes_stack_and_truth() {
    let dir = tempfile::tempdir().unwrap();
    phantom(dir.path(), &["--id", "crossing2", "--noise", "0"]);
    let sf = decode_stack(&fs::read(dir.path().join("stack.otg")).unwrap()).unwrap();
    assert_eq!((sf.header.n_side, sf.header.n_times, sf.header.sigma, sf.header.level), (24, 7, 0.1, 0.0));
    let grid = SensorGrid::new(24, 0.1).unwrap();
    let (truth, clean) = make_phantom(PhantomId::Crossing2, 7, false, &grid).unwrap();
    assert_eq!(sf.stack, clean);
    assert_eq!(decode_truth(&fs::read_to_string(dir.path().join("truth.txt")).unwrap()).unwrap(), truth);
}

#[test]
fn noisy_phantoms_depend_only_on_the_seed() {
    let [a, b, c] = [(); 3].map(|_| tempfile::tempdir().unwrap());
    phantom(a.path(), &["--noise", "0.6", "--seed", "3"]);
    phantom(b.path(), &["--noise", "0.6", "--seed", "3"]);
    phantom(c.path(), &["--noise", "0.6", "--seed", "4"]);
    let read = |d: &tempfile::TempDir| fs::read(d.path().join("stack.otg")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
}

#[test]
fn solve_is_deterministic_and_plots_regenerate() {
    let [a, b] = [(); 2].map(|_| tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        phantom(d.path(), &["--noise", "0.1", "--seed", "2"]);
        let stdout = solve(d.path(), &["--seed", "5"]);
        assert!(stdout.contains("matched_rmse"), "{stdout}");
    }
    for f in ["trajectories.csv", "paths.svg", "time.svg", "metrics.txt"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let settings = |d: &tempfile::TempDir| {
        let text = fs::read_to_string(d.path().join("config.txt")).unwrap();
        text.lines().filter(|l| !l.starts_with("out =")).map(str::to_owned).collect::<Vec<_>>()
    };
    assert_eq!(settings(&a), settings(&b));
    assert!(settings(&a).contains(&"noise = 0.1".to_owned()));
    let ra = decode_report(&fs::read_to_string(a.path().join("report.txt")).unwrap()).unwrap();
    let rb = decode_report(&fs::read_to_string(b.path().join("report.txt")).unwrap()).unwrap();
    assert_eq!(ra.report.final_state, rb.report.final_state);
    assert_eq!(ra.report.energy_trace, rb.report.energy_trace);

    let csv = fs::read_to_string(a.path().join("trajectories.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("atom_id,t,x,y,theta,amp"));
    assert_eq!(csv.lines().count(), 1 + 7 * ra.report.final_state.len());

    let replot = tempfile::tempdir().unwrap();
    let report = a.path().join("report.txt");
    let truth = a.path().join("truth.txt");
    ok(&["plot", "--report", s(&report), "--truth", s(&truth), "--out", s(replot.path())]);
    for f in ["trajectories.csv", "paths.svg", "time.svg"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(replot.path().join(f)).unwrap(), "{f}");
    }
    let printed = ok(&["metrics", "--report", s(&report), "--truth", s(&truth)]);
    assert_eq!(printed, fs::read_to_string(a.path().join("metrics.txt")).unwrap());
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    phantom(dir.path(), &[]);
    let conf = dir.path().join("run.txt");
    fs::write(&conf, "# overrides\nbeta = 2e-3\nepsilon = 0.5\nunbalanced = true\n").unwrap();
    solve(dir.path(), &["--config", s(&conf), "--epsilon", "0.3", "--no-plots"]);
    let used = fs::read_to_string(dir.path().join("config.txt")).unwrap();
    assert!(used.contains("beta = 0.002\n"), "{used}");
    assert!(used.contains("epsilon = 0.3\n"), "{used}");
    assert!(used.contains("unbalanced = true\n"), "{used}");
    assert!(!dir.path().join("paths.svg").exists());
    assert!(dir.path().join("trajectories.csv").exists());
}

#[test]
fn bad_configuration_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("bad.txt");
    fs::write(&conf, "betta = 1\n").unwrap();
    let out = untangle(&["phantom", "--config", s(&conf), "--out", s(dir.path())]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown key `betta`"));

    for args in [
        vec!["phantom", "--T", "1"],
        vec!["phantom", "--noise", "-1"],
        vec!["solve", "--epsilon", "2"],
        vec!["solve", "--energy-exponent", "3"],
        vec!["solve", "--scheme", "spline"],
        vec!["validate", "--suite", "nope"],
    ] {
        let mut a = args.clone();
        a.extend(["--out", s(dir.path())].iter().filter(|_| args[0] != "validate"));
        let out = untangle(&a);
        assert!(!out.status.success(), "{a:?}");
    }
    assert!(!dir.path().join("stack.otg").exists());
}

#[test]
fn corrupt_stack_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    phantom(dir.path(), &[]);
    let p = dir.path().join("stack.otg");
    let mut bytes = fs::read(&p).unwrap();
    bytes.truncate(bytes.len() - 3);
    fs::write(&p, bytes).unwrap();
    let out = untangle(&["solve", "--out", s(dir.path())]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("stack.otg"));
}

#[test]
fn validate_exit_code_matches_the_checks() {
    let out = untangle(&["validate", "--suite", "christoffel", "--suite", "inverse", "--suite", "adjoint"]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{text}");
    assert!(text.lines().filter(|l| l.starts_with("PASS")).count() >= 4, "{text}");
    assert!(!text.contains("FAIL"));

    let out = untangle(&["validate", "--suite", "gamma", "--scheme", "bezier", "--kn", "2,4", "--curves", "3"]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.success(), !text.contains("FAIL"), "{text}");
    assert!(out.status.success(), "{text}");
}
