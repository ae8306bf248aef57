use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn hardening(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hardening"))
        .args(args)
        .env_remove("HARDENING_OUT")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const SMALL: [&str; 6] = [
    "--override",
    "grid.nx=16",
    "--override",
    "grid.ny=16",
    "--override",
    "stepper.t_final=0.0125",
];

fn battery() -> String {
    configs().join("battery.toml").display().to_string()
}

fn ledger_body(path: &Path) -> Vec<String> {
    fs::read_to_string(path).unwrap().lines().skip(2).map(String::from).collect()
}

#[test]
fn convex_permeability_fixture_fails_validation() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().display().to_string();
    let cfg = configs().join("mu_convex_fixture.toml");
    let o = hardening(&["validate-materials", "--config", cfg.to_str().unwrap(), "--out", &out]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    let err = stderr(&o);
    assert!(err.contains("uniqueness-level material assumptions (A2) violated: mu_squared_concave"), "{err}");
    assert_eq!(err.lines().count(), 1, "only the permeability clause fails: {err}");
    let kv = fs::read_to_string(dir.path().join("validation.kv")).unwrap();
    assert!(kv.starts_with("# config_hash="));
    assert!(kv.contains("clause.mu_squared_concave.passed=false"));

    let cfg = configs().join("mu_concave_fixture.toml");
    let o = hardening(&["validate-materials", "--config", cfg.to_str().unwrap(), "--out", &out]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn default_law_passes_existence_level() {
    let dir = tempfile::tempdir().unwrap();
    let o = hardening(&[
        "validate-materials",
        "--config",
        &battery(),
        "--level",
        "a1",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn invalid_configuration_exits_with_two_and_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let o = hardening(&[
        "simulate",
        "--config",
        &battery(),
        "--override",
        "stepper.dt=0",
        "--override",
        "grid.workpiece.x1=1.5",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("stepper.dt must be positive"), "{err}");
    assert!(err.contains("grid.workpiece must lie inside grid.domain"), "{err}");
}

#[test]
fn unknown_keys_are_rejected_unless_lenient() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("typo.toml");
    fs::write(&cfg, "[stepper]\ndtt = 1.0\n").unwrap();
    let out = dir.path().join("out");
    let base = ["validate-materials", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    let o = hardening(&base);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("stepper.dtt: unknown key"), "{}", stderr(&o));

    let mut lenient = base.to_vec();
    lenient.extend(["--level", "a1", "--lenient"]);
    let o = hardening(&lenient);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stderr(&o).contains("warning: ignored unknown key stepper.dtt"));
}

#[test]
fn simulate_audit_and_resume() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let cfg = battery();
    let mut a: Vec<&str> = vec!["simulate", "--config", &cfg, "--out", run.to_str().unwrap()];
    a.extend(SMALL);
    a.extend(["--override", "stepper.snapshot_every=1"]);
    let o = hardening(&a);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("energy inequality: holds"));
    for f in ["ledger.csv", "report.kv", "config.toml", "entropy_uniform.csv", "entropy_cosine_0.5.csv"] {
        let text = fs::read_to_string(run.join(f)).unwrap();
        assert!(text.starts_with("# config_hash="), "{f}");
    }
    let snap = fs::read_to_string(run.join("snapshots/0003_theta.field")).unwrap();
    let header: Vec<&str> = snap.lines().skip(1).take(6).map(|l| l.split(' ').next().unwrap()).collect();
    assert_eq!(header, ["nx", "ny", "hx", "hy", "field", "t"]);

    let o = hardening(&["audit", "--run", run.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).contains("recomputed 8 energy and 16 entropy ledger rows"), "{}", stdout(&o));

    let resumed = dir.path().join("resumed");
    let mut a: Vec<&str> = vec!["simulate", "--config", &cfg, "--out", resumed.to_str().unwrap()];
    a.extend(SMALL);
    a.extend(["--override", "stepper.snapshot_every=1"]);
    a.extend(["--resume-from", run.to_str().unwrap(), "--resume-step", "3"]);
    let o = hardening(&a);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let full = ledger_body(&run.join("ledger.csv"));
    let tail = ledger_body(&resumed.join("ledger.csv"));
    assert_eq!(tail.len(), 6);
    assert_eq!(&full[3..], &tail[..], "resumed ledger rows differ");
}

#[test]
fn output_root_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("mu_concave_fixture.toml");
    let o = Command::new(env!("CARGO_BIN_EXE_hardening"))
        .args(["validate-materials", "--config", cfg.to_str().unwrap()])
        .env("HARDENING_OUT", dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(dir.path().join("validate-materials/validation.kv").exists());
}

#[test]
fn compare_identical_configurations() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = battery();
    let mut a: Vec<&str> = vec![
        "compare",
        "--config",
        &cfg,
        "--reference",
        &cfg,
        "--out",
        dir.path().to_str().unwrap(),
        "--random-pairs",
        "20",
        "--seed",
        "7",
    ];
    a.extend(SMALL);
    let o = hardening(&a);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("identical_initial_data=true"), "{out}");
    assert!(out.contains("max_relative_energy=0e0"), "{out}");
    assert!(out.contains("20 random pairs (seed 7): 0 violations"), "{out}");
    let rel = fs::read_to_string(dir.path().join("relenergy.csv")).unwrap();
    assert!(rel.starts_with("# config_hash="));
    assert_eq!(rel.lines().count(), 2 + 9);
}

#[test]
fn mismatched_reference_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = battery();
    let mut a: Vec<&str> = vec!["compare", "--config", &cfg, "--reference", &cfg, "--out", dir.path().to_str().unwrap()];
    a.extend(SMALL);
    a.extend(["--reference-override", "source.frequency=64"]);
    let o = hardening(&a);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("current sources differ"), "{}", stderr(&o));
}

#[test]
fn convergence_orders() {
    let dir = tempfile::tempdir().unwrap();
    let o = hardening(&["convergence", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    let csv = fs::read_to_string(dir.path().join("convergence.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2 + 12);
}
