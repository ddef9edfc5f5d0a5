use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use regsynth::PiecewiseRegularizer;
use regsynth_cli::{load_config, CliError, FlatReport};

const BIN: &str = env!("CARGO_BIN_EXE_regsynth");

fn ball_file(dir: &Path, name: &str, dim: usize) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, format!("kind = \"euclidean-ball\"\ndim = {dim}\n[params]\nradius = 1.0\n")).unwrap();
    p
}

fn regsynth(args: &[&str], cwd: &Path) -> Output {
    Command::new(BIN).args(args).current_dir(cwd).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn synthesize_toy(dir: &Path) -> PathBuf {
    ball_file(dir, "b1.toml", 1);
    let o = regsynth(
        &["synthesize", "--action-set", "b1.toml", "--loss-set", "b1.toml", "--eps-bar", "0.1", "--out", "g.toml", "--report", "r.txt"],
        dir,
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    dir.join("g.toml")
}

#[test]
fn synthesize_toy_writes_a_loadable_regularizer() {
    let dir = tempfile::tempdir().unwrap();
    let g = PiecewiseRegularizer::load(&synthesize_toy(dir.path())).unwrap();
    let report = FlatReport::parse(&std::fs::read_to_string(dir.path().join("r.txt")).unwrap()).unwrap();
    assert_eq!(report.get("config_digest"), Some(g.provenance.as_str()));
    assert_eq!(report.get("certified"), Some("true"));
    assert_eq!(report.get("validation.pass"), Some("true"));
    assert_eq!(report.get("centers").unwrap(), g.pieces().len().to_string());
    assert!(report.get("timing.total_seconds").is_none());
}

#[test]
fn infeasible_guess_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    ball_file(dir.path(), "b1.toml", 1);
    let o = regsynth(
        &["synthesize", "--action-set", "b1.toml", "--loss-set", "b1.toml", "--fixed-c", "--c-guess", "1", "--out", "g.toml"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("infeasible"), "{}", stderr(&o));
    assert!(!dir.path().join("g.toml").exists());
}

#[test]
fn precheck_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    ball_file(dir.path(), "b.toml", 2);
    let cfg = dir.path().join("cfg.toml");
    std::fs::write(
        &cfg,
        "command = \"synthesize\"\n[synthesize]\naction_set = \"b.toml\"\nloss_set = \"b.toml\"\nout = \"g.toml\"\n[synthesize.overrides]\nalpha = 5.0\nc2 = 2.0\n",
    )
    .unwrap();
    match load_config(&cfg) {
        Err(CliError::Invalid(v)) => assert!(v.iter().any(|m| m.contains("infeasibility precheck")), "{v:?}"),
        other => panic!("expected a validation error, got {other:?}"),
    }
    let o = regsynth(&["synthesize", "--config", "cfg.toml"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("infeasibility precheck"));
}

#[test]
fn config_loading() {
    let dir = tempfile::tempdir().unwrap();
    ball_file(dir.path(), "b.toml", 2);
    let cfg = dir.path().join("ok.toml");
    std::fs::write(&cfg, "[synthesize]\naction_set = \"b.toml\"\nloss_set = \"b.toml\"\nout = \"g.toml\"\n").unwrap();
    let loaded = load_config(&cfg).unwrap();
    assert_eq!(loaded.synthesize.out, Some(dir.path().join("g.toml")));

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[synthesize]\naction_set = \"b.toml\"\nloss_set = \"b.toml\"\nout = \"g.toml\"\nepsbar = 0.1\n").unwrap();
    let err = load_config(&bad).unwrap_err().to_string();
    assert!(err.contains("synthesize.epsbar"), "{err}");

    let several = dir.path().join("several.toml");
    std::fs::write(&several, "[synthesize]\nloss_set = \"missing.toml\"\nc_guess = -1.0\n").unwrap();
    match load_config(&several) {
        Err(CliError::Invalid(v)) => {
            for field in ["action_set", "loss_set", "out", "c_guess"] {
                assert!(v.iter().any(|m| m.starts_with(&format!("synthesize.{field}"))), "{field}: {v:?}");
            }
        }
        other => panic!("expected every violation, got {other:?}"),
    }
}

#[test]
fn config_for_another_command_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("cfg.toml"), "command = \"bench\"\n").unwrap();
    let o = regsynth(&["run", "--config", "cfg.toml"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("config is for `bench`"));
}

#[test]
fn run_with_missing_regularizer_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    ball_file(dir.path(), "b.toml", 2);
    let o = regsynth(
        &["run", "--regularizer", "nope.toml", "--action-set", "b.toml", "--loss-set", "b.toml", "--rounds", "10"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nope.toml"), "{}", stderr(&o));
}

#[test]
fn run_traces_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    ball_file(dir.path(), "b.toml", 2);
    let args = |out: &'static str| {
        [
            "run", "--baseline", "quadratic", "--action-set", "b.toml", "--loss-set", "b.toml", "--adversary",
            "iid-extreme", "--rounds", "50", "--seed", "3", "--trace-out", out,
        ]
    };
    for out in ["a.csv", "b.csv"] {
        let o = regsynth(&args(out), dir.path());
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let a = std::fs::read(dir.path().join("a.csv")).unwrap();
    assert_eq!(a, std::fs::read(dir.path().join("b.csv")).unwrap());
    let text = String::from_utf8(a).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# regsynth config_digest="));
    assert_eq!(
        lines.next().unwrap(),
        "t,x0,x1,loss0,loss1,instantaneous_regret,cumulative_regret,inner_gap"
    );
    assert_eq!(lines.count(), 50);
}

#[test]
fn run_and_check_a_synthesized_regularizer() {
    let dir = tempfile::tempdir().unwrap();
    synthesize_toy(dir.path());
    let o = regsynth(
        &["run", "--regularizer", "g.toml", "--action-set", "b1.toml", "--loss-set", "b1.toml", "--rounds", "40"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = FlatReport::parse(&String::from_utf8(o.stdout).unwrap()).unwrap();
    assert_eq!(r.get("regularizer"), Some("synthesized"));
    assert_eq!(r.get("uncertified_steps"), Some("0"));
    assert!(r.get("final_regret").unwrap().parse::<f64>().unwrap() <= 2.0 * 40f64.sqrt());

    // The loss set and modulus default to those recorded in the file.
    let o = regsynth(&["check", "--regularizer", "g.toml", "--action-set", "b1.toml", "--report", "c.txt"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = FlatReport::parse(&std::fs::read_to_string(dir.path().join("c.txt")).unwrap()).unwrap();
    assert_eq!(r.get("sampled.alpha"), Some("0.5"));
    assert_eq!(r.get("sampled.pass"), Some("true"));
}

#[test]
fn bench_records_failures_and_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    ball_file(dir.path(), "b.toml", 2);
    std::fs::write(
        dir.path().join("suite.toml"),
        r#"
horizons = [20, 40]
seeds = 2
adversaries = ["iid-extreme"]

[[instance]]
name = "ball"
action_set = "b.toml"
loss_set = "b.toml"

[[regularizer]]
name = "ogd"
kind = "quadratic"

[[regularizer]]
name = "hedge"
kind = "entropy"
"#,
    )
    .unwrap();
    let o = regsynth(&["bench", "--suite", "suite.toml", "--out-dir", "out"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let runs = std::fs::read_to_string(dir.path().join("out/runs.csv")).unwrap();
    assert_eq!(runs.lines().filter(|l| l.contains(",failed,")).count(), 4);
    assert_eq!(runs.lines().filter(|l| l.contains(",ok,")).count(), 4);
    for f in ["runs.csv", "summary.csv", "rates.csv", "summary.dat", "meta.toml"] {
        assert!(dir.path().join("out").join(f).exists(), "{f}");
    }
}
