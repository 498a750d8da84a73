use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = "\
[simulation]
n = 2000
num_scans = 20
dtau_max = 999
num_peaks = 20
";

fn atof(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_atof")).current_dir(dir).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn small_dir() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("small.toml"), SMALL).unwrap();
    dir
}

#[test]
fn simulate_is_deterministic() {
    let dir = small_dir();
    for out in ["a", "b"] {
        let o = atof(dir.path(), &["simulate", "--config", "small.toml", "--seed", "11", "--out", out]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["trace.trc", "schedule.txt", "truth.txt", "truth.spc", "scans.scn"] {
        let a = fs::read(dir.path().join("a").join(f)).unwrap();
        let b = fs::read(dir.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f} differs between identical runs");
    }
    atof(dir.path(), &["simulate", "--config", "small.toml", "--seed", "12", "--out", "c"]);
    assert_ne!(fs::read(dir.path().join("a/trace.trc")).unwrap(), fs::read(dir.path().join("c/trace.trc")).unwrap());
}

#[test]
fn unit_acceleration_does_not_overlap() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("tof.toml"), "[simulation]\nn = 500\nnum_scans = 5\ndtau_min = 500\ndtau_max = 500\nnum_peaks = 5\n")
        .unwrap();
    let o = atof(dir.path(), &["simulate", "--config", "tof.toml", "--out", "o"]);
    assert_eq!(code(&o), 0);
    let sched = fs::read_to_string(dir.path().join("o/schedule.txt")).unwrap();
    let tau: Vec<usize> = sched.lines().skip(1).map(|l| l.trim().parse().unwrap()).collect();
    assert!(tau.windows(2).all(|p| p[1] - p[0] >= 500));
}

#[test]
fn reconstruct_and_evaluate() {
    let dir = small_dir();
    let run = |args: &[&str]| {
        let o = atof(dir.path(), args);
        assert_eq!(code(&o), 0, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    };
    run(&["simulate", "--config", "small.toml", "--out", "o"]);
    for m in ["atof", "naive", "average"] {
        run(&["reconstruct", "--config", "small.toml", "--out", "o", "--method", m]);
        assert!(dir.path().join(format!("o/{m}.spc")).exists());
    }
    let cost = fs::read_to_string(dir.path().join("o/cost_history.csv")).unwrap();
    assert_eq!(cost.lines().next(), Some("iter,theta,cost,max_delta"));
    assert!(cost.lines().count() > 2);

    // a spectrum scored against itself is perfect
    run(&["evaluate", "--config", "small.toml", "--out", "self", "--truth", "o/truth.spc", "--estimate", "o/truth.spc"]);
    let metrics = fs::read_to_string(dir.path().join("self/metrics.csv")).unwrap();
    let events = metrics.lines().find(|l| l.starts_with("events,")).unwrap();
    let f: Vec<&str> = events.split(',').collect();
    assert_eq!((f[2], f[3], f[4], f[5]), ("0", "0", "1", "0"));

    run(&["evaluate", "--config", "small.toml", "--out", "o", "--estimate", "o/atof.spc"]);
    assert!(dir.path().join("o/assignments.jsonl").exists());
    assert!(fs::read_to_string(dir.path().join("o/width_intensity.csv")).unwrap().starts_with("source,ratio,cdf\n"));
}

#[test]
fn sweep_writes_one_curve_per_method() {
    let dir = small_dir();
    let o = atof(dir.path(), &["sweep", "--config", "small.toml", "--out", "s", "--sweep", "hw", "--values", "0.5,1,2"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for m in ["atof", "naive", "average"] {
        let csv = fs::read_to_string(dir.path().join(format!("s/curve_hw_{m}.csv"))).unwrap();
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.starts_with("hw,tp,fp,fn,tpr,fdr,fnr,reported\n"));
    }
    let o = atof(
        dir.path(),
        &["sweep", "--config", "small.toml", "--out", "s", "--sweep", "theta0", "--values", "5e-4,1e-3,5e-3"],
    );
    assert_eq!(code(&o), 0);
    assert_eq!(fs::read_to_string(dir.path().join("s/curve_theta0_atof.csv")).unwrap().lines().count(), 4);
}

#[test]
fn selftest_and_negative_control() {
    let dir = tempfile::tempdir().unwrap();
    let o = atof(dir.path(), &["selftest"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    assert!(String::from_utf8_lossy(&o.stdout).contains("4/4 passed"));
    let o = atof(dir.path(), &["selftest", "--bessel-crossover", "2"]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL series-vs-bessel"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&atof(dir.path(), &[])), 1);
    assert_eq!(code(&atof(dir.path(), &["frobnicate"])), 1);
    assert_eq!(code(&atof(dir.path(), &["reconstruct", "--method", "magic"])), 1);
    assert_eq!(code(&atof(dir.path(), &["--help"])), 0);

    let missing = atof(dir.path(), &["reconstruct", "--out", "nothing-here"]);
    assert_eq!(code(&missing), 2);
    let stderr = String::from_utf8_lossy(&missing.stderr);
    assert_eq!(stderr.trim_end().lines().count(), 1, "{stderr}");

    fs::write(dir.path().join("bad.toml"), "[solver]\ngamma = -1\n").unwrap();
    assert_eq!(code(&atof(dir.path(), &["--config", "bad.toml", "simulate"])), 2);
    fs::write(dir.path().join("junk.spc"), b"not a spectrum").unwrap();
    assert_eq!(code(&atof(dir.path(), &["evaluate", "--estimate", "junk.spc", "--truth", "junk.spc"])), 2);
}
