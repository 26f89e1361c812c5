use std::path::Path;
use std::process::{Command, Output};

fn evpinn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evpinn")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("cfg.toml");
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL_TRAIN: &str = r#"
benchmark = "ex1"
seed = 3

[solver]
hidden = [8]
counts = [60, 20, 20, 20]
interface_times = 4

[lm]
max_iters = 3

[test]
resolution = 11
times = 3
"#;

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

/// File contents without the wall-clock line, which varies between runs.
fn read_stable(dir: &Path, name: &str) -> String {
    read(dir, name).lines().filter(|l| !l.starts_with("runtime_s")).collect::<Vec<_>>().join("\n")
}

#[test]
fn train_writes_all_artifacts_and_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL_TRAIN);
    let out_a = tmp.path().join("a");
    let out_b = tmp.path().join("b");
    for out in [&out_a, &out_b] {
        let o = evpinn(&["train", "--config", &cfg, "--out", out.to_str().unwrap(), "--quiet"]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for name in ["config.toml", "trace.csv", "report.csv", "grid.csv", "model.ckpt", "manifest.toml"] {
        assert_eq!(read_stable(&out_a, name), read_stable(&out_b, name), "{name} differs between identical runs");
    }
    let trace = read(&out_a, "trace.csv");
    assert!(trace.lines().count() >= 2);
    let report = read(&out_a, "report.csv");
    assert!(report.starts_with("key,value\nbenchmark,ex1\nseed,3\n"), "{report}");
    let grid = read(&out_a, "grid.csv");
    assert_eq!(grid.lines().next().unwrap(), "x0,x1,t,u_pred,u_exact,abs_err");
    assert_eq!(grid.lines().count(), 1 + 11 * 11 * 3);
    let manifest = read(&out_a, "manifest.toml");
    assert!(manifest.contains("command = \"train\"") && manifest.contains("seed = 3"), "{manifest}");
    assert!(manifest.contains("config_sha256 = \""), "{manifest}");
}

#[test]
fn seed_flag_changes_the_run_and_the_hash() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL_TRAIN);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert!(evpinn(&["train", "--config", &cfg, "--out", a.to_str().unwrap(), "-q"]).status.success());
    assert!(evpinn(&["train", "--config", &cfg, "--out", b.to_str().unwrap(), "-q", "--seed", "4"]).status.success());
    assert_ne!(read(&a, "model.ckpt"), read(&b, "model.ckpt"));
    assert!(read(&b, "config.toml").contains("seed = 4"));
    let hash = |d: &Path| read(d, "manifest.toml").lines().find(|l| l.starts_with("config_sha256")).unwrap().to_string();
    assert_ne!(hash(&a), hash(&b));
}

#[test]
fn thread_count_does_not_change_results() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL_TRAIN);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert!(evpinn(&["train", "--config", &cfg, "--out", a.to_str().unwrap(), "-q", "--threads", "1"]).status.success());
    assert!(evpinn(&["train", "--config", &cfg, "--out", b.to_str().unwrap(), "-q", "--threads", "3"]).status.success());
    for name in ["trace.csv", "report.csv", "grid.csv", "model.ckpt"] {
        assert_eq!(read_stable(&a, name), read_stable(&b, name), "{name}");
    }
}

#[test]
fn eval_reproduces_the_training_report() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL_TRAIN);
    let a = tmp.path().join("a");
    let e = tmp.path().join("e");
    assert!(evpinn(&["train", "--config", &cfg, "--out", a.to_str().unwrap(), "-q"]).status.success());
    let ckpt = a.join("model.ckpt");
    let o = evpinn(&["eval", "--config", &cfg, "--out", e.to_str().unwrap(), "-q", "--checkpoint", ckpt.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let pick = |d: &Path, key: &str| {
        read(d, "report.csv").lines().find(|l| l.starts_with(&format!("{key},"))).unwrap().to_string()
    };
    assert_eq!(pick(&a, "e0"), pick(&e, "e0"));
    assert_eq!(pick(&a, "e1"), pick(&e, "e1"));
    assert_eq!(read(&a, "grid.csv"), read(&e, "grid.csv"));
}

#[test]
fn exact_checkpoint_evaluates_to_zero_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL_TRAIN);
    let ckpt = tmp.path().join("exact.ckpt");
    std::fs::write(&ckpt, "evpinn-exact 1\nbenchmark ex1\n").unwrap();
    let e = tmp.path().join("e");
    let o = evpinn(&["eval", "--config", &cfg, "--out", e.to_str().unwrap(), "-q", "--checkpoint", ckpt.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = read(&e, "report.csv");
    assert!(report.contains("\ne0,0.0000000000000000e0\n"), "{report}");
}

#[test]
fn ntk_writes_spectrum_and_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "benchmark = \"ex1\"\n[ntk]\nwidth = 16\ncounts = [30, 12, 10, 12]\ninterface_times = 3\n",
    );
    let out = tmp.path().join("n");
    let o = evpinn(&["ntk", "--config", &cfg, "--out", out.to_str().unwrap(), "-q"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let spectrum = read(&out, "spectrum.csv");
    assert_eq!(spectrum.lines().next().unwrap(), "model,operator,rank,eigenvalue");
    assert!(spectrum.lines().skip(1).all(|l| l.split(',').count() == 4));
    assert!(read(&out, "metrics.txt").contains("c_total_ratio"));
}

#[test]
fn levelset_with_zero_velocity_learns_the_identity() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"
benchmark = "ex1"
[level_set]
mode = "neural"
velocity = "zero"
hidden = [6]
time_steps = 2
n_interface = 10
n_anchor = 10
rk4_steps = 20
max_iters = 2
grid_h = 0.25
"#,
    );
    let out = tmp.path().join("l");
    let o = evpinn(&["levelset", "--config", &cfg, "--out", out.to_str().unwrap(), "-q"]);
    assert!(o.status.success(), "{}", stderr(&o));
    for name in ["levelset.ckpt", "intervals.csv", "events.csv", "zeroset.csv", "levelset_metrics.txt"] {
        assert!(out.join(name).is_file(), "{name} missing");
    }
    assert_eq!(read(&out, "intervals.csv").lines().count(), 2);
    let metrics = read(&out, "levelset_metrics.txt");
    let e: f64 = metrics.lines().next().unwrap().strip_prefix("flowmap_error ").unwrap().parse().unwrap();
    assert!(e <= 1e-12, "{metrics}");

    // the saved level set can drive evaluation of an exact solution
    let ckpt = out.join("levelset.ckpt");
    let cfg2 = write_config(
        tmp.path(),
        &format!(
            "benchmark = \"ex1\"\n[test]\nresolution = 5\ntimes = 2\n[level_set]\nmode = \"neural\"\ncheckpoint = \"{}\"\n",
            ckpt.display()
        ),
    );
    let exact = tmp.path().join("exact.ckpt");
    std::fs::write(&exact, "evpinn-exact 1\nbenchmark ex1\n").unwrap();
    let e2 = tmp.path().join("e2");
    let o = evpinn(&["eval", "--config", &cfg2, "--out", e2.to_str().unwrap(), "-q", "--checkpoint", exact.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn config_errors_exit_with_code_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cases = [
        ("benchmark = \"ex1\"\n[solver]\nhiden = [3]\n", "hiden"),
        ("benchmark = \"ex1\"\n[lm]\nmax_iters = \"many\"\n", "lm.max_iters"),
        ("benchmark = \"nope\"\n", "benchmark"),
        ("benchmark = \"ex1\"\n[solver]\ncounts = [0, 1, 1, 1]\n", "solver.counts"),
        ("benchmark = ", "config error"),
    ];
    for (body, needle) in cases {
        let cfg = write_config(tmp.path(), body);
        let o = evpinn(&["train", "--config", &cfg, "--out", tmp.path().join("x").to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(2), "{body}: {}", stderr(&o));
        assert!(stderr(&o).contains(needle), "{body}: {}", stderr(&o));
    }
    let o = evpinn(&["train", "--config", tmp.path().join("missing.toml").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let o = evpinn(&["train"]);
    assert_eq!(o.status.code(), Some(2));

    let cfg = write_config(tmp.path(), SMALL_TRAIN);
    let o = evpinn(&["eval", "--config", &cfg, "--out", tmp.path().join("y").to_str().unwrap(), "--checkpoint", "/nonexistent.ckpt"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let bad = tmp.path().join("bad.ckpt");
    std::fs::write(&bad, "garbage").unwrap();
    let o = evpinn(&["eval", "--config", &cfg, "--out", tmp.path().join("y").to_str().unwrap(), "--checkpoint", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn numerical_failure_exits_with_code_three() {
    // a threshold above the identity's determinant cannot be met by any window
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"
benchmark = "ex1"
[level_set]
mode = "neural"
hidden = [4]
delta = 2.0
time_steps = 2
n_interface = 5
n_anchor = 5
rk4_steps = 10
max_iters = 1
grid_h = 0.5
"#,
    );
    let o = evpinn(&["levelset", "--config", &cfg, "--out", tmp.path().join("z").to_str().unwrap(), "-q"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("numerical failure"), "{}", stderr(&o));
}
