use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn twoscale(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_twoscale"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

const SMALL: &str = "experiment = \"quadratic_pbt\"\nseeds = [4]\n[params]\nmax_abs_mean_h0 = 1.0\nmax_mean_h1 = 1.0\n[params.run]\nn = 30\ngenerations = 4\nrecord_every = 10\n";

#[test]
fn list_experiments_names_every_id() {
    let out = twoscale(&["list-experiments"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for id in [
        "quadratic_pbt",
        "quadratic_chaos",
        "quadratic_two_time",
        "himmelblau",
        "meanfield_convergence",
        "replicator_limit",
        "penalization_rate",
        "cartpole",
    ] {
        assert!(text.contains(id), "{id} missing");
    }
}

#[test]
fn unknown_key_exits_with_status_2_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.toml", "experiment = \"himmelblau\"\n[params.run]\nnn = 10\n");
    for cmd in ["validate", "run"] {
        let out = twoscale(&[cmd, &bad]);
        assert_eq!(out.status.code(), Some(2), "{cmd}");
        assert!(String::from_utf8_lossy(&out.stderr).contains("`nn`"));
    }
    let missing = dir.path().join("nope.toml");
    assert_eq!(twoscale(&["validate", missing.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn shipped_configs_validate() {
    let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let mut count = 0;
    for entry in fs::read_dir(configs).unwrap() {
        let path = entry.unwrap().path();
        let out = twoscale(&["validate", path.to_str().unwrap()]);
        assert!(out.status.success(), "{}: {}", path.display(), String::from_utf8_lossy(&out.stderr));
        count += 1;
    }
    assert!(count >= 8);
}

#[test]
fn reruns_give_identical_csv_bodies() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "small.toml", SMALL);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = twoscale(&["run", &cfg, "--out", out.to_str().unwrap(), "--seeds", "4,9"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for name in ["metrics_seed4.csv", "metrics_seed9.csv", "snapshots_seed4.csv"] {
        let x = fs::read(a.join(name)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, fs::read(b.join(name)).unwrap(), "{name}");
    }
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["config"]["seeds"], serde_json::json!([4, 9]));
    assert_eq!(summary["config"]["params"]["quadratic_pbt"]["run"]["n"], 30);
    assert_eq!(summary["passed"], true);
}

#[test]
fn failed_check_gives_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    let strict = SMALL.replace("max_abs_mean_h0 = 1.0", "max_abs_mean_h0 = -1.0");
    let cfg = write(dir.path(), "strict.toml", &strict);
    let out = twoscale(&["run", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL"));
}
