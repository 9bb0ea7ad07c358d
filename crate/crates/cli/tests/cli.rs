use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn cace(args: &[&str], threads: usize) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cace"))
        .args(args)
        .env("CACE_THREADS", threads.to_string())
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], threads: usize) -> Vec<u8> {
    let out = cace(args, threads);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out.stdout
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

fn toy_csv(dir: &Path) -> String {
    let mut s = String::from("z,w,y,x1,x2\n");
    for i in 0..40u32 {
        let z = i % 2;
        let w = u32::from(z == 1 && i % 7 != 1);
        let x1 = f64::from(i % 9) / 3.0 - 1.0;
        let x2 = f64::from((i * 7) % 11) / 5.0;
        let y = 1.0 + 0.5 * x1 - 0.2 * x2 + f64::from(w) + f64::from((i * 13) % 5) / 10.0;
        s.push_str(&format!("{z},{w},{y},{x1},{x2}\n"));
    }
    write(dir, "toy.csv", &s)
}

#[test]
fn jobs_wald_row() {
    let cfg = data_dir().join("jobs_ii.toml");
    let out = ok(&["analyze", "--config", cfg.to_str().unwrap()], 1);
    let doc: serde_json::Value = serde_json::from_slice(&out).unwrap();
    let est = &doc["estimate"];
    assert_eq!(doc["sample"]["n"], 899);
    assert_eq!(doc["sample"]["n1"], 600);
    assert!((est["diagnostics"]["itt_w"].as_f64().unwrap() - 0.620).abs() < 5e-4);
    assert!((est["point"].as_f64().unwrap() - 0.109).abs() < 5e-4);
    assert!((est["ci_lo"].as_f64().unwrap() + 0.050).abs() < 5e-4);
    assert!((est["ci_hi"].as_f64().unwrap() - 0.268).abs() < 5e-4);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.csv", "z,w,y\n1,1,2\n2,0,1\n");
    let out = cace(&["analyze", "--data", &bad, "--assigned", "z", "--received", "w", "--outcome", "y"], 1);
    assert_eq!(out.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("row 3") && msg.contains("`z`"), "{msg}");

    let gone = dir.path().join("nope.csv");
    let out = cace(&["analyze", "--data", gone.to_str().unwrap(), "--assigned", "z", "--received", "w", "--outcome", "y"], 1);
    assert_eq!(out.status.code(), Some(4));

    // Uptake is higher in the control arm.
    let flipped = write(dir.path(), "flip.csv", "z,w,y\n1,0,1\n1,0,2\n1,1,3\n0,1,1\n0,1,2\n0,1,5\n");
    let out = cace(&["analyze", "--data", &flipped, "--assigned", "z", "--received", "w", "--outcome", "y"], 1);
    assert_eq!(out.status.code(), Some(3));

    let out = cace(&["analyze", "--data", &flipped, "--assigned", "z", "--received", "w", "--outcome", "y", "--method", "magic"], 1);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn design_emits_balanced_assignment() {
    let dir = tempfile::tempdir().unwrap();
    let csv = toy_csv(dir.path());
    let z = dir.path().join("z.csv");
    let report = dir.path().join("balance.json");
    ok(
        &[
            "design", "--x", &csv, "--columns", "x1,x2", "--n1", "15", "--pa", "0.2", "--seed", "4", "--out",
            z.to_str().unwrap(), "--report", report.to_str().unwrap(),
        ],
        1,
    );
    let text = std::fs::read_to_string(&z).unwrap();
    let ones = text.lines().skip(1).filter(|l| *l == "1").count();
    assert_eq!(ones, 15);
    assert_eq!(text.lines().count(), 41);
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert!(doc["balance"]["m"].as_f64().unwrap() <= doc["threshold_a"].as_f64().unwrap());

    let cre = cace(&["design", "--x", &csv, "--columns", "x1,x2", "--n1", "15"], 1);
    let doc: serde_json::Value = serde_json::from_slice(&cre.stderr).unwrap();
    assert_eq!(doc["balance"]["tries"], 1);
}

#[test]
fn lquantile_without_rerandomization_is_normal() {
    let out = ok(&["lquantile", "--k", "3", "--r2", "0.5", "--draws", "200000"], 1);
    let doc: serde_json::Value = serde_json::from_slice(&out).unwrap();
    assert!((doc["quantile"].as_f64().unwrap() - 1.959964).abs() < 0.02);
}

#[test]
fn every_entry_point_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let csv = toy_csv(dir.path());
    let study = write(
        dir.path(),
        "study.toml",
        "seed = 3\nreps = 30\ndgp = 2\nn = 60\nk = 2\np_co = 0.5\nerror_case = 4\ndesign = [\"cre\", \"rem\"]\npa = 0.1\n\
         methods = [\"wald\", \"adj-hc2\", \"bayes\"]\n[bayes]\nchains = 2\niters_per_chain = 200\nburn_in = 100\n[rem]\ndraws = 20000\n",
    );
    let roles = ["--data", &csv, "--assigned", "z", "--received", "w", "--outcome", "y", "--covariates", "x1,x2", "--seed", "7"];
    let with = |extra: &[&'static str]| -> Vec<String> {
        let mut v: Vec<String> = vec!["analyze".into()];
        v.extend(roles.iter().map(|s| s.to_string()));
        v.extend(extra.iter().map(|s| s.to_string()));
        v
    };
    let runs: Vec<Vec<String>> = vec![
        with(&["--method", "wald"]),
        with(&["--method", "adj-hc3"]),
        with(&["--method", "wald", "--design", "rem", "--pa", "0.3", "--draws", "50000"]),
        with(&["--method", "bayes", "--chains", "3", "--iters", "300", "--burn-in", "100"]),
        vec!["simulate".into(), "--config".into(), study.clone()],
        ["design", "--x", &csv, "--n1", "20", "--pa", "0.1", "--seed", "9"].map(String::from).to_vec(),
        ["lquantile", "--k", "4", "--pa", "0.05", "--r2", "0.3", "--draws", "100000", "--seed", "2"].map(String::from).to_vec(),
    ];
    for args in &runs {
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        let a = cace(&args, 1);
        let b = cace(&args, 1);
        let c = cace(&args, 8);
        assert!(a.status.success(), "{args:?}: {}", String::from_utf8_lossy(&a.stderr));
        assert!(!a.stdout.is_empty());
        assert_eq!(a.stdout, b.stdout, "{args:?} differs between runs");
        assert_eq!(a.stdout, c.stdout, "{args:?} differs between 1 and 8 threads");
        assert_eq!(a.stderr, c.stderr, "{args:?} stderr differs");
    }
}
