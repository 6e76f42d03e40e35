use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use polyrom::lpv::{lpv_coefficient, sdc_from_burgers};
use polyrom::storage::{load_lpv, load_pod, load_snapshots, read_metrics_csv};
use sha2::{Digest, Sha256};
use tempfile::TempDir;

fn polyrom(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polyrom"))
        .args(args)
        .current_dir(dir)
        .env_remove("POLYROM_SEED")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], dir: &Path) -> Output {
    let out = polyrom(args, dir);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn burgers(dir: &Path, name: &str, n: &str, steps: &str) -> PathBuf {
    ok(&["generate", "--dataset", "burgers1d", "--n", n, "--steps", steps, "--out", name], dir);
    dir.join(name)
}

fn snapshot_csv(path: &Path) -> Vec<Vec<String>> {
    let mut rd = csv::Reader::from_path(path).unwrap();
    rd.records().map(|r| r.unwrap().iter().map(str::to_string).collect()).collect()
}

#[test]
fn generate_shape_and_determinism() {
    let dir = TempDir::new().unwrap();
    let a = burgers(dir.path(), "a.paeb", "128", "500");
    let b = burgers(dir.path(), "b.paeb", "128", "500");
    let data = load_snapshots(&a).unwrap();
    assert_eq!(data.states.shape(), (128, 501));
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("a.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "generate");
    assert_eq!(manifest["seed"], 0);
}

#[test]
fn seed_falls_back_to_environment() {
    let dir = TempDir::new().unwrap();
    let p = dir.path();
    ok(&["generate", "--dataset", "burgers1d", "--n", "16", "--steps", "20", "--seed", "7", "--out", "flag.paeb"], p);
    let env = Command::new(env!("CARGO_BIN_EXE_polyrom"))
        .args(["generate", "--dataset", "burgers1d", "--n", "16", "--steps", "20", "--out", "env.paeb"])
        .current_dir(p)
        .env("POLYROM_SEED", "7")
        .stdout(Stdio::null())
        .status()
        .unwrap();
    assert!(env.success());
    ok(&["generate", "--dataset", "burgers1d", "--n", "16", "--steps", "20", "--out", "zero.paeb"], p);
    let read = |n: &str| std::fs::read(p.join(n)).unwrap();
    assert_eq!(read("flag.paeb"), read("env.paeb"));
    assert_ne!(read("flag.paeb"), read("zero.paeb"));
}

#[test]
fn usage_errors_exit_nonzero() {
    let dir = TempDir::new().unwrap();
    let p = dir.path();
    assert_eq!(polyrom(&["generate", "--dataset", "burgers1d"], p).status.code(), Some(2));
    assert_eq!(polyrom(&["generate", "--dataset", "heat", "--out", "x"], p).status.code(), Some(2));
    burgers(p, "d.paeb", "16", "20");
    let out = polyrom(&["train", "--model", "pod", "--r", "2", "--k", "2", "--data", "d.paeb", "--out", "m.paeb"], p);
    assert_eq!(out.status.code(), Some(2));
    assert!(!p.join("m.paeb").exists());
    let out = polyrom(&["train", "--model", "cae", "--r", "2", "--k", "3", "--data", "d.paeb", "--out", "m.paeb"], p);
    assert_eq!(out.status.code(), Some(2));
    let out = polyrom(&["train", "--model", "pae", "--r", "2", "--epochs", "1,2", "--data", "d.paeb", "--out", "m.paeb"], p);
    assert_eq!(out.status.code(), Some(2));
    let out = polyrom(&["train", "--model", "pod", "--r", "2", "--data", "missing.paeb", "--out", "m.paeb"], p);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn pod_round_trip_and_exact_eval() {
    let dir = TempDir::new().unwrap();
    let p = dir.path();
    burgers(p, "d.paeb", "8", "40");
    ok(&["train", "--model", "pod", "--r", "2", "--data", "d.paeb", "--out", "pod2.paeb"], p);
    let pod = load_pod(&p.join("pod2.paeb")).unwrap();
    assert_eq!(pod.rank(), 2);
    assert!(pod.orthonormality_defect() < 1e-12);

    // a full-rank basis reconstructs every snapshot
    ok(&["train", "--model", "pod", "--r", "8", "--data", "d.paeb", "--out", "pod8.paeb"], p);
    ok(&["eval", "--model", "pod8.paeb", "--data", "d.paeb", "--out", "ev"], p);
    let rows = read_metrics_csv(&p.join("ev/metrics.csv")).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!((rows[0].vertex_count, rows[0].encoder_params), (256, 64));
    assert!(rows[0].train_error < 1e-12 && rows[0].test_error < 1e-12);
    assert!(rows[0].polytope_error.is_nan());
    for row in snapshot_csv(&p.join("ev/snapshots.csv")) {
        assert!(row[3].parse::<f64>().unwrap() < 1e-12);
    }
    assert_eq!(polyrom(&["polytope-error", "--model", "pod8.paeb", "--data", "d.paeb"], p).status.code(), Some(1));
}

#[test]
fn pae_train_eval_export() {
    let dir = TempDir::new().unwrap();
    let p = dir.path();
    let data = burgers(p, "d.paeb", "24", "60");
    let train = |out: &str, k: &str| {
        ok(
            &["train", "--model", "pae", "--r", "2", "--k", k, "--epochs", "3,3,3", "--lr", "1e-3", "--batch", "16", "--data", "d.paeb", "--out", out],
            p,
        )
    };
    train("m.paeb", "2");
    train("again.paeb", "2");
    let read = |n: &str| std::fs::read(p.join(n)).unwrap();
    assert_eq!(read("m.paeb"), read("again.paeb"));
    assert_eq!(read("m.loss.csv"), read("again.loss.csv"));
    assert_eq!(std::fs::read_to_string(p.join("m.loss.csv")).unwrap().lines().count(), 10);

    ok(&["eval", "--model", "m.paeb", "--data", "d.paeb", "--out", "ev1"], p);
    ok(&["--threads", "3", "eval", "--model", "m.paeb", "--data", "d.paeb", "--out", "ev3"], p);
    for f in ["metrics.csv", "activation.csv", "snapshots.csv", "error.svg", "latent.svg"] {
        assert_eq!(read(&format!("ev1/{f}")), read(&format!("ev3/{f}")), "{f}");
    }
    for row in snapshot_csv(&p.join("ev1/snapshots.csv")) {
        let rec: f64 = row[3].parse().unwrap();
        let poly: f64 = row[5].parse().unwrap();
        assert!(poly <= rec + 1e-10, "{row:?}");
    }
    for svg in ["ev1/error.svg", "ev1/latent.svg"] {
        let text = std::fs::read_to_string(p.join(svg)).unwrap();
        let doc = roxmltree::Document::parse(&text).unwrap();
        assert_eq!(doc.root_element().tag_name().name(), "svg");
        assert!(doc.descendants().any(|n| n.attribute("stroke-dasharray").is_some()));
    }
    let metrics = read_metrics_csv(&p.join("ev1/metrics.csv")).unwrap();
    assert_eq!((metrics[0].r, metrics[0].k, metrics[0].vertex_count), (2, 2, 4));

    let out = ok(&["polytope-error", "--model", "m.paeb", "--data", "d.paeb", "--out", "eps.csv"], p);
    let eps: f64 = String::from_utf8(out.stdout).unwrap().trim().parse().unwrap();
    assert!((eps - metrics[0].polytope_error).abs() < 1e-8);
    assert_eq!(polyrom(&["polytope-error", "--model", "m.paeb", "--data", "d.paeb", "--tol", "0"], p).status.code(), Some(2));
    assert_eq!(polyrom(&["polytope-error", "--model", "m.paeb", "--data", "d.paeb", "--tol", "-1"], p).status.code(), Some(2));

    ok(&["lpv-export", "--model", "m.paeb", "--system", "d.paeb", "--out", "lpv.paeb"], p);
    let lpv = load_lpv(&p.join("lpv.paeb")).unwrap();
    assert_eq!(lpv.vertex_count(), 4);
    let params = load_snapshots(&data).unwrap().system.unwrap();
    let sys = polyrom::datagen::assemble_burgers(params.n, params.viscosity, params.length).unwrap();
    let sdc = sdc_from_burgers(&sys).unwrap();
    let zeta = [0.1, 0.2, 0.3, 0.4];
    let lhs = lpv_coefficient(&lpv, &zeta).unwrap();
    let rhs = sdc.coefficient(&lpv.vertices.matvec(&zeta).unwrap()).unwrap();
    assert!(lhs.max_abs_diff(&rhs) < 1e-12);
    let manifest: serde_json::Value = serde_json::from_slice(&read("lpv.manifest.json")).unwrap();
    assert_eq!(manifest["model_sha256"], hex::encode(Sha256::digest(read("m.paeb"))));

    // a dataset without a Burgers system cannot be exported
    ok(&["generate", "--dataset", "cycle2d", "--n", "12", "--steps", "20", "--out", "c.paeb"], p);
    assert_eq!(polyrom(&["lpv-export", "--model", "m.paeb", "--system", "c.paeb", "--out", "x.paeb"], p).status.code(), Some(1));
    assert_eq!(polyrom(&["eval", "--model", "m.paeb", "--data", "c.paeb", "--out", "bad"], p).status.code(), Some(1));
}

#[test]
fn cycle_cae_and_pae_accounting() {
    let dir = TempDir::new().unwrap();
    let p = dir.path();
    ok(&["generate", "--dataset", "cycle2d", "--n", "16", "--steps", "59", "--out", "c.paeb"], p);
    for (model, k) in [("cae", None), ("pae", Some("3"))] {
        let out = format!("{model}.paeb");
        let mut args = vec!["train", "--model", model, "--r", "3", "--epochs", "2,2,2", "--lr", "1e-3", "--data", "c.paeb", "--out", &out];
        if let Some(k) = k {
            args.extend(["--k", k]);
        }
        ok(&args, p);
        let dir = format!("ev_{model}");
        ok(&["eval", "--model", &out, "--data", "c.paeb", "--out", &dir], p);
        let m = &read_metrics_csv(&p.join(&dir).join("metrics.csv")).unwrap()[0];
        match model {
            "cae" => assert_eq!((m.k, m.vertex_count), (1, 3)),
            _ => assert_eq!((m.k, m.vertex_count), (3, 9)),
        }
    }
}
