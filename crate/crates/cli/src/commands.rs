use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use polyrom::datagen::{assemble_burgers, burgers_initial_state, generate_cycle, integrate, CycleConfig, SnapshotSet};
use polyrom::linalg::{pod_basis, DenseMatrix, PodModel};
use polyrom::lpv::{build_vertices, lpv_coefficient, sdc_from_burgers};
use polyrom::pae::{evaluate, evaluate_pod, train_three_step, EvalReport, TrainConfig};
use polyrom::polytope::averaged_relative_polytope_error;
use polyrom::storage::{
    format_real, load_lpv, load_model, load_pae, load_pod, load_snapshots, read_metrics_csv, save_lpv, save_pae, save_pod,
    save_snapshots, write_activation_csv, write_loss_history_csv, write_metrics_csv, write_snapshot_errors_csv, StoredModel,
};

use crate::manifest::{beside, file_hash, Manifest};
use crate::svg::{Plot, Series};
use crate::{Dataset, EvalArgs, GenerateArgs, LpvExportArgs, ModelArg, PolytopeErrorArgs, TrainArgs, UsageError};

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn check_tol(tol: f64) -> Result<()> {
    if !(tol > 0.0) || !tol.is_finite() {
        return Err(usage(format!("--tol must be positive, got {tol}")));
    }
    Ok(())
}

pub fn generate(a: &GenerateArgs) -> Result<()> {
    let seed = a.seed.seed;
    if !(a.train_fraction > 0.0 && a.train_fraction < 1.0) {
        return Err(usage("--train-fraction must lie in (0, 1)"));
    }
    let mut manifest = Manifest::start("generate", Some(seed));
    let data = match a.dataset {
        Dataset::Burgers1d => {
            let n = a.n.unwrap_or(128);
            let steps = a.steps.unwrap_or(500);
            let dt = a.dt.unwrap_or(1e-3);
            manifest
                .config("dataset", "burgers1d")
                .config("n", n)
                .config("steps", steps)
                .config("dt", dt)
                .config("viscosity", a.viscosity);
            let sys = assemble_burgers(n, a.viscosity, 1.0)?;
            let v0 = burgers_initial_state(sys.burgers.as_ref().expect("burgers system"), seed);
            integrate(&sys, &v0, dt, steps)?
        }
        Dataset::Cycle2d => {
            let side = a.n.unwrap_or(32);
            let steps = a.steps.unwrap_or(449);
            let mut cfg = CycleConfig::new(side, side, steps + 1, a.phases).with_seed(seed);
            if let Some(dt) = a.dt {
                cfg.dt = dt;
            }
            manifest
                .config("dataset", "cycle2d")
                .config("n", side)
                .config("steps", steps)
                .config("dt", cfg.dt)
                .config("phases", a.phases);
            generate_cycle(&cfg)?
        }
    };
    let split = SnapshotSet::split_for_fraction(data.len(), a.train_fraction);
    let data = data.with_split(split)?;
    manifest.config("train_fraction", a.train_fraction);
    save_snapshots(&data, &a.out)?;
    if load_snapshots(&a.out)? != data {
        bail!("{} did not read back identically", a.out.display());
    }
    println!(
        "wrote {}: {} states x {} snapshots ({} train)",
        a.out.display(),
        data.dim(),
        data.len(),
        data.split
    );
    manifest.output(&a.out).write(&beside(&a.out, "manifest.json"))
}

pub fn train(a: &TrainArgs) -> Result<()> {
    let seed = a.seed.seed;
    if a.r == 0 {
        return Err(usage("--r must be positive"));
    }
    let k = match (a.model, a.k) {
        (ModelArg::Pod, Some(_)) => return Err(usage("--k cannot be used with --model pod")),
        (ModelArg::Cae, Some(k)) if k != 1 => return Err(usage("--model cae implies k = 1")),
        (ModelArg::Pae, Some(0)) => return Err(usage("--k must be positive")),
        (ModelArg::Pae, k) => k.unwrap_or(3),
        _ => 1,
    };
    let data = load_snapshots(&a.data).with_context(|| format!("loading {}", a.data.display()))?;
    let mut manifest = Manifest::start("train", Some(seed));
    manifest.input(&a.data).config("model", format!("{:?}", a.model).to_lowercase()).config("r", a.r);
    if a.model == ModelArg::Pod {
        let pod = PodModel {
            basis: pod_basis(&data, a.r)?,
            weight: data.weight.clone(),
        };
        save_pod(&pod, &a.out)?;
        let back = load_pod(&a.out)?;
        let defect = back.orthonormality_defect();
        if back != pod || defect > 1e-10 {
            bail!("POD basis failed validation after reload (orthonormality defect {defect:e})");
        }
        println!("wrote {}: POD basis {} x {}", a.out.display(), pod.dim(), pod.rank());
        return manifest.output(&a.out).write(&beside(&a.out, "manifest.json"));
    }
    if a.epochs.len() != 3 {
        return Err(usage("--epochs takes three comma-separated values N1,N2,N3"));
    }
    let cfg = TrainConfig {
        epochs: [a.epochs[0], a.epochs[1], a.epochs[2]],
        batch_size: a.batch,
        learning_rate: a.lr,
        cluster_weight: a.lambda,
        seed,
        checkpoint_every: a.checkpoint_every,
        ..TrainConfig::default()
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    manifest
        .config("k", k)
        .config("epochs", a.epochs.clone())
        .config("learning_rate", a.lr)
        .config("batch_size", a.batch)
        .config("cluster_weight", a.lambda)
        .config("checkpoint_every", a.checkpoint_every);
    let outcome = train_three_step(&data, &cfg, k, a.r)?;
    save_pae(&outcome.model, &a.out)?;
    if load_pae(&a.out)? != outcome.model {
        bail!("{} did not read back identically", a.out.display());
    }
    let loss_path = beside(&a.out, "loss.csv");
    write_loss_history_csv(&outcome.history, &loss_path)?;
    println!(
        "wrote {}: {} r={} k={}, train error after steps 1/2/3: {} / {} / {}",
        a.out.display(),
        outcome.model.kind(),
        a.r,
        k,
        format_real(outcome.step_errors[0]),
        format_real(outcome.step_errors[1]),
        format_real(outcome.step_errors[2])
    );
    manifest
        .output(&a.out)
        .output(&loss_path)
        .extra("step_errors", outcome.step_errors.to_vec())
        .write(&beside(&a.out, "manifest.json"))
}

fn error_plot(report: &EvalReport, separator: f64) -> Plot<'static> {
    let series = |name: &str, f: &dyn Fn(&polyrom::pae::SnapshotError) -> f64| Series {
        name: name.into(),
        points: report.rows.iter().map(|r| (r.time, f(r))).collect(),
    };
    let mut all = vec![series("reconstruction", &|r| r.relative_error)];
    if report.polytope_error.is_finite() {
        all.push(series("polytope", &|r| r.relative_polytope_error));
    }
    Plot {
        title: "Relative error",
        x_label: "time",
        y_label: "relative error",
        series: all,
        marker: Some(separator),
    }
}

fn latent_plot(report: &EvalReport, separator: f64) -> Plot<'static> {
    let r = report.rows.first().map_or(0, |row| row.latent.len());
    Plot {
        title: "Latent trajectories",
        x_label: "time",
        y_label: "latent value",
        series: (0..r)
            .map(|i| Series {
                name: format!("rho_{}", i + 1),
                points: report.rows.iter().map(|row| (row.time, row.latent[i])).collect(),
            })
            .collect(),
        marker: Some(separator),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn eval(a: &EvalArgs, threads: usize) -> Result<()> {
    check_tol(a.tol)?;
    let data = load_snapshots(&a.data).with_context(|| format!("loading {}", a.data.display()))?;
    let model = load_model(&a.model).with_context(|| format!("loading {}", a.model.display()))?;
    let report = match &model {
        StoredModel::Pae(m) => evaluate(m, &data, a.tol, threads)?,
        StoredModel::Pod(p) => evaluate_pod(p, &data)?,
    };
    for row in &report.rows {
        if row.polytope_error > row.reconstruction_error + 1e-10 {
            bail!(
                "snapshot {}: polytope error {:e} exceeds the reconstruction error {:e}",
                row.index,
                row.polytope_error,
                row.reconstruction_error
            );
        }
    }
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let metrics = a.out.join("metrics.csv");
    let activation = a.out.join("activation.csv");
    let snapshots = a.out.join("snapshots.csv");
    let error_svg = a.out.join("error.svg");
    let latent_svg = a.out.join("latent.svg");
    write_metrics_csv(std::slice::from_ref(&report), &metrics)?;
    write_activation_csv(&report, &activation)?;
    write_snapshot_errors_csv(&report, &snapshots)?;
    let separator = data.times[data.split];
    write_text(&error_svg, &error_plot(&report, separator).render())?;
    write_text(&latent_svg, &latent_plot(&report, separator).render())?;
    let back = read_metrics_csv(&metrics)?;
    if back.len() != 1 || back[0].vertex_count != report.vertex_count {
        bail!("{} did not read back", metrics.display());
    }
    println!(
        "{} r={} k={}: train {} test {} polytope {}",
        report.kind,
        report.r,
        report.k,
        format_real(report.train_error),
        format_real(report.test_error),
        format_real(report.polytope_error)
    );
    let mut manifest = Manifest::start("eval", None);
    manifest.input(&a.model).input(&a.data).config("tol", a.tol).config("threads", threads);
    for p in [&metrics, &activation, &snapshots, &error_svg, &latent_svg] {
        manifest.output(p);
    }
    manifest.write(&a.out.join("manifest.json"))
}

pub fn polytope_error(a: &PolytopeErrorArgs) -> Result<()> {
    check_tol(a.tol)?;
    let data = load_snapshots(&a.data).with_context(|| format!("loading {}", a.data.display()))?;
    let StoredModel::Pae(model) = load_model(&a.model)? else {
        bail!("a POD model spans a subspace, not a polytope");
    };
    if model.dim() != data.dim() {
        bail!("model dimension {} does not match data dimension {}", model.dim(), data.dim());
    }
    let eps = averaged_relative_polytope_error(&data.snapshots(), &model.polytope()?, a.tol)?;
    println!("{}", format_real(eps));
    if let Some(out) = &a.out {
        write_text(out, &format!("poly_err\n{}\n", format_real(eps)))?;
        let mut manifest = Manifest::start("polytope-error", None);
        manifest.input(&a.model).input(&a.data).config("tol", a.tol).output(out).extra("poly_err", eps);
        manifest.write(&beside(out, "manifest.json"))?;
    }
    Ok(())
}

/// Simplex points used to check the exported vertex matrices.
fn probe_coords(m: usize) -> Vec<Vec<f64>> {
    let normalise = |v: Vec<f64>| {
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect::<Vec<f64>>()
    };
    let mut out = vec![vec![1.0 / m as f64; m]];
    out.push(normalise((0..m).map(|i| (i + 1) as f64).collect()));
    out.push(normalise((0..m).map(|i| ((m - i) * (m - i)) as f64).collect()));
    out.extend((0..m).map(|i| {
        let mut e = vec![0.0; m];
        e[i] = 1.0;
        e
    }));
    out
}

pub fn lpv_export(a: &LpvExportArgs) -> Result<()> {
    let StoredModel::Pae(model) = load_model(&a.model).with_context(|| format!("loading {}", a.model.display()))? else {
        bail!("LPV export needs a PAE or CAE model");
    };
    let data = load_snapshots(&a.system).with_context(|| format!("loading {}", a.system.display()))?;
    let params = data
        .system
        .ok_or_else(|| anyhow!("{} carries no Burgers system parameters", a.system.display()))?;
    let sys = assemble_burgers(params.n, params.viscosity, params.length)?;
    if sys.dim() != model.dim() {
        bail!("model dimension {} does not match system dimension {}", model.dim(), sys.dim());
    }
    let sdc = sdc_from_burgers(&sys)?;
    let lpv = build_vertices(&sdc, &model.polytope()?)?;
    save_lpv(&lpv, &a.out)?;
    let back = load_lpv(&a.out)?;
    if back != lpv {
        bail!("{} did not read back identically", a.out.display());
    }
    let mut worst: f64 = 0.0;
    for zeta in probe_coords(back.vertex_count()) {
        let lhs = lpv_coefficient(&back, &zeta)?;
        let rhs = sdc.coefficient(&back.vertices.matvec(&zeta)?)?;
        let scale = rhs.frobenius_norm().max(1.0);
        worst = worst.max(diff_norm(&lhs, &rhs) / scale);
    }
    if worst > 1e-10 {
        bail!("exported vertex matrices violate the affine expansion (relative defect {worst:e})");
    }
    println!("wrote {}: {} vertex matrices of size {}", a.out.display(), back.vertex_count(), back.dim());
    let mut manifest = Manifest::start("lpv-export", None);
    manifest
        .input(&a.model)
        .input(&a.system)
        .output(&a.out)
        .extra("model_sha256", file_hash(&a.model)?)
        .extra("vertex_count", back.vertex_count())
        .extra("expansion_defect", worst);
    manifest.write(&beside(&a.out, "manifest.json"))
}

fn diff_norm(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}
