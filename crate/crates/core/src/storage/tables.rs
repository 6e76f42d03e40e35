//! CSV tables: metrics, activation rates, per-snapshot errors and loss histories.

use std::path::Path;

use super::container::write_bytes_atomic;
use super::StorageError;
use crate::error::Result;
use crate::pae::{EvalReport, LossHistory, ModelKind};

pub const METRICS_HEADER: [&str; 9] = ["model", "r", "k", "P_e", "P_d", "R", "train_err", "test_err", "poly_err"];

/// Ten significant digits in scientific notation.
pub fn format_real(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else {
        format!("{x:.9e}")
    }
}

/// One parsed metrics row.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub model: ModelKind,
    pub r: usize,
    pub k: usize,
    pub encoder_params: usize,
    pub decoder_params: usize,
    pub vertex_count: usize,
    pub train_error: f64,
    pub test_error: f64,
    pub polytope_error: f64,
}

fn kind_rank(kind: ModelKind) -> u8 {
    match kind {
        ModelKind::Pod => 0,
        ModelKind::Cae => 1,
        ModelKind::Pae => 2,
    }
}

fn malformed(e: impl std::fmt::Display) -> StorageError {
    StorageError::Malformed(e.to_string())
}

fn finish(w: csv::Writer<Vec<u8>>, path: &Path) -> Result<()> {
    let bytes = w.into_inner().map_err(|e| malformed(e.error()))?;
    Ok(write_bytes_atomic(path, &bytes)?)
}

/// Header plus one row per report, ordered by model kind, then `r`, then `k`.
pub fn write_metrics_csv(reports: &[EvalReport], path: &Path) -> Result<()> {
    let mut sorted: Vec<&EvalReport> = reports.iter().collect();
    sorted.sort_by_key(|r| (kind_rank(r.kind), r.r, r.k));
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(METRICS_HEADER).map_err(malformed)?;
    for rep in sorted {
        w.write_record([
            rep.kind.to_string(),
            rep.r.to_string(),
            rep.k.to_string(),
            rep.encoder_params.to_string(),
            rep.decoder_params.to_string(),
            rep.vertex_count.to_string(),
            format_real(rep.train_error),
            format_real(rep.test_error),
            format_real(rep.polytope_error),
        ])
        .map_err(malformed)?;
    }
    finish(w, path)
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut rd = csv::Reader::from_path(path).map_err(malformed)?;
    let header = rd.headers().map_err(malformed)?.clone();
    if header.iter().ne(METRICS_HEADER) {
        return Err(malformed(format!("unexpected metrics header {header:?}")).into());
    }
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(malformed)?;
        let int = |i: usize| rec[i].parse::<usize>().map_err(malformed);
        let real = |i: usize| rec[i].parse::<f64>().map_err(malformed);
        rows.push(MetricsRow {
            model: rec[0].parse()?,
            r: int(1)?,
            k: int(2)?,
            encoder_params: int(3)?,
            decoder_params: int(4)?,
            vertex_count: int(5)?,
            train_error: real(6)?,
            test_error: real(7)?,
            polytope_error: real(8)?,
        });
    }
    Ok(rows)
}

/// Columns `component,rate`.
pub fn write_activation_csv(report: &EvalReport, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["component", "rate"]).map_err(malformed)?;
    for (i, rate) in report.activation_rates.iter().enumerate() {
        w.write_record([i.to_string(), format_real(*rate)]).map_err(malformed)?;
    }
    finish(w, path)
}

/// One row per snapshot with its errors and latent coordinates `latent_0..`.
pub fn write_snapshot_errors_csv(report: &EvalReport, path: &Path) -> Result<()> {
    let latent = report.rows.first().map_or(0, |r| r.latent.len());
    let mut header: Vec<String> = [
        "index",
        "time",
        "split",
        "reconstruction_error",
        "relative_error",
        "polytope_error",
        "relative_polytope_error",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend((0..latent).map(|i| format!("latent_{i}")));
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header).map_err(malformed)?;
    for row in &report.rows {
        let mut rec = vec![
            row.index.to_string(),
            format_real(row.time),
            if row.train { "train" } else { "test" }.to_string(),
            format_real(row.reconstruction_error),
            format_real(row.relative_error),
            format_real(row.polytope_error),
            format_real(row.relative_polytope_error),
        ];
        rec.extend(row.latent.iter().map(|&x| format_real(x)));
        w.write_record(&rec).map_err(malformed)?;
    }
    finish(w, path)
}

/// Columns `step,epoch,loss`; steps are numbered from 1.
pub fn write_loss_history_csv(history: &LossHistory, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["step", "epoch", "loss"]).map_err(malformed)?;
    for (s, losses) in history.steps.iter().enumerate() {
        for (e, &loss) in losses.iter().enumerate() {
            w.write_record([(s + 1).to_string(), (e + 1).to_string(), format_real(loss)]).map_err(malformed)?;
        }
    }
    finish(w, path)
}
