//! Binary persistence of datasets, models and polytopes, plus the metrics table.

mod artifacts;
mod container;
mod tables;

pub use artifacts::{
    artifact_kind, load_lpv, load_model, load_pae, load_pod, load_polytope, load_snapshots, lpv_from_container, lpv_to_container,
    pae_from_container, pae_to_container, pod_from_container, pod_to_container, polytope_from_container, polytope_to_container,
    save_lpv, save_pae, save_pod, save_polytope, save_snapshots, snapshots_from_container, snapshots_to_container, ArtifactKind,
    StoredModel,
};
pub use container::{Container, Section, FORMAT_VERSION, MAGIC};
pub use tables::{
    format_real, read_metrics_csv, write_activation_csv, write_loss_history_csv, write_metrics_csv, write_snapshot_errors_csv,
    MetricsRow, METRICS_HEADER,
};

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum StorageError {
    #[error("not a PAEB file (magic {found:?})")]
    BadMagic { found: [u8; 4] },
    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("file truncated while reading {context}")]
    Truncated { context: String },
    #[error("checksum mismatch in section '{section}'")]
    Checksum { section: String },
    #[error("missing section '{0}'")]
    MissingSection(String),
    #[error("malformed file: {0}")]
    Malformed(String),
    #[error("i/o error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}
