//! Synthetic snapshot data and the grid interpolation operator feeding the convolutional encoder.

mod cycle;
mod grid;
mod ode;

pub use cycle::{cycle_field_at, generate_cycle, generate_limit_cycle_2d, CycleConfig};
pub use grid::{build_grid_interpolator, GridExtent, GridMap};
pub use ode::{
    assemble_burgers, burgers_initial_state, check_linearity, integrate, BurgersConvection, BurgersParams, CoefficientMap, FnCoefficients,
    Forcing, QuadraticOde,
};

pub(crate) use ode::ImplicitSolver;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{DenseMatrix, SpdWeight};

/// Fraction of leading snapshots used for training when no explicit split is given.
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.6;

/// Time-ordered state snapshots with their mass matrix and a train/test split.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSet {
    /// `n × T`, one snapshot per column.
    pub states: DenseMatrix,
    pub times: Vec<f64>,
    pub weight: SpdWeight,
    /// Snapshots `0..split` are training data, `split..T` test data.
    pub split: usize,
    /// `(C, H, W)` when the states already live on a tensor grid.
    pub grid: Option<(usize, usize, usize)>,
    /// Generating system, when it is a Burgers model.
    pub system: Option<BurgersParams>,
}

impl SnapshotSet {
    pub fn new(states: DenseMatrix, times: Vec<f64>, weight: SpdWeight, split: usize) -> Result<Self> {
        check_dim(states.cols(), times.len(), "snapshot times")?;
        check_dim(weight.dim(), states.rows(), "snapshot weight")?;
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("snapshot times must increase strictly".into()));
        }
        if !states.is_finite() {
            return Err(Error::NonFinite("snapshot states"));
        }
        if split == 0 || split >= times.len() {
            return Err(Error::InvalidArgument(format!(
                "split index {split} must lie strictly inside (0, {})",
                times.len()
            )));
        }
        Ok(Self {
            states,
            times,
            weight,
            split,
            grid: None,
            system: None,
        })
    }

    /// Split index for a training fraction, clamped into `(0, T)`.
    pub fn split_for_fraction(count: usize, fraction: f64) -> usize {
        ((count as f64 * fraction).round() as usize).clamp(1, count.saturating_sub(1).max(1))
    }

    pub fn with_split(mut self, split: usize) -> Result<Self> {
        if split == 0 || split >= self.len() {
            return Err(Error::InvalidArgument(format!("split index {split} out of range")));
        }
        self.split = split;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.states.rows()
    }

    pub fn len(&self) -> usize {
        self.states.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn snapshot(&self, j: usize) -> Vec<f64> {
        self.states.column(j)
    }

    pub fn snapshots(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|j| self.snapshot(j)).collect()
    }

    pub fn train_states(&self) -> DenseMatrix {
        self.states.column_block(0, self.split)
    }

    pub fn test_states(&self) -> DenseMatrix {
        self.states.column_block(self.split, self.len())
    }

    pub fn train_snapshots(&self) -> Vec<Vec<f64>> {
        (0..self.split).map(|j| self.snapshot(j)).collect()
    }

    pub fn test_snapshots(&self) -> Vec<Vec<f64>> {
        (self.split..self.len()).map(|j| self.snapshot(j)).collect()
    }
}
