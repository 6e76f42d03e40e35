use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::SnapshotSet;
use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, SpdWeight};

/// Two-channel periodic field: a Gaussian bump travelling around a closed loop on `[-1, 1]²`,
/// superposed on fixed linear background ramps.
///
/// Channel 0 carries the bump, channel 1 a dipole (`x`-derivative-like) pattern of the same
/// bump. With `phases = P ≥ 2` the centre moves along the `P`-gon inscribed in the loop and
/// lingers near its corners, giving `P` clusterable phase regions; `P = 1` keeps it fixed.
/// `circular` replaces the polygon with uniform motion on the circle.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleConfig {
    pub height: usize,
    pub width: usize,
    pub snapshots: usize,
    pub phases: usize,
    pub circular: bool,
    /// Snapshot interval.
    pub dt: f64,
    /// Time for one trip around the loop.
    pub period: f64,
    pub radius: f64,
    /// Gaussian standard deviation.
    pub bump_width: f64,
    /// Relative bump amplitude excess at `t = 0`, decaying as `exp(-t / transient_time)`.
    pub transient_amplitude: f64,
    pub transient_time: f64,
    /// Slopes of the background ramps (`x` in channel 0, `y` in channel 1).
    pub background: f64,
    /// Loop angle at `t = 0`.
    pub phase_offset: f64,
}

impl CycleConfig {
    pub fn new(height: usize, width: usize, snapshots: usize, phases: usize) -> Self {
        Self {
            height,
            width,
            snapshots,
            phases,
            circular: false,
            dt: 1.0 / 50.0,
            period: 1.0,
            radius: 0.5,
            bump_width: 0.25,
            transient_amplitude: 0.5,
            transient_time: 0.3,
            background: 0.5,
            phase_offset: 0.0,
        }
    }

    /// Seed-dependent starting angle on the loop.
    pub fn with_seed(mut self, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.phase_offset = rng.random_range(0.0..TAU);
        self
    }

    pub fn dim(&self) -> usize {
        2 * self.height * self.width
    }

    /// Grid node coordinates `(x, y)` in `[-1, 1]²`, row-major over `(h, w)`.
    pub fn node_coordinates(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(self.height * self.width);
        for h in 0..self.height {
            for w in 0..self.width {
                out.push((axis_coord(w, self.width), axis_coord(h, self.height)));
            }
        }
        out
    }

    fn cell_area(&self) -> f64 {
        (2.0 / (self.width - 1) as f64) * (2.0 / (self.height - 1) as f64)
    }

    fn validate(&self) -> Result<()> {
        if self.height < 8 || self.width < 8 {
            return Err(Error::InvalidArgument(format!(
                "cycle grid needs H, W >= 8, got {}x{}",
                self.height, self.width
            )));
        }
        if self.phases == 0 && !self.circular {
            return Err(Error::InvalidArgument("phases must be at least 1".into()));
        }
        if self.snapshots < 2 {
            return Err(Error::InvalidArgument("at least two snapshots are required".into()));
        }
        for (name, value) in [
            ("dt", self.dt),
            ("period", self.period),
            ("bump width", self.bump_width),
            ("transient time", self.transient_time),
        ] {
            if !(value > 0.0) || !value.is_finite() {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {value}")));
            }
        }
        Ok(())
    }

    /// Bump centre at loop phase `theta` (radians; period `2π`).
    pub fn centre(&self, theta: f64) -> (f64, f64) {
        if self.circular {
            return (self.radius * theta.cos(), self.radius * theta.sin());
        }
        if self.phases == 1 {
            return (self.radius, 0.0);
        }
        let p = self.phases as f64;
        let s = (theta / TAU).rem_euclid(1.0) * p;
        let corner = s.floor();
        let frac = s - corner;
        // zero speed at the corners
        let eased = frac - (TAU * frac).sin() / TAU;
        let a0 = TAU * corner / p;
        let a1 = TAU * (corner + 1.0) / p;
        let (x0, y0) = (self.radius * a0.cos(), self.radius * a0.sin());
        let (x1, y1) = (self.radius * a1.cos(), self.radius * a1.sin());
        (x0 + eased * (x1 - x0), y0 + eased * (y1 - y0))
    }
}

fn axis_coord(i: usize, count: usize) -> f64 {
    -1.0 + 2.0 * i as f64 / (count - 1) as f64
}

/// Field at loop phase `theta` with bump amplitude `amplitude`, laid out `[channel][h][w]`.
pub fn cycle_field_at(cfg: &CycleConfig, theta: f64, amplitude: f64) -> Vec<f64> {
    let (cx, cy) = cfg.centre(theta);
    let hw = cfg.height * cfg.width;
    let mut out = vec![0.0; 2 * hw];
    let inv = 1.0 / (2.0 * cfg.bump_width * cfg.bump_width);
    for (idx, (x, y)) in cfg.node_coordinates().into_iter().enumerate() {
        let (dx, dy) = (x - cx, y - cy);
        let g = amplitude * (-(dx * dx + dy * dy) * inv).exp();
        out[idx] = cfg.background * x + g;
        out[hw + idx] = cfg.background * y + g * dx / cfg.bump_width;
    }
    out
}

/// Generates the periodic two-channel dataset described by `cfg`.
pub fn generate_cycle(cfg: &CycleConfig) -> Result<SnapshotSet> {
    cfg.validate()?;
    let n = cfg.dim();
    let mut states = DenseMatrix::zeros(n, cfg.snapshots);
    let times: Vec<f64> = (0..cfg.snapshots).map(|k| k as f64 * cfg.dt).collect();
    for (k, &t) in times.iter().enumerate() {
        let theta = cfg.phase_offset + TAU * t / cfg.period;
        let amplitude = 1.0 + cfg.transient_amplitude * (-t / cfg.transient_time).exp();
        states.set_column(k, &cycle_field_at(cfg, theta, amplitude));
    }
    let weight = SpdWeight::scaled_identity(n, cfg.cell_area())?;
    let split = SnapshotSet::split_for_fraction(cfg.snapshots, super::DEFAULT_TRAIN_FRACTION);
    let mut set = SnapshotSet::new(states, times, weight, split)?;
    set.grid = Some((2, cfg.height, cfg.width));
    Ok(set)
}

/// Limit-cycle dataset with default shape parameters.
pub fn generate_limit_cycle_2d(height: usize, width: usize, snapshots: usize, phases: usize) -> Result<SnapshotSet> {
    generate_cycle(&CycleConfig::new(height, width, snapshots, phases))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_phase_is_static_after_transient() {
        let mut cfg = CycleConfig::new(8, 8, 40, 1);
        cfg.transient_amplitude = 0.0;
        let set = generate_cycle(&cfg).unwrap();
        let first = set.snapshot(0);
        for j in 1..set.len() {
            assert_eq!(set.snapshot(j), first);
        }
    }

    #[test]
    fn loop_is_two_pi_periodic() {
        let cfg = CycleConfig::new(12, 10, 10, 3);
        for theta in [0.1, 1.3, 2.9, 5.0] {
            let a = cycle_field_at(&cfg, theta, 1.0);
            let b = cycle_field_at(&cfg, theta + TAU, 1.0);
            let diff = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            assert!(diff < 1e-10);
        }
    }

    #[test]
    fn rejects_small_grids() {
        assert!(generate_limit_cycle_2d(4, 8, 10, 3).is_err());
    }

    #[test]
    fn shape_and_weight() {
        let set = generate_limit_cycle_2d(8, 10, 12, 3).unwrap();
        assert_eq!(set.dim(), 160);
        assert_eq!(set.grid, Some((2, 8, 10)));
        assert!(set.weight.is_diagonal());
    }
}
