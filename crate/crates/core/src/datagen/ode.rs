use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::SnapshotSet;
use crate::error::{check_dim, Error, Result};
use crate::linalg::{cholesky, backward_substitute_t, forward_substitute, DenseMatrix, LuFactor, SpdWeight};

/// A state-dependent matrix `v ↦ N(v)`.
pub trait CoefficientMap: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;

    fn matrix(&self, v: &[f64]) -> DenseMatrix;

    /// `N(v) w`
    fn apply(&self, v: &[f64], w: &[f64]) -> Vec<f64> {
        self.matrix(v).matvec_unchecked(w)
    }
}

/// Coefficient map given by a closure.
pub struct FnCoefficients<F> {
    pub dim: usize,
    pub f: F,
}

impl<F> fmt::Debug for FnCoefficients<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnCoefficients").field("dim", &self.dim).finish_non_exhaustive()
    }
}

impl<F> CoefficientMap for FnCoefficients<F>
where
    F: Fn(&[f64]) -> DenseMatrix + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn matrix(&self, v: &[f64]) -> DenseMatrix {
        (self.f)(v)
    }
}

/// Largest relative linearity defect `‖N(av+bw) − aN(v) − bN(w)‖_F / scale` over random samples.
pub fn check_linearity(map: &dyn CoefficientMap, samples: usize, seed: u64) -> f64 {
    let n = map.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    for _ in 0..samples {
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let a: f64 = rng.random_range(-2.0..2.0);
        let b: f64 = rng.random_range(-2.0..2.0);
        let mix: Vec<f64> = v.iter().zip(&w).map(|(x, y)| a * x + b * y).collect();
        let lhs = map.matrix(&mix);
        let mut rhs = map.matrix(&v).scale(a);
        rhs.add_scaled(b, &map.matrix(&w)).expect("same shape");
        let scale = lhs.frobenius_norm().max(rhs.frobenius_norm()).max(1.0);
        let mut diff = lhs;
        diff.add_scaled(-1.0, &rhs).expect("same shape");
        worst = worst.max(diff.frobenius_norm() / scale);
    }
    worst
}

/// Parameters of the periodic 1D viscous Burgers model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BurgersParams {
    pub n: usize,
    pub viscosity: f64,
    pub length: f64,
}

impl BurgersParams {
    pub fn spacing(&self) -> f64 {
        self.length / self.n as f64
    }
}

/// Skew-symmetric central discretization of `−u u_x`, scaled by the mass `h`:
/// `N(v) = −(h/3) (diag(v) D + D diag(v))` with `D` the periodic central difference.
///
/// `N(v)` is linear in `v` and skew-symmetric, so `vᵀ N(v) v = 0`.
#[derive(Debug, Clone)]
pub struct BurgersConvection {
    pub n: usize,
}

impl CoefficientMap for BurgersConvection {
    fn dim(&self) -> usize {
        self.n
    }

    fn matrix(&self, v: &[f64]) -> DenseMatrix {
        let n = self.n;
        let mut m = DenseMatrix::zeros(n, n);
        for i in 0..n {
            let ip = (i + 1) % n;
            let im = (i + n - 1) % n;
            m[(i, ip)] -= (v[i] + v[ip]) / 6.0;
            m[(i, im)] += (v[i] + v[im]) / 6.0;
        }
        m
    }

    fn apply(&self, v: &[f64], w: &[f64]) -> Vec<f64> {
        let n = self.n;
        (0..n)
            .map(|i| {
                let ip = (i + 1) % n;
                let im = (i + n - 1) % n;
                -(v[i] * (w[ip] - w[im]) + v[ip] * w[ip] - v[im] * w[im]) / 6.0
            })
            .collect()
    }
}

/// Forcing term `f(t)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Forcing {
    Zero,
    Steady(Vec<f64>),
}

impl Forcing {
    fn add_scaled_into(&self, scale: f64, out: &mut [f64]) {
        if let Forcing::Steady(f) = self {
            for (o, fi) in out.iter_mut().zip(f) {
                *o += scale * fi;
            }
        }
    }
}

/// `M v̇ = N(v) v + A v + f(t)`
#[derive(Debug, Clone)]
pub struct QuadraticOde {
    pub weight: SpdWeight,
    pub diffusion: DenseMatrix,
    pub convection: Arc<dyn CoefficientMap>,
    pub forcing: Forcing,
    pub burgers: Option<BurgersParams>,
}

impl QuadraticOde {
    pub fn dim(&self) -> usize {
        self.weight.dim()
    }

    /// `N(v) v + A v + f`
    pub fn rhs(&self, v: &[f64]) -> Vec<f64> {
        let mut out = self.convection.apply(v, v);
        let av = self.diffusion.matvec_unchecked(v);
        for (o, a) in out.iter_mut().zip(&av) {
            *o += a;
        }
        self.forcing.add_scaled_into(1.0, &mut out);
        out
    }
}

/// Periodic finite-difference viscous Burgers on `[0, length)` with `n` nodes.
///
/// `M = h I`, `A = ν h D₂` (so `M⁻¹A` is the viscosity-scaled second difference), `N` the
/// skew-symmetric convection form above and `f = 0`.
pub fn assemble_burgers(n: usize, viscosity: f64, length: f64) -> Result<QuadraticOde> {
    if n < 8 {
        return Err(Error::InvalidArgument(format!("burgers grid needs n >= 8, got {n}")));
    }
    if !(viscosity > 0.0) || !viscosity.is_finite() {
        return Err(Error::InvalidArgument(format!("viscosity must be positive, got {viscosity}")));
    }
    if !(length > 0.0) || !length.is_finite() {
        return Err(Error::InvalidArgument(format!("domain length must be positive, got {length}")));
    }
    let params = BurgersParams {
        n,
        viscosity,
        length,
    };
    let h = params.spacing();
    let mut diffusion = DenseMatrix::zeros(n, n);
    let c = viscosity / h;
    for i in 0..n {
        diffusion[(i, i)] -= 2.0 * c;
        diffusion[(i, (i + 1) % n)] += c;
        diffusion[(i, (i + n - 1) % n)] += c;
    }
    Ok(QuadraticOde {
        weight: SpdWeight::scaled_identity(n, h)?,
        diffusion,
        convection: Arc::new(BurgersConvection { n }),
        forcing: Forcing::Zero,
        burgers: Some(params),
    })
}

/// Factorized `M − dt A`.
pub(crate) enum ImplicitSolver {
    Cholesky(DenseMatrix),
    Lu(LuFactor),
}

impl ImplicitSolver {
    pub(crate) fn new(weight: &SpdWeight, diffusion: &DenseMatrix, dt: f64) -> Result<Self> {
        let mut system = weight.to_dense();
        system.add_scaled(-dt, diffusion)?;
        match cholesky(&system) {
            Ok(l) => Ok(Self::Cholesky(l)),
            Err(_) => Ok(Self::Lu(LuFactor::new(&system)?)),
        }
    }

    pub(crate) fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let x = match self {
            Self::Cholesky(l) => backward_substitute_t(l, &forward_substitute(l, b)),
            Self::Lu(lu) => lu.solve(b)?,
        };
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Singular("implicit step produced non-finite values"));
        }
        Ok(x)
    }
}

/// Semi-implicit Euler: `(M − dt A) v⁺ = M v + dt (N(v) v + f)`.
///
/// Returns all `steps + 1` states including `v0`; times are `k·dt`. The split defaults to the
/// leading 60% of snapshots.
pub fn integrate(sys: &QuadraticOde, v0: &[f64], dt: f64, steps: usize) -> Result<SnapshotSet> {
    let n = sys.dim();
    check_dim(n, v0.len(), "initial state")?;
    if !(dt > 0.0) || !(dt * steps as f64).is_finite() {
        return Err(Error::InvalidArgument(format!("time step must be positive and finite, got {dt}")));
    }
    if steps == 0 {
        return Err(Error::InvalidArgument("at least one step is required".into()));
    }
    let solver = ImplicitSolver::new(&sys.weight, &sys.diffusion, dt)?;
    let mut states = DenseMatrix::zeros(n, steps + 1);
    states.set_column(0, v0);
    let mut v = v0.to_vec();
    for k in 0..steps {
        let mut rhs = sys.weight.apply_unchecked(&v);
        let conv = sys.convection.apply(&v, &v);
        for (r, c) in rhs.iter_mut().zip(&conv) {
            *r += dt * c;
        }
        sys.forcing.add_scaled_into(dt, &mut rhs);
        v = solver.solve(&rhs)?;
        states.set_column(k + 1, &v);
    }
    let times: Vec<f64> = (0..=steps).map(|k| k as f64 * dt).collect();
    let split = SnapshotSet::split_for_fraction(steps + 1, super::DEFAULT_TRAIN_FRACTION);
    let mut set = SnapshotSet::new(states, times, sys.weight.clone(), split)?;
    set.system = sys.burgers;
    Ok(set)
}

/// Smooth random periodic initial condition `Σ_m a_m sin(2π m x / L + φ_m) + c`.
pub fn burgers_initial_state(params: &BurgersParams, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let modes: Vec<(f64, f64)> = (1..=3)
        .map(|m| {
            let a: f64 = rng.random_range(0.5..1.0) / m as f64;
            let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            (a, phase)
        })
        .collect();
    let offset: f64 = rng.random_range(0.2..0.6);
    (0..params.n)
        .map(|i| {
            let x = i as f64 * params.spacing();
            offset
                + modes
                    .iter()
                    .enumerate()
                    .map(|(m, (a, ph))| a * (std::f64::consts::TAU * (m + 1) as f64 * x / params.length + ph).sin())
                    .sum::<f64>()
        })
        .collect()
}
