//! State-dependent coefficient forms and their polytopic LPV expansion.

use std::sync::Arc;

use crate::datagen::{check_linearity, CoefficientMap, Forcing, ImplicitSolver, QuadraticOde};
use crate::error::{check_dim, Error, Result};
use crate::linalg::{DenseMatrix, PodModel, SpdWeight};
use crate::pae::PaeModel;
use crate::polytope::Polytope;

/// Linearity defect below which a coefficient map counts as linear.
pub const LINEARITY_TOL: f64 = 1e-12;

/// Anything that maps a state to its reconstruction `ṽ`.
pub trait Reconstructor {
    fn reconstruct_state(&self, v: &[f64]) -> Result<Vec<f64>>;
}

impl Reconstructor for PaeModel {
    fn reconstruct_state(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.reconstruct(v)
    }
}

impl Reconstructor for PodModel {
    fn reconstruct_state(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.reconstruct(v)
    }
}

/// `M v̇ = A(v) v + f` with `A(v) = A₀ + N(v)`.
#[derive(Debug, Clone)]
pub struct SdcSystem {
    pub weight: SpdWeight,
    /// State-independent part `A₀`.
    pub constant: DenseMatrix,
    pub varying: Arc<dyn CoefficientMap>,
    pub forcing: Forcing,
    /// Set when `N` passed the randomized linearity check.
    pub linear: bool,
}

impl SdcSystem {
    pub fn new(weight: SpdWeight, constant: DenseMatrix, varying: Arc<dyn CoefficientMap>, forcing: Forcing) -> Result<Self> {
        let n = weight.dim();
        check_dim(n, constant.rows(), "constant coefficient rows")?;
        check_dim(n, constant.cols(), "constant coefficient columns")?;
        check_dim(n, varying.dim(), "coefficient map dimension")?;
        if let Forcing::Steady(f) = &forcing {
            check_dim(n, f.len(), "forcing")?;
        }
        let linear = check_linearity(varying.as_ref(), 8, 0x11ea) <= LINEARITY_TOL;
        Ok(Self {
            weight,
            constant,
            varying,
            forcing,
            linear,
        })
    }

    pub fn dim(&self) -> usize {
        self.weight.dim()
    }

    /// `A(v) = A₀ + N(v)`
    pub fn coefficient(&self, v: &[f64]) -> Result<DenseMatrix> {
        check_dim(self.dim(), v.len(), "coefficient argument")?;
        let mut a = self.varying.matrix(v);
        a.add_scaled(1.0, &self.constant)?;
        Ok(a)
    }

    /// `A(v) v + f`
    pub fn drift(&self, v: &[f64]) -> Result<Vec<f64>> {
        let mut out = self.coefficient(v)?.matvec(v)?;
        if let Forcing::Steady(f) = &self.forcing {
            for (o, fi) in out.iter_mut().zip(f) {
                *o += fi;
            }
        }
        Ok(out)
    }
}

/// SDC form of a quadratic system: `A(v) = N(v) + A_diffusion`.
pub fn sdc_from_burgers(sys: &QuadraticOde) -> Result<SdcSystem> {
    let sdc = SdcSystem::new(
        sys.weight.clone(),
        sys.diffusion.clone(),
        sys.convection.clone(),
        sys.forcing.clone(),
    )?;
    if !sdc.linear {
        return Err(Error::InvalidArgument("the convection coefficient map is not linear".into()));
    }
    Ok(sdc)
}

/// Vertex matrices `A_i = A(u_i)`, one per polytope column.
#[derive(Debug, Clone, PartialEq)]
pub struct LpvSystem {
    pub matrices: Vec<DenseMatrix>,
    pub vertices: DenseMatrix,
}

impl LpvSystem {
    pub fn new(matrices: Vec<DenseMatrix>, vertices: DenseMatrix) -> Result<Self> {
        check_dim(vertices.cols(), matrices.len(), "vertex matrix count")?;
        for a in &matrices {
            check_dim(vertices.rows(), a.rows(), "vertex matrix rows")?;
            check_dim(vertices.rows(), a.cols(), "vertex matrix columns")?;
        }
        Ok(Self { matrices, vertices })
    }

    pub fn vertex_count(&self) -> usize {
        self.matrices.len()
    }

    pub fn dim(&self) -> usize {
        self.vertices.rows()
    }
}

pub fn build_vertices(sdc: &SdcSystem, p: &Polytope) -> Result<LpvSystem> {
    if !sdc.linear {
        return Err(Error::InvalidArgument("vertex expansion needs a linear coefficient map".into()));
    }
    check_dim(sdc.dim(), p.dim(), "polytope dimension")?;
    let u = p.vertices();
    let matrices = (0..u.cols()).map(|i| sdc.coefficient(&u.column(i))).collect::<Result<Vec<_>>>()?;
    LpvSystem::new(matrices, u.clone())
}

/// `Σ ζ_i A_i`
pub fn lpv_coefficient(lpv: &LpvSystem, zeta: &[f64]) -> Result<DenseMatrix> {
    check_dim(lpv.vertex_count(), zeta.len(), "convex coordinates")?;
    let sum: f64 = zeta.iter().sum();
    if zeta.iter().any(|&z| !(z >= -1e-12)) || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::NotOnSimplex(format!("LPV coordinates (sum {sum})")));
    }
    let n = lpv.dim();
    let mut out = DenseMatrix::zeros(n, n);
    for (a, &z) in lpv.matrices.iter().zip(zeta) {
        if z != 0.0 {
            out.add_scaled(z, a)?;
        }
    }
    Ok(out)
}

/// Quasi-LPV run next to the full model.
#[derive(Debug, Clone, PartialEq)]
pub struct LpvTrajectory {
    /// `n × (steps + 1)`, driven by `A(ṽ(t)) v`.
    pub states: DenseMatrix,
    /// `n × (steps + 1)`, driven by `A(v) v`.
    pub reference: DenseMatrix,
    /// `‖v_lpv − v_full‖_M` per step.
    pub deviation: Vec<f64>,
}

/// Integrates `M v̇ = A(ṽ) v + f` with `ṽ` the model reconstruction of the current state,
/// using the semi-implicit Euler scheme of the data generator.
pub fn lpv_simulate(
    sdc: &SdcSystem,
    model: &dyn Reconstructor,
    v0: &[f64],
    dt: f64,
    steps: usize,
) -> Result<LpvTrajectory> {
    let n = sdc.dim();
    check_dim(n, v0.len(), "initial state")?;
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
    }
    let solver = ImplicitSolver::new(&sdc.weight, &sdc.constant, dt)?;
    let step = |v: &[f64], frozen: &[f64], k: usize| -> Result<Vec<f64>> {
        let mut rhs = sdc.weight.apply_unchecked(v);
        let conv = sdc.varying.apply(frozen, v);
        for (r, c) in rhs.iter_mut().zip(&conv) {
            *r += dt * c;
        }
        if let Forcing::Steady(f) = &sdc.forcing {
            for (r, fi) in rhs.iter_mut().zip(f) {
                *r += dt * fi;
            }
        }
        solver.solve(&rhs).map_err(|e| Error::StepFailed {
            step: k,
            reason: e.to_string(),
        })
    };
    let mut states = DenseMatrix::zeros(n, steps + 1);
    let mut reference = DenseMatrix::zeros(n, steps + 1);
    states.set_column(0, v0);
    reference.set_column(0, v0);
    let mut deviation = vec![0.0];
    let mut v = v0.to_vec();
    let mut w = v0.to_vec();
    for k in 0..steps {
        let approx = model.reconstruct_state(&v).map_err(|e| Error::StepFailed {
            step: k,
            reason: e.to_string(),
        })?;
        v = step(&v, &approx, k)?;
        w = step(&w, &w.clone(), k)?;
        states.set_column(k + 1, &v);
        reference.set_column(k + 1, &w);
        let diff: Vec<f64> = v.iter().zip(&w).map(|(a, b)| a - b).collect();
        deviation.push(sdc.weight.norm_unchecked(&diff));
    }
    Ok(LpvTrajectory {
        states,
        reference,
        deviation,
    })
}

/// Convex coordinates of `v` in the bounding box of the POD coefficients. Not provided: there
/// is no general method beyond `r = 3`.
pub fn bounding_box_coords(basis: &DenseMatrix, v: &[f64]) -> Result<Vec<f64>> {
    let _ = v;
    Err(Error::NotImplemented(format!(
        "bounding-box coordinates for an r = {} basis; use vertex_count(pod, r) for the 2^r vertex count",
        basis.cols()
    )))
}
