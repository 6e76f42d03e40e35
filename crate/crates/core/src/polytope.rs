//! Best approximation of a state within the convex hull of a vertex matrix.
//!
//! The polytope error of `v` is `min ‖Uρ − v‖_M` over the probability simplex. It is solved as a
//! small quadratic program in the coordinates `ρ` with accelerated projected gradient steps on
//! the simplex, followed by an exact equality-constrained solve on the detected support.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{dot, lu_solve, DenseMatrix, SpdWeight};

/// Default stopping tolerance on the gradient mapping of the squared objective.
pub const DEFAULT_TOL: f64 = 1e-9;
/// Iteration cap for the projected gradient loop.
pub const MAX_ITERATIONS: usize = 100_000;
/// Coordinates above this value count as active in KKT checks.
pub const ACTIVE_THRESHOLD: f64 = 1e-10;

/// Convex hull of the columns of `vertices`, measured in the norm of `weight`.
#[derive(Debug, Clone)]
pub struct Polytope {
    vertices: DenseMatrix,
    weight: SpdWeight,
    /// `UᵀMU`
    gram: DenseMatrix,
    /// Lipschitz constant of `∇‖Uρ − v‖²_M`, i.e. `2 λ_max(UᵀMU)` with a safety margin.
    lipschitz: f64,
}

impl Polytope {
    pub fn new(vertices: DenseMatrix, weight: SpdWeight) -> Result<Self> {
        check_dim(weight.dim(), vertices.rows(), "polytope vertex dimension")?;
        if vertices.cols() == 0 {
            return Err(Error::InvalidArgument("a polytope needs at least one vertex".into()));
        }
        if !vertices.is_finite() {
            return Err(Error::NonFinite("polytope vertices"));
        }
        let m = vertices.cols();
        let mu: Vec<Vec<f64>> = (0..m).map(|j| weight.apply_unchecked(&vertices.column(j))).collect();
        let mu = DenseMatrix::from_columns(&mu)?;
        let gram = vertices.t_matmul(&mu)?;
        let lipschitz = 2.0 * power_iteration(&gram) * 1.05 + f64::MIN_POSITIVE;
        Ok(Self {
            vertices,
            weight,
            gram,
            lipschitz,
        })
    }

    pub fn vertices(&self) -> &DenseMatrix {
        &self.vertices
    }

    pub fn weight(&self) -> &SpdWeight {
        &self.weight
    }

    pub fn dim(&self) -> usize {
        self.vertices.rows()
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.cols()
    }

    /// `U ρ`
    pub fn point(&self, coords: &[f64]) -> Vec<f64> {
        self.vertices.matvec_unchecked(coords)
    }

    /// `‖Uρ − v‖²_M` from the residual; the expanded quadratic cancels near zero.
    fn objective(&self, rho: &[f64], v: &[f64]) -> f64 {
        let diff: Vec<f64> = self.point(rho).iter().zip(v).map(|(a, b)| a - b).collect();
        self.weight.norm_unchecked(&diff).powi(2)
    }

    fn gradient(&self, rho: &[f64], b: &[f64]) -> Vec<f64> {
        self.gram
            .matvec_unchecked(rho)
            .iter()
            .zip(b)
            .map(|(g, bi)| 2.0 * (g - bi))
            .collect()
    }
}

/// Largest eigenvalue estimate of a symmetric PSD matrix.
fn power_iteration(a: &DenseMatrix) -> f64 {
    let m = a.rows();
    let mut x: Vec<f64> = (0..m).map(|i| 1.0 + 0.1 * i as f64).collect();
    let mut lambda = 0.0;
    for _ in 0..300 {
        let y = a.matvec_unchecked(&x);
        let norm = dot(&y, &y).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        let next = dot(&x, &y) / dot(&x, &x);
        x = y.iter().map(|v| v / norm).collect();
        if (next - lambda).abs() <= 1e-12 * next.abs() {
            lambda = next;
            break;
        }
        lambda = next;
    }
    lambda.max(0.0)
}

/// Optimal simplex coordinates and the induced best approximation.
#[derive(Debug, Clone, PartialEq)]
pub struct BestApprox {
    pub coords: Vec<f64>,
    pub point: Vec<f64>,
    /// `‖v − v*‖_M`
    pub error: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
}

/// Euclidean projection onto `{ρ ≥ 0, Σρ = 1}` by the sorted-threshold rule.
pub fn simplex_project(y: &[f64]) -> Vec<f64> {
    if y.is_empty() {
        return Vec::new();
    }
    let mut sorted = y.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (i, &s) in sorted.iter().enumerate() {
        cumulative += s;
        let candidate = (cumulative - 1.0) / (i + 1) as f64;
        if s - candidate > 0.0 {
            theta = candidate;
        }
    }
    let mut out: Vec<f64> = y.iter().map(|&v| (v - theta).max(0.0)).collect();
    // remove the rounding drift of the threshold
    let total: f64 = out.iter().sum();
    if total > 0.0 && (total - 1.0).abs() > 0.0 {
        out.iter_mut().for_each(|v| *v /= total);
    }
    out
}

/// KKT residual of the simplex-constrained problem at `rho` given its gradient.
///
/// With multiplier `λ = ρᵀg`: active components must satisfy `g_i = λ`, inactive ones `g_i ≥ λ`.
pub fn kkt_residual(rho: &[f64], grad: &[f64]) -> f64 {
    let lambda = dot(rho, grad);
    rho.iter()
        .zip(grad)
        .map(|(&r, &g)| {
            if r > ACTIVE_THRESHOLD {
                (g - lambda).abs()
            } else {
                (lambda - g).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

fn gradient_mapping_norm(p: &Polytope, rho: &[f64], b: &[f64]) -> f64 {
    let g = p.gradient(rho, b);
    let stepped: Vec<f64> = rho.iter().zip(&g).map(|(r, gi)| r - gi / p.lipschitz).collect();
    let proj = simplex_project(&stepped);
    p.lipschitz * rho.iter().zip(&proj).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

/// Exact minimizer restricted to the support of `rho`, if it stays feasible.
fn polish_on_support(p: &Polytope, rho: &[f64], b: &[f64]) -> Option<Vec<f64>> {
    let support: Vec<usize> = (0..rho.len()).filter(|&i| rho[i] > 0.0).collect();
    let s = support.len();
    if s == 0 {
        return None;
    }
    // [2 G_SS  -1] [ρ_S]   [2 b_S]
    // [ 1ᵀ      0] [ λ ] = [  1  ]
    let kkt = |shift: f64| {
        DenseMatrix::from_fn(s + 1, s + 1, |i, j| match (i < s, j < s) {
            (true, true) => 2.0 * p.gram[(support[i], support[j])] + if i == j { shift } else { 0.0 },
            (true, false) => -1.0,
            (false, true) => 1.0,
            (false, false) => 0.0,
        })
    };
    let mut rhs: Vec<f64> = support.iter().map(|&i| 2.0 * b[i]).collect();
    rhs.push(1.0);
    // repeated or affinely dependent vertices make the block singular; a tiny shift picks one minimizer
    let scale = support.iter().map(|&i| p.gram[(i, i)]).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let sol = lu_solve(&kkt(0.0), &rhs).or_else(|_| lu_solve(&kkt(1e-12 * scale), &rhs)).ok()?;
    if sol[..s].iter().any(|&x| x < 0.0 || !x.is_finite()) {
        return None;
    }
    let mut out = vec![0.0; rho.len()];
    for (k, &i) in support.iter().enumerate() {
        out[i] = sol[k];
    }
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|x| *x /= total);
    Some(out)
}

/// Polytope error with the default start (barycentre).
pub fn polytope_error(v: &[f64], p: &Polytope, tol: f64) -> Result<BestApprox> {
    polytope_error_from(v, p, tol, None)
}

/// Polytope error started from given simplex coordinates.
///
/// The returned objective never exceeds the objective at the (projected) start, so a known
/// feasible point such as a decoder's own coordinates bounds the reported error from above.
pub fn polytope_error_from(v: &[f64], p: &Polytope, tol: f64, start: Option<&[f64]>) -> Result<BestApprox> {
    check_dim(p.dim(), v.len(), "polytope error state")?;
    if !(tol > 0.0) || !tol.is_finite() {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("polytope error state"));
    }
    let m = p.vertex_count();
    let mv = p.weight.apply_unchecked(v);
    let b = p.vertices.matvec_t_unchecked(&mv);
    let vv = dot(v, &mv);

    let mut x = match start {
        Some(s) => {
            check_dim(m, s.len(), "polytope start coordinates")?;
            if s.iter().any(|c| !c.is_finite()) {
                return Err(Error::NonFinite("polytope start coordinates"));
            }
            let sum: f64 = s.iter().sum();
            if s.iter().all(|&c| c >= 0.0) && (sum - 1.0).abs() <= 1e-12 {
                s.to_vec()
            } else {
                simplex_project(s)
            }
        }
        None => vec![1.0 / m as f64; m],
    };
    let initial = x.clone();
    let mut fx = p.objective(&x, v);
    let mut best = (x.clone(), fx);
    let mut y = x.clone();
    let mut t = 1.0_f64;
    let mut lipschitz = p.lipschitz;
    let mut iterations = 0;
    let mut converged = gradient_mapping_norm(p, &x, &b) <= tol;

    while !converged && iterations < MAX_ITERATIONS {
        iterations += 1;
        let g = p.gradient(&y, &b);
        let stepped: Vec<f64> = y.iter().zip(&g).map(|(yi, gi)| yi - gi / lipschitz).collect();
        let x_new = simplex_project(&stepped);
        let f_new = p.objective(&x_new, v);
        if f_new > fx + 4.0 * f64::EPSILON * (fx + (fx * vv).sqrt()) {
            if gradient_mapping_norm(p, &x, &b) <= tol {
                converged = true;
                break;
            }
            if y == x {
                lipschitz *= 2.0;
            }
            // adaptive restart
            y = x.clone();
            t = 1.0;
            continue;
        }
        let t_new = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let momentum = (t - 1.0) / t_new;
        y = x_new.iter().zip(&x).map(|(a, b)| a + momentum * (a - b)).collect();
        x = x_new;
        fx = f_new;
        t = t_new;
        if fx < best.1 {
            best = (x.clone(), fx);
        }
        if iterations % 10 == 0 || t < 2.0 {
            converged = gradient_mapping_norm(p, &x, &b) <= tol;
        }
    }

    let (mut coords, mut f_best) = best;
    if let Some(polished) = polish_on_support(p, &coords, &b) {
        let f_pol = p.objective(&polished, v);
        let grad_pol = p.gradient(&polished, &b);
        let grad_cur = p.gradient(&coords, &b);
        if f_pol <= f_best + 4.0 * f64::EPSILON * (f_best + (f_best * vv).sqrt()) && kkt_residual(&polished, &grad_pol) <= kkt_residual(&coords, &grad_cur) {
            coords = polished;
            f_best = f_pol;
        }
    }
    let _ = f_best;
    let distance = |c: &[f64]| {
        let point = p.point(c);
        let diff: Vec<f64> = point.iter().zip(v).map(|(a, b)| a - b).collect();
        (p.weight.norm_unchecked(&diff), point)
    };
    let (mut error, mut point) = distance(&coords);
    if start.is_some() {
        // the expanded quadratic loses digits; compare against the start in the direct form
        let (start_error, start_point) = distance(&initial);
        if start_error < error {
            error = start_error;
            point = start_point;
            coords = initial;
        }
    }
    let kkt = kkt_residual(&coords, &p.gradient(&coords, &b));
    let result = BestApprox {
        coords,
        point,
        error,
        kkt_residual: kkt,
        iterations,
    };
    if !converged && gradient_mapping_norm(p, &result.coords, &b) > tol {
        let residual = gradient_mapping_norm(p, &result.coords, &b);
        return Err(Error::IterationCap {
            iterations,
            residual,
            best: Box::new(result),
        });
    }
    Ok(result)
}

/// `true` iff the polytope error of `v` is at most `tol`.
pub fn contains(v: &[f64], p: &Polytope, tol: f64) -> Result<bool> {
    // an iteration cap near a zero objective still decides membership
    match polytope_error(v, p, (tol * 1e-3).max(1e-12)) {
        Ok(best) => Ok(best.error <= tol),
        Err(Error::IterationCap { best, .. }) if best.error <= tol => Ok(true),
        Err(e) => Err(e),
    }
}

/// Largest pairwise M-distance between best approximations from `starts` random starts.
pub fn uniqueness_probe(v: &[f64], p: &Polytope, starts: usize, seed: u64, tol: f64) -> Result<f64> {
    if starts < 2 {
        return Err(Error::InvalidArgument("uniqueness probe needs at least two starts".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = p.vertex_count();
    let mut points = Vec::with_capacity(starts);
    for _ in 0..starts {
        let start = random_simplex_point(&mut rng, m);
        points.push(polytope_error_from(v, p, tol, Some(&start))?.point);
    }
    let mut worst = 0.0_f64;
    for a in 0..starts {
        for b in (a + 1)..starts {
            worst = worst.max(p.weight.distance(&points[a], &points[b])?);
        }
    }
    Ok(worst)
}

/// Uniform sample from the probability simplex.
pub fn random_simplex_point<R: Rng>(rng: &mut R, m: usize) -> Vec<f64> {
    let e: Vec<f64> = (0..m).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let total: f64 = e.iter().sum();
    e.into_iter().map(|x| x / total).collect()
}

/// Per-snapshot relative polytope errors; zero-norm snapshots give `None`.
///
/// `starts`, when given, supplies warm-start coordinates per snapshot. With `threads > 1` the
/// snapshots are processed in contiguous chunks on scoped threads; results keep input order.
pub fn relative_polytope_errors(
    snapshots: &[Vec<f64>],
    p: &Polytope,
    tol: f64,
    starts: Option<&[Vec<f64>]>,
    threads: usize,
) -> Result<Vec<Option<f64>>> {
    if let Some(s) = starts {
        check_dim(snapshots.len(), s.len(), "warm starts")?;
    }
    let one = |i: usize| -> Result<Option<f64>> {
        let v = &snapshots[i];
        let norm = p.weight.norm_unchecked(v);
        if norm == 0.0 {
            return Ok(None);
        }
        let start = starts.map(|s| s[i].as_slice());
        let best = match polytope_error_from(v, p, tol, start) {
            Ok(b) => b,
            Err(Error::IterationCap { best, residual, .. }) => {
                log::warn!("polytope error for snapshot {i} stopped at the iteration cap (residual {residual:e})");
                *best
            }
            Err(e) => return Err(e),
        };
        Ok(Some(best.error / norm))
    };
    let threads = threads.max(1).min(snapshots.len().max(1));
    if threads == 1 {
        return (0..snapshots.len()).map(one).collect();
    }
    let chunk = snapshots.len().div_ceil(threads);
    let mut parts: Vec<Result<Vec<Option<f64>>>> = Vec::new();
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..threads)
            .map(|t| {
                let one = &one;
                scope.spawn(move || {
                    let lo = t * chunk;
                    let hi = ((t + 1) * chunk).min(snapshots.len());
                    (lo..hi).map(one).collect::<Result<Vec<_>>>()
                })
            })
            .collect();
        parts = handles.into_iter().map(|h| h.join().expect("worker panicked")).collect();
    });
    let mut out = Vec::with_capacity(snapshots.len());
    for part in parts {
        out.extend(part?);
    }
    Ok(out)
}

/// `(1/T) Σ ‖v* − v‖_M / ‖v‖_M`, skipping zero snapshots with a warning.
pub fn averaged_relative_polytope_error(snapshots: &[Vec<f64>], p: &Polytope, tol: f64) -> Result<f64> {
    if snapshots.is_empty() {
        return Err(Error::InvalidArgument("no snapshots given".into()));
    }
    let errors = relative_polytope_errors(snapshots, p, tol, None, 1)?;
    average_skipping_zero(&errors)
}

pub(crate) fn average_skipping_zero(errors: &[Option<f64>]) -> Result<f64> {
    let skipped = errors.iter().filter(|e| e.is_none()).count();
    if skipped == errors.len() {
        return Err(Error::Degenerate("all snapshots are zero".into()));
    }
    if skipped > 0 {
        log::warn!("skipped {skipped} zero-norm snapshots in the relative error average");
    }
    let kept: Vec<f64> = errors.iter().flatten().copied().collect();
    Ok(kept.iter().sum::<f64>() / kept.len() as f64)
}
