#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use polyrom::linalg::{DenseMatrix, SpdWeight};
use polyrom::net::{Encoder, EncoderArch};
use polyrom::pae::{cluster_net, PaeModel};
use proptest::test_runner::Config;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn config(cases: u32) -> Config {
    Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

/// Uniform on the simplex via normalised exponentials.
pub fn random_simplex(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    let e: Vec<f64> = (0..m).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

pub fn random_diag_weight(rng: &mut ChaCha8Rng, n: usize) -> SpdWeight {
    SpdWeight::diagonal((0..n).map(|_| rng.random_range(0.2..2.0)).collect()).unwrap()
}

/// `B Bᵀ + n I`
pub fn random_dense_weight(rng: &mut ChaCha8Rng, n: usize) -> SpdWeight {
    let b = random_matrix(rng, n, n);
    let mut m = b.matmul(&b.transpose()).unwrap();
    for i in 0..n {
        m[(i, i)] += n as f64;
    }
    let sym = DenseMatrix::from_fn(n, n, |i, j| 0.5 * (m[(i, j)] + m[(j, i)]));
    SpdWeight::dense(sym).unwrap()
}

pub fn on_simplex(x: &[f64], tol: f64) -> bool {
    x.iter().all(|&v| v >= 0.0) && (x.iter().sum::<f64>() - 1.0).abs() <= tol
}

/// MLP-encoder model with random vertices.
pub fn micro_model(n: usize, r: usize, k: usize, seed: u64) -> PaeModel {
    let arch = EncoderArch::Mlp {
        input: n,
        hidden: vec![8],
        latent: r,
    };
    let (enc, params) = Encoder::build(&arch, seed).unwrap();
    let mut g = rng(seed + 1);
    let u = random_matrix(&mut g, n, k * r);
    let cluster = (k > 1).then(|| cluster_net(r, k, seed + 2));
    PaeModel::new(enc, params, cluster, u, SpdWeight::scaled_identity(n, 0.5).unwrap(), None).unwrap()
}

fn to_na(m: &DenseMatrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

/// Minimum of `‖Uρ − v‖²_M` over the simplex by enumerating every support set and solving its
/// equality-constrained KKT system.
pub fn qp_oracle(u: &DenseMatrix, weight: &SpdWeight, v: &[f64]) -> (f64, Vec<f64>) {
    let m = u.cols();
    let mw = to_na(&weight.to_dense());
    let un = to_na(u);
    let vn = DVector::from_column_slice(v);
    let gram = un.transpose() * &mw * &un;
    let lin = un.transpose() * &mw * &vn;
    let objective = |rho: &[f64]| {
        let d = &un * DVector::from_column_slice(rho) - &vn;
        (d.transpose() * &mw * &d)[(0, 0)]
    };
    let mut best = (f64::INFINITY, vec![0.0; m]);
    for mask in 1u32..(1 << m) {
        let s: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
        let p = s.len();
        let mut kkt = DMatrix::zeros(p + 1, p + 1);
        let mut rhs = DVector::zeros(p + 1);
        for (a, &i) in s.iter().enumerate() {
            for (b, &j) in s.iter().enumerate() {
                kkt[(a, b)] = gram[(i, j)];
            }
            kkt[(a, p)] = 1.0;
            kkt[(p, a)] = 1.0;
            rhs[a] = lin[i];
        }
        rhs[p] = 1.0;
        let Some(sol) = kkt.clone().lu().solve(&rhs) else {
            continue;
        };
        if (&kkt * &sol - &rhs).amax() > 1e-9 {
            continue;
        }
        let mut rho = vec![0.0; m];
        for (a, &i) in s.iter().enumerate() {
            rho[i] = sol[a];
        }
        if rho.iter().any(|&x| x < -1e-12) {
            continue;
        }
        let rho: Vec<f64> = rho.iter().map(|x| x.max(0.0)).collect();
        let f = objective(&rho);
        if f < best.0 {
            best = (f, rho);
        }
    }
    best
}

/// Brute-force grid search over the simplex, for `m ≤ 3`.
pub fn qp_grid(u: &DenseMatrix, weight: &SpdWeight, v: &[f64], steps: usize) -> f64 {
    let m = u.cols();
    let eval = |rho: &[f64]| {
        let p = u.matvec(rho).unwrap();
        let d: Vec<f64> = p.iter().zip(v).map(|(a, b)| a - b).collect();
        weight.inner(&d, &d).unwrap()
    };
    let mut best = f64::INFINITY;
    match m {
        1 => best = eval(&[1.0]),
        2 => {
            for i in 0..=steps {
                let t = i as f64 / steps as f64;
                best = best.min(eval(&[t, 1.0 - t]));
            }
        }
        3 => {
            for i in 0..=steps {
                for j in 0..=steps - i {
                    let (a, b) = (i as f64 / steps as f64, j as f64 / steps as f64);
                    best = best.min(eval(&[a, b, 1.0 - a - b]));
                }
            }
        }
        _ => panic!("grid oracle supports m <= 3"),
    }
    best
}
