//! k-means in latent space, pseudo-label selection and activation rates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_dim, Error, Result};

pub const KMEANS_MAX_ITERATIONS: usize = 300;

#[derive(Debug, Clone, PartialEq)]
pub struct KmeansResult {
    /// `k` centroids of dimension `r`.
    pub centroids: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    /// Sum of squared distances to the assigned centroids.
    pub inertia: f64,
    /// Inertia after each Lloyd iteration.
    pub history: Vec<f64>,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabelSet {
    /// `(point index, one-hot label in R^k)`
    pub entries: Vec<(usize, Vec<f64>)>,
    /// Mean member distance to the centroid, per cluster.
    pub radii: Vec<f64>,
}

impl PseudoLabelSet {
    pub fn cluster_of(&self, entry: usize) -> usize {
        self.entries[entry].1.iter().position(|&x| x == 1.0).expect("one-hot label")
    }

    /// Selected point indices of one cluster.
    pub fn members(&self, cluster: usize) -> Vec<usize> {
        (0..self.entries.len())
            .filter(|&e| self.cluster_of(e) == cluster)
            .map(|e| self.entries[e].0)
            .collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid; ties go to the lowest index.
fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = squared_distance(point, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn plus_plus_init(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.random_range(0..points.len())].clone()];
    let mut dist: Vec<f64> = points.iter().map(|p| squared_distance(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = points.len() - 1;
            for (i, &d) in dist.iter().enumerate() {
                acc += d;
                if acc > target && d > 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..points.len())
        };
        centroids.push(points[pick].clone());
        for (d, p) in dist.iter_mut().zip(points) {
            *d = d.min(squared_distance(p, &centroids[centroids.len() - 1]));
        }
    }
    centroids
}

/// Lloyd iterations from k-means++ seeding until the assignment stops changing.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> Result<KmeansResult> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be positive".into()));
    }
    if points.len() < k {
        return Err(Error::InvalidArgument(format!("{} points cannot form {k} clusters", points.len())));
    }
    let r = points[0].len();
    for p in points {
        check_dim(r, p.len(), "k-means point")?;
        if p.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("k-means point"));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus_init(points, k, &mut rng);
    let mut labels: Vec<usize> = points.iter().map(|p| nearest(p, &centroids).0).collect();
    let mut history = Vec::new();
    let mut iterations = 0;
    loop {
        iterations += 1;
        // update step
        let mut sums = vec![vec![0.0; r]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            for (s, x) in sums[l].iter_mut().zip(p) {
                *s += x;
            }
        }
        for i in 0..k {
            if counts[i] > 0 {
                centroids[i] = sums[i].iter().map(|s| s / counts[i] as f64).collect();
            }
        }
        // empty clusters take the point farthest from its centroid
        for i in 0..k {
            if counts[i] == 0 {
                let (far, _) = points
                    .iter()
                    .enumerate()
                    .map(|(j, p)| (j, squared_distance(p, &centroids[labels[j]])))
                    .fold((0, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
                counts[labels[far]] -= 1;
                labels[far] = i;
                counts[i] = 1;
                centroids[i] = points[far].clone();
            }
        }
        // assignment step
        let mut changed = false;
        let mut inertia = 0.0;
        for (p, l) in points.iter().zip(labels.iter_mut()) {
            let (best, d) = nearest(p, &centroids);
            if best != *l {
                *l = best;
                changed = true;
            }
            inertia += d;
        }
        history.push(inertia);
        if !changed || iterations >= KMEANS_MAX_ITERATIONS {
            return Ok(KmeansResult {
                centroids,
                labels,
                inertia,
                history,
                iterations,
            });
        }
    }
}

/// Members closer to their centroid than the cluster's mean member distance, labelled one-hot.
pub fn select_pseudo_labels(latents: &[Vec<f64>], km: &KmeansResult) -> Result<PseudoLabelSet> {
    check_dim(latents.len(), km.labels.len(), "pseudo-label latents")?;
    let k = km.centroids.len();
    let dist: Vec<f64> = latents
        .iter()
        .zip(&km.labels)
        .map(|(p, &l)| squared_distance(p, &km.centroids[l]).sqrt())
        .collect();
    let mut radii = vec![0.0; k];
    let mut counts = vec![0usize; k];
    for (&d, &l) in dist.iter().zip(&km.labels) {
        radii[l] += d;
        counts[l] += 1;
    }
    for i in 0..k {
        if counts[i] > 0 {
            radii[i] /= counts[i] as f64;
        }
        if counts[i] == 1 {
            log::warn!("cluster {i} has a single member; it cannot be selected");
        }
    }
    let entries = dist
        .iter()
        .zip(&km.labels)
        .enumerate()
        .filter(|(_, (&d, &l))| d < radii[l])
        .map(|(j, (_, &l))| {
            let mut label = vec![0.0; k];
            label[l] = 1.0;
            (j, label)
        })
        .collect();
    Ok(PseudoLabelSet { entries, radii })
}

/// Share of latent mass per component over a path of simplex vectors.
pub fn activation_rates(path: &[Vec<f64>]) -> Result<Vec<f64>> {
    let Some(first) = path.first() else {
        return Err(Error::InvalidArgument("empty latent path".into()));
    };
    let r = first.len();
    let mut totals = vec![0.0; r];
    for (j, col) in path.iter().enumerate() {
        check_dim(r, col.len(), "latent path column")?;
        let sum: f64 = col.iter().sum();
        if col.iter().any(|&x| !(x >= -1e-8)) || (sum - 1.0).abs() > 1e-8 {
            return Err(Error::NotOnSimplex(format!("latent column {j} (sum {sum})")));
        }
        for (t, x) in totals.iter_mut().zip(col) {
            *t += x;
        }
    }
    let grand: f64 = totals.iter().sum();
    Ok(totals.into_iter().map(|t| t / grand).collect())
}
