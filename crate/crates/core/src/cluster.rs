//! k-means with k-means++ seeding and Ng-Jordan-Weiss spectral clustering.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};

/// Number of times spectral clustering re-seeds k-means when a cluster ends
/// up empty.
pub const MAX_RESEEDS: u64 = 10;

#[derive(Clone, Debug)]
pub struct KMeansFit {
    pub labels: Vec<usize>,
    /// `k x d` cluster centers.
    pub centers: DMatrix<f64>,
    pub inertia: f64,
    /// Number of clusters without members at convergence. Their centers are
    /// left where the last update placed them.
    pub empty: usize,
}

#[derive(Clone, Debug)]
pub struct KMeans {
    pub k: usize,
    pub max_iter: usize,
    pub n_init: usize,
    pub seed: u64,
}

impl KMeans {
    pub fn new(k: usize, seed: u64) -> Self {
        KMeans {
            k,
            max_iter: 300,
            n_init: 10,
            seed,
        }
    }

    pub fn n_init(mut self, n_init: usize) -> Self {
        self.n_init = n_init.max(1);
        self
    }

    /// Clusters the rows of `points`, keeping the restart with the lowest
    /// inertia. Restarts that leave a cluster empty lose to any restart that
    /// does not.
    pub fn fit(&self, points: &DMatrix<f64>) -> Result<KMeansFit> {
        let n = points.nrows();
        if self.k == 0 || self.k > n {
            return Err(invalid(format!(
                "k-means needs 1 <= k <= n, got k={} for n={n}",
                self.k
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut best: Option<KMeansFit> = None;
        for _ in 0..self.n_init {
            let fit = self.lloyd(points, plus_plus(points, self.k, &mut rng));
            let better = match &best {
                None => true,
                Some(b) => (fit.empty, fit.inertia) < (b.empty, b.inertia),
            };
            if better {
                best = Some(fit);
            }
        }
        Ok(best.expect("n_init >= 1"))
    }

    fn lloyd(&self, points: &DMatrix<f64>, mut centers: DMatrix<f64>) -> KMeansFit {
        let n = points.nrows();
        let d = points.ncols();
        let mut labels = vec![usize::MAX; n];
        let mut inertia = 0.0;
        for _ in 0..self.max_iter {
            let mut changed = false;
            inertia = 0.0;
            for (i, label) in labels.iter_mut().enumerate() {
                let (c, dist) = nearest(points, i, &centers);
                inertia += dist;
                if *label != c {
                    *label = c;
                    changed = true;
                }
            }
            let mut sums = DMatrix::<f64>::zeros(self.k, d);
            let mut counts = vec![0usize; self.k];
            for (i, &c) in labels.iter().enumerate() {
                counts[c] += 1;
                for j in 0..d {
                    sums[(c, j)] += points[(i, j)];
                }
            }
            for c in 0..self.k {
                if counts[c] > 0 {
                    for j in 0..d {
                        centers[(c, j)] = sums[(c, j)] / counts[c] as f64;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        let mut counts = vec![0usize; self.k];
        for &c in &labels {
            counts[c] += 1;
        }
        KMeansFit {
            labels,
            centers,
            inertia,
            empty: counts.iter().filter(|c| **c == 0).count(),
        }
    }
}

fn sq_dist_to(points: &DMatrix<f64>, i: usize, centers: &DMatrix<f64>, c: usize) -> f64 {
    (0..points.ncols())
        .map(|j| {
            let z = points[(i, j)] - centers[(c, j)];
            z * z
        })
        .sum()
}

fn nearest(points: &DMatrix<f64>, i: usize, centers: &DMatrix<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for c in 0..centers.nrows() {
        let d = sq_dist_to(points, i, centers, c);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus(points: &DMatrix<f64>, k: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let n = points.nrows();
    let mut chosen = Vec::with_capacity(k);
    chosen.push(rng.random_range(0..n));
    let mut dist: Vec<f64> = (0..n)
        .map(|i| sq_dist_points(points, i, chosen[0]))
        .collect();
    while chosen.len() < k {
        let total: f64 = dist.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, d) in dist.iter().enumerate() {
                if *d <= 0.0 {
                    continue;
                }
                if target < *d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            if dist[pick] <= 0.0 {
                // rounding pushed past the last positive entry
                pick = dist.iter().rposition(|d| *d > 0.0).unwrap_or(pick);
            }
            pick
        } else {
            // every remaining point duplicates a center
            let free: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(next);
        for (i, d) in dist.iter_mut().enumerate() {
            *d = d.min(sq_dist_points(points, i, next));
        }
    }
    DMatrix::from_fn(k, points.ncols(), |c, j| points[(chosen[c], j)])
}

fn sq_dist_points(points: &DMatrix<f64>, a: usize, b: usize) -> f64 {
    (0..points.ncols())
        .map(|j| {
            let z = points[(a, j)] - points[(b, j)];
            z * z
        })
        .sum()
}

/// Relabels so that clusters are numbered in order of first appearance.
pub fn canonical_labels(labels: &[usize]) -> Vec<usize> {
    let mut map = Vec::<(usize, usize)>::new();
    labels
        .iter()
        .map(|l| match map.iter().find(|(from, _)| from == l) {
            Some((_, to)) => *to,
            None => {
                let to = map.len();
                map.push((*l, to));
                to
            }
        })
        .collect()
}

/// Ng-Jordan-Weiss spectral clustering of the affinity matrix `affinity`.
///
/// The diagonal is ignored. Rows of the top-`k` eigenvectors of
/// `D^-1/2 A D^-1/2` are normalized to unit length and clustered with
/// k-means. Labels are numbered in order of first appearance.
pub fn spectral_cluster(affinity: &DMatrix<f64>, k: usize, seed: u64) -> Result<Vec<usize>> {
    let n = affinity.nrows();
    if affinity.ncols() != n {
        return Err(invalid("affinity matrix must be square"));
    }
    if k == 0 || k > n {
        return Err(invalid(format!("spectral clustering needs 1 <= K <= N, got K={k}, N={n}")));
    }
    let scale = affinity.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1.0);
    for i in 0..n {
        for j in 0..n {
            let a = affinity[(i, j)];
            if !a.is_finite() || a < 0.0 {
                return Err(invalid("affinity entries must be finite and non-negative"));
            }
            if (a - affinity[(j, i)]).abs() > 1e-12 * scale {
                return Err(invalid("affinity matrix must be symmetric"));
            }
        }
    }
    if k == 1 {
        return Ok(vec![0; n]);
    }
    let mut w = affinity.clone();
    w.fill_diagonal(0.0);
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|i| {
            let d: f64 = w.row(i).sum();
            if d > 0.0 {
                1.0 / d.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    let m = DMatrix::from_fn(n, n, |i, j| inv_sqrt[i] * w[(i, j)] * inv_sqrt[j]);
    let eig = SymmetricEigen::try_new(m, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Numeric("eigen-decomposition did not converge".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|a, b| {
        eig.eigenvalues[*b]
            .total_cmp(&eig.eigenvalues[*a])
            .then(a.cmp(b))
    });
    let mut embed = DMatrix::from_fn(n, k, |i, c| eig.eigenvectors[(i, order[c])]);
    for i in 0..n {
        let norm = embed.row(i).norm();
        if norm > 0.0 {
            embed.row_mut(i).unscale_mut(norm);
        }
    }
    for attempt in 0..MAX_RESEEDS {
        let fit = KMeans::new(k, seed.wrapping_add(attempt)).fit(&embed)?;
        if fit.empty == 0 {
            return Ok(canonical_labels(&fit.labels));
        }
    }
    Err(Error::Clustering(format!(
        "k-means left a cluster empty after {MAX_RESEEDS} seeds"
    )))
}
