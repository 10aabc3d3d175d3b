//! Reference computations written without the library's solvers.

use nalgebra::{DMatrix, DVector};

pub fn se(gain: f64, ls: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let s: f64 = a
        .iter()
        .zip(b)
        .enumerate()
        .map(|(j, (x, y))| {
            let l = if ls.len() == 1 { ls[0] } else { ls[j] };
            ((x - y) / l).powi(2)
        })
        .sum();
    gain * (-0.5 * s).exp()
}

/// Gauss-Jordan inverse with partial pivoting.
pub fn invert(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let mut a = m.clone();
    let mut inv = DMatrix::identity(n, n);
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[(i, c)].abs().total_cmp(&a[(j, c)].abs())).unwrap();
        a.swap_rows(c, p);
        inv.swap_rows(c, p);
        let d = a[(c, c)];
        assert!(d.abs() > 1e-300, "singular matrix");
        for j in 0..n {
            a[(c, j)] /= d;
            inv[(c, j)] /= d;
        }
        for r in 0..n {
            if r != c {
                let f = a[(r, c)];
                if f != 0.0 {
                    for j in 0..n {
                        a[(r, j)] -= f * a[(c, j)];
                        inv[(r, j)] -= f * inv[(c, j)];
                    }
                }
            }
        }
    }
    inv
}

fn row(m: &DMatrix<f64>, i: usize) -> Vec<f64> {
    m.row(i).iter().copied().collect()
}

/// Posterior mean rows and variances from an explicit inverse of the
/// noisy Gram matrix.
pub fn gp_naive(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    q: &DMatrix<f64>,
    gain: f64,
    ls: &[f64],
    noise: f64,
) -> (DMatrix<f64>, Vec<f64>) {
    let n = x.nrows();
    let mut k = DMatrix::from_fn(n, n, |i, j| se(gain, ls, &row(x, i), &row(x, j)));
    for i in 0..n {
        k[(i, i)] += noise;
    }
    let kinv = invert(&k);
    let ks = DMatrix::from_fn(n, q.nrows(), |i, j| se(gain, ls, &row(x, i), &row(q, j)));
    let mean = ks.transpose() * &kinv * y;
    let var = (0..q.nrows())
        .map(|j| {
            let c = ks.column(j);
            se(gain, ls, &row(q, j), &row(q, j)) - (c.transpose() * &kinv * c)[(0, 0)]
        })
        .collect();
    (mean, var)
}

/// `mu^T K a - lambda / 2 a^T K a`.
pub fn value(a: &DVector<f64>, mu: &DVector<f64>, k: &DMatrix<f64>, lambda: f64) -> f64 {
    let ka = k * a;
    mu.dot(&ka) - 0.5 * lambda * a.dot(&ka)
}

/// Maximizes [`value`] by accelerated gradient ascent from zero.
pub fn ascend(mu: &DVector<f64>, k: &DMatrix<f64>, lambda: f64, iters: usize) -> DVector<f64> {
    // the Hessian is -lambda K; its spectral norm is bounded by the
    // largest absolute row sum
    let bound = (0..k.nrows())
        .map(|i| k.row(i).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let step = 1.0 / (lambda * bound);
    let mut a = DVector::zeros(mu.len());
    let mut prev = a.clone();
    for it in 0..iters {
        let mom = it as f64 / (it as f64 + 3.0);
        let y = &a + (&a - &prev) * mom;
        let grad = k * (mu - &y * lambda);
        prev = a;
        a = y + grad * step;
    }
    a
}
