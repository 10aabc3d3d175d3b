//! Gaussian process regression and Gaussian random paths.
//!
//! [`GpModel`] is a multi-output GP regressor where every output column shares
//! one squared-exponential kernel and one Gram factorization. The predictive
//! variance is therefore a single scalar per query point.
//!
//! [`grp_distribution`] conditions a time-indexed GP on a set of anchoring
//! `(t, x)` pairs and returns the mean path and covariance over a grid of test
//! times. The prior mean is the straight line through the earliest and latest
//! anchors, so constant and linear paths are reproduced exactly and the
//! conditioned path is equivariant under translation.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Squared-exponential kernel `gain * exp(-0.5 * sum(((a - b) / l)^2))` with
/// observation noise `noise_var` added on the Gram diagonal.
///
/// `lengthscale` holds either one shared value or one value per input
/// dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeKernel {
    pub gain: f64,
    pub lengthscale: Vec<f64>,
    pub noise_var: f64,
}

impl SeKernel {
    pub fn new(gain: f64, lengthscale: f64, noise_var: f64) -> Result<Self> {
        Self::ard(gain, vec![lengthscale], noise_var)
    }

    pub fn ard(gain: f64, lengthscale: Vec<f64>, noise_var: f64) -> Result<Self> {
        let kernel = SeKernel {
            gain,
            lengthscale,
            noise_var,
        };
        kernel.check()?;
        Ok(kernel)
    }

    /// Default hyperparameters for inputs spanning `range`: unit gain,
    /// lengthscale of a fifth of the range and noise variance 1e-4.
    pub fn for_range(range: f64) -> Self {
        let range = if range.is_finite() && range > 0.0 {
            range
        } else {
            1.0
        };
        SeKernel {
            gain: 1.0,
            lengthscale: vec![0.2 * range],
            noise_var: 1e-4,
        }
    }

    pub fn with_noise(mut self, noise_var: f64) -> Self {
        self.noise_var = noise_var;
        self
    }

    pub fn with_gain(mut self, gain: f64) -> Self {
        self.gain = gain;
        self
    }

    /// Checks that every hyperparameter is finite and strictly positive.
    ///
    /// A zero noise variance is accepted so that exactly interpolating
    /// models can be requested; singular Gram matrices are then reported by
    /// the factorization instead.
    pub fn check(&self) -> Result<()> {
        if !(self.gain.is_finite() && self.gain > 0.0) {
            return Err(invalid(format!("kernel gain must be positive, got {}", self.gain)));
        }
        if self.lengthscale.is_empty() {
            return Err(invalid("kernel needs at least one lengthscale"));
        }
        if let Some(l) = self
            .lengthscale
            .iter()
            .find(|l| !(l.is_finite() && **l > 0.0))
        {
            return Err(invalid(format!("kernel lengthscale must be positive, got {l}")));
        }
        if !(self.noise_var.is_finite() && self.noise_var >= 0.0) {
            return Err(invalid(format!(
                "kernel noise variance must be non-negative, got {}",
                self.noise_var
            )));
        }
        Ok(())
    }

    pub(crate) fn check_dim(&self, dim: usize) -> Result<()> {
        self.check()?;
        if self.lengthscale.len() != 1 && self.lengthscale.len() != dim {
            return Err(invalid(format!(
                "kernel has {} lengthscales for {dim}-dimensional inputs",
                self.lengthscale.len()
            )));
        }
        Ok(())
    }

    #[inline]
    fn lengthscale_at(&self, i: usize) -> f64 {
        if self.lengthscale.len() == 1 {
            self.lengthscale[0]
        } else {
            self.lengthscale[i]
        }
    }

    /// Scaled squared distance `sum(((a - b) / l)^2)`.
    #[inline]
    pub fn scaled_sq_dist<'a>(
        &self,
        a: impl IntoIterator<Item = &'a f64>,
        b: impl IntoIterator<Item = &'a f64>,
    ) -> f64 {
        a.into_iter()
            .zip(b)
            .enumerate()
            .map(|(i, (x, y))| {
                let z = (x - y) / self.lengthscale_at(i);
                z * z
            })
            .sum()
    }

    #[inline]
    pub fn eval<'a>(
        &self,
        a: impl IntoIterator<Item = &'a f64>,
        b: impl IntoIterator<Item = &'a f64>,
    ) -> f64 {
        self.gain * (-0.5 * self.scaled_sq_dist(a, b)).exp()
    }

    /// Kernel between scalar inputs, using the first lengthscale.
    #[inline]
    pub fn eval_scalar(&self, a: f64, b: f64) -> f64 {
        let z = (a - b) / self.lengthscale[0];
        self.gain * (-0.5 * z * z).exp()
    }

    /// Derivative of `eval_scalar(t, s)` with respect to `t`.
    #[inline]
    pub fn eval_scalar_dt(&self, t: f64, s: f64) -> f64 {
        let l2 = self.lengthscale[0] * self.lengthscale[0];
        -(t - s) / l2 * self.eval_scalar(t, s)
    }

    /// Gram matrix between the rows of `a` and the rows of `b`.
    pub fn gram(&self, a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(a.nrows(), b.nrows(), |i, j| {
            self.eval(a.row(i).iter(), b.row(j).iter())
        })
    }
}

/// Cholesky factorization that also rejects numerically singular pivots.
pub(crate) fn factorize(matrix: DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    let n = matrix.nrows();
    let max_diag = matrix.diagonal().iter().fold(0.0_f64, |m, v| m.max(*v));
    let floor = f64::EPSILON * n.max(1) as f64 * max_diag;
    let chol = Cholesky::new(matrix).ok_or_else(|| {
        Error::Numeric(format!(
            "{what} is not positive definite; increase the noise variance or jitter"
        ))
    })?;
    let l = chol.l_dirty();
    if (0..n).any(|i| l[(i, i)] * l[(i, i)] <= floor) {
        return Err(Error::Numeric(format!(
            "{what} is numerically singular; increase the noise variance or jitter"
        )));
    }
    Ok(chol)
}

/// Posterior mean and variance at one query point.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub mean: DVector<f64>,
    pub var: f64,
}

/// Fitted GP regressor: training data plus the cached factorization of
/// `K(X, X) + noise_var * I`.
#[derive(Clone, Debug)]
pub struct GpModel {
    kernel: SeKernel,
    inputs: DMatrix<f64>,
    outputs: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    weights: DMatrix<f64>,
}

impl GpModel {
    /// Fits the model. `inputs` is `n x d`, `outputs` is `n x m`.
    pub fn fit(inputs: DMatrix<f64>, outputs: DMatrix<f64>, kernel: SeKernel) -> Result<Self> {
        if inputs.nrows() == 0 {
            return Err(invalid("GP needs at least one training point"));
        }
        if inputs.nrows() != outputs.nrows() {
            return Err(invalid(format!(
                "GP has {} inputs but {} outputs",
                inputs.nrows(),
                outputs.nrows()
            )));
        }
        if inputs.iter().chain(outputs.iter()).any(|v| !v.is_finite()) {
            return Err(invalid("GP training data contains non-finite values"));
        }
        kernel.check_dim(inputs.ncols())?;
        let mut gram = kernel.gram(&inputs, &inputs);
        for i in 0..gram.nrows() {
            gram[(i, i)] += kernel.noise_var;
        }
        let chol = factorize(gram, "GP Gram matrix")?;
        let weights = chol.solve(&outputs);
        Ok(GpModel {
            kernel,
            inputs,
            outputs,
            chol,
            weights,
        })
    }

    pub fn kernel(&self) -> &SeKernel {
        &self.kernel
    }

    pub fn inputs(&self) -> &DMatrix<f64> {
        &self.inputs
    }

    pub fn outputs(&self) -> &DMatrix<f64> {
        &self.outputs
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.outputs.ncols()
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.nrows() == 0
    }

    fn cross(&self, xq: &[f64]) -> DVector<f64> {
        DVector::from_fn(self.inputs.nrows(), |i, _| {
            self.kernel.eval(self.inputs.row(i).iter(), xq.iter())
        })
    }

    pub fn predict(&self, xq: &[f64]) -> Result<Prediction> {
        if xq.len() != self.input_dim() {
            return Err(invalid(format!(
                "query has dimension {} but the model expects {}",
                xq.len(),
                self.input_dim()
            )));
        }
        let k = self.cross(xq);
        let mean = self.weights.tr_mul(&k);
        let prior = self.kernel.eval(xq.iter(), xq.iter());
        let v = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&k)
            .ok_or_else(|| Error::Numeric("triangular solve failed".into()))?;
        let var = (prior - v.norm_squared()).clamp(0.0, prior);
        Ok(Prediction {
            mean: DVector::from_column_slice(mean.as_slice()),
            var,
        })
    }

    /// Predictions for every row of `queries` using one blocked solve.
    pub fn predict_rows(&self, queries: &DMatrix<f64>) -> Result<Vec<Prediction>> {
        if queries.ncols() != self.input_dim() {
            return Err(invalid(format!(
                "queries have dimension {} but the model expects {}",
                queries.ncols(),
                self.input_dim()
            )));
        }
        let cross = self.kernel.gram(&self.inputs, queries);
        let means = self.weights.tr_mul(&cross);
        let v = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&cross)
            .ok_or_else(|| Error::Numeric("triangular solve failed".into()))?;
        let prior = self.kernel.gain;
        Ok((0..queries.nrows())
            .map(|j| Prediction {
                mean: means.column(j).into_owned(),
                var: (prior - v.column(j).norm_squared()).clamp(0.0, prior),
            })
            .collect())
    }
}

/// One anchoring location of a Gaussian random path.
#[derive(Clone, Debug, PartialEq)]
pub struct Anchor {
    pub t: f64,
    pub x: DVector<f64>,
}

impl Anchor {
    pub fn new(t: f64, x: impl Into<Vec<f64>>) -> Self {
        Anchor {
            t,
            x: DVector::from_vec(x.into()),
        }
    }
}

/// Conditioned mean of a Gaussian random path as a function of time, with
/// its analytic time derivative.
#[derive(Clone, Debug)]
pub struct GrpMean {
    kernel: SeKernel,
    times: Vec<f64>,
    origin: f64,
    base: DVector<f64>,
    slope: DVector<f64>,
    beta: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl GrpMean {
    pub fn fit(anchors: &[Anchor], kernel: &SeKernel) -> Result<Self> {
        kernel.check()?;
        if anchors.len() < 2 {
            return Err(invalid("a Gaussian random path needs at least two anchors"));
        }
        let dim = anchors[0].x.len();
        if dim == 0 || anchors.iter().any(|a| a.x.len() != dim) {
            return Err(invalid("anchors must share a non-zero dimension"));
        }
        if anchors
            .iter()
            .any(|a| !a.t.is_finite() || a.x.iter().any(|v| !v.is_finite()))
        {
            return Err(invalid("anchors contain non-finite values"));
        }
        let mut sorted: Vec<f64> = anchors.iter().map(|a| a.t).collect();
        sorted.sort_by(f64::total_cmp);
        if sorted.windows(2).any(|w| w[1] - w[0] <= 0.0) {
            return Err(invalid("anchor times must be distinct"));
        }
        let first = anchors
            .iter()
            .min_by(|a, b| a.t.total_cmp(&b.t))
            .expect("non-empty");
        let last = anchors
            .iter()
            .max_by(|a, b| a.t.total_cmp(&b.t))
            .expect("non-empty");
        let origin = first.t;
        let base = first.x.clone();
        let slope = (&last.x - &first.x) / (last.t - first.t);

        let times: Vec<f64> = anchors.iter().map(|a| a.t).collect();
        let m = anchors.len();
        let residual = DMatrix::from_fn(m, dim, |i, j| {
            anchors[i].x[j] - (base[j] + slope[j] * (anchors[i].t - origin))
        });
        let mut gram = DMatrix::from_fn(m, m, |i, j| kernel.eval_scalar(times[i], times[j]));
        for i in 0..m {
            gram[(i, i)] += kernel.noise_var;
        }
        let chol = factorize(gram, "anchor kernel matrix")?;
        let beta = chol.solve(&residual);
        Ok(GrpMean {
            kernel: kernel.clone(),
            times,
            origin,
            base,
            slope,
            beta,
            chol,
        })
    }

    pub fn dim(&self) -> usize {
        self.base.len()
    }

    pub fn value(&self, t: f64) -> DVector<f64> {
        let mut out = &self.base + &self.slope * (t - self.origin);
        for (i, ti) in self.times.iter().enumerate() {
            let k = self.kernel.eval_scalar(t, *ti);
            for j in 0..out.len() {
                out[j] += k * self.beta[(i, j)];
            }
        }
        out
    }

    pub fn derivative(&self, t: f64) -> DVector<f64> {
        let mut out = self.slope.clone();
        for (i, ti) in self.times.iter().enumerate() {
            let dk = self.kernel.eval_scalar_dt(t, *ti);
            for j in 0..out.len() {
                out[j] += dk * self.beta[(i, j)];
            }
        }
        out
    }

    /// Posterior covariance over `test_times`.
    pub fn covariance(&self, test_times: &[f64]) -> Result<DMatrix<f64>> {
        let cross = DMatrix::from_fn(self.times.len(), test_times.len(), |i, j| {
            self.kernel.eval_scalar(self.times[i], test_times[j])
        });
        let v = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&cross)
            .ok_or_else(|| Error::Numeric("triangular solve failed".into()))?;
        let n = test_times.len();
        let mut cov = DMatrix::from_fn(n, n, |i, j| {
            self.kernel.eval_scalar(test_times[i], test_times[j])
        });
        cov -= v.tr_mul(&v);
        // exact symmetry
        for i in 0..n {
            for j in (i + 1)..n {
                let s = 0.5 * (cov[(i, j)] + cov[(j, i)]);
                cov[(i, j)] = s;
                cov[(j, i)] = s;
            }
        }
        Ok(cov)
    }
}

/// Gaussian distribution over paths evaluated at `test_times`.
#[derive(Clone, Debug)]
pub struct PathDistribution {
    /// `T x d` mean path.
    pub mean_path: DMatrix<f64>,
    /// `T x T` covariance shared by every path dimension.
    pub covariance: DMatrix<f64>,
    pub test_times: Vec<f64>,
    /// Kernel gain, used to scale the sampling jitter.
    pub gain: f64,
}

impl PathDistribution {
    pub fn len(&self) -> usize {
        self.test_times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.test_times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.mean_path.ncols()
    }
}

pub fn grp_distribution(
    anchors: &[Anchor],
    test_times: &[f64],
    kernel: &SeKernel,
) -> Result<PathDistribution> {
    if test_times.is_empty() {
        return Err(invalid("a path distribution needs at least one test time"));
    }
    if test_times.iter().any(|t| !t.is_finite()) {
        return Err(invalid("test times must be finite"));
    }
    let mean = GrpMean::fit(anchors, kernel)?;
    let d = mean.dim();
    let mut mean_path = DMatrix::zeros(test_times.len(), d);
    for (i, t) in test_times.iter().enumerate() {
        mean_path.row_mut(i).copy_from(&mean.value(*t).transpose());
    }
    let covariance = mean.covariance(test_times)?;
    Ok(PathDistribution {
        mean_path,
        covariance,
        test_times: test_times.to_vec(),
        gain: kernel.gain,
    })
}

/// Relative jitter added to the path covariance before factorizing it.
pub const SAMPLE_JITTER: f64 = 1e-8;

/// Draws `n_samples` paths from `N(mean_path, covariance)`, each path
/// dimension independently. Deterministic for a given seed.
pub fn grp_sample(dist: &PathDistribution, n_samples: usize, seed: u64) -> Result<Vec<DMatrix<f64>>> {
    if n_samples == 0 {
        return Ok(Vec::new());
    }
    let t = dist.len();
    if dist.covariance.shape() != (t, t) || dist.mean_path.nrows() != t {
        return Err(invalid("path distribution has inconsistent shapes"));
    }
    let mut jitter = SAMPLE_JITTER * dist.gain;
    let chol = loop {
        let mut cov = dist.covariance.clone();
        for i in 0..t {
            cov[(i, i)] += jitter;
        }
        match Cholesky::new(cov) {
            Some(c) => break c,
            None if jitter < 1e-4 * dist.gain => jitter *= 10.0,
            None => {
                return Err(Error::Numeric(
                    "path covariance is not positive semi-definite".into(),
                ))
            }
        }
    };
    let l = chol.unpack();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = dist.dim();
    Ok((0..n_samples)
        .map(|_| {
            let z = DMatrix::from_fn(t, d, |_, _| StandardNormal.sample(&mut rng));
            &dist.mean_path + &l * z
        })
        .collect())
}

/// Appends the run-up anchor `(1 - epsilon, final_pos - epsilon * final_vel)`
/// and the terminal anchor `(1, final_pos)` to `anchors`.
pub fn apply_runup(
    mut anchors: Vec<Anchor>,
    final_pos: &DVector<f64>,
    final_vel: &DVector<f64>,
    epsilon: f64,
) -> Result<Vec<Anchor>> {
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(invalid(format!("run-up epsilon must lie in (0, 0.5), got {epsilon}")));
    }
    if final_pos.len() != final_vel.len() {
        return Err(invalid("final position and velocity dimensions differ"));
    }
    anchors.push(Anchor {
        t: 1.0 - epsilon,
        x: final_pos - final_vel * epsilon,
    });
    anchors.push(Anchor {
        t: 1.0,
        x: final_pos.clone(),
    });
    Ok(anchors)
}

/// `n` evenly spaced values covering `[start, end]`.
pub fn linspace(start: f64, end: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![start],
        _ => {
            let step = (end - start) / (n - 1) as f64;
            (0..n)
                .map(|i| if i + 1 == n { end } else { start + step * i as f64 })
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kernel(gain: f64, l: f64, noise: f64) -> SeKernel {
        SeKernel::new(gain, l, noise).unwrap()
    }

    #[test]
    fn scalar_closed_form() {
        let g = 2.5;
        let model = GpModel::fit(
            DMatrix::from_row_slice(1, 1, &[0.0]),
            DMatrix::from_row_slice(1, 1, &[2.0]),
            kernel(g, 1.0, g),
        )
        .unwrap();
        let p = model.predict(&[0.0]).unwrap();
        assert!((p.mean[0] - 1.0).abs() < 1e-12);
        // g - g^2 / 2g
        assert!((p.var - g / 2.0).abs() < 1e-12);
    }

    #[test]
    fn interpolates_training_points_at_small_noise() {
        let xs = DMatrix::from_row_slice(4, 2, &[0.0, 0.0, 1.0, 0.3, -0.5, 2.0, 1.5, -1.0]);
        let ys = DMatrix::from_row_slice(4, 1, &[1.0, -2.0, 0.5, 3.0]);
        let model = GpModel::fit(xs.clone(), ys.clone(), kernel(1.0, 0.7, 1e-12)).unwrap();
        for i in 0..4 {
            let q: Vec<f64> = xs.row(i).iter().copied().collect();
            let p = model.predict(&q).unwrap();
            assert!((p.mean[0] - ys[(i, 0)]).abs() < 1e-6);
        }
    }

    #[test]
    fn duplicated_rows_without_noise_are_singular() {
        let xs = DMatrix::from_row_slice(2, 1, &[0.3, 0.3]);
        let ys = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
        let err = GpModel::fit(xs, ys, kernel(1.0, 1.0, 0.0)).unwrap_err();
        assert!(matches!(err, Error::Numeric(_)), "{err}");
    }

    #[test]
    fn far_query_reverts_to_prior_variance() {
        let xs = DMatrix::from_row_slice(3, 1, &[0.0, 0.1, 0.2]);
        let ys = DMatrix::from_row_slice(3, 1, &[0.0, 1.0, 0.0]);
        let model = GpModel::fit(xs, ys, kernel(1.7, 0.1, 1e-4)).unwrap();
        let p = model.predict(&[0.2 + 10.0 * 0.1]).unwrap();
        assert!(p.var >= 0.99 * 1.7);
    }

    #[test]
    fn query_dimension_is_checked() {
        let model = GpModel::fit(
            DMatrix::from_row_slice(1, 2, &[0.0, 0.0]),
            DMatrix::from_row_slice(1, 1, &[0.0]),
            kernel(1.0, 1.0, 1e-4),
        )
        .unwrap();
        assert!(matches!(model.predict(&[0.0]), Err(Error::Validation(_))));
    }

    #[test]
    fn mismatched_lengthscales_rejected() {
        let k = SeKernel::ard(1.0, vec![1.0, 2.0, 3.0], 1e-4).unwrap();
        let err = GpModel::fit(DMatrix::zeros(2, 2), DMatrix::zeros(2, 1), k).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn grp_endpoints_and_symmetric_midpoint() {
        let k = kernel(1.0, 0.2, 1e-10);
        let d = grp_distribution(
            &[Anchor::new(0.0, vec![0.0]), Anchor::new(1.0, vec![1.0])],
            &linspace(0.0, 1.0, 11),
            &k,
        )
        .unwrap();
        assert!(d.mean_path[(0, 0)].abs() < 1e-4);
        assert!((d.mean_path[(10, 0)] - 1.0).abs() < 1e-4);
        assert!(d.covariance.diagonal().iter().all(|v| *v >= -1e-9));

        let a = 0.37;
        let d = grp_distribution(
            &[Anchor::new(0.0, vec![a]), Anchor::new(1.0, vec![a])],
            &[0.5],
            &k,
        )
        .unwrap();
        assert!((d.mean_path[(0, 0)] - a).abs() < 1e-6);
    }

    #[test]
    fn coincident_anchor_times_rejected() {
        let k = kernel(1.0, 0.2, 1e-4);
        let err = grp_distribution(
            &[Anchor::new(0.5, vec![0.0]), Anchor::new(0.5, vec![1.0])],
            &[0.0],
            &k,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn sampling_edge_cases() {
        let k = kernel(1.0, 0.3, 1e-6);
        let d = grp_distribution(
            &[Anchor::new(0.0, vec![0.0, 1.0]), Anchor::new(1.0, vec![1.0, 0.0])],
            &linspace(0.0, 1.0, 20),
            &k,
        )
        .unwrap();
        assert!(grp_sample(&d, 0, 1).unwrap().is_empty());
        let a = grp_sample(&d, 3, 9).unwrap();
        let b = grp_sample(&d, 3, 9).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, grp_sample(&d, 3, 10).unwrap());
    }

    #[test]
    fn runup_anchor_placement() {
        let pos = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let vel = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let out = apply_runup(vec![Anchor::new(0.0, vec![0.0; 3])], &pos, &vel, 0.01).unwrap();
        assert_eq!(out.len(), 3);
        assert!((out[1].t - 0.99).abs() < 1e-15);
        assert!((out[1].x[0] - 0.99).abs() < 1e-15);
        assert_eq!(out[2].t, 1.0);

        let still = apply_runup(Vec::new(), &pos, &DVector::zeros(3), 0.01).unwrap();
        assert_eq!(still[0].x, pos);
        assert!(apply_runup(Vec::new(), &pos, &vel, 0.5).is_err());
    }

    #[test]
    fn linspace_hits_endpoints() {
        let v = linspace(0.0, 1.0, 7);
        assert_eq!(v.len(), 7);
        assert_eq!(v[0], 0.0);
        assert_eq!(v[6], 1.0);
        assert_eq!(linspace(2.0, 3.0, 1), vec![2.0]);
    }
}
