//! Density-matching reward learning over `(descriptor, robot position)`
//! features.
//!
//! The demonstration density is estimated with a Gaussian KDE. The reward is
//! a kernel expansion over inducing points `U`,
//! `R(x) = sum_i alpha_i k(x, u_i)`, chosen to maximize
//!
//! ```text
//! V(alpha) = sum_{u in U} density(u) R(u) - lambda / 2 * alpha^T K_UU alpha
//! ```
//!
//! whose gradient `K_UU (density(U) - lambda alpha)` vanishes at
//! `alpha = density(U) / lambda`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::cluster::KMeans;
use crate::error::{invalid, Result};
use crate::flow::{FlowModelBank, MotionDescriptor};
use crate::gp::SeKernel;
use crate::trajectory::InteractionDemo;

/// A descriptor paired with a robot end-effector position.
#[derive(Clone, Debug, PartialEq)]
pub struct FeaturePoint {
    pub phi: MotionDescriptor,
    pub xr: DVector<f64>,
}

impl FeaturePoint {
    pub fn concat(&self) -> Vec<f64> {
        self.phi.p.iter().chain(self.xr.iter()).copied().collect()
    }
}

fn feature_matrix(features: &[FeaturePoint]) -> Result<DMatrix<f64>> {
    let first = features
        .first()
        .ok_or_else(|| invalid("at least one feature point is required"))?;
    let d = first.phi.len() + first.xr.len();
    if features.iter().any(|f| f.phi.len() + f.xr.len() != d) {
        return Err(invalid("feature points must share a dimension"));
    }
    let rows: Vec<Vec<f64>> = features.iter().map(FeaturePoint::concat).collect();
    Ok(DMatrix::from_fn(features.len(), d, |i, j| rows[i][j]))
}

/// Pairs the descriptor of every human prefix `1..=t` (for `t >= 2`) with
/// the robot position at `t`.
pub fn extract_features(demos: &[InteractionDemo], bank: &FlowModelBank) -> Result<Vec<FeaturePoint>> {
    let per_demo = demos
        .par_iter()
        .map(|demo| {
            let n = demo.human.len().min(demo.robot.len());
            let descriptors = bank.prefix_descriptors(&demo.human.prefix(n))?;
            Ok(descriptors
                .into_iter()
                .enumerate()
                .map(|(i, phi)| FeaturePoint {
                    phi,
                    xr: demo.robot.position(i + 1),
                })
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_demo.into_iter().flatten().collect())
}

/// KDE bandwidth selection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    /// `h_j = std_j * n^(-1 / (d + 4))` per dimension.
    Scott,
    Fixed(Vec<f64>),
}

/// Smallest per-dimension standard deviation used by Scott's rule.
pub const MIN_SPREAD: f64 = 1e-3;

/// Gaussian product-kernel density estimate.
#[derive(Clone, Debug)]
pub struct Kde {
    points: DMatrix<f64>,
    bandwidth: Vec<f64>,
    norm: f64,
}

impl Kde {
    pub fn new(points: DMatrix<f64>, bandwidth: Vec<f64>) -> Result<Self> {
        if points.nrows() == 0 {
            return Err(invalid("density estimate needs at least one point"));
        }
        if bandwidth.len() != points.ncols() {
            return Err(invalid(format!(
                "{} bandwidths for {}-dimensional points",
                bandwidth.len(),
                points.ncols()
            )));
        }
        if bandwidth.iter().any(|h| !(h.is_finite() && *h > 0.0)) {
            return Err(invalid("bandwidths must be positive"));
        }
        let norm = bandwidth
            .iter()
            .map(|h| 1.0 / ((2.0 * PI).sqrt() * h))
            .product::<f64>()
            / points.nrows() as f64;
        Ok(Kde {
            points,
            bandwidth,
            norm,
        })
    }

    pub fn scott(points: DMatrix<f64>) -> Result<Self> {
        let n = points.nrows();
        if n == 0 {
            return Err(invalid("density estimate needs at least one point"));
        }
        let d = points.ncols();
        let factor = (n as f64).powf(-1.0 / (d as f64 + 4.0));
        let bandwidth = (0..d)
            .map(|j| {
                let col = points.column(j);
                let mean = col.mean();
                let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
                var.sqrt().max(MIN_SPREAD) * factor
            })
            .collect();
        Kde::new(points, bandwidth)
    }

    pub fn bandwidth(&self) -> &[f64] {
        &self.bandwidth
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn density(&self, x: &[f64]) -> f64 {
        let mut sum = 0.0;
        for i in 0..self.points.nrows() {
            let mut s = 0.0;
            for (j, xj) in x.iter().enumerate() {
                let z = (xj - self.points[(i, j)]) / self.bandwidth[j];
                s += z * z;
            }
            sum += (-0.5 * s).exp();
        }
        self.norm * sum
    }
}

pub fn estimate_density(features: &[FeaturePoint], bandwidth: &Bandwidth) -> Result<Kde> {
    let points = feature_matrix(features)?;
    match bandwidth {
        Bandwidth::Scott => Kde::scott(points),
        Bandwidth::Fixed(h) => Kde::new(points, h.clone()),
    }
}

/// Kernel reward `R(x) = sum_i alpha_i k(x, u_i)` over concatenated
/// `(descriptor, position)` features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardModel {
    /// Inducing points, one concatenated feature per row.
    pub inducing: Vec<Vec<f64>>,
    pub alpha: Vec<f64>,
    pub kernel: SeKernel,
    pub lambda: f64,
    /// Number of descriptor coordinates at the front of each feature.
    pub descriptor_dim: usize,
}

impl RewardModel {
    pub fn new(
        inducing: Vec<Vec<f64>>,
        alpha: Vec<f64>,
        kernel: SeKernel,
        lambda: f64,
        descriptor_dim: usize,
    ) -> Result<Self> {
        if inducing.is_empty() || inducing.len() != alpha.len() {
            return Err(invalid("reward needs matching, non-empty inducing points and weights"));
        }
        let d = inducing[0].len();
        if d <= descriptor_dim || inducing.iter().any(|u| u.len() != d) {
            return Err(invalid("inducing points must share a dimension larger than the descriptor"));
        }
        if alpha.iter().any(|a| !a.is_finite()) {
            return Err(invalid("reward weights must be finite"));
        }
        kernel.check_dim(d)?;
        Ok(RewardModel {
            inducing,
            alpha,
            kernel,
            lambda,
            descriptor_dim,
        })
    }

    pub fn position_dim(&self) -> usize {
        self.inducing[0].len() - self.descriptor_dim
    }

    fn check(&self, phi: &MotionDescriptor, xr_len: usize) -> Result<()> {
        if phi.len() != self.descriptor_dim || xr_len != self.position_dim() {
            return Err(invalid(format!(
                "reward expects a {}-dim descriptor and {}-dim position, got {} and {}",
                self.descriptor_dim,
                self.position_dim(),
                phi.len(),
                xr_len
            )));
        }
        Ok(())
    }

    pub fn reward_of(&self, phi: &MotionDescriptor, xr: &[f64]) -> Result<f64> {
        self.check(phi, xr.len())?;
        let x: Vec<f64> = phi.p.iter().chain(xr).copied().collect();
        Ok(self
            .inducing
            .iter()
            .zip(&self.alpha)
            .map(|(u, a)| a * self.kernel.eval(x.iter(), u.iter()))
            .sum())
    }

    /// Reward restricted to a fixed descriptor, for evaluating many
    /// positions.
    pub fn conditioned(&self, phi: &MotionDescriptor) -> Result<ConditionedReward> {
        self.check(phi, self.position_dim())?;
        let k = self.descriptor_dim;
        let inv_ls: Vec<f64> = (0..self.inducing[0].len())
            .map(|j| {
                1.0 / if self.kernel.lengthscale.len() == 1 {
                    self.kernel.lengthscale[0]
                } else {
                    self.kernel.lengthscale[j]
                }
            })
            .collect();
        let mut weights = Vec::new();
        let mut centers = Vec::new();
        for (u, a) in self.inducing.iter().zip(&self.alpha) {
            let s: f64 = (0..k)
                .map(|j| ((phi.p[j] - u[j]) * inv_ls[j]).powi(2))
                .sum();
            let w = a * self.kernel.gain * (-0.5 * s).exp();
            if w != 0.0 {
                weights.push(w);
                centers.push(u[k..].to_vec());
            }
        }
        Ok(ConditionedReward {
            weights,
            centers,
            inv_ls: inv_ls[k..].to_vec(),
        })
    }

    /// Average reward over the rows of `path` (`T x D`).
    pub fn trajectory_reward(&self, phi: &MotionDescriptor, path: &DMatrix<f64>) -> Result<f64> {
        if path.nrows() == 0 {
            return Err(invalid("trajectory reward needs a non-empty path"));
        }
        let cond = self.conditioned(phi)?;
        cond.path_reward(path)
    }

    /// Inducing-point Gram matrix.
    pub fn gram(&self) -> DMatrix<f64> {
        let n = self.inducing.len();
        DMatrix::from_fn(n, n, |i, j| {
            self.kernel.eval(self.inducing[i].iter(), self.inducing[j].iter())
        })
    }
}

/// [`RewardModel`] with the descriptor part of the kernel folded into the
/// weights.
#[derive(Clone, Debug)]
pub struct ConditionedReward {
    weights: Vec<f64>,
    centers: Vec<Vec<f64>>,
    inv_ls: Vec<f64>,
}

impl ConditionedReward {
    pub fn at(&self, xr: &[f64]) -> f64 {
        let mut total = 0.0;
        for (w, c) in self.weights.iter().zip(&self.centers) {
            let mut s = 0.0;
            for j in 0..xr.len() {
                let z = (xr[j] - c[j]) * self.inv_ls[j];
                s += z * z;
            }
            total += w * (-0.5 * s).exp();
        }
        total
    }

    pub fn path_reward(&self, path: &DMatrix<f64>) -> Result<f64> {
        if path.ncols() != self.inv_ls.len() {
            return Err(invalid("path dimension does not match the reward"));
        }
        let mut sum = 0.0;
        let mut row = vec![0.0; path.ncols()];
        for i in 0..path.nrows() {
            for (j, r) in row.iter_mut().enumerate() {
                *r = path[(i, j)];
            }
            sum += self.at(&row);
        }
        Ok(sum / path.nrows() as f64)
    }
}

pub fn reward_of(model: &RewardModel, phi: &MotionDescriptor, xr: &[f64]) -> Result<f64> {
    model.reward_of(phi, xr)
}

pub fn trajectory_reward(model: &RewardModel, phi: &MotionDescriptor, path: &DMatrix<f64>) -> Result<f64> {
    model.trajectory_reward(phi, path)
}

/// `V(alpha)` for densities `mu` at the inducing points and Gram `gram`.
pub fn objective(alpha: &DVector<f64>, mu: &DVector<f64>, gram: &DMatrix<f64>, lambda: f64) -> f64 {
    let r = gram * alpha;
    mu.dot(&r) - 0.5 * lambda * alpha.dot(&r)
}

/// Gradient of [`objective`] with respect to `alpha`.
pub fn objective_gradient(alpha: &DVector<f64>, mu: &DVector<f64>, gram: &DMatrix<f64>, lambda: f64) -> DVector<f64> {
    gram * (mu - alpha * lambda)
}

/// Settings for [`fit_reward_with`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    pub n_inducing: usize,
    /// Smoothness weight. `None` picks the value that makes the largest
    /// reward over the inducing points equal `reward_peak`.
    pub lambda: Option<f64>,
    pub reward_peak: f64,
    pub gain: f64,
    pub descriptor_lengthscale: f64,
    pub position_lengthscale: f64,
    pub bandwidth: Bandwidth,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            n_inducing: 200,
            lambda: None,
            reward_peak: 5.0,
            gain: 1.0,
            descriptor_lengthscale: 0.2,
            position_lengthscale: 0.05,
            bandwidth: Bandwidth::Scott,
        }
    }
}

impl RewardConfig {
    pub fn kernel(&self, descriptor_dim: usize, position_dim: usize) -> Result<SeKernel> {
        let mut ls = vec![self.descriptor_lengthscale; descriptor_dim];
        ls.extend(std::iter::repeat_n(self.position_lengthscale, position_dim));
        SeKernel::ard(self.gain, ls, 0.0)
    }
}

/// Inducing points and their densities, shared by the fitting routines.
pub struct InducingSet {
    pub points: DMatrix<f64>,
    pub density: DVector<f64>,
}

pub fn inducing_set(
    features: &[FeaturePoint],
    n_inducing: usize,
    bandwidth: &Bandwidth,
    seed: u64,
) -> Result<InducingSet> {
    let points = feature_matrix(features)?;
    if n_inducing == 0 || n_inducing > points.nrows() {
        return Err(invalid(format!(
            "need 1 <= n_inducing <= {} features, got {n_inducing}",
            points.nrows()
        )));
    }
    let kde = estimate_density(features, bandwidth)?;
    let centers = KMeans::new(n_inducing, seed).n_init(1).fit(&points)?.centers;
    let rows: Vec<Vec<f64>> = (0..centers.nrows())
        .map(|i| centers.row(i).iter().copied().collect())
        .collect();
    let density: Vec<f64> = rows.par_iter().map(|u| kde.density(u)).collect();
    Ok(InducingSet {
        points: centers,
        density: DVector::from_vec(density),
    })
}

/// Fits the reward with a fixed `lambda` and Scott-rule KDE.
pub fn fit_reward(
    features: &[FeaturePoint],
    n_inducing: usize,
    lambda: f64,
    kernel: &SeKernel,
    seed: u64,
) -> Result<RewardModel> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(invalid("lambda must be positive"));
    }
    let set = inducing_set(features, n_inducing, &Bandwidth::Scott, seed)?;
    from_inducing(&set, features[0].phi.len(), lambda, kernel)
}

fn from_inducing(set: &InducingSet, descriptor_dim: usize, lambda: f64, kernel: &SeKernel) -> Result<RewardModel> {
    let inducing: Vec<Vec<f64>> = (0..set.points.nrows())
        .map(|i| set.points.row(i).iter().copied().collect())
        .collect();
    let alpha = set.density.iter().map(|m| m / lambda).collect();
    RewardModel::new(inducing, alpha, kernel.clone(), lambda, descriptor_dim)
}

pub fn fit_reward_with(features: &[FeaturePoint], config: &RewardConfig, seed: u64) -> Result<RewardModel> {
    let first = features
        .first()
        .ok_or_else(|| invalid("at least one feature point is required"))?;
    let kernel = config.kernel(first.phi.len(), first.xr.len())?;
    let set = inducing_set(features, config.n_inducing, &config.bandwidth, seed)?;
    let lambda = match config.lambda {
        Some(l) if l.is_finite() && l > 0.0 => l,
        Some(l) => return Err(invalid(format!("lambda must be positive, got {l}"))),
        None => {
            let unit = from_inducing(&set, first.phi.len(), 1.0, &kernel)?;
            let peak = (unit.gram() * DVector::from_column_slice(&unit.alpha)).max();
            if peak > 0.0 && config.reward_peak > 0.0 {
                peak / config.reward_peak
            } else {
                1.0
            }
        }
    };
    from_inducing(&set, first.phi.len(), lambda, &kernel)
}
