//! Motion-flow models: GP regressors from positions to velocities, the
//! alignment-free similarity between a trajectory and a flow, spectral
//! clustering of demonstrations and simplex motion descriptors.
//!
//! For a trajectory `xi` and a flow model with posterior mean `mu` and
//! variance `var`, the similarity is the average over the points of `xi` of
//!
//! ```text
//! cosine_distance(xdot_t, mu(x_t)) + spatial_weight * var(x_t)
//! ```
//!
//! The first term compares headings, the second measures how far the point
//! lies from the flow's training data. Points are never matched pairwise, so
//! trajectories of different lengths or speeds can be compared directly and
//! any prefix of a trajectory can be scored.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::spectral_cluster;
use crate::error::{invalid, Result};
use crate::gp::{GpModel, SeKernel};
use crate::trajectory::Trajectory;

/// Velocities shorter than this are treated as zero by
/// [`cosine_distance`].
pub const ZERO_VELOCITY: f64 = 1e-12;

/// Maximum number of pooled training pairs per cluster model.
pub const DEFAULT_MAX_POINTS: usize = 600;

/// `1 - cos(a, b)`, or `1` when either vector is (numerically) zero.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na < ZERO_VELOCITY || nb < ZERO_VELOCITY {
        return 1.0;
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    1.0 - dot / (na * nb)
}

/// Per-point temporal and spatial terms of the similarity.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SimilarityTerms {
    pub temporal: f64,
    pub spatial: f64,
}

impl SimilarityTerms {
    pub fn total(&self, spatial_weight: f64) -> f64 {
        self.temporal + spatial_weight * self.spatial
    }
}

/// A flow model: a GP mapping positions to velocities.
#[derive(Clone, Debug)]
pub struct FlowModel {
    pub gp: GpModel,
    pub cluster_id: usize,
}

impl FlowModel {
    /// Fits a flow on the pooled `(position, velocity)` pairs of `members`,
    /// keeping at most `max_points` pairs by uniform subsampling.
    pub fn fit(
        members: &[&Trajectory],
        kernel: &SeKernel,
        cluster_id: usize,
        max_points: usize,
    ) -> Result<Self> {
        let first = members
            .first()
            .ok_or_else(|| invalid("a flow model needs at least one trajectory"))?;
        let d = first.dim();
        if members.iter().any(|m| m.dim() != d) {
            return Err(invalid("flow model trajectories must share a dimension"));
        }
        let total: usize = members.iter().map(|m| m.len()).sum();
        let keep = total.min(max_points.max(1));
        let mut inputs = DMatrix::zeros(keep, d);
        let mut outputs = DMatrix::zeros(keep, d);
        let pair = |flat: usize| {
            let mut rest = flat;
            for m in members {
                if rest < m.len() {
                    return (*m, rest);
                }
                rest -= m.len();
            }
            unreachable!("index within pooled length")
        };
        for row in 0..keep {
            let flat = row * total / keep;
            let (traj, i) = pair(flat);
            inputs.row_mut(row).copy_from(&traj.positions().row(i));
            outputs.row_mut(row).copy_from(&traj.velocities().row(i));
        }
        Ok(FlowModel {
            gp: GpModel::fit(inputs, outputs, kernel.clone())?,
            cluster_id,
        })
    }

    pub fn from_trajectory(traj: &Trajectory, kernel: &SeKernel) -> Result<Self> {
        FlowModel::fit(&[traj], kernel, 0, usize::MAX)
    }

    pub fn dim(&self) -> usize {
        self.gp.input_dim()
    }

    /// Temporal and spatial terms at every point of `xi`.
    pub fn point_terms(&self, xi: &Trajectory) -> Result<Vec<SimilarityTerms>> {
        if xi.dim() != self.dim() {
            return Err(invalid(format!(
                "trajectory has dimension {} but the flow model expects {}",
                xi.dim(),
                self.dim()
            )));
        }
        let preds = self.gp.predict_rows(xi.positions())?;
        Ok(preds
            .iter()
            .enumerate()
            .map(|(t, p)| {
                let v: Vec<f64> = xi.velocities().row(t).iter().copied().collect();
                SimilarityTerms {
                    temporal: cosine_distance(&v, p.mean.as_slice()),
                    spatial: p.var,
                }
            })
            .collect())
    }

    /// Averaged temporal and spatial terms over `xi`.
    pub fn terms(&self, xi: &Trajectory) -> Result<SimilarityTerms> {
        let points = self.point_terms(xi)?;
        let n = points.len() as f64;
        let mut sum = SimilarityTerms::default();
        for p in &points {
            sum.temporal += p.temporal;
            sum.spatial += p.spatial;
        }
        Ok(SimilarityTerms {
            temporal: sum.temporal / n,
            spatial: sum.spatial / n,
        })
    }
}

fn mean_total(points: &[SimilarityTerms], spatial_weight: f64) -> f64 {
    let mut sum = 0.0;
    for p in points {
        sum += p.total(spatial_weight);
    }
    sum / points.len() as f64
}

/// Similarity of `xi` to `model` with unit spatial weight.
pub fn flow_similarity(xi: &Trajectory, model: &FlowModel) -> Result<f64> {
    flow_similarity_weighted(xi, model, 1.0)
}

pub fn flow_similarity_weighted(xi: &Trajectory, model: &FlowModel, spatial_weight: f64) -> Result<f64> {
    Ok(mean_total(&model.point_terms(xi)?, spatial_weight))
}

/// `d(xi_i; xi_j)`: similarity of `xi_i` to a flow fitted on `xi_j` alone.
/// Not symmetric in its arguments.
pub fn pairwise_similarity(xi_i: &Trajectory, xi_j: &Trajectory, kernel: &SeKernel) -> Result<f64> {
    flow_similarity(xi_i, &FlowModel::from_trajectory(xi_j, kernel)?)
}

/// Matrix of `d(xi_i; xi_j)` for every ordered pair.
pub fn similarity_matrix(trajs: &[Trajectory], kernel: &SeKernel, spatial_weight: f64) -> Result<DMatrix<f64>> {
    let models = trajs
        .par_iter()
        .map(|t| FlowModel::from_trajectory(t, kernel))
        .collect::<Result<Vec<_>>>()?;
    let n = trajs.len();
    let rows = trajs
        .par_iter()
        .map(|xi| {
            models
                .iter()
                .map(|m| flow_similarity_weighted(xi, m, spatial_weight))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

/// Symmetric affinity `A = (B + B^T) / 2` with `B_ij = exp(-d(xi_i; xi_j)^2)`.
pub fn build_adjacency(trajs: &[Trajectory], kernel: &SeKernel) -> Result<DMatrix<f64>> {
    adjacency_weighted(trajs, kernel, 1.0)
}

pub fn adjacency_weighted(trajs: &[Trajectory], kernel: &SeKernel, spatial_weight: f64) -> Result<DMatrix<f64>> {
    if trajs.len() < 2 {
        return Err(invalid("adjacency needs at least two trajectories"));
    }
    let d = similarity_matrix(trajs, kernel, spatial_weight)?;
    let b = d.map(|v| (-v * v).exp());
    Ok((&b + b.transpose()) * 0.5)
}

/// A point on the probability simplex describing which flows a trajectory
/// resembles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionDescriptor {
    pub p: Vec<f64>,
}

impl MotionDescriptor {
    /// `p_k = exp(-d_k^2) / sum_j exp(-d_j^2)`, evaluated with a max shift.
    pub fn from_distances(distances: &[f64]) -> Self {
        let logits: Vec<f64> = distances.iter().map(|d| -d * d).collect();
        MotionDescriptor { p: softmax(&logits) }
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn argmax(&self) -> usize {
        self.p
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, v)| if *v > best.1 { (i, *v) } else { best })
            .0
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.p
    }
}

/// Numerically stable softmax. Non-finite maxima fall back to uniform.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return vec![1.0 / logits.len() as f64; logits.len()];
    }
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.iter().map(|e| e / total).collect()
}

/// `K` flow models sharing a kernel.
#[derive(Clone, Debug)]
pub struct FlowModelBank {
    pub models: Vec<FlowModel>,
    pub kernel: SeKernel,
    pub spatial_weight: f64,
    /// Cluster assigned to each training trajectory.
    pub labels: Vec<usize>,
}

impl FlowModelBank {
    pub fn k(&self) -> usize {
        self.models.len()
    }

    pub fn dim(&self) -> usize {
        self.models.first().map_or(0, FlowModel::dim)
    }

    /// `d_k(xi)` for every model.
    pub fn distances(&self, xi: &Trajectory) -> Result<Vec<f64>> {
        self.models
            .iter()
            .map(|m| flow_similarity_weighted(xi, m, self.spatial_weight))
            .collect()
    }

    pub fn describe(&self, xi: &Trajectory) -> Result<MotionDescriptor> {
        Ok(MotionDescriptor::from_distances(&self.distances(xi)?))
    }

    /// Descriptors of every prefix `xi[..t]` for `t = 2..=len`, sharing the
    /// per-point similarity terms between prefixes.
    pub fn prefix_descriptors(&self, xi: &Trajectory) -> Result<Vec<MotionDescriptor>> {
        let per_model = self
            .models
            .iter()
            .map(|m| m.point_terms(xi))
            .collect::<Result<Vec<_>>>()?;
        let mut sums = vec![0.0; self.k()];
        let mut out = Vec::with_capacity(xi.len().saturating_sub(1));
        for t in 0..xi.len() {
            for (k, terms) in per_model.iter().enumerate() {
                sums[k] += terms[t].total(self.spatial_weight);
            }
            if t >= 1 {
                let n = (t + 1) as f64;
                let d: Vec<f64> = sums.iter().map(|s| s / n).collect();
                out.push(MotionDescriptor::from_distances(&d));
            }
        }
        Ok(out)
    }
}

pub fn describe(xi: &Trajectory, bank: &FlowModelBank) -> Result<MotionDescriptor> {
    bank.describe(xi)
}

/// Settings for [`train_bank_with`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlowConfig {
    pub n_clusters: usize,
    /// Kernel over positions. `None` derives one from the training data's
    /// extent with [`SeKernel::for_range`].
    pub kernel: Option<SeKernel>,
    pub spatial_weight: f64,
    pub max_points: usize,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            n_clusters: 5,
            kernel: None,
            spatial_weight: 1.0,
            max_points: DEFAULT_MAX_POINTS,
        }
    }
}

impl FlowConfig {
    pub fn resolve_kernel(&self, trajs: &[Trajectory]) -> SeKernel {
        self.kernel
            .clone()
            .unwrap_or_else(|| SeKernel::for_range(position_extent(trajs)))
    }
}

/// Largest per-axis extent of all positions.
pub fn position_extent(trajs: &[Trajectory]) -> f64 {
    let d = trajs.first().map_or(0, Trajectory::dim);
    (0..d)
        .map(|j| {
            let (lo, hi) = trajs
                .iter()
                .flat_map(|t| t.positions().column(j).iter().copied().collect::<Vec<_>>())
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
            hi - lo
        })
        .fold(0.0, f64::max)
}

/// Clusters `trajs` into `k` groups and fits one flow per cluster.
pub fn train_bank(trajs: &[Trajectory], k: usize, kernel: &SeKernel, seed: u64) -> Result<FlowModelBank> {
    train_bank_with(
        trajs,
        &FlowConfig {
            n_clusters: k,
            kernel: Some(kernel.clone()),
            ..FlowConfig::default()
        },
        seed,
    )
}

pub fn train_bank_with(trajs: &[Trajectory], config: &FlowConfig, seed: u64) -> Result<FlowModelBank> {
    let k = config.n_clusters;
    if k == 0 || trajs.len() < k {
        return Err(invalid(format!(
            "training a bank of {k} flows needs at least {k} trajectories, got {}",
            trajs.len()
        )));
    }
    let kernel = config.resolve_kernel(trajs);
    let labels = if k == 1 {
        vec![0; trajs.len()]
    } else {
        let adjacency = adjacency_weighted(trajs, &kernel, config.spatial_weight)?;
        spectral_cluster(&adjacency, k, seed)?
    };
    FlowModelBank::from_labels(trajs, labels, kernel, config.spatial_weight, config.max_points)
}

impl FlowModelBank {
    /// Fits one flow per label value `0..=max(labels)` from the labeled
    /// training trajectories.
    pub fn from_labels(
        trajs: &[Trajectory],
        labels: Vec<usize>,
        kernel: SeKernel,
        spatial_weight: f64,
        max_points: usize,
    ) -> Result<FlowModelBank> {
        if labels.len() != trajs.len() || labels.is_empty() {
            return Err(invalid("need one cluster label per trajectory"));
        }
        let k = labels.iter().max().map_or(0, |m| m + 1);
        let models = (0..k)
            .into_par_iter()
            .map(|c| {
                let members: Vec<&Trajectory> = trajs
                    .iter()
                    .zip(&labels)
                    .filter(|(_, l)| **l == c)
                    .map(|(t, _)| t)
                    .collect();
                if members.is_empty() {
                    return Err(invalid(format!("cluster {c} has no trajectories")));
                }
                FlowModel::fit(&members, &kernel, c, max_points)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FlowModelBank {
            models,
            kernel,
            spatial_weight,
            labels,
        })
    }
}
