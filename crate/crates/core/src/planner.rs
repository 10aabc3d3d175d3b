//! Cooperative trajectory planning.
//!
//! A plan estimates where the robot should end up from the demonstrations
//! whose human motion resembles the observation, samples joint-space paths
//! from the current configuration to that goal, maps them through forward
//! kinematics and averages them with softmax weights of reward minus
//! obstacle cost.

use nalgebra::{DMatrix, DVector, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arm::{ArmModel, IkOptions, MonitoredFrames, N_JOINTS};
use crate::error::{invalid, Result};
use crate::flow::{flow_similarity_weighted, softmax, FlowModel, FlowModelBank, MotionDescriptor};
use crate::gp::{apply_runup, grp_distribution, grp_sample, linspace, Anchor, SeKernel};
use crate::reward::RewardModel;
use crate::trajectory::{InteractionDemo, Trajectory, DEFAULT_OUT_LEN};

/// Spherical obstacle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub center: [f64; 3],
    pub radius_m: f64,
}

impl Obstacle {
    pub fn new(center: [f64; 3], radius_m: f64) -> Result<Self> {
        let o = Obstacle { center, radius_m };
        o.validate()?;
        Ok(o)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius_m.is_finite() && self.radius_m >= 0.0) || self.center.iter().any(|c| !c.is_finite()) {
            return Err(invalid("obstacle needs a finite center and a radius >= 0"));
        }
        Ok(())
    }

    /// Distance from `p` to the obstacle surface, meters. Negative inside.
    pub fn surface_distance(&self, p: &Vector3<f64>) -> f64 {
        (p - Vector3::from(self.center)).norm() - self.radius_m
    }
}

pub fn parse_obstacles(text: &str) -> Result<Vec<Obstacle>> {
    let obstacles: Vec<Obstacle> = serde_json::from_str(text)?;
    for o in &obstacles {
        o.validate()?;
    }
    Ok(obstacles)
}

/// Log-barrier `C = -ln(gamma * (d - alpha) + epsilon) + beta` over the
/// clearance `d` in millimeters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BarrierParams {
    pub alpha_mm: f64,
    pub beta: f64,
    pub gamma: f64,
    pub epsilon: f64,
}

impl Default for BarrierParams {
    fn default() -> Self {
        BarrierParams {
            alpha_mm: 100.0,
            beta: -12.8,
            gamma: 5.73e-9,
            epsilon: 1e-6,
        }
    }
}

/// Smallest log argument. Deeper violations all cost `-ln(BARRIER_FLOOR) + beta`.
pub const BARRIER_FLOOR: f64 = 1e-9;

/// Barrier cost at clearance `d_min_mm`.
pub fn barrier_value(d_min_mm: f64, params: &BarrierParams) -> f64 {
    let arg = params.gamma * (d_min_mm - params.alpha_mm) + params.epsilon;
    let arg = if arg.is_nan() { BARRIER_FLOOR } else { arg.max(BARRIER_FLOOR) };
    -arg.ln() + params.beta
}

/// Minimum clearance in millimeters between any monitored frame along
/// `frames` and any obstacle surface; `None` without obstacles.
pub fn min_clearance_mm(frames: &[MonitoredFrames], obstacles: &[Obstacle]) -> Option<f64> {
    if obstacles.is_empty() || frames.is_empty() {
        return None;
    }
    let mut best = f64::INFINITY;
    for step in frames {
        for p in step {
            for o in obstacles {
                best = best.min(o.surface_distance(p));
            }
        }
    }
    Some(best * 1e3)
}

/// Barrier cost of a monitored-frame path; zero without obstacles.
pub fn barrier_cost(frames: &[MonitoredFrames], obstacles: &[Obstacle], params: &BarrierParams) -> Result<f64> {
    if frames.is_empty() {
        return Err(invalid("barrier cost needs a non-empty path"));
    }
    Ok(min_clearance_mm(frames, obstacles).map_or(0.0, |d| barrier_value(d, params)))
}

/// Estimated terminal robot state and the demonstration weights behind it.
#[derive(Clone, Debug, PartialEq)]
pub struct FinalPose {
    pub position: DVector<f64>,
    pub velocity: DVector<f64>,
    pub weights: Vec<f64>,
}

/// Weighted terminal robot state with weights `exp(-d(xi_obs; human_i)^2)`
/// normalized over the demonstrations.
pub fn estimate_final_pose(demos: &[InteractionDemo], xi_obs: &Trajectory, kernel: &SeKernel) -> Result<FinalPose> {
    let flows = demo_flows(demos, kernel)?;
    final_pose_from(demos, &flows, xi_obs, 1.0)
}

fn demo_flows(demos: &[InteractionDemo], kernel: &SeKernel) -> Result<Vec<FlowModel>> {
    demos
        .par_iter()
        .map(|d| FlowModel::from_trajectory(&d.human, kernel))
        .collect()
}

fn final_pose_from(
    demos: &[InteractionDemo],
    flows: &[FlowModel],
    xi_obs: &Trajectory,
    spatial_weight: f64,
) -> Result<FinalPose> {
    if demos.is_empty() {
        return Err(invalid("final pose estimation needs at least one demonstration"));
    }
    let logits = flows
        .par_iter()
        .map(|f| flow_similarity_weighted(xi_obs, f, spatial_weight).map(|d| -d * d))
        .collect::<Result<Vec<f64>>>()?;
    let weights = softmax(&logits);
    let d = demos[0].robot.dim();
    let mut position = DVector::zeros(d);
    let mut velocity = DVector::zeros(d);
    for (demo, w) in demos.iter().zip(&weights) {
        position += demo.robot.last_position() * *w;
        velocity += demo.robot.last_velocity() * *w;
    }
    Ok(FinalPose {
        position,
        velocity,
        weights,
    })
}

/// Planner settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlanConfig {
    pub n_samples: usize,
    /// Points per planned path.
    pub out_len: usize,
    pub runup_epsilon: f64,
    /// Joint-space path kernel over normalized time `[0, 1]`.
    pub joint_gain: f64,
    pub joint_lengthscale: f64,
    pub joint_noise: f64,
    pub ik: IkOptions,
    /// Damping of the pseudo-inverse that maps the terminal hand velocity
    /// to joint velocity.
    pub velocity_damping: f64,
    pub barrier: BarrierParams,
}

impl Default for PlanConfig {
    fn default() -> Self {
        PlanConfig {
            n_samples: 200,
            out_len: DEFAULT_OUT_LEN,
            runup_epsilon: 0.01,
            joint_gain: 0.02,
            joint_lengthscale: 0.25,
            joint_noise: 1e-6,
            ik: IkOptions::default(),
            velocity_damping: 0.01,
            barrier: BarrierParams::default(),
        }
    }
}

impl PlanConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(invalid("n_samples must be at least 1"));
        }
        if self.out_len < 2 {
            return Err(invalid("out_len must be at least 2"));
        }
        self.joint_kernel()?;
        Ok(())
    }

    pub fn joint_kernel(&self) -> Result<SeKernel> {
        SeKernel::new(self.joint_gain, self.joint_lengthscale, self.joint_noise)
    }
}

/// One planned trajectory with the per-sample quantities behind it.
#[derive(Clone, Debug, PartialEq)]
pub struct PlanResult {
    pub descriptor: MotionDescriptor,
    pub final_pose: FinalPose,
    pub q_goal: Vec<f64>,
    /// `T x 3` weighted end-effector path.
    pub path: DMatrix<f64>,
    /// `T x 7` weighted joint path.
    pub joints: DMatrix<f64>,
    pub weights: Vec<f64>,
    pub rewards: Vec<f64>,
    /// Per-sample barrier costs; `None` without obstacles.
    pub costs: Option<Vec<f64>>,
    /// Clearance of the weighted joint path's monitored frames, millimeters.
    pub clearance_mm: Option<f64>,
}

/// JSON form of a [`PlanResult`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanExport {
    pub descriptor: Vec<f64>,
    pub final_position: Vec<f64>,
    pub final_velocity: Vec<f64>,
    pub q_goal: Vec<f64>,
    pub path: Vec<Vec<f64>>,
    pub joints: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub rewards: Vec<f64>,
    pub costs: Option<Vec<f64>>,
    pub clearance_mm: Option<f64>,
}

pub fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl PlanResult {
    pub fn export(&self) -> PlanExport {
        PlanExport {
            descriptor: self.descriptor.as_slice().to_vec(),
            final_position: self.final_pose.position.iter().copied().collect(),
            final_velocity: self.final_pose.velocity.iter().copied().collect(),
            q_goal: self.q_goal.clone(),
            path: matrix_rows(&self.path),
            joints: matrix_rows(&self.joints),
            weights: self.weights.clone(),
            rewards: self.rewards.clone(),
            costs: self.costs.clone(),
            clearance_mm: self.clearance_mm,
        }
    }
}

/// Sampled candidate before weighting.
#[derive(Clone, Debug)]
pub struct Candidate {
    pub joints: DMatrix<f64>,
    pub path: DMatrix<f64>,
    pub frames: Vec<MonitoredFrames>,
}

/// Softmax weights of `logits` and the matching weighted sums of the
/// candidates' end-effector and joint paths, accumulated in sample order.
pub fn combine(candidates: &[Candidate], logits: &[f64]) -> Result<(DMatrix<f64>, DMatrix<f64>, Vec<f64>)> {
    if candidates.is_empty() || candidates.len() != logits.len() {
        return Err(invalid("combine needs one logit per candidate"));
    }
    let weights = softmax(logits);
    let mut path = DMatrix::zeros(candidates[0].path.nrows(), candidates[0].path.ncols());
    let mut joints = DMatrix::zeros(candidates[0].joints.nrows(), candidates[0].joints.ncols());
    for (c, w) in candidates.iter().zip(&weights) {
        path += &c.path * *w;
        joints += &c.joints * *w;
    }
    Ok((path, joints, weights))
}

/// Trained models plus per-demonstration flows cached for final-pose
/// estimation.
#[derive(Clone, Debug)]
pub struct Planner {
    pub arm: ArmModel,
    pub bank: FlowModelBank,
    pub reward: RewardModel,
    pub demos: Vec<InteractionDemo>,
    pub config: PlanConfig,
    flows: Vec<FlowModel>,
}

impl Planner {
    pub fn new(
        arm: ArmModel,
        bank: FlowModelBank,
        reward: RewardModel,
        demos: Vec<InteractionDemo>,
        config: PlanConfig,
    ) -> Result<Self> {
        arm.validate()?;
        config.validate()?;
        if demos.is_empty() {
            return Err(invalid("planner needs at least one demonstration"));
        }
        if reward.descriptor_dim != bank.k() {
            return Err(invalid(format!(
                "reward expects {} descriptor components but the bank has {} flows",
                reward.descriptor_dim,
                bank.k()
            )));
        }
        if reward.position_dim() != 3 || demos.iter().any(|d| d.robot.dim() != 3) {
            return Err(invalid("planner needs 3-D robot positions"));
        }
        let flows = demo_flows(&demos, &bank.kernel)?;
        Ok(Planner {
            arm,
            bank,
            reward,
            demos,
            config,
            flows,
        })
    }

    pub fn estimate_final_pose(&self, xi_obs: &Trajectory) -> Result<FinalPose> {
        final_pose_from(&self.demos, &self.flows, xi_obs, self.bank.spatial_weight)
    }

    /// Joint paths from `q_now` to `q_goal` sampled from the run-up GRP,
    /// with the first row pinned to `q_now` and every row clamped to the
    /// joint limits.
    pub fn sample_joint_paths(
        &self,
        q_now: &[f64],
        q_goal: &[f64],
        qdot_goal: &[f64],
        n: usize,
        seed: u64,
    ) -> Result<Vec<DMatrix<f64>>> {
        let anchors = apply_runup(
            vec![Anchor::new(0.0, q_now.to_vec())],
            &DVector::from_column_slice(q_goal),
            &DVector::from_column_slice(qdot_goal),
            self.config.runup_epsilon,
        )?;
        let times = linspace(0.0, 1.0, self.config.out_len);
        let dist = grp_distribution(&anchors, &times, &self.config.joint_kernel()?)?;
        let mut samples = grp_sample(&dist, n, seed)?;
        for s in samples.iter_mut() {
            for j in 0..N_JOINTS {
                s[(0, j)] = q_now[j];
            }
            for mut row in s.row_iter_mut() {
                let mut q: Vec<f64> = row.iter().copied().collect();
                self.arm.clamp(&mut q);
                row.copy_from_slice(&q);
            }
        }
        Ok(samples)
    }

    pub fn candidate(&self, joints: DMatrix<f64>) -> Candidate {
        let frames: Vec<MonitoredFrames> = joints
            .row_iter()
            .map(|r| {
                let q: Vec<f64> = r.iter().copied().collect();
                self.arm.frames_unchecked(&q)
            })
            .collect();
        let path = DMatrix::from_fn(frames.len(), 3, |t, j| frames[t][0][j]);
        Candidate { joints, path, frames }
    }

    /// Plans from the observed human prefix `xi_obs` and current joints
    /// `q_now`. An empty `obstacles` slice disables the barrier.
    pub fn plan(&self, xi_obs: &Trajectory, q_now: &[f64], seed: u64, obstacles: &[Obstacle]) -> Result<PlanResult> {
        self.arm.check_limits(q_now)?;
        for o in obstacles {
            o.validate()?;
        }
        let descriptor = self.bank.describe(xi_obs)?;
        let final_pose = self.estimate_final_pose(xi_obs)?;
        let target = Vector3::new(final_pose.position[0], final_pose.position[1], final_pose.position[2]);
        let q_goal = self.arm.solve_ik(&target, q_now, &self.config.ik)?;
        let xdot = Vector3::new(final_pose.velocity[0], final_pose.velocity[1], final_pose.velocity[2]);
        let qdot_goal = self.arm.joint_velocity(&q_goal, &xdot, self.config.velocity_damping);

        let samples = self.sample_joint_paths(q_now, &q_goal, &qdot_goal, self.config.n_samples, seed)?;
        let conditioned = self.reward.conditioned(&descriptor)?;
        let scored = samples
            .into_par_iter()
            .map(|joints| {
                let c = self.candidate(joints);
                let r = conditioned.path_reward(&c.path)?;
                let cost = barrier_cost(&c.frames, obstacles, &self.config.barrier)?;
                Ok((c, r, cost))
            })
            .collect::<Result<Vec<_>>>()?;
        let rewards: Vec<f64> = scored.iter().map(|s| s.1).collect();
        let logits: Vec<f64> = if obstacles.is_empty() {
            rewards.clone()
        } else {
            scored.iter().map(|s| s.1 - s.2).collect()
        };
        let costs = (!obstacles.is_empty()).then(|| scored.iter().map(|s| s.2).collect());
        let candidates: Vec<Candidate> = scored.into_iter().map(|s| s.0).collect();
        let (path, joints, weights) = combine(&candidates, &logits)?;

        let clearance_mm = if obstacles.is_empty() {
            None
        } else {
            let frames: Vec<MonitoredFrames> = joints
                .row_iter()
                .map(|r| self.arm.frames_unchecked(&r.iter().copied().collect::<Vec<_>>()))
                .collect();
            min_clearance_mm(&frames, obstacles)
        };
        Ok(PlanResult {
            descriptor,
            final_pose,
            q_goal,
            path,
            joints,
            weights,
            rewards,
            costs,
            clearance_mm,
        })
    }
}

/// Monitored frames along every row of a joint path.
pub fn joint_path_frames(arm: &ArmModel, joints: &DMatrix<f64>) -> Vec<MonitoredFrames> {
    joints
        .row_iter()
        .map(|r| arm.frames_unchecked(&r.iter().copied().collect::<Vec<_>>()))
        .collect()
}
