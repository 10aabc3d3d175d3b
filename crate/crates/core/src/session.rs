//! Live cooperation sessions.
//!
//! A session buffers streamed hand points. Planning runs on an immutable
//! [`PlanJob`] snapshot so that ingestion never waits for a plan; the
//! result is published back with [`Session::publish`], which ignores
//! results older than the latest published one.
//!
//! The descriptor always reflects the whole buffer: the raw points are
//! preprocessed exactly as a batch trajectory would be.

use std::sync::Arc;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::planner::{matrix_rows, Obstacle, Planner};
use crate::trajectory::{preprocess_with, PreprocessConfig, RawPath};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    /// Data-time interval between re-plans, seconds.
    pub replan_period_s: f64,
    pub obstacles: Vec<Obstacle>,
    /// Current robot joints; `None` uses [`default_start`].
    pub q_now: Option<Vec<f64>>,
    pub seed: u64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            replan_period_s: 2.0,
            obstacles: Vec::new(),
            q_now: None,
            seed: 0,
        }
    }
}

/// Joints placing the hand at the mean first robot position of the
/// planner's demonstrations, or the ready pose if that is unreachable.
pub fn default_start(planner: &Planner) -> Vec<f64> {
    let n = planner.demos.len() as f64;
    let mut p = Vector3::zeros();
    for d in &planner.demos {
        let x = d.robot.position(0);
        p += Vector3::new(x[0], x[1], x[2]) / n;
    }
    let ready = planner.arm.ready_pose();
    planner
        .arm
        .solve_ik(&p, &ready, &planner.config.ik)
        .unwrap_or(ready)
}

/// Published plan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanSnapshot {
    pub seq: u64,
    /// Number of buffered points the plan was computed from.
    pub n_points: usize,
    /// Data time of the last point the plan saw.
    pub t: f64,
    pub p: Vec<f64>,
    pub path: Vec<Vec<f64>>,
    pub joints: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub clearance_mm: Option<f64>,
}

impl PlanSnapshot {
    /// Streaming message form.
    pub fn message(&self) -> serde_json::Value {
        serde_json::json!({
            "type": "state",
            "p": self.p,
            "path": self.path,
            "joints": self.joints,
            "clearance_mm": self.clearance_mm,
            "seq": self.seq,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    WarmingUp,
    Ready,
}

/// What a client sees: the descriptor of the full buffer and the latest
/// published plan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub status: Status,
    pub n_points: usize,
    /// `None` until two points have arrived.
    pub p: Option<Vec<f64>>,
    pub plan: Option<Arc<PlanSnapshot>>,
}

/// Everything a plan needs, detached from the session.
#[derive(Clone, Debug)]
pub struct PlanJob {
    pub planner: Arc<Planner>,
    pub raw: RawPath,
    pub preprocess: PreprocessConfig,
    pub q_now: Vec<f64>,
    pub obstacles: Vec<Obstacle>,
    pub seed: u64,
    pub seq: u64,
}

impl PlanJob {
    pub fn run(&self) -> Result<PlanSnapshot> {
        let obs = preprocess_with(&self.raw, &self.preprocess)?.trajectory;
        let plan = self.planner.plan(&obs, &self.q_now, self.seed, &self.obstacles)?;
        Ok(PlanSnapshot {
            seq: self.seq,
            n_points: self.raw.len(),
            t: *self.raw.t.last().expect("jobs need points"),
            p: plan.descriptor.p,
            path: matrix_rows(&plan.path),
            joints: matrix_rows(&plan.joints),
            weights: plan.weights,
            clearance_mm: plan.clearance_mm,
        })
    }
}

/// Reply to [`Session::push_point`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PushAck {
    pub n_points: usize,
    /// A re-plan is due: the first plan once two points exist, then every
    /// `replan_period_s` of data time.
    pub replan_due: bool,
}

#[derive(Debug)]
pub struct Session {
    planner: Arc<Planner>,
    preprocess: PreprocessConfig,
    config: SessionConfig,
    q_now: Vec<f64>,
    raw: RawPath,
    /// Data time of the last scheduled plan.
    scheduled_t: Option<f64>,
    next_seq: u64,
    published: Option<Arc<PlanSnapshot>>,
    descriptor_cache: Option<(usize, Vec<f64>)>,
}

impl Session {
    pub fn open(planner: Arc<Planner>, preprocess: PreprocessConfig, config: SessionConfig) -> Result<Self> {
        if !(config.replan_period_s.is_finite() && config.replan_period_s > 0.0) {
            return Err(invalid("replan period must be positive"));
        }
        for o in &config.obstacles {
            o.validate()?;
        }
        let q_now = match &config.q_now {
            Some(q) => {
                planner.arm.check_limits(q)?;
                q.clone()
            }
            None => default_start(&planner),
        };
        Ok(Session {
            planner,
            preprocess,
            config,
            q_now,
            raw: RawPath::new(Vec::new(), Vec::new()),
            scheduled_t: None,
            next_seq: 1,
            published: None,
            descriptor_cache: None,
        })
    }

    pub fn k(&self) -> usize {
        self.planner.bank.k()
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn raw(&self) -> &RawPath {
        &self.raw
    }

    pub fn set_obstacles(&mut self, obstacles: Vec<Obstacle>) -> Result<()> {
        for o in &obstacles {
            o.validate()?;
        }
        self.config.obstacles = obstacles;
        Ok(())
    }

    /// Appends a point. Rejects non-increasing times, wrong dimensions and
    /// non-finite values without changing the buffer.
    pub fn push_point(&mut self, t: f64, x: &[f64]) -> Result<PushAck> {
        self.push_points(&[(t, x.to_vec())])
    }

    /// Appends a batch atomically: either every point is accepted or the
    /// buffer is left unchanged.
    pub fn push_points(&mut self, points: &[(f64, Vec<f64>)]) -> Result<PushAck> {
        let dim = self.planner.bank.dim();
        let mut last = self.raw.t.last().copied();
        for (i, (t, x)) in points.iter().enumerate() {
            if x.len() != dim {
                return Err(invalid(format!("point {i}: expected a {dim}-D point, got {}", x.len())));
            }
            if !t.is_finite() || x.iter().any(|v| !v.is_finite()) {
                return Err(invalid(format!("point {i}: must be finite")));
            }
            if let Some(l) = last {
                if *t <= l {
                    return Err(invalid(format!("point {i}: time {t} does not follow {l}")));
                }
            }
            last = Some(*t);
        }
        for (t, x) in points {
            self.raw.t.push(*t);
            self.raw.x.push(x.clone());
        }
        Ok(PushAck {
            n_points: self.raw.len(),
            replan_due: self.replan_due(),
        })
    }

    pub fn replan_due(&self) -> bool {
        let Some(t) = self.raw.t.last() else {
            return false;
        };
        if self.raw.len() < 2 {
            return false;
        }
        match self.scheduled_t {
            None => true,
            Some(s) => t - s >= self.config.replan_period_s,
        }
    }

    /// Snapshot of the buffer for an asynchronous plan, marking the plan as
    /// scheduled. `None` with fewer than two points.
    pub fn snapshot(&mut self) -> Option<PlanJob> {
        if self.raw.len() < 2 {
            return None;
        }
        self.scheduled_t = self.raw.t.last().copied();
        let seq = self.next_seq;
        self.next_seq += 1;
        Some(PlanJob {
            planner: Arc::clone(&self.planner),
            raw: self.raw.clone(),
            preprocess: self.preprocess.clone(),
            q_now: self.q_now.clone(),
            obstacles: self.config.obstacles.clone(),
            seed: self.config.seed.wrapping_add(seq),
            seq,
        })
    }

    /// Installs a finished plan unless a newer one is already published.
    /// Returns whether it was installed.
    pub fn publish(&mut self, plan: PlanSnapshot) -> bool {
        if self.published.as_ref().is_some_and(|p| p.seq >= plan.seq) {
            return false;
        }
        self.published = Some(Arc::new(plan));
        true
    }

    /// Pushes a point and, if a re-plan is due, plans synchronously.
    pub fn push_and_plan(&mut self, t: f64, x: &[f64]) -> Result<PushAck> {
        let ack = self.push_point(t, x)?;
        if ack.replan_due {
            if let Some(job) = self.snapshot() {
                let plan = job.run()?;
                self.publish(plan);
            }
        }
        Ok(ack)
    }

    pub fn latest_plan(&self) -> Option<Arc<PlanSnapshot>> {
        self.published.clone()
    }

    /// Descriptor of the whole buffer, computed as for a batch trajectory.
    pub fn descriptor(&mut self) -> Result<Option<Vec<f64>>> {
        if self.raw.len() < 2 {
            return Ok(None);
        }
        if let Some((n, p)) = &self.descriptor_cache {
            if *n == self.raw.len() {
                return Ok(Some(p.clone()));
            }
        }
        let traj = preprocess_with(&self.raw, &self.preprocess)?.trajectory;
        let p = self.planner.bank.describe(&traj)?.p;
        self.descriptor_cache = Some((self.raw.len(), p.clone()));
        Ok(Some(p))
    }

    pub fn state(&mut self) -> Result<SessionState> {
        let p = self.descriptor()?;
        let plan = self.latest_plan();
        Ok(SessionState {
            status: if plan.is_some() { Status::Ready } else { Status::WarmingUp },
            n_points: self.raw.len(),
            p,
            plan,
        })
    }
}
