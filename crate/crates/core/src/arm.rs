//! Serial 7-joint revolute arm: forward kinematics of the monitored frames,
//! position Jacobian and damped-least-squares inverse kinematics.

use nalgebra::{Isometry3, Matrix3, Point3, Translation3, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub const N_JOINTS: usize = 7;

/// One revolute joint. The joint frame is reached from the previous frame by
/// `offset`, then rotated by the joint angle about `axis`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointSpec {
    pub offset: [f64; 3],
    pub axis: [f64; 3],
    /// `(min, max)` in radians; `None` for a continuous joint.
    pub limits: Option<(f64, f64)>,
}

/// Indices of the monitored frames. Frame `i < 7` is the origin of joint
/// `i`; frame 7 is the tool point.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyFrames {
    pub hand: usize,
    pub wrist: usize,
    pub elbow: usize,
    pub shoulder: usize,
}

impl KeyFrames {
    pub fn as_array(&self) -> [usize; 4] {
        [self.hand, self.wrist, self.elbow, self.shoulder]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmModel {
    pub base: [f64; 3],
    pub joints: Vec<JointSpec>,
    /// Tool point in the last joint frame.
    pub tool: [f64; 3],
    pub key_frames: KeyFrames,
}

/// Hand, wrist, elbow and shoulder positions, in that order.
pub type MonitoredFrames = [Vector3<f64>; 4];

impl Default for ArmModel {
    fn default() -> Self {
        ArmModel::tabletop()
    }
}

impl ArmModel {
    /// A tabletop arm with the shoulder 0.30 m above the base, a 0.35 m
    /// upper arm, a 0.30 m forearm and a tool point 0.07 m past the last
    /// joint with a 0.03 m lateral offset.
    ///
    /// At zero angles the arm points straight up:
    /// shoulder `(0, 0, 0.30)`, elbow `(0, 0, 0.65)`, wrist `(0, 0, 0.95)`,
    /// hand `(0.03, 0, 1.07)`.
    pub fn tabletop() -> Self {
        let z = [0.0, 0.0, 1.0];
        let y = [0.0, 1.0, 0.0];
        let joint = |offset: [f64; 3], axis, limit: f64| JointSpec {
            offset,
            axis,
            limits: Some((-limit, limit)),
        };
        ArmModel {
            base: [0.0, 0.0, 0.0],
            joints: vec![
                joint([0.0, 0.0, 0.30], z, 2.8),
                joint([0.0, 0.0, 0.0], y, 2.0),
                joint([0.0, 0.0, 0.175], z, 2.8),
                joint([0.0, 0.0, 0.175], y, 2.5),
                joint([0.0, 0.0, 0.15], z, 2.8),
                joint([0.0, 0.0, 0.15], y, 2.0),
                JointSpec {
                    offset: [0.0, 0.0, 0.05],
                    axis: z,
                    limits: None,
                },
            ],
            tool: [0.03, 0.0, 0.07],
            key_frames: KeyFrames {
                hand: 7,
                wrist: 5,
                elbow: 3,
                shoulder: 1,
            },
        }
    }

    /// A bent configuration with the hand in front of the arm, used to seed
    /// inverse kinematics.
    pub fn ready_pose(&self) -> Vec<f64> {
        vec![0.0, 0.6, 0.0, 1.4, 0.0, 0.9, 0.0]
    }

    pub fn validate(&self) -> Result<()> {
        if self.joints.len() != N_JOINTS {
            return Err(invalid(format!("arm needs {N_JOINTS} joints, got {}", self.joints.len())));
        }
        for (i, j) in self.joints.iter().enumerate() {
            let n = Vector3::from(j.axis).norm();
            if !(n.is_finite() && n > 0.0) {
                return Err(invalid(format!("joint {i} has a zero rotation axis")));
            }
            if let Some((lo, hi)) = j.limits {
                if lo.partial_cmp(&hi) != Some(std::cmp::Ordering::Less) {
                    return Err(invalid(format!("joint {i} limits must satisfy min < max")));
                }
            }
        }
        if self.key_frames.as_array().iter().any(|f| *f > N_JOINTS) {
            return Err(invalid("key frame index out of range"));
        }
        Ok(())
    }

    pub fn check_limits(&self, q: &[f64]) -> Result<()> {
        if q.len() != self.joints.len() {
            return Err(invalid(format!(
                "expected {} joint angles, got {}",
                self.joints.len(),
                q.len()
            )));
        }
        for (i, (j, v)) in self.joints.iter().zip(q).enumerate() {
            if !v.is_finite() {
                return Err(invalid(format!("joint {i} angle is not finite")));
            }
            if let Some((lo, hi)) = j.limits {
                if *v < lo || *v > hi {
                    return Err(invalid(format!(
                        "joint {i} angle {v:.4} outside [{lo:.4}, {hi:.4}]"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn clamp(&self, q: &mut [f64]) {
        for (j, v) in self.joints.iter().zip(q.iter_mut()) {
            if let Some((lo, hi)) = j.limits {
                *v = v.clamp(lo, hi);
            }
        }
    }

    /// Origins of every joint frame, the tool point, and each joint's
    /// world-frame axis.
    fn chain(&self, q: &[f64]) -> ([Vector3<f64>; N_JOINTS + 1], [Vector3<f64>; N_JOINTS]) {
        let mut pose = Isometry3::from_parts(
            Translation3::from(Vector3::from(self.base)),
            UnitQuaternion::identity(),
        );
        let mut origins = [Vector3::zeros(); N_JOINTS + 1];
        let mut axes = [Vector3::zeros(); N_JOINTS];
        for (i, (joint, angle)) in self.joints.iter().zip(q).enumerate() {
            pose *= Translation3::from(Vector3::from(joint.offset));
            let axis = Unit::new_normalize(Vector3::from(joint.axis));
            origins[i] = pose.translation.vector;
            axes[i] = pose.rotation * axis.into_inner();
            pose *= UnitQuaternion::from_axis_angle(&axis, *angle);
        }
        origins[N_JOINTS] = (pose * Point3::from(Vector3::from(self.tool))).coords;
        (origins, axes)
    }

    /// Monitored frame positions without the joint-limit check.
    pub fn frames_unchecked(&self, q: &[f64]) -> MonitoredFrames {
        let (origins, _) = self.chain(q);
        self.key_frames.as_array().map(|f| origins[f])
    }

    pub fn forward_kinematics(&self, q: &[f64]) -> Result<MonitoredFrames> {
        self.check_limits(q)?;
        Ok(self.frames_unchecked(q))
    }

    pub fn hand(&self, q: &[f64]) -> Vector3<f64> {
        let (origins, _) = self.chain(q);
        origins[self.key_frames.hand]
    }

    /// `3 x 7` Jacobian of the hand position; columns are
    /// `axis_i x (hand - origin_i)`.
    pub fn jacobian(&self, q: &[f64]) -> nalgebra::SMatrix<f64, 3, N_JOINTS> {
        let (origins, axes) = self.chain(q);
        let hand = origins[self.key_frames.hand];
        let mut jac = nalgebra::SMatrix::<f64, 3, N_JOINTS>::zeros();
        for i in 0..N_JOINTS {
            if i >= self.key_frames.hand {
                break;
            }
            jac.set_column(i, &axes[i].cross(&(hand - origins[i])));
        }
        jac
    }

    fn damped_step(&self, q: &[f64], err: &Vector3<f64>, damping: f64) -> Option<[f64; N_JOINTS]> {
        let jac = self.jacobian(q);
        let jjt: Matrix3<f64> = jac * jac.transpose() + Matrix3::identity() * damping * damping;
        let y = jjt.lu().solve(err)?;
        let dq = jac.transpose() * y;
        let mut out = [0.0; N_JOINTS];
        out.copy_from_slice(dq.as_slice());
        Some(out)
    }

    /// Damped-least-squares IK for the hand position, seeded at `seed` and
    /// kept within joint limits.
    pub fn solve_ik(&self, target: &Vector3<f64>, seed: &[f64], opts: &IkOptions) -> Result<Vec<f64>> {
        if seed.len() != N_JOINTS {
            return Err(invalid("IK seed must have 7 joint angles"));
        }
        let mut q = seed.to_vec();
        self.clamp(&mut q);
        let mut err = target - self.hand(&q);
        for _ in 0..opts.max_iter {
            if err.norm() <= opts.tolerance {
                return Ok(q);
            }
            let Some(mut dq) = self.damped_step(&q, &err, opts.damping) else {
                break;
            };
            let norm = dq.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > opts.max_step {
                dq.iter_mut().for_each(|v| *v *= opts.max_step / norm);
            }
            for (v, d) in q.iter_mut().zip(dq) {
                *v += d;
            }
            self.clamp(&mut q);
            err = target - self.hand(&q);
        }
        if err.norm() <= opts.tolerance {
            return Ok(q);
        }
        Err(Error::Unreachable {
            target: [target.x, target.y, target.z],
            residual_mm: err.norm() * 1e3,
        })
    }

    /// Joint velocity producing hand velocity `xdot` at `q`, through the
    /// damped pseudo-inverse.
    pub fn joint_velocity(&self, q: &[f64], xdot: &Vector3<f64>, damping: f64) -> Vec<f64> {
        self.damped_step(q, xdot, damping)
            .map(|d| d.to_vec())
            .unwrap_or_else(|| vec![0.0; N_JOINTS])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IkOptions {
    /// Position tolerance in meters.
    pub tolerance: f64,
    pub max_iter: usize,
    pub damping: f64,
    /// Largest joint-space step per iteration, radians.
    pub max_step: f64,
}

impl Default for IkOptions {
    fn default() -> Self {
        IkOptions {
            tolerance: 1e-3,
            max_iter: 200,
            damping: 0.05,
            max_step: 0.3,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn close(a: &Vector3<f64>, b: [f64; 3], tol: f64) -> bool {
        (a - Vector3::from(b)).norm() < tol
    }

    #[test]
    fn home_positions() {
        let arm = ArmModel::tabletop();
        let f = arm.forward_kinematics(&[0.0; 7]).unwrap();
        assert!(close(&f[0], [0.03, 0.0, 1.07], 1e-12));
        assert!(close(&f[1], [0.0, 0.0, 0.95], 1e-12));
        assert!(close(&f[2], [0.0, 0.0, 0.65], 1e-12));
        assert!(close(&f[3], [0.0, 0.0, 0.30], 1e-12));
    }

    #[test]
    fn last_joint_only_moves_the_tool() {
        let arm = ArmModel::tabletop();
        let q = arm.ready_pose();
        let mut r = q.clone();
        r[6] += 1.1;
        let a = arm.forward_kinematics(&q).unwrap();
        let b = arm.forward_kinematics(&r).unwrap();
        for i in 1..4 {
            assert!((a[i] - b[i]).norm() < 1e-12);
        }
        assert!((a[0] - b[0]).norm() > 1e-3);
    }

    #[test]
    fn continuous_joint_is_periodic() {
        let arm = ArmModel::tabletop();
        let q = vec![0.3, 0.5, -0.2, 1.1, 0.4, 0.7, 0.9];
        let mut r = q.clone();
        r[6] += 2.0 * PI;
        let a = arm.forward_kinematics(&q).unwrap();
        let b = arm.forward_kinematics(&r).unwrap();
        for i in 0..4 {
            assert!((a[i] - b[i]).norm() < 1e-9);
        }
    }

    #[test]
    fn out_of_limit_rejected() {
        let arm = ArmModel::tabletop();
        let mut q = arm.ready_pose();
        q[1] = 2.5;
        assert!(matches!(arm.forward_kinematics(&q), Err(Error::Validation(_))));
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let arm = ArmModel::tabletop();
        let q = vec![0.2, 0.6, -0.3, 1.2, 0.1, 0.8, 0.4];
        let jac = arm.jacobian(&q);
        let h = 1e-6;
        for i in 0..7 {
            let mut a = q.clone();
            let mut b = q.clone();
            a[i] += h;
            b[i] -= h;
            let fd = (arm.hand(&a) - arm.hand(&b)) / (2.0 * h);
            assert!((fd - jac.column(i)).norm() < 1e-7, "column {i}");
        }
    }

    #[test]
    fn ik_reaches_target() {
        let arm = ArmModel::tabletop();
        let target = Vector3::new(0.45, 0.15, 0.35);
        let q = arm.solve_ik(&target, &arm.ready_pose(), &IkOptions::default()).unwrap();
        assert!((arm.hand(&q) - target).norm() <= 1e-3);
        arm.check_limits(&q).unwrap();
    }

    #[test]
    fn ik_reports_unreachable() {
        let arm = ArmModel::tabletop();
        let err = arm
            .solve_ik(&Vector3::new(3.0, 0.0, 0.3), &arm.ready_pose(), &IkOptions::default())
            .unwrap_err();
        assert!(matches!(err, Error::Unreachable { .. }));
    }
}
