//! Planar serial arm mounted on a unicycle base.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::world::{normalize_angle, Point2, Pose2};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArmParams {
    pub link_lengths: Vec<f64>,
    /// First joint position in the base frame.
    pub mount_offset: Point2,
    /// Symmetric joint range ±limit, rad.
    pub joint_limit: f64,
    /// rad/s
    pub joint_vel_limit: f64,
    /// Stowed joint angles.
    pub home: Vec<f64>,
}

impl Default for ArmParams {
    fn default() -> Self {
        ArmParams {
            link_lengths: vec![0.4, 0.3, 0.155],
            mount_offset: Point2::new(0.2, 0.0),
            joint_limit: 2.8,
            joint_vel_limit: 2.0,
            home: vec![0.0, 2.3, 2.0],
        }
    }
}

impl ArmParams {
    pub fn n_joints(&self) -> usize {
        self.link_lengths.len()
    }

    pub fn reach(&self) -> f64 {
        self.link_lengths.iter().sum()
    }

    pub fn is_valid(&self) -> bool {
        !self.link_lengths.is_empty()
            && self.link_lengths.iter().all(|&l| l > 0.0)
            && self.joint_limit > 0.0
            && self.joint_vel_limit > 0.0
            && self.home.len() == self.link_lengths.len()
            && self.home.iter().all(|q| q.abs() <= self.joint_limit)
    }

    pub fn home_joints(&self) -> Vec<f64> {
        self.home.clone()
    }

    /// Stowed end-effector position in the base frame.
    pub fn home_point(&self) -> Point2 {
        forward_kinematics(&Pose2::default(), self, &self.home).position
    }

    /// In-range joint angles placing the end effector at the base-frame
    /// point `target`, nearest to `reference` among the two elbow branches
    /// of `wrist_samples` evenly spaced last-link headings. Three-link arms
    /// only; `None` when no sampled posture fits inside the joint range.
    pub fn reach_posture(&self, target: Point2, reference: &[f64], wrist_samples: usize) -> Option<Vec<f64>> {
        let [l1, l2, l3] = self.link_lengths[..] else { return None };
        let rel = target - self.mount_offset;
        let mut best: Option<(f64, [f64; 3])> = None;
        for k in 0..wrist_samples.max(1) {
            let phi = std::f64::consts::TAU * k as f64 / wrist_samples.max(1) as f64;
            let w = rel - Point2::new(phi.cos(), phi.sin()) * l3;
            let c = (w.dot(w) - l1 * l1 - l2 * l2) / (2.0 * l1 * l2);
            if c.abs() > 1.0 {
                continue;
            }
            for elbow in [c.acos(), -c.acos()] {
                let q0 = normalize_angle(w.angle() - (l2 * elbow.sin()).atan2(l1 + l2 * elbow.cos()));
                let q = [q0, elbow, normalize_angle(phi - q0 - elbow)];
                if q.iter().any(|a| a.abs() > self.joint_limit) {
                    continue;
                }
                let d: f64 = q.iter().zip(reference).map(|(a, b)| (a - b) * (a - b)).sum();
                if best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, q));
                }
            }
        }
        best.map(|(_, q)| q.to_vec())
    }

    /// Joint angles whose base-frame end-effector position approaches
    /// `target`, clamped to the joint range.
    pub fn solve_ik(&self, target: Point2, seed: &[f64]) -> Vec<f64> {
        let mut q = seed.to_vec();
        let base = Pose2::default();
        for _ in 0..200 {
            let e = target - forward_kinematics(&base, self, &q).position;
            if e.norm() < 1e-12 {
                break;
            }
            let j = arm_jacobian(&base, self, &q);
            let lambda = 1e-4;
            let jjt = &j * j.transpose() + DMatrix::identity(2, 2) * lambda;
            let Some(y) = jjt.lu().solve(&DVector::from_vec(vec![e.x, e.y])) else { break };
            let dq = j.transpose() * y;
            for (qi, d) in q.iter_mut().zip(dq.iter()) {
                *qi = (*qi + d).clamp(-self.joint_limit, self.joint_limit);
            }
        }
        q
    }
}

/// End-effector pose in the world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EePose {
    pub position: Point2,
    pub orientation: f64,
}

/// World positions of every joint followed by the end effector.
pub fn joint_positions(base: &Pose2, arm: &ArmParams, q: &[f64]) -> Vec<Point2> {
    let mut p = base.transform_point(arm.mount_offset);
    let mut phi = base.theta;
    let mut out = Vec::with_capacity(q.len() + 1);
    out.push(p);
    for (l, qi) in arm.link_lengths.iter().zip(q) {
        phi += qi;
        p = p + Point2::from_polar(*l, phi);
        out.push(p);
    }
    out
}

pub fn forward_kinematics(base: &Pose2, arm: &ArmParams, q: &[f64]) -> EePose {
    let position = *joint_positions(base, arm, q).last().expect("at least the mount point");
    EePose { position, orientation: normalize_angle(base.theta + q.iter().sum::<f64>()) }
}

/// Jacobian of the end-effector position with respect to
/// `[v, ω, q̇₁ … q̇ₙ]`. The base moves only along its heading.
pub fn holistic_jacobian(base: &Pose2, arm: &ArmParams, q: &[f64]) -> DMatrix<f64> {
    let joints = joint_positions(base, arm, q);
    let ee = *joints.last().unwrap();
    let n = q.len();
    let mut j = DMatrix::zeros(2, 2 + n);
    let h = base.heading_vector();
    j[(0, 0)] = h.x;
    j[(1, 0)] = h.y;
    let lever = ee - base.position();
    j[(0, 1)] = -lever.y;
    j[(1, 1)] = lever.x;
    for k in 0..n {
        let r = ee - joints[k];
        j[(0, 2 + k)] = -r.y;
        j[(1, 2 + k)] = r.x;
    }
    j
}

/// Arm-only columns of [`holistic_jacobian`].
pub fn arm_jacobian(base: &Pose2, arm: &ArmParams, q: &[f64]) -> DMatrix<f64> {
    holistic_jacobian(base, arm, q).columns(2, q.len()).into_owned()
}
