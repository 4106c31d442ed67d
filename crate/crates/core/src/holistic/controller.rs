//! Redundancy resolution: one QP per tick distributes a desired
//! end-effector velocity over base and arm, with an optional velocity
//! damper keeping the gripper away from the nearest obstacle.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::arm::{forward_kinematics, holistic_jacobian, ArmParams};
use super::qp::{solve_qp, QpError, QpProblem};
use crate::local_planner::BaseState;
use crate::path_metrics::VelocityLimits;
use crate::world::Point2;

/// Proportional end-effector servo, norm-clamped to `cap`.
pub fn desired_ee_velocity(ee: Point2, target: Point2, gain: f64, cap: f64) -> Point2 {
    let v = (target - ee) * gain;
    let n = v.norm();
    if n > cap {
        v * (cap / n)
    } else {
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DamperParams {
    /// Gain ξ, m/s.
    pub xi: f64,
    /// Stop distance d_s, m.
    pub d_s: f64,
    /// Influence distance d_i, m.
    pub d_i: f64,
}

impl Default for DamperParams {
    fn default() -> Self {
        DamperParams { xi: 0.6, d_s: 0.25, d_i: 0.6 }
    }
}

impl DamperParams {
    /// Largest allowed approach speed toward the obstacle at distance `d`.
    pub fn bound(&self, d: f64) -> f64 {
        self.xi * (d - self.d_s) / (self.d_i - self.d_s)
    }
}

/// `a · x_motion ≤ b` over the motion variables `[v, ω, q̇…]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DamperRow {
    pub a: Vec<f64>,
    pub b: f64,
}

/// Damper constraint for an obstacle at distance `d_ro` in direction
/// `n_hat` (unit, pointing from the end effector toward the obstacle).
/// `None` beyond the influence distance.
pub fn obstacle_damper_row(d_ro: f64, n_hat: Point2, j_p: &DMatrix<f64>, params: &DamperParams) -> Option<DamperRow> {
    if d_ro > params.d_i || !d_ro.is_finite() {
        return None;
    }
    let a = (0..j_p.ncols()).map(|c| n_hat.x * j_p[(0, c)] + n_hat.y * j_p[(1, c)]).collect();
    Some(DamperRow { a, b: params.bound(d_ro) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QpWeights {
    /// Penalty on arm joint rates.
    pub motion: f64,
    /// Attraction of (v, ω) to the planner's base command.
    pub base: f64,
    pub slack: f64,
}

impl Default for QpWeights {
    fn default() -> Self {
        QpWeights { motion: 1.0, base: 10.0, slack: 1e4 }
    }
}

/// Box bounds on the motion variables `[v, ω, q̇…]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl MotionBounds {
    /// Velocity, acceleration (one tick) and joint-range limits. A locked
    /// base may only decelerate toward rest.
    pub fn for_tick(base: &BaseState, q: &[f64], arm: &ArmParams, limits: &VelocityLimits, dt: f64, base_locked: bool) -> Self {
        let window = |cur: f64, max: f64, acc: f64| {
            let (lo, hi) = ((cur - acc * dt).max(-max), (cur + acc * dt).min(max));
            if base_locked {
                let rest = 0.0f64.clamp(lo, hi);
                (rest, rest)
            } else {
                (lo, hi)
            }
        };
        let (v_lo, v_hi) = window(base.v, limits.v_max, limits.a_lin_max);
        let (w_lo, w_hi) = window(base.omega, limits.omega_max, limits.a_ang_max);
        let mut lower = vec![v_lo, w_lo];
        let mut upper = vec![v_hi, w_hi];
        for &qi in q {
            let lo = ((-arm.joint_limit - qi) / dt).max(-arm.joint_vel_limit).min(0.0);
            let hi = ((arm.joint_limit - qi) / dt).min(arm.joint_vel_limit).max(0.0);
            lower.push(lo);
            upper.push(hi);
        }
        MotionBounds { lower, upper }
    }

    /// Narrows the base bounds to within `trust` of the commanded base
    /// velocities. When that leaves nothing, the bound nearest the command
    /// is kept.
    pub fn limit_base(&mut self, cmd: (f64, f64), trust: (f64, f64)) {
        for (i, (c, r)) in [(cmd.0, trust.0), (cmd.1, trust.1)].into_iter().enumerate() {
            let lo = self.lower[i].max(c - r);
            let hi = self.upper[i].min(c + r);
            if lo <= hi {
                self.lower[i] = lo;
                self.upper[i] = hi;
            } else {
                let v = c.clamp(self.lower[i], self.upper[i]);
                self.lower[i] = v;
                self.upper[i] = v;
            }
        }
    }
}

/// Assembles the QP over `[v, ω, q̇₁…q̇ₙ, δx, δy]`:
///
/// ```text
/// min  w_motion‖q̇ − q̇_pref‖² + w_base‖(v, ω) − base_cmd‖² + w_slack‖δ‖²
/// s.t. J·x_motion + δ = v_des,  damper row,  motion bounds
/// ```
pub fn build_qp(
    j: &DMatrix<f64>,
    v_des: Point2,
    base_cmd: (f64, f64),
    joint_pref: Option<&[f64]>,
    damper: Option<&DamperRow>,
    bounds: &MotionBounds,
    weights: &QpWeights,
) -> Result<QpProblem, QpError> {
    let m = j.ncols();
    if j.nrows() != 2 || m < 2 || bounds.lower.len() != m || bounds.upper.len() != m {
        return Err(QpError::Dimension("Jacobian must be 2×(2+n) with matching bounds".into()));
    }
    if joint_pref.is_some_and(|r| r.len() != m - 2) {
        return Err(QpError::Dimension("joint preference length".into()));
    }
    if let Some(d) = damper {
        if d.a.len() != m {
            return Err(QpError::Dimension("damper row length".into()));
        }
    }
    let n = m + 2;
    let mut h = DMatrix::zeros(n, n);
    let mut f = DVector::zeros(n);
    for i in 0..2 {
        h[(i, i)] = 2.0 * weights.base;
    }
    f[0] = -2.0 * weights.base * base_cmd.0;
    f[1] = -2.0 * weights.base * base_cmd.1;
    for i in 2..m {
        h[(i, i)] = 2.0 * weights.motion;
        if let Some(r) = joint_pref {
            f[i] = -2.0 * weights.motion * r[i - 2];
        }
    }
    for i in m..n {
        h[(i, i)] = 2.0 * weights.slack;
    }

    let mut a_eq = DMatrix::zeros(2, n);
    a_eq.view_mut((0, 0), (2, m)).copy_from(j);
    a_eq[(0, m)] = 1.0;
    a_eq[(1, m + 1)] = 1.0;
    let b_eq = DVector::from_vec(vec![v_des.x, v_des.y]);

    let mut lb = DVector::from_element(n, f64::NEG_INFINITY);
    let mut ub = DVector::from_element(n, f64::INFINITY);
    for i in 0..m {
        lb[i] = bounds.lower[i];
        ub[i] = bounds.upper[i];
    }

    let mut p = QpProblem::new(h, f).with_equalities(a_eq, b_eq).with_bounds(lb, ub);
    if let Some(d) = damper {
        let mut row = d.a.clone();
        row.extend([0.0, 0.0]);
        p.push_inequality(&row, d.b);
    }
    Ok(p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerConfig {
    pub weights: QpWeights,
    pub damper: DamperParams,
    /// End-effector servo gain, 1/s.
    pub ee_gain: f64,
    /// End-effector servo speed cap, m/s.
    pub ee_speed_cap: f64,
    /// Largest deviation from the base command the QP may choose, as
    /// (m/s, rad/s). `None` leaves only the velocity and acceleration
    /// bounds.
    pub base_trust: Option<[f64; 2]>,
    /// Pull of the joint rates toward the stowed posture, 1/s. Zero drops
    /// the preference.
    pub posture_gain: f64,
    /// Gain of joint-space moves toward a goal posture, 1/s.
    pub joint_gain: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig { weights: QpWeights::default(), damper: DamperParams::default(), ee_gain: 4.0, ee_speed_cap: 1.0, base_trust: Some([0.05, 0.1]), posture_gain: 1.0, joint_gain: 2.0 }
    }
}

/// Everything one controller tick needs.
#[derive(Debug, Clone)]
pub struct ControlInput<'a> {
    pub base: BaseState,
    pub joints: &'a [f64],
    pub arm: &'a ArmParams,
    pub limits: &'a VelocityLimits,
    pub dt: f64,
    /// Where the end effector should go. Ignored when `joint_goal` is set.
    pub ee_target: Point2,
    /// Velocity of the target itself (added to the servo term).
    pub ee_feedforward: Point2,
    /// Base command from the local planner.
    pub base_cmd: (f64, f64),
    pub base_locked: bool,
    /// Distance from the end effector to the nearest obstacle and the unit
    /// direction pointing away from it.
    pub obstacle_distance: f64,
    pub obstacle_away: Point2,
    /// Move the arm toward this posture in joint space instead of servoing
    /// the end effector.
    pub joint_goal: Option<&'a [f64]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlOutput {
    pub v: f64,
    pub omega: f64,
    pub joint_rates: Vec<f64>,
    pub slack: Point2,
    pub damper_active: bool,
    /// Largest constraint violation of the returned solution.
    pub max_violation: f64,
    pub infeasible: bool,
}

pub fn control_step(input: &ControlInput<'_>, cfg: &ControllerConfig) -> ControlOutput {
    let pose = input.base.pose;
    let q = input.joints;
    let ee = forward_kinematics(&pose, input.arm, q).position;
    let j = holistic_jacobian(&pose, input.arm, q);
    let damper = obstacle_damper_row(input.obstacle_distance, -input.obstacle_away, &j, &cfg.damper);
    let mut bounds = MotionBounds::for_tick(&input.base, q, input.arm, input.limits, input.dt, input.base_locked);
    if let Some([tv, tw]) = cfg.base_trust {
        bounds.limit_base(input.base_cmd, (tv, tw));
    }
    let (v_des, pref) = if let Some(goal) = input.joint_goal {
        // The end-effector velocity that the commanded base motion plus a
        // joint-space pull toward the goal would produce.
        let mut x = vec![input.base_cmd.0.clamp(bounds.lower[0], bounds.upper[0]), input.base_cmd.1.clamp(bounds.lower[1], bounds.upper[1])];
        for (i, (h, qi)) in goal.iter().zip(q).enumerate() {
            x.push((cfg.joint_gain * (h - qi)).clamp(bounds.lower[i + 2], bounds.upper[i + 2]));
        }
        let v = &j * DVector::from_vec(x.clone());
        (Point2::new(v[0], v[1]), Some(x.split_off(2)))
    } else {
        let v_des = desired_ee_velocity(ee, input.ee_target, cfg.ee_gain, cfg.ee_speed_cap) + input.ee_feedforward;
        let pref = (cfg.posture_gain > 0.0).then(|| input.arm.home.iter().zip(q).map(|(h, qi)| cfg.posture_gain * (h - qi)).collect());
        (v_des, pref)
    };
    let solved = build_qp(&j, v_des, input.base_cmd, pref.as_deref(), damper.as_ref(), &bounds, &cfg.weights).and_then(|p| {
        let s = solve_qp(&p)?;
        Ok((p.max_violation(&s.x), s.x))
    });
    match solved {
        Ok((violation, x)) => {
            let m = j.ncols();
            ControlOutput {
                v: x[0],
                omega: x[1],
                joint_rates: x.as_slice()[2..m].to_vec(),
                slack: Point2::new(x[m], x[m + 1]),
                damper_active: damper.is_some(),
                max_violation: violation,
                infeasible: false,
            }
        }
        Err(_) => ControlOutput {
            v: 0.0,
            omega: 0.0,
            joint_rates: vec![0.0; q.len()],
            slack: Point2::ZERO,
            damper_active: damper.is_some(),
            max_violation: 0.0,
            infeasible: true,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::Pose2;

    #[test]
    fn servo_clamps_and_passes_linear_region() {
        assert_eq!(desired_ee_velocity(Point2::new(1.0, 1.0), Point2::new(1.0, 1.0), 2.0, 0.5), Point2::ZERO);
        let v = desired_ee_velocity(Point2::ZERO, Point2::new(1.0, 0.0), 2.0, 0.5);
        assert!((v.x - 0.5).abs() < 1e-15 && v.y == 0.0);
        let v = desired_ee_velocity(Point2::ZERO, Point2::new(0.1, 0.1), 2.0, 1.0);
        assert!((v.x - 0.2).abs() < 1e-15 && (v.y - 0.2).abs() < 1e-15);
    }

    #[test]
    fn damper_bounds() {
        let p = DamperParams::default();
        let j = DMatrix::identity(2, 5);
        let n = Point2::new(1.0, 0.0);
        assert_eq!(obstacle_damper_row(0.6, n, &j, &p).unwrap().b, 0.6);
        assert_eq!(obstacle_damper_row(0.25, n, &j, &p).unwrap().b, 0.0);
        assert!((obstacle_damper_row(0.425, n, &j, &p).unwrap().b - 0.3).abs() < 1e-15);
        assert!(obstacle_damper_row(0.6000001, n, &j, &p).is_none());
        assert!(obstacle_damper_row(0.2, n, &j, &p).unwrap().b < 0.0);
    }

    fn open_bounds(m: usize) -> MotionBounds {
        MotionBounds { lower: vec![-1.0; m], upper: vec![1.0; m] }
    }

    fn sample_jacobian() -> DMatrix<f64> {
        let arm = ArmParams::default();
        holistic_jacobian(&Pose2::new(0.0, 0.0, 0.2), &arm, &[0.3, 0.8, -0.5])
    }

    #[test]
    fn zero_task_gives_zero_motion() {
        let j = sample_jacobian();
        let p = build_qp(&j, Point2::ZERO, (0.0, 0.0), None, None, &open_bounds(5), &QpWeights::default()).unwrap();
        let s = solve_qp(&p).unwrap();
        assert!(s.x.amax() < 1e-12);
    }

    #[test]
    fn reachable_task_leaves_slack_unused() {
        let j = sample_jacobian();
        let p = build_qp(&j, Point2::new(0.1, -0.05), (0.0, 0.0), None, None, &open_bounds(5), &QpWeights::default()).unwrap();
        let s = solve_qp(&p).unwrap();
        // The slack is penalized, not forbidden: its size is effort / w_slack.
        assert!(s.x[5].hypot(s.x[6]) < 1e-3 * 0.1f64.hypot(0.05));
        let stiff = QpWeights { slack: 1e8, ..QpWeights::default() };
        let p = build_qp(&j, Point2::new(0.1, -0.05), (0.0, 0.0), None, None, &open_bounds(5), &stiff).unwrap();
        let s = solve_qp(&p).unwrap();
        assert!(s.x[5].hypot(s.x[6]) < 1e-6);
        assert!(p.max_violation(&s.x) < 1e-9);
    }

    #[test]
    fn active_damper_blocks_approach() {
        let j = sample_jacobian();
        let n = Point2::new(1.0, 0.0);
        let row = obstacle_damper_row(0.25, n, &j, &DamperParams::default()).unwrap();
        let p = build_qp(&j, Point2::new(0.3, 0.0), (0.0, 0.0), None, Some(&row), &open_bounds(5), &QpWeights::default()).unwrap();
        let s = solve_qp(&p).unwrap();
        let approach: f64 = (0..5).map(|c| row.a[c] * s.x[c]).sum();
        assert!(approach <= 1e-6);
        assert!((s.x[5] - 0.3).abs() < 1e-6, "slack absorbs the blocked component");
    }

    #[test]
    fn bounds_respect_joint_range() {
        let arm = ArmParams::default();
        let base = BaseState::at_rest(Pose2::default());
        let b = MotionBounds::for_tick(&base, &[2.79, 0.0, -2.8], &arm, &VelocityLimits::default(), 0.05, false);
        assert!((b.upper[2] - 0.2).abs() < 1e-9);
        assert_eq!(b.lower[4], 0.0);
        assert_eq!(b.lower[0], -0.05);
        let locked = MotionBounds::for_tick(&base, &[0.0; 3], &arm, &VelocityLimits::default(), 0.05, true);
        assert_eq!((locked.lower[0], locked.upper[0]), (0.0, 0.0));
    }

    #[test]
    fn trust_region_narrows_or_collapses_base_bounds() {
        let mut b = MotionBounds { lower: vec![-0.5, -1.0, -2.0], upper: vec![0.5, 1.0, 2.0] };
        b.limit_base((0.3, -0.2), (0.05, 0.1));
        assert!((b.lower[0] - 0.25).abs() < 1e-15 && (b.upper[0] - 0.35).abs() < 1e-15);
        assert!((b.lower[1] + 0.3).abs() < 1e-15 && (b.upper[1] + 0.1).abs() < 1e-15);
        assert_eq!((b.lower[2], b.upper[2]), (-2.0, 2.0));
        // Command outside the acceleration window: pinned to its nearest edge.
        let mut b = MotionBounds { lower: vec![0.0, -0.1], upper: vec![0.05, 0.1] };
        b.limit_base((0.5, 0.0), (0.05, 0.1));
        assert_eq!((b.lower[0], b.upper[0]), (0.05, 0.05));
    }

    #[test]
    fn joint_goal_moves_the_arm_toward_the_posture() {
        let arm = ArmParams::default();
        let limits = VelocityLimits::default();
        let q = [0.5, 1.5, 1.0];
        let goal = arm.home.clone();
        let input = ControlInput {
            base: BaseState::at_rest(Pose2::default()),
            joints: &q,
            arm: &arm,
            limits: &limits,
            dt: 0.05,
            ee_target: Point2::new(5.0, 5.0),
            ee_feedforward: Point2::ZERO,
            base_cmd: (0.0, 0.0),
            base_locked: true,
            obstacle_distance: f64::INFINITY,
            obstacle_away: Point2::ZERO,
            joint_goal: Some(&goal),
        };
        let cfg = ControllerConfig::default();
        let out = control_step(&input, &cfg);
        assert!(!out.infeasible);
        for i in 0..3 {
            let want = (cfg.joint_gain * (goal[i] - q[i])).clamp(-arm.joint_vel_limit, arm.joint_vel_limit);
            assert!((out.joint_rates[i] - want).abs() < 1e-3, "joint {i}: {} vs {want}", out.joint_rates[i]);
        }
        assert!(out.v.abs() < 1e-12 && out.omega.abs() < 1e-12);
        assert!(out.slack.norm() < 1e-3);
    }
}
