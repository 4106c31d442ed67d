//! Time-cost estimates between poses and along paths.
//!
//! [`path_rtr`] charges rotate–translate–rotate motion performed
//! sequentially at the robot's maximum rates. [`bezier_cost`] instead
//! charges travel along a cubic Bézier connecting the two poses at full
//! linear speed, which is cheaper whenever the connection is a smooth arc.
//! [`pose_heuristic`] takes the smaller of the two.

use serde::{Deserialize, Serialize};

use crate::world::{angle_diff, Point2, Pose2};

/// Base velocity and acceleration limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VelocityLimits {
    /// m/s
    pub v_max: f64,
    /// rad/s
    pub omega_max: f64,
    /// m/s²
    pub a_lin_max: f64,
    /// rad/s²
    pub a_ang_max: f64,
}

impl Default for VelocityLimits {
    fn default() -> Self {
        VelocityLimits { v_max: 0.5, omega_max: 100f64.to_radians(), a_lin_max: 1.0, a_ang_max: 2.0 }
    }
}

impl VelocityLimits {
    pub fn is_valid(&self) -> bool {
        [self.v_max, self.omega_max, self.a_lin_max, self.a_ang_max].iter().all(|&x| x > 0.0)
    }

    /// Copy with both speed limits multiplied by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        VelocityLimits { v_max: self.v_max * k, omega_max: self.omega_max * k, ..*self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("path has no waypoints")]
    EmptyPath,
    #[error("Bézier endpoints coincide")]
    DegenerateCurve,
}

/// Sequential rotate/translate cost of following `waypoints`.
///
/// Each segment costs the turn needed to face it plus its length at full
/// speed; the heading along a segment is the segment direction, so interior
/// waypoints cost only the turn onto the next segment. A final in-place
/// rotation aligns with `final_heading`. Zero-length segments are skipped.
pub fn path_rtr(
    waypoints: &[Point2],
    start_heading: f64,
    final_heading: f64,
    limits: &VelocityLimits,
) -> Result<f64, MetricsError> {
    if waypoints.is_empty() {
        return Err(MetricsError::EmptyPath);
    }
    let mut heading = start_heading;
    let mut cost = 0.0;
    for pair in waypoints.windows(2) {
        let d = pair[1] - pair[0];
        let len = d.norm();
        if len == 0.0 {
            continue;
        }
        let dir = d.angle();
        cost += angle_diff(dir, heading).abs() / limits.omega_max + len / limits.v_max;
        heading = dir;
    }
    Ok(cost + angle_diff(final_heading, heading).abs() / limits.omega_max)
}

/// [`path_rtr`] for a direct pose-to-pose connection.
pub fn pose_rtr(start: &Pose2, goal: &Pose2, limits: &VelocityLimits) -> f64 {
    let d = goal.position() - start.position();
    let len = d.norm();
    if len == 0.0 {
        return angle_diff(goal.theta, start.theta).abs() / limits.omega_max;
    }
    let dir = d.angle();
    (angle_diff(dir, start.theta).abs() + angle_diff(goal.theta, dir).abs()) / limits.omega_max + len / limits.v_max
}

/// Default control-point offset as a fraction of the endpoint distance.
pub const BEZIER_OFFSET_FRACTION: f64 = 0.25;
/// Polyline segments used for arc length and curvature sampling.
pub const BEZIER_SEGMENTS: usize = 64;

/// Cubic Bézier connecting two poses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BezierCurve {
    pub p0: Point2,
    pub p1: Point2,
    pub p2: Point2,
    pub p3: Point2,
}

impl BezierCurve {
    /// Control points sit `offset_fraction · D` ahead of the start heading and
    /// behind the goal heading, `D` being the endpoint distance.
    pub fn from_poses(start: &Pose2, goal: &Pose2, offset_fraction: f64) -> Result<Self, MetricsError> {
        let p0 = start.position();
        let p3 = goal.position();
        let dist = p0.distance(p3);
        if dist == 0.0 {
            return Err(MetricsError::DegenerateCurve);
        }
        let off = offset_fraction * dist;
        Ok(BezierCurve {
            p0,
            p1: p0 + start.heading_vector() * off,
            p2: p3 - goal.heading_vector() * off,
            p3,
        })
    }

    pub fn point(&self, t: f64) -> Point2 {
        let u = 1.0 - t;
        self.p0 * (u * u * u) + self.p1 * (3.0 * u * u * t) + self.p2 * (3.0 * u * t * t) + self.p3 * (t * t * t)
    }

    pub fn derivative(&self, t: f64) -> Point2 {
        let u = 1.0 - t;
        (self.p1 - self.p0) * (3.0 * u * u) + (self.p2 - self.p1) * (6.0 * u * t) + (self.p3 - self.p2) * (3.0 * t * t)
    }

    pub fn second_derivative(&self, t: f64) -> Point2 {
        let a = self.p2 - self.p1 * 2.0 + self.p0;
        let b = self.p3 - self.p2 * 2.0 + self.p1;
        a * (6.0 * (1.0 - t)) + b * (6.0 * t)
    }

    /// Unsigned curvature; infinite where the tangent vanishes.
    pub fn curvature(&self, t: f64) -> f64 {
        let d1 = self.derivative(t);
        let speed = d1.norm();
        if speed == 0.0 {
            return f64::INFINITY;
        }
        d1.cross(self.second_derivative(t)).abs() / (speed * speed * speed)
    }

    /// Length of the inscribed polyline with `segments` equal parameter steps.
    pub fn arc_length(&self, segments: usize) -> f64 {
        let n = segments.max(1);
        let mut prev = self.p0;
        let mut len = 0.0;
        for i in 1..=n {
            let p = self.point(i as f64 / n as f64);
            len += p.distance(prev);
            prev = p;
        }
        len
    }

    /// Largest curvature over the `segments + 1` polyline sample points.
    pub fn max_sampled_curvature(&self, segments: usize) -> f64 {
        let n = segments.max(1);
        (0..=n).map(|i| self.curvature(i as f64 / n as f64)).fold(0.0, f64::max)
    }

    pub fn chord(&self) -> f64 {
        self.p0.distance(self.p3)
    }
}

/// Bézier connection with the default 25 % offset.
pub fn bezier_curve(start: &Pose2, goal: &Pose2) -> Result<BezierCurve, MetricsError> {
    BezierCurve::from_poses(start, goal, BEZIER_OFFSET_FRACTION)
}

/// Travel time along the Bézier connection at full linear speed, or
/// `INFINITY` when the curve is degenerate or sharper than the robot can
/// follow at full speed (κ > ω_max / v_max at any sample, or a cusp
/// between samples).
pub fn bezier_cost(start: &Pose2, goal: &Pose2, limits: &VelocityLimits) -> f64 {
    bezier_cost_with(start, goal, limits, BEZIER_OFFSET_FRACTION, BEZIER_SEGMENTS)
}

pub fn bezier_cost_with(start: &Pose2, goal: &Pose2, limits: &VelocityLimits, offset_fraction: f64, segments: usize) -> f64 {
    let Ok(curve) = BezierCurve::from_poses(start, goal, offset_fraction) else {
        return f64::INFINITY;
    };
    let kappa_max = limits.omega_max / limits.v_max;
    let k2 = kappa_max * kappa_max;
    let n = segments.max(1);
    // Power basis: B(t) = c0 + c1 t + c2 t² + c3 t³.
    let (p0, p1, p2, p3) = (curve.p0, curve.p1, curve.p2, curve.p3);
    let c1 = (p1 - p0) * 3.0;
    let c2 = (p0 - p1 * 2.0 + p2) * 3.0;
    let c3 = p3 - p0 + (p1 - p2) * 3.0;
    let mut prev = p0;
    let mut prev_d1 = c1;
    let mut len = 0.0;
    for i in 0..=n {
        let t = i as f64 / n as f64;
        let d1 = c1 + (c2 * 2.0 + c3 * (3.0 * t)) * t;
        let d2 = c2 * 2.0 + c3 * (6.0 * t);
        let s2 = d1.dot(d1);
        let cross = d1.cross(d2);
        // A tangent reversal between samples is a cusp.
        if s2 == 0.0 || cross * cross > k2 * s2 * s2 * s2 || d1.dot(prev_d1) < 0.0 {
            return f64::INFINITY;
        }
        prev_d1 = d1;
        if i > 0 {
            let p = p0 + (c1 + (c2 + c3 * t) * t) * t;
            len += p.distance(prev);
            prev = p;
        }
    }
    len / limits.v_max
}

/// Smaller of the direct rotate–translate–rotate cost and the Bézier cost.
pub fn pose_heuristic(start: &Pose2, goal: &Pose2, limits: &VelocityLimits) -> f64 {
    pose_rtr(start, goal, limits).min(bezier_cost(start, goal, limits))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn fig3_limits() -> VelocityLimits {
        VelocityLimits { v_max: 0.5, omega_max: 100f64.to_radians(), ..Default::default() }
    }

    /// Start rotated 30° off a 4 m chord, goal rotated 90° the other way.
    fn fig3_poses() -> (Pose2, Pose2) {
        (Pose2::new(0.0, 0.0, 30f64.to_radians()), Pose2::new(4.0, 0.0, -90f64.to_radians()))
    }

    #[test]
    fn rtr_reproduces_fig3() {
        let (s, g) = fig3_poses();
        let cost = path_rtr(&[s.position(), g.position()], s.theta, g.theta, &fig3_limits()).unwrap();
        assert_abs_diff_eq!(cost, 9.2, epsilon = 1e-9);
        assert_abs_diff_eq!(pose_rtr(&s, &g, &fig3_limits()), 9.2, epsilon = 1e-9);
    }

    #[test]
    fn rtr_zero_path() {
        let p = Point2::new(1.0, 1.0);
        assert_eq!(path_rtr(&[p], 0.3, 0.3, &fig3_limits()).unwrap(), 0.0);
        assert_eq!(path_rtr(&[p, p], 0.3, 0.3, &fig3_limits()).unwrap(), 0.0);
        assert_eq!(path_rtr(&[], 0.0, 0.0, &fig3_limits()), Err(MetricsError::EmptyPath));
    }

    #[test]
    fn rtr_right_angle_path() {
        let lim = VelocityLimits { v_max: 1.0, omega_max: FRAC_PI_2, ..Default::default() };
        let wps = [Point2::new(0.0, 0.0), Point2::new(1.0, 0.0), Point2::new(1.0, 1.0)];
        assert_abs_diff_eq!(path_rtr(&wps, 0.0, FRAC_PI_2, &lim).unwrap(), 3.0, epsilon = 1e-12);
    }

    #[test]
    fn collinear_curve_control_points() {
        let c = bezier_curve(&Pose2::new(0.0, 0.0, 0.0), &Pose2::new(4.0, 0.0, 0.0)).unwrap();
        assert_eq!(c.p1, Point2::new(1.0, 0.0));
        assert_eq!(c.p2, Point2::new(3.0, 0.0));
        assert_abs_diff_eq!(c.arc_length(64), 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(bezier_cost(&Pose2::new(0.0, 0.0, 0.0), &Pose2::new(4.0, 0.0, 0.0), &fig3_limits()), 8.0, epsilon = 1e-12);
    }

    #[test]
    fn fig3_arc_length_and_cost() {
        let (s, g) = fig3_poses();
        let c = bezier_curve(&s, &g).unwrap();
        assert!((c.arc_length(64) - 4.35).abs() <= 0.05, "{}", c.arc_length(64));
        let cost = bezier_cost(&s, &g, &fig3_limits());
        assert!((cost - 8.7).abs() <= 0.05, "{cost}");
        assert_abs_diff_eq!(pose_heuristic(&s, &g, &fig3_limits()), cost);
    }

    #[test]
    fn u_turn_is_longer_than_chord() {
        let c = bezier_curve(&Pose2::new(0.0, 0.0, 0.0), &Pose2::new(0.0, 2.0, PI)).unwrap();
        assert!(c.arc_length(64) > 2.0);
        // Mirror symmetry about y = 1.
        let a = c.point(0.3);
        let b = c.point(0.7);
        assert_abs_diff_eq!(a.x, b.x, epsilon = 1e-12);
        assert_abs_diff_eq!(a.y, 2.0 - b.y, epsilon = 1e-12);
    }

    #[test]
    fn reversed_goal_behind_is_infeasible() {
        let s = Pose2::new(0.0, 0.0, 0.0);
        let g = Pose2::new(-0.5, 0.0, PI);
        assert_eq!(bezier_cost(&s, &g, &fig3_limits()), f64::INFINITY);
        let g1 = Pose2::new(-1.0, 0.0, PI);
        assert_eq!(bezier_cost(&s, &g1, &fig3_limits()), f64::INFINITY);
        // Turn 180°, drive 1 m, no final turn.
        assert_abs_diff_eq!(pose_heuristic(&s, &g1, &fig3_limits()), 1.8 + 2.0, epsilon = 1e-9);
    }

    #[test]
    fn degenerate_curve() {
        let p = Pose2::new(1.0, 2.0, 0.4);
        assert_eq!(bezier_curve(&p, &p.with_theta(1.0)), Err(MetricsError::DegenerateCurve));
        assert_eq!(bezier_cost(&p, &p, &fig3_limits()), f64::INFINITY);
        assert_eq!(pose_heuristic(&p, &p, &fig3_limits()), 0.0);
    }

    fn pose() -> impl Strategy<Value = Pose2> {
        (-5.0f64..5.0, -5.0f64..5.0, -PI..PI).prop_map(|(x, y, t)| Pose2::new(x, y, t))
    }

    proptest! {
        #[test]
        fn rtr_bounded_below_by_straight_line(pts in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..6), h0 in -PI..PI, h1 in -PI..PI) {
            let wps: Vec<Point2> = pts.into_iter().map(Point2::from).collect();
            let lim = fig3_limits();
            let cost = path_rtr(&wps, h0, h1, &lim).unwrap();
            let line = wps[0].distance(*wps.last().unwrap()) / lim.v_max;
            prop_assert!(cost >= line - 1e-9);
        }

        #[test]
        fn doubling_limits_halves_rtr(pts in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..6), h0 in -PI..PI, h1 in -PI..PI) {
            let wps: Vec<Point2> = pts.into_iter().map(Point2::from).collect();
            let lim = fig3_limits();
            let a = path_rtr(&wps, h0, h1, &lim).unwrap();
            let b = path_rtr(&wps, h0, h1, &lim.scaled(2.0)).unwrap();
            prop_assert!((a - 2.0 * b).abs() <= 1e-9 * a.max(1.0));
        }

        #[test]
        fn arc_at_least_chord(s in pose(), g in pose()) {
            if let Ok(c) = bezier_curve(&s, &g) {
                prop_assert!(c.arc_length(64) >= c.chord() - 1e-9);
            }
        }

        #[test]
        fn heuristic_never_exceeds_rtr(s in pose(), g in pose()) {
            let lim = fig3_limits();
            prop_assert!(pose_heuristic(&s, &g, &lim) <= pose_rtr(&s, &g, &lim));
        }

        #[test]
        fn quadrature_converges(s in pose(), g in pose()) {
            if let Ok(c) = bezier_curve(&s, &g) {
                let a = c.arc_length(64);
                let b = c.arc_length(128);
                prop_assert!((b - a).abs() < 1e-3 * b);
            }
        }
    }

    #[test]
    fn arc_equals_chord_only_when_collinear() {
        let straight = bezier_curve(&Pose2::new(0.0, 0.0, 0.0), &Pose2::new(3.0, 0.0, 0.0)).unwrap();
        assert_abs_diff_eq!(straight.arc_length(64), straight.chord(), epsilon = 1e-12);
        let bent = bezier_curve(&Pose2::new(0.0, 0.0, 0.2), &Pose2::new(3.0, 0.0, 0.0)).unwrap();
        assert!(bent.arc_length(64) > bent.chord() + 1e-6);
    }
}
