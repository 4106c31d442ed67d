//! Dynamic agents that loop along fixed routes with pure-pursuit steering
//! and ignore the robot.

use crate::local_planner::integrate_arc;
use crate::world::{angle_diff, AgentRoute, Point2, Pose2};

/// Pure-pursuit lookahead distance, m.
pub const LOOKAHEAD: f64 = 0.3;

#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub route: AgentRoute,
    pub pose: Pose2,
    segment: usize,
    /// Completed laps.
    pub laps: usize,
}

impl Agent {
    pub fn new(route: AgentRoute) -> Self {
        let n = route.waypoints.len();
        let lens = segment_lengths(&route.waypoints);
        let perimeter: f64 = lens.iter().sum();
        let mut s = if perimeter > 0.0 { route.start_offset.rem_euclid(perimeter) } else { 0.0 };
        let mut seg = 0;
        while seg + 1 < n && s > lens[seg] {
            s -= lens[seg];
            seg += 1;
        }
        let a = route.waypoints[seg];
        let b = route.waypoints[(seg + 1) % n];
        let p = if lens[seg] > 0.0 { a.lerp(b, s / lens[seg]) } else { a };
        let heading = if (b - a).norm() > 0.0 { (b - a).angle() } else { 0.0 };
        Agent { pose: Pose2::new(p.x, p.y, heading), segment: seg, laps: 0, route }
    }

    pub fn position(&self) -> Point2 {
        self.pose.position()
    }

    pub fn radius(&self) -> f64 {
        self.route.radius
    }

    /// Point `distance` further along the route from the projection of
    /// the agent onto its current segment. Advances the segment index when
    /// the agent has passed its end.
    fn lookahead_point(&mut self, distance: f64) -> Point2 {
        let pts = &self.route.waypoints;
        let n = pts.len();
        if n == 1 {
            return pts[0];
        }
        let lens = segment_lengths(pts);
        let mut t;
        loop {
            let (a, b) = (pts[self.segment], pts[(self.segment + 1) % n]);
            let d = b - a;
            let len2 = d.dot(d);
            t = if len2 > 0.0 { (self.position() - a).dot(d) / len2 } else { 1.0 };
            if t < 1.0 {
                break;
            }
            self.segment = (self.segment + 1) % n;
            if self.segment == 0 {
                self.laps += 1;
            }
        }
        let mut seg = self.segment;
        let mut remaining = t.max(0.0) * lens[seg] + distance;
        while remaining > lens[seg] {
            remaining -= lens[seg];
            seg = (seg + 1) % n;
        }
        let (a, b) = (pts[seg], pts[(seg + 1) % n]);
        if lens[seg] > 0.0 { a.lerp(b, remaining / lens[seg]) } else { a }
    }

    pub fn step(&mut self, dt: f64) {
        if dt <= 0.0 {
            return;
        }
        let target = self.lookahead_point(LOOKAHEAD);
        let to = target - self.position();
        let dist = to.norm();
        if dist < 1e-9 {
            return;
        }
        let alpha = angle_diff(to.angle(), self.pose.theta);
        let v = self.route.speed;
        let omega = v * 2.0 * alpha.sin() / dist;
        self.pose = integrate_arc(&self.pose, v, omega, dt);
    }
}

fn segment_lengths(pts: &[Point2]) -> Vec<f64> {
    let n = pts.len();
    (0..n).map(|i| pts[i].distance(pts[(i + 1) % n])).collect()
}

pub fn step_agents(agents: &mut [Agent], dt: f64) {
    for a in agents {
        a.step(dt);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn route(pts: Vec<Point2>) -> AgentRoute {
        AgentRoute { waypoints: pts, speed: 0.3, radius: 0.2, start_offset: 0.0 }
    }

    #[test]
    fn single_waypoint_drives_straight() {
        let mut a = Agent::new(route(vec![Point2::new(5.0, 0.0)]));
        a.pose = Pose2::new(0.0, 0.0, 0.0);
        for _ in 0..20 {
            a.step(0.05);
        }
        assert!((a.pose.x - 0.3).abs() < 1e-9 && a.pose.y.abs() < 1e-12);
    }

    #[test]
    fn zero_dt_is_identity() {
        let mut a = Agent::new(route(vec![Point2::ZERO, Point2::new(1.0, 0.0), Point2::new(1.0, 1.0)]));
        let before = a.clone();
        a.step(0.0);
        assert_eq!(a, before);
    }

    #[test]
    fn loop_returns_near_start_after_one_lap() {
        let pts = vec![Point2::new(-3.0, -2.0), Point2::new(3.0, -2.0), Point2::new(3.0, 2.0), Point2::new(-3.0, 2.0)];
        let mut a = Agent::new(route(pts));
        let start = a.position();
        let mut steps = 0;
        let mut closest = f64::INFINITY;
        while a.laps == 0 {
            a.step(0.05);
            steps += 1;
            assert!(steps < 10_000);
            // Only the second half of the lap counts as a return.
            if steps as f64 * 0.05 * 0.3 > 10.0 {
                closest = closest.min(a.position().distance(start));
            }
        }
        assert!(closest < 0.1, "closest approach {closest}");
    }

    #[test]
    fn start_offset_places_agent_along_route() {
        let pts = vec![Point2::new(0.0, 0.0), Point2::new(2.0, 0.0), Point2::new(2.0, 2.0), Point2::new(0.0, 2.0)];
        let a = Agent::new(AgentRoute { start_offset: 3.0, ..route(pts) });
        assert!((a.position().x - 2.0).abs() < 1e-12 && (a.position().y - 1.0).abs() < 1e-12);
        assert!((a.pose.theta - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }
}
