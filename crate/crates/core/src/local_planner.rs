//! Time-bounded A* over a discretized acceleration space.
//!
//! Each expansion applies one of 15 (linear, angular) accelerations for a
//! fixed step, clamps the velocities and integrates the exact unicycle arc.
//! The search stops when a node reaches the goal pose, when the swept
//! segment into a node passes close to the goal position (the robot drives
//! through instead of stopping), or when the expansion budget runs out, in
//! which case the best node by `g + h` is returned.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use serde::{Deserialize, Serialize};

use crate::path_metrics::{pose_heuristic, VelocityLimits};
use crate::world::{angle_diff, normalize_angle, DistanceField, OccupancyGrid, Point2, Pose2};

/// Pose plus current forward and turn rates.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BaseState {
    pub pose: Pose2,
    pub v: f64,
    pub omega: f64,
}

impl BaseState {
    pub fn at_rest(pose: Pose2) -> Self {
        BaseState { pose, v: 0.0, omega: 0.0 }
    }
}

/// Pose after driving at constant `v`, `omega` for `dt`.
pub fn integrate_arc(pose: &Pose2, v: f64, omega: f64, dt: f64) -> Pose2 {
    let th = pose.theta;
    if omega.abs() < 1e-12 {
        return Pose2::new(pose.x + v * dt * th.cos(), pose.y + v * dt * th.sin(), th);
    }
    let r = v / omega;
    let th1 = th + omega * dt;
    Pose2::new(pose.x + r * (th1.sin() - th.sin()), pose.y - r * (th1.cos() - th.cos()), th1)
}

/// Proximity penalty scale for the time-to-goal estimate `t_h` (seconds).
pub fn grid_penalty_scale(t_h: f64) -> f64 {
    (t_h / 3.0).min(1.0).max(0.1)
}

pub const LINEAR_SAMPLES: [f64; 3] = [-1.0, 0.0, 1.0];
pub const ANGULAR_SAMPLES: [f64; 5] = [-1.0, -0.5, 0.0, 0.5, 1.0];

/// The 15 successors of `state`, linear-major. Forward speed is clamped to
/// `[v_min, v_max]`.
pub fn expand_with(state: &BaseState, limits: &VelocityLimits, dt: f64, v_min: f64) -> Vec<BaseState> {
    let mut out = Vec::with_capacity(LINEAR_SAMPLES.len() * ANGULAR_SAMPLES.len());
    for &al in &LINEAR_SAMPLES {
        for &aa in &ANGULAR_SAMPLES {
            let v = (state.v + al * limits.a_lin_max * dt).clamp(v_min, limits.v_max);
            let omega = (state.omega + aa * limits.a_ang_max * dt).clamp(-limits.omega_max, limits.omega_max);
            out.push(BaseState { pose: integrate_arc(&state.pose, v, omega, dt), v, omega });
        }
    }
    out
}

/// [`expand_with`] allowing the full speed range `[-v_max, v_max]`.
pub fn expand(state: &BaseState, limits: &VelocityLimits, dt: f64) -> Vec<BaseState> {
    expand_with(state, limits, dt, -limits.v_max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LocalPlannerConfig {
    /// Expansion step, s.
    pub dt: f64,
    pub horizon: usize,
    pub node_budget: usize,
    pub pos_tol: f64,
    /// rad
    pub heading_tol: f64,
    pub pass_tol: f64,
    /// Penalty weight, seconds-equivalent.
    pub w_prox: f64,
    /// Penalty falloff distance beyond the inflated boundary, m.
    pub d_infl: f64,
    pub allow_reverse: bool,
    /// Goal additionally requires near-zero speed; pass-through disabled.
    pub require_stop: bool,
    pub stop_v_tol: f64,
    pub stop_omega_tol: f64,
    /// Number of sub-steps checked for collision inside each expansion.
    pub collision_substeps: usize,
    /// Each sub-step also checks the point this many seconds of travel
    /// ahead along the heading. A base that can only slew its velocity
    /// trails a plan built from instantaneous velocity steps by about half
    /// an expansion step. Zero disables the check.
    pub lead_time: f64,
    /// Multiplier on the heuristic in the open-list priority. One is plain
    /// A*; larger values trade plan cost for fewer expansions.
    pub heuristic_weight: f64,
}

impl Default for LocalPlannerConfig {
    fn default() -> Self {
        LocalPlannerConfig {
            dt: 0.25,
            horizon: 20,
            node_budget: 2000,
            pos_tol: 0.10,
            heading_tol: 15f64.to_radians(),
            pass_tol: 0.10,
            w_prox: 2.0,
            d_infl: 0.5,
            allow_reverse: false,
            require_stop: false,
            stop_v_tol: 0.05,
            stop_omega_tol: 0.15,
            collision_substeps: 5,
            lead_time: 0.125,
            heuristic_weight: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    GoalReached,
    PassThrough,
    Budget,
    /// Start pose in contact; decelerating in place.
    Emergency,
    /// No collision-free successor exists.
    Blocked,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalPlan {
    /// (v, ω) per step.
    pub commands: Vec<(f64, f64)>,
    /// State at the end of each step.
    pub predicted_states: Vec<BaseState>,
    pub cost: f64,
    pub terminated_by: Termination,
    pub expansions: usize,
}

impl LocalPlan {
    pub fn first_command(&self) -> (f64, f64) {
        self.commands.first().copied().unwrap_or((0.0, 0.0))
    }
}

/// Collision and proximity information for one planning tick.
#[derive(Debug, Clone, Copy)]
pub struct PlanningMap<'a> {
    /// Obstacles inflated by the base radius plus margin.
    pub inflated: &'a OccupancyGrid,
    /// Distance to the nearest raw obstacle cell.
    pub clearance: &'a DistanceField,
    pub base_radius: f64,
    pub inflation_radius: f64,
}

impl PlanningMap<'_> {
    pub fn is_free(&self, p: Point2) -> bool {
        !self.inflated.is_occupied_at(p)
    }

    pub fn raw_clearance(&self, p: Point2) -> f64 {
        self.clearance.interpolate(p)
    }

    /// Squared-falloff proximity penalty per second at `p`.
    fn proximity(&self, p: Point2, d_infl: f64) -> f64 {
        let d = (self.raw_clearance(p) - self.inflation_radius).max(0.0);
        let x = (1.0 - d / d_infl).max(0.0);
        x * x
    }
}

#[derive(Debug, Clone, Copy)]
struct Node {
    state: BaseState,
    g: f64,
    h: f64,
    parent: usize,
    depth: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Open {
    f: f64,
    seq: usize,
}

impl Eq for Open {}

impl Ord for Open {
    fn cmp(&self, other: &Self) -> Ordering {
        other.f.total_cmp(&self.f).then_with(|| other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn closed_key(s: &BaseState) -> (i64, i64, i64, i64, i64) {
    let q = |x: f64, step: f64| (x / step).round() as i64;
    (q(s.pose.x, 0.1), q(s.pose.y, 0.1), q(normalize_angle(s.pose.theta), 10f64.to_radians()), q(s.v, 0.125), q(s.omega, 0.25))
}

fn point_segment_distance(p: Point2, a: Point2, b: Point2) -> f64 {
    let d = b - a;
    let len2 = d.dot(d);
    if len2 == 0.0 {
        return p.distance(a);
    }
    let t = ((p - a).dot(d) / len2).clamp(0.0, 1.0);
    p.distance(a.lerp(b, t))
}

/// Plans a short velocity sequence from `start` toward `goal`. `t_h` is the
/// estimated time to the final goal and scales the proximity penalty.
pub fn plan_local(
    start: &BaseState,
    goal: &Pose2,
    map: &PlanningMap<'_>,
    limits: &VelocityLimits,
    t_h: f64,
    cfg: &LocalPlannerConfig,
) -> LocalPlan {
    let start_clearance = map.raw_clearance(start.pose.position());
    if start_clearance < map.base_radius {
        return braking_plan(start, limits, cfg, Termination::Emergency);
    }
    let relaxed_start = !map.is_free(start.pose.position());
    let k = grid_penalty_scale(t_h);
    let v_min = if cfg.allow_reverse { -limits.v_max } else { 0.0 };
    let sub = cfg.collision_substeps.max(1);

    let goal_pos = goal.position();
    // Already on the goal: passing through it again carries no information.
    let pass_enabled = !cfg.require_stop && start.pose.position().distance(goal_pos) > cfg.pass_tol;
    let at_goal = |s: &BaseState| {
        s.pose.position().distance(goal_pos) <= cfg.pos_tol
            && angle_diff(goal.theta, s.pose.theta).abs() <= cfg.heading_tol
            && (!cfg.require_stop || (s.v.abs() <= cfg.stop_v_tol && s.omega.abs() <= cfg.stop_omega_tol))
    };

    let mut nodes = vec![Node { state: *start, g: 0.0, h: pose_heuristic(&start.pose, goal, limits), parent: usize::MAX, depth: 0 }];
    let mut open = BinaryHeap::new();
    open.push(Open { f: nodes[0].h, seq: 0 });
    let mut closed: HashMap<(i64, i64, i64, i64, i64), f64> = HashMap::new();
    let mut expansions = 0;
    let mut best: Option<usize> = None;

    while let Some(Open { seq: idx, .. }) = open.pop() {
        if expansions >= cfg.node_budget.max(1) {
            break;
        }
        let node = nodes[idx];
        if node.depth >= cfg.horizon {
            continue;
        }
        expansions += 1;
        // Several successors may terminate; the best by g + h wins.
        let mut terminal: Option<(usize, Termination)> = None;
        let still = |s: &BaseState| s.v.abs() < 1e-6 && s.omega.abs() < 1e-6;
        let at_rest = still(&node.state);
        for succ in expand_with(&node.state, limits, cfg.dt, v_min) {
            // Waiting in place never helps on a static map, and as the
            // cheapest child it would pin a budget-limited plan to the start.
            if at_rest && still(&succ) {
                continue;
            }
            // Collision check at sub-step resolution along the arc.
            let mut ok = true;
            let mut penalty = 0.0;
            let mut prev = node.state.pose.position();
            let mut swept_min = f64::INFINITY;
            let lead = node.state.v.abs().max(succ.v.abs()) * cfg.lead_time;
            for i in 1..=sub {
                let pose = integrate_arc(&node.state.pose, succ.v, succ.omega, cfg.dt * i as f64 / sub as f64);
                let p = pose.position();
                let free_at = |q: Point2| {
                    map.is_free(q)
                        || (relaxed_start && {
                            let c = map.raw_clearance(q);
                            c >= start_clearance && c > map.base_radius
                        })
                };
                let ahead = p + pose.heading_vector() * (lead * succ.v.signum());
                if !free_at(p) || (lead > 0.0 && !free_at(ahead)) {
                    ok = false;
                    break;
                }
                penalty += map.proximity(p, cfg.d_infl);
                swept_min = swept_min.min(point_segment_distance(goal_pos, prev, p));
                prev = p;
            }
            if !ok {
                continue;
            }
            let g = node.g + cfg.dt + k * cfg.w_prox * penalty / sub as f64 * cfg.dt;
            let key = closed_key(&succ);
            if closed.get(&key).is_some_and(|&old| old <= g) {
                continue;
            }
            closed.insert(key, g);
            let child = Node { state: succ, g, h: pose_heuristic(&succ.pose, goal, limits), parent: idx, depth: node.depth + 1 };
            let cidx = nodes.len();
            nodes.push(child);
            let reason = if at_goal(&succ) {
                Some(Termination::GoalReached)
            } else if pass_enabled && swept_min <= cfg.pass_tol {
                Some(Termination::PassThrough)
            } else {
                None
            };
            if let Some(r) = reason {
                if terminal.is_none_or(|(t, _)| child.g + child.h < nodes[t].g + nodes[t].h) {
                    terminal = Some((cidx, r));
                }
                continue;
            }
            if best.is_none_or(|b| child.g + child.h < nodes[b].g + nodes[b].h) {
                best = Some(cidx);
            }
            open.push(Open { f: child.g + cfg.heuristic_weight * child.h, seq: cidx });
        }
        if let Some((t, r)) = terminal {
            return extract(&nodes, t, r, expansions);
        }
    }
    match best {
        Some(b) => extract(&nodes, b, Termination::Budget, expansions),
        None => braking_plan(start, limits, cfg, Termination::Blocked),
    }
}

fn extract(nodes: &[Node], mut idx: usize, terminated_by: Termination, expansions: usize) -> LocalPlan {
    let cost = nodes[idx].g;
    let mut states = Vec::new();
    while idx != 0 {
        states.push(nodes[idx].state);
        idx = nodes[idx].parent;
    }
    states.reverse();
    LocalPlan { commands: states.iter().map(|s| (s.v, s.omega)).collect(), predicted_states: states, cost, terminated_by, expansions }
}

/// Decelerate to rest along the current heading.
fn braking_plan(start: &BaseState, limits: &VelocityLimits, cfg: &LocalPlannerConfig, terminated_by: Termination) -> LocalPlan {
    let mut s = *start;
    let mut states = Vec::new();
    loop {
        let dv = limits.a_lin_max * cfg.dt;
        let dw = limits.a_ang_max * cfg.dt;
        let v = if s.v > 0.0 { (s.v - dv).max(0.0) } else { (s.v + dv).min(0.0) };
        let omega = if s.omega > 0.0 { (s.omega - dw).max(0.0) } else { (s.omega + dw).min(0.0) };
        s = BaseState { pose: integrate_arc(&s.pose, v, omega, cfg.dt), v, omega };
        states.push(s);
        if v == 0.0 && omega == 0.0 {
            break;
        }
    }
    LocalPlan { commands: states.iter().map(|s| (s.v, s.omega)).collect(), predicted_states: states, cost: 0.0, terminated_by, expansions: 0 }
}
