//! The closed-loop trial: sense, place, plan, control, integrate.

use serde::{Deserialize, Serialize};

use super::agents::{step_agents, Agent};
use super::base::step_base;
use super::dwell::{DwellMonitor, DwellStatus};
use super::metrics::{CommandRecord, FailureCause, PlacementRecord, TrialMetrics};
use super::task::{Mode, TaskSpec};
use crate::base_placement::{Candidate, PlacementConfig, PlacementTracker};
use crate::global_planner::{intermediate_goal, GlobalPath};
use crate::holistic::{control_step, forward_kinematics, ControlInput, ControllerConfig};
use crate::local_planner::{plan_local, BaseState, LocalPlannerConfig, PlanningMap};
use crate::path_metrics::pose_heuristic;
use crate::world::{
    raycast_lidar, rasterize_shapes, DistanceField, DynamicLayer, OccupancyGrid, Point2, Pose2, ScenarioConfig, Shape,
    WorldError,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    /// Physics and control period, s.
    pub dt: f64,
    pub timeout: f64,
    /// Fine grid used for maps and the local planner, m.
    pub grid_resolution: f64,
    /// Block size used to coarsen the inflated grid for placement and
    /// global planning.
    pub global_downsample: usize,
    pub lidar_beams: usize,
    pub lidar_range: f64,
    /// Seconds a dynamic detection survives without re-observation.
    pub detection_expiry: f64,
    /// Radius of the local planning region, m.
    pub local_radius: f64,
    /// Speed below which the base counts as stopped in stop mode.
    pub arrival_speed_tol: f64,
    /// The arm only reaches for targets this much inside its reach.
    pub reach_margin: f64,
    /// End-effector distance below which the arm servos the target
    /// directly instead of moving in joint space, m.
    pub servo_switch: f64,
    /// Last-link headings tried when choosing a reaching posture.
    pub wrist_samples: usize,
    /// In stop mode the base stays put after a grasp or release until every
    /// joint is this close to its stowed value, rad.
    pub stow_tolerance: f64,
    pub local: LocalPlannerConfig,
    pub placement: PlacementConfig,
    pub controller: ControllerConfig,
    /// Keep every placement evaluation in the metrics.
    pub record_placements: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt: 0.05,
            timeout: 300.0,
            grid_resolution: 0.05,
            global_downsample: 2,
            lidar_beams: 360,
            lidar_range: 10.0,
            detection_expiry: 0.5,
            local_radius: 1.0,
            arrival_speed_tol: 0.02,
            reach_margin: 0.005,
            servo_switch: 0.1,
            wrist_samples: 72,
            stow_tolerance: 0.2,
            local: LocalPlannerConfig::default(),
            placement: PlacementConfig::default(),
            controller: ControllerConfig::default(),
            record_placements: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    World(#[from] WorldError),
    #[error("invalid task: {0}")]
    InvalidTask(String),
    #[error("invalid robot parameters")]
    InvalidRobot,
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidConfig(m.into()));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt must be positive");
        }
        if !(self.timeout > 0.0) {
            return bad("timeout must be positive");
        }
        if !(self.grid_resolution > 0.0) || self.global_downsample == 0 {
            return bad("grid resolution and downsample factor must be positive");
        }
        if self.lidar_beams == 0 || !(self.lidar_range > 0.0) {
            return bad("lidar needs beams and a positive range");
        }
        if !(self.local.dt > 0.0) || self.local.horizon == 0 || self.local.node_budget == 0 {
            return bad("local planner needs positive dt, horizon and budget");
        }
        if self.placement.radii.is_empty() || self.placement.radii.iter().any(|r| !(*r > 0.0)) {
            return bad("placement radii must be positive");
        }
        if !(self.stow_tolerance > 0.0) || !(self.servo_switch > 0.0) {
            return bad("stow tolerance and servo switch distance must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Pick(usize),
    Place(usize),
    Done,
}

/// Static maps plus the cached products of the last fusion.
struct Maps {
    base_static: OccupancyGrid,
    arm_static: OccupancyGrid,
    dynamic: DynamicLayer,
    live: Vec<usize>,
    base_df: DistanceField,
    base_inflated: OccupancyGrid,
    coarse: OccupancyGrid,
    arm_df: DistanceField,
}

impl Maps {
    fn new(scenario: &ScenarioConfig, cfg: &SimConfig) -> Result<Self, SimError> {
        let base_static = rasterize_shapes(&scenario.extent, scenario.base_shapes().iter(), cfg.grid_resolution)?;
        let arm_static = rasterize_shapes(&scenario.extent, scenario.arm_shapes().iter(), cfg.grid_resolution)?;
        let dynamic = DynamicLayer::new(base_static.geometry, cfg.detection_expiry);
        let mut m = Maps {
            base_df: DistanceField::compute(&base_static),
            arm_df: DistanceField::compute(&arm_static),
            base_inflated: base_static.clone(),
            coarse: base_static.clone(),
            base_static,
            arm_static,
            dynamic,
            live: Vec::new(),
        };
        m.rebuild(scenario.robot.inflation_radius(), cfg, 0.0);
        Ok(m)
    }

    fn rebuild(&mut self, inflation: f64, cfg: &SimConfig, time: f64) {
        let base_raw = self.dynamic.fuse(&self.base_static, time);
        self.base_df = DistanceField::compute(&base_raw);
        self.base_inflated = self.base_df.threshold(inflation);
        self.coarse = self.base_inflated.downsample(cfg.global_downsample);
        self.arm_df = DistanceField::compute(&self.dynamic.fuse(&self.arm_static, time));
    }

    fn sense(&mut self, shapes: &[Shape], sensor: Pose2, inflation: f64, cfg: &SimConfig, time: f64) -> Result<(), SimError> {
        let scan = raycast_lidar(shapes, sensor, cfg.lidar_beams, cfg.lidar_range)?;
        self.dynamic = self.dynamic.integrate(&scan, time, &self.arm_static);
        let live: Vec<usize> = (0..self.dynamic.geometry.len()).filter(|&i| self.dynamic.is_live(i, time)).collect();
        if live != self.live {
            self.live = live;
            self.rebuild(inflation, cfg, time);
        }
        Ok(())
    }
}

fn true_distance(shapes: &[Shape], agents: &[Agent], p: Point2) -> f64 {
    let s = shapes.iter().map(|s| s.distance(p)).fold(f64::INFINITY, f64::min);
    let a = agents.iter().map(|a| (a.position().distance(p) - a.radius()).max(0.0)).fold(f64::INFINITY, f64::min);
    s.min(a)
}

/// Runs one task to completion, collision or timeout.
pub fn run_trial(scenario: &ScenarioConfig, task: &TaskSpec, seed: u64, cfg: &SimConfig) -> Result<TrialMetrics, SimError> {
    scenario.validate()?;
    cfg.validate()?;
    let robot = &scenario.robot;
    if !robot.is_valid() {
        return Err(SimError::InvalidRobot);
    }
    if !task.is_valid(scenario.slots.len()) || task.drops.iter().any(|&d| d >= scenario.drops.len()) {
        return Err(SimError::InvalidTask(format!("{task:?}")));
    }

    let dt = cfg.dt;
    let limits = robot.limits;
    let arm = &robot.arm;
    let inflation = robot.inflation_radius();
    let stop_mode = task.mode == Mode::StopAndManipulate;
    let base_shapes = scenario.base_shapes();
    let arm_shapes = scenario.arm_shapes();

    let mut maps = Maps::new(scenario, cfg)?;
    let mut agents: Vec<Agent> = scenario.agents.iter().cloned().map(Agent::new).collect();
    let mut base = BaseState::at_rest(scenario.robot_start);
    let mut q = arm.home_joints();
    let mut objects: Vec<Point2> = task.objects.iter().map(|&s| scenario.slots[s]).collect();
    let mut held: Option<usize> = None;
    let mut tracker = PlacementTracker::new(cfg.placement.clone());
    let mut active: Option<(Candidate, Option<GlobalPath>)> = None;
    let mut engaged = false;
    let mut retracting = false;
    let mut cartesian = false;
    let mut phase = if objects.is_empty() { Phase::Done } else { Phase::Pick(0) };
    let mut monitor = DwellMonitor::new(robot.grasp_tolerance, robot.grasp_dwell);

    let mut m = TrialMetrics { scenario: scenario.name.clone(), seed, mode: Some(task.mode), dt, ..Default::default() };
    let max_ticks = (cfg.timeout / dt).ceil() as usize;

    let mut tick = 0;
    while phase != Phase::Done {
        if tick >= max_ticks {
            m.failure = Some(FailureCause::Timeout);
            break;
        }
        let time = tick as f64 * dt;

        let lidar_shapes = scenario.lidar_shapes(agents.iter().map(|a| (a.position(), a.radius())));
        maps.sense(&lidar_shapes, base.pose, inflation, cfg, time)?;

        let (target, next) = match phase {
            Phase::Pick(k) => (objects[k], Some(scenario.drops[task.drops[k]].position())),
            Phase::Place(k) => (scenario.drops[task.drops[k]].position(), objects.get(k + 1).copied()),
            Phase::Done => unreachable!(),
        };

        if retracting && q.iter().zip(&arm.home).all(|(a, h)| (a - h).abs() <= cfg.stow_tolerance) {
            retracting = false;
        }
        // Stop mode holds the chosen pose while the arm works and stows.
        let hold = stop_mode && (engaged || retracting);
        if !hold {
            if let Ok(t) = tracker.update(&base.pose, target, next, &maps.coarse, &limits) {
                if cfg.record_placements {
                    m.placements.push(PlacementRecord {
                        tick,
                        target,
                        evaluated: t.placement.evaluated.clone(),
                        chosen: t.placement.chosen,
                        fallback: t.placement.fallback,
                    });
                }
                active = Some((t.active, t.path));
            }
        }

        let mut base_cmd = (0.0, 0.0);
        let mut expansions = 0;
        if let Some((cand, path)) = &active {
            if !hold {
                let goal = path.as_ref().map_or(cand.pose, |p| intermediate_goal(p, &base.pose, cfg.local_radius));
                let is_final = path.as_ref().is_none_or(|p| goal == p.goal());
                let local = LocalPlannerConfig { require_stop: stop_mode && is_final, ..cfg.local };
                let map = PlanningMap { inflated: &maps.base_inflated, clearance: &maps.base_df, base_radius: robot.base_radius, inflation_radius: inflation };
                let t_h = pose_heuristic(&base.pose, &cand.pose, &limits);
                let plan = plan_local(&base, &goal, &map, &limits, t_h, &local);
                base_cmd = plan.first_command();
                expansions = plan.expansions;
            }
            if stop_mode && !hold {
                let d = base.pose.position().distance(cand.pose.position());
                let dh = crate::world::angle_diff(cand.pose.theta, base.pose.theta).abs();
                if d <= cfg.local.pos_tol && dh <= cfg.local.heading_tol {
                    // On the pose: brake rather than trim.
                    base_cmd = (0.0, 0.0);
                    engaged = base.v.abs() < cfg.arrival_speed_tol && base.omega.abs() < cfg.arrival_speed_tol;
                }
            }
        }
        let base_locked = stop_mode && (engaged || retracting);

        // Arm target: the object or drop when within reach, else stowed.
        let mount = base.pose.transform_point(arm.mount_offset);
        let reachable = mount.distance(target) <= robot.reach - cfg.reach_margin;
        let ee = forward_kinematics(&base.pose, arm, &q).position;
        let arm_active = reachable && (!stop_mode || engaged);
        // Far from the target the arm moves in joint space toward a posture
        // that reaches it; close in, the end effector is servoed directly.
        let err = ee.distance(target);
        cartesian = arm_active && (err < cfg.servo_switch || (cartesian && err < 2.0 * cfg.servo_switch));
        let goal_posture = if !arm_active {
            Some(arm.home.clone())
        } else if cartesian {
            None
        } else {
            let local = base.pose.inverse_transform_point(target);
            Some(arm.reach_posture(local, &q, cfg.wrist_samples).unwrap_or_else(|| arm.home.clone()))
        };

        let near = maps.arm_df.nearest_obstacle(ee);
        // The distance field is exact between cell centers; subtract half a
        // cell diagonal to stay conservative.
        let detected = near.distance - maps.arm_df.geometry.resolution * std::f64::consts::FRAC_1_SQRT_2;
        let input = ControlInput {
            base,
            joints: &q,
            arm,
            limits: &limits,
            dt,
            ee_target: target,
            ee_feedforward: Point2::ZERO,
            base_cmd,
            base_locked,
            obstacle_distance: detected,
            obstacle_away: near.direction,
            joint_goal: goal_posture.as_deref(),
        };
        let out = control_step(&input, &cfg.controller);
        if out.infeasible {
            m.qp_infeasible_ticks += 1;
        }

        base = step_base(&base, (out.v, out.omega), dt, &limits);
        for (qi, r) in q.iter_mut().zip(&out.joint_rates) {
            *qi = (*qi + r * dt).clamp(-arm.joint_limit, arm.joint_limit);
        }
        step_agents(&mut agents, dt);
        let ee = forward_kinematics(&base.pose, arm, &q).position;
        if let Some(h) = held {
            objects[h] = ee;
        }

        let done_time = (tick + 1) as f64 * dt;
        match phase {
            Phase::Pick(k) => {
                if monitor.update(ee, objects[k], dt) == DwellStatus::Done {
                    held = Some(k);
                    objects[k] = ee;
                    m.attach_count += 1;
                    m.pick_times.push(done_time);
                    phase = Phase::Place(k);
                    monitor = DwellMonitor::new(robot.drop_tolerance, robot.grasp_dwell);
                    tracker.reset();
                    engaged = false;
                    retracting = stop_mode;
                }
            }
            Phase::Place(k) => {
                let drop = scenario.drops[task.drops[k]].position();
                if monitor.update(ee, drop, dt) == DwellStatus::Done {
                    held = None;
                    objects[k] = drop;
                    m.detach_count += 1;
                    m.place_times.push(done_time);
                    phase = if k + 1 < objects.len() { Phase::Pick(k + 1) } else { Phase::Done };
                    monitor = DwellMonitor::new(robot.grasp_tolerance, robot.grasp_dwell);
                    tracker.reset();
                    engaged = false;
                    retracting = stop_mode;
                }
            }
            Phase::Done => {}
        }

        let after = maps.arm_df.nearest_obstacle(ee);
        m.ee_obstacle_dist.push(after.distance - maps.arm_df.geometry.resolution * std::f64::consts::FRAC_1_SQRT_2);
        let ee_truth = true_distance(&arm_shapes, &agents, ee);
        m.ee_truth_dist.push(ee_truth);
        let base_truth = true_distance(&base_shapes, &agents, base.pose.position()) - robot.base_radius;
        m.base_clearance.push(base_truth);
        m.v.push(base.v);
        m.omega.push(base.omega);
        m.qp_max_violation.push(out.max_violation);
        m.damper_active.push(out.damper_active);
        m.local_expansions.push(expansions);
        m.commands.push(CommandRecord { v: out.v, omega: out.omega, joint_rates: out.joint_rates });
        tick += 1;

        if base_truth <= 0.0 || ee_truth <= 0.0 {
            m.failure = Some(FailureCause::Collision);
            m.failure_detail = Some(if base_truth <= 0.0 { "base".into() } else { "end effector".into() });
            break;
        }
    }

    m.ticks = tick;
    m.success = m.failure.is_none() && phase == Phase::Done;
    m.task_time = m.place_times.last().copied().filter(|_| m.success).unwrap_or(tick as f64 * dt);
    Ok(m)
}
