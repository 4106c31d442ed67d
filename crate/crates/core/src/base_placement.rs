//! Choosing where the base should be while the arm works on a target.
//!
//! Candidates sit on a ring around the target, 36 positions 10° apart, each
//! with the two headings tangent to the ring. A candidate's cost is the
//! time to drive there from the robot plus 1.05 times the time from there
//! to the next target, both under the rotation-aware lattice cost of
//! [`crate::global_planner`]. The ring grows from 0.60 m to 0.80 m in
//! 0.05 m steps until some candidate is collision-free.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::global_planner::{ForwardField, GlobalPath, GoalField, Lattice, PlanError};
use crate::path_metrics::VelocityLimits;
use crate::world::{OccupancyGrid, Point2, Pose2};

pub const RING_POSITIONS: usize = 36;
pub const CANDIDATES_PER_RING: usize = 2 * RING_POSITIONS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    CounterClockwise,
    Clockwise,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub pose: Pose2,
    pub ring_radius: f64,
    pub direction: Direction,
    /// `2 * position + (0 for counter-clockwise, 1 for clockwise)`.
    pub index: usize,
    pub cost_to: f64,
    pub cost_next: f64,
    pub total: f64,
}

/// The 72 ring candidates around `target`; costs are left at zero.
pub fn generate_candidates(target: Point2, radius: f64) -> Vec<Candidate> {
    let mut out = Vec::with_capacity(CANDIDATES_PER_RING);
    for i in 0..RING_POSITIONS {
        let a = (10.0 * i as f64).to_radians();
        let p = target + Point2::from_polar(radius, a);
        for (k, direction) in [Direction::CounterClockwise, Direction::Clockwise].into_iter().enumerate() {
            let heading = if k == 0 { a + FRAC_PI_2 } else { a - FRAC_PI_2 };
            out.push(Candidate {
                pose: Pose2::new(p.x, p.y, heading),
                ring_radius: radius,
                direction,
                index: 2 * i + k,
                cost_to: 0.0,
                cost_next: 0.0,
                total: 0.0,
            });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlacementConfig {
    pub radii: Vec<f64>,
    pub next_weight: f64,
    /// Relative improvement needed to abandon the incumbent candidate.
    pub hysteresis: f64,
    /// The next leg ends anywhere within this distance of the next target.
    pub next_region_radius: f64,
}

impl Default for PlacementConfig {
    fn default() -> Self {
        PlacementConfig { radii: vec![0.60, 0.65, 0.70, 0.75, 0.80], next_weight: 1.05, hysteresis: 0.05, next_region_radius: 0.8 }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PlacementError {
    #[error("target lies outside the grid")]
    OutsideGrid,
    #[error("no free cell near the target")]
    NoFreeSpace,
    #[error(transparent)]
    Plan(#[from] PlanError),
}

/// Outcome of one placement evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Placement {
    pub chosen: Candidate,
    /// Every surviving candidate with its costs, in index order.
    pub evaluated: Vec<Candidate>,
    /// No ring had a free candidate; `chosen` is the free pose nearest the
    /// target.
    pub fallback: bool,
}

/// Free candidates of the first ring that has any.
fn surviving(target: Point2, grid: &OccupancyGrid, cfg: &PlacementConfig) -> Vec<Candidate> {
    for &r in &cfg.radii {
        let c: Vec<Candidate> =
            generate_candidates(target, r).into_iter().filter(|c| grid.geometry.contains(c.pose.position()) && !grid.is_occupied_at(c.pose.position())).collect();
        if !c.is_empty() {
            return c;
        }
    }
    Vec::new()
}

fn argmin(cands: &[Candidate]) -> Option<Candidate> {
    cands.iter().copied().fold(None, |best: Option<Candidate>, c| match best {
        Some(b) if b.total <= c.total => Some(b),
        _ => Some(c),
    })
}

fn fallback_pose(target: Point2, robot: &Pose2, grid: &OccupancyGrid, limits: &VelocityLimits) -> Result<Pose2, PlacementError> {
    let lat = Lattice::new(grid, limits);
    let diag = grid.geometry.extent().width().hypot(grid.geometry.extent().height());
    let cell = lat.nearest_free(target, diag).ok_or(PlacementError::NoFreeSpace)?;
    let p = lat.center(cell);
    let d = p - robot.position();
    let theta = if d.norm() > 0.0 { d.angle() } else { robot.theta };
    Ok(Pose2::new(p.x, p.y, theta))
}

/// Cost-to-go into the region around a next target. Rebuilt only when the
/// grid or the next target changes.
#[derive(Debug, Clone, Default)]
pub struct NextLegCache {
    key: Option<(Point2, OccupancyGrid)>,
    field: Option<GoalField>,
}

impl NextLegCache {
    fn field(&mut self, grid: &OccupancyGrid, next: Point2, radius: f64, limits: &VelocityLimits) -> Result<&GoalField, PlanError> {
        let stale = match &self.key {
            Some((p, g)) => *p != next || g != grid,
            None => true,
        };
        if stale {
            self.field = Some(GoalField::around(grid, next, radius, limits)?);
            self.key = Some((next, grid.clone()));
        }
        Ok(self.field.as_ref().expect("just filled"))
    }
}

/// Evaluates every surviving candidate and returns the cost argmin, ties
/// broken by candidate index. Also returns the forward cost field so the
/// caller can extract the path to the chosen pose.
pub fn evaluate_placement(
    robot: &Pose2,
    target: Point2,
    next_target: Option<Point2>,
    grid: &OccupancyGrid,
    limits: &VelocityLimits,
    cfg: &PlacementConfig,
    cache: &mut NextLegCache,
) -> Result<(Placement, ForwardField), PlacementError> {
    if !grid.geometry.contains(target) {
        return Err(PlacementError::OutsideGrid);
    }
    let mut cands = surviving(target, grid, cfg);
    if cands.is_empty() {
        let pose = fallback_pose(target, robot, grid, limits)?;
        let field = ForwardField::compute(grid, robot, limits, &[pose])?;
        let cost_to = field.cost_to(&pose);
        let chosen = Candidate {
            pose,
            ring_radius: pose.position().distance(target),
            direction: Direction::CounterClockwise,
            index: 0,
            cost_to,
            cost_next: 0.0,
            total: cost_to,
        };
        return Ok((Placement { chosen, evaluated: vec![chosen], fallback: true }, field));
    }
    let poses: Vec<Pose2> = cands.iter().map(|c| c.pose).collect();
    let field = ForwardField::compute(grid, robot, limits, &poses)?;
    let next = match next_target {
        Some(n) => Some(cache.field(grid, n, cfg.next_region_radius, limits)?),
        None => None,
    };
    for c in &mut cands {
        c.cost_to = field.cost_to(&c.pose);
        c.cost_next = next.map_or(0.0, |f| f.cost_from(grid, &c.pose));
        c.total = c.cost_to + cfg.next_weight * c.cost_next;
    }
    let chosen = argmin(&cands).expect("nonempty");
    Ok((Placement { chosen, evaluated: cands, fallback: false }, field))
}

/// One-shot placement without caching or hysteresis.
pub fn select_base_pose(
    robot: &Pose2,
    target: Point2,
    next_target: Option<Point2>,
    grid: &OccupancyGrid,
    limits: &VelocityLimits,
) -> Result<Candidate, PlacementError> {
    let (p, _) = evaluate_placement(robot, target, next_target, grid, limits, &PlacementConfig::default(), &mut NextLegCache::default())?;
    Ok(p.chosen)
}

/// Per-tick placement with hysteresis: the incumbent candidate is kept
/// unless the new best beats its current cost by more than the margin.
#[derive(Debug, Clone, Default)]
pub struct PlacementTracker {
    pub config: PlacementConfig,
    cache: NextLegCache,
    incumbent: Option<(Point2, usize, f64)>,
}

/// Result of one tracker update.
#[derive(Debug, Clone)]
pub struct TrackedPlacement {
    pub placement: Placement,
    /// Candidate actually pursued (may differ from the argmin).
    pub active: Candidate,
    pub path: Option<GlobalPath>,
}

impl PlacementTracker {
    pub fn new(config: PlacementConfig) -> Self {
        PlacementTracker { config, ..Default::default() }
    }

    pub fn reset(&mut self) {
        self.incumbent = None;
    }

    pub fn update(
        &mut self,
        robot: &Pose2,
        target: Point2,
        next_target: Option<Point2>,
        grid: &OccupancyGrid,
        limits: &VelocityLimits,
    ) -> Result<TrackedPlacement, PlacementError> {
        let (placement, field) = evaluate_placement(robot, target, next_target, grid, limits, &self.config, &mut self.cache)?;
        let best = placement.chosen;
        let mut active = best;
        if let Some((t, idx, radius)) = self.incumbent {
            if t == target && !placement.fallback {
                let current = placement.evaluated.iter().find(|c| c.index == idx && c.ring_radius == radius);
                if let Some(cur) = current {
                    if cur.total.is_finite() && best.total >= cur.total * (1.0 - self.config.hysteresis) {
                        active = *cur;
                    }
                }
            }
        }
        self.incumbent = if placement.fallback { None } else { Some((target, active.index, active.ring_radius)) };
        let path = field.path_to(grid, &active.pose);
        Ok(TrackedPlacement { placement, active, path })
    }
}
