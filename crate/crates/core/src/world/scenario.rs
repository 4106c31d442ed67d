use std::path::Path;

use serde::{Deserialize, Serialize};

use super::pose::{Point2, Pose2};
use super::shape::{Rect, Shape};
use super::WorldError;
use crate::sim::RobotParams;

pub const SLOT_COUNT: usize = 12;

/// A looping route for one dynamic agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentRoute {
    pub waypoints: Vec<Point2>,
    /// Cruise speed, m/s.
    pub speed: f64,
    /// Footprint radius, m.
    pub radius: f64,
    /// Distance along the closed route at which the agent starts, m.
    #[serde(default)]
    pub start_offset: f64,
}

/// Scenario geometry, task layout and robot description. Loaded from JSON
/// (see `scenarios/scenario.schema.json`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub extent: Rect,
    /// Tall static obstacles: seen by the lidar and avoided by base and arm.
    #[serde(default)]
    pub obstacles: Vec<Shape>,
    /// Table footprint. Blocks the base; the tabletop sits above the lidar
    /// plane and below the arm's working height.
    #[serde(default = "default_table")]
    pub table: Rect,
    pub slots: Vec<Point2>,
    pub drops: Vec<Pose2>,
    #[serde(default)]
    pub agents: Vec<AgentRoute>,
    pub robot_start: Pose2,
    #[serde(default)]
    pub robot: RobotParams,
    #[serde(default)]
    pub seed: u64,
}

fn default_table() -> Rect {
    Rect::centered(0.0, 0.0, 2.4, 0.8)
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, WorldError> {
        let cfg: ScenarioConfig = serde_json::from_str(text).map_err(|e| WorldError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, WorldError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| WorldError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        if self.extent.is_empty() || !self.extent.width().is_finite() || !self.extent.height().is_finite() {
            return Err(WorldError::EmptyExtent);
        }
        if self.slots.len() != SLOT_COUNT {
            return Err(WorldError::InvalidScenario(format!("expected {SLOT_COUNT} object slots, got {}", self.slots.len())));
        }
        if self.drops.len() != 2 {
            return Err(WorldError::InvalidScenario(format!("expected 2 drop locations, got {}", self.drops.len())));
        }
        let reach = self.robot.reach;
        for (i, s) in self.slots.iter().enumerate() {
            if !self.extent.contains(*s) {
                return Err(WorldError::InvalidScenario(format!("slot {i} lies outside the extent")));
            }
            if self.table.contains(*s) && self.table.boundary_distance(*s) > reach {
                return Err(WorldError::InvalidScenario(format!("slot {i} is beyond arm reach from the table edge")));
            }
        }
        for (i, a) in self.agents.iter().enumerate() {
            if a.waypoints.is_empty() || !(a.speed > 0.0) || !(a.radius > 0.0) {
                return Err(WorldError::InvalidScenario(format!("agent {i} needs waypoints, speed > 0 and radius > 0")));
            }
        }
        Ok(())
    }

    /// Geometry the base must avoid: tall obstacles plus the table.
    pub fn base_shapes(&self) -> Vec<Shape> {
        let mut v = self.obstacles.clone();
        v.push(Shape::Rect(self.table));
        v
    }

    /// The pre-generated arm obstacle map: tall obstacles only.
    pub fn arm_shapes(&self) -> Vec<Shape> {
        self.obstacles.clone()
    }

    /// Everything the lidar can see, given current agent positions.
    pub fn lidar_shapes(&self, agents: impl IntoIterator<Item = (Point2, f64)>) -> Vec<Shape> {
        let mut v = self.obstacles.clone();
        v.extend(agents.into_iter().map(|(c, r)| Shape::circle(c, r)));
        v
    }

    /// Experiment 1: 2.4 × 0.8 m table in an 8 × 6 m walled room, twelve
    /// slots 0.1 m inside the long edges and two drop points beyond the short
    /// edges.
    pub fn experiment_1() -> Self {
        let (hx, hy, wall) = (4.0, 3.0, 0.1);
        let obstacles = vec![
            Shape::Rect(Rect::new(-hx, -hy, hx, -hy + wall)),
            Shape::Rect(Rect::new(-hx, hy - wall, hx, hy)),
            Shape::Rect(Rect::new(-hx, -hy, -hx + wall, hy)),
            Shape::Rect(Rect::new(hx - wall, -hy, hx, hy)),
        ];
        let table = default_table();
        let xs = [-1.0, -0.6, -0.2, 0.2, 0.6, 1.0];
        let inset = 0.1;
        let slots = xs
            .iter()
            .map(|&x| Point2::new(x, table.max_y - inset))
            .chain(xs.iter().map(|&x| Point2::new(x, table.min_y + inset)))
            .collect();
        ScenarioConfig {
            name: "exp1".into(),
            extent: Rect::new(-hx, -hy, hx, hy),
            obstacles,
            table,
            slots,
            drops: vec![Pose2::new(-2.0, 0.0, 0.0), Pose2::new(2.0, 0.0, 0.0)],
            agents: Vec::new(),
            robot_start: Pose2::new(-2.5, -1.3, 0.0),
            robot: RobotParams::default(),
            seed: 0,
        }
    }

    /// Experiment 1a: experiment 1 plus two 0.4 × 0.4 m cuboids beside the
    /// long edges of the table.
    pub fn experiment_1a() -> Self {
        let mut cfg = Self::experiment_1();
        cfg.name = "exp1a".into();
        cfg.obstacles.push(Shape::Rect(Rect::new(-0.6, 1.75, -0.2, 2.15)));
        cfg.obstacles.push(Shape::Rect(Rect::new(0.4, -2.15, 0.8, -1.75)));
        cfg
    }

    /// Experiment 2: experiment 1 plus four agents looping around the work
    /// area at 0.3 m/s, evenly spaced.
    pub fn experiment_2() -> Self {
        let mut cfg = Self::experiment_1();
        cfg.name = "exp2".into();
        let (ax, ay) = (3.4, 2.0);
        let route = vec![Point2::new(-ax, -ay), Point2::new(ax, -ay), Point2::new(ax, ay), Point2::new(-ax, ay)];
        let perimeter = 4.0 * (ax + ay);
        cfg.agents = (0..4)
            .map(|k| AgentRoute { waypoints: route.clone(), speed: 0.3, radius: 0.2, start_offset: perimeter * k as f64 / 4.0 })
            .collect();
        cfg
    }

    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "exp1" => Some(Self::experiment_1()),
            "exp1a" => Some(Self::experiment_1a()),
            "exp2" => Some(Self::experiment_2()),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_validate() {
        for name in ["exp1", "exp1a", "exp2"] {
            let cfg = ScenarioConfig::builtin(name).unwrap();
            cfg.validate().unwrap();
            assert_eq!(cfg.slots.len(), 12);
            assert_eq!(cfg.table.width(), 2.4);
            assert!((cfg.table.height() - 0.8).abs() < 1e-12);
        }
        assert_eq!(ScenarioConfig::experiment_2().agents.len(), 4);
    }

    #[test]
    fn slots_are_within_reach_of_the_table_edge() {
        let cfg = ScenarioConfig::experiment_1();
        for s in &cfg.slots {
            assert!(cfg.table.contains_strict(*s));
            assert!((cfg.table.boundary_distance(*s) - 0.1).abs() < 1e-9);
        }
    }

    #[test]
    fn json_round_trip() {
        let cfg = ScenarioConfig::experiment_2();
        let back = ScenarioConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn rejects_wrong_slot_count() {
        let mut cfg = ScenarioConfig::experiment_1();
        cfg.slots.pop();
        assert!(matches!(cfg.validate(), Err(WorldError::InvalidScenario(_))));
        assert!(matches!(ScenarioConfig::from_json("{"), Err(WorldError::Parse(_))));
    }
}
