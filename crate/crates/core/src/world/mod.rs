//! Scenario geometry, occupancy grids, distance fields, simulated lidar and
//! the layered obstacle maps built from them.

mod distance;
mod grid;
mod layers;
mod lidar;
mod pose;
mod scenario;
mod shape;

pub use distance::{DistanceField, ObstacleQuery};
pub use grid::{inflate, integrate_scan, rasterize_scenario, rasterize_shapes, GridGeometry, OccupancyGrid};
pub use layers::DynamicLayer;
pub use lidar::{beam_angles, raycast_lidar, LidarScan};
pub use pose::{angle_diff, normalize_angle, Point2, Pose2};
pub use scenario::{AgentRoute, ScenarioConfig, SLOT_COUNT};
pub use shape::{Rect, Shape};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WorldError {
    #[error("grid resolution must be positive and finite, got {0}")]
    InvalidResolution(f64),
    #[error("scenario extent is empty")]
    EmptyExtent,
    #[error("inflation radius must be non-negative, got {0}")]
    NegativeRadius(f64),
    #[error("lidar needs at least one beam")]
    NoBeams,
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("scenario parse error: {0}")]
    Parse(String),
    #[error("cannot read scenario {0}")]
    Io(String),
}
