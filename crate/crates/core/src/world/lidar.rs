use std::f64::consts::PI;

use super::pose::{normalize_angle, Point2, Pose2};
use super::shape::Shape;
use super::WorldError;

/// A planar range scan. Beam angles are relative to the sensor heading.
#[derive(Debug, Clone, PartialEq)]
pub struct LidarScan {
    pub pose: Pose2,
    pub angles: Vec<f64>,
    pub ranges: Vec<f64>,
    pub max_range: f64,
}

impl LidarScan {
    /// World endpoints of beams that hit something (range below max).
    pub fn hit_points(&self) -> impl Iterator<Item = Point2> + '_ {
        self.angles.iter().zip(&self.ranges).filter(|(_, &r)| r < self.max_range).map(move |(&a, &r)| {
            self.pose.position() + Point2::from_polar(r, self.pose.theta + a)
        })
    }

    pub fn hit_count(&self) -> usize {
        self.ranges.iter().filter(|&&r| r < self.max_range).count()
    }
}

/// Beam `i` of `n` points at `2πi/n` from the sensor heading, so beam 0 looks
/// straight ahead.
pub fn beam_angles(n_beams: usize) -> Vec<f64> {
    (0..n_beams).map(|i| normalize_angle(2.0 * PI * i as f64 / n_beams as f64)).collect()
}

/// Casts `n_beams` rays against the given shapes analytically.
///
/// A sensor placed inside any shape reports every range as 0.
pub fn raycast_lidar(shapes: &[Shape], sensor: Pose2, n_beams: usize, max_range: f64) -> Result<LidarScan, WorldError> {
    if n_beams == 0 {
        return Err(WorldError::NoBeams);
    }
    let origin = sensor.position();
    let angles = beam_angles(n_beams);
    if shapes.iter().any(|s| s.contains(origin)) {
        return Ok(LidarScan { pose: sensor, ranges: vec![0.0; n_beams], angles, max_range });
    }
    let ranges = angles
        .iter()
        .map(|&a| {
            let dir = Point2::from_polar(1.0, sensor.theta + a);
            shapes
                .iter()
                .filter_map(|s| s.ray_entry(origin, dir))
                .fold(max_range, f64::min)
        })
        .collect();
    Ok(LidarScan { pose: sensor, angles, ranges, max_range })
}
