use serde::{Deserialize, Serialize};

use crate::holistic::ArmParams;
use crate::path_metrics::VelocityLimits;

/// Physical description of the mobile manipulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RobotParams {
    /// Base footprint radius, m.
    pub base_radius: f64,
    /// Extra clearance added to the base radius for planning, m.
    pub inflation_margin: f64,
    pub limits: VelocityLimits,
    pub arm: ArmParams,
    /// Time the gripper must stay on target to grasp or release, s.
    pub grasp_dwell: f64,
    /// m
    pub reach: f64,
    /// m
    pub grasp_tolerance: f64,
    /// m
    pub drop_tolerance: f64,
}

impl Default for RobotParams {
    fn default() -> Self {
        RobotParams {
            base_radius: 0.45,
            inflation_margin: 0.1,
            limits: VelocityLimits::default(),
            arm: ArmParams::default(),
            grasp_dwell: 0.8,
            reach: 0.855,
            grasp_tolerance: 0.03,
            drop_tolerance: 0.05,
        }
    }
}

impl RobotParams {
    pub fn inflation_radius(&self) -> f64 {
        self.base_radius + self.inflation_margin
    }

    pub fn is_valid(&self) -> bool {
        [self.base_radius, self.grasp_dwell, self.reach, self.grasp_tolerance, self.drop_tolerance].iter().all(|&x| x > 0.0)
            && self.inflation_margin >= 0.0
            && self.limits.is_valid()
            && self.arm.is_valid()
            && (self.arm.reach() - self.reach).abs() < 1e-9
    }
}
