//! Whole-body velocity control of the mobile manipulator.

mod arm;
mod controller;
pub mod qp;

pub use arm::{arm_jacobian, forward_kinematics, holistic_jacobian, joint_positions, ArmParams, EePose};
pub use controller::{
    build_qp, control_step, desired_ee_velocity, obstacle_damper_row, ControlInput, ControlOutput, ControllerConfig,
    DamperParams, DamperRow, MotionBounds, QpWeights,
};
pub use qp::{solve_qp, QpError, QpProblem, QpSolution};
