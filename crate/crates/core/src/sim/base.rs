use crate::local_planner::{integrate_arc, BaseState};
use crate::path_metrics::VelocityLimits;

fn slew(current: f64, target: f64, max_step: f64) -> f64 {
    current + (target - current).clamp(-max_step, max_step)
}

/// Differential-drive base: velocities slew toward `cmd` under the
/// acceleration limits, then the pose follows the constant-velocity arc.
pub fn step_base(state: &BaseState, cmd: (f64, f64), dt: f64, limits: &VelocityLimits) -> BaseState {
    let v = slew(state.v, cmd.0, limits.a_lin_max * dt).clamp(-limits.v_max, limits.v_max);
    let omega = slew(state.omega, cmd.1, limits.a_ang_max * dt).clamp(-limits.omega_max, limits.omega_max);
    BaseState { pose: integrate_arc(&state.pose, v, omega, dt), v, omega }
}
