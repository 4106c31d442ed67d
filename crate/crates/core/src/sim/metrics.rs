use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::task::Mode;
use crate::base_placement::Candidate;
use crate::world::Point2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureCause {
    Timeout,
    Collision,
}

impl std::fmt::Display for FailureCause {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FailureCause::Timeout => "timeout",
            FailureCause::Collision => "collision",
        })
    }
}

/// One tick of base placement, kept for offline checks of the argmin.
#[derive(Debug, Clone, PartialEq)]
pub struct PlacementRecord {
    pub tick: usize,
    pub target: Point2,
    pub evaluated: Vec<Candidate>,
    /// Cheapest candidate of this tick.
    pub chosen: Candidate,
    pub fallback: bool,
}

/// Commands applied at one tick.
#[derive(Debug, Clone, PartialEq)]
pub struct CommandRecord {
    pub v: f64,
    pub omega: f64,
    pub joint_rates: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrialMetrics {
    pub scenario: String,
    pub seed: u64,
    pub mode: Option<Mode>,
    pub dt: f64,
    pub success: bool,
    pub failure: Option<FailureCause>,
    /// What was hit, for collisions.
    pub failure_detail: Option<String>,
    pub ticks: usize,
    /// Time of the last place, or the elapsed time on failure.
    pub task_time: f64,
    pub pick_times: Vec<f64>,
    pub place_times: Vec<f64>,
    pub attach_count: usize,
    pub detach_count: usize,
    /// Distance from the end effector to the nearest detected obstacle.
    pub ee_obstacle_dist: Vec<f64>,
    /// Distance from the end effector to the nearest true obstacle surface.
    pub ee_truth_dist: Vec<f64>,
    /// Gap between the base footprint and the nearest true obstacle.
    pub base_clearance: Vec<f64>,
    pub v: Vec<f64>,
    pub omega: Vec<f64>,
    pub qp_max_violation: Vec<f64>,
    pub damper_active: Vec<bool>,
    pub qp_infeasible_ticks: usize,
    pub commands: Vec<CommandRecord>,
    pub placements: Vec<PlacementRecord>,
    /// Local planner expansions per tick.
    pub local_expansions: Vec<usize>,
}

fn min_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::INFINITY, f64::min)
}

impl TrialMetrics {
    pub fn min_ee_obstacle_dist(&self) -> f64 {
        min_of(&self.ee_obstacle_dist)
    }

    pub fn min_ee_truth_dist(&self) -> f64 {
        min_of(&self.ee_truth_dist)
    }

    pub fn min_base_clearance(&self) -> f64 {
        min_of(&self.base_clearance)
    }

    pub fn max_qp_violation(&self) -> f64 {
        self.qp_max_violation.iter().copied().fold(0.0, f64::max)
    }

    /// Every applied command, one line per tick, with shortest round-trip
    /// float formatting.
    pub fn command_log(&self) -> String {
        let mut s = String::with_capacity(self.commands.len() * 64);
        for (i, c) in self.commands.iter().enumerate() {
            let _ = write!(s, "{i} {:?} {:?}", c.v, c.omega);
            for q in &c.joint_rates {
                let _ = write!(s, " {q:?}");
            }
            s.push('\n');
        }
        s
    }

    /// 64-bit FNV-1a of [`Self::command_log`].
    pub fn command_log_digest(&self) -> u64 {
        self.command_log().bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
    }

    pub fn summary(&self) -> TrialSummary {
        TrialSummary {
            scenario: self.scenario.clone(),
            seed: self.seed,
            mode: self.mode,
            success: self.success,
            failure: self.failure,
            failure_detail: self.failure_detail.clone(),
            task_time: self.task_time,
            ticks: self.ticks,
            dt: self.dt,
            pick_times: self.pick_times.clone(),
            place_times: self.place_times.clone(),
            attach_count: self.attach_count,
            detach_count: self.detach_count,
            min_ee_obstacle_dist: finite_or_none(self.min_ee_obstacle_dist()),
            min_ee_truth_dist: finite_or_none(self.min_ee_truth_dist()),
            min_base_clearance: finite_or_none(self.min_base_clearance()),
            max_qp_violation: self.max_qp_violation(),
            qp_infeasible_ticks: self.qp_infeasible_ticks,
            damper_active_ticks: self.damper_active.iter().filter(|&&d| d).count(),
            command_log_fnv1a: format!("{:016x}", self.command_log_digest()),
        }
    }

    /// Time series as CSV: `tick,ee_obstacle_dist,base_clearance,v,omega`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("tick,ee_obstacle_dist,base_clearance,v,omega\n");
        for i in 0..self.ticks {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                i,
                fmt_num(self.ee_obstacle_dist[i]),
                fmt_num(self.base_clearance[i]),
                fmt_num(self.v[i]),
                fmt_num(self.omega[i])
            );
        }
        s
    }
}

fn finite_or_none(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

fn fmt_num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:?}")
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// Scalar part of [`TrialMetrics`], written as the JSON summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub scenario: String,
    pub seed: u64,
    pub mode: Option<Mode>,
    pub success: bool,
    pub failure: Option<FailureCause>,
    pub failure_detail: Option<String>,
    pub task_time: f64,
    pub ticks: usize,
    pub dt: f64,
    pub pick_times: Vec<f64>,
    pub place_times: Vec<f64>,
    pub attach_count: usize,
    pub detach_count: usize,
    pub min_ee_obstacle_dist: Option<f64>,
    pub min_ee_truth_dist: Option<f64>,
    pub min_base_clearance: Option<f64>,
    pub max_qp_violation: f64,
    pub qp_infeasible_ticks: usize,
    pub damper_active_ticks: usize,
    pub command_log_fnv1a: String,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_writes_infinity_as_text() {
        let m = TrialMetrics {
            ticks: 1,
            ee_obstacle_dist: vec![f64::INFINITY],
            base_clearance: vec![0.5],
            v: vec![0.1],
            omega: vec![0.0],
            ..Default::default()
        };
        assert_eq!(m.to_csv(), "tick,ee_obstacle_dist,base_clearance,v,omega\n0,inf,0.5,0.1,0.0\n");
        assert_eq!(m.summary().min_ee_obstacle_dist, None);
    }

    #[test]
    fn command_log_is_exact() {
        let m = TrialMetrics {
            commands: vec![CommandRecord { v: 0.1, omega: -1e-20, joint_rates: vec![0.0, 1.5] }],
            ..Default::default()
        };
        assert_eq!(m.command_log(), "0 0.1 -1e-20 0.0 1.5\n");
        // FNV-1a of the empty string is the offset basis.
        assert_eq!(TrialMetrics::default().command_log_digest(), 0xcbf2_9ce4_8422_2325);
    }
}
