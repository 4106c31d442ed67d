//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits non-zero if any fails.

mod common;

use std::f64::consts::FRAC_PI_2;
use std::time::Instant;

use common::{brute_force_qp, fd_jacobian, lattice_dijkstra, random_grid, random_qp, Rng};
use motm_core::base_placement::{generate_candidates, PlacementConfig};
use motm_core::global_planner::plan_global;
use motm_core::holistic::{holistic_jacobian, obstacle_damper_row, solve_qp, ArmParams, DamperParams};
use motm_core::local_planner::grid_penalty_scale;
use motm_core::path_metrics::{bezier_cost, bezier_curve, path_rtr, VelocityLimits};
use motm_core::sim::{run_trial, Mode, SimConfig, TaskSpec, TrialMetrics};
use motm_core::world::{angle_diff, Point2, Pose2, ScenarioConfig};
use nalgebra::DMatrix;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn trial(s: &ScenarioConfig, seed: u64, mode: Mode, cfg: &SimConfig) -> TrialMetrics {
    run_trial(s, &TaskSpec::random(seed, s.slots.len(), mode), seed, cfg).expect("valid trial setup")
}

fn fig3() -> Outcome {
    let lim = VelocityLimits { v_max: 0.5, omega_max: 100f64.to_radians(), ..VelocityLimits::default() };
    let (s, g) = (Pose2::new(0.0, 0.0, 30f64.to_radians()), Pose2::new(4.0, 0.0, -90f64.to_radians()));
    let rtr = path_rtr(&[s.position(), g.position()], s.theta, g.theta, &lim).map_err(|e| e.to_string())?;
    let bez = bezier_cost(&s, &g, &lim);
    let len = bezier_curve(&s, &g).map_err(|e| e.to_string())?.arc_length(64);
    check(
        (rtr - 9.2).abs() <= 0.05 && (bez - 8.7).abs() <= 0.05 && (len - 4.35).abs() <= 0.05,
        format!("rtr {rtr:.3} s, bezier {bez:.3} s, arc {len:.3} m"),
    )
}

fn damper() -> Outcome {
    let p = DamperParams::default();
    let j = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.5, 0.0, 1.0, 0.5]);
    let mut got = Vec::new();
    for d in [0.6, 0.25, 0.425] {
        got.push(obstacle_damper_row(d, Point2::new(1.0, 0.0), &j, &p).ok_or(format!("no row at {d}"))?.b);
    }
    let want = [0.6, 0.0, 0.3];
    let err = got.iter().zip(&want).map(|(g, w)| (g - w).abs()).fold(0.0, f64::max);
    check(err <= 1e-15, format!("bounds {got:?}, max error {err:e}"))
}

fn penalty_scale() -> Outcome {
    let k = [grid_penalty_scale(0.0), grid_penalty_scale(3.0), grid_penalty_scale(1.5)];
    let sweep: Vec<f64> = (0..1000).map(|i| grid_penalty_scale(6.0 * i as f64 / 999.0)).collect();
    let monotone = sweep.windows(2).all(|w| w[0] <= w[1]);
    check(k == [0.1, 1.0, 0.5] && monotone, format!("k(0) {}, k(3) {}, k(1.5) {}, monotone {monotone}", k[0], k[1], k[2]))
}

fn candidates(recorded: &[TrialMetrics]) -> Outcome {
    let target = Point2::new(0.3, -1.2);
    for &r in &PlacementConfig::default().radii {
        let c = generate_candidates(target, r);
        if c.len() != 72 {
            return Err(format!("{} candidates at radius {r}", c.len()));
        }
        for (i, cand) in c.iter().enumerate() {
            let a = (10.0 * (i / 2) as f64).to_radians();
            let off = cand.pose.position() - target;
            let tangent = if i % 2 == 0 { a + FRAC_PI_2 } else { a - FRAC_PI_2 };
            if (off.norm() - r).abs() > 1e-12 || angle_diff(off.angle(), a).abs() > 1e-9 || angle_diff(cand.pose.theta, tangent).abs() > 1e-12 {
                return Err(format!("candidate {i} at radius {r}: {cand:?}"));
            }
        }
    }
    let mut ticks = 0;
    for m in recorded {
        for rec in m.placements.iter().filter(|p| !p.fallback) {
            ticks += 1;
            let ring = generate_candidates(rec.target, rec.chosen.ring_radius);
            for e in &rec.evaluated {
                let g = &ring[e.index];
                if e.pose != g.pose || e.ring_radius != rec.chosen.ring_radius {
                    return Err(format!("{} seed {} tick {}: candidate {} off the ring", m.scenario, m.seed, rec.tick, e.index));
                }
                if rec.chosen.total > e.total {
                    return Err(format!("{} seed {} tick {}: {} beats the chosen {}", m.scenario, m.seed, rec.tick, e.total, rec.chosen.total));
                }
            }
            if !rec.evaluated.contains(&rec.chosen) {
                return Err(format!("{} seed {} tick {}: chosen candidate was not evaluated", m.scenario, m.seed, rec.tick));
            }
        }
    }
    check(ticks > 0, format!("72 per ring, argmin holds on {ticks} recorded ticks over {} trials", recorded.len()))
}

fn dijkstra_oracle() -> Outcome {
    let lim = VelocityLimits::default();
    let mut rng = Rng::new(2024);
    let started = Instant::now();
    let (mut found, mut blocked) = (0, 0);
    for case in 0..50 {
        let (w, h) = (4 + rng.below(29), 4 + rng.below(29));
        let density = rng.range(0.0, 0.35);
        let grid = random_grid(&mut rng, w, h, density);
        let at = |x, y, th| {
            let p = grid.geometry.cell_center(x, y);
            Pose2::new(p.x, p.y, th)
        };
        let start = at(rng.below(w), rng.below(h), rng.range(-3.1, 3.1));
        // Occupied goals are snapped to a free cell by the planner, which
        // the oracle does not model.
        let (gx, gy) = loop {
            let (x, y) = (rng.below(w), rng.below(h));
            if !grid.get(x, y) {
                break (x, y);
            }
        };
        let goal = at(gx, gy, rng.range(-3.1, 3.1));
        let want = lattice_dijkstra(&grid, &start, &goal, &lim);
        match (plan_global(&grid, &start, &goal, &lim).ok(), want) {
            (Some(p), Some(c)) if p.total_cost == c => found += 1,
            (None, None) => blocked += 1,
            (got, want) => return Err(format!("case {case}: planner {:?}, oracle {want:?}", got.map(|p| p.total_cost))),
        }
    }
    let secs = started.elapsed().as_secs_f64();
    check(secs < 60.0, format!("50 grids exact ({found} paths, {blocked} unreachable) in {secs:.1} s"))
}

fn qp(replayed: &TrialMetrics) -> Outcome {
    let mut rng = Rng::new(77);
    let mut worst = 0.0f64;
    for case in 0..200 {
        let p = random_qp(&mut rng);
        let want = brute_force_qp(&p).ok_or(format!("case {case}: enumeration found nothing"))?;
        let got = solve_qp(&p).map_err(|e| format!("case {case}: {e}"))?;
        worst = worst.max((&got.x - &want).amax()).max(p.max_violation(&got.x));
    }
    let tick_worst = replayed.max_qp_violation();
    check(
        worst < 1e-6 && tick_worst < 1e-6 && replayed.qp_max_violation.len() == replayed.ticks,
        format!("200 problems within {worst:.1e}; {} ticks of a full trial within {tick_worst:.1e}", replayed.ticks),
    )
}

fn jacobian() -> Outcome {
    let arm = ArmParams::default();
    let mut rng = Rng::new(31);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let base = Pose2::new(rng.range(-3.0, 3.0), rng.range(-3.0, 3.0), rng.range(-3.0, 3.0));
        let q: Vec<f64> = (0..arm.n_joints()).map(|_| rng.range(-arm.joint_limit, arm.joint_limit)).collect();
        let j = holistic_jacobian(&base, &arm, &q);
        worst = worst.max((&j - fd_jacobian(&base, &arm, &q, 1e-6)).norm() / j.norm());
    }
    check(worst < 1e-5, format!("100 states, worst relative error {worst:.1e}"))
}

fn clearance(exp2: &[TrialMetrics]) -> Outcome {
    let min = |f: fn(&TrialMetrics) -> f64| exp2.iter().map(f).fold(f64::INFINITY, f64::min);
    let (sensed, truth) = (min(TrialMetrics::min_ee_obstacle_dist), min(TrialMetrics::min_ee_truth_dist));
    let ok = exp2.iter().filter(|m| m.success).count();
    check(sensed >= 0.23 && truth >= 0.23, format!("{} trials ({ok} succeeded), min EE distance {sensed:.3} m sensed, {truth:.3} m true", exp2.len()))
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn benefit(otm: &[TrialMetrics], stop: &[TrialMetrics]) -> Outcome {
    let (a, b) = (mean(otm.iter().map(|m| m.task_time)), mean(stop.iter().map(|m| m.task_time)));
    let gain = 100.0 * (b - a) / b;
    check(gain > 20.0, format!("{} pairs, mean {a:.1} s vs {b:.1} s, {gain:.1} % faster", otm.len()))
}

fn completion(exp1: &[TrialMetrics], exp1a: &[TrialMetrics]) -> Outcome {
    let count = |ms: &[TrialMetrics]| ms.iter().filter(|m| m.success).count();
    let fails = |ms: &[TrialMetrics]| {
        ms.iter().filter(|m| !m.success).map(|m| format!("{}#{} {:?}", m.scenario, m.seed, m.failure)).collect::<Vec<_>>()
    };
    let (a, b) = (count(exp1), count(exp1a));
    let mut failed = fails(exp1);
    failed.extend(fails(exp1a));
    check(a >= 18 && b >= 18, format!("exp1 {a}/{}, exp1a {b}/{} {failed:?}", exp1.len(), exp1a.len()))
}

fn determinism(first: &TrialMetrics, s: &ScenarioConfig, cfg: &SimConfig) -> Outcome {
    let again = trial(s, first.seed, first.mode.expect("mode recorded"), cfg);
    let (a, b) = (first.command_log(), again.command_log());
    check(a.as_bytes() == b.as_bytes(), format!("{} bytes, {} ticks, digest {:016x}", a.len(), first.ticks, first.command_log_digest()))
}

fn magnitude(exp1: &[TrialMetrics]) -> Outcome {
    let times: Vec<f64> = exp1.iter().filter(|m| m.success).map(|m| m.task_time).collect();
    let lo = times.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = times.iter().copied().fold(0.0, f64::max);
    check(!times.is_empty() && lo >= 40.0 && hi <= 200.0, format!("{} successful trials between {lo:.1} s and {hi:.1} s", times.len()))
}

fn main() {
    let started = Instant::now();
    let cfg = SimConfig::default();
    let recording = SimConfig { record_placements: true, ..cfg.clone() };
    let (exp1, exp1a, exp2) = (ScenarioConfig::experiment_1(), ScenarioConfig::experiment_1a(), ScenarioConfig::experiment_2());

    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    results.push((1, "path cost heuristics", fig3()));
    results.push((2, "velocity damper", damper()));
    results.push((3, "grid penalty scale", penalty_scale()));
    results.push((5, "global planner oracle", dijkstra_oracle()));
    results.push((7, "holistic jacobian", jacobian()));

    // Placement records are kept for the first few trials only; the
    // remaining ones would just repeat the same check.
    let otm: Vec<TrialMetrics> =
        (1..=20).map(|seed| trial(&exp1, seed, Mode::OnTheMove, if seed <= 3 { &recording } else { &cfg })).collect();
    let stop: Vec<TrialMetrics> = (1..=20).map(|seed| trial(&exp1, seed, Mode::StopAndManipulate, &cfg)).collect();
    let otm_1a: Vec<TrialMetrics> = (1..=20).map(|seed| trial(&exp1a, seed, Mode::OnTheMove, &cfg)).collect();
    let looping: Vec<TrialMetrics> = (1..=10).map(|seed| trial(&exp2, seed, Mode::OnTheMove, &cfg)).collect();

    results.push((4, "placement candidates", candidates(&otm[..3])));
    results.push((6, "qp solver", qp(&otm[0])));
    results.push((8, "end effector clearance", clearance(&looping)));
    results.push((9, "on-the-move benefit", benefit(&otm, &stop)));
    results.push((10, "task completion", completion(&otm, &otm_1a)));
    results.push((11, "determinism", determinism(&otm[0], &exp1, &recording)));
    let mut all_exp1 = otm.clone();
    all_exp1.extend(stop);
    results.push((12, "task time magnitude", magnitude(&all_exp1)));
    results.sort_by_key(|r| r.0);

    let mut failed = 0;
    for (n, name, outcome) in &results {
        match outcome {
            Ok(d) => println!("PASS {n:>2} {name}: {d}"),
            Err(d) => {
                failed += 1;
                println!("FAIL {n:>2} {name}: {d}");
            }
        }
    }
    println!("{} of {} criteria passed in {:.0} s", results.len() - failed, results.len(), started.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
