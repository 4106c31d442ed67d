//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::f64::consts::{FRAC_PI_4, SQRT_2};

use motm_core::holistic::{ArmParams, QpProblem};
use motm_core::path_metrics::VelocityLimits;
use motm_core::world::{angle_diff, normalize_angle, GridGeometry, OccupancyGrid, Point2, Pose2};
use nalgebra::{DMatrix, DVector, Matrix3};
use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;

pub struct Rng(SplitMix64);

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng(SplitMix64::seed_from_u64(seed))
    }

    pub fn unit(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    pub fn below(&mut self, n: usize) -> usize {
        (self.0.next_u64() % n as u64) as usize
    }
}

pub fn random_grid(rng: &mut Rng, width: usize, height: usize, density: f64) -> OccupancyGrid {
    let geo = GridGeometry::new(Point2::new(0.0, 0.0), 0.1, width, height).unwrap();
    let mut g = OccupancyGrid::new(geo);
    for iy in 0..height {
        for ix in 0..width {
            if rng.unit() < density {
                g.set(ix, iy, true);
            }
        }
    }
    g
}

const MOVES: [(i64, i64); 8] = [(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)];

/// Plain Dijkstra over (cell, arrival direction) with a separate goal node.
/// Turning between directions k and d costs min(|k−d|, 8−|k−d|) eighth
/// turns at full angular speed; a straight or diagonal move costs its
/// center-to-center length at full speed. The first move turns from the
/// exact start heading, and reaching the goal cell adds the turn onto the
/// exact goal heading.
pub fn lattice_dijkstra(grid: &OccupancyGrid, start: &Pose2, goal: &Pose2, lim: &VelocityLimits) -> Option<f64> {
    let (w, h) = (grid.width() as i64, grid.height() as i64);
    let res = grid.resolution();
    let geo = &grid.geometry;
    let (sx, sy) = geo.world_to_cell(start.position())?;
    let (gx, gy) = geo.world_to_cell(goal.position())?;
    let free = |x: i64, y: i64| x >= 0 && y >= 0 && x < w && y < h && !grid.get(x as usize, y as usize);
    let legal = |x: i64, y: i64, d: usize| {
        let (dx, dy) = MOVES[d];
        free(x + dx, y + dy) && (dx == 0 || dy == 0 || (free(x + dx, y) && free(x, y + dy)))
    };
    let move_len = |d: usize| if d % 2 == 1 { res * SQRT_2 } else { res };
    let octant = |d: usize| normalize_angle(d as f64 * FRAC_PI_4);

    let n = (w * h) as usize * 8;
    let goal_node = n;
    let mut dist = vec![f64::INFINITY; n + 1];
    let mut heap = BinaryHeap::new();
    let push = |dist: &mut Vec<f64>, heap: &mut BinaryHeap<Reverse<(u64, usize)>>, node: usize, c: f64| {
        if c < dist[node] {
            dist[node] = c;
            heap.push(Reverse((c.to_bits(), node)));
        }
    };
    if (sx, sy) == (gx, gy) {
        push(&mut dist, &mut heap, goal_node, angle_diff(goal.theta, start.theta).abs() / lim.omega_max);
    }
    for d in 0..8 {
        if legal(sx as i64, sy as i64, d) {
            let (nx, ny) = (sx as i64 + MOVES[d].0, sy as i64 + MOVES[d].1);
            let c = angle_diff(octant(d), start.theta).abs() / lim.omega_max + move_len(d) / lim.v_max;
            push(&mut dist, &mut heap, ((ny * w + nx) as usize) * 8 + d, c);
        }
    }
    while let Some(Reverse((bits, node))) = heap.pop() {
        let c = f64::from_bits(bits);
        if c > dist[node] {
            continue;
        }
        if node == goal_node {
            return Some(c);
        }
        let (cell, k) = (node / 8, node % 8);
        let (x, y) = ((cell as i64) % w, (cell as i64) / w);
        if (x as usize, y as usize) == (gx, gy) {
            push(&mut dist, &mut heap, goal_node, c + angle_diff(goal.theta, octant(k)).abs() / lim.omega_max);
        }
        for d in 0..8 {
            if legal(x, y, d) {
                let diff = (k as i64 - d as i64).rem_euclid(8) as usize;
                let steps = diff.min(8 - diff);
                let edge = steps as f64 * FRAC_PI_4 / lim.omega_max + move_len(d) / lim.v_max;
                let (nx, ny) = (x + MOVES[d].0, y + MOVES[d].1);
                push(&mut dist, &mut heap, ((ny * w + nx) as usize) * 8 + d, c + edge);
            }
        }
    }
    None
}

/// A feasible, strictly convex QP with every constraint type present in
/// random amounts.
pub fn random_qp(rng: &mut Rng) -> QpProblem {
    let n = 2 + rng.below(3);
    let m = DMatrix::from_fn(n, n, |_, _| rng.range(-1.0, 1.0));
    let h = &m * m.transpose() + DMatrix::identity(n, n) * 0.1;
    let f = DVector::from_fn(n, |_, _| rng.range(-2.0, 2.0));
    // Everything is built around a known feasible point.
    let x0 = DVector::from_fn(n, |_, _| rng.range(-0.5, 0.5));
    let mut p = QpProblem::new(h, f);
    let n_eq = rng.below(2).min(n - 1);
    if n_eq > 0 {
        let a = DMatrix::from_fn(n_eq, n, |_, _| rng.range(-1.0, 1.0));
        let b = &a * &x0;
        p = p.with_equalities(a, b);
    }
    let n_in = rng.below(4);
    if n_in > 0 {
        let a = DMatrix::from_fn(n_in, n, |_, _| rng.range(-1.0, 1.0));
        let b = &a * &x0 + DVector::from_fn(n_in, |_, _| rng.range(0.0, 0.5));
        p = p.with_inequalities(a, b);
    }
    let mut lb = DVector::from_element(n, f64::NEG_INFINITY);
    let mut ub = DVector::from_element(n, f64::INFINITY);
    for i in 0..n {
        if rng.unit() < 0.6 {
            lb[i] = x0[i] - rng.range(0.0, 0.5);
        }
        if rng.unit() < 0.6 {
            ub[i] = x0[i] + rng.range(0.0, 0.5);
        }
    }
    p.with_bounds(lb, ub)
}

/// Exhaustive active-set enumeration: solve the KKT system for every subset
/// of inequality rows held at equality and keep the best feasible point.
pub fn brute_force_qp(p: &QpProblem) -> Option<DVector<f64>> {
    let n = p.dim();
    let mut rows: Vec<(DVector<f64>, f64)> = Vec::new();
    for i in 0..p.a_ineq.nrows() {
        rows.push((p.a_ineq.row(i).transpose(), p.b_ineq[i]));
    }
    for i in 0..n {
        let e = DVector::from_fn(n, |k, _| if k == i { 1.0 } else { 0.0 });
        if p.ub[i].is_finite() {
            rows.push((e.clone(), p.ub[i]));
        }
        if p.lb[i].is_finite() {
            rows.push((-e, -p.lb[i]));
        }
    }
    let n_eq = p.a_eq.nrows();
    let mut best: Option<(f64, DVector<f64>)> = None;
    for mask in 0u32..(1 << rows.len()) {
        let active: Vec<usize> = (0..rows.len()).filter(|i| mask & (1 << i) != 0).collect();
        let k = n_eq + active.len();
        if k > n {
            continue;
        }
        let mut kkt = DMatrix::zeros(n + k, n + k);
        let mut rhs = DVector::zeros(n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(&p.h);
        rhs.rows_mut(0, n).copy_from(&(-&p.f));
        for r in 0..k {
            let (a, b) = if r < n_eq { (p.a_eq.row(r).transpose(), p.b_eq[r]) } else { rows[active[r - n_eq]].clone() };
            for j in 0..n {
                kkt[(n + r, j)] = a[j];
                kkt[(j, n + r)] = a[j];
            }
            rhs[n + r] = b;
        }
        let Some(sol) = kkt.lu().solve(&rhs) else { continue };
        let x = sol.rows(0, n).into_owned();
        if !x.iter().all(|v| v.is_finite()) || p.max_violation(&x) > 1e-9 {
            continue;
        }
        let obj = p.objective(&x);
        if best.as_ref().is_none_or(|(b, _)| obj < *b) {
            best = Some((obj, x));
        }
    }
    best.map(|(_, x)| x)
}

/// End-effector position by chaining homogeneous transforms.
pub fn fk_transform_chain(base: &Pose2, arm: &ArmParams, q: &[f64]) -> Point2 {
    let rot = |a: f64| Matrix3::new(a.cos(), -a.sin(), 0.0, a.sin(), a.cos(), 0.0, 0.0, 0.0, 1.0);
    let trans = |x: f64, y: f64| Matrix3::new(1.0, 0.0, x, 0.0, 1.0, y, 0.0, 0.0, 1.0);
    let mut t = trans(base.x, base.y) * rot(base.theta) * trans(arm.mount_offset.x, arm.mount_offset.y);
    for (l, qi) in arm.link_lengths.iter().zip(q) {
        t = t * rot(*qi) * trans(*l, 0.0);
    }
    Point2::new(t[(0, 2)], t[(1, 2)])
}

/// Central differences of the end-effector position with respect to
/// forward base motion, base rotation and each joint.
pub fn fd_jacobian(base: &Pose2, arm: &ArmParams, q: &[f64], step: f64) -> DMatrix<f64> {
    let n = q.len();
    let mut j = DMatrix::zeros(2, 2 + n);
    let mut col = |c: usize, plus: Point2, minus: Point2| {
        j[(0, c)] = (plus.x - minus.x) / (2.0 * step);
        j[(1, c)] = (plus.y - minus.y) / (2.0 * step);
    };
    let ee = |b: &Pose2, q: &[f64]| fk_transform_chain(b, arm, q);
    let fwd = |s: f64| Pose2::new(base.x + s * base.theta.cos(), base.y + s * base.theta.sin(), base.theta);
    col(0, ee(&fwd(step), q), ee(&fwd(-step), q));
    col(1, ee(&Pose2::new(base.x, base.y, base.theta + step), q), ee(&Pose2::new(base.x, base.y, base.theta - step), q));
    for k in 0..n {
        let (mut qp, mut qm) = (q.to_vec(), q.to_vec());
        qp[k] += step;
        qm[k] -= step;
        col(2 + k, ee(base, &qp), ee(base, &qm));
    }
    j
}
