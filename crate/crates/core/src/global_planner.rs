//! Rotation-aware global planning on an inflated occupancy grid.
//!
//! The search graph has one state per (cell, arrival octant). Moving to one
//! of the eight neighbours costs the in-place turn from the current heading
//! onto the move direction plus the move length at full speed; reaching the
//! goal cell adds the final turn onto the goal heading. Costs are measured
//! between cell centers. The very first move turns from the robot's exact
//! heading rather than an octant.
//!
//! Edge cost, exactly as evaluated:
//!
//! ```text
//! turn_steps as f64 * FRAC_PI_4 / omega_max  +  step_len / v_max
//! ```
//!
//! with `step_len` equal to `resolution` or `resolution * SQRT_2`, and the
//! sum added to the parent's cost in one operation.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::{FRAC_PI_4, SQRT_2};

use crate::path_metrics::VelocityLimits;
use crate::world::{angle_diff, normalize_angle, OccupancyGrid, Point2, Pose2};

pub const OCTANTS: usize = 8;

/// Cell offsets, counter-clockwise from east.
pub const DIRECTIONS: [(i32, i32); OCTANTS] = [(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)];

/// Radius within which an occupied goal is replaced by the nearest free cell.
pub const GOAL_SNAP_RADIUS: f64 = 0.3;

pub fn octant_angle(k: usize) -> f64 {
    normalize_angle(k as f64 * FRAC_PI_4)
}

/// Octant whose canonical angle is closest to `theta`.
pub fn nearest_octant(theta: f64) -> usize {
    let k = (normalize_angle(theta) / FRAC_PI_4).round() as i64;
    k.rem_euclid(OCTANTS as i64) as usize
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PlanError {
    #[error("pose lies outside the grid")]
    OutsideGrid,
    #[error("velocity limits must be positive")]
    InvalidLimits,
    #[error("no path; closest approach at cell {closest:?}")]
    NoPath { closest: (usize, usize) },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlobalPath {
    /// Smoothed polyline from the start position to the goal position.
    pub waypoints: Vec<Point2>,
    pub goal_heading: f64,
    /// Graph cost of the path before smoothing, seconds.
    pub total_cost: f64,
    /// Raw cell sequence found by the search, start cell first.
    pub cells: Vec<(usize, usize)>,
}

impl GlobalPath {
    pub fn length(&self) -> f64 {
        self.waypoints.windows(2).map(|w| w[0].distance(w[1])).sum()
    }

    pub fn goal(&self) -> Pose2 {
        let p = *self.waypoints.last().expect("paths are nonempty");
        Pose2::new(p.x, p.y, self.goal_heading)
    }
}

/// The (cell, octant) state graph over one grid.
#[derive(Debug, Clone)]
pub struct Lattice<'a> {
    pub grid: &'a OccupancyGrid,
    pub limits: VelocityLimits,
    step_time: [f64; OCTANTS],
    turn_time: [f64; OCTANTS],
}

impl<'a> Lattice<'a> {
    pub fn new(grid: &'a OccupancyGrid, limits: &VelocityLimits) -> Self {
        let res = grid.resolution();
        let step_time =
            std::array::from_fn(|d| if d % 2 == 0 { res / limits.v_max } else { res * SQRT_2 / limits.v_max });
        let turn_time = std::array::from_fn(|steps| steps as f64 * FRAC_PI_4 / limits.omega_max);
        Lattice { grid, limits: *limits, step_time, turn_time }
    }

    pub fn cell_count(&self) -> usize {
        self.grid.geometry.len()
    }

    /// Neighbour reached by moving in direction `d`, if the move is legal:
    /// the target must be free and a diagonal move may not cut a corner.
    pub fn step(&self, cell: usize, d: usize) -> Option<usize> {
        let g = &self.grid.geometry;
        let (ix, iy) = g.coords(cell);
        let (dx, dy) = DIRECTIONS[d];
        let nx = ix as i64 + dx as i64;
        let ny = iy as i64 + dy as i64;
        if nx < 0 || ny < 0 || nx >= g.width as i64 || ny >= g.height as i64 {
            return None;
        }
        let (nx, ny) = (nx as usize, ny as usize);
        if self.grid.get(nx, ny) {
            return None;
        }
        if dx != 0 && dy != 0 && (self.grid.get(nx, iy) || self.grid.get(ix, ny)) {
            return None;
        }
        Some(g.index(nx, ny))
    }

    /// Predecessor of `cell` for a move in direction `d`.
    pub fn step_back(&self, cell: usize, d: usize) -> Option<usize> {
        let g = &self.grid.geometry;
        let (ix, iy) = g.coords(cell);
        let (dx, dy) = DIRECTIONS[d];
        let px = ix as i64 - dx as i64;
        let py = iy as i64 - dy as i64;
        if px < 0 || py < 0 || px >= g.width as i64 || py >= g.height as i64 {
            return None;
        }
        let p = g.index(px as usize, py as usize);
        (self.step(p, d) == Some(cell)).then_some(p)
    }

    /// Cost of a move in direction `d` when arriving with octant `from`.
    pub fn edge_cost(&self, from: usize, d: usize) -> f64 {
        let diff = (from as i64 - d as i64).rem_euclid(OCTANTS as i64) as usize;
        let steps = diff.min(OCTANTS - diff);
        self.turn_time[steps] + self.step_time[d]
    }

    /// Cost of a move in direction `d` from an exact heading.
    pub fn edge_cost_from_heading(&self, theta: f64, d: usize) -> f64 {
        angle_diff(octant_angle(d), theta).abs() / self.limits.omega_max + self.step_time[d]
    }

    /// Final in-place rotation from octant `o` to `theta`.
    pub fn align_cost(&self, o: usize, theta: f64) -> f64 {
        angle_diff(theta, octant_angle(o)).abs() / self.limits.omega_max
    }

    pub fn cell_of(&self, p: Point2) -> Option<usize> {
        let g = &self.grid.geometry;
        g.world_to_cell(p).map(|(ix, iy)| g.index(ix, iy))
    }

    pub fn center(&self, cell: usize) -> Point2 {
        let g = &self.grid.geometry;
        let (ix, iy) = g.coords(cell);
        g.cell_center(ix, iy)
    }

    /// Nearest free cell (by center distance, then index) within `radius`.
    pub fn nearest_free(&self, p: Point2, radius: f64) -> Option<usize> {
        let g = &self.grid.geometry;
        let reach = (radius / g.resolution).ceil() as i64 + 1;
        let (cx, cy) = g.world_to_cell(p)?;
        let mut best: Option<(f64, usize)> = None;
        for dy in -reach..=reach {
            for dx in -reach..=reach {
                let (x, y) = (cx as i64 + dx, cy as i64 + dy);
                if x < 0 || y < 0 || x >= g.width as i64 || y >= g.height as i64 {
                    continue;
                }
                let (x, y) = (x as usize, y as usize);
                if self.grid.get(x, y) {
                    continue;
                }
                let d = g.cell_center(x, y).distance(p);
                let idx = g.index(x, y);
                if d <= radius && best.is_none_or(|(bd, bi)| d < bd || (d == bd && idx < bi)) {
                    best = Some((d, idx));
                }
            }
        }
        best.map(|(_, i)| i)
    }
}

const NO_PARENT: u32 = u32::MAX;
const FROM_START: u32 = u32::MAX - 1;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Entry {
    key: f64,
    seq: u64,
    g: f64,
    state: u32,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on key, then on insertion order.
        other.key.total_cmp(&self.key).then_with(|| other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Best-first search state shared by A* and the cost-field searches.
struct Frontier {
    heap: BinaryHeap<Entry>,
    seq: u64,
    g: Vec<f64>,
    parent: Vec<u32>,
}

impl Frontier {
    fn new(states: usize) -> Self {
        Frontier { heap: BinaryHeap::new(), seq: 0, g: vec![f64::INFINITY; states], parent: vec![NO_PARENT; states] }
    }

    fn relax(&mut self, state: u32, g: f64, h: f64, parent: u32) {
        let s = state as usize;
        if g < self.g[s] {
            self.g[s] = g;
            self.parent[s] = parent;
            self.push(state, g, g + h);
        }
    }

    fn push(&mut self, state: u32, g: f64, key: f64) {
        self.heap.push(Entry { key, seq: self.seq, g, state });
        self.seq += 1;
    }

    /// Next non-stale entry.
    fn pop(&mut self) -> Option<Entry> {
        while let Some(e) = self.heap.pop() {
            if (e.state as usize) < self.g.len() && e.g > self.g[e.state as usize] {
                continue;
            }
            return Some(e);
        }
        None
    }

    fn cells_to(&self, state: u32) -> Vec<usize> {
        let mut out = Vec::new();
        let mut s = state;
        while s != FROM_START && s != NO_PARENT {
            out.push(s as usize / OCTANTS);
            s = self.parent[s as usize];
        }
        out.reverse();
        out
    }
}

fn check_limits(limits: &VelocityLimits) -> Result<(), PlanError> {
    if limits.v_max > 0.0 && limits.omega_max > 0.0 {
        Ok(())
    } else {
        Err(PlanError::InvalidLimits)
    }
}

/// A* from `start` to `goal` on an inflated grid. See the module docs for
/// the cost model. The start cell itself may be occupied; the robot is
/// allowed to drive out of it.
pub fn plan_global(grid: &OccupancyGrid, start: &Pose2, goal: &Pose2, limits: &VelocityLimits) -> Result<GlobalPath, PlanError> {
    check_limits(limits)?;
    let lat = Lattice::new(grid, limits);
    let start_cell = lat.cell_of(start.position()).ok_or(PlanError::OutsideGrid)?;
    let requested_goal = lat.cell_of(goal.position()).ok_or(PlanError::OutsideGrid)?;
    let (goal_cell, goal_pos) = if lat.grid.cells[requested_goal] && requested_goal != start_cell {
        match lat.nearest_free(goal.position(), GOAL_SNAP_RADIUS) {
            Some(c) => (c, lat.center(c)),
            None => return Err(PlanError::NoPath { closest: grid.geometry.coords(start_cell) }),
        }
    } else {
        (requested_goal, goal.position())
    };

    let goal_center = lat.center(goal_cell);
    // Slightly shrunk so rounding can never make the bound inadmissible.
    let h = |cell: usize| lat.center(cell).distance(goal_center) / limits.v_max * (1.0 - 1e-9);
    let states = lat.cell_count() * OCTANTS;
    let goal_state = states as u32;
    let mut fr = Frontier::new(states);
    let mut goal_cost = f64::INFINITY;
    let mut goal_parent = NO_PARENT;
    let mut closest = (h(start_cell), start_cell);

    if start_cell == goal_cell {
        goal_cost = angle_diff(goal.theta, start.theta).abs() / limits.omega_max;
        goal_parent = FROM_START;
        fr.push(goal_state, goal_cost, goal_cost);
    }
    for d in 0..OCTANTS {
        if let Some(nc) = lat.step(start_cell, d) {
            fr.relax((nc * OCTANTS + d) as u32, lat.edge_cost_from_heading(start.theta, d), h(nc), FROM_START);
        }
    }

    while let Some(e) = fr.pop() {
        if e.state == goal_state {
            if e.g > goal_cost {
                continue;
            }
            let mut cells = if goal_parent == FROM_START { Vec::new() } else { fr.cells_to(goal_parent) };
            cells.insert(0, start_cell);
            let raw = raw_waypoints(&lat, start.position(), &cells, goal_pos);
            return Ok(GlobalPath {
                waypoints: smooth_path(grid, &raw),
                goal_heading: goal.theta,
                total_cost: goal_cost,
                cells: cells.iter().map(|&c| grid.geometry.coords(c)).collect(),
            });
        }
        let s = e.state as usize;
        let (cell, o) = (s / OCTANTS, s % OCTANTS);
        let hc = h(cell);
        if hc < closest.0 {
            closest = (hc, cell);
        }
        if cell == goal_cell {
            let total = e.g + lat.align_cost(o, goal.theta);
            if total < goal_cost {
                goal_cost = total;
                goal_parent = e.state;
                fr.push(goal_state, total, total);
            }
        }
        for d in 0..OCTANTS {
            if let Some(nc) = lat.step(cell, d) {
                fr.relax((nc * OCTANTS + d) as u32, e.g + lat.edge_cost(o, d), h(nc), e.state);
            }
        }
    }
    Err(PlanError::NoPath { closest: grid.geometry.coords(closest.1) })
}

fn raw_waypoints(lat: &Lattice<'_>, start: Point2, cells: &[usize], goal: Point2) -> Vec<Point2> {
    let mut pts = Vec::with_capacity(cells.len() + 2);
    pts.push(start);
    pts.extend(cells.iter().map(|&c| lat.center(c)));
    pts.push(goal);
    pts.dedup();
    pts
}

/// Greedy line-of-sight shortcutting. A raw edge that is itself not clear
/// (for instance leaving an occupied start cell) is kept as is.
pub fn smooth_path(grid: &OccupancyGrid, raw: &[Point2]) -> Vec<Point2> {
    if raw.len() <= 2 {
        return raw.to_vec();
    }
    let mut out = vec![raw[0]];
    let mut i = 0;
    while i + 1 < raw.len() {
        let mut j = raw.len() - 1;
        while j > i + 1 && !grid.segment_free(raw[i], raw[j]) {
            j -= 1;
        }
        out.push(raw[j]);
        i = j;
    }
    out
}

/// Lowest-cost arrivals from one start pose at a set of oriented targets,
/// by Dijkstra over the same state graph as [`plan_global`]. The search
/// stops as soon as every reachable target is settled.
#[derive(Debug, Clone)]
pub struct ForwardField {
    g: Vec<f64>,
    parent: Vec<u32>,
    start: Pose2,
    start_cell: Option<usize>,
    resolution: f64,
    geometry: crate::world::GridGeometry,
    limits: VelocityLimits,
}

impl ForwardField {
    pub fn compute(grid: &OccupancyGrid, start: &Pose2, limits: &VelocityLimits, targets: &[Pose2]) -> Result<Self, PlanError> {
        check_limits(limits)?;
        let lat = Lattice::new(grid, limits);
        let start_cell = lat.cell_of(start.position()).ok_or(PlanError::OutsideGrid)?;
        let target_cells: Vec<Option<usize>> = targets.iter().map(|t| lat.cell_of(t.position())).collect();
        let mut by_cell: std::collections::HashMap<usize, Vec<usize>> = std::collections::HashMap::new();
        for (i, c) in target_cells.iter().enumerate() {
            if let Some(c) = c {
                by_cell.entry(*c).or_default().push(i);
            }
        }
        let mut best: Vec<f64> = targets
            .iter()
            .zip(&target_cells)
            .map(|(t, c)| if *c == Some(start_cell) { angle_diff(t.theta, start.theta).abs() / limits.omega_max } else { f64::INFINITY })
            .collect();
        let mut unresolved = target_cells.iter().filter(|c| c.is_some()).count();
        let mut seen = vec![false; targets.len()];

        let mut fr = Frontier::new(lat.cell_count() * OCTANTS);
        for d in 0..OCTANTS {
            if let Some(nc) = lat.step(start_cell, d) {
                fr.relax((nc * OCTANTS + d) as u32, lat.edge_cost_from_heading(start.theta, d), 0.0, FROM_START);
            }
        }
        while let Some(e) = fr.pop() {
            if unresolved == 0 && best.iter().all(|&b| b <= e.g || b.is_infinite()) {
                break;
            }
            let s = e.state as usize;
            let (cell, o) = (s / OCTANTS, s % OCTANTS);
            if let Some(list) = by_cell.get(&cell) {
                for &i in list {
                    best[i] = best[i].min(e.g + lat.align_cost(o, targets[i].theta));
                    if !seen[i] {
                        seen[i] = true;
                        unresolved -= 1;
                    }
                }
            }
            for d in 0..OCTANTS {
                if let Some(nc) = lat.step(cell, d) {
                    fr.relax((nc * OCTANTS + d) as u32, e.g + lat.edge_cost(o, d), 0.0, e.state);
                }
            }
        }
        Ok(ForwardField {
            g: fr.g,
            parent: fr.parent,
            start: *start,
            start_cell: Some(start_cell),
            resolution: grid.resolution(),
            geometry: grid.geometry,
            limits: *limits,
        })
    }

    fn best_arrival(&self, target: &Pose2) -> Option<(f64, Option<u32>)> {
        let (ix, iy) = self.geometry.world_to_cell(target.position())?;
        let cell = self.geometry.index(ix, iy);
        let w = self.limits.omega_max;
        let mut best = (f64::INFINITY, None);
        if Some(cell) == self.start_cell {
            best = (angle_diff(target.theta, self.start.theta).abs() / w, None);
        }
        for o in 0..OCTANTS {
            let g = self.g[cell * OCTANTS + o];
            let total = g + angle_diff(target.theta, octant_angle(o)).abs() / w;
            if total < best.0 {
                best = (total, Some((cell * OCTANTS + o) as u32));
            }
        }
        best.0.is_finite().then_some(best)
    }

    /// Cost of reaching `target` (cell plus final alignment); infinite if
    /// unreachable or not settled by the search.
    pub fn cost_to(&self, target: &Pose2) -> f64 {
        self.best_arrival(target).map_or(f64::INFINITY, |b| b.0)
    }

    /// Smoothed path to `target` on `grid` (the grid the field was built on).
    pub fn path_to(&self, grid: &OccupancyGrid, target: &Pose2) -> Option<GlobalPath> {
        let (cost, state) = self.best_arrival(target)?;
        let mut cells = Vec::new();
        let mut s = state.unwrap_or(FROM_START);
        while s != FROM_START && s != NO_PARENT {
            cells.push(s as usize / OCTANTS);
            s = self.parent[s as usize];
        }
        cells.push(self.start_cell?);
        cells.reverse();
        let lat = Lattice::new(grid, &self.limits);
        let raw = raw_waypoints(&lat, self.start.position(), &cells, target.position());
        debug_assert!(self.resolution == grid.resolution());
        Some(GlobalPath {
            waypoints: smooth_path(grid, &raw),
            goal_heading: target.theta,
            total_cost: cost,
            cells: cells.iter().map(|&c| self.geometry.coords(c)).collect(),
        })
    }
}

/// Cost-to-go from every state into a goal region (any heading), by
/// reverse Dijkstra over the state graph.
#[derive(Debug, Clone)]
pub struct GoalField {
    value: Vec<f64>,
    in_goal: Vec<bool>,
    geometry: crate::world::GridGeometry,
    limits: VelocityLimits,
}

impl GoalField {
    /// Goal region: free cells whose centers lie within `radius` of `center`.
    pub fn around(grid: &OccupancyGrid, center: Point2, radius: f64, limits: &VelocityLimits) -> Result<Self, PlanError> {
        check_limits(limits)?;
        let lat = Lattice::new(grid, limits);
        let g = grid.geometry;
        let in_goal: Vec<bool> = (0..g.len())
            .map(|i| {
                let (ix, iy) = g.coords(i);
                !grid.get(ix, iy) && g.cell_center(ix, iy).distance(center) <= radius
            })
            .collect();
        let mut fr = Frontier::new(g.len() * OCTANTS);
        for (cell, _) in in_goal.iter().enumerate().filter(|(_, &b)| b) {
            for o in 0..OCTANTS {
                fr.relax((cell * OCTANTS + o) as u32, 0.0, 0.0, NO_PARENT);
            }
        }
        while let Some(e) = fr.pop() {
            let s = e.state as usize;
            let (cell, d) = (s / OCTANTS, s % OCTANTS);
            let Some(p) = lat.step_back(cell, d) else { continue };
            for o in 0..OCTANTS {
                fr.relax((p * OCTANTS + o) as u32, e.g + lat.edge_cost(o, d), 0.0, e.state);
            }
        }
        Ok(GoalField { value: fr.g, in_goal, geometry: g, limits: *limits })
    }

    /// Cost from an exact pose into the goal region; zero inside it.
    pub fn cost_from(&self, grid: &OccupancyGrid, pose: &Pose2) -> f64 {
        let Some((ix, iy)) = self.geometry.world_to_cell(pose.position()) else { return f64::INFINITY };
        let cell = self.geometry.index(ix, iy);
        if self.in_goal[cell] {
            return 0.0;
        }
        let lat = Lattice::new(grid, &self.limits);
        (0..OCTANTS)
            .filter_map(|d| lat.step(cell, d).map(|nc| lat.edge_cost_from_heading(pose.theta, d) + self.value[nc * OCTANTS + d]))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Local target on `path`: the first point where the path leaves the circle
/// of `local_radius` around the robot, facing along the path. If the goal
/// lies inside the circle the goal itself is returned.
pub fn intermediate_goal(path: &GlobalPath, robot: &Pose2, local_radius: f64) -> Pose2 {
    let pts = &path.waypoints;
    let c = robot.position();
    let goal = path.goal();
    if goal.position().distance(c) <= local_radius {
        return goal;
    }
    let mut found: Option<Pose2> = None;
    for w in pts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let d = b - a;
        let len2 = d.dot(d);
        if len2 == 0.0 {
            continue;
        }
        // |a + t d - c|² = r²
        let f = a - c;
        let bq = 2.0 * f.dot(d);
        let cq = f.dot(f) - local_radius * local_radius;
        let disc = bq * bq - 4.0 * len2 * cq;
        if disc < 0.0 {
            continue;
        }
        // First place the path leaves the circle.
        let t = (-bq + disc.sqrt()) / (2.0 * len2);
        if (0.0..=1.0).contains(&t) {
            let p = a.lerp(b, t);
            found = Some(Pose2::new(p.x, p.y, d.angle()));
            break;
        }
    }
    found.unwrap_or_else(|| {
        let first = pts.first().copied().unwrap_or(c);
        let next = pts.iter().copied().find(|p| *p != first).unwrap_or(goal.position());
        let dir = next - first;
        let theta = if dir.norm() > 0.0 { dir.angle() } else { goal.theta };
        Pose2::new(first.x, first.y, theta)
    })
}
