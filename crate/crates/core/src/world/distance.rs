use super::grid::{GridGeometry, OccupancyGrid};
use super::pose::Point2;

/// Exact Euclidean distance (meters) from every cell center to the nearest
/// occupied cell center. `f64::INFINITY` when the source grid has no
/// occupied cell.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceField {
    pub geometry: GridGeometry,
    /// Squared distance in cell units; integral values.
    squared_cells: Vec<f64>,
}

/// Result of a nearest-obstacle query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObstacleQuery {
    pub distance: f64,
    /// Unit vector pointing from the obstacle toward the query point.
    /// Zero when no obstacle is known.
    pub direction: Point2,
}

impl ObstacleQuery {
    pub const NONE: ObstacleQuery = ObstacleQuery { distance: f64::INFINITY, direction: Point2::ZERO };
}

impl DistanceField {
    /// Two-pass separable transform (lower envelope of parabolas per row and
    /// column); exact at cell-center granularity.
    pub fn compute(grid: &OccupancyGrid) -> DistanceField {
        let g = grid.geometry;
        let (w, h) = (g.width, g.height);
        let n = w.max(h);
        let mut f = vec![0.0; n];
        let mut d = vec![0.0; n];
        let mut v = vec![0usize; n];
        let mut z = vec![0.0; n + 1];

        let mut cols: Vec<f64> = grid.cells.iter().map(|&c| if c { 0.0 } else { f64::INFINITY }).collect();
        for ix in 0..w {
            for iy in 0..h {
                f[iy] = cols[iy * w + ix];
            }
            lower_envelope(&f[..h], &mut d[..h], &mut v, &mut z);
            for iy in 0..h {
                cols[iy * w + ix] = d[iy];
            }
        }
        for iy in 0..h {
            let row = &mut cols[iy * w..(iy + 1) * w];
            f[..w].copy_from_slice(row);
            lower_envelope(&f[..w], &mut d[..w], &mut v, &mut z);
            row.copy_from_slice(&d[..w]);
        }
        DistanceField { geometry: g, squared_cells: cols }
    }

    pub fn width(&self) -> usize {
        self.geometry.width
    }

    pub fn height(&self) -> usize {
        self.geometry.height
    }

    /// Distance in meters at a cell.
    pub fn get(&self, ix: usize, iy: usize) -> f64 {
        self.at_index(self.geometry.index(ix, iy))
    }

    pub fn at_index(&self, idx: usize) -> f64 {
        self.squared_cells[idx].sqrt() * self.geometry.resolution
    }

    /// Distance of the cell containing `p`; `INFINITY` outside the grid.
    pub fn cell_value_at(&self, p: Point2) -> f64 {
        match self.geometry.world_to_cell(p) {
            Some((ix, iy)) => self.get(ix, iy),
            None => f64::INFINITY,
        }
    }

    /// Cells within `radius` of an occupied cell.
    pub fn threshold(&self, radius: f64) -> OccupancyGrid {
        let r = radius / self.geometry.resolution;
        let limit = r * r + 1e-9 * r.max(1.0);
        OccupancyGrid { geometry: self.geometry, cells: self.squared_cells.iter().map(|&s| s <= limit).collect() }
    }

    /// Bilinear interpolation over cell centers, clamped to the lattice of
    /// centers at the border.
    pub fn interpolate(&self, p: Point2) -> f64 {
        let g = &self.geometry;
        let u = (p.x - g.origin.x) / g.resolution - 0.5;
        let v = (p.y - g.origin.y) / g.resolution - 0.5;
        let (i0, fu) = lattice(u, g.width);
        let (j0, fv) = lattice(v, g.height);
        let i1 = (i0 + 1).min(g.width - 1);
        let j1 = (j0 + 1).min(g.height - 1);
        let d00 = self.get(i0, j0);
        let d10 = self.get(i1, j0);
        let d01 = self.get(i0, j1);
        let d11 = self.get(i1, j1);
        if !(d00.is_finite() && d10.is_finite() && d01.is_finite() && d11.is_finite()) {
            return f64::INFINITY;
        }
        let bottom = d00 + (d10 - d00) * fu;
        let top = d01 + (d11 - d01) * fu;
        bottom + (top - bottom) * fv
    }

    /// Nearest-obstacle distance and escape direction at a world point.
    ///
    /// The gradient is taken by central differences of the interpolant with a
    /// step of one cell. Where the central difference vanishes (a ridge of
    /// the field, e.g. halfway between two obstacles) forward differences
    /// break the tie.
    pub fn nearest_obstacle(&self, p: Point2) -> ObstacleQuery {
        if !self.geometry.contains(p) {
            return ObstacleQuery::NONE;
        }
        let distance = self.interpolate(p);
        if !distance.is_finite() {
            return ObstacleQuery::NONE;
        }
        if distance == 0.0 {
            return ObstacleQuery { distance, direction: Point2::ZERO };
        }
        let h = self.geometry.resolution;
        let f = |dx: f64, dy: f64| self.interpolate(Point2::new(p.x + dx, p.y + dy));
        let central = Point2::new((f(h, 0.0) - f(-h, 0.0)) / (2.0 * h), (f(0.0, h) - f(0.0, -h)) / (2.0 * h));
        let direction = match central.normalized() {
            Some(d) if central.norm() > 1e-12 => d,
            _ => {
                let forward = Point2::new((f(h, 0.0) - distance) / h, (f(0.0, h) - distance) / h);
                forward.normalized().filter(|_| forward.norm() > 1e-12).unwrap_or(Point2::new(1.0, 0.0))
            }
        };
        ObstacleQuery { distance, direction }
    }
}

fn lattice(u: f64, n: usize) -> (usize, f64) {
    if n == 1 {
        return (0, 0.0);
    }
    let max = (n - 1) as f64;
    let u = u.clamp(0.0, max);
    let i = (u.floor() as usize).min(n - 2);
    (i, u - i as f64)
}

/// 1D squared-distance transform of sampled function `f` (0 at sources,
/// infinity elsewhere or a previous pass's values).
fn lower_envelope(f: &[f64], d: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k: usize = 0;
    let mut have_any = false;
    for q in 0..n {
        if f[q].is_infinite() {
            continue;
        }
        if !have_any {
            have_any = true;
            k = 0;
            v[0] = q;
            z[0] = f64::NEG_INFINITY;
            z[1] = f64::INFINITY;
            continue;
        }
        let qf = q as f64;
        loop {
            let p = v[k];
            let pf = p as f64;
            let s = ((f[q] + qf * qf) - (f[p] + pf * pf)) / (2.0 * qf - 2.0 * pf);
            // z[0] is -inf, so k never underflows.
            if s <= z[k] {
                k -= 1;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = f64::INFINITY;
                break;
            }
        }
    }
    if !have_any {
        d.iter_mut().for_each(|x| *x = f64::INFINITY);
        return;
    }
    let mut k = 0;
    for (q, out) in d.iter_mut().enumerate() {
        let qf = q as f64;
        while z[k + 1] < qf {
            k += 1;
        }
        let p = v[k];
        let dp = qf - p as f64;
        *out = dp * dp + f[p];
    }
}
