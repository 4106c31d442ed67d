use super::distance::DistanceField;
use super::lidar::LidarScan;
use super::pose::{Point2, Pose2};
use super::shape::{Rect, Shape};
use super::WorldError;

/// Cell layout shared by occupancy grids and distance fields.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridGeometry {
    /// Lower-left corner of cell (0, 0). Heading is always 0.
    pub origin: Pose2,
    pub resolution: f64,
    pub width: usize,
    pub height: usize,
}

impl GridGeometry {
    pub fn new(origin: Point2, resolution: f64, width: usize, height: usize) -> Result<Self, WorldError> {
        if !(resolution > 0.0) || !resolution.is_finite() {
            return Err(WorldError::InvalidResolution(resolution));
        }
        if width == 0 || height == 0 {
            return Err(WorldError::EmptyExtent);
        }
        Ok(GridGeometry { origin: Pose2::new(origin.x, origin.y, 0.0), resolution, width, height })
    }

    /// Smallest grid of `resolution` cells covering `extent`, anchored at its
    /// lower-left corner.
    pub fn covering(extent: &Rect, resolution: f64) -> Result<Self, WorldError> {
        if !(resolution > 0.0) || !resolution.is_finite() {
            return Err(WorldError::InvalidResolution(resolution));
        }
        if extent.is_empty() || !extent.width().is_finite() || !extent.height().is_finite() {
            return Err(WorldError::EmptyExtent);
        }
        let cells = |len: f64| {
            let n = len / resolution;
            let r = n.round();
            if (n - r).abs() < 1e-9 * n.max(1.0) { r as usize } else { n.ceil() as usize }
        };
        Self::new(Point2::new(extent.min_x, extent.min_y), resolution, cells(extent.width()), cells(extent.height()))
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.width + ix
    }

    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx % self.width, idx / self.width)
    }

    pub fn cell_center(&self, ix: usize, iy: usize) -> Point2 {
        Point2::new(
            self.origin.x + (ix as f64 + 0.5) * self.resolution,
            self.origin.y + (iy as f64 + 0.5) * self.resolution,
        )
    }

    /// Cell containing a world point, or `None` outside the grid.
    pub fn world_to_cell(&self, p: Point2) -> Option<(usize, usize)> {
        let fx = ((p.x - self.origin.x) / self.resolution).floor();
        let fy = ((p.y - self.origin.y) / self.resolution).floor();
        if fx < 0.0 || fy < 0.0 || fx >= self.width as f64 || fy >= self.height as f64 || !fx.is_finite() || !fy.is_finite() {
            return None;
        }
        Some((fx as usize, fy as usize))
    }

    pub fn extent(&self) -> Rect {
        Rect::new(
            self.origin.x,
            self.origin.y,
            self.origin.x + self.width as f64 * self.resolution,
            self.origin.y + self.height as f64 * self.resolution,
        )
    }

    pub fn contains(&self, p: Point2) -> bool {
        self.extent().contains(p)
    }
}

/// Boolean occupancy per cell, row-major from the lower-left corner.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    pub geometry: GridGeometry,
    pub cells: Vec<bool>,
}

impl OccupancyGrid {
    pub fn new(geometry: GridGeometry) -> Self {
        OccupancyGrid { cells: vec![false; geometry.len()], geometry }
    }

    pub fn empty(extent: &Rect, resolution: f64) -> Result<Self, WorldError> {
        Ok(Self::new(GridGeometry::covering(extent, resolution)?))
    }

    pub fn width(&self) -> usize {
        self.geometry.width
    }

    pub fn height(&self) -> usize {
        self.geometry.height
    }

    pub fn resolution(&self) -> f64 {
        self.geometry.resolution
    }

    pub fn get(&self, ix: usize, iy: usize) -> bool {
        self.cells[self.geometry.index(ix, iy)]
    }

    pub fn set(&mut self, ix: usize, iy: usize, occupied: bool) {
        let i = self.geometry.index(ix, iy);
        self.cells[i] = occupied;
    }

    /// Occupancy at a world point; anything outside the grid counts as occupied.
    pub fn is_occupied_at(&self, p: Point2) -> bool {
        match self.geometry.world_to_cell(p) {
            Some((ix, iy)) => self.get(ix, iy),
            None => true,
        }
    }

    pub fn occupied_count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    /// Cell-wise union with another grid of identical geometry.
    pub fn union(&self, other: &OccupancyGrid) -> OccupancyGrid {
        debug_assert_eq!(self.geometry, other.geometry);
        let cells = self.cells.iter().zip(&other.cells).map(|(a, b)| *a || *b).collect();
        OccupancyGrid { geometry: self.geometry, cells }
    }

    /// `true` when every occupied cell of `other` is also occupied here.
    pub fn contains_all(&self, other: &OccupancyGrid) -> bool {
        self.cells.iter().zip(&other.cells).all(|(a, b)| *a || !*b)
    }

    /// Coarser grid with `factor`×`factor` blocks; a coarse cell is occupied
    /// if any fine cell inside it is. Cells beyond the fine grid count as free.
    pub fn downsample(&self, factor: usize) -> OccupancyGrid {
        let factor = factor.max(1);
        if factor == 1 {
            return self.clone();
        }
        let g = self.geometry;
        let geometry = GridGeometry {
            origin: g.origin,
            resolution: g.resolution * factor as f64,
            width: g.width.div_ceil(factor),
            height: g.height.div_ceil(factor),
        };
        let mut out = OccupancyGrid::new(geometry);
        for iy in 0..g.height {
            for ix in 0..g.width {
                if self.get(ix, iy) {
                    out.set(ix / factor, iy / factor, true);
                }
            }
        }
        out
    }

    /// Conservative test of a straight segment: every cell the closed segment
    /// touches, including cells met only at an edge or corner, must be free.
    pub fn segment_free(&self, a: Point2, b: Point2) -> bool {
        let g = &self.geometry;
        if !g.contains(a) || !g.contains(b) {
            return false;
        }
        let res = g.resolution;
        let to_cell = |v: f64, o: f64| (v - o) / res;
        let (ax, ay) = (to_cell(a.x, g.origin.x), to_cell(a.y, g.origin.y));
        let (bx, by) = (to_cell(b.x, g.origin.x), to_cell(b.y, g.origin.y));
        let clamp_row = |v: f64| (v.floor().max(0.0) as usize).min(g.height - 1);
        let clamp_col = |v: f64| (v.floor().max(0.0) as usize).min(g.width - 1);
        let row_lo = clamp_row(ay.min(by));
        let row_hi = clamp_row(ay.max(by));
        // Also include the row below when the segment touches a row boundary.
        let row_lo = if ay.min(by).fract() == 0.0 && row_lo > 0 { row_lo - 1 } else { row_lo };
        for row in row_lo..=row_hi {
            let (y0, y1) = (row as f64, row as f64 + 1.0);
            let (t0, t1) = if by == ay {
                if ay < y0 || ay > y1 {
                    continue;
                }
                (0.0, 1.0)
            } else {
                let ta = (y0 - ay) / (by - ay);
                let tb = (y1 - ay) / (by - ay);
                let lo = ta.min(tb).max(0.0);
                let hi = ta.max(tb).min(1.0);
                if lo > hi {
                    continue;
                }
                (lo, hi)
            };
            let xa = ax + (bx - ax) * t0;
            let xb = ax + (bx - ax) * t1;
            let (xl, xh) = (xa.min(xb), xa.max(xb));
            let mut c_lo = clamp_col(xl);
            if xl.fract() == 0.0 && c_lo > 0 && xl > 0.0 {
                c_lo -= 1;
            }
            let c_hi = clamp_col(xh);
            for col in c_lo..=c_hi {
                if self.get(col, row) {
                    return false;
                }
            }
        }
        true
    }
}

/// Occupancy grid of the given shapes over `extent`: a cell is occupied iff
/// its center lies strictly inside a shape.
pub fn rasterize_shapes<'a>(
    extent: &Rect,
    shapes: impl IntoIterator<Item = &'a Shape>,
    resolution: f64,
) -> Result<OccupancyGrid, WorldError> {
    let mut grid = OccupancyGrid::empty(extent, resolution)?;
    let g = grid.geometry;
    for shape in shapes {
        let b = shape.bounds();
        let ix0 = (((b.min_x - g.origin.x) / g.resolution).floor().max(0.0)) as usize;
        let iy0 = (((b.min_y - g.origin.y) / g.resolution).floor().max(0.0)) as usize;
        let ix1 = ((((b.max_x - g.origin.x) / g.resolution).ceil()).max(0.0) as usize).min(g.width);
        let iy1 = ((((b.max_y - g.origin.y) / g.resolution).ceil()).max(0.0) as usize).min(g.height);
        for iy in iy0..iy1 {
            for ix in ix0..ix1 {
                if shape.contains_strict(g.cell_center(ix, iy)) {
                    grid.set(ix, iy, true);
                }
            }
        }
    }
    Ok(grid)
}

/// Rasterizes every static obstacle plus the table footprint of a scenario.
pub fn rasterize_scenario(config: &super::ScenarioConfig, resolution: f64) -> Result<OccupancyGrid, WorldError> {
    rasterize_shapes(&config.extent, config.base_shapes().iter(), resolution)
}

/// Dilates the occupied set: a cell becomes occupied iff some occupied cell
/// center lies within `radius` of its center.
pub fn inflate(grid: &OccupancyGrid, radius: f64) -> Result<OccupancyGrid, WorldError> {
    if !(radius >= 0.0) {
        return Err(WorldError::NegativeRadius(radius));
    }
    if radius == 0.0 {
        return Ok(grid.clone());
    }
    Ok(DistanceField::compute(grid).threshold(radius))
}

/// Marks the cells containing lidar hit endpoints as occupied. Max-range
/// beams carry no hit and are ignored; existing occupancy is never cleared.
pub fn integrate_scan(map: &OccupancyGrid, scan: &LidarScan) -> OccupancyGrid {
    let mut out = map.clone();
    for p in scan.hit_points() {
        if let Some((ix, iy)) = out.geometry.world_to_cell(p) {
            out.set(ix, iy, true);
        }
    }
    out
}
