//! Two-layer obstacle map: an immutable static layer built from the scenario
//! plus a dynamic layer of lidar detections that expire unless re-observed.

use super::grid::{GridGeometry, OccupancyGrid};
use super::lidar::LidarScan;

/// Lidar detections, stamped with the time each cell was last observed.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicLayer {
    pub geometry: GridGeometry,
    last_seen: Vec<f64>,
    /// Seconds a detection survives without being re-observed.
    pub expiry: f64,
}

impl DynamicLayer {
    pub fn new(geometry: GridGeometry, expiry: f64) -> Self {
        DynamicLayer { geometry, last_seen: vec![f64::NEG_INFINITY; geometry.len()], expiry }
    }

    /// New snapshot with the scan's hits stamped at `time`.
    ///
    /// Hits already explained by `known` (an occupied cell in the 3×3
    /// neighbourhood of the hit cell) are not added: they belong to the
    /// pre-generated map.
    pub fn integrate(&self, scan: &LidarScan, time: f64, known: &OccupancyGrid) -> DynamicLayer {
        let mut next = self.clone();
        for p in scan.hit_points() {
            let Some((ix, iy)) = self.geometry.world_to_cell(p) else { continue };
            if explained(known, ix, iy) {
                continue;
            }
            let i = self.geometry.index(ix, iy);
            next.last_seen[i] = time;
        }
        next
    }

    pub fn is_live(&self, idx: usize, time: f64) -> bool {
        time - self.last_seen[idx] <= self.expiry
    }

    pub fn live_count(&self, time: f64) -> usize {
        (0..self.last_seen.len()).filter(|&i| self.is_live(i, time)).count()
    }

    /// Static layer plus every live dynamic cell.
    pub fn fuse(&self, static_layer: &OccupancyGrid, time: f64) -> OccupancyGrid {
        debug_assert_eq!(static_layer.geometry, self.geometry);
        let cells = static_layer
            .cells
            .iter()
            .enumerate()
            .map(|(i, &s)| s || self.is_live(i, time))
            .collect();
        OccupancyGrid { geometry: self.geometry, cells }
    }
}

fn explained(known: &OccupancyGrid, ix: usize, iy: usize) -> bool {
    let (w, h) = (known.width() as isize, known.height() as isize);
    for dy in -1..=1isize {
        for dx in -1..=1isize {
            let (x, y) = (ix as isize + dx, iy as isize + dy);
            if x >= 0 && y >= 0 && x < w && y < h && known.get(x as usize, y as usize) {
                return true;
            }
        }
    }
    false
}
