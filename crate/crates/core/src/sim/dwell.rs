use crate::world::Point2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DwellStatus {
    /// Inside tolerance, window not yet complete.
    Holding,
    /// Outside tolerance; the timer is reset.
    Broken,
    Done,
}

/// Requires the gripper to stay within `tolerance` of a point continuously
/// for `window` seconds. Any excursion restarts the timer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DwellMonitor {
    pub tolerance: f64,
    pub window: f64,
    elapsed: f64,
}

impl DwellMonitor {
    pub fn new(tolerance: f64, window: f64) -> Self {
        DwellMonitor { tolerance, window, elapsed: 0.0 }
    }

    pub fn elapsed(&self) -> f64 {
        self.elapsed
    }

    pub fn reset(&mut self) {
        self.elapsed = 0.0;
    }

    pub fn update(&mut self, ee: Point2, object: Point2, dt: f64) -> DwellStatus {
        if ee.distance(object) > self.tolerance {
            self.elapsed = 0.0;
            return DwellStatus::Broken;
        }
        self.elapsed += dt;
        // Tolerate the rounding of repeated dt sums.
        if self.elapsed >= self.window - 1e-9 {
            DwellStatus::Done
        } else {
            DwellStatus::Holding
        }
    }
}
