use serde::{Deserialize, Serialize};

use super::pose::Point2;

/// Axis-aligned rectangle in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Rect {
    pub fn new(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Self {
        Rect { min_x, min_y, max_x, max_y }
    }

    pub fn centered(cx: f64, cy: f64, width: f64, height: f64) -> Self {
        Rect::new(cx - width / 2.0, cy - height / 2.0, cx + width / 2.0, cy + height / 2.0)
    }

    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> f64 {
        self.max_y - self.min_y
    }

    pub fn center(&self) -> Point2 {
        Point2::new((self.min_x + self.max_x) / 2.0, (self.min_y + self.max_y) / 2.0)
    }

    pub fn is_empty(&self) -> bool {
        !(self.width() > 0.0 && self.height() > 0.0)
    }

    pub fn contains_strict(&self, p: Point2) -> bool {
        p.x > self.min_x && p.x < self.max_x && p.y > self.min_y && p.y < self.max_y
    }

    pub fn contains(&self, p: Point2) -> bool {
        p.x >= self.min_x && p.x <= self.max_x && p.y >= self.min_y && p.y <= self.max_y
    }

    /// Euclidean distance from `p` to the rectangle (0 inside).
    pub fn distance(&self, p: Point2) -> f64 {
        let dx = (self.min_x - p.x).max(0.0).max(p.x - self.max_x);
        let dy = (self.min_y - p.y).max(0.0).max(p.y - self.max_y);
        dx.hypot(dy)
    }

    /// Distance from `p` to the rectangle's boundary, whether inside or out.
    pub fn boundary_distance(&self, p: Point2) -> f64 {
        if self.contains(p) {
            (p.x - self.min_x)
                .min(self.max_x - p.x)
                .min(p.y - self.min_y)
                .min(self.max_y - p.y)
        } else {
            self.distance(p)
        }
    }

    /// Slab test. Returns the smallest `t >= 0` with `origin + t·dir` on the
    /// boundary, for a ray starting outside.
    pub fn ray_entry(&self, origin: Point2, dir: Point2) -> Option<f64> {
        let mut t_min = f64::NEG_INFINITY;
        let mut t_max = f64::INFINITY;
        for (o, d, lo, hi) in [
            (origin.x, dir.x, self.min_x, self.max_x),
            (origin.y, dir.y, self.min_y, self.max_y),
        ] {
            if d == 0.0 {
                if o < lo || o > hi {
                    return None;
                }
            } else {
                let t1 = (lo - o) / d;
                let t2 = (hi - o) / d;
                t_min = t_min.max(t1.min(t2));
                t_max = t_max.min(t1.max(t2));
            }
        }
        (t_max >= t_min && t_min >= 0.0).then_some(t_min)
    }
}

/// A static obstacle primitive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Shape {
    Rect(Rect),
    Circle { x: f64, y: f64, radius: f64 },
}

impl Shape {
    pub fn circle(center: Point2, radius: f64) -> Self {
        Shape::Circle { x: center.x, y: center.y, radius }
    }

    /// Strict interior test, used when rasterizing cell centers.
    pub fn contains_strict(&self, p: Point2) -> bool {
        match *self {
            Shape::Rect(r) => r.contains_strict(p),
            Shape::Circle { x, y, radius } => p.distance(Point2::new(x, y)) < radius,
        }
    }

    pub fn contains(&self, p: Point2) -> bool {
        match *self {
            Shape::Rect(r) => r.contains(p),
            Shape::Circle { x, y, radius } => p.distance(Point2::new(x, y)) <= radius,
        }
    }

    /// Distance from a point to the shape, 0 when inside.
    pub fn distance(&self, p: Point2) -> f64 {
        match *self {
            Shape::Rect(r) => r.distance(p),
            Shape::Circle { x, y, radius } => (p.distance(Point2::new(x, y)) - radius).max(0.0),
        }
    }

    pub fn boundary_distance(&self, p: Point2) -> f64 {
        match *self {
            Shape::Rect(r) => r.boundary_distance(p),
            Shape::Circle { x, y, radius } => (p.distance(Point2::new(x, y)) - radius).abs(),
        }
    }

    /// First intersection distance of a ray (unit `dir`) starting outside the shape.
    pub fn ray_entry(&self, origin: Point2, dir: Point2) -> Option<f64> {
        match *self {
            Shape::Rect(r) => r.ray_entry(origin, dir),
            Shape::Circle { x, y, radius } => {
                let oc = origin - Point2::new(x, y);
                let b = oc.dot(dir);
                let c = oc.dot(oc) - radius * radius;
                let disc = b * b - c;
                if disc < 0.0 {
                    return None;
                }
                let t = -b - disc.sqrt();
                (t >= 0.0).then_some(t)
            }
        }
    }

    pub fn bounds(&self) -> Rect {
        match *self {
            Shape::Rect(r) => r,
            Shape::Circle { x, y, radius } => Rect::new(x - radius, y - radius, x + radius, y + radius),
        }
    }
}
