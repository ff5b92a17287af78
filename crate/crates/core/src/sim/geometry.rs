use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn lerp(self, other: Point, t: f64) -> Point {
        Point::new(self.x + (other.x - self.x) * t, self.y + (other.y - self.y) * t)
    }
}

/// Axis-aligned rectangle, `x0 < x1`, `y0 < y1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub const fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self { x0, y0, x1, y1 }
    }

    pub fn is_well_formed(&self) -> bool {
        [self.x0, self.y0, self.x1, self.y1].iter().all(|v| v.is_finite()) && self.x0 < self.x1 && self.y0 < self.y1
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.x0 && p.x <= self.x1 && p.y >= self.y0 && p.y <= self.y1
    }

    pub fn contains_rect(&self, other: &Rect) -> bool {
        other.x0 >= self.x0 && other.x1 <= self.x1 && other.y0 >= self.y0 && other.y1 <= self.y1
    }

    /// Rectangle shrunk by `margin` on every side, if anything remains.
    pub fn shrunk(&self, margin: f64) -> Option<Rect> {
        let r = Rect::new(self.x0 + margin, self.y0 + margin, self.x1 - margin, self.y1 - margin);
        (r.x0 <= r.x1 && r.y0 <= r.y1).then_some(r)
    }

    fn corners(&self) -> [Point; 4] {
        [
            Point::new(self.x0, self.y0),
            Point::new(self.x1, self.y0),
            Point::new(self.x1, self.y1),
            Point::new(self.x0, self.y1),
        ]
    }

    /// Euclidean distance from a point to the rectangle (0 inside).
    pub fn distance_to_point(&self, p: Point) -> f64 {
        let dx = (self.x0 - p.x).max(0.0).max(p.x - self.x1);
        let dy = (self.y0 - p.y).max(0.0).max(p.y - self.y1);
        dx.hypot(dy)
    }

    /// Whether segment `a`-`b` touches the rectangle (Liang-Barsky clip).
    pub fn intersects_segment(&self, a: Point, b: Point) -> bool {
        let (dx, dy) = (b.x - a.x, b.y - a.y);
        let mut t0 = 0.0f64;
        let mut t1 = 1.0f64;
        for (p, q) in [
            (-dx, a.x - self.x0),
            (dx, self.x1 - a.x),
            (-dy, a.y - self.y0),
            (dy, self.y1 - a.y),
        ] {
            if p == 0.0 {
                if q < 0.0 {
                    return false;
                }
            } else {
                let r = q / p;
                if p < 0.0 {
                    t0 = t0.max(r);
                } else {
                    t1 = t1.min(r);
                }
                if t0 > t1 {
                    return false;
                }
            }
        }
        true
    }

    /// Exact distance between segment `a`-`b` and the rectangle.
    pub fn distance_to_segment(&self, a: Point, b: Point) -> f64 {
        if self.intersects_segment(a, b) {
            return 0.0;
        }
        let ends = self.distance_to_point(a).min(self.distance_to_point(b));
        self.corners()
            .iter()
            .map(|&c| point_segment_distance(c, a, b))
            .fold(ends, f64::min)
    }

    /// Entry distance of a ray (origin `o`, unit direction `(ux, uy)`) into
    /// the rectangle, `None` if it misses or starts inside.
    pub fn ray_entry(&self, o: Point, ux: f64, uy: f64) -> Option<f64> {
        let mut t_near = f64::NEG_INFINITY;
        let mut t_far = f64::INFINITY;
        for (origin, dir, lo, hi) in [(o.x, ux, self.x0, self.x1), (o.y, uy, self.y0, self.y1)] {
            if dir == 0.0 {
                if origin < lo || origin > hi {
                    return None;
                }
            } else {
                let (mut ta, mut tb) = ((lo - origin) / dir, (hi - origin) / dir);
                if ta > tb {
                    std::mem::swap(&mut ta, &mut tb);
                }
                t_near = t_near.max(ta);
                t_far = t_far.min(tb);
            }
        }
        (t_near <= t_far && t_near > 0.0).then_some(t_near)
    }

    /// Distance from an interior origin to the rectangle boundary along a ray.
    pub fn ray_exit(&self, o: Point, ux: f64, uy: f64) -> Option<f64> {
        if !self.contains(o) {
            return None;
        }
        let tx = if ux > 0.0 {
            (self.x1 - o.x) / ux
        } else if ux < 0.0 {
            (self.x0 - o.x) / ux
        } else {
            f64::INFINITY
        };
        let ty = if uy > 0.0 {
            (self.y1 - o.y) / uy
        } else if uy < 0.0 {
            (self.y0 - o.y) / uy
        } else {
            f64::INFINITY
        };
        let t = tx.min(ty);
        t.is_finite().then_some(t)
    }
}

pub fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return p.distance(a);
    }
    let t = (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0);
    p.distance(a.lerp(b, t))
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(mut a: f64) -> f64 {
    if a.is_finite() {
        a %= 2.0 * PI;
        if a <= -PI {
            a += 2.0 * PI;
        } else if a > PI {
            a -= 2.0 * PI;
        }
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_stays_in_half_open_interval() {
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(0.25) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn segment_distance_cases() {
        let r = Rect::new(0.0, 0.0, 1.0, 1.0);
        assert_eq!(r.distance_to_segment(Point::new(-1.0, 0.5), Point::new(2.0, 0.5)), 0.0);
        assert!((r.distance_to_segment(Point::new(-1.0, 2.0), Point::new(2.0, 2.0)) - 1.0).abs() < 1e-12);
        // passes diagonally near a corner
        let d = r.distance_to_segment(Point::new(1.0, 2.0), Point::new(2.0, 1.0));
        assert!((d - (0.5f64).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn ray_entry_and_exit() {
        let r = Rect::new(2.0, -1.0, 3.0, 1.0);
        assert_eq!(r.ray_entry(Point::new(0.0, 0.0), 1.0, 0.0), Some(2.0));
        assert_eq!(r.ray_entry(Point::new(0.0, 0.0), -1.0, 0.0), None);
        let room = Rect::new(0.0, 0.0, 4.0, 4.0);
        assert_eq!(room.ray_exit(Point::new(1.0, 1.0), 0.0, 1.0), Some(3.0));
    }
}
