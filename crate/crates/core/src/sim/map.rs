use std::collections::VecDeque;
use std::fmt::Write as _;

use super::geometry::{Point, Rect};
use crate::error::{Error, Result};

/// Grid resolution (m) of the free-space connectivity check.
const CONNECTIVITY_CELL: f64 = 0.05;

const BUNDLED_ROOM: &str = include_str!("../../assets/room.map");

/// Rectangular room whose boundary is wall, containing rectangular furniture.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldMap {
    bounds: Rect,
    furniture: Vec<Rect>,
}

impl WorldMap {
    /// Builds a map; checks furniture placement but not connectivity.
    pub fn new(bounds: Rect, furniture: Vec<Rect>) -> Result<Self> {
        if !bounds.is_well_formed() {
            return Err(Error::InvalidMap(format!("malformed bounds {bounds:?}")));
        }
        for f in &furniture {
            if !f.is_well_formed() {
                return Err(Error::InvalidMap(format!("malformed furniture {f:?}")));
            }
            if !bounds.contains_rect(f) {
                return Err(Error::InvalidMap(format!("furniture {f:?} leaves the bounds")));
            }
        }
        Ok(Self { bounds, furniture })
    }

    /// The 8 x 8 m living-room layout shipped with the crate.
    pub fn bundled() -> Self {
        Self::parse(BUNDLED_ROOM).expect("bundled map is valid")
    }

    pub fn bounds(&self) -> Rect {
        self.bounds
    }

    pub fn furniture(&self) -> &[Rect] {
        &self.furniture
    }

    /// Clearance from `p` to the nearest obstacle (walls included).
    pub fn clearance(&self, p: Point) -> f64 {
        let b = self.bounds;
        let walls = (p.x - b.x0).min(b.x1 - p.x).min(p.y - b.y0).min(b.y1 - p.y);
        self.furniture
            .iter()
            .map(|f| f.distance_to_point(p))
            .fold(walls, f64::min)
    }

    /// True when a disk of `radius` at `p` touches no obstacle.
    pub fn is_free(&self, p: Point, radius: f64) -> bool {
        self.clearance(p) >= radius
    }

    /// True when a disk of `radius` swept along `a`-`b` touches no obstacle.
    pub fn segment_is_free(&self, a: Point, b: Point, radius: f64) -> bool {
        let inner = match self.bounds.shrunk(radius) {
            Some(r) => r,
            None => return false,
        };
        inner.contains(a)
            && inner.contains(b)
            && self.furniture.iter().all(|f| f.distance_to_segment(a, b) >= radius)
    }

    /// Parses the line format: `bounds x0 y0 x1 y1`, `furniture x0 y0 x1 y1`,
    /// `#` comments. Connectivity is validated.
    pub fn parse(text: &str) -> Result<Self> {
        let mut bounds = None;
        let mut furniture = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let keyword = parts.next().unwrap_or_default();
            let nums: Vec<f64> = parts
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::InvalidMap(format!("line {}: {e}", i + 1)))?;
            if nums.len() != 4 {
                return Err(Error::InvalidMap(format!(
                    "line {}: expected 4 coordinates, got {}",
                    i + 1,
                    nums.len()
                )));
            }
            let rect = Rect::new(nums[0], nums[1], nums[2], nums[3]);
            match keyword {
                "bounds" if bounds.is_none() => bounds = Some(rect),
                "bounds" => return Err(Error::InvalidMap(format!("line {}: duplicate bounds", i + 1))),
                "furniture" => furniture.push(rect),
                other => {
                    return Err(Error::InvalidMap(format!("line {}: unknown keyword `{other}`", i + 1)))
                }
            }
        }
        let bounds = bounds.ok_or_else(|| Error::InvalidMap("missing `bounds` line".into()))?;
        let map = Self::new(bounds, furniture)?;
        map.validate_connectivity(0.0)?;
        Ok(map)
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let b = self.bounds;
        let _ = writeln!(out, "bounds {} {} {} {}", b.x0, b.y0, b.x1, b.y1);
        for f in &self.furniture {
            let _ = writeln!(out, "furniture {} {} {} {}", f.x0, f.y0, f.x1, f.y1);
        }
        out
    }

    /// Checks that the free space for a disk of `radius` forms one
    /// connected region on a fine grid.
    pub fn validate_connectivity(&self, radius: f64) -> Result<()> {
        let b = self.bounds;
        let cols = (b.width() / CONNECTIVITY_CELL).floor() as usize;
        let rows = (b.height() / CONNECTIVITY_CELL).floor() as usize;
        let center = |r: usize, c: usize| {
            Point::new(
                b.x0 + (c as f64 + 0.5) * CONNECTIVITY_CELL,
                b.y0 + (r as f64 + 0.5) * CONNECTIVITY_CELL,
            )
        };
        let free: Vec<bool> = (0..rows * cols)
            .map(|i| {
                let p = center(i / cols, i % cols);
                self.furniture.iter().all(|f| f.distance_to_point(p) > radius)
                    && self.clearance(p) >= radius
            })
            .collect();
        let total = free.iter().filter(|&&f| f).count();
        let Some(start) = free.iter().position(|&f| f) else {
            return Err(Error::InvalidMap("no free space".into()));
        };
        let mut seen = vec![false; free.len()];
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        let mut reached = 0;
        while let Some(i) = queue.pop_front() {
            reached += 1;
            let (r, c) = (i / cols, i % cols);
            let neighbours = [
                (r > 0).then(|| i - cols),
                (r + 1 < rows).then(|| i + cols),
                (c > 0).then(|| i - 1),
                (c + 1 < cols).then(|| i + 1),
            ];
            for j in neighbours.into_iter().flatten() {
                if free[j] && !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        if reached != total {
            return Err(Error::InvalidMap(format!(
                "free space is disconnected ({reached} of {total} cells reachable)"
            )));
        }
        Ok(())
    }
}
