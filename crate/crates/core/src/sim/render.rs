use super::env::RobotPose;
use super::geometry::Point;
use super::map::WorldMap;
use crate::error::{Error, Result};

/// Semantic class of a pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Class {
    Floor = 0,
    Wall = 1,
    Furniture = 2,
}

impl Class {
    pub const COUNT: usize = 3;

    /// Display palette: floor gray, wall white, furniture red.
    pub fn rgb(self) -> [u8; 3] {
        match self {
            Class::Floor => [128, 128, 128],
            Class::Wall => [255, 255, 255],
            Class::Furniture => [255, 0, 0],
        }
    }

    pub fn from_index(i: u8) -> Option<Class> {
        match i {
            0 => Some(Class::Floor),
            1 => Some(Class::Wall),
            2 => Some(Class::Furniture),
            _ => None,
        }
    }
}

/// `height x width` class-index image, row-major, row 0 at the top.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SemanticFrame {
    width: usize,
    height: usize,
    classes: Vec<u8>,
}

impl SemanticFrame {
    pub fn filled(width: usize, height: usize, class: Class) -> Self {
        Self {
            width,
            height,
            classes: vec![class as u8; width * height],
        }
    }

    pub fn from_classes(width: usize, height: usize, classes: Vec<u8>) -> Result<Self> {
        if classes.len() != width * height || width == 0 || height == 0 {
            return Err(Error::InvalidArgument(format!(
                "frame {width}x{height} needs {} pixels, got {}",
                width * height,
                classes.len()
            )));
        }
        if let Some(bad) = classes.iter().find(|&&c| Class::from_index(c).is_none()) {
            return Err(Error::InvalidArgument(format!("unknown class index {bad}")));
        }
        Ok(Self {
            width,
            height,
            classes,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn classes(&self) -> &[u8] {
        &self.classes
    }

    pub fn get(&self, row: usize, col: usize) -> Class {
        Class::from_index(self.classes[row * self.width + col]).expect("valid class")
    }

    pub fn set_pixel(&mut self, index: usize, class: Class) {
        self.classes[index] = class as u8;
    }

    /// 3-channel one-hot encoding, channel-major (`[3, H, W]`).
    pub fn write_one_hot<T: Copy>(&self, zero: T, one: T, out: &mut [T]) {
        let area = self.width * self.height;
        debug_assert_eq!(out.len(), Class::COUNT * area);
        out.fill(zero);
        for (i, &c) in self.classes.iter().enumerate() {
            out[c as usize * area + i] = one;
        }
    }

    pub fn to_rgb(&self) -> Vec<u8> {
        self.classes
            .iter()
            .flat_map(|&c| Class::from_index(c).expect("valid class").rgb())
            .collect()
    }

    pub fn count(&self, class: Class) -> usize {
        self.classes.iter().filter(|&&c| c == class as u8).count()
    }
}

/// Camera model of the column raycaster.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    pub width: usize,
    pub height: usize,
    /// Horizontal field of view, radians.
    pub fov: f64,
    /// Object height in meters at which a span fills `focal` pixels at 1 m.
    pub object_height: f64,
}

impl Camera {
    /// Focal length in pixels.
    pub fn focal(&self) -> f64 {
        (self.width as f64 / 2.0) / (self.fov / 2.0).tan()
    }

    /// Angle of column `c` relative to the heading; positive is left.
    pub fn column_offset(&self, c: usize) -> f64 {
        let u = 1.0 - 2.0 * (c as f64 + 0.5) / self.width as f64;
        (u * (self.fov / 2.0).tan()).atan()
    }

    /// Span height in pixels for a perpendicular distance: `min(H, c / d)`.
    pub fn span_height(&self, perpendicular: f64) -> f64 {
        (self.focal() * self.object_height / perpendicular).min(self.height as f64)
    }
}

/// Renders the semantic view from `pose`.
///
/// Each column casts one ray; the first object hit paints a span centred on
/// the horizon whose height is inversely proportional to the perpendicular
/// distance. Rows below the span are floor, rows above are wall.
pub fn render(pose: &RobotPose, map: &WorldMap, camera: &Camera) -> Result<SemanticFrame> {
    let origin = Point::new(pose.x, pose.y);
    let bounds = map.bounds();
    if !bounds.contains(origin) {
        return Err(Error::InvalidPose(format!("({}, {}) outside the map bounds", pose.x, pose.y)));
    }
    let (w, h) = (camera.width, camera.height);
    let mut frame = SemanticFrame::filled(w, h, Class::Floor);
    let horizon = h as f64 / 2.0;
    for c in 0..w {
        let offset = camera.column_offset(c);
        let angle = pose.heading + offset;
        let (uy, ux) = angle.sin_cos();
        let wall = bounds.ray_exit(origin, ux, uy).ok_or_else(|| {
            Error::InvalidMap(format!("ray from ({}, {}) escapes the bounds", pose.x, pose.y))
        })?;
        let (mut dist, mut class) = (wall, Class::Wall);
        for f in map.furniture() {
            if let Some(t) = f.ray_entry(origin, ux, uy) {
                if t < dist {
                    dist = t;
                    class = Class::Furniture;
                }
            }
        }
        let perpendicular = (dist * offset.cos()).max(1e-9);
        let span = camera.span_height(perpendicular);
        let (top, bottom) = (horizon - span / 2.0, horizon + span / 2.0);
        for r in 0..h {
            let y = r as f64 + 0.5;
            let px = if y < top {
                Class::Wall
            } else if y < bottom {
                class
            } else {
                Class::Floor
            };
            frame.classes[r * w + c] = px as u8;
        }
    }
    Ok(frame)
}
