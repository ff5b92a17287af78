//! Normalized per-pixel saliency maps shared by the attention branch and the
//! bottom-up baselines.

use std::fmt;

use crate::error::{Error, Result};

/// Where a saliency map came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SaliencySource {
    Branch,
    VisualBackProp,
    Random,
}

impl SaliencySource {
    pub const ALL: [SaliencySource; 3] = [Self::Branch, Self::VisualBackProp, Self::Random];

    pub fn name(self) -> &'static str {
        match self {
            Self::Branch => "branch",
            Self::VisualBackProp => "visualbackprop",
            Self::Random => "random",
        }
    }
}

impl fmt::Display for SaliencySource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Row-major `height x width` map with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap {
    width: usize,
    height: usize,
    values: Vec<f32>,
}

/// The branch's attention maps obey the same contract.
pub type AttentionMap = SaliencyMap;

impl SaliencyMap {
    /// Min-max normalizes `raw`; a constant map becomes all zeros.
    pub fn normalized(width: usize, height: usize, raw: &[f32]) -> Result<Self> {
        if raw.len() != width * height || raw.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "{} values for a {width}x{height} map",
                raw.len()
            )));
        }
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite saliency value".into()));
        }
        let lo = raw.iter().copied().fold(f32::INFINITY, f32::min);
        let hi = raw.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let range = hi - lo;
        let values = if range > 0.0 {
            raw.iter().map(|&v| ((v - lo) / range).clamp(0.0, 1.0)).collect()
        } else {
            vec![0.0; raw.len()]
        };
        Ok(Self { width, height, values })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.values[row * self.width + col]
    }

    /// Same map with every value passed through `f` and renormalized.
    pub fn map_values(&self, f: impl Fn(f32) -> f32) -> Result<Self> {
        let raw: Vec<f32> = self.values.iter().map(|&v| f(v)).collect();
        Self::normalized(self.width, self.height, &raw)
    }

    /// Mass-weighted mean column index; the centre column for a zero map.
    pub fn mean_column(&self) -> f64 {
        let mut mass = 0.0f64;
        let mut moment = 0.0f64;
        for row in self.values.chunks_exact(self.width) {
            for (c, &v) in row.iter().enumerate() {
                mass += v as f64;
                moment += v as f64 * c as f64;
            }
        }
        if mass > 0.0 {
            moment / mass
        } else {
            (self.width as f64 - 1.0) / 2.0
        }
    }

    pub fn l1_distance(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs() as f64)
            .sum::<f64>()
            / self.values.len() as f64
    }

    /// Pixel indices ordered by descending saliency, ties in raster order.
    pub fn ranking(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.values.len()).collect();
        order.sort_by(|&a, &b| self.values[b].total_cmp(&self.values[a]).then(a.cmp(&b)));
        order
    }
}

/// Bilinear resampling with half-pixel centres and edge clamping.
pub fn upsample_bilinear(src: &[f32], in_w: usize, in_h: usize, out_w: usize, out_h: usize) -> Vec<f32> {
    assert_eq!(src.len(), in_w * in_h, "source size");
    let axis = |o: usize, n_in: usize, n_out: usize| -> (usize, usize, f32) {
        let x = ((o as f32 + 0.5) * n_in as f32 / n_out as f32 - 0.5).max(0.0);
        let i0 = (x.floor() as usize).min(n_in - 1);
        let i1 = (i0 + 1).min(n_in - 1);
        (i0, i1, x - i0 as f32)
    };
    let cols: Vec<_> = (0..out_w).map(|c| axis(c, in_w, out_w)).collect();
    let mut out = Vec::with_capacity(out_w * out_h);
    for r in 0..out_h {
        let (r0, r1, fy) = axis(r, in_h, out_h);
        for &(c0, c1, fx) in &cols {
            let top = src[r0 * in_w + c0] * (1.0 - fx) + src[r0 * in_w + c1] * fx;
            let bottom = src[r1 * in_w + c0] * (1.0 - fx) + src[r1 * in_w + c1] * fx;
            out.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_raw_map_normalizes_to_zero() {
        let m = SaliencyMap::normalized(2, 2, &[3.0; 4]).unwrap();
        assert!(m.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn normalized_range_is_unit() {
        let m = SaliencyMap::normalized(3, 1, &[-2.0, 0.5, 4.0]).unwrap();
        assert_eq!(m.values()[0], 0.0);
        assert_eq!(m.values()[2], 1.0);
    }

    #[test]
    fn ranking_breaks_ties_in_raster_order() {
        let m = SaliencyMap::normalized(2, 2, &[0.5, 1.0, 0.5, 0.0]).unwrap();
        assert_eq!(m.ranking(), vec![1, 0, 2, 3]);
    }

    #[test]
    fn upsample_of_constant_is_constant() {
        let up = upsample_bilinear(&[2.0; 16], 4, 4, 64, 64);
        assert!(up.iter().all(|&v| (v - 2.0).abs() < 1e-6));
    }

    #[test]
    fn upsample_preserves_horizontal_gradient_direction() {
        let src: Vec<f32> = (0..16).map(|i| (i % 4) as f32).collect();
        let up = upsample_bilinear(&src, 4, 4, 64, 64);
        let row = &up[..64];
        assert!(row.windows(2).all(|w| w[1] >= w[0]));
        assert_eq!(row[0], 0.0);
        assert_eq!(row[63], 3.0);
    }

    #[test]
    fn mean_column_of_right_half_mass() {
        let mut raw = vec![0.0; 8];
        raw[3] = 1.0;
        raw[7] = 1.0;
        let m = SaliencyMap::normalized(4, 2, &raw).unwrap();
        assert_eq!(m.mean_column(), 3.0);
    }
}
