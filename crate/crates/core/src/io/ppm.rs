use std::path::Path;

use super::checkpoint::write_atomic;
use crate::error::{Error, Result};
use crate::saliency::SaliencyMap;
use crate::sim::SemanticFrame;

/// Binary P6 encoding of packed RGB pixels.
pub fn encode_ppm(width: usize, height: usize, rgb: &[u8]) -> Result<Vec<u8>> {
    if rgb.len() != width * height * 3 {
        return Err(Error::InvalidArgument(format!(
            "{} bytes for a {width}x{height} RGB image",
            rgb.len()
        )));
    }
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(rgb);
    Ok(out)
}

pub fn write_ppm(path: &Path, width: usize, height: usize, rgb: &[u8]) -> Result<()> {
    write_atomic(path, &encode_ppm(width, height, rgb)?)
}

/// Palette rendering of a semantic frame.
pub fn frame_rgb(frame: &SemanticFrame) -> Vec<u8> {
    frame.to_rgb()
}

pub fn grayscale_rgb(map: &SaliencyMap) -> Vec<u8> {
    map.values()
        .iter()
        .flat_map(|&v| {
            let g = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
            [g, g, g]
        })
        .collect()
}

/// The frame dimmed to 40%, with the map added into the red channel.
pub fn overlay_rgb(frame: &SemanticFrame, map: &SaliencyMap) -> Vec<u8> {
    frame
        .to_rgb()
        .chunks_exact(3)
        .zip(map.values())
        .flat_map(|(px, &m)| {
            let dim = |c: u8| c as f32 * 0.4;
            let r = dim(px[0]) + 153.0 * m.clamp(0.0, 1.0);
            [r.round().min(255.0) as u8, dim(px[1]).round() as u8, dim(px[2]).round() as u8]
        })
        .collect()
}
