//! Synthetic training images: a constant-color background with a handful of
//! hard-edged ovals and rectangles in uniformly random colors, covering the
//! color space that photograph corpora miss.

use alloc::vec::Vec;

use crate::image::{sample_to_value, ImageTensor, Volume};
use crate::rng::Stream;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthConfig {
    pub resolution: usize,
    pub min_shapes: usize,
    pub max_shapes: usize,
    pub seed: u64,
}

impl SynthConfig {
    pub fn new(resolution: usize, seed: u64) -> Self {
        SynthConfig { resolution, min_shapes: 2, max_shapes: 5, seed }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ShapeKind {
    Oval,
    Rectangle,
}

/// One shape to rasterize; may extend beyond the canvas and is clipped at
/// raster time.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeSpec {
    pub kind: ShapeKind,
    pub center: (f64, f64),
    /// Half-extent per axis, in pixels; both positive.
    pub extents: (f64, f64),
    pub color: [u8; 3],
}

// Stream ids under the synth seed. Each image index gets its own stream so
// generation is order-independent and parallel-safe.
fn image_stream(cfg: &SynthConfig, index: u64) -> Stream {
    Stream::new(cfg.seed, index)
}

fn random_color(s: &mut Stream) -> [u8; 3] {
    // One uniform draw over the full 24-bit space.
    let c = s.uniform_u64_below(1 << 24) as u32;
    [(c >> 16) as u8, (c >> 8) as u8, c as u8]
}

/// The shape list and background color for image `index`, before raster.
pub fn plan_synthetic(cfg: &SynthConfig, index: u64) -> ([u8; 3], Vec<ShapeSpec>) {
    assert!(cfg.min_shapes >= 1 && cfg.min_shapes <= cfg.max_shapes);
    let mut s = image_stream(cfg, index);
    let background = random_color(&mut s);
    let count =
        s.uniform_range_inclusive(cfg.min_shapes as u64, cfg.max_shapes as u64) as usize;
    let side = cfg.resolution as f64;
    let shapes = (0..count)
        .map(|_| {
            let kind = if s.uniform_u64_below(2) == 0 { ShapeKind::Oval } else { ShapeKind::Rectangle };
            let center = (s.uniform_in(0.0, side), s.uniform_in(0.0, side));
            // Half-extents uniform in [5%, 70%] of the canvas side, per axis.
            let extents = (s.uniform_in(0.05 * side, 0.70 * side), s.uniform_in(0.05 * side, 0.70 * side));
            let color = random_color(&mut s);
            ShapeSpec { kind, center, extents, color }
        })
        .collect();
    (background, shapes)
}

/// Deterministic synthetic image `index` of the family keyed by `cfg.seed`.
/// Hard-edged rasterization: a pixel belongs to a shape iff its center is
/// inside, no anti-aliasing, later shapes painted over earlier ones.
pub fn generate_synthetic<T: Real>(cfg: &SynthConfig, index: u64) -> ImageTensor<T> {
    let (background, shapes) = plan_synthetic(cfg, index);
    let n = cfg.resolution;
    let mut vol = Volume::zeros(3, n, n);
    for c in 0..3 {
        vol.plane_mut(c).fill(sample_to_value(background[c]));
    }
    for shape in &shapes {
        let (cx, cy) = shape.center;
        let (ex, ey) = shape.extents;
        let rgb = [
            sample_to_value::<T>(shape.color[0]),
            sample_to_value::<T>(shape.color[1]),
            sample_to_value::<T>(shape.color[2]),
        ];
        // Clip the bounding box to the canvas.
        let x0 = (cx - ex).floor().max(0.0) as usize;
        let x1 = ((cx + ex).ceil().min(n as f64)) as usize;
        let y0 = (cy - ey).floor().max(0.0) as usize;
        let y1 = ((cy + ey).ceil().min(n as f64)) as usize;
        for y in y0..y1 {
            let py = y as f64 + 0.5;
            for x in x0..x1 {
                let px = x as f64 + 0.5;
                let inside = match shape.kind {
                    ShapeKind::Rectangle => {
                        (px - cx).abs() <= ex && (py - cy).abs() <= ey
                    }
                    ShapeKind::Oval => {
                        let dx = (px - cx) / ex;
                        let dy = (py - cy) / ey;
                        dx * dx + dy * dy <= 1.0
                    }
                };
                if inside {
                    for c in 0..3 {
                        vol.set(c, y, x, rgb[c]);
                    }
                }
            }
        }
    }
    ImageTensor::new(vol)
}
