//! Classical reference binarizers for side-by-side comparison grids:
//! Otsu's global threshold and Floyd-Steinberg error diffusion. Both operate
//! on a single channel; color inputs are collapsed with the unweighted
//! channel mean first, which is exactly the information loss the learned
//! encoder avoids.

use alloc::vec;
use alloc::vec::Vec;

use crate::image::PixelBuffer;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BaselineError {
    /// All pixels share one value; no threshold separates anything.
    DegenerateHistogram,
    NotSingleChannel,
}

impl core::fmt::Display for BaselineError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            BaselineError::DegenerateHistogram => write!(f, "degenerate histogram"),
            BaselineError::NotSingleChannel => write!(f, "expected a single-channel image"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for BaselineError {}

/// 256-bin intensity histogram.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayHistogram {
    pub counts: [u32; 256],
}

impl GrayHistogram {
    pub fn of(gray: &PixelBuffer) -> Self {
        let mut counts = [0u32; 256];
        for &v in &gray.data {
            counts[v as usize] += 1;
        }
        GrayHistogram { counts }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }
}

/// Between-class variance of splitting at `t`: class 0 holds values `< t`,
/// class 1 holds values `>= t`. `None` when either class is empty.
pub fn between_class_variance(hist: &GrayHistogram, t: usize) -> Option<f64> {
    let mut w0 = 0.0f64;
    let mut s0 = 0.0f64;
    for v in 0..t {
        w0 += hist.counts[v] as f64;
        s0 += (v as f64) * hist.counts[v] as f64;
    }
    let mut w1 = 0.0f64;
    let mut s1 = 0.0f64;
    for v in t..256 {
        w1 += hist.counts[v] as f64;
        s1 += (v as f64) * hist.counts[v] as f64;
    }
    if w0 == 0.0 || w1 == 0.0 {
        return None;
    }
    let d = s0 / w0 - s1 / w1;
    Some(w0 * w1 * d * d)
}

/// Otsu's threshold: the `t` in `1..=255` maximizing the between-class
/// variance, smallest among ties. Pixels `>= t` binarize to white.
pub fn otsu_threshold(gray: &PixelBuffer) -> Result<u8, BaselineError> {
    if gray.channels != 1 {
        return Err(BaselineError::NotSingleChannel);
    }
    let hist = GrayHistogram::of(gray);
    let total = hist.total() as f64;
    if total == 0.0 {
        return Err(BaselineError::DegenerateHistogram);
    }

    // Single pass with running class sums; equivalent to evaluating
    // between_class_variance at every t (the test checks this directly).
    let sum_all: f64 = hist.counts.iter().enumerate().map(|(v, &c)| v as f64 * c as f64).sum();
    let mut w0 = 0.0f64;
    let mut s0 = 0.0f64;
    let mut best: Option<(f64, u8)> = None;
    for t in 1..=255usize {
        let below = hist.counts[t - 1] as f64;
        w0 += below;
        s0 += (t - 1) as f64 * below;
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let d = s0 / w0 - (sum_all - s0) / w1;
        let var = w0 * w1 * d * d;
        match best {
            Some((bv, _)) if var <= bv => {}
            _ => best = Some((var, t as u8)),
        }
    }
    best.map(|(_, t)| t).ok_or(BaselineError::DegenerateHistogram)
}

/// Threshold a grayscale buffer into a strict black/white buffer.
pub fn apply_threshold(gray: &PixelBuffer, t: u8) -> PixelBuffer {
    let data = gray.data.iter().map(|&v| if v >= t { 255 } else { 0 }).collect();
    PixelBuffer::new(gray.width, gray.height, 1, data)
}

/// Floyd-Steinberg error diffusion, plain raster scan (no serpentine):
/// weights 7/16 right, 3/16 below-left, 5/16 below, 1/16 below-right.
/// Values `>= 128` (after accumulated error) round to white.
pub fn floyd_steinberg(gray: &PixelBuffer) -> Result<PixelBuffer, BaselineError> {
    if gray.channels != 1 {
        return Err(BaselineError::NotSingleChannel);
    }
    let (w, h) = (gray.width, gray.height);
    let mut work: Vec<f32> = gray.data.iter().map(|&v| v as f32).collect();
    let mut out = vec![0u8; w * h];
    for y in 0..h {
        for x in 0..w {
            let idx = y * w + x;
            let old = work[idx];
            let new = if old >= 128.0 { 255.0 } else { 0.0 };
            out[idx] = new as u8;
            let err = old - new;
            if x + 1 < w {
                work[idx + 1] += err * (7.0 / 16.0);
            }
            if y + 1 < h {
                if x > 0 {
                    work[idx + w - 1] += err * (3.0 / 16.0);
                }
                work[idx + w] += err * (5.0 / 16.0);
                if x + 1 < w {
                    work[idx + w + 1] += err * (1.0 / 16.0);
                }
            }
        }
    }
    Ok(PixelBuffer::new(w, h, 1, out))
}

/// Tile buffers horizontally into one 3-channel buffer, in the given order.
/// Single-channel tiles are replicated to gray RGB. All tiles must share
/// dimensions.
pub fn compose_grid(tiles: &[&PixelBuffer]) -> Result<PixelBuffer, BaselineError> {
    assert!(!tiles.is_empty(), "need at least one tile");
    let (w, h) = (tiles[0].width, tiles[0].height);
    for t in tiles {
        if t.width != w || t.height != h {
            return Err(BaselineError::NotSingleChannel);
        }
    }
    let total_w = w * tiles.len();
    let mut data = vec![0u8; total_w * h * 3];
    for (ti, tile) in tiles.iter().enumerate() {
        for y in 0..h {
            for x in 0..w {
                let dst = (y * total_w + ti * w + x) * 3;
                match tile.channels {
                    3 => {
                        let src = (y * w + x) * 3;
                        data[dst..dst + 3].copy_from_slice(&tile.data[src..src + 3]);
                    }
                    1 => {
                        let v = tile.data[y * w + x];
                        data[dst] = v;
                        data[dst + 1] = v;
                        data[dst + 2] = v;
                    }
                    _ => unreachable!(),
                }
            }
        }
    }
    Ok(PixelBuffer::new(total_w, h, 3, data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;

    /// Independent oracle: evaluate the published between-class-variance
    /// definition at all 256 thresholds with direct summation.
    pub fn otsu_bruteforce(gray: &PixelBuffer) -> Option<u8> {
        let hist = GrayHistogram::of(gray);
        let mut best: Option<(f64, u8)> = None;
        for t in 0..=255usize {
            if let Some(var) = between_class_variance(&hist, t) {
                match best {
                    Some((bv, _)) if var <= bv => {}
                    _ => best = Some((var, t as u8)),
                }
            }
        }
        best.map(|(_, t)| t)
    }

    #[test]
    fn otsu_separates_bimodal_halves() {
        let mut data = vec![50u8; 128];
        data.extend(vec![200u8; 128]);
        let buf = PixelBuffer::new(16, 16, 1, data);
        let t = otsu_threshold(&buf).unwrap();
        assert!(t > 50 && t <= 200, "t = {t}");
        let brute = otsu_bruteforce(&buf).unwrap();
        assert_eq!(t, brute);
    }

    #[test]
    fn otsu_two_pixels() {
        let buf = PixelBuffer::new(2, 1, 1, vec![0, 255]);
        let t = otsu_threshold(&buf).unwrap();
        assert!(t > 0 && t <= 255);
        let bin = apply_threshold(&buf, t);
        assert_eq!(bin.data, vec![0, 255]);
    }

    #[test]
    fn otsu_constant_image_is_degenerate() {
        let buf = PixelBuffer::filled(8, 8, 1, 77);
        assert_eq!(otsu_threshold(&buf), Err(BaselineError::DegenerateHistogram));
    }

    #[test]
    fn otsu_matches_bruteforce_on_random_images() {
        let mut s = Stream::new(1001, 0);
        for trial in 0..100 {
            // Mix of unimodal and bimodal random content.
            let data: Vec<u8> = (0..256)
                .map(|_| {
                    if trial % 2 == 0 {
                        s.next_u32() as u8
                    } else if s.uniform_f64() < 0.5 {
                        (s.uniform_in(0.0, 80.0)) as u8
                    } else {
                        (s.uniform_in(150.0, 255.0)) as u8
                    }
                })
                .collect();
            let buf = PixelBuffer::new(16, 16, 1, data);
            match (otsu_threshold(&buf), otsu_bruteforce(&buf)) {
                (Ok(a), Some(b)) => assert_eq!(a, b, "trial {trial}"),
                (Err(BaselineError::DegenerateHistogram), None) => {}
                (a, b) => panic!("trial {trial}: {a:?} vs {b:?}"),
            }
        }
    }

    #[test]
    fn otsu_is_permutation_invariant() {
        let mut s = Stream::new(55, 0);
        let data: Vec<u8> = (0..64).map(|_| s.next_u32() as u8).collect();
        let mut shuffled = data.clone();
        // Fisher-Yates with the same stream.
        for i in (1..shuffled.len()).rev() {
            let j = s.uniform_u64_below(i as u64 + 1) as usize;
            shuffled.swap(i, j);
        }
        let a = otsu_threshold(&PixelBuffer::new(8, 8, 1, data));
        let b = otsu_threshold(&PixelBuffer::new(8, 8, 1, shuffled));
        assert_eq!(a, b);
    }

    #[test]
    fn fsd_constant_extremes() {
        let black = floyd_steinberg(&PixelBuffer::filled(16, 16, 1, 0)).unwrap();
        assert!(black.data.iter().all(|&v| v == 0));
        let white = floyd_steinberg(&PixelBuffer::filled(16, 16, 1, 255)).unwrap();
        assert!(white.data.iter().all(|&v| v == 255));
    }

    #[test]
    fn fsd_output_is_strictly_binary() {
        let mut s = Stream::new(8, 0);
        let data: Vec<u8> = (0..32 * 32).map(|_| s.next_u32() as u8).collect();
        let out = floyd_steinberg(&PixelBuffer::new(32, 32, 1, data)).unwrap();
        assert!(out.data.iter().all(|&v| v == 0 || v == 255));
    }

    #[test]
    fn fsd_preserves_mid_tone_on_large_constant_image() {
        let out = floyd_steinberg(&PixelBuffer::filled(256, 256, 1, 128)).unwrap();
        let mean = out.data.iter().map(|&v| v as f64).sum::<f64>() / out.data.len() as f64;
        assert!((mean - 128.0).abs() <= 2.0, "mean {mean}");
    }

    #[test]
    fn grid_tiles_in_order() {
        let a = PixelBuffer::filled(4, 4, 3, 10);
        let b = PixelBuffer::filled(4, 4, 1, 200);
        let only = compose_grid(&[&a]).unwrap();
        assert_eq!((only.width, only.height, only.channels), (4, 4, 3));
        let grid = compose_grid(&[&a, &b]).unwrap();
        assert_eq!(grid.width, 8);
        assert_eq!(grid.data[(0 * 8 + 0) * 3], 10);
        assert_eq!(grid.data[(0 * 8 + 4) * 3], 200);
        assert_eq!(grid.data[(0 * 8 + 4) * 3 + 2], 200);
    }
}
