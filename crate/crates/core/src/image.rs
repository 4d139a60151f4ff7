//! Pixel buffers, canonical tensors and the conversions between them.
//!
//! The canonical in-memory range for real-valued images is `[-1, 1]`
//! (matching the tanh output of the decoder). 8-bit samples map through
//! `v / 127.5 - 1` and back through `round((v + 1) * 127.5)` with
//! round-half-away-from-zero, which makes the 8-bit round trip exact.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::quantize::DiscretePlane;
use crate::scalar::Real;

/// 8-bit image, row-major, channel-interleaved. 1 or 3 channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelBuffer {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<u8>,
}

impl PixelBuffer {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<u8>) -> Self {
        assert!(channels == 1 || channels == 3, "channels must be 1 or 3");
        assert_eq!(data.len(), width * height * channels, "data length mismatch");
        PixelBuffer { width, height, channels, data }
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: u8) -> Self {
        Self::new(width, height, channels, vec![value; width * height * channels])
    }
}

/// Planar (channel-major) real-valued grid: `data[c * h * w + y * w + x]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume<T> {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<T>,
}

impl<T: Real> Volume<T> {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Volume { channels, height, width, data: vec![T::zero(); channels * height * width] }
    }

    #[inline]
    pub fn plane(&self, c: usize) -> &[T] {
        let hw = self.height * self.width;
        &self.data[c * hw..(c + 1) * hw]
    }

    #[inline]
    pub fn plane_mut(&mut self, c: usize) -> &mut [T] {
        let hw = self.height * self.width;
        &mut self.data[c * hw..(c + 1) * hw]
    }

    #[inline]
    pub fn at(&self, c: usize, y: usize, x: usize) -> T {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: T) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }
}

/// Three-channel image in the canonical `[-1, 1]` range.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor<T = f32>(pub Volume<T>);

impl<T: Real> ImageTensor<T> {
    pub fn new(volume: Volume<T>) -> Self {
        assert_eq!(volume.channels, 3, "image tensors have 3 channels");
        assert!(volume.height > 0 && volume.width > 0);
        ImageTensor(volume)
    }

    pub fn filled(height: usize, width: usize, rgb: [T; 3]) -> Self {
        let mut v = Volume::zeros(3, height, width);
        for c in 0..3 {
            v.plane_mut(c).fill(rgb[c]);
        }
        ImageTensor(v)
    }

    pub fn height(&self) -> usize {
        self.0.height
    }

    pub fn width(&self) -> usize {
        self.0.width
    }
}

/// Errors from decoding or converting image data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ImageError {
    /// The file could not be read or parsed.
    UnreadableFile(String),
    /// Parsed fine but is not an 8-bit RGB/RGBA/grayscale PNG.
    UnsupportedFormat(String),
    /// `render_binary` got a plane with values other than -1/+1.
    NotBinaryPlane,
    /// A rendered sample does not correspond to any quantizer level.
    NotInLevelSet { sample: u8 },
    /// Dimensions or channel counts disagree.
    ShapeMismatch,
}

impl core::fmt::Display for ImageError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            ImageError::UnreadableFile(m) => write!(f, "unreadable file: {m}"),
            ImageError::UnsupportedFormat(m) => write!(f, "unsupported format: {m}"),
            ImageError::NotBinaryPlane => write!(f, "not a binary plane"),
            ImageError::NotInLevelSet { sample } => {
                write!(f, "input not in level set: sample {sample}")
            }
            ImageError::ShapeMismatch => write!(f, "shape mismatch"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for ImageError {}

/// 8-bit sample to canonical value: `v / 127.5 - 1`, computed in f64.
#[inline]
pub fn sample_to_value<T: Real>(v: u8) -> T {
    T::from_f64(v as f64 / 127.5 - 1.0)
}

/// Canonical value to 8-bit sample: `round((v + 1) * 127.5)` clamped to
/// `[0, 255]`, rounding half away from zero.
#[inline]
pub fn value_to_sample<T: Real>(v: T) -> u8 {
    let x = (v.to_f64() + 1.0) * 127.5;
    let r = x.round(); // f64::round is round-half-away-from-zero
    if r <= 0.0 {
        0
    } else if r >= 255.0 {
        255
    } else {
        r as u8
    }
}

/// Buffer to canonical tensor. Grayscale input is replicated to 3 channels.
pub fn to_tensor<T: Real>(buf: &PixelBuffer) -> ImageTensor<T> {
    let (h, w) = (buf.height, buf.width);
    let mut vol = Volume::zeros(3, h, w);
    let hw = h * w;
    match buf.channels {
        3 => {
            for i in 0..hw {
                for c in 0..3 {
                    vol.data[c * hw + i] = sample_to_value(buf.data[i * 3 + c]);
                }
            }
        }
        1 => {
            for i in 0..hw {
                let v = sample_to_value::<T>(buf.data[i]);
                for c in 0..3 {
                    vol.data[c * hw + i] = v;
                }
            }
        }
        _ => unreachable!("PixelBuffer invariant"),
    }
    ImageTensor::new(vol)
}

/// Tensor back to an interleaved 3-channel 8-bit buffer.
pub fn from_tensor<T: Real>(t: &ImageTensor<T>) -> PixelBuffer {
    let (h, w) = (t.height(), t.width());
    let hw = h * w;
    let mut data = vec![0u8; hw * 3];
    for i in 0..hw {
        for c in 0..3 {
            data[i * 3 + c] = value_to_sample(t.0.data[c * hw + i]);
        }
    }
    PixelBuffer::new(w, h, 3, data)
}

/// Render a strictly binary plane: -1 becomes black (0), +1 white (255).
pub fn render_binary<T: Real>(p: &DiscretePlane<T>) -> Result<PixelBuffer, ImageError> {
    let one = T::one();
    let mut data = Vec::with_capacity(p.values.len());
    for &v in &p.values {
        if v == one {
            data.push(255u8);
        } else if v == -one {
            data.push(0u8);
        } else {
            return Err(ImageError::NotBinaryPlane);
        }
    }
    Ok(PixelBuffer::new(p.width, p.height, 1, data))
}

/// Render any discrete plane by the affine level map
/// `level -> round((level + 1) * 127.5)`. Injective for L <= 256, so
/// [`plane_from_rendered`] can invert it exactly.
pub fn render_plane<T: Real>(p: &DiscretePlane<T>) -> PixelBuffer {
    let data = p.values.iter().map(|&v| value_to_sample(v)).collect();
    PixelBuffer::new(p.width, p.height, 1, data)
}

/// Invert [`render_plane`]: map 8-bit samples back to exact level values for
/// an `levels`-level quantizer. Fails with `NotInLevelSet` on any sample that
/// is not the rendering of a level.
pub fn plane_from_rendered<T: Real>(
    buf: &PixelBuffer,
    levels: u32,
) -> Result<DiscretePlane<T>, ImageError> {
    if buf.channels != 1 {
        return Err(ImageError::ShapeMismatch);
    }
    let spec = crate::quantize::QuantSpec::new(levels);
    // Sample value for each level; levels are few, linear scan per byte is
    // avoided with a 256-entry reverse table.
    let mut reverse: [Option<usize>; 256] = [None; 256];
    for (k, &lv) in spec.level_set.iter().enumerate() {
        let s = value_to_sample(lv);
        reverse[s as usize] = Some(k);
    }
    let mut values = Vec::with_capacity(buf.data.len());
    for &s in &buf.data {
        match reverse[s as usize] {
            Some(k) => values.push(spec.level_set[k]),
            None => return Err(ImageError::NotInLevelSet { sample: s }),
        }
    }
    Ok(DiscretePlane { height: buf.height, width: buf.width, values, levels })
}

#[inline]
fn lerp<T: Real>(a: T, b: T, t: T) -> T {
    // a + t*(b-a): exact on constants, which keeps resampled flat images flat.
    a + t * (b - a)
}

/// Center-crop to a square, then bilinear-resample to `n`×`n`.
pub fn center_crop_resize<T: Real>(t: &ImageTensor<T>, n: usize) -> ImageTensor<T> {
    assert!(n > 0);
    let (h, w) = (t.height(), t.width());
    let side = h.min(w);
    let y0 = (h - side) / 2;
    let x0 = (w - side) / 2;

    if side == n {
        // Pure crop, no resample.
        let mut out = Volume::zeros(3, n, n);
        for c in 0..3 {
            for y in 0..n {
                let src = &t.0.plane(c)[(y0 + y) * w + x0..(y0 + y) * w + x0 + n];
                out.plane_mut(c)[y * n..(y + 1) * n].copy_from_slice(src);
            }
        }
        return ImageTensor::new(out);
    }

    let scale = side as f64 / n as f64;
    let mut out = Volume::zeros(3, n, n);
    for c in 0..3 {
        let src = t.0.plane(c);
        for oy in 0..n {
            let sy = ((oy as f64 + 0.5) * scale - 0.5).max(0.0);
            let y_lo = (sy.floor() as usize).min(side - 1);
            let y_hi = (y_lo + 1).min(side - 1);
            let ty = T::from_f64(sy - y_lo as f64);
            for ox in 0..n {
                let sx = ((ox as f64 + 0.5) * scale - 0.5).max(0.0);
                let x_lo = (sx.floor() as usize).min(side - 1);
                let x_hi = (x_lo + 1).min(side - 1);
                let tx = T::from_f64(sx - x_lo as f64);
                let p00 = src[(y0 + y_lo) * w + x0 + x_lo];
                let p01 = src[(y0 + y_lo) * w + x0 + x_hi];
                let p10 = src[(y0 + y_hi) * w + x0 + x_lo];
                let p11 = src[(y0 + y_hi) * w + x0 + x_hi];
                let top = lerp(p00, p01, tx);
                let bot = lerp(p10, p11, tx);
                out.set(c, oy, ox, lerp(top, bot, ty));
            }
        }
    }
    ImageTensor::new(out)
}

/// Unweighted channel-mean grayscale of an interleaved buffer, rounded
/// half away from zero.
pub fn to_grayscale(buf: &PixelBuffer) -> PixelBuffer {
    match buf.channels {
        1 => buf.clone(),
        3 => {
            let hw = buf.width * buf.height;
            let mut data = Vec::with_capacity(hw);
            for i in 0..hw {
                let s = buf.data[i * 3] as f64 + buf.data[i * 3 + 1] as f64
                    + buf.data[i * 3 + 2] as f64;
                data.push((s / 3.0).round() as u8);
            }
            PixelBuffer::new(buf.width, buf.height, 1, data)
        }
        _ => unreachable!(),
    }
}

/// Used by tests and the CLI to describe buffers in error messages.
pub fn describe(buf: &PixelBuffer) -> String {
    format!("{}x{}x{}", buf.width, buf.height, buf.channels)
}
