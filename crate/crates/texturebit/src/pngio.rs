//! PNG decode/encode for [`PixelBuffer`]. 8-bit grayscale, gray+alpha, RGB
//! and RGBA inputs are accepted; alpha is dropped, grayscale replicated to
//! three channels. Everything else (16-bit, palettes the decoder cannot
//! expand, other formats) is an unsupported-format error.

use std::path::Path;

use anyhow::{anyhow, Result};
use image::{DynamicImage, GrayImage, ImageReader, RgbImage};
use texturebit_core::image::PixelBuffer;

/// Load a PNG as a 3-channel buffer.
pub fn load_image(path: &Path) -> Result<PixelBuffer> {
    let reader = ImageReader::open(path)
        .map_err(|e| anyhow!("unreadable file: {}: {e}", path.display()))?;
    let decoded = reader
        .decode()
        .map_err(|e| anyhow!("unreadable file: {}: {e}", path.display()))?;
    let rgb: RgbImage = match decoded {
        DynamicImage::ImageLuma8(_)
        | DynamicImage::ImageLumaA8(_)
        | DynamicImage::ImageRgb8(_)
        | DynamicImage::ImageRgba8(_) => decoded.to_rgb8(),
        other => {
            return Err(anyhow!(
                "unsupported format: {}: {:?} (only 8-bit grayscale/RGB/RGBA PNG)",
                path.display(),
                other.color()
            ))
        }
    };
    let (w, h) = rgb.dimensions();
    Ok(PixelBuffer::new(w as usize, h as usize, 3, rgb.into_raw()))
}

/// Save a 1- or 3-channel buffer as a PNG.
pub fn save_image(buf: &PixelBuffer, path: &Path) -> Result<()> {
    match buf.channels {
        1 => {
            let img = GrayImage::from_raw(buf.width as u32, buf.height as u32, buf.data.clone())
                .expect("buffer length invariant");
            img.save(path)?;
        }
        3 => {
            let img = RgbImage::from_raw(buf.width as u32, buf.height as u32, buf.data.clone())
                .expect("buffer length invariant");
            img.save(path)?;
        }
        _ => unreachable!("PixelBuffer invariant"),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use texturebit_core::image::{from_tensor, to_tensor};

    #[test]
    fn png_roundtrip_preserves_samples() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.png");
        let buf = PixelBuffer::new(3, 2, 3, vec![
            0, 1, 2, 253, 254, 255, 10, 20, 30, 40, 50, 60, 70, 80, 90, 100, 110, 120,
        ]);
        save_image(&buf, &path).unwrap();
        let back = load_image(&path).unwrap();
        assert_eq!(back, buf);
    }

    #[test]
    fn one_by_one_white_png() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.png");
        save_image(&PixelBuffer::new(1, 1, 1, vec![255]), &path).unwrap();
        let buf = load_image(&path).unwrap();
        assert_eq!(buf.data, vec![255, 255, 255]);
    }

    #[test]
    fn grayscale_png_replicates_to_three_channels() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.png");
        save_image(&PixelBuffer::new(2, 1, 1, vec![0, 255]), &path).unwrap();
        let buf = load_image(&path).unwrap();
        assert_eq!(buf.channels, 3);
        assert_eq!(buf.data, vec![0, 0, 0, 255, 255, 255]);
    }

    #[test]
    fn rgba_alpha_is_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.png");
        let rgba = image::RgbaImage::from_raw(1, 1, vec![10, 20, 30, 77]).unwrap();
        rgba.save(&path).unwrap();
        let buf = load_image(&path).unwrap();
        assert_eq!(buf.data, vec![10, 20, 30]);
    }

    #[test]
    fn corrupt_file_is_unreadable() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.png");
        std::fs::write(&path, b"definitely not a png").unwrap();
        let err = load_image(&path).unwrap_err().to_string();
        assert!(err.contains("unreadable file"), "{err}");
    }

    #[test]
    fn sixteen_bit_png_is_unsupported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("deep.png");
        let img16 = image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::from_raw(
            2,
            2,
            vec![0, 65535, 1000, 40000],
        )
        .unwrap();
        image::DynamicImage::ImageLuma16(img16).save(&path).unwrap();
        let err = load_image(&path).unwrap_err().to_string();
        assert!(err.contains("unsupported format"), "{err}");
    }

    #[test]
    fn tensor_pipeline_through_png_is_exact() {
        // from_tensor -> PNG -> load -> to_tensor reproduces the quantized
        // tensor exactly.
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.png");
        let t = texturebit_core::image::ImageTensor::<f32>::filled(4, 4, [0.25, -0.5, 1.0]);
        let buf = from_tensor(&t);
        save_image(&buf, &path).unwrap();
        let back = to_tensor::<f32>(&load_image(&path).unwrap());
        let expect = to_tensor::<f32>(&buf);
        assert_eq!(back, expect);
    }
}
