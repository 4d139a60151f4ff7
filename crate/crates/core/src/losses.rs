//! Training losses: L2 reconstruction, relative region intensity, color
//! continuity — and the per-channel pixel error used for evaluation.
//!
//! Intensities live on a `[0, 1]` scale: an RGB pixel's intensity is the
//! unweighted channel mean of `(v + 1) / 2`, a plane value maps through
//! `(v + 1) / 2`. "Magnitude" of a matrix or plane difference is the mean of
//! absolute values, which keeps loss scales resolution-independent.

use alloc::vec;
use alloc::vec::Vec;

use crate::image::{ImageTensor, PixelBuffer, Volume};
use crate::quantize::DiscretePlane;
use crate::scalar::Real;

/// The four scalars tracked per step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub l2: f64,
    pub rel_intensity: f64,
    pub continuity: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn combine(l2: f64, rel_intensity: f64, continuity: f64, alpha: f64, beta: f64) -> Self {
        LossBreakdown {
            l2,
            rel_intensity,
            continuity,
            total: l2 + alpha * rel_intensity + beta * continuity,
        }
    }
}

/// Dimension disagreements between loss arguments.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShapeMismatch;

impl core::fmt::Display for ShapeMismatch {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "shape mismatch")
    }
}

#[cfg(feature = "std")]
impl std::error::Error for ShapeMismatch {}

/// Pairwise antisymmetric difference matrix of a region-mean vector.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionDifferenceMatrix<T> {
    pub r: usize,
    pub means: Vec<T>,
    /// `d[i * r^2 + j] = means[i] - means[j]`.
    pub d: Vec<T>,
}

impl<T: Real> RegionDifferenceMatrix<T> {
    pub fn from_means(r: usize, means: Vec<T>) -> Self {
        let m = r * r;
        assert_eq!(means.len(), m);
        let mut d = vec![T::zero(); m * m];
        for i in 0..m {
            for j in 0..m {
                d[i * m + j] = means[i] - means[j];
            }
        }
        RegionDifferenceMatrix { r, means, d }
    }
}

/// Per-block mean intensities of an `[0, 1]` plane, row-major over an
/// `r`×`r` grid. When a side is not divisible by `r`, the remainder rows and
/// columns merge into the last block.
pub fn region_means<T: Real>(plane: &[T], height: usize, width: usize, r: usize) -> Vec<T> {
    assert!(r >= 1 && height >= r && width >= r, "grid must fit the image");
    let bh = height / r;
    let bw = width / r;
    let mut out = Vec::with_capacity(r * r);
    for by in 0..r {
        let y0 = by * bh;
        let y1 = if by == r - 1 { height } else { (by + 1) * bh };
        for bx in 0..r {
            let x0 = bx * bw;
            let x1 = if bx == r - 1 { width } else { (bx + 1) * bw };
            let mut s = T::zero();
            for y in y0..y1 {
                for x in x0..x1 {
                    s = s + plane[y * width + x];
                }
            }
            out.push(s / T::from_f64(((y1 - y0) * (x1 - x0)) as f64));
        }
    }
    out
}

/// Intensity plane of an image: channel mean mapped to `[0, 1]`.
pub fn intensity_of_image<T: Real>(img: &ImageTensor<T>) -> Vec<T> {
    let hw = img.height() * img.width();
    let third = T::from_f64(1.0 / 3.0);
    let half = T::from_f64(0.5);
    let (r, g, b) = (img.0.plane(0), img.0.plane(1), img.0.plane(2));
    (0..hw).map(|i| ((r[i] + g[i] + b[i]) * third + T::one()) * half).collect()
}

/// Intensity plane of raw plane values: `(v + 1) / 2`.
pub fn intensity_of_plane<T: Real>(values: &[T]) -> Vec<T> {
    let half = T::from_f64(0.5);
    values.iter().map(|&v| (v + T::one()) * half).collect()
}

/// Mean of `|tanh(D_A) - tanh(D_B)|` over all region pairs, from the two
/// region-mean vectors.
pub fn relative_intensity_from_means<T: Real>(a: &[T], b: &[T]) -> T {
    assert_eq!(a.len(), b.len());
    let m = a.len();
    let mut s = T::zero();
    for i in 0..m {
        for j in 0..m {
            let da = (a[i] - a[j]).tanh();
            let db = (b[i] - b[j]).tanh();
            s = s + (da - db).abs();
        }
    }
    s / T::from_f64((m * m) as f64)
}

/// The relative-intensity loss between an image and a discrete plane.
pub fn relative_intensity_loss<T: Real>(
    img: &ImageTensor<T>,
    plane: &DiscretePlane<T>,
    r: usize,
) -> T {
    assert_eq!((img.height(), img.width()), (plane.height, plane.width), "shape mismatch");
    let gi = intensity_of_image(img);
    let gp = intensity_of_plane(&plane.values);
    let a = region_means(&gi, img.height(), img.width(), r);
    let b = region_means(&gp, plane.height, plane.width, r);
    relative_intensity_from_means(&a, &b)
}

/// Mean elementwise absolute difference of two planes' values.
pub fn color_continuity_loss<T: Real>(b1: &[T], b2: &[T]) -> Result<T, ShapeMismatch> {
    if b1.len() != b2.len() || b1.is_empty() {
        return Err(ShapeMismatch);
    }
    let mut s = T::zero();
    for (&x, &y) in b1.iter().zip(b2.iter()) {
        s = s + (x - y).abs();
    }
    Ok(s / T::from_f64(b1.len() as f64))
}

/// Mean squared error over pixels and channels, on the canonical scale.
pub fn reconstruction_loss<T: Real>(
    orig: &ImageTensor<T>,
    recon: &ImageTensor<T>,
) -> Result<T, ShapeMismatch> {
    if orig.0.data.len() != recon.0.data.len() {
        return Err(ShapeMismatch);
    }
    let mut s = T::zero();
    for (&a, &b) in orig.0.data.iter().zip(recon.0.data.iter()) {
        let d = a - b;
        s = s + d * d;
    }
    Ok(s / T::from_f64(orig.0.data.len() as f64))
}

/// Mean absolute difference of 8-bit samples, per channel, averaged over
/// channels. Range `[0, 255]`.
pub fn pixel_error(orig: &PixelBuffer, recon: &PixelBuffer) -> Result<f64, ShapeMismatch> {
    if orig.width != recon.width
        || orig.height != recon.height
        || orig.channels != recon.channels
        || orig.data.is_empty()
    {
        return Err(ShapeMismatch);
    }
    let mut s = 0.0f64;
    for (&a, &b) in orig.data.iter().zip(recon.data.iter()) {
        s += (a as f64 - b as f64).abs();
    }
    Ok(s / orig.data.len() as f64)
}

// ---------------------------------------------------------------------------
// Gradients. These feed the backward pass; each returns d(loss)/d(argument)
// evaluated at the forward values, with sign(0) = 0 for the absolute values.
// ---------------------------------------------------------------------------

/// d(reconstruction_loss)/d(recon): `2 (recon - orig) / count`.
pub fn reconstruction_loss_grad<T: Real>(
    orig: &ImageTensor<T>,
    recon: &ImageTensor<T>,
) -> Volume<T> {
    let count = T::from_f64(orig.0.data.len() as f64);
    let two = T::from_f64(2.0);
    let mut g = Volume::zeros(3, orig.height(), orig.width());
    for ((gd, &o), &rc) in g.data.iter_mut().zip(orig.0.data.iter()).zip(recon.0.data.iter()) {
        *gd = two * (rc - o) / count;
    }
    g
}

/// d(color_continuity)/d(b1). The gradient w.r.t. `b2` is its negation.
pub fn color_continuity_grad<T: Real>(b1: &[T], b2: &[T]) -> Vec<T> {
    let inv = T::from_f64(1.0 / b1.len() as f64);
    b1.iter()
        .zip(b2.iter())
        .map(|(&x, &y)| {
            if x > y {
                inv
            } else if x < y {
                -inv
            } else {
                T::zero()
            }
        })
        .collect()
}

/// d(relative_intensity_loss)/d(plane values), through the region means and
/// the `(v + 1) / 2` intensity map.
pub fn relative_intensity_grad<T: Real>(
    img: &ImageTensor<T>,
    plane_values: &[T],
    height: usize,
    width: usize,
    r: usize,
) -> Vec<T> {
    let gi = intensity_of_image(img);
    let gp = intensity_of_plane(plane_values);
    let a = region_means(&gi, height, width, r);
    let b = region_means(&gp, height, width, r);
    let m = r * r;
    let minv = T::from_f64(1.0 / (m * m) as f64);

    // d(loss)/d(b[i]) = (1/m^2) * sum_j [-sign(e_ij) * sech^2(b_i - b_j)
    //                                    + sign(e_ji) * sech^2(b_j - b_i)]
    // with e_ij = tanh(a_i - a_j) - tanh(b_i - b_j); antisymmetry folds the
    // two terms together.
    let mut db = vec![T::zero(); m];
    for i in 0..m {
        let mut acc = T::zero();
        for j in 0..m {
            let e = (a[i] - a[j]).tanh() - (b[i] - b[j]).tanh();
            let sign = if e > T::zero() {
                T::one()
            } else if e < T::zero() {
                -T::one()
            } else {
                T::zero()
            };
            let t = (b[i] - b[j]).tanh();
            let sech2 = T::one() - t * t;
            acc = acc - (sign * sech2 + sign * sech2);
        }
        db[i] = acc * minv;
    }

    // Scatter back: each pixel contributes 1/(block size) to its block mean,
    // and the intensity map scales by 1/2.
    let bh = height / r;
    let bw = width / r;
    let half = T::from_f64(0.5);
    let mut out = vec![T::zero(); height * width];
    for by in 0..r {
        let y0 = by * bh;
        let y1 = if by == r - 1 { height } else { (by + 1) * bh };
        for bx in 0..r {
            let x0 = bx * bw;
            let x1 = if bx == r - 1 { width } else { (bx + 1) * bw };
            let block = T::from_f64(((y1 - y0) * (x1 - x0)) as f64);
            let g = db[by * r + bx] / block * half;
            for y in y0..y1 {
                for x in x0..x1 {
                    out[y * width + x] = g;
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;
    use proptest::prelude::*;

    fn plane_of(values: Vec<f64>, h: usize, w: usize) -> DiscretePlane<f64> {
        DiscretePlane { height: h, width: w, values, levels: 2 }
    }

    #[test]
    fn region_means_constant() {
        let img = vec![0.5f64; 128 * 128];
        let m = region_means(&img, 128, 128, 8);
        assert_eq!(m.len(), 64);
        assert!(m.iter().all(|&v| (v - 0.5).abs() < 1e-12));
    }

    #[test]
    fn region_means_left_right_split() {
        // left half 0, right half 1, r=2 -> (0, 1, 0, 1)
        let mut img = vec![0.0f64; 128 * 128];
        for y in 0..128 {
            for x in 64..128 {
                img[y * 128 + x] = 1.0;
            }
        }
        let m = region_means(&img, 128, 128, 2);
        assert_eq!(m, vec![0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn region_means_matches_bruteforce() {
        let mut s = Stream::new(9, 0);
        let img: Vec<f64> = (0..16 * 16).map(|_| s.uniform_f64()).collect();
        let m = region_means(&img, 16, 16, 4);
        for by in 0..4 {
            for bx in 0..4 {
                let mut acc = 0.0;
                for y in by * 4..(by + 1) * 4 {
                    for x in bx * 4..(bx + 1) * 4 {
                        acc += img[y * 16 + x];
                    }
                }
                assert!((m[by * 4 + bx] - acc / 16.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn region_means_merges_remainder_into_last_block() {
        // 5 wide, r = 2: blocks cover columns [0,2) and [2,5).
        let img = vec![1.0f64, 1.0, 2.0, 2.0, 2.0, 1.0, 1.0, 2.0, 2.0, 2.0];
        let m = region_means(&img, 2, 5, 2);
        // With height 2 and r 2, block rows are [0,1) and [1,2).
        assert_eq!(m, vec![1.0, 2.0, 1.0, 2.0]);
    }

    #[test]
    fn quadrant_example_equals_tanh_one() {
        let a = [0.0f64, 0.0, 1.0, 1.0];
        let b = [1.0f64, 1.0, 0.0, 0.0];
        let loss = relative_intensity_from_means(&a, &b);
        assert!((loss - 1.0f64.tanh()).abs() < 1e-12, "{loss} vs {}", 1.0f64.tanh());
    }

    #[test]
    fn relative_intensity_zero_on_matching_means() {
        // Grayscale image and a plane with identical region means.
        let img = ImageTensor::<f64>::filled(16, 16, [0.2, 0.2, 0.2]);
        // Intensity of image = 0.6; plane value with intensity 0.6 is 0.2.
        let plane = plane_of(vec![0.2f64; 256], 16, 16);
        let loss = relative_intensity_loss(&img, &plane, 4);
        assert_eq!(loss, 0.0);
    }

    #[test]
    fn relative_intensity_shift_invariance_of_second_argument() {
        let mut s = Stream::new(77, 0);
        let a: Vec<f64> = (0..16).map(|_| s.uniform_f64()).collect();
        let b: Vec<f64> = (0..16).map(|_| s.uniform_f64()).collect();
        let shifted: Vec<f64> = b.iter().map(|v| v + 0.21).collect();
        let l0 = relative_intensity_from_means(&a, &b);
        let l1 = relative_intensity_from_means(&a, &shifted);
        assert!((l0 - l1).abs() < 1e-12);
    }

    #[test]
    fn difference_matrix_is_antisymmetric_zero_diagonal() {
        let mut s = Stream::new(5, 1);
        let means: Vec<f64> = (0..9).map(|_| s.uniform_f64()).collect();
        let m = RegionDifferenceMatrix::from_means(3, means);
        let k = 9;
        for i in 0..k {
            assert_eq!(m.d[i * k + i], 0.0);
            for j in 0..k {
                assert_eq!(m.d[i * k + j], -m.d[j * k + i]);
                assert!(m.d[i * k + j].abs() <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn continuity_identities() {
        let a = vec![1.0f64; 64];
        let b = vec![-1.0f64; 64];
        assert_eq!(color_continuity_loss(&a, &a).unwrap(), 0.0);
        assert_eq!(color_continuity_loss(&a, &b).unwrap(), 2.0);
        let mut half = a.clone();
        for v in half.iter_mut().take(32) {
            *v = -1.0;
        }
        assert_eq!(color_continuity_loss(&a, &half).unwrap(), 1.0);
        assert_eq!(color_continuity_loss(&a, &b[..32]), Err(ShapeMismatch));
    }

    #[test]
    fn reconstruction_identities() {
        let a = ImageTensor::<f64>::filled(4, 4, [-1.0, -1.0, -1.0]);
        let b = ImageTensor::<f64>::filled(4, 4, [1.0, 1.0, 1.0]);
        assert_eq!(reconstruction_loss(&a, &a).unwrap(), 0.0);
        assert_eq!(reconstruction_loss(&a, &b).unwrap(), 4.0);
    }

    #[test]
    fn reconstruction_matches_direct_sum() {
        let mut s = Stream::new(13, 0);
        let mut a = ImageTensor::<f64>::filled(5, 7, [0.0; 3]);
        let mut b = a.clone();
        for v in a.0.data.iter_mut() {
            *v = s.uniform_in(-1.0, 1.0);
        }
        for v in b.0.data.iter_mut() {
            *v = s.uniform_in(-1.0, 1.0);
        }
        let want: f64 = a
            .0
            .data
            .iter()
            .zip(b.0.data.iter())
            .map(|(&x, &y)| (x - y) * (x - y))
            .sum::<f64>()
            / (3.0 * 5.0 * 7.0);
        assert!((reconstruction_loss(&a, &b).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn total_loss_arithmetic() {
        let lb = LossBreakdown::combine(1.0, 0.5, 0.3, 0.1, 0.1);
        assert!((lb.total - 1.08).abs() < 1e-12);
        let lb0 = LossBreakdown::combine(0.7, 0.5, 0.3, 0.0, 0.0);
        assert_eq!(lb0.total, 0.7);
        let z = LossBreakdown::combine(0.0, 0.0, 0.0, 0.1, 0.1);
        assert_eq!(z.total, 0.0);
    }

    #[test]
    fn pixel_error_identities() {
        let a = PixelBuffer::filled(4, 4, 3, 0);
        let b = PixelBuffer::filled(4, 4, 3, 255);
        assert_eq!(pixel_error(&a, &a).unwrap(), 0.0);
        assert_eq!(pixel_error(&a, &b).unwrap(), 255.0);
        let c = PixelBuffer::filled(4, 3, 3, 0);
        assert_eq!(pixel_error(&a, &c), Err(ShapeMismatch));
    }

    #[test]
    fn pixel_error_matches_direct_sum() {
        let mut s = Stream::new(17, 0);
        let da: Vec<u8> = (0..48).map(|_| s.next_u32() as u8).collect();
        let db: Vec<u8> = (0..48).map(|_| s.next_u32() as u8).collect();
        let want = da
            .iter()
            .zip(db.iter())
            .map(|(&x, &y)| (x as f64 - y as f64).abs())
            .sum::<f64>()
            / 48.0;
        let a = PixelBuffer::new(4, 4, 3, da);
        let b = PixelBuffer::new(4, 4, 3, db);
        assert!((pixel_error(&a, &b).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn continuity_grad_matches_finite_difference() {
        let mut s = Stream::new(23, 0);
        let a: Vec<f64> = (0..32).map(|_| s.uniform_in(-1.0, 1.0)).collect();
        let b: Vec<f64> = (0..32).map(|_| s.uniform_in(-1.0, 1.0)).collect();
        let g = color_continuity_grad(&a, &b);
        let h = 1e-7;
        for idx in [0, 5, 31] {
            let mut ap = a.clone();
            ap[idx] += h;
            let mut am = a.clone();
            am[idx] -= h;
            let fd = (color_continuity_loss(&ap, &b).unwrap()
                - color_continuity_loss(&am, &b).unwrap())
                / (2.0 * h);
            assert!((g[idx] - fd).abs() < 1e-6, "idx {idx}: {} vs {fd}", g[idx]);
        }
    }

    #[test]
    fn relative_intensity_grad_matches_finite_difference() {
        let mut s = Stream::new(29, 0);
        let mut img = ImageTensor::<f64>::filled(8, 8, [0.0; 3]);
        for v in img.0.data.iter_mut() {
            *v = s.uniform_in(-1.0, 1.0);
        }
        let vals: Vec<f64> = (0..64).map(|_| s.uniform_in(-1.0, 1.0)).collect();
        let g = relative_intensity_grad(&img, &vals, 8, 8, 2);

        let loss = |v: &[f64]| -> f64 {
            let gi = intensity_of_image(&img);
            let gp = intensity_of_plane(v);
            let a = region_means(&gi, 8, 8, 2);
            let b = region_means(&gp, 8, 8, 2);
            relative_intensity_from_means(&a, &b)
        };
        let h = 1e-7;
        for idx in [0usize, 9, 36, 63] {
            let mut vp = vals.clone();
            vp[idx] += h;
            let mut vm = vals.clone();
            vm[idx] -= h;
            let fd = (loss(&vp) - loss(&vm)) / (2.0 * h);
            assert!((g[idx] - fd).abs() < 1e-6, "idx {idx}: {} vs {fd}", g[idx]);
        }
    }

    proptest! {
        #[test]
        fn losses_nonnegative(vals in proptest::collection::vec(-1.0f64..1.0, 64)) {
            let b: Vec<f64> = vals.iter().rev().cloned().collect();
            prop_assert!(color_continuity_loss(&vals, &b).unwrap() >= 0.0);
            let a16: Vec<f64> = vals[..16].to_vec();
            let b16: Vec<f64> = vals[16..32].to_vec();
            prop_assert!(relative_intensity_from_means(&a16, &b16) >= 0.0);
        }

        #[test]
        fn continuity_equals_twice_differing_fraction(bits in proptest::collection::vec(proptest::bool::ANY, 100)) {
            let a: Vec<f64> = bits.iter().map(|&b| if b { 1.0 } else { -1.0 }).collect();
            let flip: Vec<bool> = bits.iter().enumerate().map(|(i, &b)| if i % 3 == 0 { !b } else { b }).collect();
            let b: Vec<f64> = flip.iter().map(|&x| if x { 1.0 } else { -1.0 }).collect();
            let differing = bits.iter().zip(flip.iter()).filter(|(x, y)| x != y).count();
            let want = 2.0 * differing as f64 / 100.0;
            let got = color_continuity_loss(&a, &b).unwrap();
            prop_assert!((got - want).abs() < 1e-12);
        }

        #[test]
        fn relative_intensity_block_permutation_invariance(
            seed in 0u64..1000,
        ) {
            let mut s = Stream::new(seed, 0);
            let a: Vec<f64> = (0..9).map(|_| s.uniform_f64()).collect();
            let b: Vec<f64> = (0..9).map(|_| s.uniform_f64()).collect();
            // Apply one fixed permutation to both vectors.
            let perm = [4usize, 7, 1, 0, 8, 2, 6, 3, 5];
            let ap: Vec<f64> = perm.iter().map(|&i| a[i]).collect();
            let bp: Vec<f64> = perm.iter().map(|&i| b[i]).collect();
            let l0 = relative_intensity_from_means(&a, &b);
            let l1 = relative_intensity_from_means(&ap, &bp);
            prop_assert!((l0 - l1).abs() < 1e-12);
        }
    }
}
