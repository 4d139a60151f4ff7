//! 6×6 same-padded convolution primitives: im2col + GEMM, forward and both
//! backward passes. All layers in the model are spatial-size preserving, so
//! one padding scheme is hardwired: for the even 6×6 kernel, 2 rows/cols of
//! zeros before and 3 after (TensorFlow "SAME" convention).

use alloc::vec::Vec;

use crate::image::Volume;
use crate::network::ConvLayerParams;
use crate::scalar::Real;

/// Kernel side length. The architecture uses 6×6 convolutions everywhere.
pub const KERNEL: usize = 6;
/// Kernel area.
pub const KK: usize = KERNEL * KERNEL;
/// Zero padding before the origin for the forward pass.
pub const PAD_BEFORE: usize = (KERNEL - 1) / 2;

/// Lower `input` into a `(channels * 36) x (h * w)` column matrix.
///
/// Row `(c * 36 + kh * 6 + kw)`, column `(y * w + x)` holds
/// `input[c][y + kh - pad_before][x + kw - pad_before]`, zero outside.
pub fn im2col<T: Real>(input: &Volume<T>, pad_before: usize, cols: &mut Vec<T>) {
    let (c_in, h, w) = (input.channels, input.height, input.width);
    let n = h * w;
    cols.clear();
    cols.resize(c_in * KK * n, T::zero());

    for c in 0..c_in {
        let src = input.plane(c);
        for kh in 0..KERNEL {
            for kw in 0..KERNEL {
                let row_base = (c * KK + kh * KERNEL + kw) * n;
                let dy = kh as isize - pad_before as isize;
                let shift = kw as isize - pad_before as isize;
                // x + shift must land in [0, w)
                let x_lo = (-shift).max(0) as usize;
                let x_hi = ((w as isize - shift).min(w as isize)).max(0) as usize;
                for y in 0..h {
                    let yy = y as isize + dy;
                    let row = &mut cols[row_base + y * w..row_base + (y + 1) * w];
                    if yy < 0 || yy >= h as isize || x_lo >= x_hi {
                        row.fill(T::zero());
                        continue;
                    }
                    let src_row = yy as usize * w;
                    row[..x_lo].fill(T::zero());
                    row[x_hi..].fill(T::zero());
                    let s0 = (src_row as isize + x_lo as isize + shift) as usize;
                    let s1 = (src_row as isize + x_hi as isize + shift) as usize;
                    row[x_lo..x_hi].copy_from_slice(&src[s0..s1]);
                }
            }
        }
    }
}

/// Raw convolution output (no bias, no activation): `out = W @ cols`.
/// When `keep_cols` is given, the column matrix is left there for the
/// weight-gradient pass.
pub fn conv_forward<T: Real>(
    input: &Volume<T>,
    layer: &ConvLayerParams<T>,
    cols: &mut Vec<T>,
) -> Volume<T> {
    debug_assert_eq!(input.channels, layer.in_channels);
    im2col(input, PAD_BEFORE, cols);
    let n = input.height * input.width;
    let k = layer.in_channels * KK;
    let mut out = Volume::zeros(layer.out_channels, input.height, input.width);
    unsafe {
        T::gemm(
            layer.out_channels,
            k,
            n,
            T::one(),
            layer.weights.as_ptr(),
            k as isize,
            1,
            cols.as_ptr(),
            n as isize,
            1,
            T::zero(),
            out.data.as_mut_ptr(),
            n as isize,
            1,
        );
    }
    out
}

/// Gradient with respect to the layer input: full correlation of the output
/// gradient with the flipped, transposed kernel.
pub fn conv_backward_data<T: Real>(
    grad_out: &Volume<T>,
    layer: &ConvLayerParams<T>,
    gcols: &mut Vec<T>,
    wback: &mut Vec<T>,
) -> Volume<T> {
    debug_assert_eq!(grad_out.channels, layer.out_channels);
    let (c_in, c_out) = (layer.in_channels, layer.out_channels);
    let n = grad_out.height * grad_out.width;

    im2col(grad_out, KERNEL - 1 - PAD_BEFORE, gcols);

    // wback[c][o*36 + kh*6 + kw] = w[o][c*36 + (5-kh)*6 + (5-kw)]
    wback.clear();
    wback.resize(c_in * c_out * KK, T::zero());
    for o in 0..c_out {
        for c in 0..c_in {
            for kh in 0..KERNEL {
                for kw in 0..KERNEL {
                    let src = layer.weights
                        [(o * c_in + c) * KK + (KERNEL - 1 - kh) * KERNEL + (KERNEL - 1 - kw)];
                    wback[(c * c_out + o) * KK + kh * KERNEL + kw] = src;
                }
            }
        }
    }

    let mut out = Volume::zeros(c_in, grad_out.height, grad_out.width);
    let k = c_out * KK;
    unsafe {
        T::gemm(
            c_in,
            k,
            n,
            T::one(),
            wback.as_ptr(),
            k as isize,
            1,
            gcols.as_ptr(),
            n as isize,
            1,
            T::zero(),
            out.data.as_mut_ptr(),
            n as isize,
            1,
        );
    }
    out
}

/// Accumulate weight and bias gradients: `dw += g @ cols^T`, `db += sum(g)`.
/// `cols` must be the column matrix saved from the forward pass of this layer.
pub fn conv_backward_weights<T: Real>(
    grad_out: &Volume<T>,
    cols: &[T],
    in_channels: usize,
    dw: &mut [T],
    db: &mut [T],
) {
    let c_out = grad_out.channels;
    let n = grad_out.height * grad_out.width;
    let k_dim = in_channels * KK;
    debug_assert_eq!(cols.len(), k_dim * n);
    debug_assert_eq!(dw.len(), c_out * k_dim);
    debug_assert_eq!(db.len(), c_out);
    unsafe {
        // g is (c_out x n); cols^T is (n x k_dim) = cols viewed with swapped strides.
        T::gemm(
            c_out,
            n,
            k_dim,
            T::one(),
            grad_out.data.as_ptr(),
            n as isize,
            1,
            cols.as_ptr(),
            1,
            n as isize,
            T::one(),
            dw.as_mut_ptr(),
            k_dim as isize,
            1,
        );
    }
    for o in 0..c_out {
        let mut s = T::zero();
        for &g in grad_out.plane(o) {
            s = s + g;
        }
        db[o] = db[o] + s;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;
    use alloc::vec;

    fn random_volume(c: usize, h: usize, w: usize, stream: &mut Stream) -> Volume<f64> {
        let mut v = Volume::zeros(c, h, w);
        for x in v.data.iter_mut() {
            *x = stream.uniform_in(-1.0, 1.0);
        }
        v
    }

    fn random_layer(c_in: usize, c_out: usize, stream: &mut Stream) -> ConvLayerParams<f64> {
        let mut l = ConvLayerParams::zeros(c_in, c_out);
        for w in l.weights.iter_mut() {
            *w = stream.uniform_in(-0.5, 0.5);
        }
        for b in l.bias.iter_mut() {
            *b = stream.uniform_in(-0.1, 0.1);
        }
        l
    }

    /// Direct quadruple-loop convolution, the oracle for the GEMM path.
    fn naive_conv(input: &Volume<f64>, layer: &ConvLayerParams<f64>) -> Volume<f64> {
        let (h, w) = (input.height, input.width);
        let mut out = Volume::zeros(layer.out_channels, h, w);
        for o in 0..layer.out_channels {
            for y in 0..h {
                for x in 0..w {
                    let mut acc = 0.0;
                    for c in 0..layer.in_channels {
                        for kh in 0..KERNEL {
                            for kw in 0..KERNEL {
                                let yy = y as isize + kh as isize - PAD_BEFORE as isize;
                                let xx = x as isize + kw as isize - PAD_BEFORE as isize;
                                if yy >= 0 && yy < h as isize && xx >= 0 && xx < w as isize {
                                    acc += input.at(c, yy as usize, xx as usize)
                                        * layer.weights
                                            [(o * layer.in_channels + c) * KK + kh * KERNEL + kw];
                                }
                            }
                        }
                    }
                    out.set(o, y, x, acc);
                }
            }
        }
        out
    }

    #[test]
    fn forward_matches_naive() {
        let mut s = Stream::new(11, 0);
        let input = random_volume(3, 9, 7, &mut s);
        let layer = random_layer(3, 4, &mut s);
        let mut cols = Vec::new();
        let got = conv_forward(&input, &layer, &mut cols);
        let want = naive_conv(&input, &layer);
        assert_eq!(got.channels, 4);
        for (a, b) in got.data.iter().zip(want.data.iter()) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn forward_preserves_dims_and_zero_weights_give_zero() {
        let mut s = Stream::new(5, 0);
        for (h, w) in [(16, 16), (11, 5), (8, 13)] {
            let input = random_volume(2, h, w, &mut s);
            let layer = ConvLayerParams::<f64>::zeros(2, 3);
            let mut cols = Vec::new();
            let out = conv_forward(&input, &layer, &mut cols);
            assert_eq!((out.height, out.width, out.channels), (h, w, 3));
            assert!(out.data.iter().all(|&v| v == 0.0));
        }
    }

    /// d(sum of out * proj)/d(input) checked against finite differences of
    /// the forward pass. Pins the transposed-kernel padding arithmetic.
    #[test]
    fn backward_data_matches_finite_difference()
 {
        let mut s = Stream::new(21, 0);
        let input = random_volume(2, 6, 5, &mut s);
        let layer = random_layer(2, 3, &mut s);
        let proj = random_volume(3, 6, 5, &mut s);

        let mut gcols = Vec::new();
        let mut wback = Vec::new();
        let din = conv_backward_data(&proj, &layer, &mut gcols, &mut wback);

        let loss = |inp: &Volume<f64>| -> f64 {
            let mut cols = Vec::new();
            let out = conv_forward(inp, &layer, &mut cols);
            out.data.iter().zip(proj.data.iter()).map(|(a, b)| a * b).sum()
        };
        let h = 1e-6;
        for idx in [0usize, 7, 13, 29, input.data.len() - 1] {
            let mut plus = input.clone();
            plus.data[idx] += h;
            let mut minus = input.clone();
            minus.data[idx] -= h;
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
            assert!(
                (din.data[idx] - fd).abs() < 1e-7,
                "idx {idx}: analytic {} fd {fd}",
                din.data[idx]
            );
        }
    }

    #[test]
    fn backward_weights_matches_finite_difference() {
        let mut s = Stream::new(31, 0);
        let input = random_volume(2, 5, 6, &mut s);
        let layer = random_layer(2, 2, &mut s);
        let proj = random_volume(2, 5, 6, &mut s);

        let mut cols = Vec::new();
        let _ = conv_forward(&input, &layer, &mut cols);
        let mut dw = vec![0.0; layer.weights.len()];
        let mut db = vec![0.0; layer.bias.len()];
        conv_backward_weights(&proj, &cols, 2, &mut dw, &mut db);

        let loss = |l: &ConvLayerParams<f64>| -> f64 {
            let mut c = Vec::new();
            let out = conv_forward(&input, l, &mut c);
            out.data.iter().zip(proj.data.iter()).map(|(a, b)| a * b).sum()
        };
        let h = 1e-6;
        for idx in [0usize, 17, 35, 36, 71, dw.len() - 1] {
            let mut plus = layer.clone();
            plus.weights[idx] += h;
            let mut minus = layer.clone();
            minus.weights[idx] -= h;
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
            assert!((dw[idx] - fd).abs() < 1e-7, "w idx {idx}: analytic {} fd {fd}", dw[idx]);
        }
        // bias gradient: conv_forward does not add bias, so db is just the
        // projected sum per channel.
        for o in 0..2 {
            let want: f64 = proj.plane(o).iter().sum();
            assert!((db[o] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn backward_weights_accumulates() {
        let mut s = Stream::new(41, 0);
        let input = random_volume(1, 4, 4, &mut s);
        let layer = random_layer(1, 1, &mut s);
        let proj = random_volume(1, 4, 4, &mut s);
        let mut cols = Vec::new();
        let _ = conv_forward(&input, &layer, &mut cols);

        let mut dw1 = vec![0.0; layer.weights.len()];
        let mut db1 = vec![0.0; 1];
        conv_backward_weights(&proj, &cols, 1, &mut dw1, &mut db1);

        let mut dw2 = vec![0.0; layer.weights.len()];
        let mut db2 = vec![0.0; 1];
        conv_backward_weights(&proj, &cols, 1, &mut dw2, &mut db2);
        conv_backward_weights(&proj, &cols, 1, &mut dw2, &mut db2);

        for (a, b) in dw1.iter().zip(dw2.iter()) {
            assert!((2.0 * a - b).abs() < 1e-12);
        }
        assert!((2.0 * db1[0] - db2[0]).abs() < 1e-12);
    }
}
