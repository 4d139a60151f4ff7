//! Floating-point element abstraction.
//!
//! The whole pipeline is generic over [`Real`] so that training can run in
//! `f32` while gradient-verification tests instantiate the identical code at
//! `f64`, where central finite differences are meaningful.

use num_traits::Float;

/// Scalar element type for tensors, parameters and losses.
///
/// The `gemm` method is the only place the crate touches a matrix-multiply
/// backend: faer when the `accel` feature is on (AVX-512 capable), portable
/// `matrixmultiply` otherwise. Both are sequential and deterministic for
/// fixed inputs.
pub trait Real: Float + core::fmt::Debug + core::fmt::Display + Default + Send + Sync + 'static {
    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;

    /// `c = alpha * a @ b + beta * c` for row-major matrices with explicit
    /// strides (in elements). `a` is m×k, `b` is k×n, `c` is m×n.
    ///
    /// # Safety
    /// Pointers must be valid for the strided extents implied by the
    /// dimensions, and `c` must not alias `a` or `b`.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        a_rs: isize,
        a_cs: isize,
        b: *const Self,
        b_rs: isize,
        b_cs: isize,
        beta: Self,
        c: *mut Self,
        c_rs: isize,
        c_cs: isize,
    );
}

macro_rules! impl_real {
    ($t:ty, $mm:path, $faer_alpha:ty) => {
        impl Real for $t {
            #[inline]
            fn from_f64(x: f64) -> Self {
                x as $t
            }

            #[inline]
            fn to_f64(self) -> f64 {
                self as f64
            }

            #[cfg(feature = "accel")]
            unsafe fn gemm(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: *const Self,
                a_rs: isize,
                a_cs: isize,
                b: *const Self,
                b_rs: isize,
                b_cs: isize,
                beta: Self,
                c: *mut Self,
                c_rs: isize,
                c_cs: isize,
            ) {
                use faer::linalg::matmul::matmul;
                use faer::mat::{MatMut, MatRef};
                use faer::{Accum, Par};
                unsafe {
                    let a = MatRef::from_raw_parts(a, m, k, a_rs, a_cs);
                    let b = MatRef::from_raw_parts(b, k, n, b_rs, b_cs);
                    let cm = MatMut::from_raw_parts_mut(c, m, n, c_rs, c_cs);
                    if beta == 0.0 {
                        matmul(cm, Accum::Replace, a, b, alpha, Par::Seq);
                    } else {
                        if beta != 1.0 {
                            // Off the hot path; scale in place, then accumulate.
                            for i in 0..m {
                                for j in 0..n {
                                    *c.offset(i as isize * c_rs + j as isize * c_cs) *= beta;
                                }
                            }
                        }
                        matmul(cm, Accum::Add, a, b, alpha, Par::Seq);
                    }
                }
            }

            #[cfg(not(feature = "accel"))]
            unsafe fn gemm(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: *const Self,
                a_rs: isize,
                a_cs: isize,
                b: *const Self,
                b_rs: isize,
                b_cs: isize,
                beta: Self,
                c: *mut Self,
                c_rs: isize,
                c_cs: isize,
            ) {
                unsafe {
                    $mm(m, k, n, alpha, a, a_rs, a_cs, b, b_rs, b_cs, beta, c, c_rs, c_cs);
                }
            }
        }
    };
}

impl_real!(f32, matrixmultiply::sgemm, f32);
impl_real!(f64, matrixmultiply::dgemm, f64);
