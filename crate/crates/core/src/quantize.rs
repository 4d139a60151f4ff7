//! Discretized tanh activations and their straight-through gradients.
//!
//! Each down-discretization layer applies `tanh` and snaps the result to one
//! of `L` evenly spaced levels in `[-1, 1]`; at `L = 2` the output is the
//! binary image itself. Forward passes (training and inference alike) use the
//! snapped values. The backward pass ignores the snapping and differentiates
//! the underlying tanh — a straight-through estimator.

use alloc::vec::Vec;

use crate::scalar::Real;

/// A uniform quantizer over `[-1, 1]` with endpoints included.
///
/// Level `k` is `(2k - (L-1)) / (L-1)`, which is exactly symmetric about
/// zero in IEEE arithmetic and hits ±1 exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantSpec<T = f32> {
    pub levels: u32,
    pub level_set: Vec<T>,
}

impl<T: Real> QuantSpec<T> {
    pub fn new(levels: u32) -> Self {
        assert!(levels >= 2, "need at least two levels");
        let denom = (levels - 1) as f64;
        let level_set = (0..levels)
            .map(|k| T::from_f64((2.0 * k as f64 - denom) / denom))
            .collect();
        QuantSpec { levels, level_set }
    }

    /// Snap `v` (already in `[-1, 1]`) to the nearest level, ties toward the
    /// larger level.
    #[inline]
    pub fn snap(&self, v: T) -> T {
        let denom = (self.levels - 1) as f64;
        // k = floor((v+1)/step + 1/2) with step = 2/denom; half-up floor
        // breaks ties toward the larger level.
        let k = ((v.to_f64() + 1.0) * denom / 2.0 + 0.5).floor();
        let k = (k.max(0.0) as u32).min(self.levels - 1);
        self.level_set[k as usize]
    }
}

/// Single-channel plane whose values all lie in an `L`-level set.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretePlane<T = f32> {
    pub height: usize,
    pub width: usize,
    pub values: Vec<T>,
    pub levels: u32,
}

impl<T: Real> DiscretePlane<T> {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `tanh` followed by the quantizer: the forward activation of a
/// down-discretization layer.
#[inline]
pub fn discretize_tanh<T: Real>(x: T, spec: &QuantSpec<T>) -> T {
    spec.snap(x.tanh())
}

/// Derivative used in the backward pass: `1 - tanh(x)^2`, independent of the
/// level count.
#[inline]
pub fn ste_gradient<T: Real>(x: T) -> T {
    let t = x.tanh();
    T::one() - t * t
}

/// Level counts of the full eight-layer down-discretization encoder:
/// 8 bpp down to 1 bpp, one bit per layer.
pub fn dde_level_schedule<T: Real>() -> Vec<QuantSpec<T>> {
    [256u32, 128, 64, 32, 16, 8, 4, 2].iter().map(|&l| QuantSpec::new(l)).collect()
}
