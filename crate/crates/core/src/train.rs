//! Batch assembly, the Adam optimizer and the training step.
//!
//! Batches are built in pairs: slot `2k` holds a source image, slot `2k+1`
//! holds the same image through the perturbation operator M (independent
//! per-pixel uniform noise), so the continuity loss always compares an image
//! with its own perturbation. A fraction S of pairs is replaced by synthetic
//! shape images. All randomness comes from per-(step, pair, purpose) ChaCha
//! streams, so batch composition is a pure function of (seed, step).
//!
//! Gradient reductions run in a canonical order (pair 0, pair 1, ...; even
//! item before odd), so results do not depend on how pairs are scheduled
//! across threads.

use alloc::vec;
use alloc::vec::Vec;

use crate::image::{center_crop_resize, ImageTensor, Volume};
use crate::losses::{
    self, color_continuity_grad, color_continuity_loss, reconstruction_loss,
    reconstruction_loss_grad, relative_intensity_grad, LossBreakdown,
};
use crate::network::{
    backward, forward_cached, ForwardMode, ModelGrads, ModelParams, NetworkConfig, OutputGrads,
};
use crate::rng::Stream;
use crate::scalar::Real;
use crate::synth::{generate_synthetic, SynthConfig};

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub alpha: f64,
    pub beta: f64,
    pub r: usize,
    pub synthetic_fraction: f64,
    /// Additive uniform noise amplitude on the canonical [-1, 1] scale; used
    /// both for the general input augmentation and for the perturbation
    /// operator M. "±5%" of the dynamic range is 0.1.
    pub input_noise_amplitude: f64,
    pub steps: u64,
    pub seed: u64,
    pub resolution: usize,
    pub target_bpp: u32,
    pub decoder_layers: usize,
    /// Architecture widths; Table-2 defaults unless a test overrides them.
    pub pre_encoder_layers: usize,
    pub pre_encoder_channels: usize,
    pub decoder_channels: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-4,
            batch_size: 16,
            alpha: 0.1,
            beta: 0.1,
            r: 8,
            synthetic_fraction: 0.10,
            input_noise_amplitude: 0.1,
            steps: 0,
            seed: 0,
            resolution: 128,
            target_bpp: 1,
            decoder_layers: 2,
            pre_encoder_layers: 10,
            pre_encoder_channels: 128,
            decoder_channels: 128,
        }
    }
}

impl TrainConfig {
    pub fn network_config(&self) -> NetworkConfig {
        NetworkConfig {
            pre_encoder_layers: self.pre_encoder_layers,
            pre_encoder_channels: self.pre_encoder_channels,
            dde_layers: 9 - self.target_bpp as usize,
            decoder_layers: self.decoder_layers,
            decoder_channels: self.decoder_channels,
            target_bpp: self.target_bpp,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.batch_size == 0 || self.batch_size % 2 != 0 {
            return Err(TrainError::BadConfig("batch size must be even and positive"));
        }
        if !(0.0..=1.0).contains(&self.synthetic_fraction) {
            return Err(TrainError::BadConfig("synthetic fraction must be in [0, 1]"));
        }
        if self.input_noise_amplitude < 0.0 {
            return Err(TrainError::BadConfig("noise amplitude must be >= 0"));
        }
        if self.resolution < self.r {
            return Err(TrainError::BadConfig("resolution must be at least r"));
        }
        self.network_config().validate().map_err(|_| TrainError::BadConfig("bad network config"))
    }

    /// The synthetic-image family used to fill batches: same resolution,
    /// seed offset into its own stream space.
    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig::new(self.resolution, self.seed ^ 0x53594e54 /* "SYNT" */)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TrainError {
    EmptyCorpus,
    NonFiniteLoss,
    BadConfig(&'static str),
}

impl core::fmt::Display for TrainError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            TrainError::EmptyCorpus => write!(f, "empty corpus"),
            TrainError::NonFiniteLoss => write!(f, "non-finite loss"),
            TrainError::BadConfig(m) => write!(f, "bad train config: {m}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for TrainError {}

/// Adam moment accumulators, one pair of tensors per parameter tensor in
/// canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<T = f32> {
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub step: u64,
}

impl<T: Real> OptimizerState<T> {
    pub fn zeros_like(params: &ModelParams<T>) -> Self {
        let mut m = Vec::new();
        params.visit_tensors(|_, t| m.push(vec![T::zero(); t.len()]));
        OptimizerState { v: m.clone(), m, step: 0 }
    }
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// One Adam update with bias correction.
pub fn adam_update<T: Real>(
    params: &mut ModelParams<T>,
    grads: &ModelGrads<T>,
    opt: &mut OptimizerState<T>,
    learning_rate: f64,
) {
    opt.step += 1;
    let t = opt.step as i32;
    let b1 = T::from_f64(ADAM_BETA1);
    let b2 = T::from_f64(ADAM_BETA2);
    let one = T::one();
    let eps = T::from_f64(ADAM_EPS);
    let corr1 = T::from_f64(1.0 - ADAM_BETA1.powi(t));
    let corr2 = T::from_f64(1.0 - ADAM_BETA2.powi(t));
    let lr = T::from_f64(learning_rate);

    let flat = grads.tensors();
    let mut i = 0;
    params.visit_tensors_mut(|_, p| {
        let g = flat[i];
        let m = &mut opt.m[i];
        let v = &mut opt.v[i];
        for k in 0..p.len() {
            let gk = g[k];
            m[k] = b1 * m[k] + (one - b1) * gk;
            v[k] = b2 * v[k] + (one - b2) * gk * gk;
            let mhat = m[k] / corr1;
            let vhat = v[k] / corr2;
            p[k] = p[k] - lr * mhat / (vhat.sqrt() + eps);
        }
        i += 1;
    });
}

impl<T: Real> ModelGrads<T> {
    /// Gradient tensors in the canonical parameter order.
    pub fn tensors(&self) -> Vec<&[T]> {
        let mut out = Vec::new();
        for stage in [&self.pre_encoder, &self.dde, &self.decoder] {
            for l in stage.iter() {
                out.push(l.dw.as_slice());
                out.push(l.db.as_slice());
            }
        }
        out
    }
}

/// Where a batch item came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    Corpus,
    Synthetic,
}

/// An assembled batch: `items[2k+1]` is M(`items[2k]`) plus augmentation
/// noise; origins are equal within a pair.
#[derive(Debug, Clone)]
pub struct BatchSpec<T = f32> {
    pub items: Vec<ImageTensor<T>>,
    pub origins: Vec<Origin>,
}

impl<T> BatchSpec<T> {
    pub fn pair_count(&self) -> usize {
        self.items.len() / 2
    }
}

// Stream-id layout under the training seed: each (step, pair) owns four
// purposes. Supports up to 256 pairs per batch.
const STREAMS_PER_STEP: u64 = 2048;
const PURPOSE_SELECT: u64 = 0;
const PURPOSE_M_NOISE: u64 = 1;
const PURPOSE_AUG_EVEN: u64 = 2;
const PURPOSE_AUG_ODD: u64 = 3;

fn pair_stream(seed: u64, step: u64, pair: usize, purpose: u64) -> Stream {
    Stream::new(seed, step * STREAMS_PER_STEP + (pair as u64) * 4 + purpose)
}

fn add_uniform_noise<T: Real>(img: &mut ImageTensor<T>, amplitude: f64, stream: &mut Stream) {
    if amplitude == 0.0 {
        return;
    }
    let one = T::one();
    for v in img.0.data.iter_mut() {
        let n = T::from_f64(stream.uniform_in(-amplitude, amplitude));
        let x = *v + n;
        *v = if x > one {
            one
        } else if x < -one {
            -one
        } else {
            x
        };
    }
}

/// The perturbation operator M: independent per-pixel, per-channel additive
/// uniform noise, clamped to the canonical range.
pub fn perturb<T: Real>(img: &ImageTensor<T>, amplitude: f64, stream: &mut Stream) -> ImageTensor<T> {
    let mut out = img.clone();
    add_uniform_noise(&mut out, amplitude, stream);
    out
}

/// Deterministic batch for `step_index`: sample half the batch as sources
/// (synthetic with probability S), pair each with its M-perturbation, then
/// add augmentation noise to every item.
pub fn assemble_batch<T: Real>(
    corpus: &[ImageTensor<T>],
    synth_cfg: &SynthConfig,
    cfg: &TrainConfig,
    step_index: u64,
) -> Result<BatchSpec<T>, TrainError> {
    cfg.validate()?;
    if corpus.is_empty() && cfg.synthetic_fraction < 1.0 {
        return Err(TrainError::EmptyCorpus);
    }
    let pairs = cfg.batch_size / 2;
    assert!(pairs <= 256, "stream layout supports up to 256 pairs");
    let mut items = Vec::with_capacity(cfg.batch_size);
    let mut origins = Vec::with_capacity(cfg.batch_size);

    for pair in 0..pairs {
        let mut sel = pair_stream(cfg.seed, step_index, pair, PURPOSE_SELECT);
        let synthetic = sel.uniform_f64() < cfg.synthetic_fraction;
        let source = if synthetic {
            generate_synthetic::<T>(synth_cfg, step_index * 256 + pair as u64)
        } else {
            let idx = sel.uniform_u64_below(corpus.len() as u64) as usize;
            corpus[idx].clone()
        };
        let source = if source.height() == cfg.resolution && source.width() == cfg.resolution {
            source
        } else {
            center_crop_resize(&source, cfg.resolution)
        };

        let mut m_stream = pair_stream(cfg.seed, step_index, pair, PURPOSE_M_NOISE);
        let mut even = source.clone();
        let mut odd = perturb(&source, cfg.input_noise_amplitude, &mut m_stream);

        let mut aug_e = pair_stream(cfg.seed, step_index, pair, PURPOSE_AUG_EVEN);
        let mut aug_o = pair_stream(cfg.seed, step_index, pair, PURPOSE_AUG_ODD);
        add_uniform_noise(&mut even, cfg.input_noise_amplitude, &mut aug_e);
        add_uniform_noise(&mut odd, cfg.input_noise_amplitude, &mut aug_o);

        let origin = if synthetic { Origin::Synthetic } else { Origin::Corpus };
        items.push(even);
        items.push(odd);
        origins.push(origin);
        origins.push(origin);
    }
    Ok(BatchSpec { items, origins })
}

/// Loss weights shared by every pair of a batch.
#[derive(Debug, Clone, Copy)]
pub struct PairLossConfig {
    pub alpha: f64,
    pub beta: f64,
    pub r: usize,
    pub batch_size: usize,
}

impl PairLossConfig {
    pub fn from_train(cfg: &TrainConfig) -> Self {
        PairLossConfig { alpha: cfg.alpha, beta: cfg.beta, r: cfg.r, batch_size: cfg.batch_size }
    }
}

/// Per-pair result: parameter gradients of this pair's share of the batch
/// loss, plus the raw loss terms for reporting.
pub struct PairOutcome<T: Real> {
    pub grads: ModelGrads<T>,
    pub l2_sum: f64,
    pub rel_sum: f64,
    pub continuity: f64,
}

/// Forward + backward for one (source, perturbed) pair.
///
/// The batch loss is `mean_items(L2 + alpha*REL) + beta * mean_pairs(CONT)`;
/// this computes the pair's contribution to its gradient exactly, so summing
/// outcomes over pairs yields the full batch gradient.
pub fn run_pair<T: Real>(
    params: &ModelParams<T>,
    plc: &PairLossConfig,
    even: &ImageTensor<T>,
    odd: &ImageTensor<T>,
    mode: ForwardMode,
) -> PairOutcome<T> {
    let b = plc.batch_size as f64;
    let p = (plc.batch_size / 2) as f64;
    let (h, w) = (even.height(), even.width());

    let cache_e = forward_cached(even, params, mode);
    let cache_o = forward_cached(odd, params, mode);

    let plane_e = cache_e.final_plane();
    let plane_o = cache_o.final_plane();

    let l2_e = reconstruction_loss(even, cache_e.recon()).expect("same dims").to_f64();
    let l2_o = reconstruction_loss(odd, cache_o.recon()).expect("same dims").to_f64();
    let rel_e = rel_loss_values(even, plane_e, h, w, plc.r);
    let rel_o = rel_loss_values(odd, plane_o, h, w, plc.r);
    let cont = color_continuity_loss(plane_e, plane_o).expect("same dims").to_f64();

    let mut grads = ModelGrads::zeros_like(params);
    for (img, cache, my_plane, other_plane) in [
        (even, &cache_e, plane_e, plane_o),
        (odd, &cache_o, plane_o, plane_e),
    ] {
        let mut recon_g = reconstruction_loss_grad(img, cache.recon());
        scale_volume(&mut recon_g, T::from_f64(1.0 / b));

        let mut plane_g = relative_intensity_grad(img, my_plane, h, w, plc.r);
        let s_rel = T::from_f64(plc.alpha / b);
        for v in plane_g.iter_mut() {
            *v = *v * s_rel;
        }
        let cont_g = color_continuity_grad(my_plane, other_plane);
        let s_cont = T::from_f64(plc.beta / p);
        for (a, g) in plane_g.iter_mut().zip(cont_g.iter()) {
            *a = *a + *g * s_cont;
        }

        backward(cache, params, &OutputGrads { recon: recon_g, plane: plane_g }, &mut grads);
    }

    PairOutcome { grads, l2_sum: l2_e + l2_o, rel_sum: rel_e + rel_o, continuity: cont }
}

fn rel_loss_values<T: Real>(img: &ImageTensor<T>, plane: &[T], h: usize, w: usize, r: usize) -> f64 {
    let gi = losses::intensity_of_image(img);
    let gp = losses::intensity_of_plane(plane);
    let a = losses::region_means(&gi, h, w, r);
    let b = losses::region_means(&gp, h, w, r);
    losses::relative_intensity_from_means(&a, &b).to_f64()
}

fn scale_volume<T: Real>(v: &mut Volume<T>, s: T) {
    for x in v.data.iter_mut() {
        *x = *x * s;
    }
}

/// Maps pair tasks to outcomes. Implementations may run pairs in parallel
/// but must return outcomes in input order; the fold over outcomes is
/// sequential either way, so results are schedule-independent.
pub trait BatchRunner<T: Real>: Sync {
    fn run_pairs(
        &self,
        params: &ModelParams<T>,
        plc: &PairLossConfig,
        pairs: &[(&ImageTensor<T>, &ImageTensor<T>)],
        mode: ForwardMode,
    ) -> Vec<PairOutcome<T>>;
}

/// Runs pairs one after another on the calling thread.
pub struct SerialRunner;

impl<T: Real> BatchRunner<T> for SerialRunner {
    fn run_pairs(
        &self,
        params: &ModelParams<T>,
        plc: &PairLossConfig,
        pairs: &[(&ImageTensor<T>, &ImageTensor<T>)],
        mode: ForwardMode,
    ) -> Vec<PairOutcome<T>> {
        pairs.iter().map(|(e, o)| run_pair(params, plc, e, o, mode)).collect()
    }
}

/// Batch loss and full batch gradient; shared by training and the gradient
/// tests (which run it in surrogate mode).
pub fn batch_loss_and_grads<T: Real>(
    params: &ModelParams<T>,
    batch: &BatchSpec<T>,
    cfg: &TrainConfig,
    runner: &dyn BatchRunner<T>,
    mode: ForwardMode,
) -> (LossBreakdown, ModelGrads<T>) {
    let plc = PairLossConfig::from_train(cfg);
    let pairs: Vec<_> =
        (0..batch.pair_count()).map(|k| (&batch.items[2 * k], &batch.items[2 * k + 1])).collect();
    let outcomes = runner.run_pairs(params, &plc, &pairs, mode);

    let mut grads = ModelGrads::zeros_like(params);
    let (mut l2, mut rel, mut cont) = (0.0, 0.0, 0.0);
    for o in &outcomes {
        grads.add_assign(&o.grads);
        l2 += o.l2_sum;
        rel += o.rel_sum;
        cont += o.continuity;
    }
    let b = batch.items.len() as f64;
    let p = batch.pair_count() as f64;
    let breakdown = LossBreakdown::combine(l2 / b, rel / b, cont / p, cfg.alpha, cfg.beta);
    (breakdown, grads)
}

/// One optimization step: forward and backward over the batch, then a single
/// Adam update. Returns the pre-update loss. A non-finite loss aborts the
/// step with parameters untouched.
pub fn train_step<T: Real>(
    params: &mut ModelParams<T>,
    opt: &mut OptimizerState<T>,
    batch: &BatchSpec<T>,
    cfg: &TrainConfig,
    runner: &dyn BatchRunner<T>,
) -> Result<LossBreakdown, TrainError> {
    let (breakdown, grads) =
        batch_loss_and_grads(params, batch, cfg, runner, ForwardMode::Quantized);
    if !(breakdown.total.is_finite()
        && breakdown.l2.is_finite()
        && breakdown.rel_intensity.is_finite()
        && breakdown.continuity.is_finite())
    {
        return Err(TrainError::NonFiniteLoss);
    }
    adam_update(params, &grads, opt, cfg.learning_rate);
    Ok(breakdown)
}
