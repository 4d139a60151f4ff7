//! The three-stage fully convolutional model: pre-encoder, down-discretization
//! encoder (DDE), decoder.
//!
//! Pre-encoder: 10 layers of 128-channel 6×6 convolutions with relu.
//! DDE: 8 single-output-channel 6×6 convolutions, each followed by a
//! discretized tanh stepping 256 → 2 levels; the last plane is the binary
//! image shown to the user. Every DDE stage after the first sees only the
//! previous single-channel plane, so the decoder's input — and the only
//! path for color information — is the visible plane itself.
//! Decoder: 128-channel relu layers ending in a 3-channel plain tanh; used
//! in training to reconstruct the original and score the encoding.
//!
//! Forward passes always use the snapped (discretized) activations. The
//! backward pass differentiates the tanh surrogate instead, evaluated at the
//! cached pre-activation trajectory. Run the forward in
//! [`ForwardMode::Surrogate`] and the same backward code yields the exact
//! gradient of the continuous surrogate network, which is what the
//! finite-difference tests verify.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::conv::{self, KK};
use crate::image::{ImageTensor, Volume};
use crate::quantize::{DiscretePlane, QuantSpec};
use crate::rng::Stream;
use crate::scalar::Real;

/// Feature maps produced by the pre-encoder.
pub type FeatureTensor<T> = Volume<T>;

/// Weights and biases of one 6×6 convolution layer.
///
/// `weights[(o * in_channels + c) * 36 + kh * 6 + kw]`, one bias per output
/// channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayerParams<T = f32> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> ConvLayerParams<T> {
    pub fn zeros(in_channels: usize, out_channels: usize) -> Self {
        ConvLayerParams {
            in_channels,
            out_channels,
            weights: vec![T::zero(); out_channels * in_channels * KK],
            bias: vec![T::zero(); out_channels],
        }
    }
}

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkConfig {
    pub pre_encoder_layers: usize,
    pub pre_encoder_channels: usize,
    pub dde_layers: usize,
    pub decoder_layers: usize,
    pub decoder_channels: usize,
    pub target_bpp: u32,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            pre_encoder_layers: 10,
            pre_encoder_channels: 128,
            dde_layers: 8,
            decoder_layers: 2,
            decoder_channels: 128,
            target_bpp: 1,
        }
    }
}

/// Config or shape violations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NetworkError {
    BadConfig(String),
    ShapeMismatch(String),
}

impl core::fmt::Display for NetworkError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            NetworkError::BadConfig(m) => write!(f, "bad network config: {m}"),
            NetworkError::ShapeMismatch(m) => write!(f, "shape mismatch: {m}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for NetworkError {}

impl NetworkConfig {
    /// A config for the given target bit rate; the DDE loses its last
    /// `target_bpp - 1` layers, stopping the schedule at `2^target_bpp`
    /// levels.
    pub fn for_bpp(target_bpp: u32) -> Self {
        NetworkConfig {
            dde_layers: 9 - target_bpp as usize,
            target_bpp,
            ..NetworkConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), NetworkError> {
        if self.target_bpp < 1 || self.target_bpp > 8 {
            return Err(NetworkError::BadConfig(String::from("target_bpp must be in [1, 8]")));
        }
        if self.dde_layers != 9 - self.target_bpp as usize {
            return Err(NetworkError::BadConfig(String::from(
                "dde_layers must equal 9 - target_bpp",
            )));
        }
        if self.pre_encoder_layers < 1
            || self.pre_encoder_channels < 1
            || self.decoder_layers < 1
            || self.decoder_channels < 1
        {
            return Err(NetworkError::BadConfig(String::from("all layer counts must be >= 1")));
        }
        Ok(())
    }

    /// Quantizer specs for each DDE stage, truncated to `dde_layers`.
    pub fn dde_specs<T: Real>(&self) -> Vec<QuantSpec<T>> {
        let mut s = crate::quantize::dde_level_schedule::<T>();
        s.truncate(self.dde_layers);
        s
    }

    /// Level count of the final, user-visible plane.
    pub fn final_levels(&self) -> u32 {
        1u32 << self.target_bpp
    }
}

/// All parameters of the model, in evaluation order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T = f32> {
    pub config: NetworkConfig,
    pub pre_encoder: Vec<ConvLayerParams<T>>,
    pub dde: Vec<ConvLayerParams<T>>,
    pub decoder: Vec<ConvLayerParams<T>>,
}

/// Gradients with the same shapes as [`ModelParams`].
#[derive(Debug, Clone)]
pub struct ModelGrads<T = f32> {
    pub pre_encoder: Vec<LayerGrads<T>>,
    pub dde: Vec<LayerGrads<T>>,
    pub decoder: Vec<LayerGrads<T>>,
}

#[derive(Debug, Clone)]
pub struct LayerGrads<T> {
    pub dw: Vec<T>,
    pub db: Vec<T>,
}

impl<T: Real> ModelGrads<T> {
    pub fn zeros_like(params: &ModelParams<T>) -> Self {
        let mk = |ls: &Vec<ConvLayerParams<T>>| {
            ls.iter()
                .map(|l| LayerGrads {
                    dw: vec![T::zero(); l.weights.len()],
                    db: vec![T::zero(); l.bias.len()],
                })
                .collect()
        };
        ModelGrads {
            pre_encoder: mk(&params.pre_encoder),
            dde: mk(&params.dde),
            decoder: mk(&params.decoder),
        }
    }

    pub fn add_assign(&mut self, other: &ModelGrads<T>) {
        fn add<T: Real>(a: &mut Vec<crate::network::LayerGrads<T>>, b: &[crate::network::LayerGrads<T>]) {
            for (x, y) in a.iter_mut().zip(b.iter()) {
                for (p, q) in x.dw.iter_mut().zip(y.dw.iter()) {
                    *p = *p + *q;
                }
                for (p, q) in x.db.iter_mut().zip(y.db.iter()) {
                    *p = *p + *q;
                }
            }
        }
        add(&mut self.pre_encoder, &other.pre_encoder);
        add(&mut self.dde, &other.dde);
        add(&mut self.decoder, &other.decoder);
    }

    pub fn scale(&mut self, s: T) {
        self.visit_mut(|v| {
            for x in v.iter_mut() {
                *x = *x * s;
            }
        });
    }

    pub fn visit_mut(&mut self, mut f: impl FnMut(&mut [T])) {
        for stage in [&mut self.pre_encoder, &mut self.dde, &mut self.decoder] {
            for l in stage.iter_mut() {
                f(&mut l.dw);
                f(&mut l.db);
            }
        }
    }
}

impl<T: Real> ModelParams<T> {
    /// Visit every parameter tensor in canonical order, with its name.
    /// The order is shared by the optimizer, the checkpoint format and the
    /// gradient tests: pre-encoder, DDE, decoder; per layer weights then bias.
    pub fn visit_tensors(&self, mut f: impl FnMut(&str, &[T])) {
        for (stage_name, stage) in
            [("pre", &self.pre_encoder), ("dde", &self.dde), ("dec", &self.decoder)]
        {
            for (i, l) in stage.iter().enumerate() {
                f(&alloc::format!("{stage_name}/{i}/w"), &l.weights);
                f(&alloc::format!("{stage_name}/{i}/b"), &l.bias);
            }
        }
    }

    pub fn visit_tensors_mut(&mut self, mut f: impl FnMut(&str, &mut [T])) {
        for (stage_name, stage) in [
            ("pre", &mut self.pre_encoder),
            ("dde", &mut self.dde),
            ("dec", &mut self.decoder),
        ] {
            for (i, l) in stage.iter_mut().enumerate() {
                f(&alloc::format!("{stage_name}/{i}/w"), &mut l.weights);
                f(&alloc::format!("{stage_name}/{i}/b"), &mut l.bias);
            }
        }
    }

    pub fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit_tensors(|_, t| n += t.len());
        n
    }
}

/// He/Xavier-initialized parameters, deterministic in `seed`.
///
/// Relu layers get fan-in-scaled Gaussians (`std = sqrt(2 / fan_in)`),
/// tanh-family layers (all DDE stages, final decoder layer) get symmetric
/// fan-average uniforms (`limit = sqrt(6 / (fan_in + fan_out))`). Biases are
/// zero. Each layer draws from its own random stream so layer counts do not
/// perturb one another.
pub fn init_params<T: Real>(cfg: &NetworkConfig, seed: u64) -> ModelParams<T> {
    cfg.validate().expect("invalid network config");
    let mut layer_idx = 0u64;

    let mut he = |c_in: usize, c_out: usize| -> ConvLayerParams<T> {
        layer_idx += 1;
        let mut s = Stream::new(seed, layer_idx);
        let std = (2.0 / (c_in * KK) as f64).sqrt();
        let mut l = ConvLayerParams::zeros(c_in, c_out);
        for w in l.weights.iter_mut() {
            *w = T::from_f64(s.gaussian() * std);
        }
        l
    };
    let pre: Vec<_> = (0..cfg.pre_encoder_layers)
        .map(|i| {
            let c_in = if i == 0 { 3 } else { cfg.pre_encoder_channels };
            he(c_in, cfg.pre_encoder_channels)
        })
        .collect();
    let mut decoder: Vec<_> = (0..cfg.decoder_layers.saturating_sub(1))
        .map(|i| {
            let c_in = if i == 0 { 1 } else { cfg.decoder_channels };
            he(c_in, cfg.decoder_channels)
        })
        .collect();

    let mut xavier = |c_in: usize, c_out: usize| -> ConvLayerParams<T> {
        layer_idx += 1;
        let mut s = Stream::new(seed, layer_idx);
        let limit = (6.0 / ((c_in * KK + c_out * KK) as f64)).sqrt();
        let mut l = ConvLayerParams::zeros(c_in, c_out);
        for w in l.weights.iter_mut() {
            *w = s.uniform_scalar(-limit, limit);
        }
        l
    };
    let dde: Vec<_> = (0..cfg.dde_layers)
        .map(|i| {
            let c_in = if i == 0 { cfg.pre_encoder_channels } else { 1 };
            xavier(c_in, 1)
        })
        .collect();
    let dec_in = if cfg.decoder_layers == 1 { 1 } else { cfg.decoder_channels };
    decoder.push(xavier(dec_in, 3));

    ModelParams { config: cfg.clone(), pre_encoder: pre, dde, decoder }
}

/// Whether DDE activations snap to their level sets or stay continuous.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForwardMode {
    /// Real forward pass: discretized activations (training and inference).
    Quantized,
    /// Continuous tanh everywhere; the function whose exact gradient the
    /// backward pass computes. Used by gradient verification.
    Surrogate,
}

enum Act {
    Relu,
    TanhFamily { spec: Option<u32> }, // Some(levels) = quantized, None = plain tanh
}

struct LayerCache<T> {
    /// im2col matrix of this layer's input, kept for the weight gradient.
    cols: Vec<T>,
    /// Post-activation output (the next layer's input).
    act: Volume<T>,
    /// tanh of the pre-activation, for tanh-family layers. Equal to `act`
    /// in surrogate mode; in quantized mode `act` holds the snapped values.
    surrogate: Option<Vec<T>>,
}

/// Everything the backward pass needs from one forward evaluation.
pub struct ForwardCache<T: Real> {
    mode: ForwardMode,
    layers: Vec<LayerCache<T>>,
    /// DDE plane values in forward order (snapped in quantized mode).
    planes: Vec<Volume<T>>,
    recon: ImageTensor<T>,
}

impl<T: Real> ForwardCache<T> {
    pub fn recon(&self) -> &ImageTensor<T> {
        &self.recon
    }

    /// Values of the final DDE plane (length h*w).
    pub fn final_plane(&self) -> &[T] {
        self.planes.last().expect("at least one DDE layer").plane(0)
    }

    pub fn planes(&self) -> &[Volume<T>] {
        &self.planes
    }

    pub fn mode(&self) -> ForwardMode {
        self.mode
    }
}

fn apply_layer<T: Real>(
    input: &Volume<T>,
    layer: &ConvLayerParams<T>,
    act: &Act,
    keep_cols: bool,
) -> LayerCache<T> {
    let mut cols = Vec::new();
    let mut out = conv_forward(input, layer, &mut cols);
    if !keep_cols {
        cols = Vec::new();
    }
    let hw = out.height * out.width;
    let mut surrogate = None;
    match act {
        Act::Relu => {
            for o in 0..out.channels {
                let b = layer.bias[o];
                for v in out.plane_mut(o).iter_mut() {
                    let z = *v + b;
                    *v = if z > T::zero() { z } else { T::zero() };
                }
            }
        }
        Act::TanhFamily { spec } => {
            let mut surr = vec![T::zero(); out.channels * hw];
            match spec {
                None => {
                    for o in 0..out.channels {
                        let b = layer.bias[o];
                        let sp = &mut surr[o * hw..(o + 1) * hw];
                        for (v, s) in out.plane_mut(o).iter_mut().zip(sp.iter_mut()) {
                            let t = (*v + b).tanh();
                            *s = t;
                            *v = t;
                        }
                    }
                }
                Some(levels) => {
                    let q = QuantSpec::<T>::new(*levels);
                    for o in 0..out.channels {
                        let b = layer.bias[o];
                        let sp = &mut surr[o * hw..(o + 1) * hw];
                        for (v, s) in out.plane_mut(o).iter_mut().zip(sp.iter_mut()) {
                            let t = (*v + b).tanh();
                            *s = t;
                            *v = q.snap(t);
                        }
                    }
                }
            }
            surrogate = Some(surr);
        }
    }
    LayerCache { cols, act: out, surrogate }
}

use crate::conv::conv_forward;

/// Full forward pass with backward cache. `mode` picks snapped or continuous
/// DDE activations.
pub fn forward_cached<T: Real>(
    input: &ImageTensor<T>,
    params: &ModelParams<T>,
    mode: ForwardMode,
) -> ForwardCache<T> {
    run_forward(input, params, mode, true)
}

fn run_forward<T: Real>(
    input: &ImageTensor<T>,
    params: &ModelParams<T>,
    mode: ForwardMode,
    keep: bool,
) -> ForwardCache<T> {
    let cfg = &params.config;
    let mut layers: Vec<LayerCache<T>> = Vec::new();
    let mut planes = Vec::with_capacity(cfg.dde_layers);

    let mut cur: &Volume<T> = &input.0;
    for l in &params.pre_encoder {
        layers.push(apply_layer(cur, l, &Act::Relu, keep));
        cur = &layers.last().unwrap().act;
    }

    let specs = cfg.dde_specs::<T>();
    for (i, l) in params.dde.iter().enumerate() {
        let act = match mode {
            ForwardMode::Quantized => Act::TanhFamily { spec: Some(specs[i].levels) },
            ForwardMode::Surrogate => Act::TanhFamily { spec: None },
        };
        layers.push(apply_layer(cur, l, &act, keep));
        cur = &layers.last().unwrap().act;
        planes.push(cur.clone());
    }

    let n_dec = params.decoder.len();
    for (i, l) in params.decoder.iter().enumerate() {
        let act =
            if i + 1 == n_dec { Act::TanhFamily { spec: None } } else { Act::Relu };
        layers.push(apply_layer(cur, l, &act, keep));
        cur = &layers.last().unwrap().act;
    }

    let recon = ImageTensor::new(layers.last().unwrap().act.clone());
    ForwardCache { mode, layers, planes, recon }
}

/// Pre-encoder features: 10 relu convolutions, spatial dims preserved.
pub fn pre_encode<T: Real>(input: &ImageTensor<T>, params: &ModelParams<T>) -> FeatureTensor<T> {
    let mut cur = input.0.clone();
    let mut cols = Vec::new();
    for l in &params.pre_encoder {
        let mut out = conv_forward(&cur, l, &mut cols);
        for o in 0..out.channels {
            let b = l.bias[o];
            for v in out.plane_mut(o).iter_mut() {
                let z = *v + b;
                *v = if z > T::zero() { z } else { T::zero() };
            }
        }
        cur = out;
    }
    cur
}

/// Run the DDE over pre-encoded features, returning every stage's plane.
pub fn down_discretize<T: Real>(
    features: &FeatureTensor<T>,
    params: &ModelParams<T>,
) -> Vec<DiscretePlane<T>> {
    let specs = params.config.dde_specs::<T>();
    let mut cols = Vec::new();
    let mut cur = features.clone();
    let mut out = Vec::with_capacity(params.dde.len());
    for (l, spec) in params.dde.iter().zip(specs.iter()) {
        let mut z = conv_forward(&cur, l, &mut cols);
        let b = l.bias[0];
        for v in z.plane_mut(0).iter_mut() {
            *v = spec.snap((*v + b).tanh());
        }
        out.push(DiscretePlane {
            height: z.height,
            width: z.width,
            values: z.plane(0).to_vec(),
            levels: spec.levels,
        });
        cur = z;
    }
    out
}

/// Decode a final plane back to a color image.
pub fn decode<T: Real>(plane: &DiscretePlane<T>, params: &ModelParams<T>) -> ImageTensor<T> {
    let mut cur = Volume::zeros(1, plane.height, plane.width);
    cur.plane_mut(0).copy_from_slice(&plane.values);
    let mut cols = Vec::new();
    let n_dec = params.decoder.len();
    for (i, l) in params.decoder.iter().enumerate() {
        let mut out = conv_forward(&cur, l, &mut cols);
        if i + 1 == n_dec {
            for o in 0..out.channels {
                let b = l.bias[o];
                for x in out.plane_mut(o).iter_mut() {
                    *x = (*x + b).tanh();
                }
            }
        } else {
            for o in 0..out.channels {
                let b = l.bias[o];
                for x in out.plane_mut(o).iter_mut() {
                    let z = *x + b;
                    *x = if z > T::zero() { z } else { T::zero() };
                }
            }
        }
        cur = out;
    }
    ImageTensor::new(cur)
}

/// Encode an image to its final discrete plane (the user-visible output).
pub fn binarize<T: Real>(input: &ImageTensor<T>, params: &ModelParams<T>) -> DiscretePlane<T> {
    let features = pre_encode(input, params);
    down_discretize(&features, params).pop().expect("at least one DDE layer")
}

/// Upstream gradients flowing into the network outputs.
pub struct OutputGrads<T> {
    /// d(loss)/d(reconstruction), 3 × h × w.
    pub recon: Volume<T>,
    /// d(loss)/d(final plane), h*w. Applied at the decoder input node.
    pub plane: Vec<T>,
}

/// Reverse-mode gradients through the cached forward trajectory. Quantizers
/// differentiate as their tanh surrogates. Gradients accumulate into `grads`.
pub fn backward<T: Real>(
    cache: &ForwardCache<T>,
    params: &ModelParams<T>,
    out_grads: &OutputGrads<T>,
    grads: &mut ModelGrads<T>,
) {
    let cfg = &params.config;
    let n_pre = cfg.pre_encoder_layers;
    let n_dde = cfg.dde_layers;
    let n_dec = params.decoder.len();
    debug_assert_eq!(cache.layers.len(), n_pre + n_dde + n_dec);

    let mut gcols: Vec<T> = Vec::new();
    let mut wback: Vec<T> = Vec::new();

    // Gradient w.r.t. the current layer's output, walked backwards.
    let mut g = out_grads.recon.clone();

    // Decoder.
    for i in (0..n_dec).rev() {
        let li = n_pre + n_dde + i;
        let lc = &cache.layers[li];
        let layer = &params.decoder[i];
        let lg = &mut grads.decoder[i];
        let dz = activation_backward(&g, lc);
        conv::conv_backward_weights(&dz, &lc.cols, layer.in_channels, &mut lg.dw, &mut lg.db);
        g = conv::conv_backward_data(&dz, layer, &mut gcols, &mut wback);
    }

    // Loss terms attached directly to the final plane join here.
    debug_assert_eq!(g.data.len(), out_grads.plane.len());
    for (a, b) in g.data.iter_mut().zip(out_grads.plane.iter()) {
        *a = *a + *b;
    }

    // DDE, straight through the quantizers.
    for i in (0..n_dde).rev() {
        let li = n_pre + i;
        let lc = &cache.layers[li];
        let layer = &params.dde[i];
        let lg = &mut grads.dde[i];
        let dz = activation_backward(&g, lc);
        conv::conv_backward_weights(&dz, &lc.cols, layer.in_channels, &mut lg.dw, &mut lg.db);
        g = conv::conv_backward_data(&dz, layer, &mut gcols, &mut wback);
    }

    // Pre-encoder; the input image needs no gradient, so layer 0 skips the
    // data pass.
    for i in (0..n_pre).rev() {
        let lc = &cache.layers[i];
        let layer = &params.pre_encoder[i];
        let lg = &mut grads.pre_encoder[i];
        let dz = activation_backward(&g, lc);
        conv::conv_backward_weights(&dz, &lc.cols, layer.in_channels, &mut lg.dw, &mut lg.db);
        if i > 0 {
            g = conv::conv_backward_data(&dz, layer, &mut gcols, &mut wback);
        }
    }
}

fn activation_backward<T: Real>(g: &Volume<T>, lc: &LayerCache<T>) -> Volume<T> {
    let mut dz = g.clone();
    match &lc.surrogate {
        None => {
            // relu: pass where the output is positive.
            for (d, &a) in dz.data.iter_mut().zip(lc.act.data.iter()) {
                if a <= T::zero() {
                    *d = T::zero();
                }
            }
        }
        Some(surr) => {
            for (d, &t) in dz.data.iter_mut().zip(surr.iter()) {
                *d = *d * (T::one() - t * t);
            }
        }
    }
    dz
}
