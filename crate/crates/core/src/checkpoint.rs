//! Bit-exact model checkpoint encoding.
//!
//! Layout: magic `TXB1`, version (u32 LE), tensor count (u32 LE); then per
//! tensor: name (u16 LE length + UTF-8), rank (u8), dims (u32 LE each),
//! row-major f32 LE payload. Architecture metadata rides along as the
//! `meta/config` tensor; optimizer moments, when present, mirror every
//! parameter tensor under `opt/m/...` and `opt/v/...` plus an `opt/step`
//! counter, so training can resume exactly.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::conv::{KERNEL, KK};
use crate::network::{ConvLayerParams, ModelParams, NetworkConfig};
use crate::train::OptimizerState;

pub const MAGIC: [u8; 4] = *b"TXB1";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CheckpointError {
    BadMagic,
    VersionMismatch { found: u32 },
    TruncatedFile,
    Malformed(String),
}

impl core::fmt::Display for CheckpointError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            CheckpointError::BadMagic => write!(f, "bad magic"),
            CheckpointError::VersionMismatch { found } => {
                write!(f, "version mismatch: found {found}, expected {VERSION}")
            }
            CheckpointError::TruncatedFile => write!(f, "truncated file"),
            CheckpointError::Malformed(m) => write!(f, "malformed checkpoint: {m}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for CheckpointError {}

/// A model plus, optionally, the optimizer state needed to resume training.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams<f32>,
    pub opt: Option<OptimizerState>,
}

struct Tensor {
    dims: Vec<u32>,
    data: Vec<f32>,
}

fn put_tensor(out: &mut Vec<u8>, name: &str, dims: &[u32], data: &[f32]) {
    let name_bytes = name.as_bytes();
    out.extend_from_slice(&(name_bytes.len() as u16).to_le_bytes());
    out.extend_from_slice(name_bytes);
    out.push(dims.len() as u8);
    for &d in dims {
        out.extend_from_slice(&d.to_le_bytes());
    }
    for &v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn layer_dims(l: &ConvLayerParams<f32>) -> [u32; 4] {
    [l.out_channels as u32, l.in_channels as u32, KERNEL as u32, KERNEL as u32]
}

/// Serialize a checkpoint to bytes.
pub fn encode(ckpt: &Checkpoint) -> Vec<u8> {
    let p = &ckpt.params;
    let cfg = &p.config;

    let mut tensors: Vec<(String, Vec<u32>, Vec<f32>)> = Vec::new();
    tensors.push((
        "meta/config".to_string(),
        vec![6],
        vec![
            cfg.pre_encoder_layers as f32,
            cfg.pre_encoder_channels as f32,
            cfg.dde_layers as f32,
            cfg.decoder_layers as f32,
            cfg.decoder_channels as f32,
            cfg.target_bpp as f32,
        ],
    ));
    p.visit_tensors(|name, data| {
        let dims = if name.ends_with("/w") {
            // recover layer dims from the stage lists below
            Vec::new()
        } else {
            vec![data.len() as u32]
        };
        tensors.push((name.to_string(), dims, data.to_vec()));
    });
    // Fill in 4-d dims for weight tensors (visit_tensors does not expose the
    // layer, so patch them from the stage lists in the same order).
    {
        let mut idx = 1; // skip meta/config
        for stage in [&p.pre_encoder, &p.dde, &p.decoder] {
            for l in stage {
                tensors[idx].1 = layer_dims(l).to_vec();
                idx += 2; // weights then bias
            }
        }
    }

    if let Some(opt) = &ckpt.opt {
        tensors.push(("opt/step".to_string(), vec![1], vec![opt.step as f32]));
        let mut i = 0;
        p.visit_tensors(|name, data| {
            debug_assert_eq!(opt.m[i].len(), data.len());
            tensors.push((format!("opt/m/{name}"), vec![data.len() as u32], opt.m[i].clone()));
            tensors.push((format!("opt/v/{name}"), vec![data.len() as u32], opt.v[i].clone()));
            i += 1;
        });
    }

    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, dims, data) in &tensors {
        put_tensor(&mut out, name, dims, data);
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.pos + n > self.buf.len() {
            return Err(CheckpointError::TruncatedFile);
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, CheckpointError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }
}

/// Deserialize a checkpoint from bytes.
pub fn decode(bytes: &[u8]) -> Result<Checkpoint, CheckpointError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(CheckpointError::VersionMismatch { found: version });
    }
    let count = r.u32()? as usize;

    let mut tensors: BTreeMap<String, Tensor> = BTreeMap::new();
    for _ in 0..count {
        let name_len = r.u16()? as usize;
        let name = core::str::from_utf8(r.take(name_len)?)
            .map_err(|_| CheckpointError::Malformed("tensor name is not UTF-8".to_string()))?
            .to_string();
        let rank = r.u8()? as usize;
        let mut dims = Vec::with_capacity(rank);
        let mut len = 1usize;
        for _ in 0..rank {
            let d = r.u32()?;
            len = len
                .checked_mul(d as usize)
                .ok_or_else(|| CheckpointError::Malformed("dims overflow".to_string()))?;
            dims.push(d);
        }
        let raw = r.take(len * 4)?;
        let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        tensors.insert(name, Tensor { dims, data });
    }

    let cfg_t = tensors
        .get("meta/config")
        .ok_or_else(|| CheckpointError::Malformed("missing meta/config".to_string()))?;
    if cfg_t.data.len() != 6 {
        return Err(CheckpointError::Malformed("meta/config must have 6 entries".to_string()));
    }
    let cfg = NetworkConfig {
        pre_encoder_layers: cfg_t.data[0] as usize,
        pre_encoder_channels: cfg_t.data[1] as usize,
        dde_layers: cfg_t.data[2] as usize,
        decoder_layers: cfg_t.data[3] as usize,
        decoder_channels: cfg_t.data[4] as usize,
        target_bpp: cfg_t.data[5] as u32,
    };
    cfg.validate().map_err(|e| CheckpointError::Malformed(format!("{e}")))?;

    let mut params = crate::network::init_params::<f32>(&cfg, 0);
    let mut missing: Option<String> = None;
    params.visit_tensors_mut(|name, data| {
        if missing.is_some() {
            return;
        }
        match tensors.get(name) {
            Some(t) if t.data.len() == data.len() => {
                if name.ends_with("/w")
                    && (t.dims.len() != 4
                        || t.dims[2] != KERNEL as u32
                        || t.dims[3] != KERNEL as u32)
                {
                    missing = Some(format!("tensor {name} is not a 6x6 kernel stack"));
                    return;
                }
                data.copy_from_slice(&t.data);
            }
            Some(_) => missing = Some(format!("tensor {name} has wrong size")),
            None => missing = Some(format!("missing tensor {name}")),
        }
    });
    if let Some(m) = missing {
        return Err(CheckpointError::Malformed(m));
    }
    for stage in [&params.pre_encoder, &params.dde, &params.decoder] {
        for l in stage {
            debug_assert_eq!(l.weights.len(), l.out_channels * l.in_channels * KK);
        }
    }

    let opt = if let Some(step_t) = tensors.get("opt/step") {
        if step_t.data.len() != 1 {
            return Err(CheckpointError::Malformed("opt/step must be a scalar".to_string()));
        }
        let mut m = Vec::new();
        let mut v = Vec::new();
        let mut err: Option<String> = None;
        params.visit_tensors(|name, data| {
            if err.is_some() {
                return;
            }
            let mk = format!("opt/m/{name}");
            let vk = format!("opt/v/{name}");
            match (tensors.get(&mk), tensors.get(&vk)) {
                (Some(a), Some(b)) if a.data.len() == data.len() && b.data.len() == data.len() => {
                    m.push(a.data.clone());
                    v.push(b.data.clone());
                }
                _ => err = Some(format!("incomplete optimizer state for {name}")),
            }
        });
        if let Some(e) = err {
            return Err(CheckpointError::Malformed(e));
        }
        Some(OptimizerState { m, v, step: step_t.data[0] as u64 })
    } else {
        None
    };

    Ok(Checkpoint { params, opt })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::init_params;
    use crate::rng::Stream;

    fn random_checkpoint(with_opt: bool) -> Checkpoint {
        let cfg = NetworkConfig {
            pre_encoder_layers: 2,
            pre_encoder_channels: 4,
            dde_layers: 8,
            decoder_layers: 2,
            decoder_channels: 4,
            target_bpp: 1,
        };
        let mut params = init_params::<f32>(&cfg, 7);
        let mut s = Stream::new(99, 0);
        params.visit_tensors_mut(|_, t| {
            for x in t.iter_mut() {
                *x = s.uniform_in(-2.0, 2.0) as f32;
            }
        });
        let opt = with_opt.then(|| {
            let mut st = OptimizerState::zeros_like(&params);
            st.step = 1234;
            for t in st.m.iter_mut().chain(st.v.iter_mut()) {
                for x in t.iter_mut() {
                    *x = s.uniform_in(0.0, 1.0) as f32;
                }
            }
            st
        });
        Checkpoint { params, opt }
    }

    #[test]
    fn roundtrip_is_bit_identical() {
        for with_opt in [false, true] {
            let ckpt = random_checkpoint(with_opt);
            let bytes = encode(&ckpt);
            let back = decode(&bytes).unwrap();
            assert_eq!(back, ckpt, "with_opt={with_opt}");
            // Re-encoding is also byte-identical (canonical order).
            assert_eq!(encode(&back), bytes);
        }
    }

    #[test]
    fn wrong_magic_is_rejected() {
        let mut bytes = encode(&random_checkpoint(false));
        bytes[0] = b'X';
        assert_eq!(decode(&bytes), Err(CheckpointError::BadMagic));
    }

    #[test]
    fn version_mismatch_is_reported() {
        let mut bytes = encode(&random_checkpoint(false));
        bytes[4..8].copy_from_slice(&9u32.to_le_bytes());
        assert_eq!(decode(&bytes), Err(CheckpointError::VersionMismatch { found: 9 }));
    }

    #[test]
    fn truncation_is_detected_everywhere() {
        let bytes = encode(&random_checkpoint(true));
        for cut in [3usize, 7, 11, 20, bytes.len() / 2, bytes.len() - 1] {
            let got = decode(&bytes[..cut]);
            assert_eq!(got.unwrap_err(), CheckpointError::TruncatedFile, "cut at {cut}");
        }
    }

    #[test]
    fn missing_tensor_is_malformed() {
        // Encode, then drop the tensor count by renaming one weight tensor.
        let ckpt = random_checkpoint(false);
        let mut bytes = encode(&ckpt);
        // find the name "pre/0/w" and corrupt it to "pre/0/x"
        let needle = b"pre/0/w";
        let pos = bytes.windows(needle.len()).position(|w| w == needle).unwrap();
        bytes[pos + 6] = b'x';
        match decode(&bytes) {
            Err(CheckpointError::Malformed(m)) => assert!(m.contains("pre/0/w"), "{m}"),
            other => panic!("expected Malformed, got {other:?}"),
        }
    }
}
