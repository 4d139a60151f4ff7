//! Checkpoint files and corpus directories.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use texturebit_core::checkpoint::{self, Checkpoint};
use texturebit_core::image::{to_tensor, ImageTensor};
use texturebit_core::network::ModelParams;
use texturebit_core::train::OptimizerState;

use crate::pngio::load_image;

/// Write a checkpoint atomically (temp file + rename).
pub fn save_checkpoint(
    params: &ModelParams<f32>,
    opt: Option<&OptimizerState>,
    path: &Path,
) -> Result<()> {
    let ckpt = Checkpoint { params: params.clone(), opt: opt.cloned() };
    let bytes = checkpoint::encode(&ckpt);
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, &bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming to {}", path.display()))?;
    Ok(())
}

/// Read a checkpoint file.
pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    checkpoint::decode(&bytes).map_err(|e| anyhow!("{}: {e}", path.display()))
}

/// Sorted list of PNG paths in a directory.
pub fn corpus_paths(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading corpus dir {}", dir.display()))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().map(|x| x.eq_ignore_ascii_case("png")).unwrap_or(false))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(anyhow!("empty corpus: no PNG files in {}", dir.display()));
    }
    Ok(paths)
}

/// Load every PNG in a directory as a canonical tensor, sorted by filename.
pub fn load_corpus(dir: &Path) -> Result<Vec<ImageTensor<f32>>> {
    corpus_paths(dir)?
        .iter()
        .map(|p| Ok(to_tensor::<f32>(&load_image(p)?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use texturebit_core::network::{init_params, NetworkConfig};

    fn tiny_params() -> ModelParams<f32> {
        let cfg = NetworkConfig {
            pre_encoder_layers: 1,
            pre_encoder_channels: 2,
            dde_layers: 8,
            decoder_layers: 1,
            decoder_channels: 2,
            target_bpp: 1,
        };
        init_params(&cfg, 5)
    }

    #[test]
    fn checkpoint_file_roundtrip_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.txb");
        let params = tiny_params();
        let mut opt = OptimizerState::zeros_like(&params);
        opt.step = 42;
        save_checkpoint(&params, Some(&opt), &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back.params, params);
        assert_eq!(back.opt.unwrap(), opt);
    }

    #[test]
    fn load_errors_pass_through() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.txb");
        std::fs::write(&path, b"XXXX rest").unwrap();
        let err = load_checkpoint(&path).unwrap_err().to_string();
        assert!(err.contains("bad magic"), "{err}");
        std::fs::write(&path, &texturebit_core::checkpoint::encode(&Checkpoint {
            params: tiny_params(),
            opt: None,
        })[..30]).unwrap();
        let err = load_checkpoint(&path).unwrap_err().to_string();
        assert!(err.contains("truncated file"), "{err}");
    }

    #[test]
    fn empty_corpus_dir_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_corpus(dir.path()).unwrap_err().to_string();
        assert!(err.contains("empty corpus"), "{err}");
    }
}
