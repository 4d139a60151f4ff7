//! Implementations of the CLI subcommands.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Result};
use texturebit_core::baselines::{apply_threshold, compose_grid, floyd_steinberg, otsu_threshold};
use texturebit_core::image::{
    from_tensor, plane_from_rendered, render_binary, render_plane, to_grayscale, to_tensor,
    PixelBuffer,
};
use texturebit_core::network::{binarize, decode, ModelParams};
use texturebit_core::synth::{generate_synthetic, SynthConfig};
use texturebit_core::train::{BatchRunner, SerialRunner, TrainConfig};

use crate::files::{load_checkpoint, load_corpus};
use crate::parallel::ThreadedRunner;
use crate::pngio::{load_image, save_image};
use crate::training::{eval_pixel_error, train_to_files};

pub struct TrainArgs {
    pub data: PathBuf,
    pub out: PathBuf,
    pub cfg: TrainConfig,
    pub strict_deterministic: bool,
}

pub fn cmd_train(args: &TrainArgs) -> Result<()> {
    let corpus = load_corpus(&args.data)?;
    let serial = SerialRunner;
    let threaded = ThreadedRunner;
    let runner: &dyn BatchRunner<f32> =
        if args.strict_deterministic { &serial } else { &threaded };
    let steps = args.cfg.steps;
    train_to_files(&corpus, &args.cfg, &args.out, false, runner, |step, lb, dt| {
        if step % 50 == 0 || step + 1 == steps {
            eprintln!(
                "step {step}: total {:.5} (l2 {:.5} rel {:.5} cont {:.5}) {:.2}s",
                lb.total, lb.l2, lb.rel_intensity, lb.continuity, dt
            );
        }
    })
}

fn render_final_plane(
    plane: &texturebit_core::quantize::DiscretePlane<f32>,
) -> Result<PixelBuffer> {
    if plane.levels == 2 {
        render_binary(plane).map_err(|e| anyhow!("{e}"))
    } else {
        Ok(render_plane(plane))
    }
}

pub fn cmd_binarize(
    model: &Path,
    input: &Path,
    output: &Path,
    bpp: Option<u32>,
) -> Result<()> {
    let ckpt = load_checkpoint(model)?;
    if let Some(requested) = bpp {
        if requested != ckpt.params.config.target_bpp {
            bail!(
                "bpp mismatch with checkpoint: requested {requested}, model was trained at {}",
                ckpt.params.config.target_bpp
            );
        }
    }
    let tensor = to_tensor::<f32>(&load_image(input)?);
    let plane = binarize(&tensor, &ckpt.params);
    save_image(&render_final_plane(&plane)?, output)
}

pub fn cmd_reconstruct(model: &Path, input: &Path, output: &Path) -> Result<()> {
    let ckpt = load_checkpoint(model)?;
    let buf = load_image(input)?;
    // load_image always yields 3 channels; a plane rendering must be gray.
    let gray = {
        let hw = buf.width * buf.height;
        let mut data = Vec::with_capacity(hw);
        for i in 0..hw {
            let (r, g, b) = (buf.data[i * 3], buf.data[i * 3 + 1], buf.data[i * 3 + 2]);
            if r != g || g != b {
                bail!("input not in level set: pixel {i} is not grayscale");
            }
            data.push(r);
        }
        PixelBuffer::new(buf.width, buf.height, 1, data)
    };
    let levels = ckpt.params.config.final_levels();
    let plane = plane_from_rendered::<f32>(&gray, levels).map_err(|e| anyhow!("{e}"))?;
    let recon = decode(&plane, &ckpt.params);
    save_image(&from_tensor(&recon), output)
}

pub fn cmd_eval(model: &Path, data: &Path) -> Result<()> {
    let ckpt = load_checkpoint(model)?;
    let corpus = load_corpus(data)?;
    let err = eval_pixel_error(&ckpt.params, &corpus);
    println!("images {}", corpus.len());
    println!("mean_pixel_error {err}");
    Ok(())
}

pub fn cmd_synth(count: u64, resolution: usize, seed: u64, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let cfg = SynthConfig::new(resolution, seed);
    for index in 0..count {
        let img = generate_synthetic::<f32>(&cfg, index);
        let path = out_dir.join(format!("synth_{index:06}.png"));
        save_image(&from_tensor(&img), &path)?;
    }
    Ok(())
}

/// Binarization methods a comparison grid can include.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Otsu,
    Fsd,
    Ours,
}

pub fn parse_methods(spec: &str) -> Result<Vec<Method>> {
    if spec.trim().is_empty() {
        return Ok(Vec::new());
    }
    spec.split(',')
        .map(|m| match m.trim() {
            "otsu" => Ok(Method::Otsu),
            "fsd" => Ok(Method::Fsd),
            "ours" => Ok(Method::Ours),
            other => Err(anyhow!("unknown method {other:?} (expected otsu, fsd, ours)")),
        })
        .collect()
}

pub fn cmd_compare(
    input: &Path,
    model: Option<&Path>,
    methods: &[Method],
    output: &Path,
) -> Result<()> {
    let buf = load_image(input)?;
    let gray = to_grayscale(&buf);
    let mut tiles: Vec<PixelBuffer> = vec![buf.clone()];
    for m in methods {
        let tile = match m {
            Method::Otsu => {
                let t = otsu_threshold(&gray).map_err(|e| anyhow!("{e}"))?;
                apply_threshold(&gray, t)
            }
            Method::Fsd => floyd_steinberg(&gray).map_err(|e| anyhow!("{e}"))?,
            Method::Ours => {
                let model =
                    model.ok_or_else(|| anyhow!("method 'ours' needs --model CKPT"))?;
                let ckpt = load_checkpoint(model)?;
                let plane = binarize(&to_tensor::<f32>(&buf), &ckpt.params);
                render_final_plane(&plane)?
            }
        };
        tiles.push(tile);
    }
    let refs: Vec<&PixelBuffer> = tiles.iter().collect();
    let grid = compose_grid(&refs).map_err(|e| anyhow!("{e}"))?;
    save_image(&grid, output)
}

/// Shared by tests: checkpoint params for a path.
pub fn load_params(model: &Path) -> Result<ModelParams<f32>> {
    Ok(load_checkpoint(model)?.params)
}
