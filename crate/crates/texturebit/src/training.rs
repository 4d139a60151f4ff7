//! The training driver: step loop, metrics log, periodic checkpoints, and
//! optional resume from a checkpoint that carries optimizer state.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context, Result};
use texturebit_core::image::{from_tensor, ImageTensor};
use texturebit_core::losses::{pixel_error, LossBreakdown};
use texturebit_core::network::{binarize, decode, init_params, ModelParams};
use texturebit_core::train::{
    assemble_batch, train_step, BatchRunner, OptimizerState, TrainConfig,
};

use crate::files::{load_checkpoint, save_checkpoint};
use crate::parallel::parallel_map;

/// Steps between periodic checkpoint writes.
pub const CHECKPOINT_INTERVAL: u64 = 500;

/// Path of the metrics log that belongs to a checkpoint.
pub fn metrics_path(ckpt: &Path) -> PathBuf {
    let mut os = ckpt.as_os_str().to_owned();
    os.push(".metrics.csv");
    PathBuf::from(os)
}

fn format_metrics_line(step: u64, lb: &LossBreakdown) -> String {
    format!("{},{},{},{},{}\n", step, lb.l2, lb.rel_intensity, lb.continuity, lb.total)
}

/// Train `cfg.steps` steps over the corpus, writing the checkpoint and one
/// metrics line per step. With `resume`, continue from the optimizer step
/// recorded in an existing checkpoint at `ckpt_path` (the metrics log is
/// truncated back to that step first).
pub fn train_to_files(
    corpus: &[ImageTensor<f32>],
    cfg: &TrainConfig,
    ckpt_path: &Path,
    resume: bool,
    runner: &dyn BatchRunner<f32>,
    mut progress: impl FnMut(u64, &LossBreakdown, f64),
) -> Result<()> {
    cfg.validate().map_err(|e| anyhow!("{e}"))?;
    let net_cfg = cfg.network_config();
    let metrics_file = metrics_path(ckpt_path);

    let mut params: ModelParams<f32>;
    let mut opt: OptimizerState;
    let mut start_step: u64 = 0;
    let mut metrics: Vec<String> = Vec::new();

    if resume && ckpt_path.exists() {
        let ckpt = load_checkpoint(ckpt_path)?;
        let opt_state = ckpt
            .opt
            .ok_or_else(|| anyhow!("{}: cannot resume without optimizer state", ckpt_path.display()))?;
        if ckpt.params.config != net_cfg {
            return Err(anyhow!("{}: checkpoint architecture differs from config", ckpt_path.display()));
        }
        start_step = opt_state.step;
        params = ckpt.params;
        opt = opt_state;
        if start_step > 0 {
            let existing = fs::read_to_string(&metrics_file)
                .with_context(|| format!("resume needs {}", metrics_file.display()))?;
            let lines: Vec<&str> = existing.lines().collect();
            if (lines.len() as u64) < start_step {
                return Err(anyhow!(
                    "{}: metrics log has {} lines but checkpoint is at step {start_step}",
                    metrics_file.display(),
                    lines.len()
                ));
            }
            metrics =
                lines[..start_step as usize].iter().map(|l| format!("{l}\n")).collect();
        }
    } else {
        params = init_params(&net_cfg, cfg.seed);
        opt = OptimizerState::zeros_like(&params);
    }

    let synth_cfg = cfg.synth_config();
    let flush = |metrics: &[String], params: &ModelParams<f32>, opt: &OptimizerState| -> Result<()> {
        let mut f = fs::File::create(&metrics_file)
            .with_context(|| format!("writing {}", metrics_file.display()))?;
        for line in metrics {
            f.write_all(line.as_bytes())?;
        }
        f.flush()?;
        save_checkpoint(params, Some(opt), ckpt_path)?;
        Ok(())
    };

    if start_step == cfg.steps {
        // Nothing to do, but make sure the files exist (steps = 0 case).
        flush(&metrics, &params, &opt)?;
        return Ok(());
    }

    for step in start_step..cfg.steps {
        let t0 = Instant::now();
        let batch = assemble_batch(corpus, &synth_cfg, cfg, step).map_err(|e| anyhow!("{e}"))?;
        let lb = train_step(&mut params, &mut opt, &batch, cfg, runner).map_err(|e| anyhow!("{e}"))?;
        metrics.push(format_metrics_line(step, &lb));
        progress(step, &lb, t0.elapsed().as_secs_f64());
        if (step + 1) % CHECKPOINT_INTERVAL == 0 {
            flush(&metrics, &params, &opt)?;
        }
    }
    flush(&metrics, &params, &opt)?;
    Ok(())
}

/// Mean per-channel pixel error of `reconstruct(binarize(x))` against `x`
/// over a corpus, evaluated in parallel.
pub fn eval_pixel_error(params: &ModelParams<f32>, corpus: &[ImageTensor<f32>]) -> f64 {
    let errs = parallel_map(corpus, |img| {
        let plane = binarize(img, params);
        let recon = decode(&plane, params);
        pixel_error(&from_tensor(img), &from_tensor(&recon)).expect("same dims")
    });
    errs.iter().sum::<f64>() / errs.len().max(1) as f64
}

/// Moving average of the `total` column of a metrics log.
pub fn moving_average_total(metrics_csv: &str, window: usize) -> Vec<(u64, f64)> {
    let totals: Vec<(u64, f64)> = metrics_csv
        .lines()
        .filter_map(|l| {
            let mut parts = l.split(',');
            let step: u64 = parts.next()?.parse().ok()?;
            let total: f64 = parts.nth(3)?.parse().ok()?;
            Some((step, total))
        })
        .collect();
    let mut out = Vec::new();
    let mut acc = 0.0;
    for i in 0..totals.len() {
        acc += totals[i].1;
        if i + 1 >= window {
            out.push((totals[i].0, acc / window as f64));
            acc -= totals[i + 1 - window].1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use texturebit_core::train::SerialRunner;

    fn tiny_cfg(steps: u64) -> TrainConfig {
        TrainConfig {
            steps,
            batch_size: 4,
            resolution: 12,
            r: 2,
            seed: 77,
            pre_encoder_layers: 1,
            pre_encoder_channels: 3,
            decoder_channels: 3,
            ..TrainConfig::default()
        }
    }

    fn tiny_corpus() -> Vec<ImageTensor<f32>> {
        vec![
            ImageTensor::filled(12, 12, [0.6, -0.2, 0.0]),
            ImageTensor::filled(12, 12, [-0.6, 0.4, 0.2]),
        ]
    }

    #[test]
    fn zero_steps_writes_initialization_checkpoint() {
        let dir = tempfile::tempdir().unwrap();
        let ckpt = dir.path().join("m.txb");
        let cfg = tiny_cfg(0);
        train_to_files(&tiny_corpus(), &cfg, &ckpt, false, &SerialRunner, |_, _, _| {}).unwrap();
        let loaded = load_checkpoint(&ckpt).unwrap();
        let want = init_params::<f32>(&cfg.network_config(), cfg.seed);
        assert_eq!(loaded.params, want);
        assert_eq!(fs::read_to_string(metrics_path(&ckpt)).unwrap(), "");
    }

    #[test]
    fn metrics_has_exactly_steps_lines() {
        let dir = tempfile::tempdir().unwrap();
        let ckpt = dir.path().join("m.txb");
        let cfg = tiny_cfg(7);
        train_to_files(&tiny_corpus(), &cfg, &ckpt, false, &SerialRunner, |_, _, _| {}).unwrap();
        let text = fs::read_to_string(metrics_path(&ckpt)).unwrap();
        assert_eq!(text.lines().count(), 7);
        for (i, line) in text.lines().enumerate() {
            assert!(line.starts_with(&format!("{i},")), "{line}");
            assert_eq!(line.split(',').count(), 5);
        }
    }

    #[test]
    fn resume_reproduces_uninterrupted_run_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = tiny_corpus();

        let full = dir.path().join("full.txb");
        train_to_files(&corpus, &tiny_cfg(6), &full, false, &SerialRunner, |_, _, _| {}).unwrap();

        // Interrupted: 3 steps, then resume to 6.
        let part = dir.path().join("part.txb");
        train_to_files(&corpus, &tiny_cfg(3), &part, false, &SerialRunner, |_, _, _| {}).unwrap();
        train_to_files(&corpus, &tiny_cfg(6), &part, true, &SerialRunner, |_, _, _| {}).unwrap();

        let a = load_checkpoint(&full).unwrap();
        let b = load_checkpoint(&part).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            fs::read_to_string(metrics_path(&full)).unwrap(),
            fs::read_to_string(metrics_path(&part)).unwrap()
        );
    }

    #[test]
    fn moving_average_window() {
        let csv = "0,0,0,0,4\n1,0,0,0,2\n2,0,0,0,6\n3,0,0,0,0\n";
        let ma = moving_average_total(csv, 2);
        assert_eq!(ma, vec![(1, 3.0), (2, 4.0), (3, 3.0)]);
    }
}
