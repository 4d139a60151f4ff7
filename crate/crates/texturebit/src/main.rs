use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use texturebit::commands::{
    cmd_binarize, cmd_compare, cmd_eval, cmd_reconstruct, cmd_synth, cmd_train, parse_methods,
    TrainArgs,
};
use texturebit_core::train::TrainConfig;

/// Reversible image binarization through learned textures.
#[derive(Parser)]
#[command(name = "texturebit", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model on a directory of PNGs.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Checkpoint output path; metrics go to <out>.metrics.csv.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        steps: u64,
        #[arg(long, default_value_t = 16)]
        batch: usize,
        #[arg(long, default_value_t = 1e-4)]
        lr: f64,
        #[arg(long, default_value_t = 0.1)]
        alpha: f64,
        #[arg(long, default_value_t = 0.1)]
        beta: f64,
        #[arg(long, default_value_t = 8)]
        r: usize,
        #[arg(long = "synthetic-frac", default_value_t = 0.1)]
        synthetic_frac: f64,
        /// Input noise amplitude on the [-1, 1] scale.
        #[arg(long, default_value_t = 0.1)]
        noise: f64,
        #[arg(long, default_value_t = 128)]
        resolution: usize,
        /// Bits per pixel of the trained representation (1..=8).
        #[arg(long, default_value_t = 1)]
        bpp: u32,
        #[arg(long = "decoder-layers", default_value_t = 2)]
        decoder_layers: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Run single-threaded with a fixed reduction order.
        #[arg(long = "strict-deterministic")]
        strict_deterministic: bool,
    },
    /// Encode an image to its binary (or low-bit) texture plane.
    Binarize {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Must equal the checkpoint's trained bpp; bit rate is a training
        /// property, not an inference switch.
        #[arg(long)]
        bpp: Option<u32>,
    },
    /// Reconstruct colors from a rendered plane.
    Reconstruct {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Mean per-channel pixel error of reconstruct(binarize(x)) over a corpus.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Generate synthetic shape images.
    Synth {
        #[arg(long)]
        count: u64,
        #[arg(long, default_value_t = 128)]
        resolution: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compose a side-by-side grid: original plus selected methods.
    Compare {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Comma-separated: otsu, fsd, ours.
        #[arg(long)]
        methods: String,
        #[arg(long)]
        output: PathBuf,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Train {
            data,
            out,
            steps,
            batch,
            lr,
            alpha,
            beta,
            r,
            synthetic_frac,
            noise,
            resolution,
            bpp,
            decoder_layers,
            seed,
            strict_deterministic,
        } => {
            let cfg = TrainConfig {
                learning_rate: lr,
                batch_size: batch,
                alpha,
                beta,
                r,
                synthetic_fraction: synthetic_frac,
                input_noise_amplitude: noise,
                steps,
                seed,
                resolution,
                target_bpp: bpp,
                decoder_layers,
                ..TrainConfig::default()
            };
            cmd_train(&TrainArgs { data, out, cfg, strict_deterministic })
        }
        Command::Binarize { model, input, output, bpp } => {
            cmd_binarize(&model, &input, &output, bpp)
        }
        Command::Reconstruct { model, input, output } => {
            cmd_reconstruct(&model, &input, &output)
        }
        Command::Eval { model, data } => cmd_eval(&model, &data),
        Command::Synth { count, resolution, seed, out } => {
            cmd_synth(count, resolution, seed, &out)
        }
        Command::Compare { input, model, methods, output } => {
            let methods = parse_methods(&methods)?;
            cmd_compare(&input, model.as_deref(), &methods, &output)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
