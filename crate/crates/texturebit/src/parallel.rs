//! Worker threads for batch pairs and corpus-wide evaluation.
//!
//! `TEXTUREBIT_THREADS` caps parallelism everywhere. Pair outcomes are
//! returned in input order and folded sequentially, so the numbers a batch
//! produces do not depend on scheduling; `--strict-deterministic` simply
//! forces the serial runner.

use texturebit_core::image::ImageTensor;
use texturebit_core::network::{ForwardMode, ModelParams};
use texturebit_core::scalar::Real;
use texturebit_core::train::{run_pair, BatchRunner, PairLossConfig, PairOutcome};

/// Number of worker threads to use for `want` independent tasks.
pub fn thread_budget(want: usize) -> usize {
    let hw = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let cap = std::env::var("TEXTUREBIT_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or(hw);
    cap.min(hw).min(want.max(1))
}

/// Runs batch pairs on a small thread pool, preserving order.
pub struct ThreadedRunner;

impl<T: Real> BatchRunner<T> for ThreadedRunner {
    fn run_pairs(
        &self,
        params: &ModelParams<T>,
        plc: &PairLossConfig,
        pairs: &[(&ImageTensor<T>, &ImageTensor<T>)],
        mode: ForwardMode,
    ) -> Vec<PairOutcome<T>> {
        let workers = thread_budget(pairs.len());
        if workers <= 1 || pairs.len() <= 1 {
            return pairs.iter().map(|(e, o)| run_pair(params, plc, e, o, mode)).collect();
        }
        let chunk = pairs.len().div_ceil(workers);
        let mut out = Vec::with_capacity(pairs.len());
        std::thread::scope(|s| {
            let handles: Vec<_> = pairs
                .chunks(chunk)
                .map(|slice| {
                    s.spawn(move || {
                        slice
                            .iter()
                            .map(|(e, o)| run_pair(params, plc, e, o, mode))
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            for h in handles {
                out.extend(h.join().expect("pair worker panicked"));
            }
        });
        out
    }
}

/// Map `items` through `f` on the thread budget, preserving order.
pub fn parallel_map<I: Sync, O: Send>(items: &[I], f: impl Fn(&I) -> O + Sync) -> Vec<O> {
    let workers = thread_budget(items.len());
    if workers <= 1 || items.len() <= 1 {
        return items.iter().map(f).collect();
    }
    let chunk = items.len().div_ceil(workers);
    let mut out = Vec::with_capacity(items.len());
    std::thread::scope(|s| {
        let f = &f;
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|slice| s.spawn(move || slice.iter().map(f).collect::<Vec<_>>()))
            .collect();
        for h in handles {
            out.extend(h.join().expect("map worker panicked"));
        }
    });
    out
}
