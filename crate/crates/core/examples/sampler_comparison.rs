//! Corpus WER of every sampler with a trained denoiser on the HMM-emission
//! task at a fixed NFE budget, over several seeds.
//!
//! ```text
//! cargo run --release --example sampler_comparison -- [steps] [seeds] [max_nfe]
//! ```

use maskdiff::denoiser::{NeuralConfig, NeuralDenoiser};
use maskdiff::eval::sweep;
use maskdiff::sampler::{SamplerConfig, SamplerKind};
use maskdiff::task::{TaskKind, TaskSpec};
use maskdiff::train::{train, TrainConfig};

fn main() -> maskdiff::Result<()> {
    let mut args = std::env::args().skip(1);
    let steps: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(300);
    let seeds: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(3);
    let max_nfe: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(8);

    print!("{:>4}", "seed");
    for kind in SamplerKind::ALL {
        print!(" {:>11}", kind.name());
    }
    println!();
    for seed in 0..seeds {
        let spec = TaskSpec::new(TaskKind::HmmEmission, 8, (8, 16), 0.3).with_seed(200 + seed);
        let data = spec.generate(1000)?;
        let (train_set, test_set) = data.split_at(800);
        let canvas = spec.length_range.1 + 1;

        let mut arch = NeuralConfig::new(spec.feature_dim, spec.frames_per_token);
        arch.max_len = canvas;
        arch.seed = seed;
        let mut model = NeuralDenoiser::new(arch, spec.vocab())?;
        let config = TrainConfig {
            steps,
            canvas_len: Some(canvas),
            seed,
            ..TrainConfig::default()
        };
        train(train_set, &mut model, &config)?;

        let configs: Vec<SamplerConfig> = SamplerKind::ALL
            .iter()
            .map(|&kind| SamplerConfig {
                kind,
                max_nfe,
                k: canvas.div_ceil(max_nfe),
                max_len: canvas,
                seed,
                ..SamplerConfig::default()
            })
            .collect();
        let report = sweep("hmm_emission", test_set, &model, &configs)?;
        print!("{seed:>4}");
        for row in &report.rows {
            print!(" {:>11.4}", row.wer);
        }
        println!();
    }
    Ok(())
}
