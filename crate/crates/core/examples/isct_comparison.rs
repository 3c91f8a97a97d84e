//! Train the neural denoiser on the noisy-channel task with and without
//! iterative self-correction and compare test WER at small NFE budgets.
//!
//! ```text
//! cargo run --release --example isct_comparison -- [steps] [seeds]
//! ```

use maskdiff::denoiser::{NeuralConfig, NeuralDenoiser};
use maskdiff::eval::sweep;
use maskdiff::sampler::{SamplerConfig, SamplerKind};
use maskdiff::task::{TaskKind, TaskSpec};
use maskdiff::train::{train, TrainConfig};

fn main() -> maskdiff::Result<()> {
    let mut args = std::env::args().skip(1);
    let steps: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(400);
    let seeds: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(3);

    println!("{:>4} {:>6} {:>8} {:>8} {:>10}", "seed", "nfe", "plain", "isct", "final loss");
    for seed in 0..seeds {
        let spec = TaskSpec::new(TaskKind::NoisyChannel, 8, (4, 16), 0.2).with_seed(100 + seed);
        let data = spec.generate(1000)?;
        let (train_set, test_set) = data.split_at(800);
        let canvas = spec.length_range.1 + 1;

        let mut models = Vec::new();
        for isct in [false, true] {
            let mut arch = NeuralConfig::new(spec.feature_dim, spec.frames_per_token);
            arch.max_len = canvas;
            arch.seed = seed;
            let mut model = NeuralDenoiser::new(arch, spec.vocab())?;
            let config = TrainConfig {
                steps,
                isct_enabled: isct,
                canvas_len: Some(canvas),
                seed,
                ..TrainConfig::default()
            };
            let outcome = train(train_set, &mut model, &config)?;
            models.push((model, outcome.curve.last().map_or(f64::NAN, |r| r.loss)));
        }

        for nfe in [2, 4, 8] {
            let config = SamplerConfig {
                kind: SamplerKind::PbebConf,
                max_nfe: nfe,
                max_len: canvas,
                seed,
                ..SamplerConfig::default()
            };
            let plain = sweep("noisy_channel", test_set, &models[0].0, std::slice::from_ref(&config))?;
            let isct = sweep("noisy_channel", test_set, &models[1].0, std::slice::from_ref(&config))?;
            println!(
                "{seed:>4} {nfe:>6} {:>8.4} {:>8.4} {:>5.2}/{:<5.2}",
                plain.rows[0].wer, isct.rows[0].wer, models[0].1, models[1].1
            );
        }
    }
    Ok(())
}
