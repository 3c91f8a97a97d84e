//! Train a small denoiser, save it, reload it and decode the test split.
//!
//! ```text
//! cargo run --release --example train_denoiser -- [steps] [--isct]
//! ```

use maskdiff::denoiser::{read_checkpoint, write_checkpoint, NeuralConfig, NeuralDenoiser};
use maskdiff::eval::sweep;
use maskdiff::sampler::SamplerConfig;
use maskdiff::task::{TaskKind, TaskSpec};
use maskdiff::train::{train, write_loss_csv, TrainConfig};

fn main() -> maskdiff::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let steps = args.iter().find_map(|a| a.parse().ok()).unwrap_or(300);
    let isct = args.iter().any(|a| a == "--isct");

    let spec = TaskSpec::new(TaskKind::HmmEmission, 8, (6, 14), 0.2).with_seed(1);
    let data = spec.generate(600)?;
    let (train_set, test_set) = data.split_at(500);
    let canvas = spec.length_range.1 + 1;

    let mut arch = NeuralConfig::new(spec.feature_dim, spec.frames_per_token);
    arch.max_len = canvas;
    let mut model = NeuralDenoiser::new(arch, spec.vocab())?;
    let config = TrainConfig {
        steps,
        isct_enabled: isct,
        canvas_len: Some(canvas),
        ..TrainConfig::default()
    };
    println!("{} parameters, {steps} steps, isct {isct}", model.num_parameters());
    let outcome = train(train_set, &mut model, &config)?;
    for r in outcome.curve.iter().step_by((steps / 10).max(1)) {
        println!("step {:>5}  loss {:>8.3}  masked {:.2}", r.step, r.loss, r.masked_fraction);
    }

    let dir = std::env::temp_dir().join("maskdiff_train_example");
    std::fs::create_dir_all(&dir)?;
    write_loss_csv(&dir.join("loss.csv"), &outcome.curve)?;
    let path = dir.join("model.ckpt");
    write_checkpoint(&path, &model, serde_json::to_value(&config).ok())?;
    let (reloaded, _) = read_checkpoint(&path)?;
    assert_eq!(reloaded, model);

    let sampler = SamplerConfig {
        max_len: canvas,
        ..SamplerConfig::default()
    };
    let report = sweep("hmm_emission", test_set, &reloaded, &[sampler])?;
    println!("test WER {:.4} with pbeb_conf at nfe 32; files in {}", report.rows[0].wer, dir.display());
    Ok(())
}
