//! Decode one utterance with every sampler and print the reveal schedule.

use maskdiff::denoiser::AnalyticOracle;
use maskdiff::sampler::{decode, SamplerConfig, SamplerKind};
use maskdiff::task::{TaskKind, TaskSpec};

fn main() -> maskdiff::Result<()> {
    let spec = TaskSpec::new(TaskKind::HmmEmission, 6, (10, 12), 0.15).with_seed(3);
    let ex = &spec.generate(1)?[0];
    let oracle = AnalyticOracle::new(spec.clone())?;
    let vocab = spec.vocab();
    println!("reference  {}", vocab.decode(ex.target.ids()).join(" "));

    for kind in SamplerKind::ALL {
        let config = SamplerConfig {
            kind,
            max_nfe: 8,
            k: 2,
            max_len: 13,
            ..SamplerConfig::default()
        };
        let d = decode(&oracle, &ex.cond, &config)?;
        let schedule: Vec<String> = d.trace.steps.iter().map(|s| format!("{:?}", s.positions_unmasked)).collect();
        println!("\n{kind} (nfe {})", d.trace.nfe);
        println!("  hypothesis {}", vocab.decode(&d.tokens).join(" "));
        println!("  reveals    {}", schedule.join(" "));
    }
    Ok(())
}
