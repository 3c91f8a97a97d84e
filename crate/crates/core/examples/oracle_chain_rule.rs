//! Decoding one token per step with the exact oracle and revealing by
//! sampling draws exact samples from the joint, whatever the order.

use maskdiff::denoiser::ExactOracle;
use maskdiff::sampler::{decode, RevealRule, SamplerConfig, SamplerKind};
use maskdiff::task::TableJoint;
use maskdiff::types::{Condition, Vocabulary};

fn main() -> maskdiff::Result<()> {
    let vocab = Vocabulary::synthetic(3)?;
    let table = vec![
        (vec![0, 0], 0.40),
        (vec![0, 1], 0.10),
        (vec![1, 2], 0.25),
        (vec![2, 2], 0.20),
        (vec![2, 0], 0.05),
    ];
    let oracle = ExactOracle::new(TableJoint::new(vocab.clone(), table.clone())?);
    let cond = Condition::new(vec![vec![0.0]], 1.0)?;
    let n = 20_000;

    for kind in [SamplerKind::Random, SamplerKind::ConfTopK] {
        let mut counts = vec![0usize; table.len()];
        for seed in 0..n {
            let config = SamplerConfig {
                kind,
                max_nfe: 2,
                k: 1,
                max_len: 2,
                seed,
                reveal: RevealRule::Sample,
                ..SamplerConfig::default()
            };
            let d = decode(&oracle, &cond, &config)?;
            if let Some(i) = table.iter().position(|(s, _)| *s == d.canvas) {
                counts[i] += 1;
            }
        }
        println!("{kind}");
        for ((seq, p), c) in table.iter().zip(&counts) {
            println!("  {:<8} target {p:.3}  empirical {:.3}", vocab.decode(seq).join(" "), *c as f64 / n as f64);
        }
    }
    Ok(())
}
