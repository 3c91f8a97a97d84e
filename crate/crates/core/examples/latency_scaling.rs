//! Left-to-right decoding against parallel unmasking: denoiser calls and
//! RTFx as the output grows.

use maskdiff::denoiser::AnalyticOracle;
use maskdiff::eval::latency_comparison;
use maskdiff::sampler::{SamplerConfig, SamplerKind};
use maskdiff::task::{TaskKind, TaskSpec};

fn main() -> maskdiff::Result<()> {
    let configs: Vec<SamplerConfig> = [SamplerKind::ConfTopK, SamplerKind::PbebConf]
        .iter()
        .map(|&kind| SamplerConfig {
            kind,
            max_nfe: 32,
            k: 4,
            ..SamplerConfig::default()
        })
        .collect();
    println!("{:>6} {:>11} {:>8} {:>12}", "length", "method", "calls", "rtfx");
    for len in [16, 32, 64, 128, 256] {
        let spec = TaskSpec::new(TaskKind::HmmEmission, 8, (len, len), 0.05).with_seed(len as u64);
        let data = spec.generate(4)?;
        let oracle = AnalyticOracle::new(spec)?;
        for row in latency_comparison(&data, &oracle, &configs)? {
            println!("{:>6} {:>11} {:>8.1} {:>12.1}", row.length, row.method, row.mean_calls, row.rtfx);
        }
    }
    Ok(())
}
