//! WER of every sampler across NFE budgets with the exact posterior of a
//! noisy HMM task. Writes a CSV report and an SVG chart.

use maskdiff::denoiser::AnalyticOracle;
use maskdiff::eval::{line_chart_svg, sweep, Series};
use maskdiff::sampler::{SamplerConfig, SamplerKind};
use maskdiff::task::{TaskKind, TaskSpec};

fn main() -> maskdiff::Result<()> {
    let spec = TaskSpec::new(TaskKind::HmmEmission, 8, (16, 24), 0.3).with_seed(4);
    let data = spec.generate(100)?;
    let oracle = AnalyticOracle::new(spec.clone())?;
    let budgets = [2, 4, 8, 16, 32];

    let mut configs = Vec::new();
    for kind in SamplerKind::ALL {
        for max_nfe in budgets {
            configs.push(SamplerConfig {
                kind,
                max_nfe,
                k: 25usize.div_ceil(max_nfe),
                max_len: 25,
                ..SamplerConfig::default()
            });
        }
    }
    let report = sweep("hmm_emission", &data, &oracle, &configs)?;
    print!("{}", report.to_csv());

    let series: Vec<Series> = SamplerKind::ALL
        .iter()
        .map(|k| Series {
            label: k.name().into(),
            points: report.rows.iter().filter(|r| r.sampler == k.name()).map(|r| (r.nfe_budget as f64, r.wer)).collect(),
        })
        .collect();
    let dir = std::env::temp_dir();
    report.write_csv(&dir.join("nfe_sweep.csv"))?;
    std::fs::write(dir.join("nfe_sweep.svg"), line_chart_svg("WER against NFE budget", "max NFE", "WER", &series))?;
    println!("wrote {}", dir.join("nfe_sweep.svg").display());
    Ok(())
}
