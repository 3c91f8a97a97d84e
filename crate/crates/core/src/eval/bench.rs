use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{edit_distance, CorpusWer};
use crate::denoiser::Denoiser;
use crate::error::{Error, Result};
use crate::sampler::{decode, SamplerConfig};
use crate::task::Example;
use crate::types::{Condition, MaskedSequence, TokenId};

pub const REPORT_CSV_HEADER: &str = "task,sampler,nfe_budget,gamma,lambda,k,wer,mean_nfe,rtfx,n_utterances";
pub const TIMING_CSV_HEADER: &str = "config,sampler,nfe_budget,utterance,worker,nfe,wall_ms";
pub const LATENCY_CSV_HEADER: &str = "method,length,n_utterances,mean_calls,decode_ms,duration_s,rtfx";

/// Sampler seed for utterance `index` under a config seeded with `seed`.
pub fn utterance_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_add(index as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceResult {
    pub index: usize,
    pub hypothesis: Vec<TokenId>,
    pub errors: usize,
    pub reference_len: usize,
    pub nfe: usize,
    pub wall_ms: f64,
    pub duration_s: f64,
    pub worker: usize,
    /// Decode failure message; the hypothesis is then empty.
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub task: String,
    pub sampler: String,
    pub nfe_budget: usize,
    pub gamma: f64,
    pub lambda: f64,
    pub k: usize,
    pub wer: f64,
    pub mean_nfe: f64,
    pub rtfx: f64,
    pub n_utterances: usize,
    pub failures: usize,
    pub utterances: Vec<UtteranceResult>,
}

impl BenchRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.task,
            self.sampler,
            self.nfe_budget,
            self.gamma,
            self.lambda,
            self.k,
            self.wer,
            self.mean_nfe,
            self.rtfx,
            self.n_utterances
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(REPORT_CSV_HEADER);
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.csv_line());
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn write_timings(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "{TIMING_CSV_HEADER}")?;
        for (c, row) in self.rows.iter().enumerate() {
            for u in &row.utterances {
                writeln!(f, "{c},{},{},{},{},{},{}", row.sampler, row.nfe_budget, u.index, u.worker, u.nfe, u.wall_ms)?;
            }
        }
        f.flush()?;
        Ok(())
    }
}

/// Milliseconds to seconds, floored so sub-resolution timings stay positive.
fn positive_seconds(ms: f64) -> f64 {
    (ms / 1e3).max(1e-9)
}

fn decode_one<D: Denoiser + ?Sized>(denoiser: &D, ex: &Example, index: usize, config: &SamplerConfig) -> UtteranceResult {
    let vocab = denoiser.vocab();
    let mut cfg = config.clone();
    cfg.seed = utterance_seed(config.seed, index);
    let started = Instant::now();
    let outcome = decode(denoiser, &ex.cond, &cfg);
    let wall_ms = started.elapsed().as_secs_f64() * 1e3;
    let reference = vocab.decode(ex.target.ids());
    let (hypothesis, nfe, failure) = match outcome {
        Ok(d) => (d.tokens, d.trace.nfe, None),
        Err(e) => (Vec::new(), 0, Some(e.to_string())),
    };
    UtteranceResult {
        index,
        errors: edit_distance(&reference, &vocab.decode(&hypothesis)),
        hypothesis,
        reference_len: reference.len(),
        nfe,
        wall_ms,
        duration_s: ex.cond.duration_s(),
        worker: rayon::current_thread_index().unwrap_or(0),
        failure,
    }
}

/// Decodes every utterance under every config.
///
/// A failed decode scores as an empty hypothesis and is counted in
/// [`BenchRow::failures`]; the sweep continues.
pub fn sweep<D: Denoiser + ?Sized>(task: &str, dataset: &[Example], denoiser: &D, configs: &[SamplerConfig]) -> Result<BenchReport> {
    if dataset.is_empty() {
        return Err(Error::Config("benchmark dataset is empty".into()));
    }
    let mut rows = Vec::with_capacity(configs.len());
    for config in configs {
        config.validate()?;
        let utterances: Vec<UtteranceResult> = dataset
            .par_iter()
            .enumerate()
            .map(|(i, ex)| decode_one(denoiser, ex, i, config))
            .collect();
        let mut corpus = CorpusWer::default();
        for u in &utterances {
            corpus.errors += u.errors;
            corpus.reference_tokens += u.reference_len;
        }
        let duration: f64 = utterances.iter().map(|u| u.duration_s).sum();
        let time_ms: f64 = utterances.iter().map(|u| u.wall_ms).sum();
        rows.push(BenchRow {
            task: task.to_string(),
            sampler: config.kind.name().to_string(),
            nfe_budget: config.max_nfe,
            gamma: config.gamma,
            lambda: config.lambda,
            k: config.k,
            wer: corpus.wer(),
            mean_nfe: utterances.iter().map(|u| u.nfe as f64).sum::<f64>() / utterances.len() as f64,
            rtfx: duration / positive_seconds(time_ms),
            n_utterances: utterances.len(),
            failures: utterances.iter().filter(|u| u.failure.is_some()).count(),
            utterances,
        });
    }
    Ok(BenchReport { rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArDecoded {
    pub tokens: Vec<TokenId>,
    pub wall_ms: f64,
    /// Denoiser calls, equal to tokens emitted including a terminating EOS.
    pub steps: usize,
}

/// Left-to-right decoding: position `l` is revealed at its row argmax after
/// one denoiser call on the canvas with positions `>= l` masked.
pub fn ar_baseline_decode<D: Denoiser + ?Sized>(denoiser: &D, cond: &Condition, max_len: usize) -> Result<ArDecoded> {
    let started = Instant::now();
    let vocab = denoiser.vocab();
    let eos = vocab.eos_id();
    let mut z = MaskedSequence::fully_masked(max_len, vocab);
    let mut tokens = Vec::new();
    let mut steps = 0;
    for pos in 0..max_len {
        z = z.with_time((max_len - pos) as f64 / max_len as f64)?;
        let grid = denoiser.predict(&z, cond)?;
        steps += 1;
        let tok = grid.row_argmax(pos);
        if tok == eos {
            break;
        }
        z.reveal(pos, tok);
        tokens.push(tok);
    }
    Ok(ArDecoded {
        tokens,
        wall_ms: started.elapsed().as_secs_f64() * 1e3,
        steps,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyRow {
    /// `ar` or a sampler name.
    pub method: String,
    pub length: usize,
    pub n_utterances: usize,
    pub mean_calls: f64,
    pub decode_ms: f64,
    pub duration_s: f64,
    pub rtfx: f64,
}

impl LatencyRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.method, self.length, self.n_utterances, self.mean_calls, self.decode_ms, self.duration_s, self.rtfx
        )
    }
}

pub fn latency_csv(rows: &[LatencyRow]) -> String {
    let mut out = String::from(LATENCY_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_line());
        out.push('\n');
    }
    out
}

/// RTFx against output length for the AR baseline and each sampler.
///
/// Utterances are grouped by reference length and each is decoded on a
/// canvas of exactly that length, so the AR baseline makes one call per
/// reference token. Decoding is sequential so timings are not distorted by
/// contention.
pub fn latency_comparison<D: Denoiser + ?Sized>(
    dataset: &[Example],
    denoiser: &D,
    configs: &[SamplerConfig],
) -> Result<Vec<LatencyRow>> {
    if dataset.is_empty() {
        return Err(Error::Config("latency dataset is empty".into()));
    }
    let mut lengths: Vec<usize> = dataset.iter().map(|e| e.target.len()).collect();
    lengths.sort_unstable();
    lengths.dedup();
    let mut rows = Vec::new();
    for &len in &lengths {
        let group: Vec<(usize, &Example)> = dataset.iter().enumerate().filter(|(_, e)| e.target.len() == len).collect();
        let duration: f64 = group.iter().map(|(_, e)| e.cond.duration_s()).sum();
        let n = group.len();

        let (mut calls, mut ms) = (0usize, 0.0);
        for (_, ex) in &group {
            let ar = ar_baseline_decode(denoiser, &ex.cond, len)?;
            calls += ar.steps;
            ms += ar.wall_ms;
        }
        rows.push(LatencyRow {
            method: "ar".into(),
            length: len,
            n_utterances: n,
            mean_calls: calls as f64 / n as f64,
            decode_ms: ms,
            duration_s: duration,
            rtfx: duration / positive_seconds(ms),
        });

        for config in configs {
            let (mut calls, mut ms) = (0usize, 0.0);
            for (i, ex) in &group {
                let mut cfg = config.clone();
                cfg.max_len = len;
                cfg.seed = utterance_seed(config.seed, *i);
                let started = Instant::now();
                let d = decode(denoiser, &ex.cond, &cfg)?;
                ms += started.elapsed().as_secs_f64() * 1e3;
                calls += d.trace.nfe;
            }
            rows.push(LatencyRow {
                method: config.kind.name().into(),
                length: len,
                n_utterances: n,
                mean_calls: calls as f64 / n as f64,
                decode_ms: ms,
                duration_s: duration,
                rtfx: duration / positive_seconds(ms),
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoiser::AnalyticOracle;
    use crate::sampler::SamplerKind;
    use crate::task::{TaskKind, TaskSpec};

    #[test]
    fn ar_calls_equal_output_length() {
        let spec = TaskSpec::new(TaskKind::NoisyChannel, 6, (12, 12), 0.0).with_seed(3);
        let oracle = AnalyticOracle::new(spec.clone()).unwrap();
        let ex = &spec.generate(1).unwrap()[0];
        let ar = ar_baseline_decode(&oracle, &ex.cond, 12).unwrap();
        assert_eq!(ar.tokens, ex.target.ids());
        assert_eq!(ar.steps, 12);
        let longer = ar_baseline_decode(&oracle, &ex.cond, 20).unwrap();
        assert_eq!(longer.tokens, ex.target.ids());
        assert_eq!(longer.steps, 13);
    }

    #[test]
    fn mdm_budget_below_ar_calls() {
        let spec = TaskSpec::new(TaskKind::NoisyChannel, 6, (100, 100), 0.1).with_seed(5);
        let oracle = AnalyticOracle::new(spec.clone()).unwrap();
        let ex = &spec.generate(1).unwrap()[0];
        let cfg = SamplerConfig {
            max_len: 100,
            ..SamplerConfig::new(SamplerKind::ConfTopK)
        };
        let d = decode(&oracle, &ex.cond, &cfg).unwrap();
        let ar = ar_baseline_decode(&oracle, &ex.cond, 100).unwrap();
        assert!(d.trace.nfe <= 32);
        assert_eq!(ar.steps, 100);
    }

    #[test]
    fn sweep_is_cartesian_and_exact_on_noise_free_task() {
        let spec = TaskSpec::new(TaskKind::HmmEmission, 5, (3, 10), 0.0).with_seed(2);
        let data = spec.generate(12).unwrap();
        let oracle = AnalyticOracle::new(spec).unwrap();
        let mut configs = Vec::new();
        for kind in SamplerKind::ALL {
            for nfe in [2, 4, 8, 16, 32] {
                configs.push(SamplerConfig {
                    kind,
                    max_nfe: nfe,
                    k: 2,
                    max_len: 12,
                    ..SamplerConfig::default()
                });
            }
        }
        let report = sweep("hmm", &data, &oracle, &configs).unwrap();
        assert_eq!(report.rows.len(), 25);
        for row in &report.rows {
            assert_eq!(row.wer, 0.0);
            assert!(row.mean_nfe <= row.nfe_budget as f64);
            assert!(row.rtfx > 0.0);
            assert_eq!(row.failures, 0);
        }
        assert!(report.to_csv().starts_with(&format!("{REPORT_CSV_HEADER}\n")));
    }

    #[test]
    fn gamma_sweep_reduces_nfe() {
        let spec = TaskSpec::new(TaskKind::NoisyChannel, 5, (10, 16), 0.004).with_seed(4);
        let data = spec.generate(20).unwrap();
        let oracle = AnalyticOracle::new(spec).unwrap();
        let configs: Vec<SamplerConfig> = [0.0, 0.05, 1e9]
            .iter()
            .map(|&gamma| SamplerConfig {
                kind: SamplerKind::EbConf,
                gamma,
                max_len: 16,
                ..SamplerConfig::default()
            })
            .collect();
        let report = sweep("channel", &data, &oracle, &configs).unwrap();
        let nfe: Vec<f64> = report.rows.iter().map(|r| r.mean_nfe).collect();
        assert!(nfe[0] > nfe[1] && nfe[1] > nfe[2], "{nfe:?}");
    }

    struct Failing(crate::types::Vocabulary);

    impl Denoiser for Failing {
        fn vocab(&self) -> &crate::types::Vocabulary {
            &self.0
        }

        fn predict(&self, _: &MaskedSequence, _: &Condition) -> Result<crate::types::CategoricalGrid> {
            Err(Error::Dimension("unavailable".into()))
        }
    }

    #[test]
    fn failed_decodes_are_recorded_not_fatal() {
        let spec = TaskSpec::new(TaskKind::NoisyChannel, 4, (3, 5), 0.1).with_seed(1);
        let data = spec.generate(4).unwrap();
        let failing = Failing(spec.vocab());
        let report = sweep("x", &data, &failing, &[SamplerConfig { max_len: 6, ..SamplerConfig::default() }]).unwrap();
        assert_eq!(report.rows[0].failures, 4);
        assert_eq!(report.rows[0].wer, 1.0);
        assert!(report.rows[0].utterances[0].failure.as_deref().unwrap().contains("unavailable"));
        assert!(sweep("x", &[], &failing, &[SamplerConfig::default()]).is_err());
    }

    #[test]
    fn sweep_csv_reproducible_except_timing() {
        let spec = TaskSpec::new(TaskKind::NoisyChannel, 5, (4, 8), 0.2).with_seed(6);
        let data = spec.generate(10).unwrap();
        let oracle = AnalyticOracle::new(spec).unwrap();
        let configs = [SamplerConfig {
            kind: SamplerKind::Random,
            max_nfe: 4,
            max_len: 8,
            ..SamplerConfig::default()
        }];
        let strip = |r: &BenchReport| {
            r.rows
                .iter()
                .map(|row| (row.wer, row.mean_nfe, row.utterances.iter().map(|u| u.hypothesis.clone()).collect::<Vec<_>>()))
                .collect::<Vec<_>>()
        };
        let a = sweep("c", &data, &oracle, &configs).unwrap();
        let b = sweep("c", &data, &oracle, &configs).unwrap();
        assert_eq!(strip(&a), strip(&b));
    }
}
