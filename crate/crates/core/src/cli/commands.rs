use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context};
use rayon::prelude::*;
use serde::Serialize;

use super::config::{from_table, write_resolved, BenchConfig, DecodeConfig, GenerateConfig, RunConfig, TrainRunConfig};
use super::{BenchArgs, Cli, Command, DecodeArgs, GenerateArgs, ModelArgs, TrainArgs, UsageError};
use crate::denoiser::{read_checkpoint, write_checkpoint, AnalyticOracle, Denoiser, NeuralConfig, NeuralDenoiser};
use crate::eval::{
    latency_comparison, latency_csv, line_chart_svg, rtfx, sweep, utterance_seed, CorpusWer, Series,
};
use crate::sampler::{decode, RevealRule, SamplerConfig, SamplerKind, StepRecord};
use crate::task::{read_dataset, write_splits, DatasetManifest, Example};
use crate::train::{train, write_loss_csv, Optimizer, ReconstructionRule};

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

pub(super) fn dispatch(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(usage("--workers must be at least 1"));
        }
        // Fails only if a pool already exists, e.g. in-process reruns.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let file = RunConfig::load(cli.config.as_deref())?;
    let seed = cli.seed.or(file.seed);
    let root = cli.out_root.clone();
    match cli.command {
        Command::GenerateData(args) => generate_data(args, &file, seed, &root),
        Command::Train(args) => train_cmd(args, &file, seed, &root),
        Command::Decode(args) => decode_cmd(args, &file, seed, &root),
        Command::Bench(args) => bench_cmd(args, &file, seed, &root),
    }
}

fn prepare_out(out: Option<PathBuf>, root: &Path, name: &str) -> anyhow::Result<PathBuf> {
    let dir = out.unwrap_or_else(|| root.join(name));
    std::fs::create_dir_all(&dir).with_context(|| format!("creating output directory {}", dir.display()))?;
    Ok(dir)
}

fn parse_kind<T: std::str::FromStr<Err = crate::Error>>(s: &str) -> anyhow::Result<T> {
    s.parse::<T>().map_err(|e| usage(e.to_string()))
}

fn generate_data(args: GenerateArgs, file: &RunConfig, seed: Option<u64>, root: &Path) -> anyhow::Result<()> {
    let mut cfg: GenerateConfig = from_table(file.generate_data.as_ref(), "generate_data")?;
    if let Some(k) = &args.kind {
        cfg.kind = parse_kind(k)?;
    }
    macro_rules! set {
        ($($f:ident),*) => { $( if let Some(v) = args.$f { cfg.$f = v; } )* };
    }
    set!(vocab, n, min_len, max_len, noise, frames_per_token, transition_strength, jitter);
    if args.feature_dim.is_some() {
        cfg.feature_dim = args.feature_dim;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if cfg.n == 0 {
        return Err(usage("--n must be at least 1"));
    }
    let spec = cfg.task_spec();
    spec.validate().map_err(|e| usage(e.to_string()))?;

    let dir = prepare_out(args.out, root, "data")?;
    let examples = spec.generate(cfg.n)?;
    let manifest = write_splits(&dir, &spec, &examples)?;
    write_resolved(&dir, &cfg)?;
    print_dataset_table(&manifest, &examples);
    println!("wrote {}", dir.display());
    Ok(())
}

fn print_dataset_table(manifest: &DatasetManifest, examples: &[Example]) {
    let frames_per_token = manifest.task.frames_per_token as f64;
    println!(
        "task {} | content vocab {} | noise {}",
        manifest.task.kind, manifest.task.content_vocab_size, manifest.task.channel_noise
    );
    println!("{:<8}{:>10}{:>14}{:>14}", "split", "count", "mean length", "duration (s)");
    for (name, info) in &manifest.splits {
        let duration = info.count as f64 * info.mean_length * frames_per_token * crate::task::SECONDS_PER_FRAME;
        println!("{:<8}{:>10}{:>14.2}{:>14.2}", name, info.count, info.mean_length, duration);
    }
    let total: f64 = examples.iter().map(|e| e.cond.duration_s()).sum();
    println!("{:<8}{:>10}{:>14}{:>14.2}", "total", examples.len(), "", total);
}

fn data_dir(opt: &Option<PathBuf>, root: &Path) -> PathBuf {
    opt.clone().unwrap_or_else(|| root.join("data"))
}

fn load_split(dir: &Path, split: &str) -> anyhow::Result<(DatasetManifest, Vec<Example>)> {
    let (manifest, examples) =
        read_dataset(dir, split).with_context(|| format!("reading split {split:?} from {}", dir.display()))?;
    if examples.is_empty() {
        return Err(usage(format!("split {split:?} in {} is empty", dir.display())));
    }
    Ok((manifest, examples))
}

fn train_cmd(args: TrainArgs, file: &RunConfig, seed: Option<u64>, root: &Path) -> anyhow::Result<()> {
    let mut cfg: TrainRunConfig = from_table(file.train.as_ref(), "train")?;
    if args.data.is_some() {
        cfg.data = args.data.clone();
    }
    if let Some(s) = args.split {
        cfg.split = s;
    }
    if let Some(v) = args.d_model {
        cfg.d_model = v;
    }
    if let Some(v) = args.hidden_layers {
        cfg.hidden_layers = v;
    }
    let t = &mut cfg.train;
    if args.canvas_len.is_some() {
        t.canvas_len = args.canvas_len;
    }
    if let Some(v) = args.steps {
        t.steps = v;
    }
    if let Some(v) = args.batch_size {
        t.batch_size = v;
    }
    if let Some(o) = &args.optimizer {
        t.optimizer = match o.as_str() {
            "adam" => Optimizer::Adam,
            "sgd" => Optimizer::Sgd,
            other => return Err(usage(format!("unknown optimizer {other:?}"))),
        };
    }
    if let Some(v) = args.lr {
        t.learning_rate = v;
    }
    if let Some(v) = args.momentum {
        t.momentum = v;
    }
    if let Some(v) = args.grad_clip {
        t.grad_clip = (v > 0.0).then_some(v);
    }
    if let Some(v) = args.t_floor {
        t.t_floor = v;
    }
    if args.isct {
        t.isct_enabled = true;
    }
    if let Some(v) = args.isct_steps {
        t.isct_steps = v;
    }
    if let Some(r) = &args.reconstruction {
        t.reconstruction = match r.as_str() {
            "sample" => ReconstructionRule::Sample,
            "argmax" => ReconstructionRule::Argmax,
            other => return Err(usage(format!("unknown reconstruction rule {other:?}"))),
        };
    }
    if let Some(s) = seed {
        t.seed = s;
    }

    let data = data_dir(&cfg.data, root);
    let (manifest, examples) = load_split(&data, &cfg.split)?;
    let canvas = cfg.train.canvas_len.unwrap_or(manifest.task.length_range.1 + 1);
    cfg.train.canvas_len = Some(canvas);
    cfg.data = Some(data);
    cfg.train.validate()?;

    let mut arch = NeuralConfig::new(manifest.task.feature_dim, manifest.task.frames_per_token);
    arch.d_model = cfg.d_model;
    arch.hidden_layers = cfg.hidden_layers;
    arch.max_len = canvas;
    arch.seed = cfg.train.seed;
    let mut model = NeuralDenoiser::new(arch, manifest.vocab.clone())?;

    let dir = prepare_out(args.out, root, "train")?;
    write_resolved(&dir, &cfg)?;
    println!(
        "training {} parameters on {} examples for {} steps{}",
        model.num_parameters(),
        examples.len(),
        cfg.train.steps,
        if cfg.train.isct_enabled { " with ISCT" } else { "" }
    );
    let outcome = train(&examples, &mut model, &cfg.train)?;
    write_loss_csv(&dir.join("loss.csv"), &outcome.curve)?;
    write_checkpoint(&dir.join("model.ckpt"), &model, Some(serde_json::to_value(&cfg)?))?;
    if let Some(last) = outcome.curve.last() {
        println!("final loss {:.6}", last.loss);
    }
    println!("wrote {}", dir.display());
    Ok(())
}

fn apply_model_args(m: &ModelArgs, data: &mut Option<PathBuf>, split: &mut String, ck: &mut Option<PathBuf>, oracle: &mut bool, s: &mut SamplerConfig) -> anyhow::Result<()> {
    if m.data.is_some() {
        *data = m.data.clone();
    }
    if let Some(v) = &m.split {
        *split = v.clone();
    }
    if m.checkpoint.is_some() {
        *ck = m.checkpoint.clone();
        *oracle = false;
    }
    if m.oracle {
        *oracle = true;
        *ck = None;
    }
    if let Some(v) = m.gamma {
        s.gamma = v;
    }
    if let Some(v) = m.lambda {
        s.lambda = v;
    }
    if let Some(v) = m.k {
        s.k = v;
    }
    if let Some(v) = m.max_len {
        s.max_len = v;
    }
    if let Some(r) = &m.reveal {
        s.reveal = match r.as_str() {
            "argmax" => RevealRule::Argmax,
            "sample" => RevealRule::Sample,
            other => return Err(usage(format!("unknown reveal rule {other:?}"))),
        };
    }
    Ok(())
}

/// Loads the oracle or checkpoint and the canvas length it implies.
fn load_denoiser(manifest: &DatasetManifest, checkpoint: &Option<PathBuf>, oracle: bool) -> anyhow::Result<(Box<dyn Denoiser>, usize)> {
    let task_canvas = manifest.task.length_range.1 + 1;
    if oracle {
        return Ok((Box::new(AnalyticOracle::new(manifest.task.clone())?), task_canvas));
    }
    let Some(path) = checkpoint else {
        return Err(usage("either --checkpoint or --oracle is required"));
    };
    let (model, header) = read_checkpoint(path).with_context(|| format!("loading checkpoint {}", path.display()))?;
    if header.vocab_hash != manifest.vocab.fingerprint() {
        bail!("checkpoint vocabulary does not match the dataset");
    }
    let canvas = header.architecture.max_len;
    Ok((Box::new(model), canvas))
}

#[derive(Serialize)]
struct HypothesisLine<'a> {
    index: usize,
    reference: Vec<String>,
    hypothesis: Vec<String>,
    errors: usize,
    nfe: usize,
    steps: &'a [StepRecord],
}

#[derive(Serialize)]
struct DecodeSummary {
    sampler: String,
    max_nfe: usize,
    n_utterances: usize,
    wer: f64,
    mean_nfe: f64,
}

fn decode_cmd(args: DecodeArgs, file: &RunConfig, seed: Option<u64>, root: &Path) -> anyhow::Result<()> {
    let mut cfg: DecodeConfig = from_table(file.decode.as_ref(), "decode")?;
    apply_model_args(&args.model, &mut cfg.data, &mut cfg.split, &mut cfg.checkpoint, &mut cfg.oracle, &mut cfg.sampler)?;
    if let Some(s) = &args.sampler {
        cfg.sampler.kind = parse_kind(s)?;
    }
    if let Some(v) = args.max_nfe {
        cfg.sampler.max_nfe = v;
    }
    if let Some(s) = seed {
        cfg.sampler.seed = s;
    }

    let data = data_dir(&cfg.data, root);
    let (manifest, examples) = load_split(&data, &cfg.split)?;
    let (denoiser, canvas) = load_denoiser(&manifest, &cfg.checkpoint, cfg.oracle)?;
    if cfg.sampler.max_len == 0 {
        cfg.sampler.max_len = canvas;
    }
    cfg.data = Some(data);
    cfg.sampler.validate()?;

    let dir = prepare_out(args.out, root, "decode")?;
    write_resolved(&dir, &cfg)?;
    let vocab = &manifest.vocab;
    let results: Vec<_> = examples
        .par_iter()
        .enumerate()
        .map(|(i, ex)| {
            let mut sc = cfg.sampler.clone();
            sc.seed = utterance_seed(cfg.sampler.seed, i);
            let started = Instant::now();
            let out = decode(denoiser.as_ref(), &ex.cond, &sc);
            let ms = started.elapsed().as_secs_f64() * 1e3;
            (out, ms, rayon::current_thread_index().unwrap_or(0))
        })
        .collect();

    let mut corpus = CorpusWer::default();
    let (mut nfe_total, mut ms_total) = (0usize, 0.0);
    let mut hyp = BufWriter::new(File::create(dir.join("hypotheses.jsonl"))?);
    let mut timing = BufWriter::new(File::create(dir.join("timings.csv"))?);
    writeln!(timing, "utterance,worker,nfe,wall_ms")?;
    for (i, ((out, ms, worker), ex)) in results.into_iter().zip(&examples).enumerate() {
        let d = out.with_context(|| format!("decoding utterance {i}"))?;
        let reference = vocab.decode(ex.target.ids());
        let hypothesis = vocab.decode(&d.tokens);
        let before = corpus.errors;
        corpus.add(&reference, &hypothesis)?;
        nfe_total += d.trace.nfe;
        ms_total += ms;
        let line = HypothesisLine {
            index: i,
            errors: corpus.errors - before,
            reference,
            hypothesis,
            nfe: d.trace.nfe,
            steps: &d.trace.steps,
        };
        serde_json::to_writer(&mut hyp, &line)?;
        hyp.write_all(b"\n")?;
        writeln!(timing, "{i},{worker},{},{ms}", d.trace.nfe)?;
    }
    hyp.flush()?;
    timing.flush()?;

    let summary = DecodeSummary {
        sampler: cfg.sampler.kind.name().into(),
        max_nfe: cfg.sampler.max_nfe,
        n_utterances: examples.len(),
        wer: corpus.wer(),
        mean_nfe: nfe_total as f64 / examples.len() as f64,
    };
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    std::fs::write(dir.join("summary.json"), text)?;
    let duration: f64 = examples.iter().map(|e| e.cond.duration_s()).sum();
    println!(
        "{} max_nfe={} utterances={} wer={:.4} mean_nfe={:.2} rtfx={:.1}",
        summary.sampler,
        summary.max_nfe,
        summary.n_utterances,
        summary.wer,
        summary.mean_nfe,
        rtfx(duration, (ms_total / 1e3).max(1e-9))?
    );
    println!("wrote {}", dir.display());
    Ok(())
}

fn bench_cmd(args: BenchArgs, file: &RunConfig, seed: Option<u64>, root: &Path) -> anyhow::Result<()> {
    let mut cfg: BenchConfig = from_table(file.bench.as_ref(), "bench")?;
    apply_model_args(&args.model, &mut cfg.data, &mut cfg.split, &mut cfg.checkpoint, &mut cfg.oracle, &mut cfg.sampler)?;
    if let Some(v) = args.samplers {
        cfg.samplers = v;
    }
    if let Some(v) = args.sweep_nfe {
        cfg.sweep_nfe = v;
    }
    cfg.compare_ar |= args.compare_ar;
    cfg.svg |= args.svg;
    if let Some(s) = seed {
        cfg.sampler.seed = s;
    }
    let kinds: Vec<SamplerKind> = cfg.samplers.iter().map(|s| parse_kind(s)).collect::<anyhow::Result<_>>()?;
    if kinds.is_empty() || cfg.sweep_nfe.is_empty() {
        return Err(usage("at least one sampler and one NFE budget are required"));
    }

    let data = data_dir(&cfg.data, root);
    let (manifest, examples) = load_split(&data, &cfg.split)?;
    let (denoiser, canvas) = load_denoiser(&manifest, &cfg.checkpoint, cfg.oracle)?;
    if cfg.sampler.max_len == 0 {
        cfg.sampler.max_len = canvas;
    }
    cfg.data = Some(data);

    let mut configs = Vec::new();
    for &kind in &kinds {
        for &max_nfe in &cfg.sweep_nfe {
            let c = SamplerConfig {
                kind,
                max_nfe,
                ..cfg.sampler.clone()
            };
            c.validate()?;
            configs.push(c);
        }
    }

    let dir = prepare_out(args.out, root, "bench")?;
    write_resolved(&dir, &cfg)?;
    let task = manifest.task.kind.to_string();
    let report = sweep(&task, &examples, denoiser.as_ref(), &configs)?;
    report.write_csv(&dir.join("report.csv"))?;
    report.write_timings(&dir.join("timings.csv"))?;
    print!("{}", report.to_csv());
    for row in &report.rows {
        if row.failures > 0 {
            let first = row.utterances.iter().find_map(|u| u.failure.as_deref()).unwrap_or("");
            eprintln!("warning: {} at nfe {}: {} failed decodes ({first})", row.sampler, row.nfe_budget, row.failures);
        }
    }

    if cfg.svg {
        let series: Vec<Series> = kinds
            .iter()
            .map(|k| Series {
                label: k.name().into(),
                points: report
                    .rows
                    .iter()
                    .filter(|r| r.sampler == k.name())
                    .map(|r| (r.nfe_budget as f64, r.wer))
                    .collect(),
            })
            .collect();
        std::fs::write(dir.join("wer_vs_nfe.svg"), line_chart_svg("WER against NFE budget", "max NFE", "WER", &series))?;
    }

    if cfg.compare_ar {
        let nfe = *cfg.sweep_nfe.iter().max().expect("nonempty");
        let latency_configs: Vec<SamplerConfig> = kinds
            .iter()
            .map(|&kind| SamplerConfig {
                kind,
                max_nfe: nfe,
                ..cfg.sampler.clone()
            })
            .collect();
        let rows = latency_comparison(&examples, denoiser.as_ref(), &latency_configs)?;
        std::fs::write(dir.join("latency.csv"), latency_csv(&rows))?;
        if cfg.svg {
            let mut methods: Vec<String> = vec!["ar".into()];
            methods.extend(kinds.iter().map(|k| k.name().to_string()));
            let series: Vec<Series> = methods
                .iter()
                .map(|m| Series {
                    label: m.clone(),
                    points: rows.iter().filter(|r| &r.method == m).map(|r| (r.length as f64, r.rtfx)).collect(),
                })
                .collect();
            std::fs::write(dir.join("rtfx_vs_length.svg"), line_chart_svg("RTFx against output length", "length", "RTFx", &series))?;
        }
        println!("wrote latency comparison over {} lengths", rows.iter().filter(|r| r.method == "ar").count());
    }
    println!("wrote {}", dir.display());
    Ok(())
}
