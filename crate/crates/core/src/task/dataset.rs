//! JSON Lines datasets and the split manifest.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Example, ExampleMeta, TaskSpec};
use crate::error::{Error, Result};
use crate::types::{Condition, TokenSequence, Vocabulary};

#[derive(Serialize, Deserialize)]
struct ExampleLine {
    target: Vec<String>,
    frames: Vec<Vec<f64>>,
    duration_s: f64,
    meta: ExampleMeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitInfo {
    pub file: String,
    pub count: usize,
    pub mean_length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub task: TaskSpec,
    pub vocab: Vocabulary,
    pub split_ratio: BTreeMap<String, f64>,
    pub splits: BTreeMap<String, SplitInfo>,
}

impl DatasetManifest {
    pub const FILE: &'static str = "manifest.json";

    pub fn load(dir: &Path) -> Result<Self> {
        let f = File::open(dir.join(Self::FILE))?;
        Ok(serde_json::from_reader(BufReader::new(f))?)
    }
}

pub fn write_jsonl(path: &Path, examples: &[Example], vocab: &Vocabulary) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for ex in examples {
        let line = ExampleLine {
            target: vocab.decode(ex.target.ids()),
            frames: ex.cond.frames().to_vec(),
            duration_s: ex.cond.duration_s(),
            meta: ex.meta.clone(),
        };
        serde_json::to_writer(&mut w, &line)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_jsonl(path: &Path, vocab: &Vocabulary) -> Result<Vec<Example>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: ExampleLine = serde_json::from_str(&line)?;
        let lowered: Vec<String> = raw.target.iter().map(|t| normalize_symbol(t)).collect();
        out.push(Example {
            cond: Condition::new(raw.frames, raw.duration_s)?,
            target: TokenSequence::new(vocab.encode(&lowered)?, vocab)?,
            meta: raw.meta,
        });
    }
    Ok(out)
}

/// Task symbols are case-insensitive; reserved tokens are left as is.
fn normalize_symbol(t: &str) -> String {
    if t.starts_with('<') {
        t.to_string()
    } else {
        t.to_lowercase()
    }
}

/// Splits `examples` 80/10/10 in order into `train`, `val` and `test` files
/// under `dir` and writes the manifest.
pub fn write_splits(dir: &Path, task: &TaskSpec, examples: &[Example]) -> Result<DatasetManifest> {
    std::fs::create_dir_all(dir)?;
    let vocab = task.vocab();
    let ratios = [("train", 0.8), ("val", 0.1), ("test", 0.1)];
    let n = examples.len();
    let n_train = (n as f64 * 0.8).round() as usize;
    let n_val = (n as f64 * 0.1).round() as usize;
    let bounds = [(0, n_train), (n_train, (n_train + n_val).min(n)), ((n_train + n_val).min(n), n)];

    let mut splits = BTreeMap::new();
    for ((name, _), (lo, hi)) in ratios.iter().zip(bounds) {
        let part = &examples[lo..hi];
        let file = format!("{name}.jsonl");
        write_jsonl(&dir.join(&file), part, &vocab)?;
        let mean_length = if part.is_empty() {
            0.0
        } else {
            part.iter().map(|e| e.target.len()).sum::<usize>() as f64 / part.len() as f64
        };
        splits.insert(
            name.to_string(),
            SplitInfo {
                file,
                count: part.len(),
                mean_length,
            },
        );
    }
    let manifest = DatasetManifest {
        task: task.clone(),
        vocab,
        split_ratio: ratios.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        splits,
    };
    let mut w = BufWriter::new(File::create(dir.join(DatasetManifest::FILE))?);
    serde_json::to_writer_pretty(&mut w, &manifest)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(manifest)
}

/// Loads one split by name from a dataset directory.
pub fn read_dataset(dir: &Path, split: &str) -> Result<(DatasetManifest, Vec<Example>)> {
    let manifest = DatasetManifest::load(dir)?;
    let info = manifest
        .splits
        .get(split)
        .ok_or_else(|| Error::Config(format!("dataset has no split {split:?}")))?;
    let examples = read_jsonl(&dir.join(&info.file), &manifest.vocab)?;
    Ok((manifest, examples))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::task::TaskKind;
    use proptest::prelude::*;

    #[test]
    fn splits_are_80_10_10() {
        let dir = tempfile::tempdir().unwrap();
        let task = TaskSpec::new(TaskKind::NoisyChannel, 8, (2, 5), 0.1).with_seed(4);
        let data = task.generate(1000).unwrap();
        let m = write_splits(dir.path(), &task, &data).unwrap();
        assert_eq!(m.splits["train"].count, 800);
        assert_eq!(m.splits["val"].count, 100);
        assert_eq!(m.splits["test"].count, 100);
        let (m2, test) = read_dataset(dir.path(), "test").unwrap();
        assert_eq!(m2, m);
        assert_eq!(test, data[900..]);
    }

    #[test]
    fn uppercase_symbols_are_lowered() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.jsonl");
        std::fs::write(
            &path,
            "{\"target\":[\"W1\",\"w0\"],\"frames\":[[1.0,0.0]],\"duration_s\":0.02,\"meta\":{\"true_length\":2,\"noise_draws\":[false,false],\"observed\":[1,0]}}\n",
        )
        .unwrap();
        let vocab = Vocabulary::synthetic(2).unwrap();
        let ex = read_jsonl(&path, &vocab).unwrap();
        assert_eq!(ex[0].target.ids(), &[1, 0]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn jsonl_round_trip(seed in any::<u64>(), noise in 0.0f64..0.9, hmm in any::<bool>()) {
            let kind = if hmm { TaskKind::HmmEmission } else { TaskKind::NoisyChannel };
            let task = TaskSpec::new(kind, 5, (1, 6), noise).with_seed(seed);
            let data = task.generate(12).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("d.jsonl");
            write_jsonl(&path, &data, &task.vocab()).unwrap();
            prop_assert_eq!(read_jsonl(&path, &task.vocab()).unwrap(), data);
        }
    }
}
