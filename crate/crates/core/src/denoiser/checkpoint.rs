//! Checkpoint layout:
//!
//! ```text
//! MDMCKPT1                      8-byte magic
//! u64 little-endian             byte length of the JSON header
//! JSON header                   CheckpointHeader
//! f64 little-endian values      every tensor, in declaration order, row-major
//! ```

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::neural::{NeuralConfig, NeuralDenoiser, Tensor};
use crate::error::{Error, Result};
use crate::types::Vocabulary;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"MDMCKPT1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub shape: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub architecture: NeuralConfig,
    pub vocab: Vocabulary,
    pub vocab_hash: String,
    pub seed: u64,
    /// Training configuration the parameters came from, if any.
    pub training: Option<serde_json::Value>,
    pub tensors: Vec<TensorInfo>,
}

pub fn write_checkpoint(path: &Path, model: &NeuralDenoiser, training: Option<serde_json::Value>) -> Result<()> {
    let mut buf = Vec::new();
    encode(&mut buf, model, training)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<(NeuralDenoiser, CheckpointHeader)> {
    let bytes = std::fs::read(path)?;
    decode(&mut bytes.as_slice())
}

pub(crate) fn encode<W: Write>(w: &mut W, model: &NeuralDenoiser, training: Option<serde_json::Value>) -> Result<()> {
    use crate::denoiser::Denoiser;
    let header = CheckpointHeader {
        architecture: model.config().clone(),
        vocab: model.vocab().clone(),
        vocab_hash: model.vocab().fingerprint(),
        seed: model.config().seed,
        training,
        tensors: model
            .tensors()
            .iter()
            .map(|t| TensorInfo {
                name: t.name.clone(),
                shape: [t.rows, t.cols],
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header)?;
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    for t in model.tensors() {
        for v in &t.data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub(crate) fn decode<R: Read>(r: &mut R) -> Result<(NeuralDenoiser, CheckpointHeader)> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let len = u64::from_le_bytes(len) as usize;
    let mut json = vec![0u8; len];
    r.read_exact(&mut json)?;
    let header: CheckpointHeader = serde_json::from_slice(&json)?;
    if header.vocab.fingerprint() != header.vocab_hash {
        return Err(Error::Checkpoint("vocabulary hash mismatch".into()));
    }
    let mut tensors = Vec::with_capacity(header.tensors.len());
    for info in &header.tensors {
        let [rows, cols] = info.shape;
        let mut data = Vec::with_capacity(rows * cols);
        let mut word = [0u8; 8];
        for _ in 0..rows * cols {
            r.read_exact(&mut word)?;
            data.push(f64::from_le_bytes(word));
        }
        tensors.push(Tensor {
            name: info.name.clone(),
            rows,
            cols,
            data,
        });
    }
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", rest.len())));
    }
    let model = NeuralDenoiser::from_parts(header.architecture.clone(), header.vocab.clone(), tensors)?;
    Ok((model, header))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_parameters() {
        let vocab = Vocabulary::synthetic(4).unwrap();
        let mut model = NeuralDenoiser::new(NeuralConfig::new(4, 2), vocab).unwrap();
        model.randomize(0.3, 77);
        let mut buf = Vec::new();
        encode(&mut buf, &model, Some(serde_json::json!({"steps": 3}))).unwrap();
        assert_eq!(&buf[..8], CHECKPOINT_MAGIC);
        let (back, header) = decode(&mut buf.as_slice()).unwrap();
        assert_eq!(back, model);
        assert_eq!(header.training.unwrap()["steps"], 3);
    }

    #[test]
    fn corrupt_files_rejected() {
        let vocab = Vocabulary::synthetic(2).unwrap();
        let model = NeuralDenoiser::new(NeuralConfig::new(2, 1), vocab).unwrap();
        let mut buf = Vec::new();
        encode(&mut buf, &model, None).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(decode(&mut bad.as_slice()).is_err());
        let truncated = &buf[..buf.len() - 4];
        assert!(decode(&mut &truncated[..]).is_err());
        let mut long = buf.clone();
        long.push(0);
        assert!(decode(&mut long.as_slice()).is_err());
    }
}
