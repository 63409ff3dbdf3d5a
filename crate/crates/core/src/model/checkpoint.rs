//! Binary checkpoint: magic, version byte, length-prefixed JSON header,
//! then raw little-endian `f32` arrays in manifest order.
//!
//! ```text
//! "ODCKPT1\0" | version u8 | header_len u64 LE | header JSON | f32 LE ...
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{manifest_shapes, Model, ModelConfig, ModelError};
use crate::autodiff::{Scalar, Tensor};
use crate::codec::Vocab;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"ODCKPT1\0";
pub const CHECKPOINT_VERSION: u8 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("bad magic: not a checkpoint file")]
    BadMagic,
    #[error("unsupported checkpoint version {found} (expected {CHECKPOINT_VERSION})")]
    Version { found: u8 },
    #[error("checkpoint truncated: needed {needed} bytes at offset {offset}, {available} available")]
    Truncated {
        offset: usize,
        needed: usize,
        available: usize,
    },
    #[error("checkpoint has {0} unexpected trailing bytes")]
    TrailingBytes(usize),
    #[error("invalid checkpoint header: {0}")]
    Header(String),
    #[error("checkpoint does not match its config: {0}")]
    Manifest(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Serialize, Deserialize)]
struct ArrayEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    vocab: Vec<String>,
    arrays: Vec<ArrayEntry>,
}

pub fn save_checkpoint<T: Scalar>(model: &Model<T>, vocab: &Vocab) -> Vec<u8> {
    let header = Header {
        config: model.config().clone(),
        vocab: vocab.symbols().iter().map(|c| c.to_string()).collect(),
        arrays: model
            .param_names()
            .into_iter()
            .zip(model.params())
            .map(|(name, p)| ArrayEntry {
                name,
                shape: p.shape().to_vec(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let payload: usize = model.num_params() * 4;
    let mut out = Vec::with_capacity(8 + 1 + 8 + json.len() + payload);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.push(CHECKPOINT_VERSION);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for p in model.params() {
        for &v in p.data() {
            out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let available = self.bytes.len() - self.offset;
        if n > available {
            return Err(CheckpointError::Truncated {
                offset: self.offset,
                needed: n,
                available,
            });
        }
        let s = &self.bytes[self.offset..self.offset + n];
        self.offset += n;
        Ok(s)
    }
}

pub fn load_checkpoint(bytes: &[u8]) -> Result<(Model<f32>, Vocab), CheckpointError> {
    let mut r = Reader { bytes, offset: 0 };
    if r.take(8).map_err(|_| CheckpointError::BadMagic)? != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = r.take(1)?[0];
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::Version { found: version });
    }
    let len = u64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
    let len = usize::try_from(len).map_err(|_| CheckpointError::Header("length overflow".into()))?;
    let header: Header = serde_json::from_slice(r.take(len)?)
        .map_err(|e| CheckpointError::Header(e.to_string()))?;

    let symbols = header
        .vocab
        .iter()
        .map(|s| {
            let mut it = s.chars();
            match (it.next(), it.next()) {
                (Some(c), None) => Ok(c),
                _ => Err(CheckpointError::Header(format!("vocab entry {s:?} is not one character"))),
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    let vocab = Vocab::from_symbols(symbols).map_err(|e| CheckpointError::Header(e.to_string()))?;
    if vocab.len() != header.config.vocab_size {
        return Err(CheckpointError::Manifest(format!(
            "vocab lists {} symbols, config says {}",
            vocab.len(),
            header.config.vocab_size
        )));
    }
    header.config.validate()?;
    let expected = manifest_shapes(&header.config);
    if expected.len() != header.arrays.len() {
        return Err(CheckpointError::Manifest(format!(
            "{} arrays listed, config implies {}",
            header.arrays.len(),
            expected.len()
        )));
    }
    let mut params = Vec::with_capacity(expected.len());
    for ((name, shape), entry) in expected.iter().zip(&header.arrays) {
        if *name != entry.name || *shape != entry.shape {
            return Err(CheckpointError::Manifest(format!(
                "array {}{:?} where {}{:?} was expected",
                entry.name, entry.shape, name, shape
            )));
        }
        let n: usize = shape.iter().product();
        let raw = r.take(n * 4)?;
        let data = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect();
        params.push(Tensor::new(shape, data).map_err(ModelError::from)?);
    }
    if r.offset != bytes.len() {
        return Err(CheckpointError::TrailingBytes(bytes.len() - r.offset));
    }
    let model = Model::from_params(header.config, params)?;
    Ok((model, vocab))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{Sample, Task};

    fn tiny() -> (Model<f32>, Vocab) {
        let vocab = Vocab::build([&Sample::new("ent", Task::Write, "abc", "abc").unwrap()]).unwrap();
        let cfg = ModelConfig {
            block_size: 8,
            n_layer: 1,
            n_head: 2,
            n_embd: 8,
            vocab_size: vocab.len(),
            dropout_rate: 0.0,
            init_std: 0.02,
            seed: 3,
        };
        (Model::init(cfg).unwrap(), vocab)
    }

    #[test]
    fn round_trip_is_bitwise() {
        let (model, vocab) = tiny();
        let bytes = save_checkpoint(&model, &vocab);
        assert_eq!(&bytes[..8], CHECKPOINT_MAGIC);
        assert_eq!(bytes[8], CHECKPOINT_VERSION);
        let (back, v2) = load_checkpoint(&bytes).unwrap();
        assert_eq!(v2, vocab);
        assert_eq!(back.config(), model.config());
        for (a, b) in back.params().iter().zip(model.params()) {
            let bits = |t: &Tensor<f32>| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(a), bits(b));
        }
    }

    #[test]
    fn corrupted_header_byte_is_bad_magic() {
        let (model, vocab) = tiny();
        let mut bytes = save_checkpoint(&model, &vocab);
        bytes[0] ^= 0xff;
        assert!(matches!(load_checkpoint(&bytes), Err(CheckpointError::BadMagic)));
        assert!(matches!(load_checkpoint(b"OTE"), Err(CheckpointError::BadMagic)));
    }

    #[test]
    fn version_and_truncation_are_distinct_errors() {
        let (model, vocab) = tiny();
        let bytes = save_checkpoint(&model, &vocab);
        let mut v = bytes.clone();
        v[8] = 9;
        assert!(matches!(load_checkpoint(&v), Err(CheckpointError::Version { found: 9 })));
        let cut = &bytes[..bytes.len() - 3];
        assert!(matches!(load_checkpoint(cut), Err(CheckpointError::Truncated { .. })));
        assert!(matches!(load_checkpoint(&bytes[..12]), Err(CheckpointError::Truncated { .. })));
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(load_checkpoint(&extra), Err(CheckpointError::TrailingBytes(1))));
    }
}
