//! Versioned binary model files.
//!
//! Layout: the magic bytes `MTPARSE\0`, a little-endian `u32` format
//! version, a `u64` header length, a UTF-8 JSON header (configuration,
//! vocabulary, training log and tensor manifest) and finally every tensor as
//! little-endian `f64` values in manifest order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use crate::data::Vocab;
use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::model::{ModelParams, Parser};
use crate::params::ParamSet;
use crate::trainer::{EpochLog, TrainConfig};

pub const MAGIC: &[u8; 8] = b"MTPARSE\0";
pub const FORMAT_VERSION: u32 = 1;

/// Headers larger than this are rejected as corrupt.
const MAX_HEADER: u64 = 1 << 32;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub parser: Parser,
    pub train_config: Option<TrainConfig>,
    pub log: Vec<EpochLog>,
    /// Epoch whose parameters were kept.
    pub best_epoch: Option<usize>,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    encoder_config: EncoderConfig,
    train_config: Option<TrainConfig>,
    vocab: Vocab,
    log: Vec<EpochLog>,
    best_epoch: Option<usize>,
    tensors: Vec<TensorEntry>,
}

fn corrupt(message: impl Into<String>) -> Error {
    Error::Checkpoint(message.into())
}

impl Checkpoint {
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let header = Header {
            encoder_config: self.parser.config.clone(),
            train_config: self.train_config.clone(),
            vocab: self.parser.vocab.clone(),
            log: self.log.clone(),
            best_epoch: self.best_epoch,
            tensors: self
                .parser
                .params
                .census()
                .into_iter()
                .map(|(name, shape)| TensorEntry { name, shape })
                .collect(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| corrupt(e.to_string()))?;
        w.write_all(MAGIC)?;
        w.write_u32::<LittleEndian>(FORMAT_VERSION)?;
        w.write_u64::<LittleEndian>(json.len() as u64)?;
        w.write_all(&json)?;
        let mut result = Ok(());
        self.parser.params.visit(&mut |_, t| {
            for &v in t.iter() {
                if result.is_ok() {
                    result = w.write_f64::<LittleEndian>(v);
                }
            }
        });
        result?;
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)
            .map_err(|_| corrupt("file is too short to be a checkpoint"))?;
        if &magic != MAGIC {
            return Err(corrupt("not a checkpoint file (bad magic bytes)"));
        }
        let version = r.read_u32::<LittleEndian>().map_err(|_| corrupt("truncated header"))?;
        if version != FORMAT_VERSION {
            return Err(corrupt(format!(
                "unsupported format version {version} (this build reads version {FORMAT_VERSION})"
            )));
        }
        let len = r.read_u64::<LittleEndian>().map_err(|_| corrupt("truncated header"))?;
        if len > MAX_HEADER {
            return Err(corrupt("header length is implausibly large"));
        }
        let mut json = Vec::new();
        (&mut r).take(len).read_to_end(&mut json)?;
        if json.len() as u64 != len {
            return Err(corrupt("truncated header"));
        }
        let header: Header =
            serde_json::from_slice(&json).map_err(|e| corrupt(format!("malformed header: {e}")))?;

        let mut params = ModelParams::zeros(&header.encoder_config, &header.vocab);
        let census = params.census();
        let matches = census.len() == header.tensors.len()
            && census
                .iter()
                .zip(&header.tensors)
                .all(|((n, s), e)| *n == e.name && *s == e.shape);
        if !matches {
            return Err(corrupt(
                "tensor manifest does not match the configuration and vocabulary",
            ));
        }
        let mut result = Ok(());
        params.visit_mut(&mut |_, mut t| {
            for v in t.iter_mut() {
                if result.is_ok() {
                    match r.read_f64::<LittleEndian>() {
                        Ok(x) => *v = x,
                        Err(e) => result = Err(e),
                    }
                }
            }
        });
        result.map_err(|_| corrupt("truncated tensor data"))?;
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(corrupt("trailing bytes after tensor data"));
        }
        Ok(Checkpoint {
            parser: Parser {
                config: header.encoder_config,
                vocab: header.vocab,
                params,
            },
            train_config: header.train_config,
            log: header.log,
            best_epoch: header.best_epoch,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::read_conllx;
    use crate::trainer::{Trainer, TrainConfig};

    fn checkpoint() -> Checkpoint {
        let s = read_conllx(
            "1\tHello\t_\tUH\tUH\t_\t0\troot\t_\t_\n2\tworld\t_\tNN\tNN\t_\t1\tobj\t_\t_\n\n".as_bytes(),
        )
        .unwrap();
        let enc = EncoderConfig {
            word_dim: 3,
            char_dim: 2,
            pos_dim: 2,
            cnn_filters: 2,
            lstm_state: 2,
            mlp_dim: 3,
            ..EncoderConfig::default()
        };
        let config = TrainConfig {
            epochs: 1,
            ..TrainConfig::default()
        };
        let mut t = Trainer::new(&s, Some(&s), enc, config, None).unwrap();
        t.run_epoch().unwrap();
        t.finish()
    }

    #[test]
    fn round_trip() {
        let c = checkpoint();
        let mut bytes = Vec::new();
        c.write_to(&mut bytes).unwrap();
        let back = Checkpoint::read_from(bytes.as_slice()).unwrap();
        assert_eq!(back, c);
        let mut again = Vec::new();
        back.write_to(&mut again).unwrap();
        assert_eq!(bytes, again);
    }

    #[test]
    fn corruption_is_reported() {
        let c = checkpoint();
        let mut bytes = Vec::new();
        c.write_to(&mut bytes).unwrap();
        assert!(matches!(Checkpoint::read_from(&b"garbage"[..]), Err(Error::Checkpoint(_))));
        let mut bad_version = bytes.clone();
        bad_version[8] = 99;
        assert!(matches!(Checkpoint::read_from(bad_version.as_slice()), Err(Error::Checkpoint(_))));
        let truncated = &bytes[..bytes.len() - 4];
        assert!(matches!(Checkpoint::read_from(truncated), Err(Error::Checkpoint(_))));
        let mut trailing = bytes.clone();
        trailing.push(0);
        assert!(matches!(Checkpoint::read_from(trailing.as_slice()), Err(Error::Checkpoint(_))));
    }
}
