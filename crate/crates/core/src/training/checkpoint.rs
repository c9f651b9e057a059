//! Checkpoint file: `EVQC`, u32 LE header length, JSON header, then one
//! block per tensor: u32 name length, name bytes, u32 rank, u32 dims,
//! f64 LE values in row-major order.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::grounder::Grounder;
use crate::neural::Real;

use super::config::config_hash;
use super::trainer::{EpochRecord, Trainer};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"EVQC";

const MOMENT_PREFIX: [&str; 2] = ["adam.m:", "adam.v:"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub config_hash: String,
    /// Completed epochs.
    pub epoch: usize,
    pub optimizer_steps: u64,
    pub best_valid_miou: Option<f64>,
    pub input_vocab: Vocabulary,
    pub target_vocab: Vocabulary,
    pub log: Vec<EpochRecord>,
    /// SHA-256 of the tensor blocks.
    pub payload_sha256: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub tensors: Vec<(String, Array2<f64>)>,
}

impl Checkpoint {
    pub fn capture<G>(trainer: &Trainer<G>) -> Self {
        let params = &trainer.model.params;
        let mut tensors: Vec<(String, Array2<f64>)> = params
            .tensors()
            .iter()
            .map(|t| (t.name.clone(), t.value.mapv(|x| x as f64)))
            .collect();
        for (t, (m, v)) in params.tensors().iter().zip(&trainer.optimizer.moments) {
            tensors.push((
                format!("{}{}", MOMENT_PREFIX[0], t.name),
                m.mapv(|x| x as f64),
            ));
            tensors.push((
                format!("{}{}", MOMENT_PREFIX[1], t.name),
                v.mapv(|x| x as f64),
            ));
        }
        Self {
            header: CheckpointHeader {
                config_hash: config_hash(&trainer.config),
                epoch: trainer.epoch,
                optimizer_steps: trainer.optimizer.steps,
                best_valid_miou: trainer.best_valid_miou,
                input_vocab: trainer.model.input_vocab.clone(),
                target_vocab: trainer.model.target_vocab.clone(),
                log: trainer.log.clone(),
                payload_sha256: String::new(),
            },
            tensors,
        }
    }

    /// Loads state into a trainer built from the same config and data.
    pub fn restore<G: Grounder>(&self, trainer: &mut Trainer<G>) -> Result<()> {
        let expected = config_hash(&trainer.config);
        if self.header.config_hash != expected {
            return Err(Error::Integrity(format!(
                "checkpoint config hash {} does not match {}",
                self.header.config_hash, expected
            )));
        }
        if self.header.input_vocab != trainer.model.input_vocab
            || self.header.target_vocab != trainer.model.target_vocab
        {
            return Err(Error::Integrity(
                "checkpoint vocabularies differ from the dataset's".into(),
            ));
        }
        let lookup = |name: &str| self.tensors.iter().find(|(n, _)| n == name).map(|(_, v)| v);
        let params = &mut trainer.model.params;
        let ids: Vec<_> = params.ids().collect();
        for &id in &ids {
            let name = params.name(id).to_string();
            let value = lookup(&name)
                .ok_or_else(|| Error::Integrity(format!("checkpoint lacks tensor {name}")))?;
            if value.dim() != params.get(id).dim() {
                return Err(Error::Integrity(format!(
                    "tensor {name} has shape {:?}",
                    value.dim()
                )));
            }
            params.get_mut(id).assign(&value.mapv(|x| x as Real));
        }
        let moments = &mut trainer.optimizer.moments;
        for (i, &id) in ids.iter().enumerate().take(moments.len()) {
            let name = trainer.model.params.name(id);
            for (k, prefix) in MOMENT_PREFIX.iter().enumerate() {
                let key = format!("{prefix}{name}");
                let value = lookup(&key)
                    .ok_or_else(|| Error::Integrity(format!("checkpoint lacks {key}")))?;
                let slot = if k == 0 {
                    &mut moments[i].0
                } else {
                    &mut moments[i].1
                };
                if value.dim() != slot.dim() {
                    return Err(Error::Integrity(format!(
                        "tensor {key} has shape {:?}",
                        value.dim()
                    )));
                }
                slot.assign(&value.mapv(|x| x as Real));
            }
        }
        trainer.optimizer.steps = self.header.optimizer_steps;
        trainer.epoch = self.header.epoch;
        trainer.best_valid_miou = self.header.best_valid_miou;
        trainer.log = self.header.log.clone();
        Ok(())
    }
}

fn encode_blocks(tensors: &[(String, Array2<f64>)]) -> Vec<u8> {
    let mut out = Vec::new();
    for (name, value) in tensors {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&2u32.to_le_bytes());
        for d in value.shape() {
            out.extend_from_slice(&(*d as u32).to_le_bytes());
        }
        for v in value.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn save_checkpoint(path: impl AsRef<Path>, checkpoint: &Checkpoint) -> Result<()> {
    let path = path.as_ref();
    let payload = encode_blocks(&checkpoint.tensors);
    let mut header = checkpoint.header.clone();
    header.payload_sha256 = hex::encode(Sha256::digest(&payload));
    let header = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(8 + header.len() + payload.len());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&payload);
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Integrity("checkpoint is truncated".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader {
        bytes: &bytes,
        pos: 0,
    };
    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err(Error::Integrity(format!(
            "{} is not a checkpoint",
            path.display()
        )));
    }
    let header_len = r.u32()?;
    let header: CheckpointHeader = serde_json::from_slice(r.take(header_len)?)
        .map_err(|e| Error::Integrity(format!("checkpoint header: {e}")))?;
    let payload = &bytes[r.pos..];
    if hex::encode(Sha256::digest(payload)) != header.payload_sha256 {
        return Err(Error::Integrity(
            "checkpoint payload digest mismatch".into(),
        ));
    }
    let mut tensors = Vec::new();
    while r.pos < bytes.len() {
        let name_len = r.u32()?;
        let name = String::from_utf8(r.take(name_len)?.to_vec())
            .map_err(|_| Error::Integrity("tensor name is not UTF-8".into()))?;
        let rank = r.u32()?;
        if rank != 2 {
            return Err(Error::Integrity(format!("tensor {name} has rank {rank}")));
        }
        let (rows, cols) = (r.u32()?, r.u32()?);
        let data = r.take(rows * cols * 8)?;
        let values = data
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tensors.push((
            name,
            Array2::from_shape_vec((rows, cols), values).expect("length checked"),
        ));
    }
    Ok(Checkpoint { header, tensors })
}
