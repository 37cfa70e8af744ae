//! Binary checkpoint: magic, version, JSON header, `f32` blocks, CRC32.

use std::io::Write;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::train::TrainConfig;
use crate::model::VfNet;
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"VFNETCKP";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Enough to rebuild the trainer's random stream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: String,
    pub stream: u64,
    /// Decimal, since JSON numbers cannot carry 128 bits.
    pub word_pos: String,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self { seed: hex_encode(&rng.get_seed()), stream: rng.get_stream(), word_pos: rng.get_word_pos().to_string() }
    }

    pub fn restore(&self) -> Result<ChaCha8Rng> {
        use rand::SeedableRng;
        let bytes = hex_decode(&self.seed).ok_or_else(|| Error::Checkpoint("bad rng seed".into()))?;
        let seed: [u8; 32] = bytes.try_into().map_err(|_| Error::Checkpoint("rng seed must be 32 bytes".into()))?;
        let pos: u128 = self.word_pos.parse().map_err(|_| Error::Checkpoint("bad rng word position".into()))?;
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(pos);
        Ok(rng)
    }
}

fn hex_encode(b: &[u8]) -> String {
    b.iter().map(|x| format!("{x:02x}")).collect()
}

fn hex_decode(s: &str) -> Option<Vec<u8>> {
    if s.len() % 2 != 0 {
        return None;
    }
    (0..s.len()).step_by(2).map(|i| u8::from_str_radix(s.get(i..i + 2)?, 16).ok()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: VfNet,
    pub config: TrainConfig,
    pub epoch: u64,
    pub rng: RngState,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: TrainConfig,
    epoch: u64,
    rng: RngState,
    blocks: Vec<BlockHeader>,
}

#[derive(Serialize, Deserialize)]
struct BlockHeader {
    name: String,
    shape: Vec<usize>,
}

impl Checkpoint {
    /// Parameters are rounded to `f32`, the stored precision, so a loaded
    /// checkpoint computes exactly what this one does.
    pub fn new(mut model: VfNet, config: TrainConfig, epoch: u64, rng: &ChaCha8Rng) -> Self {
        model.round_to_f32();
        Self { model, config, epoch, rng: RngState::capture(rng) }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            config: self.config.clone(),
            epoch: self.epoch,
            rng: self.rng.clone(),
            blocks: self
                .model
                .blocks()
                .iter()
                .map(|b| BlockHeader { name: b.name.clone(), shape: b.shape.clone() })
                .collect(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        for b in self.model.blocks() {
            for v in &b.values {
                out.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 20 || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(Error::Version { found: version, expected: CHECKPOINT_VERSION });
        }
        let body = &bytes[..bytes.len() - 4];
        let stored = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
        let computed = crc32fast::hash(body);
        if stored != computed {
            return Err(Error::Checksum { stored, computed });
        }
        let hlen = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        let header_end = 16usize
            .checked_add(hlen)
            .filter(|&e| e <= body.len())
            .ok_or_else(|| Error::Checkpoint("header length exceeds file".into()))?;
        let header: Header = serde_json::from_slice(&bytes[16..header_end])
            .map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
        let mut model = VfNet::new(header.config.model.clone(), 0)?;
        let mut payload = body[header_end..].chunks_exact(4);
        {
            let mut blocks = model.blocks_mut();
            if blocks.len() != header.blocks.len() {
                return Err(Error::Checkpoint(format!(
                    "header lists {} blocks, config builds {}",
                    header.blocks.len(),
                    blocks.len()
                )));
            }
            for (b, h) in blocks.iter_mut().zip(&header.blocks) {
                if b.name != h.name || b.shape != h.shape {
                    return Err(Error::Checkpoint(format!(
                        "block {} {:?} does not match model block {} {:?}",
                        h.name, h.shape, b.name, b.shape
                    )));
                }
                for v in b.values.iter_mut() {
                    let c = payload.next().ok_or_else(|| Error::Checkpoint("truncated parameters".into()))?;
                    *v = f32::from_le_bytes(c.try_into().unwrap()) as f64;
                }
            }
        }
        if payload.next().is_some() || !payload.remainder().is_empty() {
            return Err(Error::Checkpoint("trailing bytes after parameters".into()));
        }
        Ok(Self { model, config: header.config, epoch: header.epoch, rng: header.rng })
    }
}

pub fn save_checkpoint(c: &Checkpoint, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&c.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}
