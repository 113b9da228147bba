//! Versioned binary checkpoints.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic "GLWSDCKP" | version u32
//! head u8 | vocab_size, max_seq_length, model_dim, num_layers, num_heads, feedforward_dim: u64 | dropout f64
//! token count u64 | per token: byte length u32, UTF-8 bytes     (ids 4.. in order)
//! tensor count u32 | per tensor: name length u16, name, rank u8, dims u64 * rank, values f64 * n
//! SHA-256 of everything above
//! ```

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

use super::classifier::GlossModel;
use super::config::{EncoderConfig, HeadKind};
use super::params::ModelParameters;
use super::vocab::Vocab;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"GLWSDCKP";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn save_checkpoint(model: &GlossModel) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + 8 * model.params.num_values());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());

    let c = &model.config;
    out.push(c.head.code());
    for v in [
        c.vocab_size,
        c.max_seq_length,
        c.model_dim,
        c.num_layers,
        c.num_heads,
        c.feedforward_dim,
    ] {
        out.extend_from_slice(&(v as u64).to_le_bytes());
    }
    out.extend_from_slice(&c.dropout_rate.to_le_bytes());

    let tokens = model.vocab.learned_tokens();
    out.extend_from_slice(&(tokens.len() as u64).to_le_bytes());
    for t in tokens {
        out.extend_from_slice(&(t.len() as u32).to_le_bytes());
        out.extend_from_slice(t.as_bytes());
    }

    let tensors = model.params.tensors();
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in tensors {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(t.ndim() as u8);
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in t.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }

    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::CorruptCheckpoint(format!("unexpected end of data at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        self.array().map(u16::from_le_bytes)
    }

    fn u32(&mut self) -> Result<u32> {
        self.array().map(u32::from_le_bytes)
    }

    fn u64(&mut self) -> Result<u64> {
        self.array().map(u64::from_le_bytes)
    }

    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::CorruptCheckpoint("size overflows usize".into()))
    }

    fn f64(&mut self) -> Result<f64> {
        self.array().map(f64::from_le_bytes)
    }

    fn string(&mut self, len: usize) -> Result<String> {
        String::from_utf8(self.take(len)?.to_vec())
            .map_err(|_| Error::CorruptCheckpoint("invalid UTF-8".into()))
    }
}

pub fn load_checkpoint(bytes: &[u8]) -> Result<GlossModel> {
    if bytes.len() < CHECKPOINT_MAGIC.len() + 4 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(Error::CorruptCheckpoint("missing magic bytes".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(Error::CheckpointVersion {
            expected: CHECKPOINT_VERSION,
            found: version,
        });
    }
    if bytes.len() < 12 + 32 {
        return Err(Error::CorruptCheckpoint("truncated".into()));
    }
    let (payload, digest) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(payload).as_slice() != digest {
        return Err(Error::CorruptCheckpoint("checksum mismatch".into()));
    }

    let mut r = Reader { bytes: payload, pos: 12 };
    let head = HeadKind::from_code(r.u8()?)
        .ok_or_else(|| Error::CorruptCheckpoint("unknown head code".into()))?;
    let config = EncoderConfig {
        vocab_size: r.usize()?,
        max_seq_length: r.usize()?,
        model_dim: r.usize()?,
        num_layers: r.usize()?,
        num_heads: r.usize()?,
        feedforward_dim: r.usize()?,
        dropout_rate: r.f64()?,
        head,
    };
    config
        .validate()
        .map_err(|e| Error::CorruptCheckpoint(format!("stored config invalid: {e}")))?;

    let n_tokens = r.usize()?;
    let mut tokens = Vec::with_capacity(n_tokens.min(1 << 20));
    for _ in 0..n_tokens {
        let len = r.u32()? as usize;
        tokens.push(r.string(len)?);
    }
    let vocab = Vocab::from_tokens(tokens);
    if vocab.len() != config.vocab_size {
        return Err(Error::CorruptCheckpoint(format!(
            "vocabulary size {} disagrees with config {}",
            vocab.len(),
            config.vocab_size
        )));
    }

    let mut params = ModelParameters::zeros(&config);
    let expected: Vec<(String, Vec<usize>)> = params
        .tensors()
        .into_iter()
        .map(|(n, t)| (n, t.shape().to_vec()))
        .collect();
    let count = r.u32()? as usize;
    if count != expected.len() {
        return Err(Error::CorruptCheckpoint(format!(
            "expected {} tensors, found {count}",
            expected.len()
        )));
    }
    for ((name, shape), mut dst) in expected.into_iter().zip(params.tensors_mut()) {
        let name_len = r.u16()? as usize;
        let stored_name = r.string(name_len)?;
        let rank = r.u8()? as usize;
        let dims = (0..rank).map(|_| r.usize()).collect::<Result<Vec<_>>>()?;
        if stored_name != name || dims != shape {
            return Err(Error::CorruptCheckpoint(format!(
                "tensor `{stored_name}` {dims:?} does not match expected `{name}` {shape:?}"
            )));
        }
        for v in dst.iter_mut() {
            *v = r.f64()?;
        }
    }
    if r.pos != payload.len() {
        return Err(Error::CorruptCheckpoint("trailing bytes".into()));
    }
    GlossModel::new(config, vocab, params)
}
