//! `TCMW` weights files.
//!
//! Layout (little-endian): magic `TCMW`, version `u32`, seven `u32` config
//! fields (n_layers, d_model, n_heads, d_head, d_mlp, vocab_size, max_seq),
//! `ln_epsilon: f32`, then tensors until end of file, each as
//! `name_len: u16, name: utf8, rank: u8, dims: [u32; rank], data: [f32]`.

use std::collections::HashMap;
use std::path::Path;

use super::{ModelConfig, ModelError, Result, Weights};

pub const MAGIC: &[u8; 4] = b"TCMW";
pub const FORMAT_VERSION: u32 = 1;

fn ferr(tensor: &str, reason: impl Into<String>) -> ModelError {
    ModelError::Format { tensor: tensor.to_string(), reason: reason.into() }
}

pub fn encode_weights(weights: &Weights) -> Result<Vec<u8>> {
    weights.validate()?;
    let c = weights.config;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    for v in [c.n_layers, c.d_model, c.n_heads, c.d_head, c.d_mlp, c.vocab_size, c.max_seq] {
        let v = u32::try_from(v).map_err(|_| ferr("header", "dimension exceeds u32"))?;
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&c.ln_epsilon.to_le_bytes());
    let mut w = weights.clone();
    w.visit_mut(|t| {
        out.extend_from_slice(&(t.name.len() as u16).to_le_bytes());
        out.extend_from_slice(t.name.as_bytes());
        out.push(t.shape.len() as u8);
        for &d in &t.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in t.data.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    });
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, ctx: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| ferr(ctx, "truncated"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u32(&mut self, ctx: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, ctx)?.try_into().unwrap()))
    }
    fn done(&self) -> bool {
        self.pos == self.buf.len()
    }
}

pub fn decode_weights(bytes: &[u8]) -> Result<Weights> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4, "header")? != MAGIC {
        return Err(ferr("header", "bad magic"));
    }
    let version = r.u32("header")?;
    if version != FORMAT_VERSION {
        return Err(ferr("header", format!("unsupported version {version}")));
    }
    let mut dims = [0usize; 7];
    for d in dims.iter_mut() {
        *d = r.u32("header")? as usize;
    }
    let ln_epsilon = f32::from_le_bytes(r.take(4, "header")?.try_into().unwrap());
    let config = ModelConfig {
        n_layers: dims[0],
        d_model: dims[1],
        n_heads: dims[2],
        d_head: dims[3],
        d_mlp: dims[4],
        vocab_size: dims[5],
        max_seq: dims[6],
        ln_epsilon,
    };
    config.validate().map_err(|e| ferr("header", e.to_string()))?;

    let mut found: HashMap<String, (Vec<usize>, Vec<f32>)> = HashMap::new();
    while !r.done() {
        let name_len = u16::from_le_bytes(r.take(2, "tensor directory")?.try_into().unwrap()) as usize;
        let name = std::str::from_utf8(r.take(name_len, "tensor directory")?)
            .map_err(|_| ferr("tensor directory", "name is not utf-8"))?
            .to_string();
        let rank = r.take(1, &name)?[0] as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32(&name)? as usize);
        }
        let count = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or_else(|| ferr(&name, "shape overflows"))?;
        let raw = r.take(count.checked_mul(4).ok_or_else(|| ferr(&name, "shape overflows"))?, &name)?;
        let data = raw.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
        if found.insert(name.clone(), (shape, data)).is_some() {
            return Err(ferr(&name, "duplicate tensor"));
        }
    }

    // hostile headers must not trigger huge zero allocations
    let (d, l) = (config.d_model, config.n_layers);
    let per_layer = d.saturating_mul(d).saturating_mul(4).saturating_add(d.saturating_mul(config.d_mlp).saturating_mul(2));
    let needed = config
        .vocab_size
        .saturating_mul(d)
        .saturating_mul(2)
        .saturating_add(config.max_seq.saturating_mul(d))
        .saturating_add(l.saturating_mul(per_layer))
        .saturating_mul(4);
    if needed > bytes.len() {
        return Err(ferr("header", "file too small for declared config"));
    }

    let mut weights = Weights::zeros(config)?;
    let mut err: Option<ModelError> = None;
    weights.visit_mut(|t| {
        if err.is_some() {
            return;
        }
        match found.remove(&t.name) {
            None => err = Some(ferr(&t.name, "missing tensor")),
            Some((shape, _)) if shape != t.shape => {
                err = Some(ferr(&t.name, format!("shape {shape:?}, expected {:?}", t.shape)))
            }
            Some((_, data)) => *t.data = data,
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    let mut extra: Vec<_> = found.into_keys().collect();
    extra.sort();
    for name in extra {
        log::warn!("ignoring unknown tensor {name}");
    }
    weights.validate()?;
    Ok(weights)
}

pub fn save_weights(weights: &Weights, path: &Path) -> Result<()> {
    let bytes = encode_weights(weights)?;
    std::fs::write(path, bytes).map_err(|e| ModelError::Io(format!("{}: {e}", path.display())))
}

pub fn load_weights(path: &Path) -> Result<Weights> {
    let bytes = std::fs::read(path).map_err(|e| ModelError::Io(format!("{}: {e}", path.display())))?;
    decode_weights(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> ModelConfig {
        ModelConfig { n_layers: 2, d_model: 4, n_heads: 2, d_head: 2, d_mlp: 8, vocab_size: 5, max_seq: 8, ln_epsilon: 1e-5 }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let w = Weights::random(cfg(), 3, 0.5).unwrap();
        let bytes = encode_weights(&w).unwrap();
        let back = decode_weights(&bytes).unwrap();
        assert_eq!(back, w);
        assert_eq!(encode_weights(&back).unwrap(), bytes);
    }

    #[test]
    fn truncation_names_tensor() {
        let w = Weights::random(cfg(), 3, 0.5).unwrap();
        let bytes = encode_weights(&w).unwrap();
        let err = decode_weights(&bytes[..bytes.len() - 3]).unwrap_err();
        assert_eq!(err, ModelError::Format { tensor: "unembed".into(), reason: "truncated".into() });
        assert!(decode_weights(&bytes[..10]).is_err());
    }

    #[test]
    fn unknown_tensor_is_ignored() {
        let w = Weights::random(cfg(), 3, 0.5).unwrap();
        let mut bytes = encode_weights(&w).unwrap();
        let name = b"extra.scale";
        bytes.extend_from_slice(&(name.len() as u16).to_le_bytes());
        bytes.extend_from_slice(name);
        bytes.push(1);
        bytes.extend_from_slice(&2u32.to_le_bytes());
        bytes.extend_from_slice(&1.0f32.to_le_bytes());
        bytes.extend_from_slice(&2.0f32.to_le_bytes());
        assert_eq!(decode_weights(&bytes).unwrap(), w);
    }

    #[test]
    fn bad_magic_and_shape() {
        let w = Weights::random(cfg(), 3, 0.5).unwrap();
        let mut bytes = encode_weights(&w).unwrap();
        bytes[0] = b'X';
        assert!(matches!(decode_weights(&bytes), Err(ModelError::Format { .. })));
        let mut other = w.clone();
        other.config.max_seq = 9;
        other.pos_embed = super::super::Mat::zeros(9, 4);
        let mut bytes = encode_weights(&other).unwrap();
        // header claims max_seq 8 while pos_embed is 9 x 4
        bytes[4 + 4 + 6 * 4..4 + 4 + 7 * 4].copy_from_slice(&8u32.to_le_bytes());
        let err = decode_weights(&bytes).unwrap_err();
        assert!(matches!(err, ModelError::Format { ref tensor, .. } if tensor == "pos_embed"), "{err}");
    }
}
