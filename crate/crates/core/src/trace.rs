//! On-disk run bundles: `<root>/<prompt_id>/<run_id>/{meta.json, resid.bin[, logits.bin]}`.
//!
//! `resid.bin` holds `[T x L x d_model]` little-endian f32, step-major.
//! `logits.bin`, when present, holds `[T x vocab_size]` little-endian f32.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Label;
use crate::model::ResidualCache;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("io error at {path}: {message}")]
    Io { path: String, message: String },
    #[error("bad meta document: {0}")]
    Meta(String),
    #[error("blob has {found} bytes, expected {expected}")]
    BlobSize { found: usize, expected: usize },
}

type Result<T> = std::result::Result<T, TraceError>;

fn io_err(path: &Path, e: impl std::fmt::Display) -> TraceError {
    TraceError::Io { path: path.display().to_string(), message: e.to_string() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub prompt_id: u32,
    pub run_id: u32,
    pub label: Label,
    pub tokens: Vec<u32>,
    pub seed: u64,
    pub model: String,
    pub hook_point: String,
    pub n_steps: usize,
    pub n_layers: usize,
    pub d_model: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vocab_size: Option<usize>,
    /// Fields written by other producers, kept so re-serialization is lossless.
    #[serde(flatten)]
    pub extra: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceBundle {
    pub meta: TraceMeta,
    pub resid: ResidualCache,
    pub logits: Option<Vec<Vec<f32>>>,
}

pub fn decode_meta(bytes: &[u8]) -> Result<TraceMeta> {
    let meta: TraceMeta = serde_json::from_slice(bytes).map_err(|e| TraceError::Meta(e.to_string()))?;
    if meta.tokens.len() != meta.n_steps {
        return Err(TraceError::Meta(format!("{} tokens for {} steps", meta.tokens.len(), meta.n_steps)));
    }
    if meta.vocab_size == Some(0) {
        return Err(TraceError::Meta("vocab_size must be positive".into()));
    }
    Ok(meta)
}

pub fn encode_meta(meta: &TraceMeta) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(meta).expect("meta serializes");
    out.push(b'\n');
    out
}

fn check_size(len: usize, dims: &[usize]) -> Result<usize> {
    let count = dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or(TraceError::BlobSize { found: len, expected: usize::MAX })?;
    let expected = count.checked_mul(4).ok_or(TraceError::BlobSize { found: len, expected: usize::MAX })?;
    if len != expected {
        return Err(TraceError::BlobSize { found: len, expected });
    }
    Ok(count)
}

fn read_f32s(bytes: &[u8]) -> Vec<f32> {
    bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect()
}

pub fn decode_resid(bytes: &[u8], n_steps: usize, n_layers: usize, d_model: usize) -> Result<ResidualCache> {
    check_size(bytes.len(), &[n_steps, n_layers, d_model])?;
    let flat = read_f32s(bytes);
    let resid = if d_model == 0 {
        vec![vec![Vec::new(); n_layers]; n_steps]
    } else {
        let rows: Vec<Vec<f32>> = flat.chunks(d_model).map(<[f32]>::to_vec).collect();
        rows.chunks(n_layers.max(1)).map(<[Vec<f32>]>::to_vec).collect()
    };
    Ok(ResidualCache { resid })
}

pub fn encode_resid(cache: &ResidualCache) -> Vec<u8> {
    cache.resid.iter().flatten().flatten().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn decode_logits(bytes: &[u8], n_steps: usize, vocab_size: usize) -> Result<Vec<Vec<f32>>> {
    check_size(bytes.len(), &[n_steps, vocab_size])?;
    Ok(read_f32s(bytes).chunks(vocab_size.max(1)).map(<[f32]>::to_vec).collect())
}

pub fn encode_logits(logits: &[Vec<f32>]) -> Vec<u8> {
    logits.iter().flatten().flat_map(|v| v.to_le_bytes()).collect()
}

impl TraceBundle {
    pub fn dir(&self, root: &Path) -> PathBuf {
        root.join(self.meta.prompt_id.to_string()).join(self.meta.run_id.to_string())
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.meta;
        if !self.resid.check_shape(m.n_steps, m.n_layers, m.d_model) {
            return Err(TraceError::Meta("residual cache disagrees with meta dimensions".into()));
        }
        if let Some(l) = &self.logits {
            let v = m.vocab_size.ok_or_else(|| TraceError::Meta("logits present without vocab_size".into()))?;
            if l.len() != m.n_steps || l.iter().any(|r| r.len() != v) {
                return Err(TraceError::Meta("logits disagree with meta dimensions".into()));
            }
        }
        Ok(())
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).map_err(|e| io_err(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

pub fn write_bundle(root: &Path, bundle: &TraceBundle) -> Result<PathBuf> {
    bundle.validate()?;
    let dir = bundle.dir(root);
    std::fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    write_atomic(&dir.join("resid.bin"), &encode_resid(&bundle.resid))?;
    if let Some(l) = &bundle.logits {
        write_atomic(&dir.join("logits.bin"), &encode_logits(l))?;
    }
    write_atomic(&dir.join("meta.json"), &encode_meta(&bundle.meta))?;
    Ok(dir)
}

pub fn read_bundle(dir: &Path) -> Result<TraceBundle> {
    let read = |name: &str| {
        let p = dir.join(name);
        std::fs::read(&p).map_err(|e| io_err(&p, e))
    };
    let meta = decode_meta(&read("meta.json")?)?;
    let resid = decode_resid(&read("resid.bin")?, meta.n_steps, meta.n_layers, meta.d_model)?;
    let logits_path = dir.join("logits.bin");
    let logits = match (logits_path.exists(), meta.vocab_size) {
        (true, Some(v)) => Some(decode_logits(&read("logits.bin")?, meta.n_steps, v)?),
        (true, None) => return Err(TraceError::Meta("logits.bin present without vocab_size".into())),
        (false, _) => None,
    };
    Ok(TraceBundle { meta, resid, logits })
}

/// All bundle directories under `root`, ordered by (prompt_id, run_id).
pub fn list_bundles(root: &Path) -> Result<Vec<(u32, u32, PathBuf)>> {
    let mut out = Vec::new();
    let numeric = |p: &Path| p.file_name().and_then(|n| n.to_str()).and_then(|n| n.parse::<u32>().ok());
    for prompt in std::fs::read_dir(root).map_err(|e| io_err(root, e))? {
        let prompt = prompt.map_err(|e| io_err(root, e))?.path();
        let Some(pid) = numeric(&prompt).filter(|_| prompt.is_dir()) else { continue };
        for run in std::fs::read_dir(&prompt).map_err(|e| io_err(&prompt, e))? {
            let run = run.map_err(|e| io_err(&prompt, e))?.path();
            if let Some(rid) = numeric(&run).filter(|_| run.join("meta.json").exists()) {
                out.push((pid, rid, run));
            }
        }
    }
    out.sort();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bundle() -> TraceBundle {
        let resid = ResidualCache {
            resid: (0..3).map(|t| (0..2).map(|l| (0..4).map(|i| (t * 100 + l * 10 + i) as f32 * 0.5).collect()).collect()).collect(),
        };
        TraceBundle {
            meta: TraceMeta {
                prompt_id: 6,
                run_id: 2,
                label: Label::Hallucination,
                tokens: vec![1, 2, 3],
                seed: 99,
                model: "test".into(),
                hook_point: "post_attention".into(),
                n_steps: 3,
                n_layers: 2,
                d_model: 4,
                text: Some("abc".into()),
                vocab_size: Some(2),
                extra: BTreeMap::new(),
            },
            resid,
            logits: Some(vec![vec![0.5, -1.0]; 3]),
        }
    }

    #[test]
    fn round_trip_byte_identical() {
        let tmp = tempfile::tempdir().unwrap();
        let b = bundle();
        let dir = write_bundle(tmp.path(), &b).unwrap();
        let back = read_bundle(&dir).unwrap();
        assert_eq!(back, b);
        for f in ["meta.json", "resid.bin", "logits.bin"] {
            let before = std::fs::read(dir.join(f)).unwrap();
            let again = write_bundle(tmp.path(), &back).unwrap();
            assert_eq!(std::fs::read(again.join(f)).unwrap(), before);
        }
        assert_eq!(list_bundles(tmp.path()).unwrap(), vec![(6, 2, dir)]);
    }

    #[test]
    fn foreign_fields_survive() {
        let mut m = bundle().meta;
        m.extra.insert("producer".into(), serde_json::json!("python"));
        let bytes = encode_meta(&m);
        let back = decode_meta(&bytes).unwrap();
        assert_eq!(encode_meta(&back), bytes);
    }

    #[test]
    fn size_mismatch() {
        let b = encode_resid(&bundle().resid);
        assert!(matches!(decode_resid(&b[..b.len() - 4], 3, 2, 4), Err(TraceError::BlobSize { .. })));
        assert!(decode_resid(&b, 3, 2, 4).is_ok());
        let mut m = bundle().meta;
        m.n_steps = 4;
        assert!(decode_meta(&encode_meta(&m)).is_err());
    }
}
