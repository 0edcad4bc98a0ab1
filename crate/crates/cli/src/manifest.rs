//! Output directories, their single-writer lock, and content-hash manifests.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

pub const MANIFEST: &str = "manifest.json";
pub const FAILED: &str = "FAILED";
const LOCK: &str = ".trajlab.lock";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub config: RunConfig,
    /// Seeds actually used, by role.
    pub seeds: Vec<(String, u64)>,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
    /// Hash over the output list, so a manifest can be checked on its own.
    pub digest: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn hash_file(path: &Path, name: String) -> Result<FileHash> {
    let data = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(FileHash { path: name, bytes: data.len() as u64, sha256: sha256_hex(&data) })
}

fn walk(root: &Path, dir: &Path, out: &mut Vec<FileHash>) -> Result<()> {
    let mut entries: Vec<_> = fs::read_dir(dir)?.collect::<std::io::Result<_>>()?;
    entries.sort_by_key(|e| e.file_name());
    for e in entries {
        let path = e.path();
        if path.is_dir() {
            walk(root, &path, out)?;
            continue;
        }
        let rel = path.strip_prefix(root).expect("under root");
        let name = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
        if name == MANIFEST || name == LOCK || name == FAILED {
            continue;
        }
        out.push(hash_file(&path, name)?);
    }
    Ok(())
}

fn list_digest(outputs: &[FileHash]) -> String {
    let mut text = String::new();
    for f in outputs {
        text.push_str(&format!("{} {} {}\n", f.sha256, f.bytes, f.path));
    }
    sha256_hex(text.as_bytes())
}

/// Checks the digest and every listed file.
pub fn verify(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let m: Manifest = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    if list_digest(&m.outputs) != m.digest {
        bail!("{}: digest does not match output list", path.display());
    }
    let mut on_disk = Vec::new();
    walk(dir, dir, &mut on_disk)?;
    if on_disk != m.outputs {
        bail!("{}: files on disk differ from the manifest", dir.display());
    }
    Ok(m)
}

/// A locked output directory. The lock is released on drop.
pub struct OutDir {
    pub dir: PathBuf,
    lock: PathBuf,
}

impl OutDir {
    /// Takes the lock and clears previous outputs. A non-empty directory is
    /// only cleared if an earlier run left its manifest or failure marker.
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let lock = dir.join(LOCK);
        fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&lock)
            .with_context(|| format!("{} is locked by another writer; remove {} if no run is active", dir.display(), lock.display()))?;
        let out = OutDir { dir: dir.to_path_buf(), lock };
        let ours = dir.join(MANIFEST).exists() || dir.join(FAILED).exists();
        if !ours && fs::read_dir(dir)?.count() > 1 {
            bail!("{} is not empty and holds no earlier trajlab output", dir.display());
        }
        for e in fs::read_dir(dir)? {
            let p = e?.path();
            if p == out.lock {
                continue;
            }
            if p.is_dir() {
                fs::remove_dir_all(&p)?;
            } else {
                fs::remove_file(&p)?;
            }
        }
        Ok(out)
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.dir.join(rel)
    }

    pub fn write(&self, rel: &str, data: impl AsRef<[u8]>) -> Result<()> {
        let p = self.path(rel);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&p, data).with_context(|| format!("writing {}", p.display()))
    }

    pub fn write_json<T: Serialize>(&self, rel: &str, value: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.write(rel, s)
    }

    pub fn fail(&self, err: &anyhow::Error) {
        let _ = fs::write(self.path(FAILED), format!("{err:#}\n"));
    }

    pub fn finish(&self, command: &str, config: &RunConfig, seeds: Vec<(String, u64)>, inputs: Vec<FileHash>) -> Result<Manifest> {
        let mut outputs = Vec::new();
        walk(&self.dir, &self.dir, &mut outputs)?;
        let digest = list_digest(&outputs);
        let m = Manifest { command: command.into(), version: env!("CARGO_PKG_VERSION").into(), config: config.clone(), seeds, inputs, outputs, digest };
        self.write_json(MANIFEST, &m)?;
        Ok(m)
    }
}

impl Drop for OutDir {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.lock);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_round_trip_and_tamper() {
        let tmp = tempfile::tempdir().unwrap();
        let d = tmp.path().join("x");
        {
            let o = OutDir::create(&d).unwrap();
            assert!(OutDir::create(&d).is_err(), "second writer must be refused");
            o.write("a.csv", "1\n").unwrap();
            o.write("sub/b.bin", [0u8, 1]).unwrap();
            o.finish("t", &RunConfig::default(), vec![], vec![]).unwrap();
        }
        let m = verify(&d).unwrap();
        assert_eq!(m.outputs.iter().map(|f| f.path.as_str()).collect::<Vec<_>>(), ["a.csv", "sub/b.bin"]);
        assert_eq!(m.outputs[0].sha256, sha256_hex(b"1\n"));
        fs::write(d.join("a.csv"), "2\n").unwrap();
        assert!(verify(&d).is_err());
        // a fresh writer clears stale outputs
        let o = OutDir::create(&d).unwrap();
        assert_eq!(fs::read_dir(&d).unwrap().count(), 1);
        drop(o);
        assert_eq!(fs::read_dir(&d).unwrap().count(), 0);
        // foreign files are never cleared
        fs::write(d.join("keep.txt"), "x").unwrap();
        assert!(OutDir::create(&d).is_err());
        assert!(d.join("keep.txt").exists());
    }
}
