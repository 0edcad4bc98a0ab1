//! Resolving `--model` and `--dataset` into an engine, a vocabulary and prompts.

use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use trajlab::dataset::{load_dataset, shipped_dataset};
use trajlab::model::load_weights;
use trajlab::synth::{build_fork_model, ForkSpec};
use trajlab::vocab::Vocab;
use trajlab::{Engine, PromptSpec};

use crate::config::RunConfig;
use crate::manifest::{hash_file, FileHash};

pub const WEIGHTS_FILE: &str = "model.tcmw";
pub const VOCAB_FILE: &str = "vocab.json";
pub const SPEC_FILE: &str = "synth.json";
pub const DATASET_FILE: &str = "dataset.json";

pub struct Source {
    pub engine: Engine,
    pub vocab: Vocab,
    pub name: String,
    pub temperature: f64,
    pub n_steps: usize,
    pub commit_layer: Option<usize>,
    pub dataset: Vec<PromptSpec>,
    pub inputs: Vec<FileHash>,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn input(path: &Path, inputs: &mut Vec<FileHash>) -> Result<()> {
    inputs.push(hash_file(path, path.display().to_string())?);
    Ok(())
}

pub fn load(cfg: &RunConfig) -> Result<Source> {
    let Some(model) = &cfg.model else { bail!("--model is required") };
    let mut inputs = Vec::new();
    let name = model.file_stem().map_or("model".into(), |s| s.to_string_lossy().into_owned());
    let (weights, vocab, spec, default_data) = if model.is_dir() {
        let w = model.join(WEIGHTS_FILE);
        let v = model.join(VOCAB_FILE);
        input(&w, &mut inputs)?;
        input(&v, &mut inputs)?;
        let weights = load_weights(&w).with_context(|| format!("loading {}", w.display()))?;
        let vocab: Vocab = read_json(&v)?;
        let spec_path = model.join(SPEC_FILE);
        let spec: Option<ForkSpec> = if spec_path.exists() {
            input(&spec_path, &mut inputs)?;
            Some(read_json(&spec_path)?)
        } else {
            None
        };
        let d = model.join(DATASET_FILE);
        let data = if d.exists() && cfg.dataset.is_none() {
            input(&d, &mut inputs)?;
            Some(load_dataset(&d)?)
        } else {
            None
        };
        (Arc::new(weights), vocab, spec, data)
    } else if model.extension().is_some_and(|e| e == "json") {
        input(model, &mut inputs)?;
        let spec: ForkSpec = read_json(model)?;
        let (m, _) = build_fork_model(&spec).context("building fork model")?;
        let data = m.dataset(cfg.synth_prompts, cfg.seed);
        (m.weights.clone(), m.vocab.vocab.clone(), Some(spec), Some(data))
    } else {
        input(model, &mut inputs)?;
        let weights = load_weights(model).with_context(|| format!("loading {}", model.display()))?;
        let v = model.with_file_name(VOCAB_FILE);
        let vocab = if v.exists() {
            input(&v, &mut inputs)?;
            read_json(&v)?
        } else {
            Vocab::ByteLevel
        };
        (Arc::new(weights), vocab, None, None)
    };
    if vocab.len() != weights.config.vocab_size {
        bail!("vocabulary has {} tokens, model expects {}", vocab.len(), weights.config.vocab_size);
    }
    let mut dataset = match (&cfg.dataset, default_data) {
        (Some(p), _) => {
            input(p, &mut inputs)?;
            load_dataset(p)?
        }
        (None, Some(d)) => d,
        (None, None) => shipped_dataset(),
    };
    if let Some(n) = cfg.n_prompts {
        dataset.truncate(n);
    }
    if dataset.is_empty() {
        bail!("dataset is empty");
    }
    let engine = Engine::new(weights).with_hook_point(cfg.hook_point);
    Ok(Source {
        engine,
        vocab,
        name,
        temperature: cfg.temperature.or(spec.as_ref().map(|s| s.tau_ref)).unwrap_or(0.7),
        n_steps: cfg.n_steps.or(spec.as_ref().map(|s| s.n_steps)).unwrap_or(24),
        commit_layer: spec.as_ref().map(|s| s.commit_layer),
        dataset,
        inputs,
    })
}
