//! Matched run collection and the divergence analyses over one prompt:
//! the step-wise KL curve, a layer x step Cohen's d grid and joint PCA
//! trajectories.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Label, PromptSpec};
use crate::model::{generate, Engine, HookPoint, HookSpec, ModelError, ResidualCache};
use crate::rng::run_seed;
use crate::stats::{cohens_d_multivariate, kl_divergence, pca_fit, Distribution, StatsError};
use crate::trace::{TraceBundle, TraceMeta};
use crate::vocab::Vocab;

pub const ONSET_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error)]
pub enum Phase2Error {
    #[error("no {class} run after {attempts} attempts")]
    ClassUnreachable { class: &'static str, attempts: usize },
    #[error("attempt budget {budget} is below 2K = {need}")]
    Budget { budget: usize, need: usize },
    #[error("need K >= 2 runs per class, got {0}")]
    TooFewRuns(usize),
    #[error("invalid run pair: {0}")]
    InvalidPair(String),
    #[error("tokenize: {0}")]
    Tokenize(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

pub type Result<T> = std::result::Result<T, Phase2Error>;

/// One cached generation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub prompt_id: u32,
    /// Attempt index; the run's seed is derived from it.
    pub run_id: u32,
    pub seed: u64,
    pub label: Label,
    pub tokens: Vec<u32>,
    pub cache: ResidualCache,
    /// Unscaled logits per step, `[T][V]`.
    pub logits: Vec<Vec<f32>>,
}

impl RunRecord {
    pub fn to_bundle(&self, model: &str, hook_point: HookPoint, text: Option<String>) -> TraceBundle {
        let hp = serde_json::to_value(hook_point).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
        TraceBundle {
            meta: TraceMeta {
                prompt_id: self.prompt_id,
                run_id: self.run_id,
                label: self.label,
                tokens: self.tokens.clone(),
                seed: self.seed,
                model: model.to_string(),
                hook_point: hp,
                n_steps: self.cache.n_steps(),
                n_layers: self.cache.n_layers(),
                d_model: self.cache.d_model(),
                text,
                vocab_size: self.logits.first().map(Vec::len),
                extra: Default::default(),
            },
            resid: self.cache.clone(),
            logits: Some(self.logits.clone()),
        }
    }

    pub fn from_bundle(b: &TraceBundle) -> Result<Self> {
        let logits = b.logits.clone().ok_or_else(|| Phase2Error::InvalidPair(format!("bundle {}/{} has no logits", b.meta.prompt_id, b.meta.run_id)))?;
        Ok(RunRecord {
            prompt_id: b.meta.prompt_id,
            run_id: b.meta.run_id,
            seed: b.meta.seed,
            label: b.meta.label,
            tokens: b.meta.tokens.clone(),
            cache: b.resid.clone(),
            logits,
        })
    }
}

/// K correct and K hallucinated runs of one prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct RunPair {
    pub prompt_id: u32,
    pub prompt: Vec<u32>,
    pub correct: Vec<RunRecord>,
    pub hallucinated: Vec<RunRecord>,
    /// Attempts consumed while collecting.
    pub attempts: usize,
}

impl RunPair {
    pub fn validate(&self) -> Result<()> {
        let k = self.correct.len();
        if k < 2 || self.hallucinated.len() < 2 {
            return Err(Phase2Error::TooFewRuns(k.min(self.hallucinated.len())));
        }
        let first = &self.correct[0];
        let shape = (first.cache.n_steps(), first.cache.n_layers(), first.cache.d_model());
        for (r, want) in self.correct.iter().map(|r| (r, Label::Correct)).chain(self.hallucinated.iter().map(|r| (r, Label::Hallucination))) {
            if r.prompt_id != self.prompt_id {
                return Err(Phase2Error::InvalidPair(format!("run {} belongs to prompt {}", r.run_id, r.prompt_id)));
            }
            if r.label != want {
                return Err(Phase2Error::InvalidPair(format!("run {} labelled {}", r.run_id, r.label.as_str())));
            }
            if !r.cache.check_shape(shape.0, shape.1, shape.2) || r.logits.len() != shape.0 || r.tokens.len() != shape.0 {
                return Err(Phase2Error::InvalidPair(format!("run {} has a different shape", r.run_id)));
            }
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        self.correct[0].cache.n_steps()
    }

    pub fn n_layers(&self) -> usize {
        self.correct[0].cache.n_layers()
    }

    pub fn runs(&self) -> impl Iterator<Item = &RunRecord> {
        self.correct.iter().chain(&self.hallucinated)
    }

    /// Regroups bundles of one prompt; Other-labelled runs are skipped.
    pub fn from_bundles(prompt: Vec<u32>, bundles: &[TraceBundle]) -> Result<Self> {
        let first = bundles.first().ok_or_else(|| Phase2Error::InvalidPair("no bundles".into()))?;
        let mut pair = RunPair { prompt_id: first.meta.prompt_id, prompt, correct: vec![], hallucinated: vec![], attempts: bundles.len() };
        for b in bundles {
            let r = RunRecord::from_bundle(b)?;
            match r.label {
                Label::Correct => pair.correct.push(r),
                Label::Hallucination => pair.hallucinated.push(r),
                Label::Other => {}
            }
        }
        pair.validate()?;
        Ok(pair)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CollectConfig {
    pub k: usize,
    pub temperature: f64,
    pub n_steps: usize,
    pub max_attempts: usize,
    pub master_seed: u64,
}

impl Default for CollectConfig {
    fn default() -> Self {
        CollectConfig { k: 6, temperature: 0.7, n_steps: 24, max_attempts: 200, master_seed: 0 }
    }
}

fn one_run(engine: &Engine, vocab: &Vocab, spec: &PromptSpec, prompt: &[u32], cfg: &CollectConfig, attempt: usize) -> Result<RunRecord> {
    let seed = run_seed(cfg.master_seed, u64::from(spec.id), attempt as u64);
    let g = generate(engine, prompt, cfg.n_steps, cfg.temperature, seed, &HookSpec::capture(), &[])?;
    Ok(RunRecord {
        prompt_id: spec.id,
        run_id: attempt as u32,
        seed,
        label: spec.classify(&vocab.decode(&g.tokens)),
        tokens: g.tokens,
        cache: g.cache.expect("capture requested"),
        logits: g.step_logits,
    })
}

/// Samples until K runs of each class are cached. Attempts run in parallel
/// batches but are consumed in attempt order, so the pair does not depend on
/// scheduling.
pub fn collect_runs(engine: &Engine, vocab: &Vocab, spec: &PromptSpec, cfg: &CollectConfig) -> Result<RunPair> {
    if cfg.k < 2 {
        return Err(Phase2Error::TooFewRuns(cfg.k));
    }
    if cfg.max_attempts < 2 * cfg.k {
        return Err(Phase2Error::Budget { budget: cfg.max_attempts, need: 2 * cfg.k });
    }
    let prompt = spec.token_ids(vocab).map_err(|e| Phase2Error::Tokenize(e.to_string()))?;
    let mut pair = RunPair { prompt_id: spec.id, prompt: prompt.clone(), correct: vec![], hallucinated: vec![], attempts: 0 };
    let batch = (2 * cfg.k).max(rayon::current_num_threads());
    let mut next = 0;
    while next < cfg.max_attempts {
        let end = (next + batch).min(cfg.max_attempts);
        let runs: Vec<RunRecord> = (next..end).into_par_iter().map(|a| one_run(engine, vocab, spec, &prompt, cfg, a)).collect::<Result<_>>()?;
        for r in runs {
            pair.attempts += 1;
            match r.label {
                Label::Correct if pair.correct.len() < cfg.k => pair.correct.push(r),
                Label::Hallucination if pair.hallucinated.len() < cfg.k => pair.hallucinated.push(r),
                _ => {}
            }
            if pair.correct.len() == cfg.k && pair.hallucinated.len() == cfg.k {
                return Ok(pair);
            }
        }
        next = end;
    }
    let class = if pair.correct.len() < cfg.k { "correct" } else { "hallucination" };
    Err(Phase2Error::ClassUnreachable { class, attempts: pair.attempts })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KlCurve {
    pub kl: Vec<f64>,
    pub onset: Option<usize>,
}

pub fn onset(kl: &[f64], threshold: f64) -> Option<usize> {
    kl.iter().position(|&v| v > threshold)
}

/// KL(mean hallucinated || mean correct) of the temperature-1 softmax at each step.
pub fn kl_curve(pair: &RunPair, threshold: f64) -> Result<KlCurve> {
    pair.validate()?;
    let mean_at = |runs: &[RunRecord], t: usize| -> Result<Distribution> {
        let parts: Vec<Distribution> = runs.iter().map(|r| Distribution::softmax(&r.logits[t], 1.0)).collect();
        Ok(Distribution::mixture(&parts)?)
    };
    let kl = (0..pair.n_steps())
        .map(|t| Ok(kl_divergence(&mean_at(&pair.hallucinated, t)?, &mean_at(&pair.correct, t)?)?))
        .collect::<Result<Vec<f64>>>()?;
    let onset = onset(&kl, threshold);
    Ok(KlCurve { kl, onset })
}

/// `cells[l][t]`; `None` marks a cell whose pooled spread is zero while the
/// class means differ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub cells: Vec<Vec<Option<f64>>>,
}

impl Heatmap {
    pub fn get(&self, layer: usize, step: usize) -> Option<f64> {
        self.cells[layer][step]
    }
}

fn vectors(runs: &[RunRecord], step: usize, layer: usize) -> Vec<Vec<f64>> {
    runs.iter().map(|r| r.cache.get(step, layer).iter().map(|&v| f64::from(v)).collect()).collect()
}

pub fn cohens_d_heatmap(pair: &RunPair) -> Result<Heatmap> {
    pair.validate()?;
    let (l_n, t_n) = (pair.n_layers(), pair.n_steps());
    let cells = (0..l_n)
        .into_par_iter()
        .map(|l| {
            (0..t_n)
                .map(|t| match cohens_d_multivariate(&vectors(&pair.correct, t, l), &vectors(&pair.hallucinated, t, l)) {
                    Ok(d) => Ok(Some(d)),
                    Err(StatsError::DegenerateSpread) => Ok(None),
                    Err(e) => Err(e.into()),
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Heatmap { cells })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub layer: usize,
    pub run: usize,
    pub label: Label,
    pub step: usize,
    pub coords: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectories {
    /// Runs are indexed correct first, then hallucinated.
    pub points: Vec<TrajectoryPoint>,
    /// Per-class mean path; `run` holds 0 for correct and 1 for hallucinated.
    pub means: Vec<TrajectoryPoint>,
}

/// Projects every (run, step) vector at each layer onto a PCA basis fit over
/// both classes together.
pub fn pca_trajectories(pair: &RunPair, layers: &[usize], n_components: usize) -> Result<Trajectories> {
    pair.validate()?;
    let runs: Vec<&RunRecord> = pair.runs().collect();
    let t_n = pair.n_steps();
    let d = pair.correct[0].cache.d_model();
    let mut out = Trajectories { points: vec![], means: vec![] };
    for &layer in layers {
        if layer >= pair.n_layers() {
            return Err(Phase2Error::InvalidPair(format!("layer {layer} out of range")));
        }
        let x = DMatrix::from_fn(runs.len() * t_n, d, |i, j| f64::from(runs[i / t_n].cache.get(i % t_n, layer)[j]));
        let z = pca_fit(&x, n_components)?.transform(&x);
        for (ri, r) in runs.iter().enumerate() {
            for t in 0..t_n {
                out.points.push(TrajectoryPoint { layer, run: ri, label: r.label, step: t, coords: z.row(ri * t_n + t).iter().copied().collect() });
            }
        }
        for (ci, label) in [Label::Correct, Label::Hallucination].into_iter().enumerate() {
            let members: Vec<usize> = (0..runs.len()).filter(|&i| runs[i].label == label).collect();
            for t in 0..t_n {
                let mut m = vec![0.0; n_components];
                for &i in &members {
                    for (a, v) in m.iter_mut().zip(z.row(i * t_n + t).iter()) {
                        *a += v;
                    }
                }
                m.iter_mut().for_each(|a| *a /= members.len() as f64);
                out.means.push(TrajectoryPoint { layer, run: ci, label, step: t, coords: m });
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceResult {
    pub prompt_id: u32,
    pub kl: KlCurve,
    pub heatmap: Heatmap,
    pub trajectories: Trajectories,
}

pub fn analyze(pair: &RunPair, threshold: f64, pca_layers: &[usize]) -> Result<DivergenceResult> {
    Ok(DivergenceResult {
        prompt_id: pair.prompt_id,
        kl: kl_curve(pair, threshold)?,
        heatmap: cohens_d_heatmap(pair)?,
        trajectories: pca_trajectories(pair, pca_layers, 2.min(2 * pair.correct.len() * pair.n_steps()))?,
    })
}

fn write_csv<I: IntoIterator<Item = Vec<String>>>(header: &[&str], rows: I) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

impl DivergenceResult {
    pub fn kl_csv(&self) -> String {
        write_csv(&["step", "kl"], self.kl.kl.iter().enumerate().map(|(t, v)| vec![t.to_string(), format!("{v:.9}")]))
    }

    pub fn heatmap_csv(&self) -> String {
        let rows = self.heatmap.cells.iter().enumerate().flat_map(|(l, row)| {
            row.iter().enumerate().map(move |(t, d)| vec![l.to_string(), t.to_string(), d.map_or("nan".into(), |d| format!("{d:.9}"))])
        });
        write_csv(&["layer", "step", "d"], rows)
    }

    pub fn trajectory_csv(&self) -> String {
        let rows = self.trajectories.points.iter().map(|p| {
            let c = |i: usize| p.coords.get(i).map_or(String::new(), |v| format!("{v:.9}"));
            vec![p.layer.to_string(), p.run.to_string(), p.label.as_str().into(), p.step.to_string(), c(0), c(1)]
        });
        write_csv(&["layer", "run", "class", "step", "pc1", "pc2"], rows)
    }
}
