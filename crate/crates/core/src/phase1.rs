//! Repeated sampling per prompt, outcome counting and bifurcation status.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Category, Label, PromptSpec};
use crate::fixtures::PromptCount;
use crate::model::{generate, Engine, HookSpec};
use crate::rng::run_seed;
use crate::vocab::Vocab;

#[derive(Debug, Error)]
pub enum Phase1Error {
    #[error("need at least 4 samples per prompt, got {0}")]
    TooFewSamples(usize),
    #[error("temperature must be positive, got {0}")]
    Temperature(f64),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Bifurcating,
    NearBifurcating,
    HallDominant,
    CorrectDominant,
    Indeterminate,
}

impl Status {
    pub const ALL: [Status; 5] =
        [Status::Bifurcating, Status::NearBifurcating, Status::HallDominant, Status::CorrectDominant, Status::Indeterminate];

    /// Bifurcating needs two of each class; near-bifurcating is one short on
    /// either side. The remaining three buckets are ours.
    pub fn from_counts(correct: u32, hallucination: u32) -> Status {
        let (c, h) = (correct, hallucination);
        if c >= 2 && h >= 2 {
            Status::Bifurcating
        } else if (c == 1 && h >= 2) || (h == 1 && c >= 2) {
            Status::NearBifurcating
        } else if c == 0 && h >= 2 {
            Status::HallDominant
        } else if h == 0 && c >= 2 {
            Status::CorrectDominant
        } else {
            Status::Indeterminate
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Status::Bifurcating => "bifurcating",
            Status::NearBifurcating => "near_bifurcating",
            Status::HallDominant => "hall_dominant",
            Status::CorrectDominant => "correct_dominant",
            Status::Indeterminate => "indeterminate",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub correct: u32,
    pub hallucination: u32,
    pub other: u32,
}

impl Counts {
    pub fn total(&self) -> u32 {
        self.correct + self.hallucination + self.other
    }

    pub fn add(&mut self, label: Label) {
        match label {
            Label::Correct => self.correct += 1,
            Label::Hallucination => self.hallucination += 1,
            Label::Other => self.other += 1,
        }
    }

    /// Hallucination fraction H/N; 0 for an empty record.
    pub fn hall_rate(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            n => f64::from(self.hallucination) / f64::from(n),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptOutcome {
    pub prompt_id: u32,
    pub category: Category,
    pub text: String,
    pub counts: Counts,
    pub status: Status,
    /// Per-run labels in run order; empty for replayed counts.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub labels: Vec<Label>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub total: usize,
    pub by_status: BTreeMap<Status, usize>,
}

impl Tally {
    pub fn get(&self, s: Status) -> usize {
        self.by_status.get(&s).copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BifurcationReport {
    pub n_samples: usize,
    pub temperature: f64,
    pub n_steps: usize,
    pub master_seed: u64,
    pub prompts: Vec<PromptOutcome>,
    pub by_category: BTreeMap<Category, Tally>,
    pub overall: Tally,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Phase1Config {
    pub n_samples: usize,
    pub temperature: f64,
    /// Generated tokens per completion.
    pub n_steps: usize,
    pub master_seed: u64,
}

impl Default for Phase1Config {
    fn default() -> Self {
        Phase1Config { n_samples: 20, temperature: 0.7, n_steps: 24, master_seed: 0 }
    }
}

impl BifurcationReport {
    fn assemble(cfg: &Phase1Config, prompts: Vec<PromptOutcome>) -> Self {
        let mut by_category: BTreeMap<Category, Tally> = BTreeMap::new();
        let mut overall = Tally::default();
        for p in &prompts {
            for t in [by_category.entry(p.category).or_default(), &mut overall] {
                t.total += 1;
                *t.by_status.entry(p.status).or_default() += 1;
            }
        }
        BifurcationReport {
            n_samples: cfg.n_samples,
            temperature: cfg.temperature,
            n_steps: cfg.n_steps,
            master_seed: cfg.master_seed,
            prompts,
            by_category,
            overall,
        }
    }

    pub fn count(&self, status: Status) -> usize {
        self.overall.get(status)
    }

    pub fn category_count(&self, category: Category, status: Status) -> usize {
        self.by_category.get(&category).map_or(0, |t| t.get(status))
    }

    pub fn outcome(&self, prompt_id: u32) -> Option<&PromptOutcome> {
        self.prompts.iter().find(|p| p.prompt_id == prompt_id)
    }

    /// One row per prompt: Idx, Category, C, H, O, Bif., Prompt.
    pub fn to_csv(&self) -> Result<String, Phase1Error> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["Idx", "Category", "C", "H", "O", "Bif.", "Prompt"])?;
        for p in &self.prompts {
            let bif = if p.status == Status::Bifurcating { "*" } else { "" };
            w.write_record([
                p.prompt_id.to_string().as_str(),
                p.category.as_str(),
                &p.counts.correct.to_string(),
                &p.counts.hallucination.to_string(),
                &p.counts.other.to_string(),
                bif,
                &p.text,
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Phase1Error::Csv(e.into_error().into()))?;
        Ok(String::from_utf8(bytes).expect("csv writer emits utf-8"))
    }
}

fn run_prompt(engine: &Engine, vocab: &Vocab, spec: &PromptSpec, cfg: &Phase1Config) -> PromptOutcome {
    let mut out = PromptOutcome {
        prompt_id: spec.id,
        category: spec.category,
        text: spec.text.clone(),
        counts: Counts::default(),
        status: Status::Indeterminate,
        labels: Vec::new(),
        error: None,
    };
    let prompt = match spec.token_ids(vocab) {
        Ok(p) => p,
        Err(e) => {
            out.error = Some(e.to_string());
            return out;
        }
    };
    let runs: Result<Vec<Label>, String> = (0..cfg.n_samples)
        .into_par_iter()
        .map(|run| {
            let seed = run_seed(cfg.master_seed, u64::from(spec.id), run as u64);
            let g = generate(engine, &prompt, cfg.n_steps, cfg.temperature, seed, &HookSpec::none(), &[])
                .map_err(|e| e.to_string())?;
            Ok(spec.classify(&vocab.decode(&g.tokens)))
        })
        .collect();
    match runs {
        Ok(labels) => {
            labels.iter().for_each(|&l| out.counts.add(l));
            out.status = Status::from_counts(out.counts.correct, out.counts.hallucination);
            out.labels = labels;
        }
        Err(e) => out.error = Some(e),
    }
    out
}

/// Samples `n_samples` completions per prompt and classifies each prompt.
/// A prompt that fails to tokenize or generate keeps its error in the report.
pub fn run_phase1(
    engine: &Engine,
    vocab: &Vocab,
    dataset: &[PromptSpec],
    cfg: &Phase1Config,
) -> Result<BifurcationReport, Phase1Error> {
    if cfg.n_samples < 4 {
        return Err(Phase1Error::TooFewSamples(cfg.n_samples));
    }
    if !(cfg.temperature > 0.0) {
        return Err(Phase1Error::Temperature(cfg.temperature));
    }
    let prompts: Vec<PromptOutcome> = dataset.par_iter().map(|s| run_prompt(engine, vocab, s, cfg)).collect();
    for p in prompts.iter().filter(|p| p.error.is_some()) {
        log::warn!("prompt {}: {}", p.prompt_id, p.error.as_deref().unwrap_or_default());
    }
    Ok(BifurcationReport::assemble(cfg, prompts))
}

/// Runs the status rules over recorded counts.
pub fn replay_counts(counts: &[PromptCount], temperature: f64) -> BifurcationReport {
    let n = counts.first().map_or(0, |c| c.n() as usize);
    let cfg = Phase1Config { n_samples: n, temperature, n_steps: 0, master_seed: 0 };
    let prompts = counts
        .iter()
        .map(|c| PromptOutcome {
            prompt_id: c.id,
            category: c.category,
            text: String::new(),
            counts: Counts { correct: c.correct, hallucination: c.hallucination, other: c.other },
            status: Status::from_counts(c.correct, c.hallucination),
            labels: Vec::new(),
            error: None,
        })
        .collect();
    BifurcationReport::assemble(&cfg, prompts)
}
