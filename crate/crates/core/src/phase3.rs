//! Activation patching between runs of the same prompt, with controls,
//! layer/step/window sweeps and direction ablation.

use rand::seq::IndexedRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Label, PromptSpec};
use crate::fixtures::{ControlCount, LayerCount};
use crate::model::{generate, Engine, HookSpec, Intervention, ModelError};
use crate::phase1::Counts;
use crate::phase2::RunPair;
use crate::phase2::RunRecord;
use crate::rng::{derive_seed, rng_from_seed};
use crate::stats::{fisher_exact_two_sided, mean, sample_std, wilson_ci, CountTable2x2, OddsRatio, StatsError};
use crate::vocab::Vocab;

#[derive(Debug, Error)]
pub enum Phase3Error {
    #[error("cache does not cover layer {layer}, step {step}")]
    Coverage { layer: usize, step: usize },
    #[error("{condition} needs a {want} target, run {run} is {got}")]
    ClassMismatch { condition: &'static str, want: &'static str, got: &'static str, run: u32 },
    #[error("invalid source: {0}")]
    Source(String),
    #[error("invalid step set: {0}")]
    Steps(String),
    #[error("empty sweep: {0}")]
    Empty(&'static str),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

pub type Result<T> = std::result::Result<T, Phase3Error>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatchCondition {
    /// Correct source into a hallucinated target.
    #[serde(rename = "correction_htoc")]
    CorrectionHtoC,
    /// Hallucinated source into a correct target.
    #[serde(rename = "corruption_ctoh")]
    CorruptionCtoH,
    /// A correct run of a different prompt into a hallucinated target.
    RandomClean,
    /// Another hallucinated run of the same prompt.
    WrongToWrong,
    /// Free resample, no forcing and no patch.
    Baseline,
}

impl PatchCondition {
    pub const ALL: [PatchCondition; 5] = [
        PatchCondition::CorrectionHtoC,
        PatchCondition::CorruptionCtoH,
        PatchCondition::RandomClean,
        PatchCondition::WrongToWrong,
        PatchCondition::Baseline,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PatchCondition::CorrectionHtoC => "correction_htoc",
            PatchCondition::CorruptionCtoH => "corruption_ctoh",
            PatchCondition::RandomClean => "random_clean",
            PatchCondition::WrongToWrong => "wrong_to_wrong",
            PatchCondition::Baseline => "baseline",
        }
    }

    pub fn target_label(self) -> Label {
        match self {
            PatchCondition::CorruptionCtoH => Label::Correct,
            _ => Label::Hallucination,
        }
    }

    /// The class a trial must land in to count as flipped.
    pub fn flip_label(self) -> Label {
        match self {
            PatchCondition::CorruptionCtoH => Label::Hallucination,
            _ => Label::Correct,
        }
    }

    fn tag(self) -> u64 {
        self as u64 + 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchTrial {
    pub condition: PatchCondition,
    pub prompt_id: u32,
    pub target_run: u32,
    pub source: Option<(u32, u32)>,
    pub layer: usize,
    pub steps: Vec<usize>,
    pub trial_seed: u64,
    pub tokens: Vec<u32>,
    pub outcome: Label,
    pub flipped: bool,
    pub abstained: bool,
}

/// Sorted, de-duplicated, non-empty.
pub fn normalize_steps(steps: &[usize]) -> Result<Vec<usize>> {
    let mut s = steps.to_vec();
    s.sort_unstable();
    s.dedup();
    if s.is_empty() {
        return Err(Phase3Error::Steps("no steps".into()));
    }
    Ok(s)
}

/// Generation settings shared by every trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrialConfig {
    pub temperature: f64,
    /// Generated tokens per trial; 0 means the target run's length.
    pub n_steps: usize,
}

impl Default for TrialConfig {
    fn default() -> Self {
        TrialConfig { temperature: 0.7, n_steps: 0 }
    }
}

/// One patched (or, for Baseline, freely resampled) generation.
///
/// The target's cached tokens are forced for every step before the first
/// patched step, then `source.resid[t][layer]` replaces the target's residual
/// at each patched step `t` and sampling continues from `trial_seed`.
#[allow(clippy::too_many_arguments)]
pub fn run_patch_trial(
    engine: &Engine,
    vocab: &Vocab,
    spec: &PromptSpec,
    prompt: &[u32],
    target: &RunRecord,
    source: Option<&RunRecord>,
    condition: PatchCondition,
    layer: usize,
    steps: &[usize],
    trial_seed: u64,
    cfg: &TrialConfig,
) -> Result<PatchTrial> {
    let want = condition.target_label();
    if target.label != want {
        return Err(Phase3Error::ClassMismatch { condition: condition.as_str(), want: want.as_str(), got: target.label.as_str(), run: target.run_id });
    }
    let steps = normalize_steps(steps)?;
    let n_steps = if cfg.n_steps == 0 { target.tokens.len() } else { cfg.n_steps };
    let mut hooks = HookSpec::none();
    let mut forced: &[u32] = &[];
    if condition != PatchCondition::Baseline {
        let source = source.ok_or_else(|| Phase3Error::Source(format!("{} needs a source run", condition.as_str())))?;
        check_source(condition, target, source)?;
        let last = *steps.last().expect("non-empty");
        for run in [target, source] {
            if layer >= run.cache.n_layers() || last >= run.cache.n_steps() || last >= n_steps {
                return Err(Phase3Error::Coverage { layer, step: last });
            }
        }
        forced = &target.tokens[..steps[0]];
        for &t in &steps {
            hooks = hooks.with(Intervention::Patch { layer, step: t, vector: source.cache.get(t, layer).to_vec() });
        }
    }
    let g = generate(engine, prompt, n_steps, cfg.temperature, trial_seed, &hooks, forced)?;
    let outcome = spec.classify(&vocab.decode(&g.tokens));
    Ok(PatchTrial {
        condition,
        prompt_id: target.prompt_id,
        target_run: target.run_id,
        source: source.filter(|_| condition != PatchCondition::Baseline).map(|s| (s.prompt_id, s.run_id)),
        layer,
        steps,
        trial_seed,
        tokens: g.tokens,
        outcome,
        flipped: outcome == condition.flip_label(),
        abstained: outcome == Label::Other,
    })
}

fn check_source(condition: PatchCondition, target: &RunRecord, source: &RunRecord) -> Result<()> {
    let same_prompt = source.prompt_id == target.prompt_id;
    let bad = |m: &str| Err(Phase3Error::Source(format!("{}: {m}", condition.as_str())));
    match condition {
        PatchCondition::RandomClean if same_prompt => bad("source must come from another prompt"),
        PatchCondition::RandomClean if source.label != Label::Correct => bad("source must be correct"),
        PatchCondition::WrongToWrong if !same_prompt || source.run_id == target.run_id => bad("source must be another run of the prompt"),
        PatchCondition::WrongToWrong if source.label != Label::Hallucination => bad("source must be hallucinated"),
        PatchCondition::CorrectionHtoC | PatchCondition::CorruptionCtoH if !same_prompt => bad("source must share the prompt"),
        _ => Ok(()),
    }
}

/// A prompt with its collected runs.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchPrompt {
    pub spec: PromptSpec,
    pub pair: RunPair,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub condition: PatchCondition,
    pub layer: usize,
    pub steps: Vec<usize>,
    pub n_trials: u64,
    pub flips: u64,
    pub abstains: u64,
    /// Neither flipped nor abstained.
    pub remained: u64,
    pub flip_rate: f64,
    pub abstain_rate: f64,
    pub ci: (f64, f64),
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub errors: Vec<String>,
}

impl SweepCell {
    pub fn from_counts(condition: PatchCondition, layer: usize, steps: Vec<usize>, flips: u64, abstains: u64, n: u64) -> Result<Self> {
        if flips + abstains > n {
            return Err(Phase3Error::Steps(format!("{flips} flips + {abstains} abstains exceed {n} trials")));
        }
        let rate = |k: u64| if n == 0 { 0.0 } else { k as f64 / n as f64 };
        let ci = if n == 0 { (0.0, 1.0) } else { wilson_ci(flips, n, 0.95)? };
        Ok(SweepCell {
            condition,
            layer,
            steps,
            n_trials: n,
            flips,
            abstains,
            remained: n - flips - abstains,
            flip_rate: rate(flips),
            abstain_rate: rate(abstains),
            ci,
            errors: Vec::new(),
        })
    }

    fn from_trials(condition: PatchCondition, layer: usize, steps: Vec<usize>, trials: &[PatchTrial], errors: Vec<String>) -> Result<Self> {
        let flips = trials.iter().filter(|t| t.flipped).count() as u64;
        let abstains = trials.iter().filter(|t| t.abstained).count() as u64;
        let mut c = SweepCell::from_counts(condition, layer, steps, flips, abstains, trials.len() as u64)?;
        c.errors = errors;
        Ok(c)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub cells: Vec<SweepCell>,
    pub trials: Vec<PatchTrial>,
}

impl SweepResult {
    pub fn cell(&self, condition: PatchCondition, layer: usize, steps: &[usize]) -> Option<&SweepCell> {
        self.cells.iter().find(|c| c.condition == condition && c.layer == layer && c.steps == steps)
    }

    fn extend(&mut self, (cell, trials): (SweepCell, Vec<PatchTrial>)) {
        self.cells.push(cell);
        self.trials.extend(trials);
    }

    /// One JSON object per trial.
    pub fn trials_jsonl(&self) -> String {
        self.trials.iter().map(|t| serde_json::to_string(t).expect("trial serializes") + "\n").collect()
    }
}

/// Drives trials over a fixed prompt set. Per (condition, prompt, trial) the
/// target/source choice and the trial seed depend only on the master seed,
/// so cells of one sweep are paired and Baseline does not depend on layer.
pub struct Patcher<'a> {
    pub engine: &'a Engine,
    pub vocab: &'a Vocab,
    pub prompts: &'a [PatchPrompt],
    pub trials_per_prompt: usize,
    pub master_seed: u64,
    pub trial: TrialConfig,
}

type Pick<'p> = (&'p RunRecord, Option<&'p RunRecord>, u64);

impl<'a> Patcher<'a> {
    fn pick(&self, condition: PatchCondition, i: usize, j: usize) -> Result<Pick<'a>> {
        let p = &self.prompts[i];
        let id = u64::from(p.spec.id);
        let mut rng = rng_from_seed(derive_seed(self.master_seed, &[0x9a7c, condition.tag(), id, j as u64]));
        let seed = derive_seed(self.master_seed, &[0x7e1a, condition.tag(), id, j as u64]);
        let (c, h) = (&p.pair.correct, &p.pair.hallucinated);
        let none = |what: &str| Phase3Error::Source(format!("prompt {}: no {what}", p.spec.id));
        Ok(match condition {
            PatchCondition::CorrectionHtoC => (h.choose(&mut rng).ok_or_else(|| none("hallucinated run"))?, c.choose(&mut rng), seed),
            PatchCondition::CorruptionCtoH => (c.choose(&mut rng).ok_or_else(|| none("correct run"))?, h.choose(&mut rng), seed),
            PatchCondition::Baseline => (h.choose(&mut rng).ok_or_else(|| none("hallucinated run"))?, None, seed),
            PatchCondition::WrongToWrong => {
                if h.len() < 2 {
                    return Err(none("second hallucinated run"));
                }
                let a = rng.random_range(0..h.len());
                let b = (a + rng.random_range(1..h.len())) % h.len();
                (&h[a], Some(&h[b]), seed)
            }
            PatchCondition::RandomClean => {
                if self.prompts.len() < 2 {
                    return Err(none("other prompt"));
                }
                let target = h.choose(&mut rng).ok_or_else(|| none("hallucinated run"))?;
                let other = (i + rng.random_range(1..self.prompts.len())) % self.prompts.len();
                (target, self.prompts[other].pair.correct.choose(&mut rng), seed)
            }
        })
    }

    pub fn n_layers(&self) -> usize {
        self.engine.config().n_layers
    }

    /// All trials of one (condition, layer, steps) cell. Failed trials are
    /// recorded in the cell and left out of its counts.
    pub fn cell(&self, condition: PatchCondition, layer: usize, steps: &[usize]) -> Result<(SweepCell, Vec<PatchTrial>)> {
        let steps = normalize_steps(steps)?;
        let jobs: Vec<(usize, usize)> = (0..self.prompts.len()).flat_map(|i| (0..self.trials_per_prompt).map(move |j| (i, j))).collect();
        let results: Vec<Result<PatchTrial>> = jobs
            .par_iter()
            .map(|&(i, j)| {
                let (target, source, seed) = self.pick(condition, i, j)?;
                let p = &self.prompts[i];
                run_patch_trial(self.engine, self.vocab, &p.spec, &p.pair.prompt, target, source, condition, layer, &steps, seed, &self.trial)
            })
            .collect();
        let mut trials = Vec::with_capacity(results.len());
        let mut errors = Vec::new();
        for r in results {
            match r {
                Ok(t) => trials.push(t),
                Err(e) => errors.push(e.to_string()),
            }
        }
        if !errors.is_empty() {
            log::warn!("{} layer {layer}: {} failed trials, first: {}", condition.as_str(), errors.len(), errors[0]);
        }
        Ok((SweepCell::from_trials(condition, layer, steps, &trials, errors)?, trials))
    }

    pub fn layer_sweep(&self, conditions: &[PatchCondition], step: usize, layers: &[usize]) -> Result<SweepResult> {
        let mut out = SweepResult::default();
        for &c in conditions {
            for &l in layers {
                out.extend(self.cell(c, l, &[step])?);
            }
        }
        Ok(out)
    }

    pub fn step_sweep(&self, conditions: &[PatchCondition], layer: usize, steps: &[usize]) -> Result<SweepResult> {
        let mut out = SweepResult::default();
        for &c in conditions {
            for &t in steps {
                out.extend(self.cell(c, layer, &[t])?);
            }
        }
        Ok(out)
    }

    pub fn window_sweep(&self, conditions: &[PatchCondition], layer: usize, windows: &[Vec<usize>]) -> Result<SweepResult> {
        let mut out = SweepResult::default();
        for &c in conditions {
            for w in windows {
                out.extend(self.cell(c, layer, w)?);
            }
        }
        Ok(out)
    }

    /// Free runs with and without projecting `direction` out at the given
    /// layers and steps, paired by seed.
    pub fn ablate_direction(&self, direction: &[f64], layers: &[usize], steps: &[usize]) -> Result<AblationResult> {
        let hooks = HookSpec::none().with(Intervention::ProjectOut { direction: direction.to_vec(), layers: layers.to_vec(), steps: steps.to_vec() });
        let n_steps = |p: &PatchPrompt| if self.trial.n_steps == 0 { p.pair.n_steps() } else { self.trial.n_steps };
        let jobs: Vec<(usize, usize)> = (0..self.prompts.len()).flat_map(|i| (0..self.trials_per_prompt).map(move |j| (i, j))).collect();
        let trials = jobs
            .par_iter()
            .map(|&(i, j)| {
                let p = &self.prompts[i];
                let seed = derive_seed(self.master_seed, &[0xab1a, u64::from(p.spec.id), j as u64]);
                let label = |h: &HookSpec| -> Result<Label> {
                    let g = generate(self.engine, &p.pair.prompt, n_steps(p), self.trial.temperature, seed, h, &[])?;
                    Ok(p.spec.classify(&self.vocab.decode(&g.tokens)))
                };
                Ok(AblationTrial { prompt_id: p.spec.id, seed, baseline: label(&HookSpec::none())?, ablated: label(&hooks)? })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut r = AblationResult { n: trials.len(), baseline: Counts::default(), ablated: Counts::default(), changed: 0, change_rate: 0.0, trials };
        for t in &r.trials {
            r.baseline.add(t.baseline);
            r.ablated.add(t.ablated);
            r.changed += usize::from(t.baseline != t.ablated);
        }
        r.change_rate = if r.n == 0 { 0.0 } else { r.changed as f64 / r.n as f64 };
        Ok(r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationTrial {
    pub prompt_id: u32,
    pub seed: u64,
    pub baseline: Label,
    pub ablated: Label,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationResult {
    pub n: usize,
    pub baseline: Counts,
    pub ablated: Counts,
    /// Trials whose label differs from the unablated run with the same seed.
    pub changed: usize,
    pub change_rate: f64,
    pub trials: Vec<AblationTrial>,
}

/// Normalised difference of class means, hallucinated minus correct.
pub fn mean_difference_direction(pair: &RunPair, layer: usize, step: usize) -> Result<Vec<f64>> {
    if layer >= pair.n_layers() || step >= pair.n_steps() {
        return Err(Phase3Error::Coverage { layer, step });
    }
    let d = pair.correct[0].cache.d_model();
    let centroid = |runs: &[RunRecord]| -> Vec<f64> {
        let mut m = vec![0.0; d];
        for r in runs {
            for (a, &v) in m.iter_mut().zip(r.cache.get(step, layer)) {
                *a += f64::from(v) / runs.len() as f64;
            }
        }
        m
    };
    let (c, h) = (centroid(&pair.correct), centroid(&pair.hallucinated));
    let mut dir: Vec<f64> = h.iter().zip(&c).map(|(a, b)| a - b).collect();
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Phase3Error::Stats(StatsError::Precondition("class means coincide".into())));
    }
    dir.iter_mut().for_each(|v| *v /= norm);
    Ok(dir)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub p_value: f64,
    /// `None` when undefined (a*d = b*c = 0); infinite when only b*c = 0.
    pub odds_ratio: Option<f64>,
}

/// Fisher exact test of flip counts, `a` against `b`.
pub fn compare_rates(a_flips: u64, a_n: u64, b_flips: u64, b_n: u64) -> Result<Comparison> {
    let f = fisher_exact_two_sided(CountTable2x2::from_rates(a_flips, a_n, b_flips, b_n)?);
    let odds_ratio = match f.odds_ratio {
        OddsRatio::Finite(v) => Some(v),
        OddsRatio::Infinite => Some(f64::INFINITY),
        OddsRatio::Undefined => None,
    };
    Ok(Comparison { p_value: f.p_value, odds_ratio })
}

pub fn compare(a: &SweepCell, b: &SweepCell) -> Result<Comparison> {
    compare_rates(a.flips, a.n_trials, b.flips, b.n_trials)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlRow {
    pub condition: String,
    pub flips: u64,
    pub n: u64,
    pub rate: f64,
    pub ci: (f64, f64),
    /// Matched condition against this row; absent on the matched row itself.
    pub vs_matched: Option<Comparison>,
}

/// Rows in input order; the first row is the matched condition.
pub fn control_table(rows: &[(String, u64, u64)]) -> Result<Vec<ControlRow>> {
    let (_, mk, mn) = rows.first().cloned().ok_or(Phase3Error::Empty("control table"))?;
    rows.iter()
        .enumerate()
        .map(|(i, (name, k, n))| {
            Ok(ControlRow {
                condition: name.clone(),
                flips: *k,
                n: *n,
                rate: *k as f64 / *n as f64,
                ci: wilson_ci(*k, *n, 0.95)?,
                vs_matched: if i == 0 { None } else { Some(compare_rates(mk, mn, *k, *n)?) },
            })
        })
        .collect()
}

pub fn control_table_from_fixture(rows: &[ControlCount]) -> Result<Vec<ControlRow>> {
    control_table(&rows.iter().map(|r| (r.condition.clone(), u64::from(r.flips), u64::from(r.n))).collect::<Vec<_>>())
}

pub fn control_csv(rows: &[ControlRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["condition", "flips", "n", "rate", "ci_low", "ci_high", "fisher_p", "odds_ratio"]).expect("in-memory");
    for r in rows {
        let (p, or) = match r.vs_matched {
            Some(c) => (format!("{:.6}", c.p_value), c.odds_ratio.map_or("undefined".into(), |v| format!("{v:.6}"))),
            None => (String::new(), String::new()),
        };
        w.write_record([r.condition.clone(), r.flips.to_string(), r.n.to_string(), format!("{:.6}", r.rate), format!("{:.6}", r.ci.0), format!("{:.6}", r.ci.1), p, or])
            .expect("in-memory");
    }
    String::from_utf8(w.into_inner().expect("in-memory")).expect("utf-8")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymmetrySummary {
    pub peak_ctoh: f64,
    pub peak_htoc: f64,
    /// Peak corruption over peak correction.
    pub peak_ratio: f64,
    pub mean_ctoh: f64,
    pub std_ctoh: f64,
    pub mean_htoc: f64,
    pub std_htoc: f64,
    pub mean_ratio: f64,
}

/// Per-layer flip rates of both directions. Standard deviations are Bessel-corrected.
pub fn asymmetry_summary(ctoh: &[f64], htoc: &[f64]) -> Result<AsymmetrySummary> {
    if ctoh.is_empty() {
        return Err(Phase3Error::Empty("corruption sweep"));
    }
    if htoc.is_empty() {
        return Err(Phase3Error::Empty("correction sweep"));
    }
    let peak = |v: &[f64]| v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (peak_ctoh, peak_htoc) = (peak(ctoh), peak(htoc));
    let (mean_ctoh, mean_htoc) = (mean(ctoh), mean(htoc));
    Ok(AsymmetrySummary {
        peak_ctoh,
        peak_htoc,
        peak_ratio: peak_ctoh / peak_htoc,
        mean_ctoh,
        std_ctoh: sample_std(ctoh),
        mean_htoc,
        std_htoc: sample_std(htoc),
        mean_ratio: mean_ctoh / mean_htoc,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Table4Row {
    pub layer: usize,
    pub htoc: f64,
    pub htoc_abstain: f64,
    pub ctoh: f64,
    pub ctoh_abstain: f64,
}

pub fn table4_from_counts(rows: &[LayerCount]) -> Vec<Table4Row> {
    rows.iter()
        .map(|r| {
            let n = f64::from(r.n);
            Table4Row {
                layer: r.layer,
                htoc: f64::from(r.htoc_flips) / n,
                htoc_abstain: f64::from(r.htoc_abstain) / n,
                ctoh: f64::from(r.ctoh_flips) / n,
                ctoh_abstain: f64::from(r.ctoh_abstain) / n,
            }
        })
        .collect()
}

/// Rows for every layer swept in both directions at one step set.
pub fn table4_from_sweep(result: &SweepResult, steps: &[usize]) -> Vec<Table4Row> {
    let mut layers: Vec<usize> = result.cells.iter().map(|c| c.layer).collect();
    layers.sort_unstable();
    layers.dedup();
    layers
        .into_iter()
        .filter_map(|l| {
            let h = result.cell(PatchCondition::CorrectionHtoC, l, steps)?;
            let c = result.cell(PatchCondition::CorruptionCtoH, l, steps)?;
            Some(Table4Row { layer: l, htoc: h.flip_rate, htoc_abstain: h.abstain_rate, ctoh: c.flip_rate, ctoh_abstain: c.abstain_rate })
        })
        .collect()
}

pub fn asymmetry_from_table4(rows: &[Table4Row]) -> Result<AsymmetrySummary> {
    let ctoh: Vec<f64> = rows.iter().map(|r| r.ctoh).collect();
    let htoc: Vec<f64> = rows.iter().map(|r| r.htoc).collect();
    asymmetry_summary(&ctoh, &htoc)
}

pub fn table4_csv(rows: &[Table4Row]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["layer", "HtoC", "HtoC_abstain", "CtoH", "CtoH_abstain"]).expect("in-memory");
    for r in rows {
        w.write_record([r.layer.to_string(), format!("{:.6}", r.htoc), format!("{:.6}", r.htoc_abstain), format!("{:.6}", r.ctoh), format!("{:.6}", r.ctoh_abstain)])
            .expect("in-memory");
    }
    String::from_utf8(w.into_inner().expect("in-memory")).expect("utf-8")
}

/// Per-cell summary CSV for any sweep.
pub fn sweep_csv(result: &SweepResult) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["condition", "layer", "steps", "n", "flips", "abstains", "flip_rate", "abstain_rate", "ci_low", "ci_high", "errors"]).expect("in-memory");
    for c in &result.cells {
        let steps = c.steps.iter().map(usize::to_string).collect::<Vec<_>>().join(" ");
        w.write_record([
            c.condition.as_str().to_string(),
            c.layer.to_string(),
            steps,
            c.n_trials.to_string(),
            c.flips.to_string(),
            c.abstains.to_string(),
            format!("{:.6}", c.flip_rate),
            format!("{:.6}", c.abstain_rate),
            format!("{:.6}", c.ci.0),
            format!("{:.6}", c.ci.1),
            c.errors.len().to_string(),
        ])
        .expect("in-memory");
    }
    String::from_utf8(w.into_inner().expect("in-memory")).expect("utf-8")
}
