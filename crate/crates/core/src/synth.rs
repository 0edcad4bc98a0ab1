//! Hand-built "fork-and-commit" transformers with exact behavioural oracles.
//!
//! Prompts look like `[fillers.., regime?, query]`. Step 0 emits fork token A or
//! B with a calibrated probability; every later step emits the next token of
//! the chosen branch's continuation, or `other` when the branch state is gone.
//!
//! Residual layout: a `+M/-M` anchor pair that pins the layernorm scale, a
//! zero reference dim that lets every read cancel the layernorm mean exactly,
//! a one-hot token block, a logit block read by the unembedding, branch dims
//! written by content-addressed "fork finder" heads, and regime slots.

use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Category, Label, PromptSpec};
use crate::model::{Block, Engine, HookSpec, KvState, ModelConfig, ModelError, Weights};
use crate::rng::{derive_seed, rng_from_seed};
use crate::vocab::Vocab;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("infeasible fork spec: {0}")]
    Spec(String),
    #[error("calibration did not converge: {0}")]
    Calibration(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("enumeration exceeded {0} nodes")]
    TooLarge(usize),
}

type Result<T> = std::result::Result<T, SynthError>;

/// How the branch identity is held after the fork.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommitMode {
    /// Layer-0 and layer-`commit_layer` heads both copy the fork token's branch.
    /// When they agree the current token's branch is followed; when they
    /// disagree the layer-0 copy wins. A patch carries over iff it lands at a
    /// layer >= `commit_layer`.
    #[default]
    Gated,
    /// Heads at every layer >= `commit_layer` re-read the fork token each step,
    /// the one at `commit_layer` weighted heaviest. A single-step patch at
    /// `commit_layer` is undone on the next step.
    Recommit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForkSpec {
    pub n_layers: usize,
    pub n_heads: usize,
    pub commit_layer: usize,
    pub regime_layer: usize,
    /// Generation length T; continuations have length T - 1.
    pub n_steps: usize,
    /// P(A) at `tau_ref` for prompts without a regime token.
    pub fork_prob: f64,
    pub tau_ref: f64,
    /// P(A) per regime token.
    pub regimes: Vec<f64>,
    /// Probability of `other` at the fork.
    pub noise_other: f64,
    pub n_fillers: usize,
    /// Continuation index whose token decides the label.
    pub indicator_index: usize,
    pub max_seq: usize,
    pub mode: CommitMode,
}

impl Default for ForkSpec {
    fn default() -> Self {
        Self {
            n_layers: 4,
            n_heads: 2,
            commit_layer: 2,
            regime_layer: 0,
            n_steps: 6,
            fork_prob: 0.5,
            tau_ref: 1.0,
            regimes: Vec::new(),
            noise_other: 0.0,
            n_fillers: 8,
            indicator_index: 3,
            max_seq: 64,
            mode: CommitMode::Gated,
        }
    }
}

fn open_unit(p: f64) -> bool {
    p > 0.0 && p < 1.0
}

impl ForkSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(SynthError::Spec(m.to_string()));
        if self.n_layers < 2 {
            return bad("need at least 2 layers");
        }
        if self.n_heads < 2 {
            return bad("need at least 2 heads");
        }
        if self.commit_layer >= self.n_layers {
            return bad("commit_layer must be below n_layers");
        }
        if self.mode == CommitMode::Gated && self.commit_layer == 0 {
            return bad("gated commitment needs commit_layer >= 1");
        }
        if self.regime_layer >= self.n_layers {
            return bad("regime_layer must be below n_layers");
        }
        if self.n_steps < 2 {
            return bad("need at least 2 steps");
        }
        if self.indicator_index + 1 >= self.n_steps {
            return bad("indicator_index must fall inside the continuation");
        }
        if !open_unit(self.fork_prob) || !self.regimes.iter().all(|&p| open_unit(p)) {
            return bad("fork probabilities must lie in (0, 1)");
        }
        if !(0.0..0.5).contains(&self.noise_other) {
            return bad("noise_other must lie in [0, 0.5)");
        }
        if !(self.tau_ref > 0.0 && self.tau_ref.is_finite()) {
            return bad("tau_ref must be positive");
        }
        if self.n_fillers == 0 {
            return bad("need at least one filler token");
        }
        if self.max_seq < self.n_fillers.min(4) + 2 + self.n_steps {
            return bad("max_seq too small for prompt plus generation");
        }
        Ok(())
    }

    pub fn cont_len(&self) -> usize {
        self.n_steps - 1
    }
}

/// Token ids of a fork model's vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForkVocab {
    pub other: u32,
    pub query: u32,
    pub fork_a: u32,
    pub fork_b: u32,
    pub cont_a: Vec<u32>,
    pub cont_b: Vec<u32>,
    pub fillers: Vec<u32>,
    pub regimes: Vec<u32>,
    pub vocab: Vocab,
}

impl ForkVocab {
    fn new(spec: &ForkSpec) -> Self {
        let c = spec.cont_len();
        let mut names = vec![" [other]".to_string(), " [query]".into(), " [fork-a]".into(), " [fork-b]".into()];
        names.extend((0..c).map(|i| format!(" [a{i}]")));
        names.extend((0..c).map(|i| format!(" [b{i}]")));
        names.extend((0..spec.n_fillers).map(|i| format!(" [f{i}]")));
        names.extend((0..spec.regimes.len()).map(|i| format!(" [r{i}]")));
        let ids = |from: usize, n: usize| (from..from + n).map(|i| i as u32).collect::<Vec<_>>();
        Self {
            other: 0,
            query: 1,
            fork_a: 2,
            fork_b: 3,
            cont_a: ids(4, c),
            cont_b: ids(4 + c, c),
            fillers: ids(4 + 2 * c, spec.n_fillers),
            regimes: ids(4 + 2 * c + spec.n_fillers, spec.regimes.len()),
            vocab: Vocab::Table(names),
        }
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    /// +1 for branch A tokens, -1 for branch B tokens, 0 otherwise.
    pub fn group(&self, t: u32) -> i32 {
        if t == self.fork_a || self.cont_a.contains(&t) {
            1
        } else if t == self.fork_b || self.cont_b.contains(&t) {
            -1
        } else {
            0
        }
    }

    /// Position in its branch chain: fork tokens are 0, `cont[i]` is `i + 1`.
    pub fn chain_index(&self, t: u32) -> Option<usize> {
        if t == self.fork_a || t == self.fork_b {
            return Some(0);
        }
        self.cont_a.iter().chain(&self.cont_b).position(|&c| c == t).map(|p| p % self.cont_a.len() + 1)
    }
}

#[derive(Debug, Clone, Copy)]
struct Layout {
    vocab: usize,
    d_model: usize,
}

const ANCHOR_POS: usize = 0;
const ANCHOR_NEG: usize = 1;
const REF: usize = 2;
const ANCHOR: f32 = 10_000.0;

impl Layout {
    fn tok(&self, t: u32) -> usize {
        3 + t as usize
    }
    fn out(&self, t: u32) -> usize {
        3 + self.vocab + t as usize
    }
    /// Branch dims: `k0`/`kc` in gated mode, only `k0` in re-commit mode.
    fn k0(&self) -> usize {
        3 + 2 * self.vocab
    }
    fn kc(&self) -> usize {
        3 + 2 * self.vocab + 1
    }
    fn slot(&self, r: usize) -> usize {
        3 + 2 * self.vocab + 2 + r
    }
    fn used(vocab: usize, n_regimes: usize) -> usize {
        3 + 2 * vocab + 2 + n_regimes
    }
}

// Readout constants. An AND unit fires at pre-activation H/2 with all its
// literals true and sits at <= -H/2 otherwise.
const H: f64 = 8.0;
const G: f64 = 20.0;
const OUT_W: f64 = 10.0;
const GATE: f64 = 20.0;
const OTHER_LOGIT: f32 = 10.0;
const FORK_LOGIT: f64 = 25.0;
const SCORE: f64 = 40.0;
// Re-commit heads: the `commit_layer` head writes 1, later heads share 0.6.
const RECOMMIT_LATER: f64 = 0.6;
const H_RECOMMIT: f64 = 40.0;
const RECOMMIT_THRESHOLD: f64 = 0.2;
const MAX_CALIBRATION_ITERS: usize = 30;

fn gelu(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4;
    0.5 * x * (1.0 + (C * (x + 0.044715 * x * x * x)).tanh())
}

/// A built fork model: weights plus everything needed to drive and score it.
#[derive(Debug, Clone)]
pub struct ForkModel {
    pub spec: ForkSpec,
    pub vocab: ForkVocab,
    pub weights: Arc<Weights>,
    layout: Layout,
}

struct Builder<'a> {
    spec: &'a ForkSpec,
    v: &'a ForkVocab,
    lay: Layout,
    w: Weights,
    d_head: usize,
}

impl Builder<'_> {
    fn head_attend(&mut self, layer: usize, head: usize, keys: &[u32], values: &[(u32, usize, f64)], writes: &[(usize, usize, f64)]) {
        let dh = self.d_head;
        let kappa = (SCORE * (dh as f64).sqrt()).sqrt();
        let base = head * dh;
        let lay = self.lay;
        let b: &mut Block = &mut self.w.blocks[layer];
        b.b_q[base] = kappa as f32;
        for &t in keys {
            b.w_k.set(lay.tok(t), base, kappa as f32);
        }
        for &(t, j, val) in values {
            b.w_v.set(lay.tok(t), base + j, val as f32);
        }
        for &(j, dim, val) in writes {
            b.w_o.set(base + j, dim, val as f32);
        }
    }

    fn fork_finder(&mut self, layer: usize, dim: usize, weight: f64) {
        let (a, b) = (self.v.fork_a, self.v.fork_b);
        self.head_attend(layer, 1, &[a, b], &[(a, 1, 1.0), (b, 1, -1.0)], &[(1, dim, weight)]);
    }

    fn unit(&mut self, j: usize, reads: &[(usize, f64)], bias: f64, writes: &[(usize, f64)]) {
        let last = self.spec.n_layers - 1;
        let b = &mut self.w.blocks[last];
        for &(dim, val) in reads {
            let cur = b.w_in.get(dim, j);
            b.w_in.set(dim, j, cur + val as f32);
        }
        b.b_in[j] = bias as f32;
        for &(dim, val) in writes {
            b.w_out.set(j, dim, val as f32);
        }
    }

    /// Rows of the reference dim make every column sum to zero, so the mean
    /// subtracted by layernorm cancels out of every read.
    fn cancel_means(&mut self) {
        fn cancel(m: &mut crate::model::Mat) {
            for c in 0..m.cols {
                m.set(REF, c, 0.0);
                let s: f64 = (0..m.rows).map(|r| m.get(r, c) as f64).sum();
                m.set(REF, c, -s as f32);
            }
        }
        for b in &mut self.w.blocks {
            cancel(&mut b.w_q);
            cancel(&mut b.w_k);
            cancel(&mut b.w_v);
            cancel(&mut b.w_in);
        }
        cancel(&mut self.w.unembed);
    }
}

/// Indices of the calibrated readout units.
const UNIT_Q: usize = 0;
fn unit_regime(r: usize) -> usize {
    1 + r
}

fn gap(p: f64, tau: f64) -> f64 {
    tau * (p / (1.0 - p)).ln()
}


/// Step-0 distribution of one prompt context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextDist {
    pub regime: Option<usize>,
    pub p_a: f64,
    pub p_b: f64,
    pub p_other: f64,
    pub probs: Vec<f64>,
}

/// Exact reference behaviour of a built fork model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForkOracle {
    pub spec: ForkSpec,
    pub vocab: ForkVocab,
    /// Step-0 distributions at `tau_ref`: no regime first, then one per regime.
    pub step0: Vec<ContextDist>,
    /// Probability that patching a branch-B run with the branch-A run's state
    /// at `[layer][step]` ends in the A label (forced target prefix before the step).
    pub patch_flip: Vec<Vec<f64>>,
}

/// Exact outcome masses; `pruned` is probability dropped below the enumeration floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeDist {
    pub p_a: f64,
    pub p_b: f64,
    pub p_other: f64,
    pub pruned: f64,
}

pub const ENUMERATION_FLOOR: f64 = 1e-12;
const MAX_NODES: usize = 200_000;

impl ForkModel {
    pub fn engine(&self) -> Engine {
        Engine::new(self.weights.clone())
    }

    pub fn config(&self) -> &ModelConfig {
        &self.weights.config
    }

    pub fn prompt(&self, regime: Option<usize>, fillers: &[u32]) -> Vec<u32> {
        let mut p = fillers.to_vec();
        if let Some(r) = regime {
            p.push(self.vocab.regimes[r]);
        }
        p.push(self.vocab.query);
        p
    }

    fn canonical_prompt(&self, regime: Option<usize>) -> Vec<u32> {
        self.prompt(regime, &self.vocab.fillers[..1])
    }

    fn indicator(&self, cont: &[u32]) -> String {
        let name = self.vocab.vocab.decode(&[cont[self.spec.indicator_index]]);
        name.trim().to_string()
    }

    pub fn correct_indicator(&self) -> String {
        self.indicator(&self.vocab.cont_a)
    }

    pub fn wrong_indicator(&self) -> String {
        self.indicator(&self.vocab.cont_b)
    }

    pub fn prompt_spec(&self, id: u32, category: Category, tokens: Vec<u32>) -> PromptSpec {
        PromptSpec {
            id,
            category,
            text: self.vocab.vocab.decode(&tokens),
            correct_indicators: vec![self.correct_indicator()],
            wrong_indicators: vec![self.wrong_indicator()],
            tokens: Some(tokens),
        }
    }

    /// `n` prompts: regimes round-robin, 1-4 seeded random fillers, category by regime.
    pub fn dataset(&self, n: usize, seed: u64) -> Vec<PromptSpec> {
        let mut rng = rng_from_seed(derive_seed(seed, &[0x5e7]));
        let n_regimes = self.spec.regimes.len();
        (0..n)
            .map(|i| {
                let regime = (n_regimes > 0).then(|| i % n_regimes);
                let k = rng.random_range(1..=4);
                let fillers: Vec<u32> = (0..k).map(|_| *self.vocab.fillers.choose(&mut rng).unwrap()).collect();
                let category = Category::ALL[regime.unwrap_or(0) % Category::ALL.len()];
                self.prompt_spec(i as u32, category, self.prompt(regime, &fillers))
            })
            .collect()
    }

    pub fn label(&self, tokens: &[u32]) -> Label {
        let text = self.vocab.vocab.decode(tokens);
        let folded = text.to_lowercase();
        let (c, w) = (self.correct_indicator().to_lowercase(), self.wrong_indicator().to_lowercase());
        match (folded.find(&c), folded.find(&w)) {
            (None, None) => Label::Other,
            (Some(_), None) => Label::Correct,
            (None, Some(_)) => Label::Hallucination,
            (Some(a), Some(b)) if a < b => Label::Correct,
            (Some(a), Some(b)) if b < a => Label::Hallucination,
            _ => Label::Other,
        }
    }

    /// Unit vector spanning the branch-coding dims.
    pub fn branch_direction(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.layout.d_model];
        match self.spec.mode {
            CommitMode::Gated => {
                d[self.layout.k0()] = std::f64::consts::FRAC_1_SQRT_2;
                d[self.layout.kc()] = std::f64::consts::FRAC_1_SQRT_2;
            }
            CommitMode::Recommit => d[self.layout.k0()] = 1.0,
        }
        d
    }

    /// Exact outcome distribution by enumerating every sampled continuation
    /// with probability above [`ENUMERATION_FLOOR`].
    pub fn enumerate(&self, prompt: &[u32], n_steps: usize, tau: f64, hooks: &HookSpec, forced: &[u32]) -> Result<OutcomeDist> {
        oracle_enumerate(self, prompt, n_steps, tau, hooks, forced)
    }

    fn step0(&self, engine: &Engine, regime: Option<usize>) -> Result<ContextDist> {
        let out = engine.forward(&self.canonical_prompt(regime), &mut engine.new_kv())?;
        let probs = crate::model::softmax_f64(&out.logits, self.spec.tau_ref);
        let (a, b) = (probs[self.vocab.fork_a as usize], probs[self.vocab.fork_b as usize]);
        Ok(ContextDist { regime, p_a: a, p_b: b, p_other: 1.0 - a - b, probs })
    }
}

fn build_weights(spec: &ForkSpec, v: &ForkVocab) -> Result<(Weights, Layout)> {
    let n_regimes = spec.regimes.len();
    let vocab = v.len();
    let used = Layout::used(vocab, n_regimes);
    let d_head = used.div_ceil(spec.n_heads).max(n_regimes).max(2);
    let d_model = d_head * spec.n_heads;
    let c = spec.cont_len();
    let and_units = match spec.mode {
        CommitMode::Gated => 6 * c,
        CommitMode::Recommit => 2 * c,
    };
    let config = ModelConfig {
        n_layers: spec.n_layers,
        d_model,
        n_heads: spec.n_heads,
        d_head,
        d_mlp: 1 + n_regimes + and_units,
        vocab_size: vocab,
        max_seq: spec.max_seq,
        ln_epsilon: 1e-5,
    };
    config.validate().map_err(|e| SynthError::Spec(e.to_string()))?;
    let lay = Layout { vocab, d_model };
    let mut b = Builder { spec, v, lay, w: Weights::zeros(config)?, d_head };

    for t in 0..vocab as u32 {
        b.w.tok_embed.set(t as usize, ANCHOR_POS, ANCHOR);
        b.w.tok_embed.set(t as usize, ANCHOR_NEG, -ANCHOR);
        b.w.tok_embed.set(t as usize, lay.tok(t), 1.0);
    }
    let sigma0 = (ANCHOR as f64 * (2.0 / d_model as f64).sqrt()) as f32;
    for blk in &mut b.w.blocks {
        blk.ln1.weight.fill(sigma0);
        blk.ln2.weight.fill(sigma0);
    }
    b.w.ln_final.weight.fill(sigma0);
    for t in 0..vocab as u32 {
        b.w.unembed.set(lay.out(t), t as usize, 1.0);
    }
    b.w.ln_final.bias[lay.out(v.other)] = OTHER_LOGIT;

    if n_regimes > 0 {
        let values: Vec<(u32, usize, f64)> = v.regimes.iter().enumerate().map(|(r, &t)| (t, r, 1.0)).collect();
        let writes: Vec<(usize, usize, f64)> = (0..n_regimes).map(|r| (r, lay.slot(r), 1.0)).collect();
        let keys = v.regimes.clone();
        b.head_attend(spec.regime_layer, 0, &keys, &values, &writes);
    }
    match spec.mode {
        CommitMode::Gated => {
            b.fork_finder(0, lay.k0(), 1.0);
            b.fork_finder(spec.commit_layer, lay.kc(), 1.0);
        }
        CommitMode::Recommit => {
            b.fork_finder(spec.commit_layer, lay.k0(), 1.0);
            let later = spec.n_layers - 1 - spec.commit_layer;
            for l in spec.commit_layer + 1..spec.n_layers {
                b.fork_finder(l, lay.k0(), RECOMMIT_LATER / later as f64);
            }
        }
    }

    // fork readout, calibrated afterwards
    let q = lay.tok(v.query);
    let gq = gelu(GATE / 2.0);
    let g0 = gap(spec.fork_prob, spec.tau_ref);
    b.unit(
        UNIT_Q,
        &[(q, GATE)],
        -GATE / 2.0,
        &[(lay.out(v.fork_a), (FORK_LOGIT + g0) / gq), (lay.out(v.fork_b), FORK_LOGIT / gq)],
    );
    for r in 0..n_regimes {
        b.unit(unit_regime(r), &[(q, GATE), (lay.slot(r), GATE)], -1.5 * GATE, &[]);
    }

    // continuation readout
    let tokens: Vec<u32> = (0..vocab as u32).collect();
    let mut j = 1 + n_regimes;
    for i in 0..c {
        for x in [1i32, -1] {
            let target = if x > 0 { v.cont_a[i] } else { v.cont_b[i] };
            let idx_reads: Vec<(usize, f64)> =
                tokens.iter().filter(|&&t| v.chain_index(t) == Some(i)).map(|&t| (lay.tok(t), G)).collect();
            match spec.mode {
                CommitMode::Gated => {
                    // (a, c, b) literal signs relative to x; 0 = unused
                    for lits in [[1, 1, 0], [1, -1, -1], [-1, 1, -1]] {
                        let mut reads = idx_reads.clone();
                        let (la, lc, lb) = ((lits[0] * x) as f64, (lits[1] * x) as f64, (lits[2] * x) as f64);
                        for &t in &tokens {
                            let g = v.group(t);
                            if g != 0 {
                                reads.push((lay.tok(t), H * lc * g as f64));
                            }
                        }
                        reads.push((lay.k0(), H * la));
                        if lb != 0.0 {
                            reads.push((lay.kc(), H * lb));
                        }
                        let k = lits.iter().filter(|&&l| l != 0).count() as f64;
                        b.unit(j, &reads, -(G + (k - 0.5) * H), &[(lay.out(target), OUT_W)]);
                        j += 1;
                    }
                }
                CommitMode::Recommit => {
                    let mut reads = idx_reads.clone();
                    reads.push((lay.k0(), H_RECOMMIT * x as f64));
                    b.unit(j, &reads, -(G + RECOMMIT_THRESHOLD * H_RECOMMIT), &[(lay.out(target), OUT_W)]);
                    j += 1;
                }
            }
        }
    }
    b.cancel_means();
    Ok((b.w, lay))
}

/// Adjusts one readout unit's writes until the step-0 logits of `prompt` hit
/// the targets implied by `p` and `noise_other`.
fn calibrate_unit(w: &mut Weights, spec: &ForkSpec, v: &ForkVocab, lay: Layout, unit: usize, prompt: &[u32], p: f64) -> Result<()> {
    let last = spec.n_layers - 1;
    let g = gelu(GATE / 2.0);
    let (a, b, o) = (v.fork_a as usize, v.fork_b as usize, v.other as usize);
    let mut worst = f64::INFINITY;
    for _ in 0..MAX_CALIBRATION_ITERS {
        let engine = Engine::new(Arc::new(w.clone()));
        let l = engine.forward(prompt, &mut engine.new_kv())?.logits;
        let (la, lb, lo) = (l[a] as f64, l[b] as f64, l[o] as f64);
        let mut targets = vec![(a, FORK_LOGIT + gap(p, spec.tau_ref) - la), (b, FORK_LOGIT - lb)];
        if spec.noise_other > 0.0 {
            let q = spec.noise_other;
            targets.push((o, FORK_LOGIT + spec.tau_ref * (q / ((1.0 - q) * (1.0 - p))).ln() - lo));
        }
        worst = targets.iter().map(|t| t.1.abs()).fold(0.0, f64::max);
        if worst < 2e-5 {
            return Ok(());
        }
        let blk = &mut w.blocks[last];
        for (tok, err) in targets {
            let dim = lay.out(tok as u32);
            let cur = blk.w_out.get(unit, dim) as f64;
            blk.w_out.set(unit, dim, (cur + err / g) as f32);
        }
    }
    Err(SynthError::Calibration(format!("unit {unit}: residual logit error {worst:e}")))
}

pub fn build_fork_model(spec: &ForkSpec) -> Result<(ForkModel, ForkOracle)> {
    spec.validate()?;
    let v = ForkVocab::new(spec);
    let (mut w, lay) = build_weights(spec, &v)?;
    let fillers = &v.fillers[..1];
    let mut base = fillers.to_vec();
    base.push(v.query);
    calibrate_unit(&mut w, spec, &v, lay, UNIT_Q, &base, spec.fork_prob)?;
    for (r, &p) in spec.regimes.iter().enumerate() {
        let prompt = [fillers[0], v.regimes[r], v.query];
        calibrate_unit(&mut w, spec, &v, lay, unit_regime(r), &prompt, p)?;
    }
    let model = ForkModel { spec: spec.clone(), vocab: v, weights: Arc::new(w), layout: lay };
    let oracle = compute_oracle(&model)?;
    Ok((model, oracle))
}

fn compute_oracle(m: &ForkModel) -> Result<ForkOracle> {
    let engine = m.engine();
    let mut step0 = vec![m.step0(&engine, None)?];
    for r in 0..m.spec.regimes.len() {
        step0.push(m.step0(&engine, Some(r))?);
    }
    let t_steps = m.spec.n_steps;
    let prompt = m.canonical_prompt(None);
    let branch = |fork: u32, cont: &[u32]| {
        let mut t = vec![fork];
        t.extend_from_slice(&cont[..t_steps - 1]);
        t
    };
    let target = branch(m.vocab.fork_b, &m.vocab.cont_b);
    let source_tokens = branch(m.vocab.fork_a, &m.vocab.cont_a);
    let source = crate::model::generate(&engine, &prompt, t_steps, 0.0, 0, &HookSpec::capture(), &source_tokens)?;
    let cache = source.cache.expect("capture requested");
    let mut patch_flip = vec![vec![0.0; t_steps]; m.spec.n_layers];
    for (layer, row) in patch_flip.iter_mut().enumerate() {
        for (step, cell) in row.iter_mut().enumerate() {
            let hooks = HookSpec::none().with(crate::model::Intervention::Patch {
                layer,
                step,
                vector: cache.get(step, layer).to_vec(),
            });
            *cell = m.enumerate(&prompt, t_steps, m.spec.tau_ref, &hooks, &target[..step])?.p_a;
        }
    }
    Ok(ForkOracle { spec: m.spec.clone(), vocab: m.vocab.clone(), step0, patch_flip })
}

/// See [`ForkModel::enumerate`].
pub fn oracle_enumerate(
    model: &ForkModel,
    prompt: &[u32],
    n_steps: usize,
    tau: f64,
    hooks: &HookSpec,
    forced: &[u32],
) -> Result<OutcomeDist> {
    let engine = model.engine();
    let c = *engine.config();
    hooks.validate(c.n_layers, c.d_model, n_steps)?;
    if prompt.is_empty() || n_steps == 0 || forced.len() > n_steps {
        return Err(SynthError::Spec("bad enumeration request".into()));
    }
    let last_prompt = prompt.len() - 1;
    let mut dist = OutcomeDist { p_a: 0.0, p_b: 0.0, p_other: 0.0, pruned: 0.0 };
    let mut stack: Vec<(KvState, Vec<u32>, f64)> = vec![(engine.new_kv(), Vec::new(), 1.0)];
    let mut nodes = 0usize;
    while let Some((mut kv, tokens, prob)) = stack.pop() {
        let t = tokens.len();
        if t == n_steps {
            match model.label(&tokens) {
                Label::Correct => dist.p_a += prob,
                Label::Hallucination => dist.p_b += prob,
                Label::Other => dist.p_other += prob,
            }
            continue;
        }
        nodes += 1;
        if nodes > MAX_NODES {
            return Err(SynthError::TooLarge(MAX_NODES));
        }
        let input: &[u32] = if t == 0 { prompt } else { &tokens[t - 1..] };
        let mut edit = |pos: usize, layer: usize, h: &mut [f32]| {
            if pos >= last_prompt {
                hooks.apply_at(layer, pos - last_prompt, h);
            }
        };
        let out = engine.forward_hooked(input, &mut kv, &mut edit)?;
        let mut push = |tok: u32, p: f64, kv: KvState| {
            let mut next = tokens.clone();
            next.push(tok);
            stack.push((kv, next, p));
        };
        if let Some(&f) = forced.get(t) {
            push(f, prob, kv);
        } else if tau == 0.0 {
            let tok = crate::model::sample_token(&out.logits, 0.0, &mut rng_from_seed(0));
            push(tok, prob, kv);
        } else {
            let probs = crate::model::softmax_f64(&out.logits, tau);
            for (tok, &p) in probs.iter().enumerate() {
                let mass = prob * p;
                if mass >= ENUMERATION_FLOOR {
                    push(tok as u32, mass, kv.clone());
                } else {
                    dist.pruned += mass;
                }
            }
        }
    }
    Ok(dist)
}
