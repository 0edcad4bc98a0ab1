use serde::{Deserialize, Serialize};

use super::{sample_token, Engine, ModelError, Result};
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Intervention {
    /// Replace the hook-point residual at (layer, step).
    Patch { layer: usize, step: usize, vector: Vec<f32> },
    /// Remove the component along a unit direction at every listed (layer, step).
    ProjectOut { direction: Vec<f64>, layers: Vec<usize>, steps: Vec<usize> },
    /// Record the residual cache.
    CaptureAll,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HookSpec {
    pub interventions: Vec<Intervention>,
}

impl HookSpec {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn capture() -> Self {
        Self { interventions: vec![Intervention::CaptureAll] }
    }

    pub fn with(mut self, i: Intervention) -> Self {
        self.interventions.push(i);
        self
    }

    pub fn captures(&self) -> bool {
        self.interventions.iter().any(|i| matches!(i, Intervention::CaptureAll))
    }

    pub fn validate(&self, n_layers: usize, d_model: usize, n_steps: usize) -> Result<()> {
        let herr = |m: String| Err(ModelError::Hook(m));
        for i in &self.interventions {
            match i {
                Intervention::Patch { layer, step, vector } => {
                    if *layer >= n_layers || *step >= n_steps {
                        return herr(format!("patch at layer {layer}, step {step} outside {n_layers} x {n_steps}"));
                    }
                    if vector.len() != d_model {
                        return herr(format!("patch vector has length {}, expected {d_model}", vector.len()));
                    }
                    if vector.iter().any(|v| !v.is_finite()) {
                        return herr("patch vector is not finite".into());
                    }
                }
                Intervention::ProjectOut { direction, layers, steps } => {
                    if direction.len() != d_model {
                        return herr(format!("direction has length {}, expected {d_model}", direction.len()));
                    }
                    let norm = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if (norm - 1.0).abs() > 1e-9 {
                        return herr(format!("direction norm {norm} is not 1"));
                    }
                    if let Some(l) = layers.iter().find(|&&l| l >= n_layers) {
                        return herr(format!("projection layer {l} out of range"));
                    }
                    if let Some(t) = steps.iter().find(|&&t| t >= n_steps) {
                        return herr(format!("projection step {t} out of range"));
                    }
                }
                Intervention::CaptureAll => {}
            }
        }
        Ok(())
    }

    pub(crate) fn apply_at(&self, layer: usize, step: usize, h: &mut [f32]) {
        for i in &self.interventions {
            match i {
                Intervention::Patch { layer: l, step: t, vector } if *l == layer && *t == step => {
                    h.copy_from_slice(vector);
                }
                Intervention::ProjectOut { direction, layers, steps } if layers.contains(&layer) && steps.contains(&step) => {
                    let dot: f64 = h.iter().zip(direction).map(|(&x, d)| x as f64 * d).sum();
                    for (x, d) in h.iter_mut().zip(direction) {
                        *x = (*x as f64 - dot * d) as f32;
                    }
                }
                _ => {}
            }
        }
    }
}

/// Hook-point residuals at the last position, indexed `[step][layer]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualCache {
    pub resid: Vec<Vec<Vec<f32>>>,
}

impl ResidualCache {
    pub fn n_steps(&self) -> usize {
        self.resid.len()
    }

    pub fn n_layers(&self) -> usize {
        self.resid.first().map_or(0, Vec::len)
    }

    pub fn d_model(&self) -> usize {
        self.resid.first().and_then(|s| s.first()).map_or(0, Vec::len)
    }

    pub fn get(&self, step: usize, layer: usize) -> &[f32] {
        &self.resid[step][layer]
    }

    pub fn check_shape(&self, n_steps: usize, n_layers: usize, d_model: usize) -> bool {
        self.resid.len() == n_steps
            && self.resid.iter().all(|s| s.len() == n_layers && s.iter().all(|h| h.len() == d_model && h.iter().all(|v| v.is_finite())))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generation {
    pub tokens: Vec<u32>,
    /// Unscaled logits that produced each step's token.
    pub step_logits: Vec<Vec<f32>>,
    pub cache: Option<ResidualCache>,
}

/// Runs `n_steps` decoding steps. Step `t` reads the logits at the last position
/// of `prompt ++ tokens[..t]`. Forced steps still draw from the generator so that
/// the random stream stays aligned with free runs.
pub fn generate(
    engine: &Engine,
    prompt: &[u32],
    n_steps: usize,
    temperature: f64,
    seed: u64,
    hooks: &HookSpec,
    forced_prefix: &[u32],
) -> Result<Generation> {
    let c = *engine.config();
    if prompt.is_empty() {
        return Err(ModelError::Hook("empty prompt".into()));
    }
    if n_steps == 0 {
        return Err(ModelError::Hook("n_steps must be at least 1".into()));
    }
    if forced_prefix.len() > n_steps {
        return Err(ModelError::Hook(format!("forced prefix of {} exceeds {n_steps} steps", forced_prefix.len())));
    }
    if !(temperature >= 0.0 && temperature.is_finite()) {
        return Err(ModelError::Hook(format!("invalid temperature {temperature}")));
    }
    hooks.validate(c.n_layers, c.d_model, n_steps)?;
    let needed = prompt.len() + n_steps - 1;
    if needed > c.max_seq {
        return Err(ModelError::Capacity { len: needed, max: c.max_seq });
    }

    let mut rng = rng_from_seed(seed);
    let mut kv = engine.new_kv();
    let mut tokens = Vec::with_capacity(n_steps);
    let mut step_logits = Vec::with_capacity(n_steps);
    let mut cache = hooks.captures().then(|| ResidualCache { resid: Vec::with_capacity(n_steps) });
    let last_prompt_pos = prompt.len() - 1;
    for t in 0..n_steps {
        let input: &[u32] = if t == 0 { prompt } else { std::slice::from_ref(&tokens[t - 1]) };
        let mut edit = |pos: usize, layer: usize, h: &mut [f32]| {
            if pos >= last_prompt_pos {
                hooks.apply_at(layer, pos - last_prompt_pos, h);
            }
        };
        let out = engine.forward_hooked(input, &mut kv, &mut edit)?;
        let sampled = sample_token(&out.logits, temperature, &mut rng);
        tokens.push(forced_prefix.get(t).copied().unwrap_or(sampled));
        if let Some(c) = cache.as_mut() {
            c.resid.push(out.resid);
        }
        step_logits.push(out.logits);
    }
    Ok(Generation { tokens, step_logits, cache })
}
