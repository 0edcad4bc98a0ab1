use std::sync::Arc;

use super::{HookPoint, ModelConfig, ModelError, Result, Weights};

/// Per-layer keys and values of every position processed so far.
#[derive(Debug, Clone, PartialEq)]
pub struct KvState {
    keys: Vec<Vec<Vec<f32>>>,
    values: Vec<Vec<Vec<f32>>>,
}

impl KvState {
    pub fn new(n_layers: usize) -> Self {
        Self { keys: vec![Vec::new(); n_layers], values: vec![Vec::new(); n_layers] }
    }

    pub fn len(&self) -> usize {
        self.keys.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    /// Logits at the last processed position.
    pub logits: Vec<f32>,
    /// Hook-point residual at the last position, one vector per layer.
    pub resid: Vec<Vec<f32>>,
}

#[derive(Debug, Clone)]
pub struct Engine {
    weights: Arc<Weights>,
    hook_point: HookPoint,
}

fn gelu(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
    0.5 * x * (1.0 + (C * (x + 0.044715 * x * x * x)).tanh())
}

fn round(v: &[f64]) -> Vec<f32> {
    v.iter().map(|&x| x as f32).collect()
}

impl Engine {
    pub fn new(weights: Arc<Weights>) -> Self {
        Self { weights, hook_point: HookPoint::default() }
    }

    pub fn with_hook_point(mut self, hook_point: HookPoint) -> Self {
        self.hook_point = hook_point;
        self
    }

    pub fn config(&self) -> &ModelConfig {
        &self.weights.config
    }

    pub fn weights(&self) -> &Arc<Weights> {
        &self.weights
    }

    pub fn hook_point(&self) -> HookPoint {
        self.hook_point
    }

    pub fn new_kv(&self) -> KvState {
        KvState::new(self.config().n_layers)
    }

    pub fn forward(&self, tokens: &[u32], kv: &mut KvState) -> Result<StepOutput> {
        self.forward_hooked(tokens, kv, &mut |_, _, _| {})
    }

    /// Appends `tokens` after the positions already in `kv`. `edit(pos, layer, h)`
    /// may rewrite the hook-point residual of every new position before the rest
    /// of the network reads it.
    pub fn forward_hooked(
        &self,
        tokens: &[u32],
        kv: &mut KvState,
        edit: &mut dyn FnMut(usize, usize, &mut [f32]),
    ) -> Result<StepOutput> {
        let c = *self.config();
        if tokens.is_empty() {
            return Err(ModelError::Hook("forward called with no new tokens".into()));
        }
        let total = kv.len() + tokens.len();
        if total > c.max_seq {
            return Err(ModelError::Capacity { len: total, max: c.max_seq });
        }
        if let Some(&id) = tokens.iter().find(|&&t| t as usize >= c.vocab_size) {
            return Err(ModelError::TokenOutOfRange { id, vocab: c.vocab_size });
        }
        let w = &*self.weights;
        let mut resid = vec![Vec::new(); c.n_layers];
        let mut last = Vec::new();
        for &tok in tokens {
            let pos = kv.len();
            let mut x: Vec<f32> = w
                .tok_embed
                .row(tok as usize)
                .iter()
                .zip(w.pos_embed.row(pos))
                .map(|(&a, &b)| (a as f64 + b as f64) as f32)
                .collect();
            for (l, block) in w.blocks.iter().enumerate() {
                let h = block.ln1.apply(&x, c.ln_epsilon);
                let q = block.w_q.affine(&h, &block.b_q);
                kv.keys[l].push(round(&block.w_k.affine(&h, &block.b_k)));
                kv.values[l].push(round(&block.w_v.affine(&h, &block.b_v)));
                let mut heads = vec![0.0f64; c.d_model];
                let scale = 1.0 / (c.d_head as f64).sqrt();
                for hd in 0..c.n_heads {
                    let span = hd * c.d_head..(hd + 1) * c.d_head;
                    let scores: Vec<f64> = kv.keys[l]
                        .iter()
                        .map(|k| q[span.clone()].iter().zip(&k[span.clone()]).map(|(a, &b)| a * b as f64).sum::<f64>() * scale)
                        .collect();
                    let mx = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let exps: Vec<f64> = scores.iter().map(|s| (s - mx).exp()).collect();
                    let z: f64 = exps.iter().sum();
                    for (e, v) in exps.iter().zip(&kv.values[l]) {
                        let a = e / z;
                        for (o, &vv) in heads[span.clone()].iter_mut().zip(&v[span.clone()]) {
                            *o += a * vv as f64;
                        }
                    }
                }
                let attn = block.w_o.affine(&heads, &block.b_o);
                x = x.iter().zip(&attn).map(|(&a, &b)| (a as f64 + b) as f32).collect();
                if self.hook_point == HookPoint::PostAttention {
                    edit(pos, l, &mut x);
                    resid[l] = x.clone();
                }
                let h2 = block.ln2.apply(&x, c.ln_epsilon);
                let mut mid = block.w_in.affine(&h2, &block.b_in);
                mid.iter_mut().for_each(|m| *m = gelu(*m));
                let mlp = block.w_out.affine(&mid, &block.b_out);
                x = x.iter().zip(&mlp).map(|(&a, &b)| (a as f64 + b) as f32).collect();
                if self.hook_point == HookPoint::PostBlock {
                    edit(pos, l, &mut x);
                    resid[l] = x.clone();
                }
            }
            last = x;
        }
        let hf = w.ln_final.apply(&last, c.ln_epsilon);
        let zero_bias = vec![0.0f32; c.vocab_size];
        let logits = round(&w.unembed.affine(&hf, &zero_bias));
        Ok(StepOutput { logits, resid })
    }

    /// Fresh forward over a whole sequence.
    pub fn forward_full(&self, tokens: &[u32], edit: &mut dyn FnMut(usize, usize, &mut [f32])) -> Result<StepOutput> {
        let mut kv = self.new_kv();
        self.forward_hooked(tokens, &mut kv, edit)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> ModelConfig {
        ModelConfig { n_layers: 2, d_model: 4, n_heads: 2, d_head: 2, d_mlp: 8, vocab_size: 5, max_seq: 6, ln_epsilon: 1e-5 }
    }

    #[test]
    fn zero_weights_give_zero_logits() {
        let e = Engine::new(Arc::new(Weights::zeros(cfg()).unwrap()));
        let out = e.forward(&[1, 2, 3], &mut e.new_kv()).unwrap();
        assert!(out.logits.iter().all(|&v| v == 0.0));
        assert_eq!(out.resid.len(), 2);
    }

    #[test]
    fn capacity_and_range() {
        let e = Engine::new(Arc::new(Weights::zeros(cfg()).unwrap()));
        assert_eq!(e.forward(&[0; 7], &mut e.new_kv()).unwrap_err(), ModelError::Capacity { len: 7, max: 6 });
        assert!(matches!(e.forward(&[5], &mut e.new_kv()), Err(ModelError::TokenOutOfRange { .. })));
    }

    #[test]
    fn incremental_matches_full() {
        let e = Engine::new(Arc::new(Weights::random(cfg(), 11, 0.8).unwrap()));
        let seq = [0u32, 3, 1, 4, 2];
        let mut kv = e.new_kv();
        e.forward(&seq[..2], &mut kv).unwrap();
        for n in 3..=seq.len() {
            let inc = e.forward(&seq[n - 1..n], &mut kv).unwrap();
            let full = e.forward_full(&seq[..n], &mut |_, _, _| {}).unwrap();
            for (a, b) in inc.logits.iter().zip(&full.logits) {
                assert!((a - b).abs() < 1e-5);
            }
        }
    }
}
