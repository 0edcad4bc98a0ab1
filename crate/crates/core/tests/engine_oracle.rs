#[path = "common/dense.rs"]
mod dense;

use std::sync::Arc;

use dense::dense_logits;
use trajlab::model::{generate, Engine, HookSpec, ModelConfig, Weights};

#[test]
fn tiny_model_matches_dense_oracle() {
    let c = ModelConfig { n_layers: 1, d_model: 4, n_heads: 2, d_head: 2, d_mlp: 8, vocab_size: 5, max_seq: 8, ln_epsilon: 1e-5 };
    for seed in 0..5 {
        let w = Arc::new(Weights::random(c, seed, 1.0).unwrap());
        let e = Engine::new(w.clone());
        let seq = [4, 0, 2, 2, 1, 3];
        let got = e.forward_full(&seq, &mut |_, _, _| {}).unwrap().logits;
        let want = dense_logits(&w, &seq);
        for (g, w) in got.iter().zip(&want) {
            assert!((*g as f64 - w).abs() < 1e-5, "seed {seed}: {g} vs {w}");
        }
    }
}

#[test]
fn generation_logits_match_dense_recompute() {
    let c = ModelConfig { n_layers: 3, d_model: 6, n_heads: 3, d_head: 2, d_mlp: 10, vocab_size: 9, max_seq: 12, ln_epsilon: 1e-5 };
    let w = Arc::new(Weights::random(c, 77, 0.9).unwrap());
    let e = Engine::new(w.clone());
    let prompt = [1u32, 7, 3];
    let g = generate(&e, &prompt, 6, 0.9, 5, &HookSpec::none(), &[]).unwrap();
    for t in 0..6 {
        let mut seq = prompt.to_vec();
        seq.extend_from_slice(&g.tokens[..t]);
        let want = dense_logits(&w, &seq);
        for (a, b) in g.step_logits[t].iter().zip(&want) {
            assert!((*a as f64 - b).abs() < 1e-5);
        }
    }
}

#[test]
fn step_zero_logits_ignore_seed() {
    let c = ModelConfig { n_layers: 2, d_model: 4, n_heads: 1, d_head: 4, d_mlp: 4, vocab_size: 6, max_seq: 10, ln_epsilon: 1e-5 };
    let e = Engine::new(Arc::new(Weights::random(c, 1, 1.0).unwrap()));
    let a = generate(&e, &[2, 3], 3, 1.0, 1, &HookSpec::none(), &[]).unwrap();
    let b = generate(&e, &[2, 3], 3, 1.0, 2, &HookSpec::none(), &[]).unwrap();
    assert_eq!(a.step_logits[0], b.step_logits[0]);
    let sum: f64 = trajlab::model::softmax_f64(&a.step_logits[0], 1.0).iter().sum();
    assert!((sum - 1.0).abs() < 1e-6);
}
