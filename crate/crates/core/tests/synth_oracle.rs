use trajlab::model::{generate, softmax_f64, HookSpec, Intervention};
use trajlab::synth::{build_fork_model, CommitMode, ForkModel, ForkSpec};
use trajlab::Label;

fn build(spec: ForkSpec) -> ForkModel {
    build_fork_model(&spec).unwrap().0
}

fn project(m: &ForkModel, layers: Vec<usize>) -> HookSpec {
    let steps = (1..m.spec.n_steps).collect();
    HookSpec::none().with(Intervention::ProjectOut { direction: m.branch_direction(), layers, steps })
}

#[test]
fn step0_distribution_is_calibrated() {
    for p in [0.5, 0.7, 0.15] {
        let (m, o) = build_fork_model(&ForkSpec { fork_prob: p, ..ForkSpec::default() }).unwrap();
        let d = &o.step0[0];
        assert!((d.p_a - p).abs() < 0.01 && (d.p_b - (1.0 - p)).abs() < 0.01, "{d:?}");
        assert!(d.p_other <= 1e-3);
        assert!(d.p_a + d.p_b >= 0.999);
        let engine = m.engine();
        let out = engine.forward(&m.prompt(None, &m.vocab.fillers[2..5]), &mut engine.new_kv()).unwrap();
        let probs = softmax_f64(&out.logits, 1.0);
        assert!((probs[m.vocab.fork_a as usize] - p).abs() < 0.01);
    }
}

#[test]
fn greedy_picks_majority_branch() {
    for (p, want) in [(0.5, Label::Correct), (0.6, Label::Correct), (0.4, Label::Hallucination)] {
        let m = build(ForkSpec { fork_prob: p, ..ForkSpec::default() });
        let prompt = m.prompt(None, &m.vocab.fillers[..3]);
        let g = generate(&m.engine(), &prompt, 6, 0.0, 1, &HookSpec::none(), &[]).unwrap();
        assert_eq!(m.label(&g.tokens), want, "p = {p}");
    }
}

#[test]
fn continuation_is_near_deterministic() {
    let m = build(ForkSpec::default());
    let prompt = m.prompt(None, &m.vocab.fillers[..2]);
    for (fork, cont) in [(m.vocab.fork_a, &m.vocab.cont_a), (m.vocab.fork_b, &m.vocab.cont_b)] {
        let mut forced = vec![fork];
        forced.extend_from_slice(cont);
        let g = generate(&m.engine(), &prompt, 6, 1.0, 0, &HookSpec::none(), &forced).unwrap();
        for t in 1..6 {
            let probs = softmax_f64(&g.step_logits[t], 1.0);
            assert!(probs[cont[t - 1] as usize] >= 0.999, "step {t}");
        }
    }
}

#[test]
fn enumeration_matches_fork_probability() {
    let m = build(ForkSpec { fork_prob: 0.7, ..ForkSpec::default() });
    let prompt = m.prompt(None, &m.vocab.fillers[..1]);
    let d = m.enumerate(&prompt, 6, 1.0, &HookSpec::none(), &[]).unwrap();
    assert!((d.p_a - 0.7).abs() < 0.01 && (d.p_b - 0.3).abs() < 0.01 && d.p_other < 1e-3, "{d:?}");
    let g = generate(&m.engine(), &prompt, 6, 1.0, 9, &HookSpec::capture(), &[]).unwrap();
    let c = g.cache.unwrap();
    let identity = HookSpec::none().with(Intervention::Patch { layer: 1, step: 0, vector: c.get(0, 1).to_vec() });
    let same = m.enumerate(&prompt, 6, 1.0, &identity, &[]).unwrap();
    assert!((same.p_a - d.p_a).abs() < 1e-12 && (same.p_b - d.p_b).abs() < 1e-12);
}

#[test]
fn empirical_frequencies_match_oracle() {
    let m = build(ForkSpec { fork_prob: 0.3, noise_other: 0.1, ..ForkSpec::default() });
    let prompt = m.prompt(None, &m.vocab.fillers[..2]);
    let exact = m.enumerate(&prompt, 6, 1.0, &HookSpec::none(), &[]).unwrap();
    let n = 2000;
    let engine = m.engine();
    let mut counts = [0usize; 3];
    for s in 0..n {
        let g = generate(&engine, &prompt, 6, 1.0, s, &HookSpec::none(), &[]).unwrap();
        counts[m.label(&g.tokens) as usize] += 1;
    }
    for (k, p) in counts.iter().zip([exact.p_a, exact.p_b, exact.p_other]) {
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((*k as f64 / n as f64 - p).abs() <= 3.0 * se, "{counts:?} vs {exact:?}");
    }
}

#[test]
fn gated_patch_carries_iff_at_or_above_commit_layer() {
    let (m, o) = build_fork_model(&ForkSpec::default()).unwrap();
    for layer in 0..m.spec.n_layers {
        let want = if layer >= m.spec.commit_layer { 1.0 } else { 0.0 };
        assert!((o.patch_flip[layer][1] - want).abs() < 1e-6, "layer {layer}: {:?}", o.patch_flip[layer]);
        for step in 2..=m.spec.indicator_index + 1 {
            assert!(o.patch_flip[layer][step] > 1.0 - 1e-6);
        }
    }
}

#[test]
fn branch_ablation_destroys_commitment() {
    let m = build(ForkSpec::default());
    let prompt = m.prompt(None, &m.vocab.fillers[..1]);
    let layers = (m.spec.commit_layer..m.spec.n_layers).collect();
    let d = m.enumerate(&prompt, 6, 1.0, &project(&m, layers), &[]).unwrap();
    assert!(d.p_other > 0.5, "{d:?}");
}

#[test]
fn recommit_variant_undoes_single_step_patches() {
    let spec = ForkSpec { mode: CommitMode::Recommit, ..ForkSpec::default() };
    let m = build(spec);
    let lc = m.spec.commit_layer;
    let prompt = m.prompt(None, &m.vocab.fillers[..1]);
    let engine = m.engine();
    let mut a = vec![m.vocab.fork_a];
    a.extend_from_slice(&m.vocab.cont_a);
    let mut b = vec![m.vocab.fork_b];
    b.extend_from_slice(&m.vocab.cont_b);
    let src = generate(&engine, &prompt, 6, 0.0, 0, &HookSpec::capture(), &a).unwrap().cache.unwrap();
    let window = |steps: &[usize]| {
        let mut h = HookSpec::none();
        for &t in steps {
            h = h.with(Intervention::Patch { layer: lc, step: t, vector: src.get(t, lc).to_vec() });
        }
        m.enumerate(&prompt, 6, 1.0, &h, &b[..1]).unwrap().p_a
    };
    assert!(window(&[1]) < 1e-6);
    assert!(window(&[1, 2, 3, 4]) > 1.0 - 1e-6);

    let single = m.enumerate(&prompt, 6, 1.0, &project(&m, vec![lc]), &[]).unwrap();
    let full = m.enumerate(&prompt, 6, 1.0, &project(&m, (lc..m.spec.n_layers).collect()), &[]).unwrap();
    assert!(single.p_other < 1e-3 && full.p_other > 0.5, "{single:?} {full:?}");
}

#[test]
fn regimes_set_per_prompt_probabilities() {
    let spec = ForkSpec { regimes: vec![0.15, 0.5, 0.85], ..ForkSpec::default() };
    let (m, o) = build_fork_model(&spec).unwrap();
    for (d, want) in o.step0[1..].iter().zip(&spec.regimes) {
        assert!((d.p_a - want).abs() < 0.01, "{d:?}");
    }
    let engine = m.engine();
    let f = &m.vocab.fillers[..2];
    let h = |r| engine.forward(&m.prompt(Some(r), f), &mut engine.new_kv()).unwrap().resid;
    let (h0, h1) = (h(0), h(1));
    for l in 0..m.spec.n_layers {
        assert_ne!(h0[l], h1[l], "regime invisible at layer {l}");
    }
    let data = m.dataset(12, 3);
    assert_eq!(data.len(), 12);
    assert!(data.iter().all(|p| p.tokens.as_ref().unwrap().last() == Some(&m.vocab.query)));
}

#[test]
fn infeasible_specs_are_rejected() {
    assert!(build_fork_model(&ForkSpec { n_layers: 1, commit_layer: 0, ..ForkSpec::default() }).is_err());
    assert!(build_fork_model(&ForkSpec { commit_layer: 0, ..ForkSpec::default() }).is_err());
    assert!(build_fork_model(&ForkSpec { fork_prob: 1.0, ..ForkSpec::default() }).is_err());
    assert!(build_fork_model(&ForkSpec { n_steps: 4, ..ForkSpec::default() }).is_err());
}
