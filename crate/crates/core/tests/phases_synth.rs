use trajlab::phase1::{run_phase1, Phase1Config, Status};
use trajlab::phase2::{analyze, collect_runs, CollectConfig, Phase2Error, ONSET_THRESHOLD};
use trajlab::synth::{build_fork_model, ForkModel, ForkSpec};

fn fork(p: f64) -> ForkModel {
    build_fork_model(&ForkSpec { fork_prob: p, ..ForkSpec::default() }).unwrap().0
}

#[test]
fn half_fork_prompts_bifurcate() {
    let m = fork(0.5);
    let data = m.dataset(100, 3);
    let cfg = Phase1Config { n_samples: 20, temperature: m.spec.tau_ref, n_steps: m.spec.n_steps, master_seed: 11 };
    let r = run_phase1(&m.engine(), &m.vocab.vocab, &data, &cfg).unwrap();
    assert!(r.prompts.iter().all(|p| p.error.is_none() && p.counts.total() == 20));
    assert!(r.count(Status::Bifurcating) >= 99, "{:?}", r.overall);
    let again = run_phase1(&m.engine(), &m.vocab.vocab, &data, &cfg).unwrap();
    assert_eq!(serde_json::to_string(&r).unwrap(), serde_json::to_string(&again).unwrap());
}

#[test]
fn same_prompt_pairs_agree_at_step0() {
    let m = fork(0.5);
    let engine = m.engine();
    for spec in m.dataset(5, 8) {
        let cfg = CollectConfig { k: 6, temperature: 1.0, n_steps: m.spec.n_steps, max_attempts: 200, master_seed: 4 };
        let pair = collect_runs(&engine, &m.vocab.vocab, &spec, &cfg).unwrap();
        let r = analyze(&pair, ONSET_THRESHOLD, &[m.spec.commit_layer]).unwrap();
        assert!(r.kl.kl[0] <= 1e-9 && r.kl.kl[1] > 0.0, "{:?}", r.kl);
        assert!(r.kl.onset.is_none_or(|o| o >= 1));
        for l in 0..m.spec.n_layers {
            assert!(r.heatmap.get(l, 0).unwrap() <= 1e-9);
        }
        // continuations are deterministic per branch, so every post-fork
        // cell has zero within-class spread and is flagged
        for l in 0..m.spec.n_layers {
            assert!((1..m.spec.n_steps).all(|t| r.heatmap.get(l, t).is_none()));
        }
        assert_eq!(collect_runs(&engine, &m.vocab.vocab, &spec, &cfg).unwrap(), pair);
    }
}

#[test]
fn one_sided_model_cannot_fill_both_classes() {
    let m = fork(0.999);
    let spec = &m.dataset(1, 0)[0];
    let cfg = CollectConfig { k: 6, temperature: 1.0, n_steps: m.spec.n_steps, max_attempts: 40, master_seed: 0 };
    match collect_runs(&m.engine(), &m.vocab.vocab, spec, &cfg) {
        Err(Phase2Error::ClassUnreachable { class, attempts }) => {
            assert_eq!(class, "hallucination");
            assert_eq!(attempts, 40);
        }
        other => panic!("{other:?}"),
    }
}
