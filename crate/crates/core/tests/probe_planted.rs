use trajlab::fixtures::{self, WITHIN_CATEGORY};
use trajlab::phase1::{replay_counts, run_phase1, Phase1Config};
use trajlab::probe::*;
use trajlab::stats::{anova_f_eta2, population_std, GroupedSamples};
use trajlab::synth::{build_fork_model, ForkSpec};
use trajlab::Category;

fn planted() -> (PlantSpec, RegimeFeatures) {
    let spec = PlantSpec::default();
    (spec, planted_features(&spec).unwrap())
}

#[test]
fn probe_recovers_planted_layer() {
    let (spec, f) = planted();
    let r = probe_layer_sweep(&f, 1).unwrap();
    let at = &r.layers[spec.planted_layer];
    assert!(at.pearson >= 0.9, "{at:?}");
    assert_eq!(r.best_layer, spec.planted_layer);
    assert!(at.auroc_mostly_hall.unwrap() > 0.95);
    for l in &r.layers {
        assert!((-1.0..=1.0).contains(&l.pearson));
        assert!(l.auroc_mostly_hall.is_none_or(|a| (0.0..=1.0).contains(&a)));
    }
}

#[test]
fn permutation_floor_on_planted_signal() {
    let (spec, f) = planted();
    let s = probe_permutation(&f, spec.planted_layer, 1000, 2).unwrap();
    assert_eq!(s.p_value, 1.0 / 1001.0);
    assert_eq!(s, probe_permutation(&f, spec.planted_layer, 1000, 2).unwrap());
}

#[test]
fn pure_noise_is_not_significant() {
    let mut hits = 0;
    for seed in 0..20 {
        let spec = PlantSpec { n_prompts: 30, n_layers: 2, d_model: 8, planted_layer: 1, separation: 0.0, seed, ..PlantSpec::default() };
        let mut f = planted_features(&spec).unwrap();
        // targets unrelated to the (noise-only) features
        let mut rng = trajlab::rng::rng_from_seed(seed + 100);
        f.rate = (0..30).map(|_| rand::Rng::random::<f64>(&mut rng)).collect();
        let s = probe_permutation(&f, 0, 99, seed).unwrap();
        hits += usize::from(s.p_value > 0.05);
    }
    assert!(hits >= 18, "{hits}/20");
}

#[test]
fn cluster_sweep_peaks_at_planted_k() {
    let (spec, f) = planted();
    let fits = cluster_sweep(&f, spec.planted_layer, &[2, 3, 4, 5, 6], &ClusterConfig::default(), 3).unwrap();
    assert_eq!(best_k(&fits, ClusterMethod::Kmeans), Some(3));
    assert_eq!(best_k(&fits, ClusterMethod::GmmDiag), Some(3));
    let k3 = fits.iter().find(|c| c.k == 3 && c.method == ClusterMethod::Kmeans).unwrap();
    let table = cluster_composition(k3, &f).unwrap();
    assert_eq!(composition_purity(&table), 1.0);
    assert_eq!(table.iter().map(|c| c.size).sum::<usize>(), 61);
    for c in &fits {
        let a = anova_f_eta2(&GroupedSamples::from_assignments(&f.rate, &c.assignments).unwrap());
        assert_eq!(a.eta2, c.eta2);
        assert!((0.0..=1.0).contains(&c.eta2));
    }
    assert!(composition_csv(&table).starts_with("cluster,n,mean_rate,std_rate,n_bifurcating,categories\n"));
}

#[test]
fn equal_rate_groups_explain_nothing() {
    let (spec, mut f) = planted();
    f.rate = f.categories.iter().map(|c| if *c == Category::ALL[2] { 0.9 } else { 0.3 }).collect();
    // features separate regimes 0 and 1, both at rate 0.3
    let keep: Vec<usize> = (0..f.n_prompts()).filter(|&i| f.categories[i] != Category::ALL[2]).collect();
    let g = f.subset(&keep);
    let fits = cluster_sweep(&g, spec.planted_layer, &[2], &ClusterConfig::default(), 0);
    // zero rate variance makes eta^2 undefined or zero
    if let Ok(fits) = fits {
        assert!(fits.iter().all(|c| c.eta2.abs() < 1e-12 || c.eta2.is_nan()));
    }
}

#[test]
fn probe_is_order_invariant() {
    let (spec, f) = planted();
    let mut idx: Vec<usize> = (0..f.n_prompts()).collect();
    idx.reverse();
    let g = f.subset(&idx);
    let x = f.layer_matrix(spec.planted_layer).unwrap();
    let y = g.layer_matrix(spec.planted_layer).unwrap();
    let a = loocv_predictions(&x, &f.rate).unwrap();
    let mut b = loocv_predictions(&y, &g.rate).unwrap();
    b.reverse();
    for (p, q) in a.iter().zip(&b) {
        assert!((p - q).abs() < 1e-9);
    }
}

#[test]
fn auroc_of_negated_label_is_complement() {
    let (spec, f) = planted();
    let x = f.layer_matrix(spec.planted_layer - 1).unwrap();
    let lab = f.mostly_hall();
    let neg: Vec<bool> = lab.iter().map(|b| !b).collect();
    // a refit probe learns the negated target, so its AUROC is unchanged
    let a = cv_auroc(&x, &lab, 4).unwrap().unwrap();
    let b = cv_auroc(&x, &neg, 4).unwrap().unwrap();
    assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    // fixed scores against the negated label give the complement
    let pred = loocv_predictions(&x, &f.rate).unwrap();
    let split = |l: &[bool]| -> (Vec<f64>, Vec<f64>) {
        let pos = (0..l.len()).filter(|&i| l[i]).map(|i| pred[i]).collect();
        let neg = (0..l.len()).filter(|&i| !l[i]).map(|i| pred[i]).collect();
        (pos, neg)
    };
    let (p1, n1) = split(&lab);
    let (p2, n2) = split(&neg);
    let s = trajlab::stats::auroc(&p1, &n1).unwrap() + trajlab::stats::auroc(&p2, &n2).unwrap();
    assert!((s - 1.0).abs() < 1e-12);
}

#[test]
fn within_category_skips_degenerate_groups() {
    let (spec, f) = planted();
    // each planted category has one rate
    match within_category_probe(&f, spec.planted_layer, &[Category::ALL[0]], 5, 50, 0).unwrap() {
        WithinCategory::Skipped { reason, .. } => assert!(reason.contains("std")),
        other => panic!("{other:?}"),
    }
    let w = within_category_probe(&f, spec.planted_layer, &Category::ALL[..2], 5, 50, 0).unwrap();
    assert!(matches!(w, WithinCategory::Probed { n: 41, .. }), "{w:?}");
}

#[test]
fn recorded_counts_reproduce_category_rates() {
    let r = replay_counts(&fixtures::prompt_counts(), 0.7);
    for (cat, n, mean, std, ..) in WITHIN_CATEGORY {
        let rates: Vec<f64> = r.prompts.iter().filter(|p| p.category == cat).map(|p| p.counts.hall_rate()).collect();
        assert_eq!(rates.len(), n);
        let m = rates.iter().sum::<f64>() / n as f64;
        assert!((m - mean).abs() < 0.006, "{cat:?} mean {m}");
        assert!((population_std(&rates) - std).abs() < 0.006, "{cat:?} std");
    }
}

#[test]
fn step0_features_from_fork_model() {
    let spec = ForkSpec { regimes: vec![0.2, 0.5, 0.8], ..ForkSpec::default() };
    let m = build_fork_model(&spec).unwrap().0;
    let data = m.dataset(30, 1);
    let cfg = Phase1Config { n_samples: 20, temperature: 1.0, n_steps: m.spec.n_steps, master_seed: 0 };
    let report = run_phase1(&m.engine(), &m.vocab.vocab, &data, &cfg).unwrap();
    let f = extract_step0(&m.engine(), &m.vocab.vocab, &data, &report).unwrap();
    assert_eq!(f, extract_step0(&m.engine(), &m.vocab.vocab, &data, &report).unwrap());
    assert_eq!(f.h0[0].len(), m.spec.n_layers);
    assert_eq!(f.h0[0][0].len(), m.config().d_model);
    // same prompt tokens, same features
    let twin = vec![data[0].clone(), trajlab::PromptSpec { id: 999, ..data[0].clone() }];
    let mut rep2 = report.clone();
    let mut o = rep2.prompts[0].clone();
    o.prompt_id = 999;
    rep2.prompts.push(o);
    let g = extract_step0(&m.engine(), &m.vocab.vocab, &twin, &rep2).unwrap();
    assert_eq!(g.h0[0], g.h0[1]);
    // prompts 0 and 1 differ in regime; the readout layer sees it
    let last = m.spec.n_layers - 1;
    assert_ne!(f.h0[0][last], f.h0[1][last]);

    let missing = vec![trajlab::PromptSpec { id: 4242, ..data[0].clone() }];
    match extract_step0(&m.engine(), &m.vocab.vocab, &missing, &report) {
        Err(ProbeError::MissingTargets(ids)) => assert_eq!(ids, vec![4242]),
        other => panic!("{other:?}"),
    }
}
