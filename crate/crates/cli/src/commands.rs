//! One function per subcommand. Each writes into a locked output directory
//! and returns the seeds it used; `lib.rs` handles manifests and failures.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use trajlab::fixtures;
use trajlab::phase1::{replay_counts, run_phase1, BifurcationReport, Phase1Config, Status};
use trajlab::phase2::{analyze, collect_runs, CollectConfig, RunPair, ONSET_THRESHOLD};
use trajlab::phase3::{
    asymmetry_from_table4, control_csv, control_table, control_table_from_fixture, sweep_csv, table4_csv, table4_from_counts, table4_from_sweep,
    AsymmetrySummary, PatchCondition, PatchPrompt, Patcher, SweepResult, TrialConfig,
};
use trajlab::probe::{
    best_k, cluster_composition, cluster_sweep, composition_csv, composition_purity, cluster_sweep_csv, extract_step0, layer_sweep_csv,
    planted_features, probe_layer_sweep, probe_permutation, within_category_csv, within_category_probe, ClusterConfig, ClusterMethod, AUROC_FOLDS,
};
use trajlab::synth::build_fork_model;
use trajlab::trace::{list_bundles, read_bundle, write_bundle};
use trajlab::Category;

use crate::config::RunConfig;
use crate::manifest::{verify, OutDir, MANIFEST};
use crate::source::{self, Source, DATASET_FILE, SPEC_FILE, VOCAB_FILE, WEIGHTS_FILE};

pub type Seeds = Vec<(String, u64)>;

pub const PHASES: [&str; 4] = ["phase1", "phase2", "phase3", "probe"];

fn master(cfg: &RunConfig) -> Seeds {
    vec![("master".into(), cfg.seed)]
}

fn read_report(run_dir: &Path) -> Result<Option<BifurcationReport>> {
    let p = run_dir.join("phase1").join("report.json");
    if !p.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(&p)?;
    Ok(Some(serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?))
}

fn category_csv(r: &BifurcationReport) -> String {
    let mut s = String::from("category,total");
    for st in Status::ALL {
        write!(s, ",{}", st.as_str()).unwrap();
    }
    s.push('\n');
    let mut rows: Vec<(String, &trajlab::phase1::Tally)> = r.by_category.iter().map(|(c, t)| (c.as_str().to_string(), t)).collect();
    rows.push(("total".into(), &r.overall));
    for (name, t) in rows {
        write!(s, "{name},{}", t.total).unwrap();
        for st in Status::ALL {
            write!(s, ",{}", t.get(st)).unwrap();
        }
        s.push('\n');
    }
    s
}

pub fn phase1(cfg: &RunConfig, src: Option<&Source>, out: &OutDir) -> Result<Seeds> {
    let report = match src {
        None => replay_counts(&fixtures::prompt_counts(), cfg.temperature.unwrap_or(0.7)),
        Some(src) => {
            let p1 = Phase1Config { n_samples: cfg.samples, temperature: src.temperature, n_steps: src.n_steps, master_seed: cfg.seed };
            run_phase1(&src.engine, &src.vocab, &src.dataset, &p1)?
        }
    };
    out.write_json("report.json", &report)?;
    out.write("prompts.csv", report.to_csv()?)?;
    out.write("categories.csv", category_csv(&report))?;
    Ok(master(cfg))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PairSummary {
    prompt_id: u32,
    attempts: Option<usize>,
    onset: Option<usize>,
    max_kl: Option<f64>,
    error: Option<String>,
}

fn collect_config(cfg: &RunConfig, src: &Source) -> CollectConfig {
    CollectConfig { k: cfg.k, temperature: src.temperature, n_steps: src.n_steps, max_attempts: cfg.max_attempts, master_seed: cfg.seed }
}

pub fn phase2(cfg: &RunConfig, src: &Source, run_dir: &Path, out: &OutDir) -> Result<Seeds> {
    let mut specs: Vec<_> = src.dataset.iter().collect();
    if let Some(r) = read_report(run_dir)? {
        specs.retain(|s| r.outcome(s.id).is_some_and(|o| o.status == Status::Bifurcating));
        if specs.is_empty() {
            bail!("phase 1 report has no bifurcating prompts");
        }
    }
    let n_layers = src.engine.config().n_layers;
    let layers = cfg.layers.clone().unwrap_or_else(|| (0..n_layers).collect());
    let cc = collect_config(cfg, src);
    let mut summary = Vec::new();
    for spec in specs {
        let mut row = PairSummary { prompt_id: spec.id, attempts: None, onset: None, max_kl: None, error: None };
        match collect_runs(&src.engine, &src.vocab, spec, &cc).map_err(anyhow::Error::from).and_then(|pair| {
            for r in pair.runs() {
                write_bundle(&out.path("runs"), &r.to_bundle(&src.name, src.engine.hook_point(), Some(src.vocab.decode(&r.tokens))))?;
            }
            Ok((analyze(&pair, ONSET_THRESHOLD, &layers)?, pair.attempts))
        }) {
            Ok((d, attempts)) => {
                out.write(&format!("kl/{}.csv", spec.id), d.kl_csv())?;
                out.write(&format!("heatmap/{}.csv", spec.id), d.heatmap_csv())?;
                out.write(&format!("trajectories/{}.csv", spec.id), d.trajectory_csv())?;
                row.attempts = Some(attempts);
                row.onset = d.kl.onset;
                row.max_kl = d.kl.kl.iter().copied().reduce(f64::max);
            }
            Err(e) => {
                log::warn!("prompt {}: {e:#}", spec.id);
                row.error = Some(format!("{e:#}"));
            }
        }
        summary.push(row);
    }
    out.write_json("summary.json", &summary)?;
    if summary.iter().all(|r| r.error.is_some()) {
        bail!("no prompt produced a complete run pair");
    }
    Ok(master(cfg))
}

fn load_pairs(src: &Source, root: &Path) -> Result<Vec<PatchPrompt>> {
    let mut by_prompt: BTreeMap<u32, Vec<_>> = BTreeMap::new();
    for (pid, _, dir) in list_bundles(root)? {
        by_prompt.entry(pid).or_default().push(read_bundle(&dir)?);
    }
    let mut out = Vec::new();
    for (pid, bundles) in by_prompt {
        let Some(spec) = src.dataset.iter().find(|s| s.id == pid) else {
            log::warn!("runs for prompt {pid} have no dataset entry");
            continue;
        };
        let pair = RunPair::from_bundles(spec.token_ids(&src.vocab)?, &bundles)?;
        out.push(PatchPrompt { spec: spec.clone(), pair });
    }
    Ok(out)
}

fn merge(into: &mut SweepResult, r: SweepResult) {
    into.cells.extend(r.cells);
    into.trials.extend(r.trials);
}

pub fn phase3(cfg: &RunConfig, src: Option<&Source>, run_dir: &Path, out: &OutDir) -> Result<Seeds> {
    let Some(src) = src else {
        let rows = table4_from_counts(&fixtures::layer_counts());
        out.write("table4.csv", table4_csv(&rows))?;
        out.write_json("asymmetry.json", &asymmetry_from_table4(&rows)?)?;
        out.write("controls.csv", control_csv(&control_table_from_fixture(&fixtures::controls())?))?;
        return Ok(Vec::new());
    };
    let runs = run_dir.join("phase2").join("runs");
    let prompts = if runs.is_dir() {
        load_pairs(src, &runs)?
    } else {
        let cc = collect_config(cfg, src);
        src.dataset
            .iter()
            .filter_map(|spec| match collect_runs(&src.engine, &src.vocab, spec, &cc) {
                Ok(pair) => Some(PatchPrompt { spec: spec.clone(), pair }),
                Err(e) => {
                    log::warn!("prompt {}: {e}", spec.id);
                    None
                }
            })
            .collect()
    };
    if prompts.is_empty() {
        bail!("no prompt has runs of both classes");
    }
    let p = Patcher {
        engine: &src.engine,
        vocab: &src.vocab,
        prompts: &prompts,
        trials_per_prompt: cfg.trials,
        master_seed: cfg.seed,
        trial: TrialConfig { temperature: src.temperature, n_steps: 0 },
    };
    let layers = cfg.layers.clone().unwrap_or_else(|| (0..p.n_layers()).collect());
    let conds = &cfg.conditions;
    let mut sweep = SweepResult::default();
    for &step in &cfg.steps {
        merge(&mut sweep, p.layer_sweep(conds, step, &layers)?);
    }
    let first = [cfg.steps[0]];
    let rows = table4_from_sweep(&sweep, &first);
    if !rows.is_empty() {
        out.write("table4.csv", table4_csv(&rows))?;
        match asymmetry_from_table4(&rows) {
            Ok(a) => out.write_json("asymmetry.json", &a)?,
            Err(e) => log::warn!("asymmetry summary: {e}"),
        }
    }
    let correction = |l: usize| sweep.cell(PatchCondition::CorrectionHtoC, l, &first);
    let control_layer = cfg.control_layer.or_else(|| {
        layers.iter().copied().filter(|&l| correction(l).is_some()).max_by(|&a, &b| {
            correction(a).unwrap().flip_rate.total_cmp(&correction(b).unwrap().flip_rate).then(b.cmp(&a))
        })
    });
    if let Some(l) = control_layer.filter(|&l| correction(l).is_some()) {
        let mut rows = Vec::new();
        for c in [PatchCondition::CorrectionHtoC, PatchCondition::RandomClean, PatchCondition::WrongToWrong, PatchCondition::Baseline] {
            if let Some(cell) = sweep.cell(c, l, &first) {
                rows.push((format!("{}@L{l}", c.as_str()), cell.flips, cell.n_trials));
            }
        }
        if rows.len() > 1 && rows.iter().all(|r| r.2 > 0) {
            out.write("controls.csv", control_csv(&control_table(&rows)?))?;
        }
    }
    out.write("sweep.csv", sweep_csv(&sweep))?;
    out.write("trials.jsonl", sweep.trials_jsonl())?;
    if !cfg.windows.is_empty() {
        let mut w = SweepResult::default();
        for &l in &layers {
            merge(&mut w, p.window_sweep(conds, l, &cfg.windows)?);
        }
        out.write("windows.csv", sweep_csv(&w))?;
        out.write("window_trials.jsonl", w.trials_jsonl())?;
    }
    Ok(master(cfg))
}

#[derive(Debug, Serialize)]
struct ProbeSummary {
    best_layer: usize,
    probe_layer: usize,
    pearson: f64,
    spearman: f64,
    null: trajlab::stats::NullSummary,
    best_k_kmeans: Option<usize>,
    best_k_gmm: Option<usize>,
    purity: Option<f64>,
}

pub fn probe(cfg: &RunConfig, src: Option<&Source>, run_dir: &Path, out: &OutDir) -> Result<Seeds> {
    let mut seeds = master(cfg);
    let f = match (cfg.planted, src) {
        (Some(spec), _) => {
            seeds.push(("planted".into(), spec.seed));
            planted_features(&spec)?
        }
        (None, Some(src)) => {
            let report = read_report(run_dir)?.ok_or_else(|| anyhow!("probe needs phase 1 output in {}", run_dir.display()))?;
            extract_step0(&src.engine, &src.vocab, &src.dataset, &report)?
        }
        (None, None) => bail!("probe needs a model or planted features"),
    };
    let res = probe_layer_sweep(&f, cfg.seed)?;
    out.write("layer_sweep.csv", layer_sweep_csv(&res))?;
    let layer = cfg.probe_layer.unwrap_or(res.best_layer);
    let lp = res.layers.iter().find(|l| l.layer == layer).ok_or_else(|| anyhow!("probe layer {layer} out of range"))?;
    let null = probe_permutation(&f, layer, cfg.n_perm, cfg.seed)?;
    let ks: Vec<usize> = cfg.cluster_ks.iter().copied().filter(|&k| k < f.n_prompts()).collect();
    let fits = cluster_sweep(&f, layer, &ks, &ClusterConfig::default(), cfg.seed)?;
    out.write("cluster_sweep.csv", cluster_sweep_csv(&fits))?;
    let bk = best_k(&fits, ClusterMethod::Kmeans);
    let mut purity = None;
    if let Some(fit) = bk.and_then(|k| fits.iter().find(|c| c.k == k && c.method == ClusterMethod::Kmeans)) {
        let table = cluster_composition(fit, &f)?;
        purity = Some(composition_purity(&table));
        out.write("composition.csv", composition_csv(&table))?;
    }
    let mut within = Vec::new();
    for c in Category::ALL.into_iter().filter(|c| f.categories.contains(c)) {
        within.push((c.as_str().to_string(), within_category_probe(&f, layer, &[c], AUROC_FOLDS, cfg.n_perm, cfg.seed)?));
    }
    out.write("within_category.csv", within_category_csv(&within))?;
    let summary = ProbeSummary {
        best_layer: res.best_layer,
        probe_layer: layer,
        pearson: lp.pearson,
        spearman: lp.spearman,
        null,
        best_k_kmeans: bk,
        best_k_gmm: best_k(&fits, ClusterMethod::GmmDiag),
        purity,
    };
    out.write_json("probe.json", &serde_json::json!({ "summary": summary, "layers": res.layers }))?;
    Ok(seeds)
}

pub fn synth_build(cfg: &RunConfig, out: &OutDir) -> Result<Seeds> {
    let (m, oracle) = build_fork_model(&cfg.synth)?;
    out.write(WEIGHTS_FILE, trajlab::model::encode_weights(&m.weights)?)?;
    out.write_json(VOCAB_FILE, &m.vocab.vocab)?;
    out.write_json(SPEC_FILE, &m.spec)?;
    out.write_json("oracle.json", &oracle)?;
    out.write_json(DATASET_FILE, &m.dataset(cfg.synth_prompts, cfg.seed))?;
    Ok(master(cfg))
}

fn md_table(csv_text: &str) -> String {
    let mut lines = csv_text.lines();
    let Some(head) = lines.next() else { return String::new() };
    let split = |l: &str| l.split(',').map(str::to_string).collect::<Vec<_>>();
    let h = split(head);
    let mut s = format!("| {} |\n|{}\n", h.join(" | "), " --- |".repeat(h.len()));
    for l in lines {
        writeln!(s, "| {} |", split(l).join(" | ")).unwrap();
    }
    s
}

pub fn report(run_dir: &Path, out: &OutDir) -> Result<Seeds> {
    let mut found = Vec::new();
    for phase in PHASES {
        let dir = run_dir.join(phase);
        if dir.join(MANIFEST).exists() {
            found.push((phase, verify(&dir)?));
        }
    }
    if found.is_empty() {
        bail!("{} holds no phase outputs", run_dir.display());
    }
    let read = |rel: &str| std::fs::read_to_string(run_dir.join(rel)).ok();
    let mut md = String::from("# Run summary\n\n| phase | files | digest |\n| --- | --- | --- |\n");
    for (phase, m) in &found {
        writeln!(md, "| {phase} | {} | {} |", m.outputs.len(), &m.digest[..16]).unwrap();
    }
    if let Some(c) = read("phase1/categories.csv") {
        md.push_str("\n## Bifurcation\n\n");
        md.push_str(&md_table(&c));
        out.write("categories.csv", c)?;
    }
    if let Some(s) = read("phase2/summary.json") {
        let rows: Vec<PairSummary> = serde_json::from_str(&s)?;
        let ok: Vec<&PairSummary> = rows.iter().filter(|r| r.error.is_none()).collect();
        let onsets: Vec<usize> = ok.iter().filter_map(|r| r.onset).collect();
        md.push_str("\n## Divergence\n\n");
        writeln!(md, "{} of {} prompts gave complete run pairs; {} crossed the KL threshold.", ok.len(), rows.len(), onsets.len()).unwrap();
        if !onsets.is_empty() {
            let mean = onsets.iter().sum::<usize>() as f64 / onsets.len() as f64;
            writeln!(md, "Mean onset step: {mean:.2}.").unwrap();
        }
    }
    if let Some(a) = read("phase3/asymmetry.json") {
        let a: AsymmetrySummary = serde_json::from_str(&a)?;
        md.push_str("\n## Patching asymmetry\n\n");
        writeln!(md, "Peak C->H {:.4}, peak H->C {:.4}, peak ratio {:.4}.", a.peak_ctoh, a.peak_htoc, a.peak_ratio).unwrap();
        writeln!(md, "Layer means: C->H {:.4} (std {:.4}), H->C {:.4} (std {:.4}), ratio {:.4}.", a.mean_ctoh, a.std_ctoh, a.mean_htoc, a.std_htoc, a.mean_ratio).unwrap();
    }
    if let Some(t) = read("phase3/table4.csv") {
        md.push_str("\n### Per-layer flip rates\n\n");
        md.push_str(&md_table(&t));
        out.write("table4.csv", t)?;
    }
    if let Some(c) = read("phase3/controls.csv") {
        md.push_str("\n## Controls\n\n");
        md.push_str(&md_table(&c));
        out.write("controls.csv", c)?;
    }
    if let Some(p) = read("probe/probe.json") {
        let v: serde_json::Value = serde_json::from_str(&p)?;
        let s = &v["summary"];
        md.push_str("\n## Step-0 probe\n\n");
        writeln!(
            md,
            "Best layer {}; probed layer {} with LOOCV pearson {:.4}, permutation p {:.4}; k-means best k {}.",
            s["best_layer"], s["probe_layer"], s["pearson"].as_f64().unwrap_or(f64::NAN), s["null"]["p_value"].as_f64().unwrap_or(f64::NAN), s["best_k_kmeans"]
        )
        .unwrap();
        if let Some(l) = read("probe/layer_sweep.csv") {
            out.write("probe_layers.csv", l)?;
        }
    }
    out.write("summary.md", md)?;
    Ok(Vec::new())
}

pub fn needs_model(cfg: &RunConfig, command: &str) -> bool {
    match command {
        "phase1" | "phase3" => !cfg.fixture,
        "phase2" => true,
        "probe" => cfg.planted.is_none(),
        _ => false,
    }
}

pub fn load_source(cfg: &RunConfig, command: &str) -> Result<Option<Source>> {
    if needs_model(cfg, command) {
        source::load(cfg).map(Some)
    } else {
        Ok(None)
    }
}
