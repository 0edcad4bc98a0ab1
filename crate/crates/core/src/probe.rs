//! Step-0 regime analysis: per-layer residual features at the last prompt
//! token, linear probes against the per-prompt hallucination rate, and
//! clustering of the same features.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand_distr::{Distribution as _, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Category, PromptSpec};
use crate::model::{generate, Engine, HookSpec, ModelError};
use crate::phase1::{BifurcationReport, Status};
use crate::rng::{derive_seed, rng_from_seed};
use crate::stats::{
    anova_f_eta2, auroc, gmm_diag, kmeans, pca_fit, pearson, permutation_null, population_std, ridge_fit, silhouette, spearman, zscore_fit,
    GroupedSamples, NullSummary, StatsError,
};
use crate::vocab::Vocab;

pub const PCA_COMPONENTS: usize = 20;
pub const RIDGE_ALPHA: f64 = 1.0;
pub const AUROC_FOLDS: usize = 5;
/// Target spread at or below this is treated as zero.
pub const STD_FLOOR: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ProbeError {
    #[error("no phase-1 counts for prompts {0:?}")]
    MissingTargets(Vec<u32>),
    #[error("prompt {id}: {message}")]
    Prompt { id: u32, message: String },
    #[error("degenerate targets: {0}")]
    Degenerate(String),
    #[error("layer {0} out of range")]
    Layer(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

pub type Result<T> = std::result::Result<T, ProbeError>;

/// Step-0 features of a prompt set with phase-1 targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeFeatures {
    pub prompt_ids: Vec<u32>,
    pub categories: Vec<Category>,
    /// `h0[prompt][layer]`, each of length d_model.
    pub h0: Vec<Vec<Vec<f32>>>,
    /// Hallucination fraction H/N per prompt.
    pub rate: Vec<f64>,
    pub bifurcating: Vec<bool>,
}

impl RegimeFeatures {
    pub fn n_prompts(&self) -> usize {
        self.prompt_ids.len()
    }

    pub fn n_layers(&self) -> usize {
        self.h0.first().map_or(0, Vec::len)
    }

    pub fn mostly_hall(&self) -> Vec<bool> {
        self.rate.iter().map(|&r| r > 0.5).collect()
    }

    pub fn layer_matrix(&self, layer: usize) -> Result<DMatrix<f64>> {
        if layer >= self.n_layers() {
            return Err(ProbeError::Layer(layer));
        }
        let d = self.h0[0][layer].len();
        Ok(DMatrix::from_fn(self.n_prompts(), d, |i, j| f64::from(self.h0[i][layer][j])))
    }

    /// The prompts at `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> RegimeFeatures {
        RegimeFeatures {
            prompt_ids: idx.iter().map(|&i| self.prompt_ids[i]).collect(),
            categories: idx.iter().map(|&i| self.categories[i]).collect(),
            h0: idx.iter().map(|&i| self.h0[i].clone()).collect(),
            rate: idx.iter().map(|&i| self.rate[i]).collect(),
            bifurcating: idx.iter().map(|&i| self.bifurcating[i]).collect(),
        }
    }
}

/// One forward pass per prompt; the hook-point residual at the last prompt
/// token is kept at every layer.
pub fn extract_step0(engine: &Engine, vocab: &Vocab, dataset: &[PromptSpec], report: &BifurcationReport) -> Result<RegimeFeatures> {
    let missing: Vec<u32> = dataset.iter().filter(|s| report.outcome(s.id).is_none_or(|o| o.counts.total() == 0)).map(|s| s.id).collect();
    if !missing.is_empty() {
        return Err(ProbeError::MissingTargets(missing));
    }
    let h0 = dataset
        .par_iter()
        .map(|s| {
            let prompt = s.token_ids(vocab).map_err(|e| ProbeError::Prompt { id: s.id, message: e.to_string() })?;
            let g = generate(engine, &prompt, 1, 0.0, 0, &HookSpec::capture(), &[])?;
            Ok(g.cache.expect("capture requested").resid.swap_remove(0))
        })
        .collect::<Result<Vec<_>>>()?;
    let outcomes: Vec<_> = dataset.iter().map(|s| report.outcome(s.id).expect("checked above")).collect();
    Ok(RegimeFeatures {
        prompt_ids: dataset.iter().map(|s| s.id).collect(),
        categories: dataset.iter().map(|s| s.category).collect(),
        h0,
        rate: outcomes.iter().map(|o| o.counts.hall_rate()).collect(),
        bifurcating: outcomes.iter().map(|o| o.status == Status::Bifurcating).collect(),
    })
}

fn rows(x: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), x.ncols(), |i, j| x[(idx[i], j)])
}

/// standardize -> PCA -> ridge, fit on `train`, predicting `test`.
fn fit_predict(x: &DMatrix<f64>, y: &[f64], train: &[usize], test: &[usize]) -> Result<Vec<f64>> {
    let xt = rows(x, train);
    let yt: Vec<f64> = train.iter().map(|&i| y[i]).collect();
    let z = zscore_fit(&xt)?;
    let zt = z.apply(&xt);
    let n_comp = PCA_COMPONENTS.min(train.len() - 1).min(x.ncols());
    let pca = pca_fit(&zt, n_comp)?;
    let ridge = ridge_fit(&pca.transform(&zt), &yt, RIDGE_ALPHA)?;
    Ok(ridge.predict(&pca.transform(&z.apply(&rows(x, test)))))
}

/// Leave-one-out predictions, in prompt order.
pub fn loocv_predictions(x: &DMatrix<f64>, y: &[f64]) -> Result<Vec<f64>> {
    let n = x.nrows();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let train: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            Ok(fit_predict(x, y, &train, &[i])?[0])
        })
        .collect()
}

/// Seeded round-robin assignment within each class after shuffling. One
/// shuffle of all indices drives both classes, so negating the labels keeps
/// the folds.
pub fn stratified_folds(labels: &[bool], k: usize, seed: u64) -> Vec<usize> {
    let mut rng = rng_from_seed(derive_seed(seed, &[0xf01d]));
    let mut idx: Vec<usize> = (0..labels.len()).collect();
    idx.shuffle(&mut rng);
    let mut next = [0usize; 2];
    let mut fold = vec![0; labels.len()];
    for i in idx {
        let c = usize::from(labels[i]);
        fold[i] = next[c] % k;
        next[c] += 1;
    }
    fold
}

/// Seeded shuffle, then round-robin.
pub fn kfold(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut rng = rng_from_seed(derive_seed(seed, &[0xf01e]));
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    let mut fold = vec![0; n];
    for (r, i) in idx.into_iter().enumerate() {
        fold[i] = r % k;
    }
    fold
}

fn cv_predictions(x: &DMatrix<f64>, y: &[f64], folds: &[usize], k: usize) -> Result<Vec<f64>> {
    let mut pred = vec![0.0; y.len()];
    for f in 0..k {
        let test: Vec<usize> = (0..y.len()).filter(|&i| folds[i] == f).collect();
        if test.is_empty() {
            continue;
        }
        let train: Vec<usize> = (0..y.len()).filter(|&i| folds[i] != f).collect();
        for (i, p) in test.iter().zip(fit_predict(x, y, &train, &test)?) {
            pred[*i] = p;
        }
    }
    Ok(pred)
}

/// Mean per-fold AUROC of the probe on 0/1 targets; folds lacking a class are
/// skipped. `None` if no fold has both classes.
pub fn cv_auroc(x: &DMatrix<f64>, labels: &[bool], seed: u64) -> Result<Option<f64>> {
    let folds = stratified_folds(labels, AUROC_FOLDS, seed);
    let y: Vec<f64> = labels.iter().map(|&b| f64::from(u8::from(b))).collect();
    if labels.iter().filter(|&&b| b).count() < 2 || labels.iter().filter(|&&b| !b).count() < 2 {
        return Ok(None);
    }
    let pred = cv_predictions(x, &y, &folds, AUROC_FOLDS)?;
    let mut scores = Vec::new();
    for f in 0..AUROC_FOLDS {
        let (mut pos, mut neg) = (vec![], vec![]);
        for i in (0..labels.len()).filter(|&i| folds[i] == f) {
            if labels[i] { pos.push(pred[i]) } else { neg.push(pred[i]) }
        }
        if !pos.is_empty() && !neg.is_empty() {
            scores.push(auroc(&pos, &neg)?);
        }
    }
    Ok((!scores.is_empty()).then(|| scores.iter().sum::<f64>() / scores.len() as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerProbe {
    pub layer: usize,
    pub pearson: f64,
    pub spearman: f64,
    pub auroc_mostly_hall: Option<f64>,
    pub auroc_bifurcating: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub layers: Vec<LayerProbe>,
    /// Layer with the highest LOOCV pearson.
    pub best_layer: usize,
}

fn check_targets(f: &RegimeFeatures) -> Result<()> {
    if f.n_prompts() < 10 {
        return Err(ProbeError::Degenerate(format!("{} prompts, need at least 10", f.n_prompts())));
    }
    if population_std(&f.rate) <= STD_FLOOR {
        return Err(ProbeError::Degenerate("targets have zero variance".into()));
    }
    Ok(())
}

pub fn probe_layer(f: &RegimeFeatures, layer: usize, seed: u64) -> Result<LayerProbe> {
    let x = f.layer_matrix(layer)?;
    let pred = loocv_predictions(&x, &f.rate)?;
    let corr = |r: std::result::Result<f64, StatsError>| r.or_else(|e| if e == StatsError::UndefinedCorrelation { Ok(0.0) } else { Err(e) });
    Ok(LayerProbe {
        layer,
        pearson: corr(pearson(&pred, &f.rate))?,
        spearman: corr(spearman(&pred, &f.rate))?,
        auroc_mostly_hall: cv_auroc(&x, &f.mostly_hall(), seed)?,
        auroc_bifurcating: cv_auroc(&x, &f.bifurcating, seed)?,
    })
}

pub fn probe_layer_sweep(f: &RegimeFeatures, seed: u64) -> Result<ProbeResult> {
    check_targets(f)?;
    let layers = (0..f.n_layers()).into_par_iter().map(|l| probe_layer(f, l, seed)).collect::<Result<Vec<_>>>()?;
    let best_layer = layers.iter().max_by(|a, b| a.pearson.total_cmp(&b.pearson).then(b.layer.cmp(&a.layer))).map_or(0, |l| l.layer);
    Ok(ProbeResult { layers, best_layer })
}

/// Null distribution of the LOOCV pearson under shuffled targets.
pub fn probe_permutation(f: &RegimeFeatures, layer: usize, n_perm: usize, seed: u64) -> Result<NullSummary> {
    check_targets(f)?;
    let x = f.layer_matrix(layer)?;
    let stat = |x: &DMatrix<f64>, y: &[f64]| loocv_predictions(x, y).ok().and_then(|p| pearson(&p, y).ok()).unwrap_or(0.0);
    Ok(permutation_null(stat, &x, &f.rate, n_perm, seed))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterMethod {
    Kmeans,
    GmmDiag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterFit {
    pub k: usize,
    pub method: ClusterMethod,
    pub assignments: Vec<usize>,
    pub silhouette: f64,
    pub f: f64,
    pub p_value: f64,
    pub eta2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterConfig {
    pub kmeans_n_init: usize,
    pub gmm_n_init: usize,
    pub reg_covar: f64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig { kmeans_n_init: 20, gmm_n_init: 5, reg_covar: 1e-4 }
    }
}

/// Standardized, PCA-reduced features at one layer (the clustering space).
pub fn reduced_features(f: &RegimeFeatures, layer: usize) -> Result<DMatrix<f64>> {
    let x = f.layer_matrix(layer)?;
    let z = zscore_fit(&x)?.apply(&x);
    let n_comp = PCA_COMPONENTS.min(x.nrows() - 1).min(x.ncols());
    Ok(pca_fit(&z, n_comp)?.transform(&z))
}

pub fn cluster_fit(f: &RegimeFeatures, x: &DMatrix<f64>, k: usize, method: ClusterMethod, cfg: &ClusterConfig, seed: u64) -> Result<ClusterFit> {
    let assignments = match method {
        ClusterMethod::Kmeans => kmeans(x, k, cfg.kmeans_n_init, seed)?.assignments,
        ClusterMethod::GmmDiag => gmm_diag(x, k, cfg.gmm_n_init, cfg.reg_covar, seed)?,
    };
    let a = anova_f_eta2(&GroupedSamples::from_assignments(&f.rate, &assignments)?);
    Ok(ClusterFit { k, method, silhouette: silhouette(x, &assignments)?, f: a.f, p_value: a.p_value, eta2: a.eta2, assignments })
}

pub fn cluster_sweep(f: &RegimeFeatures, layer: usize, ks: &[usize], cfg: &ClusterConfig, seed: u64) -> Result<Vec<ClusterFit>> {
    let x = reduced_features(f, layer)?;
    let jobs: Vec<(usize, ClusterMethod)> = ks.iter().flat_map(|&k| [(k, ClusterMethod::Kmeans), (k, ClusterMethod::GmmDiag)]).collect();
    jobs.par_iter().map(|&(k, m)| cluster_fit(f, &x, k, m, cfg, seed)).collect()
}

/// Smallest k whose eta^2 is within 1e-9 of the method's maximum.
pub fn best_k(fits: &[ClusterFit], method: ClusterMethod) -> Option<usize> {
    let of: Vec<&ClusterFit> = fits.iter().filter(|c| c.method == method).collect();
    let max = of.iter().map(|c| c.eta2).fold(f64::NEG_INFINITY, f64::max);
    of.iter().filter(|c| c.eta2 >= max - 1e-9).map(|c| c.k).min()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterComposition {
    pub cluster: usize,
    pub size: usize,
    pub mean_rate: f64,
    /// Population standard deviation.
    pub std_rate: f64,
    pub n_bifurcating: usize,
    pub categories: BTreeMap<Category, usize>,
}

/// Per-cluster table ordered by mean rate.
pub fn cluster_composition(fit: &ClusterFit, f: &RegimeFeatures) -> Result<Vec<ClusterComposition>> {
    if fit.k < 2 {
        return Err(StatsError::Precondition("need k >= 2".into()).into());
    }
    if fit.assignments.len() != f.n_prompts() {
        return Err(StatsError::Dimension("assignments do not cover the prompts".into()).into());
    }
    let mut out: Vec<ClusterComposition> = (0..fit.k)
        .map(|c| {
            let members: Vec<usize> = (0..f.n_prompts()).filter(|&i| fit.assignments[i] == c).collect();
            let rates: Vec<f64> = members.iter().map(|&i| f.rate[i]).collect();
            let mut categories = BTreeMap::new();
            for &i in &members {
                *categories.entry(f.categories[i]).or_insert(0) += 1;
            }
            ClusterComposition {
                cluster: c,
                size: members.len(),
                mean_rate: if rates.is_empty() { 0.0 } else { rates.iter().sum::<f64>() / rates.len() as f64 },
                std_rate: population_std(&rates),
                n_bifurcating: members.iter().filter(|&&i| f.bifurcating[i]).count(),
                categories,
            }
        })
        .filter(|c| c.size > 0)
        .collect();
    out.sort_by(|a, b| a.mean_rate.total_cmp(&b.mean_rate).then(a.cluster.cmp(&b.cluster)));
    Ok(out)
}

/// Fraction of prompts whose cluster's majority category is their own.
pub fn composition_purity(table: &[ClusterComposition]) -> f64 {
    let total: usize = table.iter().map(|c| c.size).sum();
    let majority: usize = table.iter().map(|c| c.categories.values().copied().max().unwrap_or(0)).sum();
    if total == 0 { 0.0 } else { majority as f64 / total as f64 }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum WithinCategory {
    Probed { n: usize, mean_rate: f64, std_rate: f64, pearson: f64, spearman: f64, p_perm: f64 },
    Skipped { n: usize, reason: String },
}

pub const WITHIN_MIN_N: usize = 8;

/// K-fold CV probe restricted to the prompts in `categories`, with a
/// permutation p-value over fixed folds.
pub fn within_category_probe(f: &RegimeFeatures, layer: usize, categories: &[Category], folds: usize, n_perm: usize, seed: u64) -> Result<WithinCategory> {
    let idx: Vec<usize> = (0..f.n_prompts()).filter(|&i| categories.contains(&f.categories[i])).collect();
    let sub = f.subset(&idx);
    let n = idx.len();
    if n < WITHIN_MIN_N {
        return Ok(WithinCategory::Skipped { n, reason: format!("n = {n} < {WITHIN_MIN_N}") });
    }
    let std_rate = population_std(&sub.rate);
    if std_rate <= STD_FLOOR {
        return Ok(WithinCategory::Skipped { n, reason: "std(r) = 0".into() });
    }
    let x = sub.layer_matrix(layer)?;
    let fold = kfold(n, folds, seed);
    let pred = cv_predictions(&x, &sub.rate, &fold, folds)?;
    let stat = |x: &DMatrix<f64>, y: &[f64]| cv_predictions(x, y, &fold, folds).ok().and_then(|p| pearson(&p, y).ok()).unwrap_or(0.0);
    let null = permutation_null(stat, &x, &sub.rate, n_perm, seed);
    Ok(WithinCategory::Probed {
        n,
        mean_rate: sub.rate.iter().sum::<f64>() / n as f64,
        std_rate,
        pearson: pearson(&pred, &sub.rate).unwrap_or(0.0),
        spearman: spearman(&pred, &sub.rate).unwrap_or(0.0),
        p_perm: null.p_value,
    })
}

/// Synthetic features with a planted regime structure at one layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantSpec {
    pub n_prompts: usize,
    pub n_layers: usize,
    pub d_model: usize,
    pub planted_layer: usize,
    pub n_regimes: usize,
    /// Distance of every regime centroid from the origin, in noise units.
    pub separation: f64,
    pub noise: f64,
    pub seed: u64,
}

impl Default for PlantSpec {
    fn default() -> Self {
        PlantSpec { n_prompts: 61, n_layers: 4, d_model: 32, planted_layer: 2, n_regimes: 3, separation: 8.0, noise: 1.0, seed: 0 }
    }
}

/// Prompt `i` belongs to regime `i % n_regimes`, with category and
/// hallucination rate fixed per regime. The planted layer adds the regime's
/// random centroid to isotropic noise; every other layer is noise only.
pub fn planted_features(spec: &PlantSpec) -> Result<RegimeFeatures> {
    let k = spec.n_regimes;
    if k < 2 || k > Category::ALL.len() || spec.planted_layer >= spec.n_layers || spec.n_prompts < 2 * k {
        return Err(ProbeError::Degenerate(format!("unusable plant spec {spec:?}")));
    }
    let mut rng = rng_from_seed(derive_seed(spec.seed, &[0x91a7]));
    let centroids: Vec<Vec<f64>> = (0..k)
        .map(|_| {
            let v: Vec<f64> = (0..spec.d_model).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter().map(|x| x / norm * spec.separation * spec.noise).collect()
        })
        .collect();
    let noise = Normal::new(0.0, spec.noise).map_err(|e| ProbeError::Degenerate(e.to_string()))?;
    let h0 = (0..spec.n_prompts)
        .map(|i| {
            (0..spec.n_layers)
                .map(|l| {
                    (0..spec.d_model)
                        .map(|j| {
                            let c = if l == spec.planted_layer { centroids[i % k][j] } else { 0.0 };
                            (c + noise.sample(&mut rng)) as f32
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    let rate_of = |r: usize| (r as f64 + 0.5) / k as f64;
    Ok(RegimeFeatures {
        prompt_ids: (0..spec.n_prompts as u32).collect(),
        categories: (0..spec.n_prompts).map(|i| Category::ALL[i % k]).collect(),
        h0,
        rate: (0..spec.n_prompts).map(|i| rate_of(i % k)).collect(),
        bifurcating: (0..spec.n_prompts).map(|i| (0.25..=0.75).contains(&rate_of(i % k))).collect(),
    })
}

fn csv_string(header: &[&str], rows: Vec<Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory");
    for r in rows {
        w.write_record(&r).expect("in-memory");
    }
    String::from_utf8(w.into_inner().expect("in-memory")).expect("utf-8")
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |v| format!("{v:.6}"))
}

pub fn layer_sweep_csv(r: &ProbeResult) -> String {
    let rows = r.layers.iter().map(|l| vec![l.layer.to_string(), format!("{:.6}", l.pearson), format!("{:.6}", l.spearman), opt(l.auroc_mostly_hall), opt(l.auroc_bifurcating)]).collect();
    csv_string(&["layer", "pearson", "spearman", "auroc_mostly_hall", "auroc_bifurcating"], rows)
}

pub fn cluster_sweep_csv(fits: &[ClusterFit]) -> String {
    let rows = fits
        .iter()
        .map(|c| {
            let m = if c.method == ClusterMethod::Kmeans { "kmeans" } else { "gmm_diag" };
            vec![c.k.to_string(), m.into(), format!("{:.6}", c.silhouette), format!("{:.6}", c.f), format!("{:.6e}", c.p_value), format!("{:.6}", c.eta2)]
        })
        .collect();
    csv_string(&["k", "method", "silhouette", "anova_f", "p_value", "eta2"], rows)
}

pub fn composition_csv(table: &[ClusterComposition]) -> String {
    let rows = table
        .iter()
        .map(|c| {
            let cats = c.categories.iter().map(|(k, v)| format!("{} ({v})", k.as_str())).collect::<Vec<_>>().join(", ");
            vec![c.cluster.to_string(), c.size.to_string(), format!("{:.6}", c.mean_rate), format!("{:.6}", c.std_rate), c.n_bifurcating.to_string(), cats]
        })
        .collect();
    csv_string(&["cluster", "n", "mean_rate", "std_rate", "n_bifurcating", "categories"], rows)
}

pub fn within_category_csv(rows: &[(String, WithinCategory)]) -> String {
    let rows = rows
        .iter()
        .map(|(name, w)| match w {
            WithinCategory::Probed { n, mean_rate, std_rate, pearson, spearman, p_perm } => vec![
                name.clone(),
                n.to_string(),
                format!("{mean_rate:.6}"),
                format!("{std_rate:.6}"),
                format!("{pearson:.6}"),
                format!("{spearman:.6}"),
                format!("{p_perm:.6}"),
                String::new(),
            ],
            WithinCategory::Skipped { n, reason } => vec![name.clone(), n.to_string(), String::new(), String::new(), String::new(), String::new(), String::new(), reason.clone()],
        })
        .collect();
    csv_string(&["category", "n", "mean_rate", "std_rate", "pearson", "spearman", "p_perm", "skipped"], rows)
}
