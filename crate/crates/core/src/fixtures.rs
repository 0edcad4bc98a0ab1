//! Count tables recorded from the reference runs, shipped as CSV so the
//! statistics layer can be replayed without a model.
//!
//! `prompt_counts.csv` holds per-prompt outcome counts over 20 samples,
//! `patch_layer_counts.csv` the per-layer patching counts (24 trials a cell)
//! and `patch_controls.csv` the control conditions of the layer-20 sweep.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Category;

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("fixture row {row}: {message}")]
    Row { row: usize, message: String },
    #[error("fixture header: {0}")]
    Header(String),
    #[error("fixture invariant: {0}")]
    Invariant(String),
}

pub type Result<T> = std::result::Result<T, FixtureError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptCount {
    pub id: u32,
    pub category: Category,
    pub correct: u32,
    pub hallucination: u32,
    pub other: u32,
    /// Marked bifurcating in the recorded table.
    #[serde(deserialize_with = "bool_01", serialize_with = "bool_01_ser")]
    pub starred: bool,
}

impl PromptCount {
    pub fn n(&self) -> u32 {
        self.correct + self.hallucination + self.other
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerCount {
    pub layer: usize,
    pub n: u32,
    pub htoc_flips: u32,
    pub htoc_abstain: u32,
    pub ctoh_flips: u32,
    pub ctoh_abstain: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlCount {
    pub condition: String,
    pub flips: u32,
    pub n: u32,
}

fn bool_01<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<bool, D::Error> {
    match u8::deserialize(d)? {
        0 => Ok(false),
        1 => Ok(true),
        v => Err(serde::de::Error::custom(format!("expected 0 or 1, got {v}"))),
    }
}

fn bool_01_ser<S: serde::Serializer>(v: &bool, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_u8(u8::from(*v))
}

fn parse_rows<T: for<'de> Deserialize<'de>>(text: &str, header: &[&str]) -> Result<Vec<T>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let got = rdr.headers().map_err(|e| FixtureError::Header(e.to_string()))?;
    if got.iter().ne(header.iter().copied()) {
        return Err(FixtureError::Header(format!("expected {}, got {}", header.join(","), got.iter().collect::<Vec<_>>().join(","))));
    }
    rdr.deserialize()
        .enumerate()
        .map(|(i, r)| r.map_err(|e| FixtureError::Row { row: i + 1, message: e.to_string() }))
        .collect()
}

pub fn parse_prompt_counts(text: &str) -> Result<Vec<PromptCount>> {
    let rows: Vec<PromptCount> = parse_rows(text, &["id", "category", "correct", "hallucination", "other", "starred"])?;
    let mut seen = std::collections::HashSet::new();
    for r in &rows {
        if !seen.insert(r.id) {
            return Err(FixtureError::Invariant(format!("duplicate id {}", r.id)));
        }
    }
    Ok(rows)
}

pub fn parse_layer_counts(text: &str) -> Result<Vec<LayerCount>> {
    let rows: Vec<LayerCount> = parse_rows(text, &["layer", "n", "htoc_flips", "htoc_abstain", "ctoh_flips", "ctoh_abstain"])?;
    for (i, r) in rows.iter().enumerate() {
        if r.layer != i {
            return Err(FixtureError::Invariant(format!("row {} has layer {}", i + 1, r.layer)));
        }
        if r.htoc_flips + r.htoc_abstain > r.n || r.ctoh_flips + r.ctoh_abstain > r.n {
            return Err(FixtureError::Invariant(format!("layer {}: counts exceed n", r.layer)));
        }
    }
    Ok(rows)
}

pub fn parse_controls(text: &str) -> Result<Vec<ControlCount>> {
    let rows: Vec<ControlCount> = parse_rows(text, &["condition", "flips", "n"])?;
    if let Some(r) = rows.iter().find(|r| r.flips > r.n) {
        return Err(FixtureError::Invariant(format!("{}: flips exceed n", r.condition)));
    }
    Ok(rows)
}

pub fn prompt_counts() -> Vec<PromptCount> {
    parse_prompt_counts(include_str!("../data/prompt_counts.csv")).expect("shipped prompt counts are valid")
}

pub fn layer_counts() -> Vec<LayerCount> {
    parse_layer_counts(include_str!("../data/patch_layer_counts.csv")).expect("shipped layer counts are valid")
}

pub fn controls() -> Vec<ControlCount> {
    parse_controls(include_str!("../data/patch_controls.csv")).expect("shipped controls are valid")
}

/// Reported probe correlations per layer: (layer, pearson, spearman, auroc).
pub const PROBE_LAYER_SWEEP: [(usize, f64, f64, f64); 28] = [
    (0, 0.621, 0.549, 0.815),
    (1, 0.635, 0.570, 0.834),
    (2, 0.661, 0.628, 0.857),
    (3, 0.698, 0.668, 0.857),
    (4, 0.668, 0.643, 0.867),
    (5, 0.747, 0.701, 0.883),
    (6, 0.697, 0.668, 0.849),
    (7, 0.700, 0.691, 0.815),
    (8, 0.754, 0.728, 0.853),
    (9, 0.749, 0.719, 0.868),
    (10, 0.742, 0.719, 0.881),
    (11, 0.746, 0.730, 0.880),
    (12, 0.753, 0.728, 0.892),
    (13, 0.763, 0.743, 0.901),
    (14, 0.769, 0.755, 0.925),
    (15, 0.774, 0.754, 0.913),
    (16, 0.743, 0.727, 0.905),
    (17, 0.729, 0.714, 0.861),
    (18, 0.741, 0.728, 0.880),
    (19, 0.741, 0.715, 0.887),
    (20, 0.741, 0.705, 0.903),
    (21, 0.741, 0.714, 0.932),
    (22, 0.735, 0.715, 0.910),
    (23, 0.733, 0.712, 0.906),
    (24, 0.744, 0.724, 0.912),
    (25, 0.744, 0.729, 0.930),
    (26, 0.743, 0.718, 0.918),
    (27, 0.720, 0.699, 0.941),
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterSweepRow {
    pub k: usize,
    pub kmeans: bool,
    pub silhouette: f64,
    pub f: f64,
    pub p: f64,
    pub eta2: f64,
}

const fn row(k: usize, kmeans: bool, silhouette: f64, f: f64, p: f64, eta2: f64) -> ClusterSweepRow {
    ClusterSweepRow { k, kmeans, silhouette, f, p, eta2 }
}

/// Reported cluster sweep at the best probe layer, 61 prompts.
pub const CLUSTER_SWEEP: [ClusterSweepRow; 10] = [
    row(2, true, 0.126, 15.51, 2.2e-4, 0.250),
    row(2, false, 0.065, 3.29, 7.5e-2, 0.053),
    row(3, true, 0.158, 12.35, 3.4e-5, 0.286),
    row(3, false, 0.128, 31.37, 6.1e-7, 0.439),
    row(4, true, 0.189, 12.58, 2.0e-6, 0.520),
    row(4, false, 0.191, 6.23, 9.9e-4, 0.494),
    row(5, true, 0.264, 18.32, 1.1e-9, 0.550),
    row(5, false, 0.261, 19.07, 6.0e-10, 0.539),
    row(6, true, 0.312, 10.74, 3.1e-7, 0.396),
    row(6, false, 0.306, 15.27, 2.1e-9, 0.469),
];

pub const CLUSTER_SWEEP_N: usize = 61;

/// Reported k=5 composition: (size, mean r, std r, bifurcating, categories).
pub const CLUSTER_COMPOSITION: [(usize, f64, f64, usize, &[(Category, usize)]); 5] = [
    (6, 0.07, 0.06, 0, &[(Category::Factual, 6)]),
    (4, 0.09, 0.10, 2, &[(Category::Math, 4)]),
    (
        15,
        0.30,
        0.35,
        4,
        &[(Category::Factual, 8), (Category::MultiHop, 4), (Category::Confabulation, 2), (Category::Leading, 1)],
    ),
    (13, 0.46, 0.22, 12, &[(Category::FalsePremise, 13)]),
    (23, 0.83, 0.24, 9, &[(Category::Confabulation, 20), (Category::Leading, 2), (Category::FalsePremise, 1)]),
];

/// Reported within-category probes: (category, n, mean r, std r, pearson, spearman, permutation p).
pub const WITHIN_CATEGORY: [(Category, usize, f64, f64, f64, f64, f64); 3] = [
    (Category::Confabulation, 22, 0.89, 0.12, -0.054, 0.066, 0.418),
    (Category::Factual, 14, 0.23, 0.26, 0.453, 0.424, 0.066),
    (Category::FalsePremise, 14, 0.50, 0.25, -0.196, -0.201, 0.510),
];

pub const WITHIN_CATEGORY_N_PERM: usize = 500;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::f_survival;

    #[test]
    fn shipped_tables_load() {
        let p = prompt_counts();
        assert_eq!(p.len(), 61);
        assert!(p.iter().all(|r| r.n() == 20));
        assert_eq!(p.iter().filter(|r| r.starred).count(), 27);
        assert_eq!(layer_counts().len(), 28);
        assert_eq!(controls().len(), 4);
    }

    #[test]
    fn header_mismatch_is_reported() {
        let e = parse_controls("cond,flips,n\nx,1,2\n").unwrap_err();
        assert!(matches!(e, FixtureError::Header(_)));
    }

    #[test]
    fn bad_row_names_the_row() {
        let e = parse_controls("condition,flips,n\na,1,2\nb,x,2\n").unwrap_err();
        assert!(e.to_string().contains("row 2"), "{e}");
        assert!(parse_controls("condition,flips,n\na,3,2\n").is_err());
        assert!(parse_prompt_counts("id,category,correct,hallucination,other,starred\n0,factual,1,1,1,2\n").is_err());
    }

    #[test]
    fn composition_sizes_sum_to_61() {
        let total: usize = CLUSTER_COMPOSITION.iter().map(|c| c.0).sum();
        assert_eq!(total, 61);
        for c in CLUSTER_COMPOSITION {
            assert_eq!(c.4.iter().map(|x| x.1).sum::<usize>(), c.0);
        }
    }

    #[test]
    fn sweep_p_values_follow_from_f() {
        for r in CLUSTER_SWEEP {
            if r.k == 3 && !r.kmeans {
                continue;
            }
            let p = f_survival(r.f, (r.k - 1) as f64, (CLUSTER_SWEEP_N - r.k) as f64);
            let rel = (p - r.p).abs() / r.p;
            assert!(rel < 0.1, "k={} kmeans={} p={p:e} vs {:e}", r.k, r.kmeans, r.p);
        }
    }

    #[test]
    fn best_probe_layer_is_15() {
        let best = PROBE_LAYER_SWEEP.iter().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
        assert_eq!(best.0, 15);
    }
}
