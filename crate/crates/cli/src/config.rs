//! Run configuration: one JSON document, every field overridable by a flag.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use trajlab::phase3::PatchCondition;
use trajlab::probe::PlantSpec;
use trajlab::synth::ForkSpec;
use trajlab::HookPoint;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Model directory written by `synth-build`, a fork spec JSON, or a weights file.
    pub model: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: u64,
    /// Sampling temperature; defaults to the model's reference temperature.
    pub temperature: Option<f64>,
    /// Completions per prompt in phase 1.
    pub samples: usize,
    /// Runs per class cached in phase 2.
    pub k: usize,
    pub max_attempts: usize,
    /// Patch trials per prompt and cell.
    pub trials: usize,
    /// Generated tokens per run; defaults to the model's own length.
    pub n_steps: Option<usize>,
    /// Use only the first n dataset prompts.
    pub n_prompts: Option<usize>,
    pub hook_point: HookPoint,
    /// Layers to sweep; all layers when absent.
    pub layers: Option<Vec<usize>>,
    /// Single patch steps for the layer sweep.
    pub steps: Vec<usize>,
    /// Multi-step patch windows, swept at every selected layer.
    pub windows: Vec<Vec<usize>>,
    pub conditions: Vec<PatchCondition>,
    /// Layer for the control table; the layer with the highest correction rate when absent.
    pub control_layer: Option<usize>,
    /// Replay recorded counts instead of running the model.
    pub fixture: bool,
    /// Spec for `synth-build`.
    pub synth: ForkSpec,
    /// Prompts written by `synth-build`, or drawn for an in-memory fork spec.
    pub synth_prompts: usize,
    /// Probe planted features instead of model activations.
    pub planted: Option<PlantSpec>,
    pub n_perm: usize,
    pub cluster_ks: Vec<usize>,
    /// Layer for permutation, clustering and within-category probes; best layer when absent.
    pub probe_layer: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: None,
            dataset: None,
            out: None,
            seed: 0,
            temperature: None,
            samples: 20,
            k: 6,
            max_attempts: 200,
            trials: 3,
            n_steps: None,
            n_prompts: None,
            hook_point: HookPoint::PostAttention,
            layers: None,
            steps: vec![1],
            windows: Vec::new(),
            conditions: PatchCondition::ALL.to_vec(),
            control_layer: None,
            fixture: false,
            synth: ForkSpec::default(),
            synth_prompts: 100,
            planted: None,
            n_perm: 1000,
            cluster_ks: vec![2, 3, 4, 5, 6],
            probe_layer: None,
        }
    }
}

impl RunConfig {
    /// Accepts a bare config or a manifest, whose `config` field is used.
    pub fn from_json(text: &str) -> Result<Self, String> {
        let v: serde_json::Value = serde_json::from_str(text).map_err(|e| e.to_string())?;
        let v = match v.get("config") {
            Some(c) if v.get("outputs").is_some() => c.clone(),
            _ => v,
        };
        serde_json::from_value(v).map_err(|e| e.to_string())
    }

    pub fn validate(&self) -> Result<(), String> {
        if let Some(t) = self.temperature {
            if !(t.is_finite() && t >= 0.0) {
                return Err(format!("temperature must be >= 0, got {t}"));
            }
        }
        if self.samples < 2 {
            return Err("samples must be at least 2".into());
        }
        if self.k == 0 || self.trials == 0 || self.max_attempts == 0 || self.n_perm == 0 {
            return Err("k, trials, max_attempts and n_perm must be positive".into());
        }
        if self.n_steps == Some(0) {
            return Err("n_steps must be positive".into());
        }
        if self.steps.is_empty() {
            return Err("steps must not be empty".into());
        }
        if self.windows.iter().any(Vec::is_empty) {
            return Err("windows must not be empty".into());
        }
        if self.cluster_ks.iter().any(|&k| k < 2) {
            return Err("cluster_ks must be >= 2".into());
        }
        for (what, p) in [("model", &self.model), ("dataset", &self.dataset)] {
            if let Some(p) = p {
                if !p.exists() {
                    return Err(format!("{what} path {} does not exist", p.display()));
                }
            }
        }
        Ok(())
    }
}

/// Bound on any layer or step index, and on an expanded list's length.
pub const MAX_INDEX: usize = 1 << 16;

fn parse_item(s: &str) -> Result<Vec<usize>, String> {
    let num = |t: &str| match t.trim().parse::<usize>() {
        Ok(v) if v < MAX_INDEX => Ok(v),
        Ok(v) => Err(format!("index {v} exceeds {MAX_INDEX}")),
        Err(_) => Err(format!("not an index: {t:?}")),
    };
    match s.split_once('-') {
        Some((a, b)) => {
            let (a, b) = (num(a)?, num(b)?);
            if a > b {
                return Err(format!("empty range {s:?}"));
            }
            Ok((a..=b).collect())
        }
        None => Ok(vec![num(s)?]),
    }
}

/// `"0,2,4-6"` -> `[0, 2, 4, 5, 6]`.
pub fn parse_list(s: &str) -> Result<Vec<usize>, String> {
    let mut out = Vec::new();
    for part in s.split(',').filter(|p| !p.trim().is_empty()) {
        out.extend(parse_item(part)?);
        if out.len() > MAX_INDEX {
            return Err(format!("list longer than {MAX_INDEX}"));
        }
    }
    if out.is_empty() {
        return Err("empty list".into());
    }
    Ok(out)
}

/// `"1;1,2;1-4"` -> `[[1], [1, 2], [1, 2, 3, 4]]`.
pub fn parse_windows(s: &str) -> Result<Vec<Vec<usize>>, String> {
    s.split(';').filter(|w| !w.trim().is_empty()).map(parse_list).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lists_and_windows() {
        assert_eq!(parse_list("0,2,4-6").unwrap(), vec![0, 2, 4, 5, 6]);
        assert_eq!(parse_windows("1;1,2;1-4").unwrap(), vec![vec![1], vec![1, 2], vec![1, 2, 3, 4]]);
        assert!(parse_list("3-1").is_err());
        assert!(parse_list("x").is_err());
        assert!(parse_list("").is_err());
        assert!(parse_list("88-8888888888").is_err());
        assert!(parse_list(&"0-65535,".repeat(3)).is_err());
    }

    #[test]
    fn manifest_config_is_accepted() {
        let cfg = RunConfig { seed: 9, ..RunConfig::default() };
        let doc = serde_json::json!({ "command": "phase1", "config": cfg, "outputs": [] });
        assert_eq!(RunConfig::from_json(&doc.to_string()).unwrap(), cfg);
        assert!(RunConfig::from_json(r#"{"sed": 1}"#).is_err());
    }
}
