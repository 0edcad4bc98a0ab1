use super::{Result, StatsError};

/// Additive smoothing applied to the reference distribution before normalising.
pub const KL_SMOOTHING: f64 = 1e-10;

/// A probability vector over a finite support.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    probs: Vec<f64>,
}

impl Distribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(StatsError::InvalidDistribution("empty support".into()));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(StatsError::InvalidDistribution("negative or non-finite mass".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(StatsError::InvalidDistribution(format!("mass sums to {total}")));
        }
        Ok(Self { probs })
    }

    /// Softmax of `logits / temperature`, computed in f64.
    pub fn softmax(logits: &[f32], temperature: f64) -> Self {
        let scaled: Vec<f64> = logits.iter().map(|&l| l as f64 / temperature).collect();
        let max = scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = scaled.iter().map(|s| (s - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        Self { probs: exps.into_iter().map(|e| e / z).collect() }
    }

    /// Elementwise mean of equally weighted distributions on one support.
    pub fn mixture(parts: &[Distribution]) -> Result<Self> {
        let first = parts.first().ok_or(StatsError::EmptySample)?;
        let n = first.len();
        let mut acc = vec![0.0; n];
        for p in parts {
            if p.len() != n {
                return Err(StatsError::Dimension(format!("support {} vs {}", p.len(), n)));
            }
            for (a, v) in acc.iter_mut().zip(&p.probs) {
                *a += v;
            }
        }
        let k = parts.len() as f64;
        Ok(Self { probs: acc.into_iter().map(|a| a / k).collect() })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

/// `KL(p || q)` in nats. If `q` is zero where `p` is not, `q` is smoothed by
/// [`KL_SMOOTHING`] and renormalised.
pub fn kl_divergence(p: &Distribution, q: &Distribution) -> Result<f64> {
    if p.len() != q.len() {
        return Err(StatsError::Dimension(format!("support {} vs {}", p.len(), q.len())));
    }
    // smoothing only when q misses mass that p has; softmax inputs never do
    let eps = if p.probs.iter().zip(&q.probs).any(|(pi, qi)| *pi > 0.0 && *qi == 0.0) { KL_SMOOTHING } else { 0.0 };
    let z: f64 = q.probs.iter().map(|v| v + eps).sum();
    let kl: f64 = p
        .probs
        .iter()
        .zip(&q.probs)
        .filter(|(pi, _)| **pi > 0.0)
        .map(|(pi, qi)| pi * (pi / ((qi + eps) / z)).ln())
        .sum();
    // identical inputs can round to a tiny negative value
    Ok(kl.max(0.0))
}

/// Multivariate Cohen's d: distance between group means over a scalar pooled
/// spread. Each group's spread is `sqrt(sum ||h - mean||^2 / (K - 1))`, pooled
/// with weights `K - 1`.
pub fn cohens_d_multivariate(group1: &[Vec<f64>], group2: &[Vec<f64>]) -> Result<f64> {
    if group1.len() < 2 || group2.len() < 2 {
        return Err(StatsError::Precondition("need at least two vectors per group".into()));
    }
    let dim = group1[0].len();
    if group1.iter().chain(group2).any(|v| v.len() != dim) {
        return Err(StatsError::Dimension("vectors of unequal dimension".into()));
    }
    let centroid = |g: &[Vec<f64>]| -> Vec<f64> {
        let mut m = vec![0.0; dim];
        for v in g {
            for (a, x) in m.iter_mut().zip(v) {
                *a += x;
            }
        }
        m.iter_mut().for_each(|a| *a /= g.len() as f64);
        m
    };
    let ss = |g: &[Vec<f64>], m: &[f64]| -> f64 {
        g.iter()
            .map(|v| v.iter().zip(m).map(|(x, c)| (x - c).powi(2)).sum::<f64>())
            .sum()
    };
    let (m1, m2) = (centroid(group1), centroid(group2));
    let diff = m1.iter().zip(&m2).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let dof = (group1.len() + group2.len() - 2) as f64;
    let pooled = ((ss(group1, &m1) + ss(group2, &m2)) / dof).sqrt();
    if pooled == 0.0 {
        return if diff == 0.0 { Ok(0.0) } else { Err(StatsError::DegenerateSpread) };
    }
    Ok(diff / pooled)
}
