//! Deterministic statistical kernels shared by every experiment module.

mod anova;
mod cluster;
mod correlation;
mod divergence;
mod linear;
mod permutation;
mod proportion;

pub use anova::{anova_f_eta2, f_survival, AnovaResult, GroupedSamples};
pub use cluster::{gmm_diag, kmeans, silhouette, KMeansFit};
pub use correlation::{auroc, pearson, ranks, spearman};
pub use divergence::{cohens_d_multivariate, kl_divergence, Distribution, KL_SMOOTHING};
pub use linear::{pca_fit, ridge_fit, zscore_fit, Pca, Ridge, ZScore};
pub use permutation::{percentile, permutation_null, NullSummary};
pub use proportion::{fisher_exact_two_sided, wilson_ci, CountTable2x2, FisherResult, OddsRatio};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("pooled spread is zero while group means differ")]
    DegenerateSpread,
    #[error("empty sample")]
    EmptySample,
    #[error("odds ratio undefined: a*d = b*c = 0")]
    UndefinedOddsRatio,
    #[error("correlation undefined: zero variance")]
    UndefinedCorrelation,
    #[error("singular linear system")]
    SingularSystem,
    #[error("precondition violated: {0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, StatsError>;

pub(crate) fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (Bessel-corrected); 0 for fewer than two values.
pub fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

pub fn population_std(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64).sqrt()
}
