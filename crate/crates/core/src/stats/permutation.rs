use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::rng::{derive_seed, rng_from_seed};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullSummary {
    pub observed: f64,
    pub null_mean: f64,
    pub null_std: f64,
    pub pct5: f64,
    pub pct95: f64,
    pub pct99: f64,
    pub p_value: f64,
    pub n_perm: usize,
}

/// Linear-interpolated percentile (`q` in [0, 100]) of unsorted data.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        return f64::NAN;
    }
    let pos = q / 100.0 * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

/// Null distribution of `stat` under shuffles of `y`.
///
/// Shuffle `i` uses its own stream derived from `(seed, i)`, so results do not
/// depend on thread scheduling. `p = (1 + #{null >= observed}) / (1 + n_perm)`.
pub fn permutation_null<X, F>(stat: F, x: &X, y: &[f64], n_perm: usize, seed: u64) -> NullSummary
where
    X: Sync + ?Sized,
    F: Fn(&X, &[f64]) -> f64 + Sync,
{
    assert!(n_perm >= 1, "n_perm must be at least 1");
    let observed = stat(x, y);
    let null: Vec<f64> = (0..n_perm)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_from_seed(derive_seed(seed, &[i as u64]));
            let mut shuffled = y.to_vec();
            shuffled.shuffle(&mut rng);
            stat(x, &shuffled)
        })
        .collect();
    let exceed = null.iter().filter(|v| **v >= observed).count();
    NullSummary {
        observed,
        null_mean: super::mean(&null),
        null_std: super::sample_std(&null),
        pct5: percentile(&null, 5.0),
        pct95: percentile(&null, 95.0),
        pct99: percentile(&null, 99.0),
        p_value: (1 + exceed) as f64 / (1 + n_perm) as f64,
        n_perm,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::pearson;

    fn corr(x: &[f64], y: &[f64]) -> f64 {
        pearson(x, y).unwrap_or(0.0)
    }

    #[test]
    fn perfect_signal_hits_floor() {
        let x: Vec<f64> = (0..30).map(f64::from).collect();
        let s = permutation_null(corr, x.as_slice(), &x, 200, 3);
        assert_eq!(s.p_value, 1.0 / 201.0);
    }

    #[test]
    fn shuffled_target_lands_inside_null() {
        use rand::seq::SliceRandom;
        let x: Vec<f64> = (0..40).map(|i| ((i * 37) % 11) as f64).collect();
        let reps = 100u64;
        let inside = (0..reps)
            .filter(|&rep| {
                let mut y: Vec<f64> = (0..40).map(f64::from).collect();
                y.shuffle(&mut rng_from_seed(1000 + rep));
                let s = permutation_null(corr, x.as_slice(), &y, 200, rep);
                s.observed >= s.pct5 && s.observed <= s.pct95
            })
            .count();
        assert!(inside as f64 >= 0.9 * reps as f64, "inside = {inside}");
    }

    #[test]
    fn deterministic_given_seed() {
        let x: Vec<f64> = (0..20).map(|i| (i as f64).sin()).collect();
        let y: Vec<f64> = (0..20).map(|i| (i as f64 * 0.3).cos()).collect();
        let a = permutation_null(corr, x.as_slice(), &y, 100, 11);
        let b = permutation_null(corr, x.as_slice(), &y, 100, 11);
        assert_eq!(a, b);
        assert!(a.p_value >= 1.0 / 101.0);
    }

    #[test]
    fn percentile_interpolates() {
        assert_eq!(percentile(&[3.0, 1.0, 2.0, 4.0], 50.0), 2.5);
        assert_eq!(percentile(&[1.0, 2.0], 100.0), 2.0);
    }
}
