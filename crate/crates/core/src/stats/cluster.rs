//! Lloyd k-means, diagonal-covariance Gaussian mixtures and silhouette scores.

use nalgebra::DMatrix;
use rand::Rng;

use super::{Result, StatsError};
use crate::rng::{derive_seed, rng_from_seed, ChaCha8Rng};

const MAX_ITER: usize = 300;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
}

fn rows(x: &DMatrix<f64>) -> Vec<Vec<f64>> {
    x.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

fn check(n: usize, k: usize) -> Result<()> {
    if k < 2 {
        return Err(StatsError::Precondition("k must be at least 2".into()));
    }
    if n < k {
        return Err(StatsError::Precondition(format!("{n} samples for k = {k}")));
    }
    Ok(())
}

fn kmeans_pp(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.random_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total <= 0.0 {
            rng.random_range(0..points.len())
        } else {
            let mut u = rng.random::<f64>() * total;
            let mut pick = points.len() - 1;
            for (i, w) in d2.iter().enumerate() {
                if u < *w {
                    pick = i;
                    break;
                }
                u -= w;
            }
            pick
        };
        centroids.push(points[idx].clone());
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, centroids.last().unwrap()));
        }
    }
    centroids
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    centroids
        .iter()
        .enumerate()
        .map(|(j, c)| (j, sq_dist(p, c)))
        .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
}

fn lloyd(points: &[Vec<f64>], mut centroids: Vec<Vec<f64>>) -> KMeansFit {
    let k = centroids.len();
    let dim = points[0].len();
    let mut assignments = vec![usize::MAX; points.len()];
    for _ in 0..MAX_ITER {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let (j, _) = nearest(p, &centroids);
            if assignments[i] != j {
                assignments[i] = j;
                changed = true;
            }
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignments) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(p) {
                *s += v;
            }
        }
        for j in 0..k {
            if counts[j] == 0 {
                // empty cluster: re-seed from the point farthest from its centroid
                let (far, _) = points
                    .iter()
                    .enumerate()
                    .map(|(i, p)| (i, sq_dist(p, &centroids[assignments[i]])))
                    .fold((0, -1.0), |b, c| if c.1 > b.1 { c } else { b });
                centroids[j] = points[far].clone();
                assignments[far] = j;
                changed = true;
            } else {
                centroids[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            }
        }
        if !changed {
            break;
        }
    }
    let inertia = points.iter().zip(&assignments).map(|(p, &a)| sq_dist(p, &centroids[a])).sum();
    KMeansFit { assignments, centroids, inertia }
}

/// Best of `n_init` k-means++ seeded Lloyd runs, by inertia.
pub fn kmeans(x: &DMatrix<f64>, k: usize, n_init: usize, seed: u64) -> Result<KMeansFit> {
    check(x.nrows(), k)?;
    let points = rows(x);
    let mut best: Option<KMeansFit> = None;
    for init in 0..n_init.max(1) {
        let mut rng = rng_from_seed(derive_seed(seed, &[init as u64]));
        let fit = lloyd(&points, kmeans_pp(&points, k, &mut rng));
        if best.as_ref().is_none_or(|b| fit.inertia < b.inertia) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one init"))
}

/// Diagonal-covariance Gaussian mixture fitted by EM; returns hard assignments
/// by maximum responsibility from the best of `n_init` runs by log-likelihood.
/// Per-dimension variances are floored at `reg_covar`.
pub fn gmm_diag(x: &DMatrix<f64>, k: usize, n_init: usize, reg_covar: f64, seed: u64) -> Result<Vec<usize>> {
    check(x.nrows(), k)?;
    if reg_covar <= 0.0 {
        return Err(StatsError::Precondition("reg_covar must be positive".into()));
    }
    let points = rows(x);
    let (n, dim) = (points.len(), points[0].len());
    let mut best: Option<(f64, Vec<usize>)> = None;
    for init in 0..n_init.max(1) {
        let mut rng = rng_from_seed(derive_seed(seed, &[0x6e6d, init as u64]));
        let start = lloyd(&points, kmeans_pp(&points, k, &mut rng));
        let mut resp = vec![vec![0.0; k]; n];
        for (r, &a) in resp.iter_mut().zip(&start.assignments) {
            r[a] = 1.0;
        }
        let mut log_lik = f64::NEG_INFINITY;
        for _ in 0..MAX_ITER {
            // M step
            let mut weights = vec![0.0; k];
            let mut means = vec![vec![0.0; dim]; k];
            let mut vars = vec![vec![0.0; dim]; k];
            for (p, r) in points.iter().zip(&resp) {
                for j in 0..k {
                    weights[j] += r[j];
                    for (m, v) in means[j].iter_mut().zip(p) {
                        *m += r[j] * v;
                    }
                }
            }
            for j in 0..k {
                let w = weights[j].max(10.0 * f64::EPSILON);
                means[j].iter_mut().for_each(|m| *m /= w);
            }
            for (p, r) in points.iter().zip(&resp) {
                for j in 0..k {
                    for ((s, v), m) in vars[j].iter_mut().zip(p).zip(&means[j]) {
                        *s += r[j] * (v - m).powi(2);
                    }
                }
            }
            for j in 0..k {
                let w = weights[j].max(10.0 * f64::EPSILON);
                vars[j].iter_mut().for_each(|s| *s = (*s / w).max(reg_covar));
                weights[j] = w / n as f64;
            }
            // E step
            let mut total = 0.0;
            for (p, r) in points.iter().zip(resp.iter_mut()) {
                let logs: Vec<f64> = (0..k)
                    .map(|j| {
                        let ll: f64 = p
                            .iter()
                            .zip(&means[j])
                            .zip(&vars[j])
                            .map(|((x, m), v)| -0.5 * ((2.0 * std::f64::consts::PI * v).ln() + (x - m).powi(2) / v))
                            .sum();
                        weights[j].ln() + ll
                    })
                    .collect();
                let mx = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = mx + logs.iter().map(|l| (l - mx).exp()).sum::<f64>().ln();
                total += lse;
                for (rj, l) in r.iter_mut().zip(&logs) {
                    *rj = (l - lse).exp();
                }
            }
            let converged = (total - log_lik).abs() < 1e-3 * n as f64 * 1e-3;
            log_lik = total;
            if converged {
                break;
            }
        }
        let assign: Vec<usize> = resp
            .iter()
            .map(|r| r.iter().enumerate().fold((0, -1.0), |b, (j, &v)| if v > b.1 { (j, v) } else { b }).0)
            .collect();
        if best.as_ref().is_none_or(|(ll, _)| log_lik > *ll) {
            best = Some((log_lik, assign));
        }
    }
    Ok(best.expect("at least one init").1)
}

/// Mean silhouette coefficient; points in singleton clusters score 0.
pub fn silhouette(x: &DMatrix<f64>, assignments: &[usize]) -> Result<f64> {
    let points = rows(x);
    if points.len() != assignments.len() {
        return Err(StatsError::Dimension("assignments do not cover the samples".into()));
    }
    let labels: std::collections::BTreeSet<usize> = assignments.iter().copied().collect();
    if labels.len() < 2 {
        return Err(StatsError::Precondition("silhouette needs at least two clusters".into()));
    }
    let dist = |i: usize, j: usize| sq_dist(&points[i], &points[j]).sqrt();
    let mut total = 0.0;
    for i in 0..points.len() {
        let own = assignments[i];
        let mut sums: std::collections::BTreeMap<usize, (f64, usize)> = Default::default();
        for j in 0..points.len() {
            if j != i {
                let e = sums.entry(assignments[j]).or_insert((0.0, 0));
                e.0 += dist(i, j);
                e.1 += 1;
            }
        }
        let Some(&(own_sum, own_n)) = sums.get(&own) else {
            continue; // singleton
        };
        let a = own_sum / own_n as f64;
        let b = sums
            .iter()
            .filter(|(l, _)| **l != own)
            .map(|(_, (s, c))| s / *c as f64)
            .fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    Ok(total / points.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs() -> DMatrix<f64> {
        let mut v = Vec::new();
        for i in 0..10 {
            let t = i as f64 * 0.1;
            v.extend_from_slice(&[t.sin() * 0.3, t.cos() * 0.3]);
        }
        for i in 0..10 {
            let t = i as f64 * 0.1;
            v.extend_from_slice(&[20.0 + t.cos() * 0.3, -15.0 + t.sin() * 0.3]);
        }
        DMatrix::from_row_slice(20, 2, &v)
    }

    fn same_partition(a: &[usize], truth: &[usize]) -> bool {
        let direct = a.iter().zip(truth).all(|(x, y)| x == y);
        let flipped = a.iter().zip(truth).all(|(x, y)| *x == 1 - y);
        direct || flipped
    }

    #[test]
    fn kmeans_recovers_blobs() {
        let truth: Vec<usize> = (0..20).map(|i| usize::from(i >= 10)).collect();
        let fit = kmeans(&blobs(), 2, 5, 1).unwrap();
        assert!(same_partition(&fit.assignments, &truth));
        let g = gmm_diag(&blobs(), 2, 3, 1e-4, 1).unwrap();
        assert!(same_partition(&g, &truth));
    }

    #[test]
    fn k_equals_n_is_all_singletons() {
        let x = DMatrix::from_row_slice(4, 1, &[0.0, 1.0, 5.0, 9.0]);
        let fit = kmeans(&x, 4, 4, 0).unwrap();
        assert!(fit.inertia.abs() < 1e-12);
        assert_eq!(silhouette(&x, &fit.assignments).unwrap(), 0.0);
    }

    #[test]
    fn silhouette_hand_example() {
        let x = DMatrix::from_row_slice(4, 1, &[0.0, 0.1, 10.0, 10.1]);
        let s = silhouette(&x, &[0, 0, 1, 1]).unwrap();
        assert!((s - 0.99).abs() < 1e-3, "{s}");
    }

    #[test]
    fn deterministic_given_seed() {
        let a = kmeans(&blobs(), 3, 4, 9).unwrap();
        let b = kmeans(&blobs(), 3, 4, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_k() {
        assert!(kmeans(&blobs(), 1, 1, 0).is_err());
        assert!(gmm_diag(&blobs(), 2, 1, 0.0, 0).is_err());
    }
}
