//! Standardisation, principal components and ridge regression on dense
//! row-major sample matrices (one row per sample).

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::{Result, StatsError};

/// Per-feature standardisation. Constant features are centred but not scaled.
#[derive(Debug, Clone)]
pub struct ZScore {
    mean: DVector<f64>,
    scale: DVector<f64>,
}

pub fn zscore_fit(x: &DMatrix<f64>) -> Result<ZScore> {
    if x.nrows() < 2 {
        return Err(StatsError::Precondition("need at least two samples".into()));
    }
    let n = x.nrows() as f64;
    let mean = DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum() / n));
    let scale = DVector::from_iterator(
        x.ncols(),
        x.column_iter().zip(mean.iter()).map(|(c, m)| {
            let sd = (c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt();
            if sd > 1e-12 {
                sd
            } else {
                1.0
            }
        }),
    );
    Ok(ZScore { mean, scale })
}

impl ZScore {
    pub fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = x.clone();
        for (j, mut col) in out.column_iter_mut().enumerate() {
            col.add_scalar_mut(-self.mean[j]);
            col /= self.scale[j];
        }
        out
    }
}

/// Orthonormal principal axes ordered by descending explained variance.
#[derive(Debug, Clone)]
pub struct Pca {
    mean: DVector<f64>,
    /// `n_features x n_components`, orthonormal columns.
    components: DMatrix<f64>,
    explained_variance: Vec<f64>,
}

pub fn pca_fit(x: &DMatrix<f64>, n_components: usize) -> Result<Pca> {
    let (n, d) = x.shape();
    if n < 2 {
        return Err(StatsError::Precondition("need at least two samples".into()));
    }
    if n_components == 0 || n_components > n.min(d) {
        return Err(StatsError::Precondition(format!(
            "n_components = {n_components} outside 1..={}",
            n.min(d)
        )));
    }
    let mean = DVector::from_iterator(d, x.column_iter().map(|c| c.sum() / n as f64));
    let mut centred = x.clone();
    for (j, mut col) in centred.column_iter_mut().enumerate() {
        col.add_scalar_mut(-mean[j]);
    }
    // Eigen-decompose whichever Gram matrix is smaller.
    let (vals, vecs) = if d <= n {
        let cov = centred.transpose() * &centred;
        let eig = SymmetricEigen::new(cov);
        (eig.eigenvalues, eig.eigenvectors)
    } else {
        let gram = &centred * centred.transpose();
        let eig = SymmetricEigen::new(gram);
        let mut axes = centred.transpose() * &eig.eigenvectors;
        for (j, mut col) in axes.column_iter_mut().enumerate() {
            let norm = col.norm();
            if norm > 1e-12 && eig.eigenvalues[j] > 0.0 {
                col /= norm;
            } else {
                col.fill(0.0);
            }
        }
        (eig.eigenvalues, axes)
    };
    let mut order: Vec<usize> = (0..vals.len()).collect();
    order.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]).then(a.cmp(&b)));
    let mut components = DMatrix::zeros(d, n_components);
    let mut explained_variance = Vec::with_capacity(n_components);
    for (k, &idx) in order.iter().take(n_components).enumerate() {
        let mut col = vecs.column(idx).into_owned();
        if col.norm() < 1e-12 {
            // rank-deficient data: complete the basis deterministically
            col = complete_basis(&components, k, d);
        }
        // sign convention: largest-magnitude loading is positive
        let pivot = col.iter().cloned().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
        if pivot < 0.0 {
            col = -col;
        }
        components.set_column(k, &col);
        explained_variance.push(vals[idx].max(0.0) / (n - 1) as f64);
    }
    Ok(Pca { mean, components, explained_variance })
}

fn complete_basis(existing: &DMatrix<f64>, k: usize, d: usize) -> DVector<f64> {
    for e in 0..d {
        let mut v = DVector::zeros(d);
        v[e] = 1.0;
        for j in 0..k {
            let c = existing.column(j);
            let proj = c.dot(&v);
            v -= c * proj;
        }
        let norm = v.norm();
        if norm > 1e-6 {
            return v / norm;
        }
    }
    DVector::zeros(d)
}

impl Pca {
    pub fn transform(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut centred = x.clone();
        for (j, mut col) in centred.column_iter_mut().enumerate() {
            col.add_scalar_mut(-self.mean[j]);
        }
        centred * &self.components
    }

    pub fn components(&self) -> &DMatrix<f64> {
        &self.components
    }

    pub fn explained_variance(&self) -> &[f64] {
        &self.explained_variance
    }
}

/// L2-regularised least squares with an unpenalised intercept.
#[derive(Debug, Clone)]
pub struct Ridge {
    pub weights: DVector<f64>,
    pub intercept: f64,
}

pub fn ridge_fit(x: &DMatrix<f64>, y: &[f64], alpha: f64) -> Result<Ridge> {
    let (n, d) = x.shape();
    if n != y.len() {
        return Err(StatsError::Dimension(format!("{n} rows vs {} targets", y.len())));
    }
    if n < 2 {
        return Err(StatsError::Precondition("need at least two samples".into()));
    }
    if alpha < 0.0 {
        return Err(StatsError::Precondition("alpha must be non-negative".into()));
    }
    let x_mean = DVector::from_iterator(d, x.column_iter().map(|c| c.sum() / n as f64));
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let mut xc = x.clone();
    for (j, mut col) in xc.column_iter_mut().enumerate() {
        col.add_scalar_mut(-x_mean[j]);
    }
    let yc = DVector::from_iterator(n, y.iter().map(|v| v - y_mean));
    let mut gram = xc.transpose() * &xc;
    for i in 0..d {
        gram[(i, i)] += alpha;
    }
    let rhs = xc.transpose() * yc;
    let eig = gram.symmetric_eigenvalues();
    let top = eig.iter().cloned().fold(0.0, f64::max);
    if eig.iter().any(|e| *e <= 1e-12 * top.max(f64::MIN_POSITIVE)) {
        return Err(StatsError::SingularSystem);
    }
    let weights = match gram.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => gram.lu().solve(&rhs).ok_or(StatsError::SingularSystem)?,
    };
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(StatsError::SingularSystem);
    }
    let intercept = y_mean - x_mean.dot(&weights);
    Ok(Ridge { weights, intercept })
}

impl Ridge {
    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        (x * &self.weights).iter().map(|v| v + self.intercept).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_target_predicts_mean() {
        let x = DMatrix::from_row_slice(4, 2, &[1., 2., 3., 1., 0., 5., 2., 2.]);
        let r = ridge_fit(&x, &[0.4; 4], 1.0).unwrap();
        for p in r.predict(&x) {
            assert!((p - 0.4).abs() < 1e-12);
        }
    }

    #[test]
    fn singular_without_penalty() {
        let x = DMatrix::from_row_slice(3, 2, &[1., 2., 2., 4., 3., 6.]);
        assert_eq!(ridge_fit(&x, &[1., 2., 3.], 0.0).unwrap_err(), StatsError::SingularSystem);
        assert!(ridge_fit(&x, &[1., 2., 3.], 1.0).is_ok());
    }

    #[test]
    fn pca_orders_variance() {
        let x = DMatrix::from_row_slice(4, 2, &[0., 0., 10., 1., 20., -1., 30., 0.]);
        let p = pca_fit(&x, 2).unwrap();
        let ev = p.explained_variance();
        assert!(ev[0] > ev[1]);
        let c = p.components();
        assert!((c.column(0).dot(&c.column(1))).abs() < 1e-12);
    }

    #[test]
    fn pca_wide_data_uses_gram_path() {
        let x = DMatrix::from_fn(4, 9, |i, j| ((i * 7 + j * 3) % 5) as f64 + i as f64);
        let p = pca_fit(&x, 3).unwrap();
        let c = p.components();
        let g = c.transpose() * c;
        assert!((g - DMatrix::identity(3, 3)).abs().max() < 1e-9);
    }

    proptest! {
        #[test]
        fn full_rank_pca_preserves_distances(vals in prop::collection::vec(-5.0f64..5.0, 18)) {
            let x = DMatrix::from_row_slice(6, 3, &vals);
            let p = pca_fit(&x, 3).unwrap();
            let z = p.transform(&x);
            for i in 0..6 {
                for j in 0..6 {
                    let a = (x.row(i) - x.row(j)).norm();
                    let b = (z.row(i) - z.row(j)).norm();
                    prop_assert!((a - b).abs() < 1e-8);
                }
            }
        }
    }
}
