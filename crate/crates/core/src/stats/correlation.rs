use super::{mean, Result, StatsError};

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(StatsError::Dimension(format!("{} vs {} samples", x.len(), y.len())));
    }
    if x.len() < 3 {
        return Err(StatsError::Precondition("need at least three pairs".into()));
    }
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::UndefinedCorrelation);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// 1-based ranks with ties given their average rank.
pub fn ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&i, &j| x[i].total_cmp(&x[j]));
    let mut out = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}

pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(StatsError::Dimension(format!("{} vs {} samples", x.len(), y.len())));
    }
    pearson(&ranks(x), &ranks(y))
}

/// Probability that a random positive outscores a random negative, ties half.
pub fn auroc(scores_pos: &[f64], scores_neg: &[f64]) -> Result<f64> {
    if scores_pos.is_empty() || scores_neg.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let mut wins = 0.0;
    for p in scores_pos {
        for n in scores_neg {
            if p > n {
                wins += 1.0;
            } else if p == n {
                wins += 0.5;
            }
        }
    }
    Ok(wins / (scores_pos.len() * scores_neg.len()) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pearson_examples() {
        assert!((pearson(&[1., 2., 3.], &[1., 2., 3.]).unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson(&[1., 2., 3.], &[3., 2., 1.]).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(pearson(&[1., 1., 1.], &[1., 2., 3.]), Err(StatsError::UndefinedCorrelation));
    }

    #[test]
    fn spearman_example() {
        let r = spearman(&[1., 2., 3., 4.], &[1., 3., 2., 4.]).unwrap();
        assert!((r - 0.8).abs() < 1e-9);
    }

    #[test]
    fn tied_ranks_average() {
        assert_eq!(ranks(&[10., 20., 10., 30.]), vec![1.5, 3.0, 1.5, 4.0]);
    }

    #[test]
    fn auroc_examples() {
        assert_eq!(auroc(&[2., 3.], &[0., 1.]).unwrap(), 1.0);
        assert_eq!(auroc(&[0.5], &[0.5]).unwrap(), 0.5);
        assert_eq!(auroc(&[0.9, 0.8], &[0.7, 0.85]).unwrap(), 0.75);
    }

    proptest! {
        #[test]
        fn auroc_complement(pos in prop::collection::vec(-3i32..3, 1..8), neg in prop::collection::vec(-3i32..3, 1..8)) {
            let pos: Vec<f64> = pos.into_iter().map(f64::from).collect();
            let neg: Vec<f64> = neg.into_iter().map(f64::from).collect();
            prop_assert_eq!(auroc(&pos, &neg).unwrap() + auroc(&neg, &pos).unwrap(), 1.0);
        }
    }
}
