use rand::Rng;

/// Softmax of `logits / temperature` in f64. `temperature` must be positive.
pub fn softmax_f64(logits: &[f32], temperature: f64) -> Vec<f64> {
    let scaled: Vec<f64> = logits.iter().map(|&l| l as f64 / temperature).collect();
    let mx = scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scaled.iter().map(|s| (s - mx).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

fn argmax(logits: &[f32]) -> u32 {
    let mut best = 0;
    for (i, &v) in logits.iter().enumerate() {
        if v > logits[best] {
            best = i;
        }
    }
    best as u32
}

/// `temperature == 0` is greedy with lowest-index ties; otherwise one uniform
/// draw inverts the softmax CDF.
pub fn sample_token<R: Rng + ?Sized>(logits: &[f32], temperature: f64, rng: &mut R) -> u32 {
    assert!(!logits.is_empty(), "empty logits");
    assert!(temperature >= 0.0, "negative temperature");
    if temperature == 0.0 {
        return argmax(logits);
    }
    let probs = softmax_f64(logits, temperature);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, p) in probs.iter().enumerate() {
        if *p > 0.0 {
            last_positive = i;
        }
        acc += p;
        if u < acc {
            return i as u32;
        }
    }
    last_positive as u32
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn greedy_and_ties() {
        let mut rng = rng_from_seed(0);
        assert_eq!(sample_token(&[1.0, 3.0, 2.0], 0.0, &mut rng), 1);
        assert_eq!(sample_token(&[2.0, 2.0, 1.0], 0.0, &mut rng), 0);
    }

    #[test]
    fn empirical_frequency() {
        let mut rng = rng_from_seed(42);
        let logits = [2f32.ln(), 0.0];
        let hits = (0..10_000).filter(|_| sample_token(&logits, 1.0, &mut rng) == 0).count();
        assert!((hits as f64 / 10_000.0 - 2.0 / 3.0).abs() < 0.02, "{hits}");
    }

    #[test]
    fn deterministic() {
        let a = sample_token(&[0.1, 0.5, 0.2], 0.7, &mut rng_from_seed(5));
        let b = sample_token(&[0.1, 0.5, 0.2], 0.7, &mut rng_from_seed(5));
        assert_eq!(a, b);
    }

    #[test]
    fn softmax_sums_to_one() {
        let p = softmax_f64(&[100.0, -50.0, 3.0], 0.7);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
