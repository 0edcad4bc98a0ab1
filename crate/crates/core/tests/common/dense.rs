//! Straight-line re-implementation of the forward pass, no caching.

use trajlab::model::Weights;

fn layer_norm(x: &[f64], g: &[f32], b: &[f32], eps: f64) -> Vec<f64> {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / n;
    (0..x.len()).map(|i| (x[i] - m) / (v + eps).sqrt() * g[i] as f64 + b[i] as f64).collect()
}

fn matmul(x: &[f64], w: &[f32], cols: usize, b: Option<&[f32]>) -> Vec<f64> {
    (0..cols)
        .map(|j| {
            let s: f64 = (0..x.len()).map(|i| x[i] * w[i * cols + j] as f64).sum();
            s + b.map_or(0.0, |b| b[j] as f64)
        })
        .collect()
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (x + 0.044715 * x.powi(3))).tanh())
}

/// Logits at the last position of `seq`, every position recomputed densely.
pub fn dense_logits(w: &Weights, seq: &[u32]) -> Vec<f64> {
    let c = w.config;
    let (d, eps) = (c.d_model, c.ln_epsilon as f64);
    let mut xs: Vec<Vec<f64>> = seq
        .iter()
        .enumerate()
        .map(|(p, &t)| (0..d).map(|i| w.tok_embed.get(t as usize, i) as f64 + w.pos_embed.get(p, i) as f64).collect())
        .collect();
    for b in &w.blocks {
        let hs: Vec<Vec<f64>> = xs.iter().map(|x| layer_norm(x, &b.ln1.weight, &b.ln1.bias, eps)).collect();
        let q: Vec<Vec<f64>> = hs.iter().map(|h| matmul(h, &b.w_q.data, d, Some(&b.b_q))).collect();
        let k: Vec<Vec<f64>> = hs.iter().map(|h| matmul(h, &b.w_k.data, d, Some(&b.b_k))).collect();
        let v: Vec<Vec<f64>> = hs.iter().map(|h| matmul(h, &b.w_v.data, d, Some(&b.b_v))).collect();
        for i in 0..xs.len() {
            let mut cat = vec![0.0; d];
            for hd in 0..c.n_heads {
                let r = hd * c.d_head..(hd + 1) * c.d_head;
                let s: Vec<f64> = (0..=i)
                    .map(|j| r.clone().map(|e| q[i][e] * k[j][e]).sum::<f64>() / (c.d_head as f64).sqrt())
                    .collect();
                let mx = s.iter().cloned().fold(f64::MIN, f64::max);
                let z: f64 = s.iter().map(|a| (a - mx).exp()).sum();
                for j in 0..=i {
                    for e in r.clone() {
                        cat[e] += (s[j] - mx).exp() / z * v[j][e];
                    }
                }
            }
            let o = matmul(&cat, &b.w_o.data, d, Some(&b.b_o));
            for e in 0..d {
                xs[i][e] += o[e];
            }
            let h2 = layer_norm(&xs[i], &b.ln2.weight, &b.ln2.bias, eps);
            let mid: Vec<f64> = matmul(&h2, &b.w_in.data, c.d_mlp, Some(&b.b_in)).into_iter().map(gelu).collect();
            let m = matmul(&mid, &b.w_out.data, d, Some(&b.b_out));
            for e in 0..d {
                xs[i][e] += m[e];
            }
        }
    }
    let hf = layer_norm(xs.last().unwrap(), &w.ln_final.weight, &w.ln_final.bias, eps);
    matmul(&hf, &w.unembed.data, c.vocab_size, None)
}
