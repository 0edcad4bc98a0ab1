use rand::Rng;

use super::{ModelConfig, ModelError, Result};
use crate::rng::rng_from_seed;

/// Row-major f32 matrix used as `y = x W + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f32 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f32) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f32] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `x W + b` accumulated in f64.
    pub fn affine(&self, x: &[f64], bias: &[f32]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.rows);
        let mut out: Vec<f64> = bias.iter().map(|&b| b as f64).collect();
        for (r, &xr) in x.iter().enumerate() {
            if xr == 0.0 {
                continue;
            }
            for (o, &w) in out.iter_mut().zip(self.row(r)) {
                *o += xr * w as f64;
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
}

impl LayerNorm {
    fn identity(d: usize) -> Self {
        Self { weight: vec![1.0; d], bias: vec![0.0; d] }
    }

    pub fn apply(&self, x: &[f32], eps: f32) -> Vec<f64> {
        let n = x.len() as f64;
        let mean = x.iter().map(|&v| v as f64).sum::<f64>() / n;
        let var = x.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
        let inv = 1.0 / (var + eps as f64).sqrt();
        x.iter()
            .zip(self.weight.iter().zip(&self.bias))
            .map(|(&v, (&w, &b))| (v as f64 - mean) * inv * w as f64 + b as f64)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub ln1: LayerNorm,
    pub w_q: Mat,
    pub b_q: Vec<f32>,
    pub w_k: Mat,
    pub b_k: Vec<f32>,
    pub w_v: Mat,
    pub b_v: Vec<f32>,
    pub w_o: Mat,
    pub b_o: Vec<f32>,
    pub ln2: LayerNorm,
    pub w_in: Mat,
    pub b_in: Vec<f32>,
    pub w_out: Mat,
    pub b_out: Vec<f32>,
}

impl Block {
    fn zeros(c: &ModelConfig) -> Self {
        let d = c.d_model;
        Self {
            ln1: LayerNorm::identity(d),
            w_q: Mat::zeros(d, d),
            b_q: vec![0.0; d],
            w_k: Mat::zeros(d, d),
            b_k: vec![0.0; d],
            w_v: Mat::zeros(d, d),
            b_v: vec![0.0; d],
            w_o: Mat::zeros(d, d),
            b_o: vec![0.0; d],
            ln2: LayerNorm::identity(d),
            w_in: Mat::zeros(d, c.d_mlp),
            b_in: vec![0.0; c.d_mlp],
            w_out: Mat::zeros(c.d_mlp, d),
            b_out: vec![0.0; d],
        }
    }
}

/// Full parameter set. Immutable once built; share behind `Arc`.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    pub config: ModelConfig,
    pub tok_embed: Mat,
    pub pos_embed: Mat,
    pub blocks: Vec<Block>,
    pub ln_final: LayerNorm,
    pub unembed: Mat,
}

/// Borrowed view of one named tensor.
pub(crate) struct TensorMut<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a mut Vec<f32>,
}

impl Weights {
    /// Zero projections with identity layernorms.
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let d = config.d_model;
        Ok(Self {
            config,
            tok_embed: Mat::zeros(config.vocab_size, d),
            pos_embed: Mat::zeros(config.max_seq, d),
            blocks: (0..config.n_layers).map(|_| Block::zeros(&config)).collect(),
            ln_final: LayerNorm::identity(d),
            unembed: Mat::zeros(d, config.vocab_size),
        })
    }

    /// Every tensor uniformly drawn from `[-scale, scale]`, layernorm gains around 1.
    pub fn random(config: ModelConfig, seed: u64, scale: f32) -> Result<Self> {
        let mut w = Self::zeros(config)?;
        let mut rng = rng_from_seed(seed);
        w.visit_mut(|t| {
            let gain = t.name.ends_with("ln1.weight") || t.name.ends_with("ln2.weight") || t.name == "ln_final.weight";
            for v in t.data.iter_mut() {
                let u: f32 = rng.random_range(-scale..=scale);
                *v = if gain { 1.0 + u } else { u };
            }
        });
        Ok(w)
    }

    /// Visits tensors in canonical file order.
    pub(crate) fn visit_mut(&mut self, mut f: impl FnMut(TensorMut<'_>)) {
        let c = self.config;
        let (d, v) = (c.d_model, c.vocab_size);
        let mut t = |name: String, shape: Vec<usize>, data: &mut Vec<f32>| f(TensorMut { name, shape, data });
        t("tok_embed".into(), vec![v, d], &mut self.tok_embed.data);
        t("pos_embed".into(), vec![c.max_seq, d], &mut self.pos_embed.data);
        for (l, b) in self.blocks.iter_mut().enumerate() {
            let p = |s: &str| format!("blocks.{l}.{s}");
            t(p("ln1.weight"), vec![d], &mut b.ln1.weight);
            t(p("ln1.bias"), vec![d], &mut b.ln1.bias);
            t(p("attn.w_q"), vec![d, d], &mut b.w_q.data);
            t(p("attn.b_q"), vec![d], &mut b.b_q);
            t(p("attn.w_k"), vec![d, d], &mut b.w_k.data);
            t(p("attn.b_k"), vec![d], &mut b.b_k);
            t(p("attn.w_v"), vec![d, d], &mut b.w_v.data);
            t(p("attn.b_v"), vec![d], &mut b.b_v);
            t(p("attn.w_o"), vec![d, d], &mut b.w_o.data);
            t(p("attn.b_o"), vec![d], &mut b.b_o);
            t(p("ln2.weight"), vec![d], &mut b.ln2.weight);
            t(p("ln2.bias"), vec![d], &mut b.ln2.bias);
            t(p("mlp.w_in"), vec![d, c.d_mlp], &mut b.w_in.data);
            t(p("mlp.b_in"), vec![c.d_mlp], &mut b.b_in);
            t(p("mlp.w_out"), vec![c.d_mlp, d], &mut b.w_out.data);
            t(p("mlp.b_out"), vec![d], &mut b.b_out);
        }
        t("ln_final.weight".into(), vec![d], &mut self.ln_final.weight);
        t("ln_final.bias".into(), vec![d], &mut self.ln_final.bias);
        t("unembed".into(), vec![d, v], &mut self.unembed.data);
    }

    /// Shapes and finiteness.
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        let mut err = None;
        let mut copy = self.clone();
        copy.visit_mut(|t| {
            if err.is_some() {
                return;
            }
            let want: usize = t.shape.iter().product();
            if t.data.len() != want {
                err = Some(ModelError::Format { tensor: t.name, reason: format!("expected {want} values, found {}", t.data.len()) });
            } else if t.data.iter().any(|v| !v.is_finite()) {
                err = Some(ModelError::Format { tensor: t.name, reason: "non-finite value".into() });
            }
        });
        err.map_or(Ok(()), Err)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_matches_hand() {
        let m = Mat { rows: 2, cols: 3, data: vec![1., 2., 3., 4., 5., 6.] };
        assert_eq!(m.affine(&[1.0, -1.0], &[0.5, 0.0, 0.0]), vec![-2.5, -3.0, -3.0]);
    }

    #[test]
    fn layernorm_normalises() {
        let ln = LayerNorm::identity(4);
        let y = ln.apply(&[1.0, 2.0, 3.0, 4.0], 0.0);
        let mean: f64 = y.iter().sum::<f64>() / 4.0;
        let var: f64 = y.iter().map(|v| v * v).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-9);
    }
}
