//! Forward pass: patch embedding, pre-norm encoder, and the classification
//! heads.

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::model::config::{HeadKind, ModelConfig};
use crate::model::params::{initialize, layout, BlockParams, HeadParams, Params};
use crate::scalar::Scalar;
use crate::tensor::{Tensor, TensorError};

/// Splits an `H×W×3` image into non-overlapping `patch×patch` tiles.
///
/// Tiles are ordered row-major over the patch grid; each output row holds
/// one tile's pixels flattened row-major, channels innermost.
pub fn patchify<T: Scalar>(image: &Tensor<T>, patch: usize) -> Result<Tensor<T>> {
    let [h, w, c] = image.shape() else {
        return Err(dim_error(image.shape(), patch));
    };
    let (h, w, c) = (*h, *w, *c);
    if c != 3 || patch == 0 || h % patch != 0 || w % patch != 0 {
        return Err(dim_error(image.shape(), patch));
    }
    let (gh, gw) = (h / patch, w / patch);
    let patch_dim = patch * patch * 3;
    let src = image.data();
    let mut out = Vec::with_capacity(src.len());
    for py in 0..gh {
        for px in 0..gw {
            for y in 0..patch {
                let row = (py * patch + y) * w + px * patch;
                out.extend_from_slice(&src[row * 3..(row + patch) * 3]);
            }
        }
    }
    Ok(Tensor::new(vec![gh * gw, patch_dim], out)?)
}

fn dim_error(shape: &[usize], patch: usize) -> Error {
    Error::Tensor(TensorError::Shape {
        op: "patchify",
        lhs: shape.to_vec(),
        rhs: vec![patch, patch, 3],
    })
}

/// `patches·W + b + positional embedding`.
pub fn embed<T: Scalar>(g: &mut Graph<T>, patches: Var, params: &Params<Var>) -> Result<Var> {
    let projected = g.linear(patches, params.patch_w, params.patch_b)?;
    Ok(g.add(projected, params.pos_emb)?)
}

fn self_attention<T: Scalar>(
    g: &mut Graph<T>,
    x: Var,
    block: &BlockParams<Var>,
    num_heads: usize,
    attention_maps: &mut Vec<Var>,
) -> Result<Var> {
    let d = g.value(x).last_dim();
    let dh = d / num_heads;
    let q = g.linear(x, block.wq, block.bq)?;
    let k = g.linear(x, block.wk, block.bk)?;
    let v = g.linear(x, block.wv, block.bv)?;
    let scale = T::one() / T::of(dh as f64).sqrt();
    let mut heads = Vec::with_capacity(num_heads);
    for head in 0..num_heads {
        let (qh, kh, vh) = if num_heads == 1 {
            (q, k, v)
        } else {
            let (s, e) = (head * dh, (head + 1) * dh);
            (g.slice_cols(q, s, e)?, g.slice_cols(k, s, e)?, g.slice_cols(v, s, e)?)
        };
        let kt = g.transpose(kh)?;
        let scores = g.matmul(qh, kt)?;
        let scores = g.scale(scores, scale)?;
        let weights = g.softmax_rows(scores)?;
        attention_maps.push(weights);
        heads.push(g.matmul(weights, vh)?);
    }
    let merged = if num_heads == 1 {
        heads[0]
    } else {
        g.concat_cols(&heads)?
    };
    Ok(g.linear(merged, block.wo, block.bo)?)
}

/// `depth` pre-norm blocks: `x += MHSA(LN(x)); x += MLP(LN(x))`.
///
/// Every attention-weight matrix (one per block and head, `n×n`) is appended
/// to `attention_maps`.
pub fn encoder_forward<T: Scalar>(
    g: &mut Graph<T>,
    tokens: Var,
    blocks: &[BlockParams<Var>],
    num_heads: usize,
    eps: T,
    attention_maps: &mut Vec<Var>,
) -> Result<Var> {
    let d = g.value(tokens).last_dim();
    if num_heads == 0 || !d.is_multiple_of(num_heads) {
        return Err(Error::Tensor(TensorError::Param {
            op: "encoder_forward",
            msg: format!("{num_heads} heads do not divide width {d}"),
        }));
    }
    let mut x = tokens;
    for block in blocks {
        let h = g.layer_norm(x, block.ln1_gain, block.ln1_bias, eps)?;
        let attn = self_attention(g, h, block, num_heads, attention_maps)?;
        x = g.add(x, attn)?;
        let h = g.layer_norm(x, block.ln2_gain, block.ln2_bias, eps)?;
        let m = g.linear(h, block.mlp_w1, block.mlp_b1)?;
        let m = g.gelu(m)?;
        let m = g.linear(m, block.mlp_w2, block.mlp_b2)?;
        x = g.add(x, m)?;
    }
    Ok(x)
}

fn flatten_fc2<T: Scalar>(g: &mut Graph<T>, per_token: Var, head: &HeadParams<Var>) -> Result<Var> {
    let width = g.value(per_token).len();
    let flat = g.reshape(per_token, vec![1, width])?;
    let logits = g.linear(flat, head.fc2_w, head.fc2_b)?;
    let classes = g.value(logits).len();
    Ok(g.reshape(logits, vec![classes])?)
}

/// Baseline head: `u = GELU(tokens·FC1 + b1)`, `s = mean over features`
/// (one value per token), `logits = flatten(s)·FC2 + b2`.
pub fn head_baseline<T: Scalar>(g: &mut Graph<T>, tokens: Var, head: &HeadParams<Var>) -> Result<Var> {
    if head.attention.is_some() {
        return Err(Error::Contract(
            "baseline head called with attention parameters (AAMLP head)".into(),
        ));
    }
    let u = g.linear(tokens, head.fc1_w, head.fc1_b)?;
    let u = g.gelu(u)?;
    let s = g.mean_last(u)?;
    flatten_fc2(g, s, head)
}

/// AAMLP head: `u = GELU(tokens·FC1 + b1)`, `p = adaptive_avg_pool(u, P)`
/// per token; with attention, `a = softmax((p·Wq)(p·Wk)ᵀ/√P)·(p·Wv)` over
/// tokens, otherwise `a = p`; `logits = flatten(a)·FC2 + b2`.
///
/// The head attention weights (`n×n`) are appended to `attention_maps`.
pub fn head_aamlp<T: Scalar>(
    g: &mut Graph<T>,
    tokens: Var,
    head: &HeadParams<Var>,
    pool_out: usize,
    attention_enabled: bool,
    attention_maps: &mut Vec<Var>,
) -> Result<Var> {
    let u = g.linear(tokens, head.fc1_w, head.fc1_b)?;
    let u = g.gelu(u)?;
    let p = g.adaptive_avg_pool_1d(u, pool_out)?;
    let a = if attention_enabled {
        let attn = head
            .attention
            .as_ref()
            .ok_or_else(|| Error::Contract("attention enabled but the head has no attention parameters".into()))?;
        let q = g.matmul(p, attn.wq)?;
        let k = g.matmul(p, attn.wk)?;
        let v = g.matmul(p, attn.wv)?;
        let kt = g.transpose(k)?;
        let scores = g.matmul(q, kt)?;
        let scores = g.scale(scores, T::one() / T::of(pool_out as f64).sqrt())?;
        let weights = g.softmax_rows(scores)?;
        attention_maps.push(weights);
        g.matmul(weights, v)?
    } else {
        p
    };
    flatten_fc2(g, a, head)
}

/// Graph handles produced by one forward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    pub logits: Var,
    /// Encoder attention maps, followed by the head's when present.
    pub attention_maps: Vec<Var>,
}

/// A configuration together with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    config: ModelConfig,
    params: Params<Tensor<T>>,
}

impl<T: Scalar> Model<T> {
    /// Seeded random initialization from `config.seed`.
    pub fn init(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let params = initialize(&config);
        Ok(Self { config, params })
    }

    /// Every parameter zero, including layer-norm gains.
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let params = layout(&config).map(|s| Tensor::zeros(s.shape.clone()));
        Ok(Self { config, params })
    }

    pub fn from_params(config: ModelConfig, params: Params<Tensor<T>>) -> Result<Self> {
        config.validate()?;
        let expected = layout(&config);
        let have = params.visit();
        let want = expected.visit();
        if have.len() != want.len() {
            return Err(Error::Contract(format!(
                "parameter count {} does not match config ({})",
                have.len(),
                want.len()
            )));
        }
        for (t, s) in have.iter().zip(&want) {
            if t.shape() != s.shape.as_slice() {
                return Err(Error::Contract(format!(
                    "{}: shape {:?}, config requires {:?}",
                    s.name,
                    t.shape(),
                    s.shape
                )));
            }
            if !t.is_finite() {
                return Err(Error::Contract(format!("{}: non-finite values", s.name)));
            }
        }
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &Params<Tensor<T>> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Params<Tensor<T>> {
        &mut self.params
    }

    pub fn cast<U: Scalar>(&self) -> Model<U> {
        Model {
            config: self.config.clone(),
            params: self.params.map(Tensor::cast),
        }
    }

    /// Adds every parameter to `g`, as trainable leaves or as constants.
    pub fn register(&self, g: &mut Graph<T>, trainable: bool) -> Params<Var> {
        self.params.map(|t| {
            if trainable {
                g.param(t.clone())
            } else {
                g.constant(t.clone())
            }
        })
    }

    /// Logits for one `H×W×3` image, using parameters already in `g`.
    pub fn forward(&self, g: &mut Graph<T>, vars: &Params<Var>, image: &Tensor<T>) -> Result<Forward> {
        let c = &self.config;
        if image.shape() != [c.image_size, c.image_size, 3] {
            return Err(Error::Tensor(TensorError::Shape {
                op: "model_forward",
                lhs: image.shape().to_vec(),
                rhs: vec![c.image_size, c.image_size, 3],
            }));
        }
        let patches = g.constant(patchify(image, c.patch_size)?);
        let tokens = embed(g, patches, vars)?;
        let mut maps = Vec::new();
        let eps = T::of(c.layer_norm_eps);
        let encoded = encoder_forward(g, tokens, &vars.blocks, c.num_heads, eps, &mut maps)?;
        let logits = match c.head_kind {
            HeadKind::BaselineVit => head_baseline(g, encoded, &vars.head)?,
            HeadKind::AamlpNoAttention => head_aamlp(g, encoded, &vars.head, c.pool_out, false, &mut maps)?,
            HeadKind::Aamlp => head_aamlp(g, encoded, &vars.head, c.pool_out, true, &mut maps)?,
        };
        Ok(Forward {
            logits,
            attention_maps: maps,
        })
    }

    /// Class probabilities for one image. Index 0 is the real-access class.
    pub fn predict(&self, image: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let vars = self.register(&mut g, false);
        let out = self.forward(&mut g, &vars, image)?;
        let probs = g.softmax_rows(out.logits)?;
        Ok(g.value(probs).clone())
    }

    /// Liveness score: probability of the real-access class.
    pub fn score(&self, image: &Tensor<T>) -> Result<T> {
        Ok(self.predict(image)?.data()[0])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn patchify_shapes() {
        let img = Tensor::<f32>::zeros(vec![256, 256, 3]);
        assert_eq!(patchify(&img, 16).unwrap().shape(), &[256, 768]);
        let small = Tensor::<f64>::from_f64(vec![4, 4, 3], &(0..48).map(f64::from).collect::<Vec<_>>()).unwrap();
        let one = patchify(&small, 4).unwrap();
        assert_eq!(one.shape(), &[1, 48]);
        assert_eq!(one.data(), small.data());
        assert!(patchify(&small, 3).is_err());
        assert!(patchify(&Tensor::<f64>::zeros(vec![4, 4]), 2).is_err());
    }

    #[test]
    fn patchify_index_arithmetic() {
        // value at (y, x, ch) = 100*y + 10*x + ch
        let mut data = Vec::new();
        for y in 0..4 {
            for x in 0..4 {
                for ch in 0..3 {
                    data.push((100 * y + 10 * x + ch) as f64);
                }
            }
        }
        let img = Tensor::<f64>::from_f64(vec![4, 4, 3], &data).unwrap();
        let p = patchify(&img, 2).unwrap();
        assert_eq!(p.shape(), &[4, 12]);
        let mut expect = Vec::new();
        for (py, px) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            for y in 0..2 {
                for x in 0..2 {
                    for ch in 0..3 {
                        expect.push((100 * (2 * py + y) + 10 * (2 * px + x) + ch) as f64);
                    }
                }
            }
        }
        assert_eq!(p.data(), expect.as_slice());
        assert_eq!(
            &p.data()[..12],
            &[0., 1., 2., 10., 11., 12., 100., 101., 102., 110., 111., 112.]
        );
    }

    #[test]
    fn zero_model_is_uniform() {
        let cfg = ModelConfig {
            image_size: 8,
            patch_size: 4,
            embed_dim: 8,
            depth: 1,
            num_heads: 2,
            encoder_mlp_dim: 8,
            mlp_hidden: 8,
            pool_out: 4,
            ..Default::default()
        };
        let m = Model::<f32>::zeros(cfg).unwrap();
        let p = m.predict(&Tensor::full(vec![8, 8, 3], 0.3)).unwrap();
        assert_eq!(p.data(), &[0.5, 0.5]);
    }
}
