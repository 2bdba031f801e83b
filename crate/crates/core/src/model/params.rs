//! Parameter containers.
//!
//! [`Params`] is generic over its leaf type so one structure serves for the
//! tensors themselves (`Params<Tensor<T>>`), their graph handles
//! (`Params<Var>`), and the shape layout (`Params<ParamSpec>`). The canonical
//! order, shared by [`Params::map`], [`Params::visit`] and the checkpoint
//! format, is:
//!
//! 1. `patch.weight [patch_dim×d]`, `patch.bias [d]`, `pos_embedding [n×d]`
//! 2. per encoder block `b`, in block order:
//!    `ln1.gain [d]`, `ln1.bias [d]`,
//!    `attn.q.weight [d×d]`, `attn.q.bias [d]`, likewise `k`, `v`, `o`,
//!    `ln2.gain [d]`, `ln2.bias [d]`,
//!    `mlp.fc1.weight [d×m]`, `mlp.fc1.bias [m]`,
//!    `mlp.fc2.weight [m×d]`, `mlp.fc2.bias [d]`
//! 3. head: `fc1.weight [d×h]`, `fc1.bias [h]`,
//!    then for the full AAMLP head only `attn.q [P×P]`, `attn.k [P×P]`,
//!    `attn.v [P×P]`,
//!    then `fc2.weight [(n·w)×C]`, `fc2.bias [C]` where `w` is `P` for the
//!    pooling heads and 1 for the baseline head.

use crate::error::{Error, Result};
use crate::model::config::ModelConfig;
use crate::rng::SplitMix64;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct BlockParams<X> {
    pub ln1_gain: X,
    pub ln1_bias: X,
    pub wq: X,
    pub bq: X,
    pub wk: X,
    pub bk: X,
    pub wv: X,
    pub bv: X,
    pub wo: X,
    pub bo: X,
    pub ln2_gain: X,
    pub ln2_bias: X,
    pub mlp_w1: X,
    pub mlp_b1: X,
    pub mlp_w2: X,
    pub mlp_b2: X,
}

/// Projections of the head's token-axis self-attention.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadAttention<X> {
    pub wq: X,
    pub wk: X,
    pub wv: X,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams<X> {
    pub fc1_w: X,
    pub fc1_b: X,
    pub attention: Option<HeadAttention<X>>,
    pub fc2_w: X,
    pub fc2_b: X,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Params<X> {
    pub patch_w: X,
    pub patch_b: X,
    pub pos_emb: X,
    pub blocks: Vec<BlockParams<X>>,
    pub head: HeadParams<X>,
}

impl<X> BlockParams<X> {
    fn map<Y>(&self, f: &mut impl FnMut(&X) -> Y) -> BlockParams<Y> {
        BlockParams {
            ln1_gain: f(&self.ln1_gain),
            ln1_bias: f(&self.ln1_bias),
            wq: f(&self.wq),
            bq: f(&self.bq),
            wk: f(&self.wk),
            bk: f(&self.bk),
            wv: f(&self.wv),
            bv: f(&self.bv),
            wo: f(&self.wo),
            bo: f(&self.bo),
            ln2_gain: f(&self.ln2_gain),
            ln2_bias: f(&self.ln2_bias),
            mlp_w1: f(&self.mlp_w1),
            mlp_b1: f(&self.mlp_b1),
            mlp_w2: f(&self.mlp_w2),
            mlp_b2: f(&self.mlp_b2),
        }
    }

    fn refs(&self) -> [&X; 16] {
        [
            &self.ln1_gain,
            &self.ln1_bias,
            &self.wq,
            &self.bq,
            &self.wk,
            &self.bk,
            &self.wv,
            &self.bv,
            &self.wo,
            &self.bo,
            &self.ln2_gain,
            &self.ln2_bias,
            &self.mlp_w1,
            &self.mlp_b1,
            &self.mlp_w2,
            &self.mlp_b2,
        ]
    }

    fn refs_mut(&mut self) -> [&mut X; 16] {
        [
            &mut self.ln1_gain,
            &mut self.ln1_bias,
            &mut self.wq,
            &mut self.bq,
            &mut self.wk,
            &mut self.bk,
            &mut self.wv,
            &mut self.bv,
            &mut self.wo,
            &mut self.bo,
            &mut self.ln2_gain,
            &mut self.ln2_bias,
            &mut self.mlp_w1,
            &mut self.mlp_b1,
            &mut self.mlp_w2,
            &mut self.mlp_b2,
        ]
    }
}

impl<X> Params<X> {
    /// Applies `f` to every leaf in canonical order.
    pub fn map<Y>(&self, mut f: impl FnMut(&X) -> Y) -> Params<Y> {
        let patch_w = f(&self.patch_w);
        let patch_b = f(&self.patch_b);
        let pos_emb = f(&self.pos_emb);
        let blocks = self.blocks.iter().map(|b| b.map(&mut f)).collect();
        let fc1_w = f(&self.head.fc1_w);
        let fc1_b = f(&self.head.fc1_b);
        let attention = self.head.attention.as_ref().map(|a| HeadAttention {
            wq: f(&a.wq),
            wk: f(&a.wk),
            wv: f(&a.wv),
        });
        let fc2_w = f(&self.head.fc2_w);
        let fc2_b = f(&self.head.fc2_b);
        Params {
            patch_w,
            patch_b,
            pos_emb,
            blocks,
            head: HeadParams {
                fc1_w,
                fc1_b,
                attention,
                fc2_w,
                fc2_b,
            },
        }
    }

    /// Leaves in canonical order.
    pub fn visit(&self) -> Vec<&X> {
        let mut out = vec![&self.patch_w, &self.patch_b, &self.pos_emb];
        for b in &self.blocks {
            out.extend(b.refs());
        }
        out.push(&self.head.fc1_w);
        out.push(&self.head.fc1_b);
        if let Some(a) = &self.head.attention {
            out.extend([&a.wq, &a.wk, &a.wv]);
        }
        out.push(&self.head.fc2_w);
        out.push(&self.head.fc2_b);
        out
    }

    pub fn visit_mut(&mut self) -> Vec<&mut X> {
        let mut out = vec![&mut self.patch_w, &mut self.patch_b, &mut self.pos_emb];
        for b in &mut self.blocks {
            out.extend(b.refs_mut());
        }
        out.push(&mut self.head.fc1_w);
        out.push(&mut self.head.fc1_b);
        if let Some(a) = &mut self.head.attention {
            out.extend([&mut a.wq, &mut a.wk, &mut a.wv]);
        }
        out.push(&mut self.head.fc2_w);
        out.push(&mut self.head.fc2_b);
        out
    }

    /// Rebuilds a container with this one's structure from leaves given in
    /// canonical order.
    pub fn zip_ordered<Y>(&self, leaves: Vec<Y>) -> Result<Params<Y>> {
        let expected = self.visit().len();
        if leaves.len() != expected {
            return Err(Error::Contract(format!(
                "expected {expected} parameter tensors, got {}",
                leaves.len()
            )));
        }
        let mut it = leaves.into_iter();
        Ok(self.map(|_| it.next().expect("length checked")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Zeros,
    Ones,
    /// Uniform on `±bound`.
    Uniform(f64),
    Normal(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

fn spec(name: impl Into<String>, shape: Vec<usize>, init: Init) -> ParamSpec {
    ParamSpec {
        name: name.into(),
        shape,
        init,
    }
}

fn fan_in(rows: usize) -> Init {
    Init::Uniform(1.0 / (rows as f64).sqrt())
}

/// Names, shapes and initializers of every parameter for `config`.
pub fn layout(config: &ModelConfig) -> Params<ParamSpec> {
    let d = config.embed_dim;
    let n = config.num_patches();
    let m = config.encoder_mlp_dim;
    let h = config.mlp_hidden;
    let p = config.pool_out;
    let c = config.num_classes;
    let blocks = (0..config.depth)
        .map(|b| {
            let w = |name: &str, r: usize, cols: usize| spec(format!("block{b}.{name}"), vec![r, cols], fan_in(r));
            let v = |name: &str, len: usize, init: Init| spec(format!("block{b}.{name}"), vec![len], init);
            BlockParams {
                ln1_gain: v("ln1.gain", d, Init::Ones),
                ln1_bias: v("ln1.bias", d, Init::Zeros),
                wq: w("attn.q.weight", d, d),
                bq: v("attn.q.bias", d, Init::Zeros),
                wk: w("attn.k.weight", d, d),
                bk: v("attn.k.bias", d, Init::Zeros),
                wv: w("attn.v.weight", d, d),
                bv: v("attn.v.bias", d, Init::Zeros),
                wo: w("attn.o.weight", d, d),
                bo: v("attn.o.bias", d, Init::Zeros),
                ln2_gain: v("ln2.gain", d, Init::Ones),
                ln2_bias: v("ln2.bias", d, Init::Zeros),
                mlp_w1: w("mlp.fc1.weight", d, m),
                mlp_b1: v("mlp.fc1.bias", m, Init::Zeros),
                mlp_w2: w("mlp.fc2.weight", m, d),
                mlp_b2: v("mlp.fc2.bias", d, Init::Zeros),
            }
        })
        .collect();
    let attention = config.head_kind.uses_attention().then(|| HeadAttention {
        wq: spec("head.attn.q", vec![p, p], fan_in(p)),
        wk: spec("head.attn.k", vec![p, p], fan_in(p)),
        wv: spec("head.attn.v", vec![p, p], fan_in(p)),
    });
    let fc2_in = n * config.head_token_width();
    Params {
        patch_w: spec("patch.weight", vec![config.patch_dim(), d], fan_in(config.patch_dim())),
        patch_b: spec("patch.bias", vec![d], Init::Zeros),
        pos_emb: spec("pos_embedding", vec![n, d], Init::Normal(0.02)),
        blocks,
        head: HeadParams {
            fc1_w: spec("head.fc1.weight", vec![d, h], fan_in(d)),
            fc1_b: spec("head.fc1.bias", vec![h], Init::Zeros),
            attention,
            fc2_w: spec("head.fc2.weight", vec![fc2_in, c], fan_in(fc2_in)),
            fc2_b: spec("head.fc2.bias", vec![c], Init::Zeros),
        },
    }
}

/// Seeded initialization. Values are drawn in 64-bit precision in canonical
/// order from one SplitMix64 stream, then rounded to `T`.
pub fn initialize<T: Scalar>(config: &ModelConfig) -> Params<Tensor<T>> {
    let mut rng = SplitMix64::new(config.seed);
    layout(config).map(|s| {
        let len: usize = s.shape.iter().product();
        let data: Vec<f64> = match s.init {
            Init::Zeros => vec![0.0; len],
            Init::Ones => vec![1.0; len],
            Init::Uniform(b) => (0..len).map(|_| rng.uniform(-b, b)).collect(),
            Init::Normal(sd) => (0..len).map(|_| sd * rng.normal()).collect(),
        };
        Tensor::from_f64(s.shape.clone(), &data).expect("layout shapes are positive")
    })
}

/// Total number of scalar parameters.
pub fn count<T: Scalar>(params: &Params<Tensor<T>>) -> usize {
    params.visit().iter().map(|t| t.len()).sum()
}
