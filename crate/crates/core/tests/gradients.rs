use aavit::autodiff::{Graph, Var};
use aavit::gradcheck::{grad_check, grad_check_many};
use aavit::model::{head_aamlp, head_baseline, Params};
use aavit::rng::SplitMix64;
use aavit::tensor::{Result, Tensor, TensorError};
use aavit::{Error, HeadKind, Model, ModelConfig};

const H: f64 = 1e-5;
const TOL: f64 = 1e-5;

fn random(shape: &[usize], rng: &mut SplitMix64, scale: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    let data: Vec<f64> = (0..n).map(|_| rng.uniform(-scale, scale)).collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// Reduces `out` to a scalar with fixed random weights so every output
/// coordinate contributes a distinct gradient.
fn project(g: &mut Graph<f64>, out: Var, seed: u64) -> Result<Var> {
    let shape = g.value(out).shape().to_vec();
    let w = random(&shape, &mut SplitMix64::new(seed), 1.0);
    let w = g.constant(w);
    let prod = g.mul(out, w)?;
    g.sum(prod)
}

fn check_unary(name: &str, x: Tensor<f64>, op: impl Fn(&mut Graph<f64>, Var) -> Result<Var>) {
    let err = grad_check(
        |g, v| {
            let out = op(g, v)?;
            project(g, out, 99)
        },
        &x,
        H,
    )
    .unwrap();
    assert!(err <= TOL, "{name}: max relative error {err}");
}

#[test]
fn elementwise_and_reductions() {
    let mut rng = SplitMix64::new(1);
    check_unary("gelu", random(&[3, 5], &mut rng, 3.0), |g, x| g.gelu(x));
    check_unary("scale", random(&[4], &mut rng, 1.0), |g, x| g.scale(x, -1.7));
    check_unary("mean_last", random(&[3, 6], &mut rng, 1.0), |g, x| g.mean_last(x));
    check_unary("sum", random(&[2, 3], &mut rng, 1.0), |g, x| g.sum(x));
    check_unary("transpose", random(&[2, 5], &mut rng, 1.0), |g, x| g.transpose(x));
    check_unary("reshape", random(&[2, 6], &mut rng, 1.0), |g, x| {
        g.reshape(x, vec![3, 4])
    });
    check_unary("softmax_rows", random(&[3, 4], &mut rng, 2.0), |g, x| g.softmax_rows(x));
    check_unary("slice_cols", random(&[3, 6], &mut rng, 1.0), |g, x| {
        g.slice_cols(x, 1, 4)
    });
    check_unary("mul_self", random(&[5], &mut rng, 1.0), |g, x| g.mul(x, x));
}

#[test]
fn adaptive_pooling_all_bin_layouts() {
    let mut rng = SplitMix64::new(2);
    for (l, p) in [(8, 4), (7, 3), (5, 5), (6, 1), (10, 4)] {
        check_unary("adaptive_avg_pool_1d", random(&[3, l], &mut rng, 1.0), |g, x| {
            g.adaptive_avg_pool_1d(x, p)
        });
    }
}

#[test]
fn binary_ops() {
    let mut rng = SplitMix64::new(3);
    type Op = fn(&mut Graph<f64>, &[Var]) -> Result<Var>;
    let cases: Vec<(&str, Vec<Tensor<f64>>, Op)> = vec![
        (
            "matmul",
            vec![random(&[3, 4], &mut rng, 1.0), random(&[4, 2], &mut rng, 1.0)],
            |g, v| g.matmul(v[0], v[1]),
        ),
        (
            "add",
            vec![random(&[2, 3], &mut rng, 1.0), random(&[2, 3], &mut rng, 1.0)],
            |g, v| g.add(v[0], v[1]),
        ),
        (
            "mul",
            vec![random(&[2, 3], &mut rng, 1.0), random(&[2, 3], &mut rng, 1.0)],
            |g, v| g.mul(v[0], v[1]),
        ),
        (
            "add_row",
            vec![random(&[3, 4], &mut rng, 1.0), random(&[4], &mut rng, 1.0)],
            |g, v| g.add_row(v[0], v[1]),
        ),
        (
            "linear",
            vec![
                random(&[3, 4], &mut rng, 1.0),
                random(&[4, 5], &mut rng, 1.0),
                random(&[5], &mut rng, 1.0),
            ],
            |g, v| g.linear(v[0], v[1], v[2]),
        ),
        (
            "layer_norm",
            vec![
                random(&[3, 6], &mut rng, 2.0),
                random(&[6], &mut rng, 1.5),
                random(&[6], &mut rng, 1.0),
            ],
            |g, v| g.layer_norm(v[0], v[1], v[2], 1e-5),
        ),
        (
            "concat_cols",
            vec![random(&[3, 2], &mut rng, 1.0), random(&[3, 4], &mut rng, 1.0)],
            |g, v| g.concat_cols(&[v[0], v[1], v[0]]),
        ),
    ];
    for (name, inputs, op) in cases {
        let report = grad_check_many(
            |g, v| {
                let out = op(g, v)?;
                project(g, out, 7)
            },
            &inputs,
            H,
        )
        .unwrap();
        assert!(report.max_rel_error <= TOL, "{name}: {report:?}");
    }
}

#[test]
fn cross_entropy_each_target() {
    let mut rng = SplitMix64::new(4);
    let logits = random(&[3], &mut rng, 2.0);
    for target in 0..3 {
        let err = grad_check(|g, z| g.softmax_cross_entropy(z, target), &logits, H).unwrap();
        assert!(err <= TOL, "target {target}: {err}");
    }
}

fn toy_config(head_kind: HeadKind) -> ModelConfig {
    ModelConfig {
        image_size: 8,
        patch_size: 4,
        embed_dim: 8,
        depth: 1,
        num_heads: 2,
        encoder_mlp_dim: 16,
        mlp_hidden: 8,
        head_kind,
        pool_out: 4,
        num_classes: 2,
        layer_norm_eps: 1e-5,
        seed: 11,
    }
}

fn lift(e: Error) -> TensorError {
    match e {
        Error::Tensor(t) => t,
        other => TensorError::Contract(other.to_string()),
    }
}

/// Checks d(loss)/d(every parameter) of the full toy model.
fn check_model(head_kind: HeadKind) {
    let model = Model::<f64>::init(toy_config(head_kind)).unwrap();
    let image = random(&[8, 8, 3], &mut SplitMix64::new(5), 1.0).map(|v| 0.5 + 0.5 * v);
    let leaves: Vec<Tensor<f64>> = model.params().visit().into_iter().cloned().collect();
    let report = grad_check_many(
        |g, vars| {
            let params: Params<Var> = model.params().zip_ordered(vars.to_vec()).map_err(lift)?;
            let out = model.forward(g, &params, &image).map_err(lift)?;
            g.softmax_cross_entropy(out.logits, 1)
        },
        &leaves,
        H,
    )
    .unwrap();
    assert!(report.max_rel_error <= TOL, "{head_kind:?}: {report:?}");
}

#[test]
fn toy_model_aamlp() {
    check_model(HeadKind::Aamlp);
}

#[test]
fn toy_model_other_heads() {
    check_model(HeadKind::AamlpNoAttention);
    check_model(HeadKind::BaselineVit);
}

#[test]
fn heads_in_isolation() {
    let cfg = toy_config(HeadKind::Aamlp);
    let model = Model::<f64>::init(cfg.clone()).unwrap();
    let head = &model.params().head;
    let attn = head.attention.as_ref().unwrap();
    let tokens = random(&[4, 8], &mut SplitMix64::new(6), 1.5);
    let inputs = vec![
        tokens,
        head.fc1_w.clone(),
        head.fc1_b.clone(),
        attn.wq.clone(),
        attn.wk.clone(),
        attn.wv.clone(),
        head.fc2_w.clone(),
        head.fc2_b.clone(),
    ];
    let report = grad_check_many(
        |g, v| {
            let hp = aavit::model::HeadParams {
                fc1_w: v[1],
                fc1_b: v[2],
                attention: Some(aavit::model::HeadAttention {
                    wq: v[3],
                    wk: v[4],
                    wv: v[5],
                }),
                fc2_w: v[6],
                fc2_b: v[7],
            };
            let logits = head_aamlp(g, v[0], &hp, 4, true, &mut Vec::new()).map_err(lift)?;
            project(g, logits, 3)
        },
        &inputs,
        H,
    )
    .unwrap();
    assert!(report.max_rel_error <= TOL, "{report:?}");

    let base_cfg = ModelConfig {
        head_kind: HeadKind::BaselineVit,
        ..cfg
    };
    let base = Model::<f64>::init(base_cfg).unwrap();
    let bh = &base.params().head;
    let fc2_w = bh.fc2_w.clone();
    let inputs = vec![
        inputs[0].clone(),
        bh.fc1_w.clone(),
        bh.fc1_b.clone(),
        fc2_w,
        bh.fc2_b.clone(),
    ];
    let report = grad_check_many(
        |g, v| {
            let hp = aavit::model::HeadParams {
                fc1_w: v[1],
                fc1_b: v[2],
                attention: None,
                fc2_w: v[3],
                fc2_b: v[4],
            };
            let logits = head_baseline(g, v[0], &hp).map_err(lift)?;
            project(g, logits, 4)
        },
        &inputs,
        H,
    )
    .unwrap();
    assert!(report.max_rel_error <= TOL, "{report:?}");
}
