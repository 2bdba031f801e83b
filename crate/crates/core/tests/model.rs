//! Forward-pass checks against a loop-level reference written without the
//! tensor library.

use aavit::model::{checkpoint, head_aamlp, head_baseline, HeadParams, Params};
use aavit::rng::SplitMix64;
use aavit::tensor::Tensor;
use aavit::{Graph, HeadKind, Model, ModelConfig};

type Mat = Vec<Vec<f64>>;

fn toy(head_kind: HeadKind, seed: u64) -> ModelConfig {
    ModelConfig {
        image_size: 8,
        patch_size: 4,
        embed_dim: 8,
        depth: 2,
        num_heads: 2,
        encoder_mlp_dim: 12,
        mlp_hidden: 8,
        head_kind,
        pool_out: 3,
        num_classes: 2,
        layer_norm_eps: 1e-5,
        seed,
    }
}

fn random_image(seed: u64, size: usize) -> Tensor<f64> {
    let mut rng = SplitMix64::new(seed);
    let data = (0..size * size * 3).map(|_| rng.next_f64()).collect();
    Tensor::new(vec![size, size, 3], data).unwrap()
}

fn mat(t: &Tensor<f64>) -> Mat {
    let cols = t.last_dim();
    t.data().chunks(cols).map(<[f64]>::to_vec).collect()
}

fn vec1(t: &Tensor<f64>) -> Vec<f64> {
    t.data().to_vec()
}

fn matmul(a: &Mat, b: &Mat) -> Mat {
    a.iter()
        .map(|row| {
            (0..b[0].len())
                .map(|j| row.iter().zip(b).map(|(x, brow)| x * brow[j]).sum())
                .collect()
        })
        .collect()
}

fn linear(x: &Mat, w: &Tensor<f64>, b: &Tensor<f64>) -> Mat {
    let bias = vec1(b);
    matmul(x, &mat(w))
        .into_iter()
        .map(|r| r.iter().zip(&bias).map(|(v, c)| v + c).collect())
        .collect()
}

fn gelu(x: f64) -> f64 {
    let c = (2.0 / std::f64::consts::PI).sqrt();
    0.5 * x * (1.0 + (c * (x + 0.044715 * x * x * x)).tanh())
}

fn softmax(row: &[f64]) -> Vec<f64> {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

fn layer_norm(x: &Mat, gain: &Tensor<f64>, bias: &Tensor<f64>, eps: f64) -> Mat {
    x.iter()
        .map(|r| {
            let n = r.len() as f64;
            let mu = r.iter().sum::<f64>() / n;
            let var = r.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
            r.iter()
                .enumerate()
                .map(|(i, v)| (v - mu) / (var + eps).sqrt() * gain.data()[i] + bias.data()[i])
                .collect()
        })
        .collect()
}

fn attention(q: &Mat, k: &Mat, v: &Mat, scale: f64, maps: &mut Vec<Mat>) -> Mat {
    let weights: Mat = q
        .iter()
        .map(|qi| {
            let s: Vec<f64> = k
                .iter()
                .map(|kj| qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() * scale)
                .collect();
            softmax(&s)
        })
        .collect();
    let out = matmul(&weights, v);
    maps.push(weights);
    out
}

fn columns(x: &Mat, s: usize, e: usize) -> Mat {
    x.iter().map(|r| r[s..e].to_vec()).collect()
}

fn pool(row: &[f64], p: usize) -> Vec<f64> {
    let l = row.len();
    (0..p)
        .map(|i| {
            let s = i * l / p;
            let e = ((i + 1) * l).div_ceil(p);
            row[s..e].iter().sum::<f64>() / (e - s) as f64
        })
        .collect()
}

/// Class probabilities and every attention map, from plain loops.
fn reference(cfg: &ModelConfig, params: &Params<Tensor<f64>>, image: &Tensor<f64>) -> (Vec<f64>, Vec<Mat>) {
    let (size, ps) = (cfg.image_size, cfg.patch_size);
    let mut patches = Vec::new();
    for gy in 0..size / ps {
        for gx in 0..size / ps {
            let mut row = Vec::new();
            for y in 0..ps {
                for x in 0..ps {
                    for c in 0..3 {
                        row.push(image.data()[((gy * ps + y) * size + gx * ps + x) * 3 + c]);
                    }
                }
            }
            patches.push(row);
        }
    }
    let pos = mat(&params.pos_emb);
    let mut x: Mat = linear(&patches, &params.patch_w, &params.patch_b)
        .into_iter()
        .zip(&pos)
        .map(|(r, p)| r.iter().zip(p).map(|(a, b)| a + b).collect())
        .collect();
    let mut maps = Vec::new();
    let dh = cfg.embed_dim / cfg.num_heads;
    let eps = cfg.layer_norm_eps;
    for b in &params.blocks {
        let h = layer_norm(&x, &b.ln1_gain, &b.ln1_bias, eps);
        let (q, k, v) = (
            linear(&h, &b.wq, &b.bq),
            linear(&h, &b.wk, &b.bk),
            linear(&h, &b.wv, &b.bv),
        );
        let mut merged: Mat = vec![Vec::new(); x.len()];
        for head in 0..cfg.num_heads {
            let (s, e) = (head * dh, (head + 1) * dh);
            let out = attention(
                &columns(&q, s, e),
                &columns(&k, s, e),
                &columns(&v, s, e),
                1.0 / (dh as f64).sqrt(),
                &mut maps,
            );
            for (m, o) in merged.iter_mut().zip(out) {
                m.extend(o);
            }
        }
        let attn = linear(&merged, &b.wo, &b.bo);
        x = x
            .iter()
            .zip(&attn)
            .map(|(r, a)| r.iter().zip(a).map(|(p, q)| p + q).collect())
            .collect();
        let h = layer_norm(&x, &b.ln2_gain, &b.ln2_bias, eps);
        let m: Mat = linear(&h, &b.mlp_w1, &b.mlp_b1)
            .into_iter()
            .map(|r| r.into_iter().map(gelu).collect())
            .collect();
        let m = linear(&m, &b.mlp_w2, &b.mlp_b2);
        x = x
            .iter()
            .zip(&m)
            .map(|(r, a)| r.iter().zip(a).map(|(p, q)| p + q).collect())
            .collect();
    }
    let hd = &params.head;
    let u: Mat = linear(&x, &hd.fc1_w, &hd.fc1_b)
        .into_iter()
        .map(|r| r.into_iter().map(gelu).collect())
        .collect();
    let per_token: Mat = match cfg.head_kind {
        HeadKind::BaselineVit => u.iter().map(|r| vec![r.iter().sum::<f64>() / r.len() as f64]).collect(),
        kind => {
            let p: Mat = u.iter().map(|r| pool(r, cfg.pool_out)).collect();
            if kind == HeadKind::Aamlp {
                let a = hd.attention.as_ref().unwrap();
                let (q, k, v) = (
                    matmul(&p, &mat(&a.wq)),
                    matmul(&p, &mat(&a.wk)),
                    matmul(&p, &mat(&a.wv)),
                );
                attention(&q, &k, &v, 1.0 / (cfg.pool_out as f64).sqrt(), &mut maps)
            } else {
                p
            }
        }
    };
    let flat = vec![per_token.concat()];
    let logits = linear(&flat, &hd.fc2_w, &hd.fc2_b).remove(0);
    (softmax(&logits), maps)
}

#[test]
fn forward_matches_loop_reference() {
    for (i, kind) in HeadKind::ALL.into_iter().enumerate() {
        let cfg = toy(kind, 40 + i as u64);
        let model = Model::<f64>::init(cfg.clone()).unwrap();
        for s in 0..5 {
            let image = random_image(s, 8);
            let (want, want_maps) = reference(&cfg, model.params(), &image);
            let got = model.predict(&image).unwrap();
            for (a, b) in got.data().iter().zip(&want) {
                assert!((a - b).abs() < 1e-12, "{kind:?}: {a} vs {b}");
            }
            let mut g = Graph::new();
            let vars = model.register(&mut g, false);
            let out = model.forward(&mut g, &vars, &image).unwrap();
            assert_eq!(out.attention_maps.len(), want_maps.len());
            for (v, m) in out.attention_maps.iter().zip(&want_maps) {
                for (a, b) in g.value(*v).data().iter().zip(m.concat()) {
                    assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }
}

#[test]
fn pool_to_one_without_attention_is_the_baseline_head() {
    let mut rng = SplitMix64::new(77);
    let (n, d) = (4, 8);
    let base = Model::<f64>::init(ModelConfig {
        head_kind: HeadKind::BaselineVit,
        ..toy(HeadKind::BaselineVit, 3)
    })
    .unwrap();
    let shared = &base.params().head;
    assert_eq!(shared.fc2_w.shape(), &[n, 2]);
    for _ in 0..100 {
        let tokens = Tensor::new(vec![n, d], (0..n * d).map(|_| rng.uniform(-3.0, 3.0)).collect()).unwrap();
        let mut g = Graph::<f64>::new();
        let t = g.constant(tokens);
        let hp: HeadParams<_> = HeadParams {
            fc1_w: g.constant(shared.fc1_w.clone()),
            fc1_b: g.constant(shared.fc1_b.clone()),
            attention: None,
            fc2_w: g.constant(shared.fc2_w.clone()),
            fc2_b: g.constant(shared.fc2_b.clone()),
        };
        let a = head_baseline(&mut g, t, &hp).unwrap();
        let b = head_aamlp(&mut g, t, &hp, 1, false, &mut Vec::new()).unwrap();
        for (x, y) in g.value(a).data().iter().zip(g.value(b).data()) {
            assert!((x - y).abs() <= 1e-7, "{x} vs {y}");
        }
    }
}

#[test]
fn probabilities_and_attention_rows_are_normalised() {
    for kind in HeadKind::ALL {
        let model = Model::<f32>::init(toy(kind, 5)).unwrap();
        for s in 0..20 {
            let image = random_image(100 + s, 8).cast::<f32>().map(|v| v * 4.0 - 2.0);
            let mut g = Graph::new();
            let vars = model.register(&mut g, false);
            let out = model.forward(&mut g, &vars, &image).unwrap();
            let probs = g.softmax_rows(out.logits).unwrap();
            let total: f64 = g.value(probs).data().iter().map(|&v| v as f64).sum();
            assert!((total - 1.0).abs() <= 1e-6);
            for m in &out.attention_maps {
                let t = g.value(*m);
                for row in t.data().chunks(t.last_dim()) {
                    let s: f64 = row.iter().map(|&v| v as f64).sum();
                    assert!((s - 1.0).abs() <= 1e-6);
                }
            }
        }
    }
}

#[test]
fn single_and_double_precision_agree() {
    let cfg = toy(HeadKind::Aamlp, 8);
    let wide = Model::<f64>::init(cfg.clone()).unwrap();
    let narrow = Model::<f32>::init(cfg).unwrap();
    assert_eq!(wide.cast::<f32>().params(), narrow.params());
    let image = random_image(9, 8);
    let a = wide.score(&image).unwrap();
    let b = narrow.score(&image.cast()).unwrap() as f64;
    assert!((a - b).abs() < 1e-5);
}

#[test]
fn initialisation_depends_only_on_the_seed() {
    let a = Model::<f32>::init(toy(HeadKind::Aamlp, 1)).unwrap();
    let b = Model::<f32>::init(toy(HeadKind::Aamlp, 1)).unwrap();
    let c = Model::<f32>::init(toy(HeadKind::Aamlp, 2)).unwrap();
    assert_eq!(a.params(), b.params());
    assert_ne!(a.params(), c.params());
}

#[test]
fn checkpoint_round_trip_scores_bitwise() {
    let model = Model::<f32>::init(toy(HeadKind::Aamlp, 12)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.aavt");
    checkpoint::save(&model, &path).unwrap();
    let back = checkpoint::load(&path).unwrap();
    assert_eq!(back.config(), model.config());
    for s in 0..5 {
        let image = random_image(s, 8).cast::<f32>();
        assert_eq!(
            model.score(&image).unwrap().to_bits(),
            back.score(&image).unwrap().to_bits()
        );
    }
}

#[test]
fn wrong_image_size_is_rejected() {
    let model = Model::<f32>::init(toy(HeadKind::Aamlp, 1)).unwrap();
    assert!(model.score(&Tensor::zeros(vec![16, 16, 3])).is_err());
    assert!(model.score(&Tensor::zeros(vec![8, 8, 1])).is_err());
}
