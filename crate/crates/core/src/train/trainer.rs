//! Mini-batch training with softmax cross-entropy and Adam.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};

use crate::autodiff::Graph;
use crate::data::{Dataset, OrderHasher, SampleManifest, Split};
use crate::error::{Error, Result};
use crate::metrics;
use crate::model::{checkpoint, Model};
use crate::scalar::Scalar;
use crate::tensor::{Tensor, TensorError};
use crate::train::adam::{Adam, OptimizerState};
use crate::train::config::{Selection, TrainConfig};
use crate::train::score::score_dataset;

/// `−log softmax(logits)[class]` through a stable log-sum-exp.
pub fn cross_entropy<T: Scalar>(logits: &Tensor<T>, class: usize) -> Result<T> {
    let mut g = Graph::new();
    let z = g.constant(logits.clone());
    let loss = g.softmax_cross_entropy(z, class)?;
    Ok(g.value(loss).item()?)
}

/// Mean cross-entropy over `indices` and its gradient for every parameter,
/// in canonical order. Samples are summed in ascending index order.
pub fn batch_loss_and_grads<T: Scalar>(
    model: &Model<T>,
    data: &[(Tensor<T>, usize)],
    indices: &[usize],
) -> Result<(T, Vec<Vec<T>>)> {
    if indices.is_empty() {
        return Err(Error::Contract("empty batch".into()));
    }
    let mut order = indices.to_vec();
    order.sort_unstable();
    let mut g = Graph::new();
    let vars = model.register(&mut g, true);
    let mut total = None;
    for &i in &order {
        let (image, label) = &data[i];
        let out = model.forward(&mut g, &vars, image)?;
        let loss = g.softmax_cross_entropy(out.logits, *label)?;
        total = Some(match total {
            None => loss,
            Some(acc) => g.add(acc, loss)?,
        });
    }
    let mean = g.scale(total.expect("non-empty batch"), T::one() / T::of(order.len() as f64))?;
    let value = g.value(mean).item()?;
    g.backward(mean)?;
    let grads = vars
        .visit()
        .into_iter()
        .map(|&v| g.grad(v).expect("parameters require grad").to_vec())
        .collect();
    Ok((value, grads))
}

/// Mean cross-entropy over a whole split, without gradients.
pub fn mean_loss(model: &Model<f32>, data: &Dataset) -> Result<f64> {
    let mut total = 0.0;
    for i in 0..data.len() {
        let mut g = Graph::new();
        let vars = model.register(&mut g, false);
        let out = model.forward(&mut g, &vars, data.image(i))?;
        let loss = g.softmax_cross_entropy(out.logits, data.label(i))?;
        total += g.value(loss).item()? as f64;
    }
    Ok(total / data.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: usize,
    pub loss: f32,
    /// Dev-split EER, filled on the last step of each epoch when a dev split exists.
    pub dev_eer: Option<f64>,
}

pub fn loss_history_csv(history: &[LossRecord]) -> String {
    let mut out = String::from("step,loss,dev_eer\n");
    for r in history {
        let dev = r.dev_eer.map(|e| e.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{},{},{}", r.step, r.loss, dev);
    }
    out
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// The selected model (last, or best dev EER).
    pub model: Model<f32>,
    pub history: Vec<LossRecord>,
    /// SHA-256 over every sample id in training visiting order.
    pub batch_order_hash: String,
    pub checkpoints: Vec<PathBuf>,
    /// `(epoch, dev EER)` of the selected epoch under best-dev selection.
    pub best_dev: Option<(usize, f64)>,
}

impl TrainOutcome {
    pub fn losses(&self) -> Vec<f32> {
        self.history.iter().map(|r| r.loss).collect()
    }
}

pub const FINAL_CHECKPOINT: &str = "model.aavt";
pub const LOSS_FILE: &str = "loss.csv";

fn numeric_abort(step: usize, e: Error) -> Error {
    match e {
        Error::Tensor(TensorError::NonFinite { .. }) => Error::NonFiniteLoss { step },
        other => other,
    }
}

/// Trains `model` on the train split of `manifest`.
///
/// The result is a pure function of the manifest contents, `model` and
/// `cfg`. With `out_dir`, periodic checkpoints `step_NNNNNN.aavt`, the
/// selected model as [`FINAL_CHECKPOINT`] and the loss history as
/// [`LOSS_FILE`] are written there.
pub fn train(
    mut model: Model<f32>,
    manifest: &SampleManifest,
    cfg: &TrainConfig,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let train_data = Dataset::load(manifest, Split::Train)?;
    let dev_data = if manifest.has_split(Split::Dev) {
        Some(Dataset::load(manifest, Split::Dev)?)
    } else {
        None
    };
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let samples: Vec<(Tensor<f32>, usize)> = (0..train_data.len())
        .map(|i| (train_data.image(i).clone(), train_data.label(i)))
        .collect();

    let adam = Adam {
        lr: cfg.lr,
        beta1: cfg.betas.0,
        beta2: cfg.betas.1,
        eps: cfg.eps,
    };
    let mut state = OptimizerState::new(&model.params().visit());
    let mut history = Vec::new();
    let mut hasher = OrderHasher::new();
    let mut checkpoints = Vec::new();
    let mut best: Option<(usize, f64, Model<f32>)> = None;
    let mut step = 0usize;

    for epoch in 0..cfg.epochs {
        for batch in train_data.batches(cfg.batch_size, cfg.seed, epoch as u64) {
            hasher.update(&batch.ids);
            step += 1;
            let (loss, grads) =
                batch_loss_and_grads(&model, &samples, &batch.indices).map_err(|e| numeric_abort(step, e))?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { step });
            }
            adam.step(&mut model.params_mut().visit_mut(), &grads, &mut state)?;
            if model.params().visit().iter().any(|t| !t.is_finite()) {
                return Err(Error::NonFiniteLoss { step });
            }
            history.push(LossRecord {
                step,
                loss,
                dev_eer: None,
            });
            if let Some(dir) = out_dir.filter(|_| cfg.checkpoint_every > 0 && step.is_multiple_of(cfg.checkpoint_every))
            {
                let path = dir.join(format!("step_{step:06}.aavt"));
                checkpoint::save(&model, &path)?;
                checkpoints.push(path);
            }
        }
        if let Some(dev) = &dev_data {
            let records = score_dataset(&model, dev).map_err(|e| numeric_abort(step, e))?;
            let (dev_eer, _) = metrics::eer(&records)?;
            info!("epoch {epoch}: step {step}, dev EER {}%", metrics::percent(dev_eer));
            if let Some(last) = history.last_mut() {
                last.dev_eer = Some(dev_eer);
            }
            if cfg.select == Selection::BestDev && best.as_ref().is_none_or(|(_, e, _)| dev_eer < *e) {
                best = Some((epoch, dev_eer, model.clone()));
            }
        }
    }

    let (model, best_dev) = match (cfg.select, best) {
        (Selection::BestDev, Some((epoch, eer, m))) => (m, Some((epoch, eer))),
        _ => (model, None),
    };
    if let Some(dir) = out_dir {
        let path = dir.join(FINAL_CHECKPOINT);
        checkpoint::save(&model, &path)?;
        checkpoints.push(path);
        let loss_path = dir.join(LOSS_FILE);
        fs::write(&loss_path, loss_history_csv(&history)).map_err(|e| Error::io(&loss_path, e))?;
    }
    Ok(TrainOutcome {
        model,
        history,
        batch_order_hash: hasher.hex(),
        checkpoints,
        best_dev,
    })
}
