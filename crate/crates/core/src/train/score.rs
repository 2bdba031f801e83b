//! Turning a model and a split into liveness score records.

use std::path::Path;

use crate::data::{load_image, Dataset, SampleManifest, Split};
use crate::error::{Error, Result};
use crate::metrics::ScoreRecord;
use crate::model::{checkpoint, Model};
use crate::tensor::Tensor;

fn check_image(model: &Model<f32>, image: &Tensor<f32>, id: &str) -> Result<()> {
    let s = model.config().image_size;
    if image.shape() != [s, s, 3] {
        return Err(Error::Checkpoint(format!(
            "model expects {s}x{s}x3 images but {id} has shape {:?}",
            image.shape()
        )));
    }
    Ok(())
}

fn record(model: &Model<f32>, image: &Tensor<f32>, id: &str, label: crate::data::Label) -> Result<ScoreRecord> {
    check_image(model, image, id)?;
    let score = model.score(image)? as f64;
    ScoreRecord::new(id, score.clamp(0.0, 1.0), label)
}

/// One record per sample of `data`, in manifest order; score = P(real).
pub fn score_dataset(model: &Model<f32>, data: &Dataset) -> Result<Vec<ScoreRecord>> {
    data.entries()
        .iter()
        .enumerate()
        .map(|(i, e)| record(model, data.image(i), &e.path, e.label))
        .collect()
}

/// Scores one split, reading frames lazily in manifest order.
pub fn score_split(model: &Model<f32>, manifest: &SampleManifest, split: Split) -> Result<Vec<ScoreRecord>> {
    let entries: Vec<_> = manifest.split(split).collect();
    if entries.is_empty() {
        return Err(Error::Contract(format!("split {split} is empty")));
    }
    entries
        .into_iter()
        .map(|e| {
            let image = load_image::<f32>(&manifest.resolve(e))?;
            record(model, &image, &e.path, e.label)
        })
        .collect()
}

pub fn evaluate_checkpoint(path: &Path, manifest: &SampleManifest, split: Split) -> Result<Vec<ScoreRecord>> {
    let model = checkpoint::load(path)?;
    score_split(&model, manifest, split)
}
