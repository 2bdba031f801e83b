//! Frames, manifests, batching, and the synthetic corpus.

pub mod batch;
pub mod manifest;
pub mod ppm;
pub mod synth;

pub use batch::{batch_iter, Batch, Dataset, OrderHasher};
pub use manifest::{AttackType, Label, ManifestEntry, ManifestSummary, SampleManifest, Split};
pub use ppm::{load_image, RgbImage};
pub use synth::{synth_corpus, SplitCounts, SynthSpec};
