//! Synthetic real/spoof corpus for desk-scale runs.
//!
//! Every video draws a smooth colour field: a per-channel base level plus two
//! low-frequency sinusoids. Frames of the same video jitter the sinusoid
//! phases and add Gaussian sensor noise. Attack videos overlay a zero-mean
//! alternating-sign pattern on top, mimicking the moiré of a screen or
//! halftone print: a checkerboard for print, column stripes for phone and
//! row stripes for table. The pattern shifts no channel mean, so the classes
//! are only separable through high-frequency content.

use std::f64::consts::TAU;
use std::fs;
use std::path::Path;

use crate::data::manifest::{AttackType, Label, ManifestEntry, SampleManifest, Split};
use crate::data::ppm::{write_ppm, RgbImage};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// Images per class for each split.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitCounts {
    pub train: usize,
    pub dev: usize,
    pub test: usize,
}

impl SplitCounts {
    pub fn uniform(n: usize) -> Self {
        Self {
            train: n,
            dev: n,
            test: n,
        }
    }

    pub fn get(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train,
            Split::Dev => self.dev,
            Split::Test => self.test,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSpec {
    pub per_class: SplitCounts,
    pub image_size: usize,
    pub seed: u64,
    pub frames_per_video: usize,
    /// Standard deviation of the per-pixel sensor noise.
    pub noise: f64,
    /// Range of the attack pattern amplitude.
    pub artifact_amplitude: (f64, f64),
}

impl SynthSpec {
    pub fn new(per_class: SplitCounts, image_size: usize, seed: u64) -> Self {
        Self {
            per_class,
            image_size,
            seed,
            frames_per_video: 2,
            noise: 0.02,
            artifact_amplitude: (0.10, 0.20),
        }
    }
}

pub const MANIFEST_FILE: &str = "manifest.csv";

struct Component {
    amplitude: f64,
    fx: f64,
    fy: f64,
    phase: f64,
}

struct VideoStyle {
    base: [f64; 3],
    components: [[Component; 2]; 3],
    artifact: Option<(AttackType, f64)>,
}

const LOW_FREQUENCIES: [(f64, f64); 3] = [(1.0, 0.0), (0.0, 1.0), (1.0, 1.0)];

fn draw_style(rng: &mut SplitMix64, attack: AttackType, spec: &SynthSpec) -> VideoStyle {
    let base = [0; 3].map(|_| rng.uniform(0.35, 0.65));
    let components = [0; 3].map(|_| {
        [0; 2].map(|_| {
            let (fx, fy) = LOW_FREQUENCIES[rng.below(3) as usize];
            Component {
                amplitude: rng.uniform(0.0, 0.08),
                fx,
                fy,
                phase: rng.uniform(0.0, TAU),
            }
        })
    });
    let artifact = (attack != AttackType::None).then(|| {
        let (lo, hi) = spec.artifact_amplitude;
        (attack, rng.uniform(lo, hi))
    });
    VideoStyle {
        base,
        components,
        artifact,
    }
}

fn pattern(kind: AttackType, x: usize, y: usize) -> f64 {
    let sign = |k: usize| if k.is_multiple_of(2) { 1.0 } else { -1.0 };
    match kind {
        AttackType::None => 0.0,
        AttackType::Print => sign(x + y),
        AttackType::Phone => sign(x),
        AttackType::Table => sign(y),
    }
}

fn render(rng: &mut SplitMix64, style: &VideoStyle, size: usize, noise: f64) -> RgbImage {
    let jitter: Vec<f64> = (0..6).map(|_| rng.uniform(-0.3, 0.3)).collect();
    let s = size as f64;
    let mut pixels = Vec::with_capacity(size * size * 3);
    for y in 0..size {
        for x in 0..size {
            for ch in 0..3 {
                let mut v = style.base[ch];
                for (k, c) in style.components[ch].iter().enumerate() {
                    let arg = TAU * (c.fx * x as f64 + c.fy * y as f64) / s + c.phase + jitter[2 * ch + k];
                    v += c.amplitude * arg.sin();
                }
                if let Some((kind, amp)) = style.artifact {
                    v += amp * pattern(kind, x, y);
                }
                v += noise * rng.normal();
                pixels.push((v * 255.0).round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    RgbImage::new(size, size, pixels).expect("size is positive")
}

/// Writes the corpus under `out_dir` (`<split>/<label>/<video>_f<k>.ppm`
/// plus [`MANIFEST_FILE`]) and returns its manifest. Output is a pure
/// function of `spec`.
pub fn synth_corpus(out_dir: &Path, spec: &SynthSpec) -> Result<SampleManifest> {
    if spec.image_size < 8 || !spec.image_size.is_multiple_of(2) {
        return Err(Error::Config(format!(
            "synthetic image size must be even and at least 8, got {}",
            spec.image_size
        )));
    }
    if spec.frames_per_video == 0 {
        return Err(Error::Config("frames_per_video must be positive".into()));
    }
    let mut rng = SplitMix64::new(spec.seed);
    let mut entries = Vec::new();
    for split in Split::ALL {
        for label in [Label::Real, Label::Attack] {
            let dir = out_dir.join(split.as_str()).join(label.as_str());
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            let n = spec.per_class.get(split);
            let mut style = None;
            let mut attack = AttackType::None;
            for i in 0..n {
                let video = i / spec.frames_per_video;
                if i % spec.frames_per_video == 0 {
                    attack = match label {
                        Label::Real => AttackType::None,
                        Label::Attack => [AttackType::Print, AttackType::Phone, AttackType::Table][video % 3],
                    };
                    style = Some(draw_style(&mut rng, attack, spec));
                }
                let img = render(
                    &mut rng,
                    style.as_ref().expect("set on first frame"),
                    spec.image_size,
                    spec.noise,
                );
                let video_id = format!("{}-{}-v{video:03}", split.as_str(), label.as_str());
                let frame = i % spec.frames_per_video;
                let rel = format!("{}/{}/{video_id}_f{frame}.ppm", split.as_str(), label.as_str());
                write_ppm(&out_dir.join(&rel), &img)?;
                entries.push(ManifestEntry {
                    path: rel,
                    label,
                    attack_type: attack,
                    split,
                    video_id,
                });
            }
        }
    }
    let manifest = SampleManifest::new(out_dir, entries)?;
    manifest.write(&out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}
