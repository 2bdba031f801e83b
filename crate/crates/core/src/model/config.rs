use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Classification head variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    /// FC1 → GELU → mean over features → FC2.
    BaselineVit,
    /// FC1 → GELU → adaptive average pooling → FC2.
    AamlpNoAttention,
    /// FC1 → GELU → adaptive average pooling → attention → FC2.
    Aamlp,
}

impl HeadKind {
    pub const ALL: [HeadKind; 3] = [HeadKind::Aamlp, HeadKind::AamlpNoAttention, HeadKind::BaselineVit];

    /// Row label used in comparison tables.
    pub fn label(self) -> &'static str {
        match self {
            HeadKind::Aamlp => "AAViT",
            HeadKind::AamlpNoAttention => "AAViT w/o attention",
            HeadKind::BaselineVit => "ViT",
        }
    }

    pub fn uses_pooling(self) -> bool {
        !matches!(self, HeadKind::BaselineVit)
    }

    pub fn uses_attention(self) -> bool {
        matches!(self, HeadKind::Aamlp)
    }
}

impl fmt::Display for HeadKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Architecture hyperparameters. Defaults follow ViT-Base on 256×256 input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub image_size: usize,
    pub patch_size: usize,
    pub embed_dim: usize,
    pub depth: usize,
    pub num_heads: usize,
    /// Width of the encoder blocks' feed-forward layer.
    pub encoder_mlp_dim: usize,
    /// Width `h` of the head's first FC layer.
    pub mlp_hidden: usize,
    pub head_kind: HeadKind,
    /// Output length `P` of the head's adaptive pooling.
    pub pool_out: usize,
    pub num_classes: usize,
    pub layer_norm_eps: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            image_size: 256,
            patch_size: 16,
            embed_dim: 768,
            depth: 12,
            num_heads: 12,
            encoder_mlp_dim: 3072,
            mlp_hidden: 3072,
            head_kind: HeadKind::Aamlp,
            pool_out: 8,
            num_classes: 2,
            layer_norm_eps: 1e-5,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        let positive = [
            ("image_size", self.image_size),
            ("patch_size", self.patch_size),
            ("embed_dim", self.embed_dim),
            ("num_heads", self.num_heads),
            ("encoder_mlp_dim", self.encoder_mlp_dim),
            ("mlp_hidden", self.mlp_hidden),
            ("pool_out", self.pool_out),
        ];
        for (name, v) in positive {
            if v == 0 {
                problems.push(format!("{name} must be positive"));
            }
        }
        if !problems.is_empty() {
            return Err(Error::Config(problems.join("; ")));
        }
        if !self.image_size.is_multiple_of(self.patch_size) {
            problems.push(format!(
                "image_size {} not divisible by patch_size {}",
                self.image_size, self.patch_size
            ));
        }
        if !self.embed_dim.is_multiple_of(self.num_heads) {
            problems.push(format!(
                "embed_dim {} not divisible by num_heads {}",
                self.embed_dim, self.num_heads
            ));
        }
        if self.pool_out > self.mlp_hidden {
            problems.push(format!(
                "pool_out {} exceeds mlp_hidden {}",
                self.pool_out, self.mlp_hidden
            ));
        }
        if self.num_classes < 2 {
            problems.push(format!("num_classes must be at least 2, got {}", self.num_classes));
        }
        if !(self.layer_norm_eps.is_finite() && self.layer_norm_eps >= 0.0) {
            problems.push("layer_norm_eps must be finite and non-negative".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    /// Number of patch tokens `n`.
    pub fn num_patches(&self) -> usize {
        let side = self.image_size / self.patch_size;
        side * side
    }

    pub fn patch_dim(&self) -> usize {
        self.patch_size * self.patch_size * 3
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.num_heads
    }

    /// Number of values per token reaching FC2.
    pub fn head_token_width(&self) -> usize {
        if self.head_kind.uses_pooling() {
            self.pool_out
        } else {
            1
        }
    }
}
