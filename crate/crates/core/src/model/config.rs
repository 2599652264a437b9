use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "GPT_S")]
    GptS,
    #[serde(rename = "GPT_L")]
    GptL,
    #[serde(rename = "HYBRID")]
    Hybrid,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::GptS => "GPT_S",
            Variant::GptL => "GPT_L",
            Variant::Hybrid => "HYBRID",
        }
    }

    /// Parameter totals quoted for the reference models. Reported next to
    /// our own counts, never asserted.
    pub fn reference_params(self) -> &'static str {
        match self {
            Variant::GptS => "3.7M",
            Variant::GptL => "40M",
            Variant::Hybrid => "4M",
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Spectrogram branch of the hybrid model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SliceBranchConfig {
    pub layers: usize,
    pub dim: usize,
    pub heads: usize,
    /// Width of the per-slice projection MLP.
    pub proj_hidden: usize,
    pub n_mels: usize,
    /// Slices withheld relative to the predicted token. Only 2 is supported.
    pub spec_shift: usize,
}

/// Architecture hyperparameters.
///
/// For [`Variant::Hybrid`] the token embedding is `main_dim - slice.dim`
/// wide and is concatenated with the slice branch output to form the
/// `main_dim` input of the main stack.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub variant: Variant,
    pub vocab: usize,
    pub context: usize,
    pub main_layers: usize,
    pub main_dim: usize,
    pub main_heads: usize,
    pub ff_mult: usize,
    pub head_hidden: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slice: Option<SliceBranchConfig>,
}

impl ModelConfig {
    pub fn gpt_s() -> Self {
        ModelConfig {
            variant: Variant::GptS,
            vocab: 1024,
            context: 750,
            main_layers: 8,
            main_dim: 64,
            main_heads: 8,
            ff_mult: 4,
            head_hidden: 2048,
            slice: None,
        }
    }

    pub fn gpt_l() -> Self {
        ModelConfig {
            variant: Variant::GptL,
            main_dim: 256,
            main_heads: 16,
            ..Self::gpt_s()
        }
    }

    pub fn hybrid() -> Self {
        ModelConfig {
            variant: Variant::Hybrid,
            slice: Some(SliceBranchConfig {
                layers: 6,
                dim: 32,
                heads: 4,
                proj_hidden: 2048,
                n_mels: 64,
                spec_shift: 2,
            }),
            ..Self::gpt_s()
        }
    }

    pub fn preset(variant: Variant) -> Self {
        match variant {
            Variant::GptS => Self::gpt_s(),
            Variant::GptL => Self::gpt_l(),
            Variant::Hybrid => Self::hybrid(),
        }
    }

    /// Width of the token embedding.
    pub fn token_dim(&self) -> usize {
        match &self.slice {
            Some(s) => self.main_dim - s.dim,
            None => self.main_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Config(m));
        if self.vocab == 0 || self.context == 0 || self.main_layers == 0 || self.head_hidden == 0 || self.ff_mult == 0 {
            return err("vocab, context, main_layers, ff_mult and head_hidden must be positive".into());
        }
        if self.main_heads == 0 || self.main_dim % self.main_heads != 0 {
            return err(format!(
                "main_dim {} is not divisible by main_heads {}",
                self.main_dim, self.main_heads
            ));
        }
        if self.vocab > u16::MAX as usize + 1 {
            return err(format!("vocab {} does not fit 16-bit token ids", self.vocab));
        }
        match (self.variant, &self.slice) {
            (Variant::Hybrid, None) => return err("HYBRID requires a slice branch".into()),
            (Variant::GptS | Variant::GptL, Some(_)) => return err(format!("{} takes no slice branch", self.variant)),
            (Variant::Hybrid, Some(s)) => {
                if s.layers == 0 || s.proj_hidden == 0 || s.n_mels == 0 {
                    return err("slice branch layers, proj_hidden and n_mels must be positive".into());
                }
                if s.heads == 0 || s.dim % s.heads != 0 {
                    return err(format!(
                        "slice dim {} is not divisible by slice heads {}",
                        s.dim, s.heads
                    ));
                }
                if s.dim == 0 || s.dim >= self.main_dim {
                    return err(format!(
                        "slice dim {} must be in 1..main_dim ({})",
                        s.dim, self.main_dim
                    ));
                }
                if s.dim % 2 != 0 || self.token_dim() % 2 != 0 {
                    return err("slice and token widths must be even for sinusoidal positions".into());
                }
                if s.spec_shift != 2 {
                    return err(format!("spec_shift {} unsupported (only 2)", s.spec_shift));
                }
            }
            _ => {}
        }
        if self.main_dim % 2 != 0 {
            return err("main_dim must be even".into());
        }
        Ok(())
    }
}
