use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Which model from the zoo is being built or trained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelVariant {
    /// Two monolingual encoders with CTC heads; fine-tuned with the
    /// transducer loss only.
    Conditional,
    /// Same network, fine-tuned with the language-separation loss.
    ConditionalLS,
    /// Adds a third, unconditioned encoder to the fusion; trained like
    /// `ConditionalLS`.
    ThreeEncoder,
    /// Single bilingual encoder, no CTC heads.
    Vanilla,
}

impl ModelVariant {
    pub const ALL: [ModelVariant; 4] = [
        ModelVariant::Conditional,
        ModelVariant::ConditionalLS,
        ModelVariant::ThreeEncoder,
        ModelVariant::Vanilla,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelVariant::Conditional => "conditional",
            ModelVariant::ConditionalLS => "conditional-ls",
            ModelVariant::ThreeEncoder => "three-encoder",
            ModelVariant::Vanilla => "vanilla",
        }
    }

    pub fn has_ctc_heads(self) -> bool {
        self != ModelVariant::Vanilla
    }

    /// Whether fine-tuning uses the language-separation multi-task loss.
    pub fn uses_ls_loss(self) -> bool {
        matches!(self, ModelVariant::ConditionalLS | ModelVariant::ThreeEncoder)
    }

    /// Parameter layout family; variants sharing it share checkpoints.
    pub fn architecture(self) -> &'static str {
        match self {
            ModelVariant::Conditional | ModelVariant::ConditionalLS => "two-encoder",
            ModelVariant::ThreeEncoder => "three-encoder",
            ModelVariant::Vanilla => "single-encoder",
        }
    }
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ModelVariant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown variant `{s}`")))
    }
}

/// Temporal mixing used inside each encoder block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mixing {
    /// Centred 1-d convolution over `window` frames, zero padded.
    Conv { window: usize },
    /// Unidirectional Elman recurrence.
    Recurrent,
}

/// Architecture hyper-parameters. Its canonical text is the checkpoint
/// fingerprint.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub variant: ModelVariant,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub encoder_layers: usize,
    pub mixing: Mixing,
    pub embed_dim: usize,
    pub decoder_dim: usize,
    pub joint_dim: usize,
    /// Encoder width multiplier of the single-encoder baseline.
    pub vanilla_width_factor: f64,
    pub m_units: usize,
    pub e_units: usize,
}

impl ModelConfig {
    /// Toy-scale defaults for the given feature and vocabulary sizes.
    pub fn toy(variant: ModelVariant, input_dim: usize, m_units: usize, e_units: usize) -> Self {
        ModelConfig {
            variant,
            input_dim,
            hidden_dim: 24,
            encoder_layers: 1,
            mixing: Mixing::Conv { window: 3 },
            embed_dim: 12,
            decoder_dim: 24,
            joint_dim: 32,
            vanilla_width_factor: 1.5,
            m_units,
            e_units,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("input_dim", self.input_dim),
            ("hidden_dim", self.hidden_dim),
            ("encoder_layers", self.encoder_layers),
            ("embed_dim", self.embed_dim),
            ("decoder_dim", self.decoder_dim),
            ("joint_dim", self.joint_dim),
            ("m_units", self.m_units),
            ("e_units", self.e_units),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if !(self.vanilla_width_factor.is_finite() && self.vanilla_width_factor > 0.0) {
            return Err(Error::Config(format!(
                "vanilla_width_factor must be positive, got {}",
                self.vanilla_width_factor
            )));
        }
        if let Mixing::Conv { window } = self.mixing {
            if window % 2 == 0 {
                return Err(Error::Config(format!(
                    "conv_window must be odd, got {window}"
                )));
            }
        }
        Ok(())
    }

    /// Width of every encoder output.
    pub fn encoder_width(&self) -> usize {
        match self.variant {
            ModelVariant::Vanilla => ((self.hidden_dim as f64 * self.vanilla_width_factor).round() as usize).max(1),
            _ => self.hidden_dim,
        }
    }

    /// Bilingual output size: all units plus blank.
    pub fn output_dim(&self) -> usize {
        self.m_units + self.e_units + 1
    }

    /// Decoder token used as the prediction-network base case.
    pub fn start_token(&self) -> usize {
        self.output_dim()
    }

    /// Canonical text identifying the parameter layout.
    pub fn fingerprint(&self) -> String {
        let mixing = match self.mixing {
            Mixing::Conv { window } => format!("conv{window}"),
            Mixing::Recurrent => "recurrent".to_string(),
        };
        format!(
            "architecture={}\ninput_dim={}\nencoder_width={}\nencoder_layers={}\nmixing={}\n\
             embed_dim={}\ndecoder_dim={}\njoint_dim={}\nm_units={}\ne_units={}\n",
            self.variant.architecture(),
            self.input_dim,
            self.encoder_width(),
            self.encoder_layers,
            mixing,
            self.embed_dim,
            self.decoder_dim,
            self.joint_dim,
            self.m_units,
            self.e_units,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_names_round_trip() {
        for v in ModelVariant::ALL {
            assert_eq!(v.name().parse::<ModelVariant>().unwrap(), v);
        }
        assert!("gating".parse::<ModelVariant>().is_err());
    }

    #[test]
    fn ls_variants_share_fingerprint() {
        let a = ModelConfig::toy(ModelVariant::Conditional, 8, 5, 5);
        let b = ModelConfig::toy(ModelVariant::ConditionalLS, 8, 5, 5);
        let c = ModelConfig::toy(ModelVariant::ThreeEncoder, 8, 5, 5);
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_ne!(a.fingerprint(), c.fingerprint());
    }
}
