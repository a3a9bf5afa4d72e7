//! Run configuration, stored as TOML (`key = value` lines under `[section]` headers).

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{ChannelSpec, GaussianSurrogate};
use crate::ecc::EccParams;
use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::optim::OptimConfig;
use crate::text::DEFAULT_MAX_TOKENS;
use crate::vq::TokenizerSpec;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    /// Comma-separated stages, e.g. `gaussian:0.01,rescale:0.5`; `none` for lossless.
    pub stages: String,
    pub noise_seed: u64,
    /// Seed of the sender's channel replay when it differs from the real channel's.
    /// Unset means both sides see the same realization.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sender_noise_seed: Option<u64>,
    /// How the optimizer's noise layer treats Gaussian stages.
    pub surrogate: GaussianSurrogate,
    pub surrogate_seed: u64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            stages: "none".into(),
            noise_seed: 1,
            sender_noise_seed: None,
            surrogate: GaussianSurrogate::Frozen,
            surrogate_seed: 0x5eed,
        }
    }
}

impl ChannelConfig {
    pub fn spec(&self) -> Result<ChannelSpec> {
        ChannelSpec::parse(&self.stages, self.noise_seed)
    }

    /// The channel as the sender simulates it.
    pub fn sender_spec(&self) -> Result<ChannelSpec> {
        ChannelSpec::parse(&self.stages, self.sender_noise_seed.unwrap_or(self.noise_seed))
    }

    pub fn noise_layer(&self) -> Result<ChannelSpec> {
        Ok(self.spec()?.surrogate(self.surrogate, self.surrogate_seed))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EccConfig {
    pub enabled: bool,
    pub lambda1: u32,
    pub lambda2: u32,
}

impl Default for EccConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            lambda1: 8,
            lambda2: 8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TextConfig {
    pub max_tokens: usize,
}

impl Default for TextConfig {
    fn default() -> Self {
        Self {
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub run: RunConfig,
    pub image_model: ModelSpec,
    pub text_model: ModelSpec,
    pub tokenizer: TokenizerSpec,
    pub channel: ChannelConfig,
    pub optimizer: OptimConfig,
    pub ecc: EccConfig,
    pub text: TextConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            run: RunConfig::default(),
            image_model: ModelSpec::image_default(),
            text_model: ModelSpec::text_default(),
            tokenizer: TokenizerSpec::default(),
            channel: ChannelConfig::default(),
            optimizer: OptimConfig::default(),
            ecc: EccConfig::default(),
            text: TextConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    /// Short digest of the canonical TOML form.
    pub fn hash(&self) -> String {
        hex::encode(&Sha256::digest(self.to_toml().as_bytes())[..8])
    }

    pub fn ecc_params(&self) -> EccParams {
        EccParams {
            lambda1: self.ecc.lambda1,
            lambda2: self.ecc.lambda2,
            ..EccParams::for_cells(self.tokenizer.tokens())
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.image_model.validate()?;
        self.text_model.validate()?;
        self.optimizer.validate()?;
        self.ecc_params().validate()?;
        self.channel.spec()?;
        let t = &self.tokenizer;
        if t.codebook_size != self.image_model.vocab_size {
            return Err(Error::InvalidConfig(format!(
                "codebook size {} differs from image vocabulary {}",
                t.codebook_size, self.image_model.vocab_size
            )));
        }
        if t.dim == 0 || t.patch == 0 || t.channels == 0 || t.grid_height == 0 || t.grid_width == 0 {
            return Err(Error::InvalidConfig("tokenizer dimensions must be positive".into()));
        }
        if t.patch * t.patch * t.channels < t.dim {
            return Err(Error::InvalidConfig("patch too small for the latent dimension".into()));
        }
        if self.text_model.vocab_size > crate::text::word_list().len() {
            return Err(Error::InvalidConfig("text vocabulary exceeds the word list".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = PipelineConfig::default();
        c.validate().unwrap();
        let text = c.to_toml();
        assert!(text.contains("[image_model]"));
        assert!(text.contains("[channel]"));
        assert_eq!(PipelineConfig::from_toml(&text).unwrap(), c);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let c = PipelineConfig::from_toml(
            "[run]\nseed = 9\n\n[channel]\nstages = \"gaussian:0.01\"\n\n[text]\nmax_tokens = 50\n",
        )
        .unwrap();
        assert_eq!(c.run.seed, 9);
        assert_eq!(c.text.max_tokens, 50);
        assert_eq!(c.optimizer, OptimConfig::default());
    }

    #[test]
    fn rejects_bad_files() {
        for bad in [
            "[run]\nseed = \"x\"\n",
            "[nope]\na = 1\n",
            "[channel]\nstages = \"blur:3\"\n",
            "[tokenizer]\ncodebook_size = 100\n",
            "[optimizer]\nlearning_rate = -1.0\n",
            "[ecc]\nlambda1 = 0\n",
            "not toml at all [",
        ] {
            assert!(
                matches!(PipelineConfig::from_toml(bad), Err(Error::InvalidConfig(_))),
                "{bad}"
            );
        }
    }

    #[test]
    fn hash_tracks_content() {
        let a = PipelineConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.run.seed = 1;
        assert_ne!(a.hash(), b.hash());
    }
}
