use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cvae::VaeConfig;
use crate::ldm::LdmConfig;
use crate::{Error, Result};

/// File name of the config snapshot written into every output directory.
pub const CONFIG_SNAPSHOT: &str = "config.toml";

/// Everything a run needs. Loaded from TOML; unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Directory of prepared complex JSON files used for training.
    pub data: PathBuf,
    /// Optional directory of prepared complexes used only for evaluation.
    pub held_out: Option<PathBuf>,
    pub output: PathBuf,
    pub seed: u64,
    /// Serial execution everywhere.
    pub deterministic: bool,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub vae_epochs: usize,
    pub ldm_epochs: usize,
    /// Binding-site cutoff (Å) used by `prepare`.
    pub site_cutoff: f64,
    /// Blocks per generated binder; `None` copies the reference length.
    pub binder_len: Option<usize>,
    pub n_samples: usize,
    pub redesign_rounds: usize,
    pub vae: VaeConfig,
    pub ldm: LdmConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: PathBuf::from("data"),
            held_out: None,
            output: PathBuf::from("runs/default"),
            seed: 0,
            deterministic: false,
            batch_size: 16,
            learning_rate: 1e-3,
            vae_epochs: 30,
            ldm_epochs: 30,
            site_cutoff: crate::molgraph::SITE_CUTOFF,
            binder_len: None,
            n_samples: 10,
            redesign_rounds: 3,
            vae: VaeConfig::default(),
            ldm: LdmConfig::default(),
        }
    }
}

impl RunConfig {
    /// Small networks for desk-scale runs.
    pub fn toy() -> Self {
        Self {
            vae: VaeConfig {
                lambda1: 0.1,
                ..VaeConfig::toy()
            },
            ldm: LdmConfig::toy(),
            ..Self::default()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(self.site_cutoff > 0.0) {
            return bad("site_cutoff must be positive".into());
        }
        if self.binder_len == Some(0) || self.n_samples == 0 {
            return bad("binder_len and n_samples must be positive".into());
        }
        self.vae.validate()?;
        self.ldm.validate()?;
        if self.ldm.latent != self.vae.latent {
            return bad(format!("ldm.latent {} differs from vae.latent {}", self.ldm.latent, self.vae.latent));
        }
        if self.ldm.prompt_dim != self.vae.hidden {
            return bad(format!("ldm.prompt_dim {} must equal vae.hidden {}", self.ldm.prompt_dim, self.vae.hidden));
        }
        Ok(())
    }

    /// Validate, create `dir` and write the resolved config into it.
    pub fn snapshot(&self, dir: &Path) -> Result<PathBuf> {
        self.validate()?;
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(CONFIG_SNAPSHOT);
        std::fs::write(&path, self.to_toml()?).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}
