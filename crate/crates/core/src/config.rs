//! TOML run configuration.
//!
//! ```toml
//! feature_width = 32
//!
//! [profile]          # any TargetProfile field; the rest keep defaults
//! num_stages = 12
//!
//! [environment]
//! preset = "WS"      # or: mean_duration_s = 60.0
//! active_flows = 100000
//!
//! [search]           # any SearchSpace field
//! iterations = 20
//!
//! [synth]
//! flows = 2000
//!
//! [[features]]       # replaces the default catalog when present
//! name = "pkt_count"
//! op = "count"
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dse::SearchSpace;
use crate::error::{Error, Result};
use crate::flowdata::{BitWidth, FeatureCatalog, FeatureSpec};
use crate::resource::{EnvironmentModel, TargetProfile};
use crate::synth::SynthConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvironmentSpec {
    /// `WS` or `HD`; ignored when `mean_duration_s` is set.
    pub preset: Option<String>,
    pub mean_duration_s: Option<f64>,
    pub active_flows: u64,
}

impl Default for EnvironmentSpec {
    fn default() -> Self {
        EnvironmentSpec {
            preset: Some("WS".into()),
            mean_duration_s: None,
            active_flows: 100_000,
        }
    }
}

impl EnvironmentSpec {
    pub fn build(&self) -> Result<EnvironmentModel> {
        match (self.mean_duration_s, &self.preset) {
            (Some(d), p) => EnvironmentModel::new(p.as_deref().unwrap_or("custom"), d, self.active_flows),
            (None, Some(p)) => EnvironmentModel::preset(p, self.active_flows),
            (None, None) => Err(Error::config("environment needs `preset` or `mean_duration_s`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub feature_width: BitWidth,
    pub profile: TargetProfile,
    pub environment: EnvironmentSpec,
    pub search: SearchSpace,
    pub synth: SynthConfig,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub features: Vec<FeatureSpec>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            feature_width: BitWidth::W32,
            profile: TargetProfile::default(),
            environment: EnvironmentSpec::default(),
            search: SearchSpace::default(),
            synth: SynthConfig::default(),
            features: Vec::new(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() as u64 + 1)
                .unwrap_or(0);
            Error::Parse {
                path: origin.to_path_buf(),
                line,
                msg: e.message().to_string(),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?, path)
    }

    pub fn validate(&self) -> Result<()> {
        self.profile.validate()?;
        self.environment.build()?;
        self.search.validate()?;
        self.catalog()?;
        Ok(())
    }

    /// The configured catalog, or the default one when none is given.
    pub fn catalog(&self) -> Result<FeatureCatalog> {
        if self.features.is_empty() {
            Ok(FeatureCatalog::default())
        } else {
            FeatureCatalog::from_specs(&self.features)
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
