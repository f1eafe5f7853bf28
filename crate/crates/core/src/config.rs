//! Flat `section.key = value` configuration files.
//!
//! The syntax is the dotted-key subset of TOML, so files are parsed with the
//! `toml` crate. Unknown sections and keys are rejected.

use crate::dic::DicConfig;
use crate::error::{Error, Result};
use crate::experiment::RestorationConfig;
use crate::fusion::FusionConfig;
use crate::guided::GuidedFilterParams;
use crate::restoration::TurbulenceParams;
use crate::synthesis::{HazeSpec, SpeckleSpec};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

/// Haze parameters with the OTF fields inlined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HazeSection {
    pub beta: f64,
    pub omega: f64,
    pub warp_amplitude: f64,
    pub warp_correlation_length: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for HazeSection {
    fn default() -> Self {
        HazeSpec::default().into()
    }
}

impl From<HazeSpec> for HazeSection {
    fn from(h: HazeSpec) -> Self {
        Self {
            beta: h.params.beta,
            omega: h.params.omega,
            warp_amplitude: h.warp_amplitude,
            warp_correlation_length: h.warp_correlation_length,
            noise_sigma: h.noise_sigma,
            seed: h.seed,
        }
    }
}

impl From<&HazeSection> for HazeSpec {
    fn from(h: &HazeSection) -> Self {
        Self {
            params: TurbulenceParams {
                beta: h.beta,
                omega: h.omega,
            },
            warp_amplitude: h.warp_amplitude,
            warp_correlation_length: h.warp_correlation_length,
            noise_sigma: h.noise_sigma,
            seed: h.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub fusion: FusionConfig,
    pub filter: GuidedFilterParams,
    pub dic: DicConfig,
    pub restoration: RestorationConfig,
    pub speckle: SpeckleSpec,
    pub haze: HazeSection,
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Fusion settings with the `filter` section attached.
    pub fn fusion_config(&self) -> FusionConfig {
        FusionConfig {
            filter: self.filter.clone(),
            ..self.fusion.clone()
        }
    }

    pub fn haze_spec(&self) -> HazeSpec {
        (&self.haze).into()
    }

    pub fn validate(&self) -> Result<()> {
        self.fusion_config().validate()?;
        self.dic.validate()?;
        self.restoration.validate()?;
        self.speckle.validate()?;
        self.haze_spec().validate()
    }

    /// Canonical text form; parses back to an equal value.
    pub fn to_flat_string(&self) -> String {
        let mut out = String::new();
        let sections: [(&str, toml::Value); 6] = [
            ("fusion", to_value(&self.fusion)),
            ("filter", to_value(&self.filter)),
            ("dic", to_value(&self.dic)),
            ("restoration", to_value(&self.restoration)),
            ("speckle", to_value(&self.speckle)),
            ("haze", to_value(&self.haze)),
        ];
        for (i, (name, value)) in sections.iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            if let toml::Value::Table(t) = value {
                for (k, v) in t {
                    let _ = writeln!(out, "{name}.{k} = {v}");
                }
            }
        }
        out
    }
}

fn to_value<T: Serialize>(v: &T) -> toml::Value {
    toml::Value::try_from(v).expect("config sections serialize to tables")
}
