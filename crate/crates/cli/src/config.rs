//! Experiment configuration: an optional TOML file overlaid with command-line flags.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use tinyturbo::decoder::{tinyturbo_preset, DecodeConfig, WeightSet};
use tinyturbo::{ChannelKind, ChannelSpec, CodeSpec, Real, SisoAlgorithm, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    F32,
    #[default]
    F64,
}

/// Channel table of the config file; `snr_db` is optional because grids usually come from `snr`.
#[derive(Debug, Clone, Copy, Deserialize)]
pub struct ChannelSection {
    #[serde(default)]
    pub snr_db: f64,
    #[serde(flatten)]
    pub kind: ChannelKind,
}

/// One decoder entry.
///
/// `weights` is `"classical"` (default), `"preset"` or the path of a weight file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecoderSection {
    pub label: Option<String>,
    pub algorithm: Option<SisoAlgorithm>,
    pub iterations: Option<usize>,
    pub weights: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub snr: Option<Vec<f64>>,
    pub max_frames: Option<u64>,
    /// 0 disables early stopping.
    pub min_block_errors: Option<u64>,
    pub trials: Option<u64>,
    pub precision: Option<Precision>,
    pub code: Option<CodeSpec>,
    pub channel: Option<ChannelSection>,
    #[serde(default)]
    pub decoder: Vec<DecoderSection>,
    pub train: Option<TrainConfig>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

impl DecoderSection {
    /// Parses `tinyturbo`, `map:M`, `maxlog:M`, or `PATH[@map|@maxlog]`.
    pub fn parse(text: &str) -> Result<Self> {
        let (name, iters) = match text.split_once(':') {
            Some((n, m)) if n == "map" || n == "maxlog" => {
                let m: usize = m
                    .parse()
                    .with_context(|| format!("bad iteration count in {text:?}"))?;
                (n, Some(m))
            }
            _ => (text, None),
        };
        let section = match name {
            "tinyturbo" => DecoderSection {
                label: Some("tinyturbo".into()),
                weights: Some("preset".into()),
                ..Default::default()
            },
            "map" | "maxlog" => {
                let algorithm = if name == "map" {
                    SisoAlgorithm::Map
                } else {
                    SisoAlgorithm::MaxLogMap
                };
                let m = iters.unwrap_or(3);
                DecoderSection {
                    label: Some(format!("{name}{m}")),
                    algorithm: Some(algorithm),
                    iterations: Some(m),
                    weights: None,
                }
            }
            _ => {
                let (path, base) = match text.rsplit_once('@') {
                    Some((p, "map")) => (p, SisoAlgorithm::Map),
                    Some((p, "maxlog")) => (p, SisoAlgorithm::MaxLogMap),
                    _ => (text, SisoAlgorithm::MaxLogMap),
                };
                DecoderSection {
                    label: None,
                    algorithm: Some(base),
                    iterations: None,
                    weights: Some(path.into()),
                }
            }
        };
        Ok(section)
    }

    pub fn label(&self) -> String {
        if let Some(l) = &self.label {
            return l.clone();
        }
        match self.weights.as_deref() {
            Some("preset") => "tinyturbo".into(),
            None | Some("classical") => {
                let alg = match self.algorithm.unwrap_or(SisoAlgorithm::MaxLogMap) {
                    SisoAlgorithm::Map => "map",
                    SisoAlgorithm::MaxLogMap => "maxlog",
                };
                format!("{alg}{}", self.iterations.unwrap_or(3))
            }
            Some(path) => Path::new(path)
                .file_stem()
                .map_or_else(|| path.to_string(), |s| s.to_string_lossy().into_owned()),
        }
    }

    pub fn build<T: Real>(&self) -> Result<DecodeConfig<T>> {
        let algorithm = self.algorithm.unwrap_or(SisoAlgorithm::MaxLogMap);
        let cfg = match self.weights.as_deref() {
            None | Some("classical") => {
                DecodeConfig::classical(algorithm, self.iterations.unwrap_or(3))
            }
            Some("preset") => DecodeConfig::with_weights(algorithm, tinyturbo_preset()),
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading weights {path}"))?;
                DecodeConfig::with_weights(algorithm, WeightSet::from_json(&text)?)
            }
        };
        if let Some(m) = self.iterations {
            if m != cfg.iterations {
                bail!(
                    "decoder {:?} asks for {m} iterations but its weights cover {}",
                    self.label(),
                    cfg.iterations
                );
            }
        }
        Ok(cfg)
    }

    pub fn describe(&self) -> serde_json::Value {
        serde_json::json!({
            "label": self.label(),
            "algorithm": self.algorithm.unwrap_or(SisoAlgorithm::MaxLogMap),
            "iterations": self.iterations,
            "weights": self.weights.clone().unwrap_or_else(|| "classical".into()),
        })
    }
}

/// Everything a run needs after merging file and flags.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub code: CodeSpec,
    pub channel: ChannelSpec,
    pub snrs: Vec<f64>,
    pub decoders: Vec<DecoderSection>,
    pub seed: u64,
    pub max_frames: u64,
    pub min_block_errors: Option<u64>,
    pub trials: u64,
    pub precision: Precision,
    pub train: TrainConfig,
}
