//! Experiment description, read from a TOML file.
//!
//! ```toml
//! mode = "heterotune"          # heterotune | homo | allsmall | alllarge
//! seed = 7
//! rounds = 30
//! clients = 20
//!
//! [[group]]
//! width = 16
//! depth = 2
//! bottleneck = 4
//! ratio = 1
//!
//! [data]
//! source = "blobs"
//! ```
//!
//! Every key not listed in [`DEFAULTS_HELP`] is rejected.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adapternet::{ModelConfig, TrainOptions};
use crate::error::{Error, Result};
use crate::fedsim::ShareAggregation;
use crate::numkit::apportion;

/// Default values, as shown by `heterotune --help`.
pub const DEFAULTS_HELP: &str = "\
Config keys (TOML) and defaults:
  mode              required: heterotune | homo | allsmall | alllarge
  seed              0
  rounds            30
  clients           20         (reference large-scale setting: 100)
  epochs            2          (reference large-scale setting: 20)
  lr                0.05
  lambda_reg        1e-4       L2 on the own share branch
  batch_size        16         (reference large-scale setting: 128)
  participation     1.0        fraction of clients per round, in (0, 1]
  share_agg         per_branch | flat
  uniform_weights   false      true = unweighted averaging instead of |D_k|
  dirichlet_alpha   0.1
  min_per_client    batch_size
  validation_fraction 0.2      stratified, held by the server
  branch_scalars    both_sums  (only supported placement)
  [[group]]         one or more: width, depth, bottleneck (required), ratio (1.0)
  [data]            source = blobs (classes 10, dims 32, per_class 200, spread 0.25)
                    source = idx (images, labels paths)
  [output]          dir = \"out\"";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    HeteroTune,
    Homo,
    AllSmall,
    AllLarge,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::HeteroTune => "heterotune",
            Mode::Homo => "homo",
            Mode::AllSmall => "allsmall",
            Mode::AllLarge => "alllarge",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupSpec {
    pub width: usize,
    pub depth: usize,
    pub bottleneck: usize,
    #[serde(default = "one")]
    pub ratio: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase", deny_unknown_fields)]
pub enum DataSource {
    Blobs {
        #[serde(default = "default_classes")]
        classes: usize,
        #[serde(default = "default_dims")]
        dims: usize,
        #[serde(default = "default_per_class")]
        per_class: usize,
        #[serde(default = "default_spread")]
        spread: f64,
    },
    Idx {
        images: PathBuf,
        labels: PathBuf,
    },
}

fn default_classes() -> usize {
    10
}
fn default_dims() -> usize {
    32
}
fn default_per_class() -> usize {
    200
}
fn default_spread() -> f64 {
    0.25
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Blobs {
            classes: default_classes(),
            dims: default_dims(),
            per_class: default_per_class(),
            spread: default_spread(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "default_out")]
    pub dir: PathBuf,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self { dir: default_out() }
    }
}

/// Full description of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "d_rounds")]
    pub rounds: usize,
    #[serde(default = "d_clients")]
    pub clients: usize,
    #[serde(rename = "group")]
    pub groups: Vec<GroupSpec>,
    #[serde(default = "d_epochs")]
    pub epochs: usize,
    #[serde(default = "d_lr")]
    pub lr: f64,
    #[serde(default = "d_lambda")]
    pub lambda_reg: f64,
    #[serde(default = "d_batch")]
    pub batch_size: usize,
    #[serde(default = "one")]
    pub participation: f64,
    #[serde(default = "d_share_agg")]
    pub share_agg: ShareAggregation,
    #[serde(default)]
    pub uniform_weights: bool,
    #[serde(default = "d_alpha")]
    pub dirichlet_alpha: f64,
    #[serde(default)]
    pub min_per_client: Option<usize>,
    #[serde(default = "d_val")]
    pub validation_fraction: f64,
    #[serde(default = "d_branch_scalars")]
    pub branch_scalars: String,
    #[serde(default)]
    pub data: DataSource,
    #[serde(default)]
    pub output: OutputSpec,
}

fn d_rounds() -> usize {
    30
}
fn d_clients() -> usize {
    20
}
fn d_epochs() -> usize {
    2
}
fn d_lr() -> f64 {
    0.05
}
fn d_lambda() -> f64 {
    1e-4
}
fn d_batch() -> usize {
    16
}
fn d_share_agg() -> ShareAggregation {
    ShareAggregation::PerBranch
}
fn d_alpha() -> f64 {
    0.1
}
fn d_val() -> f64 {
    0.2
}
fn d_branch_scalars() -> String {
    "both_sums".into()
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::ConfigParse {
            line: e.span().map_or(0, |s| line_of(text, s.start)),
            message: e.message().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.groups.is_empty() {
            return bad("at least one [[group]] is required".into());
        }
        for (field, v) in [
            ("rounds", self.rounds),
            ("clients", self.clients),
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
        ] {
            if v == 0 {
                return bad(format!("{field} must be >= 1"));
            }
        }
        let r0 = self.groups[0].bottleneck;
        for (i, g) in self.groups.iter().enumerate() {
            if g.ratio <= 0.0 || !g.ratio.is_finite() {
                return bad(format!(
                    "group {i}: ratio must be positive (got {})",
                    g.ratio
                ));
            }
            if g.width == 0 || g.depth == 0 {
                return bad(format!("group {i}: width and depth must be >= 1"));
            }
            if g.bottleneck != r0 {
                return bad(format!(
                    "bottleneck must match across groups: group 0 has {r0}, group {i} has {}",
                    g.bottleneck
                ));
            }
            if g.bottleneck == 0 || g.bottleneck > g.width {
                return bad(format!(
                    "group {i}: bottleneck {} must be in 1..={}",
                    g.bottleneck, g.width
                ));
            }
        }
        if self.lr < 0.0 || !self.lr.is_finite() {
            return bad(format!("lr must be finite and >= 0 (got {})", self.lr));
        }
        if self.lambda_reg < 0.0 || !self.lambda_reg.is_finite() {
            return bad(format!(
                "lambda_reg must be finite and >= 0 (got {})",
                self.lambda_reg
            ));
        }
        if !(self.participation > 0.0 && self.participation <= 1.0) {
            return bad(format!(
                "participation must be in (0, 1] (got {})",
                self.participation
            ));
        }
        if self.dirichlet_alpha <= 0.0 || !self.dirichlet_alpha.is_finite() {
            return bad(format!(
                "dirichlet_alpha must be positive (got {})",
                self.dirichlet_alpha
            ));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return bad(format!(
                "validation_fraction must be in (0, 1) (got {})",
                self.validation_fraction
            ));
        }
        if self.branch_scalars != "both_sums" {
            return bad(format!(
                "branch_scalars = {:?} is not supported (only \"both_sums\")",
                self.branch_scalars
            ));
        }
        if let DataSource::Blobs {
            classes,
            dims,
            per_class,
            spread,
        } = &self.data
        {
            if *classes < 2 || *dims < 2 || *per_class == 0 || *spread < 0.0 || spread.is_nan() {
                return bad(
                    "data: blobs need classes >= 2, dims >= 2, per_class >= 1, spread >= 0".into(),
                );
            }
        }
        Ok(())
    }

    pub fn min_per_client(&self) -> usize {
        self.min_per_client.unwrap_or(self.batch_size)
    }

    pub fn train_options(&self) -> TrainOptions {
        TrainOptions {
            epochs: self.epochs,
            lr: self.lr,
            lambda_reg: self.lambda_reg,
            batch_size: self.batch_size,
        }
    }

    /// Clients per group by largest-remainder apportionment of the ratios.
    pub fn group_sizes(&self) -> Result<Vec<usize>> {
        let ratios: Vec<f64> = self.groups.iter().map(|g| g.ratio).collect();
        apportion(self.clients, &ratios).map_err(|e| Error::Config(e.to_string()))
    }

    /// Model configuration of catalog entry `g` for data of the given shape.
    pub fn model_config(&self, g: usize, input_dim: usize, num_classes: usize) -> ModelConfig {
        let spec = &self.groups[g];
        ModelConfig {
            group_id: g,
            depth: spec.depth,
            width: spec.width,
            bottleneck: spec.bottleneck,
            input_dim,
            num_classes,
        }
    }
}

/// Reads and validates a config file.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    ExperimentConfig::from_toml_str(&text)
}
