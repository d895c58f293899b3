use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::datagen::{InputSpec, NoiseModel, TargetSpec};
use crate::error::{Error, Result};
use crate::losses::LossSpec;
use crate::mlp::NetworkShape;
use crate::optim::TrainConfig;

pub const SCHEMA_VERSION: u32 = 1;

/// One experiment grid: every (noise, n, train loss) cell, each evaluated
/// under every test loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub target: TargetSpec,
    #[serde(default = "NoiseModel::experiment_set")]
    pub noises: Vec<NoiseModel>,
    #[serde(default = "LossSpec::experiment_set")]
    pub train_losses: Vec<LossSpec>,
    #[serde(default = "LossSpec::experiment_set")]
    pub test_losses: Vec<LossSpec>,
    pub n: Vec<usize>,
    #[serde(default = "default_test_size")]
    pub test_size: usize,
    #[serde(default = "default_replications")]
    pub replications: usize,
    /// Hidden widths; the input and output widths follow from the target.
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub inputs: InputSpec,
    /// Clip predictions to the training-response range before scoring.
    #[serde(default)]
    pub clamp_eval: bool,
    /// Report excess risks (`false`: raw risks in the `mean`/`sd` columns).
    #[serde(default = "yes")]
    pub excess: bool,
    /// Test hook: generate train and test responses without noise.
    #[serde(default)]
    pub force_zero_noise: bool,
}

fn default_test_size() -> usize {
    100_000
}

fn default_replications() -> usize {
    10
}

fn default_hidden() -> Vec<usize> {
    vec![256; 5]
}

fn yes() -> bool {
    true
}

impl ExperimentConfig {
    /// A config with every default filled in.
    pub fn new(target: TargetSpec, n: Vec<usize>) -> Self {
        ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            target,
            noises: NoiseModel::experiment_set(),
            train_losses: LossSpec::experiment_set(),
            test_losses: LossSpec::experiment_set(),
            n,
            test_size: default_test_size(),
            replications: default_replications(),
            hidden: default_hidden(),
            train: TrainConfig::default(),
            seed: 0,
            inputs: InputSpec::Uniform,
            clamp_eval: false,
            excess: true,
            force_zero_noise: false,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(vec![e.to_string()]))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn shape(&self) -> Result<NetworkShape> {
        let mut widths = vec![self.target.dim()];
        widths.extend(&self.hidden);
        widths.push(1);
        NetworkShape::new(widths)
    }

    /// Every violated constraint, one line each.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.schema_version != SCHEMA_VERSION {
            out.push(format!(
                "schema_version: expected {SCHEMA_VERSION}, got {}",
                self.schema_version
            ));
        }
        if let Err(e) = self.target.build() {
            out.push(format!("target: {e}"));
        }
        if self.noises.is_empty() {
            out.push("noises: must not be empty".into());
        }
        for (i, noise) in self.noises.iter().enumerate() {
            if let Err(e) = noise.validate() {
                out.push(format!("noises[{i}]: {e}"));
            }
        }
        if self.train_losses.is_empty() {
            out.push("train_losses: must not be empty".into());
        }
        if self.test_losses.is_empty() {
            out.push("test_losses: must not be empty".into());
        }
        if self.n.is_empty() {
            out.push("n: must list at least one sample size".into());
        }
        if self.n.contains(&0) {
            out.push("n: sample sizes must be >= 1".into());
        }
        if self.test_size == 0 {
            out.push("test_size: must be >= 1".into());
        }
        if self.replications == 0 {
            out.push("replications: must be >= 1".into());
        }
        if self.hidden.contains(&0) {
            out.push("hidden: widths must be >= 1".into());
        }
        if let InputSpec::Manifold { d_m, rho } = self.inputs {
            let d = self.target.dim();
            if d_m == 0 || d_m >= d {
                out.push(format!("inputs.d_m: need 1 <= d_m < d = {d}, got {d_m}"));
            }
            if !(0.0..1.0).contains(&rho) {
                out.push(format!("inputs.rho: must lie in [0,1), got {rho}"));
            }
        }
        out.extend(self.train.problems().into_iter().map(|p| format!("train.{p}")));
        out
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(p))
        }
    }

    /// Applies `key.path=value` overrides. Keys must name existing fields
    /// (after defaults are filled in); values parse as JSON, falling back
    /// to a bare string.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        let mut root = serde_json::to_value(self).expect("config serializes");
        let mut errors = Vec::new();
        for item in overrides {
            let item = item.as_ref();
            let Some((path, raw)) = item.split_once('=') else {
                errors.push(format!("override `{item}` is not key=value"));
                continue;
            };
            let value: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            if let Err(e) = set_path(&mut root, path, value) {
                errors.push(e);
            }
        }
        if !errors.is_empty() {
            return Err(Error::Config(errors));
        }
        serde_json::from_value(root).map_err(|e| Error::Config(vec![e.to_string()]))
    }
}

fn set_path(root: &mut Value, path: &str, value: Value) -> std::result::Result<(), String> {
    let mut cur = root;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let slot = match cur {
            Value::Object(map) => map.get_mut(*part),
            Value::Array(items) => part.parse::<usize>().ok().and_then(|k| items.get_mut(k)),
            _ => None,
        };
        let Some(slot) = slot else {
            return Err(format!("unknown config key `{}`", parts[..=i].join(".")));
        };
        if i + 1 == parts.len() {
            *slot = value;
            return Ok(());
        }
        cur = slot;
    }
    Err(format!("empty override key `{path}`"))
}
