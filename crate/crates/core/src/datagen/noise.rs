use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::prng::PrngStream;
use crate::error::{Error, Result};

/// Additive error distributions, all symmetric about zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseModel {
    /// N(0, 1).
    Normal,
    /// Student's t with 2 degrees of freedom.
    StudentT2,
    /// Standard Cauchy.
    Cauchy,
    /// ξ·N(0, 1) + (1 − ξ)·N(0, sd2²).
    Mixture {
        #[serde(default = "default_xi")]
        xi: f64,
        #[serde(default = "default_sd2")]
        sd2: f64,
    },
}

fn default_xi() -> f64 {
    0.8
}

fn default_sd2() -> f64 {
    100.0
}

impl NoiseModel {
    /// The contaminated normal with ξ = 0.8 and a wide component of sd 100.
    pub fn contaminated() -> Self {
        NoiseModel::Mixture { xi: 0.8, sd2: 100.0 }
    }

    pub fn experiment_set() -> Vec<NoiseModel> {
        vec![
            NoiseModel::Normal,
            NoiseModel::StudentT2,
            NoiseModel::Cauchy,
            NoiseModel::contaminated(),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseModel::Mixture { xi, sd2 } if !(xi > 0.0 && xi < 1.0) || !(sd2 > 0.0 && sd2.is_finite()) => Err(
                Error::invalid(format!("mixture needs xi in (0,1) and sd2 > 0, got xi={xi}, sd2={sd2}")),
            ),
            _ => Ok(()),
        }
    }

    /// Short label used in reports and file names.
    pub fn slug(&self) -> &'static str {
        match self {
            NoiseModel::Normal => "normal",
            NoiseModel::StudentT2 => "t2",
            NoiseModel::Cauchy => "cauchy",
            NoiseModel::Mixture { .. } => "mixture",
        }
    }

    /// Population variance, `None` when it does not exist.
    pub fn variance(&self) -> Option<f64> {
        match *self {
            NoiseModel::Normal => Some(1.0),
            NoiseModel::StudentT2 | NoiseModel::Cauchy => None,
            NoiseModel::Mixture { xi, sd2 } => Some(xi + (1.0 - xi) * sd2 * sd2),
        }
    }

    pub fn sample(&self, rng: &mut PrngStream) -> f64 {
        self.sample_with_component(rng).0
    }

    /// Draw plus the mixture component it came from (0 = narrow, 1 = wide;
    /// always 0 for the non-mixture models).
    pub(crate) fn sample_with_component(&self, rng: &mut PrngStream) -> (f64, u8) {
        match *self {
            NoiseModel::Normal => (rng.standard_normal(), 0),
            // χ²₂/2 is Exp(1), so Z/√E is t(2).
            NoiseModel::StudentT2 => {
                let z = rng.standard_normal();
                (z / rng.exponential().sqrt(), 0)
            }
            NoiseModel::Cauchy => ((PI * (rng.uniform01() - 0.5)).tan(), 0),
            NoiseModel::Mixture { xi, sd2 } => {
                if rng.uniform01() < xi {
                    (rng.standard_normal(), 0)
                } else {
                    (sd2 * rng.standard_normal(), 1)
                }
            }
        }
    }
}

impl fmt::Display for NoiseModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseModel::Normal => f.write_str("N(0,1)"),
            NoiseModel::StudentT2 => f.write_str("t(2)"),
            NoiseModel::Cauchy => f.write_str("Cauchy(0,1)"),
            NoiseModel::Mixture { xi, sd2 } => write!(f, "Mixture({xi},{sd2})"),
        }
    }
}

/// Sample a model `m` times.
pub fn sample_noise(model: &NoiseModel, m: usize, rng: &mut PrngStream) -> Vec<f64> {
    (0..m).map(|_| model.sample(rng)).collect()
}
