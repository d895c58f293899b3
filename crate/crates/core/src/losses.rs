//! Robust regression losses `L(a, y) = ψ(a − y)` and their first-argument
//! subgradients.
//!
//! | kind     | ψ(x)                                      | λ_L              |
//! |----------|-------------------------------------------|------------------|
//! | LS       | x²                                        | (not Lipschitz)  |
//! | LAD      | \|x\|                                     | 1                |
//! | Quantile | τx for x ≥ 0, (τ − 1)x otherwise          | max{τ, 1 − τ}    |
//! | Huber    | x²/2 for \|x\| ≤ ζ, ζ\|x\| − ζ²/2 otherwise | ζ                |
//! | Cauchy   | log(1 + κ²x²)                             | κ                |
//! | Tukey    | t²[1 − (1 − (x/t)²)³]/6 for \|x\| ≤ t, t²/6 | 16t/(25√5)       |
//!
//! LS is squared error without the ½ factor. At kinks the subgradient is 0
//! for LAD and Quantile (at x = 0) and ζ·sign(x) for Huber at |x| = ζ.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The six supported loss families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Ls,
    Lad,
    Quantile,
    Huber,
    Cauchy,
    Tukey,
}

impl LossKind {
    pub const ALL: [LossKind; 6] = [
        LossKind::Ls,
        LossKind::Lad,
        LossKind::Quantile,
        LossKind::Huber,
        LossKind::Cauchy,
        LossKind::Tukey,
    ];

    /// Lowercase config name.
    pub fn as_str(self) -> &'static str {
        match self {
            LossKind::Ls => "ls",
            LossKind::Lad => "lad",
            LossKind::Quantile => "quantile",
            LossKind::Huber => "huber",
            LossKind::Cauchy => "cauchy",
            LossKind::Tukey => "tukey",
        }
    }

    fn display_name(self) -> &'static str {
        match self {
            LossKind::Ls => "LS",
            LossKind::Lad => "LAD",
            LossKind::Quantile => "Quantile",
            LossKind::Huber => "Huber",
            LossKind::Cauchy => "Cauchy",
            LossKind::Tukey => "Tukey",
        }
    }

    fn uses_hyper(self) -> bool {
        !matches!(self, LossKind::Ls | LossKind::Lad)
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LossKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown loss kind `{s}`")))
    }
}

/// A validated loss: kind plus its hyperparameter.
///
/// Serialized as `{"kind": "huber", "hyper": 1.345}`; `hyper` is omitted for
/// LS and LAD.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawLossSpec", into = "RawLossSpec")]
pub struct LossSpec {
    kind: LossKind,
    hyper: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLossSpec {
    kind: LossKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    hyper: Option<f64>,
}

impl TryFrom<RawLossSpec> for LossSpec {
    type Error = Error;

    fn try_from(raw: RawLossSpec) -> Result<Self> {
        match (raw.kind.uses_hyper(), raw.hyper) {
            (true, Some(h)) => LossSpec::new(raw.kind, h),
            (true, None) => Err(Error::InvalidLoss {
                kind: raw.kind.as_str(),
                detail: "missing `hyper`".into(),
            }),
            (false, _) => LossSpec::new(raw.kind, 0.0),
        }
    }
}

impl From<LossSpec> for RawLossSpec {
    fn from(spec: LossSpec) -> Self {
        RawLossSpec {
            kind: spec.kind,
            hyper: spec.kind.uses_hyper().then_some(spec.hyper),
        }
    }
}

impl LossSpec {
    /// Builds a loss, checking the hyperparameter range. `hyper` is ignored
    /// for LS and LAD.
    pub fn new(kind: LossKind, hyper: f64) -> Result<Self> {
        let bad = |detail: &str| Error::InvalidLoss {
            kind: kind.as_str(),
            detail: format!("{detail}, got {hyper}"),
        };
        match kind {
            LossKind::Ls | LossKind::Lad => Ok(LossSpec {
                kind,
                hyper: 0.0,
            }),
            LossKind::Quantile if !(hyper > 0.0 && hyper < 1.0) => Err(bad("tau must lie in (0, 1)")),
            LossKind::Huber | LossKind::Cauchy | LossKind::Tukey
                if !(hyper > 0.0 && hyper.is_finite()) =>
            {
                Err(bad("parameter must be positive and finite"))
            }
            _ => Ok(LossSpec { kind, hyper }),
        }
    }

    pub fn ls() -> Self {
        LossSpec {
            kind: LossKind::Ls,
            hyper: 0.0,
        }
    }

    pub fn lad() -> Self {
        LossSpec {
            kind: LossKind::Lad,
            hyper: 0.0,
        }
    }

    pub fn quantile(tau: f64) -> Result<Self> {
        Self::new(LossKind::Quantile, tau)
    }

    pub fn huber(zeta: f64) -> Result<Self> {
        Self::new(LossKind::Huber, zeta)
    }

    pub fn cauchy(kappa: f64) -> Result<Self> {
        Self::new(LossKind::Cauchy, kappa)
    }

    pub fn tukey(t: f64) -> Result<Self> {
        Self::new(LossKind::Tukey, t)
    }

    /// The five losses used throughout the experiments: LS, LAD,
    /// Huber(1.345), Cauchy(1), Tukey(4.685).
    pub fn experiment_set() -> Vec<LossSpec> {
        vec![
            LossSpec::ls(),
            LossSpec::lad(),
            LossSpec::huber(1.345).unwrap(),
            LossSpec::cauchy(1.0).unwrap(),
            LossSpec::tukey(4.685).unwrap(),
        ]
    }

    pub fn kind(&self) -> LossKind {
        self.kind
    }

    /// Hyperparameter, `None` for LS and LAD.
    pub fn hyper(&self) -> Option<f64> {
        self.kind.uses_hyper().then_some(self.hyper)
    }

    /// ψ(x) at residual `x = a − y`. No finiteness check.
    #[inline]
    pub fn psi(&self, x: f64) -> f64 {
        match self.kind {
            LossKind::Ls => x * x,
            LossKind::Lad => x.abs(),
            LossKind::Quantile => {
                if x >= 0.0 {
                    self.hyper * x
                } else {
                    (self.hyper - 1.0) * x
                }
            }
            LossKind::Huber => {
                let z = self.hyper;
                if x.abs() <= z {
                    0.5 * x * x
                } else {
                    z * x.abs() - 0.5 * z * z
                }
            }
            LossKind::Cauchy => (self.hyper * self.hyper * x * x).ln_1p(),
            LossKind::Tukey => {
                let t = self.hyper;
                if x.abs() <= t {
                    let u = 1.0 - (x / t) * (x / t);
                    t * t * (1.0 - u * u * u) / 6.0
                } else {
                    t * t / 6.0
                }
            }
        }
    }

    /// dψ/dx at residual `x`, with the documented subgradient at kinks.
    #[inline]
    pub fn psi_prime(&self, x: f64) -> f64 {
        match self.kind {
            LossKind::Ls => 2.0 * x,
            LossKind::Lad => sign0(x),
            LossKind::Quantile => {
                if x > 0.0 {
                    self.hyper
                } else if x < 0.0 {
                    self.hyper - 1.0
                } else {
                    0.0
                }
            }
            LossKind::Huber => {
                let z = self.hyper;
                if x.abs() < z {
                    x
                } else {
                    z * sign0(x)
                }
            }
            LossKind::Cauchy => {
                let k2 = self.hyper * self.hyper;
                2.0 * k2 * x / (1.0 + k2 * x * x)
            }
            LossKind::Tukey => {
                let t = self.hyper;
                if x.abs() <= t {
                    let u = 1.0 - (x / t) * (x / t);
                    x * u * u
                } else {
                    0.0
                }
            }
        }
    }

    /// L(a, y).
    pub fn value(&self, a: f64, y: f64) -> Result<f64> {
        check_finite(a, y)?;
        Ok(self.psi(a - y))
    }

    /// ∂L/∂a.
    pub fn grad(&self, a: f64, y: f64) -> Result<f64> {
        check_finite(a, y)?;
        Ok(self.psi_prime(a - y))
    }

    /// λ_L; LS has none.
    pub fn lipschitz_constant(&self) -> Result<f64> {
        match self.kind {
            LossKind::Ls => Err(Error::NotLipschitz("LS")),
            LossKind::Lad => Ok(1.0),
            LossKind::Quantile => Ok(self.hyper.max(1.0 - self.hyper)),
            LossKind::Huber | LossKind::Cauchy => Ok(self.hyper),
            LossKind::Tukey => Ok(16.0 * self.hyper / (25.0 * 5f64.sqrt())),
        }
    }
}

impl fmt::Display for LossSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.hyper() {
            Some(h) => write!(f, "{}({})", self.kind.display_name(), h),
            None => f.write_str(self.kind.display_name()),
        }
    }
}

/// Parses `kind` or `kind:hyper`, e.g. `lad`, `huber:1.345`.
impl FromStr for LossSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, hyper) = match s.split_once(':') {
            Some((k, h)) => (
                k.parse::<LossKind>()?,
                Some(
                    h.parse::<f64>()
                        .map_err(|_| Error::invalid(format!("bad loss hyperparameter `{h}`")))?,
                ),
            ),
            None => (s.parse::<LossKind>()?, None),
        };
        LossSpec::try_from(RawLossSpec { kind, hyper })
    }
}

#[inline]
fn sign0(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn check_finite(a: f64, y: f64) -> Result<()> {
    if a.is_finite() && y.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("non-finite loss arguments a={a}, y={y}")))
    }
}

/// Empirical certificate of the Lipschitz and zero-diagonal properties on a
/// set of probe points.
#[derive(Debug, Clone, PartialEq)]
pub struct AxiomReport {
    /// max |L(a1,y) − L(a2,y)| / |a1 − a2| over probe values.
    pub max_ratio_first: f64,
    /// max |L(a,y1) − L(a,y2)| / |y1 − y2| over probe values.
    pub max_ratio_second: f64,
    /// λ_L, `None` for LS.
    pub lipschitz_constant: Option<f64>,
    /// Both ratios within λ_L(1 + tol). `None` for LS.
    pub lipschitz_ok: Option<bool>,
    /// L(v, v) = 0 for every probe value v.
    pub zero_on_diagonal: bool,
}

/// Probes the Lipschitz bound in both arguments over every value appearing
/// in `probes` (both coordinates pooled).
pub fn check_loss_axioms(spec: &LossSpec, probes: &[(f64, f64)], tol: f64) -> Result<AxiomReport> {
    if probes.len() < 2 {
        return Err(Error::invalid("at least 2 probe points are required"));
    }
    let mut values: Vec<f64> = probes.iter().flat_map(|&(a, y)| [a, y]).collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("probe points must be finite"));
    }
    values.sort_by(f64::total_cmp);
    values.dedup();

    let mut first: f64 = 0.0;
    let mut second: f64 = 0.0;
    for &fixed in &values {
        for (i, &u) in values.iter().enumerate() {
            for &v in &values[i + 1..] {
                let gap = (u - v).abs();
                first = first.max((spec.psi(u - fixed) - spec.psi(v - fixed)).abs() / gap);
                second = second.max((spec.psi(fixed - u) - spec.psi(fixed - v)).abs() / gap);
            }
        }
    }
    let lipschitz_constant = spec.lipschitz_constant().ok();
    let lipschitz_ok = lipschitz_constant.map(|l| first <= l * (1.0 + tol) && second <= l * (1.0 + tol));
    let zero_on_diagonal = spec.psi(0.0) == 0.0;
    Ok(AxiomReport {
        max_ratio_first: first,
        max_ratio_second: second,
        lipschitz_constant,
        lipschitz_ok,
        zero_on_diagonal,
    })
}
