//! Ground-truth regression functions on `[0, 1]^d`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::prng::PrngStream;
use crate::error::{Error, Result};

/// The four univariate Donoho–Johnstone test functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DjKind {
    Blocks,
    Bumps,
    Heavisine,
    Doppler,
}

impl DjKind {
    pub const ALL: [DjKind; 4] = [DjKind::Blocks, DjKind::Bumps, DjKind::Heavisine, DjKind::Doppler];

    pub fn name(self) -> &'static str {
        match self {
            DjKind::Blocks => "Blocks",
            DjKind::Bumps => "Bumps",
            DjKind::Heavisine => "Heavisine",
            DjKind::Doppler => "Doppler",
        }
    }
}

const DJ_T: [f64; 10] = [0.1, 0.15, 0.23, 0.28, 0.40, 0.44, 0.65, 0.76, 0.78, 0.81];
const BLOCKS_H: [f64; 10] = [4.0, -5.0, -2.5, 4.0, -3.0, 2.1, 4.3, -1.1, -2.1, -4.2];
const BUMPS_H: [f64; 10] = [4.0, 5.0, 2.5, 4.0, 3.0, 2.1, 4.3, 1.1, 2.1, 4.2];
const BUMPS_W: [f64; 10] = [0.005, 0.005, 0.006, 0.01, 0.01, 0.03, 0.01, 0.01, 0.005, 0.008];

fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Evaluates a Donoho–Johnstone function at `x ∈ [0, 1]`.
pub fn dj_target(kind: DjKind, x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::invalid(format!("{} is defined on [0, 1], got {x}", kind.name())));
    }
    Ok(dj_unchecked(kind, x))
}

fn dj_unchecked(kind: DjKind, x: f64) -> f64 {
    use std::f64::consts::PI;
    match kind {
        DjKind::Blocks => DJ_T
            .iter()
            .zip(BLOCKS_H)
            .filter(|(&t, _)| x > t)
            .map(|(_, h)| h)
            .sum(),
        DjKind::Bumps => DJ_T
            .iter()
            .zip(BUMPS_H)
            .zip(BUMPS_W)
            .map(|((&t, h), w)| h * (1.0 + (x - t).abs() / w).powi(-4))
            .sum(),
        DjKind::Heavisine => 4.0 * (4.0 * PI * x).sin() - sgn(x - 0.3) - sgn(0.72 - x),
        DjKind::Doppler => (x * (1.0 - x)).sqrt() * (2.2 * PI / (x + 0.15)).sin(),
    }
}

/// The pool h₁..h₇ used to build Kolmogorov–Arnold style targets.
/// `index` is 1-based.
pub fn ka_pool(index: u8, x: f64) -> f64 {
    match index {
        1 => -2.2 * x + 0.3,
        2 => 0.7 * x.powi(3) - 0.2 * x * x + 0.3 * x - 0.3,
        3 => 0.3 * sgn(x) * x.abs().sqrt(),
        4 => 0.8 * (x.abs() + 0.01).ln(),
        5 => (0.2 * x - 0.1).min(4.0).exp(),
        // The pool uses the truncated constant, not 2π.
        #[allow(clippy::approx_constant)]
        6 => (6.28 * x).sin(),
        7 => 2.0 / (x.abs() + 0.1),
        _ => panic!("pool index {index} outside 1..=7"),
    }
}

/// `f(x) = Σ_{k=0}^{2d} g_k(Σ_{m=1}^{d} ψ_{m,k}(x_m))` with every inner and
/// outer function drawn from the h₁..h₇ pool.
///
/// `indices` holds `2d + 1` rows of `d + 1` entries: row `k` is
/// `[g_k, ψ_{1,k}, …, ψ_{d,k}]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KaTarget {
    pub d: usize,
    pub seed: u64,
    pub indices: Vec<u8>,
}

impl KaTarget {
    /// Draws `(2d + 1)(d + 1)` indices uniformly from {1..7} with the stream
    /// seeded by `seed`.
    pub fn new(d: usize, seed: u64) -> Result<Self> {
        if d == 0 {
            return Err(Error::invalid("KA target needs d >= 1"));
        }
        let mut rng = PrngStream::new(seed);
        let indices = (0..(2 * d + 1) * (d + 1)).map(|_| rng.below(7) as u8 + 1).collect();
        Ok(KaTarget { d, seed, indices })
    }

    /// Test hook: builds a target from an explicit index table.
    pub fn with_indices(d: usize, indices: Vec<u8>) -> Result<Self> {
        if d == 0 || indices.len() != (2 * d + 1) * (d + 1) {
            return Err(Error::invalid(format!(
                "index table for d={d} must have {} entries",
                (2 * d + 1) * (d + 1)
            )));
        }
        if indices.iter().any(|i| !(1..=7).contains(i)) {
            return Err(Error::invalid("KA indices must lie in 1..=7"));
        }
        Ok(KaTarget { d, seed: 0, indices })
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.indices
            .chunks_exact(self.d + 1)
            .map(|row| {
                let inner: f64 = row[1..].iter().zip(x).map(|(&i, &xm)| ka_pool(i, xm)).sum();
                ka_pool(row[0], inner)
            })
            .sum()
    }
}

type Evaluator = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// User-supplied evaluator.
#[derive(Clone)]
pub struct CustomTarget {
    pub name: String,
    pub d: usize,
    pub continuous: bool,
    f: Evaluator,
}

impl CustomTarget {
    pub fn new(
        name: impl Into<String>,
        d: usize,
        continuous: bool,
        f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        CustomTarget {
            name: name.into(),
            d,
            continuous,
            f: Arc::new(f),
        }
    }

    pub fn constant(d: usize, value: f64) -> Self {
        CustomTarget::new(format!("Constant({value})"), d, true, move |_| value)
    }
}

impl fmt::Debug for CustomTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomTarget")
            .field("name", &self.name)
            .field("d", &self.d)
            .finish_non_exhaustive()
    }
}

/// An evaluable ground-truth function `f0`.
#[derive(Debug, Clone)]
pub enum TargetFn {
    Dj(DjKind),
    Ka(KaTarget),
    Custom(CustomTarget),
}

impl TargetFn {
    pub fn dim(&self) -> usize {
        match self {
            TargetFn::Dj(_) => 1,
            TargetFn::Ka(ka) => ka.d,
            TargetFn::Custom(c) => c.d,
        }
    }

    pub fn name(&self) -> String {
        match self {
            TargetFn::Dj(k) => k.name().to_string(),
            TargetFn::Ka(ka) => format!("KA(d={},seed={})", ka.d, ka.seed),
            TargetFn::Custom(c) => c.name.clone(),
        }
    }

    /// Blocks and Heavisine have jumps; everything else here is continuous.
    pub fn is_continuous(&self) -> bool {
        match self {
            TargetFn::Dj(DjKind::Blocks | DjKind::Heavisine) => false,
            TargetFn::Dj(_) | TargetFn::Ka(_) => true,
            TargetFn::Custom(c) => c.continuous,
        }
    }

    /// Evaluates at a point of `[0, 1]^d`.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        if x.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid(format!("{} evaluated outside [0,1]^d", self.name())));
        }
        Ok(self.eval_unchecked(x))
    }

    pub(crate) fn eval_unchecked(&self, x: &[f64]) -> f64 {
        match self {
            TargetFn::Dj(k) => dj_unchecked(*k, x[0]),
            TargetFn::Ka(ka) => ka.eval(x),
            TargetFn::Custom(c) => (c.f)(x),
        }
    }
}

/// Serializable description of a target, as it appears in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum TargetSpec {
    Blocks,
    Bumps,
    Heavisine,
    Doppler,
    Ka {
        d: usize,
        #[serde(default = "default_ka_seed")]
        seed: u64,
    },
    Constant {
        #[serde(default = "one")]
        d: usize,
        value: f64,
    },
}

fn default_ka_seed() -> u64 {
    2021
}

fn one() -> usize {
    1
}

impl TargetSpec {
    pub fn build(&self) -> Result<TargetFn> {
        Ok(match *self {
            TargetSpec::Blocks => TargetFn::Dj(DjKind::Blocks),
            TargetSpec::Bumps => TargetFn::Dj(DjKind::Bumps),
            TargetSpec::Heavisine => TargetFn::Dj(DjKind::Heavisine),
            TargetSpec::Doppler => TargetFn::Dj(DjKind::Doppler),
            TargetSpec::Ka { d, seed } => TargetFn::Ka(KaTarget::new(d, seed)?),
            TargetSpec::Constant { d, value } => {
                if d == 0 || !value.is_finite() {
                    return Err(Error::invalid("constant target needs d >= 1 and a finite value"));
                }
                TargetFn::Custom(CustomTarget::constant(d, value))
            }
        })
    }

    pub fn dim(&self) -> usize {
        match *self {
            TargetSpec::Ka { d, .. } | TargetSpec::Constant { d, .. } => d,
            _ => 1,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Second, literal transcription of the four formulas.
    fn reference(kind: DjKind, x: f64) -> f64 {
        let pi = std::f64::consts::PI;
        let t = [0.1, 0.15, 0.23, 0.28, 0.40, 0.44, 0.65, 0.76, 0.78, 0.81];
        match kind {
            DjKind::Blocks => {
                let h = [4.0, -5.0, -2.5, 4.0, -3.0, 2.1, 4.3, -1.1, -2.1, -4.2];
                let mut s = 0.0;
                for i in 0..10 {
                    if x > t[i] {
                        s += h[i];
                    }
                }
                s
            }
            DjKind::Bumps => {
                let h = [4.0, 5.0, 2.5, 4.0, 3.0, 2.1, 4.3, 1.1, 2.1, 4.2];
                let w = [0.005, 0.005, 0.006, 0.01, 0.01, 0.03, 0.01, 0.01, 0.005, 0.008];
                let mut s = 0.0;
                for i in 0..10 {
                    let b = 1.0 + (x - t[i]).abs() / w[i];
                    s += h[i] / (b * b * b * b);
                }
                s
            }
            DjKind::Heavisine => {
                let s = |v: f64| if v == 0.0 { 0.0 } else { v.signum() };
                4.0 * (4.0 * pi * x).sin() - s(x - 0.3) - s(0.72 - x)
            }
            DjKind::Doppler => (x * (1.0 - x)).powf(0.5) * (2.2 * pi / (x + 0.15)).sin(),
        }
    }

    #[test]
    fn hand_values() {
        assert_eq!(dj_target(DjKind::Blocks, 0.05).unwrap(), 0.0);
        assert_relative_eq!(dj_target(DjKind::Heavisine, 0.5).unwrap(), -2.0, epsilon = 1e-12);
        assert_relative_eq!(dj_target(DjKind::Doppler, 0.1).unwrap(), 0.17634, epsilon = 1e-5);
        // Blocks just past t1 = 0.1: h1 = 4.
        assert_eq!(dj_target(DjKind::Blocks, 0.12).unwrap(), 4.0);
        // Bumps at t2 = 0.15: full height h2 plus neighbour tails.
        assert!(dj_target(DjKind::Bumps, 0.15).unwrap() > 5.0);
    }

    #[test]
    fn matches_literal_transcription() {
        for kind in DjKind::ALL {
            for i in 0..=40 {
                let x = i as f64 / 40.0;
                let got = dj_target(kind, x).unwrap();
                assert!((got - reference(kind, x)).abs() <= 1e-12, "{kind:?}({x})");
            }
        }
    }

    #[test]
    fn domain_checked() {
        assert!(dj_target(DjKind::Bumps, -0.01).is_err());
        assert!(dj_target(DjKind::Bumps, 1.01).is_err());
        assert!(TargetFn::Dj(DjKind::Blocks).eval(&[0.5, 0.5]).is_err());
    }

    #[test]
    fn pool_values() {
        assert_relative_eq!(ka_pool(4, 0.0), 0.8 * 0.01f64.ln(), epsilon = 1e-15);
        assert_relative_eq!(ka_pool(4, 0.0), -3.68414, epsilon = 1e-5);
        assert_eq!(ka_pool(5, 1000.0), 4f64.exp());
        assert_eq!(ka_pool(3, -4.0), -0.6);
        assert_eq!(ka_pool(7, 0.0), 20.0);
    }

    #[test]
    fn ka_all_ones_closed_form() {
        let ka = KaTarget::with_indices(1, vec![1; 6]).unwrap();
        for x in [0.0, 0.3, 0.77, 1.0] {
            assert_relative_eq!(ka.eval(&[x]), 14.52 * x - 1.08, epsilon = 1e-12);
        }
        assert!(KaTarget::with_indices(1, vec![1; 5]).is_err());
        assert!(KaTarget::with_indices(1, vec![0; 6]).is_err());
    }

    #[test]
    fn ka_deterministic() {
        let a = KaTarget::new(4, 2021).unwrap();
        let b = KaTarget::new(4, 2021).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.indices.len(), 45);
        assert!(a.indices.iter().all(|i| (1..=7).contains(i)));
        assert_ne!(a.indices, KaTarget::new(4, 2022).unwrap().indices);
    }

    #[test]
    fn spec_serde() {
        let spec: TargetSpec = serde_json::from_str(r#"{"kind":"ka","d":4}"#).unwrap();
        assert_eq!(spec, TargetSpec::Ka { d: 4, seed: 2021 });
        let t = spec.build().unwrap();
        assert_eq!(t.dim(), 4);
        let c: TargetSpec = serde_json::from_str(r#"{"kind":"constant","value":2.5}"#).unwrap();
        assert_eq!(c.build().unwrap().eval(&[0.3]).unwrap(), 2.5);
    }

    #[test]
    fn ka_indices_match_golden() {
        let golden: serde_json::Value =
            serde_json::from_str(include_str!("../../golden/ka_indices_seed2021.json")).unwrap();
        assert_eq!(golden["seed"], 2021);
        for (d, rows) in golden["tables"].as_object().unwrap() {
            let d: usize = d.parse().unwrap();
            let flat: Vec<u8> = rows
                .as_array()
                .unwrap()
                .iter()
                .flat_map(|r| r.as_array().unwrap().iter().map(|v| v.as_u64().unwrap() as u8))
                .collect();
            assert_eq!(KaTarget::new(d, 2021).unwrap().indices, flat, "d = {d}");
        }
    }
}
