//! Closed-form calculators: network designs, excess-risk bounds, rate
//! exponents and relative network efficiency.
//!
//! Universal constants are inputs (default 1), so every bound is "up to
//! constants". Logarithms are natural. `p = ∞` is `f64::INFINITY`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::datagen::{PrngStream, TargetFn};
use crate::error::{Error, Result};
use crate::losses::LossSpec;
use crate::mlp::NetworkShape;

/// Moment index `p ∈ (1, ∞]`, rendered as `inf` when infinite.
pub fn parse_p(s: &str) -> Result<f64> {
    let p = match s.trim().to_ascii_lowercase().as_str() {
        "inf" | "infinity" | "+inf" => f64::INFINITY,
        other => other
            .parse::<f64>()
            .map_err(|_| Error::invalid(format!("cannot parse p from `{s}`")))?,
    };
    if !(p > 1.0) {
        return Err(Error::invalid(format!("p must exceed 1, got {p}")));
    }
    Ok(p)
}

/// `1 − 1/p`, equal to 1 for `p = ∞`.
fn moment_factor(p: f64) -> f64 {
    if p.is_infinite() {
        1.0
    } else {
        1.0 - 1.0 / p
    }
}

/// Smoothness and moment assumptions behind a rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateSpec {
    pub p: f64,
    pub alpha: f64,
    pub d: usize,
    /// Hölder constant.
    #[serde(default = "one")]
    pub theta: f64,
    /// Dimension entering the rate: `d`, or `d_δ` under the manifold model.
    pub d_target: usize,
}

fn one() -> f64 {
    1.0
}

impl RateSpec {
    pub fn new(p: f64, alpha: f64, d: usize) -> Result<Self> {
        let r = RateSpec {
            p,
            alpha,
            d,
            theta: 1.0,
            d_target: d,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p > 1.0) {
            return Err(Error::invalid(format!("p must exceed 1, got {}", self.p)));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::invalid(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if self.d == 0 || self.d_target == 0 {
            return Err(Error::invalid("dimensions must be >= 1"));
        }
        if !(self.theta >= 0.0 && self.theta.is_finite()) {
            return Err(Error::invalid(format!("theta must be >= 0, got {}", self.theta)));
        }
        Ok(())
    }

    /// Hölder modulus `θ·r^α`.
    pub fn omega(&self, r: f64) -> f64 {
        self.theta * r.powf(self.alpha)
    }
}

/// `(1 − 1/p)·α/(d_target + α)`.
pub fn rate_exponent(rate: &RateSpec) -> f64 {
    let d = rate.d_target as f64;
    moment_factor(rate.p) * rate.alpha / (d + rate.alpha)
}

/// Exponent under the quadratic-growth condition, `(1 − 1/p)·2α/(d_target + 2α)`.
pub fn rate_exponent_quadratic(rate: &RateSpec) -> f64 {
    let d = rate.d_target as f64;
    moment_factor(rate.p) * 2.0 * rate.alpha / (d + 2.0 * rate.alpha)
}

/// `n_* = n^{(1−1/p)·d_target/(d_target+α)}`.
pub fn n_star(n: f64, rate: &RateSpec) -> f64 {
    let d = rate.d_target as f64;
    n.powf(moment_factor(rate.p) * d / (d + rate.alpha))
}

/// `W = max{4d⌊N^{1/d}⌋ + 3d, 12N + 8}`, `D = 12M + 14`.
pub fn shen_width_depth(d: usize, n: usize, m: usize) -> Result<(usize, usize)> {
    if d == 0 || n == 0 || m == 0 {
        return Err(Error::invalid(format!("need d, N, M >= 1, got ({d}, {n}, {m})")));
    }
    let root = int_root(n, d);
    Ok(((4 * d * root + 3 * d).max(12 * n + 8), 12 * m + 14))
}

/// `⌊n^{1/k}⌋` computed exactly.
fn int_root(n: usize, k: usize) -> usize {
    let mut r = (n as f64).powf(1.0 / k as f64).round() as usize;
    let pow = |b: usize| (0..k).try_fold(1usize, |acc, _| acc.checked_mul(b));
    while r > 0 && pow(r).is_none_or(|v| v > n) {
        r -= 1;
    }
    while pow(r + 1).is_some_and(|v| v <= n) {
        r += 1;
    }
    r
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DesignLabel {
    #[serde(rename = "DFW")]
    Dfw,
    #[serde(rename = "WFD")]
    Wfd,
    #[serde(rename = "DAW")]
    Daw,
    RectanglePlain,
    RectangleQuadratic,
    ShenNM,
}

impl fmt::Display for DesignLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DesignLabel::Dfw => "DFW",
            DesignLabel::Wfd => "WFD",
            DesignLabel::Daw => "DAW",
            DesignLabel::RectanglePlain => "RectanglePlain",
            DesignLabel::RectangleQuadratic => "RectangleQuadratic",
            DesignLabel::ShenNM => "ShenNM",
        })
    }
}

/// A rectangle network of width `W` and depth `D` on input dimension `d`,
/// with the approximation parameters `(N, M)` it was built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkDesign {
    pub label: DesignLabel,
    pub d: usize,
    pub width: usize,
    pub depth: usize,
    pub size: usize,
    pub neurons: usize,
    /// Sup-norm bound of the class.
    pub b: f64,
    pub n_param: usize,
    pub m_param: usize,
}

impl NetworkDesign {
    pub fn new(label: DesignLabel, d: usize, width: usize, depth: usize, n_param: usize, m_param: usize) -> Result<Self> {
        if width == 0 || depth == 0 {
            return Err(Error::invalid("designs need W, D >= 1"));
        }
        let shape = NetworkShape::rectangle(d, width, depth)?;
        Ok(NetworkDesign {
            label,
            d,
            width,
            depth,
            size: shape.param_count(),
            neurons: shape.neuron_count(),
            b: 1.0,
            n_param,
            m_param,
        })
    }

    /// Theorem-style design from `(N, M)`.
    pub fn shen(d: usize, n: usize, m: usize) -> Result<Self> {
        let (w, dep) = shen_width_depth(d, n, m)?;
        Self::new(DesignLabel::ShenNM, d, w, dep, n, m)
    }

    pub fn shape(&self) -> NetworkShape {
        NetworkShape::rectangle(self.d, self.width, self.depth).expect("validated at construction")
    }

    pub fn with_b(mut self, b: f64) -> Self {
        self.b = b;
        self
    }
}

fn check_n(n: f64) -> Result<()> {
    if !(n >= 3.0 && n.is_finite()) {
        return Err(Error::invalid(format!("n must be >= 3, got {n}")));
    }
    Ok(())
}

/// Deep fixed-width design: `N = 1`, `M = ⌊n_*^{1/2}/log n⌋`.
pub fn dfw_design(n: f64, rate: &RateSpec) -> Result<NetworkDesign> {
    check_n(n)?;
    rate.validate()?;
    let d = rate.d_target;
    let m = (n_star(n, rate).sqrt() / n.ln()).floor() as usize;
    NetworkDesign::new(DesignLabel::Dfw, rate.d, (7 * d).max(20), 12 * m + 14, 1, m)
}

/// Wide fixed-depth design: `D = 26`, `N = ⌊n_*^{1/2}⌋`.
pub fn wfd_design(n: f64, rate: &RateSpec) -> Result<NetworkDesign> {
    check_n(n)?;
    rate.validate()?;
    let d = rate.d_target;
    let ns = n_star(n, rate);
    let big_n = ns.sqrt().floor() as usize;
    let w = (4 * d * ns.powf(1.0 / (2.0 * d as f64)).floor() as usize + 3 * d).max(12 * big_n + 8);
    NetworkDesign::new(DesignLabel::Wfd, rate.d, w, 26, big_n.max(1), 1)
}

/// Deep-and-wide design: `N = M = max(1, ⌊n_*^{1/4}⌋)` through the
/// `(N, M)` width/depth formulas.
pub fn daw_design(n: f64, rate: &RateSpec) -> Result<NetworkDesign> {
    check_n(n)?;
    rate.validate()?;
    let k = (n_star(n, rate).powf(0.25).floor() as usize).max(1);
    let (w, dep) = shen_width_depth(rate.d_target, k, k)?;
    NetworkDesign::new(DesignLabel::Daw, rate.d, w, dep, k, k)
}

/// Rectangle design of width `max(7d, 20)`. Quadratic: depth
/// `12⌊n^{(1−1/p)d/(2d+4α)}/log n⌋ + 14`; plain: the DFW depth. A manifold
/// `d_δ` replaces `d` in the width and depth formulas; the input layer keeps
/// the ambient `d`.
pub fn rectangle_design(n: f64, rate: &RateSpec, quadratic: bool, manifold_d_delta: Option<usize>) -> Result<NetworkDesign> {
    check_n(n)?;
    rate.validate()?;
    let mut r = *rate;
    if let Some(dd) = manifold_d_delta {
        if dd == 0 {
            return Err(Error::invalid("d_delta must be >= 1"));
        }
        r.d_target = dd;
    }
    if quadratic {
        let d = r.d_target as f64;
        let e = moment_factor(r.p) * d / (2.0 * d + 4.0 * r.alpha);
        let m = (n.powf(e) / n.ln()).floor() as usize;
        NetworkDesign::new(DesignLabel::RectangleQuadratic, r.d, (7 * r.d_target).max(20), 12 * m + 14, 1, m)
    } else {
        let mut des = dfw_design(n, &r)?;
        des.label = DesignLabel::RectanglePlain;
        Ok(des)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ApproxVariant {
    /// `19√d·ω(r)`.
    Coarse19,
    /// `18√d·ω(r)`.
    Sharp18,
    /// `384·d·ω(r)²`.
    Quadratic384,
}

/// Approximation term at `r = N^{−2/d}M^{−2/d}`, without loss prefactors.
pub fn approx_error_bound(d: usize, n: usize, m: usize, omega: impl Fn(f64) -> f64, variant: ApproxVariant) -> Result<f64> {
    if d == 0 || n == 0 || m == 0 {
        return Err(Error::invalid(format!("need d, N, M >= 1, got ({d}, {n}, {m})")));
    }
    let df = d as f64;
    let r = (n as f64).powf(-2.0 / df) * (m as f64).powf(-2.0 / df);
    let w = omega(r);
    Ok(match variant {
        ApproxVariant::Coarse19 => 19.0 * df.sqrt() * w,
        ApproxVariant::Sharp18 => 18.0 * df.sqrt() * w,
        ApproxVariant::Quadratic384 => 384.0 * df * w * w,
    })
}

/// `C·λ·B·S·D·log S·log n / n^{1−1/p}` (denominator `n` when `p = ∞`).
pub fn stochastic_error_bound(lambda: f64, b: f64, s: f64, depth: f64, n: f64, p: f64, c: f64) -> Result<f64> {
    if !(n >= 2.0) {
        return Err(Error::invalid(format!("n must be >= 2, got {n}")));
    }
    if !(s > 1.0) {
        return Err(Error::invalid(format!("S must exceed 1, got {s}")));
    }
    if !(p > 1.0) {
        return Err(Error::invalid(format!("p must exceed 1, got {p}")));
    }
    Ok(c * lambda * b * s * depth * s.ln() * n.ln() / n.powf(moment_factor(p)))
}

/// Which excess-risk statement to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundVariant {
    /// Stochastic term plus `18λ√d·ω`.
    Theorem,
    /// Stochastic term plus `19λ√d·ω`.
    L1,
    /// Stochastic term plus `λ_{L,f*}·384·d·ω²`.
    Quadratic,
    /// Stochastic term plus `λ(2 + 18√d_δ)·ω((C₂+1)(NM)^{−2/d_δ})`.
    Manifold,
    /// Stochastic term plus `λ_{L,f*}[(2 + 18√d_δ)·ω((C₂+1)(NM)^{−2/d_δ})]²`.
    ManifoldQuadratic,
}

/// Unknown constants. `None` means "not supplied".
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    pub c: Option<f64>,
    pub c2: Option<f64>,
    pub lambda_quad: Option<f64>,
    /// Self-calibration multiplier; applied to the total when present.
    pub calibration: Option<f64>,
}

impl Default for BoundConstants {
    fn default() -> Self {
        BoundConstants {
            c: Some(1.0),
            c2: Some(1.0),
            lambda_quad: Some(1.0),
            calibration: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundTerms {
    pub stochastic: f64,
    pub approximation: f64,
    /// `(stochastic + approximation)·calibration`.
    pub total: f64,
}

/// Evaluates an excess-risk bound for `design` at sample size `n`. The
/// modulus is the Hölder one from `rate`; manifold variants use
/// `rate.d_target` as `d_δ`.
pub fn excess_bound(
    design: &NetworkDesign,
    rate: &RateSpec,
    loss: &LossSpec,
    n: f64,
    constants: &BoundConstants,
    variant: BoundVariant,
) -> Result<BoundTerms> {
    rate.validate()?;
    let lambda = loss.lipschitz_constant()?;
    let mut missing = Vec::new();
    if constants.c.is_none() {
        missing.push("C");
    }
    let quad = matches!(variant, BoundVariant::Quadratic | BoundVariant::ManifoldQuadratic);
    let manifold = matches!(variant, BoundVariant::Manifold | BoundVariant::ManifoldQuadratic);
    if quad && constants.lambda_quad.is_none() {
        missing.push("lambda_quad");
    }
    if manifold && constants.c2.is_none() {
        missing.push("C2");
    }
    if !missing.is_empty() {
        return Err(Error::MissingConstants(missing.join(", ")));
    }
    let stochastic = stochastic_error_bound(
        lambda,
        design.b,
        design.size as f64,
        design.depth as f64,
        n,
        rate.p,
        constants.c.unwrap(),
    )?;
    let (nn, mm) = (design.n_param.max(1), design.m_param.max(1));
    let omega = |r: f64| rate.omega(r);
    let approximation = match variant {
        BoundVariant::Theorem => lambda * approx_error_bound(rate.d, nn, mm, omega, ApproxVariant::Sharp18)?,
        BoundVariant::L1 => lambda * approx_error_bound(rate.d, nn, mm, omega, ApproxVariant::Coarse19)?,
        BoundVariant::Quadratic => {
            constants.lambda_quad.unwrap() * approx_error_bound(rate.d, nn, mm, omega, ApproxVariant::Quadratic384)?
        }
        BoundVariant::Manifold | BoundVariant::ManifoldQuadratic => {
            let dd = rate.d_target as f64;
            let r = (constants.c2.unwrap() + 1.0) * ((nn * mm) as f64).powf(-2.0 / dd);
            let term = (2.0 + 18.0 * dd.sqrt()) * omega(r);
            if quad {
                constants.lambda_quad.unwrap() * term * term
            } else {
                lambda * term
            }
        }
    };
    let total = (stochastic + approximation) * constants.calibration.unwrap_or(1.0);
    Ok(BoundTerms {
        stochastic,
        approximation,
        total,
    })
}

/// `clamp(⌈c·d_M·log(d/δ)/δ²⌉, d_M, d − 1)`.
pub fn d_delta(d_m: usize, d: usize, delta: f64, c: f64) -> Result<usize> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(format!("delta must lie in (0,1), got {delta}")));
    }
    if d_m == 0 || d_m >= d {
        return Err(Error::invalid(format!("need 1 <= d_M < d, got d_M={d_m}, d={d}")));
    }
    let raw = (c * d_m as f64 * (d as f64 / delta).ln() / (delta * delta)).ceil();
    let raw = if raw.is_finite() { raw.max(0.0) } else { f64::MAX };
    Ok((raw.min((d - 1) as f64) as usize).max(d_m))
}

/// Largest perturbation radius the manifold bound admits:
/// `C₂(NM)^{−2/d_δ}(1−δ) / {2(√(d/d_δ) + 1 − δ)}`.
pub fn admissible_rho(n: usize, m: usize, d: usize, d_delta: usize, delta: f64, c2: f64) -> Result<f64> {
    if n == 0 || m == 0 || d_delta == 0 || d_delta > d {
        return Err(Error::invalid("need N, M >= 1 and 1 <= d_delta <= d"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(format!("delta must lie in (0,1), got {delta}")));
    }
    let dd = d_delta as f64;
    Ok(c2 * ((n * m) as f64).powf(-2.0 / dd) * (1.0 - delta) / (2.0 * ((d as f64 / dd).sqrt() + 1.0 - delta)))
}

/// `REN(N₁, N₂) = log S₂ / log S₁` for sizes `S_i = n^{s_i}`: the ratio
/// `s₂/s₁` of the size exponents.
pub fn ren(s1: f64, s2: f64) -> Result<f64> {
    if !(s1 > 0.0 && s2 > 0.0) {
        return Err(Error::invalid(format!("size exponents must be positive, got {s1}, {s2}")));
    }
    Ok(s2 / s1)
}

/// Size exponents in `n_*` of the three corollary designs.
pub fn size_exponent(label: DesignLabel) -> Option<f64> {
    match label {
        DesignLabel::Dfw => Some(0.5),
        DesignLabel::Wfd => Some(1.0),
        DesignLabel::Daw => Some(0.75),
        _ => None,
    }
}

/// Order-of-magnitude sizes with their log factors:
/// `n_*^{1/2}/log n`, `n_*/log n`, `n_*^{3/4}/log² n`.
pub fn catalog_size(label: DesignLabel, n: f64, rate: &RateSpec) -> Option<f64> {
    let ns = n_star(n, rate);
    let l = n.ln();
    match label {
        DesignLabel::Dfw => Some(ns.sqrt() / l),
        DesignLabel::Wfd => Some(ns / l),
        DesignLabel::Daw => Some(ns.powf(0.75) / (l * l)),
        _ => None,
    }
}

/// `log S₂ / log S₁` using [`catalog_size`]; errors when a size is ≤ 1.
pub fn ren_finite(n: f64, rate: &RateSpec, first: DesignLabel, second: DesignLabel) -> Result<f64> {
    let s1 = catalog_size(first, n, rate).ok_or_else(|| Error::invalid(format!("{first} has no catalog size")))?;
    let s2 = catalog_size(second, n, rate).ok_or_else(|| Error::invalid(format!("{second} has no catalog size")))?;
    if s1 <= 1.0 || s2 <= 1.0 {
        return Err(Error::invalid(format!("sizes must exceed 1 (got {s1:.3}, {s2:.3}) at n={n}")));
    }
    Ok(s2.ln() / s1.ln())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RenRow {
    pub first: DesignLabel,
    pub second: DesignLabel,
    /// Ratio of leading size exponents.
    pub ren: f64,
    /// Log-size ratio with the log-n factors kept, when defined at this `n`.
    pub ren_at_n: Option<f64>,
}

/// REN of DAW against DFW and WFD, and of DFW against WFD.
pub fn ren_catalog(n: f64, rate: &RateSpec) -> Result<Vec<RenRow>> {
    check_n(n)?;
    rate.validate()?;
    use DesignLabel::*;
    [(Daw, Dfw), (Daw, Wfd), (Dfw, Wfd)]
        .into_iter()
        .map(|(a, b)| {
            Ok(RenRow {
                first: a,
                second: b,
                ren: ren(size_exponent(a).unwrap(), size_exponent(b).unwrap())?,
                ren_at_n: ren_finite(n, rate, a, b).ok(),
            })
        })
        .collect()
}

/// Random-probe lower bound on a modulus of continuity.
#[derive(Debug, Clone, PartialEq)]
pub struct ModulusEstimate {
    pub r: f64,
    /// Largest observed `|f(x) − f(y)|` over probe pairs with `‖x − y‖₂ ≤ r`.
    pub lower_bound: f64,
    /// Set for targets that are not uniformly continuous.
    pub warning: Option<String>,
}

fn discontinuity_warning(f: &TargetFn) -> Option<String> {
    (!f.is_continuous()).then(|| format!("{} is not uniformly continuous; the modulus does not vanish as r -> 0", f.name()))
}

/// One probe pair per draw: `x` uniform in the cube, `y = clip(x + r·s·u)`
/// with `u` a random unit direction and `s ~ U(0,1)`.
pub fn estimate_modulus(f: &TargetFn, r: f64, probes: usize, rng: &mut PrngStream) -> Result<ModulusEstimate> {
    Ok(estimate_modulus_schedule(f, &[r], probes, rng)?.remove(0))
}

/// Estimates along an ascending radius schedule. Radius `r_k` reuses every
/// probe pair from the smaller radii, so the estimates never decrease.
pub fn estimate_modulus_schedule(f: &TargetFn, radii: &[f64], probes: usize, rng: &mut PrngStream) -> Result<Vec<ModulusEstimate>> {
    if probes == 0 {
        return Err(Error::invalid("probes must be >= 1"));
    }
    if radii.is_empty() || radii.iter().any(|r| !(*r >= 0.0 && r.is_finite())) {
        return Err(Error::invalid("radii must be finite and >= 0"));
    }
    if radii.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::invalid("radii must be ascending"));
    }
    let d = f.dim();
    let warning = discontinuity_warning(f);
    let mut best = 0.0f64;
    let mut out = Vec::with_capacity(radii.len());
    let mut x = vec![0.0; d];
    let mut y = vec![0.0; d];
    let mut u = vec![0.0; d];
    for &r in radii {
        for _ in 0..probes {
            x.iter_mut().for_each(|v| *v = rng.uniform01());
            let norm = loop {
                u.iter_mut().for_each(|v| *v = rng.standard_normal());
                let n = u.iter().map(|v| v * v).sum::<f64>().sqrt();
                if n > 0.0 {
                    break n;
                }
            };
            let step = r * rng.uniform01() / norm;
            for ((yi, xi), ui) in y.iter_mut().zip(&x).zip(&u) {
                *yi = (xi + step * ui).clamp(0.0, 1.0);
            }
            best = best.max((f.eval_unchecked(&x) - f.eval_unchecked(&y)).abs());
        }
        out.push(ModulusEstimate {
            r,
            lower_bound: best,
            warning: warning.clone(),
        });
    }
    Ok(out)
}

impl FromStr for DesignLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "dfw" => DesignLabel::Dfw,
            "wfd" => DesignLabel::Wfd,
            "daw" => DesignLabel::Daw,
            "rectangleplain" | "rectangle" => DesignLabel::RectanglePlain,
            "rectanglequadratic" => DesignLabel::RectangleQuadratic,
            "shennm" | "shen" => DesignLabel::ShenNM,
            _ => return Err(Error::invalid(format!("unknown design `{s}`"))),
        })
    }
}
