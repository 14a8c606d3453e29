//! Parameter selection, utility bounds, Gibbs targets, and the private solver.
//!
//! All logarithms are natural. `L` below is `ln(1/(2δ))`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Error, Result};
use crate::geometry::{axpy, Domain, NormSpec, Shape};
use crate::losses::{LineRestriction, LossModel};
use crate::regularizers::Regularizer;
use crate::samplers::{self, LineFn, Potential, SamplerConfig, SamplerReport};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Erm,
    Sco,
    ScErm,
    ScSco,
}

impl Variant {
    pub fn is_strongly_convex(&self) -> bool {
        matches!(self, Self::ScErm | Self::ScSco)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Erm => "erm",
            Self::Sco => "sco",
            Self::ScErm => "sc-erm",
            Self::ScSco => "sc-sco",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Multiplier `c` on `G/n` for the Lipschitz constant of `F_D − F_D′` under a
/// one-sample swap. `Two` is the worst case for two `G`-Lipschitz losses;
/// `One` reproduces the constants as usually stated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum SensitivityFactor {
    One,
    #[default]
    Two,
}

impl SensitivityFactor {
    pub fn value(&self) -> f64 {
        match self {
            Self::One => 1.0,
            Self::Two => 2.0,
        }
    }
}

impl TryFrom<u8> for SensitivityFactor {
    type Error = String;
    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(Self::One),
            2 => Ok(Self::Two),
            _ => Err(format!("sensitivity factor must be 1 or 2, got {v}")),
        }
    }
}

impl From<SensitivityFactor> for u8 {
    fn from(c: SensitivityFactor) -> u8 {
        c.value() as u8
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MechanismParams {
    pub k: f64,
    pub mu: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub variant: Variant,
    pub sensitivity: SensitivityFactor,
    /// Strong convexity of the per-sample losses (strongly convex variants).
    pub mu_loss: Option<f64>,
}

/// `ln(1/(2δ))` after validating `δ ∈ (0, ½)`.
pub fn log_term(delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 0.5) {
        return invalid(format!("delta must lie in (0, 1/2), got {delta}"));
    }
    Ok((1.0 / (2.0 * delta)).ln())
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        invalid(format!("{name} must be positive and finite, got {v}"))
    }
}

fn counts(d: usize, n: usize) -> Result<()> {
    if d == 0 || n == 0 {
        return invalid(format!("d and n must be at least 1, got d={d}, n={n}"));
    }
    Ok(())
}

/// The regularization weight tied to `k`: `μ = 2(cG)²k·L/(n²ε²)`. Every
/// selector computes `μ` through this function so that the relation holds
/// exactly.
pub fn kmu_relation(cg: f64, k: f64, l: f64, n: usize, epsilon: f64) -> f64 {
    let n = n as f64;
    2.0 * cg * cg * k * l / (n * n * epsilon * epsilon)
}

/// Parameters for private ERM:
/// `k = √d·nε/(cG√(2ΘL))` with `μ` from [`kmu_relation`].
pub fn erm_params(
    g: f64,
    theta: f64,
    d: usize,
    n: usize,
    epsilon: f64,
    delta: f64,
    c: SensitivityFactor,
) -> Result<MechanismParams> {
    let l = log_term(delta)?;
    positive("G", g)?;
    positive("Theta", theta)?;
    positive("epsilon", epsilon)?;
    counts(d, n)?;
    let cg = c.value() * g;
    let k = (d as f64).sqrt() * n as f64 * epsilon / (cg * (2.0 * theta * l).sqrt());
    Ok(MechanismParams {
        k,
        mu: kmu_relation(cg, k, l, n, epsilon),
        epsilon,
        delta,
        variant: Variant::Erm,
        sensitivity: c,
        mu_loss: None,
    })
}

/// `G√Θ·√(8dL)/(nε)`.
pub fn erm_utility_bound(
    g: f64,
    theta: f64,
    d: usize,
    n: usize,
    epsilon: f64,
    delta: f64,
) -> Result<f64> {
    let l = log_term(delta)?;
    positive("G", g)?;
    positive("Theta", theta)?;
    positive("epsilon", epsilon)?;
    counts(d, n)?;
    Ok(g * theta.sqrt() * (8.0 * d as f64 * l).sqrt() / (n as f64 * epsilon))
}

/// Constants `(C₁, C₂)` of the SCO tradeoff `C₁k + (C₂ + d)/k`.
pub fn sco_constants(cg: f64, theta: f64, n: usize, epsilon: f64, l: f64) -> (f64, f64) {
    let nf = n as f64;
    let c1 = 2.0 * cg * cg * theta * l / (nf * nf * epsilon * epsilon);
    let c2 = nf * epsilon * epsilon / (2.0 * l);
    (c1, c2)
}

/// Parameters for private SCO: `k = √((d + C₂)/C₁)`.
pub fn sco_params(
    g: f64,
    theta: f64,
    d: usize,
    n: usize,
    epsilon: f64,
    delta: f64,
    c: SensitivityFactor,
) -> Result<MechanismParams> {
    let l = log_term(delta)?;
    positive("G", g)?;
    positive("Theta", theta)?;
    positive("epsilon", epsilon)?;
    counts(d, n)?;
    let cg = c.value() * g;
    let (c1, c2) = sco_constants(cg, theta, n, epsilon, l);
    let k = ((d as f64 + c2) / c1).sqrt();
    Ok(MechanismParams {
        k,
        mu: kmu_relation(cg, k, l, n, epsilon),
        epsilon,
        delta,
        variant: Variant::Sco,
        sensitivity: c,
        mu_loss: None,
    })
}

/// `G√Θ·(√(8dL)/(nε) + √(8/n))`.
pub fn sco_utility_bound(
    g: f64,
    theta: f64,
    d: usize,
    n: usize,
    epsilon: f64,
    delta: f64,
) -> Result<f64> {
    let erm = erm_utility_bound(g, theta, d, n, epsilon, delta)?;
    Ok(erm + g * theta.sqrt() * (8.0 / n as f64).sqrt())
}

/// Parameters for strongly convex losses without a regularizer:
/// `k = n²ε²μ_loss/(2(cG)²L)`, `μ = 0`.
pub fn sc_erm_params(
    g: f64,
    mu_loss: f64,
    n: usize,
    epsilon: f64,
    delta: f64,
    c: SensitivityFactor,
) -> Result<MechanismParams> {
    let l = log_term(delta)?;
    positive("G", g)?;
    positive("mu_loss", mu_loss)?;
    positive("epsilon", epsilon)?;
    counts(1, n)?;
    let cg = c.value() * g;
    let nf = n as f64;
    let k = nf * nf * epsilon * epsilon * mu_loss / (2.0 * cg * cg * l);
    Ok(MechanismParams {
        k,
        mu: 0.0,
        epsilon,
        delta,
        variant: Variant::ScErm,
        sensitivity: c,
        mu_loss: Some(mu_loss),
    })
}

/// Same `k` as [`sc_erm_params`], labelled for population risk.
pub fn sc_sco_params(
    g: f64,
    mu_loss: f64,
    n: usize,
    epsilon: f64,
    delta: f64,
    c: SensitivityFactor,
) -> Result<MechanismParams> {
    let mut p = sc_erm_params(g, mu_loss, n, epsilon, delta, c)?;
    p.variant = Variant::ScSco;
    Ok(p)
}

/// `2dG²L/(n²ε²μ_loss)`.
pub fn sc_erm_utility_bound(
    g: f64,
    mu_loss: f64,
    d: usize,
    n: usize,
    epsilon: f64,
    delta: f64,
) -> Result<f64> {
    let l = log_term(delta)?;
    positive("G", g)?;
    positive("mu_loss", mu_loss)?;
    positive("epsilon", epsilon)?;
    counts(d, n)?;
    let nf = n as f64;
    Ok(2.0 * d as f64 * g * g * l / (nf * nf * epsilon * epsilon * mu_loss))
}

/// `G²/(nμ_loss)·(1 + 2dL/(nε²))`.
pub fn sc_sco_utility_bound(
    g: f64,
    mu_loss: f64,
    d: usize,
    n: usize,
    epsilon: f64,
    delta: f64,
) -> Result<f64> {
    let l = log_term(delta)?;
    positive("G", g)?;
    positive("mu_loss", mu_loss)?;
    positive("epsilon", epsilon)?;
    counts(d, n)?;
    let nf = n as f64;
    Ok(g * g / (nf * mu_loss) * (1.0 + 2.0 * d as f64 * l / (nf * epsilon * epsilon)))
}

/// Closed-form ERM and SCO guarantees for the geometry presets, stated in
/// terms of the diameter `D` of the domain in the problem norm:
///
/// - `ℓp`, `1 < p ≤ 2`: `2GD√(dL)/(nε√(p−1))`
/// - `ℓ1`: `6GD√(ln d)·√(dL)/(nε)`
/// - `ℓp`, `p ≥ 2`: `2GD·d^{1−1/p}√L/(nε)`
///
/// Schatten-`p` replaces `d` by `d₁d₂` in the dimension term and uses `d₂` in
/// the conversion factors. Returns `(erm, sco)`.
pub fn corollary_bounds(
    norm: &NormSpec,
    g: f64,
    diameter: f64,
    n: usize,
    epsilon: f64,
    delta: f64,
) -> Result<(f64, f64)> {
    let l = log_term(delta)?;
    positive("G", g)?;
    positive("diameter", diameter)?;
    positive("epsilon", epsilon)?;
    counts(norm.dim(), n)?;
    let p = norm.p();
    let dim = norm.dim() as f64;
    let m = norm.spectral_dim() as f64;
    let nf = n as f64;
    let gd = g * diameter;
    let private = (dim * l).sqrt() / (nf * epsilon);
    if p > 1.0 && p <= 2.0 {
        let s = (p - 1.0).sqrt();
        let erm = 2.0 * gd * private / s;
        Ok((erm, erm + 2.0 * gd / (nf * (p - 1.0)).sqrt()))
    } else if p == 1.0 {
        if m <= 2.0 {
            // ln d₂ is at most ln 2 here; fall back to the preset's Θ.
            let theta = if m == 1.0 {
                0.5
            } else {
                std::f64::consts::E.powi(2) / 2.0
            } * diameter
                * diameter;
            let erm = erm_utility_bound(g, theta, norm.dim(), n, epsilon, delta)?;
            let sco = sco_utility_bound(g, theta, norm.dim(), n, epsilon, delta)?;
            return Ok((erm, sco));
        }
        let f = 6.0 * gd * m.ln().sqrt();
        Ok((f * private, f * (1.0 / nf.sqrt() + private)))
    } else {
        let e = if p.is_infinite() { 0.5 } else { 0.5 - 1.0 / p };
        let conv = m.powf(e);
        let erm = 2.0 * gd * conv * private;
        Ok((erm, erm + 2.0 * gd * conv / nf.sqrt()))
    }
}

/// Splits a total `δ` between the mechanism and the sampler's TV error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    pub epsilon: f64,
    pub delta_total: f64,
    /// Fraction of `δ` reserved for sampling error; default ½.
    pub tv_fraction: f64,
}

impl PrivacyBudget {
    pub fn new(epsilon: f64, delta_total: f64) -> Result<Self> {
        Self::with_split(epsilon, delta_total, 0.5)
    }

    pub fn with_split(epsilon: f64, delta_total: f64, tv_fraction: f64) -> Result<Self> {
        positive("epsilon", epsilon)?;
        if !(delta_total > 0.0 && delta_total < 1.0) {
            return invalid(format!("total delta must lie in (0, 1), got {delta_total}"));
        }
        if !(tv_fraction >= 0.0 && tv_fraction < 1.0) {
            return invalid(format!("tv_fraction must lie in [0, 1), got {tv_fraction}"));
        }
        let b = Self {
            epsilon,
            delta_total,
            tv_fraction,
        };
        log_term(b.delta_mech())?;
        Ok(b)
    }

    pub fn delta_mech(&self) -> f64 {
        self.delta_total * (1.0 - self.tv_fraction)
    }

    pub fn delta_tv(&self) -> f64 {
        self.delta_total * self.tv_fraction
    }
}

/// `k·(F_D + μ·r)`, or `k·F_D` when no regularizer is attached.
pub struct RegularizedRisk {
    pub model: Arc<LossModel>,
    pub regularizer: Option<Regularizer>,
    pub k: f64,
    pub mu: f64,
}

impl Potential for RegularizedRisk {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let f = self.model.risk_unchecked(x);
        let r = match &self.regularizer {
            Some(reg) if self.mu != 0.0 => self.mu * reg.evaluate(x),
            _ => 0.0,
        };
        self.k * (f + r)
    }

    fn gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        let mut g = self.model.subgradient(x).ok()?;
        if let Some(reg) = &self.regularizer {
            if self.mu != 0.0 {
                let gr = reg.gradient(x);
                g.iter_mut().zip(&gr).for_each(|(a, b)| *a += self.mu * b);
            }
        }
        g.iter_mut().for_each(|v| *v *= self.k);
        Some(g)
    }

    fn line<'a>(&'a self, x: &[f64], u: &[f64]) -> Box<dyn LineFn + 'a> {
        Box::new(RiskLine {
            pot: self,
            restriction: self.model.restrict(x, u),
            x: x.to_vec(),
            u: u.to_vec(),
        })
    }
}

struct RiskLine<'a> {
    pot: &'a RegularizedRisk,
    restriction: LineRestriction,
    x: Vec<f64>,
    u: Vec<f64>,
}

impl LineFn for RiskLine<'_> {
    fn value(&self, t: f64) -> f64 {
        let f = self.restriction.value(t);
        let r = match &self.pot.regularizer {
            Some(reg) if self.pot.mu != 0.0 => {
                self.pot.mu * reg.evaluate(&axpy(&self.x, t, &self.u))
            }
            _ => 0.0,
        };
        self.pot.k * (f + r)
    }

    fn value_and_slope(&self, t: f64) -> Option<(f64, f64)> {
        let (f, df) = self.restriction.value_and_slope(t);
        let (r, dr) = match &self.pot.regularizer {
            Some(reg) if self.pot.mu != 0.0 => {
                let (r, dr) = reg.along_line(&self.x, &self.u, t);
                (self.pot.mu * r, self.pot.mu * dr)
            }
            _ => (0.0, 0.0),
        };
        Some((self.pot.k * (f + r), self.pot.k * (df + dr)))
    }
}

type ValueFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
type GradFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;

/// A potential given by closures.
#[derive(Clone)]
pub struct FnPotential {
    dim: usize,
    value: Arc<ValueFn>,
    gradient: Option<Arc<GradFn>>,
}

impl FnPotential {
    pub fn new(dim: usize, value: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            dim,
            value: Arc::new(value),
            gradient: None,
        }
    }

    pub fn with_gradient(
        mut self,
        gradient: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        self.gradient = Some(Arc::new(gradient));
        self
    }
}

impl Potential for FnPotential {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }

    fn gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        self.gradient.as_ref().map(|g| g(x))
    }
}

/// The density `∝ exp(−φ)` on a compact convex domain, as consumed by the
/// samplers.
#[derive(Clone)]
pub struct GibbsTarget {
    pub potential: Arc<dyn Potential>,
    pub domain: Domain,
    /// Strong convexity of `φ` in the domain's norm, if known.
    pub strong_convexity: Option<f64>,
    /// Lipschitz bound for `φ_D − φ_D′` over neighboring datasets, if known.
    pub lipschitz_of_difference_bound: Option<f64>,
}

impl fmt::Debug for GibbsTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GibbsTarget")
            .field("dim", &self.potential.dim())
            .field("domain", &self.domain)
            .field("strong_convexity", &self.strong_convexity)
            .field(
                "lipschitz_of_difference_bound",
                &self.lipschitz_of_difference_bound,
            )
            .finish()
    }
}

impl GibbsTarget {
    pub fn new(potential: Arc<dyn Potential>, domain: Domain) -> Result<Self> {
        check_dim(domain.dim(), potential.dim())?;
        Ok(Self {
            potential,
            domain,
            strong_convexity: None,
            lipschitz_of_difference_bound: None,
        })
    }

    pub fn with_strong_convexity(mut self, mu: f64) -> Self {
        self.strong_convexity = Some(mu);
        self
    }
}

/// Assembles `ν ∝ exp(−k(F_D + μr))` (or `exp(−kF_D)` for the strongly convex
/// variants, whose strong convexity `k·μ_loss` is the caller's claim about the
/// losses).
pub fn build_target(
    model: Arc<LossModel>,
    reg: Option<Regularizer>,
    domain: Domain,
    params: &MechanismParams,
) -> Result<GibbsTarget> {
    check_dim(domain.dim(), model.dim())?;
    if domain.geometry().shape() != model.norm().shape() {
        return invalid("domain and loss model use different shapes");
    }
    let sc = params.variant.is_strongly_convex();
    let (reg, strong_convexity) = if sc {
        let mu_loss = params
            .mu_loss
            .ok_or_else(|| Error::InvalidInput("strongly convex variant needs mu_loss".into()))?;
        (None, params.k * mu_loss)
    } else {
        let reg = reg.ok_or_else(|| Error::InvalidInput("variant needs a regularizer".into()))?;
        check_dim(domain.dim(), reg.dim())?;
        let sc = params.k * params.mu * reg.sc_constant;
        (Some(reg), sc)
    };
    let lip = params.sensitivity.value() * params.k * model.lipschitz() / model.n() as f64;
    let mu = if sc { 0.0 } else { params.mu };
    let potential = RegularizedRisk {
        model,
        regularizer: reg,
        k: params.k,
        mu,
    };
    Ok(GibbsTarget {
        potential: Arc::new(potential),
        domain,
        strong_convexity: Some(strong_convexity),
        lipschitz_of_difference_bound: Some(lip),
    })
}

/// Outcome of one mechanism invocation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrivateReport {
    pub sampler: SamplerReport,
    /// Expected excess risk guaranteed for the variant, with `G` replaced by
    /// `cG`.
    pub utility_bound: f64,
    pub epsilon: f64,
    pub delta_mech: f64,
    pub delta_tv: f64,
    pub delta_total: f64,
}

/// Releases one draw from the mechanism's Gibbs density. The chain starts at
/// the domain center and the last retained state is returned. `delta_tv` is
/// the sampling error allowance claimed for the sampler configuration; it is
/// added to the mechanism's `δ` in the report.
pub fn solve_private(
    model: Arc<LossModel>,
    reg: Option<Regularizer>,
    domain: Domain,
    params: &MechanismParams,
    config: &SamplerConfig,
    delta_tv: f64,
) -> Result<(Vec<f64>, PrivateReport)> {
    if !(delta_tv >= 0.0) {
        return invalid("delta_tv must be nonnegative");
    }
    let d = model.dim();
    let n = model.n();
    let cg = params.sensitivity.value() * model.lipschitz();
    let theta = reg.as_ref().map(|r| r.theta);
    let target = build_target(model, reg, domain, params)?;
    let x0 = target.domain.center();
    let (draws, report) = samplers::sample(&target, config, &x0)?;
    let x = draws
        .last()
        .cloned()
        .expect("samplers return n_samples >= 1 draws");
    let utility_bound = if cg > 0.0 {
        match params.variant {
            Variant::Erm => {
                erm_utility_bound(cg, theta.unwrap_or(0.0), d, n, params.epsilon, params.delta)?
            }
            Variant::Sco => {
                sco_utility_bound(cg, theta.unwrap_or(0.0), d, n, params.epsilon, params.delta)?
            }
            Variant::ScErm => sc_erm_utility_bound(
                cg,
                params.mu_loss.unwrap_or(0.0),
                d,
                n,
                params.epsilon,
                params.delta,
            )?,
            Variant::ScSco => sc_sco_utility_bound(
                cg,
                params.mu_loss.unwrap_or(0.0),
                d,
                n,
                params.epsilon,
                params.delta,
            )?,
        }
    } else {
        0.0
    };
    Ok((
        x,
        PrivateReport {
            sampler: report,
            utility_bound,
            epsilon: params.epsilon,
            delta_mech: params.delta,
            delta_tv,
            delta_total: params.delta + delta_tv,
        },
    ))
}

/// Default domain dimension label for reporting.
pub fn shape_label(norm: &NormSpec) -> String {
    match norm.shape() {
        Shape::Vector { d } => format!("{d}"),
        Shape::Matrix { rows, cols } => format!("{rows}x{cols}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::Sample;
    use crate::quadrature::LogConcave1d;
    use crate::regularizers::regularizer_for;

    const HALF_OVER_E: f64 = 0.5 / std::f64::consts::E;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs().max(1e-300)
    }

    #[test]
    fn erm_reference_values() {
        let p = erm_params(1.0, 0.5, 4, 100, 1.0, HALF_OVER_E, SensitivityFactor::One).unwrap();
        assert!(close(p.k, 200.0, 1e-12), "{}", p.k);
        assert!(close(p.mu, 0.04, 1e-12), "{}", p.mu);
        let p = erm_params(1.0, 0.5, 4, 100, 1.0, HALF_OVER_E, SensitivityFactor::Two).unwrap();
        assert!(close(p.k, 100.0, 1e-12) && close(p.mu, 0.08, 1e-12));
        // Closed form μ = cG√(2dL)/(√Θ·nε).
        let (g, theta, d, n, e, delta) = (0.7, 3.0, 9, 250, 0.3, 1e-5);
        let p = erm_params(g, theta, d, n, e, delta, SensitivityFactor::Two).unwrap();
        let l = (1.0 / (2.0 * delta)).ln();
        let mu = 2.0 * g * (2.0 * d as f64 * l).sqrt() / (theta.sqrt() * n as f64 * e);
        assert!(close(p.mu, mu, 1e-13));
    }

    #[test]
    fn sco_reference_values() {
        let p = sco_params(1.0, 0.5, 4, 100, 1.0, HALF_OVER_E, SensitivityFactor::One).unwrap();
        assert!(close(p.k, 540_000f64.sqrt(), 1e-12));
        assert!(close(p.k, 734.846_922_834_953_4, 1e-12));
        assert!(close(p.mu, 0.146_969_384_566_990_7, 1e-12));
        let (c1, c2) = sco_constants(1.0, 0.5, 100, 1.0, 1.0);
        assert!(close(c1, 1e-4, 1e-14) && close(c2, 50.0, 1e-14));
    }

    #[test]
    fn strongly_convex_reference_values() {
        let p = sc_erm_params(1.0, 1.0, 100, 1.0, HALF_OVER_E, SensitivityFactor::One).unwrap();
        assert!(close(p.k, 5000.0, 1e-12) && p.mu == 0.0);
        let q = sc_sco_params(1.0, 1.0, 100, 1.0, HALF_OVER_E, SensitivityFactor::One).unwrap();
        assert_eq!(q.k, p.k);
        assert_eq!(q.variant, Variant::ScSco);
        let p = sc_erm_params(1.0, 1.0, 100, 1.0, HALF_OVER_E, SensitivityFactor::Two).unwrap();
        assert!(close(p.k, 1250.0, 1e-12));
    }

    #[test]
    fn utility_bound_reference_values() {
        let d = HALF_OVER_E;
        assert!(close(
            erm_utility_bound(1.0, 0.5, 4, 100, 1.0, d).unwrap(),
            0.04,
            1e-12
        ));
        assert!(close(
            sco_utility_bound(1.0, 0.5, 4, 100, 1.0, d).unwrap(),
            0.24,
            1e-12
        ));
        assert!(close(
            sc_erm_utility_bound(1.0, 1.0, 4, 100, 1.0, d).unwrap(),
            8e-4,
            1e-12
        ));
        assert!(close(
            sc_sco_utility_bound(1.0, 1.0, 4, 100, 1.0, d).unwrap(),
            0.0108,
            1e-12
        ));
    }

    #[test]
    fn erm_bound_is_mu_theta_plus_d_over_k() {
        let (g, theta, d, n, e, delta) = (1.3, 0.8, 6, 400, 0.7, 1e-6);
        let p = erm_params(g, theta, d, n, e, delta, SensitivityFactor::One).unwrap();
        let b = erm_utility_bound(g, theta, d, n, e, delta).unwrap();
        assert!(close(p.mu * theta + d as f64 / p.k, b, 1e-12));
    }

    #[test]
    fn privacy_shift_matches_epsilon_over_root_2l() {
        for c in [SensitivityFactor::One, SensitivityFactor::Two] {
            let (g, n, e, delta) = (2.0, 50, 1.5, 1e-4);
            let l = log_term(delta).unwrap();
            let p = sco_params(g, 2.0, 3, n, e, delta, c).unwrap();
            let t = c.value() * g * p.k.sqrt() / (n as f64 * p.mu.sqrt());
            assert!(close(t, e / (2.0 * l).sqrt(), 1e-12));
        }
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        let c = SensitivityFactor::Two;
        assert!(erm_params(1.0, 1.0, 2, 10, 1.0, 0.5, c).is_err());
        assert!(erm_params(1.0, 1.0, 2, 10, 1.0, 0.0, c).is_err());
        assert!(erm_params(1.0, 1.0, 2, 10, 0.0, 0.1, c).is_err());
        assert!(erm_params(0.0, 1.0, 2, 10, 1.0, 0.1, c).is_err());
        assert!(sco_params(1.0, 1.0, 0, 10, 1.0, 0.1, c).is_err());
        assert!(sc_erm_params(1.0, -1.0, 10, 1.0, 0.1, c).is_err());
        assert!(serde_json::from_str::<SensitivityFactor>("3").is_err());
        assert_eq!(
            serde_json::from_str::<SensitivityFactor>("1").unwrap(),
            SensitivityFactor::One
        );
        assert_eq!(serde_json::to_string(&SensitivityFactor::Two).unwrap(), "2");
    }

    #[test]
    fn budget_split() {
        let b = PrivacyBudget::new(1.0, 1e-6).unwrap();
        assert_eq!(b.delta_mech(), 5e-7);
        assert_eq!(b.delta_tv(), 5e-7);
        assert!(PrivacyBudget::new(1.0, 1.0).is_err());
        assert!(PrivacyBudget::with_split(1.0, 0.9, 0.1).is_err());
    }

    #[test]
    fn corollary_bounds_by_regime() {
        let d: f64 = 1e-6;
        let l = (1.0 / (2.0 * d)).ln();
        let n15 = NormSpec::lp(1.5, 8).unwrap();
        let (erm, sco) = corollary_bounds(&n15, 1.0, 2.0, 500, 1.0, d).unwrap();
        let want = 2.0 * 2.0 * (8.0 * l).sqrt() / (500.0 * 0.5f64.sqrt());
        assert!(close(erm, want, 1e-13));
        assert!(close(sco - erm, 4.0 / (500.0 * 0.5f64).sqrt(), 1e-13));
        // Halving ε doubles the ERM bound exactly.
        let (erm2, _) = corollary_bounds(&n15, 1.0, 2.0, 500, 0.5, d).unwrap();
        assert!(close(erm2, 2.0 * erm, 1e-14));

        let n1 = NormSpec::lp(1.0, 20).unwrap();
        let (erm, _) = corollary_bounds(&n1, 1.0, 2.0, 100, 1.0, d).unwrap();
        assert!(close(
            erm,
            12.0 * 20f64.ln().sqrt() * (20.0 * l).sqrt() / 100.0,
            1e-13
        ));

        let n4 = NormSpec::lp(4.0, 16).unwrap();
        let (erm, _) = corollary_bounds(&n4, 1.0, 1.0, 100, 1.0, d).unwrap();
        assert!(close(erm, 2.0 * 16f64.powf(0.75) * l.sqrt() / 100.0, 1e-13));

        let s = NormSpec::schatten(1.5, 4, 3).unwrap();
        let (erm, _) = corollary_bounds(&s, 1.0, 1.0, 100, 1.0, d).unwrap();
        assert!(close(
            erm,
            2.0 * (12.0 * l).sqrt() / (100.0 * 0.5f64.sqrt()),
            1e-13
        ));
    }

    fn toy_model() -> (Arc<LossModel>, Domain, Regularizer) {
        let norm = NormSpec::lp(2.0, 2).unwrap();
        let samples = vec![
            Sample::new(vec![1.0, 0.0], 0.2),
            Sample::new(vec![0.0, 1.0], -0.1),
            Sample::new(vec![0.6, -0.8], 0.0),
        ];
        let model = Arc::new(LossModel::new(crate::LossFamily::AbsLinear, samples, norm).unwrap());
        let dom = Domain::ball(norm, vec![0.0, 0.0], 1.0).unwrap();
        let reg = regularizer_for(&dom, &[0.0, 0.0]).unwrap();
        (model, dom, reg)
    }

    #[test]
    fn target_constants_and_line_restriction() {
        let (model, dom, reg) = toy_model();
        let p = erm_params(
            model.lipschitz(),
            reg.theta,
            2,
            3,
            1.0,
            1e-3,
            SensitivityFactor::Two,
        )
        .unwrap();
        let t = build_target(model.clone(), Some(reg.clone()), dom, &p).unwrap();
        assert!(close(
            t.strong_convexity.unwrap(),
            p.k * p.mu * reg.sc_constant,
            1e-15
        ));
        assert!(close(
            t.lipschitz_of_difference_bound.unwrap(),
            2.0 * p.k * model.lipschitz() / 3.0,
            1e-15
        ));
        let x = [0.1, -0.3];
        let u = [0.6, 0.8];
        let line = t.potential.line(&x, &u);
        for s in [-0.4, 0.0, 0.25] {
            let y = [x[0] + s * u[0], x[1] + s * u[1]];
            let direct = t.potential.value(&y);
            assert!(close(line.value(s), direct, 1e-12));
            assert!(close(line.value_and_slope(s).unwrap().0, direct, 1e-12));
        }
        assert!(build_target(model, None, t.domain.clone(), &p).is_err());
    }

    #[test]
    fn solve_private_reports_budget_and_bound() {
        let (model, dom, reg) = toy_model();
        let p = erm_params(
            model.lipschitz(),
            reg.theta,
            2,
            3,
            1.0,
            5e-4,
            SensitivityFactor::Two,
        )
        .unwrap();
        let mut cfg = SamplerConfig::new(crate::SamplerMethod::HitAndRun, 1, 7);
        cfg.burn_in = Some(200);
        let (x, r) = solve_private(
            model.clone(),
            Some(reg.clone()),
            dom.clone(),
            &p,
            &cfg,
            5e-4,
        )
        .unwrap();
        assert!(dom.contains(&x));
        assert_eq!(r.delta_total, 1e-3);
        let want = erm_utility_bound(2.0 * model.lipschitz(), reg.theta, 2, 3, 1.0, 5e-4).unwrap();
        assert!(close(r.utility_bound, want, 1e-15));
        let (y, _) = solve_private(model, Some(reg), dom, &p, &cfg, 5e-4).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn one_dimensional_gibbs_risk_within_regularized_bound() {
        let norm = NormSpec::lp(2.0, 1).unwrap();
        let samples = vec![
            Sample::new(vec![1.0], 0.3),
            Sample::new(vec![-0.5], 0.1),
            Sample::new(vec![0.8], -0.4),
        ];
        let model = LossModel::new(crate::LossFamily::AbsLinear, samples, norm).unwrap();
        let dom = Domain::interval(-1.0, 1.0).unwrap();
        let reg = regularizer_for(&dom, &[0.0]).unwrap();
        let p = erm_params(
            model.lipschitz(),
            reg.theta,
            1,
            3,
            1.0,
            1e-3,
            SensitivityFactor::Two,
        )
        .unwrap();
        let phi = |x: f64| p.k * (model.risk_unchecked(&[x]) + p.mu * reg.evaluate(&[x]));
        let dens = LogConcave1d::new(phi, -1.0, 1.0, 1e-12).unwrap();
        let mean_f = dens.expectation(|x| model.risk_unchecked(&[x])).unwrap();
        let (_, fmin) =
            crate::quadrature::minimize_convex_1d(|x| model.risk_unchecked(&[x]), -1.0, 1.0, 4096);
        assert!(mean_f - fmin <= p.mu * reg.theta + 1.0 / p.k + 1e-10);
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    fn inputs() -> impl Strategy<Value = (f64, f64, usize, usize, f64, f64, bool)> {
        (
            0.01f64..100.0,
            0.01f64..100.0,
            1usize..2000,
            1usize..100_000,
            0.01f64..10.0,
            -12f64..-0.31,
            any::<bool>(),
        )
            .prop_map(|(g, t, d, n, e, ld, c)| (g, t, d, n, e, 10f64.powf(ld), c))
    }

    fn factor(c: bool) -> SensitivityFactor {
        if c {
            SensitivityFactor::Two
        } else {
            SensitivityFactor::One
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn kmu_relation_exact((g, theta, d, n, e, delta, c) in inputs()) {
            let l = log_term(delta).unwrap();
            let c = factor(c);
            for p in [erm_params(g, theta, d, n, e, delta, c).unwrap(), sco_params(g, theta, d, n, e, delta, c).unwrap()] {
                let want = kmu_relation(c.value() * g, p.k, l, n, e);
                prop_assert!((p.mu - want).abs() <= f64::EPSILON * want);
            }
        }

        #[test]
        fn sco_k_minimizes_tradeoff((g, theta, d, n, e, delta, c) in inputs()) {
            let c = factor(c);
            let l = log_term(delta).unwrap();
            let p = sco_params(g, theta, d, n, e, delta, c).unwrap();
            let (c1, c2) = sco_constants(c.value() * g, theta, n, e, l);
            let obj = |k: f64| c1 * k + (c2 + d as f64) / k;
            let at = obj(p.k);
            prop_assert!(obj(p.k * (1.0 + 1e-3)) >= at * (1.0 - 1e-14));
            prop_assert!(obj(p.k * (1.0 - 1e-3)) >= at * (1.0 - 1e-14));
        }

        #[test]
        fn bounds_monotone((g, theta, d, n, e, delta, _c) in inputs()) {
            let b = erm_utility_bound(g, theta, d, n, e, delta).unwrap();
            prop_assert!(erm_utility_bound(g, theta, d + 1, n, e, delta).unwrap() >= b);
            prop_assert!(erm_utility_bound(g, theta, d, n + 1, e, delta).unwrap() <= b);
            prop_assert!(erm_utility_bound(g, theta, d, n, e * 1.1, delta).unwrap() <= b);
            prop_assert!(erm_utility_bound(g, theta, d, n, e, delta * 0.5).unwrap() >= b);
            let s = sco_utility_bound(g, theta, d, n, e, delta).unwrap();
            prop_assert!(s >= b);
            prop_assert!(sco_utility_bound(g, theta, d, n + 1, e, delta).unwrap() <= s);
            let sc = sc_erm_utility_bound(g, theta, d, n, e, delta).unwrap();
            prop_assert!(sc_erm_utility_bound(g, theta, d, n + 1, e, delta).unwrap() <= sc);
            let scs = sc_sco_utility_bound(g, theta, d, n, e, delta).unwrap();
            prop_assert!(sc_sco_utility_bound(g, theta, d, n + 1, e, delta).unwrap() <= scs);
        }
    }
}
