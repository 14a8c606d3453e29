//! Numerical checks of privacy curves, Gaussian domination for strongly
//! logconcave pairs, Gibbs risk, the `k`–`μ` relation, and concentration of
//! Lipschitz functions.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{Domain, NormSpec};
use crate::losses::{LossFamily, LossModel, Sample};
use crate::mechanism::{
    self, erm_params, kmu_relation, log_term, MechanismParams, SensitivityFactor,
};
use crate::quadrature::{integrate, minimize_convex_1d, LogConcave1d, MODE_GRID};
use crate::regularizers::{regularizer_for, Regularizer};
use crate::rng::{derive_seed, seeded};
use crate::samplers::{self, effective_sample_size, SamplerConfig};
use crate::special::ln_norm_cdf;
use crate::GibbsTarget;

/// Additive slack for inequality audits.
pub const AUDIT_SLACK: f64 = 1e-8;
/// Grid used to bracket the boundary of the optimal set.
pub const ROOT_GRID: usize = 4096;
/// Sign changes beyond this count are treated as a pathological input.
pub const MAX_SIGN_CHANGES: usize = 64;
/// Log-ratio values within this distance of `ε` are treated as on the boundary.
const RATIO_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrivacyCurvePoint {
    pub epsilon: f64,
    pub delta: f64,
}

/// `δ(N(0,1) ‖ N(t,1))(ε) = Φ(t/2 − ε/t) − e^ε·Φ(−t/2 − ε/t)`, evaluated in
/// log space. Symmetric in the sign of `t`; zero at `t = 0`.
pub fn gaussian_curve(t: f64, epsilon: f64) -> f64 {
    let t = t.abs();
    if t == 0.0 {
        return 0.0;
    }
    let la = ln_norm_cdf(t / 2.0 - epsilon / t);
    let lb = epsilon + ln_norm_cdf(-t / 2.0 - epsilon / t);
    if !(la > lb) {
        return 0.0;
    }
    (la.exp() * -(lb - la).exp_m1()).clamp(0.0, 1.0)
}

/// Largest `t` admitted by the standard sufficient condition for
/// `gaussian_curve(t, ε) ≤ δ`: `√(2L + 2ε) − √(2L)` with `L = ln(1/(2δ))`.
pub fn admissible_shift(delta: f64, epsilon: f64) -> Result<f64> {
    let l = log_term(delta)?;
    if !(epsilon >= 0.0) {
        return invalid("epsilon must be nonnegative");
    }
    Ok((2.0 * l + 2.0 * epsilon).sqrt() - (2.0 * l).sqrt())
}

/// Privacy curve of two 1D densities `p ∝ exp(−P)`, `q ∝ exp(−Q)` on `[a, b]`
/// with convex `P`, `Q`. Both are normalized once; [`delta`](Self::delta)
/// then evaluates `δ(p ‖ q)(ε)` for any `ε`.
pub struct PrivacyCurve1d<P, Q> {
    p: LogConcave1d<P>,
    q: LogConcave1d<Q>,
    a: f64,
    b: f64,
    tol: f64,
}

impl<P: Fn(f64) -> f64, Q: Fn(f64) -> f64> PrivacyCurve1d<P, Q> {
    pub fn new(p_neg_log: P, q_neg_log: Q, a: f64, b: f64, tol: f64) -> Result<Self> {
        let p = LogConcave1d::new(p_neg_log, a, b, tol)?;
        let q = LogConcave1d::new(q_neg_log, a, b, tol)?;
        Ok(Self { p, q, a, b, tol })
    }

    /// `log q(x) − log p(x)`.
    fn log_ratio(&self, x: f64) -> f64 {
        (self.p.phi_value(x) + self.p.log_normalizer())
            - (self.q.phi_value(x) + self.q.log_normalizer())
    }

    /// `sup_S Q(S) − e^ε P(S)`, attained on `S* = {log q − log p > ε}`.
    pub fn delta(&self, epsilon: f64) -> Result<f64> {
        if !(epsilon >= 0.0) {
            return invalid(format!("epsilon must be nonnegative, got {epsilon}"));
        }
        let h = |x: f64| self.log_ratio(x) - epsilon - RATIO_FLOOR;
        let (a, b) = (self.a, self.b);
        let step = (b - a) / ROOT_GRID as f64;
        let mut prev_x = a;
        let mut prev_pos = h(a) > 0.0;
        let mut start = if prev_pos { Some(a) } else { None };
        let mut sets = Vec::new();
        let mut changes = 0;
        for i in 1..=ROOT_GRID {
            let x = if i == ROOT_GRID {
                b
            } else {
                a + step * i as f64
            };
            let pos = h(x) > 0.0;
            if pos != prev_pos {
                changes += 1;
                if changes > MAX_SIGN_CHANGES {
                    return Err(Error::RootFinding(format!(
                        "log-likelihood ratio changes sign more than {MAX_SIGN_CHANGES} times"
                    )));
                }
                let r = bisect(&h, prev_x, x, prev_pos);
                if pos {
                    start = Some(r);
                } else if let Some(s) = start.take() {
                    sets.push((s, r));
                }
            }
            prev_x = x;
            prev_pos = pos;
        }
        if let Some(s) = start {
            sets.push((s, b));
        }
        let (qlo, qhi) = self.q.support();
        let mode = self.q.mode();
        let lz = self.q.log_normalizer();
        let integrand = |x: f64| {
            let hx = self.log_ratio(x) - epsilon;
            if hx <= 0.0 {
                return 0.0;
            }
            (-self.q.phi_value(x) - lz).exp() * -(-hx).exp_m1()
        };
        let mut total = 0.0;
        for (s, e) in sets {
            let (s, e) = (s.max(qlo), e.min(qhi));
            if e <= s {
                continue;
            }
            let pieces: &[(f64, f64)] = if mode > s && mode < e {
                &[(s, mode), (mode, e)]
            } else {
                &[(s, e)]
            };
            for &(u, v) in pieces {
                total += integrate(integrand, u, v, self.tol * 1e-3, self.tol)?.value;
            }
        }
        Ok(total.clamp(0.0, 1.0))
    }

    pub fn curve(&self, epsilons: &[f64]) -> Result<Vec<PrivacyCurvePoint>> {
        epsilons
            .iter()
            .map(|&e| {
                Ok(PrivacyCurvePoint {
                    epsilon: e,
                    delta: self.delta(e)?,
                })
            })
            .collect()
    }
}

/// Root of `h` in `[lo, hi]` to `1e−12`, where `h(lo) > 0` iff `lo_pos`.
fn bisect<H: Fn(f64) -> f64>(h: &H, mut lo: f64, mut hi: f64, lo_pos: bool) -> f64 {
    while hi - lo > 1e-12 {
        let m = 0.5 * (lo + hi);
        if m <= lo || m >= hi {
            break;
        }
        if (h(m) > 0.0) == lo_pos {
            lo = m;
        } else {
            hi = m;
        }
    }
    0.5 * (lo + hi)
}

/// `δ(p ‖ q)(ε)` for `p ∝ exp(−P)`, `q ∝ exp(−Q)` on `[a, b]`.
pub fn privacy_curve_1d<P: Fn(f64) -> f64, Q: Fn(f64) -> f64>(
    p_neg_log: P,
    q_neg_log: Q,
    a: f64,
    b: f64,
    epsilon: f64,
    tol: f64,
) -> Result<f64> {
    PrivacyCurve1d::new(p_neg_log, q_neg_log, a, b, tol)?.delta(epsilon)
}

/// One knot of a [`PiecewiseQuadratic`]:
/// `c·(x−κ)₊² + e·(κ−x)₊² + h·|x−κ|` with `c, e, h ≥ 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Knot {
    pub at: f64,
    pub right: f64,
    pub left: f64,
    pub abs: f64,
}

/// `μ(x − m)²/2 + Σ knots`: convex and `μ`-strongly convex.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseQuadratic {
    pub mu: f64,
    pub center: f64,
    pub knots: Vec<Knot>,
}

impl PiecewiseQuadratic {
    pub fn value(&self, x: f64) -> f64 {
        let mut v = 0.5 * self.mu * (x - self.center).powi(2);
        for k in &self.knots {
            let r = x - k.at;
            v += k.right * r.max(0.0).powi(2) + k.left * (-r).max(0.0).powi(2) + k.abs * r.abs();
        }
        v
    }

    /// One-sided derivative (`right = true` for `x+`).
    pub fn derivative(&self, x: f64, right: bool) -> f64 {
        let mut g = self.mu * (x - self.center);
        for k in &self.knots {
            let r = x - k.at;
            g += 2.0 * k.right * r.max(0.0) - 2.0 * k.left * (-r).max(0.0);
            let s = if r > 0.0 || (r == 0.0 && right) {
                1.0
            } else {
                -1.0
            };
            g += k.abs * s;
        }
        g
    }
}

/// Continuous piecewise-linear function: value `offset` at `origin`, slope
/// `slopes[i]` between `breaks[i−1]` and `breaks[i]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseLinear {
    pub origin: f64,
    pub offset: f64,
    pub breaks: Vec<f64>,
    pub slopes: Vec<f64>,
}

impl PiecewiseLinear {
    pub fn affine(offset: f64, slope: f64) -> Self {
        Self {
            origin: 0.0,
            offset,
            breaks: vec![],
            slopes: vec![slope],
        }
    }

    /// Integrates the slope from `origin` to `x`.
    pub fn value(&self, x: f64) -> f64 {
        let (lo, hi, sign) = if x >= self.origin {
            (self.origin, x, 1.0)
        } else {
            (x, self.origin, -1.0)
        };
        let mut acc = 0.0;
        let mut left = f64::NEG_INFINITY;
        for (i, s) in self.slopes.iter().enumerate() {
            let right = self.breaks.get(i).copied().unwrap_or(f64::INFINITY);
            let (u, v) = (lo.max(left), hi.min(right));
            if v > u {
                acc += s * (v - u);
            }
            left = right;
        }
        self.offset + sign * acc
    }

    pub fn derivative(&self, x: f64, right: bool) -> f64 {
        let i = if right {
            self.breaks.partition_point(|b| *b <= x)
        } else {
            self.breaks.partition_point(|b| *b < x)
        };
        self.slopes[i]
    }

    pub fn lipschitz(&self) -> f64 {
        self.slopes.iter().fold(0.0, |m, s| m.max(s.abs()))
    }
}

/// A pair `F`, `F̃ = F + α` on `[a, b]` satisfying the hypotheses of the
/// Gaussian domination inequality: both `μ_sc`-strongly convex and `α`
/// `G_lip`-Lipschitz.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditInstance1D {
    pub f: PiecewiseQuadratic,
    pub alpha: PiecewiseLinear,
    pub interval: (f64, f64),
    pub mu_sc: f64,
    pub g_lip: f64,
}

impl AuditInstance1D {
    /// `F = μx²/2`, `α = Gx` on `±(12/√μ + G/μ)`: a shifted Gaussian pair at
    /// distance `G/√μ`.
    pub fn tight(mu: f64, g: f64) -> Self {
        let w = 12.0 / mu.sqrt() + g / mu;
        Self {
            f: PiecewiseQuadratic {
                mu,
                center: 0.0,
                knots: vec![],
            },
            alpha: PiecewiseLinear::affine(0.0, g),
            interval: (-w, w),
            mu_sc: mu,
            g_lip: g,
        }
    }

    pub fn f(&self, x: f64) -> f64 {
        self.f.value(x)
    }

    pub fn f_tilde(&self, x: f64) -> f64 {
        self.f.value(x) + self.alpha.value(x)
    }

    /// Verifies the hypotheses: coefficients nonnegative, `|α′| ≤ G_lip`, and
    /// no negative derivative jump of `F̃` at any kink (between kinks the
    /// curvature of `F̃` is at least `μ`).
    pub fn check(&self) -> Result<()> {
        let (a, b) = self.interval;
        if !(a < b && a.is_finite() && b.is_finite()) {
            return invalid("instance interval must be finite and nonempty");
        }
        if !(self.mu_sc > 0.0 && self.mu_sc <= self.f.mu) {
            return invalid("mu_sc must be positive and at most the quadratic weight");
        }
        if self
            .f
            .knots
            .iter()
            .any(|k| !(k.right >= 0.0 && k.left >= 0.0 && k.abs >= 0.0))
        {
            return invalid("knot coefficients must be nonnegative");
        }
        if self.alpha.slopes.len() != self.alpha.breaks.len() + 1 {
            return invalid("alpha needs one more slope than breaks");
        }
        if self.alpha.breaks.windows(2).any(|w| w[0] > w[1]) {
            return invalid("alpha breaks must be sorted");
        }
        if self.alpha.lipschitz() > self.g_lip * (1.0 + 1e-12) {
            return invalid("alpha slope exceeds g_lip");
        }
        let kinks = self
            .f
            .knots
            .iter()
            .map(|k| k.at)
            .chain(self.alpha.breaks.iter().copied());
        for x in kinks {
            let jump = (self.f.derivative(x, true) + self.alpha.derivative(x, true))
                - (self.f.derivative(x, false) + self.alpha.derivative(x, false));
            if jump < -1e-12 * (1.0 + self.g_lip) {
                return invalid(format!(
                    "F + alpha is not convex at {x} (derivative jump {jump})"
                ));
            }
        }
        Ok(())
    }

    /// Largest normalized violation of `μ_sc`-strong convexity of `F̃` along
    /// random segments in the interval.
    pub fn segment_violation(&self, trials: usize, seed: u64) -> f64 {
        let mut rng = seeded(seed);
        let (a, b) = self.interval;
        let mut worst: f64 = 0.0;
        for _ in 0..trials {
            let x = rng.random_range(a..b);
            let y = rng.random_range(a..b);
            let t: f64 = rng.random();
            let lhs = self.f_tilde(t * x + (1.0 - t) * y);
            let rhs = t * self.f_tilde(x) + (1.0 - t) * self.f_tilde(y)
                - 0.5 * self.mu_sc * t * (1.0 - t) * (x - y).powi(2);
            let scale = 1.0 + self.f_tilde(x).abs().max(self.f_tilde(y).abs());
            worst = worst.max((lhs - rhs) / scale);
        }
        worst
    }
}

/// Random instances: `F` has `μ` from `mu_range`, a random center, and 3–8
/// random knots; `α` bends down only at `F`'s absolute-value knots (by less
/// than `F`'s jump there) and otherwise up, with slopes clipped to
/// `[−G, G]`. `α` is redrawn until [`AuditInstance1D::check`] passes.
pub fn generate_audit_instances(
    count: usize,
    seed: u64,
    mu_range: (f64, f64),
    g_range: (f64, f64),
    interval: (f64, f64),
) -> Result<Vec<AuditInstance1D>> {
    let ok = |r: (f64, f64)| r.0 > 0.0 && r.0 <= r.1 && r.1.is_finite();
    if !ok(mu_range) || !ok(g_range) {
        return invalid("mu_range and g_range must be positive, ordered, and finite");
    }
    let (a, b) = interval;
    if !(a < b && a.is_finite() && b.is_finite()) {
        return invalid("interval must be finite and nonempty");
    }
    let uniform = |rng: &mut crate::rng::ChainRng, r: (f64, f64)| {
        if r.0 == r.1 {
            r.0
        } else {
            rng.random_range(r.0..r.1)
        }
    };
    let w = b - a;
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let mut rng = seeded(derive_seed(seed, &[i as u64]));
        let mu = uniform(&mut rng, mu_range);
        let g = uniform(&mut rng, g_range);
        let center = rng.random_range(a + 0.25 * w..b - 0.25 * w);
        let n_knots = rng.random_range(3..=8);
        let knots: Vec<Knot> = (0..n_knots)
            .map(|_| Knot {
                at: rng.random_range(a..b),
                right: if rng.random_bool(0.5) {
                    rng.random_range(0.0..2.0 * mu)
                } else {
                    0.0
                },
                left: if rng.random_bool(0.5) {
                    rng.random_range(0.0..2.0 * mu)
                } else {
                    0.0
                },
                abs: if rng.random_bool(0.7) {
                    rng.random_range(0.0..g)
                } else {
                    0.0
                },
            })
            .collect();
        let f = PiecewiseQuadratic { mu, center, knots };
        let mut found = None;
        for _ in 0..100 {
            let mut pts: Vec<(f64, f64)> = f
                .knots
                .iter()
                .filter(|k| k.abs > 0.0)
                .map(|k| (k.at, k.abs))
                .collect();
            for _ in 0..rng.random_range(1..=3) {
                pts.push((rng.random_range(a..b), 0.0));
            }
            pts.sort_by(|x, y| x.0.total_cmp(&y.0));
            let mut s = rng.random_range(-g..g);
            let mut slopes = vec![s];
            for &(_, h) in &pts {
                let change = if h > 0.0 {
                    rng.random_range(-1.9 * h..g)
                } else {
                    rng.random_range(-0.1 * g..g)
                };
                s = (s + change).clamp(-g, g);
                slopes.push(s);
            }
            let alpha = PiecewiseLinear {
                origin: a,
                offset: rng.random_range(-1.0..1.0),
                breaks: pts.iter().map(|p| p.0).collect(),
                slopes,
            };
            let g_lip = alpha.lipschitz().max(1e-3 * g);
            let inst = AuditInstance1D {
                f: f.clone(),
                alpha,
                interval,
                mu_sc: mu,
                g_lip,
            };
            if inst.check().is_ok() {
                found = Some(inst);
                break;
            }
        }
        // An affine α always satisfies the hypotheses.
        let inst = found.unwrap_or_else(|| AuditInstance1D {
            f: f.clone(),
            alpha: PiecewiseLinear::affine(0.0, g),
            interval,
            mu_sc: mu,
            g_lip: g,
        });
        out.push(inst);
    }
    Ok(out)
}

/// One row of an audit report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditRow {
    pub instance_id: String,
    pub epsilon: f64,
    pub lhs_delta: f64,
    pub rhs_delta: f64,
    /// `rhs − lhs`.
    pub margin: f64,
    pub pass: bool,
}

impl AuditRow {
    pub fn new(instance_id: String, epsilon: f64, lhs: f64, rhs: f64, tol: f64) -> Self {
        Self {
            instance_id,
            epsilon,
            lhs_delta: lhs,
            rhs_delta: rhs,
            margin: rhs - lhs,
            pass: lhs <= rhs + tol,
        }
    }
}

/// Compares `δ(P ‖ Q)(ε)` and `δ(Q ‖ P)(ε)` with
/// `gaussian_curve(G_lip/√μ_sc, ε)`. Rows for the swapped pair carry the id
/// suffix `/swap`.
pub fn audit_theorem_gdp(
    instance: &AuditInstance1D,
    epsilons: &[f64],
    tol: f64,
    id: &str,
) -> Result<Vec<AuditRow>> {
    instance.check()?;
    let (a, b) = instance.interval;
    let t = instance.g_lip / instance.mu_sc.sqrt();
    let qtol = 1e-12;
    let forward = PrivacyCurve1d::new(|x| instance.f(x), |x| instance.f_tilde(x), a, b, qtol)?;
    let backward = PrivacyCurve1d::new(|x| instance.f_tilde(x), |x| instance.f(x), a, b, qtol)?;
    let mut rows = Vec::with_capacity(2 * epsilons.len());
    for &e in epsilons {
        rows.push(AuditRow::new(
            id.to_string(),
            e,
            forward.delta(e)?,
            gaussian_curve(t, e),
            tol,
        ));
    }
    for &e in epsilons {
        rows.push(AuditRow::new(
            format!("{id}/swap"),
            e,
            backward.delta(e)?,
            gaussian_curve(t, e),
            tol,
        ));
    }
    Ok(rows)
}

/// `0, 0.25, …, 3`.
pub fn default_epsilon_grid() -> Vec<f64> {
    (0..=12).map(|i| 0.25 * i as f64).collect()
}

/// Outcome of a Gibbs risk check.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GibbsRiskReport {
    /// `E_ν[F] − min F`.
    pub gap: f64,
    /// `d/k`.
    pub bound: f64,
    /// Monte Carlo standard error (0 for quadrature).
    pub stderr: f64,
    pub min_value: f64,
    pub pass: bool,
}

/// How the Gibbs expectation is computed.
#[derive(Clone, Debug)]
pub enum RiskMethod {
    /// Nested adaptive quadrature; `d ∈ {1, 2}` on a box or norm ball.
    Quadrature,
    /// Sampler draws with the effective-sample-size standard error; the
    /// minimum of `F` must be supplied.
    MonteCarlo {
        config: SamplerConfig,
        min_value: f64,
    },
}

/// Checks `E_ν[F] − min F ≤ d/k` for `ν ∝ exp(−kF)` on `domain`.
pub fn gibbs_risk_check(
    f: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    domain: &Domain,
    k: f64,
    method: &RiskMethod,
) -> Result<GibbsRiskReport> {
    if !(k > 0.0 && k.is_finite()) {
        return invalid("k must be positive");
    }
    let d = domain.dim();
    let bound = d as f64 / k;
    match method {
        RiskMethod::Quadrature => {
            let (gap, min_value) = match d {
                1 => risk_gap_1d(&f, domain, k)?,
                2 => risk_gap_2d(&f, domain, k)?,
                _ => return invalid("quadrature risk check supports d <= 2"),
            };
            Ok(GibbsRiskReport {
                gap,
                bound,
                stderr: 0.0,
                min_value,
                pass: gap <= bound + AUDIT_SLACK,
            })
        }
        RiskMethod::MonteCarlo { config, min_value } => {
            let g = f.clone();
            let pot = mechanism::FnPotential::new(d, move |x| k * g(x));
            let target = GibbsTarget::new(Arc::new(pot), domain.clone())?;
            let (draws, _) = samplers::sample(&target, config, &domain.center())?;
            let vals: Vec<f64> = draws.iter().map(|x| f(x)).collect();
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
            let ess = effective_sample_size(&vals).max(1.0);
            let stderr = (var / ess).sqrt();
            let gap = mean - min_value;
            Ok(GibbsRiskReport {
                gap,
                bound,
                stderr,
                min_value: *min_value,
                pass: gap <= bound + 3.0 * stderr,
            })
        }
    }
}

fn interval_of(domain: &Domain) -> Result<(f64, f64)> {
    let c = domain.center();
    let (lo, hi) = domain.chord(&c, &[1.0])?;
    Ok((c[0] + lo, c[0] + hi))
}

fn risk_gap_1d(
    f: &Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    domain: &Domain,
    k: f64,
) -> Result<(f64, f64)> {
    let (a, b) = interval_of(domain)?;
    let dens = LogConcave1d::new(|t: f64| k * f(&[t]), a, b, 1e-12)?;
    let min_value = dens.phi_min() / k;
    let gap = dens.expectation(|t| f(&[t]) - min_value)?;
    Ok((gap, min_value))
}

/// Range of the second coordinate at first coordinate `x1`, for domains
/// symmetric about their center in each coordinate.
fn slice_2d(domain: &Domain, x1: f64) -> Option<(f64, f64)> {
    let c = domain.center();
    let p = [x1, c[1]];
    if !domain.contains(&p) {
        return None;
    }
    let (lo, hi) = domain.chord(&p, &[0.0, 1.0]).ok()?;
    Some((c[1] + lo, c[1] + hi))
}

fn risk_gap_2d(
    f: &Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    domain: &Domain,
    k: f64,
) -> Result<(f64, f64)> {
    let c = domain.center();
    let (lo1, hi1) = domain.chord(&c, &[1.0, 0.0])?;
    let (a, b) = (c[0] + lo1, c[0] + hi1);
    let inner_min = |x1: f64| -> (f64, f64) {
        match slice_2d(domain, x1) {
            Some((l, h)) if h > l => minimize_convex_1d(|y| f(&[x1, y]), l, h, 64),
            _ => (c[1], f64::INFINITY),
        }
    };
    let (x1_star, min_value) = minimize_convex_1d(|x1| inner_min(x1).1, a, b, MODE_GRID);
    let inner = |x1: f64, moment: bool| -> Result<f64> {
        let Some((l, h)) = slice_2d(domain, x1) else {
            return Ok(0.0);
        };
        if h <= l {
            return Ok(0.0);
        }
        let (ym, _) = minimize_convex_1d(|y| f(&[x1, y]), l, h, 64);
        let g = |y: f64| {
            let e = f(&[x1, y]) - min_value;
            let w = (-k * e).exp();
            if moment {
                e * w
            } else {
                w
            }
        };
        let mut total = 0.0;
        for (u, v) in [(l, ym), (ym, h)] {
            if v > u {
                total += integrate(g, u, v, 1e-300, 1e-12)?.value;
            }
        }
        Ok(total)
    };
    let outer = |moment: bool| -> Result<f64> {
        let mut err = None;
        let mut total = 0.0;
        for (u, v) in [(a, x1_star), (x1_star, b)] {
            if v > u {
                let r = integrate(
                    |x1| match inner(x1, moment) {
                        Ok(v) => v,
                        Err(e) => {
                            err.get_or_insert(e);
                            0.0
                        }
                    },
                    u,
                    v,
                    1e-300,
                    1e-11,
                )?;
                total += r.value;
            }
        }
        match err {
            Some(e) => Err(e),
            None => Ok(total),
        }
    };
    let z = outer(false)?;
    let m = outer(true)?;
    Ok((m / z, min_value))
}

/// Random convex test function
/// `λ‖x − m‖₂²/2 + Σ wⱼ|⟨aⱼ, x⟩ − bⱼ| + Σ vⱼ(⟨cⱼ, x⟩ − eⱼ)₊²`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomConvex {
    pub lambda: f64,
    pub center: Vec<f64>,
    pub abs_terms: Vec<(Vec<f64>, f64, f64)>,
    pub sq_terms: Vec<(Vec<f64>, f64, f64)>,
}

impl RandomConvex {
    pub fn draw<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Self {
        let vec = |rng: &mut R| {
            (0..d)
                .map(|_| rng.random_range(-1.0..1.0))
                .collect::<Vec<f64>>()
        };
        let lambda = if rng.random_bool(0.3) {
            0.0
        } else {
            rng.random_range(0.0..2.0)
        };
        let center = vec(rng);
        let abs_terms = (0..rng.random_range(1..=4))
            .map(|_| {
                (
                    vec(rng),
                    rng.random_range(-0.5..0.5),
                    rng.random_range(0.1..2.0),
                )
            })
            .collect();
        let sq_terms = (0..rng.random_range(0..=2))
            .map(|_| {
                (
                    vec(rng),
                    rng.random_range(-0.5..0.5),
                    rng.random_range(0.1..2.0),
                )
            })
            .collect();
        Self {
            lambda,
            center,
            abs_terms,
            sq_terms,
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let dot = |a: &[f64]| a.iter().zip(x).map(|(p, q)| p * q).sum::<f64>();
        let mut v = 0.5
            * self.lambda
            * x.iter()
                .zip(&self.center)
                .map(|(p, q)| (p - q).powi(2))
                .sum::<f64>();
        for (a, b, w) in &self.abs_terms {
            v += w * (dot(a) - b).abs();
        }
        for (c, e, w) in &self.sq_terms {
            v += w * (dot(c) - e).max(0.0).powi(2);
        }
        v
    }
}

/// One `t` of a concentration check.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationRow {
    pub t: f64,
    pub tail: f64,
    pub bound: f64,
    /// `3·√(bound(1 − bound)/N)`.
    pub slack: f64,
    pub pass: bool,
}

/// Compares empirical upper tails of `ℓ(X) − E ℓ(X)` under the target with
/// `exp(−t²μ/(2G_ℓ²))`, where `μ` is the target's strong convexity. `mean`
/// is the exact expectation when known; otherwise the sample mean is used.
#[allow(clippy::too_many_arguments)]
pub fn concentration_check(
    target: &GibbsTarget,
    ell: &dyn Fn(&[f64]) -> f64,
    g_ell: f64,
    t_grid: &[f64],
    mean: Option<f64>,
    config: &SamplerConfig,
) -> Result<Vec<ConcentrationRow>> {
    let mu = target
        .strong_convexity
        .filter(|m| *m > 0.0)
        .ok_or_else(|| {
            Error::InvalidInput("concentration check needs a strongly convex target".into())
        })?;
    if !(g_ell > 0.0) {
        return invalid("g_ell must be positive");
    }
    let (draws, _) = samplers::sample(target, config, &target.domain.center())?;
    let vals: Vec<f64> = draws.iter().map(|x| ell(x)).collect();
    let n = vals.len() as f64;
    let m = mean.unwrap_or_else(|| vals.iter().sum::<f64>() / n);
    Ok(t_grid
        .iter()
        .map(|&t| {
            let tail = vals.iter().filter(|v| **v - m >= t).count() as f64 / n;
            let bound = (-t * t * mu / (2.0 * g_ell * g_ell)).exp().min(1.0);
            let slack = 3.0 * (bound * (1.0 - bound) / n).sqrt();
            ConcentrationRow {
                t,
                tail,
                bound,
                slack,
                pass: tail <= bound + slack,
            }
        })
        .collect())
}

/// One `(δ, ε)` of the Gaussian sufficient-condition check.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftRow {
    pub delta: f64,
    pub epsilon: f64,
    pub t: f64,
    pub curve: f64,
    pub pass: bool,
}

/// Draws `count` pairs with `δ` log-uniform in `[1e−12, 0.49]` and
/// `ε ∈ [0.01, 5]`, and checks `gaussian_curve(t, ε) ≤ δ + slack` at the
/// admissible `t`.
pub fn admissible_shift_audit(count: usize, seed: u64, slack: f64) -> Result<Vec<ShiftRow>> {
    let mut rng = seeded(seed);
    (0..count)
        .map(|_| {
            let delta = 10f64.powf(rng.random_range(-12.0..0.49f64.log10()));
            let epsilon = rng.random_range(0.01..5.0);
            let t = admissible_shift(delta, epsilon)?;
            let curve = gaussian_curve(t, epsilon);
            Ok(ShiftRow {
                delta,
                epsilon,
                t,
                curve,
                pass: curve <= delta + slack,
            })
        })
        .collect()
}

/// Draws random inputs for the ERM and SCO selectors and counts tuples where
/// `μ` differs from `2(cG)²kL/(n²ε²)` by more than one ulp. Returns
/// `(tuples checked, failures)`.
pub fn kmu_identity_audit(count: usize, seed: u64) -> Result<(usize, usize)> {
    let mut rng = seeded(seed);
    let mut failures = 0;
    for _ in 0..count {
        let g = 10f64.powf(rng.random_range(-2.0..2.0));
        let theta = 10f64.powf(rng.random_range(-2.0..2.0));
        let d = rng.random_range(1..=1000);
        let n = rng.random_range(1..=100_000);
        let eps = 10f64.powf(rng.random_range(-2.0..1.0));
        let delta = 10f64.powf(rng.random_range(-12.0..0.49f64.log10()));
        let c = if rng.random_bool(0.5) {
            SensitivityFactor::One
        } else {
            SensitivityFactor::Two
        };
        let l = log_term(delta)?;
        for p in [
            erm_params(g, theta, d, n, eps, delta, c)?,
            mechanism::sco_params(g, theta, d, n, eps, delta, c)?,
        ] {
            let want = kmu_relation(c.value() * g, p.k, l, n, eps);
            if (p.mu - want).abs() > ulp(want) {
                failures += 1;
            }
        }
    }
    Ok((2 * count, failures))
}

/// Distance from `x` to the next representable value away from zero.
pub fn ulp(x: f64) -> f64 {
    let x = x.abs();
    f64::from_bits(x.to_bits() + 1) - x
}

/// A one-dimensional ERM instance and a neighbor differing in one sample.
#[derive(Clone, Debug)]
pub struct MechanismCase1d {
    pub model: LossModel,
    pub neighbor: LossModel,
    pub domain: Domain,
    pub regularizer: Regularizer,
    pub params: MechanismParams,
}

/// Random abs-linear instance on `[−R, R]` with `n ≤ 5` samples and `c = 2`.
/// The replacement sample's feature is at most `G` in magnitude so both
/// datasets share the Lipschitz constant used for the parameters.
pub fn random_mechanism_case_1d(seed: u64) -> Result<MechanismCase1d> {
    let mut rng = seeded(seed);
    let n = rng.random_range(1..=5);
    let norm = NormSpec::lp(2.0, 1)?;
    let radius = rng.random_range(0.5..3.0);
    let domain = Domain::ball(norm, vec![0.0], radius)?;
    let mut samples: Vec<Sample> = (0..n)
        .map(|_| {
            Sample::new(
                vec![rng.random_range(-1.0..1.0)],
                rng.random_range(-1.0..1.0),
            )
        })
        .collect();
    if samples.iter().all(|s| s.features[0].abs() < 1e-3) {
        samples[0].features[0] = 0.5;
    }
    let model = LossModel::new(LossFamily::AbsLinear, samples, norm)?;
    let g = model.lipschitz();
    let replacement = Sample::new(vec![rng.random_range(-g..g)], rng.random_range(-1.0..1.0));
    let neighbor = model.neighboring_perturbation(rng.random_range(0..n), replacement)?;
    let regularizer = regularizer_for(&domain, &[0.0])?;
    let epsilon = [0.5, 1.0, 2.0][rng.random_range(0..3)];
    let delta = 10f64.powf(rng.random_range(-8.0..-1.0));
    let params = erm_params(
        g,
        regularizer.theta,
        1,
        n,
        epsilon,
        delta,
        SensitivityFactor::Two,
    )?;
    Ok(MechanismCase1d {
        model,
        neighbor,
        domain,
        regularizer,
        params,
    })
}

/// `max(δ(ν_D ‖ ν_D′)(ε), δ(ν_D′ ‖ ν_D)(ε))` for the mechanism densities
/// `ν ∝ exp(−k(F + μr))`.
pub fn mechanism_privacy_1d(case: &MechanismCase1d) -> Result<f64> {
    let (a, b) = interval_of(&case.domain)?;
    let (k, mu) = (case.params.k, case.params.mu);
    let phi =
        |m: &LossModel, x: f64| k * (m.risk_unchecked(&[x]) + mu * case.regularizer.evaluate(&[x]));
    let p = |x: f64| phi(&case.model, x);
    let q = |x: f64| phi(&case.neighbor, x);
    let e = case.params.epsilon;
    let forward = privacy_curve_1d(p, q, a, b, e, 1e-12)?;
    let backward = privacy_curve_1d(q, p, a, b, e, 1e-12)?;
    Ok(forward.max(backward))
}
