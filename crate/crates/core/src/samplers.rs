//! Samplers for log-concave densities `∝ exp(−φ)` on compact convex domains,
//! and statistics for checking their output.
//!
//! - [`sample_exact_1d`]: inverse-CDF sampling on an interval.
//! - [`sample_hit_and_run`]: random chords with an exact draw along each chord.
//! - [`sample_mala`]: Metropolis-adjusted Langevin with a domain filter.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{axpy, dot, random_unit_vector, sub};
use crate::mechanism::GibbsTarget;
use crate::quadrature::LogConcave1d;
use crate::rng::seeded;

/// Convex potential `φ` on `ℝ^d` (negative log-density up to a constant).
pub trait Potential: Send + Sync {
    fn dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> f64;

    /// A subgradient, if the potential provides one.
    fn gradient(&self, x: &[f64]) -> Option<Vec<f64>>;

    /// The restriction `t ↦ φ(x + t·u)`. Implementations may precompute
    /// per-line data to make repeated evaluations cheap.
    fn line<'a>(&'a self, x: &[f64], u: &[f64]) -> Box<dyn LineFn + 'a> {
        Box::new(GenericLine {
            potential: self,
            x: x.to_vec(),
            u: u.to_vec(),
        })
    }
}

/// A convex function of one variable.
pub trait LineFn {
    fn value(&self, t: f64) -> f64;

    /// Value and a subgradient at `t`, if available.
    fn value_and_slope(&self, t: f64) -> Option<(f64, f64)>;
}

struct GenericLine<'a, P: ?Sized> {
    potential: &'a P,
    x: Vec<f64>,
    u: Vec<f64>,
}

impl<P: Potential + ?Sized> LineFn for GenericLine<'_, P> {
    fn value(&self, t: f64) -> f64 {
        self.potential.value(&axpy(&self.x, t, &self.u))
    }

    fn value_and_slope(&self, t: f64) -> Option<(f64, f64)> {
        let y = axpy(&self.x, t, &self.u);
        let g = self.potential.gradient(&y)?;
        Some((self.potential.value(&y), dot(&g, &self.u)))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerMethod {
    Exact1d,
    HitAndRun,
    Mala,
}

/// How hit-and-run draws the point along a chord. Both are exact conditional
/// draws.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChordSampler {
    /// Adaptive rejection sampling with tangent envelopes; needs slopes.
    #[default]
    Rejection,
    /// Inverse CDF from adaptive quadrature.
    Quadrature,
}

fn default_tol() -> f64 {
    1e-10
}
fn default_max_queries() -> u64 {
    200_000_000
}
fn default_n_samples() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    pub method: SamplerMethod,
    /// Steps discarded before the first retained sample; defaults to `50·d`.
    #[serde(default)]
    pub burn_in: Option<usize>,
    /// Steps between retained samples; defaults to `d`.
    #[serde(default)]
    pub thinning: Option<usize>,
    #[serde(default = "default_n_samples")]
    pub n_samples: usize,
    /// Initial MALA step size; defaults to a fraction of the domain size.
    #[serde(default)]
    pub step_size: Option<f64>,
    #[serde(default = "default_tol")]
    pub quadrature_tol: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_max_queries")]
    pub max_queries: u64,
    #[serde(default)]
    pub chord: ChordSampler,
}

impl SamplerConfig {
    pub fn new(method: SamplerMethod, n_samples: usize, seed: u64) -> Self {
        Self {
            method,
            burn_in: None,
            thinning: None,
            n_samples,
            step_size: None,
            quadrature_tol: default_tol(),
            seed,
            max_queries: default_max_queries(),
            chord: ChordSampler::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return invalid("n_samples must be at least 1");
        }
        if self.burn_in == Some(0) || self.thinning == Some(0) {
            return invalid("burn_in and thinning must be at least 1");
        }
        if !(self.quadrature_tol > 0.0 && self.quadrature_tol <= 1e-6) {
            return invalid(format!(
                "quadrature_tol must lie in (0, 1e-6], got {}",
                self.quadrature_tol
            ));
        }
        if let Some(h) = self.step_size {
            if !(h > 0.0 && h.is_finite()) {
                return invalid("step_size must be positive");
            }
        }
        Ok(())
    }

    pub fn burn_in_for(&self, d: usize) -> usize {
        self.burn_in.unwrap_or(50 * d)
    }

    pub fn thinning_for(&self, d: usize) -> usize {
        self.thinning.unwrap_or(d)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SamplerReport {
    pub value_queries: u64,
    pub gradient_queries: u64,
    /// Post-burn-in Metropolis acceptance rate (MALA only).
    pub acceptance_rate: Option<f64>,
    /// Effective sample size of the potential-value trace of retained samples.
    pub effective_sample_size_estimate: f64,
    pub converged: bool,
    pub diagnostics: Vec<String>,
}

/// Query accounting with a hard budget: an evaluation that would exceed
/// `max` is refused, so `value ≤ max` always holds.
struct Budget {
    value: u64,
    gradient: u64,
    max: u64,
}

struct OverBudget;

impl Budget {
    fn new(max: u64) -> Self {
        Self {
            value: 0,
            gradient: 0,
            max,
        }
    }

    fn value(&mut self) -> std::result::Result<(), OverBudget> {
        if self.value >= self.max {
            return Err(OverBudget);
        }
        self.value += 1;
        Ok(())
    }

    fn value_and_gradient(&mut self) -> std::result::Result<(), OverBudget> {
        self.value()?;
        self.gradient += 1;
        Ok(())
    }
}

fn failure(reason: impl Into<String>, budget: &Budget, mut diagnostics: Vec<String>) -> Error {
    let reason = reason.into();
    diagnostics.push(reason.clone());
    Error::Sampler {
        reason,
        report: Box::new(SamplerReport {
            value_queries: budget.value,
            gradient_queries: budget.gradient,
            acceptance_rate: None,
            effective_sample_size_estimate: 0.0,
            converged: false,
            diagnostics,
        }),
    }
}

fn budget_error(budget: &Budget) -> Error {
    failure(
        format!("query budget of {} value queries exhausted", budget.max),
        budget,
        vec![],
    )
}

/// Draws `n` independent samples from `∝ exp(−φ)` on `[a, b]` by inverting the
/// CDF computed with adaptive Gauss–Kronrod quadrature at relative
/// tolerance `tol`.
pub fn sample_exact_1d<F: Fn(f64) -> f64>(
    neg_log_density: F,
    a: f64,
    b: f64,
    n: usize,
    tol: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    let dist = LogConcave1d::new(neg_log_density, a, b, tol)?;
    let mut rng = seeded(seed);
    Ok((0..n).map(|_| dist.sample(&mut rng)).collect())
}

const MAX_BOUNDARY_REDRAWS: usize = 20;

/// Runs a hit-and-run chain from `x0`, returning `n_samples` thinned draws.
pub fn sample_hit_and_run(
    target: &GibbsTarget,
    config: &SamplerConfig,
    x0: &[f64],
) -> Result<(Vec<Vec<f64>>, SamplerReport)> {
    config.validate()?;
    let d = target.domain.dim();
    if x0.len() != d || !target.domain.strictly_contains(x0) {
        return invalid("hit-and-run start must be an interior point of the domain");
    }
    let burn = config.burn_in_for(d);
    let thin = config.thinning_for(d);
    let total = burn + thin * (config.n_samples - 1) + 1;
    let mut rng = seeded(config.seed);
    let mut budget = Budget::new(config.max_queries);
    let mut x = x0.to_vec();
    let mut out = Vec::with_capacity(config.n_samples);
    let mut trace = Vec::with_capacity(config.n_samples);
    let mut diagnostics = Vec::new();
    let mut use_quadrature = config.chord == ChordSampler::Quadrature;
    let mut ars_proposals: u64 = 0;
    for step in 1..=total {
        let u = random_unit_vector(&mut rng, d);
        let (lo, hi) = target.domain.chord(&x, &u).map_err(|e| {
            failure(
                format!("chord computation failed at step {step}: {e}"),
                &budget,
                vec![],
            )
        })?;
        let len = hi - lo;
        let (lo, hi) = (lo + 1e-12 * len, hi - 1e-12 * len);
        let line = target.potential.line(&x, &u);
        if step == 1 && !use_quadrature {
            budget
                .value_and_gradient()
                .map_err(|_| budget_error(&budget))?;
        }
        if step == 1 && !use_quadrature && line.value_and_slope(0.0).is_none() {
            diagnostics.push("potential has no slopes; chords use quadrature".into());
            use_quadrature = true;
        }
        // A draw that rounds onto the boundary is redrawn, which conditions
        // on the strict interior of the chord.
        let mut next = None;
        for _ in 0..MAX_BOUNDARY_REDRAWS {
            let t = if use_quadrature {
                chord_quadrature(
                    line.as_ref(),
                    lo,
                    hi,
                    config.quadrature_tol,
                    &mut budget,
                    &mut rng,
                )?
            } else {
                let (t, props) = chord_ars(line.as_ref(), lo, hi, &mut budget, &mut rng)?;
                ars_proposals += props;
                t
            };
            let y = axpy(&x, t, &u);
            if target.domain.strictly_contains(&y) {
                next = Some(y);
                break;
            }
        }
        drop(line);
        x = next.ok_or_else(|| {
            failure(
                format!("draws at step {step} kept landing on the boundary"),
                &budget,
                vec![],
            )
        })?;
        if step >= burn && (step - burn) % thin == 0 {
            budget.value().map_err(|_| budget_error(&budget))?;
            trace.push(target.potential.value(&x));
            out.push(x.clone());
        }
    }
    if !use_quadrature {
        diagnostics.push(format!(
            "mean rejection proposals per step: {:.3}",
            ars_proposals as f64 / total as f64
        ));
    }
    let ess = effective_sample_size(&trace);
    let converged = out.len() < 10 || ess >= 0.05 * out.len() as f64;
    if !converged {
        diagnostics.push(format!(
            "low effective sample size {ess:.1} for {} draws",
            out.len()
        ));
    }
    Ok((
        out,
        SamplerReport {
            value_queries: budget.value,
            gradient_queries: budget.gradient,
            acceptance_rate: None,
            effective_sample_size_estimate: ess,
            converged,
            diagnostics,
        },
    ))
}

/// Exact draw from `∝ exp(−ψ)` on `[lo, hi]` (with `0` inside) by adaptive
/// rejection sampling. Returns the draw and the number of proposals.
fn chord_ars<R: Rng + ?Sized>(
    line: &dyn LineFn,
    lo: f64,
    hi: f64,
    budget: &mut Budget,
    rng: &mut R,
) -> Result<(f64, u64)> {
    const MAX_PROPOSALS: u64 = 500;
    // Tangent points (t, ψ(t), ψ'(t)) kept sorted by t.
    let mut pts: Vec<(f64, f64, f64)> = Vec::with_capacity(12);
    for t in [lo, 0.0, hi] {
        budget
            .value_and_gradient()
            .map_err(|_| budget_error(budget))?;
        let (v, s) = line.value_and_slope(t).expect("slopes checked by caller");
        if !(v.is_finite() && s.is_finite()) {
            return Err(failure(
                format!("non-finite potential on chord at t = {t}"),
                budget,
                vec![],
            ));
        }
        pts.push((t, v, s));
    }
    for prop in 1..=MAX_PROPOSALS {
        let env = Envelope::build(&pts, lo, hi);
        let (t, upper) = env.sample(rng);
        budget
            .value_and_gradient()
            .map_err(|_| budget_error(budget))?;
        let (v, s) = line.value_and_slope(t).expect("slopes checked by caller");
        let gap = v - upper;
        if rng.random::<f64>() < (-gap.max(0.0)).exp() {
            return Ok((t, prop));
        }
        let at = pts.partition_point(|p| p.0 < t);
        pts.insert(at, (t, v, s));
    }
    Err(failure(
        format!(
            "adaptive rejection exceeded {MAX_PROPOSALS} proposals; potential may not be convex"
        ),
        budget,
        vec![],
    ))
}

/// Piecewise-linear lower hull of a convex `ψ` from its tangents, i.e. a
/// piecewise-exponential upper envelope of `exp(−ψ)`.
struct Envelope {
    /// Segments `[l, r]` with line `v0 + s·(t − l)`.
    segs: Vec<(f64, f64, f64, f64)>,
    cum: Vec<f64>,
}

impl Envelope {
    fn build(pts: &[(f64, f64, f64)], lo: f64, hi: f64) -> Self {
        let mut bounds = Vec::with_capacity(pts.len() + 1);
        bounds.push(lo);
        for w in pts.windows(2) {
            let (t1, v1, s1) = w[0];
            let (t2, v2, s2) = w[1];
            let z = if s2 > s1 {
                // Intersection of the two tangent lines.
                ((v2 - s2 * t2) - (v1 - s1 * t1)) / (s1 - s2)
            } else {
                0.5 * (t1 + t2)
            };
            bounds.push(z.clamp(t1, t2));
        }
        bounds.push(hi);
        let mut segs = Vec::with_capacity(pts.len());
        for (i, &(t, v, s)) in pts.iter().enumerate() {
            let (l, r) = (bounds[i], bounds[i + 1].max(bounds[i]));
            segs.push((l, r, v + s * (l - t), s));
        }
        let vmin = segs
            .iter()
            .map(|&(l, r, v0, s)| v0.min(v0 + s * (r - l)))
            .fold(f64::INFINITY, f64::min);
        let mut cum = Vec::with_capacity(segs.len());
        let mut acc = 0.0;
        for &(l, r, v0, s) in &segs {
            let w = r - l;
            let end_min = v0.min(v0 + s * w);
            let y = s.abs() * w;
            acc += (-(end_min - vmin)).exp() * w * exprel_neg(y);
            cum.push(acc);
        }
        Self { segs, cum }
    }

    /// Draws from the envelope, returning the point and the hull value there.
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        let total = *self.cum.last().expect("nonempty envelope");
        let target = rng.random::<f64>() * total;
        let i = self
            .cum
            .partition_point(|c| *c <= target)
            .min(self.segs.len() - 1);
        let (l, r, v0, s) = self.segs[i];
        let w = r - l;
        let u: f64 = rng.random();
        let y = s.abs() * w;
        // Distance from the lower end of the segment: exponential with rate
        // |s| truncated to [0, w], by inversion.
        let tau = if y < 1e-12 {
            u * w
        } else {
            let mass = u * -(-y).exp_m1();
            (-(-mass).ln_1p() / s.abs()).min(w)
        };
        let t = if s >= 0.0 { l + tau } else { r - tau };
        (t, v0 + s * (t - l))
    }
}

/// `(1 − e^{−y})/y` for `y ≥ 0`.
fn exprel_neg(y: f64) -> f64 {
    if y < 1e-12 {
        1.0
    } else {
        -(-y).exp_m1() / y
    }
}

fn chord_quadrature<R: Rng + ?Sized>(
    line: &dyn LineFn,
    lo: f64,
    hi: f64,
    tol: f64,
    budget: &mut Budget,
    rng: &mut R,
) -> Result<f64> {
    use std::cell::{Cell, RefCell};
    let count = Cell::new(0u64);
    let over = Cell::new(false);
    let remaining = budget.max - budget.value;
    let err = RefCell::new(None::<String>);
    let phi = |t: f64| {
        if count.get() >= remaining {
            over.set(true);
            return f64::NAN;
        }
        count.set(count.get() + 1);
        let v = line.value(t);
        if !v.is_finite() && err.borrow().is_none() {
            *err.borrow_mut() = Some(format!("non-finite potential on chord at t = {t}"));
        }
        v
    };
    let result = LogConcave1d::new(phi, lo, hi, tol).map(|dist| dist.sample(rng));
    budget.value += count.get();
    if over.get() {
        return Err(budget_error(budget));
    }
    if let Some(e) = err.into_inner() {
        return Err(failure(e, budget, vec![]));
    }
    result.map_err(|e| failure(format!("chord quadrature failed: {e}"), budget, vec![]))
}

/// Metropolis-adjusted Langevin chain from `x0`. The step size adapts during
/// burn-in toward acceptance 0.55 and is then frozen.
pub fn sample_mala(
    target: &GibbsTarget,
    config: &SamplerConfig,
    x0: &[f64],
) -> Result<(Vec<Vec<f64>>, SamplerReport)> {
    config.validate()?;
    let dom = &target.domain;
    let d = dom.dim();
    if x0.len() != d || !dom.contains(x0) {
        return invalid("MALA start must be a point of the domain");
    }
    let burn = config.burn_in_for(d);
    let thin = config.thinning_for(d);
    let total = burn + thin * (config.n_samples - 1) + 1;
    let pot = &target.potential;
    let mut rng = seeded(config.seed);
    let mut budget = Budget::new(config.max_queries);
    let mut h = config
        .step_size
        .unwrap_or_else(|| (dom.l2_radius() * dom.l2_radius() / (10.0 * d as f64)).max(1e-12));

    let eval = |x: &[f64], budget: &mut Budget| -> Result<(f64, Vec<f64>)> {
        budget
            .value_and_gradient()
            .map_err(|_| budget_error(budget))?;
        let g = pot
            .gradient(x)
            .ok_or_else(|| Error::InvalidInput("MALA needs a potential with gradients".into()))?;
        Ok((pot.value(x), g))
    };
    let mut x = x0.to_vec();
    let (mut fx, mut gx) = eval(&x, &mut budget)?;
    let mut out = Vec::with_capacity(config.n_samples);
    let mut trace = Vec::with_capacity(config.n_samples);
    let (mut accepted_after, mut steps_after) = (0u64, 0u64);
    let mut log_h = h.ln();
    for step in 1..=total {
        let noise: Vec<f64> = (0..d)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let s = (2.0 * h).sqrt();
        let y: Vec<f64> = (0..d).map(|i| x[i] - h * gx[i] + s * noise[i]).collect();
        let mut accepted = false;
        if dom.contains(&y) {
            let (fy, gy) = eval(&y, &mut budget)?;
            // log q(x | y) − log q(y | x)
            let fwd: f64 = (0..d).map(|i| (y[i] - x[i] + h * gx[i]).powi(2)).sum();
            let bwd: f64 = (0..d).map(|i| (x[i] - y[i] + h * gy[i]).powi(2)).sum();
            let log_alpha = fx - fy - (bwd - fwd) / (4.0 * h);
            if rng.random::<f64>().ln() < log_alpha {
                x = y;
                fx = fy;
                gx = gy;
                accepted = true;
            }
        }
        if step <= burn {
            let gain = 1.0 / (step as f64).powf(0.6);
            log_h += gain * ((accepted as u8 as f64) - 0.55);
            h = log_h.exp();
        } else {
            steps_after += 1;
            accepted_after += accepted as u64;
        }
        if step >= burn && (step - burn) % thin == 0 {
            trace.push(fx);
            out.push(x.clone());
        }
    }
    let rate = if steps_after > 0 {
        accepted_after as f64 / steps_after as f64
    } else {
        f64::NAN
    };
    let mut diagnostics = vec![format!("frozen step size {h:.6e}")];
    if steps_after >= 20 && rate < 0.05 {
        let mut e = failure(
            format!("MALA acceptance rate {rate:.4} below 0.05"),
            &budget,
            diagnostics,
        );
        if let Error::Sampler { report, .. } = &mut e {
            report.acceptance_rate = Some(rate);
        }
        return Err(e);
    }
    let ess = effective_sample_size(&trace);
    let converged = out.len() < 10 || ess >= 0.05 * out.len() as f64;
    if !converged {
        diagnostics.push(format!(
            "low effective sample size {ess:.1} for {} draws",
            out.len()
        ));
    }
    Ok((
        out,
        SamplerReport {
            value_queries: budget.value,
            gradient_queries: budget.gradient,
            acceptance_rate: Some(rate),
            effective_sample_size_estimate: ess,
            converged,
            diagnostics,
        },
    ))
}

/// Dispatches on `config.method`. `Exact1d` needs a one-dimensional interval
/// domain and ignores `x0`.
pub fn sample(
    target: &GibbsTarget,
    config: &SamplerConfig,
    x0: &[f64],
) -> Result<(Vec<Vec<f64>>, SamplerReport)> {
    match config.method {
        SamplerMethod::HitAndRun => sample_hit_and_run(target, config, x0),
        SamplerMethod::Mala => sample_mala(target, config, x0),
        SamplerMethod::Exact1d => {
            config.validate()?;
            if target.domain.dim() != 1 {
                return invalid("exact-1d sampling needs a one-dimensional domain");
            }
            let c = target.domain.center();
            let (lo, hi) = target.domain.chord(&c, &[1.0])?;
            let (a, b) = (c[0] + lo, c[0] + hi);
            let count = std::sync::atomic::AtomicU64::new(0);
            let phi = |t: f64| {
                count.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                target.potential.value(&[t])
            };
            let draws = sample_exact_1d(
                phi,
                a,
                b,
                config.n_samples,
                config.quadrature_tol,
                config.seed,
            )?;
            let value_queries = count.into_inner();
            if value_queries > config.max_queries {
                let budget = Budget {
                    value: value_queries,
                    gradient: 0,
                    max: config.max_queries,
                };
                return Err(budget_error(&budget));
            }
            let n = draws.len() as f64;
            Ok((
                draws.into_iter().map(|t| vec![t]).collect(),
                SamplerReport {
                    value_queries,
                    gradient_queries: 0,
                    acceptance_rate: None,
                    effective_sample_size_estimate: n,
                    converged: true,
                    diagnostics: vec!["independent draws".into()],
                },
            ))
        }
    }
}

/// Effective sample size of a scalar trace using Geyer's initial positive
/// sequence estimator of the integrated autocorrelation time.
pub fn effective_sample_size(trace: &[f64]) -> f64 {
    let n = trace.len();
    if n < 4 {
        return n as f64;
    }
    let mean = trace.iter().sum::<f64>() / n as f64;
    let c: Vec<f64> = trace.iter().map(|v| v - mean).collect();
    let var = dot(&c, &c) / n as f64;
    if !(var > 0.0) {
        return n as f64;
    }
    let rho = |k: usize| dot(&c[..n - k], &c[k..]) / (n as f64 * var);
    let mut tau = -1.0;
    let mut prev = f64::INFINITY;
    let mut m = 0;
    while 2 * m + 1 < n {
        let pair = rho(2 * m) + rho(2 * m + 1);
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev);
        tau += 2.0 * pair;
        prev = pair;
        m += 1;
    }
    (n as f64 / tau.max(1e-12)).min(n as f64)
}

/// Kolmogorov–Smirnov distance between the empirical CDF and `cdf`.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let n = s.len() as f64;
    let mut worst: f64 = 0.0;
    for (i, x) in s.iter().enumerate() {
        let f = cdf(*x);
        worst = worst
            .max((f - i as f64 / n).abs())
            .max(((i + 1) as f64 / n - f).abs());
    }
    worst
}

/// Histogram total-variation estimate `½ Σ |empirical − reference|` over
/// `bins` equal bins on `[lo, hi]` plus the two tails, with reference masses
/// from a CDF.
pub fn tv_distance_1d<F: Fn(f64) -> f64>(
    samples: &[f64],
    cdf: F,
    lo: f64,
    hi: f64,
    bins: usize,
) -> Result<f64> {
    if bins < 10 {
        return invalid("need at least 10 bins");
    }
    if !(lo < hi) || samples.is_empty() {
        return invalid("need lo < hi and at least one sample");
    }
    let mut counts = vec![0usize; bins + 2];
    let w = (hi - lo) / bins as f64;
    for &x in samples {
        let k = if x < lo {
            0
        } else if x >= hi {
            bins + 1
        } else {
            1 + (((x - lo) / w) as usize).min(bins - 1)
        };
        counts[k] += 1;
    }
    let n = samples.len() as f64;
    let edge = |i: usize| if i == bins { hi } else { lo + w * i as f64 };
    let mut tv = (counts[0] as f64 / n - cdf(lo)).abs()
        + (counts[bins + 1] as f64 / n - (1.0 - cdf(hi))).abs();
    for i in 0..bins {
        let mass = cdf(edge(i + 1)) - cdf(edge(i));
        tv += (counts[i + 1] as f64 / n - mass).abs();
    }
    Ok(0.5 * tv)
}

/// Two-dimensional histogram TV estimate on a `bins × bins` grid over the box
/// `[lo, hi]`; `cell_mass(a, b)` returns the reference mass of the cell
/// `[a₀, b₀] × [a₁, b₁]`. Mass outside the grid is one extra bin.
pub fn tv_distance_2d<F: Fn([f64; 2], [f64; 2]) -> f64>(
    samples: &[[f64; 2]],
    cell_mass: F,
    lo: [f64; 2],
    hi: [f64; 2],
    bins: usize,
) -> Result<f64> {
    if bins < 10 {
        return invalid("need at least 10 bins");
    }
    if samples.is_empty() || !(lo[0] < hi[0] && lo[1] < hi[1]) {
        return invalid("need a nonempty sample and a proper box");
    }
    let w = [(hi[0] - lo[0]) / bins as f64, (hi[1] - lo[1]) / bins as f64];
    let mut counts = vec![0usize; bins * bins];
    let mut outside = 0usize;
    for s in samples {
        if (0..2).any(|j| s[j] < lo[j] || s[j] >= hi[j]) {
            outside += 1;
            continue;
        }
        let i = (((s[0] - lo[0]) / w[0]) as usize).min(bins - 1);
        let j = (((s[1] - lo[1]) / w[1]) as usize).min(bins - 1);
        counts[i * bins + j] += 1;
    }
    let n = samples.len() as f64;
    let mut tv = 0.0;
    let mut inside_mass = 0.0;
    for i in 0..bins {
        for j in 0..bins {
            let a = [lo[0] + w[0] * i as f64, lo[1] + w[1] * j as f64];
            let b = [a[0] + w[0], a[1] + w[1]];
            let m = cell_mass(a, b);
            inside_mass += m;
            tv += (counts[i * bins + j] as f64 / n - m).abs();
        }
    }
    tv += (outside as f64 / n - (1.0 - inside_mass).max(0.0)).abs();
    Ok(0.5 * tv)
}

/// Sample mean and covariance of a set of points.
pub fn moments(samples: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let d = samples.first().map_or(0, Vec::len);
    let n = samples.len() as f64;
    let mut mean = vec![0.0; d];
    for s in samples {
        mean.iter_mut().zip(s).for_each(|(m, v)| *m += v / n);
    }
    let mut cov = vec![vec![0.0; d]; d];
    for s in samples {
        let c = sub(s, &mean);
        for i in 0..d {
            for j in 0..d {
                cov[i][j] += c[i] * c[j] / (n - 1.0);
            }
        }
    }
    (mean, cov)
}
