//! The audit suite behind the `audit` subcommand.

use std::sync::Arc;
use std::time::Instant;

use anyhow::Context;
use dpnormopt_core::audit::{
    self, admissible_shift_audit, audit_theorem_gdp, concentration_check, default_epsilon_grid,
    generate_audit_instances, gibbs_risk_check, kmu_identity_audit, mechanism_privacy_1d,
    random_mechanism_case_1d, AuditInstance1D, AuditRow, RandomConvex, RiskMethod, AUDIT_SLACK,
};
use dpnormopt_core::mechanism::FnPotential;
use dpnormopt_core::rng::{derive_seed, seeded};
use dpnormopt_core::{Domain, GibbsTarget, NormSpec, SamplerConfig, SamplerMethod};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::AuditConfig;

/// Slack of the Gaussian sufficient-condition check.
pub const SHIFT_SLACK: f64 = 1e-10;
/// Largest `|lhs − rhs|` accepted for the tight quadratic-plus-linear family.
pub const TIGHT_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SectionResult {
    pub name: String,
    pub checked: usize,
    pub failed: usize,
    /// Smallest `rhs − lhs` over the section's comparisons.
    pub worst_margin: f64,
    pub seconds: f64,
    pub warning: Option<String>,
}

impl SectionResult {
    pub fn pass(&self) -> bool {
        self.failed == 0
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AuditSuiteReport {
    pub sections: Vec<SectionResult>,
    /// Privacy-curve comparisons (Gaussian domination, sufficient shift, and
    /// end-to-end mechanism rows) for the audit CSV.
    pub rows: Vec<AuditRow>,
}

impl AuditSuiteReport {
    pub fn all_pass(&self) -> bool {
        self.sections.iter().all(SectionResult::pass)
    }
}

/// `lhs ≤ rhs + tol`, or the reverse when `inject_bug` is set.
fn holds(lhs: f64, rhs: f64, tol: f64, inject_bug: bool) -> bool {
    if inject_bug {
        rhs <= lhs + tol
    } else {
        lhs <= rhs + tol
    }
}

fn row(id: String, epsilon: f64, lhs: f64, rhs: f64, tol: f64, inject_bug: bool) -> AuditRow {
    let mut r = AuditRow::new(id, epsilon, lhs, rhs, tol);
    r.pass = holds(lhs, rhs, tol, inject_bug);
    r
}

struct Section {
    name: &'static str,
    start: Instant,
    checked: usize,
    failed: usize,
    worst: f64,
}

impl Section {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            start: Instant::now(),
            checked: 0,
            failed: 0,
            worst: f64::INFINITY,
        }
    }

    fn add(&mut self, pass: bool, margin: f64) {
        self.checked += 1;
        self.failed += usize::from(!pass);
        self.worst = self.worst.min(margin);
    }

    fn finish(self, requested: usize) -> SectionResult {
        let warning =
            (requested == 0).then(|| format!("{}: count is 0, audit is vacuous", self.name));
        SectionResult {
            name: self.name.to_string(),
            checked: self.checked,
            failed: self.failed,
            worst_margin: self.worst,
            seconds: self.start.elapsed().as_secs_f64(),
            warning,
        }
    }
}

/// Runs every audit with the configured counts. A count of 0 makes that
/// audit pass vacuously with a warning. `inject_bug` reverses every checked
/// inequality so the suite's failure path can be exercised.
pub fn run_audit_suite(
    config: &AuditConfig,
    pool: &rayon::ThreadPool,
    inject_bug: bool,
) -> anyhow::Result<AuditSuiteReport> {
    let mut report = AuditSuiteReport::default();
    let eps_grid = default_epsilon_grid();

    // Gaussian domination on random piecewise instances plus the tight family.
    let mut sec = Section::new("gaussian-domination");
    let instances = generate_audit_instances(
        config.gdp_instances,
        derive_seed(config.seed, &[1]),
        (0.2, 5.0),
        (0.05, 3.0),
        (-6.0, 6.0),
    )?;
    let mut rows: Vec<Vec<AuditRow>> = pool.install(|| {
        instances
            .par_iter()
            .enumerate()
            .map(|(i, inst)| audit_theorem_gdp(inst, &eps_grid, AUDIT_SLACK, &format!("gdp/{i}")))
            .collect::<dpnormopt_core::Result<_>>()
    })?;
    if config.gdp_instances > 0 {
        for (j, (mu, g)) in [(1.0, 1.0), (2.0, 0.5), (0.5, 1.5)].into_iter().enumerate() {
            rows.push(audit_theorem_gdp(
                &AuditInstance1D::tight(mu, g),
                &eps_grid,
                TIGHT_TOL,
                &format!("tight/{j}"),
            )?);
        }
    }
    for r in rows.into_iter().flatten() {
        let tol = if r.instance_id.starts_with("tight") {
            TIGHT_TOL
        } else {
            AUDIT_SLACK
        };
        let r = row(
            r.instance_id,
            r.epsilon,
            r.lhs_delta,
            r.rhs_delta,
            tol,
            inject_bug,
        );
        sec.add(r.pass, r.margin);
        report.rows.push(r);
    }
    report.sections.push(sec.finish(config.gdp_instances));

    // Sufficient Gaussian shift.
    let mut sec = Section::new("gaussian-shift");
    for (i, s) in admissible_shift_audit(
        config.shift_cases,
        derive_seed(config.seed, &[2]),
        SHIFT_SLACK,
    )?
    .into_iter()
    .enumerate()
    {
        let r = row(
            format!("shift/{i}"),
            s.epsilon,
            s.curve,
            s.delta,
            SHIFT_SLACK,
            inject_bug,
        );
        sec.add(r.pass, r.margin);
        report.rows.push(r);
    }
    report.sections.push(sec.finish(config.shift_cases));

    // Gibbs risk.
    let mut sec = Section::new("gibbs-risk");
    let gibbs = pool.install(|| {
        (0..config.gibbs_targets)
            .into_par_iter()
            .map(|i| gibbs_case(derive_seed(config.seed, &[3, i as u64])))
            .collect::<anyhow::Result<Vec<_>>>()
    })?;
    for r in gibbs {
        sec.add(
            holds(r.gap, r.bound, AUDIT_SLACK, inject_bug),
            r.bound - r.gap,
        );
    }
    report.sections.push(sec.finish(config.gibbs_targets));

    // The k–μ relation.
    let mut sec = Section::new("kmu-identity");
    let (checked, failures) =
        kmu_identity_audit(config.kmu_tuples, derive_seed(config.seed, &[4]))?;
    sec.checked += checked;
    // Reversed, `ulp ≤ |μ − want|` fails exactly where the identity held.
    sec.failed += if inject_bug {
        checked - failures
    } else {
        failures
    };
    if checked > 0 {
        sec.worst = sec.worst.min(0.0);
    }
    report.sections.push(sec.finish(config.kmu_tuples));

    // Lipschitz concentration.
    let mut sec = Section::new("concentration");
    if config.concentration_samples > 0 {
        for (i, (target, ell, mean)) in concentration_targets(derive_seed(config.seed, &[5]))?
            .into_iter()
            .enumerate()
        {
            let mu = target
                .strong_convexity
                .expect("targets are strongly convex");
            let t_grid: Vec<f64> = [0.5, 1.0, 2.0].iter().map(|t| t / mu.sqrt()).collect();
            let cfg = concentration_sampler(
                &target,
                config.concentration_samples,
                derive_seed(config.seed, &[6, i as u64]),
            );
            let rows = concentration_check(&target, &*ell, 1.0, &t_grid, mean, &cfg)
                .with_context(|| format!("concentration target {i}"))?;
            for r in rows {
                sec.add(
                    holds(r.tail, r.bound + r.slack, 0.0, inject_bug),
                    r.bound + r.slack - r.tail,
                );
            }
        }
    }
    report
        .sections
        .push(sec.finish(config.concentration_samples));

    // End-to-end privacy of small one-dimensional mechanisms.
    let mut sec = Section::new("mechanism-privacy");
    let mech = pool.install(|| {
        (0..config.mechanism_cases)
            .into_par_iter()
            .map(|i| {
                let case = random_mechanism_case_1d(derive_seed(config.seed, &[7, i as u64]))?;
                let lhs = mechanism_privacy_1d(&case)?;
                Ok((i, case.params.epsilon, lhs, case.params.delta))
            })
            .collect::<dpnormopt_core::Result<Vec<_>>>()
    })?;
    for (i, eps, lhs, delta) in mech {
        let r = row(
            format!("mechanism/{i}"),
            eps,
            lhs,
            delta,
            AUDIT_SLACK,
            inject_bug,
        );
        sec.add(r.pass, r.margin);
        report.rows.push(r);
    }
    report.sections.push(sec.finish(config.mechanism_cases));

    Ok(report)
}

/// One random convex target in one or two dimensions, checked by quadrature.
pub fn gibbs_case(seed: u64) -> anyhow::Result<audit::GibbsRiskReport> {
    let mut rng = seeded(seed);
    let d = if rng.random_bool(0.5) { 1 } else { 2 };
    let f = RandomConvex::draw(d, &mut rng);
    let domain = if d == 1 {
        let a = rng.random_range(0.3..3.0);
        let b = rng.random_range(0.3..3.0);
        Domain::interval(-a, b)?
    } else if rng.random_bool(0.5) {
        Domain::ball(
            NormSpec::lp(2.0, 2)?,
            vec![0.0, 0.0],
            rng.random_range(0.5..3.0),
        )?
    } else {
        let lo = vec![-rng.random_range(0.3..2.0), -rng.random_range(0.3..2.0)];
        let hi = vec![rng.random_range(0.3..2.0), rng.random_range(0.3..2.0)];
        Domain::boxed(NormSpec::lp(2.0, 2)?, lo, hi)?
    };
    let k = 10f64.powf(rng.random_range(-0.5..1.7));
    Ok(gibbs_risk_check(
        Arc::new(move |x: &[f64]| f.value(x)),
        &domain,
        k,
        &RiskMethod::Quadrature,
    )?)
}

type Ell = Box<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// The Gaussian target `x²/2` and two random strongly convex targets, each
/// paired with a 1-Lipschitz (Euclidean) statistic and its exact mean when
/// known.
pub fn concentration_targets(seed: u64) -> anyhow::Result<Vec<(GibbsTarget, Ell, Option<f64>)>> {
    let mut rng = seeded(seed);
    let mut out: Vec<(GibbsTarget, Ell, Option<f64>)> = Vec::new();
    let gauss = GibbsTarget::new(
        Arc::new(FnPotential::new(1, |x| 0.5 * x[0] * x[0])),
        Domain::interval(-12.0, 12.0)?,
    )?
    .with_strong_convexity(1.0);
    out.push((gauss, Box::new(|x: &[f64]| x[0]), Some(0.0)));

    for d in [1usize, 2] {
        let mu = rng.random_range(0.5..4.0);
        let f = RandomConvex::draw(d, &mut rng);
        let pot = FnPotential::new(d, move |x| {
            0.5 * mu * x.iter().map(|v| v * v).sum::<f64>() + f.value(x)
        });
        let domain = if d == 1 {
            Domain::interval(-4.0, 4.0)?
        } else {
            Domain::ball(NormSpec::lp(2.0, 2)?, vec![0.0; 2], 4.0)?
        };
        let target = GibbsTarget::new(Arc::new(pot), domain)?.with_strong_convexity(mu);
        let theta: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let (c, s) = (theta.cos(), theta.sin());
        let ell: Ell = if d == 1 {
            Box::new(|x: &[f64]| x[0])
        } else {
            Box::new(move |x: &[f64]| c * x[0] + s * x[1])
        };
        out.push((target, ell, None));
    }
    Ok(out)
}

/// Exact draws in one dimension; widely thinned hit-and-run otherwise, so the
/// draws are close to independent. The potentials have no gradients, so chords
/// use quadrature and the query budget is lifted.
pub fn concentration_sampler(target: &GibbsTarget, n: usize, seed: u64) -> SamplerConfig {
    if target.domain.dim() == 1 {
        SamplerConfig::new(SamplerMethod::Exact1d, n, seed)
    } else {
        let mut c = SamplerConfig::new(SamplerMethod::HitAndRun, n, seed);
        c.burn_in = Some(500);
        c.thinning = Some(10);
        c.max_queries = u64::MAX;
        c
    }
}
