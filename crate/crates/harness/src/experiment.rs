//! Grid experiments: repeated mechanism runs over `(d, n, ε)` cells with
//! excess-risk measurements and the matching analytic bounds.

use std::sync::Arc;
use std::time::Instant;

use anyhow::{anyhow, bail, Context};
use dpnormopt_core::geometry::random_unit_vector;
use dpnormopt_core::losses::{load_csv, Generator, PlantedLabels};
use dpnormopt_core::mechanism::{self, corollary_bounds, solve_private, PrivacyBudget};
use dpnormopt_core::minimize::minimize_empirical_risk;
use dpnormopt_core::regularizers::regularizer_for;
use dpnormopt_core::rng::{derive_seed, seeded};
use dpnormopt_core::{Domain, LossFamily, LossModel, NormSpec, PopulationSpec, Sample, Variant};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{DataConfig, ExperimentConfig};

/// One mechanism run; the columns of the per-run CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub d: usize,
    pub n: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub rep: usize,
    /// `erm`, `sco`, or `sco-empirical` when no population minimizer is
    /// known and the empirical gap is reported instead.
    pub variant: String,
    pub p: f64,
    pub empirical_gap: f64,
    pub analytic_bound: f64,
    pub value_queries: u64,
    pub runtime_ms: f64,
    pub seed: u64,
}

/// A run that did not produce a record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub d: usize,
    pub n: usize,
    pub epsilon: f64,
    pub rep: usize,
    pub seed: u64,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub records: Vec<Record>,
    /// Standard error of each record's gap measurement (population Monte
    /// Carlo for SCO runs, 0 otherwise), aligned with `records`.
    pub measurement_stderr: Vec<f64>,
    pub failures: Vec<RunFailure>,
}

/// Mean ± standard error over the repetitions of one cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub d: usize,
    pub n: usize,
    pub epsilon: f64,
    pub reps: usize,
    pub mean_gap: f64,
    pub stderr: f64,
    pub analytic_bound: f64,
    pub mean_value_queries: f64,
    /// `mean_gap ≤ analytic_bound + 3·stderr`.
    pub within_bound: bool,
}

/// Least-squares slope of `ln(mean gap)` against `ln n` at fixed `(d, ε)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingSlope {
    pub d: usize,
    pub epsilon: f64,
    pub slope: f64,
    pub points: usize,
}

struct Job {
    d: usize,
    n: usize,
    epsilon: f64,
    rep: usize,
    seed: u64,
}

/// Data shared by every run of one dimension.
struct DimensionSetup {
    norm: NormSpec,
    domain: Domain,
    source: Source,
}

enum Source {
    Population {
        spec: PopulationSpec,
        x_star: Vec<f64>,
    },
    Rows(Vec<Sample>),
    Constant,
}

/// Seed of run `(d, n, ε, rep)`.
pub fn run_seed(master: u64, d: usize, n: usize, epsilon: f64, rep: usize) -> u64 {
    derive_seed(master, &[d as u64, n as u64, epsilon.to_bits(), rep as u64])
}

const TAG_DATA: u64 = 1;
const TAG_SAMPLER: u64 = 2;
const TAG_POPULATION: u64 = 3;
const TAG_X_STAR: u64 = 4;
const TAG_SUBSPACE: u64 = 5;

fn setup(config: &ExperimentConfig, d: usize) -> anyhow::Result<DimensionSetup> {
    let norm = config.geometry.norm(d)?;
    let domain = config.domain.build(norm)?;
    let source = match &config.data {
        DataConfig::Planted {
            labels,
            feature_scale,
            x_star_scale,
            rank,
        } => {
            let mut rng = seeded(derive_seed(config.seed, &[TAG_X_STAR, d as u64]));
            let u = random_unit_vector(&mut rng, d);
            let s = norm.value(&u);
            let x_star: Vec<f64> = u.iter().map(|v| v * x_star_scale / s).collect();
            if !domain.contains(&x_star) {
                bail!("planted point with norm {x_star_scale} lies outside the domain for d = {d}");
            }
            let spec = PopulationSpec::planted(
                norm,
                x_star.clone(),
                *feature_scale,
                *labels,
                *rank,
                derive_seed(config.seed, &[TAG_SUBSPACE, d as u64]),
            )?;
            Source::Population { spec, x_star }
        }
        DataConfig::Csv { path } => Source::Rows(
            load_csv(path, &norm, config.loss)
                .with_context(|| format!("loading {}", path.display()))?,
        ),
        DataConfig::Constant => Source::Constant,
    };
    Ok(DimensionSetup {
        norm,
        domain,
        source,
    })
}

/// Output of a single mechanism run before it is flattened into a record.
struct RunOutcome {
    gap: f64,
    stderr: f64,
    bound: f64,
    queries: u64,
    label: &'static str,
}

fn run_one(
    config: &ExperimentConfig,
    setup: &DimensionSetup,
    job: &Job,
) -> anyhow::Result<RunOutcome> {
    let n = job.n;
    let mut rng = seeded(derive_seed(job.seed, &[TAG_DATA]));
    let samples = match &setup.source {
        Source::Population { spec, .. } => spec.draw(n, &mut rng),
        Source::Rows(rows) => {
            if n > rows.len() {
                bail!("n = {n} exceeds the {} rows of the dataset", rows.len());
            }
            rand_subset(rows, n, &mut rng)
        }
        Source::Constant => vec![Sample::new(vec![0.0; job.d], 0.0); n],
    };
    let model = LossModel::new(config.loss, samples, setup.norm)?;
    let budget = PrivacyBudget::with_split(job.epsilon, config.delta, config.tv_fraction)?;
    let g = model.lipschitz();
    let reference_label = match (&setup.source, config.variant) {
        (Source::Population { spec, .. }, Variant::Sco)
            if population_reference(spec, config.loss) =>
        {
            "sco"
        }
        (_, Variant::Sco) => "sco-empirical",
        _ => "erm",
    };
    if g == 0.0 {
        // Constant losses: every point is optimal and the output cannot depend on the data.
        return Ok(RunOutcome {
            gap: 0.0,
            stderr: 0.0,
            bound: 0.0,
            queries: 0,
            label: reference_label,
        });
    }

    let center = setup.domain.center();
    let reg = regularizer_for(&setup.domain, &center)?;
    let dim = setup.norm.dim();
    let params = match config.variant {
        Variant::Erm => mechanism::erm_params(
            g,
            reg.theta,
            dim,
            n,
            job.epsilon,
            budget.delta_mech(),
            config.sensitivity,
        )?,
        Variant::Sco => mechanism::sco_params(
            g,
            reg.theta,
            dim,
            n,
            job.epsilon,
            budget.delta_mech(),
            config.sensitivity,
        )?,
        v => bail!("variant {v} is not supported by experiments"),
    };
    let sampler = config.sampler_for(derive_seed(job.seed, &[TAG_SAMPLER]));
    let model = Arc::new(model);
    let (x, report) = solve_private(
        model.clone(),
        Some(reg),
        setup.domain.clone(),
        &params,
        &sampler,
        budget.delta_tv(),
    )?;

    let cg = config.sensitivity.value() * g;
    let (erm_bound, sco_bound) = corollary_bounds(
        &setup.norm,
        cg,
        setup.domain.diameter(&setup.norm),
        n,
        job.epsilon,
        budget.delta_mech(),
    )?;

    let (gap, stderr) = match (reference_label, &setup.source) {
        ("sco", Source::Population { spec, x_star }) => population_gap(
            spec,
            config.loss,
            &x,
            x_star,
            config.population_samples,
            job.seed,
        )?,
        _ => {
            let hints = match &setup.source {
                Source::Population { x_star, .. } => vec![x_star.clone()],
                _ => vec![],
            };
            let best =
                minimize_empirical_risk(&model, &setup.domain, &hints, config.minimize_iterations)?;
            (model.empirical_risk(&x)? - best.value, 0.0)
        }
    };
    let bound = if config.variant == Variant::Sco {
        sco_bound
    } else {
        erm_bound
    };
    Ok(RunOutcome {
        gap,
        stderr,
        bound,
        queries: report.sampler.value_queries,
        label: reference_label,
    })
}

/// Whether the planted point is a known population minimizer for `family`.
fn population_reference(spec: &PopulationSpec, family: LossFamily) -> bool {
    matches!(
        spec.generator,
        Generator::Planted {
            labels: PlantedLabels::Linear,
            ..
        }
    ) && family == LossFamily::AbsLinear
        && spec.reference_minimizer.is_some()
}

/// Paired Monte Carlo estimate of `F_pop(x) − F_pop(x*)`.
fn population_gap(
    spec: &PopulationSpec,
    family: LossFamily,
    x: &[f64],
    x_star: &[f64],
    m: usize,
    seed: u64,
) -> anyhow::Result<(f64, f64)> {
    let mut rng = seeded(derive_seed(seed, &[TAG_POPULATION]));
    let diffs: Vec<f64> = spec
        .draw(m, &mut rng)
        .iter()
        .map(|s| family.loss(s, x) - family.loss(s, x_star))
        .collect();
    Ok(mean_stderr(&diffs))
}

fn rand_subset<R: rand::Rng + ?Sized>(rows: &[Sample], n: usize, rng: &mut R) -> Vec<Sample> {
    rand::seq::index::sample(rng, rows.len(), n)
        .into_iter()
        .map(|i| rows[i].clone())
        .collect()
}

pub fn mean_stderr(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Runs every `(d, n, ε, rep)` of the grid on `pool`. Failed runs are
/// recorded and do not stop the others. Rows are ordered by `d`, `n`, `ε`,
/// then `rep`.
pub fn run_experiment(
    config: &ExperimentConfig,
    pool: &rayon::ThreadPool,
) -> anyhow::Result<ExperimentReport> {
    config.validate()?;
    let mut ds = config.ds.clone();
    ds.sort_unstable();
    ds.dedup();
    let mut ns = config.ns.clone();
    ns.sort_unstable();
    ns.dedup();
    let mut eps = config.epsilons.clone();
    eps.sort_by(f64::total_cmp);
    eps.dedup();

    let setups: Vec<(usize, DimensionSetup)> = ds
        .iter()
        .map(|&d| setup(config, d).map(|s| (d, s)))
        .collect::<anyhow::Result<_>>()?;
    let mut jobs = Vec::new();
    for (di, &d) in ds.iter().enumerate() {
        for &n in &ns {
            for &epsilon in &eps {
                for rep in 0..config.repetitions {
                    jobs.push((
                        di,
                        Job {
                            d,
                            n,
                            epsilon,
                            rep,
                            seed: run_seed(config.seed, d, n, epsilon, rep),
                        },
                    ));
                }
            }
        }
    }
    let p = config.geometry.p();
    let results: Vec<Result<(Record, f64), RunFailure>> = pool.install(|| {
        jobs.par_iter()
            .map(|(di, job)| {
                let start = Instant::now();
                let out = run_one(config, &setups[*di].1, job);
                let ms = start.elapsed().as_secs_f64() * 1e3;
                match out {
                    Ok(o) => Ok((
                        Record {
                            d: job.d,
                            n: job.n,
                            epsilon: job.epsilon,
                            delta: config.delta,
                            rep: job.rep,
                            variant: o.label.to_string(),
                            p,
                            empirical_gap: o.gap,
                            analytic_bound: o.bound,
                            value_queries: o.queries,
                            runtime_ms: if config.record_runtime { ms } else { 0.0 },
                            seed: job.seed,
                        },
                        o.stderr,
                    )),
                    Err(e) => Err(RunFailure {
                        d: job.d,
                        n: job.n,
                        epsilon: job.epsilon,
                        rep: job.rep,
                        seed: job.seed,
                        message: format!("{e:#}"),
                    }),
                }
            })
            .collect()
    });
    let mut report = ExperimentReport::default();
    for r in results {
        match r {
            Ok((rec, se)) => {
                report.records.push(rec);
                report.measurement_stderr.push(se);
            }
            Err(f) => report.failures.push(f),
        }
    }
    Ok(report)
}

/// Groups records by `(d, n, ε)` in row order.
pub fn summarize(records: &[Record]) -> Vec<CellSummary> {
    let mut out: Vec<CellSummary> = Vec::new();
    let mut i = 0;
    while i < records.len() {
        let r0 = &records[i];
        let mut j = i;
        while j < records.len()
            && (records[j].d, records[j].n, records[j].epsilon) == (r0.d, r0.n, r0.epsilon)
        {
            j += 1;
        }
        let cell = &records[i..j];
        let gaps: Vec<f64> = cell.iter().map(|r| r.empirical_gap).collect();
        let (mean_gap, stderr) = mean_stderr(&gaps);
        let analytic_bound = cell
            .iter()
            .map(|r| r.analytic_bound)
            .fold(f64::NEG_INFINITY, f64::max);
        let mean_value_queries =
            cell.iter().map(|r| r.value_queries as f64).sum::<f64>() / cell.len() as f64;
        out.push(CellSummary {
            d: r0.d,
            n: r0.n,
            epsilon: r0.epsilon,
            reps: cell.len(),
            mean_gap,
            stderr,
            analytic_bound,
            mean_value_queries,
            within_bound: mean_gap <= analytic_bound + 3.0 * stderr,
        });
        i = j;
    }
    out
}

/// Least-squares slope of `y` on `x`.
pub fn regression_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let m = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / m;
    let my = points.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}

/// `ln(mean gap)` against `ln n` for every `(d, ε)` with at least two `n`
/// values and positive means.
pub fn scaling_slopes(cells: &[CellSummary]) -> Vec<ScalingSlope> {
    let mut keys: Vec<(usize, f64)> = cells.iter().map(|c| (c.d, c.epsilon)).collect();
    keys.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    keys.dedup();
    keys.into_iter()
        .filter_map(|(d, epsilon)| {
            let pts: Vec<(f64, f64)> = cells
                .iter()
                .filter(|c| c.d == d && c.epsilon == epsilon && c.mean_gap > 0.0)
                .map(|c| ((c.n as f64).ln(), c.mean_gap.ln()))
                .collect();
            regression_slope(&pts).map(|slope| ScalingSlope {
                d,
                epsilon,
                slope,
                points: pts.len(),
            })
        })
        .collect()
}

/// One mechanism draw for the first grid entry of `config`, with the same
/// data and sampler seeds as repetition 0 of `run`.
pub fn sample_once(
    config: &ExperimentConfig,
) -> anyhow::Result<(Vec<f64>, mechanism::PrivateReport)> {
    config.validate()?;
    let (d, n, epsilon) = (config.ds[0], config.ns[0], config.epsilons[0]);
    let setup = setup(config, d)?;
    let seed = run_seed(config.seed, d, n, epsilon, 0);
    let mut rng = seeded(derive_seed(seed, &[TAG_DATA]));
    let samples = match &setup.source {
        Source::Population { spec, .. } => spec.draw(n, &mut rng),
        Source::Rows(rows) => {
            if n > rows.len() {
                bail!("n = {n} exceeds the {} rows of the dataset", rows.len());
            }
            rand_subset(rows, n, &mut rng)
        }
        Source::Constant => return Err(anyhow!("constant data has nothing to sample")),
    };
    let model = LossModel::new(config.loss, samples, setup.norm)?;
    let g = model.lipschitz();
    let budget = PrivacyBudget::with_split(epsilon, config.delta, config.tv_fraction)?;
    let reg = regularizer_for(&setup.domain, &setup.domain.center())?;
    let params = match config.variant {
        Variant::Sco => mechanism::sco_params(
            g,
            reg.theta,
            d,
            n,
            epsilon,
            budget.delta_mech(),
            config.sensitivity,
        )?,
        _ => mechanism::erm_params(
            g,
            reg.theta,
            d,
            n,
            epsilon,
            budget.delta_mech(),
            config.sensitivity,
        )?,
    };
    let sampler = config.sampler_for(derive_seed(seed, &[TAG_SAMPLER]));
    let out = solve_private(
        Arc::new(model),
        Some(reg),
        setup.domain,
        &params,
        &sampler,
        budget.delta_tv(),
    )?;
    Ok(out)
}
