//! Datasets, convex Lipschitz loss families, and empirical/population risk.

use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Error, Result};
use crate::geometry::{axpy, dot, l2, sub, Domain, NormSpec};
use crate::rng::seeded;

/// One data point: features `a` (flattened row-major for matrices) and a
/// label `b` (ignored by the linear family).
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: f64,
}

impl Sample {
    pub fn new(features: Vec<f64>, label: f64) -> Self {
        Self { features, label }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossFamily {
    /// `⟨a, x⟩`
    Linear,
    /// `|⟨a, x⟩ − b|`
    AbsLinear,
    /// `max(0, 1 − b⟨a, x⟩)`
    Hinge,
}

impl LossFamily {
    pub fn loss(&self, s: &Sample, x: &[f64]) -> f64 {
        self.loss_at(dot(&s.features, x), s.label)
    }

    #[inline]
    fn loss_at(&self, z: f64, b: f64) -> f64 {
        match self {
            Self::Linear => z,
            Self::AbsLinear => (z - b).abs(),
            Self::Hinge => (1.0 - b * z).max(0.0),
        }
    }

    /// Derivative of the loss in `z = ⟨a, x⟩` (right derivative at kinks).
    #[inline]
    fn slope_at(&self, z: f64, b: f64) -> f64 {
        match self {
            Self::Linear => 1.0,
            Self::AbsLinear => {
                if z >= b {
                    1.0
                } else {
                    -1.0
                }
            }
            Self::Hinge => {
                if 1.0 - b * z > 0.0 {
                    -b
                } else {
                    0.0
                }
            }
        }
    }

    /// Lipschitz constant of one sample's loss given the dual norm of `a`.
    pub fn sample_lipschitz(&self, s: &Sample, dual_norm: f64) -> f64 {
        match self {
            Self::Hinge => s.label.abs() * dual_norm,
            _ => dual_norm,
        }
    }

    pub fn needs_labels(&self) -> bool {
        !matches!(self, Self::Linear)
    }
}

/// A dataset with a loss family. The Lipschitz constant `G` in the problem
/// norm is computed from the data at construction.
#[derive(Clone, Debug)]
pub struct LossModel {
    family: LossFamily,
    samples: Vec<Sample>,
    norm: NormSpec,
    lipschitz: f64,
}

impl LossModel {
    pub fn new(family: LossFamily, samples: Vec<Sample>, norm: NormSpec) -> Result<Self> {
        if samples.is_empty() {
            return invalid("dataset must contain at least one sample");
        }
        let dual = norm.dual();
        let mut g: f64 = 0.0;
        for s in &samples {
            check_dim(norm.dim(), s.features.len())?;
            if s.features.iter().any(|v| !v.is_finite()) || !s.label.is_finite() {
                return Err(Error::Dataset("non-finite feature or label".into()));
            }
            g = g.max(family.sample_lipschitz(s, dual.value(&s.features)));
        }
        Ok(Self {
            family,
            samples,
            norm,
            lipschitz: g,
        })
    }

    pub fn family(&self) -> LossFamily {
        self.family
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn norm(&self) -> &NormSpec {
        &self.norm
    }

    pub fn n(&self) -> usize {
        self.samples.len()
    }

    pub fn dim(&self) -> usize {
        self.norm.dim()
    }

    /// The Lipschitz constant `G` of every per-sample loss in the problem norm.
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    /// `F_D(x) = (1/n) Σ f(x; s_i)`.
    pub fn empirical_risk(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        Ok(self.risk_unchecked(x))
    }

    pub(crate) fn risk_unchecked(&self, x: &[f64]) -> f64 {
        let s: f64 = self.samples.iter().map(|s| self.family.loss(s, x)).sum();
        s / self.n() as f64
    }

    /// A subgradient of `F_D` at `x`.
    pub fn subgradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        let mut g = vec![0.0; self.dim()];
        let inv = 1.0 / self.n() as f64;
        for s in &self.samples {
            let w = self.family.slope_at(dot(&s.features, x), s.label) * inv;
            if w != 0.0 {
                g.iter_mut()
                    .zip(&s.features)
                    .for_each(|(gi, ai)| *gi += w * ai);
            }
        }
        Ok(g)
    }

    /// Precomputes `⟨a_i, x⟩` and `⟨a_i, u⟩` so that `t ↦ F_D(x + t·u)` costs
    /// `O(n)` per evaluation.
    pub fn restrict(&self, x: &[f64], u: &[f64]) -> LineRestriction {
        let alpha = self.samples.iter().map(|s| dot(&s.features, x)).collect();
        let beta = self.samples.iter().map(|s| dot(&s.features, u)).collect();
        let labels = self.samples.iter().map(|s| s.label).collect();
        LineRestriction {
            family: self.family,
            alpha,
            beta,
            labels,
        }
    }

    /// The model with sample `index` replaced: a neighboring dataset.
    pub fn neighboring_perturbation(&self, index: usize, replacement: Sample) -> Result<Self> {
        if index >= self.n() {
            return invalid(format!(
                "sample index {index} out of range for n = {}",
                self.n()
            ));
        }
        let mut samples = self.samples.clone();
        samples[index] = replacement;
        Self::new(self.family, samples, self.norm)
    }

    /// Same family and norm, different samples.
    pub fn with_samples(&self, samples: Vec<Sample>) -> Result<Self> {
        Self::new(self.family, samples, self.norm)
    }
}

/// `t ↦ F_D(x + t·u)` with its derivative.
#[derive(Clone, Debug)]
pub struct LineRestriction {
    family: LossFamily,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    labels: Vec<f64>,
}

impl LineRestriction {
    pub fn value(&self, t: f64) -> f64 {
        let mut s = 0.0;
        for i in 0..self.alpha.len() {
            s += self
                .family
                .loss_at(self.alpha[i] + t * self.beta[i], self.labels[i]);
        }
        s / self.alpha.len() as f64
    }

    /// Value and right derivative.
    pub fn value_and_slope(&self, t: f64) -> (f64, f64) {
        let (mut v, mut d) = (0.0, 0.0);
        for i in 0..self.alpha.len() {
            let z = self.alpha[i] + t * self.beta[i];
            v += self.family.loss_at(z, self.labels[i]);
            d += self.family.slope_at(z, self.labels[i]) * self.beta[i];
        }
        let inv = 1.0 / self.alpha.len() as f64;
        (v * inv, d * inv)
    }
}

/// Label rule of a planted population.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlantedLabels {
    Zero,
    /// `b = ⟨a, x*⟩`, so the abs-linear population risk vanishes at `x*`.
    Linear,
    /// `b = sign⟨a, x*⟩`.
    Sign,
}

/// How synthetic data is drawn.
#[derive(Clone, Debug, PartialEq)]
pub enum Generator {
    PointMass(Sample),
    /// Uniform over a finite list.
    UniformOver(Vec<Sample>),
    /// Features with a Gaussian direction rescaled to dual norm
    /// `feature_scale`, labelled from a planted point `x_star`. With
    /// `rank = Some(r)` the Gaussian is restricted to a fixed random
    /// `r`-dimensional subspace drawn from `subspace_seed`.
    Planted {
        norm: NormSpec,
        x_star: Vec<f64>,
        feature_scale: f64,
        labels: PlantedLabels,
        rank: Option<usize>,
        subspace_seed: u64,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct PopulationSpec {
    pub generator: Generator,
    /// A known minimizer of the population risk, if any.
    pub reference_minimizer: Option<Vec<f64>>,
}

impl PopulationSpec {
    pub fn point_mass(s: Sample) -> Self {
        Self {
            generator: Generator::PointMass(s),
            reference_minimizer: None,
        }
    }

    pub fn uniform_over(samples: Vec<Sample>) -> Result<Self> {
        if samples.is_empty() {
            return invalid("uniform population needs at least one sample");
        }
        Ok(Self {
            generator: Generator::UniformOver(samples),
            reference_minimizer: None,
        })
    }

    /// Planted population. For `PlantedLabels::Linear` the planted point is
    /// recorded as the reference minimizer (of the abs-linear risk).
    pub fn planted(
        norm: NormSpec,
        x_star: Vec<f64>,
        feature_scale: f64,
        labels: PlantedLabels,
        rank: Option<usize>,
        subspace_seed: u64,
    ) -> Result<Self> {
        check_dim(norm.dim(), x_star.len())?;
        if !(feature_scale > 0.0) {
            return invalid("feature scale must be positive");
        }
        if let Some(r) = rank {
            if r == 0 || r > norm.dim() {
                return invalid(format!(
                    "subspace rank must be in [1, {}], got {r}",
                    norm.dim()
                ));
            }
        }
        let reference_minimizer = (labels == PlantedLabels::Linear).then(|| x_star.clone());
        Ok(Self {
            generator: Generator::Planted {
                norm,
                x_star,
                feature_scale,
                labels,
                rank,
                subspace_seed,
            },
            reference_minimizer,
        })
    }

    /// Draws `n` i.i.d. samples.
    pub fn draw<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Sample> {
        match &self.generator {
            Generator::PointMass(s) => vec![s.clone(); n],
            Generator::UniformOver(list) => (0..n)
                .map(|_| list[rng.random_range(0..list.len())].clone())
                .collect(),
            Generator::Planted {
                norm,
                x_star,
                feature_scale,
                labels,
                rank,
                subspace_seed,
            } => {
                let dual = norm.dual();
                let d = norm.dim();
                let basis = rank.map(|r| subspace_basis(d, r, *subspace_seed));
                (0..n)
                    .map(|_| {
                        let a = loop {
                            let g: Vec<f64> = match &basis {
                                None => (0..d).map(|_| rng.sample(StandardNormal)).collect(),
                                Some(b) => {
                                    let mut v = vec![0.0; d];
                                    for col in b {
                                        let z: f64 = rng.sample(StandardNormal);
                                        v.iter_mut().zip(col).for_each(|(vi, ci)| *vi += z * ci);
                                    }
                                    v
                                }
                            };
                            let nd = dual.value(&g);
                            if nd > 1e-12 {
                                break g
                                    .into_iter()
                                    .map(|v| v * feature_scale / nd)
                                    .collect::<Vec<_>>();
                            }
                        };
                        let z = dot(&a, x_star);
                        let b = match labels {
                            PlantedLabels::Zero => 0.0,
                            PlantedLabels::Linear => z,
                            PlantedLabels::Sign => {
                                if z >= 0.0 {
                                    1.0
                                } else {
                                    -1.0
                                }
                            }
                        };
                        Sample::new(a, b)
                    })
                    .collect()
            }
        }
    }
}

/// Orthonormal basis of a random `r`-dimensional subspace of `ℝ^d`.
fn subspace_basis(d: usize, r: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = seeded(seed);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(r);
    while basis.len() < r {
        let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        for b in &basis {
            let c = dot(&v, b);
            v = axpy(&v, -c, b);
        }
        let n = l2(&v);
        if n > 1e-8 {
            basis.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    basis
}

/// Monte Carlo estimate of `F_pop(x)` from `m` fresh samples, returning the
/// mean and its standard error.
pub fn population_risk_estimate(
    spec: &PopulationSpec,
    family: LossFamily,
    x: &[f64],
    m: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if m < 2 {
        return invalid("population estimate needs m >= 2");
    }
    let mut rng = seeded(seed);
    let samples = spec.draw(m, &mut rng);
    for s in &samples {
        check_dim(s.features.len(), x.len())?;
    }
    let vals: Vec<f64> = samples.iter().map(|s| family.loss(s, x)).collect();
    Ok(mean_stderr(&vals))
}

pub(crate) fn mean_stderr(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Largest observed `|f(x) − f(y)|/‖x − y‖` over `trials` random domain pairs
/// and, when a subgradient oracle is given, as many short steps along the
/// direction that aligns with the subgradient (where the ratio is close to the
/// dual norm of the subgradient).
pub fn lipschitz_audit_fn(
    f: &dyn Fn(&[f64]) -> f64,
    subgradient: Option<&dyn Fn(&[f64]) -> Vec<f64>>,
    dom: &Domain,
    trials: usize,
    seed: u64,
) -> f64 {
    let norm = *dom.geometry();
    let mut rng = seeded(seed);
    let mut worst: f64 = 0.0;
    let step0 = 1e-4 * dom.diameter(&norm).max(f64::MIN_POSITIVE);
    for _ in 0..trials {
        let x = dom.random_point(&mut rng);
        let y = dom.random_point(&mut rng);
        let dxy = norm.value(&sub(&x, &y));
        if dxy > 0.0 {
            worst = worst.max((f(&x) - f(&y)).abs() / dxy);
        }
        if let Some(grad) = subgradient {
            let v = norm.aligned_direction(&grad(&x));
            if v.iter().all(|c| *c == 0.0) {
                continue;
            }
            // Step backwards so a kink at x does not reduce the ratio.
            let mut h = step0;
            let mut z = axpy(&x, -h, &v);
            while !dom.contains(&z) && h > 1e-14 {
                h *= 0.5;
                z = axpy(&x, -h, &v);
            }
            let dz = norm.value(&sub(&x, &z));
            if dom.contains(&z) && dz > 0.0 {
                worst = worst.max((f(&x) - f(&z)).abs() / dz);
            }
        }
    }
    worst
}

/// [`lipschitz_audit_fn`] applied to `F_D`.
pub fn lipschitz_audit(model: &LossModel, dom: &Domain, trials: usize, seed: u64) -> f64 {
    let f = |x: &[f64]| model.risk_unchecked(x);
    let g = |x: &[f64]| {
        model
            .subgradient(x)
            .expect("dimensions checked by the domain")
    };
    lipschitz_audit_fn(&f, Some(&g), dom, trials, seed)
}

/// Reads a dataset: a header `a_1,...,a_d` optionally followed by `b`, then
/// one sample per row.
pub fn load_csv(path: &Path, norm: &NormSpec, family: LossFamily) -> Result<Vec<Sample>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let d = norm.dim();
    let headers = rdr.headers()?.clone();
    let has_label = match headers.len() {
        n if n == d => false,
        n if n == d + 1 => true,
        n => {
            return Err(Error::Dataset(format!(
                "{}: expected {d} or {} columns, found {n}",
                path.display(),
                d + 1
            )))
        }
    };
    for (i, h) in headers.iter().take(d).enumerate() {
        if h != format!("a_{}", i + 1) {
            return Err(Error::Dataset(format!(
                "{}: column {} should be named a_{}, found {h:?}",
                path.display(),
                i + 1,
                i + 1
            )));
        }
    }
    if has_label && &headers[d] != "b" {
        return Err(Error::Dataset(format!(
            "{}: last column should be named b",
            path.display()
        )));
    }
    if family.needs_labels() && !has_label {
        return Err(Error::Dataset(format!(
            "{}: loss family needs a label column b",
            path.display()
        )));
    }
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let vals: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        let vals =
            vals.map_err(|e| Error::Dataset(format!("{}: row {}: {e}", path.display(), row + 2)))?;
        let label = if has_label { vals[d] } else { 0.0 };
        out.push(Sample::new(vals[..d].to_vec(), label));
    }
    if out.is_empty() {
        return Err(Error::Dataset(format!("{}: no samples", path.display())));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn l2n(d: usize) -> NormSpec {
        NormSpec::lp(2.0, d).unwrap()
    }

    #[test]
    fn empirical_risk_examples() {
        let e1 = vec![1.0, 0.0, 0.0];
        let m = LossModel::new(
            LossFamily::Linear,
            vec![Sample::new(e1.clone(), 0.0); 4],
            l2n(3),
        )
        .unwrap();
        assert_eq!(m.empirical_risk(&[2.0, 0.0, 0.0]).unwrap(), 2.0);
        let m = LossModel::new(
            LossFamily::AbsLinear,
            vec![Sample::new(vec![1.0, 0.0], 1.0)],
            l2n(2),
        )
        .unwrap();
        assert_eq!(m.empirical_risk(&[3.0, 0.0]).unwrap(), 2.0);
        let m = LossModel::new(LossFamily::Hinge, vec![Sample::new(e1, 1.0)], l2n(3)).unwrap();
        assert_eq!(m.empirical_risk(&[5.0, 1.0, 1.0]).unwrap(), 0.0);
        assert!(LossModel::new(LossFamily::Linear, vec![], l2n(3)).is_err());
    }

    #[test]
    fn lipschitz_constant_uses_dual_norm() {
        // ℓ1 geometry: dual is ℓ∞.
        let n1 = NormSpec::lp(1.0, 3).unwrap();
        let m = LossModel::new(
            LossFamily::AbsLinear,
            vec![Sample::new(vec![1.0, -2.0, 0.5], 0.0)],
            n1,
        )
        .unwrap();
        assert_eq!(m.lipschitz(), 2.0);
        let m = LossModel::new(
            LossFamily::Hinge,
            vec![Sample::new(vec![1.0, -2.0, 0.5], -3.0)],
            n1,
        )
        .unwrap();
        assert_eq!(m.lipschitz(), 6.0);
    }

    #[test]
    fn population_examples() {
        let s0 = Sample::new(vec![1.0, 2.0], 0.5);
        let pm = PopulationSpec::point_mass(s0.clone());
        let x = [0.3, -0.1];
        let (m, se) = population_risk_estimate(&pm, LossFamily::AbsLinear, &x, 10, 1).unwrap();
        assert!((m - LossFamily::AbsLinear.loss(&s0, &x)).abs() < 1e-15);
        assert!(se < 1e-15);

        let pm = PopulationSpec::uniform_over(vec![
            Sample::new(vec![1.0, 0.0], 0.0),
            Sample::new(vec![-1.0, 0.0], 0.0),
        ])
        .unwrap();
        let (m, se) =
            population_risk_estimate(&pm, LossFamily::AbsLinear, &[1.0, 0.0], 1000, 2).unwrap();
        assert!((m - 1.0).abs() <= 3.0 * se + 1e-12);

        let n = l2n(3);
        let planted =
            PopulationSpec::planted(n, vec![0.0; 3], 1.0, PlantedLabels::Zero, None, 0).unwrap();
        let (m, se) =
            population_risk_estimate(&planted, LossFamily::Linear, &[0.4, 0.4, 0.4], 40_000, 3)
                .unwrap();
        assert!(m.abs() <= 4.0 * se);
        let a = population_risk_estimate(&planted, LossFamily::Linear, &[0.4, 0.4, 0.4], 500, 9)
            .unwrap();
        let b = population_risk_estimate(&planted, LossFamily::Linear, &[0.4, 0.4, 0.4], 500, 9)
            .unwrap();
        assert_eq!(a.0.to_bits(), b.0.to_bits());
        assert!(population_risk_estimate(&planted, LossFamily::Linear, &[0.0; 3], 1, 9).is_err());
    }

    #[test]
    fn planted_features_have_requested_dual_norm() {
        let n = NormSpec::lp(1.5, 6).unwrap();
        let spec = PopulationSpec::planted(n, vec![0.1; 6], 2.0, PlantedLabels::Linear, Some(2), 5)
            .unwrap();
        let mut rng = seeded(1);
        let samples = spec.draw(100, &mut rng);
        for s in &samples {
            assert!((n.dual().value(&s.features) - 2.0).abs() < 1e-12);
            assert!((s.label - dot(&s.features, &[0.1; 6])).abs() < 1e-15);
        }
        let m = LossModel::new(LossFamily::AbsLinear, samples, n).unwrap();
        assert!(m.empirical_risk(&[0.1; 6]).unwrap() < 1e-15);
    }

    #[test]
    fn lipschitz_audit_examples() {
        let n = NormSpec::lp(2.0, 2).unwrap();
        let dom = Domain::ball(n, vec![0.0, 0.0], 1.0).unwrap();
        let m = LossModel::new(
            LossFamily::Linear,
            vec![Sample::new(vec![0.6, 0.8], 0.0)],
            n,
        )
        .unwrap();
        assert!(lipschitz_audit(&m, &dom, 500, 1) <= 1.0 + 1e-9);

        let n15 = NormSpec::lp(1.5, 2).unwrap();
        let dom = Domain::ball(n15, vec![0.0, 0.0], 1.0).unwrap();
        let a = vec![1.0, 1.0];
        let scale = 2.0 / n15.dual().value(&a);
        let a: Vec<f64> = a.iter().map(|v| v * scale).collect();
        let m = LossModel::new(LossFamily::AbsLinear, vec![Sample::new(a, 0.3)], n15).unwrap();
        let w = lipschitz_audit(&m, &dom, 500, 2);
        assert!(
            w <= 2.0 * (1.0 + 1e-9) && w >= 2.0 - 1e-3,
            "worst ratio {w}"
        );

        let mut rng = seeded(3);
        let samples: Vec<Sample> = (0..20)
            .map(|_| {
                let f: Vec<f64> = (0..2).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
                Sample::new(f, if rng.random::<bool>() { 1.0 } else { -1.0 })
            })
            .collect();
        let m = LossModel::new(LossFamily::Hinge, samples, n15).unwrap();
        assert!(lipschitz_audit(&m, &dom, 500, 4) <= m.lipschitz() * (1.0 + 1e-9));
    }

    #[test]
    fn neighboring_examples() {
        let n = NormSpec::lp(2.0, 1).unwrap();
        let mut rng = seeded(8);
        let samples: Vec<Sample> = (0..7)
            .map(|_| Sample::new(vec![rng.random::<f64>() * 2.0 - 1.0], rng.random::<f64>()))
            .collect();
        let m = LossModel::new(LossFamily::AbsLinear, samples.clone(), n).unwrap();
        let same = m.neighboring_perturbation(0, samples[0].clone()).unwrap();
        for t in [-1.0, -0.3, 0.2, 0.9] {
            assert_eq!(
                m.empirical_risk(&[t]).unwrap(),
                same.empirical_risk(&[t]).unwrap()
            );
        }
        assert!(m.neighboring_perturbation(7, samples[0].clone()).is_err());

        // sup |F_D − F_D′| ≤ 2G·diam/n after removing the constant offset at
        // the left endpoint, checked on a grid over [−1, 1].
        let repl = Sample::new(vec![-0.9], -0.4);
        let other = m.neighboring_perturbation(3, repl.clone()).unwrap();
        let g = m.lipschitz().max(other.lipschitz());
        let off = m.empirical_risk(&[-1.0]).unwrap() - other.empirical_risk(&[-1.0]).unwrap();
        let worst = (0..=2000)
            .map(|i| -1.0 + i as f64 / 1000.0)
            .map(|t| {
                (m.empirical_risk(&[t]).unwrap() - other.empirical_risk(&[t]).unwrap() - off).abs()
            })
            .fold(0.0, f64::max);
        assert!(worst <= 2.0 * g * 2.0 / 7.0 + 1e-12);

        let single = LossModel::new(LossFamily::AbsLinear, vec![samples[0].clone()], n).unwrap();
        let swapped = single.neighboring_perturbation(0, repl.clone()).unwrap();
        assert_eq!(
            swapped.empirical_risk(&[0.3]).unwrap(),
            LossFamily::AbsLinear.loss(&repl, &[0.3])
        );
    }

    #[test]
    fn line_restriction_matches_direct_evaluation() {
        let n = NormSpec::lp(1.5, 3).unwrap();
        let spec =
            PopulationSpec::planted(n, vec![0.2, -0.1, 0.3], 1.0, PlantedLabels::Linear, None, 0)
                .unwrap();
        let mut rng = seeded(4);
        let m = LossModel::new(LossFamily::AbsLinear, spec.draw(50, &mut rng), n).unwrap();
        let x = [0.1, 0.1, 0.1];
        let u = [0.6, 0.0, 0.8];
        let lr = m.restrict(&x, &u);
        for t in [-0.5, 0.0, 0.37] {
            let direct = m.empirical_risk(&axpy(&x, t, &u)).unwrap();
            assert!((lr.value(t) - direct).abs() < 1e-14);
            let (_, slope) = lr.value_and_slope(t);
            let g = m.subgradient(&axpy(&x, t, &u)).unwrap();
            assert!((slope - dot(&g, &u)).abs() < 1e-14);
        }
    }

    #[test]
    fn csv_loader_validates_header_and_dimension() {
        let n = NormSpec::lp(2.0, 2).unwrap();
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "a_1,a_2,b\n1,0,1\n0.5,-0.5,0").unwrap();
        let s = load_csv(f.path(), &n, LossFamily::AbsLinear).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[1], Sample::new(vec![0.5, -0.5], 0.0));

        let mut g = tempfile::NamedTempFile::new().unwrap();
        writeln!(g, "a_1,a_2\n1,0").unwrap();
        assert!(load_csv(g.path(), &n, LossFamily::Linear).is_ok());
        assert!(load_csv(g.path(), &n, LossFamily::Hinge).is_err());
        let n3 = NormSpec::lp(2.0, 3).unwrap();
        assert!(load_csv(f.path(), &n3, LossFamily::AbsLinear).is_err());
        let mut h = tempfile::NamedTempFile::new().unwrap();
        writeln!(h, "x,y,b\n1,0,1").unwrap();
        assert!(load_csv(h.path(), &n, LossFamily::AbsLinear).is_err());
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn model_from(seed: u64, family: LossFamily, n: usize) -> (LossModel, Domain) {
        let norm = NormSpec::lp(1.5, 3).unwrap();
        let mut rng = seeded(seed);
        let samples = (0..n)
            .map(|_| {
                let a: Vec<f64> = (0..3).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
                Sample::new(a, rng.random::<f64>() * 2.0 - 1.0)
            })
            .collect();
        let dom = Domain::ball(norm, vec![0.0; 3], 1.0).unwrap();
        (LossModel::new(family, samples, norm).unwrap(), dom)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn empirical_risk_is_midpoint_convex(seed in any::<u64>(), fam in 0usize..3) {
            let family = [LossFamily::Linear, LossFamily::AbsLinear, LossFamily::Hinge][fam];
            let (m, dom) = model_from(seed, family, 9);
            let mut rng = seeded(seed ^ 1);
            for _ in 0..20 {
                let x = dom.random_point(&mut rng);
                let y = dom.random_point(&mut rng);
                let mid: Vec<f64> = x.iter().zip(&y).map(|(a, b)| 0.5 * (a + b)).collect();
                let lhs = m.empirical_risk(&mid).unwrap();
                let rhs = 0.5 * (m.empirical_risk(&x).unwrap() + m.empirical_risk(&y).unwrap());
                prop_assert!(lhs <= rhs + 1e-10);
            }
        }

        #[test]
        fn neighbor_difference_is_2g_over_n_lipschitz(seed in any::<u64>(), idx in 0usize..6) {
            let (m, dom) = model_from(seed, LossFamily::AbsLinear, 6);
            let mut rng = seeded(seed ^ 2);
            let a: Vec<f64> = (0..3).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let scale = m.lipschitz() / m.norm().dual().value(&a);
            let a: Vec<f64> = a.into_iter().map(|v| v * scale).collect();
            let other = m.neighboring_perturbation(idx, Sample::new(a, 0.2)).unwrap();
            let f = |x: &[f64]| m.empirical_risk(x).unwrap() - other.empirical_risk(x).unwrap();
            let g = |x: &[f64]| {
                let g1 = m.subgradient(x).unwrap();
                let g2 = other.subgradient(x).unwrap();
                sub(&g1, &g2)
            };
            let worst = lipschitz_audit_fn(&f, Some(&g), &dom, 200, seed);
            prop_assert!(worst <= 2.0 * m.lipschitz() / 6.0 * (1.0 + 1e-9));
        }
    }
}
