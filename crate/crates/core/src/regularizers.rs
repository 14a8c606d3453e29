//! Strongly convex regularizers and their range bounds `Θ`.
//!
//! The presets are scaled squared norms `coef·‖x − x₀‖²` that are 1-strongly
//! convex in the problem norm:
//!
//! | geometry            | norm inside          | coefficient        | `Θ`                       |
//! |---------------------|----------------------|--------------------|---------------------------|
//! | `ℓp`, `1 < p ≤ 2`   | `ℓp`                 | `1/(2(p−1))`       | `D²/(2(p−1))`             |
//! | `ℓ1`                | `ℓq`, `q = 1+1/ln d` | `e²/(2(q−1))`      | `e²D²/(2(q−1))`           |
//! | `ℓp`, `p ≥ 2`       | `ℓ2`                 | `1/2`              | `d^{1−2/p}D²/2`           |
//!
//! Schatten geometries use the same table with singular values, and `d₂` in
//! place of `d` wherever a norm conversion enters.

use std::fmt;
use std::sync::Arc;

use rand::Rng;

use crate::error::{check_dim, invalid, Result};
use crate::geometry::{axpy, dot, l2, sub, Domain, NormSpec};
use crate::rng::seeded;

/// A user-supplied regularizer. Constants claimed for it are not validated
/// unless the audit functions of this module are run on it.
pub trait CustomRegularizer: Send + Sync {
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> Vec<f64>;
}

#[derive(Clone)]
pub enum RegularizerKind {
    /// `coefficient·‖x − x₀‖²` in `norm`.
    ScaledSquaredNorm {
        norm: NormSpec,
        coefficient: f64,
    },
    Custom(Arc<dyn CustomRegularizer>),
}

impl fmt::Debug for RegularizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::ScaledSquaredNorm { norm, coefficient } => f
                .debug_struct("ScaledSquaredNorm")
                .field("norm", norm)
                .field("coefficient", coefficient)
                .finish(),
            Self::Custom(_) => f.write_str("Custom"),
        }
    }
}

/// A regularizer `r` that is `sc_constant`-strongly convex in
/// `strong_convexity_norm`, with `max r − min r ≤ theta` over the domain it
/// was built for.
#[derive(Clone, Debug)]
pub struct Regularizer {
    pub kind: RegularizerKind,
    pub strong_convexity_norm: NormSpec,
    pub sc_constant: f64,
    pub theta: f64,
    pub reference_point: Vec<f64>,
}

impl Regularizer {
    pub fn custom(
        r: Arc<dyn CustomRegularizer>,
        strong_convexity_norm: NormSpec,
        theta: f64,
        reference_point: Vec<f64>,
    ) -> Result<Self> {
        check_dim(strong_convexity_norm.dim(), reference_point.len())?;
        Ok(Self {
            kind: RegularizerKind::Custom(r),
            strong_convexity_norm,
            sc_constant: 1.0,
            theta,
            reference_point,
        })
    }

    pub fn dim(&self) -> usize {
        self.reference_point.len()
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        match &self.kind {
            RegularizerKind::ScaledSquaredNorm { norm, coefficient } => {
                let n = norm.value(&sub(x, &self.reference_point));
                coefficient * n * n
            }
            RegularizerKind::Custom(r) => r.value(x),
        }
    }

    /// Gradient, taken as zero at the reference point.
    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        match &self.kind {
            RegularizerKind::ScaledSquaredNorm { norm, coefficient } => {
                let mut g = norm.half_squared_gradient(&sub(x, &self.reference_point));
                g.iter_mut().for_each(|v| *v *= 2.0 * coefficient);
                g
            }
            RegularizerKind::Custom(r) => r.gradient(x),
        }
    }

    /// `r(x + t·u)` and its derivative in `t`.
    pub fn along_line(&self, x: &[f64], u: &[f64], t: f64) -> (f64, f64) {
        let y = axpy(x, t, u);
        match &self.kind {
            RegularizerKind::ScaledSquaredNorm { norm, coefficient } => {
                let w = sub(&y, &self.reference_point);
                let n = norm.value(&w);
                if n == 0.0 {
                    return (0.0, 0.0);
                }
                let g = norm.subgradient(&w);
                (coefficient * n * n, 2.0 * coefficient * n * dot(&g, u))
            }
            RegularizerKind::Custom(r) => (r.value(&y), dot(&r.gradient(&y), u)),
        }
    }
}

fn check_reference(dom: &Domain, x0: &[f64]) -> Result<()> {
    check_dim(dom.dim(), x0.len())?;
    if !dom.contains(x0) {
        return invalid("reference point must lie in the domain");
    }
    Ok(())
}

fn build(dom: &Domain, x0: &[f64], norm: NormSpec, coefficient: f64, theta: f64) -> Regularizer {
    Regularizer {
        kind: RegularizerKind::ScaledSquaredNorm { norm, coefficient },
        strong_convexity_norm: *dom.geometry(),
        sc_constant: 1.0,
        theta,
        reference_point: x0.to_vec(),
    }
}

/// Exponent used for the `p = 1` preset in a space whose norm-conversion
/// dimension is `d`: `1 + 1/ln d`, capped at 2 (for `d ≤ 2` the formula
/// exceeds 2 or is undefined).
pub fn l1_surrogate_exponent(d: usize) -> f64 {
    if d <= 2 {
        2.0
    } else {
        (1.0 + 1.0 / (d as f64).ln()).min(2.0)
    }
}

/// Preset for `ℓp` with `p ∈ [1, 2]` (vector or Schatten geometry with the
/// same exponent range).
pub fn regularizer_for_lp(dom: &Domain, x0: &[f64]) -> Result<Regularizer> {
    let geom = *dom.geometry();
    let p = geom.p();
    if !(1.0..=2.0).contains(&p) {
        return invalid(format!("regularizer_for_lp needs p in [1, 2], got {p}"));
    }
    check_reference(dom, x0)?;
    let diam = dom.diameter(&geom);
    if p > 1.0 {
        let c = 1.0 / (2.0 * (p - 1.0));
        return Ok(build(dom, x0, geom, c, c * diam * diam));
    }
    let m = geom.spectral_dim();
    if m == 1 {
        // All norms agree on a single coordinate (or a single singular value).
        let l2n = geom.with_p(2.0)?;
        return Ok(build(dom, x0, l2n, 0.5, 0.5 * diam * diam));
    }
    let q = l1_surrogate_exponent(m);
    let c = std::f64::consts::E.powi(2) / (2.0 * (q - 1.0));
    Ok(build(dom, x0, geom.with_p(q)?, c, c * diam * diam))
}

/// Preset for `p ≥ 2`: the Euclidean (Frobenius) half squared distance.
pub fn regularizer_for_lp_high(dom: &Domain, x0: &[f64]) -> Result<Regularizer> {
    let geom = *dom.geometry();
    let p = geom.p();
    if p < 2.0 {
        return invalid(format!("regularizer_for_lp_high needs p >= 2, got {p}"));
    }
    check_reference(dom, x0)?;
    let diam = dom.diameter(&geom);
    let m = geom.spectral_dim() as f64;
    let expo = if p.is_infinite() { 1.0 } else { 1.0 - 2.0 / p };
    let theta = 0.5 * m.powf(expo) * diam * diam;
    Ok(build(dom, x0, geom.with_p(2.0)?, 0.5, theta))
}

/// Preset for Schatten-`p` geometries. Dispatches on `p` like the vector
/// presets; conversion factors use `d₂`.
pub fn regularizer_for_schatten(dom: &Domain, x0: &[f64]) -> Result<Regularizer> {
    if !dom.geometry().is_schatten() {
        return invalid("regularizer_for_schatten needs a Schatten geometry");
    }
    regularizer_for(dom, x0)
}

/// Picks the preset matching the domain's geometry.
pub fn regularizer_for(dom: &Domain, x0: &[f64]) -> Result<Regularizer> {
    if dom.geometry().p() <= 2.0 {
        regularizer_for_lp(dom, x0)
    } else {
        regularizer_for_lp_high(dom, x0)
    }
}

/// Worst normalized violation of the strong convexity inequality
/// `r(tx+(1−t)y) ≤ t r(x) + (1−t) r(y) − sc·t(1−t)/2·‖x−y‖²` over random pairs
/// and `t ∈ {¼, ½, ¾}`. Each excess is divided by `1 + |r(x)| + |r(y)|`; a
/// value `≤ 1e−9` means the check passed.
pub fn strong_convexity_violation(reg: &Regularizer, dom: &Domain, pairs: usize, seed: u64) -> f64 {
    let mut rng = seeded(seed);
    let norm = reg.strong_convexity_norm;
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..pairs {
        let x = dom.random_point(&mut rng);
        let y = dom.random_point(&mut rng);
        let (rx, ry) = (reg.evaluate(&x), reg.evaluate(&y));
        let dxy = norm.value(&sub(&x, &y));
        for t in [0.25, 0.5, 0.75] {
            let z: Vec<f64> = x
                .iter()
                .zip(&y)
                .map(|(a, b)| t * a + (1.0 - t) * b)
                .collect();
            let rhs = t * rx + (1.0 - t) * ry - reg.sc_constant * t * (1.0 - t) / 2.0 * dxy * dxy;
            let excess = (reg.evaluate(&z) - rhs) / (1.0 + rx.abs() + ry.abs());
            worst = worst.max(excess);
        }
    }
    worst
}

/// `max r − min r` over `samples` random domain points (plus the reference
/// point).
pub fn empirical_range(reg: &Regularizer, dom: &Domain, samples: usize, seed: u64) -> f64 {
    let mut rng = seeded(seed);
    let r0 = reg.evaluate(&reg.reference_point);
    let (mut lo, mut hi) = (r0, r0);
    for _ in 0..samples {
        let v = reg.evaluate(&dom.random_point(&mut rng));
        lo = lo.min(v);
        hi = hi.max(v);
    }
    hi - lo
}

/// Restricts `r` to random segments `[a, b]` parametrized by Euclidean arc
/// length and checks that the restriction is
/// `sc·‖b−a‖²/‖b−a‖₂²`-strongly convex. Returns the worst normalized excess,
/// as in [`strong_convexity_violation`].
pub fn segment_restriction_violation(
    reg: &Regularizer,
    dom: &Domain,
    trials: usize,
    seed: u64,
) -> f64 {
    let mut rng = seeded(seed);
    let norm = reg.strong_convexity_norm;
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..trials {
        let a = dom.random_point(&mut rng);
        let b = dom.random_point(&mut rng);
        let diff = sub(&b, &a);
        let len = l2(&diff);
        if len < 1e-9 {
            continue;
        }
        let u: Vec<f64> = diff.iter().map(|v| v / len).collect();
        let modulus = reg.sc_constant * (norm.value(&diff) / len).powi(2);
        let phi = |s: f64| reg.evaluate(&axpy(&a, s, &u));
        let s1 = len * rng.random::<f64>();
        let s2 = len * rng.random::<f64>();
        let t: f64 = rng.random();
        let (f1, f2) = (phi(s1), phi(s2));
        let rhs = t * f1 + (1.0 - t) * f2 - modulus * t * (1.0 - t) / 2.0 * (s1 - s2).powi(2);
        let excess = (phi(t * s1 + (1.0 - t) * s2) - rhs) / (1.0 + f1.abs() + f2.abs());
        worst = worst.max(excess);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_ball(p: f64, d: usize) -> Domain {
        Domain::ball(NormSpec::lp(p, d).unwrap(), vec![0.0; d], 1.0).unwrap()
    }

    #[test]
    fn l15_value_matches_scalar_formula() {
        let dom = Domain::ball(NormSpec::lp(1.5, 3).unwrap(), vec![0.0; 3], 3.0).unwrap();
        let r = regularizer_for_lp(&dom, &[0.0; 3]).unwrap();
        // v = 2·w/‖w‖_{1.5} has ‖v‖_{1.5} = 2.
        let w = [1.0, -2.0, 0.5];
        let nw = (1f64 + 2f64.powf(1.5) + 0.5f64.powf(1.5)).powf(1.0 / 1.5);
        let v: Vec<f64> = w.iter().map(|x| 2.0 * x / nw).collect();
        assert!((r.evaluate(&v) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn l2_is_half_square() {
        let dom = unit_ball(2.0, 4);
        let r = regularizer_for_lp(&dom, &[0.0; 4]).unwrap();
        let v = [0.1, 0.2, -0.3, 0.4];
        assert!((r.evaluate(&v) - 0.5 * 0.3).abs() < 1e-15);
        assert_eq!(r.theta, 2.0);
    }

    #[test]
    fn l1_preset_constants() {
        let dom = unit_ball(1.0, 20);
        let r = regularizer_for_lp(&dom, &[0.0; 20]).unwrap();
        let RegularizerKind::ScaledSquaredNorm { norm, coefficient } = r.kind else {
            panic!()
        };
        // q = 1 + 1/ln 20 = 1.333808..., e²/(2(q−1)) = e² ln(20)/2.
        assert!((norm.p() - 1.333_808_200_695_334).abs() < 1e-12);
        let e2 = std::f64::consts::E.powi(2);
        assert!((coefficient - e2 * 20f64.ln() / 2.0).abs() < 1e-12);
        assert!((coefficient - 11.068).abs() < 5e-4);
        // D = 2 for the unit ℓ1 ball.
        assert!((r.theta - 4.0 * coefficient).abs() < 1e-12);
    }

    #[test]
    fn l1_small_dimension_fallbacks() {
        let r1 = regularizer_for_lp(&unit_ball(1.0, 1), &[0.0]).unwrap();
        assert!((r1.evaluate(&[0.5]) - 0.125).abs() < 1e-15);
        let r2 = regularizer_for_lp(&unit_ball(1.0, 2), &[0.0, 0.0]).unwrap();
        let RegularizerKind::ScaledSquaredNorm { norm, .. } = r2.kind else {
            panic!()
        };
        assert_eq!(norm.p(), 2.0);
        assert!(strong_convexity_violation(&r2, &unit_ball(1.0, 2), 1000, 1) <= 1e-9);
    }

    #[test]
    fn high_p_thetas() {
        let r = regularizer_for_lp_high(&unit_ball(2.0, 7), &[0.0; 7]).unwrap();
        // D = 2 here; the unit-diameter case scales by 1/4.
        assert!((r.theta / 4.0 - 0.5).abs() < 1e-15);
        let dom =
            Domain::ball(NormSpec::lp(f64::INFINITY, 16).unwrap(), vec![0.0; 16], 0.5).unwrap();
        let r = regularizer_for_lp_high(&dom, &[0.0; 16]).unwrap();
        assert!((r.theta - 8.0).abs() < 1e-12);
        let dom = Domain::ball(NormSpec::lp(4.0, 16).unwrap(), vec![0.0; 16], 1.0).unwrap();
        let r = regularizer_for_lp_high(&dom, &[0.0; 16]).unwrap();
        assert!((r.theta - 8.0).abs() < 1e-12);
        assert!(regularizer_for_lp_high(&unit_ball(1.5, 3), &[0.0; 3]).is_err());
        assert!(regularizer_for_lp(&unit_ball(3.0, 3), &[0.0; 3]).is_err());
    }

    #[test]
    fn schatten_presets() {
        let dom = Domain::ball(NormSpec::schatten(2.0, 2, 2).unwrap(), vec![0.0; 4], 10.0).unwrap();
        let r = regularizer_for_schatten(&dom, &[0.0; 4]).unwrap();
        assert!((r.evaluate(&[3.0, 0.0, 0.0, 4.0]) - 12.5).abs() < 1e-12);

        let dom = Domain::ball(NormSpec::schatten(1.5, 3, 2).unwrap(), vec![0.0; 6], 0.5).unwrap();
        let r = regularizer_for_schatten(&dom, &[0.0; 6]).unwrap();
        assert!((r.theta - 1.0).abs() < 1e-12);

        let dom =
            Domain::ball(NormSpec::schatten(1.0, 10, 5).unwrap(), vec![0.0; 50], 0.5).unwrap();
        let r = regularizer_for_schatten(&dom, &[0.0; 50]).unwrap();
        let e2 = std::f64::consts::E.powi(2);
        assert!((r.theta - e2 * 5f64.ln() / 2.0).abs() < 1e-12);
        assert!((r.theta - 5.946).abs() < 1e-3);
    }

    #[test]
    fn presets_are_strongly_convex_with_bounded_range() {
        let cases: Vec<Domain> = vec![
            unit_ball(1.0, 5),
            unit_ball(1.5, 5),
            unit_ball(2.0, 5),
            unit_ball(3.0, 5),
            unit_ball(f64::INFINITY, 5),
            Domain::boxed(NormSpec::lp(1.25, 3).unwrap(), vec![-1.0; 3], vec![2.0; 3]).unwrap(),
            Domain::ball(NormSpec::schatten(1.0, 3, 3).unwrap(), vec![0.0; 9], 1.0).unwrap(),
            Domain::ball(NormSpec::schatten(1.5, 3, 2).unwrap(), vec![0.0; 6], 1.0).unwrap(),
            Domain::ball(NormSpec::schatten(3.0, 3, 2).unwrap(), vec![0.0; 6], 1.0).unwrap(),
        ];
        for (i, dom) in cases.iter().enumerate() {
            let x0 = dom.center();
            let r = regularizer_for(dom, &x0).unwrap();
            let v = strong_convexity_violation(&r, dom, 1000, 10 + i as u64);
            assert!(v <= 1e-9, "case {i}: violation {v}");
            let range = empirical_range(&r, dom, 10_000, 20 + i as u64);
            assert!(
                range <= r.theta + 1e-9,
                "case {i}: range {range} > {}",
                r.theta
            );
            let s = segment_restriction_violation(&r, dom, 1000, 30 + i as u64);
            assert!(s <= 1e-9, "case {i}: segment violation {s}");
        }
    }

    #[test]
    fn along_line_derivative_matches_finite_difference() {
        let dom = unit_ball(1.5, 4);
        let r = regularizer_for(&dom, &[0.1, 0.0, -0.1, 0.0]).unwrap();
        let x = [0.2, -0.1, 0.05, 0.3];
        let u = [0.5, 0.5, -0.5, 0.5];
        let (v, dv) = r.along_line(&x, &u, 0.1);
        let h = 1e-6;
        let fd = (r.along_line(&x, &u, 0.1 + h).0 - r.along_line(&x, &u, 0.1 - h).0) / (2.0 * h);
        assert!((dv - fd).abs() < 1e-7);
        assert!((v - r.evaluate(&axpy(&x, 0.1, &u))).abs() < 1e-15);
        assert_eq!(r.gradient(&r.reference_point), vec![0.0; 4]);
    }
}
