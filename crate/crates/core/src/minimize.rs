//! Minimization of the empirical risk over the domain, used as the reference
//! value for excess-risk measurements.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Result};
use crate::geometry::{dot, l2, DomainShape};
use crate::losses::{LossFamily, LossModel};
use crate::Domain;

/// Accuracy certified by [`minimize_empirical_risk`] when `certified` is set.
pub const MINIMIZE_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    /// A proven lower bound on the minimum.
    pub lower_bound: f64,
    pub certified: bool,
    pub iterations: usize,
}

/// Minimizes `F_D` over `dom`.
///
/// Linear losses are solved in closed form. For the nonnegative families the
/// lower bound is 0; a hint that attains it to [`MINIMIZE_TOL`] certifies the
/// answer immediately. Otherwise projected subgradient descent runs with
/// Polyak steps against an adaptively lowered target level, and the best
/// iterate is returned. Such results are certified only when they reach the
/// lower bound.
pub fn minimize_empirical_risk(
    model: &LossModel,
    dom: &Domain,
    hints: &[Vec<f64>],
    max_iter: usize,
) -> Result<Minimum> {
    check_dim(dom.dim(), model.dim())?;
    for h in hints {
        check_dim(dom.dim(), h.len())?;
    }
    if model.family() == LossFamily::Linear {
        return Ok(minimize_linear(model, dom));
    }
    let lower_bound = 0.0;
    let mut best_x = dom.center();
    let mut best = model.risk_unchecked(&best_x);
    for h in hints {
        let y = dom.project(h);
        let v = model.risk_unchecked(&y);
        if v < best {
            best = v;
            best_x = y;
        }
    }
    if best - lower_bound <= MINIMIZE_TOL {
        return Ok(Minimum {
            x: best_x,
            value: best,
            lower_bound,
            certified: true,
            iterations: 0,
        });
    }

    let mut x = best_x.clone();
    let mut gap_guess = best - lower_bound;
    let mut stall = 0usize;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let f = model.risk_unchecked(&x);
        if f < best {
            if best - f > 0.05 * gap_guess {
                stall = 0;
            }
            best = f;
            best_x = x.clone();
            if best - lower_bound <= MINIMIZE_TOL {
                break;
            }
        } else {
            stall += 1;
        }
        if stall > 50 {
            gap_guess *= 0.5;
            stall = 0;
            x = best_x.clone();
            if gap_guess < 1e-12 {
                break;
            }
        }
        let g = model.subgradient(&x)?;
        let gn = l2(&g);
        if gn == 0.0 {
            break;
        }
        let level = (best - gap_guess).max(lower_bound);
        let step = (f - level).max(0.0) / (gn * gn);
        let y: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - step * b).collect();
        x = dom.project(&y);
    }
    Ok(Minimum {
        certified: best - lower_bound <= MINIMIZE_TOL,
        x: best_x,
        value: best,
        lower_bound,
        iterations,
    })
}

fn minimize_linear(model: &LossModel, dom: &Domain) -> Minimum {
    let d = model.dim();
    let mut abar = vec![0.0; d];
    for s in model.samples() {
        abar.iter_mut().zip(&s.features).for_each(|(m, a)| *m += a);
    }
    abar.iter_mut().for_each(|m| *m /= model.n() as f64);
    let x = match dom.shape() {
        DomainShape::Box { lo, hi } => abar
            .iter()
            .enumerate()
            .map(|(i, &a)| if a > 0.0 { lo[i] } else { hi[i] })
            .collect(),
        DomainShape::Ball {
            center,
            radius,
            norm,
        } => {
            let v = norm.aligned_direction(&abar);
            center
                .iter()
                .zip(&v)
                .map(|(c, vi)| c - radius * vi)
                .collect::<Vec<_>>()
        }
    };
    let value = dot(&abar, &x);
    Minimum {
        x,
        value,
        lower_bound: value,
        certified: true,
        iterations: 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::Sample;
    use crate::NormSpec;

    #[test]
    fn linear_minimum_on_l2_ball() {
        let norm = NormSpec::lp(2.0, 2).unwrap();
        let dom = Domain::ball(norm, vec![0.0, 0.0], 1.0).unwrap();
        let model = LossModel::new(
            LossFamily::Linear,
            vec![Sample::new(vec![3.0, 4.0], 0.0)],
            norm,
        )
        .unwrap();
        let m = minimize_empirical_risk(&model, &dom, &[], 0).unwrap();
        assert!((m.value + 5.0).abs() < 1e-12);
        assert!((m.x[0] + 0.6).abs() < 1e-12 && (m.x[1] + 0.8).abs() < 1e-12);
    }

    #[test]
    fn linear_minimum_on_l1_ball_is_a_vertex() {
        let norm = NormSpec::lp(1.0, 3).unwrap();
        let dom = Domain::ball(norm, vec![0.0; 3], 2.0).unwrap();
        let model = LossModel::new(
            LossFamily::Linear,
            vec![Sample::new(vec![0.5, -3.0, 1.0], 0.0)],
            norm,
        )
        .unwrap();
        let m = minimize_empirical_risk(&model, &dom, &[], 0).unwrap();
        assert!((m.value + 6.0).abs() < 1e-12);
    }

    #[test]
    fn planted_hint_certifies() {
        let norm = NormSpec::lp(2.0, 2).unwrap();
        let dom = Domain::ball(norm, vec![0.0, 0.0], 1.0).unwrap();
        let xs = vec![0.3, -0.2];
        let samples = [[1.0, 0.0], [0.0, 1.0], [0.6, 0.8]]
            .iter()
            .map(|a| Sample::new(a.to_vec(), a[0] * xs[0] + a[1] * xs[1]))
            .collect();
        let model = LossModel::new(LossFamily::AbsLinear, samples, norm).unwrap();
        let m = minimize_empirical_risk(&model, &dom, &[xs.clone()], 1000).unwrap();
        assert!(m.certified && m.value < 1e-12 && m.iterations == 0);
    }

    #[test]
    fn subgradient_descent_finds_interior_minimum() {
        let norm = NormSpec::lp(2.0, 2).unwrap();
        let dom = Domain::ball(norm, vec![0.0, 0.0], 1.0).unwrap();
        let xs = [0.4, 0.1];
        let samples = [[1.0, 0.0], [0.0, 1.0], [0.6, 0.8], [-0.3, 0.7]]
            .iter()
            .map(|a| Sample::new(a.to_vec(), a[0] * xs[0] + a[1] * xs[1]))
            .collect();
        let model = LossModel::new(LossFamily::AbsLinear, samples, norm).unwrap();
        let m = minimize_empirical_risk(&model, &dom, &[], 20_000).unwrap();
        assert!(m.certified, "value {}", m.value);
        assert!((m.x[0] - xs[0]).abs() < 1e-4 && (m.x[1] - xs[1]).abs() < 1e-4);
    }

    #[test]
    fn hinge_minimum_is_below_start() {
        let norm = NormSpec::lp(2.0, 2).unwrap();
        let dom = Domain::ball(norm, vec![0.0, 0.0], 0.5).unwrap();
        let samples = vec![
            Sample::new(vec![1.0, 0.0], 1.0),
            Sample::new(vec![0.0, 1.0], -1.0),
        ];
        let model = LossModel::new(LossFamily::Hinge, samples, norm).unwrap();
        let m = minimize_empirical_risk(&model, &dom, &[], 20_000).unwrap();
        // Optimum on the ball boundary along (1, −1)/√2: 1 − 0.5/√2.
        let want = 1.0 - 0.5 / 2f64.sqrt();
        assert!((m.value - want).abs() < 1e-5, "{} vs {want}", m.value);
        assert!(!m.certified);
    }
}
