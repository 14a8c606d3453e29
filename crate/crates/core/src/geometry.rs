//! Norms, norm conversions, and compact convex domains.
//!
//! Points are flat `&[f64]` slices. Matrices (Schatten geometries) are stored
//! row-major with `rows ≥ cols`, so the Frobenius inner product of two matrices
//! is the ordinary dot product of their flat representations.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, invalid, Error, Result};

/// Absolute slack used by [`Domain::contains`] on curved boundaries.
pub const MEMBERSHIP_TOL: f64 = 1e-12;

const CHORD_TOL: f64 = 1e-12;

/// Ambient layout of a point.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Shape {
    Vector { d: usize },
    Matrix { rows: usize, cols: usize },
}

/// Identifies an `ℓp` norm on `ℝ^d` or a Schatten-`p` norm on `d1 × d2` matrices.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormSpec {
    p: f64,
    shape: Shape,
}

impl NormSpec {
    pub fn lp(p: f64, d: usize) -> Result<Self> {
        check_p(p)?;
        if d == 0 {
            return invalid("dimension must be at least 1");
        }
        Ok(Self {
            p,
            shape: Shape::Vector { d },
        })
    }

    pub fn schatten(p: f64, rows: usize, cols: usize) -> Result<Self> {
        check_p(p)?;
        if cols == 0 || rows < cols {
            return invalid(format!(
                "schatten geometry needs d1 >= d2 >= 1, got {rows}x{cols}"
            ));
        }
        Ok(Self {
            p,
            shape: Shape::Matrix { rows, cols },
        })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn is_schatten(&self) -> bool {
        matches!(self.shape, Shape::Matrix { .. })
    }

    /// Number of real coordinates of a point (`d` or `d1·d2`).
    pub fn dim(&self) -> usize {
        match self.shape {
            Shape::Vector { d } => d,
            Shape::Matrix { rows, cols } => rows * cols,
        }
    }

    /// Length of the vector the norm is an `ℓp` norm of: `d` for vectors and the
    /// number of singular values `d2` for matrices. Norm-equivalence factors
    /// are powers of this quantity.
    pub fn spectral_dim(&self) -> usize {
        match self.shape {
            Shape::Vector { d } => d,
            Shape::Matrix { cols, .. } => cols,
        }
    }

    /// The same geometry with a different exponent.
    pub fn with_p(&self, p: f64) -> Result<Self> {
        check_p(p)?;
        Ok(Self {
            p,
            shape: self.shape,
        })
    }

    /// The dual norm, with exponent `q = p/(p−1)`.
    pub fn dual(&self) -> Self {
        Self {
            p: conjugate_exponent(self.p),
            shape: self.shape,
        }
    }

    /// `‖v‖`, checking dimensions.
    pub fn norm(&self, v: &[f64]) -> Result<f64> {
        check_dim(self.dim(), v.len())?;
        Ok(self.value(v))
    }

    /// `‖v‖` without a dimension check.
    pub fn value(&self, v: &[f64]) -> f64 {
        match self.shape {
            Shape::Vector { .. } => lp_norm(v, self.p),
            Shape::Matrix { rows, cols } => {
                lp_norm(singular_values(v, rows, cols).as_slice(), self.p)
            }
        }
    }

    /// A subgradient of `‖·‖` at `v`: a point `g` of the dual unit sphere with
    /// `⟨g, v⟩ = ‖v‖`. Returns zero at the origin.
    pub fn subgradient(&self, v: &[f64]) -> Vec<f64> {
        match self.shape {
            Shape::Vector { .. } => lp_subgradient(v, self.p),
            Shape::Matrix { rows, cols } => {
                let m = DMatrix::from_row_slice(rows, cols, v);
                let svd = m.svd(true, true);
                let (Some(u), Some(v_t)) = (svd.u, svd.v_t) else {
                    return vec![0.0; v.len()];
                };
                let g = lp_subgradient(svd.singular_values.as_slice(), self.p);
                let g = DVector::from_vec(g);
                let out = u * DMatrix::from_diagonal(&g) * v_t;
                to_row_major(&out)
            }
        }
    }

    /// Gradient of `½‖v‖²`, which is `‖v‖` times [`NormSpec::subgradient`].
    pub fn half_squared_gradient(&self, v: &[f64]) -> Vec<f64> {
        let n = self.value(v);
        let mut g = self.subgradient(v);
        g.iter_mut().for_each(|x| *x *= n);
        g
    }

    /// A unit vector `v` in this norm maximizing `⟨a, v⟩`, so that
    /// `⟨a, v⟩ = ‖a‖_*`. This is the direction along which a linear functional
    /// attains its Lipschitz constant.
    pub fn aligned_direction(&self, a: &[f64]) -> Vec<f64> {
        self.dual().subgradient(a)
    }

    /// Upper bound on `‖v‖₂ / ‖v‖` over all nonzero `v`.
    pub fn l2_over_norm(&self) -> f64 {
        if self.p <= 2.0 {
            1.0
        } else {
            (self.spectral_dim() as f64).powf(0.5 - 1.0 / self.p)
        }
    }

    /// Upper bound on `‖v‖ / ‖v‖₂` over all nonzero `v`.
    pub fn norm_over_l2(&self) -> f64 {
        if self.p >= 2.0 {
            1.0
        } else {
            (self.spectral_dim() as f64).powf(1.0 / self.p - 0.5)
        }
    }
}

fn check_p(p: f64) -> Result<()> {
    if p.is_nan() || p < 1.0 {
        invalid(format!("norm exponent must satisfy p >= 1, got {p}"))
    } else {
        Ok(())
    }
}

/// Hölder conjugate of `p`, with `1 ↔ ∞`.
pub fn conjugate_exponent(p: f64) -> f64 {
    if p == 1.0 {
        f64::INFINITY
    } else if p.is_infinite() {
        1.0
    } else {
        p / (p - 1.0)
    }
}

/// `‖v‖` for the given spec. See [`NormSpec::norm`].
pub fn norm_value(spec: &NormSpec, v: &[f64]) -> Result<f64> {
    spec.norm(v)
}

/// The factor `d^{1/q − 1/p}` by which `‖·‖_q` may exceed `‖·‖_p` on `ℝ^d`
/// when `q ≤ p`.
pub fn norm_equivalence_factor(p: f64, q: f64, d: usize) -> Result<f64> {
    check_p(p)?;
    check_p(q)?;
    if q > p {
        return invalid(format!(
            "norm equivalence requires q <= p, got q={q}, p={p}"
        ));
    }
    if d == 0 {
        return invalid("dimension must be at least 1");
    }
    Ok((d as f64).powf(inv(q) - inv(p)))
}

fn inv(p: f64) -> f64 {
    if p.is_infinite() {
        0.0
    } else {
        1.0 / p
    }
}

#[inline]
fn abs_pow(x: f64, p: f64) -> f64 {
    if p == 2.0 {
        x * x
    } else if p == 1.5 {
        x * x.sqrt()
    } else if p == 3.0 {
        x * x * x
    } else {
        x.powf(p)
    }
}

/// Vector `ℓp` norm, evaluated in max-factored form to avoid overflow for
/// large `p`.
pub fn lp_norm(v: &[f64], p: f64) -> f64 {
    if p == 1.0 {
        return v.iter().map(|x| x.abs()).sum();
    }
    let m = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if p.is_infinite() || m == 0.0 || !m.is_finite() {
        return m;
    }
    let s: f64 = v.iter().map(|x| abs_pow(x.abs() / m, p)).sum();
    if p == 2.0 {
        m * s.sqrt()
    } else {
        m * s.powf(1.0 / p)
    }
}

fn lp_subgradient(v: &[f64], p: f64) -> Vec<f64> {
    let n = lp_norm(v, p);
    if n == 0.0 {
        return vec![0.0; v.len()];
    }
    if p == 1.0 {
        return v.iter().map(|x| sign(*x)).collect();
    }
    if p.is_infinite() {
        let (j, _) =
            v.iter().enumerate().fold(
                (0, -1.0),
                |acc, (i, x)| if x.abs() > acc.1 { (i, x.abs()) } else { acc },
            );
        let mut g = vec![0.0; v.len()];
        g[j] = sign(v[j]);
        return g;
    }
    // sign(v_i)·(|v_i|/‖v‖)^{p−1}
    v.iter()
        .map(|x| sign(*x) * abs_pow(x.abs() / n, p - 1.0))
        .collect()
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Singular values of a row-major `rows × cols` matrix, in decreasing order.
pub fn singular_values(v: &[f64], rows: usize, cols: usize) -> DVector<f64> {
    let m = DMatrix::from_row_slice(rows, cols, v);
    let mut s = m.singular_values();
    s.as_mut_slice().sort_by(|a, b| b.total_cmp(a));
    s
}

pub(crate) fn to_row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn l2(a: &[f64]) -> f64 {
    lp_norm(a, 2.0)
}

pub(crate) fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub(crate) fn axpy(x: &[f64], t: f64, u: &[f64]) -> Vec<f64> {
    x.iter().zip(u).map(|(a, b)| a + t * b).collect()
}

/// Draws a direction uniformly from the Euclidean unit sphere.
pub fn random_unit_vector<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Vec<f64> {
    loop {
        let g: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let n = l2(&g);
        if n > 1e-300 {
            return g.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Shape of a compact convex set.
#[derive(Clone, Debug, PartialEq)]
pub enum DomainShape {
    /// `{x : ‖x − center‖ ≤ radius}` in the given norm.
    Ball {
        center: Vec<f64>,
        radius: f64,
        norm: NormSpec,
    },
    /// Coordinatewise `lo ≤ x ≤ hi`.
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

/// A compact convex domain together with the norm the problem is posed in.
#[derive(Clone, Debug, PartialEq)]
pub struct Domain {
    shape: DomainShape,
    geometry: NormSpec,
}

impl Domain {
    /// Ball of the given radius in `norm`, which is also the problem geometry.
    pub fn ball(norm: NormSpec, center: Vec<f64>, radius: f64) -> Result<Self> {
        check_dim(norm.dim(), center.len())?;
        if !(radius > 0.0 && radius.is_finite()) {
            return invalid(format!(
                "ball radius must be positive and finite, got {radius}"
            ));
        }
        Ok(Self {
            shape: DomainShape::Ball {
                center,
                radius,
                norm,
            },
            geometry: norm,
        })
    }

    pub fn boxed(geometry: NormSpec, lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        check_dim(geometry.dim(), lo.len())?;
        check_dim(geometry.dim(), hi.len())?;
        if lo
            .iter()
            .zip(&hi)
            .any(|(l, h)| !(l < h) || !l.is_finite() || !h.is_finite())
        {
            return invalid("box bounds must be finite with lo < hi coordinatewise");
        }
        Ok(Self {
            shape: DomainShape::Box { lo, hi },
            geometry,
        })
    }

    /// The interval `[a, b] ⊂ ℝ`.
    pub fn interval(a: f64, b: f64) -> Result<Self> {
        Self::boxed(NormSpec::lp(2.0, 1)?, vec![a], vec![b])
    }

    /// Re-interprets the domain in another norm of the same shape.
    pub fn with_geometry(mut self, geometry: NormSpec) -> Result<Self> {
        if geometry.shape() != self.geometry.shape() {
            return invalid("geometry shape does not match the domain");
        }
        self.geometry = geometry;
        Ok(self)
    }

    pub fn shape(&self) -> &DomainShape {
        &self.shape
    }

    pub fn geometry(&self) -> &NormSpec {
        &self.geometry
    }

    pub fn dim(&self) -> usize {
        self.geometry.dim()
    }

    pub fn center(&self) -> Vec<f64> {
        match &self.shape {
            DomainShape::Ball { center, .. } => center.clone(),
            DomainShape::Box { lo, hi } => lo.iter().zip(hi).map(|(l, h)| 0.5 * (l + h)).collect(),
        }
    }

    /// Membership test. Exact for boxes; balls admit points within
    /// [`MEMBERSHIP_TOL`] of the boundary.
    pub fn contains(&self, x: &[f64]) -> bool {
        if x.len() != self.dim() || x.iter().any(|v| !v.is_finite()) {
            return false;
        }
        match &self.shape {
            DomainShape::Ball {
                center,
                radius,
                norm,
            } => norm.value(&sub(x, center)) <= radius + MEMBERSHIP_TOL,
            DomainShape::Box { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi))
                .all(|(v, (l, h))| *l <= *v && *v <= *h),
        }
    }

    /// Strict interior test, as required of chord base points.
    pub fn strictly_contains(&self, x: &[f64]) -> bool {
        if x.len() != self.dim() || x.iter().any(|v| !v.is_finite()) {
            return false;
        }
        match &self.shape {
            DomainShape::Ball {
                center,
                radius,
                norm,
            } => norm.value(&sub(x, center)) < *radius,
            DomainShape::Box { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi))
                .all(|(v, (l, h))| *l < *v && *v < *h),
        }
    }

    /// Largest Euclidean distance from the center to a point of the domain.
    pub fn l2_radius(&self) -> f64 {
        match &self.shape {
            DomainShape::Ball { radius, norm, .. } => radius * norm.l2_over_norm(),
            DomainShape::Box { lo, hi } => 0.5 * l2(&sub(hi, lo)),
        }
    }

    /// The maximal interval `[tmin, tmax]` with `x + t·u` in the domain.
    ///
    /// `x` must be strictly interior and `u` a Euclidean unit vector. Ball
    /// chords are found by bisection to absolute tolerance `1e−12`, returning
    /// the endpoint on the inner side; box chords are exact.
    pub fn chord(&self, x: &[f64], u: &[f64]) -> Result<(f64, f64)> {
        check_dim(self.dim(), x.len())?;
        check_dim(self.dim(), u.len())?;
        let un = l2(u);
        if (un - 1.0).abs() > 1e-12 {
            return invalid(format!(
                "chord direction must be a unit vector, |u|_2 = {un}"
            ));
        }
        match &self.shape {
            DomainShape::Box { lo, hi } => {
                let mut tmin = f64::NEG_INFINITY;
                let mut tmax = f64::INFINITY;
                for i in 0..x.len() {
                    if !(lo[i] < x[i] && x[i] < hi[i]) {
                        return invalid("chord base point is not strictly inside the box");
                    }
                    if u[i] > 0.0 {
                        tmax = tmax.min((hi[i] - x[i]) / u[i]);
                        tmin = tmin.max((lo[i] - x[i]) / u[i]);
                    } else if u[i] < 0.0 {
                        tmax = tmax.min((lo[i] - x[i]) / u[i]);
                        tmin = tmin.max((hi[i] - x[i]) / u[i]);
                    }
                }
                Ok((tmin, tmax))
            }
            DomainShape::Ball {
                center,
                radius,
                norm,
            } => {
                let w = sub(x, center);
                if !(norm.value(&w) < *radius) {
                    return invalid("chord base point is not strictly inside the ball");
                }
                let reach = (l2(&w) + self.l2_radius()) * (1.0 + 1e-9) + 1e-300;
                let g = |t: f64| norm.value(&axpy(&w, t, u)) - radius;
                let tmax = bisect_boundary(&g, reach)?;
                let neg = |t: f64| g(-t);
                let tmin = -bisect_boundary(&neg, reach)?;
                Ok((tmin, tmax))
            }
        }
    }

    /// Upper bound on the diameter of the domain measured in `norm`. Exact for
    /// balls measured in their own norm and for boxes in vector norms.
    pub fn diameter(&self, norm: &NormSpec) -> f64 {
        match &self.shape {
            DomainShape::Ball {
                radius, norm: own, ..
            } => 2.0 * radius * conversion_factor(own, norm),
            DomainShape::Box { lo, hi } => {
                let span = sub(hi, lo);
                if norm.is_schatten() {
                    // ‖M‖_q ≤ d2^{max(0, 1/q − 1/2)} ‖M‖_F and ‖M‖_F ≤ ‖hi − lo‖_F on the box.
                    l2(&span) * norm.norm_over_l2()
                } else {
                    lp_norm(&span, norm.p())
                }
            }
        }
    }

    /// Draws a point of the domain. Boxes are sampled uniformly; balls are
    /// sampled along a uniformly random ray from the center with a uniform
    /// position on the chord, which covers the whole ball.
    pub fn random_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match &self.shape {
            DomainShape::Box { lo, hi } => lo
                .iter()
                .zip(hi)
                .map(|(l, h)| l + (h - l) * rng.random::<f64>())
                .collect(),
            DomainShape::Ball { center, .. } => {
                let u = random_unit_vector(rng, self.dim());
                let (_, tmax) = self
                    .chord(center, &u)
                    .expect("center is interior and u is a unit vector");
                let t = tmax * rng.random::<f64>();
                axpy(center, t, &u)
            }
        }
    }

    /// Euclidean projection onto the domain.
    pub fn project(&self, y: &[f64]) -> Vec<f64> {
        if self.contains(y) {
            return y.to_vec();
        }
        match &self.shape {
            DomainShape::Box { lo, hi } => y
                .iter()
                .zip(lo.iter().zip(hi))
                .map(|(v, (l, h))| v.clamp(*l, *h))
                .collect(),
            DomainShape::Ball {
                center,
                radius,
                norm,
            } => {
                let w = sub(y, center);
                let pw = match norm.shape() {
                    Shape::Vector { .. } => project_lp_ball(&w, norm.p(), *radius),
                    Shape::Matrix { rows, cols } => {
                        let m = DMatrix::from_row_slice(rows, cols, &w);
                        let svd = m.svd(true, true);
                        let s = project_lp_ball(svd.singular_values.as_slice(), norm.p(), *radius);
                        let (u, v_t) = (svd.u.expect("requested"), svd.v_t.expect("requested"));
                        let out = u * DMatrix::from_diagonal(&DVector::from_vec(s)) * v_t;
                        to_row_major(&out)
                    }
                };
                pw.iter().zip(center).map(|(a, c)| a + c).collect()
            }
        }
    }
}

/// Smallest `c` with `‖v‖_to ≤ c‖v‖_from` for all `v`.
fn conversion_factor(from: &NormSpec, to: &NormSpec) -> f64 {
    if to.p() >= from.p() {
        1.0
    } else {
        (from.spectral_dim() as f64).powf(inv(to.p()) - inv(from.p()))
    }
}

/// Finds `t* > 0` with `g(t*) ≈ 0` given `g(0) < 0` and `g(reach) > 0`,
/// returning the last point with `g ≤ 0`.
fn bisect_boundary(g: &dyn Fn(f64) -> f64, reach: f64) -> Result<f64> {
    let mut lo = 0.0;
    let mut hi = reach;
    let mut tries = 0;
    while !(g(hi) > 0.0) {
        hi *= 2.0;
        tries += 1;
        if tries > 60 {
            return Err(Error::RootFinding(
                "could not bracket the domain boundary".into(),
            ));
        }
    }
    for _ in 0..200 {
        if hi - lo <= CHORD_TOL {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Euclidean projection of `y` onto `{‖x‖_p ≤ r}`.
fn project_lp_ball(y: &[f64], p: f64, r: f64) -> Vec<f64> {
    let n = lp_norm(y, p);
    if n <= r {
        return y.to_vec();
    }
    if p == 2.0 {
        return y.iter().map(|v| v * r / n).collect();
    }
    if p.is_infinite() {
        return y.iter().map(|v| v.clamp(-r, r)).collect();
    }
    if p == 1.0 {
        // Soft-thresholding at the level that lands on the ℓ1 sphere.
        let mut a: Vec<f64> = y.iter().map(|v| v.abs()).collect();
        a.sort_by(|x, z| z.total_cmp(x));
        let mut cum = 0.0;
        let mut theta = 0.0;
        for (i, v) in a.iter().enumerate() {
            cum += v;
            let t = (cum - r) / (i as f64 + 1.0);
            if *v > t {
                theta = t;
            }
        }
        return y
            .iter()
            .map(|v| sign(*v) * (v.abs() - theta).max(0.0))
            .collect();
    }
    // KKT: |y_i| = z_i + λ p z_i^{p−1}, with λ chosen so that Σ z_i^p = r^p.
    let a: Vec<f64> = y.iter().map(|v| v.abs()).collect();
    let solve = |lambda: f64| -> Vec<f64> {
        a.iter()
            .map(|&ai| {
                let (mut lo, mut hi) = (0.0, ai);
                for _ in 0..80 {
                    let z = 0.5 * (lo + hi);
                    if z + lambda * p * z.powf(p - 1.0) > ai {
                        hi = z;
                    } else {
                        lo = z;
                    }
                }
                0.5 * (lo + hi)
            })
            .collect()
    };
    let excess = |lambda: f64| lp_norm(&solve(lambda), p) - r;
    let mut hi = 1.0;
    while excess(hi) > 0.0 {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if excess(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    solve(hi)
        .into_iter()
        .zip(y)
        .map(|(z, v)| sign(*v) * z)
        .collect()
}
