//! Adaptive Gauss–Kronrod quadrature and exact inverse-CDF sampling of
//! one-dimensional log-concave densities.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::Rng;

use crate::error::{invalid, Error, Result};

const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_691_552_738_070,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

// Gauss weights for the nodes XGK[1], XGK[3], ..., XGK[9].
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

/// Default cap on the number of subintervals of an adaptive integration.
pub const MAX_INTERVALS: usize = 4000;

/// The 21-point Kronrod rule on `[a, b]`, returning the estimate and an error
/// estimate scaled as in QUADPACK.
pub fn gauss_kronrod_21<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut resk = fc * WGK[10];
    let mut resg = 0.0;
    let mut resabs = resk.abs();
    let mut fv1 = [0.0; 10];
    let mut fv2 = [0.0; 10];
    for j in 0..10 {
        let dx = h * XGK[j];
        let f1 = f(c - dx);
        let f2 = f(c + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        resk += WGK[j] * (f1 + f2);
        resabs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            resg += WG[j / 2] * (f1 + f2);
        }
    }
    let reskh = 0.5 * resk;
    let mut resasc = WGK[10] * (fc - reskh).abs();
    for j in 0..10 {
        resasc += WGK[j] * ((fv1[j] - reskh).abs() + (fv2[j] - reskh).abs());
    }
    let result = resk * h;
    let resabs = resabs * h.abs();
    let resasc = resasc * h.abs();
    let mut err = ((resk - resg) * h).abs();
    if resasc != 0.0 && err != 0.0 {
        err = resasc * (200.0 * err / resasc).powf(1.5).min(1.0);
    }
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * resabs);
    }
    (result, err)
}

/// A subinterval produced by adaptive integration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Panel {
    pub a: f64,
    pub b: f64,
    pub value: f64,
    pub error: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub intervals: usize,
}

struct Queued(Panel);

impl PartialEq for Queued {
    fn eq(&self, o: &Self) -> bool {
        self.0.error == o.0.error
    }
}
impl Eq for Queued {}
impl PartialOrd for Queued {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Queued {
    fn cmp(&self, o: &Self) -> Ordering {
        self.0.error.total_cmp(&o.0.error)
    }
}

/// Globally adaptive integration of `f` over `[a, b]` until the summed error
/// estimate is at most `max(abs_tol, rel_tol·|value|)`. Returns the final
/// panels sorted left to right.
pub fn integrate_panels<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
    max_intervals: usize,
) -> Result<(Vec<Panel>, QuadResult)> {
    if !(a.is_finite() && b.is_finite()) {
        return invalid("integration limits must be finite");
    }
    if a == b {
        let p = Panel {
            a,
            b,
            value: 0.0,
            error: 0.0,
        };
        return Ok((
            vec![p],
            QuadResult {
                value: 0.0,
                error: 0.0,
                intervals: 1,
            },
        ));
    }
    let (v, e) = gauss_kronrod_21(&mut f, a, b);
    if !v.is_finite() {
        return Err(Error::Quadrature {
            a,
            b,
            tol: abs_tol,
            estimate: v,
            error: e,
            intervals: 1,
        });
    }
    let mut heap = BinaryHeap::new();
    heap.push(Queued(Panel {
        a,
        b,
        value: v,
        error: e,
    }));
    let (mut total, mut err) = (v, e);
    let mut done = Vec::new();
    loop {
        if err <= abs_tol.max(rel_tol * total.abs()) {
            break;
        }
        if heap.len() + done.len() >= max_intervals {
            return Err(Error::Quadrature {
                a,
                b,
                tol: abs_tol.max(rel_tol * total.abs()),
                estimate: total,
                error: err,
                intervals: heap.len() + done.len(),
            });
        }
        let Some(Queued(p)) = heap.pop() else { break };
        let m = 0.5 * (p.a + p.b);
        if m <= p.a || m >= p.b {
            // Cannot split further in floating point.
            done.push(p);
            continue;
        }
        let (v1, e1) = gauss_kronrod_21(&mut f, p.a, m);
        let (v2, e2) = gauss_kronrod_21(&mut f, m, p.b);
        if !(v1.is_finite() && v2.is_finite()) {
            return Err(Error::Quadrature {
                a: p.a,
                b: p.b,
                tol: abs_tol,
                estimate: f64::NAN,
                error: f64::INFINITY,
                intervals: heap.len() + done.len(),
            });
        }
        total += v1 + v2 - p.value;
        err += e1 + e2 - p.error;
        heap.push(Queued(Panel {
            a: p.a,
            b: m,
            value: v1,
            error: e1,
        }));
        heap.push(Queued(Panel {
            a: m,
            b: p.b,
            value: v2,
            error: e2,
        }));
    }
    let mut panels: Vec<Panel> = heap.into_iter().map(|q| q.0).chain(done).collect();
    panels.sort_by(|x, y| x.a.total_cmp(&y.a));
    // Re-sum to shed accumulated cancellation in the running totals.
    let value = panels.iter().map(|p| p.value).sum();
    let error = panels.iter().map(|p| p.error).sum();
    let intervals = panels.len();
    Ok((
        panels,
        QuadResult {
            value,
            error,
            intervals,
        },
    ))
}

/// `∫_a^b f` with the stopping rule of [`integrate_panels`].
pub fn integrate<F: FnMut(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<QuadResult> {
    integrate_panels(f, a, b, abs_tol, rel_tol, MAX_INTERVALS).map(|(_, r)| r)
}

/// Minimizes a convex function on `[a, b]`: a coarse grid picks a bracket and
/// golden-section search refines it. Returns `(argmin, min)`.
pub fn minimize_convex_1d<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    grid: usize,
) -> (f64, f64) {
    let grid = grid.max(2);
    let h = (b - a) / grid as f64;
    let mut best = (a, f(a));
    let mut best_i = 0;
    for i in 1..=grid {
        let t = if i == grid { b } else { a + h * i as f64 };
        let v = f(t);
        if v < best.1 {
            best = (t, v);
            best_i = i;
        }
    }
    let mut lo = if best_i == 0 {
        a
    } else {
        a + h * (best_i - 1) as f64
    };
    let mut hi = if best_i == grid {
        b
    } else {
        a + h * (best_i + 1) as f64
    };
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..200 {
        if hi - lo <= 1e-14 * (1.0 + lo.abs().max(hi.abs())) {
            break;
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2);
        }
    }
    for (t, v) in [(x1, f1), (x2, f2)] {
        if v < best.1 {
            best = (t, v);
        }
    }
    best
}

/// Level above the minimum at which log-concave supports are cropped. The
/// discarded relative mass is at most `e^{−45}/(1 − e^{−45}) < 3e−20`.
pub const CROP_LEVEL: f64 = 45.0;

/// Grid size used to bracket the minimum of a 1D potential before refinement.
pub const MODE_GRID: usize = 1024;

/// The probability density proportional to `exp(−φ)` on `[a, b]` for convex
/// `φ`, with its normalizing constant computed by adaptive quadrature and an
/// inverse-CDF sampler built on the quadrature panels.
pub struct LogConcave1d<F> {
    phi: F,
    mode: f64,
    phi_min: f64,
    lo: f64,
    hi: f64,
    tol: f64,
    panels: Vec<Panel>,
    cum: Vec<f64>,
    mass: f64,
}

impl<F: Fn(f64) -> f64> LogConcave1d<F> {
    /// Builds the distribution. `tol` is the relative accuracy requested of
    /// the normalizing constant.
    pub fn new(phi: F, a: f64, b: f64, tol: f64) -> Result<Self> {
        if !(a < b && a.is_finite() && b.is_finite()) {
            return invalid(format!("need a finite interval a < b, got [{a}, {b}]"));
        }
        if !(tol > 0.0) {
            return invalid("quadrature tolerance must be positive");
        }
        let (mode, phi_min) = minimize_convex_1d(&phi, a, b, MODE_GRID);
        if !phi_min.is_finite() {
            return invalid("potential is not finite at its minimum");
        }
        let lo = crop(&phi, phi_min, mode, a);
        let hi = crop(&phi, phi_min, mode, b);
        let w = |t: f64| (-(phi(t) - phi_min)).exp();
        let abs_floor = tol * 1e-3 * (hi - lo) * f64::EPSILON;
        let mut panels = Vec::new();
        for (s, e) in [(lo, mode), (mode, hi)] {
            if e > s {
                // Each side carries at least e^{−1} of its length's worth of
                // mass near the mode, so a relative target on the side is safe.
                let (p, _) = integrate_panels(w, s, e, abs_floor, tol * 0.5, MAX_INTERVALS)?;
                panels.extend(p);
            }
        }
        let mut cum = Vec::with_capacity(panels.len() + 1);
        let mut acc = 0.0;
        cum.push(0.0);
        for p in &panels {
            acc += p.value.max(0.0);
            cum.push(acc);
        }
        if !(acc > 0.0) {
            return invalid("density has zero mass");
        }
        Ok(Self {
            phi,
            mode,
            phi_min,
            lo,
            hi,
            tol,
            panels,
            cum,
            mass: acc,
        })
    }

    pub fn mode(&self) -> f64 {
        self.mode
    }

    pub fn phi_min(&self) -> f64 {
        self.phi_min
    }

    /// The cropped support actually integrated over.
    pub fn support(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    /// The potential `φ(t)`.
    pub fn phi_value(&self, t: f64) -> f64 {
        (self.phi)(t)
    }

    /// `ln ∫ exp(−φ)`.
    pub fn log_normalizer(&self) -> f64 {
        self.mass.ln() - self.phi_min
    }

    /// Log-density at `t` (`−∞` outside the cropped support).
    pub fn log_density(&self, t: f64) -> f64 {
        if t < self.lo || t > self.hi {
            return f64::NEG_INFINITY;
        }
        -(self.phi)(t) - self.log_normalizer()
    }

    fn weight(&self, t: f64) -> f64 {
        (-((self.phi)(t) - self.phi_min)).exp()
    }

    /// `P(X ≤ t)`.
    pub fn cdf(&self, t: f64) -> f64 {
        if t <= self.lo {
            return 0.0;
        }
        if t >= self.hi {
            return 1.0;
        }
        let i = self.panel_index(t);
        let p = self.panels[i];
        let mut w = |s: f64| self.weight(s);
        let (part, _) = gauss_kronrod_21(&mut w, p.a, t);
        ((self.cum[i] + part) / self.mass).clamp(0.0, 1.0)
    }

    fn panel_index(&self, t: f64) -> usize {
        let i = self.panels.partition_point(|p| p.b < t);
        i.min(self.panels.len() - 1)
    }

    /// Inverts the CDF at `u ∈ [0, 1]` with safeguarded Newton iterations.
    pub fn quantile(&self, u: f64) -> f64 {
        let target = u.clamp(0.0, 1.0) * self.mass;
        let i = self.cum[1..]
            .partition_point(|c| *c < target)
            .min(self.panels.len() - 1);
        let p = self.panels[i];
        let want = target - self.cum[i];
        let (mut a, mut b) = (p.a, p.b);
        let mut t = if p.value > 0.0 {
            p.a + (p.b - p.a) * (want / p.value).clamp(0.0, 1.0)
        } else {
            0.5 * (p.a + p.b)
        };
        let mut w = |s: f64| self.weight(s);
        let xtol = 1e-13 * (1.0 + p.a.abs().max(p.b.abs()));
        for _ in 0..100 {
            let (part, _) = gauss_kronrod_21(&mut w, p.a, t);
            let g = part - want;
            if g.abs() <= self.tol * 1e-2 * self.mass {
                return t;
            }
            if g > 0.0 {
                b = t;
            } else {
                a = t;
            }
            if b - a <= xtol {
                return 0.5 * (a + b);
            }
            let dens = w(t);
            let newton = t - g / dens;
            t = if dens > 0.0 && newton > a && newton < b {
                newton
            } else {
                0.5 * (a + b)
            };
        }
        t
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.quantile(rng.random::<f64>())
    }

    /// `E[g(X)]` by adaptive quadrature on each side of the mode.
    pub fn expectation<G: Fn(f64) -> f64>(&self, g: G) -> Result<f64> {
        let mut total = 0.0;
        for (s, e) in [(self.lo, self.mode), (self.mode, self.hi)] {
            if e > s {
                let r = integrate(|t| g(t) * self.weight(t), s, e, 1e-300, self.tol * 0.5)?;
                total += r.value;
            }
        }
        Ok(total / self.mass)
    }
}

/// Moves from `mode` toward `end` and returns a point beyond which
/// `φ − φ_min > CROP_LEVEL`, or `end` if the level is never reached.
fn crop<F: Fn(f64) -> f64>(phi: &F, phi_min: f64, mode: f64, end: f64) -> f64 {
    if phi(end) - phi_min <= CROP_LEVEL {
        return end;
    }
    let (mut inside, mut outside) = (mode, end);
    for _ in 0..200 {
        if (outside - inside).abs() <= 0.01 * (outside - mode).abs() {
            break;
        }
        let mid = 0.5 * (inside + outside);
        if phi(mid) - phi_min > CROP_LEVEL {
            outside = mid;
        } else {
            inside = mid;
        }
    }
    outside
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn kronrod_weights_integrate_constants() {
        let s: f64 = 2.0 * WGK[..10].iter().sum::<f64>() + WGK[10];
        assert!((s - 2.0).abs() < 1e-15);
        let g: f64 = 2.0 * WG.iter().sum::<f64>();
        assert!((g - 2.0).abs() < 1e-15);
    }

    #[test]
    fn polynomials_are_exact() {
        // The Kronrod rule is exact through degree 31 on a single panel.
        let (v, _) = gauss_kronrod_21(&mut |x: f64| x.powi(30), -1.0, 1.0);
        assert!((v - 2.0 / 31.0).abs() < 1e-15);
    }

    #[test]
    fn adaptive_handles_kinks() {
        let r = integrate(|x: f64| x.abs(), -1.0, 2.0, 1e-14, 1e-13).unwrap();
        assert!((r.value - 2.5).abs() < 1e-12);
        let r = integrate(|x: f64| x.sqrt(), 0.0, 1.0, 1e-14, 1e-12).unwrap();
        assert!((r.value - 2.0 / 3.0).abs() < 1e-11);
    }

    #[test]
    fn adaptive_reports_failure() {
        let e = integrate_panels(|x: f64| (1.0 / x).sin() / x, 1e-9, 1.0, 0.0, 1e-15, 20);
        assert!(matches!(e, Err(Error::Quadrature { .. })));
    }

    #[test]
    fn laplace_normalizer_and_mean_gap() {
        // φ(x) = 10|x| on [−1, 1]: Z = (1 − e^{−10})/5 and
        // E|X| = 1/10 − e^{−10}/(1 − e^{−10}).
        let d = LogConcave1d::new(|x: f64| 10.0 * x.abs(), -1.0, 1.0, 1e-12).unwrap();
        let e10 = (-10f64).exp();
        let z = (1.0 - e10) / 5.0;
        assert!((d.log_normalizer() - z.ln()).abs() < 1e-11);
        let m = d.expectation(|x| x.abs()).unwrap();
        let exact = 0.1 - e10 / (1.0 - e10);
        assert!((m - exact).abs() < 1e-11, "{m} vs {exact}");
    }

    #[test]
    fn gaussian_cdf_matches_closed_form() {
        let d = LogConcave1d::new(|x: f64| 0.5 * x * x, -50.0, 50.0, 1e-12).unwrap();
        for t in [-2.0, -0.3, 0.0, 1.1, 3.0] {
            assert!((d.cdf(t) - crate::special::norm_cdf(t)).abs() < 1e-11);
        }
        for u in [1e-6, 0.1, 0.5, 0.77, 0.999] {
            let q = d.quantile(u);
            assert!(
                (crate::special::norm_cdf(q) - u).abs() < 1e-10,
                "u={u} q={q}"
            );
        }
        // The support was cropped near ±√90.
        let (lo, hi) = d.support();
        assert!(lo > -10.0 && hi < 10.0 && lo < -9.4 && hi > 9.4);
    }

    #[test]
    fn samples_match_exponential_moments() {
        let d = LogConcave1d::new(|x: f64| 2.0 * x, 0.0, 30.0, 1e-10).unwrap();
        let mut rng = seeded(42);
        let n = 20000;
        let mean: f64 = (0..n).map(|_| d.sample(&mut rng)).sum::<f64>() / n as f64;
        // Exp(2) has mean 0.5 and sd 0.5; 5 standard errors.
        assert!((mean - 0.5).abs() < 5.0 * 0.5 / (n as f64).sqrt());
    }

    #[test]
    fn minimize_finds_kink() {
        let (x, v) = minimize_convex_1d(|t: f64| (t - 0.3).abs() + 0.1 * t * t, -1.0, 1.0, 16);
        assert!((x - 0.3).abs() < 1e-10);
        assert!((v - 0.009).abs() < 1e-12);
    }
}
