//! Standard normal distribution function and its logarithm.

use libm::erfc;

const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// `Φ(z)`, accurate in relative terms for negative `z` down to underflow.
pub fn norm_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

/// `ln Φ(z)`. Uses `ln1p(−Φ(−z))` for positive `z` and an asymptotic
/// Mills-ratio series once `Φ(z)` would underflow.
pub fn ln_norm_cdf(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    if z > 0.0 {
        return (-norm_cdf(-z)).ln_1p();
    }
    if z > -35.0 {
        return norm_cdf(z).ln();
    }
    // Φ(z) = φ(z)/|z| · (1 − 1/z² + 3/z⁴ − 15/z⁶ + 105/z⁸ − …)
    let x = -z;
    let r = 1.0 / (x * x);
    let series = 1.0 - r * (1.0 - 3.0 * r * (1.0 - 5.0 * r * (1.0 - 7.0 * r)));
    -0.5 * x * x - x.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln() + series.ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_reference_values() {
        // Values from the closed form Φ(z) = erfc(−z/√2)/2, tabulated.
        assert!((norm_cdf(0.0) - 0.5).abs() < 1e-16);
        assert!((norm_cdf(1.0) - 0.841_344_746_068_542_9).abs() < 1e-15);
        assert!((norm_cdf(-1.96) - 0.024_997_895_148_220_43).abs() < 1e-16);
        let v = norm_cdf(-10.0);
        assert!((v / 7.619_853_024_160_527e-24 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ln_cdf_is_continuous_at_switch() {
        let a = ln_norm_cdf(-35.0 + 1e-9);
        let b = ln_norm_cdf(-35.0 - 1e-9);
        assert!((a - b).abs() < 1e-7 * a.abs());
        // Deep tail against the full asymptotic expansion at z = −40.
        let z: f64 = -40.0;
        let exact = -800.0 - 40f64.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
            + (1.0 - 1.0 / 1600.0 + 3.0 / 1600f64.powi(2) - 15.0 / 1600f64.powi(3)).ln();
        assert!((ln_norm_cdf(z) - exact).abs() < 1e-12 * exact.abs());
    }

    #[test]
    fn ln_cdf_positive_side() {
        assert!((ln_norm_cdf(10.0) + 7.619_853_024_160_527e-24).abs() < 1e-36);
        assert!((ln_norm_cdf(1.0) - 0.841_344_746_068_542_9f64.ln()).abs() < 1e-15);
    }
}
