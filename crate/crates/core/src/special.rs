//! Special functions used by the analytic bound pipeline.
//!
//! * `ln_gamma`: Lanczos approximation (g = 7, nine terms).
//! * `reg_gamma_p` / `reg_gamma_q`: regularized incomplete gamma functions,
//!   series for `y < x + 1` and a modified-Lentz continued fraction otherwise.
//! * `lambert_w0`: principal branch of the Lambert W function by Halley
//!   iteration, with a branch-point series close to `-1/e`.
//!
//! Everything here is pure: no global state and no cached tables.

use std::f64::consts::{E, PI};

use crate::error::{Error, Result};

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Distance from the branch point inside which `lambert_w0` uses the series.
const BRANCH_SERIES_RADIUS: f64 = 1e-6;

/// Accuracy and iteration limits shared by the special functions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpecialFnConfig {
    /// Target relative accuracy, in `(0, 1e-6]`.
    pub accuracy: f64,
    /// Cap on series terms, continued-fraction levels and Halley steps.
    pub max_iter: usize,
}

impl Default for SpecialFnConfig {
    fn default() -> Self {
        Self {
            accuracy: 1e-12,
            max_iter: 100_000,
        }
    }
}

impl SpecialFnConfig {
    pub fn new(accuracy: f64, max_iter: usize) -> Result<Self> {
        if !(accuracy > 0.0 && accuracy <= 1e-6) {
            return Err(Error::domain(
                "SpecialFnConfig",
                format!("accuracy {accuracy:e} not in (0, 1e-6]"),
            ));
        }
        Ok(Self { accuracy, max_iter })
    }

    /// Natural log of the gamma function for `x > 0`.
    pub fn ln_gamma(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) || !x.is_finite() {
            return Err(Error::domain("ln_gamma", format!("x = {x} must be > 0")));
        }
        Ok(lanczos_ln_gamma(x))
    }

    /// Regularized lower incomplete gamma `P(x, y) = γ(x, y) / Γ(x)`.
    pub fn reg_gamma_p(&self, x: f64, y: f64) -> Result<f64> {
        self.reg_gamma_pair(x, y).map(|(p, _)| p)
    }

    /// Regularized upper incomplete gamma `Q(x, y) = Γ(x, y) / Γ(x)`.
    pub fn reg_gamma_q(&self, x: f64, y: f64) -> Result<f64> {
        self.reg_gamma_pair(x, y).map(|(_, q)| q)
    }

    /// `ln P(x, y)`, accurate also when `P` underflows.
    pub fn ln_reg_gamma_p(&self, x: f64, y: f64) -> Result<f64> {
        check_gamma_args(x, y)?;
        if y == 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        let log_prefactor = -y + x * y.ln() - lanczos_ln_gamma(x);
        if y < x + 1.0 {
            let sum = self.lower_series(x, y)?;
            Ok(log_prefactor + sum.ln())
        } else {
            let q = log_prefactor.exp() * self.upper_fraction(x, y)?;
            Ok((-q).ln_1p())
        }
    }

    fn reg_gamma_pair(&self, x: f64, y: f64) -> Result<(f64, f64)> {
        check_gamma_args(x, y)?;
        if y == 0.0 {
            return Ok((0.0, 1.0));
        }
        if y.is_infinite() {
            return Ok((1.0, 0.0));
        }
        let prefactor = (-y + x * y.ln() - lanczos_ln_gamma(x)).exp();
        if y < x + 1.0 {
            let p = (prefactor * self.lower_series(x, y)?).min(1.0);
            Ok((p, 1.0 - p))
        } else {
            let q = (prefactor * self.upper_fraction(x, y)?).clamp(0.0, 1.0);
            Ok((1.0 - q, q))
        }
    }

    /// `Σ_n y^n / (x (x+1) ... (x+n))`, so that `P = prefactor * sum`.
    fn lower_series(&self, x: f64, y: f64) -> Result<f64> {
        let mut denom = x;
        let mut term = 1.0 / x;
        let mut sum = term;
        for _ in 0..self.max_iter {
            denom += 1.0;
            term *= y / denom;
            sum += term;
            if term.abs() < sum.abs() * f64::EPSILON {
                return Ok(sum);
            }
        }
        Err(Error::NoConvergence(format!("incomplete gamma series at ({x}, {y})")))
    }

    /// Modified Lentz evaluation of the continued fraction for `Q`, without
    /// the prefactor.
    fn upper_fraction(&self, x: f64, y: f64) -> Result<f64> {
        const TINY: f64 = 1e-300;
        let mut b = y + 1.0 - x;
        let mut c = 1.0 / TINY;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..=self.max_iter {
            let an = -(i as f64) * (i as f64 - x);
            b += 2.0;
            d = an * d + b;
            if d.abs() < TINY {
                d = TINY;
            }
            c = b + an / c;
            if c.abs() < TINY {
                c = TINY;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < f64::EPSILON {
                return Ok(h);
            }
        }
        Err(Error::NoConvergence(format!(
            "incomplete gamma continued fraction at ({x}, {y})"
        )))
    }

    /// Principal branch `W₀(x)` for `x ≥ -1/e`.
    ///
    /// Inputs below the branch point by no more than the configured accuracy
    /// are snapped to it.
    pub fn lambert_w0(&self, x: f64) -> Result<f64> {
        let branch = -(-1.0f64).exp();
        if x.is_nan() || x < branch - self.accuracy {
            return Err(Error::domain(
                "lambert_w0",
                format!("x = {x} below the branch point -1/e"),
            ));
        }
        if x == 0.0 {
            return Ok(0.0);
        }
        if x.is_infinite() {
            return Ok(f64::INFINITY);
        }
        let dist = x - branch;
        if dist <= BRANCH_SERIES_RADIUS {
            return Ok(branch_point_series(dist.max(0.0)));
        }

        let mut w = if dist < 0.05 {
            branch_point_series(dist)
        } else if x < E {
            // crude but monotone; Halley fixes the rest
            let l = x.ln_1p();
            l * (1.0 - l / (2.0 + l))
        } else {
            let l = x.ln();
            l - l.ln()
        };

        for _ in 0..self.max_iter.min(200) {
            let ew = w.exp();
            let f = w * ew - x;
            if f == 0.0 {
                break;
            }
            let wp1 = w + 1.0;
            let step = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1));
            w -= step;
            if step.abs() <= f64::EPSILON * w.abs().max(1.0) {
                break;
            }
        }
        Ok(w.max(-1.0))
    }
}

fn check_gamma_args(x: f64, y: f64) -> Result<()> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::domain("incomplete gamma", format!("x = {x} must be > 0")));
    }
    if !(y >= 0.0) {
        return Err(Error::domain("incomplete gamma", format!("y = {y} must be >= 0")));
    }
    Ok(())
}

fn lanczos_ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // Γ(x) = Γ(x + 1) / x keeps the Lanczos sum in its good range
        return lanczos_ln_gamma(x + 1.0) - x.ln();
    }
    let z = x - 1.0;
    let mut acc = LANCZOS_COEF[0];
    for (i, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        acc += c / (z + i as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    0.5 * (2.0 * PI).ln() + (z + 0.5) * t.ln() - t + acc.ln()
}

/// Series of `W₀` around the branch point in `p = sqrt(2 (e x + 1))`,
/// with `dist = x + 1/e`.
fn branch_point_series(dist: f64) -> f64 {
    let p = (2.0 * E * dist).sqrt();
    const C: [f64; 7] = [
        -1.0,
        1.0,
        -1.0 / 3.0,
        11.0 / 72.0,
        -43.0 / 540.0,
        769.0 / 17_280.0,
        -221.0 / 8_505.0,
    ];
    C.iter().rev().fold(0.0, |acc, c| acc * p + c)
}

/// `ln Γ(x)` with the default configuration.
pub fn ln_gamma(x: f64) -> Result<f64> {
    SpecialFnConfig::default().ln_gamma(x)
}

/// `Q(x, y)` with the default configuration.
pub fn reg_gamma_q(x: f64, y: f64) -> Result<f64> {
    SpecialFnConfig::default().reg_gamma_q(x, y)
}

/// `P(x, y)` with the default configuration.
pub fn reg_gamma_p(x: f64, y: f64) -> Result<f64> {
    SpecialFnConfig::default().reg_gamma_p(x, y)
}

/// `W₀(x)` with the default configuration.
pub fn lambert_w0(x: f64) -> Result<f64> {
    SpecialFnConfig::default().lambert_w0(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// Composite Gauss–Legendre (5 point) quadrature, used as an independent oracle.
    fn gauss_legendre(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
        const X: [f64; 5] = [
            0.0,
            -0.538_469_310_105_683_1,
            0.538_469_310_105_683_1,
            -0.906_179_845_938_664,
            0.906_179_845_938_664,
        ];
        const W: [f64; 5] = [
            0.568_888_888_888_888_9,
            0.478_628_670_499_366_5,
            0.478_628_670_499_366_5,
            0.236_926_885_056_189_1,
            0.236_926_885_056_189_1,
        ];
        let h = (b - a) / panels as f64;
        (0..panels)
            .map(|i| {
                let lo = a + i as f64 * h;
                let mid = lo + 0.5 * h;
                X.iter().zip(W).map(|(x, w)| w * f(mid + 0.5 * h * x)).sum::<f64>() * 0.5 * h
            })
            .sum()
    }

    #[test]
    fn ln_gamma_anchors() {
        assert_abs_diff_eq!(ln_gamma(1.0).unwrap(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(ln_gamma(2.0).unwrap(), 0.0, epsilon = 1e-15);
        // Γ(5.5) = (9/2)(7/2)(5/2)(3/2)(1/2) √π, evaluated as a product
        let oracle = [4.5f64, 3.5, 2.5, 1.5, 0.5].iter().map(|v| v.ln()).sum::<f64>() + 0.5 * PI.ln();
        let got = ln_gamma(5.5).unwrap();
        assert!((got - oracle).abs() <= 1e-12 * oracle.abs() + 1e-15);
        // integer factorials
        let mut fact = 0.0f64;
        for n in 1..30 {
            fact += (n as f64).ln();
            let got = ln_gamma(n as f64 + 1.0).unwrap();
            assert!((got - fact).abs() <= 1e-12 * fact.abs() + 1e-14, "n={n}");
        }
    }

    #[test]
    fn ln_gamma_recurrence() {
        for i in 1..400 {
            let x = 0.05 * i as f64;
            let lhs = ln_gamma(x + 1.0).unwrap() - ln_gamma(x).unwrap() - x.ln();
            assert!(lhs.abs() <= 1e-12, "x={x} residual={lhs:e}");
        }
    }

    #[test]
    fn ln_gamma_rejects_nonpositive() {
        assert!(ln_gamma(0.0).is_err());
        assert!(ln_gamma(-1.5).is_err());
    }

    #[test]
    fn q_identities() {
        for y in [0.0, 1.0, 5.0] {
            assert_abs_diff_eq!(reg_gamma_q(1.0, y).unwrap(), (-y).exp(), epsilon = 1e-14);
        }
        for x in [1.0, 3.5, 10.0] {
            assert_eq!(reg_gamma_q(x, 0.0).unwrap(), 1.0);
        }
        assert!(reg_gamma_q(0.0, 1.0).is_err());
        assert!(reg_gamma_q(1.0, -1.0).is_err());
    }

    #[test]
    fn q_against_quadrature() {
        // Q(4, 2) = ∫₂^∞ t³ e^{-t} dt / Γ(4); tail truncated at 80
        let num = gauss_legendre(|t| t.powi(3) * (-t).exp(), 2.0, 80.0, 400);
        let oracle = num / 6.0;
        assert_abs_diff_eq!(reg_gamma_q(4.0, 2.0).unwrap(), oracle, epsilon = 1e-13);
        // closed form for integer order: e^{-2}(1 + 2 + 2 + 4/3)
        assert_abs_diff_eq!(oracle, (-2.0f64).exp() * (19.0 / 3.0), epsilon = 1e-13);
    }

    #[test]
    fn p_plus_q_is_one_on_grid() {
        for &x in &[0.5, 1.0, 2.5, 4.0, 9.0, 30.0] {
            for j in 0..25 {
                let y = 0.4 * j as f64 * (1.0 + x / 10.0);
                let lower = if y == 0.0 {
                    0.0
                } else if x < 1.0 {
                    // substitute t = u^{1/x}: γ(x, y) = ∫₀^{y^x} e^{-u^{1/x}} du / x
                    let top = y.powf(x);
                    gauss_legendre(|u| (-u.powf(1.0 / x)).exp(), 0.0, top, 800) / x
                } else {
                    gauss_legendre(|t| t.powf(x - 1.0) * (-t).exp(), 0.0, y, 800)
                };
                let p_oracle = lower / ln_gamma(x).unwrap().exp();
                let q = reg_gamma_q(x, y).unwrap();
                assert!((q + p_oracle - 1.0).abs() <= 1e-9, "x={x} y={y} q={q} p={p_oracle}");
            }
        }
    }

    #[test]
    fn q_monotone_and_vanishing() {
        let mut prev = 1.0;
        for j in 1..400 {
            let q = reg_gamma_q(6.0, 0.25 * j as f64).unwrap();
            assert!(q <= prev + 1e-16);
            prev = q;
        }
        assert!(prev < 1e-30);
    }

    #[test]
    fn ln_p_handles_underflow() {
        let cfg = SpecialFnConfig::default();
        // P(99, 1e-3) underflows f64, its log must stay finite
        let lp = cfg.ln_reg_gamma_p(99.0, 1e-3).unwrap();
        assert!(lp.is_finite() && lp < -700.0);
        let direct = cfg.reg_gamma_p(3.0, 2.0).unwrap().ln();
        assert_abs_diff_eq!(cfg.ln_reg_gamma_p(3.0, 2.0).unwrap(), direct, epsilon = 1e-14);
    }

    #[test]
    fn lambert_anchors() {
        assert_eq!(lambert_w0(0.0).unwrap(), 0.0);
        assert_abs_diff_eq!(lambert_w0(E).unwrap(), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(lambert_w0(-(-1.0f64).exp()).unwrap(), -1.0, epsilon = 1e-12);
        assert!(lambert_w0(-0.5).is_err());
    }

    #[test]
    fn lambert_omega_constant() {
        // Newton on w e^w = 1 in extended precision is unavailable; iterate
        // the contraction w ← (1 + w) / (1 + e^w) to a fixed point instead
        let mut w = 0.5f64;
        for _ in 0..200 {
            w = (1.0 + w) / (1.0 + w.exp());
        }
        assert_abs_diff_eq!(lambert_w0(1.0).unwrap(), w, epsilon = 1e-15);
        assert_abs_diff_eq!(w, 0.567_143_290_409_783_8, epsilon = 1e-15);
    }

    #[test]
    fn lambert_near_branch_point() {
        let branch = -(-1.0f64).exp();
        for k in 1..40 {
            let x = branch + 10f64.powf(-(k as f64) * 0.4);
            let w = lambert_w0(x).unwrap();
            assert!(w >= -1.0);
            assert!((w * w.exp() - x).abs() <= 1e-12, "x={x}");
        }
    }
}
