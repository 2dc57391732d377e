//! Lower bounds for the noiseless `N`-dimensional quantum channel probed by
//! rank-one two-outcome projective tests, from the two-parameter multiplier
//! ansatz `(α, β)` and symmetric caps of volume `S(θ) = sin^{2N−2}θ`.
//!
//! The ansatz gives the dual value
//!
//! ```text
//! I(α, β) = β/N + 2α/(N(N+1)) + min_θ F(θ, α, β)
//! F(θ, α, β) = −S(θ)[β + α(sin²θ/N + cos²θ)] − h(N, α S(θ) cos²θ)
//! h(N, y) = ln[Γ(N) P(N−1, y) / y^{N−1}] = −y + ln M(1, N, y)
//! ```
//!
//! with `P` the regularized lower incomplete gamma and `M` Kummer's function.
//! All quantities are in nats; bits only at presentation.

use std::f64::consts::{E, FRAC_PI_2, LN_2};
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::special::SpecialFnConfig;

/// Points in the verification scans of `F` over `θ`.
pub const SCAN_POINTS: usize = 2000;

/// Which construction produced a solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// Closed form for `N ≤ 4` with the incomplete gamma dropped.
    SmallNApprox,
    /// The closed form refined by Newton iterations on the full equation for `α`.
    SmallNExact,
    /// Root-found `θ_m` with `α(θ_m)` in Lambert-W form, `N ≥ 5`.
    LargeN,
}

impl Branch {
    pub fn as_str(self) -> &'static str {
        match self {
            Branch::SmallNApprox => "small_N_approx",
            Branch::SmallNExact => "small_N_exact",
            Branch::LargeN => "large_N",
        }
    }
}

/// Scan and solver diagnostics attached to a solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Diagnostics {
    /// `θ` at the smallest `F` on the verification grid.
    pub scan_theta_min: f64,
    pub scan_f_min: f64,
    /// `F(θ_m, α, β)` with the full incomplete gamma.
    pub f_at_theta_m: f64,
    /// Newton steps (small `N`) or bisection steps (large `N`).
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TwoOutcomeSolution {
    pub n: usize,
    pub branch: Branch,
    pub alpha: f64,
    pub beta: f64,
    pub theta_m: f64,
    pub bound_nats: f64,
    pub bound_bits: f64,
    pub diagnostics: Diagnostics,
}

impl TwoOutcomeSolution {
    /// `α > 0` and `−2α/(N+1) ≤ β ≤ −α/(N+1)`, with slack `tol·α`.
    pub fn in_significant_region(&self, tol: f64) -> bool {
        let n1 = (self.n + 1) as f64;
        self.alpha > 0.0
            && self.beta >= -2.0 * self.alpha / n1 - tol * self.alpha
            && self.beta <= -self.alpha / n1 + tol * self.alpha
    }
}

fn check_n(n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::domain("analytic bounds", format!("N = {n} must be at least 2")));
    }
    Ok(n as f64)
}

/// `sin^{2N−2}θ`.
pub fn cap_volume(n: usize, theta: f64) -> Result<f64> {
    let nf = check_n(n)?;
    if !(0.0..=FRAC_PI_2).contains(&theta) {
        return Err(Error::domain("cap_volume", format!("theta = {theta} outside [0, π/2]")));
    }
    Ok(theta.sin().powf(2.0 * nf - 2.0))
}

/// `θ` with `S(θ) = 1/N`, i.e. `arcsin N^{1/(2−2N)}`.
pub fn theta_unit_cap(n: usize) -> Result<f64> {
    let nf = check_n(n)?;
    Ok(nf.powf(1.0 / (2.0 - 2.0 * nf)).asin())
}

/// `ln M(1, N, y) = ln Σ_k y^k / (N)_k` for `0 ≤ y ≤ N`.
fn ln_kummer_series(nf: f64, y: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 0.0;
    while term > f64::EPSILON * sum * 0.01 {
        term *= y / (nf + k);
        sum += term;
        k += 1.0;
    }
    sum.ln()
}

/// `h(N, y) = ln[Γ(N) P(N−1, y) / y^{N−1}]`, evaluated without overflow.
///
/// `h(N, 0) = 0`, and `e^{−y−h}` is the ratio `e^{−y} y^{N−1} / (Γ(N) P(N−1, y))`
/// appearing in the stationarity equations.
pub fn log_gamma_ratio(cfg: &SpecialFnConfig, n: usize, y: f64) -> Result<f64> {
    let nf = check_n(n)?;
    if !(y >= 0.0) || !y.is_finite() {
        return Err(Error::domain("log_gamma_ratio", format!("y = {y}")));
    }
    if y <= nf {
        Ok(ln_kummer_series(nf, y) - y)
    } else {
        Ok(cfg.ln_gamma(nf)? - (nf - 1.0) * y.ln() + cfg.ln_reg_gamma_p(nf - 1.0, y)?)
    }
}

/// `F(θ, α, β)`.
pub fn f_theta(n: usize, theta: f64, alpha: f64, beta: f64) -> Result<f64> {
    f_theta_with(&SpecialFnConfig::default(), n, theta, alpha, beta)
}

pub fn f_theta_with(cfg: &SpecialFnConfig, n: usize, theta: f64, alpha: f64, beta: f64) -> Result<f64> {
    let nf = check_n(n)?;
    if !(alpha >= 0.0) {
        return Err(Error::domain("f_theta", format!("alpha = {alpha} must be positive")));
    }
    let s = cap_volume(n, theta)?;
    let (sin2, cos2) = (theta.sin().powi(2), theta.cos().powi(2));
    let y = alpha * s * cos2;
    Ok(-s * (beta + alpha * (sin2 / nf + cos2)) - log_gamma_ratio(cfg, n, y)?)
}

/// `β/N + 2α/(N(N+1))`, the linear part of the dual value.
pub fn linear_part(n: usize, alpha: f64, beta: f64) -> f64 {
    let nf = n as f64;
    beta / nf + 2.0 * alpha / (nf * (nf + 1.0))
}

/// Grid of `SCAN_POINTS` values of `θ` covering `(0, π/2]`.
pub fn scan_grid(points: usize) -> impl Iterator<Item = f64> {
    (1..=points).map(move |i| (FRAC_PI_2 * i as f64 / points as f64).min(FRAC_PI_2))
}

/// Location and value of the smallest `F` on the scan grid.
pub fn scan_minimum(n: usize, alpha: f64, beta: f64, points: usize) -> Result<(f64, f64)> {
    let cfg = SpecialFnConfig::default();
    let mut best = (0.0, f64::INFINITY);
    for t in scan_grid(points) {
        let f = f_theta_with(&cfg, n, t, alpha, beta)?;
        if f < best.1 {
            best = (t, f);
        }
    }
    Ok(best)
}

fn diagnostics(n: usize, alpha: f64, beta: f64, theta_m: f64, iterations: usize) -> Result<Diagnostics> {
    let (scan_theta_min, scan_f_min) = scan_minimum(n, alpha, beta, SCAN_POINTS)?;
    Ok(Diagnostics {
        scan_theta_min,
        scan_f_min,
        f_at_theta_m: f_theta(n, theta_m, alpha, beta)?,
        iterations,
    })
}

fn small_n_guard(n: usize) -> Result<f64> {
    if !(2..=4).contains(&n) {
        return Err(Error::Branch(format!(
            "the small-N construction covers N in 2..=4, got {n}"
        )));
    }
    Ok(n as f64)
}

/// `β` of the small-`N` construction for a given `α`.
fn small_n_beta(nf: f64, alpha: f64) -> f64 {
    let r = nf.powf(1.0 / (1.0 - nf));
    ((1.0 / (1.0 - r) - 1.0) / nf - 2.0) * alpha / (nf + 1.0)
}

/// Closed-form bound for `N ∈ {2, 3, 4}` obtained by neglecting the
/// incomplete-gamma correction.
pub fn bound_small_n_approx(n: usize) -> Result<TwoOutcomeSolution> {
    let nf = small_n_guard(n)?;
    let cfg = SpecialFnConfig::default();
    let r = nf.powf(1.0 / (1.0 - nf));
    let alpha = nf * nf * (nf + 1.0) / (nf - (nf + 1.0) * r);
    let beta = small_n_beta(nf, alpha);
    let theta_m = theta_unit_cap(n)?;
    let ln_gamma_root = cfg.ln_gamma(nf)? / (nf - 1.0);
    // both factors of the ratio are negative
    let ratio = nf * (nf + 1.0) * (r - 1.0) / ((1.0 + nf) * r - nf);
    let bound_nats = (nf - 1.0) * (ratio.ln() - 1.0 - ln_gamma_root);
    Ok(TwoOutcomeSolution {
        n,
        branch: Branch::SmallNApprox,
        alpha,
        beta,
        theta_m,
        bound_nats,
        bound_bits: bound_nats / LN_2,
        diagnostics: diagnostics(n, alpha, beta, theta_m, 0)?,
    })
}

/// Refines `α` of [`bound_small_n_approx`] by Newton iterations on
///
/// ```text
/// (N^{N/(1−N)} − 1/(N+1)) α/N + 1 = e^{−y} y^{N−1} / (Γ(N) P(N−1, y)),  y = α cos²θ_m / N
/// ```
///
/// keeping `θ_m` and the `β(α)` relation, and reports
/// `β/N + 2α/(N(N+1)) + F(θ_m)` with the full `F`.
pub fn refine_alpha_newton(n: usize, tol: f64) -> Result<TwoOutcomeSolution> {
    let nf = small_n_guard(n)?;
    if !(tol > 0.0) {
        return Err(Error::domain("refine_alpha_newton", "tolerance must be positive"));
    }
    let cfg = SpecialFnConfig::default();
    let start = bound_small_n_approx(n)?;
    let theta_m = start.theta_m;
    let cos2 = theta_m.cos().powi(2);
    let slope = nf.powf(nf / (1.0 - nf)) - 1.0 / (nf + 1.0);
    let residual = |alpha: f64| -> Result<f64> {
        let y = alpha * cos2 / nf;
        Ok(slope * alpha / nf + 1.0 - (-y - log_gamma_ratio(&cfg, n, y)?).exp())
    };

    let mut alpha = start.alpha;
    let mut iterations = 0;
    let mut newton_ok = false;
    for _ in 0..100 {
        iterations += 1;
        let f = residual(alpha)?;
        let h = 1e-6 * alpha;
        let df = (residual(alpha + h)? - residual(alpha - h)?) / (2.0 * h);
        if !(df.is_finite()) || df == 0.0 {
            break;
        }
        let step = f / df;
        alpha -= step;
        if !(alpha > 0.0) {
            break;
        }
        if step.abs() <= tol * alpha.abs().max(1.0) {
            newton_ok = residual(alpha)?.abs() <= tol.max(1e-12);
            break;
        }
    }
    if !newton_ok {
        // bracket on (0, start] where the residual changes sign
        let (mut lo, mut hi) = (1e-9 * start.alpha, 2.0 * start.alpha);
        let flo = residual(lo)?;
        if flo * residual(hi)? > 0.0 {
            return Err(Error::NoConvergence("refine_alpha_newton: root not bracketed".into()));
        }
        for _ in 0..200 {
            iterations += 1;
            let mid = 0.5 * (lo + hi);
            if residual(mid)? * flo > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= tol * hi {
                break;
            }
        }
        alpha = 0.5 * (lo + hi);
    }
    let beta = small_n_beta(nf, alpha);
    let d = diagnostics(n, alpha, beta, theta_m, iterations)?;
    let bound_nats = linear_part(n, alpha, beta) + d.f_at_theta_m;
    Ok(TwoOutcomeSolution {
        n,
        branch: Branch::SmallNExact,
        alpha,
        beta,
        theta_m,
        bound_nats,
        bound_bits: bound_nats / LN_2,
        diagnostics: d,
    })
}

/// `α(θ)` of the large-`N` system, `g = 1 + 1/cos²θ`.
fn large_n_alpha(cfg: &SpecialFnConfig, nf: f64, theta: f64) -> Result<f64> {
    let cos2 = theta.cos().powi(2);
    let g = 1.0 + 1.0 / cos2;
    let w = cfg.lambert_w0(-g * (-g).exp())?;
    let s = theta.sin().powf(2.0 * nf - 2.0);
    let tan2 = theta.tan().powi(2);
    Ok(-nf * (nf + 1.0) * (g + w) / (s * (1.0 + cos2) * (tan2 - nf)))
}

fn large_n_beta(nf: f64, theta: f64, alpha: f64) -> f64 {
    alpha * (theta.tan().powi(2) - 2.0 * nf) / (nf * (nf + 1.0))
}

/// Residual of the equation fixing `θ_m`,
///
/// ```text
/// e^{−τα}(τα)^{N−1} / (Γ(N) P(N−1, τα)) = 1 − (1/(N+1) − sin²θ/N) α S,   τ = cos²θ · S
/// ```
///
/// in logarithmic form. Both sides are tiny near the root for large `N`, so
/// the right side is rewritten through `α(θ)` as `−w cos²θ / (1 + cos²θ)`
/// with `w = W₀(−g e^{−g})`, and `ln(−w) = ln g − g − w` avoids the
/// cancellation.
fn large_n_residual(cfg: &SpecialFnConfig, n: usize, theta: f64) -> Result<f64> {
    let nf = n as f64;
    let cos2 = theta.cos().powi(2);
    let g = 1.0 + 1.0 / cos2;
    let w = cfg.lambert_w0(-g * (-g).exp())?;
    let alpha = large_n_alpha(cfg, nf, theta)?;
    let y = cos2 * theta.sin().powf(2.0 * nf - 2.0) * alpha;
    if !(y >= 0.0) || !y.is_finite() {
        return Ok(f64::NAN);
    }
    let lhs = -y - log_gamma_ratio(cfg, n, y)?;
    let rhs = g.ln() - g - w + cos2.ln() - cos2.ln_1p();
    Ok(lhs - rhs)
}

/// Options for [`bound_large_n_with`].
#[derive(Debug, Clone, Copy)]
pub struct LargeNOptions {
    /// Tolerance on `F(θ_m)`, on `F'(θ_m)` and on `−min F` over the scan.
    pub tol: f64,
    /// Points of the root-bracketing scan over `(0.01, π/2 − 0.01)`.
    pub bracket_points: usize,
}

impl Default for LargeNOptions {
    fn default() -> Self {
        Self {
            tol: 1e-7,
            bracket_points: 4000,
        }
    }
}

/// Large-`N` bound with the given verification tolerance.
pub fn bound_large_n(n: usize, tol: f64) -> Result<TwoOutcomeSolution> {
    bound_large_n_with(
        n,
        &LargeNOptions {
            tol,
            ..LargeNOptions::default()
        },
    )
}

/// Solves the large-`N` system.
///
/// Candidate roots come from sign changes on a uniform scan, refined by
/// bisection; sign changes across poles are discarded by their residual.
/// The first root whose `F(θ_m)` and `F'(θ_m)` vanish and whose `F` stays
/// non-negative on the scan grid is accepted.
pub fn bound_large_n_with(n: usize, opts: &LargeNOptions) -> Result<TwoOutcomeSolution> {
    let nf = check_n(n)?;
    if n < 5 {
        return Err(Error::Branch(format!("the large-N construction needs N >= 5, got {n}")));
    }
    let cfg = SpecialFnConfig::default();
    let (lo, hi) = (0.01, FRAC_PI_2 - 0.01);
    let pts = opts.bracket_points.max(10);
    let grid: Vec<f64> = (0..=pts).map(|i| lo + (hi - lo) * i as f64 / pts as f64).collect();
    let values: Vec<f64> = grid
        .iter()
        .map(|&t| large_n_residual(&cfg, n, t))
        .collect::<Result<_>>()?;

    let mut last_failure = None;
    for i in 0..pts {
        let (f0, f1) = (values[i], values[i + 1]);
        if !(f0.is_finite() && f1.is_finite()) || f0.signum() == f1.signum() {
            continue;
        }
        let (mut a, mut b, fa) = (grid[i], grid[i + 1], f0);
        let mut steps = 0;
        while b - a > 4.0 * f64::EPSILON * b && steps < 200 {
            steps += 1;
            let m = 0.5 * (a + b);
            let fm = large_n_residual(&cfg, n, m)?;
            if fm.signum() == fa.signum() {
                a = m;
            } else {
                b = m;
            }
        }
        let theta = 0.5 * (a + b);
        let res = large_n_residual(&cfg, n, theta)?;
        let scale = f0.abs().max(f1.abs()).max(1.0);
        if !(res.abs() <= 1e-8 * scale) {
            continue; // a pole, not a root
        }
        let alpha = large_n_alpha(&cfg, nf, theta)?;
        if !(alpha > 0.0) {
            continue;
        }
        let beta = large_n_beta(nf, theta, alpha);
        let d = diagnostics(n, alpha, beta, theta, steps)?;
        let step = 1e-5;
        let slope = (f_theta(n, theta + step, alpha, beta)? - f_theta(n, theta - step, alpha, beta)?) / (2.0 * step);
        let scale = alpha * cap_volume(n, theta)?;
        if d.f_at_theta_m.abs() <= opts.tol && slope.abs() <= opts.tol * scale.max(1.0) && d.scan_f_min >= -opts.tol {
            let bound_nats = linear_part(n, alpha, beta);
            return Ok(TwoOutcomeSolution {
                n,
                branch: Branch::LargeN,
                alpha,
                beta,
                theta_m: theta,
                bound_nats,
                bound_bits: bound_nats / LN_2,
                diagnostics: d,
            });
        }
        last_failure = Some(if d.scan_f_min < -opts.tol {
            Error::GlobalMinimum {
                theta: d.scan_theta_min,
                value: d.scan_f_min,
            }
        } else {
            Error::GlobalMinimum {
                theta,
                value: d.f_at_theta_m,
            }
        });
    }
    Err(last_failure.unwrap_or_else(|| Error::Branch(format!("no root of the theta equation bracketed for N = {n}"))))
}

/// Constants of the `N → ∞` regime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AsymptoticConstants {
    /// Second root of `1 − e/z − z/e + ln z = 0`.
    pub z1: f64,
    /// `|1 − e/z1 − z1/e + ln z1|`.
    pub residual: f64,
    /// `e^{e/(z1−e)} (z1−e)² / z1`.
    pub limit_nats: f64,
    pub limit_bits: f64,
}

fn z_equation(z: f64) -> f64 {
    1.0 - E / z - z / E + z.ln()
}

/// Root of the `z` equation above `e` (the first root is `z = e`).
pub fn solve_z1() -> AsymptoticConstants {
    let (mut lo, mut hi) = (3.0f64, 20.0f64);
    // z_equation(3) > 0 > z_equation(20)
    while hi - lo > 4.0 * f64::EPSILON * hi {
        let m = 0.5 * (lo + hi);
        if z_equation(m) > 0.0 {
            lo = m;
        } else {
            hi = m;
        }
    }
    let mut z = 0.5 * (lo + hi);
    // one Newton polish: d/dz = e/z² − 1/e + 1/z
    let d = E / (z * z) - 1.0 / E + 1.0 / z;
    z -= z_equation(z) / d;
    let limit_nats = (E / (z - E)).exp() * (z - E).powi(2) / z;
    AsymptoticConstants {
        z1: z,
        residual: z_equation(z).abs(),
        limit_nats,
        limit_bits: limit_nats / LN_2,
    }
}

/// `[N(e−z)+z]² / (N z (Ne+z) (1 + z/(N(e−z)))^N)` at `z = z1`, in nats.
pub fn asymptotic_bound(n: usize) -> Result<f64> {
    let nf = check_n(n)?;
    let z = solve_z1().z1;
    let base = -z / (nf * (z - E));
    if base <= -1.0 {
        return Err(Error::domain("asymptotic_bound", format!("N = {n} too small")));
    }
    let ln = 2.0 * (nf * (E - z) + z).abs().ln() - nf.ln() - z.ln() - (nf * E + z).ln() - nf * base.ln_1p();
    Ok(ln.exp())
}

/// Hypotheses the conjectured bound rests on.
pub const CONJECTURE_HYPOTHESES: &str = "relies on the unproven stationarity of the maximal constraint set under the beta perturbation and on the symmetric-cap maximality hypothesis";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConjecturedBound {
    pub n: usize,
    /// `−(N−1) ln(1 − N^{1/(1−N)})`.
    pub value_nats: f64,
    pub value_bits: f64,
    /// `½ N log₂ N`.
    pub comparison_bits: f64,
    /// `(n, n·2^{n−1})` when `N = 2^n`.
    pub power_of_two: Option<(u32, f64)>,
    pub conjecture_dependent: bool,
    pub hypotheses: &'static str,
}

pub fn conjectured_bound(n: usize) -> Result<ConjecturedBound> {
    let nf = check_n(n)?;
    // 1 − N^{1/(1−N)} = −expm1(−ln N / (N−1)), accurate for large N
    let one_minus = -(-(nf.ln()) / (nf - 1.0)).exp_m1();
    let value_nats = -(nf - 1.0) * one_minus.ln();
    let power_of_two = n.is_power_of_two().then(|| {
        let k = n.trailing_zeros();
        (k, k as f64 * 2f64.powi(k as i32 - 1))
    });
    Ok(ConjecturedBound {
        n,
        value_nats,
        value_bits: value_nats / LN_2,
        comparison_bits: 0.5 * nf * nf.log2(),
        power_of_two,
        conjecture_dependent: true,
        hypotheses: CONJECTURE_HYPOTHESES,
    })
}

/// Upper end of the sandwich `C ≤ c + 2 log₂(c + 1) + 2 log₂ e`, in bits.
pub fn sandwich_upper(c_asym_bits: f64) -> Result<f64> {
    if !(c_asym_bits >= 0.0) || !c_asym_bits.is_finite() {
        return Err(Error::domain(
            "sandwich_upper",
            format!("{c_asym_bits} must be a finite non-negative number of bits"),
        ));
    }
    Ok(c_asym_bits + 2.0 * (c_asym_bits + 1.0).log2() + 2.0 * std::f64::consts::LOG2_E)
}

/// Branch chosen for `N` when nothing is requested: the refined small-`N`
/// construction up to 4, the large-`N` system from 5.
pub fn bound_auto(n: usize, tol: f64) -> Result<TwoOutcomeSolution> {
    if n <= 4 {
        refine_alpha_newton(n, tol)
    } else {
        bound_large_n(n, LargeNOptions::default().tol.max(tol))
    }
}

/// One row of a sweep. Failures are kept per row.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub n: usize,
    pub solution: std::result::Result<TwoOutcomeSolution, String>,
    pub asymptotic_bits: Option<f64>,
    pub conjectured_bits: f64,
}

/// Bounds for every `N` in `from..=to`, computed in parallel, in order.
pub fn sweep(from: usize, to: usize, tol: f64) -> Result<Vec<SweepRow>> {
    check_n(from)?;
    if from > to {
        return Err(Error::domain("sweep", format!("empty range {from}..={to}")));
    }
    (from..=to)
        .into_par_iter()
        .map(|n| {
            Ok(SweepRow {
                n,
                solution: bound_auto(n, tol).map_err(|e| e.to_string()),
                asymptotic_bits: asymptotic_bound(n).ok().map(|v| v / LN_2),
                conjectured_bits: conjectured_bound(n)?.value_bits,
            })
        })
        .collect()
}

/// Column header of the sweep table.
pub const SWEEP_HEADER: &str = "N,branch,alpha,beta,theta_m,bound_nats,bound_bits,asymptotic_bits,conjectured_bits";

/// Writes the sweep as CSV: `#` comment lines, the header, then one row per
/// `N` with 17 significant digits. Failed rows carry `failed` and empty
/// numeric fields except the conjectured column.
pub fn write_sweep_csv<W: Write>(out: &mut W, rows: &[SweepRow], comments: &[String]) -> std::io::Result<()> {
    for c in comments {
        writeln!(out, "# {c}")?;
    }
    writeln!(out, "{SWEEP_HEADER}")?;
    let num = |x: f64| format!("{x:.16e}");
    for r in rows {
        let asym = r.asymptotic_bits.map(num).unwrap_or_default();
        match &r.solution {
            Ok(s) => writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.n,
                s.branch.as_str(),
                num(s.alpha),
                num(s.beta),
                num(s.theta_m),
                num(s.bound_nats),
                num(s.bound_bits),
                asym,
                num(r.conjectured_bits)
            )?,
            Err(_) => writeln!(out, "{},failed,,,,,,{},{}", r.n, asym, num(r.conjectured_bits))?,
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// `Γ(N) P(N−1, y) / y^{N−1} = (N−1) ∫₀¹ u^{N−2} e^{−y u} du` by
    /// composite Gauss–Legendre.
    fn h_oracle(n: usize, y: f64) -> f64 {
        let nodes = [
            (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
            (-0.538_469_310_105_683, 0.478_628_670_499_366_5),
            (0.0, 0.568_888_888_888_888_9),
            (0.538_469_310_105_683, 0.478_628_670_499_366_5),
            (0.906_179_845_938_664, 0.236_926_885_056_189_1),
        ];
        let panels = 4000;
        let width = 1.0 / panels as f64;
        let mut total = 0.0;
        for p in 0..panels {
            let mid = (p as f64 + 0.5) * width;
            for (x, w) in nodes {
                let u: f64 = mid + 0.5 * width * x;
                total += w * 0.5 * width * u.powi(n as i32 - 2) * (-y * u).exp();
            }
        }
        ((n as f64 - 1.0) * total).ln()
    }

    #[test]
    fn cap_volume_anchors() {
        assert_eq!(cap_volume(5, FRAC_PI_2).unwrap(), 1.0);
        assert_abs_diff_eq!(
            cap_volume(2, std::f64::consts::FRAC_PI_4).unwrap(),
            0.5,
            epsilon = 1e-15
        );
        for n in 2..=10 {
            let t = theta_unit_cap(n).unwrap();
            assert_abs_diff_eq!(cap_volume(n, t).unwrap(), 1.0 / n as f64, epsilon = 1e-14);
        }
        assert!(cap_volume(3, 2.0).is_err());
        assert!(cap_volume(1, 0.5).is_err());
    }

    #[test]
    fn gamma_ratio_against_quadrature() {
        let cfg = SpecialFnConfig::default();
        for n in [2, 3, 5, 12] {
            for y in [1e-6, 0.3, 2.0, 7.5, 30.0] {
                let got = log_gamma_ratio(&cfg, n, y).unwrap();
                assert_abs_diff_eq!(got, h_oracle(n, y), epsilon = 1e-10);
            }
        }
        assert_eq!(log_gamma_ratio(&cfg, 4, 0.0).unwrap(), 0.0);
        // both evaluation paths agree at the switch
        let nf = 20.0;
        let series = ln_kummer_series(nf, nf) - nf;
        let gamma = cfg.ln_gamma(nf).unwrap() - (nf - 1.0) * nf.ln() + cfg.ln_reg_gamma_p(nf - 1.0, nf).unwrap();
        assert_abs_diff_eq!(series, gamma, epsilon = 1e-12);
    }

    #[test]
    fn gamma_ratio_survives_large_arguments() {
        let cfg = SpecialFnConfig::default();
        let v = log_gamma_ratio(&cfg, 100, 5e4).unwrap();
        // P → 1 so h → ln Γ(N) − (N−1) ln y
        let expect = cfg.ln_gamma(100.0).unwrap() - 99.0 * 5e4f64.ln();
        assert_abs_diff_eq!(v, expect, epsilon = 1e-9);
    }

    #[test]
    fn f_is_finite_near_the_axis() {
        let (n, a, b) = (3, 51.0, -30.0);
        let t: f64 = 1e-4;
        let s = t.sin().powi(4);
        let y = a * s * t.cos().powi(2);
        let oracle = -s * (b + a * (t.sin().powi(2) / 3.0 + t.cos().powi(2))) - h_oracle(n, y);
        let got = f_theta(n, t, a, b).unwrap();
        assert!(got.is_finite());
        assert_abs_diff_eq!(got, oracle, epsilon = 1e-15);
        assert_abs_diff_eq!(f_theta(n, 1e-9, a, b).unwrap(), 0.0, epsilon = 1e-30);
    }

    #[test]
    fn small_n_closed_form() {
        let expect = [1.14227, 1.86776, 2.45238];
        for (n, e) in (2..=4).zip(expect) {
            let s = bound_small_n_approx(n).unwrap();
            assert!((s.bound_bits - e).abs() <= 5e-5, "N={n}: {}", s.bound_bits);
            assert!(s.in_significant_region(1e-12));
            assert_eq!(s.bound_bits, s.bound_nats / LN_2);
        }
        assert!(matches!(bound_small_n_approx(5), Err(Error::Branch(_))));
        assert!(matches!(bound_small_n_approx(1), Err(Error::Branch(_))));
    }

    #[test]
    fn small_n_closed_form_equals_truncated_objective() {
        // with P(N−1, y) → 1 the objective at θ_m must reduce to the closed form
        let cfg = SpecialFnConfig::default();
        for n in 2..=4 {
            let s = bound_small_n_approx(n).unwrap();
            let nf = n as f64;
            let t = s.theta_m;
            let sv = cap_volume(n, t).unwrap();
            let y = s.alpha * sv * t.cos().powi(2);
            let h = cfg.ln_gamma(nf).unwrap() - (nf - 1.0) * y.ln();
            let f = -sv * (s.beta + s.alpha * (t.sin().powi(2) / nf + t.cos().powi(2))) - h;
            assert_abs_diff_eq!(linear_part(n, s.alpha, s.beta) + f, s.bound_nats, epsilon = 1e-12);
        }
    }

    #[test]
    fn newton_refinement() {
        let expect = [1.14602, 1.87606, 2.46463];
        for (n, e) in (2..=4).zip(expect) {
            let s = refine_alpha_newton(n, 1e-12).unwrap();
            assert!((s.bound_bits - e).abs() <= 5e-5, "N={n}: {}", s.bound_bits);
            assert!(s.bound_bits >= bound_small_n_approx(n).unwrap().bound_bits);
            assert!(s.in_significant_region(1e-12));
            assert!(s.diagnostics.iterations < 20);
        }
    }

    #[test]
    fn large_n_solution_is_verified() {
        let s = bound_large_n(5, 1e-7).unwrap();
        assert_eq!(s.branch, Branch::LargeN);
        assert!(s.in_significant_region(1e-12));
        assert!(s.diagnostics.f_at_theta_m.abs() <= 1e-7);
        assert!(s.diagnostics.scan_f_min >= s.diagnostics.f_at_theta_m - 1e-8);
        assert!(s.bound_bits > 1.0);
        assert!(matches!(bound_large_n(4, 1e-7), Err(Error::Branch(_))));
    }

    #[test]
    fn asymptotic_constants() {
        let c = solve_z1();
        assert!((c.z1 - 6.895).abs() <= 1e-3);
        assert!(c.residual <= 1e-12);
        assert!(c.z1 > E && c.z1 < 20.0);
        assert!((c.limit_bits - 6.998).abs() <= 1e-3);
        // the formula tends to the limit
        let far = asymptotic_bound(1 << 24).unwrap() / LN_2;
        assert!((far - c.limit_bits).abs() < 1e-5);
    }

    #[test]
    fn conjectured_bound_values() {
        let c = conjectured_bound(2).unwrap();
        assert_abs_diff_eq!(c.value_bits, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c.comparison_bits, 1.0, epsilon = 1e-15);
        assert!(c.conjecture_dependent);
        for k in 1..=10u32 {
            let c = conjectured_bound(1 << k).unwrap();
            let (kk, id) = c.power_of_two.unwrap();
            assert_eq!(kk, k);
            assert_eq!(id, c.comparison_bits);
        }
        // N = 4: −3 log₂(1 − 4^{−1/3}) by plain arithmetic
        let direct = -3.0 * (1.0 - 1.0 / 4f64.cbrt()).log2();
        assert_abs_diff_eq!(conjectured_bound(4).unwrap().value_bits, direct, epsilon = 1e-13);
        assert!(direct >= 4.0);
        assert!(conjectured_bound(6).unwrap().power_of_two.is_none());
    }

    #[test]
    fn sandwich() {
        let l2e = std::f64::consts::LOG2_E;
        assert_abs_diff_eq!(sandwich_upper(0.0).unwrap(), 2.0 * l2e, epsilon = 1e-15);
        assert_abs_diff_eq!(sandwich_upper(1.0).unwrap(), 3.0 + 2.0 * l2e, epsilon = 1e-15);
        let c = 1.14602;
        let manual = c + 2.0 * (2.14602f64).ln() / LN_2 + 2.0 / LN_2;
        assert_abs_diff_eq!(sandwich_upper(c).unwrap(), manual, epsilon = 1e-13);
        assert!(sandwich_upper(-0.1).is_err());
    }

    #[test]
    fn sweep_rows_and_csv() {
        assert!(sweep(5, 4, 1e-9).is_err());
        let rows = sweep(2, 6, 1e-12).unwrap();
        assert_eq!(rows.iter().map(|r| r.n).collect::<Vec<_>>(), vec![2, 3, 4, 5, 6]);
        let mut buf = Vec::new();
        write_sweep_csv(&mut buf, &rows, &["test".into()]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "# test");
        assert_eq!(lines[1], SWEEP_HEADER);
        assert!(lines[2].starts_with("2,small_N_exact,"));
        assert!(lines[5].starts_with("5,large_N,"));
        assert_eq!(lines[2].split(',').count(), 9);
    }
}
