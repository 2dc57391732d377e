//! Monte Carlo checks of the Haar-measure identities behind the analytic
//! bounds, and a brute-force search over the `(α, β)` ansatz.
//!
//! Randomness is counter based: sample `i` of a run belongs to chunk
//! `i / CHUNK`, and every chunk draws from its own ChaCha stream. Chunk sums
//! are combined in chunk order, so results do not depend on the thread count.

use std::f64::consts::{FRAC_PI_2, LN_2};

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use rayon::prelude::*;
use serde::Serialize;

use crate::analytic::{self, cap_volume, linear_part};
use crate::error::{Error, Result};
use crate::special::SpecialFnConfig;

/// Samples per random stream.
pub const CHUNK: usize = 1 << 14;

/// Stream ids are `tag << 48 | chunk`, keeping the checks independent.
const TAG_MOMENTS: u64 = 1;
const TAG_CAP: u64 = 2;
const TAG_GRID: u64 = 3;
const TAG_AUX: u64 = 4;

/// Acceptance band in standard errors.
pub const Z_BAND: f64 = 5.0;

/// Haar-uniform unit vectors in `C^N` from normalized complex Gaussians.
#[derive(Debug, Clone)]
pub struct HaarSampler {
    dimension: usize,
    seed: u64,
    counter: u64,
    rng: ChaCha8Rng,
}

impl HaarSampler {
    pub fn new(dimension: usize, seed: u64) -> Result<Self> {
        Self::with_counter(dimension, seed, 0)
    }

    /// A sampler positioned at the start of stream `counter`.
    pub fn with_counter(dimension: usize, seed: u64, counter: u64) -> Result<Self> {
        if dimension < 2 {
            return Err(Error::domain("HaarSampler", format!("dimension {dimension} < 2")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(counter);
        Ok(Self {
            dimension,
            seed,
            counter,
            rng,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }

    pub fn sample_state(&mut self) -> Vec<Complex64> {
        loop {
            let v: Vec<Complex64> = (0..self.dimension)
                .map(|_| {
                    Complex64::new(
                        StandardNormal.sample(&mut self.rng),
                        StandardNormal.sample(&mut self.rng),
                    )
                })
                .collect();
            let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if norm > 0.0 {
                return v.into_iter().map(|z| z / norm).collect();
            }
        }
    }

    fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        Uniform::new(lo, hi).expect("valid range").sample(&mut self.rng)
    }
}

/// `|⟨a|b⟩|²`.
pub fn overlap(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum::<Complex64>().norm_sqr()
}

/// Sums of `f` over `samples` draws, split in chunks with one stream each.
fn chunked_sums<F>(dimension: usize, seed: u64, tag: u64, samples: usize, width: usize, f: F) -> Result<Vec<f64>>
where
    F: Fn(&mut HaarSampler, &mut [f64]) + Sync,
{
    let chunks = samples.div_ceil(CHUNK);
    let parts: Vec<Vec<f64>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut sampler = HaarSampler::with_counter(dimension, seed, (tag << 48) | c as u64)?;
            let mut acc = vec![0.0; width];
            let n = CHUNK.min(samples - c * CHUNK);
            for _ in 0..n {
                f(&mut sampler, &mut acc);
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let mut total = vec![0.0; width];
    for p in parts {
        for (t, v) in total.iter_mut().zip(p) {
            *t += v;
        }
    }
    Ok(total)
}

/// An empirical mean against its target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub target: f64,
    pub mean: f64,
    pub std_error: f64,
    /// `(mean − target) / std_error`.
    pub z: f64,
    pub passed: bool,
}

impl Estimate {
    fn from_sums(target: f64, sum: f64, sum_sq: f64, n: usize) -> Self {
        let nf = n as f64;
        let mean = sum / nf;
        let var = ((sum_sq / nf - mean * mean) * nf / (nf - 1.0)).max(0.0);
        let std_error = (var / nf).sqrt();
        let z = if std_error > 0.0 {
            (mean - target) / std_error
        } else if mean == target {
            0.0
        } else {
            f64::INFINITY
        };
        Self {
            target,
            mean,
            std_error,
            z,
            passed: z.abs() <= Z_BAND,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentReport {
    pub dimension: usize,
    pub samples: usize,
    pub seed: u64,
    /// `E|⟨φ|ψ⟩|²` against `1/N`.
    pub second: Estimate,
    /// `E|⟨φ|ψ⟩|⁴` against `2/(N(N+1))`.
    pub fourth: Estimate,
    pub passed: bool,
}

/// Moments of `|⟨φ|ψ⟩|²` for Haar `φ` and a fixed Haar-drawn `ψ`.
pub fn moment_checks(dimension: usize, samples: usize, seed: u64) -> Result<MomentReport> {
    if samples < 10_000 {
        return Err(Error::Monte(format!("{samples} samples is below the minimum of 10000")));
    }
    let psi = HaarSampler::with_counter(dimension, seed, TAG_AUX << 48)?.sample_state();
    let sums = chunked_sums(dimension, seed, TAG_MOMENTS, samples, 3, |s, acc| {
        let x = overlap(&s.sample_state(), &psi);
        let x2 = x * x;
        acc[0] += x;
        acc[1] += x2;
        acc[2] += x2 * x2;
    })?;
    let nf = dimension as f64;
    let second = Estimate::from_sums(1.0 / nf, sums[0], sums[1], samples);
    let fourth = Estimate::from_sums(2.0 / (nf * (nf + 1.0)), sums[1], sums[2], samples);
    Ok(MomentReport {
        dimension,
        samples,
        seed,
        second,
        fourth,
        passed: second.passed && fourth.passed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CapReport {
    pub dimension: usize,
    pub theta: f64,
    pub samples: usize,
    pub accepted: usize,
    pub acceptance_fraction: f64,
    /// `|⟨ψ|χ⟩|²`.
    pub axis_overlap: f64,
    /// Estimate of `∫_{Ω(θ)} dφ |⟨ψ|φ⟩|²` against
    /// `S(θ)(cos²θ |⟨ψ|χ⟩|² + sin²θ/N)`.
    pub estimate: Estimate,
    pub passed: bool,
}

/// Smallest accepted fraction of samples inside the cap.
pub const MIN_ACCEPTANCE: f64 = 1e-4;

/// Cap-restricted integral of `|⟨ψ|φ⟩|²` over the cap `|⟨χ|φ⟩|² ≥ cos²θ`.
pub fn cap_overlap_check(
    theta: f64,
    chi: &[Complex64],
    psi: &[Complex64],
    samples: usize,
    seed: u64,
) -> Result<CapReport> {
    let dimension = chi.len();
    if psi.len() != dimension {
        return Err(Error::Dimension("axis and state differ in dimension".into()));
    }
    if !(theta > 0.0 && theta <= FRAC_PI_2) {
        return Err(Error::domain(
            "cap_overlap_check",
            format!("theta = {theta} outside (0, π/2]"),
        ));
    }
    for v in [chi, psi] {
        let norm: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::domain("cap_overlap_check", "vectors must have unit norm"));
        }
    }
    if samples < 2 {
        return Err(Error::Monte("need at least two samples".into()));
    }
    let cos2 = theta.cos().powi(2);
    let sums = chunked_sums(dimension, seed, TAG_CAP, samples, 3, |s, acc| {
        let phi = s.sample_state();
        if overlap(chi, &phi) >= cos2 {
            let x = overlap(psi, &phi);
            acc[0] += 1.0;
            acc[1] += x;
            acc[2] += x * x;
        }
    })?;
    let accepted = sums[0] as usize;
    let fraction = sums[0] / samples as f64;
    if fraction < MIN_ACCEPTANCE {
        return Err(Error::Monte(format!(
            "only {accepted} of {samples} samples fell in the cap; raise the sample count"
        )));
    }
    let nf = dimension as f64;
    let axis_overlap = overlap(psi, chi);
    let closed = cap_volume(dimension, theta)? * (cos2 * axis_overlap + theta.sin().powi(2) / nf);
    let estimate = Estimate::from_sums(closed, sums[1], sums[2], samples);
    Ok(CapReport {
        dimension,
        theta,
        samples,
        accepted,
        acceptance_fraction: fraction,
        axis_overlap,
        estimate,
        passed: estimate.passed,
    })
}

/// Search grid for [`grid_search_bound`]. `β = −α(1+u)/(N+1)` with
/// `u ∈ [0, 1]` spans the significant region.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GridSpec {
    pub alpha_max: f64,
    pub alpha_points: usize,
    pub u_points: usize,
    pub theta_points: usize,
    /// Refinement rounds, each shrinking the window around the best point.
    pub zoom_levels: usize,
    /// Random caps in the Monte Carlo feasibility check.
    pub mc_caps: usize,
}

impl GridSpec {
    pub fn for_dimension(n: usize) -> Self {
        let nf = n as f64;
        Self {
            alpha_max: 4.0 * nf * nf * (nf + 1.0),
            alpha_points: 24,
            u_points: 24,
            theta_points: 400,
            zoom_levels: 10,
            mc_caps: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CapCheck {
    pub theta: f64,
    /// `ln E_ψ exp(∫_Ω λ)` estimated by sampling.
    pub mc_log_integral: f64,
    /// The same from the incomplete gamma closed form, `−F(θ)`.
    pub analytic_log_integral: f64,
    pub log_std_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridSearchReport {
    pub dimension: usize,
    pub alpha: f64,
    pub beta: f64,
    /// Optimal shift, `−min_θ F`.
    pub shift: f64,
    pub bound_nats: f64,
    pub bound_bits: f64,
    pub evaluations: usize,
    pub cap_checks: Vec<CapCheck>,
}

/// `β/N + 2α/(N(N+1)) + min(0, min_θ F)`, grid plus golden-section polish.
fn ansatz_value(cfg: &SpecialFnConfig, n: usize, alpha: f64, beta: f64, theta_points: usize) -> Result<f64> {
    let f = |t: f64| analytic::f_theta_with(cfg, n, t, alpha, beta);
    let h = FRAC_PI_2 / theta_points as f64;
    let mut best = (0usize, 0.0f64);
    for i in 1..=theta_points {
        let v = f((h * i as f64).min(FRAC_PI_2))?;
        if v < best.1 {
            best = (i, v);
        }
    }
    let mut min = best.1;
    if best.0 > 0 {
        let (mut a, mut b) = (h * (best.0 as f64 - 1.0), (h * (best.0 as f64 + 1.0)).min(FRAC_PI_2));
        let g = 0.5 * (5f64.sqrt() - 1.0);
        let mut c = b - g * (b - a);
        let mut d = a + g * (b - a);
        let (mut fc, mut fd) = (f(c)?, f(d)?);
        for _ in 0..60 {
            if fc < fd {
                b = d;
                d = c;
                fd = fc;
                c = b - g * (b - a);
                fc = f(c)?;
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + g * (b - a);
                fd = f(d)?;
            }
        }
        min = min.min(fc).min(fd);
    }
    Ok(linear_part(n, alpha, beta) + min.min(0.0))
}

/// Brute-force maximum of the ansatz value over a zooming `(α, u)` grid.
/// The winner's constraint is then re-evaluated by sampling on random caps.
pub fn grid_search_bound(n: usize, spec: &GridSpec, samples: usize, seed: u64) -> Result<GridSearchReport> {
    if n < 2 {
        return Err(Error::domain("grid_search_bound", format!("N = {n} < 2")));
    }
    if !(spec.alpha_max >= 0.0) || spec.theta_points < 2 {
        return Err(Error::domain("grid_search_bound", "bad grid"));
    }
    let cfg = SpecialFnConfig::default();
    let nf = n as f64;
    let beta_of = |alpha: f64, u: f64| -alpha * (1.0 + u) / (nf + 1.0);
    let axis = |lo: f64, hi: f64, pts: usize| -> Vec<f64> {
        if pts <= 1 || hi <= lo {
            vec![lo]
        } else {
            (0..pts).map(|i| lo + (hi - lo) * i as f64 / (pts - 1) as f64).collect()
        }
    };
    let (mut a_lo, mut a_hi) = (0.0, spec.alpha_max);
    let (mut u_lo, mut u_hi) = (0.0, 1.0);
    let mut best = (0.0f64, 0.0f64, f64::NEG_INFINITY);
    let mut evaluations = 0;
    for _ in 0..=spec.zoom_levels {
        let alphas = axis(a_lo, a_hi, spec.alpha_points);
        let us = axis(u_lo, u_hi, spec.u_points);
        let points: Vec<(f64, f64)> = alphas.iter().flat_map(|&a| us.iter().map(move |&u| (a, u))).collect();
        evaluations += points.len();
        let values: Vec<f64> = points
            .par_iter()
            .map(|&(a, u)| ansatz_value(&cfg, n, a, beta_of(a, u), spec.theta_points))
            .collect::<Result<_>>()?;
        for (&(a, u), &v) in points.iter().zip(&values) {
            if v > best.2 {
                best = (a, u, v);
            }
        }
        let da = (a_hi - a_lo) / (spec.alpha_points.max(2) - 1) as f64;
        let du = (u_hi - u_lo) / (spec.u_points.max(2) - 1) as f64;
        a_lo = (best.0 - 2.0 * da).max(0.0);
        a_hi = (best.0 + 2.0 * da).min(spec.alpha_max);
        u_lo = (best.1 - 2.0 * du).max(0.0);
        u_hi = (best.1 + 2.0 * du).min(1.0);
    }
    if !best.2.is_finite() {
        return Err(Error::Monte("empty feasible grid".into()));
    }
    let (alpha, beta) = (best.0, beta_of(best.0, best.1));
    let shift = linear_part(n, alpha, beta) - best.2;

    let mut cap_checks = Vec::with_capacity(spec.mc_caps);
    let mut aux = HaarSampler::with_counter(n, seed, (TAG_AUX << 48) | 1)?;
    for c in 0..spec.mc_caps {
        let theta = aux.uniform(0.01, FRAC_PI_2);
        let chi = aux.sample_state();
        let s = cap_volume(n, theta)?;
        let base = s * (beta + alpha * theta.sin().powi(2) / nf);
        let y = alpha * s * theta.cos().powi(2);
        // E exp(y x) with x = |⟨ψ|χ⟩|², accumulated relative to e^{y}
        let sums = chunked_sums(n, seed, (TAG_GRID << 8) | c as u64, samples, 2, |smp, acc| {
            let x = overlap(&smp.sample_state(), &chi);
            let v = (y * (x - 1.0)).exp();
            acc[0] += v;
            acc[1] += v * v;
        })?;
        let est = Estimate::from_sums(0.0, sums[0], sums[1], samples);
        let mc_log = base + y + est.mean.ln();
        let log_se = est.std_error / est.mean;
        let analytic = -analytic::f_theta_with(&cfg, n, theta, alpha, beta)?;
        let agrees = (mc_log - analytic).abs() <= Z_BAND * log_se + 1e-12;
        let feasible = mc_log <= shift + Z_BAND * log_se + 1e-9;
        cap_checks.push(CapCheck {
            theta,
            mc_log_integral: mc_log,
            analytic_log_integral: analytic,
            log_std_error: log_se,
            passed: agrees && feasible,
        });
    }
    if let Some(bad) = cap_checks.iter().find(|c| !c.passed) {
        return Err(Error::Monte(format!(
            "sampled constraint at theta = {} gives {} against shift {shift} (closed form {})",
            bad.theta, bad.mc_log_integral, bad.analytic_log_integral
        )));
    }
    Ok(GridSearchReport {
        dimension: n,
        alpha,
        beta,
        shift,
        bound_nats: best.2,
        bound_bits: best.2 / LN_2,
        evaluations,
        cap_checks,
    })
}
