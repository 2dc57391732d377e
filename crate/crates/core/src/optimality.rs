//! Optimality verification for a (policy, multipliers) pair.
//!
//! A feasible policy is optimal exactly when some multipliers satisfy
//!
//! ```text
//! ρ(s⃗|a) = ρ(s⃗) exp(Σ_b λ(s_b, a, b))      (map equation)
//! Σ_a ρ(a) exp(Σ_b λ(s_b, a, b)) ≤ 1         (slack)
//! marginals of ρ(s⃗|a) equal P(s|a,b)
//! ρ(s⃗|a) ≥ 0
//! ```
//!
//! All residuals are absolute and live on the probability scale.

use serde::Serialize;

use crate::cbox::{CBox, InputPrior};
use crate::dual::{self, DualCertificate, DualResult};
use crate::error::{Error, Result};
use crate::primal::{PrimalResult, SimulationPolicy};
use crate::sequence::{SequenceSpace, DEFAULT_BUDGET};

/// Residuals of the optimality system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OptimalityReport {
    /// `max |ρ(s⃗|a) − ρ(s⃗) e^{Σλ}|` over states with positive prior.
    pub residual_map_eq: f64,
    /// `max max(0, slack − 1)`.
    pub residual_slack: f64,
    /// Largest marginal deviation from `P`.
    pub residual_marginal: f64,
    /// Most negative probability, clamped at 0.
    pub residual_nonneg: f64,
    /// `max |ρ(s⃗)(slack − 1)|`.
    pub residual_fixedpoint: f64,
    pub passed: bool,
    pub tolerance: f64,
}

impl OptimalityReport {
    fn finish(mut self) -> Self {
        self.passed = self.max_residual() <= self.tolerance;
        self
    }

    pub fn max_residual(&self) -> f64 {
        self.residual_map_eq
            .max(self.residual_slack)
            .max(self.residual_marginal)
            .max(self.residual_nonneg)
            .max(self.residual_fixedpoint)
    }

    /// Sensitivity estimate of `|primal − dual|` given these residuals:
    /// `S · M · (1 + Λ) · Σ residuals`, with `Λ` the largest finite `|λ|`.
    ///
    /// The factor is linear in the residuals by design. It is validated
    /// numerically rather than proven.
    pub fn gap_estimate(&self, cert: &DualCertificate) -> f64 {
        let (ns, _, nm) = cert.dims();
        let total = self.residual_map_eq
            + self.residual_slack
            + self.residual_marginal
            + self.residual_nonneg
            + self.residual_fixedpoint;
        (ns * nm) as f64 * (1.0 + cert.max_finite_abs()) * total
    }
}

fn check_dims(cert: &DualCertificate, cbox: &CBox, prior: &InputPrior) -> Result<()> {
    if cert.dims() != cbox.dims() || prior.len() != cbox.num_states() {
        return Err(Error::Dimension(format!(
            "certificate {:?}, box {:?}, prior of {} states",
            cert.dims(),
            cbox.dims(),
            prior.len()
        )));
    }
    Ok(())
}

/// Slack of every sequence.
fn slacks(cert: &DualCertificate, prior: &InputPrior, space: &SequenceSpace) -> Vec<f64> {
    (0..space.len())
        .map(|k| dual::log_constraint_slack(cert, prior, space, k).exp())
        .collect()
}

/// `e^{Σ_b λ(s_b, a, b)}`, zero when a sentinel is involved.
fn weight(cert: &DualCertificate, space: &SequenceSpace, k: usize, a: usize) -> f64 {
    cert.exponent(space, k, a).exp()
}

fn marginal_residual(
    cbox: &CBox,
    space: &SequenceSpace,
    cond: impl Fn(usize, usize) -> f64,
    skip_state: impl Fn(usize) -> bool,
) -> f64 {
    let (ns, na, nm) = cbox.dims();
    let mut worst = 0.0f64;
    let mut m = vec![0.0; ns];
    for a in 0..na {
        if skip_state(a) {
            continue;
        }
        for b in 0..nm {
            m.iter_mut().for_each(|v| *v = 0.0);
            for k in 0..space.len() {
                m[space.digit(k, b)] += cond(k, a);
            }
            for (s, v) in m.iter().enumerate() {
                worst = worst.max((v - cbox.get(s, a, b)).abs());
            }
        }
    }
    worst
}

/// Evaluates the four optimality conditions for `policy` and `cert`.
///
/// Dimension mismatches are errors; every other failure shows up as a
/// residual.
pub fn check_conditions(
    policy: &SimulationPolicy,
    cert: &DualCertificate,
    cbox: &CBox,
    prior: &InputPrior,
    tol: f64,
) -> Result<OptimalityReport> {
    check_dims(cert, cbox, prior)?;
    if policy.dims() != cbox.dims() {
        return Err(Error::Dimension("policy and box dims differ".into()));
    }
    let space = policy.space();
    let (_, na, _) = cbox.dims();
    let w = prior.weights();
    let slack = slacks(cert, prior, space);
    // the mixture under the prior being checked, which may differ from the
    // one stored with the policy
    let mix: Vec<f64> = (0..space.len())
        .map(|k| (0..na).map(|a| w[a] * policy.cond(k, a)).sum())
        .collect();

    let mut map_eq = 0.0f64;
    let mut nonneg = 0.0f64;
    for k in 0..space.len() {
        for a in 0..na {
            let c = policy.cond(k, a);
            nonneg = nonneg.max(-c);
            if w[a] > 0.0 {
                map_eq = map_eq.max((c - mix[k] * weight(cert, space, k, a)).abs());
            }
        }
    }
    let residual_slack = slack.iter().fold(0.0f64, |m, s| m.max(s - 1.0));
    let fixedpoint = mix
        .iter()
        .zip(&slack)
        .fold(0.0f64, |m, (q, s)| m.max((q * (s - 1.0)).abs()));
    let marginal = marginal_residual(cbox, space, |k, a| policy.cond(k, a), |_| false);
    Ok(OptimalityReport {
        residual_map_eq: map_eq,
        residual_slack,
        residual_marginal: marginal,
        residual_nonneg: nonneg,
        residual_fixedpoint: fixedpoint,
        passed: false,
        tolerance: tol,
    }
    .finish())
}

/// The same system written in the mixture alone, with the policy rebuilt as
/// `ρ(s⃗|a) = ρ(s⃗) e^{Σλ}`. The map residual is zero by construction.
pub fn check_conditions_reduced(
    mix: &[f64],
    cert: &DualCertificate,
    cbox: &CBox,
    prior: &InputPrior,
    tol: f64,
) -> Result<OptimalityReport> {
    check_dims(cert, cbox, prior)?;
    let (ns, na, nm) = cbox.dims();
    let space = SequenceSpace::new(ns, nm, na, DEFAULT_BUDGET)?;
    if mix.len() != space.len() {
        return Err(Error::Dimension(format!(
            "mixture has {} entries, expected {}",
            mix.len(),
            space.len()
        )));
    }
    let slack = slacks(cert, prior, &space);
    let nonneg = mix.iter().fold(0.0f64, |m, q| m.max(-q));
    let residual_slack = slack.iter().fold(0.0f64, |m, s| m.max(s - 1.0));
    let fixedpoint = mix
        .iter()
        .zip(&slack)
        .fold(0.0f64, |m, (q, s)| m.max((q * (s - 1.0)).abs()));
    let w = prior.weights();
    let marginal = marginal_residual(
        cbox,
        &space,
        |k, a| mix[k] * weight(cert, &space, k, a),
        |a| w[a] == 0.0,
    );
    Ok(OptimalityReport {
        residual_map_eq: 0.0,
        residual_slack,
        residual_marginal: marginal,
        residual_nonneg: nonneg,
        residual_fixedpoint: fixedpoint,
        passed: false,
        tolerance: tol,
    }
    .finish())
}

/// Primal value minus the certified dual bound.
///
/// The certified bound is used rather than the raw objective so the result
/// is a true upper estimate of the suboptimality even for infeasible duals.
pub fn duality_gap(primal: &PrimalResult, dual: &DualResult) -> Result<f64> {
    if primal.policy.dims() != dual.certificate.dims() {
        return Err(Error::Dimension(format!(
            "primal dims {:?} differ from dual dims {:?}",
            primal.policy.dims(),
            dual.certificate.dims()
        )));
    }
    Ok(primal.value_nats - dual.certified_bound_nats)
}

/// Sets `λ(s, a, b) = -∞` wherever `P(s|a,b) = 0`. Such entries carry no
/// objective weight, so the value is unchanged and no slack grows.
pub fn corollary1_normalize(cert: &DualCertificate, cbox: &CBox) -> Result<DualCertificate> {
    if cert.dims() != cbox.dims() {
        return Err(Error::Dimension("certificate and box dims differ".into()));
    }
    let mut out = cert.clone();
    let (ns, na, nm) = cbox.dims();
    for s in 0..ns {
        for a in 0..na {
            for b in 0..nm {
                if cbox.get(s, a, b) == 0.0 {
                    out.set(s, a, b, f64::NEG_INFINITY)?;
                }
            }
        }
    }
    Ok(out)
}
