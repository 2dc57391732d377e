//! The dual problem: multipliers `λ(s, a, b)` whose feasibility
//!
//! ```text
//! Σ_a ρ(a) exp(Σ_b λ(s_b, a, b)) ≤ 1   for every sequence s⃗
//! ```
//!
//! makes the linear objective `Σ P(s|a,b) ρ(a) λ(s,a,b)` a lower bound on the
//! asymptotic communication cost. Entries may be `-∞` (stored as
//! `f64::NEG_INFINITY`), with `exp(-∞) = 0` and `(-∞)·0 = 0`.

use std::fmt;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::cbox::{CBox, InputPrior};
use crate::error::{Error, Result};
use crate::io;
use crate::primal::PrimalResult;
use crate::sequence::{SequenceSpace, DEFAULT_BUDGET};

/// Literal used for the `-∞` sentinel in certificate files.
pub const NEG_INF_TOKEN: &str = "-inf";

/// Default feasibility tolerance for certification.
pub const DEFAULT_FEASIBILITY_TOL: f64 = 1e-9;
/// Default optimality tolerance for the dual solver.
pub const DEFAULT_OPTIMALITY_TOL: f64 = 1e-6;

/// Multipliers `λ(s, a, b)` in `(s, a, b)` row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct DualCertificate {
    num_outcomes: usize,
    num_states: usize,
    num_measurements: usize,
    lambda: Vec<f64>,
}

impl DualCertificate {
    /// Rejects NaN and `+∞`; `-∞` is the sentinel.
    pub fn new(num_outcomes: usize, num_states: usize, num_measurements: usize, lambda: Vec<f64>) -> Result<Self> {
        if lambda.len() != num_outcomes * num_states * num_measurements {
            return Err(Error::Dimension(format!(
                "certificate has {} entries, expected {}",
                lambda.len(),
                num_outcomes * num_states * num_measurements
            )));
        }
        if let Some(i) = lambda.iter().position(|x| x.is_nan() || *x == f64::INFINITY) {
            return Err(Error::Domain {
                function: "DualCertificate",
                detail: format!("entry {i} is {}", lambda[i]),
            });
        }
        Ok(Self {
            num_outcomes,
            num_states,
            num_measurements,
            lambda,
        })
    }

    pub fn zeros(num_outcomes: usize, num_states: usize, num_measurements: usize) -> Self {
        Self::constant(num_outcomes, num_states, num_measurements, 0.0)
    }

    pub fn constant(num_outcomes: usize, num_states: usize, num_measurements: usize, c: f64) -> Self {
        Self {
            num_outcomes,
            num_states,
            num_measurements,
            lambda: vec![c; num_outcomes * num_states * num_measurements],
        }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.num_outcomes, self.num_states, self.num_measurements)
    }

    #[inline]
    pub fn index(&self, s: usize, a: usize, b: usize) -> usize {
        (s * self.num_states + a) * self.num_measurements + b
    }

    #[inline]
    pub fn get(&self, s: usize, a: usize, b: usize) -> f64 {
        self.lambda[self.index(s, a, b)]
    }

    pub fn set(&mut self, s: usize, a: usize, b: usize, value: f64) -> Result<()> {
        if value.is_nan() || value == f64::INFINITY {
            return Err(Error::domain("DualCertificate::set", format!("{value}")));
        }
        let i = self.index(s, a, b);
        self.lambda[i] = value;
        Ok(())
    }

    pub fn values(&self) -> &[f64] {
        &self.lambda
    }

    /// `Σ_b λ(s_b, a, b)` for sequence `k`; `-∞` if any entry is the sentinel.
    #[inline]
    pub fn exponent(&self, space: &SequenceSpace, k: usize, a: usize) -> f64 {
        space.digits(k).enumerate().map(|(b, s)| self.get(s, a, b)).sum()
    }

    /// Subtracts `eps` from every finite entry.
    pub fn shifted(&self, eps: f64) -> Self {
        let mut out = self.clone();
        for v in &mut out.lambda {
            if v.is_finite() {
                *v -= eps;
            }
        }
        out
    }

    /// Largest finite magnitude, 0 if none.
    pub fn max_finite_abs(&self) -> f64 {
        self.lambda
            .iter()
            .filter(|v| v.is_finite())
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    fn check_against(&self, cbox: &CBox, prior: &InputPrior) -> Result<()> {
        if self.dims() != cbox.dims() {
            return Err(Error::Dimension(format!(
                "certificate dims {:?} differ from box dims {:?}",
                self.dims(),
                cbox.dims()
            )));
        }
        if prior.len() != self.num_states {
            return Err(Error::Dimension(format!(
                "prior has {} states, certificate {}",
                prior.len(),
                self.num_states
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Value {
        let leaf = |x: f64| {
            if x == f64::NEG_INFINITY {
                Value::String(NEG_INF_TOKEN.into())
            } else {
                io::plain_number(x)
            }
        };
        json!({
            "num_outcomes": self.num_outcomes,
            "num_states": self.num_states,
            "num_measurements": self.num_measurements,
            "lambda": io::nest(&self.lambda, &[self.num_outcomes, self.num_states, self.num_measurements], &leaf),
        })
    }

    pub fn from_json(value: &Value) -> Result<Self> {
        let obj = io::object(value, "")?;
        let s = io::positive_usize(obj, "num_outcomes", "")?;
        let a = io::positive_usize(obj, "num_states", "")?;
        let m = io::positive_usize(obj, "num_measurements", "")?;
        let leaf = |v: &Value, path: &str| -> Result<f64> {
            match v {
                Value::String(t) if t == NEG_INF_TOKEN => Ok(f64::NEG_INFINITY),
                Value::String(t) => Err(Error::schema(path, format!("unexpected token `{t}`"))),
                other => io::number(other, path),
            }
        };
        let lambda = io::tensor(io::field(obj, "lambda", "")?, "lambda", &[s, a, m], &leaf)?;
        Self::new(s, a, m, lambda)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_json(path, &self.to_json())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&io::read_json(path)?)
    }
}

/// Value of the dual objective, which is `-∞` when some `P > 0` meets a
/// sentinel multiplier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DualValue {
    Finite(f64),
    NegInfinite,
}

impl DualValue {
    pub fn finite(self) -> Option<f64> {
        match self {
            DualValue::Finite(v) => Some(v),
            DualValue::NegInfinite => None,
        }
    }

    /// `-∞` mapped to `f64::NEG_INFINITY`.
    pub fn as_f64(self) -> f64 {
        self.finite().unwrap_or(f64::NEG_INFINITY)
    }
}

impl fmt::Display for DualValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DualValue::Finite(v) => write!(f, "{v}"),
            DualValue::NegInfinite => f.write_str(NEG_INF_TOKEN),
        }
    }
}

/// `Σ_{s,a,b} P(s|a,b) ρ(a) λ(s,a,b)`.
pub fn dual_objective(cert: &DualCertificate, cbox: &CBox, prior: &InputPrior) -> Result<DualValue> {
    cert.check_against(cbox, prior)?;
    let (ns, na, nm) = cbox.dims();
    let mut total = 0.0;
    for s in 0..ns {
        for a in 0..na {
            let w = prior.weights()[a];
            for b in 0..nm {
                let weight = cbox.get(s, a, b) * w;
                if weight == 0.0 {
                    continue;
                }
                let l = cert.get(s, a, b);
                if l == f64::NEG_INFINITY {
                    return Ok(DualValue::NegInfinite);
                }
                total += weight * l;
            }
        }
    }
    Ok(DualValue::Finite(total))
}

/// `ln Σ_a ρ(a) exp(Σ_b λ(s_b, a, b))` by log-sum-exp.
pub fn log_constraint_slack(cert: &DualCertificate, prior: &InputPrior, space: &SequenceSpace, k: usize) -> f64 {
    let mut max = f64::NEG_INFINITY;
    let mut terms = [0.0f64; 16];
    let mut heap = Vec::new();
    let na = prior.len();
    let buf: &mut [f64] = if na <= terms.len() {
        &mut terms[..na]
    } else {
        heap.resize(na, 0.0);
        &mut heap
    };
    for (a, slot) in buf.iter_mut().enumerate() {
        let w = prior.weights()[a];
        *slot = if w > 0.0 {
            w.ln() + cert.exponent(space, k, a)
        } else {
            f64::NEG_INFINITY
        };
        max = max.max(*slot);
    }
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + buf.iter().map(|u| (u - max).exp()).sum::<f64>().ln()
}

/// `Σ_a ρ(a) exp(Σ_b λ(s_b, a, b))` for the sequence `seq = (s₁, …, s_M)`.
pub fn constraint_slack(cert: &DualCertificate, prior: &InputPrior, seq: &[usize]) -> Result<f64> {
    let (ns, na, nm) = cert.dims();
    if prior.len() != na {
        return Err(Error::Dimension("prior length differs from certificate".into()));
    }
    if seq.len() != nm {
        return Err(Error::Dimension(format!(
            "sequence has {} entries, expected {nm}",
            seq.len()
        )));
    }
    if let Some(&s) = seq.iter().find(|&&s| s >= ns) {
        return Err(Error::IndexOutOfRange { index: s, limit: ns });
    }
    let mut max = f64::NEG_INFINITY;
    let u: Vec<f64> = (0..na)
        .map(|a| {
            let w = prior.weights()[a];
            let e: f64 = seq.iter().enumerate().map(|(b, &s)| cert.get(s, a, b)).sum();
            let v = if w > 0.0 { w.ln() + e } else { f64::NEG_INFINITY };
            max = max.max(v);
            v
        })
        .collect();
    if max == f64::NEG_INFINITY {
        return Ok(0.0);
    }
    Ok((max + u.iter().map(|x| (x - max).exp()).sum::<f64>().ln()).exp())
}

/// Outcome of certifying (or maximizing) a dual point.
#[derive(Debug, Clone)]
pub struct DualResult {
    pub certificate: DualCertificate,
    /// Dual objective of `certificate`, `-∞` when degenerate.
    pub value_nats: f64,
    /// `max_s⃗ slack ≤ 1 + tol`.
    pub feasible: bool,
    pub worst_sequence: usize,
    pub worst_slack: f64,
    /// Objective after the uniform shrink `λ → λ − ln(worst_slack)/M` that
    /// makes the point feasible; a proven lower bound in every case.
    pub certified_bound_nats: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl DualResult {
    pub fn certified_bound_bits(&self) -> f64 {
        self.certified_bound_nats / std::f64::consts::LN_2
    }
}

/// Enumerates all `S^M` constraints and reports the verdict.
pub fn certify_lower_bound(cert: &DualCertificate, cbox: &CBox, prior: &InputPrior, tol: f64) -> Result<DualResult> {
    certify_with_budget(cert, cbox, prior, tol, DEFAULT_BUDGET)
}

pub fn certify_with_budget(
    cert: &DualCertificate,
    cbox: &CBox,
    prior: &InputPrior,
    tol: f64,
    budget: usize,
) -> Result<DualResult> {
    cert.check_against(cbox, prior)?;
    let (ns, na, nm) = cbox.dims();
    let space = SequenceSpace::new(ns, nm, na, budget)?;
    let (worst_sequence, worst_log) = (0..space.len())
        .into_par_iter()
        .map(|k| (k, log_constraint_slack(cert, prior, &space, k)))
        .reduce(
            || (usize::MAX, f64::NEG_INFINITY),
            |x, y| {
                // ties go to the smaller index so the verdict is schedule independent
                if y.1 > x.1 || (y.1 == x.1 && y.0 < x.0) {
                    y
                } else {
                    x
                }
            },
        );
    let worst_sequence = if worst_sequence == usize::MAX {
        0
    } else {
        worst_sequence
    };
    let worst_slack = worst_log.exp();
    let value = dual_objective(cert, cbox, prior)?.as_f64();
    let certified = value - worst_log.max(0.0);
    Ok(DualResult {
        certificate: cert.clone(),
        value_nats: value,
        feasible: worst_slack <= 1.0 + tol,
        worst_sequence,
        worst_slack,
        certified_bound_nats: certified,
        iterations: 0,
        converged: true,
    })
}

const MAX_STEPS_PER_STAGE: usize = 200;

/// Options for [`solve_dual_with`].
#[derive(Debug, Clone, Copy)]
pub struct DualOptions {
    /// Target bound on the barrier gap `constraints / t`.
    pub tol: f64,
    pub feasibility_tol: f64,
    /// Cap on Newton steps summed over all barrier stages.
    pub max_iter: usize,
    pub budget: usize,
}

impl Default for DualOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_OPTIMALITY_TOL,
            feasibility_tol: DEFAULT_FEASIBILITY_TOL,
            max_iter: 10_000,
            budget: DEFAULT_BUDGET,
        }
    }
}

/// Maximizes the dual objective with the default options and the given
/// tolerance and Newton-step cap.
pub fn solve_dual(cbox: &CBox, prior: &InputPrior, tol: f64, max_iter: usize) -> Result<DualResult> {
    solve_dual_with(
        cbox,
        prior,
        &DualOptions {
            tol,
            max_iter,
            ..DualOptions::default()
        },
    )
}

/// Log-barrier interior-point maximization over the enumerated constraints.
///
/// Entries with `P(s|a,b) = 0` are pinned to `-∞`; they carry no objective
/// weight and only loosen constraints. Entries of states with zero prior
/// weight are pinned to 0. The rest are optimized by damped Newton steps on
/// `t·cᵀλ + Σ_k ln(−g_k(λ))`, `g_k` being the log-slack of sequence `k`.
pub fn solve_dual_with(cbox: &CBox, prior: &InputPrior, opts: &DualOptions) -> Result<DualResult> {
    let (ns, na, nm) = cbox.dims();
    if prior.len() != na {
        return Err(Error::Dimension("prior length differs from box".into()));
    }
    let space = SequenceSpace::new(ns, nm, na, opts.budget)?;
    let weights = prior.weights();

    // variable layout
    let mut var_of = vec![usize::MAX; ns * na * nm];
    let mut entry_of = Vec::new();
    let mut lambda = vec![0.0; ns * na * nm];
    for s in 0..ns {
        for a in 0..na {
            for b in 0..nm {
                let i = cbox.index(s, a, b);
                if cbox.get(s, a, b) <= 0.0 {
                    lambda[i] = f64::NEG_INFINITY;
                } else if weights[a] > 0.0 {
                    var_of[i] = entry_of.len();
                    entry_of.push(i);
                    lambda[i] = -1.0;
                }
            }
        }
    }
    let n = entry_of.len();
    let cost: Vec<f64> = entry_of
        .iter()
        .map(|&i| {
            let a = (i / nm) % na;
            cbox.probabilities()[i] * weights[a]
        })
        .collect();

    // constraints with at least one all-finite state term
    let live: Vec<usize> = (0..space.len())
        .filter(|&k| {
            (0..na).any(|a| {
                weights[a] > 0.0
                    && space
                        .digits(k)
                        .enumerate()
                        .all(|(b, s)| var_of[cbox.index(s, a, b)] != usize::MAX)
            })
        })
        .collect();

    let mut iterations = 0usize;
    let mut converged = n == 0 || live.is_empty();
    let m = live.len() as f64;
    let mut t = 1.0f64;

    let eval = |lam: &[f64], t: f64| -> Option<f64> {
        let mut f = 0.0;
        for &k in &live {
            let g = log_slack_raw(lam, &space, weights, cbox, k);
            if !(g < 0.0) {
                return None;
            }
            f -= (-g).ln();
        }
        let lin: f64 = entry_of.iter().zip(&cost).map(|(&i, c)| c * lam[i]).sum();
        Some(-t * lin + f)
    };

    'outer: while !converged {
        for _ in 0..MAX_STEPS_PER_STAGE {
            if iterations >= opts.max_iter {
                break 'outer;
            }
            iterations += 1;
            let (grad, hess) = barrier_derivatives(&lambda, &space, weights, cbox, &live, &var_of, n, &cost, t);
            let mut h = DMatrix::from_vec(n, n, hess);
            let ridge = 1e-12 * (1.0 + (0..n).map(|i| h[(i, i)]).fold(0.0, f64::max));
            for i in 0..n {
                h[(i, i)] += ridge;
            }
            let g = DVector::from_vec(grad);
            let step = match h.clone().cholesky() {
                Some(ch) => ch.solve(&(-&g)),
                None => h
                    .lu()
                    .solve(&(-&g))
                    .ok_or_else(|| Error::NoConvergence("dual Newton system".into()))?,
            };
            // the Newton decrement is scale free; below this the Armijo test
            // drowns in the rounding of the barrier value
            let decrement = -g.dot(&step);
            if decrement / 2.0 <= 1e-9 {
                break;
            }
            let f0 = eval(&lambda, t).ok_or_else(|| Error::Internal("iterate left the interior".into()))?;
            let mut alpha = 1.0;
            let mut accepted = false;
            for _ in 0..60 {
                let trial: Vec<f64> = lambda
                    .iter()
                    .enumerate()
                    .map(|(i, &v)| {
                        let j = var_of[i];
                        if j == usize::MAX {
                            v
                        } else {
                            v + alpha * step[j]
                        }
                    })
                    .collect();
                if let Some(f1) = eval(&trial, t) {
                    if f1 <= f0 - 0.25 * alpha * decrement {
                        lambda = trial;
                        accepted = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        if m / t <= opts.tol {
            converged = true;
        } else {
            t *= 8.0;
        }
    }

    let cert = DualCertificate::new(ns, na, nm, lambda)?;
    let mut res = certify_with_budget(&cert, cbox, prior, opts.feasibility_tol, opts.budget)?;
    if res.worst_slack > 1.0 {
        // restore strict feasibility lost to rounding
        let eps = res.worst_slack.ln() / nm as f64;
        let shrunk = cert.shifted(eps);
        res = certify_with_budget(&shrunk, cbox, prior, opts.feasibility_tol, opts.budget)?;
    }
    res.iterations = iterations;
    res.converged = converged;
    Ok(res)
}

fn log_slack_raw(lam: &[f64], space: &SequenceSpace, weights: &[f64], cbox: &CBox, k: usize) -> f64 {
    let mut max = f64::NEG_INFINITY;
    let mut us = [f64::NEG_INFINITY; 64];
    let mut heap = Vec::new();
    let na = weights.len();
    let buf: &mut [f64] = if na <= us.len() {
        &mut us[..na]
    } else {
        heap.resize(na, f64::NEG_INFINITY);
        &mut heap
    };
    for (a, slot) in buf.iter_mut().enumerate() {
        if weights[a] > 0.0 {
            let e: f64 = space.digits(k).enumerate().map(|(b, s)| lam[cbox.index(s, a, b)]).sum();
            *slot = weights[a].ln() + e;
            max = max.max(*slot);
        }
    }
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + buf.iter().map(|u| (u - max).exp()).sum::<f64>().ln()
}

#[allow(clippy::too_many_arguments)]
fn barrier_derivatives(
    lam: &[f64],
    space: &SequenceSpace,
    weights: &[f64],
    cbox: &CBox,
    live: &[usize],
    var_of: &[usize],
    n: usize,
    cost: &[f64],
    t: f64,
) -> (Vec<f64>, Vec<f64>) {
    let na = weights.len();
    let nm = space.num_measurements();
    let mut grad: Vec<f64> = cost.iter().map(|c| -t * c).collect();
    let mut hess = vec![0.0; n * n];
    let mut soft = vec![0.0; na];
    let mut vars: Vec<Vec<usize>> = vec![Vec::with_capacity(nm); na];
    for &k in live {
        let mut max = f64::NEG_INFINITY;
        for a in 0..na {
            vars[a].clear();
            soft[a] = f64::NEG_INFINITY;
            if weights[a] > 0.0 {
                let mut e = 0.0;
                let mut all_var = true;
                for (b, s) in space.digits(k).enumerate() {
                    let i = cbox.index(s, a, b);
                    e += lam[i];
                    if var_of[i] == usize::MAX {
                        all_var = false;
                    } else {
                        vars[a].push(var_of[i]);
                    }
                }
                if all_var {
                    soft[a] = weights[a].ln() + e;
                    max = max.max(soft[a]);
                }
            }
        }
        let total: f64 = soft.iter().map(|u| (u - max).exp()).sum();
        let g = max + total.ln();
        for u in soft.iter_mut() {
            *u = (*u - max).exp() / total;
        }
        let inv = 1.0 / (-g);
        // ∇(−ln(−g)) = ∇g / (−g);  ∇² = ∇g∇gᵀ / g² + ∇²g / (−g)
        for a in 0..na {
            if soft[a] == 0.0 {
                continue;
            }
            for &j in &vars[a] {
                grad[j] += soft[a] * inv;
            }
        }
        for a in 0..na {
            if soft[a] == 0.0 {
                continue;
            }
            for a2 in 0..na {
                if soft[a2] == 0.0 {
                    continue;
                }
                let outer = soft[a] * soft[a2] * inv * inv;
                let curv = if a == a2 {
                    soft[a] - soft[a] * soft[a]
                } else {
                    -soft[a] * soft[a2]
                } * inv;
                let v = outer + curv;
                for &j in &vars[a] {
                    for &j2 in &vars[a2] {
                        hess[j * n + j2] += v;
                    }
                }
            }
        }
    }
    (grad, hess)
}

/// Recovers multipliers from a solved primal through the stationarity
/// relation `ρ(s⃗|a) = ρ(s⃗) exp(Σ_b λ(s_b, a, b))`.
///
/// Per state, a mass-weighted least-squares fit of
/// `ln ρ(s⃗|a) − ln ρ(s⃗)` over the support is solved in the minimum-norm
/// sense, which also fixes the additive gauge. Entries with `P(s|a,b) = 0`
/// become the `-∞` sentinel. Fails when the mass-weighted RMS residual of
/// any state exceeds `tol`.
pub fn extract_certificate(primal: &PrimalResult, cbox: &CBox, tol: f64) -> Result<DualCertificate> {
    let policy = &primal.policy;
    let (ns, na, nm) = cbox.dims();
    if policy.dims() != cbox.dims() {
        return Err(Error::Dimension("policy and box dims differ".into()));
    }
    let space = policy.space();
    let mix = policy.mix();
    let mut lambda = vec![0.0; ns * na * nm];
    for (i, v) in lambda.iter_mut().enumerate() {
        if cbox.probabilities()[i] <= 0.0 {
            *v = f64::NEG_INFINITY;
        }
    }
    let mut worst = 0.0f64;
    for a in 0..na {
        if policy.prior().weights()[a] <= 0.0 {
            continue;
        }
        let mut col_of = vec![usize::MAX; ns * nm];
        let mut cols = Vec::new();
        for s in 0..ns {
            for b in 0..nm {
                if cbox.get(s, a, b) > 0.0 {
                    col_of[s * nm + b] = cols.len();
                    cols.push((s, b));
                }
            }
        }
        if cols.is_empty() {
            continue;
        }
        let mut rows: Vec<(Vec<usize>, f64, f64)> = Vec::new();
        for k in 0..space.len() {
            let c = policy.cond(k, a);
            if c <= 1e-300 || mix[k] <= 1e-300 {
                continue;
            }
            let idx: Option<Vec<usize>> = space
                .digits(k)
                .enumerate()
                .map(|(b, s)| Some(col_of[s * nm + b]).filter(|&j| j != usize::MAX))
                .collect();
            if let Some(idx) = idx {
                rows.push((idx, (c / mix[k]).ln(), c));
            }
        }
        if rows.is_empty() {
            continue;
        }
        let mut design = DMatrix::zeros(rows.len(), cols.len());
        let mut rhs = DVector::zeros(rows.len());
        for (r, (idx, target, mass)) in rows.iter().enumerate() {
            let w = mass.max(1e-12).sqrt();
            for &j in idx {
                design[(r, j)] += w;
            }
            rhs[r] = w * target;
        }
        let svd = design.svd(true, true);
        let cutoff = 1e-10 * svd.singular_values.max();
        let x = svd
            .solve(&rhs, cutoff)
            .map_err(|e| Error::Internal(format!("least squares: {e}")))?;
        let mut sq = 0.0;
        let mut mass_total = 0.0;
        for (idx, target, mass) in &rows {
            let fit: f64 = idx.iter().map(|&j| x[j]).sum();
            sq += mass * (fit - target).powi(2);
            mass_total += mass;
        }
        worst = worst.max((sq / mass_total).sqrt());
        for (j, &(s, b)) in cols.iter().enumerate() {
            lambda[cbox.index(s, a, b)] = x[j];
        }
    }
    if worst > tol {
        return Err(Error::ExtractionFailed { residual: worst, tol });
    }
    DualCertificate::new(ns, na, nm, lambda)
}
