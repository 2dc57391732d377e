//! The primal problem: the least mutual information between the input `a`
//! and a joint outcome table `s⃗` whose `b`-th marginal reproduces
//! `P(s|a,b)`.
//!
//! The solver alternates a Blahut–Arimoto style mixture update with a
//! per-state I-projection. For a fixed reference mixture `q`, the closest
//! feasible row (in relative entropy) has the exponential form
//! `ρ(s⃗|a) = q(s⃗) exp(Σ_b λ(s_b, a, b))`, and iterative proportional fitting
//! finds it while keeping the multipliers `λ` explicit. Those multipliers are
//! a dual point, so every outer iteration also yields a certified lower bound.

use std::path::Path;

use rayon::prelude::*;
use serde_json::{json, Value};

use crate::cbox::{CBox, InputPrior, DEFAULT_VALIDATION_TOL};
use crate::dual::{self, DualCertificate};
use crate::error::{Error, Result};
use crate::io;
use crate::sequence::{SequenceSpace, DEFAULT_BUDGET};

/// Probabilities below this are exact zeros.
pub const ZERO_FLOOR: f64 = 1e-300;

/// Describes the sequence code in policy files.
pub const SEQUENCE_ENCODING: &str = "k = sum_b s_b * S^b (measurement 0 is the least significant digit)";

/// A joint outcome table `ρ(s⃗|a)` with its prior and mixture `ρ(s⃗)`.
#[derive(Debug, Clone)]
pub struct SimulationPolicy {
    num_outcomes: usize,
    num_states: usize,
    num_measurements: usize,
    space: SequenceSpace,
    /// `ρ(s⃗|a)` at `k * A + a`.
    cond: Vec<f64>,
    prior: InputPrior,
    mix: Vec<f64>,
}

impl SimulationPolicy {
    /// Validates nonnegativity and per-state normalization within `tol`,
    /// then derives the mixture.
    pub fn new(
        num_outcomes: usize,
        num_measurements: usize,
        prior: InputPrior,
        cond: Vec<f64>,
        tol: f64,
    ) -> Result<Self> {
        let space = SequenceSpace::new(num_outcomes, num_measurements, prior.len(), usize::MAX)?;
        Self::with_space(space, prior, cond, tol)
    }

    fn with_space(space: SequenceSpace, prior: InputPrior, cond: Vec<f64>, tol: f64) -> Result<Self> {
        let na = prior.len();
        if cond.len() != space.len() * na {
            return Err(Error::Dimension(format!(
                "policy has {} entries, expected {}",
                cond.len(),
                space.len() * na
            )));
        }
        for (i, &v) in cond.iter().enumerate() {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::NegativeEntry {
                    index: format!("(k={}, a={})", i / na, i % na),
                    value: v,
                });
            }
        }
        for a in 0..na {
            let sum: f64 = (0..space.len()).map(|k| cond[k * na + a]).sum();
            if (sum - 1.0).abs() > tol {
                return Err(Error::Normalization {
                    index: format!("(a={a})"),
                    sum,
                    tol,
                });
            }
        }
        let mut p = Self {
            num_outcomes: space.num_outcomes(),
            num_states: na,
            num_measurements: space.num_measurements(),
            space,
            cond,
            prior,
            mix: Vec::new(),
        };
        p.mix = p.mixture();
        Ok(p)
    }

    fn mixture(&self) -> Vec<f64> {
        let w = self.prior.weights();
        self.cond
            .chunks_exact(self.num_states)
            .map(|row| row.iter().zip(w).map(|(c, w)| c * w).sum())
            .collect()
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.num_outcomes, self.num_states, self.num_measurements)
    }

    pub fn space(&self) -> &SequenceSpace {
        &self.space
    }

    #[inline]
    pub fn cond(&self, k: usize, a: usize) -> f64 {
        self.cond[k * self.num_states + a]
    }

    /// The whole table, `ρ(s⃗|a)` at `k * A + a`.
    pub fn conditional(&self) -> &[f64] {
        &self.cond
    }

    pub fn prior(&self) -> &InputPrior {
        &self.prior
    }

    /// `ρ(s⃗) = Σ_a ρ(a) ρ(s⃗|a)`.
    pub fn mix(&self) -> &[f64] {
        &self.mix
    }

    pub fn to_json(&self) -> Value {
        let cond = io::nest(&self.cond, &[self.space.len(), self.num_states], &io::plain_number);
        json!({
            "num_outcomes": self.num_outcomes,
            "num_states": self.num_states,
            "num_measurements": self.num_measurements,
            "sequence_encoding": SEQUENCE_ENCODING,
            "prior": self.prior.weights(),
            "conditional": cond,
        })
    }

    pub fn from_json(value: &Value) -> Result<Self> {
        let obj = io::object(value, "")?;
        let s = io::positive_usize(obj, "num_outcomes", "")?;
        let a = io::positive_usize(obj, "num_states", "")?;
        let m = io::positive_usize(obj, "num_measurements", "")?;
        let prior_raw = io::tensor(io::field(obj, "prior", "")?, "prior", &[a], &io::number)?;
        let prior = InputPrior::new(prior_raw, DEFAULT_VALIDATION_TOL)?;
        let space = SequenceSpace::new(s, m, a, usize::MAX)?;
        let cond = io::tensor(
            io::field(obj, "conditional", "")?,
            "conditional",
            &[space.len(), a],
            &io::number,
        )?;
        Self::with_space(space, prior, cond, DEFAULT_VALIDATION_TOL)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_json(path, &self.to_json())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&io::read_json(path)?)
    }
}

/// `Σ_{s⃗,a} ρ(a) ρ(s⃗|a) ln[ρ(s⃗|a)/ρ(s⃗)]` in nats.
pub fn mutual_information(policy: &SimulationPolicy) -> Result<f64> {
    let na = policy.num_states;
    let w = policy.prior.weights();
    let mut total = 0.0;
    for (k, row) in policy.cond.chunks_exact(na).enumerate() {
        let m = policy.mix[k];
        for (a, &c) in row.iter().enumerate() {
            let joint = c * w[a];
            if c <= ZERO_FLOOR || joint == 0.0 {
                continue;
            }
            if m <= 0.0 {
                return Err(Error::Internal(format!(
                    "mixture vanishes on sequence {k} carrying mass {joint:e}"
                )));
            }
            total += joint * (c / m).ln();
        }
    }
    Ok(total.max(0.0))
}

/// `Σ_{s⃗: s_b = s} ρ(s⃗|a)` as an `S × A` row-major table.
pub fn marginal(policy: &SimulationPolicy, b: usize) -> Result<Vec<f64>> {
    if b >= policy.num_measurements {
        return Err(Error::IndexOutOfRange {
            index: b,
            limit: policy.num_measurements,
        });
    }
    let na = policy.num_states;
    let mut out = vec![0.0; policy.num_outcomes * na];
    for (k, row) in policy.cond.chunks_exact(na).enumerate() {
        let s = policy.space.digit(k, b);
        for (a, &c) in row.iter().enumerate() {
            out[s * na + a] += c;
        }
    }
    Ok(out)
}

/// Largest `|marginal − P|` over all `(s, a, b)`.
pub fn max_constraint_violation(policy: &SimulationPolicy, cbox: &CBox) -> Result<f64> {
    if policy.dims() != cbox.dims() {
        return Err(Error::Dimension("policy and box dims differ".into()));
    }
    let (ns, na, nm) = cbox.dims();
    let mut worst = 0.0f64;
    for b in 0..nm {
        let m = marginal(policy, b)?;
        for s in 0..ns {
            for a in 0..na {
                worst = worst.max((m[s * na + a] - cbox.get(s, a, b)).abs());
            }
        }
    }
    Ok(worst)
}

/// `ρ(s⃗|a) = ∏_b P(s_b|a,b)`, feasible by construction.
pub fn product_policy(cbox: &CBox, prior: &InputPrior) -> Result<SimulationPolicy> {
    product_policy_with_budget(cbox, prior, DEFAULT_BUDGET)
}

fn product_policy_with_budget(cbox: &CBox, prior: &InputPrior, budget: usize) -> Result<SimulationPolicy> {
    let (ns, na, nm) = cbox.dims();
    if prior.len() != na {
        return Err(Error::Dimension("prior length differs from box".into()));
    }
    let space = SequenceSpace::new(ns, nm, na, budget)?;
    let mut cond = vec![0.0; space.len() * na];
    for k in 0..space.len() {
        for a in 0..na {
            cond[k * na + a] = space.digits(k).enumerate().map(|(b, s)| cbox.get(s, a, b)).product();
        }
    }
    SimulationPolicy::with_space(space, prior.clone(), cond, 1e-9)
}

/// Knobs for [`solve_primal_with`].
#[derive(Debug, Clone, Copy)]
pub struct PrimalOptions {
    pub tol: f64,
    /// Cap on outer iterations.
    pub max_iter: usize,
    /// Cap on proportional-fitting sweeps per state and outer iteration.
    pub max_sweeps: usize,
    pub budget: usize,
}

impl Default for PrimalOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 10_000,
            max_sweeps: 10_000,
            budget: DEFAULT_BUDGET,
        }
    }
}

/// Output of the primal solver.
#[derive(Debug, Clone)]
pub struct PrimalResult {
    pub policy: SimulationPolicy,
    pub value_nats: f64,
    pub iterations: usize,
    pub max_constraint_violation: f64,
    pub converged: bool,
    /// Multipliers of the last projection, a dual point.
    pub multipliers: DualCertificate,
    /// Best lower bound proven by the multipliers along the run.
    pub lower_bound_nats: f64,
    /// `value_nats − lower_bound_nats`.
    pub certified_gap: f64,
    /// Objective after each outer iteration.
    pub objective_trace: Vec<f64>,
}

impl PrimalResult {
    pub fn value_bits(&self) -> f64 {
        self.value_nats / std::f64::consts::LN_2
    }
}

pub fn solve_primal(cbox: &CBox, prior: &InputPrior, tol: f64, max_iter: usize) -> Result<PrimalResult> {
    solve_primal_with(
        cbox,
        prior,
        &PrimalOptions {
            tol,
            max_iter,
            ..PrimalOptions::default()
        },
    )
}

/// Minimizes the mutual information.
///
/// Stops once the marginal violation and the certified gap are both within
/// `tol`. A stalled objective alone is not accepted: it settles well before
/// the policy does. On exhaustion the best iterate seen is returned with
/// `converged = false`.
pub fn solve_primal_with(cbox: &CBox, prior: &InputPrior, opts: &PrimalOptions) -> Result<PrimalResult> {
    if !(opts.tol > 0.0) {
        return Err(Error::domain("solve_primal", "tolerance must be positive"));
    }
    let (ns, na, nm) = cbox.dims();
    if prior.len() != na {
        return Err(Error::Dimension("prior length differs from box".into()));
    }
    let space = SequenceSpace::new(ns, nm, na, opts.budget)?;
    let kk = space.len();
    let w = prior.weights();
    let inner_tol = (opts.tol * 1e-3).max(1e-15);

    // the product start: q uniform and λ = ln P + ln S
    let mut q = vec![1.0 / kk as f64; kk];
    let mut lambda: Vec<f64> = cbox
        .probabilities()
        .iter()
        .map(|&p| {
            if p > 0.0 {
                p.ln() + (ns as f64).ln()
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();

    let mut trace = Vec::new();
    let mut best: Option<(f64, Vec<f64>, Vec<f64>)> = None;
    let mut best_lower = f64::NEG_INFINITY;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iter {
        iterations += 1;
        // I-projection of q onto each state's constraint set
        let rows: Vec<(Vec<f64>, Vec<f64>, f64)> = (0..na)
            .into_par_iter()
            .map(|a| project_row(cbox, &space, &q, &lambda, a, inner_tol, opts.max_sweeps))
            .collect();
        let mut violation = 0.0f64;
        let mut cond = vec![0.0; kk * na];
        for (a, (row, lam_a, viol)) in rows.into_iter().enumerate() {
            violation = violation.max(viol);
            for (k, v) in row.into_iter().enumerate() {
                cond[k * na + a] = v;
            }
            for s in 0..ns {
                for b in 0..nm {
                    lambda[cbox.index(s, a, b)] = lam_a[s * nm + b];
                }
            }
        }

        let cert = DualCertificate::new(ns, na, nm, lambda.clone())?;
        let dual_value = dual::dual_objective(&cert, cbox, prior)?.as_f64();
        let worst_log = (0..kk)
            .map(|k| dual::log_constraint_slack(&cert, prior, &space, k))
            .fold(f64::NEG_INFINITY, f64::max);
        best_lower = best_lower.max(dual_value - worst_log.max(0.0)).max(0.0);

        let mut next_q: Vec<f64> = cond
            .chunks_exact(na)
            .map(|row| row.iter().zip(w).map(|(c, w)| c * w).sum())
            .collect();
        for v in &mut next_q {
            if *v < ZERO_FLOOR {
                *v = 0.0;
            }
        }
        let value = information(&cond, &next_q, w);
        trace.push(value);

        if best.as_ref().is_none_or(|b| value <= b.0) && violation <= opts.tol {
            best = Some((value, cond, lambda.clone()));
        }
        q = next_q;

        if violation <= opts.tol && value - best_lower <= opts.tol {
            converged = true;
            break;
        }
    }

    let (_, cond, lam) = match best {
        Some(b) => b,
        None => {
            // never feasible within tol: fall back to the product start
            let p = product_policy_with_budget(cbox, prior, opts.budget)?;
            let v = mutual_information(&p)?;
            let lam = cbox
                .probabilities()
                .iter()
                .map(|&p| if p > 0.0 { p.ln() } else { f64::NEG_INFINITY })
                .collect();
            converged = false;
            (v, p.cond, lam)
        }
    };
    let mut cond = cond;
    for a in 0..na {
        let sum: f64 = (0..kk).map(|k| cond[k * na + a]).sum();
        if sum > 0.0 {
            for k in 0..kk {
                cond[k * na + a] /= sum;
            }
        }
    }
    let policy = SimulationPolicy::with_space(space, prior.clone(), cond, 1e-6)?;
    let max_violation = max_constraint_violation(&policy, cbox)?;
    let value_nats = mutual_information(&policy)?;
    Ok(PrimalResult {
        policy,
        value_nats,
        iterations,
        max_constraint_violation: max_violation,
        converged: converged && max_violation <= opts.tol,
        multipliers: DualCertificate::new(ns, na, nm, lam)?,
        lower_bound_nats: best_lower,
        certified_gap: (value_nats - best_lower).max(0.0),
        objective_trace: trace,
    })
}

fn information(cond: &[f64], mix: &[f64], w: &[f64]) -> f64 {
    let na = w.len();
    let mut total = 0.0;
    for (k, row) in cond.chunks_exact(na).enumerate() {
        for (a, &c) in row.iter().enumerate() {
            if c > ZERO_FLOOR && w[a] > 0.0 && mix[k] > 0.0 {
                total += w[a] * c * (c / mix[k]).ln();
            }
        }
    }
    total.max(0.0)
}

/// Fits `ρ(·|a) = q · exp(Σ_b λ(s_b, a, b))` to the marginals of state `a`
/// by cyclic proportional fitting. Returns the row, the updated multipliers
/// of `a` at `s * M + b`, and the final marginal violation.
fn project_row(
    cbox: &CBox,
    space: &SequenceSpace,
    q: &[f64],
    lambda: &[f64],
    a: usize,
    tol: f64,
    max_sweeps: usize,
) -> (Vec<f64>, Vec<f64>, f64) {
    let (ns, _, nm) = cbox.dims();
    let mut lam: Vec<f64> = (0..ns)
        .flat_map(|s| (0..nm).map(move |b| (s, b)))
        .map(|(s, b)| lambda[cbox.index(s, a, b)])
        .collect();
    let mut row: Vec<f64> = (0..space.len())
        .map(|k| {
            if q[k] == 0.0 {
                return 0.0;
            }
            let e: f64 = space.digits(k).enumerate().map(|(b, s)| lam[s * nm + b]).sum();
            let v = q[k] * e.exp();
            if v < ZERO_FLOOR {
                0.0
            } else {
                v
            }
        })
        .collect();
    let mut marg = vec![0.0; ns];
    let mut violation = f64::INFINITY;
    for _ in 0..max_sweeps {
        for b in 0..nm {
            marg.iter_mut().for_each(|m| *m = 0.0);
            for (k, &v) in row.iter().enumerate() {
                marg[space.digit(k, b)] += v;
            }
            let mut ratio = vec![1.0; ns];
            for s in 0..ns {
                let p = cbox.get(s, a, b);
                if p > 0.0 && marg[s] > 0.0 {
                    ratio[s] = p / marg[s];
                    lam[s * nm + b] += ratio[s].ln();
                }
            }
            for (k, v) in row.iter_mut().enumerate() {
                *v *= ratio[space.digit(k, b)];
            }
        }
        violation = row_violation(cbox, space, &row, a, &mut marg);
        if violation <= tol {
            break;
        }
    }
    (row, lam, violation)
}

fn row_violation(cbox: &CBox, space: &SequenceSpace, row: &[f64], a: usize, marg: &mut [f64]) -> f64 {
    let (ns, _, nm) = cbox.dims();
    let mut worst = 0.0f64;
    for b in 0..nm {
        marg.iter_mut().for_each(|m| *m = 0.0);
        for (k, &v) in row.iter().enumerate() {
            marg[space.digit(k, b)] += v;
        }
        for (s, &m) in marg.iter().enumerate().take(ns) {
            worst = worst.max((m - cbox.get(s, a, b)).abs());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::LN_2;

    fn qubit_box() -> CBox {
        // real qubit states at angles 0 and π/3, projective tests at π/8 and 5π/8
        let states = [0.0, std::f64::consts::FRAC_PI_3];
        let tests = [std::f64::consts::PI / 8.0, 5.0 * std::f64::consts::PI / 8.0];
        CBox::from_fn(2, 2, 2, |s, a, b| {
            let c = (states[a] - tests[b]).cos().powi(2);
            if s == 0 {
                c
            } else {
                1.0 - c
            }
        })
        .unwrap()
    }

    #[test]
    fn information_of_simple_policies() {
        let prior = InputPrior::uniform(2);
        let same = SimulationPolicy::new(2, 1, prior.clone(), vec![0.3, 0.3, 0.7, 0.7], 1e-12).unwrap();
        assert_eq!(mutual_information(&same).unwrap(), 0.0);
        let id = SimulationPolicy::new(2, 1, prior, vec![1.0, 0.0, 0.0, 1.0], 1e-12).unwrap();
        assert_abs_diff_eq!(mutual_information(&id).unwrap(), LN_2, epsilon = 1e-15);
    }

    #[test]
    fn information_matches_direct_sum() {
        let prior = InputPrior::new(vec![0.35, 0.65], 1e-12).unwrap();
        // two sequences (S=2, M=1), rows (0.2, 0.8) and (0.9, 0.1)
        let p = SimulationPolicy::new(2, 1, prior, vec![0.2, 0.9, 0.8, 0.1], 1e-12).unwrap();
        let m0: f64 = 0.35 * 0.2 + 0.65 * 0.9;
        let m1 = 1.0 - m0;
        let direct = 0.35 * (0.2 * (0.2 / m0).ln() + 0.8 * (0.8 / m1).ln())
            + 0.65 * (0.9 * (0.9 / m0).ln() + 0.1 * (0.1 / m1).ln());
        assert_abs_diff_eq!(mutual_information(&p).unwrap(), direct, epsilon = 1e-15);
    }

    #[test]
    fn product_policy_reproduces_box() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = CBox::random(&mut rng, 3, 2, 3).unwrap();
        let p = product_policy(&b, &InputPrior::uniform(2)).unwrap();
        assert!(max_constraint_violation(&p, &b).unwrap() <= 1e-12);
        let id = CBox::identity(2, 2).unwrap();
        let p = product_policy(&id, &InputPrior::uniform(2)).unwrap();
        // only (0,0) for a=0 and (1,1) for a=1
        assert_eq!(p.conditional(), &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn marginal_against_masked_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let prior = InputPrior::uniform(2);
        let mut cond: Vec<f64> = (0..8 * 2).map(|_| rng.random::<f64>()).collect();
        for a in 0..2 {
            let s: f64 = (0..8).map(|k| cond[k * 2 + a]).sum();
            (0..8).for_each(|k| cond[k * 2 + a] /= s);
        }
        let p = SimulationPolicy::new(2, 3, prior, cond.clone(), 1e-12).unwrap();
        for b in 0..3 {
            let m = marginal(&p, b).unwrap();
            for s in 0..2 {
                for a in 0..2 {
                    let direct: f64 = (0..8).filter(|k| (k >> b) & 1 == s).map(|k| cond[k * 2 + a]).sum();
                    assert_abs_diff_eq!(m[s * 2 + a], direct, epsilon = 1e-15);
                }
            }
        }
        assert!(matches!(marginal(&p, 3), Err(Error::IndexOutOfRange { .. })));
        let u = SimulationPolicy::new(2, 3, InputPrior::uniform(1), vec![0.125; 8], 1e-12).unwrap();
        assert!(marginal(&u, 1).unwrap().iter().all(|&v| (v - 0.5).abs() < 1e-15));
    }

    #[test]
    fn solve_trivial_anchors() {
        let c = CBox::constant(&[vec![0.3, 0.7], vec![0.6, 0.4], vec![0.5, 0.5]]).unwrap();
        let r = solve_primal(&c, &InputPrior::uniform(1), 1e-10, 100).unwrap();
        assert!(r.converged);
        assert!(r.value_nats.abs() < 1e-12);
        let id = CBox::identity(2, 1).unwrap();
        let r = solve_primal(&id, &InputPrior::uniform(2), 1e-10, 100).unwrap();
        assert!(r.converged);
        assert_abs_diff_eq!(r.value_nats, LN_2, epsilon = 1e-12);
    }

    #[test]
    fn solve_qubit_box_against_grid() {
        let b = qubit_box();
        let prior = InputPrior::uniform(2);
        let r = solve_primal(&b, &prior, 1e-10, 100_000).unwrap();
        assert!(r.converged);
        assert!(r.max_constraint_violation <= 1e-10);
        // each row has one free parameter t = ρ(00|a); grid then zoom
        let bounds = |a: usize| {
            let (p0, p1) = (b.get(0, a, 0), b.get(0, a, 1));
            ((p0 + p1 - 1.0).max(0.0), p0.min(p1), p0, p1)
        };
        let info = |t: [f64; 2]| {
            let mut cond = vec![0.0; 8];
            for a in 0..2 {
                let (_, _, p0, p1) = bounds(a);
                let row = [t[a], p1 - t[a], p0 - t[a], 1.0 - p0 - p1 + t[a]];
                for k in 0..4 {
                    cond[k * 2 + a] = row[k].max(0.0);
                }
            }
            let pol = SimulationPolicy::new(2, 2, prior.clone(), cond, 1e-9).unwrap();
            mutual_information(&pol).unwrap()
        };
        let mut lo = [bounds(0).0, bounds(1).0];
        let mut hi = [bounds(0).1, bounds(1).1];
        let mut best = (f64::INFINITY, [0.0; 2]);
        for _ in 0..12 {
            let n = 40;
            for i in 0..=n {
                for j in 0..=n {
                    let t = [
                        lo[0] + (hi[0] - lo[0]) * i as f64 / n as f64,
                        lo[1] + (hi[1] - lo[1]) * j as f64 / n as f64,
                    ];
                    let v = info(t);
                    if v < best.0 {
                        best = (v, t);
                    }
                }
            }
            for a in 0..2 {
                let half = (hi[a] - lo[a]) / 8.0;
                let (l, h) = (bounds(a).0, bounds(a).1);
                lo[a] = (best.1[a] - half).max(l);
                hi[a] = (best.1[a] + half).min(h);
            }
        }
        assert_abs_diff_eq!(r.value_nats, best.0, epsilon = 1e-8);
    }

    #[test]
    fn objective_is_monotone_and_bounded_below() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..5 {
            let b = CBox::random(&mut rng, 2, 3, 3).unwrap();
            let r = solve_primal(&b, &InputPrior::uniform(3), 1e-9, 20_000).unwrap();
            for w in r.objective_trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-12, "{} -> {}", w[0], w[1]);
            }
            assert!(r.lower_bound_nats <= r.value_nats + 1e-12);
            assert!(r.value_nats >= 0.0);
        }
    }

    #[test]
    fn budget_guard() {
        let b = CBox::identity(2, 30).unwrap();
        assert!(matches!(
            solve_primal(&b, &InputPrior::uniform(2), 1e-6, 10),
            Err(Error::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn early_stop_is_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let b = CBox::random(&mut rng, 2, 3, 3).unwrap();
        let r = solve_primal(&b, &InputPrior::uniform(3), 1e-14, 2).unwrap();
        assert!(!r.converged);
        assert_eq!(r.iterations, 2);
    }

    #[test]
    fn policy_file_round_trip() {
        let b = qubit_box();
        let r = solve_primal(&b, &InputPrior::uniform(2), 1e-9, 10_000).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("policy.json");
        r.policy.save(&path).unwrap();
        let back = SimulationPolicy::load(&path).unwrap();
        assert_eq!(back.conditional(), r.policy.conditional());
        assert_eq!(back.mix(), r.policy.mix());
    }
}
