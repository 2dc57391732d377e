//! Finite C-boxes `P(s | a, b)`, input priors and quantum ensembles.
//!
//! The probability tensor is stored row-major in `(s, a, b)` order, which is
//! also the nesting order of the file format: outcome outermost, measurement
//! innermost.

use std::path::Path;

use num_complex::Complex64;
use rand::Rng;
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::io;

/// Default tolerance for probability validation.
pub const DEFAULT_VALIDATION_TOL: f64 = 1e-9;

const STATE_NORM_TOL: f64 = 1e-12;
const BASIS_TOL: f64 = 1e-10;

/// A conditional probability table `P(s | a, b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CBox {
    num_outcomes: usize,
    num_states: usize,
    num_measurements: usize,
    prob: Vec<f64>,
}

impl CBox {
    /// Builds a box from a row-major `(s, a, b)` buffer. Only the shape is
    /// checked here; see [`validate_cbox`] for the probability invariants.
    pub fn new(num_outcomes: usize, num_states: usize, num_measurements: usize, prob: Vec<f64>) -> Result<Self> {
        if num_outcomes == 0 || num_states == 0 || num_measurements == 0 {
            return Err(Error::Dimension("all dimensions must be positive".into()));
        }
        let expected = num_outcomes * num_states * num_measurements;
        if prob.len() != expected {
            return Err(Error::Dimension(format!(
                "probability buffer has {} entries, expected {expected}",
                prob.len()
            )));
        }
        Ok(Self {
            num_outcomes,
            num_states,
            num_measurements,
            prob,
        })
    }

    /// Builds a box from a closure `(s, a, b) -> P`.
    pub fn from_fn(
        num_outcomes: usize,
        num_states: usize,
        num_measurements: usize,
        f: impl Fn(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut prob = Vec::with_capacity(num_outcomes * num_states * num_measurements);
        for s in 0..num_outcomes {
            for a in 0..num_states {
                for b in 0..num_measurements {
                    prob.push(f(s, a, b));
                }
            }
        }
        Self::new(num_outcomes, num_states, num_measurements, prob)
    }

    /// `P(s | a, b) = δ_{s,a}` with `n` outcomes and states.
    pub fn identity(n: usize, num_measurements: usize) -> Result<Self> {
        Self::from_fn(n, n, num_measurements, |s, a, _| if s == a { 1.0 } else { 0.0 })
    }

    /// A box whose outcome does not depend on the state: `P(s | a, b) = q_b(s)`.
    pub fn constant(per_measurement: &[Vec<f64>]) -> Result<Self> {
        let m = per_measurement.len();
        let s = per_measurement.first().map_or(0, Vec::len);
        if per_measurement.iter().any(|q| q.len() != s) {
            return Err(Error::Dimension("ragged outcome distributions".into()));
        }
        Self::from_fn(s, 1, m, |s, _, b| per_measurement[b][s]).and_then(|one| one.broadcast_states(1))
    }

    fn broadcast_states(self, num_states: usize) -> Result<Self> {
        Self::from_fn(self.num_outcomes, num_states, self.num_measurements, |s, _, b| {
            self.get(s, 0, b)
        })
    }

    /// A random box: each `P(· | a, b)` is drawn uniformly from the simplex.
    pub fn random<R: Rng + ?Sized>(
        rng: &mut R,
        num_outcomes: usize,
        num_states: usize,
        num_measurements: usize,
    ) -> Result<Self> {
        let mut prob = vec![0.0; num_outcomes * num_states * num_measurements];
        for a in 0..num_states {
            for b in 0..num_measurements {
                let draws: Vec<f64> = (0..num_outcomes).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
                let total: f64 = draws.iter().sum();
                for (s, d) in draws.iter().enumerate() {
                    prob[(s * num_states + a) * num_measurements + b] = d / total;
                }
            }
        }
        Self::new(num_outcomes, num_states, num_measurements, prob)
    }

    pub fn num_outcomes(&self) -> usize {
        self.num_outcomes
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_measurements(&self) -> usize {
        self.num_measurements
    }

    /// `(S, A, M)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.num_outcomes, self.num_states, self.num_measurements)
    }

    #[inline]
    pub fn index(&self, s: usize, a: usize, b: usize) -> usize {
        (s * self.num_states + a) * self.num_measurements + b
    }

    #[inline]
    pub fn get(&self, s: usize, a: usize, b: usize) -> f64 {
        self.prob[self.index(s, a, b)]
    }

    /// Row-major `(s, a, b)` buffer.
    pub fn probabilities(&self) -> &[f64] {
        &self.prob
    }

    /// Writes the box as JSON.
    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_json(path, &self.to_json(None))
    }

    pub fn to_json(&self, metadata: Option<Value>) -> Value {
        let mut obj = Map::new();
        obj.insert("num_outcomes".into(), json!(self.num_outcomes));
        obj.insert("num_states".into(), json!(self.num_states));
        obj.insert("num_measurements".into(), json!(self.num_measurements));
        obj.insert(
            "probabilities".into(),
            io::nest(
                &self.prob,
                &[self.num_outcomes, self.num_states, self.num_measurements],
                &io::plain_number,
            ),
        );
        if let Some(meta) = metadata {
            obj.insert("metadata".into(), meta);
        }
        Value::Object(obj)
    }

    /// Reads a box written by [`CBox::save`] (or by hand, following
    /// `docs/formats.md`). The probabilities are not validated here.
    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&io::read_json(path)?)
    }

    pub fn from_json(value: &Value) -> Result<Self> {
        let obj = io::object(value, "")?;
        let s = io::positive_usize(obj, "num_outcomes", "")?;
        let a = io::positive_usize(obj, "num_states", "")?;
        let m = io::positive_usize(obj, "num_measurements", "")?;
        let raw = io::field(obj, "probabilities", "")?;
        let prob = io::tensor(raw, "probabilities", &[s, a, m], &io::number)?;
        Self::new(s, a, m, prob)
    }
}

/// Checks non-negativity and per-`(a, b)` normalization within `tol`.
///
/// On failure the error names the worst offending index.
pub fn validate_cbox(cbox: &CBox, tol: f64) -> Result<()> {
    let (ns, na, nm) = cbox.dims();
    let mut worst_neg: Option<(usize, usize, usize, f64)> = None;
    for s in 0..ns {
        for a in 0..na {
            for b in 0..nm {
                let p = cbox.get(s, a, b);
                if p.is_nan() || p < 0.0 {
                    let better = worst_neg.is_none_or(|(.., v)| p.is_nan() || p < v);
                    if better {
                        worst_neg = Some((s, a, b, p));
                    }
                }
            }
        }
    }
    if let Some((s, a, b, value)) = worst_neg {
        return Err(Error::NegativeEntry {
            index: format!("(s={s}, a={a}, b={b})"),
            value,
        });
    }
    let mut worst: Option<(usize, usize, f64)> = None;
    for a in 0..na {
        for b in 0..nm {
            let sum: f64 = (0..ns).map(|s| cbox.get(s, a, b)).sum();
            let off = (sum - 1.0).abs();
            if off > tol && worst.is_none_or(|(_, _, w)| off > (w - 1.0).abs()) {
                worst = Some((a, b, sum));
            }
        }
    }
    if let Some((a, b, sum)) = worst {
        return Err(Error::Normalization {
            index: format!("(a={a}, b={b})"),
            sum,
            tol,
        });
    }
    Ok(())
}

/// The sender's input distribution `ρ(a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct InputPrior {
    weights: Vec<f64>,
}

impl InputPrior {
    pub fn new(weights: Vec<f64>, tol: f64) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Dimension("prior must have at least one state".into()));
        }
        if let Some((i, &w)) = weights.iter().enumerate().find(|(_, w)| !(**w >= 0.0)) {
            return Err(Error::NegativeEntry {
                index: format!("prior[{i}]"),
                value: w,
            });
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > tol {
            return Err(Error::Normalization {
                index: "prior".into(),
                sum,
                tol,
            });
        }
        Ok(Self { weights })
    }

    pub fn uniform(num_states: usize) -> Self {
        Self {
            weights: vec![1.0 / num_states as f64; num_states],
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Accepts either a bare array or an object with a `prior` field.
    pub fn from_json(value: &Value) -> Result<Self> {
        let raw = match value {
            Value::Object(obj) => io::field(obj, "prior", "")?,
            other => other,
        };
        let items = io::array(raw, "prior")?;
        let weights = items
            .iter()
            .enumerate()
            .map(|(i, v)| io::number(v, &format!("prior[{i}]")))
            .collect::<Result<Vec<_>>>()?;
        Self::new(weights, DEFAULT_VALIDATION_TOL)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&io::read_json(path)?)
    }
}

/// A measurement on an `N`-dimensional system.
#[derive(Debug, Clone, PartialEq)]
pub enum Measurement {
    /// Projective measurement in an orthonormal basis; one outcome per vector.
    Basis(Vec<Vec<Complex64>>),
    /// `{|φ⟩⟨φ|, 1 − |φ⟩⟨φ|}`; outcome 0 is the rank-1 event.
    TwoOutcome(Vec<Complex64>),
}

impl Measurement {
    pub fn num_outcomes(&self) -> usize {
        match self {
            Measurement::Basis(v) => v.len(),
            Measurement::TwoOutcome(_) => 2,
        }
    }
}

/// States `|ψ_a⟩` and measurements on a common Hilbert space.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumEnsemble {
    dimension: usize,
    states: Vec<Vec<Complex64>>,
    measurements: Vec<Measurement>,
}

fn inner(u: &[Complex64], v: &[Complex64]) -> Complex64 {
    u.iter().zip(v).map(|(x, y)| x.conj() * y).sum()
}

fn norm_sqr(v: &[Complex64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum()
}

impl QuantumEnsemble {
    pub fn new(dimension: usize, states: Vec<Vec<Complex64>>, measurements: Vec<Measurement>) -> Result<Self> {
        let ens = Self {
            dimension,
            states,
            measurements,
        };
        ens.validate()?;
        Ok(ens)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn states(&self) -> &[Vec<Complex64>] {
        &self.states
    }

    pub fn measurements(&self) -> &[Measurement] {
        &self.measurements
    }

    fn validate(&self) -> Result<()> {
        let n = self.dimension;
        if n == 0 || self.states.is_empty() || self.measurements.is_empty() {
            return Err(Error::Ensemble(
                "need a positive dimension, at least one state and one measurement".into(),
            ));
        }
        let check_vec = |v: &[Complex64], what: String| -> Result<()> {
            if v.len() != n {
                return Err(Error::Ensemble(format!("{what} has length {}, expected {n}", v.len())));
            }
            let ns = norm_sqr(v);
            if (ns.sqrt() - 1.0).abs() > STATE_NORM_TOL {
                return Err(Error::Ensemble(format!("{what} has norm {}", ns.sqrt())));
            }
            Ok(())
        };
        for (a, psi) in self.states.iter().enumerate() {
            check_vec(psi, format!("state {a}"))?;
        }
        for (b, m) in self.measurements.iter().enumerate() {
            match m {
                Measurement::TwoOutcome(phi) => check_vec(phi, format!("measurement {b}"))?,
                Measurement::Basis(vs) => {
                    if vs.len() != n {
                        return Err(Error::Ensemble(format!(
                            "basis {b} has {} vectors, expected {n}",
                            vs.len()
                        )));
                    }
                    for (i, v) in vs.iter().enumerate() {
                        if v.len() != n {
                            return Err(Error::Ensemble(format!("basis {b} vector {i} has length {}", v.len())));
                        }
                        for (j, w) in vs.iter().enumerate().take(i + 1) {
                            let target = if i == j { 1.0 } else { 0.0 };
                            let g = inner(w, v);
                            if (g - Complex64::new(target, 0.0)).norm() > BASIS_TOL {
                                return Err(Error::Ensemble(format!("basis {b} is not orthonormal at ({i}, {j})")));
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&io::read_json(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_json(path, &self.to_json())
    }

    pub fn to_json(&self) -> Value {
        let vec_json = |v: &[Complex64]| -> Value {
            Value::Array(
                v.iter()
                    .flat_map(|z| [io::plain_number(z.re), io::plain_number(z.im)])
                    .collect(),
            )
        };
        let measurements: Vec<Value> = self
            .measurements
            .iter()
            .map(|m| match m {
                Measurement::Basis(vs) => json!({
                    "kind": "basis",
                    "vectors": vs.iter().map(|v| vec_json(v)).collect::<Vec<_>>(),
                }),
                Measurement::TwoOutcome(phi) => json!({
                    "kind": "two_outcome_vector",
                    "vector": vec_json(phi),
                }),
            })
            .collect();
        json!({
            "dimension": self.dimension,
            "states": self.states.iter().map(|v| vec_json(v)).collect::<Vec<_>>(),
            "measurements": measurements,
        })
    }

    pub fn from_json(value: &Value) -> Result<Self> {
        let obj = io::object(value, "")?;
        let n = io::positive_usize(obj, "dimension", "")?;
        let parse_vec = |v: &Value, path: &str| -> Result<Vec<Complex64>> {
            let flat = io::tensor(v, path, &[2 * n], &io::number)?;
            Ok(flat.chunks(2).map(|c| Complex64::new(c[0], c[1])).collect())
        };
        let states = io::array(io::field(obj, "states", "")?, "states")?
            .iter()
            .enumerate()
            .map(|(i, v)| parse_vec(v, &format!("states[{i}]")))
            .collect::<Result<Vec<_>>>()?;
        let mut measurements = Vec::new();
        for (i, m) in io::array(io::field(obj, "measurements", "")?, "measurements")?
            .iter()
            .enumerate()
        {
            let path = format!("measurements[{i}]");
            let mo = io::object(m, &path)?;
            let kind = io::field(mo, "kind", &path)?
                .as_str()
                .ok_or_else(|| Error::schema(io::join(&path, "kind"), "expected a string"))?;
            measurements.push(match kind {
                "basis" => {
                    let vp = io::join(&path, "vectors");
                    let vs = io::array(io::field(mo, "vectors", &path)?, &vp)?
                        .iter()
                        .enumerate()
                        .map(|(j, v)| parse_vec(v, &format!("{vp}[{j}]")))
                        .collect::<Result<Vec<_>>>()?;
                    Measurement::Basis(vs)
                }
                "two_outcome_vector" => {
                    Measurement::TwoOutcome(parse_vec(io::field(mo, "vector", &path)?, &io::join(&path, "vector"))?)
                }
                other => {
                    return Err(Error::schema(
                        io::join(&path, "kind"),
                        format!("unknown measurement kind `{other}`"),
                    ))
                }
            });
        }
        Self::new(n, states, measurements)
    }
}

/// Born-rule C-box of an ensemble sent through a noiseless channel.
///
/// Two-outcome measurements give `P(0) = |⟨ψ|φ⟩|²`, `P(1) = 1 − P(0)`; bases
/// give `|⟨ψ_a|φ_{b,s}⟩|²`. When measurement kinds are mixed the outcome
/// alphabet is the largest one and the extra outcomes get probability 0.
pub fn born_cbox(ensemble: &QuantumEnsemble) -> Result<CBox> {
    ensemble.validate()?;
    let ns = ensemble
        .measurements
        .iter()
        .map(Measurement::num_outcomes)
        .max()
        .unwrap_or(0);
    let na = ensemble.states.len();
    let nm = ensemble.measurements.len();
    let mut prob = vec![0.0; ns * na * nm];
    let idx = |s: usize, a: usize, b: usize| (s * na + a) * nm + b;
    for (a, psi) in ensemble.states.iter().enumerate() {
        for (b, m) in ensemble.measurements.iter().enumerate() {
            match m {
                Measurement::TwoOutcome(phi) => {
                    // renormalize away the O(1e-12) slack allowed on input norms
                    let p = (inner(phi, psi).norm_sqr() / (norm_sqr(phi) * norm_sqr(psi))).clamp(0.0, 1.0);
                    prob[idx(0, a, b)] = p;
                    prob[idx(1, a, b)] = 1.0 - p;
                }
                Measurement::Basis(vs) => {
                    let raw: Vec<f64> = vs.iter().map(|v| inner(v, psi).norm_sqr()).collect();
                    let total: f64 = raw.iter().sum();
                    for (s, r) in raw.iter().enumerate() {
                        prob[idx(s, a, b)] = r / total;
                    }
                }
            }
        }
    }
    CBox::new(ns, na, nm, prob)
}
