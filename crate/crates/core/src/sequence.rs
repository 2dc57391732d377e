//! Outcome sequences `s⃗ = (s₁, …, s_M)` and their integer codes.
//!
//! A sequence is encoded base `S` with the `b`-th digit equal to `s_b`:
//! `k = Σ_b s_b · S^b`. Measurement 0 is the least significant digit.

use crate::error::{Error, Result};

/// Default cap on `S^M · A`, the size of a policy table.
pub const DEFAULT_BUDGET: usize = 1 << 24;

/// All `S^M` sequences with a precomputed digit table.
#[derive(Debug, Clone)]
pub struct SequenceSpace {
    num_outcomes: usize,
    num_measurements: usize,
    len: usize,
    digits: Vec<u16>,
}

impl SequenceSpace {
    /// Enumerates the space, refusing when `S^M · num_states` exceeds `budget`.
    pub fn new(num_outcomes: usize, num_measurements: usize, num_states: usize, budget: usize) -> Result<Self> {
        let required = (num_outcomes as u128)
            .checked_pow(num_measurements as u32)
            .and_then(|k| k.checked_mul(num_states as u128))
            .unwrap_or(u128::MAX);
        if required > budget as u128 || num_outcomes > u16::MAX as usize {
            return Err(Error::BudgetExceeded { required, budget });
        }
        let len = num_outcomes.pow(num_measurements as u32);
        let mut digits = Vec::with_capacity(len * num_measurements);
        for k in 0..len {
            let mut rest = k;
            for _ in 0..num_measurements {
                digits.push((rest % num_outcomes) as u16);
                rest /= num_outcomes;
            }
        }
        Ok(Self {
            num_outcomes,
            num_measurements,
            len,
            digits,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn num_outcomes(&self) -> usize {
        self.num_outcomes
    }

    pub fn num_measurements(&self) -> usize {
        self.num_measurements
    }

    /// `s_b` of sequence `k`.
    #[inline]
    pub fn digit(&self, k: usize, b: usize) -> usize {
        self.digits[k * self.num_measurements + b] as usize
    }

    /// The digits `(s₁, …, s_M)` of sequence `k`.
    #[inline]
    pub fn digits(&self, k: usize) -> impl Iterator<Item = usize> + '_ {
        self.digits[k * self.num_measurements..(k + 1) * self.num_measurements]
            .iter()
            .map(|&d| d as usize)
    }

    /// Inverse of [`SequenceSpace::digits`].
    pub fn encode(&self, seq: &[usize]) -> Result<usize> {
        if seq.len() != self.num_measurements {
            return Err(Error::Dimension(format!(
                "sequence has {} entries, expected {}",
                seq.len(),
                self.num_measurements
            )));
        }
        let mut k = 0;
        for &s in seq.iter().rev() {
            if s >= self.num_outcomes {
                return Err(Error::IndexOutOfRange {
                    index: s,
                    limit: self.num_outcomes,
                });
            }
            k = k * self.num_outcomes + s;
        }
        Ok(k)
    }
}
