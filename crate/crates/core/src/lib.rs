//! Communication cost of simulating classical and quantum prepare-and-measure
//! boxes: primal and dual solvers for finite boxes, optimality checks,
//! closed-form bounds for rank-one measurements on Haar-distributed states,
//! and Monte Carlo cross-checks.

// `!(x >= 0.0)` is how argument checks reject NaN too; index loops mirror the
// tensor notation.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analytic;
pub mod cbox;
pub mod dual;
pub mod error;
mod io;
pub mod montecarlo;
pub mod optimality;
pub mod primal;
pub mod sequence;
pub mod special;

pub use analytic::{Branch, TwoOutcomeSolution};
pub use cbox::{born_cbox, validate_cbox, CBox, InputPrior, Measurement, QuantumEnsemble};
pub use dual::{
    certify_lower_bound, constraint_slack, dual_objective, extract_certificate, solve_dual, DualCertificate,
    DualResult, DualValue,
};
pub use error::{Error, Result};
pub use montecarlo::{GridSearchReport, GridSpec, HaarSampler};
pub use optimality::{check_conditions, check_conditions_reduced, duality_gap, OptimalityReport};
pub use primal::{
    marginal, mutual_information, product_policy, solve_primal, PrimalOptions, PrimalResult, SimulationPolicy,
};
pub use sequence::SequenceSpace;
pub use special::SpecialFnConfig;
