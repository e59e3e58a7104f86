//! Block-diagonalization precoding for cooperative multi-cell MIMO downlinks.
//!
//! All base stations are stacked into one auxiliary broadcast channel with
//! `M = A·M_B` transmit antennas and `K` users of `N` antennas each. The
//! crate computes
//!
//! * the optimal BD precoders under per-base-station, per-antenna or sum
//!   power constraints ([`bd_optimal`]), from a Lagrange dual solved with the
//!   ellipsoid method ([`dual_solver`]) and a closed-form inner solution;
//! * the conventional orthogonal BD directions with optimized per-group power
//!   allocation ([`bd_suboptimal`]);
//! * the single-antenna-receiver specialization, zero-forcing beamforming
//!   ([`zfbf`]);
//! * verification metrics and an independent first-order reference solver
//!   ([`evaluate`]).
//!
//! Rates are natural-log (nats).

pub mod bd_optimal;
pub mod bd_suboptimal;
pub mod dual_solver;
pub mod error;
pub mod evaluate;
pub mod model;
pub mod numerics;
pub mod rng;
pub mod solution;
pub mod zfbf;

#[cfg(test)]
pub(crate) mod test_support;

pub use error::{Error, Result};
pub use model::{ConstraintMasks, ConstraintScheme, PrecodingMode, ProblemInstance, SystemConfig};
pub use numerics::{c64, ComplexMatrix};
pub use solution::{Method, Solution, SolveOptions};
