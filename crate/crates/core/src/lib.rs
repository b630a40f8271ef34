//! Two-database symmetric private information retrieval over imperfect
//! one-time-pad key channels.
//!
//! The crate bundles four layers:
//!
//! * the protocols themselves — a cube-structured two-server scheme with
//!   conditional-disclosure masking ([`b2`]) and a linear XOR baseline
//!   ([`xor`]);
//! * a key-channel surrogate and transport model ([`qkd`]) plus an
//!   end-to-end simulator producing complete per-party transcripts
//!   ([`orchestrator`]);
//! * privacy analysis: exact view distributions, affine leakage
//!   characterization, and statistical distinguishers ([`analyzer`]);
//! * deployment arithmetic: communication costs, finite-key lengths and
//!   feasibility planning ([`planner`]).
//!
//! Probability-carrying code is generic over the scalar via [`analyzer::Weight`];
//! use [`ExactProb`] when a check must be exact and [`ApproxProb`] for
//! empirical estimates.

pub mod analyzer;
pub mod b2;
pub mod bits;
pub mod error;
pub mod gf2;
pub mod orchestrator;
pub mod planner;
pub mod qkd;
pub mod xor;

pub use bits::BitVec;
pub use error::{Error, Result};

/// Exact probability scalar (arbitrary-precision rational); distribution
/// comparisons made with this weight carry zero rounding error.
pub type ExactProb = num_rational::BigRational;

/// Floating-point probability scalar for sampled estimates.
pub type ApproxProb = f64;

/// A selector vector for the linear protocol: bit `i` set means entry `i+1`
/// is requested (honest selectors have exactly one bit set).
pub type SelectorVector = BitVec;
