//! Numerical laboratory for skew-product solenoidal endomorphisms
//! `T(x, y) = (E x mod 1, C y + f(x))` on `𝕋^u × ℝ^d`.
//!
//! The crate is organised bottom-up:
//!
//! - [`model`]: the map itself, its derived constants and standing hypotheses;
//! - [`coding`]: Markov partitions for diagonal expanding maps, admissible
//!   words, inverse branches and the leaf maps `S(x, a)`;
//! - [`transversality`]: certified pairwise transversality and upper bounds
//!   on the non-transversal counts `τ(q)`;
//! - [`transfer`]: the transfer operator, its Ulam discretisation, SRB density
//!   estimators and spectral probes;
//! - [`norms`]: Fourier and difference-quotient Sobolev norms, anisotropic
//!   leaf-norm lower bounds and Lasota–Yorke ratio tracking;
//! - [`decay`]: correlation estimation along long orbits and exponential fits.

pub mod coding;
pub mod decay;
pub mod error;
pub mod linalg;
pub mod model;
pub mod norms;
pub mod orbit;
pub mod transfer;
pub mod transversality;

pub use error::{Error, Result};
pub use model::{ConditionReport, Contraction, ExpandingMap, SkewModel, TrigForcing};
