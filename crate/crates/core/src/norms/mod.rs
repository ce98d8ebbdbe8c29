//! Sobolev norms of densities on `𝕋^u × ℝ^d` and leaf-norm lower bounds.
//!
//! The Fourier norm periodises y after zero padding; a density with mass in
//! the outermost y cells is refused. The difference-quotient norm treats x
//! as periodic and y as zero-extended, with shifts restricted to a ball.

mod dagger;
mod dq;
mod fft;
mod field;
mod ly;
mod sobolev;

pub use dagger::{
    dagger_norm_lower, leaf_integral, multi_indices, DaggerBound, DaggerWitness, DictionarySpec, Leaf, LeafDictionary,
    TestFunction,
};
pub use dq::{sobolev_norm_dq, sobolev_norm_dq_values, DqOptions};
pub use field::{FnField, MollifiedDensity, SmoothField};
pub use ly::{ly_ratio_track, smoothed_indicator, LyOptions, LyRow, NormReport};
pub use sobolev::{boundary_fraction, l1_norm, l2_norm, sobolev_norm, SobolevOptions, SpectralGrid};
