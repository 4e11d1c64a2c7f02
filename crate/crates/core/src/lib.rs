//! Radon projections of an initial pressure from wave-equation data recorded
//! on a corner-shaped detector surface: a 2D angular sector of opening `π/N`
//! or the boundary of the 3D octant.
//!
//! The pipeline is
//!
//! 1. [`forward`]: synthesize boundary pressure `p(t, y)` from a [`phantom`];
//! 2. [`radon_core`]: recover the projections of the odd extension `f_O` for
//!    directions in the fundamental sector, then fill the rest of the
//!    sinogram by symmetry;
//! 3. [`radon_invert`]: invert the Radon transform and restrict to the domain.
//!
//! [`harness`] wires these stages together behind presets and a config file.

pub mod error;
pub mod forward;
pub mod geometry;
pub mod harness;
pub mod numfmt;
pub mod phantom;
pub mod quadrature;
pub mod radon_core;
pub mod radon_invert;
pub mod symmetrize;

pub use error::{Error, Result};

/// The book's listings, compiled and run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/geometry.md")]
    mod geometry {}
    #[doc = include_str!("../../../book/src/forward.md")]
    mod forward {}
    #[doc = include_str!("../../../book/src/projections.md")]
    mod projections {}
    #[doc = include_str!("../../../book/src/sinograms.md")]
    mod sinograms {}
    #[doc = include_str!("../../../book/src/inversion.md")]
    mod inversion {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
