//! Point interactions in a straight Dirichlet tube `R × M`.
//!
//! The crate builds the transverse Dirichlet basis of a rectangle or disk,
//! evaluates the free resolvent kernel and its renormalised diagonal, and
//! on top of that solves the Krein problems for bound states, embedded
//! eigenvalues, scattering matrices and Floquet–Bloch band charts of
//! periodic arrays.

pub mod bands;
pub mod error;
pub mod greenfn;
pub mod oracle;
pub mod scatter;
pub mod special;
pub mod spectral;
pub mod xsection;

pub use error::{Error, Result};
pub use greenfn::{Point3, Renormalization, SpectralPoint, Tube};
pub use xsection::{CrossSection, ModeBasis, ModeLabel, Point2};
