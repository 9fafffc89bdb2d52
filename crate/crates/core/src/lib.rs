//! Classical side of the Siegel variance formula.
//!
//! Exact enumeration of integral quadratic forms, automorphism groups,
//! root-vector structure, Siegel's mass formula with computed local
//! densities, harmonic polynomials and Weyl sums, and the geometric and
//! spectral evaluations of the smoothed counting variance.

pub mod arith;
pub mod enumeration;
pub mod error;
pub mod forms;
pub mod harmonics;
pub mod isometry;
pub mod linalg;
pub mod mass;
pub mod report;
pub mod roots;
pub mod variance;

pub use error::{Error, Result};
pub use forms::{GenusClass, GenusData, Parity, QuadForm};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/forms.md")]
    mod forms {}
    #[doc = include_str!("../../../book/src/isometry.md")]
    mod isometry {}
    #[doc = include_str!("../../../book/src/mass.md")]
    mod mass {}
    #[doc = include_str!("../../../book/src/harmonics.md")]
    mod harmonics {}
    #[doc = include_str!("../../../book/src/variance.md")]
    mod variance {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
