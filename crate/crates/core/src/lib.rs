//! Distance-relay characteristics built as Minkowski sums of source and fault
//! uncertainty, plus auxiliary-signal design through Farkas dual systems.
//!
//! The pipeline runs bottom-up:
//! [`netmodel`] turns a three-phase network into linear maps from sources to
//! terminal quantities, [`faults`] turns those into per-scenario loop
//! coefficients, [`posttest`] projects uncertainty onto the impedance plane,
//! [`pretest`] builds constraint systems over the source noise, [`sep`] decides
//! separation of scenario pairs, and [`auxopt`] searches for small separating
//! signals.

pub mod auxopt;
pub mod config;
pub mod convexsolve;
pub mod error;
pub mod faults;
pub mod geom;
pub mod netmodel;
pub mod posttest;
pub mod pretest;
pub mod sep;
pub mod standin;
pub mod synth;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;

/// Dense complex matrix used for all network maps.
pub type CMat = nalgebra::DMatrix<C64>;
/// Dense complex vector.
pub type CVec = nalgebra::DVector<C64>;

/// Shorthand for `C64::new(re, im)`.
#[inline]
pub fn c64(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}
