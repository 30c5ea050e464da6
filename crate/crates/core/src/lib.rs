//! Spectral toolkit for semiclassical magnetic model operators.
//!
//! The crate discretizes the one-dimensional fiber operators (de Gennes,
//! Montgomery, broken Montgomery, Born–Oppenheimer reductions), a handful of
//! two-dimensional matrix-free operators (triangle, Lu-Pan half-plane,
//! magnetic well, magnetic strip), and provides the eigensolvers, band
//! minimizers, asymptotic fits and counting tools used to cross-validate them.

pub mod bandfun;
pub mod cli;
pub mod counting;
pub mod domains2d;
pub mod eigencore;
pub mod error;
pub mod operators1d;
pub mod semiclassics;
pub mod specialfn;

pub use error::{Error, Result};

/// Default RNG seed for every randomized check and Lanczos start vector.
pub const DEFAULT_SEED: u64 = 42;

/// CSV writer with `,` separator and LF line endings.
pub fn csv_writer<W: std::io::Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w)
}

/// Number formatted with 17 significant digits.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}
