//! Frequency-improved Legendre memory forecaster.
//!
//! A fixed Legendre state-space projection compresses each input window into
//! a coefficient trajectory; a learnable mixing on a few low Fourier modes of
//! that trajectory produces output memory, which is reconstructed into the
//! forecast. Several experts looking at different history lengths are merged
//! linearly, with optional reversible instance normalization around the whole
//! pipeline.

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod legendre;
pub mod model;
pub mod spectral;
pub mod training;

pub use error::{FilmError, Result};

#[cfg(test)]
#[macro_export]
macro_rules! assert_close {
    ($a:expr, $b:expr, $tol:expr) => {{
        let (a, b): (f64, f64) = ($a, $b);
        assert!((a - b).abs() <= $tol, "{a} vs {b} (tol {})", $tol);
    }};
}
