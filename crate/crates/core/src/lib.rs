//! Guaranteed (minimax) estimation of linear functionals of solutions to the
//! exterior Neumann problem for the Helmholtz equation in the plane.
//!
//! Layers, bottom up:
//! * [`specfun`], [`quadrature`], [`linalg`] — numerical building blocks;
//! * [`geometry`], [`potentials`], [`dtn`], [`forward`] — boundary integral and
//!   annulus finite-volume forward solvers;
//! * [`minimax_subdomain`], [`minimax_surface`], [`minimax_point`] — the three
//!   observation regimes, each producing optimal weights `û`, offset `ĉ` and
//!   worst-case error `σ`.

pub mod dtn;
pub mod error;
pub mod forward;
pub mod geometry;
pub mod linalg;
pub mod minimax_subdomain;
pub mod minimax_point;
pub mod minimax_surface;
pub mod potentials;
pub mod quadrature;
pub mod specfun;
pub mod validation;

pub use error::{Error, Result};
pub use num_complex::Complex64;

use num_complex::Complex64 as C;

/// Point in the plane.
pub type Point = [f64; 2];

/// Wavenumber `k` with `Im k ≥ 0` and `k ≠ 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WaveNumber(C);

impl WaveNumber {
    pub fn new(re: f64, im: f64) -> Result<Self> {
        Self::from_complex(C::new(re, im))
    }

    pub fn from_complex(k: C) -> Result<Self> {
        if !(k.re.is_finite() && k.im.is_finite()) {
            return Err(Error::Domain("wavenumber must be finite".into()));
        }
        if k.norm() == 0.0 {
            return Err(Error::Domain("wavenumber k = 0 is not admissible".into()));
        }
        if k.im < 0.0 {
            return Err(Error::Domain(format!("wavenumber needs Im k >= 0, got {k}")));
        }
        Ok(WaveNumber(k))
    }

    #[inline]
    pub fn value(self) -> C {
        self.0
    }

    /// `-k̄`, the wavenumber of the adjoint (incoming) problems. Still `Im ≥ 0`.
    #[inline]
    pub fn adjoint(self) -> WaveNumber {
        WaveNumber(-self.0.conj())
    }
}

impl std::fmt::Display for WaveNumber {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adjoint_is_involution_and_stays_in_upper_half_plane() {
        let k = WaveNumber::new(2.0, 0.3).unwrap();
        assert_eq!(k.adjoint().value(), C::new(-2.0, 0.3));
        assert_eq!(k.adjoint().adjoint(), k);
        assert!(WaveNumber::new(0.0, 0.0).is_err());
        assert!(WaveNumber::new(1.0, -0.1).is_err());
    }
}
