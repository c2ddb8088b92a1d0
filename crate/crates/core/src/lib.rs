//! Simulation toolkit for a quantum register stored in collective spin-wave
//! modes of an electron spin ensemble.
//!
//! The ensemble couples to a single transmission-line cavity mode, which in
//! turn couples to a Cooper-pair-box (CPB) qubit. Magnetic field gradient
//! pulses imprint a linear phase `exp(i k z)` on the stored spin excitation and
//! so move it between wavenumber modes; only the `k = 0` mode talks to the
//! cavity.
//!
//! Layout:
//! - [`physics`]: constants, device parameters and ensemble geometries.
//! - [`modes`]: spin-wave mode vectors, overlaps, Gram matrices, register
//!   layouts and gradient pulse arithmetic.
//! - [`exact`]: ground-truth evolution of individual spins + cavity + CPB in
//!   bounded excitation sectors.
//! - [`register`]: the register treated as independent truncated oscillators.
//! - [`protocols`]: pulse schedules, the program compiler, echo insertion and
//!   the classical spin-ensemble simulator.
//! - [`noise`]: thermal occupation, finite polarization, echo imperfections,
//!   dephasing and Monte Carlo scaling sweeps.

// `!(x > 0.0)` is the NaN-rejecting form of parameter checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod exact;
pub mod fit;
pub mod modes;
pub mod noise;
pub mod physics;
pub mod protocols;
pub mod register;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;

/// Records a complex matrix as separate real and imaginary nested arrays.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MatrixRecord {
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl From<&nalgebra::DMatrix<C64>> for MatrixRecord {
    fn from(m: &nalgebra::DMatrix<C64>) -> Self {
        let rows = |f: fn(&C64) -> f64| {
            (0..m.nrows())
                .map(|i| (0..m.ncols()).map(|j| f(&m[(i, j)])).collect())
                .collect()
        };
        MatrixRecord {
            re: rows(|z| z.re),
            im: rows(|z| z.im),
        }
    }
}
