//! CPB gate definitions shared by the compiler and the register engine.

use std::f64::consts::PI;

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::C64;

/// `cos(θ/2)|0⟩ + e^{iφ} sin(θ/2)|1⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QubitState {
    pub theta: f64,
    pub phi: f64,
}

impl QubitState {
    pub fn zero() -> Self {
        Self { theta: 0.0, phi: 0.0 }
    }
    pub fn one() -> Self {
        Self { theta: PI, phi: 0.0 }
    }
    pub fn plus() -> Self {
        Self {
            theta: PI / 2.0,
            phi: 0.0,
        }
    }

    pub fn amplitudes(&self) -> [C64; 2] {
        [
            C64::new((self.theta / 2.0).cos(), 0.0),
            C64::from_polar((self.theta / 2.0).sin(), self.phi),
        ]
    }

    /// Drive that prepares this state from `|0⟩`.
    pub fn preparation(&self) -> OneQubitGate {
        OneQubitGate::Rotation {
            angle: self.theta,
            phase: self.phi + PI / 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "gate")]
pub enum OneQubitGate {
    Identity,
    /// Rotation by `angle` about the equatorial axis at `phase`.
    Rotation { angle: f64, phase: f64 },
    /// Virtual `diag(1, e^{iφ})`.
    Phase { phi: f64 },
    X,
    Hadamard,
}

impl OneQubitGate {
    pub fn matrix(&self) -> Matrix2<C64> {
        let z = C64::new(0.0, 0.0);
        let one = C64::new(1.0, 0.0);
        match *self {
            Self::Identity => Matrix2::identity(),
            Self::Rotation { angle, phase } => {
                let c = C64::new((angle / 2.0).cos(), 0.0);
                let s = (angle / 2.0).sin();
                Matrix2::new(
                    c,
                    C64::new(0.0, -s) * C64::from_polar(1.0, -phase),
                    C64::new(0.0, -s) * C64::from_polar(1.0, phase),
                    c,
                )
            }
            Self::Phase { phi } => Matrix2::new(one, z, z, C64::from_polar(1.0, phi)),
            Self::X => Matrix2::new(z, one, one, z),
            Self::Hadamard => {
                let h = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
                Matrix2::new(h, h, h, -h)
            }
        }
    }

    /// Physical realisation as a sequence of `(drive angle, axis phase)` and
    /// virtual phases, applied left to right. Equal to [`Self::matrix`] up to
    /// a global phase.
    pub fn pulses(&self) -> Vec<CpbPulse> {
        match *self {
            Self::Identity => vec![],
            Self::Rotation { angle, phase } => vec![CpbPulse::Drive { angle, phase }],
            Self::Phase { phi } => vec![CpbPulse::Virtual { phi }],
            Self::X => vec![CpbPulse::Drive {
                angle: PI,
                phase: 0.0,
            }],
            // H = R_y(π/2) Z
            Self::Hadamard => vec![
                CpbPulse::Virtual { phi: PI },
                CpbPulse::Drive {
                    angle: PI / 2.0,
                    phase: PI / 2.0,
                },
            ],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CpbPulse {
    Drive { angle: f64, phase: f64 },
    Virtual { phi: f64 },
}

/// `exp(−i t H_n)` on `{|g, n⟩, |e, n−1⟩}` for
/// `H_n = [[−iκn/2, √n g], [√n g, Δ − iκ(n−1)/2]]`.
pub fn jc_block(n: u32, delta: f64, g: f64, kappa: f64, t: f64) -> Matrix2<C64> {
    let nf = n as f64;
    let c = C64::new(nf.sqrt() * g, 0.0);
    let h = Matrix2::new(
        C64::new(0.0, -kappa * nf / 2.0),
        c,
        c,
        C64::new(delta, -kappa * (nf - 1.0) / 2.0),
    );
    (h * C64::new(0.0, -t)).exp()
}

/// Detuning and duration of the three CPB–cavity windows, in units of the
/// coupling `g`: `(Δ/g, g t)`. The sequence is symmetric (A, B, A) and
/// returns `|g1⟩`, `|e0⟩` and `|e1⟩` to themselves with a conditional phase of
/// exactly π.
pub const CZ_WINDOWS: [(f64, f64); 3] = [
    (-2.155_364_098_217_038_6, 1.071_586_559_192_715_6),
    (-0.146_991_503_575_452_43, 1.347_846_867_752_800_2),
    (-2.155_364_098_217_038_6, 1.071_586_559_192_715_6),
];

/// Largest tolerated `1 − F_process` of the calibrated CZ.
pub const CZ_TOLERANCE: f64 = 1e-6;

/// Calibrated conditional-phase gate for a given coupling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CzCalibration {
    pub g: f64,
    /// `(detuning, duration)` of each window in physical units.
    pub windows: [(f64, f64); 3],
    /// Virtual phases that undo the single-qubit part of the windows.
    pub cavity_correction: f64,
    pub cpb_correction: f64,
    pub process_infidelity: f64,
}

impl CzCalibration {
    pub fn new(g: f64) -> Result<Self> {
        if !(g > 0.0) {
            return Err(crate::error::invalid("g_cpb", "CZ needs a positive CPB coupling"));
        }
        let windows = CZ_WINDOWS.map(|(d, t)| (d * g, t / g));
        let mut u1 = Matrix2::identity();
        let mut u2 = Matrix2::identity();
        for &(d, t) in &windows {
            u1 = jc_block(1, d, g, 0.0, t) * u1;
            u2 = jc_block(2, d, g, 0.0, t) * u2;
        }
        let g1 = u1[(0, 0)];
        let e0 = u1[(1, 1)];
        let e1 = u2[(1, 1)];
        let cavity_correction = -g1.arg();
        let cpb_correction = -e0.arg();
        let corrected = [
            C64::new(1.0, 0.0),
            g1 * C64::from_polar(1.0, cavity_correction),
            e0 * C64::from_polar(1.0, cpb_correction),
            e1 * C64::from_polar(1.0, cavity_correction + cpb_correction),
        ];
        let ideal = [1.0, 1.0, 1.0, -1.0];
        let overlap: C64 = corrected.iter().zip(ideal).map(|(u, i)| u * i).sum();
        let process_infidelity = 1.0 - overlap.norm_sqr() / 16.0;
        if process_infidelity > CZ_TOLERANCE {
            return Err(Error::Calibration(process_infidelity));
        }
        Ok(Self {
            g,
            windows,
            cavity_correction,
            cpb_correction,
            process_infidelity,
        })
    }

    pub fn duration(&self) -> f64 {
        self.windows.iter().map(|w| w.1).sum()
    }
}
