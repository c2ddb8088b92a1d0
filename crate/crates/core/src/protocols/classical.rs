//! Product-state (mean-field) simulation of the spin ensemble.
//!
//! Each spin keeps its own two amplitudes `(a_g, a_e)`. There is no cavity:
//! this is the regime of strong classical pulses and free precession, where
//! the exact engine's bounded excitation sector does not apply. The coherent
//! amplitude of a spin-wave mode is `β_k = Σ conj(c_q(k)) ⟨σ−_q⟩` and its mean
//! excitation number is `|β_k|²`.

use serde::{Deserialize, Serialize};

use super::schedule::{PulseSchedule, Segment};
use crate::error::{invalid, Error, Result};
use crate::modes::{gradient_pulse_params, gradient_detuning, ModeVector};
use crate::physics::{EnsembleGeometry, PhysicalConstants};
use crate::C64;

#[derive(Debug, Clone)]
pub struct ClassicalEnsemble {
    geom: EnsembleGeometry,
    /// Static detuning of each spin in the drive frame.
    offsets: Vec<f64>,
    /// Phase added to every pulse on top of the coupling phase.
    drive_phase: f64,
    spins: Vec<[C64; 2]>,
}

impl ClassicalEnsemble {
    /// All spins in the ground state.
    pub fn new(geom: EnsembleGeometry, offsets: Vec<f64>) -> Result<Self> {
        if offsets.len() != geom.n_spins() {
            return Err(invalid(
                "offsets",
                format!("{} offsets for {} spins", offsets.len(), geom.n_spins()),
            ));
        }
        let n = geom.n_spins();
        Ok(Self {
            geom,
            offsets,
            drive_phase: 0.0,
            spins: vec![[C64::new(1.0, 0.0), C64::new(0.0, 0.0)]; n],
        })
    }

    pub fn with_drive_phase(mut self, phase: f64) -> Self {
        self.drive_phase = phase;
        self
    }

    pub fn geometry(&self) -> &EnsembleGeometry {
        &self.geom
    }

    pub fn spins(&self) -> &[[C64; 2]] {
        &self.spins
    }

    /// Rotation of every spin by `angle` about the equatorial axis at
    /// `phase + arg(g_q)`: the drive shares the cavity profile's phase but
    /// has a uniform rotation angle.
    pub fn pulse(&mut self, angle: f64, phase: f64) {
        let c = (angle / 2.0).cos();
        let s = (angle / 2.0).sin();
        for (spin, g) in self.spins.iter_mut().zip(self.geom.couplings()) {
            let phi = phase + self.drive_phase + g.arg();
            let [a, b] = *spin;
            *spin = [
                a * c + b * C64::new(0.0, -s) * C64::from_polar(1.0, -phi),
                b * c + a * C64::new(0.0, -s) * C64::from_polar(1.0, phi),
            ];
        }
    }

    /// Free precession for `t` with extra detuning `extra(q)` on top of the
    /// static offsets.
    pub fn precess(&mut self, t: f64, extra: impl Fn(usize) -> f64) {
        for (q, spin) in self.spins.iter_mut().enumerate() {
            spin[1] *= C64::from_polar(1.0, -(self.offsets[q] + extra(q)) * t);
        }
    }

    /// Multiplies every excited amplitude by `e^{iφ}`.
    pub fn phase_shift(&mut self, phi: f64) {
        let p = C64::from_polar(1.0, phi);
        for spin in &mut self.spins {
            spin[1] *= p;
        }
    }

    /// `⟨σ−_q⟩ = conj(a_g) a_e`.
    pub fn coherence(&self, q: usize) -> C64 {
        let [a, b] = self.spins[q];
        a.conj() * b
    }

    pub fn mode_amplitude(&self, mode: &ModeVector) -> C64 {
        mode.coefficients
            .iter()
            .enumerate()
            .map(|(q, c)| c.conj() * self.coherence(q))
            .sum()
    }

    pub fn mode_excitation(&self, mode: &ModeVector) -> f64 {
        self.mode_amplitude(mode).norm_sqr()
    }

    /// Mean number of spins flipped.
    pub fn excited_population(&self) -> f64 {
        self.spins.iter().map(|s| s[1].norm_sqr()).sum()
    }
}

/// Sampled inductive signal `|β_0|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalTrace {
    pub times: Vec<f64>,
    pub signal: Vec<f64>,
}

impl SignalTrace {
    pub fn max_in(&self, from: f64, to: f64) -> f64 {
        self.times
            .iter()
            .zip(&self.signal)
            .filter(|(t, _)| **t >= from && **t <= to)
            .map(|(_, s)| *s)
            .fold(0.0, f64::max)
    }
}

/// Runs `schedule` on the classical ensemble, sampling the k = 0 signal
/// `samples` times per timed segment and once after every instantaneous one.
///
/// Supports spin pulses, echoes, gradients, waits and spin frame shifts;
/// anything involving the cavity or the CPB is rejected.
pub fn classical_echo_demo(
    constants: &PhysicalConstants,
    ensemble: &mut ClassicalEnsemble,
    schedule: &PulseSchedule,
    samples: usize,
) -> Result<SignalTrace> {
    if samples == 0 {
        return Err(invalid("samples", "need at least one sample per segment"));
    }
    let k0 = ModeVector::new(ensemble.geometry(), 0.0);
    let mut trace = SignalTrace {
        times: vec![0.0],
        signal: vec![ensemble.mode_amplitude(&k0).norm()],
    };
    let mut now = 0.0;
    for (index, seg) in schedule.segments().iter().enumerate() {
        let unsupported = |what: &str| Error::Program {
            index,
            op: seg.kind().into(),
            source: Box::new(Error::UnsupportedSegment(format!(
                "{what} is outside the classical spin model"
            ))),
        };
        let detuning: Vec<f64> = match *seg {
            Segment::SpinPulse { angle, phase } => {
                ensemble.pulse(angle, phase);
                vec![]
            }
            Segment::Echo { error, phase } => {
                ensemble.pulse(std::f64::consts::PI + 2.0 * error, phase);
                vec![]
            }
            Segment::FrameShift { cavity, spins, cpb } => {
                if cavity != 0.0 || cpb != 0.0 {
                    return Err(unsupported("a cavity or CPB frame shift"));
                }
                ensemble.phase_shift(spins);
                vec![]
            }
            Segment::Wait { .. } => vec![0.0; ensemble.geometry().n_spins()],
            Segment::Gradient { delta_k, duration } => {
                let length = ensemble.geometry().length();
                let p = gradient_pulse_params(constants, length, delta_k, duration)?;
                ensemble
                    .geometry()
                    .positions()
                    .iter()
                    .map(|&z| gradient_detuning(constants, p.field_difference, length, z))
                    .collect()
            }
            Segment::Resonance { .. } | Segment::CpbDrive { .. } => {
                return Err(unsupported("a cavity or CPB segment"))
            }
        };
        let duration = seg.duration();
        if detuning.is_empty() || duration == 0.0 {
            trace.times.push(now);
            trace.signal.push(ensemble.mode_amplitude(&k0).norm());
            continue;
        }
        let dt = duration / samples as f64;
        for i in 1..=samples {
            ensemble.precess(dt, |q| detuning[q]);
            trace.times.push(now + dt * i as f64);
            trace.signal.push(ensemble.mode_amplitude(&k0).norm());
        }
        now += duration;
    }
    Ok(trace)
}
