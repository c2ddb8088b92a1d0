//! Exact evolution of the individual spins, the cavity mode and the CPB in a
//! bounded total-excitation sector.
//!
//! The frame rotates at the cavity frequency and the CPB sits in its own
//! rotating frame, so an idle CPB accrues no phase. Per segment the generator
//! is
//!
//! ```text
//! H = Σ_q δ_q σ⁺σ⁻_q + δ_b |e⟩⟨e| − i κ/2 a†a
//!   + Σ_q (g_q a σ⁺_q + h.c.) + g_b (a σ⁺_b + h.c.)
//! ```
//!
//! with the spin detunings `δ_q` made up of the idle detuning (or the window
//! detuning), the gradient term `m0 (ΔB/L) z_q / ħ` and optional static
//! offsets. The CPB coupling is an ideal switch that is only closed during CPB
//! resonance windows.
//!
//! Perfect refocusing pulses are handled in the toggling frame: between the
//! two pulses of an echo pair all spin detunings change sign and the spins are
//! decoupled from the cavity.

mod basis;
mod propagate;

use std::f64::consts::PI;
use std::sync::Arc;

use serde::Serialize;

pub use basis::{BasisState, SectorBasis};
pub use propagate::{propagate, PropagationStats, SparseHamiltonian};

use crate::error::{invalid, Error, Result};
use crate::fit::bisect_root;
use crate::modes::{gradient_pulse_params, ModeVector, RegisterLayout};
use crate::physics::{collective_rabi, EnsembleGeometry, PhysicalConstants};
use crate::protocols::schedule::{DetuningProfile, PulseSchedule, Segment, Target};
use crate::protocols::{swap_schedule, CompileOptions};
use crate::C64;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExactConfig {
    pub max_excitations: u8,
    /// Detuning of idle spins from the cavity.
    pub idle_detuning: f64,
    pub kappa: f64,
    pub g_cpb: f64,
    /// Static per-spin detuning offsets; empty for none.
    pub inhomogeneity: Vec<f64>,
    pub max_field_difference: Option<f64>,
    /// Piecewise-constant steps used for ramped windows.
    pub ramp_steps: usize,
    /// Dimensions up to this use dense matrix exponentials.
    pub dense_limit: usize,
    /// Keep the idle spins coupled to the cavity. When false the idle spins
    /// are treated as perfectly protected, so storage has no dispersive
    /// shift on the bright mode.
    pub idle_coupling: bool,
}

impl ExactConfig {
    /// One-excitation sector, spins idle at `100 √N ḡ`.
    pub fn for_geometry(geom: &EnsembleGeometry) -> Self {
        Self {
            max_excitations: 1,
            idle_detuning: 100.0 * collective_rabi(geom),
            kappa: 0.0,
            g_cpb: 0.0,
            inhomogeneity: Vec::new(),
            max_field_difference: None,
            ramp_steps: 64,
            dense_limit: 64,
            idle_coupling: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SectorState {
    basis: Arc<SectorBasis>,
    amplitudes: Vec<C64>,
    norm_deficit: f64,
    inverted: bool,
    stats: PropagationStats,
}

impl SectorState {
    pub fn basis(&self) -> &SectorBasis {
        &self.basis
    }
    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }
    /// Probability lost to cavity decay so far.
    pub fn norm_deficit(&self) -> f64 {
        self.norm_deficit
    }
    /// True between the two pulses of an echo pair.
    pub fn inverted(&self) -> bool {
        self.inverted
    }
    pub fn stats(&self) -> PropagationStats {
        self.stats
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn amplitude(&self, s: &BasisState) -> C64 {
        self.basis
            .index_of(s)
            .map_or(C64::new(0.0, 0.0), |i| self.amplitudes[i])
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &SectorState) -> C64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn fidelity(&self, other: &SectorState) -> f64 {
        self.inner(other).norm_sqr()
    }

    pub fn cavity_occupation(&self) -> f64 {
        self.weighted(|s| s.photons as f64)
    }

    pub fn cpb_population(&self) -> f64 {
        self.weighted(|s| s.cpb as u8 as f64)
    }

    pub fn spin_excitations(&self) -> f64 {
        self.weighted(|s| s.spins.len() as f64)
    }

    fn weighted(&self, f: impl Fn(&BasisState) -> f64) -> f64 {
        self.basis
            .states()
            .iter()
            .zip(&self.amplitudes)
            .map(|(s, a)| f(s) * a.norm_sqr())
            .sum()
    }

    /// `⟨b†(k) b(k)⟩` for the spin-wave mode `k`.
    pub fn mode_occupation(&self, mode: &ModeVector) -> f64 {
        let mut out = vec![C64::new(0.0, 0.0); self.basis.dim()];
        for (s, a) in self.basis.states().iter().zip(&self.amplitudes) {
            if s.spins.is_empty() || a.norm_sqr() == 0.0 {
                continue;
            }
            for (pos, &q) in s.spins.iter().enumerate() {
                let mut t = s.clone();
                t.spins.remove(pos);
                let j = self.basis.index_of(&t).expect("lowered state is in the basis");
                out[j] += mode.coefficients[q as usize].conj() * a;
            }
        }
        out.iter().map(|z| z.norm_sqr()).sum()
    }

    fn phase_by_counts(&mut self, cavity: f64, spins: f64, cpb: f64) {
        for (s, a) in self.basis.states().iter().zip(self.amplitudes.iter_mut()) {
            let phi = cavity * s.photons as f64 + spins * s.spins.len() as f64 + cpb * s.cpb as u8 as f64;
            if phi != 0.0 {
                *a *= C64::from_polar(1.0, phi);
            }
        }
    }
}

/// Which couplings and detunings are active in a segment.
#[derive(Debug, Clone, Copy)]
struct Terms {
    spin_offset: f64,
    field_difference: f64,
    spins_coupled: bool,
    cpb: Option<f64>,
}

pub struct ExactEngine {
    constants: PhysicalConstants,
    geom: EnsembleGeometry,
    config: ExactConfig,
    basis: Arc<SectorBasis>,
    /// `(row, col, Some(q) for spin q / None for CPB, √photons)`.
    links: Vec<(usize, usize, Option<u32>, f64)>,
}

impl ExactEngine {
    pub fn new(
        constants: PhysicalConstants,
        geom: EnsembleGeometry,
        config: ExactConfig,
    ) -> Result<Self> {
        if !config.inhomogeneity.is_empty() && config.inhomogeneity.len() != geom.n_spins() {
            return Err(invalid(
                "inhomogeneity",
                format!(
                    "{} offsets for {} spins",
                    config.inhomogeneity.len(),
                    geom.n_spins()
                ),
            ));
        }
        if !(config.kappa >= 0.0) {
            return Err(invalid("kappa", "must be non-negative"));
        }
        if config.ramp_steps == 0 {
            return Err(invalid("ramp_steps", "must be at least 1"));
        }
        let basis = Arc::new(SectorBasis::new(geom.n_spins(), config.max_excitations)?);
        let mut links = Vec::new();
        for (col, s) in basis.states().iter().enumerate() {
            if s.photons == 0 {
                continue;
            }
            let amp = (s.photons as f64).sqrt();
            let n = geom.n_spins() as u32;
            for q in 0..n {
                if s.spins.contains(&q) {
                    continue;
                }
                let mut t = s.clone();
                t.photons -= 1;
                let pos = t.spins.partition_point(|&x| x < q);
                t.spins.insert(pos, q);
                if let Some(row) = basis.index_of(&t) {
                    links.push((row, col, Some(q), amp));
                }
            }
            if !s.cpb {
                let mut t = s.clone();
                t.photons -= 1;
                t.cpb = true;
                if let Some(row) = basis.index_of(&t) {
                    links.push((row, col, None, amp));
                }
            }
        }
        Ok(Self {
            constants,
            geom,
            config,
            basis,
            links,
        })
    }

    pub fn geometry(&self) -> &EnsembleGeometry {
        &self.geom
    }
    pub fn config(&self) -> &ExactConfig {
        &self.config
    }
    pub fn basis(&self) -> &SectorBasis {
        &self.basis
    }

    pub fn state_from(&self, components: &[(BasisState, C64)]) -> Result<SectorState> {
        let mut amplitudes = vec![C64::new(0.0, 0.0); self.basis.dim()];
        for (s, a) in components {
            let i = self.basis.index_of(s).ok_or_else(|| {
                invalid("state", format!("{s:?} is outside the excitation sector"))
            })?;
            amplitudes[i] += a;
        }
        let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(invalid("state", format!("norm {norm} is not 1")));
        }
        Ok(SectorState {
            basis: self.basis.clone(),
            amplitudes,
            norm_deficit: 0.0,
            inverted: false,
            stats: PropagationStats::default(),
        })
    }

    pub fn vacuum(&self) -> SectorState {
        self.state_from(&[(BasisState::vacuum(), C64::new(1.0, 0.0))])
            .expect("vacuum is in every sector")
    }

    /// `α|vac⟩ + β|1 photon⟩`.
    pub fn cavity_qubit(&self, alpha: C64, beta: C64) -> Result<SectorState> {
        self.state_from(&[
            (BasisState::vacuum(), alpha),
            (BasisState::photons(1), beta),
        ])
    }

    /// `α|vac⟩ + β b†(k)|vac⟩`.
    pub fn spin_wave_qubit(&self, k: f64, alpha: C64, beta: C64) -> Result<SectorState> {
        let mode = ModeVector::new(&self.geom, k);
        let mut parts = vec![(BasisState::vacuum(), alpha)];
        parts.extend(
            mode.coefficients
                .iter()
                .enumerate()
                .map(|(q, c)| (BasisState::spin(q as u32), beta * c)),
        );
        self.state_from(&parts)
    }

    pub fn mode_vector(&self, k: f64) -> ModeVector {
        ModeVector::new(&self.geom, k)
    }

    /// Compiler timings matching this engine's geometry and configuration.
    pub fn compile_options(&self, gradient_duration: f64, drive_duration: f64) -> CompileOptions {
        CompileOptions {
            length: self.geom.length(),
            collective_rabi: collective_rabi(&self.geom),
            idle_detuning: self.config.idle_detuning,
            g_cpb: self.config.g_cpb,
            gradient_duration,
            drive_duration,
            max_field_difference: self.config.max_field_difference,
            window_profile: DetuningProfile::on_resonance(),
            dispersive_shift: if self.config.idle_coupling && self.config.idle_detuning != 0.0 {
                collective_rabi(&self.geom).powi(2) / self.config.idle_detuning
            } else {
                0.0
            },
        }
    }

    /// Occupation of each layout mode.
    pub fn layout_occupations(&self, state: &SectorState, layout: &RegisterLayout) -> Vec<f64> {
        layout
            .wavenumbers(self.geom.length())
            .into_iter()
            .map(|k| state.mode_occupation(&self.mode_vector(k)))
            .collect()
    }

    fn hamiltonian(&self, terms: Terms, inverted: bool) -> SparseHamiltonian {
        let sign = if inverted { -1.0 } else { 1.0 };
        let spin_det: Vec<f64> = self
            .geom
            .positions()
            .iter()
            .enumerate()
            .map(|(q, &z)| {
                let static_offset = self.config.inhomogeneity.get(q).copied().unwrap_or(0.0);
                let grad = if terms.field_difference != 0.0 {
                    crate::modes::gradient_detuning(
                        &self.constants,
                        terms.field_difference,
                        self.geom.length(),
                        z,
                    )
                } else {
                    0.0
                };
                sign * (terms.spin_offset + static_offset + grad)
            })
            .collect();
        let damping = C64::new(0.0, -self.config.kappa / 2.0);
        let diag = self
            .basis
            .states()
            .iter()
            .map(|s| {
                let mut d = damping * s.photons as f64;
                if s.cpb {
                    d += terms.cpb.unwrap_or(0.0);
                }
                for &q in &s.spins {
                    d += spin_det[q as usize];
                }
                d
            })
            .collect();
        let couplings = self.geom.couplings();
        let off = self
            .links
            .iter()
            .filter_map(|&(r, c, who, amp)| match who {
                Some(q) if terms.spins_coupled && !inverted => {
                    Some((r, c, couplings[q as usize] * amp))
                }
                None if terms.cpb.is_some() && self.config.g_cpb != 0.0 => {
                    Some((r, c, C64::new(self.config.g_cpb * amp, 0.0)))
                }
                _ => None,
            })
            .collect();
        SparseHamiltonian { diag, off }
    }

    /// Generator of a spin resonance window at `detuning` (no gradient).
    pub fn spin_window_hamiltonian(&self, detuning: f64) -> SparseHamiltonian {
        self.hamiltonian(
            Terms {
                spin_offset: detuning,
                field_difference: 0.0,
                spins_coupled: true,
                cpb: None,
            },
            false,
        )
    }

    fn idle_terms(&self) -> Terms {
        Terms {
            spin_offset: self.config.idle_detuning,
            field_difference: 0.0,
            spins_coupled: self.config.idle_coupling,
            cpb: None,
        }
    }

    fn run(&self, state: &mut SectorState, terms: Terms, t: f64) {
        if t == 0.0 {
            return;
        }
        let before = state.norm_sqr();
        let h = self.hamiltonian(terms, state.inverted);
        propagate(
            &h,
            &mut state.amplitudes,
            t,
            self.config.dense_limit,
            &mut state.stats,
        );
        if self.config.kappa > 0.0 {
            state.norm_deficit += before - state.norm_sqr();
        }
    }

    fn run_profile(&self, state: &mut SectorState, base: Terms, target: Target, profile: DetuningProfile, t: f64) {
        let steps = match profile {
            DetuningProfile::Square { .. } => 1,
            DetuningProfile::Ramp { .. } => self.config.ramp_steps,
        };
        let dt = t / steps as f64;
        for i in 0..steps {
            let d = profile.at((i as f64 + 0.5) / steps as f64);
            let terms = match target {
                Target::Spins => Terms {
                    spin_offset: d,
                    spins_coupled: true,
                    ..base
                },
                Target::Cpb => Terms {
                    cpb: Some(d),
                    ..base
                },
            };
            self.run(state, terms, dt);
        }
    }

    fn apply_cpb_rotation(&self, state: &mut SectorState, angle: f64, phase: f64) -> Result<()> {
        let c = (angle / 2.0).cos();
        let s = (angle / 2.0).sin();
        let eg = C64::new(0.0, -s) * C64::from_polar(1.0, phase);
        let ge = C64::new(0.0, -s) * C64::from_polar(1.0, -phase);
        let mut out = vec![C64::new(0.0, 0.0); self.basis.dim()];
        let mut lost: f64 = 0.0;
        for (i, st) in self.basis.states().iter().enumerate() {
            let a = state.amplitudes[i];
            if a == C64::new(0.0, 0.0) {
                continue;
            }
            let mut partner = st.clone();
            partner.cpb = !st.cpb;
            out[i] += a * c;
            let coef = if st.cpb { ge } else { eg };
            match self.basis.index_of(&partner) {
                Some(j) => out[j] += a * coef,
                None => lost += (a * coef).norm_sqr(),
            }
        }
        if lost > 1e-12 {
            return Err(Error::SectorOverflow {
                max_excitations: self.config.max_excitations,
                amplitude: lost.sqrt(),
            });
        }
        state.amplitudes = out;
        Ok(())
    }

    fn apply_segment(&self, state: &mut SectorState, seg: &Segment) -> Result<()> {
        match *seg {
            Segment::Wait { duration } => self.run(state, self.idle_terms(), duration),
            Segment::Gradient { delta_k, duration } => {
                if duration == 0.0 {
                    if delta_k != 0.0 {
                        return Err(invalid("duration", "gradient with nonzero Δk needs a duration"));
                    }
                    return Ok(());
                }
                let p = gradient_pulse_params(&self.constants, self.geom.length(), delta_k, duration)?;
                if let Some(limit) = self.config.max_field_difference {
                    if p.field_difference.abs() > limit {
                        return Err(Error::GradientLimit {
                            required: p.field_difference.abs(),
                            limit,
                        });
                    }
                }
                let terms = Terms {
                    field_difference: p.field_difference,
                    ..self.idle_terms()
                };
                self.run(state, terms, duration);
            }
            Segment::Resonance {
                target,
                duration,
                profile,
            } => {
                if target == Target::Spins && state.inverted {
                    return Err(Error::UnsupportedSegment(
                        "spin resonance window between echo pulses".into(),
                    ));
                }
                self.run_profile(state, self.idle_terms(), target, profile, duration);
            }
            Segment::CpbDrive {
                phase,
                angle,
                duration,
            } => {
                self.apply_cpb_rotation(state, angle, phase)?;
                self.run(state, self.idle_terms(), duration);
            }
            Segment::SpinPulse { .. } => {
                return Err(Error::UnsupportedSegment(
                    "classical spin pulses leave the bounded excitation sector".into(),
                ))
            }
            Segment::Echo { error, phase } => {
                if error != 0.0 {
                    return Err(Error::UnsupportedSegment(
                        "imperfect echo pulses need the classical simulator".into(),
                    ));
                }
                // π rotation about the axis at `phase` gives a flipped spin the
                // relative phase e^{∓2iφ} on entering / leaving inversion.
                let sign = if state.inverted { 2.0 } else { -2.0 };
                state.phase_by_counts(0.0, sign * phase, 0.0);
                state.inverted = !state.inverted;
            }
            Segment::FrameShift { cavity, spins, cpb } => state.phase_by_counts(cavity, spins, cpb),
        }
        Ok(())
    }

    pub fn evolve(&self, state: &SectorState, schedule: &PulseSchedule) -> Result<SectorState> {
        if !Arc::ptr_eq(&state.basis, &self.basis) && state.basis.dim() != self.basis.dim() {
            return Err(invalid("state", "state belongs to a different sector"));
        }
        let mut out = state.clone();
        for (index, seg) in schedule.segments().iter().enumerate() {
            self.apply_segment(&mut out, seg).map_err(|e| Error::Program {
                index,
                op: seg.kind().to_string(),
                source: Box::new(e),
            })?;
        }
        Ok(out)
    }

    /// Survival probability of a single photon after `duration` with the
    /// spins idle.
    pub fn cavity_decay_check(&self, duration: f64) -> Result<f64> {
        let start = self.state_from(&[(BasisState::photons(1), C64::new(1.0, 0.0))])?;
        let mut s = PulseSchedule::new();
        s.push(Segment::Wait { duration })?;
        let end = self.evolve(&start, &s)?;
        Ok(end.amplitude(&BasisState::photons(1)).norm_sqr())
    }

    /// Runs the three-segment swap between the cavity and layout mode `index`.
    pub fn swap_protocol(
        &self,
        state: &SectorState,
        index: usize,
        layout: &RegisterLayout,
        timings: &SwapTimings,
    ) -> Result<SectorState> {
        let k = *layout
            .wavenumbers(self.geom.length())
            .get(index)
            .ok_or_else(|| invalid("index", format!("layout has {} modes", layout.len())))?;
        let window = timings
            .window
            .unwrap_or_else(|| PI / (2.0 * collective_rabi(&self.geom)));
        let schedule = swap_schedule(k, timings.gradient_duration, window, timings.profile)?;
        self.evolve(state, &schedule)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SwapTimings {
    pub gradient_duration: f64,
    /// Defaults to `π / (2 √N ḡ)`.
    pub window: Option<f64>,
    pub profile: DetuningProfile,
}

impl SwapTimings {
    pub fn ideal(gradient_duration: f64) -> Self {
        Self {
            gradient_duration,
            window: None,
            profile: DetuningProfile::on_resonance(),
        }
    }
}

/// Cavity–bright-mode exchange frequency measured from exact dynamics.
///
/// A single photon is put into the cavity with the spins resonant; the cavity
/// amplitude follows `cos(Ω t)` and its first zero is located by bisection.
pub fn fit_exchange_frequency(
    constants: PhysicalConstants,
    geom: &EnsembleGeometry,
) -> Result<f64> {
    let mut config = ExactConfig::for_geometry(geom);
    config.idle_detuning = 0.0;
    let engine = ExactEngine::new(constants, geom.clone(), config)?;
    let start = engine.state_from(&[(BasisState::photons(1), C64::new(1.0, 0.0))])?;
    let guess = PI / (2.0 * collective_rabi(geom));
    let amp = |t: f64| -> Result<f64> {
        let mut s = PulseSchedule::new();
        s.push(Segment::Resonance {
            target: Target::Spins,
            duration: t,
            profile: DetuningProfile::on_resonance(),
        })?;
        Ok(engine.evolve(&start, &s)?.amplitude(&BasisState::photons(1)).re)
    };
    let t0 = bisect_root(amp, 0.5 * guess, 1.5 * guess, 1e-15 * guess)?;
    Ok(PI / (2.0 * t0))
}
