//! Error mechanisms and Monte Carlo scaling measurements.
//!
//! Random draws come from ChaCha8 seeded with the run seed and put on stream
//! `shot`, so every shot is reproducible on its own and independent of the
//! thread that evaluates it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::exact::{fit_exchange_frequency, ExactEngine, SectorState};
use crate::fit::{bisect_root, log_log_fit, LinearFit};
use crate::modes::{gram_matrix, winding_to_k, ModeVector, RegisterLayout};
use crate::physics::{
    build_ensemble, thermal_probability, CouplingProfile, EnsembleGeometry, EnsembleSpec,
    PhysicalConstants, Placement,
};
use crate::protocols::classical::ClassicalEnsemble;
use crate::protocols::schedule::{PulseSchedule, Segment};
use crate::register::{mode_slot, Branch, RegisterState};
use crate::C64;

/// Default dipolar dephasing rate, 2π × 50 kHz.
pub const DIPOLAR_DEPHASING: f64 = 2.0 * std::f64::consts::PI * 50e3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Spin temperature (K); ignored when `p` is set.
    pub temperature: Option<f64>,
    pub p: Option<f64>,
    /// Gaussian spread of static spin detunings (rad/s).
    pub sigma_inh: f64,
    pub gamma_dd: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub shots: usize,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            temperature: None,
            p: None,
            sigma_inh: 0.0,
            gamma_dd: DIPOLAR_DEPHASING,
            eps1: 0.0,
            eps2: 0.0,
            shots: 100,
            seed: 0,
        }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_inh >= 0.0) || !(self.gamma_dd >= 0.0) {
            return Err(invalid("rate", "rates must be non-negative"));
        }
        if !(self.eps1.abs() < 0.5) || !(self.eps2.abs() < 0.5) {
            return Err(invalid("eps", "echo errors must satisfy |ε| < 0.5"));
        }
        if let Some(t) = self.temperature {
            if !(t > 0.0) {
                return Err(invalid("temperature", "must be positive"));
            }
        }
        if let Some(p) = self.p {
            check_p(p)?;
        }
        Ok(())
    }

    /// Thermal excitation probability at the Larmor frequency `omega`.
    pub fn excitation_probability(&self, constants: &PhysicalConstants, omega: f64) -> Result<f64> {
        match (self.p, self.temperature) {
            (Some(p), _) => Ok(p),
            (None, Some(t)) => thermal_probability(constants, omega, t),
            (None, None) => Ok(0.0),
        }
    }
}

fn check_p(p: f64) -> Result<()> {
    if !(0.0..1.0).contains(&p) {
        return Err(invalid("p", format!("excitation probability {p} outside [0, 1)")));
    }
    Ok(())
}

/// Generator for shot `shot` of a run seeded with `seed`.
pub fn shot_rng(seed: u64, shot: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(shot);
    rng
}

/// Gaussian static detunings with spread `sigma`.
pub fn inhomogeneous_offsets(n: usize, sigma: f64, seed: u64, shot: u64) -> Result<Vec<f64>> {
    if sigma == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let dist = Normal::new(0.0, sigma).map_err(|e| invalid("sigma_inh", e.to_string()))?;
    let mut rng = shot_rng(seed, shot);
    Ok((0..n).map(|_| dist.sample(&mut rng)).collect())
}

/// Level probabilities of an oscillator truncated to `levels` with
/// `P(n) ∝ r^n` and mean exactly `p`.
pub fn truncated_thermal(p: f64, levels: u8) -> Result<Vec<f64>> {
    check_p(p)?;
    let levels = levels as usize;
    if p == 0.0 {
        let mut v = vec![0.0; levels];
        v[0] = 1.0;
        return Ok(v);
    }
    let dist = |r: f64| -> Vec<f64> {
        let w: Vec<f64> = (0..levels).map(|n| r.powi(n as i32)).collect();
        let z: f64 = w.iter().sum();
        w.into_iter().map(|x| x / z).collect()
    };
    let mean = |r: f64| dist(r).iter().enumerate().map(|(n, q)| n as f64 * q).sum::<f64>();
    let r = bisect_root(|r| Ok(mean(r) - p), 0.0, 1.0, 1e-16)?;
    Ok(dist(r))
}

/// Every register mode in an independent truncated thermal state of mean
/// occupation `p`; cavity and CPB start empty. Branches lighter than `prune`
/// are dropped and the rest renormalised.
pub fn thermal_register_state(
    layout: &RegisterLayout,
    p: f64,
    levels: u8,
    prune: f64,
) -> Result<RegisterState> {
    let probs = truncated_thermal(p, levels)?;
    let n = layout.len();
    let mut branches: Vec<(f64, Vec<u8>)> = vec![(1.0, vec![0; n + 2])];
    for mode in 0..n {
        let mut next = Vec::with_capacity(branches.len());
        for (w, config) in &branches {
            for (level, q) in probs.iter().enumerate() {
                let weight = w * q;
                if weight <= prune {
                    continue;
                }
                let mut c = config.clone();
                c[mode_slot(mode)] = level as u8;
                next.push((weight, c));
            }
        }
        branches = next;
    }
    let total: f64 = branches.iter().map(|b| b.0).sum();
    let branches = branches
        .into_iter()
        .map(|(w, c)| Branch {
            weight: w / total,
            record: vec![],
            amps: [(c, C64::new(1.0, 0.0))].into_iter().collect(),
        })
        .collect();
    Ok(RegisterState::from_branches(n, branches))
}

/// One projective sample of every register mode's occupation.
pub fn sample_mode_occupations<R: Rng>(state: &RegisterState, rng: &mut R) -> Vec<u8> {
    let pick = |weights: &mut dyn Iterator<Item = f64>, u: f64| -> usize {
        let mut acc = 0.0;
        let mut last = 0;
        for (i, w) in weights.enumerate() {
            acc += w;
            last = i;
            if u < acc {
                return i;
            }
        }
        last
    };
    let total = state.total_probability();
    let branches = state.branches();
    let b = pick(
        &mut branches.iter().map(|b| b.weight * norm_sqr(b) / total),
        rng.random(),
    );
    let branch = &branches[b];
    let norm = norm_sqr(branch);
    let c = pick(&mut branch.amps.values().map(|a| a.norm_sqr() / norm), rng.random());
    let config = branch.amps.keys().nth(c).expect("non-empty branch");
    config[2..].to_vec()
}

fn norm_sqr(b: &Branch) -> f64 {
    b.amps.values().map(|a| a.norm_sqr()).sum()
}

/// `[b(k_i), b†(k_j)]` evaluated on a product state: spin `q` contributes
/// `(|g_q|²/Nḡ²) e^{i(k_j−k_i)z_q}` with sign `+1` in the ground state and `−1`
/// when excited.
pub fn finite_polarization_commutator(
    geom: &EnsembleGeometry,
    excited: &[bool],
    k_i: f64,
    k_j: f64,
) -> Result<C64> {
    if excited.len() != geom.n_spins() {
        return Err(invalid(
            "excited",
            format!("{} flags for {} spins", excited.len(), geom.n_spins()),
        ));
    }
    let dk = k_j - k_i;
    Ok(geom
        .overlap_weights()
        .zip(geom.positions())
        .zip(excited)
        .map(|((w, &z), &e)| {
            let s = if e { -w } else { w };
            C64::from_polar(s, dk * z)
        })
        .sum())
}

/// Each spin independently excited with probability `p`.
pub fn random_excitations(n: usize, p: f64, seed: u64, shot: u64) -> Result<Vec<bool>> {
    check_p(p)?;
    let mut rng = shot_rng(seed, shot);
    Ok((0..n).map(|_| rng.random::<f64>() < p).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        let n = samples.len();
        if n < 2 {
            return Err(invalid("shots", "need at least two samples"));
        }
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        Ok(Self {
            mean,
            stderr: (var / n as f64).sqrt(),
        })
    }
}

/// Monte Carlo mean of `Re [b(k), b†(k)]` with spins excited at rate `p`.
pub fn polarization_monte_carlo(
    geom: &EnsembleGeometry,
    p: f64,
    k: f64,
    shots: usize,
    seed: u64,
) -> Result<Estimate> {
    let samples = (0..shots as u64)
        .into_par_iter()
        .map(|shot| {
            let excited = random_excitations(geom.n_spins(), p, seed, shot)?;
            Ok(finite_polarization_commutator(geom, &excited, k, k)?.re)
        })
        .collect::<Result<Vec<f64>>>()?;
    Estimate::from_samples(&samples)
}

/// Excitation deposited by one imperfect echo pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EchoGains {
    pub k0: f64,
    /// Mode with coefficients `∝ g_q e^{iδ_q T}`, where the first pulse's error
    /// ends up after the second interval.
    pub inhomogeneous: f64,
    /// One entry per layout mode.
    pub register: Vec<f64>,
}

/// Coherent-state estimate of the excitation injected into each mode by the
/// pulse pair `[wait T, echo(π+2ε₁), wait T, echo(π+2ε₂)]` on a fully
/// polarized ensemble with static detunings `offsets`.
pub fn echo_error_injection(
    geom: &EnsembleGeometry,
    layout: &RegisterLayout,
    eps1: f64,
    eps2: f64,
    offsets: &[f64],
    interval: f64,
) -> Result<EchoGains> {
    echo_error_injection_with_phase(geom, layout, eps1, eps2, offsets, interval, 0.0)
}

/// As [`echo_error_injection`] with a global phase added to the drive.
pub fn echo_error_injection_with_phase(
    geom: &EnsembleGeometry,
    layout: &RegisterLayout,
    eps1: f64,
    eps2: f64,
    offsets: &[f64],
    interval: f64,
    drive_phase: f64,
) -> Result<EchoGains> {
    if !(eps1.abs() < 0.5) || !(eps2.abs() < 0.5) {
        return Err(invalid("eps", "echo errors must satisfy |ε| < 0.5"));
    }
    if !(interval >= 0.0) {
        return Err(invalid("interval", "must be non-negative"));
    }
    let pi = std::f64::consts::PI;
    let mut ens = ClassicalEnsemble::new(geom.clone(), offsets.to_vec())?.with_drive_phase(drive_phase);
    ens.precess(interval, |_| 0.0);
    ens.pulse(pi + 2.0 * eps1, 0.0);
    ens.precess(interval, |_| 0.0);
    ens.pulse(pi + 2.0 * eps2, 0.0);

    let k0 = ModeVector::new(geom, 0.0);
    let mut inh = k0.clone();
    for (c, d) in inh.coefficients.iter_mut().zip(offsets) {
        *c *= C64::from_polar(1.0, d * interval);
    }
    let register = layout
        .wavenumbers(geom.length())
        .into_iter()
        .map(|k| ens.mode_excitation(&ModeVector::new(geom, k)))
        .collect();
    Ok(EchoGains {
        k0: ens.mode_excitation(&k0),
        inhomogeneous: ens.mode_excitation(&inh),
        register,
    })
}

/// Pure dephasing of a stored single-excitation qubit by random phase kicks
/// of variance `2Γt` on the spins. Returns the shot-averaged ratio of the
/// vacuum–excitation coherence to its initial value.
pub fn exact_dephasing_coherence(
    engine: &ExactEngine,
    state: &SectorState,
    rate: f64,
    duration: f64,
    shots: usize,
    seed: u64,
) -> Result<(C64, f64)> {
    if !(rate >= 0.0) {
        return Err(invalid("rate", "must be non-negative"));
    }
    let vac = crate::exact::BasisState::vacuum();
    let a0 = state.amplitude(&vac);
    let initial: C64 = state
        .amplitudes()
        .iter()
        .zip(engine.basis().states())
        .filter(|(_, s)| s.spins.len() == 1 && !s.cpb && s.photons == 0)
        .map(|(a, _)| a0 * a.conj())
        .sum::<C64>();
    if initial.norm() == 0.0 {
        return Err(invalid("state", "state has no spin-excitation coherence"));
    }
    let sigma = (2.0 * rate * duration).sqrt();
    let dist = Normal::new(0.0, sigma).map_err(|e| invalid("rate", e.to_string()))?;
    let samples = (0..shots as u64)
        .into_par_iter()
        .map(|shot| {
            let phi = dist.sample(&mut shot_rng(seed, shot));
            let mut kick = PulseSchedule::new();
            kick.push(Segment::FrameShift {
                cavity: 0.0,
                spins: phi,
                cpb: 0.0,
            })?;
            let s = engine.evolve(state, &kick)?;
            let a0 = s.amplitude(&vac);
            Ok(s.amplitudes()
                .iter()
                .zip(engine.basis().states())
                .filter(|(_, st)| st.spins.len() == 1 && !st.cpb && st.photons == 0)
                .map(|(a, _)| a0 * a.conj())
                .sum::<C64>()
                / initial)
        })
        .collect::<Result<Vec<C64>>>()?;
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<C64>() / n;
    let var = samples.iter().map(|z| (z - mean).norm_sqr()).sum::<f64>() / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}

/// Time for a coherence decaying as `e^{−Γt}` to halve.
pub fn coherence_half_life(rate: f64) -> Result<f64> {
    if !(rate > 0.0) {
        return Err(invalid("rate", "must be positive"));
    }
    Ok(std::f64::consts::LN_2 / rate)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "experiment")]
pub enum Experiment {
    /// Fitted exchange frequency against ensemble size.
    RabiVsN { g_bar: f64, length: f64 },
    /// RMS off-diagonal discrete Gram entry against ensemble size, random
    /// doping.
    OverlapVsN {
        windings: Vec<i64>,
        profile: CouplingProfile,
        length: f64,
    },
    /// Mean register-mode gain from echo pairs with `ε₁ = ε₂ = ε`.
    EchoGainVsEps {
        n_spins: usize,
        winding: i64,
        /// `σ_inh T`, the dephasing angle accumulated over one interval.
        sigma_t: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub x: f64,
    pub value: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
    pub fit: LinearFit,
}

/// Runs `experiment` at each grid value and fits the log-log slope.
pub fn scaling_sweep(
    constants: &PhysicalConstants,
    experiment: &Experiment,
    grid: &[f64],
    shots: usize,
    seed: u64,
) -> Result<SweepResult> {
    if grid.len() < 4 {
        return Err(Error::DegenerateGrid(format!(
            "need at least 4 grid points, got {}",
            grid.len()
        )));
    }
    let points = grid
        .iter()
        .map(|&x| sweep_point(constants, experiment, x, shots, seed))
        .collect::<Result<Vec<_>>>()?;
    let xs: Vec<f64> = points.iter().map(|p| p.x).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.value).collect();
    let fit = log_log_fit(&xs, &ys)?;
    Ok(SweepResult { points, fit })
}

fn as_count(x: f64) -> Result<usize> {
    if !(x >= 1.0) || x.fract() != 0.0 {
        return Err(Error::DegenerateGrid(format!("{x} is not a spin count")));
    }
    Ok(x as usize)
}

fn sweep_point(
    constants: &PhysicalConstants,
    experiment: &Experiment,
    x: f64,
    shots: usize,
    seed: u64,
) -> Result<SweepPoint> {
    match experiment {
        Experiment::RabiVsN { g_bar, length } => {
            let geom = build_ensemble(
                &EnsembleSpec {
                    n_spins: as_count(x)?,
                    length: *length,
                    profile: CouplingProfile::Uniform,
                    placement: Placement::Grid,
                    g_bar: *g_bar,
                },
                seed,
            )?;
            Ok(SweepPoint {
                x,
                value: fit_exchange_frequency(*constants, &geom)?,
                stderr: 0.0,
            })
        }
        Experiment::OverlapVsN {
            windings,
            profile,
            length,
        } => {
            let n = as_count(x)?;
            let ks: Vec<f64> = windings.iter().map(|&w| winding_to_k(w as f64, *length)).collect();
            let m = ks.len();
            if m < 2 {
                return Err(invalid("windings", "need at least two modes"));
            }
            let samples = (0..shots.max(2) as u64)
                .map(|shot| {
                    let geom = build_ensemble(
                        &EnsembleSpec {
                            n_spins: n,
                            length: *length,
                            profile: profile.clone(),
                            placement: Placement::UniformRandom,
                            g_bar: 1.0,
                        },
                        seed.wrapping_add(shot.wrapping_mul(0x9e37_79b9_7f4a_7c15)),
                    )?;
                    let g = gram_matrix(&geom, &ks);
                    let mut s = 0.0;
                    for i in 0..m {
                        for j in 0..m {
                            if i != j {
                                s += g[(i, j)].norm_sqr();
                            }
                        }
                    }
                    Ok(s / (m * (m - 1)) as f64)
                })
                .collect::<Result<Vec<f64>>>()?;
            let e = Estimate::from_samples(&samples)?;
            // RMS |M| and its delta-method error.
            let value = e.mean.sqrt();
            Ok(SweepPoint {
                x,
                value,
                stderr: e.stderr / (2.0 * value),
            })
        }
        Experiment::EchoGainVsEps {
            n_spins,
            winding,
            sigma_t,
        } => {
            let geom = build_ensemble(
                &EnsembleSpec {
                    n_spins: *n_spins,
                    length: 1.0,
                    profile: CouplingProfile::Uniform,
                    placement: Placement::Grid,
                    g_bar: 1.0,
                },
                seed,
            )?;
            let layout = RegisterLayout::discrete(&geom, vec![*winding], 1.0)?;
            let samples = (0..shots.max(2) as u64)
                .into_par_iter()
                .map(|shot| {
                    let offsets = inhomogeneous_offsets(*n_spins, *sigma_t, seed, shot)?;
                    Ok(echo_error_injection(&geom, &layout, x, x, &offsets, 1.0)?.register[0])
                })
                .collect::<Result<Vec<f64>>>()?;
            let e = Estimate::from_samples(&samples)?;
            Ok(SweepPoint {
                x,
                value: e.mean,
                stderr: e.stderr,
            })
        }
    }
}
