//! Physical constants, device parameters and spin-ensemble geometries.
//!
//! All frequencies are angular (rad/s), times are seconds, fields tesla and
//! lengths metres. Reports may divide by 2π for display; nothing in here does.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::C64;

pub const HBAR: f64 = 1.054_571_817e-34;
pub const BOHR_MAGNETON: f64 = 9.274_010_078_3e-24;
pub const BOLTZMANN: f64 = 1.380_649e-23;
/// Free-electron g factor.
pub const G_FREE_ELECTRON: f64 = 2.0023;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhysicalConstants {
    hbar: f64,
    mu_b: f64,
    k_b: f64,
    g_factor: f64,
    m0: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self::with_g_factor(G_FREE_ELECTRON).expect("default constants are positive")
    }
}

impl PhysicalConstants {
    pub fn new(hbar: f64, mu_b: f64, k_b: f64, g_factor: f64) -> Result<Self> {
        for (name, v) in [
            ("hbar", hbar),
            ("mu_b", mu_b),
            ("k_b", k_b),
            ("g_factor", g_factor),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(name, format!("must be positive, got {v}")));
            }
        }
        Ok(Self {
            hbar,
            mu_b,
            k_b,
            g_factor,
            m0: g_factor * mu_b,
        })
    }

    pub fn with_g_factor(g_factor: f64) -> Result<Self> {
        Self::new(HBAR, BOHR_MAGNETON, BOLTZMANN, g_factor)
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }
    pub fn mu_b(&self) -> f64 {
        self.mu_b
    }
    pub fn k_b(&self) -> f64 {
        self.k_b
    }
    pub fn g_factor(&self) -> f64 {
        self.g_factor
    }
    /// Spin magnetic moment `g μ_B`.
    pub fn m0(&self) -> f64 {
        self.m0
    }
}

/// Cavity, bias and CPB parameters of one device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceParams {
    pub omega_c: f64,
    pub kappa: f64,
    pub b_bias: f64,
    /// Sample/cavity length along the gradient axis.
    pub length: f64,
    pub g_cpb: f64,
    /// Idle CPB detuning from the cavity. The CPB coupling is modelled as an
    /// ideal switch, so this only matters for reporting.
    pub delta_cpb: f64,
    pub cpb_t1: Option<f64>,
    pub cpb_t2: Option<f64>,
    /// Hardware limit on the field difference across the sample.
    pub max_field_difference: Option<f64>,
}

impl DeviceParams {
    /// Cavity values from the reference device: 5 GHz resonator, 250 kHz
    /// linewidth, 180 mT bias. The length has no reference value and must be
    /// supplied.
    pub fn reference(length: f64) -> Self {
        Self {
            omega_c: 2.0 * PI * 5.0e9,
            kappa: 2.0 * PI * 250.0e3,
            b_bias: 0.180,
            length,
            g_cpb: 2.0 * PI * 50.0e6,
            delta_cpb: 2.0 * PI * 1.0e9,
            cpb_t1: None,
            cpb_t2: None,
            max_field_difference: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega_c.is_finite() && self.omega_c > 0.0) {
            return Err(invalid("omega_c", "must be positive"));
        }
        if !(self.length.is_finite() && self.length > 0.0) {
            return Err(invalid("length", "must be positive"));
        }
        if !(self.kappa.is_finite() && self.kappa >= 0.0) {
            return Err(invalid("kappa", "must be non-negative"));
        }
        if !(self.g_cpb.is_finite() && self.g_cpb >= 0.0) {
            return Err(invalid("g_cpb", "must be non-negative"));
        }
        if let Some(m) = self.max_field_difference {
            if !(m > 0.0) {
                return Err(invalid("max_field_difference", "must be positive"));
            }
        }
        Ok(())
    }
}

/// Positions and couplings of the individual spins.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleGeometry {
    positions: Vec<f64>,
    couplings: Vec<C64>,
    length: f64,
    g_bar: f64,
}

impl EnsembleGeometry {
    pub fn new(positions: Vec<f64>, couplings: Vec<C64>, length: f64) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::EmptyEnsemble);
        }
        if positions.len() != couplings.len() {
            return Err(invalid(
                "couplings",
                format!("{} couplings for {} positions", couplings.len(), positions.len()),
            ));
        }
        if !(length > 0.0) {
            return Err(invalid("length", "must be positive"));
        }
        let sum_sq: f64 = couplings.iter().map(|g| g.norm_sqr()).sum();
        if !(sum_sq > 0.0) {
            return Err(invalid("couplings", "all couplings vanish"));
        }
        let g_bar = (sum_sq / couplings.len() as f64).sqrt();
        Ok(Self {
            positions,
            couplings,
            length,
            g_bar,
        })
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }
    pub fn couplings(&self) -> &[C64] {
        &self.couplings
    }
    pub fn length(&self) -> f64 {
        self.length
    }
    pub fn g_bar(&self) -> f64 {
        self.g_bar
    }
    pub fn n_spins(&self) -> usize {
        self.positions.len()
    }

    /// Weights `|g_q|² / (N ḡ²)`; they sum to one.
    pub fn overlap_weights(&self) -> impl Iterator<Item = f64> + '_ {
        let norm = self.n_spins() as f64 * self.g_bar * self.g_bar;
        self.couplings.iter().map(move |g| g.norm_sqr() / norm)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    /// Cell centres `(q + 1/2) L / N`.
    Grid,
    UniformRandom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingProfile {
    Uniform,
    /// Transmission-line mode with `g(z) ∝ sin(2πz/L)`.
    CavityMode,
    /// Relative coupling sampled on an even grid over `[0, L]`, interpolated
    /// linearly.
    Table(Vec<f64>),
}

impl CouplingProfile {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "uniform" => Ok(Self::Uniform),
            "cavity_mode" | "cavity-mode" => Ok(Self::CavityMode),
            other => Err(Error::UnknownProfile(other.to_string())),
        }
    }

    fn shape(&self, z: f64, length: f64) -> f64 {
        match self {
            Self::Uniform => 1.0,
            Self::CavityMode => (2.0 * PI * z / length).sin(),
            Self::Table(values) => {
                if values.len() == 1 {
                    return values[0];
                }
                let x = (z / length).clamp(0.0, 1.0) * (values.len() - 1) as f64;
                let i = (x.floor() as usize).min(values.len() - 2);
                let f = x - i as f64;
                values[i] * (1.0 - f) + values[i + 1] * f
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub n_spins: usize,
    pub length: f64,
    pub profile: CouplingProfile,
    pub placement: Placement,
    /// RMS coupling the sampled ensemble is rescaled to.
    pub g_bar: f64,
}

/// Samples an ensemble. Random placement is a pure function of `seed`.
pub fn build_ensemble(spec: &EnsembleSpec, seed: u64) -> Result<EnsembleGeometry> {
    if spec.n_spins == 0 {
        return Err(Error::EmptyEnsemble);
    }
    if !(spec.g_bar > 0.0) {
        return Err(invalid("g_bar", "must be positive"));
    }
    if let CouplingProfile::Table(v) = &spec.profile {
        if v.is_empty() {
            return Err(invalid("profile", "empty coupling table"));
        }
    }
    let n = spec.n_spins;
    let length = spec.length;
    let positions: Vec<f64> = match spec.placement {
        Placement::Grid => (0..n)
            .map(|q| (q as f64 + 0.5) * length / n as f64)
            .collect(),
        Placement::UniformRandom => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..n).map(|_| rng.random::<f64>() * length).collect()
        }
    };
    let shape: Vec<f64> = positions
        .iter()
        .map(|&z| spec.profile.shape(z, length))
        .collect();
    let rms = (shape.iter().map(|s| s * s).sum::<f64>() / n as f64).sqrt();
    if !(rms > 0.0) {
        return Err(invalid("profile", "coupling profile vanishes on every spin"));
    }
    let scale = spec.g_bar / rms;
    let couplings = shape.iter().map(|s| C64::new(s * scale, 0.0)).collect();
    EnsembleGeometry::new(positions, couplings, length)
}

/// Larmor precession frequency `m0 B / ħ`.
pub fn larmor_frequency(constants: &PhysicalConstants, field: f64) -> Result<f64> {
    if !(field >= 0.0) {
        return Err(invalid("B", format!("field must be non-negative, got {field}")));
    }
    Ok(constants.m0() * field / constants.hbar())
}

/// Collective exchange rate `√N ḡ = √(Σ|g_q|²)`.
pub fn collective_rabi(geom: &EnsembleGeometry) -> f64 {
    collective_rabi_for(geom.n_spins() as f64, geom.g_bar())
}

/// `√N ḡ` without materialising the ensemble.
pub fn collective_rabi_for(n_spins: f64, g_bar: f64) -> f64 {
    n_spins.sqrt() * g_bar
}

/// Excited-state population of a two-level system at temperature `temperature`.
pub fn thermal_probability(
    constants: &PhysicalConstants,
    omega: f64,
    temperature: f64,
) -> Result<f64> {
    if !(temperature > 0.0) {
        return Err(invalid("T", "temperature must be positive"));
    }
    if !(omega > 0.0) {
        return Err(invalid("omega", "frequency must be positive"));
    }
    let x = constants.hbar() * omega / (constants.k_b() * temperature);
    Ok(1.0 / (x.exp() + 1.0))
}
