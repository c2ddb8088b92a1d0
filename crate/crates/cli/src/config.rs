//! Experiment configuration files (TOML with unit strings).
//!
//! Every section rejects unknown keys. After parsing, all defaults are filled
//! in, and the complete structure is echoed into the report.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use holoreg::modes::{select_register_modes, RegisterLayout, Scheme};
use holoreg::noise::NoiseConfig;
use holoreg::physics::{
    build_ensemble, CouplingProfile, DeviceParams, EnsembleGeometry, EnsembleSpec, Placement,
};
use holoreg::protocols::gates::{OneQubitGate, QubitState};
use holoreg::protocols::{ProgramOp, RegisterProgram};
use serde::{Deserialize, Serialize};

use crate::units::{Field, Frequency, Length, Quantity, Temperature, Time};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandKind {
    Overlap,
    Simulate,
    Sweep,
}

impl CommandKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Overlap => "overlap",
            Self::Simulate => "simulate",
            Self::Sweep => "sweep",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Subcommand this config is written for.
    pub command: CommandKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub device: DeviceConfig,
    #[serde(default)]
    pub ensemble: EnsembleConfig,
    #[serde(default)]
    pub layout: LayoutConfig,
    #[serde(default)]
    pub engine: EngineConfig,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub program: Option<ProgramConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overlap: Option<OverlapConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classical: Option<ClassicalConfig>,
}

/// `√N ḡ` of the reference device: `10¹¹` spins at `ḡ = 2π × 20 Hz`.
pub const REFERENCE_COLLECTIVE_RABI: f64 = 316_227.766_016_837_94 * 2.0 * PI * 20.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeviceConfig {
    pub omega_c: Quantity<Frequency>,
    pub kappa: Quantity<Frequency>,
    pub b_bias: Quantity<Field>,
    pub length: Quantity<Length>,
    pub g_cpb: Quantity<Frequency>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_field_difference: Option<Quantity<Field>>,
}

impl Default for DeviceConfig {
    fn default() -> Self {
        let r = DeviceParams::reference(0.0275);
        Self {
            omega_c: Quantity::si(r.omega_c),
            kappa: Quantity::si(r.kappa),
            b_bias: Quantity::si(r.b_bias),
            length: Quantity::si(r.length),
            g_cpb: Quantity::si(r.g_cpb),
            max_field_difference: None,
        }
    }
}

impl DeviceConfig {
    pub fn params(&self) -> DeviceParams {
        DeviceParams {
            omega_c: self.omega_c.value(),
            kappa: self.kappa.value(),
            b_bias: self.b_bias.value(),
            length: self.length.value(),
            g_cpb: self.g_cpb.value(),
            max_field_difference: self.max_field_difference.map(|q| q.value()),
            ..DeviceParams::reference(self.length.value())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileName {
    Uniform,
    CavityMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleConfig {
    pub n_spins: usize,
    pub profile: ProfileName,
    pub placement: Placement,
    /// RMS single-spin coupling. Give this or `collective_rabi`, not both.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g_bar: Option<Quantity<Frequency>>,
    /// Target `√N ḡ`. Defaults to the reference device, `√(10¹¹) × 2π × 20 Hz`,
    /// when neither coupling is given.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub collective_rabi: Option<Quantity<Frequency>>,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            n_spins: 64,
            profile: ProfileName::Uniform,
            placement: Placement::Grid,
            g_bar: None,
            collective_rabi: None,
        }
    }
}

impl EnsembleConfig {
    pub fn profile(&self) -> CouplingProfile {
        match self.profile {
            ProfileName::Uniform => CouplingProfile::Uniform,
            ProfileName::CavityMode => CouplingProfile::CavityMode,
        }
    }

    pub fn g_bar(&self) -> f64 {
        match (self.g_bar, self.collective_rabi) {
            (Some(g), _) => g.value(),
            (None, Some(w)) => w.value() / (self.n_spins as f64).sqrt(),
            (None, None) => REFERENCE_COLLECTIVE_RABI / (self.n_spins as f64).sqrt(),
        }
    }

    pub fn build(&self, length: f64, seed: u64) -> holoreg::Result<EnsembleGeometry> {
        build_ensemble(
            &EnsembleSpec {
                n_spins: self.n_spins,
                length,
                profile: self.profile(),
                placement: self.placement,
                g_bar: self.g_bar(),
            },
            seed,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GramSource {
    /// Continuum overlaps of the cavity profile.
    Continuum,
    /// Overlaps of the actual sampled ensemble.
    Discrete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LayoutConfig {
    pub scheme: Scheme,
    pub count: usize,
    pub crosstalk_budget: f64,
    pub gram: GramSource,
}

impl Default for LayoutConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::Stride3,
            count: 4,
            crosstalk_budget: 1e-12,
            gram: GramSource::Continuum,
        }
    }
}

impl LayoutConfig {
    pub fn build(&self, geom: &EnsembleGeometry) -> holoreg::Result<RegisterLayout> {
        let continuum = select_register_modes(self.count, self.scheme)?;
        match self.gram {
            GramSource::Continuum => RegisterLayout::new(
                continuum.windings().to_vec(),
                continuum.gram().clone(),
                self.crosstalk_budget,
            ),
            GramSource::Discrete => RegisterLayout::discrete(
                geom,
                continuum.windings().to_vec(),
                self.crosstalk_budget,
            ),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineKind {
    Exact,
    Register,
    Classical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialState {
    Vacuum,
    /// One photon in the cavity.
    CavityOne,
    /// `(|0⟩ + |1⟩)/√2` in the cavity.
    CavityPlus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EngineConfig {
    pub kind: EngineKind,
    pub initial: InitialState,
    pub max_excitations: u8,
    /// Defaults to `100 √N ḡ`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub idle_detuning: Option<Quantity<Frequency>>,
    pub idle_coupling: bool,
    pub gradient_duration: Quantity<Time>,
    pub drive_duration: Quantity<Time>,
    pub dense_limit: usize,
    pub truncation: u8,
    pub crosstalk: bool,
    pub cool_target: f64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            kind: EngineKind::Register,
            initial: InitialState::Vacuum,
            max_excitations: 1,
            idle_detuning: None,
            idle_coupling: true,
            gradient_duration: Quantity::si(100e-9),
            drive_duration: Quantity::si(10e-9),
            dense_limit: 64,
            truncation: 3,
            crosstalk: false,
            cool_target: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub temperature: Option<Quantity<Temperature>>,
    /// Thermal excitation probability; overrides `temperature`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    pub sigma_inh: Quantity<Frequency>,
    pub gamma_dd: Quantity<Frequency>,
    pub eps1: f64,
    pub eps2: f64,
    pub shots: usize,
    /// Echo pairs are inserted into exact-engine waits when set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub echo_interval: Option<Quantity<Time>>,
}

impl Default for NoiseSection {
    fn default() -> Self {
        let n = NoiseConfig::default();
        Self {
            temperature: None,
            p: None,
            sigma_inh: Quantity::si(n.sigma_inh),
            gamma_dd: Quantity::si(n.gamma_dd),
            eps1: n.eps1,
            eps2: n.eps2,
            shots: n.shots,
            echo_interval: None,
        }
    }
}

impl NoiseSection {
    pub fn noise_config(&self, seed: u64) -> NoiseConfig {
        NoiseConfig {
            temperature: self.temperature.map(|t| t.value()),
            p: self.p,
            sigma_inh: self.sigma_inh.value(),
            gamma_dd: self.gamma_dd.value(),
            eps1: self.eps1,
            eps2: self.eps2,
            shots: self.shots,
            seed,
        }
    }
}

/// Program op as written in a config; `wait` takes a duration with units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "op", deny_unknown_fields)]
pub enum ConfigOp {
    Write {
        qubit: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        state: Option<QubitState>,
    },
    Retrieve { qubit: String },
    Load { qubit: String },
    Store { qubit: String },
    Gate { gate: OneQubitGate },
    Cz,
    TwoQubit { control: String, target: String },
    Wait { duration: Quantity<Time> },
    Cool { qubit: String },
    Measure { qubit: String },
    BellCheck { a: String, b: String },
}

impl ConfigOp {
    fn lower(&self) -> ProgramOp {
        match self.clone() {
            Self::Write { qubit, state } => ProgramOp::Write { qubit, state },
            Self::Retrieve { qubit } => ProgramOp::Retrieve { qubit },
            Self::Load { qubit } => ProgramOp::Load { qubit },
            Self::Store { qubit } => ProgramOp::Store { qubit },
            Self::Gate { gate } => ProgramOp::Gate { gate },
            Self::Cz => ProgramOp::Cz,
            Self::TwoQubit { control, target } => ProgramOp::TwoQubit { control, target },
            Self::Wait { duration } => ProgramOp::Wait {
                duration: duration.value(),
            },
            Self::Cool { qubit } => ProgramOp::Cool { qubit },
            Self::Measure { qubit } => ProgramOp::Measure { qubit },
            Self::BellCheck { a, b } => ProgramOp::BellCheck { a, b },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProgramConfig {
    pub qubits: BTreeMap<String, usize>,
    pub ops: Vec<ConfigOp>,
}

impl ProgramConfig {
    pub fn program(&self) -> RegisterProgram {
        RegisterProgram::new(
            self.qubits.clone(),
            self.ops.iter().map(ConfigOp::lower).collect(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepExperiment {
    RabiVsN,
    OverlapVsN,
    EchoGainVsEps,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub experiment: SweepExperiment,
    pub grid: Vec<f64>,
    #[serde(default = "default_shots")]
    pub shots: usize,
    /// Register winding probed by the echo sweep.
    #[serde(default = "default_winding")]
    pub winding: i64,
    /// Inhomogeneous dephasing angle `σ T` of the echo sweep.
    #[serde(default = "default_sigma_t")]
    pub sigma_t: f64,
}

fn default_shots() -> usize {
    100
}
fn default_winding() -> i64 {
    3
}
fn default_sigma_t() -> f64 {
    5.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OverlapConfig {
    pub dw_min: f64,
    pub dw_max: f64,
    pub dw_step: f64,
}

impl Default for OverlapConfig {
    fn default() -> Self {
        Self {
            dw_min: -6.0,
            dw_max: 6.0,
            dw_step: 0.25,
        }
    }
}

impl OverlapConfig {
    pub fn grid(&self) -> Vec<f64> {
        let n = ((self.dw_max - self.dw_min) / self.dw_step).round() as usize;
        (0..=n).map(|i| self.dw_min + i as f64 * self.dw_step).collect()
    }
}

/// Tilt-and-store demonstration on the classical ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassicalConfig {
    /// Tilt angle of each stored excitation (rad).
    pub tilt: f64,
    /// Winding added by the gradient after each tilt.
    pub store: Vec<i64>,
    /// Winding undone by the final gradient.
    pub retrieve: i64,
    #[serde(default = "default_samples")]
    pub samples: usize,
}

fn default_samples() -> usize {
    8
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate()?;
        cfg.resolve();
        Ok(cfg)
    }

    /// Writes derived defaults back into the config so the report records
    /// the values actually used.
    pub fn resolve(&mut self) {
        let e = &mut self.ensemble;
        if e.g_bar.is_none() && e.collective_rabi.is_none() {
            e.collective_rabi = Some(Quantity::si(REFERENCE_COLLECTIVE_RABI));
        }
        let collective = e.g_bar() * (e.n_spins as f64).sqrt();
        if self.engine.idle_detuning.is_none() {
            self.engine.idle_detuning = Some(Quantity::si(100.0 * collective));
        }
        if self.command == CommandKind::Overlap && self.overlap.is_none() {
            self.overlap = Some(OverlapConfig::default());
        }
    }

    /// Checks everything that can be checked without running a simulation.
    pub fn validate(&self) -> Result<(), String> {
        let e = |x: holoreg::Error| x.to_string();
        self.device.params().validate().map_err(e)?;
        if self.ensemble.n_spins == 0 {
            return Err("ensemble.n_spins must be positive".into());
        }
        if self.ensemble.g_bar.is_some() && self.ensemble.collective_rabi.is_some() {
            return Err("give ensemble.g_bar or ensemble.collective_rabi, not both".into());
        }
        if !(self.ensemble.g_bar() > 0.0) {
            return Err("ensemble coupling must be positive".into());
        }
        if self.layout.count == 0 {
            return Err("layout.count must be at least 1".into());
        }
        self.noise.noise_config(self.seed).validate().map_err(e)?;
        if let Some(i) = self.noise.echo_interval {
            if !(i.value() > 0.0) {
                return Err("noise.echo_interval must be positive".into());
            }
        }
        if !(1..=2).contains(&self.engine.max_excitations) {
            return Err("engine.max_excitations must be 1 or 2".into());
        }
        if self.engine.truncation < 2 {
            return Err("engine.truncation must be at least 2".into());
        }
        if !(self.engine.gradient_duration.value() > 0.0) {
            return Err("engine.gradient_duration must be positive".into());
        }
        match self.command {
            CommandKind::Overlap => {
                if let Some(o) = &self.overlap {
                    if !(o.dw_step > 0.0) || !(o.dw_max >= o.dw_min) {
                        return Err("overlap grid needs dw_step > 0 and dw_max >= dw_min".into());
                    }
                }
            }
            CommandKind::Sweep => {
                let s = self.sweep.as_ref().ok_or("sweep configs need a [sweep] section")?;
                if s.grid.len() < 4 {
                    return Err(format!("sweep grid needs at least 4 points, got {}", s.grid.len()));
                }
                if s.shots < 2 && s.experiment != SweepExperiment::RabiVsN {
                    return Err("sweep.shots must be at least 2".into());
                }
            }
            CommandKind::Simulate => {
                let thermal = self.noise.p.is_some() || self.noise.temperature.is_some();
                if thermal
                    && (self.engine.kind != EngineKind::Register
                        || self.engine.initial != InitialState::Vacuum)
                {
                    return Err(
                        "a thermal register needs engine.kind = \"register\" and a vacuum initial state"
                            .into(),
                    );
                }
                match self.engine.kind {
                EngineKind::Exact | EngineKind::Register => {
                    if self.program.is_none() {
                        return Err("simulate needs a [program] section".into());
                    }
                }
                EngineKind::Classical => {
                    let c = self
                        .classical
                        .as_ref()
                        .ok_or("the classical engine needs a [classical] section")?;
                    if c.store.is_empty() || c.samples == 0 {
                        return Err("classical.store must be non-empty and samples positive".into());
                    }
                }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_overlap_config() {
        let cfg = ExperimentConfig::parse("command = \"overlap\"\n").unwrap();
        assert_eq!(cfg.layout.count, 4);
        assert!((cfg.device.length.value() - 0.0275).abs() < 1e-15);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = ExperimentConfig::parse("command = \"overlap\"\n[device]\nlenght = \"1 m\"\n");
        assert!(err.is_err());
    }

    #[test]
    fn units_are_required() {
        assert!(ExperimentConfig::parse("command = \"overlap\"\n[device]\nlength = 0.02\n").is_err());
        let cfg =
            ExperimentConfig::parse("command = \"overlap\"\n[device]\nlength = \"2 cm\"\n").unwrap();
        assert!((cfg.device.length.value() - 0.02).abs() < 1e-15);
    }

    #[test]
    fn empty_layout_is_invalid() {
        assert!(ExperimentConfig::parse("command = \"overlap\"\n[layout]\ncount = 0\n").is_err());
    }

    #[test]
    fn short_sweep_grid_is_invalid() {
        let text = "command = \"sweep\"\n[sweep]\nexperiment = \"rabi_vs_n\"\ngrid = [4.0]\n";
        assert!(ExperimentConfig::parse(text).is_err());
    }

    #[test]
    fn echo_round_trips() {
        let text = r#"
command = "simulate"
seed = 3
[engine]
kind = "register"
[program]
qubits = { a = 1 }
ops = [ { op = "write", qubit = "a", state = { theta = 1.0, phi = 0.5 } },
        { op = "wait", duration = "2 us" } ]
"#;
        let cfg = ExperimentConfig::parse(text).unwrap();
        let echoed = toml::to_string(&cfg).unwrap();
        assert_eq!(ExperimentConfig::parse(&echoed).unwrap(), cfg);
        let json = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<ExperimentConfig>(&json).unwrap(), cfg);
    }
}
