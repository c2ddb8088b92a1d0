//! The register as independent truncated oscillators: one per layout mode,
//! one for the cavity, plus the two-level CPB.
//!
//! A [`RegisterState`] is a classical mixture of pure branches. Each branch
//! keeps its measurement record and a sparse map from occupation vectors
//! `[cpb, cavity, mode 0, mode 1, …]` to amplitudes. Branches are only
//! created by measurements, cavity decay during waits, dephasing and thermal
//! preparation; unitary gates act branch by branch.
//!
//! Swaps are the phase-corrected exchanges produced by the compiler, so a
//! swap is a permutation of the cavity and mode occupations. With crosstalk
//! enabled the exchange is conjugated by the passive mixing generated by the
//! layout's Gram matrix.

mod fock;

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, Matrix2};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::modes::RegisterLayout;
use crate::protocols::gates::{jc_block, CzCalibration, OneQubitGate, QubitState};
use crate::C64;

pub use fock::passive_transform;

/// Occupation vector `[cpb, cavity, modes…]`.
pub type Config = Vec<u8>;
pub type Amplitudes = BTreeMap<Config, C64>;

pub const CPB: usize = 0;
pub const CAVITY: usize = 1;

/// Slot of register mode `i` in a [`Config`].
pub fn mode_slot(i: usize) -> usize {
    i + 2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "op")]
pub enum GateOp {
    /// Prepare `state` on the CPB and hand it to the cavity (if given), then
    /// swap the cavity into `mode`.
    Write {
        mode: usize,
        #[serde(default)]
        state: Option<QubitState>,
    },
    Swap { mode: usize },
    /// Phase-corrected CPB–cavity exchange.
    CpbSwap,
    /// `Swap(mode)` then `CpbSwap`.
    Load { mode: usize },
    /// `CpbSwap` then `Swap(mode)`.
    Store { mode: usize },
    OneQubit { gate: OneQubitGate },
    Cz,
    /// Load control, swap target, CZ, swap target, store control.
    TwoQubit { control: usize, target: usize },
    /// Free evolution: cavity decay only.
    Wait { duration: f64 },
    /// Pure dephasing of every register mode.
    Dephase { rate: f64, duration: f64 },
    Cool { mode: usize },
    /// Retrieve to the CPB, measure it projectively and reset it.
    Measure { mode: usize },
    BellCheck { a: usize, b: usize },
}

impl GateOp {
    pub fn label(&self) -> String {
        match self {
            Self::Write { mode, .. } => format!("write({mode})"),
            Self::Swap { mode } => format!("swap({mode})"),
            Self::CpbSwap => "cpb_swap".into(),
            Self::Load { mode } => format!("load({mode})"),
            Self::Store { mode } => format!("store({mode})"),
            Self::OneQubit { .. } => "one_qubit".into(),
            Self::Cz => "cz".into(),
            Self::TwoQubit { control, target } => format!("two_qubit({control},{target})"),
            Self::Wait { .. } => "wait".into(),
            Self::Dephase { .. } => "dephase".into(),
            Self::Cool { mode } => format!("cool({mode})"),
            Self::Measure { mode } => format!("measure({mode})"),
            Self::BellCheck { a, b } => format!("bell_check({a},{b})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegisterConfig {
    pub mode_truncation: u8,
    pub cavity_truncation: u8,
    pub kappa: f64,
    pub g_cpb: f64,
    /// Emulate crosstalk from the layout's Gram matrix during swaps.
    pub crosstalk: bool,
    /// Cooling wait per cycle; defaults to `10/κ`.
    pub cool_wait: Option<f64>,
    /// Cooling stops once the mode holds less than this fraction of its
    /// initial occupation.
    pub cool_target: f64,
    /// Branches lighter than this are dropped.
    pub prune: f64,
    /// Largest tolerated population in any top Fock level.
    pub leakage_limit: f64,
}

impl Default for RegisterConfig {
    fn default() -> Self {
        Self {
            mode_truncation: 3,
            cavity_truncation: 3,
            kappa: 0.0,
            g_cpb: 2.0 * PI * 50e6,
            crosstalk: false,
            cool_wait: None,
            cool_target: 1e-6,
            prune: 1e-14,
            leakage_limit: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub weight: f64,
    /// `(mode, outcome)` for each measurement so far.
    pub record: Vec<(usize, u8)>,
    pub amps: Amplitudes,
}

impl Branch {
    fn norm_sqr(&self) -> f64 {
        self.amps.values().map(|a| a.norm_sqr()).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegisterState {
    n_modes: usize,
    branches: Vec<Branch>,
}

impl RegisterState {
    pub fn vacuum(n_modes: usize) -> Self {
        let mut amps = Amplitudes::new();
        amps.insert(vec![0; n_modes + 2], C64::new(1.0, 0.0));
        Self {
            n_modes,
            branches: vec![Branch {
                weight: 1.0,
                record: vec![],
                amps,
            }],
        }
    }

    /// A single pure branch. Amplitudes must be normalized.
    pub fn pure(n_modes: usize, amps: Amplitudes) -> Result<Self> {
        for c in amps.keys() {
            if c.len() != n_modes + 2 {
                return Err(invalid("config", format!("expected {} slots", n_modes + 2)));
            }
            if c[CPB] > 1 {
                return Err(invalid("config", "CPB has two levels"));
            }
        }
        let norm: f64 = amps.values().map(|a| a.norm_sqr()).sum();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(invalid("state", format!("norm {norm} is not 1")));
        }
        Ok(Self {
            n_modes,
            branches: vec![Branch {
                weight: 1.0,
                record: vec![],
                amps,
            }],
        })
    }

    pub fn from_branches(n_modes: usize, branches: Vec<Branch>) -> Self {
        Self { n_modes, branches }
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }
    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    /// `Σ_b w_b ‖ψ_b‖²`; below 1 only after non-unitary evolution.
    pub fn total_probability(&self) -> f64 {
        self.branches.iter().map(|b| b.weight * b.norm_sqr()).sum()
    }

    pub fn norm_deficit(&self) -> f64 {
        1.0 - self.total_probability()
    }

    pub fn occupation(&self, slot: usize) -> f64 {
        self.expect(|c| c[slot] as f64)
    }

    pub fn mode_occupation(&self, mode: usize) -> f64 {
        self.occupation(mode_slot(mode))
    }

    /// Occupations of `[cpb, cavity, modes…]`.
    pub fn occupations(&self) -> Vec<f64> {
        (0..self.n_modes + 2).map(|s| self.occupation(s)).collect()
    }

    /// Probability of finding `slot` in level `level`.
    pub fn level_population(&self, slot: usize, level: u8) -> f64 {
        self.expect(|c| (c[slot] == level) as u8 as f64)
    }

    fn expect(&self, f: impl Fn(&Config) -> f64) -> f64 {
        self.branches
            .iter()
            .map(|b| b.weight * b.amps.iter().map(|(c, a)| f(c) * a.norm_sqr()).sum::<f64>())
            .sum()
    }

    /// Reduced density matrix of one slot, truncated to `levels`.
    pub fn reduced_density(&self, slot: usize, levels: usize) -> DMatrix<C64> {
        let mut rho = DMatrix::from_element(levels, levels, C64::new(0.0, 0.0));
        for b in &self.branches {
            let mut by_rest: BTreeMap<Config, Vec<(u8, C64)>> = BTreeMap::new();
            for (c, a) in &b.amps {
                let mut rest = c.clone();
                rest[slot] = 0;
                by_rest.entry(rest).or_default().push((c[slot], *a));
            }
            for parts in by_rest.values() {
                for &(i, ai) in parts {
                    for &(j, aj) in parts {
                        rho[(i as usize, j as usize)] += ai * aj.conj() * b.weight;
                    }
                }
            }
        }
        rho
    }

    /// Fidelity of the two-mode reduced state with `(|00⟩ + |11⟩)/√2`.
    pub fn bell_fidelity(&self, a: usize, b: usize) -> f64 {
        let (sa, sb) = (mode_slot(a), mode_slot(b));
        let mut f = 0.0;
        for br in &self.branches {
            let mut proj: BTreeMap<Config, C64> = BTreeMap::new();
            for (c, amp) in &br.amps {
                if c[sa] == c[sb] && c[sa] <= 1 {
                    let mut rest = c.clone();
                    rest[sa] = 0;
                    rest[sb] = 0;
                    *proj.entry(rest).or_default() += amp * std::f64::consts::FRAC_1_SQRT_2;
                }
            }
            f += br.weight * proj.values().map(|z| z.norm_sqr()).sum::<f64>();
        }
        f
    }

    fn map_pure(&mut self, mut f: impl FnMut(&Amplitudes) -> Amplitudes) {
        for b in &mut self.branches {
            b.amps = f(&b.amps);
        }
    }
}

/// Log entry for one program op.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpRecord {
    pub index: usize,
    pub op: String,
    /// `[cpb, cavity, modes…]` after the op.
    pub occupations: Vec<f64>,
    /// Largest top-level population over the oscillators.
    pub leakage: f64,
    pub norm_deficit: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub fidelity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub cycles: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub predicted_cycles: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub outcome_probability: Option<f64>,
}

#[derive(Debug, Default, Clone)]
struct OpInfo {
    fidelity: Option<f64>,
    cycles: Option<usize>,
    predicted_cycles: Option<usize>,
    outcome_probability: Option<f64>,
}

pub struct RegisterEngine {
    layout: RegisterLayout,
    config: RegisterConfig,
    /// Passive mixing for each mode's swap when crosstalk is on.
    mixing: Option<Vec<DMatrix<C64>>>,
}

impl RegisterEngine {
    pub fn new(layout: RegisterLayout, config: RegisterConfig) -> Result<Self> {
        if config.mode_truncation < 2 || config.cavity_truncation < 2 {
            return Err(invalid("truncation", "oscillators need at least two levels"));
        }
        if !(config.kappa >= 0.0) {
            return Err(invalid("kappa", "must be non-negative"));
        }
        let mixing = config.crosstalk.then(|| {
            let g = layout.gram();
            let n = layout.len();
            (0..n)
                .map(|i| {
                    let mut a = DMatrix::from_element(n, n, C64::new(0.0, 0.0));
                    for j in 0..n {
                        if j != i {
                            a[(j, i)] = g[(j, i)];
                            a[(i, j)] = -g[(j, i)].conj();
                        }
                    }
                    a.exp()
                })
                .collect()
        });
        Ok(Self {
            layout,
            config,
            mixing,
        })
    }

    pub fn layout(&self) -> &RegisterLayout {
        &self.layout
    }
    pub fn config(&self) -> &RegisterConfig {
        &self.config
    }

    pub fn vacuum(&self) -> RegisterState {
        RegisterState::vacuum(self.layout.len())
    }

    fn check_mode(&self, mode: usize) -> Result<()> {
        if mode >= self.layout.len() {
            return Err(invalid(
                "mode",
                format!("mode {mode} outside a {}-mode layout", self.layout.len()),
            ));
        }
        Ok(())
    }

    fn truncation(&self, slot: usize) -> u8 {
        match slot {
            CPB => 2,
            CAVITY => self.config.cavity_truncation,
            _ => self.config.mode_truncation,
        }
    }

    /// Largest population in the top level of any oscillator.
    pub fn leakage(&self, state: &RegisterState) -> f64 {
        (1..state.n_modes + 2)
            .map(|s| state.level_population(s, self.truncation(s) - 1))
            .fold(0.0, f64::max)
    }

    fn check_leakage(&self, state: &RegisterState) -> Result<()> {
        for s in 1..state.n_modes + 2 {
            let top = state.level_population(s, self.truncation(s) - 1);
            if top > self.config.leakage_limit {
                let mode = if s == CAVITY {
                    "cavity".to_string()
                } else {
                    format!("mode {}", s - 2)
                };
                return Err(Error::TruncationOverflow {
                    mode,
                    amplitude: top,
                });
            }
        }
        Ok(())
    }

    fn mix(&self, state: &mut RegisterState, mode: usize, adjoint: bool) -> Result<()> {
        let Some(mixing) = &self.mixing else {
            return Ok(());
        };
        let u = if adjoint {
            mixing[mode].adjoint()
        } else {
            mixing[mode].clone()
        };
        let trunc = self.config.mode_truncation;
        let mut lost: f64 = 0.0;
        for b in &mut state.branches {
            let (amps, l) = passive_transform(&b.amps, 2, &u, trunc);
            b.amps = amps;
            lost = lost.max(l);
        }
        if lost > self.config.leakage_limit {
            return Err(Error::TruncationOverflow {
                mode: format!("mode {mode}"),
                amplitude: lost,
            });
        }
        Ok(())
    }

    /// Phase-corrected exchange of the cavity with layout mode `mode`.
    pub fn swap_mode_cavity(&self, state: &mut RegisterState, mode: usize) -> Result<()> {
        self.check_mode(mode)?;
        let slot = mode_slot(mode);
        let (tc, tm) = (self.config.cavity_truncation, self.config.mode_truncation);
        for b in &state.branches {
            for (c, a) in &b.amps {
                if (c[CAVITY] >= tm || c[slot] >= tc) && a.norm_sqr() > 1e-24 {
                    return Err(Error::TruncationOverflow {
                        mode: "cavity".into(),
                        amplitude: a.norm(),
                    });
                }
            }
        }
        self.mix(state, mode, true)?;
        state.map_pure(|amps| {
            amps.iter()
                .map(|(c, a)| {
                    let mut t = c.clone();
                    t.swap(CAVITY, slot);
                    (t, *a)
                })
                .collect()
        });
        self.mix(state, mode, false)
    }

    /// Jaynes–Cummings evolution of CPB + cavity for `t` at CPB detuning
    /// `delta`, including cavity damping.
    fn jc(&self, state: &mut RegisterState, delta: f64, t: f64) {
        let g = self.config.g_cpb;
        let kappa = self.config.kappa;
        let tc = self.config.cavity_truncation;
        let mut blocks: BTreeMap<u32, Matrix2<C64>> = BTreeMap::new();
        state.map_pure(|amps| {
            let mut out = Amplitudes::new();
            for (c, a) in amps {
                let n = c[CPB] as u32 + c[CAVITY] as u32;
                if n == 0 {
                    *out.entry(c.clone()).or_default() += a;
                    continue;
                }
                let top_excited = c[CPB] == 1 && c[CAVITY] + 1 >= tc;
                if top_excited {
                    // |e, top⟩ has no partner inside the truncation.
                    let w = C64::new(delta, -kappa * (n as f64 - 1.0) / 2.0);
                    *out.entry(c.clone()).or_default() += a * (w * C64::new(0.0, -t)).exp();
                    continue;
                }
                let u = *blocks
                    .entry(n)
                    .or_insert_with(|| jc_block(n, delta, g, kappa, t));
                let col = c[CPB] as usize;
                let mut g_state = c.clone();
                g_state[CPB] = 0;
                g_state[CAVITY] = n as u8;
                let mut e_state = c.clone();
                e_state[CPB] = 1;
                e_state[CAVITY] = n as u8 - 1;
                *out.entry(g_state).or_default() += u[(0, col)] * a;
                *out.entry(e_state).or_default() += u[(1, col)] * a;
            }
            out.retain(|_, v| v.norm_sqr() > 0.0);
            out
        });
    }

    fn virtual_phase(&self, state: &mut RegisterState, slot: usize, phi: f64) {
        state.map_pure(|amps| {
            amps.iter()
                .map(|(c, a)| (c.clone(), a * C64::from_polar(1.0, phi * c[slot] as f64)))
                .collect()
        });
    }

    pub fn cpb_cavity_swap(&self, state: &mut RegisterState) -> Result<()> {
        if !(self.config.g_cpb > 0.0) {
            return Err(invalid("g_cpb", "CPB coupling is zero"));
        }
        self.jc(state, 0.0, PI / (2.0 * self.config.g_cpb));
        self.virtual_phase(state, CPB, PI / 2.0);
        self.virtual_phase(state, CAVITY, PI / 2.0);
        Ok(())
    }

    pub fn cpb_one_qubit(&self, state: &mut RegisterState, u: &Matrix2<C64>) {
        state.map_pure(|amps| {
            let mut out = Amplitudes::new();
            for (c, a) in amps {
                let col = c[CPB] as usize;
                for row in 0..2 {
                    let v = u[(row, col)] * a;
                    if v.norm_sqr() > 0.0 {
                        let mut t = c.clone();
                        t[CPB] = row as u8;
                        *out.entry(t).or_default() += v;
                    }
                }
            }
            out
        });
    }

    /// Calibrated conditional phase between CPB and cavity.
    pub fn cpb_cavity_conditional_phase(&self, state: &mut RegisterState) -> Result<CzCalibration> {
        let cal = CzCalibration::new(self.config.g_cpb)?;
        for (delta, t) in cal.windows {
            self.jc(state, delta, t);
        }
        self.virtual_phase(state, CAVITY, cal.cavity_correction);
        self.virtual_phase(state, CPB, cal.cpb_correction);
        Ok(cal)
    }

    /// Exact amplitude damping of the cavity over `t`, one branch per number
    /// of lost photons.
    pub fn cavity_decay(&self, state: &mut RegisterState, t: f64) {
        if self.config.kappa == 0.0 || t == 0.0 {
            return;
        }
        let eta = (-self.config.kappa * t).exp();
        let gamma = 1.0 - eta;
        let mut out = Vec::new();
        for b in state.branches.drain(..) {
            let max_n = b.amps.keys().map(|c| c[CAVITY]).max().unwrap_or(0);
            for m in 0..=max_n {
                let mut amps = Amplitudes::new();
                for (c, a) in &b.amps {
                    let n = c[CAVITY];
                    if n < m {
                        continue;
                    }
                    let k = binomial(n as u32, m as u32).sqrt()
                        * gamma.powf(m as f64 / 2.0)
                        * eta.powf((n - m) as f64 / 2.0);
                    if k == 0.0 {
                        continue;
                    }
                    let mut t = c.clone();
                    t[CAVITY] = n - m;
                    *amps.entry(t).or_default() += a * k;
                }
                let norm: f64 = amps.values().map(|a| a.norm_sqr()).sum();
                if norm * b.weight <= self.config.prune || norm == 0.0 {
                    continue;
                }
                let s = 1.0 / norm.sqrt();
                amps.values_mut().for_each(|a| *a *= s);
                out.push(Branch {
                    weight: b.weight * norm,
                    record: b.record.clone(),
                    amps,
                });
            }
        }
        state.branches = out;
    }

    /// Phase-flip mixture on every register mode: coherences between
    /// neighbouring Fock levels shrink by `e^{−Γt}`.
    pub fn dephasing_channel(&self, state: &mut RegisterState, rate: f64, t: f64) -> Result<()> {
        if !(rate >= 0.0) {
            return Err(invalid("rate", "must be non-negative"));
        }
        if rate * t == 0.0 {
            return Ok(());
        }
        let keep = 0.5 * (1.0 + (-rate * t).exp());
        for mode in 0..state.n_modes {
            let slot = mode_slot(mode);
            let mut out = Vec::new();
            for b in state.branches.drain(..) {
                let odd = b.amps.keys().any(|c| c[slot] % 2 == 1);
                let even = b.amps.keys().any(|c| c[slot] % 2 == 0);
                if !(odd && even) {
                    out.push(b);
                    continue;
                }
                let flipped: Amplitudes = b
                    .amps
                    .iter()
                    .map(|(c, a)| (c.clone(), if c[slot] % 2 == 1 { -a } else { *a }))
                    .collect();
                out.push(Branch {
                    weight: b.weight * (1.0 - keep),
                    record: b.record.clone(),
                    amps: flipped,
                });
                out.push(Branch {
                    weight: b.weight * keep,
                    ..b
                });
            }
            out.retain(|b| b.weight > self.config.prune);
            state.branches = out;
        }
        Ok(())
    }

    fn measure_cpb(&self, state: &mut RegisterState, mode: usize) -> f64 {
        let mut out = Vec::new();
        let mut p_one = 0.0;
        for b in state.branches.drain(..) {
            for outcome in 0..2u8 {
                let amps: Amplitudes = b
                    .amps
                    .iter()
                    .filter(|(c, _)| c[CPB] == outcome)
                    .map(|(c, a)| {
                        let mut t = c.clone();
                        t[CPB] = 0;
                        (t, *a)
                    })
                    .collect();
                let norm: f64 = amps.values().map(|a| a.norm_sqr()).sum();
                if norm == 0.0 {
                    continue;
                }
                if outcome == 1 {
                    p_one += b.weight * norm;
                }
                if b.weight * norm <= self.config.prune {
                    continue;
                }
                let s = 1.0 / norm.sqrt();
                let mut record = b.record.clone();
                record.push((mode, outcome));
                out.push(Branch {
                    weight: b.weight * norm,
                    record,
                    amps: amps.into_iter().map(|(c, a)| (c, a * s)).collect(),
                });
            }
        }
        state.branches = out;
        p_one
    }

    fn cool_wait(&self) -> Result<f64> {
        if !(self.config.kappa > 0.0) {
            return Err(invalid("kappa", "cooling needs cavity decay"));
        }
        Ok(self.config.cool_wait.unwrap_or(10.0 / self.config.kappa))
    }

    /// Cycles of swap + cavity decay until the mode holds less than
    /// `cool_target` of its initial occupation. Returns the cycle count.
    pub fn cool_mode(&self, state: &mut RegisterState, mode: usize) -> Result<usize> {
        self.check_mode(mode)?;
        let wait = self.cool_wait()?;
        let initial = state.mode_occupation(mode);
        let target = self.config.cool_target * initial;
        let mut cycles = 0;
        while initial > 0.0 && state.mode_occupation(mode) >= target {
            if cycles >= 1000 {
                return Err(invalid("cool_target", "not reached within 1000 cycles"));
            }
            self.swap_mode_cavity(state, mode)?;
            self.cavity_decay(state, wait);
            cycles += 1;
        }
        Ok(cycles)
    }

    /// Cycle count predicted for a perfect swap: the mode holds
    /// `c0, m0 η, c0 η, m0 η², …` after successive cycles, `η = e^{−κ t}`.
    pub fn predicted_cool_cycles(&self, mode_occupation: f64, cavity_occupation: f64) -> Result<usize> {
        let eta = (-self.config.kappa * self.cool_wait()?).exp();
        if mode_occupation == 0.0 {
            return Ok(0);
        }
        let target = self.config.cool_target * mode_occupation;
        let (mut in_mode, mut in_cavity) = (mode_occupation, cavity_occupation);
        for n in 1..=1000 {
            std::mem::swap(&mut in_mode, &mut in_cavity);
            in_cavity *= eta;
            if in_mode < target {
                return Ok(n);
            }
        }
        Err(invalid("cool_target", "not reached within 1000 cycles"))
    }

    fn write(&self, state: &mut RegisterState, mode: usize, prep: Option<QubitState>) -> Result<()> {
        if let Some(s) = prep {
            self.cpb_one_qubit(state, &s.preparation().matrix());
            self.cpb_cavity_swap(state)?;
        }
        self.swap_mode_cavity(state, mode)
    }

    fn apply(&self, state: &mut RegisterState, op: &GateOp) -> Result<OpInfo> {
        let mut info = OpInfo::default();
        match *op {
            GateOp::Write { mode, state: prep } => self.write(state, mode, prep)?,
            GateOp::Swap { mode } => self.swap_mode_cavity(state, mode)?,
            GateOp::CpbSwap => self.cpb_cavity_swap(state)?,
            GateOp::Load { mode } => {
                self.swap_mode_cavity(state, mode)?;
                self.cpb_cavity_swap(state)?;
            }
            GateOp::Store { mode } => {
                self.cpb_cavity_swap(state)?;
                self.swap_mode_cavity(state, mode)?;
            }
            GateOp::OneQubit { gate } => self.cpb_one_qubit(state, &gate.matrix()),
            GateOp::Cz => {
                self.cpb_cavity_conditional_phase(state)?;
            }
            GateOp::TwoQubit { control, target } => {
                if control == target {
                    return Err(invalid("target", "control and target coincide"));
                }
                self.swap_mode_cavity(state, control)?;
                self.cpb_cavity_swap(state)?;
                self.swap_mode_cavity(state, target)?;
                self.cpb_cavity_conditional_phase(state)?;
                self.swap_mode_cavity(state, target)?;
                self.cpb_cavity_swap(state)?;
                self.swap_mode_cavity(state, control)?;
            }
            GateOp::Wait { duration } => {
                if !(duration >= 0.0) {
                    return Err(invalid("duration", "must be non-negative"));
                }
                self.cavity_decay(state, duration);
            }
            GateOp::Dephase { rate, duration } => self.dephasing_channel(state, rate, duration)?,
            GateOp::Cool { mode } => {
                self.check_mode(mode)?;
                let predicted = self.predicted_cool_cycles(
                    state.mode_occupation(mode),
                    state.occupation(CAVITY),
                )?;
                info.cycles = Some(self.cool_mode(state, mode)?);
                info.predicted_cycles = Some(predicted);
            }
            GateOp::Measure { mode } => {
                self.swap_mode_cavity(state, mode)?;
                self.cpb_cavity_swap(state)?;
                info.outcome_probability = Some(self.measure_cpb(state, mode));
            }
            GateOp::BellCheck { a, b } => {
                self.check_mode(a)?;
                self.check_mode(b)?;
                info.fidelity = Some(state.bell_fidelity(a, b));
            }
        }
        state.branches.retain(|b| b.weight > 0.0);
        self.check_leakage(state)?;
        Ok(info)
    }

    /// Applies `ops` in order; the first failure aborts with its position.
    pub fn run_program(
        &self,
        state: &RegisterState,
        ops: &[GateOp],
    ) -> Result<(RegisterState, Vec<OpRecord>)> {
        let mut s = state.clone();
        let mut log = Vec::with_capacity(ops.len());
        for (index, op) in ops.iter().enumerate() {
            let info = self.apply(&mut s, op).map_err(|e| Error::Program {
                index,
                op: op.label(),
                source: Box::new(e),
            })?;
            log.push(OpRecord {
                index,
                op: op.label(),
                occupations: s.occupations(),
                leakage: self.leakage(&s),
                norm_deficit: s.norm_deficit(),
                fidelity: info.fidelity,
                cycles: info.cycles,
                predicted_cycles: info.predicted_cycles,
                outcome_probability: info.outcome_probability,
            });
        }
        Ok((s, log))
    }

    /// `|Tr(U_ideal† K)|² / 16` for the map `K` that `ops` induce on the
    /// CPB ⊗ cavity qubit subspace, with every register mode empty.
    pub fn process_fidelity(&self, ops: &[GateOp], ideal: &DMatrix<C64>) -> Result<f64> {
        let n = self.layout.len();
        let basis = |i: usize| -> Config {
            let mut c = vec![0u8; n + 2];
            c[CPB] = (i >> 1) as u8;
            c[CAVITY] = (i & 1) as u8;
            c
        };
        let mut k = DMatrix::from_element(4, 4, C64::new(0.0, 0.0));
        for col in 0..4 {
            let mut amps = Amplitudes::new();
            amps.insert(basis(col), C64::new(1.0, 0.0));
            let start = RegisterState::pure(n, amps)?;
            let (end, _) = self.run_program(&start, ops)?;
            if end.branches.len() != 1 {
                return Err(invalid("ops", "process fidelity needs a unitary or damped map"));
            }
            for row in 0..4 {
                k[(row, col)] = end.branches[0]
                    .amps
                    .get(&basis(row))
                    .copied()
                    .unwrap_or_default();
            }
        }
        let tr: C64 = (ideal.adjoint() * k).trace();
        Ok(tr.norm_sqr() / 16.0)
    }
}

/// `diag(1, 1, 1, −1)` in the `|cpb, cavity⟩` basis.
pub fn ideal_cz() -> DMatrix<C64> {
    let mut m = DMatrix::identity(4, 4);
    m[(3, 3)] = C64::new(-1.0, 0.0);
    m
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}
