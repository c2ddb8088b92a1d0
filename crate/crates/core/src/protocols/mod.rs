//! Register programs, their lowering to pulse schedules and gate sequences,
//! echo insertion, and the classical spin-ensemble simulator.
//!
//! # Phase bookkeeping
//!
//! The frame rotates with the cavity, so photons and an idle CPB accrue no
//! phase. Idle spins sit `Δ_idle` away from the cavity and every spin-wave
//! excitation, whatever its wavenumber, picks up `−Δ_idle t`. The compiler
//! keeps a single clock `Φ` of that phase and maintains the invariant that a
//! qubit stored in the spins carries exactly `e^{iΦ}` on its `|1⟩` component.
//! Each resonance window is wrapped in cavity frame shifts that absorb both
//! the clock and the `−i` of a full exchange, so a write followed by a read
//! is the identity.

pub mod classical;
pub mod gates;
pub mod schedule;

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::modes::{gradient_pulse_params, winding_to_k, RegisterLayout};
use crate::physics::PhysicalConstants;
use crate::register::GateOp;

pub use gates::{CzCalibration, OneQubitGate, QubitState};
pub use schedule::{DetuningProfile, PulseSchedule, Segment, Target};

use gates::CpbPulse;

/// `[(−k), window, (+k)]`; a `k = 0` swap is the bare window.
pub fn swap_schedule(
    k: f64,
    gradient_duration: f64,
    window: f64,
    profile: DetuningProfile,
) -> Result<PulseSchedule> {
    let mut s = PulseSchedule::new();
    if k != 0.0 {
        s.push(Segment::Gradient {
            delta_k: -k,
            duration: gradient_duration,
        })?;
    }
    s.push(Segment::Resonance {
        target: Target::Spins,
        duration: window,
        profile,
    })?;
    if k != 0.0 {
        s.push(Segment::Gradient {
            delta_k: k,
            duration: gradient_duration,
        })?;
    }
    Ok(s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "op")]
pub enum ProgramOp {
    /// Move the cavity content into the qubit's mode; with `state`, first
    /// prepare it on the CPB and hand it to the cavity.
    Write {
        qubit: String,
        #[serde(default)]
        state: Option<QubitState>,
    },
    /// Move the qubit's mode back into the cavity.
    Retrieve { qubit: String },
    /// Bring the qubit to the CPB through the cavity.
    Load { qubit: String },
    /// Return the CPB content to the qubit's mode.
    Store { qubit: String },
    Gate { gate: OneQubitGate },
    /// Conditional phase between the CPB and the cavity.
    Cz,
    TwoQubit { control: String, target: String },
    Wait { duration: f64 },
    Cool { qubit: String },
    /// Retrieve, load and projectively measure (register engine only).
    Measure { qubit: String },
    /// Bell-state fidelity of two stored qubits (register engine only).
    BellCheck { a: String, b: String },
}

/// Named qubits mapped onto layout modes plus the op list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegisterProgram {
    pub qubits: BTreeMap<String, usize>,
    pub ops: Vec<ProgramOp>,
}

impl RegisterProgram {
    pub fn new(qubits: impl IntoIterator<Item = (String, usize)>, ops: Vec<ProgramOp>) -> Self {
        Self {
            qubits: qubits.into_iter().collect(),
            ops,
        }
    }

    pub fn validate(&self, layout: &RegisterLayout) -> Result<()> {
        let mut seen = BTreeMap::new();
        for (name, &mode) in &self.qubits {
            if mode >= layout.len() {
                return Err(invalid(
                    "qubits",
                    format!("qubit `{name}` maps to mode {mode}, layout has {}", layout.len()),
                ));
            }
            if let Some(other) = seen.insert(mode, name) {
                return Err(invalid(
                    "qubits",
                    format!("`{other}` and `{name}` share mode {mode}"),
                ));
            }
        }
        for op in &self.ops {
            for q in op_qubits(op) {
                self.mode(q)?;
            }
            if let ProgramOp::Wait { duration } = op {
                if !(*duration >= 0.0) {
                    return Err(invalid("duration", "wait must be non-negative"));
                }
            }
        }
        Ok(())
    }

    pub fn mode(&self, qubit: &str) -> Result<usize> {
        self.qubits
            .get(qubit)
            .copied()
            .ok_or_else(|| invalid("qubit", format!("unknown qubit `{qubit}`")))
    }

    /// Bell-pair preparation on qubits `a`, `b`, ending with both measured.
    pub fn bell_pair(a: &str, b: &str, mode_a: usize, mode_b: usize) -> Self {
        let (a, b) = (a.to_string(), b.to_string());
        Self::new(
            [(a.clone(), mode_a), (b.clone(), mode_b)],
            vec![
                ProgramOp::Write {
                    qubit: a.clone(),
                    state: Some(QubitState::plus()),
                },
                ProgramOp::Write {
                    qubit: b.clone(),
                    state: Some(QubitState::plus()),
                },
                ProgramOp::TwoQubit {
                    control: a.clone(),
                    target: b.clone(),
                },
                ProgramOp::Load { qubit: b.clone() },
                ProgramOp::Gate {
                    gate: OneQubitGate::Hadamard,
                },
                ProgramOp::Store { qubit: b.clone() },
                ProgramOp::BellCheck {
                    a: a.clone(),
                    b: b.clone(),
                },
                ProgramOp::Measure { qubit: a },
                ProgramOp::Measure { qubit: b },
            ],
        )
    }
}

fn op_qubits(op: &ProgramOp) -> Vec<&str> {
    match op {
        ProgramOp::Write { qubit, .. }
        | ProgramOp::Retrieve { qubit }
        | ProgramOp::Load { qubit }
        | ProgramOp::Store { qubit }
        | ProgramOp::Cool { qubit }
        | ProgramOp::Measure { qubit } => vec![qubit],
        ProgramOp::TwoQubit { control, target } => vec![control, target],
        ProgramOp::BellCheck { a, b } => vec![a, b],
        ProgramOp::Gate { .. } | ProgramOp::Cz | ProgramOp::Wait { .. } => vec![],
    }
}

/// Hardware timings used when lowering to pulses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompileOptions {
    pub length: f64,
    /// Collective exchange rate `√N ḡ`.
    pub collective_rabi: f64,
    pub idle_detuning: f64,
    pub g_cpb: f64,
    pub gradient_duration: f64,
    pub drive_duration: f64,
    pub max_field_difference: Option<f64>,
    pub window_profile: DetuningProfile,
    /// Frequency pull of the cavity by the idle spins, `≈ (√N ḡ)² / Δ_idle`.
    /// The compiler undoes the phase it accumulates with cavity frame shifts
    /// before every exchange and at the end of every op.
    pub dispersive_shift: f64,
}

/// A schedule plus the segment range emitted for each program op.
#[derive(Debug, Clone, PartialEq)]
pub struct CompiledSchedule {
    pub schedule: PulseSchedule,
    pub op_ranges: Vec<std::ops::Range<usize>>,
}

struct Lowering<'a> {
    opts: &'a CompileOptions,
    constants: &'a PhysicalConstants,
    out: PulseSchedule,
    clock: f64,
    /// Cavity phase accumulated from the dispersive pull, not yet undone.
    drift: f64,
}

impl Lowering<'_> {
    fn push(&mut self, seg: Segment) -> Result<()> {
        let spins_idle = !matches!(
            seg,
            Segment::Resonance {
                target: Target::Spins,
                ..
            }
        );
        if spins_idle {
            self.clock -= self.opts.idle_detuning * seg.duration();
            self.drift += self.opts.dispersive_shift * seg.duration();
        } else if let Segment::Resonance {
            duration, profile, ..
        } = seg
        {
            self.clock -= profile.mean() * duration;
        }
        self.out.push(seg)
    }

    fn flush_drift(&mut self) -> Result<()> {
        if self.drift != 0.0 {
            let phi = self.drift;
            self.drift = 0.0;
            self.out.push(Segment::FrameShift {
                cavity: -phi,
                spins: 0.0,
                cpb: 0.0,
            })?;
        }
        Ok(())
    }

    fn gradient(&mut self, delta_k: f64) -> Result<()> {
        if delta_k == 0.0 {
            return Ok(());
        }
        let p = gradient_pulse_params(
            self.constants,
            self.opts.length,
            delta_k,
            self.opts.gradient_duration,
        )?;
        if let Some(limit) = self.opts.max_field_difference {
            if p.field_difference.abs() > limit {
                return Err(Error::GradientLimit {
                    required: p.field_difference.abs(),
                    limit,
                });
            }
        }
        self.push(Segment::Gradient {
            delta_k,
            duration: self.opts.gradient_duration,
        })
    }

    fn spin_swap(&mut self, winding: i64) -> Result<()> {
        let k = winding_to_k(winding as f64, self.opts.length);
        self.gradient(-k)?;
        let phi = self.clock;
        let drift = std::mem::take(&mut self.drift);
        self.push(Segment::FrameShift {
            cavity: phi + PI / 2.0 - drift,
            spins: 0.0,
            cpb: 0.0,
        })?;
        self.push(Segment::Resonance {
            target: Target::Spins,
            duration: PI / (2.0 * self.opts.collective_rabi),
            profile: self.opts.window_profile,
        })?;
        self.push(Segment::FrameShift {
            cavity: -phi + PI / 2.0,
            spins: 0.0,
            cpb: 0.0,
        })?;
        self.gradient(k)
    }

    fn cpb_swap(&mut self) -> Result<()> {
        self.flush_drift()?;
        self.push(Segment::Resonance {
            target: Target::Cpb,
            duration: PI / (2.0 * self.opts.g_cpb),
            profile: DetuningProfile::on_resonance(),
        })?;
        self.push(Segment::FrameShift {
            cavity: PI / 2.0,
            spins: 0.0,
            cpb: PI / 2.0,
        })
    }

    fn gate(&mut self, gate: OneQubitGate) -> Result<()> {
        for p in gate.pulses() {
            match p {
                CpbPulse::Drive { angle, phase } => self.push(Segment::CpbDrive {
                    phase,
                    angle,
                    duration: self.opts.drive_duration,
                })?,
                CpbPulse::Virtual { phi } => self.push(Segment::FrameShift {
                    cavity: 0.0,
                    spins: 0.0,
                    cpb: phi,
                })?,
            }
        }
        Ok(())
    }

    fn cz(&mut self) -> Result<()> {
        let cal = CzCalibration::new(self.opts.g_cpb)?;
        self.flush_drift()?;
        for (detuning, duration) in cal.windows {
            self.push(Segment::Resonance {
                target: Target::Cpb,
                duration,
                profile: DetuningProfile::Square { detuning },
            })?;
        }
        self.push(Segment::FrameShift {
            cavity: cal.cavity_correction,
            spins: 0.0,
            cpb: cal.cpb_correction,
        })
    }
}

/// Lowers a program to pulses for the exact engine.
pub fn compile(
    program: &RegisterProgram,
    layout: &RegisterLayout,
    constants: &PhysicalConstants,
    opts: &CompileOptions,
) -> Result<CompiledSchedule> {
    program.validate(layout)?;
    if !(opts.collective_rabi > 0.0) {
        return Err(invalid("collective_rabi", "must be positive"));
    }
    let needs_cpb = program.ops.iter().any(|op| {
        matches!(
            op,
            ProgramOp::Write { state: Some(_), .. }
                | ProgramOp::Load { .. }
                | ProgramOp::Store { .. }
                | ProgramOp::Gate { .. }
                | ProgramOp::Cz
                | ProgramOp::TwoQubit { .. }
        )
    });
    if needs_cpb && !(opts.g_cpb > 0.0) {
        return Err(invalid("g_cpb", "program uses the CPB but its coupling is zero"));
    }
    let mut low = Lowering {
        opts,
        constants,
        out: PulseSchedule::new(),
        clock: 0.0,
        drift: 0.0,
    };
    let mut op_ranges = Vec::with_capacity(program.ops.len());
    for (index, op) in program.ops.iter().enumerate() {
        let start = low.out.len();
        let w = |q: &str| -> Result<i64> { Ok(layout.windings()[program.mode(q)?]) };
        let res: Result<()> = (|| {
            match op {
                ProgramOp::Write { qubit, state } => {
                    if let Some(s) = state {
                        low.gate(s.preparation())?;
                        low.cpb_swap()?;
                    }
                    low.spin_swap(w(qubit)?)
                }
                ProgramOp::Retrieve { qubit } => low.spin_swap(w(qubit)?),
                ProgramOp::Load { qubit } => {
                    low.spin_swap(w(qubit)?)?;
                    low.cpb_swap()
                }
                ProgramOp::Store { qubit } => {
                    low.cpb_swap()?;
                    low.spin_swap(w(qubit)?)
                }
                ProgramOp::Gate { gate } => low.gate(*gate),
                ProgramOp::Cz => low.cz(),
                ProgramOp::TwoQubit { control, target } => {
                    low.spin_swap(w(control)?)?;
                    low.cpb_swap()?;
                    low.spin_swap(w(target)?)?;
                    low.cz()?;
                    low.spin_swap(w(target)?)?;
                    low.cpb_swap()?;
                    low.spin_swap(w(control)?)
                }
                ProgramOp::Wait { duration } => low.push(Segment::Wait {
                    duration: *duration,
                }),
                ProgramOp::Cool { .. } | ProgramOp::Measure { .. } => Err(
                    Error::UnsupportedSegment(format!("{op:?} needs the register engine")),
                ),
                ProgramOp::BellCheck { .. } => Ok(()),
            }
        })()
        .and_then(|_| low.flush_drift());
        res.map_err(|e| Error::Program {
            index,
            op: format!("{op:?}"),
            source: Box::new(e),
        })?;
        op_ranges.push(start..low.out.len());
    }
    Ok(CompiledSchedule {
        schedule: low.out,
        op_ranges,
    })
}

/// Lowers a program to register-engine gates.
pub fn compile_gates(program: &RegisterProgram, layout: &RegisterLayout) -> Result<Vec<GateOp>> {
    program.validate(layout)?;
    program
        .ops
        .iter()
        .map(|op| {
            Ok(match op {
                ProgramOp::Write { qubit, state } => GateOp::Write {
                    mode: program.mode(qubit)?,
                    state: *state,
                },
                ProgramOp::Retrieve { qubit } => GateOp::Swap {
                    mode: program.mode(qubit)?,
                },
                ProgramOp::Load { qubit } => GateOp::Load {
                    mode: program.mode(qubit)?,
                },
                ProgramOp::Store { qubit } => GateOp::Store {
                    mode: program.mode(qubit)?,
                },
                ProgramOp::Gate { gate } => GateOp::OneQubit { gate: *gate },
                ProgramOp::Cz => GateOp::Cz,
                ProgramOp::TwoQubit { control, target } => GateOp::TwoQubit {
                    control: program.mode(control)?,
                    target: program.mode(target)?,
                },
                ProgramOp::Wait { duration } => GateOp::Wait {
                    duration: *duration,
                },
                ProgramOp::Cool { qubit } => GateOp::Cool {
                    mode: program.mode(qubit)?,
                },
                ProgramOp::Measure { qubit } => GateOp::Measure {
                    mode: program.mode(qubit)?,
                },
                ProgramOp::BellCheck { a, b } => GateOp::BellCheck {
                    a: program.mode(a)?,
                    b: program.mode(b)?,
                },
            })
        })
        .collect()
}

/// Replaces every wait of at least `2T` by Hahn-echo pairs
/// `[wait T, echo ε₁, wait T, echo ε₂]` and a spin frame shift that restores
/// the idle phase the pair refocused away.
pub fn echo_maintenance(
    schedule: &PulseSchedule,
    interval: f64,
    eps1: f64,
    eps2: f64,
    idle_detuning: f64,
) -> Result<PulseSchedule> {
    if !(interval > 0.0) {
        return Err(invalid("interval", "echo interval must be positive"));
    }
    if schedule
        .segments()
        .iter()
        .any(|s| matches!(s, Segment::Echo { .. }))
    {
        return Err(invalid(
            "schedule",
            "schedule already contains echo pulses",
        ));
    }
    let mut out = PulseSchedule::new();
    for seg in schedule.segments() {
        let Segment::Wait { duration } = *seg else {
            out.push(*seg)?;
            continue;
        };
        let pairs = (duration / (2.0 * interval)).floor() as usize;
        for _ in 0..pairs {
            out.push(Segment::Wait { duration: interval })?;
            out.push(Segment::Echo {
                error: eps1,
                phase: 0.0,
            })?;
            out.push(Segment::Wait { duration: interval })?;
            out.push(Segment::Echo {
                error: eps2,
                phase: 0.0,
            })?;
            out.push(Segment::FrameShift {
                cavity: 0.0,
                spins: -idle_detuning * 2.0 * interval,
                cpb: 0.0,
            })?;
        }
        let rest = duration - pairs as f64 * 2.0 * interval;
        if rest > 0.0 {
            out.push(Segment::Wait { duration: rest })?;
        }
    }
    Ok(out)
}
