//! Subcommand implementations.

use std::f64::consts::FRAC_1_SQRT_2;

use holoreg::exact::{ExactConfig, ExactEngine, SectorState};
use holoreg::modes::{centered_overlap_table, continuum_overlap, winding_to_k, RegisterLayout};
use holoreg::noise::{inhomogeneous_offsets, scaling_sweep, thermal_register_state, Experiment};
use holoreg::physics::{EnsembleGeometry, PhysicalConstants};
use holoreg::protocols::classical::{classical_echo_demo, ClassicalEnsemble};
use holoreg::protocols::{compile, compile_gates, echo_maintenance, PulseSchedule, Segment};
use holoreg::register::{
    Amplitudes, RegisterConfig, RegisterEngine, RegisterState, CAVITY,
};
use holoreg::{MatrixRecord, C64};

use crate::config::{
    CommandKind, EngineKind, ExperimentConfig, InitialState, SweepExperiment,
};
use crate::report::{
    Diagnostics, LayoutRecord, OpLog, OverlapResults, OverlapRow, Results, SimulateResults,
    SweepResults, Trace,
};

/// Failure classes, mapped to exit codes 2 and 1.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Simulation(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) => 2,
            Self::Simulation(_) => 1,
        }
    }
    pub fn message(&self) -> &str {
        match self {
            Self::Config(m) | Self::Simulation(m) => m,
        }
    }
}

fn setup<T>(r: holoreg::Result<T>) -> Result<T, Failure> {
    r.map_err(|e| Failure::Config(e.to_string()))
}

fn sim<T>(r: holoreg::Result<T>) -> Result<T, Failure> {
    r.map_err(|e| Failure::Simulation(e.to_string()))
}

pub fn run(cfg: &ExperimentConfig) -> Result<(Results, Diagnostics), Failure> {
    match cfg.command {
        CommandKind::Overlap => overlap(cfg),
        CommandKind::Simulate => match cfg.engine.kind {
            EngineKind::Exact => simulate_exact(cfg),
            EngineKind::Register => simulate_register(cfg),
            EngineKind::Classical => simulate_classical(cfg),
        },
        CommandKind::Sweep => sweep(cfg),
    }
}

fn geometry(cfg: &ExperimentConfig) -> Result<EnsembleGeometry, Failure> {
    setup(cfg.ensemble.build(cfg.device.length.value(), cfg.seed))
}

fn layout_record(layout: &RegisterLayout) -> LayoutRecord {
    LayoutRecord {
        windings: layout.windings().to_vec(),
        gram: MatrixRecord::from(layout.gram()),
        max_offdiagonal: layout.max_offdiagonal(),
    }
}

fn overlap(cfg: &ExperimentConfig) -> Result<(Results, Diagnostics), Failure> {
    let geom = geometry(cfg)?;
    let layout = setup(cfg.layout.build(&geom))?;
    let grid = cfg.overlap.clone().unwrap_or_default().grid();
    let discrete = centered_overlap_table(&geom, &grid);
    let table: Vec<OverlapRow> = grid
        .iter()
        .zip(&discrete)
        .map(|(&dw, m)| OverlapRow {
            delta_w: dw,
            continuum: continuum_overlap(dw),
            discrete_re: m.re,
            discrete_im: m.im,
        })
        .collect();
    let max_deviation = table
        .iter()
        .map(|r| (C64::new(r.discrete_re, r.discrete_im) - r.continuum).norm())
        .fold(0.0, f64::max);
    let diagnostics = Diagnostics {
        notes: vec!["discrete overlaps are centred on the sample midpoint".into()],
        ..Diagnostics::default()
    };
    Ok((
        Results::Overlap(OverlapResults {
            table,
            max_deviation,
            layout: layout_record(&layout),
        }),
        diagnostics,
    ))
}

fn offsets(cfg: &ExperimentConfig) -> Result<Vec<f64>, Failure> {
    let sigma = cfg.noise.sigma_inh.value();
    if sigma > 0.0 {
        setup(inhomogeneous_offsets(cfg.ensemble.n_spins, sigma, cfg.seed, 0))
    } else {
        Ok(vec![0.0; cfg.ensemble.n_spins])
    }
}

fn initial_amplitudes(initial: InitialState) -> Option<(C64, C64)> {
    let h = FRAC_1_SQRT_2;
    match initial {
        InitialState::Vacuum => None,
        InitialState::CavityOne => Some((C64::new(0.0, 0.0), C64::new(1.0, 0.0))),
        InitialState::CavityPlus => Some((C64::new(h, 0.0), C64::new(h, 0.0))),
    }
}

fn simulate_exact(cfg: &ExperimentConfig) -> Result<(Results, Diagnostics), Failure> {
    let constants = PhysicalConstants::default();
    let geom = geometry(cfg)?;
    let layout = setup(cfg.layout.build(&geom))?;
    let device = cfg.device.params();
    let idle = cfg
        .engine
        .idle_detuning
        .map(|q| q.value())
        .expect("resolved configs carry an idle detuning");
    let sigma = cfg.noise.sigma_inh.value();
    let config = ExactConfig {
        max_excitations: cfg.engine.max_excitations,
        idle_detuning: idle,
        kappa: device.kappa,
        g_cpb: device.g_cpb,
        inhomogeneity: if sigma > 0.0 { offsets(cfg)? } else { Vec::new() },
        max_field_difference: device.max_field_difference,
        dense_limit: cfg.engine.dense_limit,
        idle_coupling: cfg.engine.idle_coupling,
        ..ExactConfig::for_geometry(&geom)
    };
    let engine = setup(ExactEngine::new(constants, geom, config))?;
    let program = cfg.program.as_ref().expect("validated").program();
    let opts = engine.compile_options(
        cfg.engine.gradient_duration.value(),
        cfg.engine.drive_duration.value(),
    );
    let compiled = setup(compile(&program, &layout, &constants, &opts))?;

    let initial: SectorState = match initial_amplitudes(cfg.engine.initial) {
        None => engine.vacuum(),
        Some((a, b)) => setup(engine.cavity_qubit(a, b))?,
    };
    let mut state = initial.clone();
    let mut ops = Vec::with_capacity(program.ops.len());
    for (index, range) in compiled.op_ranges.iter().enumerate() {
        let mut piece = setup(PulseSchedule::from_segments(
            compiled.schedule.segments()[range.clone()].to_vec(),
        ))?;
        if let Some(interval) = cfg.noise.echo_interval {
            piece = setup(echo_maintenance(
                &piece,
                interval.value(),
                cfg.noise.eps1,
                cfg.noise.eps2,
                idle,
            ))?;
        }
        state = engine.evolve(&state, &piece).map_err(|e| {
            Failure::Simulation(format!("op {index} ({:?}) failed: {e}", program.ops[index]))
        })?;
        let mut occupations = vec![state.cpb_population(), state.cavity_occupation()];
        occupations.extend(engine.layout_occupations(&state, &layout));
        ops.push(OpLog {
            index,
            op: op_name(&program.ops[index]),
            occupations,
            norm_deficit: state.norm_deficit(),
            leakage: None,
            fidelity: None,
            cycles: None,
            predicted_cycles: None,
            outcome_probability: None,
        });
    }
    let round_trip_fidelity =
        (cfg.engine.initial != InitialState::Vacuum).then(|| state.fidelity(&initial));
    let diagnostics = Diagnostics {
        propagation: Some(state.stats()),
        hilbert_dimension: Some(engine.basis().dim()),
        notes: Vec::new(),
    };
    Ok((
        Results::Simulate(SimulateResults {
            engine: EngineKind::Exact,
            layout: Some(layout_record(&layout)),
            ops,
            round_trip_fidelity,
            bell_fidelity: None,
            trace: None,
            revival: None,
        }),
        diagnostics,
    ))
}

fn op_name(op: &holoreg::protocols::ProgramOp) -> String {
    let debug = format!("{op:?}");
    let head = debug.split([' ', '{', '(']).next().unwrap_or("");
    let mut out = String::new();
    for (i, c) in head.chars().enumerate() {
        if c.is_uppercase() {
            if i > 0 {
                out.push('_');
            }
            out.extend(c.to_lowercase());
        } else {
            out.push(c);
        }
    }
    out
}

fn simulate_register(cfg: &ExperimentConfig) -> Result<(Results, Diagnostics), Failure> {
    let constants = PhysicalConstants::default();
    let geom = geometry(cfg)?;
    let layout = setup(cfg.layout.build(&geom))?;
    let device = cfg.device.params();
    let config = RegisterConfig {
        mode_truncation: cfg.engine.truncation,
        cavity_truncation: cfg.engine.truncation,
        kappa: device.kappa,
        g_cpb: device.g_cpb,
        crosstalk: cfg.engine.crosstalk,
        cool_target: cfg.engine.cool_target,
        ..RegisterConfig::default()
    };
    let engine = setup(RegisterEngine::new(layout.clone(), config.clone()))?;
    let program = cfg.program.as_ref().expect("validated").program();
    let gates = setup(compile_gates(&program, &layout))?;

    let n = layout.len();
    let p = setup(
        cfg.noise
            .noise_config(cfg.seed)
            .excitation_probability(&constants, device.omega_c),
    )?;
    let amplitudes = initial_amplitudes(cfg.engine.initial);
    let initial = match amplitudes {
        _ if p > 0.0 => setup(thermal_register_state(
            &layout,
            p,
            cfg.engine.truncation,
            config.prune,
        ))?,
        None => engine.vacuum(),
        Some((a, b)) => {
            let mut amps = Amplitudes::new();
            for (photons, amp) in [(0u8, a), (1, b)] {
                if amp.norm() > 0.0 {
                    let mut c = vec![0u8; n + 2];
                    c[CAVITY] = photons;
                    amps.insert(c, amp);
                }
            }
            setup(RegisterState::pure(n, amps))?
        }
    };
    let (end, log) = sim(engine.run_program(&initial, &gates))?;
    let round_trip_fidelity = amplitudes.map(|(a, b)| {
        let rho = end.reduced_density(CAVITY, 2);
        let psi = [a, b];
        let mut f = C64::new(0.0, 0.0);
        for i in 0..2 {
            for j in 0..2 {
                f += psi[i].conj() * rho[(i, j)] * psi[j];
            }
        }
        f.re
    });
    let bell_fidelity = gates
        .iter()
        .zip(&log)
        .filter(|(g, _)| matches!(g, holoreg::register::GateOp::BellCheck { .. }))
        .filter_map(|(_, r)| r.fidelity)
        .next_back();
    let ops = log
        .into_iter()
        .map(|r| OpLog {
            index: r.index,
            op: r.op,
            occupations: r.occupations,
            norm_deficit: r.norm_deficit,
            leakage: Some(r.leakage),
            fidelity: r.fidelity,
            cycles: r.cycles,
            predicted_cycles: r.predicted_cycles,
            outcome_probability: r.outcome_probability,
        })
        .collect();
    let mut notes = Vec::new();
    if p > 0.0 {
        notes.push(format!("register modes start thermal with mean occupation {p:e}"));
    }
    Ok((
        Results::Simulate(SimulateResults {
            engine: EngineKind::Register,
            layout: Some(layout_record(&layout)),
            ops,
            round_trip_fidelity,
            bell_fidelity,
            trace: None,
            revival: None,
        }),
        Diagnostics {
            notes,
            ..Diagnostics::default()
        },
    ))
}

fn simulate_classical(cfg: &ExperimentConfig) -> Result<(Results, Diagnostics), Failure> {
    let constants = PhysicalConstants::default();
    let geom = geometry(cfg)?;
    let length = geom.length();
    let c = cfg.classical.as_ref().expect("validated");
    let tau = cfg.engine.gradient_duration.value();
    let mut segments = Vec::new();
    for &w in &c.store {
        segments.push(Segment::SpinPulse {
            angle: c.tilt,
            phase: 0.0,
        });
        segments.push(Segment::Gradient {
            delta_k: winding_to_k(w as f64, length),
            duration: tau,
        });
    }
    segments.push(Segment::Gradient {
        delta_k: -winding_to_k(c.retrieve as f64, length),
        duration: tau,
    });
    let schedule = setup(PulseSchedule::from_segments(segments))?;
    let mut ensemble = setup(ClassicalEnsemble::new(geom, offsets(cfg)?))?;
    let trace = sim(classical_echo_demo(&constants, &mut ensemble, &schedule, c.samples))?;
    let first = trace.signal[1];
    let last = *trace.signal.last().expect("trace has samples");
    let revival = (first > 0.0).then(|| last / first);
    Ok((
        Results::Simulate(SimulateResults {
            engine: EngineKind::Classical,
            layout: None,
            ops: Vec::new(),
            round_trip_fidelity: None,
            bell_fidelity: None,
            trace: Some(Trace {
                times: trace.times,
                values: trace.signal,
            }),
            revival,
        }),
        Diagnostics {
            notes: vec!["signal is |beta_0|, the collective k = 0 amplitude".into()],
            ..Diagnostics::default()
        },
    ))
}

fn sweep(cfg: &ExperimentConfig) -> Result<(Results, Diagnostics), Failure> {
    let s = cfg.sweep.as_ref().expect("validated");
    let length = cfg.device.length.value();
    let mut notes = Vec::new();
    let experiment = match s.experiment {
        SweepExperiment::RabiVsN => Experiment::RabiVsN {
            g_bar: cfg.ensemble.g_bar(),
            length,
        },
        SweepExperiment::OverlapVsN => Experiment::OverlapVsN {
            windings: holoreg::modes::register_windings(cfg.layout.count, cfg.layout.scheme),
            profile: cfg.ensemble.profile(),
            length,
        },
        SweepExperiment::EchoGainVsEps => {
            notes.push(
                "inhomogeneous mode is normalized before projecting; echo errors eps1 = eps2 = x"
                    .into(),
            );
            Experiment::EchoGainVsEps {
                n_spins: cfg.ensemble.n_spins,
                winding: s.winding,
                sigma_t: s.sigma_t,
            }
        }
    };
    let result = scaling_sweep(
        &PhysicalConstants::default(),
        &experiment,
        &s.grid,
        s.shots,
        cfg.seed,
    )
    .map_err(|e| match e {
        holoreg::Error::DegenerateGrid(_) | holoreg::Error::InvalidParameter { .. } => {
            Failure::Config(e.to_string())
        }
        other => Failure::Simulation(other.to_string()),
    })?;
    Ok((
        Results::Sweep(SweepResults {
            experiment: s.experiment,
            points: result.points,
            fit: result.fit,
        }),
        Diagnostics {
            notes,
            ..Diagnostics::default()
        },
    ))
}
