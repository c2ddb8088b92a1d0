//! Property suites for the structural invariants of each module.

use std::f64::consts::PI;

use holoreg::exact::{BasisState, ExactConfig, ExactEngine};
use holoreg::modes::{
    gram_matrix, mode_overlap, register_windings, select_register_modes, winding_to_k,
    RegisterLayout, Scheme,
};
use holoreg::noise::{
    echo_error_injection_with_phase, finite_polarization_commutator, inhomogeneous_offsets,
    random_excitations,
};
use holoreg::physics::{
    build_ensemble, collective_rabi, larmor_frequency, CouplingProfile, EnsembleGeometry,
    EnsembleSpec, PhysicalConstants, Placement,
};
use holoreg::protocols::gates::{OneQubitGate, QubitState};
use holoreg::protocols::{
    compile, CompileOptions, DetuningProfile, ProgramOp, PulseSchedule, RegisterProgram, Segment,
    Target,
};
use holoreg::register::{mode_slot, Amplitudes, GateOp, RegisterConfig, RegisterEngine, RegisterState, CAVITY};
use holoreg::C64;
use proptest::prelude::*;

const LENGTH: f64 = 0.0275;

fn ensemble(n: usize, profile: CouplingProfile, placement: Placement, seed: u64) -> EnsembleGeometry {
    build_ensemble(
        &EnsembleSpec {
            n_spins: n,
            length: LENGTH,
            profile,
            placement,
            g_bar: 2.0 * PI * 1e5,
        },
        seed,
    )
    .unwrap()
}

fn any_profile() -> impl Strategy<Value = CouplingProfile> {
    prop_oneof![
        Just(CouplingProfile::Uniform),
        Just(CouplingProfile::CavityMode),
        prop::collection::vec(0.1f64..1.0, 2..6).prop_map(CouplingProfile::Table),
    ]
}

fn any_placement() -> impl Strategy<Value = Placement> {
    prop_oneof![Just(Placement::Grid), Just(Placement::UniformRandom)]
}

fn complex() -> impl Strategy<Value = C64> {
    (-1.0f64..1.0, -1.0f64..1.0).prop_map(|(re, im)| C64::new(re, im))
}

fn qubit_state() -> impl Strategy<Value = QubitState> {
    (0.0f64..PI, -PI..PI).prop_map(|(theta, phi)| QubitState { theta, phi })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn larmor_is_linear_in_field(b in 1e-3f64..2.0) {
        let c = PhysicalConstants::default();
        let one = larmor_frequency(&c, 1.0).unwrap();
        let w = larmor_frequency(&c, b).unwrap();
        prop_assert!((w / (one * b) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn collective_rabi_is_sqrt_n_for_equal_couplings(n in 1usize..400) {
        let g = ensemble(n, CouplingProfile::Uniform, Placement::Grid, 0);
        let expected = (n as f64).sqrt() * g.g_bar();
        prop_assert!((collective_rabi(&g) / expected - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ensembles_are_reproducible(seed in any::<u64>(), n in 1usize..200, profile in any_profile()) {
        let a = ensemble(n, profile.clone(), Placement::UniformRandom, seed);
        let b = ensemble(n, profile, Placement::UniformRandom, seed);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn overlap_is_conjugate_symmetric(
        n in 1usize..300,
        profile in any_profile(),
        placement in any_placement(),
        seed in any::<u64>(),
        dw in -20.0f64..20.0,
    ) {
        let g = ensemble(n, profile, placement, seed);
        let dk = winding_to_k(dw, LENGTH);
        let plus = mode_overlap(&g, dk);
        let minus = mode_overlap(&g, -dk);
        prop_assert!((plus - minus.conj()).norm() < 1e-12);
    }

    /// On cell-centred grid sites `z = (q + ½)L/N` the alias at `Δw = mN`
    /// has unit magnitude and phase `(−1)^m`.
    #[test]
    fn grid_aliases_have_unit_overlap(n in 2usize..200, m in -3i64..=3) {
        prop_assume!(m != 0);
        let g = ensemble(n, CouplingProfile::Uniform, Placement::Grid, 0);
        let alias = mode_overlap(&g, winding_to_k((m * n as i64) as f64, LENGTH));
        let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
        prop_assert!((alias - C64::new(sign, 0.0)).norm() < 1e-9);
        let half = (n / 2).max(1) as i64 + (n % 2) as i64;
        prop_assert!(RegisterLayout::discrete(&g, vec![0, half], 1.0).is_err());
    }

    #[test]
    fn gram_matrices_are_positive_semidefinite(
        n in 1usize..300,
        profile in any_profile(),
        placement in any_placement(),
        seed in any::<u64>(),
        ws in prop::collection::vec(-30.0f64..30.0, 1..7),
    ) {
        let g = ensemble(n, profile, placement, seed);
        let ks: Vec<f64> = ws.iter().map(|&w| winding_to_k(w, LENGTH)).collect();
        let gram = gram_matrix(&g, &ks);
        prop_assert!((gram.clone() - gram.adjoint()).norm() < 1e-12);
        let min = gram.symmetric_eigenvalues().min();
        prop_assert!(min >= -1e-9, "min eigenvalue {}", min);
    }
}

fn exact_engine(n: usize, kappa: f64) -> ExactEngine {
    let geom = ensemble(n, CouplingProfile::CavityMode, Placement::UniformRandom, 5);
    let config = ExactConfig {
        kappa,
        g_cpb: 2.0 * PI * 2e5,
        idle_detuning: 2.0 * PI * 3e6,
        ..ExactConfig::for_geometry(&geom)
    };
    ExactEngine::new(PhysicalConstants::default(), geom, config).unwrap()
}

fn segment() -> impl Strategy<Value = Segment> {
    let t = 0.0f64..2e-6;
    prop_oneof![
        (-3000.0f64..3000.0, 1e-8f64..1e-7).prop_map(|(delta_k, duration)| Segment::Gradient { delta_k, duration }),
        (t.clone(), -1e7f64..1e7, any::<bool>()).prop_map(|(duration, detuning, spins)| Segment::Resonance {
            target: if spins { Target::Spins } else { Target::Cpb },
            duration,
            profile: DetuningProfile::Square { detuning },
        }),
        (t.clone(), -1e7f64..1e7, -1e7f64..1e7).prop_map(|(duration, start, end)| Segment::Resonance {
            target: Target::Spins,
            duration,
            profile: DetuningProfile::Ramp { start, end },
        }),
        (-PI..PI, 0.0f64..PI, 0.0f64..1e-8).prop_map(|(phase, angle, duration)| Segment::CpbDrive { phase, angle, duration }),
        (-0.4f64..0.4, -PI..PI).prop_map(|(error, phase)| Segment::Echo { error, phase }),
        t.prop_map(|duration| Segment::Wait { duration }),
        (-PI..PI, -PI..PI, -PI..PI).prop_map(|(cavity, spins, cpb)| Segment::FrameShift { cavity, spins, cpb }),
    ]
}

/// Random normalised single-excitation state over cavity, CPB and spins.
fn sector_state(engine: &ExactEngine, raw: &[C64]) -> holoreg::exact::SectorState {
    let n = engine.geometry().n_spins();
    let mut parts = vec![
        (BasisState::vacuum(), raw[0]),
        (BasisState::photons(1), raw[1]),
        (BasisState::cpb_excited(), raw[2]),
    ];
    parts.extend((0..n).map(|q| (BasisState::spin(q as u32), raw[3 + q])));
    let norm = parts.iter().map(|(_, a)| a.norm_sqr()).sum::<f64>().sqrt();
    for p in &mut parts {
        p.1 /= norm;
    }
    engine.state_from(&parts).unwrap()
}

/// Segments the exact engine accepts from any one-excitation state: perfect
/// echoes only, and no classical CPB drive (it leaves the sector).
fn exact_segment() -> impl Strategy<Value = Segment> {
    segment().prop_map(|s| match s {
        Segment::Echo { phase, .. } => Segment::Echo { error: 0.0, phase },
        Segment::CpbDrive { duration, .. } => Segment::Wait { duration },
        other => other,
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn exact_evolution_conserves_norm(
        segs in prop::collection::vec(exact_segment(), 10),
        raw in prop::collection::vec(complex(), 11),
    ) {
        prop_assume!(raw.iter().map(|a| a.norm_sqr()).sum::<f64>() > 1e-3);
        let engine = exact_engine(8, 0.0);
        let start = sector_state(&engine, &raw);
        // Spin windows are only defined outside an open echo pair.
        let mut inverted = false;
        let segs: Vec<Segment> = segs
            .into_iter()
            .map(|s| match s {
                Segment::Echo { .. } => {
                    inverted = !inverted;
                    s
                }
                Segment::Resonance { duration, profile, .. } if inverted => Segment::Resonance {
                    target: Target::Cpb,
                    duration,
                    profile,
                },
                other => other,
            })
            .collect();
        let end = engine.evolve(&start, &PulseSchedule::from_segments(segs).unwrap()).unwrap();
        prop_assert!((end.norm_sqr() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn resonant_windows_conserve_energy(
        raw in prop::collection::vec(complex(), 11),
        detuning in -2e6f64..2e6,
        duration in 0.0f64..5e-6,
    ) {
        prop_assume!(raw.iter().map(|a| a.norm_sqr()).sum::<f64>() > 1e-3);
        let engine = exact_engine(8, 0.0);
        let start = sector_state(&engine, &raw);
        let h = engine.spin_window_hamiltonian(detuning);
        let window = PulseSchedule::from_segments(vec![Segment::Resonance {
            target: Target::Spins,
            duration,
            profile: DetuningProfile::Square { detuning },
        }]).unwrap();
        let end = engine.evolve(&start, &window).unwrap();
        let e0 = h.expectation(start.amplitudes()).re;
        let e1 = h.expectation(end.amplitudes()).re;
        prop_assert!((e1 - e0).abs() <= 1e-9 * h.norm_bound().max(1.0), "{} vs {}", e0, e1);
    }

    /// Spin states orthogonal to `Σ g_q |q⟩` never reach the cavity.
    #[test]
    fn dark_states_stay_dark(
        raw in prop::collection::vec(complex(), 12),
        duration in 0.0f64..2e-5,
    ) {
        let engine = exact_engine(12, 0.0);
        let g: Vec<C64> = engine.geometry().couplings().to_vec();
        let mut v = raw.clone();
        let proj: C64 = g.iter().zip(&v).map(|(g, v)| g.conj() * v).sum::<C64>()
            / g.iter().map(|g| g.norm_sqr()).sum::<f64>();
        for (x, gq) in v.iter_mut().zip(&g) {
            *x -= proj * gq;
        }
        let norm = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        prop_assume!(norm > 1e-3);
        let parts: Vec<_> = v.iter().enumerate().map(|(q, a)| (BasisState::spin(q as u32), a / norm)).collect();
        let start = engine.state_from(&parts).unwrap();
        let window = PulseSchedule::from_segments(vec![Segment::Resonance {
            target: Target::Spins,
            duration,
            profile: DetuningProfile::on_resonance(),
        }]).unwrap();
        let end = engine.evolve(&start, &window).unwrap();
        prop_assert!(end.cavity_occupation() < 1e-9, "{}", end.cavity_occupation());
    }
}

fn gate_op(modes: usize) -> impl Strategy<Value = GateOp> {
    let m = 0..modes;
    prop_oneof![
        (m.clone(), prop::option::of(qubit_state())).prop_map(|(mode, state)| GateOp::Write { mode, state }),
        m.clone().prop_map(|mode| GateOp::Swap { mode }),
        Just(GateOp::CpbSwap),
        m.clone().prop_map(|mode| GateOp::Load { mode }),
        m.clone().prop_map(|mode| GateOp::Store { mode }),
        prop_oneof![Just(OneQubitGate::X), Just(OneQubitGate::Hadamard), (-PI..PI).prop_map(|phi| OneQubitGate::Phase { phi })]
            .prop_map(|gate| GateOp::OneQubit { gate }),
        Just(GateOp::Cz),
        (m.clone(), m).prop_filter("distinct", |(a, b)| a != b)
            .prop_map(|(control, target)| GateOp::TwoQubit { control, target }),
    ]
}

fn register(modes: usize) -> RegisterEngine {
    RegisterEngine::new(
        select_register_modes(modes, Scheme::Stride3).unwrap(),
        RegisterConfig::default(),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Ops confined to modes 0..3 leave mode 3's reduced state alone.
    #[test]
    fn untouched_modes_are_invariant(
        ops in prop::collection::vec(gate_op(3), 1..8),
        spectator in qubit_state(),
    ) {
        let engine = register(4);
        let [a, b] = spectator.amplitudes();
        let mut amps = Amplitudes::new();
        amps.insert(vec![0, 0, 0, 0, 0, 0], a);
        amps.insert(vec![0, 0, 0, 0, 0, 1], b);
        let start = RegisterState::pure(4, amps).unwrap();
        let before = start.reduced_density(mode_slot(3), 2);
        // Truncation overflow is a legitimate outcome for random programs.
        let run = engine.run_program(&start, &ops);
        prop_assume!(run.is_ok());
        let (end, _) = run.unwrap();
        let after = end.reduced_density(mode_slot(3), 2);
        prop_assert!((before - after).norm() < 1e-9);
    }

    #[test]
    fn swap_twice_restores_the_pair(
        cavity in qubit_state(),
        stored in qubit_state(),
        mode in 0usize..4,
    ) {
        let engine = register(4);
        let [c0, c1] = cavity.amplitudes();
        let [s0, s1] = stored.amplitudes();
        let slot = mode_slot(mode);
        let mut amps = Amplitudes::new();
        for (n, cn) in [(0u8, c0), (1, c1)] {
            for (m, sm) in [(0u8, s0), (1, s1)] {
                let mut c = vec![0u8; 6];
                c[CAVITY] = n;
                c[slot] = m;
                amps.insert(c, cn * sm);
            }
        }
        let start = RegisterState::pure(4, amps).unwrap();
        let mut s = start.clone();
        engine.swap_mode_cavity(&mut s, mode).unwrap();
        engine.swap_mode_cavity(&mut s, mode).unwrap();
        for slot in [CAVITY, slot] {
            let d = (start.reduced_density(slot, 2) - s.reduced_density(slot, 2)).norm();
            prop_assert!(d < 1e-8, "slot {} differs by {}", slot, d);
        }
    }
}

fn program_op() -> impl Strategy<Value = ProgramOp> {
    let q = prop_oneof![Just("a".to_string()), Just("b".to_string()), Just("c".to_string())];
    prop_oneof![
        (q.clone(), prop::option::of(qubit_state())).prop_map(|(qubit, state)| ProgramOp::Write { qubit, state }),
        q.clone().prop_map(|qubit| ProgramOp::Retrieve { qubit }),
        q.clone().prop_map(|qubit| ProgramOp::Load { qubit }),
        q.clone().prop_map(|qubit| ProgramOp::Store { qubit }),
        Just(ProgramOp::Gate { gate: OneQubitGate::Hadamard }),
        Just(ProgramOp::Cz),
        (q.clone(), q).prop_filter("distinct", |(a, b)| a != b)
            .prop_map(|(control, target)| ProgramOp::TwoQubit { control, target }),
        (0.0f64..1e-6).prop_map(|duration| ProgramOp::Wait { duration }),
    ]
}

fn compile_options(dispersive_shift: f64) -> CompileOptions {
    CompileOptions {
        length: LENGTH,
        collective_rabi: 2.0 * PI * 6.3e6,
        idle_detuning: 2.0 * PI * 630e6,
        g_cpb: 2.0 * PI * 50e6,
        gradient_duration: 100e-9,
        drive_duration: 10e-9,
        max_field_difference: None,
        window_profile: DetuningProfile::on_resonance(),
        dispersive_shift,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn compile_is_deterministic_and_unwinds_gradients(
        ops in prop::collection::vec(program_op(), 0..10),
        chi in 0.0f64..1e5,
    ) {
        let layout = select_register_modes(4, Scheme::Stride3).unwrap();
        let program = RegisterProgram::new(
            [("a".to_string(), 1), ("b".to_string(), 2), ("c".to_string(), 3)],
            ops,
        );
        let c = PhysicalConstants::default();
        let first = compile(&program, &layout, &c, &compile_options(chi)).unwrap();
        let second = compile(&program, &layout, &c, &compile_options(chi)).unwrap();
        prop_assert_eq!(&first, &second);
        // Every excursion is a (−k, +k) pair of the same winding.
        let mut open: Vec<f64> = Vec::new();
        for seg in first.schedule.segments() {
            if let Segment::Gradient { delta_k, .. } = *seg {
                match open.last() {
                    Some(&k) if k == -delta_k => { open.pop(); }
                    _ => open.push(delta_k),
                }
            }
        }
        prop_assert!(open.is_empty(), "unbalanced gradients {:?}", open);
        prop_assert!(first.schedule.net_delta_k().abs() < 1e-9);
        let back: PulseSchedule = first.schedule.to_text().parse().unwrap();
        prop_assert_eq!(back, first.schedule);
    }

    #[test]
    fn schedule_text_round_trips(segs in prop::collection::vec(segment(), 0..12)) {
        let s = PulseSchedule::from_segments(segs).unwrap();
        let back: PulseSchedule = s.to_text().parse().unwrap();
        prop_assert_eq!(back, s);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn echo_gains_ignore_the_drive_phase(
        seed in any::<u64>(),
        eps1 in -0.2f64..0.2,
        eps2 in -0.2f64..0.2,
        phase in -PI..PI,
    ) {
        let geom = ensemble(400, CouplingProfile::CavityMode, Placement::UniformRandom, seed);
        let layout = RegisterLayout::discrete(&geom, register_windings(4, Scheme::Stride3), 1.0).unwrap();
        let offsets = inhomogeneous_offsets(400, 2.0 * PI * 1e5, seed, 0).unwrap();
        let base = echo_error_injection_with_phase(&geom, &layout, eps1, eps2, &offsets, 5e-6, 0.0).unwrap();
        let turned = echo_error_injection_with_phase(&geom, &layout, eps1, eps2, &offsets, 5e-6, phase).unwrap();
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 + 1e-9 * a.abs();
        prop_assert!(close(base.k0, turned.k0));
        prop_assert!(close(base.inhomogeneous, turned.inhomogeneous));
        for (a, b) in base.register.iter().zip(&turned.register) {
            prop_assert!(close(*a, *b));
        }
    }

    #[test]
    fn polarization_commutator_stays_within_2p_of_overlap(
        seed in any::<u64>(),
        p in 0.0f64..0.2,
        wi in -12i64..12,
        wj in -12i64..12,
    ) {
        let n = 500;
        let geom = ensemble(n, CouplingProfile::Uniform, Placement::Grid, 0);
        let excited = random_excitations(n, p, seed, 0).unwrap();
        let frac = excited.iter().filter(|&&e| e).count() as f64 / n as f64;
        let (ki, kj) = (winding_to_k(wi as f64, LENGTH), winding_to_k(wj as f64, LENGTH));
        let comm = finite_polarization_commutator(&geom, &excited, ki, kj).unwrap();
        let m = mode_overlap(&geom, kj - ki);
        prop_assert!((comm - m).norm() <= 2.0 * frac + 1e-12);
    }
}
