mod common;

use std::f64::consts::{FRAC_PI_4, TAU};

use common::{brute_double_integral, rk4_chi, rk4_mode, target_of};
use dualtype::dynamics::{ModeLabel, MotionalMode};
use dualtype::gate::*;
use proptest::prelude::*;

const NS: f64 = 1e-9;

fn calibrated() -> GateSequence {
    let seq = build_heuristic_sequence(&HeuristicParams::published()).unwrap();
    let s = calibrate_rabi(&seq, FRAC_PI_4).unwrap();
    seq.scaled(s)
}

fn toy_modes(split_hz: f64) -> [MotionalMode; 2] {
    [
        MotionalMode::two_ion(ModeLabel::CenterOfMass, 1.5e6, 0.1, 0.2).unwrap(),
        MotionalMode::two_ion(ModeLabel::Rocking, 1.5e6 - split_hz, 0.1, 0.1).unwrap(),
    ]
}

#[test]
fn designed_sequence_closes_both_modes() {
    let seq = calibrated();
    let omega = seq.segments[0].rabi_rate;
    let tau = seq.segments[0].duration;
    let scale = 0.1 * omega * tau;
    for m in 0..2 {
        let tr = integrate_displacement(&seq, m, 8);
        assert!(tr.final_displacement.norm() < 1e-6 * scale, "mode {m}: {}", tr.final_displacement);
        let q = rk4_mode(&seq, m, NS);
        let a = q.alpha[0] + q.alpha[1];
        assert!(a.norm() < 1e-6 * scale, "quadrature mode {m}: {a}");
        // per-ion closure too
        let per_ion = per_ion_final(&seq, m, 0.0);
        for j in 0..2 {
            assert!(per_ion[j].norm() < 1e-6 * scale);
            assert!((per_ion[j] - q.alpha[j]).norm() < 1e-9 * scale);
        }
    }
}

#[test]
fn calibrated_phase_matches_quadrature() {
    let seq = calibrated();
    let chi = entangling_phase(&seq);
    assert!((chi - FRAC_PI_4).abs() < 1e-3);
    let oracle = rk4_chi(&seq, NS);
    assert!((oracle - FRAC_PI_4).abs() < 1e-3, "oracle {oracle}");
    assert!((oracle - chi).abs() < 1e-8 * chi.abs());
}

#[test]
fn same_ion_sequence_has_zero_phase() {
    let mut seq = calibrated();
    for s in seq.segments.iter_mut() {
        s.target = Target::IonS;
    }
    assert_eq!(entangling_phase(&seq), 0.0);
}

#[test]
fn time_reversal_preserves_phase_on_toy() {
    let seq = GateSequence {
        segments: vec![
            DriveSegment::drive(Target::IonS, 12e-6, 0.4, 2.0e5),
            DriveSegment::gap(3e-6),
            DriveSegment::drive(Target::IonF, 8e-6, 2.1, 1.5e5),
            DriveSegment::drive(Target::IonS, 10e-6, -1.3, 1.8e5),
        ],
        mu: 1.5e6 - 20e3,
        modes: toy_modes(60e3),
    };
    let rev = seq.time_reversed();
    let chi = entangling_phase(&seq);
    let chi_rev = entangling_phase(&rev);
    assert!(chi.abs() > 1e-3);
    assert!((chi - chi_rev).abs() < 1e-12);
    let brute = brute_double_integral(&seq, 400_000);
    let brute_rev = brute_double_integral(&rev, 400_000);
    assert!((brute - chi).abs() < 1e-5 * chi.abs(), "{brute} vs {chi}");
    assert!((brute_rev - chi).abs() < 1e-5 * chi.abs());
}

#[test]
fn segment_duration_and_arcs() {
    let p = HeuristicParams::published();
    let t = p.timing();
    assert!((t.segment_duration_s - 9.81e-6).abs() < 0.01e-6);
    assert!((t.arc_com_rad - TAU / 3.0).abs() < 1e-12);
    let seq = build_heuristic_sequence(&p).unwrap();
    let (dc, dr) = (seq.mode_detuning(0), seq.mode_detuning(1));
    assert!((dc + dr).abs() < 1e-9 * dc.abs());
    assert!(dc < 0.0 && dr > 0.0);
    assert!((dc.abs() * t.segment_duration_s - TAU / 3.0).abs() < 1e-12);
}

#[test]
fn gaps_only_rotate() {
    let modes = toy_modes(40e3);
    let seg = DriveSegment::drive(Target::IonS, 10e-6, 0.7, 2.0e5);
    let plain = GateSequence {
        segments: vec![seg],
        mu: 1.5e6 - 20e3,
        modes: modes.clone(),
    };
    let gap = 3.3e-6;
    let delayed = GateSequence {
        segments: vec![DriveSegment::gap(gap), seg, DriveSegment::gap(gap)],
        ..plain.clone()
    };
    for m in 0..2 {
        let a = integrate_displacement(&plain, m, 4).final_displacement;
        let tr = integrate_displacement(&delayed, m, 4);
        let b = tr.final_displacement;
        let rot = num_complex::Complex64::from_polar(1.0, plain.mode_detuning(m) * gap);
        assert!((b - a * rot).norm() < 1e-15);
        assert!((b.norm() - a.norm()).abs() < 1e-15);
        let n = tr.samples.len();
        assert_eq!(tr.samples[n - 1].1, tr.samples[n - 2].1);
    }
}

#[test]
fn global_phase_shift_is_covariant() {
    let seq = calibrated();
    let chi = entangling_phase(&seq);
    let both = seq.phase_shifted(Target::IonS, 1.1).phase_shifted(Target::IonF, 1.1);
    assert!((entangling_phase(&both) - chi).abs() < 1e-12);
    let one = seq.phase_shifted(Target::IonF, 0.8);
    for m in 0..2 {
        let a = per_ion_final(&seq, m, 0.0);
        let b = per_ion_final(&one, m, 0.0);
        for j in 0..2 {
            assert!((a[j].norm() - b[j].norm()).abs() < 1e-12);
        }
        let ta = integrate_displacement(&seq, m, 2).final_displacement;
        let tb = integrate_displacement(&both, m, 2).final_displacement;
        assert!((ta.norm() - tb.norm()).abs() < 1e-12);
    }
}

#[test]
fn relocation_pulls_com_path_toward_origin() {
    let reloc = build_heuristic_sequence(&HeuristicParams::published()).unwrap();
    let plain = build_heuristic_sequence(&HeuristicParams {
        relocated: 0,
        ..HeuristicParams::published()
    })
    .unwrap();
    let a = integrate_displacement(&reloc, 0, 64).time_averaged_magnitude();
    let b = integrate_displacement(&plain, 0, 64).time_averaged_magnitude();
    assert!(a < b, "relocated {a} vs plain {b}");
    // both still close
    assert!(integrate_displacement(&plain, 0, 1).final_displacement.norm() < 1e-9);
}

#[test]
fn calibration_examples() {
    let seq = calibrated();
    let quarter = seq.scaled(0.5);
    assert!((calibrate_rabi(&quarter, FRAC_PI_4).unwrap() - 2.0).abs() < 1e-12);
    assert!((calibrate_rabi(&seq, FRAC_PI_4).unwrap() - 1.0).abs() < 1e-12);
    let zero = seq.scaled(0.0);
    assert!(matches!(calibrate_rabi(&zero, FRAC_PI_4), Err(GateError::Uncalibratable(_))));
}

#[test]
fn noiseless_simulation_is_ideal_bell_state() {
    let out = simulate_gate(&calibrated(), BasisState::new(false, false), &NoiseModel::noiseless(), &Default::default()).unwrap();
    for (p, e) in out.populations.iter().zip([0.5, 0.0, 0.0, 0.5]) {
        assert!((p - e).abs() < 1e-6);
    }
    assert!(out.contrast > 1.0 - 1e-6);
    assert!(out.bell_fidelity > 0.999);
}

#[test]
fn every_basis_input_gives_full_contrast() {
    let seq = calibrated();
    for (s, f) in [(false, false), (false, true), (true, false), (true, true)] {
        let b = BasisState::new(s, f);
        let out = simulate_gate(&seq, b, &NoiseModel::noiseless(), &Default::default()).unwrap();
        assert!((out.populations[b.index()] - 0.5).abs() < 1e-6);
        assert!((out.populations[b.flipped().index()] - 0.5).abs() < 1e-6);
        assert!(out.contrast > 1.0 - 1e-6, "{b:?}: {}", out.contrast);
    }
    // even and odd states dephase with phi_S + phi_F and phi_S - phi_F: equal in distribution,
    // Monte Carlo standard error of the difference is about 1.5e-3 at 10^4 shots
    let noisy = |b| simulate_gate(&seq, b, &NoiseModel::published(5), &Default::default()).unwrap().bell_fidelity;
    let even = noisy(BasisState::new(false, false));
    let odd = noisy(BasisState::new(true, false));
    assert!((even - odd).abs() < 6e-3, "{even} {odd}");
}

#[test]
fn fidelity_monotone_in_both_coherence_times() {
    let seq = calibrated();
    let run = |ts: f64, tm: f64| {
        let noise = NoiseModel {
            spin_coherence_time: ts,
            motional_coherence_time: tm,
            shots: 2_000,
            seed: 11,
        };
        simulate_gate(&seq, BasisState::new(false, false), &noise, &Default::default())
            .unwrap()
            .bell_fidelity
    };
    let spin: Vec<f64> = [5e-3, 2.5e-3, 1.25e-3].iter().map(|&t| run(t, 2e-3)).collect();
    let motion: Vec<f64> = [4e-3, 2e-3, 1e-3].iter().map(|&t| run(2.5e-3, t)).collect();
    for w in spin.windows(2).chain(motion.windows(2)) {
        assert!(w[1] <= w[0] + 1e-12, "{spin:?} {motion:?}");
    }
}

#[test]
fn parity_csv_export() {
    let out = simulate_gate(&calibrated(), BasisState::new(false, false), &NoiseModel::noiseless(), &Default::default()).unwrap();
    let mut buf = Vec::new();
    out.write_parity_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("analysis_phase_rad,parity\n"));
    assert_eq!(text.lines().count(), 65);
}

#[test]
fn single_precision_design_closes() {
    let p = HeuristicParams::<f32> {
        com_frequency: 2.271e6,
        rocking_frequency: 2.203e6,
        segment_count: 40,
        gap: 2e-6,
        edge_length: 5,
        relocated: 2,
        rabi_rate_s: 2.0e5,
        rabi_rate_f: 2.0e5,
        eta: 0.1,
        nbar_com: 0.3,
        nbar_rocking: 0.1,
    };
    let seq = build_heuristic_sequence(&p).unwrap();
    let s = calibrate_rabi(&seq, std::f32::consts::FRAC_PI_4).unwrap();
    let seq = seq.scaled(s);
    assert!((entangling_phase(&seq) - std::f32::consts::FRAC_PI_4).abs() < 1e-3);
    let scale = 0.1 * seq.segments[0].rabi_rate * seq.segments[0].duration;
    for m in 0..2 {
        assert!(integrate_displacement(&seq, m, 1).final_displacement.norm() < 1e-3 * scale);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn closed_form_matches_quadrature(
        durations in prop::array::uniform5(1e-6f64..15e-6),
        phases in prop::array::uniform5(0.0f64..TAU),
        rates in prop::array::uniform5(5e4f64..3e5),
        order in prop::array::uniform5(0usize..2),
        split in 20e3f64..120e3,
    ) {
        let mut segments = Vec::new();
        for k in 0..5 {
            if k > 0 {
                segments.push(DriveSegment::gap(1.5e-6));
            }
            segments.push(DriveSegment::drive(target_of(order[k]), durations[k], phases[k], rates[k]));
        }
        let seq = GateSequence { segments, mu: 1.5e6 - split / 2.0, modes: toy_modes(split) };
        for m in 0..2 {
            let q = rk4_mode(&seq, m, NS);
            let closed = per_ion_final(&seq, m, 0.0);
            for j in 0..2 {
                let scale = q.alpha[j].norm().max(1e-300);
                prop_assert!((closed[j] - q.alpha[j]).norm() <= 1e-8 * scale.max(1e-3));
            }
        }
        let chi = entangling_phase(&seq);
        let oracle = rk4_chi(&seq, NS);
        prop_assert!((chi - oracle).abs() <= 1e-8 * chi.abs().max(1e-6));
    }

    #[test]
    fn amplitude_scaling_is_linear_and_quadratic(s in 0.1f64..5.0) {
        let seq = calibrated();
        let scaled = seq.scaled(s);
        prop_assert!((entangling_phase(&scaled) - s * s * FRAC_PI_4).abs() < 1e-10);
        let toy = GateSequence {
            segments: vec![
                DriveSegment::drive(Target::IonS, 7e-6, 0.2, 1e5),
                DriveSegment::drive(Target::IonF, 5e-6, 1.2, 2e5),
            ],
            mu: 1.48e6,
            modes: toy_modes(40e3),
        };
        for m in 0..2 {
            let a = integrate_displacement(&toy, m, 1).final_displacement;
            let b = integrate_displacement(&toy.scaled(s), m, 1).final_displacement;
            prop_assert!((b - a * s).norm() < 1e-14 * a.norm().max(1.0));
        }
    }
}
