//! One function per subcommand. Each returns its artifacts and a console summary;
//! nothing touches the filesystem until the whole command has succeeded.

use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::path::Path;

use dualtype::chain::{equilibrium_positions, ChainError, ChainReport};
use dualtype::dynamics::{
    carrier_flip_probability, estimate_nbar, scan_spectrum, sideband_flip_probability, DriveParams, DynamicsError,
    ModeLabel, Sideband,
};
use dualtype::freqplan::{comb_bandwidth, pll_drift_compensation, solve_awg, FrequencyPlan, PlanError, PlanInputs, SpeciesLabel};
use dualtype::gate::{
    build_heuristic_sequence, calibrate_rabi, entangling_phase, integrate_displacement, simulate_gate, GateError,
    GateSequence, GateTiming, SimulationOptions,
};
use dualtype::protocol::{
    calibrate, joint_confusion, parse_sequence, run_detect_f, run_detect_joint, run_prepare_sf, run_sequence,
    synthesize_confusion_matrix, Calibration, Infidelity, JointInfidelity, Level, LevelState, Observables,
    ProtocolError, PulseErrors,
};
use dualtype::readout::{
    bootstrap_uncertainty, mle_correct, synthesize_bell_dataset, BellDataset, ConfusionMatrix, OutcomeDistribution,
    ParityFit, ReadoutError,
};
use serde::Serialize;

use crate::config::{ConfigError, ExperimentConfig};
use crate::output::Artifact;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    Domain(String),
    #[error("no convergence: {0}")]
    Convergence(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Domain(_) => 2,
            CliError::Convergence(_) => 3,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

macro_rules! domain {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Domain(e.to_string())
            }
        }
    )*};
}
domain!(PlanError, DynamicsError, GateError, ReadoutError);

impl From<ProtocolError> for CliError {
    fn from(e: ProtocolError) -> Self {
        match e {
            ProtocolError::Calibration(_) => CliError::Convergence(e.to_string()),
            _ => CliError::Domain(e.to_string()),
        }
    }
}

impl From<ChainError> for CliError {
    fn from(e: ChainError) -> Self {
        match e {
            ChainError::NotConverged { .. } => CliError::Convergence(e.to_string()),
            _ => CliError::Domain(e.to_string()),
        }
    }
}

/// Result of a subcommand before anything is written.
pub struct Run {
    pub artifacts: Vec<Artifact>,
    pub summary: String,
}

fn xy_csv(name: &str, header: [&str; 2], rows: &[(f64, f64)]) -> Artifact {
    Artifact::csv(name, |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(header)?;
        for (x, y) in rows {
            w.write_record([x.to_string(), y.to_string()])?;
        }
        w.flush()?;
        Ok(())
    })
}

fn read_file(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

// ---------------------------------------------------------------- plan

#[derive(Serialize)]
struct PlanRecord {
    selection: String,
    #[serde(flatten)]
    plan: FrequencyPlan<f64>,
    raman_frequency_hz: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pll_drift_compensation_hz: Option<f64>,
}

#[derive(Serialize)]
struct PlanReport {
    comb_bandwidth_hz: f64,
    covers_s: bool,
    covers_f: bool,
    aom_band_hz: [f64; 2],
    plans: Vec<PlanRecord>,
}

pub fn plan(
    cfg: &ExperimentConfig,
    only: Option<SpeciesLabel>,
    detuning: Option<f64>,
    rep_drift: Option<f64>,
) -> Result<Run, CliError> {
    let comb = cfg.comb()?;
    let band = cfg.band()?;
    let bw = comb_bandwidth(&comb)?;
    let mut selections: Vec<(String, f64)> = Vec::new();
    match detuning {
        Some(d) => selections.push(("requested".into(), d)),
        None => {
            selections.push(("carrier".into(), 0.0));
            for m in &cfg.modes {
                let name = match m.label {
                    ModeLabel::CenterOfMass => "com",
                    ModeLabel::Rocking => "rocking",
                };
                selections.push((format!("blue {name}"), m.frequency_hz));
                selections.push((format!("red {name}"), -m.frequency_hz));
            }
        }
    }
    let labels: Vec<SpeciesLabel> = match only {
        Some(l) => vec![l],
        None => vec![SpeciesLabel::S, SpeciesLabel::F],
    };
    let mut plans = Vec::new();
    let mut summary = String::new();
    for label in labels {
        let (species, entry) = cfg.species(label)?;
        for (sel, d) in &selections {
            let plan = solve_awg(
                PlanInputs {
                    species,
                    pll_frequency: entry.pll_hz,
                    detuning: *d,
                    beat_sign: entry.beat_sign,
                },
                &comb,
                &band,
            )?;
            let _ = writeln!(
                summary,
                "{label} {sel:<13} detuning {:>+12.3} Hz  AWG {:.6} MHz  PLL {:.6} MHz",
                d,
                plan.awg_frequency / 1e6,
                plan.pll_frequency / 1e6
            );
            plans.push(PlanRecord {
                selection: sel.clone(),
                plan,
                raman_frequency_hz: plan.raman_frequency(comb.repetition_rate),
                pll_drift_compensation_hz: rep_drift.map(|r| pll_drift_compensation(&species, r)),
            });
        }
    }
    let report = PlanReport {
        comb_bandwidth_hz: bw.hz(),
        covers_s: bw.covers(cfg.species.s.splitting_hz),
        covers_f: bw.covers(cfg.species.f.splitting_hz),
        aom_band_hz: cfg.aom_band_hz,
        plans,
    };
    let _ = writeln!(summary, "comb bandwidth {:.3} GHz", report.comb_bandwidth_hz / 1e9);
    Ok(Run {
        artifacts: vec![Artifact::json("plans.json", &report)],
        summary,
    })
}

// ---------------------------------------------------------------- rabi

#[derive(Serialize)]
struct RabiEntry {
    rabi_rate_rad_s: f64,
    decay_rate_per_s: f64,
    loss_per_period: f64,
    period_s: f64,
}

#[derive(Serialize)]
struct RabiReport {
    s_type: RabiEntry,
    f_type: RabiEntry,
}

pub fn rabi(cfg: &ExperimentConfig) -> Result<Run, CliError> {
    let (ds, df) = cfg.carrier_drives()?;
    let d = &cfg.drive;
    let curve = |drive: &DriveParams<f64>| {
        let period = TAU / drive.rabi_rate;
        let n = (d.periods * d.points_per_period as f64).round() as usize;
        (0..=n)
            .map(|i| {
                let t = period * i as f64 / d.points_per_period as f64;
                (t, carrier_flip_probability(drive, t))
            })
            .collect::<Vec<_>>()
    };
    let entry = |drive: &DriveParams<f64>| {
        let period = TAU / drive.rabi_rate;
        RabiEntry {
            rabi_rate_rad_s: drive.rabi_rate,
            decay_rate_per_s: drive.decay_rate,
            loss_per_period: 1.0 - (-drive.decay_rate * period).exp(),
            period_s: period,
        }
    };
    let report = RabiReport {
        s_type: entry(&ds),
        f_type: entry(&df),
    };
    let summary = format!(
        "S: Omega = 2pi x {:.3} kHz, loss/period {:.4}\nF: Omega = 2pi x {:.3} kHz, loss/period {:.4}\n",
        ds.rabi_rate / TAU / 1e3,
        report.s_type.loss_per_period,
        df.rabi_rate / TAU / 1e3,
        report.f_type.loss_per_period
    );
    let header = ["time_s", "flip_probability"];
    Ok(Run {
        artifacts: vec![
            xy_csv("rabi_s.csv", header, &curve(&ds)),
            xy_csv("rabi_f.csv", header, &curve(&df)),
            Artifact::json("rabi.json", &report),
        ],
        summary,
    })
}

// ---------------------------------------------------------------- spectrum

#[derive(Serialize)]
struct ThermometryEntry {
    label: ModeLabel,
    frequency_hz: f64,
    nbar_input: f64,
    p_red: f64,
    p_blue: f64,
    nbar_estimate: f64,
    relative_error: Option<f64>,
}

pub fn spectrum(cfg: &ExperimentConfig) -> Result<Run, CliError> {
    let modes = cfg.modes()?;
    let drive = cfg.spectrum_drive()?;
    let ion = cfg.spectrum.ion_index;
    let spec = scan_spectrum(&modes, ion, &drive, &cfg.spectrum_grid())?;
    let mut therm = Vec::new();
    let mut summary = String::new();
    for m in &modes {
        let red = sideband_flip_probability(m, ion, &drive, Sideband::Red, drive.duration)?;
        let blue = sideband_flip_probability(m, ion, &drive, Sideband::Blue, drive.duration)?;
        let est = estimate_nbar(red, blue)?;
        let rel = (m.nbar > 0.0).then(|| (est - m.nbar).abs() / m.nbar);
        let _ = writeln!(summary, "{:?} {:.3} MHz: nbar {:.4} (input {})", m.label, m.frequency / 1e6, est, m.nbar);
        therm.push(ThermometryEntry {
            label: m.label,
            frequency_hz: m.frequency,
            nbar_input: m.nbar,
            p_red: red,
            p_blue: blue,
            nbar_estimate: est,
            relative_error: rel,
        });
    }
    Ok(Run {
        artifacts: vec![
            Artifact::csv("spectrum.csv", |b| spec.write_csv(b)),
            Artifact::json("thermometry.json", &therm),
        ],
        summary,
    })
}

// ---------------------------------------------------------------- gate

#[derive(Serialize)]
struct ModeSummary {
    label: ModeLabel,
    final_displacement_abs: f64,
    time_averaged_abs: f64,
    geometric_phase_contribution: f64,
}

#[derive(Serialize)]
struct GateDesignReport {
    timing: GateTiming<f64>,
    rabi_rate_s_rad_s: f64,
    rabi_rate_f_rad_s: f64,
    entangling_phase_rad: f64,
    bichromatic_detuning_hz: f64,
    modes: Vec<ModeSummary>,
}

/// Designed and amplitude-calibrated sequence.
pub fn designed_gate(cfg: &ExperimentConfig) -> Result<GateSequence<f64>, CliError> {
    let seq = build_heuristic_sequence(&cfg.heuristic())?;
    let s = calibrate_rabi(&seq, cfg.gate.target_phase_rad)?;
    Ok(seq.scaled(s))
}

pub fn gate_design(cfg: &ExperimentConfig) -> Result<Run, CliError> {
    let params = cfg.heuristic();
    let timing = params.timing();
    let seq = designed_gate(cfg)?;
    let rate = |t| seq.drive_segments().find(|s| s.target == t).map_or(0.0, |s| s.rabi_rate);
    let mut artifacts = Vec::new();
    let mut modes = Vec::new();
    for (m, file) in [(0, "trajectory_com.csv"), (1, "trajectory_rocking.csv")] {
        let tr = integrate_displacement(&seq, m, cfg.gate.samples_per_segment);
        modes.push(ModeSummary {
            label: tr.mode_label,
            final_displacement_abs: tr.final_displacement.norm(),
            time_averaged_abs: tr.time_averaged_magnitude(),
            geometric_phase_contribution: tr.geometric_phase_contribution,
        });
        artifacts.push(Artifact::csv(file, |b| tr.write_csv(b)));
    }
    let json = seq.to_json().map_err(|e| CliError::Domain(e.to_string()))?;
    artifacts.push(Artifact {
        name: "sequence.json".into(),
        bytes: format!("{json}\n").into_bytes(),
    });
    let report = GateDesignReport {
        timing,
        rabi_rate_s_rad_s: rate(dualtype::gate::Target::IonS),
        rabi_rate_f_rad_s: rate(dualtype::gate::Target::IonF),
        entangling_phase_rad: entangling_phase(&seq),
        bichromatic_detuning_hz: seq.mu,
        modes,
    };
    let summary = format!(
        "segment duration tau = {:.4} us\n\
         total duration T = {:.3} us ({} segments, {} gaps); {:.3} us with a trailing gap\n\
         arc per segment: com {:.6} rad, rocking {:.6} rad\n\
         Rabi rates: S 2pi x {:.3} kHz, F 2pi x {:.3} kHz; chi = {:.6} rad\n",
        timing.segment_duration_s * 1e6,
        timing.total_duration_s * 1e6,
        timing.segment_count,
        timing.segment_count.saturating_sub(1),
        timing.total_with_trailing_gap_s * 1e6,
        timing.arc_com_rad,
        timing.arc_rocking_rad,
        report.rabi_rate_s_rad_s / TAU / 1e3,
        report.rabi_rate_f_rad_s / TAU / 1e3,
        report.entangling_phase_rad,
    );
    artifacts.push(Artifact::json("gate_design.json", &report));
    Ok(Run { artifacts, summary })
}

pub fn gate_simulate(cfg: &ExperimentConfig, seed: u64) -> Result<Run, CliError> {
    let seq = designed_gate(cfg)?;
    let options = SimulationOptions {
        analysis_points: cfg.gate.analysis_points,
        target_pair: None,
    };
    let out = simulate_gate(&seq, cfg.gate.initial_state, &cfg.noise(seed), &options)?;
    let summary = format!(
        "shots {}: target population {:.4}, parity contrast {:.4}, Bell fidelity {:.4}\n",
        out.shots, out.target_population, out.contrast, out.bell_fidelity
    );
    Ok(Run {
        artifacts: vec![
            Artifact::csv("gate_parity.csv", |b| out.write_parity_csv(b)),
            Artifact::json("gate_outcome.json", &out),
        ],
        summary,
    })
}

// ---------------------------------------------------------------- readout

fn load_matrix(path: Option<&Path>) -> Result<ConfusionMatrix<f64>, CliError> {
    match path {
        None => Ok(ConfusionMatrix::published()),
        Some(p) => {
            let f = std::fs::File::open(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            ConfusionMatrix::from_csv(f).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))
        }
    }
}

#[derive(Serialize)]
struct CorrectionReport {
    p: [f64; 4],
    stderr: [f64; 4],
    iterations: usize,
    converged: bool,
    log_likelihood: f64,
    shots: u64,
}

pub fn readout_correct(cfg: &ExperimentConfig, counts: &Path, matrix: Option<&Path>, seed: u64) -> Result<Run, CliError> {
    let m = load_matrix(matrix)?;
    let f = std::fs::File::open(counts).map_err(|e| CliError::Config(format!("{}: {e}", counts.display())))?;
    let obs = OutcomeDistribution::from_csv(f).map_err(|e| CliError::Config(format!("{}: {e}", counts.display())))?;
    let r = mle_correct(&obs, &m)?;
    if !r.converged {
        return Err(CliError::Convergence(format!("EM stopped after {} iterations", r.iterations)));
    }
    let data = BellDataset {
        population: obs.clone(),
        parity_scan: Vec::new(),
        target_pair: [0, 3],
    };
    let boot = bootstrap_uncertainty(&data, &m, cfg.readout.bootstrap_resamples, seed)?;
    let report = CorrectionReport {
        p: r.p,
        stderr: boot.p_stderr,
        iterations: r.iterations,
        converged: r.converged,
        log_likelihood: r.log_likelihood.last().copied().unwrap_or(f64::NAN),
        shots: obs.shots,
    };
    let summary = format!(
        "p = [{:.4}, {:.4}, {:.4}, {:.4}] after {} EM iterations\n",
        r.p[0], r.p[1], r.p[2], r.p[3], r.iterations
    );
    Ok(Run {
        artifacts: vec![Artifact::json("correction.json", &report)],
        summary,
    })
}

#[derive(Serialize)]
struct FidelityStderr {
    p: [f64; 4],
    contrast: Option<f64>,
    #[serde(rename = "F")]
    fidelity: Option<f64>,
}

#[derive(Serialize)]
struct FidelityReport {
    p: [f64; 4],
    #[serde(rename = "F")]
    fidelity: Option<f64>,
    stderr: FidelityStderr,
    population_even: f64,
    parity_fit: Option<ParityFit<f64>>,
    synthetic: bool,
}

pub fn readout_fidelity(cfg: &ExperimentConfig, data: Option<&Path>, matrix: Option<&Path>, seed: u64) -> Result<Run, CliError> {
    let m = load_matrix(matrix)?;
    let mut artifacts = Vec::new();
    let dataset: BellDataset<f64> = match data {
        Some(p) => serde_json::from_str(&read_file(p)?).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?,
        None => {
            let b = &cfg.readout.synthetic_bell;
            let d = synthesize_bell_dataset(&cfg.bell_model(), &m, b.shots, b.analysis_points, seed)?;
            artifacts.push(Artifact::json("bell_data.json", &d));
            d
        }
    };
    let est = dataset.evaluate(&m)?;
    let boot = bootstrap_uncertainty(&dataset, &m, cfg.readout.bootstrap_resamples, seed)?;
    let report = FidelityReport {
        p: est.p,
        fidelity: est.fidelity,
        stderr: FidelityStderr {
            p: boot.p_stderr,
            contrast: boot.contrast_stderr,
            fidelity: boot.fidelity_stderr,
        },
        population_even: est.population_even,
        parity_fit: est.fit,
        synthetic: data.is_none(),
    };
    let summary = match (est.fidelity, est.fit, boot.fidelity_stderr) {
        (Some(f), Some(fit), Some(se)) => format!(
            "even population {:.4}, contrast {:.4}, F = {:.4} +/- {:.4}\n",
            est.population_even, fit.contrast, f, se
        ),
        _ => format!("even population {:.4}; no parity scan, no fidelity\n", est.population_even),
    };
    artifacts.push(xy_csv("readout_parity.csv", ["analysis_phase_rad", "parity"], &est.parity_curve));
    artifacts.push(Artifact::json("fidelity.json", &report));
    Ok(Run { artifacts, summary })
}

// ---------------------------------------------------------------- protocol

#[derive(Serialize)]
struct RoundsEntry {
    rounds: usize,
    infidelity: Infidelity<f64>,
}

#[derive(Serialize)]
struct ProtocolReport {
    pulse_errors: PulseErrors<f64>,
    prep_success: f64,
    f_detection: Vec<RoundsEntry>,
    joint_detection: JointInfidelity<f64>,
    observables: Observables<f64>,
    published: Observables<f64>,
    confusion_diagonal_exact: [f64; 4],
    confusion_diagonal_synthesized: [f64; 4],
    confusion_shots: u64,
}

#[derive(Serialize)]
struct SequenceRun {
    initial: Vec<Level>,
    final_states: Vec<LevelState<f64>>,
    bright_probability: Vec<f64>,
}

pub fn protocol_detect(
    cfg: &ExperimentConfig,
    seed: u64,
    recalibrate: bool,
    sequence: Option<(&Path, &[Level])>,
) -> Result<Run, CliError> {
    let mut artifacts = Vec::new();
    let mut summary = String::new();
    let errors = if recalibrate {
        let cal: Calibration = calibrate(&Observables::PUBLISHED, cfg.protocol.calibration_starts, seed)?;
        let _ = writeln!(summary, "calibrated pulse errors (cost {:.3e})", cal.cost);
        artifacts.push(Artifact::json("calibration.json", &cal));
        cal.errors
    } else {
        cfg.pulse_errors()
    };
    let prep = run_prepare_sf(&errors)?;
    let f_detection = cfg
        .protocol
        .rounds
        .iter()
        .map(|&r| Ok(RoundsEntry {
            rounds: r,
            infidelity: run_detect_f(&errors, r)?,
        }))
        .collect::<Result<Vec<_>, ProtocolError>>()?;
    let joint = run_detect_joint(&errors)?;
    let exact = joint_confusion(&errors)?;
    let synth = synthesize_confusion_matrix(&errors, cfg.protocol.confusion_shots, seed)?;
    let obs = Observables::evaluate(&errors)?;
    let _ = writeln!(
        summary,
        "prep {:.4}  F-detect |0'> {:.4} |1'> {:.4}  joint S {:.4} F {:.4}",
        obs.prep_success, obs.f_detect_zero, obs.f_detect_one, obs.joint_s, obs.joint_f
    );
    let diag = synth.diagonal();
    let _ = writeln!(
        summary,
        "synthesized confusion diagonal: {:.2}% {:.2}% {:.2}% {:.2}%",
        diag[0] * 100.0,
        diag[1] * 100.0,
        diag[2] * 100.0,
        diag[3] * 100.0
    );
    if let Some((path, initial)) = sequence {
        let steps = parse_sequence(&read_file(path)?)?;
        let mut reg: Vec<LevelState<f64>> = initial.iter().map(|l| LevelState::pure(*l)).collect();
        run_sequence(&steps, &mut reg, &errors)?;
        artifacts.push(Artifact::json(
            "sequence_run.json",
            &SequenceRun {
                initial: initial.to_vec(),
                bright_probability: reg.iter().map(|s| s.bright_probability()).collect(),
                final_states: reg,
            },
        ));
    }
    let report = ProtocolReport {
        pulse_errors: errors,
        prep_success: prep.success_probability,
        f_detection,
        joint_detection: joint,
        observables: obs,
        published: Observables::PUBLISHED,
        confusion_diagonal_exact: exact.diagonal(),
        confusion_diagonal_synthesized: diag,
        confusion_shots: cfg.protocol.confusion_shots,
    };
    artifacts.push(Artifact::csv("confusion_exact.csv", |b| exact.write_csv(b)));
    artifacts.push(Artifact::csv("confusion_synthesized.csv", |b| synth.write_csv(b)));
    artifacts.push(Artifact::json("protocol.json", &report));
    Ok(Run { artifacts, summary })
}

// ---------------------------------------------------------------- chain

pub fn chain(cfg: &ExperimentConfig, charges: Option<Vec<u32>>) -> Result<Run, CliError> {
    let mut c = cfg.chain();
    if let Some(q) = charges {
        c.charges = q;
        c.validate().map_err(|e| CliError::Config(format!("--charges: {e}")))?;
    }
    let r = equilibrium_positions(&c)?;
    let report = ChainReport::new(&c.charges, &r);
    let positions: Vec<String> = r.positions.iter().map(|z| format!("{z:.4}")).collect();
    let summary = format!(
        "charges {:?}: positions [{}] z0, force norm {:.1e}\n",
        c.charges,
        positions.join(", "),
        r.residual_force_norm
    );
    Ok(Run {
        artifacts: vec![Artifact::json("chain.json", &report)],
        summary,
    })
}
