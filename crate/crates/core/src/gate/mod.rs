//! Segmented phase-modulated entangling gate between an S-type and an F-type
//! ion sharing two motional modes.
//!
//! Conventions used throughout:
//!
//! * The force on ion `j` from mode `m` is `f = (eta_mj * Omega / 2) e^{i(delta_m t + phi)}`
//!   with `delta_m = 2 pi (mu - f_m)` the drive detuning from the mode.
//! * Displacements are `alpha_mj(t) = -i * integral f`, so a segment of a
//!   detuned drive traces an arc in phase space and a gap leaves `alpha`
//!   unchanged.
//! * The two-qubit interaction is `exp(i chi sigma_x^S sigma_x^F)`; `chi = pi/4`
//!   is maximally entangling.

mod phase;
mod sequence;
mod simulate;
mod trajectory;

pub use phase::{calibrate_rabi, entangling_phase, entangling_phase_with_offset};
pub use sequence::{build_heuristic_sequence, per_ion_final, DriveSegment, GateSequence, GateTiming, HeuristicParams, Target};
pub use simulate::{simulate_gate, BasisState, GateOutcome, NoiseModel, SimulationOptions};
pub use trajectory::{integrate_displacement, segment_increments, Trajectory};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GateError {
    #[error("mode frequencies must differ (both {0} Hz)")]
    DegenerateModes(f64),
    #[error("invalid gate parameters: {0}")]
    InvalidParams(String),
    #[error("invalid sequence: {0}")]
    InvalidSequence(String),
    #[error("entangling phase is {0} at unit amplitude; cannot calibrate")]
    Uncalibratable(f64),
    #[error("invalid noise model: {0}")]
    InvalidNoise(String),
    #[error(transparent)]
    Mode(#[from] crate::dynamics::DynamicsError),
}
