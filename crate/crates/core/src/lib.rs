//! Control planning and simulation for dual-type trapped-ion qubits driven
//! by a single pulsed-laser frequency comb.
//!
//! Every numerical type is generic over its scalar. The aliases below fix
//! the usual choices: `f64` for simulation, [`Exact`] rationals for
//! hertz-exact frequency plans.

pub mod chain;
pub mod dynamics;
pub mod freqplan;
pub mod gate;
pub mod protocol;
pub mod readout;
pub mod scalar;

pub use scalar::{Exact, Real, Scalar};

pub type CombSpec = freqplan::CombSpec<f64>;
pub type QubitSpecies = freqplan::QubitSpecies<f64>;
pub type AomBand = freqplan::AomBand<f64>;
pub type FrequencyPlan = freqplan::FrequencyPlan<f64>;
pub type ExactFrequencyPlan = freqplan::FrequencyPlan<Exact>;
pub type MotionalMode = dynamics::MotionalMode<f64>;
pub type DriveParams = dynamics::DriveParams<f64>;
pub type Spectrum = dynamics::Spectrum<f64>;
pub type GateSequence = gate::GateSequence<f64>;
pub type DriveSegment = gate::DriveSegment<f64>;
pub type NoiseModel = gate::NoiseModel<f64>;
pub type ConfusionMatrix = readout::ConfusionMatrix<f64>;
pub type OutcomeDistribution = readout::OutcomeDistribution<f64>;
pub type LevelState = protocol::LevelState<f64>;
pub type PulseErrors = protocol::PulseErrors<f64>;
pub type IonChainConfig = chain::IonChainConfig<f64>;
pub type EquilibriumResult = chain::EquilibriumResult<f64>;
