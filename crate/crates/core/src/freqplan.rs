//! Beat-note planning for Raman transitions bridged by a frequency comb.
//!
//! All quantities are ordinary frequencies in hertz. A plan satisfies
//!
//! ```text
//! tooth * repetition_rate + sign * (awg - pll) = splitting + detuning
//! ```
//!
//! where `sign` is the relative orientation of the AOM difference term with
//! respect to the comb tooth (see [`BeatSign`]).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("{what} must be positive, got {value}")]
    NonPositive { what: &'static str, value: f64 },
    #[error("no comb tooth within {span} Hz of {splitting} Hz (nearest k = {nearest}, residual {residual} Hz)")]
    NoBridgeableTooth {
        splitting: f64,
        span: f64,
        nearest: i64,
        residual: f64,
    },
    #[error("AWG frequency {frequency} Hz lies outside the AOM band [{low}, {high}] Hz")]
    OutOfBand { frequency: f64, low: f64, high: f64 },
    #[error("invalid AOM band [{low}, {high}] Hz")]
    InvalidBand { low: f64, high: f64 },
}

/// Pulsed-laser comb: repetition rate and pulse width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CombSpec<T = f64> {
    pub repetition_rate: T,
    pub pulse_width: T,
}

impl<T: Scalar> CombSpec<T> {
    pub fn new(repetition_rate: T, pulse_width: T) -> Result<Self, PlanError> {
        positive("repetition rate", repetition_rate)?;
        positive("pulse width", pulse_width)?;
        Ok(Self {
            repetition_rate,
            pulse_width,
        })
    }

    /// Transform-limited optical bandwidth.
    pub fn bandwidth(&self) -> Result<CombBandwidth<T>, PlanError> {
        comb_bandwidth(self)
    }
}

/// Optical bandwidth of the comb.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CombBandwidth<T = f64>(pub T);

impl<T: Scalar> CombBandwidth<T> {
    pub fn hz(&self) -> T {
        self.0
    }

    /// True iff a Raman splitting fits inside the comb bandwidth.
    pub fn covers(&self, splitting: T) -> bool {
        splitting < self.0
    }
}

pub fn comb_bandwidth<T: Scalar>(comb: &CombSpec<T>) -> Result<CombBandwidth<T>, PlanError> {
    positive("pulse width", comb.pulse_width)?;
    Ok(CombBandwidth(T::one() / comb.pulse_width))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SpeciesLabel {
    S,
    F,
}

impl std::fmt::Display for SpeciesLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SpeciesLabel::S => write!(f, "S"),
            SpeciesLabel::F => write!(f, "F"),
        }
    }
}

/// A qubit type: its hyperfine splitting and the comb tooth bridging it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QubitSpecies<T = f64> {
    pub label: SpeciesLabel,
    pub splitting: T,
    pub tooth_index: u32,
}

impl<T: Scalar> QubitSpecies<T> {
    pub fn new(label: SpeciesLabel, splitting: T, tooth_index: u32) -> Result<Self, PlanError> {
        positive("qubit splitting", splitting)?;
        if tooth_index == 0 {
            return Err(PlanError::NonPositive {
                what: "tooth index",
                value: 0.0,
            });
        }
        Ok(Self {
            label,
            splitting,
            tooth_index,
        })
    }

    fn tooth(&self) -> T {
        T::from_int(i64::from(self.tooth_index))
    }
}

/// Relative sign between the AOM difference term and the comb-tooth term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BeatSign {
    Plus,
    Minus,
}

impl BeatSign {
    pub fn factor<T: Scalar>(self) -> T {
        match self {
            BeatSign::Plus => T::one(),
            BeatSign::Minus => -T::one(),
        }
    }
}

/// Tuning range of the acousto-optic modulators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AomBand<T = f64> {
    pub low: T,
    pub high: T,
}

impl<T: Scalar> AomBand<T> {
    pub fn new(low: T, high: T) -> Result<Self, PlanError> {
        if !(low > T::zero() && low < high) {
            return Err(PlanError::InvalidBand {
                low: low.approx(),
                high: high.approx(),
            });
        }
        Ok(Self { low, high })
    }

    pub fn contains(&self, f: T) -> bool {
        f >= self.low && f <= self.high
    }

    pub fn center(&self) -> T {
        (self.low + self.high) / T::from_int(2)
    }

    pub fn half_width(&self) -> T {
        (self.high - self.low) / T::from_int(2)
    }
}

impl Default for AomBand<f64> {
    fn default() -> Self {
        Self {
            low: 200e6,
            high: 280e6,
        }
    }
}

/// A solved beat-note configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyPlan<T = f64> {
    pub species: QubitSpecies<T>,
    pub pll_frequency: T,
    pub awg_frequency: T,
    pub detuning: T,
    pub beat_sign: BeatSign,
}

impl<T: Scalar> FrequencyPlan<T> {
    /// Raman beat frequency delivered to the ion for the given repetition rate.
    pub fn raman_frequency(&self, repetition_rate: T) -> T {
        self.species.tooth() * repetition_rate
            + self.beat_sign.factor::<T>() * (self.awg_frequency - self.pll_frequency)
    }

    /// Difference between the delivered beat and `splitting + detuning`.
    pub fn equation_residual(&self, repetition_rate: T) -> T {
        self.raman_frequency(repetition_rate) - (self.species.splitting + self.detuning)
    }
}

/// A comb tooth that brings the splitting within reach of the AOMs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToothCandidate<T = f64> {
    pub tooth_index: u32,
    /// `splitting - tooth_index * rep_rate`.
    pub residual: T,
}

/// Every tooth `k` with `|splitting - k * rep_rate| <= span`, nearest first.
pub fn select_tooth<T: Scalar>(
    splitting: T,
    rep_rate: T,
    aom_tuning_span: T,
) -> Result<Vec<ToothCandidate<T>>, PlanError> {
    positive("repetition rate", rep_rate)?;
    positive("qubit splitting", splitting)?;
    let ratio = splitting.approx() / rep_rate.approx();
    let reach = aom_tuning_span.abs().approx() / rep_rate.approx();
    let lo = ((ratio - reach).floor() as i64 - 1).max(1);
    let hi = (ratio + reach).ceil() as i64 + 1;

    let residual = |k: i64| splitting - T::from_int(k) * rep_rate;
    let mut found: Vec<ToothCandidate<T>> = (lo..=hi)
        .filter(|&k| residual(k).abs() <= aom_tuning_span)
        .map(|k| ToothCandidate {
            tooth_index: k as u32,
            residual: residual(k),
        })
        .collect();
    found.sort_by(|a, b| {
        a.residual
            .abs()
            .partial_cmp(&b.residual.abs())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.tooth_index.cmp(&b.tooth_index))
    });
    if found.is_empty() {
        let nearest = (ratio.round() as i64).max(1);
        return Err(PlanError::NoBridgeableTooth {
            splitting: splitting.approx(),
            span: aom_tuning_span.approx(),
            nearest,
            residual: residual(nearest).approx(),
        });
    }
    Ok(found)
}

/// Inputs for [`solve_awg`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanInputs<T = f64> {
    pub species: QubitSpecies<T>,
    pub pll_frequency: T,
    pub detuning: T,
    pub beat_sign: BeatSign,
}

/// Solves the beat-note equation for the AWG tone.
pub fn solve_awg<T: Scalar>(
    inputs: PlanInputs<T>,
    comb: &CombSpec<T>,
    band: &AomBand<T>,
) -> Result<FrequencyPlan<T>, PlanError> {
    let PlanInputs {
        species,
        pll_frequency,
        detuning,
        beat_sign,
    } = inputs;
    // sign * (awg - pll) = splitting + detuning - k * rep; sign is its own inverse
    let offset = species.splitting + detuning - species.tooth() * comb.repetition_rate;
    let awg_frequency = pll_frequency + beat_sign.factor::<T>() * offset;
    if !band.contains(awg_frequency) {
        return Err(PlanError::OutOfBand {
            frequency: awg_frequency.approx(),
            low: band.low.approx(),
            high: band.high.approx(),
        });
    }
    Ok(FrequencyPlan {
        species,
        pll_frequency,
        awg_frequency,
        detuning,
        beat_sign,
    })
}

/// Plans a species with the PLL parked at the band center.
pub fn plan_centered<T: Scalar>(
    species: QubitSpecies<T>,
    detuning: T,
    beat_sign: BeatSign,
    comb: &CombSpec<T>,
    band: &AomBand<T>,
) -> Result<FrequencyPlan<T>, PlanError> {
    solve_awg(
        PlanInputs {
            species,
            pll_frequency: band.center(),
            detuning,
            beat_sign,
        },
        comb,
        band,
    )
}

/// PLL frequency change keeping `pll - k * rep_rate` fixed under a
/// repetition-rate drift.
pub fn pll_drift_compensation<T: Scalar>(species: &QubitSpecies<T>, rep_rate_drift: T) -> T {
    species.tooth() * rep_rate_drift
}

fn positive<T: Scalar>(what: &'static str, value: T) -> Result<(), PlanError> {
    if value > T::zero() {
        Ok(())
    } else {
        Err(PlanError::NonPositive {
            what,
            value: value.approx(),
        })
    }
}
