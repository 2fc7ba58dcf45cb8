//! The shared experiment document read by every subcommand.

use std::path::Path;

use dualtype::chain::IonChainConfig;
use dualtype::dynamics::{DriveParams, ModeLabel, MotionalMode};
use dualtype::freqplan::{AomBand, BeatSign, CombSpec, QubitSpecies, SpeciesLabel};
use dualtype::gate::{build_heuristic_sequence, BasisState, HeuristicParams, NoiseModel};
use dualtype::protocol::PulseErrors;
use dualtype::readout::BellModel;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Built-in defaults, identical to `data/published.json`.
pub const DEFAULT_CONFIG_JSON: &str = include_str!("../../../data/published.json");

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{source_name}: field `{path}`: {message}")]
    Parse {
        source_name: String,
        path: String,
        message: String,
        line: usize,
        column: usize,
    },
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
    #[error("{0}")]
    Io(String),
}

fn invalid(field: &str, e: impl std::fmt::Display) -> ConfigError {
    ConfigError::Invalid {
        field: field.into(),
        message: e.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CombSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comment: Option<String>,
    pub repetition_rate_hz: f64,
    pub pulse_width_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeciesEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comment: Option<String>,
    pub splitting_hz: f64,
    pub tooth: u32,
    pub pll_hz: f64,
    pub beat_sign: BeatSign,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeciesSection {
    #[serde(rename = "S")]
    pub s: SpeciesEntry,
    #[serde(rename = "F")]
    pub f: SpeciesEntry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comment: Option<String>,
    pub label: ModeLabel,
    pub frequency_hz: f64,
    pub eta: Vec<f64>,
    pub nbar: f64,
}

/// Carrier Rabi oscillations of both qubit types under one laser intensity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comment: Option<String>,
    pub rabi_rate_f_rad_s: f64,
    /// S-type over F-type carrier Rabi rate.
    pub sf_rabi_ratio: f64,
    /// Fractional contrast loss per Rabi period of the S-type qubit.
    pub loss_per_period_s: f64,
    /// F-type loss per period over S-type loss per period.
    pub loss_ratio_f_to_s: f64,
    pub periods: f64,
    pub points_per_period: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comment: Option<String>,
    pub ion_index: usize,
    pub rabi_rate_rad_s: f64,
    pub duration_s: f64,
    #[serde(default)]
    pub decay_rate_per_s: f64,
    pub start_hz: f64,
    pub stop_hz: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comment: Option<String>,
    pub com_frequency_hz: f64,
    pub rocking_frequency_hz: f64,
    pub segment_count: usize,
    pub gap_s: f64,
    pub edge_length: usize,
    pub relocated: usize,
    /// Starting Rabi rates; the designer rescales both to reach `target_phase_rad`.
    pub rabi_rate_s_rad_s: f64,
    pub rabi_rate_f_rad_s: f64,
    pub eta: f64,
    pub nbar_com: f64,
    pub nbar_rocking: f64,
    pub target_phase_rad: f64,
    pub samples_per_segment: usize,
    pub initial_state: BasisState,
    pub analysis_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comment: Option<String>,
    /// `null` disables spin dephasing.
    pub spin_coherence_time_s: Option<f64>,
    /// `null` disables motional dephasing.
    pub motional_coherence_time_s: Option<f64>,
    pub shots: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseErrorSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comment: Option<String>,
    pub raman355: f64,
    pub pi411: f64,
    pub pi3432a: f64,
    pub pi3432b: f64,
    pub pump976: f64,
    pub pump370: f64,
    #[serde(default)]
    pub microwave_s: f64,
    #[serde(default)]
    pub microwave_f: f64,
    #[serde(default)]
    pub shelf_decay: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comment: Option<String>,
    /// Shots per prepared state in the synthesized confusion matrix.
    pub confusion_shots: u64,
    pub calibration_starts: usize,
    pub rounds: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticBellSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comment: Option<String>,
    pub population_even: f64,
    pub contrast: f64,
    pub phase_offset_rad: f64,
    pub shots: u64,
    pub analysis_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReadoutSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comment: Option<String>,
    pub synthetic_bell: SyntheticBellSection,
    pub bootstrap_resamples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comment: Option<String>,
    pub charges: Vec<u32>,
    pub trap_curvature: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comment: Option<String>,
    pub comb: CombSection,
    pub species: SpeciesSection,
    pub aom_band_hz: [f64; 2],
    pub modes: Vec<ModeEntry>,
    pub drive: DriveSection,
    pub spectrum: SpectrumSection,
    pub gate: GateSection,
    pub noise: NoiseSection,
    pub pulse_errors: PulseErrorSection,
    pub protocol: ProtocolSection,
    pub readout: ReadoutSection,
    pub chain: ChainSection,
    pub seed: u64,
    pub output_dir: String,
}

impl ExperimentConfig {
    pub fn published() -> Self {
        Self::from_json("published.json", DEFAULT_CONFIG_JSON).expect("bundled configuration is valid")
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&path.display().to_string(), &text)
    }

    /// Parses and validates; errors carry the offending field path.
    pub fn from_json(source_name: &str, text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            ConfigError::Parse {
                source_name: source_name.into(),
                path,
                message: inner.to_string(),
                line: inner.line(),
                column: inner.column(),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Lowercase hex SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }

    pub fn comb(&self) -> Result<CombSpec<f64>, ConfigError> {
        CombSpec::new(self.comb.repetition_rate_hz, self.comb.pulse_width_s).map_err(|e| invalid("comb", e))
    }

    pub fn band(&self) -> Result<AomBand<f64>, ConfigError> {
        AomBand::new(self.aom_band_hz[0], self.aom_band_hz[1]).map_err(|e| invalid("aom_band_hz", e))
    }

    pub fn species(&self, label: SpeciesLabel) -> Result<(QubitSpecies<f64>, &SpeciesEntry), ConfigError> {
        let (entry, field) = match label {
            SpeciesLabel::S => (&self.species.s, "species.S"),
            SpeciesLabel::F => (&self.species.f, "species.F"),
        };
        let sp = QubitSpecies::new(label, entry.splitting_hz, entry.tooth).map_err(|e| invalid(field, e))?;
        Ok((sp, entry))
    }

    pub fn modes(&self) -> Result<Vec<MotionalMode<f64>>, ConfigError> {
        self.modes
            .iter()
            .enumerate()
            .map(|(i, m)| {
                MotionalMode::new(m.label, m.frequency_hz, m.eta.clone(), m.nbar)
                    .map_err(|e| invalid(&format!("modes[{i}]"), e))
            })
            .collect()
    }

    /// `(S drive, F drive)` on resonance; durations are left at zero.
    pub fn carrier_drives(&self) -> Result<(DriveParams<f64>, DriveParams<f64>), ConfigError> {
        let d = &self.drive;
        let positive = |v: f64, f: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(invalid(f, format!("must be positive, got {v}")))
            }
        };
        positive(d.rabi_rate_f_rad_s, "drive.rabi_rate_f_rad_s")?;
        positive(d.sf_rabi_ratio, "drive.sf_rabi_ratio")?;
        positive(d.periods, "drive.periods")?;
        positive(d.loss_ratio_f_to_s, "drive.loss_ratio_f_to_s")?;
        if d.points_per_period < 2 {
            return Err(invalid("drive.points_per_period", "need at least 2"));
        }
        let loss_f = d.loss_per_period_s * d.loss_ratio_f_to_s;
        if !(0.0..1.0).contains(&d.loss_per_period_s) || !(0.0..1.0).contains(&loss_f) {
            return Err(invalid("drive.loss_per_period_s", "loss per period must lie in [0, 1) for both types"));
        }
        let omega_s = d.rabi_rate_f_rad_s * d.sf_rabi_ratio;
        let make = |omega: f64, loss: f64| DriveParams {
            rabi_rate: omega,
            detuning: 0.0,
            duration: 0.0,
            decay_rate: DriveParams::proportional_decay(omega, loss),
        };
        Ok((make(omega_s, d.loss_per_period_s), make(d.rabi_rate_f_rad_s, loss_f)))
    }

    pub fn spectrum_drive(&self) -> Result<DriveParams<f64>, ConfigError> {
        let s = &self.spectrum;
        let d = DriveParams {
            rabi_rate: s.rabi_rate_rad_s,
            detuning: 0.0,
            duration: s.duration_s,
            decay_rate: s.decay_rate_per_s,
        };
        d.validate().map_err(|e| invalid("spectrum", e))?;
        if s.points < 2 || !(s.stop_hz > s.start_hz) {
            return Err(invalid("spectrum", "need at least 2 points and stop_hz > start_hz"));
        }
        Ok(d)
    }

    pub fn spectrum_grid(&self) -> Vec<f64> {
        let s = &self.spectrum;
        let step = (s.stop_hz - s.start_hz) / (s.points - 1) as f64;
        (0..s.points).map(|i| s.start_hz + step * i as f64).collect()
    }

    pub fn heuristic(&self) -> HeuristicParams<f64> {
        let g = &self.gate;
        HeuristicParams {
            com_frequency: g.com_frequency_hz,
            rocking_frequency: g.rocking_frequency_hz,
            segment_count: g.segment_count,
            gap: g.gap_s,
            edge_length: g.edge_length,
            relocated: g.relocated,
            rabi_rate_s: g.rabi_rate_s_rad_s,
            rabi_rate_f: g.rabi_rate_f_rad_s,
            eta: g.eta,
            nbar_com: g.nbar_com,
            nbar_rocking: g.nbar_rocking,
        }
    }

    pub fn noise(&self, seed: u64) -> NoiseModel<f64> {
        let n = &self.noise;
        NoiseModel {
            spin_coherence_time: n.spin_coherence_time_s.unwrap_or(f64::INFINITY),
            motional_coherence_time: n.motional_coherence_time_s.unwrap_or(f64::INFINITY),
            shots: n.shots,
            seed,
        }
    }

    pub fn pulse_errors(&self) -> PulseErrors<f64> {
        let p = &self.pulse_errors;
        PulseErrors {
            raman355: p.raman355,
            pi411: p.pi411,
            pi3432a: p.pi3432a,
            pi3432b: p.pi3432b,
            pump976: p.pump976,
            pump370: p.pump370,
            microwave_s: p.microwave_s,
            microwave_f: p.microwave_f,
            shelf_decay: p.shelf_decay,
        }
    }

    pub fn bell_model(&self) -> BellModel {
        let b = &self.readout.synthetic_bell;
        BellModel {
            population_even: b.population_even,
            contrast: b.contrast,
            phase_offset: b.phase_offset_rad,
        }
    }

    pub fn chain(&self) -> IonChainConfig<f64> {
        IonChainConfig {
            charges: self.chain.charges.clone(),
            trap_curvature: self.chain.trap_curvature,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.comb()?;
        self.band()?;
        self.species(SpeciesLabel::S)?;
        self.species(SpeciesLabel::F)?;
        self.modes()?;
        self.carrier_drives()?;
        self.spectrum_drive()?;
        build_heuristic_sequence(&self.heuristic()).map_err(|e| invalid("gate", e))?;
        if !(self.gate.target_phase_rad > 0.0 && self.gate.target_phase_rad.is_finite()) {
            return Err(invalid("gate.target_phase_rad", "must be positive"));
        }
        if self.gate.analysis_points < 4 {
            return Err(invalid("gate.analysis_points", "need at least 4"));
        }
        self.noise(self.seed).validate().map_err(|e| invalid("noise", e))?;
        self.pulse_errors().validate().map_err(|e| invalid("pulse_errors", e))?;
        if self.protocol.confusion_shots == 0 {
            return Err(invalid("protocol.confusion_shots", "must be positive"));
        }
        if self.protocol.rounds.contains(&0) {
            return Err(invalid("protocol.rounds", "rounds must be at least 1"));
        }
        let b = &self.readout.synthetic_bell;
        if !(0.0..=1.0).contains(&b.population_even) || !(0.0..=1.0).contains(&b.contrast) {
            return Err(invalid("readout.synthetic_bell", "population_even and contrast must lie in [0, 1]"));
        }
        if b.shots == 0 || b.analysis_points < 4 {
            return Err(invalid("readout.synthetic_bell", "need shots > 0 and at least 4 analysis points"));
        }
        if self.readout.bootstrap_resamples < 100 {
            return Err(invalid("readout.bootstrap_resamples", "need at least 100"));
        }
        self.chain().validate().map_err(|e| invalid("chain", e))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_config_loads() {
        let c = ExperimentConfig::published();
        assert_eq!(c.species.s.tooth, 158);
        assert_eq!(c.hash(), ExperimentConfig::published().hash());
    }

    #[test]
    fn parse_error_names_field() {
        let text = DEFAULT_CONFIG_JSON.replace("\"tooth\": 158", "\"tooth\": \"many\"");
        match ExperimentConfig::from_json("x", &text) {
            Err(ConfigError::Parse { path, line, .. }) => {
                assert_eq!(path, "species.S.tooth");
                assert!(line > 1);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn invariant_error_names_field() {
        let text = DEFAULT_CONFIG_JSON.replace("\"nbar\": 0.3", "\"nbar\": -0.3");
        match ExperimentConfig::from_json("x", &text) {
            Err(ConfigError::Invalid { field, .. }) => assert_eq!(field, "modes[0]"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
