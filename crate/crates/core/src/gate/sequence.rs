use num_complex::Complex;
use serde::{Deserialize, Serialize};

use super::phase::entangling_phase;
use super::trajectory::segment_increments;
use super::GateError;
use crate::dynamics::{ModeLabel, MotionalMode};
use crate::scalar::Real;

/// Ion addressed by a segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Target {
    IonS,
    IonF,
}

impl Target {
    pub fn index(self) -> usize {
        match self {
            Target::IonS => 0,
            Target::IonF => 1,
        }
    }

    pub fn other(self) -> Self {
        match self {
            Target::IonS => Target::IonF,
            Target::IonF => Target::IonS,
        }
    }
}

/// One piecewise-constant drive interval, or a switching gap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveSegment<T = f64> {
    pub target: Target,
    #[serde(rename = "duration_s")]
    pub duration: T,
    /// Motional phase of the spin-dependent force, rad.
    #[serde(rename = "phase_rad")]
    pub phase: T,
    #[serde(rename = "rabi_rate_rad_s")]
    pub rabi_rate: T,
    pub is_gap: bool,
}

impl<T: Real> DriveSegment<T> {
    pub fn drive(target: Target, duration: T, phase: T, rabi_rate: T) -> Self {
        Self {
            target,
            duration,
            phase,
            rabi_rate,
            is_gap: false,
        }
    }

    pub fn gap(duration: T) -> Self {
        Self {
            target: Target::IonS,
            duration,
            phase: T::zero(),
            rabi_rate: T::zero(),
            is_gap: true,
        }
    }
}

/// Ordered segments, the bichromatic drive frequency, and the two modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateSequence<T = f64> {
    pub segments: Vec<DriveSegment<T>>,
    /// Symmetric drive frequency in the mode frame, Hz.
    pub mu: T,
    pub modes: [MotionalMode<T>; 2],
}

impl<T: Real> GateSequence<T> {
    pub fn validate(&self) -> Result<(), GateError> {
        for m in &self.modes {
            m.validate()?;
            if m.eta.len() != 2 {
                return Err(GateError::InvalidSequence("modes must couple to exactly two ions".into()));
            }
        }
        for (i, s) in self.segments.iter().enumerate() {
            if !(s.duration > T::zero()) {
                return Err(GateError::InvalidSequence(format!("segment {i} has non-positive duration")));
            }
            if s.is_gap && s.rabi_rate != T::zero() {
                return Err(GateError::InvalidSequence(format!("gap {i} carries drive")));
            }
            if !s.rabi_rate.is_finite() || !s.phase.is_finite() {
                return Err(GateError::InvalidSequence(format!("segment {i} is not finite")));
            }
        }
        Ok(())
    }

    /// Angular detuning of the drive from mode `m`, rad/s.
    pub fn mode_detuning(&self, m: usize) -> T {
        T::TAU() * (self.mu - self.modes[m].frequency)
    }

    pub fn total_duration(&self) -> T {
        self.segments.iter().map(|s| s.duration).sum()
    }

    /// Start time of every segment.
    pub fn start_times(&self) -> Vec<T> {
        let mut t = T::zero();
        self.segments
            .iter()
            .map(|s| {
                let start = t;
                t = t + s.duration;
                start
            })
            .collect()
    }

    pub fn drive_segments(&self) -> impl Iterator<Item = &DriveSegment<T>> {
        self.segments.iter().filter(|s| !s.is_gap)
    }

    /// Lengths of consecutive runs of drive segments on the same ion.
    pub fn target_runs(&self) -> Vec<(Target, usize)> {
        let mut runs: Vec<(Target, usize)> = Vec::new();
        for s in self.drive_segments() {
            match runs.last_mut() {
                Some((t, n)) if *t == s.target => *n += 1,
                _ => runs.push((s.target, 1)),
            }
        }
        runs
    }

    /// Multiplies every Rabi rate by `s`.
    pub fn scaled(&self, s: T) -> Self {
        let mut out = self.clone();
        for seg in out.segments.iter_mut().filter(|seg| !seg.is_gap) {
            seg.rabi_rate = seg.rabi_rate * s;
        }
        out
    }

    /// Adds `offset` to the phase of every drive segment on `target`.
    pub fn phase_shifted(&self, target: Target, offset: T) -> Self {
        let mut out = self.clone();
        for seg in out.segments.iter_mut().filter(|seg| !seg.is_gap && seg.target == target) {
            seg.phase = seg.phase + offset;
        }
        out
    }

    /// Reversed segment order with conjugated phases.
    pub fn time_reversed(&self) -> Self {
        let mut out = self.clone();
        out.segments.reverse();
        for seg in out.segments.iter_mut() {
            seg.phase = -seg.phase;
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Result<String>
    where
        T: Serialize,
    {
        serde_json::to_string_pretty(&self.segments)
    }
}

/// Inputs of the heuristic rectangle designer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeuristicParams<T = f64> {
    /// Center-of-mass mode frequency during the gate, Hz.
    pub com_frequency: T,
    /// Rocking mode frequency during the gate, Hz.
    pub rocking_frequency: T,
    pub segment_count: usize,
    /// Switching gap between consecutive segments, s.
    pub gap: T,
    pub edge_length: usize,
    /// Segments of the first edge moved to the end of each block.
    pub relocated: usize,
    pub rabi_rate_s: T,
    pub rabi_rate_f: T,
    /// |eta| on both ions for both modes.
    pub eta: T,
    pub nbar_com: T,
    pub nbar_rocking: T,
}

impl HeuristicParams<f64> {
    /// Published gate settings; Rabi rates are placeholders until calibrated.
    pub fn published() -> Self {
        Self {
            com_frequency: 2.271e6,
            rocking_frequency: 2.203e6,
            segment_count: 40,
            gap: 2e-6,
            edge_length: 5,
            relocated: 2,
            rabi_rate_s: std::f64::consts::TAU * 100e3,
            rabi_rate_f: std::f64::consts::TAU * 100e3,
            eta: 0.1,
            nbar_com: 0.3,
            nbar_rocking: 0.1,
        }
    }
}

/// Timing summary of a designed sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateTiming<T = f64> {
    pub segment_duration_s: T,
    pub segment_count: usize,
    pub gap_s: T,
    /// Segments plus the gaps between them.
    pub total_duration_s: T,
    /// Segments plus one gap per segment.
    pub total_with_trailing_gap_s: T,
    pub arc_com_rad: T,
    pub arc_rocking_rad: T,
}

impl<T: Real> HeuristicParams<T> {
    /// `4 pi / (3 (omega_c - omega_r))` expressed with ordinary frequencies.
    pub fn segment_duration(&self) -> T {
        T::lit(2.0) / (T::lit(3.0) * (self.com_frequency - self.rocking_frequency).abs())
    }

    pub fn timing(&self) -> GateTiming<T> {
        let tau = self.segment_duration();
        let n = T::from_int(self.segment_count as i64);
        let half_split = T::TAU() * (self.com_frequency - self.rocking_frequency).abs() / T::lit(2.0);
        GateTiming {
            segment_duration_s: tau,
            segment_count: self.segment_count,
            gap_s: self.gap,
            total_duration_s: n * tau + (n - T::one()) * self.gap,
            total_with_trailing_gap_s: n * (tau + self.gap),
            arc_com_rad: half_split * tau,
            arc_rocking_rad: half_split * tau,
        }
    }

    fn validate(&self) -> Result<usize, GateError> {
        let bad = |m: String| Err(GateError::InvalidParams(m));
        if self.com_frequency == self.rocking_frequency {
            return Err(GateError::DegenerateModes(self.com_frequency.approx()));
        }
        if !(self.com_frequency > T::zero() && self.rocking_frequency > T::zero()) {
            return bad("mode frequencies must be positive".into());
        }
        if self.edge_length == 0 || self.segment_count % (2 * self.edge_length) != 0 {
            return bad(format!(
                "segment count {} is not a multiple of twice the edge length {}",
                self.segment_count, self.edge_length
            ));
        }
        let edges = self.segment_count / (2 * self.edge_length);
        if edges < 4 || edges % 2 != 0 {
            return bad(format!("each block needs an even number (>= 4) of edges, got {edges}"));
        }
        if self.relocated >= self.edge_length {
            return bad("relocated segments must be fewer than the edge length".into());
        }
        if !(self.gap >= T::zero()) || !(self.rabi_rate_s >= T::zero()) || !(self.rabi_rate_f >= T::zero()) {
            return bad("gap and Rabi rates must be non-negative".into());
        }
        Ok(edges)
    }
}

/// Designs the alternating phase-modulated sequence.
///
/// Each block of `segment_count / 2` segments drives a closed polygon
/// (a rectangle for the default settings) in the center-of-mass frame:
/// edges alternate between the ions, phases within an edge track
/// `-delta_com * t_start` so that the arcs add colinearly, and successive
/// edges turn by `2 pi / edges`. The second block repeats the first with a
/// phase offset that cancels the rocking-mode displacement. The first
/// `relocated` segments of each block's first edge are played at the end
/// of the block instead.
pub fn build_heuristic_sequence<T: Real>(params: &HeuristicParams<T>) -> Result<GateSequence<T>, GateError> {
    let edges = params.validate()?;
    let modes = [
        MotionalMode::two_ion(ModeLabel::CenterOfMass, params.com_frequency, params.eta, params.nbar_com)?,
        MotionalMode::two_ion(ModeLabel::Rocking, params.rocking_frequency, params.eta, params.nbar_rocking)?,
    ];
    let mu = (params.com_frequency + params.rocking_frequency) / T::lit(2.0);

    let forward = assemble(params, edges, &modes, mu, T::one());
    if entangling_phase(&forward) >= T::zero() {
        return Ok(forward);
    }
    Ok(assemble(params, edges, &modes, mu, -T::one()))
}

fn assemble<T: Real>(
    params: &HeuristicParams<T>,
    edges: usize,
    modes: &[MotionalMode<T>; 2],
    mu: T,
    orientation: T,
) -> GateSequence<T> {
    let tau = params.segment_duration();
    let delta_com = T::TAU() * (mu - params.com_frequency);
    let delta_roc = T::TAU() * (mu - params.rocking_frequency);
    let per_block = params.segment_count / 2;

    // (edge index, target) in playing order within one block
    let mut order: Vec<(usize, Target)> = (0..per_block)
        .map(|k| {
            let edge = k / params.edge_length;
            let target = if edge % 2 == 0 { Target::IonS } else { Target::IonF };
            (edge, target)
        })
        .collect();
    order.rotate_left(params.relocated);

    let turn = T::TAU() / T::from_int(edges as i64);
    let period = tau + params.gap;
    let block_offset = T::from_int(per_block as i64) * period;
    let block_phase = [T::zero(), T::PI() - (delta_roc - delta_com) * block_offset];

    let mut segments = Vec::with_capacity(2 * params.segment_count);
    let mut k = 0usize;
    for theta in block_phase {
        for &(edge, target) in &order {
            if k > 0 && params.gap > T::zero() {
                segments.push(DriveSegment::gap(params.gap));
            }
            let start = T::from_int(k as i64) * period;
            let phase = orientation * turn * T::from_int(edge as i64) - delta_com * start + theta;
            let rabi = match target {
                Target::IonS => params.rabi_rate_s,
                Target::IonF => params.rabi_rate_f,
            };
            segments.push(DriveSegment::drive(target, tau, wrap(phase), rabi));
            k += 1;
        }
    }
    GateSequence {
        segments,
        mu,
        modes: modes.clone(),
    }
}

/// Wraps into `[0, 2 pi)`.
fn wrap<T: Real>(x: T) -> T {
    let r = x % T::TAU();
    if r < T::zero() {
        r + T::TAU()
    } else {
        r
    }
}

/// Per-ion final displacement of mode `m`, `[alpha_S(T), alpha_F(T)]`.
pub fn per_ion_final<T: Real>(seq: &GateSequence<T>, m: usize, detuning_offset: T) -> [Complex<T>; 2] {
    let mut acc = [Complex::new(T::zero(), T::zero()); 2];
    for inc in segment_increments(seq, m, detuning_offset).into_iter().flatten() {
        acc[inc.0.index()] = acc[inc.0.index()] + inc.1;
    }
    acc
}
