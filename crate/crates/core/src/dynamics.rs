//! Carrier and sideband dynamics of a single qubit coupled to thermal
//! motional modes in the Lamb-Dicke regime.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error("invalid motional mode: {0}")]
    InvalidMode(String),
    #[error("invalid drive: {0}")]
    InvalidDrive(String),
    #[error("ion index {index} out of range for a mode with {ions} ions")]
    IonIndex { index: usize, ions: usize },
    #[error("detuning grid must be non-empty and strictly increasing")]
    BadGrid,
    #[error("red sideband ({p_red}) is not weaker than blue ({p_blue}); no thermal state matches")]
    NotThermalizable { p_red: f64, p_blue: f64 },
    #[error("probability {0} outside [0, 1]")]
    Probability(f64),
}

/// Default truncation of the thermal phonon distribution.
pub const DEFAULT_N_MAX: usize = 200;
/// Tail mass beyond the truncation above which a warning is emitted.
pub const TAIL_WARNING: f64 = 1e-8;
/// Largest |eta| accepted as Lamb-Dicke.
pub const LAMB_DICKE_LIMIT: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModeLabel {
    CenterOfMass,
    Rocking,
}

/// One collective phonon mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionalMode<T = f64> {
    pub label: ModeLabel,
    /// Hz.
    pub frequency: T,
    /// Signed Lamb-Dicke parameter per ion.
    pub eta: Vec<T>,
    pub nbar: T,
}

impl<T: Real> MotionalMode<T> {
    pub fn new(label: ModeLabel, frequency: T, eta: Vec<T>, nbar: T) -> Result<Self, DynamicsError> {
        let mode = Self {
            label,
            frequency,
            eta,
            nbar,
        };
        mode.validate()?;
        Ok(mode)
    }

    /// Two-ion mode with `|eta|` on both ions and the sign pattern of `label`.
    pub fn two_ion(label: ModeLabel, frequency: T, eta: T, nbar: T) -> Result<Self, DynamicsError> {
        let second = match label {
            ModeLabel::CenterOfMass => eta,
            ModeLabel::Rocking => -eta,
        };
        Self::new(label, frequency, vec![eta, second], nbar)
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        let bad = |msg: String| Err(DynamicsError::InvalidMode(msg));
        if !(self.frequency > T::zero()) {
            return bad(format!("frequency must be positive, got {}", self.frequency));
        }
        if !(self.nbar >= T::zero()) {
            return bad(format!("nbar must be non-negative, got {}", self.nbar));
        }
        if self.eta.is_empty() {
            return bad("at least one Lamb-Dicke parameter is required".into());
        }
        if let Some(e) = self.eta.iter().find(|e| !(e.abs() < T::lit(LAMB_DICKE_LIMIT))) {
            return bad(format!("|eta| = {} outside the Lamb-Dicke regime", e.abs()));
        }
        let nonzero: Vec<T> = self.eta.iter().copied().filter(|e| *e != T::zero()).collect();
        let all_same = nonzero.windows(2).all(|w| w[0].signum() == w[1].signum());
        match self.label {
            ModeLabel::CenterOfMass if !all_same => bad("center-of-mass mode needs equal-sign eta".into()),
            ModeLabel::Rocking if nonzero.len() >= 2 && all_same => {
                bad("rocking mode needs opposite-sign eta".into())
            }
            _ => Ok(()),
        }
    }

    pub fn eta_for(&self, ion: usize) -> Result<T, DynamicsError> {
        self.eta.get(ion).copied().ok_or(DynamicsError::IonIndex {
            index: ion,
            ions: self.eta.len(),
        })
    }
}

/// Drive parameters for a single addressed transition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveParams<T = f64> {
    /// Carrier Rabi rate, rad/s.
    pub rabi_rate: T,
    /// Detuning from the addressed resonance, Hz.
    pub detuning: T,
    /// Pulse duration, s.
    pub duration: T,
    /// Contrast damping rate, 1/s.
    pub decay_rate: T,
}

impl<T: Real> DriveParams<T> {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        let check = |ok: bool, msg: &str| if ok { Ok(()) } else { Err(DynamicsError::InvalidDrive(msg.into())) };
        check(self.rabi_rate >= T::zero(), "rabi_rate must be >= 0")?;
        check(self.duration >= T::zero(), "duration must be >= 0")?;
        check(self.decay_rate >= T::zero(), "decay_rate must be >= 0")?;
        check(self.detuning.is_finite(), "detuning must be finite")
    }

    /// Decay rate that keeps the contrast loss per Rabi period at `loss_per_period`.
    pub fn proportional_decay(rabi_rate: T, loss_per_period: T) -> T {
        // exp(-gamma * 2 pi / Omega) = 1 - loss
        -(T::one() - loss_per_period).ln() * rabi_rate / T::TAU()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sideband {
    Red,
    Blue,
}

/// Sampled flip probability versus detuning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum<T = f64> {
    /// `(detuning_hz, flip_probability)`.
    pub points: Vec<(T, T)>,
}

impl<T: Real> Spectrum<T> {
    /// Flip probability at the grid point nearest `detuning`.
    pub fn at(&self, detuning: T) -> Option<T> {
        self.points
            .iter()
            .min_by(|a, b| (a.0 - detuning).abs().partial_cmp(&(b.0 - detuning).abs()).unwrap())
            .map(|p| p.1)
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["detuning_hz", "flip_probability"])?;
        for (d, p) in &self.points {
            w.write_record([format!("{d}"), format!("{p}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Off-resonant Rabi flip probability for coupling `omega` (rad/s) and
/// angular detuning `delta` (rad/s) after time `t`, with contrast damping.
pub fn rabi_lineshape<T: Real>(omega: T, delta: T, gamma: T, t: T) -> T {
    let w2 = omega * omega + delta * delta;
    let undamped = if w2 == T::zero() {
        T::zero()
    } else {
        let s = (w2.sqrt() * t / T::lit(2.0)).sin();
        omega * omega / w2 * s * s
    };
    damp(undamped, gamma, t)
}

/// Pulls a flip probability toward 1/2 by `exp(-gamma t)`.
fn damp<T: Real>(p: T, gamma: T, t: T) -> T {
    let half = T::lit(0.5);
    let env = (-gamma * t).exp();
    (half - half * env * (T::one() - p * T::lit(2.0))).unit_clamp()
}

/// Damped carrier Rabi flip probability at time `t`.
pub fn carrier_flip_probability<T: Real>(drive: &DriveParams<T>, t: T) -> T {
    let delta = T::TAU() * drive.detuning;
    rabi_lineshape(drive.rabi_rate, delta, drive.decay_rate, t)
}

/// Thermal occupation probabilities `p_n = nbar^n / (nbar+1)^(n+1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThermalDistribution<T = f64> {
    pub weights: Vec<T>,
    pub tail_mass: T,
}

impl<T: Real> ThermalDistribution<T> {
    pub fn new(nbar: T, n_max: usize) -> Self {
        let ratio = nbar / (nbar + T::one());
        let mut w = T::one() / (nbar + T::one());
        let mut weights = Vec::with_capacity(n_max + 1);
        for _ in 0..=n_max {
            weights.push(w);
            w = w * ratio;
        }
        // P(n > n_max) = ratio^(n_max + 1)
        let tail_mass = ratio.powi(n_max as i32 + 1);
        Self { weights, tail_mass }
    }

    fn warn_if_truncated(&self, nbar: T) {
        if self.tail_mass > T::lit(TAIL_WARNING) {
            log::warn!(
                "thermal distribution with nbar = {nbar} truncated at n = {} leaves tail mass {}",
                self.weights.len() - 1,
                self.tail_mass
            );
        }
    }
}

/// Thermally averaged lineshape for a process whose coupling on `|n>` is
/// `omega * coupling(n)`.
fn thermal_lineshape<T: Real>(
    dist: &ThermalDistribution<T>,
    coupling: impl Fn(usize) -> T,
    omega: T,
    delta: T,
    gamma: T,
    t: T,
) -> T {
    let undamped: T = dist
        .weights
        .iter()
        .enumerate()
        .map(|(n, &p)| p * rabi_lineshape(omega * coupling(n), delta, T::zero(), t))
        .sum();
    damp(undamped, gamma, t)
}

fn sideband_coupling<T: Real>(eta: T, sideband: Sideband) -> impl Fn(usize) -> T {
    move |n| {
        let n = T::from_int(n as i64);
        match sideband {
            Sideband::Red => eta.abs() * n.sqrt(),
            Sideband::Blue => eta.abs() * (n + T::one()).sqrt(),
        }
    }
}

/// Thermally averaged sideband flip probability.
///
/// `drive.detuning` is measured from the addressed sideband resonance, so a
/// resonant sideband pulse has zero detuning.
pub fn sideband_flip_probability<T: Real>(
    mode: &MotionalMode<T>,
    ion_index: usize,
    drive: &DriveParams<T>,
    sideband: Sideband,
    t: T,
) -> Result<T, DynamicsError> {
    sideband_flip_probability_truncated(mode, ion_index, drive, sideband, t, DEFAULT_N_MAX)
}

pub fn sideband_flip_probability_truncated<T: Real>(
    mode: &MotionalMode<T>,
    ion_index: usize,
    drive: &DriveParams<T>,
    sideband: Sideband,
    t: T,
    n_max: usize,
) -> Result<T, DynamicsError> {
    let eta = mode.eta_for(ion_index)?;
    let dist = ThermalDistribution::new(mode.nbar, n_max);
    dist.warn_if_truncated(mode.nbar);
    Ok(thermal_lineshape(
        &dist,
        sideband_coupling(eta, sideband),
        drive.rabi_rate,
        T::TAU() * drive.detuning,
        drive.decay_rate,
        t,
    ))
}

/// Scans the drive detuning (Hz) across carrier and sidebands of `modes`.
///
/// Each point is evaluated against the nearest resonance only; carrier and
/// sidebands are treated as independent two-level processes.
pub fn scan_spectrum<T: Real>(
    modes: &[MotionalMode<T>],
    ion_index: usize,
    drive: &DriveParams<T>,
    detuning_grid: &[T],
) -> Result<Spectrum<T>, DynamicsError> {
    if detuning_grid.is_empty() || detuning_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(DynamicsError::BadGrid);
    }
    // (resonance Hz, mode index, sideband)
    let mut resonances: Vec<(T, Option<(usize, Sideband)>)> = vec![(T::zero(), None)];
    let mut dists = Vec::with_capacity(modes.len());
    for (i, m) in modes.iter().enumerate() {
        m.eta_for(ion_index)?;
        resonances.push((-m.frequency, Some((i, Sideband::Red))));
        resonances.push((m.frequency, Some((i, Sideband::Blue))));
        let d = ThermalDistribution::new(m.nbar, DEFAULT_N_MAX);
        d.warn_if_truncated(m.nbar);
        dists.push(d);
    }

    let t = drive.duration;
    let points = detuning_grid
        .iter()
        .map(|&det| {
            let (center, process) = resonances
                .iter()
                .copied()
                .min_by(|a, b| (a.0 - det).abs().partial_cmp(&(b.0 - det).abs()).unwrap())
                .expect("carrier is always present");
            let delta = T::TAU() * (det - center);
            let p = match process {
                None => rabi_lineshape(drive.rabi_rate, delta, drive.decay_rate, t),
                Some((i, sb)) => thermal_lineshape(
                    &dists[i],
                    sideband_coupling(modes[i].eta[ion_index], sb),
                    drive.rabi_rate,
                    delta,
                    drive.decay_rate,
                    t,
                ),
            };
            (det, p)
        })
        .collect();
    Ok(Spectrum { points })
}

/// Mean phonon number from the red/blue sideband ratio, `R / (1 - R)`.
pub fn estimate_nbar<T: Real>(p_red: T, p_blue: T) -> Result<T, DynamicsError> {
    for p in [p_red, p_blue] {
        if !(p >= T::zero() && p <= T::one()) {
            return Err(DynamicsError::Probability(p.approx()));
        }
    }
    if !(p_red < p_blue) {
        return Err(DynamicsError::NotThermalizable {
            p_red: p_red.approx(),
            p_blue: p_blue.approx(),
        });
    }
    let r = p_red / p_blue;
    Ok(r / (T::one() - r))
}

/// Relative intensity of a Gaussian beam at `separation` from its center.
pub fn gaussian_crosstalk<T: Real>(separation: T, beam_radius: T) -> T {
    let x = separation / beam_radius;
    (-T::lit(2.0) * x * x).exp()
}
