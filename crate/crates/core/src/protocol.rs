//! Preparation and detection pulse sequences as population-transfer maps.
//!
//! Every ion carries a probability vector over [`Level`]. Pulses move
//! population incoherently; a pulse with transfer error `eps` leaves that
//! fraction behind. An ion reads bright when its population sits in the
//! `S1/2` manifold or in `D3/2`.

use argmin::core::{CostFunction, Executor, State};
use argmin::solver::neldermead::NelderMead;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::readout::ConfusionMatrix;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProtocolError {
    #[error("rounds must be at least 1")]
    ZeroRounds,
    #[error("shots must be at least 1")]
    ZeroShots,
    #[error("pulse error {name} = {value} outside [0, 1]")]
    ErrorOutOfRange { name: &'static str, value: f64 },
    #[error("sequence addresses ion {ion} of a {size}-ion register")]
    IonIndex { ion: usize, size: usize },
    #[error("calibration failed: {0}")]
    Calibration(String),
    #[error("sequence file: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Level {
    S0,
    S1,
    F0p,
    F1p,
    D52F2,
    D52F3,
    D32,
    Lost,
}

impl Level {
    pub const ALL: [Level; 8] = [
        Level::S0,
        Level::S1,
        Level::F0p,
        Level::F1p,
        Level::D52F2,
        Level::D52F3,
        Level::D32,
        Level::Lost,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_bright(self) -> bool {
        matches!(self, Level::S0 | Level::S1 | Level::D32)
    }
}

/// Populations of one ion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelState<T = f64> {
    pub populations: [T; 8],
}

impl<T: Real> LevelState<T> {
    pub fn pure(level: Level) -> Self {
        let mut populations = [T::zero(); 8];
        populations[level.index()] = T::one();
        Self { populations }
    }

    pub fn get(&self, level: Level) -> T {
        self.populations[level.index()]
    }

    pub fn total(&self) -> T {
        self.populations.iter().copied().sum()
    }

    pub fn bright_probability(&self) -> T {
        Level::ALL
            .iter()
            .filter(|l| l.is_bright())
            .map(|l| self.get(*l))
            .sum::<T>()
            .unit_clamp()
    }

    /// Exchanges `1 - eps` of the populations of `a` and `b`.
    fn swap(&mut self, a: Level, b: Level, eps: T) {
        let (pa, pb) = (self.get(a), self.get(b));
        let moved = T::one() - eps;
        self.populations[a.index()] = pa - moved * pa + moved * pb;
        self.populations[b.index()] = pb - moved * pb + moved * pa;
    }

    /// Moves `1 - eps` of each source population into `dst`.
    fn drain(&mut self, sources: &[Level], dst: Level, eps: T) {
        for &s in sources {
            let m = self.get(s) * (T::one() - eps);
            self.populations[s.index()] = self.populations[s.index()] - m;
            self.populations[dst.index()] = self.populations[dst.index()] + m;
        }
    }

    /// Conditions on the bright or dark outcome.
    pub fn post_select(&self, bright: bool) -> Option<Self> {
        let mut out = *self;
        for l in Level::ALL {
            if l.is_bright() != bright {
                out.populations[l.index()] = T::zero();
            }
        }
        let total = out.total();
        if total > T::zero() {
            out.populations.iter_mut().for_each(|p| *p = *p / total);
            Some(out)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PulseKind {
    /// `S0 <-> D5/2 F=2`.
    Pi411,
    /// `D5/2 F=2 <-> F0'`.
    Pi3432a,
    /// `D5/2 F=3 <-> F1'`.
    Pi3432b,
    /// Both 3432 nm tones at once.
    Pi3432,
    /// `D5/2 -> S0`.
    Pump976,
    /// `S1/2 -> D3/2` (370 nm with 935 nm off).
    Pump370No935,
    /// Fluorescence readout; leaves populations untouched.
    Detect370,
    /// `S0 <-> S1`.
    MicrowavePiS,
    /// `F0' <-> F1'`.
    MicrowavePiF,
    /// `S0 <-> S1` by the 355 nm Raman beams.
    Raman355Pi,
}

impl PulseKind {
    /// Whether the pulse leaves the ion exposed to `D5/2` decay.
    fn shelves(self) -> bool {
        matches!(self, PulseKind::Pi411 | PulseKind::Pi3432a | PulseKind::Pi3432b | PulseKind::Pi3432)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseOp<T = f64> {
    pub kind: PulseKind,
    pub transfer_error: T,
}

/// Applies one pulse. The bichromatic 3432 nm pulse uses `transfer_error`
/// for the `a` tone and `second_error` for the `b` tone.
fn apply_raw<T: Real>(state: &LevelState<T>, kind: PulseKind, eps: T, second_error: T) -> LevelState<T> {
    use Level::*;
    let mut s = *state;
    match kind {
        PulseKind::Pi411 => s.swap(S0, D52F2, eps),
        PulseKind::Pi3432a => s.swap(D52F2, F0p, eps),
        PulseKind::Pi3432b => s.swap(D52F3, F1p, eps),
        PulseKind::Pi3432 => {
            s.swap(D52F2, F0p, eps);
            s.swap(D52F3, F1p, second_error);
        }
        PulseKind::Pump976 => s.drain(&[D52F2, D52F3], S0, eps),
        PulseKind::Pump370No935 => s.drain(&[S0, S1], D32, eps),
        PulseKind::Detect370 => {}
        PulseKind::MicrowavePiS | PulseKind::Raman355Pi => s.swap(S0, S1, eps),
        PulseKind::MicrowavePiF => s.swap(F0p, F1p, eps),
    }
    s
}

/// One pulse with a single transfer error (used for both 3432 nm tones).
pub fn apply_pulse<T: Real>(state: &LevelState<T>, pulse: &PulseOp<T>) -> LevelState<T> {
    apply_raw(state, pulse.kind, pulse.transfer_error, pulse.transfer_error)
}

/// Per-pulse transfer errors of the whole apparatus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseErrors<T = f64> {
    pub raman355: T,
    pub pi411: T,
    pub pi3432a: T,
    pub pi3432b: T,
    pub pump976: T,
    pub pump370: T,
    #[serde(default)]
    pub microwave_s: T,
    #[serde(default)]
    pub microwave_f: T,
    /// Fraction of `D5/2` population decaying to `S0` during each 411 or 3432 nm pulse.
    #[serde(default)]
    pub shelf_decay: T,
}

impl<T: Real> Default for PulseErrors<T> {
    fn default() -> Self {
        Self::ideal()
    }
}

impl<T: Real> PulseErrors<T> {
    pub fn ideal() -> Self {
        Self {
            raman355: T::zero(),
            pi411: T::zero(),
            pi3432a: T::zero(),
            pi3432b: T::zero(),
            pump976: T::zero(),
            pump370: T::zero(),
            microwave_s: T::zero(),
            microwave_f: T::zero(),
            shelf_decay: T::zero(),
        }
    }

    /// Result of [`calibrate`] on the published observables, rounded.
    pub fn calibrated() -> Self {
        Self {
            raman355: T::lit(0.0247),
            pi411: T::lit(0.0262),
            pi3432a: T::lit(0.0102),
            pi3432b: T::lit(0.0261),
            pump976: T::lit(0.0007),
            pump370: T::zero(),
            microwave_s: T::zero(),
            microwave_f: T::zero(),
            shelf_decay: T::lit(0.0011),
        }
    }

    pub fn named(&self) -> [(&'static str, T); 9] {
        [
            ("raman355", self.raman355),
            ("pi411", self.pi411),
            ("pi3432a", self.pi3432a),
            ("pi3432b", self.pi3432b),
            ("pump976", self.pump976),
            ("pump370", self.pump370),
            ("microwave_s", self.microwave_s),
            ("microwave_f", self.microwave_f),
            ("shelf_decay", self.shelf_decay),
        ]
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        for (name, v) in self.named() {
            if !(v >= T::zero() && v <= T::one()) {
                return Err(ProtocolError::ErrorOutOfRange { name, value: v.approx() });
            }
        }
        Ok(())
    }

    /// Applies `kind` with this apparatus' error, followed by shelf decay.
    pub fn apply(&self, state: &LevelState<T>, kind: PulseKind) -> LevelState<T> {
        let (eps, second) = match kind {
            PulseKind::Pi411 => (self.pi411, T::zero()),
            PulseKind::Pi3432a => (self.pi3432a, T::zero()),
            PulseKind::Pi3432b => (self.pi3432b, T::zero()),
            PulseKind::Pi3432 => (self.pi3432a, self.pi3432b),
            PulseKind::Pump976 => (self.pump976, T::zero()),
            PulseKind::Pump370No935 => (self.pump370, T::zero()),
            PulseKind::Detect370 => (T::zero(), T::zero()),
            PulseKind::MicrowavePiS => (self.microwave_s, T::zero()),
            PulseKind::MicrowavePiF => (self.microwave_f, T::zero()),
            PulseKind::Raman355Pi => (self.raman355, T::zero()),
        };
        let mut out = apply_raw(state, kind, eps, second);
        if kind.shelves() && self.shelf_decay > T::zero() {
            out.drain(&[Level::D52F2, Level::D52F3], Level::S0, T::one() - self.shelf_decay);
        }
        out
    }
}

/// One step of a declarative sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SequenceStep {
    /// Global pulse on every ion.
    Global(PulseKind),
    /// Pulse on the listed ions only.
    Addressed { pulse: PulseKind, ions: Vec<usize> },
    Repeat { repeat: usize, body: Vec<SequenceStep> },
}

pub fn parse_sequence(json: &str) -> Result<Vec<SequenceStep>, ProtocolError> {
    serde_json::from_str(json).map_err(|e| ProtocolError::Format(e.to_string()))
}

/// Runs `steps` on a register of ions in place.
pub fn run_sequence<T: Real>(
    steps: &[SequenceStep],
    register: &mut [LevelState<T>],
    errors: &PulseErrors<T>,
) -> Result<(), ProtocolError> {
    for step in steps {
        match step {
            SequenceStep::Global(kind) => {
                for ion in register.iter_mut() {
                    *ion = errors.apply(ion, *kind);
                }
            }
            SequenceStep::Addressed { pulse, ions } => {
                for &i in ions {
                    let size = register.len();
                    let ion = register.get_mut(i).ok_or(ProtocolError::IonIndex { ion: i, size })?;
                    *ion = errors.apply(ion, *pulse);
                }
            }
            SequenceStep::Repeat { repeat, body } => {
                for _ in 0..*repeat {
                    run_sequence(body, register, errors)?;
                }
            }
        }
    }
    Ok(())
}

/// Raman flip of ion 0, global 411/3432 mapping, 976 nm repump, readout.
pub fn prepare_sf_sequence() -> Vec<SequenceStep> {
    use PulseKind::*;
    vec![
        SequenceStep::Addressed {
            pulse: Raman355Pi,
            ions: vec![0],
        },
        SequenceStep::Global(Pi411),
        SequenceStep::Global(Pi3432),
        SequenceStep::Global(Pump976),
        SequenceStep::Global(Detect370),
    ]
}

/// 3432, 411, 3432: exchanges `S0` and `F0'`, fixes `S1` and `F1'`.
pub fn joint_map_sequence() -> Vec<SequenceStep> {
    use PulseKind::*;
    vec![
        SequenceStep::Global(Pi3432),
        SequenceStep::Global(Pi411),
        SequenceStep::Global(Pi3432),
    ]
}

pub fn detect_f_sequence(rounds: usize) -> Vec<SequenceStep> {
    let mut body = joint_map_sequence();
    body.push(SequenceStep::Global(PulseKind::Pump370No935));
    vec![
        SequenceStep::Repeat { repeat: rounds, body },
        SequenceStep::Global(PulseKind::Detect370),
    ]
}

pub fn detect_joint_sequence() -> Vec<SequenceStep> {
    let mut s = joint_map_sequence();
    s.push(SequenceStep::Global(PulseKind::Detect370));
    s
}

fn run_single<T: Real>(steps: &[SequenceStep], start: Level, errors: &PulseErrors<T>) -> LevelState<T> {
    let mut reg = [LevelState::pure(start)];
    run_sequence(steps, &mut reg, errors).expect("built-in sequences address ion 0 only");
    reg[0]
}

pub fn joint_map<T: Real>(state: &LevelState<T>, errors: &PulseErrors<T>) -> LevelState<T> {
    let mut reg = [*state];
    run_sequence(&joint_map_sequence(), &mut reg, errors).expect("global sequence");
    reg[0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrepResult<T = f64> {
    /// Probability that ion 0 reads bright and ion 1 dark.
    pub success_probability: T,
    /// Post-selected states of `[S-type ion, F-type ion]`, if success is possible.
    pub post_selected: Option<[LevelState<T>; 2]>,
}

/// Prepares `|1, 0'>` from `|0, 0>` and verifies it.
pub fn run_prepare_sf<T: Real>(errors: &PulseErrors<T>) -> Result<PrepResult<T>, ProtocolError> {
    errors.validate()?;
    let mut reg = [LevelState::pure(Level::S0), LevelState::pure(Level::S0)];
    run_sequence(&prepare_sf_sequence(), &mut reg, errors)?;
    let success = reg[0].bright_probability() * (T::one() - reg[1].bright_probability());
    let post = match (reg[0].post_select(true), reg[1].post_select(false)) {
        (Some(a), Some(b)) if success > T::zero() => Some([a, b]),
        _ => None,
    };
    Ok(PrepResult {
        success_probability: success,
        post_selected: post,
    })
}

/// Misclassification probability for each of two basis states.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Infidelity<T = f64> {
    pub zero: T,
    pub one: T,
}

impl<T: Real> Infidelity<T> {
    pub fn mean(&self) -> T {
        (self.zero + self.one) / T::lit(2.0)
    }
}

/// F-type readout: `|0'>` must read bright, `|1'>` dark.
pub fn run_detect_f<T: Real>(errors: &PulseErrors<T>, rounds: usize) -> Result<Infidelity<T>, ProtocolError> {
    errors.validate()?;
    if rounds == 0 {
        return Err(ProtocolError::ZeroRounds);
    }
    let seq = detect_f_sequence(rounds);
    Ok(Infidelity {
        zero: T::one() - run_single(&seq, Level::F0p, errors).bright_probability(),
        one: run_single(&seq, Level::F1p, errors).bright_probability(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointInfidelity<T = f64> {
    /// `|0>` reads dark, `|1>` bright.
    pub s_type: Infidelity<T>,
    /// `|0'>` reads bright, `|1'>` dark.
    pub f_type: Infidelity<T>,
}

/// One pass of the simultaneous two-type readout.
pub fn run_detect_joint<T: Real>(errors: &PulseErrors<T>) -> Result<JointInfidelity<T>, ProtocolError> {
    errors.validate()?;
    let seq = detect_joint_sequence();
    let bright = |l: Level| run_single(&seq, l, errors).bright_probability();
    Ok(JointInfidelity {
        s_type: Infidelity {
            zero: bright(Level::S0),
            one: T::one() - bright(Level::S1),
        },
        f_type: Infidelity {
            zero: T::one() - bright(Level::F0p),
            one: bright(Level::F1p),
        },
    })
}

/// Measured-vs-prepared probabilities of the joint readout for `|s f'>` inputs.
pub fn joint_confusion<T: Real>(errors: &PulseErrors<T>) -> Result<ConfusionMatrix<T>, ProtocolError> {
    errors.validate()?;
    let read = detect_joint_sequence();
    let mut entries = [[T::zero(); 4]; 4];
    for col in 0..4 {
        let (s, f) = (col >> 1 == 1, col & 1 == 1);
        let mut ion_s = LevelState::pure(Level::S0);
        if s {
            ion_s = errors.apply(&ion_s, PulseKind::MicrowavePiS);
        }
        let mut ion_f = LevelState::pure(Level::F0p);
        if f {
            ion_f = errors.apply(&ion_f, PulseKind::MicrowavePiF);
        }
        let mut reg = [ion_s, ion_f];
        run_sequence(&read, &mut reg, errors)?;
        // S reads 1 when bright; F reads 0' when bright
        let p_s1 = reg[0].bright_probability();
        let p_f1 = T::one() - reg[1].bright_probability();
        for (row, slot) in entries.iter_mut().enumerate() {
            let ps = if row >> 1 == 1 { p_s1 } else { T::one() - p_s1 };
            let pf = if row & 1 == 1 { p_f1 } else { T::one() - p_f1 };
            slot[col] = ps * pf;
        }
    }
    ConfusionMatrix::new(entries).map_err(|e| ProtocolError::Calibration(e.to_string()))
}

/// Monte Carlo estimate of [`joint_confusion`] with `shots` per prepared state.
///
/// Each column is drawn from its own ChaCha stream so columns are independent
/// of evaluation order.
pub fn synthesize_confusion_matrix<T: Real>(
    errors: &PulseErrors<T>,
    shots: u64,
    seed: u64,
) -> Result<ConfusionMatrix<T>, ProtocolError> {
    if shots == 0 {
        return Err(ProtocolError::ZeroShots);
    }
    let exact = joint_confusion(errors)?;
    let mut entries = [[T::zero(); 4]; 4];
    for col in 0..4 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(col as u64);
        let p = exact.column(col);
        let mut remaining = shots;
        let mut mass = 1.0;
        for row in 0..4 {
            let k = if row == 3 || mass <= 0.0 {
                remaining
            } else {
                let q = (p[row].approx() / mass).clamp(0.0, 1.0);
                Binomial::new(remaining, q).expect("valid binomial").sample(&mut rng)
            };
            entries[row][col] = T::from_u64(k).expect("count fits") / T::from_u64(shots).expect("shots fit");
            remaining -= k;
            mass -= p[row].approx();
        }
    }
    ConfusionMatrix::new(entries).map_err(|e| ProtocolError::Calibration(e.to_string()))
}

/// The five published observables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observables<T = f64> {
    pub prep_success: T,
    pub f_detect_zero: T,
    pub f_detect_one: T,
    pub joint_s: T,
    pub joint_f: T,
}

impl Observables<f64> {
    pub const PUBLISHED: Self = Self {
        prep_success: 0.94,
        f_detect_zero: 0.005,
        f_detect_one: 0.009,
        joint_s: 0.005,
        joint_f: 0.028,
    };
}

impl<T: Real> Observables<T> {
    pub fn evaluate(errors: &PulseErrors<T>) -> Result<Self, ProtocolError> {
        let prep = run_prepare_sf(errors)?;
        let f = run_detect_f(errors, 5)?;
        let j = run_detect_joint(errors)?;
        Ok(Self {
            prep_success: prep.success_probability,
            f_detect_zero: f.zero,
            f_detect_one: f.one,
            joint_s: j.s_type.mean(),
            joint_f: j.f_type.mean(),
        })
    }

    pub fn as_array(&self) -> [T; 5] {
        [self.prep_success, self.f_detect_zero, self.f_detect_one, self.joint_s, self.joint_f]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub errors: PulseErrors<f64>,
    pub fitted: Observables<f64>,
    pub target: Observables<f64>,
    /// Sum of squared residuals.
    pub cost: f64,
}

/// Parameters varied by the fit, in order.
const FIT_NAMES: [&str; 7] = ["raman355", "pi411", "pi3432a", "pi3432b", "pump976", "pump370", "shelf_decay"];
const FIT_UPPER: f64 = 0.1;

fn unpack(x: &[f64]) -> PulseErrors<f64> {
    let c = |v: f64| v.clamp(0.0, FIT_UPPER);
    PulseErrors {
        raman355: c(x[0]),
        pi411: c(x[1]),
        pi3432a: c(x[2]),
        pi3432b: c(x[3]),
        pump976: c(x[4]),
        pump370: c(x[5]),
        microwave_s: 0.0,
        microwave_f: 0.0,
        shelf_decay: c(x[6]),
    }
}

struct FitProblem {
    target: [f64; 5],
}

impl CostFunction for FitProblem {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, x: &Self::Param) -> Result<f64, argmin::core::Error> {
        let e = unpack(x);
        let obs = Observables::evaluate(&e)?.as_array();
        let resid: f64 = obs.iter().zip(self.target).map(|(o, t)| (o - t).powi(2)).sum();
        // bounds and "411 nm error is the largest"
        let mut penalty = 0.0;
        for (i, v) in x.iter().enumerate() {
            penalty += (v - FIT_UPPER).max(0.0).powi(2) + (-v).max(0.0).powi(2);
            if i != 1 && i != 6 {
                penalty += (v - x[1]).max(0.0).powi(2);
            }
        }
        Ok(resid + 1e3 * penalty)
    }
}

/// Least-squares fit of the pulse errors to `target`, multi-start Nelder-Mead.
///
/// The fit keeps every error in `[0, 0.1]` and the 411 nm error no smaller
/// than any other pulse error.
pub fn calibrate(target: &Observables<f64>, starts: usize, seed: u64) -> Result<Calibration, ProtocolError> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(Vec<f64>, f64)> = None;
    for _ in 0..starts.max(1) {
        let x0: Vec<f64> = (0..FIT_NAMES.len()).map(|_| rng.random_range(0.0..0.05)).collect();
        let mut simplex = vec![x0.clone()];
        for i in 0..x0.len() {
            let mut v = x0.clone();
            v[i] += 0.01;
            simplex.push(v);
        }
        let solver = NelderMead::new(simplex)
            .with_sd_tolerance(1e-14)
            .map_err(|e| ProtocolError::Calibration(e.to_string()))?;
        let res = Executor::new(
            FitProblem {
                target: target.as_array(),
            },
            solver,
        )
        .configure(|s| s.max_iters(6000))
        .run()
        .map_err(|e| ProtocolError::Calibration(e.to_string()))?;
        let state = res.state();
        let cost = state.get_best_cost();
        if let Some(p) = state.get_best_param() {
            if best.as_ref().is_none_or(|b| cost < b.1) {
                best = Some((p.clone(), cost));
            }
        }
    }
    let (x, _) = best.ok_or_else(|| ProtocolError::Calibration("no finite optimum".into()))?;
    let errors = unpack(&x);
    let fitted = Observables::evaluate(&errors)?;
    let cost = fitted
        .as_array()
        .iter()
        .zip(target.as_array())
        .map(|(o, t)| (o - t).powi(2))
        .sum();
    Ok(Calibration {
        errors,
        fitted,
        target: *target,
        cost,
    })
}
