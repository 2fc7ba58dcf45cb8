use num_complex::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::phase::mode_phase;
use super::sequence::GateSequence;
use super::trajectory::segment_increments;
use super::GateError;
use crate::readout::fit_parity;
use crate::scalar::Real;

type C<T> = Complex<T>;
type M4<T> = [[C<T>; 4]; 4];
type M2<T> = [[C<T>; 2]; 2];

/// Quasi-static dephasing model and Monte Carlo settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel<T = f64> {
    /// Gaussian spin coherence time `T2`, s. Infinite disables spin noise.
    pub spin_coherence_time: T,
    /// Gaussian motional coherence time, s. Infinite disables mode noise.
    pub motional_coherence_time: T,
    pub shots: usize,
    pub seed: u64,
}

impl NoiseModel<f64> {
    pub fn published(seed: u64) -> Self {
        Self {
            spin_coherence_time: 2.5e-3,
            motional_coherence_time: 2e-3,
            shots: 10_000,
            seed,
        }
    }
}

impl<T: Real> NoiseModel<T> {
    pub fn noiseless() -> Self {
        Self {
            spin_coherence_time: T::infinity(),
            motional_coherence_time: T::infinity(),
            shots: 1,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), GateError> {
        if self.shots == 0 {
            return Err(GateError::InvalidNoise("shots must be at least 1".into()));
        }
        if !(self.spin_coherence_time > T::zero()) || !(self.motional_coherence_time > T::zero()) {
            return Err(GateError::InvalidNoise("coherence times must be positive".into()));
        }
        Ok(())
    }

    /// Per-qubit phase standard deviation for a gate of length `duration`.
    ///
    /// `<e^{i phi}> = e^{-(t/T2)^2}` fixes `var(phi) = 2 (t/T2)^2`.
    pub fn spin_phase_sigma(&self, duration: T) -> T {
        T::lit(2.0).sqrt() * duration / self.spin_coherence_time
    }

    /// Mode detuning standard deviation, rad/s.
    pub fn detuning_sigma(&self) -> T {
        T::lit(2.0).sqrt() / self.motional_coherence_time
    }
}

/// Computational basis state `|s f'>`, indexed as `00', 01', 10', 11'`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BasisState {
    pub s: bool,
    pub f: bool,
}

impl BasisState {
    pub const fn new(s: bool, f: bool) -> Self {
        Self { s, f }
    }

    pub fn index(self) -> usize {
        2 * self.s as usize + self.f as usize
    }

    pub fn flipped(self) -> Self {
        Self::new(!self.s, !self.f)
    }

    pub fn label(self) -> &'static str {
        ["00'", "01'", "10'", "11'"][self.index()]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationOptions {
    /// Analysis phases, evenly spaced over `[0, 2 pi)`.
    pub analysis_points: usize,
    /// Populations counted as "even"; defaults to the initial state and its flip.
    /// For an odd pair the F-qubit analysis phase is `-phi` instead of `phi`.
    pub target_pair: Option<[BasisState; 2]>,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        Self {
            analysis_points: 64,
            target_pair: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateOutcome<T = f64> {
    /// Over `00', 01', 10', 11'`.
    pub populations: [T; 4],
    /// `(analysis phase, parity)`.
    pub parity_curve: Vec<(T, T)>,
    pub target_population: T,
    pub contrast: T,
    /// `(target population + contrast) / 2`.
    pub bell_fidelity: T,
    /// Overlap with the noiseless output state.
    pub state_fidelity: T,
    pub chi: T,
    pub shots: usize,
}

impl<T: Real> GateOutcome<T> {
    pub fn write_parity_csv<W: std::io::Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["analysis_phase_rad", "parity"])?;
        for (phi, p) in &self.parity_curve {
            w.write_record([phi.to_string(), p.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Averages the two-qubit state over quasi-static noise realizations.
///
/// Each shot draws independent spin phase errors on both qubits, applied as
/// `Z` rotations after the gate, and one detuning error shared by both modes.
/// The gate is then the exact displacement-plus-phase map for the perturbed
/// detuning, traced over thermal motional states.
pub fn simulate_gate<T: Real>(
    seq: &GateSequence<T>,
    initial: BasisState,
    noise: &NoiseModel<T>,
    options: &SimulationOptions,
) -> Result<GateOutcome<T>, GateError> {
    seq.validate()?;
    noise.validate()?;
    if options.analysis_points < 3 {
        return Err(GateError::InvalidParams("need at least 3 analysis phases".into()));
    }
    let duration = seq.total_duration();
    let spin_sigma = noise.spin_phase_sigma(duration);
    let det_sigma = noise.detuning_sigma();
    let psi0 = initial_x_state::<T>(initial);

    let noiseless = spin_sigma == T::zero() && det_sigma == T::zero();
    let shots = if noiseless { 1 } else { noise.shots };

    let states: Vec<M4<T>> = (0..shots)
        .into_par_iter()
        .map(|shot| {
            let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
            rng.set_stream(shot as u64);
            let phi_s = spin_sigma * T::standard_normal(&mut rng);
            let phi_f = spin_sigma * T::standard_normal(&mut rng);
            let eps = det_sigma * T::standard_normal(&mut rng);
            shot_state(seq, &psi0, eps, phi_s, phi_f)
        })
        .collect();
    let mut rho = zero4::<T>();
    for st in &states {
        for i in 0..4 {
            for j in 0..4 {
                rho[i][j] = rho[i][j] + st[i][j];
            }
        }
    }
    let norm = T::from_int(shots as i64);
    for row in rho.iter_mut() {
        for v in row.iter_mut() {
            *v = *v / norm;
        }
    }

    let populations = [0, 1, 2, 3].map(|i| rho[i][i].re.unit_clamp());
    let pair = options.target_pair.unwrap_or([initial, initial.flipped()]);
    // an odd pair's coherence only responds to opposite analysis phases
    let f_sign = if pair[0].s == pair[0].f { T::one() } else { -T::one() };
    let parity_curve: Vec<(T, T)> = (0..options.analysis_points)
        .map(|k| {
            let phi = T::TAU() * T::from_int(k as i64) / T::from_int(options.analysis_points as i64);
            (phi, analysis_parity(&rho, phi, f_sign * phi))
        })
        .collect();
    let fit = fit_parity(&parity_curve).map_err(|e| GateError::InvalidParams(e.to_string()))?;
    let target_population = if pair[0] == pair[1] {
        populations[pair[0].index()]
    } else {
        populations[pair[0].index()] + populations[pair[1].index()]
    };
    let contrast = fit.contrast.unit_clamp();

    let ideal = shot_state(seq, &psi0, T::zero(), T::zero(), T::zero());
    let state_fidelity = overlap(&ideal, &rho);

    Ok(GateOutcome {
        populations,
        parity_curve,
        target_population,
        contrast,
        bell_fidelity: (target_population + contrast) / T::lit(2.0),
        state_fidelity,
        chi: super::phase::entangling_phase(seq),
        shots,
    })
}

fn zero4<T: Real>() -> M4<T> {
    [[C::new(T::zero(), T::zero()); 4]; 4]
}

/// `+1` for `x = 0` (`|+>`), `-1` for `x = 1` (`|->`).
fn x_sign<T: Real>(bit: usize) -> T {
    if bit == 0 {
        T::one()
    } else {
        -T::one()
    }
}

/// Amplitudes of a computational state in the `x` basis.
fn initial_x_state<T: Real>(b: BasisState) -> [C<T>; 4] {
    let mut out = [C::new(T::zero(), T::zero()); 4];
    for (k, o) in out.iter_mut().enumerate() {
        let (xs, xf) = (k >> 1, k & 1);
        let sign = if (xs == 1 && b.s) ^ (xf == 1 && b.f) { -T::one() } else { T::one() };
        *o = C::new(sign / T::lit(2.0), T::zero());
    }
    out
}

/// Output density matrix (computational basis) for one noise realization.
fn shot_state<T: Real>(seq: &GateSequence<T>, psi_x: &[C<T>; 4], eps: T, phi_s: T, phi_f: T) -> M4<T> {
    let zero = C::new(T::zero(), T::zero());
    let mut chi = T::zero();
    // beta[m][k]: displacement of mode m for x-basis configuration k
    let mut beta = vec![[zero; 4]; seq.modes.len()];
    for (m, b) in beta.iter_mut().enumerate() {
        let incs = segment_increments(seq, m, eps);
        chi = chi + mode_phase(&incs);
        let mut per_ion = [zero; 2];
        for (t, d) in incs.iter().flatten() {
            per_ion[t.index()] = per_ion[t.index()] + *d;
        }
        for (k, slot) in b.iter_mut().enumerate() {
            *slot = per_ion[0] * x_sign::<T>(k >> 1) + per_ion[1] * x_sign::<T>(k & 1);
        }
    }

    let mut rho_x = zero4::<T>();
    for a in 0..4 {
        let pa = x_sign::<T>(a >> 1) * x_sign::<T>(a & 1);
        for b in 0..4 {
            let pb = x_sign::<T>(b >> 1) * x_sign::<T>(b & 1);
            let mut log = C::new(T::zero(), chi * (pa - pb));
            for (m, bm) in beta.iter().enumerate() {
                let half = T::lit(0.5);
                let d = bm[a] - bm[b];
                log = log
                    + C::new(
                        -(seq.modes[m].nbar + half) * d.norm_sqr(),
                        (bm[b].conj() * bm[a]).im,
                    );
            }
            rho_x[a][b] = psi_x[a] * psi_x[b].conj() * log.exp();
        }
    }

    // back to the computational basis: H (x) H is real symmetric
    let h = hadamard2::<T>();
    let mut rho = conjugate(&h, &rho_x);
    for (a, row) in rho.iter_mut().enumerate() {
        for (b, v) in row.iter_mut().enumerate() {
            let z = |k: usize| (x_sign::<T>(k >> 1) * phi_s + x_sign::<T>(k & 1) * phi_f) / T::lit(2.0);
            *v = *v * C::from_polar(T::one(), z(b) - z(a));
        }
    }
    rho
}

fn kron<T: Real>(a: &M2<T>, b: &M2<T>) -> M4<T> {
    let mut out = zero4::<T>();
    for i in 0..4 {
        for j in 0..4 {
            out[i][j] = a[i >> 1][j >> 1] * b[i & 1][j & 1];
        }
    }
    out
}

fn hadamard2<T: Real>() -> M4<T> {
    let r = T::one() / T::lit(2.0).sqrt();
    let h = [[C::new(r, T::zero()), C::new(r, T::zero())], [C::new(r, T::zero()), C::new(-r, T::zero())]];
    kron(&h, &h)
}

/// `U rho U^dagger`.
fn conjugate<T: Real>(u: &M4<T>, rho: &M4<T>) -> M4<T> {
    let mut tmp = zero4::<T>();
    for i in 0..4 {
        for j in 0..4 {
            for k in 0..4 {
                tmp[i][j] = tmp[i][j] + u[i][k] * rho[k][j];
            }
        }
    }
    let mut out = zero4::<T>();
    for i in 0..4 {
        for j in 0..4 {
            for k in 0..4 {
                out[i][j] = out[i][j] + tmp[i][k] * u[j][k].conj();
            }
        }
    }
    out
}

/// Parity after `pi/2` rotations about `cos(phi) X + sin(phi) Y`, one phase per qubit.
fn analysis_parity<T: Real>(rho: &M4<T>, phi_s: T, phi_f: T) -> T {
    let r = T::one() / T::lit(2.0).sqrt();
    let rot = |phi: T| {
        let off = |sign: T| C::new(T::zero(), -r) * C::from_polar(T::one(), sign * phi);
        [[C::new(r, T::zero()), off(-T::one())], [off(T::one()), C::new(r, T::zero())]]
    };
    let out = conjugate(&kron(&rot(phi_s), &rot(phi_f)), rho);
    out[0][0].re - out[1][1].re - out[2][2].re + out[3][3].re
}

/// `Tr(rho_a rho_b)`, equal to `<psi|rho_b|psi>` when `rho_a` is pure.
fn overlap<T: Real>(a: &M4<T>, b: &M4<T>) -> T {
    let mut acc = C::new(T::zero(), T::zero());
    for i in 0..4 {
        for j in 0..4 {
            acc = acc + a[i][j] * b[j][i];
        }
    }
    acc.re
}
