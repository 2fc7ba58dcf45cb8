use num_complex::Complex;

use super::sequence::GateSequence;
use super::trajectory::segment_increments;
use super::GateError;
use crate::scalar::Real;

/// Two-qubit phase `chi` from cross pairs of segments on different ions.
pub fn entangling_phase<T: Real>(seq: &GateSequence<T>) -> T {
    entangling_phase_with_offset(seq, T::zero())
}

/// `chi` with every mode detuning shifted by `detuning_offset` rad/s.
pub fn entangling_phase_with_offset<T: Real>(seq: &GateSequence<T>, detuning_offset: T) -> T {
    (0..seq.modes.len())
        .map(|m| mode_phase(&segment_increments(seq, m, detuning_offset)))
        .sum()
}

pub(super) fn mode_phase<T: Real>(incs: &[Option<(super::Target, Complex<T>)>]) -> T {
    let zero = Complex::new(T::zero(), T::zero());
    let mut earlier = [zero; 2];
    let mut chi = T::zero();
    for (target, d) in incs.iter().flatten() {
        let other = earlier[target.other().index()];
        chi = chi + (*d * other.conj()).im;
        earlier[target.index()] = earlier[target.index()] + *d;
    }
    chi
}

/// Uniform Rabi-rate scale `s` with `chi(s * Omega) = target_chi`.
pub fn calibrate_rabi<T: Real>(seq: &GateSequence<T>, target_chi: T) -> Result<T, GateError> {
    let chi = entangling_phase(seq);
    let ratio = target_chi / chi;
    if chi == T::zero() || !(ratio > T::zero()) || !ratio.is_finite() {
        return Err(GateError::Uncalibratable(chi.approx()));
    }
    Ok(ratio.sqrt())
}
