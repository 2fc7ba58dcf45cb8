use num_complex::Complex;
use serde::{Deserialize, Serialize};

use super::sequence::{DriveSegment, GateSequence, Target};
use crate::dynamics::ModeLabel;
use crate::scalar::{sinc, Real};

/// Phase-space path of one mode for the `|++>` spin configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory<T = f64> {
    pub mode_label: ModeLabel,
    /// `(time, alpha)` pairs starting at `(0, 0)`.
    pub samples: Vec<(T, Complex<T>)>,
    pub final_displacement: Complex<T>,
    /// `Im` of the closed-form loop integral of `alpha* d alpha`, rad.
    pub geometric_phase_contribution: T,
}

impl<T: Real> Trajectory<T> {
    /// Trapezoidal time average of `|alpha|` over the samples.
    pub fn time_averaged_magnitude(&self) -> T {
        let mut area = T::zero();
        for w in self.samples.windows(2) {
            let dt = w[1].0 - w[0].0;
            area = area + dt * (w[0].1.norm() + w[1].1.norm()) / T::lit(2.0);
        }
        let span = self.samples.last().map(|s| s.0).unwrap_or_else(T::zero);
        if span > T::zero() {
            area / span
        } else {
            T::zero()
        }
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["time_s", "re_alpha", "im_alpha"])?;
        for (t, a) in &self.samples {
            w.write_record([t.to_string(), a.re.to_string(), a.im.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `integral_0^tau e^{i delta s} ds`.
pub(super) fn arc_integral<T: Real>(delta: T, tau: T) -> Complex<T> {
    let half = delta * tau / T::lit(2.0);
    Complex::from_polar(tau * sinc(half), half)
}

/// `integral_0^tau (tau - v) e^{i delta v} dv`.
pub(super) fn loop_integral<T: Real>(delta: T, tau: T) -> Complex<T> {
    let x = delta * tau;
    let (re, im) = if x.abs() < T::lit(1e-3) {
        let x2 = x * x;
        (
            T::lit(0.5) - x2 / T::lit(24.0) + x2 * x2 / T::lit(720.0),
            x / T::lit(6.0) - x * x2 / T::lit(120.0) + x * x2 * x2 / T::lit(5040.0),
        )
    } else {
        ((T::one() - x.cos()) / (x * x), (x - x.sin()) / (x * x))
    };
    Complex::new(re, im) * (tau * tau)
}

/// Prefactor `c` with `alpha(t0 + s) = alpha(t0) + c * arc_integral(delta, s)`.
fn segment_prefactor<T: Real>(seg: &DriveSegment<T>, eta: T, delta: T, start: T) -> Complex<T> {
    let amp = eta * seg.rabi_rate / T::lit(2.0);
    Complex::new(T::zero(), -amp) * Complex::from_polar(T::one(), seg.phase + delta * start)
}

/// Displacement change of mode `m` over each segment, or `None` for gaps.
///
/// `detuning_offset` (rad/s) is added to the mode detuning.
pub fn segment_increments<T: Real>(
    seq: &GateSequence<T>,
    m: usize,
    detuning_offset: T,
) -> Vec<Option<(Target, Complex<T>)>> {
    let mode = &seq.modes[m];
    let delta = seq.mode_detuning(m) + detuning_offset;
    seq.segments
        .iter()
        .zip(seq.start_times())
        .map(|(seg, start)| {
            if seg.is_gap {
                return None;
            }
            let eta = mode.eta[seg.target.index()];
            let c = segment_prefactor(seg, eta, delta, start);
            Some((seg.target, c * arc_integral(delta, seg.duration)))
        })
        .collect()
}

/// Samples `alpha_m(t) = alpha_mS + alpha_mF` and accumulates the loop integral.
///
/// Each drive segment contributes `samples_per_segment` points; a gap adds
/// one point at its end.
pub fn integrate_displacement<T: Real>(seq: &GateSequence<T>, m: usize, samples_per_segment: usize) -> Trajectory<T> {
    let mode = &seq.modes[m];
    let delta = seq.mode_detuning(m);
    let n = samples_per_segment.max(1);
    let mut alpha = Complex::new(T::zero(), T::zero());
    let mut area = T::zero();
    let mut samples = vec![(T::zero(), alpha)];
    for (seg, start) in seq.segments.iter().zip(seq.start_times()) {
        if seg.is_gap {
            samples.push((start + seg.duration, alpha));
            continue;
        }
        let eta = mode.eta[seg.target.index()];
        let c = segment_prefactor(seg, eta, delta, start);
        for k in 1..=n {
            let s = seg.duration * T::from_int(k as i64) / T::from_int(n as i64);
            samples.push((start + s, alpha + c * arc_integral(delta, s)));
        }
        let arc = arc_integral(delta, seg.duration);
        area = area + (alpha.conj() * c * arc).im + c.norm_sqr() * loop_integral(delta, seg.duration).im;
        alpha = alpha + c * arc;
        if let Some(last) = samples.last_mut() {
            last.1 = alpha;
        }
    }
    Trajectory {
        mode_label: mode.label,
        samples,
        final_displacement: alpha,
        geometric_phase_contribution: area,
    }
}
