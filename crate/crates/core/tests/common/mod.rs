//! Independent numerical oracles shared by the integration tests.
#![allow(dead_code)]

use dualtype::gate::{GateSequence, Target};
use num_complex::Complex64;

/// Per-mode result of direct time stepping.
#[derive(Debug, Clone, Copy)]
pub struct Quadrature {
    /// `[alpha_S, alpha_F]` at the end of the sequence.
    pub alpha: [Complex64; 2],
    pub chi: f64,
}

/// RK4 integration of `A_j' = f_j`, `chi' = Im(f_S A_F* + f_F A_S*)` with step <= `max_step`.
pub fn rk4_mode(seq: &GateSequence<f64>, m: usize, max_step: f64) -> Quadrature {
    let delta = std::f64::consts::TAU * (seq.mu - seq.modes[m].frequency);
    let eta = &seq.modes[m].eta;
    let mut a = [Complex64::new(0.0, 0.0); 2];
    let mut chi = 0.0;
    let mut t0 = 0.0;
    for seg in &seq.segments {
        if seg.is_gap || seg.rabi_rate == 0.0 {
            t0 += seg.duration;
            continue;
        }
        let j = seg.target.index();
        let amp = eta[j] * seg.rabi_rate / 2.0;
        let force = |t: f64| Complex64::from_polar(amp, delta * t + seg.phase);
        let n = (seg.duration / max_step).ceil() as usize;
        let h = seg.duration / n as f64;
        let other = 1 - j;
        // the other ion's integral is frozen during this segment
        let frozen = a[other];
        for k in 0..n {
            let t = t0 + k as f64 * h;
            let f0 = force(t);
            let fm = force(t + h / 2.0);
            let f1 = force(t + h);
            // chi' = Im(f_j * conj(A_other)) with A_other constant
            chi += (h / 6.0 * (f0 + 4.0 * fm + f1) * frozen.conj()).im;
            a[j] += h / 6.0 * (f0 + 4.0 * fm + f1);
        }
        t0 += seg.duration;
    }
    Quadrature {
        alpha: [a[0] * Complex64::new(0.0, -1.0), a[1] * Complex64::new(0.0, -1.0)],
        chi,
    }
}

pub fn rk4_chi(seq: &GateSequence<f64>, max_step: f64) -> f64 {
    (0..seq.modes.len()).map(|m| rk4_mode(seq, m, max_step).chi).sum()
}

/// Midpoint double sum of `Im f_j(t) f_k*(t')` over `t' < t`, cross pairs only.
pub fn brute_double_integral(seq: &GateSequence<f64>, points: usize) -> f64 {
    let total: f64 = seq.segments.iter().map(|s| s.duration).sum();
    let h = total / points as f64;
    let mut chi = 0.0;
    for m in 0..seq.modes.len() {
        let delta = std::f64::consts::TAU * (seq.mu - seq.modes[m].frequency);
        let samples: Vec<(usize, Complex64)> = (0..points)
            .map(|k| {
                let t = (k as f64 + 0.5) * h;
                let mut start = 0.0;
                for s in &seq.segments {
                    if t < start + s.duration {
                        if s.is_gap {
                            return (2, Complex64::new(0.0, 0.0));
                        }
                        let j = s.target.index();
                        let amp = seq.modes[m].eta[j] * s.rabi_rate / 2.0;
                        return (j, Complex64::from_polar(amp, delta * t + s.phase));
                    }
                    start += s.duration;
                }
                (2, Complex64::new(0.0, 0.0))
            })
            .collect();
        let mut running = [Complex64::new(0.0, 0.0); 3];
        for &(j, f) in &samples {
            if j < 2 {
                chi += (f * running[1 - j].conj()).im * h;
            }
            running[j] += f * h;
        }
    }
    chi
}

pub fn target_of(k: usize) -> Target {
    if k % 2 == 0 {
        Target::IonS
    } else {
        Target::IonF
    }
}
