//! Maximum-likelihood readout correction, parity fitting and Bell fidelity.
//!
//! Basis order is `00', 01', 10', 11'` (S qubit first). Confusion matrices
//! are column-stochastic: column = prepared state, row = measured state.

use std::io::Read;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;

pub const BASIS_LABELS: [&str; 4] = ["00'", "01'", "10'", "11'"];
pub const EM_TOLERANCE: f64 = 1e-12;
pub const EM_MAX_ITERATIONS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReadoutError {
    #[error("invalid confusion matrix: {0}")]
    InvalidMatrix(String),
    #[error("invalid outcome distribution: {0}")]
    InvalidDistribution(String),
    #[error("outcome {0} observed but impossible under the confusion matrix")]
    InfeasibleObservation(String),
    #[error("parity phases do not span cos/sin of 2 phi")]
    DegeneratePhases,
    #[error("need at least {needed} parity samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("argument out of range: {0}")]
    OutOfRange(String),
    #[error("CSV input: {0}")]
    Csv(String),
}

impl From<csv::Error> for ReadoutError {
    fn from(e: csv::Error) -> Self {
        ReadoutError::Csv(e.to_string())
    }
}

/// Index of a basis label such as `01'`, `01` or `|01'>`.
pub fn basis_index(label: &str) -> Option<usize> {
    let core: String = label.chars().filter(|c| *c == '0' || *c == '1').collect();
    match core.as_str() {
        "00" => Some(0),
        "01" => Some(1),
        "10" => Some(2),
        "11" => Some(3),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix<T = f64> {
    /// `entries[measured][prepared]`.
    pub entries: [[T; 4]; 4],
}

impl<T: Real> ConfusionMatrix<T> {
    /// Validates non-negativity and renormalizes each column to sum to one.
    pub fn new(entries: [[T; 4]; 4]) -> Result<Self, ReadoutError> {
        let mut out = entries;
        for j in 0..4 {
            let mut sum = T::zero();
            for row in &entries {
                if !(row[j] >= T::zero()) || !row[j].is_finite() {
                    return Err(ReadoutError::InvalidMatrix(format!("negative or non-finite entry in column {j}")));
                }
                sum = sum + row[j];
            }
            if !(sum > T::zero()) {
                return Err(ReadoutError::InvalidMatrix(format!("column {j} is empty")));
            }
            for row in out.iter_mut() {
                row[j] = row[j] / sum;
            }
        }
        Ok(Self { entries: out })
    }

    pub fn identity() -> Self {
        let mut e = [[T::zero(); 4]; 4];
        for (i, row) in e.iter_mut().enumerate() {
            row[i] = T::one();
        }
        Self { entries: e }
    }

    /// Published two-qubit readout table, in percent, renormalized per column.
    pub fn published() -> Self {
        let pct = [
            [96.82, 2.14, 0.24, 0.00],
            [2.27, 97.16, 0.00, 0.24],
            [0.91, 0.23, 97.43, 4.39],
            [0.00, 0.47, 2.33, 95.38],
        ];
        Self::new(pct.map(|r| r.map(T::lit))).expect("table is valid")
    }

    /// Distribution measured for prepared state `j`.
    pub fn column(&self, j: usize) -> [T; 4] {
        [0, 1, 2, 3].map(|i| self.entries[i][j])
    }

    pub fn diagonal(&self) -> [T; 4] {
        [0, 1, 2, 3].map(|i| self.entries[i][i])
    }

    /// `M p`.
    pub fn apply(&self, p: &[T; 4]) -> [T; 4] {
        [0, 1, 2, 3].map(|i| (0..4).map(|j| self.entries[i][j] * p[j]).sum())
    }

    /// Reads a 4x4 table whose header names the prepared states.
    ///
    /// An optional leading label column is allowed. Values are taken as
    /// percent when the column sums are near 100.
    pub fn from_csv<R: Read>(input: R) -> Result<Self, ReadoutError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let headers = rdr.headers()?.clone();
        let labelled = headers.len() == 5;
        if headers.len() != 4 && !labelled {
            return Err(ReadoutError::Csv(format!("expected 4 prepared-state columns, got {}", headers.len())));
        }
        let skip = usize::from(labelled);
        let mut cols = [0usize; 4];
        for (k, h) in headers.iter().skip(skip).enumerate() {
            cols[k] = basis_index(h).ok_or_else(|| ReadoutError::Csv(format!("unknown state label {h:?}")))?;
        }
        let mut seen = cols;
        seen.sort_unstable();
        if seen != [0, 1, 2, 3] {
            return Err(ReadoutError::Csv("header must name each basis state once".into()));
        }

        let mut raw = [[T::zero(); 4]; 4];
        let mut rows = 0usize;
        for (r, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if r >= 4 {
                return Err(ReadoutError::Csv("more than 4 data rows".into()));
            }
            let measured = if labelled {
                basis_index(&rec[0]).ok_or_else(|| ReadoutError::Csv(format!("unknown row label {:?}", &rec[0])))?
            } else {
                r
            };
            for (k, field) in rec.iter().skip(skip).enumerate() {
                let v: f64 = field
                    .parse()
                    .map_err(|_| ReadoutError::Csv(format!("row {}, column {}: not a number: {field:?}", r + 2, k + 1)))?;
                raw[measured][cols[k]] = T::lit(v);
            }
            rows += 1;
        }
        if rows != 4 {
            return Err(ReadoutError::Csv(format!("expected 4 data rows, got {rows}")));
        }
        let mean_sum: f64 = (0..4).map(|j| (0..4).map(|i| raw[i][j].approx()).sum::<f64>()).sum::<f64>() / 4.0;
        if (mean_sum - 100.0).abs() < (mean_sum - 1.0).abs() {
            for row in raw.iter_mut() {
                for v in row.iter_mut() {
                    *v = *v / T::lit(100.0);
                }
            }
        }
        Self::new(raw)
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(std::iter::once("measured").chain(BASIS_LABELS))?;
        for (i, row) in self.entries.iter().enumerate() {
            w.write_record(std::iter::once(BASIS_LABELS[i].to_string()).chain(row.iter().map(|v| v.to_string())))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Observed outcome frequencies with the number of shots behind them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeDistribution<T = f64> {
    pub frequencies: [T; 4],
    pub shots: u64,
}

impl<T: Real> OutcomeDistribution<T> {
    pub fn from_counts(counts: [u64; 4]) -> Result<Self, ReadoutError> {
        let shots: u64 = counts.iter().sum();
        if shots == 0 {
            return Err(ReadoutError::InvalidDistribution("no shots".into()));
        }
        let n = T::from_u64(shots).expect("shot count fits");
        let frequencies = counts.map(|c| T::from_u64(c).expect("count fits") / n);
        Ok(Self { frequencies, shots })
    }

    /// Frequencies must be non-negative and sum to one within `1e-9`.
    pub fn from_frequencies(frequencies: [T; 4], shots: u64) -> Result<Self, ReadoutError> {
        if frequencies.iter().any(|f| !(*f >= T::zero())) {
            return Err(ReadoutError::InvalidDistribution("negative frequency".into()));
        }
        let sum: T = frequencies.iter().copied().sum();
        if (sum - T::one()).abs().approx() > 1e-9_f64.max(4.0 * T::epsilon().approx()) {
            return Err(ReadoutError::InvalidDistribution(format!("frequencies sum to {sum}")));
        }
        if shots == 0 {
            return Err(ReadoutError::InvalidDistribution("no shots".into()));
        }
        Ok(Self {
            frequencies: frequencies.map(|f| f / sum),
            shots,
        })
    }

    /// Rounded counts.
    pub fn counts(&self) -> [u64; 4] {
        let n = self.shots as f64;
        self.frequencies.map(|f| (f.approx() * n).round() as u64)
    }

    /// Reads `state,count` rows.
    pub fn from_csv<R: Read>(input: R) -> Result<Self, ReadoutError> {
        #[derive(Deserialize)]
        struct Row {
            state: String,
            count: u64,
        }
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let mut counts = [0u64; 4];
        let mut seen = [false; 4];
        for row in rdr.deserialize::<Row>() {
            let row = row?;
            let i = basis_index(&row.state).ok_or_else(|| ReadoutError::Csv(format!("unknown state {:?}", row.state)))?;
            if seen[i] {
                return Err(ReadoutError::Csv(format!("state {} listed twice", BASIS_LABELS[i])));
            }
            seen[i] = true;
            counts[i] = row.count;
        }
        Self::from_counts(counts)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MleResult<T = f64> {
    pub p: [T; 4],
    pub iterations: usize,
    pub converged: bool,
    /// `sum_i f_i log (M p)_i` after each iteration, starting from the uniform guess.
    pub log_likelihood: Vec<T>,
}

fn log_likelihood<T: Real>(f: &[T; 4], mp: &[T; 4]) -> T {
    f.iter()
        .zip(mp)
        .filter(|(fi, _)| **fi > T::zero())
        .map(|(fi, q)| *fi * q.ln())
        .sum()
}

/// Multiplicative EM for the multinomial likelihood of `observed` under `M p`.
pub fn mle_correct<T: Real>(observed: &OutcomeDistribution<T>, m: &ConfusionMatrix<T>) -> Result<MleResult<T>, ReadoutError> {
    let f = &observed.frequencies;
    for i in 0..4 {
        if f[i] > T::zero() && m.entries[i].iter().all(|v| *v == T::zero()) {
            return Err(ReadoutError::InfeasibleObservation(BASIS_LABELS[i].into()));
        }
    }
    let tol = T::lit(EM_TOLERANCE).max(T::epsilon() * T::lit(16.0));
    let mut p = [T::lit(0.25); 4];
    let mut trace = vec![log_likelihood(f, &m.apply(&p))];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < EM_MAX_ITERATIONS {
        let mp = m.apply(&p);
        let mut next = [T::zero(); 4];
        for j in 0..4 {
            let mut acc = T::zero();
            for i in 0..4 {
                if f[i] > T::zero() {
                    if mp[i] == T::zero() {
                        return Err(ReadoutError::InfeasibleObservation(BASIS_LABELS[i].into()));
                    }
                    acc = acc + m.entries[i][j] * f[i] / mp[i];
                }
            }
            next[j] = p[j] * acc;
        }
        let total: T = next.iter().copied().sum();
        for v in next.iter_mut() {
            *v = *v / total;
        }
        let change = (0..4).map(|j| (next[j] - p[j]).abs()).fold(T::zero(), T::max);
        p = next;
        iterations += 1;
        trace.push(log_likelihood(f, &m.apply(&p)));
        if change < tol {
            converged = true;
            break;
        }
    }
    Ok(MleResult {
        p,
        iterations,
        converged,
        log_likelihood: trace,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParityFit<T = f64> {
    /// `sqrt(a^2 + b^2)` clamped into `[0, 1]`.
    pub contrast: T,
    /// Unclamped fitted amplitude.
    pub amplitude: T,
    /// `phi0` in `C cos(2 phi + phi0)`, in `[0, 2 pi)`.
    pub phase_offset: T,
    /// Root-mean-square residual.
    pub residual: T,
}

/// Least-squares fit of `C cos(2 phi + phi0)` on the `cos 2phi, sin 2phi` basis.
pub fn fit_parity<T: Real>(samples: &[(T, T)]) -> Result<ParityFit<T>, ReadoutError> {
    if samples.len() < 4 {
        return Err(ReadoutError::TooFewSamples {
            needed: 4,
            got: samples.len(),
        });
    }
    let two = T::lit(2.0);
    let (mut cc, mut cs, mut ss, mut yc, mut ys) = (T::zero(), T::zero(), T::zero(), T::zero(), T::zero());
    for &(phi, y) in samples {
        let (s, c) = (two * phi).sin_cos();
        cc = cc + c * c;
        cs = cs + c * s;
        ss = ss + s * s;
        yc = yc + y * c;
        ys = ys + y * s;
    }
    let det = cc * ss - cs * cs;
    let scale = cc * ss;
    if !(det > scale * T::lit(1e-10)) {
        return Err(ReadoutError::DegeneratePhases);
    }
    let a = (yc * ss - ys * cs) / det;
    let b = (ys * cc - yc * cs) / det;
    let amplitude = a.hypot(b);
    let mut phase = (-b).atan2(a);
    if phase < T::zero() {
        phase = phase + T::TAU();
    }
    let sq: T = samples
        .iter()
        .map(|&(phi, y)| {
            let (s, c) = (two * phi).sin_cos();
            let r = y - a * c - b * s;
            r * r
        })
        .sum();
    Ok(ParityFit {
        contrast: amplitude.unit_clamp(),
        amplitude,
        phase_offset: phase,
        residual: (sq / T::from_int(samples.len() as i64)).sqrt(),
    })
}

/// `(population_even + contrast) / 2`.
pub fn bell_fidelity<T: Real>(population_even: T, contrast: T) -> Result<T, ReadoutError> {
    for (name, v) in [("population", population_even), ("contrast", contrast)] {
        if !(v >= T::zero() && v <= T::one()) {
            return Err(ReadoutError::OutOfRange(format!("{name} {v} not in [0, 1]")));
        }
    }
    Ok((population_even + contrast) / T::lit(2.0))
}

/// `p00 - p01 - p10 + p11`.
pub fn parity<T: Real>(p: &[T; 4]) -> T {
    p[0] - p[1] - p[2] + p[3]
}

/// Population measurement plus parity scans of a prepared Bell state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BellDataset<T = f64> {
    pub population: OutcomeDistribution<T>,
    /// `(analysis phase, outcomes)`.
    pub parity_scan: Vec<(T, OutcomeDistribution<T>)>,
    /// Indices of the two target basis states.
    pub target_pair: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BellEstimate<T = f64> {
    pub p: [T; 4],
    pub population_even: T,
    pub parity_curve: Vec<(T, T)>,
    pub fit: Option<ParityFit<T>>,
    pub fidelity: Option<T>,
}

impl<T: Real> BellDataset<T> {
    /// MLE-corrects every distribution, fits the parity and forms the fidelity.
    pub fn evaluate(&self, m: &ConfusionMatrix<T>) -> Result<BellEstimate<T>, ReadoutError> {
        let p = mle_correct(&self.population, m)?.p;
        let population_even = (p[self.target_pair[0]] + p[self.target_pair[1]]).unit_clamp();
        let parity_curve = self
            .parity_scan
            .iter()
            .map(|(phi, d)| Ok((*phi, parity(&mle_correct(d, m)?.p))))
            .collect::<Result<Vec<_>, ReadoutError>>()?;
        let (fit, fidelity) = if parity_curve.is_empty() {
            (None, None)
        } else {
            let fit = fit_parity(&parity_curve)?;
            let fid = bell_fidelity(population_even, fit.contrast)?;
            (Some(fit), Some(fid))
        };
        Ok(BellEstimate {
            p,
            population_even,
            parity_curve,
            fit,
            fidelity,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult<T = f64> {
    pub p_stderr: [T; 4],
    pub contrast_stderr: Option<T>,
    pub fidelity_stderr: Option<T>,
    pub resamples: usize,
}

/// Multinomial draw of `n` shots by sequential conditional binomials.
pub fn sample_counts<R: rand::Rng>(probs: [f64; 4], n: u64, rng: &mut R) -> [u64; 4] {
    let mut out = [0u64; 4];
    let mut remaining = n;
    let mut mass_left: f64 = probs.iter().sum();
    for i in 0..4 {
        if remaining == 0 {
            break;
        }
        if i == 3 || mass_left <= 0.0 {
            out[i] = remaining;
            break;
        }
        let prob = (probs[i] / mass_left).clamp(0.0, 1.0);
        let k = Binomial::new(remaining, prob).expect("valid binomial").sample(rng);
        out[i] = k;
        remaining -= k;
        mass_left -= probs[i];
    }
    out
}

fn resample<R: rand::Rng>(counts: [u64; 4], rng: &mut R) -> [u64; 4] {
    sample_counts(counts.map(|c| c as f64), counts.iter().sum(), rng)
}

/// Ideal-structure Bell state with given even population and parity contrast.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BellModel {
    pub population_even: f64,
    pub contrast: f64,
    /// Parity is `contrast * cos(2 phi + phase_offset)`.
    pub phase_offset: f64,
}

impl BellModel {
    /// Populations `00', 11'` share `population_even`.
    pub fn populations(&self) -> [f64; 4] {
        let e = self.population_even / 2.0;
        let o = (1.0 - self.population_even) / 2.0;
        [e, o, o, e]
    }

    /// True distribution after the analysis rotation at `phi`.
    pub fn parity_populations(&self, phi: f64) -> [f64; 4] {
        let pi = self.contrast * (2.0 * phi + self.phase_offset).cos();
        let e = (1.0 + pi) / 4.0;
        let o = (1.0 - pi) / 4.0;
        [e, o, o, e]
    }
}

/// Draws a readout-distorted dataset from `model`.
///
/// The population measurement uses stream 0; analysis phase `k` uses stream `k + 1`.
pub fn synthesize_bell_dataset(
    model: &BellModel,
    m: &ConfusionMatrix<f64>,
    shots: u64,
    analysis_points: usize,
    seed: u64,
) -> Result<BellDataset<f64>, ReadoutError> {
    if !(0.0..=1.0).contains(&model.population_even) || !(0.0..=1.0).contains(&model.contrast) {
        return Err(ReadoutError::OutOfRange("population and contrast must lie in [0, 1]".into()));
    }
    if shots == 0 {
        return Err(ReadoutError::InvalidDistribution("no shots".into()));
    }
    let draw = |p: [f64; 4], stream: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        OutcomeDistribution::from_counts(sample_counts(m.apply(&p), shots, &mut rng))
    };
    let population = draw(model.populations(), 0)?;
    let parity_scan = (0..analysis_points)
        .map(|k| {
            let phi = std::f64::consts::TAU * k as f64 / analysis_points as f64;
            Ok((phi, draw(model.parity_populations(phi), k as u64 + 1)?))
        })
        .collect::<Result<Vec<_>, ReadoutError>>()?;
    Ok(BellDataset {
        population,
        parity_scan,
        target_pair: [0, 3],
    })
}

fn std_dev<T: Real>(xs: &[T]) -> T {
    let n = T::from_int(xs.len() as i64);
    let mean = xs.iter().copied().sum::<T>() / n;
    let var = xs.iter().map(|x| (*x - mean) * (*x - mean)).sum::<T>() / (n - T::one());
    var.sqrt()
}

/// Nonparametric bootstrap of the corrected populations, contrast and fidelity.
///
/// Resample `r` uses stream `r` of a ChaCha generator seeded with `seed`.
pub fn bootstrap_uncertainty<T: Real>(
    data: &BellDataset<T>,
    m: &ConfusionMatrix<T>,
    resamples: usize,
    seed: u64,
) -> Result<BootstrapResult<T>, ReadoutError> {
    if resamples < 100 {
        return Err(ReadoutError::OutOfRange(format!("resamples {resamples} < 100")));
    }
    let draws: Vec<BellEstimate<T>> = (0..resamples)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            let pop = OutcomeDistribution::from_counts(resample(data.population.counts(), &mut rng))?;
            let scan = data
                .parity_scan
                .iter()
                .map(|(phi, d)| Ok((*phi, OutcomeDistribution::from_counts(resample(d.counts(), &mut rng))?)))
                .collect::<Result<Vec<_>, ReadoutError>>()?;
            BellDataset {
                population: pop,
                parity_scan: scan,
                target_pair: data.target_pair,
            }
            .evaluate(m)
        })
        .collect::<Result<Vec<_>, ReadoutError>>()?;

    let p_stderr = [0, 1, 2, 3].map(|j| std_dev(&draws.iter().map(|d| d.p[j]).collect::<Vec<_>>()));
    let contrasts: Option<Vec<T>> = draws.iter().map(|d| d.fit.map(|f| f.contrast)).collect();
    let fids: Option<Vec<T>> = draws.iter().map(|d| d.fidelity).collect();
    Ok(BootstrapResult {
        p_stderr,
        contrast_stderr: contrasts.map(|c| std_dev(&c)),
        fidelity_stderr: fids.map(|f| std_dev(&f)),
        resamples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn published_table_first_column() {
        let m = ConfusionMatrix::<f64>::published();
        let c = m.column(0);
        for (v, e) in c.iter().zip([0.9682, 0.0227, 0.0091, 0.0]) {
            assert!((v - e).abs() < 1e-6);
        }
        for j in 0..4 {
            assert!((m.column(j).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_returns_frequencies() {
        let obs = OutcomeDistribution::<f64>::from_counts([10, 20, 30, 40]).unwrap();
        let r = mle_correct(&obs, &ConfusionMatrix::identity()).unwrap();
        for (p, f) in r.p.iter().zip(obs.frequencies) {
            assert!((p - f).abs() < 1e-10);
        }
        assert!(r.converged);
    }

    #[test]
    fn recovers_bell_populations_through_published_table() {
        let m = ConfusionMatrix::published();
        let target = [0.5_f64, 0.0, 0.0, 0.5];
        let f = m.apply(&target);
        let obs = OutcomeDistribution::from_frequencies(f, 1_000_000).unwrap();
        let r = mle_correct(&obs, &m).unwrap();
        for (p, t) in r.p.iter().zip(target) {
            assert!((p - t).abs() < 1e-6, "{:?}", r.p);
        }
        for w in r.log_likelihood.windows(2) {
            assert!(w[1] >= w[0] - 1e-15);
        }
    }

    #[test]
    fn infeasible_observation_detected() {
        let mut e = [[0.0; 4]; 4];
        e[0] = [0.5, 0.5, 0.5, 0.5];
        e[1] = [0.5, 0.5, 0.5, 0.5];
        let m = ConfusionMatrix::new(e).unwrap();
        let obs = OutcomeDistribution::from_counts([1, 1, 1, 0]).unwrap();
        assert!(matches!(mle_correct(&obs, &m), Err(ReadoutError::InfeasibleObservation(_))));
    }

    #[test]
    fn csv_round_trip_and_percent_detection() {
        let text = "measured,00',01',10',11'\n00',96.82,2.14,0.24,0.00\n01',2.27,97.16,0.00,0.24\n10',0.91,0.23,97.43,4.39\n11',0.00,0.47,2.33,95.38\n";
        let m = ConfusionMatrix::<f64>::from_csv(text.as_bytes()).unwrap();
        let published = ConfusionMatrix::<f64>::published();
        for i in 0..4 {
            for j in 0..4 {
                assert!((m.entries[i][j] - published.entries[i][j]).abs() < 1e-15);
            }
        }
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let back = ConfusionMatrix::<f64>::from_csv(buf.as_slice()).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert!((back.entries[i][j] - m.entries[i][j]).abs() < 1e-15);
            }
        }
        let frac = "00,01,10,11\n1,0,0,0\n0,1,0,0\n0,0,1,0\n0,0,0,1\n";
        assert_eq!(ConfusionMatrix::<f64>::from_csv(frac.as_bytes()).unwrap(), ConfusionMatrix::identity());
    }

    #[test]
    fn counts_csv() {
        let d = OutcomeDistribution::<f64>::from_csv("state,count\n00',40\n11',60\n".as_bytes()).unwrap();
        assert_eq!(d.counts(), [40, 0, 0, 60]);
        assert!(OutcomeDistribution::<f64>::from_csv("state,count\n22,1\n".as_bytes()).is_err());
    }

    #[test]
    fn parity_fit_examples() {
        let phases: Vec<f64> = (0..12).map(|k| k as f64 * PI / 6.0).collect();
        let exact: Vec<(f64, f64)> = phases.iter().map(|&p| (p, (2.0 * p).cos())).collect();
        let fit = fit_parity(&exact).unwrap();
        assert_relative_eq!(fit.contrast, 1.0, epsilon = 1e-12);
        assert!(fit.phase_offset.abs() < 1e-12 || (fit.phase_offset - 2.0 * PI).abs() < 1e-12);
        let zeros: Vec<(f64, f64)> = phases.iter().map(|&p| (p, 0.0)).collect();
        assert_eq!(fit_parity(&zeros).unwrap().contrast, 0.0);
        let published: Vec<(f64, f64)> = phases.iter().map(|&p| (p, 0.57 * (2.0 * p + 0.4).cos())).collect();
        assert_relative_eq!(fit_parity(&published).unwrap().contrast, 0.57, epsilon = 1e-12);
        let same = vec![(0.3, 1.0), (0.3 + PI, 1.0), (0.3, 0.9), (0.3 + 2.0 * PI, 1.0)];
        assert_eq!(fit_parity(&same), Err(ReadoutError::DegeneratePhases));
        assert!(matches!(fit_parity(&exact[..3]), Err(ReadoutError::TooFewSamples { .. })));
    }

    #[test]
    fn fidelity_examples() {
        assert_relative_eq!(bell_fidelity(0.825, 0.57).unwrap(), 0.6975, epsilon = 1e-12);
        assert_eq!(bell_fidelity(1.0, 1.0).unwrap(), 1.0);
        assert_eq!(bell_fidelity(0.5, 0.0).unwrap(), 0.25);
        assert!(bell_fidelity(1.2, 0.0).is_err());
    }

    #[test]
    fn resample_preserves_total() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let r = resample([5, 0, 17, 3], &mut rng);
            assert_eq!(r.iter().sum::<u64>(), 25);
            assert_eq!(r[1], 0);
        }
    }

    #[test]
    fn synthetic_dataset_recovers_model() {
        let model = BellModel {
            population_even: 0.825,
            contrast: 0.57,
            phase_offset: 0.4,
        };
        let m = ConfusionMatrix::published();
        let data = synthesize_bell_dataset(&model, &m, 200_000, 16, 3).unwrap();
        assert_eq!(data, synthesize_bell_dataset(&model, &m, 200_000, 16, 3).unwrap());
        let est = data.evaluate(&m).unwrap();
        assert!((est.population_even - 0.825).abs() < 0.01);
        assert!((est.fit.unwrap().contrast - 0.57).abs() < 0.01);
        assert!((est.fidelity.unwrap() - 0.6975).abs() < 0.01);
    }

    proptest! {
        #[test]
        fn fit_is_exact_on_sinusoids(c in 0.0f64..=1.0, phi0 in 0.0f64..(2.0 * PI), n in 4usize..40) {
            let pts: Vec<(f64, f64)> = (0..n)
                .map(|k| {
                    let p = k as f64 * PI / n as f64 + 0.1;
                    (p, c * (2.0 * p + phi0).cos())
                })
                .collect();
            let fit = fit_parity(&pts).unwrap();
            prop_assert!(fit.residual < 1e-12);
            prop_assert!((fit.amplitude - c).abs() < 1e-12);
            if c > 1e-6 {
                let d = (fit.phase_offset - phi0).rem_euclid(2.0 * PI);
                prop_assert!(d.min(2.0 * PI - d) < 1e-9);
            }
        }

        #[test]
        fn mle_on_simplex_and_monotone(counts in prop::array::uniform4(0u64..1000)) {
            prop_assume!(counts.iter().sum::<u64>() > 0);
            let obs = OutcomeDistribution::from_counts(counts).unwrap();
            let r = mle_correct(&obs, &ConfusionMatrix::<f64>::published()).unwrap();
            prop_assert!(r.p.iter().all(|v| *v >= 0.0));
            prop_assert!((r.p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            for w in r.log_likelihood.windows(2) {
                prop_assert!(w[1] >= w[0] - 1e-12);
            }
        }

        #[test]
        fn mle_permutation_equivariant(counts in prop::array::uniform4(1u64..500), perm_idx in 0usize..24) {
            let mut perms = Vec::new();
            for a in 0..4 { for b in 0..4 { for c in 0..4 { for d in 0..4 {
                let p = [a, b, c, d];
                let mut s = p; s.sort_unstable();
                if s == [0, 1, 2, 3] { perms.push(p); }
            }}}}
            let perm = perms[perm_idx];
            let m = ConfusionMatrix::<f64>::published();
            let mut pm = [[0.0; 4]; 4];
            for i in 0..4 { for j in 0..4 { pm[perm[i]][perm[j]] = m.entries[i][j]; } }
            let pm = ConfusionMatrix::new(pm).unwrap();
            let mut pc = [0u64; 4];
            for i in 0..4 { pc[perm[i]] = counts[i]; }
            let a = mle_correct(&OutcomeDistribution::from_counts(counts).unwrap(), &m).unwrap().p;
            let b = mle_correct(&OutcomeDistribution::from_counts(pc).unwrap(), &pm).unwrap().p;
            for i in 0..4 {
                prop_assert!((a[i] - b[perm[i]]).abs() < 1e-9);
            }
        }
    }
}
