//! Restricted-Haar ensemble: sampling, frame potentials and averaged kernels.
//!
//! A restricted-Haar unitary is block diagonal, `diag(e^{iφ_1}, …, e^{iφ_N}) ⊕ V`
//! with uniform phases and a Haar-random `V` on the remaining `d − N`
//! dimensions. The sampler pins the first `N` basis vectors; converged
//! circuits must therefore be expressed in the (input, target) basis pair
//! (see [`converged_unitary`]) before they are compared with samples.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::ansatz::Ansatz;
use crate::error::{Error, Result};
use crate::qsim::{haar_unitary, stream_rng, Rng, UnitaryMatrix, C64};
use crate::taskdata::Dataset;
use crate::trainer::TrainingTrace;

const STREAM_ENSEMBLE: u64 = 0x454e_5342;

/// Minimum number of traces for a comparison that is not flagged as low power.
pub const MIN_VALIDATION_TRACES: usize = 5;

/// Draws from the restricted-Haar ensemble of dimension `d` with `n` pinned phases.
pub fn sample_rh(d: usize, n: usize, rng: &mut Rng) -> Result<UnitaryMatrix> {
    use rand::Rng as _;
    if d == 0 {
        return Err(Error::InvalidDimension("restricted Haar ensemble needs d >= 1".into()));
    }
    if n > d {
        return Err(Error::InvalidParameter(format!("N = {n} exceeds dimension {d}")));
    }
    let phase = |rng: &mut Rng| C64::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU));
    let mut m = DMatrix::zeros(d, d);
    if n + 1 >= d {
        for i in 0..d {
            m[(i, i)] = phase(rng);
        }
    } else {
        for i in 0..n {
            m[(i, i)] = phase(rng);
        }
        let v = haar_unitary(d - n, rng)?;
        m.view_mut((n, n), (d - n, d - n)).copy_from(v.matrix());
    }
    UnitaryMatrix::new(m)
}

/// Ensemble whose frame potential is estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "ensemble", rename_all = "kebab-case")]
pub enum Sampler {
    Haar { d: usize },
    RestrictedHaar { d: usize, n: usize },
}

impl Sampler {
    pub fn d(&self) -> usize {
        match *self {
            Self::Haar { d } | Self::RestrictedHaar { d, .. } => d,
        }
    }

    pub fn n_data(&self) -> usize {
        match *self {
            Self::Haar { .. } => 0,
            Self::RestrictedHaar { n, .. } => n,
        }
    }

    pub fn sample(&self, rng: &mut Rng) -> Result<UnitaryMatrix> {
        match *self {
            Self::Haar { d } => haar_unitary(d, rng),
            Self::RestrictedHaar { d, n } => sample_rh(d, n, rng),
        }
    }

    /// Closed-form value for order `k` and whether it is only a lower bound.
    pub fn analytic(&self, k: u32) -> Result<(f64, bool)> {
        match *self {
            Self::Haar { .. } => Ok((factorial(k), false)),
            Self::RestrictedHaar { d, n } if k == 2 => Ok((fp_rh_exact2(n, d)?, false)),
            Self::RestrictedHaar { d, n } => Ok((fp_rh_lower(n, d, k)?, n != 0)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleReport {
    pub sampler: Sampler,
    pub d: usize,
    pub n_data: usize,
    pub k: u32,
    pub mc_estimate: f64,
    pub mc_std_error: f64,
    pub analytic: f64,
    /// `analytic` is a lower bound rather than an exact value.
    pub analytic_is_bound: bool,
    pub sample_count: usize,
    pub seed: u64,
}

impl EnsembleReport {
    /// `(mc − analytic)/σ`.
    pub fn z_score(&self) -> f64 {
        (self.mc_estimate - self.analytic) / self.mc_std_error
    }
}

/// `|tr(A†B)|²`.
pub fn overlap_sq(a: &UnitaryMatrix, b: &UnitaryMatrix) -> f64 {
    a.matrix().iter().zip(b.matrix().iter()).map(|(x, y)| x.conj() * y).sum::<C64>().norm_sqr()
}

/// Sample mean and standard error.
pub fn mean_and_stderr(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    if x.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Monte-Carlo estimate of `F^{(k)} = E|tr(U†U′)|^{2k}` over independent pairs.
pub fn frame_potential_mc(sampler: Sampler, k: u32, pairs: usize, seed: u64) -> Result<EnsembleReport> {
    if k == 0 {
        return Err(Error::InvalidParameter("frame-potential order k must be >= 1".into()));
    }
    if pairs < 2 {
        return Err(Error::InvalidParameter("need at least 2 pairs".into()));
    }
    let mut rng = stream_rng(seed, STREAM_ENSEMBLE);
    let mut samples = Vec::with_capacity(pairs);
    for _ in 0..pairs {
        let u = sampler.sample(&mut rng)?;
        let v = sampler.sample(&mut rng)?;
        samples.push(overlap_sq(&u, &v).powi(k as i32));
    }
    let (mean, se) = mean_and_stderr(&samples);
    let (analytic, bound) = sampler.analytic(k)?;
    Ok(EnsembleReport {
        sampler,
        d: sampler.d(),
        n_data: sampler.n_data(),
        k,
        mc_estimate: mean,
        mc_std_error: se,
        analytic,
        analytic_is_bound: bound,
        sample_count: pairs,
        seed,
    })
}

fn factorial(k: u32) -> f64 {
    (1..=k).map(f64::from).product()
}

fn check_nd(n: usize, d: usize) -> Result<()> {
    if d < 2 {
        return Err(Error::InvalidDimension(format!("dimension {d} too small")));
    }
    if n > d {
        return Err(Error::InvalidParameter(format!("N = {n} exceeds dimension {d}")));
    }
    Ok(())
}

/// Exact second frame potential: `2N² + 3N + 2` for `N ≤ d − 2`, `2d² − d` otherwise.
pub fn fp_rh_exact2(n: usize, d: usize) -> Result<f64> {
    check_nd(n, d)?;
    let (n, d) = (n as f64, d as f64);
    Ok(if n <= d - 2.0 { 2.0 * n * n + 3.0 * n + 2.0 } else { 2.0 * d * d - d })
}

/// Combinatorial lower bound on `F^{(k)}` (Haar value `k!` for `N = 0`).
pub fn fp_rh_lower(n: usize, d: usize, k: u32) -> Result<f64> {
    check_nd(n, d)?;
    if k == 0 {
        return Err(Error::InvalidParameter("frame-potential order k must be >= 1".into()));
    }
    if n == 0 {
        return Ok(factorial(k));
    }
    let kf = factorial(k);
    let mut total = 0.0;
    for k1 in (0..=k).step_by(2) {
        let half = factorial(k1 / 2);
        if n + 1 < d {
            for k2 in 0..=(k - k1) {
                let rest = k - k1 - k2;
                total += kf / (half * half * factorial(k2) * factorial(rest)) * (n as f64).powi(rest as i32) * factorial(k1 / 2 + k2);
            }
        } else {
            total += kf / (half * half * factorial(k - k1)) * (d as f64).powi((k - k1) as i32);
        }
    }
    Ok(total)
}

fn check_prediction(l: usize, d: usize, o: f64) -> Result<()> {
    if l == 0 || d < 2 {
        return Err(Error::InvalidParameter(format!("need L >= 1 and d >= 2, got L={l}, d={d}")));
    }
    if !(0.0..=1.0).contains(&o) {
        return Err(Error::Domain { value: o, domain: "o in [0, 1]".into() });
    }
    Ok(())
}

/// Ensemble-averaged `K_αα(∞)`: `Ld·o(1−o)/(2(d²−1))`, or `(L/2d)·o(1−o)`.
pub fn predicted_k_diag(l: usize, d: usize, o: f64, exact: bool) -> Result<f64> {
    check_prediction(l, d, o)?;
    let (l, d) = (l as f64, d as f64);
    Ok(if exact { l * d * o * (1.0 - o) / (2.0 * (d * d - 1.0)) } else { l / (2.0 * d) * o * (1.0 - o) })
}

/// Ensemble-averaged `λ_ααα(∞)` (ratio of averages).
pub fn predicted_lambda_diag(l: usize, d: usize, o: f64, exact: bool) -> Result<f64> {
    check_prediction(l, d, o)?;
    let (l, d) = (l as f64, d as f64);
    Ok(if exact {
        -1.0 / (4.0 * d) * (2.0 * (d + 2.0) / (d + 3.0) * ((d + 2.0) * o - 2.0) + (l - 1.0) * d * d * (2.0 * o - 1.0) / (d * d - 1.0))
    } else {
        -1.0 / (4.0 * d) * (2.0 * (d * o - 2.0) + l * (2.0 * o - 1.0))
    })
}

/// Slope of [`predicted_lambda_diag`] with respect to `L`.
pub fn predicted_lambda_slope(d: usize, o: f64, exact: bool) -> Result<f64> {
    Ok(predicted_lambda_diag(2, d, o, exact)? - predicted_lambda_diag(1, d, o, exact)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelPrediction {
    pub l: usize,
    pub d: usize,
    pub o_alpha: f64,
    pub predicted_k: f64,
    pub predicted_lambda: f64,
    pub asymptotic: bool,
}

impl KernelPrediction {
    pub fn new(l: usize, d: usize, o: f64, asymptotic: bool) -> Result<Self> {
        Ok(Self {
            l,
            d,
            o_alpha: o,
            predicted_k: predicted_k_diag(l, d, o, !asymptotic)?,
            predicted_lambda: predicted_lambda_diag(l, d, o, !asymptotic)?,
            asymptotic,
        })
    }
}

/// Kolmogorov–Smirnov statistic of samples against `U[0, 2π)`.
pub fn ks_uniform_phase(samples: &[f64]) -> f64 {
    let mut x: Vec<f64> = samples.iter().map(|v| v.rem_euclid(std::f64::consts::TAU) / std::f64::consts::TAU).collect();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    x.iter()
        .enumerate()
        .map(|(i, &f)| (f - i as f64 / n).max((i as f64 + 1.0) / n - f))
        .fold(0.0, f64::max)
}

/// Asymptotic 1% critical value of the one-sample KS statistic.
pub fn ks_critical_1pct(n: usize) -> f64 {
    1.628 / (n as f64).sqrt()
}

/// Circuit unitary in the (input, target) basis pair: `T† U R`, where the
/// inputs are `R|α⟩` and the targets are the computational basis states.
pub fn converged_unitary(a: &Ansatz, p: &[f64], ds: &Dataset) -> Result<UnitaryMatrix> {
    let u = crate::ansatz::segment_unitary(a, p, 0, a.n_params())?;
    let d = a.dim();
    let mut r = DMatrix::zeros(d, d);
    for (j, datum) in ds.data().iter().enumerate() {
        r.set_column(j, &nalgebra::DVector::from_column_slice(datum.state.amplitudes()));
    }
    // Complete the input basis with the data rotation's remaining columns.
    let rot = if ds.description().haar_rotated {
        haar_unitary(d, &mut stream_rng(ds.description().data_seed, crate::taskdata::STREAM_DATA))?
    } else {
        UnitaryMatrix::identity(d)
    };
    for j in ds.len()..d {
        r.set_column(j, &rot.matrix().column(j));
    }
    Ok(UnitaryMatrix::new_unchecked(u.matrix() * r))
}

/// Mean of `|tr(U_i†U_j)|^{2k}` over all distinct pairs.
pub fn frame_potential_of_set(us: &[UnitaryMatrix], k: u32) -> Result<(f64, f64)> {
    if us.len() < 2 {
        return Err(Error::InvalidParameter("need at least two unitaries".into()));
    }
    let mut v = Vec::new();
    for i in 0..us.len() {
        for j in i + 1..us.len() {
            v.push(overlap_sq(&us[i], &us[j]).powi(k as i32));
        }
    }
    Ok(mean_and_stderr(&v))
}

/// Per-datum comparison of late-time kernels with the ensemble average.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatumValidation {
    pub index: usize,
    /// Mean of `o_α = ε_α + y_α` over the late windows.
    pub o_mean: f64,
    pub measured_k: f64,
    /// Prediction averaged over the same records (evaluated at each record's `o`).
    pub predicted_k: f64,
    pub k_ratio: f64,
    /// `⟨μ_ααα⟩ / ⟨K_αα⟩` over the late windows.
    pub measured_lambda: f64,
    pub predicted_lambda: f64,
    pub lambda_ratio: f64,
    pub records_used: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub traces: usize,
    pub l: usize,
    pub d: usize,
    pub exact: bool,
    pub per_datum: Vec<DatumValidation>,
    /// Frame potential of the converged circuits and its standard error.
    pub converged_fp2: Option<(f64, f64)>,
    pub rh_fp2: f64,
    pub warnings: Vec<String>,
}

/// Compares late-time kernels of state-preparation traces with the
/// restricted-Haar averages. Records are taken from the final
/// `late_fraction` of each run, restricted to those with
/// `o(1 − o) ≥ min_variance` so that float-precision floors are excluded.
pub fn validate_against_training(traces: &[TrainingTrace], late_fraction: f64, min_variance: f64, exact: bool) -> Result<ValidationReport> {
    let first = traces.first().ok_or_else(|| Error::InvalidParameter("no traces supplied".into()))?;
    let n = first.n_data();
    let l = first.final_params.len();
    let d = 1usize << first.config.n_qubits;
    if traces.iter().any(|t| t.n_data() != n || t.final_params.len() != l || t.config.n_qubits != first.config.n_qubits) {
        return Err(Error::Shape("traces disagree in N, L or n".into()));
    }
    if traces.iter().any(|t| t.config.observable != crate::taskdata::ObservableMode::StatePrep) {
        return Err(Error::Unsupported("validation requires state-preparation traces".into()));
    }
    let mut warnings = Vec::new();
    if traces.len() < MIN_VALIDATION_TRACES {
        warnings.push(format!("only {} traces (< {MIN_VALIDATION_TRACES}): low statistical power", traces.len()));
    }
    let mut per_datum = Vec::with_capacity(n);
    for a in 0..n {
        let (mut km, mut kp, mut mu, mut lp, mut os, mut count) = (0.0, 0.0, 0.0, 0.0, 0.0, 0usize);
        for tr in traces {
            let y = tr.config.targets[a];
            let t_end = tr.last().step as f64;
            let valid: Vec<&crate::trainer::Record> = tr
                .records
                .iter()
                .filter(|r| {
                    let o = r.errors[a] + y;
                    o * (1.0 - o) >= min_variance && r.snapshot.is_some()
                })
                .collect();
            let t_valid = valid.last().map_or(t_end, |r| r.step as f64);
            for r in valid.iter().filter(|r| r.step as f64 >= (1.0 - late_fraction) * t_valid) {
                let o = (r.errors[a] + y).clamp(0.0, 1.0);
                let snap = r.snapshot.as_ref().expect("filtered");
                km += r.k[(a, a)];
                kp += predicted_k_diag(l, d, o, exact)?;
                mu += snap.mu.get(a, a, a);
                lp += predicted_lambda_diag(l, d, o, exact)?;
                os += o;
                count += 1;
            }
        }
        if count == 0 {
            warnings.push(format!("datum {a}: no late-time records above the variance floor"));
        }
        let c = count as f64;
        per_datum.push(DatumValidation {
            index: a,
            o_mean: os / c,
            measured_k: km / c,
            predicted_k: kp / c,
            k_ratio: km / kp,
            measured_lambda: mu / km,
            predicted_lambda: lp / c,
            lambda_ratio: (mu / km) / (lp / c),
            records_used: count,
        });
    }
    let converged_fp2 = if traces.len() >= 2 {
        let us: Vec<UnitaryMatrix> = traces
            .iter()
            .map(|t| {
                let a = t.config.build_ansatz()?;
                let ds = t.config.build_dataset()?;
                converged_unitary(&a, &t.final_params, &ds)
            })
            .collect::<Result<_>>()?;
        Some(frame_potential_of_set(&us, 2)?)
    } else {
        None
    };
    Ok(ValidationReport { traces: traces.len(), l, d, exact, per_datum, converged_fp2, rh_fp2: fp_rh_exact2(n, d)?, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms() {
        assert_eq!(fp_rh_exact2(0, 8).unwrap(), 2.0);
        assert_eq!(fp_rh_exact2(2, 8).unwrap(), 16.0);
        assert_eq!(fp_rh_exact2(7, 8).unwrap(), 120.0);
        assert_eq!(fp_rh_lower(3, 8, 1).unwrap(), 4.0);
        assert!((predicted_k_diag(256, 16, 0.5, true).unwrap() - 256.0 * 16.0 * 0.25 / 510.0).abs() < 1e-12);
        assert!((predicted_lambda_diag(100, 16, 0.5, false).unwrap() + 12.0 / 64.0).abs() < 1e-12);
    }

    #[test]
    fn rh_block_structure() {
        let mut rng = stream_rng(1, 2);
        let u = sample_rh(6, 2, &mut rng).unwrap();
        let m = u.matrix();
        assert!((m[(0, 0)].norm() - 1.0).abs() < 1e-12 && m[(0, 1)].norm() == 0.0 && m[(2, 0)].norm() == 0.0);
        assert!(u.unitarity_deviation() < 1e-12);
        assert!(sample_rh(4, 5, &mut rng).is_err());
    }
}
