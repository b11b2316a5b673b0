//! Plain gradient descent on the MSE loss with trace recording.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::ansatz::{random_parameters, Ansatz, AnsatzKind, ParameterVector};
use crate::derivatives::errors_and_grads;
use crate::error::{Error, Result};
use crate::kernels::{derivative_bundle, KernelSnapshot, Tensor3};
use crate::qsim::{haar_orthogonal, stream_rng};
use crate::taskdata::{loss_from_errors, orthogonal_dataset_with, DataOptions, Dataset, ObservableMode};

const STREAM_INIT: u64 = 0x494e_4954;
const STREAM_GAUGE: u64 = 0x4741_5547;

/// Loss growth factor (relative to the initial loss) that aborts a run.
pub const DIVERGENCE_FACTOR: f64 = 1e6;
/// Window (in recorded snapshots) for smoothing `λ`.
pub const LAMBDA_SMOOTHING_WINDOW: usize = 11;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub structure: u64,
    pub data: u64,
    pub init: u64,
}

impl Seeds {
    pub fn all(seed: u64) -> Self {
        Self { structure: seed, data: seed, init: seed }
    }
}

/// Recording schedule: every step below `dense_until`, then geometrically
/// spaced by `factor`; the final step is always recorded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cadence {
    pub dense_until: usize,
    pub factor: f64,
}

impl Default for Cadence {
    fn default() -> Self {
        Self { dense_until: 100, factor: 1.05 }
    }
}

impl Cadence {
    /// Sorted, deduplicated list of recorded steps in `0..=steps`.
    pub fn steps(&self, steps: usize) -> Vec<usize> {
        let mut out: Vec<usize> = (0..self.dense_until.min(steps + 1)).collect();
        let mut next = self.dense_until.max(1) as f64;
        while (next.round() as usize) <= steps {
            let s = next.round() as usize;
            if out.last().is_none_or(|&l| s > l) {
                out.push(s);
            }
            next *= self.factor.max(1.0 + 1e-9);
            if next.round() as usize == s {
                next = s as f64 + 1.0;
            }
        }
        if out.last() != Some(&steps) {
            out.push(steps);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub n_qubits: usize,
    pub ansatz: AnsatzKind,
    /// `L` for RPA, depth `D` for HEA.
    pub size: usize,
    pub targets: Vec<f64>,
    pub observable: ObservableMode,
    pub eta: f64,
    pub steps: usize,
    pub cadence: Cadence,
    pub seeds: Seeds,
    /// Compute Hessian-based quantities (μ, λ) at recorded steps.
    pub record_dqntk: bool,
    /// Keep the parameter vector at every recorded step.
    pub record_params: bool,
}

impl ExperimentConfig {
    /// σ^z-observable RPA experiment with the default cadence.
    pub fn rpa(n: usize, l: usize, targets: &[f64], seed: u64) -> Self {
        Self {
            n_qubits: n,
            ansatz: AnsatzKind::Rpa,
            size: l,
            targets: targets.to_vec(),
            observable: ObservableMode::PauliZ { qubit: 0 },
            eta: 1e-3,
            steps: 100_000,
            cadence: Cadence::default(),
            seeds: Seeds::all(seed),
            record_dqntk: true,
            record_params: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidParameter(format!("eta must be positive, got {}", self.eta)));
        }
        if self.targets.is_empty() {
            return Err(Error::InvalidParameter("targets must be nonempty".into()));
        }
        if self.targets.iter().any(|y| !y.is_finite()) {
            return Err(Error::InvalidParameter("targets must be finite".into()));
        }
        if self.size == 0 {
            return Err(Error::InvalidParameter("ansatz size must be positive".into()));
        }
        if self.cadence.factor < 1.0 {
            return Err(Error::InvalidParameter("cadence factor must be >= 1".into()));
        }
        Ok(())
    }

    pub fn build_ansatz(&self) -> Result<Ansatz> {
        match self.ansatz {
            AnsatzKind::Rpa => Ansatz::rpa(self.n_qubits, self.size, self.seeds.structure),
            AnsatzKind::Hea => Ansatz::hea(self.n_qubits, self.size, self.seeds.structure),
        }
    }

    pub fn build_dataset(&self) -> Result<Dataset> {
        let opts = DataOptions { observable: self.observable, identity_rotation: false };
        orthogonal_dataset_with(self.n_qubits, self.targets.len(), &self.targets, self.seeds.data, opts)
    }

    pub fn initial_parameters(&self, l: usize) -> ParameterVector {
        random_parameters(l, &mut stream_rng(self.seeds.init, STREAM_INIT))
    }
}

/// One recorded point of a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Record {
    pub step: usize,
    pub loss: f64,
    pub errors: Vec<f64>,
    pub k: DMatrix<f64>,
    pub angles: DMatrix<f64>,
    /// Present when the config records dQNTK.
    pub snapshot: Option<KernelSnapshot>,
    pub params: Option<ParameterVector>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainingTrace {
    pub config: ExperimentConfig,
    pub records: Vec<Record>,
    pub final_params: ParameterVector,
    pub o_range: (f64, f64),
    /// ε_α(∞) estimates (see [`estimate_eps_infinity`]).
    pub eps_infinity: Vec<f64>,
    /// `ε_α(t) − ε_α(∞)` at every record.
    pub residuals: Vec<Vec<f64>>,
    /// Smoothed λ at every record with a snapshot (ratio of window means).
    pub lambda_smoothed: Vec<Option<Tensor3>>,
    pub warnings: Vec<String>,
}

impl TrainingTrace {
    pub fn n_data(&self) -> usize {
        self.config.targets.len()
    }

    pub fn steps(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.step).collect()
    }

    /// `ε_α` over all records.
    pub fn error_series(&self, alpha: usize) -> Vec<(f64, f64)> {
        self.records.iter().map(|r| (r.step as f64, r.errors[alpha])).collect()
    }

    /// `K_{αβ}` over all records.
    pub fn kernel_series(&self, a: usize, b: usize) -> Vec<(f64, f64)> {
        self.records.iter().map(|r| (r.step as f64, r.k[(a, b)])).collect()
    }

    pub fn angle_series(&self, a: usize, b: usize) -> Vec<(f64, f64)> {
        self.records.iter().map(|r| (r.step as f64, r.angles[(a, b)])).collect()
    }

    pub fn residual_series(&self, alpha: usize) -> Vec<(f64, f64)> {
        self.records.iter().zip(&self.residuals).map(|(r, e)| (r.step as f64, e[alpha])).collect()
    }

    /// `‖λ‖₁` of the smoothed relative dQNTK at records that carry one.
    pub fn lambda_norm_series(&self) -> Vec<(f64, f64)> {
        self.records
            .iter()
            .zip(&self.lambda_smoothed)
            .filter_map(|(r, l)| l.as_ref().map(|l| (r.step as f64, l.norm1())))
            .collect()
    }

    pub fn last(&self) -> &Record {
        self.records.last().expect("trace has at least the initial record")
    }

    /// Records whose step lies in the final `fraction` of training time.
    pub fn late_window(&self, fraction: f64) -> &[Record] {
        let t_end = self.last().step as f64;
        let start = self.records.iter().position(|r| r.step as f64 >= (1.0 - fraction) * t_end).unwrap_or(self.records.len() - 1);
        &self.records[start..]
    }

    /// Records within the final decade of training time (`t ≥ T/10`).
    pub fn final_decade(&self) -> &[Record] {
        self.late_window(0.9)
    }
}

/// One gradient-descent update `θ ← θ − (η/N) Σ_α ε_α ∇ε_α`.
pub fn gd_step(a: &Ansatz, p: &[f64], ds: &Dataset, eta: f64) -> Result<ParameterVector> {
    if !(eta > 0.0) {
        return Err(Error::InvalidParameter(format!("eta must be positive, got {eta}")));
    }
    let (eps, grads) = errors_and_grads(a, p, ds)?;
    Ok(apply_update(p, &eps, &grads, eta))
}

fn apply_update(p: &[f64], eps: &[f64], grads: &[Vec<f64>], eta: f64) -> ParameterVector {
    let scale = eta / eps.len() as f64;
    let mut out = p.to_vec();
    for (e, g) in eps.iter().zip(grads) {
        for (o, gi) in out.iter_mut().zip(g) {
            *o -= scale * e * gi;
        }
    }
    out
}

/// Trains from the configured initial point.
pub fn run(config: &ExperimentConfig) -> Result<TrainingTrace> {
    config.validate()?;
    let a = config.build_ansatz()?;
    let ds = config.build_dataset()?;
    let p0 = config.initial_parameters(a.n_params());
    run_from(config, &a, &ds, p0)
}

/// Trains a prepared ansatz/dataset from `p0`.
pub fn run_from(config: &ExperimentConfig, a: &Ansatz, ds: &Dataset, p0: ParameterVector) -> Result<TrainingTrace> {
    config.validate()?;
    if ds.len() != config.targets.len() {
        return Err(Error::Shape("dataset size does not match config targets".into()));
    }
    let schedule = config.cadence.steps(config.steps);
    let mut next_record = 0usize;
    let mut p = p0;
    let mut records = Vec::with_capacity(schedule.len());
    let mut warnings = Vec::new();
    let mut initial_loss = None;
    let mut last_loss = f64::INFINITY;
    for t in 0..=config.steps {
        let recording = schedule.get(next_record) == Some(&t);
        let (eps, grads) = if recording {
            next_record += 1;
            let (eps, grads, snapshot) = if config.record_dqntk {
                let b = derivative_bundle(a, &p, ds)?;
                let snap = KernelSnapshot::from_bundle(t, &b)?;
                (b.errors, b.grads, Some(snap))
            } else {
                let (e, g) = errors_and_grads(a, &p, ds)?;
                (e, g, None)
            };
            let loss = loss_from_errors(&eps);
            let (k, angles) = match &snapshot {
                Some(s) => {
                    warnings.extend(s.warnings.iter().map(|w| format!("step {t}: {w}")));
                    (s.k.clone(), s.angles.clone())
                }
                None => {
                    let k = crate::kernels::qntk(&grads)?;
                    let ang = crate::kernels::angle_matrix(&k)?;
                    (k, ang)
                }
            };
            if loss > last_loss * (1.0 + 1e-12) + 1e-300 {
                warnings.push(format!("loss increased at step {t} ({last_loss:e} -> {loss:e}); eta may be too large"));
            }
            last_loss = loss;
            records.push(Record {
                step: t,
                loss,
                errors: eps.clone(),
                k,
                angles,
                snapshot,
                params: config.record_params.then(|| p.clone()),
            });
            (eps, grads)
        } else {
            errors_and_grads(a, &p, ds)?
        };
        let loss = loss_from_errors(&eps);
        let l0 = *initial_loss.get_or_insert(loss);
        if !loss.is_finite() || loss > DIVERGENCE_FACTOR * l0.max(f64::MIN_POSITIVE) {
            return Err(Error::NumericalAbort { step: t, eta: config.eta, reason: format!("loss {loss:e} exceeds guard (initial {l0:e})") });
        }
        if t == config.steps {
            break;
        }
        p = apply_update(&p, &eps, &grads, config.eta);
    }
    let mut trace = TrainingTrace {
        config: config.clone(),
        records,
        final_params: p,
        o_range: ds.observable_range(),
        eps_infinity: Vec::new(),
        residuals: Vec::new(),
        lambda_smoothed: Vec::new(),
        warnings,
    };
    trace.eps_infinity = estimate_eps_infinity(&trace, 0.2);
    trace.residuals = trace.records.iter().map(|r| r.errors.iter().zip(&trace.eps_infinity).map(|(e, e0)| e - e0).collect()).collect();
    trace.lambda_smoothed = smooth_lambda(&trace.records, LAMBDA_SMOOTHING_WINDOW);
    Ok(trace)
}

/// Ratio-of-window-means estimate of λ around each record:
/// `⟨μ_{γαβ}⟩ / √(⟨K_γγ⟩⟨K_ββ⟩)` over a centred window of `window` snapshots.
pub fn smooth_lambda(records: &[Record], window: usize) -> Vec<Option<Tensor3>> {
    let idx: Vec<usize> = (0..records.len()).filter(|&i| records[i].snapshot.is_some()).collect();
    let mut out = vec![None; records.len()];
    let half = window / 2;
    for (pos, &i) in idx.iter().enumerate() {
        let lo = pos.saturating_sub(half);
        let hi = (pos + half + 1).min(idx.len());
        let snaps: Vec<&KernelSnapshot> = idx[lo..hi].iter().map(|&j| records[j].snapshot.as_ref().expect("filtered")).collect();
        let n = snaps[0].n();
        let m = snaps.len() as f64;
        let kd: Vec<f64> = (0..n).map(|a| snaps.iter().map(|s| s.k[(a, a)]).sum::<f64>() / m).collect();
        out[i] = Some(Tensor3::from_fn(n, |g, a, b| {
            let mu = snaps.iter().map(|s| s.mu.get(g, a, b)).sum::<f64>() / m;
            let den = (kd[g] * kd[b]).sqrt();
            if den > 0.0 {
                mu / den
            } else {
                f64::NAN
            }
        }));
    }
    out
}

/// Late-time error estimate: mean over the final `window_fraction` of
/// training time, replaced by exactly 0 for data whose target is achievable
/// (inside or on the boundary of the observable range) and whose `log|ε|`
/// still trends downward in that window. For the remaining data a drifting
/// plateau is extrapolated by integrating the measured error velocity
/// `−(η/N)(Kε)_α` beyond the last record.
pub fn estimate_eps_infinity(trace: &TrainingTrace, window_fraction: f64) -> Vec<f64> {
    let wf = window_fraction.clamp(f64::MIN_POSITIVE, 0.5);
    let window = trace.late_window(wf);
    let (lo, hi) = trace.o_range;
    let n = trace.n_data();
    (0..n)
        .map(|alpha| {
            let mean = window.iter().map(|r| r.errors[alpha]).sum::<f64>() / window.len() as f64;
            let y = trace.config.targets[alpha];
            let achievable = y >= lo - 1e-12 && y <= hi + 1e-12;
            if achievable {
                let pts: Vec<(f64, f64)> = window
                    .iter()
                    .filter(|r| r.errors[alpha] != 0.0)
                    .map(|r| (r.step as f64, r.errors[alpha].abs().ln()))
                    .collect();
                let slope = crate::dynamics::linear_fit(&pts).map(|f| f.slope).unwrap_or(f64::NAN);
                if slope < 0.0 || mean.abs() < 1e-12 {
                    return 0.0;
                }
                mean
            } else {
                plateau_extrapolation(trace, alpha).unwrap_or(mean)
            }
        })
        .collect()
}

/// `ε_α(T) + ∫_T^∞ ε̇_α dt` with `ε̇_α = −(η/N)(Kε)_α` extrapolated from the
/// final decade by whichever of a power law or an exponential fits better.
fn plateau_extrapolation(trace: &TrainingTrace, alpha: usize) -> Option<f64> {
    let n = trace.n_data() as f64;
    let eta = trace.config.eta;
    let decade = trace.final_decade();
    let vel: Vec<(f64, f64)> = decade
        .iter()
        .map(|r| {
            let kv: f64 = (0..r.errors.len()).map(|b| r.k[(alpha, b)] * r.errors[b]).sum();
            (r.step as f64, -(eta / n) * kv)
        })
        .collect();
    let last = trace.last();
    let t_end = last.step as f64;
    let v_end = vel.last()?.1;
    if v_end == 0.0 || vel.len() < 10 || vel.iter().any(|(_, v)| v.signum() != v_end.signum() || *v == 0.0) {
        return None;
    }
    let abs: Vec<(f64, f64)> = vel.iter().map(|&(t, v)| (t, v.abs())).collect();
    let pow = crate::dynamics::fit_power_law(&abs, None).ok();
    let exp = crate::dynamics::fit_exponential(&abs, None).ok();
    let tail = match (pow, exp) {
        (Some(p), Some(e)) if e.r_squared > p.r_squared && e.rate() > 0.0 => v_end.abs() / e.rate(),
        (Some(p), _) if p.exponent() < -1.0 => v_end.abs() * t_end / (-p.exponent() - 1.0),
        (_, Some(e)) if e.rate() > 0.0 => v_end.abs() / e.rate(),
        _ => return None,
    };
    Some(last.errors[alpha] + v_end.signum() * tail)
}

/// Random orthogonal `N×N` gauge transform.
pub fn gauge_orthogonal(n: usize, seed: u64) -> Result<DMatrix<f64>> {
    haar_orthogonal(n, &mut stream_rng(seed, STREAM_GAUGE))
}

/// Gradient-descent update computed from gauge-transformed errors
/// `ε̃ = Sε` and gradients `∇ε̃ = S∇ε`.
pub fn gd_step_gauged(a: &Ansatz, p: &[f64], ds: &Dataset, eta: f64, s: &DMatrix<f64>) -> Result<ParameterVector> {
    let (eps, grads) = errors_and_grads(a, p, ds)?;
    let n = eps.len();
    if s.nrows() != n || s.ncols() != n {
        return Err(Error::Shape(format!("gauge matrix must be {n}x{n}")));
    }
    let l = p.len();
    let eps_t: Vec<f64> = (0..n).map(|i| (0..n).map(|j| s[(i, j)] * eps[j]).sum()).collect();
    let grads_t: Vec<Vec<f64>> = (0..n).map(|i| (0..l).map(|k| (0..n).map(|j| s[(i, j)] * grads[j][k]).sum()).collect()).collect();
    Ok(apply_update(p, &eps_t, &grads_t, eta))
}

/// Replays `steps` updates with and without the gauge transform and returns
/// the largest parameter deviation seen along the way.
pub fn gauge_trajectory_deviation(a: &Ansatz, p0: &[f64], ds: &Dataset, eta: f64, steps: usize, s: &DMatrix<f64>) -> Result<f64> {
    let mut p = p0.to_vec();
    let mut q = p0.to_vec();
    let mut dev: f64 = 0.0;
    for _ in 0..steps {
        p = gd_step(a, &p, ds, eta)?;
        q = gd_step_gauged(a, &q, ds, eta, s)?;
        dev = dev.max(p.iter().zip(&q).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max));
    }
    Ok(dev)
}
