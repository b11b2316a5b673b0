//! Regime prediction, convergence fits, fixed-point stability and reduced flows.

use std::collections::BTreeSet;
use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::Tensor3;
use crate::trainer::TrainingTrace;

/// Targets within this distance of `O_min`/`O_max` count as boundary targets.
pub const BOUNDARY_TOL: f64 = 1e-12;
/// Minimum `r²` for a fit to count as evidence of decay.
pub const DECAY_R2: f64 = 0.95;
/// Minimum decrease (decades) that a well-fitting model must accumulate over
/// the final decade of training for a series to count as decaying.
pub const DECAY_DROP: f64 = 0.3;
/// Absolute final value below which a series counts as having vanished.
pub const VANISHED: f64 = 1e-6;
/// Decades below its own running maximum at which a series counts as having
/// vanished even when no single model fits its final decade (e.g. a
/// coupled error that crosses zero before entering its algebraic tail).
pub const VANISHED_DECADES: f64 = 3.0;
/// `r²` margin needed to prefer one convergence model over the other.
pub const MODEL_MARGIN: f64 = 0.02;
/// Below this `r²` for both models a decay fit is ambiguous.
pub const AMBIGUOUS_R2: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegimeKind {
    FrozenKernel,
    FrozenError,
    MixedFrozen,
    CriticalPoint,
    CriticalFrozenKernel,
    CriticalFrozenError,
    CriticalMixedFrozen,
    Inconclusive,
}

impl RegimeKind {
    pub const ALL: [RegimeKind; 7] = [
        RegimeKind::FrozenKernel,
        RegimeKind::FrozenError,
        RegimeKind::MixedFrozen,
        RegimeKind::CriticalPoint,
        RegimeKind::CriticalFrozenKernel,
        RegimeKind::CriticalFrozenError,
        RegimeKind::CriticalMixedFrozen,
    ];

    /// Regimes in which some datum sits exactly on an observable bound.
    pub fn is_polynomial(self) -> bool {
        matches!(self, Self::CriticalPoint | Self::CriticalFrozenKernel | Self::CriticalFrozenError | Self::CriticalMixedFrozen)
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::FrozenKernel => "frozen-kernel",
            Self::FrozenError => "frozen-error",
            Self::MixedFrozen => "mixed-frozen",
            Self::CriticalPoint => "critical-point",
            Self::CriticalFrozenKernel => "critical-frozen-kernel",
            Self::CriticalFrozenError => "critical-frozen-error",
            Self::CriticalMixedFrozen => "critical-mixed-frozen",
            Self::Inconclusive => "inconclusive",
        }
    }
}

impl fmt::Display for RegimeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Regime together with the zero-error (`S_E`) and zero-kernel (`S_K`) index sets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegimeLabel {
    pub kind: RegimeKind,
    pub s_e: BTreeSet<usize>,
    pub s_k: BTreeSet<usize>,
    pub n: usize,
}

impl RegimeLabel {
    /// Labels a pair of index sets over `0..n` using the set relations.
    /// Returns `Inconclusive` when some index is in neither set.
    pub fn from_sets(n: usize, s_e: BTreeSet<usize>, s_k: BTreeSet<usize>) -> Self {
        let kind = kind_from_sets(n, &s_e, &s_k);
        Self { kind, s_e, s_k, n }
    }

    /// Data whose error vanishes while the kernel stays finite.
    pub fn interior(&self) -> Vec<usize> {
        self.s_e.difference(&self.s_k).copied().collect()
    }

    /// Data with both error and kernel vanishing.
    pub fn boundary(&self) -> Vec<usize> {
        self.s_e.intersection(&self.s_k).copied().collect()
    }

    /// Data with a frozen nonzero error and a vanishing kernel.
    pub fn outside(&self) -> Vec<usize> {
        self.s_k.difference(&self.s_e).copied().collect()
    }
}

fn kind_from_sets(n: usize, s_e: &BTreeSet<usize>, s_k: &BTreeSet<usize>) -> RegimeKind {
    if (0..n).any(|i| !s_e.contains(&i) && !s_k.contains(&i)) || n == 0 {
        return RegimeKind::Inconclusive;
    }
    let full_e = s_e.len() == n;
    let full_k = s_k.len() == n;
    if s_e.is_disjoint(s_k) {
        match (s_e.is_empty(), s_k.is_empty()) {
            (_, true) => RegimeKind::FrozenKernel,
            (true, _) => RegimeKind::FrozenError,
            _ => RegimeKind::MixedFrozen,
        }
    } else {
        match (full_e, full_k) {
            (true, true) => RegimeKind::CriticalPoint,
            (true, false) => RegimeKind::CriticalFrozenKernel,
            (false, true) => RegimeKind::CriticalFrozenError,
            (false, false) => RegimeKind::CriticalMixedFrozen,
        }
    }
}

/// Theoretical regime: `β ∈ S_E` if `y_β ∈ [O_min, O_max]`, `β ∈ S_K` if
/// `y_β` lies outside or on the boundary.
pub fn predict_regime(targets: &[f64], o_min: f64, o_max: f64) -> Result<RegimeLabel> {
    if !(o_min < o_max) {
        return Err(Error::InvalidParameter(format!("observable range [{o_min}, {o_max}] is empty")));
    }
    if targets.iter().any(|y| !y.is_finite()) {
        return Err(Error::InvalidParameter("targets must be finite".into()));
    }
    let mut s_e = BTreeSet::new();
    let mut s_k = BTreeSet::new();
    for (i, &y) in targets.iter().enumerate() {
        let on_boundary = (y - o_min).abs() <= BOUNDARY_TOL || (y - o_max).abs() <= BOUNDARY_TOL;
        let inside = y > o_min && y < o_max;
        if inside || on_boundary {
            s_e.insert(i);
        }
        if !inside || on_boundary {
            s_k.insert(i);
        }
    }
    Ok(RegimeLabel::from_sets(targets.len(), s_e, s_k))
}

// ---------------------------------------------------------------------------
// Fits

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitModel {
    Exponential,
    PowerLaw,
}

/// Ordinary least-squares line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn linear_fit(points: &[(f64, f64)]) -> Result<LinearFit> {
    if points.len() < 2 {
        return Err(Error::FitDomain(format!("need at least 2 points, got {}", points.len())));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::FitDomain("abscissae are all equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy > 0.0 { ((sxy * sxy) / (sxx * syy)).clamp(0.0, 1.0) } else { 0.0 };
    Ok(LinearFit { slope, intercept, r_squared })
}

/// Result of fitting `|v − offset|` to `A·e^{−rate·t}` or `A·t^{exponent}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitResult {
    pub model: FitModel,
    /// Decay rate (exponential) or log-log slope (power law).
    pub rate_or_exponent: f64,
    pub amplitude: f64,
    pub offset: f64,
    pub r_squared: f64,
    /// Inclusive time range actually used.
    pub window: (f64, f64),
    pub n_points: usize,
}

impl FitResult {
    pub fn rate(&self) -> f64 {
        self.rate_or_exponent
    }

    pub fn exponent(&self) -> f64 {
        self.rate_or_exponent
    }

    /// Model value at time `t` (offset included, sign positive).
    pub fn eval(&self, t: f64) -> f64 {
        self.offset
            + match self.model {
                FitModel::Exponential => self.amplitude * (-self.rate_or_exponent * t).exp(),
                FitModel::PowerLaw => self.amplitude * t.powf(self.rate_or_exponent),
            }
    }
}

/// Minimum points needed by the fitters.
pub const MIN_FIT_POINTS: usize = 10;

fn windowed(series: &[(f64, f64)], window: Option<(f64, f64)>) -> Vec<(f64, f64)> {
    match window {
        Some((a, b)) => series.iter().copied().filter(|(t, _)| *t >= a && *t <= b).collect(),
        None => series.to_vec(),
    }
}

fn log_points(pts: &[(f64, f64)], offset: f64, log_t: bool) -> Result<Vec<(f64, f64)>> {
    if pts.len() < MIN_FIT_POINTS {
        return Err(Error::FitDomain(format!("need at least {MIN_FIT_POINTS} points, got {}", pts.len())));
    }
    pts.iter()
        .map(|&(t, v)| {
            let r = v - offset;
            if !(r > 0.0) || !r.is_finite() {
                return Err(Error::FitDomain(format!("non-positive value {r:e} at t={t} after offset removal")));
            }
            if log_t && !(t > 0.0) {
                return Err(Error::FitDomain(format!("power-law fit needs t > 0, got {t}")));
            }
            Ok((if log_t { t.ln() } else { t }, r.ln()))
        })
        .collect()
}

fn span(pts: &[(f64, f64)]) -> (f64, f64) {
    (pts.first().map_or(f64::NAN, |p| p.0), pts.last().map_or(f64::NAN, |p| p.0))
}

/// Least squares on `ln(v)` vs `t`; the returned rate is `−slope`.
pub fn fit_exponential(series: &[(f64, f64)], window: Option<(f64, f64)>) -> Result<FitResult> {
    fit_exponential_offset(series, window, 0.0)
}

pub fn fit_exponential_offset(series: &[(f64, f64)], window: Option<(f64, f64)>, offset: f64) -> Result<FitResult> {
    let pts = windowed(series, window);
    let lf = linear_fit(&log_points(&pts, offset, false)?)?;
    Ok(FitResult {
        model: FitModel::Exponential,
        rate_or_exponent: -lf.slope,
        amplitude: lf.intercept.exp(),
        offset,
        r_squared: lf.r_squared,
        window: span(&pts),
        n_points: pts.len(),
    })
}

/// Least squares on `ln(v)` vs `ln(t)`; the returned exponent is the slope.
pub fn fit_power_law(series: &[(f64, f64)], window: Option<(f64, f64)>) -> Result<FitResult> {
    fit_power_law_offset(series, window, 0.0)
}

pub fn fit_power_law_offset(series: &[(f64, f64)], window: Option<(f64, f64)>, offset: f64) -> Result<FitResult> {
    let pts = windowed(series, window);
    let lf = linear_fit(&log_points(&pts, offset, true)?)?;
    Ok(FitResult {
        model: FitModel::PowerLaw,
        rate_or_exponent: lf.slope,
        amplitude: lf.intercept.exp(),
        offset,
        r_squared: lf.r_squared,
        window: span(&pts),
        n_points: pts.len(),
    })
}

/// Window covering the final decade `[T/10, T]` of a series.
pub fn final_decade(series: &[(f64, f64)]) -> Option<(f64, f64)> {
    let t_end = series.last()?.0;
    Some((t_end / 10.0, t_end))
}

/// Window for fitting an exponential decay of `|v|` that ends before the
/// series reaches `floor`: the last decade (in time) of the portion of the
/// run where `|v| ≥ floor`. Returns `None` if fewer than
/// [`MIN_FIT_POINTS`] points qualify.
pub fn decay_window(series: &[(f64, f64)], floor: f64) -> Option<(f64, f64)> {
    let end = series.iter().position(|(_, v)| v.abs() < floor).unwrap_or(series.len());
    let usable = &series[..end];
    let t_end = usable.last()?.0;
    let t_start = usable.first()?.0;
    let window = (t_start.max(t_end / 10.0), t_end);
    let count = usable.iter().filter(|(t, _)| *t >= window.0).count();
    if count >= MIN_FIT_POINTS {
        Some(window)
    } else {
        let k = usable.len().checked_sub(MIN_FIT_POINTS)?;
        Some((usable[k].0, t_end))
    }
}

/// `(t, |v|)` series.
pub fn abs_series(series: &[(f64, f64)]) -> Vec<(f64, f64)> {
    series.iter().map(|&(t, v)| (t, v.abs())).collect()
}

/// Evidence on whether one series vanishes at late time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayDiagnostics {
    pub decays: bool,
    pub final_value: f64,
    /// `log10(max |v| / final |v|)` over the run.
    pub decades: f64,
    pub exponential: Option<FitResult>,
    pub power_law: Option<FitResult>,
    /// Preferred model by `r²` margin, if any.
    pub model: Option<FitModel>,
    /// Both fits were attempted and both have `r²` below the ambiguity level.
    pub ambiguous: bool,
}

/// Final-decade decay test for one series (see module constants).
pub fn decay_diagnostics(series: &[(f64, f64)]) -> DecayDiagnostics {
    let abs = abs_series(series);
    let final_value = abs.last().map_or(f64::NAN, |p| p.1);
    let max = abs.iter().map(|p| p.1).fold(0.0, f64::max);
    let decades = if final_value > 0.0 { (max / final_value).log10() } else { f64::INFINITY };
    let window = final_decade(&abs);
    let exponential = fit_exponential(&abs, window).ok();
    let power_law = fit_power_law(&abs, window).ok();
    let r2 = |f: &Option<FitResult>| f.map_or(0.0, |f| f.r_squared);
    let (re, rp) = (r2(&exponential), r2(&power_law));
    let model = if re >= rp + MODEL_MARGIN {
        Some(FitModel::Exponential)
    } else if rp >= re + MODEL_MARGIN {
        Some(FitModel::PowerLaw)
    } else {
        None
    };
    // Decades of decay accumulated by a well-fitting model across its window.
    let fitted_drop = |f: &Option<FitResult>| match f {
        Some(f) if f.r_squared >= DECAY_R2 => {
            let (t0, t1) = f.window;
            match f.model {
                FitModel::Exponential => f.rate_or_exponent * (t1 - t0) / std::f64::consts::LN_10,
                FitModel::PowerLaw => -f.rate_or_exponent * (t1 / t0).log10(),
            }
        }
        _ => 0.0,
    };
    let fitted_decay = fitted_drop(&exponential).max(fitted_drop(&power_law)) >= DECAY_DROP;
    let vanished = final_value < VANISHED || decades >= VANISHED_DECADES;
    DecayDiagnostics {
        decays: vanished || fitted_decay,
        final_value,
        decades,
        exponential,
        power_law,
        model,
        ambiguous: !vanished && re < AMBIGUOUS_R2 && rp < AMBIGUOUS_R2,
    }
}

/// Per-datum empirical evidence.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatumDiagnostics {
    pub index: usize,
    pub error: DecayDiagnostics,
    pub kernel: DecayDiagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalClassification {
    pub label: RegimeLabel,
    pub per_datum: Vec<DatumDiagnostics>,
    pub notes: Vec<String>,
}

/// Classifies a trace from its error and diagonal-kernel series alone.
pub fn classify_empirical(trace: &TrainingTrace) -> EmpiricalClassification {
    let n = trace.n_data();
    let errors: Vec<Vec<(f64, f64)>> = (0..n).map(|a| trace.error_series(a)).collect();
    let kernels: Vec<Vec<(f64, f64)>> = (0..n).map(|a| trace.kernel_series(a, a)).collect();
    classify_series(&errors, &kernels)
}

/// Classification from raw `ε_α(t)` and `K_αα(t)` series.
pub fn classify_series(errors: &[Vec<(f64, f64)>], kernels: &[Vec<(f64, f64)>]) -> EmpiricalClassification {
    let n = errors.len();
    let mut s_e = BTreeSet::new();
    let mut s_k = BTreeSet::new();
    let mut per_datum = Vec::with_capacity(n);
    let mut notes = Vec::new();
    for a in 0..n {
        let e = decay_diagnostics(&errors[a]);
        let k = decay_diagnostics(&kernels[a]);
        if e.decays {
            s_e.insert(a);
        }
        if k.decays {
            s_k.insert(a);
        }
        if !e.decays && !k.decays {
            notes.push(format!(
                "datum {a}: neither error (final {:.3e}, {:.2} decades) nor kernel (final {:.3e}, {:.2} decades) shows decay",
                e.final_value, e.decades, k.final_value, k.decades
            ));
        }
        per_datum.push(DatumDiagnostics { index: a, error: e, kernel: k });
    }
    let label = RegimeLabel::from_sets(n, s_e, s_k);
    EmpiricalClassification { label, per_datum, notes }
}

// ---------------------------------------------------------------------------
// Fixed-point stability

/// `M_{αβ} = ∂G_α/∂√K_ββ` at `K*`, where
/// `G_α(g) = −Σ_β (λ_ααβ/λ_βββ) g_β (g_β² − C_β)`.
pub fn stability_matrix(k_star: &[f64], charges: &[f64], lambda: &Tensor3) -> Result<DMatrix<f64>> {
    let z = coupling_ratios(lambda)?;
    let n = z.nrows();
    if k_star.len() != n || charges.len() != n {
        return Err(Error::Shape("fixed point, charges and λ disagree in size".into()));
    }
    if let Some(b) = (0..n).find(|&b| k_star[b] < 0.0) {
        return Err(Error::Domain { value: k_star[b], domain: "K* >= 0".into() });
    }
    Ok(DMatrix::from_fn(n, n, |a, b| -z[(a, b)] * (3.0 * k_star[b] - charges[b])))
}

/// `z_{αβ} = λ_ααβ / λ_βββ`.
pub fn coupling_ratios(lambda: &Tensor3) -> Result<DMatrix<f64>> {
    let n = lambda.n();
    if let Some(b) = (0..n).find(|&b| {
        let v = lambda.get(b, b, b);
        v == 0.0 || !v.is_finite()
    }) {
        return Err(Error::SingularRatio(b));
    }
    Ok(DMatrix::from_fn(n, n, |a, b| lambda.get(a, a, b) / lambda.get(b, b, b)))
}

/// Decoupled relative dQNTK `λ_γαβ = −δ_γα δ_αβ`.
pub fn decoupled_lambda(n: usize) -> Tensor3 {
    Tensor3::from_fn(n, |g, a, b| if g == a && a == b { -1.0 } else { 0.0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FixedPointClass {
    Sink,
    SpiralSink,
    DegenerateSink,
    Saddle,
    Source,
    SpiralSource,
    DegenerateSource,
    LineOfStable,
    LineOfUnstable,
    Center,
    /// Vanishing linearization (`tr = det = 0`): higher-order terms decide.
    Degenerate,
}

impl FixedPointClass {
    pub fn is_stable(self) -> bool {
        matches!(self, Self::Sink | Self::SpiralSink | Self::DegenerateSink | Self::LineOfStable)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub fixed_point: Vec<f64>,
    pub charges: Vec<f64>,
    pub m: DMatrix<f64>,
    /// `(re, im)` pairs, sorted by real part then imaginary part.
    pub eigenvalues: Vec<(f64, f64)>,
    pub class: FixedPointClass,
    pub trace: f64,
    pub determinant: f64,
    pub discriminant: f64,
}

/// Eigenvalues of a real square matrix.
pub fn eigenvalues(m: &DMatrix<f64>) -> Vec<(f64, f64)> {
    let mut ev: Vec<(f64, f64)> = m.complex_eigenvalues().iter().map(|c| (c.re, c.im)).collect();
    ev.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    ev
}

fn is_scalar(m: &DMatrix<f64>, tol: f64) -> bool {
    let d = m[(0, 0)];
    m.iter().enumerate().all(|(i, v)| {
        let (r, c) = (i % m.nrows(), i / m.nrows());
        if r == c { (v - d).abs() <= tol } else { v.abs() <= tol }
    })
}

/// Poincaré classification for `N = 2`; sign of the real parts otherwise.
pub fn classify_fixed_point(m: &DMatrix<f64>) -> Result<StabilityReport> {
    let n = m.nrows();
    if m.ncols() != n || n == 0 {
        return Err(Error::Shape("stability matrix must be square and nonempty".into()));
    }
    let eig = eigenvalues(m);
    let trace = m.trace();
    let determinant = m.determinant();
    let discriminant = trace * trace - 4.0 * determinant;
    let scale = m.iter().fold(0.0_f64, |s, v| s.max(v.abs())).max(1.0);
    let tol = 1e-12 * scale;
    let class = if n == 2 {
        let (tr, det, disc) = (trace, determinant, discriminant);
        let t_sign = if tr.abs() <= tol { 0 } else if tr < 0.0 { -1 } else { 1 };
        if det < -tol * scale {
            FixedPointClass::Saddle
        } else if det.abs() <= tol * scale {
            match t_sign {
                -1 => FixedPointClass::LineOfStable,
                1 => FixedPointClass::LineOfUnstable,
                _ => FixedPointClass::Degenerate,
            }
        } else if t_sign == 0 {
            FixedPointClass::Center
        } else if disc.abs() <= tol * scale && !is_scalar(m, tol) {
            // Repeated eigenvalue with a single eigenvector; a multiple of the
            // identity (star node) is an ordinary sink/source.
            if t_sign < 0 { FixedPointClass::DegenerateSink } else { FixedPointClass::DegenerateSource }
        } else if disc.abs() <= tol * scale {
            if t_sign < 0 { FixedPointClass::Sink } else { FixedPointClass::Source }
        } else if disc > 0.0 {
            if t_sign < 0 { FixedPointClass::Sink } else { FixedPointClass::Source }
        } else if t_sign < 0 {
            FixedPointClass::SpiralSink
        } else {
            FixedPointClass::SpiralSource
        }
    } else {
        let neg = eig.iter().filter(|e| e.0 < -tol).count();
        let pos = eig.iter().filter(|e| e.0 > tol).count();
        let complex = eig.iter().any(|e| e.1.abs() > tol);
        match (neg, pos) {
            (k, 0) if k == n => if complex { FixedPointClass::SpiralSink } else { FixedPointClass::Sink },
            (0, k) if k == n => if complex { FixedPointClass::SpiralSource } else { FixedPointClass::Source },
            (_, p) if p > 0 && neg > 0 => FixedPointClass::Saddle,
            (0, 0) => FixedPointClass::Degenerate,
            (_, 0) => FixedPointClass::LineOfStable,
            _ => FixedPointClass::LineOfUnstable,
        }
    };
    Ok(StabilityReport {
        fixed_point: Vec::new(),
        charges: Vec::new(),
        m: m.clone(),
        eigenvalues: eig,
        class,
        trace,
        determinant,
        discriminant,
    })
}

/// Stability of a given fixed point (`K*` diagonal) for given charges and λ.
pub fn stability_report(k_star: &[f64], charges: &[f64], lambda: &Tensor3) -> Result<StabilityReport> {
    let m = stability_matrix(k_star, charges, lambda)?;
    let mut r = classify_fixed_point(&m)?;
    r.fixed_point = k_star.to_vec();
    r.charges = charges.to_vec();
    Ok(r)
}

/// Physically accessible fixed points: every `K*_β ∈ {0, C_β}` with
/// `C_β > 0` for the nonzero choice.
pub fn accessible_fixed_points(charges: &[f64]) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::new()];
    for &c in charges {
        let mut next = Vec::new();
        for p in &out {
            let mut z = p.clone();
            z.push(0.0);
            next.push(z);
            if c > 0.0 {
                let mut q = p.clone();
                q.push(c);
                next.push(q);
            }
        }
        out = next;
    }
    out
}

/// Stability reports of all accessible fixed points.
pub fn fixed_point_survey(charges: &[f64], lambda: &Tensor3) -> Result<Vec<StabilityReport>> {
    accessible_fixed_points(charges).iter().map(|k| stability_report(k, charges, lambda)).collect()
}

/// Fixed point selected by the charge signs: `K*_β = max(C_β, 0)`.
pub fn predicted_stable_point(charges: &[f64]) -> Vec<f64> {
    charges.iter().map(|&c| c.max(0.0)).collect()
}

// ---------------------------------------------------------------------------
// Reduced flow

/// `G_α(g)` with `g_β = √K_ββ`.
pub fn reduced_flow(charges: &[f64], z: &DMatrix<f64>, g: &[f64]) -> Vec<f64> {
    let n = g.len();
    let v: Vec<f64> = (0..n).map(|b| g[b] * (g[b] * g[b] - charges[b])).collect();
    (0..n).map(|a| -(0..n).map(|b| z[(a, b)] * v[b]).sum::<f64>()).collect()
}

/// Uniform grid over `[lo, hi]` with `points` samples per axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridAxis {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl GridAxis {
    pub fn values(&self) -> Vec<f64> {
        if self.points <= 1 {
            return vec![self.lo];
        }
        (0..self.points).map(|i| self.lo + (self.hi - self.lo) * i as f64 / (self.points - 1) as f64).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FlowSample {
    pub g1: f64,
    pub g2: f64,
    pub dg1: f64,
    pub dg2: f64,
}

/// Samples `∂_t g = (η/2N)·G(g)` for `N = 2` over a nonnegative grid.
pub fn flow_field(charges: &[f64], lambda: &Tensor3, eta: f64, g1: GridAxis, g2: GridAxis) -> Result<Vec<FlowSample>> {
    if charges.len() != 2 || lambda.n() != 2 {
        return Err(Error::Unsupported("flow fields are defined for two data".into()));
    }
    for ax in [g1, g2] {
        if ax.lo < 0.0 || ax.hi < 0.0 {
            return Err(Error::Domain { value: ax.lo.min(ax.hi), domain: "g = sqrt(K) >= 0".into() });
        }
    }
    let z = coupling_ratios(lambda)?;
    let pref = eta / 4.0;
    let mut out = Vec::with_capacity(g1.points * g2.points);
    for &a in &g1.values() {
        for &b in &g2.values() {
            let f = reduced_flow(charges, &z, &[a, b]);
            out.push(FlowSample { g1: a, g2: b, dg1: pref * f[0], dg2: pref * f[1] });
        }
    }
    Ok(out)
}

/// Classical RK4 for `dg/ds = G(g)/(2N)` in rescaled time `s = ηt`.
pub fn integrate_flow(charges: &[f64], lambda: &Tensor3, g0: &[f64], h: f64, steps: usize) -> Result<Vec<f64>> {
    let z = coupling_ratios(lambda)?;
    let n = g0.len();
    if charges.len() != n || z.nrows() != n {
        return Err(Error::Shape("initial point, charges and λ disagree in size".into()));
    }
    if let Some(v) = g0.iter().find(|v| **v < 0.0) {
        return Err(Error::Domain { value: *v, domain: "g = sqrt(K) >= 0".into() });
    }
    let f = |g: &[f64]| -> Vec<f64> { reduced_flow(charges, &z, g).into_iter().map(|v| v / (2.0 * n as f64)).collect() };
    let mut y = g0.to_vec();
    let mut tmp = vec![0.0; n];
    for _ in 0..steps {
        let k1 = f(&y);
        tmp.iter_mut().zip(&y).zip(&k1).for_each(|((t, y), k)| *t = y + 0.5 * h * k);
        let k2 = f(&tmp);
        tmp.iter_mut().zip(&y).zip(&k2).for_each(|((t, y), k)| *t = y + 0.5 * h * k);
        let k3 = f(&tmp);
        tmp.iter_mut().zip(&y).zip(&k3).for_each(|((t, y), k)| *t = y + h * k);
        let k4 = f(&tmp);
        for i in 0..n {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalAbort { step: 0, eta: h, reason: "flow integration diverged".into() });
        }
    }
    Ok(y)
}

// ---------------------------------------------------------------------------
// Late-time linear operators and theory curves

/// Smallest real part among the eigenvalues of `m`.
pub fn min_real_eigenvalue(m: &DMatrix<f64>) -> f64 {
    eigenvalues(m).first().map_or(f64::NAN, |e| e.0)
}

/// Frozen-error operator `F_αβ = λ_ααβ ε_β(∞)` governing `g_α`.
pub fn frozen_error_matrix(eps_inf: &[f64], lambda: &Tensor3) -> DMatrix<f64> {
    let n = eps_inf.len();
    DMatrix::from_fn(n, n, |a, b| lambda.get(a, a, b) * eps_inf[b])
}

/// Mixed-frozen block operator acting on `([ε_α]_{S_E}, [g_α]_{S_K})`.
pub fn mixed_frozen_matrix(
    s_e: &[usize],
    s_k: &[usize],
    k_inf: &DMatrix<f64>,
    angles: &DMatrix<f64>,
    eps_inf: &[f64],
    lambda: &Tensor3,
) -> DMatrix<f64> {
    let idx: Vec<(usize, bool)> = s_e.iter().map(|&a| (a, true)).chain(s_k.iter().map(|&a| (a, false))).collect();
    let g = |a: usize| k_inf[(a, a)].max(0.0).sqrt();
    DMatrix::from_fn(idx.len(), idx.len(), |i, j| {
        let (a, a_e) = idx[i];
        let (b, b_e) = idx[j];
        match (a_e, b_e) {
            (true, true) => k_inf[(a, b)],
            (true, false) => g(a) * angles[(a, b)] * eps_inf[b],
            (false, true) => lambda.get(a, a, b) * g(b),
            (false, false) => lambda.get(a, a, b) * eps_inf[b],
        }
    })
}

/// Leading-order late-time family for one series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum TheoryFamily {
    /// `offset + amplitude · exp(−η w t / N)`.
    Exponential { offset: f64, amplitude: f64, w: f64 },
    /// `offset + coefficient / (c0 + η t / N)^power`.
    Algebraic { offset: f64, coefficient: f64, c0: f64, power: f64 },
}

impl TheoryFamily {
    pub fn eval(&self, t: f64, eta: f64, n: usize) -> f64 {
        let s = eta * t / n as f64;
        match *self {
            Self::Exponential { offset, amplitude, w } => offset + amplitude * (-w * s).exp(),
            Self::Algebraic { offset, coefficient, c0, power } => offset + coefficient / (c0 + s).powf(power),
        }
    }
}

/// Evaluates the per-series families on a time grid, checking that the
/// family type matches the convergence class of the regime.
pub fn theory_curve(regime: RegimeKind, families: &[TheoryFamily], eta: f64, n_data: usize, t: &[f64]) -> Result<Vec<Vec<f64>>> {
    if regime == RegimeKind::Inconclusive {
        return Err(Error::Unsupported("no theory curve for an inconclusive regime".into()));
    }
    for f in families {
        let ok = match f {
            TheoryFamily::Exponential { .. } => !regime.is_polynomial(),
            // Polynomial regimes may still carry exponentially converging
            // components only through their algebraic leaders.
            TheoryFamily::Algebraic { .. } => regime.is_polynomial(),
        };
        if !ok {
            return Err(Error::Unsupported(format!("{f:?} does not belong to the {regime} class")));
        }
    }
    Ok(families.iter().map(|f| t.iter().map(|&x| f.eval(x, eta, n_data)).collect()).collect())
}

/// Fits `v = coefficient/(c0 + ηt/N)^power` with the power fixed, via the
/// linear relation `v^{−1/power} = (c0 + ηt/N)/coefficient^{1/power}`.
/// The sign of the series is carried by the coefficient.
pub fn fit_algebraic(series: &[(f64, f64)], power: f64, eta: f64, n_data: usize, window: Option<(f64, f64)>) -> Result<TheoryFamily> {
    if !(power > 0.0) {
        return Err(Error::InvalidParameter(format!("power must be positive, got {power}")));
    }
    let pts = windowed(series, window);
    if pts.len() < MIN_FIT_POINTS {
        return Err(Error::FitDomain(format!("need at least {MIN_FIT_POINTS} points, got {}", pts.len())));
    }
    let sign = pts.last().map_or(1.0, |p| p.1.signum());
    let lin: Vec<(f64, f64)> = pts
        .iter()
        .map(|&(t, v)| {
            let a = v * sign;
            if !(a > 0.0) {
                return Err(Error::FitDomain(format!("series changes sign at t={t}")));
            }
            Ok((eta * t / n_data as f64, a.powf(-1.0 / power)))
        })
        .collect::<Result<_>>()?;
    let lf = linear_fit(&lin)?;
    if !(lf.slope > 0.0) {
        return Err(Error::FitDomain("series does not decay".into()));
    }
    let coefficient = sign * lf.slope.powf(-power);
    let c0 = lf.intercept / lf.slope;
    Ok(TheoryFamily::Algebraic { offset: 0.0, coefficient, c0, power })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_examples() {
        let k = |y: &[f64]| predict_regime(y, -1.0, 1.0).unwrap().kind;
        assert_eq!(k(&[0.3, -0.5]), RegimeKind::FrozenKernel);
        assert_eq!(k(&[5.0, -6.0]), RegimeKind::FrozenError);
        assert_eq!(k(&[0.4, -5.0]), RegimeKind::MixedFrozen);
        assert_eq!(k(&[1.0, -1.0]), RegimeKind::CriticalPoint);
        assert_eq!(k(&[0.4, -1.0]), RegimeKind::CriticalFrozenKernel);
        assert_eq!(k(&[1.0, -5.0]), RegimeKind::CriticalFrozenError);
        assert_eq!(k(&[0.4, 1.0, -5.0]), RegimeKind::CriticalMixedFrozen);
    }

    #[test]
    fn exact_synthetic_fits() {
        let e: Vec<(f64, f64)> = (0..200).map(|i| (i as f64 * 10.0, (-0.01 * i as f64 * 10.0).exp())).collect();
        let f = fit_exponential(&e, None).unwrap();
        assert!((f.rate() - 0.01).abs() < 1e-6 && f.r_squared > 0.999999);
        let p: Vec<(f64, f64)> = (1..200).map(|i| (i as f64, 1.0 / i as f64)).collect();
        assert!((fit_power_law(&p, None).unwrap().exponent() + 1.0).abs() < 1e-6);
    }

    #[test]
    fn poincare_cases() {
        let c = |v: [f64; 4]| classify_fixed_point(&DMatrix::from_row_slice(2, 2, &v)).unwrap().class;
        assert_eq!(c([1.0, 0.0, 0.0, -1.0]), FixedPointClass::Saddle);
        assert_eq!(c([-1.0, 0.0, 0.0, -2.0]), FixedPointClass::Sink);
        assert_eq!(c([-1.0, 0.0, 0.0, 0.0]), FixedPointClass::LineOfStable);
        assert_eq!(c([-1.0, 2.0, -2.0, -1.0]), FixedPointClass::SpiralSink);
        assert_eq!(c([0.0; 4]), FixedPointClass::Degenerate);
    }
}
