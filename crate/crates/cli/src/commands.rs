//! Command implementations.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use qdyn::dynamics::{
    classify_series, decay_diagnostics, decoupled_lambda, final_decade, fit_exponential, fit_power_law, fixed_point_survey, flow_field,
    predict_regime, predicted_stable_point, stability_report, abs_series, DecayDiagnostics, FitResult, FixedPointClass, GridAxis, RegimeKind,
    RegimeLabel, StabilityReport,
};
use qdyn::ensemble::{self, EnsembleReport, Sampler};
use qdyn::kernels::{charges, Tensor3};
use qdyn::taskdata::ObservableMode;
use qdyn::trainer::{run as train_run, ExperimentConfig, Seeds, TrainingTrace};
use serde::Serialize;

use crate::config::{self, parse_f64_list, ConfigError, EnsembleSpec, SweepAxis, SweepSpec};
use crate::output::{self, KernelLine, RunManifest, TraceTable};
use crate::{ClassifyArgs, CliError, Command, EnsembleArgs, FlowArgs, Overrides, RunArgs, StabilityArgs, TrainArgs, EXIT_INCONCLUSIVE, EXIT_OK};

type Result<T> = std::result::Result<T, CliError>;

/// Fraction of training time averaged for late-time quantities in sweeps.
pub const LATE_FRACTION: f64 = 0.2;

pub fn dispatch(cmd: &Command) -> Result<u8> {
    match cmd {
        Command::Train(a) => cmd_train(a),
        Command::Classify(a) => cmd_classify(a),
        Command::Stability(a) => cmd_stability(a),
        Command::Flowfield(a) => cmd_flowfield(a),
        Command::Ensemble(a) => cmd_ensemble(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Validate(a) => cmd_validate(a),
    }
}

fn apply_overrides(cfg: &mut ExperimentConfig, o: &Overrides) -> std::result::Result<(), ConfigError> {
    if let Some(s) = o.seed {
        cfg.seeds = Seeds::all(s);
    }
    if let Some(t) = o.steps {
        cfg.steps = t;
    }
    if let Some(e) = o.eta {
        cfg.eta = e;
    }
    config::check_experiment(cfg)
}

fn load_experiment(path: &Path, o: &Overrides) -> Result<(config::FileConfig, ExperimentConfig)> {
    let file = config::load(path)?;
    let mut cfg = file.experiment()?.clone();
    apply_overrides(&mut cfg, o)?;
    Ok((file, cfg))
}

// ---------------------------------------------------------------------------
// Regime reports

/// Fits of one datum's series.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesFits {
    pub index: usize,
    pub target: f64,
    pub error: DecayDiagnostics,
    pub kernel: DecayDiagnostics,
    /// Final-decade fits of `|ε_α − ε_α(∞)|`.
    pub residual_power_law: Option<FitResult>,
    pub residual_exponential: Option<FitResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilitySummary {
    pub trace: f64,
    pub det: f64,
    pub class: FixedPointClass,
    pub eigenvalues: Vec<(f64, f64)>,
    /// Measured `K*` at which `M` was evaluated.
    pub fixed_point: Vec<f64>,
    pub predicted_stable_point: Vec<f64>,
}

impl From<&StabilityReport> for StabilitySummary {
    fn from(r: &StabilityReport) -> Self {
        Self {
            trace: r.trace,
            det: r.determinant,
            class: r.class,
            eigenvalues: r.eigenvalues.clone(),
            fixed_point: r.fixed_point.clone(),
            predicted_stable_point: predicted_stable_point(&r.charges),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeReport {
    pub predicted: RegimeLabel,
    pub empirical: RegimeLabel,
    pub agrees: bool,
    pub per_series_fits: Vec<SeriesFits>,
    pub stability: Option<StabilitySummary>,
    pub charges: Option<Vec<f64>>,
    pub eps_infinity: Vec<f64>,
    pub final_loss: f64,
    pub notes: Vec<String>,
}

/// The series a regime report needs, from memory or from disk.
struct TraceView {
    config: ExperimentConfig,
    errors: Vec<Vec<(f64, f64)>>,
    kernels: Vec<Vec<(f64, f64)>>,
    residuals: Vec<Vec<(f64, f64)>>,
    eps_infinity: Vec<f64>,
    final_loss: f64,
    last: Option<KernelLine>,
}

impl TraceView {
    fn from_trace(t: &TrainingTrace) -> Self {
        let n = t.n_data();
        Self {
            config: t.config.clone(),
            errors: (0..n).map(|a| t.error_series(a)).collect(),
            kernels: (0..n).map(|a| t.kernel_series(a, a)).collect(),
            residuals: (0..n).map(|a| t.residual_series(a)).collect(),
            eps_infinity: t.eps_infinity.clone(),
            final_loss: t.last().loss,
            last: output::kernel_lines(t).pop(),
        }
    }

    fn from_dir(dir: &Path) -> Result<Self> {
        let config = output::read_config(dir)?;
        let table = TraceTable::read(&dir.join(output::TRACE_FILE))?;
        let n = table.n_data();
        if n != config.targets.len() {
            return Err(CliError::Input(format!("{}: trace has {n} data, config has {}", dir.display(), config.targets.len())));
        }
        let col = |name: String| table.series(&name).ok_or_else(|| CliError::Input(format!("trace.csv lacks column {name}")));
        let errors: Vec<_> = (0..n).map(|a| col(format!("eps_{a}"))).collect::<Result<_>>()?;
        let kernels: Vec<_> = (0..n).map(|a| col(format!("K_{a}_{a}"))).collect::<Result<_>>()?;
        let residuals: Vec<_> = (0..n).map(|a| col(format!("residual_{a}"))).collect::<Result<_>>()?;
        let last_row = table.rows.last().ok_or_else(|| CliError::Input("trace.csv has no rows".into()))?;
        let eps_infinity = (0..n).map(|a| errors[a].last().unwrap().1 - residuals[a].last().unwrap().1).collect();
        let kernels_path = dir.join(output::KERNELS_FILE);
        let last = if kernels_path.exists() { output::read_kernel_lines(&kernels_path)?.pop() } else { None };
        Ok(Self { config, errors, kernels, residuals, eps_infinity, final_loss: last_row[1], last })
    }
}

fn residual_fits(series: &[(f64, f64)]) -> (Option<FitResult>, Option<FitResult>) {
    let abs = abs_series(series);
    let w = final_decade(&abs);
    (fit_power_law(&abs, w).ok(), fit_exponential(&abs, w).ok())
}

fn build_report(v: &TraceView) -> Result<RegimeReport> {
    let ds = v.config.build_dataset()?;
    let (o_min, o_max) = ds.observable_range();
    let predicted = predict_regime(&v.config.targets, o_min, o_max)?;
    let empirical = classify_series(&v.errors, &v.kernels);
    let mut notes = empirical.notes.clone();
    let per_series_fits = (0..v.errors.len())
        .map(|a| {
            let (pl, ex) = residual_fits(&v.residuals[a]);
            SeriesFits {
                index: a,
                target: v.config.targets[a],
                error: decay_diagnostics(&v.errors[a]),
                kernel: decay_diagnostics(&v.kernels[a]),
                residual_power_law: pl,
                residual_exponential: ex,
            }
        })
        .collect();
    let (mut stability, mut charge_values) = (None, None);
    match v.last.as_ref().and_then(|l| l.best_lambda().map(|lam| (l, lam))) {
        Some((line, lam)) => {
            let k_star = line.k_diag();
            let c = charges(&k_star, &line.errors, &lam);
            match stability_report(&k_star, &c, &lam) {
                Ok(r) => stability = Some(StabilitySummary::from(&r)),
                Err(e) => notes.push(format!("stability matrix unavailable: {e}")),
            }
            charge_values = Some(c);
        }
        None => notes.push("no dQNTK snapshot in the final record; stability skipped".into()),
    }
    Ok(RegimeReport {
        agrees: predicted.kind == empirical.label.kind,
        predicted,
        empirical: empirical.label,
        per_series_fits,
        stability,
        charges: charge_values,
        eps_infinity: v.eps_infinity.clone(),
        final_loss: v.final_loss,
        notes,
    })
}

/// Regime report of an in-memory trace.
pub fn regime_report(trace: &TrainingTrace) -> Result<RegimeReport> {
    build_report(&TraceView::from_trace(trace))
}

/// Regime report of a trace directory written by `train`.
pub fn regime_report_from_dir(dir: &Path) -> Result<RegimeReport> {
    build_report(&TraceView::from_dir(dir)?)
}

fn science_code(kind: RegimeKind) -> u8 {
    if kind == RegimeKind::Inconclusive {
        EXIT_INCONCLUSIVE
    } else {
        EXIT_OK
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value).map_err(|e| CliError::Input(e.to_string()))?);
    Ok(())
}

// ---------------------------------------------------------------------------
// train / classify

/// Trains `cfg`, writes all artifacts into `dir` and returns the report.
pub fn train_into(cfg: &ExperimentConfig, dir: &Path, command: &str, config_path: Option<&Path>) -> Result<RegimeReport> {
    let t0 = Instant::now();
    let trace = train_run(cfg)?;
    output::write_trace(dir, &trace)?;
    let report = regime_report(&trace)?;
    output::write_json(&dir.join(output::REPORT_FILE), &report)?;
    RunManifest::new(command, config_path, vec![cfg.seeds], dir, t0.elapsed().as_secs_f64()).write()?;
    Ok(report)
}

fn cmd_train(a: &TrainArgs) -> Result<u8> {
    let (_, cfg) = load_experiment(&a.config, &a.overrides)?;
    let report = train_into(&cfg, &a.out, "train", Some(&a.config))?;
    println!("predicted {} / empirical {} -> {}", report.predicted.kind, report.empirical.kind, a.out.display());
    Ok(science_code(report.empirical.kind))
}

fn cmd_classify(a: &ClassifyArgs) -> Result<u8> {
    let t0 = Instant::now();
    let report = regime_report_from_dir(&a.trace)?;
    match &a.out {
        Some(out) => {
            std::fs::create_dir_all(out)?;
            output::write_json(&out.join(output::REPORT_FILE), &report)?;
            let seeds = output::read_config(&a.trace).map(|c| vec![c.seeds]).unwrap_or_default();
            RunManifest::new("classify", None, seeds, out, t0.elapsed().as_secs_f64()).write()?;
        }
        None => print_json(&report)?,
    }
    Ok(science_code(report.empirical.kind))
}

// ---------------------------------------------------------------------------
// stability / flowfield

fn parse_charges(text: &str) -> Result<Vec<f64>> {
    Ok(parse_f64_list("--charges", text)?)
}

fn lambda_from_dir(dir: &Path) -> Result<Tensor3> {
    let lines = output::read_kernel_lines(&dir.join(output::KERNELS_FILE))?;
    lines
        .iter()
        .rev()
        .find_map(KernelLine::best_lambda)
        .ok_or_else(|| CliError::Input(format!("{}: no λ recorded", dir.display())))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityOutput {
    pub charges: Vec<f64>,
    pub lambda_source: String,
    pub predicted_stable_point: Vec<f64>,
    /// Report at the measured late-time point (trace input only).
    pub measured: Option<StabilityReport>,
    /// Every physically accessible fixed point.
    pub survey: Vec<StabilityReport>,
}

pub fn stability_output(a: &StabilityArgs) -> Result<StabilityOutput> {
    match (&a.trace, &a.charges) {
        (Some(dir), _) => {
            let lines = output::read_kernel_lines(&dir.join(output::KERNELS_FILE))?;
            let line = lines.iter().rev().find(|l| l.best_lambda().is_some()).ok_or_else(|| CliError::Input("trace has no λ".into()))?;
            let lam = line.best_lambda().expect("checked");
            let k_star = line.k_diag();
            let c = charges(&k_star, &line.errors, &lam);
            Ok(StabilityOutput {
                predicted_stable_point: predicted_stable_point(&c),
                measured: Some(stability_report(&k_star, &c, &lam)?),
                survey: fixed_point_survey(&c, &lam)?,
                charges: c,
                lambda_source: format!("{} (step {})", dir.display(), line.step),
            })
        }
        (None, Some(text)) => {
            let c = parse_charges(text)?;
            let (lam, source) = match &a.lambda {
                Some(dir) => (lambda_from_dir(dir)?, dir.display().to_string()),
                None => (decoupled_lambda(c.len()), "decoupled".to_string()),
            };
            if lam.n() != c.len() {
                return Err(CliError::Input(format!("λ has {} data but {} charges were given", lam.n(), c.len())));
            }
            Ok(StabilityOutput {
                predicted_stable_point: predicted_stable_point(&c),
                measured: None,
                survey: fixed_point_survey(&c, &lam)?,
                charges: c,
                lambda_source: source,
            })
        }
        (None, None) => Err(CliError::Input("stability needs --trace or --charges".into())),
    }
}

fn cmd_stability(a: &StabilityArgs) -> Result<u8> {
    let t0 = Instant::now();
    let out = stability_output(a)?;
    match &a.out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            output::write_json(&dir.join("stability.json"), &out)?;
            RunManifest::new("stability", None, Vec::new(), dir, t0.elapsed().as_secs_f64()).write()?;
        }
        None => print_json(&out)?,
    }
    Ok(EXIT_OK)
}

fn parse_grid(text: &str) -> Result<GridAxis> {
    let v = parse_f64_list("--grid", text)?;
    if v.len() != 3 || v[2] < 1.0 || v[2].fract() != 0.0 || v[1] < v[0] {
        return Err(ConfigError::new("--grid", "expected `lo,hi,points` with hi >= lo and points >= 1").into());
    }
    Ok(GridAxis { lo: v[0], hi: v[1], points: v[2] as usize })
}

pub fn flowfield_csv(a: &FlowArgs) -> Result<String> {
    let c = parse_charges(&a.charges)?;
    if c.len() != 2 {
        return Err(ConfigError::new("--charges", "flow fields need exactly two charges").into());
    }
    let lam = match &a.lambda {
        Some(dir) => lambda_from_dir(dir)?,
        None => decoupled_lambda(2),
    };
    let axis = parse_grid(&a.grid)?;
    let samples = flow_field(&c, &lam, a.eta, axis, axis)?;
    let mut csv = String::from("g1,g2,dg1,dg2\n");
    for s in samples {
        let _ = writeln!(csv, "{},{},{},{}", output::fmt_f64(s.g1), output::fmt_f64(s.g2), output::fmt_f64(s.dg1), output::fmt_f64(s.dg2));
    }
    Ok(csv)
}

fn cmd_flowfield(a: &FlowArgs) -> Result<u8> {
    let t0 = Instant::now();
    let csv = flowfield_csv(a)?;
    std::fs::create_dir_all(&a.out)?;
    std::fs::write(a.out.join("flowfield.csv"), csv)?;
    RunManifest::new("flowfield", None, Vec::new(), &a.out, t0.elapsed().as_secs_f64()).write()?;
    Ok(EXIT_OK)
}

// ---------------------------------------------------------------------------
// ensemble

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleOutput {
    #[serde(flatten)]
    pub report: EnsembleReport,
    /// Combinatorial lower bound at the same `(N, d, k)`.
    pub lower_bound: f64,
}

pub fn ensemble_output(spec: EnsembleSpec) -> Result<EnsembleOutput> {
    let sampler = if spec.n_data == 0 { Sampler::Haar { d: spec.dim } } else { Sampler::RestrictedHaar { d: spec.dim, n: spec.n_data } };
    let report = ensemble::frame_potential_mc(sampler, spec.order, spec.pairs, spec.seed)?;
    let lower_bound = ensemble::fp_rh_lower(spec.n_data, spec.dim, spec.order)?;
    Ok(EnsembleOutput { report, lower_bound })
}

fn cmd_ensemble(a: &EnsembleArgs) -> Result<u8> {
    let t0 = Instant::now();
    let mut spec = match &a.config {
        Some(p) => config::load(p)?.ensemble.unwrap_or_default(),
        None => EnsembleSpec::default(),
    };
    spec.dim = a.dim.unwrap_or(spec.dim);
    spec.n_data = a.n_data.unwrap_or(spec.n_data);
    spec.order = a.order.unwrap_or(spec.order);
    spec.pairs = a.pairs.unwrap_or(spec.pairs);
    spec.seed = a.seed.unwrap_or(spec.seed);
    let out = ensemble_output(spec)?;
    match &a.out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            output::write_json(&dir.join("ensemble.json"), &out)?;
            RunManifest::new("ensemble", a.config.as_deref(), vec![Seeds::all(spec.seed)], dir, t0.elapsed().as_secs_f64()).write()?;
        }
        None => print_json(&out)?,
    }
    Ok(EXIT_OK)
}

// ---------------------------------------------------------------------------
// sweep / validate

fn resolve_workers(w: Option<usize>) -> usize {
    w.filter(|&w| w > 0).unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Applies `f` to every item on a bounded pool; results keep input order.
pub fn parallel_map<T: Sync, R: Send>(items: &[T], workers: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers.clamp(1, items.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                slots.lock().expect("worker panicked")[i] = Some(r);
            });
        }
    });
    slots.into_inner().expect("worker panicked").into_iter().map(|r| r.expect("every slot filled")).collect()
}

/// Configuration of one sweep cell.
pub fn cell_config(base: &ExperimentConfig, axis: SweepAxis, value: f64) -> std::result::Result<ExperimentConfig, ConfigError> {
    let mut c = base.clone();
    match axis {
        SweepAxis::Target(i) => {
            let slot = c.targets.get_mut(i).ok_or_else(|| ConfigError::new("axis", format!("y{} exceeds the {} configured targets", i + 1, base.targets.len())))?;
            *slot = value;
        }
        SweepAxis::Size => c.size = value as usize,
        SweepAxis::NData => {
            let n = value as usize;
            if n == 0 || n > base.targets.len() {
                return Err(ConfigError::new("values", format!("n_data {n} needs 1..={} configured targets", base.targets.len())));
            }
            c.targets.truncate(n);
        }
        SweepAxis::Seed => c.seeds = Seeds::all(value as u64),
    }
    config::check_experiment(&c)?;
    Ok(c)
}

/// Late-time summary of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub predicted: RegimeKind,
    pub empirical: RegimeKind,
    pub eps_infinity: Vec<f64>,
    /// Late-window means of `o_α = ε_α + y_α`, `K_αα` and `μ_ααα`.
    pub o: Vec<f64>,
    pub k: Vec<f64>,
    pub mu: Vec<f64>,
}

pub fn summarize(trace: &TrainingTrace, report: &RegimeReport) -> RunSummary {
    let n = trace.n_data();
    let late = trace.late_window(LATE_FRACTION);
    let mean = |f: &dyn Fn(&qdyn::trainer::Record) -> Option<f64>| -> f64 {
        let v: Vec<f64> = late.iter().filter_map(f).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    RunSummary {
        predicted: report.predicted.kind,
        empirical: report.empirical.kind,
        eps_infinity: trace.eps_infinity.clone(),
        o: (0..n).map(|a| mean(&|r| Some(r.errors[a] + trace.config.targets[a]))).collect(),
        k: (0..n).map(|a| mean(&|r| Some(r.k[(a, a)]))).collect(),
        mu: (0..n).map(|a| mean(&|r| r.snapshot.as_ref().map(|s| s.mu.get(a, a, a)))).collect(),
    }
}

fn run_dir(out: &Path, cell: usize, seed: u64) -> PathBuf {
    out.join(format!("cell_{cell:03}")).join(format!("seed_{seed}"))
}

/// Aggregated sweep table (one row per cell, columns padded to the largest `N`).
pub fn sweep_csv(spec: &SweepSpec, cells: &[ExperimentConfig], runs: &[Vec<RunSummary>]) -> String {
    let n_max = cells.iter().map(|c| c.targets.len()).max().unwrap_or(0);
    let mut header = vec!["axis".to_string(), "value".into(), "runs".into(), "predicted".into(), "empirical".into(), "agreement".into()];
    for a in 0..n_max {
        for col in ["o", "eps_inf", "K", "lambda", "pred_K", "pred_lambda"] {
            header.push(format!("{col}_{a}"));
        }
    }
    let mut csv = header.join(",");
    csv.push('\n');
    for ((value, cfg), rs) in spec.values.iter().zip(cells).zip(runs) {
        let m = rs.len() as f64;
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for r in rs {
            *counts.entry(r.empirical.to_string()).or_default() += 1;
        }
        let majority = counts.iter().max_by_key(|(_, c)| **c).map(|(k, _)| k.clone()).unwrap_or_default();
        let agree = rs.iter().filter(|r| r.empirical == r.predicted).count() as f64 / m;
        let mut row = vec![spec.axis.to_string(), output::fmt_f64(*value), rs.len().to_string(), rs[0].predicted.to_string(), majority, output::fmt_f64(agree)];
        let d = 1usize << cfg.n_qubits;
        let l = cfg.size;
        for a in 0..n_max {
            if a >= cfg.targets.len() {
                row.extend(std::iter::repeat_n(String::new(), 6));
                continue;
            }
            let avg = |f: &dyn Fn(&RunSummary) -> f64| rs.iter().map(f).sum::<f64>() / m;
            let (o, k, mu) = (avg(&|r| r.o[a]), avg(&|r| r.k[a]), avg(&|r| r.mu[a]));
            row.push(output::fmt_f64(o));
            row.push(output::fmt_f64(avg(&|r| r.eps_infinity[a])));
            row.push(output::fmt_f64(k));
            row.push(output::fmt_f64(mu / k));
            let state_prep = cfg.observable == ObservableMode::StatePrep;
            let pred = |f: fn(usize, usize, f64, bool) -> qdyn::Result<f64>| {
                if state_prep {
                    f(l, d, o.clamp(0.0, 1.0), true).map_or(String::new(), output::fmt_f64)
                } else {
                    String::new()
                }
            };
            row.push(pred(ensemble::predicted_k_diag));
            row.push(pred(ensemble::predicted_lambda_diag));
        }
        let _ = writeln!(csv, "{}", row.join(","));
    }
    csv
}

fn cmd_sweep(a: &RunArgs) -> Result<u8> {
    let t0 = Instant::now();
    let (file, base) = load_experiment(&a.config, &a.overrides)?;
    let spec = file.sweep.clone().ok_or_else(|| ConfigError::new("[sweep]", "missing section"))?;
    let cells: Vec<ExperimentConfig> = spec.values.iter().map(|&v| cell_config(&base, spec.axis, v)).collect::<std::result::Result<_, _>>()?;
    let seeds = if spec.seeds.is_empty() { vec![None] } else { spec.seeds.iter().map(|&s| Some(s)).collect() };
    let jobs: Vec<(usize, ExperimentConfig)> = cells
        .iter()
        .enumerate()
        .flat_map(|(i, c)| {
            seeds.iter().map(move |s| {
                let mut c = c.clone();
                if let Some(s) = s {
                    c.seeds = Seeds::all(*s);
                }
                (i, c)
            })
        })
        .collect();
    let results = parallel_map(&jobs, resolve_workers(a.workers), |(i, c)| -> Result<(usize, RunSummary)> {
        let dir = run_dir(&a.out, *i, c.seeds.init);
        let trace = train_run(c)?;
        output::write_trace(&dir, &trace)?;
        let report = regime_report(&trace)?;
        output::write_json(&dir.join(output::REPORT_FILE), &report)?;
        RunManifest::new("sweep", Some(&a.config), vec![c.seeds], &dir, 0.0).write()?;
        Ok((*i, summarize(&trace, &report)))
    });
    let mut runs: Vec<Vec<RunSummary>> = vec![Vec::new(); cells.len()];
    for r in results {
        let (i, s) = r?;
        runs[i].push(s);
    }
    std::fs::write(a.out.join("sweep.csv"), sweep_csv(&spec, &cells, &runs))?;
    let all_seeds = jobs.iter().map(|(_, c)| c.seeds).collect();
    RunManifest::new("sweep", Some(&a.config), all_seeds, &a.out, t0.elapsed().as_secs_f64()).write()?;
    let inconclusive = runs.iter().flatten().any(|r| r.empirical == RegimeKind::Inconclusive);
    println!("{} cells x {} seeds -> {}", cells.len(), seeds.len(), a.out.join("sweep.csv").display());
    Ok(if inconclusive { EXIT_INCONCLUSIVE } else { EXIT_OK })
}

fn cmd_validate(a: &RunArgs) -> Result<u8> {
    let t0 = Instant::now();
    let (file, base) = load_experiment(&a.config, &a.overrides)?;
    let spec = file.validate.clone().ok_or_else(|| ConfigError::new("[validate]", "missing section"))?;
    if base.observable != ObservableMode::StatePrep {
        return Err(ConfigError::new("observable", "validate requires `state_prep`").into());
    }
    let configs: Vec<ExperimentConfig> = spec
        .seeds
        .iter()
        .map(|&s| {
            let mut c = base.clone();
            c.seeds = Seeds::all(s);
            c
        })
        .collect();
    let traces = parallel_map(&configs, resolve_workers(a.workers), |c| -> Result<TrainingTrace> {
        let dir = a.out.join(format!("seed_{}", c.seeds.init));
        let trace = train_run(c)?;
        output::write_trace(&dir, &trace)?;
        RunManifest::new("validate", Some(&a.config), vec![c.seeds], &dir, 0.0).write()?;
        Ok(trace)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let report = ensemble::validate_against_training(&traces, spec.late_fraction, spec.min_variance, spec.exact)?;
    output::write_json(&a.out.join("validation.json"), &report)?;
    RunManifest::new("validate", Some(&a.config), configs.iter().map(|c| c.seeds).collect(), &a.out, t0.elapsed().as_secs_f64()).write()?;
    for d in &report.per_datum {
        println!("datum {}: K ratio {:.3}, lambda ratio {:.3} ({} records)", d.index, d.k_ratio, d.lambda_ratio, d.records_used);
    }
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    Ok(EXIT_OK)
}
