//! Flat INI-style experiment configuration.
//!
//! Keys live either at the top of the file or under `[experiment]`; the
//! optional `[sweep]`, `[ensemble]` and `[validate]` sections configure the
//! commands of the same name. Arrays are comma-separated. Unknown keys are
//! rejected so that typos cannot silently fall back to defaults.

use std::fmt;
use std::path::Path;

use ini::Ini;
use qdyn::ansatz::AnsatzKind;
use qdyn::taskdata::ObservableMode;
use qdyn::trainer::{Cadence, ExperimentConfig, Seeds};

/// A configuration problem, naming the offending field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self { field: field.into(), message: message.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config field `{}`: {}", self.field, self.message)
    }
}

impl std::error::Error for ConfigError {}

type Result<T> = std::result::Result<T, ConfigError>;

const EXPERIMENT_KEYS: &[&str] = &[
    "n_qubits",
    "ansatz",
    "size",
    "targets",
    "observable",
    "qubit",
    "eta",
    "steps",
    "seed",
    "structure_seed",
    "data_seed",
    "init_seed",
    "record_dqntk",
    "record_params",
    "dense_until",
    "cadence_factor",
];
const SWEEP_KEYS: &[&str] = &["axis", "values", "seeds"];
const ENSEMBLE_KEYS: &[&str] = &["dim", "n_data", "order", "pairs", "seed"];
const VALIDATE_KEYS: &[&str] = &["seeds", "late_fraction", "min_variance", "exact"];

/// Parameter swept by `qdyn sweep`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Target of one datum (zero-based index; written `y1`, `y2`, … in files).
    Target(usize),
    /// Number of parameters `L` (or HEA depth).
    Size,
    /// Number of data `N`; the first `N` configured targets are used.
    NData,
    /// Seed used for structure, data and initialisation.
    Seed,
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Target(i) => write!(f, "y{}", i + 1),
            Self::Size => f.write_str("size"),
            Self::NData => f.write_str("n_data"),
            Self::Seed => f.write_str("seed"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    /// Replicate seeds per cell.
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnsembleSpec {
    pub dim: usize,
    pub n_data: usize,
    pub order: u32,
    pub pairs: usize,
    pub seed: u64,
}

impl Default for EnsembleSpec {
    fn default() -> Self {
        Self { dim: 8, n_data: 2, order: 2, pairs: 10_000, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidateSpec {
    pub seeds: Vec<u64>,
    pub late_fraction: f64,
    pub min_variance: f64,
    pub exact: bool,
}

/// Everything a config file can describe.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FileConfig {
    pub experiment: Option<ExperimentConfig>,
    pub sweep: Option<SweepSpec>,
    pub ensemble: Option<EnsembleSpec>,
    pub validate: Option<ValidateSpec>,
}

impl FileConfig {
    pub fn experiment(&self) -> Result<&ExperimentConfig> {
        self.experiment.as_ref().ok_or_else(|| ConfigError::new("targets", "no experiment configured"))
    }
}

pub fn load(path: &Path) -> Result<FileConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::new("--config", format!("{}: {e}", path.display())))?;
    parse(&text)
}

pub fn parse(text: &str) -> Result<FileConfig> {
    let ini = Ini::load_from_str(text).map_err(|e| ConfigError::new("<syntax>", e.to_string()))?;
    let mut experiment: Vec<(String, String)> = Vec::new();
    let mut out = FileConfig::default();
    for (section, props) in ini.iter() {
        let pairs: Vec<(String, String)> = props.iter().map(|(k, v)| (k.trim().to_string(), v.trim().to_string())).collect();
        match section {
            None | Some("experiment") => experiment.extend(pairs),
            Some("sweep") => out.sweep = Some(parse_sweep(&pairs)?),
            Some("ensemble") => out.ensemble = Some(parse_ensemble(&pairs)?),
            Some("validate") => out.validate = Some(parse_validate(&pairs)?),
            Some(other) => return Err(ConfigError::new(format!("[{other}]"), "unknown section")),
        }
    }
    if !experiment.is_empty() {
        out.experiment = Some(parse_experiment(&experiment)?);
    }
    Ok(out)
}

fn check_keys(pairs: &[(String, String)], allowed: &[&str], section: &str) -> Result<()> {
    for (k, _) in pairs {
        if !allowed.contains(&k.as_str()) {
            return Err(ConfigError::new(k.clone(), format!("unknown key in [{section}]")));
        }
    }
    Ok(())
}

fn get<'a>(pairs: &'a [(String, String)], key: &str) -> Option<&'a str> {
    pairs.iter().rev().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
}

fn parse_num<T: std::str::FromStr>(field: &str, v: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    v.trim().parse().map_err(|e| ConfigError::new(field, format!("cannot parse `{v}`: {e}")))
}

fn opt_num<T: std::str::FromStr>(pairs: &[(String, String)], key: &str, default: T) -> Result<T>
where
    T::Err: fmt::Display,
{
    get(pairs, key).map_or(Ok(default), |v| parse_num(key, v))
}

fn parse_bool(field: &str, v: &str) -> Result<bool> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(ConfigError::new(field, format!("expected a boolean, got `{v}`"))),
    }
}

pub fn parse_f64_list(field: &str, v: &str) -> Result<Vec<f64>> {
    let out: Vec<f64> = v.split(',').filter(|s| !s.trim().is_empty()).map(|s| parse_num(field, s)).collect::<Result<_>>()?;
    if out.is_empty() {
        return Err(ConfigError::new(field, "empty list"));
    }
    if let Some(x) = out.iter().find(|x| !x.is_finite()) {
        return Err(ConfigError::new(field, format!("non-finite value {x}")));
    }
    Ok(out)
}

/// Comma-separated seeds; `a..b` expands to the half-open range.
pub fn parse_seeds(field: &str, v: &str) -> Result<Vec<u64>> {
    let mut out = Vec::new();
    for part in v.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        if let Some((a, b)) = part.split_once("..") {
            let (a, b): (u64, u64) = (parse_num(field, a)?, parse_num(field, b)?);
            if b <= a {
                return Err(ConfigError::new(field, format!("empty range `{part}`")));
            }
            out.extend(a..b);
        } else {
            out.push(parse_num(field, part)?);
        }
    }
    if out.is_empty() {
        return Err(ConfigError::new(field, "empty list"));
    }
    Ok(out)
}

fn parse_experiment(pairs: &[(String, String)]) -> Result<ExperimentConfig> {
    check_keys(pairs, EXPERIMENT_KEYS, "experiment")?;
    let targets = parse_f64_list("targets", get(pairs, "targets").ok_or_else(|| ConfigError::new("targets", "missing"))?)?;
    let ansatz = match get(pairs, "ansatz").unwrap_or("rpa").to_ascii_lowercase().as_str() {
        "rpa" => AnsatzKind::Rpa,
        "hea" => AnsatzKind::Hea,
        other => return Err(ConfigError::new("ansatz", format!("expected `rpa` or `hea`, got `{other}`"))),
    };
    let qubit: usize = opt_num(pairs, "qubit", 0)?;
    let observable = match get(pairs, "observable").unwrap_or("pauli_z").to_ascii_lowercase().as_str() {
        "pauli_z" | "z" => ObservableMode::PauliZ { qubit },
        "state_prep" | "projector" => ObservableMode::StatePrep,
        other => return Err(ConfigError::new("observable", format!("expected `pauli_z` or `state_prep`, got `{other}`"))),
    };
    let seed: u64 = opt_num(pairs, "seed", 0)?;
    let seeds = Seeds {
        structure: opt_num(pairs, "structure_seed", seed)?,
        data: opt_num(pairs, "data_seed", seed)?,
        init: opt_num(pairs, "init_seed", seed)?,
    };
    let default_cadence = Cadence::default();
    let cadence = Cadence {
        dense_until: opt_num(pairs, "dense_until", default_cadence.dense_until)?,
        factor: opt_num(pairs, "cadence_factor", default_cadence.factor)?,
    };
    if !(cadence.factor > 1.0) {
        return Err(ConfigError::new("cadence_factor", "must exceed 1"));
    }
    let cfg = ExperimentConfig {
        n_qubits: opt_num(pairs, "n_qubits", 4)?,
        ansatz,
        size: opt_num(pairs, "size", 48)?,
        targets,
        observable,
        eta: opt_num(pairs, "eta", 1e-3)?,
        steps: opt_num(pairs, "steps", 100_000)?,
        cadence,
        seeds,
        record_dqntk: get(pairs, "record_dqntk").map_or(Ok(true), |v| parse_bool("record_dqntk", v))?,
        record_params: get(pairs, "record_params").map_or(Ok(false), |v| parse_bool("record_params", v))?,
    };
    check_experiment(&cfg)?;
    Ok(cfg)
}

/// Maps library validation failures onto the config field responsible.
pub fn check_experiment(cfg: &ExperimentConfig) -> Result<()> {
    let blame = |e: qdyn::Error, fallback: &str| {
        let msg = e.to_string();
        let field = ["eta", "targets", "n_qubits", "size", "qubit", "cadence"].into_iter().find(|f| msg.contains(f)).unwrap_or(fallback);
        ConfigError::new(field, msg)
    };
    cfg.validate().map_err(|e| blame(e, "experiment"))?;
    cfg.build_dataset().map_err(|e| blame(e, "targets"))?;
    Ok(())
}

fn parse_sweep(pairs: &[(String, String)]) -> Result<SweepSpec> {
    check_keys(pairs, SWEEP_KEYS, "sweep")?;
    let axis_text = get(pairs, "axis").ok_or_else(|| ConfigError::new("axis", "missing"))?.to_ascii_lowercase();
    let axis = match axis_text.as_str() {
        "size" | "l" => SweepAxis::Size,
        "n_data" | "n" => SweepAxis::NData,
        "seed" => SweepAxis::Seed,
        t if t.starts_with('y') => {
            let i: usize = parse_num("axis", &t[1..])?;
            if i == 0 {
                return Err(ConfigError::new("axis", "target indices start at y1"));
            }
            SweepAxis::Target(i - 1)
        }
        other => return Err(ConfigError::new("axis", format!("unknown axis `{other}` (use y<k>, size, n_data or seed)"))),
    };
    let values = parse_f64_list("values", get(pairs, "values").ok_or_else(|| ConfigError::new("values", "missing"))?)?;
    if matches!(axis, SweepAxis::Size | SweepAxis::NData | SweepAxis::Seed) && values.iter().any(|v| v.fract() != 0.0 || *v < 0.0) {
        return Err(ConfigError::new("values", format!("axis `{axis}` takes nonnegative integers")));
    }
    let seeds = get(pairs, "seeds").map_or(Ok(Vec::new()), |v| parse_seeds("seeds", v))?;
    Ok(SweepSpec { axis, values, seeds })
}

fn parse_ensemble(pairs: &[(String, String)]) -> Result<EnsembleSpec> {
    check_keys(pairs, ENSEMBLE_KEYS, "ensemble")?;
    let d = EnsembleSpec::default();
    Ok(EnsembleSpec {
        dim: opt_num(pairs, "dim", d.dim)?,
        n_data: opt_num(pairs, "n_data", d.n_data)?,
        order: opt_num(pairs, "order", d.order)?,
        pairs: opt_num(pairs, "pairs", d.pairs)?,
        seed: opt_num(pairs, "seed", d.seed)?,
    })
}

fn parse_validate(pairs: &[(String, String)]) -> Result<ValidateSpec> {
    check_keys(pairs, VALIDATE_KEYS, "validate")?;
    let late_fraction: f64 = opt_num(pairs, "late_fraction", 0.2)?;
    if !(late_fraction > 0.0 && late_fraction <= 1.0) {
        return Err(ConfigError::new("late_fraction", "must lie in (0, 1]"));
    }
    Ok(ValidateSpec {
        seeds: get(pairs, "seeds").map_or(Ok((0..10).collect()), |v| parse_seeds("seeds", v))?,
        late_fraction,
        min_variance: opt_num(pairs, "min_variance", 1e-10)?,
        exact: get(pairs, "exact").map_or(Ok(true), |v| parse_bool("exact", v))?,
    })
}
