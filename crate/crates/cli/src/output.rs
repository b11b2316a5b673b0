//! On-disk artifacts: trace CSV, kernel JSONL, JSON reports and run manifests.

use std::fmt::Write as _;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use qdyn::kernels::Tensor3;
use qdyn::trainer::{ExperimentConfig, Seeds, TrainingTrace};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const TRACE_FILE: &str = "trace.csv";
pub const KERNELS_FILE: &str = "kernels.jsonl";
pub const CONFIG_FILE: &str = "config.json";
pub const REPORT_FILE: &str = "report.json";

/// Full-precision scientific notation; non-finite values become empty cells.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        String::new()
    }
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

/// Header of `trace.csv` for `n` data.
pub fn trace_header(n: usize) -> Vec<String> {
    let mut h = vec!["step".to_string(), "loss".to_string()];
    h.extend((0..n).map(|a| format!("eps_{a}")));
    h.extend((0..n).map(|a| format!("residual_{a}")));
    for a in 0..n {
        for b in a..n {
            h.push(format!("K_{a}_{b}"));
        }
    }
    h.push("lambda_norm1".into());
    for a in 0..n {
        for b in a + 1..n {
            h.push(format!("angle_{a}_{b}"));
        }
    }
    h
}

pub fn trace_csv(trace: &TrainingTrace) -> String {
    let n = trace.n_data();
    let mut out = trace_header(n).join(",");
    out.push('\n');
    for ((r, res), lam) in trace.records.iter().zip(&trace.residuals).zip(&trace.lambda_smoothed) {
        let mut row = vec![r.step.to_string(), fmt_f64(r.loss)];
        row.extend(r.errors.iter().map(|&e| fmt_f64(e)));
        row.extend(res.iter().map(|&e| fmt_f64(e)));
        for a in 0..n {
            for b in a..n {
                row.push(fmt_f64(r.k[(a, b)]));
            }
        }
        row.push(lam.as_ref().map_or(String::new(), |l| fmt_f64(l.norm1())));
        for a in 0..n {
            for b in a + 1..n {
                row.push(fmt_f64(r.angles[(a, b)]));
            }
        }
        let _ = writeln!(out, "{}", row.join(","));
    }
    out
}

/// Column-oriented view of a `trace.csv` file.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl TraceTable {
    pub fn read(path: &Path) -> io::Result<Self> {
        let file = std::fs::File::open(path)?;
        let mut lines = io::BufReader::new(file).lines();
        let header: Vec<String> = lines
            .next()
            .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidData, "empty trace.csv"))??
            .split(',')
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for line in lines {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let row: Vec<f64> = line
                .split(',')
                .map(|c| if c.is_empty() { Ok(f64::NAN) } else { c.parse::<f64>() })
                .collect::<Result<_, _>>()
                .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
            if row.len() != header.len() {
                return Err(io::Error::new(io::ErrorKind::InvalidData, "ragged trace.csv row"));
            }
            rows.push(row);
        }
        Ok(Self { header, rows })
    }

    /// `(step, value)` pairs of a named column.
    pub fn series(&self, column: &str) -> Option<Vec<(f64, f64)>> {
        let c = self.header.iter().position(|h| h == column)?;
        Some(self.rows.iter().map(|r| (r[0], r[c])).collect())
    }

    pub fn n_data(&self) -> usize {
        self.header.iter().filter(|h| h.starts_with("eps_")).count()
    }
}

/// One line of `kernels.jsonl`. Tensors are flattened in `[γ][α][β]` order
/// and matrices stored row-major; undefined entries are `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelLine {
    pub step: usize,
    pub loss: f64,
    pub errors: Vec<f64>,
    pub k: Vec<Vec<f64>>,
    pub angles: Vec<Vec<Option<f64>>>,
    pub mu: Option<Vec<Option<f64>>>,
    pub lambda: Option<Vec<Option<f64>>>,
    pub lambda_smoothed: Option<Vec<Option<f64>>>,
}

fn flat(t: &Tensor3) -> Vec<Option<f64>> {
    t.as_slice().iter().map(|&v| finite(v)).collect()
}

impl KernelLine {
    /// Smoothed λ if present, else the instantaneous one.
    pub fn best_lambda(&self) -> Option<Tensor3> {
        let v = self.lambda_smoothed.as_ref().or(self.lambda.as_ref())?;
        let n = self.errors.len();
        if v.len() != n * n * n {
            return None;
        }
        Some(Tensor3::from_fn(n, |g, a, b| v[(g * n + a) * n + b].unwrap_or(f64::NAN)))
    }

    pub fn k_diag(&self) -> Vec<f64> {
        (0..self.k.len()).map(|a| self.k[a][a]).collect()
    }
}

pub fn kernel_lines(trace: &TrainingTrace) -> Vec<KernelLine> {
    let n = trace.n_data();
    trace
        .records
        .iter()
        .zip(&trace.lambda_smoothed)
        .map(|(r, lam)| KernelLine {
            step: r.step,
            loss: r.loss,
            errors: r.errors.clone(),
            k: (0..n).map(|a| (0..n).map(|b| r.k[(a, b)]).collect()).collect(),
            angles: (0..n).map(|a| (0..n).map(|b| finite(r.angles[(a, b)])).collect()).collect(),
            mu: r.snapshot.as_ref().map(|s| flat(&s.mu)),
            lambda: r.snapshot.as_ref().map(|s| flat(&s.lambda)),
            lambda_smoothed: lam.as_ref().map(flat),
        })
        .collect()
}

pub fn read_kernel_lines(path: &Path) -> io::Result<Vec<KernelLine>> {
    let file = std::fs::File::open(path)?;
    io::BufReader::new(file)
        .lines()
        .filter(|l| !matches!(l, Ok(s) if s.trim().is_empty()))
        .map(|l| serde_json::from_str(&l?).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e)))
        .collect()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> io::Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
    text.push('\n');
    std::fs::write(path, text)
}

/// Writes `config.json`, `trace.csv` and `kernels.jsonl` into `dir`.
pub fn write_trace(dir: &Path, trace: &TrainingTrace) -> io::Result<()> {
    std::fs::create_dir_all(dir)?;
    write_json(&dir.join(CONFIG_FILE), &trace.config)?;
    std::fs::write(dir.join(TRACE_FILE), trace_csv(trace))?;
    let mut f = io::BufWriter::new(std::fs::File::create(dir.join(KERNELS_FILE))?);
    for line in kernel_lines(trace) {
        serde_json::to_writer(&mut f, &line).map_err(io::Error::other)?;
        f.write_all(b"\n")?;
    }
    f.flush()
}

pub fn read_config(dir: &Path) -> io::Result<ExperimentConfig> {
    let text = std::fs::read_to_string(dir.join(CONFIG_FILE))?;
    serde_json::from_str(&text).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
}

/// Provenance record written once per output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_path: Option<PathBuf>,
    pub seeds: Vec<Seeds>,
    pub output_dir: PathBuf,
    pub version: String,
    pub wall_clock_seconds: f64,
    pub timestamp_unix: u64,
    /// `sha256("blob <len>\0" ‖ config bytes)`, hex encoded.
    pub config_hash: Option<String>,
}

/// Git-style content hash (blob header, SHA-256).
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

impl RunManifest {
    pub fn new(command: &str, config_path: Option<&Path>, seeds: Vec<Seeds>, output_dir: &Path, wall_clock_seconds: f64) -> Self {
        let config_hash = config_path.and_then(|p| std::fs::read(p).ok()).map(|b| content_hash(&b));
        Self {
            command: command.to_string(),
            config_path: config_path.map(Path::to_path_buf),
            seeds,
            output_dir: output_dir.to_path_buf(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            wall_clock_seconds,
            timestamp_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            config_hash,
        }
    }

    pub fn write(&self) -> io::Result<()> {
        std::fs::create_dir_all(&self.output_dir)?;
        write_json(&self.output_dir.join(MANIFEST_FILE), self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_format() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_f64(f64::NAN), "");
        assert_eq!("1.0000000000000001e-1".parse::<f64>().unwrap(), 0.1);
    }

    #[test]
    fn header_layout() {
        assert_eq!(
            trace_header(2),
            ["step", "loss", "eps_0", "eps_1", "residual_0", "residual_1", "K_0_0", "K_0_1", "K_1_1", "lambda_norm1", "angle_0_1"]
        );
    }

    #[test]
    fn hash_matches_git_blob_layout() {
        assert_eq!(content_hash(b""), content_hash(b""));
        assert_ne!(content_hash(b"a"), content_hash(b"b"));
        assert_eq!(content_hash(b"").len(), 64);
    }
}
