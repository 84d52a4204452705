//! CSV serialization of utility curves, sweeps and learning curves.
//!
//! Every file starts with `#`-prefixed `key=value` manifest lines, followed
//! by an RFC 4180 body. Sweep files end with `#` footer lines carrying the
//! correlation. Floats use Rust's shortest round-trip formatting, so a
//! file parses back to the exact values it was written from.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::dsp::{ActivationKind, UtilityCurve, UtilityRow};
use crate::experiment::{CurveReport, CurveSeries, SweepReport, SweepRow, PUBLISHED_P_BELOW, PUBLISHED_RHO};
use crate::stats::PValueMethod;

pub const UTILITY_HEADER: &str = "beta,g_eq2,g_eq3,mean_power,degenerate";
pub const SWEEP_HEADER: &str = "beta,test_error,g_eq3,failed";
pub const CURVE_HEADER: &str = "epoch,beta,test_error";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("expected header {expected:?}, found {found:?}")]
    Header { expected: &'static str, found: String },
    #[error("line {line}: {message}")]
    Row { line: u64, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Resolved configuration and provenance embedded at the top of each CSV.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunManifest {
    pub entries: Vec<(String, String)>,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        let mut m = Self::default();
        m.push("tool", env!("CARGO_PKG_NAME"));
        m.push("version", env!("CARGO_PKG_VERSION"));
        m.push("command", command);
        m
    }

    pub fn push(&mut self, key: &str, value: impl ToString) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    fn write_to(&self, out: &mut String) {
        for (k, v) in &self.entries {
            // Values never span lines.
            let v = v.replace(['\n', '\r'], " ");
            let _ = writeln!(out, "# {k}={v}");
        }
    }
}

/// Comment lines of a CSV file, split at the first `=`.
fn parse_comments(text: &str) -> Vec<(String, String)> {
    text.lines()
        .filter_map(|l| l.strip_prefix('#'))
        .filter_map(|l| {
            let l = l.trim_start();
            l.split_once('=').map(|(k, v)| (k.to_string(), v.to_string()))
        })
        .collect()
}

fn body_reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .has_headers(true)
        .from_reader(text.as_bytes())
}

fn check_header(reader: &mut csv::Reader<&[u8]>, expected: &'static str) -> Result<(), ReportError> {
    let found = reader.headers()?.iter().collect::<Vec<_>>().join(",");
    if found != expected {
        return Err(ReportError::Header { expected, found });
    }
    Ok(())
}

fn field<T: std::str::FromStr>(record: &csv::StringRecord, i: usize, name: &str) -> Result<T, ReportError> {
    let line = record.position().map_or(0, |p| p.line());
    let raw = record.get(i).ok_or_else(|| ReportError::Row {
        line,
        message: format!("missing column {name}"),
    })?;
    raw.trim().parse().map_err(|_| ReportError::Row {
        line,
        message: format!("bad {name} value {raw:?}"),
    })
}

fn flag(b: bool) -> u8 {
    b as u8
}

fn parse_flag(record: &csv::StringRecord, i: usize, name: &str) -> Result<bool, ReportError> {
    match field::<u8>(record, i, name)? {
        0 => Ok(false),
        1 => Ok(true),
        v => Err(ReportError::Row {
            line: record.position().map_or(0, |p| p.line()),
            message: format!("{name} must be 0 or 1, got {v}"),
        }),
    }
}

pub fn write_utility_csv(curve: &UtilityCurve, manifest: &RunManifest) -> String {
    let mut out = String::new();
    manifest.write_to(&mut out);
    out.push_str(UTILITY_HEADER);
    out.push('\n');
    for r in &curve.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.beta,
            r.g_eq2,
            r.g_eq3,
            r.mean_power,
            flag(r.degenerate)
        );
    }
    out
}

pub fn parse_utility_csv(text: &str) -> Result<(RunManifest, UtilityCurve), ReportError> {
    let manifest = RunManifest {
        entries: parse_comments(text),
    };
    let mut reader = body_reader(text);
    check_header(&mut reader, UTILITY_HEADER)?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        rows.push(UtilityRow {
            beta: field(&record, 0, "beta")?,
            g_eq2: field(&record, 1, "g_eq2")?,
            g_eq3: field(&record, 2, "g_eq3")?,
            mean_power: field(&record, 3, "mean_power")?,
            degenerate: parse_flag(&record, 4, "degenerate")?,
        });
    }
    let activation = manifest
        .get("activation")
        .and_then(|a| a.parse().ok())
        .unwrap_or(ActivationKind::BiasedSigmoid);
    Ok((manifest, UtilityCurve { activation, rows }))
}

fn method_name(m: PValueMethod) -> &'static str {
    match m {
        PValueMethod::Exact => "exact_permutation",
        PValueMethod::TApprox => "t_approximation",
    }
}

/// Manifest value used when runs in one sweep started from different parameters.
pub const DIGESTS_DIFFER: &str = "differs";

pub fn write_sweep_csv(report: &SweepReport, manifest: &RunManifest) -> String {
    let mut out = String::new();
    manifest.write_to(&mut out);
    if let Some(first) = report.rows.first() {
        let digest = if report.init_digests_agree() {
            first.init_digest.as_str()
        } else {
            DIGESTS_DIFFER
        };
        let _ = writeln!(out, "# initial_params_sha256={digest}");
    }
    out.push_str(SWEEP_HEADER);
    out.push('\n');
    for r in &report.rows {
        let _ = writeln!(out, "{},{},{},{}", r.beta, r.test_error, r.g_eq3, flag(r.failed));
    }
    match &report.correlation {
        Ok(s) => {
            let _ = writeln!(out, "# spearman_rho={}", s.rho);
            let _ = writeln!(out, "# p_value={}", s.p_value);
            let _ = writeln!(out, "# p_method={}", method_name(s.method));
            let _ = writeln!(out, "# n={}", s.n);
        }
        Err(e) => {
            let _ = writeln!(out, "# spearman_rho=undefined");
            let _ = writeln!(out, "# p_value=undefined");
            let _ = writeln!(out, "# correlation_note={e}");
        }
    }
    let _ = writeln!(out, "# excluded={}", report.excluded);
    if let Some(best) = report.min_error_row() {
        let _ = writeln!(out, "# min_error_beta={}", best.beta);
    }
    let _ = writeln!(out, "# published_rho={PUBLISHED_RHO}");
    let _ = writeln!(out, "# published_p_below={PUBLISHED_P_BELOW}");
    out
}

/// Parses a sweep CSV. Columns absent from the file come back as NaN
/// (`g_eq2`) or from the manifest (`init_digest`); the correlation is
/// recomputed from the rows.
pub fn parse_sweep_csv(text: &str) -> Result<(RunManifest, SweepReport), ReportError> {
    let manifest = RunManifest {
        entries: parse_comments(text),
    };
    let digest = manifest.get("initial_params_sha256").unwrap_or_default().to_string();
    let mut reader = body_reader(text);
    check_header(&mut reader, SWEEP_HEADER)?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        rows.push(SweepRow {
            beta: field(&record, 0, "beta")?,
            test_error: field(&record, 1, "test_error")?,
            g_eq2: f64::NAN,
            g_eq3: field(&record, 2, "g_eq3")?,
            failed: parse_flag(&record, 3, "failed")?,
            init_digest: digest.clone(),
        });
    }
    let (correlation, excluded) = SweepReport::correlate_rows(&rows);
    let seed = manifest.get("seed").and_then(|s| s.parse().ok()).unwrap_or_default();
    let epochs_per_run = manifest.get("epochs").and_then(|s| s.parse().ok()).unwrap_or(1);
    Ok((
        manifest,
        SweepReport {
            rows,
            seed,
            epochs_per_run,
            correlation,
            excluded,
        },
    ))
}

/// Footer correlation of a sweep CSV, `None` when marked undefined.
pub fn sweep_footer(manifest: &RunManifest) -> Option<(f64, f64)> {
    let rho = manifest.get("spearman_rho")?.parse().ok()?;
    let p = manifest.get("p_value")?.parse().ok()?;
    Some((rho, p))
}

pub fn write_curve_csv(report: &CurveReport, manifest: &RunManifest) -> String {
    let mut out = String::new();
    manifest.write_to(&mut out);
    out.push_str(CURVE_HEADER);
    out.push('\n');
    for s in &report.series {
        for (e, err) in s.errors.iter().enumerate() {
            let _ = writeln!(out, "{},{},{}", e + 1, s.beta, err);
        }
    }
    for s in &report.series {
        if let Some(f) = &s.failure {
            let _ = writeln!(out, "# failed_beta_{}={f}", s.beta);
        }
    }
    out
}

/// Parses a long-format curve CSV; series appear in first-seen beta order.
pub fn parse_curve_csv(text: &str) -> Result<(RunManifest, CurveReport), ReportError> {
    let manifest = RunManifest {
        entries: parse_comments(text),
    };
    let mut reader = body_reader(text);
    check_header(&mut reader, CURVE_HEADER)?;
    let mut series: Vec<CurveSeries> = Vec::new();
    for record in reader.records() {
        let record = record?;
        let epoch: u64 = field(&record, 0, "epoch")?;
        let beta: f64 = field(&record, 1, "beta")?;
        let error: f64 = field(&record, 2, "test_error")?;
        let idx = match series.iter().position(|s| s.beta == beta) {
            Some(i) => i,
            None => {
                series.push(CurveSeries {
                    beta,
                    errors: Vec::new(),
                    failure: None,
                });
                series.len() - 1
            }
        };
        let s = &mut series[idx];
        if epoch != s.errors.len() as u64 + 1 {
            return Err(ReportError::Row {
                line: record.position().map_or(0, |p| p.line()),
                message: format!("epoch {epoch} out of sequence for beta {beta}"),
            });
        }
        s.errors.push(error);
    }
    for s in &mut series {
        s.failure = manifest.get(&format!("failed_beta_{}", s.beta)).map(str::to_string);
    }
    let seed = manifest.get("seed").and_then(|s| s.parse().ok()).unwrap_or_default();
    let epochs = manifest
        .get("epochs")
        .and_then(|s| s.parse().ok())
        .unwrap_or_else(|| series.iter().map(|s| s.errors.len() as u64).max().unwrap_or(0));
    Ok((manifest, CurveReport { seed, epochs, series }))
}

/// Writes `contents` to a sibling temporary file, then renames it over
/// `path`.
pub fn write_atomic(path: &Path, contents: &[u8]) -> io::Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "output path has no file name"))?;
    let tmp = dir.join(format!(".{}.tmp-{}", name.to_string_lossy(), std::process::id()));
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::Spearman;

    fn sweep() -> SweepReport {
        let rows: Vec<SweepRow> = [
            (-1.0, 0.5, 1.0),
            (0.0, 0.25, 2.5),
            (0.5, 0.125, 3.0),
            (2.0, f64::NAN, 4.0),
        ]
        .iter()
        .enumerate()
        .map(|(i, &(beta, test_error, g_eq3))| SweepRow {
            beta,
            test_error,
            g_eq2: f64::NAN,
            g_eq3,
            failed: i == 3,
            init_digest: "ab".into(),
        })
        .collect();
        let (correlation, excluded) = SweepReport::correlate_rows(&rows);
        SweepReport {
            rows,
            seed: 42,
            epochs_per_run: 1,
            correlation,
            excluded,
        }
    }

    #[test]
    fn sweep_layout() {
        let mut m = RunManifest::new("sweep");
        m.push("seed", 42);
        let text = write_sweep_csv(&sweep(), &m);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# tool=demodnet");
        assert!(lines.contains(&SWEEP_HEADER));
        assert!(lines.contains(&"2,NaN,4,1"));
        assert!(lines.contains(&"# spearman_rho=-1"));
        assert!(lines.contains(&"# excluded=1"));
        assert!(lines.contains(&"# initial_params_sha256=ab"));
    }

    #[test]
    fn sweep_round_trip() {
        let report = sweep();
        let mut m = RunManifest::new("sweep");
        m.push("seed", 42);
        m.push("epochs", 1);
        let (manifest, back) = parse_sweep_csv(&write_sweep_csv(&report, &m)).unwrap();
        assert_eq!(manifest.get("command"), Some("sweep"));
        assert_eq!(back.seed, 42);
        assert_eq!(back.correlation, report.correlation);
        assert_eq!(back.excluded, 1);
        for (a, b) in back.rows.iter().zip(&report.rows) {
            assert_eq!(a.beta, b.beta);
            assert_eq!(a.test_error.to_bits(), b.test_error.to_bits());
            assert_eq!(a.g_eq3, b.g_eq3);
            assert_eq!(a.failed, b.failed);
            assert_eq!(a.init_digest, b.init_digest);
        }
        let footer = sweep_footer(&manifest).unwrap();
        let s: &Spearman = report.correlation.as_ref().unwrap();
        assert_eq!(footer, (s.rho, s.p_value));
    }

    #[test]
    fn undefined_correlation_is_marked() {
        let mut report = sweep();
        report.rows.truncate(1);
        let (c, e) = SweepReport::correlate_rows(&report.rows);
        report.correlation = c;
        report.excluded = e;
        let text = write_sweep_csv(&report, &RunManifest::new("sweep"));
        assert!(text.contains("# spearman_rho=undefined"));
        let (m, _) = parse_sweep_csv(&text).unwrap();
        assert_eq!(sweep_footer(&m), None);
    }

    #[test]
    fn utility_round_trip() {
        let curve = UtilityCurve {
            activation: ActivationKind::Tanh,
            rows: vec![
                UtilityRow {
                    beta: -0.5,
                    g_eq2: 13.237_512_3,
                    g_eq3: 13.2,
                    mean_power: 7.855e-7,
                    degenerate: false,
                },
                UtilityRow {
                    beta: 0.0,
                    g_eq2: f64::NAN,
                    g_eq3: f64::NAN,
                    mean_power: 0.0,
                    degenerate: true,
                },
            ],
        };
        let mut m = RunManifest::new("analyze");
        m.push("activation", "tanh");
        let text = write_utility_csv(&curve, &m);
        assert!(text.contains("\nbeta,g_eq2,g_eq3,mean_power,degenerate\n-0.5,13.2375123,13.2,0.0000007855,0\n"));
        let (_, back) = parse_utility_csv(&text).unwrap();
        assert_eq!(back.activation, ActivationKind::Tanh);
        assert_eq!(back.rows[0], curve.rows[0]);
        assert!(back.rows[1].degenerate && back.rows[1].g_eq2.is_nan());
    }

    #[test]
    fn curve_round_trip() {
        let report = CurveReport {
            seed: 7,
            epochs: 2,
            series: vec![
                CurveSeries {
                    beta: 0.0,
                    errors: vec![0.5, 0.25],
                    failure: None,
                },
                CurveSeries {
                    beta: 6.0,
                    errors: vec![0.4],
                    failure: Some("numeric failure".into()),
                },
            ],
        };
        let mut m = RunManifest::new("curve");
        m.push("seed", 7);
        m.push("epochs", 2);
        let text = write_curve_csv(&report, &m);
        assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 4);
        let (_, back) = parse_curve_csv(&text).unwrap();
        assert_eq!(back, report);
    }

    #[test]
    fn rejects_wrong_header_and_bad_rows() {
        assert!(matches!(parse_sweep_csv("a,b\n1,2\n"), Err(ReportError::Header { .. })));
        let bad = format!("{SWEEP_HEADER}\n1,x,2,0\n");
        assert!(matches!(parse_sweep_csv(&bad), Err(ReportError::Row { .. })));
        let bad_flag = format!("{SWEEP_HEADER}\n1,0.5,2,7\n");
        assert!(matches!(parse_sweep_csv(&bad_flag), Err(ReportError::Row { .. })));
        let gap = format!("{CURVE_HEADER}\n2,0,0.5\n");
        assert!(matches!(parse_curve_csv(&gap), Err(ReportError::Row { .. })));
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(fs::read(&path).unwrap(), b"two");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
