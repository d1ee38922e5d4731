//! Deterministic CSV and manifest output.
//!
//! Numbers are written with nine significant digits; rows are emitted in a
//! fixed order, so re-running an experiment with the same config and seed
//! reproduces every byte of every CSV regardless of thread count.

use crate::error::{Error, Result};
use serde::Serialize;
use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

/// Format with 9 significant digits, plain decimal where reasonable
/// (C's `%.9g`).
pub fn fmt_g9(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".to_string()
        } else if x > 0.0 {
            "inf".to_string()
        } else {
            "-inf".to_string()
        };
    }
    let exp = x.abs().log10().floor() as i32;
    let mut s = if (-4..9).contains(&exp) {
        let prec = (8 - exp).max(0) as usize;
        let t = format!("{x:.prec$}");
        t
    } else {
        format!("{x:.8e}")
    };
    // trim trailing zeros of the fractional part (and a bare point)
    if s.contains('.') && !s.contains('e') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    } else if let Some(epos) = s.find('e') {
        let (mant, exp_part) = s.split_at(epos);
        let mut m = mant.to_string();
        if m.contains('.') {
            while m.ends_with('0') {
                m.pop();
            }
            if m.ends_with('.') {
                m.pop();
            }
        }
        s = format!("{m}{exp_part}");
    }
    s
}

/// Write one CSV file with a header row; returns the path.
pub fn write_csv(
    dir: &Path,
    name: &str,
    header: &[&str],
    rows: &[Vec<String>],
) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let path = dir.join(name);
    let mut body = String::new();
    body.push_str(&header.join(","));
    body.push('\n');
    for row in rows {
        debug_assert_eq!(row.len(), header.len(), "row width mismatch in {name}");
        body.push_str(&row.join(","));
        body.push('\n');
    }
    std::fs::write(&path, body).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(path)
}

/// Number of histogram bins emitted by the experiment runners.
pub const HISTOGRAM_BINS: usize = 80;

/// Equal-width histogram rows `(bin_left, bin_right, count)`.
pub fn histogram_rows(values: &[f64], bins: usize) -> Vec<Vec<String>> {
    assert!(!values.is_empty() && bins > 0);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if hi <= lo {
        hi = lo + 1e-12;
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0u64; bins];
    for &v in values {
        let k = (((v - lo) / width) as usize).min(bins - 1);
        counts[k] += 1;
    }
    counts
        .iter()
        .enumerate()
        .map(|(k, &c)| {
            vec![
                fmt_g9(lo + k as f64 * width),
                fmt_g9(lo + (k + 1) as f64 * width),
                c.to_string(),
            ]
        })
        .collect()
}

/// Run manifest: config echo, library version and wall time. The wall-time
/// field is the only part of an experiment's output that varies between
/// identical runs.
#[derive(Serialize)]
pub struct Manifest {
    pub experiment: String,
    pub seed: u64,
    pub threads: usize,
    pub version: String,
    pub wall_time_secs: f64,
    pub config: BTreeMap<String, String>,
    pub outputs: Vec<String>,
}

pub fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let path = dir.join("manifest.json");
    let mut file = std::fs::File::create(&path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    let body = serde_json::to_string_pretty(manifest)
        .map_err(|e| Error::Config(format!("manifest serialisation: {e}")))?;
    file.write_all(body.as_bytes()).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(path)
}

/// Files produced by one experiment run.
#[derive(Debug)]
pub struct RunOutput {
    pub files: Vec<PathBuf>,
    pub manifest: PathBuf,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g9_formatting() {
        assert_eq!(fmt_g9(0.0), "0");
        assert_eq!(fmt_g9(1.0), "1");
        assert_eq!(fmt_g9(-2.5), "-2.5");
        assert_eq!(fmt_g9(0.125), "0.125");
        assert_eq!(fmt_g9(1.0 / 3.0), "0.333333333");
        assert_eq!(fmt_g9(123456789.0), "123456789");
        assert_eq!(fmt_g9(1234567890.0), "1.23456789e9");
        assert_eq!(fmt_g9(1e-5), "1e-5");
        assert_eq!(fmt_g9(0.0001), "0.0001");
        assert_eq!(fmt_g9(28.399999999), "28.4");
    }

    #[test]
    fn histogram_covers_all_values() {
        let vals: Vec<f64> = (0..1000).map(|i| (i as f64 * 0.377).sin()).collect();
        let rows = histogram_rows(&vals, 80);
        assert_eq!(rows.len(), 80);
        let total: u64 = rows.iter().map(|r| r[2].parse::<u64>().unwrap()).sum();
        assert_eq!(total, 1000);
    }
}
