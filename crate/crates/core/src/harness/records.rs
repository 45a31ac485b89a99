//! Per-sample records, the results table and the fingerprint store.

use std::io::{BufRead, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::separation::{Fingerprint, Source};
use crate::{Error, Result};

/// One feature sample with enough bookkeeping to reproduce it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub device: String,
    pub trial: u64,
    pub frame: u64,
    pub ebn0_db: f64,
    pub p: usize,
    pub source: Source,
    pub feature: (f64, f64),
    pub b_hat: Vec<Complex64>,
    /// Noise seed of the accepted attempt.
    pub seed: u64,
    /// Attempts discarded before this one (spectral nulls and degeneracies).
    pub skipped: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub ebn0_db: f64,
    /// Payload symbol count; 0 for the pilot baseline.
    pub p: usize,
    pub source: Source,
    pub acc_mean: f64,
    pub acc_std: f64,
    pub n_trials: usize,
    pub skips: u64,
}

pub const CSV_HEADER: [&str; 7] = ["ebn0_db", "p", "source", "acc_mean", "acc_std", "n_trials", "skips"];

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ResultsTable {
    pub rows: Vec<ResultRow>,
}

impl ResultsTable {
    pub fn find(&self, ebn0_db: f64, p: usize, source: Source) -> Option<&ResultRow> {
        self.rows
            .iter()
            .find(|r| r.ebn0_db == ebn0_db && r.p == p && r.source == source)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let csv_err = |e: csv::Error| Error::Output(format!("csv: {e}"));
        w.write_record(CSV_HEADER).map_err(csv_err)?;
        for r in &self.rows {
            w.write_record([
                format!("{}", r.ebn0_db),
                r.p.to_string(),
                r.source.to_string(),
                format!("{:.6}", r.acc_mean),
                format!("{:.6}", r.acc_std),
                r.n_trials.to_string(),
                r.skips.to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }
}

/// One line of the fingerprint store.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FingerprintRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub device_label: Option<String>,
    pub source: Source,
    pub ebn0_db: Option<f64>,
    pub b_hat: Vec<[f64; 2]>,
    pub seed: Option<u64>,
}

impl FingerprintRecord {
    pub fn new(fp: &Fingerprint, device_label: Option<String>, ebn0_db: Option<f64>, seed: Option<u64>) -> Self {
        FingerprintRecord {
            device_label,
            source: fp.source,
            ebn0_db,
            b_hat: fp.b_hat.iter().map(|v| [v.re, v.im]).collect(),
            seed,
        }
    }

    pub fn from_trial(r: &TrialRecord) -> Self {
        FingerprintRecord {
            device_label: Some(r.device.clone()),
            source: r.source,
            ebn0_db: Some(r.ebn0_db),
            b_hat: r.b_hat.iter().map(|v| [v.re, v.im]).collect(),
            seed: Some(r.seed),
        }
    }

    pub fn b3(&self) -> Option<(f64, f64)> {
        self.b_hat.get(1).map(|v| (v[0], v[1]))
    }
}

pub fn write_fingerprints<W: Write>(mut out: W, records: &[FingerprintRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Reads JSON lines, skipping blank lines.
pub fn read_fingerprints<R: BufRead>(input: R) -> Result<Vec<FingerprintRecord>> {
    let mut out = Vec::new();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

/// Sample mean and (n - 1) standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
