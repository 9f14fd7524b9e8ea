//! Diagnostic records and their CSV forms.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// A record type with a fixed CSV header.
pub trait CsvRecord {
    const HEADER: &'static str;
    fn csv_row(&self) -> String;
}

pub fn to_csv<R: CsvRecord>(records: &[R]) -> String {
    let mut out = format!("{}\n", R::HEADER);
    for r in records {
        let _ = writeln!(out, "{}", r.csv_row());
    }
    out
}

pub fn write_csv<R: CsvRecord>(path: &Path, records: &[R]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, to_csv(records))?;
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InterpPoint {
    pub alpha: f64,
    pub loss: f64,
}

impl CsvRecord for InterpPoint {
    const HEADER: &'static str = "alpha,loss";
    fn csv_row(&self) -> String {
        format!("{},{}", self.alpha, self.loss)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SharpnessRecord {
    pub step: u64,
    pub lambda_max: f64,
    pub iters: usize,
    pub converged: bool,
}

impl CsvRecord for SharpnessRecord {
    const HEADER: &'static str = "step,lambda_max,iters,converged";
    fn csv_row(&self) -> String {
        format!("{},{},{},{}", self.step, self.lambda_max, self.iters, self.converged)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectrumRecord {
    /// 1-based component index.
    pub component: usize,
    pub eigenvalue: f64,
    pub rho: f64,
}

impl CsvRecord for SpectrumRecord {
    const HEADER: &'static str = "component,eigenvalue,rho";
    fn csv_row(&self) -> String {
        format!("{},{},{}", self.component, self.eigenvalue, self.rho)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SeriesFlag {
    Ok,
    /// `|L(x_i) - L(x*)|` below the skip threshold; no value emitted.
    Skipped,
    /// `L(x_i) < L(x*)`; the value is still reported.
    NegativeDenominator,
    /// Consecutive iterates coincide; no value emitted.
    ZeroDisplacement,
    /// The gradient vanished; no value emitted.
    ZeroGradient,
}

impl SeriesFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            SeriesFlag::Ok => "ok",
            SeriesFlag::Skipped => "skipped",
            SeriesFlag::NegativeDenominator => "negative_denominator",
            SeriesFlag::ZeroDisplacement => "zero_displacement",
            SeriesFlag::ZeroGradient => "zero_gradient",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "ok" => SeriesFlag::Ok,
            "skipped" => SeriesFlag::Skipped,
            "negative_denominator" => SeriesFlag::NegativeDenominator,
            "zero_displacement" => SeriesFlag::ZeroDisplacement,
            "zero_gradient" => SeriesFlag::ZeroGradient,
            other => return Err(Error::Format(format!("unknown flag {other:?}"))),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TauRecord {
    pub step: u64,
    pub tau: Option<f64>,
    pub flag: SeriesFlag,
}

impl CsvRecord for TauRecord {
    const HEADER: &'static str = "step,tau,flag";
    fn csv_row(&self) -> String {
        format!("{},{},{}", self.step, opt(self.tau), self.flag.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CosineRecord {
    pub step: u64,
    pub cos_sim: Option<f64>,
    pub flag: SeriesFlag,
}

impl CsvRecord for CosineRecord {
    const HEADER: &'static str = "step,cos_sim,flag";
    fn csv_row(&self) -> String {
        format!("{},{},{}", self.step, opt(self.cos_sim), self.flag.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormRecord {
    pub step: u64,
    pub param_norm: f64,
    /// Distance to the next checkpoint; absent on the last one.
    pub update_norm: Option<f64>,
}

impl CsvRecord for NormRecord {
    const HEADER: &'static str = "step,param_norm,update_norm";
    fn csv_row(&self) -> String {
        format!("{},{},{}", self.step, self.param_norm, opt(self.update_norm))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlignRecord {
    pub direction: String,
    pub hv_norm: f64,
}

impl CsvRecord for AlignRecord {
    const HEADER: &'static str = "direction,hv_norm";
    fn csv_row(&self) -> String {
        format!("{},{}", self.direction, self.hv_norm)
    }
}

/// Splits a CSV file into rows after checking its header.
pub fn read_rows(path: &Path, header: &str) -> Result<Vec<Vec<String>>> {
    let text = fs::read_to_string(path).map_err(|_| Error::DataMissing(path.to_path_buf()))?;
    let mut lines = text.lines();
    if lines.next() != Some(header) {
        return Err(Error::Format(format!("{} lacks header {header:?}", path.display())));
    }
    Ok(lines
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect())
}
