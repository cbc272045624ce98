//! Run artifacts: `run.json` plus three plot-ready CSV files. Floats in CSV
//! files carry 17 significant digits.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Method};
use crate::run::RunRecord;

pub const CONVERGENCE_HEADER: &str = "iter,loss,grad_norm,alpha,qe_cumulative";
pub const POPULATIONS_HEADER: &str = "t,state_index,exact,approx";
pub const BURES_HEADER: &str = "step,mean_bures,min,max";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub label: String,
    pub iterations: usize,
    pub status: String,
    pub final_loss: f64,
}

/// Contents of `run.json`. Wall time is left out so that the file is
/// byte-identical across repeated runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub method: Method,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub status: String,
    pub final_loss: f64,
    pub qe_total: u64,
    pub iterations: usize,
    pub stages: Vec<StageSummary>,
    pub min_choi_eigenvalue: f64,
    pub tp_residual: f64,
    pub mean_bures: Vec<f64>,
    pub final_params: Vec<f64>,
}

impl Manifest {
    pub fn from_record(rec: &RunRecord) -> Self {
        Self {
            name: rec.config.name.clone(),
            method: rec.method,
            config_hash: rec.config_hash(),
            config: rec.config.clone(),
            status: rec.status.as_str().to_string(),
            final_loss: rec.final_loss,
            qe_total: rec.qe_total,
            iterations: rec.trace.last().map_or(0, |r| r.iter),
            stages: rec
                .stages
                .iter()
                .map(|s| StageSummary {
                    label: s.label.to_string(),
                    iterations: s.trace.len().saturating_sub(1),
                    status: s.status.as_str().to_string(),
                    final_loss: s.final_loss(),
                })
                .collect(),
            min_choi_eigenvalue: rec.certificate.min_choi_eigenvalue,
            tp_residual: rec.certificate.tp_residual,
            mean_bures: rec.error_curve.mean_bures.clone(),
            final_params: rec.final_params.clone(),
        }
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }
}

fn float(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn convergence_csv(rec: &RunRecord) -> String {
    let mut out = format!("{CONVERGENCE_HEADER}\n");
    for r in &rec.trace {
        let _ = writeln!(out, "{},{},{},{},{}", r.iter, float(r.loss), float(r.grad_norm), float(r.alpha), r.qe_cumulative);
    }
    out
}

pub fn populations_csv(rec: &RunRecord) -> String {
    let mut out = format!("{POPULATIONS_HEADER}\n");
    for r in &rec.populations {
        let _ = writeln!(out, "{},{},{},{}", float(r.t), r.state_index, float(r.exact), float(r.approx));
    }
    out
}

pub fn bures_csv(rec: &RunRecord) -> String {
    let c = &rec.error_curve;
    let (min, max) = (c.min(), c.max());
    let mut out = format!("{BURES_HEADER}\n");
    for (i, step) in c.steps.iter().enumerate() {
        let _ = writeln!(out, "{step},{},{},{}", float(c.mean_bures[i]), float(min[i]), float(max[i]));
    }
    out
}

/// Writes `run.json`, `convergence.csv`, `populations.csv` and `bures.csv`
/// into `dir`, creating it if needed.
pub fn export(rec: &RunRecord, dir: &Path) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    let manifest = serde_json::to_string_pretty(&Manifest::from_record(rec))
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
    fs::write(dir.join("run.json"), manifest + "\n")?;
    fs::write(dir.join("convergence.csv"), convergence_csv(rec))?;
    fs::write(dir.join("populations.csv"), populations_csv(rec))?;
    fs::write(dir.join("bures.csv"), bures_csv(rec))?;
    Ok(())
}
