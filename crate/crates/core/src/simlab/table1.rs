//! Accuracy table over models × noise levels × methods.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::igci::{igci_adjusted, Direction};
use super::scm::{check_model, generate_scm, true_dynamics, ScmSpec};
use crate::asymmetry::{directional_test, AsymmetryConfig};
use crate::error::{CgemError, Result};
use crate::rng::derive;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Cac,
    Igci,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Cac => "cac",
            Method::Igci => "igci",
        }
    }

    pub fn parse(s: &str) -> Result<Method> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cac" => Ok(Method::Cac),
            "igci" => Ok(Method::Igci),
            other => Err(CgemError::Config(format!(
                "--methods: unknown method '{other}' (expected cac or igci)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Config {
    pub models: Vec<u8>,
    pub sigmas: Vec<f64>,
    pub n: usize,
    pub replicates: usize,
    pub methods: Vec<Method>,
    pub seed: u64,
    /// Level of the one-sided CAC test.
    pub alpha: f64,
    pub asymmetry: AsymmetryConfig,
}

impl Default for Table1Config {
    fn default() -> Self {
        Table1Config {
            models: super::scm::MODELS.to_vec(),
            sigmas: super::scm::SIGMAS.to_vec(),
            n: 500,
            replicates: 50,
            methods: vec![Method::Cac, Method::Igci],
            seed: 42,
            alpha: 0.05,
            asymmetry: AsymmetryConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model_id: u8,
    pub sigma: f64,
    pub method: Method,
    pub correct: usize,
    pub replicates: usize,
    pub accuracy: f64,
    pub runtime_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateFailure {
    pub model_id: u8,
    pub sigma: f64,
    pub method: Method,
    pub replicate: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub rows: Vec<ReportRow>,
    pub failures: Vec<ReplicateFailure>,
}

impl ExperimentReport {
    pub fn accuracy(&self, model_id: u8, sigma: f64, method: Method) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.model_id == model_id && r.sigma == sigma && r.method == method)
            .map(|r| r.accuracy)
    }

    /// CSV with header `model,sigma,method,correct,replicates,accuracy`.
    /// Runtimes are left out so equal seeds give equal files.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| CgemError::Io(e.to_string());
        w.write_record(["model", "sigma", "method", "correct", "replicates", "accuracy"])
            .map_err(io)?;
        for r in &self.rows {
            w.write_record([
                r.model_id.to_string(),
                r.sigma.to_string(),
                r.method.as_str().to_string(),
                r.correct.to_string(),
                r.replicates.to_string(),
                r.accuracy.to_string(),
            ])
            .map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Data seed of one replicate; the split seed is derived from it.
pub fn replicate_seed(master: u64, model_id: u8, sigma: f64, replicate: usize) -> u64 {
    derive(master, &[model_id as u64, sigma.to_bits(), replicate as u64])
}

/// Outcome of one method on one replicate: `Ok(true)` when `X → Y | Z` is
/// identified.
pub fn run_replicate(
    model_id: u8,
    sigma: f64,
    replicate: usize,
    method: Method,
    cfg: &Table1Config,
) -> Result<bool> {
    let seed = replicate_seed(cfg.seed, model_id, sigma, replicate);
    let ds = generate_scm(&ScmSpec::new(model_id, sigma, cfg.n, seed)?)?;
    match method {
        Method::Cac => {
            let r = directional_test(
                &ds,
                true_dynamics(model_id),
                cfg.alpha,
                derive(seed, &[1]),
                &cfg.asymmetry,
            )?;
            Ok(r.reject_null)
        }
        Method::Igci => Ok(igci_adjusted(ds.x(), ds.y(), ds.z())?.direction == Direction::XToY),
    }
}

pub fn run_table1(cfg: &Table1Config) -> Result<ExperimentReport> {
    if cfg.replicates == 0 {
        return Err(CgemError::Config("--reps must be at least 1".into()));
    }
    for &m in &cfg.models {
        check_model(m).map_err(|e| CgemError::Config(e.to_string()))?;
    }
    let mut report = ExperimentReport {
        rows: Vec::new(),
        failures: Vec::new(),
    };
    for &model_id in &cfg.models {
        for &sigma in &cfg.sigmas {
            for &method in &cfg.methods {
                let start = Instant::now();
                let outcomes: Vec<Result<bool>> = (0..cfg.replicates)
                    .into_par_iter()
                    .map(|r| run_replicate(model_id, sigma, r, method, cfg))
                    .collect();
                let mut correct = 0;
                for (replicate, o) in outcomes.into_iter().enumerate() {
                    match o {
                        Ok(true) => correct += 1,
                        Ok(false) => {}
                        Err(e) => report.failures.push(ReplicateFailure {
                            model_id,
                            sigma,
                            method,
                            replicate,
                            error: e.to_string(),
                        }),
                    }
                }
                report.rows.push(ReportRow {
                    model_id,
                    sigma,
                    method,
                    correct,
                    replicates: cfg.replicates,
                    accuracy: correct as f64 / cfg.replicates as f64,
                    runtime_secs: start.elapsed().as_secs_f64(),
                });
            }
        }
    }
    Ok(report)
}
