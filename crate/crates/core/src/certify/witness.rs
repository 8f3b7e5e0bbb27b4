//! Auditable JSON export of certificate witnesses.

use std::path::Path;

use nalgebra::DMatrix;
use serde::Serialize;

use super::CertResult;
use crate::error::Result;

#[derive(Debug, Serialize)]
struct MatrixRows(Vec<Vec<f64>>);

impl From<&DMatrix<f64>> for MatrixRows {
    fn from(m: &DMatrix<f64>) -> Self {
        Self(
            (0..m.nrows())
                .map(|i| m.row(i).iter().copied().collect())
                .collect(),
        )
    }
}

#[derive(Debug, Serialize)]
struct ChannelWitness {
    channel: usize,
    s: MatrixRows,
    r: MatrixRows,
    s12: MatrixRows,
}

#[derive(Debug, Serialize)]
struct WitnessFile<'a> {
    kappa: f64,
    feasible: bool,
    delta: f64,
    margin_variable: f64,
    psi_min_eigenvalues: &'a [f64],
    s_min_eigenvalue: f64,
    r_min_eigenvalue: f64,
    rs12_min_eigenvalue: f64,
    solver_status: String,
    solver_iterations: usize,
    channels: Vec<ChannelWitness>,
}

pub fn witness_json(result: &CertResult, kappa: f64) -> Result<String> {
    let w = &result.witness;
    let file = WitnessFile {
        kappa,
        feasible: result.feasible,
        delta: result.delta,
        margin_variable: result.t,
        psi_min_eigenvalues: &result.check.psi_min,
        s_min_eigenvalue: result.check.s_min,
        r_min_eigenvalue: result.check.r_min,
        rs12_min_eigenvalue: result.check.rs12_min,
        solver_status: format!("{:?}", result.status),
        solver_iterations: result.iterations,
        channels: (0..w.s.len())
            .map(|m| ChannelWitness {
                channel: m + 1,
                s: (&w.s[m]).into(),
                r: (&w.r[m]).into(),
                s12: (&w.s12[m]).into(),
            })
            .collect(),
    };
    Ok(serde_json::to_string_pretty(&file)?)
}

pub fn write_witness(path: &Path, result: &CertResult, kappa: f64) -> Result<()> {
    std::fs::write(path, witness_json(result, kappa)?)?;
    Ok(())
}
