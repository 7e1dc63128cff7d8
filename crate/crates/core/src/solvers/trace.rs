use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::scalar::Scalar;

use super::{Algorithm, SolverReport};

/// One line of the residual-trace CSV
/// (`algorithm,instance_id,iteration,residual,wall_time_s`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualRow {
    pub algorithm: Algorithm,
    pub instance_id: usize,
    /// 1-based.
    pub iteration: usize,
    pub residual: f64,
    pub wall_time_s: f64,
}

impl ResidualRow {
    /// Rows for one run; with `timing` off the times are written as zero so
    /// the output is a pure function of the inputs.
    pub fn from_report<T: Scalar>(
        algorithm: Algorithm,
        instance_id: usize,
        report: &SolverReport<T>,
        timing: bool,
    ) -> Vec<ResidualRow> {
        report
            .residuals
            .iter()
            .zip(&report.times)
            .enumerate()
            .map(|(k, (r, &t))| ResidualRow {
                algorithm,
                instance_id,
                iteration: k + 1,
                residual: r.to_f64_lossy(),
                wall_time_s: if timing { t } else { 0.0 },
            })
            .collect()
    }
}

pub fn write_residual_csv<W: Write>(w: W, rows: &[ResidualRow]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for row in rows {
        wr.serialize(row)?;
    }
    if rows.is_empty() {
        wr.write_record(["algorithm", "instance_id", "iteration", "residual", "wall_time_s"])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_residual_csv<R: Read>(r: R) -> Result<Vec<ResidualRow>> {
    let mut rd = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for row in rd.deserialize() {
        out.push(row?);
    }
    Ok(out)
}
