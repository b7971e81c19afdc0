//! Per-iteration trace records and their CSV form.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One row of a solver trace. CSV columns follow the field order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: usize,
    pub eta_t: f64,
    pub tau_t: f64,
    pub tilde_tau_t: Option<f64>,
    pub l_op_t: f64,
    pub l_smooth_t: Option<f64>,
    /// Bounded-gap bound when both radii are known, else the E1 error bound.
    pub bound: Option<f64>,
    pub violation: Option<f64>,
    /// `‖(residual of x̂) − μ ỹ‖` in constrained mode.
    pub identity_residual: Option<f64>,
    pub w_residual: Option<f64>,
    pub grad_calls: Option<usize>,
    pub wall_ns: u64,
}

pub fn write_csv<W: Write>(records: &[TraceRecord], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(true).from_writer(out);
    if records.is_empty() {
        // serde only emits headers alongside the first record
        w.write_record([
            "t",
            "eta_t",
            "tau_t",
            "tilde_tau_t",
            "l_op_t",
            "l_smooth_t",
            "bound",
            "violation",
            "identity_residual",
            "w_residual",
            "grad_calls",
            "wall_ns",
        ])
        .map_err(|e| Error::Io(e.to_string()))?;
    }
    for r in records {
        w.serialize(r).map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<TraceRecord>> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    r.deserialize()
        .map(|rec| rec.map_err(|e| Error::Parse(e.to_string())))
        .collect()
}
