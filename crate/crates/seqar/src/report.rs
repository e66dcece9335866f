//! JSON report plumbing shared by the library types and the CLI: matrix
//! serialization as nested row arrays and the reproducibility block stamped
//! into every machine-readable output.

use nalgebra::DMatrix;
use serde::ser::{SerializeSeq, Serializer};
use serde::Serialize;
use serde_json::Value;

pub const SCHEMA_VERSION: u32 = 1;

pub fn serialize_matrix<S: Serializer>(m: &DMatrix<f64>, ser: S) -> std::result::Result<S::Ok, S::Error> {
    let mut seq = ser.serialize_seq(Some(m.nrows()))?;
    for i in 0..m.nrows() {
        let row: Vec<f64> = (0..m.ncols()).map(|j| m[(i, j)]).collect();
        seq.serialize_element(&row)?;
    }
    seq.end()
}

pub fn serialize_opt_matrix<S: Serializer>(
    m: &Option<DMatrix<f64>>,
    ser: S,
) -> std::result::Result<S::Ok, S::Error> {
    match m {
        Some(m) => serialize_matrix(m, ser),
        None => ser.serialize_none(),
    }
}

pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Envelope written by every CLI command that emits JSON: the payload plus
/// the fully resolved configuration needed to reproduce it.
#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub schema: u32,
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config: Value,
    pub result: Value,
}

impl Report {
    pub fn new(command: &str, config: Value, result: Value) -> Self {
        Self {
            schema: SCHEMA_VERSION,
            tool: "seqar",
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            config,
            result,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization")
    }
}
