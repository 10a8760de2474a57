//! Serde adapter writing `DMatrix<f64>` as a list of rows.

use nalgebra::DMatrix;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
    let rows: Vec<Vec<f64>> = (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect();
    rows.serialize(s)
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
    let rows = Vec::<Vec<f64>>::deserialize(d)?;
    rows_to_matrix(&rows).map_err(serde::de::Error::custom)
}

pub fn rows_to_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>, String> {
    let ncols = rows.first().map_or(0, |r| r.len());
    if let Some(i) = rows.iter().position(|r| r.len() != ncols) {
        return Err(format!("matrix row {i} has {} entries, expected {ncols}", rows[i].len()));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(rows.len(), ncols, &flat))
}
