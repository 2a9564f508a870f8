//! Serde helpers: matrices are written as row-major arrays of arrays.

use serde::ser::{SerializeSeq, Serializer};

use crate::matrixkit::{Matrix, SymMatrix};

pub fn mat_rows<S: Serializer>(m: &Matrix, s: S) -> Result<S::Ok, S::Error> {
    let mut seq = s.serialize_seq(Some(m.nrows()))?;
    for row in m.row_iter() {
        let r: Vec<f64> = row.iter().copied().collect();
        seq.serialize_element(&r)?;
    }
    seq.end()
}

pub fn sym_rows<S: Serializer>(m: &SymMatrix, s: S) -> Result<S::Ok, S::Error> {
    mat_rows(m.as_matrix(), s)
}

pub fn opt_mat_rows<S: Serializer>(m: &Option<Matrix>, s: S) -> Result<S::Ok, S::Error> {
    match m {
        Some(m) => mat_rows(m, s),
        None => s.serialize_none(),
    }
}

pub fn opt_sym_rows<S: Serializer>(m: &Option<SymMatrix>, s: S) -> Result<S::Ok, S::Error> {
    match m {
        Some(m) => mat_rows(m.as_matrix(), s),
        None => s.serialize_none(),
    }
}

pub fn vec_items<S: Serializer>(v: &crate::matrixkit::Vector, s: S) -> Result<S::Ok, S::Error> {
    let items: Vec<f64> = v.iter().copied().collect();
    s.collect_seq(items)
}
