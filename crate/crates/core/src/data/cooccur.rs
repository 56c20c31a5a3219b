//! Pairwise co-occurrence of binary attributes as phi coefficients.

use std::fmt::Write as _;

use super::dataset::Dataset;
use crate::dmtl::{AttributeKind, LabelValue};
use crate::error::{Error, Result};

/// Phi coefficient of two binary columns,
/// `(n11·n00 − n10·n01) / sqrt(n1·n0·m1·m0)`, from exact integer counts.
/// A constant column gives 0.
pub fn phi(a: &[bool], b: &[bool]) -> f64 {
    assert_eq!(a.len(), b.len(), "phi of columns with different lengths");
    let mut n = [[0u64; 2]; 2];
    for (&x, &y) in a.iter().zip(b) {
        n[x as usize][y as usize] += 1;
    }
    phi_from_counts(n)
}

/// Phi from a contingency table indexed `[a][b]`.
pub fn phi_from_counts(n: [[u64; 2]; 2]) -> f64 {
    let row1 = n[1][0] + n[1][1];
    let row0 = n[0][0] + n[0][1];
    let col1 = n[0][1] + n[1][1];
    let col0 = n[0][0] + n[1][0];
    let den = row1 as u128 * row0 as u128 * col1 as u128 * col0 as u128;
    if den == 0 {
        return 0.0;
    }
    let num = n[1][1] as i128 * n[0][0] as i128 - n[1][0] as i128 * n[0][1] as i128;
    (num as f64 / (den as f64).sqrt()).clamp(-1.0, 1.0)
}

/// Symmetric phi matrix over a set of attributes.
#[derive(Debug, Clone, PartialEq)]
pub struct Cooccurrence {
    pub names: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl Cooccurrence {
    /// CSV with the attribute names as header row and first column.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("attribute");
        for n in &self.names {
            let _ = write!(out, ",{n}");
        }
        out.push('\n');
        for (n, row) in self.names.iter().zip(&self.values) {
            out.push_str(n);
            for v in row {
                let _ = write!(out, ",{v:?}");
            }
            out.push('\n');
        }
        out
    }
}

/// Phi matrix of the given binary nominal attributes (catalog indices).
/// Diagonal entries follow the same rule as off-diagonal ones: 1, or 0 for
/// a constant column.
pub fn cooccurrence(dataset: &Dataset, attributes: &[usize]) -> Result<Cooccurrence> {
    let catalog = dataset.catalog();
    let mut columns = Vec::with_capacity(attributes.len());
    for &a in attributes {
        let def = catalog
            .attributes()
            .get(a)
            .ok_or_else(|| Error::Contract(format!("attribute index {a} outside the catalog")))?;
        if def.kind != (AttributeKind::Nominal { classes: 2 }) {
            return Err(Error::Contract(format!(
                "co-occurrence needs binary nominal attributes; `{}` is not",
                def.name
            )));
        }
        let col: Vec<bool> = dataset
            .records()
            .iter()
            .map(|r| matches!(r.labels[a], LabelValue::Nominal(1)))
            .collect();
        columns.push(col);
    }
    let m = columns.len();
    let mut values = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in i..m {
            let v = phi(&columns[i], &columns[j]);
            values[i][j] = v;
            values[j][i] = v;
        }
    }
    Ok(Cooccurrence {
        names: attributes.iter().map(|&a| catalog.attributes()[a].name.clone()).collect(),
        values,
    })
}

/// All binary nominal attributes of a dataset's catalog.
pub fn binary_attributes(dataset: &Dataset) -> Vec<usize> {
    dataset
        .catalog()
        .attributes()
        .iter()
        .enumerate()
        .filter(|(_, d)| d.kind == AttributeKind::Nominal { classes: 2 })
        .map(|(i, _)| i)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_columns() {
        let a = [true, true, false, false];
        let b = [true, false, true, false];
        assert_eq!(phi(&a, &b), 0.0);
        assert_eq!(phi(&a, &a), 1.0);
        let not_a: Vec<bool> = a.iter().map(|v| !v).collect();
        assert_eq!(phi(&a, &not_a), -1.0);
        assert_eq!(phi(&[true; 4], &b), 0.0);
    }
}
