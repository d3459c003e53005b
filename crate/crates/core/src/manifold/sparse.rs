use crate::error::{Error, Result};

/// Sparse real tensor as sorted `(multi-index, value)` pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseTensor {
    dims: Vec<usize>,
    entries: Vec<(Vec<usize>, f64)>,
}

impl SparseTensor {
    /// Validates indices and sums duplicates.
    pub fn new(dims: Vec<usize>, mut entries: Vec<(Vec<usize>, f64)>) -> Result<Self> {
        for (idx, _) in &entries {
            if idx.len() != dims.len() || idx.iter().zip(&dims).any(|(i, d)| i >= d) {
                return Err(Error::IndexOutOfRange { index: idx.clone(), dims: dims.clone() });
            }
        }
        entries.sort_by(|a, b| a.0.iter().rev().cmp(b.0.iter().rev()));
        let mut merged: Vec<(Vec<usize>, f64)> = Vec::with_capacity(entries.len());
        for (idx, v) in entries {
            match merged.last_mut() {
                Some((last, acc)) if *last == idx => *acc += v,
                _ => merged.push((idx, v)),
            }
        }
        Ok(Self { dims, entries: merged })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn entries(&self) -> &[(Vec<usize>, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|(_, v)| v * v).sum::<f64>().sqrt()
    }
}
