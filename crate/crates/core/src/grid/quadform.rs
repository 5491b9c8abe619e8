//! Sparse symmetric quadratic forms `v^T A v`.
//!
//! The grid model is built entirely from symmetric matrices applied to the
//! stacked real/imaginary voltage vector. Only the upper triangle is stored,
//! so symmetry holds by construction.

use serde::{Deserialize, Serialize};

/// A sparse symmetric matrix stored as its upper triangle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadForm {
    dim: usize,
    /// Entries `(i, j, a)` with `i <= j`; the full matrix has `A[i][j] = A[j][i] = a`.
    entries: Vec<(u32, u32, f64)>,
}

impl QuadForm {
    pub fn new(dim: usize) -> Self {
        QuadForm {
            dim,
            entries: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[(u32, u32, f64)] {
        &self.entries
    }

    /// Adds `a` to the matrix entry at `(i, j)` (and `(j, i)`).
    pub fn add_entry(&mut self, i: usize, j: usize, a: f64) {
        assert!(i < self.dim && j < self.dim);
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        let (i, j) = (i as u32, j as u32);
        if let Some(e) = self.entries.iter_mut().find(|e| e.0 == i && e.1 == j) {
            e.2 += a;
        } else {
            self.entries.push((i, j, a));
        }
    }

    /// Adds the bilinear term `c * v_i * v_j` to the form.
    ///
    /// Off-diagonal terms are split evenly between `(i, j)` and `(j, i)` so
    /// the matrix stays symmetric.
    pub fn add_term(&mut self, i: usize, j: usize, c: f64) {
        if i == j {
            self.add_entry(i, j, c);
        } else {
            self.add_entry(i, j, c / 2.0);
        }
    }

    /// Evaluates `v^T A v`.
    pub fn eval(&self, v: &[f64]) -> f64 {
        debug_assert_eq!(v.len(), self.dim);
        let mut acc = 0.0;
        for &(i, j, a) in &self.entries {
            let (i, j) = (i as usize, j as usize);
            if i == j {
                acc += a * v[i] * v[i];
            } else {
                acc += 2.0 * a * v[i] * v[j];
            }
        }
        acc
    }

    /// Accumulates `out += scale * 2 A v`, the gradient of `v^T A v`.
    pub fn add_scaled_grad(&self, v: &[f64], scale: f64, out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.dim);
        debug_assert_eq!(out.len(), self.dim);
        let s = 2.0 * scale;
        for &(i, j, a) in &self.entries {
            let (i, j) = (i as usize, j as usize);
            if i == j {
                out[i] += s * a * v[i];
            } else {
                out[i] += s * a * v[j];
                out[j] += s * a * v[i];
            }
        }
    }

    /// Returns the negated form `-A`.
    pub fn negated(&self) -> Self {
        QuadForm {
            dim: self.dim,
            entries: self
                .entries
                .iter()
                .map(|&(i, j, a)| (i, j, -a))
                .collect(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
