//! Symmetric Toeplitz covariance matrices and their Durbin-Levinson
//! factorization.
//!
//! The factorization stores the one-step prediction filters of every order,
//! which give a unit lower-triangular `L` with `L Λ Lᵀ = diag(v)`. Whitening
//! `x -> diag(v)^{-1/2} L x` turns GLS into ordinary least squares without
//! ever forming `Λ^{-1}`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// `N x N` symmetric Toeplitz matrix given by its first row.
#[derive(Debug, Clone, PartialEq)]
pub struct ToeplitzCov {
    first_row: Vec<f64>,
    degree: Option<usize>,
}

impl ToeplitzCov {
    pub fn new(first_row: Vec<f64>, degree: Option<usize>) -> Result<Self> {
        if first_row.is_empty() {
            return Err(Error::Dimension("Toeplitz matrix needs at least one lag".into()));
        }
        if first_row.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("Toeplitz entries must be finite".into()));
        }
        Ok(ToeplitzCov { first_row, degree })
    }

    pub fn identity(size: usize) -> Self {
        let mut row = vec![0.0; size.max(1)];
        row[0] = 1.0;
        ToeplitzCov {
            first_row: row,
            degree: None,
        }
    }

    pub fn size(&self) -> usize {
        self.first_row.len()
    }

    pub fn first_row(&self) -> &[f64] {
        &self.first_row
    }

    pub fn degree(&self) -> Option<usize> {
        self.degree
    }

    pub fn scaled(&self, c: f64) -> Self {
        ToeplitzCov {
            first_row: self.first_row.iter().map(|v| v * c).collect(),
            degree: self.degree,
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.size();
        DMatrix::from_fn(n, n, |i, j| self.first_row[i.abs_diff(j)])
    }

    /// Durbin-Levinson recursion; fails unless the matrix is positive
    /// definite.
    pub fn factor(&self) -> Result<ToeplitzFactor> {
        let c = &self.first_row;
        let n = c.len();
        let npd = || Error::NotPositiveDefinite { degree: self.degree };
        if !(c[0] > 0.0) {
            return Err(npd());
        }
        let mut filters: Vec<Vec<f64>> = Vec::with_capacity(n);
        let mut var = Vec::with_capacity(n);
        filters.push(Vec::new());
        var.push(c[0]);
        for k in 1..n {
            let prev = &filters[k - 1];
            let acc: f64 = prev.iter().enumerate().map(|(i, a)| a * c[k - 1 - i]).sum();
            let kappa = (c[k] - acc) / var[k - 1];
            if !(kappa.abs() < 1.0) {
                return Err(npd());
            }
            let mut next = Vec::with_capacity(k);
            for i in 0..k - 1 {
                next.push(prev[i] - kappa * prev[k - 2 - i]);
            }
            next.push(kappa);
            let v = var[k - 1] * (1.0 - kappa * kappa);
            if !(v > 0.0) {
                return Err(npd());
            }
            filters.push(next);
            var.push(v);
        }
        Ok(ToeplitzFactor {
            filters,
            inv_sd: var.iter().map(|v| 1.0 / v.sqrt()).collect(),
            log_det: var.iter().map(|v| v.ln()).sum(),
        })
    }
}

/// Prediction filters `a_k` (coefficients on `x_{k-1}, ..., x_0`) and
/// innovation scales of a factored Toeplitz matrix.
#[derive(Debug, Clone)]
pub struct ToeplitzFactor {
    filters: Vec<Vec<f64>>,
    inv_sd: Vec<f64>,
    log_det: f64,
}

impl ToeplitzFactor {
    pub fn size(&self) -> usize {
        self.inv_sd.len()
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// `W x` with `Wᵀ W = Λ^{-1}`.
    pub fn whiten(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x.len())?;
        Ok(self
            .filters
            .iter()
            .zip(&self.inv_sd)
            .enumerate()
            .map(|(k, (a, s))| {
                let pred: f64 = a.iter().enumerate().map(|(i, ai)| ai * x[k - 1 - i]).sum();
                (x[k] - pred) * s
            })
            .collect())
    }

    /// `Wᵀ z`.
    pub fn whiten_transpose(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check(z.len())?;
        let mut out = vec![0.0; z.len()];
        for (k, (a, s)) in self.filters.iter().zip(&self.inv_sd).enumerate() {
            let zk = z[k] * s;
            out[k] += zk;
            for (i, ai) in a.iter().enumerate() {
                out[k - 1 - i] -= ai * zk;
            }
        }
        Ok(out)
    }

    /// `Λ^{-1} b`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        self.whiten_transpose(&self.whiten(b)?)
    }

    /// `xᵀ Λ^{-1} x`.
    pub fn quad_form(&self, x: &[f64]) -> Result<f64> {
        Ok(self.whiten(x)?.iter().map(|v| v * v).sum())
    }

    fn check(&self, len: usize) -> Result<()> {
        if len != self.size() {
            return Err(Error::Dimension(format!(
                "vector of length {len} for a {}x{} Toeplitz factor",
                self.size(),
                self.size()
            )));
        }
        Ok(())
    }
}
