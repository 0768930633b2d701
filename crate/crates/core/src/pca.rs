//! Principal component analysis on top of the in-repo Jacobi eigensolver:
//! fit the top-ℓ orthonormal directions of a data matrix, project into
//! them, and score how much each original feature contributes to the
//! retained subspace.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{jacobi_eigh, Matrix};

/// A fitted principal-subspace model.
///
/// `loadings` is h×ℓ with unit-norm eigenvector columns of the sample
/// covariance (divide by n−1) of the centered — optionally standardized —
/// training matrix. Columns are ordered by non-increasing eigenvalue, with
/// the deterministic tie and sign conventions of [`jacobi_eigh`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub feature_names: Vec<String>,
    pub column_means: Vec<f64>,
    /// Per-column divisor applied after centering; all 1.0 unless the model
    /// was fitted with standardization.
    pub column_scales: Vec<f64>,
    /// Top-ℓ eigenvalues, non-increasing.
    pub eigenvalues: Vec<f64>,
    /// h×ℓ loading matrix W.
    pub loadings: Matrix,
}

impl PcaModel {
    /// Input dimensionality h.
    pub fn h(&self) -> usize {
        self.loadings.rows()
    }

    /// Retained dimensionality ℓ.
    pub fn ell(&self) -> usize {
        self.loadings.cols()
    }

    /// Fit on `x` (n×h), keeping the top `ell` eigenpairs.
    pub fn fit(x: &Matrix, ell: usize) -> Result<PcaModel> {
        let names: Vec<String> = (1..=x.cols()).map(|j| format!("f{j}")).collect();
        PcaModel::fit_named(x, ell, &names, false)
    }

    /// Fit with explicit feature names and optional per-column
    /// standardization (divide centered columns by their sample standard
    /// deviation; constant columns are left centered rather than divided
    /// by zero).
    pub fn fit_named(x: &Matrix, ell: usize, names: &[String], standardize: bool) -> Result<PcaModel> {
        let n = x.rows();
        let h = x.cols();
        if n < 2 {
            return Err(Error::TooFewRows { need: 2, got: n });
        }
        if ell == 0 || ell > h {
            return Err(Error::EllOutOfRange { ell, h });
        }
        if names.len() != h {
            return Err(Error::DimensionMismatch { expected: h, got: names.len() });
        }

        let mut means = vec![0.0; h];
        for j in 0..h {
            means[j] = (0..n).map(|i| x[(i, j)]).sum::<f64>() / n as f64;
        }
        let mut scales = vec![1.0; h];
        if standardize {
            for j in 0..h {
                let ss: f64 = (0..n).map(|i| x[(i, j)] - means[j]).map(|v| v * v).sum();
                let sd = (ss / (n - 1) as f64).sqrt();
                if sd > 0.0 {
                    scales[j] = sd;
                }
            }
        }

        let mut xc = Matrix::zeros(n, h);
        for i in 0..n {
            for j in 0..h {
                xc[(i, j)] = (x[(i, j)] - means[j]) / scales[j];
            }
        }

        // Sample covariance, built symmetric by construction.
        let mut cov = Matrix::zeros(h, h);
        for a in 0..h {
            for b in a..h {
                let s: f64 = (0..n).map(|i| xc[(i, a)] * xc[(i, b)]).sum();
                let v = s / (n - 1) as f64;
                cov[(a, b)] = v;
                cov[(b, a)] = v;
            }
        }

        let (eigvals, eigvecs) = jacobi_eigh(&cov)?;
        let mut loadings = Matrix::zeros(h, ell);
        for j in 0..h {
            for k in 0..ell {
                loadings[(j, k)] = eigvecs[(j, k)];
            }
        }
        Ok(PcaModel {
            feature_names: names.to_vec(),
            column_means: means,
            column_scales: scales,
            eigenvalues: eigvals[..ell].to_vec(),
            loadings,
        })
    }

    /// Project `x` (n×h) into the retained subspace: ((x − means)/scales)·W.
    pub fn transform(&self, x: &Matrix) -> Result<Matrix> {
        let h = self.h();
        if x.cols() != h {
            return Err(Error::DimensionMismatch { expected: h, got: x.cols() });
        }
        let ell = self.ell();
        let mut out = Matrix::zeros(x.rows(), ell);
        for i in 0..x.rows() {
            for k in 0..ell {
                let mut s = 0.0;
                for j in 0..h {
                    s += (x[(i, j)] - self.column_means[j]) / self.column_scales[j] * self.loadings[(j, k)];
                }
                out[(i, k)] = s;
            }
        }
        Ok(out)
    }

    /// Per-original-feature contribution to the retained subspace:
    /// score_j = Σ_k |W[j][k]|. Sign-convention-free by construction.
    pub fn feature_contributions(&self) -> Vec<f64> {
        (0..self.h())
            .map(|j| (0..self.ell()).map(|k| self.loadings[(j, k)].abs()).sum())
            .collect()
    }

    /// Variant weighting each component by its share of the retained
    /// variance: score_j = Σ_k |W[j][k]| · λ_k / Σ λ. Falls back to zeros
    /// when the retained variance is not positive.
    pub fn feature_contributions_weighted(&self) -> Vec<f64> {
        let total: f64 = self.eigenvalues.iter().sum();
        if total <= 0.0 {
            return vec![0.0; self.h()];
        }
        (0..self.h())
            .map(|j| {
                (0..self.ell())
                    .map(|k| self.loadings[(j, k)].abs() * self.eigenvalues[k] / total)
                    .sum()
            })
            .collect()
    }
}
