use serde::{Deserialize, Serialize};

use super::linalg::jacobi_eigen;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Principal components of the sample covariance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `R×D`, orthonormal rows sorted by decreasing explained variance. The
    /// largest-magnitude entry of each row is positive.
    pub components: Tensor,
    pub explained_variance: Vec<f64>,
    /// Sum of all covariance eigenvalues (the total variance).
    pub total_variance: f64,
    pub target_dim: usize,
}

impl PcaModel {
    /// Fits the top `target_dim` components of an `N×D` matrix.
    /// Requires `N ≥ 2` and `1 ≤ target_dim ≤ min(N − 1, D)`.
    pub fn fit(x: &Tensor, target_dim: usize) -> Result<Self> {
        let (n, d) = (x.rows(), x.cols());
        if x.rank() != 2 || n < 2 {
            return Err(Error::InvalidArgument(format!(
                "PCA needs a matrix with at least 2 rows, got shape {:?}",
                x.shape()
            )));
        }
        let limit = (n - 1).min(d);
        if target_dim == 0 || target_dim > limit {
            return Err(Error::InvalidArgument(format!(
                "PCA target dimension {target_dim} outside 1..={limit} for {n}x{d} data"
            )));
        }
        let base = x.row(0);
        let mean: Vec<f64> = (0..d)
            .map(|j| base[j] + (0..n).map(|i| x.get2(i, j) - base[j]).sum::<f64>() / n as f64)
            .collect();
        let mut cov = vec![0.0; d * d];
        for i in 0..n {
            let row = x.row(i);
            let centered: Vec<f64> = row.iter().zip(&mean).map(|(v, m)| v - m).collect();
            for a in 0..d {
                let ca = centered[a];
                if ca == 0.0 {
                    continue;
                }
                for b in a..d {
                    cov[a * d + b] += ca * centered[b];
                }
            }
        }
        for a in 0..d {
            for b in a..d {
                let v = cov[a * d + b] / (n - 1) as f64;
                cov[a * d + b] = v;
                cov[b * d + a] = v;
            }
        }

        let eigen = jacobi_eigen(&cov, d);
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eigen.values[b].total_cmp(&eigen.values[a]).then(a.cmp(&b)));

        let mut components = Vec::with_capacity(target_dim * d);
        let mut explained = Vec::with_capacity(target_dim);
        for &col in order.iter().take(target_dim) {
            let mut v: Vec<f64> = (0..d).map(|i| eigen.vectors[i * d + col]).collect();
            let pivot = v
                .iter()
                .enumerate()
                .fold((0, 0.0_f64), |(bi, bv), (i, x)| if x.abs() > bv { (i, x.abs()) } else { (bi, bv) })
                .0;
            if v[pivot] < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            components.extend(v);
            explained.push(eigen.values[col].max(0.0));
        }
        Ok(PcaModel {
            mean,
            components: Tensor::from_parts(vec![target_dim, d], components),
            explained_variance: explained,
            total_variance: eigen.values.iter().map(|v| v.max(0.0)).sum(),
            target_dim,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    /// `(X − mean)·componentsᵀ`
    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        let d = self.input_dim();
        if x.rank() != 2 || x.cols() != d {
            return Err(Error::shape("pca apply", x.shape(), &[d]));
        }
        let r = self.target_dim;
        let mut out = Vec::with_capacity(x.rows() * r);
        for i in 0..x.rows() {
            let centered: Vec<f64> = x.row(i).iter().zip(&self.mean).map(|(v, m)| v - m).collect();
            for c in 0..r {
                out.push(centered.iter().zip(self.components.row(c)).map(|(a, b)| a * b).sum());
            }
        }
        Ok(Tensor::from_parts(vec![x.rows(), r], out))
    }

    /// Maps projected rows back to the input space.
    pub fn reconstruct(&self, y: &Tensor) -> Result<Tensor> {
        if y.rank() != 2 || y.cols() != self.target_dim {
            return Err(Error::shape("pca reconstruct", y.shape(), &[self.target_dim]));
        }
        let d = self.input_dim();
        let mut out = Vec::with_capacity(y.rows() * d);
        for i in 0..y.rows() {
            for j in 0..d {
                let v: f64 = (0..self.target_dim).map(|c| y.get2(i, c) * self.components.get2(c, j)).sum();
                out.push(v + self.mean[j]);
            }
        }
        Ok(Tensor::from_parts(vec![y.rows(), d], out))
    }
}
