use crate::error::{Error, Result};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Eigenvalues below this are a hard error; between it and zero they are clipped.
pub const PSD_REPAIR_TOL: f64 = 1e-10;
const SYMMETRY_TOL: f64 = 1e-12;

/// Symmetric, unit-diagonal, positive semi-definite correlation matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    dim: usize,
    entries: Vec<f64>,
    #[serde(default)]
    repaired: bool,
}

impl CorrelationMatrix {
    /// Validates and, where the smallest eigenvalue is within
    /// [`PSD_REPAIR_TOL`] of zero, repairs the matrix by eigenvalue clipping.
    pub fn new(dim: usize, entries: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Matrix("correlation matrix must have dim >= 1".into()));
        }
        if entries.len() != dim * dim {
            return Err(Error::Matrix(format!(
                "expected {} entries for dim {dim}, got {}",
                dim * dim,
                entries.len()
            )));
        }
        for i in 0..dim {
            let d = entries[i * dim + i];
            if (d - 1.0).abs() > SYMMETRY_TOL {
                return Err(Error::Matrix(format!("diagonal entry {i} is {d}, not 1")));
            }
            for j in 0..i {
                let (a, b) = (entries[i * dim + j], entries[j * dim + i]);
                if !a.is_finite() || !b.is_finite() {
                    return Err(Error::Matrix(format!("entry ({i},{j}) is not finite")));
                }
                if (a - b).abs() > SYMMETRY_TOL {
                    return Err(Error::Matrix(format!("not symmetric at ({i},{j}): {a} vs {b}")));
                }
                if a.abs() > 1.0 + SYMMETRY_TOL {
                    return Err(Error::Matrix(format!("entry ({i},{j}) = {a} outside [-1, 1]")));
                }
            }
        }
        let mut m = Self {
            dim,
            entries,
            repaired: false,
        };
        m.symmetrize();
        m.check_psd()?;
        Ok(m)
    }

    pub fn identity(dim: usize) -> Self {
        let mut entries = vec![0.0; dim * dim];
        for i in 0..dim {
            entries[i * dim + i] = 1.0;
        }
        Self {
            dim,
            entries,
            repaired: false,
        }
    }

    /// 2x2 matrix with off-diagonal `rho`.
    pub fn bivariate(rho: f64) -> Result<Self> {
        Self::new(2, vec![1.0, rho, rho, 1.0])
    }

    /// Builds from a generator of entries `f(i, j)` for `i > j`.
    pub fn from_fn(dim: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let mut entries = vec![0.0; dim * dim];
        for i in 0..dim {
            entries[i * dim + i] = 1.0;
            for j in 0..i {
                let v = f(i, j);
                entries[i * dim + j] = v;
                entries[j * dim + i] = v;
            }
        }
        Self::new(dim, entries)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim + j]
    }

    /// Whether eigenvalue clipping was applied on construction.
    pub fn was_repaired(&self) -> bool {
        self.repaired
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.entries
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.entries.chunks(self.dim).map(|r| r.to_vec()).collect()
    }

    /// Principal sub-matrix on `idx` (in that order). A principal sub-matrix of a
    /// PSD matrix is PSD, so no re-validation is done.
    pub fn submatrix(&self, idx: &[usize]) -> Self {
        let d = idx.len();
        let mut entries = Vec::with_capacity(d * d);
        for &i in idx {
            for &j in idx {
                entries.push(self.get(i, j));
            }
        }
        Self {
            dim: d,
            entries,
            repaired: self.repaired,
        }
    }

    pub fn smallest_eigenvalue(&self) -> f64 {
        let m = DMatrix::from_row_slice(self.dim, self.dim, &self.entries);
        m.symmetric_eigenvalues().min()
    }

    fn symmetrize(&mut self) {
        let n = self.dim;
        for i in 0..n {
            self.entries[i * n + i] = 1.0;
            for j in 0..i {
                let v = 0.5 * (self.entries[i * n + j] + self.entries[j * n + i]);
                self.entries[i * n + j] = v;
                self.entries[j * n + i] = v;
            }
        }
    }

    fn check_psd(&mut self) -> Result<()> {
        if self.dim == 1 {
            return Ok(());
        }
        let n = self.dim;
        let eig = DMatrix::from_row_slice(n, n, &self.entries).symmetric_eigen();
        let min = eig.eigenvalues.min();
        // eigen solver roundoff on exactly singular input
        if min >= -1e-14 {
            return Ok(());
        }
        if min < -PSD_REPAIR_TOL {
            return Err(Error::Matrix(format!(
                "correlation matrix is not positive semi-definite (smallest eigenvalue {min:e})"
            )));
        }
        let mut vals = eig.eigenvalues.clone();
        vals.iter_mut().for_each(|v| *v = v.max(0.0));
        let rebuilt = &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose();
        let scale: Vec<f64> = (0..n).map(|i| rebuilt[(i, i)].sqrt()).collect();
        for i in 0..n {
            for j in 0..n {
                self.entries[i * n + j] = if i == j {
                    1.0
                } else {
                    (rebuilt[(i, j)] / (scale[i] * scale[j])).clamp(-1.0, 1.0)
                };
            }
        }
        self.symmetrize();
        self.repaired = true;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_shapes() {
        assert!(CorrelationMatrix::new(0, vec![]).is_err());
        assert!(CorrelationMatrix::new(2, vec![1.0, 0.5, 0.4, 1.0]).is_err());
        assert!(CorrelationMatrix::new(2, vec![1.0, 1.5, 1.5, 1.0]).is_err());
        assert!(CorrelationMatrix::new(2, vec![0.9, 0.0, 0.0, 1.0]).is_err());
    }

    #[test]
    fn rejects_indefinite() {
        // pairwise valid, jointly impossible
        let r = -0.9;
        let m = CorrelationMatrix::new(3, vec![1.0, r, r, r, 1.0, r, r, r, 1.0]);
        assert!(matches!(m, Err(Error::Matrix(_))));
    }

    #[test]
    fn repairs_tiny_negative_eigenvalue() {
        // rank-deficient matrix perturbed just below PSD
        let eps = 1e-11;
        let r = 0.5 + eps;
        let m = CorrelationMatrix::new(3, vec![1.0, r, -r, r, 1.0, 0.5, -r, 0.5, 1.0]).unwrap();
        assert!(m.smallest_eigenvalue() > -1e-13);
        assert!(m.was_repaired());
    }

    #[test]
    fn singular_perfect_correlation_is_valid() {
        let m = CorrelationMatrix::bivariate(1.0).unwrap();
        assert!(!m.was_repaired());
        assert_eq!(m.get(0, 1), 1.0);
    }
}
