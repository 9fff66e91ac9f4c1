//! Symmetric-matrix helpers used for covariance handling.

use super::DenseMatrix;
use crate::error::{Error, Result};

/// Eigen-decomposition `A = Q · diag(values) · Qᵀ` with ascending eigenvalues.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    /// Eigenvectors stored as columns.
    pub vectors: DenseMatrix,
}

impl SymEigen {
    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        *self.values.last().expect("nonempty spectrum")
    }

    /// `Q · diag(f(values)) · Qᵀ`.
    pub fn rebuild(&self, f: impl Fn(f64) -> f64) -> DenseMatrix {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for i in 0..n {
            for (j, x) in scaled.row_mut(i).iter_mut().enumerate() {
                *x *= f(self.values[j]);
            }
        }
        scaled.matmul_t(&self.vectors)
    }
}

/// Cyclic Jacobi eigenvalue iteration on a symmetric matrix.
pub fn sym_eigen(a: &DenseMatrix) -> Result<SymEigen> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::dim("sym_eigen", "square matrix", format!("{}x{}", a.rows(), a.cols())));
    }
    let mut m = a.symmetrized();
    let mut q = DenseMatrix::identity(n);
    let scale = m.frobenius_norm();
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale || off == 0.0 {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&x, &y| m[(x, x)].total_cmp(&m[(y, y)]));
            let values = order.iter().map(|&i| m[(i, i)]).collect();
            let vectors = DenseMatrix::from_fn(n, n, |i, j| q[(i, order[j])]);
            return Ok(SymEigen { values, vectors });
        }
        for p in 0..n {
            for r in p + 1..n {
                let apr = m[(p, r)];
                if apr == 0.0 {
                    continue;
                }
                let theta = (m[(r, r)] - m[(p, p)]) / (2.0 * apr);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // m <- Jᵀ m J on rows/cols p, r
                for k in 0..n {
                    let (mkp, mkr) = (m[(k, p)], m[(k, r)]);
                    m[(k, p)] = c * mkp - s * mkr;
                    m[(k, r)] = s * mkp + c * mkr;
                }
                for k in 0..n {
                    let (mpk, mrk) = (m[(p, k)], m[(r, k)]);
                    m[(p, k)] = c * mpk - s * mrk;
                    m[(r, k)] = s * mpk + c * mrk;
                }
                for k in 0..n {
                    let (qkp, qkr) = (q[(k, p)], q[(k, r)]);
                    q[(k, p)] = c * qkp - s * qkr;
                    q[(k, r)] = s * qkp + c * qkr;
                }
            }
        }
    }
    Err(Error::SvdNoConvergence { rows: n, cols: n, sweeps: 100 })
}

/// Lower Cholesky factor `L` with `A = L Lᵀ`.
pub fn cholesky(a: &DenseMatrix) -> Result<DenseMatrix> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::dim("cholesky", "square matrix", format!("{}x{}", a.rows(), a.cols())));
    }
    let mut l = DenseMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::NotPositiveDefinite("cholesky pivot"));
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(l)
}

/// `log |A|` for symmetric positive definite `A`.
pub fn log_det_spd(a: &DenseMatrix) -> Result<f64> {
    let l = cholesky(a)?;
    Ok(2.0 * l.diag().iter().map(|x| x.ln()).sum::<f64>())
}

/// Inverse of a symmetric positive definite matrix through its Cholesky factor.
pub fn spd_inverse(a: &DenseMatrix) -> Result<DenseMatrix> {
    let l = cholesky(a)?;
    let n = a.rows();
    // Solve L Y = I, then Lᵀ X = Y column by column.
    let mut inv = DenseMatrix::zeros(n, n);
    for c in 0..n {
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut s = if i == c { 1.0 } else { 0.0 };
            for k in 0..i {
                s -= l[(i, k)] * y[k];
            }
            y[i] = s / l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= l[(k, i)] * inv[(k, c)];
            }
            inv[(i, c)] = s / l[(i, i)];
        }
    }
    Ok(inv.symmetrized())
}

/// Nearest symmetric matrix whose eigenvalues are at least `floor`.
pub fn project_spd(a: &DenseMatrix, floor: f64) -> Result<DenseMatrix> {
    let eig = sym_eigen(a)?;
    if eig.min() >= floor {
        return Ok(a.symmetrized());
    }
    Ok(eig.rebuild(|x| x.max(floor)).symmetrized())
}
