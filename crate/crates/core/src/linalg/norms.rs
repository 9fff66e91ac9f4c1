use super::{svd, DenseMatrix};
use crate::error::Result;

/// The three norms the optimizer and the bound harness need.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    L1,
    L2,
    Inf,
}

pub fn vector_norm(x: &[f64], p: NormKind) -> f64 {
    match p {
        NormKind::L1 => x.iter().map(|v| v.abs()).sum(),
        NormKind::L2 => x.iter().map(|v| v * v).sum::<f64>().sqrt(),
        NormKind::Inf => x.iter().fold(0.0, |m, v| m.max(v.abs())),
    }
}

/// Schatten-p norm: the `p`-norm of the singular values.
pub fn schatten_norm(m: &DenseMatrix, p: NormKind) -> Result<f64> {
    let s = svd(m)?;
    Ok(vector_norm(s.sigma.as_slice(), p))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vector_norm_examples() {
        let x = [1.0, -2.0, 3.0];
        assert_eq!(vector_norm(&x, NormKind::L1), 6.0);
        assert_eq!(vector_norm(&x, NormKind::Inf), 3.0);
        assert!((vector_norm(&x, NormKind::L2) - 14f64.sqrt()).abs() < 1e-15);
        for p in [NormKind::L1, NormKind::L2, NormKind::Inf] {
            assert_eq!(vector_norm(&[0.0; 4], p), 0.0);
        }
    }

    #[test]
    fn schatten_norm_of_diagonal() {
        let m = DenseMatrix::from_diag(&[3.0, 1.0]);
        assert!((schatten_norm(&m, NormKind::Inf).unwrap() - 3.0).abs() < 1e-14);
        assert!((schatten_norm(&m, NormKind::L1).unwrap() - 4.0).abs() < 1e-14);
    }
}
