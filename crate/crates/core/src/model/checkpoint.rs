//! Bit-exact binary checkpoints.
//!
//! Layout: `RBMCKPT1`, family byte (0 bernoulli, 1 gaussian), covariance kind
//! byte (0..3), `N_v` and `N_h` as little-endian `u32`, then little-endian
//! `f64`s: `W` row-major, `b`, `a`, covariance payload (none, the isotropic
//! variance, `N_v` log-precisions or the `N_v²` precision entries).

use std::path::Path;

use super::{CovarianceKind, CovarianceModel, Family, RbmParams};
use crate::error::{Error, FormatError, Result};
use crate::linalg::{DenseMatrix, DenseVector};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"RBMCKPT1";

pub fn encode_checkpoint(params: &RbmParams) -> Vec<u8> {
    let (nv, nh) = (params.n_visible(), params.n_hidden());
    let mut out = Vec::with_capacity(18 + 8 * (nv * nh + nv + nh + nv * nv));
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.push(match params.family {
        Family::Bernoulli => 0,
        Family::Gaussian => 1,
    });
    out.push(params.covariance_kind().unwrap_or(CovarianceKind::Identity).code());
    out.extend_from_slice(&(nv as u32).to_le_bytes());
    out.extend_from_slice(&(nh as u32).to_le_bytes());
    let mut put = |xs: &[f64]| xs.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes()));
    put(params.w.as_slice());
    put(params.b.as_slice());
    put(params.a.as_slice());
    match &params.cov {
        None | Some(CovarianceModel::Identity) => {}
        Some(CovarianceModel::Isotropic(c)) => put(&[*c]),
        Some(CovarianceModel::DiagonalLog(c)) => put(c.as_slice()),
        Some(CovarianceModel::Full(p)) => put(p.as_slice()),
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<RbmParams> {
    if bytes.len() < 8 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(FormatError::BadMagic("expected RBMCKPT1".into()).into());
    }
    if bytes.len() < 18 {
        return Err(FormatError::Truncated { expected: 18, found: bytes.len() }.into());
    }
    let family = match bytes[8] {
        0 => Family::Bernoulli,
        1 => Family::Gaussian,
        f => return Err(FormatError::BadHeader(format!("unknown family byte {f}")).into()),
    };
    let kind = CovarianceKind::from_code(bytes[9])
        .ok_or_else(|| FormatError::BadHeader(format!("unknown covariance kind {}", bytes[9])))?;
    if family == Family::Bernoulli && kind != CovarianceKind::Identity {
        return Err(FormatError::BadHeader("Bernoulli checkpoint with a covariance kind".into()).into());
    }
    let nv = u32::from_le_bytes(bytes[10..14].try_into().expect("4 bytes")) as usize;
    let nh = u32::from_le_bytes(bytes[14..18].try_into().expect("4 bytes")) as usize;
    if nv == 0 || nh == 0 {
        return Err(FormatError::BadHeader(format!("empty layer ({nv}x{nh})")).into());
    }
    let cov_len = match (family, kind) {
        (Family::Bernoulli, _) | (_, CovarianceKind::Identity) => Some(0),
        (_, CovarianceKind::Isotropic) => Some(1),
        (_, CovarianceKind::DiagonalLog) => Some(nv),
        (_, CovarianceKind::Full) => nv.checked_mul(nv),
    };
    let count = nv
        .checked_mul(nh)
        .and_then(|x| x.checked_add(nv + nh))
        .zip(cov_len)
        .and_then(|(x, c)| x.checked_add(c))
        .and_then(|x| x.checked_mul(8))
        .ok_or_else(|| FormatError::DimensionOverflow(format!("{nv}x{nh}")))?;
    let payload = &bytes[18..];
    if payload.len() < count {
        return Err(FormatError::Truncated { expected: count, found: payload.len() }.into());
    }
    if payload.len() > count {
        return Err(FormatError::TrailingBytes(payload.len() - count).into());
    }
    let values: Vec<f64> =
        payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    if let Some(index) = values.iter().position(|x| !x.is_finite()) {
        return Err(FormatError::DomainViolation { index, value: values[index], domain: "finite" }.into());
    }
    let (w, rest) = values.split_at(nv * nh);
    let (b, rest) = rest.split_at(nv);
    let (a, c) = rest.split_at(nh);
    let w = DenseMatrix::from_vec_unchecked(nv, nh, w.to_vec());
    let b = DenseVector::from_vec_unchecked(b.to_vec());
    let a = DenseVector::from_vec_unchecked(a.to_vec());
    let invalid = |e: Error| Error::from(FormatError::InvalidPayload(e.to_string()));
    match family {
        Family::Bernoulli => RbmParams::bernoulli(w, b, a).map_err(invalid),
        Family::Gaussian => {
            let cov = match kind {
                CovarianceKind::Identity => CovarianceModel::Identity,
                CovarianceKind::Isotropic => CovarianceModel::Isotropic(c[0]),
                CovarianceKind::DiagonalLog => {
                    CovarianceModel::DiagonalLog(DenseVector::from_vec_unchecked(c.to_vec()))
                }
                CovarianceKind::Full => CovarianceModel::Full(DenseMatrix::from_vec_unchecked(nv, nv, c.to_vec())),
            };
            RbmParams::gaussian(w, b, a, cov).map_err(invalid)
        }
    }
}

pub fn write_checkpoint(path: impl AsRef<Path>, params: &RbmParams) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_checkpoint(params)).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<RbmParams> {
    let path = path.as_ref();
    decode_checkpoint(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}
