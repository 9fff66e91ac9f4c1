//! Exact enumeration oracles for tiny models.
//!
//! The Gaussian log-partition function sums `2^{N_h}` closed-form terms
//! (the visible integral is Gaussian for each hidden configuration). The
//! Bernoulli one sums over whichever layer is smaller, with the other layer
//! marginalized analytically.

use super::{neg_data_term, DataBatch, Family, RbmParams};
use crate::error::{Error, Result};
use crate::numeric::{log_sum_exp, softmax, softplus};

/// Largest layer size that may be enumerated.
pub const HIDDEN_ENUMERATION_CAP: usize = 20;

/// All binary vectors of length `n` in counting order (bit `k` of the index
/// is entry `k`).
pub fn hidden_configurations(n: usize) -> impl Iterator<Item = Vec<f64>> {
    (0..1u64 << n).map(move |idx| (0..n).map(|k| ((idx >> k) & 1) as f64).collect())
}

fn check_cap(what: &'static str, size: usize) -> Result<()> {
    if size > HIDDEN_ENUMERATION_CAP {
        return Err(Error::OracleScale { what, size, cap: HIDDEN_ENUMERATION_CAP });
    }
    Ok(())
}

/// Unnormalized log-marginal `log Σ_v exp(-E(v, h))` (integral for Gaussian
/// visibles) of every hidden configuration, in [`hidden_configurations`] order.
pub fn hidden_log_weights(params: &RbmParams) -> Result<Vec<f64>> {
    params.validate()?;
    check_cap("N_h", params.n_hidden())?;
    let nv = params.n_visible();
    let constant = match &params.cov {
        None => 0.0,
        Some(cov) => 0.5 * nv as f64 * (2.0 * std::f64::consts::PI).ln() - 0.5 * cov.log_det_precision(nv)?,
    };
    let pb = params.cov.as_ref().map(|c| c.apply_precision(params.b.as_slice()));
    Ok(hidden_configurations(params.n_hidden())
        .map(|h| {
            let wh = params.w.matvec(&h);
            let ha: f64 = h.iter().zip(params.a.iter()).map(|(x, y)| x * y).sum();
            match (&params.cov, &pb) {
                (Some(cov), Some(pb)) => {
                    let pwh = cov.apply_precision(&wh);
                    let cross: f64 = pb.iter().zip(&wh).map(|(x, y)| x * y).sum();
                    let quad: f64 = wh.iter().zip(&pwh).map(|(x, y)| x * y).sum();
                    constant + ha + cross + 0.5 * quad
                }
                _ => ha + wh.iter().zip(params.b.iter()).map(|(x, b)| softplus(x + b)).sum::<f64>(),
            }
        })
        .collect())
}

/// Marginal `p(h)` of every hidden configuration.
pub fn hidden_posterior(params: &RbmParams) -> Result<Vec<f64>> {
    Ok(softmax(&hidden_log_weights(params)?))
}

/// `log Z` by enumeration.
pub fn exact_log_partition(params: &RbmParams) -> Result<f64> {
    if params.family == Family::Bernoulli && params.n_visible() < params.n_hidden() {
        params.validate()?;
        check_cap("N_v", params.n_visible())?;
        let logs: Vec<f64> = hidden_configurations(params.n_visible())
            .map(|v| {
                let vb: f64 = v.iter().zip(params.b.iter()).map(|(x, y)| x * y).sum();
                let wv = params.w.t_matvec(&v);
                vb + wv.iter().zip(params.a.iter()).map(|(x, a)| softplus(x + a)).sum::<f64>()
            })
            .collect();
        return Ok(log_sum_exp(&logs));
    }
    Ok(log_sum_exp(&hidden_log_weights(params)?))
}

/// Exact negative log-likelihood `log Z + g`.
pub fn exact_loss(params: &RbmParams, batch: &DataBatch) -> Result<f64> {
    Ok(exact_log_partition(params)? + neg_data_term(params, batch)?)
}
