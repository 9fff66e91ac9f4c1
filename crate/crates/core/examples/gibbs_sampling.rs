//! Contrastive divergence and persistent chains against the exact model
//! expectation of `v hᵀ` on a small binary RBM.

use ssd_rbm::gradient::PhaseStats;
use ssd_rbm::linalg::DenseMatrix;
use ssd_rbm::model::{CovarianceKind, DataBatch, Family, RbmParams};
use ssd_rbm::sampler::{cd_k, PersistentChains, RngStream};

fn max_gap(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    a.sub(b).max_abs()
}

fn main() -> ssd_rbm::Result<()> {
    let mut rng = RngStream::new(5);
    let params = RbmParams::random_init(Family::Bernoulli, 8, 4, CovarianceKind::Identity, 1.0, &mut rng);
    let exact = PhaseStats::exact_model(&params)?;

    let chains = 2000;
    let data = DataBatch::new(DenseMatrix::from_fn(chains, 8, |_, _| f64::from(rng.bernoulli(0.5) as u8)));

    println!("{:>6} {:>14}", "k", "max |E_cd - E|");
    for k in [1, 5, 25, 100] {
        let mut streams = rng.split(chains);
        let s = cd_k(&params, &data, k, &mut streams)?;
        let stats = PhaseStats::from_samples(&params, &s.model_visible, &s.model_hidden_probs)?;
        println!("{k:>6} {:>14.4}", max_gap(&stats.mean_vh, &exact.mean_vh));
    }

    let mut pcd = PersistentChains::from_reconstruction(&params, &data, &mut rng)?;
    println!("persistent chains, 5 sweeps per call:");
    for call in 1..=4 {
        let s = pcd.advance(&params, &data, 5)?;
        let stats = PhaseStats::from_samples(&params, &s.model_visible, &s.model_hidden_probs)?;
        println!("{:>6} {:>14.4}", call * 5, max_gap(&stats.mean_vh, &exact.mean_vh));
    }
    Ok(())
}
