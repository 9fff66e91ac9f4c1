//! Wall-clock cost of a spectral update relative to a plain gradient step,
//! at the size of a 28x28-pixel image model.
//!
//! ```text
//! cargo run --release --example bench_overhead [iterations]
//! ```

use ssd_rbm::cli::{bench, RunConfig};
use ssd_rbm::data::{binarize, Binarize, Dataset, Domain};
use ssd_rbm::linalg::DenseMatrix;
use ssd_rbm::model::{CovarianceKind, Family};
use ssd_rbm::optimizer::{OptimizerPolicy, SvdMode, UpdateRule};
use ssd_rbm::sampler::RngStream;

fn main() -> ssd_rbm::Result<()> {
    let iters = std::env::args().nth(1).map_or(Ok(50), |s| s.parse()).expect("iterations must be an integer");
    let mut rng = RngStream::new(1);
    let pixels = Dataset::new("noise", DenseMatrix::from_fn(500, 784, |_, _| rng.uniform()), Domain::Unit)?;
    let binary = binarize(&pixels, Binarize::Stochastic(2))?;

    println!("optimizer,family,ms_per_1k");
    for (family, kind) in
        [(Family::Gaussian, CovarianceKind::DiagonalLog), (Family::Bernoulli, CovarianceKind::Identity)]
    {
        let policies = [
            OptimizerPolicy::uniform(UpdateRule::Sgd, 1e-3),
            OptimizerPolicy::uniform(UpdateRule::Ssd, 1e-4),
            OptimizerPolicy {
                svd_mode: SvdMode::Randomized { target_rank: 10, oversample: 5 },
                ..OptimizerPolicy::uniform(UpdateRule::Ssd, 1e-4)
            },
        ];
        for policy in policies {
            let randomized = matches!(policy.svd_mode, SvdMode::Randomized { .. });
            let cfg = RunConfig {
                family,
                covariance: kind,
                n_hidden: 50,
                batch_size: 100,
                cd_k: 10,
                policy,
                ..RunConfig::default()
            };
            let mut r = bench(&cfg, &binary, iters)?;
            if randomized {
                r.optimizer.push_str("+rsvd");
            }
            println!("{}", r.csv_row());
        }
    }
    Ok(())
}
