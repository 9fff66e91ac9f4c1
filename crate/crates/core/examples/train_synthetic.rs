//! SGD against stochastic spectral descent on a small synthetic task drawn
//! from a random binary RBM, plus the two hybrid routings.
//!
//! ```text
//! cargo run --release --example train_synthetic [iterations]
//! ```

use ssd_rbm::cli::{load_data, train_on, DataSource, RunConfig};
use ssd_rbm::data::SyntheticConfig;
use ssd_rbm::optimizer::{BlockPolicy, OptimizerPolicy, UpdateRule};

fn main() -> ssd_rbm::Result<()> {
    let iterations = std::env::args().nth(1).map_or(Ok(2000), |s| s.parse()).expect("iterations must be an integer");
    let base = RunConfig {
        n_hidden: 15,
        data: DataSource::Synthetic(SyntheticConfig {
            seed: 3,
            n_visible: 60,
            n_hidden: 15,
            n_train: 1000,
            n_test: 300,
            burn_in: 300,
        }),
        batch_size: 100,
        iterations,
        eval_interval: iterations / 10,
        seed: 3,
        ..RunConfig::default()
    };
    let data = load_data(&base)?;

    let (sgd, ssd) = (BlockPolicy::new(UpdateRule::Sgd, 0.2), BlockPolicy::new(UpdateRule::Ssd, 0.003));
    let runs = [
        ("sgd", OptimizerPolicy::hybrid(sgd, sgd)),
        ("ssd", OptimizerPolicy::hybrid(ssd, ssd)),
        ("ssd_W/sgd", OptimizerPolicy::hybrid(ssd, sgd)),
        ("sgd_W/ssd", OptimizerPolicy::hybrid(sgd, ssd)),
    ];

    let mut curves = Vec::new();
    for (label, policy) in runs {
        let cfg = RunConfig { policy, ..base.clone() };
        let out = train_on(&cfg, &data)?;
        curves.push((label, out.records));
    }

    print!("{:>6}", "iter");
    curves.iter().for_each(|(label, _)| print!(" {label:>10}"));
    println!("   (test reconstruction SSE per example)");
    for row in 0..curves[0].1.len() {
        print!("{:>6}", curves[0].1[row].iter);
        curves.iter().for_each(|(_, r)| print!(" {:>10.3}", r[row].test_recon_sse));
        println!();
    }
    Ok(())
}
