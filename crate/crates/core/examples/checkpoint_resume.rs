//! Train, save a checkpoint, reload it and keep training step by step with
//! the lower-level `Trainer`.

use ssd_rbm::cli::{
    evaluate, evaluate_params, load_data, train, CdMode, DataSource, RunConfig, Trainer, CHECKPOINT_FILE,
};
use ssd_rbm::data::SyntheticConfig;
use ssd_rbm::model::{read_checkpoint, CovarianceKind, Family};
use ssd_rbm::optimizer::{OptimizerPolicy, UpdateRule};

fn main() -> ssd_rbm::Result<()> {
    let out = std::env::temp_dir().join(format!("ssd-rbm-resume-{}", std::process::id()));
    let cfg = RunConfig {
        family: Family::Gaussian,
        covariance: CovarianceKind::Isotropic,
        n_hidden: 8,
        data: DataSource::Synthetic(SyntheticConfig {
            seed: 2,
            n_visible: 20,
            n_hidden: 8,
            n_train: 400,
            n_test: 100,
            burn_in: 100,
        }),
        cd_mode: CdMode::Pcd,
        policy: OptimizerPolicy::uniform(UpdateRule::Ssd, 0.002),
        iterations: 300,
        eval_interval: 100,
        seed: 2,
        output_dir: Some(out.clone()),
        ..RunConfig::default()
    };
    let first = train(&cfg)?;
    let ckpt = out.join(CHECKPOINT_FILE);
    println!("wrote {}", ckpt.display());

    let data = load_data(&cfg)?;
    let reloaded = evaluate(&ckpt, &data, cfg.seed)?;
    let last = first.records.last().expect("at least the initial row");
    println!(
        "train SSE at the end of training {:.4}, after reload {:.4}",
        last.train_recon_sse, reloaded.train_recon_sse
    );

    let params = read_checkpoint(&ckpt)?;
    let resumed_cfg = RunConfig { seed: 3, ..cfg.clone() };
    let mut trainer = Trainer::with_params(&resumed_cfg, &data.train, params)?;
    for _ in 0..200 {
        trainer.step()?;
    }
    let after = evaluate_params(trainer.params(), &data, cfg.seed)?;
    println!("after 200 more steps: train SSE {:.4}, test SSE {:.4}", after.train_recon_sse, after.test_recon_sse);

    std::fs::remove_dir_all(&out).ok();
    Ok(())
}
