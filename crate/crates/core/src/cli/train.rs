//! The training loop, evaluation and benchmarking.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use super::config::{BinarizeMode, CdMode, DataSource, RunConfig};
use crate::data::{self, Binarize, Dataset};
use crate::error::{Error, Result};
use crate::gradient::{estimate_gradients, GradientSet, PhaseStats};
use crate::linalg::svd;
use crate::model::{read_checkpoint, reconstruction_sse, write_checkpoint, DataBatch, RbmParams};
use crate::optimizer::{apply_update, step_size, MomentumState};
use crate::sampler::{cd_k, PersistentChains, RngStream};

pub const METRICS_HEADER: &str = "iter,epoch,wallclock_ms,train_recon_sse,test_recon_sse,grad_w_nuclear,step_size";
pub const BENCH_HEADER: &str = "optimizer,family,ms_per_1k";

// Substreams of the run seed.
const INIT: u64 = 0;
const ORDER: u64 = 1;
const CHAINS: u64 = 2;
const PERSISTENT: u64 = 3;
const EVAL: u64 = 4;
const BINARIZE: u64 = 5;

/// One row of the metrics CSV. `test_recon_sse` is NaN without a test set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRecord {
    pub iter: u64,
    pub epoch: u64,
    pub wallclock_ms: u64,
    pub train_recon_sse: f64,
    pub test_recon_sse: f64,
    pub grad_w_nuclear: f64,
    pub step_size: f64,
}

impl MetricsRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.iter,
            self.epoch,
            self.wallclock_ms,
            self.train_recon_sse,
            self.test_recon_sse,
            self.grad_w_nuclear,
            self.step_size
        )
    }
}

/// Training and held-out examples, already binarized if requested.
#[derive(Debug, Clone)]
pub struct TrainData {
    pub train: Dataset,
    pub test: Option<Dataset>,
}

pub fn load_data(cfg: &RunConfig) -> Result<TrainData> {
    let (train, test) = match &cfg.data {
        DataSource::Synthetic(s) => {
            let d = data::generate_synthetic(s)?;
            (d.train, Some(d.test))
        }
        DataSource::Idx { train, test } => (data::load_idx(train)?, test.as_ref().map(data::load_idx).transpose()?),
        DataSource::Matrix { train, test } => {
            (data::load_matrix_file(train)?, test.as_ref().map(data::load_matrix_file).transpose()?)
        }
    };
    if let Some(t) = &test {
        if t.n_visible() != train.n_visible() {
            return Err(Error::dim("test set width", train.n_visible(), t.n_visible()));
        }
    }
    let root = RngStream::new(cfg.seed).substream(BINARIZE);
    let bin = |ds: Dataset, id: u64| -> Result<Dataset> {
        match cfg.binarize {
            BinarizeMode::None => Ok(ds),
            BinarizeMode::Threshold(t) => data::binarize(&ds, Binarize::Threshold(t)),
            BinarizeMode::Stochastic => data::binarize(&ds, Binarize::Stochastic(root.substream(id).key())),
        }
    };
    Ok(TrainData { train: bin(train, 0)?, test: test.map(|t| bin(t, 1)).transpose()? })
}

/// Seeds of the reconstruction draws for the training and test sets.
pub fn eval_seeds(seed: u64) -> (u64, u64) {
    let s = RngStream::new(seed).substream(EVAL);
    (s.substream(0).key(), s.substream(1).key())
}

fn recon_sse(params: &RbmParams, batch: Option<&DataBatch>, seed: u64) -> Result<f64> {
    batch.map_or(Ok(f64::NAN), |b| reconstruction_sse(params, b, seed))
}

/// Initial parameters: the configured checkpoint, else small random weights.
pub fn initial_params(cfg: &RunConfig, n_visible: usize) -> Result<RbmParams> {
    match &cfg.init_checkpoint {
        Some(path) => {
            let p = read_checkpoint(path)?;
            if p.family != cfg.family {
                return Err(Error::Config(format!(
                    "checkpoint family {} differs from configured {}",
                    p.family, cfg.family
                )));
            }
            if p.n_visible() != n_visible || p.n_hidden() != cfg.n_hidden {
                return Err(Error::dim(
                    "checkpoint shape",
                    format!("{n_visible}x{}", cfg.n_hidden),
                    format!("{}x{}", p.n_visible(), p.n_hidden()),
                ));
            }
            if p.covariance_kind().is_some_and(|k| k != cfg.covariance) {
                return Err(Error::Config("checkpoint covariance kind differs from configuration".into()));
            }
            Ok(p)
        }
        None => {
            let mut rng = RngStream::new(cfg.seed).substream(INIT);
            Ok(RbmParams::random_init(cfg.family, n_visible, cfg.n_hidden, cfg.covariance, cfg.init_scale, &mut rng))
        }
    }
}

/// Stepwise access to the training loop: minibatch, CD-k or PCD-k
/// statistics, gradient estimate, parameter update.
pub struct Trainer<'a> {
    cfg: &'a RunConfig,
    train: &'a Dataset,
    params: RbmParams,
    momentum: MomentumState,
    chains: Option<PersistentChains>,
    batches: Vec<DataBatch>,
    order_seed: u64,
    chain_root: RngStream,
    iter: u64,
}

impl<'a> Trainer<'a> {
    pub fn new(cfg: &'a RunConfig, train: &'a Dataset) -> Result<Self> {
        cfg.validate()?;
        let params = initial_params(cfg, train.n_visible())?;
        Trainer::with_params(cfg, train, params)
    }

    pub fn with_params(cfg: &'a RunConfig, train: &'a Dataset, params: RbmParams) -> Result<Self> {
        params.validate()?;
        let root = RngStream::new(cfg.seed);
        let order_seed = root.substream(ORDER).key();
        let batches = data::minibatches(train, cfg.batch_size, order_seed, 0)?;
        batches[0].check_against(&params)?;
        let chains = match cfg.cd_mode {
            CdMode::Cd => None,
            CdMode::Pcd => {
                Some(PersistentChains::from_reconstruction(&params, &batches[0], &mut root.substream(PERSISTENT))?)
            }
        };
        Ok(Trainer {
            cfg,
            train,
            momentum: MomentumState::zeros(&params),
            params,
            chains,
            batches,
            order_seed,
            chain_root: root.substream(CHAINS),
            iter: 0,
        })
    }

    pub fn params(&self) -> &RbmParams {
        &self.params
    }

    pub fn into_params(self) -> RbmParams {
        self.params
    }

    /// Updates performed so far.
    pub fn iter(&self) -> u64 {
        self.iter
    }

    /// Epoch of the next minibatch.
    pub fn epoch(&self) -> u64 {
        self.iter / self.batches.len() as u64
    }

    /// One update. Returns the gradient estimate it followed.
    pub fn step(&mut self) -> Result<GradientSet> {
        let n_batches = self.batches.len() as u64;
        let (epoch, slot) = (self.iter / n_batches, (self.iter % n_batches) as usize);
        if slot == 0 && epoch > 0 {
            self.batches = data::minibatches(self.train, self.cfg.batch_size, self.order_seed, epoch)?;
        }
        let batch = &self.batches[slot];
        let samples = match &mut self.chains {
            Some(chains) => chains.advance(&self.params, batch, self.cfg.cd_k)?,
            None => {
                let s = self.chain_root.substream(self.iter);
                let mut streams: Vec<RngStream> = (0..batch.len() as u64).map(|i| s.substream(i)).collect();
                cd_k(&self.params, batch, self.cfg.cd_k, &mut streams)?
            }
        };
        let positive = PhaseStats::from_samples(&self.params, batch.matrix(), &samples.data_hidden_probs)?;
        let negative = PhaseStats::from_samples(&self.params, &samples.model_visible, &samples.model_hidden_probs)?;
        let grads = estimate_gradients(&self.params, &positive, &negative)?;
        if !grads.is_finite() {
            return Err(Error::NonFinite("gradient estimate"));
        }
        let (params, momentum) = apply_update(&self.params, &grads, &self.cfg.policy, &self.momentum, self.iter)?;
        self.params = params;
        self.momentum = momentum;
        self.iter += 1;
        Ok(grads)
    }
}

/// Result of [`train`].
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: RbmParams,
    pub records: Vec<MetricsRecord>,
    pub metrics_path: Option<PathBuf>,
    pub checkpoint_path: Option<PathBuf>,
}

/// Output files of a run directory.
pub const METRICS_FILE: &str = "metrics.csv";
pub const TIMING_FILE: &str = "timing.csv";
pub const CHECKPOINT_FILE: &str = "final.ckpt";

struct MetricsSink {
    metrics: BufWriter<File>,
    timing: Option<BufWriter<File>>,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

impl MetricsSink {
    fn open(dir: &Path, deterministic: bool) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut sink = MetricsSink {
            metrics: create(&dir.join(METRICS_FILE))?,
            timing: deterministic.then(|| create(&dir.join(TIMING_FILE))).transpose()?,
        };
        sink.line(true, METRICS_HEADER)?;
        if sink.timing.is_some() {
            sink.line(false, "iter,wallclock_ms")?;
        }
        Ok(sink)
    }

    fn line(&mut self, metrics: bool, text: &str) -> Result<()> {
        let w = if metrics { &mut self.metrics } else { self.timing.as_mut().expect("timing sidecar") };
        writeln!(w, "{text}")
            .and_then(|()| w.flush())
            .map_err(|e| Error::io(Path::new(if metrics { METRICS_FILE } else { TIMING_FILE }), e))
    }

    /// Appends and flushes one row. Deterministic runs log zero wall-clock
    /// time in the metrics and the real time in the sidecar.
    fn record(&mut self, r: &MetricsRecord) -> Result<()> {
        match self.timing.is_some() {
            true => {
                self.line(true, &MetricsRecord { wallclock_ms: 0, ..*r }.csv_row())?;
                self.line(false, &format!("{},{}", r.iter, r.wallclock_ms))
            }
            false => self.line(true, &r.csv_row()),
        }
    }
}

/// Loads the configured data and trains. See [`train_on`].
pub fn train(cfg: &RunConfig) -> Result<TrainOutcome> {
    let data = load_data(cfg)?;
    train_on(cfg, &data)
}

/// Runs the configured iteration budget, recording metrics at iteration 0,
/// every `eval_interval` updates and after the last update. With an output
/// directory, rows are flushed to `metrics.csv` as they are produced and
/// the final parameters go to `final.ckpt`.
pub fn train_on(cfg: &RunConfig, data: &TrainData) -> Result<TrainOutcome> {
    let start = Instant::now();
    let mut trainer = Trainer::new(cfg, &data.train)?;
    let train_batch = data.train.to_batch();
    let test_batch = data.test.as_ref().map(Dataset::to_batch);
    let (train_seed, test_seed) = eval_seeds(cfg.seed);
    let mut sink = cfg.output_dir.as_deref().map(|d| MetricsSink::open(d, cfg.deterministic)).transpose()?;
    let mut records = Vec::new();
    let mut emit = |trainer: &Trainer, grad_w_nuclear: f64, step: f64, epoch: u64| -> Result<()> {
        let params = trainer.params();
        let r = MetricsRecord {
            iter: trainer.iter(),
            epoch,
            wallclock_ms: start.elapsed().as_millis() as u64,
            train_recon_sse: reconstruction_sse(params, &train_batch, train_seed)?,
            test_recon_sse: recon_sse(params, test_batch.as_ref(), test_seed)?,
            grad_w_nuclear,
            step_size: step,
        };
        if let Some(s) = sink.as_mut() {
            s.record(&r)?;
        }
        records.push(r);
        Ok(())
    };

    emit(&trainer, 0.0, step_size(cfg.policy.schedule, cfg.policy.w.step, 0), 0)?;
    while trainer.iter() < cfg.iterations {
        let (iter, epoch) = (trainer.iter(), trainer.epoch());
        let grads = trainer.step()?;
        let done = trainer.iter();
        if done % cfg.eval_interval == 0 || done == cfg.iterations {
            let nuclear = svd(&grads.dw)?.nuclear_norm();
            emit(&trainer, nuclear, step_size(cfg.policy.schedule, cfg.policy.w.step, iter), epoch)?;
        }
    }
    let params = trainer.into_params();
    let checkpoint_path = match &cfg.output_dir {
        Some(dir) => {
            let path = dir.join(CHECKPOINT_FILE);
            write_checkpoint(&path, &params)?;
            Some(path)
        }
        None => None,
    };
    Ok(TrainOutcome {
        params,
        records,
        metrics_path: cfg.output_dir.as_ref().map(|d| d.join(METRICS_FILE)),
        checkpoint_path,
    })
}

/// Reconstruction SSE of `params` on the configured data, using the same
/// reconstruction draws as training metrics under `seed`.
pub fn evaluate_params(params: &RbmParams, data: &TrainData, seed: u64) -> Result<MetricsRecord> {
    let (train_seed, test_seed) = eval_seeds(seed);
    Ok(MetricsRecord {
        iter: 0,
        epoch: 0,
        wallclock_ms: 0,
        train_recon_sse: reconstruction_sse(params, &data.train.to_batch(), train_seed)?,
        test_recon_sse: recon_sse(params, data.test.as_ref().map(Dataset::to_batch).as_ref(), test_seed)?,
        grad_w_nuclear: 0.0,
        step_size: 0.0,
    })
}

pub fn evaluate(checkpoint: impl AsRef<Path>, data: &TrainData, seed: u64) -> Result<MetricsRecord> {
    evaluate_params(&read_checkpoint(checkpoint)?, data, seed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub optimizer: String,
    pub family: String,
    pub ms_per_1k: f64,
}

impl BenchReport {
    pub fn csv_row(&self) -> String {
        format!("{},{},{:.3}", self.optimizer, self.family, self.ms_per_1k)
    }
}

/// Wall-clock cost of `iters` training updates, excluding setup and
/// evaluation, scaled to 1000 updates.
pub fn bench(cfg: &RunConfig, train: &Dataset, iters: u64) -> Result<BenchReport> {
    if iters == 0 {
        return Err(Error::InvalidParameter("bench needs at least one iteration".into()));
    }
    let mut trainer = Trainer::new(cfg, train)?;
    let start = Instant::now();
    for _ in 0..iters {
        trainer.step()?;
    }
    let ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(BenchReport {
        optimizer: cfg.optimizer_label(),
        family: cfg.family.name().to_string(),
        ms_per_1k: ms * 1000.0 / iters as f64,
    })
}
