//! Datasets: synthetic generation, IDX and RBMMAT1 loaders, binarization and
//! minibatching.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;

use crate::error::{Error, FormatError, Result};
use crate::linalg::{DenseMatrix, DenseVector};
use crate::model::{DataBatch, Family, RbmParams};
use crate::sampler::{ChainState, GibbsKernel, RngStream};

pub const MATRIX_MAGIC: &[u8; 8] = b"RBMMAT1\n";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Binary,
    Unit,
    Real,
}

impl Domain {
    pub fn name(self) -> &'static str {
        match self {
            Domain::Binary => "binary",
            Domain::Unit => "unit",
            Domain::Real => "real",
        }
    }

    pub fn contains(self, x: f64) -> bool {
        match self {
            Domain::Binary => x == 0.0 || x == 1.0,
            Domain::Unit => (0.0..=1.0).contains(&x),
            Domain::Real => x.is_finite(),
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Domain {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binary" => Ok(Domain::Binary),
            "unit" => Ok(Domain::Unit),
            "real" => Ok(Domain::Real),
            other => Err(Error::Config(format!("unknown value domain `{other}`"))),
        }
    }
}

/// Examples stored densely, one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    name: String,
    domain: Domain,
    data: DenseMatrix,
}

fn check_domain(values: &[f64], domain: Domain) -> std::result::Result<(), FormatError> {
    match values.iter().position(|&x| !x.is_finite() || !domain.contains(x)) {
        Some(index) => Err(FormatError::DomainViolation { index, value: values[index], domain: domain.name() }),
        None => Ok(()),
    }
}

impl Dataset {
    pub fn new(name: impl Into<String>, data: DenseMatrix, domain: Domain) -> Result<Self> {
        if data.rows() == 0 || data.cols() == 0 {
            return Err(Error::InvalidParameter("a dataset needs at least one example and one unit".into()));
        }
        check_domain(data.as_slice(), domain)?;
        Ok(Dataset { name: name.into(), domain, data })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn len(&self) -> usize {
        self.data.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.rows() == 0
    }

    pub fn n_visible(&self) -> usize {
        self.data.cols()
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.data.row(i)
    }

    /// The whole dataset as one batch.
    pub fn to_batch(&self) -> DataBatch {
        DataBatch::new(self.data.clone())
    }

    /// Rows `indices`, in that order.
    pub fn gather(&self, indices: &[usize]) -> DataBatch {
        let n = self.n_visible();
        let mut out = Vec::with_capacity(indices.len() * n);
        for &i in indices {
            out.extend_from_slice(self.data.row(i));
        }
        DataBatch::new(DenseMatrix::from_vec_unchecked(indices.len(), n, out))
    }

    /// The first `n` examples.
    pub fn head(&self, n: usize) -> Result<Dataset> {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        Dataset::new(self.name.clone(), self.gather(&idx).into_matrix(), self.domain)
    }
}

/// Settings of the synthetic benchmark task.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub n_visible: usize,
    pub n_hidden: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub burn_in: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig { seed: 0, n_visible: 100, n_hidden: 25, n_train: 4000, n_test: 1000, burn_in: 1000 }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub train: Dataset,
    pub test: Dataset,
    pub truth: RbmParams,
}

const TRUTH_STREAM: u64 = 1;
const SAMPLE_STREAM: u64 = 2;

/// Ground-truth Bernoulli RBM with `W_ij ~ N(0, 0.5)` and zero biases. It
/// depends only on `(seed, N_v, N_h)`.
pub fn synthetic_truth(seed: u64, n_visible: usize, n_hidden: usize) -> Result<RbmParams> {
    if n_visible == 0 || n_hidden == 0 {
        return Err(Error::InvalidParameter("synthetic model needs N_v, N_h >= 1".into()));
    }
    let mut rng = RngStream::new(seed).substream(TRUTH_STREAM);
    let sd = 0.5f64.sqrt();
    let w = DenseMatrix::from_fn(n_visible, n_hidden, |_, _| sd * rng.normal());
    RbmParams::bernoulli(w, DenseVector::zeros(n_visible), DenseVector::zeros(n_hidden))
}

/// Draws `n` examples from `truth`, each from its own chain started at
/// uniform random bits and run for `burn_in` Gibbs sweeps.
pub fn sample_examples(truth: &RbmParams, n: usize, burn_in: usize, rng: &RngStream) -> Result<DenseMatrix> {
    if truth.family != Family::Bernoulli {
        return Err(Error::InvalidParameter("synthetic sampling uses a Bernoulli model".into()));
    }
    let kernel = GibbsKernel::new(truth)?;
    let mut streams: Vec<RngStream> = (0..n as u64).map(|i| rng.substream(i)).collect();
    let nv = truth.n_visible();
    let mut visible = DenseMatrix::zeros(n, nv);
    for (r, s) in streams.iter_mut().enumerate() {
        for x in visible.row_mut(r) {
            *x = f64::from(s.bernoulli(0.5) as u8);
        }
    }
    let mut state = ChainState { visible, hidden: DenseMatrix::zeros(n, truth.n_hidden()) };
    for _ in 0..burn_in {
        state = kernel.step(&state, &mut streams);
    }
    Ok(state.visible)
}

pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<SyntheticData> {
    if cfg.n_train == 0 || cfg.n_test == 0 {
        return Err(Error::InvalidParameter("synthetic split sizes must be >= 1".into()));
    }
    let truth = synthetic_truth(cfg.seed, cfg.n_visible, cfg.n_hidden)?;
    let rng = RngStream::new(cfg.seed).substream(SAMPLE_STREAM);
    let all = sample_examples(&truth, cfg.n_train + cfg.n_test, cfg.burn_in, &rng)?;
    let nv = cfg.n_visible;
    let (train, test) = all.as_slice().split_at(cfg.n_train * nv);
    Ok(SyntheticData {
        train: Dataset::new("synthetic-train", DenseMatrix::new(cfg.n_train, nv, train.to_vec())?, Domain::Binary)?,
        test: Dataset::new("synthetic-test", DenseMatrix::new(cfg.n_test, nv, test.to_vec())?, Domain::Binary)?,
        truth,
    })
}

/// Parses an IDX unsigned-byte tensor (`00 00 08 ndim`, big-endian `u32`
/// dimensions, `ndim ≥ 2`). The first dimension indexes examples, the rest
/// are flattened row-major; bytes are scaled by `1/255`.
pub fn parse_idx(name: &str, bytes: &[u8]) -> Result<Dataset> {
    if bytes.len() < 4 {
        return Err(FormatError::Truncated { expected: 4, found: bytes.len() }.into());
    }
    if bytes[0] != 0 || bytes[1] != 0 || bytes[2] != 0x08 {
        return Err(
            FormatError::BadMagic(format!("IDX magic {:02x?} is not an unsigned-byte tensor", &bytes[..4])).into()
        );
    }
    let ndim = bytes[3] as usize;
    if ndim < 2 {
        return Err(FormatError::BadHeader(format!("IDX image tensors need >= 2 dimensions, got {ndim}")).into());
    }
    let header = 4 + 4 * ndim;
    if bytes.len() < header {
        return Err(FormatError::Truncated { expected: header, found: bytes.len() }.into());
    }
    let dims: Vec<usize> =
        bytes[4..header].chunks_exact(4).map(|c| u32::from_be_bytes(c.try_into().expect("4 bytes")) as usize).collect();
    if dims.contains(&0) {
        return Err(FormatError::BadHeader(format!("zero IDX dimension in {dims:?}")).into());
    }
    let overflow = || FormatError::DimensionOverflow(format!("IDX dimensions {dims:?}"));
    let nv = dims[1..].iter().try_fold(1usize, |acc, &d| acc.checked_mul(d)).ok_or_else(overflow)?;
    let total = dims[0].checked_mul(nv).ok_or_else(overflow)?;
    let payload = &bytes[header..];
    if payload.len() < total {
        return Err(FormatError::Truncated { expected: total, found: payload.len() }.into());
    }
    if payload.len() > total {
        return Err(FormatError::TrailingBytes(payload.len() - total).into());
    }
    let values = payload.iter().map(|&b| f64::from(b) / 255.0).collect();
    Dataset::new(name, DenseMatrix::new(dims[0], nv, values)?, Domain::Unit)
}

pub fn load_idx(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_idx(&path.display().to_string(), &bytes)
}

/// Parses the portable RBMMAT1 format: `RBMMAT1\n`, an ASCII line
/// `N N_v domain\n`, then `N·N_v` little-endian `f32`s.
pub fn parse_matrix(name: &str, bytes: &[u8]) -> Result<Dataset> {
    if bytes.len() < MATRIX_MAGIC.len() || &bytes[..MATRIX_MAGIC.len()] != MATRIX_MAGIC {
        return Err(FormatError::BadMagic("expected RBMMAT1".into()).into());
    }
    let rest = &bytes[MATRIX_MAGIC.len()..];
    let end = rest
        .iter()
        .take(64)
        .position(|&b| b == b'\n')
        .ok_or_else(|| FormatError::BadHeader("missing header line".into()))?;
    let line = std::str::from_utf8(&rest[..end]).map_err(|_| FormatError::BadHeader("header is not UTF-8".into()))?;
    let fields: Vec<&str> = line.split(' ').collect();
    let [n, nv, domain] = fields.as_slice() else {
        return Err(FormatError::BadHeader(format!("expected `N N_v domain`, got `{line}`")).into());
    };
    let parse_dim = |s: &str| -> std::result::Result<usize, FormatError> {
        if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
            return Err(FormatError::BadHeader(format!("bad dimension `{s}`")));
        }
        match s.parse::<usize>() {
            Ok(0) => Err(FormatError::BadHeader("zero dimension".into())),
            Ok(v) => Ok(v),
            Err(_) => Err(FormatError::DimensionOverflow(s.to_string())),
        }
    };
    let (n, nv) = (parse_dim(n)?, parse_dim(nv)?);
    let domain: Domain = domain.parse().map_err(|_| FormatError::BadHeader(format!("unknown domain `{domain}`")))?;
    let total = n
        .checked_mul(nv)
        .and_then(|x| x.checked_mul(4))
        .ok_or_else(|| FormatError::DimensionOverflow(format!("{n} x {nv}")))?;
    let payload = &rest[end + 1..];
    if payload.len() < total {
        return Err(FormatError::Truncated { expected: total, found: payload.len() }.into());
    }
    if payload.len() > total {
        return Err(FormatError::TrailingBytes(payload.len() - total).into());
    }
    let values: Vec<f64> =
        payload.chunks_exact(4).map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes")))).collect();
    check_domain(&values, domain)?;
    Dataset::new(name, DenseMatrix::from_vec_unchecked(n, nv, values), domain)
}

pub fn load_matrix_file(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_matrix(&path.display().to_string(), &bytes)
}

/// RBMMAT1 encoding. Values are narrowed to `f32`.
pub fn encode_matrix(ds: &Dataset) -> Vec<u8> {
    let mut out = MATRIX_MAGIC.to_vec();
    out.extend_from_slice(format!("{} {} {}\n", ds.len(), ds.n_visible(), ds.domain()).as_bytes());
    for &x in ds.matrix().as_slice() {
        out.extend_from_slice(&(x as f32).to_le_bytes());
    }
    out
}

pub fn write_matrix_file(path: impl AsRef<Path>, ds: &Dataset) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_matrix(ds)).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Binarize {
    /// 1 iff the value is at least the threshold.
    Threshold(f64),
    /// Bernoulli(value) per pixel.
    Stochastic(u64),
}

pub fn binarize(ds: &Dataset, mode: Binarize) -> Result<Dataset> {
    if ds.domain() != Domain::Unit {
        return Err(Error::InvalidParameter(format!("binarization needs unit-interval data, got {}", ds.domain())));
    }
    let data = match mode {
        Binarize::Threshold(t) => ds.matrix().map(|x| f64::from((x >= t) as u8)),
        Binarize::Stochastic(seed) => {
            let mut rng = RngStream::new(seed);
            let vals = ds.matrix().as_slice().iter().map(|&x| f64::from(rng.bernoulli(x) as u8)).collect();
            DenseMatrix::new(ds.len(), ds.n_visible(), vals)?
        }
    };
    Dataset::new(ds.name(), data, Domain::Binary)
}

/// Order of examples in `epoch`, a pure function of `(seed, epoch)`.
pub fn epoch_order(n: usize, seed: u64, epoch: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut RngStream::new(seed).substream(epoch));
    idx
}

/// Shuffled minibatches covering every example once; the last may be short.
pub fn minibatches(ds: &Dataset, batch_size: usize, seed: u64, epoch: u64) -> Result<Vec<DataBatch>> {
    if batch_size == 0 {
        return Err(Error::InvalidParameter("batch size must be >= 1".into()));
    }
    Ok(epoch_order(ds.len(), seed, epoch).chunks(batch_size).map(|c| ds.gather(c)).collect())
}
