//! RBM parameterization, energies, conditionals and the data term of the loss.
//!
//! Both families use the unnormalized density `exp(-E(v, h))` with
//!
//! * Bernoulli visibles: `E = -vᵀWh - vᵀb - hᵀa`
//! * Gaussian visibles: `E = -vᵀPWh + ½(v-b)ᵀP(v-b) - hᵀa`, `P = C⁻¹`
//!
//! The negative log-likelihood splits into the log-partition function
//! (see [`exact`]) and the data term [`neg_data_term`].

use std::borrow::Cow;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::{cholesky, log_det_spd, spd_inverse, sym_eigen, DenseMatrix, DenseVector};
use crate::numeric::{sigmoid, softplus};
use crate::sampler::{sample_hidden_batch, RngStream};

pub mod checkpoint;
pub mod exact;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use exact::{exact_log_partition, exact_loss, hidden_posterior, HIDDEN_ENUMERATION_CAP};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    Bernoulli,
    Gaussian,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Bernoulli => "bernoulli",
            Family::Gaussian => "gaussian",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bernoulli" | "brbm" => Ok(Family::Bernoulli),
            "gaussian" | "grbm" => Ok(Family::Gaussian),
            other => Err(Error::Config(format!("unknown model family `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CovarianceKind {
    Identity,
    Isotropic,
    DiagonalLog,
    Full,
}

impl CovarianceKind {
    pub const ALL: [CovarianceKind; 4] =
        [CovarianceKind::Identity, CovarianceKind::Isotropic, CovarianceKind::DiagonalLog, CovarianceKind::Full];

    pub fn code(self) -> u8 {
        match self {
            CovarianceKind::Identity => 0,
            CovarianceKind::Isotropic => 1,
            CovarianceKind::DiagonalLog => 2,
            CovarianceKind::Full => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        CovarianceKind::ALL.get(code as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            CovarianceKind::Identity => "identity",
            CovarianceKind::Isotropic => "isotropic",
            CovarianceKind::DiagonalLog => "diagonal_log",
            CovarianceKind::Full => "full",
        }
    }
}

impl FromStr for CovarianceKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        CovarianceKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown covariance kind `{s}`")))
    }
}

/// Visible-unit covariance `C` of a Gaussian RBM.
#[derive(Debug, Clone, PartialEq)]
pub enum CovarianceModel {
    /// `C = I`; nothing to learn.
    Identity,
    /// `C = c·I`, holding the variance `c > 0`.
    Isotropic(f64),
    /// `C⁻¹ = diag(exp(c_k))`, holding the log-precisions `c_k`.
    DiagonalLog(DenseVector),
    /// Holding the symmetric positive definite precision matrix `C⁻¹`.
    Full(DenseMatrix),
}

impl CovarianceModel {
    /// Default (unit) covariance of the given kind.
    pub fn unit(kind: CovarianceKind, n_visible: usize) -> Self {
        match kind {
            CovarianceKind::Identity => CovarianceModel::Identity,
            CovarianceKind::Isotropic => CovarianceModel::Isotropic(1.0),
            CovarianceKind::DiagonalLog => CovarianceModel::DiagonalLog(DenseVector::zeros(n_visible)),
            CovarianceKind::Full => CovarianceModel::Full(DenseMatrix::identity(n_visible)),
        }
    }

    pub fn kind(&self) -> CovarianceKind {
        match self {
            CovarianceModel::Identity => CovarianceKind::Identity,
            CovarianceModel::Isotropic(_) => CovarianceKind::Isotropic,
            CovarianceModel::DiagonalLog(_) => CovarianceKind::DiagonalLog,
            CovarianceModel::Full(_) => CovarianceKind::Full,
        }
    }

    pub fn validate(&self, n_visible: usize) -> Result<()> {
        match self {
            CovarianceModel::Identity => Ok(()),
            CovarianceModel::Isotropic(c) => {
                if c.is_finite() && *c > 0.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter(format!("isotropic variance must be > 0, got {c}")))
                }
            }
            CovarianceModel::DiagonalLog(c) => {
                if c.len() != n_visible {
                    return Err(Error::dim("diagonal covariance", n_visible, c.len()));
                }
                if !c.is_finite() || c.iter().any(|x| !x.exp().is_finite() || x.exp() == 0.0) {
                    return Err(Error::NonFinite("diagonal log-precision"));
                }
                Ok(())
            }
            CovarianceModel::Full(p) => {
                if p.shape() != (n_visible, n_visible) {
                    return Err(Error::dim(
                        "full precision",
                        format!("{n_visible}x{n_visible}"),
                        format!("{:?}", p.shape()),
                    ));
                }
                if !p.is_symmetric(1e-12) {
                    return Err(Error::InvalidParameter("full precision matrix is not symmetric".into()));
                }
                cholesky(p).map(|_| ())
            }
        }
    }

    /// Diagonal of `C⁻¹`, or `None` for a full precision matrix.
    pub fn precision_diagonal(&self, n_visible: usize) -> Option<Vec<f64>> {
        match self {
            CovarianceModel::Identity => Some(vec![1.0; n_visible]),
            CovarianceModel::Isotropic(c) => Some(vec![1.0 / c; n_visible]),
            CovarianceModel::DiagonalLog(c) => Some(c.iter().map(|x| x.exp()).collect()),
            CovarianceModel::Full(_) => None,
        }
    }

    pub fn precision_matrix(&self, n_visible: usize) -> DenseMatrix {
        match self {
            CovarianceModel::Full(p) => p.clone(),
            other => DenseMatrix::from_diag(&other.precision_diagonal(n_visible).expect("diagonal kind")),
        }
    }

    pub fn covariance_matrix(&self, n_visible: usize) -> Result<DenseMatrix> {
        match self {
            CovarianceModel::Full(p) => spd_inverse(p),
            other => {
                let d = other.precision_diagonal(n_visible).expect("diagonal kind");
                Ok(DenseMatrix::from_diag(&d.iter().map(|x| 1.0 / x).collect::<Vec<_>>()))
            }
        }
    }

    /// `C⁻¹ x`.
    pub fn apply_precision(&self, x: &[f64]) -> Vec<f64> {
        match self {
            CovarianceModel::Identity => x.to_vec(),
            CovarianceModel::Isotropic(c) => x.iter().map(|v| v / c).collect(),
            CovarianceModel::DiagonalLog(c) => x.iter().zip(c.iter()).map(|(v, l)| v * l.exp()).collect(),
            CovarianceModel::Full(p) => p.matvec(x),
        }
    }

    /// `log |C⁻¹|`.
    pub fn log_det_precision(&self, n_visible: usize) -> Result<f64> {
        match self {
            CovarianceModel::Identity => Ok(0.0),
            CovarianceModel::Isotropic(c) => Ok(-(n_visible as f64) * c.ln()),
            CovarianceModel::DiagonalLog(c) => Ok(c.iter().sum()),
            CovarianceModel::Full(p) => log_det_spd(p),
        }
    }

    /// Extreme eigenvalues `(λ_min, λ_max)` of `C⁻¹`.
    pub fn precision_eigen_range(&self, n_visible: usize) -> Result<(f64, f64)> {
        match self {
            CovarianceModel::Full(p) => {
                let e = sym_eigen(p)?;
                Ok((e.min(), e.max()))
            }
            other => {
                let d = other.precision_diagonal(n_visible).expect("diagonal kind");
                let lo = d.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                Ok((lo, hi))
            }
        }
    }
}

/// All parameters of a Bernoulli or Gaussian RBM.
#[derive(Debug, Clone, PartialEq)]
pub struct RbmParams {
    pub family: Family,
    /// `N_v x N_h` coupling.
    pub w: DenseMatrix,
    /// Visible bias, length `N_v`.
    pub b: DenseVector,
    /// Hidden bias, length `N_h`.
    pub a: DenseVector,
    /// Present exactly for the Gaussian family.
    pub cov: Option<CovarianceModel>,
}

impl RbmParams {
    pub fn bernoulli(w: DenseMatrix, b: DenseVector, a: DenseVector) -> Result<Self> {
        let p = RbmParams { family: Family::Bernoulli, w, b, a, cov: None };
        p.validate()?;
        Ok(p)
    }

    pub fn gaussian(w: DenseMatrix, b: DenseVector, a: DenseVector, cov: CovarianceModel) -> Result<Self> {
        let p = RbmParams { family: Family::Gaussian, w, b, a, cov: Some(cov) };
        p.validate()?;
        Ok(p)
    }

    /// All-zero weights and biases with a unit covariance of the given kind
    /// (ignored for the Bernoulli family).
    pub fn zeros(family: Family, n_visible: usize, n_hidden: usize, kind: CovarianceKind) -> Self {
        RbmParams {
            family,
            w: DenseMatrix::zeros(n_visible, n_hidden),
            b: DenseVector::zeros(n_visible),
            a: DenseVector::zeros(n_hidden),
            cov: match family {
                Family::Bernoulli => None,
                Family::Gaussian => Some(CovarianceModel::unit(kind, n_visible)),
            },
        }
    }

    /// Zero biases, unit covariance and `W_ij ~ N(0, scale²)`.
    pub fn random_init(
        family: Family,
        n_visible: usize,
        n_hidden: usize,
        kind: CovarianceKind,
        scale: f64,
        rng: &mut RngStream,
    ) -> Self {
        let mut p = RbmParams::zeros(family, n_visible, n_hidden, kind);
        p.w = DenseMatrix::from_fn(n_visible, n_hidden, |_, _| scale * rng.normal());
        p
    }

    pub fn n_visible(&self) -> usize {
        self.w.rows()
    }

    pub fn n_hidden(&self) -> usize {
        self.w.cols()
    }

    pub fn covariance_kind(&self) -> Option<CovarianceKind> {
        self.cov.as_ref().map(CovarianceModel::kind)
    }

    pub fn validate(&self) -> Result<()> {
        let (nv, nh) = self.w.shape();
        if self.b.len() != nv {
            return Err(Error::dim("visible bias", nv, self.b.len()));
        }
        if self.a.len() != nh {
            return Err(Error::dim("hidden bias", nh, self.a.len()));
        }
        if !self.w.is_finite() || !self.b.is_finite() || !self.a.is_finite() {
            return Err(Error::NonFinite("RBM parameters"));
        }
        match (self.family, &self.cov) {
            (Family::Bernoulli, None) => Ok(()),
            (Family::Bernoulli, Some(_)) => {
                Err(Error::InvalidParameter("the Bernoulli family carries no covariance".into()))
            }
            (Family::Gaussian, None) => {
                Err(Error::InvalidParameter("the Gaussian family needs a covariance model".into()))
            }
            (Family::Gaussian, Some(c)) => c.validate(nv),
        }
    }

    /// Covariance model, with Bernoulli visibles treated as unit precision.
    pub(crate) fn precision(&self) -> &CovarianceModel {
        self.cov.as_ref().unwrap_or(&CovarianceModel::Identity)
    }

    /// Effective coupling `C⁻¹W` seen by the hidden units (`W` itself for
    /// Bernoulli visibles and identity covariance).
    pub fn coupling(&self) -> Cow<'_, DenseMatrix> {
        match self.precision() {
            CovarianceModel::Identity => Cow::Borrowed(&self.w),
            CovarianceModel::Full(p) => Cow::Owned(p.matmul(&self.w)),
            diag => {
                let d = diag.precision_diagonal(self.n_visible()).expect("diagonal kind");
                let mut pw = self.w.clone();
                for (i, di) in d.iter().enumerate() {
                    pw.row_mut(i).iter_mut().for_each(|x| *x *= di);
                }
                Cow::Owned(pw)
            }
        }
    }
}

/// A batch of visible vectors, one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct DataBatch {
    data: DenseMatrix,
}

impl DataBatch {
    pub fn new(data: DenseMatrix) -> Self {
        DataBatch { data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Ok(DataBatch::new(DenseMatrix::from_rows(rows)?))
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

    pub fn into_matrix(self) -> DenseMatrix {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.data.row(i)
    }

    pub fn is_binary(&self) -> bool {
        self.data.as_slice().iter().all(|&x| x == 0.0 || x == 1.0)
    }

    /// Checks that the batch can be scored by `params`.
    pub fn check_against(&self, params: &RbmParams) -> Result<()> {
        if self.n_visible() != params.n_visible() {
            return Err(Error::dim("data batch", params.n_visible(), self.n_visible()));
        }
        if params.family == Family::Bernoulli && !self.is_binary() {
            return Err(Error::InvalidParameter("Bernoulli visibles require binary data".into()));
        }
        Ok(())
    }
}

fn is_binary(x: &[f64]) -> bool {
    x.iter().all(|&v| v == 0.0 || v == 1.0)
}

fn check_visible(params: &RbmParams, v: &[f64], context: &'static str) -> Result<()> {
    if v.len() != params.n_visible() {
        return Err(Error::dim(context, params.n_visible(), v.len()));
    }
    if params.family == Family::Bernoulli && !is_binary(v) {
        return Err(Error::InvalidParameter(format!("{context}: Bernoulli visibles must be binary")));
    }
    Ok(())
}

fn check_hidden(params: &RbmParams, h: &[f64], context: &'static str) -> Result<()> {
    if h.len() != params.n_hidden() {
        return Err(Error::dim(context, params.n_hidden(), h.len()));
    }
    if !is_binary(h) {
        return Err(Error::InvalidParameter(format!("{context}: hidden states must be binary")));
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Energy `E(v, h)` of a joint state.
pub fn energy(params: &RbmParams, v: &[f64], h: &[f64]) -> Result<f64> {
    check_visible(params, v, "energy")?;
    check_hidden(params, h, "energy")?;
    let wh = params.w.matvec(h);
    let ha = dot(h, params.a.as_slice());
    Ok(match &params.cov {
        None => -dot(v, &wh) - dot(v, params.b.as_slice()) - ha,
        Some(cov) => {
            let centered: Vec<f64> = v.iter().zip(params.b.iter()).map(|(x, b)| x - b).collect();
            -dot(&cov.apply_precision(v), &wh) + 0.5 * dot(&centered, &cov.apply_precision(&centered)) - ha
        }
    })
}

/// `p(h_k = 1 | v)` for each hidden unit.
pub fn hidden_probs(params: &RbmParams, v: &[f64]) -> Result<DenseVector> {
    check_visible(params, v, "hidden_probs")?;
    let pv = params.precision().apply_precision(v);
    let pre = params.w.t_matvec(&pv);
    Ok(DenseVector::from_vec_unchecked(pre.iter().zip(params.a.iter()).map(|(x, a)| sigmoid(x + a)).collect()))
}

/// Hidden pre-activations `V·C⁻¹W + 1aᵀ` for a batch of visibles (rows).
pub fn hidden_preactivations_batch(params: &RbmParams, coupling: &DenseMatrix, v: &DenseMatrix) -> DenseMatrix {
    let mut pre = v.matmul(coupling);
    for r in 0..pre.rows() {
        for (x, a) in pre.row_mut(r).iter_mut().zip(params.a.iter()) {
            *x += a;
        }
    }
    pre
}

/// `p(h = 1 | v)` for every row of `v`.
pub fn hidden_probs_batch(params: &RbmParams, v: &DenseMatrix) -> DenseMatrix {
    let coupling = params.coupling();
    hidden_preactivations_batch(params, &coupling, v).map(sigmoid)
}

/// Mean of `p(v | h)` for every row of `h`: `σ(Wh + b)` or `b + Wh`.
pub fn visible_means_batch(params: &RbmParams, h: &DenseMatrix) -> DenseMatrix {
    let mut out = h.matmul_t(&params.w);
    let squash = params.family == Family::Bernoulli;
    for r in 0..out.rows() {
        for (x, b) in out.row_mut(r).iter_mut().zip(params.b.iter()) {
            *x += b;
            if squash {
                *x = sigmoid(*x);
            }
        }
    }
    out
}

/// The conditional `p(v | h)`.
#[derive(Debug, Clone, PartialEq)]
pub enum VisibleConditional {
    /// Independent Bernoulli probabilities `σ(Wh + b)`.
    Bernoulli(DenseVector),
    /// `N(b + Wh, C)`.
    Gaussian { mean: DenseVector, cov: CovarianceModel },
}

impl VisibleConditional {
    pub fn mean(&self) -> &DenseVector {
        match self {
            VisibleConditional::Bernoulli(p) => p,
            VisibleConditional::Gaussian { mean, .. } => mean,
        }
    }
}

pub fn visible_conditional(params: &RbmParams, h: &[f64]) -> Result<VisibleConditional> {
    check_hidden(params, h, "visible_conditional")?;
    let wh = params.w.matvec(h);
    let pre: Vec<f64> = wh.iter().zip(params.b.iter()).map(|(x, b)| x + b).collect();
    Ok(match &params.cov {
        None => VisibleConditional::Bernoulli(DenseVector::from_vec_unchecked(pre.into_iter().map(sigmoid).collect())),
        Some(cov) => VisibleConditional::Gaussian { mean: DenseVector::from_vec_unchecked(pre), cov: cov.clone() },
    })
}

/// Average negative unnormalized log-likelihood of a batch,
/// `-(1/N) Σₙ log Σ_h exp(-E(vₙ, h))`, with the hidden sum in closed form.
pub fn neg_data_term(params: &RbmParams, batch: &DataBatch) -> Result<f64> {
    batch.check_against(params)?;
    let coupling = params.coupling();
    let pre = hidden_preactivations_batch(params, &coupling, batch.matrix());
    let mut total = 0.0;
    for (n, v) in batch.matrix().row_iter().enumerate() {
        let visible_part = match &params.cov {
            None => -dot(v, params.b.as_slice()),
            Some(cov) => {
                let centered: Vec<f64> = v.iter().zip(params.b.iter()).map(|(x, b)| x - b).collect();
                0.5 * dot(&centered, &cov.apply_precision(&centered))
            }
        };
        let hidden_part: f64 = pre.row(n).iter().map(|&x| softplus(x)).sum();
        total += visible_part - hidden_part;
    }
    Ok(total / batch.len() as f64)
}

/// Mean squared distance between each example and the mean of `p(v | h)`
/// for one sampled `h ~ p(h | v)`.
pub fn reconstruction_sse(params: &RbmParams, batch: &DataBatch, seed: u64) -> Result<f64> {
    batch.check_against(params)?;
    let mut streams: Vec<RngStream> = (0..batch.len() as u64).map(|i| RngStream::new(seed).substream(i)).collect();
    let probs = hidden_probs_batch(params, batch.matrix());
    let h = sample_hidden_batch(&probs, &mut streams);
    let recon = visible_means_batch(params, &h);
    let sse: f64 = batch.matrix().as_slice().iter().zip(recon.as_slice()).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(sse / batch.len() as f64)
}
