//! Block Gibbs sampling, contrastive divergence and persistent chains.
//!
//! Every chain owns an [`RngStream`], so results depend only on the seed and
//! the chain index.

mod rng;

pub use rng::RngStream;

use std::borrow::Cow;

use crate::error::{Error, Result};
use crate::linalg::{cholesky, DenseMatrix};
use crate::model::{hidden_preactivations_batch, visible_means_batch, CovarianceModel, DataBatch, Family, RbmParams};
use crate::numeric::sigmoid;

/// Joint state of a batch of chains, one chain per row.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub visible: DenseMatrix,
    pub hidden: DenseMatrix,
}

impl ChainState {
    pub fn len(&self) -> usize {
        self.visible.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.visible.rows() == 0
    }
}

/// Output of a CD-k or PCD-k pass.
#[derive(Debug, Clone)]
pub struct PhaseSamples {
    /// `p(h = 1 | v)` at the data.
    pub data_hidden_probs: DenseMatrix,
    /// Visible states at the end of the negative chains.
    pub model_visible: DenseMatrix,
    /// `p(h = 1 | v)` at the negative visible states.
    pub model_hidden_probs: DenseMatrix,
}

/// Draws `h ~ Bernoulli(probs)` using one stream per row.
pub fn sample_hidden_batch(probs: &DenseMatrix, streams: &mut [RngStream]) -> DenseMatrix {
    assert_eq!(probs.rows(), streams.len(), "one stream per chain");
    let mut out = DenseMatrix::zeros(probs.rows(), probs.cols());
    for (r, stream) in streams.iter_mut().enumerate() {
        for (o, &p) in out.row_mut(r).iter_mut().zip(probs.row(r)) {
            *o = f64::from(stream.bernoulli(p) as u8);
        }
    }
    out
}

enum VisibleNoise {
    Bernoulli,
    /// Per-unit standard deviations.
    Diagonal(Vec<f64>),
    /// Lower Cholesky factor `L` of the precision, `C⁻¹ = LLᵀ`.
    Precision(DenseMatrix),
}

/// Precomputed quantities for repeated Gibbs sweeps with fixed parameters.
pub struct GibbsKernel<'a> {
    params: &'a RbmParams,
    coupling: Cow<'a, DenseMatrix>,
    noise: VisibleNoise,
}

impl<'a> GibbsKernel<'a> {
    pub fn new(params: &'a RbmParams) -> Result<Self> {
        params.validate()?;
        let noise = match (&params.family, &params.cov) {
            (Family::Bernoulli, _) => VisibleNoise::Bernoulli,
            (_, Some(CovarianceModel::Full(p))) => VisibleNoise::Precision(cholesky(p)?),
            (_, Some(c)) => VisibleNoise::Diagonal(
                c.precision_diagonal(params.n_visible())
                    .expect("diagonal kind")
                    .iter()
                    .map(|p| 1.0 / p.sqrt())
                    .collect(),
            ),
            (Family::Gaussian, None) => unreachable!("validated"),
        };
        Ok(GibbsKernel { params, coupling: params.coupling(), noise })
    }

    pub fn params(&self) -> &RbmParams {
        self.params
    }

    pub fn hidden_probs(&self, visible: &DenseMatrix) -> DenseMatrix {
        hidden_preactivations_batch(self.params, &self.coupling, visible).map(sigmoid)
    }

    /// Samples `v ~ p(v | h)` for every row of `hidden`.
    pub fn sample_visible(&self, hidden: &DenseMatrix, streams: &mut [RngStream]) -> DenseMatrix {
        assert_eq!(hidden.rows(), streams.len(), "one stream per chain");
        let mut v = visible_means_batch(self.params, hidden);
        let n = v.cols();
        let mut z = vec![0.0; n];
        for (r, stream) in streams.iter_mut().enumerate() {
            let row = v.row_mut(r);
            match &self.noise {
                VisibleNoise::Bernoulli => {
                    for x in row.iter_mut() {
                        *x = f64::from(stream.bernoulli(*x) as u8);
                    }
                }
                VisibleNoise::Diagonal(sd) => {
                    for (x, s) in row.iter_mut().zip(sd) {
                        *x += s * stream.normal();
                    }
                }
                VisibleNoise::Precision(l) => {
                    // x = L⁻ᵀz has covariance (LLᵀ)⁻¹.
                    z.iter_mut().for_each(|zi| *zi = stream.normal());
                    for i in (0..n).rev() {
                        let mut s = z[i];
                        for k in i + 1..n {
                            s -= l[(k, i)] * z[k];
                        }
                        z[i] = s / l[(i, i)];
                    }
                    for (x, zi) in row.iter_mut().zip(&z) {
                        *x += zi;
                    }
                }
            }
        }
        v
    }

    /// One sweep `h ~ p(h | v)` then `v ~ p(v | h)`.
    pub fn step(&self, state: &ChainState, streams: &mut [RngStream]) -> ChainState {
        let probs = self.hidden_probs(&state.visible);
        let hidden = sample_hidden_batch(&probs, streams);
        let visible = self.sample_visible(&hidden, streams);
        ChainState { visible, hidden }
    }

    /// Runs `k` sweeps starting from `visible`, returning the final visibles.
    fn run(
        &self,
        visible: DenseMatrix,
        first_probs: Option<DenseMatrix>,
        k: usize,
        streams: &mut [RngStream],
    ) -> (DenseMatrix, DenseMatrix) {
        let mut v = visible;
        let mut probs = first_probs.unwrap_or_else(|| self.hidden_probs(&v));
        for _ in 0..k {
            let h = sample_hidden_batch(&probs, streams);
            v = self.sample_visible(&h, streams);
            probs = self.hidden_probs(&v);
        }
        (v, probs)
    }
}

/// One Gibbs sweep for every chain.
pub fn gibbs_step(params: &RbmParams, state: &ChainState, streams: &mut [RngStream]) -> Result<ChainState> {
    check_chains(params, &state.visible, streams)?;
    Ok(GibbsKernel::new(params)?.step(state, streams))
}

fn check_chains(params: &RbmParams, visible: &DenseMatrix, streams: &[RngStream]) -> Result<()> {
    if visible.cols() != params.n_visible() {
        return Err(Error::dim("chain visibles", params.n_visible(), visible.cols()));
    }
    if streams.len() != visible.rows() {
        return Err(Error::dim("chain streams", visible.rows(), streams.len()));
    }
    Ok(())
}

/// CD-k: negative chains start at the data and run `k ≥ 1` sweeps.
pub fn cd_k(params: &RbmParams, batch: &DataBatch, k: usize, streams: &mut [RngStream]) -> Result<PhaseSamples> {
    if k == 0 {
        return Err(Error::InvalidParameter("CD needs at least one Gibbs sweep".into()));
    }
    batch.check_against(params)?;
    check_chains(params, batch.matrix(), streams)?;
    let kernel = GibbsKernel::new(params)?;
    let data_hidden_probs = kernel.hidden_probs(batch.matrix());
    let (model_visible, model_hidden_probs) =
        kernel.run(batch.matrix().clone(), Some(data_hidden_probs.clone()), k, streams);
    Ok(PhaseSamples { data_hidden_probs, model_visible, model_hidden_probs })
}

/// Persistent chains that survive across parameter updates.
#[derive(Debug, Clone)]
pub struct PersistentChains {
    visible: DenseMatrix,
    streams: Vec<RngStream>,
}

impl PersistentChains {
    /// Chains initialized at the given visible states.
    pub fn new(visible: DenseMatrix, rng: &mut RngStream) -> Self {
        let streams = rng.split(visible.rows());
        PersistentChains { visible, streams }
    }

    /// Chains started at one sampled reconstruction `v ~ p(v | h)`,
    /// `h ~ p(h | data)` of `batch`.
    pub fn from_reconstruction(params: &RbmParams, batch: &DataBatch, rng: &mut RngStream) -> Result<Self> {
        batch.check_against(params)?;
        let kernel = GibbsKernel::new(params)?;
        let mut streams = rng.split(batch.len());
        let h = sample_hidden_batch(&kernel.hidden_probs(batch.matrix()), &mut streams);
        let visible = kernel.sample_visible(&h, &mut streams);
        Ok(PersistentChains { visible, streams })
    }

    pub fn visible(&self) -> &DenseMatrix {
        &self.visible
    }

    /// PCD-k: advances the chains `k ≥ 1` sweeps under `params`.
    pub fn advance(&mut self, params: &RbmParams, batch: &DataBatch, k: usize) -> Result<PhaseSamples> {
        if k == 0 {
            return Err(Error::InvalidParameter("PCD needs at least one Gibbs sweep".into()));
        }
        batch.check_against(params)?;
        check_chains(params, &self.visible, &self.streams)?;
        let kernel = GibbsKernel::new(params)?;
        let data_hidden_probs = kernel.hidden_probs(batch.matrix());
        let start = std::mem::replace(&mut self.visible, DenseMatrix::zeros(0, 0));
        let (v, probs) = kernel.run(start, None, k, &mut self.streams);
        self.visible = v.clone();
        Ok(PhaseSamples { data_hidden_probs, model_visible: v, model_hidden_probs: probs })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DenseVector;
    use crate::model::{exact::hidden_configurations, hidden_posterior, CovarianceKind};

    fn small_brbm() -> RbmParams {
        let w = DenseMatrix::from_rows(&[vec![1.5, -1.0], vec![-0.5, 2.0], vec![0.8, 0.3]]).unwrap();
        RbmParams::bernoulli(
            w,
            DenseVector::new(vec![-0.2, 0.4, -0.6]).unwrap(),
            DenseVector::new(vec![0.3, -0.7]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn chain_marginals_match_enumeration() {
        let p = small_brbm();
        let chains = 400;
        let mut rng = RngStream::new(1);
        let mut streams = rng.split(chains);
        let mut state = ChainState { visible: DenseMatrix::zeros(chains, 3), hidden: DenseMatrix::zeros(chains, 2) };
        let kernel = GibbsKernel::new(&p).unwrap();
        for _ in 0..50 {
            state = kernel.step(&state, &mut streams);
        }
        let mut hits = [0.0; 2];
        let sweeps = 200;
        for _ in 0..sweeps {
            state = kernel.step(&state, &mut streams);
            for r in 0..chains {
                for (k, h) in hits.iter_mut().enumerate() {
                    *h += state.hidden[(r, k)];
                }
            }
        }
        let posterior = hidden_posterior(&p).unwrap();
        for (k, h) in hits.iter().enumerate() {
            let exact: f64 = hidden_configurations(2).zip(&posterior).map(|(c, w)| c[k] * w).sum();
            let est = h / (chains * sweeps) as f64;
            assert!((est - exact).abs() < 0.02, "unit {k}: {est} vs {exact}");
        }
    }

    #[test]
    fn full_covariance_noise_has_the_right_covariance() {
        let prec = DenseMatrix::from_rows(&[vec![2.0, 0.6], vec![0.6, 1.0]]).unwrap();
        let p = RbmParams::gaussian(
            DenseMatrix::zeros(2, 1),
            DenseVector::new(vec![1.0, -1.0]).unwrap(),
            DenseVector::zeros(1),
            CovarianceModel::Full(prec.clone()),
        )
        .unwrap();
        let n = 40_000;
        let mut streams = RngStream::new(2).split(n);
        let v = GibbsKernel::new(&p).unwrap().sample_visible(&DenseMatrix::zeros(n, 1), &mut streams);
        let cov = crate::linalg::spd_inverse(&prec).unwrap();
        let mean = [v.column(0).iter().sum::<f64>() / n as f64, v.column(1).iter().sum::<f64>() / n as f64];
        assert!((mean[0] - 1.0).abs() < 0.02 && (mean[1] + 1.0).abs() < 0.02);
        for i in 0..2 {
            for j in 0..2 {
                let s: f64 = (0..n).map(|r| (v[(r, i)] - mean[i]) * (v[(r, j)] - mean[j])).sum::<f64>() / n as f64;
                assert!((s - cov[(i, j)]).abs() < 0.03, "({i},{j}) {s} vs {}", cov[(i, j)]);
            }
        }
    }

    #[test]
    fn diagonal_noise_uses_precision() {
        let p = RbmParams::gaussian(
            DenseMatrix::zeros(2, 1),
            DenseVector::zeros(2),
            DenseVector::zeros(1),
            CovarianceModel::DiagonalLog(DenseVector::new(vec![4f64.ln(), 0.25f64.ln()]).unwrap()),
        )
        .unwrap();
        let n = 40_000;
        let mut streams = RngStream::new(3).split(n);
        let v = GibbsKernel::new(&p).unwrap().sample_visible(&DenseMatrix::zeros(n, 1), &mut streams);
        let var = |c: usize| v.column(c).iter().map(|x| x * x).sum::<f64>() / n as f64;
        assert!((var(0) - 0.25).abs() < 0.01);
        assert!((var(1) - 4.0).abs() < 0.15);
    }

    #[test]
    fn cd_is_reproducible_and_shaped() {
        let p = RbmParams::zeros(Family::Gaussian, 4, 3, CovarianceKind::Isotropic);
        let batch = DataBatch::new(DenseMatrix::from_fn(5, 4, |i, j| (i as f64) - (j as f64)));
        let run = |seed| {
            let mut s = RngStream::new(seed).split(5);
            cd_k(&p, &batch, 2, &mut s).unwrap()
        };
        let (a, b) = (run(9), run(9));
        assert_eq!(a.model_visible, b.model_visible);
        assert_ne!(a.model_visible, run(10).model_visible);
        assert_eq!(a.model_visible.shape(), (5, 4));
        assert_eq!(a.model_hidden_probs.shape(), (5, 3));
        assert!(a.data_hidden_probs.as_slice().iter().all(|&x| x == 0.5));
    }

    #[test]
    fn cd_rejects_bad_inputs() {
        let p = small_brbm();
        let batch = DataBatch::from_rows(&[vec![1.0, 0.0, 1.0]]).unwrap();
        let mut s = RngStream::new(0).split(1);
        assert!(cd_k(&p, &batch, 0, &mut s).is_err());
        let mut two = RngStream::new(0).split(2);
        assert!(matches!(cd_k(&p, &batch, 1, &mut two), Err(Error::Dimension { .. })));
        let bad = DataBatch::from_rows(&[vec![0.5, 0.0, 1.0]]).unwrap();
        assert!(cd_k(&p, &bad, 1, &mut s).is_err());
    }

    #[test]
    fn persistent_chains_carry_state() {
        let p = small_brbm();
        let batch = DataBatch::from_rows(&[vec![1.0, 0.0, 1.0], vec![0.0, 1.0, 0.0]]).unwrap();
        let mut chains = PersistentChains::new(batch.matrix().clone(), &mut RngStream::new(4));
        let first = chains.advance(&p, &batch, 1).unwrap();
        assert_eq!(chains.visible(), &first.model_visible);
        assert!(first.model_visible.as_slice().iter().all(|&x| x == 0.0 || x == 1.0));
        chains.advance(&p, &batch, 3).unwrap();
        assert!(chains.advance(&p, &batch, 0).is_err());
    }

    #[test]
    fn pcd_calls_compose() {
        let p = small_brbm();
        let batch = DataBatch::from_rows(&[vec![1.0, 0.0, 1.0], vec![0.0, 1.0, 0.0], vec![1.0, 1.0, 1.0]]).unwrap();
        let start = PersistentChains::from_reconstruction(&p, &batch, &mut RngStream::new(8)).unwrap();
        assert!(start.visible().as_slice().iter().all(|&x| x == 0.0 || x == 1.0));
        let mut twice = start.clone();
        twice.advance(&p, &batch, 1).unwrap();
        let second = twice.advance(&p, &batch, 1).unwrap();
        let mut once = start;
        let both = once.advance(&p, &batch, 2).unwrap();
        assert_eq!(second.model_visible, both.model_visible);
        assert_eq!(second.model_hidden_probs, both.model_hidden_probs);
    }
}
