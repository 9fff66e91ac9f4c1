//! Gradients of the negative log-likelihood from phase statistics.
//!
//! Every block of `∇L` is `E_model[φ] - E_data[φ]` with `φ = -∂E/∂θ`.
//! [`PhaseStats`] holds the sufficient statistics of one phase (means,
//! mean-field `E[vhᵀ]` and, when the covariance is learned, second visible
//! moments), so the same code serves CD estimates and the exact oracle.

use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, DenseVector};
use crate::model::exact::hidden_configurations;
use crate::model::{hidden_posterior, hidden_probs_batch, CovarianceModel, DataBatch, Family, RbmParams};
use crate::numeric::sigmoid;

/// Gradient of the covariance payload.
#[derive(Debug, Clone, PartialEq)]
pub enum CovGradient {
    /// Derivative with respect to the isotropic variance `c`.
    Scalar(f64),
    /// Derivative with respect to the log-precisions.
    Vector(DenseVector),
    /// Symmetrized derivative with respect to the precision matrix.
    Matrix(DenseMatrix),
}

impl CovGradient {
    fn zip(&self, other: &CovGradient, f: impl Fn(f64, f64) -> f64) -> Result<CovGradient> {
        match (self, other) {
            (CovGradient::Scalar(x), CovGradient::Scalar(y)) => Ok(CovGradient::Scalar(f(*x, *y))),
            (CovGradient::Vector(x), CovGradient::Vector(y)) if x.len() == y.len() => Ok(CovGradient::Vector(
                DenseVector::from_vec_unchecked(x.iter().zip(y.iter()).map(|(a, b)| f(*a, *b)).collect()),
            )),
            (CovGradient::Matrix(x), CovGradient::Matrix(y)) if x.shape() == y.shape() => {
                let data = x.as_slice().iter().zip(y.as_slice()).map(|(a, b)| f(*a, *b)).collect();
                Ok(CovGradient::Matrix(DenseMatrix::from_vec_unchecked(x.rows(), x.cols(), data)))
            }
            _ => Err(Error::dim("covariance gradient", "matching payloads", "different payloads")),
        }
    }

    pub fn values(&self) -> &[f64] {
        match self {
            CovGradient::Scalar(x) => std::slice::from_ref(x),
            CovGradient::Vector(v) => v.as_slice(),
            CovGradient::Matrix(m) => m.as_slice(),
        }
    }
}

/// `∂L/∂θ` for every parameter block.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub dw: DenseMatrix,
    pub db: DenseVector,
    pub da: DenseVector,
    pub dcov: Option<CovGradient>,
}

impl GradientSet {
    fn zip(&self, other: &GradientSet, f: impl Fn(f64, f64) -> f64 + Copy) -> Result<GradientSet> {
        if self.dw.shape() != other.dw.shape() || self.db.len() != other.db.len() || self.da.len() != other.da.len() {
            return Err(Error::dim(
                "gradient set",
                format!("{:?}", self.dw.shape()),
                format!("{:?}", other.dw.shape()),
            ));
        }
        let zv = |x: &DenseVector, y: &DenseVector| {
            DenseVector::from_vec_unchecked(x.iter().zip(y.iter()).map(|(a, b)| f(*a, *b)).collect())
        };
        let dw = DenseMatrix::from_vec_unchecked(
            self.dw.rows(),
            self.dw.cols(),
            self.dw.as_slice().iter().zip(other.dw.as_slice()).map(|(a, b)| f(*a, *b)).collect(),
        );
        let dcov = match (&self.dcov, &other.dcov) {
            (None, None) => None,
            (Some(x), Some(y)) => Some(x.zip(y, f)?),
            _ => return Err(Error::dim("covariance gradient", "matching presence", "mismatch")),
        };
        Ok(GradientSet { dw, db: zv(&self.db, &other.db), da: zv(&self.da, &other.da), dcov })
    }

    pub fn add(&self, other: &GradientSet) -> Result<GradientSet> {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &GradientSet) -> Result<GradientSet> {
        self.zip(other, |a, b| a - b)
    }

    pub fn scaled(&self, s: f64) -> GradientSet {
        self.zip(self, move |a, _| s * a).expect("same shapes")
    }

    /// Largest absolute entry over all blocks.
    pub fn max_abs(&self) -> f64 {
        self.values().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(|x| x.is_finite())
    }

    fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.dw
            .as_slice()
            .iter()
            .chain(self.db.iter())
            .chain(self.da.iter())
            .chain(self.dcov.iter().flat_map(|c| c.values().iter()))
            .copied()
    }
}

/// Second visible moments kept by a [`PhaseStats`].
#[derive(Debug, Clone, PartialEq)]
pub enum SecondMoment {
    None,
    /// `E[v_j²]`.
    Diagonal(Vec<f64>),
    /// `E[vvᵀ]`.
    Full(DenseMatrix),
}

/// Sufficient statistics of one phase (data or model).
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseStats {
    pub mean_v: Vec<f64>,
    pub mean_h: Vec<f64>,
    /// `E[v hᵀ]`, `N_v x N_h`.
    pub mean_vh: DenseMatrix,
    pub second: SecondMoment,
}

#[derive(Clone, Copy, PartialEq)]
enum SecondKind {
    None,
    Diagonal,
    Full,
}

fn second_kind(params: &RbmParams) -> SecondKind {
    match &params.cov {
        None | Some(CovarianceModel::Identity) => SecondKind::None,
        Some(CovarianceModel::Full(_)) => SecondKind::Full,
        Some(_) => SecondKind::Diagonal,
    }
}

fn column_means(m: &DenseMatrix) -> Vec<f64> {
    let mut out = vec![0.0; m.cols()];
    for row in m.row_iter() {
        out.iter_mut().zip(row).for_each(|(o, x)| *o += x);
    }
    let n = m.rows() as f64;
    out.iter_mut().for_each(|o| *o /= n);
    out
}

impl PhaseStats {
    /// Statistics of paired visible samples and hidden probabilities (one
    /// example per row), keeping the second moments `params` needs.
    pub fn from_samples(params: &RbmParams, visible: &DenseMatrix, hidden: &DenseMatrix) -> Result<Self> {
        if visible.cols() != params.n_visible() {
            return Err(Error::dim("phase visibles", params.n_visible(), visible.cols()));
        }
        if hidden.cols() != params.n_hidden() {
            return Err(Error::dim("phase hiddens", params.n_hidden(), hidden.cols()));
        }
        if visible.rows() != hidden.rows() || visible.rows() == 0 {
            return Err(Error::dim("phase batch size", visible.rows(), hidden.rows()));
        }
        let n = visible.rows() as f64;
        let second = match second_kind(params) {
            SecondKind::None => SecondMoment::None,
            SecondKind::Diagonal => SecondMoment::Diagonal(column_means(&visible.map(|x| x * x))),
            SecondKind::Full => SecondMoment::Full(visible.t_matmul(visible).scaled(1.0 / n)),
        };
        Ok(PhaseStats {
            mean_v: column_means(visible),
            mean_h: column_means(hidden),
            mean_vh: visible.t_matmul(hidden).scaled(1.0 / n),
            second,
        })
    }

    /// Exact data-phase statistics: the hidden layer is averaged analytically.
    pub fn from_data(params: &RbmParams, batch: &DataBatch) -> Result<Self> {
        batch.check_against(params)?;
        PhaseStats::from_samples(params, batch.matrix(), &hidden_probs_batch(params, batch.matrix()))
    }

    /// Exact model expectations by enumerating the hidden layer.
    pub fn exact_model(params: &RbmParams) -> Result<Self> {
        let posterior = hidden_posterior(params)?;
        let (nv, nh) = (params.n_visible(), params.n_hidden());
        let kind = second_kind(params);
        let mut mean_v = vec![0.0; nv];
        let mut mean_h = vec![0.0; nh];
        let mut mean_vh = DenseMatrix::zeros(nv, nh);
        let mut outer = DenseMatrix::zeros(nv, nv);
        let mut diag = vec![0.0; nv];
        for (h, &pi) in hidden_configurations(nh).zip(&posterior) {
            let wh = params.w.matvec(&h);
            let mu: Vec<f64> = match params.family {
                Family::Bernoulli => wh.iter().zip(params.b.iter()).map(|(x, b)| sigmoid(x + b)).collect(),
                Family::Gaussian => wh.iter().zip(params.b.iter()).map(|(x, b)| x + b).collect(),
            };
            for j in 0..nv {
                mean_v[j] += pi * mu[j];
                for k in 0..nh {
                    mean_vh[(j, k)] += pi * mu[j] * h[k];
                }
                match kind {
                    SecondKind::Diagonal => diag[j] += pi * mu[j] * mu[j],
                    SecondKind::Full => {
                        for l in 0..nv {
                            outer[(j, l)] += pi * mu[j] * mu[l];
                        }
                    }
                    SecondKind::None => {}
                }
            }
            for k in 0..nh {
                mean_h[k] += pi * h[k];
            }
        }
        let second = match kind {
            SecondKind::None => SecondMoment::None,
            SecondKind::Diagonal => {
                let cov = params.precision().precision_diagonal(nv).expect("diagonal kind");
                SecondMoment::Diagonal(diag.iter().zip(&cov).map(|(m, p)| m + 1.0 / p).collect())
            }
            SecondKind::Full => SecondMoment::Full(outer.add(&params.precision().covariance_matrix(nv)?)),
        };
        Ok(PhaseStats { mean_v, mean_h, mean_vh, second })
    }

    /// Convex combination `(1 - t)·self + t·other`.
    pub fn lerp(&self, other: &PhaseStats, t: f64) -> Result<PhaseStats> {
        let mix = |x: f64, y: f64| (1.0 - t) * x + t * y;
        let mv = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| mix(*a, *b)).collect::<Vec<_>>();
        let mm = |x: &DenseMatrix, y: &DenseMatrix| {
            DenseMatrix::from_vec_unchecked(x.rows(), x.cols(), mv(x.as_slice(), y.as_slice()))
        };
        if self.mean_vh.shape() != other.mean_vh.shape() {
            return Err(Error::dim(
                "phase stats",
                format!("{:?}", self.mean_vh.shape()),
                format!("{:?}", other.mean_vh.shape()),
            ));
        }
        let second = match (&self.second, &other.second) {
            (SecondMoment::None, SecondMoment::None) => SecondMoment::None,
            (SecondMoment::Diagonal(x), SecondMoment::Diagonal(y)) => SecondMoment::Diagonal(mv(x, y)),
            (SecondMoment::Full(x), SecondMoment::Full(y)) => SecondMoment::Full(mm(x, y)),
            _ => return Err(Error::dim("phase second moments", "same kind", "different kinds")),
        };
        Ok(PhaseStats {
            mean_v: mv(&self.mean_v, &other.mean_v),
            mean_h: mv(&self.mean_h, &other.mean_h),
            mean_vh: mm(&self.mean_vh, &other.mean_vh),
            second,
        })
    }
}

/// `E[φ]` under the given phase statistics.
fn expected_features(params: &RbmParams, stats: &PhaseStats) -> Result<GradientSet> {
    let (nv, nh) = (params.n_visible(), params.n_hidden());
    if stats.mean_vh.shape() != (nv, nh) || stats.mean_v.len() != nv || stats.mean_h.len() != nh {
        return Err(Error::dim("phase stats", format!("{nv}x{nh}"), format!("{:?}", stats.mean_vh.shape())));
    }
    let da = DenseVector::from_vec_unchecked(stats.mean_h.clone());
    let Some(cov) = &params.cov else {
        return Ok(GradientSet {
            dw: stats.mean_vh.clone(),
            db: DenseVector::from_vec_unchecked(stats.mean_v.clone()),
            da,
            dcov: None,
        });
    };
    let centered: Vec<f64> = stats.mean_v.iter().zip(params.b.iter()).map(|(m, b)| m - b).collect();
    let db = DenseVector::from_vec_unchecked(cov.apply_precision(&centered));
    let dw = match cov {
        CovarianceModel::Full(p) => p.matmul(&stats.mean_vh),
        other => {
            let d = other.precision_diagonal(nv).expect("diagonal kind");
            let mut m = stats.mean_vh.clone();
            for (j, dj) in d.iter().enumerate() {
                m.row_mut(j).iter_mut().for_each(|x| *x *= dj);
            }
            m
        }
    };
    // -∂E/∂P = sym(v (Wh)ᵀ) - ½ (v-b)(v-b)ᵀ, averaged.
    let b = params.b.as_slice();
    let dcov = match (cov, &stats.second) {
        (CovarianceModel::Identity, _) => None,
        (CovarianceModel::Full(_), SecondMoment::Full(s)) => {
            let vwh = stats.mean_vh.matmul_t(&params.w);
            let g = DenseMatrix::from_fn(nv, nv, |j, k| {
                let cross = 0.5 * (vwh[(j, k)] + vwh[(k, j)]);
                let scatter = s[(j, k)] - stats.mean_v[j] * b[k] - b[j] * stats.mean_v[k] + b[j] * b[k];
                cross - 0.5 * scatter
            });
            Some(CovGradient::Matrix(g))
        }
        (CovarianceModel::Isotropic(c), SecondMoment::Diagonal(s)) => {
            let dp: f64 = (0..nv).map(|j| diag_precision_feature(params, stats, s, j)).sum();
            Some(CovGradient::Scalar(-dp / (c * c)))
        }
        (CovarianceModel::DiagonalLog(c), SecondMoment::Diagonal(s)) => {
            Some(CovGradient::Vector(DenseVector::from_vec_unchecked(
                (0..nv).map(|j| c[j].exp() * diag_precision_feature(params, stats, s, j)).collect(),
            )))
        }
        _ => return Err(Error::dim("phase second moments", "moments matching the covariance kind", "other")),
    };
    Ok(GradientSet { dw, db, da, dcov })
}

/// Diagonal entry `j` of `E[-∂E/∂P]`.
fn diag_precision_feature(params: &RbmParams, stats: &PhaseStats, second: &[f64], j: usize) -> f64 {
    let cross: f64 = stats.mean_vh.row(j).iter().zip(params.w.row(j)).map(|(x, w)| x * w).sum();
    let b = params.b[j];
    cross - 0.5 * (second[j] - 2.0 * b * stats.mean_v[j] + b * b)
}

/// Stochastic gradient `E_negative[φ] - E_positive[φ]`.
pub fn estimate_gradients(params: &RbmParams, positive: &PhaseStats, negative: &PhaseStats) -> Result<GradientSet> {
    expected_features(params, negative)?.sub(&expected_features(params, positive)?)
}

/// Gradient of the log-partition function, by enumeration.
pub fn log_partition_gradient(params: &RbmParams) -> Result<GradientSet> {
    expected_features(params, &PhaseStats::exact_model(params)?)
}

/// Gradient of the data term `g`.
pub fn data_term_gradient(params: &RbmParams, batch: &DataBatch) -> Result<GradientSet> {
    Ok(expected_features(params, &PhaseStats::from_data(params, batch)?)?.scaled(-1.0))
}

/// Exact `∇L` for a tiny model.
pub fn exact_gradients(params: &RbmParams, batch: &DataBatch) -> Result<GradientSet> {
    estimate_gradients(params, &PhaseStats::from_data(params, batch)?, &PhaseStats::exact_model(params)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{exact_loss, CovarianceKind};
    use crate::sampler::RngStream;

    fn tiny(family: Family, kind: CovarianceKind, seed: u64) -> (RbmParams, DataBatch) {
        let mut rng = RngStream::new(seed);
        let (nv, nh) = (6, 4);
        let mut p = RbmParams::zeros(family, nv, nh, kind);
        p.w = DenseMatrix::from_fn(nv, nh, |_, _| 0.4 * rng.normal());
        p.b = DenseVector::new((0..nv).map(|_| 0.3 * rng.normal()).collect()).unwrap();
        p.a = DenseVector::new((0..nh).map(|_| 0.3 * rng.normal()).collect()).unwrap();
        if family == Family::Gaussian {
            p.cov = Some(match kind {
                CovarianceKind::Identity => CovarianceModel::Identity,
                CovarianceKind::Isotropic => CovarianceModel::Isotropic(0.8),
                CovarianceKind::DiagonalLog => CovarianceModel::DiagonalLog(
                    DenseVector::new((0..nv).map(|_| 0.2 * rng.normal()).collect()).unwrap(),
                ),
                CovarianceKind::Full => {
                    let a = DenseMatrix::from_fn(nv, nv, |_, _| 0.2 * rng.normal());
                    let mut s = a.t_matmul(&a);
                    (0..nv).for_each(|i| s[(i, i)] += 1.0);
                    CovarianceModel::Full(s)
                }
            });
        }
        let rows: Vec<Vec<f64>> = (0..5)
            .map(|_| {
                (0..nv)
                    .map(|_| match family {
                        Family::Bernoulli => f64::from(rng.bernoulli(0.4) as u8),
                        Family::Gaussian => rng.normal(),
                    })
                    .collect()
            })
            .collect();
        (p, DataBatch::from_rows(&rows).unwrap())
    }

    #[test]
    fn stationarity_gives_zero() {
        let (p, batch) = tiny(Family::Gaussian, CovarianceKind::Full, 1);
        let s = PhaseStats::from_data(&p, &batch).unwrap();
        let g = estimate_gradients(&p, &s, &s).unwrap();
        assert_eq!(g.max_abs(), 0.0);
    }

    #[test]
    fn single_sample_bernoulli_formula() {
        let (p, _) = tiny(Family::Bernoulli, CovarianceKind::Identity, 2);
        let v = DenseMatrix::from_rows(&[vec![1.0, 0.0, 1.0, 1.0, 0.0, 0.0]]).unwrap();
        let v2 = DenseMatrix::from_rows(&[vec![0.0, 1.0, 1.0, 0.0, 0.0, 1.0]]).unwrap();
        let hp = DenseMatrix::from_rows(&[vec![0.1, 0.2, 0.3, 0.4]]).unwrap();
        let hp2 = DenseMatrix::from_rows(&[vec![0.9, 0.5, 0.7, 0.2]]).unwrap();
        let pos = PhaseStats::from_samples(&p, &v, &hp).unwrap();
        let neg = PhaseStats::from_samples(&p, &v2, &hp2).unwrap();
        let g = estimate_gradients(&p, &pos, &neg).unwrap();
        let expected = v2.t_matmul(&hp2).sub(&v.t_matmul(&hp));
        assert!(g.dw.sub(&expected).max_abs() < 1e-15);
    }

    #[test]
    fn zero_bernoulli_model() {
        let p = RbmParams::zeros(Family::Bernoulli, 3, 2, CovarianceKind::Identity);
        let batch = DataBatch::from_rows(&[vec![1.0, 0.0, 1.0], vec![1.0, 1.0, 0.0]]).unwrap();
        let g = exact_gradients(&p, &batch).unwrap();
        assert!(g.da.iter().all(|x| x.abs() < 1e-15));
        for (gj, mj) in g.db.iter().zip([1.0, 0.5, 0.5]) {
            assert!((gj - (0.5 - mj)).abs() < 1e-15);
        }
    }

    #[test]
    fn exact_model_stats_plug_in() {
        let (p, batch) = tiny(Family::Gaussian, CovarianceKind::DiagonalLog, 3);
        let pos = PhaseStats::from_data(&p, &batch).unwrap();
        let neg = PhaseStats::exact_model(&p).unwrap();
        let a = estimate_gradients(&p, &pos, &neg).unwrap();
        let b = exact_gradients(&p, &batch).unwrap();
        assert!(a.sub(&b).unwrap().max_abs() <= 1e-12);
        let split = log_partition_gradient(&p).unwrap().add(&data_term_gradient(&p, &batch).unwrap()).unwrap();
        assert!(split.sub(&b).unwrap().max_abs() <= 1e-12);
    }

    #[test]
    fn linear_in_negative_statistics() {
        let (p, batch) = tiny(Family::Gaussian, CovarianceKind::Full, 4);
        let pos = PhaseStats::from_data(&p, &batch).unwrap();
        let mut rng = RngStream::new(8);
        let mut draw = || {
            let v = DenseMatrix::from_fn(5, 6, |_, _| rng.normal());
            PhaseStats::from_samples(&p, &v, &hidden_probs_batch(&p, &v)).unwrap()
        };
        let (n1, n2) = (draw(), draw());
        let avg = estimate_gradients(&p, &pos, &n1.lerp(&n2, 0.5).unwrap()).unwrap();
        let g1 = estimate_gradients(&p, &pos, &n1).unwrap();
        let g2 = estimate_gradients(&p, &pos, &n2).unwrap();
        let mean = g1.add(&g2).unwrap().scaled(0.5);
        assert!(avg.sub(&mean).unwrap().max_abs() <= 1e-12);
    }

    #[test]
    fn log_diagonal_is_chain_rule_of_diagonal() {
        // With P diagonal, the full-kind gradient restricted to the diagonal
        // times exp(c) must equal the log-diagonal gradient.
        let (p, batch) = tiny(Family::Gaussian, CovarianceKind::DiagonalLog, 5);
        let Some(CovarianceModel::DiagonalLog(c)) = &p.cov else { unreachable!() };
        let mut full = p.clone();
        full.cov = Some(CovarianceModel::Full(p.precision().precision_matrix(6)));
        let gd = exact_gradients(&p, &batch).unwrap();
        let gf = exact_gradients(&full, &batch).unwrap();
        let (Some(CovGradient::Vector(v)), Some(CovGradient::Matrix(m))) = (&gd.dcov, &gf.dcov) else { unreachable!() };
        for j in 0..6 {
            assert!((v[j] - c[j].exp() * m[(j, j)]).abs() < 1e-12);
        }
        assert!(gd.dw.sub(&gf.dw).max_abs() < 1e-12);
    }

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        let scale: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
        diff / scale.max(1e-8)
    }

    #[test]
    fn matches_finite_differences_of_weights_and_biases() {
        let h = 1e-5;
        for seed in 0..2 {
            for (family, kind) in [
                (Family::Bernoulli, CovarianceKind::Identity),
                (Family::Gaussian, CovarianceKind::Isotropic),
                (Family::Gaussian, CovarianceKind::Full),
            ] {
                let (p, batch) = tiny(family, kind, 10 + seed);
                let g = exact_gradients(&p, &batch).unwrap();
                let fd = |perturb: &dyn Fn(&mut RbmParams, f64)| {
                    let mut plus = p.clone();
                    perturb(&mut plus, h);
                    let mut minus = p.clone();
                    perturb(&mut minus, -h);
                    (exact_loss(&plus, &batch).unwrap() - exact_loss(&minus, &batch).unwrap()) / (2.0 * h)
                };
                let fd_b: Vec<f64> = (0..6).map(|j| fd(&|q, d| q.b[j] += d)).collect();
                let fd_a: Vec<f64> = (0..4).map(|k| fd(&|q, d| q.a[k] += d)).collect();
                let fd_w: Vec<f64> = (0..24).map(|i| fd(&|q, d| q.w[(i / 4, i % 4)] += d)).collect();
                assert!(rel_err(g.db.as_slice(), &fd_b) < 1e-5, "{kind:?} b");
                assert!(rel_err(g.da.as_slice(), &fd_a) < 1e-5, "{kind:?} a");
                assert!(rel_err(g.dw.as_slice(), &fd_w) < 1e-5, "{kind:?} w");
            }
        }
    }
}
