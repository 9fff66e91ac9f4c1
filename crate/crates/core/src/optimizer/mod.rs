//! Update rules: plain and Nesterov SGD, and the spectral (SSD) steps.
//!
//! The SSD steps minimize `⟨G, Δ⟩ + ‖Δ‖²/(2ε)` in the `ℓ∞` norm for vectors
//! (`Δ = -ε‖g‖₁ sign(g)`) and in the spectral norm for matrices
//! (`Δ = -ε‖σ‖₁ UVᵀ`). Each parameter block is routed independently, so
//! hybrids such as "spectral on `W`, SGD on the biases" are one policy.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::gradient::{CovGradient, GradientSet};
use crate::linalg::{
    project_spd, randomized_svd, spectral_norm_estimate, svd, vector_norm, DenseMatrix, DenseVector, NormKind,
    RandomizedSvd,
};
use crate::model::{CovarianceModel, RbmParams};

/// Smallest admissible isotropic variance / precision eigenvalue after an update.
pub const COVARIANCE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateRule {
    Sgd,
    NesterovSgd,
    Ssd,
    Frozen,
}

impl UpdateRule {
    pub fn name(self) -> &'static str {
        match self {
            UpdateRule::Sgd => "sgd",
            UpdateRule::NesterovSgd => "nesterov_sgd",
            UpdateRule::Ssd => "ssd",
            UpdateRule::Frozen => "frozen",
        }
    }
}

impl fmt::Display for UpdateRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for UpdateRule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(UpdateRule::Sgd),
            "nesterov_sgd" | "nesterov" => Ok(UpdateRule::NesterovSgd),
            "ssd" => Ok(UpdateRule::Ssd),
            "frozen" => Ok(UpdateRule::Frozen),
            other => Err(Error::Config(format!("unknown update rule `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Schedule {
    Fixed,
    /// `ε₀ γ^⌊iter/period⌋`.
    Exponential {
        gamma: f64,
        period: u64,
    },
}

/// Step size at iteration `iter`.
pub fn step_size(schedule: Schedule, eps0: f64, iter: u64) -> f64 {
    match schedule {
        Schedule::Fixed => eps0,
        Schedule::Exponential { gamma, period } => eps0 * gamma.powf((iter / period) as f64),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SvdMode {
    Exact,
    Randomized { target_rank: usize, oversample: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockPolicy {
    pub rule: UpdateRule,
    pub step: f64,
}

impl BlockPolicy {
    pub fn new(rule: UpdateRule, step: f64) -> Self {
        BlockPolicy { rule, step }
    }

    pub fn frozen() -> Self {
        BlockPolicy::new(UpdateRule::Frozen, 0.0)
    }
}

/// Per-block routing plus the settings shared by all blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerPolicy {
    pub w: BlockPolicy,
    pub b: BlockPolicy,
    pub a: BlockPolicy,
    pub cov: BlockPolicy,
    pub schedule: Schedule,
    pub svd_mode: SvdMode,
    pub weight_norm_cap: Option<f64>,
    pub momentum: f64,
}

impl OptimizerPolicy {
    /// Same rule and base step for every block.
    pub fn uniform(rule: UpdateRule, step: f64) -> Self {
        let block = BlockPolicy::new(rule, step);
        OptimizerPolicy {
            w: block,
            b: block,
            a: block,
            cov: block,
            schedule: Schedule::Fixed,
            svd_mode: SvdMode::Exact,
            weight_norm_cap: None,
            momentum: 0.0,
        }
    }

    /// `W` follows one rule, the biases and covariance another.
    pub fn hybrid(w: BlockPolicy, rest: BlockPolicy) -> Self {
        OptimizerPolicy { w, b: rest, a: rest, cov: rest, ..OptimizerPolicy::uniform(w.rule, w.step) }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, block) in [("w", self.w), ("b", self.b), ("a", self.a), ("cov", self.cov)] {
            if block.rule != UpdateRule::Frozen && !(block.step > 0.0 && block.step.is_finite()) {
                return Err(Error::Config(format!("step size for block {name} must be > 0")));
            }
        }
        if let Schedule::Exponential { gamma, period } = self.schedule {
            if !(gamma > 0.0 && gamma <= 1.0) || period == 0 {
                return Err(Error::Config("exponential schedule needs gamma in (0, 1] and period >= 1".into()));
            }
        }
        if let SvdMode::Randomized { target_rank: 0, .. } = self.svd_mode {
            return Err(Error::Config("randomized SVD target rank must be >= 1".into()));
        }
        if let Some(r) = self.weight_norm_cap {
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::Config("weight norm cap must be > 0".into()));
            }
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("momentum must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Nesterov velocity buffers, one per block.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumState {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub a: Vec<f64>,
    pub cov: Vec<f64>,
}

impl MomentumState {
    pub fn zeros(params: &RbmParams) -> Self {
        let cov = match &params.cov {
            None | Some(CovarianceModel::Identity) => 0,
            Some(CovarianceModel::Isotropic(_)) => 1,
            Some(CovarianceModel::DiagonalLog(c)) => c.len(),
            Some(CovarianceModel::Full(p)) => p.rows() * p.cols(),
        };
        MomentumState {
            w: vec![0.0; params.n_visible() * params.n_hidden()],
            b: vec![0.0; params.n_visible()],
            a: vec![0.0; params.n_hidden()],
            cov: vec![0.0; cov],
        }
    }
}

/// `‖g‖₁ sign(g)`, with `sign(0) = 0`.
pub fn ssd_vector_direction(g: &[f64]) -> Vec<f64> {
    let l1 = vector_norm(g, NormKind::L1);
    g.iter()
        .map(|&x| {
            if x > 0.0 {
                l1
            } else if x < 0.0 {
                -l1
            } else {
                0.0
            }
        })
        .collect()
}

/// `x - ε‖g‖₁ sign(g)`.
pub fn ssd_vector_step(x: &DenseVector, g: &DenseVector, eps: f64) -> Result<DenseVector> {
    if x.len() != g.len() {
        return Err(Error::dim("ssd vector step", x.len(), g.len()));
    }
    let d = ssd_vector_direction(g.as_slice());
    Ok(DenseVector::from_vec_unchecked(x.iter().zip(d).map(|(xi, di)| xi - eps * di).collect()))
}

/// Spectral direction `‖σ‖₁ UVᵀ` of `G`. The randomized mode adds the
/// normalized residual `‖σ‖₁ R/‖R‖_{S∞}` with `R = G - UΣVᵀ`, dropped when
/// `‖R‖_{S∞} < 1e-12`.
pub fn ssd_matrix_direction(g: &DenseMatrix, mode: SvdMode) -> Result<DenseMatrix> {
    match mode {
        SvdMode::Exact => {
            let s = svd(g)?;
            Ok(s.uvt().scaled(s.nuclear_norm()))
        }
        SvdMode::Randomized { target_rank, oversample } => {
            let full = g.rows().min(g.cols());
            let k = target_rank.min(full);
            let opts = RandomizedSvd::new(k).oversample(oversample.min(full - k));
            let s = randomized_svd(g, opts)?;
            let l1 = s.nuclear_norm();
            let mut d = s.uvt().scaled(l1);
            let residual = g.sub(&s.reconstruct());
            let norm = spectral_norm_estimate(&residual, 30);
            if norm >= 1e-12 {
                d.axpy(l1 / norm, &residual);
            }
            Ok(d)
        }
    }
}

/// `X - ε ‖σ‖₁ UVᵀ` (plus the randomized correction).
pub fn ssd_matrix_step(x: &DenseMatrix, g: &DenseMatrix, eps: f64, mode: SvdMode) -> Result<DenseMatrix> {
    if x.shape() != g.shape() {
        return Err(Error::dim("ssd matrix step", format!("{:?}", x.shape()), format!("{:?}", g.shape())));
    }
    let mut out = x.clone();
    out.axpy(-eps, &ssd_matrix_direction(g, mode)?);
    Ok(out)
}

/// In-place SGD or Nesterov step on a flat block.
///
/// Nesterov uses the look-ahead reformulation `v ← μv - εg`,
/// `x ← x + μv - εg`, which reduces to SGD at `μ = 0`.
pub fn sgd_step(x: &mut [f64], g: &[f64], eps: f64, velocity: &mut [f64], rule: UpdateRule, momentum: f64) {
    assert_eq!(x.len(), g.len(), "gradient shape");
    match rule {
        UpdateRule::Sgd => x.iter_mut().zip(g).for_each(|(xi, gi)| *xi -= eps * gi),
        UpdateRule::NesterovSgd => {
            assert_eq!(x.len(), velocity.len(), "velocity shape");
            for ((xi, gi), vi) in x.iter_mut().zip(g).zip(velocity.iter_mut()) {
                *vi = momentum * *vi - eps * gi;
                *xi += momentum * *vi - eps * gi;
            }
        }
        UpdateRule::Ssd | UpdateRule::Frozen => panic!("sgd_step called with rule {rule}"),
    }
}

/// Rescales `W` onto the spectral-norm ball of radius `r` if it lies outside.
pub fn project_weight_norm(w: &DenseMatrix, r: f64) -> Result<DenseMatrix> {
    if !(r > 0.0) {
        return Err(Error::InvalidParameter(format!("weight norm cap must be > 0, got {r}")));
    }
    let s1 = svd(w)?.sigma.as_slice().first().copied().unwrap_or(0.0);
    Ok(if s1 > r { w.scaled(r / s1) } else { w.clone() })
}

fn update_flat(x: &mut [f64], g: &[f64], block: BlockPolicy, eps: f64, velocity: &mut [f64], momentum: f64) {
    match block.rule {
        UpdateRule::Frozen => {}
        UpdateRule::Ssd => {
            let d = ssd_vector_direction(g);
            x.iter_mut().zip(d).for_each(|(xi, di)| *xi -= eps * di);
        }
        rule => sgd_step(x, g, eps, velocity, rule, momentum),
    }
}

fn update_matrix(
    x: &mut DenseMatrix,
    g: &DenseMatrix,
    block: BlockPolicy,
    eps: f64,
    velocity: &mut [f64],
    policy: &OptimizerPolicy,
) -> Result<()> {
    match block.rule {
        UpdateRule::Frozen => {}
        UpdateRule::Ssd => x.axpy(-eps, &ssd_matrix_direction(g, policy.svd_mode)?),
        rule => sgd_step(x.as_mut_slice(), g.as_slice(), eps, velocity, rule, policy.momentum),
    }
    Ok(())
}

/// One optimizer transition: every block by its routed rule at the
/// scheduled step, then the weight-norm projection.
pub fn apply_update(
    params: &RbmParams,
    grads: &GradientSet,
    policy: &OptimizerPolicy,
    state: &MomentumState,
    iter: u64,
) -> Result<(RbmParams, MomentumState)> {
    let (nv, nh) = (params.n_visible(), params.n_hidden());
    if grads.dw.shape() != (nv, nh) || grads.db.len() != nv || grads.da.len() != nh {
        return Err(Error::dim("gradient set", format!("{nv}x{nh}"), format!("{:?}", grads.dw.shape())));
    }
    let mut next = params.clone();
    let mut state = state.clone();
    let eps = |block: BlockPolicy| step_size(policy.schedule, block.step, iter);

    update_matrix(&mut next.w, &grads.dw, policy.w, eps(policy.w), &mut state.w, policy)?;
    update_flat(next.b.as_mut_slice(), grads.db.as_slice(), policy.b, eps(policy.b), &mut state.b, policy.momentum);
    update_flat(next.a.as_mut_slice(), grads.da.as_slice(), policy.a, eps(policy.a), &mut state.a, policy.momentum);

    let e = eps(policy.cov);
    let block = policy.cov;
    match (next.cov.as_mut(), &grads.dcov) {
        (None, None) | (Some(CovarianceModel::Identity), None) => {}
        (Some(CovarianceModel::Isotropic(c)), Some(CovGradient::Scalar(g))) => {
            let mut x = [*c];
            update_flat(&mut x, &[*g], block, e, &mut state.cov, policy.momentum);
            *c = x[0].max(COVARIANCE_FLOOR);
        }
        (Some(CovarianceModel::DiagonalLog(c)), Some(CovGradient::Vector(g))) if g.len() == c.len() => {
            update_flat(c.as_mut_slice(), g.as_slice(), block, e, &mut state.cov, policy.momentum);
        }
        (Some(CovarianceModel::Full(p)), Some(CovGradient::Matrix(g))) if g.shape() == p.shape() => {
            if block.rule != UpdateRule::Frozen {
                update_matrix(p, g, block, e, &mut state.cov, policy)?;
                *p = project_spd(&p.symmetrized(), COVARIANCE_FLOOR)?;
            }
        }
        _ => return Err(Error::dim("covariance gradient", "payload matching the model", "mismatch")),
    }

    if let Some(r) = policy.weight_norm_cap {
        next.w = project_weight_norm(&next.w, r)?;
    }
    if !next.w.is_finite() || !next.b.is_finite() || !next.a.is_finite() {
        return Err(Error::NonFinite("updated parameters"));
    }
    Ok((next, state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradient::exact_gradients;
    use crate::linalg::schatten_norm;
    use crate::model::{exact_loss, CovarianceKind, DataBatch, Family};
    use crate::sampler::RngStream;

    fn v(x: &[f64]) -> DenseVector {
        DenseVector::new(x.to_vec()).unwrap()
    }

    #[test]
    fn vector_step_examples() {
        assert_eq!(ssd_vector_step(&v(&[0.0, 0.0]), &v(&[1.0, -2.0]), 1.0).unwrap(), v(&[-3.0, 3.0]));
        assert_eq!(ssd_vector_step(&v(&[1.0, 2.0]), &v(&[0.0, 0.0]), 1.0).unwrap(), v(&[1.0, 2.0]));
        assert_eq!(ssd_vector_direction(&[0.0, 2.0, -1.0]), vec![0.0, 3.0, -3.0]);
    }

    #[test]
    fn matrix_step_diagonal() {
        let g = DenseMatrix::from_diag(&[2.0, 1.0]);
        let x = ssd_matrix_step(&DenseMatrix::zeros(2, 2), &g, 1.0, SvdMode::Exact).unwrap();
        assert!(x.sub(&DenseMatrix::from_diag(&[-3.0, -3.0])).max_abs() < 1e-14);
    }

    #[test]
    fn matrix_step_norm_is_nuclear_norm() {
        let mut rng = RngStream::new(3);
        let g = DenseMatrix::from_fn(7, 4, |_, _| rng.normal());
        let d = ssd_matrix_direction(&g, SvdMode::Exact).unwrap();
        let nuclear = schatten_norm(&g, NormKind::L1).unwrap();
        assert!((schatten_norm(&d, NormKind::Inf).unwrap() - nuclear).abs() < 1e-9);
        assert!((g.inner(&d) - nuclear * nuclear).abs() < 1e-9 * nuclear * nuclear);
    }

    #[test]
    fn full_rank_randomized_equals_exact() {
        let mut rng = RngStream::new(4);
        let g = DenseMatrix::from_fn(6, 4, |_, _| rng.normal());
        let exact = ssd_matrix_direction(&g, SvdMode::Exact).unwrap();
        let approx = ssd_matrix_direction(&g, SvdMode::Randomized { target_rank: 4, oversample: 10 }).unwrap();
        assert!(exact.sub(&approx).max_abs() < 1e-8);
    }

    #[test]
    fn randomized_adds_normalized_residual() {
        let mut rng = RngStream::new(5);
        let g = DenseMatrix::from_fn(20, 10, |_, _| rng.normal());
        let d = ssd_matrix_direction(&g, SvdMode::Randomized { target_rank: 3, oversample: 5 }).unwrap();
        assert!(d.is_finite());
        // The correction has unit spectral norm, so ‖d‖ ≤ 2‖σ_r‖₁ up to estimate error.
        let s = randomized_svd(&g, RandomizedSvd::new(3).oversample(5)).unwrap();
        assert!(schatten_norm(&d, NormKind::Inf).unwrap() <= 2.0 * s.nuclear_norm() * (1.0 + 1e-6));
    }

    #[test]
    fn schedules() {
        assert_eq!(step_size(Schedule::Fixed, 0.1, 12345), 0.1);
        let exp = Schedule::Exponential { gamma: 0.5, period: 10 };
        assert_eq!(step_size(exp, 1.0, 25), 0.25);
        assert_eq!(step_size(exp, 1.0, 0), 1.0);
    }

    #[test]
    fn sgd_and_nesterov() {
        let g = [1.0, -2.0];
        let (mut x, mut y) = ([0.5, 0.5], [0.5, 0.5]);
        let mut vel = [0.0; 2];
        for _ in 0..7 {
            sgd_step(&mut x, &g, 0.1, &mut [], UpdateRule::Sgd, 0.0);
            sgd_step(&mut y, &g, 0.1, &mut vel, UpdateRule::NesterovSgd, 0.0);
        }
        assert_eq!(x, y);
        assert!((x[0] - (0.5 - 0.7)).abs() < 1e-14 && (x[1] - (0.5 + 1.4)).abs() < 1e-14);

        let mut z = [0.0];
        let mut vel = [0.0];
        for _ in 0..200 {
            sgd_step(&mut z, &[1.0], 0.01, &mut vel, UpdateRule::NesterovSgd, 0.9);
        }
        assert!((vel[0] + 0.1).abs() < 1e-6);
    }

    #[test]
    fn weight_projection() {
        let w = DenseMatrix::from_diag(&[3.0, 1.0]);
        assert_eq!(project_weight_norm(&w, 15f64.sqrt()).unwrap(), w);
        let big = DenseMatrix::from_diag(&[10.0, 1.0]);
        let p = project_weight_norm(&big, 5.0).unwrap();
        assert!(p.sub(&DenseMatrix::from_diag(&[5.0, 0.5])).max_abs() < 1e-12);
        assert!(project_weight_norm(&p, 5.0).unwrap().sub(&p).max_abs() < 1e-12);
    }

    fn tiny(kind: CovarianceKind) -> (RbmParams, DataBatch) {
        let mut rng = RngStream::new(17);
        let mut p = RbmParams::random_init(Family::Gaussian, 4, 3, kind, 0.3, &mut rng);
        p.b = v(&[0.1, -0.2, 0.3, 0.0]);
        let rows: Vec<Vec<f64>> = (0..6).map(|_| (0..4).map(|_| rng.normal()).collect()).collect();
        (p, DataBatch::from_rows(&rows).unwrap())
    }

    #[test]
    fn frozen_policy_is_identity() {
        let (p, batch) = tiny(CovarianceKind::Full);
        let g = exact_gradients(&p, &batch).unwrap();
        let mut policy = OptimizerPolicy::uniform(UpdateRule::Frozen, 0.0);
        policy.validate().unwrap();
        policy.weight_norm_cap = None;
        let (q, _) = apply_update(&p, &g, &policy, &MomentumState::zeros(&p), 0).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn hybrid_matches_manual_blocks() {
        let (p, batch) = tiny(CovarianceKind::DiagonalLog);
        let g = exact_gradients(&p, &batch).unwrap();
        let policy =
            OptimizerPolicy::hybrid(BlockPolicy::new(UpdateRule::Ssd, 0.01), BlockPolicy::new(UpdateRule::Sgd, 0.05));
        let (q, _) = apply_update(&p, &g, &policy, &MomentumState::zeros(&p), 0).unwrap();
        assert_eq!(q.w, ssd_matrix_step(&p.w, &g.dw, 0.01, SvdMode::Exact).unwrap());
        let mut b = p.b.clone();
        sgd_step(b.as_mut_slice(), g.db.as_slice(), 0.05, &mut [], UpdateRule::Sgd, 0.0);
        assert_eq!(q.b, b);
    }

    #[test]
    fn small_steps_decrease_the_exact_loss() {
        for kind in CovarianceKind::ALL {
            let (p, batch) = tiny(kind);
            let before = exact_loss(&p, &batch).unwrap();
            let g = exact_gradients(&p, &batch).unwrap();
            for rule in [UpdateRule::Sgd, UpdateRule::Ssd] {
                let policy = OptimizerPolicy::uniform(rule, 1e-3);
                let (q, _) = apply_update(&p, &g, &policy, &MomentumState::zeros(&p), 0).unwrap();
                let after = exact_loss(&q, &batch).unwrap();
                assert!(after < before, "{kind:?} {rule}: {after} >= {before}");
            }
        }
    }

    #[test]
    fn policy_validation() {
        assert!(OptimizerPolicy::uniform(UpdateRule::Sgd, 0.0).validate().is_err());
        let mut p = OptimizerPolicy::uniform(UpdateRule::Sgd, 0.1);
        p.momentum = 1.0;
        assert!(p.validate().is_err());
        p.momentum = 0.5;
        p.schedule = Schedule::Exponential { gamma: 1.5, period: 1 };
        assert!(p.validate().is_err());
    }
}
