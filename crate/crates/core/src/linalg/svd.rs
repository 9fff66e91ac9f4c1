//! Exact and randomized singular value decompositions.
//!
//! The exact path reduces a tall matrix to its `n x n` triangular factor with
//! Householder QR, diagonalizes that factor with one-sided (Hestenes) Jacobi
//! rotations and maps the left vectors back through the reflectors. Wide
//! matrices are handled through their transpose. Working storage is
//! column-major so that every rotation and reflector touches contiguous
//! memory.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::matrix::{axpy, dot};
use super::{DenseMatrix, DenseVector};
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 80;

/// Thin SVD `M = U · diag(sigma) · Vᵀ`.
///
/// `sigma` is nonincreasing and nonnegative. Each column of `u` has its
/// largest-magnitude entry positive (the matching `v` column is flipped with
/// it), which makes the factorization deterministic.
#[derive(Debug, Clone)]
pub struct SvdResult {
    pub u: DenseMatrix,
    pub sigma: DenseVector,
    pub v: DenseMatrix,
}

impl SvdResult {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    /// `U · diag(sigma) · Vᵀ`.
    pub fn reconstruct(&self) -> DenseMatrix {
        let mut us = self.u.clone();
        for row in 0..us.rows() {
            for (x, s) in us.row_mut(row).iter_mut().zip(self.sigma.iter()) {
                *x *= s;
            }
        }
        us.matmul_t(&self.v)
    }

    /// The polar-like factor `U · Vᵀ` used by the spectral step.
    pub fn uvt(&self) -> DenseMatrix {
        self.u.matmul_t(&self.v)
    }

    pub fn nuclear_norm(&self) -> f64 {
        self.sigma.iter().sum()
    }
}

/// Exact thin SVD, `r = min(rows, cols)`.
pub fn svd(m: &DenseMatrix) -> Result<SvdResult> {
    if !m.is_finite() {
        return Err(Error::NonFinite("svd input"));
    }
    if m.rows() >= m.cols() {
        tall_svd(m)
    } else {
        let t = tall_svd(&m.transpose())?;
        let mut out = SvdResult { u: t.v, sigma: t.sigma, v: t.u };
        fix_signs(&mut out);
        Ok(out)
    }
}

/// Column-major working copy of a matrix.
struct ColMajor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl ColMajor {
    fn from_matrix(m: &DenseMatrix) -> Self {
        let (rows, cols) = m.shape();
        let mut data = vec![0.0; rows * cols];
        for i in 0..rows {
            for (j, &x) in m.row(i).iter().enumerate() {
                data[j * rows + i] = x;
            }
        }
        ColMajor { rows, cols, data }
    }

    fn zeros(rows: usize, cols: usize) -> Self {
        ColMajor { rows, cols, data: vec![0.0; rows * cols] }
    }

    fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    /// Mutable access to two distinct columns.
    fn col_pair(&mut self, p: usize, q: usize) -> (&mut [f64], &mut [f64]) {
        debug_assert!(p < q);
        let (lo, hi) = self.data.split_at_mut(q * self.rows);
        (&mut lo[p * self.rows..(p + 1) * self.rows], &mut hi[..self.rows])
    }

    fn to_matrix(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.rows, self.cols, |i, j| self.data[j * self.rows + i])
    }
}

/// Householder reflectors `H_k = I - beta_k v_k v_kᵀ`, `v_k` acting on rows `k..`.
struct Reflectors {
    vs: Vec<Vec<f64>>,
    betas: Vec<f64>,
}

impl Reflectors {
    /// Applies `Q = H_0 H_1 ... H_{n-1}` to each column of `x` (rows must
    /// match), in the blocked form `Q = I - Y T Yᵀ` so the work runs through
    /// matrix products.
    fn apply_q(&self, x: &mut ColMajor) {
        let (m, n) = (x.rows, self.vs.len());
        let mut y = DenseMatrix::zeros(m, n);
        for (k, v) in self.vs.iter().enumerate() {
            for (i, &vi) in v.iter().enumerate() {
                y[(k + i, k)] = vi;
            }
        }
        let g = y.t_matmul(&y);
        let mut t = DenseMatrix::zeros(n, n);
        for k in 0..n {
            let beta = self.betas[k];
            t[(k, k)] = beta;
            for i in 0..k {
                let s: f64 = (i..k).map(|l| t[(i, l)] * g[(l, k)]).sum();
                t[(i, k)] = -beta * s;
            }
        }
        let c = x.to_matrix();
        let w = t.matmul(&y.t_matmul(&c));
        let out = c.sub(&y.matmul(&w));
        *x = ColMajor::from_matrix(&out);
    }
}

/// In-place Householder QR of a tall column-major matrix. On return the upper
/// triangle of `a` holds `R`. With `pivot`, columns are permuted so that the
/// largest remaining column leads each step; `perm[k]` is the original index
/// of column `k`.
fn householder_qr(a: &mut ColMajor, pivot: bool) -> (Reflectors, Vec<usize>) {
    let (m, n) = (a.rows, a.cols);
    let mut vs = Vec::with_capacity(n);
    let mut betas = Vec::with_capacity(n);
    let mut perm: Vec<usize> = (0..n).collect();
    // Squared norms of the trailing parts of each column, and the values they
    // were last recomputed at (downdating loses accuracy as they shrink).
    let mut partial: Vec<f64> = (0..n).map(|j| dot(a.col(j), a.col(j))).collect();
    let mut reference = partial.clone();
    for k in 0..n {
        if pivot {
            let best = (k..n).fold(k, |b, j| if partial[j] > partial[b] { j } else { b });
            if best != k {
                let (ck, cb) = a.col_pair(k, best);
                ck.swap_with_slice(cb);
                perm.swap(k, best);
                partial.swap(k, best);
                reference.swap(k, best);
            }
        }
        let x = &a.col(k)[k..];
        let norm = dot(x, x).sqrt();
        if norm == 0.0 {
            vs.push(vec![0.0; m - k]);
            betas.push(0.0);
            continue;
        }
        let alpha = if x[0] >= 0.0 { -norm } else { norm };
        let mut v = x.to_vec();
        v[0] -= alpha;
        let vtv = dot(&v, &v);
        let beta = if vtv == 0.0 { 0.0 } else { 2.0 / vtv };
        {
            let col = a.col_mut(k);
            col[k] = alpha;
            col[k + 1..].iter_mut().for_each(|x| *x = 0.0);
        }
        for j in k + 1..n {
            let col = a.col_mut(j);
            if beta != 0.0 {
                let tail = &mut col[k..];
                let s = beta * dot(&v, tail);
                if s != 0.0 {
                    axpy(-s, &v, tail);
                }
            }
            if pivot {
                partial[j] -= col[k] * col[k];
                if partial[j] <= 1e-8 * reference[j] {
                    partial[j] = dot(&col[k + 1..], &col[k + 1..]);
                    reference[j] = partial[j];
                }
            }
        }
        vs.push(v);
        betas.push(beta);
    }
    (Reflectors { vs, betas }, perm)
}

/// Orthonormal basis of the column space of a tall matrix (thin `Q` of QR).
fn orthonormal_basis(m: &DenseMatrix) -> DenseMatrix {
    let mut work = ColMajor::from_matrix(m);
    let (refl, _) = householder_qr(&mut work, false);
    let mut q = ColMajor::zeros(m.rows(), m.cols());
    for j in 0..m.cols() {
        q.col_mut(j)[j] = 1.0;
    }
    refl.apply_q(&mut q);
    q.to_matrix()
}

/// One-sided Jacobi: orthogonalizes the columns of `a` in place while
/// accumulating the right rotations in `v`.
fn one_sided_jacobi(a: &mut ColMajor, v: &mut ColMajor, shape: (usize, usize)) -> Result<()> {
    let n = a.cols;
    let tol = f64::EPSILON * (a.rows.max(1) as f64);
    // Columns below eps·‖A‖_F are rounding noise; rotating them can cycle.
    let negligible = f64::EPSILON * f64::EPSILON * dot(&a.data, &a.data);
    for _ in 0..MAX_SWEEPS {
        // Squared column norms, refreshed each sweep and updated in closed
        // form after every rotation.
        let mut norms: Vec<f64> = (0..n).map(|j| dot(a.col(j), a.col(j))).collect();
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (alpha, beta) = (norms[p], norms[q]);
                if alpha <= negligible || beta <= negligible {
                    continue;
                }
                let (ap, aq) = a.col_pair(p, q);
                let gamma = dot(ap, aq);
                if gamma == 0.0 || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(ap, aq, c, s);
                let (vp, vq) = v.col_pair(p, q);
                rotate(vp, vq, c, s);
                norms[p] = (alpha - t * gamma).max(0.0);
                norms[q] = beta + t * gamma;
            }
        }
        if !rotated {
            return Ok(());
        }
    }
    Err(Error::SvdNoConvergence { rows: shape.0, cols: shape.1, sweeps: MAX_SWEEPS })
}

fn rotate(x: &mut [f64], y: &mut [f64], c: f64, s: f64) {
    for (xi, yi) in x.iter_mut().zip(y.iter_mut()) {
        let (a, b) = (*xi, *yi);
        *xi = c * a - s * b;
        *yi = s * a + c * b;
    }
}

// With column pivoting `A P = Q R`. Jacobi runs on `X = Rᵀ`, whose graded
// columns converge in few sweeps: `X W = Y` with orthogonal columns gives
// `R = W Σ U_Xᵀ`, so `U = Q W` and `V = P U_X` with `U_X = Y Σ⁻¹`.
fn tall_svd(m: &DenseMatrix) -> Result<SvdResult> {
    let (rows, n) = m.shape();
    let mut work = ColMajor::from_matrix(m);
    let (refl, perm) = householder_qr(&mut work, true);

    let mut x = ColMajor::zeros(n, n);
    for j in 0..n {
        for (i, &r) in work.col(j)[..=j].iter().enumerate() {
            x.data[i * n + j] = r;
        }
    }
    let mut w = ColMajor::zeros(n, n);
    for j in 0..n {
        w.col_mut(j)[j] = 1.0;
    }
    one_sided_jacobi(&mut x, &mut w, (rows, n))?;

    let norms: Vec<f64> = (0..n).map(|j| dot(x.col(j), x.col(j)).sqrt()).collect();
    // Directions below eps·‖A‖_F carry no information; their right vectors
    // come from basis completion.
    let null_tol = f64::EPSILON * norms.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]).then(a.cmp(&b)));

    let mut ux = ColMajor::zeros(n, n);
    let mut u = ColMajor::zeros(rows, n);
    let mut sigma = Vec::with_capacity(n);
    let mut null_cols = Vec::new();
    for (dst, &src) in order.iter().enumerate() {
        let s = norms[src];
        sigma.push(s);
        u.col_mut(dst)[..n].copy_from_slice(w.col(src));
        if s > null_tol && s.is_normal() {
            for (o, y) in ux.col_mut(dst).iter_mut().zip(x.col(src)) {
                *o = y / s;
            }
        } else {
            null_cols.push(dst);
        }
    }
    complete_basis(&mut ux, &null_cols);
    refl.apply_q(&mut u);

    let mut v = DenseMatrix::zeros(n, n);
    for (k, &orig) in perm.iter().enumerate() {
        for j in 0..n {
            v[(orig, j)] = ux.col(j)[k];
        }
    }
    let mut out = SvdResult { u: u.to_matrix(), sigma: DenseVector::from_vec_unchecked(sigma), v };
    fix_signs(&mut out);
    Ok(out)
}

/// Fills the listed columns of a square matrix with unit vectors orthogonal
/// to every other column (modified Gram-Schmidt against the canonical basis).
fn complete_basis(u: &mut ColMajor, null_cols: &[usize]) {
    let n = u.rows;
    for &j in null_cols {
        let mut filled = false;
        for e in 0..n {
            let mut cand = vec![0.0; n];
            cand[e] = 1.0;
            for _ in 0..2 {
                for k in 0..u.cols {
                    // Unfilled null columns are zero and drop out.
                    if k == j {
                        continue;
                    }
                    let c = dot(u.col(k), &cand);
                    axpy(-c, u.col(k), &mut cand);
                }
            }
            let norm = dot(&cand, &cand).sqrt();
            if norm > 0.5 {
                for (o, c) in u.col_mut(j).iter_mut().zip(&cand) {
                    *o = c / norm;
                }
                filled = true;
                break;
            }
        }
        debug_assert!(filled, "basis completion failed");
    }
}

fn fix_signs(s: &mut SvdResult) {
    let (m, r) = s.u.shape();
    let n = s.v.rows();
    for j in 0..r {
        let mut best = 0.0f64;
        let mut sign = 1.0;
        for i in 0..m {
            let x = s.u[(i, j)];
            if x.abs() > best {
                best = x.abs();
                sign = x.signum();
            }
        }
        if sign < 0.0 {
            for i in 0..m {
                s.u[(i, j)] = -s.u[(i, j)];
            }
            for i in 0..n {
                s.v[(i, j)] = -s.v[(i, j)];
            }
        }
    }
}

/// Settings for the randomized range-finder SVD.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomizedSvd {
    pub target_rank: usize,
    pub oversample: usize,
    pub power_iters: usize,
    pub seed: u64,
}

impl RandomizedSvd {
    pub fn new(target_rank: usize) -> Self {
        RandomizedSvd { target_rank, oversample: 10, power_iters: 2, seed: 0x5eed_5eed }
    }

    pub fn oversample(mut self, oversample: usize) -> Self {
        self.oversample = oversample;
        self
    }

    pub fn power_iters(mut self, power_iters: usize) -> Self {
        self.power_iters = power_iters;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Rank-`target_rank` approximation through a Gaussian sketch, optional power
/// iterations (re-orthonormalized each half step) and an exact SVD of the
/// projected `(k + p) x n` matrix.
pub fn randomized_svd(m: &DenseMatrix, opts: RandomizedSvd) -> Result<SvdResult> {
    let (rows, cols) = m.shape();
    let k = opts.target_rank;
    let l = k + opts.oversample;
    if k == 0 {
        return Err(Error::InvalidParameter("randomized SVD target rank must be >= 1".into()));
    }
    if l > rows.min(cols) {
        return Err(Error::InvalidParameter(format!(
            "randomized SVD target rank {k} + oversample {} exceeds min({rows}, {cols})",
            opts.oversample
        )));
    }
    if !m.is_finite() {
        return Err(Error::NonFinite("randomized svd input"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let omega = DenseMatrix::from_fn(cols, l, |_, _| StandardNormal.sample(&mut rng));
    let mut q = orthonormal_basis(&m.matmul(&omega));
    for _ in 0..opts.power_iters {
        let z = orthonormal_basis(&m.t_matmul(&q));
        q = orthonormal_basis(&m.matmul(&z));
    }
    let b = q.t_matmul(m); // l x cols
    let small = svd(&b)?;
    let u_full = q.matmul(&small.u); // rows x l
    let u = DenseMatrix::from_fn(rows, k, |i, j| u_full[(i, j)]);
    let v = DenseMatrix::from_fn(cols, k, |i, j| small.v[(i, j)]);
    let sigma = DenseVector::from_vec_unchecked(small.sigma.as_slice()[..k].to_vec());
    let mut out = SvdResult { u, sigma, v };
    fix_signs(&mut out);
    Ok(out)
}

/// Largest singular value by power iteration on `MᵀM`, deterministic start.
/// Never overestimates (up to rounding).
pub fn spectral_norm_estimate(m: &DenseMatrix, iters: usize) -> f64 {
    let n = m.cols();
    let mut x: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * ((i * 7919) % 13) as f64).collect();
    let mut est = 0.0;
    for _ in 0..iters.max(1) {
        let norm = dot(&x, &x).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        x.iter_mut().for_each(|v| *v /= norm);
        let y = m.matvec(&x);
        let ny = dot(&y, &y).sqrt();
        if ny == 0.0 {
            return est;
        }
        let next = ny;
        let converged = (next - est).abs() <= 1e-12 * next;
        est = next;
        x = m.t_matvec(&y);
        if converged {
            break;
        }
    }
    est
}
