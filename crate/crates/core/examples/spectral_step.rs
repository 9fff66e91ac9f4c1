//! The spectral step for a matrix block: exact and randomized SVD, the
//! Schatten norms involved, and a check that no random step of the same
//! surrogate does better.

use ssd_rbm::linalg::{randomized_svd, schatten_norm, svd, DenseMatrix, NormKind, RandomizedSvd};
use ssd_rbm::optimizer::{ssd_matrix_direction, ssd_matrix_step, ssd_vector_direction, SvdMode};
use ssd_rbm::sampler::RngStream;
use ssd_rbm::verify::surrogate_argmin_matrix;

fn main() -> ssd_rbm::Result<()> {
    let mut rng = RngStream::new(21);
    // A gradient with a few dominant directions, as weight gradients tend to have.
    let low =
        DenseMatrix::from_fn(60, 3, |_, _| rng.normal()).matmul(&DenseMatrix::from_fn(3, 20, |_, _| rng.normal()));
    let g = low.add(&DenseMatrix::from_fn(60, 20, |_, _| 0.05 * rng.normal()));

    let s = svd(&g)?;
    println!("leading singular values: {:.3?}", &s.sigma.as_slice()[..6]);
    println!(
        "nuclear {:.3}, frobenius {:.3}, spectral {:.3}",
        schatten_norm(&g, NormKind::L1)?,
        schatten_norm(&g, NormKind::L2)?,
        schatten_norm(&g, NormKind::Inf)?
    );

    let exact = ssd_matrix_direction(&g, SvdMode::Exact)?;
    let approx = ssd_matrix_direction(&g, SvdMode::Randomized { target_rank: 5, oversample: 5 })?;
    println!(
        "direction: nuclear norm of gradient times U Vᵀ; spectral norm {:.3}",
        schatten_norm(&exact, NormKind::Inf)?
    );
    // The randomized mode uses the leading subspace it found and adds the
    // leftover part of the gradient, rescaled to the same spectral norm.
    println!(
        "randomized direction: spectral norm {:.3}, relative gap to exact {:.3}",
        schatten_norm(&approx, NormKind::Inf)?,
        exact.sub(&approx).frobenius_norm() / exact.frobenius_norm()
    );

    let r = randomized_svd(&g, RandomizedSvd::new(3).seed(1))?;
    println!("rank-3 randomized residual {:.4}", g.sub(&r.reconstruct()).frobenius_norm());

    let w = DenseMatrix::zeros(60, 20);
    let next = ssd_matrix_step(&w, &g, 0.01, SvdMode::Exact)?;
    println!(
        "one step from zero with eps = 0.01 moves W by {:.4} in spectral norm",
        schatten_norm(&next, NormKind::Inf)?
    );

    let report = surrogate_argmin_matrix(&g, 1.0, 2000, &mut rng)?;
    println!("2000 random candidates, {} beat the spectral step", report.violations);

    println!("vector analogue for g = [3, -1, 0.5]: {:?}", ssd_vector_direction(&[3.0, -1.0, 0.5]));
    Ok(())
}
