//! The exact oracle on a model small enough to enumerate: log-partition,
//! loss and gradients, checked against central finite differences.

use ssd_rbm::gradient::exact_gradients;
use ssd_rbm::linalg::DenseMatrix;
use ssd_rbm::model::{exact_log_partition, exact_loss, CovarianceKind, DataBatch, Family, RbmParams};
use ssd_rbm::sampler::RngStream;

fn main() -> ssd_rbm::Result<()> {
    let mut rng = RngStream::new(11);
    let mut params = RbmParams::random_init(Family::Gaussian, 5, 4, CovarianceKind::DiagonalLog, 0.5, &mut rng);
    params.b = ssd_rbm::linalg::DenseVector::new((0..5).map(|_| 0.3 * rng.normal()).collect())?;
    let batch = DataBatch::new(DenseMatrix::from_fn(8, 5, |_, _| rng.normal()));

    println!("log Z           = {:.6}", exact_log_partition(&params)?);
    println!("loss            = {:.6}", exact_loss(&params, &batch)?);

    let g = exact_gradients(&params, &batch)?;
    const H: f64 = 1e-5;
    let mut worst = 0.0f64;
    for i in 0..params.n_visible() {
        for j in 0..params.n_hidden() {
            let (mut plus, mut minus) = (params.clone(), params.clone());
            plus.w[(i, j)] += H;
            minus.w[(i, j)] -= H;
            let fd = (exact_loss(&plus, &batch)? - exact_loss(&minus, &batch)?) / (2.0 * H);
            worst = worst.max((fd - g.dw[(i, j)]).abs());
        }
    }
    println!("dL/dW           =\n{:?}", g.dw);
    println!("dL/db           = {:?}", g.db.as_slice());
    println!("dL/da           = {:?}", g.da.as_slice());
    println!("dL/dlog(prec)   = {:?}", g.dcov.as_ref().map(|c| c.values().to_vec()));
    println!("max |finite difference - analytic| over W = {worst:.2e}");
    Ok(())
}
