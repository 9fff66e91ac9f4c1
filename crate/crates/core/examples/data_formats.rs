//! Round trip through the RBMMAT1 container, parsing an IDX image file,
//! binarization and minibatching.

use ssd_rbm::data::{binarize, encode_matrix, minibatches, parse_idx, parse_matrix, Binarize, Dataset, Domain};
use ssd_rbm::linalg::DenseMatrix;

fn main() -> ssd_rbm::Result<()> {
    // A 3-image, 2x2-pixel IDX file.
    let mut idx = vec![0, 0, 8, 3];
    for d in [3u32, 2, 2] {
        idx.extend_from_slice(&d.to_be_bytes());
    }
    idx.extend_from_slice(&[0, 64, 128, 255, 255, 0, 0, 255, 10, 20, 30, 40]);
    let images = parse_idx("tiny-images", &idx)?;
    println!("IDX: {} examples x {} pixels, domain {}", images.len(), images.n_visible(), images.domain().name());
    println!("first row scaled to [0, 1]: {:?}", images.row(0));

    let thresholded = binarize(&images, Binarize::Threshold(0.5))?;
    let sampled = binarize(&images, Binarize::Stochastic(7))?;
    println!("threshold 0.5: {:?}", thresholded.row(0));
    println!("stochastic:    {:?}", sampled.row(0));

    let real = Dataset::new("gaussian", DenseMatrix::from_fn(10, 3, |i, j| i as f64 - 2.5 * j as f64), Domain::Real)?;
    let bytes = encode_matrix(&real);
    println!(
        "RBMMAT1 header: {:?}",
        String::from_utf8_lossy(&bytes[..bytes.iter().skip(8).position(|&c| c == b'\n').unwrap() + 9])
    );
    let back = parse_matrix("gaussian", &bytes)?;
    println!("round trip equal: {}", back.matrix() == real.matrix());

    match parse_matrix("broken", &bytes[..bytes.len() - 3]) {
        Err(e) => println!("truncated file rejected: {e}"),
        Ok(_) => unreachable!("a truncated payload cannot parse"),
    }

    for (epoch, seed) in [(0, 1), (1, 1)] {
        let sizes: Vec<usize> = minibatches(&real, 4, seed, epoch)?.iter().map(|b| b.len()).collect();
        println!("epoch {epoch}: minibatch sizes {sizes:?}");
    }
    Ok(())
}
