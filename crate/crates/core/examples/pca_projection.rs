//! Principal components of correlated data and how much variance the
//! leading ones keep.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use emofuse::preprocess::PcaModel;
use emofuse::{Result, Tensor};

fn main() -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    // two latent factors spread over ten observed columns plus noise
    let rows: Vec<Vec<f64>> = (0..200)
        .map(|_| {
            let (a, b): (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
            (0..10)
                .map(|j| a * (j as f64 / 10.0) + b * (1.0 - j as f64 / 10.0) + 0.1 * rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect();
    let x = Tensor::from_rows(&rows)?;
    let pca = PcaModel::fit(&x, 4)?;
    for (i, v) in pca.explained_variance.iter().enumerate() {
        println!("component {i}: variance {v:.4} ({:.1}% of total)", 100.0 * v / pca.total_variance);
    }
    let projected = pca.apply(&x)?;
    let back = pca.reconstruct(&projected)?;
    println!("reconstruction max error with 4 of 10 components: {:.3}", x.max_abs_diff(&back).unwrap());
    Ok(())
}
