//! Adaptive synthetic oversampling on class counts shaped like a real
//! learner-emotion corpus.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use emofuse::preprocess::{adasyn, AdasynConfig};
use emofuse::{Result, Tensor};

fn main() -> Result<()> {
    let counts = [1451usize, 2723, 1761, 2275];
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (c, &n) in counts.iter().enumerate() {
        for _ in 0..n {
            rows.push((0..4).map(|j| if j == c { 1.5 } else { 0.0 } + rng.sample::<f64, _>(StandardNormal)).collect::<Vec<f64>>());
            labels.push(c);
        }
    }
    let x = Tensor::from_rows(&rows)?;
    let out = adasyn(&x, &labels, 4, &AdasynConfig::default())?;
    println!("before:    {:?}", out.report.before);
    println!("synthetic: {:?}", out.report.synthetic);
    println!("after:     {:?}", out.report.after);
    for w in &out.report.warnings {
        println!("warning: {w}");
    }
    Ok(())
}
