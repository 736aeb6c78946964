use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const STD_FLOOR: f64 = 1e-8;

/// Per-feature z-scoring learned from training rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    /// Population standard deviation, floored at `epsilon`.
    pub std: Vec<f64>,
    pub epsilon: f64,
}

impl Standardizer {
    /// Fits on an `N×D` matrix, `N ≥ 2`.
    pub fn fit(rows: &Tensor) -> Result<Self> {
        Self::fit_rows(rows.cols(), (0..rows.rows()).map(|i| rows.row(i)))
    }

    /// Fits on an iterator of equal-width rows.
    pub fn fit_rows<'a>(width: usize, rows: impl IntoIterator<Item = &'a [f64]>) -> Result<Self> {
        let rows: Vec<&[f64]> = rows.into_iter().collect();
        if rows.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "standardizer needs at least 2 rows, got {}",
                rows.len()
            )));
        }
        if let Some(bad) = rows.iter().find(|r| r.len() != width) {
            return Err(Error::shape("standardizer", &[width], &[bad.len()]));
        }
        let n = rows.len() as f64;
        let base = rows[0];
        let mean: Vec<f64> = (0..width)
            .map(|j| base[j] + rows.iter().map(|r| r[j] - base[j]).sum::<f64>() / n)
            .collect();
        let std = (0..width)
            .map(|j| {
                let var = rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n;
                var.sqrt().max(STD_FLOOR)
            })
            .collect();
        Ok(Standardizer {
            mean,
            std,
            epsilon: STD_FLOOR,
        })
    }

    pub fn width(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        if x.cols() != self.width() || x.rank() == 0 {
            return Err(Error::shape("standardize", x.shape(), &[self.width()]));
        }
        let d = self.width();
        let data = x
            .data()
            .iter()
            .enumerate()
            .map(|(i, v)| (v - self.mean[i % d]) / self.std[i % d])
            .collect();
        Ok(Tensor::from_parts(x.shape().to_vec(), data))
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn random(rows: usize, cols: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..rows * cols).map(|i| rng.random_range(-5.0..5.0) * (1 + i % cols) as f64 + 3.0).collect();
        Tensor::new(vec![rows, cols], data).unwrap()
    }

    #[test]
    fn constant_column_maps_to_zero() {
        let x = Tensor::from_rows(&[[0.1, 1.0], [0.1, 2.0], [0.1, 4.0]]).unwrap();
        let s = Standardizer::fit(&x).unwrap();
        assert_eq!(s.std[0], STD_FLOOR);
        let y = s.apply(&x).unwrap();
        assert!((0..3).all(|i| y.get2(i, 0) == 0.0));
    }

    #[test]
    fn column_stats_match_two_pass_oracle() {
        let x = random(100, 5, 1);
        let s = Standardizer::fit(&x).unwrap();
        let y = s.apply(&x).unwrap();
        for j in 0..5 {
            let col: Vec<f64> = (0..100).map(|i| x.get2(i, j)).collect();
            let mean = col.iter().sum::<f64>() / 100.0;
            let std = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 100.0).sqrt();
            assert!((s.mean[j] - mean).abs() < 1e-12);
            assert!((s.std[j] - std).abs() < 1e-12);
            let ycol: Vec<f64> = (0..100).map(|i| y.get2(i, j)).collect();
            let ym = ycol.iter().sum::<f64>() / 100.0;
            let ys = (ycol.iter().map(|v| (v - ym).powi(2)).sum::<f64>() / 100.0).sqrt();
            assert!(ym.abs() < 1e-9 && (ys - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn needs_two_rows_and_matching_width() {
        let one = Tensor::from_rows(&[[1.0, 2.0]]).unwrap();
        assert!(Standardizer::fit(&one).is_err());
        let s = Standardizer::fit(&random(4, 2, 3)).unwrap();
        assert!(s.apply(&random(2, 3, 4)).is_err());
    }

    proptest! {
        #[test]
        fn refit_on_output_is_identity(seed in any::<u64>(), rows in 2usize..40, cols in 1usize..6) {
            let x = random(rows, cols, seed);
            let y = Standardizer::fit(&x).unwrap().apply(&x).unwrap();
            let z = Standardizer::fit(&y).unwrap().apply(&y).unwrap();
            prop_assert!(y.max_abs_diff(&z).unwrap() <= 1e-9);
        }
    }
}
