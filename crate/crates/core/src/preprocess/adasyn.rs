//! Adaptive synthetic oversampling.
//!
//! For every class below the majority count, `G = round((n_maj − n_c)·β)`
//! synthetic rows are spread over that class's points in proportion to how
//! many of each point's `k` nearest neighbours (all classes) belong to other
//! classes, rounded by largest remainder so the class gets exactly `G`.
//! Each synthetic row interpolates a point towards one of its `k`
//! nearest same-class neighbours.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdasynConfig {
    pub k: usize,
    pub beta: f64,
    pub seed: u64,
}

impl Default for AdasynConfig {
    fn default() -> Self {
        AdasynConfig {
            k: 5,
            beta: 1.0,
            seed: 7,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResampleReport {
    pub before: Vec<usize>,
    pub after: Vec<usize>,
    pub synthetic: Vec<usize>,
    pub k_neighbors: usize,
    pub beta: f64,
    pub seed: u64,
    pub warnings: Vec<String>,
}

/// Oversampled data: the original rows, unchanged and in order, followed
/// by the synthetic rows grouped by class.
#[derive(Clone, Debug)]
pub struct Resampled {
    pub x: Tensor,
    pub y: Vec<usize>,
    /// For each synthetic row: `(base row, neighbour row, λ)` indices into the input.
    pub provenance: Vec<(usize, usize, f64)>,
    pub report: ResampleReport,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Indices of the `k` rows of `candidates` closest to row `i`, excluding `i`.
/// Ties break towards the lower index.
fn nearest(x: &Tensor, i: usize, candidates: &[usize], k: usize) -> Vec<usize> {
    let anchor = x.row(i);
    let mut scored: Vec<(f64, usize)> = candidates
        .iter()
        .filter(|&&j| j != i)
        .map(|&j| (sq_dist(anchor, x.row(j)), j))
        .collect();
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if scored.len() > k {
        scored.select_nth_unstable_by(k, cmp);
        scored.truncate(k);
    }
    scored.sort_by(cmp);
    scored.into_iter().map(|(_, j)| j).collect()
}

/// Splits `total` into integers proportional to `weights` (which sum to 1)
/// by largest remainder, so the parts always add up to `total`. Equal
/// remainders go to the earlier position.
fn apportion(weights: &[f64], total: usize) -> Vec<usize> {
    let exact: Vec<f64> = weights.iter().map(|w| w * total as f64).collect();
    let mut parts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let assigned: usize = parts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        parts[i] += 1;
    }
    parts
}

pub fn adasyn(x: &Tensor, y: &[usize], num_classes: usize, config: &AdasynConfig) -> Result<Resampled> {
    let n = x.rows();
    if x.rank() != 2 || y.len() != n {
        return Err(Error::shape("adasyn", x.shape(), &[y.len()]));
    }
    if config.k == 0 {
        return Err(Error::InvalidArgument("ADASYN needs k >= 1".into()));
    }
    if !(config.beta.is_finite() && config.beta >= 0.0) {
        return Err(Error::InvalidArgument(format!("ADASYN beta {} must be >= 0", config.beta)));
    }
    if let Some(&bad) = y.iter().find(|&&l| l >= num_classes) {
        return Err(Error::InvalidArgument(format!("label {bad} out of range")));
    }

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (i, &l) in y.iter().enumerate() {
        members[l].push(i);
    }
    let before: Vec<usize> = members.iter().map(Vec::len).collect();
    let majority = before.iter().copied().max().unwrap_or(0);
    let everyone: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut warnings = Vec::new();
    let mut synthetic_rows: Vec<f64> = Vec::new();
    let mut synthetic_labels = Vec::new();
    let mut provenance = Vec::new();
    let mut synthetic = vec![0usize; num_classes];

    for (class, idx) in members.iter().enumerate() {
        let count = idx.len();
        if count == majority || count == 0 {
            if count == 0 && majority > 0 {
                warnings.push(format!("class {class} has no samples; nothing to oversample"));
            }
            continue;
        }
        let needed = ((majority - count) as f64 * config.beta).round_ties_even() as usize;
        if needed == 0 {
            continue;
        }
        if count < 2 {
            return Err(Error::InvalidArgument(format!(
                "ADASYN: class {class} has {count} sample; at least 2 are needed to interpolate"
            )));
        }
        let k_all = config.k.min(n - 1);
        let k_own = config.k.min(count - 1);
        if k_own < config.k {
            warnings.push(format!(
                "class {class}: k clamped from {} to {k_own} for same-class neighbours",
                config.k
            ));
        }

        let ratios: Vec<f64> = idx
            .iter()
            .map(|&i| {
                let hood = nearest(x, i, &everyone, k_all);
                hood.iter().filter(|&&j| y[j] != class).count() as f64 / k_all as f64
            })
            .collect();
        let total: f64 = ratios.iter().sum();
        let weights: Vec<f64> = if total > 0.0 {
            ratios.iter().map(|r| r / total).collect()
        } else {
            warnings.push(format!(
                "class {class}: no other-class neighbours; spreading synthetic rows uniformly"
            ));
            vec![1.0 / count as f64; count]
        };
        let shares = apportion(&weights, needed);

        for (pos, &i) in idx.iter().enumerate() {
            let g = shares[pos];
            if g == 0 {
                continue;
            }
            let own = nearest(x, i, idx, k_own);
            let base = x.row(i);
            for _ in 0..g {
                let z = own[rng.random_range(0..own.len())];
                let lambda: f64 = rng.random();
                let neighbour = x.row(z);
                synthetic_rows.extend(base.iter().zip(neighbour).map(|(a, b)| a + lambda * (b - a)));
                synthetic_labels.push(class);
                provenance.push((i, z, lambda));
            }
            synthetic[class] += g;
        }
    }

    let mut data = x.data().to_vec();
    data.extend_from_slice(&synthetic_rows);
    let rows = n + synthetic_labels.len();
    let mut labels = y.to_vec();
    labels.extend(synthetic_labels);
    let after = before.iter().zip(&synthetic).map(|(b, s)| b + s).collect();
    Ok(Resampled {
        x: Tensor::from_parts(vec![rows, x.cols()], data),
        y: labels,
        provenance,
        report: ResampleReport {
            before,
            after,
            synthetic,
            k_neighbors: config.k,
            beta: config.beta,
            seed: config.seed,
            warnings,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_input_is_untouched() {
        let x = Tensor::from_rows(&[[0.0, 1.0], [1.0, 0.0], [2.0, 2.0], [3.0, 1.0]]).unwrap();
        let y = [0, 1, 0, 1];
        let out = adasyn(&x, &y, 2, &AdasynConfig::default()).unwrap();
        assert_eq!(out.x, x);
        assert_eq!(out.y, y);
        assert_eq!(out.report.synthetic, vec![0, 0]);
    }

    #[test]
    fn two_point_minority_lies_on_the_segment() {
        let a = [0.3, -1.0];
        let b = [2.0, 0.5];
        let mut rows = vec![a, b];
        for i in 0..8 {
            rows.push([i as f64 * 0.4 - 1.0, 1.5 + (i % 3) as f64]);
        }
        let x = Tensor::from_rows(&rows).unwrap();
        let mut y = vec![1, 1];
        y.extend([0; 8]);
        let out = adasyn(&x, &y, 2, &AdasynConfig { k: 1, beta: 1.0, seed: 3 }).unwrap();
        assert_eq!(out.report.synthetic[1], 6);
        for r in 10..out.x.rows() {
            let p = out.x.row(r);
            // brute force: p = u + λ(v − u) for (u, v) ∈ {(a, b), (b, a)} and λ ∈ [0, 1]
            let on_segment = [(a, b), (b, a)].iter().any(|(u, v)| {
                let lambda = (p[0] - u[0]) / (v[0] - u[0]);
                (0.0..=1.0).contains(&lambda) && (0..2).all(|d| (u[d] + lambda * (v[d] - u[d]) - p[d]).abs() <= 1e-9)
            });
            assert!(on_segment, "{p:?}");
        }
    }

    #[test]
    fn small_shares_still_add_up_to_the_class_total() {
        assert_eq!(apportion(&[0.25; 4], 3), vec![1, 1, 1, 0]);
        assert_eq!(apportion(&[0.5, 0.3, 0.2], 10), vec![5, 3, 2]);
        // well-separated classes: every point has a tiny share
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..40 {
            rows.push([i as f64 * 0.01, 0.0]);
            y.push(0);
        }
        for i in 0..30 {
            rows.push([i as f64 * 0.01, 5.0]);
            y.push(1);
        }
        rows.push([0.0, 4.9]);
        y.push(0);
        let x = Tensor::from_rows(&rows).unwrap();
        let out = adasyn(&x, &y, 2, &AdasynConfig::default()).unwrap();
        assert_eq!(out.report.after, vec![41, 41]);
    }

    #[test]
    fn singleton_minority_is_rejected() {
        let x = Tensor::from_rows(&[[0.0], [1.0], [2.0], [5.0]]).unwrap();
        assert!(adasyn(&x, &[0, 0, 0, 1], 2, &AdasynConfig::default()).is_err());
        assert!(adasyn(&x, &[0, 0, 1, 1], 2, &AdasynConfig { k: 0, ..Default::default() }).is_err());
    }

    #[test]
    fn small_class_clamps_k_with_warning() {
        let x = Tensor::from_rows(&[[0.0], [1.0], [2.0], [3.0], [4.0], [10.0], [11.0], [12.0]]).unwrap();
        let out = adasyn(&x, &[0, 0, 0, 0, 0, 1, 1, 1], 2, &AdasynConfig::default()).unwrap();
        assert!(out.report.warnings.iter().any(|w| w.contains("clamped")));
        assert_eq!(out.report.after[0], 5);
    }
}
