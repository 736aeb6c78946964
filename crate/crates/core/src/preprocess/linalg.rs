//! Dense symmetric eigendecomposition by cyclic Jacobi rotations.

/// Off-diagonal Frobenius norm, relative to the full norm, at which
/// sweeping stops.
pub const JACOBI_TOLERANCE: f64 = 1e-12;
const MAX_SWEEPS: usize = 100;

/// Eigenpairs of a symmetric matrix.
#[derive(Clone, Debug)]
pub struct SymmetricEigen {
    /// Unsorted eigenvalues.
    pub values: Vec<f64>,
    /// Row-major `n×n`; column `j` is the eigenvector of `values[j]`.
    pub vectors: Vec<f64>,
    pub sweeps: usize,
}

/// Diagonalizes the symmetric row-major `n×n` matrix `a`. Only symmetric
/// input is meaningful; the upper triangle is mirrored before sweeping.
pub fn jacobi_eigen(a: &[f64], n: usize) -> SymmetricEigen {
    assert_eq!(a.len(), n * n, "jacobi_eigen: expected {n}x{n} matrix");
    let mut m = a.to_vec();
    for i in 0..n {
        for j in 0..i {
            m[i * n + j] = m[j * n + i];
        }
    }
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let total: f64 = m.iter().map(|x| x * x).sum::<f64>().sqrt();
    let threshold = JACOBI_TOLERANCE * total.max(f64::MIN_POSITIVE);

    let mut sweeps = 0;
    while sweeps < MAX_SWEEPS {
        let off = off_diagonal_norm(&m, n);
        if off <= threshold {
            break;
        }
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[q * n + q] - m[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (m[k * n + p], m[k * n + q]);
                    m[k * n + p] = c * akp - s * akq;
                    m[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (m[p * n + k], m[q * n + k]);
                    m[p * n + k] = c * apk - s * aqk;
                    m[q * n + k] = s * apk + c * aqk;
                }
                m[p * n + q] = 0.0;
                m[q * n + p] = 0.0;
                for k in 0..n {
                    let (vkp, vkq) = (v[k * n + p], v[k * n + q]);
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    SymmetricEigen {
        values: (0..n).map(|i| m[i * n + i]).collect(),
        vectors: v,
        sweeps,
    }
}

fn off_diagonal_norm(m: &[f64], n: usize) -> f64 {
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                acc += m[i * n + j] * m[i * n + j];
            }
        }
    }
    acc.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_input_is_returned_as_is() {
        let e = jacobi_eigen(&[3.0, 0.0, 0.0, -1.0], 2);
        assert_eq!(e.values, vec![3.0, -1.0]);
        assert_eq!(e.sweeps, 0);
    }

    #[test]
    fn reconstructs_symmetric_matrix() {
        let a = [4.0, 1.0, -2.0, 1.0, 2.0, 0.5, -2.0, 0.5, 3.0];
        let e = jacobi_eigen(&a, 3);
        for i in 0..3 {
            for j in 0..3 {
                let r: f64 = (0..3).map(|k| e.vectors[i * 3 + k] * e.values[k] * e.vectors[j * 3 + k]).sum();
                assert!((r - a[i * 3 + j]).abs() < 1e-12);
            }
        }
    }
}
