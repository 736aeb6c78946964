//! Dense row-major tensors of `f64`.
//!
//! A [`Tensor`] is an immutable value: the buffer sits behind an `Arc`, so
//! cloning is cheap and parameter snapshots share storage until one side
//! is written through [`Tensor::data_mut`].

use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Arc<Vec<f64>>,
}

impl Tensor {
    /// Builds a tensor from external data, rejecting zero extents,
    /// length mismatches and non-finite values.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::InvalidTensor(format!(
                "shape {shape:?} has a zero extent"
            )));
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::InvalidTensor(format!(
                "shape {shape:?} needs {numel} values, got {}",
                data.len()
            )));
        }
        if let Some((index, &value)) = data.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { index, value });
        }
        Ok(Self::from_parts(shape, data))
    }

    /// Internal constructor for computed values; only the length is checked.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor {
            shape,
            data: Arc::new(data),
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self::from_parts(vec![], vec![value])
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Self::from_parts(shape.to_vec(), vec![value; n])
    }

    /// `n × n` identity matrix.
    pub fn eye(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Self::from_parts(vec![n, n], data)
    }

    pub fn vector(data: Vec<f64>) -> Result<Self> {
        let n = data.len();
        Self::new(vec![n], data)
    }

    /// Builds a matrix from equal-length rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != n_cols {
                return Err(Error::InvalidTensor(format!(
                    "row {i} has {} values, expected {n_cols}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Self::new(vec![n_rows, n_cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Mutable access to the buffer; copies it first if it is shared.
    pub fn data_mut(&mut self) -> &mut [f64] {
        Arc::make_mut(&mut self.data).as_mut_slice()
    }

    pub fn into_vec(self) -> Vec<f64> {
        Arc::try_unwrap(self.data).unwrap_or_else(|shared| (*shared).clone())
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// Row count when viewed as a matrix whose column count is the last extent.
    pub fn rows(&self) -> usize {
        match self.shape.last() {
            Some(&c) => self.numel() / c,
            None => 1,
        }
    }

    /// Last extent (1 for scalars).
    pub fn cols(&self) -> usize {
        self.shape.last().copied().unwrap_or(1)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn get2(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols() + j]
    }

    pub fn item(&self) -> f64 {
        self.data[0]
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        if shape.iter().product::<usize>() != self.numel() {
            return Err(Error::shape("reshape", &self.shape, shape));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data: Arc::clone(&self.data),
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Self::from_parts(self.shape.clone(), self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Largest absolute elementwise difference; `None` when shapes differ.
    pub fn max_abs_diff(&self, other: &Tensor) -> Option<f64> {
        if self.shape != other.shape {
            return None;
        }
        Some(
            self.data
                .iter()
                .zip(other.data.iter())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max),
        )
    }
}

#[derive(Serialize, Deserialize)]
struct TensorRepr {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Serialize for Tensor {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        TensorRepr {
            shape: self.shape.clone(),
            data: self.data.to_vec(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Tensor {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = TensorRepr::deserialize(deserializer)?;
        Tensor::new(repr.shape, repr.data).map_err(serde::de::Error::custom)
    }
}

// Raw kernels shared by the tape and by forward-only code. Products are
// built from row updates `out_row += a · b_row`, which vectorize well; on
// x86-64 a copy compiled for AVX2 is picked at runtime. No FMA, so both
// copies round identically.

// Column tile width; four output rows of it stay in L1.
const TILE: usize = 256;

/// `rows[r][..] += coef[r] · b[..]` for four rows at once, so every load of
/// `b` is used four times.
#[inline(always)]
fn update4(rows: [&mut [f64]; 4], coef: [f64; 4], b: &[f64]) {
    let [r0, r1, r2, r3] = rows;
    let len = b.len();
    let (r0, r1, r2, r3) = (&mut r0[..len], &mut r1[..len], &mut r2[..len], &mut r3[..len]);
    for j in 0..len {
        let bv = b[j];
        r0[j] += coef[0] * bv;
        r1[j] += coef[1] * bv;
        r2[j] += coef[2] * bv;
        r3[j] += coef[3] * bv;
    }
}

#[inline(always)]
fn update1(row: &mut [f64], coef: f64, b: &[f64]) {
    for (o, &bv) in row.iter_mut().zip(b) {
        *o += coef * bv;
    }
}

/// Four consecutive row tiles of a row-major matrix.
#[inline(always)]
fn four_rows(out: &mut [f64], first: usize, stride: usize, cols: std::ops::Range<usize>) -> [&mut [f64]; 4] {
    let block = &mut out[first * stride..(first + 4) * stride];
    let (a, rest) = block.split_at_mut(stride);
    let (b, rest) = rest.split_at_mut(stride);
    let (c, d) = rest.split_at_mut(stride);
    [&mut a[cols.clone()], &mut b[cols.clone()], &mut c[cols.clone()], &mut d[cols]]
}

// out[m×n] += a[m×k] · b[k×n]
#[inline(always)]
fn axpy_rows(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    for j0 in (0..n).step_by(TILE) {
        let cols = j0..(j0 + TILE).min(n);
        let mut i = 0;
        while i + 4 <= m {
            let [r0, r1, r2, r3] = four_rows(out, i, n, cols.clone());
            for p in 0..k {
                let coef = [a[i * k + p], a[(i + 1) * k + p], a[(i + 2) * k + p], a[(i + 3) * k + p]];
                update4([&mut *r0, &mut *r1, &mut *r2, &mut *r3], coef, &b[p * n + cols.start..p * n + cols.end]);
            }
            i += 4;
        }
        for i in i..m {
            for p in 0..k {
                let row = &mut out[i * n + cols.start..i * n + cols.end];
                update1(row, a[i * k + p], &b[p * n + cols.start..p * n + cols.end]);
            }
        }
    }
}

// out[k×n] += a[m×k]ᵀ · b[m×n]
#[inline(always)]
fn axpy_cols(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    for j0 in (0..n).step_by(TILE) {
        let cols = j0..(j0 + TILE).min(n);
        let mut p = 0;
        while p + 4 <= k {
            let [r0, r1, r2, r3] = four_rows(out, p, n, cols.clone());
            for i in 0..m {
                let coef = [a[i * k + p], a[i * k + p + 1], a[i * k + p + 2], a[i * k + p + 3]];
                update4([&mut *r0, &mut *r1, &mut *r2, &mut *r3], coef, &b[i * n + cols.start..i * n + cols.end]);
            }
            p += 4;
        }
        for p in p..k {
            for i in 0..m {
                let row = &mut out[p * n + cols.start..p * n + cols.end];
                update1(row, a[i * k + p], &b[i * n + cols.start..i * n + cols.end]);
            }
        }
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn axpy_rows_avx2(a: &[f64], b: &[f64], rows: usize, k: usize, n: usize, out: &mut [f64]) {
    axpy_rows(a, b, rows, k, n, out)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn axpy_cols_avx2(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    axpy_cols(a, b, m, k, n, out)
}

fn has_avx2() -> bool {
    #[cfg(target_arch = "x86_64")]
    {
        std::is_x86_feature_detected!("avx2")
    }
    #[cfg(not(target_arch = "x86_64"))]
    {
        false
    }
}

/// `out[m×n] += a[m×k] · b[k×n]`
pub(crate) fn matmul_acc(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    assert!(a.len() >= m * k && b.len() >= k * n && out.len() >= m * n);
    #[cfg(target_arch = "x86_64")]
    if has_avx2() {
        // SAFETY: the CPU supports AVX2, checked just above.
        return unsafe { axpy_rows_avx2(a, b, m, k, n, out) };
    }
    axpy_rows(a, b, m, k, n, out)
}

/// `out[m×n] = a[m×k] · b[k×n]`
pub(crate) fn matmul_kernel(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    matmul_acc(a, b, m, k, n, &mut out);
    out
}

/// `out[m×k] = a[m×n] · b[k×n]ᵀ`
#[cfg(test)]
pub(crate) fn matmul_nt_kernel(a: &[f64], b: &[f64], m: usize, n: usize, k: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * k];
    matmul_nt_acc(a, b, m, n, k, &mut out);
    out
}

/// `out[m×k] += a[m×n] · b[k×n]ᵀ`
pub(crate) fn matmul_nt_acc(a: &[f64], b: &[f64], m: usize, n: usize, k: usize, out: &mut [f64]) {
    // Transposing `b` pays off only when many rows of `a` reuse it.
    if m < 8 {
        for i in 0..m {
            let a_row = &a[i * n..(i + 1) * n];
            for p in 0..k {
                out[i * k + p] += dot(a_row, &b[p * n..(p + 1) * n]);
            }
        }
        return;
    }
    let mut bt = Vec::with_capacity(n * k);
    for j in 0..n {
        bt.extend((0..k).map(|p| b[p * n + j]));
    }
    matmul_acc(a, &bt, m, n, k, out)
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (xc, yc) = (x.chunks_exact(4), y.chunks_exact(4));
    let tail: f64 = xc.remainder().iter().zip(yc.remainder()).map(|(a, b)| a * b).sum();
    for (a, b) in xc.zip(yc) {
        for j in 0..4 {
            acc[j] += a[j] * b[j];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `out[k×n] = a[m×k]ᵀ · b[m×n]`
#[cfg(test)]
pub(crate) fn matmul_tn_kernel(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; k * n];
    matmul_tn_acc(a, b, m, k, n, &mut out);
    out
}

/// `out[k×n] += a[m×k]ᵀ · b[m×n]`
pub(crate) fn matmul_tn_acc(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    assert!(a.len() >= m * k && b.len() >= m * n && out.len() >= k * n);
    #[cfg(target_arch = "x86_64")]
    if has_avx2() {
        // SAFETY: the CPU supports AVX2, checked just above.
        return unsafe { axpy_cols_avx2(a, b, m, k, n, out) };
    }
    axpy_cols(a, b, m, k, n, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_construction() {
        assert!(Tensor::new(vec![2, 2], vec![1.0; 3]).is_err());
        assert!(Tensor::new(vec![0, 2], vec![]).is_err());
        let err = Tensor::new(vec![2], vec![1.0, f64::NAN]).unwrap_err();
        assert!(matches!(err, Error::NonFinite { index: 1, .. }));
        assert!(Tensor::new(vec![1], vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn reshape_shares_storage() {
        let t = Tensor::new(vec![2, 3], (0..6).map(f64::from).collect()).unwrap();
        let r = t.reshape(&[3, 2]).unwrap();
        assert_eq!(r.row(2), &[4.0, 5.0]);
        assert!(t.reshape(&[4]).is_err());
    }

    #[test]
    fn data_mut_copies_on_write() {
        let a = Tensor::zeros(&[3]);
        let mut b = a.clone();
        b.data_mut()[0] = 1.0;
        assert_eq!(a.data(), &[0.0, 0.0, 0.0]);
        assert_eq!(b.data(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn serde_rejects_mismatched_length() {
        let bad = r#"{"shape":[2,2],"data":[1.0,2.0]}"#;
        assert!(serde_json::from_str::<Tensor>(bad).is_err());
        let t = Tensor::eye(2);
        let back: Tensor = serde_json::from_str(&serde_json::to_string(&t).unwrap()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn kernels_agree() {
        let a: Vec<f64> = (0..6).map(|v| v as f64 * 0.5 - 1.0).collect(); // 2x3
        let b: Vec<f64> = (0..12).map(|v| (v as f64).sin()).collect(); // 3x4
        let ab = matmul_kernel(&a, &b, 2, 3, 4);
        // bᵀ stored explicitly (4x3)
        let mut bt = vec![0.0; 12];
        for i in 0..3 {
            for j in 0..4 {
                bt[j * 3 + i] = b[i * 4 + j];
            }
        }
        assert_eq!(matmul_nt_kernel(&a, &bt, 2, 3, 4), ab);
        let mut at = vec![0.0; 6];
        for i in 0..2 {
            for j in 0..3 {
                at[j * 2 + i] = a[i * 3 + j];
            }
        }
        let via_tn = matmul_tn_kernel(&at, &b, 3, 2, 4);
        for (x, y) in via_tn.iter().zip(&ab) {
            assert!((x - y).abs() < 1e-15);
        }
    }
}
