//! Dense real matrix kernel: storage, products, a symmetric eigensolver,
//! quantiles, and seeded random streams.
//!
//! Everything here is deliberately plain `f64` row-major storage with
//! hand-written loops. The matrices in this crate are at most a few thousand
//! rows, the factor matrices are tall and thin, and determinism across
//! platforms and thread counts matters more than peak throughput.

mod eigen;
mod rng;

pub use eigen::{sym_eig, EigenDecomposition};
pub use rng::{rand_matrix, rand_matrix_with, RandomStream};

use crate::{Error, Result};

/// Dense row-major matrix of `f64`.
///
/// Zero-width shapes (`n x 0`, `0 x n`) are valid and occur naturally when a
/// model order has no common or no private communities.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::invalid(format!(
                "data length {} does not match shape {rows}x{cols}",
                data.len()
            )));
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    /// Build from a row-major closure.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        DenseMatrix { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |v| v.len());
        if rows.iter().any(|v| v.len() != c) {
            return Err(Error::invalid("ragged rows"));
        }
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            data.extend_from_slice(row);
        }
        Ok(DenseMatrix { rows: r, cols: c, data })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut t = DenseMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    /// `self * b`.
    pub fn matmul(&self, b: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != b.rows {
            return Err(self.shape_err("matmul", b));
        }
        let mut c = DenseMatrix::zeros(self.rows, b.cols);
        let p = b.cols;
        for i in 0..self.rows {
            let a_row = self.row(i);
            let c_row = &mut c.data[i * p..(i + 1) * p];
            for (k, &a_ik) in a_row.iter().enumerate() {
                let b_row = &b.data[k * p..(k + 1) * p];
                for j in 0..p {
                    c_row[j] += a_ik * b_row[j];
                }
            }
        }
        Ok(c)
    }

    /// `selfᵀ * b` without materializing the transpose.
    pub fn matmul_tn(&self, b: &DenseMatrix) -> Result<DenseMatrix> {
        if self.rows != b.rows {
            return Err(self.shape_err("matmul_tn", b));
        }
        let mut c = DenseMatrix::zeros(self.cols, b.cols);
        let p = b.cols;
        for k in 0..self.rows {
            let a_row = self.row(k);
            let b_row = &b.data[k * p..(k + 1) * p];
            for (i, &a_ki) in a_row.iter().enumerate() {
                let c_row = &mut c.data[i * p..(i + 1) * p];
                for j in 0..p {
                    c_row[j] += a_ki * b_row[j];
                }
            }
        }
        Ok(c)
    }

    /// `self * bᵀ` without materializing the transpose.
    pub fn matmul_nt(&self, b: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != b.cols {
            return Err(self.shape_err("matmul_nt", b));
        }
        let mut c = DenseMatrix::zeros(self.rows, b.rows);
        for i in 0..self.rows {
            let a_row = self.row(i);
            for j in 0..b.rows {
                let b_row = b.row(j);
                let mut s = 0.0;
                for k in 0..self.cols {
                    s += a_row[k] * b_row[k];
                }
                c.set(i, j, s);
            }
        }
        Ok(c)
    }

    pub fn add_assign(&mut self, other: &DenseMatrix) -> Result<()> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(self.shape_err("add", other));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn sub_assign(&mut self, other: &DenseMatrix) -> Result<()> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(self.shape_err("sub", other));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a -= b;
        }
        Ok(())
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Largest absolute entrywise difference; shapes must match.
    pub fn max_abs_diff(&self, other: &DenseMatrix) -> f64 {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols.min(self.rows) {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// Replace `self` by `(self + selfᵀ)/2`. Square matrices only.
    pub fn symmetrize(&mut self) {
        debug_assert_eq!(self.rows, self.cols);
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                let m = 0.5 * (self.get(i, j) + self.get(j, i));
                self.set(i, j, m);
                self.set(j, i, m);
            }
        }
    }

    fn shape_err(&self, op: &'static str, b: &DenseMatrix) -> Error {
        Error::ShapeMismatch {
            op,
            a_rows: self.rows,
            a_cols: self.cols,
            b_rows: b.rows,
            b_cols: b.cols,
        }
    }
}

/// Linear-interpolation quantile of a sample (inclusive endpoints):
/// `q = 0` is the minimum, `q = 1` the maximum, and interior values
/// interpolate between order statistics at rank `q * (n - 1)`.
pub fn quantile(xs: &[f64], q: f64) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::Empty("quantile of empty sample"));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::invalid(format!("quantile level {q} outside [0, 1]")));
    }
    let mut s = xs.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).expect("NaN in quantile input"));
    let h = q * (s.len() - 1) as f64;
    let lo = h.floor() as usize;
    if lo + 1 >= s.len() {
        return Ok(s[s.len() - 1]);
    }
    let frac = h - lo as f64;
    Ok(s[lo] + frac * (s[lo + 1] - s[lo]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matmul_oracle(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
        // Naive i-j-k triple loop, independent of the production loop order.
        let mut c = DenseMatrix::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0;
                for k in 0..a.cols() {
                    s += a.get(i, k) * b.get(k, j);
                }
                c.set(i, j, s);
            }
        }
        c
    }

    #[test]
    fn matmul_identity() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let c = DenseMatrix::identity(2).matmul(&a).unwrap();
        assert_eq!(c, a);
    }

    #[test]
    fn matmul_annihilating() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let b = DenseMatrix::from_rows(&[vec![0.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c, DenseMatrix::zeros(2, 2));
    }

    #[test]
    fn matmul_against_triple_loop_oracle() {
        let stream = RandomStream::new(11, 0);
        let a = rand_matrix(&stream, 5, 4, -1.0, 1.0).unwrap();
        let b = rand_matrix(&stream.child(1), 4, 3, -1.0, 1.0).unwrap();
        let c = a.matmul(&b).unwrap();
        let want = matmul_oracle(&a, &b);
        assert!(c.max_abs_diff(&want) <= 1e-12);
    }

    #[test]
    fn matmul_transposed_variants() {
        let stream = RandomStream::new(7, 0);
        let a = rand_matrix(&stream, 6, 4, -1.0, 1.0).unwrap();
        let b = rand_matrix(&stream.child(1), 6, 3, -1.0, 1.0).unwrap();
        let tn = a.matmul_tn(&b).unwrap();
        let want = matmul_oracle(&a.transpose(), &b);
        assert!(tn.max_abs_diff(&want) <= 1e-12);

        let c = rand_matrix(&stream.child(2), 5, 4, -1.0, 1.0).unwrap();
        let nt = a.matmul_nt(&c).unwrap();
        let want = matmul_oracle(&a, &c.transpose());
        assert!(nt.max_abs_diff(&want) <= 1e-12);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let a = DenseMatrix::zeros(2, 3);
        let b = DenseMatrix::zeros(2, 3);
        let err = a.matmul(&b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("2x3") && msg.contains("matmul"), "{msg}");
    }

    #[test]
    fn matmul_associativity_on_random_triples() {
        for seed in 0..10u64 {
            let s = RandomStream::new(100 + seed, 0);
            let a = rand_matrix(&s, 6, 5, -2.0, 2.0).unwrap();
            let b = rand_matrix(&s.child(1), 5, 7, -2.0, 2.0).unwrap();
            let c = rand_matrix(&s.child(2), 7, 4, -2.0, 2.0).unwrap();
            let ab_c = a.matmul(&b).unwrap().matmul(&c).unwrap();
            let a_bc = a.matmul(&b.matmul(&c).unwrap()).unwrap();
            let scale = ab_c.max_abs().max(1.0);
            assert!(ab_c.max_abs_diff(&a_bc) <= 1e-10 * scale);
        }
    }

    #[test]
    fn zero_width_matmul() {
        let a = DenseMatrix::zeros(4, 0);
        let b = DenseMatrix::zeros(0, 3);
        let c = a.matmul(&b).unwrap();
        assert_eq!((c.rows(), c.cols()), (4, 3));
        assert_eq!(c.max_abs(), 0.0);
    }

    #[test]
    fn quantile_singleton_and_endpoints() {
        for q in [0.0, 0.3, 1.0] {
            assert_eq!(quantile(&[5.0], q).unwrap(), 5.0);
        }
        assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0], 1.0).unwrap(), 4.0);
        assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0], 0.0).unwrap(), 1.0);
    }

    #[test]
    fn quantile_linear_interpolation() {
        // Hand evaluation: h = 0.95 * 3 = 2.85, so 3 + 0.85 * (4 - 3).
        let v = quantile(&[1.0, 2.0, 3.0, 4.0], 0.95).unwrap();
        assert!((v - 3.85).abs() < 1e-15);
        // Order must not matter.
        let v = quantile(&[4.0, 1.0, 3.0, 2.0], 0.95).unwrap();
        assert!((v - 3.85).abs() < 1e-15);
    }

    #[test]
    fn quantile_empty_errors() {
        assert!(quantile(&[], 0.5).is_err());
    }
}
