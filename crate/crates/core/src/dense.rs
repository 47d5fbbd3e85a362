//! Dense row-major `f64` containers and the handful of linear algebra
//! primitives the adapter needs: products, column-major reshape/vec,
//! explicit Kronecker products, Frobenius norm and numeric rank.

use std::ops::{Index, IndexMut};

use crate::error::{MokaError, Result, Shape};

/// Default cap on the number of entries an explicit Kronecker product (or
/// any other explicitly materialized operator) may hold: 2^24.
pub const DEFAULT_EXPLICIT_CAP: usize = 1 << 24;

/// Default relative pivot threshold for [`numeric_rank`].
pub const DEFAULT_RANK_TOL: f64 = 1e-9;

/// Row-major dense matrix with positive dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    /// Zero matrix. Panics if either dimension is zero.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Builds a matrix from row-major data, checking length and finiteness.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(MokaError::ZeroDimension("DenseMatrix"));
        }
        if data.len() != rows * cols {
            return Err(MokaError::LengthMismatch {
                op: "DenseMatrix::from_vec",
                expected: rows * cols,
                got: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(MokaError::NonFinite("DenseMatrix"));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from nested rows; all rows must have equal length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            let row = row.as_ref();
            if row.len() != cols {
                return Err(MokaError::LengthMismatch {
                    op: "DenseMatrix::from_rows",
                    expected: cols,
                    got: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::from_vec(rows.len(), cols, data)
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.data[i * cols + j] = f(i, j);
            }
        }
        m
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
    pub fn shape(&self) -> Shape {
        Shape(self.rows, self.cols)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    /// Always false; dimensions are positive.
    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    /// `self += s * other`.
    pub fn add_scaled(&mut self, other: &DenseMatrix, s: f64) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(MokaError::ShapeMismatch {
                op: "add_scaled",
                lhs: self.shape(),
                rhs: other.shape(),
            });
        }
        for (d, o) in self.data.iter_mut().zip(&other.data) {
            *d += s * o;
        }
        Ok(())
    }

    /// Sum of squared entries.
    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn max_abs_diff(&self, other: &DenseMatrix) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn matvec(&self, x: &DenseVector) -> Result<DenseVector> {
        if x.len() != self.cols {
            return Err(MokaError::ShapeMismatch {
                op: "matvec",
                lhs: self.shape(),
                rhs: Shape(x.len(), 1),
            });
        }
        let data = (0..self.rows)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(x.as_slice())
                    .fold(0.0, |acc, (a, b)| acc + a * b)
            })
            .collect();
        Ok(DenseVector { data })
    }

    /// `selfᵀ · x`.
    pub fn matvec_transposed(&self, x: &DenseVector) -> Result<DenseVector> {
        if x.len() != self.rows {
            return Err(MokaError::ShapeMismatch {
                op: "matvec_transposed",
                lhs: Shape(self.cols, self.rows),
                rhs: Shape(x.len(), 1),
            });
        }
        let mut out = vec![0.0; self.cols];
        for (i, &xi) in x.as_slice().iter().enumerate() {
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += a * xi;
            }
        }
        Ok(DenseVector { data: out })
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

/// Dense `f64` vector with positive length.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseVector {
    data: Vec<f64>,
}

impl DenseVector {
    /// Zero vector. Panics if `len` is zero.
    pub fn zeros(len: usize) -> Self {
        assert!(len > 0, "vector length must be positive");
        Self {
            data: vec![0.0; len],
        }
    }

    pub fn from_vec(data: Vec<f64>) -> Result<Self> {
        if data.is_empty() {
            return Err(MokaError::ZeroDimension("DenseVector"));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(MokaError::NonFinite("DenseVector"));
        }
        Ok(Self { data })
    }

    /// Standard basis vector `e_index` of length `len`.
    pub fn basis(len: usize, index: usize) -> Self {
        let mut v = Self::zeros(len);
        v.data[index] = 1.0;
        v
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    /// Always false; length is positive.
    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn dot(&self, other: &DenseVector) -> f64 {
        assert_eq!(self.len(), other.len());
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |acc, (a, b)| acc + a * b)
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    /// `self += s * other`.
    pub fn add_scaled(&mut self, other: &DenseVector, s: f64) {
        assert_eq!(self.len(), other.len());
        for (d, o) in self.data.iter_mut().zip(&other.data) {
            *d += s * o;
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn sub(&self, other: &DenseVector) -> Self {
        assert_eq!(self.len(), other.len());
        Self {
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &DenseVector) -> f64 {
        assert_eq!(self.len(), other.len());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl Index<usize> for DenseVector {
    type Output = f64;

    #[inline]
    fn index(&self, i: usize) -> &f64 {
        &self.data[i]
    }
}

impl IndexMut<usize> for DenseVector {
    #[inline]
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.data[i]
    }
}

/// `a · b`.
pub fn matmul(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if a.cols != b.rows {
        return Err(MokaError::ShapeMismatch {
            op: "matmul",
            lhs: a.shape(),
            rhs: b.shape(),
        });
    }
    let (n, p) = (a.cols, b.cols);
    let mut out = DenseMatrix::zeros(a.rows, p);
    for i in 0..a.rows {
        let out_row = &mut out.data[i * p..(i + 1) * p];
        for k in 0..n {
            let aik = a.data[i * n + k];
            let b_row = &b.data[k * p..(k + 1) * p];
            for (o, bkj) in out_row.iter_mut().zip(b_row) {
                *o += aik * bkj;
            }
        }
    }
    Ok(out)
}

/// `a · bᵀ` without forming the transpose.
pub fn matmul_nt(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if a.cols != b.cols {
        return Err(MokaError::ShapeMismatch {
            op: "matmul_nt",
            lhs: a.shape(),
            rhs: Shape(b.cols, b.rows),
        });
    }
    let mut out = DenseMatrix::zeros(a.rows, b.rows);
    for i in 0..a.rows {
        let a_row = a.row(i);
        for j in 0..b.rows {
            out.data[i * b.rows + j] = a_row
                .iter()
                .zip(b.row(j))
                .fold(0.0, |acc, (x, y)| acc + x * y);
        }
    }
    Ok(out)
}

/// `aᵀ · b` without forming the transpose.
pub fn matmul_tn(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if a.rows != b.rows {
        return Err(MokaError::ShapeMismatch {
            op: "matmul_tn",
            lhs: Shape(a.cols, a.rows),
            rhs: b.shape(),
        });
    }
    let p = b.cols;
    let mut out = DenseMatrix::zeros(a.cols, p);
    for k in 0..a.rows {
        let b_row = b.row(k);
        for i in 0..a.cols {
            let aki = a.data[k * a.cols + i];
            let out_row = &mut out.data[i * p..(i + 1) * p];
            for (o, bkj) in out_row.iter_mut().zip(b_row) {
                *o += aki * bkj;
            }
        }
    }
    Ok(out)
}

/// Column-major reshape of `x` into a `rows × cols` matrix: entry `(i, j)`
/// is `x[j * rows + i]`.
pub fn reshape_vec_to_matrix(x: &DenseVector, rows: usize, cols: usize) -> Result<DenseMatrix> {
    if rows == 0 || cols == 0 {
        return Err(MokaError::ZeroDimension("reshape_vec_to_matrix"));
    }
    if x.len() != rows * cols {
        return Err(MokaError::LengthMismatch {
            op: "reshape_vec_to_matrix",
            expected: rows * cols,
            got: x.len(),
        });
    }
    Ok(DenseMatrix::from_fn(rows, cols, |i, j| x[j * rows + i]))
}

/// Column-stacking vec operator; inverse of [`reshape_vec_to_matrix`].
pub fn vec_matrix(m: &DenseMatrix) -> DenseVector {
    let mut data = Vec::with_capacity(m.len());
    for j in 0..m.cols {
        for i in 0..m.rows {
            data.push(m[(i, j)]);
        }
    }
    DenseVector { data }
}

/// Explicit Kronecker product `a ⊗ b`, refusing results above `cap` entries.
pub fn kron_explicit_capped(a: &DenseMatrix, b: &DenseMatrix, cap: usize) -> Result<DenseMatrix> {
    let rows = a.rows.checked_mul(b.rows);
    let cols = a.cols.checked_mul(b.cols);
    let entries = rows.zip(cols).and_then(|(r, c)| r.checked_mul(c));
    let (rows, cols) = match (rows, cols, entries) {
        (Some(r), Some(c), Some(e)) if e <= cap => (r, c),
        _ => {
            return Err(MokaError::SizeCap {
                entries: entries.unwrap_or(usize::MAX),
                cap,
            })
        }
    };
    let mut out = DenseMatrix::zeros(rows, cols);
    for ia in 0..a.rows {
        for ja in 0..a.cols {
            let s = a[(ia, ja)];
            for ib in 0..b.rows {
                let dst = (ia * b.rows + ib) * cols + ja * b.cols;
                for (o, v) in out.data[dst..dst + b.cols].iter_mut().zip(b.row(ib)) {
                    *o = s * v;
                }
            }
        }
    }
    Ok(out)
}

/// Explicit Kronecker product with the default cap.
pub fn kron_explicit(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    kron_explicit_capped(a, b, DEFAULT_EXPLICIT_CAP)
}

pub fn frobenius_norm(m: &DenseMatrix) -> f64 {
    m.norm_sq().sqrt()
}

/// Rank by Gaussian elimination with partial pivoting. A pivot counts as zero
/// when its magnitude is below `rel_tol` times the largest absolute entry.
pub fn numeric_rank(m: &DenseMatrix, rel_tol: f64) -> usize {
    let scale = m.as_slice().iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    if scale == 0.0 {
        return 0;
    }
    let threshold = rel_tol * scale;
    let mut work = m.clone();
    let (rows, cols) = (work.rows, work.cols);
    let mut rank = 0;
    for col in 0..cols {
        if rank == rows {
            break;
        }
        let (pivot_row, pivot_abs) = (rank..rows)
            .map(|r| (r, work[(r, col)].abs()))
            .fold((rank, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pivot_abs <= threshold {
            continue;
        }
        if pivot_row != rank {
            for j in 0..cols {
                work.data.swap(rank * cols + j, pivot_row * cols + j);
            }
        }
        let pivot = work[(rank, col)];
        for r in rank + 1..rows {
            let factor = work[(r, col)] / pivot;
            if factor == 0.0 {
                continue;
            }
            for j in col..cols {
                let v = work[(rank, j)];
                work[(r, j)] -= factor * v;
            }
        }
        rank += 1;
    }
    rank
}

/// Zero-pads `x` at the end up to `target_len`.
pub fn pad_vector(x: &DenseVector, target_len: usize) -> Result<DenseVector> {
    if target_len < x.len() {
        return Err(MokaError::LengthMismatch {
            op: "pad_vector",
            expected: x.len(),
            got: target_len,
        });
    }
    let mut data = Vec::with_capacity(target_len);
    data.extend_from_slice(x.as_slice());
    data.resize(target_len, 0.0);
    Ok(DenseVector { data })
}

/// Keeps the first `target_len` entries of `x`.
pub fn truncate_vector(x: &DenseVector, target_len: usize) -> Result<DenseVector> {
    if target_len > x.len() {
        return Err(MokaError::LengthMismatch {
            op: "truncate_vector",
            expected: x.len(),
            got: target_len,
        });
    }
    if target_len == 0 {
        return Err(MokaError::ZeroDimension("truncate_vector"));
    }
    Ok(DenseVector {
        data: x.as_slice()[..target_len].to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{normal_matrix, normal_vector, stream};
    use proptest::prelude::*;

    fn mat(rows: &[&[f64]]) -> DenseMatrix {
        DenseMatrix::from_rows(rows).unwrap()
    }

    fn vector(v: &[f64]) -> DenseVector {
        DenseVector::from_vec(v.to_vec()).unwrap()
    }

    fn naive_matmul(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0;
                for k in 0..a.cols() {
                    s += a[(i, k)] * b[(k, j)];
                }
                out[(i, j)] = s;
            }
        }
        out
    }

    #[test]
    fn matmul_small_cases() {
        let m = mat(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_eq!(matmul(&DenseMatrix::identity(2), &m).unwrap(), m);
        let col = mat(&[&[5.0], &[6.0]]);
        assert_eq!(matmul(&m, &col).unwrap(), mat(&[&[17.0], &[39.0]]));
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let mut rng = stream(11, 0, 0);
        let a = normal_matrix(&mut rng, 7, 5, 1.0);
        let b = normal_matrix(&mut rng, 5, 3, 1.0);
        assert!(matmul(&a, &b).unwrap().max_abs_diff(&naive_matmul(&a, &b)) <= 1e-12);
        let bt = b.transpose();
        assert!(matmul_nt(&a, &bt).unwrap().max_abs_diff(&naive_matmul(&a, &b)) <= 1e-12);
        let at = a.transpose();
        assert!(matmul_tn(&at, &b).unwrap().max_abs_diff(&naive_matmul(&a, &b)) <= 1e-12);
    }

    #[test]
    fn matmul_shape_error_names_both_operands() {
        let err = matmul(&DenseMatrix::zeros(2, 3), &DenseMatrix::zeros(2, 3)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("2x3") && msg.matches("2x3").count() == 2, "{msg}");
    }

    #[test]
    fn reshape_is_column_major() {
        let x = vector(&[1.0, 2.0, 3.0, 4.0]);
        let r = reshape_vec_to_matrix(&x, 2, 2).unwrap();
        assert_eq!(r, mat(&[&[1.0, 3.0], &[2.0, 4.0]]));
        assert_eq!(vec_matrix(&r), x);
        assert_eq!(vec_matrix(&mat(&[&[7.5]])), vector(&[7.5]));
        let c = reshape_vec_to_matrix(&x, 4, 1).unwrap();
        assert_eq!(c.as_slice(), x.as_slice());
        assert!(reshape_vec_to_matrix(&x, 3, 2).is_err());
    }

    #[test]
    fn vec_reshape_round_trip_random() {
        let mut rng = stream(3, 1, 0);
        for len in 1..=100 {
            let x = normal_vector(&mut rng, len, 1.0);
            let rows = (1..=len).rev().find(|d| len % d == 0 && *d * *d <= len).unwrap_or(1);
            let m = reshape_vec_to_matrix(&x, rows, len / rows).unwrap();
            assert_eq!(vec_matrix(&m), x);
        }
    }

    #[test]
    fn kron_small_cases() {
        assert_eq!(kron_explicit(&mat(&[&[2.0]]), &mat(&[&[3.0]])).unwrap(), mat(&[&[6.0]]));
        let b = mat(&[&[5.0, 6.0], &[7.0, 8.0]]);
        assert_eq!(
            kron_explicit(&DenseMatrix::identity(2), &b).unwrap(),
            mat(&[
                &[5.0, 6.0, 0.0, 0.0],
                &[7.0, 8.0, 0.0, 0.0],
                &[0.0, 0.0, 5.0, 6.0],
                &[0.0, 0.0, 7.0, 8.0],
            ])
        );
        let a = mat(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let swap = mat(&[&[0.0, 1.0], &[1.0, 0.0]]);
        assert_eq!(
            kron_explicit(&a, &swap).unwrap(),
            mat(&[
                &[0.0, 1.0, 0.0, 2.0],
                &[1.0, 0.0, 2.0, 0.0],
                &[0.0, 3.0, 0.0, 4.0],
                &[3.0, 0.0, 4.0, 0.0],
            ])
        );
    }

    #[test]
    fn kron_blocks_are_scaled_copies() {
        let mut rng = stream(5, 0, 0);
        let a = normal_matrix(&mut rng, 3, 4, 1.0);
        let b = normal_matrix(&mut rng, 2, 5, 1.0);
        let k = kron_explicit(&a, &b).unwrap();
        for ia in 0..3 {
            for ja in 0..4 {
                for ib in 0..2 {
                    for jb in 0..5 {
                        assert_eq!(k[(ia * 2 + ib, ja * 5 + jb)], a[(ia, ja)] * b[(ib, jb)]);
                    }
                }
            }
        }
    }

    #[test]
    fn kron_cap_rejects_large_products() {
        let a = DenseMatrix::zeros(4, 4);
        let b = DenseMatrix::zeros(4, 4);
        assert!(kron_explicit_capped(&a, &b, 256).is_ok());
        assert!(matches!(
            kron_explicit_capped(&a, &b, 255),
            Err(MokaError::SizeCap { entries: 256, cap: 255 })
        ));
    }

    #[test]
    fn frobenius_cases() {
        assert_eq!(frobenius_norm(&mat(&[&[3.0, 4.0]])), 5.0);
        assert_eq!(frobenius_norm(&DenseMatrix::zeros(3, 2)), 0.0);
        let mut rng = stream(9, 0, 0);
        let a = normal_matrix(&mut rng, 3, 4, 1.0);
        let b = normal_matrix(&mut rng, 2, 5, 1.0);
        let lhs = frobenius_norm(&kron_explicit(&a, &b).unwrap());
        let rhs = frobenius_norm(&a) * frobenius_norm(&b);
        assert!(((lhs - rhs) / rhs).abs() <= 1e-12);
    }

    #[test]
    fn rank_cases() {
        assert_eq!(numeric_rank(&DenseMatrix::identity(3), DEFAULT_RANK_TOL), 3);
        let p = mat(&[&[1.0, 2.0], &[2.0, 4.0]]);
        assert_eq!(numeric_rank(&p, DEFAULT_RANK_TOL), 1);
        let k = kron_explicit(&p, &DenseMatrix::identity(2)).unwrap();
        assert_eq!(numeric_rank(&k, DEFAULT_RANK_TOL), 2);
        assert_eq!(numeric_rank(&DenseMatrix::zeros(2, 2), DEFAULT_RANK_TOL), 0);
    }

    #[test]
    fn pad_and_truncate() {
        let x = vector(&[1.0, 2.0, 3.0]);
        assert_eq!(pad_vector(&x, 5).unwrap(), vector(&[1.0, 2.0, 3.0, 0.0, 0.0]));
        assert_eq!(pad_vector(&vector(&[1.0, 2.0]), 2).unwrap(), vector(&[1.0, 2.0]));
        assert!(pad_vector(&x, 2).is_err());
        let y = vector(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(truncate_vector(&y, 3).unwrap(), x);
        assert_eq!(truncate_vector(&y, 5).unwrap(), y);
        assert!(truncate_vector(&x, 4).is_err());
    }

    #[test]
    fn from_vec_rejects_bad_input() {
        assert!(DenseMatrix::from_vec(2, 2, vec![1.0; 3]).is_err());
        assert!(DenseMatrix::from_vec(0, 2, vec![]).is_err());
        assert!(DenseMatrix::from_vec(1, 2, vec![1.0, f64::NAN]).is_err());
        assert!(DenseVector::from_vec(vec![]).is_err());
        assert!(DenseVector::from_vec(vec![f64::INFINITY]).is_err());
    }

    fn dims() -> impl Strategy<Value = (usize, usize)> {
        (1usize..=16, 1usize..=16)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn reshape_vec_are_inverse((rows, cols) in dims(), seed in any::<u64>()) {
            let mut rng = stream(seed, 0, 0);
            let m = normal_matrix(&mut rng, rows, cols, 1.0);
            let v = vec_matrix(&m);
            prop_assert_eq!(&reshape_vec_to_matrix(&v, rows, cols).unwrap(), &m);
            prop_assert_eq!(vec_matrix(&reshape_vec_to_matrix(&v, rows, cols).unwrap()), v);
        }

        #[test]
        fn pad_then_truncate_is_identity(len in 1usize..40, extra in 0usize..20, seed in any::<u64>()) {
            let mut rng = stream(seed, 0, 0);
            let x = normal_vector(&mut rng, len, 1.0);
            let padded = pad_vector(&x, len + extra).unwrap();
            prop_assert!(padded.as_slice()[len..].iter().all(|v| *v == 0.0));
            prop_assert_eq!(truncate_vector(&padded, len).unwrap(), x);
        }

        #[test]
        fn frobenius_is_multiplicative((ra, ca) in dims(), (rb, cb) in dims(), seed in any::<u64>()) {
            let mut rng = stream(seed, 0, 0);
            let a = normal_matrix(&mut rng, ra, ca, 1.0);
            let b = normal_matrix(&mut rng, rb, cb, 1.0);
            let lhs = frobenius_norm(&kron_explicit(&a, &b).unwrap());
            let rhs = frobenius_norm(&a) * frobenius_norm(&b);
            prop_assert!(((lhs - rhs) / rhs).abs() <= 1e-12);
        }

        #[test]
        fn matmul_is_associative(
            (p, q) in (1usize..=32, 1usize..=32),
            (r, s) in (1usize..=32, 1usize..=32),
            seed in any::<u64>(),
        ) {
            use rand::Rng;
            let mut rng = stream(seed, 0, 0);
            let mut uniform = |rows, cols| DenseMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..=1.0));
            let a = uniform(p, q);
            let b = uniform(q, r);
            let c = uniform(r, s);
            let left = matmul(&matmul(&a, &b).unwrap(), &c).unwrap();
            let right = matmul(&a, &matmul(&b, &c).unwrap()).unwrap();
            prop_assert!(left.max_abs_diff(&right) <= 1e-10);
        }
    }
}
