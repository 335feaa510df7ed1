//! Dense row-major f64 matrices sized for small MLPs and low-dimensional
//! Gaussian algebra. Products run over row chunks (rayon when the `parallel`
//! feature is on); each output element is written by exactly one thread, so
//! results are bitwise identical at any thread count.

use crate::error::{Error, Result};
use crate::par;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

/// Below this many multiply-adds a product is not worth fanning out.
const PAR_FLOP_THRESHOLD: usize = 1 << 16;

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "matrix {}x{} needs {} entries, got {}",
                rows,
                cols,
                rows * cols,
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn row_vector(data: Vec<f64>) -> Self {
        Matrix { rows: 1, cols: data.len(), data }
    }

    pub fn col_vector(data: Vec<f64>) -> Self {
        Matrix { rows: data.len(), cols: 1, data }
    }

    pub fn identity(n: usize) -> Self {
        Matrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
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
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
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
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    pub fn map(&self, f: impl Fn(f64) -> f64 + Sync + Send) -> Matrix {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v = f(*v));
        out
    }

    pub fn zip_map(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
        assert_eq!(self.shape(), other.shape(), "zip_map shape mismatch");
        let data = self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(&a, &b)| f(a, b))
            .collect();
        Matrix { rows: self.rows, cols: self.cols, data }
    }

    pub fn scale(&self, c: f64) -> Matrix {
        self.map(|v| v * c)
    }

    pub fn add(&self, other: &Matrix) -> Matrix {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn add_assign(&mut self, other: &Matrix) {
        assert_eq!(self.shape(), other.shape(), "add_assign shape mismatch");
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += b;
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// C = A * B
    pub fn matmul(&self, b: &Matrix) -> Matrix {
        assert_eq!(self.cols, b.rows, "matmul inner dimension mismatch");
        let (m, k, n) = (self.rows, self.cols, b.cols);
        let mut out = Matrix::zeros(m, n);
        let flops = m * k * n;
        let chunk_rows = if flops < PAR_FLOP_THRESHOLD { m.max(1) } else { ((m + 7) / 8).max(1) };
        let a = &self.data;
        let bd = &b.data;
        par::for_each_chunk(&mut out.data, chunk_rows * n, |start, c| {
            let row0 = start / n;
            let nrows = c.len() / n;
            for r in 0..nrows {
                let i = row0 + r;
                let crow = &mut c[r * n..(r + 1) * n];
                for l in 0..k {
                    let av = a[i * k + l];
                    if av == 0.0 {
                        continue;
                    }
                    let brow = &bd[l * n..(l + 1) * n];
                    for (cv, bv) in crow.iter_mut().zip(brow.iter()) {
                        *cv += av * bv;
                    }
                }
            }
        });
        out
    }

    /// C = A * B^T
    pub fn matmul_nt(&self, b: &Matrix) -> Matrix {
        assert_eq!(self.cols, b.cols, "matmul_nt inner dimension mismatch");
        let (m, k, n) = (self.rows, self.cols, b.rows);
        let mut out = Matrix::zeros(m, n);
        let flops = m * k * n;
        let chunk_rows = if flops < PAR_FLOP_THRESHOLD { m.max(1) } else { ((m + 7) / 8).max(1) };
        let a = &self.data;
        let bd = &b.data;
        par::for_each_chunk(&mut out.data, chunk_rows * n, |start, c| {
            let row0 = start / n;
            let nrows = c.len() / n;
            for r in 0..nrows {
                let i = row0 + r;
                let arow = &a[i * k..(i + 1) * k];
                let crow = &mut c[r * n..(r + 1) * n];
                for (j, cv) in crow.iter_mut().enumerate() {
                    let brow = &bd[j * k..(j + 1) * k];
                    let mut acc = 0.0;
                    for (av, bv) in arow.iter().zip(brow.iter()) {
                        acc += av * bv;
                    }
                    *cv += acc;
                }
            }
        });
        out
    }

    /// C = A^T * B
    pub fn matmul_tn(&self, b: &Matrix) -> Matrix {
        assert_eq!(self.rows, b.rows, "matmul_tn inner dimension mismatch");
        let (m, k, n) = (self.cols, self.rows, b.cols);
        let mut out = Matrix::zeros(m, n);
        let a = &self.data;
        let bd = &b.data;
        // accumulate over k (rows of A); output chunking over rows of C keeps
        // writes disjoint, each thread scans the full k range
        let flops = m * k * n;
        let chunk_rows = if flops < PAR_FLOP_THRESHOLD { m.max(1) } else { ((m + 3) / 4).max(1) };
        par::for_each_chunk(&mut out.data, chunk_rows * n, |start, c| {
            let row0 = start / n;
            let nrows = c.len() / n;
            for l in 0..k {
                let arow = &a[l * m..(l + 1) * m];
                let brow = &bd[l * n..(l + 1) * n];
                for r in 0..nrows {
                    let av = arow[row0 + r];
                    if av == 0.0 {
                        continue;
                    }
                    let crow = &mut c[r * n..(r + 1) * n];
                    for (cv, bv) in crow.iter_mut().zip(brow.iter()) {
                        *cv += av * bv;
                    }
                }
            }
        });
        out
    }
}

/// Cholesky factor L (lower) of a symmetric positive-definite matrix.
pub fn cholesky(a: &Matrix) -> Result<Matrix> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::Dimension("cholesky needs a square matrix".into()));
    }
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k);
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return Err(Error::Numerical(format!(
                        "matrix not positive definite (pivot {} at index {})",
                        s, i
                    )));
                }
                l.set(i, j, s.sqrt());
            } else {
                l.set(i, j, s / l.get(j, j));
            }
        }
    }
    Ok(l)
}

/// Solve A x = b for symmetric positive-definite A via Cholesky.
pub fn solve_spd(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    let l = cholesky(a)?;
    let n = l.rows();
    if b.len() != n {
        return Err(Error::Dimension("solve_spd rhs length mismatch".into()));
    }
    // forward substitution L y = b
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l.get(i, k) * y[k];
        }
        y[i] = s / l.get(i, i);
    }
    // back substitution L^T x = y
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l.get(k, i) * x[k];
        }
        x[i] = s / l.get(i, i);
    }
    Ok(x)
}

/// Eigenvalues of a small symmetric matrix by cyclic Jacobi rotations.
pub fn symmetric_eigenvalues(a: &Matrix) -> Result<Vec<f64>> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::Dimension("eigenvalues need a square matrix".into()));
    }
    let mut m = a.clone();
    for _ in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += m.get(i, j).abs();
            }
        }
        if off < 1e-14 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m.get(p, q);
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = m.get(p, p);
                let aqq = m.get(q, q);
                let theta = 0.5 * (aqq - app) / apq;
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = m.get(k, p);
                    let akq = m.get(k, q);
                    m.set(k, p, c * akp - s * akq);
                    m.set(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let apk = m.get(p, k);
                    let aqk = m.get(q, k);
                    m.set(p, k, c * apk - s * aqk);
                    m.set(q, k, s * apk + c * aqk);
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| m.get(i, i)).collect();
    eig.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(eig)
}

/// Condition number estimate (ratio of extreme eigenvalue magnitudes) for a
/// symmetric matrix.
pub fn symmetric_condition(a: &Matrix) -> Result<f64> {
    let eig = symmetric_eigenvalues(a)?;
    let max = eig.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let min = eig.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if min == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(max / min)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn matmul_matches_hand_product() {
        let a = Matrix::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let b = Matrix::from_vec(3, 2, vec![7.0, 8.0, 9.0, 10.0, 11.0, 12.0]).unwrap();
        let c = a.matmul(&b);
        assert_eq!(c.data(), &[58.0, 64.0, 139.0, 154.0]);
    }

    #[test]
    fn transposed_products_agree_with_explicit_transpose() {
        let a = Matrix::from_fn(5, 4, |i, j| (i * 7 + j) as f64 * 0.25 - 1.0);
        let b = Matrix::from_fn(6, 4, |i, j| (i + 2 * j) as f64 * 0.5 - 2.0);
        let nt = a.matmul_nt(&b);
        let reference = a.matmul(&b.transpose());
        assert_eq!(nt.data(), reference.data());

        let c = Matrix::from_fn(5, 3, |i, j| (i * 3 + j) as f64 - 4.0);
        let tn = a.matmul_tn(&c);
        let reference = a.transpose().matmul(&c);
        assert_eq!(tn.data(), reference.data());
    }

    #[test]
    fn cholesky_solve_recovers_solution() {
        let a = Matrix::from_vec(3, 3, vec![4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]).unwrap();
        let x_true = [1.0, -2.0, 0.5];
        let mut b = [0.0; 3];
        for i in 0..3 {
            for j in 0..3 {
                b[i] += a.get(i, j) * x_true[j];
            }
        }
        let x = solve_spd(&a, &b).unwrap();
        for i in 0..3 {
            assert!(approx(x[i], x_true[i], 1e-12));
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = Matrix::from_vec(2, 2, vec![1.0, 2.0, 2.0, 1.0]).unwrap();
        assert!(cholesky(&a).is_err());
    }

    #[test]
    fn jacobi_eigenvalues_match_known() {
        let a = Matrix::from_vec(2, 2, vec![2.0, 1.0, 1.0, 2.0]).unwrap();
        let eig = symmetric_eigenvalues(&a).unwrap();
        assert!(approx(eig[0], 1.0, 1e-10));
        assert!(approx(eig[1], 3.0, 1e-10));
    }
}
