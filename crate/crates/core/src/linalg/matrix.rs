use super::LinalgError;
use std::fmt;

/// Dense real matrix, row-major storage.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    /// Diagonal matrix from the given entries.
    pub fn diag(entries: &[f64]) -> Self {
        let n = entries.len();
        let mut m = Matrix::zeros(n, n);
        for (i, &v) in entries.iter().enumerate() {
            m.set(i, i, v);
        }
        m
    }

    /// Build from nested rows; panics on ragged input.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Matrix { rows: r, cols: c, data }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols);
        Matrix { rows, cols, data }
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
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn add_at(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] += v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.set(c, r, self.get(r, c));
            }
        }
        out
    }

    pub fn mul(&self, other: &Matrix) -> Matrix {
        assert_eq!(
            self.cols, other.rows,
            "mul shape mismatch: {}x{} * {}x{}",
            self.rows, self.cols, other.rows, other.cols
        );
        let mut out = Matrix::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(r, k);
                if a == 0.0 {
                    continue;
                }
                let base = k * other.cols;
                let obase = r * other.cols;
                for c in 0..other.cols {
                    out.data[obase + c] += a * other.data[base + c];
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len());
        let mut out = vec![0.0; self.rows];
        for r in 0..self.rows {
            let base = r * self.cols;
            let mut acc = 0.0;
            for c in 0..self.cols {
                acc += self.data[base + c] * v[c];
            }
            out[r] = acc;
        }
        out
    }

    pub fn add(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Induced 2-norm (largest singular value).
    pub fn spectral_norm(&self) -> Result<f64, LinalgError> {
        super::max_singular_value(self)
    }

    /// `self + selfᵀ`.
    pub fn plus_transpose(&self) -> Matrix {
        assert!(self.is_square());
        let mut out = self.clone();
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.add_at(r, c, self.get(c, r));
            }
        }
        out
    }

    /// Cholesky factor L with `self = L Lᵀ`; fails if not SPD.
    pub fn cholesky(&self) -> Result<Cholesky, LinalgError> {
        if !self.is_square() {
            return Err(LinalgError::DimMismatch("cholesky needs square".into()));
        }
        if !self.is_finite() {
            return Err(LinalgError::NonFinite);
        }
        let n = self.rows;
        let mut l = vec![0.0; n * n];
        for j in 0..n {
            let mut d = self.get(j, j);
            for k in 0..j {
                d -= l[j * n + k] * l[j * n + k];
            }
            if d <= 0.0 || !d.is_finite() {
                return Err(LinalgError::NotPositiveDefinite);
            }
            let dj = d.sqrt();
            l[j * n + j] = dj;
            for i in (j + 1)..n {
                let mut s = self.get(i, j);
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / dj;
            }
        }
        Ok(Cholesky { n, l })
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            write!(f, "  ")?;
            for c in 0..self.cols {
                write!(f, "{:>12.6} ", self.get(r, c))?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

/// Cholesky factorization of an SPD matrix.
#[derive(Debug)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>, // lower triangular, row-major
}

impl Cholesky {
    pub fn order(&self) -> usize {
        self.n
    }

    /// log det of the factored matrix.
    pub fn log_det(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            s += self.l[i * self.n + i].ln();
        }
        2.0 * s
    }

    /// Solve `L y = b` in place.
    pub fn solve_lower_inplace(&self, b: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= self.l[i * n + k] * b[k];
            }
            b[i] = s / self.l[i * n + i];
        }
    }

    /// Solve `Lᵀ y = b` in place.
    pub fn solve_lower_t_inplace(&self, b: &mut [f64]) {
        let n = self.n;
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in (i + 1)..n {
                s -= self.l[k * n + i] * b[k];
            }
            b[i] = s / self.l[i * n + i];
        }
    }

    /// Solve `A x = b` for the factored `A`.
    pub fn solve_vec(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_lower_inplace(&mut x);
        self.solve_lower_t_inplace(&mut x);
        x
    }

    /// Solve `A X = B` column-wise.
    pub fn solve_matrix(&self, b: &Matrix) -> Matrix {
        assert_eq!(b.rows(), self.n);
        let mut out = Matrix::zeros(self.n, b.cols());
        let mut col = vec![0.0; self.n];
        for c in 0..b.cols() {
            for r in 0..self.n {
                col[r] = b.get(r, c);
            }
            self.solve_lower_inplace(&mut col);
            self.solve_lower_t_inplace(&mut col);
            for r in 0..self.n {
                out.set(r, c, col[r]);
            }
        }
        out
    }

    /// Congruence `L⁻¹ M L⁻ᵀ` for a square `M` of matching order.
    pub fn congruence(&self, m: &Matrix) -> Matrix {
        assert_eq!(m.rows(), self.n);
        assert_eq!(m.cols(), self.n);
        let n = self.n;
        // X = L⁻¹ M  (solve column by column of M... rows: L X = M)
        let mut x = Matrix::zeros(n, n);
        let mut col = vec![0.0; n];
        for c in 0..n {
            for r in 0..n {
                col[r] = m.get(r, c);
            }
            self.solve_lower_inplace(&mut col);
            for r in 0..n {
                x.set(r, c, col[r]);
            }
        }
        // Y = X L⁻ᵀ  ⇔  Yᵀ = L⁻¹ Xᵀ
        let xt = x.transpose();
        let mut yt = Matrix::zeros(n, n);
        for c in 0..n {
            for r in 0..n {
                col[r] = xt.get(r, c);
            }
            self.solve_lower_inplace(&mut col);
            for r in 0..n {
                yt.set(r, c, col[r]);
            }
        }
        yt.transpose()
    }

    /// Inverse of the factored matrix (symmetric).
    pub fn inverse(&self) -> Matrix {
        self.solve_matrix(&Matrix::identity(self.n))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mul_and_transpose() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let b = Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
        let ab = a.mul(&b);
        assert_eq!(ab.get(0, 0), 2.0);
        assert_eq!(ab.get(0, 1), 1.0);
        assert_eq!(ab.get(1, 0), 4.0);
        assert_eq!(ab.get(1, 1), 3.0);
        assert_eq!(a.transpose().get(0, 1), 3.0);
    }

    #[test]
    fn cholesky_solve_roundtrip() {
        let a = Matrix::from_rows(&[vec![4.0, 1.0], vec![1.0, 3.0]]);
        let ch = a.cholesky().unwrap();
        let x = ch.solve_vec(&[1.0, 2.0]);
        let back = a.matvec(&x);
        assert!((back[0] - 1.0).abs() < 1e-12);
        assert!((back[1] - 2.0).abs() < 1e-12);
        let inv = ch.inverse();
        let prod = a.mul(&inv);
        assert!((prod.get(0, 0) - 1.0).abs() < 1e-12);
        assert!(prod.get(0, 1).abs() < 1e-12);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]);
        assert_eq!(a.cholesky().unwrap_err(), LinalgError::NotPositiveDefinite);
    }

    #[test]
    fn congruence_matches_explicit_inverse() {
        let a = Matrix::from_rows(&[vec![4.0, 1.0], vec![1.0, 3.0]]);
        let m = Matrix::from_rows(&[vec![2.0, 0.5], vec![0.5, 1.0]]);
        let ch = a.cholesky().unwrap();
        let w = ch.congruence(&m);
        // trace(L⁻¹ M L⁻ᵀ) must equal trace(A⁻¹ M)
        let t1 = w.get(0, 0) + w.get(1, 1);
        let ainv_m = ch.inverse().mul(&m);
        let t2 = ainv_m.get(0, 0) + ainv_m.get(1, 1);
        assert!((t1 - t2).abs() < 1e-12);
    }
}
