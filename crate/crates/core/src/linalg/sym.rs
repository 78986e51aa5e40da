use super::{hypot, LinalgError, Matrix};

/// Real symmetric matrix with packed lower-triangular storage, so
/// `get(i, j) == get(j, i)` holds exactly by construction.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix {
    order: usize,
    // row-packed lower triangle: entry (r, c) with r >= c at r(r+1)/2 + c
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(order: usize) -> Self {
        assert!(order >= 1, "order must be at least 1");
        SymMatrix {
            order,
            data: vec![0.0; order * (order + 1) / 2],
        }
    }

    pub fn identity(order: usize) -> Self {
        let mut m = SymMatrix::zeros(order);
        for i in 0..order {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn scaled_identity(order: usize, s: f64) -> Self {
        let mut m = SymMatrix::zeros(order);
        for i in 0..order {
            m.set(i, i, s);
        }
        m
    }

    pub fn diag(entries: &[f64]) -> Self {
        let mut m = SymMatrix::zeros(entries.len());
        for (i, &v) in entries.iter().enumerate() {
            m.set(i, i, v);
        }
        m
    }

    #[inline]
    fn idx(r: usize, c: usize) -> usize {
        let (hi, lo) = if r >= c { (r, c) } else { (c, r) };
        hi * (hi + 1) / 2 + lo
    }

    #[inline]
    pub fn order(&self) -> usize {
        self.order
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[Self::idx(r, c)]
    }

    /// Sets both (r, c) and (c, r).
    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[Self::idx(r, c)] = v;
    }

    #[inline]
    pub fn add_at(&mut self, r: usize, c: usize, v: f64) {
        self.data[Self::idx(r, c)] += v;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.order, self.order);
        for r in 0..self.order {
            for c in 0..self.order {
                m.set(r, c, self.get(r, c));
            }
        }
        m
    }

    /// Symmetric part `(m + mᵀ)/2` of a square matrix.
    pub fn from_dense_symmetrized(m: &Matrix) -> Self {
        assert!(m.is_square(), "symmetrize needs a square matrix");
        let n = m.rows();
        let mut out = SymMatrix::zeros(n);
        for r in 0..n {
            for c in 0..=r {
                out.set(r, c, 0.5 * (m.get(r, c) + m.get(c, r)));
            }
        }
        out
    }

    pub fn add(&self, other: &SymMatrix) -> SymMatrix {
        assert_eq!(self.order, other.order);
        SymMatrix {
            order: self.order,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn sub(&self, other: &SymMatrix) -> SymMatrix {
        assert_eq!(self.order, other.order);
        SymMatrix {
            order: self.order,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    pub fn scale(&self, s: f64) -> SymMatrix {
        SymMatrix {
            order: self.order,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.to_dense().frobenius_norm()
    }

    /// Quadratic form `xᵀ m x`.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.order);
        let mut acc = 0.0;
        for r in 0..self.order {
            for c in 0..self.order {
                acc += x[r] * self.get(r, c) * x[c];
            }
        }
        acc
    }

    /// Full spectral decomposition; eigenvalues ascending, eigenvectors as
    /// the columns of an orthonormal matrix.
    pub fn eigen(&self) -> Result<SymEigen, LinalgError> {
        if !self.is_finite() {
            return Err(LinalgError::NonFinite);
        }
        symmetric_eigen_dense(&self.to_dense())
    }

    pub fn min_eig(&self) -> Result<f64, LinalgError> {
        Ok(self.eigen()?.values[0])
    }

    pub fn max_eig(&self) -> Result<f64, LinalgError> {
        let e = self.eigen()?;
        Ok(e.values[e.values.len() - 1])
    }

    /// Nearest positive semidefinite matrix in Frobenius norm: negative
    /// eigenvalues are clipped at zero.
    pub fn psd_project(&self) -> Result<SymMatrix, LinalgError> {
        let e = self.eigen()?;
        let n = self.order;
        let mut out = SymMatrix::zeros(n);
        for k in 0..n {
            let lam = e.values[k].max(0.0);
            if lam == 0.0 {
                continue;
            }
            for r in 0..n {
                let vr = e.vectors.get(r, k);
                if vr == 0.0 {
                    continue;
                }
                for c in 0..=r {
                    out.add_at(r, c, lam * vr * e.vectors.get(c, k));
                }
            }
        }
        Ok(out)
    }

    /// Spectral norm; for symmetric matrices this is `max(|λ|)`.
    pub fn spectral_norm(&self) -> Result<f64, LinalgError> {
        let e = self.eigen()?;
        Ok(e.values[0].abs().max(e.values[e.values.len() - 1].abs()))
    }
}

/// Result of a symmetric eigen-decomposition: `m = V diag(values) Vᵀ`.
#[derive(Clone, Debug)]
pub struct SymEigen {
    /// Eigenvalues in ascending order.
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors, column `k` belongs to `values[k]`.
    pub vectors: Matrix,
}

/// Symmetric eigen-decomposition of a dense symmetric matrix:
/// Householder reduction to tridiagonal form followed by the implicit QL
/// iteration with Wilkinson shifts. Values come out ascending.
pub(crate) fn symmetric_eigen_dense(a: &Matrix) -> Result<SymEigen, LinalgError> {
    assert!(a.is_square());
    let n = a.rows();
    let mut v = vec![0.0; n * n]; // accumulated transform, row-major
    for r in 0..n {
        for c in 0..n {
            v[r * n + c] = 0.5 * (a.get(r, c) + a.get(c, r));
        }
    }
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tridiagonalize(n, &mut v, &mut d, &mut e);
    ql_implicit(n, &mut v, &mut d, &mut e)?;
    Ok(SymEigen {
        values: d,
        vectors: Matrix::from_vec(n, n, v),
    })
}

// Householder reduction to symmetric tridiagonal form, accumulating the
// orthogonal transform in `v`. Classic tred2 (EISPACK lineage).
fn tridiagonalize(n: usize, v: &mut [f64], d: &mut [f64], e: &mut [f64]) {
    for j in 0..n {
        d[j] = v[(n - 1) * n + j];
    }
    for i in (1..n).rev() {
        // Scale to avoid under/overflow.
        let mut scale = 0.0;
        let mut h = 0.0;
        for item in d.iter().take(i) {
            scale += item.abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[(i - 1) * n + j];
                v[i * n + j] = 0.0;
                v[j * n + i] = 0.0;
            }
        } else {
            // Generate Householder vector.
            for item in d.iter_mut().take(i) {
                *item /= scale;
                h += *item * *item;
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for item in e.iter_mut().take(i) {
                *item = 0.0;
            }
            // Apply similarity transformation to remaining columns.
            for j in 0..i {
                f = d[j];
                v[j * n + i] = f;
                g = e[j] + v[j * n + j] * f;
                for k in (j + 1)..i {
                    g += v[k * n + j] * d[k];
                    e[k] += v[k * n + j] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[k * n + j] -= f * e[k] + g * d[k];
                }
                d[j] = v[(i - 1) * n + j];
                v[i * n + j] = 0.0;
            }
        }
        d[i] = h;
    }
    // Accumulate transformations.
    for i in 0..(n - 1) {
        v[(n - 1) * n + i] = v[i * n + i];
        v[i * n + i] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[k * n + (i + 1)] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[k * n + (i + 1)] * v[k * n + j];
                }
                for k in 0..=i {
                    v[k * n + j] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[k * n + (i + 1)] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[(n - 1) * n + j];
        v[(n - 1) * n + j] = 0.0;
    }
    v[(n - 1) * n + (n - 1)] = 1.0;
    e[0] = 0.0;
}

// Implicit QL iteration with Wilkinson shifts on the tridiagonal (d, e),
// updating eigenvectors in `v`. Sorts the spectrum ascending at the end.
fn ql_implicit(n: usize, v: &mut [f64], d: &mut [f64], e: &mut [f64]) -> Result<(), LinalgError> {
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;

    let mut f = 0.0f64;
    let mut tst1 = 0.0f64;
    let eps = f64::EPSILON;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m >= n {
            m = n - 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > 60 {
                    return Err(LinalgError::NoConvergence);
                }
                // Wilkinson shift.
                let g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = hypot(p, 1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for item in d.iter_mut().take(n).skip(l + 2) {
                    *item -= h;
                }
                f += h;

                // Implicit QL step.
                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    let g = c * e[i];
                    h = c * p;
                    r = hypot(p, e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    // Accumulate transformation.
                    for k in 0..n {
                        h = v[k * n + (i + 1)];
                        v[k * n + (i + 1)] = s * v[k * n + i] + c * h;
                        v[k * n + i] = c * v[k * n + i] - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;

                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }

    // Sort ascending, carrying eigenvectors along.
    for i in 0..n.saturating_sub(1) {
        let mut k = i;
        let mut p = d[i];
        for j in (i + 1)..n {
            if d[j] < p {
                k = j;
                p = d[j];
            }
        }
        if k != i {
            d[k] = d[i];
            d[i] = p;
            for row in 0..n {
                v.swap(row * n + i, row * n + k);
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn random_sym(n: usize, rng: &mut SplitMix64) -> SymMatrix {
        let mut m = SymMatrix::zeros(n);
        for r in 0..n {
            for c in 0..=r {
                m.set(r, c, rng.uniform(-1.0, 1.0));
            }
        }
        m
    }

    fn reconstruct(e: &SymEigen) -> Matrix {
        let n = e.values.len();
        let mut lam = Matrix::zeros(n, n);
        for i in 0..n {
            lam.set(i, i, e.values[i]);
        }
        e.vectors.mul(&lam).mul(&e.vectors.transpose())
    }

    #[test]
    fn identity_eigenvalues() {
        let e = SymMatrix::identity(3).eigen().unwrap();
        for v in &e.values {
            assert!((v - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn diagonal_eigenvalues_sorted() {
        let e = SymMatrix::diag(&[2.0, -1.0]).eigen().unwrap();
        assert!((e.values[0] + 1.0).abs() < 1e-14);
        assert!((e.values[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn min_max_extremes() {
        let m = SymMatrix::diag(&[3.0, 5.0]);
        assert_eq!(m.min_eig().unwrap(), 3.0);
        assert_eq!(m.max_eig().unwrap(), 5.0);
        let neg = SymMatrix::scaled_identity(4, -1.0);
        assert_eq!(neg.min_eig().unwrap(), -1.0);
        assert_eq!(neg.max_eig().unwrap(), -1.0);
    }

    #[test]
    fn extremes_match_full_spectrum() {
        let mut rng = SplitMix64::new(21);
        for _ in 0..20 {
            let m = random_sym(7, &mut rng);
            let e = m.eigen().unwrap();
            assert_eq!(m.min_eig().unwrap(), e.values[0]);
            assert_eq!(m.max_eig().unwrap(), e.values[6]);
        }
    }

    #[test]
    fn reconstruction_error_small() {
        let mut rng = SplitMix64::new(7);
        for n in [1usize, 2, 3, 5, 8, 13, 40] {
            let m = random_sym(n, &mut rng);
            let e = m.eigen().unwrap();
            let err = reconstruct(&e).sub(&m.to_dense()).frobenius_norm();
            let scale = m.frobenius_norm().max(1.0);
            assert!(err <= 1e-10 * scale, "n={n} err={err}");
            // orthonormality
            let vtv = e.vectors.transpose().mul(&e.vectors);
            let dev = vtv.sub(&Matrix::identity(n)).frobenius_norm();
            assert!(dev < 1e-12 * (n as f64), "n={n} dev={dev}");
        }
    }

    #[test]
    fn non_finite_rejected() {
        let mut m = SymMatrix::zeros(2);
        m.set(0, 1, f64::NAN);
        assert_eq!(m.eigen().unwrap_err(), LinalgError::NonFinite);
    }

    #[test]
    fn psd_project_clips() {
        let p = SymMatrix::diag(&[1.0, -1.0]).psd_project().unwrap();
        assert!((p.get(0, 0) - 1.0).abs() < 1e-14);
        assert!(p.get(1, 1).abs() < 1e-14);
        assert!(p.get(0, 1).abs() < 1e-14);
    }

    #[test]
    fn psd_project_fixed_point() {
        let mut rng = SplitMix64::new(3);
        let a = random_sym(4, &mut rng);
        let psd = {
            // a² is always PSD
            let d = a.to_dense();
            SymMatrix::from_dense_symmetrized(&d.mul(&d))
        };
        let proj = psd.psd_project().unwrap();
        let dev = proj.to_dense().sub(&psd.to_dense()).frobenius_norm();
        assert!(dev < 1e-10 * psd.frobenius_norm().max(1.0));
    }

    #[test]
    fn psd_project_beats_random_candidates() {
        let mut rng = SplitMix64::new(99);
        let m = random_sym(5, &mut rng);
        let proj = m.psd_project().unwrap();
        let base = proj.to_dense().sub(&m.to_dense()).frobenius_norm();
        for _ in 0..1000 {
            // random PSD candidate: projection plus a PSD-preserving nudge
            let mut nudged = proj.clone();
            for r in 0..5 {
                for c in 0..=r {
                    nudged.add_at(r, c, rng.uniform(-0.05, 0.05));
                }
            }
            let cand = nudged.psd_project().unwrap();
            let dist = cand.to_dense().sub(&m.to_dense()).frobenius_norm();
            assert!(dist + 1e-12 >= base);
        }
    }

    #[test]
    fn rayleigh_quotient_within_extremes() {
        let mut rng = SplitMix64::new(17);
        let m = random_sym(6, &mut rng);
        let lo = m.min_eig().unwrap();
        let hi = m.max_eig().unwrap();
        for _ in 0..100 {
            let x: Vec<f64> = (0..6).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let nsq: f64 = x.iter().map(|v| v * v).sum();
            if nsq < 1e-12 {
                continue;
            }
            let q = m.quad_form(&x) / nsq;
            assert!(q >= lo - 1e-9 && q <= hi + 1e-9);
        }
    }
}
