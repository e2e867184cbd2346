//! Dense row-major matrices and the few factorizations the smoothers need.
//!
//! Everything here is sized for desk-scale problems (n up to a few thousand)
//! and favors predictable, deterministic results over raw speed.

use std::ops::{Index, IndexMut};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::{dot, norm_sq, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_diag(diag: &[T]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    /// Builds a matrix from row vectors; all rows must have equal length.
    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::shape(
                    "matrix rows",
                    format!("{cols} columns"),
                    format!("{} columns in row {i}", r.len()),
                ));
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    /// Converts `f64` rows into a matrix of `T`.
    pub fn from_f64_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let converted: Vec<Vec<T>> = rows
            .iter()
            .map(|r| r.iter().map(|&x| T::of(x)).collect())
            .collect();
        Self::from_rows(&converted)
    }

    pub fn to_f64_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows)
            .map(|i| self.row(i).iter().map(|x| x.as_f64()).collect())
            .collect()
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// `A x`.
    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    /// `Aᵀ x`.
    pub fn tr_matvec(&self, x: &[T]) -> Vec<T> {
        debug_assert_eq!(x.len(), self.rows);
        let mut out = vec![T::zero(); self.cols];
        for (i, &xi) in x.iter().enumerate() {
            if xi == T::zero() {
                continue;
            }
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o += a * xi;
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, other: &Matrix<T>) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::shape(
                "matmul",
                format!("{} rows on the right", self.cols),
                other.rows,
            ));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == T::zero() {
                    continue;
                }
                let src = other.row(k);
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, &b) in dst.iter_mut().zip(src) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn scaled(&self, c: T) -> Self {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| x * c).collect(),
        }
    }

    /// Entrywise `self - other`; shapes must agree.
    pub fn sub(&self, other: &Matrix<T>) -> Result<Self> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::shape(
                "matrix difference",
                format!("{}x{}", self.rows, self.cols),
                format!("{}x{}", other.rows, other.cols),
            ));
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a - b).collect(),
        })
    }

    pub fn trace(&self) -> T {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn frob_sq(&self) -> T {
        norm_sq(&self.data)
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, x| m.max(x.abs()))
    }

    /// Largest `|a_ij - a_ji|`; only meaningful for square matrices.
    pub fn max_asymmetry(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.rows {
            for j in i + 1..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    /// `(A + Aᵀ) / 2`.
    pub fn symmetrized(&self) -> Self {
        let half = T::of(0.5);
        Self::from_fn(self.rows, self.cols, |i, j| half * (self[(i, j)] + self[(j, i)]))
    }

    pub fn is_diagonal(&self) -> bool {
        (0..self.rows).all(|i| (0..self.cols).all(|j| i == j || self[(i, j)] == T::zero()))
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    /// Columns `cols` of `self`, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Self {
        Self::from_fn(self.rows, cols.len(), |i, j| self[(i, cols[j])])
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;

    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

/// Eigen-decomposition of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymmetricEigen<T> {
    /// Eigenvalues in ascending order.
    pub values: Vec<T>,
    /// Orthonormal eigenvectors stored as columns, matching `values`.
    pub vectors: Matrix<T>,
}

impl<T: Scalar> SymmetricEigen<T> {
    /// `V diag(f(λ)) Vᵀ`.
    pub fn reconstruct_with(&self, f: impl Fn(T) -> T) -> Matrix<T> {
        let n = self.values.len();
        let scaled: Vec<T> = self.values.iter().map(|&v| f(v)).collect();
        let v = &self.vectors;
        let mut out = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let mut acc = T::zero();
                for (k, &s) in scaled.iter().enumerate() {
                    acc += v[(i, k)] * s * v[(j, k)];
                }
                out[(i, j)] = acc;
                out[(j, i)] = acc;
            }
        }
        out
    }
}

/// Symmetric eigen-decomposition by Householder tridiagonalization followed
/// by implicit QL iterations. Only the lower triangle of `a` is trusted to be
/// consistent with the upper one; callers symmetrize first.
pub fn symmetric_eigen<T: Scalar>(a: &Matrix<T>) -> Result<SymmetricEigen<T>> {
    if !a.is_square() {
        return Err(Error::shape(
            "symmetric eigen-decomposition",
            "square matrix",
            format!("{}x{}", a.nrows(), a.ncols()),
        ));
    }
    if !a.is_finite() {
        return Err(Error::NonFinite("symmetric eigen-decomposition input"));
    }
    let n = a.nrows();
    if n == 0 {
        return Ok(SymmetricEigen {
            values: Vec::new(),
            vectors: Matrix::zeros(0, 0),
        });
    }
    let mut v = a.symmetrized();
    let mut d = vec![T::zero(); n];
    let mut e = vec![T::zero(); n];
    tridiagonalize(&mut v, &mut d, &mut e);
    tridiagonal_ql(&mut v, &mut d, &mut e)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[i].partial_cmp(&d[j]).expect("finite eigenvalues"));
    let values = order.iter().map(|&i| d[i]).collect();
    let vectors = Matrix::from_fn(n, n, |i, j| v[(i, order[j])]);
    Ok(SymmetricEigen { values, vectors })
}

fn tridiagonalize<T: Scalar>(v: &mut Matrix<T>, d: &mut [T], e: &mut [T]) {
    let n = d.len();
    for j in 0..n {
        d[j] = v[(n - 1, j)];
    }
    for i in (1..n).rev() {
        let mut scale = T::zero();
        let mut h = T::zero();
        for dk in d.iter().take(i) {
            scale += dk.abs();
        }
        if scale == T::zero() {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[(i - 1, j)];
                v[(i, j)] = T::zero();
                v[(j, i)] = T::zero();
            }
        } else {
            for dk in d.iter_mut().take(i) {
                *dk /= scale;
                h += *dk * *dk;
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > T::zero() {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = T::zero();
            }
            for j in 0..i {
                f = d[j];
                v[(j, i)] = f;
                g = e[j] + v[(j, j)] * f;
                for k in j + 1..i {
                    g += v[(k, j)] * d[k];
                    e[k] += v[(k, j)] * f;
                }
                e[j] = g;
            }
            f = T::zero();
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
                    let upd = f * e[k] + g * d[k];
                    v[(k, j)] -= upd;
                }
                d[j] = v[(i - 1, j)];
                v[(i, j)] = T::zero();
            }
        }
        d[i] = h;
    }

    for i in 0..n - 1 {
        v[(n - 1, i)] = v[(i, i)];
        v[(i, i)] = T::one();
        let h = d[i + 1];
        if h != T::zero() {
            for k in 0..=i {
                d[k] = v[(k, i + 1)] / h;
            }
            for j in 0..=i {
                let mut g = T::zero();
                for k in 0..=i {
                    g += v[(k, i + 1)] * v[(k, j)];
                }
                for k in 0..=i {
                    let upd = g * d[k];
                    v[(k, j)] -= upd;
                }
            }
        }
        for k in 0..=i {
            v[(k, i + 1)] = T::zero();
        }
    }
    for j in 0..n {
        d[j] = v[(n - 1, j)];
        v[(n - 1, j)] = T::zero();
    }
    v[(n - 1, n - 1)] = T::one();
    e[0] = T::zero();
}

fn tridiagonal_ql<T: Scalar>(v: &mut Matrix<T>, d: &mut [T], e: &mut [T]) -> Result<()> {
    const MAX_SWEEPS: usize = 64;
    let n = d.len();
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = T::zero();

    let two = T::of(2.0);
    let eps = T::epsilon();
    let mut f = T::zero();
    let mut tst1 = T::zero();
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut sweeps = 0;
            loop {
                sweeps += 1;
                if sweeps > MAX_SWEEPS {
                    return Err(Error::NoConvergence {
                        method: "tridiagonal QL",
                        iterations: sweeps,
                        estimate: d[l].as_f64(),
                        residual: (e[l].abs() / tst1.max(T::min_positive_value())).as_f64(),
                    });
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (two * e[l]);
                let mut r = p.hypot(T::one());
                if p < T::zero() {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = T::one();
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = T::zero();
                let mut s2 = T::zero();
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for k in 0..n {
                        h = v[(k, i + 1)];
                        v[(k, i + 1)] = s * v[(k, i)] + c * h;
                        v[(k, i)] = c * v[(k, i)] - s * h;
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
        e[l] = T::zero();
    }
    Ok(())
}

/// Thin singular value decomposition `A = U Σ Vᵀ` restricted to the left
/// factor, computed with one-sided (Hestenes) Jacobi rotations on the
/// columns of `A`.
#[derive(Debug, Clone)]
pub struct LeftSingular<T> {
    /// Singular values, one per column of `A`, in no particular order.
    pub values: Vec<T>,
    /// Rotated columns `A V`; column `j` has norm `values[j]`.
    pub columns: Vec<Vec<T>>,
}

impl<T: Scalar> LeftSingular<T> {
    /// Orthonormal basis of the numerical column span: left singular vectors
    /// whose singular value exceeds `rel_tol · σ_max`.
    pub fn span_basis(&self, rel_tol: T) -> Vec<Vec<T>> {
        let smax = self.values.iter().fold(T::zero(), |m, &s| m.max(s));
        if smax == T::zero() {
            return Vec::new();
        }
        self.values
            .iter()
            .zip(&self.columns)
            .filter(|(&s, _)| s > rel_tol * smax)
            .map(|(&s, col)| col.iter().map(|&x| x / s).collect())
            .collect()
    }
}

pub fn left_singular<T: Scalar>(a: &Matrix<T>) -> Result<LeftSingular<T>> {
    const MAX_SWEEPS: usize = 80;
    if !a.is_finite() {
        return Err(Error::NonFinite("singular value decomposition input"));
    }
    let p = a.ncols();
    let mut cols: Vec<Vec<T>> = (0..p).map(|j| a.column(j)).collect();
    let eps = T::epsilon();
    // Columns below eps·‖A‖_F are rounding noise; rotating them never settles.
    let negligible = cols.iter().map(|c| norm_sq(c)).sum::<T>() * eps * eps;
    let mut converged = p < 2;
    let mut sweeps = 0;
    while !converged && sweeps < MAX_SWEEPS {
        sweeps += 1;
        converged = true;
        for i in 0..p {
            for j in i + 1..p {
                let alpha = norm_sq(&cols[i]);
                let beta = norm_sq(&cols[j]);
                let gamma = dot(&cols[i], &cols[j]);
                if gamma == T::zero()
                    || alpha <= negligible
                    || beta <= negligible
                    || gamma.abs() <= eps * (alpha * beta).sqrt()
                {
                    continue;
                }
                converged = false;
                let zeta = (beta - alpha) / (T::of(2.0) * gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                let (left, right) = cols.split_at_mut(j);
                for (x, y) in left[i].iter_mut().zip(right[0].iter_mut()) {
                    let (xi, yj) = (*x, *y);
                    *x = c * xi - s * yj;
                    *y = s * xi + c * yj;
                }
            }
        }
    }
    if !converged {
        return Err(Error::NoConvergence {
            method: "one-sided Jacobi SVD",
            iterations: sweeps,
            estimate: f64::NAN,
            residual: f64::NAN,
        });
    }
    let values = cols.iter().map(|c| norm_sq(c).sqrt()).collect();
    Ok(LeftSingular {
        values,
        columns: cols,
    })
}

/// Iteration cap for each phase of [`operator_norm`].
pub const OPNORM_MAX_ITER: usize = 10_000;

/// Largest singular value of `h`.
///
/// Power iteration on `HᵀH` from a fixed start vector, stopping once the
/// eigen-residual `‖HᵀHv − ρv‖` falls below `1e-10·ρ`. If that stalls
/// (clustered top singular values, or a start vector with no component in
/// the dominant subspace) the computation restarts with a block subspace
/// iteration plus Rayleigh–Ritz, which converges at the rate of the ninth
/// singular value instead of the second.
pub fn operator_norm<T: Scalar>(h: &Matrix<T>) -> Result<T> {
    if !h.is_finite() {
        return Err(Error::NonFinite("operator norm input"));
    }
    if h.max_abs() == T::zero() {
        return Ok(T::zero());
    }
    // Scale to unit max entry so that squared quantities cannot overflow.
    let scale = h.max_abs();
    let hs = h.scaled(T::one() / scale);
    let tol = T::tight_tol();

    if let Some(rho) = power_iteration(&hs, tol) {
        return Ok(rho.sqrt() * scale);
    }
    block_iteration(&hs, tol).map(|rho| rho.sqrt() * scale)
}

fn gram_apply<T: Scalar>(h: &Matrix<T>, v: &[T]) -> Vec<T> {
    h.tr_matvec(&h.matvec(v))
}

fn power_iteration<T: Scalar>(h: &Matrix<T>, tol: T) -> Option<T> {
    let n = h.ncols();
    // Low-discrepancy positive start vector.
    let golden = 0.618_033_988_749_894_9_f64;
    let mut v: Vec<T> = (0..n)
        .map(|i| T::of(1.0 + 0.5 * ((i as f64 + 1.0) * golden).fract()))
        .collect();
    let nv = norm_sq(&v).sqrt();
    v.iter_mut().for_each(|x| *x /= nv);

    for _ in 0..OPNORM_MAX_ITER {
        let u = gram_apply(h, &v);
        // Dividing by ‖v‖² keeps the quotient exact for isometries.
        let rho = dot(&v, &u) / norm_sq(&v);
        let un = norm_sq(&u).sqrt();
        if un == T::zero() || rho <= T::zero() {
            return None;
        }
        let residual = u
            .iter()
            .zip(&v)
            .map(|(&a, &b)| (a - rho * b) * (a - rho * b))
            .sum::<T>()
            .sqrt();
        if residual <= tol * rho {
            return Some(rho);
        }
        v = u.into_iter().map(|x| x / un).collect();
    }
    None
}

fn orthonormalize<T: Scalar>(block: &mut [Vec<T>], rng: &mut ChaCha8Rng) {
    let n = block.first().map_or(0, Vec::len);
    for j in 0..block.len() {
        for attempt in 0..4 {
            for _ in 0..2 {
                for i in 0..j {
                    let proj = dot(&block[i], &block[j]);
                    let (done, rest) = block.split_at_mut(j);
                    for (x, &q) in rest[0].iter_mut().zip(&done[i]) {
                        *x -= proj * q;
                    }
                }
            }
            let nrm = norm_sq(&block[j]).sqrt();
            if nrm > T::epsilon() * T::of(1e3) || attempt == 3 {
                let nrm = nrm.max(T::min_positive_value());
                block[j].iter_mut().for_each(|x| *x /= nrm);
                break;
            }
            // Collapsed column (rank-deficient operator): replace it.
            block[j] = (0..n).map(|_| T::of(rng.random::<f64>() - 0.5)).collect();
        }
    }
}

fn block_iteration<T: Scalar>(h: &Matrix<T>, tol: T) -> Result<T> {
    let n = h.ncols();
    let width = n.min(8);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0f0b_1ec7);
    let mut block: Vec<Vec<T>> = (0..width)
        .map(|_| (0..n).map(|_| T::of(rng.random::<f64>() - 0.5)).collect())
        .collect();
    orthonormalize(&mut block, &mut rng);

    let mut estimate = T::zero();
    let mut rel_residual = T::infinity();
    for _ in 0..OPNORM_MAX_ITER {
        let images: Vec<Vec<T>> = block.iter().map(|q| gram_apply(h, q)).collect();
        // Rayleigh–Ritz on the current subspace.
        let projected = Matrix::from_fn(width, width, |i, j| dot(&block[i], &images[j]));
        let eig = symmetric_eigen(&projected)?;
        let top = eig.values[width - 1];
        let coeffs = eig.vectors.column(width - 1);
        let mut ritz = vec![T::zero(); n];
        let mut ritz_image = vec![T::zero(); n];
        for (k, &c) in coeffs.iter().enumerate() {
            for i in 0..n {
                ritz[i] += c * block[k][i];
                ritz_image[i] += c * images[k][i];
            }
        }
        let residual = ritz
            .iter()
            .zip(&ritz_image)
            .map(|(&x, &y)| (y - top * x) * (y - top * x))
            .sum::<T>()
            .sqrt();
        estimate = top;
        if top > T::zero() {
            rel_residual = residual / top;
            if residual <= tol * top {
                return Ok(top);
            }
        }
        block = images;
        orthonormalize(&mut block, &mut rng);
    }
    Err(Error::NoConvergence {
        method: "block power iteration",
        iterations: 2 * OPNORM_MAX_ITER,
        estimate: estimate.sqrt().as_f64(),
        residual: rel_residual.as_f64(),
    })
}
