//! Minimal dense linear algebra.
//!
//! Row-major [`DenseMatrix`], the [`DesignMatrix`] operator with a diagonal fast
//! path, power-method extraction of singular triplets with rank-one deflation, and a
//! cyclic Jacobi eigensolver used as an independent reference for small matrices.

#![allow(clippy::needless_range_loop)]

use crate::error::{Error, Result};

/// Golden-ratio increment used to build the deterministic power-method start vector.
const START_INCREMENT: f64 = 0.618_033_988_749_894_8;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
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

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let n = values.len();
        let mut m = Self::zeros(n, n);
        for (i, v) in values.iter().enumerate() {
            m.data[i * n + i] = *v;
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
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `A x`
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "matvec dimension");
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    /// `Aᵀ y`
    pub fn matvec_t(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.rows, "matvec_t dimension");
        let mut out = vec![0.0; self.cols];
        for (i, yi) in y.iter().enumerate() {
            if *yi != 0.0 {
                axpy(*yi, self.row(i), &mut out);
            }
        }
        out
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a != 0.0 {
                    axpy(a, other.row(k), out_row);
                }
            }
        }
        Ok(out)
    }

    pub fn transpose(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    /// `AᵀA`
    pub fn gram(&self) -> DenseMatrix {
        let mut g = DenseMatrix::zeros(self.cols, self.cols);
        for i in 0..self.rows {
            let r = self.row(i);
            for a in 0..self.cols {
                let ra = r[a];
                if ra == 0.0 {
                    continue;
                }
                let g_row = &mut g.data[a * self.cols..(a + 1) * self.cols];
                axpy(ra, r, g_row);
            }
        }
        g
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm(&self.data)
    }

    pub fn max_abs_diff(&self, other: &DenseMatrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).sum()
    }

    /// In-place `A += scale * u vᵀ`.
    pub fn add_rank_one(&mut self, scale: f64, u: &[f64], v: &[f64]) {
        assert_eq!(u.len(), self.rows);
        assert_eq!(v.len(), self.cols);
        for (i, ui) in u.iter().enumerate() {
            let s = scale * ui;
            if s != 0.0 {
                let row = &mut self.data[i * self.cols..(i + 1) * self.cols];
                axpy(s, v, row);
            }
        }
    }
}

/// The forward operator `A` of an estimation problem.
#[derive(Debug, Clone, PartialEq)]
pub enum DesignMatrix {
    Dense(DenseMatrix),
    /// Square diagonal operator `diag(lambda)` with strictly positive entries.
    Diagonal(Vec<f64>),
}

impl DesignMatrix {
    pub fn dense(matrix: DenseMatrix) -> Result<Self> {
        if !matrix.is_finite() {
            return Err(Error::InvalidParameter("design has non-finite entries".into()));
        }
        Ok(Self::Dense(matrix))
    }

    pub fn diagonal(lambda: Vec<f64>) -> Result<Self> {
        if let Some(bad) = lambda.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "diagonal entries must be finite and positive, found {bad}"
            )));
        }
        Ok(Self::Diagonal(lambda))
    }

    pub fn n(&self) -> usize {
        match self {
            Self::Dense(m) => m.rows(),
            Self::Diagonal(l) => l.len(),
        }
    }

    pub fn p(&self) -> usize {
        match self {
            Self::Dense(m) => m.cols(),
            Self::Diagonal(l) => l.len(),
        }
    }

    pub fn is_diagonal(&self) -> bool {
        matches!(self, Self::Diagonal(_))
    }

    /// `A x`
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Self::Dense(m) => m.matvec(x),
            Self::Diagonal(l) => {
                assert_eq!(x.len(), l.len(), "apply dimension");
                l.iter().zip(x).map(|(a, b)| a * b).collect()
            }
        }
    }

    /// `Aᵀ y`
    pub fn apply_transpose(&self, y: &[f64]) -> Vec<f64> {
        match self {
            Self::Dense(m) => m.matvec_t(y),
            Self::Diagonal(_) => self.apply(y),
        }
    }

    pub fn to_dense(&self) -> DenseMatrix {
        match self {
            Self::Dense(m) => m.clone(),
            Self::Diagonal(l) => DenseMatrix::diagonal(l),
        }
    }

    /// Spectral norm `‖A‖`. Exact for the diagonal variant, power method otherwise.
    pub fn spectral_norm(&self) -> Result<f64> {
        match self {
            Self::Diagonal(l) => Ok(l.iter().copied().fold(0.0, f64::max)),
            Self::Dense(_) => Ok(top_singular_triplet(self, DEFAULT_SVD_TOL, self.default_power_iters())?.sigma),
        }
    }

    pub fn default_power_iters(&self) -> usize {
        10 * self.n().max(self.p())
    }
}

pub const DEFAULT_SVD_TOL: f64 = 1e-10;

/// One singular triplet `sigma, left = v, right = u` with `A u = sigma v`.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdTriplet {
    pub sigma: f64,
    pub left: Vec<f64>,
    pub right: Vec<f64>,
    /// False when the power iteration hit its iteration cap before converging.
    pub converged: bool,
    pub power_iterations: usize,
}

/// Dominant singular triplet by power iteration on `AᵀA`.
///
/// Converged once the relative change of the Rayleigh estimate `‖A x‖²` is below
/// `tol` and successive unit iterates agree within `1e-3·√tol`. The start vector is
/// deterministic. A triplet is returned even without convergence, flagged through
/// [`SvdTriplet::converged`].
pub fn top_singular_triplet(design: &DesignMatrix, tol: f64, max_power_iters: usize) -> Result<SvdTriplet> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tol must be positive, got {tol}")));
    }
    let p = design.p();
    if p == 0 || design.n() == 0 {
        return Err(Error::ZeroMatrix);
    }
    let vector_tol = 1e-3 * tol.sqrt();

    let mut x: Vec<f64> = (0..p)
        .map(|i| 1.0 + ((i as f64 + 1.0) * START_INCREMENT).fract())
        .collect();
    normalize(&mut x);
    let mut y = design.apply(&x);
    let mut mu = dot(&y, &y);
    if !(mu > f64::MIN_POSITIVE) {
        return Err(Error::ZeroMatrix);
    }

    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_power_iters {
        iterations += 1;
        let mut z = design.apply_transpose(&y);
        let z_norm = norm(&z);
        if !(z_norm > f64::MIN_POSITIVE) {
            return Err(Error::ZeroMatrix);
        }
        z.iter_mut().for_each(|v| *v /= z_norm);
        let y_new = design.apply(&z);
        let mu_new = dot(&y_new, &y_new);
        let dx = distance(&z, &x);
        x = z;
        y = y_new;
        let rel = (mu_new - mu).abs() / mu_new.max(f64::MIN_POSITIVE);
        mu = mu_new;
        if rel <= tol && dx <= vector_tol {
            converged = true;
            break;
        }
    }
    if !(mu > f64::MIN_POSITIVE) {
        return Err(Error::ZeroMatrix);
    }

    // Sign convention: first non-negligible entry of the right vector is positive.
    if let Some(first) = x.iter().find(|v| v.abs() > 1e-12) {
        if *first < 0.0 {
            x.iter_mut().for_each(|v| *v = -*v);
        }
    }
    let sigma = mu.sqrt();
    let mut left = design.apply(&x);
    left.iter_mut().for_each(|v| *v /= sigma);
    normalize(&mut left);

    Ok(SvdTriplet {
        sigma,
        left,
        right: x,
        converged,
        power_iterations: iterations,
    })
}

/// Rank-one downdate `A − sigma·left·rightᵀ`.
pub fn deflate(design: &DesignMatrix, triplet: &SvdTriplet) -> Result<DesignMatrix> {
    if triplet.left.len() != design.n() || triplet.right.len() != design.p() {
        return Err(Error::DimensionMismatch(format!(
            "triplet ({}, {}) for a {}x{} design",
            triplet.left.len(),
            triplet.right.len(),
            design.n(),
            design.p()
        )));
    }
    let mut m = design.to_dense();
    m.add_rank_one(-triplet.sigma, &triplet.left, &triplet.right);
    Ok(DesignMatrix::Dense(m))
}

/// Result of [`top_k_svd`].
#[derive(Debug, Clone)]
pub struct PartialSvd {
    pub triplets: Vec<SvdTriplet>,
    /// Set when the numerical rank ran out before `k` triplets were found.
    pub rank_exhausted: bool,
}

/// Numerical-rank cut-off relative to the leading singular value.
pub fn rank_threshold(leading_sigma: f64, n: usize, p: usize) -> f64 {
    leading_sigma * n.max(p) as f64 * f64::EPSILON
}

/// Leading `k` singular triplets by alternating power iteration and deflation.
/// The diagonal variant sorts `lambda` instead.
pub fn top_k_svd(design: &DesignMatrix, k: usize, tol: f64) -> Result<PartialSvd> {
    let max_k = design.n().min(design.p());
    if k == 0 || k > max_k {
        return Err(Error::InvalidParameter(format!("k must lie in 1..={max_k}, got {k}")));
    }
    if let DesignMatrix::Diagonal(lambda) = design {
        let order = diagonal_order(lambda);
        let n = lambda.len();
        let triplets = order
            .into_iter()
            .take(k)
            .map(|j| {
                let mut e = vec![0.0; n];
                e[j] = 1.0;
                SvdTriplet {
                    sigma: lambda[j],
                    left: e.clone(),
                    right: e,
                    converged: true,
                    power_iterations: 0,
                }
            })
            .collect();
        return Ok(PartialSvd {
            triplets,
            rank_exhausted: false,
        });
    }

    let max_iters = design.default_power_iters();
    let mut current = design.clone();
    let mut triplets: Vec<SvdTriplet> = Vec::with_capacity(k);
    let mut rank_exhausted = false;
    while triplets.len() < k {
        let t = match top_singular_triplet(&current, tol, max_iters) {
            Ok(t) => t,
            Err(Error::ZeroMatrix) => {
                rank_exhausted = true;
                break;
            }
            Err(e) => return Err(e),
        };
        if let Some(first) = triplets.first() {
            if t.sigma <= rank_threshold(first.sigma, design.n(), design.p()) {
                rank_exhausted = true;
                break;
            }
        }
        current = deflate(&current, &t)?;
        triplets.push(t);
    }
    Ok(PartialSvd {
        triplets,
        rank_exhausted,
    })
}

/// Indices of `lambda` sorted by decreasing value; ties keep index order.
pub fn diagonal_order(lambda: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..lambda.len()).collect();
    order.sort_by(|a, b| lambda[*b].total_cmp(&lambda[*a]));
    order
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in decreasing order and the matching eigenvectors as the
/// columns of the second component. Intended as a reference for small matrices.
pub fn jacobi_eigen_symmetric(matrix: &DenseMatrix) -> Result<(Vec<f64>, DenseMatrix)> {
    let n = matrix.rows();
    if n != matrix.cols() {
        return Err(Error::DimensionMismatch("Jacobi needs a square matrix".into()));
    }
    let mut a = matrix.clone();
    let mut v = DenseMatrix::identity(n);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |j| *j != i).map(move |j| (i, j)))
            .map(|(i, j)| a.get(i, j).powi(2))
            .sum();
        let scale = a.frobenius_norm().max(f64::MIN_POSITIVE);
        if off.sqrt() <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a.get(p, q);
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (a.get(q, q) - a.get(p, p)) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a.get(k, p);
                    let akq = a.get(k, q);
                    a.set(k, p, c * akp - s * akq);
                    a.set(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let apk = a.get(p, k);
                    let aqk = a.get(q, k);
                    a.set(p, k, c * apk - s * aqk);
                    a.set(q, k, s * apk + c * aqk);
                }
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|i, j| a.get(*j, *j).total_cmp(&a.get(*i, *i)));
    let values = order.iter().map(|i| a.get(*i, *i)).collect();
    let vectors = DenseMatrix::from_fn(n, n, |r, c| v.get(r, order[c]));
    Ok((values, vectors))
}

/// Singular values of `A` from the Jacobi eigenvalues of `AᵀA`, decreasing.
pub fn jacobi_singular_values(matrix: &DenseMatrix) -> Result<Vec<f64>> {
    let (values, _) = jacobi_eigen_symmetric(&matrix.gram())?;
    Ok(values.into_iter().map(|v| v.max(0.0).sqrt()).collect())
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a)
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    norm2(a).sqrt()
}

/// `y += a x`
#[inline]
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn normalize(x: &mut [f64]) {
    let n = norm(x);
    if n > 0.0 {
        x.iter_mut().for_each(|v| *v /= n);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        DenseMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn identity_top_triplet() {
        let d = DesignMatrix::dense(DenseMatrix::identity(2)).unwrap();
        let t = top_singular_triplet(&d, 1e-10, 100).unwrap();
        assert!((t.sigma - 1.0).abs() < 1e-12);
        let back = d.apply(&t.right);
        assert!(distance(&back, &t.left) < 1e-12);
    }

    #[test]
    fn diagonal_top_triplet_picks_largest() {
        let d = DesignMatrix::diagonal(vec![3.0, 1.0]).unwrap();
        let t = top_singular_triplet(&d, 1e-10, 1000).unwrap();
        assert!((t.sigma - 3.0).abs() < 1e-10);
        assert!((t.right[0] - 1.0).abs() < 1e-8, "{:?}", t.right);
        assert!(t.right[1].abs() < 1e-6);
        assert!(t.converged);
    }

    #[test]
    fn random_5x5_matches_jacobi() {
        let a = random_matrix(5, 5, 11);
        let reference = jacobi_singular_values(&a).unwrap();
        let t = top_singular_triplet(&DesignMatrix::Dense(a), 1e-12, 100_000).unwrap();
        assert!((t.sigma - reference[0]).abs() < 1e-8, "{} vs {}", t.sigma, reference[0]);
    }

    #[test]
    fn deflate_diagonal() {
        let d = DesignMatrix::diagonal(vec![3.0, 1.0]).unwrap();
        let t = top_singular_triplet(&d, 1e-12, 1000).unwrap();
        let DesignMatrix::Dense(m) = deflate(&d, &t).unwrap() else {
            panic!("deflation returns a dense matrix")
        };
        let expected = DenseMatrix::diagonal(&[0.0, 1.0]);
        assert!(m.max_abs_diff(&expected) < 1e-8);
    }

    #[test]
    fn deflate_rank_one_to_zero() {
        let u = [1.0, 2.0, -1.0];
        let v = [0.5, 0.25];
        let mut m = DenseMatrix::zeros(3, 2);
        m.add_rank_one(1.0, &u, &v);
        let d = DesignMatrix::Dense(m);
        let t = top_singular_triplet(&d, 1e-12, 1000).unwrap();
        let DesignMatrix::Dense(rest) = deflate(&d, &t).unwrap() else {
            unreachable!()
        };
        assert!(rest.frobenius_norm() < 1e-10);
    }

    #[test]
    fn deflated_norm_is_second_singular_value() {
        let a = random_matrix(4, 4, 5);
        let reference = jacobi_singular_values(&a).unwrap();
        let d = DesignMatrix::Dense(a);
        let t = top_singular_triplet(&d, 1e-12, 100_000).unwrap();
        let rest = deflate(&d, &t).unwrap();
        let t2 = top_singular_triplet(&rest, 1e-12, 100_000).unwrap();
        assert!((t2.sigma - reference[1]).abs() < 1e-8);
    }

    #[test]
    fn top_k_diagonal_fast_path() {
        let lambda: Vec<f64> = (1..=3).map(|j| 1.0 / (j as f64).sqrt()).collect();
        let d = DesignMatrix::diagonal(lambda).unwrap();
        let svd = top_k_svd(&d, 3, 1e-10).unwrap();
        let sig: Vec<f64> = svd.triplets.iter().map(|t| t.sigma).collect();
        for (s, e) in sig.iter().zip([1.0, 0.5f64.sqrt(), (1.0f64 / 3.0).sqrt()]) {
            assert!((s - e).abs() < 1e-12);
        }
    }

    #[test]
    fn top_k_identity() {
        let d = DesignMatrix::dense(DenseMatrix::identity(3)).unwrap();
        let svd = top_k_svd(&d, 2, 1e-10).unwrap();
        assert_eq!(svd.triplets.len(), 2);
        assert!(svd.triplets.iter().all(|t| (t.sigma - 1.0).abs() < 1e-10));
    }

    #[test]
    fn top_k_random_tall_matches_jacobi() {
        let a = random_matrix(6, 4, 3);
        let reference = jacobi_singular_values(&a).unwrap();
        let svd = top_k_svd(&DesignMatrix::Dense(a), 4, 1e-12).unwrap();
        assert_eq!(svd.triplets.len(), 4);
        for (t, r) in svd.triplets.iter().zip(&reference) {
            assert!((t.sigma - r).abs() < 1e-7, "{} vs {}", t.sigma, r);
        }
    }

    #[test]
    fn top_k_reports_rank_exhaustion() {
        let mut m = DenseMatrix::zeros(4, 3);
        m.add_rank_one(1.0, &[1.0, 0.0, 2.0, 1.0], &[1.0, -1.0, 0.5]);
        let svd = top_k_svd(&DesignMatrix::Dense(m), 3, 1e-10).unwrap();
        assert!(svd.rank_exhausted);
        assert_eq!(svd.triplets.len(), 1);
    }

    #[test]
    fn zero_matrix_is_rejected() {
        let d = DesignMatrix::Dense(DenseMatrix::zeros(3, 3));
        assert_eq!(top_singular_triplet(&d, 1e-10, 10), Err(Error::ZeroMatrix));
    }

    #[test]
    fn diagonal_rejects_nonpositive() {
        assert!(DesignMatrix::diagonal(vec![1.0, 0.0]).is_err());
        assert!(DesignMatrix::diagonal(vec![1.0, f64::NAN]).is_err());
    }

    #[test]
    fn jacobi_reconstructs() {
        let a = random_matrix(5, 5, 2);
        let g = a.gram();
        let (vals, vecs) = jacobi_eigen_symmetric(&g).unwrap();
        let lambda = DenseMatrix::diagonal(&vals);
        let back = vecs.matmul(&lambda).unwrap().matmul(&vecs.transpose()).unwrap();
        assert!(back.max_abs_diff(&g) < 1e-12);
    }
}
