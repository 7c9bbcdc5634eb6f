//! L2-boosting in its orthogonal-matching-pursuit form for high-dimensional linear
//! models. All norms are empirical: `‖a‖_n² = n⁻¹Σa_i²`.

use crate::datagen::RegressionInstance;
use crate::error::{Error, Result};
use crate::estimator::{IterateLog, IterativeEstimator, PathStorage, StopIndex};
use crate::linalg::{axpy, dot, norm2, DenseMatrix};

/// Relative size below which a Gram–Schmidt remainder marks a dependent column.
const DEPENDENCE_RTOL: f64 = 1e-8;
const LASSO_ROUNDS: usize = 50;
const LASSO_SIGMA_TOL: f64 = 1e-6;
const LASSO_SWEEPS: usize = 1000;
const LASSO_SWEEP_TOL: f64 = 1e-8;

pub const DEFAULT_RR_K: f64 = 1.2;
pub const DEFAULT_RR_ALPHA: f64 = 0.95;
pub const DEFAULT_AIC_K: f64 = 2.0;

/// Scaled-lasso noise estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseEstimate {
    pub sigma_hat2: f64,
    pub lasso_coefficients: Vec<f64>,
    pub iterations_used: usize,
    /// False when the alternation hit its round limit.
    pub converged: bool,
}

/// Critical value of the boosting discrepancy stop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CriticalValue {
    Constant(f64),
    /// `κ_m = σ̂² + 8σ̂²·m·log n` with `σ̂²` from the noise estimate.
    Theoretical,
}

#[derive(Debug, Clone)]
pub struct L2Boost {
    x: DenseMatrix,
    /// `Xᵀ`, so columns are contiguous rows.
    xt: DenseMatrix,
    y: Vec<f64>,
    col_norms: Vec<f64>,
    true_coefficients: Option<Vec<f64>>,
    selected: Vec<usize>,
    excluded: Vec<bool>,
    /// Euclidean-orthonormal basis of the selected columns.
    basis: Vec<Vec<f64>>,
    /// Column `k` holds the coordinates of the `k`-th selected column in the basis.
    r_factor: Vec<Vec<f64>>,
    basis_y: Vec<f64>,
    residual: Vec<f64>,
    log: IterateLog,
    signal_remainder: Option<Vec<f64>>,
    noise_projection: Option<(Vec<f64>, Vec<f64>)>,
    bias2: Vec<f64>,
    stochastic_error: Vec<f64>,
    dependent_stop: bool,
    noise_estimate: Option<NoiseEstimate>,
}

impl L2Boost {
    pub fn new(covariates: DenseMatrix, response: Vec<f64>, true_coefficients: Option<Vec<f64>>) -> Result<Self> {
        let (n, p) = (covariates.rows(), covariates.cols());
        if n == 0 || p == 0 {
            return Err(Error::InvalidSize("design must be non-empty".into()));
        }
        if response.len() != n {
            return Err(Error::DimensionMismatch(format!("response of length {} for {n} rows", response.len())));
        }
        if !covariates.is_finite() || response.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite data".into()));
        }
        if let Some(b) = &true_coefficients {
            if b.len() != p {
                return Err(Error::DimensionMismatch(format!("{} coefficients for {p} columns", b.len())));
            }
        }
        let col_norms: Vec<f64> = (0..p).map(|j| norm2(&covariates.column(j)).sqrt()).collect();
        let nf = n as f64;
        let mut bias2 = Vec::new();
        let mut stochastic_error = Vec::new();
        let (signal_remainder, noise_projection) = match &true_coefficients {
            Some(b) => {
                let f = covariates.matvec(b);
                let eps: Vec<f64> = response.iter().zip(&f).map(|(y, fi)| y - fi).collect();
                bias2.push(norm2(&f) / nf);
                stochastic_error.push(0.0);
                (Some(f), Some((eps, vec![0.0; n])))
            }
            None => (None, None),
        };
        Ok(Self {
            log: IterateLog::new(PathStorage::Full, vec![0.0; p], norm2(&response) / nf),
            residual: response.clone(),
            xt: covariates.transpose(),
            x: covariates,
            y: response,
            col_norms,
            true_coefficients,
            selected: Vec::new(),
            excluded: vec![false; p],
            basis: Vec::new(),
            r_factor: Vec::new(),
            basis_y: Vec::new(),
            signal_remainder,
            noise_projection,
            bias2,
            stochastic_error,
            dependent_stop: false,
            noise_estimate: None,
        })
    }

    pub fn from_instance(instance: &RegressionInstance, true_coefficients: Option<Vec<f64>>) -> Result<Self> {
        Self::new(instance.covariates.clone(), instance.response.clone(), true_coefficients)
    }

    fn n(&self) -> usize {
        self.x.rows()
    }

    fn p(&self) -> usize {
        self.x.cols()
    }

    /// Selected column indices in selection order.
    pub fn selected(&self) -> &[usize] {
        &self.selected
    }

    /// True when the path ended on two numerically dependent selections.
    pub fn dependent_stop(&self) -> bool {
        self.dependent_stop
    }

    pub fn log(&self) -> &IterateLog {
        &self.log
    }

    pub fn true_coefficients(&self) -> Option<&[f64]> {
        self.true_coefficients.as_deref()
    }

    /// `‖(I − Π_m) f*‖_n²`
    pub fn bias2(&self) -> Result<&[f64]> {
        self.true_coefficients
            .as_ref()
            .map(|_| self.bias2.as_slice())
            .ok_or(Error::OracleUnavailable("true coefficients"))
    }

    /// `‖Π_m ε‖_n²`
    pub fn stochastic_error(&self) -> Result<&[f64]> {
        self.true_coefficients
            .as_ref()
            .map(|_| self.stochastic_error.as_slice())
            .ok_or(Error::OracleUnavailable("true coefficients"))
    }

    /// `bias2 + stochastic_error`
    pub fn risk(&self) -> Result<Vec<f64>> {
        Ok(self.bias2()?.iter().zip(self.stochastic_error()?).map(|(b, s)| b + s).collect())
    }

    /// Fitted values `f̂^(m) = X β̂^(m)`.
    pub fn fitted_values(&mut self, m: usize) -> Result<Vec<f64>> {
        let beta = self.coefficients(m)?;
        Ok(self.x.matvec(&beta))
    }

    /// Coefficient vector `β̂^(m)`.
    pub fn coefficients(&mut self, m: usize) -> Result<Vec<f64>> {
        if !self.ensure(m) {
            return Err(Error::RankExhausted {
                requested: m,
                available: self.iteration(),
            });
        }
        Ok(self.log.estimate(m).expect("full storage").to_vec())
    }

    /// Orthogonal projection of `v` onto the span of the first `m` selected columns.
    pub fn project(&mut self, m: usize, v: &[f64]) -> Result<Vec<f64>> {
        if !self.ensure(m) {
            return Err(Error::RankExhausted {
                requested: m,
                available: self.iteration(),
            });
        }
        let mut out = vec![0.0; self.n()];
        for q in &self.basis[..m] {
            axpy(dot(q, v), q, &mut out);
        }
        Ok(out)
    }

    fn select(&self) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for j in 0..self.p() {
            if self.excluded[j] || self.col_norms[j] == 0.0 || self.selected.contains(&j) {
                continue;
            }
            let score = dot(self.xt.row(j), &self.residual).abs() / self.col_norms[j];
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((j, score));
            }
        }
        best.map(|(j, _)| j)
    }

    /// Two classical Gram–Schmidt passes; `None` for a numerically dependent column.
    fn orthogonalize(&self, j: usize) -> Option<(Vec<f64>, Vec<f64>)> {
        let mut w = self.xt.row(j).to_vec();
        let mut coords = vec![0.0; self.basis.len() + 1];
        for _ in 0..2 {
            for (k, q) in self.basis.iter().enumerate() {
                let c = dot(q, &w);
                axpy(-c, q, &mut w);
                coords[k] += c;
            }
        }
        let remainder = norm2(&w).sqrt();
        if remainder < DEPENDENCE_RTOL * self.col_norms[j] {
            return None;
        }
        w.iter_mut().for_each(|v| *v /= remainder);
        coords[self.basis.len()] = remainder;
        Some((w, coords))
    }

    fn current_coefficients(&self) -> Vec<f64> {
        let m = self.selected.len();
        let mut b = vec![0.0; m];
        for i in (0..m).rev() {
            let mut acc = self.basis_y[i];
            for (k, bk) in b.iter().enumerate().skip(i + 1) {
                acc -= self.r_factor[k][i] * bk;
            }
            b[i] = acc / self.r_factor[i][i];
        }
        let mut beta = vec![0.0; self.p()];
        for (k, j) in self.selected.iter().enumerate() {
            beta[*j] = b[k];
        }
        beta
    }

    /// Scaled-lasso noise estimate, computed once and cached.
    pub fn get_noise_estimate(&mut self) -> &NoiseEstimate {
        if self.noise_estimate.is_none() {
            self.noise_estimate = Some(scaled_lasso(&self.x, &self.y));
        }
        self.noise_estimate.as_ref().expect("just set")
    }

    pub fn get_discrepancy_stop(&mut self, critical_value: CriticalValue, max_iteration: usize) -> StopIndex {
        match critical_value {
            CriticalValue::Constant(kappa) => self.discrepancy_stop(kappa, max_iteration),
            CriticalValue::Theoretical => {
                let s2 = self.get_noise_estimate().sigma_hat2;
                let log_n = (self.n() as f64).ln();
                let mut last = 0;
                for m in 0..=max_iteration {
                    match self.residual_at(m) {
                        Some(r) if r <= s2 + 8.0 * s2 * m as f64 * log_n => return StopIndex::reached_at(m),
                        Some(_) => last = m,
                        None => break,
                    }
                }
                StopIndex::exhausted(last)
            }
        }
    }

    /// First `m` with `‖Y − f̂^(m+1)‖_n² / ‖Y − f̂^(m)‖_n² ≥ 1 − 4K·log(2p/alpha)/n`.
    pub fn get_residual_ratio_stop(&mut self, max_iteration: usize, k: f64, alpha: f64) -> Result<StopIndex> {
        if !(k > 0.0) {
            return Err(Error::InvalidParameter(format!("K must be positive, got {k}")));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidParameter(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        let threshold = 1.0 - 4.0 * k * (2.0 * self.p() as f64 / alpha).ln() / self.n() as f64;
        for m in 0..max_iteration {
            let Some(current) = self.residual_at(m) else {
                return Ok(StopIndex::exhausted(m.saturating_sub(1)));
            };
            if current == 0.0 {
                return Ok(StopIndex::reached_at(m));
            }
            let Some(next) = self.residual_at(m + 1) else {
                return Ok(StopIndex::exhausted(m));
            };
            if next / current >= threshold {
                return Ok(StopIndex::reached_at(m));
            }
        }
        Ok(StopIndex::exhausted(max_iteration))
    }

    /// Minimizer over `0 ≤ m ≤ max_iteration` of `‖Y − f̂^(m)‖_n² + K·σ̂²·m·log(p)/n`.
    pub fn get_aic_iteration(&mut self, k: f64, max_iteration: usize) -> usize {
        let s2 = self.get_noise_estimate().sigma_hat2;
        self.ensure(max_iteration);
        let end = max_iteration.min(self.iteration());
        let penalty = k * s2 * (self.p() as f64).ln() / self.n() as f64;
        aic_argmin(&self.log.residual_norm2()[..=end], penalty)
    }
}

/// Argmin of `residuals[m] + m·penalty_per_step`, ties to the smallest `m`.
pub fn aic_argmin(residuals: &[f64], penalty_per_step: f64) -> usize {
    let mut best = (0, f64::INFINITY);
    for (m, r) in residuals.iter().enumerate() {
        let value = r + m as f64 * penalty_per_step;
        if value < best.1 {
            best = (m, value);
        }
    }
    best.0
}

/// Scaled lasso: alternate a lasso fit with penalty `λ₀σ̂`, `λ₀ = √(2 log p / n)`, and
/// the scale update `σ̂ = ‖Y − Xβ̂‖_n`.
pub fn scaled_lasso(x: &DenseMatrix, y: &[f64]) -> NoiseEstimate {
    let (n, p) = (x.rows(), x.cols());
    let nf = n as f64;
    let lambda0 = (2.0 * (p as f64).ln() / nf).sqrt();
    let xt = x.transpose();
    let columns: Vec<&[f64]> = (0..p).map(|j| xt.row(j)).collect();
    let col_sq: Vec<f64> = columns.iter().map(|c| norm2(c) / nf).collect();
    let mut beta = vec![0.0; p];
    let mut residual = y.to_vec();
    let mut sigma = (norm2(y) / nf).sqrt();
    if sigma == 0.0 {
        return NoiseEstimate {
            sigma_hat2: 0.0,
            lasso_coefficients: beta,
            iterations_used: 0,
            converged: true,
        };
    }
    let mut converged = false;
    let mut rounds = 0;
    while rounds < LASSO_ROUNDS {
        rounds += 1;
        let lambda = lambda0 * sigma;
        for _ in 0..LASSO_SWEEPS {
            let mut max_change: f64 = 0.0;
            for j in 0..p {
                if col_sq[j] == 0.0 {
                    continue;
                }
                let old = beta[j];
                let rho = dot(columns[j], &residual) / nf + col_sq[j] * old;
                let new = soft_threshold(rho, lambda) / col_sq[j];
                if new != old {
                    axpy(old - new, columns[j], &mut residual);
                    beta[j] = new;
                    max_change = max_change.max((new - old).abs() * col_sq[j].sqrt());
                }
            }
            if max_change < LASSO_SWEEP_TOL {
                break;
            }
        }
        let updated = (norm2(&residual) / nf).sqrt();
        let change = (updated - sigma).abs();
        sigma = updated;
        if change < LASSO_SIGMA_TOL {
            converged = true;
            break;
        }
        if sigma == 0.0 {
            converged = true;
            break;
        }
    }
    NoiseEstimate {
        sigma_hat2: sigma * sigma,
        lasso_coefficients: beta,
        iterations_used: rounds,
        converged,
    }
}

fn soft_threshold(z: f64, lambda: f64) -> f64 {
    if z > lambda {
        z - lambda
    } else if z < -lambda {
        z + lambda
    } else {
        0.0
    }
}

impl IterativeEstimator for L2Boost {
    fn iteration(&self) -> usize {
        self.log.iteration()
    }

    fn residuals(&self) -> &[f64] {
        self.log.residual_norm2()
    }

    fn advance(&mut self) -> bool {
        if self.dependent_stop || self.selected.len() >= self.n().min(self.p()) {
            return false;
        }
        let mut attempts = 0;
        let (j, q, coords) = loop {
            let Some(j) = self.select() else { return false };
            match self.orthogonalize(j) {
                Some((q, coords)) => break (j, q, coords),
                None => {
                    self.excluded[j] = true;
                    attempts += 1;
                    if attempts == 2 {
                        log::debug!("two dependent selections in a row; stopping the path");
                        self.dependent_stop = true;
                        return false;
                    }
                }
            }
        };
        let nf = self.n() as f64;
        let qy = dot(&q, &self.y);
        axpy(-qy, &q, &mut self.residual);
        if let Some(rem) = self.signal_remainder.as_mut() {
            let c = dot(&q, rem);
            axpy(-c, &q, rem);
            self.bias2.push(norm2(rem) / nf);
        }
        if let Some((eps, proj)) = self.noise_projection.as_mut() {
            axpy(dot(&q, eps), &q, proj);
            self.stochastic_error.push(norm2(proj) / nf);
        }
        self.selected.push(j);
        self.basis.push(q);
        self.r_factor.push(coords);
        self.basis_y.push(qy);
        let beta = self.current_coefficients();
        let r2 = norm2(&self.residual) / nf;
        self.log.push(beta, r2);
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{gamma_sparse_signal, gaussian_design, linear_model};
    use crate::linalg::jacobi_eigen_symmetric;
    use proptest::prelude::*;

    /// Columns `√n·e_j` for `j < p`, so `⟨X_j, X_k⟩_n = δ_jk`.
    fn orthonormal_design(n: usize, p: usize) -> DenseMatrix {
        let s = (n as f64).sqrt();
        DenseMatrix::from_fn(n, p, |i, j| if i == j { s } else { 0.0 })
    }

    #[test]
    fn orthonormal_selection_order() {
        let x = orthonormal_design(8, 8);
        let y = vec![0.3, -2.0, 0.9, 0.05, 1.4, -0.7, 0.0, 1.1];
        let mut boost = L2Boost::new(x.clone(), y.clone(), None).unwrap();
        boost.iterate(8);
        let mut order: Vec<usize> = (0..8).collect();
        let corr: Vec<f64> = (0..8).map(|j| (dot(&x.column(j), &y) / 8.0).abs()).collect();
        order.sort_by(|a, b| corr[*b].total_cmp(&corr[*a]).then(a.cmp(b)));
        assert_eq!(boost.selected(), &order[..]);
        assert!(boost.residuals()[8] < 1e-24);
    }

    #[test]
    fn full_projection_has_zero_residual() {
        let x = gaussian_design(6, 6, 3);
        let y: Vec<f64> = (0..6).map(|i| i as f64).collect();
        let mut boost = L2Boost::new(x, y, None).unwrap();
        assert_eq!(boost.iterate(10), 6);
        assert!(boost.residuals()[6] < 1e-20);
    }

    #[test]
    fn zero_signal_has_no_bias() {
        let inst = linear_model(50, &[0.0; 10], 1.0, 4).unwrap();
        let mut boost = L2Boost::from_instance(&inst, Some(vec![0.0; 10])).unwrap();
        boost.iterate(10);
        assert!(boost.bias2().unwrap().iter().all(|b| *b == 0.0));
        let risk = boost.risk().unwrap();
        for m in 1..risk.len() {
            assert!(risk[m] >= risk[m - 1]);
        }
    }

    #[test]
    fn dependent_columns_are_skipped() {
        let base = gaussian_design(10, 2, 5);
        let x = DenseMatrix::from_fn(10, 3, |i, j| match j {
            0 => base.get(i, 0),
            1 => 2.0 * base.get(i, 0),
            _ => base.get(i, 1),
        });
        let y: Vec<f64> = (0..10).map(|i| base.get(i, 0) + 0.5 * base.get(i, 1)).collect();
        let mut boost = L2Boost::new(x, y, None).unwrap();
        boost.iterate(3);
        assert_eq!(boost.iteration(), 2);
        let mut sel = boost.selected().to_vec();
        sel.sort_unstable();
        assert!(sel == vec![0, 2] || sel == vec![1, 2]);
    }

    #[test]
    fn noise_estimate_cases() {
        let zero = scaled_lasso(&gaussian_design(20, 5, 1), &[0.0; 20]);
        assert_eq!(zero.sigma_hat2, 0.0);

        let x = gaussian_design(500, 100, 2);
        let mut beta = vec![0.0; 100];
        beta[..3].copy_from_slice(&[3.0, -2.0, 1.5]);
        let y = x.matvec(&beta);
        let est = scaled_lasso(&x, &y);
        assert!(est.sigma_hat2 < 0.05 * norm2(&y) / 500.0, "{}", est.sigma_hat2);
    }

    #[test]
    fn stops_on_trivial_thresholds() {
        let inst = linear_model(40, &gamma_sparse_signal(20, 2.0).unwrap(), 0.5, 6).unwrap();
        let y2 = norm2(&inst.response) / 40.0;
        let mut boost = L2Boost::from_instance(&inst, None).unwrap();
        assert_eq!(boost.get_discrepancy_stop(CriticalValue::Constant(y2), 10), StopIndex::reached_at(0));
        // threshold 1 − 4K log(2p/alpha)/n is negative for n = 10, p = 20
        let tiny = linear_model(10, &gamma_sparse_signal(20, 2.0).unwrap(), 0.5, 6).unwrap();
        let mut tiny = L2Boost::from_instance(&tiny, None).unwrap();
        assert_eq!(tiny.get_residual_ratio_stop(10, 1.2, 0.95).unwrap(), StopIndex::reached_at(0));
        assert_eq!(boost.get_aic_iteration(2.0, 0), 0);
        assert!(boost.get_residual_ratio_stop(10, 0.0, 0.95).is_err());
    }

    #[test]
    fn noiseless_discrepancy_hits_support() {
        let x = orthonormal_design(10, 10);
        let mut beta = vec![0.0; 10];
        beta[2] = 1.0;
        beta[5] = -3.0;
        let y = x.matvec(&beta);
        let mut boost = L2Boost::new(x, y, Some(beta)).unwrap();
        assert_eq!(boost.get_discrepancy_stop(CriticalValue::Constant(0.0), 10), StopIndex::reached_at(2));
        assert_eq!(boost.selected(), &[5, 2]);
    }

    #[test]
    fn aic_toy() {
        assert_eq!(aic_argmin(&[1.0, 0.2, 0.19], 0.05), 1);
        assert_eq!(aic_argmin(&[1.0], 0.05), 0);
    }

    #[test]
    fn residual_matches_least_squares_on_selection() {
        let inst = linear_model(30, &gamma_sparse_signal(12, 1.0).unwrap(), 0.3, 9).unwrap();
        let mut boost = L2Boost::from_instance(&inst, None).unwrap();
        boost.iterate(5);
        let sel = boost.selected().to_vec();
        // normal equations on the selected columns, solved by eigen-decomposition
        let xs = DenseMatrix::from_fn(30, 5, |i, k| inst.covariates.get(i, sel[k]));
        let (vals, vecs) = jacobi_eigen_symmetric(&xs.gram()).unwrap();
        let rhs = xs.matvec_t(&inst.response);
        let proj: Vec<f64> = (0..5).map(|k| dot(&vecs.column(k), &rhs) / vals[k]).collect();
        let coef = vecs.matvec(&proj);
        let fitted = xs.matvec(&coef);
        let resid: f64 = inst.response.iter().zip(&fitted).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / 30.0;
        assert!((resid - boost.residuals()[5]).abs() < 1e-8);
        let beta = boost.coefficients(5).unwrap();
        for (k, j) in sel.iter().enumerate() {
            assert!((beta[*j] - coef[k]).abs() < 1e-8);
        }
    }

    proptest! {
        #[test]
        fn path_invariants(seed in 0u64..300, n in 10usize..40, p in 5usize..30) {
            let beta = gamma_sparse_signal(p, 1.5).unwrap();
            let inst = linear_model(n, &beta, 0.7, seed).unwrap();
            let mut boost = L2Boost::from_instance(&inst, Some(beta)).unwrap();
            let steps = n.min(p);
            boost.iterate(steps);
            let nf = n as f64;
            let y2 = norm2(&inst.response) / nf;
            let mut seen = std::collections::HashSet::new();
            prop_assert!(boost.selected().iter().all(|j| seen.insert(*j)));
            let bias = boost.bias2().unwrap().to_vec();
            let stoch = boost.stochastic_error().unwrap().to_vec();
            let eps = &inst.noise;
            for m in 0..=boost.iteration() {
                let r = boost.residuals()[m];
                let fitted = boost.fitted_values(m).unwrap();
                prop_assert!((norm2(&fitted) / nf + r - y2).abs() < 1e-8 * y2.max(1.0));
                let twice = boost.project(m, &fitted).unwrap();
                prop_assert!((norm2(&crate::linalg::sub(&twice, &fitted)) / nf).sqrt() < 1e-10 * y2.sqrt().max(1.0));
                // residual decomposition
                let f = &inst.true_function_values;
                let pf = boost.project(m, f).unwrap();
                let rem: Vec<f64> = f.iter().zip(&pf).map(|(a, b)| a - b).collect();
                let cross = dot(&rem, eps) / nf;
                let rhs = bias[m] + 2.0 * cross + norm2(eps) / nf - stoch[m];
                prop_assert!((r - rhs).abs() < 1e-8 * y2.max(1.0));
                if m > 0 {
                    prop_assert!(r < boost.residuals()[m - 1]);
                    prop_assert!(bias[m] <= bias[m - 1] + 1e-12);
                    prop_assert!(stoch[m] >= stoch[m - 1] - 1e-12);
                }
            }
        }
    }
}
