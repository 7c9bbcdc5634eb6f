//! Conjugate gradients for the normal equation `AᵀA f = AᵀY` (CGLS recurrence), with an
//! emergency stop and optional linear interpolation between consecutive iterates.

use std::sync::Arc;

use crate::datagen::InverseProblemInstance;
use crate::error::{Error, Result};
use crate::estimator::{
    argmin_risk, scan_discrepancy_interpolated, segment_minimizer, IterateLog, IterativeEstimator, PathStorage,
    StopIndex,
};
use crate::linalg::{axpy, dot, norm2, sub, DesignMatrix};
use crate::truncated_svd::validate_problem;

pub const DEFAULT_COMPUTATION_THRESHOLD: f64 = 1e-8;

#[derive(Debug, Clone)]
struct ErrorTracks {
    signal: Vec<f64>,
    signal_image: Vec<f64>,
    /// `f̂^(m) − f*` and `A f̂^(m) − A f*` at the current iteration.
    strong_vec: Vec<f64>,
    weak_vec: Vec<f64>,
    strong: Vec<f64>,
    weak: Vec<f64>,
    /// `⟨e_m, e_{m+1}⟩` in both norms.
    strong_cross: Vec<f64>,
    weak_cross: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ConjugateGradients {
    design: Arc<DesignMatrix>,
    response: Vec<f64>,
    computation_threshold: f64,
    log: IterateLog,
    residual: Vec<f64>,
    direction: Vec<f64>,
    gram_residual_norm2: f64,
    /// `⟨r_m, r_{m+1}⟩`
    residual_cross: Vec<f64>,
    terminated: bool,
    errors: Option<ErrorTracks>,
}

impl ConjugateGradients {
    pub fn new(
        design: Arc<DesignMatrix>,
        response: Vec<f64>,
        true_signal: Option<Vec<f64>>,
        computation_threshold: f64,
    ) -> Result<Self> {
        validate_problem(&design, &response, true_signal.as_deref(), None)?;
        if !(computation_threshold > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "computation threshold must be positive, got {computation_threshold}"
            )));
        }
        let gram = design.apply_transpose(&response);
        let gamma = norm2(&gram);
        let errors = true_signal.map(|f| {
            let af = design.apply(&f);
            let strong_vec: Vec<f64> = f.iter().map(|v| -v).collect();
            let weak_vec: Vec<f64> = af.iter().map(|v| -v).collect();
            ErrorTracks {
                strong: vec![norm2(&f)],
                weak: vec![norm2(&af)],
                signal: f,
                signal_image: af,
                strong_vec,
                weak_vec,
                strong_cross: Vec::new(),
                weak_cross: Vec::new(),
            }
        });
        Ok(Self {
            log: IterateLog::new(PathStorage::Full, vec![0.0; design.p()], norm2(&response)),
            residual: response.clone(),
            direction: gram,
            gram_residual_norm2: gamma,
            residual_cross: Vec::new(),
            terminated: gamma < computation_threshold,
            design,
            response,
            computation_threshold,
            errors,
        })
    }

    pub fn from_instance(instance: &InverseProblemInstance) -> Result<Self> {
        Self::new(
            Arc::clone(&instance.design),
            instance.response.clone(),
            Some(instance.true_signal.clone()),
            DEFAULT_COMPUTATION_THRESHOLD,
        )
    }

    pub fn with_storage(mut self, storage: PathStorage) -> Result<Self> {
        if self.log.iteration() > 0 {
            return Err(Error::InvalidParameter("storage mode must be set before iterating".into()));
        }
        self.log = IterateLog::new(storage, self.log.latest().to_vec(), self.log.residual_norm2()[0]);
        Ok(self)
    }

    /// Largest meaningful iteration `min(n, p)`.
    pub fn max_meaningful_iteration(&self) -> usize {
        self.design.n().min(self.design.p())
    }

    /// True once the emergency stop fired.
    pub fn terminated(&self) -> bool {
        self.terminated
    }

    /// `‖Aᵀ r^(m)‖²` at the current iteration.
    pub fn gram_residual_norm2(&self) -> f64 {
        self.gram_residual_norm2
    }

    pub fn residual_vector(&self) -> &[f64] {
        &self.residual
    }

    pub fn log(&self) -> &IterateLog {
        &self.log
    }

    /// Like [`IterativeEstimator::iterate`] but reports a prior emergency stop as an error.
    pub fn try_iterate(&mut self, number_of_iterations: usize) -> Result<usize> {
        if self.terminated {
            return Err(Error::Terminated(self.iteration()));
        }
        Ok(self.iterate(number_of_iterations))
    }

    /// `f̂^(t)` for `t = m + alpha`, interpolating linearly between iterates.
    pub fn get_estimate(&mut self, t: f64) -> Result<Vec<f64>> {
        if !(t >= 0.0) {
            return Err(Error::InvalidParameter(format!("iteration must be >= 0, got {t}")));
        }
        let m = t.floor() as usize;
        let alpha = t - t.floor();
        let upto = if alpha > 0.0 { m + 1 } else { m };
        if !self.ensure(upto) {
            return Err(Error::Terminated(self.iteration()));
        }
        let missing = || Error::InvalidParameter(format!("iterate {m} was not retained"));
        let lower = self.log.estimate(m).ok_or_else(missing)?;
        if alpha == 0.0 {
            return Ok(lower.to_vec());
        }
        let upper = self.log.estimate(m + 1).ok_or_else(missing)?;
        Ok(lower.iter().zip(upper).map(|(a, b)| (1.0 - alpha) * a + alpha * b).collect())
    }

    /// First (possibly fractional) time with squared residual at most `critical_value`.
    pub fn get_discrepancy_stop(&mut self, critical_value: f64, max_iteration: usize, interpolation: bool) -> StopIndex {
        if !interpolation {
            return self.discrepancy_stop(critical_value, max_iteration);
        }
        let this = std::cell::RefCell::new(self);
        scan_discrepancy_interpolated(
            critical_value,
            max_iteration,
            |m| this.borrow_mut().residual_at(m),
            |m| {
                let mut cg = this.borrow_mut();
                if !cg.ensure(m + 1) {
                    return None;
                }
                let r = cg.residuals();
                Some((r[m], r[m + 1], cg.residual_cross[m]))
            },
        )
    }

    /// Squared residual `‖Y − A f̂^(t)‖²` at a possibly fractional time.
    pub fn residual_at_time(&mut self, t: f64) -> Option<f64> {
        let m = t.floor() as usize;
        let alpha = t - t.floor();
        if alpha == 0.0 {
            return self.residual_at(m);
        }
        if !self.ensure(m + 1) {
            return None;
        }
        let r = self.residuals();
        Some(crate::estimator::segment_value(r[m], r[m + 1], self.residual_cross[m], alpha))
    }

    /// `‖f̂^(m) − f*‖²` and `‖A(f̂^(m) − f*)‖²` for `m ≤ max_iteration`.
    pub fn get_empirical_risks(&mut self, max_iteration: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        if self.errors.is_none() {
            return Err(Error::OracleUnavailable("true signal"));
        }
        self.ensure(max_iteration);
        let e = self.errors.as_ref().expect("checked above");
        let end = max_iteration.min(self.iteration());
        Ok((e.strong[..=end].to_vec(), e.weak[..=end].to_vec()))
    }

    fn empirical_oracle(&mut self, max_iteration: usize, interpolation: bool, weak: bool) -> Result<StopIndex> {
        if self.errors.is_none() {
            return Err(Error::OracleUnavailable("true signal"));
        }
        self.ensure(max_iteration);
        let end = max_iteration.min(self.iteration());
        let e = self.errors.as_ref().expect("checked above");
        let (path, cross) = if weak { (&e.weak, &e.weak_cross) } else { (&e.strong, &e.strong_cross) };
        if !interpolation {
            return Ok(StopIndex::reached_at(argmin_risk(path, end)));
        }
        let mut best = (0.0, path[0]);
        for m in 0..end {
            let (alpha, value) = segment_minimizer(path[m], path[m + 1], cross[m]);
            if value < best.1 {
                best = (m as f64 + alpha, value);
            }
        }
        Ok(StopIndex::fractional(best.0))
    }

    pub fn get_strong_empirical_oracle(&mut self, max_iteration: usize, interpolation: bool) -> Result<StopIndex> {
        self.empirical_oracle(max_iteration, interpolation, false)
    }

    pub fn get_weak_empirical_oracle(&mut self, max_iteration: usize, interpolation: bool) -> Result<StopIndex> {
        self.empirical_oracle(max_iteration, interpolation, true)
    }

    /// Strong and weak squared error at a (possibly fractional) time `t ≤ iteration()`.
    pub fn empirical_error_at(&self, t: f64) -> Result<(f64, f64)> {
        let e = self.errors.as_ref().ok_or(Error::OracleUnavailable("true signal"))?;
        let m = t.floor() as usize;
        let alpha = t - t.floor();
        if m > self.iteration() || (alpha > 0.0 && m + 1 > self.iteration()) {
            return Err(Error::InvalidParameter(format!("time {t} beyond computed path")));
        }
        if alpha == 0.0 {
            return Ok((e.strong[m], e.weak[m]));
        }
        let at = |path: &[f64], cross: &[f64]| {
            crate::estimator::segment_value(path[m], path[m + 1], cross[m], alpha).max(0.0)
        };
        Ok((at(&e.strong, &e.strong_cross), at(&e.weak, &e.weak_cross)))
    }
}

impl IterativeEstimator for ConjugateGradients {
    fn iteration(&self) -> usize {
        self.log.iteration()
    }

    fn residuals(&self) -> &[f64] {
        self.log.residual_norm2()
    }

    fn advance(&mut self) -> bool {
        if self.terminated || self.iteration() >= self.max_meaningful_iteration() {
            return false;
        }
        let w = self.design.apply(&self.direction);
        let w2 = norm2(&w);
        if !(w2 > 0.0) {
            self.terminated = true;
            return false;
        }
        let alpha = self.gram_residual_norm2 / w2;
        let mut estimate = self.log.latest().to_vec();
        axpy(alpha, &self.direction, &mut estimate);
        let previous = std::mem::take(&mut self.residual);
        let mut residual = previous.clone();
        axpy(-alpha, &w, &mut residual);
        self.residual_cross.push(dot(&previous, &residual));

        let gram = self.design.apply_transpose(&residual);
        let gamma = norm2(&gram);
        let beta = gamma / self.gram_residual_norm2;
        for (q, s) in self.direction.iter_mut().zip(&gram) {
            *q = s + beta * *q;
        }
        self.gram_residual_norm2 = gamma;

        if let Some(e) = self.errors.as_mut() {
            let strong_vec = sub(&estimate, &e.signal);
            let fitted = sub(&self.response, &residual);
            let weak_vec = sub(&fitted, &e.signal_image);
            e.strong_cross.push(dot(&e.strong_vec, &strong_vec));
            e.weak_cross.push(dot(&e.weak_vec, &weak_vec));
            e.strong.push(norm2(&strong_vec));
            e.weak.push(norm2(&weak_vec));
            e.strong_vec = strong_vec;
            e.weak_vec = weak_vec;
        }
        let r2 = norm2(&residual);
        self.residual = residual;
        self.log.push(estimate, r2);
        if gamma < self.computation_threshold {
            self.terminated = true;
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{distance, DenseMatrix};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn well_conditioned(n: usize, seed: u64) -> DenseMatrix {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let scale = 1.0 / (n as f64).sqrt();
        DenseMatrix::from_fn(n, n, |i, j| rng.random_range(-1.0..1.0) * scale + if i == j { 2.0 } else { 0.0 })
    }

    /// Plain CG applied to the explicitly formed system `AᵀA x = AᵀY`.
    fn normal_equation_cg(a: &DenseMatrix, y: &[f64], steps: usize) -> Vec<Vec<f64>> {
        let g = a.gram();
        let rhs = a.matvec_t(y);
        let mut x = vec![0.0; a.cols()];
        let mut rho = rhs.clone();
        let mut p = rho.clone();
        let mut out = vec![x.clone()];
        for _ in 0..steps {
            let gp = g.matvec(&p);
            let rr = norm2(&rho);
            let step = rr / dot(&p, &gp);
            for i in 0..x.len() {
                x[i] += step * p[i];
                rho[i] -= step * gp[i];
            }
            let beta = norm2(&rho) / rr;
            for i in 0..p.len() {
                p[i] = rho[i] + beta * p[i];
            }
            out.push(x.clone());
        }
        out
    }

    #[test]
    fn first_step_algebra() {
        let a = well_conditioned(4, 1);
        let y = vec![1.0, 0.5, -0.3, 2.0];
        let mut cg = ConjugateGradients::new(Arc::new(DesignMatrix::Dense(a.clone())), y.clone(), None, 1e-8).unwrap();
        let aty = a.matvec_t(&y);
        let alpha0 = norm2(&aty) / norm2(&a.matvec(&aty));
        let expected: Vec<f64> = aty.iter().map(|v| alpha0 * v).collect();
        assert!(distance(&cg.get_estimate(1.0).unwrap(), &expected) < 1e-12);
    }

    #[test]
    fn finite_termination_noiseless() {
        for n in [5, 20, 60] {
            let a = well_conditioned(n, n as u64);
            let f: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).cos()).collect();
            let y = a.matvec(&f);
            let y2 = norm2(&y);
            let mut cg = ConjugateGradients::new(Arc::new(DesignMatrix::Dense(a)), y, Some(f), 1e-28).unwrap();
            cg.iterate(n);
            let best = cg.residuals().iter().copied().fold(f64::INFINITY, f64::min);
            assert!(best < 1e-12 * y2, "n = {n}: {best}");
        }
    }

    #[test]
    fn matches_normal_equation_cg() {
        let a = well_conditioned(4, 3);
        let y = vec![0.3, -1.0, 2.2, 0.1];
        let reference = normal_equation_cg(&a, &y, 4);
        let mut cg = ConjugateGradients::new(Arc::new(DesignMatrix::Dense(a)), y, None, 1e-30).unwrap();
        for (m, x) in reference.iter().enumerate() {
            assert!(distance(&cg.get_estimate(m as f64).unwrap(), x) < 1e-8);
        }
    }

    #[test]
    fn emergency_stop() {
        let a = Arc::new(DesignMatrix::Dense(DenseMatrix::identity(3)));
        let mut cg = ConjugateGradients::new(a, vec![1.0, 1.0, 1.0], None, 1e-8).unwrap();
        assert_eq!(cg.iterate(5), 1);
        assert!(cg.terminated());
        assert_eq!(cg.try_iterate(1), Err(Error::Terminated(1)));
        let mut zero = ConjugateGradients::new(
            Arc::new(DesignMatrix::Dense(DenseMatrix::identity(2))),
            vec![0.0, 0.0],
            None,
            1e-8,
        )
        .unwrap();
        assert!(zero.terminated());
        assert_eq!(zero.get_discrepancy_stop(-1.0, 5, false), StopIndex::exhausted(0));
    }

    #[test]
    fn discrepancy_cases() {
        let a = well_conditioned(6, 2);
        let y: Vec<f64> = (0..6).map(|i| i as f64 - 2.0).collect();
        let y2 = norm2(&y);
        let mut cg = ConjugateGradients::new(Arc::new(DesignMatrix::Dense(a)), y, None, 1e-8).unwrap();
        assert_eq!(cg.get_discrepancy_stop(y2, 6, false), StopIndex::reached_at(0));
        assert_eq!(cg.get_discrepancy_stop(y2, 6, true), StopIndex::reached_at(0));
        let kappa = 0.5 * y2;
        let plain = cg.get_discrepancy_stop(kappa, 6, false);
        let interp = cg.get_discrepancy_stop(kappa, 6, true);
        assert!(interp.value <= plain.value && interp.value > plain.value - 1.0);
        let m = interp.floor();
        let (a_, b_, c_) = (cg.residuals()[m], cg.residuals()[m + 1], cg.residual_cross[m]);
        let at = crate::estimator::segment_value(a_, b_, c_, interp.alpha());
        assert!((at - kappa).abs() < 1e-10 * y2);
    }

    #[test]
    fn empirical_oracles() {
        let a = well_conditioned(8, 5);
        let f: Vec<f64> = (0..8).map(|i| 1.0 / (i as f64 + 1.0)).collect();
        let y = a.matvec(&f);
        let f_norm2 = norm2(&f);
        let mut cg = ConjugateGradients::new(Arc::new(DesignMatrix::Dense(a)), y, Some(f), 1e-30).unwrap();
        let (strong, _) = cg.get_empirical_risks(8).unwrap();
        assert_eq!(strong[0], f_norm2);
        let plain = cg.get_strong_empirical_oracle(8, false).unwrap();
        let interp = cg.get_strong_empirical_oracle(8, true).unwrap();
        let (e_plain, _) = cg.empirical_error_at(plain.value).unwrap();
        let (e_interp, _) = cg.empirical_error_at(interp.value).unwrap();
        assert!(e_interp <= e_plain);
        assert!(e_plain < 1e-12);
        let mut blind = ConjugateGradients::new(
            Arc::new(DesignMatrix::Dense(DenseMatrix::identity(2))),
            vec![1.0, 2.0],
            None,
            1e-8,
        )
        .unwrap();
        assert!(blind.get_weak_empirical_oracle(2, false).is_err());
    }

    proptest! {
        #[test]
        fn residuals_decrease_and_gram_residuals_orthogonal(seed in 0u64..500, n in 3usize..12) {
            let a = well_conditioned(n, seed);
            let y: Vec<f64> = (0..n).map(|i| ((i as u64 + seed) as f64 * 1.3).sin()).collect();
            let design = Arc::new(DesignMatrix::Dense(a.clone()));
            let mut cg = ConjugateGradients::new(design, y, None, 1e-12).unwrap();
            let mut grams = vec![a.matvec_t(cg.residual_vector())];
            while cg.advance() {
                grams.push(a.matvec_t(cg.residual_vector()));
            }
            let r = cg.residuals();
            for m in 1..r.len() {
                prop_assert!(r[m] < r[m - 1]);
            }
            // pairs at the rounding floor carry no orthogonality information
            let floor = 1e-6 * norm2(&grams[0]).sqrt();
            let informative: Vec<&Vec<f64>> = grams.iter().filter(|g| norm2(g).sqrt() > floor).collect();
            let grams = informative;
            for i in 0..grams.len() {
                for j in 0..i {
                    let scale = (norm2(grams[i]) * norm2(grams[j])).sqrt();
                    prop_assert!(dot(grams[i], grams[j]).abs() <= 1e-6 * scale);
                }
            }
        }
    }
}
