//! Truncated SVD: `f̂^(m) = Σ_{j≤m} (v_jᵀY / λ_j)·u_j`, with singular triplets computed
//! only as far as the iteration path needs them.

use std::sync::{Arc, Mutex};

use crate::datagen::InverseProblemInstance;
use crate::error::{Error, Result};
use crate::estimator::{argmin_risk, balanced_crossing, IterativeEstimator, OracleTrack, StopIndex};
use crate::linalg::{self, axpy, dot, norm2, DesignMatrix, SvdTriplet, DEFAULT_SVD_TOL};

/// Lazily grown list of singular triplets of one dense design, shareable between
/// estimator instances on the same matrix (e.g. Monte-Carlo replications).
#[derive(Debug)]
pub struct SpectrumCache {
    design: Arc<DesignMatrix>,
    tol: f64,
    state: Mutex<CacheState>,
}

#[derive(Debug)]
struct CacheState {
    deflated: DesignMatrix,
    triplets: Vec<Arc<SvdTriplet>>,
    exhausted: bool,
}

impl SpectrumCache {
    pub fn new(design: Arc<DesignMatrix>, tol: f64) -> Arc<Self> {
        let deflated = (*design).clone();
        Arc::new(Self {
            design,
            tol,
            state: Mutex::new(CacheState {
                deflated,
                triplets: Vec::new(),
                exhausted: false,
            }),
        })
    }

    pub fn design(&self) -> &Arc<DesignMatrix> {
        &self.design
    }

    /// Number of triplets computed so far.
    pub fn computed(&self) -> usize {
        self.state.lock().expect("spectrum cache poisoned").triplets.len()
    }

    /// Triplet `j` (0-based), computing the missing ones. `None` once the numerical
    /// rank is exhausted.
    pub fn triplet(&self, j: usize) -> Result<Option<Arc<SvdTriplet>>> {
        let mut state = self.state.lock().expect("spectrum cache poisoned");
        let max_k = self.design.n().min(self.design.p());
        while state.triplets.len() <= j {
            if state.exhausted || state.triplets.len() >= max_k {
                return Ok(None);
            }
            let iters = self.design.default_power_iters();
            let next = match linalg::top_singular_triplet(&state.deflated, self.tol, iters) {
                Ok(t) => t,
                Err(Error::ZeroMatrix) => {
                    state.exhausted = true;
                    return Ok(None);
                }
                Err(e) => return Err(e),
            };
            if let Some(first) = state.triplets.first() {
                if next.sigma <= linalg::rank_threshold(first.sigma, self.design.n(), self.design.p()) {
                    state.exhausted = true;
                    return Ok(None);
                }
            }
            if !next.converged {
                log::debug!("singular triplet {} hit the power-iteration cap", state.triplets.len());
            }
            state.deflated = linalg::deflate(&state.deflated, &next)?;
            state.triplets.push(Arc::new(next));
        }
        Ok(Some(Arc::clone(&state.triplets[j])))
    }
}

#[derive(Debug, Clone)]
enum Spectrum {
    Diagonal {
        lambda: Vec<f64>,
        order: Vec<usize>,
        /// `suffix_y[m] = Σ_{j>m} Y_(j)²` in sorted order.
        suffix_y: Vec<f64>,
        suffix_strong: Option<Vec<f64>>,
        suffix_weak: Option<Vec<f64>>,
    },
    Dense {
        cache: Arc<SpectrumCache>,
        triplets: Vec<Arc<SvdTriplet>>,
        residual: Vec<f64>,
        /// `f* − Σ_{j≤m} θ_j u_j` and `A f* − Σ_{j≤m} λ_j θ_j v_j`.
        strong_remainder: Option<Vec<f64>>,
        weak_remainder: Option<Vec<f64>>,
    },
}

#[derive(Debug, Clone)]
pub struct TruncatedSvd {
    design: Arc<DesignMatrix>,
    response: Vec<f64>,
    true_signal: Option<Vec<f64>>,
    noise_level: Option<f64>,
    spectrum: Spectrum,
    sigmas: Vec<f64>,
    /// `v_jᵀY`
    coefficients: Vec<f64>,
    /// `⟨f*, u_j⟩`
    signal_coefficients: Vec<f64>,
    residual_norm2: Vec<f64>,
    oracle: Option<OracleTrack>,
    strong_error: Vec<f64>,
    weak_error: Vec<f64>,
    strong_bias2: Vec<f64>,
    weak_bias2: Vec<f64>,
    failure: Option<Error>,
}

fn suffix_sums(values: impl DoubleEndedIterator<Item = f64> + ExactSizeIterator) -> Vec<f64> {
    let n = values.len();
    let mut out = vec![0.0; n + 1];
    for (k, v) in values.rev().enumerate() {
        let m = n - 1 - k;
        out[m] = out[m + 1] + v;
    }
    out
}

impl TruncatedSvd {
    pub fn new(
        design: Arc<DesignMatrix>,
        response: Vec<f64>,
        true_signal: Option<Vec<f64>>,
        noise_level: Option<f64>,
    ) -> Result<Self> {
        let cache = match &*design {
            DesignMatrix::Dense(_) => Some(SpectrumCache::new(Arc::clone(&design), DEFAULT_SVD_TOL)),
            DesignMatrix::Diagonal(_) => None,
        };
        Self::build(design, response, true_signal, noise_level, cache)
    }

    /// Like [`TruncatedSvd::new`] but reusing singular triplets from `cache`.
    pub fn with_cache(
        cache: Arc<SpectrumCache>,
        response: Vec<f64>,
        true_signal: Option<Vec<f64>>,
        noise_level: Option<f64>,
    ) -> Result<Self> {
        let design = Arc::clone(cache.design());
        Self::build(design, response, true_signal, noise_level, Some(cache))
    }

    pub fn from_instance(instance: &InverseProblemInstance) -> Result<Self> {
        Self::new(
            Arc::clone(&instance.design),
            instance.response.clone(),
            Some(instance.true_signal.clone()),
            Some(instance.noise_level),
        )
    }

    fn build(
        design: Arc<DesignMatrix>,
        response: Vec<f64>,
        true_signal: Option<Vec<f64>>,
        noise_level: Option<f64>,
        cache: Option<Arc<SpectrumCache>>,
    ) -> Result<Self> {
        validate_problem(&design, &response, true_signal.as_deref(), noise_level)?;
        let y_norm2 = norm2(&response);
        let spectrum = match (&*design, cache) {
            (DesignMatrix::Diagonal(lambda), _) => {
                let order = linalg::diagonal_order(lambda);
                let suffix_y = suffix_sums(order.iter().map(|j| response[*j] * response[*j]));
                let suffix_strong = true_signal
                    .as_ref()
                    .map(|f| suffix_sums(order.iter().map(|j| f[*j] * f[*j])));
                let suffix_weak = true_signal
                    .as_ref()
                    .map(|f| suffix_sums(order.iter().map(|j| (lambda[*j] * f[*j]).powi(2))));
                Spectrum::Diagonal {
                    lambda: lambda.clone(),
                    order,
                    suffix_y,
                    suffix_strong,
                    suffix_weak,
                }
            }
            (DesignMatrix::Dense(_), Some(cache)) => {
                if !Arc::ptr_eq(cache.design(), &design) && **cache.design() != *design {
                    return Err(Error::DimensionMismatch("spectrum cache built for another design".into()));
                }
                Spectrum::Dense {
                    cache,
                    triplets: Vec::new(),
                    residual: response.clone(),
                    strong_remainder: true_signal.clone(),
                    weak_remainder: true_signal.as_ref().map(|f| design.apply(f)),
                }
            }
            (DesignMatrix::Dense(_), None) => unreachable!("dense designs always carry a cache"),
        };

        let mut tsvd = Self {
            design,
            response,
            true_signal,
            noise_level,
            spectrum,
            sigmas: Vec::new(),
            coefficients: Vec::new(),
            signal_coefficients: Vec::new(),
            residual_norm2: Vec::new(),
            oracle: None,
            strong_error: Vec::new(),
            weak_error: Vec::new(),
            strong_bias2: Vec::new(),
            weak_bias2: Vec::new(),
            failure: None,
        };
        let residual0 = match &tsvd.spectrum {
            Spectrum::Diagonal { suffix_y, .. } => suffix_y[0],
            Spectrum::Dense { .. } => y_norm2,
        };
        tsvd.residual_norm2.push(residual0);
        if let Some(f) = &tsvd.true_signal {
            let (strong, weak) = match &tsvd.spectrum {
                Spectrum::Diagonal {
                    suffix_strong: Some(s),
                    suffix_weak: Some(w),
                    ..
                } => (s[0], w[0]),
                Spectrum::Dense {
                    weak_remainder: Some(w),
                    ..
                } => (norm2(f), norm2(w)),
                _ => unreachable!("bias tracks exist whenever the signal does"),
            };
            tsvd.strong_bias2.push(strong);
            tsvd.weak_bias2.push(weak);
            tsvd.strong_error.push(strong);
            tsvd.weak_error.push(weak);
            if tsvd.noise_level.is_some() {
                let mut track = OracleTrack::default();
                track.push(weak, 0.0, strong, 0.0);
                tsvd.oracle = Some(track);
            }
        }
        Ok(tsvd)
    }

    pub fn design(&self) -> &DesignMatrix {
        &self.design
    }

    pub fn response(&self) -> &[f64] {
        &self.response
    }

    pub fn is_diagonal_mode(&self) -> bool {
        matches!(self.spectrum, Spectrum::Diagonal { .. })
    }

    /// Singular values used by iterations `1..=iteration()`.
    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    /// `v_jᵀY` for `j = 1..=iteration()`.
    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn oracle(&self) -> Option<&OracleTrack> {
        self.oracle.as_ref()
    }

    /// Error raised by the singular-value computation, if any stopped the path.
    pub fn failure(&self) -> Option<&Error> {
        self.failure.as_ref()
    }

    fn max_rank(&self) -> usize {
        self.design.n().min(self.design.p())
    }

    /// `‖f̂^(m) − f*‖²` and `‖A(f̂^(m) − f*)‖²` along the computed path.
    pub fn empirical_errors(&self) -> Result<(&[f64], &[f64])> {
        if self.true_signal.is_none() {
            return Err(Error::OracleUnavailable("true signal"));
        }
        Ok((&self.strong_error, &self.weak_error))
    }

    /// Runs iterations until `m` is reached; errors when `m` exceeds the rank.
    pub fn iterate_to(&mut self, m: usize) -> Result<()> {
        if self.ensure(m) {
            return Ok(());
        }
        if let Some(e) = &self.failure {
            return Err(e.clone());
        }
        Err(Error::RankExhausted {
            requested: m,
            available: self.iteration(),
        })
    }

    /// `f̂^(m)`, reconstructed from the stored coefficients.
    pub fn get_estimate(&mut self, m: usize) -> Result<Vec<f64>> {
        self.iterate_to(m)?;
        let mut f = vec![0.0; self.design.p()];
        match &self.spectrum {
            Spectrum::Diagonal { order, .. } => {
                for (k, j) in order.iter().take(m).enumerate() {
                    f[*j] = self.coefficients[k] / self.sigmas[k];
                }
            }
            Spectrum::Dense { triplets, .. } => {
                for (k, t) in triplets.iter().take(m).enumerate() {
                    axpy(self.coefficients[k] / self.sigmas[k], &t.right, &mut f);
                }
            }
        }
        Ok(f)
    }

    pub fn get_discrepancy_stop(&mut self, critical_value: f64, max_iteration: usize) -> StopIndex {
        self.discrepancy_stop(critical_value, max_iteration)
    }

    fn oracle_crossing(&mut self, max_iteration: usize, weak: bool) -> Result<StopIndex> {
        if self.oracle.is_none() {
            return Err(Error::OracleUnavailable("true signal and noise level"));
        }
        Ok(balanced_crossing(max_iteration, |m| {
            if !self.ensure(m) {
                return None;
            }
            let track = self.oracle.as_ref().expect("checked above");
            Some(if weak {
                (track.weak_bias2[m], track.weak_variance[m])
            } else {
                (track.strong_bias2[m], track.strong_variance[m])
            })
        }))
    }

    pub fn get_weak_balanced_oracle(&mut self, max_iteration: usize) -> Result<StopIndex> {
        self.oracle_crossing(max_iteration, true)
    }

    pub fn get_strong_balanced_oracle(&mut self, max_iteration: usize) -> Result<StopIndex> {
        self.oracle_crossing(max_iteration, false)
    }

    fn classical(&mut self, max_iteration: usize, weak: bool) -> Result<usize> {
        if self.oracle.is_none() {
            return Err(Error::OracleUnavailable("true signal and noise level"));
        }
        self.ensure(max_iteration);
        let track = self.oracle.as_ref().expect("checked above");
        let risk = if weak { track.weak_risk() } else { track.strong_risk() };
        Ok(argmin_risk(&risk, max_iteration))
    }

    /// Minimizer of the weak risk over `0..=max_iteration`.
    pub fn get_weak_classical_oracle(&mut self, max_iteration: usize) -> Result<usize> {
        self.classical(max_iteration, true)
    }

    /// Minimizer of the strong risk over `0..=max_iteration`.
    pub fn get_strong_classical_oracle(&mut self, max_iteration: usize) -> Result<usize> {
        self.classical(max_iteration, false)
    }

    /// Two-step procedure: minimizes
    /// `−Σ_{i≤m} λ_i^(−2)⟨Y, v_i⟩² + 2δ²Σ_{i≤m} λ_i^(−2)` over `0 ≤ m ≤ stop`.
    pub fn get_aic_two_step(&mut self, stop: StopIndex, delta: Option<f64>) -> Result<usize> {
        let delta = delta
            .or(self.noise_level)
            .ok_or(Error::OracleUnavailable("noise level"))?;
        let upto = stop.floor();
        self.iterate_to(upto)?;
        Ok(aic_two_step_argmin(&self.sigmas[..upto], &self.coefficients[..upto], delta))
    }
}

/// Argmin over `m = 0..=len` of the two-step criterion for given `λ_i` and `⟨Y, v_i⟩`.
pub fn aic_two_step_argmin(sigmas: &[f64], coefficients: &[f64], delta: f64) -> usize {
    let mut value = 0.0;
    let mut best = (0, 0.0);
    for (k, (s, c)) in sigmas.iter().zip(coefficients).enumerate() {
        let inv = 1.0 / (s * s);
        value += -inv * c * c + 2.0 * delta * delta * inv;
        if value < best.1 {
            best = (k + 1, value);
        }
    }
    best.0
}

pub(crate) fn validate_problem(
    design: &DesignMatrix,
    response: &[f64],
    true_signal: Option<&[f64]>,
    noise_level: Option<f64>,
) -> Result<()> {
    if response.len() != design.n() {
        return Err(Error::DimensionMismatch(format!(
            "response of length {} for {} rows",
            response.len(),
            design.n()
        )));
    }
    if response.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("response has non-finite entries".into()));
    }
    if let Some(f) = true_signal {
        if f.len() != design.p() {
            return Err(Error::DimensionMismatch(format!(
                "true signal of length {} for {} columns",
                f.len(),
                design.p()
            )));
        }
    }
    if let Some(d) = noise_level {
        if !(d >= 0.0 && d.is_finite()) {
            return Err(Error::InvalidParameter(format!("noise level must be >= 0, got {d}")));
        }
    }
    Ok(())
}

impl IterativeEstimator for TruncatedSvd {
    fn iteration(&self) -> usize {
        self.residual_norm2.len() - 1
    }

    fn residuals(&self) -> &[f64] {
        &self.residual_norm2
    }

    fn advance(&mut self) -> bool {
        let m = self.iteration();
        if m >= self.max_rank() || self.failure.is_some() {
            return false;
        }
        let signal = self.true_signal.as_deref();
        let (sigma, coef, theta, residual, strong_bias2, weak_bias2) = match &mut self.spectrum {
            Spectrum::Diagonal {
                lambda,
                order,
                suffix_y,
                suffix_strong,
                suffix_weak,
            } => {
                let j = order[m];
                let theta = signal.map_or(0.0, |f| f[j]);
                (
                    lambda[j],
                    self.response[j],
                    theta,
                    suffix_y[m + 1],
                    suffix_strong.as_ref().map_or(0.0, |s| s[m + 1]),
                    suffix_weak.as_ref().map_or(0.0, |s| s[m + 1]),
                )
            }
            Spectrum::Dense {
                cache,
                triplets,
                residual,
                strong_remainder,
                weak_remainder,
            } => {
                let t = match cache.triplet(m) {
                    Ok(Some(t)) => t,
                    Ok(None) => return false,
                    Err(e) => {
                        self.failure = Some(e);
                        return false;
                    }
                };
                let coef = dot(&t.left, &self.response);
                axpy(-coef, &t.left, residual);
                let theta = signal.map_or(0.0, |f| dot(f, &t.right));
                let mut strong = 0.0;
                let mut weak = 0.0;
                if let (Some(s), Some(w)) = (strong_remainder.as_mut(), weak_remainder.as_mut()) {
                    axpy(-theta, &t.right, s);
                    axpy(-t.sigma * theta, &t.left, w);
                    strong = norm2(s);
                    weak = norm2(w);
                }
                let sigma = t.sigma;
                let residual_now = norm2(residual);
                triplets.push(t);
                (sigma, coef, theta, residual_now, strong, weak)
            }
        };

        self.sigmas.push(sigma);
        self.coefficients.push(coef);
        self.residual_norm2.push(residual);
        if self.true_signal.is_some() {
            self.signal_coefficients.push(theta);
            self.strong_bias2.push(strong_bias2);
            self.weak_bias2.push(weak_bias2);
            let strong_dev = coef / sigma - theta;
            let weak_dev = coef - sigma * theta;
            let prev_strong = self.strong_error[m] - self.strong_bias2[m];
            let prev_weak = self.weak_error[m] - self.weak_bias2[m];
            self.strong_error.push(prev_strong + strong_dev * strong_dev + strong_bias2);
            self.weak_error.push(prev_weak + weak_dev * weak_dev + weak_bias2);
        }
        if let (Some(track), Some(delta)) = (self.oracle.as_mut(), self.noise_level) {
            let d2 = delta * delta;
            let strong_var = track.strong_variance[m] + d2 / (sigma * sigma);
            let weak_var = d2 * (m + 1) as f64;
            track.push(weak_bias2, weak_var, strong_bias2, strong_var);
        }
        true
    }
}
