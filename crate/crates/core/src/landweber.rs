//! Landweber iteration `f̂^(m+1) = f̂^(m) + ω Aᵀ(Y − A f̂^(m))` with recursive bias and
//! matrix-power (or per-mode) variance tracking.

use std::sync::Arc;

use crate::datagen::InverseProblemInstance;
use crate::error::{Error, Result};
use crate::estimator::{argmin_risk, balanced_crossing, IterateLog, IterativeEstimator, OracleTrack, PathStorage, StopIndex};
use crate::linalg::{axpy, norm2, sub, DenseMatrix, DesignMatrix};
use crate::truncated_svd::validate_problem;

/// Relative slack when comparing the learning rate with `1/‖A‖²`.
const BOUNDARY_RTOL: f64 = 1e-8;

#[derive(Debug, Clone)]
enum VarianceState {
    /// Per-mode powers `(1 − ωλ_j²)^m`.
    Spectral { lambda: Vec<f64>, power: Vec<f64> },
    /// `B^m` and `S_m = Σ_{i<m} B^i` with `B = I − ωAᵀA`.
    Dense {
        step: DenseMatrix,
        power: DenseMatrix,
        partial_sum: DenseMatrix,
        a: DenseMatrix,
    },
}

#[derive(Debug, Clone)]
pub struct Landweber {
    design: Arc<DesignMatrix>,
    response: Vec<f64>,
    true_signal: Option<Vec<f64>>,
    noise_level: Option<f64>,
    learning_rate: f64,
    log: IterateLog,
    residual: Vec<f64>,
    /// `f* − E f̂^(m)` and its image under `A`.
    bias_direction: Option<(Vec<f64>, Vec<f64>)>,
    signal_image: Option<Vec<f64>>,
    variance: Option<VarianceState>,
    oracle: Option<OracleTrack>,
    strong_error: Vec<f64>,
    weak_error: Vec<f64>,
}

impl Landweber {
    /// `learning_rate = None` selects `1/‖A‖²`.
    pub fn new(
        design: Arc<DesignMatrix>,
        response: Vec<f64>,
        true_signal: Option<Vec<f64>>,
        noise_level: Option<f64>,
        learning_rate: Option<f64>,
    ) -> Result<Self> {
        validate_problem(&design, &response, true_signal.as_deref(), noise_level)?;
        let norm = design.spectral_norm()?;
        let bound = 1.0 / (norm * norm);
        let omega = learning_rate.unwrap_or(bound);
        if !(omega > 0.0 && omega.is_finite()) {
            return Err(Error::InvalidParameter(format!("learning rate must be positive, got {omega}")));
        }
        if omega > bound * (1.0 + BOUNDARY_RTOL) {
            return Err(Error::InvalidParameter(format!(
                "learning rate {omega} exceeds 1/‖A‖² = {bound}"
            )));
        }
        if learning_rate.is_some() && omega >= bound * (1.0 - BOUNDARY_RTOL) {
            log::warn!("learning rate {omega} sits at the stability boundary 1/‖A‖²");
        }

        let p = design.p();
        let y2 = norm2(&response);
        let signal_image = true_signal.as_ref().map(|f| design.apply(f));
        let bias_direction = true_signal
            .as_ref()
            .zip(signal_image.as_ref())
            .map(|(f, af)| (f.clone(), af.clone()));
        let mut strong_error = Vec::new();
        let mut weak_error = Vec::new();
        let mut oracle = None;
        let mut variance = None;
        if let (Some(f), Some(af)) = (&true_signal, &signal_image) {
            strong_error.push(norm2(f));
            weak_error.push(norm2(af));
            if noise_level.is_some() {
                let mut track = OracleTrack::default();
                track.push(norm2(af), 0.0, norm2(f), 0.0);
                oracle = Some(track);
                variance = Some(match &*design {
                    DesignMatrix::Diagonal(lambda) => VarianceState::Spectral {
                        lambda: lambda.clone(),
                        power: vec![1.0; lambda.len()],
                    },
                    DesignMatrix::Dense(a) => {
                        let mut step = a.gram();
                        for v in 0..p {
                            for w in 0..p {
                                let g = step.get(v, w);
                                step.set(v, w, if v == w { 1.0 } else { 0.0 } - omega * g);
                            }
                        }
                        VarianceState::Dense {
                            step,
                            power: DenseMatrix::identity(p),
                            partial_sum: DenseMatrix::zeros(p, p),
                            a: a.clone(),
                        }
                    }
                });
            }
        }

        Ok(Self {
            log: IterateLog::new(PathStorage::Full, vec![0.0; p], y2),
            residual: response.clone(),
            design,
            response,
            true_signal,
            noise_level,
            learning_rate: omega,
            bias_direction,
            signal_image,
            variance,
            oracle,
            strong_error,
            weak_error,
        })
    }

    pub fn from_instance(instance: &InverseProblemInstance, learning_rate: Option<f64>) -> Result<Self> {
        Self::new(
            Arc::clone(&instance.design),
            instance.response.clone(),
            Some(instance.true_signal.clone()),
            Some(instance.noise_level),
            learning_rate,
        )
    }

    /// Chooses which estimates are retained. Only allowed before the first iteration.
    pub fn with_storage(mut self, storage: PathStorage) -> Result<Self> {
        if self.log.iteration() > 0 {
            return Err(Error::InvalidParameter("storage mode must be set before iterating".into()));
        }
        self.log = IterateLog::new(storage, self.log.latest().to_vec(), self.log.residual_norm2()[0]);
        Ok(self)
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn log(&self) -> &IterateLog {
        &self.log
    }

    pub fn oracle(&self) -> Option<&OracleTrack> {
        self.oracle.as_ref()
    }

    /// `E f̂^(m)` at the current iteration.
    pub fn mean_estimate(&self) -> Option<Vec<f64>> {
        let (d, _) = self.bias_direction.as_ref()?;
        Some(sub(self.true_signal.as_ref()?, d))
    }

    pub fn empirical_errors(&self) -> Result<(&[f64], &[f64])> {
        if self.true_signal.is_none() {
            return Err(Error::OracleUnavailable("true signal"));
        }
        Ok((&self.strong_error, &self.weak_error))
    }

    /// `f̂^(m)`, computing up to `m` if needed.
    pub fn get_estimate(&mut self, m: usize) -> Result<Vec<f64>> {
        self.ensure(m);
        self.log
            .estimate(m)
            .map(<[f64]>::to_vec)
            .ok_or_else(|| Error::InvalidParameter(format!("iterate {m} was not retained")))
    }

    pub fn get_discrepancy_stop(&mut self, critical_value: f64, max_iteration: usize) -> StopIndex {
        self.discrepancy_stop(critical_value, max_iteration)
    }

    fn oracle_crossing(&mut self, max_iteration: usize, weak: bool) -> Result<StopIndex> {
        if self.oracle.is_none() {
            return Err(Error::OracleUnavailable("true signal and noise level"));
        }
        Ok(balanced_crossing(max_iteration, |m| {
            self.ensure(m);
            let t = self.oracle.as_ref().expect("checked above");
            Some(if weak {
                (t.weak_bias2[m], t.weak_variance[m])
            } else {
                (t.strong_bias2[m], t.strong_variance[m])
            })
        }))
    }

    pub fn get_weak_balanced_oracle(&mut self, max_iteration: usize) -> Result<StopIndex> {
        self.oracle_crossing(max_iteration, true)
    }

    pub fn get_strong_balanced_oracle(&mut self, max_iteration: usize) -> Result<StopIndex> {
        self.oracle_crossing(max_iteration, false)
    }

    pub fn get_weak_classical_oracle(&mut self, max_iteration: usize) -> Result<usize> {
        let t = self.track_to(max_iteration)?;
        Ok(argmin_risk(&t.weak_risk(), max_iteration))
    }

    pub fn get_strong_classical_oracle(&mut self, max_iteration: usize) -> Result<usize> {
        let t = self.track_to(max_iteration)?;
        Ok(argmin_risk(&t.strong_risk(), max_iteration))
    }

    fn track_to(&mut self, m: usize) -> Result<&OracleTrack> {
        if self.oracle.is_none() {
            return Err(Error::OracleUnavailable("true signal and noise level"));
        }
        self.ensure(m);
        Ok(self.oracle.as_ref().expect("checked above"))
    }

    fn next_variance(&mut self) -> Option<(f64, f64)> {
        let d2 = self.noise_level?.powi(2);
        let omega = self.learning_rate;
        match self.variance.as_mut()? {
            VarianceState::Spectral { lambda, power } => {
                let mut strong = 0.0;
                let mut weak = 0.0;
                for (l, b) in lambda.iter().zip(power.iter_mut()) {
                    *b *= 1.0 - omega * l * l;
                    let gap = (1.0 - *b).powi(2);
                    weak += gap;
                    strong += gap / (l * l);
                }
                Some((d2 * weak, d2 * strong))
            }
            VarianceState::Dense {
                step,
                power,
                partial_sum,
                a,
            } => {
                for (s, b) in partial_sum.as_mut_slice().iter_mut().zip(power.as_slice()) {
                    *s += b;
                }
                *power = power.matmul(step).expect("square factors");
                // Var f̂^(m) = δ²ω² S_m AᵀA S_m
                let s_at = partial_sum.matmul(&a.transpose()).expect("conformable");
                let a_s_at = a.matmul(&s_at).expect("conformable");
                let scale = d2 * omega * omega;
                Some((scale * norm2(a_s_at.as_slice()), scale * norm2(s_at.as_slice())))
            }
        }
    }
}

impl IterativeEstimator for Landweber {
    fn iteration(&self) -> usize {
        self.log.iteration()
    }

    fn residuals(&self) -> &[f64] {
        self.log.residual_norm2()
    }

    fn advance(&mut self) -> bool {
        let m = self.iteration();
        let omega = self.learning_rate;
        let gradient = self.design.apply_transpose(&self.residual);
        let mut estimate = self.log.latest().to_vec();
        axpy(omega, &gradient, &mut estimate);
        let fitted = self.design.apply(&estimate);
        self.residual = sub(&self.response, &fitted);
        let residual2 = norm2(&self.residual);

        if let (Some(f), Some(af)) = (&self.true_signal, &self.signal_image) {
            self.strong_error.push(norm2(&sub(&estimate, f)));
            self.weak_error.push(norm2(&sub(&fitted, af)));
        }
        let bias = self.bias_direction.as_mut().map(|(d, ad)| {
            let step = self.design.apply_transpose(ad);
            axpy(-omega, &step, d);
            *ad = self.design.apply(d);
            (norm2(ad), norm2(d))
        });
        if let Some((weak_bias2, strong_bias2)) = bias {
            if let Some((weak_var, strong_var)) = self.next_variance() {
                if let Some(track) = self.oracle.as_mut() {
                    track.push(weak_bias2, weak_var, strong_bias2, strong_var);
                }
            }
        }
        self.log.push(estimate, residual2);
        debug_assert_eq!(self.iteration(), m + 1);
        true
    }
}
