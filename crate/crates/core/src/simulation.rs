//! Monte-Carlo harness. Replication `i` draws all randomness from seed `base_seed + i`,
//! so the record list does not depend on the number of worker threads.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::conjugate_gradients::{ConjugateGradients, DEFAULT_COMPUTATION_THRESHOLD};
use crate::datagen::{additive_model, linear_model, AdditiveKind, InverseProblemInstance, RNG_ID};
use crate::error::{Error, Result};
use crate::estimator::{argmin_risk, balanced_crossing, IterativeEstimator, PathStorage, StopIndex};
use crate::l2_boost::{CriticalValue, L2Boost, DEFAULT_AIC_K, DEFAULT_RR_ALPHA, DEFAULT_RR_K};
use crate::landweber::Landweber;
use crate::linalg::{distance, DenseMatrix, DesignMatrix, DEFAULT_SVD_TOL};
use crate::regression_tree::RegressionTree;
use crate::truncated_svd::{SpectrumCache, TruncatedSvd};

/// Data-generating process of one study.
#[derive(Debug, Clone)]
pub enum Experiment {
    /// `Y = A f* + δε` with fixed design and signal.
    Inverse {
        design: Arc<DesignMatrix>,
        true_signal: Vec<f64>,
        noise_level: f64,
    },
    /// Gaussian design redrawn every replication, `Y = Xβ* + σε`.
    Linear { n: usize, coefficients: Vec<f64>, sigma: f64 },
    /// Additive model on `[-2.5, 2.5]^30` with a test sample for out-of-sample errors.
    Additive {
        kind: AdditiveKind,
        n: usize,
        sigma: f64,
        test_size: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoostRule {
    Discrepancy,
    ResidualRatio,
    DiscrepancyTwoStep,
    ResidualRatioTwoStep,
}

impl BoostRule {
    pub const ALL: [BoostRule; 4] = [
        Self::Discrepancy,
        Self::ResidualRatio,
        Self::DiscrepancyTwoStep,
        Self::ResidualRatioTwoStep,
    ];
}

impl fmt::Display for BoostRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Discrepancy => "dp",
            Self::ResidualRatio => "rr",
            Self::DiscrepancyTwoStep => "dp2step",
            Self::ResidualRatioTwoStep => "rr2step",
        })
    }
}

impl FromStr for BoostRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|r| r.to_string() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown boosting rule '{s}'")))
    }
}

/// Estimator and its options.
#[derive(Debug, Clone, PartialEq)]
pub enum EstimatorKind {
    TruncatedSvd,
    Landweber { learning_rate: Option<f64> },
    ConjugateGradients { interpolate: bool, threshold: f64 },
    L2Boost { rule: BoostRule },
    RegressionTree { interpolate: bool, min_samples_split: usize },
}

impl EstimatorKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::TruncatedSvd => "tsvd",
            Self::Landweber { .. } => "landweber",
            Self::ConjugateGradients { .. } => "cg",
            Self::L2Boost { .. } => "boost",
            Self::RegressionTree { .. } => "tree",
        }
    }

    pub fn rule(&self) -> String {
        match self {
            Self::ConjugateGradients { interpolate: true, .. } | Self::RegressionTree { interpolate: true, .. } => {
                "dp-interpolated".into()
            }
            Self::L2Boost { rule } => rule.to_string(),
            _ => "dp".into(),
        }
    }

    pub fn cg() -> Self {
        Self::ConjugateGradients {
            interpolate: false,
            threshold: DEFAULT_COMPUTATION_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimulationParameters {
    pub experiment: Experiment,
    pub monte_carlo_runs: usize,
    pub cores: usize,
    pub max_iteration: usize,
    /// Defaults: `nδ²` for inverse problems, `σ̂²` for boosting, `σ²` for trees.
    pub critical_value: Option<f64>,
    pub base_seed: u64,
    /// Track balanced and classical oracles (dense Landweber costs `O(p³)` per step).
    pub oracles: bool,
    /// Record wall time per replication; breaks bitwise reproducibility of the output.
    pub timing: bool,
}

impl SimulationParameters {
    /// Validated parameters with oracles on and timing off.
    pub fn new(experiment: Experiment, monte_carlo_runs: usize, cores: usize, max_iteration: usize, base_seed: u64) -> Result<Self> {
        let params = Self {
            experiment,
            monte_carlo_runs,
            cores,
            max_iteration,
            critical_value: None,
            base_seed,
            oracles: true,
            timing: false,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn with_critical_value(mut self, kappa: f64) -> Result<Self> {
        self.critical_value = Some(kappa);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.monte_carlo_runs == 0 {
            return Err(Error::InvalidParameter("monte_carlo_runs must be at least 1".into()));
        }
        if self.cores == 0 {
            return Err(Error::InvalidParameter("cores must be at least 1".into()));
        }
        if let Some(k) = self.critical_value {
            if !(k >= 0.0 && k.is_finite()) {
                return Err(Error::InvalidParameter(format!("critical value must be >= 0, got {k}")));
            }
        }
        let level = |name: &str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} must be >= 0, got {v}")))
            }
        };
        match &self.experiment {
            Experiment::Inverse {
                design,
                true_signal,
                noise_level,
            } => {
                if true_signal.len() != design.p() {
                    return Err(Error::DimensionMismatch(format!(
                        "signal of length {} for a design with {} columns",
                        true_signal.len(),
                        design.p()
                    )));
                }
                if true_signal.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidParameter("non-finite signal".into()));
                }
                level("noise level", *noise_level)
            }
            Experiment::Linear { n, coefficients, sigma } => {
                if *n == 0 || coefficients.is_empty() {
                    return Err(Error::InvalidSize("n and p must be positive".into()));
                }
                level("sigma", *sigma)
            }
            Experiment::Additive { n, sigma, test_size, .. } => {
                if *n == 0 || *test_size == 0 {
                    return Err(Error::InvalidSize("n and test size must be positive".into()));
                }
                level("sigma", *sigma)
            }
        }
    }

    fn check_kind(&self, kind: &EstimatorKind) -> Result<()> {
        let ok = matches!(
            (&self.experiment, kind),
            (
                Experiment::Inverse { .. },
                EstimatorKind::TruncatedSvd | EstimatorKind::Landweber { .. } | EstimatorKind::ConjugateGradients { .. }
            ) | (Experiment::Linear { .. }, EstimatorKind::L2Boost { .. })
                | (Experiment::Additive { .. }, EstimatorKind::RegressionTree { .. })
        );
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("estimator '{}' does not fit this experiment", kind.name())))
        }
    }

    /// `# key=value` lines written above the CSV header.
    pub fn metadata(&self, kind: &EstimatorKind) -> Vec<(String, String)> {
        let mut out = vec![
            ("seed".to_string(), self.base_seed.to_string()),
            ("seed-schedule".into(), "base_seed + replication_id".into()),
            ("rng-id".into(), RNG_ID.into()),
            ("version".into(), env!("CARGO_PKG_VERSION").into()),
            ("estimator".into(), kind.name().into()),
            ("rule".into(), kind.rule()),
            ("monte-carlo-runs".into(), self.monte_carlo_runs.to_string()),
            ("max-iteration".into(), self.max_iteration.to_string()),
            (
                "critical-value".into(),
                self.critical_value.map_or("default".into(), |k| k.to_string()),
            ),
        ];
        match &self.experiment {
            Experiment::Inverse { design, noise_level, .. } => {
                out.push(("n".into(), design.n().to_string()));
                out.push(("p".into(), design.p().to_string()));
                out.push(("delta".into(), noise_level.to_string()));
            }
            Experiment::Linear { n, coefficients, sigma } => {
                out.push(("n".into(), n.to_string()));
                out.push(("p".into(), coefficients.len().to_string()));
                out.push(("sigma".into(), sigma.to_string()));
            }
            Experiment::Additive {
                kind: additive,
                n,
                sigma,
                test_size,
            } => {
                out.push(("function".into(), additive.to_string()));
                out.push(("n".into(), n.to_string()));
                out.push(("sigma".into(), sigma.to_string()));
                out.push(("test-size".into(), test_size.to_string()));
            }
        }
        match kind {
            EstimatorKind::Landweber { learning_rate } => out.push((
                "learning-rate".into(),
                learning_rate.map_or("default".into(), |w| w.to_string()),
            )),
            EstimatorKind::ConjugateGradients { threshold, .. } => out.push(("threshold".into(), threshold.to_string())),
            EstimatorKind::RegressionTree { min_samples_split, .. } => {
                out.push(("min-samples-split".into(), min_samples_split.to_string()))
            }
            _ => {}
        }
        out
    }
}

/// Outcome of one replication. Errors are squared norms; efficiencies are ratios of norms.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationRecord {
    pub replication_id: usize,
    pub seed: u64,
    pub estimator: String,
    pub stop_rule: String,
    pub stop_value: f64,
    pub reached: bool,
    pub residual_at_stop: Option<f64>,
    pub weak_balanced_oracle: Option<f64>,
    pub strong_balanced_oracle: Option<f64>,
    pub weak_classical_oracle: Option<f64>,
    pub strong_classical_oracle: Option<f64>,
    pub weak_error_at_stop: Option<f64>,
    pub strong_error_at_stop: Option<f64>,
    pub weak_min_error: Option<f64>,
    pub strong_min_error: Option<f64>,
    /// Minimum of the weak risk curve (bias² plus variance).
    pub weak_min_risk: Option<f64>,
    pub strong_min_risk: Option<f64>,
    pub relative_efficiency_weak: Option<f64>,
    pub relative_efficiency_strong: Option<f64>,
    pub wall_time_ms: Option<f64>,
    pub error: Option<String>,
}

impl SimulationRecord {
    fn empty(replication_id: usize, seed: u64, kind: &EstimatorKind) -> Self {
        Self {
            replication_id,
            seed,
            estimator: kind.name().into(),
            stop_rule: kind.rule(),
            stop_value: f64::NAN,
            reached: false,
            residual_at_stop: None,
            weak_balanced_oracle: None,
            strong_balanced_oracle: None,
            weak_classical_oracle: None,
            strong_classical_oracle: None,
            weak_error_at_stop: None,
            strong_error_at_stop: None,
            weak_min_error: None,
            strong_min_error: None,
            weak_min_risk: None,
            strong_min_risk: None,
            relative_efficiency_weak: None,
            relative_efficiency_strong: None,
            wall_time_ms: None,
            error: None,
        }
    }

    fn set_errors(&mut self, weak: Option<(f64, f64)>, strong: Option<(f64, f64)>) {
        if let Some((at_stop, min)) = weak {
            self.weak_error_at_stop = Some(at_stop);
            self.weak_min_error = Some(min);
            self.relative_efficiency_weak = Some(relative_efficiency(min, at_stop));
        }
        if let Some((at_stop, min)) = strong {
            self.strong_error_at_stop = Some(at_stop);
            self.strong_min_error = Some(min);
            self.relative_efficiency_strong = Some(relative_efficiency(min, at_stop));
        }
    }
}

/// `sqrt(min / at_stop)` for squared errors, clipped to `(0, 1]`; 1 when both vanish.
pub fn relative_efficiency(min_error2: f64, error2_at_stop: f64) -> f64 {
    if error2_at_stop <= 0.0 {
        return 1.0;
    }
    (min_error2.max(0.0) / error2_at_stop).sqrt().min(1.0)
}

fn path_min(path: &[f64]) -> f64 {
    path.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Runs all replications on a pool of `params.cores` threads, ordered by replication id.
pub fn run(params: &SimulationParameters, kind: &EstimatorKind) -> Result<Vec<SimulationRecord>> {
    params.validate()?;
    params.check_kind(kind)?;
    let cache = match &params.experiment {
        Experiment::Inverse { design, .. } if matches!(kind, EstimatorKind::TruncatedSvd) && !design.is_diagonal() => {
            Some(SpectrumCache::new(design.clone(), DEFAULT_SVD_TOL))
        }
        _ => None,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(params.cores)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    Ok(pool.install(|| {
        (0..params.monte_carlo_runs)
            .into_par_iter()
            .map(|id| replicate(params, kind, cache.as_ref(), id))
            .collect()
    }))
}

fn replicate(params: &SimulationParameters, kind: &EstimatorKind, cache: Option<&Arc<SpectrumCache>>, id: usize) -> SimulationRecord {
    let seed = params.base_seed.wrapping_add(id as u64);
    let mut record = SimulationRecord::empty(id, seed, kind);
    let start = Instant::now();
    let outcome = match &params.experiment {
        Experiment::Inverse {
            design,
            true_signal,
            noise_level,
        } => InverseProblemInstance::generate(design.clone(), true_signal.clone(), *noise_level, seed)
            .and_then(|inst| inverse_replication(params, kind, cache, &inst, &mut record)),
        Experiment::Linear { n, coefficients, sigma } => linear_model(*n, coefficients, *sigma, seed)
            .and_then(|inst| boost_replication(params, kind, coefficients, &inst, &mut record)),
        Experiment::Additive {
            kind: additive,
            n,
            sigma,
            test_size,
        } => tree_replication(params, kind, *additive, *n, *sigma, *test_size, seed, &mut record),
    };
    if let Err(e) = outcome {
        record.error = Some(e.to_string());
    }
    if params.timing {
        record.wall_time_ms = Some(start.elapsed().as_secs_f64() * 1e3);
    }
    record
}

fn inverse_replication(
    params: &SimulationParameters,
    kind: &EstimatorKind,
    cache: Option<&Arc<SpectrumCache>>,
    inst: &InverseProblemInstance,
    record: &mut SimulationRecord,
) -> Result<()> {
    let n = inst.design.n();
    let kappa = params
        .critical_value
        .unwrap_or(n as f64 * inst.noise_level * inst.noise_level);
    let max = params.max_iteration;
    let delta = params.oracles.then_some(inst.noise_level);
    match kind {
        EstimatorKind::TruncatedSvd => {
            let mut est = match cache {
                Some(c) => TruncatedSvd::with_cache(c.clone(), inst.response.clone(), Some(inst.true_signal.clone()), delta)?,
                None => TruncatedSvd::new(inst.design.clone(), inst.response.clone(), Some(inst.true_signal.clone()), delta)?,
            };
            let stop = est.get_discrepancy_stop(kappa, max);
            record_stop(record, stop);
            record.residual_at_stop = est.residual_at(stop.floor());
            if params.oracles {
                record.weak_balanced_oracle = Some(est.get_weak_balanced_oracle(max)?.value);
                record.strong_balanced_oracle = Some(est.get_strong_balanced_oracle(max)?.value);
                record.weak_classical_oracle = Some(est.get_weak_classical_oracle(max)? as f64);
                record.strong_classical_oracle = Some(est.get_strong_classical_oracle(max)? as f64);
                let track = est.oracle().expect("oracle inputs supplied");
                record.weak_min_risk = Some(path_min(&track.weak_risk()));
                record.strong_min_risk = Some(path_min(&track.strong_risk()));
            } else {
                est.iterate(max);
            }
            let (strong, weak) = est.empirical_errors()?;
            let m = stop.floor();
            record.set_errors(Some((weak[m], path_min(weak))), Some((strong[m], path_min(strong))));
        }
        EstimatorKind::Landweber { learning_rate } => {
            let mut est = Landweber::new(
                inst.design.clone(),
                inst.response.clone(),
                Some(inst.true_signal.clone()),
                delta,
                *learning_rate,
            )?
            .with_storage(PathStorage::Latest)?;
            let stop = est.get_discrepancy_stop(kappa, max);
            record_stop(record, stop);
            record.residual_at_stop = est.residual_at(stop.floor());
            if params.oracles {
                record.weak_balanced_oracle = Some(est.get_weak_balanced_oracle(max)?.value);
                record.strong_balanced_oracle = Some(est.get_strong_balanced_oracle(max)?.value);
                record.weak_classical_oracle = Some(est.get_weak_classical_oracle(max)? as f64);
                record.strong_classical_oracle = Some(est.get_strong_classical_oracle(max)? as f64);
                let track = est.oracle().expect("oracle inputs supplied");
                record.weak_min_risk = Some(path_min(&track.weak_risk()));
                record.strong_min_risk = Some(path_min(&track.strong_risk()));
            } else {
                est.iterate(max);
            }
            let (strong, weak) = est.empirical_errors()?;
            let m = stop.floor();
            record.set_errors(Some((weak[m], path_min(weak))), Some((strong[m], path_min(strong))));
        }
        EstimatorKind::ConjugateGradients { interpolate, threshold } => {
            let mut est = ConjugateGradients::new(
                inst.design.clone(),
                inst.response.clone(),
                Some(inst.true_signal.clone()),
                *threshold,
            )?
            .with_storage(PathStorage::Latest)?;
            let stop = est.get_discrepancy_stop(kappa, max, *interpolate);
            record_stop(record, stop);
            record.residual_at_stop = est.residual_at_time(stop.value);
            let weak_oracle = est.get_weak_empirical_oracle(max, *interpolate)?;
            let strong_oracle = est.get_strong_empirical_oracle(max, *interpolate)?;
            record.weak_classical_oracle = Some(weak_oracle.value);
            record.strong_classical_oracle = Some(strong_oracle.value);
            let (strong_at, weak_at) = est.empirical_error_at(stop.value)?;
            let (_, weak_min) = est.empirical_error_at(weak_oracle.value)?;
            let (strong_min, _) = est.empirical_error_at(strong_oracle.value)?;
            record.set_errors(Some((weak_at, weak_min)), Some((strong_at, strong_min)));
        }
        _ => unreachable!("checked by check_kind"),
    }
    Ok(())
}

fn record_stop(record: &mut SimulationRecord, stop: StopIndex) {
    record.stop_value = stop.value;
    record.reached = stop.reached;
}

fn boost_replication(
    params: &SimulationParameters,
    kind: &EstimatorKind,
    beta: &[f64],
    inst: &crate::datagen::RegressionInstance,
    record: &mut SimulationRecord,
) -> Result<()> {
    let EstimatorKind::L2Boost { rule } = kind else {
        unreachable!("checked by check_kind")
    };
    let max = params.max_iteration;
    let mut est = L2Boost::from_instance(inst, Some(beta.to_vec()))?;
    let kappa = match params.critical_value {
        Some(k) => k,
        None => est.get_noise_estimate().sigma_hat2,
    };
    let stop = match rule {
        BoostRule::Discrepancy | BoostRule::DiscrepancyTwoStep => est.get_discrepancy_stop(CriticalValue::Constant(kappa), max),
        BoostRule::ResidualRatio | BoostRule::ResidualRatioTwoStep => {
            est.get_residual_ratio_stop(max, DEFAULT_RR_K, DEFAULT_RR_ALPHA)?
        }
    };
    let stop = match rule {
        BoostRule::DiscrepancyTwoStep | BoostRule::ResidualRatioTwoStep => StopIndex {
            value: est.get_aic_iteration(DEFAULT_AIC_K, stop.floor()) as f64,
            reached: stop.reached,
        },
        _ => stop,
    };
    record_stop(record, stop);
    record.residual_at_stop = est.residual_at(stop.floor());
    est.ensure(max);
    let end = max.min(est.iteration());
    let (bias2, variance) = (est.bias2()?.to_vec(), est.stochastic_error()?.to_vec());
    if params.oracles {
        let balanced = balanced_crossing(end, |m| Some((bias2[m], variance[m])));
        record.weak_balanced_oracle = Some(balanced.value);
    }
    // the weak error is the risk: Π_m ε and (I − Π_m) f* are orthogonal
    let weak = est.risk()?;
    let strong: Vec<f64> = (0..=end)
        .map(|m| est.coefficients(m).map(|b| distance(&b, beta).powi(2)))
        .collect::<Result<_>>()?;
    let m = stop.floor();
    record.weak_classical_oracle = Some(argmin_risk(&weak, end) as f64);
    record.strong_classical_oracle = Some(argmin_risk(&strong, end) as f64);
    record.weak_min_risk = Some(path_min(&weak[..=end]));
    record.set_errors(
        Some((weak[m], path_min(&weak[..=end]))),
        Some((strong[m], path_min(&strong))),
    );
    Ok(())
}

/// Splits a sample of `n + test_size` draws into training data and held-out points.
#[allow(clippy::too_many_arguments)]
fn tree_replication(
    params: &SimulationParameters,
    kind: &EstimatorKind,
    additive: AdditiveKind,
    n: usize,
    sigma: f64,
    test_size: usize,
    seed: u64,
    record: &mut SimulationRecord,
) -> Result<()> {
    let EstimatorKind::RegressionTree {
        interpolate,
        min_samples_split,
    } = kind
    else {
        unreachable!("checked by check_kind")
    };
    let full = additive_model(additive, n + test_size, sigma, seed)?;
    let d = full.covariates.cols();
    let (train_x, test_x) = full.covariates.as_slice().split_at(n * d);
    let mut tree = RegressionTree::new(
        DenseMatrix::new(n, d, train_x.to_vec())?,
        full.response[..n].to_vec(),
        *min_samples_split,
        Some(full.true_function_values[..n].to_vec()),
        Some(full.noise[..n].to_vec()),
    )?;
    let test_x = DenseMatrix::new(test_size, d, test_x.to_vec())?;
    let test_f = &full.true_function_values[n..];
    let kappa = params.critical_value.unwrap_or(sigma * sigma);
    let max = params.max_iteration;
    let stop = tree.get_discrepancy_stop(kappa, max, *interpolate);
    record_stop(record, stop);
    record.residual_at_stop = tree.residual_at_time(stop.value);
    if params.oracles {
        record.weak_balanced_oracle = Some(tree.get_balanced_oracle(max)?.value);
        let end = max.min(tree.iteration());
        let risk: Vec<f64> = tree.bias2()?.iter().zip(tree.variance()?).map(|(b, v)| b + v).collect();
        record.weak_classical_oracle = Some(argmin_risk(&risk, end) as f64);
        record.weak_min_risk = Some(path_min(&risk[..=end]));
    }
    let prediction = tree.predict(stop.value, &test_x)?;
    let at_stop = distance(&prediction, test_f).powi(2) / test_size as f64;
    let (_, min) = tree.flow_minimum(&test_x, test_f, max)?;
    record.set_errors(Some((at_stop, min.min(at_stop))), None);
    Ok(())
}

/// Quartile summary of one quantity across records.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub estimator: String,
    pub stop_rule: String,
    pub quantity: String,
    pub count: usize,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub mean: f64,
}

/// Quantile with linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

fn summarize(estimator: &str, rule: &str, quantity: &str, values: Vec<f64>) -> Option<SummaryRow> {
    let mut values: Vec<f64> = values.into_iter().filter(|v| v.is_finite()).collect();
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    Some(SummaryRow {
        estimator: estimator.into(),
        stop_rule: rule.into(),
        quantity: quantity.into(),
        count: values.len(),
        q1: quantile(&values, 0.25),
        median: quantile(&values, 0.5),
        q3: quantile(&values, 0.75),
        mean: values.iter().sum::<f64>() / values.len() as f64,
    })
}

/// Per (estimator, rule) quartiles of stop values, stop/oracle ratios and efficiencies,
/// plus expectation-based efficiencies `sqrt(min risk / mean error at stop)`.
pub fn aggregate(records: &[SimulationRecord]) -> Vec<SummaryRow> {
    let mut groups: Vec<(String, String)> = records
        .iter()
        .map(|r| (r.estimator.clone(), r.stop_rule.clone()))
        .collect();
    groups.sort();
    groups.dedup();
    let mut out = Vec::new();
    for (estimator, rule) in groups {
        let group: Vec<&SimulationRecord> = records
            .iter()
            .filter(|r| r.estimator == estimator && r.stop_rule == rule && r.error.is_none())
            .collect();
        let column = |f: &dyn Fn(&SimulationRecord) -> Option<f64>| group.iter().filter_map(|r| f(r)).collect::<Vec<_>>();
        let ratio = |oracle: Option<f64>, stop: f64| oracle.filter(|o| *o > 0.0).map(|o| stop / o);
        let quantities: [(&str, Vec<f64>); 5] = [
            ("stop_value", column(&|r| Some(r.stop_value))),
            ("stop_over_weak_oracle", column(&|r| ratio(r.weak_balanced_oracle, r.stop_value))),
            ("stop_over_strong_oracle", column(&|r| ratio(r.strong_balanced_oracle, r.stop_value))),
            ("relative_efficiency_weak", column(&|r| r.relative_efficiency_weak)),
            ("relative_efficiency_strong", column(&|r| r.relative_efficiency_strong)),
        ];
        for (name, values) in quantities {
            out.extend(summarize(&estimator, &rule, name, values));
        }
        for (name, risk, error) in [
            (
                "expected_efficiency_weak",
                column(&|r| r.weak_min_risk),
                column(&|r| r.weak_error_at_stop),
            ),
            (
                "expected_efficiency_strong",
                column(&|r| r.strong_min_risk),
                column(&|r| r.strong_error_at_stop),
            ),
        ] {
            if risk.is_empty() || error.is_empty() {
                continue;
            }
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            let value = relative_efficiency(mean(&risk), mean(&error));
            out.push(SummaryRow {
                estimator: estimator.clone(),
                stop_rule: rule.clone(),
                quantity: name.into(),
                count: error.len(),
                q1: value,
                median: value,
                q3: value,
                mean: value,
            });
        }
    }
    out
}

fn csv_error(e: impl fmt::Display) -> Error {
    Error::InvalidParameter(format!("csv output: {e}"))
}

/// Writes metadata comment lines followed by CSV rows.
pub fn write_csv<W: Write, T: Serialize>(mut writer: W, metadata: &[(String, String)], rows: &[T]) -> Result<()> {
    for (k, v) in metadata {
        writeln!(writer, "# {k}={v}").map_err(csv_error)?;
    }
    let mut csv = csv::Writer::from_writer(writer);
    for row in rows {
        csv.serialize(row).map_err(csv_error)?;
    }
    csv.flush().map_err(csv_error)
}
