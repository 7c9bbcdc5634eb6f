//! Shared estimator contract: iterate-once logs, stopping indices, oracle tracks and
//! the generic sequential scans every estimator delegates to.

use serde::Serialize;

/// A stopping coordinate. Integer-valued for plain rules, `m + alpha` for interpolated ones.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StopIndex {
    pub value: f64,
    /// False when the scan ran out of iterations before the criterion fired.
    pub reached: bool,
}

impl StopIndex {
    pub fn reached_at(m: usize) -> Self {
        Self {
            value: m as f64,
            reached: true,
        }
    }

    pub fn fractional(value: f64) -> Self {
        Self { value, reached: true }
    }

    pub fn exhausted(m: usize) -> Self {
        Self {
            value: m as f64,
            reached: false,
        }
    }

    /// Integer part `m` of `t = m + alpha`.
    pub fn floor(&self) -> usize {
        self.value.floor() as usize
    }

    /// Fractional part `alpha` of `t = m + alpha`.
    pub fn alpha(&self) -> f64 {
        self.value - self.value.floor()
    }
}

/// Which estimate vectors an [`IterateLog`] retains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PathStorage {
    /// Every iterate is kept.
    #[default]
    Full,
    /// Only the most recent iterate is kept; scalar tracks are always complete.
    Latest,
}

/// Per-iteration record of estimates and squared residual norms.
#[derive(Debug, Clone)]
pub struct IterateLog {
    residual_norm2: Vec<f64>,
    estimates: Vec<Vec<f64>>,
    storage: PathStorage,
}

impl IterateLog {
    pub fn new(storage: PathStorage, estimate0: Vec<f64>, residual0: f64) -> Self {
        Self {
            residual_norm2: vec![residual0],
            estimates: vec![estimate0],
            storage,
        }
    }

    pub fn push(&mut self, estimate: Vec<f64>, residual: f64) {
        self.residual_norm2.push(residual);
        match self.storage {
            PathStorage::Full => self.estimates.push(estimate),
            PathStorage::Latest => self.estimates[0] = estimate,
        }
    }

    /// Largest computed iteration.
    pub fn iteration(&self) -> usize {
        self.residual_norm2.len() - 1
    }

    pub fn residual_norm2(&self) -> &[f64] {
        &self.residual_norm2
    }

    pub fn storage(&self) -> PathStorage {
        self.storage
    }

    /// Estimate at iteration `m`, if it is retained.
    pub fn estimate(&self, m: usize) -> Option<&[f64]> {
        match self.storage {
            PathStorage::Full => self.estimates.get(m).map(Vec::as_slice),
            PathStorage::Latest => (m == self.iteration()).then(|| self.estimates[0].as_slice()),
        }
    }

    pub fn latest(&self) -> &[f64] {
        self.estimates.last().expect("log holds at least iteration 0")
    }
}

/// Weak and strong squared-bias / variance sequences indexed by iteration.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OracleTrack {
    pub weak_bias2: Vec<f64>,
    pub weak_variance: Vec<f64>,
    pub strong_bias2: Vec<f64>,
    pub strong_variance: Vec<f64>,
}

impl OracleTrack {
    pub fn push(&mut self, weak_bias2: f64, weak_variance: f64, strong_bias2: f64, strong_variance: f64) {
        self.weak_bias2.push(weak_bias2);
        self.weak_variance.push(weak_variance);
        self.strong_bias2.push(strong_bias2);
        self.strong_variance.push(strong_variance);
    }

    pub fn len(&self) -> usize {
        self.weak_bias2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weak_bias2.is_empty()
    }

    pub fn weak_risk(&self) -> Vec<f64> {
        self.weak_bias2.iter().zip(&self.weak_variance).map(|(b, v)| b + v).collect()
    }

    pub fn strong_risk(&self) -> Vec<f64> {
        self.strong_bias2.iter().zip(&self.strong_variance).map(|(b, v)| b + v).collect()
    }
}

/// First `m ≤ max_iteration` with `residual_at(m) ≤ kappa`.
///
/// `residual_at` extends the underlying path on demand and returns `None` once the
/// path cannot be extended. It is never called again after the criterion fires.
pub fn scan_discrepancy(
    kappa: f64,
    max_iteration: usize,
    mut residual_at: impl FnMut(usize) -> Option<f64>,
) -> StopIndex {
    let mut last = 0;
    for m in 0..=max_iteration {
        match residual_at(m) {
            Some(r) if r <= kappa => return StopIndex::reached_at(m),
            Some(_) => last = m,
            None => break,
        }
    }
    StopIndex::exhausted(last)
}

/// First `m ≤ max_iteration` with `bias2 ≤ variance`, pulled through `track_at`.
pub fn balanced_crossing(
    max_iteration: usize,
    mut track_at: impl FnMut(usize) -> Option<(f64, f64)>,
) -> StopIndex {
    let mut last = 0;
    for m in 0..=max_iteration {
        match track_at(m) {
            Some((bias2, variance)) if bias2 <= variance => return StopIndex::reached_at(m),
            Some(_) => last = m,
            None => break,
        }
    }
    StopIndex::exhausted(last)
}

/// Smallest index attaining the minimum of `risk[0..=upto]`.
pub fn argmin_risk(risk: &[f64], upto: usize) -> usize {
    let end = upto.min(risk.len().saturating_sub(1));
    let mut best = 0;
    for m in 1..=end {
        if risk[m] < risk[best] {
            best = m;
        }
    }
    best
}

/// Squared norm of `(1 − alpha)·x + alpha·y` given `a = ‖x‖²`, `b = ‖y‖²`, `c = ⟨x, y⟩`.
#[inline]
pub fn segment_value(a: f64, b: f64, c: f64, alpha: f64) -> f64 {
    let beta = 1.0 - alpha;
    beta * beta * a + 2.0 * alpha * beta * c + alpha * alpha * b
}

/// Smallest `alpha ∈ (0, 1]` with `segment_value(a, b, c, alpha) = kappa`, for a
/// bracketing segment `a > kappa ≥ b`. Returns `None` when the segment does not bracket.
pub fn interpolate_crossing(a: f64, b: f64, c: f64, kappa: f64) -> Option<f64> {
    if !(a > kappa && b <= kappa) {
        return None;
    }
    // q(alpha) = a + 2(c − a) alpha + (a − 2c + b) alpha²; q(0) > kappa ≥ q(1).
    let quad = (a - 2.0 * c + b).max(0.0);
    let lin = 2.0 * (c - a);
    let gap = a - kappa;
    let disc = (lin * lin - 4.0 * quad * gap).max(0.0);
    let denom = -lin + disc.sqrt();
    let mut alpha = if denom > 0.0 { 2.0 * gap / denom } else { 1.0 };
    if !alpha.is_finite() {
        alpha = 1.0;
    }
    // One safeguarded Newton polish.
    let slope = lin + 2.0 * quad * alpha;
    if slope < 0.0 {
        let refined = alpha - (segment_value(a, b, c, alpha) - kappa) / slope;
        if refined > 0.0 && refined <= 1.0 {
            alpha = refined;
        }
    }
    Some(alpha.clamp(f64::MIN_POSITIVE, 1.0))
}

/// Minimizer over `[0, 1]` of `segment_value(a, b, c, ·)` and its value.
pub fn segment_minimizer(a: f64, b: f64, c: f64) -> (f64, f64) {
    let curvature = a - 2.0 * c + b;
    let alpha = if curvature > 0.0 {
        ((a - c) / curvature).clamp(0.0, 1.0)
    } else if b < a {
        1.0
    } else {
        0.0
    };
    (alpha, segment_value(a, b, c, alpha).max(0.0))
}

/// Interpolated discrepancy scan over a residual path with neighbour cross products.
///
/// `segment_at(m)` returns `(‖r_m‖², ‖r_{m+1}‖², ⟨r_m, r_{m+1}⟩)` or `None` when
/// iterate `m + 1` is unavailable; `residual_at(m)` returns `‖r_m‖²`.
pub fn scan_discrepancy_interpolated(
    kappa: f64,
    max_iteration: usize,
    mut residual_at: impl FnMut(usize) -> Option<f64>,
    mut segment_at: impl FnMut(usize) -> Option<(f64, f64, f64)>,
) -> StopIndex {
    match residual_at(0) {
        Some(r) if r <= kappa => return StopIndex::reached_at(0),
        Some(_) => {}
        None => return StopIndex::exhausted(0),
    }
    let mut last = 0;
    for m in 0..max_iteration {
        let Some((a, b, c)) = segment_at(m) else { break };
        if let Some(alpha) = interpolate_crossing(a, b, c, kappa) {
            return StopIndex::fractional(m as f64 + alpha);
        }
        last = m + 1;
    }
    StopIndex::exhausted(last)
}

/// Common interface of the iterative estimators.
pub trait IterativeEstimator {
    /// Largest computed iteration.
    fn iteration(&self) -> usize;

    /// Squared residual norms for iterations `0..=iteration()`.
    fn residuals(&self) -> &[f64];

    /// Computes one more iteration. Returns false if the path cannot be extended.
    fn advance(&mut self) -> bool;

    /// Runs up to `number_of_iterations` further iterations; returns how many ran.
    fn iterate(&mut self, number_of_iterations: usize) -> usize {
        let mut done = 0;
        while done < number_of_iterations && self.advance() {
            done += 1;
        }
        done
    }

    /// Extends the path to `m` if needed. False when `m` is unreachable.
    fn ensure(&mut self, m: usize) -> bool {
        while self.iteration() < m {
            if !self.advance() {
                return false;
            }
        }
        true
    }

    fn residual_at(&mut self, m: usize) -> Option<f64> {
        self.ensure(m).then(|| self.residuals()[m])
    }

    /// Discrepancy stop `min{m ≥ 0: residual(m) ≤ kappa}`.
    fn discrepancy_stop(&mut self, critical_value: f64, max_iteration: usize) -> StopIndex {
        scan_discrepancy(critical_value, max_iteration, |m| self.residual_at(m))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn from_slice(values: &[f64]) -> impl FnMut(usize) -> Option<f64> + '_ {
        move |m| values.get(m).copied()
    }

    #[test]
    fn discrepancy_examples() {
        let r = [5.0, 3.0, 1.0];
        assert_eq!(scan_discrepancy(2.0, 10, from_slice(&r)), StopIndex::reached_at(2));
        assert_eq!(scan_discrepancy(10.0, 10, from_slice(&r)), StopIndex::reached_at(0));
        assert_eq!(scan_discrepancy(0.5, 10, from_slice(&r)), StopIndex::exhausted(2));
        assert_eq!(scan_discrepancy(0.5, 1, from_slice(&r)), StopIndex::exhausted(1));
    }

    #[test]
    fn discrepancy_never_extends_after_firing() {
        let r = [5.0, 3.0, 1.0, 0.5, 0.1];
        let mut calls = Vec::new();
        let stop = scan_discrepancy(3.0, 10, |m| {
            calls.push(m);
            r.get(m).copied()
        });
        assert_eq!(stop.value, 1.0);
        assert_eq!(calls, vec![0, 1]);
    }

    #[test]
    fn balanced_examples() {
        let zero = [(0.0, 0.0), (0.0, 1.0)];
        assert_eq!(balanced_crossing(5, |m| zero.get(m).copied()).value, 0.0);
        let b = [4.0, 1.0, 0.1];
        let s = [0.0, 2.0, 3.0];
        let stop = balanced_crossing(5, |m| b.get(m).map(|x| (*x, s[m])));
        assert_eq!(stop, StopIndex::reached_at(1));
    }

    #[test]
    fn argmin_examples() {
        assert_eq!(argmin_risk(&[3.0, 1.0, 1.0, 2.0], 3), 1);
        assert_eq!(argmin_risk(&[5.0, 4.0, 3.0, 2.0], 3), 3);
        assert_eq!(argmin_risk(&[5.0, 4.0, 3.0, 2.0], 1), 1);
    }

    #[test]
    fn orthogonal_segment_crossing_is_half() {
        // ‖r_m‖² = 4, ‖r_{m+1}‖² = 0, r_{m+1} = 0 so c = 0.
        let alpha = interpolate_crossing(4.0, 0.0, 0.0, 1.0).unwrap();
        assert!((alpha - 0.5).abs() < 1e-14);
        assert!(interpolate_crossing(1.0, 0.5, 0.5, 2.0).is_none());
    }

    #[test]
    fn segment_minimizer_hand_case() {
        // e0 = (2, 0), e1 = (0, 1)
        let (alpha, value) = segment_minimizer(4.0, 1.0, 0.0);
        assert!((alpha - 0.8).abs() < 1e-14);
        assert!((value - 0.8).abs() < 1e-14);
    }

    #[test]
    fn interpolated_scan() {
        let r = [4.0, 0.0];
        let stop = scan_discrepancy_interpolated(1.0, 5, from_slice(&r), |m| {
            (m + 1 < r.len()).then(|| (r[m], r[m + 1], 0.0))
        });
        assert!((stop.value - 0.5).abs() < 1e-14 && stop.reached);
        assert_eq!(stop.floor(), 0);
    }

    #[test]
    fn log_storage_modes() {
        let mut full = IterateLog::new(PathStorage::Full, vec![0.0], 1.0);
        full.push(vec![1.0], 0.5);
        assert_eq!(full.estimate(0), Some(&[0.0][..]));
        let mut latest = IterateLog::new(PathStorage::Latest, vec![0.0], 1.0);
        latest.push(vec![1.0], 0.5);
        assert_eq!(latest.estimate(0), None);
        assert_eq!(latest.estimate(1), Some(&[1.0][..]));
        assert_eq!(latest.residual_norm2().len(), 2);
    }

    proptest! {
        #[test]
        fn discrepancy_monotone_in_kappa(
            mut r in proptest::collection::vec(0.0f64..100.0, 1..40),
            k1 in 0.0f64..100.0,
            k2 in 0.0f64..100.0,
        ) {
            r.sort_by(|a, b| b.total_cmp(a));
            let (lo, hi) = if k1 <= k2 { (k1, k2) } else { (k2, k1) };
            let s_lo = scan_discrepancy(lo, 100, from_slice(&r));
            let s_hi = scan_discrepancy(hi, 100, from_slice(&r));
            prop_assert!(s_lo.value >= s_hi.value);
            if s_hi.reached {
                prop_assert!(r[s_hi.floor()] <= hi);
            }
        }

        #[test]
        fn balanced_crossing_is_unique(
            mut b in proptest::collection::vec(0.0f64..10.0, 2..30),
            mut s in proptest::collection::vec(0.0f64..10.0, 2..30),
        ) {
            let len = b.len().min(s.len());
            b.truncate(len);
            s.truncate(len);
            b.sort_by(|x, y| y.total_cmp(x));
            s.sort_by(|x, y| x.total_cmp(y));
            let stop = balanced_crossing(len, |m| b.get(m).map(|x| (*x, s[m])));
            if stop.reached {
                let m = stop.floor();
                prop_assert!(b[m] <= s[m]);
                prop_assert!((0..m).all(|i| b[i] > s[i]));
                prop_assert!((m..len).all(|i| b[i] <= s[i]));
            } else {
                prop_assert!((0..len).all(|i| b[i] > s[i]));
            }
        }

        #[test]
        fn crossing_hits_kappa(
            x in proptest::collection::vec(-5.0f64..5.0, 3),
            y in proptest::collection::vec(-5.0f64..5.0, 3),
            frac in 0.0f64..1.0,
        ) {
            let a: f64 = x.iter().map(|v| v * v).sum();
            let b: f64 = y.iter().map(|v| v * v).sum();
            let c: f64 = x.iter().zip(&y).map(|(p, q)| p * q).sum();
            prop_assume!(a > b + 1e-6);
            let kappa = b + frac * (a - b);
            prop_assume!(kappa < a);
            let alpha = interpolate_crossing(a, b, c, kappa).unwrap();
            prop_assert!(alpha > 0.0 && alpha <= 1.0);
            prop_assert!((segment_value(a, b, c, alpha) - kappa).abs() < 1e-9 * a.max(1.0));
            // earliest crossing: no smaller alpha on a grid attains kappa
            for i in 1..100 {
                let t = alpha * i as f64 / 100.0;
                prop_assert!(segment_value(a, b, c, t) > kappa - 1e-9 * a.max(1.0));
            }
        }
    }
}
