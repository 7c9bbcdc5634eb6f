//! Breadth-first CART regression trees. Iteration `m` is the tree level: every
//! splittable terminal node is split simultaneously when moving from `m` to `m + 1`.

use rayon::prelude::*;

use crate::datagen::RegressionInstance;
use crate::error::{Error, Result};
use crate::estimator::{
    balanced_crossing, scan_discrepancy_interpolated, segment_minimizer, segment_value, IterativeEstimator, StopIndex,
};
use crate::linalg::{dot, norm2, DenseMatrix};

/// Relative slack for treating two split losses as tied.
const SPLIT_TIE_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub member_indices: Vec<usize>,
    pub node_mean: f64,
    /// Coordinate and threshold; left child holds `x_j < c`.
    pub split: Option<(usize, f64)>,
    pub children: Option<(usize, usize)>,
    /// Level at which the node first appears.
    pub depth: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub coordinate: usize,
    pub threshold: f64,
    /// Summed squared residuals of both children around their means.
    pub loss: f64,
}

#[derive(Debug, Clone)]
pub struct RegressionTree {
    x: DenseMatrix,
    y: Vec<f64>,
    min_samples_split: usize,
    true_values: Option<Vec<f64>>,
    noise: Option<Vec<f64>>,
    nodes: Vec<TreeNode>,
    /// Terminal node ids of every level.
    levels: Vec<Vec<usize>>,
    fitted: Vec<Vec<f64>>,
    residual_norm2: Vec<f64>,
    /// `⟨Y − Π_m Y, Y − Π_{m+1} Y⟩_n`
    residual_cross: Vec<f64>,
    bias2: Vec<f64>,
    variance: Vec<f64>,
    saturated: bool,
}

fn mean_over(values: &[f64], members: &[usize]) -> f64 {
    members.iter().map(|i| values[*i]).sum::<f64>() / members.len() as f64
}

impl RegressionTree {
    /// `true_values` are `f*(X_i)`; together with `noise` they enable the oracle tracks.
    pub fn new(
        covariates: DenseMatrix,
        response: Vec<f64>,
        min_samples_split: usize,
        true_values: Option<Vec<f64>>,
        noise: Option<Vec<f64>>,
    ) -> Result<Self> {
        let n = covariates.rows();
        if n == 0 || covariates.cols() == 0 {
            return Err(Error::InvalidSize("design must be non-empty".into()));
        }
        if response.len() != n {
            return Err(Error::DimensionMismatch(format!("response of length {} for {n} rows", response.len())));
        }
        if !covariates.is_finite() || response.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite data".into()));
        }
        if min_samples_split == 0 {
            return Err(Error::InvalidParameter("min_samples_split must be at least 1".into()));
        }
        for v in [&true_values, &noise].into_iter().flatten() {
            if v.len() != n {
                return Err(Error::DimensionMismatch(format!("oracle vector of length {} for {n} rows", v.len())));
            }
        }
        let members: Vec<usize> = (0..n).collect();
        let root = TreeNode {
            node_mean: mean_over(&response, &members),
            member_indices: members,
            split: None,
            children: None,
            depth: 0,
        };
        let mut tree = Self {
            x: covariates,
            y: response,
            min_samples_split,
            true_values,
            noise,
            nodes: vec![root],
            levels: vec![vec![0]],
            fitted: Vec::new(),
            residual_norm2: Vec::new(),
            residual_cross: Vec::new(),
            bias2: Vec::new(),
            variance: Vec::new(),
            saturated: false,
        };
        tree.record_level();
        Ok(tree)
    }

    pub fn from_instance(instance: &RegressionInstance, min_samples_split: usize) -> Result<Self> {
        Self::new(
            instance.covariates.clone(),
            instance.response.clone(),
            min_samples_split,
            Some(instance.true_function_values.clone()),
            Some(instance.noise.clone()),
        )
    }

    fn n(&self) -> usize {
        self.y.len()
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    /// Terminal nodes at level `m`.
    pub fn terminal_nodes(&self, m: usize) -> Option<&[usize]> {
        self.levels.get(m).map(Vec::as_slice)
    }

    /// `Π_m Y`
    pub fn fitted_values(&mut self, m: usize) -> Option<&[f64]> {
        self.ensure(m).then(|| self.fitted[m].as_slice())
    }

    /// True once no terminal node can be split further.
    pub fn saturated(&self) -> bool {
        self.saturated
    }

    pub fn bias2(&self) -> Result<&[f64]> {
        self.true_values
            .as_ref()
            .map(|_| self.bias2.as_slice())
            .ok_or(Error::OracleUnavailable("true function values"))
    }

    /// `‖Π_m ε‖_n²`
    pub fn variance(&self) -> Result<&[f64]> {
        self.noise
            .as_ref()
            .map(|_| self.variance.as_slice())
            .ok_or(Error::OracleUnavailable("noise vector"))
    }

    /// Projection of `v` onto the level-`m` partition (node-wise means).
    pub fn project(&self, m: usize, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n()];
        for id in &self.levels[m] {
            let members = &self.nodes[*id].member_indices;
            let mean = mean_over(v, members);
            for i in members {
                out[*i] = mean;
            }
        }
        out
    }

    fn record_level(&mut self) {
        let m = self.levels.len() - 1;
        let nf = self.n() as f64;
        let mut fitted = vec![0.0; self.n()];
        for id in &self.levels[m] {
            let node = &self.nodes[*id];
            for i in &node.member_indices {
                fitted[*i] = node.node_mean;
            }
        }
        let residual: Vec<f64> = self.y.iter().zip(&fitted).map(|(y, f)| y - f).collect();
        self.residual_norm2.push(norm2(&residual) / nf);
        if m > 0 {
            let previous: Vec<f64> = self.y.iter().zip(&self.fitted[m - 1]).map(|(y, f)| y - f).collect();
            self.residual_cross.push(dot(&previous, &residual) / nf);
        }
        if let Some(f) = &self.true_values {
            let pf = self.project(m, f);
            self.bias2.push(f.iter().zip(&pf).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / nf);
        }
        if let Some(e) = &self.noise {
            self.variance.push(norm2(&self.project(m, e)) / nf);
        }
        self.fitted.push(fitted);
    }

    /// Loss-minimizing split of a member set, ties to the smallest coordinate and then
    /// the smallest threshold.
    pub fn best_split(&self, members: &[usize]) -> Option<Split> {
        best_split(&self.x, &self.y, members)
    }

    /// Grows the tree until level `max_depth` or saturation.
    pub fn grow(&mut self, max_depth: usize) -> usize {
        self.ensure(max_depth);
        self.iteration()
    }

    /// Squared empirical residual along the projection flow at time `t = m + alpha`.
    pub fn residual_at_time(&mut self, t: f64) -> Option<f64> {
        let m = t.floor() as usize;
        let alpha = t - t.floor();
        if alpha == 0.0 {
            return self.residual_at(m);
        }
        if !self.ensure(m + 1) {
            return None;
        }
        let r = &self.residual_norm2;
        Some(segment_value(r[m], r[m + 1], self.residual_cross[m], alpha))
    }

    /// Discrepancy stop over levels, or over the projection flow when `interpolated`.
    pub fn get_discrepancy_stop(&mut self, critical_value: f64, max_depth: usize, interpolated: bool) -> StopIndex {
        if !interpolated {
            return self.discrepancy_stop(critical_value, max_depth);
        }
        let this = std::cell::RefCell::new(self);
        scan_discrepancy_interpolated(
            critical_value,
            max_depth,
            |m| this.borrow_mut().residual_at(m),
            |m| {
                let mut tree = this.borrow_mut();
                if !tree.ensure(m + 1) {
                    return None;
                }
                Some((tree.residual_norm2[m], tree.residual_norm2[m + 1], tree.residual_cross[m]))
            },
        )
    }

    /// First level with `‖(I − Π_m) f*‖_n² ≤ ‖Π_m ε‖_n²`.
    pub fn get_balanced_oracle(&mut self, max_depth: usize) -> Result<StopIndex> {
        if self.true_values.is_none() || self.noise.is_none() {
            return Err(Error::OracleUnavailable("true function values and noise vector"));
        }
        Ok(balanced_crossing(max_depth, |m| {
            self.ensure(m).then(|| (self.bias2[m], self.variance[m]))
        }))
    }

    fn predict_level(&self, m: usize, point: &[f64]) -> f64 {
        let mut id = 0;
        loop {
            let node = &self.nodes[id];
            match (node.split, node.children) {
                (Some((j, c)), Some((left, right))) if node.depth < m => {
                    id = if point[j] < c { left } else { right };
                }
                _ => return node.node_mean,
            }
        }
    }

    /// Predictions of the tree frozen at time `t`; fractional `t` follows the flow.
    pub fn predict(&mut self, t: f64, query_points: &DenseMatrix) -> Result<Vec<f64>> {
        if !(t >= 0.0) {
            return Err(Error::InvalidParameter(format!("time must be >= 0, got {t}")));
        }
        if query_points.cols() != self.x.cols() {
            return Err(Error::DimensionMismatch(format!(
                "{} query coordinates for {} covariates",
                query_points.cols(),
                self.x.cols()
            )));
        }
        let m = t.floor() as usize;
        let alpha = t - t.floor();
        let upper = if alpha > 0.0 { m + 1 } else { m };
        // levels past saturation coincide with the saturated tree
        self.ensure(upper);
        Ok((0..query_points.rows())
            .map(|i| {
                let point = query_points.row(i);
                let lower = self.predict_level(m, point);
                if alpha == 0.0 {
                    lower
                } else {
                    (1.0 - alpha) * lower + alpha * self.predict_level(m + 1, point)
                }
            })
            .collect())
    }

    /// Smallest squared distance between the flow's predictions and `target` over
    /// `t ∈ [0, max_depth]`, with the time attaining it.
    pub fn flow_minimum(&mut self, query_points: &DenseMatrix, target: &[f64], max_depth: usize) -> Result<(f64, f64)> {
        self.ensure(max_depth);
        let end = max_depth.min(self.iteration());
        let errors: Result<Vec<Vec<f64>>> = (0..=end)
            .map(|m| {
                let pred = self.predict(m as f64, query_points)?;
                Ok(pred.iter().zip(target).map(|(p, f)| p - f).collect())
            })
            .collect();
        let errors = errors?;
        let k = target.len() as f64;
        let mut best = (0.0, norm2(&errors[0]) / k);
        for m in 0..end {
            let (a, b, c) = (
                norm2(&errors[m]) / k,
                norm2(&errors[m + 1]) / k,
                dot(&errors[m], &errors[m + 1]) / k,
            );
            let (alpha, value) = segment_minimizer(a, b, c);
            if value < best.1 {
                best = (m as f64 + alpha, value);
            }
        }
        Ok(best)
    }
}

/// Exact split search over midpoints of consecutive distinct coordinate values.
pub fn best_split(x: &DenseMatrix, y: &[f64], members: &[usize]) -> Option<Split> {
    let count = members.len();
    if count < 2 {
        return None;
    }
    let mean = mean_over(y, members);
    let total_sse: f64 = members.iter().map(|i| (y[*i] - mean).powi(2)).sum();
    let slack = SPLIT_TIE_RTOL * (1.0 + total_sse);
    let mut best: Option<Split> = None;
    let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(count);
    for j in 0..x.cols() {
        pairs.clear();
        pairs.extend(members.iter().map(|i| (x.get(*i, j), y[*i] - mean)));
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total_sum: f64 = pairs.iter().map(|p| p.1).sum();
        let total_sq: f64 = pairs.iter().map(|p| p.1 * p.1).sum();
        let mut left_sum = 0.0;
        let mut left_sq = 0.0;
        for k in 1..count {
            left_sum += pairs[k - 1].1;
            left_sq += pairs[k - 1].1 * pairs[k - 1].1;
            let (lo, hi) = (pairs[k - 1].0, pairs[k].0);
            if !(lo < hi) {
                continue;
            }
            let nl = k as f64;
            let nr = (count - k) as f64;
            let right_sum = total_sum - left_sum;
            let right_sq = total_sq - left_sq;
            let loss = ((left_sq - left_sum * left_sum / nl) + (right_sq - right_sum * right_sum / nr)).max(0.0);
            let mut threshold = 0.5 * (lo + hi);
            if threshold <= lo {
                threshold = hi;
            }
            if best.is_none_or(|b| loss < b.loss - slack) {
                best = Some(Split {
                    coordinate: j,
                    threshold,
                    loss,
                });
            }
        }
    }
    best
}

impl IterativeEstimator for RegressionTree {
    fn iteration(&self) -> usize {
        self.levels.len() - 1
    }

    fn residuals(&self) -> &[f64] {
        &self.residual_norm2
    }

    fn advance(&mut self) -> bool {
        if self.saturated {
            return false;
        }
        let m = self.iteration();
        let current = self.levels[m].clone();
        let min_split = self.min_samples_split;
        let splits: Vec<Option<Split>> = current
            .par_iter()
            .map(|id| {
                let members = &self.nodes[*id].member_indices;
                if members.len() > min_split {
                    best_split(&self.x, &self.y, members)
                } else {
                    None
                }
            })
            .collect();
        if splits.iter().all(Option::is_none) {
            self.saturated = true;
            return false;
        }
        let mut next = Vec::with_capacity(current.len() * 2);
        for (id, split) in current.iter().zip(splits) {
            let Some(split) = split else {
                next.push(*id);
                continue;
            };
            let (left, right): (Vec<usize>, Vec<usize>) = self.nodes[*id]
                .member_indices
                .iter()
                .partition(|i| self.x.get(**i, split.coordinate) < split.threshold);
            let left_id = self.nodes.len();
            for members in [left, right] {
                self.nodes.push(TreeNode {
                    node_mean: mean_over(&self.y, &members),
                    member_indices: members,
                    split: None,
                    children: None,
                    depth: m + 1,
                });
            }
            let node = &mut self.nodes[*id];
            node.split = Some((split.coordinate, split.threshold));
            node.children = Some((left_id, left_id + 1));
            next.extend([left_id, left_id + 1]);
        }
        self.levels.push(next);
        self.record_level();
        true
    }
}
