//! Seedable test problems: diagonal inverse problems, the Phillips and gravity
//! integral equations, sparse linear models and sparse additive regression models.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, DesignMatrix};

/// Identifier of the random stream, written into CSV metadata.
pub const RNG_ID: &str = "chacha20-rand_chacha0.9-StandardNormal";

/// The generator behind every seeded draw in this crate.
pub fn rng_from_seed(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

pub fn standard_normal_vec(rng: &mut ChaCha20Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.sample(StandardNormal)).collect()
}

/// `Y = A f* + delta·eps`.
#[derive(Debug, Clone)]
pub struct InverseProblemInstance {
    pub design: Arc<DesignMatrix>,
    pub response: Vec<f64>,
    pub true_signal: Vec<f64>,
    pub noise_level: f64,
    /// The realised noise `delta·eps`.
    pub noise: Vec<f64>,
}

impl InverseProblemInstance {
    /// Draws fresh noise for a fixed design and signal.
    pub fn generate(design: Arc<DesignMatrix>, true_signal: Vec<f64>, delta: f64, seed: u64) -> Result<Self> {
        if true_signal.len() != design.p() {
            return Err(Error::DimensionMismatch(format!(
                "signal of length {} for a design with {} columns",
                true_signal.len(),
                design.p()
            )));
        }
        if !(delta >= 0.0 && delta.is_finite()) {
            return Err(Error::InvalidParameter(format!("noise level must be >= 0, got {delta}")));
        }
        let mut rng = rng_from_seed(seed);
        let noise: Vec<f64> = standard_normal_vec(&mut rng, design.n())
            .into_iter()
            .map(|e| delta * e)
            .collect();
        let response = design
            .apply(&true_signal)
            .iter()
            .zip(&noise)
            .map(|(a, e)| a + e)
            .collect();
        Ok(Self {
            design,
            response,
            true_signal,
            noise_level: delta,
            noise,
        })
    }
}

/// Nonparametric or linear regression data `Y_i = f*(X_i) + eps_i`.
#[derive(Debug, Clone)]
pub struct RegressionInstance {
    pub covariates: DenseMatrix,
    pub response: Vec<f64>,
    pub true_function_values: Vec<f64>,
    pub noise: Vec<f64>,
    pub noise_variance: f64,
}

/// Signal classes of the diagonal problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SignalKind {
    Supersmooth,
    Smooth,
    Rough,
}

impl SignalKind {
    pub const ALL: [SignalKind; 3] = [Self::Supersmooth, Self::Smooth, Self::Rough];

    /// `(a, b)` in `5000·|sin(a·j)|·j^(−b)`.
    pub fn default_parameters(self) -> (f64, f64) {
        match self {
            Self::Supersmooth => (0.001, 2.5),
            Self::Smooth => (0.01, 1.6),
            Self::Rough => (1.0, 0.8),
        }
    }
}

impl fmt::Display for SignalKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Supersmooth => "supersmooth",
            Self::Smooth => "smooth",
            Self::Rough => "rough",
        })
    }
}

impl FromStr for SignalKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "supersmooth" => Ok(Self::Supersmooth),
            "smooth" => Ok(Self::Smooth),
            "rough" => Ok(Self::Rough),
            other => Err(Error::InvalidParameter(format!("unknown signal kind {other:?}"))),
        }
    }
}

/// `f*_j = 5000·|sin(a·j)|·j^(−b)` for `j = 1..=n`.
pub fn signal_template(n: usize, a: f64, b: f64) -> Vec<f64> {
    (1..=n)
        .map(|j| {
            let j = j as f64;
            5000.0 * (a * j).sin().abs() * j.powf(-b)
        })
        .collect()
}

pub fn diagonal_signal(n: usize, kind: SignalKind) -> Vec<f64> {
    let (a, b) = kind.default_parameters();
    signal_template(n, a, b)
}

/// `Diagonal(j^(−1/2))`.
pub fn diagonal_design(n: usize) -> Result<DesignMatrix> {
    if n == 0 {
        return Err(Error::InvalidSize("n must be at least 1".into()));
    }
    DesignMatrix::diagonal((1..=n).map(|j| 1.0 / (j as f64).sqrt()).collect())
}

pub fn diagonal_problem(n: usize, kind: SignalKind, delta: f64, seed: u64) -> Result<InverseProblemInstance> {
    let design = Arc::new(diagonal_design(n)?);
    InverseProblemInstance::generate(design, diagonal_signal(n, kind), delta, seed)
}

/// Phillips test problem on `[−6, 6]`: Galerkin discretization with orthonormal box
/// functions of `k(s, t) = phi(s − t)`, `phi(x) = 1 + cos(pi·x/3)` on `|x| < 3`.
pub fn phillips(n: usize) -> Result<(DesignMatrix, Vec<f64>)> {
    if n == 0 || !n.is_multiple_of(4) {
        return Err(Error::InvalidSize(format!("phillips needs n divisible by 4, got {n}")));
    }
    let h = 12.0 / n as f64;
    let n4 = n / 4;
    let c: Vec<f64> = (0..n4 + 2)
        .map(|k| ((k as f64 - 1.0) * 4.0 * PI / n as f64).cos())
        .collect();
    let scale = 9.0 / (h * PI * PI);
    let mut r1 = vec![0.0; n];
    for k in 0..n4 {
        r1[k] = h + scale * (2.0 * c[k + 1] - c[k] - c[k + 2]);
    }
    r1[n4] = h / 2.0 + scale * ((4.0 * PI / n as f64).cos() - 1.0);
    let a = DenseMatrix::from_fn(n, n, |i, j| r1[i.abs_diff(j)]);

    let cc = PI / 3.0;
    let mut x = vec![0.0; n];
    for k in 0..n4 {
        let t0 = k as f64 * h;
        let t1 = (k + 1) as f64 * h;
        let v = (h + ((cc * t1).sin() - (cc * t0).sin()) / cc) / h.sqrt();
        x[2 * n4 + k] = v;
        x[2 * n4 - 1 - k] = v;
    }
    Ok((DesignMatrix::dense(a)?, x))
}

/// One-dimensional gravity surveying problem on `[0, 1]` midpoint grids.
pub fn gravity(n: usize, depth: f64) -> Result<(DesignMatrix, Vec<f64>)> {
    if n < 2 {
        return Err(Error::InvalidSize(format!("gravity needs n >= 2, got {n}")));
    }
    if !(depth > 0.0 && depth.is_finite()) {
        return Err(Error::InvalidParameter(format!("depth must be positive, got {depth}")));
    }
    let h = 1.0 / n as f64;
    let grid: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) * h).collect();
    let a = DenseMatrix::from_fn(n, n, |i, j| {
        let diff = grid[i] - grid[j];
        h * depth * (depth * depth + diff * diff).powf(-1.5)
    });
    let x = grid.iter().map(|t| (PI * t).sin() + 0.5 * (2.0 * PI * t).sin()).collect();
    Ok((DesignMatrix::dense(a)?, x))
}

pub const GRAVITY_DEFAULT_DEPTH: f64 = 0.25;

/// `beta_j ∝ j^(−gamma)`, rescaled to `‖beta‖₁ = 10`.
pub fn gamma_sparse_signal(p: usize, gamma: f64) -> Result<Vec<f64>> {
    if p == 0 {
        return Err(Error::InvalidSize("p must be at least 1".into()));
    }
    if !(gamma > 0.0) {
        return Err(Error::InvalidParameter(format!("gamma must be positive, got {gamma}")));
    }
    let raw: Vec<f64> = (1..=p).map(|j| (j as f64).powf(-gamma)).collect();
    Ok(rescale_l1(raw, 10.0))
}

/// First `s` coordinates equal `magnitude`, the rest zero.
pub fn s_sparse_signal(p: usize, s: usize, magnitude: f64) -> Result<Vec<f64>> {
    if s == 0 || s > p {
        return Err(Error::InvalidParameter(format!("need 1 <= s <= p, got s = {s}, p = {p}")));
    }
    Ok((0..p).map(|j| if j < s { magnitude } else { 0.0 }).collect())
}

fn rescale_l1(raw: Vec<f64>, total: f64) -> Vec<f64> {
    let l1: f64 = raw.iter().map(|v| v.abs()).sum();
    raw.into_iter().map(|v| total * v / l1).collect()
}

/// Sparse coefficient vectors for the boosting experiments, all with `‖beta‖₁ = 10`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoostSignal {
    Gamma(u32),
    SSparse(usize),
}

impl BoostSignal {
    pub fn coefficients(self, p: usize) -> Result<Vec<f64>> {
        match self {
            Self::Gamma(g) => gamma_sparse_signal(p, g as f64),
            Self::SSparse(s) => Ok(rescale_l1(s_sparse_signal(p, s, 1.0)?, 10.0)),
        }
    }
}

impl fmt::Display for BoostSignal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Gamma(g) => write!(f, "gamma{g}"),
            Self::SSparse(s) => write!(f, "s{s}"),
        }
    }
}

impl FromStr for BoostSignal {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("unknown boosting signal {s:?}"));
        if let Some(g) = s.strip_prefix("gamma") {
            let g: u32 = g.parse().map_err(|_| bad())?;
            if g == 0 {
                return Err(bad());
            }
            Ok(Self::Gamma(g))
        } else if let Some(k) = s.strip_prefix('s') {
            Ok(Self::SSparse(k.parse().map_err(|_| bad())?))
        } else {
            Err(bad())
        }
    }
}

/// `n × p` matrix of independent standard normals.
pub fn gaussian_design(n: usize, p: usize, seed: u64) -> DenseMatrix {
    let mut rng = rng_from_seed(seed);
    gaussian_design_from(&mut rng, n, p)
}

fn gaussian_design_from(rng: &mut ChaCha20Rng, n: usize, p: usize) -> DenseMatrix {
    DenseMatrix::new(n, p, standard_normal_vec(rng, n * p)).expect("shape matches")
}

/// `Y = X beta + sigma·eps` with a fresh Gaussian design; design first, then noise.
pub fn linear_model(n: usize, beta: &[f64], sigma: f64, seed: u64) -> Result<RegressionInstance> {
    if n == 0 || beta.is_empty() {
        return Err(Error::InvalidSize("n and p must be at least 1".into()));
    }
    if !(sigma >= 0.0) {
        return Err(Error::InvalidParameter(format!("sigma must be >= 0, got {sigma}")));
    }
    let mut rng = rng_from_seed(seed);
    let x = gaussian_design_from(&mut rng, n, beta.len());
    let f = x.matvec(beta);
    let noise: Vec<f64> = standard_normal_vec(&mut rng, n).into_iter().map(|e| sigma * e).collect();
    let response = f.iter().zip(&noise).map(|(a, b)| a + b).collect();
    Ok(RegressionInstance {
        covariates: x,
        response,
        true_function_values: f,
        noise,
        noise_variance: sigma * sigma,
    })
}

/// Component-function families of the sparse additive model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AdditiveKind {
    Smooth,
    Step,
    Linear,
    Hills,
}

impl AdditiveKind {
    pub const ALL: [AdditiveKind; 4] = [Self::Smooth, Self::Step, Self::Linear, Self::Hills];
}

impl fmt::Display for AdditiveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Smooth => "smooth",
            Self::Step => "step",
            Self::Linear => "linear",
            Self::Hills => "hills",
        })
    }
}

impl FromStr for AdditiveKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "smooth" => Ok(Self::Smooth),
            "step" => Ok(Self::Step),
            "linear" => Ok(Self::Linear),
            "hills" => Ok(Self::Hills),
            other => Err(Error::InvalidParameter(format!("unknown additive kind {other:?}"))),
        }
    }
}

pub const ADDITIVE_DIMENSION: usize = 30;
pub const ADDITIVE_RANGE: f64 = 2.5;
const ADDITIVE_AMPLITUDE: f64 = 2.0;

type Component = fn(f64) -> f64;

fn raw_components(kind: AdditiveKind) -> [Component; 4] {
    fn staircase(x: f64, edge: f64) -> f64 {
        if x < -edge {
            -1.0
        } else if x < edge {
            0.0
        } else {
            1.0
        }
    }
    fn bump(x: f64, centre: f64, width: f64) -> f64 {
        (-((x - centre) / width).powi(2)).exp()
    }
    match kind {
        AdditiveKind::Smooth => [
            |x| (2.0 * x).sin(),
            |x| (3.0 * x).cos() + x / 2.0,
            |x| -x * x / 3.0 + 1.0,
            |x| (2.0 * x).tanh(),
        ],
        AdditiveKind::Step => [
            |x| staircase(x, 1.0),
            |x| -staircase(x, 0.5),
            |x| staircase(x, 1.5),
            |x| -staircase(x, 2.0),
        ],
        AdditiveKind::Linear => [
            |x| 1.0 - x.abs(),
            |x| x.abs() - 1.25,
            |x| if x < -1.0 { -1.0 - x } else if x < 1.0 { x } else { 2.0 - x },
            |x| if x < 0.0 { -x / 2.0 } else { x },
        ],
        AdditiveKind::Hills => [
            |x| bump(x, -1.0, 0.5) + bump(x, 1.0, 0.5),
            |x| bump(x, -1.5, 0.7) - bump(x, 0.8, 0.4),
            |x| bump(x, 0.0, 0.3) + 0.5 * bump(x, 1.5, 0.6),
            |x| -bump(x, -0.7, 0.5) + bump(x, 1.2, 0.8),
        ],
    }
}

/// Default component functions of `kind`, each scaled to `max |g_j| = 2` on the
/// covariate range.
pub fn additive_components(kind: AdditiveKind) -> Vec<Box<dyn Fn(f64) -> f64 + Send + Sync>> {
    raw_components(kind)
        .into_iter()
        .map(|g| {
            let peak = (0..=10_000)
                .map(|i| g(-ADDITIVE_RANGE + 2.0 * ADDITIVE_RANGE * i as f64 / 10_000.0).abs())
                .fold(0.0, f64::max);
            let scale = ADDITIVE_AMPLITUDE / peak;
            Box::new(move |x: f64| scale * g(x)) as Box<dyn Fn(f64) -> f64 + Send + Sync>
        })
        .collect()
}

/// `f*(x) = Σ_j g_j(x_j)` over the supplied components.
pub fn additive_function(components: &[Box<dyn Fn(f64) -> f64 + Send + Sync>], x: &[f64]) -> f64 {
    components.iter().zip(x).map(|(g, xj)| g(*xj)).sum()
}

/// `p = 30` uniform covariates on `(−2.5, 2.5)`, response from the first four.
pub fn additive_model(kind: AdditiveKind, n: usize, sigma: f64, seed: u64) -> Result<RegressionInstance> {
    additive_model_with(&additive_components(kind), n, sigma, seed)
}

/// Additive model with user-supplied components acting on the leading coordinates.
pub fn additive_model_with(
    components: &[Box<dyn Fn(f64) -> f64 + Send + Sync>],
    n: usize,
    sigma: f64,
    seed: u64,
) -> Result<RegressionInstance> {
    if n == 0 {
        return Err(Error::InvalidSize("n must be at least 1".into()));
    }
    if components.len() > ADDITIVE_DIMENSION {
        return Err(Error::InvalidParameter(format!(
            "at most {ADDITIVE_DIMENSION} components, got {}",
            components.len()
        )));
    }
    if !(sigma >= 0.0) {
        return Err(Error::InvalidParameter(format!("sigma must be >= 0, got {sigma}")));
    }
    let mut rng = rng_from_seed(seed);
    let p = ADDITIVE_DIMENSION;
    let covariates = DenseMatrix::from_fn(n, p, |_, _| rng.random_range(-ADDITIVE_RANGE..ADDITIVE_RANGE));
    let f: Vec<f64> = (0..n).map(|i| additive_function(components, covariates.row(i))).collect();
    let noise: Vec<f64> = standard_normal_vec(&mut rng, n).into_iter().map(|e| sigma * e).collect();
    let response = f.iter().zip(&noise).map(|(a, b)| a + b).collect();
    Ok(RegressionInstance {
        covariates,
        response,
        true_function_values: f,
        noise,
        noise_variance: sigma * sigma,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::jacobi_singular_values;

    #[test]
    fn smooth_signal_first_entry() {
        let inst = diagonal_problem(10_000, SignalKind::Smooth, 0.01, 3).unwrap();
        assert!((inst.true_signal[0] - 5000.0 * 0.01f64.sin()).abs() < 1e-12);
        assert!((inst.true_signal[0] - 49.9992).abs() < 1e-4);
    }

    #[test]
    fn noiseless_response_is_exact() {
        let inst = diagonal_problem(3, SignalKind::Smooth, 0.0, 1).unwrap();
        let lambda = [1.0, 1.0 / 2f64.sqrt(), 1.0 / 3f64.sqrt()];
        for j in 0..3 {
            assert_eq!(inst.response[j], lambda[j] * inst.true_signal[j]);
        }
    }

    #[test]
    fn response_is_signal_plus_noise_bitwise() {
        let inst = diagonal_problem(50, SignalKind::Rough, 0.3, 9).unwrap();
        let clean = inst.design.apply(&inst.true_signal);
        for i in 0..50 {
            assert_eq!(inst.response[i], clean[i] + inst.noise[i]);
        }
    }

    #[test]
    fn generators_are_deterministic() {
        let a = diagonal_problem(20, SignalKind::Smooth, 0.1, 5).unwrap();
        let b = diagonal_problem(20, SignalKind::Smooth, 0.1, 5).unwrap();
        assert_eq!(a.response, b.response);
        assert_eq!(gaussian_design(2, 2, 4), gaussian_design(2, 2, 4));
        assert_ne!(gaussian_design(2, 2, 4), gaussian_design(2, 2, 5));
    }

    #[test]
    fn phillips_shape_and_support() {
        assert!(phillips(10).is_err());
        let (a, _) = phillips(8).unwrap();
        let m = a.to_dense();
        assert!(m.max_abs_diff(&m.transpose()) < 1e-12);
        let (_, x) = phillips(100).unwrap();
        let h = 0.12;
        for (i, xi) in x.iter().enumerate() {
            let t = -6.0 + (i as f64 + 0.5) * h;
            if t.abs() >= 3.0 {
                assert_eq!(*xi, 0.0);
            } else {
                assert!(*xi > 0.0);
            }
        }
    }

    #[test]
    fn gravity_positivity_and_conditioning() {
        let (a, _) = gravity(2, 0.25).unwrap();
        assert!(a.to_dense().as_slice().iter().all(|v| *v > 0.0));
        let cond = |n| {
            let s = jacobi_singular_values(&gravity(n, 0.25).unwrap().0.to_dense()).unwrap();
            s[0] / s[s.len() - 1]
        };
        assert!(cond(40) > cond(10));
    }

    #[test]
    fn gamma_sparse_rescaling() {
        assert_eq!(gamma_sparse_signal(1, 2.5).unwrap(), vec![10.0]);
        let b = gamma_sparse_signal(1000, 3.0).unwrap();
        assert!((b.iter().map(|v| v.abs()).sum::<f64>() - 10.0).abs() < 1e-10);
        let b = gamma_sparse_signal(4, 1.0).unwrap();
        let harmonic = 1.0 + 0.5 + 1.0 / 3.0 + 0.25;
        for (j, bj) in b.iter().enumerate() {
            assert!((bj - 10.0 / ((j + 1) as f64 * harmonic)).abs() < 1e-12);
        }
    }

    #[test]
    fn s_sparse_layout() {
        assert_eq!(s_sparse_signal(5, 5, 1.0).unwrap(), vec![1.0; 5]);
        assert!(s_sparse_signal(5, 0, 1.0).is_err());
        let b = BoostSignal::SSparse(15).coefficients(1000).unwrap();
        assert!((b.iter().sum::<f64>() - 10.0).abs() < 1e-10);
        assert!(b[..15].iter().all(|v| (v - 10.0 / 15.0).abs() < 1e-12));
        assert!(b[15..].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn boost_signal_parsing() {
        assert_eq!("gamma3".parse::<BoostSignal>().unwrap(), BoostSignal::Gamma(3));
        assert_eq!("s60".parse::<BoostSignal>().unwrap(), BoostSignal::SSparse(60));
        assert!("x".parse::<BoostSignal>().is_err());
    }

    #[test]
    fn gaussian_design_moments() {
        let x = gaussian_design(1000, 1000, 17);
        for j in (0..1000).step_by(7) {
            let col = x.column(j);
            let mean = col.iter().sum::<f64>() / 1000.0;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 999.0;
            assert!((0.85..=1.15).contains(&var), "column {j} variance {var}");
        }
        let x = gaussian_design(1000, 2, 18);
        let (a, b) = (x.column(0), x.column(1));
        let ma = a.iter().sum::<f64>() / 1000.0;
        let mb = b.iter().sum::<f64>() / 1000.0;
        let cov: f64 = a.iter().zip(&b).map(|(u, v)| (u - ma) * (v - mb)).sum();
        let va: f64 = a.iter().map(|u| (u - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|v| (v - mb).powi(2)).sum();
        assert!((cov / (va * vb).sqrt()).abs() < 0.1);
    }

    #[test]
    fn additive_shapes_and_amplitudes() {
        for kind in AdditiveKind::ALL {
            let inst = additive_model(kind, 1, 1.0, 2).unwrap();
            assert_eq!((inst.covariates.rows(), inst.covariates.cols()), (1, 30));
            assert_eq!(inst.response.len(), 1);
            for g in additive_components(kind) {
                let peak = (0..=1000)
                    .map(|i| g(-2.5 + 5.0 * i as f64 / 1000.0).abs())
                    .fold(0.0, f64::max);
                assert!(peak <= 2.0 + 1e-9 && peak > 1.9, "{kind}: {peak}");
            }
        }
    }

    #[test]
    fn step_components_take_finitely_many_values() {
        for g in additive_components(AdditiveKind::Step) {
            let mut values: Vec<f64> = (0..10_000).map(|i| g(-2.5 + 5.0 * i as f64 / 10_000.0)).collect();
            values.sort_by(f64::total_cmp);
            values.dedup();
            assert!(values.len() <= 3);
        }
    }

    #[test]
    fn additive_noise_is_centred() {
        let inst = additive_model(AdditiveKind::Smooth, 2000, 1.0, 8).unwrap();
        let mean = inst.noise.iter().sum::<f64>() / 2000.0;
        assert!(mean.abs() < 4.0 / 2000f64.sqrt());
        for i in 0..2000 {
            assert_eq!(inst.response[i], inst.true_function_values[i] + inst.noise[i]);
        }
    }
}
