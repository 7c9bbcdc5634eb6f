use std::sync::Arc;

use earlystop::datagen::{diagonal_problem, gravity, phillips, InverseProblemInstance, SignalKind, GRAVITY_DEFAULT_DEPTH};
use earlystop::linalg::norm2;
use earlystop::{ConjugateGradients, IterativeEstimator, Landweber, TruncatedSvd};

#[test]
fn smooth_diagonal_oracles() {
    let inst = diagonal_problem(10_000, SignalKind::Smooth, 0.01, 0).unwrap();
    let mut tsvd = TruncatedSvd::from_instance(&inst).unwrap();
    let weak = tsvd.get_weak_balanced_oracle(10_000).unwrap();
    assert!(weak.reached);
    assert!((weak.value - 316.0).abs() <= 1.0, "{}", weak.value);
    let strong = tsvd.get_strong_classical_oracle(10_000).unwrap();
    assert!(strong.abs_diff(504) <= 1, "{strong}");

    let mut lw = Landweber::from_instance(&inst, Some(1.0)).unwrap();
    let weak = lw.get_weak_balanced_oracle(2000).unwrap();
    let strong = lw.get_strong_balanced_oracle(2000).unwrap();
    assert!((weak.value - 312.0).abs() <= 2.0, "{}", weak.value);
    assert!((strong.value - 244.0).abs() <= 2.0, "{}", strong.value);
}

#[test]
fn first_steps_reduce_the_residual() {
    let (design, signal) = gravity(60, GRAVITY_DEFAULT_DEPTH).unwrap();
    let inst = InverseProblemInstance::generate(Arc::new(design), signal, 0.01, 4).unwrap();
    let y2 = norm2(&inst.response);
    let mut tsvd = TruncatedSvd::from_instance(&inst).unwrap();
    let mut lw = Landweber::from_instance(&inst, None).unwrap();
    let mut cg = ConjugateGradients::from_instance(&inst).unwrap();
    tsvd.iterate(1);
    lw.iterate(1);
    cg.iterate(1);
    for r in [tsvd.residuals()[1], lw.residuals()[1], cg.residuals()[1]] {
        assert!(r < y2);
    }
    // CG minimizes the residual over the first Krylov space, which contains the Landweber step
    assert!(cg.residuals()[1] <= lw.residuals()[1] + 1e-12);
    let coef = tsvd.coefficients()[0];
    assert!((tsvd.residuals()[1] - (y2 - coef * coef)).abs() < 1e-9 * y2);
}

#[test]
fn phillips_discrepancy_stops_are_early() {
    let (design, signal) = phillips(100).unwrap();
    let design = Arc::new(design);
    let kappa = 100.0 * 0.1 * 0.1;
    for seed in 0..5 {
        let inst = InverseProblemInstance::generate(design.clone(), signal.clone(), 0.1, seed).unwrap();
        let mut tsvd = TruncatedSvd::from_instance(&inst).unwrap();
        let stop = tsvd.get_discrepancy_stop(kappa, 100);
        assert!(stop.reached && stop.value <= 50.0);
        let mut cg = ConjugateGradients::from_instance(&inst).unwrap();
        let stop = cg.get_discrepancy_stop(kappa, 100, true);
        assert!(stop.reached);
        let m = stop.floor();
        let r = cg.residuals();
        assert!(r[m] > kappa && r[m + 1] <= kappa);
        let at_stop = cg.get_estimate(stop.value).unwrap();
        let fitted = inst.design.apply(&at_stop);
        let resid: Vec<f64> = inst.response.iter().zip(&fitted).map(|(y, f)| y - f).collect();
        assert!((norm2(&resid) - kappa).abs() < 1e-8);
    }
}

#[test]
fn discrepancy_stop_is_monotone_in_kappa() {
    let inst = diagonal_problem(500, SignalKind::Rough, 0.05, 8).unwrap();
    let mut lw = Landweber::from_instance(&inst, Some(1.0)).unwrap();
    let mut last = f64::INFINITY;
    for kappa in [0.5, 1.0, 1.25, 2.0, 5.0] {
        let stop = lw.get_discrepancy_stop(kappa, 5000);
        assert!(stop.value <= last);
        last = stop.value;
    }
}
