//! Problem fixtures shared by the benchmarks.

use std::sync::Arc;

use earlystop::datagen::{
    diagonal_design, diagonal_signal, gravity, phillips, InverseProblemInstance, SignalKind, GRAVITY_DEFAULT_DEPTH,
};

/// The five inverse problems of the timing table, each with one noisy response.
pub fn timing_problems(n: usize, delta: f64, seed: u64) -> Vec<(&'static str, InverseProblemInstance)> {
    let mut out = Vec::new();
    let (design, signal) = gravity(n, GRAVITY_DEFAULT_DEPTH).expect("valid size");
    out.push(("gravity", design, signal));
    let (design, signal) = phillips(n).expect("n divisible by 4");
    out.push(("phillips", design, signal));
    for (name, kind) in [
        ("smooth", SignalKind::Smooth),
        ("supersmooth", SignalKind::Supersmooth),
        ("rough", SignalKind::Rough),
    ] {
        out.push((name, diagonal_design(n).expect("valid size"), diagonal_signal(n, kind)));
    }
    out.into_iter()
        .map(|(name, design, signal)| {
            let inst = InverseProblemInstance::generate(Arc::new(design), signal, delta, seed).expect("valid problem");
            (name, inst)
        })
        .collect()
}
