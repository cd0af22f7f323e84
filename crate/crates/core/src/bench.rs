//! Gradient timing harness: adjoint sweep against the direct chain rule.

use std::io::Write;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::kinematics::{gradient, reconstruct, CoordGradient, Cotangents, GradientMethod, ReconState};
use crate::model::{FrameMode, GeneralizedCoords, RibbonSpec};
use crate::{Result, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradientTiming {
    pub n: usize,
    pub adjoint_seconds: f64,
    pub chain_rule_seconds: f64,
    pub repeats_adjoint: usize,
    pub repeats_chain_rule: usize,
}

/// Random floating-frame state with random cotangents, seeded by `n`.
pub fn gradient_problem(n: usize) -> Result<(RibbonSpec, ReconState, Cotangents, CoordGradient)> {
    let spec = RibbonSpec::new(1.0, 0.05, n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
    let mut q = GeneralizedCoords::flat(&spec, FrameMode::Floating);
    q.c = spec.random_feasible_creases(&mut rng);
    q.psi = (0..spec.creases()).map(|_| rng.gen_range(-0.3..0.3)).collect();
    q.rotation = Vec3::new(0.1, 0.2, -0.3);
    let recon = reconstruct(&spec, &q)?;
    let mut v = || Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    let cot = Cotangents {
        bottom: (0..=n).map(|_| v()).collect(),
        top: (0..=n).map(|_| v()).collect(),
        normals: (0..n).map(|_| v()).collect(),
    };
    Ok((spec, recon, cot, CoordGradient::zeros(spec.creases())))
}

/// Mean wall time of one gradient evaluation, repeating until `budget` has
/// elapsed (at least three repetitions).
pub fn time_gradient(method: GradientMethod, n: usize, budget: Duration) -> Result<(f64, usize)> {
    let (spec, recon, cot, direct) = gradient_problem(n)?;
    let _ = gradient(method, &spec, &recon, &cot, &direct);
    let start = Instant::now();
    let mut reps = 0;
    while reps < 3 || start.elapsed() < budget {
        std::hint::black_box(gradient(method, &spec, &recon, std::hint::black_box(&cot), &direct));
        reps += 1;
    }
    Ok((start.elapsed().as_secs_f64() / reps as f64, reps))
}

pub fn bench_gradient(sizes: &[usize], budget: Duration) -> Result<Vec<GradientTiming>> {
    sizes
        .iter()
        .map(|&n| {
            let (adjoint_seconds, repeats_adjoint) = time_gradient(GradientMethod::Adjoint, n, budget)?;
            let (chain_rule_seconds, repeats_chain_rule) = time_gradient(GradientMethod::ChainRule, n, budget)?;
            Ok(GradientTiming { n, adjoint_seconds, chain_rule_seconds, repeats_adjoint, repeats_chain_rule })
        })
        .collect()
}

pub fn write_timings<W: Write>(out: W, timings: &[GradientTiming]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for t in timings {
        w.serialize(t)?;
    }
    w.flush()?;
    Ok(())
}
