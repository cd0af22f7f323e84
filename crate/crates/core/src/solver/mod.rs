//! Per-timestep optimization and the two-substep step driver.
//!
//! A step minimizes the implicit-Euler objective over the substituted
//! coordinates `[c1, dc, psi, w, t]`, where every crease inequality but the
//! last one is a box bound. The remaining inequality and all hard user
//! constraints go through an augmented Lagrangian with the penalty
//! `mu/2 min(C + lambda/mu, 0)^2` and the update `lambda = min(lambda + mu C, 0)`.

mod boxed;
mod step;

pub use boxed::{minimize_boxed, BoxConfig, BoxResult, BoxStatus};
pub use step::{FrameReport, RibbonReport, RibbonState, Simulation, UnitReport};

use serde::{Deserialize, Serialize};

use crate::constraints::Instance;
use crate::dynamics::{EnergyBreakdown, StepProblem};
use crate::kinematics::{gradient, reconstruct_unchecked, CoordGradient, Cotangents, GradientMethod, ReconState};
use crate::model::{FrameMode, GeneralizedCoords, SubstitutedCoords};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Constant penalty `mu`.
    pub penalty: f64,
    /// Outer convergence threshold on both the coordinate change and the
    /// largest constraint violation.
    pub tolerance: f64,
    pub max_outer: usize,
    pub inner: BoxConfig,
    pub gradient: GradientMethod,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            penalty: 1e3,
            tolerance: 1e-4,
            max_outer: 50,
            inner: BoxConfig::default(),
            gradient: GradientMethod::Adjoint,
        }
    }
}

/// Ribbons that are optimized together because constraints couple them.
/// Constraint instances use ribbon indices local to `problems`.
#[derive(Debug, Clone)]
pub struct UnitProblem {
    pub problems: Vec<StepProblem>,
    pub modes: Vec<FrameMode>,
    pub soft: Vec<Instance>,
    pub hard: Vec<Instance>,
}

/// Result of [`optimize_step`].
#[derive(Debug, Clone)]
pub struct StepSolution {
    pub coords: Vec<GeneralizedCoords>,
    pub recons: Vec<ReconState>,
    pub energy: EnergyBreakdown,
    /// Objective without penalty terms at the returned point.
    pub objective: f64,
    /// Largest violation of any general constraint before the final
    /// feasibility repair.
    pub residual: f64,
    pub outer: usize,
    pub inner: usize,
    pub evaluations: usize,
    pub converged: bool,
    /// Worst inner status seen across outer iterations.
    pub inner_status: BoxStatus,
}

impl UnitProblem {
    fn block(&self, r: usize) -> usize {
        2 * self.problems[r].spec.creases() + frame_dof(self.modes[r])
    }

    pub fn dimension(&self) -> usize {
        (0..self.problems.len()).map(|r| self.block(r)).sum()
    }

    pub fn encode(&self, qs: &[GeneralizedCoords]) -> Vec<f64> {
        qs.iter().flat_map(|q| q.substitute().to_vec()).collect()
    }

    pub fn decode(&self, x: &[f64]) -> Vec<GeneralizedCoords> {
        let mut out = Vec::with_capacity(self.problems.len());
        let mut o = 0;
        for (r, p) in self.problems.iter().enumerate() {
            let b = self.block(r);
            let s = SubstitutedCoords::from_vec(&x[o..o + b], p.spec.creases(), self.modes[r])
                .expect("block length matches layout");
            out.push(s.inverse());
            o += b;
        }
        out
    }

    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let mut lo = Vec::with_capacity(self.dimension());
        let mut hi = Vec::with_capacity(self.dimension());
        for (r, p) in self.problems.iter().enumerate() {
            let m = p.spec.max_crease_step();
            let k = p.spec.creases();
            lo.extend(std::iter::repeat(-m).take(k));
            hi.extend(std::iter::repeat(m).take(k));
            let free = k + frame_dof(self.modes[r]);
            lo.extend(std::iter::repeat(f64::NEG_INFINITY).take(free));
            hi.extend(std::iter::repeat(f64::INFINITY).take(free));
        }
        (lo, hi)
    }

    /// Number of general inequality constraints (the entries of `C`).
    pub fn constraint_count(&self) -> usize {
        let hard: usize = self.hard.iter().map(|h| 6 * h.rows.len()).sum();
        hard + 2 * self.problems.iter().filter(|p| p.spec.segments > 2).count()
    }

    /// General constraint values `C >= 0` at `qs` (equality components come
    /// in `+r, -r` pairs).
    pub fn constraints(&self, qs: &[GeneralizedCoords], recons: &[ReconState]) -> Vec<f64> {
        let mut c = Vec::with_capacity(self.constraint_count());
        for inst in &self.hard {
            for r in inst.residual(recons) {
                c.push(r);
                c.push(-r);
            }
        }
        for (p, q) in self.problems.iter().zip(qs) {
            if p.spec.segments > 2 {
                let last = *q.c.last().unwrap();
                let m = p.spec.max_crease_step();
                c.push(m - last);
                c.push(m + last);
            }
        }
        c
    }

    /// Augmented Lagrangian value and gradient in substituted coordinates.
    /// Returns the penalty-free energies alongside.
    pub fn evaluate(
        &self,
        x: &[f64],
        lambda: &[f64],
        mu: f64,
        method: GradientMethod,
        grad: &mut [f64],
    ) -> (f64, EnergyBreakdown) {
        let qs = self.decode(x);
        let recons: Vec<ReconState> = self
            .problems
            .iter()
            .zip(&qs)
            .map(|(p, q)| reconstruct_unchecked(&p.spec, q))
            .collect();
        let mut cots: Vec<Cotangents> = self.problems.iter().map(|p| Cotangents::zeros(&p.spec)).collect();
        let mut directs: Vec<CoordGradient> =
            self.problems.iter().map(|p| CoordGradient::zeros(p.spec.creases())).collect();

        let mut energy = EnergyBreakdown::default();
        for (r, p) in self.problems.iter().enumerate() {
            energy += p.accumulate(&recons[r], &mut cots[r], &mut directs[r]);
        }
        for inst in &self.soft {
            energy.user += inst.energy(&recons, &mut cots);
        }

        // d/dC of mu/2 min(C + lambda/mu, 0)^2 is mu min(C + lambda/mu, 0)
        let mut penalty = 0.0;
        let mut k = 0;
        let mut term = |c: f64, k: &mut usize| {
            let m = (c + lambda[*k] / mu).min(0.0);
            *k += 1;
            penalty += 0.5 * mu * m * m;
            mu * m
        };
        for inst in &self.hard {
            for row in &inst.rows {
                let r = row.eval(&recons);
                let mut g = crate::Vec3::zeros();
                for i in 0..3 {
                    g[i] += term(r[i], &mut k);
                    g[i] -= term(-r[i], &mut k);
                }
                row.pullback(&g, &mut cots);
            }
        }
        for (r, p) in self.problems.iter().enumerate() {
            if p.spec.segments > 2 {
                let last = p.spec.creases() - 1;
                let m = p.spec.max_crease_step();
                let c = qs[r].c[last];
                let a = term(m - c, &mut k);
                let b = term(m + c, &mut k);
                directs[r].c[last] += b - a;
            }
        }

        let mut o = 0;
        for (r, p) in self.problems.iter().enumerate() {
            let g = gradient(method, &p.spec, &recons[r], &cots[r], &directs[r]);
            let kc = g.c.len();
            // d/d(c1, dc_i) is the suffix sum of d/dc
            let mut acc = 0.0;
            for i in (0..kc).rev() {
                acc += g.c[i];
                grad[o + i] = acc;
            }
            grad[o + kc..o + 2 * kc].copy_from_slice(&g.psi);
            if self.modes[r] == FrameMode::Floating {
                grad[o + 2 * kc..o + 2 * kc + 3].copy_from_slice(g.rotation.as_slice());
                grad[o + 2 * kc + 3..o + 2 * kc + 6].copy_from_slice(g.translation.as_slice());
            }
            o += self.block(r);
        }
        (energy.total() + penalty, energy)
    }
}

fn frame_dof(mode: FrameMode) -> usize {
    match mode {
        FrameMode::Fixed => 0,
        FrameMode::Floating => 6,
    }
}

fn stacked(qs: &[GeneralizedCoords]) -> Vec<f64> {
    qs.iter().flat_map(|q| q.to_vec()).collect()
}

/// Runs the augmented Lagrangian from the warm start `q0` (normally the
/// previous frame). Multipliers start at zero. The returned slopes are
/// repaired onto the feasible set if the last crease overshoots its bound
/// by the remaining constraint tolerance.
pub fn optimize_step(unit: &UnitProblem, q0: &[GeneralizedCoords], config: &SolverConfig) -> Result<StepSolution> {
    let mu = config.penalty;
    let (lo, hi) = unit.bounds();
    let mut x = unit.encode(q0);
    let mut lambda = vec![0.0; unit.constraint_count()];
    let mut grad = vec![0.0; x.len()];
    let (mut inner, mut evaluations, mut outer) = (0, 0, 0);
    let mut inner_status = BoxStatus::Converged;
    let mut converged = false;
    let mut residual = f64::INFINITY;
    let mut prev = stacked(q0);

    while outer < config.max_outer {
        outer += 1;
        let res = minimize_boxed(
            |x, g| unit.evaluate(x, &lambda, mu, config.gradient, g).0,
            &x,
            &lo,
            &hi,
            &config.inner,
        );
        inner += res.iterations;
        evaluations += res.evaluations;
        inner_status = worse(inner_status, res.status);
        x = res.x;

        let qs = unit.decode(&x);
        let recons: Vec<ReconState> = unit
            .problems
            .iter()
            .zip(&qs)
            .map(|(p, q)| reconstruct_unchecked(&p.spec, q))
            .collect();
        let cons = unit.constraints(&qs, &recons);
        residual = cons.iter().map(|&c| (-c).max(0.0)).fold(0.0, f64::max);
        let now = stacked(&qs);
        let change = now.iter().zip(&prev).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        prev = now;

        log::debug!(
            "outer {outer}: inner {} ({:?}) f {:.9e} residual {residual:.3e} change {change:.3e}",
            res.iterations,
            res.status,
            res.f
        );
        let updated: Vec<f64> = lambda.iter().zip(&cons).map(|(l, c)| (l + mu * c).min(0.0)).collect();
        // an unchanged multiplier vector means the next inner solve would
        // return the same point
        let fixed_point = updated == lambda;
        lambda = updated;
        if fixed_point || (change < config.tolerance && residual <= config.tolerance) {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("augmented Lagrangian hit {} outer iterations, residual {residual:.3e}", config.max_outer);
    }

    let mut coords = unit.decode(&x);
    for (q, p) in coords.iter_mut().zip(&unit.problems) {
        p.spec.project_feasible(&mut q.c)?;
    }
    let x_final = unit.encode(&coords);
    let (_, energy) = unit.evaluate(&x_final, &vec![0.0; lambda.len()], mu, config.gradient, &mut grad);
    let recons = unit
        .problems
        .iter()
        .zip(&coords)
        .map(|(p, q)| crate::kinematics::reconstruct(&p.spec, q))
        .collect::<Result<Vec<_>>>()?;
    Ok(StepSolution {
        coords,
        recons,
        objective: energy.total(),
        energy,
        residual,
        outer,
        inner,
        evaluations,
        converged,
        inner_status,
    })
}

fn worse(a: BoxStatus, b: BoxStatus) -> BoxStatus {
    let rank = |s| match s {
        BoxStatus::Converged => 0,
        BoxStatus::Stalled => 1,
        BoxStatus::IterationLimit => 2,
        BoxStatus::LineSearchFailed => 3,
    };
    if rank(b) > rank(a) {
        b
    } else {
        a
    }
}
