//! Two-substep timestep: independent per-unit optimization (in parallel),
//! then one global contact resolve.

use std::time::Instant;

use crate::collision::{resolve_contacts, CollisionConfig};
use crate::constraints::{loop_residual, Constraint};
use crate::dynamics::{kinetic_energy, EnergyBreakdown, KineticMode, RibbonFrame, StepProblem};
use crate::kinematics::{reconstruct, ReconState};
use crate::model::{GeneralizedCoords, RibbonSpec, RimField};
use crate::solver::{optimize_step, BoxStatus, SolverConfig, UnitProblem};
use crate::{parallel, Error, Result, Vec3};

/// State of one ribbon between frames. `positions`/`velocities` are the
/// contact-corrected rim data that seed the next kinetic term; they need
/// not be a reconstruction of `coords`.
#[derive(Debug, Clone, PartialEq)]
pub struct RibbonState {
    pub spec: RibbonSpec,
    pub coords: GeneralizedCoords,
    pub positions: RimField,
    pub velocities: RimField,
}

impl RibbonState {
    /// Reconstructs `coords` and starts from the given velocities (zero if
    /// `None`).
    pub fn at_rest(spec: RibbonSpec, coords: GeneralizedCoords) -> Result<Self> {
        let r = reconstruct(&spec, &coords)?;
        Ok(RibbonState {
            spec,
            coords,
            positions: RimField { bottom: r.bottom, top: r.top },
            velocities: RimField::zeros(spec.rim_vertices()),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnitReport {
    pub ribbons: Vec<usize>,
    pub outer: usize,
    pub inner: usize,
    pub evaluations: usize,
    pub converged: bool,
    pub residual: f64,
    pub objective: f64,
    pub inner_status: BoxStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RibbonReport {
    /// Energy terms of the step objective at the solution.
    pub energy: EnergyBreakdown,
    /// `rho/2 v^T M v` with the post-contact velocities.
    pub kinetic: f64,
    pub isometry_error: f64,
    /// Norm of the loop-closure residual if the ribbon carries a loop.
    pub loop_residual: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameReport {
    pub frame: usize,
    pub time: f64,
    pub units: Vec<UnitReport>,
    pub ribbons: Vec<RibbonReport>,
    pub contacts: usize,
    pub contact_fallback: bool,
    pub contact_violation: f64,
    pub optimize_seconds: f64,
    pub collision_seconds: f64,
}

/// A scene being integrated in time.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub ribbons: Vec<RibbonState>,
    pub constraints: Vec<Constraint>,
    pub gravity: Vec3,
    pub h: f64,
    pub kinetic: KineticMode,
    pub solver: SolverConfig,
    pub collision: CollisionConfig,
    /// Worker count for the per-unit solves; `None` uses every core.
    pub threads: Option<usize>,
    pub time: f64,
    pub frame: usize,
    units: Vec<Vec<usize>>,
}

impl Simulation {
    pub fn new(
        ribbons: Vec<RibbonState>,
        constraints: Vec<Constraint>,
        gravity: Vec3,
        h: f64,
        kinetic: KineticMode,
        solver: SolverConfig,
        collision: CollisionConfig,
    ) -> Result<Self> {
        if !(h > 0.0) {
            return Err(Error::Solver(format!("timestep must be positive, got {h}")));
        }
        let specs: Vec<RibbonSpec> = ribbons.iter().map(|r| r.spec).collect();
        for r in &ribbons {
            r.spec.validate()?;
            r.coords.check(&r.spec)?;
        }
        for c in &constraints {
            c.validate(&specs)?;
        }
        let units = partition(ribbons.len(), &constraints);
        Ok(Simulation {
            ribbons,
            constraints,
            gravity,
            h,
            kinetic,
            solver,
            collision,
            threads: None,
            time: 0.0,
            frame: 0,
            units,
        })
    }

    /// Groups of ribbons solved together.
    pub fn units(&self) -> &[Vec<usize>] {
        &self.units
    }

    pub fn specs(&self) -> Vec<RibbonSpec> {
        self.ribbons.iter().map(|r| r.spec).collect()
    }

    fn loops(&self) -> Vec<Option<bool>> {
        let mut out = vec![None; self.ribbons.len()];
        for c in &self.constraints {
            if let Constraint::Loop { ribbon, orientable, .. } = c {
                out[*ribbon] = Some(*orientable);
            }
        }
        out
    }

    fn unit_problem(&self, members: &[usize], time: f64) -> Result<UnitProblem> {
        let specs = self.specs();
        let local = |g: usize| members.iter().position(|&m| m == g).expect("constraint inside unit");
        let mut problems = Vec::with_capacity(members.len());
        for &m in members {
            let r = &self.ribbons[m];
            let prev = RibbonFrame {
                positions: r.positions.clone(),
                velocities: r.velocities.clone(),
                creases: r.coords.c.clone(),
            };
            problems.push(StepProblem::new(r.spec, prev, self.h, self.gravity, Some(self.kinetic))?);
        }
        let (mut soft, mut hard) = (Vec::new(), Vec::new());
        for c in &self.constraints {
            if !c.ribbons().iter().all(|r| members.contains(r)) {
                continue;
            }
            let inst = c.instance(&specs, time).remap(local);
            if c.is_hard() {
                hard.push(inst);
            } else {
                soft.push(inst);
            }
        }
        Ok(UnitProblem {
            problems,
            modes: members.iter().map(|&m| self.ribbons[m].coords.mode).collect(),
            soft,
            hard,
        })
    }

    /// Advances one frame.
    pub fn step(&mut self) -> Result<FrameReport> {
        let t_next = self.time + self.h;
        let start = Instant::now();
        let solved = parallel::with_threads(self.threads, || {
            parallel::map(&self.units, |members| -> Result<_> {
                let unit = self.unit_problem(members, t_next)?;
                let q0: Vec<GeneralizedCoords> = members.iter().map(|&m| self.ribbons[m].coords.clone()).collect();
                let sol = optimize_step(&unit, &q0, &self.solver)?;
                Ok((unit, sol))
            })
        });
        let optimize_seconds = start.elapsed().as_secs_f64();

        let n = self.ribbons.len();
        let mut coords: Vec<Option<GeneralizedCoords>> = vec![None; n];
        let mut predicted: Vec<Option<RimField>> = vec![None; n];
        let mut velocities: Vec<Option<RimField>> = vec![None; n];
        let mut recons: Vec<Option<ReconState>> = vec![None; n];
        let mut energies = vec![EnergyBreakdown::default(); n];
        let mut units = Vec::with_capacity(self.units.len());
        for (members, res) in self.units.iter().zip(solved) {
            let (unit, sol) = res?;
            if !sol.converged {
                log::warn!("frame {}: unit {members:?} did not converge (residual {:.3e})", self.frame + 1, sol.residual);
            }
            for (k, &m) in members.iter().enumerate() {
                let r = &sol.recons[k];
                let x = RimField { bottom: r.bottom.clone(), top: r.top.clone() };
                velocities[m] = Some(unit.problems[k].update_velocity(&x, &sol.coords[k].c));
                predicted[m] = Some(x);
                coords[m] = Some(sol.coords[k].clone());
                recons[m] = Some(r.clone());
                energies[m] = unit.problems[k]
                    .objective(&sol.coords[k], self.solver.gradient)
                    .energy;
            }
            units.push(UnitReport {
                ribbons: members.clone(),
                outer: sol.outer,
                inner: sol.inner,
                evaluations: sol.evaluations,
                converged: sol.converged,
                residual: sol.residual,
                objective: sol.objective,
                inner_status: sol.inner_status,
            });
        }
        let coords: Vec<GeneralizedCoords> = coords.into_iter().map(Option::unwrap).collect();
        let predicted: Vec<RimField> = predicted.into_iter().map(Option::unwrap).collect();
        let mut velocities: Vec<RimField> = velocities.into_iter().map(Option::unwrap).collect();
        let recons: Vec<ReconState> = recons.into_iter().map(Option::unwrap).collect();

        let start = Instant::now();
        let loops = self.loops();
        let (positions, contacts, contact_fallback, contact_violation) =
            if self.collision.enabled && (!self.collision.colliders.is_empty() || n > 1 || self.collision.self_collision) {
                let specs = self.specs();
                let prev: Vec<RimField> = self.ribbons.iter().map(|r| r.positions.clone()).collect();
                let prev_c: Vec<Vec<f64>> = self.ribbons.iter().map(|r| r.coords.c.clone()).collect();
                let new_c: Vec<Vec<f64>> = coords.iter().map(|q| q.c.clone()).collect();
                let closed: Vec<bool> = loops.iter().map(Option::is_some).collect();
                let rep = resolve_contacts(&specs, &predicted, &new_c, &prev, &prev_c, &closed, &self.collision);
                (rep.positions, rep.contacts, rep.fallback, rep.max_violation)
            } else {
                (predicted.clone(), 0, false, 0.0)
            };
        let collision_seconds = start.elapsed().as_secs_f64();

        let mut ribbons = Vec::with_capacity(n);
        for m in 0..n {
            if contacts > 0 {
                for (v, (x, xt)) in velocities[m].iter_mut().zip(positions[m].iter().zip(predicted[m].iter())) {
                    *v += (x - xt) / self.h;
                }
            }
            let state = &mut self.ribbons[m];
            state.coords = coords[m].clone();
            state.positions = positions[m].clone();
            state.velocities = velocities[m].clone();
            ribbons.push(RibbonReport {
                energy: energies[m],
                kinetic: kinetic_energy(&state.spec, &state.coords.c, &state.velocities),
                isometry_error: recons[m].isometry_error(),
                loop_residual: loops[m].map(|o| loop_residual(&recons[m], o).iter().map(|v| v * v).sum::<f64>().sqrt()),
            });
        }
        self.time = t_next;
        self.frame += 1;
        Ok(FrameReport {
            frame: self.frame,
            time: self.time,
            units,
            ribbons,
            contacts,
            contact_fallback,
            contact_violation,
            optimize_seconds,
            collision_seconds,
        })
    }

    /// Current reconstruction of every ribbon.
    pub fn reconstructions(&self) -> Result<Vec<ReconState>> {
        self.ribbons.iter().map(|r| reconstruct(&r.spec, &r.coords)).collect()
    }
}

/// Connected components of the "constrained together" relation, each
/// sorted, ordered by smallest member.
fn partition(n: usize, constraints: &[Constraint]) -> Vec<Vec<usize>> {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for c in constraints {
        let rs = c.ribbons();
        for w in rs.windows(2) {
            let (a, b) = (find(&mut parent, w[0]), find(&mut parent, w[1]));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; n];
    for i in 0..n {
        let root = find(&mut parent, i);
        if slot[root] == usize::MAX {
            slot[root] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot[root]].push(i);
    }
    groups
}
