//! Runs a scene to disk: one OBJ mesh per frame plus a CSV metrics log.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::collision::build_mesh;
use crate::dynamics::KineticMode;
use crate::kinematics::GradientMethod;
use crate::scene::SceneConfig;
use crate::solver::{FrameReport, Simulation};
use crate::Result;

/// Command-line style overrides of scene settings.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub frames: Option<usize>,
    pub h: Option<f64>,
    pub threads: Option<usize>,
    pub kinetic: Option<KineticMode>,
    pub gradient: Option<GradientMethod>,
}

impl RunOptions {
    pub fn apply(&self, scene: &SceneConfig) -> SceneConfig {
        let mut s = scene.clone();
        if let Some(f) = self.frames {
            s.frames = f;
        }
        if let Some(h) = self.h {
            s.h = h;
        }
        if let Some(k) = self.kinetic {
            s.kinetic = k;
        }
        if let Some(g) = self.gradient {
            s.solver.gradient = g;
        }
        if let Some(o) = &self.out {
            s.output = Some(o.display().to_string());
        }
        s
    }
}

/// One row of the metrics log. Energies are summed over ribbons, iteration
/// counts over units.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameRow {
    pub frame: usize,
    pub time: f64,
    pub objective: f64,
    pub kinetic: f64,
    pub gravity: f64,
    pub bending: f64,
    pub regularizer: f64,
    pub constraint_residual: f64,
    pub loop_residual: f64,
    pub isometry_error: f64,
    pub outer: usize,
    pub inner: usize,
    pub evaluations: usize,
    pub unconverged_units: usize,
    pub contacts: usize,
    pub contact_violation: f64,
    pub contact_fallback: bool,
    pub optimize_seconds: f64,
    pub collision_seconds: f64,
}

impl FrameRow {
    pub fn new(r: &FrameReport) -> Self {
        let max = |it: &mut dyn Iterator<Item = f64>| it.fold(0.0, f64::max);
        FrameRow {
            frame: r.frame,
            time: r.time,
            objective: r.units.iter().map(|u| u.objective).sum(),
            kinetic: r.ribbons.iter().map(|b| b.kinetic).sum(),
            gravity: r.ribbons.iter().map(|b| b.energy.gravity).sum(),
            bending: r.ribbons.iter().map(|b| b.energy.bending).sum(),
            regularizer: r.ribbons.iter().map(|b| b.energy.regularizer).sum(),
            constraint_residual: max(&mut r.units.iter().map(|u| u.residual)),
            loop_residual: max(&mut r.ribbons.iter().filter_map(|b| b.loop_residual)),
            isometry_error: max(&mut r.ribbons.iter().map(|b| b.isometry_error)),
            outer: r.units.iter().map(|u| u.outer).sum(),
            inner: r.units.iter().map(|u| u.inner).sum(),
            evaluations: r.units.iter().map(|u| u.evaluations).sum(),
            unconverged_units: r.units.iter().filter(|u| !u.converged).count(),
            contacts: r.contacts,
            contact_violation: r.contact_violation,
            contact_fallback: r.contact_fallback,
            optimize_seconds: r.optimize_seconds,
            collision_seconds: r.collision_seconds,
        }
    }
}

/// OBJ text of every ribbon's current rim positions, one object each.
pub fn mesh_obj(sim: &Simulation) -> String {
    let mut out = String::new();
    let mut base = 1;
    for (i, r) in sim.ribbons.iter().enumerate() {
        let mesh = build_mesh(&r.spec, &r.positions, &r.coords.c);
        let _ = writeln!(out, "o ribbon{i}");
        for v in &mesh.vertices {
            let _ = writeln!(out, "v {:?} {:?} {:?}", v.x, v.y, v.z);
        }
        for t in &mesh.triangles {
            let _ = writeln!(out, "f {} {} {}", t[0] + base, t[1] + base, t[2] + base);
        }
        base += mesh.vertices.len();
    }
    out
}

pub fn frame_path(dir: &Path, frame: usize) -> PathBuf {
    dir.join(format!("frame_{frame:05}.obj"))
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub rows: Vec<FrameRow>,
    pub wall_seconds: f64,
    pub out: Option<PathBuf>,
}

/// Integrates `scene` for its frame count. With an output directory, writes
/// `frame_00000.obj` (the initial state) through the last frame and
/// `metrics.csv`. Solver non-convergence is logged and the run continues.
pub fn run(scene: &SceneConfig, options: &RunOptions) -> Result<RunSummary> {
    let scene = options.apply(scene);
    let mut sim = scene.build()?;
    sim.threads = options.threads;
    let out = scene.output.as_ref().map(PathBuf::from);
    let mut log = None;
    if let Some(dir) = &out {
        fs::create_dir_all(dir)?;
        fs::write(frame_path(dir, 0), mesh_obj(&sim))?;
        log = Some(csv::Writer::from_path(dir.join("metrics.csv"))?);
    }
    let start = Instant::now();
    let mut rows = Vec::with_capacity(scene.frames);
    for _ in 0..scene.frames {
        let report = sim.step()?;
        let row = FrameRow::new(&report);
        log::info!(
            "frame {} f={:.6e} bend={:.4e} outer={} inner={} contacts={} opt={:.3}s coll={:.3}s",
            row.frame,
            row.objective,
            row.bending,
            row.outer,
            row.inner,
            row.contacts,
            row.optimize_seconds,
            row.collision_seconds
        );
        if let Some(dir) = &out {
            fs::write(frame_path(dir, report.frame), mesh_obj(&sim))?;
        }
        if let Some(w) = log.as_mut() {
            w.serialize(&row)?;
            w.flush()?;
        }
        rows.push(row);
    }
    Ok(RunSummary { rows, wall_seconds: start.elapsed().as_secs_f64(), out })
}
