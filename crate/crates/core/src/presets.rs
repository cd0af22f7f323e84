//! Built-in scenes.

use std::f64::consts::PI;
use std::sync::OnceLock;

use nalgebra::{Rotation3, Vector3};

use crate::collision::Collider;
use crate::constraints::{Constraint, Spin, VertexRef};
use crate::dynamics::{KineticMode, RibbonFrame, StepProblem};
use crate::kinematics::reconstruct;
use crate::model::{FrameMode, Rim, RimField};
use crate::scene::{RibbonConfig, SceneConfig};
use crate::solver::{optimize_step, SolverConfig, UnitProblem};
use crate::{Error, Result, Vec3};

pub const NAMES: &[&str] = &[
    "flat-rest",
    "hanging",
    "torsion",
    "dragging",
    "helix-unroll",
    "mobius-chain",
    "falling",
    "double-chain",
    "rotate",
    "rotate-lumped",
];

pub fn preset(name: &str) -> Result<SceneConfig> {
    let mut scene = match name {
        "flat-rest" => flat_rest(),
        "hanging" => hanging(),
        "torsion" => torsion(),
        "dragging" => dragging(),
        "helix-unroll" => helix_unroll(),
        "mobius-chain" => mobius_chain(),
        "falling" => falling(),
        "double-chain" => double_chain(),
        "rotate" => rotate(KineticMode::Full),
        "rotate-lumped" => rotate(KineticMode::Lumped),
        _ => return Err(Error::Scene(format!("unknown preset `{name}` (known: {})", NAMES.join(", ")))),
    };
    scene.name = name.to_string();
    scene.validate()?;
    Ok(scene)
}

fn standard() -> RibbonConfig {
    RibbonConfig::new(1.0, 0.05, 50)
}

fn flat_rest() -> SceneConfig {
    let mut s = SceneConfig::new("", vec![standard()]);
    s.gravity = [0.0; 3];
    s.frames = 10;
    s
}

fn hanging() -> SceneConfig {
    let mut s = SceneConfig::new("", vec![standard()]);
    s.frames = 200;
    s
}

fn torsion() -> SceneConfig {
    let mut s = SceneConfig::new("", vec![standard()]);
    s.frames = 300;
    s.constraints.push(Constraint::NormalGuide {
        ribbon: 0,
        element: 49,
        target: [0.0, 0.0, 1.0],
        strength: 10.0,
        spin: Some(Spin { axis: [1.0, 0.0, 0.0], rate: 2.0 * PI, limit: Some(4.0 * PI) }),
    });
    s
}

fn dragging() -> SceneConfig {
    let mut r = standard();
    r.mode = FrameMode::Floating;
    let mut s = SceneConfig::new("", vec![r]);
    s.frames = 100;
    let w = 0.025;
    for (rim, y) in [(Rim::Bottom, -w), (Rim::Top, w)] {
        s.constraints.push(Constraint::Pin {
            vertex: VertexRef::new(0, rim, 0),
            target: [0.0, y, 0.0],
            velocity: [-4.0, 0.0, 4.0],
            until: Some(0.25),
            stiffness: None,
        });
    }
    s
}

fn helix_unroll() -> SceneConfig {
    let mut r = standard();
    r.creases = vec![0.5; 49];
    r.angles = vec![0.3; 49];
    let mut s = SceneConfig::new("", vec![r]);
    s.frames = 100;
    s
}

/// Closed band of 25 equal sides with the seam in the middle of a side.
/// Unrotated, the polygon lies in the xz plane around `center`.
fn ring(center: Vec3, rotation: Rotation3<f64>) -> RibbonConfig {
    let mut r = standard();
    r.mode = FrameMode::Floating;
    r.angles = (1..50).map(|k| if k % 2 == 1 { 2.0 * PI / 25.0 } else { 0.0 }).collect();
    let t = center - rotation * Vec3::new(0.0, 0.0, ring_inradius());
    r.rotation = rotation.scaled_axis().into();
    r.translation = t.into();
    r
}

/// Two elements per side of a unit-length, 50-element band.
fn ring_inradius() -> f64 {
    0.02 / (PI / 25.0).tan()
}

fn mobius_ribbon(offset: f64) -> RibbonConfig {
    let mut r = RibbonConfig::new(1.0, 0.05, 48);
    r.mode = FrameMode::Floating;
    let slope = (PI / 6.0).tan();
    r.creases = vec![0.0; 47];
    r.angles = vec![0.0; 47];
    for (k, cs, ps) in MOBIUS_FOLDS {
        r.creases[k - 1] = cs * slope;
        r.angles[k - 1] = ps * PI;
    }
    r.translation = [offset, 0.0, 0.0];
    r
}

/// Crease index, slope sign and fold sign of the three flat folds that
/// turn a strip into a triangular Moebius band.
const MOBIUS_FOLDS: [(usize, f64, f64); 3] = [(8, 1.0, 1.0), (24, -1.0, 1.0), (40, 1.0, 1.0)];

/// Moves a closed band to the bending minimum compatible with its loop
/// constraint, ignoring inertia and gravity.
fn relax_band(r: &RibbonConfig, orientable: bool) -> RibbonConfig {
    let spec = r.spec();
    let q = r.coords();
    let recon = reconstruct(&spec, &q).expect("valid band");
    let prev = RibbonFrame {
        positions: RimField { bottom: recon.bottom, top: recon.top },
        velocities: RimField::zeros(spec.rim_vertices()),
        creases: q.c.clone(),
    };
    let unit = UnitProblem {
        problems: vec![StepProblem::statics(spec, prev, Vec3::zeros()).expect("valid band")],
        modes: vec![q.mode],
        soft: vec![],
        hard: vec![Constraint::Loop { ribbon: 0, orientable, stiffness: None }.instance(&[spec], 0.0)],
    };
    let config = SolverConfig { penalty: 1e4, tolerance: 1e-7, max_outer: 200, ..SolverConfig::default() };
    let sol = optimize_step(&unit, &[q], &config).expect("valid band");
    let mut out = r.clone();
    let relaxed = &sol.coords[0];
    out.creases = relaxed.c.clone();
    out.angles = relaxed.psi.clone();
    out.rotation = relaxed.rotation.into();
    out.translation = relaxed.translation.into();
    out
}

fn mobius_chain() -> SceneConfig {
    static BAND: OnceLock<RibbonConfig> = OnceLock::new();
    let band = BAND.get_or_init(|| relax_band(&mobius_ribbon(0.0), false));
    let ribbons: Vec<RibbonConfig> = (0..9)
        .map(|i| {
            let mut r = band.clone();
            r.translation[0] += 0.6 * i as f64;
            r
        })
        .collect();
    let mut s = SceneConfig::new("", ribbons);
    s.frames = 50;
    s.collision.enabled = false;
    // closure and pins are stiff against gravity; the default penalty
    // needs several times more outer iterations here
    s.solver.penalty = 1e4;
    s.constraints = (0..9).map(|ribbon| Constraint::Loop { ribbon, orientable: false, stiffness: None }).collect();
    // each band hangs from the two corners at its seam
    for ribbon in 0..9 {
        let r = &s.ribbons[ribbon];
        let recon = reconstruct(&r.spec(), &r.coords()).expect("valid band");
        for (rim, p) in [(Rim::Bottom, recon.bottom[0]), (Rim::Top, recon.top[0])] {
            s.constraints.push(Constraint::Pin {
                vertex: VertexRef::new(ribbon, rim, 0),
                target: p.into(),
                velocity: [0.0; 3],
                until: None,
                stiffness: None,
            });
        }
    }
    s
}

fn falling() -> SceneConfig {
    let mut r = RibbonConfig::new(3.0, 0.05, 150);
    r.mode = FrameMode::Floating;
    r.angles = (1..150).map(|k| 0.08 * (k as f64 * 0.37).sin()).collect();
    r.rotation = [0.0, 0.05, 0.0];
    r.translation = [-1.5, 0.0, 0.2];
    let mut s = SceneConfig::new("", vec![r]);
    s.frames = 100;
    s.collision.colliders.push(Collider::Plane { normal: [0.0, 0.0, 1.0], offset: 0.0 });
    s
}

fn double_chain() -> SceneConfig {
    let r0 = ring_inradius();
    // linked neighbours need spacing < 2r, same-plane second neighbours > r
    let d = 1.3 * r0;
    let quarter = |axis: Vector3<f64>| Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), PI / 2.0);
    let mut ribbons = Vec::new();
    // first chain along x, alternating xz and xy planes
    for i in 0..9 {
        let rot = if i % 2 == 0 { Rotation3::identity() } else { quarter(Vector3::x()) };
        ribbons.push(ring(Vec3::new(i as f64 * d, 0.0, 0.0), rot));
    }
    // second chain along y above the middle of the first, alternating yz
    // and xy planes
    let height = 2.0 * r0 + 0.05;
    for i in 0..9 {
        let rot = if i % 2 == 0 { quarter(Vector3::z()) } else { quarter(Vector3::x()) };
        ribbons.push(ring(Vec3::new(4.0 * d, (i as f64 - 4.0) * d, height), rot));
    }
    let mut s = SceneConfig::new("", ribbons);
    s.frames = 150;
    s.constraints = (0..18).map(|ribbon| Constraint::Loop { ribbon, orientable: true, stiffness: None }).collect();
    for ribbon in [0, 8] {
        let spec = s.ribbons[ribbon].clone();
        let recon = reconstruct(&spec.spec(), &spec.coords()).expect("valid ring");
        for (rim, p) in [(Rim::Bottom, recon.bottom[0]), (Rim::Top, recon.top[0])] {
            s.constraints.push(Constraint::Pin {
                vertex: VertexRef::new(ribbon, rim, 0),
                target: p.into(),
                velocity: [0.0; 3],
                until: None,
                stiffness: None,
            });
        }
    }
    s
}

fn rotate(kinetic: KineticMode) -> SceneConfig {
    let mut r = standard();
    r.mode = FrameMode::Floating;
    r.spin = 2.0 * PI;
    let mut s = SceneConfig::new("", vec![r]);
    s.gravity = [0.0; 3];
    s.kinetic = kinetic;
    s.frames = 100;
    s
}
