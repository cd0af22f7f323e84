//! Scene files: TOML description of ribbons, constraints, colliders and
//! solver settings.
//!
//! ```toml
//! name = "hanging"
//! h = 0.01
//! frames = 200
//! gravity = [0.0, 0.0, -9.8]
//!
//! [[ribbons]]
//! length = 1.0
//! width = 0.05
//! segments = 50
//! mode = "fixed"
//!
//! [[constraints]]
//! kind = "loop"
//! ribbon = 0
//! orientable = true
//! ```
//!
//! Every ribbon field other than `length`, `width` and `segments` is
//! optional. `creases` and `angles` default to a flat strip; `spin` gives an
//! initial angular velocity (rad/s) about the ribbon's centerline.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::collision::CollisionConfig;
use crate::constraints::Constraint;
use crate::dynamics::KineticMode;
use crate::kinematics::reconstruct;
use crate::model::{FrameMode, GeneralizedCoords, RibbonSpec, RimField, DEFAULT_MARGIN, DEFAULT_REGULARIZER};
use crate::solver::{RibbonState, Simulation, SolverConfig};
use crate::{Error, Result, Vec3};

fn one() -> f64 {
    1.0
}
fn default_regularizer() -> f64 {
    DEFAULT_REGULARIZER
}
fn default_margin() -> f64 {
    DEFAULT_MARGIN
}
fn default_h() -> f64 {
    0.01
}
fn default_frames() -> usize {
    100
}
fn default_gravity() -> [f64; 3] {
    [0.0, 0.0, -9.8]
}
fn is_zero3(v: &[f64; 3]) -> bool {
    v.iter().all(|&x| x == 0.0)
}
fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RibbonConfig {
    pub length: f64,
    pub width: f64,
    pub segments: usize,
    #[serde(default = "one")]
    pub density: f64,
    #[serde(default = "one")]
    pub bending: f64,
    #[serde(default = "default_regularizer")]
    pub regularizer: f64,
    #[serde(default = "default_margin")]
    pub margin: f64,
    #[serde(default)]
    pub mode: FrameMode,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub creases: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub angles: Vec<f64>,
    #[serde(default, skip_serializing_if = "is_zero3")]
    pub rotation: [f64; 3],
    #[serde(default, skip_serializing_if = "is_zero3")]
    pub translation: [f64; 3],
    /// Initial linear velocity.
    #[serde(default, skip_serializing_if = "is_zero3")]
    pub velocity: [f64; 3],
    /// Initial angular velocity about the centerline, rad/s.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub spin: f64,
}

impl RibbonConfig {
    pub fn new(length: f64, width: f64, segments: usize) -> Self {
        RibbonConfig {
            length,
            width,
            segments,
            density: 1.0,
            bending: 1.0,
            regularizer: DEFAULT_REGULARIZER,
            margin: DEFAULT_MARGIN,
            mode: FrameMode::Fixed,
            creases: Vec::new(),
            angles: Vec::new(),
            rotation: [0.0; 3],
            translation: [0.0; 3],
            velocity: [0.0; 3],
            spin: 0.0,
        }
    }

    pub fn spec(&self) -> RibbonSpec {
        RibbonSpec {
            length: self.length,
            width: self.width,
            segments: self.segments,
            density: self.density,
            bending: self.bending,
            regularizer: self.regularizer,
            margin: self.margin,
        }
    }

    pub fn coords(&self) -> GeneralizedCoords {
        let k = self.segments.saturating_sub(1);
        let fill = |v: &Vec<f64>| if v.is_empty() { vec![0.0; k] } else { v.clone() };
        GeneralizedCoords {
            c: fill(&self.creases),
            psi: fill(&self.angles),
            mode: self.mode,
            rotation: Vec3::from(self.rotation),
            translation: Vec3::from(self.translation),
        }
    }

    pub fn validate(&self, index: usize) -> Result<()> {
        let ctx = |e: Error| Error::Scene(format!("ribbon {index}: {e}"));
        let spec = self.spec();
        spec.validate().map_err(ctx)?;
        for (what, v) in [("creases", &self.creases), ("angles", &self.angles)] {
            if !v.is_empty() && v.len() != spec.creases() {
                return Err(Error::Scene(format!(
                    "ribbon {index}: {what} has {} entries, expected {}",
                    v.len(),
                    spec.creases()
                )));
            }
        }
        if self.mode == FrameMode::Fixed && !(is_zero3(&self.rotation) && is_zero3(&self.translation)) {
            return Err(Error::Scene(format!("ribbon {index}: fixed-end ribbons cannot carry a rotation or translation")));
        }
        self.coords().check(&spec).map_err(ctx)
    }

    /// Reconstructed initial state with the configured velocities.
    pub fn state(&self) -> Result<RibbonState> {
        let spec = self.spec();
        let coords = self.coords();
        let r = reconstruct(&spec, &coords)?;
        let n = spec.segments;
        let a = (r.bottom[0] + r.top[0]) / 2.0;
        let b = (r.bottom[n] + r.top[n]) / 2.0;
        let axis = (b - a).try_normalize(1e-300).unwrap_or_else(Vec3::x) * self.spin;
        let v0 = Vec3::from(self.velocity);
        let vel = |p: &Vec3| v0 + axis.cross(&(p - a));
        let velocities = RimField {
            bottom: r.bottom.iter().map(vel).collect(),
            top: r.top.iter().map(vel).collect(),
        };
        Ok(RibbonState {
            spec,
            coords,
            positions: RimField { bottom: r.bottom, top: r.top },
            velocities,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub name: String,
    #[serde(default = "default_h")]
    pub h: f64,
    #[serde(default = "default_frames")]
    pub frames: usize,
    #[serde(default = "default_gravity")]
    pub gravity: [f64; 3],
    #[serde(default)]
    pub kinetic: KineticMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub collision: CollisionConfig,
    pub ribbons: Vec<RibbonConfig>,
    #[serde(default)]
    pub constraints: Vec<Constraint>,
}

impl SceneConfig {
    pub fn new(name: impl Into<String>, ribbons: Vec<RibbonConfig>) -> Self {
        SceneConfig {
            name: name.into(),
            h: default_h(),
            frames: default_frames(),
            gravity: default_gravity(),
            kinetic: KineticMode::Full,
            output: None,
            solver: SolverConfig::default(),
            collision: CollisionConfig::default(),
            ribbons,
            constraints: Vec::new(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let scene: SceneConfig = toml::from_str(text)?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_toml()?)?;
        Ok(())
    }

    pub fn specs(&self) -> Vec<RibbonSpec> {
        self.ribbons.iter().map(RibbonConfig::spec).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.ribbons.is_empty() {
            return Err(Error::Scene("scene has no ribbons".into()));
        }
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::Scene(format!("timestep must be positive, got {}", self.h)));
        }
        if !self.gravity.iter().all(|g| g.is_finite()) {
            return Err(Error::Scene("gravity must be finite".into()));
        }
        if !(self.solver.penalty > 0.0) || !(self.solver.tolerance > 0.0) || self.solver.inner.memory == 0 {
            return Err(Error::Scene("solver penalty, tolerance and memory must be positive".into()));
        }
        if !(self.collision.stiffness >= 0.0) || self.collision.thickness.is_some_and(|t| !(t > 0.0)) {
            return Err(Error::Scene("collision stiffness must be >= 0 and thickness > 0".into()));
        }
        for (i, r) in self.ribbons.iter().enumerate() {
            r.validate(i)?;
        }
        let specs = self.specs();
        for (i, c) in self.constraints.iter().enumerate() {
            c.validate(&specs).map_err(|e| Error::Scene(format!("constraint {i}: {e}")))?;
        }
        Ok(())
    }

    pub fn build(&self) -> Result<Simulation> {
        self.validate()?;
        let ribbons = self.ribbons.iter().map(RibbonConfig::state).collect::<Result<Vec<_>>>()?;
        Simulation::new(
            ribbons,
            self.constraints.clone(),
            Vec3::from(self.gravity),
            self.h,
            self.kinetic,
            self.solver,
            self.collision.clone(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::VertexRef;
    use crate::model::Rim;

    fn sample() -> SceneConfig {
        let mut r = RibbonConfig::new(1.0, 0.05, 4);
        r.mode = FrameMode::Floating;
        r.angles = vec![0.1, -0.2, 0.3000000000000001];
        r.creases = vec![0.1, 0.2, 0.1];
        r.translation = [0.0, 0.0, 1.0 / 3.0];
        r.spin = 2.0;
        let mut s = SceneConfig::new("sample", vec![r, RibbonConfig::new(0.5, 0.02, 3)]);
        s.constraints.push(Constraint::Loop { ribbon: 0, orientable: false, stiffness: None });
        s.constraints.push(Constraint::Pin {
            vertex: VertexRef::new(1, Rim::Top, 3),
            target: [0.0, 1.0, 2.0],
            velocity: [1.0, 0.0, 0.0],
            until: Some(0.5),
            stiffness: Some(10.0),
        });
        s.collision.colliders.push(crate::collision::Collider::Plane { normal: [0.0, 0.0, 1.0], offset: -1.0 });
        s.output = Some("out".into());
        s
    }

    #[test]
    fn round_trip_is_lossless() {
        let s = sample();
        let text = s.to_toml().unwrap();
        let back = SceneConfig::from_toml(&text).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.to_toml().unwrap(), text);
    }

    #[test]
    fn minimal_scene_uses_defaults() {
        let s = SceneConfig::from_toml("[[ribbons]]\nlength = 1.0\nwidth = 0.05\nsegments = 50\n").unwrap();
        assert_eq!(s.h, 0.01);
        assert_eq!(s.gravity, [0.0, 0.0, -9.8]);
        assert_eq!(s.ribbons[0].spec(), RibbonSpec::new(1.0, 0.05, 50).unwrap());
        assert_eq!(s.kinetic, KineticMode::Full);
        assert_eq!(s.solver, SolverConfig::default());
    }

    #[test]
    fn parse_errors_carry_positions() {
        let err = SceneConfig::from_toml("h = 0.01\n[[ribbons]]\nlength = \n").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn invalid_scenes_are_rejected() {
        let bad = [
            "ribbons = []",
            "[[ribbons]]\nlength = 1.0\nwidth = 0.05\nsegments = 4\ncreases = [5.0, -5.0, 0.0]\n",
            "[[ribbons]]\nlength = 1.0\nwidth = 0.05\nsegments = 4\nangles = [0.5]\n",
            "[[ribbons]]\nlength = 1.0\nwidth = 0.05\nsegments = 4\ntranslation = [1.0, 0.0, 0.0]\n",
            "[[ribbons]]\nlength = 1.0\nwidth = 0.05\nsegments = 4\n[[constraints]]\nkind = \"loop\"\nribbon = 3\norientable = true\n",
            "[[ribbons]]\nlength = 1.0\nwidth = 0.05\nsegments = 4\ncolour = 3\n",
        ];
        for text in bad {
            assert!(SceneConfig::from_toml(text).is_err(), "{text}");
        }
    }

    #[test]
    fn spin_gives_rigid_rotation_velocity() {
        let mut r = RibbonConfig::new(1.0, 0.05, 4);
        r.mode = FrameMode::Floating;
        r.spin = 3.0;
        let st = r.state().unwrap();
        for j in 0..=4 {
            assert!((st.velocities.bottom[j] - Vec3::new(0.0, 0.0, -0.075)).norm() < 1e-15);
            assert!((st.velocities.top[j] - Vec3::new(0.0, 0.0, 0.075)).norm() < 1e-15);
        }
    }
}
