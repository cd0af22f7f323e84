//! Ribbon parameters, generalized coordinates and the crease constraints.

use std::fmt;

use nalgebra::Vector4;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result, Vec3};

pub const DEFAULT_MARGIN: f64 = 0.95;
pub const DEFAULT_REGULARIZER: f64 = 0.1;

/// Geometry and material of one ribbon. SI units throughout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RibbonSpec {
    pub length: f64,
    pub width: f64,
    pub segments: usize,
    /// Areal density, kg/m^2.
    pub density: f64,
    /// Bending stiffness `alpha`.
    pub bending: f64,
    /// Weight `beta` of the `c_i^2` crease regularizer.
    pub regularizer: f64,
    /// Fraction of the geometric crease limit that is admitted.
    pub margin: f64,
}

impl RibbonSpec {
    pub fn new(length: f64, width: f64, segments: usize) -> Result<Self> {
        let spec = RibbonSpec {
            length,
            width,
            segments,
            density: 1.0,
            bending: 1.0,
            regularizer: DEFAULT_REGULARIZER,
            margin: DEFAULT_MARGIN,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_density(mut self, density: f64) -> Self {
        self.density = density;
        self
    }

    pub fn with_bending(mut self, bending: f64) -> Self {
        self.bending = bending;
        self
    }

    pub fn with_regularizer(mut self, regularizer: f64) -> Self {
        self.regularizer = regularizer;
        self
    }

    pub fn with_margin(mut self, margin: f64) -> Self {
        self.margin = margin;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSpec(msg));
        if !(self.length > 0.0 && self.length.is_finite()) {
            return bad(format!("length must be positive, got {}", self.length));
        }
        if !(self.width > 0.0 && self.width.is_finite()) {
            return bad(format!("width must be positive, got {}", self.width));
        }
        if self.width >= self.length {
            return bad(format!(
                "width {} must be smaller than length {}",
                self.width, self.length
            ));
        }
        if self.segments < 1 {
            return bad(format!("need at least 1 segment, got {}", self.segments));
        }
        if !(self.density >= 0.0 && self.density.is_finite()) {
            return bad(format!("density must be non-negative, got {}", self.density));
        }
        if !(self.bending >= 0.0) || !(self.regularizer >= 0.0) {
            return bad("stiffness coefficients must be non-negative".into());
        }
        if !(self.margin > 0.0 && self.margin <= 1.0) {
            return bad(format!("margin must lie in (0, 1], got {}", self.margin));
        }
        Ok(())
    }

    /// Number of interior creases, `n - 1`.
    pub fn creases(&self) -> usize {
        self.segments - 1
    }

    /// Rim vertices per rim, `n + 1`.
    pub fn rim_vertices(&self) -> usize {
        self.segments + 1
    }

    pub fn segment_length(&self) -> f64 {
        self.length / self.segments as f64
    }

    /// Largest admissible slope difference between consecutive creases.
    pub fn max_crease_step(&self) -> f64 {
        self.margin * 2.0 * self.length / (self.width * self.segments as f64)
    }

    pub fn area(&self) -> f64 {
        self.length * self.width
    }

    pub fn mass(&self) -> f64 {
        self.density * self.area()
    }

    /// Crease slope at crease `j` in `0..=n`, with the zero boundary values.
    pub fn padded_crease(&self, c: &[f64], j: usize) -> f64 {
        if j == 0 || j == self.segments {
            0.0
        } else {
            c[j - 1]
        }
    }

    fn check_len(&self, c: &[f64]) -> Result<()> {
        if c.len() != self.creases() {
            return Err(Error::Dimension {
                what: "crease slopes",
                expected: self.creases(),
                got: c.len(),
            });
        }
        Ok(())
    }

    /// Every violated crease inequality. Empty means feasible.
    ///
    /// With `c_0 = c_n = 0` the inequalities are exactly
    /// `|c_{j+1} - c_j| <= dc_max` for `j = 0..n-1`; the first and last of
    /// those are the bounds on `c_1` and `c_{n-1}`.
    pub fn violations(&self, c: &[f64]) -> Vec<Violation> {
        let bound = self.max_crease_step();
        (0..self.segments)
            .filter_map(|j| {
                let value = (self.padded_crease(c, j + 1) - self.padded_crease(c, j)).abs();
                (value > bound).then_some(Violation {
                    index: j,
                    value,
                    bound,
                })
            })
            .collect()
    }

    pub fn check_feasible(&self, c: &[f64]) -> Result<()> {
        self.check_len(c)?;
        let v = self.violations(c);
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Infeasible(v))
        }
    }

    /// Longitudinal material coordinates of the bottom and top rims.
    pub fn rim_coords(&self, c: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let seg = self.segment_length();
        let half = 0.5 * self.width;
        (0..=self.segments)
            .map(|j| {
                let base = seg * j as f64;
                let cj = self.padded_crease(c, j);
                (base - half * cj, base + half * cj)
            })
            .unzip()
    }

    /// Homogeneous material positions of the bottom (`x`) and top (`y`) rims.
    pub fn material_rim_positions(&self, c: &[f64]) -> Result<RimPoints> {
        self.check_feasible(c)?;
        Ok(self.material_rim_positions_unchecked(c))
    }

    pub(crate) fn material_rim_positions_unchecked(&self, c: &[f64]) -> RimPoints {
        let (ub, ut) = self.rim_coords(c);
        let half = 0.5 * self.width;
        RimPoints {
            bottom: ub.iter().map(|&u| Vector4::new(u, -half, 0.0, 1.0)).collect(),
            top: ut.iter().map(|&u| Vector4::new(u, half, 0.0, 1.0)).collect(),
        }
    }

    /// Pulls `c` back into the feasible set with minimal local edits.
    ///
    /// Meant for repairing iterates that overshoot a general constraint by
    /// solver tolerance; large violations are reported, not hidden.
    pub fn project_feasible(&self, c: &mut [f64]) -> Result<()> {
        self.check_len(c)?;
        let bound = self.max_crease_step();
        let m = c.len();
        for _ in 0..4 {
            if self.violations(c).is_empty() {
                return Ok(());
            }
            c[0] = c[0].clamp(-bound, bound);
            for j in 1..m {
                let lo = c[j - 1] - bound;
                let hi = c[j - 1] + bound;
                c[j] = c[j].clamp(lo, hi);
            }
            c[m - 1] = c[m - 1].clamp(-bound, bound);
            for j in (0..m - 1).rev() {
                let lo = c[j + 1] - bound;
                let hi = c[j + 1] + bound;
                c[j] = c[j].clamp(lo, hi);
            }
        }
        self.check_feasible(c)
    }

    /// Uniformly scaled random walk that satisfies every crease inequality.
    pub fn random_feasible_creases<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let bound = self.max_crease_step();
        let mut c = Vec::with_capacity(self.creases());
        let mut acc = 0.0;
        for _ in 0..self.creases() {
            acc += rng.gen_range(-bound..=bound);
            c.push(acc);
        }
        let last = c.last().copied().unwrap_or(0.0).abs();
        if last > bound {
            let s = bound / last * (1.0 - 1e-12);
            c.iter_mut().for_each(|v| *v *= s);
        }
        c
    }
}

/// Homogeneous rim points, `n + 1` per rim.
#[derive(Debug, Clone, PartialEq)]
pub struct RimPoints {
    pub bottom: Vec<Vector4<f64>>,
    pub top: Vec<Vector4<f64>>,
}

/// A violated crease inequality `|c_{index+1} - c_index| <= bound`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Violation {
    pub index: usize,
    pub value: f64,
    pub bound: f64,
}

impl Violation {
    pub fn slack(&self) -> f64 {
        self.bound - self.value
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "|c[{}] - c[{}]| = {:.6} > {:.6}",
            self.index + 1,
            self.index,
            self.value,
            self.bound
        )
    }
}

/// Which rim of the strip a vertex lies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rim {
    /// `x_j`, material `v = -w/2`.
    Bottom,
    /// `y_j`, material `v = +w/2`.
    Top,
}

/// A 3-vector per rim vertex (positions, velocities, forces).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RimField {
    pub bottom: Vec<Vec3>,
    pub top: Vec<Vec3>,
}

impl RimField {
    pub fn zeros(vertices: usize) -> Self {
        RimField {
            bottom: vec![Vec3::zeros(); vertices],
            top: vec![Vec3::zeros(); vertices],
        }
    }

    pub fn len(&self) -> usize {
        self.bottom.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bottom.is_empty()
    }

    pub fn get(&self, rim: Rim, j: usize) -> Vec3 {
        match rim {
            Rim::Bottom => self.bottom[j],
            Rim::Top => self.top[j],
        }
    }

    pub fn get_mut(&mut self, rim: Rim, j: usize) -> &mut Vec3 {
        match rim {
            Rim::Bottom => &mut self.bottom[j],
            Rim::Top => &mut self.top[j],
        }
    }

    pub fn rim(&self, rim: Rim) -> &[Vec3] {
        match rim {
            Rim::Bottom => &self.bottom,
            Rim::Top => &self.top,
        }
    }

    /// Bottom rim followed by top rim.
    pub fn iter(&self) -> impl Iterator<Item = &Vec3> {
        self.bottom.iter().chain(self.top.iter())
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Vec3> {
        self.bottom.iter_mut().chain(self.top.iter_mut())
    }

    pub fn zip_map(&self, other: &RimField, f: impl Fn(&Vec3, &Vec3) -> Vec3) -> RimField {
        RimField {
            bottom: self.bottom.iter().zip(&other.bottom).map(|(a, b)| f(a, b)).collect(),
            top: self.top.iter().zip(&other.top).map(|(a, b)| f(a, b)).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|v| v.iter().all(|x| x.is_finite()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FrameMode {
    /// First element pinned to the material frame (`T_0 = Id`).
    #[default]
    Fixed,
    /// First element carried by a free rigid transform `(exp(w), t)`.
    Floating,
}

/// Configuration of one ribbon: crease slopes, bending angles and the
/// optional floating frame. `rotation`/`translation` are ignored in fixed
/// mode and kept at zero there.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizedCoords {
    pub c: Vec<f64>,
    pub psi: Vec<f64>,
    pub mode: FrameMode,
    pub rotation: Vec3,
    pub translation: Vec3,
}

impl GeneralizedCoords {
    pub fn flat(spec: &RibbonSpec, mode: FrameMode) -> Self {
        GeneralizedCoords {
            c: vec![0.0; spec.creases()],
            psi: vec![0.0; spec.creases()],
            mode,
            rotation: Vec3::zeros(),
            translation: Vec3::zeros(),
        }
    }

    pub fn creases(&self) -> usize {
        self.c.len()
    }

    /// Length of the flattened coordinate vector.
    pub fn dof(&self) -> usize {
        2 * self.c.len() + self.frame_dof()
    }

    pub fn frame_dof(&self) -> usize {
        match self.mode {
            FrameMode::Fixed => 0,
            FrameMode::Floating => 6,
        }
    }

    pub fn check(&self, spec: &RibbonSpec) -> Result<()> {
        if self.psi.len() != self.c.len() {
            return Err(Error::Dimension {
                what: "bending angles",
                expected: self.c.len(),
                got: self.psi.len(),
            });
        }
        spec.check_feasible(&self.c)
    }

    /// Stacked `[c, psi, w, t]`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dof());
        v.extend_from_slice(&self.c);
        v.extend_from_slice(&self.psi);
        if self.mode == FrameMode::Floating {
            v.extend(self.rotation.iter());
            v.extend(self.translation.iter());
        }
        v
    }

    pub fn from_vec(v: &[f64], creases: usize, mode: FrameMode) -> Result<Self> {
        let mut q = GeneralizedCoords {
            c: vec![0.0; creases],
            psi: vec![0.0; creases],
            mode,
            rotation: Vec3::zeros(),
            translation: Vec3::zeros(),
        };
        if v.len() != q.dof() {
            return Err(Error::Dimension {
                what: "coordinate vector",
                expected: q.dof(),
                got: v.len(),
            });
        }
        q.c.copy_from_slice(&v[..creases]);
        q.psi.copy_from_slice(&v[creases..2 * creases]);
        if mode == FrameMode::Floating {
            let o = 2 * creases;
            q.rotation = Vec3::new(v[o], v[o + 1], v[o + 2]);
            q.translation = Vec3::new(v[o + 3], v[o + 4], v[o + 5]);
        }
        Ok(q)
    }

    /// Maps crease slopes to the first slope plus successive differences.
    pub fn substitute(&self) -> SubstitutedCoords {
        let c1 = self.c.first().copied().unwrap_or(0.0);
        let dc = self.c.windows(2).map(|w| w[1] - w[0]).collect();
        SubstitutedCoords {
            c1,
            dc,
            psi: self.psi.clone(),
            mode: self.mode,
            rotation: self.rotation,
            translation: self.translation,
        }
    }
}

/// Coordinates after the substitution `dc_i = c_i - c_{i-1}`, under which
/// every crease inequality except `|c_{n-1}| <= dc_max` becomes a box bound.
#[derive(Debug, Clone, PartialEq)]
pub struct SubstitutedCoords {
    pub c1: f64,
    pub dc: Vec<f64>,
    pub psi: Vec<f64>,
    pub mode: FrameMode,
    pub rotation: Vec3,
    pub translation: Vec3,
}

impl SubstitutedCoords {
    /// Prefix-sum inverse of [`GeneralizedCoords::substitute`].
    pub fn inverse(&self) -> GeneralizedCoords {
        let mut c = Vec::with_capacity(self.psi.len());
        if !self.psi.is_empty() {
            c.push(self.c1);
        }
        let mut acc = self.c1;
        for d in &self.dc {
            acc += d;
            c.push(acc);
        }
        GeneralizedCoords {
            c,
            psi: self.psi.clone(),
            mode: self.mode,
            rotation: self.rotation,
            translation: self.translation,
        }
    }

    /// `c_{n-1} = c_1 + sum(dc)`, the only crease quantity left unboxed.
    pub fn last_crease(&self) -> f64 {
        self.c1 + self.dc.iter().sum::<f64>()
    }

    /// Stacked `[c1, dc, psi, w, t]`; same length as the unsubstituted vector.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(2 * self.psi.len() + 6);
        if !self.psi.is_empty() {
            v.push(self.c1);
        }
        v.extend_from_slice(&self.dc);
        v.extend_from_slice(&self.psi);
        if self.mode == FrameMode::Floating {
            v.extend(self.rotation.iter());
            v.extend(self.translation.iter());
        }
        v
    }

    pub fn from_vec(v: &[f64], creases: usize, mode: FrameMode) -> Result<Self> {
        let q = GeneralizedCoords::from_vec(v, creases, mode)?;
        Ok(SubstitutedCoords {
            c1: q.c.first().copied().unwrap_or(0.0),
            dc: q.c.get(1..).unwrap_or_default().to_vec(),
            psi: q.psi,
            mode,
            rotation: q.rotation,
            translation: q.translation,
        })
    }
}
