//! User constraints and guiding energies.
//!
//! Every constraint is a list of 3-vector rows `r = sum_k s_k f_k - target`,
//! where each `f_k` is a rim position or an element normal of some ribbon.
//! Hard constraints require `r = 0` (handled by the augmented Lagrangian as
//! two opposing inequalities per component); soft ones add `K/2 |r|^2`.

use serde::{Deserialize, Serialize};

use crate::kinematics::{Cotangents, ReconState};
use crate::model::{RibbonSpec, Rim};
use crate::{Error, Result, Vec3};

/// One rim vertex of one ribbon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VertexRef {
    pub ribbon: usize,
    pub rim: Rim,
    pub index: usize,
}

impl VertexRef {
    pub fn new(ribbon: usize, rim: Rim, index: usize) -> Self {
        VertexRef { ribbon, rim, index }
    }
}

/// Rotation of a target direction about a fixed axis at a constant rate,
/// saturating at `limit` radians when given.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spin {
    pub axis: [f64; 3],
    pub rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limit: Option<f64>,
}

impl Spin {
    pub fn angle(&self, time: f64) -> f64 {
        let a = self.rate * time;
        match self.limit {
            Some(l) if a.abs() > l.abs() => l.abs() * a.signum(),
            _ => a,
        }
    }

    pub fn apply(&self, v: &Vec3, time: f64) -> Vec3 {
        let axis = nalgebra::Unit::new_normalize(Vec3::from(self.axis));
        nalgebra::Rotation3::from_axis_angle(&axis, self.angle(time)) * v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Constraint {
    /// Closes a ribbon into a band; non-orientable bands swap the rims.
    Loop {
        ribbon: usize,
        orientable: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        stiffness: Option<f64>,
    },
    /// Holds a rim vertex at `target + velocity * min(t, until)`.
    Pin {
        vertex: VertexRef,
        target: [f64; 3],
        #[serde(default, skip_serializing_if = "is_zero3")]
        velocity: [f64; 3],
        #[serde(default, skip_serializing_if = "Option::is_none")]
        until: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        stiffness: Option<f64>,
    },
    /// Attracts the normal of one element toward a (possibly spinning) target.
    NormalGuide {
        ribbon: usize,
        element: usize,
        target: [f64; 3],
        strength: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        spin: Option<Spin>,
    },
    /// Joins two rim vertices, possibly of different ribbons.
    Link {
        a: VertexRef,
        b: VertexRef,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        stiffness: Option<f64>,
    },
}

fn is_zero3(v: &[f64; 3]) -> bool {
    v.iter().all(|&x| x == 0.0)
}

/// A world-space quantity a row can refer to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    Point { ribbon: usize, rim: Rim, index: usize },
    Normal { ribbon: usize, element: usize },
}

impl Field {
    fn ribbon(&self) -> usize {
        match *self {
            Field::Point { ribbon, .. } | Field::Normal { ribbon, .. } => ribbon,
        }
    }

    fn with_ribbon(self, r: usize) -> Self {
        match self {
            Field::Point { rim, index, .. } => Field::Point { ribbon: r, rim, index },
            Field::Normal { element, .. } => Field::Normal { ribbon: r, element },
        }
    }

    fn eval(&self, recons: &[ReconState]) -> Vec3 {
        match *self {
            Field::Point { ribbon, rim: Rim::Bottom, index } => recons[ribbon].bottom[index],
            Field::Point { ribbon, rim: Rim::Top, index } => recons[ribbon].top[index],
            Field::Normal { ribbon, element } => recons[ribbon].normals[element],
        }
    }

    fn slot<'a>(&self, cots: &'a mut [Cotangents]) -> &'a mut Vec3 {
        match *self {
            Field::Point { ribbon, rim: Rim::Bottom, index } => &mut cots[ribbon].bottom[index],
            Field::Point { ribbon, rim: Rim::Top, index } => &mut cots[ribbon].top[index],
            Field::Normal { ribbon, element } => &mut cots[ribbon].normals[element],
        }
    }
}

/// `sum_k s_k f_k - target`.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub terms: Vec<(f64, Field)>,
    pub target: Vec3,
}

impl Row {
    pub fn eval(&self, recons: &[ReconState]) -> Vec3 {
        self.terms
            .iter()
            .fold(-self.target, |acc, (s, f)| acc + f.eval(recons) * *s)
    }

    /// Adds `J^T g` for a cotangent `g` of this row's residual.
    pub fn pullback(&self, g: &Vec3, cots: &mut [Cotangents]) {
        for (s, f) in &self.terms {
            *f.slot(cots) += g * *s;
        }
    }

    pub fn ribbons(&self) -> impl Iterator<Item = usize> + '_ {
        self.terms.iter().map(|(_, f)| f.ribbon())
    }

    pub fn remap(&self, map: impl Fn(usize) -> usize) -> Row {
        Row {
            terms: self.terms.iter().map(|&(s, f)| (s, f.with_ribbon(map(f.ribbon())))).collect(),
            target: self.target,
        }
    }
}

/// Rows of one constraint at a given time, with its stiffness (`None` = hard).
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub rows: Vec<Row>,
    pub stiffness: Option<f64>,
}

impl Instance {
    pub fn residual(&self, recons: &[ReconState]) -> Vec<f64> {
        self.rows
            .iter()
            .flat_map(|r| {
                let v = r.eval(recons);
                [v.x, v.y, v.z]
            })
            .collect()
    }

    /// Soft energy `K/2 |r|^2`, adding its partials to `cots`.
    pub fn energy(&self, recons: &[ReconState], cots: &mut [Cotangents]) -> f64 {
        let k = self.stiffness.unwrap_or(0.0);
        let mut e = 0.0;
        for row in &self.rows {
            let r = row.eval(recons);
            e += 0.5 * k * r.norm_squared();
            row.pullback(&(r * k), cots);
        }
        e
    }

    pub fn remap(&self, map: impl Fn(usize) -> usize + Copy) -> Instance {
        Instance {
            rows: self.rows.iter().map(|r| r.remap(map)).collect(),
            stiffness: self.stiffness,
        }
    }
}

impl Constraint {
    pub fn is_hard(&self) -> bool {
        match self {
            Constraint::Loop { stiffness, .. }
            | Constraint::Pin { stiffness, .. }
            | Constraint::Link { stiffness, .. } => stiffness.is_none(),
            Constraint::NormalGuide { .. } => false,
        }
    }

    /// Ribbons this constraint couples.
    pub fn ribbons(&self) -> Vec<usize> {
        match self {
            Constraint::Loop { ribbon, .. } | Constraint::NormalGuide { ribbon, .. } => vec![*ribbon],
            Constraint::Pin { vertex, .. } => vec![vertex.ribbon],
            Constraint::Link { a, b, .. } => vec![a.ribbon, b.ribbon],
        }
    }

    /// Checks ribbon ids, vertex and element indices, and strengths.
    pub fn validate(&self, specs: &[RibbonSpec]) -> Result<()> {
        let spec = |r: usize| {
            specs
                .get(r)
                .ok_or_else(|| Error::Selector(format!("ribbon {r} does not exist ({} ribbons)", specs.len())))
        };
        let vertex = |v: &VertexRef| -> Result<()> {
            let s = spec(v.ribbon)?;
            if v.index > s.segments {
                return Err(Error::Selector(format!(
                    "vertex {} of ribbon {} (last vertex is {})",
                    v.index, v.ribbon, s.segments
                )));
            }
            Ok(())
        };
        let stiff = |k: &Option<f64>| -> Result<()> {
            match k {
                Some(k) if !(*k >= 0.0) => Err(Error::Scene(format!("negative stiffness {k}"))),
                _ => Ok(()),
            }
        };
        match self {
            Constraint::Loop { ribbon, stiffness, .. } => {
                spec(*ribbon)?;
                stiff(stiffness)
            }
            Constraint::Pin { vertex: v, stiffness, .. } => {
                vertex(v)?;
                stiff(stiffness)
            }
            Constraint::Link { a, b, stiffness } => {
                vertex(a)?;
                vertex(b)?;
                stiff(stiffness)
            }
            Constraint::NormalGuide { ribbon, element, target, strength, .. } => {
                let s = spec(*ribbon)?;
                if *element >= s.segments {
                    return Err(Error::Selector(format!(
                        "element {element} of ribbon {ribbon} (last element is {})",
                        s.segments - 1
                    )));
                }
                if !(*strength >= 0.0) {
                    return Err(Error::Scene(format!("negative normal-guide strength {strength}")));
                }
                if (Vec3::from(*target).norm() - 1.0).abs() > 1e-9 {
                    return Err(Error::Scene("normal-guide target must be a unit vector".into()));
                }
                Ok(())
            }
        }
    }

    /// Rows at time `time`. Assumes [`Constraint::validate`] passed.
    pub fn instance(&self, specs: &[RibbonSpec], time: f64) -> Instance {
        let point = |v: &VertexRef| Field::Point { ribbon: v.ribbon, rim: v.rim, index: v.index };
        match self {
            Constraint::Loop { ribbon, orientable, stiffness } => {
                let r = *ribbon;
                let n = specs[r].segments;
                let p = |rim, index| Field::Point { ribbon: r, rim, index };
                let (end_b, end_t, sign) = if *orientable {
                    (Rim::Bottom, Rim::Top, -1.0)
                } else {
                    (Rim::Top, Rim::Bottom, 1.0)
                };
                Instance {
                    rows: vec![
                        Row { terms: vec![(1.0, p(Rim::Bottom, 0)), (-1.0, p(end_b, n))], target: Vec3::zeros() },
                        Row { terms: vec![(1.0, p(Rim::Top, 0)), (-1.0, p(end_t, n))], target: Vec3::zeros() },
                        Row {
                            terms: vec![
                                (1.0, Field::Normal { ribbon: r, element: 0 }),
                                (sign, Field::Normal { ribbon: r, element: n - 1 }),
                            ],
                            target: Vec3::zeros(),
                        },
                    ],
                    stiffness: *stiffness,
                }
            }
            Constraint::Pin { vertex, target, velocity, until, stiffness } => {
                let t = until.map_or(time, |u| time.min(u));
                Instance {
                    rows: vec![Row {
                        terms: vec![(1.0, point(vertex))],
                        target: Vec3::from(*target) + Vec3::from(*velocity) * t,
                    }],
                    stiffness: *stiffness,
                }
            }
            Constraint::NormalGuide { ribbon, element, target, strength, spin } => {
                let n0 = Vec3::from(*target);
                Instance {
                    rows: vec![Row {
                        terms: vec![(1.0, Field::Normal { ribbon: *ribbon, element: *element })],
                        target: spin.map_or(n0, |s| s.apply(&n0, time)),
                    }],
                    stiffness: Some(*strength),
                }
            }
            Constraint::Link { a, b, stiffness } => Instance {
                rows: vec![Row { terms: vec![(1.0, point(a)), (-1.0, point(b))], target: Vec3::zeros() }],
                stiffness: *stiffness,
            },
        }
    }
}

/// The 9 loop-closure residual components of one ribbon.
pub fn loop_residual(recon: &ReconState, orientable: bool) -> [f64; 9] {
    let n = recon.segments();
    let (a, b, s) = if orientable {
        (recon.bottom[n], recon.top[n], -1.0)
    } else {
        (recon.top[n], recon.bottom[n], 1.0)
    };
    let r = [
        recon.bottom[0] - a,
        recon.top[0] - b,
        recon.normals[0] + recon.normals[n - 1] * s,
    ];
    let mut out = [0.0; 9];
    for (i, v) in r.iter().enumerate() {
        out[3 * i..3 * i + 3].copy_from_slice(v.as_slice());
    }
    out
}

/// `K/2 |n_j - n0|^2` and its partial in `n_j`.
pub fn normal_guide_energy(recon: &ReconState, element: usize, target: &Vec3, strength: f64) -> (f64, Vec3) {
    let d = recon.normals[element] - target;
    (0.5 * strength * d.norm_squared(), d * strength)
}

/// `K/2 |x - p|^2` for one rim vertex.
pub fn pin_energy(recon: &ReconState, rim: Rim, index: usize, target: &Vec3, stiffness: f64) -> Result<f64> {
    Ok(0.5 * stiffness * pin_residual(recon, rim, index, target)?.norm_squared())
}

pub fn pin_residual(recon: &ReconState, rim: Rim, index: usize, target: &Vec3) -> Result<Vec3> {
    let pts = match rim {
        Rim::Bottom => &recon.bottom,
        Rim::Top => &recon.top,
    };
    pts.get(index)
        .map(|x| x - target)
        .ok_or_else(|| Error::Selector(format!("vertex {index} (last vertex is {})", pts.len() - 1)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::{gradient, reconstruct, CoordGradient, GradientMethod};
    use crate::model::{FrameMode, GeneralizedCoords};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn flat_ribbon_loop_residual_is_end_gap() {
        let s = RibbonSpec::new(1.0, 0.05, 10).unwrap();
        let r = reconstruct(&s, &GeneralizedCoords::flat(&s, FrameMode::Fixed)).unwrap();
        let res = loop_residual(&r, true);
        assert!((Vec3::new(res[0], res[1], res[2]).norm() - 1.0).abs() < 1e-14);
        assert!((Vec3::new(res[3], res[4], res[5]).norm() - 1.0).abs() < 1e-14);
        assert!(res[6..].iter().all(|&v| v == 0.0));
    }

    /// Closed square band with the seam in the middle of a side: four
    /// quarter folds at straight creases.
    fn square_band() -> (RibbonSpec, ReconState) {
        let s = RibbonSpec::new(1.0, 0.05, 8).unwrap();
        let mut q = GeneralizedCoords::flat(&s, FrameMode::Fixed);
        for k in [1, 3, 5, 7] {
            q.psi[k - 1] = PI / 2.0;
        }
        (s, reconstruct(&s, &q).unwrap())
    }

    #[test]
    fn hand_built_band_closes() {
        let (_, r) = square_band();
        assert!(loop_residual(&r, true).iter().all(|v| v.abs() < 1e-12));
        let non = loop_residual(&r, false);
        assert!(non.iter().map(|v| v * v).sum::<f64>() > 1e-3);
    }

    #[test]
    fn instance_rows_agree_with_direct_residual() {
        let (s, r) = square_band();
        for orientable in [true, false] {
            let c = Constraint::Loop { ribbon: 0, orientable, stiffness: None };
            let inst = c.instance(&[s], 0.0);
            let res = inst.residual(std::slice::from_ref(&r));
            assert_eq!(res.as_slice(), loop_residual(&r, orientable).as_slice());
        }
    }

    #[test]
    fn normal_guide_examples() {
        let s = RibbonSpec::new(1.0, 0.05, 4).unwrap();
        let r = reconstruct(&s, &GeneralizedCoords::flat(&s, FrameMode::Fixed)).unwrap();
        let (e, g) = normal_guide_energy(&r, 2, &Vec3::z(), 3.0);
        assert_eq!((e, g), (0.0, Vec3::zeros()));
        let (e, _) = normal_guide_energy(&r, 2, &-Vec3::z(), 3.0);
        assert!((e - 6.0).abs() < 1e-14);
    }

    #[test]
    fn pin_examples() {
        let s = RibbonSpec::new(1.0, 0.05, 4).unwrap();
        let r = reconstruct(&s, &GeneralizedCoords::flat(&s, FrameMode::Fixed)).unwrap();
        let x = r.bottom[4];
        assert_eq!(pin_energy(&r, Rim::Bottom, 4, &x, 2.0).unwrap(), 0.0);
        let e = pin_energy(&r, Rim::Bottom, 4, &(x + Vec3::y()), 2.0).unwrap();
        assert!((e - 1.0).abs() < 1e-14);
        assert!(matches!(pin_residual(&r, Rim::Top, 5, &x), Err(Error::Selector(_))));
    }

    #[test]
    fn validation_catches_bad_selectors() {
        let specs = [RibbonSpec::new(1.0, 0.05, 4).unwrap()];
        let bad = [
            Constraint::Loop { ribbon: 1, orientable: true, stiffness: None },
            Constraint::Link {
                a: VertexRef::new(0, Rim::Top, 5),
                b: VertexRef::new(0, Rim::Top, 0),
                stiffness: None,
            },
            Constraint::NormalGuide { ribbon: 0, element: 4, target: [0.0, 0.0, 1.0], strength: 1.0, spin: None },
            Constraint::NormalGuide { ribbon: 0, element: 0, target: [0.0, 0.0, 2.0], strength: 1.0, spin: None },
        ];
        for c in bad {
            assert!(c.validate(&specs).is_err(), "{c:?}");
        }
    }

    #[test]
    fn moving_pin_and_spin_schedules() {
        let specs = [RibbonSpec::new(1.0, 0.05, 4).unwrap()];
        let pin = Constraint::Pin {
            vertex: VertexRef::new(0, Rim::Bottom, 4),
            target: [1.0, 0.0, 0.0],
            velocity: [0.0, 2.0, 0.0],
            until: Some(0.5),
            stiffness: None,
        };
        assert_eq!(pin.instance(&specs, 0.25).rows[0].target, Vec3::new(1.0, 0.5, 0.0));
        assert_eq!(pin.instance(&specs, 3.0).rows[0].target, Vec3::new(1.0, 1.0, 0.0));
        let spin = Spin { axis: [1.0, 0.0, 0.0], rate: PI, limit: Some(4.0 * PI) };
        assert!((spin.apply(&Vec3::z(), 0.5) - (-Vec3::y())).norm() < 1e-15);
        assert_eq!(spin.angle(10.0), 4.0 * PI);
    }

    #[test]
    fn constraint_gradients_match_finite_differences() {
        let s = RibbonSpec::new(1.0, 0.1, 7).unwrap();
        let specs = [s, s];
        let cons = [
            Constraint::Loop { ribbon: 0, orientable: false, stiffness: Some(3.0) },
            Constraint::Link {
                a: VertexRef::new(0, Rim::Top, 7),
                b: VertexRef::new(1, Rim::Bottom, 2),
                stiffness: Some(2.0),
            },
            Constraint::NormalGuide {
                ribbon: 1,
                element: 5,
                target: [0.0, 0.6, 0.8],
                strength: 1.5,
                spin: Some(Spin { axis: [1.0, 1.0, 0.0], rate: 1.0, limit: None }),
            },
            Constraint::Pin {
                vertex: VertexRef::new(1, Rim::Top, 3),
                target: [0.2, 0.3, 0.1],
                velocity: [0.0; 3],
                until: None,
                stiffness: Some(4.0),
            },
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mode = FrameMode::Floating;
        let mut qs: Vec<GeneralizedCoords> = (0..2)
            .map(|_| {
                let mut q = GeneralizedCoords::flat(&s, mode);
                q.c = s.random_feasible_creases(&mut rng).iter().map(|c| 0.7 * c).collect();
                q.psi = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
                q.rotation = Vec3::new(rng.gen(), rng.gen(), rng.gen());
                q.translation = Vec3::new(rng.gen(), rng.gen(), rng.gen());
                q
            })
            .collect();
        let energy = |qs: &[GeneralizedCoords]| {
            let recons: Vec<_> = qs.iter().map(|q| reconstruct(&s, q).unwrap()).collect();
            let mut cots = vec![Cotangents::zeros(&s), Cotangents::zeros(&s)];
            let e: f64 = cons.iter().map(|c| c.instance(&specs, 0.7).energy(&recons, &mut cots)).sum();
            let grads: Vec<Vec<f64>> = recons
                .iter()
                .zip(&cots)
                .map(|(r, c)| gradient(GradientMethod::Adjoint, &s, r, c, &CoordGradient::zeros(6)).to_vec(mode))
                .collect();
            (e, grads)
        };
        let (_, g) = energy(&qs);
        let h = 1e-6;
        for rib in 0..2 {
            let base = qs[rib].to_vec();
            for i in 0..base.len() {
                let mut f = |d: f64| {
                    let mut v = base.clone();
                    v[i] += d;
                    qs[rib] = GeneralizedCoords::from_vec(&v, 6, mode).unwrap();
                    energy(&qs).0
                };
                let fd = (f(h) - f(-h)) / (2.0 * h);
                assert!((fd - g[rib][i]).abs() < 1e-5 * g[rib][i].abs().max(1.0), "{rib} {i}: {fd} {}", g[rib][i]);
            }
            qs[rib] = GeneralizedCoords::from_vec(&base, 6, mode).unwrap();
        }
    }

    #[test]
    fn serde_round_trip() {
        let c = Constraint::Pin {
            vertex: VertexRef::new(2, Rim::Top, 3),
            target: [0.0, 1.0, 2.0],
            velocity: [0.0; 3],
            until: None,
            stiffness: Some(1.0),
        };
        #[derive(Serialize, Deserialize)]
        struct W {
            c: Vec<Constraint>,
        }
        let text = toml::to_string(&W { c: vec![c.clone()] }).unwrap();
        let back: W = toml::from_str(&text).unwrap();
        assert_eq!(back.c, vec![c]);
    }
}
