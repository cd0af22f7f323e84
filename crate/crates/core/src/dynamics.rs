//! Kinetic and potential energies of one ribbon and the per-step objective.
//!
//! The kinetic term compares the new rim positions with the previous frame
//! *resampled at the new material coordinates*: changing crease slopes
//! slides the rim vertices along the rims in material space, so the old and
//! new vertex lists do not describe the same material points.

use nalgebra::Matrix4;
use serde::{Deserialize, Serialize};

use crate::kinematics::{
    gradient, reconstruct_unchecked, CoordGradient, Cotangents, GradientMethod, ReconState,
};
use crate::model::{GeneralizedCoords, RibbonSpec, Rim, RimField};
use crate::{Error, Result, Vec3};

/// Local vertex order of an element block: `x_e, y_e, x_{e+1}, y_{e+1}`.
const LOCAL: [(Rim, usize); 4] = [(Rim::Bottom, 0), (Rim::Top, 0), (Rim::Bottom, 1), (Rim::Top, 1)];

/// Scalar 4x4 mass pattern of a bilinear element whose bottom rim is
/// shortened and top rim lengthened by `w dc / 2`. The full 12x12 block is
/// this pattern tensored with the 3x3 identity. Not scaled by density.
pub fn element_mass(spec: &RibbonSpec, dc: f64) -> Matrix4<f64> {
    let (l, w, n) = (spec.length, spec.width, spec.segments as f64);
    let lo = (-dc * n * w * w + 4.0 * l * w) / (36.0 * n);
    let hi = (dc * n * w * w + 4.0 * l * w) / (36.0 * n);
    let side = l * w / (18.0 * n);
    let far = l * w / (36.0 * n);
    Matrix4::new(
        lo, side, lo / 2.0, far, //
        side, hi, far, hi / 2.0, //
        lo / 2.0, far, lo, side, //
        far, hi / 2.0, side, hi,
    )
}

/// `d element_mass / d dc`; constant in `dc`.
pub fn element_mass_derivative(spec: &RibbonSpec) -> Matrix4<f64> {
    let w2 = spec.width * spec.width;
    let a = w2 / 36.0;
    let b = w2 / 72.0;
    Matrix4::new(
        -a, 0.0, -b, 0.0, //
        0.0, a, 0.0, b, //
        -b, 0.0, -a, 0.0, //
        0.0, b, 0.0, a,
    )
}

/// Per-element mass blocks of one ribbon at crease slopes `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct MassMatrix {
    pub blocks: Vec<Matrix4<f64>>,
}

pub fn mass_blocks(spec: &RibbonSpec, c: &[f64]) -> MassMatrix {
    MassMatrix {
        blocks: (0..spec.segments)
            .map(|e| element_mass(spec, spec.padded_crease(c, e + 1) - spec.padded_crease(c, e)))
            .collect(),
    }
}

impl MassMatrix {
    /// Sum of every pattern entry: the strip area.
    pub fn total(&self) -> f64 {
        self.blocks.iter().map(|b| b.sum()).sum()
    }

    /// Dense scalar matrix over rim vertices, bottom vertex `j` at row `2j`
    /// and top vertex `j` at row `2j + 1`.
    pub fn assemble(&self) -> nalgebra::DMatrix<f64> {
        let n = self.blocks.len();
        let mut m = nalgebra::DMatrix::zeros(2 * (n + 1), 2 * (n + 1));
        for (e, b) in self.blocks.iter().enumerate() {
            for a in 0..4 {
                for c in 0..4 {
                    m[(global(e, a), global(e, c))] += b[(a, c)];
                }
            }
        }
        m
    }

    /// `M v` for a per-vertex field.
    pub fn apply(&self, v: &RimField) -> RimField {
        let mut out = RimField::zeros(v.len());
        for (e, b) in self.blocks.iter().enumerate() {
            for (a, &(ra, oa)) in LOCAL.iter().enumerate() {
                let mut acc = Vec3::zeros();
                for (c, &(rc, oc)) in LOCAL.iter().enumerate() {
                    acc += v.get(rc, e + oc) * b[(a, c)];
                }
                *out.get_mut(ra, e + oa) += acc;
            }
        }
        out
    }

    /// `v^T M v` for a per-vertex field.
    pub fn norm_squared(&self, v: &RimField) -> f64 {
        let mv = self.apply(v);
        v.iter().zip(mv.iter()).map(|(a, b)| a.dot(b)).sum()
    }
}

fn global(e: usize, local: usize) -> usize {
    let (rim, off) = LOCAL[local];
    2 * (e + off) + usize::from(rim == Rim::Top)
}

/// Piecewise-linear interpolation along one rim, over strictly increasing
/// material coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Resampler {
    coords: Vec<f64>,
}

/// Interpolation segment and weight of a query coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stencil {
    pub segment: usize,
    pub weight: f64,
    /// `1 / (u_{m+1} - u_m)`, the derivative of `weight` in the query.
    pub inv_len: f64,
}

impl Resampler {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        check_increasing(&coords)?;
        Ok(Resampler { coords })
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// Segment `m` with `u_m < u <= u_{m+1}`; a query on a knot takes the
    /// segment to its left. Queries outside the range extrapolate linearly.
    pub fn locate(&self, u: f64) -> Stencil {
        let last = self.coords.len() - 2;
        let m = self.coords.partition_point(|&v| v < u).saturating_sub(1).min(last);
        let inv_len = 1.0 / (self.coords[m + 1] - self.coords[m]);
        Stencil {
            segment: m,
            weight: (u - self.coords[m]) * inv_len,
            inv_len,
        }
    }

    pub fn eval(&self, s: &Stencil, values: &[Vec3]) -> Vec3 {
        values[s.segment] * (1.0 - s.weight) + values[s.segment + 1] * s.weight
    }

    /// Derivative of the interpolant in the query coordinate.
    pub fn slope(&self, s: &Stencil, values: &[Vec3]) -> Vec3 {
        (values[s.segment + 1] - values[s.segment]) * s.inv_len
    }

    pub fn sample(&self, u: f64, values: &[Vec3]) -> Vec3 {
        self.eval(&self.locate(u), values)
    }
}

fn check_increasing(u: &[f64]) -> Result<()> {
    if u.len() < 2 {
        return Err(Error::Dimension {
            what: "resampling coordinates",
            expected: 2,
            got: u.len(),
        });
    }
    match u.windows(2).position(|w| !(w[1] > w[0])) {
        Some(i) => Err(Error::NonMonotone(i + 1)),
        None => Ok(()),
    }
}

/// Values of a piecewise-linear field (`source_values` at `source`)
/// at the `target` coordinates.
pub fn resample(target: &[f64], source: &[f64], source_values: &[Vec3]) -> Result<Vec<Vec3>> {
    check_increasing(target)?;
    if source_values.len() != source.len() {
        return Err(Error::Dimension {
            what: "resampled values",
            expected: source.len(),
            got: source_values.len(),
        });
    }
    let r = Resampler::new(source.to_vec())?;
    Ok(target.iter().map(|&u| r.sample(u, source_values)).collect())
}

/// `alpha * n w (1 + c^2) psi^2 / l + beta c^2`, summed over creases, with its
/// partials in `c` and `psi`.
pub fn crease_energy(spec: &RibbonSpec, c: &[f64], psi: &[f64]) -> (f64, f64, Vec<f64>, Vec<f64>) {
    let k = spec.segments as f64 * spec.width / spec.length;
    let (mut bend, mut reg) = (0.0, 0.0);
    let mut dc = Vec::with_capacity(c.len());
    let mut dpsi = Vec::with_capacity(c.len());
    for (&ci, &pi) in c.iter().zip(psi) {
        bend += spec.bending * k * (1.0 + ci * ci) * pi * pi;
        reg += spec.regularizer * ci * ci;
        dc.push(2.0 * spec.bending * k * ci * pi * pi + 2.0 * spec.regularizer * ci);
        dpsi.push(2.0 * spec.bending * k * (1.0 + ci * ci) * pi);
    }
    (bend, reg, dc, dpsi)
}

/// Bending energy of a single crease, without the stiffness factor.
pub fn crease_bending(spec: &RibbonSpec, c: f64, psi: f64) -> f64 {
    spec.segments as f64 * spec.width * (1.0 + c * c) * psi * psi / spec.length
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KineticMode {
    /// Consistent mass with material-space resampling.
    #[default]
    Full,
    /// Mass lumped onto the centerline, no resampling.
    Lumped,
}

/// Previous-frame data of one ribbon.
#[derive(Debug, Clone, PartialEq)]
pub struct RibbonFrame {
    pub positions: RimField,
    pub velocities: RimField,
    /// Crease slopes that define the material coordinates of `positions`.
    pub creases: Vec<f64>,
}

/// Objective data for one ribbon over one timestep.
#[derive(Debug, Clone)]
pub struct StepProblem {
    pub spec: RibbonSpec,
    pub prev: RibbonFrame,
    pub h: f64,
    pub gravity: Vec3,
    /// `None` drops the kinetic term, leaving the statics problem `min V`.
    pub kinetic: Option<KineticMode>,
    bottom: Resampler,
    top: Resampler,
}

/// Energy terms of one evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EnergyBreakdown {
    pub kinetic: f64,
    pub gravity: f64,
    pub bending: f64,
    pub regularizer: f64,
    /// Soft constraints and guiding energies.
    pub user: f64,
}

impl EnergyBreakdown {
    pub fn potential(&self) -> f64 {
        self.gravity + self.bending + self.regularizer + self.user
    }

    pub fn total(&self) -> f64 {
        self.kinetic + self.potential()
    }
}

impl std::ops::AddAssign for EnergyBreakdown {
    fn add_assign(&mut self, o: Self) {
        self.kinetic += o.kinetic;
        self.gravity += o.gravity;
        self.bending += o.bending;
        self.regularizer += o.regularizer;
        self.user += o.user;
    }
}

/// Objective value with its gradient in generalized coordinates.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub value: f64,
    pub energy: EnergyBreakdown,
    pub gradient: CoordGradient,
}

impl StepProblem {
    pub fn new(
        spec: RibbonSpec,
        prev: RibbonFrame,
        h: f64,
        gravity: Vec3,
        kinetic: Option<KineticMode>,
    ) -> Result<Self> {
        if !(h > 0.0) {
            return Err(Error::Solver(format!("timestep must be positive, got {h}")));
        }
        let nv = spec.rim_vertices();
        for (what, f) in [("positions", &prev.positions), ("velocities", &prev.velocities)] {
            if f.bottom.len() != nv || f.top.len() != nv {
                return Err(Error::Dimension {
                    what,
                    expected: nv,
                    got: f.bottom.len().min(f.top.len()),
                });
            }
        }
        let (ub, ut) = spec.rim_coords(&prev.creases);
        Ok(StepProblem {
            spec,
            prev,
            h,
            gravity,
            kinetic,
            bottom: Resampler::new(ub)?,
            top: Resampler::new(ut)?,
        })
    }

    /// Statics problem (`min V`) at the given configuration's frame data.
    pub fn statics(spec: RibbonSpec, prev: RibbonFrame, gravity: Vec3) -> Result<Self> {
        Self::new(spec, prev, 1.0, gravity, None)
    }

    fn resampler(&self, rim: Rim) -> &Resampler {
        match rim {
            Rim::Bottom => &self.bottom,
            Rim::Top => &self.top,
        }
    }

    /// Adds this ribbon's energy partials to `cot` (world-space) and
    /// `direct` (explicit dependence on `c`, `psi`) and returns the energies.
    pub fn accumulate(
        &self,
        recon: &ReconState,
        cot: &mut Cotangents,
        direct: &mut CoordGradient,
    ) -> EnergyBreakdown {
        let spec = &self.spec;
        let q = &recon.coords;
        let mass = mass_blocks(spec, &q.c);
        let dmass = element_mass_derivative(spec);
        let mut out = EnergyBreakdown::default();

        // slope partial through an element's dc = c_{e+1} - c_e
        let mut add_dc = |direct: &mut CoordGradient, e: usize, v: f64| {
            if e + 1 < spec.segments {
                direct.c[e] += v;
            }
            if e >= 1 {
                direct.c[e - 1] -= v;
            }
        };

        match self.kinetic {
            Some(KineticMode::Full) => {
                out.kinetic = self.full_kinetic(recon, &mass, &dmass, cot, direct, &mut add_dc)
            }
            Some(KineticMode::Lumped) => out.kinetic = self.lumped_kinetic(recon, cot),
            None => {}
        }

        // V_grav = -rho g^T M X
        let rho = spec.density;
        let pos = |rim: Rim, j: usize| match rim {
            Rim::Bottom => recon.bottom[j],
            Rim::Top => recon.top[j],
        };
        for (e, b) in mass.blocks.iter().enumerate() {
            let mut dv = 0.0;
            for (a, &(rim, off)) in LOCAL.iter().enumerate() {
                let col: f64 = b.column(a).sum();
                let dcol: f64 = dmass.column(a).sum();
                let gx = self.gravity.dot(&pos(rim, e + off));
                out.gravity -= rho * col * gx;
                dv -= rho * dcol * gx;
                let g = -self.gravity * (rho * col);
                match rim {
                    Rim::Bottom => cot.bottom[e + off] += g,
                    Rim::Top => cot.top[e + off] += g,
                }
            }
            add_dc(direct, e, dv);
        }

        let (bend, reg, dc, dpsi) = crease_energy(spec, &q.c, &q.psi);
        out.bending = bend;
        out.regularizer = reg;
        for (d, v) in direct.c.iter_mut().zip(dc) {
            *d += v;
        }
        for (d, v) in direct.psi.iter_mut().zip(dpsi) {
            *d += v;
        }
        out
    }

    fn full_kinetic(
        &self,
        recon: &ReconState,
        mass: &MassMatrix,
        dmass: &Matrix4<f64>,
        cot: &mut Cotangents,
        direct: &mut CoordGradient,
        add_dc: &mut impl FnMut(&mut CoordGradient, usize, f64),
    ) -> f64 {
        let spec = &self.spec;
        let h = self.h;
        let (ub, ut) = spec.rim_coords(&recon.coords.c);
        let mut residual = RimField::zeros(spec.rim_vertices());
        // d residual / d u at every vertex
        let mut du = RimField::zeros(spec.rim_vertices());
        for (rim, coords, cur) in [(Rim::Bottom, &ub, &recon.bottom), (Rim::Top, &ut, &recon.top)] {
            let r = self.resampler(rim);
            let xs = self.prev.positions.rim(rim);
            let vs = self.prev.velocities.rim(rim);
            for (j, &u) in coords.iter().enumerate() {
                let s = r.locate(u);
                *residual.get_mut(rim, j) = (cur[j] - r.eval(&s, xs)) / h - r.eval(&s, vs);
                *du.get_mut(rim, j) = -r.slope(&s, xs) / h - r.slope(&s, vs);
            }
        }
        let rho = spec.density;
        let mut weighted = mass.apply(&residual);
        weighted.iter_mut().for_each(|v| *v *= rho);
        let value = 0.5
            * residual
                .iter()
                .zip(weighted.iter())
                .map(|(a, b)| a.dot(b))
                .sum::<f64>();

        for j in 0..spec.rim_vertices() {
            cot.bottom[j] += weighted.bottom[j] / h;
            cot.top[j] += weighted.top[j] / h;
        }
        let half = 0.5 * spec.width;
        for j in 1..spec.segments {
            direct.c[j - 1] += weighted.bottom[j].dot(&du.bottom[j]) * (-half)
                + weighted.top[j].dot(&du.top[j]) * half;
        }
        for e in 0..spec.segments {
            let mut s = 0.0;
            for (a, &(ra, oa)) in LOCAL.iter().enumerate() {
                for (c, &(rc, oc)) in LOCAL.iter().enumerate() {
                    s += dmass[(a, c)] * residual.get(ra, e + oa).dot(&residual.get(rc, e + oc));
                }
            }
            add_dc(direct, e, 0.5 * rho * s);
        }
        value
    }

    fn lumped_kinetic(&self, recon: &ReconState, cot: &mut Cotangents) -> f64 {
        let spec = &self.spec;
        let h = self.h;
        let (xp, vp) = (&self.prev.positions, &self.prev.velocities);
        let mut value = 0.0;
        for i in 0..spec.rim_vertices() {
            let m = lumped_mass(spec, i);
            let e = (recon.bottom[i] + recon.top[i] - xp.bottom[i] - xp.top[i]) / (2.0 * h)
                - (vp.bottom[i] + vp.top[i]) / 2.0;
            value += 0.5 * m * e.norm_squared();
            let g = e * (m / (2.0 * h));
            cot.bottom[i] += g;
            cot.top[i] += g;
        }
        value
    }

    /// Objective value and gradient at `q`, with no user terms.
    pub fn objective(&self, q: &GeneralizedCoords, method: GradientMethod) -> Evaluation {
        let recon = reconstruct_unchecked(&self.spec, q);
        let mut cot = Cotangents::zeros(&self.spec);
        let mut direct = CoordGradient::zeros(self.spec.creases());
        let energy = self.accumulate(&recon, &mut cot, &mut direct);
        Evaluation {
            value: energy.total(),
            energy,
            gradient: gradient(method, &self.spec, &recon, &cot, &direct),
        }
    }

    /// Velocity after the step: the displacement from the previous frame,
    /// resampled at the new material coordinates, over `h`.
    pub fn update_velocity(&self, next: &RimField, next_creases: &[f64]) -> RimField {
        update_velocity(
            &self.spec,
            next,
            next_creases,
            &self.prev.positions,
            [&self.bottom, &self.top],
            self.h,
        )
    }
}

fn update_velocity(
    spec: &RibbonSpec,
    next: &RimField,
    next_creases: &[f64],
    prev: &RimField,
    resamplers: [&Resampler; 2],
    h: f64,
) -> RimField {
    let (ub, ut) = spec.rim_coords(next_creases);
    let [rb, rt] = resamplers;
    RimField {
        bottom: ub
            .iter()
            .zip(&next.bottom)
            .map(|(&u, x)| (x - rb.sample(u, &prev.bottom)) / h)
            .collect(),
        top: ut
            .iter()
            .zip(&next.top)
            .map(|(&u, x)| (x - rt.sample(u, &prev.top)) / h)
            .collect(),
    }
}

/// Centerline mass of vertex `i` in the lumped model: each element's
/// `rho l w / n` split evenly between its two centerline vertices.
pub fn lumped_mass(spec: &RibbonSpec, i: usize) -> f64 {
    let m = spec.density * spec.area() / spec.segments as f64;
    if i == 0 || i == spec.segments {
        0.5 * m
    } else {
        m
    }
}

/// `rho/2 v^T M v` under the consistent mass at slopes `c`.
pub fn kinetic_energy(spec: &RibbonSpec, c: &[f64], v: &RimField) -> f64 {
    0.5 * spec.density * mass_blocks(spec, c).norm_squared(v)
}

/// `-rho g^T M x` at slopes `c`.
pub fn gravity_energy(spec: &RibbonSpec, c: &[f64], x: &RimField, g: &Vec3) -> f64 {
    let gx = RimField {
        bottom: x.bottom.iter().map(|p| Vec3::new(g.dot(p), 0.0, 0.0)).collect(),
        top: x.top.iter().map(|p| Vec3::new(g.dot(p), 0.0, 0.0)).collect(),
    };
    let ones = RimField {
        bottom: vec![Vec3::x(); x.len()],
        top: vec![Vec3::x(); x.len()],
    };
    let mg = mass_blocks(spec, c).apply(&gx);
    -spec.density * ones.iter().zip(mg.iter()).map(|(a, b)| a.dot(b)).sum::<f64>()
}
