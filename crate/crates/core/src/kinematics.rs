//! Crease transforms, world-space reconstruction and coordinate gradients.
//!
//! Every element `j` is carried rigidly by the prefix product
//! `P_j = T_0 T_1 ... T_j`, so `x_j = P_j xbar_j`, `y_j = P_j ybar_j` and the
//! element normal is `n_j = P_j nbar`. `T_k` (`1 <= k < n`) rotates by
//! `psi_k` about crease `k`; `T_0` is the identity or the floating frame;
//! `T_n` is the identity.
//!
//! Rotation convention: positive `psi` lifts the downstream part of a
//! straight (`c = 0`) ribbon towards `+z`.

use nalgebra::{Matrix3, Vector4};
use serde::{Deserialize, Serialize};

use crate::model::{FrameMode, GeneralizedCoords, RibbonSpec, RimPoints};
use crate::{Mat4, Result, Vec3};

const NORMAL: Vector4<f64> = Vector4::new(0.0, 0.0, 1.0, 0.0);

/// Rigid transform about crease `index`, with the parameters it came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CreaseTransform {
    pub matrix: Mat4,
    pub index: usize,
    pub slope: f64,
    pub angle: f64,
}

/// Partial derivatives of a crease transform in its slope and angle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CreaseDerivatives {
    pub d_slope: Mat4,
    pub d_angle: Mat4,
}

fn rigid(r: &Matrix3<f64>, t: &Vec3) -> Mat4 {
    let mut m = Mat4::identity();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(r);
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(t);
    m
}

/// Inverse of a rigid homogeneous transform.
pub fn rigid_inverse(m: &Mat4) -> Mat4 {
    let r = m.fixed_view::<3, 3>(0, 0).transpose();
    let t = -(r * m.fixed_view::<3, 1>(0, 3));
    rigid(&r, &t)
}

fn crease_pivot(spec: &RibbonSpec, k: usize) -> f64 {
    spec.length * k as f64 / spec.segments as f64
}

/// Rotation by `psi` about the crease through `(k l / n, 0, 0)` with
/// direction `(c, 1, 0)`.
pub fn crease_transform(spec: &RibbonSpec, k: usize, c: f64, psi: f64) -> CreaseTransform {
    let a = crease_pivot(spec, k);
    let (sn, cs) = psi.sin_cos();
    let s2 = 1.0 + c * c;
    let s = s2.sqrt();
    let r = Matrix3::new(
        (cs + c * c) / s2,
        c * (1.0 - cs) / s2,
        -sn / s,
        c * (1.0 - cs) / s2,
        (1.0 + c * c * cs) / s2,
        c * sn / s,
        sn / s,
        -c * sn / s,
        cs,
    );
    let t = Vec3::new(
        a * (1.0 - cs) / s2,
        -a * c * (1.0 - cs) / s2,
        -a * sn / s,
    );
    CreaseTransform {
        matrix: rigid(&r, &t),
        index: k,
        slope: c,
        angle: psi,
    }
}

/// Closed-form partials of [`crease_transform`].
pub fn crease_derivatives(spec: &RibbonSpec, k: usize, c: f64, psi: f64) -> CreaseDerivatives {
    let a = crease_pivot(spec, k);
    let (sn, cs) = psi.sin_cos();
    let s2 = 1.0 + c * c;
    let s = s2.sqrt();
    let s4 = s2 * s2;
    let s3 = s2 * s;
    let omc = 1.0 - cs;

    let mut d_angle = Mat4::zeros();
    d_angle.fixed_view_mut::<3, 3>(0, 0).copy_from(&Matrix3::new(
        -sn / s2,
        c * sn / s2,
        -cs / s,
        c * sn / s2,
        -c * c * sn / s2,
        c * cs / s,
        cs / s,
        -c * cs / s,
        -sn,
    ));
    d_angle
        .fixed_view_mut::<3, 1>(0, 3)
        .copy_from(&Vec3::new(a * sn / s2, -a * c * sn / s2, -a * cs / s));

    let mut d_slope = Mat4::zeros();
    d_slope.fixed_view_mut::<3, 3>(0, 0).copy_from(&Matrix3::new(
        2.0 * c * omc / s4,
        omc * (1.0 - c * c) / s4,
        sn * c / s3,
        omc * (1.0 - c * c) / s4,
        -2.0 * c * omc / s4,
        sn / s3,
        -sn * c / s3,
        -sn / s3,
        0.0,
    ));
    d_slope.fixed_view_mut::<3, 1>(0, 3).copy_from(&Vec3::new(
        -2.0 * a * c * omc / s4,
        -a * omc * (1.0 - c * c) / s4,
        a * sn * c / s3,
    ));
    CreaseDerivatives { d_slope, d_angle }
}

fn skew(v: &Vec3) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Rotation matrix `exp([w]x)`.
pub fn rotation_exp(w: &Vec3) -> Matrix3<f64> {
    nalgebra::Rotation3::from_scaled_axis(*w).into_inner()
}

/// Left Jacobian of SO(3): `exp(w + d) ~ exp([J d]x) exp(w)`.
fn left_jacobian(w: &Vec3) -> Matrix3<f64> {
    let th2 = w.norm_squared();
    let th = th2.sqrt();
    let (a, b) = if th < 1e-4 {
        (
            0.5 - th2 / 24.0 + th2 * th2 / 720.0,
            1.0 / 6.0 - th2 / 120.0 + th2 * th2 / 5040.0,
        )
    } else {
        ((1.0 - th.cos()) / th2, (th - th.sin()) / (th2 * th))
    };
    let k = skew(w);
    Matrix3::identity() + k * a + k * k * b
}

/// Floating frame `T_0 = [exp(w) t; 0 1]`.
pub fn global_frame(w: &Vec3, t: &Vec3) -> Mat4 {
    rigid(&rotation_exp(w), t)
}

/// `dT_0/dw_i` for `i = 0..3`. The translation partials are the constant
/// matrices with `e_i` in the last column.
pub fn global_frame_derivatives(w: &Vec3) -> [Mat4; 3] {
    let r = rotation_exp(w);
    let jac = left_jacobian(w);
    std::array::from_fn(|i| {
        let dr = skew(&jac.column(i).into_owned()) * r;
        let mut m = Mat4::zeros();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&dr);
        m
    })
}

fn translation_derivative(i: usize) -> Mat4 {
    let mut m = Mat4::zeros();
    m[(i, 3)] = 1.0;
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradientMethod {
    #[default]
    Adjoint,
    ChainRule,
}

/// World-space reconstruction of one ribbon together with the cached
/// transform chain shared by both gradient routines.
#[derive(Debug, Clone)]
pub struct ReconState {
    pub coords: GeneralizedCoords,
    pub material: RimPoints,
    /// `x_0..x_n`.
    pub bottom: Vec<Vec3>,
    /// `y_0..y_n`.
    pub top: Vec<Vec3>,
    /// `n_0..n_{n-1}`, one per element.
    pub normals: Vec<Vec3>,
    /// `T_0..T_n`.
    pub transforms: Vec<Mat4>,
    /// `P_j = T_0 ... T_j` for `j = 0..=n`.
    pub prefix: Vec<Mat4>,
}

impl ReconState {
    pub fn segments(&self) -> usize {
        self.normals.len()
    }

    /// Worst relative mismatch between world and material lengths over every
    /// quad edge and diagonal.
    pub fn isometry_error(&self) -> f64 {
        let mb = &self.material.bottom;
        let mt = &self.material.top;
        let m3 = |v: &Vector4<f64>| v.xyz();
        let mut worst = 0.0f64;
        let mut cmp = |a: Vec3, b: Vec3, ma: Vec3, mb: Vec3| {
            let lw = (a - b).norm();
            let lm = (ma - mb).norm();
            worst = worst.max((lw - lm).abs() / lm);
        };
        for j in 0..=self.segments() {
            cmp(self.bottom[j], self.top[j], m3(&mb[j]), m3(&mt[j]));
            if j < self.segments() {
                let k = j + 1;
                cmp(self.bottom[j], self.bottom[k], m3(&mb[j]), m3(&mb[k]));
                cmp(self.top[j], self.top[k], m3(&mt[j]), m3(&mt[k]));
                cmp(self.bottom[j], self.top[k], m3(&mb[j]), m3(&mt[k]));
                cmp(self.top[j], self.bottom[k], m3(&mt[j]), m3(&mb[k]));
            }
        }
        worst
    }
}

/// Reconstructs rim vertices and element normals of a feasible `q`.
pub fn reconstruct(spec: &RibbonSpec, q: &GeneralizedCoords) -> Result<ReconState> {
    q.check(spec)?;
    Ok(reconstruct_unchecked(spec, q))
}

/// Same as [`reconstruct`] without the feasibility check; the formulas are
/// defined for any slopes, which the optimizer relies on while a general
/// constraint is transiently violated.
pub fn reconstruct_unchecked(spec: &RibbonSpec, q: &GeneralizedCoords) -> ReconState {
    let n = spec.segments;
    let material = spec.material_rim_positions_unchecked(&q.c);
    let mut transforms = Vec::with_capacity(n + 1);
    transforms.push(match q.mode {
        FrameMode::Fixed => Mat4::identity(),
        FrameMode::Floating => global_frame(&q.rotation, &q.translation),
    });
    for k in 1..n {
        transforms.push(crease_transform(spec, k, q.c[k - 1], q.psi[k - 1]).matrix);
    }
    transforms.push(Mat4::identity());

    let mut prefix = Vec::with_capacity(n + 1);
    let mut acc = Mat4::identity();
    for t in &transforms {
        acc *= t;
        prefix.push(acc);
    }
    let bottom = (0..=n).map(|j| (prefix[j] * material.bottom[j]).xyz()).collect();
    let top = (0..=n).map(|j| (prefix[j] * material.top[j]).xyz()).collect();
    let normals = (0..n).map(|j| (prefix[j] * NORMAL).xyz()).collect();
    ReconState {
        coords: q.clone(),
        material,
        bottom,
        top,
        normals,
        transforms,
        prefix,
    }
}

/// `df/dX` and `df/dN` for one ribbon.
#[derive(Debug, Clone, PartialEq)]
pub struct Cotangents {
    pub bottom: Vec<Vec3>,
    pub top: Vec<Vec3>,
    pub normals: Vec<Vec3>,
}

impl Cotangents {
    pub fn zeros(spec: &RibbonSpec) -> Self {
        Cotangents {
            bottom: vec![Vec3::zeros(); spec.rim_vertices()],
            top: vec![Vec3::zeros(); spec.rim_vertices()],
            normals: vec![Vec3::zeros(); spec.segments],
        }
    }

    pub fn is_zero(&self) -> bool {
        self.bottom
            .iter()
            .chain(&self.top)
            .chain(&self.normals)
            .all(|v| *v == Vec3::zeros())
    }
}

/// Gradient in generalized coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordGradient {
    pub c: Vec<f64>,
    pub psi: Vec<f64>,
    pub rotation: Vec3,
    pub translation: Vec3,
}

impl CoordGradient {
    pub fn zeros(creases: usize) -> Self {
        CoordGradient {
            c: vec![0.0; creases],
            psi: vec![0.0; creases],
            rotation: Vec3::zeros(),
            translation: Vec3::zeros(),
        }
    }

    /// Stacked in the same layout as [`GeneralizedCoords::to_vec`].
    pub fn to_vec(&self, mode: FrameMode) -> Vec<f64> {
        let mut v = Vec::with_capacity(2 * self.c.len() + 6);
        v.extend_from_slice(&self.c);
        v.extend_from_slice(&self.psi);
        if mode == FrameMode::Floating {
            v.extend(self.rotation.iter());
            v.extend(self.translation.iter());
        }
        v
    }

    pub fn is_finite(&self) -> bool {
        self.c
            .iter()
            .chain(&self.psi)
            .chain(self.rotation.iter())
            .chain(self.translation.iter())
            .all(|v| v.is_finite())
    }
}

fn homog(v: &Vec3) -> Vector4<f64> {
    Vector4::new(v.x, v.y, v.z, 0.0)
}

fn material_slope_partial(spec: &RibbonSpec) -> (Vector4<f64>, Vector4<f64>) {
    let h = 0.5 * spec.width;
    (Vector4::new(-h, 0.0, 0.0, 0.0), Vector4::new(h, 0.0, 0.0, 0.0))
}

/// Contribution of element `j`'s cotangents as a 4x4 matrix
/// `dx_j xbar_j^T + dy_j ybar_j^T + dn_j nbar^T`.
fn element_cotangent(recon: &ReconState, cot: &Cotangents, j: usize) -> Mat4 {
    let mut g = homog(&cot.bottom[j]) * recon.material.bottom[j].transpose()
        + homog(&cot.top[j]) * recon.material.top[j].transpose();
    if j < cot.normals.len() {
        g += homog(&cot.normals[j]) * NORMAL.transpose();
    }
    g
}

/// Contracts `d(P_j)` against element `j`'s cotangents.
fn contract(m: &Mat4, recon: &ReconState, cot: &Cotangents, j: usize) -> f64 {
    let mut acc = cot.bottom[j].dot(&(m * recon.material.bottom[j]).xyz())
        + cot.top[j].dot(&(m * recon.material.top[j]).xyz());
    if j < cot.normals.len() {
        acc += cot.normals[j].dot(&(m * NORMAL).xyz());
    }
    acc
}

/// Straightforward chain rule: for every coordinate, differentiate every
/// downstream vertex. Quadratic in the segment count.
pub fn gradient_chain_rule(
    spec: &RibbonSpec,
    recon: &ReconState,
    cot: &Cotangents,
    direct: &CoordGradient,
) -> CoordGradient {
    let n = spec.segments;
    let q = &recon.coords;
    let mut g = direct.clone();
    let (dxb, dyb) = material_slope_partial(spec);

    for k in 1..n {
        let d = crease_derivatives(spec, k, q.c[k - 1], q.psi[k - 1]);
        let mut mc = recon.prefix[k - 1] * d.d_slope;
        let mut mp = recon.prefix[k - 1] * d.d_angle;
        for j in k..=n {
            if j > k {
                mc *= recon.transforms[j];
                mp *= recon.transforms[j];
            }
            g.c[k - 1] += contract(&mc, recon, cot, j);
            g.psi[k - 1] += contract(&mp, recon, cot, j);
        }
        g.c[k - 1] += cot.bottom[k].dot(&(recon.prefix[k] * dxb).xyz())
            + cot.top[k].dot(&(recon.prefix[k] * dyb).xyz());
    }

    if q.mode == FrameMode::Floating {
        let dr = global_frame_derivatives(&q.rotation);
        for i in 0..3 {
            let dt = translation_derivative(i);
            let mut suffix = Mat4::identity();
            for j in 0..=n {
                if j > 0 {
                    suffix *= recon.transforms[j];
                }
                g.rotation[i] += contract(&(dr[i] * suffix), recon, cot, j);
                g.translation[i] += contract(&(dt * suffix), recon, cot, j);
            }
        }
    }
    g
}

/// Reverse sweep over the cached transform chain; linear in the segment
/// count.
///
/// The adjoint matrix after visiting element `j` is
/// `A_j = P_{j-1}^T sum_{i >= j} G_i (T_{j+1} ... T_i)^T`, updated as
/// `A_j = T_j^{-T} A_{j+1} T_{j+1}^T + P_{j-1}^T G_j`; the coordinate partials
/// are the Frobenius products `A_j : dT_j`.
pub fn gradient_adjoint(
    spec: &RibbonSpec,
    recon: &ReconState,
    cot: &Cotangents,
    direct: &CoordGradient,
) -> CoordGradient {
    let n = spec.segments;
    let q = &recon.coords;
    let mut g = direct.clone();
    let (dxb, dyb) = material_slope_partial(spec);
    let mut adj = Mat4::zeros();

    for j in (0..=n).rev() {
        if j < n {
            let inv_t = rigid_inverse(&recon.transforms[j]).transpose();
            adj = inv_t * adj * recon.transforms[j + 1].transpose();
        }
        let gj = element_cotangent(recon, cot, j);
        if j == 0 {
            adj += gj;
        } else {
            adj += recon.prefix[j - 1].transpose() * gj;
        }

        if (1..n).contains(&j) {
            let d = crease_derivatives(spec, j, q.c[j - 1], q.psi[j - 1]);
            g.c[j - 1] += cot.bottom[j].dot(&(recon.prefix[j] * dxb).xyz())
                + cot.top[j].dot(&(recon.prefix[j] * dyb).xyz())
                + adj.dot(&d.d_slope);
            g.psi[j - 1] += adj.dot(&d.d_angle);
        }
    }

    if q.mode == FrameMode::Floating {
        let dr = global_frame_derivatives(&q.rotation);
        for i in 0..3 {
            g.rotation[i] += adj.dot(&dr[i]);
            g.translation[i] += adj.dot(&translation_derivative(i));
        }
    }
    g
}

pub fn gradient(
    method: GradientMethod,
    spec: &RibbonSpec,
    recon: &ReconState,
    cot: &Cotangents,
    direct: &CoordGradient,
) -> CoordGradient {
    match method {
        GradientMethod::Adjoint => gradient_adjoint(spec, recon, cot, direct),
        GradientMethod::ChainRule => gradient_chain_rule(spec, recon, cot, direct),
    }
}
