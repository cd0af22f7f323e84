//! Contact handling after the per-ribbon solves.
//!
//! The predicted rim positions are triangulated, proximity pairs closer than
//! a thickness `delta` are linearized into `C x >= d`, and the positions are
//! moved to the closest point (under an edge-stiffened metric) satisfying all
//! of them. The QP is solved in its dual, a nonnegative QP over the contact
//! multipliers, with a primal-feasible active-set method.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::model::{RibbonSpec, Rim, RimField};
use crate::Vec3;

/// Analytic obstacle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Collider {
    /// Half-space `normal . x >= offset`; `normal` is normalized on use.
    Plane { normal: [f64; 3], offset: f64 },
    Sphere { center: [f64; 3], radius: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CollisionConfig {
    pub enabled: bool,
    /// Proximity thickness; defaults to a tenth of the narrowest ribbon.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub thickness: Option<f64>,
    /// Edge stiffness `K` of the closeness energy.
    pub stiffness: f64,
    pub self_collision: bool,
    pub inter_ribbon: bool,
    /// Detect/resolve passes per frame.
    pub rounds: usize,
    pub colliders: Vec<Collider>,
}

impl Default for CollisionConfig {
    fn default() -> Self {
        CollisionConfig {
            enabled: true,
            thickness: None,
            stiffness: 1e2,
            self_collision: true,
            inter_ribbon: true,
            rounds: 3,
            colliders: Vec::new(),
        }
    }
}

impl CollisionConfig {
    pub fn thickness_for(&self, specs: &[RibbonSpec]) -> f64 {
        self.thickness
            .unwrap_or_else(|| specs.iter().map(|s| s.width).fold(f64::INFINITY, f64::min) / 10.0)
    }
}

/// Triangulated strip of one ribbon. Vertex `2j` is `x_j`, `2j + 1` is `y_j`;
/// each quad is split along `x_j -> y_{j+1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct RibbonMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[usize; 3]>,
    pub edges: Vec<[usize; 2]>,
    /// Material-space `(u, v)` of each vertex.
    pub material: Vec<[f64; 2]>,
    /// The two ends are joined (a closed band), so column distance wraps.
    pub closed: bool,
}

pub fn vertex_index(rim: Rim, j: usize) -> usize {
    2 * j + usize::from(rim == Rim::Top)
}

/// Column (rim vertex index `j`) of a mesh vertex.
fn column(v: usize) -> usize {
    v / 2
}

pub fn build_mesh(spec: &RibbonSpec, positions: &RimField, creases: &[f64]) -> RibbonMesh {
    let n = spec.segments;
    let mut vertices = Vec::with_capacity(2 * (n + 1));
    for j in 0..=n {
        vertices.push(positions.bottom[j]);
        vertices.push(positions.top[j]);
    }
    let mat = spec.material_rim_positions_unchecked(creases);
    let material = (0..=n)
        .flat_map(|j| [[mat.bottom[j].x, mat.bottom[j].y], [mat.top[j].x, mat.top[j].y]])
        .collect();
    let mut triangles = Vec::with_capacity(2 * n);
    let mut edges = Vec::with_capacity(5 * n + 1);
    for j in 0..n {
        let (x0, y0, x1, y1) = (2 * j, 2 * j + 1, 2 * j + 2, 2 * j + 3);
        triangles.push([x0, x1, y1]);
        triangles.push([x0, y1, y0]);
        edges.extend([[x0, y0], [x0, x1], [y0, y1], [x0, y1]]);
    }
    edges.push([2 * n, 2 * n + 1]);
    RibbonMesh {
        vertices,
        triangles,
        edges,
        material,
        closed: false,
    }
}

impl RibbonMesh {
    pub fn columns(&self) -> usize {
        self.vertices.len() / 2
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        let (a, b, c) = (self.vertices[a], self.vertices[b], self.vertices[c]);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    pub fn edge_length(&self, e: usize) -> f64 {
        let [a, b] = self.edges[e];
        (self.vertices[a] - self.vertices[b]).norm()
    }

    pub fn rim_field(&self) -> RimField {
        RimField {
            bottom: self.vertices.iter().step_by(2).copied().collect(),
            top: self.vertices.iter().skip(1).step_by(2).copied().collect(),
        }
    }

    /// Column distance, wrapping around for closed bands.
    fn column_gap(&self, a: usize, b: usize) -> usize {
        let d = a.abs_diff(b);
        if self.closed {
            d.min(self.columns() - 1 - d.min(self.columns() - 1))
        } else {
            d
        }
    }

    /// Column-range distance between two primitives of this mesh.
    fn near(&self, a: &[usize], b: &[usize]) -> bool {
        a.iter().any(|&p| b.iter().any(|&q| self.column_gap(column(p), column(q)) <= 1))
    }
}

/// Worst relative change of any edge length between two meshes of the same
/// topology.
pub fn max_edge_deviation(before: &RibbonMesh, after: &RibbonMesh) -> f64 {
    (0..before.edges.len())
        .map(|e| (after.edge_length(e) - before.edge_length(e)).abs() / before.edge_length(e))
        .fold(0.0, f64::max)
}

/// Worst relative change of triangle aspect ratio (longest edge squared over
/// area) between two meshes of the same topology.
pub fn max_triangle_distortion(before: &RibbonMesh, after: &RibbonMesh) -> f64 {
    let aspect = |m: &RibbonMesh, t: usize| {
        let [a, b, c] = m.triangles[t];
        let (a, b, c) = (m.vertices[a], m.vertices[b], m.vertices[c]);
        let longest = (b - a).norm_squared().max((c - b).norm_squared()).max((a - c).norm_squared());
        longest / (0.5 * (b - a).cross(&(c - a)).norm())
    };
    (0..before.triangles.len())
        .map(|t| (aspect(after, t) / aspect(before, t) - 1.0).abs())
        .fold(0.0, f64::max)
}

/// Mesh vertex in the global numbering over all ribbons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GlobalVertex {
    pub ribbon: usize,
    pub vertex: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ContactKind {
    VertexTriangle,
    EdgeEdge,
    Collider(usize),
}

/// Linearized contact `sum_k w_k normal . x_k >= offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct Contact {
    pub kind: ContactKind,
    pub terms: Vec<(GlobalVertex, f64)>,
    pub normal: Vec3,
    pub offset: f64,
}

impl Contact {
    pub fn value(&self, meshes: &[RibbonMesh]) -> f64 {
        self.terms
            .iter()
            .map(|(v, w)| w * self.normal.dot(&meshes[v.ribbon].vertices[v.vertex]))
            .sum::<f64>()
            - self.offset
    }

    /// Identity of the contact independent of its numeric data.
    pub fn key(&self) -> (ContactKind, Vec<GlobalVertex>) {
        let mut v: Vec<GlobalVertex> = self.terms.iter().map(|t| t.0).collect();
        v.sort();
        (self.kind, v)
    }
}

/// Closest point on triangle `abc` to `p`, as barycentric weights.
pub fn closest_on_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> [f64; 3] {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return [1.0, 0.0, 0.0];
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return [0.0, 1.0, 0.0];
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return [1.0 - v, v, 0.0];
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return [0.0, 0.0, 1.0];
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return [1.0 - w, 0.0, w];
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return [0.0, 1.0 - w, w];
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    [1.0 - v - w, v, w]
}

/// Parameters `(s, t)` of the closest points `p0 + s (p1 - p0)` and
/// `q0 + t (q1 - q0)` of two segments.
pub fn closest_between_segments(p0: &Vec3, p1: &Vec3, q0: &Vec3, q1: &Vec3) -> (f64, f64) {
    let d1 = p1 - p0;
    let d2 = q1 - q0;
    let r = p0 - q0;
    let a = d1.norm_squared();
    let e = d2.norm_squared();
    let f = d2.dot(&r);
    let eps = 1e-300;
    if a <= eps && e <= eps {
        return (0.0, 0.0);
    }
    if a <= eps {
        return (0.0, (f / e).clamp(0.0, 1.0));
    }
    let c = d1.dot(&r);
    if e <= eps {
        return ((-c / a).clamp(0.0, 1.0), 0.0);
    }
    let b = d1.dot(&d2);
    let denom = a * e - b * b;
    let mut s = if denom > 1e-14 * a * e { ((b * f - c * e) / denom).clamp(0.0, 1.0) } else { 0.0 };
    let mut t = (b * s + f) / e;
    if t < 0.0 {
        t = 0.0;
        s = (-c / a).clamp(0.0, 1.0);
    } else if t > 1.0 {
        t = 1.0;
        s = ((b - c) / a).clamp(0.0, 1.0);
    }
    (s, t)
}

#[derive(Debug, Clone, Copy)]
struct Aabb {
    lo: Vec3,
    hi: Vec3,
}

impl Aabb {
    fn of(points: impl IntoIterator<Item = Vec3>, pad: f64) -> Self {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for p in points {
            lo = lo.inf(&p);
            hi = hi.sup(&p);
        }
        Aabb {
            lo: lo - Vec3::repeat(pad),
            hi: hi + Vec3::repeat(pad),
        }
    }

    fn merge(&self, o: &Aabb) -> Aabb {
        Aabb {
            lo: self.lo.inf(&o.lo),
            hi: self.hi.sup(&o.hi),
        }
    }

    fn overlaps(&self, o: &Aabb) -> bool {
        (0..3).all(|i| self.lo[i] <= o.hi[i] && o.lo[i] <= self.hi[i])
    }
}

/// Bounding-box hierarchy over primitive boxes, split at the median of the
/// longest axis.
struct Bvh {
    nodes: Vec<BvhNode>,
}

enum BvhNode {
    Leaf { bounds: Aabb, item: usize },
    Inner { bounds: Aabb, left: usize, right: usize },
}

impl Bvh {
    fn new(boxes: &[Aabb]) -> Self {
        let mut bvh = Bvh { nodes: Vec::with_capacity(2 * boxes.len()) };
        let mut items: Vec<usize> = (0..boxes.len()).collect();
        if !items.is_empty() {
            bvh.build(boxes, &mut items);
        }
        bvh
    }

    fn bounds(&self, i: usize) -> &Aabb {
        match &self.nodes[i] {
            BvhNode::Leaf { bounds, .. } | BvhNode::Inner { bounds, .. } => bounds,
        }
    }

    fn build(&mut self, boxes: &[Aabb], items: &mut [usize]) -> usize {
        if items.len() == 1 {
            self.nodes.push(BvhNode::Leaf { bounds: boxes[items[0]], item: items[0] });
            return self.nodes.len() - 1;
        }
        let all = items.iter().skip(1).fold(boxes[items[0]], |b, &i| b.merge(&boxes[i]));
        let ext = all.hi - all.lo;
        let axis = ext.imax();
        let centre = |i: usize| boxes[i].lo[axis] + boxes[i].hi[axis];
        items.sort_by(|&a, &b| centre(a).total_cmp(&centre(b)).then(a.cmp(&b)));
        let mid = items.len() / 2;
        let (l, r) = items.split_at_mut(mid);
        let left = self.build(boxes, l);
        let right = self.build(boxes, r);
        self.nodes.push(BvhNode::Inner { bounds: all, left, right });
        self.nodes.len() - 1
    }

    fn query(&self, q: &Aabb, out: &mut Vec<usize>) {
        if self.nodes.is_empty() {
            return;
        }
        let mut stack = vec![self.nodes.len() - 1];
        while let Some(i) = stack.pop() {
            if !self.bounds(i).overlaps(q) {
                continue;
            }
            match &self.nodes[i] {
                BvhNode::Leaf { item, .. } => out.push(*item),
                BvhNode::Inner { left, right, .. } => {
                    stack.push(*left);
                    stack.push(*right);
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BroadPhase {
    Hierarchy,
    BruteForce,
}

/// Orientation for a pair whose current separation `cur` may be zero or
/// crossed: the previous-frame separation decides the side.
fn contact_normal(cur: &Vec3, prev: &Vec3, fallback: &Vec3) -> Option<Vec3> {
    let base = if cur.norm() > 1e-12 { *cur } else if prev.norm() > 1e-12 { *prev } else { *fallback };
    let n = base.try_normalize(1e-300)?;
    if prev.dot(&n) < 0.0 {
        Some(-n)
    } else {
        Some(n)
    }
}

/// Proximity contacts of `meshes` (current) given the same meshes at the
/// previous frame, which only decide which side each pair should be on.
pub fn detect(
    meshes: &[RibbonMesh],
    previous: &[RibbonMesh],
    config: &CollisionConfig,
    delta: f64,
    broad: BroadPhase,
) -> Vec<Contact> {
    let mut out = Vec::new();
    for (ci, col) in config.colliders.iter().enumerate() {
        for (r, m) in meshes.iter().enumerate() {
            for (v, x) in m.vertices.iter().enumerate() {
                let at = GlobalVertex { ribbon: r, vertex: v };
                match *col {
                    Collider::Plane { normal, offset } => {
                        let raw = Vec3::from(normal);
                        let scale = raw.norm();
                        let n = raw / scale;
                        let d = offset / scale;
                        if n.dot(x) < d + delta {
                            out.push(Contact { kind: ContactKind::Collider(ci), terms: vec![(at, 1.0)], normal: n, offset: d });
                        }
                    }
                    Collider::Sphere { center, radius } => {
                        let c = Vec3::from(center);
                        let d = x - c;
                        if d.norm() < radius + delta {
                            let prev = previous[r].vertices[v] - c;
                            if let Some(n) = contact_normal(&d, &prev, &Vec3::z()) {
                                out.push(Contact {
                                    kind: ContactKind::Collider(ci),
                                    terms: vec![(at, 1.0)],
                                    normal: n,
                                    offset: n.dot(&c) + radius,
                                });
                            }
                        }
                    }
                }
            }
        }
    }

    let mut pairs = Vec::new();
    for a in 0..meshes.len() {
        for b in a..meshes.len() {
            if (a == b && config.self_collision) || (a != b && config.inter_ribbon) {
                pairs.push((a, b));
            }
        }
    }
    for (a, b) in pairs {
        vertex_triangle(meshes, previous, a, b, delta, broad, &mut out);
        if a != b {
            vertex_triangle(meshes, previous, b, a, delta, broad, &mut out);
        }
        edge_edge(meshes, previous, a, b, delta, broad, &mut out);
    }
    out
}

fn candidates(prims: &[Aabb], queries: &[Aabb], broad: BroadPhase) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    match broad {
        BroadPhase::BruteForce => {
            for q in 0..queries.len() {
                for p in 0..prims.len() {
                    out.push((q, p));
                }
            }
        }
        BroadPhase::Hierarchy => {
            let bvh = Bvh::new(prims);
            let mut hits = Vec::new();
            for (q, b) in queries.iter().enumerate() {
                hits.clear();
                bvh.query(b, &mut hits);
                hits.sort_unstable();
                out.extend(hits.iter().map(|&p| (q, p)));
            }
        }
    }
    out
}

/// Vertices of ribbon `a` against triangles of ribbon `b`.
fn vertex_triangle(
    meshes: &[RibbonMesh],
    previous: &[RibbonMesh],
    a: usize,
    b: usize,
    delta: f64,
    broad: BroadPhase,
    out: &mut Vec<Contact>,
) {
    let (ma, mb) = (&meshes[a], &meshes[b]);
    let (pa, pb) = (&previous[a], &previous[b]);
    let tri_boxes: Vec<Aabb> = mb.triangles.iter().map(|t| Aabb::of(t.iter().map(|&i| mb.vertices[i]), delta)).collect();
    let vert_boxes: Vec<Aabb> = ma.vertices.iter().map(|&p| Aabb::of([p], 0.0)).collect();
    for (v, t) in candidates(&tri_boxes, &vert_boxes, broad) {
        let tri = mb.triangles[t];
        if a == b && (tri.contains(&v) || ma.near(&[v], &tri)) {
            continue;
        }
        let p = ma.vertices[v];
        let [x0, x1, x2] = tri.map(|i| mb.vertices[i]);
        let w = closest_on_triangle(&p, &x0, &x1, &x2);
        let q = x0 * w[0] + x1 * w[1] + x2 * w[2];
        let sep = p - q;
        if sep.norm() >= delta {
            continue;
        }
        let [y0, y1, y2] = tri.map(|i| pb.vertices[i]);
        let prev = pa.vertices[v] - (y0 * w[0] + y1 * w[1] + y2 * w[2]);
        let face = (y1 - y0).cross(&(y2 - y0));
        let Some(n) = contact_normal(&sep, &prev, &face) else { continue };
        let mut terms = vec![(GlobalVertex { ribbon: a, vertex: v }, 1.0)];
        for k in 0..3 {
            terms.push((GlobalVertex { ribbon: b, vertex: tri[k] }, -w[k]));
        }
        out.push(Contact { kind: ContactKind::VertexTriangle, terms, normal: n, offset: delta });
    }
}

fn edge_edge(
    meshes: &[RibbonMesh],
    previous: &[RibbonMesh],
    a: usize,
    b: usize,
    delta: f64,
    broad: BroadPhase,
    out: &mut Vec<Contact>,
) {
    let (ma, mb) = (&meshes[a], &meshes[b]);
    let (pa, pb) = (&previous[a], &previous[b]);
    let boxes = |m: &RibbonMesh, pad: f64| -> Vec<Aabb> {
        m.edges.iter().map(|e| Aabb::of(e.iter().map(|&i| m.vertices[i]), pad)).collect()
    };
    let (ba, bb) = (boxes(ma, 0.0), boxes(mb, delta));
    for (i, j) in candidates(&bb, &ba, broad) {
        if a == b && j <= i {
            continue;
        }
        let (ea, eb) = (ma.edges[i], mb.edges[j]);
        if a == b && ma.near(&ea, &eb) {
            continue;
        }
        let (s, t) = closest_between_segments(&ma.vertices[ea[0]], &ma.vertices[ea[1]], &mb.vertices[eb[0]], &mb.vertices[eb[1]]);
        let lerp = |m: &RibbonMesh, e: [usize; 2], u: f64| m.vertices[e[0]] * (1.0 - u) + m.vertices[e[1]] * u;
        let sep = lerp(ma, ea, s) - lerp(mb, eb, t);
        if sep.norm() >= delta {
            continue;
        }
        // endpoint-to-edge proximity is already a vertex-triangle contact
        // unless the closest points are interior to both edges
        if !(s > 0.0 && s < 1.0 && t > 0.0 && t < 1.0) {
            continue;
        }
        let prev = lerp(pa, ea, s) - lerp(pb, eb, t);
        let da = pa.vertices[ea[1]] - pa.vertices[ea[0]];
        let db = pb.vertices[eb[1]] - pb.vertices[eb[0]];
        let Some(n) = contact_normal(&sep, &prev, &da.cross(&db)) else { continue };
        let g = |ribbon, vertex| GlobalVertex { ribbon, vertex };
        out.push(Contact {
            kind: ContactKind::EdgeEdge,
            terms: vec![
                (g(a, ea[0]), 1.0 - s),
                (g(a, ea[1]), s),
                (g(b, eb[0]), -(1.0 - t)),
                (g(b, eb[1]), -t),
            ],
            normal: n,
            offset: delta,
        });
    }
}

/// Scalar `I + K L` over one mesh's vertices, `L` the edge graph Laplacian.
pub fn closeness_hessian(mesh: &RibbonMesh, stiffness: f64) -> DMatrix<f64> {
    let nv = mesh.vertices.len();
    let mut h = DMatrix::identity(nv, nv);
    for &[a, b] in &mesh.edges {
        h[(a, a)] += stiffness;
        h[(b, b)] += stiffness;
        h[(a, b)] -= stiffness;
        h[(b, a)] -= stiffness;
    }
    h
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    /// Corrected vertex positions, one list per mesh.
    pub positions: Vec<Vec<Vec3>>,
    pub multipliers: Vec<f64>,
    pub iterations: usize,
    /// The active-set iteration cycled and the projected Gauss-Seidel
    /// fallback produced the result.
    pub fallback: bool,
}

/// Minimizes `1/2 |X - X~|^2 + K/2 sum_e |(x_a - x_b) - (x~_a - x~_b)|^2`
/// subject to every contact, with `X~` the current mesh vertices.
pub fn resolve(meshes: &[RibbonMesh], contacts: &[Contact], stiffness: f64) -> QpSolution {
    let base: Vec<Vec<Vec3>> = meshes.iter().map(|m| m.vertices.clone()).collect();
    if contacts.is_empty() {
        return QpSolution { positions: base, multipliers: Vec::new(), iterations: 0, fallback: false };
    }
    let factors: Vec<_> = meshes
        .iter()
        .map(|m| closeness_hessian(m, stiffness).cholesky().expect("I + K L is positive definite"))
        .collect();

    // Y_a = H^{-1} C_a^T, stored per ribbon as nv x 3
    let m = contacts.len();
    let responses: Vec<Vec<(usize, DMatrix<f64>)>> = contacts
        .iter()
        .map(|c| {
            let mut ribbons: Vec<usize> = c.terms.iter().map(|t| t.0.ribbon).collect();
            ribbons.sort_unstable();
            ribbons.dedup();
            ribbons
                .into_iter()
                .map(|r| {
                    let nv = meshes[r].vertices.len();
                    let mut rhs = DMatrix::zeros(nv, 3);
                    for (v, w) in c.terms.iter().filter(|t| t.0.ribbon == r) {
                        for k in 0..3 {
                            rhs[(v.vertex, k)] += w * c.normal[k];
                        }
                    }
                    (r, factors[r].solve(&rhs))
                })
                .collect()
        })
        .collect();
    let mut q = DMatrix::zeros(m, m);
    for a in 0..m {
        for b in a..m {
            let mut s = 0.0;
            for (r, y) in &responses[b] {
                for (v, w) in contacts[a].terms.iter().filter(|t| t.0.ribbon == *r) {
                    for k in 0..3 {
                        s += w * contacts[a].normal[k] * y[(v.vertex, k)];
                    }
                }
            }
            q[(a, b)] = s;
            q[(b, a)] = s;
        }
    }
    // C X~ - d < 0 where violated: want C dX >= d - C X~
    let rhs = DVector::from_iterator(m, contacts.iter().map(|c| -c.value(meshes)));
    let (lambda, iterations, fallback) = match nonnegative_qp(&q, &rhs) {
        Some((l, it)) => (l, it, false),
        None => {
            log::warn!("contact QP active set did not terminate; using projected Gauss-Seidel");
            let (l, it) = gauss_seidel_nnqp(&q, &rhs);
            (l, it, true)
        }
    };
    let mut positions = base;
    for (a, resp) in responses.iter().enumerate() {
        if lambda[a] == 0.0 {
            continue;
        }
        for (r, y) in resp {
            for (v, p) in positions[*r].iter_mut().enumerate() {
                *p += Vec3::new(y[(v, 0)], y[(v, 1)], y[(v, 2)]) * lambda[a];
            }
        }
    }
    QpSolution { positions, multipliers: lambda.iter().copied().collect(), iterations, fallback }
}

/// `min 1/2 l^T Q l - l^T b` over `l >= 0` by a primal-feasible active-set
/// method (free set grown one index at a time, smallest index first among
/// violators). Returns `None` if the iteration cap trips.
pub fn nonnegative_qp(q: &DMatrix<f64>, b: &DVector<f64>) -> Option<(DVector<f64>, usize)> {
    let m = b.len();
    let scale = q.diagonal().iter().fold(0.0f64, |a, &v| a.max(v.abs())).max(1e-300);
    let tol = 1e-13 * scale.max(b.amax());
    let mut lambda = DVector::zeros(m);
    let mut free = vec![false; m];
    let cap = 20 * m + 100;
    let mut iterations = 0;
    loop {
        let w = b - q * &lambda;
        // Bland-style entering rule among clearly violated optimality conditions
        let max_w = (0..m).filter(|&i| !free[i]).map(|i| w[i]).fold(0.0, f64::max);
        let Some(enter) = (0..m).find(|&i| !free[i] && w[i] > tol && w[i] >= 1e-3 * max_w) else {
            return Some((lambda, iterations));
        };
        free[enter] = true;
        loop {
            iterations += 1;
            if iterations > cap {
                return None;
            }
            let idx: Vec<usize> = (0..m).filter(|&i| free[i]).collect();
            let z = solve_subsystem(q, b, &idx)?;
            if z.iter().all(|&v| v > 0.0) {
                for (k, &i) in idx.iter().enumerate() {
                    lambda[i] = z[k];
                }
                break;
            }
            let mut alpha = 1.0f64;
            for (k, &i) in idx.iter().enumerate() {
                if z[k] <= 0.0 {
                    let denom = lambda[i] - z[k];
                    if denom > 0.0 {
                        alpha = alpha.min(lambda[i] / denom);
                    }
                }
            }
            for (k, &i) in idx.iter().enumerate() {
                lambda[i] += alpha * (z[k] - lambda[i]);
            }
            for (k, &i) in idx.iter().enumerate() {
                if lambda[i] <= 1e-15 * scale || (z[k] <= 0.0 && alpha < 1.0 && lambda[i] <= tol) {
                    lambda[i] = 0.0;
                    free[i] = false;
                }
            }
            if !free.iter().any(|&f| f) {
                break;
            }
        }
    }
}

fn solve_subsystem(q: &DMatrix<f64>, b: &DVector<f64>, idx: &[usize]) -> Option<Vec<f64>> {
    let k = idx.len();
    let sub = DMatrix::from_fn(k, k, |i, j| q[(idx[i], idx[j])]);
    let rhs = DVector::from_iterator(k, idx.iter().map(|&i| b[i]));
    if let Some(ch) = sub.clone().cholesky() {
        return Some(ch.solve(&rhs).iter().copied().collect());
    }
    // dependent contact rows: minimum-norm solution
    let svd = sub.svd(true, true);
    let x = svd.solve(&rhs, 1e-12 * svd.singular_values.max()).ok()?;
    Some(x.iter().copied().collect())
}

/// Projected Gauss-Seidel on the same nonnegative QP.
pub fn gauss_seidel_nnqp(q: &DMatrix<f64>, b: &DVector<f64>) -> (DVector<f64>, usize) {
    let m = b.len();
    let mut l = DVector::zeros(m);
    for it in 1..=100_000 {
        let mut change = 0.0f64;
        for i in 0..m {
            if q[(i, i)] <= 0.0 {
                continue;
            }
            let r = b[i] - q.row(i).dot(&l.transpose());
            let new = (l[i] + r / q[(i, i)]).max(0.0);
            change = change.max((new - l[i]).abs());
            l[i] = new;
        }
        if change < 1e-14 * l.amax().max(1e-300) {
            return (l, it);
        }
    }
    (l, 100_000)
}

/// Per-frame outcome of [`resolve_contacts`].
#[derive(Debug, Clone, PartialEq)]
pub struct ContactReport {
    pub positions: Vec<RimField>,
    pub contacts: usize,
    pub rounds: usize,
    pub fallback: bool,
    /// Largest remaining violation of any detected contact.
    pub max_violation: f64,
}

/// Detects and resolves contacts for predicted rim positions, re-detecting
/// after each resolve and keeping every contact found so far.
pub fn resolve_contacts(
    specs: &[RibbonSpec],
    predicted: &[RimField],
    creases: &[Vec<f64>],
    previous: &[RimField],
    prev_creases: &[Vec<f64>],
    closed: &[bool],
    config: &CollisionConfig,
) -> ContactReport {
    let delta = config.thickness_for(specs);
    let mesh = |f: &[RimField], c: &[Vec<f64>], r: usize| {
        let mut m = build_mesh(&specs[r], &f[r], &c[r]);
        m.closed = closed[r];
        m
    };
    let tilde: Vec<RibbonMesh> = (0..specs.len()).map(|r| mesh(predicted, creases, r)).collect();
    let prev: Vec<RibbonMesh> = (0..specs.len()).map(|r| mesh(previous, prev_creases, r)).collect();
    let mut contacts: Vec<Contact> = Vec::new();
    let mut current = tilde.clone();
    let mut rounds = 0;
    let mut fallback = false;
    for _ in 0..config.rounds.max(1) {
        let found = detect(&current, &prev, config, delta, BroadPhase::Hierarchy);
        let known: std::collections::HashSet<_> = contacts.iter().map(|c| c.key()).collect();
        let fresh: Vec<Contact> = found.into_iter().filter(|c| !known.contains(&c.key())).collect();
        if fresh.is_empty() {
            break;
        }
        rounds += 1;
        contacts.extend(fresh);
        let sol = resolve(&tilde, &contacts, config.stiffness);
        fallback |= sol.fallback;
        for (m, p) in current.iter_mut().zip(sol.positions) {
            m.vertices = p;
        }
    }
    let max_violation = contacts.iter().map(|c| (-c.value(&current)).max(0.0)).fold(0.0, f64::max);
    ContactReport {
        positions: current.iter().map(|m| m.rim_field()).collect(),
        contacts: contacts.len(),
        rounds,
        fallback,
        max_violation,
    }
}
