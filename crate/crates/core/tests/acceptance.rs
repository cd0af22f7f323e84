//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails. Pass criterion numbers as arguments to run a subset.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector, Matrix4, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ribbon_core::bench::time_gradient;
use ribbon_core::collision::{
    build_mesh, closeness_hessian, detect, max_edge_deviation, max_triangle_distortion, resolve, BroadPhase, Collider,
    CollisionConfig, Contact, ContactKind, GlobalVertex, RibbonMesh,
};
use ribbon_core::constraints::loop_residual;
use ribbon_core::dynamics::{element_mass, kinetic_energy, KineticMode, RibbonFrame, StepProblem};
use ribbon_core::kinematics::{crease_transform, reconstruct, GradientMethod};
use ribbon_core::model::{FrameMode, GeneralizedCoords, RibbonSpec, RimField};
use ribbon_core::presets::preset;
use ribbon_core::solver::{optimize_step, RibbonState, Simulation, SolverConfig, UnitProblem};
use ribbon_core::Vec3;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn random_coords(spec: &RibbonSpec, mode: FrameMode, rng: &mut ChaCha8Rng) -> GeneralizedCoords {
    let mut q = GeneralizedCoords::flat(spec, mode);
    q.c = spec.random_feasible_creases(rng);
    q.psi = (0..spec.creases()).map(|_| rng.gen_range(-3.0..3.0)).collect();
    if mode == FrameMode::Floating {
        q.rotation = Vec3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        q.translation = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    }
    q
}

fn rim(r: &ribbon_core::kinematics::ReconState) -> RimField {
    RimField { bottom: r.bottom.clone(), top: r.top.clone() }
}

fn material_mesh(spec: &RibbonSpec, c: &[f64]) -> RibbonMesh {
    let m = spec.material_rim_positions(c).unwrap();
    let field = RimField {
        bottom: m.bottom.iter().map(|v| v.xyz()).collect(),
        top: m.top.iter().map(|v| v.xyz()).collect(),
    };
    build_mesh(spec, &field, c)
}

/// Relative mismatch of every quad edge and both diagonals against the
/// material-space quad, computed from scratch.
fn developability_error(spec: &RibbonSpec, q: &GeneralizedCoords, world: &RimField) -> f64 {
    let m = spec.material_rim_positions(&q.c).unwrap();
    let mut worst = 0.0f64;
    for j in 0..spec.segments {
        let wq = [world.bottom[j], world.top[j], world.bottom[j + 1], world.top[j + 1]];
        let mq = [m.bottom[j].xyz(), m.top[j].xyz(), m.bottom[j + 1].xyz(), m.top[j + 1].xyz()];
        for (a, b) in [(0, 1), (2, 3), (0, 2), (1, 3), (0, 3), (1, 2)] {
            let lm = (mq[a] - mq[b]).norm();
            worst = worst.max(((wq[a] - wq[b]).norm() - lm).abs() / lm);
        }
    }
    worst
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    let mut count = 0;
    for n in [2, 10, 50] {
        let spec = RibbonSpec::new(1.0, 0.05, n).unwrap();
        for mode in [FrameMode::Fixed, FrameMode::Floating] {
            for _ in 0..1000 {
                let q = random_coords(&spec, mode, &mut rng);
                let r = reconstruct(&spec, &q).unwrap();
                worst = worst.max(developability_error(&spec, &q, &rim(&r)));
                count += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(worst <= 1e-9 && secs < 10.0, format!("{count} configurations, worst relative length error {worst:.2e}, {secs:.2}s"))
}

fn random_step_problem(spec: RibbonSpec, mode: FrameMode, rng: &mut ChaCha8Rng) -> (StepProblem, GeneralizedCoords) {
    let prev_q = random_coords(&spec, mode, rng);
    let r = reconstruct(&spec, &prev_q).unwrap();
    let mut v = || Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    let nv = spec.rim_vertices();
    let prev = RibbonFrame {
        positions: rim(&r),
        velocities: RimField { bottom: (0..nv).map(|_| v()).collect(), top: (0..nv).map(|_| v()).collect() },
        creases: prev_q.c.clone(),
    };
    let p = StepProblem::new(spec, prev, 0.01, Vec3::new(0.0, 0.0, -9.8), Some(KineticMode::Full)).unwrap();
    let mut q = prev_q;
    // a nearby configuration, with slopes kept off the previous knots
    q.c.iter_mut().for_each(|c| *c *= 0.9);
    q.psi.iter_mut().for_each(|p| *p += rng.gen_range(-0.1..0.1));
    q.rotation += Vec3::new(0.01, -0.02, 0.01);
    (p, q)
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let spec = RibbonSpec::new(1.0, 0.05, 12).unwrap();
    let mut agree = 0.0f64;
    let mut fd_err = 0.0f64;
    for i in 0..100 {
        let mode = if i % 2 == 0 { FrameMode::Fixed } else { FrameMode::Floating };
        let (p, q) = random_step_problem(spec, mode, &mut rng);
        let a = p.objective(&q, GradientMethod::Adjoint).gradient.to_vec(mode);
        let b = p.objective(&q, GradientMethod::ChainRule).gradient.to_vec(mode);
        let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        agree = agree.max(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale);
        if i < 20 {
            let x = q.to_vec();
            let h = 1e-6;
            for (g, method) in [(&a, GradientMethod::Adjoint), (&b, GradientMethod::ChainRule)] {
                let mut worst = 0.0f64;
                for k in 0..x.len() {
                    let eval = |d: f64| {
                        let mut y = x.clone();
                        y[k] += d;
                        let qy = GeneralizedCoords::from_vec(&y, spec.creases(), mode).unwrap();
                        p.objective(&qy, method).value
                    };
                    let fd = (eval(h) - eval(-h)) / (2.0 * h);
                    worst = worst.max((fd - g[k]).abs());
                }
                fd_err = fd_err.max(worst / scale);
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        agree <= 1e-12 && fd_err <= 1e-5 && secs < 30.0,
        format!("adjoint vs chain rule {agree:.2e} (100 states), vs central differences {fd_err:.2e} (20 states), {secs:.2}s"),
    )
}

fn criterion_3() -> Outcome {
    let budget = Duration::from_millis(300);
    let t = |m, n| time_gradient(m, n, budget).unwrap().0;
    let (a100, a400) = (t(GradientMethod::Adjoint, 100), t(GradientMethod::Adjoint, 400));
    let (c100, c400) = (t(GradientMethod::ChainRule, 100), t(GradientMethod::ChainRule, 400));
    let (ra, rc) = (a400 / a100, c400 / c100);
    outcome(
        rc >= 10.0 && ra <= 6.0,
        format!("n=100->400 time ratio: chain rule {rc:.1}, adjoint {ra:.1} (adjoint {:.1}us / {:.1}us)", a100 * 1e6, a400 * 1e6),
    )
}

/// `int N_i N_j dA` over the bilinear element by 4x4 Gauss-Legendre.
fn quadrature_mass(spec: &RibbonSpec, c0: f64, c1: f64) -> Matrix4<f64> {
    let seg = spec.segment_length();
    let hw = 0.5 * spec.width;
    let p = [(-hw * c0, -hw), (hw * c0, hw), (seg - hw * c1, -hw), (seg + hw * c1, hw)];
    let (a, b) = ((3.0 / 7.0 - 2.0 / 7.0 * (6.0f64 / 5.0).sqrt()).sqrt(), (3.0 / 7.0 + 2.0 / 7.0 * (6.0f64 / 5.0).sqrt()).sqrt());
    let (wa, wb) = ((18.0 + 30.0f64.sqrt()) / 36.0, (18.0 - 30.0f64.sqrt()) / 36.0);
    let gauss = [(-b, wb), (-a, wa), (a, wa), (b, wb)];
    let mut m = Matrix4::zeros();
    for &(s, ws) in &gauss {
        for &(t, wt) in &gauss {
            let (u, v) = (0.5 * (s + 1.0), 0.5 * (t + 1.0));
            let n = Vector4::new((1.0 - u) * (1.0 - v), (1.0 - u) * v, u * (1.0 - v), u * v);
            let du = [-(1.0 - v), -v, 1.0 - v, v];
            let dv = [-(1.0 - u), 1.0 - u, -u, u];
            let (mut xu, mut xv, mut yu, mut yv) = (0.0, 0.0, 0.0, 0.0);
            for k in 0..4 {
                xu += du[k] * p[k].0;
                xv += dv[k] * p[k].0;
                yu += du[k] * p[k].1;
                yv += dv[k] * p[k].1;
            }
            let jac = (xu * yv - xv * yu).abs();
            m += n * n.transpose() * (0.25 * ws * wt * jac);
        }
    }
    m
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut entry = 0.0f64;
    let mut total = 0.0f64;
    for _ in 0..100 {
        let n = rng.gen_range(2..80);
        let spec = RibbonSpec::new(rng.gen_range(0.5..2.0), rng.gen_range(0.01..0.1), n).unwrap().with_density(rng.gen_range(0.5..3.0));
        let d = spec.max_crease_step();
        let c0 = rng.gen_range(-2.0..2.0);
        let c1 = c0 + rng.gen_range(-d..=d);
        let want = quadrature_mass(&spec, c0, c1);
        let got = element_mass(&spec, c1 - c0);
        entry = entry.max((want - got).amax() / want.amax());
        let mass = spec.density * got.sum();
        let expect = spec.density * spec.length * spec.width / n as f64;
        total = total.max((mass - expect).abs() / expect);
    }
    outcome(entry <= 1e-10 && total <= 1e-12, format!("entrywise {entry:.2e}, total element mass {total:.2e} (100 elements)"))
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut fixed = 0.0f64;
    let mut ortho = 0.0f64;
    for i in 0..1000 {
        let n = rng.gen_range(2..60);
        let spec = RibbonSpec::new(1.0, 0.05, n).unwrap();
        let d = spec.max_crease_step();
        let k = rng.gen_range(1..n);
        let c = match i % 3 {
            0 => d,
            1 => -d,
            _ => rng.gen_range(-d..=d) * rng.gen_range(1.0..4.0),
        };
        let psi = rng.gen_range(-7.0..7.0);
        let t = crease_transform(&spec, k, c, psi).matrix;
        let a = spec.length * k as f64 / n as f64;
        let hw = 0.5 * spec.width;
        for p in [Vector4::new(a - hw * c, -hw, 0.0, 1.0), Vector4::new(a + hw * c, hw, 0.0, 1.0)] {
            fixed = fixed.max((t * p - p).norm());
        }
        let r = t.fixed_view::<3, 3>(0, 0).into_owned();
        ortho = ortho.max((r.transpose() * r - nalgebra::Matrix3::identity()).amax());
        ortho = ortho.max((r.determinant() - 1.0).abs());
    }
    outcome(fixed <= 1e-12 && ortho <= 1e-12, format!("crease endpoints moved {fixed:.2e}, orthogonality {ortho:.2e} (1000 transforms)"))
}

fn at_rest(spec: RibbonSpec, q: GeneralizedCoords) -> RibbonState {
    RibbonState::at_rest(spec, q).unwrap()
}

fn criterion_6() -> Outcome {
    let spec = RibbonSpec::new(0.3, 0.05, 10).unwrap();
    let g = Vec3::new(0.0, 0.0, -9.8);
    let flat = GeneralizedCoords::flat(&spec, FrameMode::Fixed);
    let no_contact = CollisionConfig { enabled: false, ..CollisionConfig::default() };
    let mut sim = Simulation::new(
        vec![at_rest(spec, flat.clone())],
        vec![],
        g,
        0.01,
        KineticMode::Full,
        SolverConfig::default(),
        no_contact.clone(),
    )
    .unwrap();
    for _ in 0..500 {
        sim.step().unwrap();
    }
    let dynamic = sim.ribbons[0].coords.to_vec();

    let r = reconstruct(&spec, &flat).unwrap();
    let prev = RibbonFrame { positions: rim(&r), velocities: RimField::zeros(11), creases: flat.c.clone() };
    let unit = UnitProblem {
        problems: vec![StepProblem::statics(spec, prev, g).unwrap()],
        modes: vec![FrameMode::Fixed],
        soft: vec![],
        hard: vec![],
    };
    let direct = optimize_step(&unit, &[flat.clone()], &SolverConfig::default()).unwrap().coords[0].to_vec();
    let dist = dynamic.iter().zip(&direct).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();

    // flat ribbon, no gravity, slanted rulings: the regularizer removes them
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut q = GeneralizedCoords::flat(&spec, FrameMode::Fixed);
    q.c = spec.random_feasible_creases(&mut rng);
    let mut sim = Simulation::new(vec![at_rest(spec, q)], vec![], Vec3::zeros(), 0.01, KineticMode::Full, SolverConfig::default(), no_contact)
        .unwrap();
    for _ in 0..100 {
        sim.step().unwrap();
    }
    let cmax = sim.ribbons[0].coords.c.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    outcome(
        dist <= 1e-4 && cmax < 1e-3,
        format!("hanging equilibrium vs direct minimum {dist:.2e}; flat ribbon max |c| {cmax:.2e}"),
    )
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let scene = preset("mobius-chain").unwrap();
    let mut sim = scene.build().unwrap();
    let frames = 25;
    let (mut loops, mut iso) = (0.0f64, 0.0f64);
    let mut converged = true;
    for _ in 0..frames {
        let report = sim.step().unwrap();
        converged &= report.units.iter().all(|u| u.converged);
        for (rb, r) in sim.ribbons.iter().zip(sim.reconstructions().unwrap()) {
            loops = loops.max(loop_residual(&r, false).iter().fold(0.0, |m, v| m.max(v.abs())));
            iso = iso.max(developability_error(&rb.spec, &rb.coords, &rim(&r)));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        converged && loops <= 1e-4 && iso <= 1e-9 && secs < 300.0,
        format!("9 bands x {frames} frames: max loop residual {loops:.2e}, length error {iso:.2e}, converged {converged}, {secs:.1}s"),
    )
}

fn total_energy(sim: &Simulation) -> f64 {
    let g = sim.gravity;
    sim.ribbons
        .iter()
        .map(|r| {
            let rec = reconstruct(&r.spec, &r.coords).unwrap();
            let (bend, reg, _, _) = ribbon_core::dynamics::crease_energy(&r.spec, &r.coords.c, &r.coords.psi);
            kinetic_energy(&r.spec, &r.coords.c, &r.velocities)
                + ribbon_core::dynamics::gravity_energy(&r.spec, &r.coords.c, &rim(&rec), &g)
                + bend
                + reg
        })
        .sum()
}

fn criterion_8() -> Outcome {
    let mut details = Vec::new();
    let mut pass = true;
    for h in [0.01, 0.05] {
        let mut scene = preset("helix-unroll").unwrap();
        scene.h = h;
        let mut sim = scene.build().unwrap();
        let e0 = total_energy(&sim);
        let mut emax = e0;
        let mut ok = true;
        let steps = (1.0 / h).round() as usize;
        for _ in 0..steps {
            if sim.step().is_err() {
                ok = false;
                break;
            }
            let r = &sim.ribbons[0];
            ok &= r.coords.to_vec().iter().all(|v| v.is_finite()) && r.positions.is_finite() && r.velocities.is_finite();
            ok &= r.spec.check_feasible(&r.coords.c).is_ok();
            emax = emax.max(total_energy(&sim));
        }
        let bounded = emax <= e0 + 1e-3 * e0.abs();
        pass &= ok && bounded;
        details.push(format!("h={h}: {steps} steps finite+feasible {ok}, energy {e0:.4} -> max {emax:.4}"));
    }
    outcome(pass, details.join("; "))
}

fn tiny_mesh(rng: &mut ChaCha8Rng) -> RibbonMesh {
    RibbonMesh {
        vertices: (0..4).map(|_| Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect(),
        triangles: vec![[0, 2, 3], [0, 3, 1]],
        edges: vec![[0, 1], [0, 2], [1, 3], [0, 3], [2, 3]],
        material: vec![[0.0; 2]; 4],
        closed: false,
    }
}

fn random_contact(rng: &mut ChaCha8Rng) -> Contact {
    let k = rng.gen_range(1..=3);
    let mut verts: Vec<usize> = (0..4).collect();
    for i in 0..4 {
        verts.swap(i, rng.gen_range(i..4));
    }
    Contact {
        kind: ContactKind::VertexTriangle,
        terms: verts[..k].iter().map(|&v| (GlobalVertex { ribbon: 0, vertex: v }, rng.gen_range(-1.0..1.0))).collect(),
        normal: Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)).normalize(),
        offset: rng.gen_range(-0.5..1.0),
    }
}

/// Solves the primal KKT system for every active subset and keeps the
/// cheapest primal- and dual-feasible candidate.
fn enumerate_active_sets(mesh: &RibbonMesh, contacts: &[Contact], k: f64) -> Option<Vec<f64>> {
    let dim = 3 * mesh.vertices.len();
    let h = closeness_hessian(mesh, k).kronecker(&DMatrix::<f64>::identity(3, 3));
    let rows: Vec<DVector<f64>> = contacts
        .iter()
        .map(|c| {
            let mut r = DVector::zeros(dim);
            for (v, w) in &c.terms {
                for a in 0..3 {
                    r[3 * v.vertex + a] += w * c.normal[a];
                }
            }
            r
        })
        .collect();
    let x0 = DVector::from_iterator(dim, mesh.vertices.iter().flat_map(|v| [v.x, v.y, v.z]));
    let mut best: Option<(f64, DVector<f64>)> = None;
    for mask in 0u32..(1 << contacts.len()) {
        let act: Vec<usize> = (0..contacts.len()).filter(|i| mask >> i & 1 == 1).collect();
        let m = act.len();
        let mut kkt = DMatrix::zeros(dim + m, dim + m);
        kkt.view_mut((0, 0), (dim, dim)).copy_from(&h);
        let mut rhs = DVector::zeros(dim + m);
        rhs.rows_mut(0, dim).copy_from(&(&h * &x0));
        for (j, &a) in act.iter().enumerate() {
            for i in 0..dim {
                kkt[(i, dim + j)] = -rows[a][i];
                kkt[(dim + j, i)] = rows[a][i];
            }
            rhs[dim + j] = contacts[a].offset;
        }
        let Some(sol) = kkt.lu().solve(&rhs) else { continue };
        let x = sol.rows(0, dim).into_owned();
        if sol.rows(dim, m).iter().any(|&l| l < -1e-10) || rows.iter().zip(contacts).any(|(r, c)| r.dot(&x) < c.offset - 1e-10) {
            continue;
        }
        let d = &x - &x0;
        let obj = 0.5 * d.dot(&(&h * &d));
        if best.as_ref().map_or(true, |(b, _)| obj < *b - 1e-14) {
            best = Some((obj, x));
        }
    }
    best.map(|(_, x)| x.iter().copied().collect())
}

fn criterion_9() -> Outcome {
    let start = Instant::now();
    let scene = preset("falling").unwrap();
    let mut sim = scene.build().unwrap();
    let spec = sim.ribbons[0].spec;
    let (mut penetration, mut deviation) = (0.0f64, 0.0f64);
    let mut contacts = 0;
    for _ in 0..scene.frames {
        let report = sim.step().unwrap();
        contacts += report.contacts;
        let r = &sim.ribbons[0];
        for p in r.positions.iter() {
            penetration = penetration.max(-p.z);
        }
        let mesh = build_mesh(&spec, &r.positions, &r.coords.c);
        deviation = deviation.max(max_edge_deviation(&material_mesh(&spec, &r.coords.c), &mesh));
    }
    let sim_secs = start.elapsed().as_secs_f64();

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut checked, mut qp_err) = (0, 0.0f64);
    while checked < 200 {
        let mesh = tiny_mesh(&mut rng);
        let contacts: Vec<Contact> = (0..rng.gen_range(1..=4)).map(|_| random_contact(&mut rng)).collect();
        let k = if rng.gen_bool(0.5) { 0.0 } else { rng.gen_range(0.1..100.0) };
        let Some(oracle) = enumerate_active_sets(&mesh, &contacts, k) else { continue };
        let sol = resolve(&[mesh], &contacts, k);
        let got: Vec<f64> = sol.positions[0].iter().flat_map(|v| [v.x, v.y, v.z]).collect();
        qp_err = qp_err.max(got.iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
        checked += 1;
    }

    // a tilted strip dipping slightly below the ground, resolved with and
    // without edge stiffening
    let strip = RibbonSpec::new(1.0, 0.05, 20).unwrap();
    let mut q = GeneralizedCoords::flat(&strip, FrameMode::Floating);
    q.rotation = Vec3::new(0.3, -0.05, 0.0);
    q.translation = Vec3::new(0.0, 0.0, -0.004);
    let mesh = build_mesh(&strip, &rim(&reconstruct(&strip, &q).unwrap()), &q.c);
    let config = CollisionConfig { colliders: vec![Collider::Plane { normal: [0.0, 0.0, 1.0], offset: 0.0 }], ..CollisionConfig::default() };
    let meshes = [mesh.clone()];
    let found = detect(&meshes, &meshes, &config, 0.005, BroadPhase::Hierarchy);
    let distortion = |k| {
        let sol = resolve(&meshes, &found, k);
        max_triangle_distortion(&mesh, &RibbonMesh { vertices: sol.positions[0].clone(), ..mesh.clone() })
    };
    let (stiff, soft) = (distortion(1e2), distortion(0.0));

    outcome(
        penetration <= 1e-6 && deviation < 0.01 && qp_err <= 1e-8 && stiff < soft && !found.is_empty(),
        format!(
            "falling {} frames ({contacts} contacts, {sim_secs:.1}s): penetration {penetration:.2e}, edge deviation {:.3}%; \
             QP vs enumeration {qp_err:.2e} (200 instances); distortion K=1e2 {stiff:.4} < K=0 {soft:.4}",
            scene.frames,
            deviation * 100.0
        ),
    )
}

fn criterion_10() -> Outcome {
    let scene = preset("rotate").unwrap();
    let state = scene.ribbons[0].state().unwrap();
    let spin_speed = state.velocities.iter().fold(0.0f64, |m, v| m.max(v.norm()));
    let mut norms = Vec::new();
    for mode in [KineticMode::Lumped, KineticMode::Full] {
        let prev = RibbonFrame { positions: state.positions.clone(), velocities: state.velocities.clone(), creases: state.coords.c.clone() };
        let p = StepProblem::new(state.spec, prev, scene.h, Vec3::zeros(), Some(mode)).unwrap();
        let g = p.objective(&state.coords, GradientMethod::Adjoint).gradient.to_vec(state.coords.mode);
        norms.push(g.iter().map(|v| v * v).sum::<f64>().sqrt());
    }
    outcome(
        spin_speed > 0.0 && norms[0] <= 1e-12 && norms[1] > 1e-6,
        format!("rim speed {spin_speed:.3} m/s; |grad| at rest: lumped {:.2e}, full {:.2e}", norms[0], norms[1]),
    )
}

fn criterion_11() -> Outcome {
    let mut rows = Vec::new();
    for name in ["torsion", "falling"] {
        let mut sim = preset(name).unwrap().build().unwrap();
        let (mut opt, mut coll, mut inner, mut outer) = (0.0, 0.0, 0, 0);
        let frames = 10;
        for _ in 0..frames {
            let r = sim.step().unwrap();
            opt += r.optimize_seconds;
            coll += r.collision_seconds;
            inner += r.units.iter().map(|u| u.inner).sum::<usize>();
            outer += r.units.iter().map(|u| u.outer).sum::<usize>();
        }
        let f = frames as f64;
        rows.push(format!("{name}: opt/coll {:.4}/{:.4}s inner/outer {:.0}/{:.1}", opt / f, coll / f, inner as f64 / f, outer as f64 / f));
    }
    outcome(true, format!("informational only, hardware-specific: {}", rows.join("; ")))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("developability", criterion_1),
        ("gradient correctness", criterion_2),
        ("adjoint scaling", criterion_3),
        ("mass matrix", criterion_4),
        ("crease transform", criterion_5),
        ("statics oracle", criterion_6),
        ("moebius chain", criterion_7),
        ("timestep robustness", criterion_8),
        ("collision", criterion_9),
        ("lumped-mass pathology", criterion_10),
        ("wall-clock table", criterion_11),
    ];
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let id = i + 1;
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let o = run();
        println!("criterion {id:>2} {} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
