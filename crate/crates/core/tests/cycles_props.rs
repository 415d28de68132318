use g2kit_core::builders::{coordinate_torus, ORIGIN};
use g2kit_core::cycles::*;
use g2kit_core::forms::{basis_indices, sort_with_sign};
use g2kit_core::g2::G2Structure;
use g2kit_core::gauge::{dt_residual, Lattice7, LatticeConnection, LATTICE_DIM};
use g2kit_core::mesh::{calibration_residuals, ImmersedMesh, Point, SimplicialComplex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn torus(dirs: &[usize]) -> Configuration {
    Configuration::flat(coordinate_torus(dirs, 3, &ORIGIN))
}

fn perturbed(seed: u64, amp_v: f64, amp_b: f64) -> Configuration {
    let base = torus(&[0, 1, 2, 3]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    base.displaced(&TangentVector::random(&base, &mut rng, amp_v, amp_b), 1.0)
}

#[test]
fn phi0_vanishes_at_a_flat_coassociative_torus() {
    let s = G2Structure::standard();
    let c = torus(&[0, 1, 2, 3]);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..100 {
        let t = TangentVector::random(&c, &mut rng, 1.0, 1.0);
        assert!(eval_phi0(&c, &t, &s).unwrap().abs() <= 1e-12 * t.norm());
    }
}

#[test]
fn phi0_detects_a_non_coassociative_torus() {
    let s = G2Structure::standard();
    let c = torus(&[0, 1, 2, 4]);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let best = (0..10)
        .map(|_| {
            let t = TangentVector::random(&c, &mut rng, 0.0, 1.0);
            eval_phi0(&c, &t, &s).unwrap().abs()
        })
        .fold(0.0, f64::max);
    assert!(best > 1e-3, "{best}");
}

#[test]
fn one_forms_are_linear() {
    let s = G2Structure::standard();
    let c = perturbed(9, 0.1, 0.3);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let t1 = TangentVector::random(&c, &mut rng, 1.0, 1.0);
    let t2 = TangentVector::random(&c, &mut rng, 1.0, 1.0);
    let (a, b) = (eval_phi0(&c, &t1, &s).unwrap(), eval_phi0(&c, &t2, &s).unwrap());
    let sum = eval_phi0(&c, &t1.add(&t2), &s).unwrap();
    assert!((sum - a - b).abs() <= 1e-12 * (a.abs() + b.abs()));
    let scaled = eval_phi0(&c, &t1.scale(-3.5), &s).unwrap();
    assert!((scaled + 3.5 * a).abs() <= 1e-12 * a.abs());
}

fn log_ratio(a: f64, b: f64) -> f64 {
    (a.abs() / b.abs()).log10()
}

#[test]
fn phi0_is_closed_to_second_order() {
    let s = G2Structure::standard();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..20 {
        let c = perturbed(100 + trial, 0.1, 0.3);
        let d1 = TangentVector::random(&c, &mut rng, 1.0, 1.0);
        let d2 = TangentVector::random(&c, &mut rng, 1.0, 1.0);
        let r: Vec<f64> =
            [1e-2, 1e-3, 1e-4].iter().map(|&h| closedness_check(&Phi0(&s), &c, &d1, &d2, h).unwrap()).collect();
        let (o1, o2) = (log_ratio(r[0], r[1]), log_ratio(r[1], r[2]));
        assert!(o1 >= 1.9 && o2 >= 1.9, "trial {trial}: {r:?} orders {o1} {o2}");
        assert_eq!(closedness_check(&Phi0(&s), &c, &d1, &d1, 1e-3).unwrap(), 0.0);
    }
}

/// Closed square loop `c + ε(a·d1 + b·d2)` with `m` samples per side.
fn square_loop(c: &Configuration, d1: &TangentVector, d2: &TangentVector, eps: f64, m: usize) -> Vec<Configuration> {
    let corners = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0), (0.0, 0.0)];
    let mut path = Vec::new();
    for w in corners.windows(2) {
        for i in 0..m {
            let t = i as f64 / m as f64;
            let a = w[0].0 + t * (w[1].0 - w[0].0);
            let b = w[0].1 + t * (w[1].1 - w[0].1);
            path.push(c.displaced(&d1.scale(eps * a).add(&d2.scale(eps * b)), 1.0));
        }
    }
    path.push(c.clone());
    path
}

#[test]
fn psi0_circulation_is_cubic_in_the_loop_size() {
    let s = G2Structure::standard();
    let c = perturbed(12, 0.1, 0.3);
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let d1 = TangentVector::random(&c, &mut rng, 1.0, 1.0);
    let d2 = TangentVector::random(&c, &mut rng, 1.0, 1.0);
    let circ: Vec<f64> = [0.02, 0.01].iter().map(|&e| psi0(&square_loop(&c, &d1, &d2, e, 2), &s).unwrap()).collect();
    // at least cubic decay (closed discrete form: only quadrature error remains)
    let ratio = circ[0] / circ[1];
    assert!(ratio.abs() >= 6.0, "{circ:?}");
    assert_eq!(psi0(&[c.clone(), c.clone(), c.clone()], &s).unwrap(), 0.0);
}

#[test]
fn psi0_converges_under_refinement() {
    let s = G2Structure::standard();
    let c = perturbed(14, 0.1, 0.3);
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let d = TangentVector::random(&c, &mut rng, 1.0, 1.0);
    let path = |m: usize| -> Vec<Configuration> { (0..=m).map(|i| c.displaced(&d, 0.05 * i as f64 / m as f64)).collect() };
    let (p4, p8, p16) = (psi0(&path(4), &s).unwrap(), psi0(&path(8), &s).unwrap(), psi0(&path(16), &s).unwrap());
    let ratio = (p4 - p8) / (p8 - p16);
    assert!((3.0..5.0).contains(&ratio), "{p4} {p8} {p16}");
    let coarse = vec![c.clone(), c.displaced(&d, 3.0)];
    assert!(matches!(psi0(&coarse, &s), Err(CycleError::PathTooCoarse { .. })));
}

#[test]
fn phi0_is_gauge_invariant() {
    let s = G2Structure::standard();
    let c = perturbed(16, 0.1, 0.3);
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..10 {
        let phi: Vec<f64> = (0..c.complex().n_vertices()).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let moved = Configuration::new(c.mesh.clone(), c.connection.gauge_transform(c.complex(), &phi)).unwrap();
        let t = TangentVector::random(&c, &mut rng, 1.0, 1.0);
        let (a, b) = (eval_phi0(&c, &t, &s).unwrap(), eval_phi0(&moved, &t, &s).unwrap());
        assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }
}

/// Relabel vertices by the grid translation `x_0 ↦ x_0 + 1` of `Z_3^4`,
/// keeping the simplex order.
fn relabeled(c: &Configuration, t: &TangentVector) -> (Configuration, TangentVector) {
    let n = 3;
    let pi = |v: usize| v - v % n + (v % n + 1) % n;
    let cx = c.complex();
    let simplices: Vec<Vec<usize>> = cx.simplices().iter().map(|s| s.iter().map(|&v| pi(v)).collect()).collect();
    let new_cx = SimplicialComplex::new(4, cx.n_vertices(), simplices).unwrap();
    let mut pos = vec![[0.0; 7]; cx.n_vertices()];
    let mut v = vec![[0.0; 7]; cx.n_vertices()];
    for i in 0..cx.n_vertices() {
        pos[pi(i)] = c.mesh.positions()[i];
        v[pi(i)] = t.v[i];
    }
    let mut angles = vec![0.0; new_cx.faces(1).len()];
    let mut b = vec![0.0; angles.len()];
    for (e, edge) in cx.faces(1).iter().enumerate() {
        let (x, y) = (pi(edge[0]), pi(edge[1]));
        let sign = if x < y { 1.0 } else { -1.0 };
        let idx = new_cx.face_index(&[x.min(y), x.max(y)]).unwrap();
        angles[idx] = sign * c.connection.angles()[e];
        b[idx] = sign * t.b[e];
    }
    let mesh = ImmersedMesh::new(new_cx.clone(), pos, None, None).unwrap();
    (Configuration::new(mesh, LatticeConnection::from_angles(&new_cx, angles).unwrap()).unwrap(), TangentVector { v, b })
}

#[test]
fn simplicial_automorphisms_leave_phi0_unchanged() {
    let s = G2Structure::standard();
    let c = perturbed(18, 0.1, 0.3);
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let t = TangentVector::random(&c, &mut rng, 1.0, 1.0);
    let (c2, t2) = relabeled(&c, &t);
    let sorted = |cx: &SimplicialComplex| {
        let mut v: Vec<Vec<usize>> = cx.simplices().to_vec();
        v.sort();
        v
    };
    // same complex as a set of oriented simplices
    assert_eq!(sorted(c.complex()), sorted(c2.complex()));
    // identical per-simplex data; only the summation order of triangle
    // circulations changes
    let (a, b) = (eval_phi0(&c, &t, &s).unwrap(), eval_phi0(&c2, &t2, &s).unwrap());
    assert!((a - b).abs() <= 1e-14 * a.abs(), "{a} vs {b}");
}

#[test]
fn phi_a_on_associative_and_slag_tori() {
    let s = G2Structure::standard();
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let assoc = torus(&[4, 5, 6]);
    for _ in 0..20 {
        let t = TangentVector::random(&assoc, &mut rng, 1.0, 1.0);
        assert_eq!(eval_phi_a(&assoc, &t, &s).unwrap(), 0.0);
    }
    let slag = torus(&[1, 2, 3]);
    let t = TangentVector::random(&slag, &mut rng, 1.0, 0.0).normal_part(&slag.mesh);
    assert!(eval_phi_a(&slag, &t, &s).unwrap().abs() > 1e-3);
    let c = Configuration::new(
        slag.mesh.clone(),
        LatticeConnection::from_angles(slag.complex(), (0..slag.connection.len()).map(|i| 0.01 * (i % 7) as f64).collect())
            .unwrap(),
    )
    .unwrap();
    let t1 = TangentVector::random(&c, &mut rng, 1.0, 1.0);
    let t2 = TangentVector::random(&c, &mut rng, 1.0, 1.0);
    let (a, b) = (eval_phi_a(&c, &t1, &s).unwrap(), eval_phi_a(&c, &t2, &s).unwrap());
    assert!((eval_phi_a(&c, &t1.add(&t2), &s).unwrap() - a - b).abs() <= 1e-12 * (a.abs() + b.abs()));
}

fn random_links(l: &Lattice7, rng: &mut impl Rng) -> Vec<f64> {
    (0..l.links().len()).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

#[test]
fn phi_dt_zero_and_kernel_cases() {
    let s = G2Structure::standard();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let zero = Lattice7::zero(2);
    assert_eq!(eval_phi_dt(&zero, &random_links(&zero, &mut rng), &s).unwrap(), 0.0);
    let kernel = Lattice7::with_flux(2, &[(4, 5, 1), (0, 3, -1)]);
    assert!(dt_residual(&kernel, &s).unwrap() <= 1e-10);
    for _ in 0..5 {
        assert!(eval_phi_dt(&kernel, &random_links(&kernel, &mut rng), &s).unwrap().abs() <= 1e-10);
    }
}

#[test]
fn phi_dt_single_edge_cell_sum() {
    let s = G2Structure::standard();
    for n in [2usize, 3] {
        let l = Lattice7::with_flux(n, &[(0, 1, 1)]);
        let f = std::f64::consts::TAU / (n * n) as f64;
        let a = std::f64::consts::TAU / n as f64;
        let beta = 0.7;
        let mut b = vec![0.0; l.links().len()];
        b[5 * LATTICE_DIM + 4] = beta;
        // only the 3-cells spanned by {0, 1, 4} see the edge: once through
        // F∪B and once through B∪F, each weighted by ε(014, 2356) Θ_2356
        let (_, odd) = sort_with_sign(&[0, 1, 4, 2, 3, 5, 6]).unwrap();
        let weight = if odd { -1.0 } else { 1.0 } * s.theta.coeff(&[2, 3, 5, 6]);
        let want = a.powi(4) * weight * f * beta;
        let got = eval_phi_dt(&l, &b, &s).unwrap();
        assert!((got - want).abs() < 1e-12 * want.abs(), "n={n}: {got} vs {want}");
        assert!(want.abs() > 0.0);
    }
}

#[test]
fn phi_dt_is_exactly_closed() {
    let s = G2Structure::standard();
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let base = Lattice7::from_links(2, (0..128 * 7).map(|_| rng.gen_range(-0.2..0.2)).collect()).unwrap();
    let d1 = random_links(&base, &mut rng);
    let d2 = random_links(&base, &mut rng);
    let r = closedness_check(&PhiDt(&s), &base, &d1, &d2, 1e-2).unwrap();
    assert!(r.abs() <= 1e-10, "{r}");
}

// flow and census

fn pinned_seed(seed: u64, dirs: &[usize], amp_v: f64, amp_b: f64) -> Configuration {
    let base = torus(dirs);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = TangentVector::random(&base, &mut rng, amp_v, amp_b).normal_part(&base.mesh);
    let mut c = base.displaced(&t, 1.0);
    let frame = HolonomyFrame::new(c.complex()).unwrap();
    c.connection = frame.pin(&c.connection, &vec![0.0; frame.rank()]);
    c
}

fn assert_monotone(r: &FlowResult) {
    for w in r.trace.windows(2) {
        assert!(w[1].r <= w[0].r, "R increased at step {}", w[1].step);
    }
}

#[test]
fn flow_is_stationary_at_an_hslag_cycle() {
    let s = G2Structure::standard();
    let r = flow_run(&torus(&[0, 1, 2, 3]), &s, &FlowOptions::default()).unwrap();
    assert!(r.converged && r.trace.len() == 1 && r.trace[0].r == 0.0);
    let (_, g) = energy_gradient(&torus(&[0, 1, 2, 3]), &s).unwrap();
    assert_eq!(g.norm(), 0.0);
}

#[test]
fn flow_removes_a_connection_perturbation() {
    let s = G2Structure::standard();
    let c = pinned_seed(23, &[0, 1, 2, 3], 0.0, 0.05);
    let r = flow_run(&c, &s, &FlowOptions::default()).unwrap();
    assert!(r.converged && r.final_r() < 1e-8 && r.trace.len() <= 10_001);
    assert_monotone(&r);
    // Φ₀ is linear in F⁺ ~ R^{1/2}; the 1e-6 bound needs R well below 1e-12
    let tight = FlowOptions { tol: 1e-16, ..FlowOptions::default() };
    let r = flow_run(&r.final_config, &s, &tight).unwrap();
    assert!(r.converged);
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    for _ in 0..20 {
        let t = TangentVector::random(&r.final_config, &mut rng, 1.0, 1.0);
        assert!(eval_phi0(&r.final_config, &t, &s).unwrap().abs() <= 1e-6 * t.norm());
    }
}

#[test]
fn flow_returns_a_bumped_torus_to_a_translate() {
    let s = G2Structure::standard();
    let c = pinned_seed(25, &[0, 1, 2, 3], 0.01, 0.0);
    let r = flow_run(&c, &s, &FlowOptions::default()).unwrap();
    assert!(r.converged);
    assert_monotone(&r);
    // the image is a coordinate plane translate iff the normal coordinates
    // are constant over the vertices
    let pos: &[Point] = r.final_config.mesh.positions();
    for axis in 4..7 {
        let mean = pos.iter().map(|p| p[axis]).sum::<f64>() / pos.len() as f64;
        let dev = pos.iter().map(|p| (p[axis] - mean).abs()).fold(0.0, f64::max);
        assert!(dev < 1e-3, "axis {axis}: {dev}");
    }
}

fn coassociative_planes() -> Vec<Vec<usize>> {
    let s = G2Structure::standard();
    basis_indices(7, 4)
        .into_iter()
        .filter(|p| calibration_residuals(&coordinate_torus(p, 3, &ORIGIN), &s).unwrap().coassoc == Some(0.0))
        .collect()
}

#[test]
fn census_of_perturbed_tori() {
    let s = G2Structure::standard();
    let opts = FlowOptions::default();
    let seeds: Vec<Configuration> =
        (0..10).map(|i| pinned_seed(200 + i, &[0, 1, 2, 3], 0.01 * (i % 2) as f64, 0.05 * ((i + 1) % 2) as f64)).collect();
    let report = count_hslag(&seeds, &s, &opts, 1e-4).unwrap();
    let converged = 10 - report.not_converged.len();
    assert!(converged > 0);
    assert_eq!(report.basins.len(), 1);
    assert_eq!(report.basins[0].multiplicity(), converged);

    let planes = coassociative_planes();
    assert_eq!(planes.len(), 7);
    let other = planes.iter().find(|p| p.as_slice() != [0, 1, 2, 3]).unwrap();
    let mut two = vec![pinned_seed(300, &[0, 1, 2, 3], 0.01, 0.0), pinned_seed(301, other, 0.01, 0.0)];
    two.push(pinned_seed(302, other, 0.0, 0.05));
    let report = count_hslag(&two, &s, &opts, 1e-4).unwrap();
    assert!(report.not_converged.is_empty());
    let mut mult: Vec<usize> = report.basins.iter().map(Basin::multiplicity).collect();
    mult.sort();
    assert_eq!(mult, vec![1, 2]);

    assert!(count_hslag(&[], &s, &opts, 1e-4).unwrap().basins.is_empty());
}
