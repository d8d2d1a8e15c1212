use std::sync::Arc;

use dimcons_core::dimension::{box_count, hausdorff_content_upper};
use dimcons_core::grassmannian::{self, build_delta_net, metric, DeltaNet, sample_one, sample_uniform, Subspace};
use dimcons_core::ifs::{attractor_net, PointCloud, SelfSimilarIfs, Similarity, SymbolWord, System};
use dimcons_core::linalg::{self, Mat};
use dimcons_core::rng::SeededRng;
use dimcons_core::sweep::{energy, energy_brute_force, exceptional_directions, relate, FatPlaneGrid};
use dimcons_core::transversality::{
    family_limit, jacobian_analytic, jacobian_relative_error, rho, tangent_frame, ProjectedFamily,
};
use proptest::prelude::*;

fn nk() -> impl Strategy<Value = (usize, usize)> {
    prop_oneof![Just((2, 1)), Just((3, 1)), Just((3, 2)), Just((4, 1)), Just((4, 2)), Just((4, 3)), Just((5, 2))]
}

fn four_corner() -> SelfSimilarIfs {
    let t = [[0.0, 0.0], [0.75, 0.0], [0.0, 0.75], [0.75, 0.75]];
    SelfSimilarIfs::new(t.iter().map(|b| Similarity::homothety(0.25, b.to_vec()).unwrap()).collect()).unwrap()
}

fn points(dim: usize, max: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-1.0f64..1.0, dim), 1..max)
}

// Inside one orthant the content search runs on a single global dyadic grid.
fn unit_square_points(max: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(0.0f64..1.0, 2), 1..max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn projection_is_idempotent_and_pythagorean((n, k) in nk(), seed in any::<u64>()) {
        let mut rng = SeededRng::new(seed);
        let v = sample_one(n, k, &mut rng);
        let p = v.projection_matrix();
        prop_assert!(p.mul(&p).approx_eq(&p, 1e-12));
        prop_assert!(p.approx_eq(&p.transpose(), 1e-12));
        let x: Vec<f64> = (0..n).map(|_| rng.uniform_in(-2.0, 2.0)).collect();
        let px = p.mul_vec(&x);
        let rest = linalg::sub(&x, &px);
        let lhs = linalg::dot(&x, &x);
        let rhs = linalg::dot(&px, &px) + linalg::dot(&rest, &rest);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs));
        prop_assert!((v.project_norm(&x).unwrap() - linalg::norm(&px)).abs() < 1e-12);
    }

    #[test]
    fn metric_axioms((n, k) in nk(), seed in any::<u64>()) {
        let mut rng = SeededRng::new(seed);
        let (a, b, c) = (sample_one(n, k, &mut rng), sample_one(n, k, &mut rng), sample_one(n, k, &mut rng));
        prop_assert!(metric(&a, &a) < 1e-12);
        prop_assert!((metric(&a, &b) - metric(&b, &a)).abs() < 1e-12);
        prop_assert!(metric(&a, &b) <= 1.0 + 1e-12);
        prop_assert!(metric(&a, &c) <= metric(&a, &b) + metric(&b, &c) + 1e-12);
    }

    #[test]
    fn complement_has_the_same_distances((n, k) in nk(), seed in any::<u64>()) {
        let mut rng = SeededRng::new(seed);
        let (a, b) = (sample_one(n, k, &mut rng), sample_one(n, k, &mut rng));
        let (ac, bc) = (a.complement().unwrap(), b.complement().unwrap());
        prop_assert!((metric(&a, &b) - metric(&ac, &bc)).abs() < 1e-10);
    }

    #[test]
    fn ball_meets_at_most_3k_cells(
        (n, k) in nk(),
        seed in any::<u64>(),
        delta in 0.01f64..1.0,
        frac in 0.0f64..=1.0,
    ) {
        let mut rng = SeededRng::new(seed);
        let grid = FatPlaneGrid::new(sample_one(n, k, &mut rng), delta).unwrap();
        let x: Vec<f64> = (0..n).map(|_| rng.uniform_in(-5.0, 5.0)).collect();
        let coords = grid.direction().project(&x).unwrap();
        let cells = grid.cells_meeting_ball(&coords, frac * delta);
        prop_assert!(cells.len() <= 3usize.pow(k as u32));
        if frac > 0.0 {
            prop_assert!(cells.contains(&grid.index(&x)));
        }
    }

    #[test]
    fn relate_is_symmetric_and_complement_invariant(
        (n, k) in nk(),
        seed in any::<u64>(),
        delta in 0.01f64..0.2,
        eta_factor in 1.01f64..6.0,
    ) {
        let mut rng = SeededRng::new(seed);
        let v = sample_one(n, k, &mut rng);
        let eta = eta_factor * delta;
        let x: Vec<f64> = (0..n).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
        // Bias y towards x's fat plane so both outcomes occur.
        let mut y: Vec<f64> = (0..n).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
        if rng.uniform() < 0.5 {
            let p = v.projection_matrix();
            let off = p.mul_vec(&linalg::sub(&y, &x));
            for i in 0..n {
                y[i] -= off[i] * rng.uniform();
            }
        }
        let r = relate(&v, &x, &y, delta, eta).unwrap();
        prop_assert_eq!(r, relate(&v, &y, &x, delta, eta).unwrap());
        if let Some(comp) = v.complement() {
            let coeffs: Vec<f64> = (0..comp.plane_dim()).map(|_| rng.uniform_in(-3.0, 3.0)).collect();
            let w = comp.frame().mul_vec(&coeffs);
            let shift = |p: &[f64]| -> Vec<f64> { p.iter().zip(&w).map(|(a, b)| a + b).collect() };
            let (xs, ys) = (shift(&x), shift(&y));
            // Skip the measure-zero case of a projection rounding onto a cell edge.
            let grid = FatPlaneGrid::new(v.clone(), delta).unwrap();
            if grid.index(&xs) == grid.index(&x) && grid.index(&ys) == grid.index(&y) {
                prop_assert_eq!(r, relate(&v, &xs, &ys, delta, eta).unwrap());
            }
        }
    }

    #[test]
    fn box_count_is_monotone_under_inclusion(
        pts in points(2, 60),
        cut in 0usize..60,
        delta in 0.02f64..0.5,
        jitter in 1usize..4,
        seed in any::<u64>(),
    ) {
        let sub = &pts[..cut.min(pts.len() - 1) + 1];
        let small = box_count(sub, delta, jitter, seed).unwrap();
        let big = box_count(&pts, delta, jitter, seed).unwrap();
        prop_assert!(small <= big);
        prop_assert!(big <= pts.len());
    }

    #[test]
    fn content_is_monotone_and_subadditive(
        a in unit_square_points(25),
        b in unit_square_points(25),
        s in 0.2f64..1.8,
        floor in 0.001f64..0.1,
    ) {
        let union: Vec<Vec<f64>> = a.iter().chain(&b).cloned().collect();
        let budget = 1_000_000;
        let ha = hausdorff_content_upper(&a, s, budget, floor).unwrap();
        let hb = hausdorff_content_upper(&b, s, budget, floor).unwrap();
        let hu = hausdorff_content_upper(&union, s, budget, floor).unwrap();
        prop_assert!(ha <= hu + 1e-12, "monotone: {} > {}", ha, hu);
        prop_assert!(hu <= ha + hb + 1e-12, "subadditive: {} > {} + {}", hu, ha, hb);
    }

    #[test]
    fn rho_splits_the_norm(n in 2usize..6, seed in any::<u64>()) {
        let mut rng = SeededRng::new(seed);
        let e = rng.unit_vector(n);
        let z: Vec<f64> = (0..n).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
        let r = rho(&e, &z).unwrap();
        let along = linalg::dot(&z, &e);
        prop_assert!(linalg::dot(&r, &e).abs() < 1e-12);
        prop_assert!((linalg::dot(&r, &r) + along * along - linalg::dot(&z, &z)).abs() < 1e-12);
        prop_assert_eq!(tangent_frame(&e).len(), n - 1);
    }

    #[test]
    fn projected_maps_commute_with_rho(seed in any::<u64>(), letters in prop::collection::vec(0u32..4, 0..7)) {
        // f_i(ρ_e(x); e) = ρ_e(g_i(x)) for every map, hence along whole words.
        let fam = ProjectedFamily::new(four_corner()).unwrap();
        let mut rng = SeededRng::new(seed);
        let e = rng.unit_vector(2);
        let x = vec![rng.uniform_in(-1.0, 1.0), rng.uniform_in(-1.0, 1.0)];
        let mut xi = rho(&e, &x).unwrap();
        let mut gx = x.clone();
        for &l in letters.iter().rev() {
            xi = fam.apply(l as usize, &e, &xi).unwrap();
            gx = fam.base().maps()[l as usize].apply(&gx);
        }
        let direct = rho(&e, &gx).unwrap();
        prop_assert!(linalg::dist(&xi, &direct) < 1e-12);
    }

    #[test]
    fn analytic_jacobian_determinant(n in 2usize..6, seed in any::<u64>()) {
        let mut rng = SeededRng::new(seed);
        let u = rng.unit_vector(n);
        let z: Vec<f64> = (0..n).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
        let j = jacobian_analytic(&z, &u).unwrap();
        prop_assert!((j.matrix.determinant() - j.determinant).abs() < 1e-12);
        prop_assert!(jacobian_relative_error(&z, &u, 1e-4).unwrap() < 1e-6);
    }
}

#[test]
fn family_limit_matches_projected_symbol_point() {
    let fam = ProjectedFamily::new(four_corner()).unwrap();
    let mut rng = SeededRng::new(2024);
    for _ in 0..100 {
        let e = rng.unit_vector(2);
        let depth = 1 + rng.index(10);
        let word = SymbolWord::new((0..depth).map(|_| rng.index(4) as u32).collect());
        family_limit(&fam, &e, &word).unwrap();
    }
}

#[test]
fn finite_difference_jacobian_converges_at_order_two() {
    let mut rng = SeededRng::new(99);
    for n in 2..5 {
        for _ in 0..20 {
            let u = rng.unit_vector(n);
            let z: Vec<f64> = (0..n).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
            let coarse = jacobian_relative_error(&z, &u, 1e-3).unwrap();
            let fine = jacobian_relative_error(&z, &u, 5e-4).unwrap();
            if coarse < 1e-12 {
                continue;
            }
            let order = (coarse / fine).log2();
            assert!((order - 2.0).abs() < 0.1, "order {order} (n={n})");
        }
    }
}

#[test]
fn uniform_lines_have_uniform_angles() {
    // Kolmogorov–Smirnov against the uniform law: the angle of a random line
    // in the plane, and |v₃| for a random line in space.
    let ks = |mut xs: Vec<f64>| -> f64 {
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = xs.len() as f64;
        xs.iter()
            .enumerate()
            .map(|(i, &x)| (x - i as f64 / n).abs().max(((i + 1) as f64 / n - x).abs()))
            .fold(0.0, f64::max)
    };
    let m = 4000;
    let critical = 1.63 / (m as f64).sqrt();
    let lines = sample_uniform(2, 1, m, 5).unwrap();
    let angles: Vec<f64> = lines
        .iter()
        .map(|l| {
            let v = l.basis_vector(0);
            v[1].atan2(v[0]).rem_euclid(std::f64::consts::PI) / std::f64::consts::PI
        })
        .collect();
    assert!(ks(angles) < critical);
    let lines = sample_uniform(3, 1, m, 6).unwrap();
    assert!(ks(lines.iter().map(|l| l.basis_vector(0)[2].abs()).collect()) < critical);
}

#[test]
fn mean_projection_is_scaled_identity() {
    for (n, k) in [(2, 1), (3, 1), (3, 2), (4, 2)] {
        let m = 20_000;
        let mut sum = Mat::zeros(n, n);
        for v in sample_uniform(n, k, m, 17).unwrap() {
            let p = v.projection_matrix();
            sum = Mat::from_row_major(n, n, sum.as_slice().iter().zip(p.as_slice()).map(|(a, b)| a + b).collect())
                .unwrap();
        }
        let mean = sum.scaled(1.0 / m as f64);
        let expected = Mat::identity(n).scaled(k as f64 / n as f64);
        assert!(mean.max_abs_diff(&expected) < 0.02, "({n},{k}): {}", mean.max_abs_diff(&expected));
    }
}

#[test]
fn nets_are_separated() {
    for (n, k) in [(2, 1), (3, 1), (3, 2), (4, 2)] {
        let net = build_delta_net(n, k, 0.3, 1.0, 3).unwrap();
        let m = net.members();
        for i in 0..m.len() {
            for j in 0..i {
                assert!(metric(&m[i], &m[j]) > 0.3);
            }
        }
        assert_eq!(grassmannian::grassmannian_dim(n, k), k * (n - k));
    }
}

#[test]
fn flagged_sets_grow_with_s() {
    let sys = Arc::new(System::from(four_corner()));
    let cloud = attractor_net(&sys, 1.0 / 64.0).unwrap();
    let net = build_delta_net(2, 1, 1.0 / 64.0, 2.0, 1).unwrap();
    let scan = exceptional_directions(&cloud, &net, 0.0, 2, 4).unwrap();
    let mut previous = scan.with_threshold(0.0).flagged;
    for i in 1..=40 {
        let next = scan.with_threshold(i as f64 * 0.05).flagged;
        assert!(previous.iter().zip(&next).all(|(a, b)| !*a || *b));
        previous = next;
    }
    assert!(previous.iter().all(|f| *f), "s = 2 flags everything");
    // The stored scan agrees with a fresh one at the same threshold.
    let direct = exceptional_directions(&cloud, &net, 0.7, 2, 4).unwrap();
    assert_eq!(direct.flagged, scan.with_threshold(0.7).flagged);
}

#[test]
fn bucketed_energy_matches_brute_force() {
    let mut rng = SeededRng::new(8);
    for (n, k) in [(2, 1), (3, 1), (3, 2)] {
        let delta = 0.1;
        let pts: Vec<Vec<f64>> = (0..150).map(|_| (0..n).map(|_| rng.uniform()).collect()).collect();
        let cloud = PointCloud::from_points(n, delta, pts).unwrap();
        let full = build_delta_net(n, k, delta, 0.02, 1).unwrap();
        let net = DeltaNet::new(delta, 1, full.members().iter().take(40).cloned().collect()).unwrap();
        for eta in [1.5 * delta, 4.0 * delta, 0.2] {
            let fast = energy(&cloud, &net, eta).unwrap();
            let slow = energy_brute_force(&cloud, &net, eta).unwrap();
            assert_eq!(fast.per_direction, slow.per_direction, "({n},{k}) η={eta}");
            assert!(fast.per_direction.iter().all(|c| c % 2 == 0));
        }
    }
}

#[test]
fn subspace_constructors_agree() {
    let a = Subspace::coordinate(3, &[0, 2]).unwrap();
    let b = Subspace::spanned_by(&[vec![1.0, 0.0, 1.0], vec![1.0, 0.0, -1.0]]).unwrap();
    assert!(metric(&a, &b) < 1e-12);
}
