use pcurve_core::curve::VertexWindow;
use pcurve_core::diagnostics::convex_clip;
use pcurve_core::energy::fixed_plan_objective;
use pcurve_core::oracle::{brute_force_min, OracleConfig};
use pcurve_core::projection::{project_point, Target};
use pcurve_core::*;
use proptest::prelude::*;

fn point() -> impl Strategy<Value = [f64; 2]> {
    [-1.0f64..1.0, -1.0f64..1.0]
}

fn polyline(min: usize, max: usize) -> impl Strategy<Value = Polyline> {
    prop::collection::vec(point(), min..=max)
        .prop_filter("segments longer than 1e-3", |pts| {
            pts.windows(2).all(|w| (w[0][0] - w[1][0]).hypot(w[0][1] - w[1][1]) > 1e-3)
        })
        .prop_map(|pts| Polyline::new(2, pts.concat()).unwrap())
}

fn measure(max: usize) -> impl Strategy<Value = DiscreteMeasure> {
    prop::collection::vec((point(), 0.1f64..1.0), 1..=max).prop_map(|atoms| {
        let coords: Vec<f64> = atoms.iter().flat_map(|(x, _)| *x).collect();
        let masses = atoms.iter().map(|(_, m)| *m).collect();
        DiscreteMeasure::new(2, coords, masses).unwrap()
    })
}

fn rotation(theta: f64) -> [f64; 4] {
    let (s, c) = theta.sin_cos();
    [c, -s, s, c]
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Distance from `x` to the curve, written independently of the library.
fn naive_distance(x: &[f64], c: &Polyline) -> f64 {
    if c.num_vertices() == 1 {
        return dist(x, c.vertex(0));
    }
    (0..c.num_segments())
        .map(|s| {
            let (a, b) = (c.vertex(s), c.vertex(s + 1));
            let u = [b[0] - a[0], b[1] - a[1]];
            let w = [x[0] - a[0], x[1] - a[1]];
            let t = ((w[0] * u[0] + w[1] * u[1]) / (u[0] * u[0] + u[1] * u[1])).clamp(0.0, 1.0);
            (w[0] - t * u[0]).hypot(w[1] - t * u[1])
        })
        .fold(f64::INFINITY, f64::min)
}

fn naive_energy(mu: &DiscreteMeasure, c: &Polyline, p: f64, lambda: f64) -> f64 {
    mu.atoms().map(|(x, m)| m * naive_distance(x, c).powf(p)).sum::<f64>() + lambda * c.length()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn total_mass_is_sum_of_masses(mu in measure(20)) {
        let s: f64 = mu.masses().iter().sum();
        prop_assert!((mu.total_mass() - s).abs() <= f64::EPSILON * mu.len() as f64 * s);
    }

    #[test]
    fn hull_contains_every_atom(mu in measure(30)) {
        let hull = mu.convex_hull_2d().unwrap();
        let tol = 1e-12 * mu.diameter().max(1e-300);
        if hull.len() >= 3 {
            for (x, _) in mu.atoms() {
                for k in 0..hull.len() {
                    let (a, b) = (hull[k], hull[(k + 1) % hull.len()]);
                    let e = [b[0] - a[0], b[1] - a[1]];
                    let len = e[0].hypot(e[1]);
                    let signed = (e[0] * (x[1] - a[1]) - e[1] * (x[0] - a[0])) / len;
                    prop_assert!(signed >= -tol, "atom {x:?} outside edge {a:?}->{b:?} by {signed}");
                }
            }
        }
        let poly = ConvexPolygon::of_measure(&mu).unwrap();
        for (x, _) in mu.atoms() {
            prop_assert!(poly.distance(x) <= tol.max(1e-15));
        }
    }

    #[test]
    fn diameter_is_rigid_motion_invariant(mu in measure(25), theta in 0.0f64..6.3, b in point()) {
        let d = mu.diameter();
        let moved = mu.transformed(&rotation(theta), &b);
        prop_assert!((moved.diameter() - d).abs() <= 1e-12 * d.max(1.0));
        let shifted = mu.transformed(&[1.0, 0.0, 0.0, 1.0], &b);
        prop_assert!((shifted.diameter() - d).abs() <= 1e-12 * d.max(1.0));
        let brute = (0..mu.len())
            .flat_map(|i| (0..mu.len()).map(move |j| (i, j)))
            .map(|(i, j)| dist(mu.position(i), mu.position(j)))
            .fold(0.0, f64::max);
        prop_assert!((d - brute).abs() <= 1e-15 * brute.max(1.0));
    }

    #[test]
    fn point_at_is_one_lipschitz(c in polyline(1, 8), u in 0.0f64..1.0, w in 0.0f64..1.0) {
        let (s, t) = (u * c.length(), w * c.length());
        let a = c.point_at(s).unwrap();
        let b = c.point_at(t).unwrap();
        prop_assert!(dist(&a, &b) <= (s - t).abs() + 1e-12);
    }

    #[test]
    fn split_preserves_length_and_points(c in polyline(2, 6), max_len in 0.05f64..1.0, u in 0.0f64..1.0) {
        let f = c.split_segments(max_len).unwrap();
        prop_assert!((f.length() - c.length()).abs() <= 1e-12 * c.length());
        prop_assert!((0..f.num_segments()).all(|s| f.segment_length(s) <= max_len * (1.0 + 1e-12)));
        let s = u * c.length();
        prop_assert!(dist(&f.point_at(s).unwrap(), &c.point_at(s).unwrap()) <= 1e-12);
    }

    #[test]
    fn turning_is_additive_over_windows(c in polyline(3, 10), a in 0usize..10, b in 0usize..10, e in 0usize..10) {
        let m = c.num_vertices();
        let mut idx = [a % m, b % m, e % m];
        idx.sort();
        let [a, b, e] = idx;
        prop_assume!(a < b && b < e);
        let whole = c.tv_gamma_prime(Some(VertexWindow::new(a, e))).unwrap();
        let left = c.tv_gamma_prime(Some(VertexWindow::new(a, b))).unwrap();
        let right = c.tv_gamma_prime(Some(VertexWindow::new(b, e))).unwrap();
        let at_b = c.turning_angles()[b - 1];
        prop_assert!((whole - (left + right + at_b)).abs() <= 1e-12);
    }

    #[test]
    fn signed_turning_magnitude_matches(c in polyline(3, 10)) {
        let signed = c.signed_turning_2d().unwrap();
        let plain = c.turning_angles();
        for (s, p) in signed.iter().zip(&plain) {
            prop_assert!((s.abs() - p).abs() <= 1e-12, "{s} vs {p}");
        }
    }

    #[test]
    fn curve_distance_is_pseudometric(a in polyline(1, 6), b in polyline(1, 6), c in polyline(1, 6)) {
        let ab = a.curve_distance(&b).unwrap();
        let ba = b.curve_distance(&a).unwrap();
        let bc = b.curve_distance(&c).unwrap();
        let ac = a.curve_distance(&c).unwrap();
        prop_assert_eq!(a.curve_distance(&a).unwrap(), 0.0);
        prop_assert!((ab - ba).abs() <= 1e-15);
        prop_assert!(ac <= ab + bc + 1e-12);
    }

    #[test]
    fn curve_distance_attains_sampled_gaps(a in polyline(1, 6), b in polyline(1, 6), u in 0.0f64..1.0) {
        // The breakpoint maximum must dominate the gap at any parameter.
        let t = u * a.length().max(b.length());
        let at = |c: &Polyline| c.point_at(t.min(c.length())).unwrap();
        prop_assert!(dist(&at(&a), &at(&b)) <= a.curve_distance(&b).unwrap() + 1e-12);
    }

    #[test]
    fn plan_marginal_is_mu(mu in measure(15), c in polyline(1, 6)) {
        let (plan, _) = build_plan(&mu, &c, TieRule::FirstArcLength).unwrap();
        prop_assert_eq!(plan.total_mass(), mu.total_mass());
        let (split, _) = build_plan(&mu, &c, TieRule::SplitEvenly).unwrap();
        prop_assert!((split.total_mass() - mu.total_mass()).abs() <= 1e-15 * mu.total_mass());
        for i in 0..mu.len() {
            let given: f64 = plan.atom_entries(i).iter().map(|e| e.mass).sum();
            prop_assert_eq!(given, mu.mass(i));
        }
    }

    #[test]
    fn plan_targets_are_nearest(mu in measure(10), c in polyline(1, 6), us in prop::collection::vec(0.0f64..1.0, 50)) {
        let (plan, _) = build_plan(&mu, &c, TieRule::FirstArcLength).unwrap();
        let samples: Vec<Vec<f64>> = us.iter().map(|u| c.point_at(u * c.length()).unwrap()).collect();
        for e in plan.entries() {
            let x = mu.position(e.atom);
            prop_assert!((e.distance - naive_distance(x, &c)).abs() <= 1e-12);
            for z in &samples {
                prop_assert!(e.distance <= dist(x, z) + 1e-12);
            }
            prop_assert!(dist(x, &e.target.point(&c)) <= e.distance + 1e-9);
        }
    }

    #[test]
    fn sigma_partitions_total_mass(mu in measure(15), c in polyline(1, 6), cut in 0usize..11) {
        let (plan, _) = build_plan(&mu, &c, TieRule::SplitEvenly).unwrap();
        let pieces = 2 * c.num_vertices() - 1;
        let cut = cut % (pieces + 1);
        let left = plan.sigma_mass(CurveSpan { start: 0, end: cut }).unwrap();
        let right = plan.sigma_mass(CurveSpan { start: cut, end: pieces }).unwrap();
        prop_assert!((left + right - mu.total_mass()).abs() <= 1e-12);
        let by_piece: f64 = plan.piece_masses().iter().sum();
        prop_assert!((by_piece - mu.total_mass()).abs() <= 1e-12);
    }

    #[test]
    fn projection_distance_is_one_lipschitz(x in point(), dx in point(), scale in 0.0f64..0.1, c in polyline(1, 6)) {
        let y = [x[0] + scale * dx[0], x[1] + scale * dx[1]];
        let a = project_point(&x, &c, 1e-12).unwrap().distance;
        let b = project_point(&y, &c, 1e-12).unwrap().distance;
        prop_assert!((a - b).abs() <= dist(&x, &y) + 1e-12);
    }

    #[test]
    fn energy_is_rigid_motion_invariant(mu in measure(12), c in polyline(1, 6), theta in 0.0f64..6.3, b in point(), p in 1.0f64..3.0) {
        let e = energy(&mu, &c, p, 0.1).unwrap().total;
        let r = rotation(theta);
        let moved = energy(&mu.transformed(&r, &b), &c.transformed(&r, &b), p, 0.1).unwrap().total;
        prop_assert!((moved - e).abs() <= 1e-12 * e.max(1.0));
        prop_assert!((e - naive_energy(&mu, &c, p, 0.1)).abs() <= 1e-12 * e.max(1.0));
    }

    #[test]
    fn hull_projection_never_raises_energy_or_length(mu in measure(12), c in polyline(1, 8), p in 1.0f64..3.0) {
        let hull = ConvexPolygon::of_measure(&mu).unwrap();
        let clipped = convex_clip(&c, &hull).unwrap();
        prop_assert!(clipped.length() <= c.length());
        for v in clipped.vertices() {
            prop_assert!(hull.distance(v) <= 1e-12);
        }
        let before = energy(&mu, &c, p, 0.2).unwrap().total;
        let after = energy(&mu, &clipped, p, 0.2).unwrap().total;
        prop_assert!(after <= before + 1e-12 * before.max(1.0));
    }

    #[test]
    fn fixed_plan_objective_is_midpoint_convex(
        mu in measure(10),
        c in polyline(2, 6),
        d1 in prop::collection::vec(-0.5f64..0.5, 12),
        d2 in prop::collection::vec(-0.5f64..0.5, 12),
        p in 1.0f64..3.0,
    ) {
        let (plan, _) = build_plan(&mu, &c, TieRule::FirstArcLength).unwrap();
        let n = c.coords().len();
        let a: Vec<f64> = c.coords().iter().zip(d1.iter().cycle()).map(|(x, d)| x + d).take(n).collect();
        let b: Vec<f64> = c.coords().iter().zip(d2.iter().cycle()).map(|(x, d)| x + d).take(n).collect();
        let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
        let f = |v: &[f64]| fixed_plan_objective(&mu, &plan, v, p, 0.3);
        prop_assert!(f(&mid) <= 0.5 * (f(&a) + f(&b)) + 1e-12);
    }
}

/// Central differences of the independent energy, with every coordinate
/// perturbation required to keep each atom's nearest piece unchanged.
fn fd_check(mu: &DiscreteMeasure, c: &Polyline, p: f64, lambda: f64) -> Option<f64> {
    let (plan, _) = build_plan(mu, c, TieRule::FirstArcLength).ok()?;
    let pieces = |c: &Polyline| -> Option<Vec<usize>> {
        let (pl, _) = build_plan(mu, c, TieRule::FirstArcLength).ok()?;
        Some(pl.entries().iter().map(|e| e.target.piece()).collect())
    };
    let base = pieces(c)?;
    if plan.entries().iter().any(|e| e.distance < 1e-3) {
        return None;
    }
    let g = gradient(mu, c, p, lambda, &plan).ok()?;
    let h = 1e-6 * mu.diameter().max(1.0);
    let mut fd = vec![0.0; g.len()];
    for k in 0..g.len() {
        let mut up = c.coords().to_vec();
        let mut dn = c.coords().to_vec();
        up[k] += h;
        dn[k] -= h;
        let cu = Polyline::new(2, up).ok()?;
        let cd = Polyline::new(2, dn).ok()?;
        if pieces(&cu)? != base || pieces(&cd)? != base {
            return None;
        }
        fd[k] = (naive_energy(mu, &cu, p, lambda) - naive_energy(mu, &cd, p, lambda)) / (2.0 * h);
    }
    let err: f64 = g.iter().zip(&fd).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let scale: f64 = fd.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-8);
    Some(err / scale)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn gradient_matches_finite_differences(mu in measure(8), c in polyline(1, 6), pick in 0usize..3, lambda in 0.01f64..1.0) {
        let p = [1.5, 2.0, 3.0][pick];
        let rel = fd_check(&mu, &c, p, lambda);
        prop_assume!(rel.is_some());
        prop_assert!(rel.unwrap() < 1e-5, "relative error {rel:?}");
    }
}

#[test]
fn gradient_segment_targets_fold_barycentrically() {
    // Atom above the middle of a segment: its pull splits evenly.
    let mu = DiscreteMeasure::uniform(2, &[&[0.5, 0.4]]).unwrap();
    let c = Polyline::from_points(&[&[0.0, 0.0], &[1.0, 0.0]]).unwrap();
    let (plan, _) = build_plan(&mu, &c, TieRule::FirstArcLength).unwrap();
    assert_eq!(plan.entries()[0].target, Target::Segment { segment: 0, t: 0.5 });
    let g = gradient(&mu, &c, 2.0, 0.1, &plan).unwrap();
    assert!((g[1] + 0.4).abs() < 1e-15 && (g[3] + 0.4).abs() < 1e-15, "{g:?}");
    assert!((g[0] + 0.1).abs() < 1e-15 && (g[2] - 0.1).abs() < 1e-15, "{g:?}");
}

#[test]
fn oracle_energy_decreases_as_grid_refines() {
    let mu = DiscreteMeasure::weighted(2, &[&[0.0, 0.0], &[1.0, 0.3], &[0.2, 0.9]], &[0.5, 0.3, 0.2]).unwrap();
    for (m, p, lambda) in [(1, 1.0, 0.1), (2, 2.0, 0.05), (3, 1.0, 0.05)] {
        let mut prev = f64::INFINITY;
        for h in [0.4, 0.2, 0.1, 0.05] {
            let e = brute_force_min(&mu, &OracleConfig::new(m, h, p, lambda)).unwrap().energy;
            assert!(e <= prev + 1e-15, "m {m} h {h}: {e} > {prev}");
            prev = e;
        }
    }
}

#[test]
fn tangent_variation_is_the_chord_sum_of_turning_angles() {
    let c = Polyline::from_points(&[&[0.0, 0.0], &[1.0, 0.0], &[1.0, 1.0], &[0.0, 1.0], &[0.0, 0.0]]).unwrap();
    let chord = 2.0 * std::f64::consts::FRAC_1_SQRT_2 * 2.0;
    assert!((c.tangent_variation(None).unwrap() - 3.0 * chord / 2.0).abs() < 1e-14);
    let back = Polyline::from_points(&[&[0.0, 0.0], &[1.0, 0.0], &[0.5, 0.0]]).unwrap();
    assert!((back.tangent_variation(None).unwrap() - 2.0).abs() < 1e-14);
}

proptest! {
    #[test]
    fn tangent_variation_never_exceeds_turning(pts in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 2..12)) {
        let flat: Vec<f64> = pts.iter().flat_map(|&(x, y)| [x, y]).collect();
        let c = Polyline::from_vertices_merged(2, flat).unwrap();
        let angles = c.turning_angles();
        for (j, t) in c.tangent_jumps().into_iter().zip(angles) {
            prop_assert!((j - 2.0 * (t / 2.0).sin()).abs() < 1e-12);
            prop_assert!(j <= t + 1e-15);
        }
    }
}
