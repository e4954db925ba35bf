use std::sync::Arc;

use nalgebra::{Matrix2, Point2, Vector2};
use proptest::prelude::*;

use porofem::constitutive::{compute_kappas, from_pseudo, to_pseudo, MaterialParams, StressModel};
use porofem::fem::assembly::{assemble_bilinear, mass_kernel, stiffness_kernel};
use porofem::fem::{apply_dirichlet, solve_linear, DirichletSet, FunctionSpace, QuadratureRule};
use porofem::mesh::Mesh;
use porofem::mms::output::total_variation;
use porofem::mms::{rate, Rate};

fn params() -> impl Strategy<Value = (f64, f64, f64)> {
    (0.05f64..=1.0, -4.0f64..3.0, -6.0f64..0.0).prop_map(|(a, l, c)| (a, 10f64.powf(l), 10f64.powf(c)))
}

fn matrix2(scale: f64) -> impl Strategy<Value = Matrix2<f64>> {
    prop::array::uniform4(-scale..scale).prop_map(|v| Matrix2::new(v[0], v[1], v[2], v[3]))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kappa_identities_hold((alpha, lambda, c0) in params()) {
        let k = compute_kappas(lambda, alpha, c0).unwrap();
        prop_assert!((alpha * k.kappa1 + c0 * k.kappa2 - 1.0).abs() < 1e-13);
        prop_assert!((lambda * k.kappa1 - alpha * k.kappa2).abs() <= 1e-13 * (lambda * k.kappa1).abs().max(1e-300));
        prop_assert!((c0 * k.kappa1 - alpha * k.kappa3).abs() <= 1e-13 * (c0 * k.kappa1).abs().max(1e-300));
    }

    #[test]
    fn pseudo_variables_invert((alpha, lambda, c0) in params(), p in -10.0f64..10.0, q in -10.0f64..10.0) {
        let params = MaterialParams::from_lame(lambda, 1.0, alpha, c0, 1.0, 1.0).unwrap();
        let k = params.kappas().unwrap();
        let (xi, eta) = to_pseudo(&[p], &[q], &params);
        let (p2, q2) = from_pseudo(&xi, &eta, &k);
        let sp = (k.kappa1 * xi[0]).abs() + (k.kappa2 * eta[0]).abs();
        let sq = (k.kappa1 * eta[0]).abs() + (k.kappa3 * xi[0]).abs();
        prop_assert!((p2[0] - p).abs() <= 1e-13 * sp.max(1e-300));
        prop_assert!((q2[0] - q).abs() <= 1e-13 * sq.max(1e-300));
    }

    #[test]
    fn tangent_is_linear_in_direction(g in matrix2(0.5), w in matrix2(1.0), s in -3.0f64..3.0) {
        for model in [StressModel::Linear { lambda: 1.0, mu: 0.6 }, StressModel::Test1 { lambda: 4e-4, mu: 4.8e-3 }] {
            let a = model.tangent(&g, &(w * s));
            let b = model.tangent(&g, &w) * s;
            prop_assert!((a - b).norm() <= 1e-12 * (1.0 + b.norm()));
        }
    }

    #[test]
    fn sigma_adds_volumetric_part(g in matrix2(0.5)) {
        let m = StressModel::Test1 { lambda: 0.3, mu: 0.2 };
        let diff = m.sigma(&g) - m.stress_n(&g);
        prop_assert!((diff - Matrix2::identity() * (0.3 * g.trace())).norm() < 1e-14);
    }

    #[test]
    fn refinement_matches_direct_generation(n in 1usize..6) {
        let fine = Mesh::unit_square(n).unwrap().refine();
        let direct = Mesh::unit_square(2 * n).unwrap();
        let key = |m: &Mesh| {
            let mut v: Vec<(i64, i64)> = m.vertices().iter().map(|p| ((p.x * 1e9).round() as i64, (p.y * 1e9).round() as i64)).collect();
            v.sort_unstable();
            v
        };
        prop_assert_eq!(key(&fine), key(&direct));
        prop_assert_eq!(fine.triangle_count(), direct.triangle_count());
        prop_assert!((fine.total_area() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn p2_interpolates_quadratics_exactly(c in prop::array::uniform6(-2.0f64..2.0), n in 1usize..5, x in 0.0f64..1.0, y in 0.0f64..1.0) {
        let space = FunctionSpace::p2_vector(Arc::new(Mesh::unit_square(n).unwrap()));
        let f = |p: &Point2<f64>| {
            let v = c[0] + c[1] * p.x + c[2] * p.y + c[3] * p.x * p.x + c[4] * p.x * p.y + c[5] * p.y * p.y;
            Vector2::new(v, -v)
        };
        let coeffs = space.interpolate(f);
        let pt = Point2::new(x, y);
        let got = space.evaluate_at(&coeffs, &pt).unwrap();
        prop_assert!((got - f(&pt)).norm() < 1e-12);
    }

    #[test]
    fn mass_and_stiffness_invariants(n in 1usize..7) {
        let mesh = Arc::new(Mesh::unit_square(n).unwrap());
        let rule = QuadratureRule::default();
        let p1 = FunctionSpace::p1_scalar(mesh);
        let m = assemble_bilinear(&rule, &p1, &p1, mass_kernel).unwrap();
        let k = assemble_bilinear(&rule, &p1, &p1, stiffness_kernel).unwrap();
        prop_assert!((m.values().iter().sum::<f64>() - 1.0).abs() < 1e-13);
        let ones = vec![1.0; p1.dof_count()];
        prop_assert!(k.matvec(&ones).iter().all(|v| v.abs() < 1e-12));
        prop_assert!(m.asymmetry() < 1e-15 && k.asymmetry() < 1e-15);
    }

    #[test]
    fn dirichlet_values_are_reproduced(n in 2usize..6, value in -3.0f64..3.0) {
        let mesh = Arc::new(Mesh::unit_square(n).unwrap());
        let p1 = FunctionSpace::p1_scalar(mesh.clone());
        let mut k = assemble_bilinear(&QuadratureRule::default(), &p1, &p1, stiffness_kernel).unwrap();
        let mut b = vec![0.0; p1.dof_count()];
        let mut set = DirichletSet::new();
        for (i, v) in mesh.vertices().iter().enumerate() {
            if v.x == 0.0 || v.x == 1.0 || v.y == 0.0 || v.y == 1.0 {
                set.insert(i, value).unwrap();
            }
        }
        apply_dirichlet(&mut k, &mut b, &set).unwrap();
        let x = solve_linear(&k, &b).unwrap();
        prop_assert!(x.iter().all(|v| (v - value).abs() < 1e-10));
    }

    #[test]
    fn total_variation_bounds(v in prop::collection::vec(-5.0f64..5.0, 2..40)) {
        let tv = total_variation(&v);
        prop_assert!(tv + 1e-12 >= (v[v.len() - 1] - v[0]).abs());
        let mut sorted = v.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        prop_assert!((total_variation(&sorted) - (sorted[sorted.len() - 1] - sorted[0])).abs() < 1e-12);
    }

    #[test]
    fn rate_of_exact_power_law(e in 1e-8f64..1.0, r in 0.5f64..4.0) {
        match rate(e, e / 2f64.powf(r)) {
            Rate::Value(got) => prop_assert!((got - r).abs() < 1e-12),
            Rate::Exact => prop_assert!(e < 1e-11),
        }
    }
}
