use convex_reduction::alpha1d::{
    g_function, normalized_moment, random_alpha_concave, FnProfile, Profile1D,
};
use convex_reduction::ballbodies::{ballbody_radial, logconcave_factor};
use convex_reduction::bodies::{isotropic_normalize, isotropy_data, ConvexBody, IsotropyMethod};
use convex_reduction::covariogram::Covariogram;
use convex_reduction::verifier::{theorem1_verify, Theorem1Config};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn unit(a: f64) -> [f64; 2] {
    [a.cos(), a.sin()]
}

/// A well-conditioned 2x2 matrix.
fn matrix() -> impl Strategy<Value = DMatrix<f64>> {
    (
        0.5f64..2.0,
        0.5f64..2.0,
        -0.7f64..0.7,
        0.0..std::f64::consts::PI,
    )
        .prop_map(|(a, b, s, rot)| {
            let (c, t) = (rot.cos(), rot.sin());
            let r = DMatrix::from_row_slice(2, 2, &[c, -t, t, c]);
            let d = DMatrix::from_row_slice(2, 2, &[a, s, 0.0, b]);
            r * d
        })
}

/// Points on a circle, one per sector, so always in convex position.
fn polygon() -> impl Strategy<Value = ConvexBody> {
    (3usize..8)
        .prop_flat_map(|k| {
            (
                Just(k),
                prop::collection::vec((0.1f64..0.9, 0.5f64..2.0), k),
            )
        })
        .prop_map(|(k, pts)| {
            let verts = pts
                .iter()
                .enumerate()
                .map(|(i, (f, r))| {
                    let a = (i as f64 + f) * 2.0 * std::f64::consts::PI / k as f64;
                    vec![r * a.cos(), r * a.sin()]
                })
                .collect();
            ConvexBody::polytope(verts).unwrap()
        })
}

fn planar_body() -> impl Strategy<Value = ConvexBody> {
    prop_oneof![
        (matrix(), -1.0f64..1.0, -1.0f64..1.0).prop_map(|(m, a, b)| ConvexBody::cube(2, 1.0)
            .unwrap()
            .affine(m, vec![a, b])
            .unwrap()),
        (matrix(), -1.0f64..1.0).prop_map(|(m, a)| ConvexBody::regular_simplex(2)
            .unwrap()
            .affine(m, vec![a, 0.0])
            .unwrap()),
        (0.3f64..2.0).prop_map(|r| ConvexBody::ball(2, r).unwrap()),
        polygon(),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn covariogram_is_even(body in planar_body(), a in 0.0f64..6.3, s in 0.0f64..1.2) {
        let g = Covariogram::closed_form(body).unwrap();
        let u = unit(a);
        let r = g.support_radius(&u).unwrap();
        let x = [s * r * u[0], s * r * u[1]];
        let y = [-x[0], -x[1]];
        prop_assert!((g.value(&x) - g.value(&y)).abs() <= 1e-12 * g.value_at_origin());
    }

    #[test]
    fn covariogram_support_is_the_difference_body(body in planar_body(), a in 0.0f64..6.3, s in 0.0f64..0.98) {
        let g = Covariogram::closed_form(body).unwrap();
        let u = unit(a);
        let r = g.support_radius(&u).unwrap();
        prop_assert!(g.value(&[s * r * u[0], s * r * u[1]]) > 0.0);
        let t = r * (1.02 + s);
        prop_assert_eq!(g.value(&[t * u[0], t * u[1]]), 0.0);
    }

    #[test]
    fn covariogram_decreases_along_rays(body in planar_body(), a in 0.0f64..6.3) {
        let g = Covariogram::closed_form(body).unwrap();
        let u = unit(a);
        let r = g.support_radius(&u).unwrap();
        let vals: Vec<f64> = (0..=40).map(|k| {
            let t = r * k as f64 / 40.0;
            g.value(&[t * u[0], t * u[1]])
        }).collect();
        prop_assert!((vals[0] - g.value_at_origin()).abs() <= 1e-12 * vals[0]);
        for w in vals.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-15);
        }
    }

    #[test]
    fn sampled_covariogram_agrees_with_closed_form(body in planar_body(), a in 0.0f64..6.3, s in 0.0f64..0.9, seed in 0u64..1000) {
        let exact = Covariogram::closed_form(body.clone()).unwrap();
        let mc = Covariogram::monte_carlo(body, 20_000, seed).unwrap();
        let u = unit(a);
        let r = exact.support_radius(&u).unwrap();
        let x = [s * r * u[0], s * r * u[1]];
        let e = mc.eval(&x).unwrap();
        prop_assert!((e.value - exact.value(&x)).abs() <= 5.0 * e.error + 1e-9);
    }

    #[test]
    fn ball_bodies_are_nested(body in planar_body(), a in 0.0f64..6.3, p in 0.5f64..6.0, dq in 0.1f64..4.0) {
        let g = Covariogram::closed_form(body).unwrap();
        let u = unit(a);
        let q = p + dq;
        let rp = ballbody_radial(&g, p, &u, 1e-11).unwrap().value;
        let rq = ballbody_radial(&g, q, &u, 1e-11).unwrap().value;
        prop_assert!(rp <= rq * (1.0 + 1e-9));
        // Gamma(1+p)^(-1/p) rho_p decreases
        prop_assert!(logconcave_factor(p, q).unwrap() * rq <= rp * (1.0 + 1e-9));
    }

    #[test]
    fn radial_function_is_the_one_dimensional_moment(body in planar_body(), a in 0.0f64..6.3, p in 0.5f64..6.0) {
        let g = Covariogram::closed_form(body).unwrap();
        let u = unit(a);
        let r = g.support_radius(&u).unwrap();
        let g2 = g.clone();
        let profile = FnProfile::new("ray", r, vec![], move |t| g2.value(&[t * u[0], t * u[1]]));
        let m = normalized_moment(&profile, p, 1e-12).unwrap().value;
        let rho = ballbody_radial(&g, p, &u, 1e-12).unwrap().value;
        prop_assert!((m.powf(1.0 / p) - rho).abs() <= 1e-7 * rho);
    }

    #[test]
    fn ratio_is_affine_invariant(m in matrix(), which in 0usize..2) {
        let base = if which == 0 { ConvexBody::cube(2, 1.0).unwrap() } else { ConvexBody::regular_simplex(2).unwrap() };
        let cfg = Theorem1Config { dirs_2d: 64, ..Default::default() };
        let a = theorem1_verify(&base, &cfg).unwrap();
        let b = theorem1_verify(&base.affine(m, vec![0.3, -0.2]).unwrap(), &cfg).unwrap();
        prop_assert!((a.ratio.value - b.ratio.value).abs() <= 1e-7);
        prop_assert!((a.l_k.value - b.l_k.value).abs() <= 1e-9);
    }

    #[test]
    fn membership_matches_minkowski_functional(body in planar_body(), x in -3.0f64..3.0, y in -3.0f64..3.0) {
        let data = isotropy_data(&body, IsotropyMethod::Exact).unwrap();
        let k = isotropic_normalize(&body, &data).unwrap();
        let mf = k.minkowski_functional(&[x, y]).unwrap();
        prop_assume!((mf - 1.0).abs() > 1e-9);
        prop_assert_eq!(k.contains(&[x, y]).unwrap(), mf < 1.0);
    }

    #[test]
    fn g_scales_with_stretching(seed in 0u64..10_000, alpha in 0.2f64..1.0, lambda in 0.2f64..5.0, p in 0.5f64..8.0) {
        let f = random_alpha_concave(seed, alpha, 1.0, 4).unwrap();
        let a = f.g(p, 1e-12).unwrap().value;
        let b = f.stretched(lambda).unwrap().g(p, 1e-12).unwrap().value;
        prop_assert!((b - lambda * a).abs() <= 1e-9 * b);
    }

    #[test]
    fn g_ignores_vertical_scaling(seed in 0u64..10_000, alpha in 0.2f64..1.0, c in 0.1f64..10.0, p in 0.5f64..8.0) {
        let f = random_alpha_concave(seed, alpha, 1.5, 3).unwrap();
        let h = f.clone();
        let scaled = FnProfile::new("scaled", f.support_end(), f.breakpoints(), move |t| c * h.value(t));
        let a = g_function(&f, alpha, p, 1e-12).unwrap().value;
        let b = g_function(&scaled, alpha, p, 1e-12).unwrap().value;
        prop_assert!((a - b).abs() <= 1e-10 * a);
    }
}
