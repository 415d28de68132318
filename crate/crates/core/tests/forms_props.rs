use g2kit_core::forms::{binomial, AlternatingForm, Metric};
use nalgebra::DMatrix;
use num_rational::Ratio;
use proptest::prelude::*;

type Q = Ratio<i64>;

fn rational_form(dim: usize, degree: usize) -> impl Strategy<Value = AlternatingForm<Q>> {
    prop::collection::vec(-3i64..=3, binomial(dim, degree)).prop_map(move |c| {
        AlternatingForm::from_coeffs(dim, degree, c.into_iter().map(Q::from_integer).collect()).unwrap()
    })
}

fn real_form(dim: usize, degree: usize) -> impl Strategy<Value = AlternatingForm<f64>> {
    prop::collection::vec(-1.0f64..1.0, binomial(dim, degree))
        .prop_map(move |c| AlternatingForm::from_coeffs(dim, degree, c).unwrap())
}

fn close(a: &AlternatingForm<f64>, b: &AlternatingForm<f64>, tol: f64) -> bool {
    a.degree() == b.degree() && a.coeffs().iter().zip(b.coeffs()).all(|(x, y)| (x - y).abs() <= tol)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn wedge_graded_commutative_exact(
        (a, b) in (0usize..=4, 0usize..=3)
            .prop_flat_map(|(p, q)| (rational_form(7, p), rational_form(7, q))),
    ) {
        let ab = a.wedge(&b).unwrap();
        let ba = b.wedge(&a).unwrap();
        let sign = if (a.degree() * b.degree()) % 2 == 1 { Q::from_integer(-1) } else { Q::from_integer(1) };
        prop_assert_eq!(ab, ba.scale(sign));
    }

    #[test]
    fn wedge_associative_exact(
        a in rational_form(7, 2),
        b in rational_form(7, 1),
        c in rational_form(7, 3),
    ) {
        let left = a.wedge(&b).unwrap().wedge(&c).unwrap();
        let right = a.wedge(&b.wedge(&c).unwrap()).unwrap();
        prop_assert_eq!(left, right);
    }

    #[test]
    fn interior_is_antiderivation_exact(
        a in rational_form(7, 2),
        b in rational_form(7, 3),
        v in prop::collection::vec(-4i64..=4, 7),
    ) {
        let v: Vec<Q> = v.into_iter().map(Q::from_integer).collect();
        let lhs = a.wedge(&b).unwrap().interior(&v).unwrap();
        let rhs = a.interior(&v).unwrap().wedge(&b).unwrap()
            .add(&a.wedge(&b.interior(&v).unwrap()).unwrap()).unwrap(); // (-1)^2 = +1
        prop_assert_eq!(lhs, rhs);
        prop_assert!(b.interior(&v).unwrap().interior(&v).unwrap().is_zero());
    }

    #[test]
    fn interior_antiderivation_odd_left_factor(
        a in rational_form(6, 3),
        b in rational_form(6, 2),
        v in prop::collection::vec(-4i64..=4, 6),
    ) {
        let v: Vec<Q> = v.into_iter().map(Q::from_integer).collect();
        let lhs = a.wedge(&b).unwrap().interior(&v).unwrap();
        let rhs = a.interior(&v).unwrap().wedge(&b).unwrap()
            .sub(&a.wedge(&b.interior(&v).unwrap()).unwrap()).unwrap();
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn double_hodge_sign_in_dimension_seven(k in 0usize..=7, seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let coeffs: Vec<f64> = (0..binomial(7, k)).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let a = AlternatingForm::from_coeffs(7, k, coeffs).unwrap();
        // random SPD metric
        let m = DMatrix::from_fn(7, 7, |_, _| rng.gen_range(-0.3..0.3));
        let g = Metric::new(DMatrix::identity(7, 7) + &m * m.transpose()).unwrap();
        let ss = a.hodge(&g, 1).unwrap().hodge(&g, 1).unwrap();
        let sign = if (k * (7 - k)) % 2 == 1 { -1.0 } else { 1.0 };
        prop_assert!(close(&ss, &a.scale(sign), 1e-10));
        // a ∧ ⋆a = |a|² vol_g
        let top = a.wedge(&a.hodge(&g, 1).unwrap()).unwrap();
        let expected = a.inner(&a, &g).unwrap() * g.det().sqrt();
        prop_assert!((top.coeffs()[0] - expected).abs() < 1e-10);
        prop_assert!(top.coeffs()[0] >= -1e-12);
    }

    #[test]
    fn pullback_functorial_and_commutes_with_wedge(
        a in real_form(7, 2),
        b in real_form(7, 1),
        m1 in prop::collection::vec(-1.0f64..1.0, 7 * 5),
        m2 in prop::collection::vec(-1.0f64..1.0, 5 * 4),
    ) {
        let a_map = DMatrix::from_vec(7, 5, m1);
        let b_map = DMatrix::from_vec(5, 4, m2);
        let composed = &a_map * &b_map;
        let direct = a.pullback(&composed).unwrap();
        let staged = a.pullback(&a_map).unwrap().pullback(&b_map).unwrap();
        prop_assert!(close(&direct, &staged, 1e-12));
        let lhs = a.wedge(&b).unwrap().pullback(&a_map).unwrap();
        let rhs = a.pullback(&a_map).unwrap().wedge(&b.pullback(&a_map).unwrap()).unwrap();
        prop_assert!(close(&lhs, &rhs, 1e-12));
    }
}

#[test]
fn pullback_identity_is_identity() {
    let a = AlternatingForm::<f64>::from_terms(7, 3, &[(&[0, 1, 4], 1.0), (&[4, 5, 6], -2.0)]).unwrap();
    assert_eq!(a.pullback(&DMatrix::identity(7, 7)).unwrap(), a);
}
