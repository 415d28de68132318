use g2kit_core::builders::{bundled_pair, sphere, BUNDLED_PAIRS};
use g2kit_core::lagr::{boundary_data, format_bmap, is_lagrangian, parse_bmap, AlphaMode, LagrError};
use g2kit_core::mesh::SimplicialComplex;
use g2kit_core::rational::QMatrix;
use num_rational::BigRational;
use proptest::prelude::*;

fn pair(name: &str) -> (SimplicialComplex, SimplicialComplex, Vec<usize>) {
    bundled_pair(name).expect("bundled pair")
}

#[test]
fn bundled_pairs_give_lagrangians() {
    // half-dimensions of H²(L) ⊕ H¹(L) for S³, S¹×S² and T³
    for (name, m) in BUNDLED_PAIRS.iter().zip([0, 1, 3]) {
        let (c, l, map) = pair(name);
        let data = boundary_data(&c, &l, &map, &AlphaMode::FullImage).unwrap();
        assert_eq!(data.space.half_dim(), m, "{name}");
        assert!(data.is_lagrangian(), "{name}");
        assert!(data.sequence_is_exact(), "{name}: {:?}", data.nodes);
    }
}

#[test]
fn restriction_ranks_on_the_solid_torus_pair() {
    let (c, l, map) = pair("d2t2_t3");
    let data = boundary_data(&c, &l, &map, &AlphaMode::FullImage).unwrap();
    assert_eq!((data.alpha.ncols(), data.alpha.rank()), (1, 1));
    assert_eq!((data.beta.ncols(), data.beta.rank()), (2, 2));
}

#[test]
fn zero_subspace_is_not_lagrangian() {
    let (c, l, map) = pair("d2t2_t3");
    let data = boundary_data(&c, &l, &map, &AlphaMode::Subspace(QMatrix::zeros(1, 1))).unwrap();
    assert!(!data.is_lagrangian());
    assert!(boundary_data(&c, &l, &map, &AlphaMode::Subspace(QMatrix::zeros(2, 1))).is_err());
}

#[test]
fn whole_space_is_not_lagrangian() {
    for name in ["s1d3_s1s2", "d2t2_t3"] {
        let (c, l, map) = pair(name);
        let data = boundary_data(&c, &l, &map, &AlphaMode::FullImage).unwrap();
        let n = 2 * data.space.half_dim();
        assert!(!is_lagrangian(&QMatrix::identity(n), &data.space));
    }
}

#[test]
fn reversed_boundary_is_an_orientation_mismatch() {
    let (c, l, map) = pair("s1d3_s1s2");
    let flipped: Vec<Vec<usize>> = l.simplices().iter().map(|s| [vec![s[1], s[0]], s[2..].to_vec()].concat()).collect();
    let l2 = SimplicialComplex::new(3, l.n_vertices(), flipped).unwrap();
    assert!(matches!(boundary_data(&c, &l2, &map, &AlphaMode::FullImage), Err(LagrError::OrientationMismatch(_))));
}

#[test]
fn a_closed_manifold_of_the_wrong_shape_is_not_a_boundary() {
    let (c, _, _) = pair("d4_s3");
    let l = sphere(3);
    let map: Vec<usize> = (0..l.n_vertices()).collect();
    let short = vec![0, 1, 2];
    assert!(matches!(boundary_data(&c, &l, &short, &AlphaMode::FullImage), Err(LagrError::NotBoundary(_))));
    let (c2, _, _) = pair("s1d3_s1s2");
    assert!(matches!(boundary_data(&c2, &l, &map, &AlphaMode::FullImage), Err(LagrError::NotBoundary(_))));
}

#[test]
fn bmap_files_round_trip_through_the_pairs() {
    for name in BUNDLED_PAIRS {
        let (_, l, map) = pair(name);
        assert_eq!(parse_bmap(&format_bmap(&map), l.n_vertices()).unwrap(), map);
    }
}

fn q(x: i64) -> BigRational {
    BigRational::from_integer(x.into())
}

/// `x ↦ x + λ ω(v, x) v`.
fn transvection(omega: &QMatrix, v: &[i64], lambda: i64) -> QMatrix {
    let n = v.len();
    let vv = QMatrix::from_fn(n, n, |r, c| q(lambda * v[r] * v[c]));
    let mut p = vv.mul(omega);
    for i in 0..n {
        p[(i, i)] += q(1);
    }
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn lagrangian_property_is_symplectically_invariant(
        v in prop::collection::vec(-3i64..=3, 6),
        w in prop::collection::vec(-3i64..=3, 6),
        lambda in -2i64..=2,
        mu in -2i64..=2,
        mix in prop::collection::vec(-2i64..=2, 9),
    ) {
        let (c, l, map) = pair("d2t2_t3");
        let data = boundary_data(&c, &l, &map, &AlphaMode::FullImage).unwrap();
        let s = &data.space;
        let p = transvection(s.pairing(), &v, lambda).mul(&transvection(s.pairing(), &w, mu));
        prop_assert_eq!(p.transpose().mul(s.pairing()).mul(&p), s.pairing().clone());
        let lag = data.image_span();
        prop_assert!(is_lagrangian(&p.mul(&lag), s));
        // a generic 3-dimensional subspace is usually not Lagrangian; its
        // image must agree either way
        let other = lag.mul(&QMatrix::from_i64(3, 3, &mix)).hcat(&QMatrix::identity(6).columns(&[0]));
        prop_assert_eq!(is_lagrangian(&other, s), is_lagrangian(&p.mul(&other), s));
    }
}
