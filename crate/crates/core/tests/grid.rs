use fraclap::grid::{norm_l2_slice, signed};
use fraclap::{
    linear_index, make_mask, multi_index, norm_l2, norm_linf, shift_to_signed, DomainMask, Error, GridFunction,
    MaskShape, MultiIndex, ProblemParams,
};
use proptest::prelude::*;

#[test]
fn index_round_trip_exhaustive() {
    for d in 1..=3 {
        for side in [1usize, 2, 3, 4, 7, 8, 16] {
            for lin in 0..side.pow(d as u32) {
                let m = multi_index(lin, d, side).unwrap();
                assert_eq!(linear_index(&m, side).unwrap(), lin);
            }
        }
    }
}

#[test]
fn index_examples() {
    assert_eq!(linear_index(&MultiIndex::new(&[0, 0]), 4).unwrap(), 0);
    assert_eq!(linear_index(&MultiIndex::new(&[1, 2]), 4).unwrap(), 6);
    assert_eq!(linear_index(&MultiIndex::new(&[7, 7, 7]), 8).unwrap(), 511);
    assert!(matches!(linear_index(&MultiIndex::new(&[4, 0]), 4), Err(Error::Index(_))));
    assert!(matches!(linear_index(&MultiIndex::new(&[-1]), 4), Err(Error::Index(_))));
}

#[test]
fn shift_examples() {
    let f = |c| shift_to_signed(&MultiIndex::new(&[c]), 8).unwrap().as_slice()[0];
    assert_eq!(f(3), 3);
    assert_eq!(f(4), -4);
    assert_eq!(f(7), -1);
}

#[test]
fn norm_examples() {
    let p = ProblemParams::new(1, 4, 0.5).unwrap();
    assert_eq!(norm_l2(&GridFunction::zeros(p)), 0.0);
    assert_eq!(norm_l2(&GridFunction::constant(p, 2.0)), 2.0);
    let q = ProblemParams::new(3, 8, 0.5).unwrap();
    assert!((norm_l2(&GridFunction::constant(q, 1.0)) - 1.0).abs() < 1e-15);
    let u = GridFunction::new(p, vec![0.0, -3.0, 1.0, 2.0]).unwrap();
    assert_eq!(norm_linf(&u), 3.0);
}

#[test]
fn cube_mask_is_full() {
    for d in 1..=3 {
        let p = ProblemParams::new(d, 4, 0.5).unwrap();
        let m = make_mask(&p, &MaskShape::Cube).unwrap();
        assert!(m.is_full());
        assert_eq!(m.count(), p.len());
    }
}

#[test]
fn lshape_removes_closed_quadrant() {
    let p = ProblemParams::new(2, 8, 0.5).unwrap();
    let m = make_mask(&p, &MaskShape::LShape).unwrap();
    assert_eq!(m.count(), 64 - 16);
    // (4,4) is the corner point x = (1/2, 1/2)
    assert!(!m.selected()[4 * 8 + 4]);
    assert!(m.selected()[3 * 8 + 7]);
    let p3 = ProblemParams::new(3, 8, 0.5).unwrap();
    assert!(matches!(make_mask(&p3, &MaskShape::LShape), Err(Error::Geometry(_))));
}

#[test]
fn mask_rejects_wrong_length() {
    let p = ProblemParams::new(2, 4, 0.5).unwrap();
    assert!(DomainMask::new(p, vec![true; 15]).is_err());
}

#[test]
fn invalid_params() {
    assert!(matches!(ProblemParams::new(4, 8, 0.5), Err(Error::Config(_))));
    assert!(matches!(ProblemParams::new(2, 6, 0.5), Ok(_)));
    assert!(matches!(ProblemParams::new(2, 7, 0.5), Err(Error::Config(_))));
    assert!(matches!(ProblemParams::new(2, 2, 0.5), Err(Error::Config(_))));
    assert!(matches!(ProblemParams::new(2, 8, 0.0), Err(Error::Domain(_))));
    assert!(matches!(ProblemParams::new(2, 8, 1.5), Err(Error::Domain(_))));
}

proptest! {
    #[test]
    fn shift_is_bijective_involution(half in 1usize..64) {
        let m = 2 * half;
        let mut seen = std::collections::HashSet::new();
        for c in 0..m {
            let v = signed(c, m);
            prop_assert!(v >= -(half as i64) && v < half as i64);
            prop_assert!(seen.insert(v));
            prop_assert_eq!(v.rem_euclid(m as i64) as usize, c);
        }
    }

    #[test]
    fn multi_index_round_trip(d in 1usize..=3, side in 1usize..=16, frac in 0.0f64..1.0) {
        let len = side.pow(d as u32);
        let lin = ((frac * len as f64) as usize).min(len - 1);
        let m = multi_index(lin, d, side).unwrap();
        prop_assert!(m.as_slice().iter().all(|&c| c >= 0 && (c as usize) < side));
        prop_assert_eq!(linear_index(&m, side).unwrap(), lin);
    }

    #[test]
    fn l2_norm_is_a_norm(
        a in proptest::collection::vec(-10.0f64..10.0, 64),
        b in proptest::collection::vec(-10.0f64..10.0, 64),
        t in -5.0f64..5.0,
    ) {
        let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        prop_assert!(norm_l2_slice(&sum) <= norm_l2_slice(&a) + norm_l2_slice(&b) + 1e-12);
        let scaled: Vec<f64> = a.iter().map(|x| t * x).collect();
        prop_assert!((norm_l2_slice(&scaled) - t.abs() * norm_l2_slice(&a)).abs() <= 1e-12 * (1.0 + norm_l2_slice(&scaled)));
    }
}
