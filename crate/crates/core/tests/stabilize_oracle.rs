//! Engine versus the brute-force subspace model in `common::subspace`.

mod common;

use algebroid_mech::stabilize::{stabilize, LinearImplicitSystem, Subspace};
use common::subspace::{check_instance, oracle};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn small_int() -> impl Strategy<Value = f64> {
    (-2i32..=2).prop_map(f64::from)
}

fn instance() -> impl Strategy<Value = (usize, usize, DMatrix<f64>, DMatrix<f64>)> {
    (1usize..=3, 1usize..=3, 0usize..=4).prop_flat_map(|(m, n, rows)| {
        let dim = m + n;
        (
            Just(m),
            Just(n),
            prop::collection::vec(small_int(), m * n)
                .prop_map(move |v| DMatrix::from_row_slice(m, n, &v)),
            prop::collection::vec(small_int(), rows * (dim + 1))
                .prop_map(move |v| DMatrix::from_row_slice(rows, dim + 1, &v)),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 300, ..ProptestConfig::default() })]

    #[test]
    fn matches_brute_force((m, n, anchor, eq) in instance()) {
        check_instance(m, n, anchor, eq);
    }
}

#[test]
fn demo_against_oracle() {
    let eq = DMatrix::from_row_slice(2, 5, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
    let (_, hist) = oracle(2, 2, &DMatrix::identity(2, 2), &eq);
    assert_eq!(hist, [Some(2), Some(1), Some(1)]);
    check_instance(2, 2, DMatrix::identity(2, 2), eq);
}

#[test]
fn shift_chain_needs_several_rounds() {
    // R sends f1 to b1 and f2 to b2; S0 = {b1 = 0, f1 = b2, f2 = b3}
    let mut anchor = DMatrix::zeros(3, 3);
    anchor[(0, 0)] = 1.0;
    anchor[(1, 1)] = 1.0;
    #[rustfmt::skip]
    let eq = DMatrix::from_row_slice(3, 7, &[
        1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0,
        0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0,
        0.0, 0.0, -1.0, 0.0, 1.0, 0.0, 0.0,
    ]);
    let (_, hist) = oracle(3, 3, &anchor, &eq);
    assert_eq!(hist, [Some(3), Some(2), Some(1), Some(1)]);
    check_instance(3, 3, anchor, eq);
}

#[test]
fn affine_offset_survives() {
    let m = Subspace::from_equations(
        &DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0]),
        &DVector::from_row_slice(&[2.0]),
    );
    let sys = LinearImplicitSystem::new(DMatrix::from_row_slice(1, 2, &[1.0, 1.0]), m).unwrap();
    let r = stabilize(&sys);
    assert_eq!(r.history.last(), Some(&Some(1)));
    assert!(
        r.s_inf
            .distance(&DVector::from_row_slice(&[2.0, 1.0, -1.0]))
            < 1e-12
    );
    check_instance(
        1,
        2,
        DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
        DMatrix::from_row_slice(1, 4, &[1.0, 0.0, 0.0, 2.0]),
    );
}
