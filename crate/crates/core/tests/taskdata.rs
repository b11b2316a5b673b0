use proptest::prelude::*;
use qdyn::ansatz::{random_parameters, Ansatz};
use qdyn::qsim::stream_rng;
use qdyn::taskdata::{error, errors, loss, loss_from_errors, orthogonal_dataset, orthogonal_dataset_with, DataOptions, ObservableMode};
use qdyn::trainer::gauge_orthogonal;
use qdyn::Error;

#[test]
fn gram_matrix_is_identity() {
    let ds = orthogonal_dataset(4, 5, &[0.1, 0.2, 0.3, 0.4, 0.5], 12).unwrap();
    for (a, x) in ds.data().iter().enumerate() {
        for (b, y) in ds.data().iter().enumerate() {
            let g = x.state.inner(&y.state).unwrap();
            let expect = if a == b { 1.0 } else { 0.0 };
            assert!((g.re - expect).abs() < 1e-12 && g.im.abs() < 1e-12);
        }
    }
    assert_eq!(ds.targets(), vec![0.1, 0.2, 0.3, 0.4, 0.5]);
}

#[test]
fn too_many_data_is_impossible() {
    assert!(matches!(orthogonal_dataset(2, 5, &[0.0; 5], 0), Err(Error::ImpossibleOrthogonality { .. })));
    assert!(orthogonal_dataset(2, 2, &[0.0; 3], 0).is_err());
}

#[test]
fn state_prep_targets_are_orthogonal_projectors() {
    let opts = DataOptions { observable: ObservableMode::StatePrep, identity_rotation: false };
    let ds = orthogonal_dataset_with(3, 3, &[1.0, 2.0, 3.0], 4, opts).unwrap();
    assert_eq!(ds.observable_range(), (0.0, 1.0));
    for a in 0..3 {
        for b in 0..3 {
            let pa = ds.observable(a).to_dense();
            let pb = ds.observable(b).to_dense();
            let tr = (&pa * &pb).trace();
            assert!((tr.re - if a == b { 1.0 } else { 0.0 }).abs() < 1e-12);
        }
    }
}

#[test]
fn error_examples() {
    let a = Ansatz::rpa(2, 3, 1).unwrap();
    let p = random_parameters(3, &mut stream_rng(2, 1));
    let ds = orthogonal_dataset(2, 2, &[0.0, 5.0], 3).unwrap();
    let e = errors(&a, &p, &ds).unwrap();
    // A Pauli-Z expectation never exceeds 1, so target 5 leaves error ≤ −4.
    assert!(e[1] <= -4.0);
    // Re-targeting at the current expectation zeroes the error.
    let matched = ds.with_targets(&[e[0], e[1] + 5.0]).unwrap();
    assert!(errors(&a, &p, &matched).unwrap().iter().all(|v| v.abs() < 1e-15));
    let d0 = &ds.data()[0];
    assert_eq!(error(&a, &p, d0, ds.observable(0)).unwrap(), e[0]);
    assert!((loss(&a, &p, &ds).unwrap() - (e[0] * e[0] + e[1] * e[1]) / 4.0).abs() < 1e-15);
}

#[test]
fn identity_circuit_error() {
    // Zero angles and identity-rotated data: the RPA still applies its fixed
    // unitaries, so build the check from the HEA whose zero-angle circuit is
    // a CNOT brickwall that leaves |00⟩ unchanged.
    let a = Ansatz::hea(2, 1, 0).unwrap();
    let opts = DataOptions { observable: ObservableMode::PauliZ { qubit: 0 }, identity_rotation: true };
    let ds = orthogonal_dataset_with(2, 1, &[0.0], 0, opts).unwrap();
    assert_eq!(errors(&a, &[0.0; 4], &ds).unwrap(), vec![1.0]);
}

#[test]
fn loss_examples() {
    assert_eq!(loss_from_errors(&[0.0, 0.0]), 0.0);
    assert_eq!(loss_from_errors(&[2.0]), 2.0);
    assert_eq!(loss_from_errors(&[1.0, -1.0]), 0.5);
}

proptest! {
    #[test]
    fn loss_is_nonnegative_and_zero_only_at_zero(eps in proptest::collection::vec(-10.0..10.0f64, 1..6)) {
        let l = loss_from_errors(&eps);
        prop_assert!(l >= 0.0);
        prop_assert_eq!(l == 0.0, eps.iter().all(|e| *e == 0.0));
    }

    #[test]
    fn loss_is_gauge_invariant(eps in proptest::collection::vec(-10.0..10.0f64, 1..6), seed in any::<u64>()) {
        let n = eps.len();
        let s = gauge_orthogonal(n, seed).unwrap();
        let mixed: Vec<f64> = (0..n).map(|i| (0..n).map(|j| s[(i, j)] * eps[j]).sum()).collect();
        prop_assert!((loss_from_errors(&mixed) - loss_from_errors(&eps)).abs() < 1e-12 * (1.0 + loss_from_errors(&eps)));
    }
}
