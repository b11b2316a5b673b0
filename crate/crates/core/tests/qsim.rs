use proptest::prelude::*;
use qdyn::qsim::{
    apply_pauli_rotation, apply_unitary, expectation, haar_unitary, stream_rng, Observable, Pauli, PauliString, QuantumState, C64,
};

fn max_dev(a: &QuantumState, b: &QuantumState) -> f64 {
    a.amplitudes().iter().zip(b.amplitudes()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

#[test]
fn one_dimensional_haar_is_a_phase() {
    let u = haar_unitary(1, &mut stream_rng(3, 0)).unwrap();
    assert!((u.matrix()[(0, 0)].norm() - 1.0).abs() < 1e-14);
    assert!(haar_unitary(0, &mut stream_rng(3, 0)).is_err());
}

#[test]
fn haar_then_adjoint_restores_state() {
    let mut rng = stream_rng(11, 0);
    let u = haar_unitary(16, &mut rng).unwrap();
    let s = QuantumState::random(4, &mut rng).unwrap();
    let back = apply_unitary(&u.adjoint(), &apply_unitary(&u, &s).unwrap()).unwrap();
    assert!(max_dev(&back, &s) < 1e-10);
    assert!(apply_unitary(&u, &QuantumState::zero(3).unwrap()).is_err());
}

#[test]
fn identity_unitary_is_a_no_op() {
    let s = QuantumState::random(3, &mut stream_rng(2, 0)).unwrap();
    let id = qdyn::qsim::UnitaryMatrix::identity(8);
    assert!(max_dev(&apply_unitary(&id, &s).unwrap(), &s) == 0.0);
}

#[test]
fn basis_state_expectations() {
    let z = Observable::z(3, 0).unwrap();
    assert_eq!(expectation(&QuantumState::zero(3).unwrap(), &z).unwrap(), 1.0);
    // |1⟩ on qubit 0 (the most significant bit) is basis index 4.
    assert_eq!(expectation(&QuantumState::basis(3, 4).unwrap(), &z).unwrap(), -1.0);
    assert!(expectation(&QuantumState::zero(2).unwrap(), &z).is_err());
}

#[test]
fn rotation_length_mismatch_is_rejected() {
    let p = PauliString::parse("XY").unwrap();
    assert!(apply_pauli_rotation(&p, 0.3, &QuantumState::zero(3).unwrap()).is_err());
}

#[test]
fn rotation_matches_dense_exponential() {
    // Oracle: exp(−iθP/2) = cos(θ/2)·I − i sin(θ/2)·P as a dense matrix.
    let mut rng = stream_rng(5, 0);
    let p = PauliString::parse("XZY").unwrap();
    let s = QuantumState::random(3, &mut rng).unwrap();
    let theta: f64 = 0.713;
    let pd = p.to_dense();
    let id = nalgebra::DMatrix::<C64>::identity(8, 8);
    let u = id * C64::new((theta / 2.0).cos(), 0.0) - pd * C64::new(0.0, (theta / 2.0).sin());
    let v = u * nalgebra::DVector::from_column_slice(s.amplitudes());
    let got = apply_pauli_rotation(&p, theta, &s).unwrap();
    let dev = got.amplitudes().iter().zip(v.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    assert!(dev < 1e-14);
}

fn pauli_string(n: usize) -> impl Strategy<Value = PauliString> {
    proptest::collection::vec(0..4u8, n).prop_map(|v| {
        PauliString::new(v.into_iter().map(|c| [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z][c as usize]).collect()).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn unitaries_preserve_norm(seed in any::<u64>(), n in 1usize..5) {
        let mut rng = stream_rng(seed, 0);
        let u = haar_unitary(1 << n, &mut rng).unwrap();
        prop_assert!(u.unitarity_deviation() < 1e-9);
        let s = QuantumState::random(n, &mut rng).unwrap();
        prop_assert!((apply_unitary(&u, &s).unwrap().norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rotations_compose_additively(seed in any::<u64>(), p in pauli_string(3), a in -7.0..7.0f64, b in -7.0..7.0f64) {
        let s = QuantumState::random(3, &mut stream_rng(seed, 0)).unwrap();
        let two = apply_pauli_rotation(&p, a, &apply_pauli_rotation(&p, b, &s).unwrap()).unwrap();
        let one = apply_pauli_rotation(&p, a + b, &s).unwrap();
        prop_assert!(max_dev(&two, &one) < 1e-12);
        prop_assert!((one.norm() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn haar_sampling_is_deterministic(seed in any::<u64>()) {
        let a = haar_unitary(4, &mut stream_rng(seed, 9)).unwrap();
        let b = haar_unitary(4, &mut stream_rng(seed, 9)).unwrap();
        prop_assert_eq!(a.matrix(), b.matrix());
    }

    #[test]
    fn pauli_expectations_lie_in_range(seed in any::<u64>(), p in pauli_string(3)) {
        let s = QuantumState::random(3, &mut stream_rng(seed, 0)).unwrap();
        let v = expectation(&s, &Observable::Pauli(p)).unwrap();
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&v));
    }
}
