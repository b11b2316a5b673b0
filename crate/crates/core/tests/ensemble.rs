use proptest::prelude::*;
use qdyn::ensemble::{
    fp_rh_exact2, fp_rh_lower, frame_potential_mc, frame_potential_of_set, ks_critical_1pct, ks_uniform_phase,
    mean_and_stderr, overlap_sq, predicted_k_diag, predicted_lambda_diag, predicted_lambda_slope, sample_rh,
    validate_against_training, KernelPrediction, Sampler,
};
use qdyn::qsim::{stream_rng, C64};
use qdyn::taskdata::ObservableMode;
use qdyn::trainer::{run, ExperimentConfig};

#[test]
fn exact_second_frame_potentials() {
    assert_eq!(fp_rh_exact2(0, 8).unwrap(), 2.0);
    assert_eq!(fp_rh_exact2(2, 8).unwrap(), 16.0);
    assert_eq!(fp_rh_exact2(6, 8).unwrap(), 92.0);
    // Saturated: every basis vector is pinned or only one is free.
    assert_eq!(fp_rh_exact2(7, 8).unwrap(), 120.0);
    assert_eq!(fp_rh_exact2(8, 8).unwrap(), 120.0);
    assert!(fp_rh_exact2(9, 8).is_err());
}

#[test]
fn first_order_bound_and_haar_values() {
    for n in 1..6 {
        assert_eq!(fp_rh_lower(n, 16, 1).unwrap(), (n + 1) as f64);
    }
    assert_eq!(fp_rh_lower(0, 16, 3).unwrap(), 6.0);
    assert_eq!(Sampler::Haar { d: 4 }.analytic(4).unwrap(), (24.0, false));
    assert_eq!(Sampler::RestrictedHaar { d: 8, n: 3 }.analytic(2).unwrap(), (29.0, false));
    assert!(Sampler::RestrictedHaar { d: 8, n: 3 }.analytic(3).unwrap().1);
    assert!(fp_rh_lower(1, 4, 0).is_err());
}

#[test]
fn sampler_structure() {
    let mut rng = stream_rng(1, 0);
    assert!(sample_rh(0, 0, &mut rng).is_err());
    assert!(sample_rh(4, 5, &mut rng).is_err());
    let full = sample_rh(4, 4, &mut rng).unwrap();
    let m = full.matrix();
    for i in 0..4 {
        for j in 0..4 {
            if i == j {
                assert!((m[(i, i)].norm() - 1.0).abs() < 1e-12);
            } else {
                assert_eq!(m[(i, j)], C64::new(0.0, 0.0));
            }
        }
    }
    let u = sample_rh(8, 3, &mut rng).unwrap();
    assert!(u.unitarity_deviation() < 1e-12);
    for i in 0..3 {
        for j in 0..8 {
            if i != j {
                assert_eq!(u.matrix()[(i, j)], C64::new(0.0, 0.0));
                assert_eq!(u.matrix()[(j, i)], C64::new(0.0, 0.0));
            }
        }
    }
    assert!(sample_rh(8, 0, &mut rng).unwrap().unitarity_deviation() < 1e-12);
}

#[test]
fn pinned_phases_are_uniform() {
    let mut rng = stream_rng(7, 0);
    let phases: Vec<f64> = (0..2000).map(|_| sample_rh(4, 2, &mut rng).unwrap().matrix()[(1, 1)].arg()).collect();
    assert!(ks_uniform_phase(&phases) < ks_critical_1pct(phases.len()));
    let clustered: Vec<f64> = (0..2000).map(|i| 0.1 * i as f64 / 2000.0).collect();
    assert!(ks_uniform_phase(&clustered) > ks_critical_1pct(clustered.len()));
}

#[test]
fn monte_carlo_error_shrinks_with_pairs() {
    let s = Sampler::RestrictedHaar { d: 8, n: 2 };
    let small = frame_potential_mc(s, 2, 400, 3).unwrap();
    let large = frame_potential_mc(s, 2, 6400, 3).unwrap();
    let ratio = small.mc_std_error / large.mc_std_error;
    assert!((2.0..8.0).contains(&ratio), "ratio {ratio}");
    assert!(large.z_score().abs() < 4.0);
    assert_eq!((large.analytic, large.sample_count), (16.0, 6400));
    assert!(frame_potential_mc(s, 0, 100, 3).is_err());
    assert!(frame_potential_mc(s, 2, 1, 3).is_err());
}

#[test]
fn set_frame_potential_and_overlap() {
    let mut rng = stream_rng(2, 0);
    let u = sample_rh(4, 1, &mut rng).unwrap();
    assert!((overlap_sq(&u, &u) - 16.0).abs() < 1e-10);
    let (m, _) = frame_potential_of_set(&[u.clone(), u.clone(), u.clone()], 1).unwrap();
    assert!((m - 16.0).abs() < 1e-10);
    assert!(frame_potential_of_set(&[u], 1).is_err());
    let (mean, se) = mean_and_stderr(&[1.0, 2.0, 3.0]);
    assert!((mean - 2.0).abs() < 1e-15 && (se - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
}

#[test]
fn kernel_predictions() {
    assert!((predicted_k_diag(256, 16, 0.5, true).unwrap() - 1024.0 / 510.0).abs() < 1e-12);
    assert!((predicted_k_diag(256, 16, 0.5, false).unwrap() - 2.0).abs() < 1e-12);
    assert_eq!(predicted_k_diag(10, 16, 1.0, true).unwrap(), 0.0);
    assert!((predicted_lambda_diag(64, 16, 0.5, false).unwrap() + 12.0 / 64.0).abs() < 1e-12);
    assert!((predicted_lambda_diag(64, 16, 1.0, false).unwrap() + (28.0 + 64.0) / 64.0).abs() < 1e-12);
    assert!((predicted_lambda_slope(16, 0.8, false).unwrap() + 0.6 / 64.0).abs() < 1e-12);
    let exact_slope = predicted_lambda_slope(16, 0.8, true).unwrap();
    assert!((exact_slope + 256.0 * 0.6 / (64.0 * 255.0)).abs() < 1e-12);
    assert!(predicted_k_diag(10, 16, 1.5, true).is_err());
    assert!(predicted_k_diag(0, 16, 0.5, true).is_err());
    assert!(predicted_lambda_diag(10, 1, 0.5, true).is_err());
    let p = KernelPrediction::new(64, 16, 0.3, true).unwrap();
    assert_eq!(p.predicted_k, predicted_k_diag(64, 16, 0.3, false).unwrap());
}

#[test]
fn validation_flags_low_power_and_rejects_pauli_traces() {
    let traces: Vec<_> = (0..2)
        .map(|seed| {
            let mut c = ExperimentConfig::rpa(3, 24, &[2.0, 3.0], seed);
            c.observable = ObservableMode::StatePrep;
            c.steps = 500;
            run(&c).unwrap()
        })
        .collect();
    let rep = validate_against_training(&traces, 0.2, 1e-10, true).unwrap();
    assert_eq!((rep.traces, rep.l, rep.d, rep.per_datum.len()), (2, 24, 8, 2));
    assert!(rep.warnings.iter().any(|w| w.contains("low statistical power")));
    assert!(rep.per_datum.iter().all(|d| d.measured_k > 0.0 && d.records_used > 0));
    assert!(validate_against_training(&[], 0.2, 1e-10, true).is_err());
    let mut c = ExperimentConfig::rpa(3, 24, &[0.2, 0.3], 0);
    c.steps = 50;
    assert!(validate_against_training(&[run(&c).unwrap()], 0.2, 1e-10, true).is_err());
}

proptest! {
    #[test]
    fn lower_bound_never_exceeds_exact_value(d in 3usize..20, n_frac in 0.0..1.0f64) {
        let n = ((d as f64) * n_frac) as usize;
        prop_assert!(fp_rh_lower(n, d, 2).unwrap() <= fp_rh_exact2(n, d).unwrap() + 1e-9);
    }

    #[test]
    fn bounds_grow_with_pinned_data(d in 6usize..20, k in 1u32..5) {
        for n in 1..(d - 2) {
            prop_assert!(fp_rh_lower(n + 1, d, k).unwrap() >= fp_rh_lower(n, d, k).unwrap());
        }
    }
}
