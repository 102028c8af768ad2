use qhybrid::runner::shotnoise::trial_errors;
use qhybrid::runner::{shot_noise_experiment, ShotNoiseConfig};
use qhybrid::{CircuitLayout, OutputSelection};

fn settings(epsilon: f64) -> ShotNoiseConfig {
    ShotNoiseConfig {
        epsilon,
        trials: 100,
        variance_samples: 2000,
        shot_multiplier: 3,
    }
}

fn one_qubit() -> (CircuitLayout, Vec<f64>) {
    (
        CircuitLayout::parse(1, "u1-all").unwrap(),
        vec![0.7, 1.9, 0.4],
    )
}

#[test]
fn single_qubit_meets_two_thirds() {
    let (layout, angles) = one_qubit();
    let r =
        shot_noise_experiment(&layout, &angles, OutputSelection::Min, &settings(0.1), 5).unwrap();
    assert_eq!(r.num_params, 3);
    assert_eq!(r.variances.len(), 3);
    assert_eq!(r.shots, 3 * r.sample_bound);
    assert!(
        3 * r.successes >= 2 * r.trials,
        "{}/{}",
        r.successes,
        r.trials
    );
    assert!(r.mean_squared_error <= 0.1 * 0.1);
}

#[test]
fn doubling_shots_does_not_hurt() {
    let (layout, angles) = one_qubit();
    let s = settings(0.1);
    let r = shot_noise_experiment(&layout, &angles, OutputSelection::Min, &s, 9).unwrap();
    let (doubled, mse) =
        trial_errors(&layout, &angles, OutputSelection::Min, 2 * r.shots, &s, 9).unwrap();
    assert!(doubled >= r.successes, "{doubled} < {}", r.successes);
    assert!(mse <= r.mean_squared_error);
}

#[test]
fn huge_epsilon_always_succeeds() {
    let (layout, angles) = one_qubit();
    let r =
        shot_noise_experiment(&layout, &angles, OutputSelection::Min, &settings(2.0), 3).unwrap();
    assert_eq!(r.success_fraction(), 1.0);
    // each component error is at most 4 + 1, so |err| <= 5·√3 < 10
    let r =
        shot_noise_experiment(&layout, &angles, OutputSelection::Min, &settings(10.0), 3).unwrap();
    assert_eq!(r.success_fraction(), 1.0);
    assert_eq!(r.sample_bound, 1);
}

#[test]
fn report_is_deterministic_and_complete() {
    let layout = CircuitLayout::parse(2, "u1-all,u2-even,u1-all").unwrap();
    let angles: Vec<f64> = (0..15).map(|i| 0.2 * i as f64).collect();
    let s = ShotNoiseConfig {
        trials: 20,
        variance_samples: 200,
        ..settings(0.3)
    };
    let a = shot_noise_experiment(&layout, &angles, OutputSelection::Full, &s, 1).unwrap();
    let b = shot_noise_experiment(&layout, &angles, OutputSelection::Full, &s, 1).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.exact.len(), 4 * 15);
    let text = a.to_text();
    for key in [
        "sample_bound",
        "shots",
        "success_fraction",
        "variances",
        "exact_gradient",
    ] {
        assert!(text.contains(key), "{key}");
    }
}
