//! Statistical properties of full experiment sweeps.

use odefit::harness::{run_experiment, ExperimentConfig, ExperimentReport, COMPARISON_LEVEL};
use odefit::NoiseKind;

const NON_CHAOTIC: [&str; 4] = ["linear_oscillator_2d", "cubic_oscillator_2d", "linear_3d", "van_der_pol"];

fn sweep(model: &str) -> ExperimentReport {
    run_experiment(&ExperimentConfig::for_model(model)).unwrap()
}

fn param_error(report: &ExperimentReport, level: f64) -> f64 {
    let row = report.row(NoiseKind::WhiteGaussian, level).unwrap();
    row.mean_params
        .as_ref()
        .unwrap()
        .iter()
        .zip(&report.true_params)
        .map(|(e, t)| (e - t).abs())
        .fold(0.0, f64::max)
}

#[test]
fn rmse_tracks_noise_level_and_error_grows_with_noise() {
    for model in NON_CHAOTIC {
        let report = sweep(model);
        let levels: Vec<f64> = report.rows.iter().map(|r| r.noise_level).collect();
        for row in &report.rows {
            let ratio = row.mean_rmse.unwrap() / row.noise_level;
            assert!((0.8..=1.2).contains(&ratio), "{model} at {}: ratio {ratio}", row.noise_level);
        }
        for w in levels.windows(2) {
            let (lo, hi) = (param_error(&report, w[0]), param_error(&report, w[1]));
            assert!(hi >= 0.8 * lo, "{model}: error {lo:e} at {} but {hi:e} at {}", w[0], w[1]);
        }
    }
}

#[test]
fn comparison_rows_are_labelled_with_their_level() {
    let report = run_experiment(&ExperimentConfig {
        repetitions: 3,
        ..ExperimentConfig::comparison("cubic_oscillator_2d")
    })
    .unwrap();
    assert_eq!(report.rows.len(), 2);
    for kind in [NoiseKind::WhiteGaussian, NoiseKind::Pink] {
        let row = report.row(kind, COMPARISON_LEVEL).expect("row for each kind");
        assert_eq!(row.failures, 0);
        let ratio = row.mean_rmse.unwrap() / COMPARISON_LEVEL;
        assert!((0.8..=1.2).contains(&ratio), "{kind}: ratio {ratio}");
    }
}

#[test]
fn lorenz_defaults_use_horizon_continuation() {
    let report = run_experiment(&ExperimentConfig {
        noise_levels: vec![0.01],
        repetitions: 2,
        ..ExperimentConfig::for_model("lorenz")
    })
    .unwrap();
    assert_eq!(report.warm_start_horizons, vec![1.0, 2.0, 3.0, 5.0, 10.0]);
    let est = report.rows[0].mean_params.as_ref().unwrap();
    assert!((est[1] - 28.0).abs() < 0.05 * 28.0, "rho = {}", est[1]);
}
