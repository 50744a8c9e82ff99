use qpwegner_core::stats::{fit_epsilon_slope, wilson_interval, Z_95};
use qpwegner_core::wegner::{run_experiment, run_iid_two_particle, run_qp_two_volume, Energy, Mode};
use qpwegner_core::{ConcentrationEstimate, WegnerExperimentConfig};

fn config(mode: Mode, samples: u64) -> WegnerExperimentConfig {
    let mut c = WegnerExperimentConfig::new(mode);
    c.samples = samples;
    c
}

#[test]
fn classical_estimate_respects_bound() {
    let mut c = config(Mode::Classical1p, 20_000);
    c.epsilon_grid = vec![0.01];
    let rep = run_experiment(&c).unwrap();
    assert!(rep.pass);
    assert!(rep.estimates[0].ci_low <= 0.05);
    assert_eq!(rep.bounds, vec![0.05]);
}

#[test]
fn iid_one_volume_example() {
    let mut c = config(Mode::Iid2pOneVolume, 20_000);
    c.radius = 1;
    c.epsilon_grid = vec![0.005];
    let rep = run_iid_two_particle(&c).unwrap();
    assert!((rep.bounds[0] - 0.27).abs() < 1e-12);
    assert!(rep.pass, "{:?}", rep.estimates);
}

#[test]
fn iid_two_volume_runs_on_separated_cubes() {
    let mut c = config(Mode::Iid2pTwoVolume, 5_000);
    c.radius = 1;
    c.center = (vec![0], vec![0]);
    c.center_b = Some((vec![9], vec![9]));
    c.epsilon_grid = vec![0.0, 0.01, 0.05];
    let rep = run_iid_two_particle(&c).unwrap();
    assert_eq!(rep.estimates[0].p_hat, 0.0);
    assert!(rep.pass);
}

#[test]
fn forced_symmetric_image_has_identical_spectra() {
    let mut c = config(Mode::QpTwoVolume, 300);
    c.r = 5.0;
    c.center = (vec![0], vec![3]);
    c.center_b = Some((vec![3], vec![0]));
    assert!(c.validate().is_err());
    c.force_unseparated = true;
    let rep = run_qp_two_volume(&c).unwrap();
    assert!(rep.estimates.iter().all(|e| e.p_hat == 1.0));
}

#[test]
fn estimates_are_monotone_and_consistent() {
    let mut c = config(Mode::QpOneVolume, 2_000);
    c.energy = Energy::SpectralMedian;
    let rep = run_experiment(&c).unwrap();
    assert!(rep.monotone);
    for e in &rep.estimates {
        assert!(0.0 <= e.ci_low && e.ci_low <= e.p_hat && e.p_hat <= e.ci_high && e.ci_high <= 1.0);
        let (lo, hi) = wilson_interval(e.successes, e.n_samples, Z_95).unwrap();
        assert_eq!((lo, hi), (e.ci_low, e.ci_high));
    }
    let qp = rep.qp.unwrap();
    assert_eq!(qp.conditional_density_bound, 1.0 / qp.coefficient_at_split);
    assert!(rep.energy.is_some());
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let mut c = config(Mode::QpOneVolume, 1_000);
    c.energy = Energy::SpectralMedian;
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| run_experiment(&c).unwrap())
    };
    assert_eq!(run(1), run(4));
}

#[test]
fn slope_of_synthetic_power_laws() {
    let grid = [1e-3, 2e-3, 5e-3, 1e-2, 2e-2];
    for power in [1.0f64, 2.0] {
        let n = 1u64 << 40;
        let est: Vec<ConcentrationEstimate> = grid
            .iter()
            .map(|&e| ConcentrationEstimate::from_counts(e, (n as f64 * 10.0 * e.powf(power)) as u64, n).unwrap())
            .collect();
        let fit = fit_epsilon_slope(&est).unwrap();
        assert!((fit.slope - power).abs() < 1e-6, "{fit:?}");
    }
}
