use invfilter::benchmarks::{build_ungm, convergence_study, run_monte_carlo, ConvergenceConfig};
use invfilter::metrics::timing_capture;

#[test]
fn modification_redraws_only_at_small_particle_counts() {
    let mut cfg = ConvergenceConfig::ungm_default();
    cfg.particle_counts = vec![50, 100, 200, 1600];
    cfg.reps = 200;
    cfg.reference_particles = 50_000;
    cfg.max_reference_particles = 50_000;
    // threshold at half the reference predictive likelihood
    cfg.gamma_fraction = 0.5;
    let r = convergence_study(&cfg).unwrap();
    assert!(r.gamma_schedule.iter().all(|&g| g > 0.0));
    let first = &r.levels[0];
    assert!(first.reps_with_retries > 0, "{first:?}");
    let last = r.levels.last().unwrap();
    assert_eq!(last.particles, 1600);
    assert_eq!(last.reps_with_retries, 0, "{last:?}");
    assert_eq!(last.failures, 0);
}

#[test]
fn zero_threshold_never_redraws() {
    let mut cfg = ConvergenceConfig::ungm_default();
    cfg.particle_counts = vec![20, 40, 80, 160];
    cfg.reps = 200;
    cfg.k_probe = 4;
    cfg.reference_particles = 20_000;
    cfg.max_reference_particles = 20_000;
    let r = convergence_study(&cfg).unwrap();
    assert!(r.levels.iter().all(|l| l.reps_with_retries == 0 && l.failures == 0));
}

#[test]
fn empty_closure_takes_no_time() {
    let ((), secs) = timing_capture(|| ());
    assert!(secs < 1e-3);
}

#[test]
fn ungm_labels_match_figure_legend() {
    let mut cfg = build_ungm().with_runs(3);
    cfg.horizon = 8;
    let r = run_monte_carlo(&cfg).unwrap();
    let labels: Vec<&str> = r.metrics.series.iter().map(|s| s.label.as_str()).collect();
    assert_eq!(labels, ["EKF", "PF", "I-EKF-E", "I-EKF-P", "I-PF-E", "I-PF-P"]);
    assert_eq!(r.timing.len(), 6);
    let bounds: Vec<&str> = r.metrics.bounds.iter().map(|b| b.label.as_str()).collect();
    assert_eq!(bounds, ["RCRLB", "I-RCRLB-E"]);
}

#[test]
fn single_run_result_bytes_repeat() {
    let mut cfg = build_ungm().with_runs(1).with_seed(11);
    cfg.horizon = 20;
    let a = serde_json::to_vec(&run_monte_carlo(&cfg).unwrap().metrics).unwrap();
    let b = serde_json::to_vec(&run_monte_carlo(&cfg).unwrap().metrics).unwrap();
    assert_eq!(a, b);
}
