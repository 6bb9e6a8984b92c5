//! Empirical check of the `N⁻²` rate of the fourth-moment error.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::benchmarks::config::{build_ungm, ScenarioConfig};
use crate::benchmarks::runner::{ExperimentError, Scenario};
use crate::error::{ConfigError, FilterError, Result};
use crate::inverse::{run_ipf_until, EkfMap, InverseObservations, IpfConfig, ModificationPolicy};
use crate::model::SystemModel;
use crate::par;
use crate::rng::RunStream;
use crate::simulate::{observe_actions, run_forward_filter, simulate_truth};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceConfig {
    /// Model, initial laws and seed; the first forward filter generates the
    /// probe trajectory.
    pub scenario: ScenarioConfig,
    pub particle_counts: Vec<usize>,
    pub reps: usize,
    pub k_probe: usize,
    pub reference_particles: usize,
    /// Upper limit when the reference has to be refined.
    pub max_reference_particles: usize,
    /// `γ_k = gamma_fraction · ⟨π̃_{k|k−1}, β⟩` of the reference pass.
    #[serde(default)]
    pub gamma_fraction: f64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
}

fn default_retries() -> u32 {
    10
}

impl ConvergenceConfig {
    /// UNGM at `k_probe = 10`, `N ∈ {50, …, 1600}`, 500 repetitions.
    pub fn ungm_default() -> Self {
        Self {
            scenario: build_ungm(),
            particle_counts: vec![50, 100, 200, 400, 800, 1600],
            reps: 500,
            k_probe: 10,
            reference_particles: 100_000,
            max_reference_particles: 800_000,
            gamma_fraction: 0.0,
            max_retries: default_retries(),
        }
    }

    pub fn validate(&self) -> std::result::Result<(), ConfigError> {
        self.scenario.validate()?;
        if self.particle_counts.len() < 4 {
            return Err(ConfigError::new("particle_counts", "need at least 4 particle counts"));
        }
        if self.particle_counts.windows(2).any(|w| w[0] >= w[1]) || self.particle_counts[0] == 0 {
            return Err(ConfigError::new("particle_counts", "must be positive and strictly ascending"));
        }
        if self.reps < 200 {
            return Err(ConfigError::new("reps", "must be at least 200"));
        }
        if self.k_probe < 1 {
            return Err(ConfigError::new("k_probe", "must be at least 1"));
        }
        if self.reference_particles < 1 || self.max_reference_particles < self.reference_particles {
            return Err(ConfigError::new(
                "reference_particles",
                "must be at least 1 and not above max_reference_particles",
            ));
        }
        if !(self.gamma_fraction.is_finite() && self.gamma_fraction >= 0.0) {
            return Err(ConfigError::new("gamma_fraction", "must be a finite value >= 0"));
        }
        if self.max_retries < 1 {
            return Err(ConfigError::new("max_retries", "must be at least 1"));
        }
        Ok(())
    }
}

/// Results for one particle count.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceLevel {
    pub particles: usize,
    /// `E|⟨πᴺ, φ⟩ − ref|⁴` over successful repetitions.
    pub error4: f64,
    /// Standard error of `error4`.
    pub std_error: f64,
    /// Mean modification redraws per repetition.
    pub mean_retries: f64,
    /// Repetitions with at least one redraw.
    pub reps_with_retries: usize,
    /// Repetitions aborted because the threshold was never met.
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceResult {
    pub reference: Vec<f64>,
    pub reference_check: Vec<f64>,
    pub reference_particles: usize,
    /// `|ref − ref'|⁴` of two independent reference passes.
    pub reference_gap4: f64,
    pub gamma_schedule: Vec<f64>,
    pub levels: Vec<ConvergenceLevel>,
    /// Least-squares slope of `ln error4` against `ln N`.
    pub slope: f64,
    pub intercept: f64,
    /// Spearman correlation between `N` and `error4`.
    pub spearman_rho: f64,
    /// One-sided p-value for `ρ ≤ observed` under exchangeability.
    pub spearman_p: f64,
}

/// Least-squares fit `y ≈ a + b x`; returns `(b, a)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
    }
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &t in &idx[i..=j] {
            r[t] = avg;
        }
        i = j + 1;
    }
    r
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

pub fn spearman_rho(x: &[f64], y: &[f64]) -> f64 {
    pearson(&ranks(x), &ranks(y))
}

/// Exact one-sided permutation p-value `P(ρ ≤ observed)`, enumerating all
/// orderings of `y` (n ≤ 9).
pub fn spearman_p_lower(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len();
    if !(2..=9).contains(&n) || y.len() != n {
        return Err(FilterError::InvalidArgument(format!(
            "exact Spearman test needs 2..=9 paired values, got {n}"
        )));
    }
    let rx = ranks(x);
    let ry = ranks(y);
    let observed = pearson(&rx, &ry);
    let mut perm = ry.clone();
    let mut count = 0u64;
    let mut total = 0u64;
    let mut c = vec![0usize; n];
    let mut tally = |p: &[f64]| {
        total += 1;
        if pearson(&rx, p) <= observed + 1e-12 {
            count += 1;
        }
    };
    // Heap's algorithm
    tally(&perm);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            tally(&perm);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    Ok(count as f64 / total as f64)
}

struct Probe {
    model: SystemModel,
    x: Vec<DVector<f64>>,
    a: Vec<DVector<f64>>,
}

fn ipf_estimate_at(
    scenario: &Scenario,
    probe: &Probe,
    particles: usize,
    policy: &ModificationPolicy,
    k: usize,
    stream: &RunStream,
) -> Result<(DVector<f64>, Vec<f64>, u64)> {
    let cfg = IpfConfig {
        particles,
        policy: policy.clone(),
        resampling: scenario.config().resampling,
    };
    let map = EkfMap::new(&probe.model);
    let (run, _) = run_ipf_until(
        &map,
        InverseObservations::from_model(&probe.model),
        &cfg,
        scenario.inverse_init(),
        scenario.replica_cov().clone(),
        &probe.x,
        &probe.a,
        k,
        stream,
    )?;
    let mean_lik = run.diagnostics.iter().map(|d| d.mean_likelihood).collect();
    let retries = run.diagnostics.iter().map(|d| d.retries as u64).sum();
    Ok((run.estimates[k - 1].clone(), mean_lik, retries))
}

const REFERENCE_RUN: u64 = u64::MAX;
const CHECK_RUN: u64 = u64::MAX - 1;

/// Fix one trajectory, compute a large-`N` reference estimate of `E[x̂_k]`
/// at `k_probe`, and measure the fourth-moment error of smaller ensembles.
pub fn convergence_study(cfg: &ConvergenceConfig) -> std::result::Result<ConvergenceResult, ExperimentError> {
    cfg.validate()?;
    let mut scen_cfg = cfg.scenario.clone();
    scen_cfg.horizon = cfg.k_probe;
    let scenario = Scenario::new(scen_cfg)?;
    let stream = scenario.stream();
    let k = cfg.k_probe;

    let traj_stream = stream.run(0);
    let model = scenario.model_for_run(&traj_stream)?;
    let (x, y) = simulate_truth(&model, k, &traj_stream)?;
    let fwd = scenario.forward_spec(scenario.config().forward_filters[0]);
    let (xhat, _) = run_forward_filter(&model, &fwd, &y, &traj_stream)?;
    let a = observe_actions(&model, &xhat, &traj_stream)?;
    let probe = Probe { model, x, a };

    let plain = ModificationPolicy::constant(0.0, cfg.max_retries);
    let mut n_ref = cfg.reference_particles;
    let (mut reference, ref_lik, _) = ipf_estimate_at(&scenario, &probe, n_ref, &plain, k, &stream.run(REFERENCE_RUN))?;
    let (mut check, _, _) = ipf_estimate_at(&scenario, &probe, n_ref, &plain, k, &stream.run(CHECK_RUN))?;
    let gamma_schedule: Vec<f64> = ref_lik.iter().map(|l| cfg.gamma_fraction * l).collect();
    let policy = ModificationPolicy {
        gamma: 0.0,
        gamma_schedule: Some(gamma_schedule.clone()),
        max_retries: cfg.max_retries,
    };

    let n_levels = cfg.particle_counts.len();
    let per_level: Vec<Vec<Result<(DVector<f64>, Vec<f64>, u64)>>> = (0..n_levels)
        .map(|l| {
            let n = cfg.particle_counts[l];
            par::map_tasks(cfg.reps, |r| {
                let run = 1 + (l * cfg.reps + r) as u64;
                ipf_estimate_at(&scenario, &probe, n, &policy, k, &stream.run(run))
            })
        })
        .collect();

    let levels_for = |reference: &DVector<f64>| -> Vec<ConvergenceLevel> {
        per_level
            .iter()
            .zip(&cfg.particle_counts)
            .map(|(reps, &particles)| {
                let mut errs = Vec::with_capacity(reps.len());
                let mut retries = 0u64;
                let mut with_retries = 0;
                let mut failures = 0;
                for r in reps {
                    match r {
                        Ok((est, _, n_retry)) => {
                            errs.push((est - reference).norm().powi(4));
                            retries += n_retry;
                            if *n_retry > 0 {
                                with_retries += 1;
                            }
                        }
                        Err(_) => failures += 1,
                    }
                }
                let n = errs.len().max(1) as f64;
                let mean = errs.iter().sum::<f64>() / n;
                let var = errs.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / (n - 1.0).max(1.0);
                ConvergenceLevel {
                    particles,
                    error4: mean,
                    std_error: (var / n).sqrt(),
                    mean_retries: retries as f64 / n,
                    reps_with_retries: with_retries,
                    failures,
                }
            })
            .collect()
    };

    let mut levels = levels_for(&reference);
    loop {
        let min_err = levels.iter().map(|l| l.error4).fold(f64::INFINITY, f64::min);
        let gap4 = (&reference - &check).norm().powi(4);
        if gap4 < 0.1 * min_err || n_ref * 2 > cfg.max_reference_particles {
            break;
        }
        n_ref *= 2;
        reference = ipf_estimate_at(&scenario, &probe, n_ref, &plain, k, &stream.run(REFERENCE_RUN))?.0;
        check = ipf_estimate_at(&scenario, &probe, n_ref, &plain, k, &stream.run(CHECK_RUN))?.0;
        levels = levels_for(&reference);
    }

    let log_n: Vec<f64> = levels.iter().map(|l| (l.particles as f64).ln()).collect();
    let log_e: Vec<f64> = levels.iter().map(|l| l.error4.ln()).collect();
    let (slope, intercept) = linear_fit(&log_n, &log_e);
    let ns: Vec<f64> = levels.iter().map(|l| l.particles as f64).collect();
    let es: Vec<f64> = levels.iter().map(|l| l.error4).collect();
    let spearman_p = if ns.len() <= 9 {
        spearman_p_lower(&ns, &es)?
    } else {
        f64::NAN
    };
    Ok(ConvergenceResult {
        reference_gap4: (&reference - &check).norm().powi(4),
        reference: reference.iter().copied().collect(),
        reference_check: check.iter().copied().collect(),
        reference_particles: n_ref,
        gamma_schedule,
        spearman_rho: spearman_rho(&ns, &es),
        spearman_p,
        levels,
        slope,
        intercept,
    })
}
