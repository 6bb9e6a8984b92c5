//! Wall-clock comparison of the filters on a shared set of episodes.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::benchmarks::config::{build_bearing, ScenarioConfig};
use crate::benchmarks::runner::{ExperimentError, Scenario};
use crate::error::{ConfigError, Result};
use crate::forward::ForwardFilterKind;
use crate::inverse::{run_iekf, run_ipf, EkfMap, IekfState, InverseObservations, IpfConfig};
use crate::metrics::timing_capture;
use crate::model::SystemModel;
use crate::par;
use crate::simulate::{observe_actions, run_forward_filter, simulate_truth};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimingStudyConfig {
    pub scenario: ScenarioConfig,
    /// Particle count of the attacker's PF.
    pub forward_particles: usize,
    /// I-PF sizes timed against an EKF attacker.
    pub particle_counts: Vec<usize>,
    /// I-PF size timed against a PF attacker.
    pub mismatched_particles: usize,
    /// Episodes per repeat.
    pub episodes: usize,
    pub repeats: usize,
}

impl TimingStudyConfig {
    pub fn bearing_default() -> Self {
        Self {
            scenario: build_bearing(),
            forward_particles: 100,
            particle_counts: vec![100, 250, 500],
            mismatched_particles: 100,
            episodes: 10,
            repeats: 15,
        }
    }

    pub fn validate(&self) -> std::result::Result<(), ConfigError> {
        self.scenario.validate()?;
        if self.forward_particles == 0 || self.mismatched_particles == 0 || self.particle_counts.contains(&0) {
            return Err(ConfigError::new("particle_counts", "particle counts must be at least 1"));
        }
        if self.episodes == 0 || self.repeats == 0 {
            return Err(ConfigError::new("repeats", "episodes and repeats must be at least 1"));
        }
        Ok(())
    }
}

/// Per-repeat seconds for one label, summed over the episodes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingSeries {
    pub label: String,
    pub seconds: Vec<f64>,
}

impl TimingSeries {
    pub fn median(&self) -> f64 {
        let mut v = self.seconds.clone();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        if n % 2 == 1 {
            v[n / 2]
        } else {
            (v[n / 2 - 1] + v[n / 2]) / 2.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingStudy {
    pub series: Vec<TimingSeries>,
}

impl TimingStudy {
    pub fn get(&self, label: &str) -> Option<&TimingSeries> {
        self.series.iter().find(|s| s.label == label)
    }

    pub fn median(&self, label: &str) -> Option<f64> {
        self.get(label).map(TimingSeries::median)
    }
}

pub fn ipf_timing_label(suffix: &str, particles: usize) -> String {
    format!("I-PF-{suffix}/N={particles}")
}

struct Episode {
    model: SystemModel,
    x: Vec<DVector<f64>>,
    y: Vec<DVector<f64>>,
    a_ekf: Vec<DVector<f64>>,
    a_pf: Vec<DVector<f64>>,
}

/// Time each filter on the same episodes, interleaving the filters within
/// every repeat. Runs on a single worker thread so particle-level
/// parallelism does not distort the comparison.
pub fn timing_study(cfg: &TimingStudyConfig) -> std::result::Result<TimingStudy, ExperimentError> {
    cfg.validate()?;
    let scenario = Scenario::new(cfg.scenario.clone())?;
    par::with_threads(1, || run_study(cfg, &scenario)).map_err(Into::into)
}

fn run_study(cfg: &TimingStudyConfig, scenario: &Scenario) -> Result<TimingStudy> {
    let stream = scenario.stream();
    let horizon = scenario.config().horizon;
    let pf = ForwardFilterKind::Pf {
        particles: cfg.forward_particles,
    };
    let episodes = (0..cfg.episodes)
        .map(|e| {
            let s = stream.run(e as u64);
            let model = scenario.model_for_run(&s)?;
            let (x, y) = simulate_truth(&model, horizon, &s)?;
            let (xe, _) = run_forward_filter(&model, &scenario.forward_spec(ForwardFilterKind::Ekf), &y, &s)?;
            let (xp, _) = run_forward_filter(&model, &scenario.forward_spec(pf), &y, &s)?;
            let a_ekf = observe_actions(&model, &xe, &s)?;
            let a_pf = observe_actions(&model, &xp, &s)?;
            Ok(Episode {
                model,
                x,
                y,
                a_ekf,
                a_pf,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut labels = vec!["EKF".to_string(), "PF".to_string(), "I-EKF-E".to_string()];
    labels.extend(cfg.particle_counts.iter().map(|&n| ipf_timing_label("E", n)));
    labels.push(ipf_timing_label("P", cfg.mismatched_particles));
    let mut seconds = vec![vec![0.0; cfg.repeats]; labels.len()];

    let ipf = |ep: &Episode, n: usize, a: &[DVector<f64>], run: u64| -> Result<f64> {
        let ipf_cfg = IpfConfig {
            particles: n,
            policy: scenario.config().modification.clone(),
            resampling: scenario.config().resampling,
        };
        let map = EkfMap::new(&ep.model);
        let s = stream.run(run);
        let (out, t) = timing_capture(|| {
            run_ipf(
                &map,
                InverseObservations::from_model(&ep.model),
                &ipf_cfg,
                scenario.inverse_init(),
                scenario.replica_cov().clone(),
                &ep.x,
                a,
                &s,
            )
        });
        out?;
        Ok(t)
    };

    for rep in 0..cfg.repeats {
        for (e, ep) in episodes.iter().enumerate() {
            let run = (rep * cfg.episodes + e) as u64;
            let s = stream.run(run);
            let mut col = 0;
            let mut record = |t: f64| {
                seconds[col][rep] += t;
                col += 1;
            };
            let (out, t) = timing_capture(|| {
                run_forward_filter(&ep.model, &scenario.forward_spec(ForwardFilterKind::Ekf), &ep.y, &s)
            });
            out?;
            record(t);
            let (out, t) = timing_capture(|| run_forward_filter(&ep.model, &scenario.forward_spec(pf), &ep.y, &s));
            out?;
            record(t);
            let map = EkfMap::new(&ep.model);
            let init = IekfState::from_dist(scenario.inverse_init(), scenario.replica_cov().clone());
            let (out, t) = timing_capture(|| run_iekf(&map, &ep.model, init, &ep.x, &ep.a_ekf));
            out?;
            record(t);
            for &n in &cfg.particle_counts {
                record(ipf(ep, n, &ep.a_ekf, run)?);
            }
            record(ipf(ep, cfg.mismatched_particles, &ep.a_pf, run)?);
        }
    }
    Ok(TimingStudy {
        series: labels
            .into_iter()
            .zip(seconds)
            .map(|(label, seconds)| TimingSeries { label, seconds })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_even_and_odd() {
        let s = TimingSeries {
            label: "x".into(),
            seconds: vec![3.0, 1.0, 2.0],
        };
        assert_eq!(s.median(), 2.0);
        let s = TimingSeries {
            label: "x".into(),
            seconds: vec![4.0, 1.0, 2.0, 3.0],
        };
        assert_eq!(s.median(), 2.5);
    }

    #[test]
    fn small_study_produces_all_labels() {
        let mut cfg = TimingStudyConfig::bearing_default();
        cfg.episodes = 1;
        cfg.repeats = 2;
        cfg.scenario.horizon = 3;
        let study = timing_study(&cfg).unwrap();
        assert_eq!(study.series.len(), 7);
        assert!(study.series.iter().all(|s| s.seconds.len() == 2 && s.seconds.iter().all(|&t| t > 0.0)));
    }
}
