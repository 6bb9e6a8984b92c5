mod args;
mod emit;
mod load;

use std::path::Path;
use std::process::ExitCode;

use clap::Parser;
use invfilter::benchmarks::{
    builtin, convergence_study, run_monte_carlo, ConvergenceConfig, ExperimentError, ExperimentResult,
    ScenarioConfig, BUILTIN_SCENARIOS,
};
use invfilter::par;
use serde::Serialize;

use crate::args::{Cli, Command, ConvergeArgs, Format, RunArgs};
use crate::emit::{write_json, Table};
use crate::load::{anchor, read_json, LoadError};

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;
const EXIT_USAGE: u8 = 64;

enum Failure {
    Config(LoadError),
    Runtime(String),
    Usage(String),
}

impl Failure {
    fn report(self) -> ExitCode {
        let (code, msg) = match self {
            Failure::Config(e) => (EXIT_CONFIG, format!("config error: {e}")),
            Failure::Runtime(m) => (EXIT_RUNTIME, format!("run failed: {m}")),
            Failure::Usage(m) => (EXIT_USAGE, format!("usage error: {m}")),
        };
        eprintln!("{msg}");
        ExitCode::from(code)
    }
}

fn io_failure(dir: &Path, e: std::io::Error) -> Failure {
    Failure::Runtime(format!("writing to {}: {e}", dir.display()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match cli.command {
        Command::Run(a) => run(a),
        Command::Converge(a) => converge(a),
        Command::ListScenarios => {
            for (name, about) in BUILTIN_SCENARIOS {
                println!("{name:<10}{about}");
            }
            Ok(())
        }
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => f.report(),
    }
}

fn scenario_by_name(name: &str) -> Result<ScenarioConfig, Failure> {
    builtin(name).ok_or_else(|| {
        let names: Vec<&str> = BUILTIN_SCENARIOS.iter().map(|(n, _)| *n).collect();
        Failure::Usage(format!("unknown scenario {name:?}; available: {}", names.join(", ")))
    })
}

/// A config plus the text it came from, for error anchoring.
struct Source<T> {
    value: T,
    text: Option<String>,
    name: String,
}

fn experiment_error(e: ExperimentError, src: &Source<impl Sized>) -> Failure {
    match e {
        ExperimentError::Config(c) => Failure::Config(anchor(c, src.text.as_deref(), &src.name)),
        ExperimentError::Filter(f) => Failure::Runtime(f.to_string()),
    }
}

fn prepare_out(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))
}

fn run(a: RunArgs) -> Result<(), Failure> {
    let mut src = match (&a.scenario, &a.config) {
        (_, Some(path)) => {
            let l = read_json::<ScenarioConfig>(path).map_err(Failure::Config)?;
            Source {
                value: l.value,
                text: Some(l.text),
                name: l.source,
            }
        }
        (name, None) => {
            let name = name.as_deref().unwrap_or("ungm");
            Source {
                value: scenario_by_name(name)?,
                text: None,
                name: format!("scenario {name}"),
            }
        }
    };
    if let Some(seed) = a.common.seed {
        src.value.seed = seed;
    }
    if let Some(runs) = a.runs {
        src.value.runs = runs;
    }
    src.value
        .validate()
        .map_err(|e| Failure::Config(anchor(e, src.text.as_deref(), &src.name)))?;
    prepare_out(&a.common.out)?;
    let result = par::with_threads(a.common.threads, || run_monte_carlo(&src.value))
        .map_err(|e| experiment_error(e, &src))?;
    let out = &a.common.out;
    write_experiment(out, a.common.format, &src.value, &result).map_err(|e| io_failure(out, e))?;
    eprintln!(
        "{}: {} runs ({} failed), results in {}",
        src.value.name,
        result.metrics.runs,
        result.metrics.failures.len(),
        out.display()
    );
    Ok(())
}

fn running_mean(v: &[f64]) -> Vec<f64> {
    let mut sum = 0.0;
    v.iter()
        .enumerate()
        .map(|(i, x)| {
            sum += x;
            sum / (i + 1) as f64
        })
        .collect()
}

#[derive(Serialize)]
struct LabelSummary<'a> {
    label: &'a str,
    rmse_time_avg_final: Option<f64>,
    nci_mean: Option<f64>,
    nci_skipped: usize,
    retries: Option<u64>,
}

#[derive(Serialize)]
struct RunSummary<'a> {
    scenario: &'a str,
    seed: u64,
    horizon: usize,
    runs: usize,
    failures: &'a [invfilter::benchmarks::RunFailure],
    notes: &'a [String],
    labels: Vec<LabelSummary<'a>>,
}

fn write_experiment(dir: &Path, format: Format, cfg: &ScenarioConfig, r: &ExperimentResult) -> std::io::Result<()> {
    let m = &r.metrics;
    let mut rmse = Table::default();
    let mut nci = Table::default();
    let mut relerr = Table::default();
    for s in &m.series {
        rmse.push_series(&s.label, &s.rmse);
        rmse.push_series(&format!("{}:time_avg", s.label), &s.rmse_time_avg);
        if let Some(v) = &s.nci {
            nci.push_series(&s.label, v);
        }
        if let Some(v) = &s.relative_error {
            relerr.push_series(&s.label, v);
        }
    }
    let mut bounds = Table::default();
    for b in &m.bounds {
        let sqrt = b.sqrt();
        bounds.push_series(&b.label, &sqrt);
        bounds.push_series(&format!("{}:time_avg", b.label), &running_mean(&sqrt));
        bounds.push_series(&format!("{}:trace", b.label), &b.trace);
    }
    let mut timing = Table::default();
    for t in &r.timing {
        timing.push(0, &t.label, t.mean_seconds);
    }
    rmse.write(dir, "rmse", format)?;
    nci.write(dir, "nci", format)?;
    bounds.write(dir, "rcrlb", format)?;
    timing.write(dir, "timing", format)?;
    if cfg.position_index.is_some() {
        relerr.write(dir, "relerr", format)?;
    }
    let summary = RunSummary {
        scenario: &m.scenario,
        seed: m.seed,
        horizon: m.horizon,
        runs: m.runs,
        failures: &m.failures,
        notes: &m.notes,
        labels: m
            .series
            .iter()
            .map(|s| LabelSummary {
                label: &s.label,
                rmse_time_avg_final: s.rmse_time_avg.last().copied(),
                nci_mean: s.nci.as_ref().map(|v| v.iter().sum::<f64>() / v.len() as f64),
                nci_skipped: s.nci_skipped,
                retries: s.retries,
            })
            .collect(),
    };
    write_json(dir, "summary.json", &summary)?;
    write_json(dir, "config.json", cfg)
}

fn converge(a: ConvergeArgs) -> Result<(), Failure> {
    let mut src = match (&a.scenario, &a.config) {
        (_, Some(path)) => {
            let l = read_json::<ConvergenceConfig>(path).map_err(Failure::Config)?;
            Source {
                value: l.value,
                text: Some(l.text),
                name: l.source,
            }
        }
        (name, None) => {
            let mut cfg = ConvergenceConfig::ungm_default();
            if let Some(name) = name {
                cfg.scenario = scenario_by_name(name)?;
            }
            Source {
                name: format!("scenario {}", cfg.scenario.name),
                value: cfg,
                text: None,
            }
        }
    };
    if let Some(seed) = a.common.seed {
        src.value.scenario.seed = seed;
    }
    if let Some(reps) = a.reps {
        src.value.reps = reps;
    }
    src.value
        .validate()
        .map_err(|e| Failure::Config(anchor(e, src.text.as_deref(), &src.name)))?;
    prepare_out(&a.common.out)?;
    let result = par::with_threads(a.common.threads, || convergence_study(&src.value))
        .map_err(|e| experiment_error(e, &src))?;
    let out = &a.common.out;
    let write = || -> std::io::Result<()> {
        // k holds the particle count here
        let mut t = Table::default();
        for l in &result.levels {
            t.push(l.particles, "error4", l.error4);
            t.push(l.particles, "std_error", l.std_error);
            t.push(l.particles, "mean_retries", l.mean_retries);
            t.push(l.particles, "reps_with_retries", l.reps_with_retries as f64);
            t.push(l.particles, "failures", l.failures as f64);
        }
        t.write(out, "convergence", a.common.format)?;
        write_json(out, "convergence.json", &result)?;
        write_json(out, "config.json", &src.value)
    };
    write().map_err(|e| io_failure(out, e))?;
    eprintln!(
        "slope {:.3}, spearman rho {:.3} (p = {:.4}), results in {}",
        result.slope,
        result.spearman_rho,
        result.spearman_p,
        out.display()
    );
    Ok(())
}
