//! Parallel core against a one-thread pool. The sequential fallback is the
//! same code built without rayon:
//!
//! ```text
//! cargo bench -p invfilter --bench filters
//! cargo bench -p invfilter --bench filters --no-default-features
//! ```

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use invfilter::benchmarks::{build_ungm, run_monte_carlo};
use invfilter::forward::{ForwardFilterKind, ResamplingScheme};
use invfilter::inverse::{run_ipf, EkfMap, InverseObservations, IpfConfig, ModificationPolicy};
use invfilter::model::GaussianDist;
use invfilter::par;
use invfilter::rng::RngStream;
use invfilter::scenarios::{ungm_model, UngmParams};
use invfilter::simulate::{simulate_episode, ForwardInit, ForwardSpec};
use nalgebra::DMatrix;

fn pools() -> Vec<(&'static str, usize)> {
    if par::is_parallel() {
        vec![("one_thread", 1), ("full_pool", 0)]
    } else {
        vec![("sequential", 0)]
    }
}

fn ipf(c: &mut Criterion) {
    let model = ungm_model(&UngmParams::default(), GaussianDist::scalar(0.0, 5.0).unwrap()).unwrap();
    let spec = ForwardSpec {
        kind: ForwardFilterKind::Ekf,
        init: ForwardInit::Gaussian(GaussianDist::scalar(0.0, 5.0).unwrap()),
    };
    let stream = RngStream::new(1).run(0);
    let traj = simulate_episode(&model, &spec, 20, &stream).unwrap();
    let init = GaussianDist::scalar(0.0, 10.0).unwrap();
    let map = EkfMap::new(&model);

    let mut group = c.benchmark_group("ipf_ungm_k20");
    group.sample_size(20);
    for n in [200, 2000] {
        let cfg = IpfConfig {
            particles: n,
            policy: ModificationPolicy::default(),
            resampling: ResamplingScheme::Systematic,
        };
        for (name, threads) in pools() {
            group.bench_with_input(BenchmarkId::new(name, n), &n, |b, _| {
                b.iter(|| {
                    par::with_threads(threads, || {
                        run_ipf(
                            &map,
                            InverseObservations::from_model(&model),
                            &cfg,
                            &init,
                            DMatrix::from_element(1, 1, 10.0),
                            &traj.x,
                            &traj.a,
                            &stream,
                        )
                        .unwrap()
                    })
                })
            });
        }
    }
    group.finish();
}

fn monte_carlo(c: &mut Criterion) {
    let mut cfg = build_ungm().with_runs(16);
    cfg.horizon = 20;
    let mut group = c.benchmark_group("monte_carlo_ungm_m16");
    group.sample_size(10);
    for (name, threads) in pools() {
        group.bench_function(name, |b| {
            b.iter(|| par::with_threads(threads, || black_box(run_monte_carlo(&cfg).unwrap())))
        });
    }
    group.finish();
}

criterion_group!(benches, ipf, monte_carlo);
criterion_main!(benches);
