use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use psychfit_core::dataset::{build_dataset, cctt_answer_key, cctt_factor_spec};
use psychfit_core::irt::{fit_irt, IrtModel, IrtOptions};
use psychfit_core::latentcorr::{bootstrap_covariance, tetrachoric_matrix, TetraOptions};
use psychfit_core::simulate::synthetic_cctt_sheets;
use psychfit_core::Execution;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn bench(c: &mut Criterion) {
    let raw = synthetic_cctt_sheets(1519, 0);
    let ds = build_dataset(&raw, &cctt_answer_key(), &cctt_factor_spec()).unwrap();

    let mut g = c.benchmark_group("tetrachoric_matrix");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| tetrachoric_matrix(&ds, &TetraOptions { execution: exec }).unwrap())
        });
    }
    g.finish();

    let mut g = c.benchmark_group("bootstrap_50");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| bootstrap_covariance(&ds, 50, 0, exec).unwrap())
        });
    }
    g.finish();

    let mut g = c.benchmark_group("irt_2pl");
    g.sample_size(10);
    for (name, exec) in MODES {
        let opts = IrtOptions { execution: exec, ..IrtOptions::default() };
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| fit_irt(&ds, IrtModel::TwoPl, &opts).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
