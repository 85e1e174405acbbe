//! Rayon path vs. sequential fallback on the data-parallel hot loops: Gram
//! sampling trials, objective evaluation blocks, and a consensus round's
//! per-node work.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use dsgd::data::{partition_uniform, synth_finite};
use dsgd::graph::{gen_k_regular, max_degree_weights};
use dsgd::harness::objective;
use dsgd::loss::Loss;
use dsgd::par;
use dsgd::sgd::{run_consensus, SampleSource, SchemeConfig};
use dsgd::spectral::sample_gram_stats;

fn bench_gram_trials(c: &mut Criterion) {
    let data = synth_finite(&"spiked:d=400,nnz=20,alpha=0.2,n=2000,seed=1".parse().unwrap())
        .unwrap();
    let mut group = c.benchmark_group("gram_trials");
    group.sample_size(10);
    for &threads in &[1usize, 2] {
        group.bench_with_input(BenchmarkId::new("k256", threads), &threads, |b, &threads| {
            let pool = pool(threads);
            b.iter(|| {
                pool.install(|| sample_gram_stats(&data, 256, 16, false, 7).unwrap().mean_sigma1)
            })
        });
    }
    group.finish();
}

fn bench_objective(c: &mut Criterion) {
    let data = synth_finite(&"gaussian:d=200,n=50000,seed=2".parse().unwrap()).unwrap();
    let w = vec![0.01; 200];
    let mut group = c.benchmark_group("objective");
    group.bench_function("blocked_parallel", |b| {
        b.iter(|| objective(&data, &w, 1e-3, Loss::Hinge))
    });
    group.bench_function("blocked_sequential", |b| {
        b.iter(|| {
            let n = data.len();
            par::sum_blocks_seq(n, |i| Loss::Hinge.value(data.example(i).dot(&w))) / n as f64
                + 0.5e-3 * w.iter().map(|x| x * x).sum::<f64>()
        })
    });
    group.finish();
}

fn bench_consensus_rounds(c: &mut Criterion) {
    let data = synth_finite(&"gaussian:d=200,n=4096,seed=3".parse().unwrap()).unwrap();
    let partition = partition_uniform(&data, 32, 1).unwrap();
    let p = max_degree_weights(&gen_k_regular(32, 8, 1).unwrap());
    let mut group = c.benchmark_group("consensus_rounds");
    group.sample_size(10);
    for &threads in &[1usize, 2] {
        group.bench_with_input(BenchmarkId::new("m32_t64", threads), &threads, |b, &threads| {
            let pool = pool(threads);
            b.iter(|| {
                pool.install(|| {
                    let source = SampleSource::Finite { data: &data, partition: &partition };
                    let cfg = SchemeConfig::new(0.1, 64, 5);
                    run_consensus(&source, &data, &p, &cfg).unwrap().node_traces[0]
                        .output
                        .clone()
                })
            })
        });
    }
    group.finish();
}

#[cfg(feature = "parallel")]
fn pool(threads: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap()
}

#[cfg(not(feature = "parallel"))]
fn pool(_threads: usize) -> NoPool {
    NoPool
}

#[cfg(not(feature = "parallel"))]
struct NoPool;

#[cfg(not(feature = "parallel"))]
impl NoPool {
    fn install<T>(&self, f: impl FnOnce() -> T) -> T {
        f()
    }
}

criterion_group!(benches, bench_gram_trials, bench_objective, bench_consensus_rounds);
criterion_main!(benches);
