use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use spf_bench::gaussian_cloud;
use spf_core::kernels::{gram_and_grads, median_heuristic, KernelSpec};
use spf_core::steinflow::phi_hat;

fn gram(c: &mut Criterion) {
    let mut group = c.benchmark_group("gram_and_grads");
    for n in [25, 50, 100, 200] {
        let states = gaussian_cloud(n, 20, 1);
        let spec = KernelSpec::isotropic(median_heuristic(&states).unwrap()).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &states, |b, s| {
            b.iter(|| gram_and_grads(s, &spec).unwrap())
        });
    }
    group.finish();
}

fn phi(c: &mut Criterion) {
    let mut group = c.benchmark_group("phi_hat");
    for n in [25, 50, 100, 200] {
        let states = gaussian_cloud(n, 20, 1);
        let scores: Vec<_> = states.iter().map(|x| -x).collect();
        let spec = KernelSpec::isotropic(median_heuristic(&states).unwrap()).unwrap();
        let g = gram_and_grads(&states, &spec).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| phi_hat(&scores, &g).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, gram, phi);
criterion_main!(benches);
