use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use fraclap_bench::{operator, smooth_input};

fn apply(c: &mut Criterion) {
    let mut g = c.benchmark_group("apply");
    for &(d, n) in &[(1, 4096), (2, 64), (2, 128), (2, 256), (3, 32)] {
        let mut op = operator(d, n, 0.5);
        let u = smooth_input(op.params());
        let mut out = vec![0.0; u.len()];
        g.throughput(Throughput::Elements(u.len() as u64));
        g.bench_with_input(BenchmarkId::new(format!("d{d}"), n), &n, |b, _| {
            b.iter(|| op.apply(&u, &mut out))
        });
    }
    g.finish();
}

criterion_group!(benches, apply);
criterion_main!(benches);
