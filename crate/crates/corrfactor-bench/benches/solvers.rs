use criterion::{criterion_group, criterion_main, Criterion};

use corrfactor::radial::{i_mn, IntegralRequest};

fn bench_radial(c: &mut Criterion) {
    c.bench_function("i_mn_4_4", |b| {
        let req = IntegralRequest { m: 4, n: 4, alpha: 1.84833, beta: 1.84833, r: 1.5 };
        b.iter(|| i_mn(std::hint::black_box(&req)).unwrap())
    });
}

criterion_group!(benches, bench_radial);
criterion_main!(benches);
