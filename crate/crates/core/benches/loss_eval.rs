use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use lampinn::lam::split_pretrained;
use lampinn::net::{Activation, DenseNet};
use lampinn::pde::{sample_collocation, PdeProblem, PinnObjective};
use lampinn::tasks::{Family, TaskConfig};
use lampinn::Parallelism;
use std::hint::black_box;

fn objective(family: Family, m: usize, n: usize) -> PinnObjective {
    let t = TaskConfig::reference(family);
    let p = PdeProblem::new(&t, 0.15).unwrap();
    let c = sample_collocation(&p, m, n, 1).unwrap();
    PinnObjective::new(p, c).unwrap()
}

fn loss_and_grad(c: &mut Criterion) {
    let mut g = c.benchmark_group("loss_and_grad");
    let plain = DenseNet::new(&[2, 10, 10, 10, 10, 1], Activation::Tanh, 0).unwrap();
    let modular = split_pretrained(&plain, 2, 3, 0).unwrap();
    for m in [900, 10_000] {
        for mode in [Parallelism::Sequential, Parallelism::Rayon] {
            let obj = objective(Family::Helmholtz2d, m, 120).with_parallelism(mode);
            g.bench_with_input(BenchmarkId::new(format!("plain/{mode:?}"), m), &obj, |b, o| {
                b.iter(|| o.loss_and_grad(black_box(&plain)).unwrap())
            });
            g.bench_with_input(BenchmarkId::new(format!("modular/{mode:?}"), m), &obj, |b, o| {
                b.iter(|| o.loss_and_grad(black_box(&modular)).unwrap())
            });
        }
    }
    g.finish();
}

fn burgers_loss(c: &mut Criterion) {
    let mut g = c.benchmark_group("burgers_loss");
    let net = DenseNet::new(&[2, 20, 20, 20, 20, 20, 20, 20, 20, 1], Activation::Tanh, 0).unwrap();
    for mode in [Parallelism::Sequential, Parallelism::Rayon] {
        let obj = objective(Family::Burgers1d, 2000, 200).with_parallelism(mode);
        g.bench_function(format!("{mode:?}"), |b| b.iter(|| obj.loss(black_box(&net)).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, loss_and_grad, burgers_loss);
criterion_main!(benches);
