use std::hint::black_box;
use std::sync::OnceLock;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sharpmp::adversarial::{init_state, ConstructionParams};
use sharpmp::integral_equation::{apply_t, sample_g, solve_f, DEFAULT_MAX_ITER, DEFAULT_TOL};
use sharpmp::linalg::{dot, CoeffVector};
use sharpmp::phi::{build_phi, PhiProfile, DEFAULT_T};
use sharpmp::{bundle, select_atom, Dictionary, OperatingPoint};

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn phi() -> &'static PhiProfile {
    static P: OnceLock<PhiProfile> = OnceLock::new();
    P.get_or_init(|| {
        let (beta, tau) = OperatingPoint::default().resolve().unwrap();
        let g = sample_g(&bundle(beta, tau).unwrap(), 2001).unwrap();
        let f = solve_f(&g, tau, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap().converged_f;
        build_phi(&f, beta, tau, DEFAULT_T, 2001).unwrap()
    })
}

fn bench_dot(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for n in [1_000, 100_000] {
        let (u, v) = (random_vec(&mut rng, n), random_vec(&mut rng, n));
        c.bench_function(&format!("dot/{n}"), |b| b.iter(|| dot(black_box(&u), black_box(&v))));
    }
}

fn bench_select(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (dim, count) = (512, 2048);
    let atoms = (0..count)
        .map(|_| {
            let v = random_vec(&mut rng, dim);
            let n = dot(&v, &v).sqrt();
            CoeffVector::new(v.into_iter().map(|x| x / n).collect())
        })
        .collect();
    let dict = Dictionary::from_atoms(atoms).unwrap();
    let r = CoeffVector::new(random_vec(&mut rng, dim));
    c.bench_function("select_atom/512x2048", |b| b.iter(|| select_atom(black_box(&r), &dict).unwrap()));
}

fn bench_apply_t(c: &mut Criterion) {
    let (beta, tau) = OperatingPoint::default().resolve().unwrap();
    let g = sample_g(&bundle(beta, tau).unwrap(), 2001).unwrap();
    c.bench_function("apply_t/2001", |b| b.iter(|| apply_t(&g, black_box(&g), tau, true)));
}

fn bench_construction_step(c: &mut Criterion) {
    let params = ConstructionParams::new(phi().clone(), 200, 400, 1000);
    let prepared = || {
        let mut s = init_state(&params).unwrap();
        while s.n() < 600 {
            s.step(&params).unwrap();
        }
        s
    };
    let mut group = c.benchmark_group("construction");
    group.sample_size(10);
    group.bench_function("step_at_600", |b| {
        b.iter_batched(prepared, |mut s| s.step(&params).unwrap(), BatchSize::LargeInput)
    });
    group.finish();
}

criterion_group!(kernels, bench_dot, bench_select, bench_apply_t, bench_construction_step);
criterion_main!(kernels);
