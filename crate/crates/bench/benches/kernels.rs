use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dgiga_bench::system;
use dgiga_core::assembly::assemble;
use dgiga_core::linalg::{cg_solve, CgOptions};
use dgiga_core::splines::{KnotVector, TensorBasis};

fn basis_eval(c: &mut Criterion) {
    let mut group = c.benchmark_group("basis_eval");
    for k in [1usize, 3, 5] {
        let kv = KnotVector::uniform(k, 64);
        group.bench_with_input(BenchmarkId::new("univariate", k), &kv, |b, kv| {
            b.iter(|| kv.eval_basis_derivs(black_box(0.377), 1).unwrap())
        });
        let basis = TensorBasis::new(vec![kv.clone(), kv.clone()], None).unwrap();
        group.bench_with_input(BenchmarkId::new("tensor_2d", k), &basis, |b, basis| {
            b.iter(|| basis.eval(black_box(&[0.377, 0.61])).unwrap())
        });
    }
    group.finish();
}

fn assembly(c: &mut Criterion) {
    let mut group = c.benchmark_group("assemble");
    group.sample_size(10);
    for (case, k, level) in [("smooth2d", 2, 3), ("torus_lb", 2, 2), ("smooth3d", 2, 1)] {
        let (spec, disc, _) = system(case, k, level);
        group.bench_function(format!("{case}_k{k}_l{level}"), |b| b.iter(|| assemble(&spec, &disc).unwrap()));
    }
    group.finish();
}

fn solver(c: &mut Criterion) {
    let mut group = c.benchmark_group("cg_jacobi");
    group.sample_size(10);
    for level in [3, 4] {
        let (_, _, sys) = system("smooth2d", 2, level);
        let opts = CgOptions::default();
        group.bench_function(format!("smooth2d_k2_l{level}_n{}", sys.num_dofs()), |b| {
            b.iter(|| cg_solve(&sys.matrix, &sys.rhs, &opts).unwrap())
        });
    }
    let (_, _, sys) = system("smooth2d", 2, 4);
    let x: Vec<f64> = (0..sys.num_dofs()).map(|i| (i as f64).sin()).collect();
    group.bench_function("spmv_smooth2d_k2_l4", |b| b.iter(|| sys.matrix.matvec(black_box(&x))));
    group.finish();
}

criterion_group!(benches, basis_eval, assembly, solver);
criterion_main!(benches);
