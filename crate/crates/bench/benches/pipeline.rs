use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use gaplab_bench::{aklt, e1};
use gaplab_core::ground::{epsilon_numeric, gamma_matrix};
use gaplab_core::hamiltonian::{exact_spectrum, lanczos_gap, Caps};
use gaplab_core::linalg::diag_real;
use gaplab_core::model::validate_classa;
use gaplab_core::transfer::fixed_point_triple;
use gaplab_core::{EdgeModel, WindowObservable};

fn model(c: &mut Criterion) {
    let t = e1();
    c.bench_function("validate_classa/e1", |b| b.iter(|| validate_classa(black_box(&t)).unwrap()));
    let v = t.kraus();
    let (p, q) = (t.p_hat_r(), t.p_hat_l());
    c.bench_function("fixed_point_triple/e1", |b| b.iter(|| fixed_point_triple(black_box(&v), &p, &q).unwrap()));
}

fn ground(c: &mut Criterion) {
    let v = e1().kraus();
    c.bench_function("gamma_matrix/e1_n10", |b| b.iter(|| gamma_matrix(black_box(&v), 10).unwrap()));
    c.bench_function("epsilon_numeric/e1_l4_n8", |b| b.iter(|| epsilon_numeric(black_box(&v), 4, 8, 1 << 20).unwrap()));
}

fn spectra(c: &mut Criterion) {
    let v = e1().kraus();
    let mut g = c.benchmark_group("spectra");
    g.sample_size(10);
    g.bench_function("dense/e1_m4_n8", |b| b.iter(|| exact_spectrum(black_box(&v), 4, 8, Caps::default()).unwrap()));
    g.bench_function("lanczos/e1_m4_n12", |b| b.iter(|| lanczos_gap(black_box(&v), 4, 12, Caps::default(), 0).unwrap()));
    g.finish();
}

fn states(c: &mut Criterion) {
    let em = EdgeModel::new(&e1()).unwrap();
    c.bench_function("finite_window_density/e1_n40", |b| b.iter(|| em.finite_window_density(black_box(40), 0, 3).unwrap()));
    let ak = EdgeModel::new(&aklt()).unwrap();
    let sz = WindowObservable::new(0, 1, diag_real(&[1.0, 0.0, -1.0]), 3).unwrap();
    c.bench_function("correlation_decay/aklt_r24", |b| b.iter(|| ak.correlation_decay(black_box(&sz), &sz, 24).unwrap()));
}

criterion_group!(benches, model, ground, spectra, states);
criterion_main!(benches);
