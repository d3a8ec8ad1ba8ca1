use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use ercav::ensemble::{synthesize_decay, Noise, TraceWindow};
use ercav::fitting::{fit_decay, fit_lorentzian, DecayFitSpec};
use ercav::reproduce::{decay_detector, equal_amplitude_emitters, lorentzian_scan};

fn fits(c: &mut Criterion) {
    let scan = lorentzian_scan(11_400.0, 201, 0.01, 7).unwrap();
    c.bench_function("fit_lorentzian", |b| b.iter(|| fit_lorentzian(black_box(&scan)).unwrap()));

    let det = decay_detector(7);
    let emitters = equal_amplitude_emitters(10.8e-3, 1.8e-3, 0.1144, &det).unwrap();
    let window = TraceWindow { bin_width: 0.1e-3, n_bins: 600 };
    c.bench_function("synthesize_decay", |b| {
        b.iter(|| synthesize_decay(black_box(&emitters), &det, &window, 500, Noise::Poisson).unwrap())
    });

    let trace = synthesize_decay(&emitters, &det, &window, 500, Noise::Poisson).unwrap();
    let free = DecayFitSpec::default();
    let fixed = DecayFitSpec { fixed_tau1: Some(10.8e-3), ..DecayFitSpec::default() };
    c.bench_function("fit_decay_free", |b| b.iter(|| fit_decay(black_box(&trace), &free).unwrap()));
    c.bench_function("fit_decay_fixed_tau1", |b| b.iter(|| fit_decay(black_box(&trace), &fixed).unwrap()));
}

criterion_group!(benches, fits);
criterion_main!(benches);
