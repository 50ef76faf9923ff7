use std::hint::black_box;

use aiot_core::energy::{harvest_power, integrate_slot};
use aiot_core::{EfficiencyMode, EnergyStorage};
use criterion::{criterion_group, criterion_main, Criterion};

fn integrate(c: &mut Criterion) {
    let storage = EnergyStorage::new(500e-9, 500e-9, 250e-9)
        .unwrap()
        .with_level(300e-9);
    c.bench_function("integrate_slot", |b| {
        b.iter(|| {
            integrate_slot(
                black_box(storage),
                black_box(1e-6),
                black_box(12.56e-9),
                5e-4,
            )
        })
    });
}

fn harvest(c: &mut Criterion) {
    let p_in: Vec<f64> = (0..600).map(|i| -36.0 + f64::from(i) * 0.05).collect();
    for mode in [EfficiencyMode::AsPrinted, EfficiencyMode::PeakAtMinus10] {
        c.bench_function(&format!("harvest_power_600_{mode:?}"), |b| {
            b.iter(|| {
                p_in.iter()
                    .map(|&p| harvest_power(black_box(p), mode))
                    .sum::<f64>()
            })
        });
    }
}

criterion_group!(benches, integrate, harvest);
criterion_main!(benches);
