#![no_main]

//! Builds a small kernel from the input bytes and checks that particle steps
//! never fail on it.

use libfuzzer_sys::fuzz_target;
use qsd_particle::engine::{advance_one_step, default_iteration_cap, ParticleEnsemble};
use qsd_particle::replicas::derive_rng_stream;
use qsd_particle::SubstochasticMatrix;

fuzz_target!(|data: &[u8]| {
    if data.len() < 3 {
        return;
    }
    let size = 1 + (data[0] as usize % 6);
    let n = 2 + (data[1] as usize % 10);
    let seed = data[2] as u64;
    let body = &data[3..];
    if body.len() < size * (size + 1) {
        return;
    }
    let rows: Vec<Vec<f64>> = (0..size)
        .map(|i| {
            let chunk = &body[i * (size + 1)..(i + 1) * (size + 1)];
            // The last byte of each chunk is the absorption weight, capped so
            // some mass always survives.
            let weights: Vec<f64> = chunk.iter().map(|&b| b as f64 + 1.0).collect();
            let total: f64 = weights.iter().sum::<f64>();
            let absorb = (weights[size] / total).min(0.95);
            let live: f64 = weights[..size].iter().sum();
            weights[..size].iter().map(|w| w / live * (1.0 - absorb)).collect()
        })
        .collect();
    let m = SubstochasticMatrix::from_rows(rows).expect("construction keeps rows substochastic");
    let mut rng = derive_rng_stream(seed, 0);
    let mut ens = ParticleEnsemble::new((0..n).map(|k| k % size).collect()).unwrap();
    for _ in 0..20 {
        advance_one_step(&mut ens, &m, &mut rng, default_iteration_cap(n)).expect("steps never fail");
        assert!(ens.positions().iter().all(|&x| x < size));
    }
});
