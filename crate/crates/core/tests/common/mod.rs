#![allow(dead_code)]

use qsd_particle::oracle::Distribution;
use qsd_particle::SubstochasticMatrix;
use rand::Rng;

pub fn running_example() -> SubstochasticMatrix {
    SubstochasticMatrix::from_rows(vec![vec![0.5, 0.3], vec![0.4, 0.4]]).unwrap()
}

/// Random kernel on `size` states; row `i` loses an absorption mass drawn
/// uniformly from `[0, max_absorption]` and spreads the rest with random
/// weights. `floor > 0` keeps every entry positive, making the kernel primitive.
pub fn random_kernel<R: Rng>(rng: &mut R, size: usize, max_absorption: f64, floor: f64) -> SubstochasticMatrix {
    let rows = (0..size)
        .map(|_| {
            let absorption = max_absorption * rng.random::<f64>();
            let w: Vec<f64> = (0..size).map(|_| floor + rng.random::<f64>()).collect();
            let total: f64 = w.iter().sum();
            w.into_iter().map(|x| x / total * (1.0 - absorption)).collect()
        })
        .collect();
    SubstochasticMatrix::from_rows(rows).unwrap()
}

pub fn random_distribution<R: Rng>(rng: &mut R, size: usize) -> Distribution {
    let w: Vec<f64> = (0..size).map(|_| rng.random::<f64>() + 1e-3).collect();
    let total: f64 = w.iter().sum();
    Distribution::new(w.into_iter().map(|x| x / total).collect()).unwrap()
}
