//! Seeded fixtures shared by the benchmarks.

use mobound_core::{Dataset, Label, TaskKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform features in `[0,1]^d` with class `1 + floor(q x_0)`.
pub fn multiclass(n: usize, d: usize, q: usize, seed: u64) -> Dataset {
    let mut r = rng(seed);
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<f64> = (0..d).map(|_| r.gen_range(0.0..1.0)).collect();
        y.push(Label::ClassIndex(1 + ((q as f64 * row[0]) as usize).min(q - 1)));
        x.push(row);
    }
    Dataset::new(x, y, TaskKind::Multiclass { q }).expect("valid fixture")
}

/// `count` score vectors of length `q` with entries in `[-scale, scale]`.
pub fn scores(count: usize, q: usize, scale: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut r = rng(seed);
    (0..count).map(|_| (0..q).map(|_| r.gen_range(-scale..scale)).collect()).collect()
}

/// Residual matrix for tree fitting.
pub fn residuals(n: usize, q: usize, seed: u64) -> Vec<Vec<f64>> {
    scores(n, q, 1.0, seed)
}
