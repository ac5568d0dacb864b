//! Shared fixtures for the kernel benchmarks.

use arealize::geom::{GridFieldSnapshot, Point};
use arealize::rng::Rng;

/// A side x side grid field with a smooth signal plus seeded noise.
pub fn synthetic_field(side: usize, seed: u64) -> GridFieldSnapshot {
    let mut rng = Rng::stream(seed, "bench-field", 0);
    let mut samples = Vec::with_capacity(side * side);
    for iy in 0..side {
        for ix in 0..side {
            let (x, y) = (ix as f64, iy as f64);
            let v = 10.0 + 3.0 * (x / 4.0).sin() + 2.0 * (y / 5.0).cos() + 0.2 * rng.next_normal();
            samples.push((Point::new(x, y), v));
        }
    }
    GridFieldSnapshot::new("bench", 2020, None, samples).unwrap()
}
