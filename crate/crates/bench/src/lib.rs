//! Benchmark fixtures: deterministic inputs shared by the criterion benches
//! so timings compare like against like across runs.

use nalgebra::DVector;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use mfs_core::dlm::StudentT;
use mfs_core::rng::substream;

/// Deterministic pseudo-observations for a filter run of length `t`.
pub fn synthetic_observations(t: usize, seed: u64) -> Vec<f64> {
    let mut rng: ChaCha8Rng = substream(seed, "bench-obs", &[t as u64]);
    let mut y = Vec::with_capacity(t);
    let mut level = 0.0_f64;
    for _ in 0..t {
        level = 0.8 * level + rng.gen_range(-0.5..0.5);
        y.push(level);
    }
    y
}

/// Deterministic regressors of dimension `dim` for a filter run of length `t`.
pub fn synthetic_regressors(t: usize, dim: usize, seed: u64) -> Vec<DVector<f64>> {
    let mut rng: ChaCha8Rng = substream(seed, "bench-reg", &[t as u64, dim as u64]);
    (0..t)
        .map(|_| DVector::from_fn(dim, |_, _| rng.gen_range(-1.0..1.0)))
        .collect()
}

/// Deterministic forecast-density sheets for `series` indicators over `t`
/// quarters, shaped like matured projection output.
pub fn synthetic_densities(t: usize, series: usize, seed: u64) -> Vec<Vec<StudentT>> {
    let mut rng: ChaCha8Rng = substream(seed, "bench-dens", &[t as u64, series as u64]);
    (0..series)
        .map(|_| {
            (0..t)
                .map(|_| {
                    StudentT::new(
                        20.0 + rng.gen_range(0.0..10.0),
                        rng.gen_range(-1.0..1.0),
                        0.05 + rng.gen_range(0.0..0.05),
                    )
                    .expect("bench densities are in range")
                })
                .collect()
        })
        .collect()
}
