#![allow(dead_code)]

use std::sync::OnceLock;

use flowcoop::datagen::{default_modes, generate, DEFAULT_SAMPLE_RATE};
use flowcoop::harness::{prepare, Prepared};
use flowcoop::pipeline::PipelineConfig;
use flowcoop::trajectory::{Dataset, Trajectory};
use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const DATA_SEED: u64 = 7;

pub fn dataset() -> &'static Dataset {
    static DATA: OnceLock<Dataset> = OnceLock::new();
    DATA.get_or_init(|| generate(&default_modes(), DEFAULT_SAMPLE_RATE, DATA_SEED).unwrap())
}

/// Default pipeline trained on the training half of [`dataset`].
pub fn prepared() -> &'static Prepared {
    static PREP: OnceLock<Prepared> = OnceLock::new();
    PREP.get_or_init(|| prepare(dataset(), &PipelineConfig::default(), DATA_SEED).unwrap())
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, n: usize, d: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(n, d, |_, _| rng.random_range(-scale..scale))
}

/// A smooth random 3-D curve: a sum of low-frequency sinusoids with random
/// amplitudes and phases, sampled at `n` points over one second.
pub fn smooth_trajectory(rng: &mut ChaCha8Rng, n: usize) -> Trajectory {
    let coef: Vec<(f64, f64, f64)> = (0..9)
        .map(|_| {
            (
                rng.random_range(0.05..0.3),
                rng.random_range(0.3..1.5),
                rng.random_range(0.0..std::f64::consts::TAU),
            )
        })
        .collect();
    let times: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
    let pos = DMatrix::from_fn(n, 3, |i, j| {
        (0..3)
            .map(|h| {
                let (a, w, phi) = coef[3 * j + h];
                a * (w * times[i] * (h + 1) as f64 + phi).sin()
            })
            .sum()
    });
    let vel = DMatrix::from_fn(n, 3, |i, j| {
        (0..3)
            .map(|h| {
                let (a, w, phi) = coef[3 * j + h];
                let f = w * (h + 1) as f64;
                a * f * (f * times[i] + phi).cos()
            })
            .sum()
    });
    Trajectory::new(times, pos, vel).unwrap()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub mod oracle;
