//! Synthetic interacting demonstrations with known mode labels.
//!
//! Coordinates are in the robot base frame, meters. The human stands
//! across the table at `x ~ 1 m` and moves toward the robot; the robot hand
//! starts at [`ROBOT_START`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::gp::{linspace, Anchor, GrpMean, SeKernel};
use crate::trajectory::{Dataset, DemoRecord, RawPath};

/// Robot hand position at the start of every generated demonstration.
pub const ROBOT_START: [f64; 3] = [0.35, 0.0, 0.45];

/// Default per-waypoint noise, meters.
pub const DEFAULT_NOISE: f64 = 0.01;

pub const DEFAULT_SAMPLE_RATE: f64 = 10.0;

/// One cooperation mode: template waypoints for both agents, visited at
/// evenly spaced times over `duration_s`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeSpec {
    pub name: String,
    pub human_waypoints: Vec<[f64; 3]>,
    pub robot_waypoints: Vec<[f64; 3]>,
    pub noise_sigma: f64,
    pub n_demos: usize,
    #[serde(default = "default_duration")]
    pub duration_s: f64,
}

fn default_duration() -> f64 {
    4.0
}

impl ModeSpec {
    pub fn validate(&self) -> Result<()> {
        if self.human_waypoints.len() < 2 || self.robot_waypoints.len() < 2 {
            return Err(invalid(format!("mode {}: needs at least 2 waypoints per agent", self.name)));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(invalid(format!("mode {}: noise_sigma must be >= 0", self.name)));
        }
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(invalid(format!("mode {}: duration must be positive", self.name)));
        }
        Ok(())
    }
}

fn mode(name: &str, human: Vec<[f64; 3]>, robot_end: [f64; 3], robot_mid: [f64; 3]) -> ModeSpec {
    ModeSpec {
        name: name.to_string(),
        human_waypoints: human,
        robot_waypoints: vec![ROBOT_START, robot_mid, robot_end],
        noise_sigma: DEFAULT_NOISE,
        n_demos: 20,
        duration_s: default_duration(),
    }
}

/// Four modes over a 0.6 m wide workspace: hand-overs at the center and to
/// the robot's right, and sweeps to the right and to the left. During a
/// sweep the robot retreats to the side the hand is leaving.
pub fn default_modes() -> Vec<ModeSpec> {
    vec![
        mode(
            "center_hand_over",
            vec![[0.95, 0.0, 0.25], [0.75, 0.0, 0.35], [0.58, 0.0, 0.40]],
            [0.48, 0.0, 0.40],
            [0.42, 0.0, 0.43],
        ),
        mode(
            "right_hand_over",
            vec![[0.95, -0.24, 0.25], [0.78, -0.30, 0.35], [0.60, -0.30, 0.40]],
            [0.48, -0.28, 0.38],
            [0.40, -0.15, 0.42],
        ),
        mode(
            "right_swipe",
            vec![[0.72, 0.30, 0.22], [0.66, 0.0, 0.30], [0.72, -0.30, 0.22]],
            [0.30, 0.28, 0.35],
            [0.34, 0.15, 0.42],
        ),
        mode(
            "left_swipe",
            vec![[0.72, -0.30, 0.22], [0.66, 0.0, 0.30], [0.72, 0.30, 0.22]],
            [0.30, -0.28, 0.35],
            [0.34, -0.15, 0.42],
        ),
    ]
}

fn draw_path(
    waypoints: &[[f64; 3]],
    times: &[f64],
    duration: f64,
    sigma: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec<f64>>> {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let wp_times = linspace(0.0, duration, waypoints.len());
    let anchors: Vec<Anchor> = waypoints
        .iter()
        .zip(&wp_times)
        .map(|(w, t)| Anchor::new(*t, w.iter().map(|c| c + sigma * normal.sample(rng)).collect::<Vec<_>>()))
        .collect();
    let kernel = SeKernel::new(1.0, duration / waypoints.len() as f64, 1e-8)?;
    let mean = GrpMean::fit(&anchors, &kernel)?;
    // measurement jitter on every sample
    let jitter = 0.2 * sigma;
    Ok(times
        .iter()
        .map(|t| {
            mean.value(*t)
                .iter()
                .map(|c| c + jitter * normal.sample(rng))
                .collect()
        })
        .collect())
}

/// Generates `n_demos` paired demonstrations per mode at `sample_rate_hz`.
/// Each demonstration perturbs the mode's waypoints with `noise_sigma`,
/// interpolates them with a Gaussian random path mean and adds sampling
/// jitter. Deterministic for a given seed.
pub fn generate(specs: &[ModeSpec], sample_rate_hz: f64, seed: u64) -> Result<Dataset> {
    if specs.is_empty() {
        return Err(invalid("at least one mode is required"));
    }
    if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
        return Err(invalid("sample rate must be positive"));
    }
    for s in specs {
        s.validate()?;
    }
    let jobs: Vec<(usize, usize)> = specs
        .iter()
        .enumerate()
        .flat_map(|(m, s)| (0..s.n_demos).map(move |i| (m, i)))
        .collect();
    let demos = jobs
        .par_iter()
        .map(|&(m, i)| {
            let spec = &specs[m];
            let stream = (m as u64) << 32 | i as u64;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(stream);
            let n = (spec.duration_s * sample_rate_hz).round() as usize + 1;
            let times: Vec<f64> = (0..n).map(|k| k as f64 / sample_rate_hz).collect();
            let duration = times[n - 1];
            let human = draw_path(&spec.human_waypoints, &times, duration, spec.noise_sigma, &mut rng)?;
            let robot = draw_path(&spec.robot_waypoints, &times, duration, spec.noise_sigma, &mut rng)?;
            Ok(DemoRecord {
                mode: Some(spec.name.clone()),
                human: RawPath::new(times.clone(), human),
                robot: RawPath::new(times, robot),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        sample_rate_hz,
        demos,
    })
}

/// Indices of a per-mode split: within each mode, a seeded shuffle sends
/// the first half (rounded up) to training. Demonstrations without a mode
/// form their own group.
pub fn train_test_split(dataset: &Dataset, seed: u64) -> (Vec<usize>, Vec<usize>) {
    use rand::seq::SliceRandom;
    let mut groups: Vec<(Option<&str>, Vec<usize>)> = Vec::new();
    for (i, d) in dataset.demos.iter().enumerate() {
        let key = d.mode.as_deref();
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(i),
            None => groups.push((key, vec![i])),
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (_, mut idx) in groups {
        idx.shuffle(&mut rng);
        let cut = idx.len().div_ceil(2);
        train.extend_from_slice(&idx[..cut]);
        test.extend_from_slice(&idx[cut..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

/// Sub-dataset with the demonstrations at `indices`.
pub fn subset(dataset: &Dataset, indices: &[usize]) -> Dataset {
    Dataset {
        sample_rate_hz: dataset.sample_rate_hz,
        demos: indices.iter().map(|i| dataset.demos[*i].clone()).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_and_rate() {
        let data = generate(&default_modes(), 10.0, 7).unwrap();
        assert_eq!(data.demos.len(), 80);
        let d = &data.demos[0];
        assert_eq!(d.human.len(), 41);
        assert!((d.human.t[1] - 0.1).abs() < 1e-12);
        data.validate().unwrap();
    }

    #[test]
    fn zero_noise_is_identical() {
        let mut modes = default_modes();
        modes.truncate(1);
        modes[0].noise_sigma = 0.0;
        modes[0].n_demos = 3;
        let data = generate(&modes, 10.0, 1).unwrap();
        assert_eq!(data.demos[0], data.demos[1]);
        assert_eq!(data.demos[1], data.demos[2]);
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let a = generate(&default_modes(), 10.0, 3).unwrap();
        let b = generate(&default_modes(), 10.0, 3).unwrap();
        let c = generate(&default_modes(), 10.0, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn split_is_disjoint_and_exhaustive() {
        let data = generate(&default_modes(), 10.0, 3).unwrap();
        let (train, test) = train_test_split(&data, 11);
        assert_eq!(train.len(), 40);
        assert_eq!(test.len(), 40);
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..80).collect::<Vec<_>>());
        assert_eq!((train.clone(), test.clone()), train_test_split(&data, 11));
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(generate(&[], 10.0, 0).is_err());
        let mut m = default_modes();
        m[0].human_waypoints.truncate(1);
        assert!(generate(&m, 10.0, 0).is_err());
    }
}
