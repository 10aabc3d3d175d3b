//! Evaluation: observation-ratio sweeps, obstacle studies and their reports.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::arm::ArmModel;
use crate::datagen::{subset, train_test_split};
use crate::error::{invalid, Result};
use crate::pipeline::{train, PipelineConfig, TrainedModel};
use crate::planner::{joint_path_frames, min_clearance_mm, Obstacle, Planner};
use crate::trajectory::{Dataset, InteractionDemo, DEFAULT_OUT_LEN};

/// Linear resampling of the rows of `path` at `n` evenly spaced fractional
/// indices.
pub fn resample(path: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    let len = path.nrows();
    if len == n || len == 0 {
        return path.clone();
    }
    DMatrix::from_fn(n, path.ncols(), |i, j| {
        if len == 1 || n == 1 {
            return path[(0, j)];
        }
        let s = i as f64 * (len - 1) as f64 / (n - 1) as f64;
        let lo = (s.floor() as usize).min(len - 2);
        let f = s - lo as f64;
        path[(lo, j)] * (1.0 - f) + path[(lo + 1, j)] * f
    })
}

/// RMS of pointwise Euclidean distances after resampling both paths to
/// [`DEFAULT_OUT_LEN`] points.
pub fn rms_error(predicted: &DMatrix<f64>, target: &DMatrix<f64>) -> Result<f64> {
    if predicted.nrows() == 0 || target.nrows() == 0 {
        return Err(invalid("RMS error needs non-empty paths"));
    }
    if predicted.ncols() != target.ncols() {
        return Err(invalid("RMS error needs paths of equal dimension"));
    }
    let a = resample(predicted, DEFAULT_OUT_LEN);
    let b = resample(target, DEFAULT_OUT_LEN);
    let sq: f64 = (0..DEFAULT_OUT_LEN)
        .map(|i| (a.row(i) - b.row(i)).norm_squared())
        .sum();
    Ok((sq / DEFAULT_OUT_LEN as f64).sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub ratios: Vec<f64>,
    pub n_clusters: usize,
    pub n_samples: usize,
    pub pipeline: PipelineConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            ratios: vec![0.2, 0.4, 0.6, 0.8, 1.0],
            n_clusters: 5,
            n_samples: 200,
            pipeline: PipelineConfig::default(),
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ratios.is_empty() {
            return Err(invalid("sweep needs at least one ratio"));
        }
        if self.ratios.iter().any(|r| !(*r > 0.0 && *r <= 1.0)) {
            return Err(invalid("ratios must lie in (0, 1]"));
        }
        if self.ratios.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("ratios must be strictly ascending"));
        }
        Ok(())
    }

    /// Pipeline settings with the sweep's cluster and sample counts applied.
    pub fn effective_pipeline(&self) -> PipelineConfig {
        let mut p = self.pipeline.clone();
        p.flow.n_clusters = self.n_clusters;
        p.plan.n_samples = self.n_samples;
        p
    }

    /// First 16 hex digits of the SHA-256 of the effective configuration.
    pub fn hash(&self) -> String {
        let mut cfg = self.clone();
        cfg.pipeline = self.effective_pipeline();
        config_hash(&cfg)
    }
}

pub fn config_hash<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("config serializes");
    Sha256::digest(&bytes)[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Seed of the plan for test demo `demo` at ratio index `ratio`.
pub fn run_seed(seed: u64, demo: usize, ratio: usize) -> u64 {
    let mut h = seed ^ 0x9e37_79b9_7f4a_7c15;
    for v in [demo as u64, ratio as u64] {
        h = (h ^ v).wrapping_mul(0x0100_0000_01b3).rotate_left(29);
    }
    h
}

/// Joint configuration whose hand is at the demo's first robot position.
pub fn start_joints(arm: &ArmModel, planner: &Planner, demo: &InteractionDemo) -> Result<Vec<f64>> {
    let p = demo.robot.position(0);
    arm.solve_ik(&Vector3::new(p[0], p[1], p[2]), &arm.ready_pose(), &planner.config.ik)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub config_hash: String,
    pub seed: u64,
    /// Index into the full dataset.
    pub demo: usize,
    pub mode: Option<String>,
    pub ratio: f64,
    pub rms_m: f64,
    pub descriptor_argmax: usize,
    pub descriptor: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub config_hash: String,
    pub seed: u64,
    pub ratio: f64,
    pub mean_rms_m: f64,
    pub std_rms_m: f64,
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub config_hash: String,
    pub seed: u64,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub rows: Vec<SweepRow>,
    pub summary: Vec<SummaryRow>,
    /// Fraction of test demos whose descriptor argmax at the smallest ratio
    /// equals the argmax at the largest.
    pub early_agreement: f64,
    /// Mean RMS at the smallest ratio over mean RMS at the largest.
    pub degradation: f64,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Train/test split plus the model trained on the training half.
pub struct Prepared {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub model: TrainedModel,
    pub planner: Planner,
    pub test_demos: Vec<InteractionDemo>,
}

pub fn prepare(dataset: &Dataset, pipeline: &PipelineConfig, seed: u64) -> Result<Prepared> {
    let (train_idx, test_idx) = train_test_split(dataset, seed);
    if train_idx.is_empty() || test_idx.is_empty() {
        return Err(invalid("dataset too small for a train/test split"));
    }
    let model = train(&subset(dataset, &train_idx), pipeline, seed)?;
    let planner = model.planner()?;
    let test_demos = subset(dataset, &test_idx).preprocess(&pipeline.preprocess)?;
    Ok(Prepared {
        train: train_idx,
        test: test_idx,
        model,
        planner,
        test_demos,
    })
}

pub fn run_sweep(dataset: &Dataset, config: &SweepConfig, seed: u64) -> Result<SweepReport> {
    config.validate()?;
    let prep = prepare(dataset, &config.effective_pipeline(), seed)?;
    sweep_prepared(&prep, config, seed)
}

pub fn sweep_prepared(prep: &Prepared, config: &SweepConfig, seed: u64) -> Result<SweepReport> {
    let hash = config.hash();
    let arm = &prep.planner.arm;
    let jobs: Vec<(usize, usize)> = (0..prep.test_demos.len())
        .flat_map(|d| (0..config.ratios.len()).map(move |r| (d, r)))
        .collect();
    let rows = jobs
        .par_iter()
        .map(|&(d, r)| {
            let demo = &prep.test_demos[d];
            let q_now = start_joints(arm, &prep.planner, demo)?;
            let obs = demo.human.observed(config.ratios[r]);
            let plan = prep.planner.plan(&obs, &q_now, run_seed(seed, prep.test[d], r), &[])?;
            Ok(SweepRow {
                config_hash: hash.clone(),
                seed,
                demo: prep.test[d],
                mode: demo.mode_label.clone(),
                ratio: config.ratios[r],
                rms_m: rms_error(&plan.path, demo.robot.positions())?,
                descriptor_argmax: plan.descriptor.argmax(),
                descriptor: plan.descriptor.p.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let summary: Vec<SummaryRow> = config
        .ratios
        .iter()
        .map(|ratio| {
            let v: Vec<f64> = rows.iter().filter(|r| r.ratio == *ratio).map(|r| r.rms_m).collect();
            let (mean, std) = mean_std(&v);
            SummaryRow {
                config_hash: hash.clone(),
                seed,
                ratio: *ratio,
                mean_rms_m: mean,
                std_rms_m: std,
                n: v.len(),
            }
        })
        .collect();
    let n_r = config.ratios.len();
    let agree = (0..prep.test_demos.len())
        .filter(|d| rows[d * n_r].descriptor_argmax == rows[d * n_r + n_r - 1].descriptor_argmax)
        .count();
    Ok(SweepReport {
        config_hash: hash,
        seed,
        train: prep.train.clone(),
        test: prep.test.clone(),
        early_agreement: agree as f64 / prep.test_demos.len() as f64,
        degradation: summary[0].mean_rms_m / summary[n_r - 1].mean_rms_m,
        rows,
        summary,
    })
}

/// Where the obstacle of each run goes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObstaclePlacement {
    /// The same obstacles in every run.
    Fixed(Vec<Obstacle>),
    /// One sphere centered on the midpoint of each run's target robot path.
    TargetMidpoint { radius_m: f64 },
    /// No obstacle.
    Disabled,
}

impl Default for ObstaclePlacement {
    fn default() -> Self {
        ObstaclePlacement::TargetMidpoint { radius_m: 0.05 }
    }
}

impl ObstaclePlacement {
    pub fn obstacles_for(&self, demo: &InteractionDemo) -> Vec<Obstacle> {
        match self {
            ObstaclePlacement::Fixed(o) => o.clone(),
            ObstaclePlacement::TargetMidpoint { radius_m } => {
                let p = demo.robot.position(demo.robot.len() / 2);
                vec![Obstacle {
                    center: [p[0], p[1], p[2]],
                    radius_m: *radius_m,
                }]
            }
            ObstaclePlacement::Disabled => Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObstacleRow {
    pub config_hash: String,
    pub seed: u64,
    pub run: usize,
    pub demo: usize,
    pub mode: Option<String>,
    /// Clearance of the obstacle-aware plan over the four monitored frames.
    pub d_min_mm: Option<f64>,
    pub rms_m: f64,
    /// Clearance and RMS of the plan for the same run without the obstacle.
    pub baseline_d_min_mm: Option<f64>,
    pub baseline_rms_m: f64,
    pub obstacles: Vec<Obstacle>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObstacleReport {
    pub config_hash: String,
    pub seed: u64,
    pub alpha_mm: f64,
    pub rows: Vec<ObstacleRow>,
    /// Fraction of runs whose clearance exceeds the barrier threshold.
    pub clear_fraction: f64,
    pub min_d_min_mm: Option<f64>,
    pub mean_rms_m: f64,
    pub mean_baseline_rms_m: f64,
}

/// Plans every test demo from its full observation, with and without the
/// obstacles of `placement`. Plan seeds match the sweep's ratio-1.0 rows
/// when 1.0 is the last sweep ratio.
pub fn run_obstacle_study(
    dataset: &Dataset,
    config: &SweepConfig,
    placement: &ObstaclePlacement,
    seed: u64,
) -> Result<ObstacleReport> {
    config.validate()?;
    let prep = prepare(dataset, &config.effective_pipeline(), seed)?;
    obstacle_prepared(&prep, config, placement, seed)
}

pub fn obstacle_prepared(
    prep: &Prepared,
    config: &SweepConfig,
    placement: &ObstaclePlacement,
    seed: u64,
) -> Result<ObstacleReport> {
    let hash = config_hash(&(config.hash(), placement));
    let planner = &prep.planner;
    let ratio_index = config.ratios.len() - 1;
    let rows = (0..prep.test_demos.len())
        .into_par_iter()
        .map(|d| {
            let demo = &prep.test_demos[d];
            let q_now = start_joints(&planner.arm, planner, demo)?;
            let obs = demo.human.observed(1.0);
            let plan_seed = run_seed(seed, prep.test[d], ratio_index);
            let obstacles = placement.obstacles_for(demo);
            let with = planner.plan(&obs, &q_now, plan_seed, &obstacles)?;
            let without = planner.plan(&obs, &q_now, plan_seed, &[])?;
            let base_clear = min_clearance_mm(&joint_path_frames(&planner.arm, &without.joints), &obstacles);
            Ok(ObstacleRow {
                config_hash: hash.clone(),
                seed,
                run: d,
                demo: prep.test[d],
                mode: demo.mode_label.clone(),
                d_min_mm: with.clearance_mm,
                rms_m: rms_error(&with.path, demo.robot.positions())?,
                baseline_d_min_mm: base_clear,
                baseline_rms_m: rms_error(&without.path, demo.robot.positions())?,
                obstacles,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let alpha = planner.config.barrier.alpha_mm;
    let n = rows.len() as f64;
    let clear = rows
        .iter()
        .filter(|r| r.d_min_mm.is_none_or(|d| d > alpha))
        .count();
    Ok(ObstacleReport {
        config_hash: hash.clone(),
        seed,
        alpha_mm: alpha,
        clear_fraction: clear as f64 / n,
        min_d_min_mm: rows.iter().filter_map(|r| r.d_min_mm).reduce(f64::min),
        mean_rms_m: rows.iter().map(|r| r.rms_m).sum::<f64>() / n,
        mean_baseline_rms_m: rows.iter().map(|r| r.baseline_rms_m).sum::<f64>() / n,
        rows,
    })
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

#[derive(Serialize)]
struct FlatSweepRow<'a> {
    config_hash: &'a str,
    seed: u64,
    demo: usize,
    mode: &'a str,
    ratio: f64,
    rms_m: f64,
    descriptor_argmax: usize,
}

/// Writes `sweep.json`, `sweep_rows.csv` and `sweep_summary.csv` into `dir`.
pub fn write_sweep(dir: &Path, report: &SweepReport) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_json(&dir.join("sweep.json"), report)?;
    let flat: Vec<FlatSweepRow> = report
        .rows
        .iter()
        .map(|r| FlatSweepRow {
            config_hash: &r.config_hash,
            seed: r.seed,
            demo: r.demo,
            mode: r.mode.as_deref().unwrap_or(""),
            ratio: r.ratio,
            rms_m: r.rms_m,
            descriptor_argmax: r.descriptor_argmax,
        })
        .collect();
    write_csv(&dir.join("sweep_rows.csv"), &flat)?;
    write_csv(&dir.join("sweep_summary.csv"), &report.summary)
}

#[derive(Serialize)]
struct FlatObstacleRow<'a> {
    config_hash: &'a str,
    seed: u64,
    run: usize,
    demo: usize,
    mode: &'a str,
    d_min_mm: Option<f64>,
    rms_m: f64,
    baseline_d_min_mm: Option<f64>,
    baseline_rms_m: f64,
}

/// Writes `obstacle_study.json` and `obstacle_study.csv` into `dir`.
pub fn write_obstacle(dir: &Path, report: &ObstacleReport) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_json(&dir.join("obstacle_study.json"), report)?;
    let flat: Vec<FlatObstacleRow> = report
        .rows
        .iter()
        .map(|r| FlatObstacleRow {
            config_hash: &r.config_hash,
            seed: r.seed,
            run: r.run,
            demo: r.demo,
            mode: r.mode.as_deref().unwrap_or(""),
            d_min_mm: r.d_min_mm,
            rms_m: r.rms_m,
            baseline_d_min_mm: r.baseline_d_min_mm,
            baseline_rms_m: r.baseline_rms_m,
        })
        .collect();
    write_csv(&dir.join("obstacle_study.csv"), &flat)
}
