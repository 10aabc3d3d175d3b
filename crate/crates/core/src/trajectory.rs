//! Trajectories, interacting demonstrations, dataset files and preprocessing.
//!
//! Datasets are stored as raw time-stamped positions. Velocities are never
//! serialized: [`preprocess`] smooths a raw path with a Gaussian random path
//! mean, resamples it on a uniform time grid and differentiates the mean
//! analytically.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gp::{linspace, Anchor, GrpMean, SeKernel};

/// Default number of resampled points per trajectory.
pub const DEFAULT_OUT_LEN: usize = 50;

/// Time-stamped positions and velocities. Rows of `positions` and
/// `velocities` correspond to entries of `times`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    times: Vec<f64>,
    positions: DMatrix<f64>,
    velocities: DMatrix<f64>,
}

impl Trajectory {
    pub fn new(times: Vec<f64>, positions: DMatrix<f64>, velocities: DMatrix<f64>) -> Result<Self> {
        let len = times.len();
        if len < 2 {
            return Err(invalid(format!("trajectory needs at least 2 points, got {len}")));
        }
        if positions.nrows() != len || velocities.nrows() != len {
            return Err(invalid("times, positions and velocities must have equal length"));
        }
        if positions.ncols() == 0 || positions.ncols() != velocities.ncols() {
            return Err(invalid("positions and velocities must share a non-zero dimension"));
        }
        check_times(&times)?;
        if positions.iter().chain(velocities.iter()).any(|v| !v.is_finite()) {
            return Err(invalid("trajectory contains non-finite values"));
        }
        Ok(Trajectory {
            times,
            positions,
            velocities,
        })
    }

    /// Builds a trajectory whose velocities are central finite differences
    /// of the positions (one-sided at the ends).
    pub fn from_positions(times: Vec<f64>, positions: DMatrix<f64>) -> Result<Self> {
        let n = positions.nrows();
        if times.len() != n || n < 2 {
            return Err(invalid("from_positions needs at least 2 matching rows"));
        }
        let mut velocities = DMatrix::zeros(n, positions.ncols());
        for i in 0..n {
            let (a, b) = match i {
                0 => (0, 1),
                i if i + 1 == n => (n - 2, n - 1),
                i => (i - 1, i + 1),
            };
            let dt = times[b] - times[a];
            let row = (positions.row(b) - positions.row(a)) / dt;
            velocities.row_mut(i).copy_from(&row);
        }
        Self::new(times, positions, velocities)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.positions.ncols()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn positions(&self) -> &DMatrix<f64> {
        &self.positions
    }

    pub fn velocities(&self) -> &DMatrix<f64> {
        &self.velocities
    }

    pub fn position(&self, i: usize) -> DVector<f64> {
        self.positions.row(i).transpose()
    }

    pub fn velocity(&self, i: usize) -> DVector<f64> {
        self.velocities.row(i).transpose()
    }

    pub fn last_position(&self) -> DVector<f64> {
        self.position(self.len() - 1)
    }

    pub fn last_velocity(&self) -> DVector<f64> {
        self.velocity(self.len() - 1)
    }

    /// The first `len` points, clamped to `[2, self.len()]`.
    pub fn prefix(&self, len: usize) -> Trajectory {
        let n = len.clamp(2, self.len());
        Trajectory {
            times: self.times[..n].to_vec(),
            positions: self.positions.rows(0, n).into_owned(),
            velocities: self.velocities.rows(0, n).into_owned(),
        }
    }

    /// Prefix covering `ceil(ratio * len)` points.
    pub fn observed(&self, ratio: f64) -> Trajectory {
        let n = (ratio * self.len() as f64).ceil() as usize;
        self.prefix(n)
    }

    /// Same trajectory with every velocity multiplied by `factor`.
    pub fn scale_velocities(&self, factor: f64) -> Trajectory {
        Trajectory {
            times: self.times.clone(),
            positions: self.positions.clone(),
            velocities: &self.velocities * factor,
        }
    }
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.iter().any(|t| !t.is_finite()) {
        return Err(invalid("timestamps must be finite"));
    }
    if let Some(i) = times.windows(2).position(|w| w[1] <= w[0]) {
        return Err(invalid(format!(
            "timestamps must be strictly increasing (index {} -> {})",
            i,
            i + 1
        )));
    }
    Ok(())
}

/// Raw time-stamped positions as stored in dataset files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawPath {
    pub t: Vec<f64>,
    pub x: Vec<Vec<f64>>,
}

impl RawPath {
    pub fn new(t: Vec<f64>, x: Vec<Vec<f64>>) -> Self {
        RawPath { t, x }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        if self.t.len() < 2 {
            return Err(invalid(format!("path needs at least 2 points, got {}", self.t.len())));
        }
        if self.t.len() != self.x.len() {
            return Err(invalid(format!(
                "path has {} timestamps but {} positions",
                self.t.len(),
                self.x.len()
            )));
        }
        let d = self.dim();
        if d == 0 || self.x.iter().any(|p| p.len() != d) {
            return Err(invalid("all positions must share a non-zero dimension"));
        }
        if self.x.iter().flatten().any(|v| !v.is_finite()) {
            return Err(invalid("positions must be finite"));
        }
        check_times(&self.t)
    }

    pub fn duration(&self) -> f64 {
        match (self.t.first(), self.t.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }
}

/// Raw human/robot pair plus an optional evaluation label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemoRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    pub human: RawPath,
    pub robot: RawPath,
}

/// A collection of raw interacting demonstrations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub sample_rate_hz: f64,
    pub demos: Vec<DemoRecord>,
}

impl Dataset {
    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0) {
            return Err(invalid("sample_rate_hz must be positive"));
        }
        if self.demos.is_empty() {
            return Err(invalid("dataset contains no demonstrations"));
        }
        let dim = self.demos[0].human.dim();
        for (i, demo) in self.demos.iter().enumerate() {
            for (role, path) in [("human", &demo.human), ("robot", &demo.robot)] {
                path.validate().map_err(|e| Error::Schema {
                    record: format!("demos[{i}].{role}"),
                    message: e.to_string(),
                })?;
                if path.dim() != dim {
                    return Err(invalid(format!(
                        "demos[{i}].{role} has dimension {} but the dataset uses {dim}",
                        path.dim()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.demos.first().map_or(0, |d| d.human.dim())
    }

    /// Preprocesses every demonstration.
    pub fn preprocess(&self, config: &PreprocessConfig) -> Result<Vec<InteractionDemo>> {
        use rayon::prelude::*;
        self.demos
            .par_iter()
            .map(|d| InteractionDemo::from_record(d, config))
            .collect()
    }
}

/// A preprocessed human/robot demonstration pair.
#[derive(Clone, Debug, PartialEq)]
pub struct InteractionDemo {
    pub human: Trajectory,
    pub robot: Trajectory,
    pub mode_label: Option<String>,
}

impl InteractionDemo {
    pub fn new(human: Trajectory, robot: Trajectory, mode_label: Option<String>) -> Result<Self> {
        if human.dim() != robot.dim() {
            return Err(invalid("human and robot trajectories must share a dimension"));
        }
        Ok(InteractionDemo {
            human,
            robot,
            mode_label,
        })
    }

    pub fn from_record(record: &DemoRecord, config: &PreprocessConfig) -> Result<Self> {
        let human = preprocess_with(&record.human, config)?.trajectory;
        let robot = preprocess_with(&record.robot, config)?.trajectory;
        Self::new(human, robot, record.mode.clone())
    }
}

/// Dataset file format.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DataFormat {
    /// A single JSON document.
    Json,
    /// A directory of `<demo>.human.csv` / `<demo>.robot.csv` pairs with
    /// columns `t,x0,x1,...`. A demo named `<mode>__<id>` carries `<mode>`
    /// as its label.
    Csv,
}

impl DataFormat {
    pub fn from_path(path: &Path) -> Self {
        if path.is_dir() {
            DataFormat::Csv
        } else {
            DataFormat::Json
        }
    }
}

pub fn load_dataset(path: &Path, format: DataFormat) -> Result<Dataset> {
    let dataset = match format {
        DataFormat::Json => parse_dataset_json(&fs::read_to_string(path)?)?,
        DataFormat::Csv => load_csv_dir(path)?,
    };
    dataset.validate()?;
    Ok(dataset)
}

pub fn parse_dataset_json(text: &str) -> Result<Dataset> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    let object = value.as_object().ok_or_else(|| Error::Schema {
        record: "<root>".into(),
        message: "expected a JSON object".into(),
    })?;
    let sample_rate_hz = object
        .get("sample_rate_hz")
        .and_then(serde_json::Value::as_f64)
        .ok_or_else(|| Error::Schema {
            record: "sample_rate_hz".into(),
            message: "missing or not a number".into(),
        })?;
    let raw_demos = object
        .get("demos")
        .and_then(serde_json::Value::as_array)
        .ok_or_else(|| Error::Schema {
            record: "demos".into(),
            message: "missing or not an array".into(),
        })?;
    let demos = raw_demos
        .iter()
        .enumerate()
        .map(|(i, v)| {
            DemoRecord::deserialize(v).map_err(|e| Error::Schema {
                record: format!("demos[{i}]"),
                message: e.to_string(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        sample_rate_hz,
        demos,
    })
}

pub fn save_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    fs::write(path, serde_json::to_string(dataset)?)?;
    Ok(())
}

/// Reads one trajectory from a CSV file with columns `t,x0,x1,...`.
pub fn load_csv_path(path: &Path) -> Result<RawPath> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let record_name = path.display().to_string();
    let mut t = Vec::new();
    let mut x = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec?;
        let values = rec
            .iter()
            .map(|f| f.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| Error::Schema {
                record: format!("{record_name}:{}", row + 2),
                message: e.to_string(),
            })?;
        if values.len() < 2 {
            return Err(Error::Schema {
                record: format!("{record_name}:{}", row + 2),
                message: "expected columns t,x0,...".into(),
            });
        }
        t.push(values[0]);
        x.push(values[1..].to_vec());
    }
    let path = RawPath { t, x };
    path.validate().map_err(|e| Error::Schema {
        record: record_name,
        message: e.to_string(),
    })?;
    Ok(path)
}

pub fn save_csv_path(raw: &RawPath, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    let mut header = vec!["t".to_string()];
    header.extend((0..raw.dim()).map(|i| format!("x{i}")));
    writer.write_record(&header)?;
    for (t, x) in raw.t.iter().zip(&raw.x) {
        let mut row = vec![t.to_string()];
        row.extend(x.iter().map(f64::to_string));
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

fn load_csv_dir(dir: &Path) -> Result<Dataset> {
    let mut names: Vec<String> = fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            e.file_name()
                .to_str()
                .and_then(|n| n.strip_suffix(".human.csv"))
                .map(str::to_owned)
        })
        .collect();
    names.sort();
    let mut demos = Vec::with_capacity(names.len());
    for name in names {
        let human = load_csv_path(&dir.join(format!("{name}.human.csv")))?;
        let robot_file = dir.join(format!("{name}.robot.csv"));
        if !robot_file.exists() {
            return Err(Error::Schema {
                record: name,
                message: "missing matching .robot.csv".into(),
            });
        }
        let robot = load_csv_path(&robot_file)?;
        let mode = name.split_once("__").map(|(m, _)| m.to_string());
        demos.push(DemoRecord { mode, human, robot });
    }
    let sample_rate_hz = demos
        .first()
        .map(|d| median_rate(&d.human.t))
        .unwrap_or(0.0);
    Ok(Dataset {
        sample_rate_hz,
        demos,
    })
}

fn median_rate(t: &[f64]) -> f64 {
    let mut dts: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
    if dts.is_empty() {
        return 0.0;
    }
    dts.sort_by(f64::total_cmp);
    1.0 / dts[dts.len() / 2]
}

/// Smoothing and resampling settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    /// Time kernel for the smoothing path. `None` derives one from each
    /// path's duration with [`SeKernel::for_range`].
    pub kernel: Option<SeKernel>,
    pub out_len: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            kernel: None,
            out_len: DEFAULT_OUT_LEN,
        }
    }
}

/// Output of [`preprocess`].
#[derive(Clone, Debug, PartialEq)]
pub struct Preprocessed {
    pub trajectory: Trajectory,
    /// All input positions were identical; velocities are zero.
    pub degenerate: bool,
}

/// Smooths `raw` with a Gaussian random path mean anchored at every raw
/// point, resamples it at `out_len` uniform times and takes velocities from
/// the analytic derivative of the mean.
pub fn preprocess(raw: &RawPath, smooth: &SeKernel, out_len: usize) -> Result<Preprocessed> {
    raw.validate()?;
    if out_len < 2 {
        return Err(invalid("out_len must be at least 2"));
    }
    let d = raw.dim();
    let times = linspace(raw.t[0], raw.t[raw.len() - 1], out_len);
    let first = &raw.x[0];
    let degenerate = raw
        .x
        .iter()
        .all(|p| p.iter().zip(first).all(|(a, b)| (a - b).abs() <= 1e-12));
    if degenerate {
        log::warn!("preprocess: all {} input points coincide", raw.len());
        let positions = DMatrix::from_fn(out_len, d, |_, j| first[j]);
        let trajectory = Trajectory::new(times, positions, DMatrix::zeros(out_len, d))?;
        return Ok(Preprocessed {
            trajectory,
            degenerate,
        });
    }
    let anchors: Vec<Anchor> = raw
        .t
        .iter()
        .zip(&raw.x)
        .map(|(t, x)| Anchor::new(*t, x.clone()))
        .collect();
    let mean = GrpMean::fit(&anchors, smooth)?;
    let mut positions = DMatrix::zeros(out_len, d);
    let mut velocities = DMatrix::zeros(out_len, d);
    for (i, t) in times.iter().enumerate() {
        positions.row_mut(i).copy_from(&mean.value(*t).transpose());
        velocities.row_mut(i).copy_from(&mean.derivative(*t).transpose());
    }
    Ok(Preprocessed {
        trajectory: Trajectory::new(times, positions, velocities)?,
        degenerate,
    })
}

pub fn preprocess_with(raw: &RawPath, config: &PreprocessConfig) -> Result<Preprocessed> {
    let kernel = config
        .kernel
        .clone()
        .unwrap_or_else(|| SeKernel::for_range(raw.duration()));
    preprocess(raw, &kernel, config.out_len)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(v: [f64; 3], n: usize) -> RawPath {
        let t: Vec<f64> = (0..n).map(|i| i as f64 * 0.1).collect();
        let x = t.iter().map(|t| v.iter().map(|c| c * t).collect()).collect();
        RawPath { t, x }
    }

    #[test]
    fn straight_line_velocity() {
        let v = [0.3, -0.2, 0.1];
        let norm = (v.iter().map(|c| c * c).sum::<f64>()).sqrt();
        let out = preprocess(&line(v, 40), &SeKernel::for_range(3.9), 50).unwrap();
        assert!(!out.degenerate);
        let vel = out.trajectory.velocities();
        for i in 0..vel.nrows() {
            for j in 0..3 {
                assert!((vel[(i, j)] - v[j]).abs() < 1e-3 * norm);
            }
        }
    }

    #[test]
    fn repeated_point_is_degenerate() {
        let raw = RawPath {
            t: (0..10).map(|i| i as f64).collect(),
            x: vec![vec![0.2, 0.4, 0.6]; 10],
        };
        let out = preprocess(&raw, &SeKernel::for_range(9.0), 20).unwrap();
        assert!(out.degenerate);
        assert!(out.trajectory.velocities().iter().all(|v| *v == 0.0));
        assert!((out.trajectory.positions()[(7, 1)] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn noisy_sine_is_smoothed() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, Normal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let noise = Normal::new(0.0, 0.05).unwrap();
        let t: Vec<f64> = (0..60).map(|i| i as f64 * 0.1).collect();
        let truth = |t: f64| (t * 1.2).sin();
        let x: Vec<Vec<f64>> = t.iter().map(|t| vec![truth(*t) + noise.sample(&mut rng)]).collect();
        let raw_rms = (t
            .iter()
            .zip(&x)
            .map(|(t, x)| (x[0] - truth(*t)).powi(2))
            .sum::<f64>()
            / t.len() as f64)
            .sqrt();
        let kernel = SeKernel::new(1.0, 0.8, 0.05 * 0.05).unwrap();
        let out = preprocess(&RawPath::new(t, x), &kernel, 60).unwrap().trajectory;
        let smooth_rms = (out
            .times()
            .iter()
            .enumerate()
            .map(|(i, t)| (out.positions()[(i, 0)] - truth(*t)).powi(2))
            .sum::<f64>()
            / out.len() as f64)
            .sqrt();
        assert!(smooth_rms < raw_rms, "{smooth_rms} vs {raw_rms}");
    }

    #[test]
    fn rejects_non_monotone_timestamps() {
        let raw = RawPath {
            t: vec![0.0, 0.2, 0.1],
            x: vec![vec![0.0]; 3],
        };
        assert!(matches!(raw.validate(), Err(Error::Validation(_))));
    }

    #[test]
    fn empty_demo_list_rejected() {
        let ds = Dataset {
            sample_rate_hz: 10.0,
            demos: vec![],
        };
        assert!(ds.validate().is_err());
    }

    #[test]
    fn schema_error_names_record() {
        let text = r#"{"sample_rate_hz": 10.0, "demos": [
            {"human": {"t": [0, 1], "x": [[0], [1]]}, "robot": {"t": [0, 1], "x": [[0], [1]]}},
            {"human": {"t": [0, 1]}, "robot": {"t": [0, 1], "x": [[0], [1]]}}
        ]}"#;
        match parse_dataset_json(text) {
            Err(Error::Schema { record, .. }) => assert_eq!(record, "demos[1]"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn observed_prefix_length() {
        let traj = preprocess(&line([1.0, 0.0, 0.0], 10), &SeKernel::for_range(0.9), 50)
            .unwrap()
            .trajectory;
        assert_eq!(traj.observed(0.2).len(), 10);
        assert_eq!(traj.observed(1.0).len(), 50);
        assert_eq!(traj.observed(0.0).len(), 2);
    }
}
