//! Model artifact files.
//!
//! An artifact stores the raw training data, the configuration, the
//! cluster label of every training trajectory and the fitted reward. Flow
//! models are refitted from the labels on load, which is deterministic, and
//! a stored probe descriptor guards against silent drift.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::FlowModelBank;
use crate::pipeline::{PipelineConfig, TrainedModel};
use crate::reward::RewardModel;
use crate::trajectory::{Dataset, Trajectory};

pub const ARTIFACT_VERSION: &str = "flowcoop-model/1";

/// Largest tolerated difference between the stored and the recomputed
/// probe descriptor.
const PROBE_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BankSpec {
    pub labels: Vec<usize>,
    pub kernel: crate::gp::SeKernel,
    pub spatial_weight: f64,
    pub max_points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub version: String,
    pub seed: u64,
    pub config: PipelineConfig,
    pub train: Dataset,
    pub bank: BankSpec,
    pub reward: RewardModel,
    /// Descriptor of the first training human trajectory.
    pub probe: Vec<f64>,
}

impl ModelArtifact {
    pub fn from_model(model: &TrainedModel) -> Result<Self> {
        let probe = model.bank.describe(&model.demos[0].human)?.p;
        Ok(ModelArtifact {
            version: ARTIFACT_VERSION.to_string(),
            seed: model.seed,
            config: model.config.clone(),
            train: model.train_data.clone(),
            bank: BankSpec {
                labels: model.bank.labels.clone(),
                kernel: model.bank.kernel.clone(),
                spatial_weight: model.bank.spatial_weight,
                max_points: model.config.flow.max_points,
            },
            reward: model.reward.clone(),
            probe,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Artifact(format!("not valid JSON: {e}")))?;
        match value.get("version").and_then(|v| v.as_str()) {
            Some(ARTIFACT_VERSION) => {}
            Some(other) => {
                return Err(Error::Artifact(format!(
                    "unsupported artifact version {other:?}, expected {ARTIFACT_VERSION:?}"
                )))
            }
            None => return Err(Error::Artifact("missing artifact version".into())),
        }
        serde_json::from_value(value).map_err(|e| Error::Artifact(format!("malformed artifact: {e}")))
    }

    /// Rebuilds the trained model and checks it against the stored probe.
    pub fn restore(&self) -> Result<TrainedModel> {
        let wrap = |e: Error| Error::Artifact(e.to_string());
        self.train.validate().map_err(wrap)?;
        let demos = self.train.preprocess(&self.config.preprocess).map_err(wrap)?;
        let humans: Vec<Trajectory> = demos.iter().map(|d| d.human.clone()).collect();
        let bank = FlowModelBank::from_labels(
            &humans,
            self.bank.labels.clone(),
            self.bank.kernel.clone(),
            self.bank.spatial_weight,
            self.bank.max_points,
        )
        .map_err(wrap)?;
        let reward = RewardModel::new(
            self.reward.inducing.clone(),
            self.reward.alpha.clone(),
            self.reward.kernel.clone(),
            self.reward.lambda,
            self.reward.descriptor_dim,
        )
        .map_err(wrap)?;
        if reward.descriptor_dim != bank.k() {
            return Err(Error::Artifact(format!(
                "reward expects {} flows, bank has {}",
                reward.descriptor_dim,
                bank.k()
            )));
        }
        let probe = bank.describe(&demos[0].human).map_err(wrap)?;
        let drift = probe
            .p
            .iter()
            .zip(&self.probe)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if probe.p.len() != self.probe.len() || drift > PROBE_TOLERANCE {
            return Err(Error::Artifact(format!(
                "restored bank does not reproduce the stored probe descriptor (drift {drift:e})"
            )));
        }
        Ok(TrainedModel {
            bank,
            reward,
            demos,
            train_data: self.train.clone(),
            config: self.config.clone(),
            seed: self.seed,
        })
    }
}

pub fn save_model(model: &TrainedModel, path: &Path) -> Result<()> {
    fs::write(path, ModelArtifact::from_model(model)?.to_json()?)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<TrainedModel> {
    let text = fs::read_to_string(path)?;
    ModelArtifact::from_json(&text)?.restore()
}
