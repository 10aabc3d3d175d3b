//! End-to-end training: preprocessing, flow bank, reward and planner.

use serde::{Deserialize, Serialize};

use crate::arm::ArmModel;
use crate::error::{invalid, Result};
use crate::flow::{train_bank_with, FlowConfig, FlowModelBank};
use crate::planner::{PlanConfig, Planner};
use crate::reward::{extract_features, fit_reward_with, RewardConfig, RewardModel};
use crate::trajectory::{Dataset, InteractionDemo, PreprocessConfig, Trajectory};

/// Every tunable of the pipeline. Missing JSON fields take their defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub preprocess: PreprocessConfig,
    pub flow: FlowConfig,
    pub reward: RewardConfig,
    pub plan: PlanConfig,
    pub arm: ArmModel,
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// A trained bank and reward with the preprocessed demonstrations they
/// came from.
#[derive(Clone, Debug)]
pub struct TrainedModel {
    pub bank: FlowModelBank,
    pub reward: RewardModel,
    pub demos: Vec<InteractionDemo>,
    /// Raw training data the demonstrations were preprocessed from.
    pub train_data: Dataset,
    pub config: PipelineConfig,
    pub seed: u64,
}

/// Flow bank over the human trajectories of `demos`.
pub fn train_flows(demos: &[InteractionDemo], config: &FlowConfig, seed: u64) -> Result<FlowModelBank> {
    let humans: Vec<Trajectory> = demos.iter().map(|d| d.human.clone()).collect();
    train_bank_with(&humans, config, seed)
}

pub fn train(dataset: &Dataset, config: &PipelineConfig, seed: u64) -> Result<TrainedModel> {
    if dataset.demos.is_empty() {
        return Err(invalid("training needs at least one demonstration"));
    }
    let demos = dataset.preprocess(&config.preprocess)?;
    let bank = train_flows(&demos, &config.flow, seed)?;
    let reward = fit_reward_with(&extract_features(&demos, &bank)?, &config.reward, seed)?;
    Ok(TrainedModel {
        bank,
        reward,
        demos,
        train_data: dataset.clone(),
        config: config.clone(),
        seed,
    })
}

impl TrainedModel {
    pub fn planner(&self) -> Result<Planner> {
        Planner::new(
            self.config.arm.clone(),
            self.bank.clone(),
            self.reward.clone(),
            self.demos.clone(),
            self.config.plan.clone(),
        )
    }
}
