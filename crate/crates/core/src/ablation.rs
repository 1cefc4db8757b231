//! Ablation experiment orchestration: trains each architectural manner of a
//! suite under identical seeds and data, and tabulates test accuracy.

use serde::{Deserialize, Serialize};

use crate::composition::CompositionVariant;
use crate::error::TrainError;
use crate::integration::IntegrationOrder;
use crate::interaction::InteractionManner;
use crate::model::{DynamicFormer, ModelConfig};
use crate::scene::Clip;
use crate::train::{evaluate, train, TrainConfig};
use crate::Scalar;

type Result<T> = std::result::Result<T, TrainError>;

/// The three ablation suites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationSuite {
    /// Composition manners: baseline, spatial, sum, unembed, full.
    Composition,
    /// Interaction manners: none_ball, none_trans, erase, full.
    Interaction,
    /// Integration orders: linear, parallel, hierarchical.
    Integration,
}

impl AblationSuite {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "composition" => Some(Self::Composition),
            "interaction" => Some(Self::Interaction),
            "integration" => Some(Self::Integration),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Composition => "composition",
            Self::Interaction => "interaction",
            Self::Integration => "integration",
        }
    }

    pub fn manner_names(&self) -> Vec<&'static str> {
        match self {
            Self::Composition => CompositionVariant::ALL.iter().map(|v| v.name()).collect(),
            Self::Interaction => InteractionManner::ALL.iter().map(|v| v.name()).collect(),
            Self::Integration => IntegrationOrder::ALL.iter().map(|v| v.name()).collect(),
        }
    }

    pub const ALL: [AblationSuite; 3] = [Self::Composition, Self::Interaction, Self::Integration];
}

/// One table row: a manner and its accuracies on the benchmark.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationRow {
    pub suite: String,
    pub manner: String,
    pub group_accuracy: f64,
    pub individual_accuracy: Option<f64>,
}

/// Trains every manner of `suite` from the same seed and data.
pub fn run_ablation<F: Scalar>(
    suite: AblationSuite,
    base_config: &ModelConfig,
    train_config: &TrainConfig,
    train_clips: &[Clip],
    test_clips: &[Clip],
) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::new();
    for manner in suite.manner_names() {
        let mut config = base_config.clone();
        config.variants.apply_named(manner)?;
        let model: DynamicFormer<F> = DynamicFormer::new(config, train_config.seed)?;
        train(&model, train_clips, None, train_config, |_, _, _| Ok(()))?;
        let metrics = evaluate(&model, test_clips, train_config.individual_loss_weight)?;
        rows.push(AblationRow {
            suite: suite.name().to_string(),
            manner: manner.to_string(),
            group_accuracy: metrics.group_accuracy,
            individual_accuracy: metrics.individual_accuracy,
        });
    }
    Ok(rows)
}

/// Renders rows as CSV mirroring the ablation table structure.
pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut out = String::from("suite,manner,group_acc,indiv_acc\n");
    for row in rows {
        out.push_str(&format!(
            "{},{},{:.6},{}\n",
            row.suite,
            row.manner,
            row.group_accuracy,
            row.individual_accuracy.map_or_else(|| "-".to_string(), |a| format!("{a:.6}")),
        ));
    }
    out
}
