//! The assembled model: feature extraction, composition encoding,
//! interaction graph, multi-level integration, and classification heads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::composition::{
    build_relation, CompositionSettings, CompositionStack, CompositionVariant,
    EmbeddingInjection, RelationMatrix,
};
use crate::error::TrainError;
use crate::features::{FeatureExtractor, FeatureSet};
use crate::integration::{
    ClassifierHeads, IntegrationOrder, IntegrationSettings, IntegrationStack,
};
use crate::interaction::{
    importance_scores, AdjacencySeries, InteractionGraph, InteractionManner, InteractionSettings,
};
use crate::numeric::{Ctx, NormMode, ResidualMode, Scalar, Tensor};
use crate::scene::{assign_subgroups, pad_and_mask, Clip, ClipLimits, LabelSpace};

type Result<T> = std::result::Result<T, TrainError>;

/// Architecture ablation switches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariantFlags {
    pub composition: CompositionVariant,
    pub interaction: InteractionManner,
    pub order: IntegrationOrder,
}

impl Default for VariantFlags {
    fn default() -> Self {
        VariantFlags {
            composition: CompositionVariant::Full,
            interaction: InteractionManner::Full,
            order: IntegrationOrder::Hierarchical,
        }
    }
}

impl VariantFlags {
    /// Routes a single variant name to the axis it belongs to.
    pub fn apply_named(&mut self, name: &str) -> std::result::Result<(), TrainError> {
        if let Some(v) = CompositionVariant::parse(name) {
            self.composition = v;
        } else if let Some(v) = InteractionManner::parse(name) {
            self.interaction = v;
        } else if let Some(v) = IntegrationOrder::parse(name) {
            self.order = v;
        } else {
            return Err(TrainError::UnknownVariant(name.to_string()));
        }
        Ok(())
    }
}

/// Every architecture hyperparameter plus the ablation switches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Unified feature dimension D.
    pub dim: usize,
    /// Frames per clip T.
    pub frames: usize,
    /// Person slots N.
    pub max_persons: usize,
    /// Joints per person K.
    pub keypoints: usize,
    /// Object slots E.
    pub max_objects: usize,
    /// Subgroups M.
    pub subgroups: usize,
    /// Attention heads (must divide `dim`).
    pub heads: usize,
    /// Circle iterations L (temporal+spatial encoder pairs).
    pub encoder_cycles: usize,
    /// Hidden width of every encoder feed-forward block.
    pub ffn_hidden: usize,
    pub dropout: f64,
    /// Divisor for pixel-valued input channels.
    pub feature_scale: f64,
    /// Usual transformer residual on the layer input instead of the
    /// projected-value residual written in the update equations.
    pub residual_on_input: bool,
    pub norm_mode: NormMode,
    pub embedding_injection: EmbeddingInjection,
    pub variants: VariantFlags,
    pub labels: LabelSpace,
}

impl ModelConfig {
    /// Volleyball-style configuration with the published hyperparameters:
    /// D=256, T=10, N=12, K=17, E=1, L=3, FFN 1024, dropout 0.3.
    pub fn volleyball() -> Self {
        ModelConfig {
            dim: 256,
            frames: 10,
            max_persons: 12,
            keypoints: 17,
            max_objects: 1,
            subgroups: 2,
            heads: 8,
            encoder_cycles: 3,
            ffn_hidden: 1024,
            dropout: 0.3,
            feature_scale: 256.0,
            residual_on_input: false,
            norm_mode: NormMode::Post,
            embedding_injection: EmbeddingInjection::EveryCycle,
            variants: VariantFlags::default(),
            labels: LabelSpace::volleyball(),
        }
    }

    /// Collective-style configuration: N=13, no objects, 5 group classes.
    pub fn collective() -> Self {
        ModelConfig {
            max_persons: 13,
            max_objects: 0,
            labels: LabelSpace::collective(),
            variants: VariantFlags {
                interaction: InteractionManner::NoneBall,
                ..VariantFlags::default()
            },
            ..Self::volleyball()
        }
    }

    /// Desk-scale configuration for the synthetic benchmark: D=64.
    pub fn micro_d64(labels: LabelSpace) -> Self {
        ModelConfig {
            dim: 64,
            frames: 10,
            max_persons: 6,
            keypoints: 17,
            max_objects: 1,
            subgroups: 2,
            heads: 8,
            encoder_cycles: 3,
            ffn_hidden: 128,
            dropout: 0.1,
            feature_scale: 256.0,
            residual_on_input: false,
            norm_mode: NormMode::Post,
            embedding_injection: EmbeddingInjection::EveryCycle,
            variants: VariantFlags::default(),
            labels,
        }
    }

    /// Micro configuration for gradient verification: N=3, T=3, K=4, E=1, D=8.
    pub fn tiny(labels: LabelSpace) -> Self {
        ModelConfig {
            dim: 8,
            frames: 3,
            max_persons: 3,
            keypoints: 4,
            max_objects: 1,
            subgroups: 2,
            heads: 2,
            encoder_cycles: 3,
            ffn_hidden: 16,
            dropout: 0.0,
            feature_scale: 256.0,
            residual_on_input: false,
            norm_mode: NormMode::Post,
            embedding_injection: EmbeddingInjection::EveryCycle,
            variants: VariantFlags::default(),
            labels,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.heads == 0 || self.dim % self.heads != 0 {
            return Err(TrainError::CheckpointMismatch(format!(
                "dim {} must be a positive multiple of heads {}",
                self.dim, self.heads
            )));
        }
        if self.frames < 2 || self.max_persons == 0 || self.encoder_cycles == 0 {
            return Err(TrainError::CheckpointMismatch(
                "frames >= 2, persons >= 1, cycles >= 1 required".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(TrainError::CheckpointMismatch(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        Ok(())
    }

    pub fn limits(&self) -> ClipLimits {
        ClipLimits {
            frames: self.frames,
            keypoints: self.keypoints,
            max_persons: self.max_persons,
            max_objects: self.max_objects,
        }
    }

    fn residual(&self) -> ResidualMode {
        if self.residual_on_input {
            ResidualMode::InputConvention
        } else {
            ResidualMode::ValueLiteral
        }
    }

    fn composition_settings(&self) -> CompositionSettings {
        CompositionSettings {
            dim: self.dim,
            frames: self.frames,
            persons: self.max_persons,
            heads: self.heads,
            cycles: self.encoder_cycles,
            ffn_hidden: self.ffn_hidden,
            dropout: self.dropout,
            residual: self.residual(),
            norm: self.norm_mode,
        }
    }

    fn interaction_settings(&self) -> InteractionSettings {
        InteractionSettings {
            persons: self.max_persons,
            objects: self.max_objects,
            ffn_hidden: self.ffn_hidden,
            dropout: self.dropout,
            residual: self.residual(),
            norm: self.norm_mode,
        }
    }

    fn integration_settings(&self) -> IntegrationSettings {
        IntegrationSettings {
            dim: self.dim,
            frames: self.frames,
            heads: self.heads,
            ffn_hidden: self.ffn_hidden,
            dropout: self.dropout,
            residual: self.residual(),
            norm: self.norm_mode,
        }
    }
}

/// Non-differentiable artifacts of one forward pass, used by inspection
/// tooling.
pub struct Diagnostics {
    /// Final adjacency series (refined when the manner refines).
    pub adjacency: AdjacencySeries,
    /// Raw similarity scores before normalization.
    pub raw_similarity: AdjacencySeries,
    pub node_mask: Vec<bool>,
    /// Per-person adjacency column sums; argmax marks the key person.
    pub importance: Vec<f64>,
    /// `N x N` Euclidean norms of the relation cells.
    pub relation_norms: Vec<f64>,
}

/// One forward pass's outputs.
pub struct ModelOutput<F: Scalar> {
    /// `[group classes]`
    pub group_logits: Tensor<F>,
    /// `[N, individual classes]`, absent when the vocabulary is empty.
    pub individual_logits: Option<Tensor<F>>,
    pub person_mask: Vec<bool>,
    pub diagnostics: Diagnostics,
}

/// The full DynamicFormer model.
pub struct DynamicFormer<F: Scalar> {
    pub config: ModelConfig,
    pub extractor: FeatureExtractor<F>,
    pub composition: CompositionStack<F>,
    pub interaction: InteractionGraph<F>,
    pub integration: IntegrationStack<F>,
    pub heads: ClassifierHeads<F>,
}

impl<F: Scalar> DynamicFormer<F> {
    /// Builds the model with Glorot-initialized weights from one seed.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let extractor =
            FeatureExtractor::new(config.dim, config.max_objects, config.feature_scale, &mut rng);
        let composition = CompositionStack::new(
            &config.composition_settings(),
            config.variants.composition,
            config.embedding_injection,
            &mut rng,
        );
        let interaction =
            InteractionGraph::new(&config.interaction_settings(), config.variants.interaction, &mut rng);
        let integration =
            IntegrationStack::new(&config.integration_settings(), config.variants.order, &mut rng);
        let heads = ClassifierHeads::new(config.dim, &config.labels, &mut rng);
        Ok(DynamicFormer { config, extractor, composition, interaction, integration, heads })
    }

    /// Extracts features for a clip, padding it to the configured slots.
    pub fn featurize(&self, clip: &Clip) -> Result<FeatureSet<F>> {
        let limits = self.config.limits();
        if clip.persons.len() > limits.max_persons {
            return Err(TrainError::Scene(crate::error::SceneError::CapacityExceeded {
                kind: "persons",
                got: clip.persons.len(),
                capacity: limits.max_persons,
            }));
        }
        let padded = pad_and_mask(clip, &limits);
        let assignment = assign_subgroups(&padded, self.config.subgroups)?;
        Ok(self.extractor.extract(&padded, &assignment)?)
    }

    /// Full forward pass over one clip.
    pub fn forward(&self, clip: &Clip, ctx: &mut Ctx) -> Result<ModelOutput<F>> {
        let features = self.featurize(clip)?;
        let composed =
            self.composition.forward(&features.persons, &features.person_mask, ctx)?;
        let relation = build_relation(&composed)?;
        let objects = if self.config.max_objects > 0 { Some(&features.objects) } else { None };
        let inter = self.interaction.forward(
            &features.persons,
            objects,
            &features.person_mask,
            &features.object_mask,
            ctx,
        )?;
        let tokens = self.integration.project_levels(&features, &relation, &inter.tokens)?;
        let integrated = self.integration.integrate(&tokens, ctx)?;
        let (group_logits, individual_logits) =
            self.heads.classify(&integrated.scene, &integrated.persons)?;
        let importance = importance_scores(&inter.adjacency, inter.persons, &inter.node_mask);
        let relation_norms = relation_cell_norms(&relation);
        Ok(ModelOutput {
            group_logits,
            individual_logits,
            person_mask: features.person_mask.clone(),
            diagnostics: Diagnostics {
                adjacency: inter.adjacency,
                raw_similarity: inter.raw_similarity,
                node_mask: inter.node_mask,
                importance,
                relation_norms,
            },
        })
    }

    /// Named parameters in a stable order.
    pub fn params(&self) -> Vec<(String, Tensor<F>)> {
        let mut out = Vec::new();
        self.extractor.collect_params(&mut out);
        self.composition.collect_params(&mut out);
        self.interaction.collect_params(&mut out);
        self.integration.collect_params(&mut out);
        self.heads.collect_params(&mut out);
        out
    }

    pub fn param_count(&self) -> usize {
        self.extractor.param_count()
            + self.composition.param_count()
            + self.interaction.param_count()
            + self.integration.param_count()
            + self.heads.param_count()
    }

    pub fn zero_grads(&self) {
        for (_, p) in self.params() {
            p.zero_grad();
        }
    }
}

fn relation_cell_norms<F: Scalar>(relation: &RelationMatrix<F>) -> Vec<f64> {
    let n = relation.persons;
    let width = 2 * relation.dim;
    let data = relation.tokens.to_vec();
    (0..n * n)
        .map(|cell| {
            data[cell * width..(cell + 1) * width]
                .iter()
                .map(|v| {
                    let x = v.as_f64();
                    x * x
                })
                .sum::<f64>()
                .sqrt()
        })
        .collect()
}
