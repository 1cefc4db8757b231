//! DynamicFormer: keypoint-only group activity recognition built from a
//! dynamic-composition encoder, a human-object interaction graph, and a
//! multi-level integration transformer, together with a deterministic
//! synthetic-scene harness for verifying its numerical properties on a CPU.
//!
//! The crate is organized bottom-up:
//!
//! - [`numeric`]: dense tensors with reverse-mode differentiation, the
//!   shared attention/encoder primitives, and a finite-difference oracle.
//! - [`scene`]: clip records, label vocabularies, JSON ingestion, padding,
//!   and keypoint smoothing.
//! - [`features`]: raw geometric channels and the unification layers that
//!   produce the object/keypoint/person/group streams.
//! - [`composition`]: temporal and spatial encoders in a circle plus the
//!   pairwise relation matrix.
//! - [`interaction`]: the similarity-adjacency graph over humans and
//!   objects, its transformer refinement, and the GCN.
//! - [`integration`]: the four-stage multi-level integration transformer
//!   and classification heads.
//! - [`model`]: configuration and the assembled network.
//! - [`train`]: loss, Adam, metrics, training, and checkpoints.
//! - [`ablation`]: manner-by-manner comparison runs.
//! - [`synth`]: the deterministic scene generator and benchmark suites.

pub mod ablation;
pub mod composition;
pub mod error;
pub mod features;
pub mod integration;
pub mod interaction;
pub mod model;
pub mod numeric;
pub mod scene;
pub mod synth;
pub mod train;

pub use error::{NumericError, SceneError, TrainError};
pub use model::{DynamicFormer, ModelConfig, VariantFlags};
pub use numeric::{Ctx, Scalar, Tensor};
pub use scene::{Clip, LabelSpace};
pub use train::{evaluate, train, Checkpoint, Metrics, TrainConfig};
