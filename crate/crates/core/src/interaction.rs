//! Dynamic-interaction graph: a joint human+object node set per frame, an
//! adaptive similarity adjacency, transformer refinement of the adjacency
//! sequence, and the GCN application.
//!
//! Raw similarity follows the dot-product form `Dropout(m_i)^T Norm(m_j)`:
//! dropout on the left operand (identity in evaluation mode), plain layer
//! normalization on the right. Rows are then softmax-normalized over valid
//! nodes so each node's edge weights sum to one.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::NumericError;
use crate::numeric::{
    maybe_dropout, zero_masked_rows, Ctx, EncoderLayer, NormMode, ResidualMode, Scalar, Tensor,
};

type Result<T> = std::result::Result<T, NumericError>;

/// Interaction manners from the ablation table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InteractionManner {
    /// Humans and objects, similarity adjacency, transformer refinement.
    Full,
    /// Object nodes removed: humans-only graph (also the mode for data
    /// without objects).
    NoneBall,
    /// Transformer refinement skipped.
    NoneTrans,
    /// Module bypassed; interaction tokens are zero.
    Erase,
}

impl InteractionManner {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "full" => Some(Self::Full),
            "none_ball" | "none-ball" => Some(Self::NoneBall),
            "none_trans" | "none-trans" => Some(Self::NoneTrans),
            "erase" => Some(Self::Erase),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Full => "full",
            Self::NoneBall => "none_ball",
            Self::NoneTrans => "none_trans",
            Self::Erase => "erase",
        }
    }

    pub const ALL: [InteractionManner; 4] =
        [Self::NoneBall, Self::NoneTrans, Self::Erase, Self::Full];
}

/// Joint node features per frame: persons first, then objects, stable order.
pub struct NodeSet<F: Scalar> {
    /// `[T, C, D]` with `C = persons + objects`.
    pub nodes: Tensor<F>,
    pub node_mask: Vec<bool>,
    pub persons: usize,
    pub objects: usize,
}

/// Builds the node set from person features `[N, T, D]` and object features
/// `[E, T, D]`.
pub fn build_nodes<F: Scalar>(
    persons: &Tensor<F>,
    objects: Option<&Tensor<F>>,
    person_mask: &[bool],
    object_mask: &[bool],
) -> Result<NodeSet<F>> {
    let p_frames = persons.permute(&[1, 0, 2])?;
    let n = persons.shape()[0];
    let (nodes, node_mask, objects_count) = match objects {
        Some(o) if o.shape()[0] > 0 => {
            let o_frames = o.permute(&[1, 0, 2])?;
            let joint = Tensor::concat(&[p_frames, o_frames], 1)?;
            let mut mask = person_mask.to_vec();
            mask.extend_from_slice(object_mask);
            (joint, mask, o.shape()[0])
        }
        _ => (p_frames, person_mask.to_vec(), 0),
    };
    Ok(NodeSet { nodes, node_mask, persons: n, objects: objects_count })
}

/// Plain-data snapshot of per-frame adjacency weights, used for diagnostics
/// and importance scoring.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencySeries {
    pub frames: usize,
    pub nodes: usize,
    data: Vec<f64>,
}

impl AdjacencySeries {
    pub fn from_tensor<F: Scalar>(t: &Tensor<F>) -> Self {
        let shape = t.shape();
        assert_eq!(shape.len(), 3, "adjacency series is [T, C, C]");
        AdjacencySeries {
            frames: shape[0],
            nodes: shape[1],
            data: t.to_vec().iter().map(|v| v.as_f64()).collect(),
        }
    }

    pub fn zeros(frames: usize, nodes: usize) -> Self {
        AdjacencySeries { frames, nodes, data: vec![0.0; frames * nodes * nodes] }
    }

    pub fn get(&self, t: usize, i: usize, j: usize) -> f64 {
        self.data[(t * self.nodes + i) * self.nodes + j]
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.data[t * self.nodes * self.nodes..(t + 1) * self.nodes * self.nodes]
    }
}

/// Raw (pre-softmax) similarity scores `[T, C, C]`:
/// `a_t(i,j) = Dropout(m_i)^T Norm(m_j)`.
pub fn similarity_scores<F: Scalar>(
    node_set: &NodeSet<F>,
    ctx: &mut Ctx,
    dropout: f64,
) -> Result<Tensor<F>> {
    let shape = node_set.nodes.shape();
    let (t, c, d) = (shape[0], shape[1], shape[2]);
    let eps = F::from_f64(1e-5);
    let mut frames = Vec::with_capacity(t);
    for frame in 0..t {
        let m = node_set.nodes.narrow(0, frame, 1)?.reshape(&[c, d])?;
        let left = maybe_dropout(m.clone(), dropout, ctx)?;
        let right = m.layer_norm_last(eps)?;
        let raw = left.matmul(&right.permute(&[1, 0])?)?;
        frames.push(raw.reshape(&[1, c, c])?);
    }
    Tensor::concat(&frames, 0)
}

/// Row-wise masked softmax plus zeroing of masked query rows, so every valid
/// row sums to one and masked rows/columns are exactly zero.
pub fn normalize_adjacency<F: Scalar>(
    raw: &Tensor<F>,
    node_mask: &[bool],
) -> Result<Tensor<F>> {
    let shape = raw.shape();
    let (t, c) = (shape[0], shape[1]);
    let mask = if node_mask.iter().all(|&m| m) { None } else { Some(node_mask) };
    let soft = raw.softmax_last(mask)?;
    if mask.is_none() {
        return Ok(soft);
    }
    let mut row_mask = Vec::with_capacity(t * c);
    for _ in 0..t {
        row_mask.extend_from_slice(node_mask);
    }
    let flat = soft.reshape(&[t * c, c])?;
    zero_masked_rows(&flat, &row_mask)?.reshape(&[t, c, c])
}

/// Raw similarity followed by row normalization.
pub fn similarity_adjacency<F: Scalar>(
    node_set: &NodeSet<F>,
    ctx: &mut Ctx,
    dropout: f64,
) -> Result<Tensor<F>> {
    let raw = similarity_scores(node_set, ctx, dropout)?;
    normalize_adjacency(&raw, &node_set.node_mask)
}

/// Refines the adjacency sequence: each frame's matrix is flattened to one
/// token, the T-token sequence passes through one standard encoder layer,
/// and rows are softmax-normalized again.
pub fn refine_adjacency<F: Scalar>(
    adjacency: &Tensor<F>,
    encoder: &EncoderLayer<F>,
    node_mask: &[bool],
    ctx: &mut Ctx,
) -> Result<Tensor<F>> {
    let shape = adjacency.shape();
    let (t, c) = (shape[0], shape[1]);
    let flat = adjacency.reshape(&[t, c * c])?;
    let encoded = encoder.forward(&flat, None, ctx)?;
    let back = encoded.reshape(&[t, c, c])?;
    normalize_adjacency(&back, node_mask)
}

/// Per-frame graph convolution `Y_t = A_t M_t`.
pub fn gcn_apply<F: Scalar>(adjacency: &Tensor<F>, nodes: &Tensor<F>) -> Result<Tensor<F>> {
    let a_shape = adjacency.shape();
    let m_shape = nodes.shape();
    if a_shape.len() != 3 || m_shape.len() != 3 || a_shape[0] != m_shape[0] || a_shape[2] != m_shape[1]
    {
        return Err(NumericError::ShapeMismatch {
            op: "gcn_apply",
            details: format!("adjacency {a_shape:?} vs nodes {m_shape:?}"),
        });
    }
    let (t, c, d) = (m_shape[0], m_shape[1], m_shape[2]);
    let mut frames = Vec::with_capacity(t);
    for frame in 0..t {
        let a = adjacency.narrow(0, frame, 1)?.reshape(&[c, c])?;
        let m = nodes.narrow(0, frame, 1)?.reshape(&[c, d])?;
        frames.push(a.matmul(&m)?.reshape(&[1, c, d])?);
    }
    Tensor::concat(&frames, 0)
}

/// Per-person importance: the column sum of the adjacency over all frames
/// and valid source nodes. The argmax marks the key person.
pub fn importance_scores(
    adjacency: &AdjacencySeries,
    persons: usize,
    node_mask: &[bool],
) -> Vec<f64> {
    let mut scores = vec![0.0; persons];
    for t in 0..adjacency.frames {
        for i in 0..adjacency.nodes {
            if !node_mask.get(i).copied().unwrap_or(false) {
                continue;
            }
            for (n, score) in scores.iter_mut().enumerate() {
                if node_mask.get(n).copied().unwrap_or(false) {
                    *score += adjacency.get(t, i, n);
                }
            }
        }
    }
    scores
}

/// Everything the interaction module produces in one forward pass.
pub struct InteractionOutput<F: Scalar> {
    /// GCN output `[T, C, D]`.
    pub gcn: Tensor<F>,
    /// Clip-level interaction tokens `[N, D]`: temporal mean of human rows.
    pub tokens: Tensor<F>,
    /// Final (refined when applicable) adjacency snapshot.
    pub adjacency: AdjacencySeries,
    /// Raw similarity snapshot before any normalization.
    pub raw_similarity: AdjacencySeries,
    pub node_mask: Vec<bool>,
    pub persons: usize,
}

/// The interaction module's parameters and manner dispatch.
pub struct InteractionGraph<F: Scalar> {
    pub manner: InteractionManner,
    /// Encoder over flattened per-frame adjacency tokens; absent for the
    /// manners that skip refinement.
    pub refine_encoder: Option<EncoderLayer<F>>,
    pub dropout: f64,
    node_count: usize,
}

/// Hyperparameters needed to build the interaction graph.
pub struct InteractionSettings {
    pub persons: usize,
    pub objects: usize,
    pub ffn_hidden: usize,
    pub dropout: f64,
    pub residual: ResidualMode,
    pub norm: NormMode,
}

impl<F: Scalar> InteractionGraph<F> {
    pub fn new(
        settings: &InteractionSettings,
        manner: InteractionManner,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let node_count = match manner {
            InteractionManner::NoneBall => settings.persons,
            _ => settings.persons + settings.objects,
        };
        let refine_encoder = match manner {
            InteractionManner::Full | InteractionManner::NoneBall => Some(EncoderLayer::new(
                node_count * node_count,
                1, // token size is rarely divisible by multi-head counts
                settings.ffn_hidden,
                settings.dropout,
                settings.residual,
                settings.norm,
                rng,
            )),
            InteractionManner::NoneTrans | InteractionManner::Erase => None,
        };
        InteractionGraph { manner, refine_encoder, dropout: settings.dropout, node_count }
    }

    /// Runs the configured manner over person features `[N, T, D]` and
    /// object features `[E, T, D]`.
    pub fn forward(
        &self,
        persons: &Tensor<F>,
        objects: Option<&Tensor<F>>,
        person_mask: &[bool],
        object_mask: &[bool],
        ctx: &mut Ctx,
    ) -> Result<InteractionOutput<F>> {
        let p_shape = persons.shape();
        let (n, t, d) = (p_shape[0], p_shape[1], p_shape[2]);
        if self.manner == InteractionManner::Erase {
            return Ok(InteractionOutput {
                gcn: Tensor::zeros(&[t, n, d]),
                tokens: Tensor::zeros(&[n, d]),
                adjacency: AdjacencySeries::zeros(t, n),
                raw_similarity: AdjacencySeries::zeros(t, n),
                node_mask: person_mask.to_vec(),
                persons: n,
            });
        }
        let node_set = match self.manner {
            InteractionManner::NoneBall => build_nodes(persons, None, person_mask, &[])?,
            _ => build_nodes(persons, objects, person_mask, object_mask)?,
        };
        debug_assert_eq!(node_set.node_mask.len(), self.node_count, "node count drift");
        let raw = similarity_scores(&node_set, ctx, self.dropout)?;
        let normalized = normalize_adjacency(&raw, &node_set.node_mask)?;
        let refined = match &self.refine_encoder {
            Some(encoder) => refine_adjacency(&normalized, encoder, &node_set.node_mask, ctx)?,
            None => normalized,
        };
        let gcn = gcn_apply(&refined, &node_set.nodes)?;
        let humans = gcn.narrow(1, 0, n)?;
        let tokens = zero_masked_rows(&humans.mean_axis(0)?, person_mask)?;
        Ok(InteractionOutput {
            adjacency: AdjacencySeries::from_tensor(&refined),
            raw_similarity: AdjacencySeries::from_tensor(&raw),
            gcn,
            tokens,
            node_mask: node_set.node_mask,
            persons: n,
        })
    }

    pub fn collect_params(&self, out: &mut Vec<(String, Tensor<F>)>) {
        if let Some(encoder) = &self.refine_encoder {
            encoder.collect_params("interaction.refine", out);
        }
    }

    pub fn param_count(&self) -> usize {
        self.refine_encoder.as_ref().map_or(0, EncoderLayer::param_count)
    }
}
