//! Dynamic-composition encoding: a temporal encoder and a spatial encoder
//! connected in a circle, producing relation-and-distribution-aware person
//! features and the pairwise relation matrix.
//!
//! The temporal encoder treats persons as the batch axis and attends over
//! frames; the spatial encoder treats frames as the batch axis and attends
//! over persons. Learned time/position embedding tables are re-injected at
//! the start of every cycle iteration by default.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::NumericError;
use crate::numeric::{
    glorot_uniform, zero_masked_rows, Ctx, EncoderLayer, LinearLayer, NormMode, ResidualMode,
    Scalar, Tensor,
};

type Result<T> = std::result::Result<T, NumericError>;

/// Learned per-frame and per-person embedding tables.
pub struct Embeddings<F: Scalar> {
    /// `[T, D]`
    pub time: Tensor<F>,
    /// `[N, D]`
    pub position: Tensor<F>,
}

impl<F: Scalar> Embeddings<F> {
    pub fn new(frames: usize, persons: usize, dim: usize, rng: &mut ChaCha8Rng) -> Self {
        Embeddings {
            time: Tensor::parameter(glorot_uniform(frames, dim, rng), &[frames, dim])
                .expect("init shape"),
            position: Tensor::parameter(glorot_uniform(persons, dim, rng), &[persons, dim])
                .expect("init shape"),
        }
    }

    pub fn zeroed(&self) {
        self.time.set_data(&vec![F::zero(); self.time.numel()]);
        self.position.set_data(&vec![F::zero(); self.position.numel()]);
    }
}

/// Composition manners from the ablation table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompositionVariant {
    /// A single fully connected layer after time and position embedding.
    Baseline,
    /// Spatial encoders only.
    SpatialOnly,
    /// Independent temporal and spatial branches added together.
    Sum,
    /// The full circle without the embedding tables.
    Unembed,
    /// The full circle.
    Full,
}

impl CompositionVariant {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "baseline" => Some(Self::Baseline),
            "spatial" | "spatial_only" => Some(Self::SpatialOnly),
            "sum" => Some(Self::Sum),
            "unembed" | "un-embed" => Some(Self::Unembed),
            "full" => Some(Self::Full),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Baseline => "baseline",
            Self::SpatialOnly => "spatial",
            Self::Sum => "sum",
            Self::Unembed => "unembed",
            Self::Full => "full",
        }
    }

    pub const ALL: [CompositionVariant; 5] =
        [Self::Baseline, Self::SpatialOnly, Self::Sum, Self::Unembed, Self::Full];
}

/// When the embedding tables are added during the circle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingInjection {
    /// At the start of every cycle iteration (default).
    EveryCycle,
    /// Only before the first iteration.
    FirstCycle,
}

/// The composition encoder stack. Only the layers a variant actually uses
/// are allocated, so parameter counts reflect the architecture.
pub struct CompositionStack<F: Scalar> {
    pub embeddings: Embeddings<F>,
    pub temporal_layers: Vec<EncoderLayer<F>>,
    pub spatial_layers: Vec<EncoderLayer<F>>,
    pub baseline_fc: Option<LinearLayer<F>>,
    pub variant: CompositionVariant,
    pub injection: EmbeddingInjection,
    pub cycles: usize,
}

/// Hyperparameters needed to build one stack.
pub struct CompositionSettings {
    pub dim: usize,
    pub frames: usize,
    pub persons: usize,
    pub heads: usize,
    pub cycles: usize,
    pub ffn_hidden: usize,
    pub dropout: f64,
    pub residual: ResidualMode,
    pub norm: NormMode,
}

impl<F: Scalar> CompositionStack<F> {
    pub fn new(
        settings: &CompositionSettings,
        variant: CompositionVariant,
        injection: EmbeddingInjection,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let embeddings = Embeddings::new(settings.frames, settings.persons, settings.dim, rng);
        let make_layers = |count: usize, rng: &mut ChaCha8Rng| -> Vec<EncoderLayer<F>> {
            (0..count)
                .map(|_| {
                    EncoderLayer::new(
                        settings.dim,
                        settings.heads,
                        settings.ffn_hidden,
                        settings.dropout,
                        settings.residual,
                        settings.norm,
                        rng,
                    )
                })
                .collect()
        };
        let (temporal_layers, spatial_layers, baseline_fc) = match variant {
            CompositionVariant::Baseline => {
                (Vec::new(), Vec::new(), Some(LinearLayer::new(settings.dim, settings.dim, rng)))
            }
            CompositionVariant::SpatialOnly => {
                (Vec::new(), make_layers(settings.cycles, rng), None)
            }
            _ => (make_layers(settings.cycles, rng), make_layers(settings.cycles, rng), None),
        };
        CompositionStack {
            embeddings,
            temporal_layers,
            spatial_layers,
            baseline_fc,
            variant,
            injection,
            cycles: settings.cycles,
        }
    }

    /// Dispatches on the configured variant. Input and output are `[N, T, D]`.
    pub fn forward(
        &self,
        persons: &Tensor<F>,
        person_mask: &[bool],
        ctx: &mut Ctx,
    ) -> Result<Tensor<F>> {
        match self.variant {
            CompositionVariant::Full => self.compose_cycle(persons, person_mask, true, ctx),
            CompositionVariant::Unembed => self.compose_cycle(persons, person_mask, false, ctx),
            CompositionVariant::Baseline => self.baseline(persons, person_mask),
            CompositionVariant::SpatialOnly => self.spatial_only(persons, person_mask, ctx),
            CompositionVariant::Sum => self.sum_branches(persons, person_mask, ctx),
        }
    }

    /// The circle: repeat temporal -> transpose -> spatial -> transpose.
    pub fn compose_cycle(
        &self,
        persons: &Tensor<F>,
        person_mask: &[bool],
        embed: bool,
        ctx: &mut Ctx,
    ) -> Result<Tensor<F>> {
        let mut v = persons.clone();
        for i in 0..self.cycles {
            let inject = embed
                && (self.injection == EmbeddingInjection::EveryCycle || i == 0);
            v = temporal_encode(
                &v,
                inject.then_some(&self.embeddings.time),
                &self.temporal_layers[i],
                person_mask,
                ctx,
            )?;
            let vt = v.permute(&[1, 0, 2])?;
            let vt = spatial_encode(
                &vt,
                inject.then_some(&self.embeddings.position),
                &self.spatial_layers[i],
                person_mask,
                ctx,
            )?;
            v = vt.permute(&[1, 0, 2])?;
        }
        Ok(v)
    }

    fn baseline(&self, persons: &Tensor<F>, person_mask: &[bool]) -> Result<Tensor<F>> {
        let with_time = persons.add_broadcast(&self.embeddings.time)?;
        let with_pos = with_time
            .permute(&[1, 0, 2])?
            .add_broadcast(&self.embeddings.position)?
            .permute(&[1, 0, 2])?;
        let fc = self.baseline_fc.as_ref().expect("baseline variant allocates its FC layer");
        zero_masked_rows(&fc.forward(&with_pos)?, person_mask)
    }

    fn spatial_only(
        &self,
        persons: &Tensor<F>,
        person_mask: &[bool],
        ctx: &mut Ctx,
    ) -> Result<Tensor<F>> {
        let mut vt = persons.permute(&[1, 0, 2])?;
        for (i, layer) in self.spatial_layers.iter().enumerate() {
            let inject = self.injection == EmbeddingInjection::EveryCycle || i == 0;
            vt = spatial_encode(
                &vt,
                inject.then_some(&self.embeddings.position),
                layer,
                person_mask,
                ctx,
            )?;
        }
        vt.permute(&[1, 0, 2])
    }

    fn sum_branches(
        &self,
        persons: &Tensor<F>,
        person_mask: &[bool],
        ctx: &mut Ctx,
    ) -> Result<Tensor<F>> {
        let mut temporal = persons.clone();
        for (i, layer) in self.temporal_layers.iter().enumerate() {
            let inject = self.injection == EmbeddingInjection::EveryCycle || i == 0;
            temporal = temporal_encode(
                &temporal,
                inject.then_some(&self.embeddings.time),
                layer,
                person_mask,
                ctx,
            )?;
        }
        let spatial = self.spatial_only(persons, person_mask, ctx)?;
        temporal.add(&spatial)
    }

    pub fn collect_params(&self, out: &mut Vec<(String, Tensor<F>)>) {
        out.push(("composition.time_embedding".into(), self.embeddings.time.clone()));
        out.push(("composition.position_embedding".into(), self.embeddings.position.clone()));
        for (i, layer) in self.temporal_layers.iter().enumerate() {
            layer.collect_params(&format!("composition.temporal.{i}"), out);
        }
        for (i, layer) in self.spatial_layers.iter().enumerate() {
            layer.collect_params(&format!("composition.spatial.{i}"), out);
        }
        if let Some(fc) = &self.baseline_fc {
            fc.collect_params("composition.baseline_fc", out);
        }
    }

    pub fn param_count(&self) -> usize {
        self.embeddings.time.numel()
            + self.embeddings.position.numel()
            + self.temporal_layers.iter().map(EncoderLayer::param_count).sum::<usize>()
            + self.spatial_layers.iter().map(EncoderLayer::param_count).sum::<usize>()
            + self.baseline_fc.as_ref().map_or(0, LinearLayer::param_count)
    }
}

/// Per-person attention over frames: `[N, T, D] -> [N, T, D]`. Persons are
/// the batch axis, so no cross-person mixing occurs. Padded person rows are
/// re-zeroed afterwards.
pub fn temporal_encode<F: Scalar>(
    persons: &Tensor<F>,
    time_embedding: Option<&Tensor<F>>,
    layer: &EncoderLayer<F>,
    person_mask: &[bool],
    ctx: &mut Ctx,
) -> Result<Tensor<F>> {
    let shape = persons.shape();
    if shape.len() != 3 {
        return Err(NumericError::ShapeMismatch {
            op: "temporal_encode",
            details: format!("expected [N,T,D], got {shape:?}"),
        });
    }
    let (n, t, d) = (shape[0], shape[1], shape[2]);
    let x = match time_embedding {
        Some(e) => persons.add_broadcast(e)?,
        None => persons.clone(),
    };
    let mut rows = Vec::with_capacity(n);
    for person in 0..n {
        let seq = x.narrow(0, person, 1)?.reshape(&[t, d])?;
        let encoded = layer.forward(&seq, None, ctx)?;
        rows.push(encoded.reshape(&[1, t, d])?);
    }
    zero_masked_rows(&Tensor::concat(&rows, 0)?, person_mask)
}

/// Per-frame attention over persons: `[T, N, D] -> [T, N, D]`. Frames are
/// the batch axis; masked persons are excluded from attention weights and
/// their rows are re-zeroed.
pub fn spatial_encode<F: Scalar>(
    frames: &Tensor<F>,
    position_embedding: Option<&Tensor<F>>,
    layer: &EncoderLayer<F>,
    person_mask: &[bool],
    ctx: &mut Ctx,
) -> Result<Tensor<F>> {
    let shape = frames.shape();
    if shape.len() != 3 {
        return Err(NumericError::ShapeMismatch {
            op: "spatial_encode",
            details: format!("expected [T,N,D], got {shape:?}"),
        });
    }
    let (t, n, d) = (shape[0], shape[1], shape[2]);
    let x = match position_embedding {
        Some(e) => frames.add_broadcast(e)?,
        None => frames.clone(),
    };
    let mask = if person_mask.iter().all(|&m| m) { None } else { Some(person_mask) };
    let mut out = Vec::with_capacity(t);
    for frame in 0..t {
        let seq = x.narrow(0, frame, 1)?.reshape(&[n, d])?;
        let encoded = layer.forward(&seq, mask, ctx)?;
        let encoded = zero_masked_rows(&encoded, person_mask)?;
        out.push(encoded.reshape(&[1, n, d])?);
    }
    Tensor::concat(&out, 0)
}

/// Pairwise composition representation: cell (i, j) concatenates the
/// temporally pooled features of persons i and j.
pub struct RelationMatrix<F: Scalar> {
    /// `[N, N, 2D]`
    pub tokens: Tensor<F>,
    pub persons: usize,
    pub dim: usize,
}

impl<F: Scalar> RelationMatrix<F> {
    /// Cell (i, j) as a flat vector of length 2D.
    pub fn cell(&self, i: usize, j: usize) -> Vec<F> {
        let width = 2 * self.dim;
        let flat = self.tokens.to_vec();
        let base = (i * self.persons + j) * width;
        flat[base..base + width].to_vec()
    }
}

/// Builds the relation matrix from composition features `[N, T, D]`,
/// pooling each person over time first. Padded persons occupy zero blocks.
pub fn build_relation<F: Scalar>(v: &Tensor<F>) -> Result<RelationMatrix<F>> {
    let shape = v.shape();
    if shape.len() != 3 {
        return Err(NumericError::ShapeMismatch {
            op: "build_relation",
            details: format!("expected [N,T,D], got {shape:?}"),
        });
    }
    let (n, d) = (shape[0], shape[2]);
    let pooled = v.mean_axis(1)?; // [N, D]
    let tokens = pairwise_concat(&pooled, n)?.reshape(&[n, n, 2 * d])?;
    Ok(RelationMatrix { tokens, persons: n, dim: d })
}

/// Per-frame relation matrices `[T, N, N, 2D]` for configurations that keep
/// the time axis instead of pooling it.
pub fn build_relation_frames<F: Scalar>(v: &Tensor<F>) -> Result<Tensor<F>> {
    let shape = v.shape();
    let (n, t, d) = (shape[0], shape[1], shape[2]);
    let frames_first = v.permute(&[1, 0, 2])?;
    let mut per_frame = Vec::with_capacity(t);
    for frame in 0..t {
        let snapshot = frames_first.narrow(0, frame, 1)?.reshape(&[n, d])?;
        per_frame.push(pairwise_concat(&snapshot, n)?.reshape(&[1, n, n, 2 * d])?);
    }
    Tensor::concat(&per_frame, 0)
}

fn pairwise_concat<F: Scalar>(pooled: &Tensor<F>, n: usize) -> Result<Tensor<F>> {
    let mut left_idx = Vec::with_capacity(n * n);
    let mut right_idx = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            left_idx.push(i);
            right_idx.push(j);
        }
    }
    let left = pooled.index_select0(&left_idx)?;
    let right = pooled.index_select0(&right_idx)?;
    Tensor::concat(&[left, right], 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn settings(dim: usize, frames: usize, persons: usize, cycles: usize) -> CompositionSettings {
        CompositionSettings {
            dim,
            frames,
            persons,
            heads: 2,
            cycles,
            ffn_hidden: dim * 2,
            dropout: 0.0,
            residual: ResidualMode::ValueLiteral,
            norm: NormMode::Post,
        }
    }

    fn stack(
        variant: CompositionVariant,
        dim: usize,
        frames: usize,
        persons: usize,
        cycles: usize,
    ) -> CompositionStack<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        CompositionStack::new(&settings(dim, frames, persons, cycles), variant, EmbeddingInjection::EveryCycle, &mut rng)
    }

    fn random_input(n: usize, t: usize, d: usize, seed: u64) -> Tensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_vec((0..n * t * d).map(|_| rng.gen_range(-1.0..1.0)).collect(), &[n, t, d])
            .unwrap()
    }

    #[test]
    fn temporal_identical_trajectories_identical_outputs() {
        let s = stack(CompositionVariant::Full, 4, 3, 2, 1);
        let row: Vec<f64> = (0..12).map(|i| (i as f64 * 0.3).cos()).collect();
        let mut data = row.clone();
        data.extend(&row);
        let p = Tensor::from_vec(data, &[2, 3, 4]).unwrap();
        let out = temporal_encode(
            &p,
            Some(&s.embeddings.time),
            &s.temporal_layers[0],
            &[true, true],
            &mut Ctx::eval(),
        )
        .unwrap()
        .to_vec();
        assert_eq!(out[..12], out[12..]);
    }

    #[test]
    fn temporal_no_cross_person_mixing() {
        let s = stack(CompositionVariant::Full, 4, 3, 3, 1);
        let a = random_input(3, 3, 4, 1);
        let mut changed = a.to_vec();
        for v in changed[24..36].iter_mut() {
            *v += 1.0;
        }
        let b = Tensor::from_vec(changed, &[3, 3, 4]).unwrap();
        let mask = [true, true, true];
        let run = |x: &Tensor<f64>| {
            temporal_encode(x, None, &s.temporal_layers[0], &mask, &mut Ctx::eval())
                .unwrap()
                .to_vec()
        };
        let (ya, yb) = (run(&a), run(&b));
        assert_eq!(ya[..24], yb[..24], "persons 0 and 1 unaffected by person 2");
        assert_ne!(ya[24..], yb[24..], "person 2 changed");
    }

    #[test]
    fn temporal_identity_projection_closed_form() {
        // Identity q/k/v/o, zero FFN, no norm: the encoder reduces to the
        // attention update, whose 2x2 closed form is hand-computed.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut layer = EncoderLayer::<f64>::new(
            2,
            1,
            4,
            0.0,
            ResidualMode::ValueLiteral,
            NormMode::None,
            &mut rng,
        );
        let eye = [1.0, 0.0, 0.0, 1.0];
        for lin in [
            &layer.attention.query,
            &layer.attention.key,
            &layer.attention.value,
            &layer.attention.output,
        ] {
            lin.weight.set_data(&eye);
            lin.bias.set_data(&[0.0, 0.0]);
        }
        layer.ffn_in.weight.set_data(&[0.0; 8]);
        layer.ffn_in.bias.set_data(&[0.0; 4]);
        layer.ffn_out.weight.set_data(&[0.0; 8]);
        layer.ffn_out.bias.set_data(&[0.0, 0.0]);
        layer.dropout = 0.0;
        let p = Tensor::from_vec(vec![1.0, 0.0, 0.0, 1.0], &[1, 2, 2]).unwrap();
        let out = temporal_encode(&p, None, &layer, &[true], &mut Ctx::eval()).unwrap().to_vec();
        let w = (1.0f64 / 2.0f64.sqrt()).exp();
        let prob = w / (w + 1.0);
        let expected = [1.0 + prob, 1.0 - prob, 1.0 - prob, 1.0 + prob];
        for (got, want) in out.iter().zip(expected) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn spatial_singleton_attends_to_self() {
        let s = stack(CompositionVariant::Full, 4, 2, 1, 1);
        let x = random_input(1, 2, 4, 3).permute(&[1, 0, 2]).unwrap();
        let y = spatial_encode(
            &x,
            Some(&s.embeddings.position),
            &s.spatial_layers[0],
            &[true],
            &mut Ctx::eval(),
        )
        .unwrap();
        assert_eq!(y.shape(), vec![2, 1, 4]);
    }

    #[test]
    fn spatial_joint_permutation_equivariance() {
        // Permuting persons together with the embedding rows permutes the
        // output identically.
        let d = 6;
        let (t, n) = (2, 4);
        let s = stack(CompositionVariant::Full, d, t, n, 1);
        let x = random_input(n, t, d, 4).permute(&[1, 0, 2]).unwrap();
        let mask = vec![true; n];
        let y = spatial_encode(&x, Some(&s.embeddings.position), &s.spatial_layers[0], &mask, &mut Ctx::eval())
            .unwrap()
            .to_vec();
        let perm = [2usize, 0, 3, 1];
        let permute_rows = |data: &[f64], rows: usize, inner: usize| -> Vec<f64> {
            let mut out = vec![0.0; data.len()];
            let frames = data.len() / (rows * inner);
            for f in 0..frames {
                for (dst, &src) in perm.iter().enumerate() {
                    let to = (f * rows + dst) * inner;
                    let from = (f * rows + src) * inner;
                    out[to..to + inner].copy_from_slice(&data[from..from + inner]);
                }
            }
            out
        };
        let xp = Tensor::from_vec(permute_rows(&x.to_vec(), n, d), &[t, n, d]).unwrap();
        let pos = s.embeddings.position.to_vec();
        let pos_p: Vec<f64> =
            perm.iter().flat_map(|&src| pos[src * d..(src + 1) * d].to_vec()).collect();
        s.embeddings.position.set_data(&pos_p);
        let yp = spatial_encode(&xp, Some(&s.embeddings.position), &s.spatial_layers[0], &mask, &mut Ctx::eval())
            .unwrap()
            .to_vec();
        let expected = permute_rows(&y, n, d);
        for (a, b) in yp.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn cycle_single_iteration_is_one_temporal_one_spatial_pass() {
        let s = stack(CompositionVariant::Full, 4, 3, 2, 1);
        let p = random_input(2, 3, 4, 9);
        let mask = [true, true];
        let direct = s.compose_cycle(&p, &mask, true, &mut Ctx::eval()).unwrap().to_vec();
        let step1 =
            temporal_encode(&p, Some(&s.embeddings.time), &s.temporal_layers[0], &mask, &mut Ctx::eval())
                .unwrap();
        let step2 = spatial_encode(
            &step1.permute(&[1, 0, 2]).unwrap(),
            Some(&s.embeddings.position),
            &s.spatial_layers[0],
            &mask,
            &mut Ctx::eval(),
        )
        .unwrap()
        .permute(&[1, 0, 2])
        .unwrap();
        assert_eq!(direct, step2.to_vec());
    }

    #[test]
    fn cycle_three_iterations_match_manual_chain() {
        let s = stack(CompositionVariant::Full, 4, 3, 3, 3);
        let p = random_input(3, 3, 4, 10);
        let mask = [true, true, true];
        let direct = s.compose_cycle(&p, &mask, true, &mut Ctx::eval()).unwrap().to_vec();
        let mut v = p;
        for i in 0..3 {
            v = temporal_encode(&v, Some(&s.embeddings.time), &s.temporal_layers[i], &mask, &mut Ctx::eval())
                .unwrap();
            v = spatial_encode(
                &v.permute(&[1, 0, 2]).unwrap(),
                Some(&s.embeddings.position),
                &s.spatial_layers[i],
                &mask,
                &mut Ctx::eval(),
            )
            .unwrap()
            .permute(&[1, 0, 2])
            .unwrap();
        }
        assert_eq!(direct, v.to_vec());
    }

    #[test]
    fn cycle_zero_input_zero_bias_zero_embeddings_gives_zero() {
        let s = stack(CompositionVariant::Full, 4, 2, 2, 2);
        s.embeddings.zeroed();
        let p = Tensor::zeros(&[2, 2, 4]);
        let out = s.compose_cycle(&p, &[true, true], true, &mut Ctx::eval()).unwrap();
        assert!(out.to_vec().iter().all(|&v| v == 0.0), "{:?}", out.to_vec());
    }

    #[test]
    fn all_variants_produce_same_shape() {
        for variant in CompositionVariant::ALL {
            let s = stack(variant, 4, 3, 3, 2);
            let p = random_input(3, 3, 4, 11);
            let out = s.forward(&p, &[true, true, true], &mut Ctx::eval()).unwrap();
            assert_eq!(out.shape(), vec![3, 3, 4], "variant {:?}", variant);
        }
    }

    #[test]
    fn baseline_has_fewer_parameters_than_full() {
        let baseline = stack(CompositionVariant::Baseline, 8, 3, 3, 3);
        let full = stack(CompositionVariant::Full, 8, 3, 3, 3);
        assert!(baseline.param_count() < full.param_count());
    }

    #[test]
    fn unembed_is_time_permutation_equivariant() {
        let d = 4;
        let (n, t) = (2, 4);
        let s = stack(CompositionVariant::Unembed, d, t, n, 2);
        let p = random_input(n, t, d, 12);
        let mask = [true, true];
        let y = s.forward(&p, &mask, &mut Ctx::eval()).unwrap().to_vec();
        let perm = [3usize, 1, 0, 2];
        let permute_t = |data: &[f64]| -> Vec<f64> {
            let mut out = vec![0.0; data.len()];
            for person in 0..n {
                for (dst, &src) in perm.iter().enumerate() {
                    let to = (person * t + dst) * d;
                    let from = (person * t + src) * d;
                    out[to..to + d].copy_from_slice(&data[from..from + d]);
                }
            }
            out
        };
        let pp = Tensor::from_vec(permute_t(&p.to_vec()), &[n, t, d]).unwrap();
        let yp = s.forward(&pp, &mask, &mut Ctx::eval()).unwrap().to_vec();
        let expected = permute_t(&y);
        for (a, b) in yp.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn relation_single_person_self_pair() {
        let v = Tensor::from_vec(vec![1.0, 2.0, 3.0, 4.0], &[1, 2, 2]).unwrap();
        let r = build_relation(&v).unwrap();
        assert_eq!(r.tokens.shape(), vec![1, 1, 4]);
        // Temporal mean of [[1,2],[3,4]] is [2,3]; the self pair repeats it.
        assert_eq!(r.cell(0, 0), vec![2.0, 3.0, 2.0, 3.0]);
    }

    #[test]
    fn relation_half_swap_identity_exhaustive() {
        let v = random_input(5, 3, 4, 13);
        let r = build_relation(&v).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let rij = r.cell(i, j);
                let rji = r.cell(j, i);
                assert_eq!(rij[..4], rji[4..], "half swap failed at ({i},{j})");
            }
        }
    }

    #[test]
    fn relation_swap_relabels_consistently() {
        let v = random_input(3, 2, 2, 14);
        let r = build_relation(&v).unwrap();
        // Swapping persons 0 and 1 in the input swaps rows/columns and halves.
        let data = v.to_vec();
        let mut swapped = data.clone();
        swapped[..4].copy_from_slice(&data[4..8]);
        swapped[4..8].copy_from_slice(&data[..4]);
        let vs = Tensor::from_vec(swapped, &[3, 2, 2]).unwrap();
        let rs = build_relation(&vs).unwrap();
        assert_eq!(r.cell(0, 1), rs.cell(1, 0));
        assert_eq!(r.cell(0, 2), rs.cell(1, 2));
    }

    #[test]
    fn per_frame_relation_keeps_time_axis() {
        let v = random_input(3, 4, 2, 15);
        let frames = build_relation_frames(&v).unwrap();
        assert_eq!(frames.shape(), vec![4, 3, 3, 4]);
    }
}
