//! Multi-level integration: temporally project each feature stream to
//! clip-level tokens, then fuse object, keypoint, person, interaction,
//! relation, and group information through four encoder stages with
//! inter-level projections, finishing in a learned scene token.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::composition::RelationMatrix;
use crate::error::NumericError;
use crate::features::FeatureSet;
use crate::numeric::{
    glorot_uniform, zero_masked_rows, Ctx, EncoderLayer, LinearLayer, Mlp, NormMode,
    ResidualMode, Scalar, Tensor,
};
use crate::scene::LabelSpace;

type Result<T> = std::result::Result<T, NumericError>;

/// Integration orders from the ablation table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegrationOrder {
    /// Keypoint+object -> person+interaction -> relation -> group+scene.
    Hierarchical,
    /// Interaction -> relation -> group, chained layer by layer.
    Linear,
    /// All token groups concatenated through one stack of equal total depth.
    Parallel,
}

impl IntegrationOrder {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "hierarchical" => Some(Self::Hierarchical),
            "linear" => Some(Self::Linear),
            "parallel" => Some(Self::Parallel),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Hierarchical => "hierarchical",
            Self::Linear => "linear",
            Self::Parallel => "parallel",
        }
    }

    pub const ALL: [IntegrationOrder; 3] = [Self::Linear, Self::Parallel, Self::Hierarchical];
}

/// Clip-level token sets, all at dimension D, with their validity masks.
pub struct LevelTokens<F: Scalar> {
    /// `[E, D]`
    pub objects: Tensor<F>,
    /// `[N*K, D]`
    pub keypoints: Tensor<F>,
    /// `[N, D]`
    pub persons: Tensor<F>,
    /// `[M, D]`
    pub groups: Tensor<F>,
    /// `[N*N, D]`, projected from the 2D relation cells.
    pub relations: Tensor<F>,
    /// `[N, D]`
    pub interactions: Tensor<F>,
    pub person_mask: Vec<bool>,
    pub object_mask: Vec<bool>,
    pub group_mask: Vec<bool>,
    pub keypoint_mask: Vec<bool>,
    pub relation_mask: Vec<bool>,
    pub person_count: usize,
    pub keypoint_count: usize,
}

/// Output of the integration stack.
pub struct IntegrationOutput<F: Scalar> {
    /// `[D]` pooled scene representation.
    pub scene: Tensor<F>,
    /// `[N, D]` person-level tokens for the individual head.
    pub persons: Tensor<F>,
}

/// The four-stage integration transformer with its stream projectors and
/// inter-level projections. Only the wiring a given order uses is allocated.
pub struct IntegrationStack<F: Scalar> {
    pub order: IntegrationOrder,
    pub stages: Vec<EncoderLayer<F>>,
    pub project_objects: Mlp<F>,
    pub project_keypoints: Mlp<F>,
    pub project_persons: Mlp<F>,
    pub project_groups: Mlp<F>,
    /// Maps 2D relation cells into D tokens.
    pub relation_unify: LinearLayer<F>,
    /// Low level -> person level (hierarchical/linear only).
    pub inject_person: Option<Mlp<F>>,
    /// Person level -> relation level, consumes concatenated pairs.
    pub inject_relation: Option<Mlp<F>>,
    /// Relation level -> group level.
    pub inject_group: Option<Mlp<F>>,
    /// `[1, D]` learned scene token.
    pub scene_token: Tensor<F>,
    dim: usize,
}

/// Hyperparameters for the integration stack.
pub struct IntegrationSettings {
    pub dim: usize,
    pub frames: usize,
    pub heads: usize,
    pub ffn_hidden: usize,
    pub dropout: f64,
    pub residual: ResidualMode,
    pub norm: NormMode,
}

const STAGES: usize = 4;

impl<F: Scalar> IntegrationStack<F> {
    pub fn new(
        settings: &IntegrationSettings,
        order: IntegrationOrder,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let d = settings.dim;
        let td = settings.frames * d;
        let stages = (0..STAGES)
            .map(|_| {
                EncoderLayer::new(
                    d,
                    settings.heads,
                    settings.ffn_hidden,
                    settings.dropout,
                    settings.residual,
                    settings.norm,
                    rng,
                )
            })
            .collect();
        let project_objects = Mlp::new(td, d, d, rng);
        let project_keypoints = Mlp::new(td, d, d, rng);
        let project_persons = Mlp::new(td, d, d, rng);
        let project_groups = Mlp::new(td, d, d, rng);
        let relation_unify = LinearLayer::new(2 * d, d, rng);
        let (inject_person, inject_relation, inject_group) = match order {
            IntegrationOrder::Parallel => (None, None, None),
            _ => (
                Some(Mlp::new(d, d, d, rng)),
                Some(Mlp::new(2 * d, d, d, rng)),
                Some(Mlp::new(d, d, d, rng)),
            ),
        };
        let scene_token =
            Tensor::parameter(glorot_uniform(1, d, rng), &[1, d]).expect("init shape");
        IntegrationStack {
            order,
            stages,
            project_objects,
            project_keypoints,
            project_persons,
            project_groups,
            relation_unify,
            inject_person,
            inject_relation,
            inject_group,
            scene_token,
            dim: d,
        }
    }

    /// Builds the clip-level token sets from per-frame features, the
    /// relation matrix, and the interaction tokens.
    pub fn project_levels(
        &self,
        features: &FeatureSet<F>,
        relation: &RelationMatrix<F>,
        interaction_tokens: &Tensor<F>,
    ) -> Result<LevelTokens<F>> {
        let kp_shape = features.keypoints.shape();
        let (n, k, t) = (kp_shape[0], kp_shape[1], kp_shape[2]);
        let d = self.dim;

        let keypoints = temporal_project(
            &features.keypoints.reshape(&[n * k, t, d])?,
            &self.project_keypoints,
        )?;
        let keypoint_mask: Vec<bool> = features
            .person_mask
            .iter()
            .flat_map(|&m| std::iter::repeat(m).take(k))
            .collect();
        let keypoints = zero_masked_rows(&keypoints, &keypoint_mask)?;

        let persons = temporal_project(&features.persons, &self.project_persons)?;
        let persons = zero_masked_rows(&persons, &features.person_mask)?;

        let groups = temporal_project(&features.groups, &self.project_groups)?;
        let groups = zero_masked_rows(&groups, &features.group_mask)?;

        let e = features.objects.shape()[0];
        let objects = if e == 0 {
            Tensor::zeros(&[0, d])
        } else {
            let projected = temporal_project(&features.objects, &self.project_objects)?;
            zero_masked_rows(&projected, &features.object_mask)?
        };

        let relation_mask: Vec<bool> = (0..n * n)
            .map(|idx| features.person_mask[idx / n] && features.person_mask[idx % n])
            .collect();
        let relations = self
            .relation_unify
            .forward(&relation.tokens.reshape(&[n * n, 2 * d])?)?;
        let relations = zero_masked_rows(&relations, &relation_mask)?;

        let interactions = zero_masked_rows(interaction_tokens, &features.person_mask)?;

        Ok(LevelTokens {
            objects,
            keypoints,
            persons,
            groups,
            relations,
            interactions,
            person_mask: features.person_mask.clone(),
            object_mask: features.object_mask.clone(),
            group_mask: features.group_mask.clone(),
            keypoint_mask,
            relation_mask,
            person_count: n,
            keypoint_count: k,
        })
    }

    /// Runs the configured integration order.
    pub fn integrate(&self, tokens: &LevelTokens<F>, ctx: &mut Ctx) -> Result<IntegrationOutput<F>> {
        match self.order {
            IntegrationOrder::Hierarchical => self.integrate_staged(tokens, false, ctx),
            IntegrationOrder::Linear => self.integrate_staged(tokens, true, ctx),
            IntegrationOrder::Parallel => self.integrate_parallel(tokens, ctx),
        }
    }

    /// Shared staged wiring. In the linear order the person stream folds
    /// into the interaction tokens and stage 2 runs over N tokens; in the
    /// hierarchical order person and interaction tokens stay separate
    /// (2N tokens) and both receive the low-level injection.
    fn integrate_staged(
        &self,
        tokens: &LevelTokens<F>,
        linear: bool,
        ctx: &mut Ctx,
    ) -> Result<IntegrationOutput<F>> {
        let n = tokens.person_count;
        let k = tokens.keypoint_count;
        let d = self.dim;
        let e = tokens.objects.shape()[0];

        // Stage 1: keypoint and object tokens.
        let (stage1_in, mask1) = if e == 0 {
            (tokens.keypoints.clone(), tokens.keypoint_mask.clone())
        } else {
            let mut mask = tokens.keypoint_mask.clone();
            mask.extend_from_slice(&tokens.object_mask);
            (Tensor::concat(&[tokens.keypoints.clone(), tokens.objects.clone()], 0)?, mask)
        };
        let out1 = encode_masked(&self.stages[0], &stage1_in, &mask1, ctx)?;

        // Low-level summary per person: mean over its joint tokens plus the
        // pooled object tokens, projected up to person level.
        let kp_mean = out1
            .narrow(0, 0, n * k)?
            .reshape(&[n, k, d])?
            .mean_axis(1)?;
        let low = if e == 0 {
            kp_mean
        } else {
            let obj_pool = masked_mean_rows(&out1.narrow(0, n * k, e)?, &tokens.object_mask)?;
            kp_mean.add_broadcast(&obj_pool)?
        };
        let inject_person =
            self.inject_person.as_ref().expect("staged orders allocate inject_person");
        let injected = zero_masked_rows(&inject_person.forward(&low)?, &tokens.person_mask)?;

        // Stage 2: person-level set.
        let (stage2_in, mask2, person_rows) = if linear {
            let fused = tokens.interactions.add(&tokens.persons)?.add(&injected)?;
            (fused, tokens.person_mask.clone(), n)
        } else {
            let p_hat = tokens.persons.add(&injected)?;
            let i_hat = tokens.interactions.add(&injected)?;
            let mut mask = tokens.person_mask.clone();
            mask.extend_from_slice(&tokens.person_mask);
            (Tensor::concat(&[p_hat, i_hat], 0)?, mask, n)
        };
        let out2 = encode_masked(&self.stages[1], &stage2_in, &mask2, ctx)?;
        let person_tokens = out2.narrow(0, 0, person_rows)?;

        // Stage 3: relation tokens refreshed from person pairs.
        let inject_relation =
            self.inject_relation.as_ref().expect("staged orders allocate inject_relation");
        let pair_idx: (Vec<usize>, Vec<usize>) = {
            let mut left = Vec::with_capacity(n * n);
            let mut right = Vec::with_capacity(n * n);
            for i in 0..n {
                for j in 0..n {
                    left.push(i);
                    right.push(j);
                }
            }
            (left, right)
        };
        let pairs = Tensor::concat(
            &[person_tokens.index_select0(&pair_idx.0)?, person_tokens.index_select0(&pair_idx.1)?],
            1,
        )?;
        let rel_inject = zero_masked_rows(&inject_relation.forward(&pairs)?, &tokens.relation_mask)?;
        let r_hat = tokens.relations.add(&rel_inject)?;
        let out3 = encode_masked(&self.stages[2], &r_hat, &tokens.relation_mask, ctx)?;

        // Stage 4: group tokens plus the scene token.
        let inject_group =
            self.inject_group.as_ref().expect("staged orders allocate inject_group");
        let rel_pool = masked_mean_rows(&out3, &tokens.relation_mask)?;
        let g_inject = inject_group.forward(&rel_pool.reshape(&[1, d])?)?.reshape(&[d])?;
        let g_hat =
            zero_masked_rows(&tokens.groups.add_broadcast(&g_inject)?, &tokens.group_mask)?;
        let stage4_in = Tensor::concat(&[g_hat, self.scene_token.clone()], 0)?;
        let mut mask4 = tokens.group_mask.clone();
        mask4.push(true);
        let out4 = encode_masked(&self.stages[3], &stage4_in, &mask4, ctx)?;
        let m = tokens.group_mask.len();
        let scene = out4.narrow(0, m, 1)?.reshape(&[d])?;

        Ok(IntegrationOutput { scene, persons: person_tokens })
    }

    fn integrate_parallel(
        &self,
        tokens: &LevelTokens<F>,
        ctx: &mut Ctx,
    ) -> Result<IntegrationOutput<F>> {
        let n = tokens.person_count;
        let k = tokens.keypoint_count;
        let e = tokens.objects.shape()[0];
        let d = self.dim;
        let mut parts = vec![tokens.keypoints.clone()];
        let mut mask = tokens.keypoint_mask.clone();
        if e > 0 {
            parts.push(tokens.objects.clone());
            mask.extend_from_slice(&tokens.object_mask);
        }
        parts.push(tokens.persons.clone());
        mask.extend_from_slice(&tokens.person_mask);
        parts.push(tokens.interactions.clone());
        mask.extend_from_slice(&tokens.person_mask);
        parts.push(tokens.relations.clone());
        mask.extend_from_slice(&tokens.relation_mask);
        parts.push(tokens.groups.clone());
        mask.extend_from_slice(&tokens.group_mask);
        parts.push(self.scene_token.clone());
        mask.push(true);

        let mut x = Tensor::concat(&parts, 0)?;
        for stage in &self.stages {
            x = encode_masked(stage, &x, &mask, ctx)?;
        }
        let person_offset = n * k + e;
        let persons = x.narrow(0, person_offset, n)?;
        let total = mask.len();
        let scene = x.narrow(0, total - 1, 1)?.reshape(&[d])?;
        Ok(IntegrationOutput { scene, persons })
    }

    pub fn collect_params(&self, out: &mut Vec<(String, Tensor<F>)>) {
        for (i, stage) in self.stages.iter().enumerate() {
            stage.collect_params(&format!("integration.stage.{i}"), out);
        }
        self.project_objects.collect_params("integration.project_objects", out);
        self.project_keypoints.collect_params("integration.project_keypoints", out);
        self.project_persons.collect_params("integration.project_persons", out);
        self.project_groups.collect_params("integration.project_groups", out);
        self.relation_unify.collect_params("integration.relation_unify", out);
        if let Some(p) = &self.inject_person {
            p.collect_params("integration.inject_person", out);
        }
        if let Some(p) = &self.inject_relation {
            p.collect_params("integration.inject_relation", out);
        }
        if let Some(p) = &self.inject_group {
            p.collect_params("integration.inject_group", out);
        }
        out.push(("integration.scene_token".into(), self.scene_token.clone()));
    }

    pub fn param_count(&self) -> usize {
        self.stages.iter().map(EncoderLayer::param_count).sum::<usize>()
            + self.project_objects.param_count()
            + self.project_keypoints.param_count()
            + self.project_persons.param_count()
            + self.project_groups.param_count()
            + self.relation_unify.param_count()
            + self.inject_person.as_ref().map_or(0, Mlp::param_count)
            + self.inject_relation.as_ref().map_or(0, Mlp::param_count)
            + self.inject_group.as_ref().map_or(0, Mlp::param_count)
            + self.scene_token.numel()
    }
}

/// Concatenates the frames of each entity and maps `T*D -> D` through a
/// two-layer perceptron: `[C, T, D] -> [C, D]`.
pub fn temporal_project<F: Scalar>(stream: &Tensor<F>, projector: &Mlp<F>) -> Result<Tensor<F>> {
    let shape = stream.shape();
    if shape.len() != 3 {
        return Err(NumericError::ShapeMismatch {
            op: "temporal_project",
            details: format!("expected [C,T,D], got {shape:?}"),
        });
    }
    let (c, t, d) = (shape[0], shape[1], shape[2]);
    if t * d != projector.hidden.in_dim() {
        return Err(NumericError::ShapeMismatch {
            op: "temporal_project",
            details: format!(
                "stream frames*dim {} does not match projector input {}",
                t * d,
                projector.hidden.in_dim()
            ),
        });
    }
    projector.forward(&stream.reshape(&[c, t * d])?)
}

/// Classification heads over the integrated tokens.
pub struct ClassifierHeads<F: Scalar> {
    pub group: LinearLayer<F>,
    pub individual: Option<LinearLayer<F>>,
}

impl<F: Scalar> ClassifierHeads<F> {
    pub fn new(dim: usize, labels: &LabelSpace, rng: &mut ChaCha8Rng) -> Self {
        ClassifierHeads {
            group: LinearLayer::new(dim, labels.group_classes.len(), rng),
            individual: if labels.individual_classes.is_empty() {
                None
            } else {
                Some(LinearLayer::new(dim, labels.individual_classes.len(), rng))
            },
        }
    }

    /// Group logits over the scene token; individual logits per person
    /// token. Padded persons are the caller's concern (they are excluded
    /// from losses and metrics via the person mask).
    pub fn classify(
        &self,
        scene: &Tensor<F>,
        person_tokens: &Tensor<F>,
    ) -> Result<(Tensor<F>, Option<Tensor<F>>)> {
        let d = scene.numel();
        let group = self.group.forward(&scene.reshape(&[1, d])?)?.reshape(&[self.group.out_dim()])?;
        let individual = match &self.individual {
            Some(head) => Some(head.forward(person_tokens)?),
            None => None,
        };
        Ok((group, individual))
    }

    pub fn collect_params(&self, out: &mut Vec<(String, Tensor<F>)>) {
        self.group.collect_params("heads.group", out);
        if let Some(head) = &self.individual {
            head.collect_params("heads.individual", out);
        }
    }

    pub fn param_count(&self) -> usize {
        self.group.param_count()
            + self.individual.as_ref().map_or(0, LinearLayer::param_count)
    }
}

fn encode_masked<F: Scalar>(
    layer: &EncoderLayer<F>,
    x: &Tensor<F>,
    mask: &[bool],
    ctx: &mut Ctx,
) -> Result<Tensor<F>> {
    let key_mask = if mask.iter().all(|&m| m) { None } else { Some(mask) };
    zero_masked_rows(&layer.forward(x, key_mask, ctx)?, mask)
}

/// Mean over rows whose mask is true; zero vector when none are.
fn masked_mean_rows<F: Scalar>(x: &Tensor<F>, mask: &[bool]) -> Result<Tensor<F>> {
    let shape = x.shape();
    let d = shape[1];
    let count = mask.iter().filter(|&&m| m).count();
    if count == 0 {
        return Ok(Tensor::zeros(&[d]));
    }
    let masked = zero_masked_rows(x, mask)?;
    Ok(masked.sum_axis(0)?.scale(F::from_f64(1.0 / count as f64)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn settings(dim: usize, frames: usize) -> IntegrationSettings {
        IntegrationSettings {
            dim,
            frames,
            heads: 2,
            ffn_hidden: dim * 2,
            dropout: 0.0,
            residual: ResidualMode::ValueLiteral,
            norm: NormMode::Post,
        }
    }

    fn random_tensor(shape: &[usize], seed: u64) -> Tensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n: usize = shape.iter().product();
        Tensor::from_vec((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(), shape).unwrap()
    }

    fn tokens_for(
        n: usize,
        k: usize,
        e: usize,
        m: usize,
        d: usize,
        person_mask: Vec<bool>,
        seed: u64,
    ) -> LevelTokens<f64> {
        let keypoint_mask: Vec<bool> =
            person_mask.iter().flat_map(|&v| std::iter::repeat(v).take(k)).collect();
        let relation_mask: Vec<bool> =
            (0..n * n).map(|i| person_mask[i / n] && person_mask[i % n]).collect();
        let mask_rows = |t: Tensor<f64>, mask: &[bool]| zero_masked_rows(&t, mask).unwrap();
        LevelTokens {
            objects: random_tensor(&[e, d], seed),
            keypoints: mask_rows(random_tensor(&[n * k, d], seed + 1), &keypoint_mask),
            persons: mask_rows(random_tensor(&[n, d], seed + 2), &person_mask),
            groups: random_tensor(&[m, d], seed + 3),
            relations: mask_rows(random_tensor(&[n * n, d], seed + 4), &relation_mask),
            interactions: mask_rows(random_tensor(&[n, d], seed + 5), &person_mask),
            person_mask,
            object_mask: vec![true; e],
            group_mask: vec![true; m],
            keypoint_mask,
            relation_mask,
            person_count: n,
            keypoint_count: k,
        }
    }

    #[test]
    fn all_orders_produce_same_shapes() {
        let d = 6;
        for order in IntegrationOrder::ALL {
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            let stack = IntegrationStack::<f64>::new(&settings(d, 3), order, &mut rng);
            let tokens = tokens_for(3, 2, 1, 2, d, vec![true; 3], 50);
            let out = stack.integrate(&tokens, &mut Ctx::eval()).unwrap();
            assert_eq!(out.scene.shape(), vec![d], "{order:?}");
            assert_eq!(out.persons.shape(), vec![3, d], "{order:?}");
        }
    }

    #[test]
    fn no_objects_still_integrates() {
        let d = 4;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let stack =
            IntegrationStack::<f64>::new(&settings(d, 2), IntegrationOrder::Hierarchical, &mut rng);
        let tokens = tokens_for(2, 3, 0, 2, d, vec![true; 2], 60);
        let out = stack.integrate(&tokens, &mut Ctx::eval()).unwrap();
        assert_eq!(out.scene.shape(), vec![d]);
    }

    #[test]
    fn masked_person_content_cannot_influence_output() {
        // Whatever sits in a masked person's token slots, every stage must
        // ignore it: masks gate attention and the slots are re-zeroed.
        let d = 6;
        let n = 4;
        let mask = vec![true, true, false, true];
        for order in IntegrationOrder::ALL {
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let stack = IntegrationStack::<f64>::new(&settings(d, 3), order, &mut rng);
            let tokens = tokens_for(n, 2, 1, 2, d, mask.clone(), 70);
            let out_a = stack.integrate(&tokens, &mut Ctx::eval()).unwrap();
            // Poison the masked slots before masking re-applies.
            let mut poisoned = tokens;
            let mut data = poisoned.persons.to_vec();
            for v in data[2 * d..3 * d].iter_mut() {
                *v = 99.0;
            }
            poisoned.persons =
                zero_masked_rows(&Tensor::from_vec(data, &[n, d]).unwrap(), &mask).unwrap();
            let out_b = stack.integrate(&poisoned, &mut Ctx::eval()).unwrap();
            assert_eq!(out_a.scene.to_vec(), out_b.scene.to_vec(), "{order:?}");
        }
    }

    #[test]
    fn hierarchical_and_linear_share_parameter_count_parallel_differs() {
        let mut counts = Vec::new();
        for order in [IntegrationOrder::Hierarchical, IntegrationOrder::Linear, IntegrationOrder::Parallel]
        {
            let mut rng = ChaCha8Rng::seed_from_u64(4);
            let stack = IntegrationStack::<f64>::new(&settings(8, 3), order, &mut rng);
            counts.push(stack.param_count());
        }
        assert_eq!(counts[0], counts[1], "hierarchical vs linear");
        assert_ne!(counts[0], counts[2], "parallel must drop the projections");
    }

    #[test]
    fn temporal_project_zero_stream_zero_bias_gives_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let proj = Mlp::<f64>::new(6, 3, 3, &mut rng);
        proj.hidden.bias.set_data(&vec![0.0; 3]);
        proj.output.bias.set_data(&vec![0.0; 3]);
        let out = temporal_project(&Tensor::zeros(&[2, 2, 3]), &proj).unwrap();
        assert!(out.to_vec().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn temporal_project_single_frame_is_plain_mlp() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let proj = Mlp::<f64>::new(4, 4, 4, &mut rng);
        let stream = random_tensor(&[3, 1, 4], 80);
        let via_project = temporal_project(&stream, &proj).unwrap();
        let direct = proj.forward(&stream.reshape(&[3, 4]).unwrap()).unwrap();
        assert_eq!(via_project.to_vec(), direct.to_vec());
    }

    #[test]
    fn temporal_project_gradients_match_finite_differences() {
        use crate::numeric::gradcheck::{check_parameters, EPSILON};
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let proj = Mlp::<f64>::new(6, 4, 4, &mut rng);
        let data: Vec<f64> = (0..12).map(|i| ((i * 3 + 1) as f64 * 0.21).sin()).collect();
        let mut params = Vec::new();
        proj.collect_params("project", &mut params);
        let reports = check_parameters(&params, EPSILON, || {
            let stream = Tensor::from_vec(data.clone(), &[2, 2, 3]).unwrap();
            temporal_project(&stream, &proj).unwrap().sum_all()
        });
        for r in reports {
            assert!(r.passed(), "{}: {}", r.name, r.max_rel_error);
        }
    }

    #[test]
    fn classify_zero_everything_gives_uniform_logits() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let labels = LabelSpace::new(&["a", "b", "c"], &["x", "y"]);
        let heads = ClassifierHeads::<f64>::new(4, &labels, &mut rng);
        heads.group.weight.set_data(&vec![0.0; 12]);
        heads.group.bias.set_data(&vec![0.0; 3]);
        let (group, _) = heads.classify(&Tensor::zeros(&[4]), &Tensor::zeros(&[2, 4])).unwrap();
        let probs = group.softmax_last(None).unwrap().to_vec();
        for p in probs {
            assert!((p - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn classify_argmax_invariant_under_constant_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let labels = LabelSpace::new(&["a", "b", "c", "d"], &[]);
        let heads = ClassifierHeads::<f64>::new(5, &labels, &mut rng);
        let scene = random_tensor(&[5], 90);
        let (group, individual) = heads.classify(&scene, &Tensor::zeros(&[1, 5])).unwrap();
        assert!(individual.is_none(), "empty individual vocabulary has no head");
        let logits = group.to_vec();
        let shifted: Vec<f64> = logits.iter().map(|v| v + 123.5).collect();
        let argmax = |v: &[f64]| {
            v.iter().enumerate().max_by(|a, b| a.1.partial_cmp(b.1).unwrap()).unwrap().0
        };
        assert_eq!(argmax(&logits), argmax(&shifted));
    }

    #[test]
    fn collective_style_has_no_individual_head() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let heads = ClassifierHeads::<f64>::new(4, &LabelSpace::collective(), &mut rng);
        assert!(heads.individual.is_none());
        assert_eq!(heads.group.out_dim(), 5);
    }
}
