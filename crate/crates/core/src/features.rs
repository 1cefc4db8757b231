//! Turns clip geometry into the four semantic feature streams (objects,
//! keypoints, persons, groups) at the unified model dimension.
//!
//! Raw channels are computed in pixels exactly as documented on
//! [`keypoint_channels`] and [`object_channels`]; the extractor then scales
//! coordinates by a fixed constant before the unification layers so that
//! training sees O(1) inputs.

use rand_chacha::ChaCha8Rng;

use crate::error::NumericError;
use crate::numeric::{zero_masked_rows, Mlp, Scalar, Tensor};
use crate::scene::{Clip, SubgroupAssignment};

type Result<T> = std::result::Result<T, NumericError>;

/// Number of per-joint channels.
pub const KEYPOINT_CHANNELS: usize = 11;
/// Number of per-object channels.
pub const OBJECT_CHANNELS: usize = 8;

/// Raw per-joint features: `persons x keypoints x frames x 11` scalars.
///
/// Channel layout per joint and frame:
/// 0,1 absolute coordinates; 2,3 coordinates relative to the person's
/// bounding-box center; 4,5 absolute velocity (forward difference, zero at
/// the first frame); 6,7 velocity relative to the center; 8,9 frame-
/// normalized coordinates; 10 joint-type id. Invalid joints are zero rows.
#[derive(Debug, Clone)]
pub struct KeypointChannels {
    pub persons: usize,
    pub keypoints: usize,
    pub frames: usize,
    data: Vec<f64>,
    valid: Vec<bool>,
}

impl KeypointChannels {
    pub fn get(&self, n: usize, k: usize, t: usize, c: usize) -> f64 {
        self.data[((n * self.keypoints + k) * self.frames + t) * KEYPOINT_CHANNELS + c]
    }

    pub fn is_valid(&self, n: usize, k: usize, t: usize) -> bool {
        self.valid[(n * self.keypoints + k) * self.frames + t]
    }

    pub fn raw(&self) -> &[f64] {
        &self.data
    }
}

/// Raw per-object features: `objects x frames x 8` scalars.
///
/// Channels: 0,1 absolute position; 2,3 position relative to the mean person
/// center; 4,5 absolute velocity; 6,7 relative velocity (forward
/// differences, zero at the first frame).
#[derive(Debug, Clone)]
pub struct ObjectChannels {
    pub objects: usize,
    pub frames: usize,
    data: Vec<f64>,
}

impl ObjectChannels {
    pub fn get(&self, e: usize, t: usize, c: usize) -> f64 {
        self.data[(e * self.frames + t) * OBJECT_CHANNELS + c]
    }

    pub fn raw(&self) -> &[f64] {
        &self.data
    }
}

/// Computes the 11 per-joint channels for every person, joint, and frame.
/// The person center is the bounding-box center; velocities are forward
/// differences `v_t = x_t - x_{t-1}` with `v_0 = 0`, taken only when both
/// frames are valid.
pub fn keypoint_channels(clip: &Clip) -> KeypointChannels {
    let (n_persons, frames) = (clip.persons.len(), clip.num_frames);
    let keypoints = clip.persons.first().map_or(0, |p| p.keypoints[0].len());
    let [w, h] = clip.frame_size;
    let mut data = vec![0.0; n_persons * keypoints * frames * KEYPOINT_CHANNELS];
    let mut valid = vec![false; n_persons * keypoints * frames];
    for (n, person) in clip.persons.iter().enumerate() {
        for k in 0..keypoints {
            for t in 0..frames {
                if !clip.keypoint_valid(n, t, k) {
                    continue;
                }
                valid[(n * keypoints + k) * frames + t] = true;
                let kp = &person.keypoints[t][k];
                let (cx, cy) = person.center(t);
                let base = ((n * keypoints + k) * frames + t) * KEYPOINT_CHANNELS;
                data[base] = kp.x;
                data[base + 1] = kp.y;
                data[base + 2] = kp.x - cx;
                data[base + 3] = kp.y - cy;
                if t > 0 && clip.keypoint_valid(n, t - 1, k) {
                    let prev = &person.keypoints[t - 1][k];
                    let (pcx, pcy) = person.center(t - 1);
                    data[base + 4] = kp.x - prev.x;
                    data[base + 5] = kp.y - prev.y;
                    data[base + 6] = (kp.x - cx) - (prev.x - pcx);
                    data[base + 7] = (kp.y - cy) - (prev.y - pcy);
                }
                data[base + 8] = kp.x / w;
                data[base + 9] = kp.y / h;
                data[base + 10] = k as f64;
            }
        }
    }
    KeypointChannels { persons: n_persons, keypoints, frames, data, valid }
}

/// Mean bounding-box center over valid persons at frame `t`.
pub fn mean_person_center(clip: &Clip, t: usize) -> (f64, f64) {
    let mut sum = (0.0, 0.0);
    let mut count = 0usize;
    for (n, p) in clip.persons.iter().enumerate() {
        if clip.person_mask[n] {
            let (cx, cy) = p.center(t);
            sum = (sum.0 + cx, sum.1 + cy);
            count += 1;
        }
    }
    if count == 0 {
        (0.0, 0.0)
    } else {
        (sum.0 / count as f64, sum.1 / count as f64)
    }
}

/// Computes the 8 per-object channels. Relative positions are taken against
/// the mean person center of the same frame.
pub fn object_channels(clip: &Clip) -> ObjectChannels {
    let (objects, frames) = (clip.objects.len(), clip.num_frames);
    let mut data = vec![0.0; objects * frames * OBJECT_CHANNELS];
    for (e, obj) in clip.objects.iter().enumerate() {
        if !clip.object_mask[e] {
            continue;
        }
        for t in 0..frames {
            let [x, y] = obj.coords[t];
            let (mx, my) = mean_person_center(clip, t);
            let base = (e * frames + t) * OBJECT_CHANNELS;
            data[base] = x;
            data[base + 1] = y;
            data[base + 2] = x - mx;
            data[base + 3] = y - my;
            if t > 0 {
                let [px, py] = obj.coords[t - 1];
                let (pmx, pmy) = mean_person_center(clip, t - 1);
                data[base + 4] = x - px;
                data[base + 5] = y - py;
                data[base + 6] = (x - mx) - (px - pmx);
                data[base + 7] = (y - my) - (py - pmy);
            }
        }
    }
    ObjectChannels { objects, frames, data }
}

/// The four unified feature streams plus the masks that scope every
/// downstream softmax and aggregation. Padded slots are exactly zero.
pub struct FeatureSet<F: Scalar> {
    /// `[E, T, D]`
    pub objects: Tensor<F>,
    /// `[N, K, T, D]`
    pub keypoints: Tensor<F>,
    /// `[N, T, D]`
    pub persons: Tensor<F>,
    /// `[M, T, D]`
    pub groups: Tensor<F>,
    pub person_mask: Vec<bool>,
    pub object_mask: Vec<bool>,
    pub group_mask: Vec<bool>,
}

/// Learned unification layers, one per feature kind, plus the object slot
/// embedding added after projection.
pub struct FeatureExtractor<F: Scalar> {
    pub unify_keypoint: Mlp<F>,
    pub unify_object: Mlp<F>,
    pub unify_person: Mlp<F>,
    pub unify_group: Mlp<F>,
    /// `[E, D]`, added to object features after unification.
    pub object_embedding: Tensor<F>,
    pub dim: usize,
    pub max_objects: usize,
    /// Divisor applied to pixel-valued channels before unification.
    pub feature_scale: f64,
}

impl<F: Scalar> FeatureExtractor<F> {
    pub fn new(dim: usize, max_objects: usize, feature_scale: f64, rng: &mut ChaCha8Rng) -> Self {
        FeatureExtractor {
            unify_keypoint: Mlp::new(KEYPOINT_CHANNELS, dim, dim, rng),
            unify_object: Mlp::new(OBJECT_CHANNELS, dim, dim, rng),
            unify_person: Mlp::new(dim, dim, dim, rng),
            unify_group: Mlp::new(dim, dim, dim, rng),
            object_embedding: Tensor::parameter(
                crate::numeric::glorot_uniform(max_objects.max(1), dim, rng),
                &[max_objects.max(1), dim],
            )
            .expect("init shape"),
            dim,
            max_objects,
            feature_scale,
        }
    }

    /// Full extraction pipeline for one padded clip.
    pub fn extract(
        &self,
        clip: &Clip,
        assignment: &SubgroupAssignment,
    ) -> Result<FeatureSet<F>> {
        let channels = keypoint_channels(clip);
        let (n, k, t) = (channels.persons, channels.keypoints, channels.frames);
        let scale = self.feature_scale;
        let type_scale = (k.saturating_sub(1)).max(1) as f64;

        // Scaled keypoint inputs: coordinate channels / scale, type / (K-1).
        let mut scaled = Vec::with_capacity(channels.raw().len());
        for (i, &v) in channels.raw().iter().enumerate() {
            let c = i % KEYPOINT_CHANNELS;
            scaled.push(F::from_f64(match c {
                10 => v / type_scale,
                8 | 9 => v,
                _ => v / scale,
            }));
        }
        let raw_kp = Tensor::from_vec(scaled, &[n, k, t, KEYPOINT_CHANNELS])?;
        let unified_kp = self.unify_keypoint.forward(&raw_kp)?;
        // Invalid joints contribute exactly zero features.
        let joint_mask = joint_mask_tensor::<F>(&channels, self.dim)?;
        let keypoints = unified_kp.mul(&joint_mask)?;

        let person_agg = aggregate_person(&keypoints, &channels)?;
        let persons = self.unify_person.forward(&person_agg)?;
        let persons = mask_axis0(&persons, &clip.person_mask)?;

        let group_agg = aggregate_group(&persons, assignment, &clip.person_mask)?;
        let groups = self.unify_group.forward(&group_agg)?;
        let group_mask = assignment.subgroup_mask(&clip.person_mask);
        let groups = mask_axis0(&groups, &group_mask)?;

        let objects = if clip.objects.is_empty() {
            Tensor::zeros(&[0, t, self.dim])
        } else {
            let obj_channels = object_channels(clip);
            let e = obj_channels.objects;
            let scaled: Vec<F> =
                obj_channels.raw().iter().map(|&v| F::from_f64(v / scale)).collect();
            let raw_obj = Tensor::from_vec(scaled, &[e, t, OBJECT_CHANNELS])?;
            let unified = self.unify_object.forward(&raw_obj)?;
            // Slot embedding broadcasts over frames: [E,T,D] -> [T,E,D] + [E,D].
            let embedded = unified
                .permute(&[1, 0, 2])?
                .add_broadcast(&self.object_embedding.narrow(0, 0, e)?)?
                .permute(&[1, 0, 2])?;
            mask_axis0(&embedded, &clip.object_mask)?
        };

        Ok(FeatureSet {
            objects,
            keypoints,
            persons,
            groups,
            person_mask: clip.person_mask.clone(),
            object_mask: clip.object_mask.clone(),
            group_mask,
        })
    }

    pub fn collect_params(&self, out: &mut Vec<(String, Tensor<F>)>) {
        self.unify_keypoint.collect_params("extractor.unify_keypoint", out);
        self.unify_object.collect_params("extractor.unify_object", out);
        self.unify_person.collect_params("extractor.unify_person", out);
        self.unify_group.collect_params("extractor.unify_group", out);
        out.push(("extractor.object_embedding".into(), self.object_embedding.clone()));
    }

    pub fn param_count(&self) -> usize {
        self.unify_keypoint.param_count()
            + self.unify_object.param_count()
            + self.unify_person.param_count()
            + self.unify_group.param_count()
            + self.object_embedding.numel()
    }
}

/// Mean over valid joints: `[N, K, T, D] -> [N, T, D]`. Persons with zero
/// valid joints at a frame yield a zero vector.
pub fn aggregate_person<F: Scalar>(
    keypoints: &Tensor<F>,
    channels: &KeypointChannels,
) -> Result<Tensor<F>> {
    let shape = keypoints.shape();
    let (n, k, t, d) = (shape[0], shape[1], shape[2], shape[3]);
    let summed = keypoints.sum_axis(1)?;
    // Reciprocal valid-joint counts per (person, frame).
    let mut recip = vec![F::zero(); n * t * d];
    for p in 0..n {
        for f in 0..t {
            let count = (0..k).filter(|&j| channels.is_valid(p, j, f)).count();
            if count > 0 {
                let r = F::from_f64(1.0 / count as f64);
                let base = (p * t + f) * d;
                recip[base..base + d].fill(r);
            }
        }
    }
    summed.mul(&Tensor::from_vec(recip, &[n, t, d])?)
}

/// Mean over valid subgroup members: `[N, T, D] -> [M, T, D]`. Empty
/// subgroups yield zero vectors (callers flag them via the subgroup mask).
pub fn aggregate_group<F: Scalar>(
    persons: &Tensor<F>,
    assignment: &SubgroupAssignment,
    person_mask: &[bool],
) -> Result<Tensor<F>> {
    let shape = persons.shape();
    let (n, t, d) = (shape[0], shape[1], shape[2]);
    let mut parts = Vec::with_capacity(assignment.subgroup_count);
    for m in 0..assignment.subgroup_count {
        let members: Vec<usize> = (0..n)
            .filter(|&p| person_mask[p] && assignment.membership[p] == m)
            .collect();
        if members.is_empty() {
            parts.push(Tensor::zeros(&[1, t, d]));
            continue;
        }
        let gathered = persons.index_select0(&members)?;
        let mean = gathered.sum_axis(0)?.scale(F::from_f64(1.0 / members.len() as f64));
        parts.push(mean.reshape(&[1, t, d])?);
    }
    Tensor::concat(&parts, 0)
}

/// Zeroes axis-0 slots whose mask is false, keeping shapes intact.
pub fn mask_axis0<F: Scalar>(x: &Tensor<F>, mask: &[bool]) -> Result<Tensor<F>> {
    zero_masked_rows(x, mask)
}

fn joint_mask_tensor<F: Scalar>(channels: &KeypointChannels, d: usize) -> Result<Tensor<F>> {
    let (n, k, t) = (channels.persons, channels.keypoints, channels.frames);
    let mut data = vec![F::zero(); n * k * t * d];
    for p in 0..n {
        for j in 0..k {
            for f in 0..t {
                if channels.is_valid(p, j, f) {
                    let base = ((p * k + j) * t + f) * d;
                    data[base..base + d].fill(F::one());
                }
            }
        }
    }
    Tensor::from_vec(data, &[n, k, t, d])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{assign_subgroups, Clip, Keypoint, ObjectTrack, PersonTrack};
    use rand::{Rng, SeedableRng};

    fn clip_with(
        persons: Vec<PersonTrack>,
        objects: Vec<ObjectTrack>,
        frames: usize,
    ) -> Clip {
        let person_mask = vec![true; persons.len()];
        let object_mask = vec![true; objects.len()];
        Clip {
            frame_size: [1280.0, 720.0],
            num_frames: frames,
            persons,
            objects,
            person_mask,
            object_mask,
            group_label: 0,
            subgroups: None,
        }
    }

    fn person_at(cx: f64, cy: f64, frames: usize, joints: usize) -> PersonTrack {
        PersonTrack {
            boxes: vec![[cx - 20.0, cy - 40.0, 40.0, 80.0]; frames],
            keypoints: vec![
                vec![Keypoint { x: cx, y: cy, confidence: 1.0 }; joints];
                frames
            ],
            action: 0,
        }
    }

    #[test]
    fn stationary_joint_at_center_channels() {
        let clip = clip_with(vec![person_at(100.0, 200.0, 3, 2)], vec![], 3);
        let ch = keypoint_channels(&clip);
        for t in 0..3 {
            assert_eq!(ch.get(0, 0, t, 0), 100.0, "abs x");
            assert_eq!(ch.get(0, 0, t, 1), 200.0, "abs y");
            assert_eq!(ch.get(0, 0, t, 2), 0.0, "rel x");
            assert_eq!(ch.get(0, 0, t, 3), 0.0, "rel y");
            for c in 4..8 {
                assert_eq!(ch.get(0, 0, t, c), 0.0, "velocity channel {c}");
            }
            assert_eq!(ch.get(0, 0, t, 8), 100.0 / 1280.0, "norm x");
            assert_eq!(ch.get(0, 0, t, 9), 200.0 / 720.0, "norm y");
            assert_eq!(ch.get(0, 1, t, 10), 1.0, "joint type id");
        }
    }

    #[test]
    fn forward_difference_velocity() {
        let frames = 5;
        let mut person = person_at(100.0, 200.0, frames, 1);
        for t in 0..frames {
            person.keypoints[t][0].x = 100.0 + 3.0 * t as f64;
        }
        let clip = clip_with(vec![person], vec![], frames);
        let ch = keypoint_channels(&clip);
        assert_eq!(ch.get(0, 0, 0, 4), 0.0, "first-frame velocity is zero");
        for t in 1..frames {
            assert_eq!(ch.get(0, 0, t, 4), 3.0, "vx at frame {t}");
        }
    }

    #[test]
    fn channels_match_independent_recomputation() {
        // Straight-line per-channel oracle over a randomized clip.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        let frames = 6;
        let persons: Vec<PersonTrack> = (0..3)
            .map(|_| {
                let mut p = person_at(
                    rng.gen_range(100.0..1000.0),
                    rng.gen_range(100.0..600.0),
                    frames,
                    4,
                );
                for t in 0..frames {
                    for k in 0..4 {
                        p.keypoints[t][k].x = rng.gen_range(0.0..1280.0);
                        p.keypoints[t][k].y = rng.gen_range(0.0..720.0);
                    }
                    p.boxes[t][0] = rng.gen_range(0.0..1200.0);
                    p.boxes[t][1] = rng.gen_range(0.0..600.0);
                }
                p
            })
            .collect();
        let clip = clip_with(persons, vec![], frames);
        let ch = keypoint_channels(&clip);
        for n in 0..3 {
            for k in 0..4 {
                for t in 0..frames {
                    let kp = &clip.persons[n].keypoints[t][k];
                    let b = clip.persons[n].boxes[t];
                    let (cx, cy) = (b[0] + b[2] / 2.0, b[1] + b[3] / 2.0);
                    assert_eq!(ch.get(n, k, t, 0), kp.x);
                    assert_eq!(ch.get(n, k, t, 2), kp.x - cx);
                    assert_eq!(ch.get(n, k, t, 3), kp.y - cy);
                    if t > 0 {
                        let prev = &clip.persons[n].keypoints[t - 1][k];
                        let pb = clip.persons[n].boxes[t - 1];
                        assert_eq!(ch.get(n, k, t, 4), kp.x - prev.x);
                        assert_eq!(
                            ch.get(n, k, t, 6),
                            (kp.x - cx) - (prev.x - (pb[0] + pb[2] / 2.0))
                        );
                    }
                    assert_eq!(ch.get(n, k, t, 8), kp.x / 1280.0);
                    assert_eq!(ch.get(n, k, t, 10), k as f64);
                }
            }
        }
    }

    #[test]
    fn translation_leaves_relative_channels_unchanged() {
        let frames = 4;
        let mut person = person_at(300.0, 300.0, frames, 2);
        for t in 0..frames {
            person.keypoints[t][0].x = 280.0 + 5.0 * t as f64;
            person.keypoints[t][1].y = 320.0 - 2.0 * t as f64;
        }
        let clip = clip_with(vec![person.clone()], vec![], frames);
        let (dx, dy) = (37.0, -21.0);
        let mut shifted = person;
        for t in 0..frames {
            shifted.boxes[t][0] += dx;
            shifted.boxes[t][1] += dy;
            for k in 0..2 {
                shifted.keypoints[t][k].x += dx;
                shifted.keypoints[t][k].y += dy;
            }
        }
        let clip2 = clip_with(vec![shifted], vec![], frames);
        let (a, b) = (keypoint_channels(&clip), keypoint_channels(&clip2));
        for k in 0..2 {
            for t in 0..frames {
                for c in 2..8 {
                    assert_eq!(a.get(0, k, t, c), b.get(0, k, t, c), "channel {c}");
                }
                assert_eq!(a.get(0, k, t, 0) + dx, b.get(0, k, t, 0), "abs x shifts");
            }
        }
    }

    #[test]
    fn object_at_mean_center_has_zero_relative_position() {
        let frames = 3;
        let persons = vec![person_at(100.0, 100.0, frames, 1), person_at(300.0, 200.0, frames, 1)];
        let objects = vec![ObjectTrack { coords: vec![[200.0, 150.0]; frames] }];
        let clip = clip_with(persons, objects, frames);
        let ch = object_channels(&clip);
        for t in 0..frames {
            assert_eq!(ch.get(0, t, 2), 0.0);
            assert_eq!(ch.get(0, t, 3), 0.0);
        }
    }

    #[test]
    fn static_scene_has_zero_object_velocities() {
        let frames = 3;
        let clip = clip_with(
            vec![person_at(100.0, 100.0, frames, 1)],
            vec![ObjectTrack { coords: vec![[50.0, 60.0]; frames] }],
            frames,
        );
        let ch = object_channels(&clip);
        for t in 0..frames {
            for c in 4..8 {
                assert_eq!(ch.get(0, t, c), 0.0);
            }
        }
    }

    #[test]
    fn parabolic_ball_velocity_matches_finite_differences() {
        let frames = 8;
        let coords: Vec<[f64; 2]> = (0..frames)
            .map(|t| {
                let s = t as f64;
                [100.0 + 30.0 * s, 400.0 - 50.0 * s + 4.0 * s * s]
            })
            .collect();
        let clip = clip_with(
            vec![person_at(640.0, 360.0, frames, 1)],
            vec![ObjectTrack { coords: coords.clone() }],
            frames,
        );
        let ch = object_channels(&clip);
        for t in 1..frames {
            assert_eq!(ch.get(0, t, 4), coords[t][0] - coords[t - 1][0]);
            assert_eq!(ch.get(0, t, 5), coords[t][1] - coords[t - 1][1]);
        }
        assert_eq!(ch.get(0, 0, 4), 0.0);
    }

    #[test]
    fn unify_zero_input_zero_bias_gives_zero() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mlp = Mlp::<f64>::new(4, 8, 8, &mut rng);
        mlp.hidden.bias.set_data(&vec![0.0; 8]);
        mlp.output.bias.set_data(&vec![0.0; 8]);
        let x = Tensor::zeros(&[3, 4]);
        let y = mlp.forward(&x).unwrap();
        assert!(y.to_vec().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unify_identity_toy_composition() {
        // Identity weights at 2x2: unify(x) = relu(x), hand-checkable.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mlp = Mlp::<f64>::new(2, 2, 2, &mut rng);
        let eye = vec![1.0, 0.0, 0.0, 1.0];
        mlp.hidden.weight.set_data(&eye);
        mlp.output.weight.set_data(&eye);
        mlp.hidden.bias.set_data(&[0.0, 0.0]);
        mlp.output.bias.set_data(&[0.0, 0.0]);
        let x = Tensor::from_vec(vec![3.0, -2.0], &[1, 2]).unwrap();
        assert_eq!(mlp.forward(&x).unwrap().to_vec(), vec![3.0, 0.0]);
    }

    #[test]
    fn unify_gradients_match_finite_differences() {
        use crate::numeric::gradcheck::{check_parameters, EPSILON};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mlp = Mlp::<f64>::new(3, 5, 4, &mut rng);
        let input: Vec<f64> = (0..6).map(|i| (i as f64 - 2.5) * 0.4).collect();
        let mut params = Vec::new();
        mlp.collect_params("unify", &mut params);
        let reports = check_parameters(&params, EPSILON, || {
            let x = Tensor::from_vec(input.clone(), &[2, 3]).unwrap();
            mlp.forward(&x).unwrap().sum_all()
        });
        for r in reports {
            assert!(r.passed(), "{}: {}", r.name, r.max_rel_error);
        }
    }

    #[test]
    fn aggregate_person_mean_of_equal_joints() {
        let frames = 2;
        let clip = clip_with(vec![person_at(100.0, 100.0, frames, 3)], vec![], frames);
        let ch = keypoint_channels(&clip);
        // All 3 joints share vector v per (person, frame).
        let d = 4;
        let mut data = Vec::new();
        for _k in 0..3 {
            for t in 0..frames {
                for c in 0..d {
                    data.push((t * d + c) as f64 + 1.0);
                }
            }
        }
        let s = Tensor::from_vec(data, &[1, 3, frames, d]).unwrap();
        let p = aggregate_person(&s, &ch).unwrap();
        for t in 0..frames {
            for c in 0..d {
                assert!((p.to_vec()[t * d + c] - ((t * d + c) as f64 + 1.0)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn aggregate_person_single_valid_joint() {
        let frames = 1;
        let mut person = person_at(100.0, 100.0, frames, 3);
        person.keypoints[0][0].confidence = 0.0;
        person.keypoints[0][2].confidence = 0.0;
        let clip = clip_with(vec![person], vec![], frames);
        let ch = keypoint_channels(&clip);
        let d = 2;
        let s = Tensor::from_vec(vec![0.0, 0.0, 5.0, 7.0, 0.0, 0.0], &[1, 3, 1, d]).unwrap();
        let p = aggregate_person(&s, &ch).unwrap();
        assert_eq!(p.to_vec(), vec![5.0, 7.0]);
    }

    #[test]
    fn aggregations_match_oracle_mean() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let frames = 3;
        let (n, k, d) = (4, 5, 6);
        let clip = clip_with(
            (0..n).map(|i| person_at(100.0 + i as f64 * 50.0, 200.0, frames, k)).collect(),
            vec![],
            frames,
        );
        let ch = keypoint_channels(&clip);
        let data: Vec<f64> = (0..n * k * frames * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let s = Tensor::from_vec(data.clone(), &[n, k, frames, d]).unwrap();
        let p = aggregate_person(&s, &ch).unwrap().to_vec();
        for person in 0..n {
            for t in 0..frames {
                for c in 0..d {
                    let mean: f64 = (0..k)
                        .map(|j| data[((person * k + j) * frames + t) * d + c])
                        .sum::<f64>()
                        / k as f64;
                    let got = p[(person * frames + t) * d + c];
                    assert!((got - mean).abs() < 1e-12, "{got} vs {mean}");
                }
            }
        }
        // Group aggregation vs the same oracle at M = 2.
        let assignment = assign_subgroups(&clip, 2).unwrap();
        let pt = Tensor::from_vec(p.clone(), &[n, frames, d]).unwrap();
        let g = aggregate_group(&pt, &assignment, &clip.person_mask).unwrap().to_vec();
        for m in 0..2 {
            let members: Vec<usize> =
                (0..n).filter(|&i| assignment.membership[i] == m).collect();
            for t in 0..frames {
                for c in 0..d {
                    let mean: f64 = members
                        .iter()
                        .map(|&i| p[(i * frames + t) * d + c])
                        .sum::<f64>()
                        / members.len() as f64;
                    let got = g[(m * frames + t) * d + c];
                    assert!((got - mean).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn aggregation_permutation_invariant_over_members() {
        let frames = 1;
        let d = 3;
        let clip = clip_with(
            vec![person_at(100.0, 100.0, frames, 2), person_at(200.0, 100.0, frames, 2)],
            vec![],
            frames,
        );
        let assignment = SubgroupAssignment { membership: vec![0, 0], subgroup_count: 1 };
        let p1 = Tensor::from_vec(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &[2, 1, d]).unwrap();
        let p2 = Tensor::from_vec(vec![4.0, 5.0, 6.0, 1.0, 2.0, 3.0], &[2, 1, d]).unwrap();
        let g1 = aggregate_group(&p1, &assignment, &clip.person_mask).unwrap().to_vec();
        let g2 = aggregate_group(&p2, &assignment, &clip.person_mask).unwrap().to_vec();
        assert_eq!(g1, g2);
    }
}
