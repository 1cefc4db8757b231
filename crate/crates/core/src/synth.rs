//! Deterministic generator of labeled multi-person keypoint clips.
//!
//! Scenario classes are recoverable only through the mechanisms the model is
//! built around: `composition3` separates by formation dynamics alone, while
//! `interaction2` holds formations identically distributed across classes
//! and differs only in whether the ball's flight ends at a person.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::SceneError;
use crate::scene::{Clip, ClipLimits, Keypoint, LabelSpace, ObjectTrack, PersonTrack};

type Result<T> = std::result::Result<T, SceneError>;

/// Per-frame person center motion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FormationScript {
    /// Centers contract toward the formation centroid.
    Converge,
    /// Centers expand away from the centroid.
    Disperse,
    /// Centers hold their starting positions.
    Static,
}

/// Object (ball) trajectory script.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BallScript {
    /// No object.
    Absent,
    /// Parabolic arc between two class-independent points.
    FreeArc,
    /// Parabolic arc ending at the handler's center.
    ArcToHandler,
    /// Parabolic arc ending at a person-like position away from every person.
    ArcToPhantom,
}

/// Full description of one synthetic scene.
#[derive(Debug, Clone)]
pub struct ScenarioSpec {
    pub class_id: usize,
    pub formation: FormationScript,
    /// Ball-handler person index (role script), when the scenario has one.
    pub handler: Option<usize>,
    pub ball: BallScript,
    /// Isotropic keypoint jitter in pixels.
    pub noise_sigma: f64,
    pub persons: usize,
    pub keypoints: usize,
    pub frames: usize,
    pub objects: usize,
    pub frame_size: [f64; 2],
    pub group_label: usize,
    /// Individual labels: (handler action, non-handler action).
    pub actions: (usize, usize),
}

/// COCO-style 17-joint stick figure offsets in unit body coordinates,
/// scaled by the person's (width, height).
const STICK_FIGURE: [(f64, f64); 17] = [
    (0.00, -0.45),  // nose
    (-0.04, -0.48), // left eye
    (0.04, -0.48),  // right eye
    (-0.09, -0.46), // left ear
    (0.09, -0.46),  // right ear
    (-0.18, -0.28), // left shoulder
    (0.18, -0.28),  // right shoulder
    (-0.24, -0.08), // left elbow
    (0.24, -0.08),  // right elbow
    (-0.26, 0.10),  // left wrist
    (0.26, 0.10),   // right wrist
    (-0.12, 0.08),  // left hip
    (0.12, 0.08),   // right hip
    (-0.13, 0.28),  // left knee
    (0.13, 0.28),   // right knee
    (-0.14, 0.47),  // left ankle
    (0.14, 0.47),   // right ankle
];

const BODY_W: f64 = 36.0;
const BODY_H: f64 = 90.0;

/// splitmix64 step, used to derive independent seeds per clip and stream.
pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    let mut z = base ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ index.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn gaussian(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    // Box-Muller; two uniforms per draw keeps the stream layout simple.
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen();
    sigma * (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Starting grid: two rows spread across the middle of the frame, jittered.
fn starting_centers(spec: &ScenarioSpec, rng: &mut ChaCha8Rng) -> Vec<(f64, f64)> {
    let [w, h] = spec.frame_size;
    let cols = spec.persons.div_ceil(2);
    let mut centers = Vec::with_capacity(spec.persons);
    for n in 0..spec.persons {
        let row = n / cols;
        let col = n % cols;
        let x = w * (0.28 + 0.44 * col as f64 / (cols.max(2) - 1) as f64);
        let y = h * (0.38 + 0.24 * row as f64);
        centers.push((x + gaussian(rng, w * 0.02), y + gaussian(rng, h * 0.02)));
    }
    centers
}

/// Sample a point from the same spatial distribution as person positions.
fn person_like_point(spec: &ScenarioSpec, rng: &mut ChaCha8Rng) -> (f64, f64) {
    let [w, h] = spec.frame_size;
    (w * rng.gen_range(0.25..0.75), h * rng.gen_range(0.35..0.68))
}

fn formation_scale(formation: FormationScript, progress: f64) -> f64 {
    match formation {
        FormationScript::Converge => 1.0 - 0.65 * progress,
        FormationScript::Disperse => 1.0 + 0.70 * progress,
        FormationScript::Static => 1.0,
    }
}

/// Generates one clip. Same spec and seed always produce the same clip.
pub fn generate(spec: &ScenarioSpec, seed: u64) -> Result<Clip> {
    if spec.keypoints > STICK_FIGURE.len() {
        return Err(SceneError::Invalid(format!(
            "stick figure template has {} joints, {} requested",
            STICK_FIGURE.len(),
            spec.keypoints
        )));
    }
    if spec.frames < 2 {
        return Err(SceneError::Invalid("need at least two frames".into()));
    }
    if let Some(handler) = spec.handler {
        if handler >= spec.persons {
            return Err(SceneError::Invalid(format!(
                "handler index {handler} out of {} persons",
                spec.persons
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let [w, h] = spec.frame_size;
    let starts = starting_centers(spec, &mut rng);
    let centroid = {
        let (sx, sy) = starts.iter().fold((0.0, 0.0), |a, c| (a.0 + c.0, a.1 + c.1));
        (sx / starts.len() as f64, sy / starts.len() as f64)
    };

    // Per-frame person centers.
    let mut centers = vec![vec![(0.0, 0.0); spec.persons]; spec.frames];
    for (t, frame) in centers.iter_mut().enumerate() {
        let progress = t as f64 / (spec.frames - 1) as f64;
        let scale = formation_scale(spec.formation, progress);
        for (n, slot) in frame.iter_mut().enumerate() {
            *slot = (
                centroid.0 + (starts[n].0 - centroid.0) * scale,
                centroid.1 + (starts[n].1 - centroid.1) * scale,
            );
        }
    }

    // Ball path, decided before keypoint jitter so the draw layout is
    // identical across classes.
    let ball_path = match spec.ball {
        BallScript::Absent => None,
        BallScript::FreeArc => {
            let from = person_like_point(spec, &mut rng);
            let to = person_like_point(spec, &mut rng);
            Some(arc(from, to, spec.frames, h))
        }
        BallScript::ArcToHandler => {
            let from = (w * rng.gen_range(0.1..0.9), h * rng.gen_range(0.05..0.15));
            let handler = spec.handler.ok_or(SceneError::Invalid("no handler for arc".into()))?;
            let to = centers[spec.frames - 1][handler];
            Some(arc(from, to, spec.frames, h))
        }
        BallScript::ArcToPhantom => {
            let from = (w * rng.gen_range(0.1..0.9), h * rng.gen_range(0.05..0.15));
            let final_centers = &centers[spec.frames - 1];
            let margin = 2.2 * BODY_W;
            let mut best = person_like_point(spec, &mut rng);
            let mut best_dist = min_distance(best, final_centers);
            for _ in 0..49 {
                if best_dist >= margin {
                    break;
                }
                let candidate = person_like_point(spec, &mut rng);
                let d = min_distance(candidate, final_centers);
                if d > best_dist {
                    best = candidate;
                    best_dist = d;
                }
            }
            Some(arc(from, best, spec.frames, h))
        }
    };

    let mut persons = Vec::with_capacity(spec.persons);
    for n in 0..spec.persons {
        let mut boxes = Vec::with_capacity(spec.frames);
        let mut keypoints = Vec::with_capacity(spec.frames);
        for frame in centers.iter() {
            let (cx, cy) = frame[n];
            boxes.push([cx - BODY_W / 2.0, cy - BODY_H / 2.0, BODY_W, BODY_H]);
            let joints = STICK_FIGURE[..spec.keypoints]
                .iter()
                .map(|&(ox, oy)| Keypoint {
                    x: cx + ox * BODY_W + gaussian(&mut rng, spec.noise_sigma),
                    y: cy + oy * BODY_H + gaussian(&mut rng, spec.noise_sigma),
                    confidence: 1.0,
                })
                .collect();
            keypoints.push(joints);
        }
        let action = if Some(n) == spec.handler { spec.actions.0 } else { spec.actions.1 };
        persons.push(PersonTrack { boxes, keypoints, action });
    }

    let objects = match ball_path {
        Some(path) => {
            let coords = path.into_iter().map(|(x, y)| [x, y]).collect();
            vec![ObjectTrack { coords }]
        }
        None => Vec::new(),
    };
    let object_mask = vec![true; objects.len()];

    let clip = Clip {
        frame_size: spec.frame_size,
        num_frames: spec.frames,
        person_mask: vec![true; persons.len()],
        persons,
        objects,
        object_mask,
        group_label: spec.group_label,
        subgroups: None,
    };
    Ok(clip)
}

fn min_distance(p: (f64, f64), centers: &[(f64, f64)]) -> f64 {
    centers
        .iter()
        .map(|c| ((p.0 - c.0).powi(2) + (p.1 - c.1).powi(2)).sqrt())
        .fold(f64::INFINITY, f64::min)
}

/// Fraction of the clip after which a scripted flight has reached its
/// target; the ball then holds position (caught, or dead on the floor).
const CATCH_FRACTION: f64 = 0.35;

/// Parabolic arc: linear interpolation plus a quadratic lift whose apex is a
/// quarter frame height. The flight completes at [`CATCH_FRACTION`] of the
/// clip and the ball stays at the target afterwards.
fn arc(from: (f64, f64), to: (f64, f64), frames: usize, frame_h: f64) -> Vec<(f64, f64)> {
    let lift = frame_h * 0.25;
    (0..frames)
        .map(|t| {
            let raw = t as f64 / (frames - 1) as f64;
            let s = (raw / CATCH_FRACTION).min(1.0);
            (
                from.0 + (to.0 - from.0) * s,
                from.1 + (to.1 - from.1) * s - lift * 4.0 * s * (1.0 - s),
            )
        })
        .collect()
}

/// Benchmark suite kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SuiteKind {
    /// Three classes separable by formation dynamics alone.
    Composition3,
    /// Two classes identical in formation, differing only in whether the
    /// ball's flight ends at a person.
    Interaction2,
}

impl SuiteKind {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "composition3" => Some(SuiteKind::Composition3),
            "interaction2" => Some(SuiteKind::Interaction2),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SuiteKind::Composition3 => "composition3",
            SuiteKind::Interaction2 => "interaction2",
        }
    }

    pub fn class_count(&self) -> usize {
        match self {
            SuiteKind::Composition3 => 3,
            SuiteKind::Interaction2 => 2,
        }
    }

    pub fn labels(&self) -> LabelSpace {
        match self {
            SuiteKind::Composition3 => {
                LabelSpace::new(&["converge", "disperse", "static"], &["moving", "standing"])
            }
            SuiteKind::Interaction2 => {
                LabelSpace::new(&["pass_received", "pass_missed"], &["receiving", "waiting"])
            }
        }
    }

    pub fn limits(&self) -> ClipLimits {
        let max_persons = match self {
            SuiteKind::Composition3 => 6,
            SuiteKind::Interaction2 => 4,
        };
        ClipLimits { frames: 10, keypoints: 17, max_persons, max_objects: 1 }
    }
}

/// Defaults for suite generation.
pub const DEFAULT_TRAIN_CLIPS: usize = 300;
pub const DEFAULT_TEST_CLIPS: usize = 100;
pub const DEFAULT_NOISE_SIGMA: f64 = 2.0;

/// A generated train/test split with its vocabulary and shape bounds.
pub struct BenchmarkSuite {
    pub kind: SuiteKind,
    pub train: Vec<Clip>,
    pub test: Vec<Clip>,
    pub labels: LabelSpace,
    pub limits: ClipLimits,
}

/// Scenario for clip `index` of a suite: classes cycle so splits stay
/// balanced, and every class consumes the identical RNG draw layout.
pub fn suite_scenario(kind: SuiteKind, index: usize, rng: &mut ChaCha8Rng) -> ScenarioSpec {
    let limits = kind.limits();
    let class_id = index % kind.class_count();
    let base = ScenarioSpec {
        class_id,
        formation: FormationScript::Static,
        handler: None,
        ball: BallScript::FreeArc,
        noise_sigma: DEFAULT_NOISE_SIGMA,
        persons: limits.max_persons,
        keypoints: limits.keypoints,
        frames: limits.frames,
        objects: limits.max_objects,
        frame_size: [960.0, 540.0],
        group_label: class_id,
        actions: (0, 1),
    };
    match kind {
        SuiteKind::Composition3 => {
            let formation = match class_id {
                0 => FormationScript::Converge,
                1 => FormationScript::Disperse,
                _ => FormationScript::Static,
            };
            // moving / standing for everyone, by class.
            let action = if class_id == 2 { 1 } else { 0 };
            ScenarioSpec { formation, actions: (action, action), ..base }
        }
        SuiteKind::Interaction2 => {
            let handler = rng.gen_range(0..limits.max_persons);
            let ball =
                if class_id == 0 { BallScript::ArcToHandler } else { BallScript::ArcToPhantom };
            let handler = if class_id == 0 { Some(handler) } else { None };
            ScenarioSpec {
                formation: FormationScript::Static,
                handler,
                ball,
                // Everyone waits unless scripted to receive.
                actions: (0, 1),
                ..base
            }
        }
    }
}

/// Materializes balanced, disjoint, seeded train/test splits.
pub fn benchmark_suite(
    kind: SuiteKind,
    seed: u64,
    train_clips: usize,
    test_clips: usize,
) -> Result<BenchmarkSuite> {
    benchmark_suite_with_noise(kind, seed, train_clips, test_clips, DEFAULT_NOISE_SIGMA)
}

/// [`benchmark_suite`] with an explicit keypoint jitter sigma.
pub fn benchmark_suite_with_noise(
    kind: SuiteKind,
    seed: u64,
    train_clips: usize,
    test_clips: usize,
    noise_sigma: f64,
) -> Result<BenchmarkSuite> {
    let make = |count: usize, stream: u64| -> Result<Vec<Clip>> {
        (0..count)
            .map(|i| {
                let mut scenario_rng =
                    ChaCha8Rng::seed_from_u64(derive_seed(seed, stream, i as u64));
                let mut spec = suite_scenario(kind, i, &mut scenario_rng);
                spec.noise_sigma = noise_sigma;
                generate(&spec, derive_seed(seed, stream + 1, i as u64))
            })
            .collect()
    };
    Ok(BenchmarkSuite {
        kind,
        train: make(train_clips, 1)?,
        test: make(test_clips, 3)?,
        labels: kind.labels(),
        limits: kind.limits(),
    })
}

/// Mean pairwise distance between person bounding-box centers at each frame.
/// The composition oracle classifies on this curve; it is also a useful
/// diagnostic for generated scenes.
pub fn mean_pairwise_distance_curve(clip: &Clip) -> Vec<f64> {
    let valid: Vec<usize> =
        (0..clip.persons.len()).filter(|&n| clip.person_mask[n]).collect();
    (0..clip.num_frames)
        .map(|t| {
            let mut total = 0.0;
            let mut pairs = 0usize;
            for (a, &i) in valid.iter().enumerate() {
                for &j in &valid[a + 1..] {
                    let (xi, yi) = clip.persons[i].center(t);
                    let (xj, yj) = clip.persons[j].center(t);
                    total += ((xi - xj).powi(2) + (yi - yj).powi(2)).sqrt();
                    pairs += 1;
                }
            }
            if pairs == 0 {
                0.0
            } else {
                total / pairs as f64
            }
        })
        .collect()
}
