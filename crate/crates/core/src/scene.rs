//! Clip records, label vocabularies, file ingestion, padding/masking for
//! variable person and object counts, and optional keypoint smoothing.
//!
//! Clips are one JSON document each (schema below) and are immutable after
//! load. Coordinates are pixels; keypoint confidence lies in [0, 1].
//!
//! ```text
//! {"frame_size":[W,H], "num_frames":T,
//!  "persons":[{"boxes":[[x,y,w,h] x T], "keypoints":[[[x,y,c] x K] x T], "action":"name"}, ...],
//!  "objects":[{"coords":[[x,y] x T]}, ...],
//!  "group_activity":"name", "subgroups":[ids]}      // subgroups optional
//! ```

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::SceneError;

type Result<T> = std::result::Result<T, SceneError>;

/// Ordered class vocabularies for group activities and individual actions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSpace {
    pub group_classes: Vec<String>,
    pub individual_classes: Vec<String>,
}

impl LabelSpace {
    pub fn new(group: &[&str], individual: &[&str]) -> Self {
        LabelSpace {
            group_classes: group.iter().map(|s| s.to_string()).collect(),
            individual_classes: individual.iter().map(|s| s.to_string()).collect(),
        }
    }

    /// The 8 group activities and 9 individual actions of volleyball-style data.
    pub fn volleyball() -> Self {
        Self::new(
            &[
                "right_set",
                "right_pass",
                "right_spike",
                "right_winpoint",
                "left_set",
                "left_pass",
                "left_spike",
                "left_winpoint",
            ],
            &[
                "setting", "digging", "falling", "jumping", "blocking", "moving", "spiking",
                "waiting", "standing",
            ],
        )
    }

    /// The 5 group activities of collective-style data (no individual head).
    pub fn collective() -> Self {
        Self::new(&["waiting", "talking", "queuing", "crossing", "walking"], &[])
    }

    pub fn group_id(&self, name: &str) -> Result<usize> {
        self.group_classes
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| SceneError::UnknownLabel { name: name.to_string() })
    }

    pub fn individual_id(&self, name: &str) -> Result<usize> {
        self.individual_classes
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| SceneError::UnknownLabel { name: name.to_string() })
    }
}

/// Capacity and shape bounds a clip must satisfy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClipLimits {
    pub frames: usize,
    pub keypoints: usize,
    pub max_persons: usize,
    pub max_objects: usize,
}

/// One body joint observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub confidence: f64,
}

/// One person across all frames of a clip.
#[derive(Debug, Clone, PartialEq)]
pub struct PersonTrack {
    /// Bounding boxes `[x, y, w, h]`, one per frame.
    pub boxes: Vec<[f64; 4]>,
    /// `frames x keypoints` joint observations.
    pub keypoints: Vec<Vec<Keypoint>>,
    /// Individual action class id.
    pub action: usize,
}

impl PersonTrack {
    /// Zero-featured padding slot.
    pub fn padding(frames: usize, keypoints: usize) -> Self {
        PersonTrack {
            boxes: vec![[0.0; 4]; frames],
            keypoints: vec![vec![Keypoint { x: 0.0, y: 0.0, confidence: 0.0 }; keypoints]; frames],
            action: 0,
        }
    }

    /// Bounding-box center at frame `t`.
    pub fn center(&self, t: usize) -> (f64, f64) {
        let b = self.boxes[t];
        (b[0] + b[2] / 2.0, b[1] + b[3] / 2.0)
    }
}

/// One object (e.g. the ball) across all frames.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectTrack {
    pub coords: Vec<[f64; 2]>,
}

impl ObjectTrack {
    pub fn padding(frames: usize) -> Self {
        ObjectTrack { coords: vec![[0.0; 2]; frames] }
    }
}

/// A raw scene record: per-frame keypoints, boxes, object coordinates,
/// validity masks, and labels. Masks are constant across frames.
#[derive(Debug, Clone, PartialEq)]
pub struct Clip {
    pub frame_size: [f64; 2],
    pub num_frames: usize,
    pub persons: Vec<PersonTrack>,
    pub objects: Vec<ObjectTrack>,
    pub person_mask: Vec<bool>,
    pub object_mask: Vec<bool>,
    pub group_label: usize,
    /// Explicit subgroup membership, overriding the positional default.
    pub subgroups: Option<Vec<usize>>,
}

impl Clip {
    /// Joint validity: confident and inside the frame. Out-of-range joints
    /// are flagged rather than clamped.
    pub fn keypoint_valid(&self, person: usize, t: usize, k: usize) -> bool {
        if !self.person_mask[person] {
            return false;
        }
        let kp = &self.persons[person].keypoints[t][k];
        kp.confidence > 0.0
            && kp.x >= 0.0
            && kp.x <= self.frame_size[0]
            && kp.y >= 0.0
            && kp.y <= self.frame_size[1]
    }

    pub fn valid_person_count(&self) -> usize {
        self.person_mask.iter().filter(|&&m| m).count()
    }

    fn validate(&self, limits: &ClipLimits) -> Result<()> {
        if self.num_frames != limits.frames {
            return Err(SceneError::WrongFrameCount {
                got: self.num_frames,
                expected: limits.frames,
            });
        }
        if self.persons.len() > limits.max_persons {
            return Err(SceneError::CapacityExceeded {
                kind: "persons",
                got: self.persons.len(),
                capacity: limits.max_persons,
            });
        }
        if self.objects.len() > limits.max_objects {
            return Err(SceneError::CapacityExceeded {
                kind: "objects",
                got: self.objects.len(),
                capacity: limits.max_objects,
            });
        }
        for (i, p) in self.persons.iter().enumerate() {
            if p.boxes.len() != self.num_frames || p.keypoints.len() != self.num_frames {
                return Err(SceneError::Invalid(format!(
                    "person {i} does not span {} frames",
                    self.num_frames
                )));
            }
            for frame in &p.keypoints {
                if frame.len() != limits.keypoints {
                    return Err(SceneError::WrongKeypointCount {
                        person: i,
                        got: frame.len(),
                        expected: limits.keypoints,
                    });
                }
            }
        }
        for (i, o) in self.objects.iter().enumerate() {
            if o.coords.len() != self.num_frames {
                return Err(SceneError::Invalid(format!(
                    "object {i} does not span {} frames",
                    self.num_frames
                )));
            }
        }
        if let Some(sub) = &self.subgroups {
            if sub.len() != self.persons.len() {
                return Err(SceneError::Invalid(format!(
                    "subgroups lists {} persons, clip has {}",
                    sub.len(),
                    self.persons.len()
                )));
            }
        }
        Ok(())
    }
}

// ── wire format ───────────────────────────────────────────────────────

#[derive(Serialize, Deserialize)]
struct PersonWire {
    boxes: Vec<[f64; 4]>,
    keypoints: Vec<Vec<[f64; 3]>>,
    action: String,
}

#[derive(Serialize, Deserialize)]
struct ObjectWire {
    coords: Vec<[f64; 2]>,
}

#[derive(Serialize, Deserialize)]
struct ClipWire {
    frame_size: [f64; 2],
    num_frames: usize,
    persons: Vec<PersonWire>,
    objects: Vec<ObjectWire>,
    group_activity: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    subgroups: Option<Vec<usize>>,
}

/// Parses and fully validates a clip from JSON text.
pub fn parse_clip(json: &str, labels: &LabelSpace, limits: &ClipLimits) -> Result<Clip> {
    let wire: ClipWire = serde_json::from_str(json)
        .map_err(|e| SceneError::Malformed { path: "<string>".into(), details: e.to_string() })?;
    let group_label = labels.group_id(&wire.group_activity)?;
    let mut persons = Vec::with_capacity(wire.persons.len());
    for pw in wire.persons {
        let action = if labels.individual_classes.is_empty() {
            0
        } else {
            labels.individual_id(&pw.action)?
        };
        let keypoints = pw
            .keypoints
            .into_iter()
            .map(|frame| {
                frame
                    .into_iter()
                    .map(|[x, y, c]| Keypoint { x, y, confidence: c })
                    .collect::<Vec<_>>()
            })
            .collect();
        persons.push(PersonTrack { boxes: pw.boxes, keypoints, action });
    }
    let objects =
        wire.objects.into_iter().map(|ow| ObjectTrack { coords: ow.coords }).collect::<Vec<_>>();
    let clip = Clip {
        frame_size: wire.frame_size,
        num_frames: wire.num_frames,
        person_mask: vec![true; persons.len()],
        object_mask: vec![true; objects.len()],
        persons,
        objects,
        group_label,
        subgroups: wire.subgroups,
    };
    clip.validate(limits)?;
    Ok(clip)
}

/// Serializes a clip back to its JSON document. Padded slots are dropped so
/// that save/load round-trips the valid content bit-exactly.
pub fn clip_to_json(clip: &Clip, labels: &LabelSpace) -> Result<String> {
    let persons: Vec<PersonWire> = clip
        .persons
        .iter()
        .zip(&clip.person_mask)
        .filter(|(_, &m)| m)
        .map(|(p, _)| {
            let action = if labels.individual_classes.is_empty() {
                String::new()
            } else {
                labels
                    .individual_classes
                    .get(p.action)
                    .cloned()
                    .ok_or(SceneError::Invalid(format!("action id {} out of range", p.action)))?
            };
            Ok(PersonWire {
                boxes: p.boxes.clone(),
                keypoints: p
                    .keypoints
                    .iter()
                    .map(|frame| frame.iter().map(|k| [k.x, k.y, k.confidence]).collect())
                    .collect(),
                action,
            })
        })
        .collect::<Result<_>>()?;
    let objects: Vec<ObjectWire> = clip
        .objects
        .iter()
        .zip(&clip.object_mask)
        .filter(|(_, &m)| m)
        .map(|(o, _)| ObjectWire { coords: o.coords.clone() })
        .collect();
    let group_activity = clip
        .group_classes_name(labels)
        .ok_or(SceneError::Invalid(format!("group id {} out of range", clip.group_label)))?;
    let wire = ClipWire {
        frame_size: clip.frame_size,
        num_frames: clip.num_frames,
        persons,
        objects,
        group_activity,
        subgroups: clip.subgroups.clone(),
    };
    serde_json::to_string(&wire)
        .map_err(|e| SceneError::Malformed { path: "<serialize>".into(), details: e.to_string() })
}

impl Clip {
    fn group_classes_name(&self, labels: &LabelSpace) -> Option<String> {
        labels.group_classes.get(self.group_label).cloned()
    }
}

/// Loads and validates one clip file.
pub fn load_clip(path: &Path, labels: &LabelSpace, limits: &ClipLimits) -> Result<Clip> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| SceneError::Io { path: path.display().to_string(), source: e })?;
    parse_clip(&text, labels, limits).map_err(|e| match e {
        SceneError::Malformed { details, .. } => {
            SceneError::Malformed { path: path.display().to_string(), details }
        }
        other => other,
    })
}

/// Writes one clip file.
pub fn save_clip(path: &Path, clip: &Clip, labels: &LabelSpace) -> Result<()> {
    let json = clip_to_json(clip, labels)?;
    std::fs::write(path, json)
        .map_err(|e| SceneError::Io { path: path.display().to_string(), source: e })
}

/// Pads person and object slots up to the configured capacities. Padded
/// slots are zero-featured with mask false; valid-slot data is untouched.
pub fn pad_and_mask(clip: &Clip, limits: &ClipLimits) -> Clip {
    let mut out = clip.clone();
    while out.persons.len() < limits.max_persons {
        out.persons.push(PersonTrack::padding(out.num_frames, limits.keypoints));
        out.person_mask.push(false);
    }
    while out.objects.len() < limits.max_objects {
        out.objects.push(ObjectTrack::padding(out.num_frames));
        out.object_mask.push(false);
    }
    if let Some(sub) = &mut out.subgroups {
        while sub.len() < limits.max_persons {
            sub.push(0);
        }
    }
    out
}

/// Windowed-median smoothing of keypoint coordinates over valid frames.
/// Only interior frames where the full window fits are touched, so
/// trajectory endpoints are preserved. Labels, boxes, and confidences are
/// untouched.
pub fn temporal_smooth(clip: &Clip, window: usize) -> Result<Clip> {
    if window % 2 == 0 || window == 0 || window > clip.num_frames {
        return Err(SceneError::BadWindow { window });
    }
    if window == 1 {
        return Ok(clip.clone());
    }
    let half = window / 2;
    let mut out = clip.clone();
    for (n, person) in clip.persons.iter().enumerate() {
        if !clip.person_mask[n] {
            continue;
        }
        let k_count = person.keypoints.first().map_or(0, Vec::len);
        for k in 0..k_count {
            for t in half..clip.num_frames - half {
                let mut xs = Vec::with_capacity(window);
                let mut ys = Vec::with_capacity(window);
                for w in t - half..=t + half {
                    if clip.keypoint_valid(n, w, k) {
                        xs.push(person.keypoints[w][k].x);
                        ys.push(person.keypoints[w][k].y);
                    }
                }
                if xs.is_empty() {
                    continue;
                }
                out.persons[n].keypoints[t][k].x = lower_median(&mut xs);
                out.persons[n].keypoints[t][k].y = lower_median(&mut ys);
            }
        }
    }
    Ok(out)
}

/// Order statistic at index (len-1)/2: the exact median for odd counts, the
/// lower middle for even counts (even counts only arise when some window
/// frames are invalid).
fn lower_median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite coordinates"));
    values[(values.len() - 1) / 2]
}

/// Person-to-subgroup membership over all person slots.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubgroupAssignment {
    pub membership: Vec<usize>,
    pub subgroup_count: usize,
}

impl SubgroupAssignment {
    /// True subgroup occupancy over valid persons; empty subgroups flag false.
    pub fn subgroup_mask(&self, person_mask: &[bool]) -> Vec<bool> {
        let mut occupied = vec![false; self.subgroup_count];
        for (n, &m) in self.membership.iter().enumerate() {
            if person_mask.get(n).copied().unwrap_or(false) {
                occupied[m] = true;
            }
        }
        occupied
    }
}

/// Resolves subgroup membership. An explicit `subgroups` field in the clip
/// wins; otherwise valid persons are ordered by bounding-box center x at the
/// middle frame and split into `subgroup_count` contiguous runs (the default
/// count of 2 splits at the median x, i.e. court halves).
pub fn assign_subgroups(clip: &Clip, subgroup_count: usize) -> Result<SubgroupAssignment> {
    assert!(subgroup_count >= 1, "need at least one subgroup");
    if let Some(explicit) = &clip.subgroups {
        if let Some(&bad) = explicit.iter().find(|&&m| m >= subgroup_count) {
            return Err(SceneError::Invalid(format!(
                "subgroup id {bad} out of range for {subgroup_count} subgroups"
            )));
        }
        let mut membership = explicit.clone();
        membership.resize(clip.persons.len(), 0);
        return Ok(SubgroupAssignment { membership, subgroup_count });
    }
    let mid = clip.num_frames / 2;
    let mut valid: Vec<(f64, usize)> = clip
        .persons
        .iter()
        .enumerate()
        .filter(|(n, _)| clip.person_mask[*n])
        .map(|(n, p)| (p.center(mid).0, n))
        .collect();
    valid.sort_by(|a, b| a.partial_cmp(b).expect("finite centers"));
    let mut membership = vec![0usize; clip.persons.len()];
    let total = valid.len();
    for (rank, &(_, n)) in valid.iter().enumerate() {
        // Contiguous runs, earlier runs take the remainder.
        membership[n] = rank * subgroup_count / total.max(1);
    }
    Ok(SubgroupAssignment { membership, subgroup_count })
}
