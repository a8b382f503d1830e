//! Trajectory and scene types, scene-document ingestion, uniform resampling
//! and invariant validation.
//!
//! All positions live in a local planar Cartesian frame in SI units. A track's
//! reference point is the centre of its rectangular footprint.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conflict::ConflictType;
use crate::crash::SeverityLevel;
use crate::geometry::{heading_vector, wrap_angle, Obb, Polyline, Vec2};

pub const MIN_TRACK_DURATION_S: f64 = 0.5;
pub const MIN_OVERLAP_S: f64 = 0.5;
/// Derived longitudinal acceleration is clamped to this magnitude.
pub const ACCEL_CLAMP_MPS2: f64 = 12.0;
pub const DEFAULT_DT_S: f64 = 0.05;

const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentClass {
    PassengerVehicle,
    Truck,
    Motorcycle,
    Cyclist,
    Pedestrian,
}

impl AgentClass {
    pub const ALL: [AgentClass; 5] = [
        AgentClass::PassengerVehicle,
        AgentClass::Truck,
        AgentClass::Motorcycle,
        AgentClass::Cyclist,
        AgentClass::Pedestrian,
    ];

    /// Vulnerable road users. Motorcycles are treated as vehicles.
    pub fn is_vru(self) -> bool {
        matches!(self, AgentClass::Cyclist | AgentClass::Pedestrian)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AgentClass::PassengerVehicle => "passenger_vehicle",
            AgentClass::Truck => "truck",
            AgentClass::Motorcycle => "motorcycle",
            AgentClass::Cyclist => "cyclist",
            AgentClass::Pedestrian => "pedestrian",
        }
    }
}

impl fmt::Display for AgentClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySample {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
    pub accel_long: f64,
}

impl TrajectorySample {
    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }
}

/// Interpolated kinematic state of a track at an arbitrary time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KinematicState {
    pub t: f64,
    pub position: Vec2,
    pub heading: f64,
    pub speed: f64,
    pub accel_long: f64,
}

impl KinematicState {
    pub fn velocity(&self) -> Vec2 {
        heading_vector(self.heading) * self.speed
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentTrack {
    pub agent_id: String,
    pub agent_class: AgentClass,
    pub length: f64,
    pub width: f64,
    pub mass: Option<f64>,
    pub samples: Vec<TrajectorySample>,
}

impl AgentTrack {
    pub fn start_time(&self) -> f64 {
        self.samples.first().map_or(0.0, |s| s.t)
    }

    pub fn end_time(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.t)
    }

    pub fn duration(&self) -> f64 {
        self.end_time() - self.start_time()
    }

    /// Index `i` such that `samples[i].t <= t < samples[i + 1].t`, clamped
    /// to the valid segment range.
    fn segment_at(&self, t: f64) -> usize {
        let n = self.samples.len();
        let i = self.samples.partition_point(|s| s.t <= t);
        i.saturating_sub(1).min(n.saturating_sub(2))
    }

    /// Linearly interpolated state; heading is interpolated along the
    /// shorter arc. Times outside the track are clamped to its ends.
    pub fn state_at(&self, t: f64) -> KinematicState {
        let first = &self.samples[0];
        if self.samples.len() == 1 || t <= first.t {
            return state_of(first);
        }
        let last = &self.samples[self.samples.len() - 1];
        if t >= last.t {
            return state_of(last);
        }
        let i = self.segment_at(t);
        let a = &self.samples[i];
        let b = &self.samples[i + 1];
        let f = (t - a.t) / (b.t - a.t);
        KinematicState {
            t,
            position: a.position() + (b.position() - a.position()) * f,
            heading: wrap_angle(a.heading + f * wrap_angle(b.heading - a.heading)),
            speed: a.speed + f * (b.speed - a.speed),
            accel_long: a.accel_long + f * (b.accel_long - a.accel_long),
        }
    }

    /// Yaw rate from the heading change across the bracketing samples.
    pub fn yaw_rate_at(&self, t: f64) -> f64 {
        if self.samples.len() < 2 {
            return 0.0;
        }
        let i = self.segment_at(t);
        let a = &self.samples[i];
        let b = &self.samples[i + 1];
        wrap_angle(b.heading - a.heading) / (b.t - a.t)
    }

    pub fn footprint(&self, state: &KinematicState) -> Obb {
        Obb::new(state.position, state.heading, self.length, self.width)
    }

    pub fn footprint_at(&self, t: f64) -> Obb {
        self.footprint(&self.state_at(t))
    }

    /// The logged path as an arc-length polyline.
    pub fn path(&self) -> Polyline {
        let fallback = self.samples.last().map_or(0.0, |s| s.heading);
        Polyline::new(self.samples.iter().map(|s| s.position()), fallback)
    }

    /// True when consecutive samples are spaced `dt` apart (to 1e-9 s).
    pub fn is_uniform(&self, dt: f64) -> bool {
        self.samples
            .windows(2)
            .all(|w| ((w[1].t - w[0].t) - dt).abs() <= TIME_EPS)
    }
}

fn state_of(s: &TrajectorySample) -> KinematicState {
    KinematicState {
        t: s.t,
        position: s.position(),
        heading: s.heading,
        speed: s.speed,
        accel_long: s.accel_long,
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Annotations {
    pub conflict_type: Option<ConflictType>,
    pub initiator_id: Option<String>,
    pub responder_id: Option<String>,
    pub por_t: Option<f64>,
    pub gt_severity: Option<SeverityLevel>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConflictScene {
    pub scene_id: String,
    pub track_a: AgentTrack,
    pub track_b: AgentTrack,
    pub annotations: Annotations,
}

impl ConflictScene {
    pub fn tracks(&self) -> [&AgentTrack; 2] {
        [&self.track_a, &self.track_b]
    }

    pub fn track(&self, agent_id: &str) -> Option<&AgentTrack> {
        self.tracks().into_iter().find(|t| t.agent_id == agent_id)
    }

    /// The track that is not `agent_id`.
    pub fn other(&self, agent_id: &str) -> Option<&AgentTrack> {
        if self.track_a.agent_id == agent_id {
            Some(&self.track_b)
        } else if self.track_b.agent_id == agent_id {
            Some(&self.track_a)
        } else {
            None
        }
    }

    /// Start and end of the interval both tracks cover.
    pub fn common_span(&self) -> (f64, f64) {
        common_span(&self.track_a, &self.track_b)
    }
}

pub fn common_span(a: &AgentTrack, b: &AgentTrack) -> (f64, f64) {
    (
        a.start_time().max(b.start_time()),
        a.end_time().min(b.end_time()),
    )
}

/// A single invariant violation, located by document path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub invariant: String,
    pub location: String,
}

impl Violation {
    fn new(invariant: impl Into<String>, location: impl Into<String>) -> Self {
        Self {
            invariant: invariant.into(),
            location: location.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.invariant)
    }
}

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("malformed scene document: {0}")]
    Malformed(#[from] serde_json::Error),
    #[error("scene must contain exactly 2 tracks, found {0}")]
    TrackCount(usize),
    #[error("{location}: {reason}")]
    BadField { location: String, reason: String },
    #[error("invalid scene: {}", join_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("resample step must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("resample step {dt} s exceeds track duration {duration} s")]
    StepExceedsDuration { dt: f64, duration: f64 },
}

fn join_violations(v: &[Violation]) -> String {
    v.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

// ---------------------------------------------------------------------------
// Document format
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneDoc {
    scene_id: String,
    tracks: Vec<TrackDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    annotations: Option<AnnotationsDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrackDoc {
    agent_id: String,
    agent_class: AgentClass,
    length_m: f64,
    width_m: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mass_kg: Option<f64>,
    samples: Vec<SampleDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum SampleDoc {
    Row(Vec<f64>),
    Fields {
        t_s: f64,
        x_m: f64,
        y_m: f64,
        heading_rad: f64,
        speed_mps: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        accel_mps2: Option<f64>,
    },
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AnnotationsDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    conflict_type: Option<ConflictType>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    initiator_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    responder_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    por_t_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gt_severity: Option<SeverityLevel>,
}

/// Parses and validates a scene document.
pub fn parse_scene(source: &[u8]) -> Result<ConflictScene, SceneError> {
    let doc: SceneDoc = serde_json::from_slice(source)?;
    if doc.tracks.len() != 2 {
        return Err(SceneError::TrackCount(doc.tracks.len()));
    }
    let mut tracks = doc
        .tracks
        .into_iter()
        .enumerate()
        .map(|(i, t)| track_from_doc(i, t))
        .collect::<Result<Vec<_>, _>>()?;
    let track_b = tracks.pop().expect("two tracks");
    let track_a = tracks.pop().expect("two tracks");
    let a = doc.annotations.unwrap_or_default();
    let scene = ConflictScene {
        scene_id: doc.scene_id,
        track_a,
        track_b,
        annotations: Annotations {
            conflict_type: a.conflict_type,
            initiator_id: a.initiator_id,
            responder_id: a.responder_id,
            por_t: a.por_t_s,
            gt_severity: a.gt_severity,
        },
    };
    let violations = validate_scene(&scene);
    if violations.is_empty() {
        Ok(scene)
    } else {
        Err(SceneError::Invalid(violations))
    }
}

fn track_from_doc(index: usize, doc: TrackDoc) -> Result<AgentTrack, SceneError> {
    let mut samples = Vec::with_capacity(doc.samples.len());
    let mut missing_accel = false;
    for (j, s) in doc.samples.into_iter().enumerate() {
        let sample = match s {
            SampleDoc::Row(row) => {
                if row.len() != 5 {
                    return Err(SceneError::BadField {
                        location: format!("tracks[{index}].samples[{j}]"),
                        reason: format!(
                            "sample rows must be [t_s, x_m, y_m, heading_rad, speed_mps], got {} values",
                            row.len()
                        ),
                    });
                }
                missing_accel = true;
                TrajectorySample {
                    t: row[0],
                    x: row[1],
                    y: row[2],
                    heading: wrap_angle(row[3]),
                    speed: row[4],
                    accel_long: f64::NAN,
                }
            }
            SampleDoc::Fields {
                t_s,
                x_m,
                y_m,
                heading_rad,
                speed_mps,
                accel_mps2,
            } => {
                missing_accel |= accel_mps2.is_none();
                TrajectorySample {
                    t: t_s,
                    x: x_m,
                    y: y_m,
                    heading: wrap_angle(heading_rad),
                    speed: speed_mps,
                    accel_long: accel_mps2.unwrap_or(f64::NAN),
                }
            }
        };
        samples.push(sample);
    }
    if missing_accel {
        let derived = derived_accel(&samples);
        for (s, a) in samples.iter_mut().zip(derived) {
            if s.accel_long.is_nan() {
                s.accel_long = a;
            }
        }
    }
    Ok(AgentTrack {
        agent_id: doc.agent_id,
        agent_class: doc.agent_class,
        length: doc.length_m,
        width: doc.width_m,
        mass: doc.mass_kg,
        samples,
    })
}

/// Serialises a scene to the canonical document form (object samples with
/// explicit acceleration).
pub fn serialize_scene(scene: &ConflictScene) -> String {
    let tracks = scene
        .tracks()
        .into_iter()
        .map(|t| TrackDoc {
            agent_id: t.agent_id.clone(),
            agent_class: t.agent_class,
            length_m: t.length,
            width_m: t.width,
            mass_kg: t.mass,
            samples: t
                .samples
                .iter()
                .map(|s| SampleDoc::Fields {
                    t_s: s.t,
                    x_m: s.x,
                    y_m: s.y,
                    heading_rad: s.heading,
                    speed_mps: s.speed,
                    accel_mps2: Some(s.accel_long),
                })
                .collect(),
        })
        .collect();
    let a = &scene.annotations;
    let annotations = (a != &Annotations::default()).then(|| AnnotationsDoc {
        conflict_type: a.conflict_type,
        initiator_id: a.initiator_id.clone(),
        responder_id: a.responder_id.clone(),
        por_t_s: a.por_t,
        gt_severity: a.gt_severity,
    });
    let doc = SceneDoc {
        scene_id: scene.scene_id.clone(),
        tracks,
        annotations,
    };
    serde_json::to_string_pretty(&doc).expect("scene documents always serialise")
}

/// Central-difference longitudinal acceleration (one-sided at the ends),
/// clamped to +/-12 m/s^2.
pub fn derived_accel(samples: &[TrajectorySample]) -> Vec<f64> {
    let n = samples.len();
    (0..n)
        .map(|i| {
            if n < 2 {
                return 0.0;
            }
            let (lo, hi) = match i {
                0 => (0, 1),
                _ if i == n - 1 => (n - 2, n - 1),
                _ => (i - 1, i + 1),
            };
            let dt = samples[hi].t - samples[lo].t;
            let a = if dt > 0.0 {
                (samples[hi].speed - samples[lo].speed) / dt
            } else {
                0.0
            };
            a.clamp(-ACCEL_CLAMP_MPS2, ACCEL_CLAMP_MPS2)
        })
        .collect()
}

/// Resamples a track on a uniform grid of step `dt` anchored at its first
/// sample. Tracks already uniform at `dt` are returned unchanged.
pub fn resample_track(track: &AgentTrack, dt: f64) -> Result<AgentTrack, SceneError> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(SceneError::InvalidStep(dt));
    }
    let duration = track.duration();
    if dt > duration + TIME_EPS {
        return Err(SceneError::StepExceedsDuration { dt, duration });
    }
    if track.is_uniform(dt) {
        return Ok(track.clone());
    }
    let t0 = track.start_time();
    let steps = (duration / dt + TIME_EPS).floor() as usize;
    let mut samples: Vec<TrajectorySample> = (0..=steps)
        .map(|k| {
            let t = t0 + k as f64 * dt;
            let s = track.state_at(t);
            TrajectorySample {
                t,
                x: s.position.x,
                y: s.position.y,
                heading: s.heading,
                speed: s.speed,
                accel_long: 0.0,
            }
        })
        .collect();
    let accel = derived_accel(&samples);
    for (s, a) in samples.iter_mut().zip(accel) {
        s.accel_long = a;
    }
    Ok(AgentTrack {
        samples,
        ..track.clone()
    })
}

/// Resamples both tracks of a scene.
pub fn resample_scene(scene: &ConflictScene, dt: f64) -> Result<ConflictScene, SceneError> {
    Ok(ConflictScene {
        track_a: resample_track(&scene.track_a, dt)?,
        track_b: resample_track(&scene.track_b, dt)?,
        ..scene.clone()
    })
}

/// Lists every violated scene invariant. An empty list means the scene is
/// valid.
pub fn validate_scene(scene: &ConflictScene) -> Vec<Violation> {
    let mut out = Vec::new();
    for (i, track) in scene.tracks().into_iter().enumerate() {
        validate_track(&format!("tracks[{i}]"), track, &mut out);
    }
    if scene.track_a.agent_id == scene.track_b.agent_id {
        out.push(Violation::new("agent ids must differ", "tracks"));
    }
    if scene.track_a.samples.len() >= 2 && scene.track_b.samples.len() >= 2 {
        let (start, end) = scene.common_span();
        if end - start < MIN_OVERLAP_S - TIME_EPS {
            out.push(Violation::new(
                format!(
                    "insufficient temporal overlap ({:.3} s < {MIN_OVERLAP_S} s)",
                    (end - start).max(0.0)
                ),
                "tracks",
            ));
        }
    }
    let a = &scene.annotations;
    let known = |id: &str| scene.track(id).is_some();
    if let Some(id) = &a.initiator_id {
        if !known(id) {
            out.push(Violation::new(
                format!("initiator `{id}` matches no track"),
                "annotations.initiator_id",
            ));
        }
    }
    if let Some(id) = &a.responder_id {
        if !known(id) {
            out.push(Violation::new(
                format!("responder `{id}` matches no track"),
                "annotations.responder_id",
            ));
        }
    }
    if let (Some(i), Some(r)) = (&a.initiator_id, &a.responder_id) {
        if i == r {
            out.push(Violation::new(
                "initiator and responder must differ",
                "annotations",
            ));
        }
    }
    if let Some(t) = a.por_t {
        if !t.is_finite() {
            out.push(Violation::new("por_t_s must be finite", "annotations.por_t_s"));
        }
    }
    out
}

fn validate_track(loc: &str, track: &AgentTrack, out: &mut Vec<Violation>) {
    if !(track.length.is_finite() && track.length > 0.0) {
        out.push(Violation::new("footprint length must be positive", format!("{loc}.length_m")));
    }
    if !(track.width.is_finite() && track.width > 0.0) {
        out.push(Violation::new("footprint width must be positive", format!("{loc}.width_m")));
    }
    if let Some(m) = track.mass {
        if !(m.is_finite() && m > 0.0) {
            out.push(Violation::new("mass must be positive", format!("{loc}.mass_kg")));
        }
    }
    if track.samples.len() < 2 {
        out.push(Violation::new("at least two samples required", format!("{loc}.samples")));
        return;
    }
    for (j, s) in track.samples.iter().enumerate() {
        let at = format!("{loc}.samples[{j}]");
        let finite = [s.t, s.x, s.y, s.heading, s.speed, s.accel_long]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            out.push(Violation::new("sample values must be finite", at));
            continue;
        }
        if j > 0 && s.t <= track.samples[j - 1].t {
            out.push(Violation::new("timestamps must strictly increase", at.clone()));
        }
        if s.speed < 0.0 {
            out.push(Violation::new("speed must be non-negative", at.clone()));
        }
        if !(s.heading > -std::f64::consts::PI && s.heading <= std::f64::consts::PI) {
            out.push(Violation::new("heading must lie in (-pi, pi]", at));
        }
    }
    if track.duration() < MIN_TRACK_DURATION_S - TIME_EPS {
        out.push(Violation::new(
            format!("track duration below {MIN_TRACK_DURATION_S} s"),
            format!("{loc}.samples"),
        ));
    }
}
