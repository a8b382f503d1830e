//! Seeded synthetic conflict generator.
//!
//! Each family is built in a local frame (responder driving along +x), then
//! moved by a random rigid transform. A draw is kept only if the unannotated
//! heuristics recover the family, the constructed initiator and (for
//! rear-end and cut-in) the constructed PoR, and the no-reaction responder
//! does not touch the initiator before the PoR. The GT responder is then
//! synthesised from the base track and its severity is whatever
//! [`gt_outcome`] reports.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::behavior::{enumerate_cells, respond, sample_cell, BehaviorModel, CellParams, ReactionParams};
use crate::config::EngineConfig;
use crate::conflict::{analyze_scene, ConflictType};
use crate::crash::{detect_collision, gt_outcome};
use crate::geometry::{wrap_angle, Vec2};
use crate::scene::{validate_scene, AgentClass, AgentTrack, Annotations, ConflictScene, TrajectorySample};

pub const MAX_ATTEMPTS: usize = 1000;
const LANE_WIDTH_M: f64 = 3.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioFamily {
    RearEndLeadBrake,
    CrossingStraight,
    CutIn,
    VruCrossing,
}

impl ScenarioFamily {
    pub const ALL: [ScenarioFamily; 4] = [
        ScenarioFamily::RearEndLeadBrake,
        ScenarioFamily::CrossingStraight,
        ScenarioFamily::CutIn,
        ScenarioFamily::VruCrossing,
    ];

    pub fn conflict_type(self) -> ConflictType {
        match self {
            ScenarioFamily::RearEndLeadBrake => ConflictType::RearEndLeadBrake,
            ScenarioFamily::CrossingStraight => ConflictType::CrossingStraight,
            ScenarioFamily::CutIn => ConflictType::CutIn,
            ScenarioFamily::VruCrossing => ConflictType::VruCrossing,
        }
    }
}

impl fmt::Display for ScenarioFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.conflict_type().as_str())
    }
}

/// Closed interval `[lo, hi]`; `lo == hi` pins the value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub const fn fixed(v: f64) -> Self {
        Self { lo: v, hi: v }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.hi > self.lo {
            rng.gen_range(self.lo..=self.hi)
        } else {
            self.lo
        }
    }

    fn is_valid(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite() && self.lo <= self.hi
    }
}

impl From<[f64; 2]> for Range {
    fn from([lo, hi]: [f64; 2]) -> Self {
        Self { lo, hi }
    }
}

impl From<Range> for [f64; 2] {
    fn from(r: Range) -> Self {
        [r.lo, r.hi]
    }
}

/// What the rear-end `gap_m` is measured from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapReference {
    /// Bumper-to-bumper distance at the start of the scene.
    Bumper,
    /// Distance beyond the lead's braking distance, so the lead is at rest
    /// before a non-reacting follower reaches it.
    BeyondLeadStop,
}

/// How the GT responder reacts after the PoR.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum GtMode {
    FromModel,
    FixedParams(ReactionParams),
    Nonreactive,
}

/// Which fields a family reads:
///
/// - rear-end: `responder_speed_mps` (both agents), `gap_m` (see
///   `gap_reference`), `lead_decel_mps2`, `event_time_s` (brake onset);
/// - cut-in: `responder_speed_mps`, `initiator_speed_mps`, `gap_m`,
///   `event_time_s` (lane-change start), `lateral_speed_mps`. Draws where
///   the responder would draw level before the lane change ends are
///   rejected;
/// - crossing and VRU crossing: `responder_speed_mps`,
///   `initiator_speed_mps`, `approach_angle_deg`, `event_time_s` (initiator
///   reaches the conflict point), `arrival_offset_s` (responder lag). A VRU
///   slower than 3 m/s is a pedestrian, otherwise a cyclist.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticScenarioSpec {
    pub family: ScenarioFamily,
    pub responder_speed_mps: Range,
    pub initiator_speed_mps: Range,
    pub gap_m: Range,
    pub gap_reference: GapReference,
    pub lead_decel_mps2: Range,
    pub event_time_s: Range,
    pub approach_angle_deg: Range,
    pub arrival_offset_s: Range,
    pub lateral_speed_mps: Range,
    pub gt_mode: GtMode,
}

/// Same fields, all optional; missing ones take the family defaults.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecOverrides {
    family: ScenarioFamily,
    responder_speed_mps: Option<Range>,
    initiator_speed_mps: Option<Range>,
    gap_m: Option<Range>,
    gap_reference: Option<GapReference>,
    lead_decel_mps2: Option<Range>,
    event_time_s: Option<Range>,
    approach_angle_deg: Option<Range>,
    arrival_offset_s: Option<Range>,
    lateral_speed_mps: Option<Range>,
    gt_mode: Option<GtMode>,
}

impl SyntheticScenarioSpec {
    /// Default ranges, chosen so that the time from PoR to contact overlaps
    /// the bulk of the placeholder reaction-time distribution.
    pub fn for_family(family: ScenarioFamily) -> Self {
        let base = Self {
            family,
            responder_speed_mps: Range::new(10.0, 20.0),
            initiator_speed_mps: Range::new(6.0, 14.0),
            gap_m: Range::new(0.0, 25.0),
            gap_reference: GapReference::BeyondLeadStop,
            lead_decel_mps2: Range::new(-8.0, -4.0),
            event_time_s: Range::new(1.0, 2.0),
            approach_angle_deg: Range::new(60.0, 120.0),
            arrival_offset_s: Range::new(0.0, 0.8),
            lateral_speed_mps: Range::new(0.8, 2.0),
            gt_mode: GtMode::FromModel,
        };
        match family {
            ScenarioFamily::RearEndLeadBrake => base,
            ScenarioFamily::CutIn => Self {
                responder_speed_mps: Range::new(14.0, 22.0),
                initiator_speed_mps: Range::new(8.0, 14.0),
                gap_m: Range::new(10.0, 40.0),
                gap_reference: GapReference::Bumper,
                event_time_s: Range::new(0.5, 1.5),
                lateral_speed_mps: Range::new(1.0, 2.5),
                ..base
            },
            ScenarioFamily::CrossingStraight => Self {
                initiator_speed_mps: Range::new(2.0, 7.0),
                event_time_s: Range::new(3.0, 5.0),
                arrival_offset_s: Range::new(-0.3, 2.0),
                ..base
            },
            ScenarioFamily::VruCrossing => Self {
                responder_speed_mps: Range::new(8.0, 16.0),
                initiator_speed_mps: Range::new(1.0, 6.0),
                approach_angle_deg: Range::new(70.0, 110.0),
                event_time_s: Range::new(3.0, 5.0),
                arrival_offset_s: Range::new(0.0, 2.0),
                ..base
            },
        }
    }

    pub fn validate(&self) -> Result<(), GenerateError> {
        let fields = [
            ("responder_speed_mps", self.responder_speed_mps, self.responder_speed_mps.lo > 0.0),
            ("initiator_speed_mps", self.initiator_speed_mps, self.initiator_speed_mps.lo > 0.0),
            ("gap_m", self.gap_m, self.gap_m.lo >= 0.0),
            ("lead_decel_mps2", self.lead_decel_mps2, self.lead_decel_mps2.hi < 0.0),
            ("event_time_s", self.event_time_s, self.event_time_s.lo >= 0.0),
            (
                "approach_angle_deg",
                self.approach_angle_deg,
                self.approach_angle_deg.lo > 0.0 && self.approach_angle_deg.hi < 180.0,
            ),
            ("arrival_offset_s", self.arrival_offset_s, true),
            ("lateral_speed_mps", self.lateral_speed_mps, self.lateral_speed_mps.lo > 0.0),
        ];
        for (name, range, sane) in fields {
            if !range.is_valid() || !sane {
                return Err(GenerateError::InvalidSpec(format!(
                    "{name} = [{}, {}] is out of range",
                    range.lo, range.hi
                )));
            }
        }
        if let GtMode::FixedParams(p) = self.gt_mode {
            if !(p.hrt >= 0.0 && p.jerk < 0.0 && p.a_ss < 0.0) {
                return Err(GenerateError::InvalidSpec(
                    "fixed GT params need hrt >= 0, jerk < 0, a_ss < 0".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Parses a spec (TOML, or JSON when it starts with `{`). Only `family` is
/// required.
pub fn parse_spec(bytes: &[u8]) -> Result<SyntheticScenarioSpec, GenerateError> {
    let text = std::str::from_utf8(bytes)
        .map_err(|_| GenerateError::InvalidSpec("spec is not valid UTF-8".into()))?;
    let o: SpecOverrides = if text.trim_start().starts_with('{') {
        serde_json::from_str(text).map_err(|e| GenerateError::InvalidSpec(e.to_string()))?
    } else {
        toml::from_str(text).map_err(|e| GenerateError::InvalidSpec(e.to_string()))?
    };
    let d = SyntheticScenarioSpec::for_family(o.family);
    let spec = SyntheticScenarioSpec {
        family: o.family,
        responder_speed_mps: o.responder_speed_mps.unwrap_or(d.responder_speed_mps),
        initiator_speed_mps: o.initiator_speed_mps.unwrap_or(d.initiator_speed_mps),
        gap_m: o.gap_m.unwrap_or(d.gap_m),
        gap_reference: o.gap_reference.unwrap_or(d.gap_reference),
        lead_decel_mps2: o.lead_decel_mps2.unwrap_or(d.lead_decel_mps2),
        event_time_s: o.event_time_s.unwrap_or(d.event_time_s),
        approach_angle_deg: o.approach_angle_deg.unwrap_or(d.approach_angle_deg),
        arrival_offset_s: o.arrival_offset_s.unwrap_or(d.arrival_offset_s),
        lateral_speed_mps: o.lateral_speed_mps.unwrap_or(d.lateral_speed_mps),
        gt_mode: o.gt_mode.unwrap_or(d.gt_mode),
    };
    spec.validate()?;
    Ok(spec)
}

#[derive(Debug, Error, PartialEq)]
pub enum GenerateError {
    #[error("invalid scenario spec: {0}")]
    InvalidSpec(String),
    #[error("{family}: no usable conflict after {attempts} attempts (last rejection: {last})")]
    NoConflict {
        family: ScenarioFamily,
        attempts: usize,
        last: String,
    },
    #[error("behavior model has no cells for {0}")]
    EmptyLattice(ConflictType),
    #[error("evaluation failed: {0}")]
    Evaluation(String),
}

/// Position, heading, speed and acceleration at time `t` in the local frame.
type Kinematics = (Vec2, f64, f64, f64);

struct Actor {
    id: &'static str,
    class: AgentClass,
    length: f64,
    width: f64,
}

struct Draft {
    responder: AgentTrack,
    initiator: AgentTrack,
    construction_por: Option<f64>,
}

fn grid(dt: f64, duration: f64) -> Vec<f64> {
    let n = (duration / dt).ceil() as usize;
    (0..=n).map(|k| k as f64 * dt).collect()
}

fn snap(t: f64, dt: f64) -> f64 {
    (t / dt).round() * dt
}

fn build_track(actor: &Actor, times: &[f64], f: impl Fn(f64) -> Kinematics) -> AgentTrack {
    let samples = times
        .iter()
        .map(|&t| {
            let (p, heading, speed, accel_long) = f(t);
            TrajectorySample {
                t,
                x: p.x,
                y: p.y,
                heading,
                speed,
                accel_long,
            }
        })
        .collect();
    AgentTrack {
        agent_id: actor.id.to_string(),
        agent_class: actor.class,
        length: actor.length,
        width: actor.width,
        mass: None,
        samples,
    }
}

fn car<R: Rng + ?Sized>(id: &'static str, rng: &mut R) -> Actor {
    Actor {
        id,
        class: AgentClass::PassengerVehicle,
        length: rng.gen_range(4.4..=5.0),
        width: rng.gen_range(1.8..=2.0),
    }
}

/// Assigns the `agent_a`/`agent_b` ids at random so track order carries no
/// role information.
fn ids<R: Rng + ?Sized>(rng: &mut R) -> (&'static str, &'static str) {
    if rng.gen_bool(0.5) {
        ("agent_a", "agent_b")
    } else {
        ("agent_b", "agent_a")
    }
}

fn draw_rear_end<R: Rng + ?Sized>(spec: &SyntheticScenarioSpec, dt: f64, rng: &mut R) -> Draft {
    let (rid, iid) = ids(rng);
    let follower = car(rid, rng);
    let lead = car(iid, rng);
    let v = spec.responder_speed_mps.sample(rng);
    let gap = spec.gap_m.sample(rng);
    let decel = spec.lead_decel_mps2.sample(rng).abs();
    let t_b = snap(spec.event_time_s.sample(rng), dt);
    let t_stop = v / decel;
    let gap = match spec.gap_reference {
        GapReference::Bumper => gap,
        GapReference::BeyondLeadStop => gap + v * v / (2.0 * decel),
    };
    let arrival = (gap + v * v / (2.0 * decel)) / v + 1.0;
    let duration = t_b + (3.0 + v / 2.5 + 1.5_f64).max(arrival);
    let times = grid(dt, duration);
    let x0 = 0.5 * follower.length + gap + 0.5 * lead.length;

    let responder = build_track(&follower, &times, |t| (Vec2::new(v * t, 0.0), 0.0, v, 0.0));
    let initiator = build_track(&lead, &times, |t| {
        if t < t_b {
            return (Vec2::new(x0 + v * t, 0.0), 0.0, v, 0.0);
        }
        let tau = (t - t_b).min(t_stop);
        let x = x0 + v * t_b + v * tau - 0.5 * decel * tau * tau;
        let braking = t - t_b < t_stop;
        let speed = if braking { v - decel * (t - t_b) } else { 0.0 };
        (Vec2::new(x, 0.0), 0.0, speed, if braking { -decel } else { 0.0 })
    });
    Draft {
        responder,
        initiator,
        construction_por: Some(t_b),
    }
}

fn draw_cut_in<R: Rng + ?Sized>(
    spec: &SyntheticScenarioSpec,
    dt: f64,
    rng: &mut R,
) -> Result<Draft, String> {
    let (rid, iid) = ids(rng);
    let ego = car(rid, rng);
    let cutter = car(iid, rng);
    let v_r = spec.responder_speed_mps.sample(rng);
    let v_i = spec.initiator_speed_mps.sample(rng);
    let gap = spec.gap_m.sample(rng);
    let t_c = snap(spec.event_time_s.sample(rng), dt);
    let v_lat = spec.lateral_speed_mps.sample(rng);
    let side = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    let y0 = side * LANE_WIDTH_M;
    let t_in = t_c + LANE_WIDTH_M / v_lat;
    if gap <= (v_r - v_i) * t_in {
        return Err("responder draws level before the lane change completes".into());
    }
    let x0 = 0.5 * ego.length + gap + 0.5 * cutter.length;
    let closing = (v_r - v_i).max(0.5);
    let duration = t_c + (3.0 + v_r / 2.5 + 1.5_f64).max(gap / closing + LANE_WIDTH_M / v_lat + 1.0);
    let times = grid(dt, duration);

    let responder = build_track(&ego, &times, |t| (Vec2::new(v_r * t, 0.0), 0.0, v_r, 0.0));
    let initiator = build_track(&cutter, &times, |t| {
        let x = x0 + v_i * t;
        if t < t_c {
            (Vec2::new(x, y0), 0.0, v_i, 0.0)
        } else if t < t_in {
            let vy = -side * v_lat;
            let y = y0 + vy * (t - t_c);
            (Vec2::new(x, y), vy.atan2(v_i), v_i.hypot(v_lat), 0.0)
        } else {
            (Vec2::new(x, 0.0), 0.0, v_i, 0.0)
        }
    });
    Ok(Draft {
        responder,
        initiator,
        construction_por: Some(t_c),
    })
}

fn draw_crossing<R: Rng + ?Sized>(spec: &SyntheticScenarioSpec, dt: f64, rng: &mut R) -> Draft {
    let (rid, iid) = ids(rng);
    let ego = car(rid, rng);
    let v_r = spec.responder_speed_mps.sample(rng);
    let v_i = spec.initiator_speed_mps.sample(rng);
    let other = match spec.family {
        ScenarioFamily::VruCrossing if v_i < 3.0 => Actor {
            id: iid,
            class: AgentClass::Pedestrian,
            length: 0.5,
            width: 0.6,
        },
        ScenarioFamily::VruCrossing => Actor {
            id: iid,
            class: AgentClass::Cyclist,
            length: 1.8,
            width: 0.6,
        },
        _ => car(iid, rng),
    };
    let side = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    let theta = side * spec.approach_angle_deg.sample(rng).to_radians();
    let t_x = spec.event_time_s.sample(rng);
    let t_r = t_x + spec.arrival_offset_s.sample(rng);
    let clear = (other.length + ego.width + 2.0) / (v_i * theta.sin().abs());
    let duration = (t_r + 3.0).max(t_x + clear + 1.0);
    let times = grid(dt, duration);
    let dir = Vec2::new(theta.cos(), theta.sin());

    let responder = build_track(&ego, &times, |t| (Vec2::new(v_r * (t - t_r), 0.0), 0.0, v_r, 0.0));
    let initiator = build_track(&other, &times, |t| (dir * (v_i * (t - t_x)), theta, v_i, 0.0));
    Draft {
        responder,
        initiator,
        construction_por: None,
    }
}

fn rigid_transform(track: &mut AgentTrack, rotation: f64, offset: Vec2) {
    let (s, c) = rotation.sin_cos();
    for sample in &mut track.samples {
        let (x, y) = (sample.x, sample.y);
        sample.x = c * x - s * y + offset.x;
        sample.y = s * x + c * y + offset.y;
        sample.heading = wrap_angle(sample.heading + rotation);
    }
}

fn scene_id(family: ScenarioFamily, seed: u64, index: usize) -> String {
    format!("{family}-s{seed}-{index:05}")
}

/// Generates scene `index` of the corpus defined by `(spec, seed)`. The
/// kinematics and the GT reaction draw use independent random streams, so
/// rejections never bias the GT parameters.
pub fn generate_scene(
    spec: &SyntheticScenarioSpec,
    model: &BehaviorModel,
    cfg: &EngineConfig,
    seed: u64,
    index: usize,
) -> Result<ConflictScene, GenerateError> {
    spec.validate()?;
    let dt = cfg.dt_s;
    let ctype = spec.family.conflict_type();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2 * index as u64);
    let mut gt_rng = ChaCha8Rng::seed_from_u64(seed);
    gt_rng.set_stream(2 * index as u64 + 1);
    let mut last = String::new();

    for _ in 0..MAX_ATTEMPTS {
        let mut draft = match spec.family {
            ScenarioFamily::RearEndLeadBrake => draw_rear_end(spec, dt, &mut rng),
            ScenarioFamily::CutIn => match draw_cut_in(spec, dt, &mut rng) {
                Ok(d) => d,
                Err(reason) => {
                    last = reason;
                    continue;
                }
            },
            ScenarioFamily::CrossingStraight | ScenarioFamily::VruCrossing => {
                draw_crossing(spec, dt, &mut rng)
            }
        };
        let rotation = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
        let offset = Vec2::new(rng.gen_range(-500.0..500.0), rng.gen_range(-500.0..500.0));
        rigid_transform(&mut draft.responder, rotation, offset);
        rigid_transform(&mut draft.initiator, rotation, offset);

        let initiator_id = draft.initiator.agent_id.clone();
        let responder_id = draft.responder.agent_id.clone();
        let (track_a, track_b) = if responder_id == "agent_a" {
            (draft.responder.clone(), draft.initiator.clone())
        } else {
            (draft.initiator.clone(), draft.responder.clone())
        };
        let mut scene = ConflictScene {
            scene_id: scene_id(spec.family, seed, index),
            track_a,
            track_b,
            annotations: Annotations::default(),
        };
        if let Some(v) = validate_scene(&scene).first() {
            last = format!("{} at {}", v.invariant, v.location);
            continue;
        }
        let analysis = match analyze_scene(&scene, &cfg.conflict) {
            Ok(a) => a,
            Err(e) => {
                last = e.to_string();
                continue;
            }
        };
        if analysis.classification.conflict_type != ctype {
            last = format!("classified as {}", analysis.classification.conflict_type);
            continue;
        }
        if analysis.roles.initiator_id != initiator_id {
            last = "heuristic picked the other agent as initiator".into();
            continue;
        }
        let por_t = analysis.roles.por_t;
        if let Some(p) = draft.construction_por {
            if (por_t - p).abs() > 1e-9 {
                last = format!("heuristic PoR {por_t} differs from constructed {p}");
                continue;
            }
        }
        if let Some(c) = detect_collision(&draft.responder, &draft.initiator) {
            if c.t_contact <= por_t {
                last = "contact precedes the PoR".into();
                continue;
            }
        }

        let params = match spec.gt_mode {
            GtMode::FromModel => {
                let cells = enumerate_cells(model, ctype, draft.responder.agent_class);
                if cells.is_empty() {
                    return Err(GenerateError::EmptyLattice(ctype));
                }
                sample_cell(&cells, &mut gt_rng)
            }
            GtMode::FixedParams(p) => CellParams::React(p),
            GtMode::Nonreactive => CellParams::NonReact,
        };
        let gt_responder = respond(&draft.responder, por_t, &params);
        if scene.track_a.agent_id == responder_id {
            scene.track_a = gt_responder;
        } else {
            scene.track_b = gt_responder;
        }
        let gt = gt_outcome(&scene, &cfg.crash);
        scene.annotations = Annotations {
            conflict_type: Some(ctype),
            initiator_id: Some(initiator_id),
            responder_id: Some(responder_id),
            por_t: Some(por_t),
            gt_severity: Some(gt.severity),
        };
        return Ok(scene);
    }
    Err(GenerateError::NoConflict {
        family: spec.family,
        attempts: MAX_ATTEMPTS,
        last,
    })
}

/// `n` scenes of one spec, generated in parallel and returned in index
/// order.
pub fn generate_corpus(
    spec: &SyntheticScenarioSpec,
    model: &BehaviorModel,
    cfg: &EngineConfig,
    seed: u64,
    n: usize,
) -> Result<Vec<ConflictScene>, GenerateError> {
    spec.validate()?;
    (0..n)
        .into_par_iter()
        .map(|i| generate_scene(spec, model, cfg, seed, i))
        .collect()
}

/// Cycles through all four families with default ranges and GT responders
/// drawn from `model`.
pub fn mixed_corpus(
    model: &BehaviorModel,
    cfg: &EngineConfig,
    seed: u64,
    n: usize,
) -> Result<Vec<ConflictScene>, GenerateError> {
    (0..n)
        .into_par_iter()
        .map(|i| {
            let family = ScenarioFamily::ALL[i % ScenarioFamily::ALL.len()];
            generate_scene(&SyntheticScenarioSpec::for_family(family), model, cfg, seed, i)
        })
        .collect()
}
