//! Conflict classification, initiator/responder role assignment and
//! Point-of-Reaction detection.
//!
//! Everything here is heuristic and geometric; an annotation on the scene
//! always takes precedence over the corresponding heuristic. Heuristics use
//! only relative quantities (relative headings, offsets in another agent's
//! frame, distances to corridors), so they are invariant under rigid motion
//! of the world frame and equivariant under time shifts.
//!
//! A *corridor* is the set of points within `width / 2 + corridor_margin_m`
//! of an agent's path polyline. The logged path is extended along its final
//! tangent until it is at least as long as the constant-velocity projection
//! from the start of the common span, so an agent that stops early still
//! claims the road ahead of it.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{cross, heading_vector, wrap_angle, Polyline};
use crate::scene::{AgentTrack, ConflictScene};

const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConflictType {
    RearEndLeadBrake,
    CutIn,
    Pullout,
    CrossingStraight,
    LeftTurnAcrossPath,
    RightTurnMerge,
    HeadOn,
    VruCrossing,
}

impl ConflictType {
    pub const ALL: [ConflictType; 8] = [
        ConflictType::RearEndLeadBrake,
        ConflictType::CutIn,
        ConflictType::Pullout,
        ConflictType::CrossingStraight,
        ConflictType::LeftTurnAcrossPath,
        ConflictType::RightTurnMerge,
        ConflictType::HeadOn,
        ConflictType::VruCrossing,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ConflictType::RearEndLeadBrake => "rear_end_lead_brake",
            ConflictType::CutIn => "cut_in",
            ConflictType::Pullout => "pullout",
            ConflictType::CrossingStraight => "crossing_straight",
            ConflictType::LeftTurnAcrossPath => "left_turn_across_path",
            ConflictType::RightTurnMerge => "right_turn_merge",
            ConflictType::HeadOn => "head_on",
            ConflictType::VruCrossing => "vru_crossing",
        }
    }
}

impl fmt::Display for ConflictType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ConflictType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ConflictType::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown conflict type `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Annotated,
    Heuristic,
}

/// Named heuristic thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConflictThresholds {
    /// Lead deceleration that counts as a brake event (negative).
    pub brake_decel_mps2: f64,
    /// How long the brake event must be sustained.
    pub brake_sustain_s: f64,
    /// Lateral closing speed toward the responder that triggers reaction.
    pub lateral_closing_mps: f64,
    /// Inflation of an agent's footprint half-width when forming its corridor.
    pub corridor_margin_m: f64,
    /// Relative headings at or below this are "same direction".
    pub same_direction_deg: f64,
    /// Relative headings at or above this are "opposite direction".
    pub opposite_direction_deg: f64,
    /// Net heading change that marks an agent as turning.
    pub turn_deg: f64,
    /// Lateral movers starting below this speed are pulling out.
    pub pullout_speed_mps: f64,
    /// Minimum lateral-gap reduction for an agent to count as a lateral mover.
    pub min_lateral_travel_m: f64,
}

impl Default for ConflictThresholds {
    fn default() -> Self {
        Self {
            brake_decel_mps2: -1.5,
            brake_sustain_s: 0.2,
            lateral_closing_mps: 0.3,
            corridor_margin_m: 0.2,
            same_direction_deg: 30.0,
            opposite_direction_deg: 150.0,
            turn_deg: 45.0,
            pullout_speed_mps: 3.0,
            min_lateral_travel_m: 0.5,
        }
    }
}

impl ConflictThresholds {
    pub fn validate(&self) -> Result<(), String> {
        let ok = self.brake_decel_mps2 < 0.0
            && self.brake_sustain_s >= 0.0
            && self.lateral_closing_mps > 0.0
            && self.corridor_margin_m >= 0.0
            && 0.0 < self.same_direction_deg
            && self.same_direction_deg < self.opposite_direction_deg
            && self.opposite_direction_deg <= 180.0
            && self.turn_deg > 0.0
            && self.pullout_speed_mps >= 0.0
            && self.min_lateral_travel_m >= 0.0;
        if ok {
            Ok(())
        } else {
            Err("conflict thresholds out of range".into())
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConflictError {
    #[error("unclassifiable: {0}")]
    Unclassifiable(String),
    #[error("ambiguous roles: {0}")]
    AmbiguousRoles(String),
    #[error("no PoR found: {0}")]
    NoPor(String),
    #[error("annotated por_t {por_t} s lies outside the common span [{start}, {end}]")]
    PorOutOfSpan { por_t: f64, start: f64, end: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Classification {
    pub conflict_type: ConflictType,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoleAssignment {
    pub initiator_id: String,
    pub responder_id: String,
    pub por_t: f64,
    pub roles_provenance: Provenance,
    pub por_provenance: Provenance,
}

/// Classification, roles and PoR of a scene.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConflictAnalysis {
    pub classification: Classification,
    pub roles: RoleAssignment,
}

/// Geometry shared by the heuristics, computed once per scene.
struct SceneGeometry<'a> {
    tracks: [&'a AgentTrack; 2],
    paths: [Polyline; 2],
    start: f64,
    end: f64,
    margin: f64,
}

impl<'a> SceneGeometry<'a> {
    fn new(scene: &'a ConflictScene, th: &ConflictThresholds) -> Self {
        let (start, end) = scene.common_span();
        Self {
            tracks: scene.tracks(),
            paths: [
                projected_path(&scene.track_a, start, end),
                projected_path(&scene.track_b, start, end),
            ],
            start,
            end,
            margin: th.corridor_margin_m,
        }
    }

    fn index_of(&self, agent_id: &str) -> usize {
        usize::from(self.tracks[0].agent_id != agent_id)
    }

    fn corridor_half_width(&self, i: usize) -> f64 {
        0.5 * self.tracks[i].width + self.margin
    }

    fn corridors_intersect(&self) -> bool {
        self.paths[0].distance_to_polyline(&self.paths[1])
            <= self.corridor_half_width(0) + self.corridor_half_width(1)
    }

    /// Sample times of track `i` inside the common span.
    fn times(&self, i: usize) -> impl Iterator<Item = f64> + '_ {
        self.tracks[i]
            .samples
            .iter()
            .map(|s| s.t)
            .filter(move |t| *t >= self.start - TIME_EPS && *t <= self.end + TIME_EPS)
    }

    /// Whether agent `i`'s footprint at `t` lies in agent `j`'s corridor.
    fn in_corridor(&self, i: usize, j: usize, t: f64) -> bool {
        self.paths[j].distance_to_obb(&self.tracks[i].footprint_at(t)) <= self.corridor_half_width(j)
    }

    fn first_encroachment(&self, i: usize) -> Option<f64> {
        self.times(i).find(|&t| self.in_corridor(i, 1 - i, t))
    }

    /// Reduction of agent `i`'s lateral offset measured in agent `j`'s
    /// initial frame.
    fn lateral_gap_reduction(&self, i: usize) -> f64 {
        let j = 1 - i;
        let origin = self.tracks[j].state_at(self.start);
        let dir = heading_vector(origin.heading);
        let gap = |t: f64| cross(&dir, &(self.tracks[i].state_at(t).position - origin.position)).abs();
        let initial = gap(self.start);
        let min = self.times(i).map(gap).fold(initial, f64::min);
        initial - min
    }

    fn net_turn(&self, i: usize) -> f64 {
        let track = self.tracks[i];
        wrap_angle(track.state_at(self.end).heading - track.state_at(self.start).heading).abs()
    }
}

fn projected_path(track: &AgentTrack, start: f64, end: f64) -> Polyline {
    let path = track.path();
    let s0 = track.state_at(start);
    let covered = path.length() - path.project(&s0.position);
    let shortfall = s0.speed * (end - start) - covered;
    if shortfall <= 0.0 {
        return path;
    }
    let (tip, _) = path.sample(path.length() + shortfall);
    let mut points = path.points().to_vec();
    points.push(tip);
    Polyline::new(points, s0.heading)
}

/// Classifies the conflict. Rules, applied to the heuristic path (relative
/// headings taken at the start of the common span):
///
/// - any VRU with intersecting corridors: `vru_crossing`;
/// - corridors never intersect: unclassifiable;
/// - same direction and laterally overlapping: `rear_end_lead_brake`;
/// - same direction, adjacent: `pullout` if the lateral mover starts slower
///   than `pullout_speed_mps`, else `cut_in`;
/// - opposite direction: `left_turn_across_path` if either agent turns,
///   else `head_on`;
/// - otherwise: `right_turn_merge` if an agent turns into the other's
///   direction, `left_turn_across_path` for other turns, else
///   `crossing_straight`.
pub fn classify_conflict(
    scene: &ConflictScene,
    th: &ConflictThresholds,
) -> Result<Classification, ConflictError> {
    if let Some(ct) = scene.annotations.conflict_type {
        return Ok(Classification {
            conflict_type: ct,
            provenance: Provenance::Annotated,
        });
    }
    let geo = SceneGeometry::new(scene, th);
    heuristic_type(&geo, th).map(|conflict_type| Classification {
        conflict_type,
        provenance: Provenance::Heuristic,
    })
}

fn heuristic_type(geo: &SceneGeometry, th: &ConflictThresholds) -> Result<ConflictType, ConflictError> {
    let [a, b] = geo.tracks;
    let intersect = geo.corridors_intersect();
    if a.agent_class.is_vru() || b.agent_class.is_vru() {
        return if intersect {
            Ok(ConflictType::VruCrossing)
        } else {
            Err(ConflictError::Unclassifiable(
                "VRU corridor never meets the other agent's corridor".into(),
            ))
        };
    }
    if !intersect {
        return Err(ConflictError::Unclassifiable("corridors never intersect".into()));
    }
    let sa = a.state_at(geo.start);
    let sb = b.state_at(geo.start);
    let rel_start = wrap_angle(sa.heading - sb.heading).abs().to_degrees();
    let turning = geo.net_turn(0).max(geo.net_turn(1)).to_degrees() >= th.turn_deg;

    if rel_start <= th.same_direction_deg {
        let lateral = cross(&heading_vector(sa.heading), &(sb.position - sa.position)).abs();
        if lateral <= 0.5 * (a.width + b.width) {
            return Ok(ConflictType::RearEndLeadBrake);
        }
        let mover = lateral_mover(geo, th).ok_or_else(|| {
            ConflictError::Unclassifiable(
                "adjacent same-direction tracks without lateral encroachment".into(),
            )
        })?;
        let speed = geo.tracks[mover].state_at(geo.start).speed;
        return Ok(if speed < th.pullout_speed_mps {
            ConflictType::Pullout
        } else {
            ConflictType::CutIn
        });
    }
    if rel_start >= th.opposite_direction_deg {
        return Ok(if turning {
            ConflictType::LeftTurnAcrossPath
        } else {
            ConflictType::HeadOn
        });
    }
    if turning {
        let rel_end = wrap_angle(a.state_at(geo.end).heading - b.state_at(geo.end).heading)
            .abs()
            .to_degrees();
        return Ok(if rel_end <= th.same_direction_deg {
            ConflictType::RightTurnMerge
        } else {
            ConflictType::LeftTurnAcrossPath
        });
    }
    Ok(ConflictType::CrossingStraight)
}

/// Index of the agent whose lateral gap to the other shrinks the most, if
/// that reduction is significant and strictly larger than the other's.
fn lateral_mover(geo: &SceneGeometry, th: &ConflictThresholds) -> Option<usize> {
    let r = [geo.lateral_gap_reduction(0), geo.lateral_gap_reduction(1)];
    let i = if r[0] > r[1] {
        0
    } else if r[1] > r[0] {
        1
    } else {
        return None;
    };
    (r[i] >= th.min_lateral_travel_m).then_some(i)
}

/// Assigns initiator and responder. The returned assignment carries
/// `por_t = NaN`; [`detect_por`] fills it in.
///
/// Heuristic initiator per conflict type:
/// - rear-end: the lead agent (ahead along the shared heading);
/// - cut-in, pullout, head-on: the agent whose lateral gap shrinks most;
/// - turn types: the agent with the larger net heading change;
/// - crossing and VRU crossing: the agent whose footprint first enters the
///   other's corridor.
pub fn assign_roles(
    scene: &ConflictScene,
    ctype: ConflictType,
    th: &ConflictThresholds,
) -> Result<RoleAssignment, ConflictError> {
    let ann = &scene.annotations;
    let annotated = match (&ann.initiator_id, &ann.responder_id) {
        (Some(i), Some(r)) => Some((i.clone(), r.clone())),
        (Some(i), None) => scene.other(i).map(|o| (i.clone(), o.agent_id.clone())),
        (None, Some(r)) => scene.other(r).map(|o| (o.agent_id.clone(), r.clone())),
        (None, None) => None,
    };
    if let Some((initiator_id, responder_id)) = annotated {
        return Ok(RoleAssignment {
            initiator_id,
            responder_id,
            por_t: f64::NAN,
            roles_provenance: Provenance::Annotated,
            por_provenance: Provenance::Heuristic,
        });
    }

    let geo = SceneGeometry::new(scene, th);
    let initiator = match ctype {
        ConflictType::RearEndLeadBrake => {
            let sa = geo.tracks[0].state_at(geo.start);
            let sb = geo.tracks[1].state_at(geo.start);
            let ahead = heading_vector(sa.heading).dot(&(sb.position - sa.position));
            if ahead > 0.0 {
                1
            } else if ahead < 0.0 {
                0
            } else {
                return Err(ConflictError::AmbiguousRoles("agents are level".into()));
            }
        }
        ConflictType::CutIn | ConflictType::Pullout | ConflictType::HeadOn => lateral_mover(&geo, th)
            .ok_or_else(|| ConflictError::AmbiguousRoles("no agent moves laterally".into()))?,
        ConflictType::LeftTurnAcrossPath | ConflictType::RightTurnMerge
            if geo.net_turn(0) != geo.net_turn(1)
                && geo.net_turn(0).max(geo.net_turn(1)).to_degrees() >= th.turn_deg =>
        {
            usize::from(geo.net_turn(1) > geo.net_turn(0))
        }
        _ => match (geo.first_encroachment(0), geo.first_encroachment(1)) {
            (None, None) => {
                return Err(ConflictError::AmbiguousRoles("neither agent encroaches".into()))
            }
            (Some(_), None) => 0,
            (None, Some(_)) => 1,
            (Some(ta), Some(tb)) if ta < tb => 0,
            (Some(ta), Some(tb)) if tb < ta => 1,
            _ => {
                return Err(ConflictError::AmbiguousRoles(
                    "both agents encroach simultaneously".into(),
                ))
            }
        },
    };
    Ok(RoleAssignment {
        initiator_id: geo.tracks[initiator].agent_id.clone(),
        responder_id: geo.tracks[1 - initiator].agent_id.clone(),
        por_t: f64::NAN,
        roles_provenance: Provenance::Heuristic,
        por_provenance: Provenance::Heuristic,
    })
}

/// Point of Reaction: the annotated value if present, else the first
/// initiator sample at which the per-type trigger fires.
pub fn detect_por(
    scene: &ConflictScene,
    ctype: ConflictType,
    roles: &RoleAssignment,
    th: &ConflictThresholds,
) -> Result<f64, ConflictError> {
    let (start, end) = scene.common_span();
    if let Some(por_t) = scene.annotations.por_t {
        if por_t < start - TIME_EPS || por_t > end + TIME_EPS {
            return Err(ConflictError::PorOutOfSpan { por_t, start, end });
        }
        return Ok(por_t);
    }
    let geo = SceneGeometry::new(scene, th);
    let ini = geo.index_of(&roles.initiator_id);
    let res = 1 - ini;
    let initiator = geo.tracks[ini];
    let responder = geo.tracks[res];
    let times: Vec<f64> = geo.times(ini).collect();

    let found = match ctype {
        ConflictType::RearEndLeadBrake => times.iter().copied().find(|&t| {
            let window_end = t + th.brake_sustain_s;
            window_end <= initiator.end_time() + TIME_EPS
                && initiator
                    .samples
                    .iter()
                    .filter(|s| s.t >= t - TIME_EPS && s.t <= window_end + TIME_EPS)
                    .all(|s| s.accel_long <= th.brake_decel_mps2)
                && geo.in_corridor(ini, res, t)
        }),
        ConflictType::CutIn | ConflictType::Pullout | ConflictType::RightTurnMerge => {
            let gap = |t: f64| {
                let r = responder.state_at(t);
                cross(&heading_vector(r.heading), &(initiator.state_at(t).position - r.position)).abs()
            };
            times.windows(2).find_map(|w| {
                let closing = (gap(w[0]) - gap(w[1])) / (w[1] - w[0]);
                (closing >= th.lateral_closing_mps).then_some(w[0])
            })
        }
        ConflictType::HeadOn => {
            let dist = |t: f64| {
                (initiator.state_at(t).position - responder.state_at(t).position).norm()
            };
            times
                .windows(2)
                .find_map(|w| (geo.in_corridor(ini, res, w[0]) && dist(w[1]) < dist(w[0])).then_some(w[0]))
        }
        ConflictType::CrossingStraight
        | ConflictType::LeftTurnAcrossPath
        | ConflictType::VruCrossing => times.iter().copied().find(|&t| geo.in_corridor(ini, res, t)),
    };
    found.ok_or_else(|| ConflictError::NoPor(format!("{ctype} trigger never fires")))
}

/// Classification, roles and PoR in one pass.
pub fn analyze_scene(
    scene: &ConflictScene,
    th: &ConflictThresholds,
) -> Result<ConflictAnalysis, ConflictError> {
    let classification = classify_conflict(scene, th)?;
    let mut roles = assign_roles(scene, classification.conflict_type, th)?;
    roles.por_t = detect_por(scene, classification.conflict_type, &roles, th)?;
    roles.por_provenance = if scene.annotations.por_t.is_some() {
        Provenance::Annotated
    } else {
        Provenance::Heuristic
    };
    Ok(ConflictAnalysis {
        classification,
        roles,
    })
}
