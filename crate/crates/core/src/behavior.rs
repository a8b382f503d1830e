//! Responder reaction models: the reaction-parameter lattice, brake-response
//! trajectory synthesis and the no-reaction baseline.
//!
//! A responder reacts only longitudinally. After the point of reaction plus
//! the reaction time, its longitudinal acceleration ramps at a constant jerk
//! toward a steady-state deceleration and holds it until the agent stops. The
//! agent stays on its logged path throughout.

use std::collections::BTreeMap;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conflict::ConflictType;
use crate::scene::{AgentClass, AgentTrack, TrajectorySample};

const WEIGHT_TOL: f64 = 1e-9;
const TIME_EPS: f64 = 1e-9;

/// Shipped placeholder model. Its numbers are illustrative, not calibrated.
pub const DEFAULT_MODEL_TOML: &str = include_str!("../config/default_behavior.toml");

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReactionParams {
    /// Reaction time after the point of reaction, s.
    pub hrt: f64,
    /// Brake ramp rate, m/s^3 (negative).
    pub jerk: f64,
    /// Steady-state acceleration, m/s^2 (negative).
    pub a_ss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CellParams {
    React(ReactionParams),
    /// The inattentive agent: behaves like the no-reaction baseline.
    NonReact,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ParameterCell {
    pub params: CellParams,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JointMode {
    IndependentProduct,
    JointTable,
}

/// Maximum deceleration per agent class (negative values).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecelCaps {
    pub passenger_vehicle: f64,
    pub truck: f64,
    pub motorcycle: f64,
    pub cyclist: f64,
    pub pedestrian: f64,
}

impl Default for DecelCaps {
    fn default() -> Self {
        Self {
            passenger_vehicle: -9.0,
            truck: -6.5,
            motorcycle: -7.0,
            cyclist: -3.5,
            pedestrian: -3.0,
        }
    }
}

impl DecelCaps {
    pub fn cap(&self, class: AgentClass) -> f64 {
        match class {
            AgentClass::PassengerVehicle => self.passenger_vehicle,
            AgentClass::Truck => self.truck,
            AgentClass::Motorcycle => self.motorcycle,
            AgentClass::Cyclist => self.cyclist,
            AgentClass::Pedestrian => self.pedestrian,
        }
    }
}

/// One (conflict type, agent class) entry with normalised weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelEntry {
    pub mode: JointMode,
    /// HRT point masses at bin centres.
    pub hrt_values: Vec<f64>,
    pub hrt_weights: Vec<f64>,
    pub jerk_values: Vec<f64>,
    pub jerk_weights: Vec<f64>,
    pub a_ss_values: Vec<f64>,
    pub a_ss_weights: Vec<f64>,
    pub joint_rows: Vec<(ReactionParams, f64)>,
    pub p_nonreact: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BehaviorModel {
    pub default: ModelEntry,
    pub entries: BTreeMap<(Option<ConflictType>, Option<AgentClass>), ModelEntry>,
    pub decel_caps: DecelCaps,
}

#[derive(Debug, Error, PartialEq)]
pub enum BehaviorError {
    #[error("malformed behavior model: {0}")]
    Parse(String),
    #[error("{location}: marginal not normalized (weights sum to {sum})")]
    NotNormalized { location: String, sum: f64 },
    #[error("{location}: negative weight")]
    NegativeWeight { location: String },
    #[error("{location}: hrt bin edges must be strictly increasing")]
    EdgesNotIncreasing { location: String },
    #[error("{location}: {reason}")]
    InvalidValue { location: String, reason: String },
    #[error("duplicate entry for {0}")]
    DuplicateEntry(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    #[serde(default)]
    decel_caps: DecelCaps,
    default: EntryDoc,
    #[serde(default)]
    entries: Vec<EntryDoc>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EntryDoc {
    #[serde(default)]
    conflict_type: Option<ConflictType>,
    #[serde(default)]
    agent_class: Option<AgentClass>,
    #[serde(default = "default_mode")]
    joint_mode: JointMode,
    #[serde(default)]
    hrt_bin_edges_s: Vec<f64>,
    #[serde(default)]
    hrt_weights: Vec<f64>,
    #[serde(default)]
    jerk_mps3: Vec<f64>,
    #[serde(default)]
    jerk_weights: Vec<f64>,
    #[serde(default)]
    a_ss_mps2: Vec<f64>,
    #[serde(default)]
    a_ss_weights: Vec<f64>,
    /// Rows of `[hrt_s, jerk_mps3, a_ss_mps2, weight]`.
    #[serde(default)]
    joint_table: Vec<[f64; 4]>,
    #[serde(default)]
    p_nonreact: f64,
}

fn default_mode() -> JointMode {
    JointMode::IndependentProduct
}

/// Parses a behavior model from TOML or JSON (detected by a leading `{`).
pub fn load_behavior_model(config: &[u8]) -> Result<BehaviorModel, BehaviorError> {
    let text = std::str::from_utf8(config).map_err(|e| BehaviorError::Parse(e.to_string()))?;
    let doc: ModelDoc = if text.trim_start().starts_with('{') {
        serde_json::from_str(text).map_err(|e| BehaviorError::Parse(e.to_string()))?
    } else {
        toml::from_str(text).map_err(|e| BehaviorError::Parse(e.to_string()))?
    };
    let caps = doc.decel_caps;
    for class in AgentClass::ALL {
        let cap = caps.cap(class);
        if !(cap < 0.0 && cap.is_finite()) {
            return Err(BehaviorError::InvalidValue {
                location: format!("decel_caps.{class}"),
                reason: "capability must be negative".into(),
            });
        }
    }
    let default = build_entry("default", &doc.default, &caps)?;
    let mut entries = BTreeMap::new();
    for (i, e) in doc.entries.iter().enumerate() {
        let entry = build_entry(&format!("entries[{i}]"), e, &caps)?;
        let key = (e.conflict_type, e.agent_class);
        if entries.insert(key, entry).is_some() {
            return Err(BehaviorError::DuplicateEntry(format!("entries[{i}]")));
        }
    }
    Ok(BehaviorModel {
        default,
        entries,
        decel_caps: caps,
    })
}

fn normalized(location: &str, weights: &[f64]) -> Result<Vec<f64>, BehaviorError> {
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(BehaviorError::NegativeWeight {
            location: location.into(),
        });
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > WEIGHT_TOL {
        return Err(BehaviorError::NotNormalized {
            location: location.into(),
            sum,
        });
    }
    Ok(weights.iter().map(|w| w / sum).collect())
}

fn invalid(location: String, reason: &str) -> BehaviorError {
    BehaviorError::InvalidValue {
        location,
        reason: reason.into(),
    }
}

fn check_len(location: String, values: &[f64], weights: &[f64]) -> Result<(), BehaviorError> {
    if values.is_empty() {
        return Err(invalid(location, "at least one value required"));
    }
    if values.len() != weights.len() {
        return Err(invalid(location, "values and weights differ in length"));
    }
    Ok(())
}

fn check_params(location: &str, p: &ReactionParams, cap: Option<f64>) -> Result<(), BehaviorError> {
    if !(p.hrt.is_finite() && p.hrt >= 0.0) {
        return Err(invalid(format!("{location}.hrt"), "reaction time must be >= 0"));
    }
    if !(p.jerk.is_finite() && p.jerk < 0.0) {
        return Err(invalid(format!("{location}.jerk"), "jerk must be negative"));
    }
    if !(p.a_ss.is_finite() && p.a_ss < 0.0) {
        return Err(invalid(format!("{location}.a_ss"), "steady-state acceleration must be negative"));
    }
    if let Some(cap) = cap {
        if p.a_ss < cap {
            return Err(invalid(
                format!("{location}.a_ss"),
                "deceleration exceeds the agent class capability",
            ));
        }
    }
    Ok(())
}

fn build_entry(loc: &str, doc: &EntryDoc, caps: &DecelCaps) -> Result<ModelEntry, BehaviorError> {
    if !(0.0..=1.0).contains(&doc.p_nonreact) {
        return Err(invalid(format!("{loc}.p_nonreact"), "must lie in [0, 1]"));
    }
    let cap = doc.agent_class.map(|c| caps.cap(c));
    let mut entry = ModelEntry {
        mode: doc.joint_mode,
        hrt_values: Vec::new(),
        hrt_weights: Vec::new(),
        jerk_values: Vec::new(),
        jerk_weights: Vec::new(),
        a_ss_values: Vec::new(),
        a_ss_weights: Vec::new(),
        joint_rows: Vec::new(),
        p_nonreact: doc.p_nonreact,
    };
    match doc.joint_mode {
        JointMode::IndependentProduct => {
            let edges = &doc.hrt_bin_edges_s;
            if edges.len() < 2 {
                return Err(invalid(format!("{loc}.hrt_bin_edges_s"), "at least two edges required"));
            }
            if edges.windows(2).any(|w| w[1].partial_cmp(&w[0]) != Some(std::cmp::Ordering::Greater)) {
                return Err(BehaviorError::EdgesNotIncreasing {
                    location: format!("{loc}.hrt_bin_edges_s"),
                });
            }
            if edges[0] < 0.0 {
                return Err(invalid(format!("{loc}.hrt_bin_edges_s"), "reaction time must be >= 0"));
            }
            let centers: Vec<f64> = edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
            check_len(format!("{loc}.hrt_weights"), &centers, &doc.hrt_weights)?;
            check_len(format!("{loc}.jerk_weights"), &doc.jerk_mps3, &doc.jerk_weights)?;
            check_len(format!("{loc}.a_ss_weights"), &doc.a_ss_mps2, &doc.a_ss_weights)?;
            entry.hrt_weights = normalized(&format!("{loc}.hrt_weights"), &doc.hrt_weights)?;
            entry.jerk_weights = normalized(&format!("{loc}.jerk_weights"), &doc.jerk_weights)?;
            entry.a_ss_weights = normalized(&format!("{loc}.a_ss_weights"), &doc.a_ss_weights)?;
            for &jerk in &doc.jerk_mps3 {
                for &a_ss in &doc.a_ss_mps2 {
                    check_params(loc, &ReactionParams { hrt: centers[0], jerk, a_ss }, cap)?;
                }
            }
            entry.hrt_values = centers;
            entry.jerk_values = doc.jerk_mps3.clone();
            entry.a_ss_values = doc.a_ss_mps2.clone();
        }
        JointMode::JointTable => {
            if doc.joint_table.is_empty() {
                return Err(invalid(format!("{loc}.joint_table"), "at least one row required"));
            }
            let weights: Vec<f64> = doc.joint_table.iter().map(|r| r[3]).collect();
            let weights = normalized(&format!("{loc}.joint_table"), &weights)?;
            for (i, (row, w)) in doc.joint_table.iter().zip(weights).enumerate() {
                let p = ReactionParams {
                    hrt: row[0],
                    jerk: row[1],
                    a_ss: row[2],
                };
                check_params(&format!("{loc}.joint_table[{i}]"), &p, cap)?;
                entry.joint_rows.push((p, w));
            }
        }
    }
    Ok(entry)
}

impl BehaviorModel {
    /// The shipped placeholder model.
    pub fn placeholder() -> Self {
        load_behavior_model(DEFAULT_MODEL_TOML.as_bytes()).expect("shipped model is valid")
    }

    /// Lookup order: exact key, conflict type only, agent class only, default.
    pub fn entry(&self, ctype: ConflictType, class: AgentClass) -> &ModelEntry {
        [
            (Some(ctype), Some(class)),
            (Some(ctype), None),
            (None, Some(class)),
        ]
        .iter()
        .find_map(|k| self.entries.get(k))
        .unwrap_or(&self.default)
    }

    /// A model with a single deterministic reactive cell.
    pub fn single_cell(params: ReactionParams) -> Self {
        Self::from_entry(ModelEntry {
            mode: JointMode::JointTable,
            hrt_values: Vec::new(),
            hrt_weights: Vec::new(),
            jerk_values: Vec::new(),
            jerk_weights: Vec::new(),
            a_ss_values: Vec::new(),
            a_ss_weights: Vec::new(),
            joint_rows: vec![(params, 1.0)],
            p_nonreact: 0.0,
        })
    }

    pub fn from_entry(default: ModelEntry) -> Self {
        Self {
            default,
            entries: BTreeMap::new(),
            decel_caps: DecelCaps::default(),
        }
    }
}

/// Enumerates the weighted parameter lattice for a key.
///
/// Independent-product entries yield the Cartesian product in hrt-major,
/// then jerk, then a_ss order; steady-state values beyond the class
/// capability are dropped and the remaining a_ss weights renormalised (if
/// none remain, the capability itself is used). Joint-table rows are yielded
/// in order with a_ss clamped to the capability. Reactive weights are scaled
/// by `1 - p_nonreact` and the non-reactive atom is appended when
/// `p_nonreact > 0`.
pub fn enumerate_cells(
    model: &BehaviorModel,
    ctype: ConflictType,
    class: AgentClass,
) -> Vec<ParameterCell> {
    let entry = model.entry(ctype, class);
    let cap = model.decel_caps.cap(class);
    let scale = 1.0 - entry.p_nonreact;
    let mut cells = Vec::new();
    if scale > 0.0 {
        match entry.mode {
            JointMode::IndependentProduct => {
                let mut a_ss: Vec<(f64, f64)> = entry
                    .a_ss_values
                    .iter()
                    .copied()
                    .zip(entry.a_ss_weights.iter().copied())
                    .filter(|(a, _)| *a >= cap)
                    .collect();
                let kept: f64 = a_ss.iter().map(|(_, w)| w).sum();
                if a_ss.is_empty() || kept <= 0.0 {
                    a_ss = vec![(cap, 1.0)];
                } else {
                    a_ss.iter_mut().for_each(|(_, w)| *w /= kept);
                }
                for (&hrt, &wh) in entry.hrt_values.iter().zip(&entry.hrt_weights) {
                    for (&jerk, &wj) in entry.jerk_values.iter().zip(&entry.jerk_weights) {
                        for &(a, wa) in &a_ss {
                            cells.push(ParameterCell {
                                params: CellParams::React(ReactionParams { hrt, jerk, a_ss: a }),
                                weight: scale * wh * wj * wa,
                            });
                        }
                    }
                }
            }
            JointMode::JointTable => {
                for &(p, w) in &entry.joint_rows {
                    cells.push(ParameterCell {
                        params: CellParams::React(ReactionParams {
                            a_ss: p.a_ss.max(cap),
                            ..p
                        }),
                        weight: scale * w,
                    });
                }
            }
        }
    }
    if entry.p_nonreact > 0.0 {
        cells.push(ParameterCell {
            params: CellParams::NonReact,
            weight: entry.p_nonreact,
        });
    }
    cells
}

/// Draws one cell with probability equal to its weight.
pub fn sample_cell<R: Rng + ?Sized>(cells: &[ParameterCell], rng: &mut R) -> CellParams {
    let dist = WeightedIndex::new(cells.iter().map(|c| c.weight)).expect("cells carry positive mass");
    cells[dist.sample(rng)].params
}

/// Closed-form jerk-limited braking from an initial speed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BrakeProfile {
    v0: f64,
    a0: f64,
    jerk: f64,
    a_ss: f64,
    ramp_end: f64,
    stop_time: f64,
}

/// Distance, speed and acceleration at a time offset from reaction onset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileState {
    pub distance: f64,
    pub speed: f64,
    pub accel: f64,
}

impl BrakeProfile {
    /// `a0` is clamped into `[a_ss, 0]` so the profile never accelerates and
    /// never brakes harder than `a_ss`.
    pub fn new(v0: f64, a0: f64, jerk: f64, a_ss: f64) -> Self {
        let v0 = v0.max(0.0);
        let a0 = a0.clamp(a_ss, 0.0);
        let ramp_end = (a_ss - a0) / jerk;
        let v_ramp_end = v0 + a0 * ramp_end + 0.5 * jerk * ramp_end * ramp_end;
        let stop_time = if v_ramp_end <= 0.0 {
            // root of v0 + a0 t + jerk t^2 / 2 = 0, rationalised for stability
            let disc = (a0 * a0 - 2.0 * jerk * v0).max(0.0);
            let denom = -a0 + disc.sqrt();
            if denom > 0.0 {
                2.0 * v0 / denom
            } else {
                0.0
            }
        } else {
            ramp_end + v_ramp_end / -a_ss
        };
        Self {
            v0,
            a0,
            jerk,
            a_ss,
            ramp_end,
            stop_time,
        }
    }

    pub fn stop_time(&self) -> f64 {
        self.stop_time
    }

    fn ramp(&self, t: f64) -> ProfileState {
        ProfileState {
            distance: self.v0 * t + 0.5 * self.a0 * t * t + self.jerk * t * t * t / 6.0,
            speed: self.v0 + self.a0 * t + 0.5 * self.jerk * t * t,
            accel: self.a0 + self.jerk * t,
        }
    }

    pub fn at(&self, t: f64) -> ProfileState {
        let t = t.max(0.0);
        if t >= self.stop_time {
            let stopped = self.unclamped(self.stop_time);
            return ProfileState {
                distance: stopped.distance,
                speed: 0.0,
                accel: 0.0,
            };
        }
        let s = self.unclamped(t);
        ProfileState {
            speed: s.speed.max(0.0),
            ..s
        }
    }

    fn unclamped(&self, t: f64) -> ProfileState {
        if t <= self.ramp_end {
            return self.ramp(t);
        }
        let r = self.ramp(self.ramp_end);
        let d = t - self.ramp_end;
        ProfileState {
            distance: r.distance + r.speed * d + 0.5 * self.a_ss * d * d,
            speed: r.speed + self.a_ss * d,
            accel: self.a_ss,
        }
    }

    /// Total distance covered until standstill.
    pub fn stopping_distance(&self) -> f64 {
        self.unclamped(self.stop_time).distance
    }
}

/// Cumulative arc length at each sample.
fn sample_arc_lengths(track: &AgentTrack) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(track.samples.len());
    let mut prev: Option<&TrajectorySample> = None;
    for s in &track.samples {
        if let Some(p) = prev {
            acc += (s.position() - p.position()).norm();
        }
        out.push(acc);
        prev = Some(s);
    }
    out
}

/// Interpolated onset state and arc length, snapping to a sample that lies
/// within 1e-9 s of `t`.
fn onset_state(track: &AgentTrack, arcs: &[f64], t: f64) -> (usize, f64, f64, f64) {
    let samples = &track.samples;
    let i = samples.partition_point(|s| s.t <= t + TIME_EPS).saturating_sub(1);
    if (samples[i].t - t).abs() <= TIME_EPS || i + 1 == samples.len() {
        let s = &samples[i];
        return (i, arcs[i], s.speed, s.accel_long);
    }
    let a = &samples[i];
    let b = &samples[i + 1];
    let f = (t - a.t) / (b.t - a.t);
    (
        i,
        arcs[i] + f * (arcs[i + 1] - arcs[i]),
        a.speed + f * (b.speed - a.speed),
        a.accel_long + f * (b.accel_long - a.accel_long),
    )
}

/// Replaces every sample after `onset` with a position along the logged
/// path at `arc_at_onset + motion(t - onset)`.
fn replace_after(
    track: &AgentTrack,
    onset: f64,
    arc_at_onset: f64,
    motion: impl Fn(f64) -> ProfileState,
) -> AgentTrack {
    let path = track.path();
    let samples = track
        .samples
        .iter()
        .map(|s| {
            if s.t <= onset + TIME_EPS {
                return *s;
            }
            let m = motion(s.t - onset);
            let (p, heading) = path.sample(arc_at_onset + m.distance);
            TrajectorySample {
                t: s.t,
                x: p.x,
                y: p.y,
                heading,
                speed: m.speed,
                accel_long: m.accel,
            }
        })
        .collect();
    AgentTrack {
        samples,
        ..track.clone()
    }
}

/// Counterfactual responder trajectory for one set of reaction parameters.
/// The logged trajectory is kept up to `por_t + hrt`; if that lies beyond
/// the end of the track the track is returned unchanged.
pub fn synthesize_response(responder: &AgentTrack, por_t: f64, params: &ReactionParams) -> AgentTrack {
    let onset = por_t + params.hrt;
    if onset > responder.end_time() - TIME_EPS {
        return responder.clone();
    }
    let arcs = sample_arc_lengths(responder);
    let (_, arc, speed, accel) = onset_state(responder, &arcs, onset);
    let profile = BrakeProfile::new(speed, accel, params.jerk, params.a_ss);
    replace_after(responder, onset, arc, |dt| profile.at(dt))
}

/// No-reaction baseline: the speed at `por_t` is held along the logged
/// path (extended along its final tangent) for the rest of the span.
pub fn nrm_response(responder: &AgentTrack, por_t: f64) -> AgentTrack {
    if por_t > responder.end_time() - TIME_EPS {
        return responder.clone();
    }
    let arcs = sample_arc_lengths(responder);
    let (_, arc, speed, _) = onset_state(responder, &arcs, por_t);
    replace_after(responder, por_t, arc, |dt| ProfileState {
        distance: speed * dt,
        speed,
        accel: 0.0,
    })
}

/// Counterfactual responder for any lattice cell.
pub fn respond(responder: &AgentTrack, por_t: f64, cell: &CellParams) -> AgentTrack {
    match cell {
        CellParams::React(p) => synthesize_response(responder, por_t, p),
        CellParams::NonReact => nrm_response(responder, por_t),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const SINGLE: &str = r#"
        [default]
        hrt_bin_edges_s = [0.95, 1.05]
        hrt_weights = [1.0]
        jerk_mps3 = [-10.0]
        jerk_weights = [1.0]
        a_ss_mps2 = [-5.0]
        a_ss_weights = [1.0]
        p_nonreact = 0.0
    "#;

    #[test]
    fn single_bin_model() {
        let m = load_behavior_model(SINGLE.as_bytes()).unwrap();
        let cells = enumerate_cells(&m, ConflictType::CutIn, AgentClass::PassengerVehicle);
        assert_eq!(cells.len(), 1);
        assert_eq!(cells[0].weight, 1.0);
        match cells[0].params {
            CellParams::React(p) => {
                assert_relative_eq!(p.hrt, 1.0, epsilon = 1e-12);
                assert_eq!((p.jerk, p.a_ss), (-10.0, -5.0));
            }
            CellParams::NonReact => panic!("expected reactive cell"),
        }
    }

    #[test]
    fn unnormalized_marginal_rejected() {
        let doc = SINGLE.replace("hrt_weights = [1.0]", "hrt_weights = [0.9]");
        let err = load_behavior_model(doc.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("marginal not normalized"), "{err}");
    }

    #[test]
    fn negative_weight_and_bad_edges_rejected() {
        let doc = SINGLE
            .replace("hrt_bin_edges_s = [0.95, 1.05]", "hrt_bin_edges_s = [0.5, 1.0, 1.5]")
            .replace("hrt_weights = [1.0]", "hrt_weights = [1.5, -0.5]");
        assert!(matches!(
            load_behavior_model(doc.as_bytes()),
            Err(BehaviorError::NegativeWeight { .. })
        ));
        let doc = SINGLE.replace("[0.95, 1.05]", "[1.05, 0.95]");
        assert!(matches!(
            load_behavior_model(doc.as_bytes()),
            Err(BehaviorError::EdgesNotIncreasing { .. })
        ));
    }

    #[test]
    fn nonreact_mixture() {
        let doc = SINGLE.replace("p_nonreact = 0.0", "p_nonreact = 0.1");
        let m = load_behavior_model(doc.as_bytes()).unwrap();
        let cells = enumerate_cells(&m, ConflictType::CutIn, AgentClass::PassengerVehicle);
        assert_eq!(cells.len(), 2);
        assert_relative_eq!(cells[0].weight, 0.9, epsilon = 1e-15);
        assert_eq!(cells[1], ParameterCell { params: CellParams::NonReact, weight: 0.1 });
    }

    const PRODUCT: &str = r#"
        [default]
        hrt_bin_edges_s = [0.0, 0.5, 1.0, 1.5]
        hrt_weights = [0.2, 0.5, 0.3]
        jerk_mps3 = [-5.0, -10.0]
        jerk_weights = [0.4, 0.6]
        a_ss_mps2 = [-3.0, -6.0]
        a_ss_weights = [0.5, 0.5]
        p_nonreact = 0.05
    "#;

    #[test]
    fn product_lattice_with_nonreact() {
        let m = load_behavior_model(PRODUCT.as_bytes()).unwrap();
        let cells = enumerate_cells(&m, ConflictType::HeadOn, AgentClass::PassengerVehicle);
        assert_eq!(cells.len(), 13);
        let total: f64 = cells.iter().map(|c| c.weight).sum();
        assert_relative_eq!(total, 1.0, epsilon = 1e-12);
        let reactive: f64 = cells[..12].iter().map(|c| c.weight).sum();
        assert_relative_eq!(reactive, 0.95, epsilon = 1e-12);
        // hrt-major, then jerk, then a_ss
        let p = |i: usize| match cells[i].params {
            CellParams::React(p) => p,
            CellParams::NonReact => unreachable!(),
        };
        assert_eq!((p(0).jerk, p(0).a_ss), (-5.0, -3.0));
        assert_eq!((p(1).jerk, p(1).a_ss), (-5.0, -6.0));
        assert_eq!(p(2).jerk, -10.0);
        assert_relative_eq!(p(4).hrt, 0.75);
        assert_relative_eq!(cells[0].weight, 0.95 * 0.2 * 0.4 * 0.5, epsilon = 1e-15);
    }

    #[test]
    fn class_cap_filters_a_ss() {
        let m = load_behavior_model(PRODUCT.as_bytes()).unwrap();
        let cells = enumerate_cells(&m, ConflictType::HeadOn, AgentClass::Cyclist);
        assert_eq!(cells.len(), 3 * 2 + 1);
        assert!(cells.iter().all(|c| match c.params {
            CellParams::React(p) => p.a_ss == -3.0,
            CellParams::NonReact => true,
        }));
        let total: f64 = cells.iter().map(|c| c.weight).sum();
        assert_relative_eq!(total, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn joint_table_rows_in_order() {
        let doc = r#"{"default": {"joint_mode": "joint_table", "joint_table": [
            [0.5, -10, -5, 0.1], [1.0, -10, -5, 0.2], [1.5, -10, -5, 0.3],
            [2.0, -5, -3, 0.25], [2.5, -5, -3, 0.15]]}}"#;
        let m = load_behavior_model(doc.as_bytes()).unwrap();
        let cells = enumerate_cells(&m, ConflictType::CutIn, AgentClass::Truck);
        assert_eq!(cells.len(), 5);
        assert_relative_eq!(cells[3].weight, 0.25);
        assert!(matches!(cells[4].params, CellParams::React(p) if p.hrt == 2.5));
    }

    #[test]
    fn class_entry_lookup_and_cap_validation() {
        let doc = format!(
            "{PRODUCT}\n[[entries]]\nagent_class = \"truck\"\njoint_mode = \"joint_table\"\njoint_table = [[1.0, -5.0, -6.0, 1.0]]\n"
        );
        let m = load_behavior_model(doc.as_bytes()).unwrap();
        assert_eq!(m.entry(ConflictType::CutIn, AgentClass::Truck).joint_rows.len(), 1);
        assert_eq!(m.entry(ConflictType::CutIn, AgentClass::Cyclist), &m.default);
        let bad = doc.replace("-6.0, 1.0", "-8.0, 1.0");
        assert!(matches!(
            load_behavior_model(bad.as_bytes()),
            Err(BehaviorError::InvalidValue { .. })
        ));
    }

    #[test]
    fn placeholder_model_loads() {
        let m = BehaviorModel::placeholder();
        let cells = enumerate_cells(&m, ConflictType::RearEndLeadBrake, AgentClass::PassengerVehicle);
        assert_eq!(cells.len(), 30 * 3 * 3);
        let total: f64 = cells.iter().map(|c| c.weight).sum();
        assert_relative_eq!(total, 1.0, epsilon = 1e-9);
        let truck = enumerate_cells(&m, ConflictType::RearEndLeadBrake, AgentClass::Truck);
        assert_eq!(truck.len(), 30 * 3 * 2);
    }

    #[test]
    fn brake_profile_closed_form() {
        let p = BrakeProfile::new(20.0, 0.0, -10.0, -5.0);
        assert_relative_eq!(p.stop_time(), 0.5 + (20.0 - 1.25) / 5.0, epsilon = 1e-12);
        let ramp = 20.0 * 0.5 - 10.0 * 0.125 / 6.0;
        assert_relative_eq!(p.stopping_distance(), ramp + 18.75 * 18.75 / 10.0, epsilon = 1e-9);
        // stops during the ramp
        let p = BrakeProfile::new(1.0, 0.0, -2.0, -8.0);
        assert_relative_eq!(p.stop_time(), 1.0, epsilon = 1e-12);
        assert_eq!(p.at(5.0).speed, 0.0);
    }

    #[test]
    fn brake_profile_starts_from_clamped_accel() {
        let p = BrakeProfile::new(10.0, 2.0, -10.0, -5.0);
        assert_eq!(p.at(0.0).accel, 0.0);
        let p = BrakeProfile::new(10.0, -7.0, -10.0, -5.0);
        assert_eq!(p.at(0.0).accel, -5.0);
    }
}
