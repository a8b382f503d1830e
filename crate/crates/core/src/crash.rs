//! Contact detection between swept footprints, planar impulse-momentum
//! impact solution, and the delta-v / contact-speed severity mapping.

use std::cmp::Ordering;
use std::fmt;

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::geometry::{clip_convex, polygon_centroid, Vec2};
use crate::scene::{common_span, AgentClass, AgentTrack, ConflictScene};

/// Exact statute-mile-per-hour conversion.
pub const MPH_TO_MPS: f64 = 0.44704;
/// Contact times are refined by bisection to this resolution.
pub const CONTACT_RESOLUTION_S: f64 = 1e-3;

/// Loss severity. Ordered by badness: `Lnone < L2 < L1 < L0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SeverityLevel {
    L0,
    L1,
    L2,
    Lnone,
}

impl SeverityLevel {
    /// Most severe first.
    pub const ALL: [SeverityLevel; 4] = [
        SeverityLevel::L0,
        SeverityLevel::L1,
        SeverityLevel::L2,
        SeverityLevel::Lnone,
    ];

    fn rank(self) -> u8 {
        match self {
            SeverityLevel::Lnone => 0,
            SeverityLevel::L2 => 1,
            SeverityLevel::L1 => 2,
            SeverityLevel::L0 => 3,
        }
    }

    pub fn is_collision(self) -> bool {
        self != SeverityLevel::Lnone
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SeverityLevel::L0 => "L0",
            SeverityLevel::L1 => "L1",
            SeverityLevel::L2 => "L2",
            SeverityLevel::Lnone => "Lnone",
        }
    }
}

impl std::str::FromStr for SeverityLevel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SeverityLevel::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| format!("unknown severity level `{s}`"))
    }
}

impl Ord for SeverityLevel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.rank().cmp(&other.rank())
    }
}

impl PartialOrd for SeverityLevel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for SeverityLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassMasses {
    pub motorcycle: f64,
    pub cyclist: f64,
    pub pedestrian: f64,
}

impl Default for ClassMasses {
    fn default() -> Self {
        Self {
            motorcycle: 240.0,
            cyclist: 90.0,
            pedestrian: 75.0,
        }
    }
}

/// Severity band edges, stored in mph.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeverityThresholds {
    pub vehicle_l1_mph: f64,
    pub vehicle_l0_mph: f64,
    pub vru_l1_mph: f64,
    pub vru_l0_mph: f64,
}

impl Default for SeverityThresholds {
    fn default() -> Self {
        Self {
            vehicle_l1_mph: 6.0,
            vehicle_l0_mph: 20.0,
            vru_l1_mph: 5.0,
            vru_l0_mph: 15.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrashConfig {
    /// Normal coefficient of restitution.
    pub restitution: f64,
    /// Tangential impulse cap as a fraction of the normal impulse.
    pub friction: f64,
    /// Vehicle mass per footprint area, kg/m^2.
    pub mass_per_area_kg_m2: f64,
    pub class_mass_kg: ClassMasses,
    pub thresholds: SeverityThresholds,
}

impl Default for CrashConfig {
    fn default() -> Self {
        Self {
            restitution: 0.1,
            friction: 0.55,
            mass_per_area_kg_m2: 175.0,
            class_mass_kg: ClassMasses::default(),
            thresholds: SeverityThresholds::default(),
        }
    }
}

impl CrashConfig {
    pub fn validate(&self) -> Result<(), String> {
        let t = &self.thresholds;
        let m = &self.class_mass_kg;
        let checks = [
            ((0.0..=1.0).contains(&self.restitution), "crash.restitution must lie in [0, 1]"),
            ((0.0..=2.0).contains(&self.friction), "crash.friction must lie in [0, 2]"),
            (
                self.mass_per_area_kg_m2 > 0.0 && self.mass_per_area_kg_m2 <= 2000.0,
                "crash.mass_per_area_kg_m2 must lie in (0, 2000]",
            ),
            (
                [m.motorcycle, m.cyclist, m.pedestrian].iter().all(|v| *v > 0.0 && v.is_finite()),
                "crash.class_mass_kg entries must be positive",
            ),
            (
                0.0 < t.vehicle_l1_mph && t.vehicle_l1_mph < t.vehicle_l0_mph,
                "vehicle thresholds must satisfy 0 < l1 < l0",
            ),
            (
                0.0 < t.vru_l1_mph && t.vru_l1_mph < t.vru_l0_mph,
                "vru thresholds must satisfy 0 < l1 < l0",
            ),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, msg)) => Err((*msg).to_string()),
            None => Ok(()),
        }
    }
}

/// Kinematic state of one body at the instant of contact.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BodyState {
    pub position: [f64; 2],
    pub velocity: [f64; 2],
    pub yaw_rate: f64,
}

impl BodyState {
    fn pos(&self) -> Vec2 {
        Vec2::new(self.position[0], self.position[1])
    }

    fn vel(&self) -> Vec2 {
        Vec2::new(self.velocity[0], self.velocity[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContactState {
    pub t_contact: f64,
    pub point: [f64; 2],
    /// Unit normal pointing from body `a` toward body `b`.
    pub normal: [f64; 2],
    pub bodies: [BodyState; 2],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyInertia {
    pub mass: f64,
    pub yaw_inertia: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ImpulseSolution {
    /// Impulse applied to body `b`; body `a` receives its negation.
    pub impulse: [f64; 2],
    pub post_velocity: [[f64; 2]; 2],
    pub post_yaw_rate: [f64; 2],
    pub delta_v: [f64; 2],
    pub sliding: bool,
}

/// Earliest time the two footprints overlap, refined by bisection between
/// grid steps. Tracks are expected on a uniform grid; the coarser of the two
/// first sample spacings is used as the scan step.
pub fn detect_collision(a: &AgentTrack, b: &AgentTrack) -> Option<ContactState> {
    let (start, end) = common_span(a, b);
    if end < start {
        return None;
    }
    let spacing = |t: &AgentTrack| {
        t.samples
            .windows(2)
            .next()
            .map_or(f64::INFINITY, |w| w[1].t - w[0].t)
    };
    let step = spacing(a).min(spacing(b)).min((end - start).max(CONTACT_RESOLUTION_S));
    let overlaps = |t: f64| a.footprint_at(t).penetration(&b.footprint_at(t)).is_some();

    if overlaps(start) {
        return Some(contact_state(a, b, start));
    }
    let steps = ((end - start) / step).ceil() as usize;
    let mut prev = start;
    for k in 1..=steps {
        let t = (start + k as f64 * step).min(end);
        if overlaps(t) {
            let (mut lo, mut hi) = (prev, t);
            while hi - lo > 0.5 * CONTACT_RESOLUTION_S {
                let mid = 0.5 * (lo + hi);
                if overlaps(mid) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Some(contact_state(a, b, hi));
        }
        prev = t;
    }
    None
}

fn contact_state(a: &AgentTrack, b: &AgentTrack, t: f64) -> ContactState {
    let sa = a.state_at(t);
    let sb = b.state_at(t);
    let fa = a.footprint(&sa);
    let fb = b.footprint(&sb);
    let overlap = clip_convex(&fa.corners(), &fb.corners());
    let point = polygon_centroid(&overlap).unwrap_or((sa.position + sb.position) * 0.5);
    let normal = fa
        .penetration(&fb)
        .map(|p| p.normal)
        .unwrap_or_else(|| {
            let d = sb.position - sa.position;
            if d.norm() > 0.0 {
                d.normalize()
            } else {
                Vec2::x()
            }
        });
    let body = |s: &crate::scene::KinematicState, track: &AgentTrack| BodyState {
        position: [s.position.x, s.position.y],
        velocity: {
            let v = s.velocity();
            [v.x, v.y]
        },
        yaw_rate: track.yaw_rate_at(t),
    };
    ContactState {
        t_contact: t,
        point: [point.x, point.y],
        normal: [normal.x, normal.y],
        bodies: [body(&sa, a), body(&sb, b)],
    }
}

/// Mass from the track (if given), the class default, or footprint area;
/// yaw inertia of a uniform rectangle.
pub fn estimate_inertia(track: &AgentTrack, cfg: &CrashConfig) -> BodyInertia {
    let mass = track.mass.unwrap_or(match track.agent_class {
        AgentClass::PassengerVehicle | AgentClass::Truck => {
            cfg.mass_per_area_kg_m2 * track.length * track.width
        }
        AgentClass::Motorcycle => cfg.class_mass_kg.motorcycle,
        AgentClass::Cyclist => cfg.class_mass_kg.cyclist,
        AgentClass::Pedestrian => cfg.class_mass_kg.pedestrian,
    });
    BodyInertia {
        mass,
        yaw_inertia: mass * (track.length.powi(2) + track.width.powi(2)) / 12.0,
    }
}

fn perp(v: &Vec2) -> Vec2 {
    Vec2::new(-v.y, v.x)
}

fn crossz(a: &Vec2, b: &Vec2) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Planar rigid-body impulse at the contact point with Newton restitution
/// along the normal and a Coulomb cap on the tangential impulse.
pub fn solve_impulse(
    contact: &ContactState,
    inertia_a: BodyInertia,
    inertia_b: BodyInertia,
    restitution: f64,
    friction: f64,
) -> ImpulseSolution {
    let [ba, bb] = contact.bodies;
    let p = Vec2::new(contact.point[0], contact.point[1]);
    let n = Vec2::new(contact.normal[0], contact.normal[1]).normalize();
    let t = perp(&n);
    let ra = p - ba.pos();
    let rb = p - bb.pos();
    let va = ba.vel() + perp(&ra) * ba.yaw_rate;
    let vb = bb.vel() + perp(&rb) * bb.yaw_rate;
    let v_rel = vb - va;
    let vn = v_rel.dot(&n);
    let vt = v_rel.dot(&t);

    let zero = ImpulseSolution {
        impulse: [0.0, 0.0],
        post_velocity: [ba.velocity, bb.velocity],
        post_yaw_rate: [ba.yaw_rate, bb.yaw_rate],
        delta_v: [0.0, 0.0],
        sliding: false,
    };
    if vn >= 0.0 {
        return zero;
    }

    // Relative contact-point velocity change per unit impulse on b.
    let arm = |r: &Vec2, inertia: f64| {
        Matrix2::new(r.y * r.y, -r.x * r.y, -r.x * r.y, r.x * r.x) / inertia
    };
    let k = Matrix2::identity() * (1.0 / inertia_a.mass + 1.0 / inertia_b.mass)
        + arm(&ra, inertia_a.yaw_inertia)
        + arm(&rb, inertia_b.yaw_inertia);

    let target = n * (-(1.0 + restitution) * vn) - t * vt;
    let sticking = k.try_inverse().map(|inv| inv * target);
    let (impulse, sliding) = match sticking {
        Some(j) if j.dot(&n) >= 0.0 && j.dot(&t).abs() <= friction * j.dot(&n) => (j, false),
        _ => {
            let dir_sign = if vt != 0.0 { vt.signum() } else { 1.0 };
            let dir = n - t * (friction * dir_sign);
            let denom = n.dot(&(k * dir));
            let (dir, denom) = if denom > 0.0 {
                (dir, denom)
            } else {
                (n, n.dot(&(k * n)))
            };
            (dir * (-(1.0 + restitution) * vn / denom), true)
        }
    };

    let va_post = ba.vel() - impulse / inertia_a.mass;
    let vb_post = bb.vel() + impulse / inertia_b.mass;
    let wa_post = ba.yaw_rate - crossz(&ra, &impulse) / inertia_a.yaw_inertia;
    let wb_post = bb.yaw_rate + crossz(&rb, &impulse) / inertia_b.yaw_inertia;
    let j = impulse.norm();
    ImpulseSolution {
        impulse: [impulse.x, impulse.y],
        post_velocity: [[va_post.x, va_post.y], [vb_post.x, vb_post.y]],
        post_yaw_rate: [wa_post, wb_post],
        delta_v: [j / inertia_a.mass, j / inertia_b.mass],
        sliding,
    }
}

fn band(value_mps: f64, l1_mph: f64, l0_mph: f64) -> SeverityLevel {
    if value_mps >= l0_mph * MPH_TO_MPS {
        SeverityLevel::L0
    } else if value_mps >= l1_mph * MPH_TO_MPS {
        SeverityLevel::L1
    } else {
        SeverityLevel::L2
    }
}

/// Vehicle-vehicle severity from the larger of the two delta-v values.
/// Band edges belong to the more severe level.
pub fn severity_vehicle(
    delta_v_responder: f64,
    delta_v_initiator: f64,
    thresholds: &SeverityThresholds,
) -> SeverityLevel {
    band(
        delta_v_responder.max(delta_v_initiator),
        thresholds.vehicle_l1_mph,
        thresholds.vehicle_l0_mph,
    )
}

/// Vehicle-VRU severity from the relative resultant contact speed.
pub fn severity_vru(relative_contact_speed: f64, thresholds: &SeverityThresholds) -> SeverityLevel {
    band(relative_contact_speed, thresholds.vru_l1_mph, thresholds.vru_l0_mph)
}

/// Severity of the first contact between two tracks, with its evidence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CollisionOutcome {
    pub severity: SeverityLevel,
    pub contact: Option<ContactState>,
    /// Delta-v of (a, b) for vehicle contacts.
    pub delta_v: Option<[f64; 2]>,
    /// Relative resultant speed at contact.
    pub contact_speed: Option<f64>,
}

impl CollisionOutcome {
    pub fn none() -> Self {
        Self {
            severity: SeverityLevel::Lnone,
            contact: None,
            delta_v: None,
            contact_speed: None,
        }
    }
}

/// Runs contact detection and severity mapping on two tracks as given.
pub fn collision_outcome(a: &AgentTrack, b: &AgentTrack, cfg: &CrashConfig) -> CollisionOutcome {
    let Some(contact) = detect_collision(a, b) else {
        return CollisionOutcome::none();
    };
    let [ba, bb] = contact.bodies;
    let contact_speed = (bb.vel() - ba.vel()).norm();
    if a.agent_class.is_vru() || b.agent_class.is_vru() {
        return CollisionOutcome {
            severity: severity_vru(contact_speed, &cfg.thresholds),
            contact: Some(contact),
            delta_v: None,
            contact_speed: Some(contact_speed),
        };
    }
    let sol = solve_impulse(
        &contact,
        estimate_inertia(a, cfg),
        estimate_inertia(b, cfg),
        cfg.restitution,
        cfg.friction,
    );
    CollisionOutcome {
        severity: severity_vehicle(sol.delta_v[0], sol.delta_v[1], &cfg.thresholds),
        contact: Some(contact),
        delta_v: Some(sol.delta_v),
        contact_speed: Some(contact_speed),
    }
}

/// Outcome of the logged (unmodified) tracks of a scene.
pub fn gt_outcome(scene: &ConflictScene, cfg: &CrashConfig) -> CollisionOutcome {
    collision_outcome(&scene.track_a, &scene.track_b, cfg)
}
