#![allow(dead_code)]

use fraccol_core::{AgentClass, AgentTrack, Annotations, ConflictScene, TrajectorySample};

/// Track sampled at `dt` over `[0, duration]` from a closed-form state
/// `(x, y, heading, speed, accel)`.
pub fn track_from(
    id: &str,
    class: AgentClass,
    dt: f64,
    duration: f64,
    f: impl Fn(f64) -> (f64, f64, f64, f64, f64),
) -> AgentTrack {
    let n = (duration / dt).round() as usize;
    let samples = (0..=n)
        .map(|k| {
            let t = k as f64 * dt;
            let (x, y, heading, speed, accel_long) = f(t);
            TrajectorySample {
                t,
                x,
                y,
                heading,
                speed,
                accel_long,
            }
        })
        .collect();
    let (length, width) = match class {
        AgentClass::Pedestrian => (0.5, 0.6),
        AgentClass::Cyclist => (1.8, 0.6),
        _ => (4.0, 2.0),
    };
    AgentTrack {
        agent_id: id.to_string(),
        agent_class: class,
        length,
        width,
        mass: None,
        samples,
    }
}

/// Constant-velocity vehicle along `heading` from `(x0, y0)`.
pub fn cruise(id: &str, x0: f64, y0: f64, heading: f64, speed: f64, dt: f64, duration: f64) -> AgentTrack {
    track_from(id, AgentClass::PassengerVehicle, dt, duration, |t| {
        (
            x0 + heading.cos() * speed * t,
            y0 + heading.sin() * speed * t,
            heading,
            speed,
            0.0,
        )
    })
}

pub fn scene(id: &str, a: AgentTrack, b: AgentTrack) -> ConflictScene {
    ConflictScene {
        scene_id: id.to_string(),
        track_a: a,
        track_b: b,
        annotations: Annotations::default(),
    }
}

/// Lead vehicle cruising at `v` along +x from `x0`, braking at `decel`
/// (negative) from `t_b` until it stops.
pub fn braking_lead(id: &str, x0: f64, v: f64, t_b: f64, decel: f64, dt: f64, duration: f64) -> AgentTrack {
    let t_stop = v / -decel;
    track_from(id, AgentClass::PassengerVehicle, dt, duration, |t| {
        if t < t_b {
            return (x0 + v * t, 0.0, 0.0, v, 0.0);
        }
        let tau = (t - t_b).min(t_stop);
        let x = x0 + v * t_b + v * tau + 0.5 * decel * tau * tau;
        if t - t_b < t_stop {
            (x, 0.0, 0.0, v + decel * (t - t_b), decel)
        } else {
            (x, 0.0, 0.0, 0.0, 0.0)
        }
    })
}

/// Rotates every sample of both tracks about the origin and shifts times.
pub fn transform(scene: &ConflictScene, angle: f64, dx: f64, dy: f64, dt_shift: f64) -> ConflictScene {
    let (s, c) = angle.sin_cos();
    let mut out = scene.clone();
    for track in [&mut out.track_a, &mut out.track_b] {
        for p in &mut track.samples {
            let (x, y) = (p.x, p.y);
            p.x = c * x - s * y + dx;
            p.y = s * x + c * y + dy;
            p.heading = fraccol_core::geometry::wrap_angle(p.heading + angle);
            p.t += dt_shift;
        }
    }
    out
}
