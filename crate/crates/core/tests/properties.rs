use fraccol_core::crash::{solve_impulse, BodyInertia, BodyState, ContactState};
use fraccol_core::{
    parse_scene, resample_track, serialize_scene, AgentClass, AgentTrack, Annotations,
    ConflictScene, TrajectorySample,
};
use proptest::prelude::*;

fn cross(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

fn rotate(v: [f64; 2], angle: f64) -> [f64; 2] {
    let (s, c) = angle.sin_cos();
    [c * v[0] - s * v[1], s * v[0] + c * v[1]]
}

fn add(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] + b[0], a[1] + b[1]]
}

fn contact_strategy() -> impl Strategy<Value = (ContactState, BodyInertia, BodyInertia)> {
    (
        prop::array::uniform2(-3.0..3.0f64),
        prop::array::uniform2(-3.0..3.0f64),
        prop::array::uniform2(-25.0..25.0f64),
        prop::array::uniform2(-25.0..25.0f64),
        prop::array::uniform2(-1.0..1.0f64),
        0.0..std::f64::consts::TAU,
        (200.0..3000.0f64, 200.0..3000.0f64),
    )
        .prop_map(|(pa, pb, va, vb, w, normal_angle, (ma, mb))| {
            let contact = ContactState {
                t_contact: 0.0,
                point: [0.0, 0.0],
                normal: [normal_angle.cos(), normal_angle.sin()],
                bodies: [
                    BodyState { position: pa, velocity: va, yaw_rate: w[0] },
                    BodyState { position: pb, velocity: vb, yaw_rate: w[1] },
                ],
            };
            let inertia = |m: f64| BodyInertia { mass: m, yaw_inertia: m * (4.8f64.powi(2) + 1.9f64.powi(2)) / 12.0 };
            (contact, inertia(ma), inertia(mb))
        })
}

fn momenta(c: &ContactState, ia: BodyInertia, ib: BodyInertia, v: [[f64; 2]; 2], w: [f64; 2]) -> ([f64; 2], f64, f64) {
    let m = [ia.mass, ib.mass];
    let inertia = [ia.yaw_inertia, ib.yaw_inertia];
    let mut p = [0.0, 0.0];
    let mut l = 0.0;
    let mut scale = 0.0;
    for i in 0..2 {
        p[0] += m[i] * v[i][0];
        p[1] += m[i] * v[i][1];
        let r = [c.bodies[i].position[0] - c.point[0], c.bodies[i].position[1] - c.point[1]];
        l += m[i] * cross(r, v[i]) + inertia[i] * w[i];
        scale += m[i] * v[i][0].hypot(v[i][1]);
    }
    (p, l, scale)
}

fn normal_contact_speed(c: &ContactState, v: [[f64; 2]; 2], w: [f64; 2]) -> f64 {
    let at_point = |i: usize| {
        let r = [c.point[0] - c.bodies[i].position[0], c.point[1] - c.bodies[i].position[1]];
        [v[i][0] - w[i] * r[1], v[i][1] + w[i] * r[0]]
    };
    let (a, b) = (at_point(0), at_point(1));
    (b[0] - a[0]) * c.normal[0] + (b[1] - a[1]) * c.normal[1]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn impulse_conserves_momentum_and_is_frame_independent(
        (c, ia, ib) in contact_strategy(),
        boost in prop::array::uniform2(-15.0..15.0f64),
        angle in 0.0..std::f64::consts::TAU,
    ) {
        let e = 0.1;
        let sol = solve_impulse(&c, ia, ib, e, 0.55);
        let pre_v = [c.bodies[0].velocity, c.bodies[1].velocity];
        let pre_w = [c.bodies[0].yaw_rate, c.bodies[1].yaw_rate];
        let (p0, l0, scale) = momenta(&c, ia, ib, pre_v, pre_w);
        let (p1, l1, _) = momenta(&c, ia, ib, sol.post_velocity, sol.post_yaw_rate);
        let tol = 1e-9 * scale.max(1.0);
        prop_assert!((p0[0] - p1[0]).abs() <= tol && (p0[1] - p1[1]).abs() <= tol);
        prop_assert!((l0 - l1).abs() <= 1e-9 * (scale * 6.0).max(1.0));

        let vn_pre = normal_contact_speed(&c, pre_v, pre_w);
        let jn = sol.impulse[0] * c.normal[0] + sol.impulse[1] * c.normal[1];
        prop_assert!(jn >= 0.0);
        if jn > 0.0 {
            let vn_post = normal_contact_speed(&c, sol.post_velocity, sol.post_yaw_rate);
            prop_assert!((vn_post + e * vn_pre).abs() <= 1e-9 * vn_pre.abs().max(1.0));
        }

        let mut boosted = c;
        for b in &mut boosted.bodies {
            b.velocity = add(b.velocity, boost);
        }
        let sb = solve_impulse(&boosted, ia, ib, e, 0.55);
        prop_assert!((sb.delta_v[0] - sol.delta_v[0]).abs() <= 1e-9 * sol.delta_v[0].max(1.0));
        prop_assert!((sb.delta_v[1] - sol.delta_v[1]).abs() <= 1e-9 * sol.delta_v[1].max(1.0));

        let mut turned = c;
        turned.point = rotate(c.point, angle);
        turned.normal = rotate(c.normal, angle);
        for b in &mut turned.bodies {
            b.position = rotate(b.position, angle);
            b.velocity = rotate(b.velocity, angle);
        }
        let st = solve_impulse(&turned, ia, ib, e, 0.55);
        let j = sol.impulse[0].hypot(sol.impulse[1]);
        prop_assert!((st.impulse[0].hypot(st.impulse[1]) - j).abs() <= 1e-9 * j.max(1.0));
        prop_assert!((st.delta_v[0] - sol.delta_v[0]).abs() <= 1e-9 * sol.delta_v[0].max(1.0));
    }

    #[test]
    fn scenes_round_trip_and_resampling_is_idempotent(
        steps in prop::collection::vec((0.01..0.2f64, -1.0..1.0f64, 0.0..30.0f64, -3.0..3.0f64), 12..60),
        dt in 0.02..0.2f64,
    ) {
        let mut t = 0.0;
        let mut samples = Vec::new();
        let (mut x, mut y) = (0.0, 0.0);
        for (gap, heading, speed, accel) in steps {
            samples.push(TrajectorySample { t, x, y, heading, speed, accel_long: accel });
            t += gap;
            x += heading.cos() * speed * gap;
            y += heading.sin() * speed * gap;
        }
        prop_assume!(t > 1.0 + 2.0 * dt);
        let track = |id: &str, samples: Vec<TrajectorySample>| AgentTrack {
            agent_id: id.into(),
            agent_class: AgentClass::PassengerVehicle,
            length: 4.5,
            width: 1.8,
            mass: None,
            samples,
        };
        let a = track("a", samples.clone());
        let s = ConflictScene {
            scene_id: "prop".into(),
            track_a: a.clone(),
            track_b: track("b", samples),
            annotations: Annotations::default(),
        };
        let back = parse_scene(serialize_scene(&s).as_bytes()).unwrap();
        prop_assert_eq!(&back, &s);

        let once = resample_track(&a, dt).unwrap();
        prop_assert!(once.samples.iter().all(|p| p.speed >= 0.0));
        let twice = resample_track(&once, dt).unwrap();
        prop_assert_eq!(once, twice);
    }
}
