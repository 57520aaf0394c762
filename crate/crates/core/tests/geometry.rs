use std::f64::consts::{FRAC_PI_2, TAU};

use proptest::prelude::*;
use uavmec::geometry::{make_velocity, rotation_matrix, NetworkState, NodeState};
use uavmec::scalar::{norm, sub};
use uavmec::{ArraySpec, Vec3};

fn det(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

fn array() -> impl Strategy<Value = ArraySpec> {
    (
        1usize..7,
        1usize..7,
        0.01f64..1.0,
        -FRAC_PI_2..FRAC_PI_2,
        -FRAC_PI_2..FRAC_PI_2,
        0.0..TAU,
    )
        .prop_map(|(r, c, d, a, b, g)| ArraySpec::new(r, c, d, a, b, g).unwrap())
}

fn point(scale: f64) -> impl Strategy<Value = Vec3> {
    prop::array::uniform3(-scale..scale)
}

fn pairwise(ps: &[Vec3]) -> Vec<f64> {
    ps.iter()
        .flat_map(|a| ps.iter().map(move |b| norm(sub(*a, *b))))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn rotation_is_proper(a in -FRAC_PI_2..FRAC_PI_2, b in -FRAC_PI_2..FRAC_PI_2, g in 0.0..TAU) {
        let r = rotation_matrix(a, b, g);
        for i in 0..3 {
            for j in 0..3 {
                let rtr: f64 = (0..3).map(|k| r[k][i] * r[k][j]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                prop_assert!((rtr - want).abs() <= 1e-12);
            }
        }
        prop_assert!((det(&r) - 1.0).abs() <= 1e-12);
    }
}

proptest! {
    #[test]
    fn offsets_are_centrosymmetric(spec in array()) {
        let offs = spec.offsets();
        let tol = 1e-12 * spec.spacing() * (spec.rows() + spec.cols()) as f64;
        for o in &offs {
            let mirrored = offs.iter().any(|p| (0..3).all(|i| (o[i] + p[i]).abs() <= tol));
            prop_assert!(mirrored, "no mirror for {o:?}");
        }
    }

    #[test]
    fn advance_is_rigid_and_keeps_grsu(
        vehicle in array(), arsu in array(), grsu in array(),
        vc in point(200.0), ac in point(200.0), gc in point(200.0),
        v_speed in 0.0..40.0f64, v_az in 0.0..TAU,
        a_speed in 0.0..40.0f64, a_az in 0.0..TAU, a_el in -1.0..1.0f64,
        steps in 1usize..5,
    ) {
        let state = NetworkState::new(
            10,
            0.2,
            vec![NodeState::new(vc, make_velocity(v_speed, v_az, 0.0), vehicle)],
            NodeState::new(ac, make_velocity(a_speed, a_az, a_el), arsu),
            NodeState::new(gc, [0.0; 3], grsu),
        ).unwrap();
        let mut next = state.clone();
        for _ in 0..steps {
            next = next.advance().unwrap();
        }
        for (before, after) in [
            (&state.vehicles[0], &next.vehicles[0]),
            (&state.arsu, &next.arsu),
            (&state.grsu, &next.grsu),
        ] {
            let (d0, d1) = (pairwise(&before.element_positions()), pairwise(&after.element_positions()));
            for (x, y) in d0.iter().zip(&d1) {
                prop_assert!((x - y).abs() <= 1e-9 * (1.0 + x));
            }
        }
        prop_assert_eq!(next.grsu.center, state.grsu.center);
        prop_assert_eq!(next.grsu.element_positions(), state.grsu.element_positions());
    }
}
