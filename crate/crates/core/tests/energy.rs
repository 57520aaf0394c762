use proptest::prelude::*;
use uavmec::energy::{compute_energy, flight_energy, ComputeSite};
use uavmec::geometry::make_velocity;
use uavmec::{ComputeModel, FixedWing, RotaryWing, UavPowerModel};

proptest! {
    #[test]
    fn rotary_hover_is_blade_plus_induced(
        tau in 0.01..2.0f64, tip in 50.0..200.0f64, v0 in 1.0..10.0f64, area in 0.1..2.0f64, solidity in 0.01..0.2f64,
    ) {
        let m = RotaryWing::from_rotor(tip, v0, 0.6, solidity, 1.225, area, 11.46);
        let e = flight_energy(&UavPowerModel::RotaryWing(m), [0.0; 3], [0.0; 3], tau).unwrap();
        prop_assert_eq!(e, tau * (m.blade_power + m.induced_power));
    }

    #[test]
    fn compute_energy_is_strictly_convex(bits in 1.0..1e6f64, step in 1.0..1e5f64, k in 1usize..6) {
        let cpu = ComputeModel { cpu_freq: 1e9, cycles_per_bit: 1e3, capacitance: 1e-27 };
        for site in [ComputeSite::Local, ComputeSite::Arsu { vehicles: k }] {
            let e = |b: f64| compute_energy(b, &cpu, 0.2, site);
            prop_assert!(e(bits + 2.0 * step) - 2.0 * e(bits + step) + e(bits) > 0.0);
        }
    }
}

#[test]
fn fixed_wing_energy_is_convex_in_speed() {
    let model = UavPowerModel::FixedWing(FixedWing::default());
    let e = |v: f64| {
        let (xy, z) = (make_velocity(v, 0.7, 0.0), [0.0; 3]);
        flight_energy(&model, xy, z, 0.2).unwrap()
    };
    let h = 0.05;
    for i in 2..4000 {
        let v = i as f64 * h;
        assert!(
            e(v + h) - 2.0 * e(v) + e(v - h) > 0.0,
            "not convex at {v} m/s"
        );
    }
}
