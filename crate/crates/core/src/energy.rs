//! Propulsion, computation and transmission energy.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{self, Real, Vec3};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnergyError {
    #[error("fixed-wing model needs a nonzero horizontal speed")]
    FixedWingStall,
    #[error("transmit power {power} W exceeds the cap {cap} W")]
    PowerCapExceeded { power: f64, cap: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedWing<T> {
    pub c1: T,
    pub c2: T,
    /// Climb/descent coefficient.
    pub c3: T,
}

impl<T: Real> Default for FixedWing<T> {
    fn default() -> Self {
        Self {
            c1: T::lit(9.26e-4),
            c2: T::lit(2250.0),
            c3: T::lit(3.33),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotaryWing<T> {
    /// Blade profile power in hover, W.
    pub blade_power: T,
    /// Induced power in hover, W.
    pub induced_power: T,
    /// Climb/descent coefficient.
    pub climb_power: T,
    pub tip_speed: T,
    /// Mean rotor induced velocity in hover.
    pub induced_velocity: T,
    pub drag_ratio: T,
    pub solidity: T,
    pub air_density: T,
    pub disc_area: T,
}

impl<T: Real> RotaryWing<T> {
    /// Derives hover powers from rotor constants.
    pub fn from_rotor(
        tip_speed: T,
        induced_velocity: T,
        drag_ratio: T,
        solidity: T,
        air_density: T,
        disc_area: T,
        climb_power: T,
    ) -> Self {
        let blade_power = T::lit(12.0 * 30f64.powi(3) * 0.4f64.powi(3) / 8.0)
            * air_density
            * solidity
            * disc_area;
        let induced_power =
            T::lit(1.1 * 20f64.powf(1.5)) / (T::lit(2.0) * air_density * disc_area).sqrt();
        Self {
            blade_power,
            induced_power,
            climb_power,
            tip_speed,
            induced_velocity,
            drag_ratio,
            solidity,
            air_density,
            disc_area,
        }
    }
}

impl<T: Real> Default for RotaryWing<T> {
    fn default() -> Self {
        Self::from_rotor(
            T::lit(120.0),
            T::lit(4.3),
            T::lit(0.6),
            T::lit(0.05),
            T::lit(1.225),
            T::lit(0.503),
            T::lit(11.46),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UavPowerModel<T> {
    FixedWing(FixedWing<T>),
    RotaryWing(RotaryWing<T>),
}

/// Propulsion energy over one slot of length `tau`.
pub fn flight_energy<T: Real>(
    model: &UavPowerModel<T>,
    v_xy: Vec3<T>,
    v_z: Vec3<T>,
    tau: T,
) -> Result<T, EnergyError> {
    let h = scalar::norm(v_xy);
    let vz = scalar::norm(v_z);
    let power = match model {
        UavPowerModel::FixedWing(m) => {
            if h == T::zero() {
                return Err(EnergyError::FixedWingStall);
            }
            m.c1 * h.powi(3) + m.c2 / h + m.c3 * vz
        }
        UavPowerModel::RotaryWing(m) => {
            let (one, two) = (T::one(), T::lit(2.0));
            let h2 = h * h;
            let v0_2 = m.induced_velocity * m.induced_velocity;
            let induced = ((one + h2 * h2 / (T::lit(4.0) * v0_2 * v0_2)).sqrt()
                - h2 / (two * v0_2))
                .max(T::zero())
                .sqrt();
            m.blade_power * (one + T::lit(3.0) * h2 / (m.tip_speed * m.tip_speed))
                + m.drag_ratio * m.solidity * m.air_density * m.disc_area * h2 * h / two
                + m.induced_power * induced
                + m.climb_power * vz
        }
    };
    Ok(tau * power)
}

/// Splits a velocity into its horizontal and vertical parts.
pub fn split_velocity<T: Real>(v: Vec3<T>) -> (Vec3<T>, Vec3<T>) {
    ([v[0], v[1], T::zero()], [T::zero(), T::zero(), v[2]])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComputeModel<T> {
    /// Maximum CPU frequency, cycles/s.
    pub cpu_freq: T,
    pub cycles_per_bit: T,
    /// Effective switched capacitance.
    pub capacitance: T,
}

impl<T: Real> ComputeModel<T> {
    /// Bits this CPU can finish within `window` seconds.
    pub fn capacity(&self, window: T) -> T {
        self.cpu_freq * window / self.cycles_per_bit
    }

    pub fn time_for(&self, bits: T) -> T {
        self.cycles_per_bit * bits / self.cpu_freq
    }
}

/// Where a batch of bits is processed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ComputeSite {
    Local,
    /// At the ARSU, which serves `vehicles` users within a slot.
    Arsu {
        vehicles: usize,
    },
}

/// `kappa c^3 b^3 / tau^2`, times `K^2` at the ARSU.
pub fn compute_energy<T: Real>(bits: T, model: &ComputeModel<T>, tau: T, site: ComputeSite) -> T {
    let c = model.cycles_per_bit;
    let base = model.capacitance * c * c * c * bits * bits * bits / (tau * tau);
    match site {
        ComputeSite::Local => base,
        ComputeSite::Arsu { vehicles } => {
            let k = T::from_usize(vehicles).unwrap();
            base * k * k
        }
    }
}

/// `p * t`, rejecting powers above the cap.
pub fn tx_energy<T: Real>(p: T, t: T, p_max: T) -> Result<T, EnergyError> {
    if p > p_max {
        return Err(EnergyError::PowerCapExceeded {
            power: p.to_f64().unwrap_or(f64::NAN),
            cap: p_max.to_f64().unwrap_or(f64::NAN),
        });
    }
    Ok(p * t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rotary() -> UavPowerModel<f64> {
        UavPowerModel::RotaryWing(RotaryWing::default())
    }

    #[test]
    fn hover_powers_match_rotor_formulas() {
        let m = RotaryWing::<f64>::default();
        // 12*30^3*0.4^3*rho*s*G/8 and 1.1*20^1.5/sqrt(2 rho G) by hand
        assert!((m.blade_power - 79.8565).abs() < 1e-3);
        assert!((m.induced_power - 88.6287).abs() < 1e-3);
    }

    #[test]
    fn rotary_hover_slot_energy() {
        let m = RotaryWing::<f64>::default();
        let e = flight_energy(&rotary(), [0.0; 3], [0.0; 3], 0.2).unwrap();
        assert_eq!(e, 0.2 * (m.blade_power + m.induced_power));
        assert!((e - 33.7).abs() / 33.7 < 0.01);
    }

    #[test]
    fn fixed_wing_cruise_energy() {
        let fw = UavPowerModel::<f64>::FixedWing(FixedWing::default());
        let e = flight_energy(&fw, [10.0, 0.0, 0.0], [0.0; 3], 0.2).unwrap();
        assert!((e - 0.2 * (9.26e-4 * 1e3 + 225.0)).abs() < 1e-12);
        assert!((e - 45.19).abs() < 0.01);
        assert_eq!(
            flight_energy(&fw, [0.0; 3], [0.0, 0.0, 1.0], 0.2),
            Err(EnergyError::FixedWingStall)
        );
    }

    #[test]
    fn rotary_climb_term_is_linear() {
        let a = flight_energy(&rotary(), [3.0, 4.0, 0.0], [0.0, 0.0, 1.5], 0.2).unwrap();
        let b = flight_energy(&rotary(), [3.0, 4.0, 0.0], [0.0, 0.0, 3.0], 0.2).unwrap();
        assert!((b - a - 0.2 * 11.46 * 1.5).abs() < 1e-12);
    }

    #[test]
    fn compute_energy_values() {
        let m = ComputeModel::<f64> {
            cpu_freq: 1e9,
            cycles_per_bit: 1e3,
            capacitance: 1e-27,
        };
        assert_eq!(compute_energy(0.0, &m, 0.2, ComputeSite::Local), 0.0);
        let local = compute_energy(2e5, &m, 0.2, ComputeSite::Local);
        assert!((local - 0.2).abs() < 1e-12);
        let arsu = compute_energy(2e5, &m, 0.2, ComputeSite::Arsu { vehicles: 3 });
        assert!((arsu - 1.8).abs() < 1e-12);
        assert!((m.capacity(0.2) - 2e5).abs() < 1e-9);
    }

    #[test]
    fn transmit_energy_and_cap() {
        assert_eq!(tx_energy(0.0f64, 5.0, 3.162), Ok(0.0));
        assert!((tx_energy(3.162f64, 0.01, 3.162).unwrap() - 0.03162).abs() < 1e-15);
        assert!(matches!(
            tx_energy(4.0f64, 0.01, 3.162),
            Err(EnergyError::PowerCapExceeded { .. })
        ));
    }

    #[test]
    fn f32_evaluation() {
        let m = ComputeModel::<f32> {
            cpu_freq: 1e9,
            cycles_per_bit: 1e3,
            capacitance: 1e-27,
        };
        let e = compute_energy(2e5f32, &m, 0.2, ComputeSite::Local);
        assert!((e - 0.2).abs() < 1e-5);
    }
}
