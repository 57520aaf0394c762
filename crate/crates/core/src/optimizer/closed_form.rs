//! Per-variable minimizers of the block Lagrangian.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use super::{Multipliers, OptimizerError};
use crate::channel::{LinkChannel, RadioConfig, RateBound, RateCurve};
use crate::energy::ComputeModel;

/// Local bits minimizing `w kappa c^3 b^3 / tau^2 - chi1 b` over the local window.
pub fn bits_local_opt(chi1: f64, weight: f64, cpu: &ComputeModel<f64>, tau: f64) -> f64 {
    let c = cpu.cycles_per_bit;
    let cap = cpu.capacity(tau);
    if chi1 <= 0.0 {
        return 0.0;
    }
    let b = tau * (chi1 / (3.0 * weight * cpu.capacitance * c * c * c)).sqrt();
    b.clamp(0.0, cap)
}

/// ARSU bits; zero whenever the marginal price `zeta` is negative.
pub fn bits_arsu_opt(
    m: &Multipliers,
    output_ratio: f64,
    arsu_weight: f64,
    cpu: &ComputeModel<f64>,
    tau: f64,
    vehicles: usize,
) -> f64 {
    let (f, c) = (cpu.cpu_freq, cpu.cycles_per_bit);
    let zeta = f * (m.min_bits() - m.offload() - output_ratio * m.download_arsu()) - m.time() * c;
    if zeta <= 0.0 {
        return 0.0;
    }
    let k = vehicles as f64;
    let b = tau / k * (zeta / (3.0 * arsu_weight * cpu.capacitance * c * c * c * f)).sqrt();
    b.clamp(0.0, cpu.capacity(tau / k))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GrsuRule {
    Zero,
    /// Any nonnegative amount minimizes the Lagrangian; left to the LP.
    Indeterminate,
}

/// Sign rule for the GRSU bits. `tol` is relative to the multiplier scale,
/// since bit prices are tiny in J/bit.
pub fn bits_grsu_rule(
    m: &Multipliers,
    output_ratio: f64,
    tol: f64,
) -> Result<GrsuRule, OptimizerError> {
    let margin = m.grsu_margin(output_ratio);
    let scale = m
        .min_bits()
        .max(m.offload() + m.relay() + output_ratio * m.download_grsu());
    if margin > tol * scale {
        Ok(GrsuRule::Zero)
    } else if margin >= -tol * scale {
        Ok(GrsuRule::Indeterminate)
    } else {
        Err(OptimizerError::DualInfeasible { margin })
    }
}

/// Root of `w - chi r'(p) = 0` on `[0, p_max]` by bisection, clamped at the ends.
pub fn power_opt(curve: &RateCurve, weight: f64, chi: f64, p_max: f64) -> f64 {
    let f = |p: f64| weight - chi * curve.slope(p);
    if chi <= 0.0 || f(0.0) >= 0.0 {
        return 0.0;
    }
    if f(p_max) <= 0.0 {
        return p_max;
    }
    let (mut lo, mut hi) = (0.0, p_max);
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= 1e-10f64.min(1e-13 * hi) || mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotTime {
    Point(f64),
    /// Every duration in `[0, upper]` is optimal.
    Indeterminate {
        upper: f64,
    },
}

impl SlotTime {
    pub fn is_indeterminate(&self) -> bool {
        matches!(self, SlotTime::Indeterminate { .. })
    }
}

/// Sign rule on `s = w p + chi2 - chi r(p)`; `tol` is relative to the larger term.
pub fn slot_time_opt(
    p: f64,
    rate: f64,
    weight: f64,
    chi2: f64,
    chi: f64,
    sub_slot: f64,
    tol: f64,
) -> SlotTime {
    let cost = weight * p + chi2;
    let gain = chi * rate;
    let s = cost - gain;
    let scale = cost.max(gain);
    if s < -tol * scale {
        SlotTime::Point(sub_slot)
    } else if s > tol * scale {
        SlotTime::Point(0.0)
    } else {
        SlotTime::Indeterminate { upper: sub_slot }
    }
}

/// Offloading power and time rule from a single-stream rate bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClosedFormPower {
    pub unclamped: f64,
    pub power: f64,
    pub time: SlotTime,
}

/// Offloading power for the lower or upper rate bound of a link.
#[allow(clippy::too_many_arguments)]
pub fn closed_form_phase1(
    ch: &LinkChannel,
    bound: RateBound,
    weight: f64,
    chi2: f64,
    chi3: f64,
    cfg: &RadioConfig,
    p_max: f64,
    sub_slot: f64,
    tol: f64,
) -> ClosedFormPower {
    let phi = ch.trace_power();
    let lower =
        cfg.bandwidth * (chi3 / (weight * LN_2) - cfg.noise_density * ch.tx_len() as f64 / phi);
    let unclamped = match bound {
        RateBound::Lower => lower,
        RateBound::Upper => ch.tx_len().min(ch.rx_len()) as f64 * lower,
    };
    let power = unclamped.clamp(0.0, p_max);
    let rate = ch.bound_curve(cfg, bound).rate(power);
    let time = slot_time_opt(power, rate, weight, chi2, chi3, sub_slot, tol);
    ClosedFormPower {
        unclamped,
        power,
        time,
    }
}

/// Stationary power for any single-stream curve `B' log2(1 + g p)`:
/// `B' chi / (w ln 2) - 1/g`, clamped. `None` for multi-stream curves.
pub fn closed_form_power(curve: &RateCurve, weight: f64, chi: f64, p_max: f64) -> Option<f64> {
    match curve.gains() {
        [g] if *g > 0.0 => {
            Some((curve.bandwidth() * chi / (weight * LN_2) - 1.0 / g).clamp(0.0, p_max))
        }
        _ => None,
    }
}
