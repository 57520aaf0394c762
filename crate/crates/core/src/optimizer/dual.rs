//! Block Lagrangian: residuals, inner minimizers and the priced form used
//! when the rate multipliers are eliminated.

use serde::{Deserialize, Serialize};

use super::closed_form::{
    bits_arsu_opt, bits_grsu_rule, bits_local_opt, closed_form_power, power_opt, slot_time_opt,
    SlotTime,
};
use super::{Multipliers, OptimizerError};
use crate::channel::RateCurve;
use crate::protocol::{BitSplit, Block, PhaseSchedule, Powers, SlotDecision};

/// How the per-phase powers are obtained from their multipliers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerRule {
    /// Bisection on the stationarity condition.
    #[default]
    Numeric,
    /// Closed form on single-stream curves, bisection otherwise.
    ClosedForm,
}

impl PowerRule {
    pub fn power(self, curve: &RateCurve, weight: f64, chi: f64, p_max: f64) -> f64 {
        match self {
            PowerRule::Numeric => power_opt(curve, weight, chi, p_max),
            PowerRule::ClosedForm => closed_form_power(curve, weight, chi, p_max)
                .unwrap_or_else(|| power_opt(curve, weight, chi, p_max)),
        }
    }
}

/// Constraint residuals `g_j(x)` paired with `chi_j`; feasibility is `g <= 0`.
pub fn dual_subgradients(block: &Block<'_>, d: &SlotDecision) -> [f64; 6] {
    let (b, t) = (&d.bits, &d.times);
    let r = block.rates(&d.powers);
    let xi = block.output_ratio;
    [
        block.min_bits - b.total(),
        t.offload + t.relay + block.arsu.time_for(b.arsu) + t.download_arsu + t.download_grsu
            - block.sub_slot(),
        b.arsu + b.grsu - t.offload * r.offload,
        b.grsu - t.relay * r.relay,
        xi * b.arsu - t.download_arsu * r.download_arsu,
        xi * b.grsu - t.download_grsu * r.download_grsu,
    ]
}

pub fn lagrangian(block: &Block<'_>, d: &SlotDecision, m: &Multipliers) -> f64 {
    let g = dual_subgradients(block, d);
    block.weighted_energy(d) + m.0.iter().zip(g).map(|(c, g)| c * g).sum::<f64>()
}

fn resolve(t: SlotTime) -> f64 {
    match t {
        SlotTime::Point(v) => v,
        SlotTime::Indeterminate { .. } => 0.0,
    }
}

/// Minimizes the block Lagrangian at fixed multipliers. Indeterminate GRSU
/// bits and phase times are set to zero; the LP fixes them afterwards.
pub fn lagrangian_minimizer(
    block: &Block<'_>,
    m: &Multipliers,
    rule: PowerRule,
    tol: f64,
) -> Result<SlotDecision, OptimizerError> {
    let (wv, wu) = (block.vehicle_weight, block.arsu_weight);
    let xi = block.output_ratio;
    let local = bits_local_opt(m.min_bits(), wv, block.vehicle, block.slot_len);
    let arsu = bits_arsu_opt(m, xi, wu, block.arsu, block.slot_len, block.vehicles);
    let _ = bits_grsu_rule(m, xi, tol)?;
    let l = block.links;
    let caps = block.caps;
    let powers = Powers {
        offload: rule.power(&l.uplink, wv, m.offload(), caps.offload),
        relay: rule.power(&l.relay, wu, m.relay(), caps.relay),
        download_arsu: rule.power(&l.downlink, wu, m.download_arsu(), caps.download_arsu),
        download_grsu: rule.power(&l.downlink, wu, m.download_grsu(), caps.download_grsu),
    };
    let r = block.rates(&powers);
    let sub = block.sub_slot();
    let time = |p: f64, rate: f64, w: f64, chi: f64| {
        resolve(slot_time_opt(p, rate, w, m.time(), chi, sub, tol))
    };
    let times = PhaseSchedule {
        offload: time(powers.offload, r.offload, wv, m.offload()),
        relay: time(powers.relay, r.relay, wu, m.relay()),
        arsu_compute: block.arsu.time_for(arsu),
        download_arsu: time(powers.download_arsu, r.download_arsu, wu, m.download_arsu()),
        download_grsu: time(powers.download_grsu, r.download_grsu, wu, m.download_grsu()),
        local_compute: block.vehicle.time_for(local),
    };
    Ok(SlotDecision {
        bits: BitSplit {
            local,
            arsu,
            grsu: 0.0,
        },
        powers,
        times,
    })
}

/// Cheapest way to move one bit over a link when time costs `chi2` per second.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Quote {
    power: f64,
    /// J/bit; the rate multiplier that makes the phase term vanish.
    price: f64,
}

fn quote(curve: &RateCurve, weight: f64, chi2: f64, p_max: f64) -> Quote {
    if curve.slope(0.0) <= 0.0 {
        return Quote {
            power: 0.0,
            price: f64::INFINITY,
        };
    }
    if chi2 <= 0.0 {
        return Quote {
            power: 0.0,
            price: weight / curve.slope(0.0),
        };
    }
    // w r(p) - (w p + chi2) r'(p) is increasing; its root minimizes (w p + chi2) / r(p).
    let h = |p: f64| weight * curve.rate(p) - (weight * p + chi2) * curve.slope(p);
    let power = if h(p_max) <= 0.0 {
        p_max
    } else {
        let (mut lo, mut hi) = (0.0, p_max);
        for _ in 0..400 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if h(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    Quote {
        power,
        price: (weight * power + chi2) / curve.rate(power),
    }
}

/// Lagrangian minimum with the rate multipliers set to their per-bit prices
/// and the minimum-bits multiplier chosen by water-filling.
#[derive(Debug, Clone, PartialEq)]
pub struct PricePoint {
    pub multipliers: Multipliers,
    pub decision: SlotDecision,
    /// Dual function value.
    pub dual_value: f64,
    /// Sub-slot budget residual, the derivative of the dual in `chi2`.
    pub time_residual: f64,
}

fn priced(price: f64, bits: f64) -> f64 {
    if bits > 0.0 {
        price * bits
    } else {
        0.0
    }
}

fn carry(bits: f64, rate: f64) -> f64 {
    if bits > 0.0 {
        bits / rate
    } else {
        0.0
    }
}

pub fn price_point(
    block: &Block<'_>,
    chi2: f64,
    rule: PowerRule,
    block_index: (usize, usize),
) -> Result<PricePoint, OptimizerError> {
    let (wv, wu) = (block.vehicle_weight, block.arsu_weight);
    let xi = block.output_ratio;
    let (l, caps) = (block.links, block.caps);
    let q1 = quote(&l.uplink, wv, chi2, caps.offload);
    let q2 = quote(&l.relay, wu, chi2, caps.relay);
    let q4 = quote(&l.downlink, wu, chi2, caps.download_arsu);
    let q5 = quote(&l.downlink, wu, chi2, caps.download_grsu);
    let grsu_price = q1.price + q2.price + xi * q5.price;
    let with = |chi1: f64| Multipliers([chi1, chi2, q1.price, q2.price, q4.price, q5.price]);
    let served = |chi1: f64| {
        let local = bits_local_opt(chi1, wv, block.vehicle, block.slot_len);
        let arsu = bits_arsu_opt(
            &with(chi1),
            xi,
            wu,
            block.arsu,
            block.slot_len,
            block.vehicles,
        );
        (local, arsu)
    };
    let need = block.min_bits;
    let (chi1, local, arsu, grsu) = if need <= 0.0 {
        (0.0, 0.0, 0.0, 0.0)
    } else {
        let top = if grsu_price.is_finite() {
            grsu_price
        } else {
            let (a, b) = served(f64::MAX);
            if a + b < need {
                return Err(OptimizerError::Infeasible {
                    vehicle: block_index.0,
                    slot: block_index.1,
                    reason: "no GRSU path and local plus ARSU capacity below the minimum bits"
                        .into(),
                });
            }
            let mut hi = grsu_price_seed(&q1, &q4, xi, chi2, block);
            while {
                let (a, b) = served(hi);
                a + b < need
            } {
                hi *= 2.0;
            }
            hi
        };
        let (a, b) = served(top);
        if a + b < need {
            (top, a, b, need - a - b)
        } else {
            let (mut lo, mut hi) = (0.0, top);
            for _ in 0..400 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                let (a, b) = served(mid);
                if a + b < need {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let (a, b) = served(hi);
            (hi, a, b, 0.0)
        }
    };
    let m = with(chi1);
    let bits = BitSplit { local, arsu, grsu };
    let used = |bits: f64, w: f64, chi: f64, cap: f64, curve: &RateCurve| {
        if bits > 0.0 {
            rule.power(curve, w, chi, cap)
        } else {
            0.0
        }
    };
    let powers = Powers {
        offload: used(arsu + grsu, wv, m.offload(), caps.offload, &l.uplink),
        relay: used(grsu, wu, m.relay(), caps.relay, &l.relay),
        download_arsu: used(
            xi * arsu,
            wu,
            m.download_arsu(),
            caps.download_arsu,
            &l.downlink,
        ),
        download_grsu: used(
            xi * grsu,
            wu,
            m.download_grsu(),
            caps.download_grsu,
            &l.downlink,
        ),
    };
    let r = block.rates(&powers);
    let times = PhaseSchedule {
        offload: carry(arsu + grsu, r.offload),
        relay: carry(grsu, r.relay),
        arsu_compute: block.arsu.time_for(arsu),
        download_arsu: carry(xi * arsu, r.download_arsu),
        download_grsu: carry(xi * grsu, r.download_grsu),
        local_compute: block.vehicle.time_for(local),
    };
    let decision = SlotDecision {
        bits,
        powers,
        times,
    };
    let time_residual = times.occupied() - block.sub_slot();
    let dual_value = wv * block.local_energy(local)
        + wu * block.arsu_energy(arsu)
        + chi2 * (times.arsu_compute - block.sub_slot())
        + chi1 * (need - bits.total())
        + priced(q1.price, arsu + grsu)
        + priced(q2.price, grsu)
        + priced(q4.price, xi * arsu)
        + priced(q5.price, xi * grsu);
    Ok(PricePoint {
        multipliers: m,
        decision,
        dual_value,
        time_residual,
    })
}

/// A `chi1` large enough to start doubling from when the GRSU is unreachable.
fn grsu_price_seed(q1: &Quote, q4: &Quote, xi: f64, chi2: f64, block: &Block<'_>) -> f64 {
    let base = q1.price + xi * q4.price + chi2 * block.arsu.cycles_per_bit / block.arsu.cpu_freq;
    if base.is_finite() && base > 0.0 {
        base
    } else {
        1e-12
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::fixtures::problem;

    #[test]
    fn subgradients_vanish_when_tight() {
        let p = problem(3e5, 1, 1);
        let b = p.block(0, 0);
        let pt = price_point(&b, 1.0, PowerRule::Numeric, (0, 0)).unwrap();
        let g = dual_subgradients(&b, &pt.decision);
        assert!(g[0].abs() <= 1e-9 * 3e5);
        for v in &g[2..] {
            assert!(v.abs() <= 1e-6, "{g:?}");
        }
    }

    #[test]
    fn dual_value_is_lagrangian() {
        let p = problem(3e5, 1, 1);
        let b = p.block(0, 0);
        let pt = price_point(&b, 0.5, PowerRule::Numeric, (0, 0)).unwrap();
        let l = lagrangian(&b, &pt.decision, &pt.multipliers);
        assert!(
            (l - pt.dual_value).abs() <= 1e-9 * l.abs(),
            "{l} vs {}",
            pt.dual_value
        );
    }

    #[test]
    fn zero_demand_is_free() {
        let p = problem(0.0, 1, 1);
        let pt = price_point(&p.block(0, 0), 0.0, PowerRule::Numeric, (0, 0)).unwrap();
        assert_eq!(pt.dual_value, 0.0);
        assert_eq!(pt.decision.bits.total(), 0.0);
    }

    #[test]
    fn minimizer_sets_indeterminate_to_zero() {
        let p = problem(3e5, 1, 1);
        let b = p.block(0, 0);
        let d =
            lagrangian_minimizer(&b, &Multipliers::default(), PowerRule::Numeric, 1e-9).unwrap();
        assert_eq!(d.bits.total(), 0.0);
        assert_eq!(d.times.occupied(), 0.0);
    }
}
