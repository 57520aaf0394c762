//! Recovery LP: with local bits, ARSU bits and powers fixed, choose the GRSU
//! bits and phase times that minimize transmit energy.

use serde::{Deserialize, Serialize};

use super::OptimizerError;
use crate::lp::{LinearProgram, LpError, Relation};
use crate::protocol::{Allocation, BitSplit, Block, PhaseSchedule, Powers, Problem, SlotDecision};

/// The part of a decision the dual pins down uniquely.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FixedDecision {
    pub local: f64,
    pub arsu: f64,
    pub powers: Powers,
}

impl From<&SlotDecision> for FixedDecision {
    fn from(d: &SlotDecision) -> Self {
        Self {
            local: d.bits.local,
            arsu: d.bits.arsu,
            powers: d.powers,
        }
    }
}

fn carry(bits: f64, rate: f64) -> f64 {
    if bits > 0.0 {
        bits / rate
    } else {
        0.0
    }
}

/// One block of the LP, in variables `[b_R, t1, t2, t4, t5]` scaled to bits of
/// the minimum demand and to sub-slots.
pub fn solve_p2_block(
    block: &Block<'_>,
    fixed: &FixedDecision,
    index: (usize, usize),
) -> Result<SlotDecision, OptimizerError> {
    let infeasible = |reason: &str| OptimizerError::Infeasible {
        vehicle: index.0,
        slot: index.1,
        reason: reason.to_string(),
    };
    let sub = block.sub_slot();
    let bs = block.min_bits.max(1.0);
    let xi = block.output_ratio;
    let (wv, wu) = (block.vehicle_weight, block.arsu_weight);
    let p = &fixed.powers;
    let r = block.rates(p);
    let arsu_time = block.arsu.time_for(fixed.arsu);
    if arsu_time > sub * (1.0 + 1e-12) {
        return Err(infeasible("ARSU compute exceeds the sub-slot"));
    }
    let mut lp = LinearProgram::new(vec![
        0.0,
        wv * p.offload * sub,
        wu * p.relay * sub,
        wu * p.download_arsu * sub,
        wu * p.download_grsu * sub,
    ]);
    let k = |rate: f64| rate * sub / bs;
    let need = block.min_bits - fixed.local - fixed.arsu;
    let rows = [
        (vec![1.0, 0.0, 0.0, 0.0, 0.0], Relation::Ge, need / bs),
        (
            vec![0.0, 1.0, 1.0, 1.0, 1.0],
            Relation::Le,
            1.0 - arsu_time / sub,
        ),
        (
            vec![1.0, -k(r.offload), 0.0, 0.0, 0.0],
            Relation::Le,
            -fixed.arsu / bs,
        ),
        (vec![1.0, 0.0, -k(r.relay), 0.0, 0.0], Relation::Le, 0.0),
        (
            vec![0.0, 0.0, 0.0, -k(r.download_arsu), 0.0],
            Relation::Le,
            -xi * fixed.arsu / bs,
        ),
        (
            vec![xi, 0.0, 0.0, 0.0, -k(r.download_grsu)],
            Relation::Le,
            0.0,
        ),
    ];
    for (c, rel, rhs) in rows {
        lp.constrain(c, rel, rhs)?;
    }
    for v in 1..5 {
        lp.upper_bound(v, 1.0)?;
    }
    let sol = match lp.minimize() {
        Ok(s) => s,
        Err(LpError::Infeasible) => {
            return Err(infeasible("minimum bits unreachable at the fixed powers"))
        }
        Err(e) => return Err(e.into()),
    };
    let grsu = (sol.x[0] * bs).max(need).max(0.0);
    let bits = BitSplit {
        local: fixed.local,
        arsu: fixed.arsu,
        grsu,
    };
    // Shortest times carrying the bits; never longer than the LP's own.
    let times = PhaseSchedule {
        offload: carry(fixed.arsu + grsu, r.offload),
        relay: carry(grsu, r.relay),
        arsu_compute: arsu_time,
        download_arsu: carry(xi * fixed.arsu, r.download_arsu),
        download_grsu: carry(xi * grsu, r.download_grsu),
        local_compute: block.vehicle.time_for(fixed.local),
    };
    let zero_unused = |p: f64, t: f64| if t > 0.0 { p } else { 0.0 };
    let powers = Powers {
        offload: zero_unused(p.offload, times.offload),
        relay: zero_unused(p.relay, times.relay),
        download_arsu: zero_unused(p.download_arsu, times.download_arsu),
        download_grsu: zero_unused(p.download_grsu, times.download_grsu),
    };
    Ok(SlotDecision {
        bits,
        powers,
        times,
    })
}

/// Solves every block; `fixed` is slot-major like the allocation.
pub fn solve_p2(problem: &Problem, fixed: &[FixedDecision]) -> Result<Allocation, OptimizerError> {
    let decisions = problem
        .block_indices()
        .zip(fixed)
        .map(|((k, n), f)| solve_p2_block(&problem.block(k, n), f, (k, n)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Allocation::from_decisions(
        problem.vehicles(),
        problem.slots(),
        decisions,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::check_feasible;
    use crate::protocol::fixtures::problem;

    fn full_power() -> Powers {
        Powers {
            offload: 3.162,
            relay: 3.162,
            download_arsu: 3.162,
            download_grsu: 3.162,
        }
    }

    #[test]
    fn covered_demand_needs_no_grsu() {
        let p = problem(3e5, 1, 1);
        let f = FixedDecision {
            local: 2e5,
            arsu: 1e5,
            powers: full_power(),
        };
        let d = solve_p2_block(&p.block(0, 0), &f, (0, 0)).unwrap();
        assert_eq!(d.bits.grsu, 0.0);
        assert_eq!(d.times.relay, 0.0);
        assert!(check_feasible(&Allocation::from_decisions(1, 1, vec![d]), &p, 1e-9).is_feasible());
    }

    #[test]
    fn remainder_goes_to_grsu() {
        let p = problem(5e5, 1, 1);
        let f = FixedDecision {
            local: 2e5,
            arsu: 1e5,
            powers: full_power(),
        };
        let d = solve_p2_block(&p.block(0, 0), &f, (0, 0)).unwrap();
        assert!((d.bits.grsu - 2e5).abs() < 1e-3);
        assert!(check_feasible(&Allocation::from_decisions(1, 1, vec![d]), &p, 1e-9).is_feasible());
    }

    #[test]
    fn unreachable_demand_is_reported() {
        let p = problem(5e8, 1, 1);
        let f = FixedDecision {
            local: 2e5,
            arsu: 1e5,
            powers: full_power(),
        };
        assert!(matches!(
            solve_p2_block(&p.block(0, 0), &f, (0, 0)),
            Err(OptimizerError::Infeasible { .. })
        ));
    }
}
