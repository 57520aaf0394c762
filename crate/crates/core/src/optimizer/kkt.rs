//! First-order optimality residuals of a block at given multipliers.

use serde::{Deserialize, Serialize};

use super::dual::{dual_subgradients, lagrangian};
use super::solve::DualState;
use super::Multipliers;
use crate::protocol::{Allocation, BitSplit, Block, PhaseSchedule, Powers, Problem, SlotDecision};

/// Worst scaled residual of each KKT condition.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct KktSummary {
    /// Projected Lagrangian gradient times the variable's magnitude (its
    /// natural scale at a bound), over the block energy.
    pub stationarity: f64,
    pub primal_feasibility: f64,
    pub dual_feasibility: f64,
    /// `|chi_j g_j|` over the block energy.
    pub complementary_slackness: f64,
}

impl KktSummary {
    fn max(self, o: KktSummary) -> KktSummary {
        KktSummary {
            stationarity: self.stationarity.max(o.stationarity),
            primal_feasibility: self.primal_feasibility.max(o.primal_feasibility),
            dual_feasibility: self.dual_feasibility.max(o.dual_feasibility),
            complementary_slackness: self.complementary_slackness.max(o.complementary_slackness),
        }
    }
}

const VARS: usize = 11;

fn pack(d: &SlotDecision) -> [f64; VARS] {
    let (b, p, t) = (&d.bits, &d.powers, &d.times);
    [
        b.local,
        b.arsu,
        b.grsu,
        p.offload,
        p.relay,
        p.download_arsu,
        p.download_grsu,
        t.offload,
        t.relay,
        t.download_arsu,
        t.download_grsu,
    ]
}

fn unpack(block: &Block<'_>, x: &[f64; VARS]) -> SlotDecision {
    SlotDecision {
        bits: BitSplit {
            local: x[0],
            arsu: x[1],
            grsu: x[2],
        },
        powers: Powers {
            offload: x[3],
            relay: x[4],
            download_arsu: x[5],
            download_grsu: x[6],
        },
        times: PhaseSchedule {
            offload: x[7],
            relay: x[8],
            arsu_compute: block.arsu.time_for(x[1]),
            download_arsu: x[9],
            download_grsu: x[10],
            local_compute: block.vehicle.time_for(x[0]),
        },
    }
}

pub fn block_kkt(block: &Block<'_>, d: &SlotDecision, m: &Multipliers) -> KktSummary {
    let sub = block.sub_slot();
    let bits = block.min_bits.max(1.0);
    let c = block.caps;
    let scale = [
        bits,
        bits,
        bits,
        c.offload,
        c.relay,
        c.download_arsu,
        c.download_grsu,
        sub,
        sub,
        sub,
        sub,
    ];
    let upper = [
        block.local_cap(),
        block.arsu_cap(),
        f64::INFINITY,
        c.offload,
        c.relay,
        c.download_arsu,
        c.download_grsu,
        sub,
        sub,
        sub,
        sub,
    ];
    let energy = block.weighted_energy(d).max(1e-12);
    let x = pack(d);
    let l = |x: &[f64; VARS]| lagrangian(block, &unpack(block, x), m);
    let stationarity = (0..VARS)
        .map(|j| {
            let at_lo = x[j] <= 1e-12 * scale[j];
            let at_hi = x[j] >= upper[j] - 1e-12 * scale[j];
            // interior variables are perturbed and weighted relative to themselves
            let s = if at_lo || at_hi { scale[j] } else { x[j].abs() };
            let h = 1e-6 * s;
            let shifted = |dx: f64| {
                let mut y = x;
                y[j] += dx;
                l(&y)
            };
            let grad = match (at_lo, at_hi) {
                (true, _) => (shifted(h) - l(&x)) / h,
                (false, true) => (l(&x) - shifted(-h)) / h,
                _ => (shifted(h) - shifted(-h)) / (2.0 * h),
            };
            let projected = if at_lo {
                (-grad).max(0.0)
            } else if at_hi {
                grad.max(0.0)
            } else {
                grad.abs()
            };
            projected * s / energy
        })
        .fold(0.0, f64::max);
    let g = dual_subgradients(block, d);
    let g_scale = [bits, sub, bits, bits, bits, bits];
    let primal_feasibility = g
        .iter()
        .zip(g_scale)
        .map(|(g, s)| g.max(0.0) / s)
        .fold(0.0, f64::max);
    let chi_scale =
        m.0.iter()
            .fold(0.0f64, |a, c| a.max(c.abs()))
            .max(f64::MIN_POSITIVE);
    let negative = m.0.iter().map(|c| (-c).max(0.0)).fold(0.0, f64::max) / chi_scale;
    let margin =
        (-m.grsu_margin(block.output_ratio)).max(0.0) / m.min_bits().max(f64::MIN_POSITIVE);
    let complementary_slackness =
        m.0.iter()
            .zip(g)
            .map(|(c, g)| (c * g).abs())
            .fold(0.0, f64::max)
            / energy;
    KktSummary {
        stationarity,
        primal_feasibility,
        dual_feasibility: negative.max(margin),
        complementary_slackness,
    }
}

/// Worst residuals over all blocks of an allocation.
pub fn kkt_summary(problem: &Problem, alloc: &Allocation, dual: &DualState) -> KktSummary {
    alloc
        .iter()
        .zip(&dual.blocks)
        .map(|((k, n, d), b)| block_kkt(&problem.block(k, n), d, &b.multipliers))
        .fold(KktSummary::default(), KktSummary::max)
}
