//! Dual ascent driver and the end-to-end solve.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dual::{
    dual_subgradients, lagrangian, lagrangian_minimizer, price_point, PowerRule, PricePoint,
};
use super::ellipsoid::Ellipsoid;
use super::kkt::{kkt_summary, KktSummary};
use super::recovery::{solve_p2, solve_p2_block, FixedDecision};
use super::{Multipliers, OptimizerError};
use crate::protocol::{wtec, Allocation, Block, Problem, SlotDecision};

/// Which multipliers the ellipsoid searches over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DualSpace {
    /// Only the time-budget multiplier; the others are eliminated exactly
    /// (rate multipliers become per-bit link prices, the minimum-bits one is
    /// water-filled).
    #[default]
    Reduced,
    /// All six multipliers per block.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    /// Relative dual-gap target.
    pub epsilon: f64,
    pub max_iterations: usize,
    /// Relative tolerance of the sign tests on indeterminate variables.
    pub sign_tolerance: f64,
    pub dual_space: DualSpace,
    pub power_rule: PowerRule,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            epsilon: 1e-4,
            max_iterations: 200,
            sign_tolerance: 1e-9,
            dual_space: DualSpace::Reduced,
            power_rule: PowerRule::Numeric,
        }
    }
}

/// Final dual state of one `(vehicle, slot)` block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockDual {
    pub vehicle: usize,
    pub slot: usize,
    pub multipliers: Multipliers,
    /// Best dual value seen.
    pub dual_value: f64,
    /// Upper bound on how far the dual maximum lies above `dual_value`.
    pub gap_bound: f64,
    pub iterations: usize,
    pub converged: bool,
    pub center: Vec<f64>,
    /// Row-major shape matrix.
    pub shape: Vec<f64>,
    /// Weighted energy of the primal candidate after each iteration.
    pub trajectory: Vec<f64>,
    /// Best dual value after each iteration.
    pub dual_trajectory: Vec<f64>,
    /// Primal candidate whose bits and powers seed the recovery LP.
    pub decision: SlotDecision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualState {
    pub blocks: Vec<BlockDual>,
}

impl DualState {
    pub fn dual_value(&self) -> f64 {
        self.blocks.iter().map(|b| b.dual_value).sum()
    }

    /// Iterations of the slowest block.
    pub fn iterations(&self) -> usize {
        self.blocks.iter().map(|b| b.iterations).max().unwrap_or(0)
    }

    /// Summed gap bounds relative to the dual value.
    pub fn relative_gap(&self) -> f64 {
        let bound: f64 = self.blocks.iter().map(|b| b.gap_bound).sum();
        if bound == 0.0 {
            0.0
        } else {
            bound / self.dual_value().abs()
        }
    }

    pub fn converged(&self) -> bool {
        self.blocks.iter().all(|b| b.converged)
    }

    /// Summed primal-candidate energy per iteration; finished blocks hold
    /// their last value.
    pub fn trajectory(&self) -> Vec<f64> {
        (0..self.iterations())
            .map(|i| {
                self.blocks
                    .iter()
                    .map(|b| match b.trajectory.len() {
                        0 => 0.0,
                        n => b.trajectory[i.min(n - 1)],
                    })
                    .sum()
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub allocation: Allocation,
    /// Weighted energy (J) of the primal candidate at each iteration.
    pub wtec_trajectory: Vec<f64>,
    pub iterations: usize,
    /// Weighted energy of the recovered allocation, without propulsion.
    pub primal_value: f64,
    pub dual_value: f64,
    /// `(primal - dual) / primal`.
    pub duality_gap: f64,
    /// Ellipsoid gap bound relative to the dual value.
    pub gap_bound: f64,
    pub dual: DualState,
    pub kkt: KktSummary,
}

pub fn ellipsoid_solve(
    problem: &Problem,
    settings: &SolverSettings,
) -> Result<DualState, OptimizerError> {
    let indices: Vec<_> = problem.block_indices().collect();
    let blocks = indices
        .par_iter()
        .map(|&(k, n)| {
            let block = problem.block(k, n);
            match settings.dual_space {
                DualSpace::Reduced => solve_reduced(&block, (k, n), settings),
                DualSpace::Full => solve_full(&block, (k, n), settings),
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    let state = DualState { blocks };
    if state.converged() {
        Ok(state)
    } else {
        Err(OptimizerError::IterationCapExceeded {
            iterations: state.iterations(),
            best: Box::new(state),
        })
    }
}

/// Dual ascent, then the recovery LP on the final primal candidates.
pub fn algorithm1(
    problem: &Problem,
    settings: &SolverSettings,
) -> Result<SolveReport, OptimizerError> {
    let dual = ellipsoid_solve(problem, settings)?;
    let fixed: Vec<FixedDecision> = dual
        .blocks
        .iter()
        .map(|b| FixedDecision::from(&b.decision))
        .collect();
    let allocation = solve_p2(problem, &fixed)?;
    let primal_value = wtec(&allocation, problem);
    let dual_value = dual.dual_value();
    let duality_gap = if primal_value > 0.0 {
        (primal_value - dual_value) / primal_value
    } else {
        0.0
    };
    let kkt = kkt_summary(problem, &allocation, &dual);
    Ok(SolveReport {
        wtec_trajectory: dual.trajectory(),
        iterations: dual.iterations(),
        gap_bound: dual.relative_gap(),
        allocation,
        primal_value,
        dual_value,
        duality_gap,
        dual,
        kkt,
    })
}

/// Largest sensible multiplier scale: ten times the costliest transmission, W.
fn chi_max(block: &Block<'_>) -> f64 {
    let c = block.caps;
    let p = c
        .offload
        .max(c.relay)
        .max(c.download_arsu)
        .max(c.download_grsu);
    10.0 * block.vehicle_weight.max(block.arsu_weight) * p
}

const CENTER0: f64 = 1e-3;

fn solve_reduced(
    block: &Block<'_>,
    index: (usize, usize),
    s: &SolverSettings,
) -> Result<BlockDual, OptimizerError> {
    let eval = |chi2: f64| price_point(block, chi2, s.power_rule, index);
    let finish = |pt: PricePoint,
                  e: &Ellipsoid,
                  dual_value,
                  gap_bound,
                  iterations,
                  converged,
                  (trajectory, dual_trajectory)| BlockDual {
        vehicle: index.0,
        slot: index.1,
        multipliers: pt.multipliers,
        dual_value,
        gap_bound,
        iterations,
        converged,
        center: e.center().as_slice().to_vec(),
        shape: e.shape_rows(),
        trajectory,
        dual_trajectory,
        decision: pt.decision,
    };

    // Time budget slack even with free airtime: the multiplier is zero.
    let zero = eval(0.0)?;
    if zero.time_residual <= 0.0 {
        let e = Ellipsoid::axis_aligned(vec![0.0], &[0.0]);
        let q = zero.dual_value;
        return Ok(finish(zero, &e, q, 0.0, 0, true, (Vec::new(), Vec::new())));
    }

    let mut radius = chi_max(block);
    let mut top = eval(CENTER0 + radius)?;
    let mut grow = 0;
    while top.time_residual > 0.0 {
        grow += 1;
        if grow > 12 || !top.time_residual.is_finite() {
            return Err(OptimizerError::Infeasible {
                vehicle: index.0,
                slot: index.1,
                reason: "sub-slot too short for the minimum bits at full power".into(),
            });
        }
        radius *= 10.0;
        top = eval(CENTER0 + radius)?;
    }
    let mut e = Ellipsoid::axis_aligned(vec![CENTER0], &[radius]);
    let mut best_q = zero.dual_value.max(top.dual_value);
    // Bracket on the multiplier: residual positive at `lo`, nonpositive at `hi`.
    let mut lo = (0.0, zero);
    let mut hi = (CENTER0 + radius, top);
    let mut trajectory = Vec::new();
    let mut dual_trajectory = Vec::new();
    let mut gap = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < s.max_iterations {
        iterations += 1;
        let c = e.center()[0];
        if c <= 0.0 {
            e.cut(&DVector::from_element(1, -1.0), -c).ok();
            trajectory.push(block.weighted_energy(&hi.1.decision));
            dual_trajectory.push(best_q);
            continue;
        }
        let pt = eval(c)?;
        best_q = best_q.max(pt.dual_value);
        let g = pt.time_residual;
        gap = g.abs() * e.width(&DVector::from_element(1, 1.0));
        let depth = best_q - pt.dual_value;
        if g > 0.0 {
            if c > lo.0 {
                lo = (c, pt);
            }
        } else if c < hi.0 {
            hi = (c, pt);
        }
        trajectory.push(block.weighted_energy(&hi.1.decision));
        dual_trajectory.push(best_q);
        if g == 0.0 || gap <= s.epsilon * best_q.abs() {
            converged = true;
            break;
        }
        if e.cut(&DVector::from_element(1, -g), depth).is_err() {
            // Interval below rounding resolution: the center is optimal.
            converged = true;
            break;
        }
    }
    let (_, pt) = polish(&eval, lo, hi, s)?;
    best_q = best_q.max(pt.dual_value);
    Ok(finish(
        pt,
        &e,
        best_q,
        gap,
        iterations,
        converged,
        (trajectory, dual_trajectory),
    ))
}

/// Moves the feasible end of the bracket onto the budget boundary so the
/// primal candidate satisfies complementary slackness.
fn polish(
    eval: &dyn Fn(f64) -> Result<PricePoint, OptimizerError>,
    mut lo: (f64, PricePoint),
    mut hi: (f64, PricePoint),
    s: &SolverSettings,
) -> Result<(f64, PricePoint), OptimizerError> {
    let tight = |c: f64, pt: &PricePoint| {
        c * pt.time_residual.abs() <= 1e-3 * s.epsilon * pt.dual_value.abs()
    };
    for _ in 0..200 {
        if tight(hi.0, &hi.1) {
            break;
        }
        let mid = 0.5 * (lo.0 + hi.0);
        if mid <= lo.0 || mid >= hi.0 {
            break;
        }
        let pt = eval(mid)?;
        if pt.time_residual > 0.0 {
            lo = (mid, pt);
        } else {
            hi = (mid, pt);
        }
    }
    Ok(hi)
}

fn solve_full(
    block: &Block<'_>,
    index: (usize, usize),
    s: &SolverSettings,
) -> Result<BlockDual, OptimizerError> {
    let xi = block.output_ratio;
    if block.min_bits <= 0.0 {
        let m = Multipliers::default();
        let d = lagrangian_minimizer(block, &m, s.power_rule, s.sign_tolerance)?;
        let e = Ellipsoid::axis_aligned(vec![0.0; 6], &[0.0; 6]);
        return Ok(BlockDual {
            vehicle: index.0,
            slot: index.1,
            multipliers: m,
            dual_value: lagrangian(block, &d, &m),
            gap_bound: 0.0,
            iterations: 0,
            converged: true,
            center: e.center().as_slice().to_vec(),
            shape: e.shape_rows(),
            trajectory: Vec::new(),
            dual_trajectory: Vec::new(),
            decision: d,
        });
    }
    // Prices grow with the time multiplier, so the reduced optimum, which is
    // also optimal here, lies in the box [0, 2 x prices at the bracket top].
    let mut top = chi_max(block);
    let mut grow = 0;
    let at_top = loop {
        let pt = price_point(block, top, s.power_rule, index)?;
        if pt.time_residual <= 0.0 {
            break pt;
        }
        grow += 1;
        if grow > 12 || !pt.time_residual.is_finite() {
            return Err(OptimizerError::Infeasible {
                vehicle: index.0,
                slot: index.1,
                reason: "sub-slot too short for the minimum bits at full power".into(),
            });
        }
        top *= 10.0;
    };
    let upper: Vec<f64> = at_top
        .multipliers
        .0
        .iter()
        .map(|c| 2.0 * c.max(f64::MIN_POSITIVE))
        .collect();
    let center: Vec<f64> = upper.iter().map(|u| 0.5 * u).collect();
    let radii: Vec<f64> = upper.iter().map(|u| 0.5 * 6f64.sqrt() * u).collect();
    let mut e = Ellipsoid::axis_aligned(center, &radii);
    // Minimizers at interior multipliers need not carry the minimum bits, so
    // the primal candidate is the cheapest one the recovery LP accepts.
    let recover = |d: &SlotDecision| {
        solve_p2_block(block, &FixedDecision::from(d), index)
            .ok()
            .map(|r| (block.weighted_energy(&r), r))
    };
    let mut candidate = recover(&at_top.decision);
    let mut best: Option<(f64, Multipliers, SlotDecision)> = None;
    let mut trajectory = Vec::new();
    let mut dual_trajectory = Vec::new();
    let mut gap = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < s.max_iterations {
        iterations += 1;
        let c: Vec<f64> = e.center().iter().copied().collect();
        let m = Multipliers([c[0], c[1], c[2], c[3], c[4], c[5]]);
        let worst = (0..6).min_by(|&a, &b| c[a].total_cmp(&c[b])).unwrap_or(0);
        let margin = m.grsu_margin(xi);
        let cut = if c[worst] < 0.0 {
            let mut a = DVector::zeros(6);
            a[worst] = -1.0;
            Some((a, -c[worst]))
        } else if margin < -s.sign_tolerance * m.min_bits() {
            Some((
                DVector::from_vec(vec![1.0, 0.0, -1.0, -1.0, 0.0, -xi]),
                -margin,
            ))
        } else {
            None
        };
        if let Some((a, depth)) = cut {
            e.cut(&a, depth).ok();
            trajectory.push(candidate.as_ref().map_or(f64::INFINITY, |c| c.0));
            dual_trajectory.push(best.as_ref().map_or(f64::NEG_INFINITY, |b| b.0));
            continue;
        }
        let d = lagrangian_minimizer(block, &m, s.power_rule, s.sign_tolerance)?;
        let q = lagrangian(block, &d, &m);
        let g = DVector::from_vec(dual_subgradients(block, &d).to_vec());
        if let Some(r) = recover(&d) {
            if candidate.as_ref().is_none_or(|c| r.0 < c.0) {
                candidate = Some(r);
            }
        }
        if best.as_ref().is_none_or(|b| q > b.0) {
            best = Some((q, m, d));
        }
        let best_q = best.as_ref().map_or(q, |b| b.0);
        trajectory.push(candidate.as_ref().map_or(f64::INFINITY, |c| c.0));
        dual_trajectory.push(best_q);
        gap = e.width(&g);
        if gap <= s.epsilon * best_q.abs() {
            converged = true;
            break;
        }
        if e.cut(&(-&g), best_q - q).is_err() {
            // Degenerate ellipsoid: no further progress, but no certificate either.
            break;
        }
    }
    let (dual_value, multipliers, _) = best.unwrap_or_else(|| {
        let m = Multipliers::default();
        (f64::NEG_INFINITY, m, SlotDecision::default())
    });
    let decision = candidate.map_or(at_top.decision, |c| c.1);
    Ok(BlockDual {
        vehicle: index.0,
        slot: index.1,
        multipliers,
        dual_value,
        gap_bound: gap,
        iterations,
        converged,
        center: e.center().as_slice().to_vec(),
        shape: e.shape_rows(),
        trajectory,
        dual_trajectory,
        decision,
    })
}
