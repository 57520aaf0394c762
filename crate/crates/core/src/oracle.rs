//! Independent checks of the solver: exhaustive grid search on a single
//! block, sampled midpoint convexity and KKT residuals.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::optimizer::{kkt_summary, KktSummary, SolveReport};
use crate::protocol::{
    check_decision, BitSplit, Block, PhaseSchedule, Powers, Problem, SlotDecision,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("grid search needs one vehicle and one slot, got {vehicles} x {slots}")]
    NotSingleBlock { vehicles: usize, slots: usize },
    #[error("no grid point satisfies every constraint")]
    NoFeasiblePoint,
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    Linear,
    /// Geometric between a positive floor and the upper end, plus zero.
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub steps: usize,
    pub spacing: Spacing,
}

impl Axis {
    pub fn linear(lo: f64, hi: f64, steps: usize) -> Self {
        Self {
            lo,
            hi,
            steps,
            spacing: Spacing::Linear,
        }
    }

    pub fn log(lo: f64, hi: f64, steps: usize) -> Self {
        Self {
            lo,
            hi,
            steps,
            spacing: Spacing::Log,
        }
    }

    pub fn points(&self) -> Vec<f64> {
        if self.hi <= self.lo {
            return vec![self.lo];
        }
        let n = self.steps - 1;
        match self.spacing {
            Spacing::Linear => (0..=n)
                .map(|i| self.lo + (self.hi - self.lo) * i as f64 / n as f64)
                .collect(),
            Spacing::Log => {
                let ratio = (self.hi / self.lo).ln();
                let mut v: Vec<f64> = (0..n)
                    .map(|i| self.lo * (ratio * i as f64 / (n - 1).max(1) as f64).exp())
                    .collect();
                v.insert(0, 0.0);
                v
            }
        }
    }

    /// Axis of the same kind spanning one step either side of `x`.
    fn zoom(&self, x: f64, floor: f64, ceil: f64) -> Axis {
        match self.spacing {
            Spacing::Linear => {
                let step = (self.hi - self.lo) / (self.steps - 1) as f64;
                Axis::linear((x - step).max(floor), (x + step).min(ceil), self.steps)
            }
            Spacing::Log => {
                if x <= 0.0 {
                    return Axis::log(self.lo * 1e-3, self.lo, self.steps);
                }
                let factor = (self.hi / self.lo).powf(1.0 / (self.steps - 2).max(1) as f64);
                Axis::linear(x / factor, (x * factor).min(ceil), self.steps)
            }
        }
    }
}

/// Ranges for the bit split and the four powers. Phase times are not
/// gridded: with bits and powers fixed, energy grows with every duration and
/// the rates only bound durations from below, so the shortest carrying
/// durations dominate any time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub local: Axis,
    pub arsu: Axis,
    pub grsu: Axis,
    pub powers: [Axis; 4],
    /// Zoom rounds after the first pass, each one step around the incumbent.
    pub refinements: usize,
}

impl GridSpec {
    /// Full variable ranges with `steps` points each: linear bits, log powers.
    pub fn coarse(block: &Block<'_>, steps: usize, refinements: usize) -> Self {
        let c = block.caps;
        let pow = |cap: f64| Axis::log(cap * 1e-6, cap, steps);
        Self {
            local: Axis::linear(0.0, block.local_cap(), steps),
            arsu: Axis::linear(0.0, block.arsu_cap(), steps),
            grsu: Axis::linear(0.0, block.min_bits, steps),
            powers: [
                pow(c.offload),
                pow(c.relay),
                pow(c.download_arsu),
                pow(c.download_grsu),
            ],
            refinements,
        }
    }

    fn axes(&self) -> [&Axis; 7] {
        [
            &self.local,
            &self.arsu,
            &self.grsu,
            &self.powers[0],
            &self.powers[1],
            &self.powers[2],
            &self.powers[3],
        ]
    }

    fn validate(&self, block: &Block<'_>) -> Result<(), OracleError> {
        let c = block.caps;
        let bounds = [
            block.local_cap(),
            block.arsu_cap(),
            f64::INFINITY,
            c.offload,
            c.relay,
            c.download_arsu,
            c.download_grsu,
        ];
        for (i, (a, hi)) in self.axes().iter().zip(bounds).enumerate() {
            if a.steps < 2 {
                return Err(OracleError::InvalidGrid(format!(
                    "axis {i} has {} steps",
                    a.steps
                )));
            }
            if a.lo < 0.0 || a.hi > hi * (1.0 + 1e-12) || a.lo > a.hi {
                return Err(OracleError::InvalidGrid(format!(
                    "axis {i} range [{}, {}] is out of bounds",
                    a.lo, a.hi
                )));
            }
            if a.spacing == Spacing::Log && a.lo <= 0.0 {
                return Err(OracleError::InvalidGrid(format!(
                    "log axis {i} needs a positive floor"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridOptimum {
    pub wtec: f64,
    pub decision: SlotDecision,
    pub evaluations: usize,
}

fn shortest(bits: f64, rate: f64) -> f64 {
    if bits <= 0.0 {
        0.0
    } else if rate > 0.0 {
        bits / rate
    } else {
        f64::INFINITY
    }
}

/// One pass over the grid. Phase durations are the shortest that carry the
/// bits. Two exact dominance rules keep it tractable: with everything else
/// fixed, energy rises and slack falls in both `b_R` and the last download
/// power, so only the smallest `b_R` grid point meeting the demand and the
/// smallest time-feasible last power are evaluated. Powers of phases that
/// carry no bits are held at zero. Every incumbent is confirmed against the
/// full constraint check.
fn sweep(block: &Block<'_>, grid: &GridSpec) -> (Option<(f64, SlotDecision)>, usize) {
    let pts: Vec<Vec<f64>> = grid.axes().iter().map(|a| a.points()).collect();
    let l = block.links;
    let curves = [&l.uplink, &l.relay, &l.downlink, &l.downlink];
    let rates: Vec<Vec<f64>> = (0..4)
        .map(|i| pts[3 + i].iter().map(|&p| curves[i].rate(p)).collect())
        .collect();
    let need = block.min_bits * (1.0 - 1e-12);
    let window = block.sub_slot() * (1.0 + 1e-12);
    let xi = block.output_ratio;
    let (ls, us, rs) = (&pts[0], &pts[1], &pts[2]);
    let combos: Vec<(f64, f64, f64)> = ls
        .iter()
        .flat_map(|&l| us.iter().map(move |&u| (l, u)))
        .filter_map(|(l, u)| rs.iter().find(|&&r| l + u + r >= need).map(|&r| (l, u, r)))
        .collect();
    let results: Vec<(Option<(f64, SlotDecision)>, usize)> = combos
        .par_iter()
        .map(|&(local, arsu, grsu)| {
            let bits = BitSplit { local, arsu, grsu };
            let loads = [arsu + grsu, grsu, xi * arsu, xi * grsu];
            // (power, duration) options per phase
            let options: Vec<Vec<(f64, f64)>> = (0..4)
                .map(|i| {
                    if loads[i] > 0.0 {
                        pts[3 + i]
                            .iter()
                            .zip(&rates[i])
                            .map(|(&p, &r)| (p, shortest(loads[i], r)))
                            .collect()
                    } else {
                        vec![(0.0, 0.0)]
                    }
                })
                .collect();
            let arsu_time = block.arsu.time_for(arsu);
            let mut best: Option<(f64, SlotDecision)> = None;
            let mut count = 0;
            for &(p1, t1) in &options[0] {
                for &(p2, t2) in &options[1] {
                    for &(p4, t4) in &options[2] {
                        let used = t1 + t2 + t4 + arsu_time;
                        let i = options[3].partition_point(|&(_, t5)| {
                            count += 1;
                            used + t5 > window
                        });
                        let Some(&(p5, t5)) = options[3].get(i) else {
                            continue;
                        };
                        let d = SlotDecision {
                            bits,
                            powers: Powers {
                                offload: p1,
                                relay: p2,
                                download_arsu: p4,
                                download_grsu: p5,
                            },
                            times: PhaseSchedule {
                                offload: t1,
                                relay: t2,
                                arsu_compute: arsu_time,
                                download_arsu: t4,
                                download_grsu: t5,
                                local_compute: block.vehicle.time_for(local),
                            },
                        };
                        let e = block.weighted_energy(&d);
                        if best.as_ref().is_none_or(|b| e < b.0)
                            && check_decision(block, &d, 1e-12).is_empty()
                        {
                            best = Some((e, d));
                        }
                    }
                }
            }
            (best, count)
        })
        .collect();
    let evaluations = results.iter().map(|r| r.1).sum();
    let best = results.into_iter().filter_map(|r| r.0).fold(
        None,
        |acc: Option<(f64, SlotDecision)>, x| match acc {
            Some(a) if a.0 <= x.0 => Some(a),
            _ => Some(x),
        },
    );
    (best, evaluations)
}

/// Minimum weighted energy over the grid (refined around the incumbent).
pub fn grid_search_primal(problem: &Problem, grid: &GridSpec) -> Result<GridOptimum, OracleError> {
    if problem.vehicles() != 1 || problem.slots() != 1 {
        return Err(OracleError::NotSingleBlock {
            vehicles: problem.vehicles(),
            slots: problem.slots(),
        });
    }
    let block = problem.block(0, 0);
    grid.validate(&block)?;
    let mut grid = grid.clone();
    let mut best: Option<(f64, SlotDecision)> = None;
    let mut evaluations = 0;
    for round in 0..=grid.refinements {
        let (found, n) = sweep(&block, &grid);
        evaluations += n;
        if let Some(f) = found {
            if best.as_ref().is_none_or(|b| f.0 < b.0) {
                best = Some(f);
            }
        }
        let Some((_, d)) = &best else {
            if round == 0 {
                return Err(OracleError::NoFeasiblePoint);
            }
            break;
        };
        let c = block.caps;
        let p = &d.powers;
        grid.local = grid.local.zoom(d.bits.local, 0.0, block.local_cap());
        grid.arsu = grid.arsu.zoom(d.bits.arsu, 0.0, block.arsu_cap());
        grid.grsu = grid.grsu.zoom(d.bits.grsu, 0.0, f64::INFINITY);
        let caps = [c.offload, c.relay, c.download_arsu, c.download_grsu];
        let vals = [p.offload, p.relay, p.download_arsu, p.download_grsu];
        for i in 0..4 {
            grid.powers[i] = grid.powers[i].zoom(vals[i], 0.0, caps[i]);
        }
    }
    let (wtec, decision) = best.ok_or(OracleError::NoFeasiblePoint)?;
    Ok(GridOptimum {
        wtec,
        decision,
        evaluations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    /// Largest `(f(mid) - (f(x) + f(y)) / 2) / |(f(x) + f(y)) / 2|`, floored at 0.
    pub worst_violation: f64,
    /// Midpoints that failed the feasibility test.
    pub infeasible_midpoints: usize,
    pub samples: usize,
}

/// Midpoint-convexity test over random pairs drawn by `sample`.
pub fn convexity_probe<F, S, C>(
    f: F,
    sample: S,
    feasible: C,
    samples: usize,
    seed: u64,
) -> ProbeReport
where
    F: Fn(&[f64]) -> f64,
    S: Fn(&mut ChaCha8Rng) -> Vec<f64>,
    C: Fn(&[f64]) -> bool,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut infeasible = 0;
    for _ in 0..samples {
        let x = sample(&mut rng);
        let y = sample(&mut rng);
        let mid: Vec<f64> = x.iter().zip(&y).map(|(a, b)| 0.5 * (a + b)).collect();
        if !feasible(&mid) {
            infeasible += 1;
        }
        let avg = 0.5 * (f(&x) + f(&y));
        let excess = f(&mid) - avg;
        let rel = if avg != 0.0 {
            excess / avg.abs()
        } else {
            excess
        };
        worst = worst.max(rel);
    }
    ProbeReport {
        worst_violation: worst,
        infeasible_midpoints: infeasible,
        samples,
    }
}

/// Per block: `[b_l, b_U, b_R, E_1, E_2, E_4, E_5, t_1, t_2, t_4, t_5]`, with
/// `E_i = p_i t_i`. The problem is convex in these coordinates.
pub const ENERGY_COORDS: usize = 11;

pub fn decision_from_energy_coords(block: &Block<'_>, x: &[f64]) -> SlotDecision {
    let power = |e: f64, t: f64| if t > 0.0 { e / t } else { 0.0 };
    SlotDecision {
        bits: BitSplit {
            local: x[0],
            arsu: x[1],
            grsu: x[2],
        },
        powers: Powers {
            offload: power(x[3], x[7]),
            relay: power(x[4], x[8]),
            download_arsu: power(x[5], x[9]),
            download_grsu: power(x[6], x[10]),
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

/// Total weighted energy of a concatenation of per-block coordinates.
pub fn wtec_energy_coords(problem: &Problem, x: &[f64]) -> f64 {
    problem
        .block_indices()
        .zip(x.chunks(ENERGY_COORDS))
        .map(|((k, n), c)| {
            let b = problem.block(k, n);
            b.weighted_energy(&decision_from_energy_coords(&b, c))
        })
        .sum()
}

pub fn feasible_energy_coords(problem: &Problem, x: &[f64], tol: f64) -> bool {
    problem
        .block_indices()
        .zip(x.chunks(ENERGY_COORDS))
        .all(|((k, n), c)| {
            let b = problem.block(k, n);
            check_decision(&b, &decision_from_energy_coords(&b, c), tol).is_empty()
        })
}

/// Random feasible point of one block in energy coordinates, or `None` if
/// the drawn powers are too low to fit the demand in the sub-slot. Powers are
/// log-uniform over `decades` below each cap.
pub fn sample_block(
    block: &Block<'_>,
    rng: &mut ChaCha8Rng,
    decades: f64,
) -> Option<[f64; ENERGY_COORDS]> {
    let need = block.min_bits;
    let local = rng.gen::<f64>() * block.local_cap().min(need);
    let arsu = rng.gen::<f64>() * block.arsu_cap().min(need - local);
    let grsu = (need - local - arsu).max(0.0) * (1.0 + 0.1 * rng.gen::<f64>());
    let xi = block.output_ratio;
    let loads = [arsu + grsu, grsu, xi * arsu, xi * grsu];
    let l = block.links;
    let c = block.caps;
    let curves = [
        (&l.uplink, c.offload),
        (&l.relay, c.relay),
        (&l.downlink, c.download_arsu),
        (&l.downlink, c.download_grsu),
    ];
    let mut powers = [0.0; 4];
    let mut times = [0.0; 4];
    for i in 0..4 {
        if loads[i] > 0.0 {
            let (curve, cap) = curves[i];
            powers[i] = cap * 10f64.powf(-decades * rng.gen::<f64>());
            times[i] = loads[i] / curve.rate(powers[i]);
        }
    }
    let slack = block.sub_slot() - block.arsu.time_for(arsu) - times.iter().sum::<f64>();
    if !(slack >= 0.0) {
        return None;
    }
    let shares: Vec<f64> = loads
        .iter()
        .map(|l| if *l > 0.0 { rng.gen::<f64>() } else { 0.0 })
        .collect();
    let total = shares.iter().sum::<f64>().max(f64::MIN_POSITIVE);
    let fill = rng.gen::<f64>();
    let mut out = [0.0; ENERGY_COORDS];
    out[..3].copy_from_slice(&[local, arsu, grsu]);
    for i in 0..4 {
        let t = times[i] + slack * fill * shares[i] / total;
        out[3 + i] = powers[i] * t;
        out[7 + i] = t;
    }
    Some(out)
}

/// Random feasible allocation in energy coordinates. Rejected block draws are
/// retried with powers concentrated closer to the caps.
const TRIES: usize = 60;
const SPREAD: f64 = 4.5;

pub fn sample_allocation(problem: &Problem, rng: &mut ChaCha8Rng) -> Vec<f64> {
    problem
        .block_indices()
        .flat_map(|(k, n)| {
            let b = problem.block(k, n);
            (0..=TRIES)
                .find_map(|i| sample_block(&b, rng, SPREAD * (1.0 - i as f64 / TRIES as f64)))
                .expect("block infeasible even at full power")
        })
        .collect()
}

/// Worst-case KKT residuals of a finished solve.
pub fn kkt_residuals(report: &SolveReport, problem: &Problem) -> KktSummary {
    kkt_summary(problem, &report.allocation, &report.dual)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktThresholds {
    pub stationarity: f64,
    pub primal_feasibility: f64,
    pub dual_feasibility: f64,
    pub complementary_slackness: f64,
}

impl Default for KktThresholds {
    fn default() -> Self {
        Self {
            stationarity: 1e-3,
            primal_feasibility: 1e-9,
            dual_feasibility: 1e-9,
            complementary_slackness: 1e-4,
        }
    }
}

impl KktThresholds {
    pub fn passes(&self, k: &KktSummary) -> bool {
        k.stationarity <= self.stationarity
            && k.primal_feasibility <= self.primal_feasibility
            && k.dual_feasibility <= self.dual_feasibility
            && k.complementary_slackness <= self.complementary_slackness
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::fixtures::problem;

    #[test]
    fn zero_demand_grid_minimum_is_zero() {
        let p = problem(0.0, 1, 1);
        let g = GridSpec::coarse(&p.block(0, 0), 4, 0);
        let best = grid_search_primal(&p, &g).unwrap();
        assert_eq!(best.wtec, 0.0);
        assert_eq!(best.decision.bits.total(), 0.0);
    }

    #[test]
    fn huge_demand_has_no_feasible_point() {
        let p = problem(5e9, 1, 1);
        let g = GridSpec::coarse(&p.block(0, 0), 4, 0);
        assert_eq!(
            grid_search_primal(&p, &g).unwrap_err(),
            OracleError::NoFeasiblePoint
        );
    }

    #[test]
    fn probe_controls() {
        let lin = convexity_probe(
            |x| 3.0 * x[0] - x[1],
            |r| vec![r.gen(), r.gen()],
            |_| true,
            200,
            1,
        );
        assert!(lin.worst_violation <= 1e-12);
        let concave = convexity_probe(
            |x| -x[0] * x[0],
            |r| vec![r.gen::<f64>() + 1.0],
            |_| true,
            200,
            1,
        );
        assert!(concave.worst_violation > 0.0);
    }

    #[test]
    fn rejects_bad_grids() {
        let p = problem(1e5, 1, 1);
        let mut g = GridSpec::coarse(&p.block(0, 0), 4, 0);
        g.local.steps = 1;
        assert!(matches!(
            grid_search_primal(&p, &g),
            Err(OracleError::InvalidGrid(_))
        ));
        assert!(matches!(
            grid_search_primal(&problem(1e5, 2, 1), &GridSpec::coarse(&p.block(0, 0), 4, 0)),
            Err(OracleError::NotSingleBlock { .. })
        ));
    }
}
