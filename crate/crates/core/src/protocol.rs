//! Task model, the five-phase sub-slot schedule, feasibility checks and the
//! delay/energy metrics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::RateCurve;
use crate::energy::{compute_energy, ComputeModel, ComputeSite};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProtocolError {
    #[error("phase {phase:?} has {bits} bits to carry but a zero rate")]
    ZeroRateWithBits { phase: Phase, bits: f64 },
    #[error("problem data inconsistent: {0}")]
    Inconsistent(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Offload,
    Relay,
    ArsuCompute,
    DownloadArsu,
    DownloadGrsu,
}

/// Per-vehicle computation task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub bits_per_slot: f64,
    /// Bits that must be processed in every slot.
    pub min_bits: f64,
    /// Output bits per input bit.
    pub output_ratio: f64,
    /// Completion deadline, s.
    pub deadline: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BitSplit {
    pub local: f64,
    pub arsu: f64,
    pub grsu: f64,
}

impl BitSplit {
    pub fn total(&self) -> f64 {
        self.local + self.arsu + self.grsu
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Powers {
    pub offload: f64,
    pub relay: f64,
    pub download_arsu: f64,
    pub download_grsu: f64,
}

/// Phase durations within one sub-slot plus the parallel local compute time.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PhaseSchedule {
    pub offload: f64,
    pub relay: f64,
    pub arsu_compute: f64,
    pub download_arsu: f64,
    pub download_grsu: f64,
    pub local_compute: f64,
}

impl PhaseSchedule {
    /// Sum of the five sequential phases.
    pub fn occupied(&self) -> f64 {
        self.offload + self.relay + self.arsu_compute + self.download_arsu + self.download_grsu
    }
}

/// Rates achieved in each transmission phase, bits/s.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PhaseRates {
    pub offload: f64,
    pub relay: f64,
    pub download_arsu: f64,
    pub download_grsu: f64,
}

/// Decision variables of one vehicle in one slot.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SlotDecision {
    pub bits: BitSplit,
    pub powers: Powers,
    pub times: PhaseSchedule,
}

/// Decisions for every `(vehicle, slot)` pair, slot-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    vehicles: usize,
    slots: usize,
    decisions: Vec<SlotDecision>,
}

impl Allocation {
    pub fn zeros(vehicles: usize, slots: usize) -> Self {
        Self {
            vehicles,
            slots,
            decisions: vec![SlotDecision::default(); vehicles * slots],
        }
    }

    pub fn from_decisions(vehicles: usize, slots: usize, decisions: Vec<SlotDecision>) -> Self {
        assert_eq!(
            decisions.len(),
            vehicles * slots,
            "one decision per (vehicle, slot)"
        );
        Self {
            vehicles,
            slots,
            decisions,
        }
    }

    pub fn vehicles(&self) -> usize {
        self.vehicles
    }

    pub fn slots(&self) -> usize {
        self.slots
    }

    pub fn get(&self, vehicle: usize, slot: usize) -> &SlotDecision {
        &self.decisions[slot * self.vehicles + vehicle]
    }

    pub fn get_mut(&mut self, vehicle: usize, slot: usize) -> &mut SlotDecision {
        &mut self.decisions[slot * self.vehicles + vehicle]
    }

    /// `(vehicle, slot, decision)` in slot-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, &SlotDecision)> {
        let k = self.vehicles;
        self.decisions
            .iter()
            .enumerate()
            .map(move |(i, d)| (i % k, i / k, d))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerCaps {
    pub offload: f64,
    pub relay: f64,
    pub download_arsu: f64,
    pub download_grsu: f64,
}

/// Rate models of the three links a vehicle uses in one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotLinks {
    pub uplink: RateCurve,
    pub relay: RateCurve,
    pub downlink: RateCurve,
}

/// Everything needed to evaluate and optimize an allocation.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub slot_len: f64,
    pub vehicle_weights: Vec<f64>,
    pub arsu_weight: f64,
    pub vehicle_compute: Vec<ComputeModel<f64>>,
    pub arsu_compute: ComputeModel<f64>,
    pub tasks: Vec<Task>,
    pub caps: PowerCaps,
    slots: usize,
    links: Vec<SlotLinks>,
}

impl Problem {
    /// `links` is slot-major: entry `n * K + k`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        slot_len: f64,
        vehicle_weights: Vec<f64>,
        arsu_weight: f64,
        vehicle_compute: Vec<ComputeModel<f64>>,
        arsu_compute: ComputeModel<f64>,
        tasks: Vec<Task>,
        caps: PowerCaps,
        links: Vec<SlotLinks>,
    ) -> Result<Self, ProtocolError> {
        let k = tasks.len();
        if k == 0 {
            return Err(ProtocolError::Inconsistent("no vehicles".into()));
        }
        if vehicle_weights.len() != k || vehicle_compute.len() != k {
            return Err(ProtocolError::Inconsistent(format!(
                "{k} tasks but {} weights and {} compute models",
                vehicle_weights.len(),
                vehicle_compute.len()
            )));
        }
        if !links.len().is_multiple_of(k) {
            return Err(ProtocolError::Inconsistent(format!(
                "{} link sets is not a multiple of {k} vehicles",
                links.len()
            )));
        }
        let slots = links.len() / k;
        Ok(Self {
            slot_len,
            vehicle_weights,
            arsu_weight,
            vehicle_compute,
            arsu_compute,
            tasks,
            caps,
            slots,
            links,
        })
    }

    pub fn vehicles(&self) -> usize {
        self.tasks.len()
    }

    pub fn slots(&self) -> usize {
        self.slots
    }

    /// Sub-slot length `tau / K`.
    pub fn sub_slot(&self) -> f64 {
        self.slot_len / self.vehicles() as f64
    }

    pub fn links(&self, vehicle: usize, slot: usize) -> &SlotLinks {
        &self.links[slot * self.vehicles() + vehicle]
    }

    pub fn links_mut(&mut self) -> impl Iterator<Item = &mut SlotLinks> {
        self.links.iter_mut()
    }

    pub fn block(&self, vehicle: usize, slot: usize) -> Block<'_> {
        let task = &self.tasks[vehicle];
        Block {
            vehicle_weight: self.vehicle_weights[vehicle],
            arsu_weight: self.arsu_weight,
            vehicle: &self.vehicle_compute[vehicle],
            arsu: &self.arsu_compute,
            slot_len: self.slot_len,
            vehicles: self.vehicles(),
            min_bits: task.min_bits,
            output_ratio: task.output_ratio,
            caps: &self.caps,
            links: self.links(vehicle, slot),
        }
    }

    /// All `(vehicle, slot)` pairs in slot-major order.
    pub fn block_indices(&self) -> impl Iterator<Item = (usize, usize)> {
        let k = self.vehicles();
        (0..self.slots * k).map(move |i| (i % k, i / k))
    }
}

/// Data of one `(vehicle, slot)` subproblem.
#[derive(Debug, Clone, Copy)]
pub struct Block<'a> {
    pub vehicle_weight: f64,
    pub arsu_weight: f64,
    pub vehicle: &'a ComputeModel<f64>,
    pub arsu: &'a ComputeModel<f64>,
    pub slot_len: f64,
    pub vehicles: usize,
    pub min_bits: f64,
    pub output_ratio: f64,
    pub caps: &'a PowerCaps,
    pub links: &'a SlotLinks,
}

impl Block<'_> {
    pub fn sub_slot(&self) -> f64 {
        self.slot_len / self.vehicles as f64
    }

    pub fn local_cap(&self) -> f64 {
        self.vehicle.capacity(self.slot_len)
    }

    pub fn arsu_cap(&self) -> f64 {
        self.arsu.capacity(self.sub_slot())
    }

    pub fn local_energy(&self, bits: f64) -> f64 {
        compute_energy(bits, self.vehicle, self.slot_len, ComputeSite::Local)
    }

    pub fn arsu_energy(&self, bits: f64) -> f64 {
        compute_energy(
            bits,
            self.arsu,
            self.slot_len,
            ComputeSite::Arsu {
                vehicles: self.vehicles,
            },
        )
    }

    pub fn rates(&self, p: &Powers) -> PhaseRates {
        PhaseRates {
            offload: self.links.uplink.rate(p.offload),
            relay: self.links.relay.rate(p.relay),
            download_arsu: self.links.downlink.rate(p.download_arsu),
            download_grsu: self.links.downlink.rate(p.download_grsu),
        }
    }

    pub fn energy(&self, d: &SlotDecision) -> EnergyBreakdown {
        EnergyBreakdown {
            local_compute: self.local_energy(d.bits.local),
            offload: d.powers.offload * d.times.offload,
            relay: d.powers.relay * d.times.relay,
            arsu_compute: self.arsu_energy(d.bits.arsu),
            download_arsu: d.powers.download_arsu * d.times.download_arsu,
            download_grsu: d.powers.download_grsu * d.times.download_grsu,
        }
    }

    /// Weighted energy of one decision.
    pub fn weighted_energy(&self, d: &SlotDecision) -> f64 {
        self.energy(d)
            .weighted(self.vehicle_weight, self.arsu_weight)
    }
}

/// Unweighted energy per activity, J.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub local_compute: f64,
    pub offload: f64,
    pub relay: f64,
    pub arsu_compute: f64,
    pub download_arsu: f64,
    pub download_grsu: f64,
}

impl EnergyBreakdown {
    pub fn vehicle(&self) -> f64 {
        self.local_compute + self.offload
    }

    pub fn arsu(&self) -> f64 {
        self.relay + self.arsu_compute + self.download_arsu + self.download_grsu
    }

    pub fn weighted(&self, vehicle_weight: f64, arsu_weight: f64) -> f64 {
        vehicle_weight * self.vehicle() + arsu_weight * self.arsu()
    }

    pub fn accumulate(&mut self, o: &EnergyBreakdown) {
        self.local_compute += o.local_compute;
        self.offload += o.offload;
        self.relay += o.relay;
        self.arsu_compute += o.arsu_compute;
        self.download_arsu += o.download_arsu;
        self.download_grsu += o.download_grsu;
    }
}

fn carry(bits: f64, rate: f64, phase: Phase) -> Result<f64, ProtocolError> {
    if bits <= 0.0 {
        Ok(0.0)
    } else if rate <= 0.0 {
        Err(ProtocolError::ZeroRateWithBits { phase, bits })
    } else {
        Ok(bits / rate)
    }
}

/// Durations that exactly carry the given bits at the given rates.
pub fn phase_durations(
    split: &BitSplit,
    rates: &PhaseRates,
    vehicle: &ComputeModel<f64>,
    arsu: &ComputeModel<f64>,
    output_ratio: f64,
) -> Result<PhaseSchedule, ProtocolError> {
    Ok(PhaseSchedule {
        offload: carry(split.arsu + split.grsu, rates.offload, Phase::Offload)?,
        relay: carry(split.grsu, rates.relay, Phase::Relay)?,
        arsu_compute: arsu.time_for(split.arsu),
        download_arsu: carry(
            output_ratio * split.arsu,
            rates.download_arsu,
            Phase::DownloadArsu,
        )?,
        download_grsu: carry(
            output_ratio * split.grsu,
            rates.download_grsu,
            Phase::DownloadGrsu,
        )?,
        local_compute: vehicle.time_for(split.local),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintId {
    MinBits,
    NonNegative,
    PhaseWindow,
    LocalWindow,
    SubSlotBudget,
    OffloadRate,
    RelayRate,
    DownloadArsuRate,
    DownloadGrsuRate,
    PowerCap,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub vehicle: usize,
    pub slot: usize,
    pub constraint: ConstraintId,
    /// Amount by which the constraint is exceeded, in its own units.
    pub excess: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Verdict {
    pub violations: Vec<Violation>,
}

impl Verdict {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn contains(&self, c: ConstraintId) -> bool {
        self.violations.iter().any(|v| v.constraint == c)
    }
}

/// Checks one decision; `tol` is a relative slack applied to every test.
pub fn check_decision(block: &Block<'_>, d: &SlotDecision, tol: f64) -> Vec<ConstraintId> {
    let mut out = Vec::new();
    let sub = block.sub_slot();
    let b = &d.bits;
    let t = &d.times;
    let p = &d.powers;
    let bit_slack = tol * block.min_bits.max(b.total()).max(1.0);
    if b.total() < block.min_bits - bit_slack {
        out.push(ConstraintId::MinBits);
    }
    let values = [
        b.local,
        b.arsu,
        b.grsu,
        t.offload,
        t.relay,
        t.download_arsu,
        t.download_grsu,
    ];
    let powers = [p.offload, p.relay, p.download_arsu, p.download_grsu];
    if values
        .iter()
        .chain(&powers)
        .any(|v| *v < 0.0 || !v.is_finite())
    {
        out.push(ConstraintId::NonNegative);
    }
    let window = sub * (1.0 + tol);
    let arsu_time = block.arsu.time_for(b.arsu);
    if [
        t.offload,
        t.relay,
        arsu_time,
        t.download_arsu,
        t.download_grsu,
    ]
    .iter()
    .any(|x| *x > window)
    {
        out.push(ConstraintId::PhaseWindow);
    }
    if block.vehicle.time_for(b.local) > block.slot_len * (1.0 + tol) {
        out.push(ConstraintId::LocalWindow);
    }
    if t.offload + t.relay + arsu_time + t.download_arsu + t.download_grsu > window {
        out.push(ConstraintId::SubSlotBudget);
    }
    let r = block.rates(p);
    let xi = block.output_ratio;
    let rate_checks = [
        (
            b.arsu + b.grsu,
            t.offload * r.offload,
            ConstraintId::OffloadRate,
        ),
        (b.grsu, t.relay * r.relay, ConstraintId::RelayRate),
        (
            xi * b.arsu,
            t.download_arsu * r.download_arsu,
            ConstraintId::DownloadArsuRate,
        ),
        (
            xi * b.grsu,
            t.download_grsu * r.download_grsu,
            ConstraintId::DownloadGrsuRate,
        ),
    ];
    for (need, have, id) in rate_checks {
        if need > have + tol * need.max(1.0) {
            out.push(id);
        }
    }
    let caps = block.caps;
    let cap_pairs = [
        (p.offload, caps.offload),
        (p.relay, caps.relay),
        (p.download_arsu, caps.download_arsu),
        (p.download_grsu, caps.download_grsu),
    ];
    if cap_pairs.iter().any(|(v, c)| *v > c * (1.0 + tol)) {
        out.push(ConstraintId::PowerCap);
    }
    out
}

/// Verifies every constraint of every `(vehicle, slot)` block.
pub fn check_feasible(alloc: &Allocation, problem: &Problem, tol: f64) -> Verdict {
    let mut violations = Vec::new();
    for (k, n, d) in alloc.iter() {
        let block = problem.block(k, n);
        for constraint in check_decision(&block, d, tol) {
            let excess = excess_of(&block, d, constraint);
            violations.push(Violation {
                vehicle: k,
                slot: n,
                constraint,
                excess,
            });
        }
    }
    Verdict { violations }
}

fn excess_of(block: &Block<'_>, d: &SlotDecision, c: ConstraintId) -> f64 {
    let r = block.rates(&d.powers);
    let (b, t) = (&d.bits, &d.times);
    let xi = block.output_ratio;
    match c {
        ConstraintId::MinBits => block.min_bits - b.total(),
        ConstraintId::SubSlotBudget => {
            t.offload + t.relay + block.arsu.time_for(b.arsu) + t.download_arsu + t.download_grsu
                - block.sub_slot()
        }
        ConstraintId::OffloadRate => b.arsu + b.grsu - t.offload * r.offload,
        ConstraintId::RelayRate => b.grsu - t.relay * r.relay,
        ConstraintId::DownloadArsuRate => xi * b.arsu - t.download_arsu * r.download_arsu,
        ConstraintId::DownloadGrsuRate => xi * b.grsu - t.download_grsu * r.download_grsu,
        ConstraintId::LocalWindow => block.vehicle.time_for(b.local) - block.slot_len,
        _ => f64::NAN,
    }
}

/// Total occupied communication and computation time over all sub-slots;
/// optionally adds the local compute time.
pub fn tccd(alloc: &Allocation, include_local: bool) -> f64 {
    alloc
        .iter()
        .map(|(_, _, d)| {
            d.times.occupied()
                + if include_local {
                    d.times.local_compute
                } else {
                    0.0
                }
        })
        .sum()
}

/// Weighted total energy of an allocation (without propulsion).
pub fn wtec(alloc: &Allocation, problem: &Problem) -> f64 {
    alloc
        .iter()
        .map(|(k, n, d)| problem.block(k, n).weighted_energy(d))
        .sum()
}

/// Unweighted energy per activity, summed over the allocation.
pub fn energy_breakdown(alloc: &Allocation, problem: &Problem) -> EnergyBreakdown {
    let mut total = EnergyBreakdown::default();
    for (k, n, d) in alloc.iter() {
        total.accumulate(&problem.block(k, n).energy(d));
    }
    total
}

/// Non-optimized reference policy: equal three-way split clipped to the
/// compute caps (remainder to the GRSU), full power, minimal phase times.
pub fn baseline_decision(block: &Block<'_>) -> Result<SlotDecision, ProtocolError> {
    let third = block.min_bits / 3.0;
    let local = third.min(block.local_cap());
    let arsu = third.min(block.arsu_cap());
    let bits = BitSplit {
        local,
        arsu,
        grsu: (block.min_bits - local - arsu).max(0.0),
    };
    let caps = block.caps;
    let powers = Powers {
        offload: if bits.arsu + bits.grsu > 0.0 {
            caps.offload
        } else {
            0.0
        },
        relay: if bits.grsu > 0.0 { caps.relay } else { 0.0 },
        download_arsu: if bits.arsu > 0.0 {
            caps.download_arsu
        } else {
            0.0
        },
        download_grsu: if bits.grsu > 0.0 {
            caps.download_grsu
        } else {
            0.0
        },
    };
    let times = phase_durations(
        &bits,
        &block.rates(&powers),
        block.vehicle,
        block.arsu,
        block.output_ratio,
    )?;
    Ok(SlotDecision {
        bits,
        powers,
        times,
    })
}

pub fn baseline_allocation(problem: &Problem) -> Result<Allocation, ProtocolError> {
    let decisions = problem
        .block_indices()
        .map(|(k, n)| baseline_decision(&problem.block(k, n)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Allocation::from_decisions(
        problem.vehicles(),
        problem.slots(),
        decisions,
    ))
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    #[test]
    fn zero_split_has_zero_phases() {
        let s = phase_durations(
            &BitSplit::default(),
            &PhaseRates::default(),
            &compute(1e9),
            &compute(3e9),
            0.8,
        )
        .unwrap();
        assert_eq!(s, PhaseSchedule::default());
    }

    #[test]
    fn arsu_compute_and_local_times() {
        let rates = PhaseRates {
            offload: 1e8,
            relay: 1e8,
            download_arsu: 1e8,
            download_grsu: 1e8,
        };
        let split = BitSplit {
            local: 2e5,
            arsu: 1e5,
            grsu: 0.0,
        };
        let s = phase_durations(&split, &rates, &compute(1e9), &compute(3e9), 0.8).unwrap();
        assert!((s.arsu_compute - 1.0 / 30.0).abs() < 1e-15);
        assert!((s.local_compute - 0.2).abs() < 1e-15);
        assert!((s.offload - 1e-3).abs() < 1e-15);
        assert!((s.download_arsu - 0.8e-3).abs() < 1e-15);
    }

    #[test]
    fn zero_rate_with_bits_is_an_error() {
        let split = BitSplit {
            local: 0.0,
            arsu: 0.0,
            grsu: 1.0,
        };
        let r = phase_durations(
            &split,
            &PhaseRates::default(),
            &compute(1e9),
            &compute(3e9),
            0.8,
        );
        assert!(matches!(
            r,
            Err(ProtocolError::ZeroRateWithBits {
                phase: Phase::Offload,
                ..
            })
        ));
    }

    #[test]
    fn zero_allocation_without_demand_is_feasible() {
        let p = problem(0.0, 2, 3);
        let a = Allocation::zeros(2, 3);
        assert!(check_feasible(&a, &p, 1e-9).is_feasible());
        assert_eq!(tccd(&a, true), 0.0);
        assert_eq!(wtec(&a, &p), 0.0);
    }

    #[test]
    fn overloaded_uplink_is_flagged() {
        let p = problem(1e5, 1, 1);
        let mut a = Allocation::zeros(1, 1);
        let d = a.get_mut(0, 0);
        d.bits.grsu = 1e5;
        d.powers = Powers {
            offload: 1.0,
            relay: 1.0,
            download_arsu: 1.0,
            download_grsu: 1.0,
        };
        d.times = PhaseSchedule {
            offload: 1e-4,
            relay: 0.01,
            download_grsu: 0.01,
            ..Default::default()
        };
        let v = check_feasible(&a, &p, 1e-9);
        assert!(v.contains(ConstraintId::OffloadRate));
        assert!(!v.contains(ConstraintId::RelayRate));
    }

    #[test]
    fn tccd_sums_phases() {
        let mut a = Allocation::zeros(1, 1);
        a.get_mut(0, 0).times = PhaseSchedule {
            offload: 1e-3,
            relay: 2e-3,
            arsu_compute: 3e-3,
            download_arsu: 4e-3,
            download_grsu: 5e-3,
            local_compute: 0.1,
        };
        assert!((tccd(&a, false) - 0.015).abs() < 1e-15);
        assert!((tccd(&a, true) - 0.115).abs() < 1e-15);
    }

    #[test]
    fn local_only_wtec_over_forty_slots() {
        let p = problem(2e5, 1, 40);
        let mut a = Allocation::zeros(1, 40);
        for n in 0..40 {
            a.get_mut(0, n).bits.local = 2e5;
        }
        assert!((wtec(&a, &p) - 8.0).abs() < 1e-9);
        let mut p2 = p.clone();
        p2.vehicle_weights = vec![2.0];
        assert!((wtec(&a, &p2) - 16.0).abs() < 1e-9);
    }

    #[test]
    fn baseline_is_feasible_on_easy_problem() {
        let p = problem(3e5, 1, 2);
        let a = baseline_allocation(&p).unwrap();
        assert!(check_feasible(&a, &p, 1e-9).is_feasible());
        let d = a.get(0, 0);
        assert!((d.bits.local - 1e5).abs() < 1e-9);
        assert_eq!(d.powers.offload, 3.162);
    }
}
