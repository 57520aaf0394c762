//! Lagrangian-dual solver: closed-form inner solutions, ellipsoid updates of
//! the multipliers and LP recovery of the non-unique variables.

pub mod closed_form;
pub mod dual;
pub mod ellipsoid;
pub mod kkt;
pub mod recovery;
mod solve;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lp::LpError;
use crate::protocol::ProtocolError;

pub use closed_form::{
    bits_arsu_opt, bits_grsu_rule, bits_local_opt, closed_form_phase1, closed_form_power,
    power_opt, slot_time_opt, ClosedFormPower, GrsuRule, SlotTime,
};
pub use dual::{
    dual_subgradients, lagrangian, lagrangian_minimizer, price_point, PowerRule, PricePoint,
};
pub use ellipsoid::{Ellipsoid, EllipsoidError};
pub use kkt::{block_kkt, kkt_summary, KktSummary};
pub use recovery::{solve_p2, solve_p2_block, FixedDecision};
pub use solve::{
    algorithm1, ellipsoid_solve, BlockDual, DualSpace, DualState, SolveReport, SolverSettings,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptimizerError {
    #[error("multipliers violate dual feasibility (margin {margin:e})")]
    DualInfeasible { margin: f64 },
    #[error("ellipsoid did not reach the gap target within {iterations} iterations")]
    IterationCapExceeded {
        iterations: usize,
        best: Box<DualState>,
    },
    #[error("vehicle {vehicle}, slot {slot}: {reason}")]
    Infeasible {
        vehicle: usize,
        slot: usize,
        reason: String,
    },
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

/// The six multiplier families of one `(vehicle, slot)` block, in order:
/// minimum bits, sub-slot time budget, offload rate, relay rate, ARSU
/// download rate, GRSU download rate.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Multipliers(pub [f64; 6]);

impl Multipliers {
    pub fn min_bits(&self) -> f64 {
        self.0[0]
    }
    pub fn time(&self) -> f64 {
        self.0[1]
    }
    pub fn offload(&self) -> f64 {
        self.0[2]
    }
    pub fn relay(&self) -> f64 {
        self.0[3]
    }
    pub fn download_arsu(&self) -> f64 {
        self.0[4]
    }
    pub fn download_grsu(&self) -> f64 {
        self.0[5]
    }

    /// `chi3 + chi4 + xi chi6 - chi1`; must be nonnegative for a bounded dual.
    pub fn grsu_margin(&self, output_ratio: f64) -> f64 {
        self.offload() + self.relay() + output_ratio * self.download_grsu() - self.min_bits()
    }
}
