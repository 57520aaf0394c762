//! Energy-minimizing task offloading for vehicles served by a UAV-mounted
//! edge server with massive-MIMO links, relaying to a ground road-side unit.
//!
//! Geometry, propulsion and computation models are generic over [`scalar::Real`];
//! the aliases below fix them to `f64`, which is what the solver uses.

pub mod channel;
pub mod config;
pub mod energy;
pub mod geometry;
pub mod lp;
pub mod optimizer;
pub mod oracle;
pub mod protocol;
pub mod runner;
pub mod scalar;
pub mod units;
pub mod verify;

pub type Vec3 = scalar::Vec3<f64>;
pub type ArraySpec = geometry::ArraySpec<f64>;
pub type NodeState = geometry::NodeState<f64>;
pub type NetworkState = geometry::NetworkState<f64>;
pub type Deployment = geometry::Deployment<f64>;
pub type FixedWing = energy::FixedWing<f64>;
pub type RotaryWing = energy::RotaryWing<f64>;
pub type UavPowerModel = energy::UavPowerModel<f64>;
pub type ComputeModel = energy::ComputeModel<f64>;

pub use config::{load_scenario, Mode, Scenario, ScenarioConfig};
pub use optimizer::{algorithm1, SolveReport, SolverSettings};
pub use protocol::{Allocation, Problem};
pub use runner::{run_sweep, SweepResult};
pub use verify::{verify, VerifyReport};
