//! Scenario engine: builds the per-slot problem, runs the selected scheme
//! and collects rows for sweeps.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{
    build_channel_set, ChannelError, LinkChannel, RadioConfig, RateBound, RateCurve,
};
use crate::config::{ConfigError, Mode, Scenario, ScenarioConfig};
use crate::energy::{flight_energy, split_velocity, EnergyError};
use crate::geometry::{make_velocity, ArraySpec, Deployment, GeometryError};
use crate::optimizer::{algorithm1, OptimizerError, SolveReport};
use crate::protocol::{
    baseline_allocation, check_feasible, energy_breakdown, tccd, wtec, Allocation, EnergyBreakdown,
    PhaseSchedule, Problem, ProtocolError, SlotLinks, Task,
};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Optimizer(#[from] OptimizerError),
    #[error("cannot write {path}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot serialize results: {0}")]
    Serialize(String),
}

pub fn square_array(
    cfg: &ScenarioConfig,
    elements: usize,
) -> Result<ArraySpec<f64>, GeometryError> {
    let side = (elements as f64).sqrt().round() as usize;
    ArraySpec::square(side, cfg.arrays.spacing, cfg.geometry.array_angles)
}

pub fn deployment(cfg: &ScenarioConfig) -> Result<Deployment<f64>, GeometryError> {
    let g = &cfg.geometry;
    let u = &cfg.uav;
    Ok(Deployment {
        altitude: g.altitude,
        vehicle_elevations: g.vehicle_elevations.clone(),
        grsu_elevation: g.grsu_elevation,
        vehicle_velocity: make_velocity(g.vehicle_speed, g.vehicle_azimuth, 0.0),
        arsu_velocity: make_velocity(u.speed, u.azimuth, u.elevation),
        vehicle_array: square_array(cfg, cfg.arrays.vehicle)?,
        arsu_array: square_array(cfg, cfg.arrays.arsu)?,
        grsu_array: square_array(cfg, cfg.arrays.grsu)?,
        horizon: cfg.timing.slots(),
        slot_len: cfg.timing.slot,
        vehicle_positions: None,
        arsu_position: None,
        grsu_position: None,
    })
}

fn curve(ch: &LinkChannel, radio: &RadioConfig, mode: Mode) -> RateCurve {
    match mode {
        Mode::Optimized | Mode::Baseline => ch.rate_curve(radio),
        Mode::Rank1Bound => ch.bound_curve(radio, RateBound::Lower),
        Mode::FullrankBound => ch.bound_curve(radio, RateBound::Upper),
    }
}

/// Channels for every slot along the trajectory, turned into rate curves.
pub fn build_problem(cfg: &ScenarioConfig, mode: Mode) -> Result<Problem, RunError> {
    cfg.radio.validate()?;
    let states = deployment(cfg)?.initial_state()?.trajectory()?;
    let sets = states
        .par_iter()
        .map(|s| build_channel_set(s, &cfg.radio))
        .collect::<Result<Vec<_>, _>>()?;
    let links = sets
        .iter()
        .flat_map(|set| {
            set.uplink
                .iter()
                .zip(&set.downlink)
                .map(move |(up, down)| SlotLinks {
                    uplink: curve(up, &cfg.radio, mode),
                    relay: curve(&set.relay, &cfg.radio, mode),
                    downlink: curve(down, &cfg.radio, mode),
                })
        })
        .collect();
    let k = cfg.network.vehicles;
    let tasks = (0..k)
        .map(|i| Task {
            bits_per_slot: cfg.task.bits[i],
            min_bits: cfg.task.min_bits[i],
            output_ratio: cfg.task.output_ratio,
            deadline: cfg.timing.deadline,
        })
        .collect();
    Ok(Problem::new(
        cfg.timing.slot,
        cfg.network.vehicle_weights.clone(),
        cfg.network.arsu_weight,
        vec![cfg.compute.vehicle; k],
        cfg.compute.arsu,
        tasks,
        cfg.power,
        links,
    )?)
}

/// Unweighted ARSU propulsion energy over the whole flight, J.
pub fn propulsion_energy(cfg: &ScenarioConfig) -> Result<f64, EnergyError> {
    let v = make_velocity(cfg.uav.speed, cfg.uav.azimuth, cfg.uav.elevation);
    let (xy, z) = split_velocity(v);
    Ok(flight_energy(&cfg.uav.power, xy, z, cfg.timing.slot)? * cfg.timing.slots() as f64)
}

/// One scheme evaluated on one scenario.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub mode: Mode,
    pub allocation: Allocation,
    /// Reported WTEC, J; includes weighted propulsion when configured.
    pub wtec: f64,
    pub propulsion: f64,
    pub tccd: f64,
    pub feasible: bool,
    pub iterations: usize,
    /// Unweighted per-activity energy of the allocation.
    pub energy: EnergyBreakdown,
    pub report: Option<SolveReport>,
}

pub const FEASIBILITY_TOL: f64 = 1e-9;

/// Runs one scheme on `cfg`.
pub fn run_mode(cfg: &ScenarioConfig, mode: Mode) -> Result<RunOutcome, RunError> {
    let problem = build_problem(cfg, mode)?;
    let (allocation, report) = match mode {
        Mode::Baseline => (baseline_allocation(&problem)?, None),
        _ => {
            let r = algorithm1(&problem, &cfg.solver)?;
            (r.allocation.clone(), Some(r))
        }
    };
    let propulsion = if cfg.run.propulsion_in_wtec {
        propulsion_energy(cfg)?
    } else {
        0.0
    };
    Ok(RunOutcome {
        mode,
        wtec: wtec(&allocation, &problem) + cfg.network.arsu_weight * propulsion,
        propulsion,
        tccd: tccd(&allocation, cfg.run.tccd_includes_local),
        feasible: check_feasible(&allocation, &problem, FEASIBILITY_TOL).is_feasible(),
        iterations: report.as_ref().map_or(0, |r| r.iterations),
        energy: energy_breakdown(&allocation, &problem),
        report,
        allocation,
    })
}

/// Canonical column order of result files.
pub const COLUMNS: [&str; 21] = [
    "sweep_value",
    "mode",
    "wtec_J",
    "tccd_s",
    "feasible",
    "iterations",
    "offload_s",
    "relay_s",
    "arsu_compute_s",
    "download_arsu_s",
    "download_grsu_s",
    "local_compute_s",
    "local_compute_J",
    "offload_J",
    "relay_J",
    "arsu_compute_J",
    "download_arsu_J",
    "download_grsu_J",
    "propulsion_J",
    "primal_dual_gap",
    "status",
];

/// Rounds to the 9 significant digits written to result files.
pub fn sig9(x: f64) -> f64 {
    format!("{x:.8e}").parse().unwrap_or(x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseTotals {
    pub offload: f64,
    pub relay: f64,
    pub arsu_compute: f64,
    pub download_arsu: f64,
    pub download_grsu: f64,
    pub local_compute: f64,
}

/// One result line. Metrics are `None` when the point failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub sweep_value: Option<f64>,
    pub mode: Mode,
    pub wtec_j: Option<f64>,
    pub tccd_s: Option<f64>,
    pub feasible: bool,
    pub iterations: usize,
    /// Seconds summed over vehicles and slots.
    pub times_s: Option<PhaseTotals>,
    /// Unweighted joules summed over vehicles and slots.
    pub energy_j: Option<PhaseTotals>,
    pub propulsion_j: Option<f64>,
    pub primal_dual_gap: Option<f64>,
    pub status: String,
}

impl SweepRow {
    fn from_outcome(value: Option<f64>, o: &RunOutcome) -> Self {
        let mut t = PhaseSchedule::default();
        for (_, _, d) in o.allocation.iter() {
            let s = &d.times;
            t.offload += s.offload;
            t.relay += s.relay;
            t.arsu_compute += s.arsu_compute;
            t.download_arsu += s.download_arsu;
            t.download_grsu += s.download_grsu;
            t.local_compute += s.local_compute;
        }
        let e = o.energy;
        Self {
            sweep_value: value.map(sig9),
            mode: o.mode,
            wtec_j: Some(sig9(o.wtec)),
            tccd_s: Some(sig9(o.tccd)),
            feasible: o.feasible,
            iterations: o.iterations,
            times_s: Some(PhaseTotals {
                offload: sig9(t.offload),
                relay: sig9(t.relay),
                arsu_compute: sig9(t.arsu_compute),
                download_arsu: sig9(t.download_arsu),
                download_grsu: sig9(t.download_grsu),
                local_compute: sig9(t.local_compute),
            }),
            energy_j: Some(PhaseTotals {
                offload: sig9(e.offload),
                relay: sig9(e.relay),
                arsu_compute: sig9(e.arsu_compute),
                download_arsu: sig9(e.download_arsu),
                download_grsu: sig9(e.download_grsu),
                local_compute: sig9(e.local_compute),
            }),
            propulsion_j: Some(sig9(o.propulsion)),
            primal_dual_gap: o.report.as_ref().map(|r| sig9(r.duality_gap)),
            status: "ok".into(),
        }
    }

    fn failed(value: Option<f64>, mode: Mode, err: &RunError) -> Self {
        Self {
            sweep_value: value.map(sig9),
            mode,
            wtec_j: None,
            tccd_s: None,
            feasible: false,
            iterations: match err {
                RunError::Optimizer(OptimizerError::IterationCapExceeded {
                    iterations, ..
                }) => *iterations,
                _ => 0,
            },
            times_s: None,
            energy_j: None,
            propulsion_j: None,
            primal_dual_gap: None,
            status: err.to_string().replace(['\n', ','], " "),
        }
    }

    fn cells(&self) -> Vec<String> {
        let f = |x: Option<f64>| x.map_or(String::new(), |v| format!("{v:.8e}"));
        let (t, e) = (self.times_s.as_ref(), self.energy_j.as_ref());
        let mut out = vec![
            f(self.sweep_value),
            self.mode.name().to_string(),
            f(self.wtec_j),
            f(self.tccd_s),
            self.feasible.to_string(),
            self.iterations.to_string(),
        ];
        let times = [
            t.map(|p| p.offload),
            t.map(|p| p.relay),
            t.map(|p| p.arsu_compute),
            t.map(|p| p.download_arsu),
            t.map(|p| p.download_grsu),
            t.map(|p| p.local_compute),
        ];
        let energy = [
            e.map(|p| p.local_compute),
            e.map(|p| p.offload),
            e.map(|p| p.relay),
            e.map(|p| p.arsu_compute),
            e.map(|p| p.download_arsu),
            e.map(|p| p.download_grsu),
            self.propulsion_j,
            self.primal_dual_gap,
        ];
        out.extend(times.into_iter().chain(energy).map(f));
        out.push(self.status.clone());
        out
    }
}

/// Runs one scenario: the configured mode, plus the baseline if asked.
pub fn run_point(cfg: &ScenarioConfig, value: Option<f64>, with_baseline: bool) -> Vec<SweepRow> {
    let mut modes = vec![cfg.run.mode];
    if with_baseline && cfg.run.mode != Mode::Baseline {
        modes.push(Mode::Baseline);
    }
    modes
        .into_iter()
        .map(|mode| match run_mode(cfg, mode) {
            Ok(o) => SweepRow::from_outcome(value, &o),
            Err(err) => SweepRow::failed(value, mode, &err),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    /// Dotted config key that was varied; empty for a single solve.
    pub axis: String,
    pub config: ScenarioConfig,
    pub columns: Vec<String>,
    pub rows: Vec<SweepRow>,
}

/// Evaluates `values` of `axis` (bare numbers in base units) in parallel;
/// rows come out ordered by value.
pub fn run_sweep(
    base: &Scenario,
    axis: &str,
    values: &[f64],
    with_baseline: bool,
) -> Result<SweepResult, RunError> {
    let mut values = values.to_vec();
    values.sort_by(f64::total_cmp);
    let scenarios = values
        .iter()
        .map(|v| base.with_override(axis, toml::Value::Float(*v)))
        .collect::<Result<Vec<_>, _>>()?;
    let rows = scenarios
        .par_iter()
        .zip(&values)
        .map(|(s, v)| run_point(&s.config, Some(*v), with_baseline))
        .collect::<Vec<_>>()
        .concat();
    Ok(SweepResult {
        axis: axis.to_string(),
        config: base.config.clone(),
        columns: COLUMNS.iter().map(|c| c.to_string()).collect(),
        rows,
    })
}

/// A single scenario as a one-point result.
pub fn run_single(cfg: &ScenarioConfig, with_baseline: bool) -> SweepResult {
    SweepResult {
        axis: String::new(),
        config: cfg.clone(),
        columns: COLUMNS.iter().map(|c| c.to_string()).collect(),
        rows: run_point(cfg, None, with_baseline),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// CSV text: provenance comment lines, then header and rows.
pub fn to_csv(result: &SweepResult) -> Result<String, RunError> {
    let mut out = String::new();
    let echo = toml::to_string(&result.config).map_err(|e| RunError::Serialize(e.to_string()))?;
    if !result.axis.is_empty() {
        out.push_str(&format!("# sweep axis: {}\n", result.axis));
    }
    for line in echo.lines() {
        out.push_str("# ");
        out.push_str(line);
        out.push('\n');
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let ser = |e: csv::Error| RunError::Serialize(e.to_string());
    w.write_record(&result.columns).map_err(ser)?;
    for row in &result.rows {
        w.write_record(row.cells()).map_err(ser)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| RunError::Serialize(e.to_string()))?;
    out.push_str(&String::from_utf8_lossy(&bytes));
    Ok(out)
}

pub fn to_json(result: &SweepResult) -> Result<String, RunError> {
    serde_json::to_string_pretty(result).map_err(|e| RunError::Serialize(e.to_string()))
}

pub fn emit_results(result: &SweepResult, format: Format, path: &Path) -> Result<(), RunError> {
    let text = match format {
        Format::Csv => to_csv(result)?,
        Format::Json => to_json(result)? + "\n",
    };
    let io = |source| RunError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut f = std::fs::File::create(path).map_err(io)?;
    f.write_all(text.as_bytes()).map_err(io)
}
