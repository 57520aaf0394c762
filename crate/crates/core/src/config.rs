//! Scenario files: TOML with unit strings, defaulting to the reference
//! parameter table.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::fmt;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use toml::{Table, Value};

use crate::channel::{DopplerMode, RadioConfig};
use crate::energy::{ComputeModel, FixedWing, RotaryWing, UavPowerModel};
use crate::optimizer::SolverSettings;
use crate::protocol::PowerCaps;
use crate::units::{parse_quantity, Dim};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyError {
    pub key: String,
    pub message: String,
}

impl fmt::Display for KeyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.key, self.message)
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid scenario:\n{}", .0.iter().map(|e| format!("  {e}")).collect::<Vec<_>>().join("\n"))]
    Validation(Vec<KeyError>),
}

/// Which allocation a run reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Optimized,
    Baseline,
    /// Optimized over single-stream lower-bound rates.
    Rank1Bound,
    /// Optimized over full-multiplexing upper-bound rates.
    FullrankBound,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Optimized => "optimized",
            Mode::Baseline => "baseline",
            Mode::Rank1Bound => "rank1_bound",
            Mode::FullrankBound => "fullrank_bound",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub vehicles: usize,
    pub vehicle_weights: Vec<f64>,
    pub arsu_weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UavConfig {
    pub power: UavPowerModel<f64>,
    /// m/s
    pub speed: f64,
    pub azimuth: f64,
    pub elevation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingConfig {
    /// Flight duration, s.
    pub deadline: f64,
    pub slot: f64,
}

impl TimingConfig {
    pub fn slots(&self) -> usize {
        (self.deadline / self.slot).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComputeConfig {
    pub vehicle: ComputeModel<f64>,
    pub arsu: ComputeModel<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskConfig {
    /// Input bits per slot for each vehicle.
    pub bits: Vec<f64>,
    /// Bits that must be processed per slot for each vehicle.
    pub min_bits: Vec<f64>,
    pub output_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryConfig {
    pub altitude: f64,
    /// One per vehicle.
    pub vehicle_elevations: Vec<f64>,
    pub grsu_elevation: f64,
    /// Slant, downtilt and bearing of every array.
    pub array_angles: [f64; 3],
    pub vehicle_speed: f64,
    pub vehicle_azimuth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArraysConfig {
    pub vehicle: usize,
    pub arsu: usize,
    pub grsu: usize,
    /// Inter-element spacing, m.
    pub spacing: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub mode: Mode,
    /// Adds ARSU propulsion energy (weighted) to the reported WTEC.
    pub propulsion_in_wtec: bool,
    /// Counts local compute time in the reported delay.
    pub tccd_includes_local: bool,
    pub seed: u64,
}

/// Fully resolved scenario in SI units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub network: NetworkConfig,
    pub uav: UavConfig,
    pub timing: TimingConfig,
    pub compute: ComputeConfig,
    pub task: TaskConfig,
    pub geometry: GeometryConfig,
    pub radio: RadioConfig,
    pub power: PowerCaps,
    pub arrays: ArraysConfig,
    pub solver: SolverSettings,
    pub run: RunConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Scenario::from_toml_str("")
            .expect("defaults are valid")
            .config
    }
}

/// A scenario together with the raw table it was read from, so sweeps can
/// override any key with the same rules as the file.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub source: Table,
    pub config: ScenarioConfig,
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let source: Table = text
            .parse()
            .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        Self::from_table(source)
    }

    pub fn from_table(source: Table) -> Result<Self, ConfigError> {
        let config = resolve(&source)?;
        Ok(Self { source, config })
    }

    /// Copy with one dotted key replaced.
    pub fn with_override(&self, key: &str, value: Value) -> Result<Self, ConfigError> {
        let mut table = self.source.clone();
        let mut parts: Vec<&str> = key.split('.').collect();
        let leaf = parts.pop().filter(|l| !l.is_empty()).ok_or_else(|| {
            ConfigError::Validation(vec![KeyError {
                key: key.into(),
                message: "empty key".into(),
            }])
        })?;
        let mut node = &mut table;
        for part in parts {
            let entry = node
                .entry(part.to_string())
                .or_insert_with(|| Value::Table(Table::new()));
            node = match entry {
                Value::Table(t) => t,
                _ => {
                    return Err(ConfigError::Validation(vec![KeyError {
                        key: key.into(),
                        message: format!("{part} is not a section"),
                    }]))
                }
            };
        }
        node.insert(leaf.to_string(), value);
        Self::from_table(table)
    }
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Scenario::from_toml_str(&text)
}

struct Resolver<'a> {
    root: &'a Table,
    known: BTreeSet<String>,
    errors: Vec<KeyError>,
    wavelength: Option<f64>,
}

impl<'a> Resolver<'a> {
    fn get(&mut self, key: &str) -> Option<&'a Value> {
        self.known.insert(key.to_string());
        let mut parts = key.split('.').peekable();
        let mut table = self.root;
        while let Some(part) = parts.next() {
            let v = table.get(part)?;
            if parts.peek().is_none() {
                return Some(v);
            }
            table = v.as_table()?;
        }
        None
    }

    fn fail(&mut self, key: &str, message: impl Into<String>) {
        self.errors.push(KeyError {
            key: key.into(),
            message: message.into(),
        });
    }

    fn scalar(&mut self, key: &str, v: &Value, dim: Dim) -> Option<f64> {
        let got = match v {
            Value::Integer(i) => Ok(*i as f64),
            Value::Float(x) => Ok(*x),
            Value::String(s) => parse_quantity(s, dim, self.wavelength),
            other => Err(format!(
                "expected a number or unit string, found {}",
                other.type_str()
            )),
        };
        got.map_err(|e| self.fail(key, e)).ok()
    }

    fn quantity(&mut self, key: &str, dim: Dim, default: f64) -> f64 {
        match self.get(key) {
            None => default,
            Some(v) => self.scalar(key, v, dim).unwrap_or(default),
        }
    }

    fn positive(&mut self, key: &str, dim: Dim, default: f64) -> f64 {
        let x = self.quantity(key, dim, default);
        if x <= 0.0 {
            self.fail(key, format!("must be positive, got {x}"));
        }
        x
    }

    /// A scalar broadcast to `n` entries, or an explicit list of length `n`.
    /// Lists shorter than `n` are cycled when `cycle` is set.
    fn list(&mut self, key: &str, dim: Dim, default: &[f64], n: usize, cycle: bool) -> Vec<f64> {
        let values: Vec<f64> = match self.get(key) {
            None => default.to_vec(),
            Some(Value::Array(items)) => {
                let parsed: Vec<f64> = items
                    .iter()
                    .filter_map(|v| self.scalar(key, v, dim))
                    .collect();
                if parsed.len() != items.len() {
                    return vec![default[0]; n];
                }
                if parsed.len() != n && !cycle {
                    self.fail(key, format!("expected {n} entries, found {}", parsed.len()));
                    return vec![default[0]; n];
                }
                parsed
            }
            Some(v) => vec![self.scalar(key, v, dim).unwrap_or(default[0])],
        };
        if values.is_empty() {
            self.fail(key, "list is empty");
            return vec![default[0]; n];
        }
        (0..n).map(|i| values[i % values.len()]).collect()
    }

    fn count(&mut self, key: &str, default: usize) -> usize {
        let x = match self.get(key) {
            None => return default,
            Some(Value::Integer(i)) => *i as f64,
            Some(Value::Float(f)) => *f,
            Some(other) => {
                self.fail(
                    key,
                    format!("expected an integer, found {}", other.type_str()),
                );
                return default;
            }
        };
        if x < 1.0 || x.fract() != 0.0 {
            self.fail(key, format!("expected a positive integer, got {x}"));
            return default;
        }
        x as usize
    }

    fn flag(&mut self, key: &str, default: bool) -> bool {
        match self.get(key) {
            None => default,
            Some(Value::Boolean(b)) => *b,
            Some(other) => {
                self.fail(
                    key,
                    format!("expected true or false, found {}", other.type_str()),
                );
                default
            }
        }
    }

    fn choice<T: DeserializeOwned>(&mut self, key: &str, default: T) -> T {
        match self.get(key) {
            None => default,
            Some(Value::String(s)) => {
                let name = s.trim().replace('-', "_").to_lowercase();
                match T::deserialize(Value::String(name)) {
                    Ok(v) => v,
                    Err(_) => {
                        self.fail(key, format!("unknown option {s:?}"));
                        default
                    }
                }
            }
            Some(other) => {
                self.fail(
                    key,
                    format!("expected a string, found {}", other.type_str()),
                );
                default
            }
        }
    }

    fn unknown_keys(&mut self) {
        fn walk(t: &Table, prefix: &str, known: &BTreeSet<String>, out: &mut Vec<String>) {
            for (k, v) in t {
                let path = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                match v {
                    Value::Table(inner) => walk(inner, &path, known, out),
                    _ if !known.contains(&path) => out.push(path),
                    _ => {}
                }
            }
        }
        let mut out = Vec::new();
        walk(self.root, "", &self.known, &mut out);
        for key in out {
            self.fail(&key, "unknown key");
        }
    }
}

fn resolve(root: &Table) -> Result<ScenarioConfig, ConfigError> {
    let mut r = Resolver {
        root,
        known: BTreeSet::new(),
        errors: Vec::new(),
        wavelength: None,
    };

    let vehicles = r.count("network.vehicles", 3);
    let network = NetworkConfig {
        vehicles,
        vehicle_weights: r.list(
            "network.vehicle_weight",
            Dim::Plain,
            &[1.0],
            vehicles,
            false,
        ),
        arsu_weight: r.quantity("network.arsu_weight", Dim::Plain, 0.1),
    };
    if network
        .vehicle_weights
        .iter()
        .chain([&network.arsu_weight])
        .any(|w| *w < 0.0)
    {
        r.fail("network", "weights must be nonnegative");
    }

    let fixed = FixedWing::<f64>::default();
    let rotary = RotaryWing::<f64>::default();
    let kind: UavKind = r.choice("uav.kind", UavKind::FixedWing);
    let power = match kind {
        UavKind::FixedWing => UavPowerModel::FixedWing(FixedWing {
            c1: r.quantity("uav.c1", Dim::Plain, fixed.c1),
            c2: r.quantity("uav.c2", Dim::Plain, fixed.c2),
            c3: r.quantity("uav.c3", Dim::Plain, fixed.c3),
        }),
        UavKind::RotaryWing => {
            let mut m = RotaryWing::from_rotor(
                r.positive("uav.tip_speed", Dim::Speed, rotary.tip_speed),
                r.positive("uav.induced_velocity", Dim::Speed, rotary.induced_velocity),
                r.quantity("uav.drag_ratio", Dim::Plain, rotary.drag_ratio),
                r.quantity("uav.solidity", Dim::Plain, rotary.solidity),
                r.positive("uav.air_density", Dim::Plain, rotary.air_density),
                r.positive("uav.disc_area", Dim::Plain, rotary.disc_area),
                r.quantity("uav.climb_power", Dim::Power, rotary.climb_power),
            );
            m.blade_power = r.quantity("uav.blade_power", Dim::Power, m.blade_power);
            m.induced_power = r.quantity("uav.induced_power", Dim::Power, m.induced_power);
            UavPowerModel::RotaryWing(m)
        }
    };
    let uav = UavConfig {
        power,
        speed: r.quantity("uav.speed", Dim::Speed, 10.0),
        azimuth: r.quantity("uav.azimuth", Dim::Angle, PI / 3.0),
        elevation: r.quantity("uav.elevation", Dim::Angle, PI / 9.0),
    };
    if uav.speed < 0.0 {
        r.fail("uav.speed", "must be nonnegative");
    }

    let timing = TimingConfig {
        deadline: r.positive("timing.deadline", Dim::Time, 8.0),
        slot: r.positive("timing.slot", Dim::Time, 0.2),
    };
    let ratio = timing.deadline / timing.slot;
    if timing.slot > 0.0
        && ((ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) || ratio.round() < 1.0)
    {
        r.fail(
            "timing.deadline",
            format!("deadline / slot = {ratio} is not a positive integer"),
        );
    }

    let compute = ComputeConfig {
        vehicle: ComputeModel {
            cpu_freq: r.positive("compute.vehicle_cpu", Dim::Frequency, 1e9),
            cycles_per_bit: r.positive("compute.vehicle_cycles_per_bit", Dim::Plain, 1e3),
            capacitance: r.positive("compute.vehicle_capacitance", Dim::Plain, 1e-27),
        },
        arsu: ComputeModel {
            cpu_freq: r.positive("compute.arsu_cpu", Dim::Frequency, 3e9),
            cycles_per_bit: r.positive("compute.arsu_cycles_per_bit", Dim::Plain, 1e3),
            capacitance: r.positive("compute.arsu_capacitance", Dim::Plain, 1e-27),
        },
    };

    let bits = r.list("task.bits", Dim::Bits, &[5e5], vehicles, false);
    let min_bits = if r.get("task.min_bits").is_some() {
        r.list("task.min_bits", Dim::Bits, &[5e5], vehicles, false)
    } else {
        bits.clone()
    };
    for (k, (b, m)) in bits.iter().zip(&min_bits).enumerate() {
        if *m < 0.0 || *b < 0.0 {
            r.fail(
                "task",
                format!("vehicle {k}: bit counts must be nonnegative"),
            );
        } else if m > b {
            r.fail(
                "task.min_bits",
                format!("vehicle {k}: {m} exceeds the {b} input bits"),
            );
        }
    }
    let task = TaskConfig {
        bits,
        min_bits,
        output_ratio: r.quantity("task.output_ratio", Dim::Plain, 0.8),
    };
    if task.output_ratio < 0.0 {
        r.fail("task.output_ratio", "must be nonnegative");
    }

    let angles = r.list(
        "geometry.array_angles",
        Dim::Angle,
        &[PI / 3.0, PI / 4.0, PI / 3.0],
        3,
        false,
    );
    let geometry = GeometryConfig {
        altitude: r.positive("geometry.altitude", Dim::Length, 10.0),
        vehicle_elevations: r.list(
            "geometry.vehicle_elevations",
            Dim::Angle,
            &[PI / 3.0, PI / 4.0, PI / 6.0],
            vehicles,
            true,
        ),
        grsu_elevation: r.quantity("geometry.grsu_elevation", Dim::Angle, PI / 3.0),
        array_angles: [angles[0], angles[1], angles[2]],
        vehicle_speed: r.quantity("geometry.vehicle_speed", Dim::Speed, 60.0 / 3.6),
        vehicle_azimuth: r.quantity("geometry.vehicle_azimuth", Dim::Angle, PI / 3.0),
    };

    let wavelength = r.positive("radio.wavelength", Dim::Length, 0.15);
    r.wavelength = Some(wavelength);
    let radio = RadioConfig {
        wavelength,
        path_loss_exponent: r.positive("radio.path_loss_exponent", Dim::Plain, 2.0),
        reference_gain: r.positive("radio.reference_gain", Dim::Ratio, 1e-5),
        bandwidth: r.positive("radio.bandwidth", Dim::Frequency, 5e6),
        noise_density: r.positive("radio.noise_density", Dim::NoiseDensity, 1e-16),
        doppler: r.choice("radio.doppler", DopplerMode::Literal),
    };

    let cap = 10f64.powf(0.5);
    let power = PowerCaps {
        offload: r.positive("power.offload", Dim::Power, cap),
        relay: r.positive("power.relay", Dim::Power, cap),
        download_arsu: r.positive("power.download_arsu", Dim::Power, cap),
        download_grsu: r.positive("power.download_grsu", Dim::Power, cap),
    };

    let elements = r.count("arrays.elements", 36);
    let arrays = ArraysConfig {
        vehicle: r.count("arrays.vehicle", elements),
        arsu: r.count("arrays.arsu", elements),
        grsu: r.count("arrays.grsu", elements),
        spacing: r.positive("arrays.spacing", Dim::Length, wavelength / 2.0),
    };
    for (key, n) in [
        ("arrays.vehicle", arrays.vehicle),
        ("arrays.arsu", arrays.arsu),
        ("arrays.grsu", arrays.grsu),
    ] {
        let side = (n as f64).sqrt().round() as usize;
        if side * side != n {
            r.fail(key, format!("{n} elements do not form a square array"));
        }
    }

    let d = SolverSettings::default();
    let solver = SolverSettings {
        epsilon: r.positive("solver.epsilon", Dim::Plain, d.epsilon),
        max_iterations: r.count("solver.max_iterations", d.max_iterations),
        sign_tolerance: r.positive("solver.sign_tolerance", Dim::Plain, d.sign_tolerance),
        dual_space: r.choice("solver.dual_space", d.dual_space),
        power_rule: r.choice("solver.power_rule", d.power_rule),
    };

    let seed = match r.get("run.seed") {
        None => 0,
        Some(Value::Integer(i)) if *i >= 0 => *i as u64,
        Some(_) => {
            r.fail("run.seed", "expected a nonnegative integer");
            0
        }
    };
    let run = RunConfig {
        mode: r.choice("run.mode", Mode::Optimized),
        propulsion_in_wtec: r.flag("run.propulsion_in_wtec", true),
        tccd_includes_local: r.flag("run.tccd_includes_local", false),
        seed,
    };

    r.unknown_keys();
    if r.errors.is_empty() {
        Ok(ScenarioConfig {
            network,
            uav,
            timing,
            compute,
            task,
            geometry,
            radio,
            power,
            arrays,
            solver,
            run,
        })
    } else {
        Err(ConfigError::Validation(r.errors))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
enum UavKind {
    FixedWing,
    RotaryWing,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = Scenario::from_toml_str("").unwrap().config;
        assert_eq!(c.network.vehicles, 3);
        assert_eq!(c.arrays.arsu, 36);
        assert_eq!(c.timing.slot, 0.2);
        assert_eq!(c.timing.slots(), 40);
        assert_eq!(c.task.min_bits, vec![5e5; 3]);
        assert!((c.radio.reference_gain - 1e-5).abs() < 1e-20);
    }

    #[test]
    fn unit_strings_convert() {
        let c = Scenario::from_toml_str(
            "[radio]\nreference_gain = \"-50 dB\"\n[arrays]\nelements = 16\n",
        )
        .unwrap()
        .config;
        assert_eq!(c.radio.reference_gain, 1e-5);
        assert_eq!(
            (c.arrays.vehicle, c.arrays.arsu, c.arrays.grsu),
            (16, 16, 16)
        );
    }

    #[test]
    fn non_integer_slot_count_is_rejected() {
        let err = Scenario::from_toml_str("[timing]\ndeadline = 8\nslot = 0.3\n").unwrap_err();
        match err {
            ConfigError::Validation(errs) => {
                assert!(errs.iter().any(|e| e.key == "timing.deadline"))
            }
            e => panic!("{e}"),
        }
    }

    #[test]
    fn every_bad_key_is_listed() {
        let err = Scenario::from_toml_str(
            "[radio]\nbandwidth = \"5 dBm\"\ntypo = 1\n[arrays]\nelements = 10\n",
        )
        .unwrap_err();
        let ConfigError::Validation(errs) = err else {
            panic!()
        };
        let keys: Vec<_> = errs.iter().map(|e| e.key.as_str()).collect();
        assert!(keys.contains(&"radio.bandwidth"));
        assert!(keys.contains(&"radio.typo"));
        assert!(keys.contains(&"arrays.vehicle"));
    }

    #[test]
    fn override_reresolves() {
        let s = Scenario::from_toml_str("").unwrap();
        let t = s
            .with_override("geometry.altitude", Value::Float(20.0))
            .unwrap();
        assert_eq!(t.config.geometry.altitude, 20.0);
        let u = s
            .with_override("task.bits", Value::String("0.2 Mbit".into()))
            .unwrap();
        assert_eq!(u.config.task.min_bits, vec![2e5; 3]);
    }

    #[test]
    fn config_round_trips_through_json() {
        let c = ScenarioConfig::default();
        let back: ScenarioConfig =
            serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(c, back);
    }
}
