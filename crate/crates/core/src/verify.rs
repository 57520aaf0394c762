//! Acceptance suite: every check prints measured value against threshold.

use std::fmt;
use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use toml::Value;

use crate::channel::{build_channel_set, LinkChannel, RateBound};
use crate::config::{ConfigError, Mode, Scenario};
use crate::energy::{compute_energy, flight_energy, ComputeSite, RotaryWing, UavPowerModel};
use crate::optimizer::{algorithm1, closed_form_phase1, power_opt};
use crate::oracle::{
    convexity_probe, feasible_energy_coords, grid_search_primal, kkt_residuals, sample_allocation,
    wtec_energy_coords, GridSpec, KktThresholds,
};
use crate::runner::{build_problem, deployment, run_mode, run_sweep, to_csv, RunOutcome};
use crate::scalar::Vec3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Criterion {
    pub id: String,
    pub name: String,
    pub measured: f64,
    pub threshold: f64,
    pub passed: bool,
    pub detail: String,
}

impl Criterion {
    fn new(
        id: &str,
        name: &str,
        measured: f64,
        threshold: f64,
        passed: bool,
        detail: impl Into<String>,
    ) -> Self {
        Self {
            id: id.into(),
            name: name.into(),
            measured,
            threshold,
            passed,
            detail: detail.into(),
        }
    }

    /// Passes when `measured <= threshold`.
    fn at_most(
        id: &str,
        name: &str,
        measured: f64,
        threshold: f64,
        detail: impl Into<String>,
    ) -> Self {
        Self::new(id, name, measured, threshold, measured <= threshold, detail)
    }

    fn error(id: &str, name: &str, threshold: f64, err: impl fmt::Display) -> Self {
        Self::new(
            id,
            name,
            f64::NAN,
            threshold,
            false,
            format!("error: {err}"),
        )
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:<3} {:<28} measured {:<11.4e} threshold {:<10.3e} {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.measured,
            self.threshold,
            self.detail
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub criteria: Vec<Criterion>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.criteria.iter().all(|c| c.passed)
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.criteria {
            writeln!(f, "{c}")?;
        }
        let failed = self.criteria.iter().filter(|c| !c.passed).count();
        write!(
            f,
            "{} of {} criteria passed",
            self.criteria.len() - failed,
            self.criteria.len()
        )
    }
}

fn with(base: &Scenario, overrides: &[(&str, Value)]) -> Result<Scenario, ConfigError> {
    overrides
        .iter()
        .try_fold(base.clone(), |s, (k, v)| s.with_override(k, v.clone()))
}

fn text(s: &str) -> Value {
    Value::String(s.into())
}

pub const CONVEXITY_PAIRS: usize = 1000;

/// Midpoint convexity of WTEC over random feasible pairs, in energy
/// coordinates; also requires every midpoint to stay feasible.
pub fn convexity(base: &Scenario) -> Criterion {
    let (id, name) = ("1", "convexity");
    let start = Instant::now();
    let problem = match build_problem(&base.config, Mode::Optimized) {
        Ok(p) => p,
        Err(e) => return Criterion::error(id, name, 1e-9, e),
    };
    let r = convexity_probe(
        |x| wtec_energy_coords(&problem, x),
        |rng| sample_allocation(&problem, rng),
        |x| feasible_energy_coords(&problem, x, 1e-9),
        CONVEXITY_PAIRS,
        base.config.run.seed,
    );
    let secs = start.elapsed().as_secs_f64();
    let passed = r.worst_violation <= 1e-9 && r.infeasible_midpoints == 0 && secs < 10.0;
    let detail = format!(
        "{} pairs, {} infeasible midpoints, {secs:.2} s (limit 10 s)",
        r.samples, r.infeasible_midpoints
    );
    Criterion::new(id, name, r.worst_violation, 1e-9, passed, detail)
}

fn random_phases(rng: &mut ChaCha8Rng, n: usize) -> Vec<Complex64> {
    (0..n)
        .map(|_| Complex64::from_polar(1.0, rng.gen_range(0.0..std::f64::consts::TAU)))
        .collect()
}

/// Stationary powers: numeric root against the closed form on rank-1
/// channels, and the upper/lower bound ratio on arbitrary ones.
pub fn power_consistency(base: &Scenario) -> Criterion {
    let (id, name) = ("2", "closed-form power");
    let radio = base.config.radio;
    let mut rng = ChaCha8Rng::seed_from_u64(base.config.run.seed);
    let sizes = [4usize, 9, 16, 36, 64];
    let p_max = base.config.power.offload;
    let mut rank1 = 0.0f64;
    let mut ratio = 0.0f64;
    for _ in 0..100 {
        let (rx, tx) = (
            sizes[rng.gen_range(0..sizes.len())],
            sizes[rng.gen_range(0..sizes.len())],
        );
        let path_loss = 10f64.powf(rng.gen_range(-10.0..-6.0));
        let weight = rng.gen_range(0.1..1.0);
        let scale = path_loss.sqrt();

        let (u, v) = (random_phases(&mut rng, rx), random_phases(&mut rng, tx));
        let h = DMatrix::from_fn(rx, tx, |i, j| u[i] * v[j].conj() * scale);
        let ch = LinkChannel::from_matrix(h, path_loss);
        let gain = ch.bound_curve(&radio, RateBound::Lower).gains()[0];
        let target = rng.gen_range(0.01..0.9) * p_max;
        let chi = (target + 1.0 / gain) * weight * std::f64::consts::LN_2 / radio.bandwidth;
        let closed = closed_form_phase1(
            &ch,
            RateBound::Lower,
            weight,
            0.0,
            chi,
            &radio,
            p_max,
            1.0,
            1e-9,
        )
        .power;
        let numeric = power_opt(&ch.rate_curve(&radio), weight, chi, p_max);
        rank1 = rank1.max((numeric - closed).abs() / closed);

        let h = DMatrix::from_vec(rx, tx, random_phases(&mut rng, rx * tx)).map(|z| z * scale);
        let ch = LinkChannel::from_matrix(h, path_loss);
        let lower = closed_form_phase1(
            &ch,
            RateBound::Lower,
            weight,
            0.0,
            chi,
            &radio,
            p_max,
            1.0,
            1e-9,
        )
        .unclamped;
        let upper = closed_form_phase1(
            &ch,
            RateBound::Upper,
            weight,
            0.0,
            chi,
            &radio,
            p_max,
            1.0,
            1e-9,
        )
        .unclamped;
        let streams = rx.min(tx) as f64;
        ratio = ratio.max((upper - streams * lower).abs() / (streams * lower).abs());
    }
    let passed = rank1 <= 1e-6 && ratio == 0.0;
    let detail = format!("100 draws; rank-1 root mismatch {rank1:.2e}, upper/lower ratio error {ratio:.1e} (must be 0)");
    Criterion::new(id, name, rank1, 1e-6, passed, detail)
}

/// Grid search against the solver on a single vehicle and slot.
pub fn oracle_equivalence(base: &Scenario) -> Criterion {
    let (id, name) = ("3", "grid oracle");
    let start = Instant::now();
    let run = || -> Result<(f64, bool, String), Box<dyn std::error::Error>> {
        let slot = base.config.timing.slot;
        let mut worst = 0.0f64;
        let mut weak = true;
        let mut parts = Vec::new();
        for bits in ["0.2 Mbit", "0.5 Mbit", "0.8 Mbit"] {
            let s = with(
                base,
                &[
                    ("network.vehicles", Value::Integer(1)),
                    ("timing.deadline", Value::Float(slot)),
                    ("task.bits", text(bits)),
                ],
            )?;
            let problem = build_problem(&s.config, Mode::Optimized)?;
            let report = algorithm1(&problem, &s.config.solver)?;
            let grid =
                grid_search_primal(&problem, &GridSpec::coarse(&problem.block(0, 0), 10, 12))?;
            let rel = (grid.wtec - report.primal_value).abs() / report.primal_value;
            worst = worst.max(rel);
            weak &= grid.wtec >= report.dual_value;
            parts.push(format!("{bits}: {rel:.1e}"));
        }
        Ok((worst, weak, parts.join(", ")))
    };
    match run() {
        Ok((worst, weak, parts)) => {
            let secs = start.elapsed().as_secs_f64();
            let passed = worst <= 0.02 && weak && secs < 300.0;
            let detail = format!(
                "{parts}; weak duality {}; {secs:.2} s",
                if weak { "holds" } else { "VIOLATED" }
            );
            Criterion::new(id, name, worst, 0.02, passed, detail)
        }
        Err(e) => Criterion::error(id, name, 0.02, e),
    }
}

/// KKT residuals and the duality gap of one converged run on `base`.
pub fn kkt_and_gap(base: &Scenario) -> Vec<Criterion> {
    let problem = match build_problem(&base.config, Mode::Optimized) {
        Ok(p) => p,
        Err(e) => {
            return vec![
                Criterion::error("4", "KKT", 1e-3, &e),
                Criterion::error("5", "duality gap", 1e-3, e),
            ]
        }
    };
    let report = match algorithm1(&problem, &base.config.solver) {
        Ok(r) => r,
        Err(e) => {
            return vec![
                Criterion::error("4", "KKT", 1e-3, &e),
                Criterion::error("5", "duality gap", 1e-3, e),
            ]
        }
    };
    let k = kkt_residuals(&report, &problem);
    let t = KktThresholds::default();
    let kkt = Criterion::new(
        "4",
        "KKT",
        k.stationarity,
        t.stationarity,
        t.passes(&k),
        format!(
            "primal {:.1e} (<= {:.0e}), dual {:.1e} (<= {:.0e}), slackness {:.1e} (<= {:.0e})",
            k.primal_feasibility,
            t.primal_feasibility,
            k.dual_feasibility,
            t.dual_feasibility,
            k.complementary_slackness,
            t.complementary_slackness
        ),
    );
    let gap = Criterion::at_most(
        "5",
        "duality gap",
        report.duality_gap.abs(),
        1e-3,
        format!(
            "primal {:.6e} J, dual {:.6e} J",
            report.primal_value, report.dual_value
        ),
    );
    vec![kkt, gap]
}

/// Iterations to reach the configured gap over task sizes and array sizes.
pub fn convergence(base: &Scenario) -> Criterion {
    let (id, name) = ("6", "convergence");
    let eps = base.config.solver.epsilon;
    let cases: Vec<(i64, &str)> = [16, 36, 64]
        .iter()
        .flat_map(|&l| ["0.2 Mbit", "0.5 Mbit", "0.8 Mbit"].map(move |b| (l, b)))
        .collect();
    let results: Vec<Result<(usize, f64), String>> = cases
        .par_iter()
        .map(|&(l, b)| {
            let s = with(
                base,
                &[
                    ("arrays.elements", Value::Integer(l)),
                    ("task.bits", text(b)),
                ],
            )
            .map_err(|e| e.to_string())?;
            let p = build_problem(&s.config, Mode::Optimized).map_err(|e| e.to_string())?;
            let r = algorithm1(&p, &s.config.solver).map_err(|e| format!("L={l}, {b}: {e}"))?;
            Ok((r.iterations, r.gap_bound))
        })
        .collect();
    let mut worst = 0usize;
    let mut gap = 0.0f64;
    for r in results {
        match r {
            Ok((it, g)) => {
                worst = worst.max(it);
                gap = gap.max(g);
            }
            Err(e) => return Criterion::error(id, name, 30.0, e),
        }
    }
    let passed = worst <= 30 && gap < eps;
    let detail = format!("9 cases; worst gap bound {gap:.2e} (< {eps:.0e})");
    Criterion::new(id, name, worst as f64, 30.0, passed, detail)
}

struct Pair {
    optimized: RunOutcome,
    baseline: RunOutcome,
}

fn pairs(
    base: &Scenario,
    overrides: &[(&str, Value)],
    axis: &str,
    values: &[f64],
) -> Result<Vec<Pair>, String> {
    let base = with(base, overrides).map_err(|e| e.to_string())?;
    values
        .par_iter()
        .map(|&v| {
            let s = base
                .with_override(axis, Value::Float(v))
                .map_err(|e| e.to_string())?;
            let run =
                |m| run_mode(&s.config, m).map_err(|e| format!("{axis}={v}, {}: {e}", m.name()));
            Ok(Pair {
                optimized: run(Mode::Optimized)?,
                baseline: run(Mode::Baseline)?,
            })
        })
        .collect()
}

fn series(ps: &[Pair], f: impl Fn(&Pair) -> f64) -> String {
    ps.iter()
        .map(|p| format!("{:.4}", f(p)))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Worst step `x[i] - x[i+1]` relative to `x[i]`; negative when strictly rising.
fn worst_drop(xs: &[f64]) -> f64 {
    xs.windows(2)
        .map(|w| (w[0] - w[1]) / w[0].abs())
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Trend checks: delay against array size, optimized against baseline,
/// energy against altitude, flight time, speed and ARSU weight.
pub fn trends(base: &Scenario) -> Vec<Criterion> {
    let by_array = pairs(
        base,
        &[("task.bits", text("0.5 Mbit"))],
        "arrays.elements",
        &[16.0, 36.0, 64.0],
    );
    let by_bits = pairs(base, &[], "task.bits", &[2e5, 5e5, 8e5]);
    let by_altitude = pairs(
        base,
        &[
            ("network.vehicles", Value::Integer(1)),
            ("uav.kind", text("rotary-wing")),
            ("uav.speed", Value::Float(0.0)),
            ("task.bits", text("0.6 Mbit")),
        ],
        "geometry.altitude",
        &[10.0, 20.0, 40.0, 80.0, 160.0],
    );
    let loaded = [("task.bits", text("0.6 Mbit"))];
    let by_time = pairs(base, &loaded, "timing.deadline", &[2.0, 4.0, 6.0, 8.0]);
    let by_speed = pairs(base, &loaded, "uav.speed", &[30.0, 35.0, 40.0]);
    let by_weight = pairs(base, &loaded, "network.arsu_weight", &[0.1, 0.2, 0.4]);

    let mut out = Vec::new();
    out.push(match &by_array {
        Ok(ps) => {
            // rises count as positive drops, so strictly decreasing means < 0
            let opt: Vec<f64> = ps.iter().map(|p| -p.optimized.tccd).collect();
            let bas: Vec<f64> = ps.iter().map(|p| -p.baseline.tccd).collect();
            let worst = worst_drop(&opt).max(worst_drop(&bas));
            let detail = format!(
                "TCCD over L=16,36,64: optimized [{}] s, baseline [{}] s",
                series(ps, |p| p.optimized.tccd),
                series(ps, |p| p.baseline.tccd)
            );
            Criterion::new(
                "7a",
                "TCCD decreasing in L",
                worst,
                0.0,
                worst < 0.0,
                detail,
            )
        }
        Err(e) => Criterion::error("7a", "TCCD decreasing in L", 0.0, e),
    });

    let all: Vec<&Result<Vec<Pair>, String>> = vec![
        &by_array,
        &by_bits,
        &by_altitude,
        &by_time,
        &by_speed,
        &by_weight,
    ];
    out.push(match all.iter().find_map(|r| r.as_ref().err()) {
        Some(e) => Criterion::error("7b", "optimized <= baseline", 1e-6, e),
        None => {
            let ps: Vec<&Pair> = all.iter().flat_map(|r| r.as_ref().unwrap().iter()).collect();
            let worst = ps
                .iter()
                .map(|p| (p.optimized.wtec - p.baseline.wtec) / p.baseline.wtec.abs())
                .fold(f64::NEG_INFINITY, f64::max);
            let infeasible = ps.iter().filter(|p| !p.optimized.feasible).count();
            let overrun = ps.iter().filter(|p| !p.baseline.feasible).count();
            let detail = format!(
                "{} points, worst relative excess over baseline; {infeasible} infeasible (baseline overruns its sub-slot at {overrun})",
                ps.len()
            );
            Criterion::new("7b", "optimized <= baseline", worst, 1e-6, worst <= 1e-6 && infeasible == 0, detail)
        }
    });

    out.push(match all.iter().find_map(|r| r.as_ref().err()) {
        Some(e) => Criterion::error("11", "TCCD optimized <= baseline", 0.0, e),
        None => {
            let ps: Vec<&Pair> = all
                .iter()
                .flat_map(|r| r.as_ref().unwrap().iter())
                .collect();
            let worst = ps
                .iter()
                .map(|p| p.optimized.tccd - p.baseline.tccd)
                .fold(f64::NEG_INFINITY, f64::max);
            let above = ps
                .iter()
                .filter(|p| p.optimized.tccd > p.baseline.tccd)
                .count();
            let detail = format!(
                "{} points, {above} with optimized TCCD above baseline; worst excess in s",
                ps.len()
            );
            Criterion::new(
                "11",
                "TCCD optimized <= baseline",
                worst,
                0.0,
                above == 0,
                detail,
            )
        }
    });

    out.push(match &by_altitude {
        Ok(ps) => {
            let w: Vec<f64> = ps.iter().map(|p| p.optimized.wtec).collect();
            let worst = worst_drop(&w);
            let detail = format!(
                "WTEC over h_U=10..160 m: [{}] J",
                series(ps, |p| p.optimized.wtec)
            );
            Criterion::new(
                "7c",
                "WTEC non-decreasing in h_U",
                worst,
                0.0,
                worst <= 0.0,
                detail,
            )
        }
        Err(e) => Criterion::error("7c", "WTEC non-decreasing in h_U", 0.0, e),
    });

    let rising = |ps: &[Pair]| worst_drop(&ps.iter().map(|p| p.optimized.wtec).collect::<Vec<_>>());
    out.push(match (&by_time, &by_speed, &by_weight) {
        (Ok(t), Ok(v), Ok(w)) => {
            let worst = rising(t).max(rising(v)).max(rising(w));
            // linearity: largest deviation of the increments from their mean
            let inc: Vec<f64> = t
                .windows(2)
                .map(|p| p[1].optimized.wtec - p[0].optimized.wtec)
                .collect();
            let mean = inc.iter().sum::<f64>() / inc.len() as f64;
            let nonlinear = inc
                .iter()
                .map(|d| (d - mean).abs() / mean)
                .fold(0.0, f64::max);
            let detail = format!(
                "T_U [{}], v_U [{}], w_U [{}] J; T_U increments vary {nonlinear:.1e}",
                series(t, |p| p.optimized.wtec),
                series(v, |p| p.optimized.wtec),
                series(w, |p| p.optimized.wtec)
            );
            Criterion::new(
                "7d",
                "WTEC rising in T_U, v_U, w_U",
                worst,
                0.0,
                worst < 0.0,
                detail,
            )
        }
        (Err(e), _, _) | (_, Err(e), _) | (_, _, Err(e)) => {
            Criterion::error("7d", "WTEC rising in T_U, v_U, w_U", 0.0, e)
        }
    });
    out
}

/// Hand-computable constants at the configured values.
pub fn derived_constants(base: &Scenario) -> Vec<Criterion> {
    let cfg = &base.config;
    let tau = cfg.timing.slot;
    let cpu = &cfg.compute.vehicle;
    let cap = cpu.capacity(tau);
    let local = Criterion::at_most(
        "8a",
        "local compute cap",
        (cap - 2e5).abs() / 2e5,
        1e-12,
        format!("{cap} bits per slot (2.0e5)"),
    );

    let rotary = match with(base, &[("uav.kind", text("rotary-wing"))]).map(|s| s.config.uav.power)
    {
        Ok(UavPowerModel::RotaryWing(m)) => m,
        _ => RotaryWing::default(),
    };
    let zero = Vec3::default();
    let hover =
        flight_energy(&UavPowerModel::RotaryWing(rotary), zero, zero, tau).unwrap_or(f64::NAN);
    let hover_c = Criterion::at_most(
        "8b",
        "rotary hover slot energy",
        (hover - 33.7).abs() / 33.7,
        0.01,
        format!(
            "{hover:.4} J = tau (P0 + P1) = {tau} x ({:.3} + {:.3}) W (33.7 J)",
            rotary.blade_power, rotary.induced_power
        ),
    );

    let e = compute_energy(cap, cpu, tau, ComputeSite::Local);
    let energy = Criterion::at_most(
        "8c",
        "local energy at cap",
        (e - 0.2).abs() / 0.2,
        1e-12,
        format!("{e} J (0.2 J)"),
    );
    vec![local, hover_c, energy]
}

/// Two independent runs of the same sweep must give identical CSV bytes.
pub fn determinism(base: &Scenario) -> Criterion {
    let (id, name) = ("9", "determinism");
    let run = || -> Result<String, String> {
        let s = with(base, &[("timing.deadline", Value::Float(1.0))]).map_err(|e| e.to_string())?;
        let r = run_sweep(&s, "task.bits", &[2e5, 5e5], true).map_err(|e| e.to_string())?;
        to_csv(&r).map_err(|e| e.to_string())
    };
    match (run(), run()) {
        (Ok(a), Ok(b)) => {
            let differing = a.lines().zip(b.lines()).filter(|(x, y)| x != y).count()
                + a.lines().count().abs_diff(b.lines().count());
            let detail = format!("{} bytes per run, {differing} differing lines", a.len());
            Criterion::new(id, name, differing as f64, 0.0, a == b, detail)
        }
        (Err(e), _) | (_, Err(e)) => Criterion::error(id, name, 0.0, e),
    }
}

/// Unit-modulus entries and Frobenius energy `L_tx L_rx beta` of `links`.
pub fn channel_invariants<'a>(links: impl IntoIterator<Item = &'a LinkChannel>) -> Criterion {
    let mut modulus = 0.0f64;
    let mut frob = 0.0f64;
    let mut n = 0;
    for ch in links {
        n += 1;
        modulus = modulus.max(ch.modulus_error());
        let want = (ch.tx_len() * ch.rx_len()) as f64 * ch.path_loss();
        frob = frob.max((ch.frobenius_sq() - want).abs() / want);
    }
    let worst = modulus.max(frob);
    let detail =
        format!("{n} links; entry modulus error {modulus:.1e}, Frobenius error {frob:.1e}");
    Criterion::at_most("10", "channel invariants", worst, 1e-9, detail)
}

/// Channel invariants on the links of the first slot.
pub fn channel_check(base: &Scenario) -> Criterion {
    let sets = deployment(&base.config)
        .and_then(|d| d.initial_state())
        .map_err(|e| e.to_string())
        .and_then(|s| build_channel_set(&s, &base.config.radio).map_err(|e| e.to_string()));
    match sets {
        Ok(set) => channel_invariants(
            set.uplink
                .iter()
                .chain(&set.downlink)
                .chain([&set.relay, &set.backhaul]),
        ),
        Err(e) => Criterion::error("10", "channel invariants", 1e-9, e),
    }
}

/// Runs the whole suite on `base`.
pub fn verify(base: &Scenario) -> VerifyReport {
    let mut criteria = vec![
        convexity(base),
        power_consistency(base),
        oracle_equivalence(base),
    ];
    criteria.extend(kkt_and_gap(base));
    criteria.push(convergence(base));
    let (dominance, trends): (Vec<_>, Vec<_>) =
        trends(base).into_iter().partition(|c| c.id == "11");
    criteria.extend(trends);
    criteria.extend(derived_constants(base));
    criteria.push(determinism(base));
    criteria.push(channel_check(base));
    criteria.extend(dominance);
    VerifyReport { criteria }
}
