use std::f64::consts::{LN_2, TAU};

use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uavmec::channel::{LinkChannel, RadioConfig, RateBound, RateCurve};
use uavmec::optimizer::{
    bits_arsu_opt, bits_local_opt, block_kkt, closed_form_phase1, closed_form_power, lagrangian,
    lagrangian_minimizer, power_opt, DualSpace, Multipliers, OptimizerError, PowerRule,
};
use uavmec::protocol::{baseline_decision, check_decision};
use uavmec::runner::build_problem;
use uavmec::{algorithm1, ComputeModel, Mode, Problem, Scenario, SolverSettings};

fn scenario(toml: &str) -> Scenario {
    Scenario::from_toml_str(toml).unwrap()
}

fn problem(toml: &str) -> (Problem, SolverSettings) {
    let s = scenario(toml);
    (
        build_problem(&s.config, Mode::Optimized).unwrap(),
        s.config.solver,
    )
}

fn radio() -> RadioConfig {
    scenario("").config.radio
}

fn cpu() -> ComputeModel {
    ComputeModel {
        cpu_freq: 1e9,
        cycles_per_bit: 1e3,
        capacitance: 1e-27,
    }
}

/// Index of the smallest `f` on a uniform grid of `n` points over `[0, hi]`, and the step.
fn grid_argmin(f: impl Fn(f64) -> f64, hi: f64, n: usize) -> (f64, f64) {
    let step = hi / (n - 1) as f64;
    let best = (0..n)
        .map(|i| i as f64 * step)
        .min_by(|a, b| f(*a).total_cmp(&f(*b)))
        .unwrap();
    (best, step)
}

#[test]
fn dual_ascent_is_monotone_and_ends_dual_feasible() {
    let (p, s) = problem("[timing]\ndeadline = 1.0\n");
    let report = algorithm1(&p, &s).unwrap();
    for b in &report.dual.blocks {
        assert!(
            b.dual_trajectory.windows(2).all(|w| w[1] >= w[0]),
            "block ({}, {})",
            b.vehicle,
            b.slot
        );
        assert!(b.multipliers.0.iter().all(|&c| c >= 0.0));
        let m = &b.multipliers;
        let scale = m.min_bits().max(f64::MIN_POSITIVE);
        assert!(m.grsu_margin(p.tasks[b.vehicle].output_ratio) >= -1e-9 * scale);
    }
}

#[test]
fn bit_minimizers_match_a_fine_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (tau, k, xi) = (0.2, 3usize, 0.8);
    let cpu = cpu();
    let c = cpu.cycles_per_bit;
    for _ in 0..100 {
        let w = rng.gen_range(0.1..2.0);
        let wu = rng.gen_range(0.05..1.0);
        // Prices spanning zero, interior and capped optima.
        let unit = 3.0 * w * cpu.capacitance * c.powi(3) * (cpu.capacity(tau) / tau).powi(2);
        let chi1 = unit * 10f64.powf(rng.gen_range(-3.0..1.0));
        let m = Multipliers([
            chi1,
            rng.gen_range(0.0..1e-6),
            rng.gen_range(0.0..0.3) * chi1,
            0.0,
            rng.gen_range(0.0..0.3) * chi1,
            0.0,
        ]);

        let local = |b: f64| w * cpu.capacitance * c.powi(3) * b.powi(3) / (tau * tau) - chi1 * b;
        let (g, step) = grid_argmin(local, cpu.capacity(tau), 10001);
        assert!((bits_local_opt(chi1, w, &cpu, tau) - g).abs() <= step);

        let kf = k as f64;
        let lin = m.time() * c / cpu.cpu_freq - m.min_bits() + m.offload() + xi * m.download_arsu();
        let arsu =
            |b: f64| wu * kf * kf * cpu.capacitance * c.powi(3) * b.powi(3) / (tau * tau) + lin * b;
        let (g, step) = grid_argmin(arsu, cpu.capacity(tau / kf), 10001);
        assert!((bits_arsu_opt(&m, xi, wu, &cpu, tau, k) - g).abs() <= step);
    }
}

#[test]
fn bits_shrink_as_their_energy_gets_dearer() {
    let cpu = cpu();
    let tau = 0.2;
    let chi1 = 1e-8;
    let m = Multipliers([chi1, 0.0, 0.0, 0.0, 2e-9, 0.0]);
    let weights = [0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0];
    let local: Vec<f64> = weights
        .iter()
        .map(|&w| bits_local_opt(chi1, w, &cpu, tau))
        .collect();
    let arsu: Vec<f64> = weights
        .iter()
        .map(|&w| bits_arsu_opt(&m, 0.8, w, &cpu, tau, 3))
        .collect();
    let by_ratio: Vec<f64> = [0.0, 0.5, 1.0, 2.0, 4.0]
        .iter()
        .map(|&xi| bits_arsu_opt(&m, xi, 0.1, &cpu, tau, 3))
        .collect();
    for v in [&local, &arsu, &by_ratio] {
        assert!(v.windows(2).all(|w| w[1] <= w[0]), "{v:?}");
        assert!(v[0] > *v.last().unwrap());
    }
}

fn phases(n: usize) -> impl Strategy<Value = Vec<Complex64>> {
    prop::collection::vec(0.0..TAU, n).prop_map(|v| {
        v.into_iter()
            .map(|t| Complex64::from_polar(1.0, t))
            .collect()
    })
}

fn random_link() -> impl Strategy<Value = LinkChannel> {
    (1usize..8, 1usize..8, 1e-10..1e-6f64).prop_flat_map(|(r, c, loss)| {
        phases(r * c).prop_map(move |z| {
            let h = DMatrix::from_vec(r, c, z).map(|x| x * loss.sqrt());
            LinkChannel::from_matrix(h, loss)
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn lower_bound_power_never_exceeds_upper(ch in random_link(), w in 0.05..2.0f64, chi in 1e-9..1e-5f64) {
        let cfg = radio();
        let at = |b| closed_form_phase1(&ch, b, w, 0.0, chi, &cfg, 3.162, 0.1, 1e-9);
        let (lo, up) = (at(RateBound::Lower), at(RateBound::Upper));
        prop_assert!(lo.power <= up.power);
        if lo.unclamped >= 0.0 {
            prop_assert!(lo.unclamped <= up.unclamped);
        }
    }

    #[test]
    fn stationarity_function_is_increasing(gains in prop::collection::vec(1e-2..1e6f64, 1..6), w in 0.05..2.0f64, chi in 1e-9..1e-4f64) {
        let curve = RateCurve::new(5e6, gains);
        let f = |p: f64| w - chi * curve.slope(p);
        let ps: Vec<f64> = (0..200).map(|i| 3.162 * i as f64 / 199.0).collect();
        prop_assert!(ps.windows(2).all(|q| f(q[1]) >= f(q[0])));
        let p = power_opt(&curve, w, chi, 3.162);
        if p > 1e-9 && p < 3.162 * (1.0 - 1e-9) {
            prop_assert!(f(p).abs() <= 1e-6 * w);
        }
    }
}

#[test]
fn single_stream_bisection_matches_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let p_max = 3.162;
    for _ in 0..100 {
        let g = 10f64.powf(rng.gen_range(-1.0..5.0));
        let w = rng.gen_range(0.05..2.0);
        let target = rng.gen_range(0.01..0.99) * p_max;
        let curve = RateCurve::new(5e6, vec![g]);
        let chi = (target + 1.0 / g) * w * LN_2 / curve.bandwidth();
        let closed = closed_form_power(&curve, w, chi, p_max).unwrap();
        let numeric = power_opt(&curve, w, chi, p_max);
        assert!(
            (closed - numeric).abs() <= 1e-9 * closed,
            "{closed} vs {numeric}"
        );
    }
}

#[test]
fn dual_value_bounds_any_feasible_energy() {
    let (p, s) = problem("[timing]\ndeadline = 1.0\n");
    let report = algorithm1(&p, &s).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for (k, n) in p.block_indices() {
        let block = p.block(k, n);
        let feasible = [
            baseline_decision(&block).unwrap(),
            *report.allocation.get(k, n),
        ];
        for f in &feasible {
            assert!(check_decision(&block, f, 1e-9).is_empty());
        }
        let star = report
            .dual
            .blocks
            .iter()
            .find(|b| (b.vehicle, b.slot) == (k, n))
            .unwrap()
            .multipliers;
        for _ in 0..50 {
            let mut m = star;
            m.0.iter_mut().for_each(|c| *c *= rng.gen_range(0.0..3.0));
            // Keep the GRSU margin nonnegative so the dual is bounded.
            m.0[2] += (-m.grsu_margin(block.output_ratio)).max(0.0);
            let d = lagrangian_minimizer(&block, &m, PowerRule::Numeric, 1e-9).unwrap();
            let q = lagrangian(&block, &d, &m);
            for f in &feasible {
                assert!(q <= block.weighted_energy(f) * (1.0 + 1e-9));
            }
        }
    }
}

#[test]
fn perturbed_multipliers_break_stationarity() {
    let (p, s) = problem("[network]\nvehicles = 1\n[timing]\ndeadline = 0.2\n");
    let report = algorithm1(&p, &s).unwrap();
    let b = &report.dual.blocks[0];
    let block = p.block(0, 0);
    let d = report.allocation.get(0, 0);
    let at = block_kkt(&block, d, &b.multipliers).stationarity;
    let mut m = b.multipliers;
    m.0.iter_mut().for_each(|c| *c *= 1.1);
    assert!(block_kkt(&block, d, &m).stationarity > 10.0 * at.max(1e-12));
}

#[test]
fn full_dual_space_agrees_with_reduced() {
    let (p, s) = problem("[network]\nvehicles = 1\n[timing]\ndeadline = 0.2\n");
    let reduced = algorithm1(&p, &s).unwrap();
    let full_settings = SolverSettings {
        dual_space: DualSpace::Full,
        max_iterations: 3000,
        ..s
    };
    let full = algorithm1(&p, &full_settings).unwrap();
    assert!(full.dual_value <= full.primal_value);
    assert!((full.primal_value - reduced.primal_value).abs() <= 1e-3 * reduced.primal_value);
}

#[test]
fn full_dual_space_reports_the_cap_honestly() {
    let (p, s) = problem("[network]\nvehicles = 1\n[timing]\ndeadline = 0.2\n");
    let capped = SolverSettings {
        dual_space: DualSpace::Full,
        max_iterations: 20,
        ..s
    };
    match algorithm1(&p, &capped) {
        Err(OptimizerError::IterationCapExceeded { iterations, best }) => {
            assert_eq!(iterations, 20);
            assert!(best.dual_value().is_finite());
        }
        other => panic!("expected the iteration cap, got {other:?}"),
    }
}

#[test]
fn zero_demand_costs_nothing() {
    let (mut p, s) = problem("");
    p.tasks.iter_mut().for_each(|t| t.min_bits = 0.0);
    let report = algorithm1(&p, &s).unwrap();
    assert_eq!(report.primal_value, 0.0);
}

#[test]
fn rank_one_power_rules_agree() {
    let s = scenario("[timing]\ndeadline = 1.0\n");
    let p = build_problem(&s.config, Mode::Rank1Bound).unwrap();
    let numeric = algorithm1(&p, &s.config.solver).unwrap().primal_value;
    let settings = SolverSettings {
        power_rule: PowerRule::ClosedForm,
        ..s.config.solver
    };
    let closed = algorithm1(&p, &settings).unwrap().primal_value;
    assert!(
        (numeric - closed).abs() <= 1e-6 * numeric,
        "{numeric} vs {closed}"
    );
}

#[test]
fn duality_gap_closes() {
    let (p, s) = problem("[timing]\ndeadline = 1.0\n");
    let report = algorithm1(&p, &s).unwrap();
    assert!(report.dual_value <= report.primal_value * (1.0 + 1e-12));
    assert!(
        report.duality_gap <= s.epsilon,
        "gap {}",
        report.duality_gap
    );
}
