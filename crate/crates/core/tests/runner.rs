use nalgebra::DMatrix;
use num_complex::Complex64;
use toml::Value;
use uavmec::channel::LinkChannel;
use uavmec::runner::{run_single, to_csv, to_json, COLUMNS};
use uavmec::verify::{channel_invariants, convergence, kkt_and_gap};
use uavmec::{run_sweep, Mode, Scenario, SweepResult};

fn short() -> Scenario {
    Scenario::from_toml_str("[timing]\ndeadline = 0.6\n").unwrap()
}

fn data_lines(csv: &str) -> Vec<&str> {
    csv.lines().filter(|l| !l.starts_with('#')).collect()
}

#[test]
fn sweeps_are_byte_identical_across_runs() {
    let s = short();
    let run = || to_csv(&run_sweep(&s, "task.bits", &[3e5, 1e5], true).unwrap()).unwrap();
    assert_eq!(run(), run());
}

#[test]
fn json_round_trips() {
    let r = run_sweep(&short(), "geometry.altitude", &[10.0, 20.0], false).unwrap();
    let back: SweepResult = serde_json::from_str(&to_json(&r).unwrap()).unwrap();
    assert_eq!(r, back);
}

#[test]
fn empty_sweep_writes_only_the_header() {
    let r = run_sweep(&short(), "task.bits", &[], true).unwrap();
    let csv = to_csv(&r).unwrap();
    assert_eq!(data_lines(&csv), vec![COLUMNS.join(",")]);
}

#[test]
fn sweep_rows_follow_values_and_schemes() {
    let s = short();
    let alone = run_sweep(&s, "task.bits", &[4e5, 2e5, 3e5], false).unwrap();
    assert_eq!(alone.rows.len(), 3);
    let values: Vec<_> = alone.rows.iter().map(|r| r.sweep_value.unwrap()).collect();
    assert_eq!(values, vec![2e5, 3e5, 4e5]);
    let both = run_sweep(&s, "task.bits", &[4e5, 2e5, 3e5], true).unwrap();
    assert_eq!(both.rows.len(), 6);
    for pair in both.rows.chunks(2) {
        assert_eq!(
            (pair[0].mode, pair[1].mode),
            (Mode::Optimized, Mode::Baseline)
        );
        assert!(pair[0].feasible && pair[1].feasible);
        assert!(pair[0].wtec_j.unwrap() <= pair[1].wtec_j.unwrap());
    }
}

#[test]
fn failed_points_keep_their_row() {
    let s = short()
        .with_override("task.bits", Value::String("50 Gbit".into()))
        .unwrap();
    let r = run_single(&s.config, false);
    assert_eq!(r.rows.len(), 1);
    assert_ne!(r.rows[0].status, "ok");
    assert!(r.rows[0].wtec_j.is_none());
    assert_eq!(data_lines(&to_csv(&r).unwrap()).len(), 2);
}

#[test]
fn loose_epsilon_is_caught_by_the_gap_check() {
    let s =
        Scenario::from_toml_str("[timing]\ndeadline = 0.6\n[solver]\nepsilon = 100.0\n").unwrap();
    let [_, gap] = <[_; 2]>::try_from(kkt_and_gap(&s)).unwrap();
    assert!(!gap.passed, "{gap}");
    assert!(convergence(&s).passed);
}

#[test]
fn corrupted_channel_fails_invariants() {
    let loss: f64 = 1e-8;
    let h = DMatrix::from_element(4, 4, Complex64::new(loss.sqrt(), 0.0));
    let good = LinkChannel::from_matrix(h.clone(), loss);
    assert!(channel_invariants([&good]).passed);
    let mut bad = h;
    bad[(1, 2)] *= 1.5;
    let bad = LinkChannel::from_matrix(bad, loss);
    assert!(!channel_invariants([&good, &bad]).passed);
}
