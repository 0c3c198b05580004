use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use approx::assert_abs_diff_eq;
use tempfile::TempDir;

use hyseek::controller::Perturbation;
use hyseek::geometry::Manifold;
use hyseek::hybrid::{check_hybrid_time_monotone, check_jump_decrease};
use hyseek::scenario::{
    emit_plot_data, p_deviation, run, sweep, verify_gap, Law, PlotKind, Scenario, ScenarioConfig,
    SweepGrid, SYNERGY,
};
use hyseek::synergistic::GapOptions;

fn example(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn short(s: Scenario, horizon: f64) -> ScenarioConfig {
    let mut c = ScenarioConfig::defaults(s);
    c.solver.horizon = horizon;
    c
}

#[test]
fn example_configs_match_defaults() {
    for s in Scenario::ALL {
        let file = ScenarioConfig::from_file(&example(&format!("{}.toml", s.name()))).unwrap();
        let d = ScenarioConfig::defaults(s);
        assert_eq!(file.scenario, s);
        assert_abs_diff_eq!(file.gains.eps, d.gains.eps, epsilon = 1e-12);
        assert_eq!(file.gains.gamma, d.gains.gamma);
        assert_eq!(file.delta, d.delta);
        assert_eq!(file.periods, d.periods);
        assert_eq!(file.initial, d.initial);
        assert_eq!(file.perturbation, d.perturbation);
        assert_eq!(file.automaton.alphabets, d.automaton.alphabets);
        assert_eq!(file.solver.horizon, d.solver.horizon);
    }
}

#[test]
fn grid_example_parses() {
    let g = SweepGrid::from_file(&example("grid.toml")).unwrap();
    assert_eq!(g.seed_count, Some(10));
    assert_eq!(g.eps.as_deref(), Some(&[0.2, 0.1, 0.05][..]));
}

#[test]
fn perturbation_linearization_contracts_toward_its_center() {
    // Near the centre, d(p) ≈ −a (p − p♯) on the tangent space.
    let m = Manifold::circle();
    let a = 0.15;
    let pert = Perturbation {
        amplitude: a,
        sigma: 0.5,
        p_sharp: vec![0.0, -1.0],
    };
    for h in [1e-3, -1e-3] {
        let ang = -PI / 2.0 + h;
        let d = pert.eval(&m, &[ang.cos(), ang.sin()]);
        // Tangent at the centre is (1, 0): the pull must oppose the offset.
        assert_abs_diff_eq!(d[0] / h, -a, epsilon = 1e-3 * a);
    }
}

#[test]
fn zero_horizon_gives_a_single_sample() {
    let rec = run(&short(Scenario::Sphere, 0.0)).unwrap();
    assert_eq!(rec.arc.len(), 1);
    assert_eq!(rec.summary.final_t, 0.0);
    assert_eq!(rec.summary.jumps, 0);
}

#[test]
fn arcs_are_well_formed() {
    for s in Scenario::ALL {
        let rec = run(&short(s, 3.0)).unwrap();
        assert!(check_hybrid_time_monotone(&rec.arc).is_ok(), "{}", s.name());
        assert!(rec.summary.max_drift <= 1e-8, "{}", s.name());
        assert_eq!(rec.summary.reentry_violations, 0);
        assert!(rec.summary.obstacle_ok());
    }
}

#[test]
fn synergy_jumps_decrease_v_by_delta() {
    // Start in the wrong mode so that the first step is a synergy jump.
    let mut total = 0;
    for k in 0..8 {
        let mut c = short(Scenario::Circle, 5.0);
        c.perturbation = None;
        c.seed = k;
        let a = 2.0 * PI * k as f64 / 8.0 + 0.1;
        c.initial = vec![a.cos(), a.sin()];
        c.initial_mode = Some(1 + (k as usize % 2));
        let rec = run(&c).unwrap();
        total += rec.summary.synergy_jumps;
        let bad = check_jump_decrease(&rec.arc, "V", c.delta, SYNERGY).unwrap();
        assert!(bad.is_empty(), "{bad:?}");
    }
    assert!(total > 0);
}

#[test]
fn averaged_run_has_zero_deviation_from_itself() {
    let mut c = short(Scenario::Circle, 2.0);
    c.law = Law::Averaged;
    c.step = Some(1e-3);
    let a = run(&c).unwrap().arc;
    let b = run(&c).unwrap().arc;
    assert_eq!(p_deviation(&a, &b, 2, 1e-3), 0.0);
}

#[test]
fn gap_check_fails_for_oversized_delta() {
    let opts = GapOptions {
        samples: 2000,
        ..GapOptions::default()
    };
    let mut c = ScenarioConfig::defaults(Scenario::Circle);
    assert!(verify_gap(&c, &opts).unwrap().passes());
    c.delta = 1.5;
    let rep = verify_gap(&c, &opts).unwrap();
    assert!(!rep.passes());
    assert_abs_diff_eq!(rep.gap, 1.1, epsilon = 1e-3);
}

#[test]
fn sweep_covers_the_cartesian_product() {
    let c = short(Scenario::Circle, 0.5);
    let grid = SweepGrid {
        seed_count: Some(10),
        eps: Some(vec![0.2, 0.1, 0.05]),
        ..SweepGrid::default()
    };
    let rep = sweep(&c, &grid).unwrap();
    assert_eq!(rep.rows.len() + rep.failures.len(), 30);
    assert!(rep.failures.is_empty());
    assert_eq!(rep.to_csv().lines().count(), 31);
}

#[test]
fn plot_requests_are_checked_before_writing() {
    let rec = run(&short(Scenario::Circle, 0.5)).unwrap();
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("plots");

    assert!(emit_plot_data(&rec, &[], &out).is_err());
    assert!(!out.exists());
    // Attitude data exists only for the SO(3) scenario.
    assert!(emit_plot_data(&rec, &[PlotKind::Trajectory, PlotKind::Attitude], &out).is_err());
    assert!(!out.exists());

    let files = emit_plot_data(&rec, &PlotKind::defaults(Scenario::Circle), &out).unwrap();
    for f in &files {
        let text = std::fs::read_to_string(f).unwrap();
        assert_eq!(text.lines().count(), rec.arc.len() + 1);
        assert!(text.starts_with("t,j,"));
    }
}
