use hyseek_web::{circle_potentials, simulate, synergy_gap, ROW};

// Error paths build a `JsError`, which needs a JavaScript host; only the
// success paths are exercised natively.

#[test]
fn simulate_returns_whole_rows() {
    let rows = simulate("circle", true, 1, -1.0, 5.0).ok().unwrap();
    assert_eq!(rows.len() % ROW, 0);
    assert!(rows.len() / ROW > 10);
    let first = &rows[..ROW];
    assert_eq!(first[0], 0.0);
    assert!((first[1] - 0.0).abs() < 1e-12 && (first[2] + 1.0).abs() < 1e-12);
    for s in ["sphere", "obstacle_holonomic", "obstacle_nonholonomic"] {
        let amp = if s == "obstacle_holonomic" { 0.0 } else { 0.15 };
        let rows = simulate(s, false, 0, amp, 1.0).ok().unwrap();
        assert!(rows.chunks(ROW).all(|r| r.iter().all(|v| v.is_finite())), "{s}");
    }
}

#[test]
fn circle_potentials_vanish_only_at_the_target() {
    let rows = circle_potentials(360, 0.25).ok().unwrap();
    assert_eq!(rows.len(), 3 * 360);
    for r in rows.chunks(3) {
        let at_target = (r[0] - std::f64::consts::FRAC_PI_2).abs() < 1e-9;
        assert!(r[1] >= 0.0 && r[2] >= 0.0);
        assert_eq!(r[1].min(r[2]) < 1e-12, at_target, "{r:?}");
    }
}

#[test]
fn gap_of_the_circle_family() {
    let g = synergy_gap("circle", 2000).ok().unwrap();
    assert!((g - 1.1).abs() < 1e-3, "{g}");
}
