//! Browser bindings for the demo page in `www/`.
//!
//! `run()` in the core crate reads the wall clock, which is unavailable on
//! `wasm32-unknown-unknown`, so the closed loop is solved directly here.

use wasm_bindgen::prelude::*;

use hyseek::hybrid::solve;
use hyseek::scenario::{ClosedLoop, Scenario, ScenarioConfig};
use hyseek::synergistic::{estimate_synergy_gap, CircleFamily, GapOptions, PotentialFamily};

/// Values per row returned by [`simulate`]: `t, x, y, dist, V, q`.
pub const ROW: usize = 6;

fn scenario(name: &str) -> Result<Scenario, JsError> {
    match name.parse::<Scenario>() {
        Ok(Scenario::So3) => Err(JsError::new("so3 has no planar view in the demo")),
        Ok(s) => Ok(s),
        Err(e) => Err(JsError::new(&e.to_string())),
    }
}

fn err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

/// Run one scenario and return its path as flat rows of [`ROW`] values.
///
/// `x, y` are the plane position for obstacle scenarios, the point itself on
/// the circle and the `(x, z)` side view on the sphere. A negative
/// `amplitude` keeps the scenario's default perturbation.
#[wasm_bindgen]
pub fn simulate(
    name: &str,
    hybrid: bool,
    seed: u32,
    amplitude: f64,
    horizon: f64,
) -> Result<Vec<f64>, JsError> {
    let s = scenario(name)?;
    let mut cfg = ScenarioConfig::defaults(s);
    cfg.seed = seed as u64;
    cfg.hybrid = hybrid;
    cfg.solver.horizon = horizon;
    cfg.solver.record_every = 20;
    if amplitude >= 0.0 {
        match cfg.perturbation.as_mut() {
            Some(p) => p.amplitude = amplitude,
            None if amplitude == 0.0 => {}
            None => return Err(JsError::new("this scenario has no perturbation")),
        }
    }
    cfg.validate().map_err(err)?;
    let cl = ClosedLoop::new(&cfg).map_err(err)?;
    let x0 = cl.initial_state(&cfg).map_err(err)?;
    let arc = solve(&cl, &x0, &cfg.solver_config()).map_err(err)?;

    let chan = |n: &str| arc.channel(n).ok_or_else(|| JsError::new(n));
    let (dist, v, q) = (chan("dist")?, chan("V")?, chan("q")?);
    let (xs, ys) = match s {
        Scenario::Circle => (arc.component(0), arc.component(1)),
        Scenario::Sphere => (arc.component(0), arc.component(2)),
        _ => (chan("z1")?, chan("z2")?),
    };
    let mut out = Vec::with_capacity(arc.len() * ROW);
    for (k, ht) in arc.times().iter().enumerate() {
        out.extend_from_slice(&[ht.t, xs[k], ys[k], dist[k], v[k], q[k]]);
    }
    Ok(out)
}

/// The two circle potentials sampled at `n` angles: rows of `angle, V₁, V₂`.
#[wasm_bindgen]
pub fn circle_potentials(n: u32, delta: f64) -> Result<Vec<f64>, JsError> {
    let fam = CircleFamily::new([0.0, 1.0], delta).map_err(err)?;
    let mut out = Vec::with_capacity(3 * n as usize);
    for k in 0..n {
        let a = -std::f64::consts::PI + 2.0 * std::f64::consts::PI * k as f64 / n as f64;
        let p = [a.cos(), a.sin()];
        out.extend_from_slice(&[a, fam.eval(1, &p), fam.eval(2, &p)]);
    }
    Ok(out)
}

/// Numerical synergy gap of a scenario's family.
#[wasm_bindgen]
pub fn synergy_gap(name: &str, samples: u32) -> Result<f64, JsError> {
    let s: Scenario = name.parse().map_err(err)?;
    let cfg = ScenarioConfig::defaults(s);
    let fam = hyseek::scenario::build_family(&cfg, true, true).map_err(err)?;
    let opts = GapOptions {
        samples: samples as usize,
        ..GapOptions::default()
    };
    estimate_synergy_gap(fam.as_ref(), &opts)
        .map(|r| r.gap)
        .map_err(err)
}
