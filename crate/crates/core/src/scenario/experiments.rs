//! Batch experiments: averaging comparison, gap verification and sweeps.

use std::f64::consts::PI;
use std::path::Path;

use serde::Deserialize;

use super::closed_loop::build_family;
use super::config::{Law, ScenarioConfig};
use super::run::{run, Summary};
use super::ScenarioError;
use crate::hybrid::HybridArc;
use crate::par_map;
use crate::synergistic::{estimate_synergy_gap, GapOptions, GapReport};
use crate::uncertainty::JumpPolicy;

/// Plant coordinates at time `t`, linearly interpolated between samples.
/// `p` is continuous across jumps, so the `j` coordinate can be ignored.
pub fn sample_p(arc: &HybridArc, np: usize, t: f64) -> Vec<f64> {
    let times = arc.times();
    let k = times.partition_point(|h| h.t <= t);
    if k == 0 {
        return arc.state(0)[..np].to_vec();
    }
    if k == times.len() {
        return arc.last_state()[..np].to_vec();
    }
    let (t0, t1) = (times[k - 1].t, times[k].t);
    let (a, b) = (&arc.state(k - 1)[..np], &arc.state(k)[..np]);
    let w = if t1 > t0 { (t - t0) / (t1 - t0) } else { 0.0 };
    a.iter().zip(b).map(|(x, y)| x + w * (y - x)).collect()
}

/// `sup_t |p_a(t) − p_b(t)|` on a uniform grid of spacing `dt` over the
/// common time span.
pub fn p_deviation(a: &HybridArc, b: &HybridArc, np: usize, dt: f64) -> f64 {
    let end = a.final_time().t.min(b.final_time().t);
    let n = (end / dt).ceil() as usize;
    (0..=n)
        .map(|k| {
            let t = (k as f64 * dt).min(end);
            let (pa, pb) = (sample_p(a, np, t), sample_p(b, np, t));
            pa.iter().zip(&pb).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AverageRow {
    pub eps: f64,
    /// Mean over phases of the sup-norm `p`-deviation from the averaged system.
    pub deviation: f64,
    /// `deviation / previous deviation`.
    pub ratio: Option<f64>,
}

/// Compare the oscillatory closed loop with its average for each `ε`.
///
/// The gains are frozen at their initial values. For each `ε` the closed loop
/// is run from `phases` evenly spaced rotor phases; the reported deviation is
/// the mean over phases of the sup-norm distance to the averaged arc.
pub fn compare_average(
    cfg: &ScenarioConfig,
    eps_list: &[f64],
    phases: usize,
) -> Result<Vec<AverageRow>, ScenarioError> {
    if eps_list.is_empty() || phases == 0 {
        return Err(ScenarioError::Config("need at least one ε and one phase".into()));
    }
    let mut base = cfg.clone();
    base.automaton.policy = JumpPolicy::Frozen;
    let np = {
        let cl = super::ClosedLoop::new(&base)?;
        cl.p_range().len()
    };
    let mut avg = base.clone();
    avg.law = Law::Averaged;
    let fine = eps_list.iter().cloned().fold(f64::INFINITY, f64::min);
    avg.step = Some(base.step.unwrap_or(1e-3).min(fine * fine / 40.0));
    avg.solver.record_every = 1;
    let reference = run(&avg)?.arc;

    let k_osc = base.periods.len();
    let jobs: Vec<(usize, usize)> = (0..eps_list.len())
        .flat_map(|i| (0..phases).map(move |k| (i, k)))
        .collect();
    let results = par_map(&jobs, |&(i, k)| -> Result<f64, ScenarioError> {
        let mut c = base.clone();
        c.gains.eps = eps_list[i];
        c.step = None;
        c.solver.record_every = 1;
        let phi = 2.0 * PI * k as f64 / phases as f64;
        c.phases = Some((0..k_osc).map(|m| phi + m as f64 * PI / 3.0).collect());
        let arc = run(&c)?.arc;
        Ok(p_deviation(&arc, &reference, np, 1e-3))
    });
    let mut rows: Vec<AverageRow> = Vec::new();
    for (i, &eps) in eps_list.iter().enumerate() {
        let mut total = 0.0;
        for r in &results[i * phases..(i + 1) * phases] {
            total += r.as_ref().map_err(|e| ScenarioError::Config(e.to_string()))?;
        }
        let deviation = total / phases as f64;
        let ratio = rows.last().map(|p| deviation / p.deviation);
        rows.push(AverageRow { eps, deviation, ratio });
    }
    Ok(rows)
}

/// Estimate the synergy gap of the configured family and compare with `δ`.
pub fn verify_gap(cfg: &ScenarioConfig, opts: &GapOptions) -> Result<GapReport, ScenarioError> {
    let fam = build_family(cfg, true, false)?;
    estimate_synergy_gap(fam.as_ref(), opts).map_err(|e| ScenarioError::Config(e.to_string()))
}

/// Parameter grid of a sweep. Absent lists keep the base value.
#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    pub seeds: Option<Vec<u64>>,
    /// Shorthand for `seeds = [0, 1, …, n − 1]`.
    pub seed_count: Option<u64>,
    pub eps: Option<Vec<f64>>,
    pub chi1: Option<Vec<f64>>,
    pub chi2: Option<Vec<f64>>,
    pub amplitude: Option<Vec<f64>>,
    /// Success threshold on the final distance to the target.
    pub nu: Option<f64>,
}

impl SweepGrid {
    pub fn from_file(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::io(path, e))?;
        toml::from_str(&text).map_err(|e| ScenarioError::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub seed: u64,
    pub eps: f64,
    pub chi1: f64,
    pub chi2: f64,
    pub amplitude: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub point: SweepPoint,
    pub summary: Summary,
    /// `final_dist ≤ ν`.
    pub success: bool,
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub failures: Vec<(SweepPoint, String)>,
    pub nu: f64,
}

impl SweepReport {
    pub fn success_rate(&self) -> f64 {
        let n = self.rows.len() + self.failures.len();
        if n == 0 {
            return 0.0;
        }
        self.rows.iter().filter(|r| r.success).count() as f64 / n as f64
    }

    /// Delimited table, one row per run (failed runs included).
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "seed,eps,chi1,chi2,amplitude,status,final_dist,success,jumps,reentry,adt,att,hash\n",
        );
        let amp = |a: Option<f64>| a.map(|v| v.to_string()).unwrap_or_default();
        for r in &self.rows {
            let p = &r.point;
            let m = &r.summary;
            s.push_str(&format!(
                "{},{},{},{},{},ok,{},{},{},{},{},{},{}\n",
                p.seed,
                p.eps,
                p.chi1,
                p.chi2,
                amp(p.amplitude),
                m.final_dist,
                r.success,
                m.jumps,
                m.reentry_violations,
                m.adt,
                m.att,
                m.hash
            ));
        }
        for (p, e) in &self.failures {
            s.push_str(&format!(
                "{},{},{},{},{},error: {},,,,,,,\n",
                p.seed,
                p.eps,
                p.chi1,
                p.chi2,
                amp(p.amplitude),
                e.replace(',', ";")
            ));
        }
        s
    }
}

/// Cartesian product of the grid over the base configuration.
pub fn grid_points(cfg: &ScenarioConfig, grid: &SweepGrid) -> Result<Vec<SweepPoint>, ScenarioError> {
    let seeds = match (&grid.seeds, grid.seed_count) {
        (Some(s), None) => s.clone(),
        (None, Some(n)) => (0..n).collect(),
        (None, None) => vec![cfg.seed],
        (Some(_), Some(_)) => {
            return Err(ScenarioError::Config("give either `seeds` or `seed_count`".into()))
        }
    };
    let or = |v: &Option<Vec<f64>>, d: f64| v.clone().unwrap_or_else(|| vec![d]);
    let eps = or(&grid.eps, cfg.gains.eps);
    let chi1 = or(&grid.chi1, cfg.automaton.chi1);
    let chi2 = or(&grid.chi2, cfg.automaton.chi2);
    let amps: Vec<Option<f64>> = match &grid.amplitude {
        Some(a) => a.iter().map(|v| Some(*v)).collect(),
        None => vec![cfg.perturbation.as_ref().map(|p| p.amplitude)],
    };
    let mut out = Vec::new();
    for &seed in &seeds {
        for &e in &eps {
            for &c1 in &chi1 {
                for &c2 in &chi2 {
                    for &a in &amps {
                        out.push(SweepPoint {
                            seed,
                            eps: e,
                            chi1: c1,
                            chi2: c2,
                            amplitude: a,
                        });
                    }
                }
            }
        }
    }
    if out.is_empty() {
        return Err(ScenarioError::Config("sweep grid is empty".into()));
    }
    Ok(out)
}

fn apply(cfg: &ScenarioConfig, p: &SweepPoint) -> Result<ScenarioConfig, ScenarioError> {
    let mut c = cfg.clone();
    c.seed = p.seed;
    c.gains.eps = p.eps;
    c.automaton.chi1 = p.chi1;
    c.automaton.chi2 = p.chi2;
    if let Some(a) = p.amplitude {
        match &mut c.perturbation {
            Some(spec) => spec.amplitude = a,
            None if a == 0.0 => {}
            None => {
                return Err(ScenarioError::Config(
                    "amplitude override needs a [perturbation] section".into(),
                ))
            }
        }
    }
    c.validate()?;
    Ok(c)
}

/// Run every grid point concurrently. Failed runs are reported, not fatal.
pub fn sweep(cfg: &ScenarioConfig, grid: &SweepGrid) -> Result<SweepReport, ScenarioError> {
    let points = grid_points(cfg, grid)?;
    let nu = grid.nu.unwrap_or(0.15);
    let outcomes = par_map(&points, |p| apply(cfg, p).and_then(|c| run(&c)));
    let mut report = SweepReport {
        rows: Vec::new(),
        failures: Vec::new(),
        nu,
    };
    for (p, o) in points.into_iter().zip(outcomes) {
        match o {
            Ok(rec) => {
                let success = rec.summary.final_dist <= nu;
                report.rows.push(SweepRow {
                    point: p,
                    summary: rec.summary,
                    success,
                });
            }
            Err(e) => report.failures.push((p, e.to_string())),
        }
    }
    Ok(report)
}
