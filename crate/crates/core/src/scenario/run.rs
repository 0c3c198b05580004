//! Single runs: solve, summarize, write files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use sha2::{Digest, Sha256};

use super::closed_loop::{ClosedLoop, SYNERGY};
use super::config::{Law, Scenario, ScenarioConfig};
use super::ScenarioError;
use crate::hybrid::{solve, write_arc, HybridArc, Termination};
use crate::uncertainty::{theta_jump_times, verify_adt, verify_att, DWELL, FORCED, MONITOR};

/// Outcome of one run.
pub struct RunRecord {
    pub config: ScenarioConfig,
    pub arc: HybridArc,
    pub summary: Summary,
    /// Wall-clock seconds; not part of the summary hash.
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub scenario: Scenario,
    pub seed: u64,
    pub hybrid: bool,
    pub law: Law,
    pub samples: usize,
    pub final_t: f64,
    pub final_j: usize,
    pub termination: Termination,
    pub final_dist: f64,
    pub max_dist: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub v_final: f64,
    pub jumps: usize,
    pub synergy_jumps: usize,
    pub dwell_jumps: usize,
    pub monitor_jumps: usize,
    pub forced_jumps: usize,
    pub reentry_violations: usize,
    pub adt: bool,
    pub att: bool,
    /// Smallest gap between consecutive gain jumps (infinite if fewer than two).
    pub min_dwell: f64,
    pub max_drift: f64,
    /// Smallest `|z − z_O|`, obstacle scenarios only.
    pub min_clearance: Option<f64>,
    pub obstacle_radius: Option<f64>,
    /// SHA-256 of the sampled arc and its jump log.
    pub hash: String,
}

impl Summary {
    pub fn obstacle_ok(&self) -> bool {
        match (self.min_clearance, self.obstacle_radius) {
            (Some(c), Some(d)) => c > d,
            _ => true,
        }
    }

    /// All runtime checks hold.
    pub fn passes(&self) -> bool {
        self.reentry_violations == 0 && self.adt && self.att && self.obstacle_ok()
    }

    /// `key = value` lines.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let pf = |b: bool| if b { "pass" } else { "fail" };
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("scenario", self.scenario.name().into());
        kv("seed", self.seed.to_string());
        kv("hybrid", self.hybrid.to_string());
        kv("law", format!("{:?}", self.law).to_lowercase());
        kv("samples", self.samples.to_string());
        kv("final_t", self.final_t.to_string());
        kv("final_j", self.final_j.to_string());
        kv("termination", format!("{:?}", self.termination).to_lowercase());
        kv("final_dist", self.final_dist.to_string());
        kv("max_dist", self.max_dist.to_string());
        kv("v_min", self.v_min.to_string());
        kv("v_max", self.v_max.to_string());
        kv("v_final", self.v_final.to_string());
        kv("jumps", self.jumps.to_string());
        kv("jumps_synergy", self.synergy_jumps.to_string());
        kv("jumps_dwell", self.dwell_jumps.to_string());
        kv("jumps_monitor", self.monitor_jumps.to_string());
        kv("jumps_forced", self.forced_jumps.to_string());
        kv("reentry_violations", self.reentry_violations.to_string());
        kv("reentry", pf(self.reentry_violations == 0).into());
        kv("adt", pf(self.adt).into());
        kv("att", pf(self.att).into());
        kv("min_dwell", self.min_dwell.to_string());
        kv("max_drift", self.max_drift.to_string());
        if let Some(c) = self.min_clearance {
            kv("min_clearance", c.to_string());
            kv("obstacle", pf(self.obstacle_ok()).into());
        }
        kv("hash", self.hash.clone());
        s
    }
}

/// SHA-256 over times, states, channels and jump log of an arc.
pub fn arc_hash(arc: &HybridArc) -> String {
    let mut h = Sha256::new();
    let (times, states, channels) = arc.raw();
    for t in times {
        h.update(t.t.to_le_bytes());
        h.update((t.j as u64).to_le_bytes());
    }
    for v in states.iter().chain(channels) {
        h.update(v.to_le_bytes());
    }
    for j in &arc.jumps {
        h.update(j.time.t.to_le_bytes());
        h.update(j.reason.as_bytes());
        for v in j.pre.iter().chain(&j.post) {
            h.update(v.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

fn channel(arc: &HybridArc, name: &str) -> Result<Vec<f64>, ScenarioError> {
    arc.channel(name)
        .ok_or_else(|| ScenarioError::Config(format!("arc has no `{name}` channel")))
}

/// Summarize a closed-loop arc.
pub fn summarize(cfg: &ScenarioConfig, cl: &ClosedLoop, arc: &HybridArc) -> Result<Summary, ScenarioError> {
    let dist = channel(arc, "dist")?;
    let v = channel(arc, "V")?;
    let drift = channel(arc, "drift")?;
    let eb = channel(arc, "in_eb")?;
    let times: Vec<f64> = arc.times().iter().map(|t| t.t).collect();
    let jt = theta_jump_times(arc);
    let count = |tag: &str| arc.jumps_tagged(tag).count();
    let fmax = |xs: &[f64]| xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let fmin = |xs: &[f64]| xs.iter().cloned().fold(f64::INFINITY, f64::min);
    let clearance = arc.channel("clearance").map(|c| fmin(&c));
    let last = arc.final_time();
    Ok(Summary {
        scenario: cfg.scenario,
        seed: cfg.seed,
        hybrid: cfg.hybrid,
        law: cfg.law,
        samples: arc.len(),
        final_t: last.t,
        final_j: last.j,
        termination: arc.termination,
        final_dist: *dist.last().unwrap_or(&f64::NAN),
        max_dist: fmax(&dist),
        v_min: fmin(&v),
        v_max: fmax(&v),
        v_final: *v.last().unwrap_or(&f64::NAN),
        jumps: arc.jumps.len(),
        synergy_jumps: count(SYNERGY),
        dwell_jumps: count(DWELL),
        monitor_jumps: count(MONITOR),
        forced_jumps: count(FORCED),
        reentry_violations: arc.reentry_violations,
        adt: verify_adt(&jt, cfg.automaton.chi1),
        att: verify_att(&times, &eb, cfg.automaton.chi2, cfg.automaton.t_circ),
        min_dwell: jt.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min),
        max_drift: fmax(&drift),
        min_clearance: clearance,
        obstacle_radius: cl.obstacle_radius(),
        hash: arc_hash(arc),
    })
}

/// Build, solve and summarize. Nothing is written to disk.
pub fn run(cfg: &ScenarioConfig) -> Result<RunRecord, ScenarioError> {
    let start = Instant::now();
    let cl = ClosedLoop::new(cfg)?;
    let x0 = cl.initial_state(cfg)?;
    let arc = solve(&cl, &x0, &cfg.solver_config())?;
    let summary = summarize(cfg, &cl, &arc)?;
    Ok(RunRecord {
        config: cfg.clone(),
        arc,
        summary,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// Metadata written at the top of arc files.
pub fn arc_metadata(cfg: &ScenarioConfig) -> BTreeMap<String, String> {
    let a = &cfg.automaton;
    [
        ("scenario", cfg.scenario.name().to_string()),
        ("seed", cfg.seed.to_string()),
        ("hybrid", cfg.hybrid.to_string()),
        ("r", a.r.to_string()),
        ("chi1", a.chi1.to_string()),
        ("chi2", a.chi2.to_string()),
        ("t_circ", a.t_circ.to_string()),
        ("eps", cfg.gains.eps.to_string()),
        ("step", cfg.flow_step().to_string()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

/// Write `arc.csv`, `summary.txt` and the scenario's plot files into `dir`.
pub fn write_run(rec: &RunRecord, dir: &Path) -> Result<Vec<PathBuf>, ScenarioError> {
    std::fs::create_dir_all(dir).map_err(|e| ScenarioError::io(dir, e))?;
    let arc_path = dir.join("arc.csv");
    write_arc(&arc_path, &rec.arc, &arc_metadata(&rec.config))?;
    let sum_path = dir.join("summary.txt");
    let mut text = rec.summary.to_text();
    let _ = writeln!(text, "wall_time = {:.3}", rec.wall_time);
    std::fs::write(&sum_path, text).map_err(|e| ScenarioError::io(&sum_path, e))?;
    let mut files = vec![arc_path, sum_path];
    files.extend(emit_plot_data(rec, &PlotKind::defaults(rec.config.scenario), dir)?);
    Ok(files)
}

/// Plot-ready tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    /// Path on the circle / sphere, or in the plane for obstacle scenarios.
    Trajectory,
    /// `V`, `μ` and `q` versus time.
    Lyapunov,
    /// `θ_i` versus time.
    Gains,
    /// `|x|_𝒜` versus time.
    Distance,
    /// `W(R)` versus time (attitude scenario).
    Attitude,
}

impl PlotKind {
    pub fn defaults(s: Scenario) -> Vec<PlotKind> {
        let head = if s == Scenario::So3 {
            PlotKind::Attitude
        } else {
            PlotKind::Trajectory
        };
        vec![head, PlotKind::Gains, PlotKind::Lyapunov, PlotKind::Distance]
    }

    fn file_name(self) -> &'static str {
        match self {
            PlotKind::Trajectory => "trajectory.csv",
            PlotKind::Lyapunov => "lyapunov.csv",
            PlotKind::Gains => "gains.csv",
            PlotKind::Distance => "distance.csv",
            PlotKind::Attitude => "attitude.csv",
        }
    }
}

fn plot_columns(rec: &RunRecord, kind: PlotKind) -> Result<Vec<(String, Vec<f64>)>, ScenarioError> {
    let arc = &rec.arc;
    let named = |names: &[String]| -> Result<Vec<(String, Vec<f64>)>, ScenarioError> {
        names.iter().map(|n| Ok((n.clone(), channel(arc, n)?))).collect()
    };
    let s = |xs: &[&str]| xs.iter().map(|x| x.to_string()).collect::<Vec<_>>();
    match kind {
        PlotKind::Trajectory => match rec.config.scenario {
            Scenario::Circle => Ok(vec![("x".into(), arc.component(0)), ("y".into(), arc.component(1))]),
            Scenario::Sphere => Ok(["x", "y", "z"]
                .iter()
                .enumerate()
                .map(|(i, n)| (n.to_string(), arc.component(i)))
                .collect()),
            Scenario::ObstacleHolonomic | Scenario::ObstacleNonholonomic => named(&s(&["z1", "z2"])),
            Scenario::So3 => Err(ScenarioError::Config(
                "no planar trajectory for so3; use the attitude plot".into(),
            )),
        },
        PlotKind::Lyapunov => named(&s(&["V", "mu", "q"])),
        PlotKind::Gains => {
            let names: Vec<String> = (1..=rec.config.automaton.r).map(|i| format!("theta_{i}")).collect();
            named(&names)
        }
        PlotKind::Distance => named(&s(&["dist"])),
        PlotKind::Attitude => named(&s(&["W"])),
    }
}

/// Write one delimited file per requested kind. All columns are gathered
/// before anything is written, so an invalid request leaves no files behind.
pub fn emit_plot_data(
    rec: &RunRecord,
    kinds: &[PlotKind],
    dir: &Path,
) -> Result<Vec<PathBuf>, ScenarioError> {
    if kinds.is_empty() {
        return Err(ScenarioError::Config("no plot kinds requested".into()));
    }
    let tables = kinds
        .iter()
        .map(|&k| Ok((k, plot_columns(rec, k)?)))
        .collect::<Result<Vec<_>, ScenarioError>>()?;
    std::fs::create_dir_all(dir).map_err(|e| ScenarioError::io(dir, e))?;
    let times = rec.arc.times();
    let mut out = Vec::new();
    for (kind, cols) in tables {
        let mut text = String::from("t,j");
        for (name, _) in &cols {
            text.push(',');
            text.push_str(name);
        }
        text.push('\n');
        for (k, ht) in times.iter().enumerate() {
            let _ = write!(text, "{},{}", ht.t, ht.j);
            for (_, c) in &cols {
                let _ = write!(text, ",{}", c[k]);
            }
            text.push('\n');
        }
        let path = dir.join(kind.file_name());
        std::fs::write(&path, text).map_err(|e| ScenarioError::io(&path, e))?;
        out.push(path);
    }
    Ok(out)
}
