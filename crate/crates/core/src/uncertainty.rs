//! The switching-gain automaton for unknown control directions.
//!
//! The automaton state is `θ = (θ₁, …, θ_r, τ, m)`: gains in `{−1, 0, +1}`, a
//! dwell timer `τ ∈ [0, 1]` and a time-ratio monitor `m ∈ [0, T∘]`. Gains jump
//! when `τ` reaches 1. While some gain is zero (`θ ∈ ℰ_b`) the monitor drains
//! at rate `1 − χ₂`, which bounds the total time spent without full control.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use thiserror::Error;

use crate::hybrid::{
    HybridArc, HybridSystem, Jump, JumpContext, JumpRecord, SolveError,
};

/// Jump reasons produced by the automaton.
pub const DWELL: &str = "dwell";
/// Dwell jump whose targets were restricted to nonzero gains to protect the monitor.
pub const MONITOR: &str = "monitor";
/// Emergency exit from `ℰ_b` when the monitor is exhausted.
pub const FORCED: &str = "forced";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutomatonError {
    #[error("invalid automaton configuration: {0}")]
    Config(String),
    #[error("theta jump precondition violated: {0}")]
    PreconditionViolated(String),
    #[error("no admissible gain vector to jump to from {0:?}")]
    NoTarget(Vec<i8>),
    #[error("policy chose {chosen:?}, which is not an admissible target")]
    BadChoice { chosen: Vec<i8> },
    #[error("script line {line}: {msg}")]
    Script { line: usize, msg: String },
}

/// What an adversarial policy sees at a gain jump.
pub struct AdversaryView<'a> {
    pub t: f64,
    /// Full closed-loop state.
    pub x: &'a [f64],
    pub gains: &'a [i8],
    pub candidates: &'a [Vec<i8>],
}

pub type Adversary = Arc<dyn Fn(&AdversaryView<'_>) -> Vec<i8> + Send + Sync>;

/// Selection rule for the gain jump map `ℰ ∖ {θ}`.
#[derive(Clone, Default)]
pub enum JumpPolicy {
    #[default]
    UniformRandom,
    /// Entries are used in order, cycling; the k-th gain jump takes entry k.
    Scripted(Arc<Vec<Vec<i8>>>),
    Adversarial(Adversary),
    /// Gains never switch on the dwell timer.
    Frozen,
}

impl fmt::Debug for JumpPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            JumpPolicy::UniformRandom => f.write_str("UniformRandom"),
            JumpPolicy::Scripted(s) => f.debug_tuple("Scripted").field(s).finish(),
            JumpPolicy::Adversarial(_) => f.write_str("Adversarial(..)"),
            JumpPolicy::Frozen => f.write_str("Frozen"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct AutomatonConfig {
    pub r: usize,
    /// Monitor ceiling `T∘` (seconds).
    pub t_circ: f64,
    /// Dwell-rate bound `χ₁` (1/s).
    pub chi1: f64,
    /// Activation-ratio bound `χ₂ ∈ (0, 1)`.
    pub chi2: f64,
    /// Dwell-timer rate, in `(0, χ₁]`; `None` means `χ₁`.
    pub dwell_rate: Option<f64>,
    /// Admissible values per gain; defaults to `{−1, 0, +1}` for every channel.
    pub alphabets: Vec<Vec<i8>>,
    pub policy: JumpPolicy,
}

impl AutomatonConfig {
    pub fn new(r: usize, t_circ: f64, chi1: f64, chi2: f64) -> Self {
        Self {
            r,
            t_circ,
            chi1,
            chi2,
            dwell_rate: None,
            alphabets: vec![vec![-1, 0, 1]; r],
            policy: JumpPolicy::UniformRandom,
        }
    }

    pub fn validate(&self) -> Result<(), AutomatonError> {
        let bad = |m: String| Err(AutomatonError::Config(m));
        if self.r == 0 {
            return bad("need at least one gain".into());
        }
        if !(self.t_circ > 0.0) {
            return bad(format!("T∘ must be positive, got {}", self.t_circ));
        }
        if !(self.chi1 > 0.0) {
            return bad(format!("χ₁ must be positive, got {}", self.chi1));
        }
        if !(self.chi2 > 0.0 && self.chi2 < 1.0) {
            return bad(format!("χ₂ must lie in (0, 1), got {}", self.chi2));
        }
        if let Some(rate) = self.dwell_rate {
            if !(rate > 0.0 && rate <= self.chi1) {
                return bad(format!("dwell rate must lie in (0, χ₁], got {rate}"));
            }
        }
        if self.alphabets.len() != self.r {
            return bad(format!("{} alphabets for {} gains", self.alphabets.len(), self.r));
        }
        for a in &self.alphabets {
            if a.is_empty() || a.iter().any(|v| !(-1..=1).contains(v)) {
                return bad(format!("alphabet {a:?} must be a nonempty subset of {{-1, 0, 1}}"));
            }
        }
        if let JumpPolicy::Scripted(s) = &self.policy {
            if s.is_empty() {
                return bad("script is empty".into());
            }
            for (k, e) in s.iter().enumerate() {
                if e.len() != self.r {
                    return bad(format!("script entry {k} has {} gains, expected {}", e.len(), self.r));
                }
            }
        }
        Ok(())
    }

    /// Length of the automaton block in the state vector.
    pub fn dim(&self) -> usize {
        self.r + 2
    }

    /// Effective dwell-timer rate (0 for a frozen policy).
    pub fn rate(&self) -> f64 {
        match self.policy {
            JumpPolicy::Frozen => 0.0,
            _ => self.dwell_rate.unwrap_or(self.chi1),
        }
    }

    /// Initial block: all gains `+1` (clamped into each alphabet), timer 0, monitor `T∘`.
    pub fn initial(&self) -> Vec<f64> {
        let mut th: Vec<f64> = self
            .alphabets
            .iter()
            .map(|a| if a.contains(&1) { 1.0 } else { a[0] as f64 })
            .collect();
        th.push(0.0);
        th.push(self.t_circ);
        th
    }
}

/// Gain vector of an automaton block.
pub fn gains(theta: &[f64], r: usize) -> Vec<i8> {
    theta[..r].iter().map(|g| g.round() as i8).collect()
}

/// `θ ∈ ℰ_b`: some gain is zero.
pub fn in_eb(theta: &[f64], r: usize) -> bool {
    theta[..r].iter().any(|g| g.round() == 0.0)
}

/// Selected flow `(0, rate, χ₂ − 𝟙_{ℰ_b})`, with the monitor held inside `[0, T∘]`.
pub fn theta_flow(theta: &[f64], cfg: &AutomatonConfig, d: &mut [f64]) {
    let r = cfg.r;
    d[..r].fill(0.0);
    d[r] = cfg.rate();
    let m = theta[r + 1];
    let mut dm = cfg.chi2 - if in_eb(theta, r) { 1.0 } else { 0.0 };
    if (m >= cfg.t_circ && dm > 0.0) || (m <= 0.0 && dm < 0.0) {
        dm = 0.0;
    }
    d[r + 1] = dm;
}

/// `Θ_C`, inflated by `tol`.
pub fn in_theta_flow_set(theta: &[f64], cfg: &AutomatonConfig, tol: f64) -> bool {
    let (tau, m) = (theta[cfg.r], theta[cfg.r + 1]);
    let monitor_ok = m >= -tol && m <= cfg.t_circ + tol;
    let drained = in_eb(theta, cfg.r) && m <= 0.0;
    (-tol..=1.0 + tol).contains(&tau) && monitor_ok && !drained
}

pub fn dwell_expired(theta: &[f64], cfg: &AutomatonConfig) -> bool {
    cfg.rate() > 0.0 && theta[cfg.r] >= 1.0
}

pub fn needs_forced_jump(theta: &[f64], cfg: &AutomatonConfig) -> bool {
    in_eb(theta, cfg.r) && theta[cfg.r + 1] <= 0.0
}

/// `Θ_D` together with the forced-exit condition.
pub fn in_theta_jump_set(theta: &[f64], cfg: &AutomatonConfig) -> bool {
    dwell_expired(theta, cfg) || needs_forced_jump(theta, cfg)
}

/// Keep the timers in their boxes after a numerical step.
pub fn clamp_timers(theta: &mut [f64], cfg: &AutomatonConfig) {
    let r = cfg.r;
    theta[r] = theta[r].clamp(0.0, 1.0);
    theta[r + 1] = theta[r + 1].clamp(0.0, cfg.t_circ);
}

fn all_targets(cfg: &AutomatonConfig, current: &[i8], nonzero_only: bool) -> Vec<Vec<i8>> {
    let mut out: Vec<Vec<i8>> = vec![Vec::new()];
    for a in &cfg.alphabets {
        out = out
            .into_iter()
            .flat_map(|head| {
                a.iter()
                    .filter(move |&&v| !(nonzero_only && v == 0))
                    .map(move |&v| {
                        let mut h = head.clone();
                        h.push(v);
                        h
                    })
            })
            .collect();
    }
    out.retain(|g| g != current);
    out
}

/// Is this jump a gain switch made by the automaton?
pub fn is_theta_jump(rec: &JumpRecord) -> bool {
    rec.has_reason(DWELL) || rec.has_reason(MONITOR) || rec.has_reason(FORCED)
}

/// Apply the gain jump map in place. Returns the reason tag.
///
/// At a dwell jump, targets with a zero gain are offered only if the monitor
/// can pay for a full dwell interval inside `ℰ_b`; otherwise the jump is
/// restricted to `{−1, +1}^r`. This keeps the monitor from running dry
/// between dwell jumps, so forced exits remain a fallback.
pub fn theta_jump(
    theta: &mut [f64],
    cfg: &AutomatonConfig,
    x: &[f64],
    ctx: &mut JumpContext<'_>,
) -> Result<&'static str, AutomatonError> {
    let r = cfg.r;
    let current = gains(theta, r);
    let dwell = dwell_expired(theta, cfg);
    let drained = needs_forced_jump(theta, cfg);
    let forced = drained && !dwell;
    if !drained && !dwell {
        return Err(AutomatonError::PreconditionViolated(format!(
            "dwell timer {} < 1 and monitor {} with gains {current:?}",
            theta[r],
            theta[r + 1]
        )));
    }
    let rate = cfg.rate();
    let budget = if rate > 0.0 { (1.0 - cfg.chi2) / rate } else { f64::INFINITY };
    let restrict = drained || theta[r + 1] < budget + 1e-9;
    let candidates = all_targets(cfg, &current, restrict);
    if candidates.is_empty() {
        return Err(AutomatonError::NoTarget(current));
    }
    let choice = match &cfg.policy {
        JumpPolicy::UniformRandom | JumpPolicy::Frozen => {
            candidates[ctx.rng.gen_range(0..candidates.len())].clone()
        }
        JumpPolicy::Scripted(script) => {
            let k = ctx.history.iter().filter(|j| is_theta_jump(j)).count();
            let entry = script[k % script.len()].clone();
            if entry == current {
                return Err(AutomatonError::BadChoice { chosen: entry });
            }
            entry
        }
        JumpPolicy::Adversarial(f) => f(&AdversaryView {
            t: ctx.time.t,
            x,
            gains: &current,
            candidates: &candidates,
        }),
    };
    if !candidates.contains(&choice) && !matches!(cfg.policy, JumpPolicy::Scripted(_)) {
        return Err(AutomatonError::BadChoice { chosen: choice });
    }
    if restrict && choice.contains(&0) {
        return Err(AutomatonError::BadChoice { chosen: choice });
    }
    for (t, g) in theta[..r].iter_mut().zip(&choice) {
        *t = *g as f64;
    }
    Ok(if forced {
        FORCED
    } else {
        theta[r] = 0.0;
        if restrict { MONITOR } else { DWELL }
    })
}

/// Parse a script: one gain vector per line, entries in `{-1, 0, +1}`
/// separated by whitespace. Blank lines and `#` comments are skipped.
pub fn parse_script(text: &str, r: usize) -> Result<Vec<Vec<i8>>, AutomatonError> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let entry = line
            .split_whitespace()
            .map(|tok| match tok {
                "-1" => Ok(-1),
                "0" => Ok(0),
                "1" | "+1" => Ok(1),
                _ => Err(AutomatonError::Script {
                    line: n + 1,
                    msg: format!("`{tok}` is not one of -1, 0, +1"),
                }),
            })
            .collect::<Result<Vec<i8>, _>>()?;
        if entry.len() != r {
            return Err(AutomatonError::Script {
                line: n + 1,
                msg: format!("expected {r} entries, found {}", entry.len()),
            });
        }
        out.push(entry);
    }
    if out.is_empty() {
        return Err(AutomatonError::Script {
            line: 0,
            msg: "script is empty".into(),
        });
    }
    Ok(out)
}

pub fn load_script(path: &Path, r: usize) -> Result<Vec<Vec<i8>>, AutomatonError> {
    let text = std::fs::read_to_string(path).map_err(|e| AutomatonError::Script {
        line: 0,
        msg: format!("{}: {e}", path.display()),
    })?;
    parse_script(&text, r)
}

/// Average-dwell-time check: for all jump times `t_a ≤ t_b`, the number of
/// jumps in `[t_a, t_b]` is at most `χ₁ (t_b − t_a) + 1` (up to 1e-6).
pub fn verify_adt(jump_times: &[f64], chi1: f64) -> bool {
    // N(t_a, t_b) = b − a + 1, so the bound reads
    // (b − χ₁ t_b) − (a − χ₁ t_a) ≤ 0 for every a < b.
    let mut best = f64::INFINITY;
    for (k, &t) in jump_times.iter().enumerate() {
        let s = k as f64 - chi1 * t;
        if s - best > 1e-6 {
            return false;
        }
        best = best.min(s);
    }
    true
}

/// Average-activation-time check on a sampled `ℰ_b` indicator:
/// `T♯(t₁, t₂) ≤ χ₂ (t₂ − t₁) + T∘` for all sample times, with left-constant
/// quadrature of the indicator.
pub fn verify_att(times: &[f64], in_eb: &[f64], chi2: f64, t_circ: f64) -> bool {
    // F(t) = T♯(0, t) − χ₂ t; need F(t₂) − F(t₁) ≤ T∘ for t₁ ≤ t₂.
    let mut occupied = 0.0;
    let mut min_f = f64::INFINITY;
    for k in 0..times.len() {
        if k > 0 {
            occupied += in_eb[k - 1] * (times[k] - times[k - 1]);
        }
        let f = occupied - chi2 * times[k];
        min_f = min_f.min(f);
        if f - min_f > t_circ + 1e-6 {
            return false;
        }
    }
    true
}

/// Continuous times of the automaton's jumps on an arc.
pub fn theta_jump_times(arc: &HybridArc) -> Vec<f64> {
    arc.jumps
        .iter()
        .filter(|j| is_theta_jump(j))
        .map(|j| j.time.t)
        .collect()
}

/// The automaton alone, as a hybrid system with state `θ`.
pub struct AutomatonSystem {
    pub cfg: AutomatonConfig,
}

impl AutomatonSystem {
    pub fn new(cfg: AutomatonConfig) -> Result<Self, AutomatonError> {
        cfg.validate()?;
        Ok(Self { cfg })
    }
}

impl HybridSystem for AutomatonSystem {
    fn dim(&self) -> usize {
        self.cfg.dim()
    }

    fn in_flow_set(&self, x: &[f64], tol: f64) -> bool {
        in_theta_flow_set(x, &self.cfg, tol)
    }

    fn in_jump_set(&self, x: &[f64]) -> bool {
        in_theta_jump_set(x, &self.cfg)
    }

    fn flow(&self, x: &[f64], dx: &mut [f64]) {
        theta_flow(x, &self.cfg, dx)
    }

    fn jump(&self, x: &[f64], ctx: &mut JumpContext<'_>) -> Result<Jump, SolveError> {
        let mut y = x.to_vec();
        let reason = theta_jump(&mut y, &self.cfg, x, ctx)
            .map_err(|e| SolveError::JumpMap(e.to_string()))?;
        Ok(Jump {
            state: y,
            reason: reason.to_string(),
        })
    }

    fn renormalize(&self, x: &mut [f64]) {
        clamp_timers(x, &self.cfg)
    }

    fn channel_names(&self) -> Vec<String> {
        vec!["in_eb".into(), "monitor".into()]
    }

    fn channels(&self, x: &[f64], out: &mut Vec<f64>) {
        out.push(if in_eb(x, self.cfg.r) { 1.0 } else { 0.0 });
        out.push(x[self.cfg.r + 1]);
    }
}
