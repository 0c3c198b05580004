//! Hybrid dynamical systems: data, solutions on hybrid time domains, and a
//! fixed-step solver.
//!
//! A hybrid system is given by a flow set `C`, a flow map, a jump set `D` and
//! a jump map. Solutions ("hybrid arcs") are parameterized by `(t, j)`: `t`
//! advances during flows, `j` increments by one at each jump. The solver
//! integrates flows with classical RK4, locates entry into `D` by bisection
//! and applies a single-valued selection of the jump map.

mod analysis;
mod arc;
mod io;
mod solver;

pub use analysis::{
    check_hybrid_time_monotone, check_jump_decrease, distance_to_set, AnalysisError,
    JumpDecreaseViolation,
    TargetSet,
};
pub use arc::{HybridArc, HybridTime, JumpRecord, Termination};
pub use io::{format_arc, format_jumps, jumps_path, read_arc, write_arc, ArcFile, ArcIoError};
pub use solver::{rk4_step, solve, step_flow};

use rand::RngCore;
use thiserror::Error;

/// Errors raised while constructing or solving a hybrid system.
#[derive(Debug, Error)]
pub enum SolveError {
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("state dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("Zeno guard tripped: {count} jumps within {window} s ending at t = {t}")]
    ZenoGuardTripped { count: usize, window: f64, t: f64 },
    #[error("deadlock at t = {t}, j = {j}: state is in neither the flow set nor the jump set")]
    DeadlockState { t: f64, j: usize },
    #[error("non-finite state at t = {t}, j = {j}")]
    NonFiniteState { t: f64, j: usize },
    #[error("jump map failed: {0}")]
    JumpMap(String),
}

/// Result of applying the jump map: the post-jump state plus a label naming
/// which part of the jump set fired (labels joined with `+` when several
/// fire at once, e.g. `synergy+dwell`).
#[derive(Debug, Clone, PartialEq)]
pub struct Jump {
    pub state: Vec<f64>,
    pub reason: String,
}

/// What a jump map may look at besides the state: the run's random stream,
/// the current hybrid time and the jumps taken so far.
pub struct JumpContext<'a> {
    pub rng: &'a mut dyn RngCore,
    pub time: HybridTime,
    pub history: &'a [JumpRecord],
}

/// Data of a hybrid system `(C, F, D, G)` with single-valued selections of
/// the flow and jump maps.
///
/// Implementors must be immutable during a solve; the solver may be invoked
/// from several threads on the same system.
pub trait HybridSystem: Sync {
    fn dim(&self) -> usize;

    /// Membership in the flow set, inflated by `tol`.
    fn in_flow_set(&self, x: &[f64], tol: f64) -> bool;

    fn in_jump_set(&self, x: &[f64]) -> bool;

    fn flow(&self, x: &[f64], dx: &mut [f64]);

    fn jump(&self, x: &[f64], ctx: &mut JumpContext<'_>) -> Result<Jump, SolveError>;

    /// Whether a jump may be forced at a state outside `C ∪ D`.
    fn forced_jump(&self, _x: &[f64]) -> bool {
        false
    }

    /// Projection back onto the state manifold, applied after every step
    /// when [`SolverConfig::renormalize`] is set.
    fn renormalize(&self, _x: &mut [f64]) {}

    fn channel_names(&self) -> Vec<String> {
        Vec::new()
    }

    /// Auxiliary per-sample scalars, in the order of [`Self::channel_names`].
    fn channels(&self, _x: &[f64], _out: &mut Vec<f64>) {}
}

type FlowFn = Box<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
type SetFn = Box<dyn Fn(&[f64]) -> bool + Send + Sync>;
type TolSetFn = Box<dyn Fn(&[f64], f64) -> bool + Send + Sync>;
type JumpFn = Box<dyn Fn(&[f64], &mut dyn RngCore) -> Vec<f64> + Send + Sync>;

/// Closure-backed hybrid system, convenient for small ad-hoc models.
pub struct HybridSystemDef {
    dim: usize,
    flow_set: TolSetFn,
    jump_set: SetFn,
    flow_field: FlowFn,
    jump_map: JumpFn,
}

impl HybridSystemDef {
    pub fn new(
        dim: usize,
        flow_set: impl Fn(&[f64], f64) -> bool + Send + Sync + 'static,
        flow_field: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
        jump_set: impl Fn(&[f64]) -> bool + Send + Sync + 'static,
        jump_map: impl Fn(&[f64], &mut dyn RngCore) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            dim,
            flow_set: Box::new(flow_set),
            jump_set: Box::new(jump_set),
            flow_field: Box::new(flow_field),
            jump_map: Box::new(jump_map),
        }
    }

    /// A purely continuous system (`C = ℝⁿ`, `D = ∅`).
    pub fn continuous(
        dim: usize,
        flow_field: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        Self::new(dim, |_, _| true, flow_field, |_| false, |x, _| x.to_vec())
    }
}

impl HybridSystem for HybridSystemDef {
    fn dim(&self) -> usize {
        self.dim
    }

    fn in_flow_set(&self, x: &[f64], tol: f64) -> bool {
        (self.flow_set)(x, tol)
    }

    fn in_jump_set(&self, x: &[f64]) -> bool {
        (self.jump_set)(x)
    }

    fn flow(&self, x: &[f64], dx: &mut [f64]) {
        (self.flow_field)(x, dx)
    }

    fn jump(&self, x: &[f64], ctx: &mut JumpContext<'_>) -> Result<Jump, SolveError> {
        Ok(Jump {
            state: (self.jump_map)(x, ctx.rng),
            reason: "jump".to_string(),
        })
    }
}

/// Solver settings.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    /// Flow integration step `h` (seconds).
    pub step: f64,
    /// Maximum continuous time.
    pub horizon: f64,
    /// Hard cap on the number of jumps.
    pub max_jumps: usize,
    /// Boundary localization tolerance (seconds) and flow-set inflation.
    pub jump_tol: f64,
    /// At most this many jumps within any window of `zeno_window` seconds.
    pub zeno_count: usize,
    pub zeno_window: f64,
    /// Apply the system's manifold projection after every step.
    pub renormalize: bool,
    pub seed: u64,
    /// Keep every n-th flow sample (samples adjacent to jumps are always kept).
    pub record_every: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            step: 1e-3,
            horizon: 10.0,
            max_jumps: 100_000,
            jump_tol: 1e-9,
            zeno_count: 50,
            zeno_window: 1e-3,
            renormalize: true,
            seed: 0,
            record_every: 1,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolveError> {
        let bad = |m: &str| Err(SolveError::InvalidConfig(m.to_string()));
        if !(self.step > 0.0 && self.step.is_finite()) {
            return bad("step must be positive");
        }
        // A zero horizon is allowed and yields the initial sample only.
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return bad("horizon must be nonnegative");
        }
        if !(self.jump_tol > 0.0) {
            return bad("jump_tol must be positive");
        }
        if self.zeno_count == 0 || !(self.zeno_window > 0.0) {
            return bad("zeno guard needs a positive count and window");
        }
        if self.record_every == 0 {
            return bad("record_every must be at least 1");
        }
        Ok(())
    }
}
