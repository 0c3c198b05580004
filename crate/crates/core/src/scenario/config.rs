//! Experiment configuration: TOML files with one section per module.
//!
//! Every key is optional; missing keys take the scenario's defaults. Unknown
//! keys are rejected.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use serde::Deserialize;

use super::ScenarioError;
use crate::controller::{EsGains, Perturbation, Rational};
use crate::hybrid::SolverConfig;
use crate::uncertainty::{load_script, AutomatonConfig, JumpPolicy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scenario {
    Circle,
    ObstacleHolonomic,
    Sphere,
    So3,
    ObstacleNonholonomic,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [
        Scenario::Circle,
        Scenario::ObstacleHolonomic,
        Scenario::Sphere,
        Scenario::So3,
        Scenario::ObstacleNonholonomic,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Circle => "circle",
            Scenario::ObstacleHolonomic => "obstacle_holonomic",
            Scenario::Sphere => "sphere",
            Scenario::So3 => "so3",
            Scenario::ObstacleNonholonomic => "obstacle_nonholonomic",
        }
    }

    pub fn is_obstacle(self) -> bool {
        matches!(self, Scenario::ObstacleHolonomic | Scenario::ObstacleNonholonomic)
    }

    /// Number of control gains `r`.
    pub fn gains(self) -> usize {
        match self {
            Scenario::Circle | Scenario::ObstacleNonholonomic => 1,
            Scenario::ObstacleHolonomic => 2,
            Scenario::Sphere | Scenario::So3 => 3,
        }
    }
}

impl FromStr for Scenario {
    type Err = ScenarioError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scenario::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| {
                let msg = if s == "custom" {
                    "scenario `custom` needs user-supplied potentials and fields; \
                     build it through the library API"
                        .to_string()
                } else {
                    format!("unknown scenario `{s}`")
                };
                ScenarioError::Config(msg)
            })
    }
}

/// Which feedback drives the plant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Law {
    /// Oscillatory minimum seeking from measurements of `V`.
    Es,
    /// The Lie-bracket average of the above (gradient information used).
    Averaged,
}

/// Geometric data of the target. Only the fields relevant to a scenario are read.
#[derive(Debug, Clone, PartialEq)]
pub struct Target {
    /// `p⋆` on the manifold, or `z⋆` in the plane for obstacle scenarios.
    pub point: Vec<f64>,
    pub perp: [f64; 3],
    pub omega: [f64; 3],
    pub obstacle_center: [f64; 2],
    pub obstacle_radius: f64,
    /// `d⋆` of the log-polar map.
    pub margin: f64,
}

/// Fully resolved scenario configuration.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub seed: u64,
    /// `false` runs the non-hybrid baseline (single unwarped potential).
    pub hybrid: bool,
    pub law: Law,
    pub gains: EsGains,
    pub delta: f64,
    pub periods: Vec<Rational>,
    pub target: Target,
    /// Initial point: on the manifold, or in the plane for obstacle scenarios.
    pub initial: Vec<f64>,
    /// Initial heading of the unicycle.
    pub heading: [f64; 2],
    /// Initial rotor phases; drawn from the seed when absent.
    pub phases: Option<Vec<f64>>,
    pub automaton: AutomatonConfig,
    pub initial_gains: Option<Vec<i8>>,
    /// Initial logic mode; the minimizing mode at the initial point when absent.
    pub initial_mode: Option<usize>,
    /// Pull toward `center`, given in the same coordinates as `initial`.
    pub perturbation: Option<PerturbationSpec>,
    pub solver: SolverConfig,
    /// Explicit flow step; when `None` it is `ε² min T_i / 40`.
    pub step: Option<f64>,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationSpec {
    pub amplitude: f64,
    pub sigma: f64,
    pub center: Vec<f64>,
}

impl PerturbationSpec {
    pub fn to_perturbation(&self, center: Vec<f64>) -> Perturbation {
        Perturbation {
            amplitude: self.amplitude,
            sigma: self.sigma,
            p_sharp: center,
        }
    }
}

fn rats(list: &[u64]) -> Vec<Rational> {
    list.iter()
        .map(|&n| Rational::integer(n).expect("positive"))
        .collect()
}

impl ScenarioConfig {
    /// Reference parameter set for a scenario, started at the bad critical
    /// point with the trapping perturbation switched on.
    pub fn defaults(scenario: Scenario) -> Self {
        let obstacle_target = Target {
            point: vec![0.0, 2.0],
            perp: [0.0, 1.0, 0.0],
            omega: [11.0, 12.0, 13.0],
            obstacle_center: [0.0, 0.0],
            obstacle_radius: 1.0,
            margin: 1.05,
        };
        let pert = |amplitude: f64, center: Vec<f64>| {
            Some(PerturbationSpec {
                amplitude,
                sigma: 0.5,
                center,
            })
        };
        let (gamma, eps2, delta, periods, target, initial, perturbation, horizon) = match scenario {
            Scenario::Circle => (
                1.0,
                1.0 / (4.0 * PI),
                0.25,
                rats(&[1]),
                Target {
                    point: vec![0.0, 1.0],
                    ..obstacle_target.clone()
                },
                vec![0.0, -1.0],
                pert(2.0, vec![0.0, -1.0]),
                60.0,
            ),
            Scenario::Sphere => (
                1.0,
                1.0 / (8.0 * PI),
                0.2,
                rats(&[3, 2, 1]),
                Target {
                    point: vec![0.0, 0.0, 1.0],
                    ..obstacle_target.clone()
                },
                vec![0.0, 0.0, -1.0],
                pert(2.0, vec![0.0, 0.0, -1.0]),
                60.0,
            ),
            Scenario::So3 => {
                let sharp = vec![-1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0];
                (
                    1.0,
                    1.0 / (12.0 * PI),
                    0.2,
                    rats(&[1, 2, 3]),
                    Target {
                        point: vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
                        ..obstacle_target.clone()
                    },
                    sharp.clone(),
                    pert(3.0, sharp),
                    80.0,
                )
            }
            Scenario::ObstacleHolonomic => (
                2.0,
                1.0 / (6.0 * PI),
                0.25,
                rats(&[1]),
                obstacle_target.clone(),
                vec![0.0, -2.0],
                None,
                80.0,
            ),
            Scenario::ObstacleNonholonomic => (
                2.0,
                1.0 / (6.0 * PI),
                0.25,
                rats(&[1]),
                obstacle_target.clone(),
                vec![0.0, -2.0],
                pert(0.5, vec![0.0, -2.0]),
                80.0,
            ),
        };
        let r = scenario.gains();
        let mut automaton = AutomatonConfig::new(r, 2.0, 0.5, 0.5);
        if scenario == Scenario::ObstacleHolonomic {
            // The second gain is known and constant.
            automaton.alphabets[1] = vec![1];
        }
        ScenarioConfig {
            scenario,
            seed: 0,
            hybrid: true,
            law: Law::Es,
            gains: EsGains::new(gamma, 4.0, eps2.sqrt()).expect("positive defaults"),
            delta,
            periods,
            target,
            initial,
            heading: [1.0, 0.0],
            phases: None,
            automaton,
            initial_gains: None,
            initial_mode: None,
            perturbation,
            solver: SolverConfig {
                horizon,
                record_every: 10,
                ..SolverConfig::default()
            },
            step: None,
            out_dir: PathBuf::from("out"),
        }
    }

    /// Flow step actually used.
    pub fn flow_step(&self) -> f64 {
        self.step.unwrap_or_else(|| {
            let t_min = self
                .periods
                .iter()
                .map(|p| p.to_f64())
                .fold(f64::INFINITY, f64::min);
            self.gains.eps * self.gains.eps * t_min / 40.0
        })
    }

    /// Solver settings with the derived step and the run seed filled in.
    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            step: self.flow_step(),
            seed: self.seed,
            ..self.solver.clone()
        }
    }

    /// Parse a configuration file. Relative script paths are resolved against
    /// the file's directory.
    pub fn from_file(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::io(path, e))?;
        Self::from_toml(&text, path.parent())
    }

    pub fn from_toml(text: &str, base: Option<&Path>) -> Result<Self, ScenarioError> {
        let file: ConfigFile =
            toml::from_str(text).map_err(|e| ScenarioError::Config(e.to_string()))?;
        file.resolve(base)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    scenario: String,
    seed: Option<u64>,
    hybrid: Option<bool>,
    law: Option<String>,
    initial: Option<Vec<f64>>,
    heading: Option<[f64; 2]>,
    mode: Option<usize>,
    phases: Option<Vec<f64>>,
    #[serde(default)]
    gains: GainsSection,
    #[serde(default)]
    target: TargetSection,
    #[serde(default)]
    automaton: AutomatonSection,
    perturbation: Option<PerturbationSection>,
    #[serde(default)]
    solver: SolverSection,
    #[serde(default)]
    output: OutputSection,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum PeriodSpec {
    Int(u64),
    Text(String),
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct GainsSection {
    gamma: Option<f64>,
    kappa: Option<f64>,
    eps: Option<f64>,
    delta: Option<f64>,
    periods: Option<Vec<PeriodSpec>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TargetSection {
    point: Option<Vec<f64>>,
    perp: Option<[f64; 3]>,
    omega: Option<[f64; 3]>,
    obstacle_center: Option<[f64; 2]>,
    obstacle_radius: Option<f64>,
    margin: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct AutomatonSection {
    t_circ: Option<f64>,
    chi1: Option<f64>,
    chi2: Option<f64>,
    dwell_rate: Option<f64>,
    policy: Option<String>,
    script: Option<PathBuf>,
    gains: Option<Vec<i8>>,
    alphabets: Option<Vec<Vec<i8>>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PerturbationSection {
    enabled: Option<bool>,
    amplitude: Option<f64>,
    sigma: Option<f64>,
    center: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SolverSection {
    step: Option<f64>,
    horizon: Option<f64>,
    max_jumps: Option<usize>,
    jump_tol: Option<f64>,
    zeno_count: Option<usize>,
    zeno_window: Option<f64>,
    record_every: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutputSection {
    dir: Option<PathBuf>,
}

impl ConfigFile {
    fn resolve(self, base: Option<&Path>) -> Result<ScenarioConfig, ScenarioError> {
        let scenario: Scenario = self.scenario.parse()?;
        let mut c = ScenarioConfig::defaults(scenario);
        let bad = |m: String| ScenarioError::Config(m);

        if let Some(s) = self.seed {
            c.seed = s;
        }
        if let Some(h) = self.hybrid {
            c.hybrid = h;
        }
        if let Some(l) = self.law {
            c.law = match l.as_str() {
                "es" => Law::Es,
                "averaged" => Law::Averaged,
                other => return Err(bad(format!("law must be `es` or `averaged`, got `{other}`"))),
            };
        }
        if let Some(p) = self.initial {
            c.initial = p;
        }
        if let Some(h) = self.heading {
            c.heading = h;
        }
        c.phases = self.phases;
        c.initial_mode = self.mode;

        let g = self.gains;
        c.gains = EsGains::new(
            g.gamma.unwrap_or(c.gains.gamma),
            g.kappa.unwrap_or(c.gains.kappa),
            g.eps.unwrap_or(c.gains.eps),
        )
        .map_err(|e| bad(e.to_string()))?;
        if let Some(d) = g.delta {
            c.delta = d;
        }
        if let Some(ps) = g.periods {
            c.periods = ps
                .into_iter()
                .map(|p| match p {
                    PeriodSpec::Int(n) => Rational::integer(n),
                    PeriodSpec::Text(s) => s.parse(),
                })
                .collect::<Result<_, _>>()
                .map_err(|e| bad(e.to_string()))?;
        }

        let t = self.target;
        if let Some(p) = t.point {
            c.target.point = p;
        }
        if let Some(v) = t.perp {
            c.target.perp = v;
        }
        if let Some(v) = t.omega {
            c.target.omega = v;
        }
        if let Some(v) = t.obstacle_center {
            c.target.obstacle_center = v;
        }
        if let Some(v) = t.obstacle_radius {
            c.target.obstacle_radius = v;
        }
        if let Some(v) = t.margin {
            c.target.margin = v;
        }

        let a = self.automaton;
        let au = &mut c.automaton;
        au.t_circ = a.t_circ.unwrap_or(au.t_circ);
        au.chi1 = a.chi1.unwrap_or(au.chi1);
        au.chi2 = a.chi2.unwrap_or(au.chi2);
        au.dwell_rate = a.dwell_rate.or(au.dwell_rate);
        if let Some(al) = a.alphabets {
            au.alphabets = al;
        }
        au.policy = match (a.policy.as_deref(), a.script) {
            (None | Some("random"), None) => JumpPolicy::UniformRandom,
            (Some("frozen"), None) => JumpPolicy::Frozen,
            (None | Some("script"), Some(path)) => {
                let path = match base {
                    Some(b) if path.is_relative() => b.join(path),
                    _ => path,
                };
                let script = load_script(&path, au.r).map_err(|e| bad(e.to_string()))?;
                JumpPolicy::Scripted(Arc::new(script))
            }
            (Some("script"), None) => return Err(bad("policy `script` needs `script = <file>`".into())),
            (Some(p), _) => {
                return Err(bad(format!(
                    "automaton policy must be `random`, `frozen` or `script`, got `{p}`"
                )))
            }
        };
        c.initial_gains = a.gains;

        if let Some(p) = self.perturbation {
            if p.enabled == Some(false) {
                c.perturbation = None;
            } else {
                let base = c.perturbation.clone().unwrap_or(PerturbationSpec {
                    amplitude: 0.0,
                    sigma: 0.5,
                    center: c.initial.clone(),
                });
                c.perturbation = Some(PerturbationSpec {
                    amplitude: p.amplitude.unwrap_or(base.amplitude),
                    sigma: p.sigma.unwrap_or(base.sigma),
                    center: p.center.unwrap_or(base.center),
                });
            }
        }

        let s = self.solver;
        c.step = s.step;
        let sv = &mut c.solver;
        sv.horizon = s.horizon.unwrap_or(sv.horizon);
        sv.max_jumps = s.max_jumps.unwrap_or(sv.max_jumps);
        sv.jump_tol = s.jump_tol.unwrap_or(sv.jump_tol);
        sv.zeno_count = s.zeno_count.unwrap_or(sv.zeno_count);
        sv.zeno_window = s.zeno_window.unwrap_or(sv.zeno_window);
        sv.record_every = s.record_every.unwrap_or(sv.record_every);
        if let Some(d) = self.output.dir {
            c.out_dir = d;
        }
        c.validate()?;
        Ok(c)
    }
}

impl ScenarioConfig {
    /// Checks that do not require building the closed loop.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::Config(m));
        self.automaton
            .validate()
            .map_err(|e| ScenarioError::Config(e.to_string()))?;
        if self.automaton.r != self.scenario.gains() {
            return bad(format!(
                "{} needs {} gains, automaton has {}",
                self.scenario.name(),
                self.scenario.gains(),
                self.automaton.r
            ));
        }
        let oscillators = match self.scenario {
            Scenario::Circle | Scenario::Sphere | Scenario::So3 => self.scenario.gains(),
            _ => 1,
        };
        if self.periods.len() != oscillators {
            return bad(format!(
                "{} needs {oscillators} periods, got {}",
                self.scenario.name(),
                self.periods.len()
            ));
        }
        if let Some(g) = &self.initial_gains {
            if g.len() != self.automaton.r
                || g.iter().zip(&self.automaton.alphabets).any(|(v, a)| !a.contains(v))
            {
                return bad(format!("initial gains {g:?} not in the gain alphabets"));
            }
        }
        if let Some(ph) = &self.phases {
            if ph.len() != oscillators {
                return bad(format!("{oscillators} phases expected, got {}", ph.len()));
            }
        }
        if let Some(p) = &self.perturbation {
            if !(p.amplitude >= 0.0 && p.sigma > 0.0) {
                return bad("perturbation needs amplitude ≥ 0 and sigma > 0".into());
            }
            if p.center.len() != self.initial.len() {
                return bad("perturbation center has the wrong dimension".into());
            }
        }
        if let Some(h) = self.step {
            if !(h > 0.0) {
                return bad(format!("step must be positive, got {h}"));
            }
        }
        self.solver_config()
            .validate()
            .map_err(|e| ScenarioError::Config(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_takes_defaults() {
        let c = ScenarioConfig::from_toml("scenario = \"circle\"", None).unwrap();
        assert_eq!(c.gains.kappa, 4.0);
        assert!((c.gains.eps - 1.0 / (4.0 * PI).sqrt()).abs() < 1e-15);
        assert_eq!(c.delta, 0.25);
        assert_eq!(c.target.point, vec![0.0, 1.0]);
        let s = ScenarioConfig::from_toml("scenario = \"sphere\"", None).unwrap();
        assert_eq!(s.periods, rats(&[3, 2, 1]));
    }

    #[test]
    fn overrides_and_rationals() {
        let text = r#"
            scenario = "sphere"
            seed = 7
            [gains]
            eps = 0.1
            periods = [3, "2", "1/2"]
            [automaton]
            chi1 = 0.25
            policy = "frozen"
            [solver]
            horizon = 5.0
        "#;
        let c = ScenarioConfig::from_toml(text, None).unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.periods[2], Rational::new(1, 2).unwrap());
        assert!((c.flow_step() - 0.01 * 0.5 / 40.0).abs() < 1e-15);
        assert!(matches!(c.automaton.policy, JumpPolicy::Frozen));
        assert_eq!(c.solver.horizon, 5.0);
    }

    #[test]
    fn unknown_keys_are_errors() {
        assert!(ScenarioConfig::from_toml("scenario = \"circle\"\nfoo = 1", None).is_err());
        let text = "scenario = \"circle\"\n[gains]\nepsilon = 0.1";
        assert!(ScenarioConfig::from_toml(text, None).is_err());
        assert!(ScenarioConfig::from_toml("scenario = \"torus\"", None).is_err());
        assert!(ScenarioConfig::from_toml("scenario = \"custom\"", None).is_err());
    }

    #[test]
    fn invalid_values_are_errors() {
        let t = "scenario = \"circle\"\n[automaton]\nchi2 = 1.5";
        assert!(ScenarioConfig::from_toml(t, None).is_err());
        let t = "scenario = \"circle\"\n[gains]\nperiods = [1, 2]";
        assert!(ScenarioConfig::from_toml(t, None).is_err());
        let t = "scenario = \"circle\"\n[gains]\neps = -1.0";
        assert!(ScenarioConfig::from_toml(t, None).is_err());
    }

    #[test]
    fn perturbation_can_be_disabled() {
        let t = "scenario = \"circle\"\n[perturbation]\nenabled = false";
        assert!(ScenarioConfig::from_toml(t, None).unwrap().perturbation.is_none());
        let t = "scenario = \"circle\"\n[perturbation]\namplitude = 0.15";
        let p = ScenarioConfig::from_toml(t, None).unwrap().perturbation.unwrap();
        assert_eq!((p.amplitude, p.sigma), (0.15, 0.5));
    }
}
