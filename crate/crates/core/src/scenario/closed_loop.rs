//! The closed loop `𝓗_cl`: plant on a manifold, logic mode, gain automaton
//! and oscillator bank in one state vector.
//!
//! Layout: `p | q | θ₁…θ_r, τ, m | η₁…η_k`. For obstacle scenarios `p` holds
//! log-polar coordinates `(ρ, ϑ)` (plus the heading `ψ` for the unicycle), so
//! the vehicle cannot reach the obstacle margin by construction.

use std::f64::consts::PI;
use std::ops::Range;

use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{Law, Scenario, ScenarioConfig};
use super::ScenarioError;
use crate::controller::{
    avg_feedback, averaged_field, es_input, nonholonomic_inputs, phase_shift_pair, EsGains,
    OscillatorBank, Perturbation,
};
use crate::geometry::{
    circle_field, obstacle_diffeo, obstacle_diffeo_inv, pushforward_field, rotation_field,
    sphere_field, Factor, Manifold, PolarPoint,
};
use crate::hybrid::{HybridSystem, Jump, JumpContext, SolveError};
use crate::synergistic::{
    min_mode, CircleFamily, ObstacleFamily, PotentialFamily, So3Family, SphereFamily,
};
use crate::uncertainty::{
    clamp_timers, in_eb, in_theta_flow_set, in_theta_jump_set, theta_flow, theta_jump,
    AutomatonConfig,
};

/// Jump reason of a logic-mode switch.
pub const SYNERGY: &str = "synergy";

#[derive(Debug, Clone, Copy)]
struct Obstacle {
    center: Vector2<f64>,
    radius: f64,
    margin: f64,
    goal: Vector2<f64>,
}

impl Obstacle {
    fn plane_point(&self, p: &[f64]) -> Vector2<f64> {
        obstacle_diffeo_inv(&polar(p), &self.center, self.margin)
    }

    fn polar_point(&self, z: &[f64]) -> Result<Vec<f64>, ScenarioError> {
        let pp = obstacle_diffeo(&Vector2::new(z[0], z[1]), &self.center, self.margin)
            .map_err(|e| ScenarioError::Config(e.to_string()))?;
        Ok(vec![pp.rho, pp.theta.x, pp.theta.y])
    }

    /// `Dφ(φ⁻¹(p)) v` as a `(ρ, ϑ₁, ϑ₂)` vector.
    fn push(&self, p: &[f64], v: Vector2<f64>) -> [f64; 3] {
        let (dr, dt) = pushforward_field(&self.center, self.margin, &polar(p), &v);
        [dr, dt.x, dt.y]
    }
}

fn polar(p: &[f64]) -> PolarPoint {
    PolarPoint {
        rho: p[0],
        theta: Vector2::new(p[1], p[2]),
    }
}

/// Potential family of a scenario: the synergistic one, or its single
/// unwarped member for the baseline. `checked` rejects `δ` outside the range
/// allowed by the family.
pub fn build_family(
    cfg: &ScenarioConfig,
    hybrid: bool,
    checked: bool,
) -> Result<Box<dyn PotentialFamily>, ScenarioError> {
    let t = &cfg.target;
    let d = cfg.delta;
    let syn = |e| ScenarioError::Config(format!("{e}"));
    let want = |n: usize| {
        if t.point.len() == n {
            Ok(())
        } else {
            Err(ScenarioError::Config(format!(
                "target point needs {n} coordinates, got {}",
                t.point.len()
            )))
        }
    };
    Ok(match cfg.scenario {
        Scenario::Circle => {
            want(2)?;
            let ts = [t.point[0], t.point[1]];
            Box::new(match (hybrid, checked) {
                (false, _) => CircleFamily::unwarped(ts).map_err(syn)?,
                (true, true) => CircleFamily::new(ts, d).map_err(syn)?,
                (true, false) => CircleFamily::new(ts, 0.5).map_err(syn)?.with_delta_unchecked(d),
            })
        }
        Scenario::Sphere => {
            want(3)?;
            let ps = [t.point[0], t.point[1], t.point[2]];
            Box::new(match (hybrid, checked) {
                (false, _) => SphereFamily::unwarped(ps).map_err(syn)?,
                (true, true) => SphereFamily::new(ps, t.perp, d).map_err(syn)?,
                (true, false) => SphereFamily::new(ps, t.perp, 0.1)
                    .map_err(syn)?
                    .with_delta_unchecked(d),
            })
        }
        Scenario::So3 => Box::new(match (hybrid, checked) {
            (false, _) => So3Family::unwarped(t.omega).map_err(syn)?,
            (true, true) => So3Family::new(t.omega, d).map_err(syn)?,
            (true, false) => So3Family::new(t.omega, 0.1)
                .map_err(syn)?
                .with_delta_unchecked(d),
        }),
        Scenario::ObstacleHolonomic | Scenario::ObstacleNonholonomic => {
            want(2)?;
            let ob = obstacle(cfg)?;
            let star = ob.polar_point(&t.point)?;
            let ts = [star[1], star[2]];
            Box::new(match (hybrid, checked) {
                (false, _) => ObstacleFamily::unwarped(star[0], ts).map_err(syn)?,
                (true, true) => ObstacleFamily::new(star[0], ts, d).map_err(syn)?,
                (true, false) => ObstacleFamily::new(star[0], ts, 0.5)
                    .map_err(syn)?
                    .with_delta_unchecked(d),
            })
        }
    })
}

fn obstacle(cfg: &ScenarioConfig) -> Result<Obstacle, ScenarioError> {
    let t = &cfg.target;
    if !(t.obstacle_radius > 0.0 && t.margin > t.obstacle_radius) {
        return Err(ScenarioError::Config(format!(
            "need 0 < obstacle radius ({}) < margin ({})",
            t.obstacle_radius, t.margin
        )));
    }
    let center = Vector2::new(t.obstacle_center[0], t.obstacle_center[1]);
    let goal = Vector2::new(t.point[0], t.point[1]);
    if (goal - center).norm() <= t.margin {
        return Err(ScenarioError::Config("target lies inside the obstacle margin".into()));
    }
    Ok(Obstacle {
        center,
        radius: t.obstacle_radius,
        margin: t.margin,
        goal,
    })
}

/// The assembled closed loop.
pub struct ClosedLoop {
    scenario: Scenario,
    family: Box<dyn PotentialFamily>,
    attitude: Option<So3Family>,
    hybrid: bool,
    law: Law,
    gains: EsGains,
    bank: OscillatorBank,
    automaton: AutomatonConfig,
    perturbation: Option<Perturbation>,
    obstacle: Option<Obstacle>,
    manifold: Manifold,
    target: Vec<f64>,
    np: usize,
    nf: usize,
    r: usize,
    channel_names: Vec<String>,
}

impl ClosedLoop {
    pub fn new(cfg: &ScenarioConfig) -> Result<Self, ScenarioError> {
        cfg.validate()?;
        let scenario = cfg.scenario;
        let family = build_family(cfg, cfg.hybrid, true)?;
        let obstacle = if scenario.is_obstacle() {
            Some(obstacle(cfg)?)
        } else {
            None
        };
        let manifold = match scenario {
            Scenario::ObstacleNonholonomic => {
                Manifold::new(vec![Factor::Line, Factor::Circle, Factor::Circle])
            }
            _ => family.manifold().clone(),
        };
        let nf = family.manifold().dim();
        let np = manifold.dim();
        let attitude = (scenario == Scenario::So3)
            .then(|| So3Family::unwarped(cfg.target.omega))
            .transpose()
            .map_err(|e| ScenarioError::Config(e.to_string()))?;
        let perturbation = match (&cfg.perturbation, &obstacle) {
            (None, _) => None,
            (Some(p), Some(ob)) => Some(p.to_perturbation(ob.polar_point(&p.center)?)),
            (Some(p), None) => Some(p.to_perturbation(p.center.clone())),
        };
        let bank = OscillatorBank::new(cfg.periods.clone(), cfg.gains.eps)
            .map_err(|e| ScenarioError::Config(e.to_string()))?;
        let r = cfg.automaton.r;
        let mut names: Vec<String> = ["V", "mu", "q"].iter().map(|s| s.to_string()).collect();
        names.extend((1..=r).map(|i| format!("u_{i}")));
        names.extend((1..=r).map(|i| format!("theta_{i}")));
        names.extend(["dist", "in_eb", "monitor", "drift"].iter().map(|s| s.to_string()));
        if attitude.is_some() {
            names.push("W".into());
        }
        if obstacle.is_some() {
            names.extend(["z1", "z2", "clearance"].iter().map(|s| s.to_string()));
        }
        Ok(Self {
            scenario,
            target: family.target().to_vec(),
            family,
            attitude,
            hybrid: cfg.hybrid,
            law: cfg.law,
            gains: cfg.gains,
            bank,
            automaton: cfg.automaton.clone(),
            perturbation,
            obstacle,
            manifold,
            np,
            nf,
            r,
            channel_names: names,
        })
    }

    pub fn scenario(&self) -> Scenario {
        self.scenario
    }

    pub fn family(&self) -> &dyn PotentialFamily {
        self.family.as_ref()
    }

    pub fn manifold(&self) -> &Manifold {
        &self.manifold
    }

    pub fn automaton(&self) -> &AutomatonConfig {
        &self.automaton
    }

    /// Range of the plant coordinates `p`.
    pub fn p_range(&self) -> Range<usize> {
        0..self.np
    }

    pub fn q_index(&self) -> usize {
        self.np
    }

    pub fn theta_range(&self) -> Range<usize> {
        self.np + 1..self.np + 1 + self.automaton.dim()
    }

    pub fn eta_range(&self) -> Range<usize> {
        let s = self.theta_range().end;
        s..s + 2 * self.bank.len()
    }

    /// Planar position, for obstacle scenarios.
    pub fn position(&self, x: &[f64]) -> Option<Vector2<f64>> {
        self.obstacle.map(|ob| ob.plane_point(&x[..3]))
    }

    /// Initial state from the configured point, heading, gains and phases.
    pub fn initial_state(&self, cfg: &ScenarioConfig) -> Result<Vec<f64>, ScenarioError> {
        let mut p = match &self.obstacle {
            Some(ob) => {
                if cfg.initial.len() != 2 {
                    return Err(ScenarioError::Config("initial position needs 2 coordinates".into()));
                }
                ob.polar_point(&cfg.initial)?
            }
            None => cfg.initial.clone(),
        };
        if self.scenario == Scenario::ObstacleNonholonomic {
            p.extend_from_slice(&cfg.heading);
        }
        if p.len() != self.np {
            return Err(ScenarioError::Config(format!(
                "initial point needs {} coordinates, got {}",
                self.np,
                p.len()
            )));
        }
        self.manifold
            .project(&mut p)
            .map_err(|e| ScenarioError::Config(format!("initial point: {e}")))?;
        let q = match cfg.initial_mode {
            Some(q) if (1..=self.family.modes()).contains(&q) => q,
            Some(q) => {
                return Err(ScenarioError::Config(format!(
                    "mode {q} outside 1..={}",
                    self.family.modes()
                )))
            }
            None => min_mode(self.family.as_ref(), &p[..self.nf]).0,
        };
        let mut theta = self.automaton.initial();
        if let Some(g) = &cfg.initial_gains {
            for (t, v) in theta.iter_mut().zip(g) {
                *t = *v as f64;
            }
        }
        let phases = match &cfg.phases {
            Some(ph) => ph.clone(),
            None => {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
                (0..self.bank.len()).map(|_| rng.gen_range(0.0..2.0 * PI)).collect()
            }
        };
        let mut x = p;
        x.push(q as f64);
        x.extend(theta);
        x.extend(OscillatorBank::at_phases(&phases));
        Ok(x)
    }

    fn mode(&self, x: &[f64]) -> usize {
        x[self.np].round() as usize
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.family.eval(self.mode(x), &x[..self.nf])
    }

    /// `μ(x)`; identically 0 for the baseline.
    pub fn mu(&self, x: &[f64]) -> f64 {
        if !self.hybrid {
            return 0.0;
        }
        let pf = &x[..self.nf];
        let v = self.family.eval(self.mode(x), pf);
        (v - min_mode(self.family.as_ref(), pf).1).max(0.0)
    }

    /// Control vector fields `b_i(p)` in the coordinates of `p`.
    pub fn fields(&self, p: &[f64]) -> Vec<Vec<f64>> {
        match self.scenario {
            Scenario::Circle => vec![circle_field(p).to_vec()],
            Scenario::Sphere => (0..3).map(|i| sphere_field(p, i).to_vec()).collect(),
            Scenario::So3 => (0..3).map(|i| rotation_field(p, i).to_vec()).collect(),
            Scenario::ObstacleHolonomic => {
                let ob = self.obstacle.expect("obstacle scenario");
                [Vector2::x(), Vector2::y()]
                    .iter()
                    .map(|e| ob.push(p, *e).to_vec())
                    .collect()
            }
            Scenario::ObstacleNonholonomic => {
                let ob = self.obstacle.expect("obstacle scenario");
                let mut b = ob.push(p, Vector2::new(p[3], p[4])).to_vec();
                b.extend([0.0, 0.0]);
                vec![b]
            }
        }
    }

    /// Oscillatory inputs `u_i` (before multiplication by `θ_i`).
    fn es_inputs(&self, v: f64, eta: &[f64]) -> Vec<f64> {
        let g = &self.gains;
        match self.scenario {
            Scenario::ObstacleHolonomic => {
                let (a, b) = phase_shift_pair(v, eta, g.kappa);
                let amp = g.amplitude(self.bank.period(0));
                vec![amp * a, amp * b]
            }
            Scenario::ObstacleNonholonomic => vec![nonholonomic_inputs(v, eta, g).0],
            _ => (0..self.r)
                .map(|i| es_input(v, &eta[2 * i..2 * i + 2], self.bank.period(i), g))
                .collect(),
        }
    }

    /// Ambient gradient of `V_q` padded to the length of `p`.
    fn grad(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.np];
        self.family.grad(self.mode(x), &x[..self.nf], &mut g[..self.nf]);
        g
    }

    /// Averaged drift of `p` and the equivalent model-based inputs.
    fn averaged(&self, x: &[f64], theta: &[f64], out: &mut [f64]) -> Vec<f64> {
        let p = &x[..self.np];
        let grad = self.grad(x);
        let gamma = self.gains.gamma;
        if let (Scenario::ObstacleNonholonomic, Some(ob)) = (self.scenario, self.obstacle) {
            // Averaging over the heading as well leaves half of the holonomic drift.
            let b: Vec<Vec<f64>> = [Vector2::x(), Vector2::y()]
                .iter()
                .map(|e| {
                    let mut v = ob.push(p, *e).to_vec();
                    v.extend([0.0, 0.0]);
                    v
                })
                .collect();
            let th = [theta[0], theta[0]];
            averaged_field(None, &grad, &b, &th, gamma / 2.0, out);
            return avg_feedback(&grad, &self.fields(p), &theta[..1], gamma);
        }
        let b = self.fields(p);
        averaged_field(None, &grad, &b, theta, gamma, out);
        avg_feedback(&grad, &b, theta, gamma)
    }

    fn inputs(&self, x: &[f64]) -> Vec<f64> {
        let theta = &x[self.theta_range()][..self.r];
        match self.law {
            Law::Es => self.es_inputs(self.value(x), &x[self.eta_range()]),
            Law::Averaged => {
                let mut scratch = vec![0.0; self.np];
                self.averaged(x, theta, &mut scratch)
            }
        }
    }

    /// Distance of the plant to the target set.
    pub fn target_distance(&self, x: &[f64]) -> f64 {
        match &self.obstacle {
            Some(ob) => (ob.plane_point(&x[..3]) - ob.goal).norm(),
            None => x[..self.np]
                .iter()
                .zip(&self.target)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt(),
        }
    }

    /// Obstacle radius `d`, for obstacle scenarios.
    pub fn obstacle_radius(&self) -> Option<f64> {
        self.obstacle.map(|o| o.radius)
    }

    /// Number of oscillators.
    pub fn oscillators(&self) -> usize {
        self.bank.len()
    }
}

impl HybridSystem for ClosedLoop {
    fn dim(&self) -> usize {
        self.eta_range().end
    }

    fn in_flow_set(&self, x: &[f64], tol: f64) -> bool {
        let ok_mu = !self.hybrid || self.mu(x) <= self.family.delta() + tol;
        ok_mu && in_theta_flow_set(&x[self.theta_range()], &self.automaton, tol)
    }

    fn in_jump_set(&self, x: &[f64]) -> bool {
        (self.hybrid && self.mu(x) >= self.family.delta())
            || in_theta_jump_set(&x[self.theta_range()], &self.automaton)
    }

    fn flow(&self, x: &[f64], dx: &mut [f64]) {
        dx.fill(0.0);
        let np = self.np;
        let th_range = self.theta_range();
        let theta: Vec<f64> = x[th_range.clone()][..self.r].to_vec();
        let p = &x[..np];
        match self.law {
            Law::Es => {
                let eta = &x[self.eta_range()];
                let u = self.es_inputs(self.value(x), eta);
                for ((b, ui), th) in self.fields(p).iter().zip(&u).zip(&theta) {
                    dx[..np].iter_mut().zip(b).for_each(|(d, bi)| *d += th * ui * bi);
                }
                if self.scenario == Scenario::ObstacleNonholonomic {
                    let u2 = 2.0 * PI / self.gains.eps;
                    // ψ̇ = u₂ S ψ
                    dx[3] = u2 * p[4];
                    dx[4] = -u2 * p[3];
                }
                self.bank.flow(eta, &mut dx[self.eta_range()]);
            }
            Law::Averaged => {
                self.averaged(x, &theta, &mut dx[..np]);
            }
        }
        if let Some(d) = &self.perturbation {
            d.add_to(self.family.manifold(), &x[..self.nf], &mut dx[..self.nf]);
        }
        theta_flow(&x[th_range.clone()], &self.automaton, &mut dx[th_range]);
    }

    fn jump(&self, x: &[f64], ctx: &mut JumpContext<'_>) -> Result<Jump, SolveError> {
        let mut y = x.to_vec();
        let mut reasons = Vec::new();
        if self.hybrid && self.mu(x) >= self.family.delta() {
            y[self.np] = min_mode(self.family.as_ref(), &x[..self.nf]).0 as f64;
            reasons.push(SYNERGY);
        }
        let th = self.theta_range();
        if in_theta_jump_set(&x[th.clone()], &self.automaton) {
            let tag = theta_jump(&mut y[th], &self.automaton, x, ctx)
                .map_err(|e| SolveError::JumpMap(e.to_string()))?;
            reasons.push(tag);
        }
        if reasons.is_empty() {
            return Err(SolveError::JumpMap("state is not in the jump set".into()));
        }
        Ok(Jump {
            state: y,
            reason: reasons.join("+"),
        })
    }

    fn renormalize(&self, x: &mut [f64]) {
        self.manifold.renormalize(&mut x[..self.np]);
        let th = self.theta_range();
        clamp_timers(&mut x[th], &self.automaton);
        for pair in x[self.eta_range()].chunks_mut(2) {
            let n = (pair[0] * pair[0] + pair[1] * pair[1]).sqrt();
            if n > 0.0 {
                pair[0] /= n;
                pair[1] /= n;
            }
        }
    }

    fn channel_names(&self) -> Vec<String> {
        self.channel_names.clone()
    }

    fn channels(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        let theta = &x[self.theta_range()];
        out.push(self.value(x));
        out.push(self.mu(x));
        out.push(x[self.np]);
        out.extend(self.inputs(x));
        out.extend_from_slice(&theta[..self.r]);
        out.push(self.target_distance(x));
        out.push(if in_eb(theta, self.r) { 1.0 } else { 0.0 });
        out.push(theta[self.r + 1]);
        out.push(self.manifold.distance(&x[..self.np]));
        if let Some(a) = &self.attitude {
            out.push(a.base(&x[..9]));
        }
        if let Some(ob) = &self.obstacle {
            let z = ob.plane_point(&x[..3]);
            out.extend([z.x, z.y, (z - ob.center).norm()]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn state_dimensions() {
        let dims: Vec<usize> = Scenario::ALL
            .iter()
            .map(|&s| ClosedLoop::new(&ScenarioConfig::defaults(s)).unwrap().dim())
            .collect();
        // circle 2+1+3+2, holonomic 3+1+4+2, sphere 3+1+5+6, so3 9+1+5+6, unicycle 5+1+3+2
        assert_eq!(dims, vec![8, 10, 15, 21, 11]);
    }

    #[test]
    fn initial_state_is_flowable_and_deterministic() {
        for s in Scenario::ALL {
            let cfg = ScenarioConfig::defaults(s);
            let cl = ClosedLoop::new(&cfg).unwrap();
            let x = cl.initial_state(&cfg).unwrap();
            assert_eq!(x, cl.initial_state(&cfg).unwrap());
            assert!(cl.in_flow_set(&x, 1e-9), "{s:?}");
            assert_eq!(cl.mu(&x), 0.0);
            let mut dx = vec![0.0; x.len()];
            cl.flow(&x, &mut dx);
            assert!(dx.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn obstacle_start_maps_back() {
        let cfg = ScenarioConfig::defaults(Scenario::ObstacleHolonomic);
        let cl = ClosedLoop::new(&cfg).unwrap();
        let x = cl.initial_state(&cfg).unwrap();
        let z = cl.position(&x).unwrap();
        assert!((z - Vector2::new(0.0, -2.0)).norm() < 1e-12);
        assert!((cl.target_distance(&x) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn start_inside_obstacle_is_rejected() {
        let mut cfg = ScenarioConfig::defaults(Scenario::ObstacleHolonomic);
        cfg.initial = vec![0.5, 0.0];
        let cl = ClosedLoop::new(&cfg).unwrap();
        assert!(cl.initial_state(&cfg).is_err());
    }
}
