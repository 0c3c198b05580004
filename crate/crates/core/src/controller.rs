//! Oscillatory minimum-seeking feedback and its averaged counterpart.
//!
//! Each input is `u_i = ε⁻¹ √(4πγ/(T_i κ)) ⟨exp(κ V S) e₁, η_i⟩`, where `η_i`
//! is a unit rotor with period `ε² T_i`. Only the value `V(x)` is measured.
//! The rotors turn so that `η_i(t) = (cos ω_i t, sin ω_i t)` from `e₁`, i.e.
//! `η̇_i = −ω_i S η_i`; with this orientation the Lie-bracket average of the
//! closed loop is the descent flow `−γ Σ θ_i² ⟨∇V, b_i⟩ b_i`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::Vector2;
use num_integer::Integer;
use thiserror::Error;

use crate::geometry::{planar_rot, Manifold};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControllerError {
    #[error("invalid rational `{0}`")]
    BadRational(String),
    #[error("periods must be positive and pairwise distinct: {0}")]
    BadPeriods(String),
    #[error("gains must be positive: {0}")]
    BadGains(String),
}

/// A positive rational number in lowest terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Rational {
    num: u64,
    den: u64,
}

impl Rational {
    pub fn new(num: u64, den: u64) -> Result<Self, ControllerError> {
        if num == 0 || den == 0 {
            return Err(ControllerError::BadRational(format!("{num}/{den}")));
        }
        let g = num.gcd(&den);
        Ok(Self {
            num: num / g,
            den: den / g,
        })
    }

    pub fn integer(n: u64) -> Result<Self, ControllerError> {
        Self::new(n, 1)
    }

    pub fn num(&self) -> u64 {
        self.num
    }

    pub fn den(&self) -> u64 {
        self.den
    }

    pub fn to_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

impl FromStr for Rational {
    type Err = ControllerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ControllerError::BadRational(s.to_string());
        let parse = |t: &str| t.trim().parse::<u64>().map_err(|_| bad());
        match s.split_once('/') {
            Some((n, d)) => Self::new(parse(n)?, parse(d)?),
            None => Self::new(parse(s)?, 1),
        }
    }
}

/// Tuning constants `γ`, `κ`, `ε`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EsGains {
    pub gamma: f64,
    pub kappa: f64,
    pub eps: f64,
}

impl EsGains {
    pub fn new(gamma: f64, kappa: f64, eps: f64) -> Result<Self, ControllerError> {
        for (name, v) in [("gamma", gamma), ("kappa", kappa), ("eps", eps)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ControllerError::BadGains(format!("{name} = {v}")));
            }
        }
        Ok(Self { gamma, kappa, eps })
    }

    /// `ε⁻¹ √(4πγ/(T κ))`, the bound on `|u_i|`.
    pub fn amplitude(&self, period: f64) -> f64 {
        (4.0 * PI * self.gamma / (period * self.kappa)).sqrt() / self.eps
    }
}

/// Uncoupled unit rotors with distinct rational periods.
#[derive(Debug, Clone, PartialEq)]
pub struct OscillatorBank {
    periods: Vec<Rational>,
    eps: f64,
}

impl OscillatorBank {
    pub fn new(periods: Vec<Rational>, eps: f64) -> Result<Self, ControllerError> {
        if periods.is_empty() {
            return Err(ControllerError::BadPeriods("no periods".into()));
        }
        for (i, a) in periods.iter().enumerate() {
            if periods[..i].contains(a) {
                return Err(ControllerError::BadPeriods(format!("{a} repeated")));
            }
        }
        if !(eps > 0.0) {
            return Err(ControllerError::BadGains(format!("eps = {eps}")));
        }
        Ok(Self { periods, eps })
    }

    pub fn len(&self) -> usize {
        self.periods.len()
    }

    pub fn is_empty(&self) -> bool {
        self.periods.is_empty()
    }

    pub fn periods(&self) -> &[Rational] {
        &self.periods
    }

    pub fn period(&self, i: usize) -> f64 {
        self.periods[i].to_f64()
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// `ω_i = 2π / (T_i ε²)`.
    pub fn angular_speed(&self, i: usize) -> f64 {
        2.0 * PI / (self.period(i) * self.eps * self.eps)
    }

    /// Smallest `T` that every `T_i` divides, in units of the slow time
    /// (the rotors all return to their start after `ε² T`).
    pub fn common_period(&self) -> Rational {
        let num = self.periods.iter().fold(1u64, |acc, p| acc.lcm(&p.num));
        let den = self.periods.iter().fold(0u64, |acc, p| acc.gcd(&p.den));
        Rational::new(num, den).expect("periods are positive")
    }

    /// `η̇_i = −ω_i S η_i` for every rotor; `eta` holds `(η_i)` back to back.
    pub fn flow(&self, eta: &[f64], d: &mut [f64]) {
        for i in 0..self.len() {
            let w = self.angular_speed(i);
            let (c, s) = (eta[2 * i], eta[2 * i + 1]);
            // −S (c, s) = (−s, c)
            d[2 * i] = -w * s;
            d[2 * i + 1] = w * c;
        }
    }

    /// Rotor states `(cos φ_i, sin φ_i)` for the given phases.
    pub fn at_phases(phases: &[f64]) -> Vec<f64> {
        phases.iter().flat_map(|p| [p.cos(), p.sin()]).collect()
    }
}

/// `⟨exp(κ V S) e₁, η⟩`.
pub fn rotor_signal(v: f64, eta: &[f64], kappa: f64) -> f64 {
    let (s, c) = (kappa * v).sin_cos();
    // exp(aS) e₁ = (cos a, −sin a)
    c * eta[0] - s * eta[1]
}

/// `u_i = ε⁻¹ √(4πγ/(T_i κ)) ⟨exp(κ V S) e₁, η_i⟩`.
pub fn es_input(v: f64, eta: &[f64], period: f64, g: &EsGains) -> f64 {
    g.amplitude(period) * rotor_signal(v, eta, g.kappa)
}

/// Two mutually orthogonal signals from one rotor: `η` and `exp((π/2) S) η`.
pub fn phase_shift_pair(v: f64, eta: &[f64], kappa: f64) -> (f64, f64) {
    let shifted = planar_rot(PI / 2.0) * Vector2::new(eta[0], eta[1]);
    (
        rotor_signal(v, eta, kappa),
        rotor_signal(v, shifted.as_slice(), kappa),
    )
}

/// Inputs of the unicycle: an oscillatory forward speed and a constant spin
/// `u₂ = 2π ε⁻¹`.
pub fn nonholonomic_inputs(v: f64, eta: &[f64], g: &EsGains) -> (f64, f64) {
    (es_input(v, eta, 1.0, g), 2.0 * PI / g.eps)
}

/// The same law driven by one fixed potential; used as the non-hybrid comparison.
pub fn baseline_nonhybrid(v_single: f64, eta: &[f64], periods: &[f64], g: &EsGains) -> Vec<f64> {
    periods
        .iter()
        .enumerate()
        .map(|(i, &t)| es_input(v_single, &eta[2 * i..2 * i + 2], t, g))
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Model-based comparison law `u_i = −γ ⟨∇V, θ_i b_i⟩`.
pub fn avg_feedback(grad: &[f64], fields: &[Vec<f64>], theta: &[f64], gamma: f64) -> Vec<f64> {
    fields
        .iter()
        .zip(theta)
        .map(|(b, th)| -gamma * th * dot(grad, b))
        .collect()
}

/// `f̄ = f₀ − γ Σ_i ⟨∇V, θ_i b_i⟩ θ_i b_i`, written into `out`.
pub fn averaged_field(
    f0: Option<&[f64]>,
    grad: &[f64],
    fields: &[Vec<f64>],
    theta: &[f64],
    gamma: f64,
    out: &mut [f64],
) {
    match f0 {
        Some(f) => out.copy_from_slice(f),
        None => out.fill(0.0),
    }
    for (b, th) in fields.iter().zip(theta) {
        let c = -gamma * th * th * dot(grad, b);
        out.iter_mut().zip(b).for_each(|(o, bi)| *o += c * bi);
    }
}

/// Localized tangent pull toward `p♯`:
/// `d(p) = a Π_{T_pℳ}(p♯ − p) exp(−|p − p♯|² / σ²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation {
    pub amplitude: f64,
    pub sigma: f64,
    pub p_sharp: Vec<f64>,
}

impl Perturbation {
    /// Add `d(p)` to `out`.
    pub fn add_to(&self, manifold: &Manifold, p: &[f64], out: &mut [f64]) {
        let mut v: Vec<f64> = self.p_sharp.iter().zip(p).map(|(s, x)| s - x).collect();
        let d2 = dot(&v, &v);
        let w = self.amplitude * (-d2 / (self.sigma * self.sigma)).exp();
        if w == 0.0 {
            return;
        }
        manifold.tangent_project(p, &mut v);
        out.iter_mut().zip(&v).for_each(|(o, vi)| *o += w * vi);
    }

    pub fn eval(&self, manifold: &Manifold, p: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; p.len()];
        self.add_to(manifold, p, &mut out);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::circle_field;
    use crate::hybrid::{solve, HybridSystemDef, SolverConfig};
    use crate::synergistic::{CircleFamily, PotentialFamily};
    use approx::assert_abs_diff_eq;

    fn gains() -> EsGains {
        EsGains::new(1.0, 4.0, 1.0 / (4.0 * PI).sqrt()).unwrap()
    }

    #[test]
    fn es_input_examples() {
        let g = gains();
        let amp = g.amplitude(1.0);
        assert_abs_diff_eq!(es_input(0.0, &[1.0, 0.0], 1.0, &g), amp);
        assert_abs_diff_eq!(es_input(PI / 8.0, &[1.0, 0.0], 1.0, &g), 0.0, epsilon = 1e-12);
        for k in 0..100 {
            let a = k as f64 * 0.41;
            let u = es_input(k as f64 * 0.13, &[a.cos(), a.sin()], 2.0, &g);
            assert!(u.abs() <= g.amplitude(2.0) * (1.0 + 1e-15));
        }
    }

    #[test]
    fn amplitude_and_speed_scale_with_eps() {
        let g = gains();
        let g2 = EsGains { eps: 2.0 * g.eps, ..g };
        assert_abs_diff_eq!(g2.amplitude(1.0), g.amplitude(1.0) / 2.0, epsilon = 1e-12);
        let r = |e: f64| Rational::integer(1).map(|t| OscillatorBank::new(vec![t], e).unwrap());
        let (b, b2) = (r(0.2).unwrap(), r(0.1).unwrap());
        assert_abs_diff_eq!(b2.angular_speed(0), 4.0 * b.angular_speed(0), epsilon = 1e-9);
    }

    #[test]
    fn rationals() {
        assert_eq!("6/4".parse::<Rational>().unwrap(), Rational::new(3, 2).unwrap());
        assert!("0".parse::<Rational>().is_err());
        assert!("x/2".parse::<Rational>().is_err());
        let periods = ["3", "2", "1"].iter().map(|s| s.parse().unwrap()).collect();
        let bank = OscillatorBank::new(periods, 0.1).unwrap();
        assert_eq!(bank.common_period(), Rational::integer(6).unwrap());
        let halves = ["1/2", "3/4"].iter().map(|s| s.parse().unwrap()).collect();
        let bank = OscillatorBank::new(halves, 0.1).unwrap();
        assert_eq!(bank.common_period(), Rational::new(3, 2).unwrap());
        let dup = vec![Rational::integer(1).unwrap(); 2];
        assert!(OscillatorBank::new(dup, 0.1).is_err());
    }

    #[test]
    fn oscillator_flow_is_tangent_and_periodic() {
        let eps = 0.2;
        let bank = OscillatorBank::new(vec![Rational::integer(2).unwrap()], eps).unwrap();
        let eta0 = [0.6, 0.8];
        let mut d = [0.0; 2];
        bank.flow(&eta0, &mut d);
        assert_eq!(eta0[0] * d[0] + eta0[1] * d[1], 0.0);

        let period = eps * eps * 2.0;
        let sys = HybridSystemDef::continuous(2, move |x, dx| bank.flow(x, dx));
        let cfg = SolverConfig {
            step: period / 40.0,
            horizon: period,
            renormalize: false,
            ..Default::default()
        };
        let arc = solve(&sys, &eta0, &cfg).unwrap();
        let end = arc.last_state();
        assert!((end[0] - eta0[0]).abs() < 1e-4 && (end[1] - eta0[1]).abs() < 1e-4);
    }

    #[test]
    fn phase_pair_examples() {
        let (a, b) = phase_shift_pair(0.3, &[1.0, 0.0], 4.0);
        assert_abs_diff_eq!(a, rotor_signal(0.3, &[1.0, 0.0], 4.0));
        assert_abs_diff_eq!(b, rotor_signal(0.3, &[0.0, -1.0], 4.0));
        let (a, b) = phase_shift_pair(0.0, &[0.6, 0.8], 4.0);
        assert_abs_diff_eq!(a, 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(b, 0.8, epsilon = 1e-15);
        // Orthogonal over one period at frozen V.
        let n = 1000;
        let ip: f64 = (0..n)
            .map(|k| {
                let t = 2.0 * PI * k as f64 / n as f64;
                let (a, b) = phase_shift_pair(0.37, &[t.cos(), t.sin()], 4.0);
                a * b / n as f64
            })
            .sum();
        assert!(ip.abs() < 1e-6);
    }

    #[test]
    fn nonholonomic_examples() {
        let g = EsGains::new(2.0, 4.0, 1.0 / (6.0 * PI).sqrt()).unwrap();
        let (u1, u2) = nonholonomic_inputs(0.0, &[1.0, 0.0], &g);
        assert_abs_diff_eq!(u1, (4.0 * PI * 2.0 / 4.0).sqrt() / g.eps, epsilon = 1e-12);
        assert_abs_diff_eq!(u2, 2.0 * PI * (6.0 * PI).sqrt(), epsilon = 1e-9);
    }

    #[test]
    fn avg_feedback_examples() {
        let b = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert_eq!(avg_feedback(&[0.0, 0.0], &b, &[1.0, 1.0], 2.0), vec![0.0, 0.0]);
        let u = avg_feedback(&[0.5, -1.0], &b, &[1.0, 0.0], 2.0);
        assert_eq!(u[1], 0.0);
        assert_eq!(u[0], -1.0);
        let mut out = [1.0; 2];
        averaged_field(None, &[0.0, 0.0], &b, &[1.0, 1.0], 1.0, &mut out);
        assert_eq!(out, [0.0, 0.0]);
    }

    #[test]
    fn avg_feedback_moves_downhill_on_circle() {
        let fam = CircleFamily::new([0.0, 1.0], 0.25).unwrap();
        let a: f64 = -PI / 2.0 + 0.3;
        let p = [a.cos(), a.sin()];
        let mut g = [0.0; 2];
        fam.grad(1, &p, &mut g);
        let b = circle_field(&p).to_vec();
        let u = avg_feedback(&g, std::slice::from_ref(&b), &[1.0], 1.0)[0];
        let h = 1e-6;
        let moved = [p[0] + h * u * b[0], p[1] + h * u * b[1]];
        assert!(fam.eval(1, &moved) < fam.eval(1, &p));
    }

    #[test]
    fn averaged_field_decreases_v() {
        let fam = CircleFamily::new([0.0, 1.0], 0.25).unwrap();
        for k in 0..200 {
            let a = k as f64 * 0.0314;
            let p = [a.cos(), a.sin()];
            let mut g = [0.0; 2];
            fam.grad(2, &p, &mut g);
            let b = vec![circle_field(&p).to_vec()];
            let mut f = [0.0; 2];
            averaged_field(None, &g, &b, &[-1.0], 1.0, &mut f);
            assert!(g[0] * f[0] + g[1] * f[1] <= 0.0);
        }
    }

    #[test]
    fn perturbation_pulls_toward_p_sharp() {
        let m = Manifold::circle();
        let d = Perturbation {
            amplitude: 2.0,
            sigma: 0.5,
            p_sharp: vec![0.0, -1.0],
        };
        assert_eq!(d.eval(&m, &[0.0, -1.0]), vec![0.0, 0.0]);
        // Slightly to the right of p♯ the push is to the left.
        let a: f64 = -PI / 2.0 + 0.1;
        let v = d.eval(&m, &[a.cos(), a.sin()]);
        assert!(v[0] < 0.0);
        // Vanishes far away.
        assert!(d.eval(&m, &[0.0, 1.0]).iter().all(|x| x.abs() < 1e-6));
    }
}
