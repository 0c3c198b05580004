//! Synergistic families of potential functions and the logic-mode switch.
//!
//! A family `{V_q}`, `q ∈ {1, …, N}`, shares a target `p⋆`. The gap
//! `μ(p, q) = V_q(p) − min_q̃ V_q̃(p)` drives the switch: when `μ ≥ δ` the
//! logic mode jumps to a minimizing index.

mod families;
mod gap;

pub use families::{CircleFamily, ObstacleFamily, So3Family, SphereFamily};
pub use gap::{
    estimate_synergy_gap, find_critical_points, manifold_grid, tangent_grad_norm, CriticalPoint,
    GapOptions, GapReport,
};

use thiserror::Error;

use crate::geometry::Manifold;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynergyError {
    #[error("synergy parameter δ = {delta} outside {range}")]
    BadDelta { delta: f64, range: &'static str },
    #[error("p_perp is not orthogonal to p_star (inner product {0:.3e})")]
    NotOrthogonal(f64),
    #[error("invalid family parameter: {0}")]
    BadParameter(String),
    #[error("switch requires μ ≥ δ, got μ = {mu}, δ = {delta}")]
    PreconditionViolated { mu: f64, delta: f64 },
    #[error("no critical points other than the target were found; refine the grid")]
    NoCriticalPointsFound,
}

/// An indexed family of potentials `V_q : ℳ → ℝ≥0` with closed-form gradients.
///
/// Modes are numbered from 1. Gradients are taken in the ambient space of the
/// embedding; [`PotentialFamily::tangent_grad`] projects them onto `T_pℳ`.
pub trait PotentialFamily: Send + Sync {
    fn modes(&self) -> usize;

    fn manifold(&self) -> &Manifold;

    fn target(&self) -> &[f64];

    fn delta(&self) -> f64;

    fn eval(&self, q: usize, p: &[f64]) -> f64;

    fn grad(&self, q: usize, p: &[f64], g: &mut [f64]);

    fn tangent_grad(&self, q: usize, p: &[f64], g: &mut [f64]) {
        self.grad(q, p, g);
        self.manifold().tangent_project(p, g);
    }

    /// Sample points of a line factor are drawn from `target ± line_span`.
    fn line_span(&self) -> f64 {
        4.0
    }
}

/// A point of `ℳ × 𝒬`.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeState {
    pub p: Vec<f64>,
    pub q: usize,
}

/// Smallest minimizing mode and its value.
pub fn min_mode(fam: &(impl PotentialFamily + ?Sized), p: &[f64]) -> (usize, f64) {
    let mut best = (1, fam.eval(1, p));
    for q in 2..=fam.modes() {
        let v = fam.eval(q, p);
        if v < best.1 {
            best = (q, v);
        }
    }
    best
}

/// `μ(p, q) = V_q(p) − min_q̃ V_q̃(p)`.
pub fn synergy_mu(fam: &(impl PotentialFamily + ?Sized), p: &[f64], q: usize) -> f64 {
    let v = fam.eval(q, p);
    let (_, vmin) = min_mode(fam, p);
    (v - vmin).max(0.0)
}

/// Switch `q` to the smallest minimizing mode, leaving `p` unchanged.
pub fn switch_jump(
    fam: &(impl PotentialFamily + ?Sized),
    x: &CompositeState,
    tol: f64,
) -> Result<CompositeState, SynergyError> {
    let mu = synergy_mu(fam, &x.p, x.q);
    if mu < fam.delta() - tol {
        return Err(SynergyError::PreconditionViolated {
            mu,
            delta: fam.delta(),
        });
    }
    Ok(CompositeState {
        p: x.p.clone(),
        q: min_mode(fam, &x.p).0,
    })
}

/// Central finite-difference gradient in the ambient space (test oracle).
pub fn fd_grad(fam: &(impl PotentialFamily + ?Sized), q: usize, p: &[f64], h: f64) -> Vec<f64> {
    let mut y = p.to_vec();
    (0..p.len())
        .map(|i| {
            y[i] = p[i] + h;
            let fp = fam.eval(q, &y);
            y[i] = p[i] - h;
            let fm = fam.eval(q, &y);
            y[i] = p[i];
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

pub(crate) fn check_delta(delta: f64, hi: f64, range: &'static str) -> Result<(), SynergyError> {
    if delta > 0.0 && delta < hi {
        Ok(())
    } else {
        Err(SynergyError::BadDelta { delta, range })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Manifold;

    /// Constant-valued modes on the circle, for arithmetic checks.
    struct Table {
        values: Vec<f64>,
        manifold: Manifold,
    }

    impl PotentialFamily for Table {
        fn modes(&self) -> usize {
            self.values.len()
        }
        fn manifold(&self) -> &Manifold {
            &self.manifold
        }
        fn target(&self) -> &[f64] {
            &[0.0, 1.0]
        }
        fn delta(&self) -> f64 {
            0.25
        }
        fn eval(&self, q: usize, _p: &[f64]) -> f64 {
            self.values[q - 1]
        }
        fn grad(&self, _q: usize, _p: &[f64], g: &mut [f64]) {
            g.fill(0.0);
        }
    }

    fn table(values: &[f64]) -> Table {
        Table {
            values: values.to_vec(),
            manifold: Manifold::circle(),
        }
    }

    #[test]
    fn mu_arithmetic() {
        let fam = table(&[0.6, 0.2]);
        assert!((synergy_mu(&fam, &[1.0, 0.0], 1) - 0.4).abs() < 1e-15);
        assert_eq!(synergy_mu(&fam, &[1.0, 0.0], 2), 0.0);
    }

    #[test]
    fn switch_picks_argmin() {
        let fam = table(&[0.9, 0.1]);
        let x = CompositeState {
            p: vec![1.0, 0.0],
            q: 1,
        };
        let y = switch_jump(&fam, &x, 0.0).unwrap();
        assert_eq!(y.q, 2);
        assert_eq!(y.p, x.p);
        assert!(fam.eval(1, &x.p) - fam.eval(2, &y.p) >= fam.delta());
        assert_eq!(synergy_mu(&fam, &y.p, y.q), 0.0);
    }

    #[test]
    fn switch_on_tie_is_rejected() {
        let fam = table(&[0.5, 0.5]);
        let x = CompositeState {
            p: vec![1.0, 0.0],
            q: 2,
        };
        assert!(matches!(
            switch_jump(&fam, &x, 1e-9),
            Err(SynergyError::PreconditionViolated { .. })
        ));
        // Ties resolve to the smallest index.
        assert_eq!(min_mode(&fam, &x.p).0, 1);
    }
}
