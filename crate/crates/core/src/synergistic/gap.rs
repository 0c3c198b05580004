//! Numerical estimate of the synergy gap
//! `Δ⋆ = min { V_q(p) − min_q̃ V_q̃(p) : q ∈ 𝒬, p ∈ Crit(V_q) ∖ {p⋆} }`.
//!
//! Critical points are located by Newton's method on the tangent-space
//! gradient, started from every point of a grid. Newton converges to maxima
//! and saddles as well as minima, which the gap needs.

use nalgebra::{DMatrix, DVector};

use super::{min_mode, PotentialFamily, SynergyError};
use crate::geometry::{dot, norm, Factor, Manifold};
use crate::par_map;

#[derive(Debug, Clone, PartialEq)]
pub struct GapOptions {
    /// Approximate number of grid points on the manifold.
    pub samples: usize,
    /// Tangent-gradient norm below which a point counts as critical.
    pub grad_tol: f64,
    /// Critical points closer than this are merged.
    pub dedupe_radius: f64,
    pub max_iter: usize,
    /// Step of the finite-difference Hessian.
    pub fd_step: f64,
}

impl Default for GapOptions {
    fn default() -> Self {
        Self {
            samples: 100_000,
            grad_tol: 1e-8,
            dedupe_radius: 1e-3,
            max_iter: 60,
            fd_step: 1e-5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriticalPoint {
    pub q: usize,
    pub p: Vec<f64>,
    pub value: f64,
    /// `V_q(p) − min_q̃ V_q̃(p)`.
    pub mu: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapReport {
    pub gap: f64,
    pub delta: f64,
    /// Critical points away from the target, over all modes.
    pub critical_points: Vec<CriticalPoint>,
}

impl GapReport {
    pub fn passes(&self) -> bool {
        self.delta < self.gap
    }
}

fn factor_grid(f: Factor, n: usize, center: &[f64], span: f64) -> Vec<Vec<f64>> {
    use std::f64::consts::PI;
    let golden = PI * (3.0 - 5f64.sqrt());
    match f {
        Factor::Line => (0..n)
            .map(|k| vec![center[0] - span + 2.0 * span * (k as f64 + 0.5) / n as f64])
            .collect(),
        Factor::Circle => (0..n)
            .map(|k| {
                let a = 2.0 * PI * (k as f64 + 0.5) / n as f64;
                vec![a.cos(), a.sin()]
            })
            .collect(),
        Factor::Sphere => (0..n)
            .map(|k| {
                let z = 1.0 - 2.0 * (k as f64 + 0.5) / n as f64;
                let s = (1.0 - z * z).sqrt();
                let phi = golden * k as f64;
                vec![s * phi.cos(), s * phi.sin(), z]
            })
            .collect(),
        Factor::Rotations => {
            // Axis-angle grid: a Fibonacci lattice of axes on the upper
            // hemisphere times angles in (0, π], which covers SO(3) once.
            let angles = (n as f64).cbrt().ceil() as usize;
            let axes = n.div_ceil(angles);
            let mut out = Vec::with_capacity(axes * angles);
            for k in 0..axes {
                let z = 1.0 - (k as f64 + 0.5) / axes as f64;
                let s = (1.0 - z * z).sqrt();
                let phi = golden * k as f64;
                let w = nalgebra::Vector3::new(s * phi.cos(), s * phi.sin(), z);
                for m in 0..angles {
                    let a = PI * (m as f64 + 0.5) / angles as f64;
                    out.push(crate::geometry::vec(&crate::geometry::rot_exp(&w, a)).to_vec());
                }
            }
            out
        }
    }
}

/// Product grid with roughly `samples` points, split across factors in
/// proportion to their intrinsic dimension.
pub fn manifold_grid(m: &Manifold, samples: usize, center: &[f64], span: f64) -> Vec<Vec<f64>> {
    let total = m.tangent_dim() as f64;
    let mut grid = vec![Vec::new()];
    let mut off = 0;
    for &f in m.factors() {
        let n = (samples as f64).powf(f.tangent_dim() as f64 / total).ceil() as usize;
        let pts = factor_grid(f, n.max(2), &center[off..off + f.dim()], span);
        grid = grid
            .iter()
            .flat_map(|head: &Vec<f64>| {
                pts.iter().map(move |tail| {
                    let mut v = head.clone();
                    v.extend_from_slice(tail);
                    v
                })
            })
            .collect();
        off += f.dim();
    }
    grid
}

fn tangent_coords(
    fam: &(impl PotentialFamily + ?Sized),
    q: usize,
    p: &[f64],
    basis: &[Vec<f64>],
    scratch: &mut [f64],
) -> DVector<f64> {
    fam.tangent_grad(q, p, scratch);
    DVector::from_iterator(basis.len(), basis.iter().map(|b| dot(b, scratch)))
}

/// Newton iteration for a zero of the tangent gradient, from `p0`.
fn newton(
    fam: &(impl PotentialFamily + ?Sized),
    q: usize,
    p0: &[f64],
    opts: &GapOptions,
) -> Option<Vec<f64>> {
    let m = fam.manifold();
    let k = m.tangent_dim();
    let mut p = p0.to_vec();
    let mut scratch = vec![0.0; p.len()];
    let h = opts.fd_step;
    for _ in 0..opts.max_iter {
        let basis = m.tangent_basis(&p);
        let g = tangent_coords(fam, q, &p, &basis, &mut scratch);
        if !g.iter().all(|v| v.is_finite()) {
            return None;
        }
        if g.norm() < opts.grad_tol {
            return Some(p);
        }
        let mut hess = DMatrix::zeros(k, k);
        for (j, b) in basis.iter().enumerate() {
            let step: Vec<f64> = b.iter().map(|v| v * h).collect();
            let neg: Vec<f64> = step.iter().map(|v| -v).collect();
            let gp = tangent_coords(fam, q, &m.retract(&p, &step), &basis, &mut scratch);
            let gm = tangent_coords(fam, q, &m.retract(&p, &neg), &basis, &mut scratch);
            hess.set_column(j, &((gp - gm) / (2.0 * h)));
        }
        let sym = (&hess + hess.transpose()) * 0.5;
        let eig = sym.symmetric_eigen();
        let scale = eig.eigenvalues.amax().max(1e-300);
        let mut delta = DVector::zeros(k);
        for i in 0..k {
            let lam = eig.eigenvalues[i];
            if lam.abs() > 1e-10 * scale {
                let v = eig.eigenvectors.column(i);
                delta -= v * (v.dot(&g) / lam);
            }
        }
        let len = delta.norm();
        if !len.is_finite() {
            return None;
        }
        if len > 0.5 {
            delta *= 0.5 / len;
        }
        let mut step = vec![0.0; p.len()];
        for (i, b) in basis.iter().enumerate() {
            step.iter_mut().zip(b).for_each(|(s, bi)| *s += delta[i] * bi);
        }
        p = m.retract(&p, &step);
        if p.iter().any(|v| !v.is_finite()) {
            return None;
        }
    }
    let basis = m.tangent_basis(&p);
    (tangent_coords(fam, q, &p, &basis, &mut scratch).norm() < opts.grad_tol).then_some(p)
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Deduplicated critical points of mode `q`, target included if found.
pub fn find_critical_points(
    fam: &(impl PotentialFamily + ?Sized),
    q: usize,
    opts: &GapOptions,
) -> Vec<Vec<f64>> {
    let grid = manifold_grid(fam.manifold(), opts.samples, fam.target(), fam.line_span());
    let found = par_map(&grid, |p0| newton(fam, q, p0, opts));
    let mut unique: Vec<Vec<f64>> = Vec::new();
    for p in found.into_iter().flatten() {
        if unique.iter().all(|u| dist(u, &p) > opts.dedupe_radius) {
            unique.push(p);
        }
    }
    unique
}

/// Estimate `Δ⋆` from the critical points of every mode.
pub fn estimate_synergy_gap(
    fam: &(impl PotentialFamily + ?Sized),
    opts: &GapOptions,
) -> Result<GapReport, SynergyError> {
    let mut crit = Vec::new();
    for q in 1..=fam.modes() {
        for p in find_critical_points(fam, q, opts) {
            if dist(&p, fam.target()) <= opts.dedupe_radius {
                continue;
            }
            let value = fam.eval(q, &p);
            let mu = value - min_mode(fam, &p).1;
            crit.push(CriticalPoint { q, p, value, mu });
        }
    }
    if crit.is_empty() {
        return Err(SynergyError::NoCriticalPointsFound);
    }
    let gap = crit.iter().map(|c| c.mu).fold(f64::INFINITY, f64::min);
    Ok(GapReport {
        gap,
        delta: fam.delta(),
        critical_points: crit,
    })
}

/// Norm of the tangent gradient (convenience for callers checking criticality).
pub fn tangent_grad_norm(fam: &(impl PotentialFamily + ?Sized), q: usize, p: &[f64]) -> f64 {
    let mut g = vec![0.0; p.len()];
    fam.tangent_grad(q, p, &mut g);
    norm(&g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synergistic::{CircleFamily, SphereFamily};

    #[test]
    fn grid_sizes() {
        assert_eq!(manifold_grid(&Manifold::circle(), 1000, &[0.0, 1.0], 1.0).len(), 1000);
        let polar = manifold_grid(&Manifold::polar(), 10_000, &[0.0, 0.0, 1.0], 4.0);
        assert_eq!(polar.len(), 10_000);
        assert!(manifold_grid(&Manifold::rotations(), 1000, &[0.0; 9], 1.0).len() >= 1000);
    }

    #[test]
    fn circle_gap_is_large() {
        let fam = CircleFamily::new([0.0, 1.0], 0.25).unwrap();
        let opts = GapOptions {
            samples: 2000,
            ..Default::default()
        };
        let rep = estimate_synergy_gap(&fam, &opts).unwrap();
        assert!(rep.gap >= 0.99, "gap {}", rep.gap);
        assert!(rep.passes());
        for c in &rep.critical_points {
            assert!(tangent_grad_norm(&fam, c.q, &c.p) < 1e-8);
        }
    }

    #[test]
    fn duplicated_potential_has_zero_gap() {
        let fam = SphereFamily::unwarped([0.0, 0.0, 1.0]).unwrap();
        // A single mode is trivially "duplicated": every critical point is a
        // minimum over the family.
        let rep = estimate_synergy_gap(
            &fam,
            &GapOptions {
                samples: 500,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(rep.gap, 0.0);
        assert_eq!(rep.critical_points.len(), 1);
        assert!(dist(&rep.critical_points[0].p, &[0.0, 0.0, -1.0]) < 1e-6);
    }
}
