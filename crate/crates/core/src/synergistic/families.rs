//! The four concrete families: circle, sphere, rotations and the log-polar
//! obstacle coordinates. Each mode is a warped copy `W ∘ Φ_q` of one base
//! potential, with `Φ_q(p) = exp(c_q W(p) K) p` for a fixed skew generator `K`.
//! A family with the single coefficient `c = 0` is the plain, unwarped `W`.

use nalgebra::{Matrix3, Vector2, Vector3};

use super::{check_delta, PotentialFamily, SynergyError};
use crate::geometry::{self, planar_rot, planar_skew, rot_exp, skew, Manifold};

fn check_unit(v: &[f64], name: &str) -> Result<(), SynergyError> {
    let n = geometry::norm(v);
    if (n - 1.0).abs() > 1e-9 {
        return Err(SynergyError::BadParameter(format!(
            "{name} must be a unit vector (norm {n})"
        )));
    }
    Ok(())
}

/// `W_q(p) = 1 − ⟨ϑ⋆, exp(c_q W(p) S) p⟩` on `S¹`, `c_q = 3/2 − q`.
#[derive(Debug, Clone)]
pub struct CircleFamily {
    target: [f64; 2],
    coeffs: Vec<f64>,
    delta: f64,
    manifold: Manifold,
}

impl CircleFamily {
    pub fn new(theta_star: [f64; 2], delta: f64) -> Result<Self, SynergyError> {
        check_delta(delta, 1.0, "(0, 1)")?;
        check_unit(&theta_star, "theta_star")?;
        Ok(Self::with_coeffs(theta_star, vec![0.5, -0.5], delta))
    }

    /// The single potential `W(p) = 1 − ⟨ϑ⋆, p⟩`, which never switches.
    pub fn unwarped(theta_star: [f64; 2]) -> Result<Self, SynergyError> {
        check_unit(&theta_star, "theta_star")?;
        Ok(Self::with_coeffs(theta_star, vec![0.0], 1.0))
    }

    fn with_coeffs(target: [f64; 2], coeffs: Vec<f64>, delta: f64) -> Self {
        Self {
            target,
            coeffs,
            delta,
            manifold: Manifold::circle(),
        }
    }

    /// Replace `δ` without range checks (used to test out-of-range values).
    pub fn with_delta_unchecked(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    /// Unwarped base potential `W(p) = 1 − ⟨ϑ⋆, p⟩`.
    pub fn base(&self, p: &[f64]) -> f64 {
        1.0 - self.target[0] * p[0] - self.target[1] * p[1]
    }

    fn warp(&self, q: usize, p: &[f64]) -> (f64, nalgebra::Matrix2<f64>) {
        let c = self.coeffs[q - 1];
        (c, planar_rot(c * self.base(p)))
    }
}

impl PotentialFamily for CircleFamily {
    fn modes(&self) -> usize {
        self.coeffs.len()
    }

    fn manifold(&self) -> &Manifold {
        &self.manifold
    }

    fn target(&self) -> &[f64] {
        &self.target
    }

    fn delta(&self) -> f64 {
        self.delta
    }

    fn eval(&self, q: usize, p: &[f64]) -> f64 {
        let (_, r) = self.warp(q, p);
        let phi = r * Vector2::new(p[0], p[1]);
        1.0 - Vector2::from(self.target).dot(&phi)
    }

    fn grad(&self, q: usize, p: &[f64], g: &mut [f64]) {
        // DΦ = R + c S R p ∇Wᵀ with ∇W = −ϑ⋆, hence
        // ∇W_q = DΦᵀ(−ϑ⋆) = −Rᵀϑ⋆ + c ⟨S R p, ϑ⋆⟩ ϑ⋆.
        let (c, r) = self.warp(q, p);
        let t = Vector2::from(self.target);
        let rp = r * Vector2::new(p[0], p[1]);
        let out = -r.transpose() * t + t * (c * (planar_skew() * rp).dot(&t));
        g.copy_from_slice(out.as_slice());
    }
}

/// `V_q(p) = 1 − ⟨p⋆, exp(c_q W(p) [p⋆_⊥]×) p⟩` on `S²`, `c_q = 3/2 − q`.
#[derive(Debug, Clone)]
pub struct SphereFamily {
    target: [f64; 3],
    axis: Vector3<f64>,
    coeffs: Vec<f64>,
    delta: f64,
    manifold: Manifold,
}

impl SphereFamily {
    pub fn new(p_star: [f64; 3], p_perp: [f64; 3], delta: f64) -> Result<Self, SynergyError> {
        check_delta(delta, 1.0, "(0, 1)")?;
        Self::build(p_star, p_perp, vec![0.5, -0.5], delta)
    }

    pub fn unwarped(p_star: [f64; 3]) -> Result<Self, SynergyError> {
        check_unit(&p_star, "p_star")?;
        let perp = if p_star[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
        let s = Vector3::from(p_star);
        let perp = (Vector3::from(perp) - s * s.dot(&Vector3::from(perp))).normalize();
        Self::build(p_star, perp.into(), vec![0.0], 1.0)
    }

    fn build(
        p_star: [f64; 3],
        p_perp: [f64; 3],
        coeffs: Vec<f64>,
        delta: f64,
    ) -> Result<Self, SynergyError> {
        check_unit(&p_star, "p_star")?;
        check_unit(&p_perp, "p_perp")?;
        let ip = geometry::dot(&p_star, &p_perp);
        if ip.abs() > 1e-10 {
            return Err(SynergyError::NotOrthogonal(ip));
        }
        Ok(Self {
            target: p_star,
            axis: Vector3::from(p_perp),
            coeffs,
            delta,
            manifold: Manifold::sphere(),
        })
    }

    pub fn with_delta_unchecked(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    pub fn base(&self, p: &[f64]) -> f64 {
        1.0 - geometry::dot(&self.target, &p[..3])
    }
}

impl PotentialFamily for SphereFamily {
    fn modes(&self) -> usize {
        self.coeffs.len()
    }

    fn manifold(&self) -> &Manifold {
        &self.manifold
    }

    fn target(&self) -> &[f64] {
        &self.target
    }

    fn delta(&self) -> f64 {
        self.delta
    }

    fn eval(&self, q: usize, p: &[f64]) -> f64 {
        let c = self.coeffs[q - 1];
        let r = rot_exp(&self.axis, c * self.base(p));
        1.0 - Vector3::from(self.target).dot(&(r * Vector3::new(p[0], p[1], p[2])))
    }

    fn grad(&self, q: usize, p: &[f64], g: &mut [f64]) {
        let c = self.coeffs[q - 1];
        let r = rot_exp(&self.axis, c * self.base(p));
        let t = Vector3::from(self.target);
        let rp = r * Vector3::new(p[0], p[1], p[2]);
        let out = -r.transpose() * t + t * (c * (skew(&self.axis) * rp).dot(&t));
        g.copy_from_slice(out.as_slice());
    }
}

/// `Ṽ_q(R) = W(exp(c_q W(R) [ω]×) R)` with `W(R) = tr(A(I − R))`,
/// `c_q = (3 − 2q)/4`, on the column-stacked embedding of `SO(3)`.
#[derive(Debug, Clone)]
pub struct So3Family {
    a: Matrix3<f64>,
    omega: Vector3<f64>,
    coeffs: Vec<f64>,
    delta: f64,
    target: [f64; 9],
    manifold: Manifold,
}

impl So3Family {
    /// `A = 3 diag(ω̃) / Σ ω̃_i` and `ω = ω̃ / ‖ω̃‖`.
    pub fn new(omega_tilde: [f64; 3], delta: f64) -> Result<Self, SynergyError> {
        check_delta(delta, 0.5, "(0, 1/2)")?;
        Self::build(omega_tilde, vec![0.25, -0.25], delta)
    }

    pub fn unwarped(omega_tilde: [f64; 3]) -> Result<Self, SynergyError> {
        Self::build(omega_tilde, vec![0.0], 1.0)
    }

    fn build(omega_tilde: [f64; 3], coeffs: Vec<f64>, delta: f64) -> Result<Self, SynergyError> {
        if omega_tilde.iter().any(|&w| !(w > 0.0)) {
            return Err(SynergyError::BadParameter(
                "omega_tilde must be componentwise positive".into(),
            ));
        }
        let w = Vector3::from(omega_tilde);
        let a = Matrix3::from_diagonal(&(w * (3.0 / w.sum())));
        Ok(Self {
            a,
            omega: w.normalize(),
            coeffs,
            delta,
            target: geometry::vec(&Matrix3::identity()),
            manifold: Manifold::rotations(),
        })
    }

    pub fn with_delta_unchecked(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    pub fn a_matrix(&self) -> &Matrix3<f64> {
        &self.a
    }

    pub fn axis(&self) -> &Vector3<f64> {
        &self.omega
    }

    /// `W(R) = tr(A(I − R))`.
    pub fn base(&self, p: &[f64]) -> f64 {
        let r = geometry::unvec_unchecked(p);
        self.a.trace() - (self.a * r).trace()
    }
}

impl PotentialFamily for So3Family {
    fn modes(&self) -> usize {
        self.coeffs.len()
    }

    fn manifold(&self) -> &Manifold {
        &self.manifold
    }

    fn target(&self) -> &[f64] {
        &self.target
    }

    fn delta(&self) -> f64 {
        self.delta
    }

    fn eval(&self, q: usize, p: &[f64]) -> f64 {
        let c = self.coeffs[q - 1];
        let r = geometry::unvec_unchecked(p);
        let e = rot_exp(&self.omega, c * self.base(p));
        self.a.trace() - (self.a * e * r).trace()
    }

    fn grad(&self, q: usize, p: &[f64], g: &mut [f64]) {
        // With E = exp(c W(R) [ω]×):
        // dṼ = −tr(A E dR) − c dW tr(A [ω]× E R),  dW = −tr(A dR),
        // so the Frobenius gradient is −EᵀA + c tr(A [ω]× E R) A.
        let c = self.coeffs[q - 1];
        let r = geometry::unvec_unchecked(p);
        let e = rot_exp(&self.omega, c * self.base(p));
        let k = skew(&self.omega);
        let out = -e.transpose() * self.a + self.a * (c * (self.a * k * e * r).trace());
        g.copy_from_slice(out.as_slice());
    }
}

/// `V_q(ρ, ϑ) = ½(ρ − ρ⋆)² + √((e^ρ − e^ρ⋆)² + 1) − 1 + W_q(ϑ)` on `ℝ × S¹`.
#[derive(Debug, Clone)]
pub struct ObstacleFamily {
    rho_star: f64,
    circle: CircleFamily,
    target: [f64; 3],
    manifold: Manifold,
}

impl ObstacleFamily {
    pub fn new(rho_star: f64, theta_star: [f64; 2], delta: f64) -> Result<Self, SynergyError> {
        Self::build(rho_star, CircleFamily::new(theta_star, delta)?)
    }

    pub fn unwarped(rho_star: f64, theta_star: [f64; 2]) -> Result<Self, SynergyError> {
        Self::build(rho_star, CircleFamily::unwarped(theta_star)?)
    }

    fn build(rho_star: f64, circle: CircleFamily) -> Result<Self, SynergyError> {
        if !rho_star.is_finite() {
            return Err(SynergyError::BadParameter("rho_star must be finite".into()));
        }
        let t = circle.target;
        Ok(Self {
            rho_star,
            circle,
            target: [rho_star, t[0], t[1]],
            manifold: Manifold::polar(),
        })
    }

    pub fn with_delta_unchecked(mut self, delta: f64) -> Self {
        self.circle.delta = delta;
        self
    }

    pub fn circle(&self) -> &CircleFamily {
        &self.circle
    }

    /// The mode-independent radial part.
    pub fn radial(&self, rho: f64) -> f64 {
        let d = rho.exp() - self.rho_star.exp();
        0.5 * (rho - self.rho_star).powi(2) + (d * d + 1.0).sqrt() - 1.0
    }

    pub fn radial_derivative(&self, rho: f64) -> f64 {
        let e = rho.exp();
        let d = e - self.rho_star.exp();
        (rho - self.rho_star) + d * e / (d * d + 1.0).sqrt()
    }
}

impl PotentialFamily for ObstacleFamily {
    fn modes(&self) -> usize {
        self.circle.modes()
    }

    fn manifold(&self) -> &Manifold {
        &self.manifold
    }

    fn target(&self) -> &[f64] {
        &self.target
    }

    fn delta(&self) -> f64 {
        self.circle.delta
    }

    fn eval(&self, q: usize, p: &[f64]) -> f64 {
        self.radial(p[0]) + self.circle.eval(q, &p[1..3])
    }

    fn grad(&self, q: usize, p: &[f64], g: &mut [f64]) {
        g[0] = self.radial_derivative(p[0]);
        self.circle.grad(q, &p[1..3], &mut g[1..3]);
    }

    fn line_span(&self) -> f64 {
        5.0
    }
}
