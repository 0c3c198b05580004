//! Embedded manifolds and the maps between them.
//!
//! Points of `S¹`, `S²` and `SO(3)` are stored as plain ambient vectors (`ℝ²`,
//! `ℝ³`, column-stacked `ℝ⁹`). Products of these factors, plus a real line,
//! describe every state space used by the scenarios.

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("matrix is not a rotation (orthogonality defect {defect:.3e}, det {det:.6})")]
    NotARotation { defect: f64, det: f64 },
    #[error("point is inside the obstacle margin: |z - z_O| = {dist} <= {margin}")]
    InsideObstacleMargin { dist: f64, margin: f64 },
    #[error("point is {dist:.3e} away from the manifold (limit 0.1)")]
    TooFarFromManifold { dist: f64 },
    #[error("expected {expected} coordinates, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Standard planar skew matrix `S = [[0, 1], [-1, 0]]`.
pub fn planar_skew() -> Matrix2<f64> {
    Matrix2::new(0.0, 1.0, -1.0, 0.0)
}

/// `exp(a S) = [[cos a, sin a], [-sin a, cos a]]`.
pub fn planar_rot(angle: f64) -> Matrix2<f64> {
    let (s, c) = angle.sin_cos();
    Matrix2::new(c, s, -s, c)
}

/// `[x]×`, so that `skew(x) * y = x × y`.
pub fn skew(x: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -x.z, x.y, x.z, 0.0, -x.x, -x.y, x.x, 0.0)
}

/// Rodrigues' formula for a rotation by `angle` about the unit `axis`.
pub fn rot_exp(axis: &Vector3<f64>, angle: f64) -> Matrix3<f64> {
    let k = skew(axis);
    let (s, c) = angle.sin_cos();
    Matrix3::identity() + k * s + k * k * (1.0 - c)
}

/// `‖RᵀR − I‖_F`.
pub fn orthogonality_defect(r: &Matrix3<f64>) -> f64 {
    (r.transpose() * r - Matrix3::identity()).norm()
}

/// Column-stacking vectorization. Entry `3c + r` holds `R[(r, c)]`.
pub fn vec(r: &Matrix3<f64>) -> [f64; 9] {
    let mut out = [0.0; 9];
    out.copy_from_slice(r.as_slice());
    out
}

/// Inverse of [`vec`] without any validation.
pub fn unvec_unchecked(p: &[f64]) -> Matrix3<f64> {
    Matrix3::from_column_slice(&p[..9])
}

/// Inverse of [`vec`]; fails unless the result is a rotation to within 1e-6.
pub fn unvec(p: &[f64]) -> Result<Matrix3<f64>, GeometryError> {
    if p.len() != 9 {
        return Err(GeometryError::DimensionMismatch {
            expected: 9,
            got: p.len(),
        });
    }
    let r = unvec_unchecked(p);
    let defect = orthogonality_defect(&r);
    let det = r.determinant();
    if defect > 1e-6 || det <= 0.0 {
        return Err(GeometryError::NotARotation { defect, det });
    }
    Ok(r)
}

/// Nearest rotation in Frobenius norm (orthogonal polar factor), or `None`
/// when `m` is singular or orientation-reversing.
pub fn nearest_rotation(m: &Matrix3<f64>) -> Option<Matrix3<f64>> {
    let svd = m.svd(true, true);
    let (u, vt) = (svd.u?, svd.v_t?);
    let r = u * vt;
    (r.determinant() > 0.0 && svd.singular_values.min() > 1e-12).then_some(r)
}

/// Björck orthogonalization, `R ← R (3I − RᵀR) / 2`, for matrices already
/// close to `SO(3)`. Converges quadratically to the polar factor.
pub fn bjorck(r: &mut Matrix3<f64>, iters: usize) {
    for _ in 0..iters {
        *r = *r * (Matrix3::identity() * 3.0 - r.transpose() * *r) * 0.5;
    }
}

/// Log-polar coordinates around a circular obstacle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarPoint {
    pub rho: f64,
    pub theta: Vector2<f64>,
}

/// `φ(z) = (log(|z − z_O| − d⋆), (z − z_O)/|z − z_O|)`.
pub fn obstacle_diffeo(
    z: &Vector2<f64>,
    z_o: &Vector2<f64>,
    d_star: f64,
) -> Result<PolarPoint, GeometryError> {
    let w = z - z_o;
    let r = w.norm();
    if r <= d_star {
        return Err(GeometryError::InsideObstacleMargin {
            dist: r,
            margin: d_star,
        });
    }
    Ok(PolarPoint {
        rho: (r - d_star).ln(),
        theta: w / r,
    })
}

/// `φ⁻¹(ρ, ϑ) = z_O + (d⋆ + e^ρ) ϑ`.
pub fn obstacle_diffeo_inv(p: &PolarPoint, z_o: &Vector2<f64>, d_star: f64) -> Vector2<f64> {
    z_o + p.theta * (d_star + p.rho.exp())
}

/// `Dφ(φ⁻¹(p)) v`, returned as `(ρ̇, ϑ̇)`.
pub fn pushforward_field(
    z_o: &Vector2<f64>,
    d_star: f64,
    p: &PolarPoint,
    v: &Vector2<f64>,
) -> (f64, Vector2<f64>) {
    let _ = z_o;
    let gap = p.rho.exp();
    let r = d_star + gap;
    let w = p.theta;
    let radial = w.dot(v);
    (radial / gap, (v - w * radial) / r)
}

/// Jacobian of `φ` at `z` as a 3×2 matrix with rows `ρ, ϑ₁, ϑ₂`.
pub fn obstacle_jacobian(
    z: &Vector2<f64>,
    z_o: &Vector2<f64>,
    d_star: f64,
) -> Result<nalgebra::Matrix3x2<f64>, GeometryError> {
    let p = obstacle_diffeo(z, z_o, d_star)?;
    let mut j = nalgebra::Matrix3x2::zeros();
    for (col, e) in [Vector2::x(), Vector2::y()].iter().enumerate() {
        let (dr, dt) = pushforward_field(z_o, d_star, &p, e);
        j[(0, col)] = dr;
        j[(1, col)] = dt.x;
        j[(2, col)] = dt.y;
    }
    Ok(j)
}

/// One factor of a product manifold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Factor {
    Line,
    Circle,
    Sphere,
    Rotations,
}

impl Factor {
    pub fn dim(self) -> usize {
        match self {
            Factor::Line => 1,
            Factor::Circle => 2,
            Factor::Sphere => 3,
            Factor::Rotations => 9,
        }
    }

    /// Intrinsic dimension.
    pub fn tangent_dim(self) -> usize {
        match self {
            Factor::Line | Factor::Circle => 1,
            Factor::Sphere => 2,
            Factor::Rotations => 3,
        }
    }

    /// Euclidean distance to the factor, in the ambient space.
    pub fn distance(self, x: &[f64]) -> f64 {
        match self {
            Factor::Line => 0.0,
            Factor::Circle | Factor::Sphere => (norm(x) - 1.0).abs(),
            Factor::Rotations => {
                let m = unvec_unchecked(x);
                nearest_rotation(&m).map_or(f64::INFINITY, |r| (m - r).norm())
            }
        }
    }

    /// Exact nearest-point projection (no distance check).
    fn project_exact(self, x: &mut [f64]) {
        match self {
            Factor::Line => {}
            Factor::Circle | Factor::Sphere => {
                let n = norm(x);
                x.iter_mut().for_each(|v| *v /= n);
            }
            Factor::Rotations => {
                if let Some(r) = nearest_rotation(&unvec_unchecked(x)) {
                    x.copy_from_slice(r.as_slice());
                }
            }
        }
    }

    /// Cheap projection for points that are already very close.
    fn renormalize(self, x: &mut [f64]) {
        match self {
            Factor::Rotations => {
                let mut r = unvec_unchecked(x);
                bjorck(&mut r, 2);
                x.copy_from_slice(r.as_slice());
            }
            _ => self.project_exact(x),
        }
    }

    /// Orthogonal projection of an ambient vector onto `T_x`.
    pub fn tangent_project(self, x: &[f64], v: &mut [f64]) {
        match self {
            Factor::Line => {}
            Factor::Circle | Factor::Sphere => {
                let d = dot(x, v);
                v.iter_mut().zip(x).for_each(|(vi, xi)| *vi -= d * xi);
            }
            Factor::Rotations => {
                let r = unvec_unchecked(x);
                let g = unvec_unchecked(v);
                let a = r.transpose() * g;
                let t = r * (a - a.transpose()) * 0.5;
                v.copy_from_slice(t.as_slice());
            }
        }
    }

    /// Orthonormal basis of `T_x`, in the ambient space.
    pub fn tangent_basis(self, x: &[f64]) -> Vec<Vec<f64>> {
        match self {
            Factor::Line => vec![vec![1.0]],
            Factor::Circle => vec![vec![x[1], -x[0]]],
            Factor::Sphere => {
                let p = Vector3::new(x[0], x[1], x[2]);
                let seed = if p.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
                let a = (seed - p * p.dot(&seed)).normalize();
                let b = p.cross(&a);
                vec![a.as_slice().to_vec(), b.as_slice().to_vec()]
            }
            Factor::Rotations => {
                let r = unvec_unchecked(x);
                (0..3)
                    .map(|i| {
                        let t = r * skew(&Vector3::ith(i, 1.0)) / 2f64.sqrt();
                        t.as_slice().to_vec()
                    })
                    .collect()
            }
        }
    }
}

/// A product of [`Factor`]s, laid out contiguously.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifold {
    factors: Vec<Factor>,
}

impl Manifold {
    pub fn new(factors: Vec<Factor>) -> Self {
        Self { factors }
    }

    pub fn circle() -> Self {
        Self::new(vec![Factor::Circle])
    }

    pub fn sphere() -> Self {
        Self::new(vec![Factor::Sphere])
    }

    pub fn rotations() -> Self {
        Self::new(vec![Factor::Rotations])
    }

    /// `ℝ × S¹`, the log-polar obstacle coordinates.
    pub fn polar() -> Self {
        Self::new(vec![Factor::Line, Factor::Circle])
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn dim(&self) -> usize {
        self.factors.iter().map(|f| f.dim()).sum()
    }

    pub fn tangent_dim(&self) -> usize {
        self.factors.iter().map(|f| f.tangent_dim()).sum()
    }

    fn check_len(&self, n: usize) -> Result<(), GeometryError> {
        if n != self.dim() {
            return Err(GeometryError::DimensionMismatch {
                expected: self.dim(),
                got: n,
            });
        }
        Ok(())
    }

    fn for_each_factor(&self, mut f: impl FnMut(Factor, std::ops::Range<usize>)) {
        let mut off = 0;
        for &fac in &self.factors {
            f(fac, off..off + fac.dim());
            off += fac.dim();
        }
    }

    /// Ambient distance to the manifold.
    pub fn distance(&self, x: &[f64]) -> f64 {
        let mut d2 = 0.0;
        self.for_each_factor(|f, r| d2 += f.distance(&x[r]).powi(2));
        d2.sqrt()
    }

    /// Nearest-point projection of a point within 0.1 of the manifold.
    pub fn project(&self, x: &mut [f64]) -> Result<(), GeometryError> {
        self.check_len(x.len())?;
        let dist = self.distance(x);
        if !(dist <= 0.1) {
            return Err(GeometryError::TooFarFromManifold { dist });
        }
        self.for_each_factor(|f, r| f.project_exact(&mut x[r]));
        Ok(())
    }

    /// Per-step projection used by the solver; assumes a small drift.
    pub fn renormalize(&self, x: &mut [f64]) {
        self.for_each_factor(|f, r| f.renormalize(&mut x[r]));
    }

    pub fn tangent_project(&self, x: &[f64], v: &mut [f64]) {
        self.for_each_factor(|f, r| f.tangent_project(&x[r.clone()], &mut v[r]));
    }

    /// Orthonormal tangent basis, each vector padded to the full ambient dimension.
    pub fn tangent_basis(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let n = self.dim();
        let mut out = Vec::new();
        self.for_each_factor(|f, r| {
            for b in f.tangent_basis(&x[r.clone()]) {
                let mut v = vec![0.0; n];
                v[r.clone()].copy_from_slice(&b);
                out.push(v);
            }
        });
        out
    }

    /// Move from `x` along tangent vector `v` and land back on the manifold.
    /// Rotations use the exponential map, other factors project.
    pub fn retract(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        let mut y: Vec<f64> = x.iter().zip(v).map(|(a, b)| a + b).collect();
        self.for_each_factor(|f, r| match f {
            Factor::Rotations => {
                let rot = unvec_unchecked(&x[r.clone()]);
                let a = rot.transpose() * unvec_unchecked(&v[r.clone()]);
                let w = Vector3::new(a[(2, 1)] - a[(1, 2)], a[(0, 2)] - a[(2, 0)], a[(1, 0)] - a[(0, 1)]) * 0.5;
                let angle = w.norm();
                let step = if angle > 0.0 { rot_exp(&(w / angle), angle) } else { Matrix3::identity() };
                y[r].copy_from_slice((rot * step).as_slice());
            }
            _ => f.project_exact(&mut y[r]),
        });
        y
    }
}

/// Project a point of the given factor kind onto it.
pub fn project_to_manifold(kind: Factor, x: &mut [f64]) -> Result<(), GeometryError> {
    Manifold::new(vec![kind]).project(x)
}

/// Sphere control fields `b_i(p) = e_i − ⟨p, e_i⟩ p`.
pub fn sphere_field(p: &[f64], i: usize) -> [f64; 3] {
    let mut b = [-p[i] * p[0], -p[i] * p[1], -p[i] * p[2]];
    b[i] += 1.0;
    b
}

/// Circle control field `b(p) = S p`.
pub fn circle_field(p: &[f64]) -> [f64; 2] {
    [p[1], -p[0]]
}

/// Rotation control fields `b_i(p) = vec(R ê_i) = −(ê_i ⊗ I) vec(R)`.
pub fn rotation_field(p: &[f64], i: usize) -> [f64; 9] {
    let r = unvec_unchecked(p);
    vec(&(r * skew(&Vector3::ith(i, 1.0))))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn unit3(v: [f64; 3]) -> Vector3<f64> {
        Vector3::from(v).normalize()
    }

    #[test]
    fn planar_rot_examples() {
        assert_eq!(planar_rot(0.0), Matrix2::identity());
        let r = planar_rot(PI / 2.0) * Vector2::x();
        assert_abs_diff_eq!(r, Vector2::new(0.0, -1.0), epsilon = 1e-15);
        assert_abs_diff_eq!(
            (planar_skew() * 0.7).exp(),
            planar_rot(0.7),
            epsilon = 1e-14
        );
    }

    #[test]
    fn skew_examples() {
        assert_eq!(skew(&Vector3::z()) * Vector3::x(), Vector3::y());
        assert_eq!(skew(&Vector3::zeros()), Matrix3::zeros());
    }

    #[test]
    fn rot_exp_examples() {
        assert_eq!(rot_exp(&Vector3::z(), 0.0), Matrix3::identity());
        assert_abs_diff_eq!(
            rot_exp(&Vector3::z(), PI / 2.0) * Vector3::x(),
            Vector3::y(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn vec_of_identity() {
        assert_eq!(
            vec(&Matrix3::identity()),
            [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]
        );
        assert!(unvec(&[1.0; 9]).is_err());
    }

    #[test]
    fn obstacle_examples() {
        let z_o = Vector2::zeros();
        let p = obstacle_diffeo(&Vector2::new(2.0, 0.0), &z_o, 1.0).unwrap();
        assert_abs_diff_eq!(p.rho, 0.0);
        assert_eq!(p.theta, Vector2::x());
        let (dr, dt) = pushforward_field(&z_o, 1.0, &p, &Vector2::x());
        assert_abs_diff_eq!(dr, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(dt.norm(), 0.0);
        let (dr, dt) = pushforward_field(&z_o, 1.0, &p, &Vector2::zeros());
        assert_eq!((dr, dt.norm()), (0.0, 0.0));
        assert!(matches!(
            obstacle_diffeo(&Vector2::new(0.5, 0.0), &z_o, 1.0),
            Err(GeometryError::InsideObstacleMargin { .. })
        ));
    }

    #[test]
    fn projection_examples() {
        let mut u = [0.6, 0.8];
        project_to_manifold(Factor::Circle, &mut u).unwrap();
        assert_eq!(u, [0.6, 0.8]);
        let mut x = [1.05, 0.0];
        project_to_manifold(Factor::Circle, &mut x).unwrap();
        assert_eq!(x, [1.0, 0.0]);
        let mut far = [2.0, 0.0];
        assert!(matches!(
            project_to_manifold(Factor::Circle, &mut far),
            Err(GeometryError::TooFarFromManifold { .. })
        ));
        let mut r = vec(&Matrix3::identity());
        for (k, v) in r.iter_mut().enumerate() {
            *v += 1e-6 * ((k as f64) * 1.7).sin();
        }
        project_to_manifold(Factor::Rotations, &mut r).unwrap();
        assert!(orthogonality_defect(&unvec_unchecked(&r)) <= 1e-12);
    }

    #[test]
    fn bjorck_matches_polar_factor() {
        let r0 = rot_exp(&unit3([1.0, 2.0, 3.0]), 1.1);
        let m = r0 + Matrix3::from_fn(|i, j| 1e-5 * ((i * 3 + j) as f64).cos());
        let mut b = m;
        bjorck(&mut b, 3);
        assert_abs_diff_eq!(b, nearest_rotation(&m).unwrap(), epsilon = 1e-13);
    }

    #[test]
    fn circle_field_is_tangent() {
        for k in 0..100 {
            let a = k as f64 * 0.37;
            let p = [a.cos(), a.sin()];
            assert!(dot(&p, &circle_field(&p)).abs() <= 1e-14);
        }
    }

    #[test]
    fn tangent_bases_are_orthonormal_and_tangent() {
        let r = vec(&rot_exp(&unit3([0.3, -1.0, 0.4]), 2.0));
        let sphere_pt = unit3([0.1, 0.2, -0.9]);
        let m = Manifold::new(vec![
            Factor::Line,
            Factor::Circle,
            Factor::Sphere,
            Factor::Rotations,
        ]);
        let mut x = vec![0.3, 0.6, 0.8];
        x.extend_from_slice(sphere_pt.as_slice());
        x.extend_from_slice(&r);
        let basis = m.tangent_basis(&x);
        assert_eq!(basis.len(), m.tangent_dim());
        for (i, a) in basis.iter().enumerate() {
            let mut t = a.clone();
            m.tangent_project(&x, &mut t);
            assert_abs_diff_eq!(t.as_slice(), a.as_slice(), epsilon = 1e-14);
            for (j, b) in basis.iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(dot(a, b), want, epsilon = 1e-14);
            }
        }
    }

    fn arb_unit3() -> impl Strategy<Value = Vector3<f64>> {
        (-1.0..1.0f64, 0.0..2.0 * PI).prop_map(|(z, phi)| {
            let s = (1.0 - z * z).sqrt();
            Vector3::new(s * phi.cos(), s * phi.sin(), z)
        })
    }

    fn arb_rotation() -> impl Strategy<Value = Matrix3<f64>> {
        (arb_unit3(), -PI..PI).prop_map(|(w, a)| rot_exp(&w, a))
    }

    proptest! {
        #[test]
        fn planar_rot_composes(a in -10.0..10.0f64, b in -10.0..10.0f64) {
            let lhs = planar_rot(a) * planar_rot(b);
            prop_assert!((lhs - planar_rot(a + b)).norm() < 1e-12);
        }

        #[test]
        fn skew_is_antisymmetric(x in prop::array::uniform3(-5.0..5.0f64), y in prop::array::uniform3(-5.0..5.0f64)) {
            let (x, y) = (Vector3::from(x), Vector3::from(y));
            prop_assert!((skew(&x) * y + skew(&y) * x).norm() < 1e-12);
            prop_assert!((skew(&x) * y - x.cross(&y)).norm() < 1e-12);
        }

        #[test]
        fn rot_exp_is_rotation(w in arb_unit3(), a in -10.0..10.0f64) {
            let r = rot_exp(&w, a);
            prop_assert!(orthogonality_defect(&r) <= 1e-8);
            prop_assert!(r.determinant() > 0.0);
            prop_assert!((r * rot_exp(&w, -a) - Matrix3::identity()).norm() < 1e-12);
        }

        #[test]
        fn vec_roundtrip_and_kron_identity(r in arb_rotation()) {
            let p = vec(&r);
            prop_assert_eq!(unvec(&p).unwrap(), r);
            for i in 0..3 {
                let e_hat = skew(&Vector3::ith(i, 1.0));
                // −(ê_i ⊗ I) vec(R), assembled block by block.
                let mut kron = [0.0; 9];
                for row_blk in 0..3 {
                    for col_blk in 0..3 {
                        let c = -e_hat[(row_blk, col_blk)];
                        for k in 0..3 {
                            kron[3 * row_blk + k] += c * p[3 * col_blk + k];
                        }
                    }
                }
                let direct = rotation_field(&p, i);
                for k in 0..9 {
                    prop_assert!((direct[k] - kron[k]).abs() <= 1e-12);
                }
            }
        }

        #[test]
        fn sphere_fields_tangent_and_spanning(p in arb_unit3(), v in prop::array::uniform3(-2.0..2.0f64)) {
            let p = p.as_slice();
            let mut v = v.to_vec();
            Factor::Sphere.tangent_project(p, &mut v);
            let mut sum = 0.0;
            for i in 0..3 {
                let b = sphere_field(p, i);
                prop_assert!(dot(p, &b).abs() <= 1e-12);
                sum += dot(&b, &v).powi(2);
            }
            prop_assert!((sum - dot(&v, &v)).abs() <= 1e-10);
        }

        #[test]
        fn obstacle_roundtrip(r in 1.06..20.0f64, a in 0.0..2.0 * PI, zx in -3.0..3.0f64, zy in -3.0..3.0f64) {
            let z_o = Vector2::new(zx, zy);
            let z = z_o + Vector2::new(a.cos(), a.sin()) * r;
            let p = obstacle_diffeo(&z, &z_o, 1.05).unwrap();
            let back = obstacle_diffeo_inv(&p, &z_o, 1.05);
            prop_assert!((back - z).norm() <= 1e-10 * (1.0 + z.norm()));
        }

        #[test]
        fn obstacle_jacobian_matches_fd(r in 1.2..10.0f64, a in 0.0..2.0 * PI, vx in -1.0..1.0f64, vy in -1.0..1.0f64) {
            let z_o = Vector2::new(0.5, -0.25);
            let z = z_o + Vector2::new(a.cos(), a.sin()) * r;
            let j = obstacle_jacobian(&z, &z_o, 1.05).unwrap();
            let h = 1e-6;
            for (col, e) in [Vector2::x(), Vector2::y()].iter().enumerate() {
                let fp = obstacle_diffeo(&(z + e * h), &z_o, 1.05).unwrap();
                let fm = obstacle_diffeo(&(z - e * h), &z_o, 1.05).unwrap();
                let fd = [
                    (fp.rho - fm.rho) / (2.0 * h),
                    (fp.theta.x - fm.theta.x) / (2.0 * h),
                    (fp.theta.y - fm.theta.y) / (2.0 * h),
                ];
                for row in 0..3 {
                    let exact = j[(row, col)];
                    prop_assert!((exact - fd[row]).abs() <= 1e-5 * exact.abs().max(1.0));
                }
            }
            // Directional derivative along v.
            let v = Vector2::new(vx, vy);
            let p = obstacle_diffeo(&z, &z_o, 1.05).unwrap();
            let (dr, dt) = pushforward_field(&z_o, 1.05, &p, &v);
            let fp = obstacle_diffeo(&(z + v * h), &z_o, 1.05).unwrap();
            let fm = obstacle_diffeo(&(z - v * h), &z_o, 1.05).unwrap();
            prop_assert!((dr - (fp.rho - fm.rho) / (2.0 * h)).abs() <= 1e-5 * dr.abs().max(1.0));
            prop_assert!((dt - (fp.theta - fm.theta) / (2.0 * h)).norm() <= 1e-5 * dt.norm().max(1.0));
        }
    }
}
