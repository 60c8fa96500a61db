//! Anthropomorphic 3-DOF arm: base yaw joint on top of a vertical link of
//! length `l1`, then shoulder and elbow joints about a horizontal axis that
//! turns with the base. Links 2 and 3 are uniform thin rods.
//!
//! The dynamics are written in a base-parameter form
//!
//! ```text
//! M(q) = Σⱼ aⱼ Mⱼ(q),   g(q) = Σⱼ aⱼ gⱼ(q)
//! ```
//!
//! with the six parameters
//!
//! | j | parameter                         |
//! |---|-----------------------------------|
//! | 0 | base yaw inertia `I₁`             |
//! | 1 | `m₂l₂²/3 + m₃l₂²`                 |
//! | 2 | `m₃l₂l₃`                          |
//! | 3 | `m₃l₃²/3`                         |
//! | 4 | `g₀(m₂/2 + m₃)l₂`                 |
//! | 5 | `g₀m₃l₃/2`                        |
//!
//! The basis matrices only involve trigonometric functions of `q`, so the
//! regressor `Y_d` never needs a model instance.

use nalgebra::{DVector, Matrix3, Matrix6x3, OMatrix, Vector3, U3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mathkit::skew;

/// Number of dynamic base parameters.
pub const DYN_PARAMS: usize = 6;

/// Dynamic parameter vector reported for the reference simulation this
/// model family was calibrated against. Kept for documentation; its
/// grouping does not match [`ArmModel::dynamic_parameters`].
pub const REFERENCE_DYNAMIC_PARAMETERS: [f64; 8] = [
    8.2688, 2.9925, 1.3538, 0.2578, 10.6250, 1.8050, 46.3050, 13.9650,
];

pub type DynRegressor = OMatrix<f64, U3, nalgebra::Dyn>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointState {
    pub q: Vector3<f64>,
    pub qd: Vector3<f64>,
}

impl JointState {
    pub fn at_rest(q: Vector3<f64>) -> Self {
        Self { q, qd: Vector3::zeros() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmModel {
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
    /// Inertia of everything that turns with joint 1 about the vertical axis, kg·m².
    pub base_yaw_inertia: f64,
    pub m2: f64,
    pub m3: f64,
    /// Gravity magnitude, acting along −Z₀.
    pub gravity: f64,
    /// Feature point offset from the end-effector reference point, expressed
    /// in the end-effector frame.
    pub feature_offset: Vector3<f64>,
}

impl Default for ArmModel {
    fn default() -> Self {
        Self {
            l1: 2.1,
            l2: 2.1,
            l3: 1.9,
            base_yaw_inertia: 1.0,
            m2: 1.5,
            m3: 1.5,
            gravity: 9.81,
            feature_offset: Vector3::zeros(),
        }
    }
}

struct Trig {
    c1: f64,
    s1: f64,
    c2: f64,
    s2: f64,
    c3: f64,
    s3: f64,
    c23: f64,
    s23: f64,
}

impl Trig {
    fn new(q: &Vector3<f64>) -> Self {
        let (s1, c1) = q[0].sin_cos();
        let (s2, c2) = q[1].sin_cos();
        let (s3, c3) = q[2].sin_cos();
        let (s23, c23) = (q[1] + q[2]).sin_cos();
        Self { c1, s1, c2, s2, c3, s3, c23, s23 }
    }
}

impl ArmModel {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("l1", self.l1),
            ("l2", self.l2),
            ("l3", self.l3),
            ("base_yaw_inertia", self.base_yaw_inertia),
            ("m2", self.m2),
            ("m3", self.m3),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("arm.{name} must be positive, got {v}")));
            }
        }
        if !(self.gravity.is_finite() && self.gravity >= 0.0) {
            return Err(Error::Config(format!("arm.gravity must be non-negative, got {}", self.gravity)));
        }
        if !self.feature_offset.iter().all(|v| v.is_finite()) {
            return Err(Error::Config("arm.feature_offset must be finite".into()));
        }
        Ok(())
    }

    /// Position of the end-effector reference point.
    pub fn reference_position(&self, q: &Vector3<f64>) -> Vector3<f64> {
        let t = Trig::new(q);
        let rho = self.l2 * t.c2 + self.l3 * t.c23;
        let h = self.l1 + self.l2 * t.s2 + self.l3 * t.s23;
        Vector3::new(rho * t.c1, rho * t.s1, h)
    }

    /// Orientation of the end-effector frame, `Rz(q₁)·Ry(−(q₂+q₃))`; its
    /// first column points along link 3.
    pub fn end_effector_rotation(&self, q: &Vector3<f64>) -> Matrix3<f64> {
        let t = Trig::new(q);
        Matrix3::new(
            t.c1 * t.c23, -t.s1, -t.c1 * t.s23, //
            t.s1 * t.c23, t.c1, -t.s1 * t.s23, //
            t.s23, 0.0, t.c23,
        )
    }

    /// Feature offset `c` expressed in the base frame at configuration `q`.
    pub fn feature_offset_base(&self, q: &Vector3<f64>) -> Vector3<f64> {
        self.end_effector_rotation(q) * self.feature_offset
    }

    /// Feature point position `r = r₀ + c` in the base frame.
    pub fn feature_position(&self, q: &Vector3<f64>) -> Vector3<f64> {
        self.reference_position(q) + self.feature_offset_base(q)
    }

    /// Manipulator Jacobian mapping `q̇` to `(ṙ₀; ω₀)`.
    pub fn geometric_jacobian(&self, q: &Vector3<f64>) -> Matrix6x3<f64> {
        let t = Trig::new(q);
        let rho = self.l2 * t.c2 + self.l3 * t.c23;
        let rho_2 = -self.l2 * t.s2 - self.l3 * t.s23;
        let h_2 = self.l2 * t.c2 + self.l3 * t.c23;
        let rho_3 = -self.l3 * t.s23;
        let h_3 = self.l3 * t.c23;
        let mut j = Matrix6x3::zeros();
        j.fixed_view_mut::<3, 1>(0, 0)
            .copy_from(&Vector3::new(-rho * t.s1, rho * t.c1, 0.0));
        j.fixed_view_mut::<3, 1>(0, 1)
            .copy_from(&Vector3::new(rho_2 * t.c1, rho_2 * t.s1, h_2));
        j.fixed_view_mut::<3, 1>(0, 2)
            .copy_from(&Vector3::new(rho_3 * t.c1, rho_3 * t.s1, h_3));
        let pitch_axis = Vector3::new(t.s1, -t.c1, 0.0);
        j.fixed_view_mut::<3, 1>(3, 0).copy_from(&Vector3::z());
        j.fixed_view_mut::<3, 1>(3, 1).copy_from(&pitch_axis);
        j.fixed_view_mut::<3, 1>(3, 2).copy_from(&pitch_axis);
        j
    }

    /// `J_f J_r(q)` with `J_f = [I₃, −S(c)]`: maps `q̇` to the feature velocity `ṙ`.
    pub fn feature_jacobian(&self, q: &Vector3<f64>) -> Matrix3<f64> {
        let jr = self.geometric_jacobian(q);
        let c = self.feature_offset_base(q);
        jr.fixed_view::<3, 3>(0, 0) - skew(&c) * jr.fixed_view::<3, 3>(3, 0)
    }

    /// True dynamic parameter vector in the ordering of the module docs.
    pub fn dynamic_parameters(&self) -> DVector<f64> {
        let (l2, l3, m2, m3, g0) = (self.l2, self.l3, self.m2, self.m3, self.gravity);
        DVector::from_vec(vec![
            self.base_yaw_inertia,
            m2 * l2 * l2 / 3.0 + m3 * l2 * l2,
            m3 * l2 * l3,
            m3 * l3 * l3 / 3.0,
            g0 * (0.5 * m2 + m3) * l2,
            0.5 * g0 * m3 * l3,
        ])
    }

    pub fn inertia(&self, q: &Vector3<f64>) -> Matrix3<f64> {
        inertia_with(&self.dynamic_parameters(), q)
    }

    pub fn coriolis(&self, q: &Vector3<f64>, qd: &Vector3<f64>) -> Matrix3<f64> {
        coriolis_with(&self.dynamic_parameters(), q, qd)
    }

    pub fn gravity_torque(&self, q: &Vector3<f64>) -> Vector3<f64> {
        gravity_with(&self.dynamic_parameters(), q)
    }

    /// `∂M/∂qᵢ q̇ᵢ` summed over joints.
    pub fn inertia_rate(&self, q: &Vector3<f64>, qd: &Vector3<f64>) -> Matrix3<f64> {
        let a = self.dynamic_parameters();
        let partials = mass_basis_partials(q);
        let mut out = Matrix3::zeros();
        for (j, per_joint) in partials.iter().enumerate() {
            for i in 0..3 {
                out += per_joint[i] * (a[j] * qd[i]);
            }
        }
        out
    }

    pub fn kinetic_energy(&self, state: &JointState) -> f64 {
        0.5 * state.qd.dot(&(self.inertia(&state.q) * state.qd))
    }

    /// Potential energy relative to the shoulder height.
    pub fn potential_energy(&self, q: &Vector3<f64>) -> f64 {
        let a = self.dynamic_parameters();
        a[4] * q[1].sin() + a[5] * (q[1] + q[2]).sin()
    }

    /// `q̈ = M⁻¹(τ − Cq̇ − g)`.
    pub fn forward_dynamics(&self, state: &JointState, tau: &Vector3<f64>) -> Result<Vector3<f64>> {
        let m = self.inertia(&state.q);
        let rhs = tau - self.coriolis(&state.q, &state.qd) * state.qd - self.gravity_torque(&state.q);
        let chol = m.cholesky().ok_or(Error::NonPositiveDefinite)?;
        Ok(chol.solve(&rhs))
    }
}

/// `Mⱼ(q)` for each base parameter.
pub fn mass_basis(q: &Vector3<f64>) -> [Matrix3<f64>; DYN_PARAMS] {
    let t = Trig::new(q);
    let e11 = Matrix3::new(1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    let e22 = Matrix3::new(0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0);
    let e33 = Matrix3::new(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0);
    let e23 = Matrix3::new(0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0);
    [
        e11,
        e11 * (t.c2 * t.c2) + e22,
        e11 * (t.c2 * t.c23) + e22 * t.c3 + e23 * (0.5 * t.c3),
        e11 * (t.c23 * t.c23) + e22 + e23 + e33,
        Matrix3::zeros(),
        Matrix3::zeros(),
    ]
}

/// `∂Mⱼ/∂qᵢ`, indexed `[j][i]`.
pub fn mass_basis_partials(q: &Vector3<f64>) -> [[Matrix3<f64>; 3]; DYN_PARAMS] {
    let t = Trig::new(q);
    let e11 = Matrix3::new(1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    let e22 = Matrix3::new(0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0);
    let e23 = Matrix3::new(0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0);
    let z = Matrix3::zeros();
    // sin(2q₂ + q₃) = s₂c₂₃ + c₂s₂₃
    let s_2_23 = t.s2 * t.c23 + t.c2 * t.s23;
    let d4 = e11 * (-2.0 * t.c23 * t.s23);
    [
        [z, z, z],
        [z, e11 * (-2.0 * t.c2 * t.s2), z],
        [
            z,
            e11 * (-s_2_23),
            e11 * (-t.c2 * t.s23) + e22 * (-t.s3) + e23 * (-0.5 * t.s3),
        ],
        [z, d4, d4],
        [z, z, z],
        [z, z, z],
    ]
}

/// `gⱼ(q)` for each base parameter.
pub fn gravity_basis(q: &Vector3<f64>) -> [Vector3<f64>; DYN_PARAMS] {
    let t = Trig::new(q);
    let z = Vector3::zeros();
    [z, z, z, z, Vector3::new(0.0, t.c2, 0.0), Vector3::new(0.0, t.c23, t.c23)]
}

/// Coriolis matrix from Christoffel symbols of the first kind:
/// `C_kj = Σᵢ ½(∂M_kj/∂qᵢ + ∂M_ki/∂q_j − ∂M_ij/∂q_k) q̇ᵢ`.
fn christoffel(partials: &[Matrix3<f64>; 3], qd: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::from_fn(|k, j| {
        (0..3)
            .map(|i| 0.5 * (partials[i][(k, j)] + partials[j][(k, i)] - partials[k][(i, j)]) * qd[i])
            .sum()
    })
}

fn check_len(a: &DVector<f64>) {
    assert_eq!(a.len(), DYN_PARAMS, "dynamic parameter vector must have {DYN_PARAMS} entries");
}

/// `M(q)` for an arbitrary parameter vector.
pub fn inertia_with(a: &DVector<f64>, q: &Vector3<f64>) -> Matrix3<f64> {
    check_len(a);
    mass_basis(q)
        .iter()
        .zip(a.iter())
        .fold(Matrix3::zeros(), |acc, (m, &aj)| acc + m * aj)
}

pub fn coriolis_with(a: &DVector<f64>, q: &Vector3<f64>, qd: &Vector3<f64>) -> Matrix3<f64> {
    check_len(a);
    mass_basis_partials(q)
        .iter()
        .zip(a.iter())
        .fold(Matrix3::zeros(), |acc, (p, &aj)| acc + christoffel(p, qd) * aj)
}

pub fn gravity_with(a: &DVector<f64>, q: &Vector3<f64>) -> Vector3<f64> {
    check_len(a);
    gravity_basis(q)
        .iter()
        .zip(a.iter())
        .fold(Vector3::zeros(), |acc, (g, &aj)| acc + g * aj)
}

/// `Y_d(q, q̇, ζ, ζ̇)` with `Y_d a = M(q)ζ̇ + C(q, q̇)ζ + g(q)` for every `a`.
pub fn dynamics_regressor(
    q: &Vector3<f64>,
    qd: &Vector3<f64>,
    zeta: &Vector3<f64>,
    zeta_dot: &Vector3<f64>,
) -> DynRegressor {
    let masses = mass_basis(q);
    let partials = mass_basis_partials(q);
    let grav = gravity_basis(q);
    let mut y = DynRegressor::zeros(DYN_PARAMS);
    for j in 0..DYN_PARAMS {
        let col = masses[j] * zeta_dot + christoffel(&partials[j], qd) * zeta + grav[j];
        y.set_column(j, &col);
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rvec(rng: &mut ChaCha8Rng, span: f64) -> Vector3<f64> {
        Vector3::from_fn(|_, _| rng.gen_range(-span..span))
    }

    fn rel(a: f64, scale: f64) -> f64 {
        a / scale.max(1e-12)
    }

    /// Inertia from a point-mass discretisation of the two rods plus the
    /// base yaw inertia; independent of the closed-form basis.
    fn lumped_inertia(arm: &ArmModel, q: &Vector3<f64>, segments: usize) -> Matrix3<f64> {
        let shoulder = Vector3::new(0.0, 0.0, arm.l1);
        let (s1, c1) = q[0].sin_cos();
        let dir = |angle: f64| Vector3::new(c1 * angle.cos(), s1 * angle.cos(), angle.sin());
        let point_jac = |p: &Vector3<f64>, upto: usize| {
            let axes = [Vector3::z(), Vector3::new(s1, -c1, 0.0), Vector3::new(s1, -c1, 0.0)];
            let origins = [Vector3::zeros(), shoulder, shoulder + arm.l2 * dir(q[1])];
            Matrix3::from_fn(|r, c| if c < upto { axes[c].cross(&(p - origins[c]))[r] } else { 0.0 })
        };
        let mut m = Matrix3::zeros();
        m[(0, 0)] = arm.base_yaw_inertia;
        for k in 0..segments {
            let frac = (k as f64 + 0.5) / segments as f64;
            let p2 = shoulder + arm.l2 * frac * dir(q[1]);
            let j2 = point_jac(&p2, 2);
            m += j2.transpose() * j2 * (arm.m2 / segments as f64);
            let p3 = shoulder + arm.l2 * dir(q[1]) + arm.l3 * frac * dir(q[1] + q[2]);
            let j3 = point_jac(&p3, 3);
            m += j3.transpose() * j3 * (arm.m3 / segments as f64);
        }
        m
    }

    #[test]
    fn reference_position_in_vertical_plane_for_zero_yaw() {
        let arm = ArmModel::default();
        let r = arm.feature_position(&Vector3::new(0.0, 0.4, -0.9));
        assert_eq!(r.y, 0.0);
    }

    #[test]
    fn workspace_bound() {
        let arm = ArmModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..500 {
            let r = arm.feature_position(&rvec(&mut rng, 3.0));
            let d = (r - Vector3::new(0.0, 0.0, arm.l1)).norm();
            assert!(d <= arm.l2 + arm.l3 + arm.feature_offset.norm() + 1e-12);
        }
    }

    #[test]
    fn translational_jacobian_matches_finite_differences() {
        let mut arm = ArmModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for trial in 0..200 {
            arm.feature_offset = if trial % 2 == 0 { Vector3::zeros() } else { rvec(&mut rng, 0.5) };
            let q = rvec(&mut rng, 3.0);
            let jr = arm.geometric_jacobian(&q);
            let jf = arm.feature_jacobian(&q);
            let h = 1e-6;
            for i in 0..3 {
                let mut dq = Vector3::zeros();
                dq[i] = h;
                let fd0 = (arm.reference_position(&(q + dq)) - arm.reference_position(&(q - dq))) / (2.0 * h);
                let col0 = jr.fixed_view::<3, 1>(0, i).into_owned();
                assert!(rel((fd0 - col0).norm(), col0.norm()) < 1e-5 || (fd0 - col0).norm() < 1e-8);
                let fd = (arm.feature_position(&(q + dq)) - arm.feature_position(&(q - dq))) / (2.0 * h);
                let col = jf.column(i).into_owned();
                assert!(rel((fd - col).norm(), col.norm()) < 1e-5 || (fd - col).norm() < 1e-8);
            }
        }
    }

    #[test]
    fn angular_jacobian_matches_rotation_rate() {
        let arm = ArmModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..100 {
            let q = rvec(&mut rng, 3.0);
            let qd = rvec(&mut rng, 1.0);
            let h = 1e-6;
            let r_dot = (arm.end_effector_rotation(&(q + qd * h)) - arm.end_effector_rotation(&(q - qd * h))) / (2.0 * h);
            let omega = arm.geometric_jacobian(&q).fixed_view::<3, 3>(3, 0) * qd;
            let expected = skew(&omega) * arm.end_effector_rotation(&q);
            assert!((r_dot - expected).norm() < 1e-6);
        }
    }

    #[test]
    fn base_yaw_rate_spins_about_vertical() {
        let arm = ArmModel::default();
        let v = arm.geometric_jacobian(&Vector3::new(0.3, 0.2, 0.1)) * Vector3::new(1.0, 0.0, 0.0);
        assert_eq!(v.fixed_rows::<3>(3).into_owned(), Vector3::z());
    }

    #[test]
    fn inertia_matches_lumped_mass_oracle() {
        let arm = ArmModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let q = rvec(&mut rng, 3.0);
            let m = arm.inertia(&q);
            let oracle = lumped_inertia(&arm, &q, 4000);
            // midpoint rule error is O(1/n²)
            assert!((m - oracle).norm() / m.norm() < 1e-6, "{m} vs {oracle}");
        }
    }

    #[test]
    fn inertia_symmetric_and_positive_definite_on_grid() {
        let arm = ArmModel::default();
        let steps = 24;
        for i in 0..steps {
            for j in 0..steps {
                let q = Vector3::new(
                    0.3,
                    -std::f64::consts::PI + 2.0 * std::f64::consts::PI * i as f64 / steps as f64,
                    -std::f64::consts::PI + 2.0 * std::f64::consts::PI * j as f64 / steps as f64,
                );
                let m = arm.inertia(&q);
                assert_eq!(m, m.transpose());
                let min_eig = m.symmetric_eigenvalues().min();
                assert!(min_eig > 0.0, "min eigenvalue {min_eig} at {q}");
            }
        }
    }

    #[test]
    fn skew_symmetry_of_mdot_minus_2c() {
        let arm = ArmModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..500 {
            let q = rvec(&mut rng, 3.0);
            let qd = rvec(&mut rng, 2.0);
            let x = rvec(&mut rng, 1.0);
            let h = 1e-6;
            let m_dot = (arm.inertia(&(q + qd * h)) - arm.inertia(&(q - qd * h))) / (2.0 * h);
            let n = m_dot - arm.coriolis(&q, &qd) * 2.0;
            assert!(x.dot(&(n * x)).abs() < 1e-8);
            let n_exact = arm.inertia_rate(&q, &qd) - arm.coriolis(&q, &qd) * 2.0;
            assert!((n_exact + n_exact.transpose()).norm() < 1e-12);
            assert!(x.dot(&(n_exact * x)).abs() < 1e-12);
        }
    }

    #[test]
    fn gravity_is_potential_gradient() {
        let arm = ArmModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..200 {
            let q = rvec(&mut rng, 3.0);
            let h = 1e-6;
            let g = arm.gravity_torque(&q);
            for i in 0..3 {
                let mut dq = Vector3::zeros();
                dq[i] = h;
                let fd = (arm.potential_energy(&(q + dq)) - arm.potential_energy(&(q - dq))) / (2.0 * h);
                assert!((fd - g[i]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn regressor_identity_random() {
        let arm = ArmModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for trial in 0..1000 {
            let q = rvec(&mut rng, 3.0);
            let qd = rvec(&mut rng, 2.0);
            let zeta = rvec(&mut rng, 2.0);
            let zeta_dot = rvec(&mut rng, 5.0);
            let a = if trial % 2 == 0 {
                arm.dynamic_parameters()
            } else {
                arm.dynamic_parameters().map(|v| v * rng.gen_range(0.2..3.0))
            };
            let y = dynamics_regressor(&q, &qd, &zeta, &zeta_dot);
            let direct = inertia_with(&a, &q) * zeta_dot + coriolis_with(&a, &q, &qd) * zeta + gravity_with(&a, &q);
            let err = (&y * &a - direct).norm();
            assert!(err <= 1e-10 * direct.norm().max(1.0));
        }
    }

    #[test]
    fn regressor_gravity_only_and_linearity() {
        let arm = ArmModel::default();
        let q = Vector3::new(0.2, 0.7, -1.1);
        let z = Vector3::zeros();
        let y = dynamics_regressor(&q, &Vector3::new(0.3, -0.2, 0.5), &z, &z);
        assert!((&y * arm.dynamic_parameters() - arm.gravity_torque(&q)).norm() < 1e-12);
        let y = dynamics_regressor(&q, &Vector3::new(0.3, -0.2, 0.5), &Vector3::new(1.0, 2.0, 3.0), &Vector3::new(-1.0, 0.5, 0.0));
        let a = DVector::from_fn(DYN_PARAMS, |i, _| i as f64 + 0.5);
        let b = DVector::from_fn(DYN_PARAMS, |i, _| 2.0 - i as f64);
        assert!((&y * (&a + &b) - (&y * &a + &y * &b)).norm() < 1e-12);
    }

    #[test]
    fn forward_dynamics_cases() {
        let arm = ArmModel::default();
        let state = JointState { q: Vector3::new(0.1, 0.5, -0.4), qd: Vector3::new(0.3, -0.6, 1.2) };
        let tau = arm.coriolis(&state.q, &state.qd) * state.qd + arm.gravity_torque(&state.q);
        assert!(arm.forward_dynamics(&state, &tau).unwrap().norm() < 1e-12);

        let rest = JointState::at_rest(state.q);
        let qdd = arm.forward_dynamics(&rest, &Vector3::zeros()).unwrap();
        let expected = -arm.inertia(&rest.q).try_inverse().unwrap() * arm.gravity_torque(&rest.q);
        assert!((qdd - expected).norm() < 1e-12);

        let tau = Vector3::new(3.0, -7.0, 2.0);
        let qdd = arm.forward_dynamics(&state, &tau).unwrap();
        let back = dynamics_regressor(&state.q, &state.qd, &state.qd, &qdd) * arm.dynamic_parameters();
        assert!((back - tau).norm() < 1e-10 * tau.norm());
    }

    #[test]
    fn work_energy_balance_along_rk4_trajectory() {
        use crate::mathkit::rk4_step;
        let arm = ArmModel::default();
        let torque = |t: f64| Vector3::new(2.0 * t.sin(), 5.0 * (1.3 * t).cos(), -1.5);
        let mut s = DVector::from_vec(vec![0.2, 0.4, -0.8, 0.0, 0.3, 0.0]);
        let energy = |s: &DVector<f64>| {
            let st = JointState { q: Vector3::new(s[0], s[1], s[2]), qd: Vector3::new(s[3], s[4], s[5]) };
            arm.kinetic_energy(&st) + arm.potential_energy(&st.q)
        };
        let power = |t: f64, s: &DVector<f64>| Vector3::new(s[3], s[4], s[5]).dot(&torque(t));
        let h = 1e-3;
        let e0 = energy(&s);
        let mut work = 0.0;
        let mut peak: f64 = e0.abs();
        for k in 0..2000 {
            let t = k as f64 * h;
            let p0 = power(t, &s);
            s = rk4_step(
                |t, s| {
                    let st = JointState { q: Vector3::new(s[0], s[1], s[2]), qd: Vector3::new(s[3], s[4], s[5]) };
                    let qdd = arm.forward_dynamics(&st, &torque(t))?;
                    Ok(DVector::from_vec(vec![s[3], s[4], s[5], qdd[0], qdd[1], qdd[2]]))
                },
                t,
                &s,
                h,
            )
            .unwrap();
            work += 0.5 * h * (p0 + power(t + h, &s));
            peak = peak.max(energy(&s).abs());
        }
        let residual = (energy(&s) - e0 - work).abs();
        assert!(residual / peak < 1e-6, "residual {residual}, scale {peak}");
    }
}
