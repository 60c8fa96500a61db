//! Linear-in-parameters forms of the depth and of the depth-rate-independent
//! Jacobian.
//!
//! The feature position is written as
//!
//! ```text
//! r(q) = (0, 0, l₁) + Σₖ θₖ eₖ(q)
//! ```
//!
//! where each basis function has the shape
//! `eₖ = P(ψ)·u(q₁) + W·w(q₁) + Q(ψ)·Z₀` with `u = (cos q₁, sin q₁, 0)`,
//! `w = (−sin q₁, cos q₁, 0)`, `ψ ∈ {q₂, q₂+q₃}` and `P`, `Q` linear
//! combinations of `cos ψ`, `sin ψ`. With `d₃ = X₀` this gives
//!
//! ```text
//! z(q)        = d_C + Σₖ θₖ eₖₓ(q)                       → a_z  = (d_C, θ…)
//! J_z^⊥(q) ξ  = Σᵢ Σₖ (ρᵢθₖ) Dᵢ ∂eₖ/∂q ξ                  → a_z^⊥ = (ρᵢθₖ…)
//! ```
//!
//! with image factors `ρ ∈ {βf, u₀, v₀}`. The standard parameterization
//! keeps `θ = (l₂, l₃)` and `ρ = βf` (zero feature offset and principal
//! point), giving the 3 + 2 parameter vectors. The extended one uses
//! `θ = (l₂, l₃ + c_x, c_y, c_z)` and all three image factors (5 + 12).
//!
//! Nothing in this module reads a true parameter value except
//! [`KinematicRegressor::true_params`] and
//! [`KinematicRegressor::params_from_physical`].

use nalgebra::{DMatrix, DVector, Matrix2x3, Matrix3, RowVector3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::arm::ArmModel;
use crate::camera::CameraModel;
use crate::error::{Error, Result};

/// 2×m regressor matrix.
pub type Regressor = DMatrix<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Parameterization {
    /// `a_z = (d_C, l₂, l₃)`, `a_z^⊥ = (βf·l₂, βf·l₃)`; requires zero
    /// feature offset and principal point.
    #[default]
    Standard,
    /// Adds feature-offset and principal-point terms.
    Extended,
}

impl Parameterization {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Standard => "standard",
            Self::Extended => "extended",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Angle {
    Shoulder,
    Elbow,
}

/// One basis function `e(q) = P(ψ)u + W w + Q(ψ)Z₀`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct PlanarTerm {
    angle: Angle,
    /// `P(ψ) = p.0 cos ψ + p.1 sin ψ`
    p: (f64, f64),
    q: (f64, f64),
    w: f64,
}

/// `(value, first derivative, second derivative)` of `a cos ψ + b sin ψ`.
fn harmonic(coef: (f64, f64), psi: f64) -> (f64, f64, f64) {
    let (s, c) = psi.sin_cos();
    let v = coef.0 * c + coef.1 * s;
    (v, -coef.0 * s + coef.1 * c, -v)
}

impl PlanarTerm {
    const LINK2: Self = Self { angle: Angle::Shoulder, p: (1.0, 0.0), q: (0.0, 1.0), w: 0.0 };
    const LINK3: Self = Self { angle: Angle::Elbow, p: (1.0, 0.0), q: (0.0, 1.0), w: 0.0 };
    // Second and third columns of the end-effector rotation Rz(q₁)Ry(−(q₂+q₃));
    // the first equals LINK3, so an x offset folds into the l₃ coefficient.
    const OFFSET_Y: Self = Self { angle: Angle::Elbow, p: (0.0, 0.0), q: (0.0, 0.0), w: 1.0 };
    const OFFSET_Z: Self = Self { angle: Angle::Elbow, p: (0.0, -1.0), q: (1.0, 0.0), w: 0.0 };

    fn selector(&self) -> Vector3<f64> {
        match self.angle {
            Angle::Shoulder => Vector3::new(0.0, 1.0, 0.0),
            Angle::Elbow => Vector3::new(0.0, 1.0, 1.0),
        }
    }

    fn frame(q1: f64) -> (Vector3<f64>, Vector3<f64>) {
        let (s1, c1) = q1.sin_cos();
        (Vector3::new(c1, s1, 0.0), Vector3::new(-s1, c1, 0.0))
    }

    fn value(&self, q: &Vector3<f64>) -> Vector3<f64> {
        let psi = self.selector().dot(q);
        let (u, w) = Self::frame(q[0]);
        let (p, ..) = harmonic(self.p, psi);
        let (qq, ..) = harmonic(self.q, psi);
        u * p + w * self.w + Vector3::z() * qq
    }

    /// `∂e/∂q`.
    fn jacobian(&self, q: &Vector3<f64>) -> Matrix3<f64> {
        let sel = self.selector();
        let psi = sel.dot(q);
        let (u, w) = Self::frame(q[0]);
        let (p, dp, _) = harmonic(self.p, psi);
        let (_, dq, _) = harmonic(self.q, psi);
        let along = u * dp + Vector3::z() * dq;
        Matrix3::from_columns(&[w * p - u * self.w, along * sel[1], along * sel[2]])
    }

    /// `d/dt ∂e/∂q` along `q̇`.
    fn jacobian_rate(&self, q: &Vector3<f64>, qd: &Vector3<f64>) -> Matrix3<f64> {
        let sel = self.selector();
        let psi = sel.dot(q);
        let psi_dot = sel.dot(qd);
        let (u, w) = Self::frame(q[0]);
        let (p, dp, ddp) = harmonic(self.p, psi);
        let (_, _, ddq) = harmonic(self.q, psi);
        let col1 = w * (dp * psi_dot) - u * (p * qd[0]) - w * (self.w * qd[0]);
        let along = u * (ddp * psi_dot) + w * (dp * qd[0]) + Vector3::z() * (ddq * psi_dot);
        Matrix3::from_columns(&[col1, along * sel[1], along * sel[2]])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ImageFactor {
    PixelFocal,
    PrincipalU,
    PrincipalV,
}

impl ImageFactor {
    /// Image row contribution of a feature velocity `v`.
    fn apply(&self, v: &Vector3<f64>) -> Vector2<f64> {
        match self {
            Self::PixelFocal => Vector2::new(v.y, v.z),
            Self::PrincipalU => Vector2::new(v.x, 0.0),
            Self::PrincipalV => Vector2::new(0.0, v.x),
        }
    }
}

/// Depth and depth-rate-independent parameter vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KinParams {
    pub a_z: DVector<f64>,
    pub a_z_perp: DVector<f64>,
}

/// Physical kinematic and camera quantities from which a [`KinParams`] is
/// assembled. Used for both truth and initial guesses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalKinematics {
    pub offset: f64,
    pub l2: f64,
    pub l3: f64,
    pub focal_length: f64,
    pub scale: f64,
    #[serde(default)]
    pub feature_offset: Vector3<f64>,
    #[serde(default)]
    pub principal_point: Vector2<f64>,
}

impl PhysicalKinematics {
    pub fn from_models(arm: &ArmModel, cam: &CameraModel) -> Self {
        Self {
            offset: cam.offset,
            l2: arm.l2,
            l3: arm.l3,
            focal_length: cam.focal_length,
            scale: cam.scale,
            feature_offset: arm.feature_offset,
            principal_point: cam.principal_point,
        }
    }
}

/// Parameter-free regressor generator for one parameterization.
#[derive(Debug, Clone, PartialEq)]
pub struct KinematicRegressor {
    parameterization: Parameterization,
    terms: Vec<PlanarTerm>,
    factors: Vec<ImageFactor>,
    perp_scale: f64,
}

impl KinematicRegressor {
    pub fn new(parameterization: Parameterization) -> Self {
        let (terms, factors) = match parameterization {
            Parameterization::Standard => (
                vec![PlanarTerm::LINK2, PlanarTerm::LINK3],
                vec![ImageFactor::PixelFocal],
            ),
            Parameterization::Extended => (
                vec![
                    PlanarTerm::LINK2,
                    PlanarTerm::LINK3,
                    PlanarTerm::OFFSET_Y,
                    PlanarTerm::OFFSET_Z,
                ],
                vec![ImageFactor::PixelFocal, ImageFactor::PrincipalU, ImageFactor::PrincipalV],
            ),
        };
        Self { parameterization, terms, factors, perp_scale: 1.0 }
    }

    /// Mutation hook for the check suites: scales every `Y_z^⊥` entry,
    /// which is equivalent to a mis-scaled `D̄`.
    pub fn with_perp_scale_fault(mut self, factor: f64) -> Self {
        self.perp_scale = factor;
        self
    }

    pub fn parameterization(&self) -> Parameterization {
        self.parameterization
    }

    /// Dimension `m₁` of `a_z`.
    pub fn depth_dim(&self) -> usize {
        1 + self.terms.len()
    }

    /// Dimension `m₂` of `a_z^⊥`.
    pub fn perp_dim(&self) -> usize {
        self.terms.len() * self.factors.len()
    }

    fn thetas(&self, phys: &PhysicalKinematics) -> Vec<f64> {
        let c = phys.feature_offset;
        match self.parameterization {
            Parameterization::Standard => vec![phys.l2, phys.l3],
            Parameterization::Extended => vec![phys.l2, phys.l3 + c.x, c.y, c.z],
        }
    }

    fn factor_values(&self, phys: &PhysicalKinematics) -> Vec<f64> {
        let pp = phys.principal_point;
        [phys.scale * phys.focal_length, pp.x, pp.y][..self.factors.len()].to_vec()
    }

    /// Assembles a parameter pair from physical quantities. Fails in the
    /// standard parameterization when the offset or principal point is not
    /// zero, since those terms have no slot there.
    pub fn params_from_physical(&self, phys: &PhysicalKinematics) -> Result<KinParams> {
        if self.parameterization == Parameterization::Standard
            && (phys.feature_offset != Vector3::zeros() || phys.principal_point != Vector2::zeros())
        {
            return Err(Error::Parameterization(
                "nonzero feature offset or principal point requires the extended parameterization".into(),
            ));
        }
        let thetas = self.thetas(phys);
        let mut a_z = vec![phys.offset];
        a_z.extend(&thetas);
        let a_z_perp = self
            .factor_values(phys)
            .iter()
            .flat_map(|rho| thetas.iter().map(move |th| rho * th))
            .collect();
        Ok(KinParams { a_z: DVector::from_vec(a_z), a_z_perp: DVector::from_vec(a_z_perp) })
    }

    pub fn true_params(&self, arm: &ArmModel, cam: &CameraModel) -> Result<KinParams> {
        self.params_from_physical(&PhysicalKinematics::from_models(arm, cam))
    }

    pub fn check_dims(&self, p: &KinParams) -> Result<()> {
        if p.a_z.len() != self.depth_dim() {
            return Err(Error::Dimension { what: "a_z", expected: self.depth_dim(), got: p.a_z.len() });
        }
        if p.a_z_perp.len() != self.perp_dim() {
            return Err(Error::Dimension { what: "a_z_perp", expected: self.perp_dim(), got: p.a_z_perp.len() });
        }
        Ok(())
    }

    /// `Y_z(q, φ)` with `Y_z a_z = z(q) φ`.
    pub fn y_z(&self, q: &Vector3<f64>, phi: &Vector2<f64>) -> Regressor {
        let mut y = Regressor::zeros(2, self.depth_dim());
        y.set_column(0, phi);
        for (k, term) in self.terms.iter().enumerate() {
            y.set_column(1 + k, &(phi * term.value(q).x));
        }
        y
    }

    /// `Ȳ_z(q, q̇, φ)` with `Ȳ_z a_z = ż(q) φ`. The `d_C` column is zero.
    pub fn y_z_bar(&self, q: &Vector3<f64>, qd: &Vector3<f64>, phi: &Vector2<f64>) -> Regressor {
        let mut y = Regressor::zeros(2, self.depth_dim());
        for (k, term) in self.terms.iter().enumerate() {
            let rate = (term.jacobian(q) * qd).x;
            y.set_column(1 + k, &(phi * rate));
        }
        y
    }

    /// `Y_z^⊥(q, ξ)` with `Y_z^⊥ a_z^⊥ = J_z^⊥(q) ξ`.
    pub fn y_z_perp(&self, q: &Vector3<f64>, xi: &Vector3<f64>) -> Regressor {
        let velocities: Vec<Vector3<f64>> = self.terms.iter().map(|t| t.jacobian(q) * xi).collect();
        self.perp_columns(&velocities)
    }

    fn perp_columns(&self, velocities: &[Vector3<f64>]) -> Regressor {
        let mut y = Regressor::zeros(2, self.perp_dim());
        let k = self.terms.len();
        for (i, factor) in self.factors.iter().enumerate() {
            for (j, v) in velocities.iter().enumerate() {
                y.set_column(i * k + j, &(factor.apply(v) * self.perp_scale));
            }
        }
        y
    }

    /// `Y_z*(q, q̇_r, x + x_d, ẋ_r) = Y_z(q, ẋ_r) + ½ Ȳ_z(q, q̇_r, x + x_d)`.
    pub fn y_z_star(
        &self,
        q: &Vector3<f64>,
        qd_r: &Vector3<f64>,
        x_plus_xd: &Vector2<f64>,
        xr_dot: &Vector2<f64>,
    ) -> Regressor {
        self.y_z(q, xr_dot) + self.y_z_bar(q, qd_r, x_plus_xd) * 0.5
    }

    /// Depth row: `z = row · a_z`.
    fn depth_row(&self, q: &Vector3<f64>) -> DVector<f64> {
        let mut row = DVector::zeros(self.depth_dim());
        row[0] = 1.0;
        for (k, term) in self.terms.iter().enumerate() {
            row[1 + k] = term.value(q).x;
        }
        row
    }

    /// `ẑ(q)` for the given depth parameters.
    pub fn depth(&self, a_z: &DVector<f64>, q: &Vector3<f64>) -> f64 {
        self.depth_row(q).dot(a_z)
    }

    /// Total time derivative of `ẑ(q)`, including the parameter drift `â̇_z`.
    pub fn depth_rate(
        &self,
        a_z: &DVector<f64>,
        q: &Vector3<f64>,
        qd: &Vector3<f64>,
        a_z_rate: &DVector<f64>,
    ) -> f64 {
        (self.depth_jacobian(a_z, q) * qd)[0] + self.depth_row(q).dot(a_z_rate)
    }

    /// `Ĵ_z(q)`: depth Jacobian for the given depth parameters.
    pub fn depth_jacobian(&self, a_z: &DVector<f64>, q: &Vector3<f64>) -> RowVector3<f64> {
        self.terms
            .iter()
            .enumerate()
            .fold(RowVector3::zeros(), |acc, (k, t)| acc + t.jacobian(q).row(0) * a_z[1 + k])
    }

    /// Total time derivative of `Ĵ_z`.
    pub fn depth_jacobian_rate(
        &self,
        a_z: &DVector<f64>,
        a_z_rate: &DVector<f64>,
        q: &Vector3<f64>,
        qd: &Vector3<f64>,
    ) -> RowVector3<f64> {
        self.terms.iter().enumerate().fold(RowVector3::zeros(), |acc, (k, t)| {
            acc + t.jacobian_rate(q, qd).row(0) * a_z[1 + k] + t.jacobian(q).row(0) * a_z_rate[1 + k]
        })
    }

    fn perp_from(&self, a_perp: &DVector<f64>, term_mats: &[Matrix3<f64>]) -> Matrix2x3<f64> {
        let mut out = Matrix2x3::zeros();
        for i in 0..3 {
            let velocities: Vec<Vector3<f64>> = term_mats.iter().map(|m| m.column(i).into_owned()).collect();
            out.set_column(i, &(self.perp_columns(&velocities) * a_perp));
        }
        out
    }

    /// `Ĵ_z^⊥(q)` for the given parameters.
    pub fn perp_jacobian(&self, a_perp: &DVector<f64>, q: &Vector3<f64>) -> Matrix2x3<f64> {
        let mats: Vec<Matrix3<f64>> = self.terms.iter().map(|t| t.jacobian(q)).collect();
        self.perp_from(a_perp, &mats)
    }

    /// Total time derivative of `Ĵ_z^⊥`.
    pub fn perp_jacobian_rate(
        &self,
        a_perp: &DVector<f64>,
        a_perp_rate: &DVector<f64>,
        q: &Vector3<f64>,
        qd: &Vector3<f64>,
    ) -> Matrix2x3<f64> {
        let rates: Vec<Matrix3<f64>> = self.terms.iter().map(|t| t.jacobian_rate(q, qd)).collect();
        let mats: Vec<Matrix3<f64>> = self.terms.iter().map(|t| t.jacobian(q)).collect();
        self.perp_from(a_perp, &rates) + self.perp_from(a_perp_rate, &mats)
    }

    /// Feature position offset `Σ θₖ eₖ(q)` implied by a set of `θ` values.
    /// Used by tests to cross-check the basis against the arm model.
    pub fn basis_position(&self, thetas: &[f64], q: &Vector3<f64>) -> Vector3<f64> {
        self.terms.iter().zip(thetas).map(|(t, th)| t.value(q) * *th).sum()
    }
}
