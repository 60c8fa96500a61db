//! Adaptive image-space controllers.
//!
//! All three schemes share the joint reference velocity
//! `q̇_r = Ĵ*⁺ ẑ(q) ẋ_r` with `ẋ_r = ẋ_d − αΔx` and its exact time
//! derivative `q̈_r`. They differ in the feedback and in which joint
//! velocity feeds the kinematic regressors:
//!
//! | kind        | command                         | kinematic regressors use |
//! |-------------|---------------------------------|--------------------------|
//! | inverse     | `τ = −Ks + Y_d â_d`             | `q̇_r`                   |
//! | transpose   | `τ = −Ĵ*ᵀK₁Ĵ*s + Y_d â_d`       | `q̇`                     |
//! | kinematic   | `q̇_cmd = q̇_r`                  | `q̇_r`                   |
//!
//! A controller only ever sees estimates, measurements and gains.

use nalgebra::{DMatrix, DVector, Matrix2, Matrix2x3, Matrix3, RowVector3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::arm::{dynamics_regressor, DYN_PARAMS};
use crate::camera::task_jacobian;
use crate::error::{Error, Result};
use crate::kinreg::{KinParams, KinematicRegressor};
use crate::mathkit::{ensure_finite, pinv_wide};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControllerKind {
    #[serde(rename = "inverse")]
    InverseJacobian,
    #[serde(rename = "transpose")]
    TransposeJacobian,
    Kinematic,
}

impl ControllerKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::InverseJacobian => "inverse",
            Self::TransposeJacobian => "transpose",
            Self::Kinematic => "kinematic",
        }
    }

    pub fn is_torque(&self) -> bool {
        !matches!(self, Self::Kinematic)
    }
}

impl std::str::FromStr for ControllerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inverse" => Ok(Self::InverseJacobian),
            "transpose" => Ok(Self::TransposeJacobian),
            "kinematic" => Ok(Self::Kinematic),
            other => Err(Error::Config(format!("unknown controller '{other}'"))),
        }
    }
}

/// Adaptive parameter state `(â_d, â_z, â_z^⊥)`; also used for their rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimates {
    pub dynamic: DVector<f64>,
    pub depth: DVector<f64>,
    pub perp: DVector<f64>,
}

pub type EstimateRates = Estimates;

impl Estimates {
    pub fn new(dynamic: DVector<f64>, kin: KinParams) -> Self {
        Self { dynamic, depth: kin.a_z, perp: kin.a_z_perp }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            dynamic: DVector::zeros(self.dynamic.len()),
            depth: DVector::zeros(self.depth.len()),
            perp: DVector::zeros(self.perp.len()),
        }
    }

    pub fn len(&self) -> usize {
        self.dynamic.len() + self.depth.len() + self.perp.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.dynamic.iter().chain(self.depth.iter()).chain(self.perp.iter())
    }

    /// Writes the estimates into `out` starting at `offset`.
    pub fn pack_into(&self, out: &mut DVector<f64>, offset: usize) {
        for (i, v) in self.iter().enumerate() {
            out[offset + i] = *v;
        }
    }

    /// Reads estimates with the same dimensions as `self` from `src`.
    pub fn unpack_like(&self, src: &DVector<f64>, offset: usize) -> Self {
        let (p, m1, m2) = (self.dynamic.len(), self.depth.len(), self.perp.len());
        Self {
            dynamic: src.rows(offset, p).into_owned(),
            depth: src.rows(offset + p, m1).into_owned(),
            perp: src.rows(offset + p + m1, m2).into_owned(),
        }
    }

    pub fn kin(&self) -> KinParams {
        KinParams { a_z: self.depth.clone(), a_z_perp: self.perp.clone() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gains {
    pub k: Matrix3<f64>,
    pub k1: Matrix2<f64>,
    pub alpha: f64,
    pub gamma_d: DMatrix<f64>,
    pub gamma_z: DMatrix<f64>,
    pub gamma_z_perp: DMatrix<f64>,
}

/// Exact symmetry plus a successful Cholesky factorization.
pub fn is_spd(m: &DMatrix<f64>) -> bool {
    m.is_square() && m == &m.transpose() && m.iter().all(|v| v.is_finite()) && m.clone().cholesky().is_some()
}

impl Gains {
    /// Gains of the reference simulation with `Γ_d` sized for `p` parameters.
    pub fn reference(p: usize, m1: usize, m2: usize) -> Self {
        Self {
            k: Matrix3::identity() * 40.0,
            k1: Matrix2::identity() * 0.0015,
            alpha: 10.0,
            gamma_d: DMatrix::identity(p, p) * 200.0,
            gamma_z: DMatrix::identity(m1, m1) * 0.008,
            gamma_z_perp: DMatrix::identity(m2, m2) * 260.0,
        }
    }

    pub fn validate(&self, p: usize, m1: usize, m2: usize) -> Result<()> {
        let dims = [
            ("gamma_d", &self.gamma_d, p),
            ("gamma_z", &self.gamma_z, m1),
            ("gamma_z_perp", &self.gamma_z_perp, m2),
        ];
        for (name, m, n) in dims {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::Config(format!("gains.{name} must be {n}×{n}, got {}×{}", m.nrows(), m.ncols())));
            }
        }
        let spd = [
            ("k", is_spd(&DMatrix::from_column_slice(3, 3, self.k.as_slice()))),
            ("k1", is_spd(&DMatrix::from_column_slice(2, 2, self.k1.as_slice()))),
            ("gamma_d", is_spd(&self.gamma_d)),
            ("gamma_z", is_spd(&self.gamma_z)),
            ("gamma_z_perp", is_spd(&self.gamma_z_perp)),
        ];
        for (name, ok) in spd {
            if !ok {
                return Err(Error::Config(format!("gains.{name} is not symmetric positive definite")));
            }
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::Config(format!("gains.alpha must be positive, got {}", self.alpha)));
        }
        Ok(())
    }
}

/// Joint and image measurements at one instant. `x_dot` comes from the
/// plant kinematics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub q: Vector3<f64>,
    pub qd: Vector3<f64>,
    pub x: Vector2<f64>,
    pub x_dot: Vector2<f64>,
}

/// Desired image trajectory sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Desired {
    pub x: Vector2<f64>,
    pub x_dot: Vector2<f64>,
    pub x_ddot: Vector2<f64>,
}

/// Output of [`AdaptiveController::reference_velocity`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityReference {
    pub qd_r: Vector3<f64>,
    pub xr_dot: Vector2<f64>,
    pub z_hat: f64,
    pub j_star: Matrix2x3<f64>,
    pub j_star_pinv: nalgebra::Matrix3x2<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct References {
    pub velocity: VelocityReference,
    pub xr_ddot: Vector2<f64>,
    pub qdd_r: Vector3<f64>,
    pub z_hat_rate: f64,
    pub j_star_rate: Matrix2x3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Command {
    Torque(Vector3<f64>),
    Velocity(Vector3<f64>),
}

impl Command {
    pub fn value(&self) -> Vector3<f64> {
        match self {
            Self::Torque(v) | Self::Velocity(v) => *v,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerOutput {
    pub command: Command,
    pub rates: EstimateRates,
    pub refs: References,
    /// Sliding vector `s = q̇ − q̇_r`.
    pub s: Vector3<f64>,
}

/// Deliberate defects for the mutation checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControlFault {
    /// Reverses the sign of the `â_z^⊥` adaptation law.
    FlipPerpAdaptationSign,
}

#[derive(Debug, Clone)]
pub struct AdaptiveController {
    kind: ControllerKind,
    gains: Gains,
    kin: KinematicRegressor,
    fault: Option<ControlFault>,
}

impl AdaptiveController {
    pub fn new(kind: ControllerKind, gains: Gains, kin: KinematicRegressor) -> Result<Self> {
        gains.validate(DYN_PARAMS, kin.depth_dim(), kin.perp_dim())?;
        Ok(Self { kind, gains, kin, fault: None })
    }

    pub fn with_fault(mut self, fault: Option<ControlFault>) -> Self {
        self.fault = fault;
        self
    }

    pub fn kind(&self) -> ControllerKind {
        self.kind
    }

    pub fn gains(&self) -> &Gains {
        &self.gains
    }

    pub fn regressor(&self) -> &KinematicRegressor {
        &self.kin
    }

    /// `ẑ(q)`, `Ĵ_z(q)` and `Ĵ_z^⊥(q)` from the current estimates.
    pub fn estimated_jacobians(&self, est: &Estimates, q: &Vector3<f64>) -> (f64, RowVector3<f64>, Matrix2x3<f64>) {
        (
            self.kin.depth(&est.depth, q),
            self.kin.depth_jacobian(&est.depth, q),
            self.kin.perp_jacobian(&est.perp, q),
        )
    }

    /// `q̇_r = Ĵ*⁺ ẑ ẋ_r`. A vanishing `ẑ` simply yields `q̇_r = 0`.
    pub fn reference_velocity(
        &self,
        est: &Estimates,
        q: &Vector3<f64>,
        x: &Vector2<f64>,
        desired: &Desired,
    ) -> Result<VelocityReference> {
        let (z_hat, jz, jp) = self.estimated_jacobians(est, q);
        let j_star = task_jacobian(&jp, &jz, x, &desired.x);
        let j_star_pinv = pinv_wide(&j_star)?;
        let xr_dot = desired.x_dot - (x - desired.x) * self.gains.alpha;
        let qd_r = j_star_pinv * xr_dot * z_hat;
        Ok(VelocityReference { qd_r, xr_dot, z_hat, j_star, j_star_pinv })
    }

    /// Rates of `â_z` and `â_z^⊥`; `v` is `q̇_r` or `q̇` depending on the scheme.
    fn kinematic_rates(
        &self,
        est: &Estimates,
        q: &Vector3<f64>,
        v: &Vector3<f64>,
        x: &Vector2<f64>,
        desired: &Desired,
        xr_dot: &Vector2<f64>,
    ) -> (DVector<f64>, DVector<f64>) {
        let dx = x - desired.x;
        let dx = DVector::from_column_slice(dx.as_slice());
        let y_star = self.kin.y_z_star(q, v, &(x + desired.x), xr_dot);
        let depth_rate = -(&self.gains.gamma_z * (y_star.transpose() * &dx));
        let perp_sign = match self.fault {
            Some(ControlFault::FlipPerpAdaptationSign) => -1.0,
            None => 1.0,
        };
        let perp_rate = (&self.gains.gamma_z_perp * (self.kin.y_z_perp(q, v).transpose() * &dx)) * perp_sign;
        debug_assert_eq!(est.depth.len(), depth_rate.len());
        (depth_rate, perp_rate)
    }

    /// `q̈_r` as the exact derivative of `q̇_r`, with `ẑ̇` and `Ĵ̇*` taken as
    /// total derivatives (joint motion plus estimate drift).
    pub fn reference_acceleration(
        &self,
        est: &Estimates,
        depth_rate: &DVector<f64>,
        perp_rate: &DVector<f64>,
        meas: &Measurement,
        desired: &Desired,
        vref: &VelocityReference,
    ) -> References {
        let (q, qd, x, x_dot) = (meas.q, meas.qd, meas.x, meas.x_dot);
        let xr_ddot = desired.x_ddot - (x_dot - desired.x_dot) * self.gains.alpha;
        let z_hat_rate = self.kin.depth_rate(&est.depth, &q, &qd, depth_rate);
        let jz = self.kin.depth_jacobian(&est.depth, &q);
        let jz_rate = self.kin.depth_jacobian_rate(&est.depth, depth_rate, &q, &qd);
        let jp_rate = self.kin.perp_jacobian_rate(&est.perp, perp_rate, &q, &qd);
        let j_star_rate = jp_rate - (x_dot + desired.x_dot) * 0.5 * jz - (x + desired.x) * 0.5 * jz_rate;

        let pinv = vref.j_star_pinv;
        let qd_r = vref.qd_r;
        let null_proj = Matrix3::identity() - pinv * vref.j_star;
        let qdd_r = pinv * (xr_ddot * vref.z_hat + vref.xr_dot * z_hat_rate - j_star_rate * qd_r)
            + null_proj * j_star_rate.transpose() * pinv.transpose() * qd_r;
        References { velocity: *vref, xr_ddot, qdd_r, z_hat_rate, j_star_rate }
    }

    /// Dynamic feedforward `Y_d(q, q̇, q̇_r, q̈_r) â_d` and the `â_d` rate.
    fn dynamic_terms(&self, est: &Estimates, meas: &Measurement, refs: &References, s: &Vector3<f64>) -> (Vector3<f64>, DVector<f64>) {
        let y = dynamics_regressor(&meas.q, &meas.qd, &refs.velocity.qd_r, &refs.qdd_r);
        let ff = &y * &est.dynamic;
        let rate = -(&self.gains.gamma_d * (y.transpose() * s));
        (Vector3::new(ff[0], ff[1], ff[2]), rate)
    }

    /// `τ = −Ks + Y_d â_d`.
    pub fn inverse_jacobian_torque(&self, est: &Estimates, meas: &Measurement, refs: &References) -> (Vector3<f64>, DVector<f64>) {
        let s = meas.qd - refs.velocity.qd_r;
        let (ff, rate) = self.dynamic_terms(est, meas, refs, &s);
        (-self.gains.k * s + ff, rate)
    }

    /// `τ = −Ĵ*ᵀK₁Ĵ*s + Y_d â_d`.
    pub fn transpose_jacobian_torque(&self, est: &Estimates, meas: &Measurement, refs: &References) -> (Vector3<f64>, DVector<f64>) {
        let s = meas.qd - refs.velocity.qd_r;
        let j = refs.velocity.j_star;
        let (ff, rate) = self.dynamic_terms(est, meas, refs, &s);
        (-(j.transpose() * self.gains.k1 * j) * s + ff, rate)
    }

    /// Effective joint-space damping of the torque feedback.
    pub fn feedback_matrix(&self, j_star: &Matrix2x3<f64>) -> Matrix3<f64> {
        match self.kind {
            ControllerKind::TransposeJacobian => j_star.transpose() * self.gains.k1 * j_star,
            _ => self.gains.k,
        }
    }

    /// Full controller evaluation: command, estimate rates and diagnostics.
    pub fn evaluate(&self, est: &Estimates, meas: &Measurement, desired: &Desired) -> Result<ControllerOutput> {
        let vref = self.reference_velocity(est, &meas.q, &meas.x, desired)?;
        let regressor_velocity = match self.kind {
            ControllerKind::TransposeJacobian => meas.qd,
            _ => vref.qd_r,
        };
        let (depth_rate, perp_rate) =
            self.kinematic_rates(est, &meas.q, &regressor_velocity, &meas.x, desired, &vref.xr_dot);
        let refs = self.reference_acceleration(est, &depth_rate, &perp_rate, meas, desired, &vref);
        let s = meas.qd - vref.qd_r;
        let (command, dynamic_rate) = match self.kind {
            ControllerKind::InverseJacobian => {
                let (tau, r) = self.inverse_jacobian_torque(est, meas, &refs);
                (Command::Torque(tau), r)
            }
            ControllerKind::TransposeJacobian => {
                let (tau, r) = self.transpose_jacobian_torque(est, meas, &refs);
                (Command::Torque(tau), r)
            }
            ControllerKind::Kinematic => (Command::Velocity(vref.qd_r), DVector::zeros(est.dynamic.len())),
        };
        let rates = Estimates { dynamic: dynamic_rate, depth: depth_rate, perp: perp_rate };
        ensure_finite(command.value().iter().chain(rates.iter()), "controller output")?;
        Ok(ControllerOutput { command, rates, refs, s })
    }

    /// Velocity command and kinematic estimate rates of the reduced scheme.
    pub fn kinematic_command(&self, est: &Estimates, q: &Vector3<f64>, x: &Vector2<f64>, desired: &Desired) -> Result<(Vector3<f64>, EstimateRates)> {
        let vref = self.reference_velocity(est, q, x, desired)?;
        let (depth, perp) = self.kinematic_rates(est, q, &vref.qd_r, x, desired, &vref.xr_dot);
        Ok((vref.qd_r, Estimates { dynamic: DVector::zeros(est.dynamic.len()), depth, perp }))
    }
}
