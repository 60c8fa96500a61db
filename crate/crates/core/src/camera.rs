//! Fixed pinhole camera whose axes `(X_C, Y_C, Z_C)` are aligned with the
//! arm's `(Y₀, Z₀, X₀)` and whose center sits `d_C` behind the base origin
//! along `X₀`.
//!
//! The projection matrix is normalized so that `d₃ = X₀` and the depth `z`
//! is metric:
//!
//! ```text
//!     ⎡u₀  βf  0 ⎤       ⎡u₀·d_C⎤
//! D = ⎢v₀  0   βf⎥,  b = ⎢v₀·d_C⎥
//!     ⎣1   0   0 ⎦       ⎣ d_C  ⎦
//! ```

use nalgebra::{Matrix2x3, Matrix3, Matrix3x4, RowVector3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::arm::ArmModel;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    /// Focal length `f`, meters.
    pub focal_length: f64,
    /// Scaling factor `β`, pixels per meter on the image plane.
    pub scale: f64,
    /// Offset `d_C` of the camera center along the optical axis, meters.
    pub offset: f64,
    /// Principal point `(u₀, v₀)`, pixels.
    pub principal_point: Vector2<f64>,
}

impl Default for CameraModel {
    fn default() -> Self {
        Self {
            focal_length: 0.16,
            scale: 1200.0,
            offset: 6.0,
            principal_point: Vector2::zeros(),
        }
    }
}

/// Image-plane quantities of the feature at one joint state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageState {
    pub x: Vector2<f64>,
    pub x_dot: Vector2<f64>,
    pub z: f64,
    pub z_dot: f64,
}

impl CameraModel {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("focal_length", self.focal_length), ("scale", self.scale)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("camera.{name} must be positive, got {v}")));
            }
        }
        if !self.offset.is_finite() || !self.principal_point.iter().all(|v| v.is_finite()) {
            return Err(Error::Config("camera.offset and camera.principal_point must be finite".into()));
        }
        Ok(())
    }

    /// Combined pixel scale `βf`.
    pub fn pixel_focal(&self) -> f64 {
        self.scale * self.focal_length
    }

    pub fn d_matrix(&self) -> Matrix3<f64> {
        let bf = self.pixel_focal();
        let (u0, v0) = (self.principal_point.x, self.principal_point.y);
        Matrix3::new(
            u0, bf, 0.0, //
            v0, 0.0, bf, //
            1.0, 0.0, 0.0,
        )
    }

    pub fn b_vector(&self) -> Vector3<f64> {
        Vector3::new(
            self.principal_point.x * self.offset,
            self.principal_point.y * self.offset,
            self.offset,
        )
    }

    /// Perspective projection matrix `H = [D, b]`.
    pub fn projection_matrix(&self) -> Matrix3x4<f64> {
        let mut h = Matrix3x4::zeros();
        h.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.d_matrix());
        h.set_column(3, &self.b_vector());
        h
    }

    /// First two rows of `D`.
    pub fn d_bar(&self) -> Matrix2x3<f64> {
        self.d_matrix().fixed_rows::<2>(0).into_owned()
    }

    /// Third row of `D`.
    pub fn d3(&self) -> RowVector3<f64> {
        self.d_matrix().row(2).into_owned()
    }

    pub fn depth(&self, r: &Vector3<f64>) -> f64 {
        (self.d3() * r)[0] + self.b_vector().z
    }

    /// Projects a base-frame point to pixels; also returns its depth.
    pub fn project(&self, r: &Vector3<f64>) -> Result<(Vector2<f64>, f64)> {
        let z = self.depth(r);
        if !(z > 0.0) {
            return Err(Error::NonPositiveDepth { z });
        }
        let b = self.b_vector();
        let x = (self.d_bar() * r + Vector2::new(b.x, b.y)) / z;
        Ok((x, z))
    }

    /// Depth-independent interaction matrix `N(x) = D̄ − x d₃ᵀ`.
    pub fn interaction(&self, x: &Vector2<f64>) -> Matrix2x3<f64> {
        self.d_bar() - x * self.d3()
    }

    /// Overall Jacobian `J(q, x) = N(x) J_f J_r(q)` with `ẋ = J q̇ / z`.
    pub fn overall_jacobian(&self, arm: &ArmModel, q: &Vector3<f64>, x: &Vector2<f64>) -> Matrix2x3<f64> {
        self.interaction(x) * arm.feature_jacobian(q)
    }

    /// `J_z(q) = d₃ᵀ J_f J_r(q)` with `ż = J_z q̇`.
    pub fn depth_jacobian(&self, arm: &ArmModel, q: &Vector3<f64>) -> RowVector3<f64> {
        self.d3() * arm.feature_jacobian(q)
    }

    /// Depth-rate-independent Jacobian `J_z^⊥(q) = D̄ J_f J_r(q)`.
    pub fn depth_rate_independent_jacobian(&self, arm: &ArmModel, q: &Vector3<f64>) -> Matrix2x3<f64> {
        self.d_bar() * arm.feature_jacobian(q)
    }

    /// Projects the arm's feature point and its velocity.
    pub fn image_state(&self, arm: &ArmModel, q: &Vector3<f64>, qd: &Vector3<f64>) -> Result<ImageState> {
        let (x, z) = self.project(&arm.feature_position(q))?;
        let x_dot = self.overall_jacobian(arm, q, &x) * qd / z;
        let z_dot = (self.depth_jacobian(arm, q) * qd)[0];
        Ok(ImageState { x, x_dot, z, z_dot })
    }
}

/// `J* = J_z^⊥ − ((x + x_d)/2) J_z`. Used unchanged for the true Jacobians
/// and for their estimates.
pub fn task_jacobian(
    jz_perp: &Matrix2x3<f64>,
    jz: &RowVector3<f64>,
    x: &Vector2<f64>,
    x_d: &Vector2<f64>,
) -> Matrix2x3<f64> {
    jz_perp - (x + x_d) * 0.5 * jz
}
