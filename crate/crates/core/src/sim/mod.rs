//! Closed-loop simulation: plants, the desired image trajectory, the run
//! loop, trace recording and the energy audits.
//!
//! The controller is evaluated at every control tick. In [`Timing::Sampled`]
//! mode the command and the estimate rates are held over the tick while the
//! plant and the estimates are integrated with RK4 substeps. In
//! [`Timing::Continuous`] mode the controller is re-evaluated inside every
//! RK4 stage, which is the loop the stability analysis describes.

mod audit;
mod engine;
mod metrics;
mod plant;
mod trace;
mod trajectory;

pub use audit::{lyapunov_audit, passivity_audit, LyapunovReport, PassivityReport, Residual, V1_INCREASE_TOLERANCE};
pub use engine::{run, run_with_fault};
pub use metrics::{image_error_inf, metrics, window_peaks, Summary, CONVERGENCE_THRESHOLD_PX, LATE_WINDOW_START};
pub use plant::{velocity_servo_plant, ServoMode, ServoResponse};
pub use trace::{Abort, Trace, COLUMN_DOCS, TRACE_SCHEMA_VERSION};
pub use trajectory::{desired_trajectory, CircleTrajectory};

use nalgebra::{DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::arm::{ArmModel, JointState, DYN_PARAMS, REFERENCE_DYNAMIC_PARAMETERS};
use crate::camera::CameraModel;
use crate::control::{AdaptiveController, ControllerKind, Estimates, Gains};
use crate::error::{Error, Result};
use crate::kinreg::{KinematicRegressor, Parameterization, PhysicalKinematics};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Timing {
    /// Command and estimate rates held between control ticks.
    #[default]
    Sampled,
    /// Controller evaluated at every integrator stage.
    Continuous,
}

impl Timing {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Sampled => "sampled",
            Self::Continuous => "continuous",
        }
    }
}

/// Initial joint angles of the shipped scenarios. The feature starts about
/// 25 px away from the start of the desired circle.
pub const PAPER_INITIAL_JOINTS: [f64; 3] = [1.14, 0.22, 0.5];

/// Initial `â_d`: only the shoulder gravity parameter is nonzero.
pub const PAPER_INITIAL_DYNAMIC_ESTIMATE: [f64; DYN_PARAMS] = [0.0, 0.0, 0.0, 0.0, 30.0, 0.0];

/// Initial kinematic guesses `d̂_C = l̂₂ = l̂₃ = 3.2 m`, `f̂ = 0.09 m`, `β̂ = 2000`.
pub fn paper_initial_kinematics() -> PhysicalKinematics {
    PhysicalKinematics {
        offset: 3.2,
        l2: 3.2,
        l3: 3.2,
        focal_length: 0.09,
        scale: 2000.0,
        feature_offset: Vector3::zeros(),
        principal_point: nalgebra::Vector2::zeros(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub controller: ControllerKind,
    pub parameterization: Parameterization,
    pub timing: Timing,
    /// Only used by the kinematic scheme.
    pub servo: ServoMode,
    pub arm: ArmModel,
    pub camera: CameraModel,
    pub trajectory: CircleTrajectory,
    pub gains: Gains,
    pub initial_state: JointState,
    pub initial_estimates: Estimates,
    pub duration: f64,
    pub control_period: f64,
    pub substep: f64,
    /// Reference 8-entry dynamic parameter vector. Informational
    /// only; the simulator uses [`ArmModel::dynamic_parameters`].
    pub reference_dynamic_parameters: Vec<f64>,
}

impl Scenario {
    /// The reference circular-tracking scenario for `controller`.
    pub fn paper(controller: ControllerKind) -> Self {
        let kin = KinematicRegressor::new(Parameterization::Standard);
        let est_kin = kin
            .params_from_physical(&paper_initial_kinematics())
            .expect("standard parameterization accepts the reference guesses");
        Self {
            name: format!("paper_sec4_{}", controller.name()),
            controller,
            parameterization: Parameterization::Standard,
            timing: Timing::Sampled,
            servo: ServoMode::default(),
            arm: ArmModel::default(),
            camera: CameraModel::default(),
            trajectory: CircleTrajectory::default(),
            gains: Gains::reference(DYN_PARAMS, kin.depth_dim(), kin.perp_dim()),
            initial_state: JointState::at_rest(Vector3::from(PAPER_INITIAL_JOINTS)),
            initial_estimates: Estimates::new(DVector::from_row_slice(&PAPER_INITIAL_DYNAMIC_ESTIMATE), est_kin),
            duration: 30.0,
            control_period: 0.005,
            substep: 0.001,
            reference_dynamic_parameters: REFERENCE_DYNAMIC_PARAMETERS.to_vec(),
        }
    }

    pub fn regressor(&self) -> KinematicRegressor {
        KinematicRegressor::new(self.parameterization)
    }

    pub fn controller(&self) -> Result<AdaptiveController> {
        AdaptiveController::new(self.controller, self.gains.clone(), self.regressor())
    }

    /// Substeps per control tick.
    pub fn substeps(&self) -> usize {
        (self.control_period / self.substep).round() as usize
    }

    /// Number of control intervals in the run.
    pub fn ticks(&self) -> usize {
        (self.duration / self.control_period + 1e-9).floor() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        if !(self.duration.is_finite() && self.duration >= 0.0) {
            return cfg(format!("duration must be non-negative, got {}", self.duration));
        }
        for (name, v) in [("control_period", self.control_period), ("substep", self.substep)] {
            if !(v.is_finite() && v > 0.0) {
                return cfg(format!("{name} must be positive, got {v}"));
            }
        }
        let ratio = self.control_period / self.substep;
        if ratio.round() < 1.0 || (ratio - ratio.round()).abs() > 1e-9 * ratio {
            return cfg(format!(
                "control_period: {} must be an integer multiple of substep {}",
                self.control_period, self.substep
            ));
        }
        self.arm.validate()?;
        self.camera.validate()?;
        self.trajectory.validate()?;
        self.servo.validate()?;
        let kin = self.regressor();
        let est = &self.initial_estimates;
        if est.dynamic.len() != DYN_PARAMS {
            return cfg(format!("initial_estimates.dynamic must have {DYN_PARAMS} entries, got {}", est.dynamic.len()));
        }
        kin.check_dims(&est.kin()).map_err(|e| Error::Config(format!("initial_estimates: {e}")))?;
        if !est.iter().all(|v| v.is_finite()) {
            return cfg("initial_estimates: values must be finite".into());
        }
        self.controller()?;
        kin.true_params(&self.arm, &self.camera)
            .map_err(|e| Error::Config(format!("parameterization: {e}")))?;
        let st = &self.initial_state;
        if !st.q.iter().chain(st.qd.iter()).all(|v| v.is_finite()) {
            return cfg("initial_state: values must be finite".into());
        }
        self.camera
            .project(&self.arm.feature_position(&st.q))
            .map_err(|e| Error::Config(format!("initial_state.q: {e}")))?;
        Ok(())
    }
}
