use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::arm::JointState;
use crate::error::{Error, Result};

/// Inner joint-velocity loop assumed under the kinematic scheme.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ServoMode {
    /// `q̇ ≡ q̇_cmd`.
    Ideal,
    /// `q̈ = (q̇_cmd − q̇)/T`.
    FirstOrder { time_constant: f64 },
}

impl Default for ServoMode {
    fn default() -> Self {
        Self::FirstOrder { time_constant: 0.02 }
    }
}

impl ServoMode {
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::FirstOrder { time_constant } if !(time_constant.is_finite() && *time_constant > 0.0) => {
                Err(Error::Config(format!("servo.time_constant must be positive, got {time_constant}")))
            }
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Ideal => "ideal",
            Self::FirstOrder { .. } => "first-order",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ServoResponse {
    /// Joint velocity imposed directly.
    Velocity(Vector3<f64>),
    Acceleration(Vector3<f64>),
}

pub fn velocity_servo_plant(cmd: &Vector3<f64>, state: &JointState, mode: ServoMode) -> ServoResponse {
    match mode {
        ServoMode::Ideal => ServoResponse::Velocity(*cmd),
        ServoMode::FirstOrder { time_constant } => ServoResponse::Acceleration((cmd - state.qd) / time_constant),
    }
}
