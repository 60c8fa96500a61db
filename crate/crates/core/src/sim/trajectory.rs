use std::f64::consts::PI;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::control::Desired;
use crate::error::{Error, Result};

/// Circle traced at constant angular rate, starting at angle zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircleTrajectory {
    pub center: Vector2<f64>,
    pub radius: f64,
    /// rad/s
    pub angular_rate: f64,
}

impl Default for CircleTrajectory {
    fn default() -> Self {
        Self { center: Vector2::new(53.0, 79.0), radius: 21.0, angular_rate: PI / 3.0 }
    }
}

impl CircleTrajectory {
    /// A fixed target at `point`.
    pub fn stationary(point: Vector2<f64>) -> Self {
        Self { center: point, radius: 0.0, angular_rate: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.center.iter().all(|v| v.is_finite())
            && self.radius.is_finite()
            && self.radius >= 0.0
            && self.angular_rate.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::Config("trajectory: values must be finite with a non-negative radius".into()))
        }
    }

    pub fn sample(&self, t: f64) -> Desired {
        let w = self.angular_rate;
        let (s, c) = (w * t).sin_cos();
        let r = self.radius;
        Desired {
            x: self.center + Vector2::new(r * c, r * s),
            x_dot: Vector2::new(-r * w * s, r * w * c),
            x_ddot: Vector2::new(-r * w * w * c, -r * w * w * s),
        }
    }
}

/// The default circular image trajectory and its first two derivatives.
pub fn desired_trajectory(t: f64) -> Desired {
    CircleTrajectory::default().sample(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn start_point() {
        let d = desired_trajectory(0.0);
        assert_eq!(d.x, Vector2::new(74.0, 79.0));
    }

    #[test]
    fn quarter_period() {
        let d = desired_trajectory(1.5);
        assert!((d.x - Vector2::new(53.0, 100.0)).norm() < 1e-12);
    }

    #[test]
    fn harmonic_identity() {
        let w2 = (PI / 3.0).powi(2);
        for k in 0..50 {
            let d = desired_trajectory(0.37 * k as f64);
            let expected = -(d.x - Vector2::new(53.0, 79.0)) * w2;
            assert!((d.x_ddot - expected).norm() < 1e-12);
        }
    }

    #[test]
    fn derivatives_match_differences() {
        let h = 1e-5;
        for k in 0..20 {
            let t = 0.61 * k as f64;
            let (a, b, d) = (desired_trajectory(t - h), desired_trajectory(t + h), desired_trajectory(t));
            assert!(((b.x - a.x) / (2.0 * h) - d.x_dot).norm() < 1e-6);
            assert!(((b.x_dot - a.x_dot) / (2.0 * h) - d.x_ddot).norm() < 1e-6);
        }
    }

    #[test]
    fn stationary_has_zero_derivatives() {
        let d = CircleTrajectory::stationary(Vector2::new(1.0, 2.0)).sample(3.0);
        assert_eq!(d.x, Vector2::new(1.0, 2.0));
        assert_eq!(d.x_dot, Vector2::zeros());
        assert_eq!(d.x_ddot, Vector2::zeros());
    }
}
