//! Energy audits over a recorded trace.
//!
//! Identity checks compare the change of a storage function against the
//! running integral of its predicted rate, both recorded by the engine:
//! `|∫ẏ − (V(t) − V(0))| / (1 + |V(t)|)`, maximized over the ticks.

use serde::{Deserialize, Serialize};

use super::trace::Trace;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub max_relative: f64,
    /// Time of the worst tick.
    pub at_t: f64,
}

impl Residual {
    fn zero() -> Self {
        Self { max_relative: 0.0, at_t: 0.0 }
    }

    fn update(&mut self, r: f64, t: f64) {
        // NaN compares false, so force it to be reported.
        if r > self.max_relative || r.is_nan() && !self.max_relative.is_nan() {
            self.max_relative = r;
            self.at_t = t;
        }
    }
}

fn identity_residual(t: &[f64], v: &[f64], integral: &[f64]) -> Residual {
    let mut res = Residual::zero();
    if let Some(&v0) = v.first() {
        for k in 0..t.len() {
            let r = (integral[k] - (v[k] - v0)).abs() / (1.0 + v[k].abs());
            res.update(r, t[k]);
        }
    }
    res
}

fn rate_residual(t: &[f64], direct: &[f64], claimed: &[f64]) -> Residual {
    let mut res = Residual::zero();
    for k in 0..t.len() {
        let r = (direct[k] - claimed[k]).abs() / (1.0 + direct[k].abs().max(claimed[k].abs()));
        res.update(r, t[k]);
    }
    res
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassivityReport {
    /// `∫xᵀu` against the change of `z/2 xᵀx`.
    pub storage: Residual,
    /// `∫Δxᵀū` against the change of `z/2 ΔxᵀΔx`.
    pub error_storage: Residual,
    /// Smallest value of `∫xᵀu + V_s(0)`; passivity requires it to be non-negative.
    pub min_margin: f64,
    pub inequality_violations: usize,
}

pub fn passivity_audit(trace: &Trace) -> Result<PassivityReport> {
    let t = trace.times();
    let v_s = trace.column("v_s")?;
    let int_xu = trace.column("int_xu")?;
    let v_err = trace.column("v_err")?;
    let int_dx = trace.column("int_dxubar")?;
    let v0 = v_s.first().copied().unwrap_or(0.0);
    let margins: Vec<f64> = int_xu.iter().map(|i| i + v0).collect();
    Ok(PassivityReport {
        storage: identity_residual(&t, &v_s, &int_xu),
        error_storage: identity_residual(&t, &v_err, &int_dx),
        min_margin: margins.iter().copied().fold(f64::INFINITY, f64::min),
        inequality_violations: margins.iter().filter(|m| !(**m >= 0.0)).count(),
    })
}

/// Tolerance on tick-to-tick growth of `V₁`.
pub const V1_INCREASE_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovReport {
    /// Integrated `V̇₁` identity. Zero for the kinematic scheme.
    pub v1: Residual,
    pub v2: Residual,
    /// Pointwise agreement of the directly computed and predicted rates.
    pub v1_rate: Residual,
    pub v2_rate: Residual,
    /// Largest tick-to-tick increase of `V₁`.
    pub v1_max_increase: f64,
    /// Ticks at which `V̇₂` exceeds its quadratic upper bound.
    pub v2_bound_violations: usize,
}

pub fn lyapunov_audit(trace: &Trace) -> Result<LyapunovReport> {
    let t = trace.times();
    let v1 = trace.column("v1")?;
    let v2 = trace.column("v2")?;
    let (d1, c1) = (trace.column("v1dot_direct")?, trace.column("v1dot_claimed")?);
    let (d2, c2) = (trace.column("v2dot_direct")?, trace.column("v2dot_claimed")?);
    let bound = trace.column("v2dot_bound")?;
    let v1_max_increase = v1.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    let v2_bound_violations = d2
        .iter()
        .zip(&bound)
        .filter(|(d, b)| !(**d <= **b + 1e-6 * (1.0 + d.abs() + b.abs())))
        .count();
    Ok(LyapunovReport {
        v1: identity_residual(&t, &v1, &trace.column("int_v1dot")?),
        v2: identity_residual(&t, &v2, &trace.column("int_v2dot")?),
        v1_rate: rate_residual(&t, &d1, &c1),
        v2_rate: rate_residual(&t, &d2, &c2),
        v1_max_increase: if v1.len() < 2 { 0.0 } else { v1_max_increase },
        v2_bound_violations,
    })
}
