//! Self-check suites: regressor identities, Jacobian oracles and the energy
//! audits, each reporting measured residuals against fixed thresholds.
//!
//! Suites are independent and may run on separate threads. A [`Fault`] can
//! be injected to confirm that a suite actually detects the defect it is
//! meant to guard against.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::arm::{dynamics_regressor, ArmModel};
use crate::camera::CameraModel;
use crate::control::{AdaptiveController, ControlFault, ControllerKind, Estimates, Gains, Measurement};
use crate::error::{Error, Result};
use crate::kinreg::{KinematicRegressor, Parameterization, PhysicalKinematics};
use crate::sim::{
    lyapunov_audit, passivity_audit, run_with_fault, CircleTrajectory, Scenario, ServoMode, Timing,
    V1_INCREASE_TOLERANCE,
};

pub const REGRESSOR_SAMPLES: usize = 1000;
pub const REGRESSOR_TOLERANCE: f64 = 1e-10;
pub const JACOBIAN_SAMPLES: usize = 200;
pub const JACOBIAN_TOLERANCE: f64 = 1e-4;
pub const AUDIT_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Regressors,
    Jacobians,
    Passivity,
    Lyapunov,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::Regressors, Suite::Jacobians, Suite::Passivity, Suite::Lyapunov];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Regressors => "regressors",
            Self::Jacobians => "jacobians",
            Self::Passivity => "passivity",
            Self::Lyapunov => "lyapunov",
        }
    }

    /// Parses a suite name; `all` expands to every suite.
    pub fn parse_list(name: &str) -> Result<Vec<Suite>> {
        if name == "all" {
            return Ok(Self::ALL.to_vec());
        }
        Ok(vec![name.parse()?])
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown suite `{s}` (regressors|jacobians|passivity|lyapunov|all)")))
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Deliberate defects used to show that the suites have teeth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fault {
    /// Scales the image rows of `D̄` inside the `Y_z^⊥` regressor.
    ScaleImageRows(f64),
    /// Adapts `â_z^⊥` with the wrong sign.
    FlipPerpAdaptationSign,
}

impl Fault {
    fn regressor(&self, kin: KinematicRegressor) -> KinematicRegressor {
        match self {
            Fault::ScaleImageRows(f) => kin.with_perp_scale_fault(*f),
            _ => kin,
        }
    }

    fn control(&self) -> Option<ControlFault> {
        match self {
            Fault::FlipPerpAdaptationSign => Some(ControlFault::FlipPerpAdaptationSign),
            _ => None,
        }
    }
}

fn regressor_for(p: Parameterization, fault: Option<Fault>) -> KinematicRegressor {
    let kin = KinematicRegressor::new(p);
    match fault {
        Some(f) => f.regressor(kin),
        None => kin,
    }
}

/// One measured quantity against its threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measure {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl Measure {
    /// Passes when `value <= threshold`; NaN fails.
    pub fn at_most(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self { name: name.into(), value, threshold, passed: value <= threshold }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub passed: bool,
    pub measures: Vec<Measure>,
    /// Set when the suite could not run to completion.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl SuiteReport {
    fn new(suite: Suite, result: Result<Vec<Measure>>) -> Self {
        match result {
            Ok(measures) => Self { suite, passed: measures.iter().all(|m| m.passed), measures, error: None },
            Err(e) => Self { suite, passed: false, measures: Vec::new(), error: Some(e.to_string()) },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fault: Option<Fault>,
    pub suites: Vec<SuiteReport>,
}

pub fn run_suite(suite: Suite, fault: Option<Fault>) -> SuiteReport {
    let result = match suite {
        Suite::Regressors => regressor_suite(fault),
        Suite::Jacobians => jacobian_suite(fault),
        Suite::Passivity => passivity_suite(fault),
        Suite::Lyapunov => lyapunov_suite(fault),
    };
    SuiteReport::new(suite, result)
}

/// Runs the suites on one thread each; the report keeps the requested order.
pub fn run_suites(suites: &[Suite], fault: Option<Fault>) -> CheckReport {
    let reports: Vec<SuiteReport> = std::thread::scope(|scope| {
        let handles: Vec<_> = suites.iter().map(|&s| scope.spawn(move || run_suite(s, fault))).collect();
        handles.into_iter().map(|h| h.join().expect("check suite panicked")).collect()
    });
    CheckReport { passed: reports.iter().all(|r| r.passed), fault, suites: reports }
}

/// Models exercising every column of a parameterization.
fn models(p: Parameterization) -> (ArmModel, CameraModel) {
    match p {
        Parameterization::Standard => (ArmModel::default(), CameraModel::default()),
        Parameterization::Extended => (
            ArmModel { feature_offset: Vector3::new(0.15, -0.2, 0.1), ..Default::default() },
            CameraModel { principal_point: Vector2::new(14.0, -9.0), ..Default::default() },
        ),
    }
}

fn random_q(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.2..1.2), rng.gen_range(-2.0..2.0))
}

fn random_vec3(rng: &mut ChaCha8Rng, span: f64) -> Vector3<f64> {
    Vector3::from_fn(|_, _| rng.gen_range(-span..span))
}

fn random_vec2(rng: &mut ChaCha8Rng, span: f64) -> Vector2<f64> {
    Vector2::from_fn(|_, _| rng.gen_range(-span..span))
}

/// Error of a linear combination `Y a` against an oracle, relative to the
/// larger of the oracle and the summed magnitudes `|Y||a|`, so cancellation
/// in the sum does not inflate the figure.
fn linear_residual(y: &DMatrix<f64>, a: &DVector<f64>, oracle: &[f64]) -> f64 {
    let lhs = y * a;
    let magnitude = y.abs() * a.abs();
    let mut diff = 0.0f64;
    let mut scale = 0.0f64;
    for i in 0..oracle.len() {
        diff = diff.max((lhs[i] - oracle[i]).abs());
        scale = scale.max(oracle[i].abs()).max(magnitude[i]);
    }
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

fn regressor_suite(fault: Option<Fault>) -> Result<Vec<Measure>> {
    let mut out = Vec::new();
    for p in [Parameterization::Standard, Parameterization::Extended] {
        let (arm, cam) = models(p);
        let kin = regressor_for(p, fault);
        let truth = KinematicRegressor::new(p).true_params(&arm, &cam)?;
        let a_d = arm.dynamic_parameters();
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed ^ p as u64);
        let mut worst = [0.0f64; 5];
        for _ in 0..REGRESSOR_SAMPLES {
            let q = random_q(&mut rng);
            let qd = random_vec3(&mut rng, 2.0);
            let phi = random_vec2(&mut rng, 100.0);
            let xi = random_vec3(&mut rng, 2.0);
            let z = cam.depth(&arm.feature_position(&q));
            let jz = cam.depth_jacobian(&arm, &q);
            let z_dot = (jz * qd)[0];

            let r = linear_residual(&kin.y_z(&q, &phi), &truth.a_z, (phi * z).as_slice());
            worst[0] = worst[0].max(r);

            let r = linear_residual(&kin.y_z_bar(&q, &qd, &phi), &truth.a_z, (phi * z_dot).as_slice());
            worst[1] = worst[1].max(r);

            let oracle = cam.depth_rate_independent_jacobian(&arm, &q) * xi;
            let r = linear_residual(&kin.y_z_perp(&q, &xi), &truth.a_z_perp, oracle.as_slice());
            worst[2] = worst[2].max(r);

            let qd_r = random_vec3(&mut rng, 2.0);
            let xr_dot = random_vec2(&mut rng, 50.0);
            let x_sum = random_vec2(&mut rng, 200.0);
            let oracle = xr_dot * z + x_sum * (0.5 * (jz * qd_r)[0]);
            let r = linear_residual(&kin.y_z_star(&q, &qd_r, &x_sum, &xr_dot), &truth.a_z, oracle.as_slice());
            worst[3] = worst[3].max(r);

            let zeta = random_vec3(&mut rng, 2.0);
            let zeta_dot = random_vec3(&mut rng, 5.0);
            let oracle = arm.inertia(&q) * zeta_dot + arm.coriolis(&q, &qd) * zeta + arm.gravity_torque(&q);
            let y_d = dynamics_regressor(&q, &qd, &zeta, &zeta_dot);
            let y_d = DMatrix::from_column_slice(3, y_d.ncols(), y_d.as_slice());
            let r = linear_residual(&y_d, &a_d, oracle.as_slice());
            worst[4] = worst[4].max(r);
        }
        let tag = p.name();
        for (name, value) in ["y_z", "y_z_bar", "y_z_perp", "y_z_star", "y_d"].iter().zip(worst) {
            out.push(Measure::at_most(format!("{tag}.{name}"), value, REGRESSOR_TOLERANCE));
        }
    }
    Ok(out)
}

fn relative(diff: f64, scale: f64) -> f64 {
    diff / scale.max(1e-12)
}

fn jacobian_suite(fault: Option<Fault>) -> Result<Vec<Measure>> {
    let mut out = Vec::new();
    let h = 1e-6;
    for p in [Parameterization::Standard, Parameterization::Extended] {
        let (arm, cam) = models(p);
        let kin = regressor_for(p, fault);
        let truth = KinematicRegressor::new(p).true_params(&arm, &cam)?;
        let ctrl = AdaptiveController::new(
            ControllerKind::InverseJacobian,
            Gains::reference(crate::arm::DYN_PARAMS, kin.depth_dim(), kin.perp_dim()),
            kin.clone(),
        )?;
        let guess = KinematicRegressor::new(p).params_from_physical(&PhysicalKinematics {
            offset: 3.2,
            l2: 3.2,
            l3: 3.2,
            focal_length: 0.09,
            scale: 2000.0,
            ..PhysicalKinematics::from_models(&arm, &cam)
        })?;
        let est = Estimates::new(DVector::from_element(crate::arm::DYN_PARAMS, 1.0), guess);
        let traj = CircleTrajectory::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0x1ac0 ^ p as u64);
        let mut worst = [0.0f64; 5];
        let mut used = 0;
        while used < JACOBIAN_SAMPLES {
            let q = random_q(&mut rng);
            let qd = random_vec3(&mut rng, 1.0);
            let qdd = random_vec3(&mut rng, 1.0);
            let t0 = rng.gen_range(0.0..6.0);
            let path = |t: f64| q + qd * t + qdd * (0.5 * t * t);
            let image = |t: f64| cam.project(&arm.feature_position(&path(t)));
            let (Ok((xp, zp)), Ok((xm, zm))) = (image(h), image(-h)) else { continue };
            let img = cam.image_state(&arm, &q, &qd)?;

            let fd = (xp - xm) / (2.0 * h);
            let model = cam.overall_jacobian(&arm, &q, &img.x) * qd / img.z;
            worst[0] = worst[0].max(relative((fd - model).norm(), fd.norm()));

            let fd = (zp - zm) / (2.0 * h);
            let model = (cam.depth_jacobian(&arm, &q) * qd)[0];
            worst[1] = worst[1].max(relative((fd - model).abs(), fd.abs()));

            // z·x is affine in the feature position, with rate J_z^⊥ q̇.
            let fd = (xp * zp - xm * zm) / (2.0 * h);
            let model = cam.depth_rate_independent_jacobian(&arm, &q) * qd;
            worst[2] = worst[2].max(relative((fd - model).norm(), fd.norm()));

            // Parameterized Jacobians evaluated at the true parameters.
            let geo = cam.depth_rate_independent_jacobian(&arm, &q);
            let par = kin.perp_jacobian(&truth.a_z_perp, &q);
            worst[3] = worst[3].max(relative((geo - par).norm(), geo.norm()));

            // q̈_r against differences of q̇_r along the motion, with the
            // estimates drifting at their adaptation rates.
            let meas = Measurement { q, qd, x: img.x, x_dot: img.x_dot };
            let Ok(eval) = ctrl.evaluate(&est, &meas, &traj.sample(t0)) else { continue };
            let qd_r_at = |t: f64| -> Result<Vector3<f64>> {
                let e = Estimates {
                    dynamic: est.dynamic.clone(),
                    depth: &est.depth + &eval.rates.depth * t,
                    perp: &est.perp + &eval.rates.perp * t,
                };
                let (x, _) = image(t)?;
                Ok(ctrl.reference_velocity(&e, &path(t), &x, &traj.sample(t0 + t))?.qd_r)
            };
            // Far from the target the estimates drift quickly, so use the
            // five-point stencil to keep truncation error out of the figure.
            let hq = 1e-6;
            let (Ok(v2p), Ok(vp), Ok(vm), Ok(v2m)) = (qd_r_at(2.0 * hq), qd_r_at(hq), qd_r_at(-hq), qd_r_at(-2.0 * hq))
            else {
                continue;
            };
            let fd = (v2m - v2p + (vp - vm) * 8.0) / (12.0 * hq);
            let model = eval.refs.qdd_r;
            worst[4] = worst[4].max(relative((fd - model).norm(), fd.norm().max(1.0)));
            used += 1;
        }
        let tag = p.name();
        for (name, value) in ["j", "j_z", "j_z_perp", "j_z_perp_regressor", "qdd_r"].iter().zip(worst) {
            out.push(Measure::at_most(format!("{tag}.{name}"), value, JACOBIAN_TOLERANCE));
        }
    }
    Ok(out)
}

/// The scenarios shipped as config files, plus the ideal-servo kinematic run.
pub fn shipped_scenarios() -> Vec<Scenario> {
    let mut out: Vec<Scenario> = [ControllerKind::InverseJacobian, ControllerKind::TransposeJacobian, ControllerKind::Kinematic]
        .into_iter()
        .map(Scenario::paper)
        .collect();
    let mut ideal = Scenario::paper(ControllerKind::Kinematic);
    ideal.servo = ServoMode::Ideal;
    ideal.name = "paper_sec4_kinematic_ideal".into();
    out.push(ideal);
    out
}

fn run_checked(scn: &Scenario, fault: Option<Fault>) -> Result<crate::sim::Trace> {
    let trace = run_with_fault(scn, fault.and_then(|f| f.control()))?;
    if let Some(a) = &trace.abort {
        return Err(Error::Aborted { scenario: scn.name.clone(), t: a.t, reason: a.reason.clone() });
    }
    Ok(trace)
}

fn passivity_suite(fault: Option<Fault>) -> Result<Vec<Measure>> {
    let mut out = Vec::new();
    for scn in shipped_scenarios() {
        let rep = passivity_audit(&run_checked(&scn, fault)?)?;
        let n = &scn.name;
        out.push(Measure::at_most(format!("{n}.storage"), rep.storage.max_relative, AUDIT_TOLERANCE));
        out.push(Measure::at_most(format!("{n}.error_storage"), rep.error_storage.max_relative, AUDIT_TOLERANCE));
        out.push(Measure::at_most(format!("{n}.inequality_violations"), rep.inequality_violations as f64, 0.0));
    }
    Ok(out)
}

/// Scenarios for the Lyapunov audit. The identities are statements about
/// the continuous-time loop, so the controller is re-evaluated at every
/// integration stage.
pub fn lyapunov_scenarios() -> Vec<Scenario> {
    [ControllerKind::InverseJacobian, ControllerKind::Kinematic]
        .into_iter()
        .map(|k| {
            let mut s = Scenario::paper(k);
            s.timing = Timing::Continuous;
            s.name = format!("{}_continuous", s.name);
            s
        })
        .collect()
}

fn lyapunov_suite(fault: Option<Fault>) -> Result<Vec<Measure>> {
    let mut out = Vec::new();
    for scn in lyapunov_scenarios() {
        let rep = lyapunov_audit(&run_checked(&scn, fault)?)?;
        let n = &scn.name;
        if scn.controller.is_torque() {
            out.push(Measure::at_most(format!("{n}.v1"), rep.v1.max_relative, AUDIT_TOLERANCE));
            out.push(Measure::at_most(format!("{n}.v1_rate"), rep.v1_rate.max_relative, AUDIT_TOLERANCE));
            out.push(Measure::at_most(format!("{n}.v1_max_increase"), rep.v1_max_increase, V1_INCREASE_TOLERANCE));
        }
        out.push(Measure::at_most(format!("{n}.v2"), rep.v2.max_relative, AUDIT_TOLERANCE));
        out.push(Measure::at_most(format!("{n}.v2_rate"), rep.v2_rate.max_relative, AUDIT_TOLERANCE));
        out.push(Measure::at_most(format!("{n}.v2_bound_violations"), rep.v2_bound_violations as f64, 0.0));
    }
    Ok(out)
}
