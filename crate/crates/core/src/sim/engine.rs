use nalgebra::{DMatrix, DVector, Vector2, Vector3};

use super::plant::{velocity_servo_plant, ServoMode, ServoResponse};
use super::trace::{Abort, Trace};
use super::{Scenario, Timing};
use crate::arm::JointState;
use crate::camera::{task_jacobian, ImageState};
use crate::control::{AdaptiveController, Command, ControlFault, ControllerKind, ControllerOutput, Desired, Estimates, Measurement};
use crate::error::Result;
use crate::mathkit::rk4_step;

const Q: usize = 0;
const QD: usize = 3;
const EST: usize = 6;
const INTEGRALS: usize = 5;

/// Runs the scenario. Invalid scenarios are errors; a run that has to stop
/// early returns the partial trace with [`Trace::abort`] set.
pub fn run(scn: &Scenario) -> Result<Trace> {
    run_with_fault(scn, None)
}

pub fn run_with_fault(scn: &Scenario, fault: Option<ControlFault>) -> Result<Trace> {
    scn.validate()?;
    let engine = Engine::new(scn, fault)?;
    Ok(engine.run())
}

struct Snapshot {
    meas: Measurement,
    img: ImageState,
    desired: Desired,
    est: Estimates,
    out: ControllerOutput,
}

struct Engine<'a> {
    scn: &'a Scenario,
    ctrl: AdaptiveController,
    truth: Estimates,
    gamma_d_inv: DMatrix<f64>,
    gamma_z_inv: DMatrix<f64>,
    gamma_perp_inv: DMatrix<f64>,
    int_base: usize,
}

fn spd_inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.clone().cholesky().expect("gains are validated SPD").inverse()
}

fn v3(s: &DVector<f64>, at: usize) -> Vector3<f64> {
    Vector3::new(s[at], s[at + 1], s[at + 2])
}

fn quad(m: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    v.dot(&(m * v))
}

impl<'a> Engine<'a> {
    fn new(scn: &'a Scenario, fault: Option<ControlFault>) -> Result<Self> {
        let ctrl = scn.controller()?.with_fault(fault);
        let kin = ctrl.regressor().true_params(&scn.arm, &scn.camera)?;
        let truth = Estimates::new(scn.arm.dynamic_parameters(), kin);
        let g = ctrl.gains();
        Ok(Self {
            scn,
            truth,
            gamma_d_inv: spd_inverse(&g.gamma_d),
            gamma_z_inv: spd_inverse(&g.gamma_z),
            gamma_perp_inv: spd_inverse(&g.gamma_z_perp),
            int_base: EST + scn.initial_estimates.len(),
            ctrl,
        })
    }

    fn kind(&self) -> ControllerKind {
        self.scn.controller
    }

    fn ideal_servo(&self) -> bool {
        self.kind() == ControllerKind::Kinematic && self.scn.servo == ServoMode::Ideal
    }

    fn columns(&self) -> Vec<String> {
        let mut c: Vec<String> = vec!["t".into()];
        let mut idx = |prefix: &str, n: usize| {
            for i in 1..=n {
                c.push(format!("{prefix}_{i}"));
            }
        };
        idx("q", 3);
        idx("qd", 3);
        idx("x", 2);
        idx("xdot", 2);
        idx("xd", 2);
        idx("xd_dot", 2);
        idx("dx", 2);
        let est = &self.scn.initial_estimates;
        let cmd = if self.kind().is_torque() { "tau" } else { "qd_cmd" };
        let mut tail: Vec<String> = vec!["z".into(), "z_hat".into()];
        for (prefix, n) in [
            (cmd, 3),
            ("qd_r", 3),
            ("qdd_r", 3),
            ("s", 3),
            ("a_d_hat", est.dynamic.len()),
            ("a_z_hat", est.depth.len()),
            ("a_z_perp_hat", est.perp.len()),
        ] {
            tail.extend((1..=n).map(|i| format!("{prefix}_{i}")));
        }
        c.extend(tail);
        for name in [
            "v_s",
            "v_err",
            "v1",
            "v2",
            "int_xu",
            "int_dxubar",
            "int_v1dot",
            "int_v2dot",
            "int_ss",
            "v1dot_direct",
            "v1dot_claimed",
            "v2dot_direct",
            "v2dot_claimed",
            "v2dot_bound",
        ] {
            c.push(name.into());
        }
        c
    }

    fn initial_state(&self) -> DVector<f64> {
        let mut s = DVector::zeros(self.int_base + INTEGRALS);
        let st = &self.scn.initial_state;
        s.rows_mut(Q, 3).copy_from(&st.q);
        s.rows_mut(QD, 3).copy_from(&st.qd);
        self.scn.initial_estimates.pack_into(&mut s, EST);
        s
    }

    /// Measures the plant and evaluates the controller at `(t, s)`. Under the
    /// ideal servo the joint velocity is the velocity command itself.
    fn snapshot(&self, t: f64, s: &DVector<f64>, held: Option<&Command>) -> Result<Snapshot> {
        let scn = self.scn;
        let q = v3(s, Q);
        let est = scn.initial_estimates.unpack_like(s, EST);
        let desired = scn.trajectory.sample(t);
        let qd = if self.ideal_servo() {
            match held {
                Some(cmd) => cmd.value(),
                None => {
                    let (x, _) = scn.camera.project(&scn.arm.feature_position(&q))?;
                    self.ctrl.kinematic_command(&est, &q, &x, &desired)?.0
                }
            }
        } else {
            v3(s, QD)
        };
        let img = scn.camera.image_state(&scn.arm, &q, &qd)?;
        let meas = Measurement { q, qd, x: img.x, x_dot: img.x_dot };
        let out = self.ctrl.evaluate(&est, &meas, &desired)?;
        Ok(Snapshot { meas, img, desired, est, out })
    }

    fn joint_acceleration(&self, meas: &Measurement, command: &Command) -> Result<Vector3<f64>> {
        let state = JointState { q: meas.q, qd: meas.qd };
        match *command {
            Command::Torque(tau) => self.scn.arm.forward_dynamics(&state, &tau),
            Command::Velocity(cmd) => match velocity_servo_plant(&cmd, &state, self.scn.servo) {
                ServoResponse::Velocity(_) => Ok(Vector3::zeros()),
                ServoResponse::Acceleration(a) => Ok(a),
            },
        }
    }

    /// True depth Jacobians, `J*` and the matrix multiplying `s` in the V₂ rate.
    fn true_jacobians(&self, snap: &Snapshot) -> (nalgebra::RowVector3<f64>, nalgebra::Matrix2x3<f64>, nalgebra::Matrix2x3<f64>, nalgebra::Matrix2x3<f64>) {
        let scn = self.scn;
        let q = &snap.meas.q;
        let jz = scn.camera.depth_jacobian(&scn.arm, q);
        let jp = scn.camera.depth_rate_independent_jacobian(&scn.arm, q);
        let j_star = task_jacobian(&jp, &jz, &snap.meas.x, &snap.desired.x);
        let j_s = match self.kind() {
            ControllerKind::TransposeJacobian => snap.out.refs.velocity.j_star,
            _ => j_star,
        };
        (jz, jp, j_star, j_s)
    }

    /// `[xᵀu, Δxᵀū, V̇₁ claimed, V̇₂ claimed, sᵀs]`.
    fn integrands(&self, snap: &Snapshot) -> [f64; INTEGRALS] {
        let (jz, jp, j_star, j_s) = self.true_jacobians(snap);
        let (x, qd, z) = (snap.meas.x, snap.meas.qd, snap.img.z);
        let dx = x - snap.desired.x;
        let u = (jp - x * 0.5 * jz) * qd;
        let ubar = j_star * qd - snap.desired.x_dot * z;
        let s = snap.out.s;
        [x.dot(&u), dx.dot(&ubar), self.v1_claimed(snap), self.v2_claimed(z, &dx, &j_s, &s), s.dot(&s)]
    }

    fn v1_claimed(&self, snap: &Snapshot) -> f64 {
        if !self.kind().is_torque() {
            return 0.0;
        }
        let s = snap.out.s;
        -(s.transpose() * self.ctrl.feedback_matrix(&snap.out.refs.velocity.j_star) * s)[0]
    }

    fn v2_claimed(&self, z: f64, dx: &Vector2<f64>, j_s: &nalgebra::Matrix2x3<f64>, s: &Vector3<f64>) -> f64 {
        -self.ctrl.gains().alpha * z * dx.dot(dx) + dx.dot(&(j_s * s))
    }

    fn rhs(&self, t: f64, s: &DVector<f64>, held: Option<&ControllerOutput>) -> Result<DVector<f64>> {
        let snap = self.snapshot(t, s, held.map(|h| &h.command))?;
        let applied = held.unwrap_or(&snap.out);
        let mut ds = DVector::zeros(s.len());
        ds.rows_mut(Q, 3).copy_from(&snap.meas.qd);
        let qdd = self.joint_acceleration(&snap.meas, &applied.command)?;
        ds.rows_mut(QD, 3).copy_from(&qdd);
        applied.rates.pack_into(&mut ds, EST);
        for (i, v) in self.integrands(&snap).into_iter().enumerate() {
            ds[self.int_base + i] = v;
        }
        Ok(ds)
    }

    fn errors(&self, est: &Estimates) -> Estimates {
        Estimates {
            dynamic: &est.dynamic - &self.truth.dynamic,
            depth: &est.depth - &self.truth.depth,
            perp: &est.perp - &self.truth.perp,
        }
    }

    fn row(&self, t: f64, s: &DVector<f64>, snap: &Snapshot) -> Result<Vec<f64>> {
        let scn = self.scn;
        let (meas, img, d, out) = (&snap.meas, &snap.img, &snap.desired, &snap.out);
        let dx = meas.x - d.x;
        let z = img.z;
        let alpha = self.ctrl.gains().alpha;
        let err = self.errors(&snap.est);
        let rates = &out.rates;
        let sv = out.s;

        let v_s = 0.5 * z * meas.x.dot(&meas.x);
        let v_err = 0.5 * z * dx.dot(&dx);
        let v2 = v_err + 0.5 * quad(&self.gamma_z_inv, &err.depth) + 0.5 * quad(&self.gamma_perp_inv, &err.perp);
        let v2_direct = 0.5 * img.z_dot * dx.dot(&dx)
            + z * dx.dot(&(meas.x_dot - d.x_dot))
            + err.depth.dot(&(&self.gamma_z_inv * &rates.depth))
            + err.perp.dot(&(&self.gamma_perp_inv * &rates.perp));
        let (_, _, _, j_s) = self.true_jacobians(snap);
        let v2_claimed = self.v2_claimed(z, &dx, &j_s, &sv);
        let js_s = j_s * sv;
        let v2_bound = -0.5 * alpha * z * dx.dot(&dx) + js_s.dot(&js_s) / (2.0 * alpha * z);

        let (v1, v1_direct) = if self.kind().is_torque() {
            let m = scn.arm.inertia(&meas.q);
            let m_dot = scn.arm.inertia_rate(&meas.q, &meas.qd);
            let qdd = self.joint_acceleration(meas, &out.command)?;
            let s_dot = qdd - out.refs.qdd_r;
            let v1 = 0.5 * (sv.transpose() * m * sv)[0] + 0.5 * quad(&self.gamma_d_inv, &err.dynamic);
            let direct = (sv.transpose() * m * s_dot)[0]
                + 0.5 * (sv.transpose() * m_dot * sv)[0]
                + err.dynamic.dot(&(&self.gamma_d_inv * &rates.dynamic));
            (v1, direct)
        } else {
            (0.0, 0.0)
        };

        let ib = self.int_base;
        let mut row = Vec::with_capacity(64);
        row.push(t);
        row.extend(meas.q.iter());
        row.extend(meas.qd.iter());
        row.extend(meas.x.iter());
        row.extend(meas.x_dot.iter());
        row.extend(d.x.iter());
        row.extend(d.x_dot.iter());
        row.extend(dx.iter());
        row.push(z);
        row.push(out.refs.velocity.z_hat);
        row.extend(out.command.value().iter());
        row.extend(out.refs.velocity.qd_r.iter());
        row.extend(out.refs.qdd_r.iter());
        row.extend(sv.iter());
        row.extend(snap.est.iter());
        row.extend([v_s, v_err, v1, v2]);
        row.extend(s.rows(ib, INTEGRALS).iter());
        row.extend([v1_direct, self.v1_claimed(snap), v2_direct, v2_claimed, v2_bound]);
        Ok(row)
    }

    fn run(&self) -> Trace {
        let scn = self.scn;
        let mut trace = Trace::new(self.columns());
        let ticks = scn.ticks();
        if ticks == 0 {
            return trace;
        }
        let m = scn.substeps();
        let h = scn.substep;
        let mut s = self.initial_state();
        for k in 0..=ticks {
            let t = k as f64 * scn.control_period;
            let step = self.snapshot(t, &s, None).and_then(|snap| {
                let row = self.row(t, &s, &snap)?;
                Ok((snap, row))
            });
            let (snap, row) = match step {
                Ok(v) => v,
                Err(e) => {
                    trace.abort = Some(Abort { t, reason: e.to_string() });
                    return trace;
                }
            };
            trace.push(row);
            if k == ticks {
                break;
            }
            if self.ideal_servo() {
                s.rows_mut(QD, 3).copy_from(&snap.meas.qd);
            }
            let held = match scn.timing {
                Timing::Sampled => Some(&snap.out),
                Timing::Continuous => None,
            };
            for j in 0..m {
                let t0 = t + j as f64 * h;
                match rk4_step(|tt, ss| self.rhs(tt, ss, held), t0, &s, h) {
                    Ok(next) => s = next,
                    Err(e) => {
                        trace.abort = Some(Abort { t: t0, reason: e.to_string() });
                        return trace;
                    }
                }
            }
        }
        trace
    }
}
