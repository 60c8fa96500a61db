//! Scenario files.
//!
//! A scenario file is a TOML document. Unknown keys are rejected, every
//! gain matrix must be symmetric positive definite, and errors carry the
//! file, line and key they refer to. Gains may be written as a scalar `s`
//! (meaning `s·I`) or as a full matrix. Initial kinematic estimates are
//! given either as physical guesses (`[initial_estimates.physical]`) or as
//! raw parameter vectors (`[initial_estimates.raw]`).
//!
//! ```toml
//! name = "example"
//! controller = "inverse"      # inverse | transpose | kinematic
//! parameterization = "standard"
//! timing = "sampled"          # sampled | continuous
//! duration = 30.0
//! control_period = 0.005
//! substep = 0.001
//!
//! [arm]
//! l1 = 2.1
//! l2 = 2.1
//! l3 = 1.9
//! base_yaw_inertia = 1.0
//! m2 = 1.5
//! m3 = 1.5
//! gravity = 9.81
//! feature_offset = [0.0, 0.0, 0.0]
//!
//! [camera]
//! focal_length = 0.16
//! scale = 1200.0
//! offset = 6.0
//! principal_point = [0.0, 0.0]
//!
//! [trajectory]
//! center = [53.0, 79.0]
//! radius = 21.0
//! angular_rate = 1.0471975511965976
//!
//! [gains]
//! k = 40.0
//! k1 = 0.0015
//! alpha = 10.0
//! gamma_d = 200.0
//! gamma_z = 0.008
//! gamma_z_perp = [[260.0, 0.0], [0.0, 260.0]]
//!
//! [servo]
//! mode = "first-order"        # ideal | first-order
//! time_constant = 0.02
//!
//! [initial_state]
//! q = [1.14, 0.22, 0.5]
//! qd = [0.0, 0.0, 0.0]
//!
//! [initial_estimates]
//! dynamic = [0.0, 0.0, 0.0, 0.0, 30.0, 0.0]
//!
//! [initial_estimates.physical]
//! offset = 3.2
//! l2 = 3.2
//! l3 = 3.2
//! focal_length = 0.09
//! scale = 2000.0
//! ```

use std::path::Path;

use nalgebra::{DMatrix, DVector, Matrix2, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::arm::{ArmModel, JointState, DYN_PARAMS};
use crate::camera::CameraModel;
use crate::control::{ControllerKind, Estimates, Gains};
use crate::error::{Error, Result};
use crate::kinreg::{KinParams, KinematicRegressor, Parameterization, PhysicalKinematics};
use crate::sim::{CircleTrajectory, Scenario, ServoMode, Timing};

fn default_control_period() -> f64 {
    0.005
}

fn default_substep() -> f64 {
    0.001
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub controller: ControllerKind,
    #[serde(default)]
    pub parameterization: Parameterization,
    #[serde(default)]
    pub timing: Timing,
    pub duration: f64,
    #[serde(default = "default_control_period")]
    pub control_period: f64,
    #[serde(default = "default_substep")]
    pub substep: f64,
    pub arm: ArmConfig,
    pub camera: CameraConfig,
    #[serde(default)]
    pub trajectory: TrajectoryConfig,
    pub gains: GainsConfig,
    #[serde(default)]
    pub servo: ServoMode,
    pub initial_state: StateConfig,
    pub initial_estimates: EstimatesConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<ReferenceConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmConfig {
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
    pub base_yaw_inertia: f64,
    pub m2: f64,
    pub m3: f64,
    pub gravity: f64,
    #[serde(default)]
    pub feature_offset: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraConfig {
    pub focal_length: f64,
    pub scale: f64,
    pub offset: f64,
    #[serde(default)]
    pub principal_point: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryConfig {
    pub center: [f64; 2],
    pub radius: f64,
    pub angular_rate: f64,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        Self::from(&CircleTrajectory::default())
    }
}

/// `s` for `s·I`, or the full matrix row by row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GainSpec {
    Scalar(f64),
    Matrix(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainsConfig {
    pub k: GainSpec,
    pub k1: GainSpec,
    pub alpha: f64,
    pub gamma_d: GainSpec,
    pub gamma_z: GainSpec,
    pub gamma_z_perp: GainSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateConfig {
    pub q: [f64; 3],
    #[serde(default)]
    pub qd: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatesConfig {
    pub dynamic: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub physical: Option<PhysicalConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw: Option<RawKinConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicalConfig {
    pub offset: f64,
    pub l2: f64,
    pub l3: f64,
    pub focal_length: f64,
    pub scale: f64,
    #[serde(default)]
    pub feature_offset: [f64; 3],
    #[serde(default)]
    pub principal_point: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawKinConfig {
    pub depth: Vec<f64>,
    pub perp: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceConfig {
    pub dynamic_parameters: Vec<f64>,
}

impl From<&CircleTrajectory> for TrajectoryConfig {
    fn from(t: &CircleTrajectory) -> Self {
        Self { center: [t.center.x, t.center.y], radius: t.radius, angular_rate: t.angular_rate }
    }
}

impl GainSpec {
    fn matrix(&self, key: &str, n: usize) -> Result<DMatrix<f64>> {
        match self {
            Self::Scalar(s) => Ok(DMatrix::identity(n, n) * *s),
            Self::Matrix(rows) => {
                if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                    return Err(Error::Config(format!("gains.{key} must be a scalar or a {n}×{n} matrix")));
                }
                Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
            }
        }
    }

    fn from_matrix(m: &DMatrix<f64>) -> Self {
        let s = m[(0, 0)];
        if *m == DMatrix::identity(m.nrows(), m.ncols()) * s {
            Self::Scalar(s)
        } else {
            Self::Matrix(m.row_iter().map(|r| r.iter().copied().collect()).collect())
        }
    }
}

impl ScenarioConfig {
    pub fn to_scenario(&self) -> Result<Scenario> {
        let kin = KinematicRegressor::new(self.parameterization);
        let g = &self.gains;
        let k = g.k.matrix("k", 3)?;
        let k1 = g.k1.matrix("k1", 2)?;
        let gains = Gains {
            k: Matrix3::from_fn(|i, j| k[(i, j)]),
            k1: Matrix2::from_fn(|i, j| k1[(i, j)]),
            alpha: g.alpha,
            gamma_d: g.gamma_d.matrix("gamma_d", DYN_PARAMS)?,
            gamma_z: g.gamma_z.matrix("gamma_z", kin.depth_dim())?,
            gamma_z_perp: g.gamma_z_perp.matrix("gamma_z_perp", kin.perp_dim())?,
        };
        let est = &self.initial_estimates;
        let kin_est = match (&est.physical, &est.raw) {
            (Some(p), None) => kin
                .params_from_physical(&PhysicalKinematics {
                    offset: p.offset,
                    l2: p.l2,
                    l3: p.l3,
                    focal_length: p.focal_length,
                    scale: p.scale,
                    feature_offset: Vector3::from(p.feature_offset),
                    principal_point: Vector2::from(p.principal_point),
                })
                .map_err(|e| Error::Config(format!("initial_estimates.physical: {e}")))?,
            (None, Some(r)) => KinParams { a_z: DVector::from_vec(r.depth.clone()), a_z_perp: DVector::from_vec(r.perp.clone()) },
            _ => {
                return Err(Error::Config(
                    "initial_estimates: exactly one of [initial_estimates.physical] or [initial_estimates.raw] is required".into(),
                ))
            }
        };
        let a = &self.arm;
        let c = &self.camera;
        let scn = Scenario {
            name: self.name.clone(),
            controller: self.controller,
            parameterization: self.parameterization,
            timing: self.timing,
            servo: self.servo,
            arm: ArmModel {
                l1: a.l1,
                l2: a.l2,
                l3: a.l3,
                base_yaw_inertia: a.base_yaw_inertia,
                m2: a.m2,
                m3: a.m3,
                gravity: a.gravity,
                feature_offset: Vector3::from(a.feature_offset),
            },
            camera: CameraModel {
                focal_length: c.focal_length,
                scale: c.scale,
                offset: c.offset,
                principal_point: Vector2::from(c.principal_point),
            },
            trajectory: CircleTrajectory {
                center: Vector2::from(self.trajectory.center),
                radius: self.trajectory.radius,
                angular_rate: self.trajectory.angular_rate,
            },
            gains,
            initial_state: JointState { q: Vector3::from(self.initial_state.q), qd: Vector3::from(self.initial_state.qd) },
            initial_estimates: Estimates::new(DVector::from_vec(est.dynamic.clone()), kin_est),
            duration: self.duration,
            control_period: self.control_period,
            substep: self.substep,
            reference_dynamic_parameters: self.reference.as_ref().map(|r| r.dynamic_parameters.clone()).unwrap_or_default(),
        };
        scn.validate()?;
        Ok(scn)
    }

    /// Config that loads back to an equal scenario. Kinematic estimates are
    /// written in raw form.
    pub fn from_scenario(s: &Scenario) -> Self {
        let a = &s.arm;
        let c = &s.camera;
        let g = &s.gains;
        let m = |x: &[f64], r: usize| DMatrix::from_column_slice(r, r, x);
        Self {
            name: s.name.clone(),
            controller: s.controller,
            parameterization: s.parameterization,
            timing: s.timing,
            duration: s.duration,
            control_period: s.control_period,
            substep: s.substep,
            arm: ArmConfig {
                l1: a.l1,
                l2: a.l2,
                l3: a.l3,
                base_yaw_inertia: a.base_yaw_inertia,
                m2: a.m2,
                m3: a.m3,
                gravity: a.gravity,
                feature_offset: a.feature_offset.into(),
            },
            camera: CameraConfig {
                focal_length: c.focal_length,
                scale: c.scale,
                offset: c.offset,
                principal_point: c.principal_point.into(),
            },
            trajectory: TrajectoryConfig::from(&s.trajectory),
            gains: GainsConfig {
                k: GainSpec::from_matrix(&m(g.k.as_slice(), 3)),
                k1: GainSpec::from_matrix(&m(g.k1.as_slice(), 2)),
                alpha: g.alpha,
                gamma_d: GainSpec::from_matrix(&g.gamma_d),
                gamma_z: GainSpec::from_matrix(&g.gamma_z),
                gamma_z_perp: GainSpec::from_matrix(&g.gamma_z_perp),
            },
            servo: s.servo,
            initial_state: StateConfig { q: s.initial_state.q.into(), qd: s.initial_state.qd.into() },
            initial_estimates: EstimatesConfig {
                dynamic: s.initial_estimates.dynamic.iter().copied().collect(),
                physical: None,
                raw: Some(RawKinConfig {
                    depth: s.initial_estimates.depth.iter().copied().collect(),
                    perp: s.initial_estimates.perp.iter().copied().collect(),
                }),
            },
            reference: (!s.reference_dynamic_parameters.is_empty())
                .then(|| ReferenceConfig { dynamic_parameters: s.reference_dynamic_parameters.clone() }),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario config is always representable")
    }
}

/// 1-based line of `key` (dotted, e.g. `gains.k`) in a TOML document, found
/// by tracking table headers. Good enough for diagnostics.
fn locate(text: &str, key: &str) -> Option<usize> {
    let (table, leaf) = match key.rsplit_once('.') {
        Some((t, l)) => (t, l),
        None => ("", key),
    };
    let mut current = String::new();
    let mut table_line = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(h) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = h.trim().to_string();
            if current == key {
                table_line = Some(i + 1);
            }
            continue;
        }
        if current == table {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim() == leaf {
                    return Some(i + 1);
                }
            }
        }
    }
    table_line
}

/// Dotted key at the start of a validation message, if any.
fn leading_key(msg: &str) -> Option<&str> {
    let end = msg.find([' ', ':']).unwrap_or(msg.len());
    let key = &msg[..end];
    let ok = !key.is_empty() && key.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_' || c == '.');
    ok.then_some(key)
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Parses and validates a scenario document. `origin` names the source in
/// error messages.
pub fn parse_scenario(text: &str, origin: &str) -> Result<Scenario> {
    let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| line_of_offset(text, s.start));
        let msg = e.message().trim().to_string();
        match line {
            Some(l) => Error::Config(format!("{origin}:{l}: {msg}")),
            None => Error::Config(format!("{origin}: {msg}")),
        }
    })?;
    cfg.to_scenario().map_err(|e| {
        let msg = match &e {
            Error::Config(m) => m.clone(),
            other => other.to_string(),
        };
        match leading_key(&msg).and_then(|k| locate(text, k)) {
            Some(l) => Error::Config(format!("{origin}:{l}: {msg}")),
            None => Error::Config(format!("{origin}: {msg}")),
        }
    })
}

/// Parses a document and then applies `dotted.key=value` overrides. Values
/// use TOML syntax; anything that does not parse as TOML is taken as a
/// bare string, so `servo.mode=ideal` works without quotes.
pub fn parse_scenario_with_overrides(text: &str, origin: &str, overrides: &[String]) -> Result<Scenario> {
    let base = parse_scenario(text, origin)?;
    if overrides.is_empty() {
        return Ok(base);
    }
    let mut doc: toml::Table = toml::from_str(text).map_err(|e| Error::Config(format!("{origin}: {e}")))?;
    for ov in overrides {
        let (key, raw) = ov
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{ov}`: expected key=value")))?;
        let key = key.trim();
        let value = toml::from_str::<toml::Table>(&format!("v = {}", raw.trim()))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
        let mut path: Vec<&str> = key.split('.').collect();
        let leaf = path.pop().filter(|l| !l.is_empty()).ok_or_else(|| Error::Config(format!("override `{ov}`: empty key")))?;
        let mut table = &mut doc;
        for part in path {
            let entry = table.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
            table = entry
                .as_table_mut()
                .ok_or_else(|| Error::Config(format!("override `{ov}`: `{part}` is not a table")))?;
        }
        table.insert(leaf.to_string(), value);
    }
    let cfg: ScenarioConfig = toml::Value::Table(doc)
        .try_into()
        .map_err(|e: toml::de::Error| Error::Config(format!("{origin} (with overrides): {}", e.message().trim())))?;
    cfg.to_scenario().map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("{origin} (with overrides): {m}")),
        other => other,
    })
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    parse_scenario(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn paper_text() -> String {
        ScenarioConfig::from_scenario(&Scenario::paper(ControllerKind::InverseJacobian)).to_toml()
    }

    #[test]
    fn round_trip_is_value_identical() {
        for kind in [ControllerKind::InverseJacobian, ControllerKind::TransposeJacobian, ControllerKind::Kinematic] {
            let mut s = Scenario::paper(kind);
            s.gains.k[(0, 1)] = 1.5;
            s.gains.k[(1, 0)] = 1.5;
            s.servo = ServoMode::Ideal;
            let text = ScenarioConfig::from_scenario(&s).to_toml();
            let back = parse_scenario(&text, "mem").unwrap();
            assert_eq!(back, s);
        }
    }

    #[test]
    fn scalar_gains_are_emitted_as_scalars() {
        let cfg = ScenarioConfig::from_scenario(&Scenario::paper(ControllerKind::InverseJacobian));
        assert_eq!(cfg.gains.k, GainSpec::Scalar(40.0));
        assert_eq!(cfg.gains.gamma_z_perp, GainSpec::Scalar(260.0));
    }

    #[test]
    fn unknown_key_is_rejected_with_line() {
        let text = paper_text().replace("[arm]\n", "[arm]\nwingspan = 3.0\n");
        let err = parse_scenario(&text, "x.cfg").unwrap_err().to_string();
        assert!(err.contains("wingspan"), "{err}");
        let line = text.lines().position(|l| l.starts_with("wingspan")).unwrap() + 1;
        assert!(err.contains(&format!("x.cfg:{line}:")), "{err}");
    }

    #[test]
    fn negative_gain_is_rejected_with_key_and_line() {
        let text = paper_text().replace("k = 40.0", "k = [[40.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, 40.0]]");
        let err = parse_scenario(&text, "x.cfg").unwrap_err().to_string();
        assert!(err.contains("gains.k is not symmetric positive definite"), "{err}");
        let line = text.lines().position(|l| l.starts_with("k = [[")).unwrap() + 1;
        assert!(err.contains(&format!("x.cfg:{line}:")), "{err}");
    }

    #[test]
    fn asymmetric_gain_is_rejected() {
        let text = paper_text().replace("k1 = 0.0015", "k1 = [[0.0015, 0.001], [0.0, 0.0015]]");
        assert!(parse_scenario(&text, "x").unwrap_err().to_string().contains("gains.k1"));
    }

    #[test]
    fn wrong_gain_size_is_rejected() {
        let text = paper_text().replace("k1 = 0.0015", "k1 = [[1.0]]");
        assert!(parse_scenario(&text, "x").unwrap_err().to_string().contains("2×2"));
    }

    #[test]
    fn physical_estimates_match_builder() {
        let text = paper_text();
        let start = text.find("[initial_estimates.raw]").unwrap();
        let end = text[start + 1..].find("\n[").map(|i| start + 1 + i).unwrap_or(text.len());
        let phys = "[initial_estimates.physical]\noffset = 3.2\nl2 = 3.2\nl3 = 3.2\nfocal_length = 0.09\nscale = 2000.0\n";
        let text = format!("{}{}{}", &text[..start], phys, &text[end..]);
        let s = parse_scenario(&text, "x").unwrap();
        assert_eq!(s.initial_estimates, Scenario::paper(ControllerKind::InverseJacobian).initial_estimates);
    }

    #[test]
    fn both_estimate_forms_is_an_error() {
        let text = paper_text() + "\n[initial_estimates.physical]\noffset = 3.2\nl2 = 3.2\nl3 = 3.2\nfocal_length = 0.09\nscale = 2000.0\n";
        assert!(parse_scenario(&text, "x").unwrap_err().to_string().contains("exactly one"));
    }

    #[test]
    fn syntax_error_reports_line() {
        let err = parse_scenario("name = \"a\"\nduration = = 3\n", "bad.cfg").unwrap_err().to_string();
        assert!(err.contains("bad.cfg:2:"), "{err}");
    }

    #[test]
    fn non_integer_substep_ratio_is_rejected() {
        let text = paper_text().replace("substep = 0.001", "substep = 0.0015");
        assert!(parse_scenario(&text, "x").unwrap_err().to_string().contains("integer multiple"));
    }

    #[test]
    fn overrides_apply_on_top_of_the_file() {
        let text = paper_text();
        let sets = vec!["duration=2.5".to_string(), "servo.mode=ideal".into(), "gains.k=12".into()];
        let s = parse_scenario_with_overrides(&text, "x", &sets).unwrap();
        assert_eq!(s.duration, 2.5);
        assert_eq!(s.servo, ServoMode::Ideal);
        assert_eq!(s.gains.k, Matrix3::identity() * 12.0);
        assert_eq!(parse_scenario_with_overrides(&text, "x", &[]).unwrap(), Scenario::paper(ControllerKind::InverseJacobian));
    }

    #[test]
    fn bad_overrides_are_config_errors() {
        let text = paper_text();
        for ov in ["gains.k=-1", "arm.wingspan=2", "duration", "name.x=1"] {
            let err = parse_scenario_with_overrides(&text, "x", &[ov.to_string()]).unwrap_err();
            assert!(matches!(err, Error::Config(_)), "{ov}: {err}");
        }
    }

    #[test]
    fn locate_finds_nested_keys() {
        let text = "a = 1\n[gains]\nk = 2\n[servo]\nk = 3\n";
        assert_eq!(locate(text, "gains.k"), Some(3));
        assert_eq!(locate(text, "servo.k"), Some(5));
        assert_eq!(locate(text, "a"), Some(1));
        assert_eq!(locate(text, "servo"), Some(4));
        assert_eq!(locate(text, "nope.k"), None);
    }
}
