use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bumped whenever a column is renamed, removed or reinterpreted.
pub const TRACE_SCHEMA_VERSION: u32 = 1;

/// Column reference for the trace CSV. Indexed columns are 1-based, so
/// `q_*` means `q_1, q_2, q_3`.
pub const COLUMN_DOCS: &[(&str, &str)] = &[
    ("t", "time at the control tick, s"),
    ("q_*", "joint angles, rad"),
    ("qd_*", "joint velocities, rad/s"),
    ("x_*", "feature image position, px"),
    ("xdot_*", "feature image velocity, px/s"),
    ("xd_*", "desired image position, px"),
    ("xd_dot_*", "desired image velocity, px/s"),
    ("dx_*", "image tracking error x - x_d, px"),
    ("z", "true feature depth, m"),
    ("z_hat", "estimated depth, m"),
    ("tau_*", "joint torques (torque controllers), N·m"),
    ("qd_cmd_*", "joint velocity command (kinematic scheme), rad/s"),
    ("qd_r_*", "reference joint velocity"),
    ("qdd_r_*", "reference joint acceleration"),
    ("s_*", "sliding vector qd - qd_r"),
    ("a_d_hat_*", "dynamic parameter estimates"),
    ("a_z_hat_*", "depth parameter estimates"),
    ("a_z_perp_hat_*", "image Jacobian parameter estimates"),
    ("v_s", "storage z/2 |x|²"),
    ("v_err", "storage z/2 |dx|²"),
    ("v1", "dynamic Lyapunov function (0 for the kinematic scheme)"),
    ("v2", "kinematic Lyapunov function"),
    ("int_xu", "running integral of xᵀu"),
    ("int_dxubar", "running integral of dxᵀū"),
    ("int_v1dot", "running integral of the predicted V1 rate"),
    ("int_v2dot", "running integral of the predicted V2 rate"),
    ("int_ss", "running integral of sᵀs"),
    ("v1dot_direct", "V1 rate from the plant and estimate rates at the tick"),
    ("v1dot_claimed", "V1 rate predicted by the analysis"),
    ("v2dot_direct", "V2 rate from the plant and estimate rates at the tick"),
    ("v2dot_claimed", "V2 rate predicted by the analysis"),
    ("v2dot_bound", "upper bound the V2 rate must respect"),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Abort {
    pub t: f64,
    pub reason: String,
}

/// One row per control tick, fixed schema per run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    columns: Vec<String>,
    rows: Vec<Vec<f64>>,
    pub abort: Option<Abort>,
}

impl Trace {
    pub fn new(columns: Vec<String>) -> Self {
        Self { columns, rows: Vec::new(), abort: None }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        assert_eq!(row.len(), self.columns.len(), "row width");
        if let Some(last) = self.rows.last() {
            assert!(row[0] > last[0], "trace time must increase");
        }
        self.rows.push(row);
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    }

    pub fn has(&self, name: &str) -> bool {
        self.columns.iter().any(|c| c == name)
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let i = self.index_of(name)?;
        Ok(self.rows.iter().map(|r| r[i]).collect())
    }

    /// Names of `prefix_1, prefix_2, …` present in the trace.
    pub fn indexed(&self, prefix: &str) -> Vec<String> {
        (1..)
            .map(|i| format!("{prefix}_{i}"))
            .take_while(|n| self.has(n))
            .collect()
    }

    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r[0]).collect()
    }

    /// Header plus one record per row. `f64` display output is the shortest
    /// string that parses back to the same value.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::TraceFormat(e.to_string());
        wr.write_record(&self.columns).map_err(io)?;
        for row in &self.rows {
            wr.write_record(row.iter().map(|v| v.to_string())).map_err(io)?;
        }
        wr.flush().map_err(|e| Error::TraceFormat(e.to_string()))
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let fmt = |e: csv::Error| Error::TraceFormat(e.to_string());
        let columns: Vec<String> = rd.headers().map_err(fmt)?.iter().map(str::to_string).collect();
        if columns.first().map(String::as_str) != Some("t") {
            return Err(Error::TraceFormat("first column must be 't'".into()));
        }
        let mut trace = Self::new(columns);
        for (i, rec) in rd.records().enumerate() {
            let rec = rec.map_err(fmt)?;
            let row = rec
                .iter()
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|e| Error::TraceFormat(format!("row {}: {e}", i + 1)))?;
            if row.len() != trace.columns.len() {
                return Err(Error::TraceFormat(format!("row {} has {} fields", i + 1, row.len())));
            }
            if trace.rows.last().is_some_and(|last| row[0] <= last[0]) {
                return Err(Error::TraceFormat(format!("row {}: time does not increase", i + 1)));
            }
            trace.rows.push(row);
        }
        Ok(trace)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Trace {
        let mut t = Trace::new(vec!["t".into(), "a_1".into(), "a_2".into()]);
        t.push(vec![0.0, 0.1, 1.0 / 3.0]);
        t.push(vec![0.005, -1e-300, std::f64::consts::PI]);
        t
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let t = sample();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let back = Trace::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.columns(), t.columns());
        assert_eq!(back.rows(), t.rows());
    }

    #[test]
    fn indexed_columns() {
        assert_eq!(sample().indexed("a"), vec!["a_1", "a_2"]);
        assert!(sample().indexed("b").is_empty());
    }

    #[test]
    fn missing_column_is_reported() {
        assert_eq!(sample().column("zz"), Err(Error::MissingColumn("zz".into())));
    }

    #[test]
    fn header_only_csv() {
        let back = Trace::read_csv("t,a_1\n".as_bytes()).unwrap();
        assert!(back.is_empty());
    }

    #[test]
    fn rejects_bad_rows() {
        assert!(Trace::read_csv("t,a\n0,1\n0,2\n".as_bytes()).is_err());
        assert!(Trace::read_csv("t,a\n0,oops\n".as_bytes()).is_err());
        assert!(Trace::read_csv("a,t\n0,1\n".as_bytes()).is_err());
    }
}
