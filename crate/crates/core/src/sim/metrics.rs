use serde::{Deserialize, Serialize};

use super::trace::{Abort, Trace, TRACE_SCHEMA_VERSION};
use crate::error::Result;

/// `‖Δx‖∞` level below which the image error counts as converged.
pub const CONVERGENCE_THRESHOLD_PX: f64 = 0.5;

/// Start of the window used for the steady-state figures.
pub const LATE_WINDOW_START: f64 = 20.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub rows: usize,
    pub final_time: f64,
    pub abort: Option<Abort>,
    pub initial_error_px: f64,
    pub final_error_px: f64,
    /// Largest `‖Δx‖∞` for `t > 20 s`; absent for shorter runs.
    pub late_max_error_px: Option<f64>,
    /// Earliest tick after which `‖Δx‖∞` stays below the threshold.
    pub convergence_time: Option<f64>,
    pub peak_abs_command: f64,
    pub final_depth: f64,
    pub final_depth_estimate: f64,
    pub final_depth_gap: f64,
    pub min_depth_estimate: f64,
    /// Smallest `|ẑ|` for `t > 20 s`.
    pub late_min_abs_depth_estimate: Option<f64>,
    pub final_int_ss: f64,
}

/// `‖Δx‖∞` per row.
pub fn image_error_inf(trace: &Trace) -> Result<Vec<f64>> {
    let (a, b) = (trace.column("dx_1")?, trace.column("dx_2")?);
    Ok(a.iter().zip(&b).map(|(a, b)| a.abs().max(b.abs())).collect())
}

/// Peak `‖Δx‖∞` over consecutive windows of `width` seconds, as
/// `(window start, peak)`.
pub fn window_peaks(trace: &Trace, width: f64) -> Result<Vec<(f64, f64)>> {
    let e = image_error_inf(trace)?;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (t, e) in trace.times().into_iter().zip(e) {
        let start = (t / width + 1e-9).floor() * width;
        match out.last_mut() {
            Some((s, p)) if (*s - start).abs() < 1e-9 => *p = p.max(e),
            _ => out.push((start, e)),
        }
    }
    Ok(out)
}

pub fn metrics(trace: &Trace) -> Result<Summary> {
    let t = trace.times();
    let e = image_error_inf(trace)?;
    let z = trace.column("z")?;
    let z_hat = trace.column("z_hat")?;
    let cmd_cols: Vec<String> = if trace.has("tau_1") { trace.indexed("tau") } else { trace.indexed("qd_cmd") };
    let mut peak = 0.0f64;
    for name in &cmd_cols {
        peak = trace.column(name)?.iter().fold(peak, |p, v| p.max(v.abs()));
    }
    let convergence_time = match e.iter().rposition(|v| !(*v < CONVERGENCE_THRESHOLD_PX)) {
        None if !t.is_empty() => Some(t[0]),
        None => None,
        Some(k) if k + 1 < t.len() => Some(t[k + 1]),
        Some(_) => None,
    };
    let late: Vec<usize> = (0..t.len()).filter(|&k| t[k] > LATE_WINDOW_START).collect();
    let late_max = |v: &[f64]| late.iter().map(|&k| v[k]).reduce(f64::max);
    let late_abs_zhat: Vec<f64> = z_hat.iter().map(|v| v.abs()).collect();
    let last = |v: &[f64]| v.last().copied().unwrap_or(f64::NAN);
    let int_ss = if trace.has("int_ss") { last(&trace.column("int_ss")?) } else { f64::NAN };
    Ok(Summary {
        schema_version: TRACE_SCHEMA_VERSION,
        rows: trace.len(),
        final_time: last(&t),
        abort: trace.abort.clone(),
        initial_error_px: e.first().copied().unwrap_or(f64::NAN),
        final_error_px: last(&e),
        late_max_error_px: late_max(&e),
        convergence_time,
        peak_abs_command: peak,
        final_depth: last(&z),
        final_depth_estimate: last(&z_hat),
        final_depth_gap: last(&z) - last(&z_hat),
        min_depth_estimate: z_hat.iter().copied().fold(f64::INFINITY, f64::min),
        late_min_abs_depth_estimate: late.iter().map(|&k| late_abs_zhat[k]).reduce(f64::min),
        final_int_ss: int_ss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace(errs: &[f64]) -> Trace {
        let cols = ["t", "dx_1", "dx_2", "z", "z_hat", "tau_1"].map(String::from).to_vec();
        let mut tr = Trace::new(cols);
        for (k, e) in errs.iter().enumerate() {
            tr.push(vec![k as f64, *e, -0.5 * e, 6.0, 5.0, -(k as f64)]);
        }
        tr
    }

    #[test]
    fn zero_error_converges_immediately() {
        let s = metrics(&trace(&[0.0, 0.0, 0.0])).unwrap();
        assert_eq!(s.convergence_time, Some(0.0));
        assert_eq!(s.final_error_px, 0.0);
    }

    #[test]
    fn convergence_time_is_last_exit() {
        let s = metrics(&trace(&[3.0, 0.1, 0.7, 0.2, 0.1])).unwrap();
        assert_eq!(s.convergence_time, Some(3.0));
        assert_eq!(s.peak_abs_command, 4.0);
        assert_eq!(s.final_depth_gap, 1.0);
    }

    #[test]
    fn never_converged() {
        assert_eq!(metrics(&trace(&[3.0, 2.0])).unwrap().convergence_time, None);
    }

    #[test]
    fn window_peaks_group_rows() {
        let p = window_peaks(&trace(&[1.0, 4.0, 2.0, 0.5, 0.25]), 2.0).unwrap();
        assert_eq!(p, vec![(0.0, 4.0), (2.0, 2.0), (4.0, 0.25)]);
    }

    #[test]
    fn late_window_needs_long_runs() {
        assert_eq!(metrics(&trace(&[1.0; 5])).unwrap().late_max_error_px, None);
    }
}
