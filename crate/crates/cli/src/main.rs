//! `ibvs`: run scenarios, execute the self-check suites and plot traces.
//!
//! Exit codes: 0 ok, 1 I/O or trace error, 2 configuration error,
//! 3 run aborted, 4 check failures.

mod plot;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use ibvs_core::check::{run_suites, Fault, Suite, AUDIT_TOLERANCE};
use ibvs_core::config::{parse_scenario_with_overrides, ScenarioConfig};
use ibvs_core::control::ControllerKind;
use ibvs_core::sim::{
    lyapunov_audit, metrics, passivity_audit, run, ServoMode, Timing, Trace, COLUMN_DOCS, TRACE_SCHEMA_VERSION,
    V1_INCREASE_TOLERANCE,
};
use ibvs_core::Error;

const EXIT_IO: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_ABORTED: u8 = 3;
const EXIT_CHECK: u8 = 4;

fn column_help() -> String {
    let mut s = format!("Trace columns (schema version {TRACE_SCHEMA_VERSION}; `_*` columns are indexed from 1):\n");
    for (name, doc) in COLUMN_DOCS {
        s.push_str(&format!("  {name:<16} {doc}\n"));
    }
    s
}

#[derive(Parser)]
#[command(name = "ibvs", version, about = "Adaptive image-space visual servoing laboratory")]
#[command(after_help = "Exit codes: 0 ok, 1 I/O or trace error, 2 configuration error, 3 run aborted, 4 check failures.")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario and write trace.csv, summary.json, audit.json and the
    /// resolved scenario.cfg into the output directory.
    #[command(after_long_help = column_help())]
    Simulate(SimulateArgs),
    /// Run the self-check suites and print a JSON report.
    Check(CheckArgs),
    /// Draw figures from a trace as SVG files.
    Plot(PlotArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ServoArg {
    Ideal,
    FirstOrder,
}

#[derive(Clone, Copy, ValueEnum)]
enum TimingArg {
    Sampled,
    Continuous,
}

#[derive(clap::Args)]
struct SimulateArgs {
    /// Scenario file (TOML).
    config: PathBuf,
    /// Controller: inverse, transpose or kinematic.
    #[arg(long)]
    controller: Option<ControllerKind>,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Joint velocity servo under the kinematic scheme.
    #[arg(long, value_enum)]
    servo: Option<ServoArg>,
    /// Time constant of the first-order servo, s.
    #[arg(long)]
    time_constant: Option<f64>,
    /// Sampled holds the command over each control period; continuous
    /// re-evaluates the controller at every integration stage.
    #[arg(long, value_enum)]
    timing: Option<TimingArg>,
    /// Simulated duration, s.
    #[arg(long)]
    duration: Option<f64>,
    /// Override any scenario key, e.g. `--set gains.alpha=5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

#[derive(clap::Args)]
struct CheckArgs {
    /// regressors, jacobians, passivity, lyapunov or all.
    #[arg(long, default_value = "all")]
    suite: String,
    /// Inject a defect to confirm the suites catch it: `flip-perp-sign` or
    /// `scale-image-rows[=FACTOR]`.
    #[arg(long, value_name = "FAULT")]
    inject: Option<String>,
    /// Also write the JSON report to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct PlotArgs {
    /// Trace CSV written by `simulate`.
    trace: PathBuf,
    /// Figures to draw: 2/5 tracking errors, 3/6 depths, 4/7 torques.
    #[arg(long, value_delimiter = ',', default_values_t = [2u8, 3, 4], value_parser = clap::value_parser!(u8).range(2..=7))]
    figures: Vec<u8>,
    /// Output directory, created if missing.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

struct Failure {
    code: u8,
    msg: String,
}

impl Failure {
    fn new(code: u8, msg: impl Into<String>) -> Self {
        Self { code, msg: msg.into() }
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Failure + '_ {
    move |e| Failure::new(EXIT_IO, format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), Failure> {
    fs::write(path, contents).map_err(io_err(path))
}

fn simulate(a: SimulateArgs) -> Result<(), Failure> {
    let text = fs::read_to_string(&a.config)
        .map_err(|e| Failure::new(EXIT_CONFIG, format!("{}: {e}", a.config.display())))?;
    let origin = a.config.display().to_string();
    let config_err = |e: Error| Failure::new(EXIT_CONFIG, e.to_string());
    let mut scn = parse_scenario_with_overrides(&text, &origin, &a.sets).map_err(config_err)?;

    if let Some(k) = a.controller {
        scn.controller = k;
    }
    if let Some(d) = a.duration {
        scn.duration = d;
    }
    if let Some(t) = a.timing {
        scn.timing = match t {
            TimingArg::Sampled => Timing::Sampled,
            TimingArg::Continuous => Timing::Continuous,
        };
    }
    let current_tc = match scn.servo {
        ServoMode::FirstOrder { time_constant } => Some(time_constant),
        ServoMode::Ideal => None,
    };
    match (a.servo, a.time_constant) {
        (Some(ServoArg::Ideal), Some(_)) => {
            return Err(Failure::new(EXIT_CONFIG, "--time-constant requires the first-order servo"));
        }
        (Some(ServoArg::Ideal), None) => scn.servo = ServoMode::Ideal,
        (Some(ServoArg::FirstOrder), tc) | (None, tc @ Some(_)) => {
            let time_constant = tc.or(current_tc).unwrap_or(0.02);
            scn.servo = ServoMode::FirstOrder { time_constant };
        }
        (None, None) => {}
    }
    scn.validate().map_err(config_err)?;

    fs::create_dir_all(&a.out).map_err(io_err(&a.out))?;
    let trace = run(&scn).map_err(config_err)?;

    let csv_path = a.out.join("trace.csv");
    let file = fs::File::create(&csv_path).map_err(io_err(&csv_path))?;
    trace
        .write_csv(std::io::BufWriter::new(file))
        .map_err(|e| Failure::new(EXIT_IO, format!("{}: {e}", csv_path.display())))?;

    let trace_err = |e: Error| Failure::new(EXIT_IO, e.to_string());
    let summary = metrics(&trace).map_err(trace_err)?;
    let passivity = passivity_audit(&trace).map_err(trace_err)?;
    let lyapunov = lyapunov_audit(&trace).map_err(trace_err)?;
    let audit = json!({
        "scenario": scn.name,
        "controller": scn.controller.name(),
        "timing": scn.timing.name(),
        "identity_tolerance": AUDIT_TOLERANCE,
        "v1_increase_tolerance": V1_INCREASE_TOLERANCE,
        "passivity": passivity,
        "lyapunov": lyapunov,
    });
    let pretty = |v: &serde_json::Value| serde_json::to_string_pretty(v).expect("JSON values always serialize");
    write_file(&a.out.join("summary.json"), pretty(&json!(summary)) + "\n")?;
    write_file(&a.out.join("audit.json"), pretty(&audit) + "\n")?;
    write_file(&a.out.join("scenario.cfg"), ScenarioConfig::from_scenario(&scn).to_toml())?;

    println!(
        "{}: {} rows, final |dx|inf = {:.4} px, late max = {}, final z_hat = {:.4} m",
        scn.name,
        summary.rows,
        summary.final_error_px,
        summary.late_max_error_px.map_or("n/a".into(), |v| format!("{v:.4} px")),
        summary.final_depth_estimate,
    );
    println!("wrote {}", a.out.display());
    if let Some(ab) = &trace.abort {
        return Err(Failure::new(EXIT_ABORTED, format!("run aborted at t = {}: {}", ab.t, ab.reason)));
    }
    Ok(())
}

fn parse_fault(s: &str) -> Result<Fault, Failure> {
    match s.split_once('=') {
        None if s == "flip-perp-sign" => Ok(Fault::FlipPerpAdaptationSign),
        None if s == "scale-image-rows" => Ok(Fault::ScaleImageRows(1.01)),
        Some(("scale-image-rows", f)) => f
            .parse()
            .map(Fault::ScaleImageRows)
            .map_err(|_| Failure::new(EXIT_CONFIG, format!("bad scale factor `{f}`"))),
        _ => Err(Failure::new(EXIT_CONFIG, format!("unknown fault `{s}` (flip-perp-sign | scale-image-rows[=F])"))),
    }
}

fn check(a: CheckArgs) -> Result<(), Failure> {
    let suites = Suite::parse_list(&a.suite).map_err(|e| Failure::new(EXIT_CONFIG, e.to_string()))?;
    let fault = a.inject.as_deref().map(parse_fault).transpose()?;
    let report = run_suites(&suites, fault);
    let text = serde_json::to_string_pretty(&report).expect("report always serializes") + "\n";
    print!("{text}");
    if let Some(p) = &a.out {
        write_file(p, &text)?;
    }
    for s in &report.suites {
        let failed = s.measures.iter().filter(|m| !m.passed).count();
        eprintln!(
            "{:<11} {}  ({} measures, {failed} failed){}",
            s.suite.name(),
            if s.passed { "PASS" } else { "FAIL" },
            s.measures.len(),
            s.error.as_deref().map(|e| format!(": {e}")).unwrap_or_default()
        );
    }
    if report.passed {
        Ok(())
    } else {
        Err(Failure::new(EXIT_CHECK, "check failures"))
    }
}

fn plot_cmd(a: PlotArgs) -> Result<(), Failure> {
    let file = fs::File::open(&a.trace).map_err(io_err(&a.trace))?;
    let trace = Trace::read_csv(std::io::BufReader::new(file))
        .map_err(|e| Failure::new(EXIT_IO, format!("{}: {e}", a.trace.display())))?;
    // Render everything first so a bad request leaves no partial output.
    let mut rendered = Vec::new();
    for n in &a.figures {
        let fig = plot::figure(*n).expect("figure numbers are range-checked by the parser");
        let svg = plot::render(&trace, &fig)
            .map_err(|e| Failure::new(EXIT_IO, format!("{}: figure {n}: {e}", a.trace.display())))?;
        rendered.push((*n, svg));
    }
    fs::create_dir_all(&a.out).map_err(io_err(&a.out))?;
    for (n, svg) in rendered {
        let path = a.out.join(format!("fig{n}.svg"));
        write_file(&path, svg)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Simulate(a) => simulate(a),
        Cmd::Check(a) => check(a),
        Cmd::Plot(a) => plot_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
