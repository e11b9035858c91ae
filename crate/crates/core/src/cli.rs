//! Command-line front end.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::calibration::{self, CalibrationError, CalibrationRecord};
use crate::config::{Config, ConfigError};
use crate::control::{self, ControlError};
use crate::harness::{self, ExperimentSummary, HarnessError};
use crate::plant::PlantHandle;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_NON_CONVERGENCE: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "catheter",
    version,
    about = "Tendon-driven catheter modeling, control and calibration"
)]
pub struct Cli {
    /// JSON config file; defaults apply when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = ".")]
    pub out: PathBuf,
    /// Plant noise seed; trial k uses seed + k.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub quiet: bool,
    /// Override any config value by dotted path; VALUE is parsed as JSON.
    #[arg(long = "set", global = true, value_name = "PATH=VALUE")]
    pub set: Vec<String>,
    #[command(flatten)]
    pub overrides: NamedOverrides,
    #[command(subcommand)]
    pub command: Command,
}

/// Shorthands for frequently swept config values.
#[derive(Debug, Args, Default)]
pub struct NamedOverrides {
    #[arg(
        long = "plant.backlash-width-deg",
        alias = "backlash-width",
        global = true,
        value_name = "DEG"
    )]
    pub backlash_width_deg: Option<f64>,
    #[arg(
        long = "plant.sensor-noise-angle-deg",
        global = true,
        value_name = "DEG"
    )]
    pub sensor_noise_angle_deg: Option<f64>,
    #[arg(
        long = "plant.sensor-noise-position-m",
        global = true,
        value_name = "M"
    )]
    pub sensor_noise_position_m: Option<f64>,
    #[arg(long = "compensator.offset-deg", global = true, value_name = "DEG")]
    pub offset_deg: Option<f64>,
    #[arg(long = "control.tension-min", global = true, value_name = "N")]
    pub tension_min: Option<f64>,
    #[arg(long = "control.tension-max", global = true, value_name = "N")]
    pub tension_max: Option<f64>,
    #[arg(long = "experiment.trials", global = true)]
    pub trials: Option<usize>,
    #[arg(long = "calibration.step-gain", global = true)]
    pub step_gain: Option<f64>,
    #[arg(long = "calibration.max-outer-iterations", global = true)]
    pub max_outer_iterations: Option<usize>,
}

impl NamedOverrides {
    fn pairs(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        let mut push = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                out.push((k.to_string(), v));
            }
        };
        push(
            "plant.backlash_width_deg",
            self.backlash_width_deg.map(|v| v.to_string()),
        );
        push(
            "plant.sensor_noise_angle_deg",
            self.sensor_noise_angle_deg.map(|v| v.to_string()),
        );
        push(
            "plant.sensor_noise_position_m",
            self.sensor_noise_position_m.map(|v| v.to_string()),
        );
        push(
            "compensator.offset_deg",
            self.offset_deg.map(|v| v.to_string()),
        );
        push(
            "control.tension_min",
            self.tension_min.map(|v| v.to_string()),
        );
        push(
            "control.tension_max",
            self.tension_max.map(|v| v.to_string()),
        );
        push("experiment.trials", self.trials.map(|v| v.to_string()));
        push(
            "calibration.step_gain",
            self.step_gain.map(|v| v.to_string()),
        );
        push(
            "calibration.max_outer_iterations",
            self.max_outer_iterations.map(|v| v.to_string()),
        );
        out
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the trials with compensation off and on; write traces and a summary.
    Experiment,
    /// Identify bending stiffness and layout rotation against the plant.
    Calibrate,
    /// One-shot inverse kinematics, printed as JSON.
    Solve {
        /// Bending angle, degrees.
        #[arg(long, allow_negative_numbers = true)]
        theta: f64,
        /// Bending-plane angle, degrees (0 = AP axis).
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        phi: f64,
    },
    /// Parse and validate the config; print it with defaults filled in.
    ValidateConfig,
}

/// Parse `args` (including the program name) and run; returns the exit code.
pub fn run_cli<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() {
                EXIT_VALIDATION
            } else {
                EXIT_OK
            };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                write!(stderr, "{text}")
            } else {
                write!(stdout, "{text}")
            };
            return code;
        }
    };
    match execute(&cli, stdout) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(stderr, "error: {}", f.message);
            f.code
        }
    }
}

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        let code = if matches!(e, ConfigError::Io { .. }) {
            EXIT_IO
        } else {
            EXIT_VALIDATION
        };
        Failure::new(code, e.to_string())
    }
}

fn control_code(e: &ControlError) -> i32 {
    match e {
        ControlError::Model(_) | ControlError::InvalidOptions(_) => EXIT_VALIDATION,
        _ => EXIT_INFEASIBLE,
    }
}

fn harness_code(e: &HarnessError) -> i32 {
    match e.root() {
        HarnessError::Control(c) => control_code(c),
        _ => EXIT_VALIDATION,
    }
}

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::new(EXIT_IO, format!("cannot write {}: {e}", path.display()))
}

fn load_config(cli: &Cli) -> Result<Config, Failure> {
    let mut overrides = cli.overrides.pairs();
    if let Some(seed) = cli.seed {
        overrides.push(("plant.seed".into(), seed.to_string()));
    }
    for s in &cli.set {
        let (k, v) = s.split_once('=').ok_or_else(|| {
            Failure::new(
                EXIT_VALIDATION,
                format!("--set expects PATH=VALUE, got `{s}`"),
            )
        })?;
        overrides.push((k.to_string(), v.to_string()));
    }
    Ok(Config::load(cli.config.as_deref(), &overrides)?)
}

fn execute(cli: &Cli, stdout: &mut dyn Write) -> Result<(), Failure> {
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Experiment => cmd_experiment(&cfg, &cli.out, cli.quiet, stdout),
        Command::Calibrate => cmd_calibrate(&cfg, &cli.out, cli.quiet, stdout),
        Command::Solve { theta, phi } => cmd_solve(&cfg, *theta, *phi, stdout),
        Command::ValidateConfig => {
            if !cli.quiet {
                let _ = writeln!(stdout, "{}", cfg.to_json_pretty());
            }
            Ok(())
        }
    }
}

/// Write via a temporary file in the same directory, then rename.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    std::fs::write(&tmp, bytes).map_err(|e| io_failure(path, e))?;
    std::fs::rename(&tmp, path).map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        io_failure(path, e)
    })
}

fn ensure_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))
}

fn json_bytes<T: serde::Serialize>(value: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s.into_bytes()
}

fn fmt_reduction(r: Option<f64>) -> String {
    r.map_or_else(|| "n/a".to_string(), |v| format!("{v:.1}"))
}

fn cmd_experiment(
    cfg: &Config,
    out: &Path,
    quiet: bool,
    stdout: &mut dyn Write,
) -> Result<(), Failure> {
    let spec = cfg.experiment_spec();
    let cmp = harness::compare_compensation(&spec)
        .map_err(|e| Failure::new(harness_code(&e), e.to_string()))?;
    let n = spec.controller_params.n_tendons();

    let mut off = Vec::new();
    harness::write_trace_csv(&cmp.uncompensated.rows, n, &mut off)
        .map_err(|e| io_failure(out, e))?;
    let mut on = Vec::new();
    harness::write_trace_csv(&cmp.compensated.rows, n, &mut on).map_err(|e| io_failure(out, e))?;
    let summary = ExperimentSummary::from(&cmp);

    ensure_dir(out)?;
    write_atomic(&out.join("traces_off.csv"), &off)?;
    write_atomic(&out.join("traces_on.csv"), &on)?;
    write_atomic(&out.join("summary.json"), &json_bytes(&summary))?;

    if !quiet {
        let (u, c) = (&summary.uncompensated, &summary.compensated);
        let _ = writeln!(
            stdout,
            "{:<16}{:>14}{:>10}{:>16}{:>10}",
            "", "pos MAE [mm]", "StD", "angle MAE [deg]", "StD"
        );
        let _ = writeln!(
            stdout,
            "{:<16}{:>14.3}{:>10.3}{:>16.3}{:>10.3}",
            "uncompensated", u.mae_position_mm, u.std_position_mm, u.mae_angle_deg, u.std_angle_deg
        );
        let _ = writeln!(
            stdout,
            "{:<16}{:>14.3}{:>10.3}{:>16.3}{:>10.3}",
            "compensated", c.mae_position_mm, c.std_position_mm, c.mae_angle_deg, c.std_angle_deg
        );
        let _ = writeln!(
            stdout,
            "{:<16}{:>14}{:>10}{:>16}{:>10}",
            "% reduction",
            fmt_reduction(summary.percent_reduction_position),
            "",
            fmt_reduction(summary.percent_reduction_angle),
            ""
        );
    }
    Ok(())
}

fn calibration_log_csv(records: &[CalibrationRecord]) -> Result<Vec<u8>, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "iteration",
        "bending_stiffness",
        "layout_offset_deg",
        "angle_error_rms_deg",
        "parameter_change",
        "converged",
    ])?;
    for r in records {
        w.write_record([
            r.iteration.to_string(),
            r.params_estimate.bending_stiffness.to_string(),
            r.layout_offset_deg.to_string(),
            r.angle_error_rms_deg.to_string(),
            r.parameter_change.to_string(),
            r.converged.to_string(),
        ])?;
    }
    w.into_inner().map_err(|e| e.into_error().into())
}

fn cmd_calibrate(
    cfg: &Config,
    out: &Path,
    quiet: bool,
    stdout: &mut dyn Write,
) -> Result<(), Failure> {
    let plant_spec = calibration::calibration_plant_spec(&cfg.plant_spec(), &cfg.calibration);
    let mut plant =
        PlantHandle::new(plant_spec).map_err(|e| Failure::new(EXIT_VALIDATION, e.to_string()))?;
    let result = calibration::calibrate(&mut plant, &cfg.robot, &cfg.calibration, &cfg.control);
    let (records, failure) = match result {
        Ok(records) => (records, None),
        Err(CalibrationError::NonConvergence { records }) => {
            let msg = format!(
                "calibration did not converge in {} iterations",
                records.len()
            );
            (records, Some(Failure::new(EXIT_NON_CONVERGENCE, msg)))
        }
        Err(CalibrationError::Control(e)) => {
            return Err(Failure::new(control_code(&e), e.to_string()))
        }
        Err(CalibrationError::Harness(e)) => {
            return Err(Failure::new(harness_code(&e), e.to_string()))
        }
        Err(e) => return Err(Failure::new(EXIT_VALIDATION, e.to_string())),
    };

    let log = calibration_log_csv(&records).map_err(|e| io_failure(out, e))?;
    ensure_dir(out)?;
    write_atomic(&out.join("calibration_log.csv"), &log)?;
    if let Some(last) = records.last() {
        write_atomic(
            &out.join("fitted_params.json"),
            &json_bytes(&last.params_estimate),
        )?;
        if !quiet {
            let _ = writeln!(
                stdout,
                "iterations: {}  converged: {}  bending_stiffness: {}  layout_offset_deg: {:.4}  angle_error_rms_deg: {:.4}",
                records.len(),
                last.converged,
                last.params_estimate.bending_stiffness,
                last.layout_offset_deg,
                last.angle_error_rms_deg
            );
        }
    }
    failure.map_or(Ok(()), Err)
}

fn cmd_solve(cfg: &Config, theta: f64, phi: f64, stdout: &mut dyn Write) -> Result<(), Failure> {
    let result = control::angle_to_config(theta, phi, &cfg.robot).and_then(|q| {
        let alloc = control::allocate_tensions(&cfg.robot, &q, &cfg.control)?;
        let cmd = control::command_from_tensions(&cfg.robot, &alloc.tensions)?;
        Ok((q, alloc, cmd))
    });
    match result {
        Ok((q, alloc, cmd)) => {
            let doc = json!({
                "theta_deg": theta,
                "phi_deg": phi,
                "configuration": q,
                "tensions": cmd.tensions,
                "displacements": cmd.displacements,
                "motor_positions": cmd.motor_positions,
                "objective_value": alloc.objective_value,
                "kkt_residual": alloc.kkt_residual,
                "active_set": alloc.active_set,
            });
            let _ = stdout.write_all(&json_bytes(&doc));
            Ok(())
        }
        Err(e) => {
            let kind = match &e {
                ControlError::Infeasible { .. } => "infeasible",
                ControlError::AngleOutOfRange { .. } => "angle_out_of_range",
                ControlError::CurvatureOutOfRange { .. } => "curvature_out_of_range",
                ControlError::MaxIterationsExceeded { .. } => "max_iterations_exceeded",
                ControlError::Numerical(_) => "numerical",
                ControlError::Model(_) | ControlError::InvalidOptions(_) => "validation",
            };
            let doc = json!({ "error": kind, "message": e.to_string() });
            let _ = stdout.write_all(&json_bytes(&doc));
            Err(Failure::new(control_code(&e), e.to_string()))
        }
    }
}
