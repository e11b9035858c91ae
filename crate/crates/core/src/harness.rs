//! Open-loop trajectory-following experiments against the simulated plant.
//!
//! A trial runs desired bending angle → (compensator) → curvature → tension
//! allocation → motor setpoints → plant, one sample at a time, and records a
//! trace row per step. Experiments repeat trials with different sensor-noise
//! seeds and report MAE/StD of tip position and bending angle, with and without
//! compensation.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compensation::{compensate, CompensatorSettings, CompensatorState};
use crate::control::{self, ControlError, ControlOptions};
use crate::model::{self, Configuration, RobotParams};
use crate::plant::{Plant, PlantError, PlantSpec};

/// Uncompensated systematic MAE below which a percent reduction is not reported.
const REDUCTION_FLOOR: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HarnessError {
    #[error("validation error: {0}")]
    Validation(String),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error("trial {trial} aborted after {completed_steps} steps: {source}")]
    TrialAborted {
        trial: usize,
        completed_steps: usize,
        #[source]
        source: Box<HarnessError>,
    },
}

impl HarnessError {
    /// The underlying failure, skipping trial wrappers.
    pub fn root(&self) -> &HarnessError {
        match self {
            HarnessError::TrialAborted { source, .. } => source.root(),
            other => other,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Waveform {
    #[default]
    Sinusoid,
    /// Linear from `offset` to `offset + amplitude` over the whole duration.
    Ramp,
    /// Constant at `offset + amplitude`.
    Hold,
    /// Linear interpolation of `[t_s, angle_deg]` knots; `amplitude`/`offset` unused.
    Piecewise { knots: Vec<[f64; 2]> },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    #[default]
    #[serde(rename = "AP")]
    Ap,
    #[serde(rename = "RL")]
    Rl,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::Ap => 0,
            Axis::Rl => 1,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Axis::Ap => "AP",
            Axis::Rl => "RL",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectorySpec {
    pub waveform: Waveform,
    pub amplitude_deg: f64,
    pub offset_deg: f64,
    pub period_s: f64,
    pub cycles: u32,
    pub axis: Axis,
    pub sample_rate_hz: f64,
}

impl Default for TrajectorySpec {
    fn default() -> Self {
        Self {
            waveform: Waveform::Sinusoid,
            amplitude_deg: 45.0,
            offset_deg: 0.0,
            period_s: 10.0,
            cycles: 2,
            axis: Axis::Ap,
            sample_rate_hz: 50.0,
        }
    }
}

impl TrajectorySpec {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Validation(m));
        if !(self.amplitude_deg >= 0.0 && self.amplitude_deg.is_finite()) {
            return bad(format!(
                "amplitude_deg must be nonnegative, got {}",
                self.amplitude_deg
            ));
        }
        if !self.offset_deg.is_finite() {
            return bad("offset_deg must be finite".into());
        }
        if !(self.period_s > 0.0 && self.period_s.is_finite()) {
            return bad(format!("period_s must be positive, got {}", self.period_s));
        }
        if self.cycles < 1 {
            return bad("cycles must be at least 1".into());
        }
        if !(self.sample_rate_hz > 0.0 && self.sample_rate_hz.is_finite()) {
            return bad(format!(
                "sample_rate_hz must be positive, got {}",
                self.sample_rate_hz
            ));
        }
        if let Waveform::Piecewise { knots } = &self.waveform {
            if knots.is_empty() {
                return bad("piecewise waveform needs at least one knot".into());
            }
            if knots
                .iter()
                .any(|k| !(k[0].is_finite() && k[1].is_finite()))
            {
                return bad("piecewise knots must be finite".into());
            }
            if knots.windows(2).any(|w| w[1][0] <= w[0][0]) {
                return bad("piecewise knot times must be strictly increasing".into());
            }
        }
        Ok(())
    }

    pub fn duration_s(&self) -> f64 {
        f64::from(self.cycles) * self.period_s
    }

    /// Number of samples including both endpoints.
    pub fn n_samples(&self) -> usize {
        (self.duration_s() * self.sample_rate_hz).round() as usize + 1
    }

    pub fn with_axis(&self, axis: Axis) -> Self {
        Self {
            axis,
            ..self.clone()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectorySample {
    pub t_s: f64,
    pub angle_deg: f64,
}

pub fn generate_trajectory(spec: &TrajectorySpec) -> Result<Vec<TrajectorySample>, HarnessError> {
    spec.validate()?;
    let duration = spec.duration_s();
    Ok((0..spec.n_samples())
        .map(|k| {
            let t_s = k as f64 / spec.sample_rate_hz;
            let angle_deg = match &spec.waveform {
                Waveform::Sinusoid => {
                    let phase = (t_s / spec.period_s).fract();
                    spec.offset_deg + spec.amplitude_deg * (std::f64::consts::TAU * phase).sin()
                }
                Waveform::Ramp => spec.offset_deg + spec.amplitude_deg * (t_s / duration).min(1.0),
                Waveform::Hold => spec.offset_deg + spec.amplitude_deg,
                Waveform::Piecewise { knots } => interpolate(knots, t_s),
            };
            TrajectorySample { t_s, angle_deg }
        })
        .collect())
}

fn interpolate(knots: &[[f64; 2]], t: f64) -> f64 {
    let first = knots[0];
    let last = knots[knots.len() - 1];
    if t <= first[0] {
        return first[1];
    }
    if t >= last[0] {
        return last[1];
    }
    let i = knots.partition_point(|k| k[0] <= t);
    let (a, b) = (knots[i - 1], knots[i]);
    a[1] + (b[1] - a[1]) * (t - a[0]) / (b[0] - a[0])
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlMode {
    /// Minimum-energy allocation over all tendons with a tension floor.
    #[default]
    Redundant,
    /// One tendon per bending direction, others unloaded, no pretension.
    SingleTendon,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub trajectory: TrajectorySpec,
    pub trials: usize,
    pub plant: PlantSpec,
    pub controller_params: RobotParams,
    pub control: ControlOptions,
    pub compensator: CompensatorSettings,
    pub control_mode: ControlMode,
}

impl ExperimentSpec {
    /// Default protocol on the given plant: 3 trials of the default trajectory.
    pub fn new(plant: PlantSpec, controller_params: RobotParams) -> Self {
        Self {
            trajectory: TrajectorySpec::default(),
            trials: 3,
            plant,
            controller_params,
            control: ControlOptions::default(),
            compensator: CompensatorSettings::default(),
            control_mode: ControlMode::Redundant,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.trials < 1 {
            return Err(HarnessError::Validation("trials must be at least 1".into()));
        }
        self.trajectory.validate()?;
        self.plant.validate()?;
        self.controller_params
            .validate()
            .map_err(ControlError::from)?;
        self.control.validate()?;
        self.compensator
            .validate()
            .map_err(HarnessError::Validation)?;
        let (nc, np) = (
            self.controller_params.n_tendons(),
            self.plant.true_params.n_tendons(),
        );
        if nc != np {
            return Err(HarnessError::Validation(format!(
                "controller has {nc} tendons but the plant has {np}"
            )));
        }
        Ok(())
    }

    pub fn trial_seed(&self, trial: usize) -> u64 {
        self.plant.seed.wrapping_add(trial as u64)
    }
}

/// One time step of a trial. Angles in degrees, tip positions in millimeters.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub trial: usize,
    pub t_s: f64,
    pub axis: Axis,
    pub theta_des_deg: f64,
    pub theta_cmd_deg: f64,
    pub theta_meas_deg: f64,
    /// Commanded curvature.
    pub kappa_x: f64,
    pub kappa_y: f64,
    pub tensions: Vec<f64>,
    pub tip_des_mm: [f64; 3],
    pub tip_meas_mm: [f64; 3],
    /// Noise-free plant output, for separating systematic error from sensor noise.
    pub theta_true_deg: f64,
    pub tip_true_mm: [f64; 3],
}

fn mm(p: [f64; 3]) -> [f64; 3] {
    p.map(|v| v * 1e3)
}

/// Run one trial with the plant's noise generator seeded by `trial_seed`.
///
/// On failure the error carries the number of completed steps; use
/// [`run_trial_partial`] to keep the partial trace.
pub fn run_trial(spec: &ExperimentSpec, trial_seed: u64) -> Result<Vec<TraceRow>, HarnessError> {
    let (rows, err) = run_trial_partial(spec, 0, trial_seed);
    match err {
        None => Ok(rows),
        Some(e) => Err(e),
    }
}

/// Like [`run_trial`] but always returns the rows recorded before any failure.
pub fn run_trial_partial(
    spec: &ExperimentSpec,
    trial: usize,
    trial_seed: u64,
) -> (Vec<TraceRow>, Option<HarnessError>) {
    let mut rows = Vec::new();
    let result = trial_loop(spec, trial, trial_seed, &mut rows);
    let err = result.err().map(|e| HarnessError::TrialAborted {
        trial,
        completed_steps: rows.len(),
        source: Box::new(e),
    });
    (rows, err)
}

fn trial_loop(
    spec: &ExperimentSpec,
    trial: usize,
    trial_seed: u64,
    rows: &mut Vec<TraceRow>,
) -> Result<(), HarnessError> {
    spec.validate()?;
    let samples = generate_trajectory(&spec.trajectory)?;
    let plant = Plant::new(PlantSpec {
        seed: trial_seed,
        ..spec.plant.clone()
    })?;
    let mut state = plant.reset();
    if spec.control_mode == ControlMode::Redundant && spec.control.tension_min > 0.0 {
        plant.engage_tendons(&mut state);
    }

    let params = &spec.controller_params;
    let l0 = params.bending_length;
    let plant_l0 = spec.plant.true_params.bending_length;
    let axis = spec.trajectory.axis;
    let dt = 1.0 / spec.trajectory.sample_rate_hz;
    let mut comp = [CompensatorState::default(); 2];

    for sample in samples {
        let mut desired = [0.0; 2];
        desired[axis.index()] = sample.angle_deg;
        let mut commanded = [0.0; 2];
        for k in 0..2 {
            let (next, cmd) = compensate(&comp[k], &spec.compensator, desired[k]);
            comp[k] = next;
            commanded[k] = cmd;
        }

        let q_cmd = control::axis_angles_to_config(commanded[0], commanded[1], params)?;
        let command = match spec.control_mode {
            ControlMode::Redundant => control::inverse_kinematics(params, &q_cmd, &spec.control)?,
            ControlMode::SingleTendon => control::single_tendon_command(params, &q_cmd)?,
        };
        let m = plant.step(&mut state, &command.motor_positions, dt)?;

        let q_des = Configuration::from_axis_angles_deg(desired[0], desired[1], l0);
        let tip_des = model::config_to_tip_pose(params, &q_des);
        rows.push(TraceRow {
            trial,
            t_s: sample.t_s,
            axis,
            theta_des_deg: desired[axis.index()],
            theta_cmd_deg: commanded[axis.index()],
            theta_meas_deg: m.config.axis_angles_deg(plant_l0)[axis.index()],
            kappa_x: q_cmd.kappa_x,
            kappa_y: q_cmd.kappa_y,
            tensions: command.tensions,
            tip_des_mm: mm(tip_des.position),
            tip_meas_mm: mm(m.tip.position),
            theta_true_deg: m.true_config.axis_angles_deg(plant_l0)[axis.index()],
            tip_true_mm: mm(m.true_tip.position),
        });
    }
    Ok(())
}

/// Mean absolute error and spread of a set of errors.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub mae: f64,
    /// Population standard deviation of the absolute errors.
    pub std: f64,
    /// Population standard deviation of the signed errors.
    pub std_signed: f64,
    pub max_abs: f64,
    pub count: usize,
}

/// Statistics of signed errors (for distances, pass the nonnegative distances).
pub fn error_stats(errors: &[f64]) -> ErrorStats {
    if errors.is_empty() {
        return ErrorStats::default();
    }
    let n = errors.len() as f64;
    let mae = errors.iter().map(|e| e.abs()).sum::<f64>() / n;
    let mean = errors.iter().sum::<f64>() / n;
    let std = (errors.iter().map(|e| (e.abs() - mae).powi(2)).sum::<f64>() / n).sqrt();
    let std_signed = (errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n).sqrt();
    let max_abs = errors.iter().fold(0.0_f64, |m, e| m.max(e.abs()));
    ErrorStats {
        mae,
        std,
        std_signed,
        max_abs,
        count: errors.len(),
    }
}

/// Angle-style metrics of `measured` against `reference`.
pub fn compute_metrics(measured: &[f64], reference: &[f64]) -> Result<ErrorStats, HarnessError> {
    if measured.len() != reference.len() {
        return Err(HarnessError::Validation(format!(
            "series lengths differ: {} vs {}",
            measured.len(),
            reference.len()
        )));
    }
    let errors: Vec<f64> = measured.iter().zip(reference).map(|(m, r)| m - r).collect();
    Ok(error_stats(&errors))
}

/// Euclidean tip-position error metrics.
pub fn position_metrics(
    measured: &[[f64; 3]],
    reference: &[[f64; 3]],
) -> Result<ErrorStats, HarnessError> {
    if measured.len() != reference.len() {
        return Err(HarnessError::Validation(format!(
            "series lengths differ: {} vs {}",
            measured.len(),
            reference.len()
        )));
    }
    let dist: Vec<f64> = measured
        .iter()
        .zip(reference)
        .map(|(m, r)| {
            ((m[0] - r[0]).powi(2) + (m[1] - r[1]).powi(2) + (m[2] - r[2]).powi(2)).sqrt()
        })
        .collect();
    Ok(error_stats(&dist))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrackingMetrics {
    /// Bending-angle error, degrees.
    pub angle: ErrorStats,
    /// Tip-position error, millimeters.
    pub position: ErrorStats,
}

/// Metrics of the sensor readings over rows with `t_s >= skip_before_s`.
pub fn trace_metrics(rows: &[TraceRow], skip_before_s: f64) -> TrackingMetrics {
    metrics_of(rows, skip_before_s, |r| (r.theta_meas_deg, r.tip_meas_mm))
}

/// Metrics of the noise-free plant output over rows with `t_s >= skip_before_s`.
pub fn systematic_metrics(rows: &[TraceRow], skip_before_s: f64) -> TrackingMetrics {
    metrics_of(rows, skip_before_s, |r| (r.theta_true_deg, r.tip_true_mm))
}

fn metrics_of(
    rows: &[TraceRow],
    skip_before_s: f64,
    pick: impl Fn(&TraceRow) -> (f64, [f64; 3]),
) -> TrackingMetrics {
    let kept: Vec<&TraceRow> = rows.iter().filter(|r| r.t_s >= skip_before_s).collect();
    let angles: Vec<f64> = kept.iter().map(|r| pick(r).0 - r.theta_des_deg).collect();
    let tips: Vec<[f64; 3]> = kept.iter().map(|r| pick(r).1).collect();
    let des: Vec<[f64; 3]> = kept.iter().map(|r| r.tip_des_mm).collect();
    TrackingMetrics {
        angle: error_stats(&angles),
        position: position_metrics(&tips, &des).expect("equal lengths by construction"),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentReport {
    pub rows: Vec<TraceRow>,
    pub per_trial: Vec<TrackingMetrics>,
    pub pooled: TrackingMetrics,
    pub systematic: TrackingMetrics,
}

/// All trials of `spec`, in trial order.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport, HarnessError> {
    spec.validate()?;
    let mut rows = Vec::with_capacity(spec.trials * spec.trajectory.n_samples());
    let mut per_trial = Vec::with_capacity(spec.trials);
    for trial in 0..spec.trials {
        let (trial_rows, err) = run_trial_partial(spec, trial, spec.trial_seed(trial));
        if let Some(e) = err {
            return Err(e);
        }
        per_trial.push(trace_metrics(&trial_rows, 0.0));
        rows.extend(trial_rows);
    }
    Ok(ExperimentReport {
        pooled: trace_metrics(&rows, 0.0),
        systematic: systematic_metrics(&rows, 0.0),
        rows,
        per_trial,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompensationComparison {
    pub uncompensated: ExperimentReport,
    pub compensated: ExperimentReport,
    pub percent_reduction_position: Option<f64>,
    pub percent_reduction_angle: Option<f64>,
}

/// `100·(off − on)/off`, or `None` when the uncompensated run has no
/// systematic error to remove.
pub fn percent_reduction(mae_off: f64, mae_on: f64, systematic_off: f64) -> Option<f64> {
    if systematic_off <= REDUCTION_FLOOR || mae_off <= REDUCTION_FLOOR {
        None
    } else {
        Some(100.0 * (mae_off - mae_on) / mae_off)
    }
}

/// Identical trials (same seeds) with the compensator disabled, then enabled.
pub fn compare_compensation(spec: &ExperimentSpec) -> Result<CompensationComparison, HarnessError> {
    let mut off = spec.clone();
    off.compensator.enabled = false;
    let mut on = spec.clone();
    on.compensator.enabled = true;
    let uncompensated = run_experiment(&off)?;
    let compensated = run_experiment(&on)?;
    Ok(CompensationComparison {
        percent_reduction_position: percent_reduction(
            uncompensated.pooled.position.mae,
            compensated.pooled.position.mae,
            uncompensated.systematic.position.mae,
        ),
        percent_reduction_angle: percent_reduction(
            uncompensated.pooled.angle.mae,
            compensated.pooled.angle.mae,
            uncompensated.systematic.angle.mae,
        ),
        uncompensated,
        compensated,
    })
}

pub fn trace_header(n_tendons: usize) -> Vec<String> {
    let mut h: Vec<String> = [
        "t_s",
        "axis",
        "theta_des_deg",
        "theta_cmd_deg",
        "theta_meas_deg",
        "kappa_x",
        "kappa_y",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    h.extend((1..=n_tendons).map(|i| format!("tau_{i}")));
    for prefix in ["tip_des", "tip_meas"] {
        for c in ["x", "y", "z"] {
            h.push(format!("{prefix}_{c}_mm"));
        }
    }
    h
}

/// Write trace rows as CSV. Floats use the shortest round-trip representation.
pub fn write_trace_csv<W: Write>(rows: &[TraceRow], n_tendons: usize, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(trace_header(n_tendons))?;
    for r in rows {
        let mut rec: Vec<String> = vec![
            r.t_s.to_string(),
            r.axis.label().to_string(),
            r.theta_des_deg.to_string(),
            r.theta_cmd_deg.to_string(),
            r.theta_meas_deg.to_string(),
            r.kappa_x.to_string(),
            r.kappa_y.to_string(),
        ];
        rec.extend(r.tensions.iter().map(f64::to_string));
        rec.extend(
            r.tip_des_mm
                .iter()
                .chain(&r.tip_meas_mm)
                .map(f64::to_string),
        );
        w.write_record(rec)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub mae_position_mm: f64,
    pub std_position_mm: f64,
    pub mae_angle_deg: f64,
    pub std_angle_deg: f64,
    pub std_angle_signed_deg: f64,
    pub per_trial: Vec<TrackingMetrics>,
}

impl ConditionSummary {
    pub fn from_report(report: &ExperimentReport) -> Self {
        Self {
            mae_position_mm: report.pooled.position.mae,
            std_position_mm: report.pooled.position.std,
            mae_angle_deg: report.pooled.angle.mae,
            std_angle_deg: report.pooled.angle.std,
            std_angle_signed_deg: report.pooled.angle.std_signed,
            per_trial: report.per_trial.clone(),
        }
    }
}

/// Table-style summary of a compensation comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub uncompensated: ConditionSummary,
    pub compensated: ConditionSummary,
    pub percent_reduction_position: Option<f64>,
    pub percent_reduction_angle: Option<f64>,
}

impl From<&CompensationComparison> for ExperimentSummary {
    fn from(c: &CompensationComparison) -> Self {
        Self {
            uncompensated: ConditionSummary::from_report(&c.uncompensated),
            compensated: ConditionSummary::from_report(&c.compensated),
            percent_reduction_position: c.percent_reduction_position,
            percent_reduction_angle: c.percent_reduction_angle,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn default_sinusoid_shape() {
        let s = generate_trajectory(&TrajectorySpec::default()).unwrap();
        assert_eq!(s.len(), 1001);
        assert_eq!(s[0].angle_deg, 0.0);
        assert_eq!(s[1000].t_s, 20.0);
        assert!(s[1000].angle_deg.abs() < 1e-12);
        let max = s.iter().map(|p| p.angle_deg).fold(f64::MIN, f64::max);
        let min = s.iter().map(|p| p.angle_deg).fold(f64::MAX, f64::min);
        assert_relative_eq!(max, 45.0, max_relative = 1e-12);
        assert_relative_eq!(min, -45.0, max_relative = 1e-12);
        assert_eq!(TrajectorySpec::default().cycles, 2);
    }

    #[test]
    fn zero_amplitude_is_constant() {
        let spec = TrajectorySpec {
            amplitude_deg: 0.0,
            offset_deg: 7.5,
            ..Default::default()
        };
        assert!(generate_trajectory(&spec)
            .unwrap()
            .iter()
            .all(|p| p.angle_deg == 7.5));
    }

    #[test]
    fn other_waveforms() {
        let ramp = TrajectorySpec {
            waveform: Waveform::Ramp,
            amplitude_deg: 10.0,
            cycles: 1,
            period_s: 1.0,
            sample_rate_hz: 10.0,
            ..Default::default()
        };
        let s = generate_trajectory(&ramp).unwrap();
        assert_eq!(s.first().unwrap().angle_deg, 0.0);
        assert_relative_eq!(s.last().unwrap().angle_deg, 10.0);
        let pw = TrajectorySpec {
            waveform: Waveform::Piecewise {
                knots: vec![[0.0, 0.0], [0.5, 20.0], [1.0, 0.0]],
            },
            cycles: 1,
            period_s: 1.0,
            sample_rate_hz: 4.0,
            ..Default::default()
        };
        let s: Vec<f64> = generate_trajectory(&pw)
            .unwrap()
            .iter()
            .map(|p| p.angle_deg)
            .collect();
        assert_eq!(s, vec![0.0, 10.0, 20.0, 10.0, 0.0]);
    }

    #[test]
    fn invalid_trajectories() {
        for spec in [
            TrajectorySpec {
                amplitude_deg: -1.0,
                ..Default::default()
            },
            TrajectorySpec {
                period_s: 0.0,
                ..Default::default()
            },
            TrajectorySpec {
                cycles: 0,
                ..Default::default()
            },
            TrajectorySpec {
                sample_rate_hz: 0.0,
                ..Default::default()
            },
            TrajectorySpec {
                waveform: Waveform::Piecewise { knots: vec![] },
                ..Default::default()
            },
        ] {
            assert!(matches!(
                generate_trajectory(&spec),
                Err(HarnessError::Validation(_))
            ));
        }
    }

    #[test]
    fn metric_examples() {
        let zero = compute_metrics(&[1.0, 2.0], &[1.0, 2.0]).unwrap();
        assert_eq!((zero.mae, zero.std), (0.0, 0.0));
        let constant = compute_metrics(&[3.0, 4.0, 5.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((constant.mae, constant.std), (2.0, 0.0));
        let s = error_stats(&[1.0, -3.0, 2.0]);
        assert!((s.mae - 2.0).abs() < 1e-12);
        assert!((s.std - (2.0_f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!(compute_metrics(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn reduction_guard() {
        assert_eq!(percent_reduction(0.0, 0.0, 0.0), None);
        assert_eq!(percent_reduction(0.4, 0.5, 0.0), None);
        assert_relative_eq!(
            percent_reduction(4.80, 3.31, 4.0).unwrap(),
            31.04,
            max_relative = 1e-3
        );
        assert_relative_eq!(
            percent_reduction(6.11, 3.26, 6.0).unwrap(),
            46.6,
            max_relative = 1e-3
        );
    }

    #[test]
    fn ideal_trial_tracks_exactly() {
        let params = RobotParams::default();
        let spec = ExperimentSpec {
            trajectory: TrajectorySpec {
                sample_rate_hz: 10.0,
                ..Default::default()
            },
            compensator: CompensatorSettings {
                enabled: false,
                ..Default::default()
            },
            ..ExperimentSpec::new(PlantSpec::ideal(params.clone()), params)
        };
        let rows = run_trial(&spec, 1).unwrap();
        assert_eq!(rows.len(), 201);
        let m = trace_metrics(&rows, 0.0);
        assert!(m.angle.mae < 1e-9 && m.position.mae < 1e-9, "{m:?}");
    }

    #[test]
    fn infeasible_trial_keeps_partial_trace() {
        let params = RobotParams::default();
        let mut spec = ExperimentSpec::new(PlantSpec::ideal(params.clone()), params);
        spec.control.tension_max = 5.0;
        let (rows, err) = run_trial_partial(&spec, 0, 0);
        let err = err.unwrap();
        assert!(!rows.is_empty());
        assert!(matches!(
            err.root(),
            HarnessError::Control(ControlError::Infeasible { .. })
        ));
        assert!(
            matches!(err, HarnessError::TrialAborted { completed_steps, .. } if completed_steps == rows.len())
        );
    }

    #[test]
    fn trace_csv_header() {
        let h = trace_header(4).join(",");
        assert_eq!(
            h,
            "t_s,axis,theta_des_deg,theta_cmd_deg,theta_meas_deg,kappa_x,kappa_y,tau_1,tau_2,tau_3,tau_4,\
             tip_des_x_mm,tip_des_y_mm,tip_des_z_mm,tip_meas_x_mm,tip_meas_y_mm,tip_meas_z_mm"
        );
    }
}
