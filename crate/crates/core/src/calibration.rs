//! Iterative identification of bending stiffness and tendon-layout rotation.
//!
//! Each outer iteration probes the plant with a sinusoid on each bending axis
//! using the current estimate, fits the linear map from desired to measured
//! axis angles, and corrects the estimate from that map. Tendon lengths and
//! stiffnesses are trusted inputs and pass through unchanged.

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::{self, ControlError, ControlOptions};
use crate::harness::{generate_trajectory, Axis, HarnessError, TrajectorySpec};
use crate::model::{self, RobotParams};
use crate::plant::{PlantError, PlantHandle, PlantSpec};

/// Desired amplitude below which a probe axis is considered unexcited, degrees.
const MIN_PROBE_AMPLITUDE_DEG: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalibrationError {
    #[error("invalid calibration settings: {0}")]
    InvalidSettings(String),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error("degenerate probe: {0}")]
    DegenerateProbe(String),
    #[error("calibration did not converge in {} iterations", records.len())]
    NonConvergence { records: Vec<CalibrationRecord> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationSettings {
    pub max_outer_iterations: usize,
    /// Threshold on the largest per-iteration change of relative `K_b` and
    /// layout rotation (radians).
    pub convergence_tol: f64,
    pub step_gain: f64,
    pub probe: TrajectorySpec,
    /// Keep the plant's backlash while calibrating; see [`calibration_plant_spec`].
    pub include_hysteresis: bool,
}

impl Default for CalibrationSettings {
    fn default() -> Self {
        Self {
            max_outer_iterations: 20,
            convergence_tol: 1e-3,
            step_gain: 1.0,
            probe: TrajectorySpec {
                amplitude_deg: 30.0,
                period_s: 10.0,
                cycles: 1,
                sample_rate_hz: 20.0,
                ..TrajectorySpec::default()
            },
            include_hysteresis: false,
        }
    }
}

impl CalibrationSettings {
    pub fn validate(&self) -> Result<(), CalibrationError> {
        let bad = |m: String| Err(CalibrationError::InvalidSettings(m));
        if self.max_outer_iterations < 1 {
            return bad("max_outer_iterations must be at least 1".into());
        }
        if !(self.convergence_tol > 0.0 && self.convergence_tol.is_finite()) {
            return bad(format!(
                "convergence_tol must be positive, got {}",
                self.convergence_tol
            ));
        }
        if !(self.step_gain > 0.0 && self.step_gain <= 1.0) {
            return bad(format!(
                "step_gain must lie in (0, 1], got {}",
                self.step_gain
            ));
        }
        self.probe.validate()?;
        Ok(())
    }
}

/// The plant a calibration session should run against: backlash removed
/// unless `include_hysteresis` is set.
pub fn calibration_plant_spec(spec: &PlantSpec, settings: &CalibrationSettings) -> PlantSpec {
    let mut out = spec.clone();
    if !settings.include_hysteresis {
        out.backlash_width_deg = 0.0;
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeSample {
    pub axis: Axis,
    pub t_s: f64,
    /// (AP, RL) in degrees.
    pub desired_deg: [f64; 2],
    pub measured_deg: [f64; 2],
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub samples: Vec<ProbeSample>,
}

impl ProbeResult {
    pub fn axis(&self, axis: Axis) -> impl Iterator<Item = &ProbeSample> {
        self.samples.iter().filter(move |s| s.axis == axis)
    }

    /// Least-squares `M` with `measured ≈ M · desired`.
    pub fn response_map(&self) -> Result<Matrix2<f64>, CalibrationError> {
        for axis in [Axis::Ap, Axis::Rl] {
            let amp = self
                .axis(axis)
                .map(|s| s.desired_deg[axis.index()].abs())
                .fold(0.0, f64::max);
            if amp <= MIN_PROBE_AMPLITUDE_DEG {
                return Err(CalibrationError::DegenerateProbe(format!(
                    "zero desired amplitude on the {} axis",
                    axis.label()
                )));
            }
        }
        let mut sdd = Matrix2::zeros();
        let mut smd = Matrix2::zeros();
        for s in &self.samples {
            let d = nalgebra::Vector2::from(s.desired_deg);
            let m = nalgebra::Vector2::from(s.measured_deg);
            sdd += d * d.transpose();
            smd += m * d.transpose();
        }
        let inv = sdd.try_inverse().ok_or_else(|| {
            CalibrationError::DegenerateProbe("desired series do not span both axes".into())
        })?;
        Ok(smd * inv)
    }

    /// RMS of the 2-axis angle error, degrees.
    pub fn angle_error_rms_deg(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        let sum: f64 = self
            .samples
            .iter()
            .map(|s| {
                (s.measured_deg[0] - s.desired_deg[0]).powi(2)
                    + (s.measured_deg[1] - s.desired_deg[1]).powi(2)
            })
            .sum();
        (sum / self.samples.len() as f64).sqrt()
    }
}

/// Command the probe on the AP axis, then on RL, using `estimate` for the
/// inverse kinematics. Tendons are engaged first when the options keep them taut.
pub fn run_probe(
    plant: &mut PlantHandle,
    estimate: &RobotParams,
    probe: &TrajectorySpec,
    opts: &ControlOptions,
) -> Result<ProbeResult, CalibrationError> {
    if opts.tension_min > 0.0 {
        plant.engage_tendons();
    }
    let plant_l0 = plant.spec().true_params.bending_length;
    let dt = 1.0 / probe.sample_rate_hz;
    let mut samples = Vec::new();
    for axis in [Axis::Ap, Axis::Rl] {
        for s in generate_trajectory(&probe.with_axis(axis))? {
            let mut desired = [0.0; 2];
            desired[axis.index()] = s.angle_deg;
            let q = control::axis_angles_to_config(desired[0], desired[1], estimate)?;
            let cmd = control::inverse_kinematics(estimate, &q, opts)?;
            let m = plant.step(&cmd.motor_positions, dt)?;
            samples.push(ProbeSample {
                axis,
                t_s: s.t_s,
                desired_deg: desired,
                measured_deg: m.config.axis_angles_deg(plant_l0),
            });
        }
    }
    Ok(ProbeResult { samples })
}

/// Rule mapping an estimate and its probe response to a new estimate.
pub trait UpdateStrategy {
    fn update(
        &self,
        estimate: &RobotParams,
        probe: &ProbeResult,
        step_gain: f64,
    ) -> Result<RobotParams, CalibrationError>;
}

/// Stiffness from the mean axis gain, layout rotation from the cross-coupling.
///
/// With `M` the fitted response map, the plant behaves like `s·R(δ)`: the
/// commanded moment is too small by `s` and lands rotated by `δ`. `K_b` is
/// scaled by `1 + g(1/s − 1)` and the layout rotated by `g·δ`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct AmplitudePhaseUpdate;

impl UpdateStrategy for AmplitudePhaseUpdate {
    fn update(
        &self,
        estimate: &RobotParams,
        probe: &ProbeResult,
        step_gain: f64,
    ) -> Result<RobotParams, CalibrationError> {
        let m = probe.response_map()?;
        let gain = 0.5 * (m.column(0).norm() + m.column(1).norm());
        if !(gain > 0.0 && gain.is_finite()) {
            return Err(CalibrationError::DegenerateProbe(
                "plant did not respond to the probe".into(),
            ));
        }
        let rotation = (m[(1, 0)] - m[(0, 1)]).atan2(m[(0, 0)] + m[(1, 1)]);
        let kb = estimate.bending_stiffness * (1.0 + step_gain * (1.0 / gain - 1.0));
        Ok(estimate
            .with_bending_stiffness(kb)
            .with_layout_rotated(step_gain * rotation))
    }
}

/// Default update: [`AmplitudePhaseUpdate`].
pub fn update_parameters(
    estimate: &RobotParams,
    probe: &ProbeResult,
    settings: &CalibrationSettings,
) -> Result<RobotParams, CalibrationError> {
    settings.validate()?;
    AmplitudePhaseUpdate.update(estimate, probe, settings.step_gain)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRecord {
    pub iteration: usize,
    /// Estimate after this iteration's update.
    pub params_estimate: RobotParams,
    /// Layout rotation of the estimate relative to the initial guess, degrees.
    pub layout_offset_deg: f64,
    /// Tracking error of the probe run with the estimate before the update.
    pub angle_error_rms_deg: f64,
    /// Largest of the relative `K_b` change and the layout rotation (rad).
    pub parameter_change: f64,
    pub converged: bool,
}

/// Calibrate with the default update strategy.
pub fn calibrate(
    plant: &mut PlantHandle,
    initial: &RobotParams,
    settings: &CalibrationSettings,
    opts: &ControlOptions,
) -> Result<Vec<CalibrationRecord>, CalibrationError> {
    calibrate_with(plant, initial, settings, opts, &AmplitudePhaseUpdate)
}

/// Repeat probe and update until the parameter change drops below the
/// tolerance. The plant is reset once at the start.
pub fn calibrate_with(
    plant: &mut PlantHandle,
    initial: &RobotParams,
    settings: &CalibrationSettings,
    opts: &ControlOptions,
    strategy: &dyn UpdateStrategy,
) -> Result<Vec<CalibrationRecord>, CalibrationError> {
    settings.validate()?;
    initial.validate().map_err(ControlError::from)?;
    opts.validate()?;
    plant.reset();

    let mut estimate = initial.clone();
    let mut records = Vec::with_capacity(settings.max_outer_iterations);
    for iteration in 1..=settings.max_outer_iterations {
        let probe = run_probe(plant, &estimate, &settings.probe, opts)?;
        let next = strategy.update(&estimate, &probe, settings.step_gain)?;
        let dk = ((next.bending_stiffness - estimate.bending_stiffness)
            / estimate.bending_stiffness)
            .abs();
        let drot = model::layout_rotation_between(&estimate, &next).abs();
        let change = dk.max(drot);
        let converged = change < settings.convergence_tol;
        records.push(CalibrationRecord {
            iteration,
            layout_offset_deg: model::layout_rotation_between(initial, &next).to_degrees(),
            params_estimate: next.clone(),
            angle_error_rms_deg: probe.angle_error_rms_deg(),
            parameter_change: change,
            converged,
        });
        estimate = next;
        if converged {
            return Ok(records);
        }
    }
    Err(CalibrationError::NonConvergence { records })
}
