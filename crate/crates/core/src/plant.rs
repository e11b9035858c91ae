//! Simulated catheter and drivetrain, standing in for the physical test bed.
//!
//! Motor positions pass through the transmission and the per-tendon slack, the
//! tendon tensions follow from the strain balance (tendons cannot push), the
//! bending section responds per the moment balance with the plant's own true
//! parameters, and each bending axis then goes through a play operator before a
//! noisy virtual EM sensor reports the tip.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{self, Configuration, ModelError, RobotParams, TipPose};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlantError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid plant spec: {0}")]
    InvalidSpec(String),
    #[error("time step must be positive, got {0}")]
    InvalidTimeStep(f64),
    #[error("motor positions must be finite")]
    NonFiniteCommand,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantSpec {
    pub true_params: RobotParams,
    pub backlash_width_deg: f64,
    /// Slack per tendon in meters of tendon travel; empty means taut tendons.
    pub slack_per_tendon: Vec<f64>,
    pub sensor_noise_angle_deg: f64,
    pub sensor_noise_position_m: f64,
    pub seed: u64,
}

impl PlantSpec {
    /// A plant without hysteresis, slack or sensor noise.
    pub fn ideal(true_params: RobotParams) -> Self {
        Self {
            true_params,
            backlash_width_deg: 0.0,
            slack_per_tendon: Vec::new(),
            sensor_noise_angle_deg: 0.0,
            sensor_noise_position_m: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), PlantError> {
        self.true_params.validate()?;
        let bad = |m: String| Err(PlantError::InvalidSpec(m));
        if !(self.backlash_width_deg >= 0.0 && self.backlash_width_deg.is_finite()) {
            return bad(format!(
                "backlash_width_deg must be nonnegative, got {}",
                self.backlash_width_deg
            ));
        }
        if !(self.sensor_noise_angle_deg >= 0.0 && self.sensor_noise_angle_deg.is_finite()) {
            return bad(format!(
                "sensor_noise_angle_deg must be nonnegative, got {}",
                self.sensor_noise_angle_deg
            ));
        }
        if !(self.sensor_noise_position_m >= 0.0 && self.sensor_noise_position_m.is_finite()) {
            return bad(format!(
                "sensor_noise_position_m must be nonnegative, got {}",
                self.sensor_noise_position_m
            ));
        }
        let n = self.true_params.n_tendons();
        if !self.slack_per_tendon.is_empty() && self.slack_per_tendon.len() != n {
            return bad(format!(
                "slack_per_tendon has {} entries for {n} tendons",
                self.slack_per_tendon.len()
            ));
        }
        if self
            .slack_per_tendon
            .iter()
            .any(|s| !(*s >= 0.0 && s.is_finite()))
        {
            return bad("slack_per_tendon entries must be nonnegative".into());
        }
        Ok(())
    }

    fn slack(&self, i: usize) -> f64 {
        self.slack_per_tendon.get(i).copied().unwrap_or(0.0)
    }
}

/// Mutable plant memory.
#[derive(Clone, Debug)]
pub struct PlantState {
    /// Last play-operator output per axis (AP, RL), degrees.
    pub backlash_memory_deg: [f64; 2],
    /// Slack already taken up per tendon, meters.
    pub tendon_engagement: Vec<f64>,
    pub rng: ChaCha8Rng,
    pub time_s: f64,
    /// Set once the output has hit the device angle limit.
    pub saturated: bool,
    pub last_tensions: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlantMeasurement {
    /// Sensor reading of the configuration (noisy).
    pub config: Configuration,
    /// Sensor reading of the tip (noisy).
    pub tip: TipPose,
    pub true_config: Configuration,
    pub true_tip: TipPose,
    pub tensions: Vec<f64>,
    /// Tendons carrying no tension at this step.
    pub slack: Vec<bool>,
}

/// Classical play (backlash) operator of total width `width`.
pub fn play_operator(previous_output: f64, input: f64, width: f64) -> f64 {
    let half = 0.5 * width;
    previous_output.clamp(input - half, input + half)
}

#[derive(Clone, Debug)]
pub struct Plant {
    spec: PlantSpec,
    compliance: DMatrix<f64>,
    moment_arms: DMatrix<f64>,
}

impl Plant {
    pub fn new(spec: PlantSpec) -> Result<Self, PlantError> {
        spec.validate()?;
        let compliance = model::compliance_matrix(&spec.true_params)?;
        if compliance.clone().cholesky().is_none() {
            return Err(ModelError::SingularCompliance.into());
        }
        let moment_arms = model::build_d(&spec.true_params)?;
        Ok(Self {
            spec,
            compliance,
            moment_arms,
        })
    }

    pub fn spec(&self) -> &PlantSpec {
        &self.spec
    }

    /// Straight catheter, empty backlash memory, slack not yet taken up.
    pub fn reset(&self) -> PlantState {
        let n = self.spec.true_params.n_tendons();
        PlantState {
            backlash_memory_deg: [0.0; 2],
            tendon_engagement: vec![0.0; n],
            rng: ChaCha8Rng::seed_from_u64(self.spec.seed),
            time_s: 0.0,
            saturated: false,
            last_tensions: vec![0.0; n],
        }
    }

    /// Homing: every motor advances until its tendon registers tension and the
    /// motor zero is re-referenced there, which takes up all slack.
    pub fn engage_tendons(&self, state: &mut PlantState) {
        for (i, e) in state.tendon_engagement.iter_mut().enumerate() {
            *e = self.spec.slack(i);
        }
    }

    pub fn step(
        &self,
        state: &mut PlantState,
        motor_positions: &[f64],
        dt: f64,
    ) -> Result<PlantMeasurement, PlantError> {
        let params = &self.spec.true_params;
        let n = params.n_tendons();
        if motor_positions.len() != n {
            return Err(ModelError::DimensionMismatch {
                expected: n,
                found: motor_positions.len(),
            }
            .into());
        }
        if dt.is_nan() || dt <= 0.0 {
            return Err(PlantError::InvalidTimeStep(dt));
        }
        if motor_positions.iter().any(|m| !m.is_finite()) {
            return Err(PlantError::NonFiniteCommand);
        }

        let pull_in = DVector::from_iterator(
            n,
            (0..n).map(|i| {
                motor_positions[i] / params.transmission_ratio
                    - (self.spec.slack(i) - state.tendon_engagement[i])
            }),
        );
        let tensions = tendon_equilibrium(&self.compliance, &pull_in);
        let moment = &self.moment_arms * &tensions;
        let ideal = Configuration::new(
            moment[0] / params.bending_stiffness,
            moment[1] / params.bending_stiffness,
        );

        let input = ideal.axis_angles_deg(params.bending_length);
        let w = self.spec.backlash_width_deg;
        let mut out = [
            play_operator(state.backlash_memory_deg[0], input[0], w),
            play_operator(state.backlash_memory_deg[1], input[1], w),
        ];
        let magnitude = out[0].hypot(out[1]);
        if magnitude > params.max_bending_angle_deg {
            let s = params.max_bending_angle_deg / magnitude;
            out = [out[0] * s, out[1] * s];
            state.saturated = true;
        }
        state.backlash_memory_deg = out;
        state.time_s += dt;
        state.last_tensions = tensions.as_slice().to_vec();
        Ok(self.measure(state))
    }

    /// Sensor reading of the current output without advancing the plant.
    pub fn measure(&self, state: &mut PlantState) -> PlantMeasurement {
        let params = &self.spec.true_params;
        let l0 = params.bending_length;
        let [ap, rl] = state.backlash_memory_deg;
        let true_config = Configuration::from_axis_angles_deg(ap, rl, l0);
        let true_tip = model::config_to_tip_pose(params, &true_config);

        let sa = self.spec.sensor_noise_angle_deg;
        let sp = self.spec.sensor_noise_position_m;
        let mut gauss = || -> f64 { StandardNormal.sample(&mut state.rng) };
        let noisy_ap = ap + sa * gauss();
        let noisy_rl = rl + sa * gauss();
        let config = Configuration::from_axis_angles_deg(noisy_ap, noisy_rl, l0);
        let mut tip = model::config_to_tip_pose(params, &config);
        for c in &mut tip.position {
            *c += sp * gauss();
        }

        let slack = state.last_tensions.iter().map(|t| *t <= 0.0).collect();
        PlantMeasurement {
            config,
            tip,
            true_config,
            true_tip,
            tensions: state.last_tensions.clone(),
            slack,
        }
    }
}

/// Tendon tensions for given effective pull-in: `τ ≥ 0`, `Gτ − p ≥ 0`,
/// complementary. A tendon with `τ_i = 0` has spare cable (`(Gτ)_i > p_i`).
///
/// Solved with Murty's least-index principal pivoting, which terminates for
/// the positive-definite `G`. With every tendon taut this is `τ = G⁻¹ p`.
pub fn tendon_equilibrium(compliance: &DMatrix<f64>, pull_in: &DVector<f64>) -> DVector<f64> {
    let n = pull_in.len();
    let tol = 1e-14 * (1.0 + pull_in.amax());
    let mut taut: Vec<bool> = vec![true; n];
    // 2^n bounds the number of distinct taut sets; Murty's rule never revisits one.
    for _ in 0..(1usize << n.min(20)) {
        let idx: Vec<usize> = (0..n).filter(|&i| taut[i]).collect();
        let mut tau = DVector::zeros(n);
        if !idx.is_empty() {
            let sub = compliance.select_rows(&idx).select_columns(&idx);
            let rhs = DVector::from_iterator(idx.len(), idx.iter().map(|&i| pull_in[i]));
            let sol = sub
                .cholesky()
                .expect("principal submatrix of an SPD matrix")
                .solve(&rhs);
            for (k, &i) in idx.iter().enumerate() {
                tau[i] = sol[k];
            }
        }
        let w = compliance * &tau - pull_in;
        let tau_tol = 1e-12 * (1.0 + tau.amax());
        let violated = (0..n).find(|&i| {
            if taut[i] {
                tau[i] < -tau_tol
            } else {
                w[i] < -tol
            }
        });
        match violated {
            Some(i) => taut[i] = !taut[i],
            None => {
                for i in 0..n {
                    if !taut[i] || tau[i] < 0.0 {
                        tau[i] = 0.0;
                    }
                }
                return tau;
            }
        }
    }
    unreachable!("principal pivoting cycled on a positive-definite matrix")
}

/// A plant together with the state it owns.
#[derive(Clone, Debug)]
pub struct PlantHandle {
    plant: Plant,
    state: PlantState,
}

impl PlantHandle {
    pub fn new(spec: PlantSpec) -> Result<Self, PlantError> {
        let plant = Plant::new(spec)?;
        let state = plant.reset();
        Ok(Self { plant, state })
    }

    pub fn spec(&self) -> &PlantSpec {
        self.plant.spec()
    }

    pub fn state(&self) -> &PlantState {
        &self.state
    }

    pub fn reset(&mut self) {
        self.state = self.plant.reset();
    }

    pub fn engage_tendons(&mut self) {
        self.plant.engage_tendons(&mut self.state);
    }

    pub fn step(
        &mut self,
        motor_positions: &[f64],
        dt: f64,
    ) -> Result<PlantMeasurement, PlantError> {
        self.plant.step(&mut self.state, motor_positions, dt)
    }

    pub fn measure(&mut self) -> PlantMeasurement {
        self.plant.measure(&mut self.state)
    }
}
