//! Redundancy resolution and inverse kinematics.
//!
//! Four tendons drive two curvatures, so the moment balance `D τ = K q` leaves a
//! two-dimensional family of tensions. We pick the one with minimum squared
//! tension subject to a tension floor (keeps every tendon taut) and an actuator
//! ceiling, then map it through the compliance matrix to tendon displacements.

pub mod qp;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{self, Configuration, ModelError, RobotParams, TendonCommand};
use qp::{BoundSide, BoxQp, QpError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid control options: {0}")]
    InvalidOptions(String),
    #[error("desired configuration is infeasible within tension bounds (residual {residual:e})")]
    Infeasible { residual: f64 },
    #[error("tension allocation did not converge in {iterations} iterations")]
    MaxIterationsExceeded { iterations: usize },
    #[error("bending angle {angle_deg}° exceeds the device limit of {limit_deg}°")]
    AngleOutOfRange { angle_deg: f64, limit_deg: f64 },
    #[error("curvature {kappa} 1/m exceeds the limit {kappa_max} 1/m")]
    CurvatureOutOfRange { kappa: f64, kappa_max: f64 },
    #[error("numerical failure in tension allocation: {0}")]
    Numerical(&'static str),
}

impl From<QpError> for ControlError {
    fn from(e: QpError) -> Self {
        match e {
            QpError::Infeasible { residual } => ControlError::Infeasible { residual },
            QpError::MaxIterations { iterations } => {
                ControlError::MaxIterationsExceeded { iterations }
            }
            QpError::Numerical(msg) => ControlError::Numerical(msg),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlOptions {
    /// Tension floor, N.
    pub tension_min: f64,
    /// Actuator force ceiling, N.
    pub tension_max: f64,
    pub qp_tolerance: f64,
    pub qp_max_iterations: usize,
    /// Diagonal weights of the tension energy; `None` is the identity.
    pub tension_weights: Option<Vec<f64>>,
}

impl Default for ControlOptions {
    fn default() -> Self {
        Self {
            tension_min: 0.5,
            tension_max: 40.0,
            qp_tolerance: 1e-10,
            qp_max_iterations: 100,
            tension_weights: None,
        }
    }
}

impl ControlOptions {
    pub fn validate(&self) -> Result<(), ControlError> {
        let bad = |m: String| Err(ControlError::InvalidOptions(m));
        if !(self.tension_min >= 0.0 && self.tension_min.is_finite()) {
            return bad(format!(
                "tension_min must be nonnegative, got {}",
                self.tension_min
            ));
        }
        if !(self.tension_max > self.tension_min && self.tension_max.is_finite()) {
            return bad(format!(
                "tension_max ({}) must exceed tension_min ({})",
                self.tension_max, self.tension_min
            ));
        }
        if self.qp_tolerance.is_nan() || self.qp_tolerance <= 0.0 {
            return bad(format!(
                "qp_tolerance must be positive, got {}",
                self.qp_tolerance
            ));
        }
        if self.qp_max_iterations == 0 {
            return bad("qp_max_iterations must be at least 1".into());
        }
        if let Some(w) = &self.tension_weights {
            if w.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return bad("tension_weights must be positive".into());
            }
        }
        Ok(())
    }

    fn weights(&self, n: usize) -> Result<Vec<f64>, ControlError> {
        match &self.tension_weights {
            None => Ok(vec![1.0; n]),
            Some(w) if w.len() == n => Ok(w.clone()),
            Some(w) => Err(ControlError::InvalidOptions(format!(
                "tension_weights has {} entries for {n} tendons",
                w.len()
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActiveBound {
    pub tendon: usize,
    pub side: BoundSide,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AllocationResult {
    pub tensions: Vec<f64>,
    pub active_set: Vec<ActiveBound>,
    /// Tension energy `Σ w_i τ_i²`.
    pub objective_value: f64,
    pub kkt_residual: f64,
    /// Multipliers of the moment-balance rows.
    pub moment_multipliers: [f64; 2],
}

/// Minimum-energy tensions achieving `q_des` within `[tension_min, tension_max]`.
pub fn allocate_tensions(
    params: &RobotParams,
    q_des: &Configuration,
    opts: &ControlOptions,
) -> Result<AllocationResult, ControlError> {
    opts.validate()?;
    let d = model::build_d(params)?;
    check_curvature(params, q_des)?;
    let n = params.n_tendons();
    let weights = opts.weights(n)?;
    let rhs = [
        params.bending_stiffness * q_des.kappa_x,
        params.bending_stiffness * q_des.kappa_y,
    ];
    let lower = vec![opts.tension_min; n];
    let upper = vec![opts.tension_max; n];
    let problem = BoxQp {
        weights: &weights,
        eq_matrix: &d,
        eq_rhs: &rhs,
        lower: &lower,
        upper: &upper,
    };
    let sol = problem.solve(opts.qp_tolerance, opts.qp_max_iterations)?;
    if sol.kkt_residual > opts.qp_tolerance * (1.0 + opts.tension_max) {
        return Err(ControlError::Numerical("KKT residual above tolerance"));
    }

    let bound_tol = 1e-12 * (1.0 + opts.tension_max);
    let active_set = sol
        .x
        .iter()
        .enumerate()
        .filter_map(|(tendon, &t)| {
            if t - opts.tension_min <= bound_tol {
                Some(ActiveBound {
                    tendon,
                    side: BoundSide::Lower,
                })
            } else if opts.tension_max - t <= bound_tol {
                Some(ActiveBound {
                    tendon,
                    side: BoundSide::Upper,
                })
            } else {
                None
            }
        })
        .collect();
    Ok(AllocationResult {
        tensions: sol.x,
        active_set,
        objective_value: sol.objective,
        kkt_residual: sol.kkt_residual,
        moment_multipliers: [sol.eq_multipliers[0], sol.eq_multipliers[1]],
    })
}

/// Displacements `y = G τ` and motor positions `ρ y` for a tension vector.
pub fn command_from_tensions(
    params: &RobotParams,
    tensions: &[f64],
) -> Result<TendonCommand, ModelError> {
    let displacements = model::displacements_from_tensions(params, tensions)?;
    let motor_positions = displacements
        .iter()
        .map(|y| y * params.transmission_ratio)
        .collect();
    Ok(TendonCommand {
        tensions: tensions.to_vec(),
        displacements,
        motor_positions,
    })
}

/// Motor setpoints for `q_des` under the redundant allocation.
pub fn inverse_kinematics(
    params: &RobotParams,
    q_des: &Configuration,
    opts: &ControlOptions,
) -> Result<TendonCommand, ControlError> {
    let alloc = allocate_tensions(params, q_des, opts)?;
    Ok(command_from_tensions(params, &alloc.tensions)?)
}

/// Conventional single-tendon drive: only the tendon best aligned with the
/// required moment pulls, every other tendon is left unloaded.
pub fn single_tendon_command(
    params: &RobotParams,
    q_des: &Configuration,
) -> Result<TendonCommand, ControlError> {
    let d = model::build_d(params)?;
    check_curvature(params, q_des)?;
    let moment = [
        params.bending_stiffness * q_des.kappa_x,
        params.bending_stiffness * q_des.kappa_y,
    ];
    let mut tensions = vec![0.0; params.n_tendons()];
    if moment[0] != 0.0 || moment[1] != 0.0 {
        // (tendon, moment component along its arm, arm length)
        let best = (0..params.n_tendons())
            .map(|i| {
                let arm = d[(0, i)].hypot(d[(1, i)]);
                (
                    i,
                    (d[(0, i)] * moment[0] + d[(1, i)] * moment[1]) / arm,
                    arm,
                )
            })
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .expect("at least one tendon");
        if best.1 > 0.0 {
            tensions[best.0] = best.1 / best.2;
        }
    }
    Ok(command_from_tensions(params, &tensions)?)
}

/// Desired configuration from a bending angle and bending-plane angle, degrees.
pub fn angle_to_config(
    bending_angle_deg: f64,
    bending_plane_deg: f64,
    params: &RobotParams,
) -> Result<Configuration, ControlError> {
    if !bending_angle_deg.is_finite() || bending_angle_deg.abs() > params.max_bending_angle_deg {
        return Err(ControlError::AngleOutOfRange {
            angle_deg: bending_angle_deg,
            limit_deg: params.max_bending_angle_deg,
        });
    }
    let kappa = bending_angle_deg.to_radians() / params.bending_length;
    let (s, c) = bending_plane_deg.to_radians().sin_cos();
    Ok(Configuration::new(kappa * c, kappa * s))
}

/// Desired configuration from per-axis (AP, RL) bending angles, degrees.
pub fn axis_angles_to_config(
    ap_deg: f64,
    rl_deg: f64,
    params: &RobotParams,
) -> Result<Configuration, ControlError> {
    let total = ap_deg.hypot(rl_deg);
    if !total.is_finite() || total > params.max_bending_angle_deg {
        return Err(ControlError::AngleOutOfRange {
            angle_deg: total,
            limit_deg: params.max_bending_angle_deg,
        });
    }
    Ok(Configuration::from_axis_angles_deg(
        ap_deg,
        rl_deg,
        params.bending_length,
    ))
}

fn check_curvature(params: &RobotParams, q: &Configuration) -> Result<(), ControlError> {
    let kappa = q.curvature();
    let kappa_max = params.kappa_max();
    if !q.is_finite() || kappa > kappa_max * (1.0 + 1e-12) {
        return Err(ControlError::CurvatureOutOfRange { kappa, kappa_max });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn opts(tension_min: f64) -> ControlOptions {
        ControlOptions {
            tension_min,
            ..Default::default()
        }
    }

    #[test]
    fn zero_curvature_gives_uniform_pretension() {
        let p = RobotParams::default();
        let a = allocate_tensions(&p, &Configuration::STRAIGHT, &opts(0.5)).unwrap();
        for t in &a.tensions {
            assert_relative_eq!(*t, 0.5, epsilon = 1e-14);
        }
        assert_eq!(a.active_set.len(), 4);
        assert_relative_eq!(a.objective_value, 1.0, epsilon = 1e-13);
    }

    #[test]
    fn single_axis_without_floor_pulls_one_tendon() {
        let p = RobotParams::default();
        let a = allocate_tensions(&p, &Configuration::new(0.0, 1.0), &opts(0.0)).unwrap();
        assert!(a.objective_value <= 1.0 + 1e-12);
        let q = model::statics_forward(&p, &a.tensions).unwrap();
        assert_relative_eq!(q.kappa_y, 1.0, max_relative = 1e-12);
        assert!(q.kappa_x.abs() < 1e-12);
    }

    #[test]
    fn moment_beyond_capacity_is_infeasible() {
        let p = RobotParams::default();
        let o = opts(0.5);
        // n·τ_max·d / K_b bounds the reachable curvature from above.
        let kappa = 4.0 * o.tension_max * 1e-3 / p.bending_stiffness * 1.01;
        let mut wide = p.clone();
        wide.max_bending_angle_deg = 1e4;
        let err = allocate_tensions(&wide, &Configuration::new(kappa, 0.0), &o).unwrap_err();
        assert!(matches!(err, ControlError::Infeasible { .. }));
    }

    #[test]
    fn curvature_beyond_device_limit_is_rejected() {
        let p = RobotParams::default();
        let q = Configuration::new(p.kappa_max() * 1.1, 0.0);
        assert!(matches!(
            allocate_tensions(&p, &q, &opts(0.5)),
            Err(ControlError::CurvatureOutOfRange { .. })
        ));
    }

    #[test]
    fn inverse_kinematics_zero_is_zero() {
        let p = RobotParams::default();
        let cmd = inverse_kinematics(&p, &Configuration::STRAIGHT, &opts(0.0)).unwrap();
        assert!(cmd
            .tensions
            .iter()
            .chain(&cmd.displacements)
            .chain(&cmd.motor_positions)
            .all(|v| *v == 0.0));
    }

    #[test]
    fn pretension_displaces_tendons_without_bending() {
        let p = RobotParams::default();
        let cmd = inverse_kinematics(&p, &Configuration::STRAIGHT, &opts(0.5)).unwrap();
        // Uniform tension in the symmetric layout cancels the bending term: y = l_t/k_t·0.5.
        for y in &cmd.displacements {
            assert_relative_eq!(*y, 0.9 / 100.0 * 0.5, max_relative = 1e-12);
        }
        for (m, y) in cmd.motor_positions.iter().zip(&cmd.displacements) {
            assert_relative_eq!(*m, 3.0 * y);
        }
        let q = model::forward_kinematics(&p, &cmd.displacements).unwrap();
        assert!(q.curvature() < 1e-12);
    }

    #[test]
    fn inverse_then_forward_is_identity() {
        let p = RobotParams::default();
        let q_des = Configuration::new(0.0, 1.0);
        let cmd = inverse_kinematics(&p, &q_des, &opts(0.5)).unwrap();
        let q = model::forward_kinematics(&p, &cmd.displacements).unwrap();
        assert_relative_eq!(q.kappa_y, 1.0, max_relative = 1e-9);
        assert!(q.kappa_x.abs() < 1e-9);
    }

    #[test]
    fn angle_conversion_examples() {
        let p = RobotParams::default();
        assert_eq!(
            angle_to_config(0.0, 0.0, &p).unwrap(),
            Configuration::new(0.0, 0.0)
        );
        let q = angle_to_config(90.0, 0.0, &p).unwrap();
        assert_relative_eq!(q.kappa_x, 31.415_926_535_897_93, max_relative = 1e-12);
        assert!(q.kappa_y.abs() < 1e-12);
        let q = angle_to_config(45.0, 90.0, &p).unwrap();
        assert!(q.kappa_x.abs() < 1e-12);
        assert_relative_eq!(q.kappa_y, 15.707_963_267_948_966, max_relative = 1e-12);
        assert!(matches!(
            angle_to_config(181.0, 0.0, &p),
            Err(ControlError::AngleOutOfRange { .. })
        ));
    }

    #[test]
    fn weights_change_the_split() {
        let p = RobotParams::default();
        let o = ControlOptions {
            tension_min: 0.0,
            tension_weights: Some(vec![1.0, 1.0, 1.0, 4.0]),
            ..Default::default()
        };
        let a = allocate_tensions(&p, &Configuration::new(1.0, 1.0), &o).unwrap();
        let q = model::statics_forward(&p, &a.tensions).unwrap();
        assert_relative_eq!(q.kappa_x, 1.0, max_relative = 1e-10);
        assert_relative_eq!(q.kappa_y, 1.0, max_relative = 1e-10);
        let bad = ControlOptions {
            tension_weights: Some(vec![1.0; 3]),
            ..Default::default()
        };
        assert!(matches!(
            allocate_tensions(&p, &Configuration::STRAIGHT, &bad),
            Err(ControlError::InvalidOptions(_))
        ));
    }

    #[test]
    fn single_tendon_baseline_uses_one_tendon() {
        let p = RobotParams::default();
        let cmd = single_tendon_command(&p, &Configuration::new(-2.0, 0.0)).unwrap();
        let loaded: Vec<usize> = (0..4).filter(|&i| cmd.tensions[i] > 0.0).collect();
        assert_eq!(loaded, vec![1]);
        let q = model::statics_forward(&p, &cmd.tensions).unwrap();
        assert_relative_eq!(q.kappa_x, -2.0, max_relative = 1e-12);
    }

    #[test]
    fn invalid_options_are_rejected() {
        let bad = ControlOptions {
            tension_min: 2.0,
            tension_max: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = ControlOptions {
            qp_tolerance: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
