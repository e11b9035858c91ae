//! Constant-curvature statics and kinematics of the tendon-driven bending section.
//!
//! The bending section is described in curvature space, `q = [κx, κy]`, where
//! the moment balance `K q = D τ` and the strain balance `y = G τ` are linear.
//! Everything in this module is SI: meters, newtons, radians. Degrees only appear
//! in [`TipPose`], which is a reporting type.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative singular-value threshold below which the moment-arm matrix is rank deficient.
const RANK_TOLERANCE: f64 = 1e-12;

/// Curvature magnitude below which the tip pose uses its series expansion.
const STRAIGHT_CURVATURE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid robot parameters: {0}")]
    InvalidParams(String),
    #[error("tendon layout is degenerate (singular values {sigma_min:e} / {sigma_max:e})")]
    DegenerateLayout { sigma_min: f64, sigma_max: f64 },
    #[error("tendon {index} has negative tension {value}")]
    InvalidTension { index: usize, value: f64 },
    #[error("compliance matrix is singular")]
    SingularCompliance,
    #[error("expected {expected} tendon values, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
}

/// Physical and model constants of the catheter.
///
/// `bending_stiffness` is the diagonal of `K`, `tendon_xy` gives `(d_x, d_y)` for
/// every tendon, and `tendon_stiffnesses` are length-normalized (units of N).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobotParams {
    pub bending_stiffness: f64,
    pub tendon_xy: Vec<[f64; 2]>,
    pub bending_length: f64,
    pub tendon_lengths: Vec<f64>,
    pub tendon_stiffnesses: Vec<f64>,
    pub transmission_ratio: f64,
    /// Device bending-angle limit; bounds the admissible curvature magnitude.
    pub max_bending_angle_deg: f64,
}

impl Default for RobotParams {
    /// Four tendons at 1 mm on the axes, `K_b = 1e-3 N·m²`, `l_0 = 50 mm`,
    /// `l_t = 900 mm`, `k_t = 100 N`, 3:1 spool.
    fn default() -> Self {
        Self::symmetric(4, 1e-3, 1e-3, 0.05, 0.9, 100.0, 3.0)
    }
}

impl RobotParams {
    /// Uniform layout of `n` tendons on a circle of `radius`, tendon 1 on +x.
    pub fn symmetric(
        n: usize,
        radius: f64,
        bending_stiffness: f64,
        bending_length: f64,
        tendon_length: f64,
        tendon_stiffness: f64,
        transmission_ratio: f64,
    ) -> Self {
        let tendon_xy = (0..n)
            .map(|i| {
                let a = std::f64::consts::TAU * i as f64 / n as f64;
                [snap(radius * a.cos()), snap(radius * a.sin())]
            })
            .collect();
        Self {
            bending_stiffness,
            tendon_xy,
            bending_length,
            tendon_lengths: vec![tendon_length; n],
            tendon_stiffnesses: vec![tendon_stiffness; n],
            transmission_ratio,
            max_bending_angle_deg: 180.0,
        }
    }

    pub fn n_tendons(&self) -> usize {
        self.tendon_xy.len()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::InvalidParams(msg));
        let n = self.n_tendons();
        if n == 0 {
            return bad("at least one tendon is required".into());
        }
        if self.tendon_lengths.len() != n || self.tendon_stiffnesses.len() != n {
            return bad(format!(
                "tendon_xy has {n} entries but tendon_lengths has {} and tendon_stiffnesses has {}",
                self.tendon_lengths.len(),
                self.tendon_stiffnesses.len()
            ));
        }
        if !(self.bending_stiffness > 0.0 && self.bending_stiffness.is_finite()) {
            return bad(format!(
                "bending_stiffness must be positive, got {}",
                self.bending_stiffness
            ));
        }
        if !(self.bending_length > 0.0 && self.bending_length.is_finite()) {
            return bad(format!(
                "bending_length must be positive, got {}",
                self.bending_length
            ));
        }
        if !(self.transmission_ratio > 0.0 && self.transmission_ratio.is_finite()) {
            return bad(format!(
                "transmission_ratio must be positive, got {}",
                self.transmission_ratio
            ));
        }
        if !(self.max_bending_angle_deg > 0.0 && self.max_bending_angle_deg.is_finite()) {
            return bad(format!(
                "max_bending_angle_deg must be positive, got {}",
                self.max_bending_angle_deg
            ));
        }
        for (i, l) in self.tendon_lengths.iter().enumerate() {
            if !(*l > 0.0 && l.is_finite()) {
                return bad(format!("tendon_lengths[{i}] must be positive, got {l}"));
            }
        }
        for (i, k) in self.tendon_stiffnesses.iter().enumerate() {
            if !(*k > 0.0 && !k.is_nan()) {
                return bad(format!("tendon_stiffnesses[{i}] must be positive, got {k}"));
            }
        }
        for (i, p) in self.tendon_xy.iter().enumerate() {
            if !(p[0].is_finite() && p[1].is_finite()) {
                return bad(format!("tendon_xy[{i}] is not finite"));
            }
        }
        Ok(())
    }

    /// Largest admissible curvature magnitude, 1/m.
    pub fn kappa_max(&self) -> f64 {
        self.max_bending_angle_deg.to_radians() / self.bending_length
    }

    /// Same parameters with the tendon layout rotated about the central axis.
    pub fn with_layout_rotated(&self, angle_rad: f64) -> Self {
        let (s, c) = angle_rad.sin_cos();
        let mut out = self.clone();
        for p in &mut out.tendon_xy {
            *p = [c * p[0] - s * p[1], s * p[0] + c * p[1]];
        }
        out
    }

    pub fn with_bending_stiffness(&self, bending_stiffness: f64) -> Self {
        Self {
            bending_stiffness,
            ..self.clone()
        }
    }

    fn check_len(&self, values: &[f64]) -> Result<(), ModelError> {
        if values.len() != self.n_tendons() {
            return Err(ModelError::DimensionMismatch {
                expected: self.n_tendons(),
                found: values.len(),
            });
        }
        Ok(())
    }
}

/// Angle (rad) that rotates layout `from` onto layout `to`, in the least-squares sense.
pub fn layout_rotation_between(from: &RobotParams, to: &RobotParams) -> f64 {
    let (mut cross, mut dot) = (0.0, 0.0);
    for (a, b) in from.tendon_xy.iter().zip(&to.tendon_xy) {
        cross += a[0] * b[1] - a[1] * b[0];
        dot += a[0] * b[0] + a[1] * b[1];
    }
    cross.atan2(dot)
}

fn snap(v: f64) -> f64 {
    if v.abs() < 1e-15 {
        0.0
    } else {
        v
    }
}

/// Curvature-space configuration of the bending section, 1/m.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    /// Anterior/posterior curvature.
    pub kappa_x: f64,
    /// Right/left curvature.
    pub kappa_y: f64,
}

impl Configuration {
    pub const STRAIGHT: Configuration = Configuration {
        kappa_x: 0.0,
        kappa_y: 0.0,
    };

    pub fn new(kappa_x: f64, kappa_y: f64) -> Self {
        Self { kappa_x, kappa_y }
    }

    /// Build a configuration from per-axis bending angles (AP, RL) in degrees.
    pub fn from_axis_angles_deg(ap_deg: f64, rl_deg: f64, bending_length: f64) -> Self {
        Self::new(
            ap_deg.to_radians() / bending_length,
            rl_deg.to_radians() / bending_length,
        )
    }

    /// Per-axis bending angles (AP, RL) in degrees.
    pub fn axis_angles_deg(&self, bending_length: f64) -> [f64; 2] {
        [
            (self.kappa_x * bending_length).to_degrees(),
            (self.kappa_y * bending_length).to_degrees(),
        ]
    }

    pub fn curvature(&self) -> f64 {
        self.kappa_x.hypot(self.kappa_y)
    }

    /// Total bending angle θ = l_0·|κ| in radians.
    pub fn bending_angle(&self, bending_length: f64) -> f64 {
        bending_length * self.curvature()
    }

    pub fn is_finite(&self) -> bool {
        self.kappa_x.is_finite() && self.kappa_y.is_finite()
    }

    pub fn as_vector(&self) -> DVector<f64> {
        DVector::from_row_slice(&[self.kappa_x, self.kappa_y])
    }

    pub fn distance(&self, other: &Configuration) -> f64 {
        (self.kappa_x - other.kappa_x).hypot(self.kappa_y - other.kappa_y)
    }
}

/// Per-tendon command: tensions τ (N), tendon displacements y (m), and motor
/// positions `ρ·y` (m).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TendonCommand {
    pub tensions: Vec<f64>,
    pub displacements: Vec<f64>,
    pub motor_positions: Vec<f64>,
}

/// Tip pose of the bending section. Position in meters, angles in degrees.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TipPose {
    pub position: [f64; 3],
    pub bending_angle_deg: f64,
    pub bending_plane_deg: f64,
}

impl TipPose {
    pub fn distance(&self, other: &TipPose) -> f64 {
        let [a, b, c] = self.position;
        let [x, y, z] = other.position;
        ((a - x).powi(2) + (b - y).powi(2) + (c - z).powi(2)).sqrt()
    }
}

/// 2×n moment-arm matrix without the rank check. Rows are `[-d_y; d_x]`.
pub(crate) fn moment_arms(params: &RobotParams) -> DMatrix<f64> {
    let n = params.n_tendons();
    DMatrix::from_fn(2, n, |r, c| {
        let [dx, dy] = params.tendon_xy[c];
        if r == 0 {
            -dy
        } else {
            dx
        }
    })
}

/// Moment-arm matrix `D` of the moment balance `K q = D τ`.
pub fn build_d(params: &RobotParams) -> Result<DMatrix<f64>, ModelError> {
    params.validate()?;
    let d = moment_arms(params);
    let sv = d.singular_values();
    let sigma_max = sv.max();
    let sigma_min = if sv.len() < 2 { 0.0 } else { sv.min() };
    if sigma_max.is_nan() || sigma_max <= 0.0 || sigma_min <= RANK_TOLERANCE * sigma_max {
        return Err(ModelError::DegenerateLayout {
            sigma_min,
            sigma_max,
        });
    }
    Ok(d)
}

/// Solve the moment balance for the configuration produced by `tensions`.
pub fn statics_forward(
    params: &RobotParams,
    tensions: &[f64],
) -> Result<Configuration, ModelError> {
    params.validate()?;
    params.check_len(tensions)?;
    if let Some((index, &value)) = tensions
        .iter()
        .enumerate()
        .find(|(_, t)| t.is_nan() || **t < 0.0)
    {
        return Err(ModelError::InvalidTension { index, value });
    }
    Ok(moment_to_config(params, &moment_arms(params), tensions))
}

fn moment_to_config(params: &RobotParams, d: &DMatrix<f64>, tensions: &[f64]) -> Configuration {
    let m = d * DVector::from_column_slice(tensions);
    Configuration::new(
        m[0] / params.bending_stiffness,
        m[1] / params.bending_stiffness,
    )
}

/// Compliance matrix `G = Dᵀ L_0 K⁻¹ D + L_t K_t⁻¹`.
pub fn compliance_matrix(params: &RobotParams) -> Result<DMatrix<f64>, ModelError> {
    params.validate()?;
    let d = moment_arms(params);
    let mut g = d.transpose() * &d * (params.bending_length / params.bending_stiffness);
    for i in 0..params.n_tendons() {
        g[(i, i)] += params.tendon_lengths[i] / params.tendon_stiffnesses[i];
    }
    Ok(g)
}

/// Tendon displacements `y = G τ`.
pub fn displacements_from_tensions(
    params: &RobotParams,
    tensions: &[f64],
) -> Result<Vec<f64>, ModelError> {
    params.check_len(tensions)?;
    let g = compliance_matrix(params)?;
    Ok((g * DVector::from_column_slice(tensions))
        .as_slice()
        .to_vec())
}

/// Forward kinematics `q = K⁻¹ D G⁻¹ y`.
pub fn forward_kinematics(
    params: &RobotParams,
    displacements: &[f64],
) -> Result<Configuration, ModelError> {
    params.check_len(displacements)?;
    let g = compliance_matrix(params)?;
    let chol = g.cholesky().ok_or(ModelError::SingularCompliance)?;
    let tensions = chol.solve(&DVector::from_column_slice(displacements));
    Ok(moment_to_config(
        params,
        &moment_arms(params),
        tensions.as_slice(),
    ))
}

/// Point on the backbone at arc length `s` from the base.
pub fn backbone_point(q: &Configuration, s: f64) -> [f64; 3] {
    let kappa = q.curvature();
    if kappa < STRAIGHT_CURVATURE {
        // r(1 - cos κs) ≈ κs²/2 - κ³s⁴/24, r sin κs ≈ s - κ²s³/6
        let k2 = kappa * kappa;
        let radial = s * s / 2.0 - k2 * s.powi(4) / 24.0;
        return [
            q.kappa_x * radial,
            q.kappa_y * radial,
            s - k2 * s.powi(3) / 6.0,
        ];
    }
    let theta = kappa * s;
    let radial = 2.0 * (0.5 * theta).sin().powi(2) / kappa;
    [
        radial * q.kappa_x / kappa,
        radial * q.kappa_y / kappa,
        theta.sin() / kappa,
    ]
}

/// Tip pose of the circular arc of length `l_0` with curvature `q`.
pub fn config_to_tip_pose(params: &RobotParams, q: &Configuration) -> TipPose {
    let plane = q.kappa_y.atan2(q.kappa_x).to_degrees();
    TipPose {
        position: backbone_point(q, params.bending_length),
        bending_angle_deg: q.bending_angle(params.bending_length).to_degrees(),
        bending_plane_deg: if plane <= -180.0 {
            plane + 360.0
        } else {
            plane
        },
    }
}
