//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use catheter_core::model::RobotParams;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

/// Brute-force solution of `min Σ w_i x_i²` s.t. `A x = b`, `lo ≤ x ≤ hi`.
///
/// Every variable is assigned to its lower bound, its upper bound, or free
/// (3ⁿ cases). Free variables take the weighted minimum-norm solution of the
/// reduced equality. The best feasible candidate wins; since the problem is
/// strictly convex the optimum appears among the candidates.
pub fn enumerate_box_qp(
    w: &[f64],
    a: &DMatrix<f64>,
    b: &[f64],
    lo: &[f64],
    hi: &[f64],
) -> Option<(Vec<f64>, f64)> {
    let n = w.len();
    let b = DVector::from_column_slice(b);
    let tol = 1e-9 * (1.0 + b.amax() + hi.iter().fold(0.0_f64, |m, v| m.max(v.abs())));
    let mut best: Option<(Vec<f64>, f64)> = None;
    for code in 0..3usize.pow(n as u32) {
        let mut x = vec![0.0; n];
        let mut free = Vec::new();
        let mut c = code;
        for i in 0..n {
            match c % 3 {
                0 => x[i] = lo[i],
                1 => x[i] = hi[i],
                _ => free.push(i),
            }
            c /= 3;
        }
        let fixed = DVector::from_column_slice(&x);
        let r = &b - a * &fixed;
        if !free.is_empty() {
            let af = a.select_columns(&free);
            let winv = DMatrix::from_diagonal(&DVector::from_iterator(
                free.len(),
                free.iter().map(|&i| 1.0 / w[i]),
            ));
            let m = &af * &winv * af.transpose();
            let y = match m.clone().pseudo_inverse(1e-12 * (1.0 + m.amax())) {
                Ok(p) => p * &r,
                Err(_) => continue,
            };
            let xf = &winv * af.transpose() * y;
            for (k, &i) in free.iter().enumerate() {
                x[i] = xf[k];
            }
        }
        let xv = DVector::from_column_slice(&x);
        if (a * &xv - &b).amax() > tol {
            continue;
        }
        if (0..n).any(|i| x[i] < lo[i] - tol || x[i] > hi[i] + tol) {
            continue;
        }
        let obj: f64 = (0..n).map(|i| w[i] * x[i] * x[i]).sum();
        if best.as_ref().is_none_or(|(_, o)| obj < *o) {
            best = Some((x, obj));
        }
    }
    best
}

/// Play-operator response computed from its definition: the output is the
/// point nearest the previous output within `[x − w/2, x + w/2]`.
pub fn play_reference(inputs: &[f64], width: f64) -> Vec<f64> {
    let mut y = 0.0;
    inputs
        .iter()
        .map(|&x| {
            let lo = x - width / 2.0;
            let hi = x + width / 2.0;
            if y < lo {
                y = lo;
            } else if y > hi {
                y = hi;
            }
            y
        })
        .collect()
}

/// Mean and population standard deviation of absolute values, two-pass.
pub fn mae_std(errors: &[f64]) -> (f64, f64) {
    let n = errors.len() as f64;
    let abs: Vec<f64> = errors.iter().map(|e| e.abs()).collect();
    let mean = abs.iter().sum::<f64>() / n;
    let var = abs.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Random well-conditioned parameter sets with 3 to 6 tendons spread around
/// the axis at 0.5–2 mm.
pub fn params_strategy() -> impl Strategy<Value = RobotParams> {
    (3usize..=6)
        .prop_flat_map(|n| {
            (
                Just(n),
                proptest::collection::vec((-0.3f64..0.3, 0.5e-3f64..2e-3), n),
                0.2e-3f64..5e-3,
                0.02f64..0.1,
                proptest::collection::vec(0.3f64..1.5, n),
                proptest::collection::vec(20.0f64..1e4, n),
                1.0f64..10.0,
            )
        })
        .prop_map(|(n, polar, kb, l0, lt, kt, rho)| {
            let tendon_xy = polar
                .iter()
                .enumerate()
                .map(|(i, (jitter, r))| {
                    let a = std::f64::consts::TAU * (i as f64 + jitter) / n as f64;
                    [r * a.cos(), r * a.sin()]
                })
                .collect();
            RobotParams {
                bending_stiffness: kb,
                tendon_xy,
                bending_length: l0,
                tendon_lengths: lt,
                tendon_stiffnesses: kt,
                transmission_ratio: rho,
                max_bending_angle_deg: 180.0,
            }
        })
}

/// `K⁻¹ D τ` written out per tendon, without matrices.
pub fn curvature_from_tensions(p: &RobotParams, tau: &[f64]) -> [f64; 2] {
    let mut m = [0.0, 0.0];
    for (xy, t) in p.tendon_xy.iter().zip(tau) {
        m[0] += -xy[1] * t;
        m[1] += xy[0] * t;
    }
    [m[0] / p.bending_stiffness, m[1] / p.bending_stiffness]
}

/// Longest run of samples with `|meas| < meas_tol` while `|des| > des_min`.
pub fn longest_plateau(des: &[f64], meas: &[f64], meas_tol: f64, des_min: f64) -> usize {
    let mut best = 0;
    let mut run = 0;
    for (d, m) in des.iter().zip(meas) {
        if m.abs() < meas_tol && d.abs() > des_min {
            run += 1;
            best = best.max(run);
        } else {
            run = 0;
        }
    }
    best
}
