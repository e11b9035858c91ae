//! Acceptance criteria, one PASS/FAIL line each. Runs without the libtest
//! harness so the lines are always printed.

mod common;

use std::time::Instant;

use catheter_core::calibration::{self, CalibrationSettings};
use catheter_core::cli::run_cli;
use catheter_core::compensation::CompensatorSettings;
use catheter_core::config::Config;
use catheter_core::control::{self, ControlOptions};
use catheter_core::harness::{self, ControlMode, ExperimentSpec};
use catheter_core::model::{self, RobotParams};
use catheter_core::plant::{PlantHandle, PlantSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn compensation_efficacy() -> Outcome {
    let spec = Config::default().experiment_spec();
    let start = Instant::now();
    let cmp = harness::compare_compensation(&spec).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed().as_secs_f64();
    let angle = cmp.percent_reduction_angle.unwrap_or(f64::NAN);
    let pos = cmp.percent_reduction_position.unwrap_or(f64::NAN);
    check(
        angle >= 40.0 && pos >= 25.0 && elapsed < 10.0,
        format!(
            "angle reduction {angle:.1}% (>= 40), position reduction {pos:.1}% (>= 25), {elapsed:.2} s (< 10); \
             off {:.3} mm / {:.3} deg, on {:.3} mm / {:.3} deg",
            cmp.uncompensated.pooled.position.mae,
            cmp.uncompensated.pooled.angle.mae,
            cmp.compensated.pooled.position.mae,
            cmp.compensated.pooled.angle.mae
        ),
    )
}

fn noise_free_cancellation() -> Outcome {
    let mut spec = Config::default().experiment_spec();
    spec.plant.sensor_noise_angle_deg = 0.0;
    spec.plant.sensor_noise_position_m = 0.0;
    let report = harness::run_experiment(&spec).map_err(|e| e.to_string())?;
    let skip = spec.trajectory.period_s / 4.0;
    let m = harness::trace_metrics(&report.rows, skip).angle;
    check(
        m.mae < 0.1,
        format!(
            "compensated angle MAE after t = {skip} s: {:.2e} deg (< 0.1), max {:.2e} deg",
            m.mae, m.max_abs
        ),
    )
}

fn random_params(rng: &mut ChaCha8Rng, n: usize) -> RobotParams {
    let tendon_xy = (0..n)
        .map(|i| {
            let a = std::f64::consts::TAU * (i as f64 + rng.random_range(-0.3..0.3)) / n as f64;
            let r = rng.random_range(0.5e-3..2e-3);
            [r * a.cos(), r * a.sin()]
        })
        .collect();
    RobotParams {
        bending_stiffness: rng.random_range(0.2e-3..5e-3),
        tendon_xy,
        bending_length: rng.random_range(0.02..0.1),
        tendon_lengths: (0..n).map(|_| rng.random_range(0.3..1.5)).collect(),
        tendon_stiffnesses: (0..n).map(|_| rng.random_range(20.0..1e4)).collect(),
        transmission_ratio: rng.random_range(1.0..10.0),
        max_bending_angle_deg: 180.0,
    }
}

fn qp_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let opts = ControlOptions::default();
    let (mut solved, mut attempts, mut worst_obj, mut worst_kkt) = (0, 0, 0.0_f64, 0.0_f64);
    let mut failures = Vec::new();
    while solved < 200 && attempts < 10_000 {
        attempts += 1;
        let p = random_params(&mut rng, 4);
        let angle = rng.random_range(0.0..0.9 * p.max_bending_angle_deg);
        let q = control::angle_to_config(angle, rng.random_range(-180.0..180.0), &p).unwrap();
        let d = model::build_d(&p).unwrap();
        let rhs = [
            p.bending_stiffness * q.kappa_x,
            p.bending_stiffness * q.kappa_y,
        ];
        let Some((_, best)) = common::enumerate_box_qp(
            &[1.0; 4],
            &d,
            &rhs,
            &[opts.tension_min; 4],
            &[opts.tension_max; 4],
        ) else {
            continue;
        };
        solved += 1;
        match control::allocate_tensions(&p, &q, &opts) {
            Ok(sol) => {
                let rel = (sol.objective_value - best).abs() / best.abs().max(1e-300);
                worst_obj = worst_obj.max(rel);
                worst_kkt = worst_kkt.max(sol.kkt_residual);
                if rel > 1e-6
                    || sol.kkt_residual >= 1e-8
                    || sol.tensions.iter().any(|t| *t < opts.tension_min - 1e-12)
                {
                    failures.push(format!(
                        "#{solved}: rel {rel:.1e}, kkt {:.1e}",
                        sol.kkt_residual
                    ));
                }
            }
            Err(e) => failures.push(format!("#{solved}: {e}")),
        }
    }
    check(
        solved == 200 && failures.is_empty(),
        format!(
            "{solved} feasible instances, worst objective error {worst_obj:.1e} (<= 1e-6), worst KKT {worst_kkt:.1e} (< 1e-8), {} failures {:?}",
            failures.len(),
            failures.iter().take(3).collect::<Vec<_>>()
        ),
    )
}

fn kinematics_consistency() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut worst, mut spd_fail) = (0.0_f64, 0);
    for _ in 0..1000 {
        let n = rng.random_range(3..=6);
        let p = random_params(&mut rng, n);
        let tau: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..20.0)).collect();
        let g = model::compliance_matrix(&p).map_err(|e| e.to_string())?;
        if g != g.transpose() || g.clone().cholesky().is_none() {
            spd_fail += 1;
        }
        let y = model::displacements_from_tensions(&p, &tau).map_err(|e| e.to_string())?;
        let q = model::forward_kinematics(&p, &y).map_err(|e| e.to_string())?;
        let want = common::curvature_from_tensions(&p, &tau);
        let scale = want[0].hypot(want[1]).max(1e-300);
        worst = worst.max((q.kappa_x - want[0]).hypot(q.kappa_y - want[1]) / scale);
    }
    check(
        worst < 1e-9 && spd_fail == 0,
        format!("1000 samples, worst relative error {worst:.1e} (< 1e-9), {spd_fail} non-SPD compliance matrices"),
    )
}

fn calibration_recovery() -> Outcome {
    let truth = RobotParams::default();
    let settings = CalibrationSettings::default();
    let opts = ControlOptions::default();
    let mut lines = Vec::new();
    let mut ok = true;
    for kb_factor in [0.7, 1.0, 1.3] {
        for rot_deg in [-15.0, 0.0, 15.0] {
            let initial = truth
                .with_bending_stiffness(kb_factor * truth.bending_stiffness)
                .with_layout_rotated(f64::to_radians(rot_deg));
            let mut plant = PlantHandle::new(PlantSpec::ideal(truth.clone())).unwrap();
            match calibration::calibrate(&mut plant, &initial, &settings, &opts) {
                Ok(log) => {
                    let est = &log.last().unwrap().params_estimate;
                    let kb_err = (est.bending_stiffness - truth.bending_stiffness).abs()
                        / truth.bending_stiffness;
                    let rot_err = model::layout_rotation_between(&truth, est)
                        .to_degrees()
                        .abs();
                    let pass = kb_err < 0.02 && rot_err < 1.0 && log.len() <= 20;
                    ok &= pass;
                    if !pass || (kb_factor != 1.0 && rot_deg != 0.0) {
                        lines.push(format!(
                            "Kb x{kb_factor}, {rot_deg} deg: {} it, Kb err {:.1e}, rot err {:.1e} deg",
                            log.len(),
                            kb_err,
                            rot_err
                        ));
                    }
                }
                Err(e) => {
                    ok = false;
                    lines.push(format!("Kb x{kb_factor}, {rot_deg} deg: {e}"));
                }
            }
        }
    }
    // Fixed point.
    let mut plant = PlantHandle::new(PlantSpec::ideal(truth.clone())).unwrap();
    let probe = calibration::run_probe(&mut plant, &truth, &settings.probe, &opts)
        .map_err(|e| e.to_string())?;
    let out =
        calibration::update_parameters(&truth, &probe, &settings).map_err(|e| e.to_string())?;
    let fp_kb = (out.bending_stiffness - truth.bending_stiffness).abs() / truth.bending_stiffness;
    let fp_rot = model::layout_rotation_between(&truth, &out).abs();
    let fp_ok = fp_kb < 1e-9 && fp_rot < 1e-9;
    lines.push(format!(
        "fixed point: Kb {fp_kb:.1e}, rot {fp_rot:.1e} rad (< 1e-9)"
    ));
    check(ok && fp_ok, lines.join("; "))
}

fn dead_zone_removal() -> Outcome {
    // Inextensible tendons make 0.5 mm of slack visible as roughly 10 degrees
    // of dead travel; with the default elastic tendons it is a fraction of a degree.
    let plateau = |params: RobotParams, mode: ControlMode| -> Result<usize, String> {
        let plant = PlantSpec {
            slack_per_tendon: vec![0.5e-3; params.n_tendons()],
            ..PlantSpec::ideal(params.clone())
        };
        let spec = ExperimentSpec {
            trials: 1,
            compensator: CompensatorSettings {
                enabled: false,
                ..Default::default()
            },
            control_mode: mode,
            ..ExperimentSpec::new(plant, params)
        };
        let rows = harness::run_trial(&spec, 0).map_err(|e| e.to_string())?;
        let des: Vec<f64> = rows.iter().map(|r| r.theta_des_deg).collect();
        let meas: Vec<f64> = rows.iter().map(|r| r.theta_meas_deg).collect();
        Ok(common::longest_plateau(&des, &meas, 0.2, 2.0))
    };
    let steel = RobotParams::symmetric(4, 1e-3, 1e-3, 0.05, 0.9, 1e4, 3.0);
    let redundant = plateau(steel.clone(), ControlMode::Redundant)?;
    let naive = plateau(steel, ControlMode::SingleTendon)?;
    let default_naive = plateau(RobotParams::default(), ControlMode::SingleTendon)?;
    check(
        redundant < 5 && naive >= 5,
        format!(
            "inextensible-tendon plant: pretensioned plateau {redundant} samples (< 5), single-tendon plateau {naive} samples (>= 5); \
             default elastic plant single-tendon plateau {default_naive} samples"
        ),
    )
}

fn metrics_oracle() -> Outcome {
    let s =
        harness::compute_metrics(&[1.0, -3.0, 2.0], &[0.0, 0.0, 0.0]).map_err(|e| e.to_string())?;
    let want_std = (2.0_f64 / 3.0).sqrt();
    let z = harness::compute_metrics(&[4.0, 5.0], &[4.0, 5.0]).map_err(|e| e.to_string())?;
    let c =
        harness::compute_metrics(&[3.0, 4.0, 5.0], &[1.0, 2.0, 3.0]).map_err(|e| e.to_string())?;
    check(
        (s.mae - 2.0).abs() < 1e-12
            && (s.std - want_std).abs() < 1e-12
            && z.mae == 0.0
            && z.std == 0.0
            && (c.mae - 2.0).abs() < 1e-12
            && c.std.abs() < 1e-12,
        format!("[1,-3,2] -> MAE {}, StD {:.16}", s.mae, s.std),
    )
}

fn cli_determinism() -> Outcome {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = run_cli(
            [
                "catheter",
                "experiment",
                "--seed",
                "17",
                "--quiet",
                "--out",
                d.path().to_str().unwrap(),
            ],
            &mut out,
            &mut err,
        );
        if code != 0 {
            return Err(format!("exit {code}: {}", String::from_utf8_lossy(&err)));
        }
    }
    let mut total = 0;
    for f in ["traces_off.csv", "traces_on.csv", "summary.json"] {
        let a = std::fs::read(dirs[0].path().join(f)).map_err(|e| e.to_string())?;
        let b = std::fs::read(dirs[1].path().join(f)).map_err(|e| e.to_string())?;
        if a != b {
            return Err(format!("{f} differs between runs"));
        }
        total += a.len();
    }
    Ok(format!(
        "traces_off.csv, traces_on.csv, summary.json identical ({total} bytes)"
    ))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("hysteresis compensation efficacy", compensation_efficacy),
        ("noise-free exact cancellation", noise_free_cancellation),
        ("QP correctness", qp_correctness),
        ("kinematics consistency", kinematics_consistency),
        ("calibration recovery", calibration_recovery),
        ("dead-zone removal", dead_zone_removal),
        ("metrics oracle", metrics_oracle),
        ("determinism", cli_determinism),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        match f() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
