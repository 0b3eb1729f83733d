//! Batch commands behind the `ctlio` binary. Each writes plain-text outputs
//! into an output directory.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::estimator::{self, EstimatorConfig, OdometryRun};
use crate::geometry::{RigidTransform, Rotation, Vec3};
use crate::imu::{self, GravityVector, ImuBias, ImuMeasurement};
use crate::io;
use crate::lidar::{self, FeatureKind};
use crate::loopclosure::{self, Correction, KeyPose};
use crate::sim::{self, Dataset, SimConfig};
use crate::trajectory::{self, Trajectory};

pub const TRAJECTORY_FILE: &str = "trajectory.traj";
pub const TRAJECTORY_TUM: &str = "trajectory.tum";
pub const REPORT_FILE: &str = "report.csv";
pub const KEYSCANS_FILE: &str = "keyscans.csv";
pub const BIASES_FILE: &str = "biases.csv";
pub const MAP_FILE: &str = "map.ply";
pub const CORRECTED_FILE: &str = "corrected.traj";
pub const CORRECTED_TUM: &str = "corrected.tum";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const STAGE_ONE_TRACE: &str = "stage1_trace.csv";
pub const STAGE_TWO_TRACE: &str = "stage2_trace.csv";
pub const PLOT_ACCEL_FILE: &str = "plot_accel.csv";
pub const PLOT_GYRO_FILE: &str = "plot_gyro.csv";
pub const PLOT_HEADER: &str = "t,deriv_x,deriv_y,deriv_z,imu_x,imu_y,imu_z";

/// Export rate of TUM files, Hz.
pub const EXPORT_RATE: f64 = 100.0;
/// Timestamp association tolerance for evaluation, seconds.
pub const MATCH_TOLERANCE: f64 = 5e-3;

/// Poses at [`EXPORT_RATE`] over the evaluable range.
pub fn export_poses(traj: &Trajectory) -> Vec<(f64, RigidTransform)> {
    traj.sample_poses(EXPORT_RATE)
}

/// Loads `config` (if any), applies the seed override and writes the dataset.
pub fn cmd_simulate(config: Option<&Path>, out: &Path, seed: Option<u64>) -> Result<Dataset> {
    let mut cfg = match config {
        Some(p) => SimConfig::read(p)?,
        None => SimConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let world = cfg.world.load()?;
    sim::emit_dataset(&cfg, &world, out)
}

/// Inputs of an odometry run as stored in a dataset directory.
#[derive(Debug, Clone)]
pub struct DatasetInputs {
    pub manifest: SimConfig,
    pub imu: Vec<ImuMeasurement>,
    pub scans: Vec<lidar::Scan>,
}

pub fn load_dataset(dir: &Path) -> Result<DatasetInputs> {
    let manifest = sim::read_manifest(&dir.join(sim::MANIFEST_FILE))?;
    let imu = imu::read_imu_csv(&dir.join(sim::IMU_FILE))?;
    let index = lidar::read_scan_index(&dir.join(sim::SCAN_INDEX_FILE))?;
    if index.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "{}: dataset has no scans",
            dir.display()
        )));
    }
    let scans = index
        .iter()
        .enumerate()
        .map(|(i, e)| lidar::read_scan(dir, e, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(DatasetInputs {
        manifest,
        imu,
        scans,
    })
}

pub fn read_estimator_config(config: Option<&Path>) -> Result<EstimatorConfig> {
    match config {
        Some(p) => EstimatorConfig::read(p),
        None => Ok(EstimatorConfig::default()),
    }
}

/// Key-scan poses read from the final trajectory, which later windows may
/// have refined since the key-scan was selected.
pub fn keyposes(run: &OdometryRun) -> Result<Vec<KeyPose>> {
    run.keyscans
        .iter()
        .map(|k| {
            Ok(KeyPose {
                id: k.id,
                t: k.t,
                pose: run.trajectory.pose_at(k.t)?,
            })
        })
        .collect()
}

/// Key-scan features in the world frame; intensity 1 for edges, 0 for planar points.
pub fn map_points(run: &OdometryRun) -> Vec<(Vec3, f64)> {
    run.keyscans
        .iter()
        .flat_map(|k| k.global_points())
        .map(|(p, kind)| (p, if kind == FeatureKind::Edge { 1.0 } else { 0.0 }))
        .collect()
}

pub fn write_odometry(run: &OdometryRun, imu: &[ImuMeasurement], out: &Path) -> Result<()> {
    run.trajectory.write(&out.join(TRAJECTORY_FILE))?;
    trajectory::write_tum(&out.join(TRAJECTORY_TUM), &export_poses(&run.trajectory))?;
    io::write_string(
        &out.join(REPORT_FILE),
        &estimator::reports_to_csv(&run.reports),
    )?;
    loopclosure::write_keyposes(&out.join(KEYSCANS_FILE), &keyposes(run)?)?;
    io::write_string(
        &out.join(BIASES_FILE),
        &estimator::biases_to_csv(&run.biases),
    )?;
    lidar::write_ply(&out.join(MAP_FILE), &map_points(run))?;
    imu::write_imu_csv(&out.join(sim::IMU_FILE), imu)
}

/// Runs the estimator over a dataset directory. Extrinsics come from the manifest.
pub fn cmd_odometry(
    dataset: &Path,
    config: Option<&Path>,
    out: &Path,
    timing: bool,
) -> Result<OdometryRun> {
    let cfg = read_estimator_config(config)?;
    let inputs = load_dataset(dataset)?;
    let ext = inputs.manifest.extrinsics();
    let run = estimator::run(&cfg, ext, inputs.imu.clone(), &inputs.scans, timing)?;
    write_odometry(&run, &inputs.imu, out)?;
    Ok(run)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Alignment {
    FirstPose,
    None,
}

impl FromStr for Alignment {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "first-pose-align" => Ok(Alignment::FirstPose),
            "none" => Ok(Alignment::None),
            _ => Err(Error::InvalidArgument(format!(
                "unknown alignment `{s}` (expected first-pose-align or none)"
            ))),
        }
    }
}

impl std::fmt::Display for Alignment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Alignment::FirstPose => "first-pose-align",
            Alignment::None => "none",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseError {
    pub t: f64,
    /// metres
    pub translation: f64,
    /// radians
    pub rotation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationResult {
    pub trans_rmse: f64,
    pub rot_rmse: f64,
    pub errors: Vec<PoseError>,
    pub alignment: Alignment,
}

impl EvaluationResult {
    pub fn to_text(&self) -> String {
        let last = self.errors.last().map_or(0.0, |e| e.translation);
        format!(
            "alignment = {}\npairs = {}\ntrans_rmse_m = {}\nrot_rmse_rad = {}\nrot_rmse_deg = {}\nendpoint_trans_m = {}\n",
            self.alignment,
            self.errors.len(),
            self.trans_rmse,
            self.rot_rmse,
            self.rot_rmse.to_degrees(),
            last
        )
    }

    pub fn errors_csv(&self) -> String {
        let mut s = String::from("t,trans_err,rot_err\n");
        for e in &self.errors {
            let _ = writeln!(s, "{}", io::join(&[e.t, e.translation, e.rotation], ","));
        }
        s
    }
}

fn rmse(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v * v, n + 1));
    if n == 0 {
        0.0
    } else {
        (sum / n as f64).sqrt()
    }
}

/// `‖Log(R_aᵀ R_b)‖`, exactly zero for identical rotations.
pub fn rotation_error(a: &Rotation, b: &Rotation) -> f64 {
    if a == b {
        0.0
    } else {
        (a.inverse() * *b).log().norm()
    }
}

/// Pairs every estimate with the nearest ground-truth stamp within
/// [`MATCH_TOLERANCE`] and reports RMSE over the pairs.
pub fn evaluate(
    est: &[(f64, RigidTransform)],
    gt: &[(f64, RigidTransform)],
    alignment: Alignment,
) -> Result<EvaluationResult> {
    let mut pairs = Vec::new();
    for (t, pose) in est {
        let i = gt.partition_point(|(tg, _)| tg < t);
        let best = [i.checked_sub(1), Some(i)]
            .into_iter()
            .flatten()
            .filter(|&j| j < gt.len())
            .min_by(|&a, &b| (gt[a].0 - t).abs().total_cmp(&(gt[b].0 - t).abs()));
        if let Some(j) = best {
            if (gt[j].0 - t).abs() <= MATCH_TOLERANCE + 1e-12 {
                pairs.push((*t, *pose, gt[j].1));
            }
        }
    }
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("no overlapping timestamps".into()));
    }
    let align = match alignment {
        // Equal first poses need no alignment; composing would only round.
        Alignment::FirstPose if pairs[0].1 != pairs[0].2 => Some(pairs[0].2 * pairs[0].1.inverse()),
        _ => None,
    };
    let errors: Vec<PoseError> = pairs
        .iter()
        .map(|(t, e, g)| {
            let e = align.map_or(*e, |a| a * *e);
            PoseError {
                t: *t,
                translation: (e.translation - g.translation).norm(),
                rotation: rotation_error(&g.rotation, &e.rotation),
            }
        })
        .collect();
    Ok(EvaluationResult {
        trans_rmse: rmse(errors.iter().map(|e| e.translation)),
        rot_rmse: rmse(errors.iter().map(|e| e.rotation)),
        errors,
        alignment,
    })
}

/// Compares two TUM files; with `out`, also writes the summary and per-sample errors.
pub fn cmd_evaluate(
    est: &Path,
    gt: &Path,
    alignment: Alignment,
    out: Option<&Path>,
) -> Result<EvaluationResult> {
    let result = evaluate(
        &trajectory::read_tum(est)?,
        &trajectory::read_tum(gt)?,
        alignment,
    )?;
    if let Some(dir) = out {
        io::write_string(&dir.join("evaluation.txt"), &result.to_text())?;
        io::write_string(&dir.join("errors.csv"), &result.errors_csv())?;
    }
    Ok(result)
}

fn summary_text(
    c: &Correction,
    loops: usize,
    before: Option<&EvaluationResult>,
    after: Option<&EvaluationResult>,
) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "keyscans = {}", c.keyscans.len());
    let _ = writeln!(s, "loops = {loops}");
    for (name, r) in [("stage_one", &c.stage_one), ("stage_two", &c.stage_two)] {
        let _ = writeln!(s, "{name}_iterations = {}", r.iterations);
        let _ = writeln!(s, "{name}_initial_cost = {}", r.initial_cost);
        let _ = writeln!(s, "{name}_final_cost = {}", r.final_cost);
        let _ = writeln!(s, "{name}_termination = {}", r.termination);
    }
    if let (Some(b), Some(a)) = (before, after) {
        let end = |r: &EvaluationResult| r.errors.last().map_or(0.0, |e| e.translation);
        let _ = writeln!(s, "ape_trans_rmse_before = {}", b.trans_rmse);
        let _ = writeln!(s, "ape_trans_rmse_after = {}", a.trans_rmse);
        let _ = writeln!(s, "ape_rot_rmse_before = {}", b.rot_rmse);
        let _ = writeln!(s, "ape_rot_rmse_after = {}", a.rot_rmse);
        let _ = writeln!(s, "endpoint_ape_before = {}", end(b));
        let _ = writeln!(s, "endpoint_ape_after = {}", end(a));
    }
    s
}

/// Result of `loop-correct` plus the optional before/after APE (no alignment).
#[derive(Debug, Clone)]
pub struct LoopRun {
    pub correction: Correction,
    pub before: Option<EvaluationResult>,
    pub after: Option<EvaluationResult>,
}

pub fn cmd_loop_correct(
    run_dir: &Path,
    loops: &Path,
    gt: Option<&Path>,
    out: &Path,
) -> Result<LoopRun> {
    let traj = Trajectory::read(&run_dir.join(TRAJECTORY_FILE))?;
    let keys = loopclosure::read_keyposes(&run_dir.join(KEYSCANS_FILE))?;
    let constraints = loopclosure::read_loops(loops)?;
    let correction = loopclosure::correct(&traj, &keys, &constraints)?;
    let corrected = export_poses(&correction.trajectory);
    correction.trajectory.write(&out.join(CORRECTED_FILE))?;
    trajectory::write_tum(&out.join(CORRECTED_TUM), &corrected)?;
    loopclosure::write_keyposes(&out.join(KEYSCANS_FILE), &correction.keyscans)?;
    correction
        .stage_one
        .write_trace(&out.join(STAGE_ONE_TRACE))?;
    correction
        .stage_two
        .write_trace(&out.join(STAGE_TWO_TRACE))?;
    let (before, after) = match gt {
        Some(p) => {
            let gt = trajectory::read_tum(p)?;
            (
                Some(evaluate(&export_poses(&traj), &gt, Alignment::None)?),
                Some(evaluate(&corrected, &gt, Alignment::None)?),
            )
        }
        None => (None, None),
    };
    io::write_string(
        &out.join(SUMMARY_FILE),
        &summary_text(
            &correction,
            constraints.len(),
            before.as_ref(),
            after.as_ref(),
        ),
    )?;
    Ok(LoopRun {
        correction,
        before,
        after,
    })
}

/// One plot row: time, trajectory-derived value, bias-corrected measurement.
pub type PlotRow = (f64, Vec3, Vec3);

/// Specific force and angular velocity from the trajectory against the IMU
/// samples inside its evaluable range, measurements corrected by `bias`.
pub fn plot_series(
    traj: &Trajectory,
    stream: &[ImuMeasurement],
    bias: &ImuBias,
    g: &GravityVector,
) -> Result<(Vec<PlotRow>, Vec<PlotRow>)> {
    let (a, b) = traj.range();
    let mut accel = Vec::new();
    let mut gyro = Vec::new();
    for m in stream.iter().filter(|m| m.t >= a && m.t <= b) {
        let s = traj.state(m.t)?;
        accel.push((
            m.t,
            s.rotation.inverse() * (s.acceleration - g.vector()),
            m.accel - bias.accel_bias,
        ));
        gyro.push((m.t, s.angular_velocity, m.gyro - bias.gyro_bias));
    }
    Ok((accel, gyro))
}

pub fn plot_csv(rows: &[PlotRow]) -> String {
    let mut s = format!("{PLOT_HEADER}\n");
    for (t, d, m) in rows {
        let _ = writeln!(s, "{}", io::join(&[*t, d.x, d.y, d.z, m.x, m.y, m.z], ","));
    }
    s
}

/// Writes the plot CSVs for an odometry output directory. The last bias
/// estimate in `biases.csv`, when present, is removed from the measurements.
pub fn cmd_plot_data(run_dir: &Path, out: &Path) -> Result<(Vec<PlotRow>, Vec<PlotRow>)> {
    let traj = Trajectory::read(&run_dir.join(TRAJECTORY_FILE))?;
    let stream = imu::read_imu_csv(&run_dir.join(sim::IMU_FILE))?;
    let bias_path = run_dir.join(BIASES_FILE);
    let bias = if bias_path.exists() {
        estimator::read_biases(&bias_path)?
            .last()
            .map(|(_, b)| *b)
            .unwrap_or_default()
    } else {
        ImuBias::default()
    };
    let (accel, gyro) = plot_series(&traj, &stream, &bias, &GravityVector::down())?;
    io::write_string(&out.join(PLOT_ACCEL_FILE), &plot_csv(&accel))?;
    io::write_string(&out.join(PLOT_GYRO_FILE), &plot_csv(&gyro))?;
    Ok((accel, gyro))
}
