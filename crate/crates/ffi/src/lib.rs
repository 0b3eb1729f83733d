//! C ABI over `ctlio`.
//!
//! Every function returns a [`CtlioStatus`]; on failure the message is
//! available from [`ctlio_last_error_message`] on the same thread. Handles are
//! opaque and must be released with their `_free` function. Poses use
//! translation plus an `x, y, z, w` unit quaternion.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use ctlio::cli::{self, Alignment};
use ctlio::estimator::{EstimatorConfig, Odometry};
use ctlio::imu::ImuMeasurement;
use ctlio::lidar::{RawPoint, Scan};
use ctlio::{Error, Extrinsics, RigidTransform, Rotation, Trajectory, Vec3};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CtlioStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    OutOfRange = 3,
    Io = 4,
    Parse = 5,
    Config = 6,
    Numeric = 7,
    Graph = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CtlioPose {
    pub tx: f64,
    pub ty: f64,
    pub tz: f64,
    pub qx: f64,
    pub qy: f64,
    pub qz: f64,
    pub qw: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CtlioState {
    pub pose: CtlioPose,
    /// World-frame velocity.
    pub velocity: [f64; 3],
    /// World-frame acceleration.
    pub acceleration: [f64; 3],
    /// Body-frame angular velocity.
    pub angular_velocity: [f64; 3],
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CtlioImuSample {
    pub t: f64,
    pub gyro: [f64; 3],
    pub accel: [f64; 3],
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CtlioPoint {
    /// Offset from the scan start, seconds.
    pub tau: f64,
    pub xyz: [f64; 3],
    pub ring: u32,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CtlioScanReport {
    pub cost_init: f64,
    pub cost_final: f64,
    pub n_corr: usize,
    pub keyscan: bool,
    pub degenerate: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CtlioEvaluation {
    pub trans_rmse: f64,
    pub rot_rmse: f64,
    pub pairs: usize,
}

/// Opaque continuous-time trajectory.
pub struct CtlioTrajectory(Trajectory);

/// Opaque odometry session.
pub struct CtlioOdometry(Odometry);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> CtlioStatus {
    match e {
        Error::OutOfRange { .. } => CtlioStatus::OutOfRange,
        Error::InvalidArgument(_) | Error::UnsupportedOrder(_) | Error::NonMonotoneTime { .. } => {
            CtlioStatus::InvalidArgument
        }
        Error::Io { .. } => CtlioStatus::Io,
        Error::Parse { .. } | Error::CorruptScan { .. } => CtlioStatus::Parse,
        Error::UnknownConfigKey(_) | Error::InvalidConfigValue { .. } => CtlioStatus::Config,
        Error::NonFiniteResidual { .. } => CtlioStatus::Numeric,
        Error::DisconnectedGraph { .. } | Error::UnknownKeyScan(_) => CtlioStatus::Graph,
    }
}

/// Runs `f`, translating errors and panics into a status and last-error message.
fn guard(f: impl FnOnce() -> Result<(), (CtlioStatus, String)>) -> CtlioStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            CtlioStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(&format!("internal panic: {msg}"));
            CtlioStatus::Panic
        }
    }
}

type FfiResult<T> = Result<T, (CtlioStatus, String)>;

fn lib<T>(r: ctlio::Result<T>) -> FfiResult<T> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (CtlioStatus, String) {
    (CtlioStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> (CtlioStatus, String) {
    (CtlioStatus::InvalidArgument, msg.into())
}

unsafe fn path_arg(p: *const c_char, what: &str) -> FfiResult<PathBuf> {
    if p.is_null() {
        return Err(null(what));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{what} is not valid UTF-8")))?;
    Ok(PathBuf::from(s))
}

unsafe fn opt_path_arg(p: *const c_char, what: &str) -> FfiResult<Option<PathBuf>> {
    if p.is_null() {
        Ok(None)
    } else {
        path_arg(p, what).map(Some)
    }
}

unsafe fn slice_arg<'a, T>(p: *const T, n: usize, what: &str) -> FfiResult<&'a [T]> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> FfiResult<&'a mut T> {
    p.as_mut().ok_or_else(|| null(what))
}

fn pose_from(p: &CtlioPose) -> FfiResult<RigidTransform> {
    let v = [p.tx, p.ty, p.tz, p.qx, p.qy, p.qz, p.qw];
    let qn = (p.qx * p.qx + p.qy * p.qy + p.qz * p.qz + p.qw * p.qw).sqrt();
    if v.iter().any(|x| !x.is_finite()) || qn < 1e-12 {
        return Err(invalid("pose must be finite with a non-zero quaternion"));
    }
    Ok(RigidTransform::new(
        Rotation::from_quaternion(p.qw, p.qx, p.qy, p.qz),
        Vec3::new(p.tx, p.ty, p.tz),
    ))
}

fn pose_to(p: &RigidTransform) -> CtlioPose {
    let [qx, qy, qz, qw] = p.rotation.xyzw();
    CtlioPose {
        tx: p.translation.x,
        ty: p.translation.y,
        tz: p.translation.z,
        qx,
        qy,
        qz,
        qw,
    }
}

fn arr(v: &Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

/// Message of the last failed call on this thread; empty after a success.
/// Valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn ctlio_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ctlio_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Trajectory of order 4 with `n` control points all at `pose`.
///
/// # Safety
/// `pose` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn ctlio_trajectory_constant(
    t0: f64,
    dt: f64,
    n: usize,
    pose: *const CtlioPose,
    out: *mut *mut CtlioTrajectory,
) -> CtlioStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let pose = pose_from(pose.as_ref().ok_or_else(|| null("pose"))?)?;
        let traj = lib(Trajectory::constant(t0, dt, 4, n, pose))?;
        *out = Box::into_raw(Box::new(CtlioTrajectory(traj)));
        Ok(())
    })
}

/// Reads a trajectory serialization file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ctlio_trajectory_read(
    path: *const c_char,
    out: *mut *mut CtlioTrajectory,
) -> CtlioStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let traj = lib(Trajectory::read(&path_arg(path, "path")?))?;
        *out = Box::into_raw(Box::new(CtlioTrajectory(traj)));
        Ok(())
    })
}

/// # Safety
/// `traj` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ctlio_trajectory_write(
    traj: *const CtlioTrajectory,
    path: *const c_char,
) -> CtlioStatus {
    guard(|| {
        let t = traj.as_ref().ok_or_else(|| null("trajectory"))?;
        lib(t.0.write(&path_arg(path, "path")?))
    })
}

/// Evaluable time range.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ctlio_trajectory_range(
    traj: *const CtlioTrajectory,
    t_start: *mut f64,
    t_end: *mut f64,
) -> CtlioStatus {
    guard(|| {
        let t = traj.as_ref().ok_or_else(|| null("trajectory"))?;
        let (a, b) = t.0.range();
        *out_arg(t_start, "t_start")? = a;
        *out_arg(t_end, "t_end")? = b;
        Ok(())
    })
}

/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ctlio_trajectory_num_control(
    traj: *const CtlioTrajectory,
    out: *mut usize,
) -> CtlioStatus {
    guard(|| {
        let t = traj.as_ref().ok_or_else(|| null("trajectory"))?;
        *out_arg(out, "out")? = t.0.num_control();
        Ok(())
    })
}

/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ctlio_trajectory_pose(
    traj: *const CtlioTrajectory,
    t: f64,
    out: *mut CtlioPose,
) -> CtlioStatus {
    guard(|| {
        let tr = traj.as_ref().ok_or_else(|| null("trajectory"))?;
        *out_arg(out, "out")? = pose_to(&lib(tr.0.pose_at(t))?);
        Ok(())
    })
}

/// Pose and derivatives at `t`.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ctlio_trajectory_state(
    traj: *const CtlioTrajectory,
    t: f64,
    out: *mut CtlioState,
) -> CtlioStatus {
    guard(|| {
        let tr = traj.as_ref().ok_or_else(|| null("trajectory"))?;
        let s = lib(tr.0.state(t))?;
        *out_arg(out, "out")? = CtlioState {
            pose: pose_to(&s.pose()),
            velocity: arr(&s.velocity),
            acceleration: arr(&s.acceleration),
            angular_velocity: arr(&s.angular_velocity),
        };
        Ok(())
    })
}

/// Releases a trajectory handle; null is ignored.
///
/// # Safety
/// `traj` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ctlio_trajectory_free(traj: *mut CtlioTrajectory) {
    if !traj.is_null() {
        drop(Box::from_raw(traj));
    }
}

/// Starts an odometry session. `config_path` may be null for defaults;
/// `imu_to_lidar` is the LiDAR pose in the IMU frame.
///
/// # Safety
/// `imu` must point to `n_imu` samples; other pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ctlio_odometry_new(
    config_path: *const c_char,
    imu_to_lidar: *const CtlioPose,
    imu: *const CtlioImuSample,
    n_imu: usize,
    out: *mut *mut CtlioOdometry,
) -> CtlioStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let cfg = match opt_path_arg(config_path, "config_path")? {
            Some(p) => lib(EstimatorConfig::read(&p))?,
            None => EstimatorConfig::default(),
        };
        let ext = Extrinsics::new(pose_from(
            imu_to_lidar.as_ref().ok_or_else(|| null("imu_to_lidar"))?,
        )?);
        let stream = slice_arg(imu, n_imu, "imu")?
            .iter()
            .map(|m| ImuMeasurement {
                t: m.t,
                gyro: Vec3::from(m.gyro),
                accel: Vec3::from(m.accel),
            })
            .collect();
        let odo = lib(Odometry::new(cfg, ext, stream))?;
        *out = Box::into_raw(Box::new(CtlioOdometry(odo)));
        Ok(())
    })
}

/// Processes one scan of `n_points` points sorted by ring then azimuth.
///
/// # Safety
/// `points` must point to `n_points` points; other pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ctlio_odometry_process_scan(
    odo: *mut CtlioOdometry,
    scan_id: u64,
    t_start: f64,
    period: f64,
    points: *const CtlioPoint,
    n_points: usize,
    force_keyscan: bool,
    report: *mut CtlioScanReport,
) -> CtlioStatus {
    guard(|| {
        let o = odo.as_mut().ok_or_else(|| null("odometry"))?;
        let report = out_arg(report, "report")?;
        let pts = slice_arg(points, n_points, "points")?
            .iter()
            .map(|p| RawPoint {
                tau: p.tau,
                xyz: Vec3::from(p.xyz),
                ring: p.ring,
            })
            .collect();
        let scan = Scan {
            t_start,
            period,
            points: pts,
        };
        let r = lib(o.0.process_scan(scan_id, &scan, force_keyscan))?;
        *report = CtlioScanReport {
            cost_init: r.cost_init,
            cost_final: r.cost_final,
            n_corr: r.n_corr,
            keyscan: r.keyscan,
            degenerate: r.degenerate,
        };
        Ok(())
    })
}

/// Copies the current trajectory into a new handle.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ctlio_odometry_trajectory(
    odo: *const CtlioOdometry,
    out: *mut *mut CtlioTrajectory,
) -> CtlioStatus {
    guard(|| {
        let o = odo.as_ref().ok_or_else(|| null("odometry"))?;
        let out = out_arg(out, "out")?;
        let traj =
            o.0.trajectory()
                .ok_or_else(|| invalid("no scan has been processed yet"))?;
        *out = Box::into_raw(Box::new(CtlioTrajectory(traj.clone())));
        Ok(())
    })
}

/// Current biases as `[bax, bay, baz, bgx, bgy, bgz]`.
///
/// # Safety
/// `out` must point to 6 doubles.
#[no_mangle]
pub unsafe extern "C" fn ctlio_odometry_bias(
    odo: *const CtlioOdometry,
    out: *mut f64,
) -> CtlioStatus {
    guard(|| {
        let o = odo.as_ref().ok_or_else(|| null("odometry"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let b = o.0.bias();
        let v = [
            b.accel_bias.x,
            b.accel_bias.y,
            b.accel_bias.z,
            b.gyro_bias.x,
            b.gyro_bias.y,
            b.gyro_bias.z,
        ];
        std::slice::from_raw_parts_mut(out, 6).copy_from_slice(&v);
        Ok(())
    })
}

/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ctlio_odometry_keyscan_count(
    odo: *const CtlioOdometry,
    out: *mut usize,
) -> CtlioStatus {
    guard(|| {
        let o = odo.as_ref().ok_or_else(|| null("odometry"))?;
        *out_arg(out, "out")? = o.0.keyscans().len();
        Ok(())
    })
}

/// Releases an odometry handle; null is ignored.
///
/// # Safety
/// `odo` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ctlio_odometry_free(odo: *mut CtlioOdometry) {
    if !odo.is_null() {
        drop(Box::from_raw(odo));
    }
}

/// `simulate` command. `config_path` may be null; `seed` applies when `has_seed`.
///
/// # Safety
/// String arguments must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ctlio_simulate(
    config_path: *const c_char,
    out_dir: *const c_char,
    seed: u64,
    has_seed: bool,
) -> CtlioStatus {
    guard(|| {
        let cfg = opt_path_arg(config_path, "config_path")?;
        let out = path_arg(out_dir, "out_dir")?;
        lib(cli::cmd_simulate(
            cfg.as_deref(),
            &out,
            has_seed.then_some(seed),
        ))
        .map(|_| ())
    })
}

/// `odometry` command. `config_path` may be null.
///
/// # Safety
/// String arguments must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ctlio_run_odometry(
    dataset_dir: *const c_char,
    config_path: *const c_char,
    out_dir: *const c_char,
) -> CtlioStatus {
    guard(|| {
        let data = path_arg(dataset_dir, "dataset_dir")?;
        let cfg = opt_path_arg(config_path, "config_path")?;
        let out = path_arg(out_dir, "out_dir")?;
        lib(cli::cmd_odometry(&data, cfg.as_deref(), &out, false)).map(|_| ())
    })
}

/// `loop-correct` command. `gt_tum` may be null.
///
/// # Safety
/// String arguments must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ctlio_loop_correct(
    run_dir: *const c_char,
    loops_csv: *const c_char,
    gt_tum: *const c_char,
    out_dir: *const c_char,
) -> CtlioStatus {
    guard(|| {
        let run = path_arg(run_dir, "run_dir")?;
        let loops = path_arg(loops_csv, "loops_csv")?;
        let gt = opt_path_arg(gt_tum, "gt_tum")?;
        let out = path_arg(out_dir, "out_dir")?;
        lib(cli::cmd_loop_correct(&run, &loops, gt.as_deref(), &out)).map(|_| ())
    })
}

/// `evaluate` command; `first_pose_align` selects the alignment mode.
///
/// # Safety
/// String arguments must be NUL-terminated and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn ctlio_evaluate(
    est_tum: *const c_char,
    gt_tum: *const c_char,
    first_pose_align: bool,
    out: *mut CtlioEvaluation,
) -> CtlioStatus {
    guard(|| {
        let est = path_arg(est_tum, "est_tum")?;
        let gt = path_arg(gt_tum, "gt_tum")?;
        let out = out_arg(out, "out")?;
        let mode = if first_pose_align {
            Alignment::FirstPose
        } else {
            Alignment::None
        };
        let r = lib(cli::cmd_evaluate(&est, &gt, mode, None))?;
        *out = CtlioEvaluation {
            trans_rmse: r.trans_rmse,
            rot_rmse: r.rot_rmse,
            pairs: r.errors.len(),
        };
        Ok(())
    })
}
