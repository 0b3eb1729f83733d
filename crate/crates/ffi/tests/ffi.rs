use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use ctlio_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(ctlio_last_error_message()) }
        .to_string_lossy()
        .into_owned()
}

fn identity() -> CtlioPose {
    CtlioPose {
        qw: 1.0,
        ..CtlioPose::default()
    }
}

#[test]
fn trajectory_handle_lifecycle() {
    let pose = CtlioPose {
        tx: 0.5,
        ..identity()
    };
    let mut traj = ptr::null_mut();
    unsafe {
        assert_eq!(
            ctlio_trajectory_constant(1.0, 0.05, 5, &pose, &mut traj),
            CtlioStatus::Ok
        );
        assert!(last_error().is_empty());
        let mut n = 0;
        assert_eq!(ctlio_trajectory_num_control(traj, &mut n), CtlioStatus::Ok);
        assert_eq!(n, 5);
        let mut out = CtlioPose::default();
        assert_eq!(ctlio_trajectory_pose(traj, 1.05, &mut out), CtlioStatus::Ok);
        assert!((out.tx - 0.5).abs() < 1e-12 && (out.qw - 1.0).abs() < 1e-12);
        assert_eq!(
            ctlio_trajectory_pose(traj, 0.0, &mut out),
            CtlioStatus::OutOfRange
        );
        assert!(last_error().contains("outside"));

        let dir = tempfile::tempdir().unwrap();
        let path = CString::new(dir.path().join("t.traj").to_str().unwrap()).unwrap();
        assert_eq!(ctlio_trajectory_write(traj, path.as_ptr()), CtlioStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(
            ctlio_trajectory_read(path.as_ptr(), &mut back),
            CtlioStatus::Ok
        );
        let mut again = CtlioPose::default();
        ctlio_trajectory_pose(back, 1.05, &mut again);
        assert_eq!(again, {
            let mut p = CtlioPose::default();
            ctlio_trajectory_pose(traj, 1.05, &mut p);
            p
        });
        ctlio_trajectory_free(back);
        ctlio_trajectory_free(traj);
    }
}

#[test]
fn null_and_invalid_arguments() {
    unsafe {
        let mut traj = ptr::null_mut();
        assert_eq!(
            ctlio_trajectory_constant(0.0, 0.1, 5, ptr::null(), &mut traj),
            CtlioStatus::NullPointer
        );
        assert!(last_error().contains("pose"));
        let bad = CtlioPose::default();
        assert_eq!(
            ctlio_trajectory_constant(0.0, 0.1, 5, &bad, &mut traj),
            CtlioStatus::InvalidArgument
        );
        assert_eq!(
            ctlio_trajectory_constant(0.0, -0.1, 5, &identity(), &mut traj),
            CtlioStatus::InvalidArgument
        );
        assert!(traj.is_null());
        let missing = CString::new("/nonexistent/t.traj").unwrap();
        assert_eq!(
            ctlio_trajectory_read(missing.as_ptr(), &mut traj),
            CtlioStatus::Io
        );
        let mut r = CtlioScanReport::default();
        assert_eq!(
            ctlio_odometry_process_scan(
                ptr::null_mut(),
                0,
                0.0,
                0.1,
                ptr::null(),
                0,
                false,
                &mut r
            ),
            CtlioStatus::NullPointer
        );
    }
}

#[test]
fn odometry_session_on_stationary_imu() {
    let imu: Vec<CtlioImuSample> = (0..800)
        .map(|i| CtlioImuSample {
            t: i as f64 * 0.0025,
            gyro: [0.0; 3],
            accel: [0.0, 0.0, 9.81],
        })
        .collect();
    unsafe {
        let mut odo = ptr::null_mut();
        assert_eq!(
            ctlio_odometry_new(ptr::null(), &identity(), imu.as_ptr(), imu.len(), &mut odo),
            CtlioStatus::Ok
        );
        let mut traj = ptr::null_mut();
        assert_eq!(
            ctlio_odometry_trajectory(odo, &mut traj),
            CtlioStatus::InvalidArgument
        );
        let mut report = CtlioScanReport::default();
        for k in 0..3 {
            let t = 1.0 + 0.1 * k as f64;
            assert_eq!(
                ctlio_odometry_process_scan(odo, k, t, 0.1, ptr::null(), 0, false, &mut report),
                CtlioStatus::Ok,
                "{}",
                last_error()
            );
        }
        assert!(report.degenerate);
        let mut count = 0;
        ctlio_odometry_keyscan_count(odo, &mut count);
        assert_eq!(count, 1);
        let mut bias = [1.0; 6];
        assert_eq!(ctlio_odometry_bias(odo, bias.as_mut_ptr()), CtlioStatus::Ok);
        assert!(bias.iter().all(|b| b.abs() < 1e-6));
        assert_eq!(ctlio_odometry_trajectory(odo, &mut traj), CtlioStatus::Ok);
        let mut p = CtlioPose::default();
        assert_eq!(ctlio_trajectory_pose(traj, 1.25, &mut p), CtlioStatus::Ok);
        assert!(p.tx.abs() < 1e-6 && p.ty.abs() < 1e-6 && p.tz.abs() < 1e-6);
        ctlio_trajectory_free(traj);
        ctlio_odometry_free(odo);
    }
}

#[test]
fn unknown_config_key_maps_to_config_status() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.txt");
    std::fs::write(&cfg, "not_a_key = 1\n").unwrap();
    let cfg = CString::new(cfg.to_str().unwrap()).unwrap();
    let out = CString::new(dir.path().join("o").to_str().unwrap()).unwrap();
    let status = unsafe { ctlio_simulate(cfg.as_ptr(), out.as_ptr(), 0, false) };
    assert_eq!(status, CtlioStatus::Config);
    assert!(last_error().contains("not_a_key"));
}

fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(crate_dir().join("include/ctlio.h")).unwrap();
    let src = std::fs::read_to_string(crate_dir().join("src/lib.rs")).unwrap();
    let exports: Vec<&str> = src
        .split("extern \"C\" fn ")
        .skip(1)
        .map(|s| s.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 15);
    for name in exports {
        assert!(
            header.contains(&format!("{name}(")),
            "{name} missing from header"
        );
    }
}

fn static_lib() -> Option<PathBuf> {
    let exe = std::env::current_exe().ok()?;
    let profile_dir = exe.parent()?.parent()?;
    let lib = profile_dir.join("libctlio_ffi.a");
    lib.exists().then_some(lib)
}

fn have_cc() -> bool {
    Command::new("cc").arg("--version").output().is_ok()
}

#[test]
fn c_program_links_and_runs() {
    let (Some(lib), true) = (static_lib(), have_cc()) else {
        eprintln!("skipping: no C compiler or static library");
        return;
    };
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let status = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror"])
        .arg(crate_dir().join("tests/c/smoke.c"))
        .arg("-I")
        .arg(crate_dir().join("include"))
        .arg(&lib)
        .args(["-lm", "-lpthread", "-ldl", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(Path::new(&exe)).output().unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "ok");
}
