//! Inertial measurement model: strapdown integration and the raw-sample
//! accelerometer / gyroscope residuals against a continuous trajectory.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{Rotation, Vec3};
use crate::io;
use crate::trajectory::Trajectory;

/// Magnitude of gravity, m/s².
pub const GRAVITY: f64 = 9.81;

pub const IMU_CSV_HEADER: &str = "t,wx,wy,wz,ax,ay,az";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuMeasurement {
    pub t: f64,
    /// rad/s
    pub gyro: Vec3,
    /// m/s²
    pub accel: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ImuBias {
    pub accel_bias: Vec3,
    pub gyro_bias: Vec3,
}

impl ImuBias {
    pub const MAX_ACCEL_BIAS: f64 = 1.0;
    pub const MAX_GYRO_BIAS: f64 = 0.1;

    pub fn new(accel_bias: Vec3, gyro_bias: Vec3) -> Self {
        Self {
            accel_bias,
            gyro_bias,
        }
    }
}

/// `^G g`, fixed magnitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GravityVector(Vec3);

impl GravityVector {
    /// `(0, 0, -9.81)`.
    pub fn down() -> Self {
        GravityVector(Vec3::new(0.0, 0.0, -GRAVITY))
    }

    /// Gravity along `direction`, rescaled to the fixed magnitude.
    pub fn along(direction: &Vec3) -> Self {
        GravityVector(direction.normalize() * GRAVITY)
    }

    pub fn vector(&self) -> Vec3 {
        self.0
    }
}

impl Default for GravityVector {
    fn default() -> Self {
        Self::down()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratedState {
    pub t: f64,
    pub rotation: Rotation,
    pub position: Vec3,
    pub velocity: Vec3,
}

/// Midpoint strapdown integration, one output state per measurement.
///
/// Each step uses the average of consecutive gyro samples for the attitude update
/// and the average of the two world-frame specific forces for velocity and
/// position. The first step (from `init.t` to the first sample) holds the first
/// sample constant; it has zero length when `init.t` coincides with that sample.
pub fn integrate(
    stream: &[ImuMeasurement],
    init: &IntegratedState,
    bias: &ImuBias,
    g: &GravityVector,
) -> Result<Vec<IntegratedState>> {
    let Some(first) = stream.first() else {
        return Ok(Vec::new());
    };
    if init.t > first.t + 1e-12 {
        return Err(Error::InvalidArgument(format!(
            "initial state at {} is after the first measurement at {}",
            init.t, first.t
        )));
    }
    let gravity = g.vector();
    let mut out = Vec::with_capacity(stream.len());
    let mut state = *init;
    let mut prev = first;
    for (idx, m) in stream.iter().enumerate() {
        if idx > 0 && m.t <= prev.t {
            return Err(Error::NonMonotoneTime {
                prev: prev.t,
                next: m.t,
            });
        }
        let dt = m.t - state.t;
        if dt > 0.0 {
            let omega = 0.5 * (prev.gyro + m.gyro) - bias.gyro_bias;
            let r_next = state.rotation * Rotation::exp(&(omega * dt));
            let acc = 0.5
                * (state.rotation * (prev.accel - bias.accel_bias)
                    + r_next * (m.accel - bias.accel_bias))
                + gravity;
            state.position += state.velocity * dt + 0.5 * acc * dt * dt;
            state.velocity += acc * dt;
            state.rotation = r_next;
        }
        state.t = m.t;
        out.push(state);
        prev = m;
    }
    Ok(out)
}

/// `Rᵀ(a - g) - a_m + b_a` from already-evaluated trajectory quantities.
pub fn accel_residual_from(
    rotation: &Rotation,
    acceleration: &Vec3,
    m: &ImuMeasurement,
    bias_accel: &Vec3,
    g: &GravityVector,
) -> Vec3 {
    rotation.inverse() * (acceleration - g.vector()) - m.accel + bias_accel
}

/// `ω - ω_m + b_w` from an already-evaluated body angular velocity.
pub fn gyro_residual_from(omega: &Vec3, m: &ImuMeasurement, bias_gyro: &Vec3) -> Vec3 {
    omega - m.gyro + bias_gyro
}

pub fn accel_residual(
    traj: &Trajectory,
    m: &ImuMeasurement,
    bias: &ImuBias,
    g: &GravityVector,
) -> Result<Vec3> {
    let s = traj.state(m.t)?;
    Ok(accel_residual_from(
        &s.rotation,
        &s.acceleration,
        m,
        &bias.accel_bias,
        g,
    ))
}

pub fn gyro_residual(traj: &Trajectory, m: &ImuMeasurement, bias: &ImuBias) -> Result<Vec3> {
    let s = traj.state(m.t)?;
    Ok(gyro_residual_from(&s.angular_velocity, m, &bias.gyro_bias))
}

/// Result of the stationary bootstrap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GravityAlignment {
    /// Roll and pitch from the mean specific force; yaw is zero.
    pub rotation: Rotation,
    /// Mean gyro reading over the window, a gyro-bias estimate.
    pub mean_gyro: Vec3,
    pub samples: usize,
}

/// Levels the body frame using accelerometer samples in
/// `[first.t, first.t + window)`, assumed stationary.
pub fn align_gravity(stream: &[ImuMeasurement], window: f64) -> Option<GravityAlignment> {
    let t_first = stream.first()?.t;
    let used: Vec<&ImuMeasurement> = stream
        .iter()
        .take_while(|m| m.t < t_first + window)
        .collect();
    if used.is_empty() {
        return None;
    }
    let n = used.len() as f64;
    let mean_acc = used.iter().fold(Vec3::zeros(), |a, m| a + m.accel) / n;
    let mean_gyro = used.iter().fold(Vec3::zeros(), |a, m| a + m.gyro) / n;
    if mean_acc.norm() < 1e-6 {
        return None;
    }
    let level = Rotation::between(&mean_acc, &Vec3::z())
        .unwrap_or_else(|| Rotation::exp(&Vec3::new(std::f64::consts::PI, 0.0, 0.0)));
    let (roll, pitch, _) = level.euler();
    Some(GravityAlignment {
        rotation: Rotation::from_euler(roll, pitch, 0.0),
        mean_gyro,
        samples: used.len(),
    })
}

pub fn imu_to_csv(stream: &[ImuMeasurement]) -> String {
    let mut s = String::with_capacity(stream.len() * 96);
    s.push_str(IMU_CSV_HEADER);
    s.push('\n');
    for m in stream {
        let _ = writeln!(
            s,
            "{}",
            io::join(
                &[m.t, m.gyro.x, m.gyro.y, m.gyro.z, m.accel.x, m.accel.y, m.accel.z],
                ","
            )
        );
    }
    s
}

pub fn imu_from_csv(text: &str, path: &Path) -> Result<Vec<ImuMeasurement>> {
    io::expect_header(text, IMU_CSV_HEADER, path)?;
    let mut out: Vec<ImuMeasurement> = Vec::new();
    for (lineno, line) in io::data_lines(text).skip(1) {
        let v = io::parse_fields(line, Some(','), 7, path, lineno)?;
        let m = ImuMeasurement {
            t: v[0],
            gyro: Vec3::new(v[1], v[2], v[3]),
            accel: Vec3::new(v[4], v[5], v[6]),
        };
        if let Some(prev) = out.last() {
            if m.t <= prev.t {
                return Err(Error::parse(
                    path.display(),
                    lineno,
                    "timestamps must increase",
                ));
            }
        }
        out.push(m);
    }
    Ok(out)
}

pub fn write_imu_csv(path: &Path, stream: &[ImuMeasurement]) -> Result<()> {
    io::write_string(path, &imu_to_csv(stream))
}

pub fn read_imu_csv(path: &Path) -> Result<Vec<ImuMeasurement>> {
    imu_from_csv(&io::read_to_string(path)?, path)
}
