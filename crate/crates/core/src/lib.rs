//! Continuous-time LiDAR-inertial trajectory estimation.

pub mod bspline;
pub mod cli;
pub mod error;
pub mod estimator;
pub mod geometry;
pub mod imu;
pub(crate) mod io;
pub mod kdtree;
pub mod lidar;
pub mod loopclosure;
pub mod sim;
pub mod solver;
mod splinefit;
pub mod trajectory;

pub use error::{Error, Result};
pub use geometry::{RigidTransform, Rotation, Vec3};
pub use trajectory::{Extrinsics, Trajectory};
