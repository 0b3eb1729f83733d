//! Deterministic synthetic world, ground-truth motion and sensor streams.
//!
//! The world is a set of rectangular planar patches. The ground truth is a
//! cubic B-spline trajectory that is stationary at the identity pose for the
//! configured settling time and then follows one of a few scripted motions.
//! Every random draw comes from a ChaCha stream keyed by the seed, with one
//! stream for the IMU and one per scan, so output is bit-reproducible.

use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::bspline::{KnotGrid, CUBIC};
use crate::error::{Error, Result};
use crate::geometry::{RigidTransform, Rotation, Vec3};
use crate::imu::{self, GravityVector, ImuBias, ImuMeasurement};
use crate::io;
use crate::lidar::{self, RawPoint, Scan, ScanEntry};
use crate::loopclosure::{self, LoopConstraint};
use crate::trajectory::{self, Extrinsics, Trajectory};

pub const IMU_FILE: &str = "imu.csv";
pub const SCAN_INDEX_FILE: &str = "scans.txt";
pub const GROUND_TRUTH_TUM: &str = "groundtruth.tum";
pub const GROUND_TRUTH_TRAJ: &str = "groundtruth.traj";
pub const LOOPS_FILE: &str = "loops.csv";
pub const MANIFEST_FILE: &str = "manifest.txt";
pub const WORLD_FILE: &str = "world.txt";
pub const LABEL_HEADER: &str = "plane_id";

/// Loop edges are emitted when the last scan starts this close to the first.
pub const LOOP_RADIUS: f64 = 1.0;

pub fn scan_file(id: usize) -> PathBuf {
    PathBuf::from(format!("scans/scan_{id:06}.csv"))
}

pub fn label_file(id: usize) -> PathBuf {
    PathBuf::from(format!("labels/scan_{id:06}.txt"))
}

/// Finite rectangle `corner + s·edge_a + t·edge_b`, `s, t ∈ [0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Patch {
    pub corner: Vec3,
    pub edge_a: Vec3,
    pub edge_b: Vec3,
    pub plane_id: u32,
}

impl Patch {
    pub fn normal(&self) -> Vec3 {
        self.edge_a.cross(&self.edge_b).normalize()
    }

    /// Signed distance of `x` from the supporting plane.
    pub fn plane_distance(&self, x: &Vec3) -> f64 {
        self.normal().dot(&(x - self.corner))
    }

    /// Ray parameter of the hit, if the ray crosses the patch.
    pub fn intersect(&self, origin: &Vec3, dir: &Vec3) -> Option<f64> {
        let n = self.edge_a.cross(&self.edge_b);
        let denom = n.dot(dir);
        if denom.abs() < 1e-12 {
            return None;
        }
        let t = n.dot(&(self.corner - origin)) / denom;
        if t <= 1e-9 {
            return None;
        }
        let rel = origin + dir * t - self.corner;
        let s = rel.dot(&self.edge_a) / self.edge_a.norm_squared();
        let u = rel.dot(&self.edge_b) / self.edge_b.norm_squared();
        ((0.0..=1.0).contains(&s) && (0.0..=1.0).contains(&u)).then_some(t)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct World {
    pub patches: Vec<Patch>,
}

impl World {
    /// Empty scene: every ray misses.
    pub fn empty() -> Self {
        Self::default()
    }

    /// A 9 m × 6.5 m × 3 m room with a pillar and a crate.
    pub fn box_room() -> Self {
        let mut w = World::default();
        w.add_box(Vec3::new(-4.0, -3.0, -1.2), Vec3::new(9.0, 6.5, 3.0));
        w.add_box(Vec3::new(2.0, 1.2, -1.2), Vec3::new(0.4, 0.4, 3.0));
        w.add_box(Vec3::new(-2.6, -2.2, -1.2), Vec3::new(0.8, 0.6, 0.5));
        w
    }

    /// Six faces of an axis-aligned box; ids continue from the current count.
    pub fn add_box(&mut self, min: Vec3, size: Vec3) {
        let (x, y, z) = (Vec3::x() * size.x, Vec3::y() * size.y, Vec3::z() * size.z);
        let faces = [
            (min, y, z),
            (min + x, y, z),
            (min, x, z),
            (min + y, x, z),
            (min, x, y),
            (min + z, x, y),
        ];
        for (corner, a, b) in faces {
            let plane_id = self.patches.len() as u32;
            self.patches.push(Patch {
                corner,
                edge_a: a,
                edge_b: b,
                plane_id,
            });
        }
    }

    /// Closest hit as `(range, plane_id)`.
    pub fn raycast(&self, origin: &Vec3, dir: &Vec3, max_range: f64) -> Option<(f64, u32)> {
        self.patches
            .iter()
            .filter_map(|p| p.intersect(origin, dir).map(|t| (t, p.plane_id)))
            .filter(|(t, _)| *t <= max_range)
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
    }

    pub fn patch(&self, plane_id: u32) -> Option<&Patch> {
        self.patches.iter().find(|p| p.plane_id == plane_id)
    }

    /// One patch per line: `id cx cy cz ax ay az bx by bz`.
    pub fn to_text(&self) -> String {
        let mut s = String::from("# id cx cy cz ax ay az bx by bz\n");
        for p in &self.patches {
            let v = [
                p.corner.x, p.corner.y, p.corner.z, p.edge_a.x, p.edge_a.y, p.edge_a.z, p.edge_b.x,
                p.edge_b.y, p.edge_b.z,
            ];
            let _ = writeln!(s, "{} {}", p.plane_id, io::join(&v, " "));
        }
        s
    }

    pub fn from_text(text: &str, path: &Path) -> Result<Self> {
        let mut patches = Vec::new();
        for (lineno, line) in io::data_lines(text) {
            let v = io::parse_fields(line, None, 10, path, lineno)?;
            let p = Patch {
                plane_id: v[0] as u32,
                corner: Vec3::new(v[1], v[2], v[3]),
                edge_a: Vec3::new(v[4], v[5], v[6]),
                edge_b: Vec3::new(v[7], v[8], v[9]),
            };
            if p.edge_a.cross(&p.edge_b).norm() <= 0.0 {
                return Err(Error::parse(path.display(), lineno, "degenerate patch"));
            }
            patches.push(p);
        }
        Ok(World { patches })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_text(&io::read_to_string(path)?, path)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Motion {
    Stationary,
    /// Smooth translation with gentle attitude changes.
    Wander,
    /// Yaw spin ramping up to `yaw_rate`.
    Spin,
    /// A closed circle of radius 1 m that ends at rest at the start pose.
    Loop,
}

impl FromStr for Motion {
    type Err = ();

    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        match s {
            "stationary" => Ok(Motion::Stationary),
            "wander" => Ok(Motion::Wander),
            "spin" => Ok(Motion::Spin),
            "loop" => Ok(Motion::Loop),
            _ => Err(()),
        }
    }
}

impl std::fmt::Display for Motion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Motion::Stationary => "stationary",
            Motion::Wander => "wander",
            Motion::Spin => "spin",
            Motion::Loop => "loop",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum WorldSource {
    BoxRoom,
    Empty,
    File(PathBuf),
}

impl std::fmt::Display for WorldSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            WorldSource::BoxRoom => f.write_str("box"),
            WorldSource::Empty => f.write_str("empty"),
            WorldSource::File(p) => write!(f, "{}", p.display()),
        }
    }
}

impl WorldSource {
    pub fn load(&self) -> Result<World> {
        match self {
            WorldSource::BoxRoom => Ok(World::box_room()),
            WorldSource::Empty => Ok(World::empty()),
            WorldSource::File(p) => World::read(p),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub seed: u64,
    pub motion: Motion,
    pub world: WorldSource,
    pub num_scans: usize,
    /// Stationary settling time before motion; also the first scan start.
    pub settle_time: f64,
    pub knot_dt: f64,
    /// Peak yaw rate of the spin motion, rad/s.
    pub yaw_rate: f64,
    pub imu_rate: f64,
    pub rings: usize,
    pub points_per_ring: usize,
    pub spin_rate: f64,
    /// Full vertical field of view, degrees, centred on the horizon.
    pub vfov_deg: f64,
    pub max_range: f64,
    pub sigma_gyro: f64,
    pub sigma_accel: f64,
    pub sigma_range: f64,
    pub accel_bias: Vec3,
    pub gyro_bias: Vec3,
    pub extrinsic_translation: Vec3,
    /// roll, pitch, yaw in radians
    pub extrinsic_rpy: Vec3,
    pub loop_weight: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            motion: Motion::Wander,
            world: WorldSource::BoxRoom,
            num_scans: 20,
            settle_time: 1.0,
            knot_dt: 0.05,
            yaw_rate: 1.0,
            imu_rate: 400.0,
            rings: 16,
            points_per_ring: 900,
            spin_rate: 10.0,
            vfov_deg: 30.0,
            max_range: 100.0,
            sigma_gyro: 0.005,
            sigma_accel: 0.05,
            sigma_range: 0.02,
            accel_bias: Vec3::new(0.03, -0.02, 0.01),
            gyro_bias: Vec3::new(0.002, -0.001, 0.0015),
            extrinsic_translation: Vec3::new(0.05, -0.02, 0.08),
            extrinsic_rpy: Vec3::new(0.01, -0.015, 0.02),
            loop_weight: 1.0,
        }
    }
}

fn parse_vec3(key: &str, value: &str) -> Result<Vec3> {
    let parts: Vec<&str> = value.split(',').map(str::trim).collect();
    let bad = || Error::InvalidConfigValue {
        key: key.to_string(),
        value: value.to_string(),
    };
    if parts.len() != 3 {
        return Err(bad());
    }
    let mut v = Vec3::zeros();
    for (i, p) in parts.iter().enumerate() {
        v[i] = p
            .parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or_else(bad)?;
    }
    Ok(v)
}

fn fmt_vec3(v: &Vec3) -> String {
    io::join(v.as_slice(), ",")
}

impl SimConfig {
    /// Zero sensor noise and biases.
    pub fn noise_free(mut self) -> Self {
        self.sigma_gyro = 0.0;
        self.sigma_accel = 0.0;
        self.sigma_range = 0.0;
        self.accel_bias = Vec3::zeros();
        self.gyro_bias = Vec3::zeros();
        self
    }

    pub fn scan_period(&self) -> f64 {
        1.0 / self.spin_rate
    }

    pub fn scan_start(&self, id: usize) -> f64 {
        self.settle_time + id as f64 * self.scan_period()
    }

    /// End of the last scan.
    pub fn end_time(&self) -> f64 {
        self.scan_start(self.num_scans)
    }

    pub fn extrinsics(&self) -> Extrinsics {
        let r = self.extrinsic_rpy;
        Extrinsics::new(RigidTransform::new(
            Rotation::from_euler(r.x, r.y, r.z),
            self.extrinsic_translation,
        ))
    }

    pub fn bias(&self) -> ImuBias {
        ImuBias::new(self.accel_bias, self.gyro_bias)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        use io::parse_value as num;
        let bad = || Error::InvalidConfigValue {
            key: key.to_string(),
            value: value.to_string(),
        };
        match key {
            "seed" => self.seed = num(key, value)?,
            "motion" => self.motion = value.parse().map_err(|_| bad())?,
            "world" => {
                self.world = match value {
                    "box" => WorldSource::BoxRoom,
                    "empty" => WorldSource::Empty,
                    p => WorldSource::File(PathBuf::from(p)),
                }
            }
            "num_scans" => self.num_scans = num(key, value)?,
            "settle_time" => self.settle_time = num(key, value)?,
            "knot_dt" => self.knot_dt = num(key, value)?,
            "yaw_rate" => self.yaw_rate = num(key, value)?,
            "imu_rate" => self.imu_rate = num(key, value)?,
            "rings" => self.rings = num(key, value)?,
            "points_per_ring" => self.points_per_ring = num(key, value)?,
            "spin_rate" => self.spin_rate = num(key, value)?,
            "vfov_deg" => self.vfov_deg = num(key, value)?,
            "max_range" => self.max_range = num(key, value)?,
            "sigma_gyro" => self.sigma_gyro = num(key, value)?,
            "sigma_accel" => self.sigma_accel = num(key, value)?,
            "sigma_range" => self.sigma_range = num(key, value)?,
            "accel_bias" => self.accel_bias = parse_vec3(key, value)?,
            "gyro_bias" => self.gyro_bias = parse_vec3(key, value)?,
            "extrinsic_translation" => self.extrinsic_translation = parse_vec3(key, value)?,
            "extrinsic_rpy" => self.extrinsic_rpy = parse_vec3(key, value)?,
            "loop_weight" => self.loop_weight = num(key, value)?,
            _ => return Err(Error::UnknownConfigKey(key.to_string())),
        }
        self.validate_key(key, value)
    }

    fn validate_key(&self, key: &str, value: &str) -> Result<()> {
        let ok = match key {
            "num_scans" => self.num_scans > 0,
            "settle_time" => self.settle_time >= 0.0 && self.settle_time.is_finite(),
            "knot_dt" => self.knot_dt > 0.0 && self.knot_dt.is_finite(),
            "imu_rate" => self.imu_rate > 0.0 && self.imu_rate.is_finite(),
            "rings" => self.rings > 0,
            "points_per_ring" => self.points_per_ring > 0,
            "spin_rate" => self.spin_rate > 0.0 && self.spin_rate.is_finite(),
            "vfov_deg" => (0.0..180.0).contains(&self.vfov_deg),
            "max_range" => self.max_range > 0.0,
            "sigma_gyro" => self.sigma_gyro >= 0.0,
            "sigma_accel" => self.sigma_accel >= 0.0,
            "sigma_range" => self.sigma_range >= 0.0,
            "loop_weight" => self.loop_weight > 0.0,
            _ => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfigValue {
                key: key.to_string(),
                value: value.to_string(),
            })
        }
    }

    pub fn from_text(text: &str, path: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        for (k, v) in io::parse_key_values(text, path)? {
            cfg.set(&k, &v)?;
        }
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_text(&io::read_to_string(path)?, path)
    }

    /// Every field as `key = value`, parseable by [`SimConfig::from_text`].
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("seed", self.seed.to_string());
        kv("motion", self.motion.to_string());
        kv("world", self.world.to_string());
        kv("num_scans", self.num_scans.to_string());
        kv("settle_time", self.settle_time.to_string());
        kv("knot_dt", self.knot_dt.to_string());
        kv("yaw_rate", self.yaw_rate.to_string());
        kv("imu_rate", self.imu_rate.to_string());
        kv("rings", self.rings.to_string());
        kv("points_per_ring", self.points_per_ring.to_string());
        kv("spin_rate", self.spin_rate.to_string());
        kv("vfov_deg", self.vfov_deg.to_string());
        kv("max_range", self.max_range.to_string());
        kv("sigma_gyro", self.sigma_gyro.to_string());
        kv("sigma_accel", self.sigma_accel.to_string());
        kv("sigma_range", self.sigma_range.to_string());
        kv("accel_bias", fmt_vec3(&self.accel_bias));
        kv("gyro_bias", fmt_vec3(&self.gyro_bias));
        kv(
            "extrinsic_translation",
            fmt_vec3(&self.extrinsic_translation),
        );
        kv("extrinsic_rpy", fmt_vec3(&self.extrinsic_rpy));
        kv("loop_weight", self.loop_weight.to_string());
        s
    }
}

/// Scripted pose `τ` seconds after motion onset; identity at `τ = 0`.
pub fn motion_pose(cfg: &SimConfig, tau: f64) -> RigidTransform {
    let tau = tau.max(0.0);
    let c = |a: f64, w: f64| a * (1.0 - (w * tau).cos());
    match cfg.motion {
        Motion::Stationary => RigidTransform::identity(),
        Motion::Wander => RigidTransform::new(
            Rotation::from_euler(c(0.05, 1.7), c(0.04, 1.1), c(0.4, 1.0)),
            Vec3::new(c(0.5, 1.2), c(0.4, 0.8), c(0.1, 1.5)),
        ),
        Motion::Spin => {
            let a = 5.0;
            let yaw = cfg.yaw_rate * (tau - (1.0 - (-a * tau).exp()) / a);
            RigidTransform::new(
                Rotation::from_euler(0.0, 0.0, yaw),
                Vec3::new(c(0.1, 1.0), 0.0, 0.0),
            )
        }
        Motion::Loop => {
            let duration = cfg.num_scans as f64 * cfg.scan_period();
            let s = (tau / duration).min(1.0);
            let theta = TAU * s - (TAU * s).sin();
            RigidTransform::new(
                Rotation::from_euler(0.0, 0.0, theta),
                Vec3::new(theta.sin(), 1.0 - theta.cos(), 0.0),
            )
        }
    }
}

/// Ground-truth spline on a grid starting at `t = 0`. Control point `i` samples
/// the scripted motion `i − (settle/dt + 2)` knots after onset, so every
/// segment before `settle_time` is exactly at rest.
pub fn ground_truth_trajectory(cfg: &SimConfig) -> Result<Trajectory> {
    let dt = cfg.knot_dt;
    let onset = (cfg.settle_time / dt).round() as usize + CUBIC - 2;
    let t_end = cfg.end_time() + 4.0 * dt;
    let n = ((t_end / dt).ceil() as usize) + CUBIC;
    let mut positions = Vec::with_capacity(n);
    let mut rotations = Vec::with_capacity(n);
    for i in 0..n {
        let tau = (i as f64 - onset as f64) * dt;
        let pose = motion_pose(cfg, tau);
        positions.push(pose.translation);
        rotations.push(pose.rotation);
    }
    Trajectory::new(KnotGrid::new(0.0, dt, CUBIC, n)?, positions, rotations)
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn gaussian3(rng: &mut ChaCha8Rng, sigma: f64) -> Vec3 {
    if sigma <= 0.0 {
        return Vec3::zeros();
    }
    let n = Normal::new(0.0, sigma).expect("finite sigma");
    Vec3::new(n.sample(rng), n.sample(rng), n.sample(rng))
}

/// `a_m = Rᵀ(a − g) + b_a + n_a`, `ω_m = ω + b_w + n_w` at `imu_rate` from `t = 0`.
pub fn synthesize_imu(cfg: &SimConfig, truth: &Trajectory) -> Result<Vec<ImuMeasurement>> {
    let mut rng = stream_rng(cfg.seed, 0);
    let g = GravityVector::down().vector();
    let t_last = cfg.end_time() + 2.0 * cfg.knot_dt;
    let count = (t_last * cfg.imu_rate).floor() as usize + 1;
    let mut out = Vec::with_capacity(count);
    for j in 0..count {
        let t = j as f64 / cfg.imu_rate;
        let s = truth.state(t)?;
        let gyro = s.angular_velocity + cfg.gyro_bias + gaussian3(&mut rng, cfg.sigma_gyro);
        let accel = s.rotation.inverse() * (s.acceleration - g)
            + cfg.accel_bias
            + gaussian3(&mut rng, cfg.sigma_accel);
        out.push(ImuMeasurement { t, gyro, accel });
    }
    Ok(out)
}

/// Unit ray of `(column, ring)` in the sensor frame.
pub fn beam_direction(cfg: &SimConfig, column: usize, ring: usize) -> Vec3 {
    let az = TAU * column as f64 / cfg.points_per_ring as f64 - PI;
    let half = 0.5 * cfg.vfov_deg.to_radians();
    let el = if cfg.rings > 1 {
        -half + 2.0 * half * ring as f64 / (cfg.rings - 1) as f64
    } else {
        0.0
    };
    Vec3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin())
}

/// Raycasts one sweep from the true LiDAR pose at each column's timestamp.
/// Returns the scan and the plane id hit by every point.
pub fn synthesize_scan(
    cfg: &SimConfig,
    world: &World,
    truth: &Trajectory,
    scan_id: usize,
) -> Result<(Scan, Vec<u32>)> {
    let mut rng = stream_rng(cfg.seed, scan_id as u64 + 1);
    let range_noise =
        (cfg.sigma_range > 0.0).then(|| Normal::new(0.0, cfg.sigma_range).expect("finite"));
    let t_start = cfg.scan_start(scan_id);
    let period = cfg.scan_period();
    let ext = cfg.extrinsics();
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for col in 0..cfg.points_per_ring {
        let tau = period * col as f64 / cfg.points_per_ring as f64;
        let pose = truth.lidar_pose_at(&ext, t_start + tau)?;
        for ring in 0..cfg.rings {
            let d = beam_direction(cfg, col, ring);
            let Some((range, plane)) =
                world.raycast(&pose.translation, &(pose.rotation * d), cfg.max_range)
            else {
                continue;
            };
            let noisy = range + range_noise.map_or(0.0, |n| n.sample(&mut rng));
            points.push(RawPoint {
                tau,
                xyz: d * noisy,
                ring: ring as u32,
            });
            labels.push(plane);
        }
    }
    Ok((
        Scan {
            t_start,
            period,
            points,
        },
        labels,
    ))
}

#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub trajectory: Trajectory,
    pub bias: ImuBias,
    pub extrinsics: Extrinsics,
    /// Plane id of every point, per scan.
    pub labels: Vec<Vec<u32>>,
    pub loops: Vec<LoopConstraint>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub config: SimConfig,
    pub world: World,
    pub imu: Vec<ImuMeasurement>,
    pub scans: Vec<Scan>,
    pub truth: GroundTruth,
}

/// Loop edge between the first and last scan if the run closes on itself.
/// Ids are scan ids; the estimator keeps both scans as key-scans.
pub fn loop_constraints(cfg: &SimConfig, truth: &Trajectory) -> Result<Vec<LoopConstraint>> {
    if cfg.num_scans < 2 {
        return Ok(Vec::new());
    }
    let last = cfg.num_scans - 1;
    let a = truth.pose_at(cfg.scan_start(0))?;
    let b = truth.pose_at(cfg.scan_start(last))?;
    if (a.translation - b.translation).norm() > LOOP_RADIUS {
        return Ok(Vec::new());
    }
    Ok(vec![LoopConstraint {
        id_a: 0,
        id_b: last as u64,
        relative: a.inverse() * b,
        weight: cfg.loop_weight,
    }])
}

pub fn simulate(cfg: &SimConfig, world: &World) -> Result<Dataset> {
    let truth = ground_truth_trajectory(cfg)?;
    let imu = synthesize_imu(cfg, &truth)?;
    let synthesized: Result<Vec<(Scan, Vec<u32>)>> = (0..cfg.num_scans)
        .into_par_iter()
        .map(|k| synthesize_scan(cfg, world, &truth, k))
        .collect();
    let (scans, labels): (Vec<Scan>, Vec<Vec<u32>>) = synthesized?.into_iter().unzip();
    let loops = loop_constraints(cfg, &truth)?;
    Ok(Dataset {
        config: cfg.clone(),
        world: world.clone(),
        imu,
        scans,
        truth: GroundTruth {
            trajectory: truth,
            bias: cfg.bias(),
            extrinsics: cfg.extrinsics(),
            labels,
            loops,
        },
    })
}

fn labels_to_text(labels: &[u32]) -> String {
    let mut s = String::with_capacity(labels.len() * 3 + 10);
    s.push_str(LABEL_HEADER);
    s.push('\n');
    for l in labels {
        let _ = writeln!(s, "{l}");
    }
    s
}

pub fn read_labels(path: &Path) -> Result<Vec<u32>> {
    let text = io::read_to_string(path)?;
    io::expect_header(&text, LABEL_HEADER, path)?;
    io::data_lines(&text)
        .skip(1)
        .map(|(lineno, l)| {
            l.parse::<u32>()
                .map_err(|_| Error::parse(path.display(), lineno, format!("bad plane id `{l}`")))
        })
        .collect()
}

/// Writes the dataset into `out` (created if needed).
pub fn write_dataset(data: &Dataset, out: &Path) -> Result<()> {
    let cfg = &data.config;
    imu::write_imu_csv(&out.join(IMU_FILE), &data.imu)?;
    let entries: Vec<ScanEntry> = data
        .scans
        .iter()
        .enumerate()
        .map(|(k, s)| ScanEntry {
            t_start: s.t_start,
            period: s.period,
            path: scan_file(k),
        })
        .collect();
    let written: Result<Vec<()>> = data
        .scans
        .par_iter()
        .enumerate()
        .map(|(k, s)| {
            lidar::write_scan(&out.join(scan_file(k)), s)?;
            io::write_string(
                &out.join(label_file(k)),
                &labels_to_text(&data.truth.labels[k]),
            )
        })
        .collect();
    written?;
    io::write_string(
        &out.join(SCAN_INDEX_FILE),
        &lidar::scan_index_to_text(&entries),
    )?;
    let truth = &data.truth.trajectory;
    let (_, t_end) = truth.range();
    let tum: Vec<(f64, RigidTransform)> = truth
        .sample_poses(100.0)
        .into_iter()
        .filter(|(t, _)| *t <= t_end)
        .collect();
    trajectory::write_tum(&out.join(GROUND_TRUTH_TUM), &tum)?;
    truth.write(&out.join(GROUND_TRUTH_TRAJ))?;
    loopclosure::write_loops(&out.join(LOOPS_FILE), &data.truth.loops)?;
    io::write_string(&out.join(WORLD_FILE), &data.world.to_text())?;
    let mut manifest = String::from("# synthetic dataset\n");
    manifest.push_str(&cfg.to_text());
    let _ = writeln!(manifest, "scan_count = {}", data.scans.len());
    let _ = writeln!(manifest, "scan_period = {}", cfg.scan_period());
    let _ = writeln!(manifest, "imu_count = {}", data.imu.len());
    io::write_string(&out.join(MANIFEST_FILE), &manifest)
}

pub fn emit_dataset(cfg: &SimConfig, world: &World, out: &Path) -> Result<Dataset> {
    let data = simulate(cfg, world)?;
    write_dataset(&data, out)?;
    Ok(data)
}

/// Keys written by [`write_dataset`] in addition to the config echo.
pub const MANIFEST_EXTRA_KEYS: [&str; 3] = ["scan_count", "scan_period", "imu_count"];

/// Reads a manifest back into the simulation config it echoes.
pub fn read_manifest(path: &Path) -> Result<SimConfig> {
    let text = io::read_to_string(path)?;
    let mut cfg = SimConfig::default();
    for (k, v) in io::parse_key_values(&text, path)? {
        if MANIFEST_EXTRA_KEYS.contains(&k.as_str()) {
            continue;
        }
        cfg.set(&k, &v)?;
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn small(motion: Motion) -> SimConfig {
        SimConfig {
            motion,
            num_scans: 3,
            points_per_ring: 300,
            ..SimConfig::default()
        }
    }

    #[test]
    fn stationary_noise_free_imu_reads_gravity() {
        let cfg = small(Motion::Stationary).noise_free();
        let truth = ground_truth_trajectory(&cfg).unwrap();
        for m in synthesize_imu(&cfg, &truth).unwrap() {
            assert_eq!(m.gyro, Vec3::zeros());
            assert_relative_eq!(m.accel, Vec3::new(0.0, 0.0, 9.81), epsilon = 1e-12);
        }
    }

    #[test]
    fn truth_is_at_rest_until_settled() {
        let cfg = small(Motion::Wander);
        let truth = ground_truth_trajectory(&cfg).unwrap();
        for j in 0..=100 {
            let s = truth.state(j as f64 * 0.01).unwrap();
            assert!(s.position.norm() < 1e-15 && s.velocity.norm() < 1e-15);
            assert!(s.rotation.angle_to(&Rotation::identity()) < 1e-15);
        }
        assert!(truth.state(1.2).unwrap().velocity.norm() > 1e-3);
    }

    #[test]
    fn zero_noise_residuals_vanish() {
        let cfg = small(Motion::Wander).noise_free();
        let truth = ground_truth_trajectory(&cfg).unwrap();
        let g = GravityVector::down();
        for m in synthesize_imu(&cfg, &truth).unwrap() {
            assert!(
                imu::accel_residual(&truth, &m, &cfg.bias(), &g)
                    .unwrap()
                    .norm()
                    < 1e-10
            );
            assert!(imu::gyro_residual(&truth, &m, &cfg.bias()).unwrap().norm() < 1e-10);
        }
    }

    #[test]
    fn static_scan_points_lie_on_their_planes() {
        let cfg = small(Motion::Stationary).noise_free();
        let world = World::box_room();
        let truth = ground_truth_trajectory(&cfg).unwrap();
        let (scan, labels) = synthesize_scan(&cfg, &world, &truth, 0).unwrap();
        assert_eq!(scan.points.len(), labels.len());
        assert!(scan.points.len() > cfg.rings * cfg.points_per_ring * 9 / 10);
        let pose = truth.lidar_pose_at(&cfg.extrinsics(), 1.0).unwrap();
        for (p, l) in scan.points.iter().zip(&labels) {
            let x = pose.transform_point(&p.xyz);
            assert!(world.patch(*l).unwrap().plane_distance(&x).abs() < 1e-9);
        }
    }

    #[test]
    fn same_seed_same_output() {
        let cfg = small(Motion::Spin);
        let world = World::box_room();
        let a = simulate(&cfg, &world).unwrap();
        let b = simulate(&cfg, &world).unwrap();
        assert_eq!(a.imu, b.imu);
        assert_eq!(a.scans, b.scans);
        let c = simulate(&SimConfig { seed: 2, ..cfg }, &world).unwrap();
        assert_ne!(a.imu, c.imu);
    }

    #[test]
    fn config_text_round_trip() {
        let cfg = SimConfig {
            seed: 42,
            motion: Motion::Loop,
            accel_bias: Vec3::new(0.1, 0.2, 1.0 / 3.0),
            ..SimConfig::default()
        };
        let back = SimConfig::from_text(&cfg.to_text(), Path::new("c")).unwrap();
        assert_eq!(back, cfg);
        assert!(matches!(
            SimConfig::from_text("bogus = 1\n", Path::new("c")),
            Err(Error::UnknownConfigKey(k)) if k == "bogus"
        ));
        assert!(SimConfig::from_text("imu_rate = -4\n", Path::new("c")).is_err());
    }

    #[test]
    fn loop_motion_closes_with_edge() {
        let cfg = SimConfig {
            motion: Motion::Loop,
            num_scans: 30,
            ..SimConfig::default()
        };
        let truth = ground_truth_trajectory(&cfg).unwrap();
        let loops = loop_constraints(&cfg, &truth).unwrap();
        assert_eq!(loops.len(), 1);
        assert_eq!((loops[0].id_a, loops[0].id_b), (0, 29));
        let far = small(Motion::Spin);
        let truth = ground_truth_trajectory(&SimConfig {
            num_scans: 3,
            ..far.clone()
        })
        .unwrap();
        assert_eq!(loop_constraints(&far, &truth).unwrap().len(), 1);
    }

    #[test]
    fn world_text_round_trip() {
        let w = World::box_room();
        assert_eq!(World::from_text(&w.to_text(), Path::new("w")).unwrap(), w);
    }
}
