//! Scan-by-scan odometry on a continuous-time trajectory.
//!
//! For every scan the trajectory is extended to the scan end, the new control
//! points are seeded from integrated IMU states, and the window is refined by
//! alternating submap association with a joint LiDAR + IMU solve in which
//! active control points and biases are free and static control points are
//! held fixed. Sufficiently new poses become key-scans and feed the submap.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use crate::bspline::CUBIC;
use crate::error::{Error, Result};
use crate::geometry::{RigidTransform, Rotation, Vec3};
use crate::imu::{self, GravityVector, ImuBias, ImuMeasurement, IntegratedState};
use crate::io;
use crate::lidar::{
    self, AssociationConfig, Correspondence, Feature, FeatureConfig, FeatureKind, Scan, Submap,
};
use crate::solver::{
    self, Loss, Param, Problem, ResidualBlock, SolveReport, SolverOptions, Weight,
};
use crate::splinefit::{self, ControlBlocks};
use crate::trajectory::{Extrinsics, Trajectory};

pub const REPORT_CSV_HEADER: &str = "scan_id,cost_init,cost_final,n_corr,keyscan,degenerate,ms";
pub const BIAS_CSV_HEADER: &str = "scan_id,bax,bay,baz,bgx,bgy,bgz";

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    pub knot_dt: f64,
    pub sigma_lidar: f64,
    pub sigma_accel: f64,
    pub sigma_gyro: f64,
    pub keyscan_trans_thresh: f64,
    /// radians
    pub keyscan_rot_thresh: f64,
    pub keyscan_time_thresh: f64,
    pub submap_size: usize,
    pub submap_radius: f64,
    pub association_rounds: usize,
    pub edge_threshold: f64,
    pub planar_threshold: f64,
    pub edges_per_sector: usize,
    pub planar_per_sector: usize,
    /// Huber threshold on LiDAR residuals, metres.
    pub huber_delta: f64,
    /// Bias prior weight as a multiple of the measurement weight.
    pub bias_prior_ratio: f64,
    /// Stationary interval used to level the first pose, seconds.
    pub gravity_window: f64,
    pub max_iter: usize,
    pub max_neighbor_dist: f64,
    pub max_plane_dist: f64,
    pub min_line_eigen_ratio: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        let features = FeatureConfig::default();
        let assoc = AssociationConfig::default();
        Self {
            knot_dt: 0.05,
            sigma_lidar: 0.05,
            sigma_accel: 0.05,
            sigma_gyro: 0.005,
            keyscan_trans_thresh: 0.2,
            keyscan_rot_thresh: 10f64.to_radians(),
            keyscan_time_thresh: 1.0,
            submap_size: 10,
            submap_radius: 20.0,
            association_rounds: 3,
            edge_threshold: features.edge_threshold,
            planar_threshold: features.planar_threshold,
            edges_per_sector: features.edges_per_sector,
            planar_per_sector: features.planar_per_sector,
            huber_delta: 0.1,
            bias_prior_ratio: 10.0,
            gravity_window: 1.0,
            max_iter: 10,
            max_neighbor_dist: assoc.max_neighbor_dist,
            max_plane_dist: assoc.max_plane_dist,
            min_line_eigen_ratio: assoc.min_line_eigen_ratio,
        }
    }
}

macro_rules! config_fields {
    ($m:ident) => {
        $m!(
            knot_dt,
            sigma_lidar,
            sigma_accel,
            sigma_gyro,
            keyscan_trans_thresh,
            keyscan_rot_thresh,
            keyscan_time_thresh,
            submap_size,
            submap_radius,
            association_rounds,
            edge_threshold,
            planar_threshold,
            edges_per_sector,
            planar_per_sector,
            huber_delta,
            bias_prior_ratio,
            gravity_window,
            max_iter,
            max_neighbor_dist,
            max_plane_dist,
            min_line_eigen_ratio
        )
    };
}

impl EstimatorConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        macro_rules! assign {
            ($($f:ident),*) => {
                match key {
                    $(stringify!($f) => self.$f = io::parse_value(key, value)?,)*
                    _ => return Err(Error::UnknownConfigKey(key.to_string())),
                }
            };
        }
        config_fields!(assign);
        self.validate().map_err(|_| Error::InvalidConfigValue {
            key: key.to_string(),
            value: value.to_string(),
        })
    }

    /// Every numeric field must be positive; round and quota counts may not be zero.
    pub fn validate(&self) -> Result<()> {
        let reals = [
            self.knot_dt,
            self.sigma_lidar,
            self.sigma_accel,
            self.sigma_gyro,
            self.keyscan_trans_thresh,
            self.keyscan_rot_thresh,
            self.keyscan_time_thresh,
            self.submap_radius,
            self.edge_threshold,
            self.planar_threshold,
            self.huber_delta,
            self.bias_prior_ratio,
            self.gravity_window,
            self.max_neighbor_dist,
            self.max_plane_dist,
            self.min_line_eigen_ratio,
        ];
        let counts = [self.submap_size, self.association_rounds, self.max_iter];
        if reals.iter().all(|v| *v > 0.0 && v.is_finite()) && counts.iter().all(|c| *c > 0) {
            Ok(())
        } else {
            Err(Error::InvalidArgument(
                "estimator settings must be positive".into(),
            ))
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

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        macro_rules! emit {
            ($($f:ident),*) => {
                $(let _ = writeln!(s, "{} = {}", stringify!($f), self.$f);)*
            };
        }
        config_fields!(emit);
        s
    }

    pub fn feature_config(&self) -> FeatureConfig {
        FeatureConfig {
            edge_threshold: self.edge_threshold,
            planar_threshold: self.planar_threshold,
            edges_per_sector: self.edges_per_sector,
            planar_per_sector: self.planar_per_sector,
            ..FeatureConfig::default()
        }
    }

    pub fn association_config(&self) -> AssociationConfig {
        AssociationConfig {
            max_neighbor_dist: self.max_neighbor_dist,
            max_plane_dist: self.max_plane_dist,
            min_line_eigen_ratio: self.min_line_eigen_ratio,
            ..AssociationConfig::default()
        }
    }

    fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            max_iter: self.max_iter,
            ..SolverOptions::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeyScan {
    /// Id of the scan it was promoted from.
    pub id: u64,
    pub t: f64,
    /// IMU pose at `t`.
    pub pose: RigidTransform,
    /// LiDAR pose at `t`; features below are in this frame.
    pub lidar_pose: RigidTransform,
    pub edges: Vec<Vec3>,
    pub planes: Vec<Vec3>,
}

impl KeyScan {
    pub fn global_points(&self) -> impl Iterator<Item = (Vec3, FeatureKind)> + '_ {
        let tf = self.lidar_pose;
        self.edges
            .iter()
            .map(move |p| (tf.transform_point(p), FeatureKind::Edge))
            .chain(
                self.planes
                    .iter()
                    .map(move |p| (tf.transform_point(p), FeatureKind::Planar)),
            )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanReport {
    pub scan_id: u64,
    pub cost_init: f64,
    pub cost_final: f64,
    pub n_corr: usize,
    pub keyscan: bool,
    pub degenerate: bool,
    /// Wall time in milliseconds; zero unless timing is enabled.
    pub ms: f64,
    /// No IMU samples fell inside the new segment.
    pub init_skipped: bool,
}

pub fn reports_to_csv(reports: &[ScanReport]) -> String {
    let mut s = format!("{REPORT_CSV_HEADER}\n");
    for r in reports {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.scan_id,
            r.cost_init,
            r.cost_final,
            r.n_corr,
            u8::from(r.keyscan),
            u8::from(r.degenerate),
            r.ms
        );
    }
    s
}

/// Integrated states for measurements in `[t_from, t_to]`, starting from the
/// trajectory state at `t_from`. A sample exactly at `t_from` is kept so the
/// first step averages two samples instead of holding one.
pub fn integrate_from(
    traj: &Trajectory,
    stream: &[ImuMeasurement],
    bias: &ImuBias,
    g: &GravityVector,
    t_from: f64,
    t_to: f64,
) -> Result<Vec<IntegratedState>> {
    let s = traj.state(t_from)?;
    let lo = stream.partition_point(|m| m.t < t_from - 1e-12);
    let hi = stream.partition_point(|m| m.t <= t_to);
    let init = IntegratedState {
        t: t_from,
        rotation: s.rotation,
        position: s.position,
        velocity: s.velocity,
    };
    imu::integrate(&stream[lo..hi], &init, bias, g)
}

/// Fits the control points `free` to integrated states with rotation,
/// position and velocity anchors of unit weight. Returns `None` (trajectory
/// untouched) when there are no states.
pub fn initialize_segment(
    traj: &mut Trajectory,
    states: &[IntegratedState],
    free: &[usize],
) -> Result<Option<SolveReport>> {
    if states.is_empty() || free.is_empty() {
        return Ok(None);
    }
    let k = traj.order();
    let mut located = Vec::with_capacity(states.len());
    for s in states {
        let (seg, basis) = splinefit::locate(traj, s.t)?;
        if free.iter().any(|&i| (seg..seg + k).contains(&i)) {
            located.push((seg, basis, *s));
        }
    }
    let Some(first) = located.iter().map(|l| l.0).min() else {
        return Ok(None);
    };
    let last = located.iter().map(|l| l.0).max().unwrap_or(first) + k;
    let ids: Vec<usize> = (first..last).collect();
    let mut problem = Problem::new();
    let blocks = ControlBlocks::register(&mut problem, traj, &ids, free);
    for (seg, basis, s) in located {
        problem.add_residual(ResidualBlock::new(
            blocks.window(seg, k),
            9,
            move |ps: &[Param]| {
                let (r3, so3) = splinefit::eval_window(ps, &basis);
                let r = (s.rotation.inverse() * so3.rotation).log();
                let p = r3.position - s.position;
                let v = r3.velocity - s.velocity;
                vec![r.x, r.y, r.z, p.x, p.y, p.z, v.x, v.y, v.z]
            },
        ))?;
    }
    let options = SolverOptions {
        max_iter: 30,
        cost_tol: 1e-14,
        step_tol: 1e-12,
        ..SolverOptions::default()
    };
    let report = solver::solve(&mut problem, &options)?;
    let written: Vec<usize> = free.iter().copied().filter(|i| ids.contains(i)).collect();
    blocks.write_back(&problem, traj, &written);
    Ok(Some(report))
}

/// Translation, rotation or elapsed-time gate against the last key-scan.
pub fn select_keyscan(
    cfg: &EstimatorConfig,
    last: Option<(f64, &RigidTransform)>,
    t: f64,
    pose: &RigidTransform,
) -> bool {
    let Some((t_last, last_pose)) = last else {
        return true;
    };
    let (dr, dp) = last_pose.distance_to(pose);
    dp > cfg.keyscan_trans_thresh
        || dr > cfg.keyscan_rot_thresh
        || t - t_last > cfg.keyscan_time_thresh
}

/// Ids of the submap members: the most recent `submap_size` key-scans and
/// any key-scan within `submap_radius` of `position`.
pub fn submap_members(cfg: &EstimatorConfig, keyscans: &[KeyScan], position: &Vec3) -> Vec<u64> {
    let recent_from = keyscans.len().saturating_sub(cfg.submap_size);
    keyscans
        .iter()
        .enumerate()
        .filter(|(i, k)| {
            *i >= recent_from || (k.pose.translation - position).norm() <= cfg.submap_radius
        })
        .map(|(_, k)| k.id)
        .collect()
}

pub fn build_submap(keyscans: &[KeyScan], members: &[u64]) -> Submap {
    let mut edges = Vec::new();
    let mut planes = Vec::new();
    for k in keyscans.iter().filter(|k| members.contains(&k.id)) {
        for (p, kind) in k.global_points() {
            match kind {
                FeatureKind::Edge => edges.push(p),
                FeatureKind::Planar => planes.push(p),
            }
        }
    }
    Submap::new(members.to_vec(), edges, planes)
}

/// Sequential LiDAR-inertial odometry.
#[derive(Debug, Clone)]
pub struct Odometry {
    cfg: EstimatorConfig,
    ext: Extrinsics,
    gravity: GravityVector,
    imu: Vec<ImuMeasurement>,
    initial_rotation: Rotation,
    traj: Option<Trajectory>,
    bias: ImuBias,
    keyscans: Vec<KeyScan>,
    submap: Submap,
    processed: usize,
    last_scan_end: f64,
    timing: bool,
}

impl Odometry {
    /// Levels the initial attitude from the first `gravity_window` seconds of
    /// IMU data, assumed stationary, and seeds the gyro bias from their mean.
    pub fn new(cfg: EstimatorConfig, ext: Extrinsics, imu: Vec<ImuMeasurement>) -> Result<Self> {
        cfg.validate()?;
        if imu.is_empty() {
            return Err(Error::InvalidArgument("empty IMU stream".into()));
        }
        if let Some(w) = imu.windows(2).find(|w| w[1].t <= w[0].t) {
            return Err(Error::NonMonotoneTime {
                prev: w[0].t,
                next: w[1].t,
            });
        }
        let align = imu::align_gravity(&imu, cfg.gravity_window)
            .ok_or_else(|| Error::InvalidArgument("cannot level: no specific force".into()))?;
        Ok(Self {
            bias: ImuBias::new(Vec3::zeros(), align.mean_gyro),
            initial_rotation: align.rotation,
            cfg,
            ext,
            gravity: GravityVector::down(),
            imu,
            traj: None,
            keyscans: Vec::new(),
            submap: Submap::default(),
            processed: 0,
            last_scan_end: f64::NEG_INFINITY,
            timing: false,
        })
    }

    pub fn set_timing(&mut self, on: bool) {
        self.timing = on;
    }

    pub fn config(&self) -> &EstimatorConfig {
        &self.cfg
    }

    pub fn trajectory(&self) -> Option<&Trajectory> {
        self.traj.as_ref()
    }

    pub fn bias(&self) -> &ImuBias {
        &self.bias
    }

    pub fn keyscans(&self) -> &[KeyScan] {
        &self.keyscans
    }

    pub fn submap(&self) -> &Submap {
        &self.submap
    }

    pub fn processed(&self) -> usize {
        self.processed
    }

    pub fn imu(&self) -> &[ImuMeasurement] {
        &self.imu
    }

    /// Processes one scan. `force_keyscan` promotes it regardless of the gates.
    pub fn process_scan(
        &mut self,
        scan_id: u64,
        scan: &Scan,
        force_keyscan: bool,
    ) -> Result<ScanReport> {
        let started = Instant::now();
        if scan.t_start < self.last_scan_end - 1e-9 {
            return Err(Error::NonMonotoneTime {
                prev: self.last_scan_end,
                next: scan.t_start,
            });
        }
        let features = lidar::extract_features(scan, &self.cfg.feature_config()).features;
        let mut report = if self.traj.is_none() {
            self.bootstrap(scan_id, scan)?
        } else {
            self.register(scan_id, scan, &features)?
        };
        let traj = self.traj.as_ref().expect("initialized");
        let pose = traj.pose_at(scan.t_start)?;
        let last = self.keyscans.last().map(|k| (k.t, &k.pose));
        report.keyscan = force_keyscan || select_keyscan(&self.cfg, last, scan.t_start, &pose);
        if report.keyscan {
            let ks = self.make_keyscan(scan_id, scan, &features)?;
            self.keyscans.push(ks);
        }
        let members = submap_members(&self.cfg, &self.keyscans, &pose.translation);
        if members != self.submap.keyscan_ids {
            self.submap = build_submap(&self.keyscans, &members);
        }
        self.processed += 1;
        self.last_scan_end = scan.t_end();
        if self.timing {
            report.ms = started.elapsed().as_secs_f64() * 1e3;
        }
        Ok(report)
    }

    /// First scan: the trajectory starts at the scan start from the levelled
    /// attitude at rest and is fitted to integrated IMU states over the scan.
    fn bootstrap(&mut self, scan_id: u64, scan: &Scan) -> Result<ScanReport> {
        let start = RigidTransform::new(self.initial_rotation, Vec3::zeros());
        let mut traj = Trajectory::constant(scan.t_start, self.cfg.knot_dt, CUBIC, CUBIC, start)?;
        traj.extend_to(scan.t_end());
        let lo = self.imu.partition_point(|m| m.t < scan.t_start);
        let hi = self.imu.partition_point(|m| m.t <= scan.t_end());
        let init = IntegratedState {
            t: scan.t_start,
            rotation: self.initial_rotation,
            position: Vec3::zeros(),
            velocity: Vec3::zeros(),
        };
        let states = imu::integrate(&self.imu[lo..hi], &init, &self.bias, &self.gravity)?;
        let all: Vec<usize> = (0..traj.num_control()).collect();
        let fit = initialize_segment(&mut traj, &states, &all)?;
        self.traj = Some(traj);
        Ok(ScanReport {
            scan_id,
            cost_init: fit.as_ref().map_or(0.0, |r| r.initial_cost),
            cost_final: fit.as_ref().map_or(0.0, |r| r.final_cost),
            n_corr: 0,
            keyscan: true,
            degenerate: false,
            ms: 0.0,
            init_skipped: fit.is_none(),
        })
    }

    fn register(&mut self, scan_id: u64, scan: &Scan, features: &[Feature]) -> Result<ScanReport> {
        let traj = self.traj.as_mut().expect("initialized");
        let (_, old_end) = traj.range();
        let new_ids = traj.extend_to(scan.t_end());
        let states = integrate_from(
            traj,
            &self.imu,
            &self.bias,
            &self.gravity,
            old_end,
            scan.t_end(),
        )?;
        let init = initialize_segment(traj, &states, &new_ids)?;
        let mut report = ScanReport {
            scan_id,
            cost_init: 0.0,
            cost_final: 0.0,
            n_corr: 0,
            keyscan: false,
            degenerate: false,
            ms: 0.0,
            init_skipped: init.is_none() && !new_ids.is_empty(),
        };
        let assoc = self.cfg.association_config();
        for round in 0..self.cfg.association_rounds {
            let traj = self.traj.as_ref().expect("initialized");
            let corr = lidar::associate(
                features,
                scan.t_start,
                &self.submap,
                traj,
                &self.ext,
                &assoc,
            )?;
            let solved = self.solve_window(scan, &corr)?;
            if round == 0 {
                report.cost_init = solved.initial_cost;
            }
            report.cost_final = solved.final_cost;
            report.n_corr = corr.len();
            report.degenerate = corr.is_empty();
            if corr.is_empty() {
                // Re-association cannot change anything without a map.
                break;
            }
        }
        Ok(report)
    }

    /// One joint LiDAR + IMU solve over the scan window.
    fn solve_window(&mut self, scan: &Scan, corr: &[Correspondence]) -> Result<SolveReport> {
        let cfg = &self.cfg;
        let traj = self.traj.as_mut().expect("initialized");
        let k = traj.order();
        let window = traj.window_for(scan.t_start, scan.t_end())?;
        let mut ids = window.static_ids.clone();
        ids.extend_from_slice(&window.active_ids);
        let mut problem = Problem::new();
        let blocks = ControlBlocks::register(&mut problem, traj, &ids, &window.active_ids);
        let ba = problem.add_vec3(self.bias.accel_bias);
        let bg = problem.add_vec3(self.bias.gyro_bias);
        problem.set_max_norm(ba, ImuBias::MAX_ACCEL_BIAS);
        problem.set_max_norm(bg, ImuBias::MAX_GYRO_BIAS);

        let ext = self.ext.imu_to_lidar;
        for c in corr {
            let (seg, basis) = splinefit::locate(traj, c.t)?;
            let c = *c;
            problem.add_residual(
                ResidualBlock::new(blocks.window(seg, k), 1, move |ps: &[Param]| {
                    let (r3, so3) = splinefit::eval_window(ps, &basis);
                    let lidar_pose = RigidTransform::new(so3.rotation, r3.position) * ext;
                    vec![lidar::residual_at(&c, &lidar_pose)]
                })
                .with_weight(Weight::Scalar(1.0 / cfg.sigma_lidar))
                .with_loss(Loss::Huber(cfg.huber_delta / cfg.sigma_lidar)),
            )?;
        }

        let support = window.first_support_segment();
        let t_imu = traj.grid().knot_time(support).max(traj.range().0);
        let lo = self.imu.partition_point(|m| m.t < t_imu - 1e-9);
        let hi = self.imu.partition_point(|m| m.t <= scan.t_end());
        let g = self.gravity;
        let imu_weight = Weight::Diagonal(vec![
            1.0 / cfg.sigma_accel,
            1.0 / cfg.sigma_accel,
            1.0 / cfg.sigma_accel,
            1.0 / cfg.sigma_gyro,
            1.0 / cfg.sigma_gyro,
            1.0 / cfg.sigma_gyro,
        ]);
        for m in &self.imu[lo..hi] {
            let (seg, basis) = splinefit::locate(traj, m.t)?;
            if seg < support {
                continue;
            }
            let mut refs = blocks.window(seg, k);
            refs.push(ba);
            refs.push(bg);
            let m = *m;
            problem.add_residual(
                ResidualBlock::new(refs, 6, move |ps: &[Param]| {
                    let (r3, so3) = splinefit::eval_window(ps, &basis);
                    let b_a = ps[2 * k].as_vec3();
                    let b_w = ps[2 * k + 1].as_vec3();
                    let ra =
                        imu::accel_residual_from(&so3.rotation, &r3.acceleration, &m, &b_a, &g);
                    let rw = imu::gyro_residual_from(&so3.angular_velocity, &m, &b_w);
                    vec![ra.x, ra.y, ra.z, rw.x, rw.y, rw.z]
                })
                .with_weight(imu_weight.clone()),
            )?;
        }

        let prior_a = self.bias.accel_bias;
        let prior_g = self.bias.gyro_bias;
        problem.add_residual(
            ResidualBlock::new(vec![ba], 3, move |ps: &[Param]| {
                (ps[0].as_vec3() - prior_a).as_slice().to_vec()
            })
            .with_weight(Weight::Scalar(cfg.bias_prior_ratio / cfg.sigma_accel)),
        )?;
        problem.add_residual(
            ResidualBlock::new(vec![bg], 3, move |ps: &[Param]| {
                (ps[0].as_vec3() - prior_g).as_slice().to_vec()
            })
            .with_weight(Weight::Scalar(cfg.bias_prior_ratio / cfg.sigma_gyro)),
        )?;

        let report = solver::solve(&mut problem, &cfg.solver_options())?;
        blocks.write_back(&problem, traj, &window.active_ids);
        self.bias = ImuBias::new(problem.value(ba).as_vec3(), problem.value(bg).as_vec3());
        Ok(report)
    }

    fn make_keyscan(&self, scan_id: u64, scan: &Scan, features: &[Feature]) -> Result<KeyScan> {
        let traj = self.traj.as_ref().expect("initialized");
        let mut edges = Vec::new();
        let mut planes = Vec::new();
        for f in features {
            let p = lidar::undistort_point(traj, &self.ext, scan.t_start, &f.point)?;
            match f.kind {
                FeatureKind::Edge => edges.push(p),
                FeatureKind::Planar => planes.push(p),
            }
        }
        Ok(KeyScan {
            id: scan_id,
            t: scan.t_start,
            pose: traj.pose_at(scan.t_start)?,
            lidar_pose: traj.lidar_pose_at(&self.ext, scan.t_start)?,
            edges,
            planes,
        })
    }
}

pub fn biases_to_csv(rows: &[(u64, ImuBias)]) -> String {
    let mut s = format!("{BIAS_CSV_HEADER}\n");
    for (id, b) in rows {
        let (a, g) = (b.accel_bias, b.gyro_bias);
        let _ = writeln!(
            s,
            "{},{}",
            id,
            io::join(&[a.x, a.y, a.z, g.x, g.y, g.z], ",")
        );
    }
    s
}

pub fn biases_from_csv(text: &str, path: &Path) -> Result<Vec<(u64, ImuBias)>> {
    io::expect_header(text, BIAS_CSV_HEADER, path)?;
    io::data_lines(text)
        .skip(1)
        .map(|(lineno, line)| {
            let v = io::parse_fields(line, Some(','), 7, path, lineno)?;
            if v[0] < 0.0 || v[0].fract() != 0.0 {
                return Err(Error::parse(
                    path.display(),
                    lineno,
                    "scan id must be a non-negative integer",
                ));
            }
            Ok((
                v[0] as u64,
                ImuBias::new(Vec3::new(v[1], v[2], v[3]), Vec3::new(v[4], v[5], v[6])),
            ))
        })
        .collect()
}

pub fn read_biases(path: &Path) -> Result<Vec<(u64, ImuBias)>> {
    biases_from_csv(&io::read_to_string(path)?, path)
}

/// Everything a full odometry pass produces.
#[derive(Debug, Clone)]
pub struct OdometryRun {
    pub trajectory: Trajectory,
    pub reports: Vec<ScanReport>,
    pub keyscans: Vec<KeyScan>,
    /// Bias estimate after each scan.
    pub biases: Vec<(u64, ImuBias)>,
}

/// Runs the estimator over `scans` in order; scan ids are their indices and
/// the last scan is always promoted to a key-scan.
pub fn run(
    cfg: &EstimatorConfig,
    ext: Extrinsics,
    imu: Vec<ImuMeasurement>,
    scans: &[Scan],
    timing: bool,
) -> Result<OdometryRun> {
    if scans.is_empty() {
        return Err(Error::InvalidArgument("no scans to process".into()));
    }
    let mut odo = Odometry::new(cfg.clone(), ext, imu)?;
    odo.set_timing(timing);
    let mut reports = Vec::with_capacity(scans.len());
    let mut biases = Vec::with_capacity(scans.len());
    for (i, scan) in scans.iter().enumerate() {
        let id = i as u64;
        reports.push(odo.process_scan(id, scan, i + 1 == scans.len())?);
        biases.push((id, odo.bias));
    }
    Ok(OdometryRun {
        trajectory: odo.traj.take().expect("initialized"),
        reports,
        keyscans: std::mem::take(&mut odo.keyscans),
        biases,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bspline::KnotGrid;

    #[test]
    fn biases_round_trip() {
        let rows = vec![(
            3,
            ImuBias::new(Vec3::new(0.1, -0.2, 1.0 / 3.0), Vec3::new(1e-3, 0.0, -2e-3)),
        )];
        let back = biases_from_csv(&biases_to_csv(&rows), Path::new("b")).unwrap();
        assert_eq!(back, rows);
    }

    #[test]
    fn keyscan_gates() {
        let cfg = EstimatorConfig::default();
        let p = RigidTransform::identity();
        assert!(select_keyscan(&cfg, None, 0.0, &p));
        assert!(!select_keyscan(&cfg, Some((0.0, &p)), 0.1, &p));
        let moved = RigidTransform::new(Rotation::identity(), Vec3::new(0.3, 0.0, 0.0));
        assert!(select_keyscan(&cfg, Some((0.0, &p)), 0.1, &moved));
        let turned = RigidTransform::new(Rotation::from_euler(0.0, 0.0, 0.2), Vec3::zeros());
        assert!(select_keyscan(&cfg, Some((0.0, &p)), 0.1, &turned));
        assert!(select_keyscan(&cfg, Some((0.0, &p)), 1.5, &p));
    }

    fn keyscan_at(id: u64, x: f64) -> KeyScan {
        let pose = RigidTransform::new(Rotation::identity(), Vec3::new(x, 0.0, 0.0));
        KeyScan {
            id,
            t: id as f64,
            pose,
            lidar_pose: pose,
            edges: vec![],
            planes: vec![Vec3::zeros()],
        }
    }

    #[test]
    fn submap_membership() {
        let cfg = EstimatorConfig::default();
        let three: Vec<KeyScan> = (0..3).map(|i| keyscan_at(i, i as f64)).collect();
        assert_eq!(submap_members(&cfg, &three, &Vec3::zeros()), vec![0, 1, 2]);
        let far: Vec<KeyScan> = (0..15).map(|i| keyscan_at(i, 100.0 * i as f64)).collect();
        assert_eq!(
            submap_members(&cfg, &far, &Vec3::new(1400.0, 0.0, 0.0)),
            (5..15).collect::<Vec<u64>>()
        );
        assert_eq!(
            submap_members(&cfg, &far, &Vec3::new(5.0, 0.0, 0.0)),
            std::iter::once(0).chain(5..15).collect::<Vec<u64>>()
        );
        let sub = build_submap(&far, &[0, 5]);
        assert_eq!(sub.planes.len(), 2);
        assert!(sub.edges.is_empty());
    }

    #[test]
    fn config_round_trip_and_errors() {
        let cfg = EstimatorConfig {
            knot_dt: 0.1,
            submap_size: 4,
            ..EstimatorConfig::default()
        };
        assert_eq!(
            EstimatorConfig::from_text(&cfg.to_text(), Path::new("c")).unwrap(),
            cfg
        );
        assert!(matches!(
            EstimatorConfig::from_text("nope = 2", Path::new("c")),
            Err(Error::UnknownConfigKey(_))
        ));
        assert!(matches!(
            EstimatorConfig::from_text("knot_dt = -1", Path::new("c")),
            Err(Error::InvalidConfigValue { .. })
        ));
    }

    #[test]
    fn stationary_init_keeps_last_pose() {
        let pose = RigidTransform::new(
            Rotation::from_euler(0.1, 0.0, 0.3),
            Vec3::new(1.0, 2.0, 0.5),
        );
        let mut traj = Trajectory::constant(0.0, 0.05, 4, 4, pose).unwrap();
        let new = traj.extend_to(0.1);
        let states: Vec<IntegratedState> = (1..=40)
            .map(|j| IntegratedState {
                t: j as f64 * 0.0025,
                rotation: pose.rotation,
                position: pose.translation,
                velocity: Vec3::zeros(),
            })
            .collect();
        initialize_segment(&mut traj, &states, &new).unwrap();
        for i in new {
            assert!((traj.positions()[i] - pose.translation).norm() < 1e-12);
            assert!(traj.rotations()[i].angle_to(&pose.rotation) < 1e-12);
        }
    }

    #[test]
    fn empty_states_leave_seed() {
        let grid = KnotGrid::new(0.0, 0.05, 4, 5).unwrap();
        let mut traj =
            Trajectory::new(grid, vec![Vec3::x(); 5], vec![Rotation::identity(); 5]).unwrap();
        let before = traj.clone();
        assert!(initialize_segment(&mut traj, &[], &[4]).unwrap().is_none());
        assert_eq!(traj, before);
    }
}
