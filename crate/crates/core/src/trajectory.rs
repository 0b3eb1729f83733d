//! Split-representation trajectory: an R³ spline for position and an SO(3)
//! spline for orientation on one shared knot grid.
//!
//! Frames: `{G}` global, `{I}` IMU body, `{L}` LiDAR.

use std::fmt::Write as _;
use std::ops::Range;
use std::path::Path;

use crate::bspline::{self, KnotGrid, SplineR3, SplineSO3};
use crate::error::{Error, Result};
use crate::geometry::{RigidTransform, Rotation, Vec3};
use crate::io;

/// `^I_L T`, fixed over a run.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Extrinsics {
    pub imu_to_lidar: RigidTransform,
}

impl Extrinsics {
    pub fn new(imu_to_lidar: RigidTransform) -> Self {
        Self { imu_to_lidar }
    }

    pub fn identity() -> Self {
        Self::default()
    }
}

/// Full kinematic state at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryState {
    pub rotation: Rotation,
    pub position: Vec3,
    /// global frame, m/s
    pub velocity: Vec3,
    /// global frame, m/s²
    pub acceleration: Vec3,
    /// body frame, rad/s
    pub angular_velocity: Vec3,
}

impl TrajectoryState {
    pub fn pose(&self) -> RigidTransform {
        RigidTransform::new(self.rotation, self.position)
    }
}

/// Control-point bookkeeping for one estimation window.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentWindow {
    pub active_range: (f64, f64),
    /// Segments intersecting the active range.
    pub active_segments: Range<usize>,
    pub active_ids: Vec<usize>,
    /// Earlier control points sharing support with the active basis functions.
    pub static_ids: Vec<usize>,
}

impl SegmentWindow {
    /// First segment touched by any active basis function (start of the static segments).
    pub fn first_support_segment(&self) -> usize {
        self.static_ids
            .first()
            .copied()
            .unwrap_or(self.active_segments.start)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pos: SplineR3,
    rot: SplineSO3,
}

impl Trajectory {
    pub fn new(grid: KnotGrid, positions: Vec<Vec3>, rotations: Vec<Rotation>) -> Result<Self> {
        if grid.n_control() < grid.order() {
            return Err(Error::InvalidArgument(format!(
                "a trajectory needs at least {} control points",
                grid.order()
            )));
        }
        Ok(Self {
            pos: SplineR3::new(grid, positions)?,
            rot: SplineSO3::new(grid, rotations)?,
        })
    }

    /// `n` control points all equal to `pose`.
    pub fn constant(
        t0: f64,
        dt: f64,
        order: usize,
        n: usize,
        pose: RigidTransform,
    ) -> Result<Self> {
        let grid = KnotGrid::new(t0, dt, order, n)?;
        Self::new(grid, vec![pose.translation; n], vec![pose.rotation; n])
    }

    pub fn grid(&self) -> &KnotGrid {
        self.pos.grid()
    }

    pub fn order(&self) -> usize {
        self.grid().order()
    }

    pub fn num_control(&self) -> usize {
        self.grid().n_control()
    }

    /// Closed evaluable interval.
    pub fn range(&self) -> (f64, f64) {
        self.grid().range()
    }

    pub fn position_spline(&self) -> &SplineR3 {
        &self.pos
    }

    pub fn rotation_spline(&self) -> &SplineSO3 {
        &self.rot
    }

    pub fn positions(&self) -> &[Vec3] {
        self.pos.control_points()
    }

    pub fn rotations(&self) -> &[Rotation] {
        self.rot.control_points()
    }

    pub fn positions_mut(&mut self) -> &mut [Vec3] {
        self.pos.control_points_mut()
    }

    pub fn rotations_mut(&mut self) -> &mut [Rotation] {
        self.rot.control_points_mut()
    }

    /// Control-point indices that determine the trajectory at `t`.
    pub fn controlling(&self, t: f64) -> Result<Range<usize>> {
        let nt = self.grid().normalize(t)?;
        Ok(nt.segment..nt.segment + self.order())
    }

    pub fn state(&self, t: f64) -> Result<TrajectoryState> {
        let (i, basis) = self.grid().basis_at(t)?;
        let k = self.order();
        let r3 = bspline::eval_r3_window(&self.positions()[i..i + k], &basis);
        let so3 = bspline::eval_so3_window(&self.rotations()[i..i + k], &basis);
        Ok(TrajectoryState {
            rotation: so3.rotation,
            position: r3.position,
            velocity: r3.velocity,
            acceleration: r3.acceleration,
            angular_velocity: so3.angular_velocity,
        })
    }

    /// `^G_I T(t)`.
    pub fn pose_at(&self, t: f64) -> Result<RigidTransform> {
        Ok(RigidTransform::new(
            self.rot.eval_rotation(t)?,
            self.pos.eval_position(t)?,
        ))
    }

    /// `^G_L T(t) = ^G_I T(t) · ^I_L T`.
    pub fn lidar_pose_at(&self, ext: &Extrinsics, t: f64) -> Result<RigidTransform> {
        Ok(self.pose_at(t)? * ext.imu_to_lidar)
    }

    /// Appends the fewest control points so that `t_end` becomes evaluable.
    /// New points repeat the last control position and rotation. Returns their indices.
    pub fn extend_to(&mut self, t_end: f64) -> Vec<usize> {
        let (_, t_max) = self.range();
        if self.grid().contains(t_end) || t_end <= t_max {
            return Vec::new();
        }
        let g = *self.grid();
        let segments = ((t_end - g.t0()) / g.dt() - 1e-9).ceil() as usize;
        let needed = segments + g.order() - 1;
        let start = g.n_control();
        let last_p = *self.positions().last().expect("non-empty");
        let last_r = *self.rotations().last().expect("non-empty");
        for _ in start..needed {
            self.pos.push(last_p);
            self.rot.push(last_r);
        }
        (start..needed).collect()
    }

    /// Active/static control points for the half-open interval `[t_a, t_b)`.
    pub fn window_for(&self, t_a: f64, t_b: f64) -> Result<SegmentWindow> {
        let g = self.grid();
        if t_a.is_nan() || t_b.is_nan() || t_b <= t_a {
            return Err(Error::InvalidArgument(format!(
                "empty window [{t_a}, {t_b})"
            )));
        }
        let first = g.normalize(t_a)?;
        g.normalize(t_b)?;
        let (_, t_max) = g.range();
        if t_a >= t_max {
            return Err(Error::OutOfRange {
                t: t_a,
                start: g.t0(),
                end: t_max,
            });
        }
        let k = g.order();
        let s_b = (t_b - g.t0()) / g.dt();
        let last = ((s_b - 1e-9).ceil() as usize)
            .saturating_sub(1)
            .max(first.segment)
            .min(g.n_segments() - 1);
        let active_ids: Vec<usize> = (first.segment..last + k).collect();
        let static_ids: Vec<usize> = (first.segment.saturating_sub(k - 1)..first.segment).collect();
        Ok(SegmentWindow {
            active_range: (t_a, t_b),
            active_segments: first.segment..last + 1,
            active_ids,
            static_ids,
        })
    }

    /// Poses sampled at `rate` Hz from the start of the evaluable range.
    pub fn sample_poses(&self, rate: f64) -> Vec<(f64, RigidTransform)> {
        let (a, b) = self.range();
        let count = ((b - a) * rate + 1e-9).floor() as usize + 1;
        (0..count)
            .map(|j| a + j as f64 / rate)
            .filter_map(|t| self.pose_at(t).ok().map(|p| (t, p)))
            .collect()
    }

    /// Plain-text serialization: a `t0 dt k n` header line followed by
    /// `index tx ty tz qx qy qz qw` rows.
    pub fn to_text(&self) -> String {
        let g = self.grid();
        let mut s = String::from("# t0 dt k n\n");
        let _ = writeln!(s, "{} {} {} {}", g.t0(), g.dt(), g.order(), g.n_control());
        let _ = writeln!(s, "# index tx ty tz qx qy qz qw");
        for (i, (p, r)) in self.positions().iter().zip(self.rotations()).enumerate() {
            let [qx, qy, qz, qw] = r.xyzw();
            let _ = writeln!(s, "{i} {}", io::join(&[p.x, p.y, p.z, qx, qy, qz, qw], " "));
        }
        s
    }

    pub fn from_text(text: &str, path: &Path) -> Result<Self> {
        let mut lines = io::data_lines(text);
        let (hl, header) = lines
            .next()
            .ok_or_else(|| Error::parse(path.display(), 1, "missing header"))?;
        let h: Vec<&str> = header.split_whitespace().collect();
        if h.len() != 4 {
            return Err(Error::parse(
                path.display(),
                hl,
                "header must be `t0 dt k n`",
            ));
        }
        let bad = |m: &str| Error::parse(path.display(), hl, m.to_string());
        let t0: f64 = h[0].parse().map_err(|_| bad("bad t0"))?;
        let dt: f64 = h[1].parse().map_err(|_| bad("bad dt"))?;
        let k: usize = h[2].parse().map_err(|_| bad("bad order"))?;
        let n: usize = h[3].parse().map_err(|_| bad("bad count"))?;
        let grid = KnotGrid::new(t0, dt, k, n)?;
        let mut positions = Vec::with_capacity(n);
        let mut rotations = Vec::with_capacity(n);
        for (lineno, line) in lines {
            let v = io::parse_fields(line, None, 8, path, lineno)?;
            if v[0] as usize != positions.len() {
                return Err(Error::parse(
                    path.display(),
                    lineno,
                    "control points out of order",
                ));
            }
            positions.push(Vec3::new(v[1], v[2], v[3]));
            rotations.push(Rotation::from_quaternion(v[7], v[4], v[5], v[6]));
        }
        if positions.len() != n {
            return Err(Error::parse(
                path.display(),
                hl,
                format!(
                    "header declares {n} control points, found {}",
                    positions.len()
                ),
            ));
        }
        Self::new(grid, positions, rotations)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        io::write_string(path, &self.to_text())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_text(&io::read_to_string(path)?, path)
    }
}

/// TUM rows: `t tx ty tz qx qy qz qw`.
pub fn tum_to_text(poses: &[(f64, RigidTransform)]) -> String {
    let mut s = String::new();
    for (t, pose) in poses {
        let p = pose.translation;
        let [qx, qy, qz, qw] = pose.rotation.xyzw();
        let _ = writeln!(s, "{}", io::join(&[*t, p.x, p.y, p.z, qx, qy, qz, qw], " "));
    }
    s
}

pub fn tum_from_text(text: &str, path: &Path) -> Result<Vec<(f64, RigidTransform)>> {
    io::data_lines(text)
        .map(|(lineno, line)| {
            let v = io::parse_fields(line, None, 8, path, lineno)?;
            Ok((
                v[0],
                RigidTransform::new(
                    Rotation::from_quaternion(v[7], v[4], v[5], v[6]),
                    Vec3::new(v[1], v[2], v[3]),
                ),
            ))
        })
        .collect()
}

pub fn write_tum(path: &Path, poses: &[(f64, RigidTransform)]) -> Result<()> {
    io::write_string(path, &tum_to_text(poses))
}

pub fn read_tum(path: &Path) -> Result<Vec<(f64, RigidTransform)>> {
    tum_from_text(&io::read_to_string(path)?, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_traj(seed: u64, n: usize) -> Trajectory {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let grid = KnotGrid::new(2.0, 0.1, 4, n).unwrap();
        let mut v = || {
            Vec3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            )
        };
        let positions = (0..n).map(|_| v()).collect();
        let rotations = (0..n).map(|_| Rotation::exp(&v())).collect();
        Trajectory::new(grid, positions, rotations).unwrap()
    }

    #[test]
    fn identity_trajectory_pose() {
        let t = Trajectory::constant(0.0, 0.1, 4, 6, RigidTransform::identity()).unwrap();
        let p = t.pose_at(0.17).unwrap();
        assert_eq!(p, RigidTransform::identity());
        let ext = Extrinsics::new(RigidTransform::new(
            Rotation::exp(&Vec3::new(0.0, 0.1, 0.2)),
            Vec3::new(0.1, 0.0, 0.3),
        ));
        let lp = t.lidar_pose_at(&ext, 0.17).unwrap();
        assert!(lp.rotation.angle_to(&ext.imu_to_lidar.rotation) < 1e-15);
        assert_eq!(lp.translation, ext.imu_to_lidar.translation);
    }

    #[test]
    fn pose_components_and_extrinsics() {
        let t = random_traj(1, 10);
        let time = 2.33;
        let pose = t.pose_at(time).unwrap();
        assert_eq!(
            pose.rotation,
            t.rotation_spline().eval_rotation(time).unwrap()
        );
        assert_eq!(
            pose.translation,
            t.position_spline().eval_position(time).unwrap()
        );
        let id = pose.inverse() * pose;
        assert!(id.translation.norm() < 1e-12 && id.rotation.log().norm() < 1e-12);

        assert_eq!(
            t.lidar_pose_at(&Extrinsics::identity(), time).unwrap(),
            pose
        );
        let ext = Extrinsics::new(RigidTransform::new(
            Rotation::exp(&Vec3::new(0.3, 0.1, 0.2)),
            Vec3::new(0.1, -0.2, 0.3),
        ));
        let lp = t.lidar_pose_at(&ext, time).unwrap();
        let product = pose.matrix() * ext.imu_to_lidar.matrix();
        assert!((lp.matrix() - product).norm() < 1e-12);
    }

    #[test]
    fn extend_counts() {
        let mut t = Trajectory::constant(0.0, 0.1, 4, 4, RigidTransform::identity()).unwrap();
        let (_, end) = t.range();
        assert_eq!(t.extend_to(end + 0.1), vec![4]);
        let (_, end) = t.range();
        assert_eq!(t.extend_to(end + 0.35), vec![5, 6, 7, 8]);
        let (_, end) = t.range();
        assert!(t.extend_to(end - 0.05).is_empty());
        assert!(t.extend_to(end).is_empty());
    }

    #[test]
    fn extend_preserves_old_range_and_is_idempotent() {
        let mut t = random_traj(4, 8);
        let (a, b) = t.range();
        let samples: Vec<_> = (0..=20).map(|i| a + (b - a) * i as f64 / 20.0).collect();
        let before: Vec<_> = samples.iter().map(|&s| t.state(s).unwrap()).collect();
        let ids = t.extend_to(b + 0.27);
        assert_eq!(ids.len(), 3);
        let snapshot = t.clone();
        assert!(t.extend_to(b + 0.27).is_empty());
        assert_eq!(t, snapshot);
        // strictly interior samples keep their controlling window
        for (s, old) in samples.iter().zip(&before).take(20) {
            assert_eq!(t.state(*s).unwrap(), *old);
        }
        // new points repeat the last one
        assert_eq!(t.positions()[8], t.positions()[7]);
        assert_eq!(t.rotations()[10], t.rotations()[7]);
    }

    #[test]
    fn window_sets() {
        let t = random_traj(2, 20);
        let g = *t.grid();
        let w = t.window_for(g.knot_time(6), g.knot_time(7)).unwrap();
        assert_eq!(w.active_ids, vec![6, 7, 8, 9]);
        assert_eq!(w.static_ids, vec![3, 4, 5]);
        let w = t.window_for(g.knot_time(6), g.knot_time(8)).unwrap();
        assert_eq!(w.active_ids, vec![6, 7, 8, 9, 10]);
        let w = t.window_for(g.knot_time(1) + 0.01, g.knot_time(2)).unwrap();
        assert_eq!(w.static_ids, vec![0]);
        assert_eq!(
            t.window_for(g.knot_time(6), g.knot_time(8)).unwrap(),
            w2(&t)
        );
        assert!(t.window_for(1.0, 2.5).is_err());

        fn w2(t: &Trajectory) -> SegmentWindow {
            let g = t.grid();
            t.window_for(g.knot_time(6), g.knot_time(8)).unwrap()
        }
    }

    #[test]
    fn perturbing_window_points_is_local() {
        let t = random_traj(3, 20);
        let g = *t.grid();
        let w = t.window_for(g.knot_time(8), g.knot_time(10)).unwrap();
        let mut moved = t.clone();
        for &i in w.active_ids.iter().chain(&w.static_ids) {
            moved.positions_mut()[i] += Vec3::new(0.5, 0.5, 0.5);
            moved.rotations_mut()[i] = Rotation::exp(&Vec3::new(0.0, 0.0, 1.0));
        }
        let lo = *w.static_ids.first().unwrap();
        let hi = *w.active_ids.last().unwrap();
        // supports of points lo..=hi cover segments lo-3 ..= hi
        for seg in 0..g.n_segments() {
            if seg + 3 < lo || seg > hi {
                let time = g.knot_time(seg) + 0.05;
                assert_eq!(moved.state(time).unwrap(), t.state(time).unwrap());
            }
        }
    }

    #[test]
    fn text_roundtrip_is_lossless() {
        let t = random_traj(7, 12);
        let back = Trajectory::from_text(&t.to_text(), Path::new("mem")).unwrap();
        assert_eq!(back, t);
        let poses = t.sample_poses(100.0);
        let back = tum_from_text(&tum_to_text(&poses), Path::new("mem")).unwrap();
        assert_eq!(back, poses);
    }

    #[test]
    fn sample_count() {
        let t = Trajectory::constant(0.0, 0.1, 4, 13, RigidTransform::identity()).unwrap();
        // range [0, 1.0]
        assert_eq!(t.sample_poses(100.0).len(), 101);
    }
}
