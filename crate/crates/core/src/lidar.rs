//! Spinning-LiDAR scans: curvature features, continuous-time undistortion,
//! submap association and point-to-plane / point-to-line residuals.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::SymmetricEigen;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{Mat3, RigidTransform, Vec3};
use crate::io;
use crate::kdtree::KdTree;
use crate::trajectory::{Extrinsics, Trajectory};

pub const SCAN_CSV_HEADER: &str = "tau,x,y,z,ring";
pub const SCAN_INDEX_HEADER: &str = "t_start,period,path";

/// Neighbours on each side used by the curvature estimate.
pub const CURVATURE_HALF_WINDOW: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawPoint {
    /// Offset from the scan start, seconds.
    pub tau: f64,
    /// Position in the instantaneous LiDAR frame.
    pub xyz: Vec3,
    pub ring: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scan {
    pub t_start: f64,
    pub period: f64,
    pub points: Vec<RawPoint>,
}

impl Scan {
    pub fn t_end(&self) -> f64 {
        self.t_start + self.period
    }

    /// Point indices grouped by ring, ascending ring id, each in scan order.
    pub fn rings(&self) -> Vec<(u32, Vec<usize>)> {
        let mut rings: Vec<(u32, Vec<usize>)> = Vec::new();
        let mut order: Vec<usize> = (0..self.points.len()).collect();
        order.sort_by_key(|&i| (self.points[i].ring, i));
        for i in order {
            let ring = self.points[i].ring;
            match rings.last_mut() {
                Some((r, v)) if *r == ring => v.push(i),
                _ => rings.push((ring, vec![i])),
            }
        }
        rings
    }

    /// Same points with every timestamp collapsed to the scan start.
    pub fn rigid(&self) -> Scan {
        let mut s = self.clone();
        s.points.iter_mut().for_each(|p| p.tau = 0.0);
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeatureKind {
    Edge,
    Planar,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Feature {
    pub kind: FeatureKind,
    pub point: RawPoint,
    pub curvature: f64,
    /// Index into the source scan.
    pub index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureConfig {
    pub edge_threshold: f64,
    pub planar_threshold: f64,
    pub sectors: usize,
    pub edges_per_sector: usize,
    pub planar_per_sector: usize,
    /// A neighbourhood is discarded when two consecutive returns are farther
    /// apart than this fraction of the range (occlusions, dropped returns).
    pub max_gap_ratio: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            edge_threshold: 0.01,
            planar_threshold: 0.005,
            sectors: 6,
            edges_per_sector: 2,
            planar_per_sector: 10,
            max_gap_ratio: 0.1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureSet {
    pub features: Vec<Feature>,
    /// Rings with too few returns for the curvature window.
    pub skipped_rings: usize,
}

impl FeatureSet {
    pub fn of_kind(&self, kind: FeatureKind) -> impl Iterator<Item = &Feature> {
        self.features.iter().filter(move |f| f.kind == kind)
    }
}

/// `‖Σ (x_n − x)‖ / (10‖x‖)` over the five returns on either side.
pub fn curvature(ring: &[Vec3], i: usize) -> Option<f64> {
    let w = CURVATURE_HALF_WINDOW;
    if i < w || i + w >= ring.len() {
        return None;
    }
    let x = ring[i];
    let mut sum = Vec3::zeros();
    for p in &ring[i - w..=i + w] {
        sum += p - x;
    }
    Some(sum.norm() / (2.0 * w as f64 * x.norm()))
}

fn window_is_contiguous(ring: &[Vec3], i: usize, max_gap_ratio: f64) -> bool {
    let w = CURVATURE_HALF_WINDOW;
    let limit = max_gap_ratio * ring[i].norm();
    (i - w..i + w).all(|n| (ring[n + 1] - ring[n]).norm() <= limit)
}

/// Curvature-ranked edge and planar features with per-sector quotas.
pub fn extract_features(scan: &Scan, cfg: &FeatureConfig) -> FeatureSet {
    let w = CURVATURE_HALF_WINDOW;
    let mut out = FeatureSet::default();
    for (_, idx) in scan.rings() {
        if idx.len() < 2 * w + 1 {
            out.skipped_rings += 1;
            continue;
        }
        let xyz: Vec<Vec3> = idx.iter().map(|&i| scan.points[i].xyz).collect();
        let curv: Vec<Option<f64>> = (0..xyz.len())
            .map(|i| {
                curvature(&xyz, i).filter(|_| window_is_contiguous(&xyz, i, cfg.max_gap_ratio))
            })
            .collect();
        let mut taken = vec![false; xyz.len()];
        let (lo, hi) = (w, xyz.len() - w);
        let sectors = cfg.sectors.max(1);
        for s in 0..sectors {
            let a = lo + (hi - lo) * s / sectors;
            let b = lo + (hi - lo) * (s + 1) / sectors;
            let mut ranked: Vec<(f64, usize)> =
                (a..b).filter_map(|i| curv[i].map(|c| (c, i))).collect();
            ranked.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
            let mut picked = Vec::new();
            for &(c, i) in &ranked {
                if picked.len() >= cfg.edges_per_sector || c <= cfg.edge_threshold {
                    break;
                }
                if !taken[i] {
                    picked.push((FeatureKind::Edge, c, i));
                    suppress(&mut taken, i, w);
                }
            }
            let mut planar = 0;
            for &(c, i) in ranked.iter().rev() {
                if planar >= cfg.planar_per_sector || c >= cfg.planar_threshold {
                    break;
                }
                if !taken[i] {
                    picked.push((FeatureKind::Planar, c, i));
                    suppress(&mut taken, i, w);
                    planar += 1;
                }
            }
            picked.sort_by_key(|p| p.2);
            for (kind, c, i) in picked {
                out.features.push(Feature {
                    kind,
                    point: scan.points[idx[i]],
                    curvature: c,
                    index: idx[i],
                });
            }
        }
    }
    out
}

fn suppress(taken: &mut [bool], i: usize, w: usize) {
    let a = i.saturating_sub(w);
    let b = (i + w + 1).min(taken.len());
    taken[a..b].iter_mut().for_each(|t| *t = true);
}

/// `^{L_k}x = ^G_L T(t_k)⁻¹ · ^G_L T(t_k + τ) · x`.
pub fn undistort_point(
    traj: &Trajectory,
    ext: &Extrinsics,
    t_start: f64,
    p: &RawPoint,
) -> Result<Vec3> {
    let start = traj.lidar_pose_at(ext, t_start)?;
    let at = traj.lidar_pose_at(ext, t_start + p.tau)?;
    Ok(start.inverse().transform_point(&at.transform_point(&p.xyz)))
}

/// Every return of the scan expressed in the LiDAR frame at the scan start.
pub fn undistort_scan(scan: &Scan, traj: &Trajectory, ext: &Extrinsics) -> Result<Vec<Vec3>> {
    let start_inv = traj.lidar_pose_at(ext, scan.t_start)?.inverse();
    scan.points
        .par_iter()
        .map(|p| {
            let at = traj.lidar_pose_at(ext, scan.t_start + p.tau)?;
            Ok(start_inv.transform_point(&at.transform_point(&p.xyz)))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    /// `n·x + d = 0`, unit `n`.
    Plane { normal: Vec3, offset: f64 },
    /// Through `point` along unit `direction`.
    Line { point: Vec3, direction: Vec3 },
}

impl Target {
    /// Signed plane distance or unsigned line distance.
    pub fn distance(&self, x: &Vec3) -> f64 {
        match self {
            Target::Plane { normal, offset } => normal.dot(x) + offset,
            Target::Line { point, direction } => (x - point).cross(direction).norm(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub feature: Feature,
    /// Absolute time of the feature return.
    pub t: f64,
    pub target: Target,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssociationConfig {
    pub neighbors: usize,
    /// Gate on the farthest of the nearest neighbours, metres.
    pub max_neighbor_dist: f64,
    pub max_plane_dist: f64,
    pub min_line_eigen_ratio: f64,
}

impl Default for AssociationConfig {
    fn default() -> Self {
        Self {
            neighbors: 5,
            max_neighbor_dist: 1.0,
            max_plane_dist: 0.2,
            min_line_eigen_ratio: 3.0,
        }
    }
}

/// Feature points in the global frame with one spatial index per kind.
#[derive(Debug, Clone, Default)]
pub struct Submap {
    pub keyscan_ids: Vec<u64>,
    pub edges: KdTree,
    pub planes: KdTree,
}

impl Submap {
    pub fn new(keyscan_ids: Vec<u64>, edges: Vec<Vec3>, planes: Vec<Vec3>) -> Self {
        Self {
            keyscan_ids,
            edges: KdTree::new(edges),
            planes: KdTree::new(planes),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty() && self.planes.is_empty()
    }

    /// All points for export.
    pub fn points(&self) -> impl Iterator<Item = (&Vec3, FeatureKind)> {
        self.edges
            .points()
            .iter()
            .map(|p| (p, FeatureKind::Edge))
            .chain(
                self.planes
                    .points()
                    .iter()
                    .map(|p| (p, FeatureKind::Planar)),
            )
    }
}

/// Eigen-decomposition of the neighbourhood covariance, ascending eigenvalues.
fn principal_axes(points: &[Vec3]) -> (Vec3, [f64; 3], [Vec3; 3]) {
    let n = points.len() as f64;
    let c = points.iter().fold(Vec3::zeros(), |a, p| a + p) / n;
    let cov = points
        .iter()
        .fold(Mat3::zeros(), |a, p| a + (p - c) * (p - c).transpose())
        / n;
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = order.map(|i| eig.eigenvalues[i]);
    let vecs = order.map(|i| eig.eigenvectors.column(i).into_owned());
    (c, vals, vecs)
}

/// Flips `v` so its largest-magnitude component is positive.
fn canonical_sign(v: Vec3) -> Vec3 {
    if v[v.iamax()] < 0.0 {
        -v
    } else {
        v
    }
}

pub fn fit_plane(points: &[Vec3], max_dist: f64) -> Option<Target> {
    if points.len() < 3 {
        return None;
    }
    let (c, _, vecs) = principal_axes(points);
    let normal = canonical_sign(vecs[0].normalize());
    let offset = -normal.dot(&c);
    let plane = Target::Plane { normal, offset };
    points
        .iter()
        .all(|p| plane.distance(p).abs() <= max_dist)
        .then_some(plane)
}

pub fn fit_line(points: &[Vec3], min_ratio: f64) -> Option<Target> {
    if points.len() < 2 {
        return None;
    }
    let (c, vals, vecs) = principal_axes(points);
    (vals[2] >= min_ratio * vals[1] && vals[2] > 0.0).then(|| Target::Line {
        point: c,
        direction: canonical_sign(vecs[2].normalize()),
    })
}

/// Target for one point already mapped into the submap frame.
pub fn match_point(
    kind: FeatureKind,
    x_g: &Vec3,
    submap: &Submap,
    cfg: &AssociationConfig,
) -> Option<Target> {
    let tree = match kind {
        FeatureKind::Edge => &submap.edges,
        FeatureKind::Planar => &submap.planes,
    };
    let nn = tree.nearest(x_g, cfg.neighbors);
    if nn.len() < cfg.neighbors {
        return None;
    }
    if nn.last()?.dist_sq > cfg.max_neighbor_dist * cfg.max_neighbor_dist {
        return None;
    }
    let pts: Vec<Vec3> = nn.iter().map(|n| *tree.point(n.index)).collect();
    match kind {
        FeatureKind::Planar => fit_plane(&pts, cfg.max_plane_dist),
        FeatureKind::Edge => fit_line(&pts, cfg.min_line_eigen_ratio),
    }
}

/// Maps each feature by the guessed pose at its own timestamp and fits its
/// neighbourhood in the submap; features that fail a gate are dropped.
pub fn associate(
    features: &[Feature],
    t_start: f64,
    submap: &Submap,
    traj: &Trajectory,
    ext: &Extrinsics,
    cfg: &AssociationConfig,
) -> Result<Vec<Correspondence>> {
    if submap.is_empty() {
        return Ok(Vec::new());
    }
    let matched: Result<Vec<Option<Correspondence>>> = features
        .par_iter()
        .map(|f| {
            let t = t_start + f.point.tau;
            let x_g = traj.lidar_pose_at(ext, t)?.transform_point(&f.point.xyz);
            Ok(
                match_point(f.kind, &x_g, submap, cfg).map(|target| Correspondence {
                    feature: *f,
                    t,
                    target,
                }),
            )
        })
        .collect();
    Ok(matched?.into_iter().flatten().collect())
}

/// Residual of a correspondence under the lidar pose `pose` at the feature time.
pub fn residual_at(c: &Correspondence, pose: &RigidTransform) -> f64 {
    c.target
        .distance(&pose.transform_point(&c.feature.point.xyz))
}

pub fn lidar_residual(c: &Correspondence, traj: &Trajectory, ext: &Extrinsics) -> Result<f64> {
    Ok(residual_at(c, &traj.lidar_pose_at(ext, c.t)?))
}

pub fn scan_to_csv(scan: &Scan) -> String {
    let mut s = String::with_capacity(scan.points.len() * 64);
    s.push_str(SCAN_CSV_HEADER);
    s.push('\n');
    for p in &scan.points {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            p.tau, p.xyz.x, p.xyz.y, p.xyz.z, p.ring
        );
    }
    s
}

pub fn scan_from_csv(
    text: &str,
    path: &Path,
    scan_id: usize,
    t_start: f64,
    period: f64,
) -> Result<Scan> {
    io::expect_header(text, SCAN_CSV_HEADER, path).map_err(|e| corrupt(scan_id, e))?;
    let mut points = Vec::new();
    for (lineno, line) in io::data_lines(text).skip(1) {
        let v =
            io::parse_fields(line, Some(','), 5, path, lineno).map_err(|e| corrupt(scan_id, e))?;
        if v[4] < 0.0 || v[4].fract() != 0.0 {
            return Err(Error::CorruptScan {
                scan_id,
                msg: format!("line {lineno}: ring must be a non-negative integer"),
            });
        }
        if !(0.0..period).contains(&v[0]) {
            return Err(Error::CorruptScan {
                scan_id,
                msg: format!("line {lineno}: tau {} outside [0, {period})", v[0]),
            });
        }
        points.push(RawPoint {
            tau: v[0],
            xyz: Vec3::new(v[1], v[2], v[3]),
            ring: v[4] as u32,
        });
    }
    let scan = Scan {
        t_start,
        period,
        points,
    };
    for (ring, idx) in scan.rings() {
        if idx
            .windows(2)
            .any(|w| scan.points[w[1]].tau < scan.points[w[0]].tau)
        {
            return Err(Error::CorruptScan {
                scan_id,
                msg: format!("ring {ring} is not ordered by tau"),
            });
        }
    }
    Ok(scan)
}

fn corrupt(scan_id: usize, e: Error) -> Error {
    Error::CorruptScan {
        scan_id,
        msg: e.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanEntry {
    pub t_start: f64,
    pub period: f64,
    /// Relative to the index file's directory.
    pub path: PathBuf,
}

pub fn scan_index_to_text(entries: &[ScanEntry]) -> String {
    let mut s = format!("{SCAN_INDEX_HEADER}\n");
    for e in entries {
        let _ = writeln!(s, "{},{},{}", e.t_start, e.period, e.path.display());
    }
    s
}

pub fn scan_index_from_text(text: &str, path: &Path) -> Result<Vec<ScanEntry>> {
    io::expect_header(text, SCAN_INDEX_HEADER, path)?;
    let mut out = Vec::new();
    for (lineno, line) in io::data_lines(text).skip(1) {
        let fields: Vec<&str> = line.splitn(3, ',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(Error::parse(
                path.display(),
                lineno,
                "expected t_start,period,path",
            ));
        }
        let num = |s: &str| {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::parse(path.display(), lineno, format!("bad number `{s}`")))
        };
        let entry = ScanEntry {
            t_start: num(fields[0])?,
            period: num(fields[1])?,
            path: PathBuf::from(fields[2]),
        };
        if entry.period <= 0.0 {
            return Err(Error::parse(
                path.display(),
                lineno,
                "period must be positive",
            ));
        }
        if let Some(prev) = out.last().map(|e: &ScanEntry| e.t_start) {
            if entry.t_start <= prev {
                return Err(Error::NonMonotoneTime {
                    prev,
                    next: entry.t_start,
                });
            }
        }
        out.push(entry);
    }
    Ok(out)
}

pub fn read_scan_index(path: &Path) -> Result<Vec<ScanEntry>> {
    scan_index_from_text(&io::read_to_string(path)?, path)
}

/// Reads scan `scan_id` of an index located in `dir`.
pub fn read_scan(dir: &Path, entry: &ScanEntry, scan_id: usize) -> Result<Scan> {
    let path = dir.join(&entry.path);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::CorruptScan {
        scan_id,
        msg: format!("{}: {e}", path.display()),
    })?;
    scan_from_csv(&text, &path, scan_id, entry.t_start, entry.period)
}

pub fn write_scan(path: &Path, scan: &Scan) -> Result<()> {
    io::write_string(path, &scan_to_csv(scan))
}

/// ASCII PLY with an `intensity` channel.
pub fn ply_to_text(points: &[(Vec3, f64)]) -> String {
    let mut s = String::with_capacity(points.len() * 48 + 200);
    let _ = write!(
        s,
        "ply\nformat ascii 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\nproperty double intensity\nend_header\n",
        points.len()
    );
    for (p, i) in points {
        let _ = writeln!(s, "{} {} {} {}", p.x, p.y, p.z, i);
    }
    s
}

pub fn write_ply(path: &Path, points: &[(Vec3, f64)]) -> Result<()> {
    io::write_string(path, &ply_to_text(points))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Rotation;
    use approx::assert_relative_eq;

    fn ring_scan(points: Vec<Vec3>) -> Scan {
        let n = points.len();
        Scan {
            t_start: 0.0,
            period: 0.1,
            points: points
                .into_iter()
                .enumerate()
                .map(|(i, xyz)| RawPoint {
                    tau: 0.1 * i as f64 / n as f64,
                    xyz,
                    ring: 0,
                })
                .collect(),
        }
    }

    #[test]
    fn plane_residual_definition() {
        let c = Correspondence {
            feature: Feature {
                kind: FeatureKind::Planar,
                point: RawPoint {
                    tau: 0.0,
                    xyz: Vec3::new(1.0, 2.0, 3.0),
                    ring: 0,
                },
                curvature: 0.0,
                index: 0,
            },
            t: 0.0,
            target: Target::Plane {
                normal: Vec3::z(),
                offset: 0.0,
            },
        };
        assert_relative_eq!(residual_at(&c, &RigidTransform::identity()), 3.0);
        let flipped = Target::Plane {
            normal: -Vec3::z(),
            offset: 0.0,
        };
        assert_relative_eq!(flipped.distance(&Vec3::new(1.0, 2.0, 3.0)).abs(), 3.0);
    }

    #[test]
    fn line_residual_definition() {
        let line = Target::Line {
            point: Vec3::zeros(),
            direction: Vec3::x(),
        };
        assert_relative_eq!(line.distance(&Vec3::new(5.0, 0.0, 2.0)), 2.0);
    }

    #[test]
    fn collinear_ring_is_all_planar() {
        let pts: Vec<Vec3> = (0..60)
            .map(|i| Vec3::new(3.0, -1.5 + 0.05 * i as f64, 0.0))
            .collect();
        let fs = extract_features(&ring_scan(pts), &FeatureConfig::default());
        assert!(fs.of_kind(FeatureKind::Edge).next().is_none());
        assert!(fs.of_kind(FeatureKind::Planar).count() > 0);
    }

    #[test]
    fn corner_yields_edge_at_apex() {
        // Two walls meeting at (3, 0, 0), sampled along one ring.
        let mut pts = Vec::new();
        for i in 0..40 {
            pts.push(Vec3::new(
                3.0 - 0.05 * (40 - i) as f64,
                -0.05 * (40 - i) as f64,
                0.0,
            ));
        }
        for i in 0..40 {
            pts.push(Vec3::new(3.0 - 0.05 * i as f64, 0.05 * i as f64, 0.0));
        }
        let fs = extract_features(&ring_scan(pts.clone()), &FeatureConfig::default());
        let edges: Vec<&Feature> = fs.of_kind(FeatureKind::Edge).collect();
        assert!(!edges.is_empty());
        for e in edges {
            assert!(
                (e.point.xyz - Vec3::new(3.0, 0.0, 0.0)).norm() < 0.15,
                "{e:?}"
            );
        }
    }

    #[test]
    fn short_rings_are_counted() {
        let fs = extract_features(&ring_scan(vec![Vec3::x(); 7]), &FeatureConfig::default());
        assert_eq!(fs.skipped_rings, 1);
        assert!(fs.features.is_empty());
    }

    #[test]
    fn plane_fit_and_gates() {
        let pts = [
            Vec3::new(0.0, 0.0, 1.0),
            Vec3::new(1.0, 0.0, 1.0),
            Vec3::new(0.0, 1.0, 1.0),
            Vec3::new(1.0, 1.0, 1.0),
            Vec3::new(0.5, 0.5, 1.0),
        ];
        let Some(Target::Plane { normal, offset }) = fit_plane(&pts, 0.2) else {
            panic!()
        };
        assert_relative_eq!(normal, Vec3::z(), epsilon = 1e-12);
        assert_relative_eq!(offset, -1.0, epsilon = 1e-12);
        let mut bad = pts;
        bad[4].z = 2.0;
        assert!(fit_plane(&bad, 0.2).is_none());
    }

    #[test]
    fn line_fit_requires_dominant_direction() {
        let line: Vec<Vec3> = (0..5)
            .map(|i| Vec3::new(i as f64 * 0.1, 0.001 * (i % 2) as f64, 0.0))
            .collect();
        assert!(matches!(fit_line(&line, 3.0), Some(Target::Line { .. })));
        let blob = [Vec3::x(), -Vec3::x(), Vec3::y(), -Vec3::y(), Vec3::zeros()];
        assert!(fit_line(&blob, 3.0).is_none());
    }

    #[test]
    fn far_features_are_rejected() {
        let grid: Vec<Vec3> = (0..25)
            .map(|i| Vec3::new((i % 5) as f64 * 0.1, (i / 5) as f64 * 0.1, 0.0))
            .collect();
        let submap = Submap::new(vec![0], Vec::new(), grid);
        let cfg = AssociationConfig::default();
        let on = match_point(
            FeatureKind::Planar,
            &Vec3::new(0.2, 0.2, 0.0),
            &submap,
            &cfg,
        )
        .unwrap();
        assert_relative_eq!(on.distance(&Vec3::new(0.2, 0.2, 0.0)), 0.0, epsilon = 1e-12);
        assert!(match_point(
            FeatureKind::Planar,
            &Vec3::new(0.2, 0.2, 1.5),
            &submap,
            &cfg
        )
        .is_none());
    }

    #[test]
    fn undistort_identity_cases() {
        let traj = Trajectory::constant(
            0.0,
            0.05,
            4,
            8,
            RigidTransform::new(
                Rotation::from_euler(0.1, 0.2, 0.3),
                Vec3::new(1.0, 2.0, 3.0),
            ),
        )
        .unwrap();
        let scan = ring_scan(
            (0..20)
                .map(|i| Vec3::new(2.0, i as f64 * 0.1, 0.5))
                .collect(),
        );
        let out = undistort_scan(&scan, &traj, &Extrinsics::identity()).unwrap();
        for (p, q) in scan.points.iter().zip(&out) {
            assert!((p.xyz - q).norm() < 1e-12);
        }
    }

    #[test]
    fn scan_csv_round_trip() {
        let scan = ring_scan(
            (0..20)
                .map(|i| Vec3::new(2.0, i as f64 * 0.1, 1.0 / 3.0))
                .collect(),
        );
        let text = scan_to_csv(&scan);
        let back = scan_from_csv(&text, Path::new("s.csv"), 4, 0.0, 0.1).unwrap();
        assert_eq!(back, scan);
        let broken = text.replace("0.1,", "x,");
        assert!(matches!(
            scan_from_csv(&broken, Path::new("s.csv"), 4, 0.0, 0.1),
            Err(Error::CorruptScan { scan_id: 4, .. })
        ));
    }

    #[test]
    fn scan_index_round_trip() {
        let entries = vec![
            ScanEntry {
                t_start: 1.0,
                period: 0.1,
                path: "scans/scan_000000.csv".into(),
            },
            ScanEntry {
                t_start: 1.1,
                period: 0.1,
                path: "scans/scan_000001.csv".into(),
            },
        ];
        let text = scan_index_to_text(&entries);
        assert_eq!(
            scan_index_from_text(&text, Path::new("i")).unwrap(),
            entries
        );
    }
}
