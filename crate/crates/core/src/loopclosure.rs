//! Two-stage loop correction: a pose graph over key-scan poses, then a
//! re-fit of the whole spline to the corrected poses that keeps the original
//! body-frame velocities.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{RigidTransform, Rotation, Vec3};
use crate::io;
use crate::solver::{self, Param, Problem, ResidualBlock, SolveReport, SolverOptions, Weight};
use crate::splinefit::{self, ControlBlocks};
use crate::trajectory::Trajectory;

pub const LOOPS_CSV_HEADER: &str = "id_a,id_b,tx,ty,tz,qx,qy,qz,qw,weight";

/// Pose-anchor terms are weighted this much more than velocity terms.
pub const POSE_ANCHOR_WEIGHT: f64 = 10.0;
pub const VELOCITY_ANCHOR_WEIGHT: f64 = 1.0;

/// Measured `^a T_b` between two key-scans.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoopConstraint {
    pub id_a: u64,
    pub id_b: u64,
    pub relative: RigidTransform,
    pub weight: f64,
}

pub fn loops_to_csv(loops: &[LoopConstraint]) -> String {
    let mut s = format!("{LOOPS_CSV_HEADER}\n");
    for l in loops {
        let t = l.relative.translation;
        let [qx, qy, qz, qw] = l.relative.rotation.xyzw();
        let _ = writeln!(
            s,
            "{},{},{}",
            l.id_a,
            l.id_b,
            io::join(&[t.x, t.y, t.z, qx, qy, qz, qw, l.weight], ",")
        );
    }
    s
}

pub fn loops_from_csv(text: &str, path: &Path) -> Result<Vec<LoopConstraint>> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    io::expect_header(text, LOOPS_CSV_HEADER, path)?;
    let mut out = Vec::new();
    for (lineno, line) in io::data_lines(text).skip(1) {
        let v = io::parse_fields(line, Some(','), 10, path, lineno)?;
        for id in &v[..2] {
            if *id < 0.0 || id.fract() != 0.0 {
                return Err(Error::parse(
                    path.display(),
                    lineno,
                    "ids must be non-negative integers",
                ));
            }
        }
        if v[9] <= 0.0 {
            return Err(Error::parse(
                path.display(),
                lineno,
                "weight must be positive",
            ));
        }
        out.push(LoopConstraint {
            id_a: v[0] as u64,
            id_b: v[1] as u64,
            relative: RigidTransform::new(
                Rotation::from_quaternion(v[8], v[5], v[6], v[7]),
                Vec3::new(v[2], v[3], v[4]),
            ),
            weight: v[9],
        });
    }
    Ok(out)
}

pub fn write_loops(path: &Path, loops: &[LoopConstraint]) -> Result<()> {
    io::write_string(path, &loops_to_csv(loops))
}

pub fn read_loops(path: &Path) -> Result<Vec<LoopConstraint>> {
    loops_from_csv(&io::read_to_string(path)?, path)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub a: u64,
    pub b: u64,
    pub relative: RigidTransform,
    pub weight: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PoseGraph {
    pub nodes: BTreeMap<u64, RigidTransform>,
    pub edges: Vec<Edge>,
    pub fixed: BTreeSet<u64>,
}

impl PoseGraph {
    /// Chain of odometry edges between consecutive key-scans; the first is fixed.
    pub fn from_keyscans(poses: &[(u64, RigidTransform)]) -> Self {
        let mut g = PoseGraph::default();
        for (id, pose) in poses {
            g.nodes.insert(*id, *pose);
        }
        for w in poses.windows(2) {
            g.edges.push(Edge {
                a: w[0].0,
                b: w[1].0,
                relative: w[0].1.inverse() * w[1].1,
                weight: 1.0,
            });
        }
        if let Some((id, _)) = poses.first() {
            g.fixed.insert(*id);
        }
        g
    }

    pub fn add_loop(&mut self, l: &LoopConstraint) -> Result<()> {
        for id in [l.id_a, l.id_b] {
            if !self.nodes.contains_key(&id) {
                return Err(Error::UnknownKeyScan(id));
            }
        }
        self.edges.push(Edge {
            a: l.id_a,
            b: l.id_b,
            relative: l.relative,
            weight: l.weight,
        });
        Ok(())
    }

    /// Connected components, each sorted, ordered by smallest id.
    pub fn components(&self) -> Vec<Vec<u64>> {
        let ids: Vec<u64> = self.nodes.keys().copied().collect();
        let index: BTreeMap<u64, usize> = ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
        let mut parent: Vec<usize> = (0..ids.len()).collect();
        fn find(p: &mut [usize], mut i: usize) -> usize {
            while p[i] != i {
                p[i] = p[p[i]];
                i = p[i];
            }
            i
        }
        for e in &self.edges {
            let (a, b) = (
                find(&mut parent, index[&e.a]),
                find(&mut parent, index[&e.b]),
            );
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
        let mut groups: BTreeMap<usize, Vec<u64>> = BTreeMap::new();
        for (i, id) in ids.iter().enumerate() {
            let root = find(&mut parent, i);
            groups.entry(root).or_default().push(*id);
        }
        groups.into_values().collect()
    }
}

/// Edge residual `[Log(Zᵀ R_aᵀ R_b); R_aᵀ(p_b − p_a) − z_t]`.
pub fn edge_residual(a: &RigidTransform, b: &RigidTransform, z: &RigidTransform) -> [f64; 6] {
    let rel = a.inverse() * *b;
    let r = (z.rotation.inverse() * rel.rotation).log();
    let t = rel.translation - z.translation;
    [r.x, r.y, r.z, t.x, t.y, t.z]
}

/// Stage one. Edge weights scale the squared residual (information-like).
pub fn optimize_pose_graph(
    graph: &PoseGraph,
    loops: &[LoopConstraint],
    options: &SolverOptions,
) -> Result<(BTreeMap<u64, RigidTransform>, SolveReport)> {
    let mut g = graph.clone();
    for l in loops {
        g.add_loop(l)?;
    }
    let components = g.components();
    if components.len() > 1 {
        return Err(Error::DisconnectedGraph { components });
    }
    if g.fixed.is_empty() {
        if let Some(first) = g.nodes.keys().next().copied() {
            g.fixed.insert(first);
        }
    }
    let mut problem = Problem::new();
    let mut blocks = BTreeMap::new();
    for (id, pose) in &g.nodes {
        let r = problem.add_rotation(pose.rotation);
        let p = problem.add_vec3(pose.translation);
        let fixed = g.fixed.contains(id);
        problem.set_fixed(r, fixed);
        problem.set_fixed(p, fixed);
        blocks.insert(*id, (r, p));
    }
    for e in &g.edges {
        let (ra, pa) = blocks[&e.a];
        let (rb, pb) = blocks[&e.b];
        let z = e.relative;
        problem.add_residual(
            ResidualBlock::new(vec![ra, pa, rb, pb], 6, move |ps: &[Param]| {
                let a = RigidTransform::new(*ps[0].as_rotation(), ps[1].as_vec3());
                let b = RigidTransform::new(*ps[2].as_rotation(), ps[3].as_vec3());
                edge_residual(&a, &b, &z).to_vec()
            })
            .with_weight(Weight::Scalar(e.weight.sqrt())),
        )?;
    }
    let report = solver::solve(&mut problem, options)?;
    let out = blocks
        .iter()
        .map(|(id, (r, p))| {
            (
                *id,
                RigidTransform::new(
                    *problem.value(*r).as_rotation(),
                    problem.value(*p).as_vec3(),
                ),
            )
        })
        .collect();
    Ok((out, report))
}

/// Body-frame velocities sampled from the trajectory before correction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityAnchor {
    pub t: f64,
    /// `R(t)ᵀ v(t)`
    pub v_hat: Vec3,
    pub w_hat: Vec3,
}

/// Default anchor rate: two per knot interval.
pub fn default_anchor_rate(traj: &Trajectory) -> f64 {
    2.0 / traj.grid().dt()
}

/// `floor(span·rate) + 1` anchors at uniform spacing from the range start.
pub fn sample_velocity_anchors(traj: &Trajectory, rate: f64) -> Result<Vec<VelocityAnchor>> {
    if rate.is_nan() || rate <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "anchor rate {rate} must be positive"
        )));
    }
    let (a, b) = traj.range();
    let count = ((b - a) * rate + 1e-9).floor() as usize + 1;
    (0..count)
        .map(|j| {
            let t = (a + j as f64 / rate).min(b);
            let s = traj.state(t)?;
            Ok(VelocityAnchor {
                t,
                v_hat: s.rotation.inverse() * s.velocity,
                w_hat: s.angular_velocity,
            })
        })
        .collect()
}

pub fn stage_two_options() -> SolverOptions {
    SolverOptions {
        max_iter: 30,
        cost_tol: 1e-10,
        ..SolverOptions::default()
    }
}

pub fn pose_graph_options() -> SolverOptions {
    SolverOptions {
        max_iter: 50,
        cost_tol: 1e-12,
        ..SolverOptions::default()
    }
}

/// Stage two: all control points free; pose anchors at the key times and
/// velocity anchors at `anchors`.
pub fn correct_trajectory(
    traj: &Trajectory,
    key_poses: &[(f64, RigidTransform)],
    anchors: &[VelocityAnchor],
    options: &SolverOptions,
) -> Result<(Trajectory, SolveReport)> {
    if key_poses.is_empty() {
        return Err(Error::InvalidArgument("no key poses to anchor to".into()));
    }
    let k = traj.order();
    let all: Vec<usize> = (0..traj.num_control()).collect();
    let mut problem = Problem::new();
    let blocks = ControlBlocks::register(&mut problem, traj, &all, &all);
    for (t, pose) in key_poses {
        let (seg, basis) = splinefit::locate(traj, *t)?;
        let target = *pose;
        problem.add_residual(
            ResidualBlock::new(blocks.window(seg, k), 6, move |ps: &[Param]| {
                let (r3, so3) = splinefit::eval_window(ps, &basis);
                let r = (target.rotation.inverse() * so3.rotation).log();
                let p = r3.position - target.translation;
                vec![r.x, r.y, r.z, p.x, p.y, p.z]
            })
            .with_weight(Weight::Scalar(POSE_ANCHOR_WEIGHT)),
        )?;
    }
    for a in anchors {
        let (seg, basis) = splinefit::locate(traj, a.t)?;
        let a = *a;
        problem.add_residual(
            ResidualBlock::new(blocks.window(seg, k), 6, move |ps: &[Param]| {
                let (r3, so3) = splinefit::eval_window(ps, &basis);
                let v = so3.rotation.inverse() * r3.velocity - a.v_hat;
                let w = so3.angular_velocity - a.w_hat;
                vec![v.x, v.y, v.z, w.x, w.y, w.z]
            })
            .with_weight(Weight::Scalar(VELOCITY_ANCHOR_WEIGHT)),
        )?;
    }
    let report = solver::solve(&mut problem, options)?;
    let mut out = traj.clone();
    blocks.write_back(&problem, &mut out, &all);
    Ok((out, report))
}

/// Unweighted velocity-anchor residual norms of `traj`.
pub fn velocity_anchor_residuals(
    traj: &Trajectory,
    anchors: &[VelocityAnchor],
) -> Result<Vec<f64>> {
    anchors
        .iter()
        .map(|a| {
            let s = traj.state(a.t)?;
            let v = s.rotation.inverse() * s.velocity - a.v_hat;
            let w = s.angular_velocity - a.w_hat;
            Ok((v.norm_squared() + w.norm_squared()).sqrt())
        })
        .collect()
}

/// Key-scan entry as exported by odometry: id, time and IMU pose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyPose {
    pub id: u64,
    pub t: f64,
    pub pose: RigidTransform,
}

pub const KEYSCANS_CSV_HEADER: &str = "id,t,tx,ty,tz,qx,qy,qz,qw";

pub fn keyposes_to_csv(keys: &[KeyPose]) -> String {
    let mut s = format!("{KEYSCANS_CSV_HEADER}\n");
    for k in keys {
        let p = k.pose.translation;
        let [qx, qy, qz, qw] = k.pose.rotation.xyzw();
        let _ = writeln!(
            s,
            "{},{}",
            k.id,
            io::join(&[k.t, p.x, p.y, p.z, qx, qy, qz, qw], ",")
        );
    }
    s
}

pub fn keyposes_from_csv(text: &str, path: &Path) -> Result<Vec<KeyPose>> {
    io::expect_header(text, KEYSCANS_CSV_HEADER, path)?;
    io::data_lines(text)
        .skip(1)
        .map(|(lineno, line)| {
            let v = io::parse_fields(line, Some(','), 9, path, lineno)?;
            if v[0] < 0.0 || v[0].fract() != 0.0 {
                return Err(Error::parse(
                    path.display(),
                    lineno,
                    "id must be a non-negative integer",
                ));
            }
            Ok(KeyPose {
                id: v[0] as u64,
                t: v[1],
                pose: RigidTransform::new(
                    Rotation::from_quaternion(v[8], v[5], v[6], v[7]),
                    Vec3::new(v[2], v[3], v[4]),
                ),
            })
        })
        .collect()
}

pub fn write_keyposes(path: &Path, keys: &[KeyPose]) -> Result<()> {
    io::write_string(path, &keyposes_to_csv(keys))
}

pub fn read_keyposes(path: &Path) -> Result<Vec<KeyPose>> {
    keyposes_from_csv(&io::read_to_string(path)?, path)
}

/// Result of the full two-stage correction.
#[derive(Debug, Clone)]
pub struct Correction {
    pub trajectory: Trajectory,
    /// Key-scan poses re-read from the corrected trajectory.
    pub keyscans: Vec<KeyPose>,
    pub stage_one: SolveReport,
    pub stage_two: SolveReport,
}

/// Stage one then stage two. Anchors are sampled before anything changes.
pub fn correct(
    traj: &Trajectory,
    keys: &[KeyPose],
    loops: &[LoopConstraint],
) -> Result<Correction> {
    if keys.is_empty() {
        return Err(Error::InvalidArgument("no key-scans".into()));
    }
    let anchors = sample_velocity_anchors(traj, default_anchor_rate(traj))?;
    let graph = PoseGraph::from_keyscans(&keys.iter().map(|k| (k.id, k.pose)).collect::<Vec<_>>());
    let (updated, stage_one) = optimize_pose_graph(&graph, loops, &pose_graph_options())?;
    let key_poses: Vec<(f64, RigidTransform)> =
        keys.iter().map(|k| (k.t, updated[&k.id])).collect();
    let (trajectory, stage_two) =
        correct_trajectory(traj, &key_poses, &anchors, &stage_two_options())?;
    let keyscans = keys
        .iter()
        .map(|k| {
            Ok(KeyPose {
                pose: trajectory.pose_at(k.t)?,
                ..*k
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Correction {
        trajectory,
        keyscans,
        stage_one,
        stage_two,
    })
}
