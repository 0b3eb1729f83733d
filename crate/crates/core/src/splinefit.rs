//! Glue between trajectories and the solver: control points as parameter
//! blocks and residuals evaluated from a control-point window.

use crate::bspline::{self, CumulativeBasis, R3State, So3State};
use crate::error::Result;
use crate::geometry::{Rotation, Vec3};
use crate::solver::{BlockId, Param, Problem};
use crate::trajectory::Trajectory;

/// One position and one rotation block per control point.
#[derive(Debug, Clone)]
pub(crate) struct ControlBlocks {
    pub pos: Vec<BlockId>,
    pub rot: Vec<BlockId>,
}

impl ControlBlocks {
    /// Registers every control point in `ids` (ascending, contiguous) and
    /// marks those not in `free` as fixed.
    pub fn register(
        problem: &mut Problem,
        traj: &Trajectory,
        ids: &[usize],
        free: &[usize],
    ) -> Self {
        let mut pos = vec![BlockId(usize::MAX); traj.num_control()];
        let mut rot = vec![BlockId(usize::MAX); traj.num_control()];
        for &i in ids {
            pos[i] = problem.add_vec3(traj.positions()[i]);
            rot[i] = problem.add_rotation(traj.rotations()[i]);
            let fixed = !free.contains(&i);
            problem.set_fixed(pos[i], fixed);
            problem.set_fixed(rot[i], fixed);
        }
        Self { pos, rot }
    }

    /// Blocks for the window starting at control point `segment`: positions then rotations.
    pub fn window(&self, segment: usize, order: usize) -> Vec<BlockId> {
        let mut ids: Vec<BlockId> = self.pos[segment..segment + order].to_vec();
        ids.extend_from_slice(&self.rot[segment..segment + order]);
        debug_assert!(ids.iter().all(|b| b.0 != usize::MAX));
        ids
    }

    /// Copies the solved values of the free control points back.
    pub fn write_back(&self, problem: &Problem, traj: &mut Trajectory, free: &[usize]) {
        for &i in free {
            traj.positions_mut()[i] = problem.value(self.pos[i]).as_vec3();
            traj.rotations_mut()[i] = *problem.value(self.rot[i]).as_rotation();
        }
    }
}

/// Spline state from the parameter slice laid out by [`ControlBlocks::window`].
pub(crate) fn eval_window(params: &[Param], basis: &CumulativeBasis) -> (R3State, So3State) {
    let k = basis.order();
    let mut pos = [Vec3::zeros(); bspline::MAX_ORDER];
    let mut rot = [Rotation::identity(); bspline::MAX_ORDER];
    for j in 0..k {
        pos[j] = params[j].as_vec3();
        rot[j] = *params[k + j].as_rotation();
    }
    (
        bspline::eval_r3_window(&pos[..k], basis),
        bspline::eval_so3_window(&rot[..k], basis),
    )
}

/// Segment and basis of `t` on the trajectory grid.
pub(crate) fn locate(traj: &Trajectory, t: f64) -> Result<(usize, CumulativeBasis)> {
    traj.grid().basis_at(t)
}
