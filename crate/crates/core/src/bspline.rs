//! Uniform B-splines in cumulative form on R³ and SO(3).
//!
//! For a query time `t` in segment `i` with normalized time `u`, the value depends
//! on control points `i..i+k` only:
//!
//! ```text
//! p(u) = p_i + Σ_{j=1}^{k-1} λ_j(u) (p_{i+j} - p_{i+j-1})
//! R(u) = R_i · Π_{j=1}^{k-1} Exp(λ_j(u) · Log(R_{i+j-1}⁻¹ R_{i+j}))
//! ```
//!
//! where `λ(u) = M̃ [1, u, u², …]ᵀ`. The blending matrices are generated once per
//! order by running the Cox–de Boor recurrence symbolically over polynomials in `u`.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::geometry::{Rotation, Vec3};

/// Highest supported spline order.
pub const MAX_ORDER: usize = 8;

/// Default order (cubic).
pub const CUBIC: usize = 4;

/// Slack (in units of knot intervals) when snapping times onto the grid ends.
const GRID_EPS: f64 = 1e-9;

type Square = [[f64; MAX_ORDER]; MAX_ORDER];

/// Basic (`M`) and cumulative (`M̃`) blending matrices for one order.
/// Row `j` holds the polynomial coefficients (ascending powers of `u`) of the
/// weight on control point `i + j`.
#[derive(Debug, Clone)]
pub struct BlendingMatrices {
    order: usize,
    basic: Square,
    cumulative: Square,
}

impl BlendingMatrices {
    fn generate(order: usize) -> Self {
        let k = order;
        // polys[j][n]: coefficient of u^n in N_{j,p} restricted to segment [k-1, k)
        // of the integer knot vector, updated in place from degree 0 to k-1.
        let mut polys = vec![[0.0f64; MAX_ORDER]; k + 1];
        polys[k - 1][0] = 1.0;
        for p in 1..k {
            let mut next = vec![[0.0f64; MAX_ORDER]; k + 1];
            for j in 0..k {
                // (x - j) / p, with x = (k - 1) + u
                let left_c = (k as f64 - 1.0 - j as f64) / p as f64;
                let left_u = 1.0 / p as f64;
                // (j + p + 1 - x) / p
                let right_c = (j as f64 + p as f64 + 2.0 - k as f64) / p as f64;
                let right_u = -1.0 / p as f64;
                for n in 0..k {
                    let a = polys[j][n];
                    let b = polys[j + 1][n];
                    next[j][n] += left_c * a + right_c * b;
                    if n + 1 < k {
                        next[j][n + 1] += left_u * a + right_u * b;
                    }
                }
            }
            polys = next;
        }

        let mut basic = [[0.0; MAX_ORDER]; MAX_ORDER];
        for j in 0..k {
            basic[j][..k].copy_from_slice(&polys[j][..k]);
        }
        let mut cumulative = [[0.0; MAX_ORDER]; MAX_ORDER];
        // Row 0 is the partition of unity; pin it exactly.
        cumulative[0][0] = 1.0;
        for (j, row) in cumulative.iter_mut().enumerate().take(k).skip(1) {
            for b in &basic[j..k] {
                for (c, v) in row[..k].iter_mut().zip(&b[..k]) {
                    *c += v;
                }
            }
        }
        Self {
            order,
            basic,
            cumulative,
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// `M[j][n]`.
    pub fn basic(&self, j: usize, n: usize) -> f64 {
        self.basic[j][n]
    }

    /// `M̃[j][n]`.
    pub fn cumulative(&self, j: usize, n: usize) -> f64 {
        self.cumulative[j][n]
    }
}

pub fn blending_matrices(order: usize) -> Result<&'static BlendingMatrices> {
    static TABLE: OnceLock<Vec<BlendingMatrices>> = OnceLock::new();
    if !(2..=MAX_ORDER).contains(&order) {
        return Err(Error::UnsupportedOrder(order));
    }
    let table = TABLE.get_or_init(|| (2..=MAX_ORDER).map(BlendingMatrices::generate).collect());
    Ok(&table[order - 2])
}

/// `λ(u)` and its first two time derivatives.
#[derive(Debug, Clone, Copy)]
pub struct CumulativeBasis {
    order: usize,
    pub lambda: [f64; MAX_ORDER],
    /// 1/s
    pub dlambda: [f64; MAX_ORDER],
    /// 1/s²
    pub ddlambda: [f64; MAX_ORDER],
}

impl CumulativeBasis {
    pub fn order(&self) -> usize {
        self.order
    }
}

/// Evaluates the cumulative basis at `u ∈ [0, 1]` for knot spacing `dt`.
/// `u = 1` is accepted so the closing knot of a grid can be evaluated.
pub fn cumulative_basis(u: f64, order: usize, dt: f64) -> Result<CumulativeBasis> {
    let m = blending_matrices(order)?;
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::InvalidArgument(format!(
            "normalized time {u} not in [0, 1]"
        )));
    }
    let k = order;
    let mut powers = [0.0; MAX_ORDER];
    powers[0] = 1.0;
    for n in 1..k {
        powers[n] = powers[n - 1] * u;
    }
    let inv_dt = 1.0 / dt;
    let mut out = CumulativeBasis {
        order,
        lambda: [0.0; MAX_ORDER],
        dlambda: [0.0; MAX_ORDER],
        ddlambda: [0.0; MAX_ORDER],
    };
    for j in 0..k {
        let row = &m.cumulative[j];
        let mut l = 0.0;
        let mut dl = 0.0;
        let mut ddl = 0.0;
        for n in 0..k {
            l += row[n] * powers[n];
            if n >= 1 {
                dl += n as f64 * row[n] * powers[n - 1];
            }
            if n >= 2 {
                ddl += (n * (n - 1)) as f64 * row[n] * powers[n - 2];
            }
        }
        out.lambda[j] = l;
        out.dlambda[j] = dl * inv_dt;
        out.ddlambda[j] = ddl * inv_dt * inv_dt;
    }
    Ok(out)
}

/// Uniform knot layout shared by the position and rotation splines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KnotGrid {
    t0: f64,
    dt: f64,
    order: usize,
    n_control: usize,
}

/// Segment index and position inside it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizedTime {
    pub segment: usize,
    pub u: f64,
}

impl KnotGrid {
    pub fn new(t0: f64, dt: f64, order: usize, n_control: usize) -> Result<Self> {
        blending_matrices(order)?;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "knot spacing {dt} must be positive"
            )));
        }
        if !t0.is_finite() {
            return Err(Error::InvalidArgument("non-finite grid start".into()));
        }
        Ok(Self {
            t0,
            dt,
            order,
            n_control,
        })
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn n_control(&self) -> usize {
        self.n_control
    }

    pub(crate) fn set_n_control(&mut self, n: usize) {
        self.n_control = n;
    }

    /// Number of evaluable segments.
    pub fn n_segments(&self) -> usize {
        (self.n_control + 1).saturating_sub(self.order)
    }

    /// Closed evaluable interval `[t_min, t_max]`. Empty grids report `t_max < t_min`.
    pub fn range(&self) -> (f64, f64) {
        let segs = self.n_segments() as f64;
        let end = if self.n_segments() == 0 {
            self.t0 - self.dt
        } else {
            self.t0 + segs * self.dt
        };
        (self.t0, end)
    }

    /// Time of knot `i` (start of segment `i`).
    pub fn knot_time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    fn out_of_range(&self, t: f64) -> Error {
        let (start, end) = self.range();
        Error::OutOfRange { t, start, end }
    }

    /// Maps `t` to `(segment, u)`. The closing knot maps to the last segment with `u = 1`.
    pub fn normalize(&self, t: f64) -> Result<NormalizedTime> {
        let segs = self.n_segments();
        if segs == 0 || !t.is_finite() {
            return Err(self.out_of_range(t));
        }
        let s = (t - self.t0) / self.dt;
        if s < -GRID_EPS {
            return Err(self.out_of_range(t));
        }
        if s >= segs as f64 - GRID_EPS {
            if s <= segs as f64 + GRID_EPS {
                return Ok(NormalizedTime {
                    segment: segs - 1,
                    u: 1.0,
                });
            }
            return Err(self.out_of_range(t));
        }
        let fl = s.floor();
        if s < 0.0 {
            return Ok(NormalizedTime { segment: 0, u: 0.0 });
        }
        Ok(NormalizedTime {
            segment: fl as usize,
            u: s - fl,
        })
    }

    pub fn contains(&self, t: f64) -> bool {
        self.normalize(t).is_ok()
    }

    /// Basis values at `t` together with the first controlling index.
    pub fn basis_at(&self, t: f64) -> Result<(usize, CumulativeBasis)> {
        let nt = self.normalize(t)?;
        Ok((nt.segment, cumulative_basis(nt.u, self.order, self.dt)?))
    }
}

/// Position, velocity and acceleration (global frame).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct R3State {
    pub position: Vec3,
    pub velocity: Vec3,
    pub acceleration: Vec3,
}

/// Evaluates a position spline from its `k` controlling points.
pub fn eval_r3_window(window: &[Vec3], basis: &CumulativeBasis) -> R3State {
    let k = basis.order();
    debug_assert_eq!(window.len(), k);
    let mut position = window[0];
    let mut velocity = Vec3::zeros();
    let mut acceleration = Vec3::zeros();
    for j in 1..k {
        let d = window[j] - window[j - 1];
        position += d * basis.lambda[j];
        velocity += d * basis.dlambda[j];
        acceleration += d * basis.ddlambda[j];
    }
    R3State {
        position,
        velocity,
        acceleration,
    }
}

/// Rotation and body-frame angular velocity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct So3State {
    pub rotation: Rotation,
    pub angular_velocity: Vec3,
}

/// Evaluates a rotation spline from its `k` controlling rotations.
///
/// The angular velocity follows from differentiating the cumulative product:
/// with `A_j = Exp(λ_j d_j)`, `ω_j = A_jᵀ ω_{j-1} + λ̇_j d_j`.
pub fn eval_so3_window(window: &[Rotation], basis: &CumulativeBasis) -> So3State {
    let k = basis.order();
    debug_assert_eq!(window.len(), k);
    let mut rotation = window[0];
    let mut omega = Vec3::zeros();
    for j in 1..k {
        let d = (window[j - 1].inverse() * window[j]).log();
        let a = Rotation::exp(&(d * basis.lambda[j]));
        rotation = rotation * a;
        omega = a.inverse() * omega + d * basis.dlambda[j];
    }
    So3State {
        rotation,
        angular_velocity: omega,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplineR3 {
    grid: KnotGrid,
    control_points: Vec<Vec3>,
}

impl SplineR3 {
    pub fn new(grid: KnotGrid, control_points: Vec<Vec3>) -> Result<Self> {
        if control_points.len() != grid.n_control() {
            return Err(Error::InvalidArgument(format!(
                "{} control points for a grid of {}",
                control_points.len(),
                grid.n_control()
            )));
        }
        Ok(Self {
            grid,
            control_points,
        })
    }

    pub fn grid(&self) -> &KnotGrid {
        &self.grid
    }

    pub fn control_points(&self) -> &[Vec3] {
        &self.control_points
    }

    pub fn control_points_mut(&mut self) -> &mut [Vec3] {
        &mut self.control_points
    }

    pub(crate) fn push(&mut self, p: Vec3) {
        self.control_points.push(p);
        self.grid.set_n_control(self.control_points.len());
    }

    pub fn evaluate(&self, t: f64) -> Result<R3State> {
        let (i, basis) = self.grid.basis_at(t)?;
        Ok(eval_r3_window(
            &self.control_points[i..i + self.grid.order()],
            &basis,
        ))
    }

    pub fn eval_position(&self, t: f64) -> Result<Vec3> {
        Ok(self.evaluate(t)?.position)
    }

    pub fn eval_velocity(&self, t: f64) -> Result<Vec3> {
        Ok(self.evaluate(t)?.velocity)
    }

    pub fn eval_acceleration(&self, t: f64) -> Result<Vec3> {
        Ok(self.evaluate(t)?.acceleration)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplineSO3 {
    grid: KnotGrid,
    control_points: Vec<Rotation>,
}

impl SplineSO3 {
    pub fn new(grid: KnotGrid, control_points: Vec<Rotation>) -> Result<Self> {
        if control_points.len() != grid.n_control() {
            return Err(Error::InvalidArgument(format!(
                "{} control rotations for a grid of {}",
                control_points.len(),
                grid.n_control()
            )));
        }
        Ok(Self {
            grid,
            control_points,
        })
    }

    pub fn grid(&self) -> &KnotGrid {
        &self.grid
    }

    pub fn control_points(&self) -> &[Rotation] {
        &self.control_points
    }

    pub fn control_points_mut(&mut self) -> &mut [Rotation] {
        &mut self.control_points
    }

    pub(crate) fn push(&mut self, r: Rotation) {
        self.control_points.push(r);
        self.grid.set_n_control(self.control_points.len());
    }

    pub fn evaluate(&self, t: f64) -> Result<So3State> {
        let (i, basis) = self.grid.basis_at(t)?;
        Ok(eval_so3_window(
            &self.control_points[i..i + self.grid.order()],
            &basis,
        ))
    }

    pub fn eval_rotation(&self, t: f64) -> Result<Rotation> {
        Ok(self.evaluate(t)?.rotation)
    }

    /// Body-frame angular velocity (rad/s).
    pub fn eval_angular_velocity(&self, t: f64) -> Result<Vec3> {
        Ok(self.evaluate(t)?.angular_velocity)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::vee;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Textbook Cox–de Boor on integer knots, evaluated numerically.
    fn cox_de_boor(j: i64, p: usize, x: f64) -> f64 {
        let jf = j as f64;
        if p == 0 {
            return if jf <= x && x < jf + 1.0 { 1.0 } else { 0.0 };
        }
        let pf = p as f64;
        (x - jf) / pf * cox_de_boor(j, p - 1, x)
            + (jf + pf + 1.0 - x) / pf * cox_de_boor(j + 1, p - 1, x)
    }

    fn oracle_cumulative(u: f64, k: usize) -> Vec<f64> {
        let x = (k - 1) as f64 + u;
        let basis: Vec<f64> = (0..k).map(|j| cox_de_boor(j as i64, k - 1, x)).collect();
        (0..k).map(|j| basis[j..].iter().sum()).collect()
    }

    #[test]
    fn cubic_basis_endpoints() {
        let b = cumulative_basis(0.0, 4, 1.0).unwrap();
        let expected = [1.0, 5.0 / 6.0, 1.0 / 6.0, 0.0];
        for j in 0..4 {
            assert_relative_eq!(b.lambda[j], expected[j], epsilon = 1e-15);
        }
        let b = cumulative_basis(1.0 - 1e-12, 4, 1.0).unwrap();
        let expected = [1.0, 1.0, 5.0 / 6.0, 1.0 / 6.0];
        for j in 0..4 {
            assert_relative_eq!(b.lambda[j], expected[j], epsilon = 1e-10);
        }
    }

    #[test]
    fn basis_matches_cox_de_boor_for_all_orders() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for k in 2..=MAX_ORDER {
            for _ in 0..200 {
                let u: f64 = rng.random_range(0.0..1.0);
                let b = cumulative_basis(u, k, 1.0).unwrap();
                let oracle = oracle_cumulative(u, k);
                assert_eq!(b.lambda[0], 1.0);
                for (j, o) in oracle.iter().enumerate().take(k) {
                    assert!((b.lambda[j] - o).abs() < 1e-12, "k={k} j={j}");
                    if j > 0 {
                        assert!(b.lambda[j] <= b.lambda[j - 1] + 1e-15);
                    }
                }
                assert_eq!(b.dlambda[0], 0.0);
                assert_eq!(b.ddlambda[0], 0.0);
            }
        }
    }

    #[test]
    fn rejects_bad_order_and_u() {
        assert!(matches!(
            cumulative_basis(0.5, 1, 1.0),
            Err(Error::UnsupportedOrder(1))
        ));
        assert!(cumulative_basis(1.5, 4, 1.0).is_err());
        assert!(KnotGrid::new(0.0, 0.0, 4, 10).is_err());
    }

    #[test]
    fn derivative_scaling_with_dt() {
        let a = cumulative_basis(0.3, 4, 1.0).unwrap();
        let b = cumulative_basis(0.3, 4, 0.1).unwrap();
        for j in 0..4 {
            assert_relative_eq!(b.dlambda[j], a.dlambda[j] * 10.0, epsilon = 1e-12);
            assert_relative_eq!(b.ddlambda[j], a.ddlambda[j] * 100.0, epsilon = 1e-10);
        }
    }

    fn random_r3(rng: &mut ChaCha8Rng, n: usize, dt: f64) -> SplineR3 {
        let grid = KnotGrid::new(0.3, dt, 4, n).unwrap();
        let cps = (0..n)
            .map(|_| {
                Vec3::new(
                    rng.random_range(-2.0..2.0),
                    rng.random_range(-2.0..2.0),
                    rng.random_range(-2.0..2.0),
                )
            })
            .collect();
        SplineR3::new(grid, cps).unwrap()
    }

    fn random_so3(rng: &mut ChaCha8Rng, n: usize, dt: f64) -> SplineSO3 {
        let grid = KnotGrid::new(0.3, dt, 4, n).unwrap();
        let mut r = Rotation::identity();
        let cps = (0..n)
            .map(|_| {
                r = r * Rotation::exp(&Vec3::new(
                    rng.random_range(-0.5..0.5),
                    rng.random_range(-0.5..0.5),
                    rng.random_range(-0.5..0.5),
                ));
                r
            })
            .collect();
        SplineSO3::new(grid, cps).unwrap()
    }

    #[test]
    fn grid_range_and_endpoints() {
        let g = KnotGrid::new(1.0, 0.1, 4, 7).unwrap();
        let (a, b) = g.range();
        assert_relative_eq!(a, 1.0);
        assert_relative_eq!(b, 1.4);
        assert_eq!(
            g.normalize(b).unwrap(),
            NormalizedTime { segment: 3, u: 1.0 }
        );
        let nt = g.normalize(1.4).unwrap();
        assert_eq!(nt.segment, 3);
        assert_relative_eq!(nt.u, 1.0, epsilon = 1e-12);
        assert!(g.normalize(1.41).is_err());
        assert!(g.normalize(0.99).is_err());
        match g.normalize(2.0) {
            Err(Error::OutOfRange { start, end, .. }) => {
                assert_relative_eq!(start, 1.0);
                assert_relative_eq!(end, 1.4);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn constant_control_points() {
        let p = Vec3::new(1.0, -2.0, 3.0);
        let g = KnotGrid::new(0.0, 0.2, 4, 6).unwrap();
        let s = SplineR3::new(g, vec![p; 6]).unwrap();
        let r = Rotation::exp(&Vec3::new(0.4, 0.1, -0.9));
        let q = SplineSO3::new(g, vec![r; 6]).unwrap();
        for i in 0..=30 {
            let t = i as f64 * 0.6 / 30.0;
            let st = s.evaluate(t).unwrap();
            assert_eq!(st.position, p);
            assert_eq!(st.velocity, Vec3::zeros());
            assert_eq!(st.acceleration, Vec3::zeros());
            let so = q.evaluate(t).unwrap();
            assert!(so.rotation.angle_to(&r) < 1e-15);
            assert_eq!(so.angular_velocity, Vec3::zeros());
        }
    }

    #[test]
    fn collinear_equally_spaced_is_constant_velocity() {
        let dt = 0.1;
        let g = KnotGrid::new(0.0, dt, 4, 8).unwrap();
        let cps = (0..8)
            .map(|i| Vec3::new(0.5 * i as f64, 0.0, 0.0))
            .collect();
        let s = SplineR3::new(g, cps).unwrap();
        for i in 0..50 {
            let t = i as f64 * 0.5 / 50.0;
            let st = s.evaluate(t).unwrap();
            assert_relative_eq!(st.velocity, Vec3::new(0.5 / dt, 0.0, 0.0), epsilon = 1e-12);
            assert!(st.acceleration.norm() < 1e-10);
            assert_eq!(st.position.y, 0.0);
        }
    }

    #[test]
    fn fixed_axis_rotation_has_constant_rate() {
        let dt = 0.05;
        let theta = 0.03;
        let axis = Vec3::new(1.0, 2.0, -0.5).normalize();
        let g = KnotGrid::new(0.0, dt, 4, 9).unwrap();
        let cps = (0..9)
            .map(|i| Rotation::exp(&(axis * theta * i as f64)))
            .collect();
        let s = SplineSO3::new(g, cps).unwrap();
        for i in 0..40 {
            let t = i as f64 * 0.3 / 40.0;
            let st = s.evaluate(t).unwrap();
            assert_relative_eq!(st.angular_velocity, axis * (theta / dt), epsilon = 1e-12);
            // rotation stays about the axis
            let v = st.rotation.log();
            assert!(v.cross(&axis).norm() < 1e-12);
        }
    }

    #[test]
    fn r3_matches_basic_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let s = random_r3(&mut rng, 10, 0.25);
        let (a, b) = s.grid().range();
        for _ in 0..200 {
            let t = rng.random_range(a..b);
            let nt = s.grid().normalize(t).unwrap();
            let x = 3.0 + nt.u;
            let mut basic = Vec3::zeros();
            for j in 0..4 {
                basic += s.control_points()[nt.segment + j] * cox_de_boor(j as i64, 3, x);
            }
            assert!((s.eval_position(t).unwrap() - basic).norm() < 1e-12);
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = 1e-5;
        for _ in 0..20 {
            let s = random_r3(&mut rng, 10, 0.2);
            let q = random_so3(&mut rng, 10, 0.2);
            let (a, b) = s.grid().range();
            for _ in 0..20 {
                let t = rng.random_range(a + 2.0 * h..b - 2.0 * h);
                let st = s.evaluate(t).unwrap();
                let fd_v =
                    (s.eval_position(t + h).unwrap() - s.eval_position(t - h).unwrap()) / (2.0 * h);
                let fd_a =
                    (s.eval_velocity(t + h).unwrap() - s.eval_velocity(t - h).unwrap()) / (2.0 * h);
                assert!((fd_v - st.velocity).norm() <= 1e-5 * st.velocity.norm().max(1.0));
                assert!((fd_a - st.acceleration).norm() <= 1e-5 * st.acceleration.norm().max(1.0));

                let r = q.eval_rotation(t).unwrap().matrix();
                let dr = (q.eval_rotation(t + h).unwrap().matrix()
                    - q.eval_rotation(t - h).unwrap().matrix())
                    / (2.0 * h);
                let fd_w = vee(&(r.transpose() * dr));
                let w = q.eval_angular_velocity(t).unwrap();
                assert!((fd_w - w).norm() <= 1e-4 * w.norm().max(1.0));
            }
        }
    }

    #[test]
    fn locality_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s = random_r3(&mut rng, 12, 0.1);
        let q = random_so3(&mut rng, 12, 0.1);
        let seg = 4;
        let t = s.grid().knot_time(seg) + 0.037;
        let p0 = s.evaluate(t).unwrap();
        let r0 = q.evaluate(t).unwrap();
        for other in (0..12).filter(|i| !(seg..seg + 4).contains(i)) {
            let mut s2 = s.clone();
            s2.control_points_mut()[other] += Vec3::new(1.0, 1.0, 1.0);
            let mut q2 = q.clone();
            q2.control_points_mut()[other] = Rotation::exp(&Vec3::new(1.0, 0.0, 0.0));
            assert_eq!(s2.evaluate(t).unwrap(), p0);
            assert_eq!(q2.evaluate(t).unwrap(), r0);
        }
    }

    #[test]
    fn c2_continuity_across_knots() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let s = random_r3(&mut rng, 10, 0.1);
        let q = random_so3(&mut rng, 10, 0.1);
        for i in 1..s.grid().n_segments() {
            let nt_left = (i - 1, cumulative_basis(1.0, 4, 0.1).unwrap());
            let nt_right = (i, cumulative_basis(0.0, 4, 0.1).unwrap());
            let l = eval_r3_window(&s.control_points()[nt_left.0..nt_left.0 + 4], &nt_left.1);
            let r = eval_r3_window(&s.control_points()[nt_right.0..nt_right.0 + 4], &nt_right.1);
            assert!((l.position - r.position).norm() < 1e-9);
            assert!((l.velocity - r.velocity).norm() < 1e-9);
            assert!((l.acceleration - r.acceleration).norm() < 1e-9);
            let l = eval_so3_window(&q.control_points()[nt_left.0..nt_left.0 + 4], &nt_left.1);
            let r = eval_so3_window(&q.control_points()[nt_right.0..nt_right.0 + 4], &nt_right.1);
            assert!(l.rotation.angle_to(&r.rotation) < 1e-9);
            assert!((l.angular_velocity - r.angular_velocity).norm() < 1e-9);
        }
    }
}
