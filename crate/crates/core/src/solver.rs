//! Levenberg–Marquardt over Euclidean and SO(3) parameter blocks.
//!
//! A [`Problem`] owns parameter values and residual blocks. Jacobians are
//! central differences; SO(3) blocks are perturbed and updated on the right,
//! `R ← R·exp(δ)`. The normal equations are solved densely, which is cheap at
//! the sizes a sliding window or a key-scan pose graph produces.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{Rotation, Vec3};
use crate::io;

pub const DEFAULT_JACOBIAN_STEP: f64 = 1e-6;
pub const MIN_DAMPING: f64 = 1e-12;
pub const MAX_DAMPING: f64 = 1e6;
/// Floor applied to diagonal entries of `JᵀJ` before scaling by the damping.
const DIAG_FLOOR: f64 = 1e-6;
/// Consecutive rejected steps before giving up.
const MAX_REJECTS: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BlockId(pub usize);

#[derive(Debug, Clone, PartialEq)]
pub enum Param {
    Euclidean(DVector<f64>),
    So3(Rotation),
}

impl Param {
    pub fn vec3(v: Vec3) -> Self {
        Param::Euclidean(DVector::from_column_slice(v.as_slice()))
    }

    /// Tangent dimension.
    pub fn dim(&self) -> usize {
        match self {
            Param::Euclidean(v) => v.len(),
            Param::So3(_) => 3,
        }
    }

    /// The value as a 3-vector; panics on blocks of another shape.
    pub fn as_vec3(&self) -> Vec3 {
        match self {
            Param::Euclidean(v) if v.len() == 3 => Vec3::new(v[0], v[1], v[2]),
            other => panic!("parameter {other:?} is not a 3-vector"),
        }
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        match self {
            Param::Euclidean(v) => v,
            Param::So3(_) => panic!("parameter is a rotation, not a vector"),
        }
    }

    pub fn as_rotation(&self) -> &Rotation {
        match self {
            Param::So3(r) => r,
            Param::Euclidean(_) => panic!("parameter is a vector, not a rotation"),
        }
    }

    /// `x ⊞ δ`: vector addition or right-multiplied exponential.
    pub fn plus(&self, delta: &[f64]) -> Param {
        match self {
            Param::Euclidean(v) => Param::Euclidean(v + DVector::from_column_slice(delta)),
            Param::So3(r) => {
                Param::So3(*r * Rotation::exp(&Vec3::new(delta[0], delta[1], delta[2])))
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct ParamBlock {
    pub value: Param,
    pub fixed: bool,
    /// Euclidean blocks are projected back onto this ball after every step.
    pub max_norm: Option<f64>,
}

/// Square root of an inverse covariance.
#[derive(Debug, Clone, PartialEq)]
pub enum Weight {
    Scalar(f64),
    Diagonal(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Loss {
    None,
    Huber(f64),
}

impl Loss {
    /// `(ρ(s), ρ'(s))` for a squared norm `s`.
    fn eval(&self, s: f64) -> (f64, f64) {
        match *self {
            Loss::None => (s, 1.0),
            Loss::Huber(delta) => {
                if s <= delta * delta {
                    (s, 1.0)
                } else {
                    let r = s.sqrt();
                    (2.0 * delta * r - delta * delta, delta / r)
                }
            }
        }
    }
}

/// A residual function over the values of its referenced blocks, in order.
pub trait CostFunction: Send + Sync {
    fn evaluate(&self, params: &[Param]) -> Vec<f64>;
}

impl<F> CostFunction for F
where
    F: Fn(&[Param]) -> Vec<f64> + Send + Sync,
{
    fn evaluate(&self, params: &[Param]) -> Vec<f64> {
        self(params)
    }
}

#[derive(Clone)]
pub struct ResidualBlock {
    pub blocks: Vec<BlockId>,
    pub dim: usize,
    pub weight: Weight,
    pub loss: Loss,
    cost: Arc<dyn CostFunction>,
}

impl std::fmt::Debug for ResidualBlock {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ResidualBlock")
            .field("blocks", &self.blocks)
            .field("dim", &self.dim)
            .field("weight", &self.weight)
            .field("loss", &self.loss)
            .finish()
    }
}

impl ResidualBlock {
    pub fn new(blocks: Vec<BlockId>, dim: usize, cost: impl CostFunction + 'static) -> Self {
        Self {
            blocks,
            dim,
            weight: Weight::Scalar(1.0),
            loss: Loss::None,
            cost: Arc::new(cost),
        }
    }

    pub fn with_weight(mut self, weight: Weight) -> Self {
        self.weight = weight;
        self
    }

    pub fn with_loss(mut self, loss: Loss) -> Self {
        self.loss = loss;
        self
    }

    fn apply_weight(&self, r: &mut [f64]) {
        match &self.weight {
            Weight::Scalar(w) => r.iter_mut().for_each(|x| *x *= w),
            Weight::Diagonal(w) => r.iter_mut().zip(w).for_each(|(x, w)| *x *= w),
        }
    }

    /// Weighted residual at `params`.
    fn weighted(&self, params: &[Param]) -> Vec<f64> {
        let mut r = self.cost.evaluate(params);
        self.apply_weight(&mut r);
        r
    }
}

#[derive(Debug, Clone, Default)]
pub struct Problem {
    blocks: Vec<ParamBlock>,
    residuals: Vec<ResidualBlock>,
}

/// Weighted residual, its Jacobian over free tangents and their column offsets.
type LocalLinearization = (Vec<f64>, DMatrix<f64>, Vec<usize>);

impl Problem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_param(&mut self, value: Param) -> BlockId {
        self.blocks.push(ParamBlock {
            value,
            fixed: false,
            max_norm: None,
        });
        BlockId(self.blocks.len() - 1)
    }

    pub fn add_vec3(&mut self, v: Vec3) -> BlockId {
        self.add_param(Param::vec3(v))
    }

    pub fn add_rotation(&mut self, r: Rotation) -> BlockId {
        self.add_param(Param::So3(r))
    }

    pub fn set_fixed(&mut self, id: BlockId, fixed: bool) {
        self.blocks[id.0].fixed = fixed;
    }

    pub fn set_max_norm(&mut self, id: BlockId, bound: f64) {
        self.blocks[id.0].max_norm = Some(bound);
    }

    pub fn is_fixed(&self, id: BlockId) -> bool {
        self.blocks[id.0].fixed
    }

    pub fn add_residual(&mut self, block: ResidualBlock) -> Result<usize> {
        if block.blocks.iter().any(|b| b.0 >= self.blocks.len()) {
            return Err(Error::InvalidArgument(
                "residual references an unknown parameter block".into(),
            ));
        }
        let positive = match &block.weight {
            Weight::Scalar(w) => *w > 0.0 && w.is_finite(),
            Weight::Diagonal(w) => {
                w.len() == block.dim && w.iter().all(|w| *w > 0.0 && w.is_finite())
            }
        };
        if !positive {
            return Err(Error::InvalidArgument(
                "residual weights must be positive and match the dimension".into(),
            ));
        }
        self.residuals.push(block);
        Ok(self.residuals.len() - 1)
    }

    pub fn value(&self, id: BlockId) -> &Param {
        &self.blocks[id.0].value
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn num_residuals(&self) -> usize {
        self.residuals.len()
    }

    fn gather(&self, rb: &ResidualBlock) -> Vec<Param> {
        rb.blocks
            .iter()
            .map(|b| self.blocks[b.0].value.clone())
            .collect()
    }

    /// Total cost `½ Σ ρ(‖W r‖²)`.
    pub fn cost(&self) -> Result<f64> {
        let parts: Result<Vec<f64>> = self
            .residuals
            .par_iter()
            .map(|rb| {
                let r = rb.weighted(&self.gather(rb));
                check_residual(rb, &r, usize::MAX)?;
                let s: f64 = r.iter().map(|x| x * x).sum();
                Ok(0.5 * rb.loss.eval(s).0)
            })
            .collect();
        Ok(parts?.iter().sum())
    }

    /// Weighted residuals of one block at the current values, before any loss.
    pub fn residual(&self, index: usize) -> Vec<f64> {
        let rb = &self.residuals[index];
        rb.weighted(&self.gather(rb))
    }

    /// Offsets of every free block in the stacked tangent vector.
    fn layout(&self) -> (Vec<Option<usize>>, usize) {
        let mut offsets = Vec::with_capacity(self.blocks.len());
        let mut n = 0;
        for b in &self.blocks {
            if b.fixed {
                offsets.push(None);
            } else {
                offsets.push(Some(n));
                n += b.value.dim();
            }
        }
        (offsets, n)
    }

    /// Robustified `JᵀJ` and `Jᵀr` in the free-tangent layout.
    fn linearize(
        &self,
        offsets: &[Option<usize>],
        n: usize,
        h: f64,
    ) -> Result<(DMatrix<f64>, DVector<f64>)> {
        let locals: Result<Vec<LocalLinearization>> = self
            .residuals
            .par_iter()
            .map(|rb| {
                let params = self.gather(rb);
                let free: Vec<bool> = rb.blocks.iter().map(|b| offsets[b.0].is_some()).collect();
                let mut r = rb.weighted(&params);
                check_residual(rb, &r, usize::MAX)?;
                let mut j = jacobian_weighted(rb, &params, &free, h)
                    .map_err(|local| remap_block(local, rb))?;
                let s: f64 = r.iter().map(|x| x * x).sum();
                let scale = rb.loss.eval(s).1.sqrt();
                if scale != 1.0 {
                    r.iter_mut().for_each(|x| *x *= scale);
                    j *= scale;
                }
                let mut cols = Vec::with_capacity(j.ncols());
                for (b, is_free) in rb.blocks.iter().zip(&free) {
                    if *is_free {
                        let off = offsets[b.0].unwrap_or_default();
                        cols.extend(off..off + self.blocks[b.0].value.dim());
                    }
                }
                Ok((r, j, cols))
            })
            .collect();
        let mut hess = DMatrix::zeros(n, n);
        let mut grad = DVector::zeros(n);
        for (r, j, cols) in locals? {
            let rv = DVector::from_vec(r);
            let jtj = j.transpose() * &j;
            let jtr = j.transpose() * rv;
            for (a, &ca) in cols.iter().enumerate() {
                grad[ca] += jtr[a];
                for (b, &cb) in cols.iter().enumerate() {
                    hess[(ca, cb)] += jtj[(a, b)];
                }
            }
        }
        Ok((hess, grad))
    }

    fn apply_step(&self, offsets: &[Option<usize>], dx: &DVector<f64>) -> Vec<Param> {
        self.blocks
            .iter()
            .zip(offsets)
            .map(|(b, off)| match off {
                None => b.value.clone(),
                Some(o) => {
                    let mut v = b.value.plus(&dx.as_slice()[*o..*o + b.value.dim()]);
                    if let (Some(bound), Param::Euclidean(x)) = (b.max_norm, &mut v) {
                        let norm = x.norm();
                        if norm > bound {
                            *x *= bound / norm;
                        }
                    }
                    v
                }
            })
            .collect()
    }

    fn set_values(&mut self, values: Vec<Param>) {
        for (b, v) in self.blocks.iter_mut().zip(values) {
            b.value = v;
        }
    }
}

fn check_residual(rb: &ResidualBlock, r: &[f64], block: usize) -> Result<()> {
    if r.len() != rb.dim {
        return Err(Error::InvalidArgument(format!(
            "residual returned {} values, declared {}",
            r.len(),
            rb.dim
        )));
    }
    if r.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteResidual { block });
    }
    Ok(())
}

/// Local block index inside the residual → global block id in errors.
fn remap_block(e: Error, rb: &ResidualBlock) -> Error {
    match e {
        Error::NonFiniteResidual { block } if block < rb.blocks.len() => Error::NonFiniteResidual {
            block: rb.blocks[block].0,
        },
        other => other,
    }
}

fn jacobian_weighted(
    rb: &ResidualBlock,
    params: &[Param],
    free: &[bool],
    h: f64,
) -> Result<DMatrix<f64>> {
    jacobian_impl(&|p: &[Param]| rb.weighted(p), rb.dim, params, free, h)
}

fn jacobian_impl(
    f: &dyn Fn(&[Param]) -> Vec<f64>,
    m: usize,
    params: &[Param],
    free: &[bool],
    h: f64,
) -> Result<DMatrix<f64>> {
    let ncols: usize = params
        .iter()
        .zip(free)
        .filter(|(_, f)| **f)
        .map(|(p, _)| p.dim())
        .sum();
    let mut jac = DMatrix::zeros(m, ncols);
    let mut work = params.to_vec();
    let mut col = 0;
    for (i, p) in params.iter().enumerate() {
        if !free[i] {
            continue;
        }
        let mut delta = vec![0.0; p.dim()];
        for d in 0..p.dim() {
            delta[d] = h;
            work[i] = p.plus(&delta);
            let fp = f(&work);
            delta[d] = -h;
            work[i] = p.plus(&delta);
            let fm = f(&work);
            delta[d] = 0.0;
            if fp.len() != m || fm.len() != m {
                return Err(Error::InvalidArgument(format!(
                    "residual returned {} values, declared {m}",
                    fp.len().max(fm.len())
                )));
            }
            for r in 0..m {
                let v = (fp[r] - fm[r]) / (2.0 * h);
                if !v.is_finite() {
                    return Err(Error::NonFiniteResidual { block: i });
                }
                jac[(r, col)] = v;
            }
            col += 1;
        }
        work[i] = p.clone();
    }
    Ok(jac)
}

/// Central-difference Jacobian of `cost` at `params`; columns of fixed blocks
/// are omitted. Errors name the local index of the offending block.
pub fn numeric_jacobian(
    cost: &dyn CostFunction,
    params: &[Param],
    free: &[bool],
    h: f64,
) -> Result<DMatrix<f64>> {
    if free.len() != params.len() {
        return Err(Error::InvalidArgument(
            "free mask length differs from parameter count".into(),
        ));
    }
    let r0 = cost.evaluate(params);
    if r0.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument(
            "residual is not finite at the evaluation point".into(),
        ));
    }
    jacobian_impl(&|p: &[Param]| cost.evaluate(p), r0.len(), params, free, h)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub max_iter: usize,
    /// Relative cost decrease below which the solve is converged.
    pub cost_tol: f64,
    pub step_tol: f64,
    pub init_damping: f64,
    pub jacobian_step: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iter: 10,
            cost_tol: 1e-6,
            step_tol: 1e-8,
            init_damping: 1e-4,
            jacobian_step: DEFAULT_JACOBIAN_STEP,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Converged,
    MaxIterations,
    Stalled,
}

impl std::fmt::Display for Termination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Termination::Converged => "converged",
            Termination::MaxIterations => "max_iter",
            Termination::Stalled => "stalled",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub cost: f64,
    pub damping: f64,
    pub step_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub termination: Termination,
    pub gradient_norm: f64,
    /// Initial state plus one row per accepted step.
    pub trace: Vec<TraceRow>,
}

impl SolveReport {
    fn unchanged(cost: f64) -> Self {
        Self {
            iterations: 0,
            initial_cost: cost,
            final_cost: cost,
            termination: Termination::Converged,
            gradient_norm: 0.0,
            trace: vec![TraceRow {
                iter: 0,
                cost,
                damping: 0.0,
                step_norm: 0.0,
            }],
        }
    }

    pub fn trace_csv(&self) -> String {
        let mut s = String::from("iter,cost,damping,step_norm\n");
        for row in &self.trace {
            let _ = writeln!(
                s,
                "{},{},{},{}",
                row.iter, row.cost, row.damping, row.step_norm
            );
        }
        s
    }

    pub fn write_trace(&self, path: &Path) -> Result<()> {
        io::write_string(path, &self.trace_csv())
    }
}

fn gradient_norm(g: &DVector<f64>) -> f64 {
    g.amax()
}

/// Minimizes the problem in place.
pub fn solve(problem: &mut Problem, options: &SolverOptions) -> Result<SolveReport> {
    let mut cost = problem.cost()?;
    let (offsets, n) = problem.layout();
    if n == 0 || problem.residuals.is_empty() {
        return Ok(SolveReport::unchanged(cost));
    }
    let h = options.jacobian_step;
    let (mut hess, mut grad) = problem.linearize(&offsets, n, h)?;
    let mut report = SolveReport::unchanged(cost);
    report.gradient_norm = gradient_norm(&grad);
    let mut damping = options.init_damping.clamp(MIN_DAMPING, MAX_DAMPING);
    report.trace[0].damping = damping;
    if cost == 0.0 || report.gradient_norm == 0.0 {
        return Ok(report);
    }
    report.termination = Termination::MaxIterations;
    'outer: while report.iterations < options.max_iter {
        report.iterations += 1;
        let mut rejects = 0;
        loop {
            let mut a = hess.clone();
            for i in 0..n {
                a[(i, i)] += damping * hess[(i, i)].max(DIAG_FLOOR);
            }
            let Some(chol) = a.cholesky() else {
                rejects += 1;
                if rejects >= MAX_REJECTS || damping >= MAX_DAMPING {
                    report.termination = Termination::Stalled;
                    break 'outer;
                }
                damping = (damping * 2.0).min(MAX_DAMPING);
                continue;
            };
            let dx = -chol.solve(&grad);
            let step_norm = dx.norm();
            if !step_norm.is_finite() {
                report.termination = Termination::Stalled;
                break 'outer;
            }
            // A step below tolerance is still taken if it helps, then the solve ends.
            let tiny = step_norm < options.step_tol;
            let candidate = problem.apply_step(&offsets, &dx);
            let previous: Vec<Param> = problem.blocks.iter().map(|b| b.value.clone()).collect();
            problem.set_values(candidate);
            let new_cost = match problem.cost() {
                Ok(c) => c,
                Err(Error::NonFiniteResidual { .. }) => f64::INFINITY,
                Err(e) => return Err(e),
            };
            if new_cost <= cost {
                let decrease = cost - new_cost;
                cost = new_cost;
                damping = (damping * 0.5).max(MIN_DAMPING);
                report.trace.push(TraceRow {
                    iter: report.iterations,
                    cost,
                    damping,
                    step_norm,
                });
                (hess, grad) = problem.linearize(&offsets, n, h)?;
                report.gradient_norm = gradient_norm(&grad);
                if tiny || cost == 0.0 || decrease <= options.cost_tol * (cost + decrease) {
                    report.termination = Termination::Converged;
                    break 'outer;
                }
                break;
            }
            problem.set_values(previous);
            if tiny {
                report.termination = Termination::Converged;
                break 'outer;
            }
            rejects += 1;
            if rejects >= MAX_REJECTS || damping >= MAX_DAMPING {
                report.termination = Termination::Stalled;
                break 'outer;
            }
            damping = (damping * 2.0).min(MAX_DAMPING);
        }
    }
    report.final_cost = cost;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn linear_problem(a: &DMatrix<f64>, y: &DVector<f64>) -> (Problem, BlockId) {
        let mut p = Problem::new();
        let x = p.add_param(Param::Euclidean(DVector::zeros(a.ncols())));
        for i in 0..a.nrows() {
            let row = a.row(i).clone_owned();
            let yi = y[i];
            p.add_residual(ResidualBlock::new(vec![x], 1, move |ps: &[Param]| {
                vec![(row.clone() * ps[0].as_vector())[0] - yi]
            }))
            .unwrap();
        }
        (p, x)
    }

    #[test]
    fn linear_least_squares_matches_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = DMatrix::from_fn(10, 4, |i, j| {
            (if i == j { 2.0 } else { 0.0 }) + rng.random_range(-1.0..1.0)
        });
        let y = DVector::from_fn(10, |_, _| rng.random_range(-2.0..2.0));
        let expected = (a.transpose() * &a)
            .cholesky()
            .unwrap()
            .solve(&(a.transpose() * &y));
        let (mut p, x) = linear_problem(&a, &y);
        let report = solve(&mut p, &SolverOptions::default()).unwrap();
        let got = p.value(x).as_vector();
        assert!((got - &expected).amax() < 1e-8, "{got} vs {expected}");
        assert!(report.final_cost <= report.initial_cost);
    }

    #[test]
    fn rotation_block_converges_to_target() {
        let target = Rotation::from_euler(0.3, -0.2, 1.1);
        let start = target
            * Rotation::from_axis_angle(&Vec3::new(1.0, 2.0, -1.0).normalize(), 30f64.to_radians());
        let mut p = Problem::new();
        let r = p.add_rotation(start);
        p.add_residual(ResidualBlock::new(vec![r], 3, move |ps: &[Param]| {
            (target.inverse() * *ps[0].as_rotation())
                .log()
                .as_slice()
                .to_vec()
        }))
        .unwrap();
        let opts = SolverOptions {
            max_iter: 50,
            ..Default::default()
        };
        solve(&mut p, &opts).unwrap();
        assert!(p.value(r).as_rotation().angle_to(&target) < 1e-9);
    }

    #[test]
    fn all_fixed_is_a_no_op() {
        let mut p = Problem::new();
        let x = p.add_vec3(Vec3::new(1.0, 2.0, 3.0));
        p.set_fixed(x, true);
        p.add_residual(ResidualBlock::new(vec![x], 3, |ps: &[Param]| {
            ps[0].as_vec3().as_slice().to_vec()
        }))
        .unwrap();
        let report = solve(&mut p, &SolverOptions::default()).unwrap();
        assert_eq!(report.iterations, 0);
        assert_eq!(report.initial_cost, report.final_cost);
        assert_relative_eq!(report.final_cost, 7.0);
        assert_eq!(p.value(x).as_vec3(), Vec3::new(1.0, 2.0, 3.0));
    }

    #[test]
    fn square_derivative() {
        let f = |ps: &[Param]| vec![ps[0].as_vector()[0].powi(2)];
        let j = numeric_jacobian(
            &f,
            &[Param::Euclidean(DVector::from_element(1, 3.0))],
            &[true],
            1e-6,
        )
        .unwrap();
        assert_relative_eq!(j[(0, 0)], 6.0, epsilon = 1e-6);
    }

    #[test]
    fn fixed_columns_are_omitted() {
        let f = |ps: &[Param]| {
            let a = ps[0].as_vec3();
            let b = ps[1].as_vec3();
            (a - 2.0 * b).as_slice().to_vec()
        };
        let params = [Param::vec3(Vec3::x()), Param::vec3(Vec3::y())];
        let j = numeric_jacobian(&f, &params, &[false, true], 1e-6).unwrap();
        assert_eq!(j.shape(), (3, 3));
        assert_relative_eq!(j, -2.0 * DMatrix::identity(3, 3), epsilon = 1e-9);
    }

    #[test]
    fn non_finite_perturbation_names_block() {
        let f = |ps: &[Param]| {
            let x = ps[1].as_vector()[0];
            vec![if x > 1.0 { f64::NAN } else { x }]
        };
        let params = [
            Param::Euclidean(DVector::from_element(1, 0.0)),
            Param::Euclidean(DVector::from_element(1, 1.0)),
        ];
        match numeric_jacobian(&f, &params, &[true, true], 1e-6) {
            Err(Error::NonFiniteResidual { block }) => assert_eq!(block, 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rank_deficient_problem_does_not_crash() {
        // Only x + y is observable.
        let mut p = Problem::new();
        let x = p.add_param(Param::Euclidean(DVector::zeros(2)));
        p.add_residual(ResidualBlock::new(vec![x], 1, |ps: &[Param]| {
            let v = ps[0].as_vector();
            vec![v[0] + v[1] - 4.0]
        }))
        .unwrap();
        let report = solve(&mut p, &SolverOptions::default()).unwrap();
        let v = p.value(x).as_vector();
        assert_relative_eq!(v[0] + v[1], 4.0, epsilon = 1e-6);
        assert!(report.final_cost < report.initial_cost);
    }

    #[test]
    fn accepted_costs_are_monotone() {
        // Rosenbrock-like residuals exercise rejections.
        let mut p = Problem::new();
        let x = p.add_param(Param::Euclidean(DVector::from_vec(vec![-1.2, 1.0])));
        p.add_residual(ResidualBlock::new(vec![x], 2, |ps: &[Param]| {
            let v = ps[0].as_vector();
            vec![10.0 * (v[1] - v[0] * v[0]), 1.0 - v[0]]
        }))
        .unwrap();
        let opts = SolverOptions {
            max_iter: 200,
            cost_tol: 1e-15,
            init_damping: 1e3,
            ..Default::default()
        };
        let report = solve(&mut p, &opts).unwrap();
        for w in report.trace.windows(2) {
            assert!(w[1].cost <= w[0].cost);
        }
        assert!(report.final_cost < 1e-10, "{report:?}");
        let csv = report.trace_csv();
        assert!(csv.starts_with("iter,cost,damping,step_norm\n"));
        assert_eq!(csv.lines().count(), report.trace.len() + 1);
    }

    #[test]
    fn huber_downweights_outlier() {
        let mut p = Problem::new();
        let x = p.add_param(Param::Euclidean(DVector::zeros(1)));
        for y in [1.0, 1.1, 0.9, 1.0, 50.0] {
            p.add_residual(
                ResidualBlock::new(vec![x], 1, move |ps: &[Param]| {
                    vec![ps[0].as_vector()[0] - y]
                })
                .with_loss(Loss::Huber(0.5)),
            )
            .unwrap();
        }
        solve(
            &mut p,
            &SolverOptions {
                max_iter: 50,
                ..Default::default()
            },
        )
        .unwrap();
        let v = p.value(x).as_vector()[0];
        assert!((v - 1.0).abs() < 0.2, "{v}");
    }

    #[test]
    fn norm_bound_is_enforced() {
        let mut p = Problem::new();
        let b = p.add_vec3(Vec3::zeros());
        p.set_max_norm(b, 0.1);
        p.add_residual(ResidualBlock::new(vec![b], 3, |ps: &[Param]| {
            (ps[0].as_vec3() - Vec3::new(1.0, 0.0, 0.0))
                .as_slice()
                .to_vec()
        }))
        .unwrap();
        solve(&mut p, &SolverOptions::default()).unwrap();
        assert!(p.value(b).as_vec3().norm() <= 0.1 + 1e-15);
    }

    #[test]
    fn registration_order_does_not_matter() {
        let build = |swap: bool| {
            let mut p = Problem::new();
            let (a, b) = if swap {
                let b = p.add_vec3(Vec3::zeros());
                (p.add_vec3(Vec3::zeros()), b)
            } else {
                let a = p.add_vec3(Vec3::zeros());
                (a, p.add_vec3(Vec3::zeros()))
            };
            p.add_residual(ResidualBlock::new(vec![a], 3, |ps: &[Param]| {
                (ps[0].as_vec3() - Vec3::new(1.0, 2.0, 3.0))
                    .as_slice()
                    .to_vec()
            }))
            .unwrap();
            p.add_residual(ResidualBlock::new(vec![a, b], 3, |ps: &[Param]| {
                (ps[1].as_vec3() - ps[0].as_vec3() - Vec3::new(0.5, 0.0, -1.0))
                    .as_slice()
                    .to_vec()
            }))
            .unwrap();
            solve(&mut p, &SolverOptions::default()).unwrap();
            (p.value(a).as_vec3(), p.value(b).as_vec3())
        };
        let (a0, b0) = build(false);
        let (a1, b1) = build(true);
        assert!((a0 - a1).norm() < 1e-8 && (b0 - b1).norm() < 1e-8);
    }

    #[test]
    fn bad_weight_rejected() {
        let mut p = Problem::new();
        let x = p.add_vec3(Vec3::zeros());
        let rb = ResidualBlock::new(vec![x], 3, |ps: &[Param]| {
            ps[0].as_vec3().as_slice().to_vec()
        })
        .with_weight(Weight::Scalar(0.0));
        assert!(p.add_residual(rb).is_err());
    }
}
