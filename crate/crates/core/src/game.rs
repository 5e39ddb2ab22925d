//! Tug-of-war value iteration.
//!
//! The dynamic programming operator is
//!
//! ```text
//! T(u)(x) = ½ (max_{B(x,r)} u + min_{B(x,r)} u) − r²τ/2
//! ```
//!
//! with `r = min(ε, dist(x, non-interior nodes))`. Near the collar the ball
//! shrinks instead of being cut off, which keeps the stencil symmetric about
//! `x` and the scheme consistent up to the boundary. Iterating `T` from the
//! boundary maximum decreases monotonically to the minimal solution.

use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{ball_offsets, Grid, GridFunction, NodeClass, Problem};
use crate::report::{SolveReport, SolverKind};

#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    /// Constant `max g` in the interior.
    BoundaryMax,
    /// Constant `min g` in the interior.
    BoundaryMin,
    /// Interior values taken from the given field.
    Supplied(GridFunction),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sweep {
    /// Every node updated from the previous iterate. Parallel when `threads > 1`.
    Jacobi,
    /// In-place updates in increasing node order.
    GaussSeidel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GameParams {
    pub eps: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub init: Init,
    pub sweep: Sweep,
    pub threads: usize,
}

impl GameParams {
    pub fn new(eps: f64) -> Self {
        GameParams {
            eps,
            tol: 1e-7,
            max_iter: 1_000_000,
            init: Init::BoundaryMax,
            sweep: Sweep::GaussSeidel,
            threads: 1,
        }
    }

    pub fn validate(&self, h: f64) -> Result<()> {
        if !(self.eps.is_finite() && self.eps >= h * (1.0 - 1e-12)) {
            return Err(Error::Parameter(format!(
                "game step eps = {} must be at least the spacing {h}",
                self.eps
            )));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Parameter(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::Parameter("max_iter must be at least 1".into()));
        }
        if self.threads == 0 {
            return Err(Error::Parameter("threads must be at least 1".into()));
        }
        Ok(())
    }
}

/// Distance from `node` to the nearest non-interior node, capped at `eps`,
/// and the active nodes within that distance.
fn node_ball(
    grid: &Grid,
    offsets: &[(isize, isize, f64)],
    node: usize,
    eps: f64,
) -> (f64, Vec<usize>) {
    let mut r = eps;
    for &(dx, dy, d) in offsets {
        let interior = grid
            .offset(node, dx, dy)
            .is_some_and(|m| grid.class(m) == NodeClass::Interior);
        if !interior {
            r = r.min(d);
            break;
        }
    }
    let lim = r * (1.0 + 1e-9);
    let mut nodes: Vec<usize> = offsets
        .iter()
        .take_while(|o| o.2 <= lim)
        .filter_map(|&(dx, dy, _)| grid.offset(node, dx, dy))
        .filter(|&m| grid.is_active(m))
        .collect();
    nodes.sort_unstable();
    (r, nodes)
}

/// Precomputed stencils of the dynamic programming operator.
#[derive(Debug, Clone)]
pub struct DppOperator {
    grid: Arc<Grid>,
    eps: f64,
    tau: f64,
    start: Vec<usize>,
    nodes: Vec<usize>,
    radius: Vec<f64>,
    cost: Vec<f64>,
}

impl DppOperator {
    pub fn new(grid: Arc<Grid>, eps: f64, tau: f64) -> Result<Self> {
        if !(eps.is_finite() && eps >= grid.h() * (1.0 - 1e-12)) {
            return Err(Error::Parameter(format!(
                "game step eps = {eps} must be at least the spacing {}",
                grid.h()
            )));
        }
        if !tau.is_finite() {
            return Err(Error::Parameter(format!("tau must be finite, got {tau}")));
        }
        let offsets = ball_offsets(grid.dim(), grid.h(), eps);
        let mut start = Vec::with_capacity(grid.interior().len() + 1);
        let mut nodes = Vec::new();
        let mut radius = Vec::with_capacity(grid.interior().len());
        let mut cost = Vec::with_capacity(grid.interior().len());
        start.push(0);
        for &n in grid.interior() {
            let (r, ball) = node_ball(&grid, &offsets, n, eps);
            nodes.extend(ball);
            start.push(nodes.len());
            radius.push(r);
            cost.push(0.5 * r * r * tau);
        }
        Ok(DppOperator {
            grid,
            eps,
            tau,
            start,
            nodes,
            radius,
            cost,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Stencil of the `slot`-th interior node.
    pub fn stencil(&self, slot: usize) -> &[usize] {
        &self.nodes[self.start[slot]..self.start[slot + 1]]
    }

    /// Ball radius used at the `slot`-th interior node.
    pub fn radius(&self, slot: usize) -> f64 {
        self.radius[slot]
    }

    /// `T(u)` at the `slot`-th interior node, reading a full-lattice array.
    #[inline]
    pub fn apply_at(&self, values: &[f64], slot: usize) -> f64 {
        let mut hi = f64::NEG_INFINITY;
        let mut lo = f64::INFINITY;
        for &m in self.stencil(slot) {
            let v = values[m];
            hi = hi.max(v);
            lo = lo.min(v);
        }
        0.5 * (hi + lo) - self.cost[slot]
    }

    /// One Jacobi application; boundary values are copied unchanged.
    pub fn apply(&self, u: &GridFunction) -> GridFunction {
        let mut out = u.clone();
        let v = u.values();
        for (slot, &n) in self.grid.interior().iter().enumerate() {
            out.set(n, self.apply_at(v, slot));
        }
        out
    }

    /// `sup |u − T(u)|` over interior nodes.
    pub fn residual(&self, values: &[f64]) -> f64 {
        self.grid
            .interior()
            .iter()
            .enumerate()
            .map(|(slot, &n)| (values[n] - self.apply_at(values, slot)).abs())
            .fold(0.0, f64::max)
    }
}

/// One application of the operator at a single interior node.
pub fn dpp_update(u: &GridFunction, node: usize, eps: f64, tau: f64) -> Result<f64> {
    let grid = u.grid();
    if !grid.is_interior(node) {
        return Err(Error::Parameter(format!("node {node} is not interior")));
    }
    if !(eps >= grid.h() * (1.0 - 1e-12)) {
        return Err(Error::Parameter(format!(
            "game step eps = {eps} must be at least the spacing {}",
            grid.h()
        )));
    }
    let offsets = ball_offsets(grid.dim(), grid.h(), eps);
    let (r, ball) = node_ball(grid, &offsets, node, eps);
    let mut hi = f64::NEG_INFINITY;
    let mut lo = f64::INFINITY;
    for m in ball {
        hi = hi.max(u.get(m));
        lo = lo.min(u.get(m));
    }
    Ok(0.5 * (hi + lo) - 0.5 * r * r * tau)
}

/// `u − T(u)` at interior nodes, zero elsewhere. A discrete supersolution
/// has this field nonnegative.
pub fn supersolution_residual(u: &GridFunction, eps: f64, tau: f64) -> Result<GridFunction> {
    let op = DppOperator::new(u.grid().clone(), eps, tau)?;
    let mut out = GridFunction::zeros(u.grid().clone());
    for (slot, &n) in u.grid().interior().iter().enumerate() {
        out.set(n, u.get(n) - op.apply_at(u.values(), slot));
    }
    Ok(out)
}

/// Iterates the operator to its fixed point.
///
/// For `τ < 0` the problem `(−g, −τ)` is solved and negated; the report
/// records that this exchanges the minimal and maximal solutions. Running
/// out of iterations is not an error: the last iterate is returned with
/// `converged == false`.
pub fn value_iteration(
    problem: &Problem,
    params: &GameParams,
) -> Result<(GridFunction, SolveReport)> {
    let started = Instant::now();
    let grid = problem.grid.clone();
    params.validate(grid.h())?;
    let swapped = problem.tau < 0.0;
    let (g, tau) = if swapped {
        (problem.g.map(&grid, |v| -v), -problem.tau)
    } else {
        (problem.g.clone(), problem.tau)
    };
    let op = DppOperator::new(grid.clone(), params.eps, tau)?;

    let mut u = match &params.init {
        Init::BoundaryMax => GridFunction::constant(grid.clone(), g.max(&grid)),
        Init::BoundaryMin => GridFunction::constant(grid.clone(), g.min(&grid)),
        Init::Supplied(v) => {
            if !v.same_grid(&GridFunction::zeros(grid.clone())) {
                return Err(Error::GridMismatch(
                    "initial guess lives on another grid".into(),
                ));
            }
            if swapped {
                v.map(|x| -x)
            } else {
                v.clone()
            }
        }
    };
    u.set_boundary(&g);

    let pool = if params.sweep == Sweep::Jacobi && params.threads > 1 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(params.threads)
                .build()
                .map_err(|e| Error::Parameter(format!("thread pool: {e}")))?,
        )
    } else {
        None
    };

    let interior = grid.interior();
    let mut report = SolveReport::new(SolverKind::Game, problem.tau);
    report.roles_swapped = swapped;
    let mut next = u.values().to_vec();
    let mut residual = f64::NAN;
    let mut change = f64::NAN;
    for it in 1..=params.max_iter {
        change = 0.0;
        match params.sweep {
            Sweep::GaussSeidel => {
                let v = u.values_mut();
                for (slot, &n) in interior.iter().enumerate() {
                    let new = op.apply_at(v, slot);
                    change = f64::max(change, (new - v[n]).abs());
                    v[n] = new;
                }
            }
            Sweep::Jacobi => {
                let cur = u.values();
                let fresh: Vec<f64> = match &pool {
                    Some(pool) => pool.install(|| {
                        (0..interior.len())
                            .into_par_iter()
                            .map(|slot| op.apply_at(cur, slot))
                            .collect()
                    }),
                    None => (0..interior.len())
                        .map(|slot| op.apply_at(cur, slot))
                        .collect(),
                };
                next.copy_from_slice(cur);
                for (slot, &n) in interior.iter().enumerate() {
                    change = f64::max(change, (fresh[slot] - cur[n]).abs());
                    next[n] = fresh[slot];
                }
                u.values_mut().copy_from_slice(&next);
            }
        }
        if !change.is_finite() {
            return Err(Error::NonFinite(format!("value iteration sweep {it}")));
        }
        report.iterations = it;
        if change < params.tol {
            residual = op.residual(u.values());
            if residual < params.tol {
                report.converged = true;
                break;
            }
        }
    }
    if !report.converged {
        residual = op.residual(u.values());
    }
    report.residual = residual;
    report.sup_change = change;
    if swapped {
        u = u.map(|x| -x);
    }
    report.wall_time_s = Some(started.elapsed().as_secs_f64());
    Ok((u, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{BoundaryData, DomainSpec};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn line(h: f64) -> Arc<Grid> {
        Arc::new(Grid::new(DomainSpec::interval(-1.0, 1.0, h)).unwrap())
    }

    fn node_at(g: &Grid, x: f64) -> usize {
        g.interior()
            .iter()
            .copied()
            .find(|&n| (g.coords(n)[0] - x).abs() < 1e-9)
            .unwrap()
    }

    #[test]
    fn linear_is_fixed_without_running_cost() {
        let g = line(0.05);
        let u = GridFunction::from_fn(g.clone(), |p| p[0]);
        let n = node_at(&g, 0.2);
        assert!((dpp_update(&u, n, 0.2, 0.0).unwrap() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn constant_loses_running_cost() {
        let g = line(0.05);
        let u = GridFunction::constant(g.clone(), 3.0);
        let n = node_at(&g, 0.0);
        assert!((dpp_update(&u, n, 0.1, 1.0).unwrap() - (3.0 - 0.005)).abs() < 1e-15);
    }

    #[test]
    fn parabola_is_nearly_fixed() {
        let g = line(0.02);
        let u = GridFunction::from_fn(g.clone(), |p| 0.5 * p[0] * p[0] - 0.5);
        let n = node_at(&g, 0.5);
        assert!((dpp_update(&u, n, 0.1, 1.0).unwrap() - u.get(n)).abs() <= 1e-3);
    }

    #[test]
    fn shrinking_ball_near_collar() {
        let g = line(0.1);
        let op = DppOperator::new(g.clone(), 0.3, 1.0).unwrap();
        assert!((op.radius(0) - 0.1).abs() < 1e-12);
        assert_eq!(op.stencil(0).len(), 3);
        let mid = g.slot(node_at(&g, 0.0));
        assert!((op.radius(mid) - 0.3).abs() < 1e-12);
        assert_eq!(op.stencil(mid).len(), 7);
        assert!(dpp_update(&GridFunction::zeros(g.clone()), g.boundary()[0], 0.3, 1.0).is_err());
        assert!(DppOperator::new(g, 0.05, 1.0).is_err());
    }

    #[test]
    fn flat_residual_is_half_eps_squared() {
        let g = line(0.01);
        let u = GridFunction::constant(g.clone(), -0.25);
        let r = supersolution_residual(&u, 0.05, 1.0).unwrap();
        let n = node_at(&g, 0.0);
        assert!((r.get(n) - 0.00125).abs() < 1e-15);
    }

    fn zero_data(h: f64) -> Problem {
        Problem::from_expr(DomainSpec::interval(-1.0, 1.0, h), "0", 1.0).unwrap()
    }

    #[test]
    fn zero_data_coarse() {
        let pb = zero_data(0.01);
        let (u, rep) = value_iteration(&pb, &GameParams::new(0.05)).unwrap();
        assert!(rep.converged, "{rep:?}");
        assert!(u.sup_error(|p| 0.5 * p[0] * p[0] - 0.5) < 0.05);
        let r = supersolution_residual(&u, 0.05, 1.0).unwrap();
        for &n in pb.grid.interior() {
            assert!(r.get(n).abs() < 1e-6);
        }
    }

    #[test]
    fn monotone_tilted_problem() {
        let g = line(0.01);
        let b = BoundaryData::from_fn(&g, |p| if p[0] > 0.0 { 10.0 } else { 0.0 }).unwrap();
        let pb = Problem::new(g, b, 1.0).unwrap();
        let mut params = GameParams::new(0.05);
        params.tol = 1e-6;
        let (u, rep) = value_iteration(&pb, &params).unwrap();
        assert!(rep.converged);
        assert!(u.sup_error(|p| 0.5 * (p[0] + 5.0).powi(2) - 8.0) < 0.05);
    }

    #[test]
    fn jacobi_and_threads_agree() {
        let pb = zero_data(0.02);
        let mut params = GameParams::new(0.1);
        params.sweep = Sweep::Jacobi;
        params.tol = 1e-9;
        let (a, ra) = value_iteration(&pb, &params).unwrap();
        params.threads = 3;
        let (b, rb) = value_iteration(&pb, &params).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra.iterations, rb.iterations);
        assert_eq!(ra.residual, rb.residual);
        params.sweep = Sweep::GaussSeidel;
        let (c, _) = value_iteration(&pb, &params).unwrap();
        assert!(a.sup_distance(&c).unwrap() < 1e-6);
    }

    #[test]
    fn negative_tau_swaps_roles() {
        let pb = zero_data(0.02);
        let flipped = pb.transformed(|v| -v, -1.0);
        let params = GameParams::new(0.1);
        let (u, _) = value_iteration(&pb, &params).unwrap();
        let (w, rep) = value_iteration(&flipped, &params).unwrap();
        assert!(rep.roles_swapped);
        assert!(u.map(|x| -x).sup_distance(&w).unwrap() < 1e-12);
    }

    #[test]
    fn iteration_limit_is_reported() {
        let pb = zero_data(0.02);
        let mut params = GameParams::new(0.1);
        params.max_iter = 3;
        let (_, rep) = value_iteration(&pb, &params).unwrap();
        assert!(!rep.converged);
        assert_eq!(rep.iterations, 3);
    }

    #[test]
    fn iterates_decrease_from_the_top() {
        let pb = zero_data(0.02);
        let op = DppOperator::new(pb.grid.clone(), 0.1, 1.0).unwrap();
        let mut u = GridFunction::constant(pb.grid.clone(), 0.0);
        u.set_boundary(&pb.g);
        for _ in 0..50 {
            let t = op.apply(&u);
            for &n in pb.grid.interior() {
                assert!(t.get(n) <= u.get(n) + 1e-15);
            }
            u = t;
        }
    }

    #[test]
    fn operator_monotone_and_shift_invariant() {
        let g = Arc::new(Grid::new(DomainSpec::unit_disc(0.1)).unwrap());
        let op = DppOperator::new(g.clone(), 0.25, 0.7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let u = GridFunction::from_fn(g.clone(), |_| rng.random_range(-1.0..1.0));
            let v = u.map(|x| x + 0.3);
            let (tu, tv) = (op.apply(&u), op.apply(&v));
            for &n in g.interior() {
                assert!(tu.get(n) <= tv.get(n));
                assert!((tv.get(n) - tu.get(n) - 0.3).abs() <= 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn maximum_principle(gl in -3.0f64..3.0, gr in -3.0f64..3.0, tau in 0.0f64..2.0) {
            let g = line(0.05);
            let b = BoundaryData::from_fn(&g, |p| if p[0] < 0.0 { gl } else { gr }).unwrap();
            let pb = Problem::new(g, b, tau).unwrap();
            let mut params = GameParams::new(0.1);
            params.tol = 1e-6;
            let (u, _) = value_iteration(&pb, &params).unwrap();
            let top = gl.max(gr);
            for &n in pb.grid.interior() {
                prop_assert!(u.get(n) <= top + 1e-6);
            }
        }
    }
}
