//! Direct solvers for the rescaled systems, Newton iteration for the
//! semilinear problem, and condition numbers.

use log::{debug, warn};

use crate::assembly::{
    assemble_load_ode, assemble_nonlinear_jacobian, assemble_spacetime_operator, full_residual,
    SpaceTimeSolution, WeightedSystem,
};
use crate::error::{Error, Result};
use crate::linalg::{norm2, DenseMatrix};
use crate::scalar::{count, lit, to_f64, Real};
use crate::temporal_basis::{SplineBasis, TimeGrid};

/// Ratio `τ/ε` above which the rescaled systems become ill-conditioned.
pub const WELL_CONDITIONED_RATIO: f64 = 2.0;

const REFINEMENT_STEPS: usize = 3;
const LINEAR_RESIDUAL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonConfig {
    /// Threshold on `‖δσ‖₂ / #dof`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 30,
        }
    }
}

impl NewtonConfig {
    pub fn new(tol: f64, max_iter: usize) -> Result<Self> {
        let cfg = Self { tol, max_iter };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::argument(format!("Newton tolerance must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::argument("Newton needs max_iter >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonReport {
    pub iterations: usize,
    /// `‖δσ‖₂ / #dof` per iteration, in order.
    pub update_norms: Vec<f64>,
    pub converged: bool,
}

pub(crate) fn warn_if_ill_conditioned<T: Real>(tau: T, epsilon: T) {
    let ratio = to_f64(tau / epsilon);
    if ratio > WELL_CONDITIONED_RATIO {
        warn!("tau/eps = {ratio:.3} exceeds {WELL_CONDITIONED_RATIO}; the system may be ill-conditioned");
    }
}

fn with_condition(err: Error, condition: f64) -> Error {
    match err {
        Error::Solver { reason, .. } => Error::Solver { reason, condition },
        other => other,
    }
}

/// Solves `(ε² K̃ + λ L̃) σ = F̃` for a prepared zero-dimensional system.
pub fn solve_ode_system<T: Real>(ws: &WeightedSystem<T>, load: &[T]) -> Result<Vec<T>> {
    let a = ws.temporal.ode_matrix(ws.lambda);
    if load.len() != a.rows() {
        return Err(Error::argument(format!(
            "load has length {}, expected {}",
            load.len(),
            a.rows()
        )));
    }
    if !a.is_finite() {
        return Err(Error::numeric("temporal system matrix", "assembled entries"));
    }
    let lu = a
        .lu()
        .map_err(|e| with_condition(e, condition_number(&a).unwrap_or(f64::INFINITY)))?;
    let sigma = lu.solve(load);
    if sigma.iter().any(|v| !v.is_finite()) {
        return Err(Error::Solver {
            reason: "non-finite solution of the temporal system".into(),
            condition: condition_number(&a).unwrap_or(f64::INFINITY),
        });
    }
    Ok(sigma)
}

/// Spline coefficients of the zero-dimensional problem
/// `ε² u'''' − 2ε u''' + u'' + λu = f` with zero initial data.
pub fn solve_ode<T: Real>(lambda: T, epsilon: T, f: impl Fn(T) -> T, grid: &TimeGrid<T>) -> Result<Vec<T>> {
    let basis = SplineBasis::new(*grid);
    warn_if_ill_conditioned(grid.tau(), epsilon);
    let ws = WeightedSystem::ode(&basis, epsilon, lambda)?;
    let load = assemble_load_ode(f, &basis, epsilon)?;
    solve_ode_system(&ws, &load)
}

/// Solves the rescaled space-time system `(ε² K̃ ⊗ M + L̃ ⊗ A) σ = F̃`.
pub fn solve_linear_pde<T: Real>(ws: &WeightedSystem<T>, load: &[T]) -> Result<SpaceTimeSolution<T>> {
    let mesh = ws.mesh()?.clone();
    warn_if_ill_conditioned(ws.basis().grid().tau(), ws.epsilon());
    let op = assemble_spacetime_operator(ws)?;
    if load.len() != op.dim() {
        return Err(Error::argument(format!(
            "load has length {}, expected {}",
            load.len(),
            op.dim()
        )));
    }
    let lu = op.factor()?;
    let mut sigma = lu.solve(load);
    let target = lit::<T>(LINEAR_RESIDUAL_TOL) * norm2(load);
    let residual = |s: &[T]| -> Vec<T> {
        op.apply(s).iter().zip(load).map(|(a, &b)| b - *a).collect()
    };
    let mut r = residual(&sigma);
    for _ in 0..REFINEMENT_STEPS {
        if norm2(&r) <= target {
            break;
        }
        let d = lu.solve(&r);
        for (s, di) in sigma.iter_mut().zip(d) {
            *s = *s + di;
        }
        r = residual(&sigma);
    }
    let rn = norm2(&r);
    if !(rn <= target) {
        return Err(Error::Solver {
            reason: format!(
                "space-time residual {:e} exceeds {:e}",
                to_f64(rn),
                to_f64(target)
            ),
            condition: lu.pivot_ratio(),
        });
    }
    SpaceTimeSolution::new(sigma, *ws.basis(), mesh, ws.epsilon(), 0)
}

/// Newton iteration for the semilinear problem, started from the linear solution.
///
/// Running out of iterations is reported through [`NewtonReport::converged`].
pub fn solve_nonlinear<T: Real>(
    p: u32,
    ws: &WeightedSystem<T>,
    load: &[T],
    cfg: &NewtonConfig,
) -> Result<(SpaceTimeSolution<T>, NewtonReport)> {
    cfg.validate()?;
    if p < 3 {
        return Err(Error::argument(format!("nonlinearity exponent must be >= 3, got {p}")));
    }
    let linear = solve_linear_pde(ws, load)?;
    let mut u = SpaceTimeSolution::new(linear.coeffs, *ws.basis(), ws.mesh()?.clone(), ws.epsilon(), p)?;
    let dofs = count::<T>(u.coeffs.len());
    let mut report = NewtonReport {
        iterations: 0,
        update_norms: Vec::new(),
        converged: false,
    };
    while report.iterations < cfg.max_iter {
        let r = full_residual(ws, &u, p, load)?;
        let jac = assemble_nonlinear_jacobian(ws, &u, p)?;
        let rhs: Vec<T> = r.iter().map(|&v| -v).collect();
        let delta = jac.solve(&rhs)?;
        if delta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Solver {
                reason: format!("non-finite Newton update at iteration {}", report.iterations + 1),
                condition: f64::INFINITY,
            });
        }
        for (c, d) in u.coeffs.iter_mut().zip(&delta) {
            *c = *c + *d;
        }
        let norm = to_f64(norm2(&delta) / dofs);
        report.iterations += 1;
        report.update_norms.push(norm);
        debug!("Newton iteration {}: |d sigma|/#dof = {norm:e}", report.iterations);
        if norm <= cfg.tol {
            report.converged = true;
            break;
        }
    }
    if !report.converged {
        warn!(
            "Newton did not converge in {} iterations (last update {:e})",
            cfg.max_iter,
            report.update_norms.last().copied().unwrap_or(f64::NAN)
        );
    }
    Ok((u, report))
}

/// 2-norm condition number from the singular values.
pub fn condition_number<T: Real>(matrix: &DenseMatrix<T>) -> Result<f64> {
    if matrix.rows() != matrix.cols() {
        return Err(Error::argument(format!(
            "condition number needs a square matrix, got {}x{}",
            matrix.rows(),
            matrix.cols()
        )));
    }
    if !matrix.is_finite() {
        return Err(Error::numeric("matrix", "condition number input"));
    }
    let m = matrix.to_f64();
    let n = m.rows();
    if n == 0 {
        return Err(Error::argument("condition number of an empty matrix"));
    }
    let a = faer::Mat::<f64>::from_fn(n, n, |i, j| m.get(i, j));
    let sv = a
        .singular_values()
        .map_err(|e| Error::Solver {
            reason: format!("singular value decomposition failed: {e:?}"),
            condition: f64::NAN,
        })?;
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(max / min)
}
