//! Rescaled temporal matrices, the space-time Kronecker operator, loads and
//! the nonlinear residual/Jacobian.
//!
//! Row `i` of every temporal quantity is multiplied by `e^{iτ/ε}`. The scaling
//! is never formed explicitly: each entry is integrated with the row's
//! reference time `iτ` as the exponential shift, so the evaluated weights are
//! `e^{(iτ−t)/ε}` with `|iτ − t| ≤ 2τ` on the support of `φ_i`. The same row
//! scaling is applied to loads, residuals and Jacobians, which leaves the
//! solutions unchanged.
//!
//! Space-time coefficient vectors use time-major layout: entry `(k, j)` lives
//! at `k * (N_x − 1) + j`, with `k` the zero-based temporal index.

use crate::error::{Error, Result};
use crate::linalg::{BandedLu, BandedMatrix, DenseMatrix, Tridiagonal};
use crate::quadrature::WeightedRule;
use crate::scalar::{count, lit, Real};
use crate::spatial_fem::{
    assemble_load_vector, assemble_mass, assemble_stiffness, assemble_weighted_mass, SpaceMesh,
};
use crate::temporal_basis::SplineBasis;

/// Temporal half-bandwidth: φ_i and φ_j overlap only for `|i − j| ≤ 3`.
pub const TEMPORAL_HALF_BANDWIDTH: usize = 3;

#[derive(Debug, Clone)]
pub struct TemporalMatrices<T> {
    basis: SplineBasis<T>,
    rule: WeightedRule<T>,
    /// `k̃_ij = e^{iτ/ε} ∫ e^{−t/ε} φ_j'' φ_i'' dt`
    pub stiffness: DenseMatrix<T>,
    /// `l̃_ij = e^{iτ/ε} ∫ e^{−t/ε} φ_j φ_i dt`
    pub mass: DenseMatrix<T>,
    /// Diagonal of `E` as exponents `iτ/ε`, `i = 1..=N_t+1`.
    pub exponents: Vec<T>,
}

impl<T: Real> TemporalMatrices<T> {
    #[inline]
    pub fn basis(&self) -> &SplineBasis<T> {
        &self.basis
    }

    #[inline]
    pub fn rule(&self) -> &WeightedRule<T> {
        &self.rule
    }

    #[inline]
    pub fn epsilon(&self) -> T {
        self.rule.epsilon()
    }

    #[inline]
    pub fn size(&self) -> usize {
        self.basis.size()
    }

    /// `e^{−iτ/ε}` per row; only meaningful when `T/ε` is moderate.
    pub fn inverse_scaling(&self) -> Vec<T> {
        self.exponents.iter().map(|&e| (-e).exp()).collect()
    }

    /// `ε² K̃ + λ L̃`, the rescaled zero-dimensional system matrix.
    pub fn ode_matrix(&self, lambda: T) -> DenseMatrix<T> {
        let eps = self.epsilon();
        self.stiffness.combine(eps * eps, &self.mass, lambda)
    }
}

/// Row shift (reference time) of basis function `i`.
#[inline]
pub(crate) fn row_shift<T: Real>(basis: &SplineBasis<T>, i: usize) -> T {
    count::<T>(i) * basis.grid().tau()
}

pub fn assemble_temporal<T: Real>(basis: &SplineBasis<T>, epsilon: T) -> Result<TemporalMatrices<T>> {
    let rule = WeightedRule::with_default_points(epsilon, basis.grid().tau())?;
    assemble_temporal_with(basis, rule)
}

pub fn assemble_temporal_with<T: Real>(
    basis: &SplineBasis<T>,
    rule: WeightedRule<T>,
) -> Result<TemporalMatrices<T>> {
    let n = basis.size();
    let grid = basis.grid();
    let mut stiffness = DenseMatrix::zeros(n, n);
    let mut mass = DenseMatrix::zeros(n, n);
    for i in 1..=n {
        let (lo_i, hi_i) = basis.support_intervals(i);
        let shift = row_shift(basis, i);
        let j_lo = i.saturating_sub(TEMPORAL_HALF_BANDWIDTH).max(1);
        let j_hi = (i + TEMPORAL_HALF_BANDWIDTH).min(n);
        for j in j_lo..=j_hi {
            let (lo_j, hi_j) = basis.support_intervals(j);
            let (lo, hi) = (lo_i.max(lo_j), hi_i.min(hi_j));
            if lo >= hi {
                continue;
            }
            let (a, b) = (grid.knot(lo), grid.knot(hi));
            let l = rule.shifted_weighted_integral(
                |t| basis.value(i, t, 0) * basis.value(j, t, 0),
                a,
                b,
                shift,
            )?;
            let k = rule.shifted_weighted_integral(
                |t| basis.value(i, t, 2) * basis.value(j, t, 2),
                a,
                b,
                shift,
            )?;
            mass.set(i - 1, j - 1, l);
            stiffness.set(i - 1, j - 1, k);
        }
    }
    let eps = rule.epsilon();
    let exponents = (1..=n).map(|i| row_shift(basis, i) / eps).collect();
    Ok(TemporalMatrices {
        basis: *basis,
        rule,
        stiffness,
        mass,
        exponents,
    })
}

#[derive(Debug, Clone)]
pub struct SpatialMatrices<T> {
    pub mesh: SpaceMesh<T>,
    pub mass: Tridiagonal<T>,
    pub stiffness: Tridiagonal<T>,
}

impl<T: Real> SpatialMatrices<T> {
    pub fn new(mesh: SpaceMesh<T>) -> Self {
        Self {
            mass: assemble_mass(&mesh),
            stiffness: assemble_stiffness(&mesh),
            mesh,
        }
    }
}

/// Everything needed to form the rescaled linear system.
#[derive(Debug, Clone)]
pub struct WeightedSystem<T> {
    pub temporal: TemporalMatrices<T>,
    pub spatial: Option<SpatialMatrices<T>>,
    /// Reaction coefficient of the zero-dimensional problem.
    pub lambda: T,
}

impl<T: Real> WeightedSystem<T> {
    pub fn ode(basis: &SplineBasis<T>, epsilon: T, lambda: T) -> Result<Self> {
        if !(lambda >= T::zero()) {
            return Err(Error::argument(format!("reaction coefficient must be >= 0, got {lambda}")));
        }
        Ok(Self {
            temporal: assemble_temporal(basis, epsilon)?,
            spatial: None,
            lambda,
        })
    }

    pub fn spacetime(basis: &SplineBasis<T>, mesh: SpaceMesh<T>, epsilon: T) -> Result<Self> {
        Ok(Self {
            temporal: assemble_temporal(basis, epsilon)?,
            spatial: Some(SpatialMatrices::new(mesh)),
            lambda: T::zero(),
        })
    }

    #[inline]
    pub fn epsilon(&self) -> T {
        self.temporal.epsilon()
    }

    #[inline]
    pub fn basis(&self) -> &SplineBasis<T> {
        self.temporal.basis()
    }

    pub fn spatial(&self) -> Result<&SpatialMatrices<T>> {
        self.spatial
            .as_ref()
            .ok_or_else(|| Error::argument("weighted system has no spatial factor"))
    }

    pub fn mesh(&self) -> Result<&SpaceMesh<T>> {
        self.spatial().map(|s| &s.mesh)
    }

    /// Number of unknowns of the space-time system.
    pub fn dofs(&self) -> Result<usize> {
        Ok(self.temporal.size() * self.mesh()?.dofs())
    }

    /// Matrix-free product `(ε² K̃ ⊗ M + L̃ ⊗ A) σ`.
    pub fn apply(&self, sigma: &[T]) -> Result<Vec<T>> {
        let sp = self.spatial()?;
        let (nt, ns) = (self.temporal.size(), sp.mesh.dofs());
        if sigma.len() != nt * ns {
            return Err(Error::argument(format!(
                "coefficient vector has length {}, expected {}",
                sigma.len(),
                nt * ns
            )));
        }
        let eps2 = self.epsilon() * self.epsilon();
        let mut sm = Vec::with_capacity(nt * ns);
        let mut sa = Vec::with_capacity(nt * ns);
        for k in 0..nt {
            let row = &sigma[k * ns..(k + 1) * ns];
            sm.extend(sp.mass.matvec(row));
            sa.extend(sp.stiffness.matvec(row));
        }
        let mut out = vec![T::zero(); nt * ns];
        for i in 0..nt {
            let lo = i.saturating_sub(TEMPORAL_HALF_BANDWIDTH);
            let hi = (i + TEMPORAL_HALF_BANDWIDTH).min(nt - 1);
            for k in lo..=hi {
                let kk = eps2 * self.temporal.stiffness.get(i, k);
                let ll = self.temporal.mass.get(i, k);
                for j in 0..ns {
                    out[i * ns + j] = out[i * ns + j] + kk * sm[k * ns + j] + ll * sa[k * ns + j];
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Layout {
    TimeMajor,
    SpaceMajor,
}

/// Sparse space-time matrix with the Kronecker sparsity pattern.
///
/// Rows and columns are addressed by `(temporal index, spatial index)` pairs.
/// Storage is banded, ordered either time- or space-major internally,
/// whichever gives the narrower band; the public interface is always
/// time-major.
#[derive(Debug, Clone)]
pub struct SpaceTimeMatrix<T> {
    nt: usize,
    ns: usize,
    layout: Layout,
    band: BandedMatrix<T>,
}

impl<T: Real> SpaceTimeMatrix<T> {
    pub fn zeros(nt: usize, ns: usize) -> Self {
        let time_major = TEMPORAL_HALF_BANDWIDTH * ns + 1;
        let space_major = nt + TEMPORAL_HALF_BANDWIDTH;
        let (layout, bw) = if time_major <= space_major {
            (Layout::TimeMajor, time_major)
        } else {
            (Layout::SpaceMajor, space_major)
        };
        let bw = bw.min((nt * ns).saturating_sub(1));
        Self {
            nt,
            ns,
            layout,
            band: BandedMatrix::zeros(nt * ns, bw, bw),
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.nt * self.ns
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.nt, self.ns)
    }

    #[inline]
    fn internal(&self, ti: usize, si: usize) -> usize {
        match self.layout {
            Layout::TimeMajor => ti * self.ns + si,
            Layout::SpaceMajor => si * self.nt + ti,
        }
    }

    #[inline]
    fn internal_of_global(&self, g: usize) -> usize {
        self.internal(g / self.ns, g % self.ns)
    }

    #[inline]
    pub fn add(&mut self, ti: usize, si: usize, tj: usize, sj: usize, v: T) {
        let (r, c) = (self.internal(ti, si), self.internal(tj, sj));
        self.band.add_to(r, c, v);
    }

    #[inline]
    pub fn get(&self, ti: usize, si: usize, tj: usize, sj: usize) -> T {
        self.band.get(self.internal(ti, si), self.internal(tj, sj))
    }

    /// Entry at time-major global indices.
    pub fn entry(&self, row: usize, col: usize) -> T {
        self.band
            .get(self.internal_of_global(row), self.internal_of_global(col))
    }

    fn to_internal(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); x.len()];
        for (g, &v) in x.iter().enumerate() {
            y[self.internal_of_global(g)] = v;
        }
        y
    }

    fn from_internal(&self, y: &[T]) -> Vec<T> {
        (0..y.len()).map(|g| y[self.internal_of_global(g)]).collect()
    }

    pub fn apply(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.dim(), "space-time apply dimension mismatch");
        self.from_internal(&self.band.matvec(&self.to_internal(x)))
    }

    /// Multiplies every row `(i, ·)` by `factors[i]`.
    pub fn scale_time_rows(&mut self, factors: &[T]) {
        assert_eq!(factors.len(), self.nt);
        let per_row: Vec<T> = (0..self.dim())
            .map(|r| match self.layout {
                Layout::TimeMajor => factors[r / self.ns],
                Layout::SpaceMajor => factors[r % self.nt],
            })
            .collect();
        self.band.scale_rows(&per_row);
    }

    pub fn is_finite(&self) -> bool {
        self.band.is_finite()
    }

    pub fn to_dense(&self) -> DenseMatrix<T> {
        DenseMatrix::from_fn(self.dim(), self.dim(), |r, c| self.entry(r, c))
    }

    pub fn factor(&self) -> Result<SpaceTimeLu<T>> {
        if !self.is_finite() {
            return Err(Error::numeric("space-time matrix", "assembled entries"));
        }
        Ok(SpaceTimeLu {
            lu: self.band.lu()?,
            matrix: self.clone_shape(),
        })
    }

    fn clone_shape(&self) -> SpaceTimeMatrix<T> {
        SpaceTimeMatrix {
            nt: self.nt,
            ns: self.ns,
            layout: self.layout,
            band: BandedMatrix::zeros(0, 0, 0),
        }
    }

    pub fn solve(&self, rhs: &[T]) -> Result<Vec<T>> {
        Ok(self.factor()?.solve(rhs))
    }
}

#[derive(Debug, Clone)]
pub struct SpaceTimeLu<T> {
    lu: BandedLu<T>,
    matrix: SpaceTimeMatrix<T>,
}

impl<T: Real> SpaceTimeLu<T> {
    pub fn solve(&self, rhs: &[T]) -> Vec<T> {
        let y = self.lu.solve(&self.matrix.to_internal(rhs));
        self.matrix.from_internal(&y)
    }

    pub fn pivot_ratio(&self) -> f64 {
        self.lu.pivot_ratio()
    }
}

/// Explicit rescaled operator `ε² K̃ ⊗ M_h + L̃ ⊗ A_h`.
pub fn assemble_spacetime_operator<T: Real>(ws: &WeightedSystem<T>) -> Result<SpaceTimeMatrix<T>> {
    let sp = ws.spatial()?;
    let nt = ws.temporal.size();
    let ns = sp.mesh.dofs();
    if sp.mass.len() != ns || sp.stiffness.len() != ns {
        return Err(Error::argument("spatial matrices do not match the mesh"));
    }
    let eps2 = ws.epsilon() * ws.epsilon();
    let mut op = SpaceTimeMatrix::zeros(nt, ns);
    for i in 0..nt {
        let lo = i.saturating_sub(TEMPORAL_HALF_BANDWIDTH);
        let hi = (i + TEMPORAL_HALF_BANDWIDTH).min(nt - 1);
        for k in lo..=hi {
            let kk = eps2 * ws.temporal.stiffness.get(i, k);
            let ll = ws.temporal.mass.get(i, k);
            if kk == T::zero() && ll == T::zero() {
                continue;
            }
            for l in 0..ns {
                let j_lo = l.saturating_sub(1);
                let j_hi = (l + 1).min(ns - 1);
                for j in j_lo..=j_hi {
                    let v = kk * sp.mass.get(l, j) + ll * sp.stiffness.get(l, j);
                    op.add(i, l, k, j, v);
                }
            }
        }
    }
    Ok(op)
}

/// Rescaled load of the zero-dimensional problem, `f̃_i = e^{iτ/ε} ∫ e^{−t/ε} f φ_i dt`.
pub fn assemble_load_ode<T: Real>(
    f: impl Fn(T) -> T,
    basis: &SplineBasis<T>,
    epsilon: T,
) -> Result<Vec<T>> {
    let rule = WeightedRule::with_default_points(epsilon, basis.grid().tau())?;
    (1..=basis.size())
        .map(|i| {
            let (lo, hi) = basis.support_intervals(i);
            rule.shifted_weighted_integral(
                |t| f(t) * basis.value(i, t, 0),
                basis.grid().knot(lo),
                basis.grid().knot(hi),
                row_shift(basis, i),
            )
        })
        .collect()
}

/// Rescaled space-time load `F̃_{k,j} = e^{kτ/ε} ∫∫ e^{−t/ε} f(x,t) φ_k(t) ψ_j(x)`.
pub fn assemble_load<T: Real>(
    f: impl Fn(T, T) -> T,
    basis: &SplineBasis<T>,
    mesh: &SpaceMesh<T>,
    epsilon: T,
) -> Result<Vec<T>> {
    let rule = WeightedRule::with_default_points(epsilon, basis.grid().tau())?;
    let ns = mesh.dofs();
    let mut out = vec![T::zero(); basis.size() * ns];
    let mut failure = None;
    for_each_time_node(basis, &rule, |t, w, active| {
        if failure.is_some() {
            return;
        }
        let g = assemble_load_vector(mesh, |x| f(x, t));
        if let Some(j) = g.iter().position(|v| !v.is_finite()) {
            failure = Some(format!("t = {t}, near x = {}", mesh.node(j + 1)));
            return;
        }
        for &(i, phi_i, _) in active {
            let a = w * ((row_shift(basis, i) - t) / epsilon).exp() * phi_i;
            let row = &mut out[(i - 1) * ns..i * ns];
            for (r, &gv) in row.iter_mut().zip(&g) {
                *r = *r + a * gv;
            }
        }
    });
    if let Some(loc) = failure {
        return Err(Error::numeric("forcing", loc));
    }
    Ok(out)
}

/// Visits every temporal quadrature node with the active basis functions
/// `(index, φ, φ'')` evaluated there.
pub(crate) fn for_each_time_node<T: Real>(
    basis: &SplineBasis<T>,
    rule: &WeightedRule<T>,
    mut f: impl FnMut(T, T, &[(usize, T, T)]),
) {
    let grid = basis.grid();
    let mut active = Vec::with_capacity(5);
    for m in 0..grid.intervals() {
        rule.for_each_node(grid.knot(m), grid.knot(m + 1), |t, w| {
            active.clear();
            active.extend(
                basis
                    .active_on_interval(m)
                    .map(|k| (k, basis.value(k, t, 0), basis.value(k, t, 2))),
            );
            f(t, w, &active);
        });
    }
}

/// Discrete space-time field `u(x,t) = Σ σ_{k,j} φ_k(t) ψ_j(x)`.
#[derive(Debug, Clone)]
pub struct SpaceTimeSolution<T> {
    pub coeffs: Vec<T>,
    basis: SplineBasis<T>,
    mesh: SpaceMesh<T>,
    epsilon: T,
    p: u32,
}

impl<T: Real> SpaceTimeSolution<T> {
    /// `p = 0` marks a linear solution.
    pub fn new(coeffs: Vec<T>, basis: SplineBasis<T>, mesh: SpaceMesh<T>, epsilon: T, p: u32) -> Result<Self> {
        let expected = basis.size() * mesh.dofs();
        if coeffs.len() != expected {
            return Err(Error::argument(format!(
                "space-time coefficient vector has length {}, expected {expected}",
                coeffs.len()
            )));
        }
        Ok(Self {
            coeffs,
            basis,
            mesh,
            epsilon,
            p,
        })
    }

    pub fn zeros(basis: SplineBasis<T>, mesh: SpaceMesh<T>, epsilon: T, p: u32) -> Self {
        let n = basis.size() * mesh.dofs();
        Self {
            coeffs: vec![T::zero(); n],
            basis,
            mesh,
            epsilon,
            p,
        }
    }

    pub fn with_coeffs(&self, coeffs: Vec<T>) -> Result<Self> {
        Self::new(coeffs, self.basis, self.mesh.clone(), self.epsilon, self.p)
    }

    #[inline]
    pub fn basis(&self) -> &SplineBasis<T> {
        &self.basis
    }

    #[inline]
    pub fn mesh(&self) -> &SpaceMesh<T> {
        &self.mesh
    }

    #[inline]
    pub fn epsilon(&self) -> T {
        self.epsilon
    }

    #[inline]
    pub fn p(&self) -> u32 {
        self.p
    }

    #[inline]
    pub fn coefficient(&self, k: usize, j: usize) -> T {
        self.coeffs[k * self.mesh.dofs() + j]
    }

    /// Interior nodal values of `∂_t^{deriv} u(·, t)`.
    pub fn nodal_values(&self, t: T, deriv: usize) -> Vec<T> {
        let ns = self.mesh.dofs();
        let m = self.basis.grid().interval_of(t);
        let mut out = vec![T::zero(); ns];
        for k in self.basis.active_on_interval(m) {
            let phi = self.basis.value(k, t, deriv);
            if phi == T::zero() {
                continue;
            }
            for (o, &c) in out.iter_mut().zip(&self.coeffs[(k - 1) * ns..k * ns]) {
                *o = *o + phi * c;
            }
        }
        out
    }

    /// `∂_t^{time_deriv} ∂_x^{space_deriv} u(x, t)` with `space_deriv ≤ 1`.
    pub fn eval(&self, x: T, t: T, time_deriv: usize, space_deriv: usize) -> T {
        let (c, s) = self.mesh.locate(x);
        let [l, r] = self.mesh.cell_dofs(c);
        let m = self.basis.grid().interval_of(t);
        let ns = self.mesh.dofs();
        let (wl, wr) = if space_deriv == 0 {
            (T::one() - s, s)
        } else {
            let inv = T::one() / self.mesh.h();
            (-inv, inv)
        };
        self.basis
            .active_on_interval(m)
            .map(|k| {
                let phi = self.basis.value(k, t, time_deriv);
                let left = l.map_or(T::zero(), |j| self.coeffs[(k - 1) * ns + j]);
                let right = r.map_or(T::zero(), |j| self.coeffs[(k - 1) * ns + j]);
                phi * (wl * left + wr * right)
            })
            .sum()
    }

    pub fn value(&self, x: T, t: T) -> T {
        self.eval(x, t, 0, 0)
    }

    pub fn dt(&self, x: T, t: T) -> T {
        self.eval(x, t, 1, 0)
    }

    pub fn dtt(&self, x: T, t: T) -> T {
        self.eval(x, t, 2, 0)
    }

    pub fn dx(&self, x: T, t: T) -> T {
        self.eval(x, t, 0, 1)
    }
}

fn check_exponent(p: u32) -> Result<()> {
    if p < 3 {
        return Err(Error::argument(format!("nonlinearity exponent must be >= 3, got {p}")));
    }
    Ok(())
}

/// `(p/2)|u|^{p−2}u` and `(p(p−1)/2)|u|^{p−2}`.
#[inline]
fn nonlinearity<T: Real>(u: T, p: u32) -> (T, T) {
    let pf = count::<T>(p as usize);
    let a = u.abs().powi(p as i32 - 2);
    (lit::<T>(0.5) * pf * a * u, lit::<T>(0.5) * pf * (pf - T::one()) * a)
}

fn nonlinear_terms<T: Real>(
    u: &SpaceTimeSolution<T>,
    p: u32,
    mut jacobian: Option<&mut SpaceTimeMatrix<T>>,
) -> Result<Vec<T>> {
    check_exponent(p)?;
    let basis = u.basis();
    let mesh = u.mesh();
    let eps = u.epsilon();
    let rule = WeightedRule::with_default_points(eps, basis.grid().tau())?;
    let ns = mesh.dofs();
    let mut residual = vec![T::zero(); basis.size() * ns];
    let mut failure = None;
    for_each_time_node(basis, &rule, |t, w, active| {
        if failure.is_some() {
            return;
        }
        let nodal = u.nodal_values(t, 0);
        let g = assemble_load_vector(mesh, |x| nonlinearity(mesh.interpolate(&nodal, x), p).0);
        if let Some(j) = g.iter().position(|v| !v.is_finite()) {
            failure = Some(format!("t = {t}, near x = {}", mesh.node(j + 1)));
            return;
        }
        let s = jacobian
            .as_ref()
            .map(|_| assemble_weighted_mass(mesh, |x| nonlinearity(mesh.interpolate(&nodal, x), p).1));
        for &(i, phi_i, _) in active {
            let a = w * ((row_shift(basis, i) - t) / eps).exp() * phi_i;
            let row = &mut residual[(i - 1) * ns..i * ns];
            for (r, &gv) in row.iter_mut().zip(&g) {
                *r = *r + a * gv;
            }
            if let (Some(jac), Some(s)) = (jacobian.as_deref_mut(), s.as_ref()) {
                for &(k, phi_k, _) in active {
                    let b = a * phi_k;
                    for l in 0..ns {
                        for j in l.saturating_sub(1)..=(l + 1).min(ns - 1) {
                            jac.add(i - 1, l, k - 1, j, b * s.get(l, j));
                        }
                    }
                }
            }
        }
    });
    if let Some(loc) = failure {
        return Err(Error::numeric("nonlinear term", loc));
    }
    if let Some(jac) = jacobian {
        if !jac.is_finite() {
            return Err(Error::numeric("nonlinear Jacobian", "assembled entries"));
        }
    }
    Ok(residual)
}

/// Rescaled `B(u; φ_k ψ_j) = (p/2) ∫ e^{−t/ε} ⟨|u|^{p−2}u, φ_k ψ_j⟩ dt`.
pub fn assemble_nonlinear_residual<T: Real>(u: &SpaceTimeSolution<T>, p: u32) -> Result<Vec<T>> {
    nonlinear_terms(u, p, None)
}

/// Rescaled Newton matrix: the linear operator plus the `(p(p−1)/2)|u|^{p−2}`
/// weighted mass term.
pub fn assemble_nonlinear_jacobian<T: Real>(
    ws: &WeightedSystem<T>,
    u: &SpaceTimeSolution<T>,
    p: u32,
) -> Result<SpaceTimeMatrix<T>> {
    let mut jac = assemble_spacetime_operator(ws)?;
    nonlinear_terms(u, p, Some(&mut jac))?;
    Ok(jac)
}

/// Full rescaled residual `Aσ + B(u) − F̃` (drop the `B` term with `p = 0`).
pub fn full_residual<T: Real>(
    ws: &WeightedSystem<T>,
    u: &SpaceTimeSolution<T>,
    p: u32,
    load: &[T],
) -> Result<Vec<T>> {
    let mut r = ws.apply(&u.coeffs)?;
    if p != 0 {
        for (ri, bi) in r.iter_mut().zip(assemble_nonlinear_residual(u, p)?) {
            *ri = *ri + bi;
        }
    }
    for (ri, &fi) in r.iter_mut().zip(load) {
        *ri = *ri - fi;
    }
    Ok(r)
}

/// `𝓘_ε(u) = ∫ e^{−t/ε} (ε²‖u_tt‖² + ‖∂_x u‖² + ‖u‖_p^p − 2⟨f,u⟩) dt`.
///
/// Uses the plain weight `e^{−t/ε}`; intended for moderate `ε`. `p = 0`
/// drops the `L^p` term.
pub fn evaluate_functional<T: Real>(
    u: &SpaceTimeSolution<T>,
    f: impl Fn(T, T) -> T,
    p: u32,
) -> Result<T> {
    if p != 0 {
        check_exponent(p)?;
    }
    let basis = u.basis();
    let mesh = u.mesh();
    let eps = u.epsilon();
    let rule = WeightedRule::with_default_points(eps, basis.grid().tau())?;
    let mut total = T::zero();
    for_each_time_node(basis, &rule, |t, w, _| {
        let vals = u.nodal_values(t, 0);
        let curv = u.nodal_values(t, 2);
        let mut slab = T::zero();
        for c in 0..mesh.cells() {
            mesh.for_each_cell_point(c, |x, wx| {
                let v = mesh.interpolate(&vals, x);
                let vtt = mesh.interpolate(&curv, x);
                let vx = mesh.interpolate_slope(&vals, x);
                let mut e = eps * eps * vtt * vtt + vx * vx - lit::<T>(2.0) * f(x, t) * v;
                if p != 0 {
                    e = e + v.abs().powi(p as i32);
                }
                slab = slab + wx * e;
            });
        }
        total = total + w * (-t / eps).exp() * slab;
    });
    if !total.is_finite() {
        return Err(Error::numeric("functional", "space-time quadrature"));
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::temporal_basis::TimeGrid;
    use approx::assert_relative_eq;

    fn basis(t: f64, n: usize) -> SplineBasis<f64> {
        SplineBasis::new(TimeGrid::new(t, n).unwrap())
    }

    #[test]
    fn sparsity_follows_supports() {
        let b = basis(2.0, 16);
        let tm = assemble_temporal(&b, 0.25).unwrap();
        for i in 1..=b.size() {
            for j in 1..=b.size() {
                let (a0, a1) = b.support(i).unwrap();
                let (b0, b1) = b.support(j).unwrap();
                if a1.min(b1) <= a0.max(b0) {
                    assert_eq!(tm.mass.get(i - 1, j - 1), 0.0);
                    assert_eq!(tm.stiffness.get(i - 1, j - 1), 0.0);
                } else {
                    assert!(tm.mass.get(i - 1, j - 1) > 0.0, "({i},{j})");
                }
            }
        }
    }

    #[test]
    fn unscaled_matrices_are_symmetric() {
        let b = basis(2.0, 16);
        let tm = assemble_temporal(&b, 0.5).unwrap();
        let inv = tm.inverse_scaling();
        for m in [&tm.stiffness, &tm.mass] {
            let un = m.scale_rows(&inv);
            let diff = un.combine(1.0, &un.transpose(), -1.0);
            assert!(diff.frobenius_norm() <= 1e-12 * un.frobenius_norm());
        }
    }

    #[test]
    fn interior_diagonal_is_translation_invariant() {
        let b = basis(2.0, 32);
        let eps = 0.05;
        let tm = assemble_temporal(&b, eps).unwrap();
        let tau = b.grid().tau();
        let rule = WeightedRule::with_default_points(eps, tau).unwrap();
        let reference = rule
            .shifted_weighted_integral(
                |s| crate::temporal_basis::raw_translate(0, tau, s, 0).powi(2),
                -2.0 * tau,
                2.0 * tau,
                0.0,
            )
            .unwrap();
        for i in 3..=30 {
            assert_relative_eq!(tm.mass.get(i - 1, i - 1), reference, max_relative = 1e-12);
        }
    }

    #[test]
    fn operator_matches_matrix_free_product() {
        let b = basis(1.0, 6);
        let mesh = SpaceMesh::new(5).unwrap();
        let ws = WeightedSystem::spacetime(&b, mesh, 0.3).unwrap();
        let op = assemble_spacetime_operator(&ws).unwrap();
        let n = op.dim();
        for col in [0usize, 3, 7, n - 1] {
            let mut e = vec![0.0; n];
            e[col] = 1.0;
            let a = op.apply(&e);
            let m = ws.apply(&e).unwrap();
            for (x, y) in a.iter().zip(&m) {
                assert!((x - y).abs() <= 1e-13 * (1.0 + y.abs()));
            }
        }
    }

    #[test]
    fn both_layouts_agree() {
        // 4 spatial dofs: time-major band 13 > space-major band 10.
        let b = basis(1.0, 6);
        let ws = WeightedSystem::spacetime(&b, SpaceMesh::new(5).unwrap(), 0.3).unwrap();
        let op = assemble_spacetime_operator(&ws).unwrap();
        assert_eq!(op.layout, Layout::SpaceMajor);
        let ws2 = WeightedSystem::spacetime(&basis(2.0, 32), SpaceMesh::new(3).unwrap(), 0.3).unwrap();
        let op2 = assemble_spacetime_operator(&ws2).unwrap();
        assert_eq!(op2.layout, Layout::TimeMajor);
        for o in [&op, &op2] {
            let x: Vec<f64> = (0..o.dim()).map(|i| ((i * 13) % 7) as f64 - 3.0).collect();
            let b = o.apply(&x);
            let y = o.solve(&b).unwrap();
            for (u, v) in x.iter().zip(&y) {
                assert!((u - v).abs() < 1e-8 * (1.0 + u.abs()));
            }
        }
    }

    #[test]
    fn missing_spatial_factor_is_rejected() {
        let ws = WeightedSystem::ode(&basis(2.0, 8), 0.5, 1.0).unwrap();
        assert!(assemble_spacetime_operator(&ws).is_err());
        assert!(WeightedSystem::ode(&basis(2.0, 8), 0.0, 1.0).is_err());
        assert!(WeightedSystem::spacetime(&basis(2.0, 8), SpaceMesh::new(4).unwrap(), 0.0).is_err());
    }

    #[test]
    fn zero_inputs_give_zero_outputs() {
        let b = basis(2.0, 8);
        let mesh = SpaceMesh::new(4).unwrap();
        assert!(assemble_load(|_, _| 0.0, &b, &mesh, 0.5).unwrap().iter().all(|&v| v == 0.0));
        assert!(assemble_load_ode(|_| 0.0, &b, 0.5).unwrap().iter().all(|&v| v == 0.0));
        let u = SpaceTimeSolution::zeros(b, mesh.clone(), 0.5, 4);
        assert!(assemble_nonlinear_residual(&u, 4).unwrap().iter().all(|&v| v == 0.0));
        assert_eq!(evaluate_functional(&u, |_, _| 0.0, 4).unwrap(), 0.0);
        assert_eq!(evaluate_functional(&u, |x, t| x + t, 4).unwrap(), 0.0);
        let ws = WeightedSystem::spacetime(&b, mesh, 0.5).unwrap();
        let jac = assemble_nonlinear_jacobian(&ws, &u, 4).unwrap();
        let op = assemble_spacetime_operator(&ws).unwrap();
        assert_eq!(jac.to_dense(), op.to_dense());
        assert!(assemble_nonlinear_residual(&u, 2).is_err());
    }

    #[test]
    fn non_finite_forcing_is_reported() {
        let b = basis(2.0, 8);
        let mesh = SpaceMesh::new(4).unwrap();
        let err = assemble_load(|x, _| if x > 0.5 { f64::INFINITY } else { 0.0 }, &b, &mesh, 0.5);
        assert!(matches!(err, Err(Error::Numeric { .. })));
    }

    #[test]
    fn solution_evaluation_matches_tensor_product() {
        let b = basis(2.0, 8);
        let mesh = SpaceMesh::new(4).unwrap();
        let coeffs: Vec<f64> = (0..b.size() * 3).map(|i| (i as f64 * 0.37).sin()).collect();
        let u = SpaceTimeSolution::new(coeffs.clone(), b, mesh.clone(), 0.5, 0).unwrap();
        let (x, t) = (0.3, 0.77);
        let mut expected = 0.0;
        for k in 1..=b.size() {
            for j in 0..3 {
                let mut e = vec![0.0; 3];
                e[j] = 1.0;
                expected += coeffs[(k - 1) * 3 + j]
                    * b.eval_basis(k, t, 0).unwrap()
                    * crate::spatial_fem::eval_fe_function(&mesh, &e, x).unwrap();
            }
        }
        assert_relative_eq!(u.value(x, t), expected, max_relative = 1e-13);
        assert_eq!(u.value(0.4, 0.0), 0.0);
        assert!(u.dt(0.4, 0.0).abs() < 1e-12);
        assert!(SpaceTimeSolution::new(vec![0.0; 5], b, mesh, 0.5, 0).is_err());
    }
}
