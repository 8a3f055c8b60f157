//! Piecewise linear finite elements on a uniform mesh of `[0, 1]` with
//! homogeneous Dirichlet conditions.

use crate::error::{Error, Result};
use crate::linalg::Tridiagonal;
use crate::quadrature::gauss_rule;
use crate::scalar::{count, lit, Real};

/// Gauss points per cell for non-polynomial spatial integrands.
pub const CELL_QUADRATURE_POINTS: usize = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct SpaceMesh<T> {
    cells: usize,
    h: T,
    gauss_nodes: Vec<T>,
    gauss_weights: Vec<T>,
}

impl<T: Real> SpaceMesh<T> {
    /// Uniform mesh with `cells` elements; the `cells − 1` interior nodes are the unknowns.
    pub fn new(cells: usize) -> Result<Self> {
        if cells < 2 {
            return Err(Error::argument(format!(
                "spatial mesh needs at least 2 cells, got {cells}"
            )));
        }
        let (gauss_nodes, gauss_weights) = gauss_rule(CELL_QUADRATURE_POINTS)?;
        Ok(Self {
            cells,
            h: T::one() / count(cells),
            gauss_nodes,
            gauss_weights,
        })
    }

    #[inline]
    pub fn cells(&self) -> usize {
        self.cells
    }

    #[inline]
    pub fn h(&self) -> T {
        self.h
    }

    /// Interior degrees of freedom, `N_x − 1`.
    #[inline]
    pub fn dofs(&self) -> usize {
        self.cells - 1
    }

    #[inline]
    pub fn node(&self, j: usize) -> T {
        if j == self.cells {
            T::one()
        } else {
            count::<T>(j) * self.h
        }
    }

    /// Coordinates of the interior nodes, in dof order.
    pub fn interior_nodes(&self) -> Vec<T> {
        (1..self.cells).map(|j| self.node(j)).collect()
    }

    /// Quadrature points `(x, w)` of cell `c`.
    #[inline]
    pub fn for_each_cell_point(&self, c: usize, mut f: impl FnMut(T, T)) {
        let half = lit::<T>(0.5) * self.h;
        let mid = self.node(c) + half;
        for (&x, &w) in self.gauss_nodes.iter().zip(&self.gauss_weights) {
            f(mid + half * x, half * w);
        }
    }

    /// Cell index and local coordinate in `[0, 1]` of `x`.
    #[inline]
    pub(crate) fn locate(&self, x: T) -> (usize, T) {
        let c = (x / self.h).floor().to_usize().unwrap_or(0).min(self.cells - 1);
        (c, x / self.h - count::<T>(c))
    }

    /// Interior dof indices of the left and right node of cell `c`.
    #[inline]
    pub(crate) fn cell_dofs(&self, c: usize) -> [Option<usize>; 2] {
        [
            c.checked_sub(1),
            (c + 1 < self.cells).then_some(c),
        ]
    }

    /// Linear interpolant through interior nodal values (zero on the boundary).
    #[inline]
    pub(crate) fn interpolate(&self, coeffs: &[T], x: T) -> T {
        let (c, s) = self.locate(x);
        let [l, r] = self.cell_dofs(c);
        let left = l.map_or(T::zero(), |j| coeffs[j]);
        let right = r.map_or(T::zero(), |j| coeffs[j]);
        left * (T::one() - s) + right * s
    }

    /// Slope of the interpolant on the cell containing `x`.
    #[inline]
    pub(crate) fn interpolate_slope(&self, coeffs: &[T], x: T) -> T {
        let (c, _) = self.locate(x);
        let [l, r] = self.cell_dofs(c);
        let left = l.map_or(T::zero(), |j| coeffs[j]);
        let right = r.map_or(T::zero(), |j| coeffs[j]);
        (right - left) / self.h
    }
}

pub fn build_space_mesh<T: Real>(cells: usize) -> Result<SpaceMesh<T>> {
    SpaceMesh::new(cells)
}

/// Mass matrix of the interior hats: `2h/3` on the diagonal, `h/6` off it.
pub fn assemble_mass<T: Real>(mesh: &SpaceMesh<T>) -> Tridiagonal<T> {
    let h = mesh.h();
    let off = h / lit(6.0);
    Tridiagonal::constant(mesh.dofs(), off, lit::<T>(4.0) * off, off)
}

/// Stiffness matrix of the interior hats: `2/h` on the diagonal, `−1/h` off it.
pub fn assemble_stiffness<T: Real>(mesh: &SpaceMesh<T>) -> Tridiagonal<T> {
    let inv = T::one() / mesh.h();
    Tridiagonal::constant(mesh.dofs(), -inv, lit::<T>(2.0) * inv, -inv)
}

/// Element-loop assembly of `∫ c(x) ψ_j ψ_i dx` with the per-cell Gauss rule.
pub fn assemble_weighted_mass<T: Real>(
    mesh: &SpaceMesh<T>,
    coefficient: impl Fn(T) -> T,
) -> Tridiagonal<T> {
    let mut m = Tridiagonal::zeros(mesh.dofs());
    for c in 0..mesh.cells() {
        let dofs = mesh.cell_dofs(c);
        let x0 = mesh.node(c);
        mesh.for_each_cell_point(c, |x, w| {
            let s = (x - x0) / mesh.h();
            let shape = [T::one() - s, s];
            let cw = w * coefficient(x);
            for a in 0..2 {
                let Some(i) = dofs[a] else { continue };
                for b in 0..2 {
                    let Some(j) = dofs[b] else { continue };
                    m.add_to(i, j, cw * shape[a] * shape[b]);
                }
            }
        });
    }
    m
}

/// Load vector `∫ g(x) ψ_i dx` with the per-cell Gauss rule.
pub fn assemble_load_vector<T: Real>(mesh: &SpaceMesh<T>, g: impl Fn(T) -> T) -> Vec<T> {
    let mut out = vec![T::zero(); mesh.dofs()];
    for c in 0..mesh.cells() {
        let dofs = mesh.cell_dofs(c);
        let x0 = mesh.node(c);
        mesh.for_each_cell_point(c, |x, w| {
            let s = (x - x0) / mesh.h();
            let gw = w * g(x);
            if let Some(i) = dofs[0] {
                out[i] = out[i] + gw * (T::one() - s);
            }
            if let Some(i) = dofs[1] {
                out[i] = out[i] + gw * s;
            }
        });
    }
    out
}

/// Value of the P1 function with interior coefficients `coeffs` at `x`.
pub fn eval_fe_function<T: Real>(mesh: &SpaceMesh<T>, coeffs: &[T], x: T) -> Result<T> {
    if coeffs.len() != mesh.dofs() {
        return Err(Error::argument(format!(
            "expected {} nodal coefficients, got {}",
            mesh.dofs(),
            coeffs.len()
        )));
    }
    if !(x >= T::zero() && x <= T::one()) {
        return Err(Error::argument(format!("position {x} outside [0, 1]")));
    }
    Ok(mesh.interpolate(coeffs, x))
}
