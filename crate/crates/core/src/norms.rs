//! Space-time error norms and observed orders of convergence.
//!
//! All norms are unweighted except [`NormTag::Energy`], which carries the
//! weight `e^{−t/ε}`: the weight suppresses errors away from `t = 0` and would
//! hide them from the convergence study.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::assembly::SpaceTimeSolution;
use crate::error::{Error, Result};
use crate::quadrature::WeightedRule;
use crate::scalar::Real;
use crate::spatial_fem::SpaceMesh;
use crate::temporal_basis::SplineBasis;

pub type Field<T> = Arc<dyn Fn(T, T) -> T + Send + Sync>;

/// Reference field given by closures of `(x, t)`; any derivative may be absent.
#[derive(Clone)]
pub struct ExactSolution<T> {
    pub value: Option<Field<T>>,
    pub dt: Option<Field<T>>,
    pub dtt: Option<Field<T>>,
    pub dx: Option<Field<T>>,
}

impl<T> fmt::Debug for ExactSolution<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ExactSolution")
            .field("value", &self.value.is_some())
            .field("dt", &self.dt.is_some())
            .field("dtt", &self.dtt.is_some())
            .field("dx", &self.dx.is_some())
            .finish()
    }
}

impl<T: Real> ExactSolution<T> {
    pub fn new(value: impl Fn(T, T) -> T + Send + Sync + 'static) -> Self {
        Self {
            value: Some(Arc::new(value)),
            dt: None,
            dtt: None,
            dx: None,
        }
    }

    pub fn with_dt(mut self, f: impl Fn(T, T) -> T + Send + Sync + 'static) -> Self {
        self.dt = Some(Arc::new(f));
        self
    }

    pub fn with_dtt(mut self, f: impl Fn(T, T) -> T + Send + Sync + 'static) -> Self {
        self.dtt = Some(Arc::new(f));
        self
    }

    pub fn with_dx(mut self, f: impl Fn(T, T) -> T + Send + Sync + 'static) -> Self {
        self.dx = Some(Arc::new(f));
        self
    }

    /// The identically zero field with all derivatives.
    pub fn zero() -> Self {
        Self::new(|_, _| T::zero())
            .with_dt(|_, _| T::zero())
            .with_dtt(|_, _| T::zero())
            .with_dx(|_, _| T::zero())
    }

    /// Wraps a discrete solution, exposing its exact spline and P1 derivatives.
    pub fn from_solution(u: &SpaceTimeSolution<T>) -> Self {
        let u = Arc::new(u.clone());
        let (a, b, c, d) = (u.clone(), u.clone(), u.clone(), u);
        Self::new(move |x, t| a.value(x, t))
            .with_dt(move |x, t| b.dt(x, t))
            .with_dtt(move |x, t| c.dtt(x, t))
            .with_dx(move |x, t| d.dx(x, t))
    }

    /// `c · self` for every available derivative.
    pub fn scaled(&self, c: T) -> Self {
        let s = |f: &Option<Field<T>>| -> Option<Field<T>> {
            f.clone().map(|g| Arc::new(move |x, t| c * g(x, t)) as Field<T>)
        };
        Self {
            value: s(&self.value),
            dt: s(&self.dt),
            dtt: s(&self.dtt),
            dx: s(&self.dx),
        }
    }

    fn component(&self, d: Derivative) -> Option<&Field<T>> {
        match d {
            Derivative::Value => self.value.as_ref(),
            Derivative::Dt => self.dt.as_ref(),
            Derivative::Dtt => self.dtt.as_ref(),
            Derivative::Dx => self.dx.as_ref(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Derivative {
    Value,
    Dt,
    Dtt,
    Dx,
}

impl Derivative {
    const ALL: [Derivative; 4] = [Self::Value, Self::Dt, Self::Dtt, Self::Dx];

    fn name(self) -> &'static str {
        match self {
            Self::Value => "value",
            Self::Dt => "u_t",
            Self::Dtt => "u_tt",
            Self::Dx => "u_x",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NormTag {
    /// `‖e‖_{L²(L²)}`
    L2L2,
    /// `‖e_t‖_{L²(L²)}`
    H1L2,
    /// `‖e_tt‖_{L²(L²)}`
    H2L2,
    /// `‖∂_x e‖_{L²(L²)}`
    L2H1,
    /// `(∫ e^{−t/ε} (ε²‖e_tt‖² + ‖∂_x e‖²) dt)^{1/2}`
    Energy,
    /// Root-sum-of-squares of the `H1L2`, `H2L2` and `L2H1` seminorms.
    SeminormRss,
}

impl NormTag {
    pub const ALL: [NormTag; 6] = [
        Self::L2L2,
        Self::H1L2,
        Self::H2L2,
        Self::L2H1,
        Self::Energy,
        Self::SeminormRss,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::L2L2 => "L2L2",
            Self::H1L2 => "H1L2",
            Self::H2L2 => "H2L2",
            Self::L2H1 => "L2H1",
            Self::Energy => "Energy",
            Self::SeminormRss => "SeminormRss",
        }
    }

    fn needs(self) -> &'static [Derivative] {
        match self {
            Self::L2L2 => &[Derivative::Value],
            Self::H1L2 => &[Derivative::Dt],
            Self::H2L2 => &[Derivative::Dtt],
            Self::L2H1 => &[Derivative::Dx],
            Self::Energy => &[Derivative::Dtt, Derivative::Dx],
            Self::SeminormRss => &[Derivative::Dt, Derivative::Dtt, Derivative::Dx],
        }
    }
}

impl fmt::Display for NormTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NormTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        NormTag::ALL
            .into_iter()
            .find(|t| t.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::argument(format!("unknown norm tag '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport<T> {
    pub values: BTreeMap<NormTag, T>,
    pub tau: T,
    pub h: T,
    pub epsilon: T,
    pub p: u32,
}

impl<T: Real> ErrorReport<T> {
    pub fn get(&self, tag: NormTag) -> Option<T> {
        self.values.get(&tag).copied()
    }
}

/// Errors of the discrete solution against `exact`, integrated on the
/// solution's own space-time mesh.
pub fn compute_errors<T: Real>(
    u_h: &SpaceTimeSolution<T>,
    exact: &ExactSolution<T>,
    which: &[NormTag],
) -> Result<ErrorReport<T>> {
    let own = ExactSolution::from_solution(u_h);
    let mut report = field_errors(&own, exact, which, u_h.basis(), u_h.mesh(), u_h.epsilon())?;
    report.p = u_h.p();
    Ok(report)
}

/// Norms of `a − b` with `n_q` Gauss points per knot interval in time and six
/// per cell in space.
pub fn field_errors<T: Real>(
    a: &ExactSolution<T>,
    b: &ExactSolution<T>,
    which: &[NormTag],
    basis: &SplineBasis<T>,
    mesh: &SpaceMesh<T>,
    epsilon: T,
) -> Result<ErrorReport<T>> {
    let mut needed = [false; 4];
    for tag in which {
        for d in tag.needs() {
            needed[*d as usize] = true;
        }
    }
    let mut pairs: Vec<Option<(&Field<T>, &Field<T>)>> = vec![None; 4];
    for d in Derivative::ALL {
        if !needed[d as usize] {
            continue;
        }
        match (a.component(d), b.component(d)) {
            (Some(fa), Some(fb)) => pairs[d as usize] = Some((fa, fb)),
            _ => {
                return Err(Error::argument(format!(
                    "requested norm needs {} which a field does not provide",
                    d.name()
                )))
            }
        }
    }
    let grid = basis.grid();
    let rule = WeightedRule::with_default_points(epsilon, grid.tau())?;
    let mut plain = [T::zero(); 4];
    let mut weighted = [T::zero(); 4];
    for m in 0..grid.intervals() {
        rule.for_each_node(grid.knot(m), grid.knot(m + 1), |t, wt| {
            let mut slab = [T::zero(); 4];
            for c in 0..mesh.cells() {
                mesh.for_each_cell_point(c, |x, wx| {
                    for (s, pair) in slab.iter_mut().zip(&pairs) {
                        if let Some((fa, fb)) = pair {
                            let e = fa(x, t) - fb(x, t);
                            *s = *s + wx * e * e;
                        }
                    }
                });
            }
            let weight = (-t / epsilon).exp();
            for d in 0..4 {
                plain[d] = plain[d] + wt * slab[d];
                weighted[d] = weighted[d] + wt * weight * slab[d];
            }
        });
    }
    if plain.iter().chain(&weighted).any(|v| !v.is_finite()) {
        return Err(Error::numeric("error norm", "space-time quadrature"));
    }
    let [v, dt, dtt, dx] = plain;
    let mut values = BTreeMap::new();
    for &tag in which {
        let sq = match tag {
            NormTag::L2L2 => v,
            NormTag::H1L2 => dt,
            NormTag::H2L2 => dtt,
            NormTag::L2H1 => dx,
            NormTag::Energy => {
                epsilon * epsilon * weighted[Derivative::Dtt as usize] + weighted[Derivative::Dx as usize]
            }
            NormTag::SeminormRss => dt + dtt + dx,
        };
        values.insert(tag, sq.max(T::zero()).sqrt());
    }
    Ok(ErrorReport {
        values,
        tau: grid.tau(),
        h: mesh.h(),
        epsilon,
        p: 0,
    })
}

/// Observed orders `log₂(e_k / e_{k+1})`; absent where an error is not positive.
pub fn eoc<T: Real>(errors: &[T]) -> Vec<Option<T>> {
    errors
        .windows(2)
        .map(|w| {
            let ok = |e: T| e > T::zero() && e.is_finite();
            (ok(w[0]) && ok(w[1])).then(|| (w[0] / w[1]).log2())
        })
        .collect()
}
