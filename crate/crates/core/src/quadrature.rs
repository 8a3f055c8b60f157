//! Gauss–Legendre rules and exponentially weighted time integrals.
//!
//! Integrals of the form `∫_a^b e^{−t/ε} g(t) dt` underflow for small `ε`
//! long before the integrand itself is negligible. They are therefore always
//! evaluated relative to a reference time `t_s`,
//!
//! ```text
//! e^{t_s/ε} ∫_a^b e^{−t/ε} g(t) dt = ∫_a^b e^{(t_s − t)/ε} g(t) dt,
//! ```
//!
//! with `t_s` chosen inside the (compact) support of `g`, so the only
//! exponentials ever formed have arguments bounded by `(b − a)/ε`.

use crate::error::{Error, Result};
use crate::scalar::{count, lit, Real};

/// Default number of Gauss points per knot interval in time.
pub const DEFAULT_TIME_POINTS: usize = 12;

/// Gauss–Legendre nodes and weights on `[−1, 1]`, nodes ascending.
pub fn gauss_rule<T: Real>(n: usize) -> Result<(Vec<T>, Vec<T>)> {
    if !(1..=64).contains(&n) {
        return Err(Error::argument(format!(
            "Gauss-Legendre rule with {n} points not supported (1..=64)"
        )));
    }
    let mut nodes = vec![T::zero(); n];
    let mut weights = vec![T::zero(); n];
    let nf = count::<T>(n);
    let half = lit::<T>(0.5);
    let tol = lit::<T>(4.0) * T::epsilon();
    for i in 0..n.div_ceil(2) {
        // Tricomi-style starting guess, then Newton on P_n.
        let mut x = (T::PI() * (count::<T>(i) + lit(0.75)) / (nf + half)).cos();
        let mut dp = T::one();
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x = x - dx;
            if dx.abs() <= tol {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d.is_finite() {
            dp = d;
        }
        let w = lit::<T>(2.0) / ((T::one() - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = T::zero();
    }
    Ok((nodes, weights))
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre<T: Real>(n: usize, x: T) -> (T, T) {
    let mut p0 = T::one();
    let mut p1 = x;
    for k in 2..=n {
        let kf = count::<T>(k);
        let p2 = ((lit::<T>(2.0) * kf - T::one()) * x * p1 - (kf - T::one()) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { T::one() } else { p1 };
    let dp = count::<T>(n) * (x * p - p0) / (x * x - T::one());
    (p, dp)
}

/// Gauss rule applied per knot interval together with the weight scale `ε`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedRule<T> {
    epsilon: T,
    tau: T,
    nodes: Vec<T>,
    weights: Vec<T>,
}

impl<T: Real> WeightedRule<T> {
    pub fn new(epsilon: T, tau: T, points: usize) -> Result<Self> {
        if !(epsilon > T::zero()) || !epsilon.is_finite() {
            return Err(Error::argument(format!(
                "regularisation parameter must be positive, got {epsilon}"
            )));
        }
        if !(tau > T::zero()) {
            return Err(Error::argument(format!("knot spacing must be positive, got {tau}")));
        }
        if points < 8 {
            return Err(Error::argument(format!(
                "weighted rule needs at least 8 points per interval, got {points}"
            )));
        }
        let (nodes, weights) = gauss_rule(points)?;
        Ok(Self {
            epsilon,
            tau,
            nodes,
            weights,
        })
    }

    pub fn with_default_points(epsilon: T, tau: T) -> Result<Self> {
        Self::new(epsilon, tau, DEFAULT_TIME_POINTS)
    }

    #[inline]
    pub fn epsilon(&self) -> T {
        self.epsilon
    }

    #[inline]
    pub fn tau(&self) -> T {
        self.tau
    }

    #[inline]
    pub fn points(&self) -> usize {
        self.nodes.len()
    }

    /// Calls `f(t, w)` for every quadrature node of `[lo, hi]` (no weight applied).
    #[inline]
    pub fn for_each_node(&self, lo: T, hi: T, mut f: impl FnMut(T, T)) {
        let half = lit::<T>(0.5) * (hi - lo);
        let mid = lit::<T>(0.5) * (hi + lo);
        for (&x, &w) in self.nodes.iter().zip(&self.weights) {
            f(mid + half * x, half * w);
        }
    }

    /// Breakpoints of `[a, b]` at the knots `iτ` strictly inside it.
    fn breakpoints(&self, a: T, b: T) -> Vec<T> {
        let mut pts = vec![a];
        let fuzz = lit::<T>(1e-12) * self.tau;
        let mut i = (a / self.tau).floor() + T::one();
        loop {
            let t = i * self.tau;
            if t >= b - fuzz {
                break;
            }
            if t > a + fuzz {
                pts.push(t);
            }
            i = i + T::one();
        }
        pts.push(b);
        pts
    }

    /// Value of `e^{shift/ε} ∫_a^b e^{−t/ε} g(t) dt` together with the largest
    /// exponent magnitude actually evaluated.
    pub fn shifted_weighted_integral_traced(
        &self,
        g: impl Fn(T) -> T,
        a: T,
        b: T,
        shift: T,
    ) -> Result<(T, T)> {
        if !(a <= b) {
            return Err(Error::argument(format!("integration bounds reversed: [{a}, {b}]")));
        }
        let mut total = T::zero();
        let mut max_arg = T::zero();
        let mut failure = None;
        let pts = self.breakpoints(a, b);
        for pair in pts.windows(2) {
            self.for_each_node(pair[0], pair[1], |t, w| {
                let v = g(t);
                if !v.is_finite() && failure.is_none() {
                    failure = Some(t);
                }
                let arg = (shift - t) / self.epsilon;
                max_arg = max_arg.max(arg.abs());
                total = total + w * arg.exp() * v;
            });
        }
        if let Some(t) = failure {
            return Err(Error::numeric("weighted integrand", format!("t = {t}")));
        }
        if !total.is_finite() {
            return Err(Error::numeric(
                "weighted integral",
                format!("[{a}, {b}] with shift {shift}"),
            ));
        }
        Ok((total, max_arg))
    }

    pub fn shifted_weighted_integral(&self, g: impl Fn(T) -> T, a: T, b: T, shift: T) -> Result<T> {
        self.shifted_weighted_integral_traced(g, a, b, shift)
            .map(|(v, _)| v)
    }
}

/// Free-function form of [`WeightedRule::shifted_weighted_integral`].
pub fn shifted_weighted_integral<T: Real>(
    g: impl Fn(T) -> T,
    a: T,
    b: T,
    shift: T,
    rule: &WeightedRule<T>,
) -> Result<T> {
    rule.shifted_weighted_integral(g, a, b, shift)
}
