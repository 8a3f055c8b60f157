//! Cubic C² B-splines on a uniform time grid.
//!
//! Every basis function is a peak-normalised translate of the cardinal cubic
//! B-spline written in truncated powers,
//!
//! ```text
//! Φ(s) = s₊³ − 4(s−τ)₊³ + 6(s−2τ)₊³ − 4(s−3τ)₊³ + (s−4τ)₊³,   φ_k(t) = Φ(t − (k−2)τ) / (4τ³),
//! ```
//!
//! so that `supp φ_k = [(k−2)τ, (k+2)τ]` and `φ_k(kτ) = 1`. The three
//! translates that do not vanish at `t = 0` are replaced by the single
//! combination `φ̃ = 8/7 φ₋₁ − 4/7 φ₀ + 8/7 φ₁`, which has zero value and
//! slope at the origin. The public index set is `1..=N_t+1` with `φ_1 = φ̃`.

use crate::error::{Error, Result};
use crate::scalar::{count, lit, Real};

/// Weights of `φ₋₁, φ₀, φ₁` in the modified initial basis function.
pub const INITIAL_COMBINATION: [f64; 3] = [8.0 / 7.0, -4.0 / 7.0, 8.0 / 7.0];

/// Uniform partition of `(0, T]` into `N_t` intervals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid<T> {
    final_time: T,
    intervals: usize,
    tau: T,
}

impl<T: Real> TimeGrid<T> {
    pub fn new(final_time: T, intervals: usize) -> Result<Self> {
        if !(final_time > T::zero()) || !final_time.is_finite() {
            return Err(Error::argument(format!(
                "final time must be positive and finite, got {final_time}"
            )));
        }
        if intervals < 4 {
            return Err(Error::argument(format!(
                "time grid needs at least 4 intervals, got {intervals}"
            )));
        }
        Ok(Self {
            final_time,
            intervals,
            tau: final_time / count(intervals),
        })
    }

    /// Grid with step `tau`; `final_time / tau` must be an integer.
    pub fn from_step(final_time: T, tau: T) -> Result<Self> {
        if !(tau > T::zero()) {
            return Err(Error::argument(format!("time step must be positive, got {tau}")));
        }
        let ratio = final_time / tau;
        let n = ratio.round();
        if (ratio - n).abs() > lit::<T>(1e-9) * ratio.max(T::one()) {
            return Err(Error::argument(format!(
                "time step {tau} does not divide final time {final_time}"
            )));
        }
        Self::new(final_time, n.to_usize().unwrap_or(0))
    }

    #[inline]
    pub fn final_time(&self) -> T {
        self.final_time
    }

    #[inline]
    pub fn intervals(&self) -> usize {
        self.intervals
    }

    #[inline]
    pub fn tau(&self) -> T {
        self.tau
    }

    #[inline]
    pub fn knot(&self, i: usize) -> T {
        if i == self.intervals {
            self.final_time
        } else {
            count::<T>(i) * self.tau
        }
    }

    pub fn knots(&self) -> Vec<T> {
        (0..=self.intervals).map(|i| self.knot(i)).collect()
    }

    /// Knot interval containing `t`; knots belong to the interval on their right,
    /// except `T` itself.
    pub fn interval_of(&self, t: T) -> usize {
        let m = (t / self.tau).floor().to_isize().unwrap_or(0);
        m.clamp(0, self.intervals as isize - 1) as usize
    }
}

/// `Φ^{(deriv)}(s)` for the cardinal cubic B-spline with knot spacing `tau`.
///
/// Zero outside `[0, 4τ]`. The right half is evaluated through the symmetry
/// `Φ(s) = Φ(4τ − s)`, so each side only ever sums the two leading truncated
/// powers.
pub fn truncated_power_phi<T: Real>(s: T, tau: T, deriv: usize) -> T {
    debug_assert!(deriv <= 2);
    let four_tau = lit::<T>(4.0) * tau;
    if s <= T::zero() || s >= four_tau {
        return T::zero();
    }
    let two_tau = lit::<T>(2.0) * tau;
    let (x, sign) = if s > two_tau {
        (four_tau - s, if deriv == 1 { -T::one() } else { T::one() })
    } else {
        (s, T::one())
    };
    let cube = |y: T| -> T {
        if y <= T::zero() {
            return T::zero();
        }
        match deriv {
            0 => y * y * y,
            1 => lit::<T>(3.0) * y * y,
            _ => lit::<T>(6.0) * y,
        }
    };
    sign * (cube(x) - lit::<T>(4.0) * cube(x - tau))
}

/// Peak-normalised translate `φ_k` for any integer `k`, including the raw
/// boundary translates `k = −1, 0, 1`.
#[inline]
pub(crate) fn raw_translate<T: Real>(k: isize, tau: T, t: T, deriv: usize) -> T {
    let shift = <T as num_traits::NumCast>::from(k - 2).expect("index") * tau;
    truncated_power_phi(t - shift, tau, deriv) / (lit::<T>(4.0) * tau * tau * tau)
}

/// Evaluable basis `{φ̃, φ_2, …, φ_{N_t+1}}` of the initial-condition
/// constrained cubic spline space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplineBasis<T> {
    grid: TimeGrid<T>,
}

impl<T: Real> SplineBasis<T> {
    pub fn new(grid: TimeGrid<T>) -> Self {
        Self { grid }
    }

    #[inline]
    pub fn grid(&self) -> &TimeGrid<T> {
        &self.grid
    }

    /// Number of basis functions, `N_t + 1`.
    #[inline]
    pub fn size(&self) -> usize {
        self.grid.intervals + 1
    }

    /// Closed support `[max(0,(k−2)τ), min(T,(k+2)τ)]` of basis function `k`.
    pub fn support(&self, k: usize) -> Result<(T, T)> {
        self.check_index(k)?;
        let (lo, hi) = self.support_intervals(k);
        Ok((self.grid.knot(lo), self.grid.knot(hi)))
    }

    /// Knot indices bounding the support of `k` (assumes a valid index).
    pub(crate) fn support_intervals(&self, k: usize) -> (usize, usize) {
        if k == 1 {
            (0, 3.min(self.grid.intervals))
        } else {
            (k.saturating_sub(2), (k + 2).min(self.grid.intervals))
        }
    }

    /// Basis indices whose support covers knot interval `m`.
    pub fn active_on_interval(&self, m: usize) -> impl Iterator<Item = usize> {
        let n = self.size();
        let first = if m <= 2 { 1 } else { m - 1 };
        let last = (m + 2).min(n);
        (first..=last).filter(move |&k| k == 1 || (k >= 2 && k + 1 >= m && k <= m + 2))
    }

    fn check_index(&self, k: usize) -> Result<()> {
        if k == 0 || k > self.size() {
            return Err(Error::argument(format!(
                "basis index {k} outside 1..={}",
                self.size()
            )));
        }
        Ok(())
    }

    /// Unchecked evaluation of `φ_k^{(deriv)}(t)`.
    #[inline]
    pub fn value(&self, k: usize, t: T, deriv: usize) -> T {
        let tau = self.grid.tau;
        if k == 1 {
            let [a, b, c] = INITIAL_COMBINATION;
            lit::<T>(a) * raw_translate(-1, tau, t, deriv)
                + lit::<T>(b) * raw_translate(0, tau, t, deriv)
                + lit::<T>(c) * raw_translate(1, tau, t, deriv)
        } else {
            raw_translate(k as isize, tau, t, deriv)
        }
    }

    /// `φ_k^{(deriv)}(t)` for `k ∈ 1..=N_t+1`, `t ∈ [0, T]`, `deriv ≤ 2`.
    pub fn eval_basis(&self, k: usize, t: T, deriv: usize) -> Result<T> {
        self.check_index(k)?;
        self.check_time(t)?;
        check_deriv(deriv)?;
        Ok(self.value(k, t, deriv))
    }

    /// `Σ_k coeffs[k−1] φ_k^{(deriv)}(t)`, touching only the functions alive at `t`.
    pub fn spline_eval(&self, coeffs: &[T], t: T, deriv: usize) -> Result<T> {
        if coeffs.len() != self.size() {
            return Err(Error::argument(format!(
                "expected {} spline coefficients, got {}",
                self.size(),
                coeffs.len()
            )));
        }
        self.check_time(t)?;
        check_deriv(deriv)?;
        Ok(self.combination(coeffs, t, deriv))
    }

    #[inline]
    pub(crate) fn combination(&self, coeffs: &[T], t: T, deriv: usize) -> T {
        let m = self.grid.interval_of(t);
        self.active_on_interval(m)
            .map(|k| coeffs[k - 1] * self.value(k, t, deriv))
            .sum()
    }

    fn check_time(&self, t: T) -> Result<()> {
        let slack = lit::<T>(1e-12) * self.grid.final_time;
        if !(t >= -slack && t <= self.grid.final_time + slack) {
            return Err(Error::argument(format!(
                "time {t} outside [0, {}]",
                self.grid.final_time
            )));
        }
        Ok(())
    }
}

fn check_deriv(deriv: usize) -> Result<()> {
    if deriv > 2 {
        return Err(Error::argument(format!(
            "derivative order {deriv} not supported (0, 1 or 2)"
        )));
    }
    Ok(())
}
