//! Independent oracles: the cubic B-spline written piecewise in monomials, and
//! closed-form integrals of `e^{c − u/ε}·polynomial`.

#![allow(dead_code)]

/// Cardinal cubic B-spline on its four unit pieces, in the local variable
/// `σ ∈ [0, 1]` of each piece, coefficients of `σ⁰..σ³` (times 1/6).
const LOCAL: [[f64; 4]; 4] = [
    [0.0, 0.0, 0.0, 1.0],
    [1.0, 3.0, 3.0, -3.0],
    [4.0, 0.0, -6.0, 3.0],
    [1.0, -3.0, 3.0, -1.0],
];

/// `φ_k` (public index, `φ_1` the modified initial function) on knot interval
/// `m` as a polynomial in `σ = (t − mτ)/τ`.
pub fn piece(k: usize, m: usize) -> Vec<f64> {
    let raw = |k: isize| -> Vec<f64> {
        let j = m as isize - k + 2;
        if (0..4).contains(&j) {
            LOCAL[j as usize].iter().map(|c| 1.5 * c / 6.0).collect()
        } else {
            vec![0.0; 4]
        }
    };
    if k == 1 {
        let (a, b, c) = (raw(-1), raw(0), raw(1));
        (0..4).map(|n| 8.0 / 7.0 * a[n] - 4.0 / 7.0 * b[n] + 8.0 / 7.0 * c[n]).collect()
    } else {
        raw(k as isize)
    }
}

/// `d/dt` of a polynomial in `σ = (t − mτ)/τ`.
pub fn deriv(p: &[f64], tau: f64) -> Vec<f64> {
    p.iter().enumerate().skip(1).map(|(n, c)| n as f64 * c / tau).collect()
}

pub fn mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

pub fn eval(p: &[f64], s: f64) -> f64 {
    p.iter().rev().fold(0.0, |acc, c| acc * s + c)
}

/// `∫_0^τ e^{lead − u/ε} P(u/τ) du`.
///
/// For `τ ≤ ε` the exponential is expanded in its Taylor series and integrated
/// term by term; otherwise the antiderivative `−ε e^{−u/ε} Σ_n ε^n P^{(n)}(u)`
/// is used (it cancels badly when `ε ≫ τ`).
pub fn exp_poly_integral(p: &[f64], tau: f64, eps: f64, lead: f64) -> f64 {
    if tau <= eps {
        let r = tau / eps;
        // ∫_0^1 e^{−rσ} σ^n dσ = Σ_k (−r)^k / (k! (n+k+1))
        let moment = |n: usize| -> f64 {
            let mut term = 1.0;
            let mut sum = 0.0;
            for k in 0..60 {
                sum += term / (n + k + 1) as f64;
                term *= -r / (k + 1) as f64;
            }
            sum
        };
        let s: f64 = p.iter().enumerate().map(|(n, c)| c * moment(n)).sum();
        return tau * lead.exp() * s;
    }
    antiderivative_integral(p, tau, eps, lead)
}

fn antiderivative_integral(p: &[f64], tau: f64, eps: f64, lead: f64) -> f64 {
    // coefficients in u
    let mut q: Vec<f64> = p.iter().enumerate().map(|(n, c)| c / tau.powi(n as i32)).collect();
    let mut at_0 = 0.0;
    let mut at_tau = 0.0;
    let mut scale = 1.0;
    while !q.is_empty() {
        at_0 += scale * q[0];
        at_tau += scale * eval(&q, tau);
        scale *= eps;
        q = q.iter().enumerate().skip(1).map(|(n, c)| n as f64 * c).collect();
    }
    let hi = -eps * (lead - tau / eps).exp() * at_tau;
    let lo = -eps * lead.exp() * at_0;
    hi - lo
}

/// Row-shifted weighted integral `e^{iτ/ε} ∫ e^{−t/ε} g(t) dt` of a function
/// given piecewise by `g(m)` on knot interval `m`.
pub fn shifted_integral(i: usize, tau: f64, eps: f64, intervals: usize, g: impl Fn(usize) -> Vec<f64>) -> f64 {
    (0..intervals)
        .map(|m| {
            let p = g(m);
            if p.iter().all(|&c| c == 0.0) {
                return 0.0;
            }
            exp_poly_integral(&p, tau, eps, (i as f64 - m as f64) * tau / eps)
        })
        .sum()
}

/// Value of `φ_k^{(d)}(t)` from the piecewise oracle.
pub fn phi(k: usize, t: f64, d: usize, tau: f64, intervals: usize) -> f64 {
    let m = ((t / tau).floor() as usize).min(intervals - 1);
    let mut p = piece(k, m);
    for _ in 0..d {
        p = deriv(&p, tau);
    }
    if p.is_empty() {
        return 0.0;
    }
    eval(&p, t / tau - m as f64)
}

/// Hat function of interior node `j` (0-based) on `cells` uniform cells, and its slope.
pub fn hat(j: usize, cells: usize, x: f64) -> (f64, f64) {
    let h = 1.0 / cells as f64;
    let xj = (j + 1) as f64 * h;
    let d = (x - xj) / h;
    if d <= -1.0 || d >= 1.0 {
        (0.0, 0.0)
    } else if d < 0.0 {
        (1.0 + d, 1.0 / h)
    } else {
        (1.0 - d, -1.0 / h)
    }
}

/// Composite Simpson rule with `n` (even) subintervals.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * h);
    }
    s * h / 3.0
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    max_abs(&d) / max_abs(b).max(f64::MIN_POSITIVE)
}
