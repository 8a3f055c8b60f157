//! Manufactured solutions, convergence and conditioning sweeps, and their CSV
//! output. Everything here works in `f64`.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io::{self, Write};
use std::path::PathBuf;
use std::sync::Arc;

use log::info;
use rayon::prelude::*;

use crate::assembly::{assemble_load, SpaceTimeSolution, WeightedSystem};
use crate::error::{Error, Result};
use crate::norms::{compute_errors, ExactSolution, Field, NormTag};
use crate::solvers::{condition_number, solve_linear_pde, solve_nonlinear, solve_ode, NewtonConfig, NewtonReport};
use crate::spatial_fem::SpaceMesh;
use crate::temporal_basis::{SplineBasis, TimeGrid};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regime {
    /// `ε² u_tttt − 2ε u_ttt + u_tt − u_xx (+ (p/2)|u|^{p−2}u) = f`
    Regularised { epsilon: f64 },
    /// `u_tt − u_xx + (p/2)|u|^{p−2}u = f`
    Wave,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaseKind {
    LinReg,
    NonlinReg,
    Wave4,
}

impl CaseKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::LinReg => "linreg",
            Self::NonlinReg => "nonlinreg",
            Self::Wave4 => "wave4",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "linreg" => Ok(Self::LinReg),
            "nonlinreg" => Ok(Self::NonlinReg),
            "wave4" => Ok(Self::Wave4),
            other => Err(Error::argument(format!(
                "unknown case '{other}' (expected linreg, nonlinreg or wave4)"
            ))),
        }
    }
}

#[derive(Clone)]
pub struct ManufacturedCase {
    pub kind: CaseKind,
    pub exact: ExactSolution<f64>,
    pub forcing: Field<f64>,
    pub regime: Regime,
    /// Exponent of the reaction term, 0 when absent.
    pub p: u32,
    pub final_time: f64,
}

impl std::fmt::Debug for ManufacturedCase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ManufacturedCase")
            .field("kind", &self.kind)
            .field("regime", &self.regime)
            .field("p", &self.p)
            .field("final_time", &self.final_time)
            .finish()
    }
}

/// `(T − t)² sin²(2πt)` and its first four derivatives.
fn temporal_profile(final_time: f64, t: f64) -> [f64; 5] {
    let a = [(final_time - t).powi(2), -2.0 * (final_time - t), 2.0];
    let w = 4.0 * PI * t;
    let (s, c) = w.sin_cos();
    let b = [
        0.5 * (1.0 - c),
        2.0 * PI * s,
        8.0 * PI * PI * c,
        -32.0 * PI.powi(3) * s,
        -128.0 * PI.powi(4) * c,
    ];
    [
        a[0] * b[0],
        a[1] * b[0] + a[0] * b[1],
        a[2] * b[0] + 2.0 * a[1] * b[1] + a[0] * b[2],
        3.0 * a[2] * b[1] + 3.0 * a[1] * b[2] + a[0] * b[3],
        6.0 * a[2] * b[2] + 4.0 * a[1] * b[3] + a[0] * b[4],
    ]
}

#[inline]
fn reaction(u: f64, p: u32) -> f64 {
    0.5 * p as f64 * u.abs().powi(p as i32 - 2) * u
}

fn regularised_exact(final_time: f64) -> ExactSolution<f64> {
    let tt = final_time;
    ExactSolution::new(move |x: f64, t| (2.0 * PI * x).sin() * temporal_profile(tt, t)[0])
        .with_dt(move |x: f64, t| (2.0 * PI * x).sin() * temporal_profile(tt, t)[1])
        .with_dtt(move |x: f64, t| (2.0 * PI * x).sin() * temporal_profile(tt, t)[2])
        .with_dx(move |x: f64, t| 2.0 * PI * (2.0 * PI * x).cos() * temporal_profile(tt, t)[0])
}

fn check_inputs(epsilon: f64, final_time: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::argument(format!("epsilon must be positive, got {epsilon}")));
    }
    if !(final_time > 0.0 && final_time.is_finite()) {
        return Err(Error::argument(format!("final time must be positive, got {final_time}")));
    }
    Ok(())
}

/// `u = sin(2πx)(T−t)² sin²(2πt)` for the linear fourth-order problem.
pub fn manufactured_linear_regularised(epsilon: f64, final_time: f64) -> Result<ManufacturedCase> {
    check_inputs(epsilon, final_time)?;
    let tt = final_time;
    let forcing = move |x: f64, t: f64| {
        let g = temporal_profile(tt, t);
        let s = (2.0 * PI * x).sin();
        s * (epsilon * epsilon * g[4] - 2.0 * epsilon * g[3] + g[2]) + 4.0 * PI * PI * s * g[0]
    };
    Ok(ManufacturedCase {
        kind: CaseKind::LinReg,
        exact: regularised_exact(final_time),
        forcing: Arc::new(forcing),
        regime: Regime::Regularised { epsilon },
        p: 0,
        final_time,
    })
}

/// Same exact field with the forcing of the semilinear problem.
pub fn manufactured_nonlinear_regularised(epsilon: f64, final_time: f64, p: u32) -> Result<ManufacturedCase> {
    if p < 3 {
        return Err(Error::argument(format!("nonlinearity exponent must be >= 3, got {p}")));
    }
    let linear = manufactured_linear_regularised(epsilon, final_time)?;
    let base = linear.forcing.clone();
    let tt = final_time;
    let forcing = move |x: f64, t: f64| {
        let u = (2.0 * PI * x).sin() * temporal_profile(tt, t)[0];
        base(x, t) + reaction(u, p)
    };
    Ok(ManufacturedCase {
        kind: CaseKind::NonlinReg,
        forcing: Arc::new(forcing),
        p,
        ..linear
    })
}

/// `u = sin(πx) t sin(πt)` solving `u_tt − u_xx + 2u³ = f`.
pub fn manufactured_wave_p4(final_time: f64) -> Result<ManufacturedCase> {
    check_inputs(1.0, final_time)?;
    let exact = ExactSolution::new(|x: f64, t: f64| (PI * x).sin() * t * (PI * t).sin())
        .with_dt(|x: f64, t: f64| (PI * x).sin() * ((PI * t).sin() + PI * t * (PI * t).cos()))
        .with_dtt(|x: f64, t: f64| {
            (PI * x).sin() * (2.0 * PI * (PI * t).cos() - PI * PI * t * (PI * t).sin())
        })
        .with_dx(|x: f64, t: f64| PI * (PI * x).cos() * t * (PI * t).sin());
    let forcing = |x: f64, t: f64| {
        let sx = (PI * x).sin();
        2.0 * PI * sx * (PI * t).cos() + 2.0 * sx.powi(3) * t.powi(3) * (PI * t).sin().powi(3)
    };
    Ok(ManufacturedCase {
        kind: CaseKind::Wave4,
        exact,
        forcing: Arc::new(forcing),
        regime: Regime::Wave,
        p: 4,
        final_time,
    })
}

pub fn build_case(kind: CaseKind, epsilon: f64, final_time: f64, p: u32) -> Result<ManufacturedCase> {
    match kind {
        CaseKind::LinReg => manufactured_linear_regularised(epsilon, final_time),
        CaseKind::NonlinReg => manufactured_nonlinear_regularised(epsilon, final_time, p),
        CaseKind::Wave4 => manufactured_wave_p4(final_time),
    }
}

const FD_STEP: f64 = 5e-3;
const D1: [f64; 9] = [
    1.0 / 280.0,
    -4.0 / 105.0,
    1.0 / 5.0,
    -4.0 / 5.0,
    0.0,
    4.0 / 5.0,
    -1.0 / 5.0,
    4.0 / 105.0,
    -1.0 / 280.0,
];
const D2: [f64; 9] = [
    -1.0 / 560.0,
    8.0 / 315.0,
    -1.0 / 5.0,
    8.0 / 5.0,
    -205.0 / 72.0,
    8.0 / 5.0,
    -1.0 / 5.0,
    8.0 / 315.0,
    -1.0 / 560.0,
];

/// Eighth-order central difference of `f` at `s`.
fn central(f: impl Fn(f64) -> f64, s: f64, order: usize) -> f64 {
    let (w, scale) = match order {
        1 => (&D1, FD_STEP),
        _ => (&D2, FD_STEP * FD_STEP),
    };
    w.iter()
        .enumerate()
        .map(|(i, c)| c * f(s + (i as f64 - 4.0) * FD_STEP))
        .sum::<f64>()
        / scale
}

fn radical_inverse(mut n: usize, base: usize) -> f64 {
    let (mut out, mut f) = (0.0, 1.0 / base as f64);
    while n > 0 {
        out += f * (n % base) as f64;
        n /= base;
        f /= base as f64;
    }
    out
}

/// First `n` points of the (2, 3) Halton sequence mapped to `[0,1] × [0,T]`.
pub fn halton_points(n: usize, final_time: f64) -> Vec<(f64, f64)> {
    (1..=n)
        .map(|i| (radical_inverse(i, 2), final_time * radical_inverse(i, 3)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualCheck {
    pub samples: usize,
    /// Largest `|L u − f|` with the PDE operator applied by finite differences.
    pub max_residual: f64,
    /// Largest mismatch between the coded derivatives and differences of the value.
    pub max_derivative_mismatch: f64,
}

/// Applies the case's operator to the exact field by finite differences at
/// quasi-random points and compares with the forcing.
pub fn check_manufactured(case: &ManufacturedCase, samples: usize) -> ResidualCheck {
    let ex = &case.exact;
    let (u, ut, utt, ux) = (
        ex.value.clone().expect("manufactured value"),
        ex.dt.clone().expect("manufactured u_t"),
        ex.dtt.clone().expect("manufactured u_tt"),
        ex.dx.clone().expect("manufactured u_x"),
    );
    let mut max_residual = 0.0f64;
    let mut max_mismatch = 0.0f64;
    for (x, t) in halton_points(samples, case.final_time) {
        let fd_t = central(|s| u(x, s), t, 1);
        let fd_tt = central(|s| u(x, s), t, 2);
        let fd_x = central(|s| u(s, t), x, 1);
        let mismatch = (fd_t - ut(x, t))
            .abs()
            .max((fd_tt - utt(x, t)).abs())
            .max((fd_x - ux(x, t)).abs());
        max_mismatch = max_mismatch.max(mismatch);

        let u_xx = central(|s| u(s, t), x, 2);
        let mut lhs = utt(x, t) - u_xx;
        if let Regime::Regularised { epsilon } = case.regime {
            let u_ttt = central(|s| utt(x, s), t, 1);
            let u_tttt = central(|s| utt(x, s), t, 2);
            lhs += epsilon * epsilon * u_tttt - 2.0 * epsilon * u_ttt;
        }
        if case.p != 0 {
            lhs += reaction(u(x, t), case.p);
        }
        max_residual = max_residual.max((lhs - (case.forcing)(x, t)).abs());
    }
    ResidualCheck {
        samples,
        max_residual,
        max_derivative_mismatch: max_mismatch,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Ode,
    Linear,
    Nonlinear,
    Coupled,
    Condsweep,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Ode => "ode",
            Self::Linear => "linear",
            Self::Nonlinear => "nonlinear",
            Self::Coupled => "coupled",
            Self::Condsweep => "condsweep",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "ode" => Ok(Self::Ode),
            "linear" => Ok(Self::Linear),
            "nonlinear" => Ok(Self::Nonlinear),
            "coupled" => Ok(Self::Coupled),
            "condsweep" => Ok(Self::Condsweep),
            other => Err(Error::argument(format!("unknown experiment kind '{other}'"))),
        }
    }

    fn default_case(self) -> CaseKind {
        match self {
            Self::Nonlinear => CaseKind::NonlinReg,
            Self::Coupled => CaseKind::Wave4,
            _ => CaseKind::LinReg,
        }
    }
}

/// Parses `2^k`, `2^-k` or a plain decimal.
pub fn parse_real(s: &str) -> Result<f64> {
    let s = s.trim();
    let v = if let Some(e) = s.strip_prefix("2^") {
        e.trim()
            .parse::<i32>()
            .map(|k| 2f64.powi(k))
            .map_err(|_| Error::argument(format!("bad power of two '{s}'")))?
    } else {
        s.parse::<f64>()
            .map_err(|_| Error::argument(format!("bad number '{s}'")))?
    };
    if !v.is_finite() {
        return Err(Error::argument(format!("non-finite number '{s}'")));
    }
    Ok(v)
}

fn dyadic_exponent(s: &str) -> Result<i32> {
    s.trim()
        .strip_prefix("2^")
        .and_then(|e| e.trim().parse::<i32>().ok())
        .ok_or_else(|| Error::argument(format!("range endpoints must be powers of two, got '{s}'")))
}

/// Comma-separated reals; an item `2^a..2^b` expands to every power of two
/// between the endpoints, in the written order.
pub fn parse_real_list(s: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for item in s.split(',').map(str::trim).filter(|i| !i.is_empty()) {
        if let Some((a, b)) = item.split_once("..") {
            let (a, b) = (dyadic_exponent(a)?, dyadic_exponent(b)?);
            let step = if b >= a { 1 } else { -1 };
            let mut k = a;
            loop {
                out.push(2f64.powi(k));
                if k == b {
                    break;
                }
                k += step;
            }
        } else {
            out.push(parse_real(item)?);
        }
    }
    if out.is_empty() {
        return Err(Error::argument(format!("empty list '{s}'")));
    }
    Ok(out)
}

fn parse_cells(s: &str) -> Result<Vec<usize>> {
    parse_real_list(s)?
        .into_iter()
        .map(|v| {
            if v >= 2.0 && v.fract() == 0.0 && v < 1e9 {
                Ok(v as usize)
            } else {
                Err(Error::argument(format!("cell count must be an integer >= 2, got {v}")))
            }
        })
        .collect()
}

fn parse_bool(s: &str) -> Result<bool> {
    match s.trim() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        other => Err(Error::argument(format!("expected a boolean, got '{other}'"))),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub case: CaseKind,
    pub final_time: f64,
    /// Empty under the coupled rule `ε = τ/2`.
    pub epsilons: Vec<f64>,
    pub taus: Vec<f64>,
    /// Spatial cell counts; empty under the coupled rule `N_x = ⌈τ^{−1/2}⌉`.
    pub cells: Vec<usize>,
    pub p: u32,
    pub lambdas: Vec<f64>,
    pub newton: NewtonConfig,
    pub norms: Vec<NormTag>,
    pub output: Option<PathBuf>,
    pub allow_ill_conditioned: bool,
}

impl ExperimentConfig {
    /// Defaults reproducing the reference setups of each experiment kind.
    pub fn defaults(kind: ExperimentKind) -> Self {
        let dyadic = |a: i32, b: i32| -> Vec<f64> {
            let (lo, hi) = (a.min(b), a.max(b));
            let mut v: Vec<f64> = (lo..=hi).map(|k| 2f64.powi(k)).collect();
            if a > b {
                v.reverse();
            }
            v
        };
        let mut cfg = Self {
            kind,
            case: kind.default_case(),
            final_time: 2.0,
            epsilons: vec![0.25],
            taus: dyadic(-2, -5),
            cells: vec![256],
            p: 6,
            lambdas: vec![1.0],
            newton: NewtonConfig::default(),
            norms: NormTag::ALL.to_vec(),
            output: None,
            allow_ill_conditioned: false,
        };
        match kind {
            ExperimentKind::Nonlinear => cfg.cells = vec![64],
            ExperimentKind::Coupled => {
                cfg.p = 4;
                cfg.taus = dyadic(-2, -6);
                cfg.epsilons.clear();
                cfg.cells.clear();
            }
            ExperimentKind::Condsweep => {
                cfg.taus = vec![2f64.powi(-6)];
                cfg.epsilons = dyadic(-12, -1);
                cfg.lambdas = vec![1.0, 1e3, 1e6];
                cfg.cells.clear();
            }
            ExperimentKind::Ode => {
                cfg.taus = vec![2f64.powi(-6)];
                cfg.cells.clear();
            }
            ExperimentKind::Linear => {}
        }
        cfg
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key.trim() {
            "kind" => self.kind = ExperimentKind::parse(value)?,
            "case" => self.case = CaseKind::parse(value)?,
            "T" => self.final_time = parse_real(value)?,
            "eps" => self.epsilons = parse_real_list(value)?,
            "tau" => self.taus = parse_real_list(value)?,
            "nx" => self.cells = parse_cells(value)?,
            "p" => {
                self.p = value
                    .trim()
                    .parse()
                    .map_err(|_| Error::argument(format!("bad exponent '{value}'")))?
            }
            "lambda" => self.lambdas = parse_real_list(value)?,
            "norms" => {
                self.norms = value
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(str::parse)
                    .collect::<Result<_>>()?
            }
            "out" => self.output = Some(PathBuf::from(value.trim())),
            "tol" => self.newton.tol = parse_real(value)?,
            "max_iter" => {
                self.newton.max_iter = value
                    .trim()
                    .parse()
                    .map_err(|_| Error::argument(format!("bad iteration count '{value}'")))?
            }
            "allow_ill_conditioned" => self.allow_ill_conditioned = parse_bool(value)?,
            other => return Err(Error::argument(format!("unknown configuration key '{other}'"))),
        }
        Ok(())
    }

    /// Builds a configuration from settings. The kind is taken from a `kind`
    /// entry, then `fallback`, then inferred from `case`.
    pub fn from_pairs(fallback: Option<ExperimentKind>, pairs: &[(String, String)]) -> Result<Self> {
        let lookup = |k: &str| pairs.iter().rev().find(|(key, _)| key.trim() == k).map(|(_, v)| v.as_str());
        let kind = match (lookup("kind"), fallback, lookup("case")) {
            (Some(k), _, _) => ExperimentKind::parse(k)?,
            (None, Some(k), _) => k,
            (None, None, Some(c)) => match CaseKind::parse(c)? {
                CaseKind::LinReg => ExperimentKind::Linear,
                CaseKind::NonlinReg => ExperimentKind::Nonlinear,
                CaseKind::Wave4 if lookup("eps").is_some() => ExperimentKind::Nonlinear,
                CaseKind::Wave4 => ExperimentKind::Coupled,
            },
            (None, None, None) => ExperimentKind::Linear,
        };
        let mut cfg = Self::defaults(kind);
        if kind == ExperimentKind::Nonlinear && lookup("case").map(str::trim) == Some("wave4") {
            cfg.p = 4;
        }
        for (k, v) in pairs {
            if k.trim() != "kind" {
                cfg.set(k, v)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses the flat `key = value` format; `#` starts a comment.
    pub fn parse(text: &str, fallback: Option<ExperimentKind>) -> Result<Self> {
        Self::from_pairs(fallback, &parse_pairs(text)?)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.final_time > 0.0) {
            return Err(Error::argument(format!("T must be positive, got {}", self.final_time)));
        }
        if self.taus.is_empty() {
            return Err(Error::argument("tau list is empty"));
        }
        for &tau in &self.taus {
            TimeGrid::from_step(self.final_time, tau)?;
        }
        self.newton.validate()?;
        if let Some(e) = self.epsilons.iter().find(|e| !(**e > 0.0)) {
            return Err(Error::argument(format!("epsilon must be positive, got {e}")));
        }
        let coupled = self.kind == ExperimentKind::Coupled;
        if coupled && !(self.epsilons.is_empty() && self.cells.is_empty()) {
            return Err(Error::argument(
                "the coupled sweep sets eps = tau/2 and nx = ceil(tau^-1/2); do not pass eps or nx",
            ));
        }
        if !coupled && self.epsilons.is_empty() {
            return Err(Error::argument("eps list is empty"));
        }
        let spatial = matches!(self.kind, ExperimentKind::Linear | ExperimentKind::Nonlinear);
        if spatial && self.cells.is_empty() {
            return Err(Error::argument("nx list is empty"));
        }
        if matches!(self.kind, ExperimentKind::Ode | ExperimentKind::Condsweep) {
            if self.lambdas.is_empty() {
                return Err(Error::argument("lambda list is empty"));
            }
            if let Some(l) = self.lambdas.iter().find(|l| !(**l >= 0.0)) {
                return Err(Error::argument(format!("lambda must be >= 0, got {l}")));
            }
        }
        let compatible = match self.kind {
            ExperimentKind::Linear => self.case == CaseKind::LinReg,
            ExperimentKind::Nonlinear => self.case != CaseKind::LinReg,
            ExperimentKind::Coupled => self.case == CaseKind::Wave4,
            _ => true,
        };
        if !compatible {
            return Err(Error::argument(format!(
                "case {} does not fit a {} experiment",
                self.case.name(),
                self.kind.name()
            )));
        }
        if matches!(self.kind, ExperimentKind::Nonlinear | ExperimentKind::Coupled) {
            if self.p < 3 {
                return Err(Error::argument(format!("p must be >= 3, got {}", self.p)));
            }
            if self.case == CaseKind::Wave4 && self.p != 4 {
                return Err(Error::argument("the wave4 case is manufactured for p = 4"));
            }
        }
        if self.kind != ExperimentKind::Condsweep && !self.allow_ill_conditioned {
            for level in self.levels() {
                if level.tau / level.epsilon > 2.0 + 1e-12 {
                    return Err(Error::argument(format!(
                        "tau/eps = {} exceeds 2 (tau = {}, eps = {}); pass allow_ill_conditioned to run anyway",
                        level.tau / level.epsilon,
                        level.tau,
                        level.epsilon
                    )));
                }
            }
        }
        Ok(())
    }

    /// Refinement levels in deterministic `(τ, h, ε)` order.
    pub fn levels(&self) -> Vec<Level> {
        if self.kind == ExperimentKind::Coupled {
            return self.taus.iter().map(|&tau| Level::coupled(tau)).collect();
        }
        let cells: &[usize] = if self.cells.is_empty() { &[0] } else { &self.cells };
        let mut out = Vec::new();
        for &tau in &self.taus {
            for &c in cells {
                for &epsilon in &self.epsilons {
                    out.push(Level { tau, cells: c, epsilon });
                }
            }
        }
        out
    }
}

/// Splits `key = value` lines, skipping blanks and `#` comments.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::argument(format!("line {}: expected 'key = value'", n + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Level {
    pub tau: f64,
    /// Spatial cells `N_x`; 0 for purely temporal problems.
    pub cells: usize,
    pub epsilon: f64,
}

impl Level {
    /// `ε = τ/2` and `h = 1/⌈τ^{−1/2}⌉`, the closest admissible mesh to `h = √τ`.
    pub fn coupled(tau: f64) -> Self {
        let cells = ((1.0 / tau.sqrt()) - 1e-9).ceil().max(2.0) as usize;
        Self {
            tau,
            cells,
            epsilon: 0.5 * tau,
        }
    }

    pub fn h(&self) -> f64 {
        if self.cells == 0 {
            0.0
        } else {
            1.0 / self.cells as f64
        }
    }
}

#[derive(Debug, Clone)]
pub struct LevelOutcome {
    pub solution: SpaceTimeSolution<f64>,
    pub newton: Option<NewtonReport>,
}

/// Assembles and solves one refinement level of a manufactured case.
pub fn solve_level(
    case: &ManufacturedCase,
    level: &Level,
    newton: &NewtonConfig,
) -> Result<LevelOutcome> {
    let grid = TimeGrid::from_step(case.final_time, level.tau)?;
    let basis = SplineBasis::new(grid);
    let mesh = SpaceMesh::new(level.cells)?;
    let ws = WeightedSystem::spacetime(&basis, mesh.clone(), level.epsilon)?;
    let f = case.forcing.clone();
    let load = assemble_load(|x, t| f(x, t), &basis, &mesh, level.epsilon)?;
    if case.p == 0 {
        Ok(LevelOutcome {
            solution: solve_linear_pde(&ws, &load)?,
            newton: None,
        })
    } else {
        let (solution, report) = solve_nonlinear(case.p, &ws, &load, newton)?;
        Ok(LevelOutcome {
            solution,
            newton: Some(report),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub kind: ExperimentKind,
    pub case: CaseKind,
    pub final_time: f64,
    pub tau: f64,
    pub cells: usize,
    pub epsilon: f64,
    pub p: u32,
    pub norm: NormTag,
    pub error: Option<f64>,
    pub eoc: Option<f64>,
    pub newton_iterations: Option<usize>,
    pub converged: Option<bool>,
    pub status: String,
}

impl ConvergenceRow {
    pub fn h(&self) -> f64 {
        1.0 / self.cells as f64
    }
}

fn level_case(cfg: &ExperimentConfig, level: &Level) -> Result<ManufacturedCase> {
    build_case(cfg.case, level.epsilon, cfg.final_time, cfg.p)
}

/// Runs every level of a linear, nonlinear or coupled sweep. Failures are
/// recorded in the affected rows and do not stop the sweep.
pub fn run_convergence(cfg: &ExperimentConfig) -> Result<Vec<ConvergenceRow>> {
    cfg.validate()?;
    if !matches!(
        cfg.kind,
        ExperimentKind::Linear | ExperimentKind::Nonlinear | ExperimentKind::Coupled
    ) {
        return Err(Error::argument(format!(
            "convergence sweeps need a linear, nonlinear or coupled experiment, got {}",
            cfg.kind.name()
        )));
    }
    let levels = cfg.levels();
    let outcomes: Vec<Result<(Vec<Option<f64>>, Option<NewtonReport>)>> = levels
        .par_iter()
        .map(|level| {
            let case = level_case(cfg, level)?;
            let out = solve_level(&case, level, &cfg.newton)?;
            let report = compute_errors(&out.solution, &case.exact, &cfg.norms)?;
            info!(
                "tau = {:e}, h = {:e}, eps = {:e}: done",
                level.tau,
                level.h(),
                level.epsilon
            );
            Ok((cfg.norms.iter().map(|&n| report.get(n)).collect(), out.newton))
        })
        .collect();

    let p = match cfg.kind {
        ExperimentKind::Linear => 0,
        _ => cfg.p,
    };
    let mut rows = Vec::with_capacity(levels.len() * cfg.norms.len());
    for (li, (level, outcome)) in levels.iter().zip(&outcomes).enumerate() {
        for (ni, &norm) in cfg.norms.iter().enumerate() {
            let (error, newton, status) = match outcome {
                Ok((errs, rep)) => (
                    errs[ni],
                    rep.as_ref(),
                    match rep {
                        Some(r) if !r.converged => "newton not converged".to_string(),
                        _ => "ok".to_string(),
                    },
                ),
                Err(e) => (None, None, e.to_string()),
            };
            let eoc = if li == 0 {
                None
            } else {
                let prev = &levels[li - 1];
                let prev_err = outcomes[li - 1].as_ref().ok().and_then(|(e, _)| e[ni]);
                observed_order(prev, level, prev_err, error)
            };
            rows.push(ConvergenceRow {
                kind: cfg.kind,
                case: cfg.case,
                final_time: cfg.final_time,
                tau: level.tau,
                cells: level.cells,
                epsilon: level.epsilon,
                p,
                norm,
                error,
                eoc,
                newton_iterations: newton.map(|r| r.iterations),
                converged: newton.map(|r| r.converged),
                status,
            });
        }
    }
    Ok(rows)
}

/// Order with respect to the refined parameter: `τ` if it changed, else `h`.
fn observed_order(prev: &Level, cur: &Level, e0: Option<f64>, e1: Option<f64>) -> Option<f64> {
    let (e0, e1) = (e0?, e1?);
    if !(e0 > 0.0 && e1 > 0.0) {
        return None;
    }
    let ratio = if prev.tau != cur.tau {
        if prev.cells != cur.cells && prev.epsilon != cur.epsilon && cur.epsilon != 0.5 * cur.tau {
            return None;
        }
        prev.tau / cur.tau
    } else if prev.cells != cur.cells {
        if prev.epsilon != cur.epsilon {
            return None;
        }
        prev.h() / cur.h()
    } else {
        return None;
    };
    Some((e0 / e1).ln() / ratio.ln())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CondRow {
    pub final_time: f64,
    pub tau: f64,
    pub epsilon: f64,
    pub lambda: f64,
    pub kappa: Option<f64>,
    pub status: String,
}

/// `κ₂(ε² K̃ + λ L̃)` for the given temporal grid.
pub fn ode_condition_number(final_time: f64, tau: f64, epsilon: f64, lambda: f64) -> Result<f64> {
    let basis = SplineBasis::new(TimeGrid::from_step(final_time, tau)?);
    let ws = WeightedSystem::ode(&basis, epsilon, lambda)?;
    condition_number(&ws.temporal.ode_matrix(lambda))
}

/// Condition numbers over `τ × ε × λ`, in that nesting order.
pub fn run_condsweep(cfg: &ExperimentConfig) -> Result<Vec<CondRow>> {
    cfg.validate()?;
    let mut cases = Vec::new();
    for &tau in &cfg.taus {
        for &epsilon in &cfg.epsilons {
            for &lambda in &cfg.lambdas {
                cases.push((tau, epsilon, lambda));
            }
        }
    }
    Ok(cases
        .par_iter()
        .map(|&(tau, epsilon, lambda)| {
            let k = ode_condition_number(cfg.final_time, tau, epsilon, lambda);
            CondRow {
                final_time: cfg.final_time,
                tau,
                epsilon,
                lambda,
                status: k.as_ref().map_or_else(|e| e.to_string(), |_| "ok".into()),
                kappa: k.ok(),
            }
        })
        .collect())
}

/// Knot values of the zero-dimensional solution for every `(τ, ε, λ)` with
/// forcing `f ≡ 1`: rows `(tau, epsilon, lambda, t, u)`.
pub fn run_ode(cfg: &ExperimentConfig) -> Result<Vec<[f64; 5]>> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for &tau in &cfg.taus {
        let grid = TimeGrid::from_step(cfg.final_time, tau)?;
        let basis = SplineBasis::new(grid);
        for &epsilon in &cfg.epsilons {
            for &lambda in &cfg.lambdas {
                let sigma = solve_ode(lambda, epsilon, |_| 1.0, &grid)?;
                for (i, t) in grid.knots().into_iter().enumerate() {
                    let t = if i == grid.intervals() { cfg.final_time } else { t };
                    rows.push([tau, epsilon, lambda, t, basis.spline_eval(&sigma, t, 0)?]);
                }
            }
        }
    }
    Ok(rows)
}

#[inline]
fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

fn clean(s: &str) -> String {
    s.replace([',', '\n', '\r'], ";")
}

pub const CONVERGENCE_HEADER: &str =
    "kind,case,T,tau,h,nx,epsilon,p,norm,error,eoc,newton_iterations,converged,status";

pub fn write_convergence_csv(rows: &[ConvergenceRow], mut w: impl Write) -> io::Result<()> {
    writeln!(w, "{CONVERGENCE_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.kind.name(),
            r.case.name(),
            num(r.final_time),
            num(r.tau),
            num(r.h()),
            r.cells,
            num(r.epsilon),
            r.p,
            r.norm,
            opt(r.error.map(num)),
            opt(r.eoc.map(num)),
            opt(r.newton_iterations),
            opt(r.converged),
            clean(&r.status)
        )?;
    }
    Ok(())
}

pub const CONDSWEEP_HEADER: &str = "T,tau,epsilon,lambda,kappa,status";

pub fn write_condsweep_csv(rows: &[CondRow], mut w: impl Write) -> io::Result<()> {
    writeln!(w, "{CONDSWEEP_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            num(r.final_time),
            num(r.tau),
            num(r.epsilon),
            num(r.lambda),
            opt(r.kappa.map(num)),
            clean(&r.status)
        )?;
    }
    Ok(())
}

pub fn write_ode_csv(rows: &[[f64; 5]], mut w: impl Write) -> io::Result<()> {
    writeln!(w, "tau,epsilon,lambda,t,u")?;
    for r in rows {
        let cells: Vec<String> = r.iter().map(|&v| num(v)).collect();
        writeln!(w, "{}", cells.join(","))?;
    }
    Ok(())
}

/// `u_h` sampled at every mesh node (boundary included) and every knot.
pub fn write_solution_samples(u: &SpaceTimeSolution<f64>, mut w: impl Write) -> io::Result<()> {
    writeln!(w, "x,t,u")?;
    let grid = u.basis().grid();
    let mesh = u.mesh();
    for i in 0..=grid.intervals() {
        let t = grid.knot(i);
        for j in 0..=mesh.cells() {
            let x = mesh.node(j);
            writeln!(w, "{},{},{}", num(x), num(t), num(u.value(x, t)))?;
        }
    }
    Ok(())
}

/// Matplotlib script plotting a convergence CSV as log-log error curves.
pub fn convergence_plot_script(csv_name: &str) -> String {
    let mut s = String::new();
    let _ = write!(
        s,
        r#"import csv
import collections
import matplotlib.pyplot as plt

rows = list(csv.DictReader(open("{csv_name}")))
taus = sorted({{r["tau"] for r in rows}})
x_key = "tau" if len(taus) > 1 else "h"
curves = collections.defaultdict(list)
for r in rows:
    if r["error"]:
        curves[r["norm"]].append((float(r[x_key]), float(r["error"])))
fig, ax = plt.subplots()
for norm, pts in sorted(curves.items()):
    pts.sort()
    ax.loglog([p[0] for p in pts], [p[1] for p in pts], "o-", label=norm)
ax.set_xlabel(x_key)
ax.set_ylabel("error")
ax.legend()
fig.savefig("{csv_name}".rsplit(".", 1)[0] + ".png", dpi=150)
"#
    );
    s
}

/// Matplotlib script plotting condition number against `ε` per `λ`.
pub fn condsweep_plot_script(csv_name: &str) -> String {
    format!(
        r#"import csv
import collections
import matplotlib.pyplot as plt

curves = collections.defaultdict(list)
for r in csv.DictReader(open("{csv_name}")):
    if r["kappa"]:
        curves[float(r["lambda"])].append((float(r["epsilon"]), float(r["kappa"])))
fig, ax = plt.subplots()
for lam, pts in sorted(curves.items()):
    pts.sort()
    ax.loglog([p[0] for p in pts], [p[1] for p in pts], "o-", label=f"lambda = {{lam:g}}")
ax.set_xlabel("epsilon")
ax.set_ylabel("condition number")
ax.legend()
fig.savefig("{csv_name}".rsplit(".", 1)[0] + ".png", dpi=150)
"#
    )
}
