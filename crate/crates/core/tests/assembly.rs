mod common;

use common::*;
use proptest::prelude::*;
use stwave_core::spatial_fem::assemble_load_vector;
use stwave_core::*;

fn basis(final_time: f64, n: usize) -> Basis {
    SplineBasis::new(TimeGrid::new(final_time, n).unwrap())
}

#[test]
fn temporal_matrices_match_closed_form_integrals() {
    for (n, eps) in [(16, 0.5), (16, 2.0 / 16.0 / 2.0), (8, 0.125)] {
        let b = basis(2.0, n);
        let tau = b.grid().tau();
        let tm = assemble_temporal(&b, eps).unwrap();
        let size = b.size();
        let mut worst: f64 = 0.0;
        for i in 1..=size {
            for j in 1..=size {
                let l = shifted_integral(i, tau, eps, n, |m| mul(&piece(i, m), &piece(j, m)));
                let k = shifted_integral(i, tau, eps, n, |m| {
                    let d2 = |k| deriv(&deriv(&piece(k, m), tau), tau);
                    mul(&d2(i), &d2(j))
                });
                let sl = tm.mass.get(i - 1, i - 1).abs();
                let sk = tm.stiffness.get(i - 1, i - 1).abs();
                worst = worst.max((tm.mass.get(i - 1, j - 1) - l).abs() / sl);
                worst = worst.max((tm.stiffness.get(i - 1, j - 1) - k).abs() / sk);
            }
        }
        assert!(worst <= 1e-10, "n = {n}, eps = {eps}: relative deviation {worst:e}");
    }
}

#[test]
fn ode_load_of_unit_forcing_matches_antiderivative() {
    for eps in [0.5, 0.0625] {
        let b = basis(2.0, 16);
        let tau = b.grid().tau();
        let load = assemble_load_ode(|_| 1.0, &b, eps).unwrap();
        let oracle: Vec<f64> = (1..=b.size())
            .map(|i| shifted_integral(i, tau, eps, 16, |m| piece(i, m)))
            .collect();
        let d = rel_diff(&load, &oracle);
        assert!(d <= 1e-10, "eps = {eps}: {d:e}");
    }
}

#[test]
fn separable_load_is_a_kronecker_product() {
    let (eps, n, cells) = (0.25, 16, 8);
    let b = basis(2.0, n);
    let tau = b.grid().tau();
    let mesh = SpaceMesh::new(cells).unwrap();
    let g = |t: f64| t * t;
    let load = assemble_load(
        |x: f64, t: f64| g(t) * (std::f64::consts::PI * x).sin(),
        &b,
        &mesh,
        eps,
    )
    .unwrap();
    // t² = (mτ + τσ)² on interval m
    let temporal: Vec<f64> = (1..=b.size())
        .map(|i| {
            shifted_integral(i, tau, eps, n, |m| {
                let mt = m as f64 * tau;
                mul(&piece(i, m), &[mt * mt, 2.0 * mt * tau, tau * tau])
            })
        })
        .collect();
    let h = mesh.h();
    let pi = std::f64::consts::PI;
    let spatial: Vec<f64> = (1..cells)
        .map(|j| (pi * j as f64 * h).sin() * 2.0 * (1.0 - (pi * h).cos()) / (pi * pi * h))
        .collect();
    let kron: Vec<f64> = temporal.iter().flat_map(|a| spatial.iter().map(move |s| a * s)).collect();
    assert!(rel_diff(&load, &kron) <= 1e-10);
    assert_eq!(load.len(), b.size() * mesh.dofs());
    // the spatial factor alone through the public load-vector routine
    let gv = assemble_load_vector(&mesh, |x: f64| (pi * x).sin());
    assert!(rel_diff(&gv, &spatial) <= 1e-12);
}

/// `e^{kτ/ε} ∫∫ e^{−t/ε} (ε² φ_k'' φ_l'' ψ_i ψ_j + φ_k φ_l ψ_i' ψ_j')` by composite
/// Simpson in both variables.
fn brute_force_entry(k: usize, l: usize, i: usize, j: usize, eps: f64, n: usize, final_time: f64, cells: usize) -> f64 {
    let tau = final_time / n as f64;
    let (mut xm, mut xa) = (0.0, 0.0);
    let hx = 1.0 / cells as f64;
    for c in 0..cells {
        let (a, b) = (c as f64 * hx, (c + 1) as f64 * hx);
        xm += simpson(|x| hat(i, cells, x).0 * hat(j, cells, x).0, a, b, 2);
        xa += simpson(|x| hat(i, cells, x).1 * hat(j, cells, x).1, a + 1e-15, b - 1e-15, 2);
    }
    (0..n)
        .map(|m| {
            let (a, b) = (m as f64 * tau, (m + 1) as f64 * tau);
            let w = |t: f64| ((k as f64 * tau - t) / eps).exp();
            let kk = simpson(
                |t| w(t) * phi(k, t, 2, tau, n) * phi(l, t, 2, tau, n),
                a,
                b,
                2000,
            );
            let ll = simpson(|t| w(t) * phi(k, t, 0, tau, n) * phi(l, t, 0, tau, n), a, b, 2000);
            eps * eps * kk * xm + ll * xa
        })
        .sum()
}

#[test]
fn small_operator_matches_brute_force_double_integral() {
    for (n, cells) in [(4, 2), (4, 3)] {
        let eps = 0.5;
        let b = basis(2.0, n);
        let ws = WeightedSystem::spacetime(&b, SpaceMesh::new(cells).unwrap(), eps).unwrap();
        let op = assemble_spacetime_operator(&ws).unwrap();
        let ns = cells - 1;
        let dim = b.size() * ns;
        assert_eq!(op.dim(), dim);
        let mut got = Vec::new();
        let mut want = Vec::new();
        for r in 0..dim {
            for c in 0..dim {
                got.push(op.entry(r, c));
                want.push(brute_force_entry(r / ns + 1, c / ns + 1, r % ns, c % ns, eps, n, 2.0, cells));
            }
        }
        let d = rel_diff(&got, &want);
        assert!(d <= 1e-10, "cells = {cells}: {d:e}");
    }
}

#[test]
fn operator_columns_follow_the_kronecker_definition() {
    let (eps, cells) = (0.25, 4);
    let b = basis(2.0, 8);
    let ws = WeightedSystem::spacetime(&b, SpaceMesh::new(cells).unwrap(), eps).unwrap();
    let op = assemble_spacetime_operator(&ws).unwrap();
    let tm = &ws.temporal;
    let h = 1.0 / cells as f64;
    let m = |l: usize, j: usize| match l.abs_diff(j) {
        0 => 2.0 * h / 3.0,
        1 => h / 6.0,
        _ => 0.0,
    };
    let a = |l: usize, j: usize| match l.abs_diff(j) {
        0 => 2.0 / h,
        1 => -1.0 / h,
        _ => 0.0,
    };
    let ns = cells - 1;
    for col in [0, 4, 13, op.dim() - 1] {
        let mut e = vec![0.0; op.dim()];
        e[col] = 1.0;
        let got = op.apply(&e);
        let (k, j) = (col / ns, col % ns);
        let want: Vec<f64> = (0..op.dim())
            .map(|r| {
                let (i, l) = (r / ns, r % ns);
                eps * eps * tm.stiffness.get(i, k) * m(l, j) + tm.mass.get(i, k) * a(l, j)
            })
            .collect();
        assert!(rel_diff(&got, &want) <= 1e-13);
    }
}

#[test]
fn nonlinear_residual_of_a_single_basis_function() {
    let (eps, n, cells) = (0.25, 8, 4);
    let b = basis(2.0, n);
    let tau = b.grid().tau();
    let mesh = SpaceMesh::new(cells).unwrap();
    let ns = mesh.dofs();
    let h = mesh.h();
    let (k, j) = (4, 1);
    for (p, c) in [(4u32, 1.0f64), (5, -0.7)] {
        let mut u = SpaceTimeSolution::zeros(b, mesh.clone(), eps, p);
        u.coeffs[(k - 1) * ns + j] = c;
        let r = assemble_nonlinear_residual(&u, p).unwrap();
        // (p/2)|c|^{p−2}c · e^{iτ/ε}∫e^{−t/ε}φ_k^{p−1}φ_i dt · ∫ψ_j^{p−1}ψ_l dx
        let space = |l: usize| -> f64 {
            let q = (p - 1) as f64;
            match l.abs_diff(j) {
                0 => 2.0 * h / (q + 2.0),
                1 => h / ((q + 1.0) * (q + 2.0)),
                _ => 0.0,
            }
        };
        let mut want = vec![0.0; r.len()];
        for i in 1..=b.size() {
            let time = shifted_integral(i, tau, eps, n, |m| {
                let pk = piece(k, m);
                (1..p).fold(piece(i, m), |acc, _| mul(&acc, &pk))
            });
            for l in 0..ns {
                want[(i - 1) * ns + l] = 0.5 * p as f64 * c.abs().powi(p as i32 - 2) * c * time * space(l);
            }
        }
        let d = rel_diff(&r, &want);
        assert!(d <= 1e-8, "p = {p}: {d:e}");
        if p == 4 {
            // the diagonal entry is 2∫e^{(kτ−t)/ε}φ_k⁴ dt · 2h/5
            let diag = 2.0 * shifted_integral(k, tau, eps, n, |m| {
                let pk = piece(k, m);
                mul(&mul(&pk, &pk), &mul(&pk, &pk))
            }) * 2.0 * h / 5.0;
            assert!((r[(k - 1) * ns + j] - diag).abs() <= 1e-8 * diag);
        }
    }
}

#[test]
fn zero_state_gives_zero_residual_and_the_linear_jacobian() {
    let b = basis(2.0, 8);
    let mesh = SpaceMesh::new(4).unwrap();
    let ws = WeightedSystem::spacetime(&b, mesh.clone(), 0.25).unwrap();
    let u = SpaceTimeSolution::zeros(b, mesh, 0.25, 4);
    assert!(assemble_nonlinear_residual(&u, 4).unwrap().iter().all(|&v| v == 0.0));
    let jac = assemble_nonlinear_jacobian(&ws, &u, 4).unwrap();
    let op = assemble_spacetime_operator(&ws).unwrap();
    for r in 0..op.dim() {
        for c in 0..op.dim() {
            assert_eq!(jac.entry(r, c), op.entry(r, c));
        }
    }
}

fn state(b: Basis, mesh: Mesh, eps: f64, p: u32, coeffs: Vec<f64>) -> Solution {
    let mut u = SpaceTimeSolution::zeros(b, mesh, eps, p);
    u.coeffs.copy_from_slice(&coeffs);
    u
}

#[test]
fn unscaled_jacobian_is_symmetric() {
    let eps = 0.5;
    let b = basis(1.0, 8);
    let mesh = SpaceMesh::new(5).unwrap();
    let ws = WeightedSystem::spacetime(&b, mesh.clone(), eps).unwrap();
    let ns = mesh.dofs();
    let coeffs: Vec<f64> = (0..b.size() * ns).map(|i| ((i * 37 % 11) as f64 - 5.0) / 3.0).collect();
    for p in [3, 4, 6] {
        let u = state(b, mesh.clone(), eps, p, coeffs.clone());
        let jac = assemble_nonlinear_jacobian(&ws, &u, p).unwrap();
        let inv = ws.temporal.inverse_scaling();
        let un = |r: usize, c: usize| inv[r / ns] * jac.entry(r, c);
        let (mut asym, mut size) = (0.0f64, 0.0f64);
        for r in 0..jac.dim() {
            for c in 0..jac.dim() {
                asym = asym.max((un(r, c) - un(c, r)).abs());
                size = size.max(un(r, c).abs());
            }
        }
        assert!(asym <= 1e-10 * size, "p = {p}: {asym:e} vs {size:e}");
    }
}

#[test]
fn rescaled_and_unscaled_ode_systems_agree() {
    let (eps, lambda) = (0.5, 1.0);
    let grid = TimeGrid::from_step(2.0, 2f64.powi(-4)).unwrap();
    let b = SplineBasis::new(grid);
    let ws = WeightedSystem::ode(&b, eps, lambda).unwrap();
    let inv = ws.temporal.inverse_scaling();
    let f = |t: f64| (3.0 * t).cos() + t;
    let load = assemble_load_ode(f, &b, eps).unwrap();
    let unscaled = ws.temporal.ode_matrix(lambda).scale_rows(&inv);
    let raw_load: Vec<f64> = load.iter().zip(&inv).map(|(a, s)| a * s).collect();
    let direct = unscaled.lu().unwrap().solve(&raw_load);
    let rescaled = solve_ode(lambda, eps, f, &grid).unwrap();
    assert!(rel_diff(&direct, &rescaled) <= 1e-10);
}

#[test]
fn underflow_scenario_stays_finite() {
    let (eps, b) = (0.002, SplineBasis::new(TimeGrid::from_step(2.0, 2f64.powi(-6)).unwrap()));
    let tm = assemble_temporal(&b, eps).unwrap();
    assert!(tm.stiffness.is_finite() && tm.mass.is_finite());
    let f = assemble_load_ode(|t: f64| 1.0 + t, &b, eps).unwrap();
    assert!(f.iter().all(|v| v.is_finite()));
    let mesh = SpaceMesh::new(4).unwrap();
    let load = assemble_load(|x: f64, t: f64| x * t, &b, &mesh, eps).unwrap();
    assert!(load.iter().all(|v| v.is_finite()));
}

/// Entries must be finite for every `ε > 0`, `T ≤ 10` and `τ/ε ≤ 500`.
#[test]
fn entries_finite_up_to_step_ratio_500() {
    let mut failures = Vec::new();
    for ratio in [2.0, 50.0, 300.0, 500.0] {
        let b = basis(10.0, 8);
        let eps = b.grid().tau() / ratio;
        let outcome = assemble_temporal(&b, eps).map(|tm| {
            tm.stiffness.is_finite() && tm.mass.is_finite()
        });
        if !matches!(outcome, Ok(true)) {
            failures.push(format!("tau/eps = {ratio}: {outcome:?}"));
        }
    }
    assert!(failures.is_empty(), "non-finite temporal matrices: {failures:?}");
}

#[test]
fn linear_solution_satisfies_galerkin_orthogonality() {
    let b = basis(2.0, 16);
    let mesh = SpaceMesh::new(16).unwrap();
    let ws = WeightedSystem::spacetime(&b, mesh.clone(), 0.25).unwrap();
    let load = assemble_load(|x: f64, t: f64| (x * (1.0 - x)) * (1.0 + t).ln(), &b, &mesh, 0.25).unwrap();
    let u = solve_linear_pde(&ws, &load).unwrap();
    let r = full_residual(&ws, &u, 0, &load).unwrap();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    assert!(norm(&r) <= 1e-8 * norm(&load));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    /// `Σ_i e^{−iτ/ε} σ_i B̃_i = B(u; u) = (p/2) ∫ e^{−t/ε} ‖u‖_p^p ≥ 0`.
    #[test]
    fn nonlinear_pairing_is_nonnegative(
        coeffs in prop::collection::vec(-2.0f64..2.0, 9 * 3),
        p in 3u32..7,
    ) {
        let eps = 0.5;
        let b = basis(1.0, 8);
        let mesh = SpaceMesh::new(4).unwrap();
        let ws = WeightedSystem::spacetime(&b, mesh.clone(), eps).unwrap();
        let u = state(b, mesh, eps, p, coeffs);
        let r = assemble_nonlinear_residual(&u, p).unwrap();
        let inv = ws.temporal.inverse_scaling();
        let pairing: f64 = r.iter().zip(&u.coeffs).enumerate().map(|(n, (ri, ci))| inv[n / 3] * ri * ci).sum();
        prop_assert!(pairing >= 0.0);
        let with_p = evaluate_functional(&u, |_, _| 0.0, p).unwrap();
        let without = evaluate_functional(&u, |_, _| 0.0, 0).unwrap();
        let expected = 0.5 * p as f64 * (with_p - without);
        prop_assert!((pairing - expected).abs() <= 1e-10 * with_p.abs().max(without.abs()));
    }

    #[test]
    fn operator_is_linear(
        x in prop::collection::vec(-1.0f64..1.0, 9 * 3),
        y in prop::collection::vec(-1.0f64..1.0, 9 * 3),
        a in -3.0f64..3.0,
    ) {
        let b = basis(1.0, 8);
        let ws = WeightedSystem::spacetime(&b, SpaceMesh::new(4).unwrap(), 0.25).unwrap();
        let combo: Vec<f64> = x.iter().zip(&y).map(|(u, v)| a * u + v).collect();
        let lhs = ws.apply(&combo).unwrap();
        let (ax, ay) = (ws.apply(&x).unwrap(), ws.apply(&y).unwrap());
        let rhs: Vec<f64> = ax.iter().zip(&ay).map(|(u, v)| a * u + v).collect();
        prop_assert!(rel_diff(&lhs, &rhs) <= 1e-12 || max_abs(&rhs) < 1e-12);
    }
}
