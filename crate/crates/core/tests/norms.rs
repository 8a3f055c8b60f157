use std::f64::consts::PI;

use proptest::prelude::*;
use stwave_core::norms::field_errors;
use stwave_core::*;

fn setup(final_time: f64, n: usize, cells: usize) -> (Basis, Mesh) {
    (SplineBasis::new(TimeGrid::new(final_time, n).unwrap()), SpaceMesh::new(cells).unwrap())
}

fn wave_field() -> Exact {
    ExactSolution::new(|x: f64, t: f64| (PI * x).sin() * t * (PI * t).sin())
        .with_dt(|x: f64, t: f64| (PI * x).sin() * ((PI * t).sin() + PI * t * (PI * t).cos()))
        .with_dtt(|x: f64, t: f64| {
            (PI * x).sin() * (2.0 * PI * (PI * t).cos() - PI * PI * t * (PI * t).sin())
        })
        .with_dx(|x: f64, t: f64| PI * (PI * x).cos() * t * (PI * t).sin())
}

fn random_solution(basis: Basis, mesh: Mesh, eps: f64, coeffs: &[f64]) -> Solution {
    let mut u = SpaceTimeSolution::zeros(basis, mesh, eps, 0);
    u.coeffs.copy_from_slice(coeffs);
    u
}

#[test]
fn self_comparison_is_zero() {
    let (b, mesh) = setup(2.0, 16, 8);
    let coeffs: Vec<f64> = (0..b.size() * mesh.dofs()).map(|i| ((i * 7919) % 13) as f64 - 6.0).collect();
    let u = random_solution(b, mesh, 0.25, &coeffs);
    let own = ExactSolution::from_solution(&u);
    let report = compute_errors(&u, &own, &NormTag::ALL).unwrap();
    for tag in NormTag::ALL {
        assert!(report.get(tag).unwrap() <= 1e-10, "{tag}");
    }
}

#[test]
fn l2l2_error_of_zero_against_analytic_field() {
    let (b, mesh) = setup(2.0, 16, 16);
    let u = SpaceTimeSolution::zeros(b, mesh, 0.25, 0);
    let report = compute_errors(&u, &wave_field(), &[NormTag::L2L2]).unwrap();
    // ½ ∫₀² t² sin²(πt) dt = ½ (4/3 − 1/(2π²))
    let exact = (0.5 * (4.0 / 3.0 - 1.0 / (2.0 * PI * PI))).sqrt();
    let got = report.get(NormTag::L2L2).unwrap();
    assert!((got - exact).abs() <= 1e-10 * exact, "{got} vs {exact}");
    assert_eq!(report.tau, 0.125);
    assert_eq!(report.h, 1.0 / 16.0);
}

#[test]
fn energy_norm_approaches_unweighted_combination_for_large_epsilon() {
    let eps = 1e3;
    let (b, mesh) = setup(1.0, 16, 16);
    let u = SpaceTimeSolution::zeros(b, mesh, eps, 0);
    let r = compute_errors(&u, &wave_field(), &[NormTag::Energy, NormTag::H2L2, NormTag::L2H1]).unwrap();
    let unweighted = eps * eps * r.get(NormTag::H2L2).unwrap().powi(2) + r.get(NormTag::L2H1).unwrap().powi(2);
    let energy2 = r.get(NormTag::Energy).unwrap().powi(2);
    assert!(energy2 <= unweighted);
    assert!((unweighted - energy2) / unweighted <= 1e-3);
}

/// The weighted parts recomputed with an independent tensor Gauss rule.
#[test]
fn energy_identity_against_independent_quadrature() {
    let eps = 0.25;
    let (b, mesh) = setup(2.0, 8, 8);
    let coeffs: Vec<f64> = (0..b.size() * mesh.dofs()).map(|i| (i as f64 * 0.37).sin()).collect();
    let u = random_solution(b, mesh, eps, &coeffs);
    let exact = wave_field();
    let r = compute_errors(&u, &exact, &[NormTag::Energy]).unwrap();
    let (nodes, weights) = gauss_rule::<f64>(16).unwrap();
    let (mut h2, mut h1) = (0.0, 0.0);
    for m in 0..32 {
        let (ta, tb) = (m as f64 / 16.0, (m + 1) as f64 / 16.0);
        for (tn, tw) in nodes.iter().zip(&weights) {
            let t = ta + (tn + 1.0) * 0.5 * (tb - ta);
            let wt = tw * 0.5 * (tb - ta) * (-t / eps).exp();
            for c in 0..8 {
                let (xa, xb) = (c as f64 / 8.0, (c + 1) as f64 / 8.0);
                for (xn, xw) in nodes.iter().zip(&weights) {
                    let x = xa + (xn + 1.0) * 0.5 * (xb - xa);
                    let wx = xw * 0.5 * (xb - xa);
                    let ett = u.dtt(x, t) - exact.dtt.as_ref().unwrap()(x, t);
                    let ex = u.dx(x, t) - exact.dx.as_ref().unwrap()(x, t);
                    h2 += wt * wx * ett * ett;
                    h1 += wt * wx * ex * ex;
                }
            }
        }
    }
    let want = eps * eps * h2 + h1;
    let got = r.get(NormTag::Energy).unwrap().powi(2);
    assert!((got - want).abs() <= 1e-10 * want, "{got} vs {want}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn triangle_inequality(
        a in prop::collection::vec(-1.0f64..1.0, 9 * 3),
        m in prop::collection::vec(-1.0f64..1.0, 9 * 3),
    ) {
        let (b, mesh) = setup(1.0, 8, 4);
        let u = random_solution(b, mesh.clone(), 0.5, &a);
        let mid = ExactSolution::from_solution(&random_solution(b, mesh.clone(), 0.5, &m));
        let exact = wave_field();
        let direct = compute_errors(&u, &exact, &NormTag::ALL).unwrap();
        let first = compute_errors(&u, &mid, &NormTag::ALL).unwrap();
        let second = field_errors(&mid, &exact, &NormTag::ALL, &b, &mesh, 0.5).unwrap();
        for tag in NormTag::ALL {
            let lhs = direct.get(tag).unwrap();
            prop_assert!(lhs >= 0.0);
            prop_assert!(lhs <= first.get(tag).unwrap() + second.get(tag).unwrap() + 1e-10, "{}", tag);
        }
    }

    #[test]
    fn norms_scale_with_the_fields(
        a in prop::collection::vec(-1.0f64..1.0, 9 * 3),
        c in prop_oneof![-5.0f64..-0.1, 0.1f64..5.0],
    ) {
        let (b, mesh) = setup(1.0, 8, 4);
        let u = random_solution(b, mesh.clone(), 0.5, &a);
        let scaled: Vec<f64> = a.iter().map(|v| c * v).collect();
        let cu = random_solution(b, mesh, 0.5, &scaled);
        let exact = wave_field();
        let base = compute_errors(&u, &exact, &NormTag::ALL).unwrap();
        let both = compute_errors(&cu, &exact.scaled(c), &NormTag::ALL).unwrap();
        for tag in NormTag::ALL {
            let want = c.abs() * base.get(tag).unwrap();
            prop_assert!((both.get(tag).unwrap() - want).abs() <= 1e-12 * want.max(1e-300), "{}", tag);
        }
    }
}
