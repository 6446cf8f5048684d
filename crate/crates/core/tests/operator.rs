use std::sync::{Arc, OnceLock};

use kesten_core::geometry::{GridFunction, SphereGrid};
use kesten_core::model::{presets, ModelSpec};
use kesten_core::operator::{
    apply_t, fixed_point_residual, solve_kappa, spectral_radius, validate_rho_by_products, OperatorConfig,
    OperatorMethod, TransferOperator,
};
use kesten_core::rng::{tag, Streams};
use proptest::prelude::*;

fn families() -> Vec<(&'static str, ModelSpec, usize)> {
    vec![
        ("two_point", presets::two_point(), 0),
        ("scalar_lognormal", presets::scalar_lognormal(), 0),
        ("similarity_haar", presets::similarity_haar(), 64),
        ("gaussian_perturbed", presets::gaussian_perturbed(), 64),
    ]
}

fn cfg() -> OperatorConfig {
    OperatorConfig {
        n_mc: 2000,
        ..Default::default()
    }
}

fn operator(spec: &ModelSpec, res: usize) -> TransferOperator {
    let grid = Arc::new(SphereGrid::new(spec.dimension, res).unwrap());
    TransferOperator::build(spec, grid, &cfg(), &Streams::new(11), tag::OPERATOR, 0).unwrap()
}

fn gp_operator() -> &'static TransferOperator {
    static OP: OnceLock<TransferOperator> = OnceLock::new();
    OP.get_or_init(|| operator(&presets::gaussian_perturbed(), 64))
}

#[test]
fn two_point_kappa_matches_analytic_root() {
    let grid = Arc::new(SphereGrid::new(1, 0).unwrap());
    let sol = solve_kappa(
        &presets::two_point(),
        grid,
        &OperatorConfig::default(),
        &Streams::new(1),
    )
    .unwrap();
    assert!((sol.kappa - (7.0f64 / 3.0).log2()).abs() < 1e-3);
}

#[test]
fn similarity_kappa_is_one_with_flat_eigenfunction() {
    let spec = presets::similarity_haar();
    let grid = Arc::new(SphereGrid::with_default_resolution(2).unwrap());
    let sol = solve_kappa(&spec, grid, &OperatorConfig::default(), &Streams::new(1)).unwrap();
    assert!((sol.kappa - 1.0).abs() < 2e-3, "{}", sol.kappa);
    assert!(sol.r.max() / sol.r.min() <= 1.005);
}

#[test]
fn similarity_monte_carlo_close_to_closed_form() {
    let spec = presets::similarity_haar();
    let grid = Arc::new(SphereGrid::new(2, 64).unwrap());
    let c = OperatorConfig {
        method: OperatorMethod::MonteCarlo,
        n_mc: 20_000,
        ..Default::default()
    };
    let sol = solve_kappa(&spec, grid, &c, &Streams::new(5)).unwrap();
    assert!(sol.mc_error > 0.0);
    assert!(
        (sol.kappa - 1.0).abs() < 4.0 * sol.mc_error + 1e-3,
        "{} ± {}",
        sol.kappa,
        sol.mc_error
    );
}

#[test]
fn scalar_lognormal_kappa_is_one() {
    let grid = Arc::new(SphereGrid::new(1, 0).unwrap());
    let sol = solve_kappa(
        &presets::scalar_lognormal(),
        grid,
        &OperatorConfig::default(),
        &Streams::new(1),
    )
    .unwrap();
    assert!((sol.kappa - 1.0).abs() < 1e-6);
}

#[test]
fn gaussian_perturbed_solution_properties() {
    let spec = presets::gaussian_perturbed();
    let grid = Arc::new(SphereGrid::new(2, 64).unwrap());
    let c = cfg();
    let sol = solve_kappa(&spec, grid.clone(), &c, &Streams::new(2)).unwrap();
    assert!(sol.kappa > 1.0 && sol.kappa < 4.0, "{}", sol.kappa);
    assert!(sol.mc_error > 0.0 && sol.mc_error < 0.2);
    // the eigenfunction is not flat for a non-normal Γ₀
    assert!(sol.r.max() / sol.r.min() > 1.01);
    let op = TransferOperator::build(&spec, grid, &c, &Streams::new(2), tag::OPERATOR, 0).unwrap();
    assert!(fixed_point_residual(&op, sol.kappa, &sol.r) <= 10.0 * c.root_tol.max(c.power_iter_tol));
}

#[test]
fn rho_at_zero_is_exactly_one_for_every_family() {
    for (name, spec, res) in families() {
        let grid = Arc::new(SphereGrid::new(spec.dimension, res).unwrap());
        let (rho, r) = spectral_radius(&spec, grid, 0.0, &cfg(), &Streams::new(4)).unwrap();
        assert_eq!(rho, 1.0, "{name}");
        assert!(r.values().iter().all(|v| *v == 1.0), "{name}");
    }
}

#[test]
fn eigenfunction_is_exactly_antipodal_and_a_fixed_point() {
    let c = cfg();
    for (name, spec, res) in families() {
        let op = operator(&spec, res);
        for vk in [0.5, 1.0, 2.0] {
            let (rho, r, _) = op.spectral_radius(vk, &c, None).unwrap();
            let g = op.grid();
            for k in 0..g.len() {
                assert_eq!(r.values()[k], r.values()[g.antipode(k)], "{name}");
            }
            let scaled = r.scaled(rho);
            let tr = op.apply(&r, vk);
            let res_sup = tr
                .values()
                .iter()
                .zip(scaled.values())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(
                res_sup <= 10.0 * c.power_iter_tol * rho.max(1.0),
                "{name} {vk}: {res_sup}"
            );
        }
    }
}

#[test]
fn rho_curve_is_log_convex() {
    let c = cfg();
    for (name, spec, res) in families() {
        let op = operator(&spec, res);
        let ks: Vec<f64> = (0..=12).map(|i| spec.kappa0.min(4.0) * i as f64 / 12.0).collect();
        let mut warm: Option<GridFunction> = None;
        let mut logs = Vec::new();
        for &k in &ks {
            let (rho, r, _) = op.spectral_radius(k, &c, warm.as_ref()).unwrap();
            warm = Some(r);
            logs.push(rho.ln());
        }
        for w in logs.windows(3) {
            assert!(w[1] <= 0.5 * (w[0] + w[2]) + 1e-3, "{name}: {w:?}");
        }
    }
}

#[test]
fn crn_apply_is_reproducible() {
    let spec = presets::gaussian_perturbed();
    let grid = Arc::new(SphereGrid::new(2, 32).unwrap());
    let f = GridFunction::new(grid.clone(), (0..32).map(|i| 1.0 + i as f64 / 32.0).collect()).unwrap();
    let a = apply_t(&spec, &f, 1.5, &cfg(), &Streams::new(3)).unwrap();
    let b = apply_t(&spec, &f, 1.5, &cfg(), &Streams::new(3)).unwrap();
    assert_eq!(a.values(), b.values());
    let independent = OperatorConfig {
        common_random_numbers: false,
        ..cfg()
    };
    let c = apply_t(&spec, &f, 1.5, &independent, &Streams::new(3)).unwrap();
    for (x, y) in a.values().iter().zip(c.values()) {
        assert!((x - y).abs() / x < 0.1);
    }
}

#[test]
fn products_agree_with_power_iteration_for_two_point() {
    // ‖Π_n‖ = |Π_n| for scalars, so (E|Π_n|^ϰ)^{1/n} = E M^ϰ exactly in law
    let spec = presets::two_point();
    let v = validate_rho_by_products(&spec, 1.0, 10, 200_000, &Streams::new(9)).unwrap();
    assert!((v - 0.95).abs() < 0.01, "{v}");
}

#[test]
fn grid_dimension_mismatch_is_rejected() {
    let grid = Arc::new(SphereGrid::new(2, 16).unwrap());
    assert!(spectral_radius(&presets::two_point(), grid, 1.0, &cfg(), &Streams::new(1)).is_err());
}

fn grid_values(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..10.0, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn apply_is_positive(v in grid_values(64), vk in 0.0f64..4.0) {
        let op = gp_operator();
        let f = GridFunction::new(op.grid().clone(), v.iter().map(|x| x + 1e-3).collect()).unwrap();
        prop_assert!(op.apply(&f, vk).values().iter().all(|x| *x > 0.0));
    }

    #[test]
    fn apply_is_monotone(v in grid_values(64), bump in grid_values(64), vk in 0.0f64..4.0) {
        let op = gp_operator();
        let f = GridFunction::new(op.grid().clone(), v.clone()).unwrap();
        let g = GridFunction::new(op.grid().clone(), v.iter().zip(&bump).map(|(a, b)| a + b).collect()).unwrap();
        let (tf, tg) = (op.apply(&f, vk), op.apply(&g, vk));
        for (a, b) in tf.values().iter().zip(tg.values()) {
            prop_assert!(a <= b);
        }
    }

    #[test]
    fn apply_is_homogeneous(v in grid_values(64), c in 0.01f64..100.0, vk in 0.0f64..4.0) {
        let op = gp_operator();
        let f = GridFunction::new(op.grid().clone(), v).unwrap();
        let (a, b) = (op.apply(&f.scaled(c), vk), op.apply(&f, vk));
        for (x, y) in a.values().iter().zip(b.values()) {
            prop_assert!((x - c * y).abs() <= 1e-12 * x.abs().max(1e-300));
        }
    }
}
