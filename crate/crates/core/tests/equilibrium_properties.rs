use adherence::{
    mf_trajectory, phi, scan_fixed_points, solve_x_star, uniqueness_certificate, ModelParams, PoissonTable, Regime,
    DEFAULT_DELTA_X,
};
use proptest::prelude::*;

fn setup(k: usize, p: f64, lambda: f64) -> (ModelParams, PoissonTable) {
    let params = ModelParams::new(k, p, lambda, p).unwrap();
    let table = params.poisson_table().unwrap();
    (params, table)
}

proptest! {
    #[test]
    fn residual_brackets_a_root(
        k in 1usize..200, p in 0.0f64..=1.0, u in 0.0f64..=1.0, lambda in 0.1f64..100.0,
    ) {
        let (params, table) = setup(k, p, lambda);
        prop_assert!(phi(0.0, u, &params, &table).unwrap() >= 0.0);
        prop_assert!(phi(1.0, u, &params, &table).unwrap() <= 0.0);
    }

    #[test]
    fn residual_strictly_decreasing_for_strong_control(
        k in 2usize..200, p in 0.0f64..=1.0, frac in 0.0f64..=1.0, lambda in 0.1f64..100.0,
    ) {
        let (params, table) = setup(k, p, lambda);
        let u = p + (1.0 - p) * frac;
        let values: Vec<f64> = (0..=1000)
            .map(|i| phi(i as f64 / 1000.0, u, &params, &table).unwrap())
            .collect();
        prop_assert!(values.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn certified_unique_means_one_root(
        k in 2usize..120, p in 0.0f64..=1.0, u in 0.0f64..=1.0, lambda in 0.1f64..60.0,
    ) {
        let (params, table) = setup(k, p, lambda);
        let cert = uniqueness_certificate(u, &params, &table).unwrap();
        if cert.regime != Regime::Inconclusive {
            let scan = scan_fixed_points(u, &params, &table, 2000).unwrap();
            prop_assert_eq!(scan.roots.len(), 1, "{:?}", cert);
        }
        if cert.regime == Regime::Contraction {
            prop_assert!(cert.lipschitz_constant < 1.0);
        }
    }
}

#[test]
fn scan_agrees_with_bisection_for_strong_control() {
    let (params, table) = setup(100, 0.3, 50.0);
    for u in [0.3, 0.45, 0.8, 1.0] {
        let scan = scan_fixed_points(u, &params, &table, 1000).unwrap();
        let x = solve_x_star(u, &params, &table, DEFAULT_DELTA_X).unwrap().x_star;
        assert_eq!(scan.roots.len(), 1);
        assert!((scan.roots[0] - x).abs() < 1e-8);
    }
}

#[test]
fn equilibrium_is_trajectory_limit() {
    let (params, table) = setup(100, 0.3, 50.0);
    for u in [0.4, 0.9] {
        let x = solve_x_star(u, &params, &table, 1e-10).unwrap();
        assert!(x.residual.abs() <= 1e-9);
        let traj = mf_trajectory(&params.with_u(u), &table, 0.25, 4.0, 10_000).unwrap();
        assert!((traj.last().unwrap().state.x_bar - x.x_star).abs() <= 1e-3);
    }
}
