use adherence::{convergence_time, eval_g, mf_trajectory, solve_x_star, ModelParams, PoissonTable, DEFAULT_DELTA_X};
use proptest::prelude::*;

fn setup(k: usize, p: f64, lambda: f64, u: f64) -> (ModelParams, PoissonTable) {
    let params = ModelParams::new(k, p, lambda, u).unwrap();
    let table = params.poisson_table().unwrap();
    (params, table)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn recursion_stays_in_unit_interval(
        k in 1usize..150,
        p in 0.0f64..=1.0,
        u in 0.0f64..=1.0,
        lambda in 0.1f64..100.0,
        x0 in 0.0f64..=1.0,
        n0 in 0.01f64..50.0,
    ) {
        let (params, table) = setup(k, p, lambda, u);
        let traj = mf_trajectory(&params, &table, x0, n0, 60).unwrap();
        for w in traj.windows(2) {
            prop_assert!((0.0..=1.0).contains(&w[1].state.x_bar));
            prop_assert!(w[1].state.n_bar >= w[0].state.n_bar);
            prop_assert!(w[1].state.n_bar > 0.0);
        }
    }
}

#[test]
fn step_sizes_are_sandwiched_for_strong_control() {
    for &(p, u, n0) in &[(0.3, 0.5, 4.0), (0.1, 1.0, 0.5), (0.6, 0.6, 10.0), (0.05, 0.2, 1.0)] {
        let (params, table) = setup(100, p, 50.0, u);
        let traj = mf_trajectory(&params, &table, 0.25, n0, 5000).unwrap();
        for pt in &traj {
            let t = pt.state.epoch as f64;
            let g = pt.diagnostics.gamma;
            assert!(g >= p / (n0 + t + 1.0) - 1e-15, "lower bound at t={t}");
            assert!(g <= 1.0 / (n0 + t * p) + 1e-15, "upper bound at t={t}");
        }
    }
}

#[test]
fn converges_to_equilibrium_across_parameter_grid() {
    for &p in &[0.3, 0.6] {
        for &lambda in &[5.0, 50.0, 90.0] {
            for &du in &[0.0, 0.3, 1.0] {
                let u = p + (1.0 - p) * du;
                let (params, table) = setup(100, p, lambda, u);
                let x_star = solve_x_star(u, &params, &table, DEFAULT_DELTA_X).unwrap().x_star;
                let traj = mf_trajectory(&params, &table, 0.5, 4.0, 10_000).unwrap();
                let err = (traj.last().unwrap().state.x_bar - x_star).abs();
                assert!(err <= 1e-3, "p={p} λ={lambda} u={u}: {err}");
            }
        }
    }
}

#[test]
fn baseline_control_error_decays_harmonically() {
    // with u = p the participation is constant, so e(t) = e(0) n0 / (n0 + p t)
    for &(p, lambda) in &[(0.1, 50.0), (0.1, 5.0), (0.3, 50.0), (0.6, 90.0)] {
        let (params, table) = setup(100, p, lambda, p);
        let x_star = solve_x_star(p, &params, &table, 1e-14).unwrap().x_star;
        let (x0, n0) = (0.5, 4.0);
        let traj = mf_trajectory(&params, &table, x0, n0, 10_000).unwrap();
        for &t in &[10usize, 1000, 10_000] {
            let expected = (x0 - x_star) * n0 / (n0 + p * t as f64);
            let got = traj[t].state.x_bar - x_star;
            assert!((got - expected).abs() < 1e-10, "p={p} t={t}: {got} vs {expected}");
        }
    }
}

#[test]
fn fixed_point_is_stationary() {
    let (params, table) = setup(100, 0.3, 50.0, 0.7);
    let x_star = solve_x_star(0.7, &params, &table, 1e-14).unwrap().x_star;
    let traj = mf_trajectory(&params, &table, x_star, 2.5, 500).unwrap();
    for pt in &traj {
        assert!((pt.state.x_bar - x_star).abs() < 1e-12);
    }
}

#[test]
fn pooled_recursion_gives_same_trajectory() {
    let (params, table) = setup(100, 0.3, 50.0, 0.8);
    let traj = mf_trajectory(&params, &table, 0.25, 4.0, 10_000).unwrap();
    // ᾱ' = ᾱ + q̄ s, n̄' = n̄ + q̄, x̄ = ᾱ / n̄
    let (mut alpha, mut n) = (0.25 * 4.0, 4.0);
    for pt in &traj {
        let x = alpha / n;
        assert!((x - pt.state.x_bar).abs() < 1e-12, "t={}", pt.state.epoch);
        let q = (1.0 - x) * params.p_base + params.u * x;
        let s = eval_g(params.supply(q), &table).unwrap();
        alpha += q * s;
        n += q;
    }
}

#[test]
fn convergence_time_is_finite_for_section_iv() {
    let (params, table) = setup(100, 0.3, 50.0, 0.5);
    let x_star = solve_x_star(0.5, &params, &table, DEFAULT_DELTA_X).unwrap().x_star;
    let traj = mf_trajectory(&params, &table, 0.25, 4.0, 1000).unwrap();
    let t_eps = convergence_time(&traj, x_star, 0.01).unwrap().expect("band reached");
    assert!(t_eps > 0 && t_eps < 1000);
    assert!(traj[t_eps as usize..]
        .iter()
        .all(|p| (p.state.x_bar - x_star).abs() <= 0.01));
    assert!((traj[t_eps as usize - 1].state.x_bar - x_star).abs() > 0.01);
}

#[test]
fn section_iv_gap_after_a_thousand_steps() {
    let (params, table) = setup(100, 0.3, 50.0, 0.5);
    let x_star = solve_x_star(0.5, &params, &table, 1e-14).unwrap().x_star;
    let traj = mf_trajectory(&params, &table, 0.25, 4.0, 10_000).unwrap();
    let gap = |t: usize| (traj[t].state.x_bar - x_star).abs();
    assert!((gap(1000) - 2.73e-3).abs() < 1e-4, "{}", gap(1000));
    assert_eq!(convergence_time(&traj, x_star, 1e-3).unwrap(), Some(2355));
    assert!(gap(10_000) <= 1e-3);
}

#[test]
fn error_decays_polynomially() {
    // The decay exponent is 1 + |s'(x*)|, so only the sign and rough order are checked here.
    let (params, table) = setup(100, 0.3, 50.0, 0.5);
    let x_star = solve_x_star(0.5, &params, &table, DEFAULT_DELTA_X).unwrap().x_star;
    let traj = mf_trajectory(&params, &table, 0.25, 4.0, 10_000).unwrap();
    let e = |t: usize| (traj[t].state.x_bar - x_star).abs();
    let slope = (e(10_000).ln() - e(100).ln()) / (10_000f64.ln() - 100f64.ln());
    assert!(slope < -0.6 && slope > -3.0, "{slope}");
}
