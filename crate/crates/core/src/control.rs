//! Steady-state performance under a constant recommendation intensity and
//! the throughput-optimal control subject to an adherence floor.
//!
//! For `u in [p, 1]` the equilibrium `x∞(u)` is unique and nonincreasing in
//! `u`; throughput at equilibrium is `Γ∞(u) = q*(u) x∞(u)` with
//! `q*(u) = p + (u - p) x∞(u)`. Maximising `Γ∞` subject to `x∞(u) >= x_floor`
//! therefore reduces to finding the largest feasible `u`, which
//! [`optimal_u`] does by bisection over equilibrium solves.

use rayon::prelude::*;
use serde::Serialize;

use crate::demand::{eval_g, eval_g_prime, PoissonTable};
use crate::equilibrium::solve_x_star;
use crate::error::{Error, Result};
use crate::meanfield::{check_unit, mf_trajectory, ModelParams};
use crate::DEFAULT_DELTA_X;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SteadyStateMetrics {
    pub u: f64,
    pub x_inf: f64,
    pub q_star: f64,
    pub throughput: f64,
}

impl SteadyStateMetrics {
    fn at_equilibrium(u: f64, p: f64, x_inf: f64) -> Self {
        let q_star = p + (u - p) * x_inf;
        Self {
            u,
            x_inf,
            q_star,
            throughput: q_star * x_inf,
        }
    }
}

pub fn steady_state_metrics(u: f64, params: &ModelParams, table: &PoissonTable) -> Result<SteadyStateMetrics> {
    let eq = solve_x_star(u, params, table, DEFAULT_DELTA_X)?;
    Ok(SteadyStateMetrics::at_equilibrium(u, params.p_base, eq.x_star))
}

/// Steady-state metrics for every `u`, in input order.
pub fn frontier(params: &ModelParams, u_values: &[f64], table: &PoissonTable) -> Result<Vec<SteadyStateMetrics>> {
    u_values
        .par_iter()
        .map(|&u| steady_state_metrics(u, params, table))
        .collect()
}

/// Frontier estimated by running the recursion for `horizon` steps from
/// `(x0, n0)` and averaging the last `window` recorded samples.
pub fn frontier_transient(
    params: &ModelParams,
    u_values: &[f64],
    table: &PoissonTable,
    x0: f64,
    n0: f64,
    horizon: usize,
    window: usize,
) -> Result<Vec<SteadyStateMetrics>> {
    if window == 0 || window > horizon + 1 {
        return Err(Error::invalid(
            "window",
            format!("must lie in 1..={}, got {window}", horizon + 1),
        ));
    }
    u_values
        .par_iter()
        .map(|&u| {
            if u < params.p_base {
                return Err(Error::Regime { u, p: params.p_base });
            }
            let traj = mf_trajectory(&params.with_u(u), table, x0, n0, horizon)?;
            let tail = &traj[traj.len() - window..];
            let n = window as f64;
            Ok(SteadyStateMetrics {
                u,
                x_inf: tail.iter().map(|p| p.state.x_bar).sum::<f64>() / n,
                q_star: tail.iter().map(|p| p.diagnostics.q_bar).sum::<f64>() / n,
                throughput: tail.iter().map(|p| p.diagnostics.throughput()).sum::<f64>() / n,
            })
        })
        .collect()
}

/// CSV with columns `u,x_inf,q_star,throughput`.
pub fn write_frontier_csv<W: std::io::Write>(points: &[SteadyStateMetrics], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for p in points {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GammaPrime {
    /// `Γ∞'(p) = x_p² + p (K - 1) x_p g'(a_p)`.
    pub value: f64,
    pub x_p: f64,
    pub a_p: f64,
    /// `a_p` is an integer, where `g` has a kink; `value` uses the right-hand slope.
    pub one_sided: bool,
}

pub fn gamma_prime_at_p(params: &ModelParams, table: &PoissonTable) -> Result<GammaPrime> {
    params.check_table(table)?;
    let p = params.p_base;
    let a_p = params.supply(p);
    let x_p = eval_g(a_p, table)?;
    let slope = eval_g_prime(a_p, table)?;
    Ok(GammaPrime {
        value: x_p * x_p + p * (params.k_agents as f64 - 1.0) * x_p * slope,
        x_p,
        a_p,
        one_sided: a_p.fract() == 0.0,
    })
}

/// Both sides of the sufficient condition for strictly increasing throughput:
///
/// ```text
/// (K - 1) sup |g'(a*(u))| sup (p + 2(u - p) x∞(u))  <  inf x∞(u)
/// ```
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotonicityCertificate {
    pub holds: bool,
    pub lhs: f64,
    pub rhs: f64,
    pub sup_abs_g_prime: f64,
    pub sup_weight: f64,
    /// Controls at which `a*(u)` is an integer. Non-empty means the
    /// differentiability hypothesis fails somewhere on `[p, 1]`.
    pub integer_crossings: Vec<f64>,
}

pub fn throughput_monotonicity_certificate(
    params: &ModelParams,
    table: &PoissonTable,
    resolution: usize,
) -> Result<MonotonicityCertificate> {
    if resolution < 100 {
        return Err(Error::invalid(
            "resolution",
            format!("must be >= 100, got {resolution}"),
        ));
    }
    let p = params.p_base;
    let k1 = params.k_agents as f64 - 1.0;
    let x_at = |u: f64| solve_x_star(u, params, table, DEFAULT_DELTA_X).map(|r| r.x_star);
    let a_star = |u: f64, x: f64| params.supply(p + (u - p) * x);

    let us: Vec<f64> = (0..=resolution)
        .map(|j| (p + (1.0 - p) * j as f64 / resolution as f64).min(1.0))
        .collect();
    let xs = us.par_iter().map(|&u| x_at(u)).collect::<Result<Vec<_>>>()?;
    let a: Vec<f64> = us.iter().zip(&xs).map(|(&u, &x)| a_star(u, x)).collect();

    let mut sup_abs_g_prime = 0.0f64;
    let mut sup_weight = 0.0f64;
    let mut inf_x = f64::INFINITY;
    for ((&u, &x), &aa) in us.iter().zip(&xs).zip(&a) {
        sup_abs_g_prime = sup_abs_g_prime.max(eval_g_prime(aa, table)?.abs());
        sup_weight = sup_weight.max(p + 2.0 * (u - p) * x);
        inf_x = inf_x.min(x);
    }

    // |g'| jumps up at each integer supply, so every crossing is a candidate supremum.
    let mut integer_crossings = Vec::new();
    for j in 0..resolution {
        if a[j].fract() == 0.0 {
            integer_crossings.push(us[j]);
        }
        let (lo_a, hi_a) = (a[j].min(a[j + 1]), a[j].max(a[j + 1]));
        let mut n = lo_a.floor() + 1.0;
        while n < hi_a {
            let above_at_left = a[j] > n;
            let (mut lo, mut hi) = (us[j], us[j + 1]);
            while hi - lo > 1e-12 {
                let mid = 0.5 * (lo + hi);
                if (a_star(mid, x_at(mid)?) > n) == above_at_left {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let u = 0.5 * (lo + hi);
            let x = x_at(u)?;
            integer_crossings.push(u);
            sup_abs_g_prime = sup_abs_g_prime.max(eval_g_prime(n, table)?.abs());
            sup_weight = sup_weight.max(p + 2.0 * (u - p) * x);
            inf_x = inf_x.min(x);
            n += 1.0;
        }
    }
    if a[resolution].fract() == 0.0 {
        integer_crossings.push(us[resolution]);
    }

    let lhs = k1 * sup_abs_g_prime * sup_weight;
    Ok(MonotonicityCertificate {
        holds: lhs < inf_x,
        lhs,
        rhs: inf_x,
        sup_abs_g_prime,
        sup_weight,
        integer_crossings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum OptimalStatus {
    /// Interior optimum; the adherence floor binds.
    Optimal,
    /// Even `u = p` misses the floor.
    Infeasible,
    /// `u = 1` meets the floor.
    SaturatedAtOne,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OptimalControlResult {
    pub status: OptimalStatus,
    pub u_star: Option<f64>,
    pub x_at_u_star: Option<f64>,
    pub throughput_at_u_star: Option<f64>,
    /// Bisection steps on `u`.
    pub iterations: u32,
    pub x_floor: f64,
    pub delta_u: f64,
    pub delta_x: f64,
}

impl OptimalControlResult {
    /// JSON report: status, u_star, x_at_u_star, throughput, iterations, tolerances.
    pub fn report_json(&self) -> serde_json::Value {
        serde_json::json!({
            "status": self.status,
            "u_star": self.u_star,
            "x_at_u_star": self.x_at_u_star,
            "throughput": self.throughput_at_u_star,
            "iterations": self.iterations,
            "x_floor": self.x_floor,
            "tolerances": { "delta_u": self.delta_u, "delta_x": self.delta_x },
        })
    }
}

/// Largest `u in [p, 1]` with `x∞(u) >= x_floor`, by bisection over equilibrium solves.
pub fn optimal_u(
    params: &ModelParams,
    x_floor: f64,
    delta_u: f64,
    delta_x: f64,
    table: &PoissonTable,
) -> Result<OptimalControlResult> {
    params.validate()?;
    check_unit("x_floor", x_floor)?;
    if x_floor == 0.0 || x_floor == 1.0 {
        return Err(Error::invalid("x_floor", "must lie strictly inside (0, 1)"));
    }
    if delta_u.is_nan() || delta_u <= 0.0 {
        return Err(Error::invalid("delta_u", format!("must be > 0, got {delta_u}")));
    }
    if delta_x.is_nan() || delta_x <= 0.0 {
        return Err(Error::invalid("delta_x", format!("must be > 0, got {delta_x}")));
    }
    let p = params.p_base;
    let x_star = |u: f64| solve_x_star(u, params, table, delta_x).map(|r| r.x_star);
    let mut result = OptimalControlResult {
        status: OptimalStatus::Infeasible,
        u_star: None,
        x_at_u_star: None,
        throughput_at_u_star: None,
        iterations: 0,
        x_floor,
        delta_u,
        delta_x,
    };
    let finish = |mut r: OptimalControlResult, status, u: f64, x: f64| {
        let m = SteadyStateMetrics::at_equilibrium(u, p, x);
        r.status = status;
        r.u_star = Some(u);
        r.x_at_u_star = Some(x);
        r.throughput_at_u_star = Some(m.throughput);
        r
    };

    let (mut lo, mut hi) = (p, 1.0);
    let x_lo = x_star(lo)?;
    if x_lo < x_floor {
        return Ok(result);
    }
    let x_hi = x_star(hi)?;
    if x_hi >= x_floor {
        return Ok(finish(result, OptimalStatus::SaturatedAtOne, 1.0, x_hi));
    }
    let mut x_at_lo = x_lo;
    while hi - lo > delta_u {
        let mid = 0.5 * (lo + hi);
        let x_mid = x_star(mid)?;
        if x_mid >= x_floor {
            lo = mid;
            x_at_lo = x_mid;
        } else {
            hi = mid;
        }
        result.iterations += 1;
    }
    Ok(finish(result, OptimalStatus::Optimal, lo, x_at_lo))
}
