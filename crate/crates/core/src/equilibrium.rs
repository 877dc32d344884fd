//! Fixed points of the adherence map `s(x) = g(1 + (K - 1)(p + (u - p) x))`.
//!
//! For `u >= p` the residual `Φ(x) = s(x) - x` is strictly decreasing, so a
//! bisection on `[0, 1]` finds the unique equilibrium. For `u < p` the map can
//! cross the diagonal several times; [`uniqueness_certificate`] checks the
//! contraction condition and [`scan_fixed_points`] enumerates roots.

use serde::Serialize;

use crate::demand::{eval_g, PoissonTable};
use crate::error::{Error, Result};
use crate::meanfield::{check_unit, ModelParams};

/// Width below which scanned roots are refined.
const SCAN_REFINE_TOL: f64 = 1e-10;
/// Roots closer than this are the same root.
const SCAN_DEDUP_TOL: f64 = 1e-8;
/// `|Φ|` below this without a sign change is reported as a near root.
const NEAR_ROOT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EquilibriumResult {
    pub x_star: f64,
    /// `Φ(x_star)`.
    pub residual: f64,
    pub iterations: u32,
    pub unique_certified: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// `u >= p`: the residual is monotone and the equilibrium is unique.
    UGeP,
    /// `u < p` and the composed map is a contraction.
    Contraction,
    /// `u < p` and the contraction bound is `>= 1`; several equilibria may exist.
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UniquenessCertificate {
    pub regime: Regime,
    /// Lipschitz bound `L = (K - 1)|p - u| L_g` of `s` on `[0, 1]`.
    pub lipschitz_constant: f64,
    /// `{a_min} ∪ (ℤ ∩ (a_min, a_max])`, the left ends of the smooth pieces of `g`.
    pub breakpoint_set: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixedPointScan {
    /// Sign-change roots of `Φ`, ascending.
    pub roots: Vec<f64>,
    /// Grid points with `|Φ| < 1e-6` and no sign change nearby.
    pub near_roots: Vec<f64>,
    pub grid: Vec<f64>,
    pub phi: Vec<f64>,
}

impl FixedPointScan {
    /// CSV with columns `x_grid,phi`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> csv::Result<()> {
        #[derive(Serialize)]
        struct Row {
            x_grid: f64,
            phi: f64,
        }
        let mut w = csv::Writer::from_writer(out);
        for (&x_grid, &phi) in self.grid.iter().zip(&self.phi) {
            w.serialize(Row { x_grid, phi })?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `s(x)` at control `u`.
pub(crate) fn adherence_map(x: f64, u: f64, params: &ModelParams, table: &PoissonTable) -> Result<f64> {
    let q = params.p_base + (u - params.p_base) * x;
    eval_g(params.supply(q), table)
}

/// `Φ(x; u) = s(x) - x`. `params.u` is ignored in favour of `u`.
pub fn phi(x: f64, u: f64, params: &ModelParams, table: &PoissonTable) -> Result<f64> {
    check_unit("x", x)?;
    check_unit("u", u)?;
    params.check_table(table)?;
    Ok(adherence_map(x, u, params, table)? - x)
}

/// Bisection on `[0, 1]` for the unique root of `Φ(·; u)`, `u >= p`.
pub fn solve_x_star(u: f64, params: &ModelParams, table: &PoissonTable, delta_x: f64) -> Result<EquilibriumResult> {
    check_unit("u", u)?;
    if delta_x.is_nan() || delta_x <= 0.0 {
        return Err(Error::invalid("delta_x", format!("must be > 0, got {delta_x}")));
    }
    params.check_table(table)?;
    if u < params.p_base {
        return Err(Error::Regime { u, p: params.p_base });
    }
    let f = |x: f64| adherence_map(x, u, params, table).map(|s| s - x);
    let (lo, hi, iterations) = bisect(f, 0.0, 1.0, delta_x)?;
    let x_star = 0.5 * (lo + hi);
    Ok(EquilibriumResult {
        x_star,
        residual: f(x_star)?,
        iterations,
        unique_certified: true,
    })
}

/// Shrinks `[lo, hi]` with `f(lo) >= 0 >= f(hi)` to width `<= tol`.
fn bisect(f: impl Fn(f64) -> Result<f64>, mut lo: f64, mut hi: f64, tol: f64) -> Result<(f64, f64, u32)> {
    let mut iterations = 0;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if f(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        iterations += 1;
    }
    Ok((lo, hi, iterations))
}

pub fn uniqueness_certificate(u: f64, params: &ModelParams, table: &PoissonTable) -> Result<UniquenessCertificate> {
    check_unit("u", u)?;
    params.check_table(table)?;
    let p = params.p_base;
    let a_min = params.supply(u);
    let a_max = params.supply(p);
    let mut breakpoint_set = vec![a_min];
    let mut n = a_min.floor() + 1.0;
    while n <= a_max {
        breakpoint_set.push(n);
        n += 1.0;
    }
    let mut max_ratio = 0.0f64;
    for &a in &breakpoint_set {
        let f = table.cdf_at(a.floor() as i64 - 1)?;
        max_ratio = max_ratio.max(f / (a * a));
    }
    let lipschitz_constant = (params.k_agents as f64 - 1.0) * (p - u).abs() * table.lambda() * max_ratio;
    let regime = if u >= p {
        Regime::UGeP
    } else if lipschitz_constant < 1.0 {
        Regime::Contraction
    } else {
        Regime::Inconclusive
    };
    Ok(UniquenessCertificate {
        regime,
        lipschitz_constant,
        breakpoint_set,
    })
}

/// Roots of `Φ(·; u)` on a uniform grid of `grid_size + 1` points over `[0, 1]`.
pub fn scan_fixed_points(
    u: f64,
    params: &ModelParams,
    table: &PoissonTable,
    grid_size: usize,
) -> Result<FixedPointScan> {
    check_unit("u", u)?;
    if grid_size < 100 {
        return Err(Error::invalid("grid_size", format!("must be >= 100, got {grid_size}")));
    }
    params.check_table(table)?;
    let f = |x: f64| adherence_map(x, u, params, table).map(|s| s - x);
    let grid: Vec<f64> = (0..=grid_size).map(|i| i as f64 / grid_size as f64).collect();
    let phi = grid.iter().map(|&x| f(x)).collect::<Result<Vec<_>>>()?;

    let mut roots = Vec::new();
    for i in 0..grid.len() {
        if phi[i] == 0.0 {
            roots.push(grid[i]);
        }
        if i + 1 < grid.len() && phi[i] * phi[i + 1] < 0.0 {
            let (lo, hi, _) = if phi[i] > 0.0 {
                bisect(f, grid[i], grid[i + 1], SCAN_REFINE_TOL)?
            } else {
                bisect(|x| f(x).map(|v| -v), grid[i], grid[i + 1], SCAN_REFINE_TOL)?
            };
            roots.push(0.5 * (lo + hi));
        }
    }
    roots.sort_by(f64::total_cmp);
    roots.dedup_by(|b, a| (*b - *a).abs() < SCAN_DEDUP_TOL);

    let mut near_roots = Vec::new();
    for i in 0..grid.len() {
        if phi[i] == 0.0 || phi[i].abs() >= NEAR_ROOT_TOL {
            continue;
        }
        let crosses = |j: usize| j + 1 < grid.len() && phi[j] * phi[j + 1] <= 0.0;
        if crosses(i) || (i > 0 && crosses(i - 1)) {
            continue;
        }
        near_roots.push(grid[i]);
    }
    Ok(FixedPointScan {
        roots,
        near_roots,
        grid,
        phi,
    })
}
