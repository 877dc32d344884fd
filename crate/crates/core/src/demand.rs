//! Poisson demand and the expected allocation share `g(a) = E[min(1, D/a)]`.
//!
//! With `F(k) = P(D <= k)` tabulated once, `g` and its slope are O(1):
//!
//! ```text
//! g(a)  = 1 - F(k0 - 1) + (λ / a) F(k0 - 2),   k0 = ceil(a)
//! g'(a) = -(λ / a²) F(floor(a) - 1)
//! ```
//!
//! with `F(k) = 0` for `k < 0`.

use crate::error::{Error, Result};

/// Upper-tail mass allowed beyond the last tabulated count.
pub const TAIL_TOLERANCE: f64 = 1e-12;

/// Tail mass the brute-force oracle is allowed to drop.
const ORACLE_TAIL: f64 = 1e-13;

/// Above this rate `exp(-λ)` underflows and the table is built outward from the mode.
const DIRECT_RECURRENCE_MAX_LAMBDA: f64 = 700.0;

/// Tabulated pmf and cdf of `Poisson(λ)` for `k = 0..=k_max`.
///
/// Immutable once built; share freely across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct PoissonTable {
    lambda: f64,
    pmf: Vec<f64>,
    cdf: Vec<f64>,
}

impl PoissonTable {
    /// Builds a table reaching at least `k_cap` and far enough into the
    /// upper tail that `1 - F(k_max) <= 1e-12`.
    pub fn new(lambda: f64, k_cap: usize) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::invalid(
                "lambda",
                format!("must be finite and > 0, got {lambda}"),
            ));
        }
        if k_cap < 1 {
            return Err(Error::invalid("k_cap", "must be >= 1"));
        }
        let pmf = if lambda <= DIRECT_RECURRENCE_MAX_LAMBDA {
            pmf_from_zero(lambda, k_cap)
        } else {
            pmf_from_mode(lambda, k_cap)
        };
        let mut cdf = Vec::with_capacity(pmf.len());
        let mut acc = 0.0;
        for &p in &pmf {
            acc += p;
            cdf.push(acc.min(1.0));
        }
        Ok(Self { lambda, pmf, cdf })
    }

    /// Table sized for a population of `k_agents` (effective supply never exceeds K).
    pub fn for_population(lambda: f64, k_agents: usize) -> Result<Self> {
        Self::new(lambda, k_agents.max(1))
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn k_max(&self) -> usize {
        self.pmf.len() - 1
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    pub fn cdf(&self) -> &[f64] {
        &self.cdf
    }

    /// `F(k)` with `F(k) = 0` for negative `k`.
    pub fn cdf_at(&self, k: i64) -> Result<f64> {
        if k < 0 {
            return Ok(0.0);
        }
        self.cdf.get(k as usize).copied().ok_or(Error::TableTooSmall {
            needed: k as u64,
            k_max: self.k_max(),
        })
    }
}

/// Geometric bound on `Σ_{j>k} pmf[j]`, valid once `k + 1 > λ`.
fn tail_bound(pmf_k: f64, k: usize, lambda: f64) -> f64 {
    let r = lambda / (k as f64 + 1.0);
    if r >= 1.0 {
        f64::INFINITY
    } else {
        pmf_k * r / (1.0 - r)
    }
}

fn pmf_from_zero(lambda: f64, k_cap: usize) -> Vec<f64> {
    let mut pmf = vec![(-lambda).exp()];
    let mut k = 0;
    while k < k_cap || tail_bound(pmf[k], k, lambda) > TAIL_TOLERANCE {
        k += 1;
        let next = pmf[k - 1] * lambda / k as f64;
        pmf.push(next);
    }
    pmf
}

// Unnormalised weights relative to the mode, then normalised. Counts whose
// weight underflows below the mode are exactly zero in f64 anyway.
fn pmf_from_mode(lambda: f64, k_cap: usize) -> Vec<f64> {
    let mode = lambda.floor() as usize;
    let mut below = Vec::new();
    let mut w = 1.0;
    let mut k = mode;
    while k > 0 && w > 0.0 {
        w *= k as f64 / lambda;
        below.push(w);
        k -= 1;
    }
    let lowest = mode - below.len();
    let mut weights = vec![0.0; lowest];
    weights.extend(below.into_iter().rev());
    weights.push(1.0);
    let mut k = mode;
    while k < k_cap || tail_bound(weights[k], k, lambda) > TAIL_TOLERANCE * 1e-3 {
        k += 1;
        let next = weights[k - 1] * lambda / k as f64;
        weights.push(next);
    }
    let total: f64 = weights.iter().sum();
    weights.iter().map(|w| w / total).collect()
}

fn check_a(a: f64) -> Result<()> {
    if a.is_finite() && a > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(a))
    }
}

/// `g(a) = E[min(1, D/a)]` from the tabulated cdf.
pub fn eval_g(a: f64, table: &PoissonTable) -> Result<f64> {
    check_a(a)?;
    let k0 = a.ceil();
    if k0 > table.k_max() as f64 {
        return Err(Error::TableTooSmall {
            needed: k0 as u64,
            k_max: table.k_max(),
        });
    }
    let k0 = k0 as i64;
    let g = 1.0 - table.cdf_at(k0 - 1)? + table.lambda / a * table.cdf_at(k0 - 2)?;
    Ok(g.clamp(0.0, 1.0))
}

/// `g'(a) = -(λ/a²) F(floor(a) - 1)`.
///
/// `g` has kinks at the integers; there the right-hand derivative is returned.
pub fn eval_g_prime(a: f64, table: &PoissonTable) -> Result<f64> {
    check_a(a)?;
    let f = table.cdf_at(a.floor() as i64 - 1)?;
    Ok(-(table.lambda / (a * a)) * f)
}

/// Brute-force `Σ_k pmf(k) min(1, k/a)`, summed term by term until the
/// dropped tail is below `1e-13`. Independent of [`PoissonTable`].
pub fn g_oracle(a: f64, lambda: f64) -> Result<f64> {
    check_a(a)?;
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::invalid(
            "lambda",
            format!("must be finite and > 0, got {lambda}"),
        ));
    }
    let ln_lambda = lambda.ln();
    let mut ln_pmf = -lambda;
    let mut sum = 0.0;
    let mut k: u64 = 0;
    loop {
        let kf = k as f64;
        let pmf = ln_pmf.exp();
        sum += pmf * (kf / a).min(1.0);
        if kf >= a && kf + 1.0 > lambda && tail_bound(pmf, k as usize, lambda) <= ORACLE_TAIL {
            break;
        }
        k += 1;
        ln_pmf += ln_lambda - (k as f64).ln();
    }
    Ok(sum)
}

#[cfg(test)]
mod tests {
    use super::*;

    const E_INV: f64 = 0.367_879_441_171_442_33;

    #[test]
    fn small_table_matches_direct_pmf() {
        let t = PoissonTable::new(1.0, 2).unwrap();
        assert!((t.pmf()[0] - E_INV).abs() < 1e-15);
        assert!((t.pmf()[1] - E_INV).abs() < 1e-15);
        assert!((t.cdf()[1] - 2.0 * E_INV).abs() < 1e-15);
        assert!(t.k_max() >= 2);
    }

    #[test]
    fn table_tail_is_truncated_below_tolerance() {
        for &(lambda, cap) in &[(50.0, 100), (1.0, 2), (80.0, 100), (1e4, 100), (0.01, 1)] {
            let t = PoissonTable::new(lambda, cap).unwrap();
            assert!(t.k_max() >= cap);
            assert!(1.0 - t.cdf()[t.k_max()] <= TAIL_TOLERANCE, "lambda = {lambda}");
            assert!(t.cdf()[t.k_max()] <= 1.0);
        }
        // F(100) itself is 1 - 1.57e-10 for λ = 50; the table runs past k_cap to meet the bound.
        let t = PoissonTable::new(50.0, 100).unwrap();
        assert!(t.k_max() > 100);
        assert!((1.0 - t.cdf()[100] - 1.569_745_972_437_404e-10).abs() < 1e-15);
        assert!(t.cdf()[t.k_max()] >= 1.0 - 1e-12);
    }

    #[test]
    fn cdf_matches_brute_force_sum() {
        // scipy.stats.poisson.cdf(9, 10)
        let t = PoissonTable::new(10.0, 50).unwrap();
        assert!((t.cdf()[9] - 0.457_929_714_471_852_3).abs() < 1e-13);
        let mut acc = 0.0;
        for k in 0..=t.k_max() {
            acc += t.pmf()[k];
            assert!((t.cdf()[k] - acc).abs() <= 1e-14);
        }
    }

    #[test]
    fn invalid_lambda_is_rejected() {
        assert!(matches!(
            PoissonTable::new(0.0, 10),
            Err(Error::InvalidParameter { .. })
        ));
        assert!(matches!(
            PoissonTable::new(-1.0, 10),
            Err(Error::InvalidParameter { .. })
        ));
        assert!(matches!(
            PoissonTable::new(f64::NAN, 10),
            Err(Error::InvalidParameter { .. })
        ));
    }

    #[test]
    fn g_below_one_is_probability_of_any_demand() {
        let t = PoissonTable::new(50.0, 100).unwrap();
        let expected = 1.0 - (-50.0f64).exp();
        assert_eq!(eval_g(0.5, &t).unwrap(), expected);
        assert!((g_oracle(0.5, 50.0).unwrap() - expected).abs() <= 1e-13);
        assert!((g_oracle(1.0, 1.0).unwrap() - (1.0 - E_INV)).abs() <= 1e-13);
    }

    #[test]
    fn g_matches_high_precision_reference() {
        // mpmath nsum of the defining series at 30 digits
        let t = PoissonTable::new(50.0, 100).unwrap();
        assert!((eval_g(30.7, &t).unwrap() - 0.999_899_179_296_143).abs() < 1e-12);
        assert!((eval_g(35.65, &t).unwrap() - 0.998_907_381_075_081_9).abs() < 1e-12);
        let t3 = PoissonTable::new(3.0, 10).unwrap();
        assert!((eval_g(3.0, &t3).unwrap() - 0.775_958_192_344_612_3).abs() < 1e-12);
        assert!((eval_g(3.0, &t3).unwrap() - g_oracle(3.0, 3.0).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn g_for_huge_supply_is_mean_demand_over_supply() {
        let t = PoissonTable::new(50.0, 1_000_001).unwrap();
        let g = eval_g(1e6, &t).unwrap();
        assert!((g - 5e-5).abs() < 1e-12);
    }

    #[test]
    fn g_errors() {
        let t = PoissonTable::new(50.0, 100).unwrap();
        assert_eq!(eval_g(0.0, &t), Err(Error::Domain(0.0)));
        assert_eq!(eval_g(-2.0, &t), Err(Error::Domain(-2.0)));
        assert!(matches!(eval_g(1e6, &t), Err(Error::TableTooSmall { .. })));
        assert_eq!(eval_g_prime(-1.0, &t), Err(Error::Domain(-1.0)));
        assert!(g_oracle(0.0, 1.0).is_err());
    }

    #[test]
    fn slope_vanishes_below_one() {
        let t = PoissonTable::new(7.0, 20).unwrap();
        assert_eq!(eval_g_prime(0.5, &t).unwrap(), 0.0);
    }

    #[test]
    fn slope_matches_closed_form_values() {
        let t = PoissonTable::new(50.0, 100).unwrap();
        let expected = -(50.0 / (30.7 * 30.7)) * t.cdf()[29];
        assert_eq!(eval_g_prime(30.7, &t).unwrap(), expected);
        let t10 = PoissonTable::new(10.0, 50).unwrap();
        let d = eval_g_prime(20.5, &t10).unwrap();
        assert!((d / t10.cdf()[19] + 0.023_795_359_904_818_56).abs() < 1e-15);
    }

    #[test]
    fn slope_matches_central_difference() {
        let h = 1e-6;
        for &(lambda, a) in &[(50.0, 30.7), (10.0, 20.5), (3.0, 2.3), (80.0, 77.77)] {
            let t = PoissonTable::new(lambda, 100).unwrap();
            let fd = (eval_g(a + h, &t).unwrap() - eval_g(a - h, &t).unwrap()) / (2.0 * h);
            let d = eval_g_prime(a, &t).unwrap();
            assert!(((fd - d) / d).abs() <= 1e-6, "lambda={lambda} a={a}: {fd} vs {d}");
        }
    }

    #[test]
    fn slope_at_integers_is_right_hand() {
        let t = PoissonTable::new(10.0, 50).unwrap();
        let h = 1e-7;
        let right = (eval_g(12.0 + h, &t).unwrap() - eval_g(12.0, &t).unwrap()) / h;
        let d = eval_g_prime(12.0, &t).unwrap();
        assert!(((right - d) / d).abs() < 1e-5);
    }
}
