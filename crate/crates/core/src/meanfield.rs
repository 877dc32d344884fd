//! Deterministic population recursion for adherence.
//!
//! ```text
//! q̄(t)   = (1 - x̄) p + u x̄
//! s(t)   = g(1 + (K - 1) q̄)
//! n̄(t+1) = n̄ + q̄
//! x̄(t+1) = x̄ + γ (s - x̄),   γ = q̄ / (n̄ + q̄)
//! ```

use serde::{Deserialize, Serialize};

use crate::demand::{eval_g, PoissonTable};
use crate::error::{Error, Result};

/// Population-level model parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Number of drivers K.
    pub k_agents: usize,
    /// Mean baseline participation p.
    pub p_base: f64,
    /// Expected demand per epoch λ.
    pub lambda: f64,
    /// Recommendation intensity u.
    pub u: f64,
}

impl ModelParams {
    pub fn new(k_agents: usize, p_base: f64, lambda: f64, u: f64) -> Result<Self> {
        let params = Self {
            k_agents,
            p_base,
            lambda,
            u,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_agents < 1 {
            return Err(Error::invalid("k_agents", "must be >= 1"));
        }
        check_unit("p_base", self.p_base)?;
        check_unit("u", self.u)?;
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(Error::invalid(
                "lambda",
                format!("must be finite and > 0, got {}", self.lambda),
            ));
        }
        Ok(())
    }

    pub fn with_u(mut self, u: f64) -> Self {
        self.u = u;
        self
    }

    /// The demand table these parameters need.
    pub fn poisson_table(&self) -> Result<PoissonTable> {
        PoissonTable::for_population(self.lambda, self.k_agents)
    }

    /// Effective supply `1 + (K - 1) q` seen by a tagged participating driver.
    pub fn supply(&self, q: f64) -> f64 {
        1.0 + (self.k_agents as f64 - 1.0) * q
    }

    /// Checks that `table` is the demand law for these parameters and covers `a <= K`.
    pub(crate) fn check_table(&self, table: &PoissonTable) -> Result<()> {
        if table.lambda() != self.lambda {
            return Err(Error::invalid(
                "table",
                format!("built for lambda = {}, parameters say {}", table.lambda(), self.lambda),
            ));
        }
        if table.k_max() < self.k_agents {
            return Err(Error::TableTooSmall {
                needed: self.k_agents as u64,
                k_max: table.k_max(),
            });
        }
        Ok(())
    }
}

pub(crate) fn check_unit(name: &'static str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("must lie in [0, 1], got {v}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldState {
    pub x_bar: f64,
    pub n_bar: f64,
    pub epoch: u64,
}

impl MeanFieldState {
    pub fn new(x_bar: f64, n_bar: f64) -> Result<Self> {
        check_unit("x0", x_bar)?;
        if !(n_bar.is_finite() && n_bar > 0.0) {
            return Err(Error::invalid("n0", format!("must be finite and > 0, got {n_bar}")));
        }
        Ok(Self { x_bar, n_bar, epoch: 0 })
    }
}

/// Quantities evaluated at a state before it is advanced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub q_bar: f64,
    pub s: f64,
    pub gamma: f64,
}

impl StepDiagnostics {
    /// Expected allocations per driver this epoch, `q̄ s`.
    pub fn throughput(&self) -> f64 {
        self.q_bar * self.s
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPoint {
    pub state: MeanFieldState,
    pub diagnostics: StepDiagnostics,
}

fn diagnostics(state: &MeanFieldState, params: &ModelParams, table: &PoissonTable) -> Result<StepDiagnostics> {
    let q_bar = (1.0 - state.x_bar) * params.p_base + params.u * state.x_bar;
    let s = eval_g(params.supply(q_bar), table)?;
    let gamma = q_bar / (state.n_bar + q_bar);
    Ok(StepDiagnostics { q_bar, s, gamma })
}

/// Advances the recursion by one epoch and reports the diagnostics of the
/// state it started from.
pub fn mf_step(
    state: &MeanFieldState,
    params: &ModelParams,
    table: &PoissonTable,
) -> Result<(MeanFieldState, StepDiagnostics)> {
    params.check_table(table)?;
    let d = diagnostics(state, params, table)?;
    let next = MeanFieldState {
        x_bar: state.x_bar + d.gamma * (d.s - state.x_bar),
        n_bar: state.n_bar + d.q_bar,
        epoch: state.epoch + 1,
    };
    Ok((next, d))
}

/// `horizon + 1` states `t = 0..=horizon`, each with its own diagnostics.
pub fn mf_trajectory(
    params: &ModelParams,
    table: &PoissonTable,
    x0: f64,
    n0: f64,
    horizon: usize,
) -> Result<Vec<TrajectoryPoint>> {
    params.validate()?;
    params.check_table(table)?;
    let mut state = MeanFieldState::new(x0, n0)?;
    let mut out = Vec::with_capacity(horizon + 1);
    for t in 0..=horizon {
        let d = diagnostics(&state, params, table)?;
        out.push(TrajectoryPoint { state, diagnostics: d });
        if t < horizon {
            state = MeanFieldState {
                x_bar: state.x_bar + d.gamma * (d.s - state.x_bar),
                n_bar: state.n_bar + d.q_bar,
                epoch: state.epoch + 1,
            };
        }
    }
    Ok(out)
}

/// First epoch after which every recorded `x̄` stays within `epsilon` of
/// `x_star`. `None` when the final sample is outside the band.
pub fn convergence_time(traj: &[TrajectoryPoint], x_star: f64, epsilon: f64) -> Result<Option<u64>> {
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(Error::invalid("epsilon", format!("must be > 0, got {epsilon}")));
    }
    if traj.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    let inside = |p: &TrajectoryPoint| (p.state.x_bar - x_star).abs() <= epsilon;
    let tail = traj.iter().rev().take_while(|p| inside(p)).count();
    if tail == 0 {
        return Ok(None);
    }
    Ok(Some(traj[traj.len() - tail].state.epoch))
}

#[derive(Serialize)]
struct TrajectoryRow {
    t: u64,
    x_bar: f64,
    n_bar: f64,
    q_bar: f64,
    s: f64,
    gamma: f64,
    throughput: f64,
}

fn rows(traj: &[TrajectoryPoint]) -> impl Iterator<Item = TrajectoryRow> + '_ {
    traj.iter().map(|p| TrajectoryRow {
        t: p.state.epoch,
        x_bar: p.state.x_bar,
        n_bar: p.state.n_bar,
        q_bar: p.diagnostics.q_bar,
        s: p.diagnostics.s,
        gamma: p.diagnostics.gamma,
        throughput: p.diagnostics.throughput(),
    })
}

/// CSV with columns `t,x_bar,n_bar,q_bar,s,gamma,throughput`.
pub fn write_trajectory_csv<W: std::io::Write>(traj: &[TrajectoryPoint], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows(traj) {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// The same records as [`write_trajectory_csv`], as a JSON array.
pub fn trajectory_json(traj: &[TrajectoryPoint]) -> serde_json::Value {
    serde_json::to_value(rows(traj).collect::<Vec<_>>()).expect("plain records serialise")
}
