//! Microscopic K-driver simulator.
//!
//! Each epoch, in this order:
//! 1. driver `i` participates with probability `q_i = (1 - x_i) p_i + x_i u`
//!    (one uniform per driver, in driver order),
//! 2. demand `D ~ Poisson(λ)` is drawn,
//! 3. `min(D, N)` of the `N` active drivers are matched, chosen uniformly
//!    without replacement by a partial Fisher–Yates shuffle,
//! 4. beliefs update: `α += A`, `β += (1 - A) B`.
//!
//! Randomness comes from ChaCha8 seeded with the master seed. Stream 0 is
//! reserved for drawing initial populations and run `m` uses stream `m + 1`,
//! so runs are independent of one another and of scheduling order.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::Serialize;

use crate::demand::{eval_g, PoissonTable};
use crate::error::{Error, Result};
use crate::meanfield::check_unit;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AgentState {
    /// Success pseudo-count α.
    pub alpha: f64,
    /// Failure pseudo-count β.
    pub beta: f64,
    /// Baseline participation p_i.
    pub p_base: f64,
}

impl AgentState {
    pub fn new(alpha: f64, beta: f64, p_base: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::invalid("alpha", format!("must be finite and > 0, got {alpha}")));
        }
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::invalid("beta", format!("must be finite and > 0, got {beta}")));
        }
        check_unit("p_base", p_base)?;
        Ok(Self { alpha, beta, p_base })
    }

    /// Posterior mean `x = α / (α + β)`.
    pub fn belief(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }

    /// `n = α + β`.
    pub fn pseudo_count(&self) -> f64 {
        self.alpha + self.beta
    }
}

pub fn effective_participation(agent: &AgentState, u: f64) -> f64 {
    let x = agent.belief();
    (1.0 - x) * agent.p_base + x * u
}

/// Source of per-epoch demand.
#[derive(Debug, Clone, Copy)]
pub enum Demand {
    Poisson(Poisson<f64>),
    /// A fixed number of requests every epoch (no draw).
    Fixed(u64),
    /// Every active driver is matched (no draw).
    Unlimited,
}

impl Demand {
    pub fn poisson(lambda: f64) -> Result<Self> {
        Poisson::new(lambda)
            .map(Demand::Poisson)
            .map_err(|e| Error::invalid("lambda", e.to_string()))
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match self {
            Demand::Poisson(d) => d.sample(rng) as u64,
            Demand::Fixed(d) => *d,
            Demand::Unlimited => u64::MAX,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochOutcome {
    pub participation: Vec<bool>,
    pub demand: u64,
    pub allocation: Vec<bool>,
    pub q: Vec<f64>,
}

impl EpochOutcome {
    pub fn active(&self) -> usize {
        self.participation.iter().filter(|&&b| b).count()
    }

    pub fn allocated(&self) -> usize {
        self.allocation.iter().filter(|&&a| a).count()
    }

    /// `M_{-i}`, the number of other drivers that participated.
    pub fn congestion(&self, i: usize) -> usize {
        self.active() - usize::from(self.participation[i])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MicroState {
    pub agents: Vec<AgentState>,
    pub epoch: u64,
}

impl MicroState {
    pub fn new(agents: Vec<AgentState>) -> Result<Self> {
        if agents.is_empty() {
            return Err(Error::invalid("agents", "population must be non-empty"));
        }
        Ok(Self { agents, epoch: 0 })
    }

    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }

    /// `(1/K) Σ x_i`.
    pub fn direct_mean(&self) -> f64 {
        self.agents.iter().map(AgentState::belief).sum::<f64>() / self.len() as f64
    }

    /// `Σ α_i / Σ n_i`.
    pub fn pooled_mean(&self) -> f64 {
        let alpha: f64 = self.agents.iter().map(|a| a.alpha).sum();
        let n: f64 = self.agents.iter().map(AgentState::pseudo_count).sum();
        alpha / n
    }

    pub fn mean_pseudo_count(&self) -> f64 {
        self.agents.iter().map(AgentState::pseudo_count).sum::<f64>() / self.len() as f64
    }

    pub fn mean_baseline(&self) -> f64 {
        self.agents.iter().map(|a| a.p_base).sum::<f64>() / self.len() as f64
    }

    pub fn sample_epoch<R: Rng + ?Sized>(&self, u: f64, demand: &Demand, rng: &mut R) -> EpochOutcome {
        let q: Vec<f64> = self.agents.iter().map(|a| effective_participation(a, u)).collect();
        let participation: Vec<bool> = q.iter().map(|&qi| rng.random::<f64>() < qi).collect();
        let demand = demand.draw(rng);

        let mut active: Vec<usize> = (0..self.len()).filter(|&i| participation[i]).collect();
        let mut allocation = vec![false; self.len()];
        let slots = demand.min(active.len() as u64) as usize;
        if slots == active.len() {
            active.iter().for_each(|&i| allocation[i] = true);
        } else if slots > 0 {
            let (chosen, _) = active.partial_shuffle(rng, slots);
            chosen.iter().for_each(|&i| allocation[i] = true);
        }
        EpochOutcome {
            participation,
            demand,
            allocation,
            q,
        }
    }

    /// Conjugate update from one epoch's outcome; non-participants are untouched.
    pub fn update_beliefs(&mut self, outcome: &EpochOutcome) {
        for ((agent, &b), &a) in self
            .agents
            .iter_mut()
            .zip(&outcome.participation)
            .zip(&outcome.allocation)
        {
            debug_assert!(b || !a, "allocation without participation");
            if a {
                agent.alpha += 1.0;
            } else if b {
                agent.beta += 1.0;
            }
        }
        self.epoch += 1;
    }
}

/// Exact `s_i = Σ_k P(M_{-i} = k) g(k + 1)` with the Poisson-binomial law of
/// `M_{-i}` computed by the O(K²) convolution.
pub fn allocation_prob_exact(q: &[f64], tagged: usize, table: &PoissonTable) -> Result<f64> {
    if tagged >= q.len() {
        return Err(Error::invalid(
            "tagged",
            format!("index {tagged} out of range for K = {}", q.len()),
        ));
    }
    for &qj in q {
        check_unit("q", qj)?;
    }
    let mut dist = vec![0.0; q.len()];
    dist[0] = 1.0;
    let mut seen = 0;
    for (j, &qj) in q.iter().enumerate() {
        if j == tagged {
            continue;
        }
        seen += 1;
        for k in (1..=seen).rev() {
            dist[k] = dist[k] * (1.0 - qj) + dist[k - 1] * qj;
        }
        dist[0] *= 1.0 - qj;
    }
    dist.iter()
        .enumerate()
        .try_fold(0.0, |acc, (k, &pk)| Ok(acc + pk * eval_g(k as f64 + 1.0, table)?))
}

/// Generator for run `run` under master seed `seed`.
pub fn run_rng(seed: u64, run: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run + 1);
    rng
}

/// Generator for drawing initial populations under master seed `seed`.
pub fn init_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0);
    rng
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

/// `k` drivers with `α ~ U(alpha)`, `β ~ U(beta)`, `p ~ U(p_base)`, drawn per
/// driver in that order.
pub fn heterogeneous_population<R: Rng + ?Sized>(
    k: usize,
    alpha: (f64, f64),
    beta: (f64, f64),
    p_base: (f64, f64),
    rng: &mut R,
) -> Result<Vec<AgentState>> {
    for (name, (lo, hi)) in [("alpha_range", alpha), ("beta_range", beta), ("p_range", p_base)] {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::invalid(name, format!("need lo <= hi, got [{lo}, {hi}]")));
        }
    }
    (0..k)
        .map(|_| {
            let a = uniform(rng, alpha);
            let b = uniform(rng, beta);
            let p = uniform(rng, p_base);
            AgentState::new(a, b, p)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct MonteCarloConfig {
    pub agents: Vec<AgentState>,
    pub lambda: f64,
    pub u: f64,
    pub horizon: usize,
    pub runs: usize,
    pub seed: u64,
}

/// Per-epoch population means of one run, `t = 0..=horizon`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSeries {
    pub direct: Vec<f64>,
    pub pooled: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryBundle {
    pub runs: Vec<RunSeries>,
    pub mean_direct: Vec<f64>,
    pub mean_pooled: Vec<f64>,
}

pub fn run_monte_carlo(config: &MonteCarloConfig) -> Result<TrajectoryBundle> {
    if config.runs < 1 {
        return Err(Error::invalid("runs", "must be >= 1"));
    }
    check_unit("u", config.u)?;
    let demand = Demand::poisson(config.lambda)?;
    let initial = MicroState::new(config.agents.clone())?;

    let runs: Vec<RunSeries> = (0..config.runs as u64)
        .into_par_iter()
        .map(|m| {
            let mut rng = run_rng(config.seed, m);
            let mut state = initial.clone();
            let mut series = RunSeries {
                direct: Vec::with_capacity(config.horizon + 1),
                pooled: Vec::with_capacity(config.horizon + 1),
            };
            series.direct.push(state.direct_mean());
            series.pooled.push(state.pooled_mean());
            for _ in 0..config.horizon {
                let outcome = state.sample_epoch(config.u, &demand, &mut rng);
                state.update_beliefs(&outcome);
                series.direct.push(state.direct_mean());
                series.pooled.push(state.pooled_mean());
            }
            series
        })
        .collect();

    let average = |pick: fn(&RunSeries) -> &Vec<f64>| -> Vec<f64> {
        (0..=config.horizon)
            .map(|t| runs.iter().map(|r| pick(r)[t]).sum::<f64>() / runs.len() as f64)
            .collect()
    };
    let mean_direct = average(|r| &r.direct);
    let mean_pooled = average(|r| &r.pooled);
    Ok(TrajectoryBundle {
        runs,
        mean_direct,
        mean_pooled,
    })
}

impl TrajectoryBundle {
    fn per_run_rows(&self) -> impl Iterator<Item = (usize, usize, f64, f64)> + '_ {
        self.runs.iter().enumerate().flat_map(|(m, r)| {
            r.direct
                .iter()
                .zip(&r.pooled)
                .enumerate()
                .map(move |(t, (&d, &p))| (m, t, d, p))
        })
    }

    /// CSV with columns `run,t,direct_mean,pooled_mean`, one row per run and epoch.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["run", "t", "direct_mean", "pooled_mean"])?;
        for (m, t, d, p) in self.per_run_rows() {
            w.serialize((m, t, d, p))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Per-run records as a JSON array, matching the CSV columns.
    pub fn runs_json(&self) -> serde_json::Value {
        self.per_run_rows()
            .map(|(run, t, d, p)| serde_json::json!({ "run": run, "t": t, "direct_mean": d, "pooled_mean": p }))
            .collect()
    }

    /// Monte Carlo averages per epoch.
    pub fn summary_json(&self) -> serde_json::Value {
        let epochs: Vec<_> = self
            .mean_direct
            .iter()
            .zip(&self.mean_pooled)
            .enumerate()
            .map(|(t, (&d, &p))| serde_json::json!({ "t": t, "direct_mean": d, "pooled_mean": p }))
            .collect();
        serde_json::json!({ "runs": self.runs.len(), "epochs": epochs })
    }
}
