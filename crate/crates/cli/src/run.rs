use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use adherence::micro::{heterogeneous_population, init_rng};
use adherence::{
    control, convergence_time, frontier, frontier_transient, gamma_prime_at_p, meanfield, mf_trajectory, optimal_u,
    run_monte_carlo, scan_fixed_points, solve_x_star, throughput_monotonicity_certificate, uniqueness_certificate,
    AgentState, MicroState, ModelParams, MonteCarloConfig, OptimalStatus, PoissonTable,
};
use serde_json::{json, Value};

use crate::config::{Experiment, ExperimentConfig, Format};
use crate::error::CliError;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub experiment: Experiment,
    pub output_dir: PathBuf,
    /// File names relative to `output_dir`, manifest last.
    pub files: Vec<String>,
    pub infeasible: bool,
}

struct Sink {
    dir: PathBuf,
    format: Format,
    files: Vec<String>,
}

impl Sink {
    fn create(&mut self, name: String) -> Result<BufWriter<File>, CliError> {
        let path = self.dir.join(&name);
        let file = File::create(&path).map_err(|source| CliError::Io { path, source })?;
        self.files.push(name);
        Ok(BufWriter::new(file))
    }

    fn json(&mut self, name: &str, value: &Value) -> Result<(), CliError> {
        let path = self.dir.join(name);
        let mut w = self.create(name.to_string())?;
        serde_json::to_writer_pretty(&mut w, value)?;
        writeln!(w)
            .and_then(|_| w.flush())
            .map_err(|source| CliError::Io { path, source })
    }

    /// Writes `stem.csv` or `stem.json` depending on the selected format.
    fn table(
        &mut self,
        stem: &str,
        csv: impl FnOnce(&mut BufWriter<File>) -> csv::Result<()>,
        json: impl FnOnce() -> Value,
    ) -> Result<(), CliError> {
        let name = format!("{stem}.{}", self.format.extension());
        match self.format {
            Format::Csv => {
                let mut w = self.create(name)?;
                csv(&mut w)?;
                Ok(())
            }
            Format::Json => self.json(&name, &json()),
        }
    }
}

fn stem_for(prefix: &str, u: f64) -> String {
    format!("{prefix}_u{u}")
}

/// Runs `experiment` and writes its artifacts plus a manifest into
/// `config.output_path`, creating the directory if needed.
pub fn run_experiment(config: &ExperimentConfig, experiment: Experiment) -> Result<RunOutcome, CliError> {
    if let Some(declared) = config.experiment {
        if declared != experiment {
            return Err(CliError::InvalidField {
                field: "experiment".into(),
                reason: format!("is {} but {} was requested", declared.name(), experiment.name()),
            });
        }
    }
    config.validate()?;
    let dir = config.output_path.clone();
    std::fs::create_dir_all(&dir).map_err(|source| CliError::Io {
        path: dir.clone(),
        source,
    })?;
    let mut sink = Sink {
        dir: dir.clone(),
        format: config.format,
        files: Vec::new(),
    };

    let params = config.params()?;
    let table = params.poisson_table()?;
    let controls = config.controls(experiment);
    let mut infeasible = false;
    match experiment {
        Experiment::MicroValidate => micro_validate(config, &mut sink)?,
        Experiment::MfTrajectory => mf_runs(config, &params, &table, &controls, &mut sink)?,
        Experiment::ErrorDecay => error_decay(config, &params, &table, &controls, &mut sink)?,
        Experiment::EquilibriumScan => equilibrium_scan(config, &params, &table, &controls, &mut sink)?,
        Experiment::Frontier => frontier_runs(config, &params, &table, &controls, &mut sink)?,
        Experiment::OptimalU => {
            let r = optimal_u(&params, config.x_floor, config.delta_u, config.delta_x, &table)?;
            infeasible = r.status == OptimalStatus::Infeasible;
            sink.json("optimal_u.json", &r.report_json())?;
        }
    }

    let recorded = ExperimentConfig {
        experiment: Some(experiment),
        ..config.clone()
    };
    let manifest = json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "seed": config.seed,
        "config": recorded,
        "files": sink.files.clone(),
    });
    sink.json(MANIFEST, &manifest)?;
    Ok(RunOutcome {
        experiment,
        output_dir: dir,
        files: sink.files,
        infeasible,
    })
}

/// Config and experiment recorded in a manifest written by [`run_experiment`].
pub fn load_manifest(path: &Path) -> Result<(ExperimentConfig, Experiment), CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.into(),
        source,
    })?;
    let mut value: Value = serde_json::from_str(&text).map_err(|e| CliError::Parse(e.to_string()))?;
    let config = value
        .get_mut("config")
        .map(Value::take)
        .ok_or_else(|| CliError::InvalidField {
            field: "config".into(),
            reason: "missing from manifest".into(),
        })?;
    let config: ExperimentConfig = serde_json::from_value(config).map_err(|e| CliError::Parse(e.to_string()))?;
    let experiment = config.experiment.ok_or_else(|| CliError::InvalidField {
        field: "experiment".into(),
        reason: "missing from manifest config".into(),
    })?;
    Ok((config, experiment))
}

fn micro_validate(config: &ExperimentConfig, sink: &mut Sink) -> Result<(), CliError> {
    let k = config.k_agents;
    let agents = match (config.alpha_range, config.beta_range) {
        (Some([a0, a1]), Some([b0, b1])) => {
            let [p0, p1] = config.p_range.unwrap_or([config.p_base, config.p_base]);
            heterogeneous_population(k, (a0, a1), (b0, b1), (p0, p1), &mut init_rng(config.seed))?
        }
        _ => {
            if config.x0 <= 0.0 || config.x0 >= 1.0 {
                return Err(CliError::InvalidField {
                    field: "x0".into(),
                    reason: format!("must lie in (0, 1) for a homogeneous population, got {}", config.x0),
                });
            }
            let agent = AgentState::new(config.x0 * config.n0, (1.0 - config.x0) * config.n0, config.p_base)?;
            vec![agent; k]
        }
    };
    let population = MicroState::new(agents.clone())?;
    let bundle = run_monte_carlo(&MonteCarloConfig {
        agents,
        lambda: config.lambda,
        u: config.u,
        horizon: config.horizon,
        runs: config.runs,
        seed: config.seed,
    })?;

    // mean-field started from the pooled population state
    let params = ModelParams::new(k, population.mean_baseline(), config.lambda, config.u)?;
    let table = params.poisson_table()?;
    let mf = mf_trajectory(
        &params,
        &table,
        population.pooled_mean(),
        population.mean_pseudo_count(),
        config.horizon,
    )?;
    let rows: Vec<(usize, f64, f64, f64)> = (0..=config.horizon)
        .map(|t| (t, bundle.mean_direct[t], bundle.mean_pooled[t], mf[t].state.x_bar))
        .collect();
    let gap = |pick: fn(&(usize, f64, f64, f64)) -> f64| rows.iter().map(|r| (pick(r) - r.3).abs()).fold(0.0, f64::max);

    sink.table("micro_runs", |w| bundle.write_csv(w), || bundle.runs_json())?;
    sink.table(
        "micro_summary",
        |w| {
            let mut c = csv::Writer::from_writer(w);
            c.write_record(["t", "direct_mean", "pooled_mean", "mf_x_bar"])?;
            for r in &rows {
                c.serialize(r)?;
            }
            c.flush()?;
            Ok(())
        },
        || {
            rows.iter()
                .map(|&(t, d, p, m)| json!({ "t": t, "direct_mean": d, "pooled_mean": p, "mf_x_bar": m }))
                .collect()
        },
    )?;
    sink.json(
        "micro_report.json",
        &json!({
            "runs": config.runs,
            "horizon": config.horizon,
            "mean_baseline": population.mean_baseline(),
            "initial_pooled_mean": population.pooled_mean(),
            "initial_direct_mean": population.direct_mean(),
            "initial_pseudo_count": population.mean_pseudo_count(),
            "max_gap_direct": gap(|r| r.1),
            "max_gap_pooled": gap(|r| r.2),
        }),
    )
}

fn x_star_if_unique(u: f64, params: &ModelParams, table: &PoissonTable, delta_x: f64) -> Result<Option<f64>, CliError> {
    if u < params.p_base {
        return Ok(None);
    }
    Ok(Some(solve_x_star(u, params, table, delta_x)?.x_star))
}

fn mf_runs(
    config: &ExperimentConfig,
    params: &ModelParams,
    table: &PoissonTable,
    controls: &[f64],
    sink: &mut Sink,
) -> Result<(), CliError> {
    let mut summary = Vec::new();
    for &u in controls {
        let p = params.with_u(u);
        let traj = mf_trajectory(&p, table, config.x0, config.n0, config.horizon)?;
        sink.table(
            &stem_for("trajectory", u),
            |w| meanfield::write_trajectory_csv(&traj, w),
            || meanfield::trajectory_json(&traj),
        )?;
        let x_star = x_star_if_unique(u, &p, table, config.delta_x)?;
        let t_eps = match x_star {
            Some(x) => convergence_time(&traj, x, config.epsilon)?,
            None => None,
        };
        summary.push(json!({
            "u": u,
            "x_star": x_star,
            "x_final": traj.last().map(|pt| pt.state.x_bar),
            "convergence_time": t_eps,
            "epsilon": config.epsilon,
        }));
    }
    sink.json("mf_summary.json", &Value::Array(summary))
}

/// Least-squares slope of `ln|e|` against `ln t`, skipping exact zeros.
pub fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(t, e)| *t > 0.0 && *e != 0.0)
        .map(|&(t, e)| (t.ln(), e.abs().ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn error_decay(
    config: &ExperimentConfig,
    params: &ModelParams,
    table: &PoissonTable,
    controls: &[f64],
    sink: &mut Sink,
) -> Result<(), CliError> {
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for &u in controls {
        let p = params.with_u(u);
        let x_star = solve_x_star(u, &p, table, config.delta_x)?.x_star;
        let traj = mf_trajectory(&p, table, config.x0, config.n0, config.horizon)?;
        let errors: Vec<(f64, f64)> = traj
            .iter()
            .map(|pt| (pt.state.epoch as f64, pt.state.x_bar - x_star))
            .collect();
        let fit_from = 100.min(config.horizon / 2);
        summary.push(json!({
            "u": u,
            "x_star": x_star,
            "fit_window": [fit_from, config.horizon],
            "loglog_slope": loglog_slope(&errors[fit_from..]),
            "convergence_time": convergence_time(&traj, x_star, config.epsilon)?,
            "epsilon": config.epsilon,
        }));
        rows.extend(
            traj.iter()
                .zip(&errors)
                .map(|(pt, &(_, e))| (u, pt.state.epoch, pt.state.x_bar, x_star, e)),
        );
    }
    sink.table(
        "error_decay",
        |w| {
            let mut c = csv::Writer::from_writer(w);
            c.write_record(["u", "t", "x_bar", "x_star", "error"])?;
            for r in &rows {
                c.serialize(r)?;
            }
            c.flush()?;
            Ok(())
        },
        || {
            rows.iter()
                .map(|&(u, t, x, xs, e)| json!({ "u": u, "t": t, "x_bar": x, "x_star": xs, "error": e }))
                .collect()
        },
    )?;
    sink.json("error_decay_summary.json", &Value::Array(summary))
}

fn equilibrium_scan(
    config: &ExperimentConfig,
    params: &ModelParams,
    table: &PoissonTable,
    controls: &[f64],
    sink: &mut Sink,
) -> Result<(), CliError> {
    let mut report = Vec::new();
    for &u in controls {
        let scan = scan_fixed_points(u, params, table, config.grid_size)?;
        sink.table(
            &stem_for("scan", u),
            |w| scan.write_csv(w),
            || {
                scan.grid
                    .iter()
                    .zip(&scan.phi)
                    .map(|(x, f)| json!({ "x_grid": x, "phi": f }))
                    .collect()
            },
        )?;
        report.push(json!({
            "u": u,
            "roots": scan.roots,
            "near_roots": scan.near_roots,
            "certificate": uniqueness_certificate(u, params, table)?,
            "x_star": x_star_if_unique(u, params, table, config.delta_x)?,
        }));
    }
    sink.json("equilibria.json", &Value::Array(report))
}

fn frontier_runs(
    config: &ExperimentConfig,
    params: &ModelParams,
    table: &PoissonTable,
    controls: &[f64],
    sink: &mut Sink,
) -> Result<(), CliError> {
    let points = frontier(params, controls, table)?;
    sink.table(
        "frontier",
        |w| control::write_frontier_csv(&points, w),
        || json!(points),
    )?;
    if let Some(window) = config.transient_window {
        let transient = frontier_transient(params, controls, table, config.x0, config.n0, config.horizon, window)?;
        sink.table(
            "frontier_transient",
            |w| control::write_frontier_csv(&transient, w),
            || json!(transient),
        )?;
    }
    sink.json(
        "frontier_summary.json",
        &json!({
            "gamma_prime_at_p": gamma_prime_at_p(params, table)?,
            "monotonicity_certificate": throughput_monotonicity_certificate(params, table, config.grid_size)?,
        }),
    )
}
