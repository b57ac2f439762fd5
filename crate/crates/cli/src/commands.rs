use std::io::Write;

use collide_core::coupling::{coupled_simulate, CoupledState, JumpCoupling};
use collide_core::ergodicity::contraction::{contraction_experiment, ContractionReport};
use collide_core::ergodicity::distance::{functional_fg, semi_metric_phi};
use collide_core::ergodicity::{derive_params, CouplingParams, Lyapunov, PipelineReport};
use collide_core::linalg::norm;
use collide_core::model::ModelSpec;
use collide_core::pdmp::simulate_ensemble;
use collide_core::rng::StreamId;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::{num, Sink};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    /// Time series on the observation grid.
    Csv,
    /// One JSON object per jump event.
    Jsonl,
}

/// Seed of the parameter pipeline, kept apart from the trajectory streams
/// `(seed, i)`.
pub fn pipeline_seed(seed: u64) -> u64 {
    seed ^ 0x9e37_79b9_7f4a_7c15
}

pub fn params_for(cfg: &RunConfig, model: &ModelSpec) -> Result<(Lyapunov, PipelineReport), CliError> {
    let mut p = cfg.pipeline();
    p.seed = pipeline_seed(cfg.seed);
    Ok(derive_params(model, &p)?)
}

pub fn cmd_params(cfg: &RunConfig, sink: &Sink) -> Result<(), CliError> {
    let model = cfg.model()?;
    let (_, report) = params_for(cfg, &model)?;
    sink.json("params.json", &report)
}

pub fn cmd_simulate(cfg: &RunConfig, sink: &Sink, format: Format) -> Result<(), CliError> {
    let model = cfg.model()?;
    let init = cfg.init()?;
    let grid = cfg.t_grid();
    let e = &cfg.experiment;
    let logs = simulate_ensemble(&model, &init, e.t_end, e.n_traj, cfg.seed)?;
    let flow = model.integrator();
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(sink.open("simulate.csv")?);
            w.write_record(["traj_id", "t", "x_norm", "v_norm"])?;
            for (i, log) in logs.iter().enumerate() {
                for (t, s) in grid.iter().zip(log.sample_path(&flow, &grid)?) {
                    w.write_record([i.to_string(), num(*t), num(norm(&s.x)), num(norm(&s.v))])?;
                }
            }
            w.flush()?;
        }
        Format::Jsonl => {
            let mut w = sink.open("simulate.jsonl")?;
            for (i, log) in logs.iter().enumerate() {
                for ev in &log.events {
                    let line = json!({"traj_id": i, "t": ev.t, "x": ev.post.x, "v_pre": ev.pre.v, "v_post": ev.post.v});
                    writeln!(w, "{line}")?;
                }
            }
            w.flush()?;
        }
    }
    Ok(())
}

pub fn coupled_init(cfg: &RunConfig) -> Result<CoupledState, CliError> {
    Ok(CoupledState::new(cfg.init()?, cfg.partner()?)?)
}

pub fn cmd_couple(cfg: &RunConfig, sink: &Sink, format: Format) -> Result<(), CliError> {
    let model = cfg.model()?;
    let (lyap, report) = params_for(cfg, &model)?;
    let params = &report.params;
    let coupling = JumpCoupling::from(params);
    let init = coupled_init(cfg)?;
    let grid = cfg.t_grid();
    let e = &cfg.experiment;
    let logs = (0..e.n_traj as u64)
        .into_par_iter()
        .map(|i| coupled_simulate(&model, &coupling, &init, e.t_end, StreamId::new(cfg.seed, i)))
        .collect::<collide_core::Result<Vec<_>>>()?;
    let flow = model.integrator();
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(sink.open("couple.csv")?);
            w.write_record(["traj_id", "t", "x_norm", "v_norm", "r", "FG", "Phi"])?;
            for (i, log) in logs.iter().enumerate() {
                for (t, pair) in grid.iter().zip(log.sample_path(&flow, &grid)?) {
                    w.write_record([
                        i.to_string(),
                        num(*t),
                        num(norm(&pair.z())),
                        num(norm(&pair.w())),
                        num(pair.r(params.alpha, params.alpha0)),
                        num(functional_fg(&pair, params, &lyap)),
                        num(semi_metric_phi(&pair, &lyap)),
                    ])?;
                }
            }
            w.flush()?;
        }
        Format::Jsonl => {
            let mut w = sink.open("couple.jsonl")?;
            for (i, log) in logs.iter().enumerate() {
                for ev in &log.events {
                    let line = json!({
                        "traj_id": i,
                        "t": ev.t,
                        "branch": ev.branch.as_str(),
                        "x": ev.post.first.x,
                        "v": ev.post.first.v,
                        "x2": ev.post.second.x,
                        "v2": ev.post.second.v,
                    });
                    writeln!(w, "{line}")?;
                }
            }
            w.flush()?;
        }
    }
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct ContractSummary<'a> {
    pub passed: bool,
    pub fitted_rate_exceeds_lambda_star: bool,
    pub report: &'a ContractionReport,
    pub params: &'a CouplingParams,
}

pub fn run_contraction(cfg: &RunConfig) -> Result<(ContractionReport, CouplingParams), CliError> {
    let model = cfg.model()?;
    let (lyap, report) = params_for(cfg, &model)?;
    let init = coupled_init(cfg)?;
    let e = &cfg.experiment;
    let r = contraction_experiment(&model, &report.params, &lyap, &init, &cfg.t_grid(), e.n_traj, cfg.seed)?;
    Ok((r, report.params))
}

pub fn cmd_contract(cfg: &RunConfig, sink: &Sink) -> Result<(), CliError> {
    let (r, params) = run_contraction(cfg)?;
    // on standard output the JSON summary alone carries the table
    if sink.dir.is_some() {
        let mut w = csv::Writer::from_writer(sink.open("contract.csv")?);
        w.write_record(["t", "mean", "stderr", "envelope"])?;
        for k in 0..r.t_grid.len() {
            w.write_record([num(r.t_grid[k]), num(r.mean[k]), num(r.se[k]), num(r.envelope[k])])?;
        }
        w.flush()?;
    }
    let summary = ContractSummary {
        passed: r.passed,
        fitted_rate_exceeds_lambda_star: r.fitted_rate_exceeds_lambda_star(),
        report: &r,
        params: &params,
    };
    sink.json("contract.json", &summary)?;
    if r.passed {
        Ok(())
    } else {
        let worst = r.worst.as_ref().map(|v| format!("t = {}: mean {} > bound {}", v.t, v.mean, v.bound));
        Err(CliError::Failed(format!("contraction envelope violated at {}", worst.unwrap_or_default())))
    }
}
