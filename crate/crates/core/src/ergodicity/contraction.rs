//! Empirical check of `E F~G(Y_t) <= F~G(Y_0) e^{-lambda* t}` along the
//! coupled process.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::distance::functional_fg;
use super::lyapunov::Lyapunov;
use super::params::CouplingParams;
use crate::coupling::{coupled_simulate, CoupledState, JumpCoupling};
use crate::error::{invalid, Result};
use crate::model::ModelSpec;
use crate::pdmp::check_grid;
use crate::rng::StreamId;
use crate::stats::{linear_fit, MeanAccumulator};

pub const MIN_TRAJECTORIES: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridViolation {
    pub t: f64,
    pub mean: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionReport {
    pub t_grid: Vec<f64>,
    pub mean: Vec<f64>,
    pub se: Vec<f64>,
    /// `F~G(init) e^{-lambda* t}`.
    pub envelope: Vec<f64>,
    pub fg_init: f64,
    pub lambda_star: f64,
    pub log_lambda_star: f64,
    pub n_traj: usize,
    pub seed: u64,
    pub passed: bool,
    /// Largest excess of `mean` over `envelope + 3 se`, if any.
    pub worst: Option<GridViolation>,
    /// Minus the slope of a least-squares fit of `ln mean` against `t`.
    pub fitted_rate: Option<f64>,
}

/// Runs `n_traj` coupled trajectories from `init` (trajectory `i` on stream
/// `(seed, i)`) and compares the mean of `F~G` on `t_grid` with the
/// exponential envelope.
pub fn contraction_experiment(
    model: &ModelSpec,
    params: &CouplingParams,
    lyap: &Lyapunov,
    init: &CoupledState,
    t_grid: &[f64],
    n_traj: usize,
    seed: u64,
) -> Result<ContractionReport> {
    if n_traj < MIN_TRAJECTORIES {
        return invalid(format!("contraction experiment needs at least {MIN_TRAJECTORIES} trajectories"));
    }
    if t_grid.is_empty() {
        return invalid("time grid is empty");
    }
    let t_end = t_grid.iter().copied().fold(0.0, f64::max);
    check_grid(t_grid, t_end)?;
    let coupling = JumpCoupling::from(params);
    let flow = model.integrator();
    let fg_init = functional_fg(init, params, lyap);

    let rows: Vec<Vec<f64>> = if t_end == 0.0 {
        vec![vec![fg_init; t_grid.len()]; n_traj]
    } else {
        (0..n_traj as u64)
            .into_par_iter()
            .map(|i| {
                let log = coupled_simulate(model, &coupling, init, t_end, StreamId::new(seed, i))?;
                let path = log.sample_path(&flow, t_grid)?;
                Ok(path.iter().map(|p| functional_fg(p, params, lyap)).collect())
            })
            .collect::<Result<_>>()?
    };

    let mut accs = vec![MeanAccumulator::default(); t_grid.len()];
    for row in &rows {
        for (acc, v) in accs.iter_mut().zip(row) {
            acc.push(*v);
        }
    }
    let mean: Vec<f64> = accs.iter().map(|a| a.mean()).collect();
    let se: Vec<f64> = accs.iter().map(|a| a.estimate().se).collect();
    let envelope: Vec<f64> = t_grid.iter().map(|t| fg_init * (-params.lambda_star * t).exp()).collect();

    let mut worst: Option<GridViolation> = None;
    for k in 0..t_grid.len() {
        let bound = envelope[k] + 3.0 * se[k];
        let excess = mean[k] - bound;
        if excess > 0.0 && worst.as_ref().is_none_or(|w| excess > w.mean - w.bound) {
            worst = Some(GridViolation { t: t_grid[k], mean: mean[k], bound });
        }
    }

    let (ts, logs): (Vec<f64>, Vec<f64>) =
        t_grid.iter().zip(&mean).filter(|(_, m)| **m > 0.0).map(|(t, m)| (*t, m.ln())).unzip();
    let fitted_rate = linear_fit(&ts, &logs).map(|(slope, _)| -slope);

    Ok(ContractionReport {
        t_grid: t_grid.to_vec(),
        mean,
        se,
        envelope,
        fg_init,
        lambda_star: params.lambda_star,
        log_lambda_star: params.log_lambda_star,
        n_traj,
        seed,
        passed: worst.is_none(),
        worst,
        fitted_rate,
    })
}

impl ContractionReport {
    pub fn fitted_rate_exceeds_lambda_star(&self) -> bool {
        self.fitted_rate.is_some_and(|r| r > 0.0 && r.ln() > self.log_lambda_star)
    }
}
