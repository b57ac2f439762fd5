//! End-to-end derivation of [`CouplingParams`] for a model.

use serde::{Deserialize, Serialize};

use super::b2::{verify_b2, B2Config, B2Report};
use super::lyapunov::{drift_closed_form, drift_mc, DriftConfig, DriftReport, Lyapunov};
use super::params::{build_params, geometry, solve_beta, BetaSolution, CouplingParams, Geometry};
use crate::error::{Error, Result};
use crate::model::overlap::default_radius_grid;
use crate::model::{estimate_overlap_constants, ModelSpec, OverlapConstants};
use crate::rng::StreamId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Exponent of `W = W0^{beta_exp/2}`.
    pub beta_exp: f64,
    pub drift: DriftConfig,
    pub overlap_samples: usize,
    pub overlap_grid: usize,
    pub b2: B2Config,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            beta_exp: 2.0,
            drift: DriftConfig::default(),
            overlap_samples: 100_000,
            overlap_grid: 24,
            b2: B2Config::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub beta: BetaSolution,
    pub geometry: Geometry,
    pub drift: DriftReport,
    pub overlap: OverlapConstants,
    pub b2: B2Report,
    pub params: CouplingParams,
    pub warnings: Vec<String>,
}

/// Output of [`certify_geometry`].
#[derive(Debug, Clone)]
pub struct Certified {
    pub lyap: Lyapunov,
    pub beta: BetaSolution,
    pub drift: DriftReport,
    pub geometry: Geometry,
}

/// `beta`, the drift certificate (closed form when `beta_exp = 2` and the
/// second moment exists, Monte Carlo on stream `(seed, 0)` otherwise) and
/// the resulting `alpha`, `alpha0`, `R*`, `R0`, `kappa`.
pub fn certify_geometry(model: &ModelSpec, cfg: &PipelineConfig) -> Result<Certified> {
    let lyap = Lyapunov::new(model, cfg.beta_exp)?;
    let beta = solve_beta(model.gamma, &model.potential)?;
    let closed = cfg.beta_exp == 2.0 && model.potential.theta().is_some() && model.density.moment(2.0).is_some();
    let drift = if closed {
        drift_closed_form(model, &lyap, &cfg.drift)?
    } else {
        drift_mc(model, &lyap, &cfg.drift, &mut StreamId::new(cfg.seed, 0).stream())?
    };
    if !drift.is_valid() {
        return Err(Error::Inconclusive(format!("drift certificate not established: {}", drift.tail)));
    }
    let geometry = geometry(model, &beta, &drift)?;
    Ok(Certified { lyap, beta, drift, geometry })
}

/// [`certify_geometry`], overlap constants on `(0, kappa]` (stream
/// `(seed, 1)`), the `c**` check (stream `(seed, 2)`), then the parameter
/// recipe.
pub fn derive_params(model: &ModelSpec, cfg: &PipelineConfig) -> Result<(Lyapunov, PipelineReport)> {
    let Certified { lyap, beta, drift, geometry: geo } = certify_geometry(model, cfg)?;
    let grid = default_radius_grid(geo.kappa, cfg.overlap_grid, 1e-3);
    let overlap = estimate_overlap_constants(
        &model.density,
        geo.alpha,
        geo.kappa,
        &grid,
        cfg.overlap_samples,
        &mut StreamId::new(cfg.seed, 1).stream(),
    )?;
    let b2 = verify_b2(model, &lyap, geo.alpha, geo.kappa, &cfg.b2, &mut StreamId::new(cfg.seed, 2).stream())?;
    if !b2.passed {
        return Err(Error::Inconclusive(format!("c** check failed: {}", b2.reason)));
    }
    let params = build_params(model, &lyap, &geo, &drift, &overlap, b2.c_double_star)?;
    let mut warnings = drift.warnings.clone();
    if params.lambda_star == 0.0 {
        warnings.push(format!("lambda* underflows; log lambda* = {}", params.log_lambda_star));
    }
    Ok((lyap, PipelineReport { beta, geometry: geo, drift, overlap, b2, params, warnings }))
}
