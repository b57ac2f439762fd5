//! TOML run configuration. Unknown keys are rejected everywhere: a typo in
//! a rate bound would silently break the thinning majorant.

use std::path::Path;

use collide_core::ergodicity::{B2Config, DriftConfig, PipelineConfig};
use collide_core::model::{Density, JumpRate, ModelSpec, PhaseState, Potential};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub model: ModelConfig,
    #[serde(default)]
    pub experiment: ExperimentConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub d: usize,
    pub gamma: f64,
    pub potential: PotentialConfig,
    pub rate: RateConfig,
    pub density: DensityConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialConfig {
    /// `U(x) = theta |x|^2`
    Quadratic { theta: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RateConfig {
    Constant {
        lambda: f64,
    },
    SinusoidalBounded {
        lambda1: f64,
        lambda2: f64,
    },
    /// Expression in `nx = |x|`, `nv = |v|`, `sin`, `cos` and constants.
    Expression {
        expr: String,
        lambda1: f64,
        lambda2: f64,
        #[serde(rename = "lambdaJ")]
        lambda_j: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DensityConfig {
    Gaussian,
    /// `phi ~ (1 + |u|)^{-(d + param)}`
    HeavyTail { param: f64 },
    /// `phi ~ exp(-|u|^param)`
    StretchedExp { param: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateConfig {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub t_end: f64,
    pub n_traj: usize,
    /// Grid spacing used when `t_grid` is absent: `0, dt, ..., t_end`.
    pub dt: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_grid: Option<Vec<f64>>,
    pub n_mc: usize,
    /// Random points or pairs probed by `verify`.
    pub n_probes: usize,
    pub beta_exp: f64,
    /// Nodes per axis of the closed-form drift grid.
    pub grid_nodes: usize,
    pub overlap_samples: usize,
    pub flow_tol: f64,
    pub flow_segments: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub init: Option<StateConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub partner: Option<StateConfig>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            t_end: 10.0,
            n_traj: 1000,
            dt: 0.5,
            t_grid: None,
            n_mc: 100_000,
            n_probes: 10,
            beta_exp: 2.0,
            grid_nodes: 41,
            overlap_samples: 100_000,
            flow_tol: 1e-8,
            flow_segments: 1000,
            init: None,
            partner: None,
        }
    }
}

fn config_error(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| config_error(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| config_error(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| config_error(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let m = &self.model;
        if m.d == 0 {
            return Err(config_error("model.d must be at least 1"));
        }
        if !(m.gamma > 0.0 && m.gamma.is_finite()) {
            return Err(config_error(format!("model.gamma must be positive, got {}", m.gamma)));
        }
        match &m.rate {
            RateConfig::SinusoidalBounded { lambda1, lambda2 } | RateConfig::Expression { lambda1, lambda2, .. }
                if lambda1 > lambda2 =>
            {
                return Err(config_error(format!("rate.lambda1 = {lambda1} exceeds rate.lambda2 = {lambda2}")));
            }
            _ => {}
        }
        match m.density {
            DensityConfig::HeavyTail { param } | DensityConfig::StretchedExp { param } if !(param > 0.0) => {
                return Err(config_error(format!("density.param must be positive, got {param}")));
            }
            _ => {}
        }
        let e = &self.experiment;
        if !(e.t_end > 0.0 && e.t_end.is_finite()) {
            return Err(config_error(format!("experiment.t_end must be positive, got {}", e.t_end)));
        }
        if e.n_traj == 0 {
            return Err(config_error("experiment.n_traj must be at least 1"));
        }
        if !(e.dt > 0.0) {
            return Err(config_error("experiment.dt must be positive"));
        }
        if let Some(grid) = &e.t_grid {
            if grid.is_empty() {
                return Err(config_error("experiment.t_grid is empty"));
            }
            if let Some(t) = grid.iter().find(|t| !(**t >= 0.0 && **t <= e.t_end)) {
                return Err(config_error(format!("experiment.t_grid point {t} lies outside [0, t_end = {}]", e.t_end)));
            }
            if grid.windows(2).any(|w| w[1] < w[0]) {
                return Err(config_error("experiment.t_grid must be non-decreasing"));
            }
        }
        for (name, s) in [("init", &e.init), ("partner", &e.partner)] {
            if let Some(s) = s {
                if s.x.len() != m.d || s.v.len() != m.d {
                    return Err(config_error(format!("experiment.{name} must have {} coordinates in x and v", m.d)));
                }
            }
        }
        if !(e.beta_exp > 0.0 && e.beta_exp <= 2.0) {
            return Err(config_error(format!("experiment.beta_exp must lie in (0, 2], got {}", e.beta_exp)));
        }
        Ok(())
    }

    pub fn model(&self) -> Result<ModelSpec, CliError> {
        let m = &self.model;
        let potential = match m.potential {
            PotentialConfig::Quadratic { theta } => Potential::quadratic(theta)?,
        };
        let rate = match &m.rate {
            RateConfig::Constant { lambda } => JumpRate::constant(*lambda)?,
            RateConfig::SinusoidalBounded { lambda1, lambda2 } => JumpRate::sinusoidal(*lambda1, *lambda2)?,
            RateConfig::Expression { expr, lambda1, lambda2, lambda_j } => {
                JumpRate::expression(expr, *lambda1, *lambda2, *lambda_j, m.d)?
            }
        };
        let density = match m.density {
            DensityConfig::Gaussian => Density::gaussian(m.d)?,
            DensityConfig::HeavyTail { param } => Density::heavy_tail(m.d, param)?,
            DensityConfig::StretchedExp { param } => Density::stretched_exp(m.d, param)?,
        };
        Ok(ModelSpec::new(m.d, m.gamma, potential, rate, density)?)
    }

    /// Observation times: `t_grid` if given, else `0, dt, ..., t_end`.
    pub fn t_grid(&self) -> Vec<f64> {
        let e = &self.experiment;
        if let Some(g) = &e.t_grid {
            return g.clone();
        }
        let n = (e.t_end / e.dt + 1e-9).floor() as usize;
        let mut g: Vec<f64> = (0..=n).map(|k| k as f64 * e.dt).collect();
        if *g.last().unwrap() < e.t_end - 1e-12 {
            g.push(e.t_end);
        }
        g
    }

    /// Initial state; defaults to `x = e1, v = 0`.
    pub fn init(&self) -> Result<PhaseState, CliError> {
        state_or(&self.experiment.init, self.model.d, |d| {
            let mut s = PhaseState::origin(d);
            s.x[0] = 1.0;
            s
        })
    }

    /// Second component of coupled runs; defaults to the origin.
    pub fn partner(&self) -> Result<PhaseState, CliError> {
        state_or(&self.experiment.partner, self.model.d, PhaseState::origin)
    }

    pub fn pipeline(&self) -> PipelineConfig {
        let e = &self.experiment;
        PipelineConfig {
            beta_exp: e.beta_exp,
            drift: DriftConfig { grid_nodes: e.grid_nodes, n_mc: e.n_mc, ..DriftConfig::default() },
            overlap_samples: e.overlap_samples,
            overlap_grid: PipelineConfig::default().overlap_grid,
            b2: B2Config { n_mc: e.n_mc, ..B2Config::default() },
            seed: self.seed,
        }
    }
}

fn state_or(s: &Option<StateConfig>, d: usize, default: impl Fn(usize) -> PhaseState) -> Result<PhaseState, CliError> {
    match s {
        Some(s) => Ok(PhaseState::new(s.x.clone(), s.v.clone())?),
        None => Ok(default(d)),
    }
}
