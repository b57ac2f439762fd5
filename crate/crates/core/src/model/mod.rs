//! Model ingredients and the coupling primitives built on them.

pub mod density;
pub mod expr;
pub mod overlap;
pub mod potential;
pub mod primitives;
pub mod rate;

use serde::{Deserialize, Serialize};

pub use density::{Density, DensityKind};
pub use overlap::{estimate_overlap_constants, overlap_a, OverlapConstants};
pub use potential::{CustomPotential, Potential};
pub use primitives::{capital_psi, psi, reflect, truncate};
pub use rate::{JumpRate, RateBounds, RateKind};

use crate::error::{ensure_finite, invalid, Result};
use crate::flow::{FlowIntegrator, FlowMethod};

/// A point `(x, v)` of position-velocity space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseState {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
}

impl PhaseState {
    pub fn new(x: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if x.is_empty() || x.len() != v.len() {
            return invalid(format!(
                "position and velocity need equal positive length, got {} and {}",
                x.len(),
                v.len()
            ));
        }
        ensure_finite("position", &x)?;
        ensure_finite("velocity", &v)?;
        Ok(Self { x, v })
    }

    pub fn origin(dim: usize) -> Self {
        Self { x: vec![0.0; dim], v: vec![0.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(&self.v).all(|c| c.is_finite())
    }
}

/// Everything that defines the generator: friction, potential, jump rate and
/// collision density on `R^d x R^d`.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub dim: usize,
    pub gamma: f64,
    pub potential: Potential,
    pub rate: JumpRate,
    pub density: Density,
    flow_method: Option<FlowMethod>,
}

impl ModelSpec {
    pub fn new(
        dim: usize,
        gamma: f64,
        potential: Potential,
        rate: JumpRate,
        density: Density,
    ) -> Result<Self> {
        if dim == 0 {
            return invalid("dimension must be at least 1");
        }
        if !(gamma.is_finite() && gamma > 0.0) {
            return invalid(format!("friction gamma must be positive, got {gamma}"));
        }
        if density.dim() != dim {
            return invalid(format!("density dimension {} differs from model dimension {dim}", density.dim()));
        }
        Ok(Self { dim, gamma, potential, rate, density, flow_method: None })
    }

    /// Overrides the automatic choice (closed form for quadratic `U`, RK4
    /// otherwise).
    pub fn with_flow_method(mut self, method: FlowMethod) -> Result<Self> {
        FlowIntegrator::new(self.gamma, self.potential.clone(), method)?;
        self.flow_method = Some(method);
        Ok(self)
    }

    pub fn integrator(&self) -> FlowIntegrator {
        match self.flow_method {
            Some(m) => FlowIntegrator::new(self.gamma, self.potential.clone(), m)
                .expect("flow method validated on construction"),
            None => FlowIntegrator::automatic(self.gamma, self.potential.clone()),
        }
    }

    pub fn check_state(&self, s: &PhaseState) -> Result<()> {
        if s.dim() != self.dim || s.v.len() != self.dim {
            return invalid(format!("state dimension {} differs from model dimension {}", s.dim(), self.dim));
        }
        if !s.is_finite() {
            return invalid("state has non-finite entries");
        }
        Ok(())
    }

    /// `J(x, v)`.
    #[inline]
    pub fn rate_at(&self, s: &PhaseState) -> f64 {
        self.rate.eval(&s.x, &s.v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phase_state_validation() {
        assert!(PhaseState::new(vec![1.0], vec![1.0, 2.0]).is_err());
        assert!(PhaseState::new(vec![], vec![]).is_err());
        assert!(PhaseState::new(vec![f64::NAN], vec![0.0]).is_err());
        assert_eq!(PhaseState::new(vec![1.0, 2.0], vec![0.0, 0.0]).unwrap().dim(), 2);
    }

    #[test]
    fn model_validation() {
        let pot = Potential::quadratic(1.0).unwrap();
        let rate = JumpRate::constant(2.0).unwrap();
        assert!(ModelSpec::new(2, 0.0, pot.clone(), rate.clone(), Density::gaussian(2).unwrap()).is_err());
        assert!(ModelSpec::new(2, 1.0, pot.clone(), rate.clone(), Density::gaussian(3).unwrap()).is_err());
        let m = ModelSpec::new(2, 1.0, pot, rate, Density::gaussian(2).unwrap()).unwrap();
        assert!(m.check_state(&PhaseState::origin(3)).is_err());
        assert!(m.check_state(&PhaseState::origin(2)).is_ok());
    }
}
