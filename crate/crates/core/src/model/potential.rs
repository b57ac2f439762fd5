use std::fmt;
use std::sync::Arc;

use crate::error::{invalid, Result};
use crate::linalg::norm_sq;

/// A user supplied potential with globally Lipschitz gradient.
pub trait CustomPotential: Send + Sync {
    fn value(&self, x: &[f64]) -> f64;

    fn gradient(&self, x: &[f64], out: &mut [f64]);

    /// Smallest `K` with `|b (x - x') + grad U(x') - grad U(x)| <= K |x - x'|`
    /// for all `x, x'`, when the implementor knows it.
    fn k_beta(&self, _beta: f64) -> Option<f64> {
        None
    }

    fn name(&self) -> &str {
        "custom"
    }
}

#[derive(Clone)]
pub enum Potential {
    /// `U(x) = theta |x|^2`
    Quadratic { theta: f64 },
    Custom(Arc<dyn CustomPotential>),
}

impl fmt::Debug for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Quadratic { theta } => f.debug_struct("Quadratic").field("theta", theta).finish(),
            Self::Custom(c) => f.debug_tuple("Custom").field(&c.name()).finish(),
        }
    }
}

impl Potential {
    /// `theta = 0` is accepted so the free damped flow can be expressed, but
    /// the parameter pipeline requires `theta > 0`.
    pub fn quadratic(theta: f64) -> Result<Self> {
        if !(theta.is_finite() && theta >= 0.0) {
            return invalid(format!("quadratic potential needs theta >= 0, got {theta}"));
        }
        Ok(Self::Quadratic { theta })
    }

    pub fn custom(p: impl CustomPotential + 'static) -> Self {
        Self::Custom(Arc::new(p))
    }

    pub fn theta(&self) -> Option<f64> {
        match self {
            Self::Quadratic { theta } => Some(*theta),
            Self::Custom(_) => None,
        }
    }

    #[inline]
    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            Self::Quadratic { theta } => theta * norm_sq(x),
            Self::Custom(c) => c.value(x),
        }
    }

    #[inline]
    pub fn gradient(&self, x: &[f64], out: &mut [f64]) {
        match self {
            Self::Quadratic { theta } => {
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = 2.0 * theta * xi;
                }
            }
            Self::Custom(c) => c.gradient(x, out),
        }
    }

    pub fn gradient_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        self.gradient(x, &mut g);
        g
    }

    /// `K_{beta,U}`; for `U = theta |x|^2` this is `|2 theta - beta|`.
    pub fn k_beta(&self, beta: f64) -> Option<f64> {
        match self {
            Self::Quadratic { theta } => Some((2.0 * theta - beta).abs()),
            Self::Custom(c) => c.k_beta(beta),
        }
    }
}
