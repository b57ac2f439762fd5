//! Radial collision densities.
//!
//! Each kind is stored as its exact log-normalizer plus a radial profile, with
//! an exact sampler for the radius and a uniform direction.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::beta::{beta_reg, inv_beta_reg, ln_beta};
use statrs::function::gamma::{gamma_lr, gamma_ur, ln_gamma};

use crate::error::{invalid, Result};
use crate::linalg::norm;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DensityKind {
    /// `c (1 + |u|)^(-d - beta1)`
    HeavyTail { beta1: f64 },
    /// `c exp(-|u|^beta2)`
    StretchedExp { beta2: f64 },
    StandardGaussian,
}

#[derive(Debug, Clone)]
pub struct Density {
    kind: DensityKind,
    dim: usize,
    log_normalizer: f64,
    moment_order: f64,
    m_beta: f64,
    radius_gamma: Option<Gamma<f64>>,
}

/// `ln |S^{d-1}|`, the log surface area of the unit sphere in `R^d`.
fn ln_sphere_area(dim: usize) -> f64 {
    let d = dim as f64;
    (2.0_f64).ln() + 0.5 * d * PI.ln() - ln_gamma(0.5 * d)
}

impl Density {
    pub fn gaussian(dim: usize) -> Result<Self> {
        Self::build(DensityKind::StandardGaussian, dim)
    }

    pub fn heavy_tail(dim: usize, beta1: f64) -> Result<Self> {
        Self::build(DensityKind::HeavyTail { beta1 }, dim)
    }

    pub fn stretched_exp(dim: usize, beta2: f64) -> Result<Self> {
        Self::build(DensityKind::StretchedExp { beta2 }, dim)
    }

    pub fn new(kind: DensityKind, dim: usize) -> Result<Self> {
        Self::build(kind, dim)
    }

    fn build(kind: DensityKind, dim: usize) -> Result<Self> {
        if dim == 0 {
            return invalid("density dimension must be at least 1");
        }
        let d = dim as f64;
        let (log_normalizer, radius_gamma, default_order) = match kind {
            DensityKind::StandardGaussian => (-0.5 * d * (2.0 * PI).ln(), None, 2.0),
            DensityKind::HeavyTail { beta1 } => {
                if !(beta1.is_finite() && beta1 > 0.0) {
                    return invalid(format!("heavy-tail exponent must be positive, got {beta1}"));
                }
                // Highest even-ish order with a finite moment, capped at 2.
                let order = if beta1 > 2.0 { 2.0 } else { beta1 / 2.0 };
                (-(ln_sphere_area(dim) + ln_beta(d, beta1)), None, order)
            }
            DensityKind::StretchedExp { beta2 } => {
                if !(beta2.is_finite() && beta2 > 0.0) {
                    return invalid(format!("stretched-exponential power must be positive, got {beta2}"));
                }
                let gamma = Gamma::new(d / beta2, 1.0)
                    .map_err(|e| crate::Error::InvalidArgument(e.to_string()))?;
                (
                    beta2.ln() - ln_sphere_area(dim) - ln_gamma(d / beta2),
                    Some(gamma),
                    2.0,
                )
            }
        };
        let mut density = Self {
            kind,
            dim,
            log_normalizer,
            moment_order: default_order,
            m_beta: 0.0,
            radius_gamma,
        };
        density.m_beta = density
            .moment(default_order)
            .expect("default moment order is admissible");
        Ok(density)
    }

    /// Re-targets the tracked moment `m_beta = E|u|^beta`, `beta in (0, 2]`.
    pub fn with_moment_order(mut self, beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta <= 2.0) {
            return invalid(format!("moment order must lie in (0, 2], got {beta}"));
        }
        match self.moment(beta) {
            Some(m) => {
                self.moment_order = beta;
                self.m_beta = m;
                Ok(self)
            }
            None => invalid(format!("moment of order {beta} is infinite for {:?}", self.kind)),
        }
    }

    pub fn kind(&self) -> DensityKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn normalizer(&self) -> f64 {
        self.log_normalizer.exp()
    }

    pub fn moment_order(&self) -> f64 {
        self.moment_order
    }

    pub fn m_beta(&self) -> f64 {
        self.m_beta
    }

    /// `E|u|^beta` in closed form, `None` when it diverges.
    pub fn moment(&self, beta: f64) -> Option<f64> {
        if beta < 0.0 {
            return None;
        }
        let d = self.dim as f64;
        match self.kind {
            DensityKind::StandardGaussian => Some(
                (0.5 * beta * 2.0_f64.ln() + ln_gamma(0.5 * (d + beta)) - ln_gamma(0.5 * d)).exp(),
            ),
            DensityKind::HeavyTail { beta1 } => {
                (beta < beta1).then(|| (ln_beta(d + beta, beta1 - beta) - ln_beta(d, beta1)).exp())
            }
            DensityKind::StretchedExp { beta2 } => {
                Some((ln_gamma((d + beta) / beta2) - ln_gamma(d / beta2)).exp())
            }
        }
    }

    /// Log of the radial profile at radius `r >= 0`.
    #[inline]
    pub fn log_pdf_radial(&self, r: f64) -> f64 {
        let d = self.dim as f64;
        self.log_normalizer
            + match self.kind {
                DensityKind::StandardGaussian => -0.5 * r * r,
                DensityKind::HeavyTail { beta1 } => -(d + beta1) * r.ln_1p(),
                DensityKind::StretchedExp { beta2 } => -r.powf(beta2),
            }
    }

    #[inline]
    pub fn pdf_radial(&self, r: f64) -> f64 {
        self.log_pdf_radial(r).exp()
    }

    #[inline]
    pub fn pdf(&self, u: &[f64]) -> f64 {
        self.pdf_radial(norm(u))
    }

    #[inline]
    pub fn log_pdf(&self, u: &[f64]) -> f64 {
        self.log_pdf_radial(norm(u))
    }

    /// `min(1, phi(u + xi) / phi(u))`, the probability that a draw `u ~ phi`
    /// falls in the overlap part `psi_xi` of the split `phi = psi_xi + Psi_xi`.
    #[inline]
    pub fn overlap_ratio(&self, u: &[f64], xi: &[f64]) -> f64 {
        let shifted = u
            .iter()
            .zip(xi)
            .map(|(a, b)| (a + b) * (a + b))
            .sum::<f64>()
            .sqrt();
        let r = self.log_pdf_radial(shifted) - self.log_pdf_radial(norm(u));
        if r >= 0.0 {
            1.0
        } else {
            r.exp()
        }
    }

    /// CDF of the radius `|u|` under `phi`.
    pub fn radial_cdf(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        let d = self.dim as f64;
        match self.kind {
            DensityKind::StandardGaussian => gamma_lr(0.5 * d, 0.5 * r * r),
            DensityKind::HeavyTail { beta1 } => beta_reg(d, beta1, r / (1.0 + r)),
            DensityKind::StretchedExp { beta2 } => gamma_lr(d / beta2, r.powf(beta2)),
        }
    }

    /// `P(|u| > r)`, accurate far into the tail.
    pub fn radial_sf(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 1.0;
        }
        if r == f64::INFINITY {
            return 0.0;
        }
        let d = self.dim as f64;
        match self.kind {
            DensityKind::StandardGaussian => gamma_ur(0.5 * d, 0.5 * r * r),
            DensityKind::HeavyTail { beta1 } => beta_reg(beta1, d, 1.0 / (1.0 + r)),
            DensityKind::StretchedExp { beta2 } => gamma_ur(d / beta2, r.powf(beta2)),
        }
    }

    /// Draws the radius `|u|`.
    pub fn sample_radius<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let d = self.dim as f64;
        match self.kind {
            DensityKind::StandardGaussian => {
                let s: f64 = (0..self.dim)
                    .map(|_| {
                        let g: f64 = rng.sample(StandardNormal);
                        g * g
                    })
                    .sum();
                s.sqrt()
            }
            DensityKind::HeavyTail { beta1 } => {
                // Inverse CDF through s = 1/(1+r) ~ Beta(beta1, d); working with
                // s keeps precision deep in the tail.
                let p: f64 = rng.random();
                let s = if self.dim == 1 {
                    (1.0 - p).powf(1.0 / beta1)
                } else {
                    inv_beta_reg(beta1, d, p)
                };
                if s <= 0.0 {
                    f64::MAX
                } else {
                    (1.0 - s) / s
                }
            }
            DensityKind::StretchedExp { beta2 } => {
                let g = self
                    .radius_gamma
                    .as_ref()
                    .expect("gamma sampler exists for stretched-exp")
                    .sample(rng);
                g.powf(1.0 / beta2)
            }
        }
    }

    /// Draws `u ~ phi` into `out`.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim);
        match self.kind {
            DensityKind::StandardGaussian => {
                out.iter_mut().for_each(|o| *o = rng.sample(StandardNormal));
            }
            _ => {
                let radius = self.sample_radius(rng);
                sample_direction(rng, out);
                out.iter_mut().for_each(|o| *o *= radius);
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.sample_into(rng, &mut out);
        out
    }
}

/// Uniform point on the unit sphere.
pub fn sample_direction<R: Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    loop {
        out.iter_mut().for_each(|o| *o = rng.sample(StandardNormal));
        let n = norm(out);
        if n > 1e-300 {
            out.iter_mut().for_each(|o| *o /= n);
            return;
        }
    }
}
